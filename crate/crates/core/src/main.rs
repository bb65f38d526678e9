use clap::Parser;

fn main() {
    let cli = actspec::cli::Cli::parse();
    std::process::exit(actspec::cli::run(&cli));
}
