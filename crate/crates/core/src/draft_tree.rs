//! Dynamic draft trees.
//!
//! The tree grows one level at a time: every frontier node is expanded with
//! the draft's top-k proposals, then all nodes built so far are ranked by
//! cumulative log-score and only the best `max_nodes` survive. Ranking is a
//! total order: higher score, then shallower, then lower token bin, then the
//! lexicographically smaller root path. A node survives only if its parent does.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::action_space::{ActionToken, Vocab};
use crate::error::{ModelError, TreeError};
use crate::models::{check_top_k, DraftModel, FeatureContext, PrefixState};
use crate::par::Parallelism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub top_k: usize,
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { top_k: 8, max_depth: 4, max_nodes: 50 }
    }
}

impl TreeParams {
    pub fn new(top_k: usize, max_depth: usize, max_nodes: usize) -> Self {
        Self { top_k, max_depth, max_nodes }
    }

    pub fn validate(&self, vocab: Vocab) -> Result<(), TreeError> {
        if self.top_k == 0 || self.top_k > vocab.size() as usize {
            return Err(TreeError::InvalidParams(format!(
                "top_k must be in 1..={}, got {}",
                vocab.size(),
                self.top_k
            )));
        }
        if self.max_depth == 0 {
            return Err(TreeError::InvalidParams("max_depth must be at least 1".into()));
        }
        if self.max_nodes == 0 {
            return Err(TreeError::InvalidParams("max_nodes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DraftNode {
    pub token: ActionToken,
    /// `None` for children of the (implicit) root.
    pub parent: Option<usize>,
    pub depth: u32,
    /// Sum of draft log-scores along the root path.
    pub cum_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftTree {
    nodes: Vec<DraftNode>,
    params: TreeParams,
}

impl DraftTree {
    /// Wrap nodes without checking them; see [`DraftTree::validate`].
    pub fn from_nodes(nodes: Vec<DraftNode>, params: TreeParams) -> Self {
        Self { nodes, params }
    }

    pub fn nodes(&self) -> &[DraftNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> TreeParams {
        self.params
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                if p >= n {
                    return Err(TreeError::DanglingParent { node: i, parent: p });
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                if p >= i {
                    return Err(if self.on_cycle(i) {
                        TreeError::Cycle { node: i }
                    } else {
                        TreeError::OutOfOrder { node: i, parent: p }
                    });
                }
            }
            let expected = node.parent.map_or(1, |p| self.nodes[p].depth + 1);
            if node.depth != expected {
                return Err(TreeError::DepthMismatch { node: i, depth: node.depth, expected });
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for (i, node) in self.nodes.iter().enumerate() {
            if !seen.insert((node.parent, node.token)) {
                return Err(TreeError::DuplicateSibling { node: i });
            }
        }
        Ok(())
    }

    fn on_cycle(&self, start: usize) -> bool {
        let mut cur = start;
        for _ in 0..=self.nodes.len() {
            match self.nodes[cur].parent {
                None => return false,
                Some(p) if p == start => return true,
                Some(p) => cur = p,
            }
        }
        true
    }

    /// Node indices from the top of the tree down to `node`, inclusive.
    /// The tree must be valid.
    pub fn path_nodes(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn path_tokens(&self, node: usize) -> Vec<ActionToken> {
        self.path_nodes(node).into_iter().map(|i| self.nodes[i].token).collect()
    }

    /// Root path tokens of every node, after validating the tree.
    pub fn node_paths(&self) -> Result<Vec<Vec<ActionToken>>, TreeError> {
        self.validate()?;
        let mut paths: Vec<Vec<ActionToken>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let mut p = node.parent.map(|i| paths[i].clone()).unwrap_or_default();
            p.push(node.token);
            paths.push(p);
        }
        Ok(paths)
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        !self.nodes.iter().any(|n| n.parent == Some(node))
    }
}

/// Node under construction; carries its root path for ranking.
#[derive(Debug, Clone)]
struct Candidate {
    token: ActionToken,
    parent: Option<usize>,
    depth: u32,
    cum_score: f64,
    path: Vec<ActionToken>,
}

/// Ranking order shared by every level of the build.
fn rank_order(a_score: f64, a_depth: u32, a_path: &[ActionToken], b_score: f64, b_depth: u32, b_path: &[ActionToken]) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then(a_depth.cmp(&b_depth))
        .then(a_path.last().cmp(&b_path.last()))
        .then_with(|| a_path.cmp(b_path))
}

fn compare(a: &Candidate, b: &Candidate) -> Ordering {
    rank_order(a.cum_score, a.depth, &a.path, b.cum_score, b.depth, &b.path)
}

/// Grow a draft tree for the next tokens after `state`.
pub fn build_tree<D: DraftModel + ?Sized>(
    state: &PrefixState,
    ctx: &FeatureContext,
    draft: &D,
    params: TreeParams,
    par: Parallelism,
) -> Result<DraftTree, ModelError> {
    params.validate(draft.vocab())?;
    check_top_k(params.top_k, draft.vocab())?;
    ctx.check(state)?;

    let mut kept: Vec<Candidate> = Vec::new();
    // indices into `kept`; `None` is the root
    let mut frontier: Vec<Option<usize>> = vec![None];

    for depth in 1..=params.max_depth as u32 {
        if frontier.is_empty() {
            break;
        }
        let extras: Vec<Vec<ActionToken>> = frontier
            .iter()
            .map(|f| f.map(|i| kept[i].path.clone()).unwrap_or_default())
            .collect();
        let proposals = draft.propose_level(state, ctx, &extras, params.top_k, par)?;

        let mut pool = std::mem::take(&mut kept);
        for (slot, props) in frontier.iter().zip(proposals) {
            let (base_score, base_path) = match slot {
                Some(i) => (pool[*i].cum_score, pool[*i].path.clone()),
                None => (0.0, Vec::new()),
            };
            for p in props.into_iter().take(params.top_k) {
                let mut path = Vec::with_capacity(base_path.len() + 1);
                path.extend_from_slice(&base_path);
                path.push(p.token);
                pool.push(Candidate {
                    token: p.token,
                    parent: *slot,
                    depth,
                    cum_score: base_score + p.log_score,
                    path,
                });
            }
        }

        // every candidate has a distinct path, so the order is total
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_unstable_by(|&a, &b| compare(&pool[a], &pool[b]));

        let mut chosen = vec![false; pool.len()];
        let mut count = 0;
        for &i in &order {
            if count == params.max_nodes {
                break;
            }
            if pool[i].parent.map_or(true, |p| chosen[p]) {
                chosen[i] = true;
                count += 1;
            }
        }

        // parents first: by depth, then rank
        let mut survivors: Vec<usize> = order.into_iter().filter(|&i| chosen[i]).collect();
        survivors.sort_by_key(|&i| pool[i].depth);
        let mut remap = vec![usize::MAX; pool.len()];
        for (new, &old) in survivors.iter().enumerate() {
            remap[old] = new;
        }
        let mut pool: Vec<Option<Candidate>> = pool.into_iter().map(Some).collect();
        kept = survivors
            .iter()
            .map(|&old| {
                let mut c = pool[old].take().expect("each survivor is moved once");
                c.parent = c.parent.map(|p| remap[p]);
                c
            })
            .collect();
        frontier = kept
            .iter()
            .enumerate()
            .filter(|(_, c)| c.depth == depth)
            .map(|(i, _)| Some(i))
            .collect();
    }

    let nodes = kept
        .into_iter()
        .map(|c| DraftNode { token: c.token, parent: c.parent, depth: c.depth, cum_score: c.cum_score })
        .collect();
    Ok(DraftTree { nodes, params })
}

/// Square boolean matrix: `get(i, j)` is true iff node `j` is on node `i`'s
/// root path (including `i` itself).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AncestorMask {
    n: usize,
    bits: Vec<bool>,
}

impl AncestorMask {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.n..(i + 1) * self.n]
    }
}

/// Tree laid out for a single batched verifier pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatTree {
    pub tokens: Vec<ActionToken>,
    pub parents: Vec<Option<usize>>,
    pub mask: AncestorMask,
}

pub fn flatten(tree: &DraftTree) -> Result<FlatTree, TreeError> {
    tree.validate()?;
    let n = tree.len();
    let mut bits = vec![false; n * n];
    for (i, node) in tree.nodes().iter().enumerate() {
        if let Some(p) = node.parent {
            // parent row is complete already since p < i
            let (head, tail) = bits.split_at_mut(i * n);
            tail[..n].copy_from_slice(&head[p * n..(p + 1) * n]);
        }
        bits[i * n + i] = true;
    }
    Ok(FlatTree {
        tokens: tree.nodes().iter().map(|n| n.token).collect(),
        parents: tree.nodes().iter().map(|n| n.parent).collect(),
        mask: AncestorMask { n, bits },
    })
}

/// A root-to-leaf path through a draft tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreePath {
    pub leaf: usize,
    pub nodes: Vec<usize>,
    pub tokens: Vec<ActionToken>,
    pub cum_score: f64,
}

/// Every root-to-leaf path, best leaf score first (ties: lower leaf index).
pub fn enumerate_paths(tree: &DraftTree) -> Result<Vec<TreePath>, TreeError> {
    tree.validate()?;
    let mut has_child = vec![false; tree.len()];
    for node in tree.nodes() {
        if let Some(p) = node.parent {
            has_child[p] = true;
        }
    }
    let mut paths: Vec<TreePath> = (0..tree.len())
        .filter(|&i| !has_child[i])
        .map(|leaf| {
            let nodes = tree.path_nodes(leaf);
            let tokens = nodes.iter().map(|&i| tree.nodes()[i].token).collect();
            TreePath { leaf, nodes, tokens, cum_score: tree.nodes()[leaf].cum_score }
        })
        .collect();
    paths.sort_by(|a, b| b.cum_score.total_cmp(&a.cum_score));
    Ok(paths)
}
