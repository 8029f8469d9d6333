//! Plane (ordered rooted) trees and the closed-walk graphs of the trace
//! expansion.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Largest `k` accepted by [`enumerate_trees`] unless a cap is given.
pub const DEFAULT_TREE_CAP: u32 = 14;

/// Sentinel parent of the root.
pub const ROOT: usize = usize::MAX;

/// `C_k = binom(2k, k) / (k + 1)`, exact; errors once the value leaves `u128`.
pub fn catalan(k: u32) -> Result<u128> {
    let mut c: u128 = 1;
    for j in 0..k as u128 {
        // C_{j+1} = C_j * 2(2j+1) / (j+2), exact at every step
        c = c
            .checked_mul(2 * (2 * j + 1))
            .ok_or(Error::CatalanOverflow(k))?
            / (j + 2);
    }
    Ok(c)
}

/// Plane tree with `k` edges; vertices `0..=k` in DFS preorder.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct OrderedTree {
    parent: Vec<usize>,
}

impl OrderedTree {
    /// Tree of a Dyck word: `true` steps down to a new child, `false` back up.
    pub fn from_dyck(word: &[bool]) -> Result<Self> {
        if !word.len().is_multiple_of(2) {
            return Err(Error::InvalidTree("Dyck word has odd length".into()));
        }
        let mut parent = vec![ROOT];
        let mut stack = vec![0usize];
        for &up in word {
            if up {
                let v = parent.len();
                parent.push(*stack.last().unwrap());
                stack.push(v);
            } else {
                if stack.len() == 1 {
                    return Err(Error::InvalidTree("Dyck word goes below zero".into()));
                }
                stack.pop();
            }
        }
        if stack.len() != 1 {
            return Err(Error::InvalidTree("Dyck word does not return to zero".into()));
        }
        Ok(OrderedTree { parent })
    }

    pub fn from_dyck_str(s: &str) -> Result<Self> {
        let word: Result<Vec<bool>> = s
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::InvalidTree(format!("unexpected character {other:?}"))),
            })
            .collect();
        Self::from_dyck(&word?)
    }

    /// Accepts a DFS-preorder parent array with `parent[0] == ROOT`.
    pub fn from_parents(parent: Vec<usize>) -> Result<Self> {
        if parent.first() != Some(&ROOT) {
            return Err(Error::InvalidTree("parent[0] must be the root sentinel".into()));
        }
        // the parent of v must lie on the root path of v - 1
        let mut path = vec![0usize];
        for v in 1..parent.len() {
            let p = parent[v];
            if p >= v {
                return Err(Error::InvalidTree(format!("parent[{v}] = {p} is not < {v}")));
            }
            while path.last() != Some(&p) {
                if path.pop().is_none() {
                    break;
                }
            }
            if path.is_empty() {
                return Err(Error::InvalidTree(format!(
                    "vertex {v} breaks DFS preorder"
                )));
            }
            path.push(v);
        }
        Ok(OrderedTree { parent })
    }

    pub fn single_vertex() -> Self {
        OrderedTree { parent: vec![ROOT] }
    }

    pub fn edges(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn vertices(&self) -> usize {
        self.parent.len()
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    /// Edges `(parent, child)` in DFS first-appearance order.
    pub fn edges_dfs(&self) -> Vec<(usize, usize)> {
        (1..self.parent.len()).map(|v| (self.parent[v], v)).collect()
    }

    pub fn dyck(&self) -> Vec<bool> {
        let mut word = Vec::with_capacity(2 * self.edges());
        let mut path = vec![0usize];
        for v in 1..self.parent.len() {
            while *path.last().unwrap() != self.parent[v] {
                path.pop();
                word.push(false);
            }
            word.push(true);
            path.push(v);
        }
        word.extend(std::iter::repeat_n(false, path.len() - 1));
        word
    }

    pub fn dyck_string(&self) -> String {
        self.dyck().iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (v + 1..self.parent.len())
            .filter(|&c| self.parent[c] == v)
            .collect()
    }
}

impl fmt::Debug for OrderedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OrderedTree({})", self.dyck_string())
    }
}

/// Streaming enumeration of the `C_k` plane trees with `k` edges in
/// lexicographic Dyck order (`0 < 1`), starting from `(10)^k`.
#[derive(Clone, Debug)]
pub struct PlaneTrees {
    word: Vec<bool>,
    k: usize,
    done: bool,
}

impl PlaneTrees {
    fn new(k: usize) -> Self {
        let word = (0..2 * k).map(|t| t % 2 == 0).collect();
        PlaneTrees { word, k, done: false }
    }

    fn advance(&mut self) -> bool {
        let n = self.word.len();
        // ones before each position
        let mut ones_before = Vec::with_capacity(n);
        let mut ones = 0;
        for &b in &self.word {
            ones_before.push(ones);
            ones += usize::from(b);
        }
        let Some(p) = (1..n)
            .rev()
            .find(|&p| !self.word[p] && ones_before[p] < self.k)
        else {
            return false;
        };
        // height after flipping position p to an up-step
        let ones = ones_before[p] + 1;
        let height = ones - (p - ones_before[p]);
        self.word[p] = true;
        // smallest completion: straight down, then (10)^rest
        let mut t = p + 1;
        for _ in 0..height {
            self.word[t] = false;
            t += 1;
        }
        while t < n {
            self.word[t] = true;
            self.word[t + 1] = false;
            t += 2;
        }
        true
    }
}

impl Iterator for PlaneTrees {
    type Item = OrderedTree;

    fn next(&mut self) -> Option<OrderedTree> {
        if self.done {
            return None;
        }
        let tree = OrderedTree::from_dyck(&self.word).expect("successor keeps Dyck words valid");
        if !self.advance() {
            self.done = true;
        }
        Some(tree)
    }
}

/// All plane trees with `k` edges, `k <= DEFAULT_TREE_CAP`.
pub fn enumerate_trees(k: u32) -> Result<PlaneTrees> {
    enumerate_trees_capped(k, DEFAULT_TREE_CAP)
}

pub fn enumerate_trees_capped(k: u32, cap: u32) -> Result<PlaneTrees> {
    if k > cap {
        return Err(Error::TreeCapExceeded { k, cap });
    }
    Ok(PlaneTrees::new(k as usize))
}

/// Multigraph `G(i)` of a closed walk `i_1 -> i_2 -> ... -> i_{2k} -> i_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleGraph {
    /// Distinct labels in order of first appearance.
    pub vertices: Vec<usize>,
    /// Undirected edges `{u, v}` (`u <= v`) in order of first appearance;
    /// loops appear as `(u, u)`.
    pub edges: Vec<(usize, usize)>,
    /// Traversal count of each edge, aligned with `edges`.
    pub multiplicities: Vec<usize>,
    walk: Vec<usize>,
}

impl CycleGraph {
    pub fn walk_len(&self) -> usize {
        self.walk.len()
    }

    pub fn has_loop(&self) -> bool {
        self.edges.iter().any(|(u, v)| u == v)
    }

    /// A tree on `k + 1` vertices with every edge traversed exactly twice.
    pub fn is_good(&self) -> bool {
        let k = self.walk.len() / 2;
        !self.has_loop() && self.vertices.len() == k + 1 && self.edges.len() == k
    }

    /// Plane tree of a good cycle: rooted at `i_1`, children in first
    /// appearance order.
    pub fn induced_tree(&self) -> Option<OrderedTree> {
        if !self.is_good() {
            return None;
        }
        let mut seen = vec![self.walk[0]];
        let mut word = Vec::with_capacity(self.walk.len());
        let n = self.walk.len();
        for t in 0..n {
            let next = self.walk[(t + 1) % n];
            let fresh = !seen.contains(&next);
            if fresh {
                seen.push(next);
            }
            word.push(fresh);
        }
        OrderedTree::from_dyck(&word).ok()
    }
}

pub fn cycle_to_graph(walk: &[usize]) -> Result<CycleGraph> {
    if walk.len() < 2 || !walk.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "cycle length must be even and >= 2, got {}",
            walk.len()
        )));
    }
    let n = walk.len();
    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    let mut multiplicities: Vec<usize> = Vec::new();
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    for t in 0..n {
        let (a, b) = (walk[t], walk[(t + 1) % n]);
        if !vertices.contains(&a) {
            vertices.push(a);
        }
        let e = (a.min(b), a.max(b));
        match index.get(&e) {
            Some(&q) => multiplicities[q] += 1,
            None => {
                index.insert(e, edges.len());
                edges.push(e);
                multiplicities.push(1);
            }
        }
    }
    Ok(CycleGraph {
        vertices,
        edges,
        multiplicities,
        walk: walk.to_vec(),
    })
}

/// Calls `f` on every tuple in `[n]^len` (0-based labels), odometer order.
pub fn for_each_tuple(n: usize, len: usize, mut f: impl FnMut(&[usize])) {
    if n == 0 && len > 0 {
        return;
    }
    let mut t = vec![0usize; len];
    loop {
        f(&t);
        let mut pos = len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            t[pos] += 1;
            if t[pos] < n {
                break;
            }
            t[pos] = 0;
        }
    }
}
