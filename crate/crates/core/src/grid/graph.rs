use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Countries as nodes, interconnectors as undirected edges.
///
/// The adjacency matrix carries self-loops on the diagonal so every node is
/// part of its own attention neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGraph {
    nodes: Vec<String>,
    edges: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

impl GridGraph {
    pub fn new<S: AsRef<str>>(nodes: Vec<String>, edges: &[(S, S)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, code) in nodes.iter().enumerate() {
            if code.is_empty() {
                return Err(Error::Schema("empty node code".into()));
            }
            if index.insert(code.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate node `{code}`")));
            }
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *index
                .get(a)
                .ok_or_else(|| Error::Schema(format!("edge endpoint `{a}` is not a declared node")))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| Error::Schema(format!("edge endpoint `{b}` is not a declared node")))?;
            if ia == ib {
                return Err(Error::Schema(format!("self-loop edge on `{a}`")));
            }
            set.insert((ia.min(ib), ia.max(ib)));
        }
        Ok(Self {
            nodes,
            edges: set.into_iter().collect(),
            index,
        })
    }

    pub fn from_indices(nodes: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let named: Vec<(String, String)> = edges
            .iter()
            .map(|&(a, b)| {
                let get = |i: usize| {
                    nodes
                        .get(i)
                        .cloned()
                        .ok_or_else(|| Error::Schema(format!("edge endpoint index {i} out of range")))
                };
                Ok((get(a)?, get(b)?))
            })
            .collect::<Result<_>>()?;
        Self::new(nodes, &named)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    /// Binary adjacency with ones on the diagonal.
    pub fn adjacency(&self) -> Tensor {
        let n = self.len();
        let mut a = Tensor::identity(n);
        for &(i, j) in &self.edges {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        a
    }

    /// Neighbors of `i`, excluding `i` itself, in ascending index order.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn max_degree(&self) -> usize {
        (0..self.len()).map(|i| self.neighbors(i).len()).max().unwrap_or(0)
    }

    /// Breadth-first hop counts from `source`; `None` for unreachable nodes.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have a distance");
            for v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Row-normalized binary adjacency without self-loops. Isolated nodes get
    /// an all-zero row.
    pub fn row_normalized_weights(&self) -> Tensor {
        let n = self.len();
        let mut w = Tensor::zeros(n, n);
        for i in 0..n {
            let nb = self.neighbors(i);
            if nb.is_empty() {
                continue;
            }
            let share = 1.0 / nb.len() as f64;
            for j in nb {
                w.set(i, j, share);
            }
        }
        w
    }

    /// Relabels nodes so that new node `k` is old node `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut inverse = vec![usize::MAX; self.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let nodes = order.iter().map(|&o| self.nodes[o].clone()).collect();
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(a, b)| (inverse[a], inverse[b]))
            .collect();
        Self::from_indices(nodes, &edges)
    }
}
