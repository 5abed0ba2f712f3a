//! Time and node placebos: the policy-cost series is scrambled and the
//! counterfactual impacts recomputed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceboKind {
    /// Each node's hourly costs are shuffled over time independently.
    Time,
    /// Whole cost series are reassigned across nodes.
    Node,
}

impl PlaceboKind {
    pub fn describe(self) -> &'static str {
        match self {
            PlaceboKind::Time => "shuffle cost over time",
            PlaceboKind::Node => "permute cost over nodes",
        }
    }
}

/// How a placebo reaches the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceboMode {
    /// Scramble the observed costs the model is trained on, retrain with the
    /// same configuration and seed, then evaluate scrambled scenario costs.
    #[default]
    Retrain,
    /// Keep the trained model; only the scenario costs are scrambled.
    Evaluate,
}

/// A seeded scrambling of a cost panel indexed `[hour * nodes + node]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scramble {
    /// `orders[i][t]` is the source hour of node `i` at hour `t`.
    Time { orders: Vec<Vec<usize>> },
    /// Node `i` receives the series of node `perm[i]`.
    Node { perm: Vec<usize> },
}

impl Scramble {
    /// Independent per-node hour permutations. Each node draws from its own
    /// ChaCha8 stream so the result does not depend on node count.
    pub fn time(nodes: usize, hours: usize, seed: u64) -> Self {
        let orders = (0..nodes)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                let mut order: Vec<usize> = (0..hours).collect();
                order.shuffle(&mut rng);
                order
            })
            .collect();
        Scramble::Time { orders }
    }

    /// Seeded derangement (no node keeps its own series) when `nodes >= 2`.
    pub fn node(nodes: usize, seed: u64) -> Self {
        Scramble::Node {
            perm: derangement(nodes, seed),
        }
    }

    /// Explicit node permutation; `perm` must be a permutation of `0..n`.
    pub fn node_with(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Contract(format!("{perm:?} is not a permutation")));
            }
        }
        Ok(Scramble::Node { perm })
    }

    pub fn kind(&self) -> PlaceboKind {
        match self {
            Scramble::Time { .. } => PlaceboKind::Time,
            Scramble::Node { .. } => PlaceboKind::Node,
        }
    }

    pub fn apply(&self, costs: &[f64], nodes: usize) -> Result<Vec<f64>> {
        if nodes == 0 || !costs.len().is_multiple_of(nodes) {
            return Err(Error::Contract(format!(
                "cost series of {} values does not split into {nodes} nodes",
                costs.len()
            )));
        }
        let hours = costs.len() / nodes;
        let mut out = vec![0.0; costs.len()];
        match self {
            Scramble::Time { orders } => {
                if orders.len() != nodes || orders.iter().any(|o| o.len() != hours) {
                    return Err(Error::Contract("time permutation does not match the cost panel".into()));
                }
                for (i, order) in orders.iter().enumerate() {
                    for (t, &src) in order.iter().enumerate() {
                        out[t * nodes + i] = costs[src * nodes + i];
                    }
                }
            }
            Scramble::Node { perm } => {
                if perm.len() != nodes {
                    return Err(Error::Contract("node permutation does not match the cost panel".into()));
                }
                for t in 0..hours {
                    for (i, &src) in perm.iter().enumerate() {
                        out[t * nodes + i] = costs[t * nodes + src];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Sattolo's algorithm: a uniformly random cyclic permutation, hence a
/// derangement for `n >= 2`.
pub fn derangement(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..i);
        p.swap(i, j);
    }
    p
}
