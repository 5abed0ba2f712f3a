use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Architecture, loss weights and optimization schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Attention layers; the last one branches per task.
    pub layers: usize,
    /// Embedding width `d`.
    pub hidden: usize,
    /// Head hidden width `h`.
    pub head_hidden: usize,
    /// Hours of lagged price and CI in the node features.
    pub window: usize,
    pub lambda_ci: f64,
    pub lambda_price: f64,
    pub lambda_corr: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    /// Hours per mini-batch.
    pub batch_hours: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 64,
            head_hidden: 32,
            window: 24,
            lambda_ci: 1.0,
            lambda_price: 1.0,
            lambda_corr: 0.1,
            learning_rate: 1e-3,
            epochs: 500,
            patience: 20,
            batch_hours: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("head_hidden", self.head_hidden),
            ("window", self.window),
            ("batch_hours", self.batch_hours),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        for (name, v) in [
            ("lambda_ci", self.lambda_ci),
            ("lambda_price", self.lambda_price),
            ("lambda_corr", self.lambda_corr),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Attention parameters of one layer: projection `w` (`d_prev x d`) and
/// score vector `a` (`2d x 1`, source half first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w: Tensor,
    pub a: Tensor,
}

/// Two affine maps with ELU between: `d -> h -> 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Layers `1..L-1`, shared by both tasks.
    pub shared: Vec<AttentionParams>,
    pub ci_attention: AttentionParams,
    pub price_attention: AttentionParams,
    pub ci_head: HeadParams,
    pub price_head: HeadParams,
}

/// Block-name prefixes of the price branch (attention and head).
pub const PRICE_BRANCH: [&str; 2] = ["price.attention", "price.head"];

impl ModelParams {
    /// Every parameter block with a stable name, in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, p) in self.shared.iter().enumerate() {
            out.push((format!("shared.{l}.w"), &p.w));
            out.push((format!("shared.{l}.a"), &p.a));
        }
        for (task, att, head) in [
            ("ci", &self.ci_attention, &self.ci_head),
            ("price", &self.price_attention, &self.price_head),
        ] {
            out.push((format!("{task}.attention.w"), &att.w));
            out.push((format!("{task}.attention.a"), &att.a));
            out.push((format!("{task}.head.w1"), &head.w1));
            out.push((format!("{task}.head.b1"), &head.b1));
            out.push((format!("{task}.head.w2"), &head.w2));
            out.push((format!("{task}.head.b2"), &head.b2));
        }
        out
    }

    /// Mutable blocks in the same order as [`Self::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for p in &mut self.shared {
            out.push(&mut p.w);
            out.push(&mut p.a);
        }
        for (att, head) in [
            (&mut self.ci_attention, &mut self.ci_head),
            (&mut self.price_attention, &mut self.price_head),
        ] {
            out.push(&mut att.w);
            out.push(&mut att.a);
            out.push(&mut head.w1);
            out.push(&mut head.b1);
            out.push(&mut head.w2);
            out.push(&mut head.b2);
        }
        out
    }

    pub fn input_dim(&self) -> usize {
        self.shared.first().unwrap_or(&self.ci_attention).w.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, t)| t.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks block shapes against `config` and `input_dim`.
    pub fn check_shapes(&self, config: &ModelConfig, input_dim: usize) -> Result<()> {
        let expected = shapes(config, input_dim);
        let actual = self.blocks();
        if expected.len() != actual.len() {
            return Err(Error::Config(format!(
                "expected {} parameter blocks for {} layers, found {}",
                expected.len(),
                config.layers,
                actual.len()
            )));
        }
        for ((name, shape, _), (_, t)) in expected.iter().zip(&actual) {
            if t.shape() != *shape {
                return Err(Error::Config(format!(
                    "parameter block {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Kind of block, deciding the initialization.
#[derive(Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Weight,
    Bias,
}

fn shapes(config: &ModelConfig, input_dim: usize) -> Vec<(String, (usize, usize), BlockKind)> {
    let (d, h) = (config.hidden, config.head_hidden);
    let mut out = Vec::new();
    let mut prev = input_dim;
    for l in 0..config.layers.saturating_sub(1) {
        out.push((format!("shared.{l}.w"), (prev, d), BlockKind::Weight));
        out.push((format!("shared.{l}.a"), (2 * d, 1), BlockKind::Weight));
        prev = d;
    }
    for task in ["ci", "price"] {
        out.push((format!("{task}.attention.w"), (prev, d), BlockKind::Weight));
        out.push((format!("{task}.attention.a"), (2 * d, 1), BlockKind::Weight));
        out.push((format!("{task}.head.w1"), (d, h), BlockKind::Weight));
        out.push((format!("{task}.head.b1"), (1, h), BlockKind::Bias));
        out.push((format!("{task}.head.w2"), (h, 1), BlockKind::Weight));
        out.push((format!("{task}.head.b2"), (1, 1), BlockKind::Bias));
    }
    out
}

/// Half-width of the uniform initialization range for a `fan_in x fan_out` block.
pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero, drawn
/// from a stream seeded by `config.seed`.
pub fn init_params(config: &ModelConfig, input_dim: usize) -> Result<ModelParams> {
    config.validate()?;
    if input_dim == 0 {
        return Err(Error::Config("input dimension must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tensors = shapes(config, input_dim).into_iter().map(|(_, (r, c), kind)| match kind {
        BlockKind::Bias => Tensor::zeros(r, c),
        BlockKind::Weight => {
            let b = init_bound(r, c);
            Tensor::from_fn(r, c, |_, _| rng.random_range(-b..=b))
        }
    });
    let mut next = || tensors.next().expect("block count fixed by shapes()");
    let shared = (0..config.layers - 1)
        .map(|_| AttentionParams { w: next(), a: next() })
        .collect();
    let mut branch = || {
        let att = AttentionParams { w: next(), a: next() };
        let head = HeadParams {
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
        };
        (att, head)
    };
    let (ci_attention, ci_head) = branch();
    let (price_attention, price_head) = branch();
    Ok(ModelParams {
        shared,
        ci_attention,
        price_attention,
        ci_head,
        price_head,
    })
}
