use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::params::{AttentionParams, HeadParams, ModelParams};

/// Negative slope of the LeakyReLU inside attention scores.
pub const SCORE_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Shared,
    Ci,
    Price,
}

/// Tape handles for every parameter block, in [`ModelParams::blocks`] order.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub vars: Vec<Var>,
}

impl ParamVars {
    /// Registers the blocks as trainable parameters (`trainable`) or constants.
    pub fn register(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Self {
        let vars = params
            .blocks()
            .into_iter()
            .map(|(_, t)| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        Self { vars }
    }
}

#[derive(Clone, Copy)]
struct AttentionVars {
    w: Var,
    a: Var,
}

#[derive(Clone, Copy)]
struct HeadVars {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

/// Handles of one forward pass recorded on a tape.
#[derive(Debug, Clone)]
pub struct TapeForward {
    /// Outputs of the shared layers, in order.
    pub shared_embeddings: Vec<Var>,
    pub shared_attention: Vec<Var>,
    pub attention_ci: Var,
    pub attention_price: Var,
    pub z_ci: Var,
    pub z_price: Var,
    /// `(B*n) x 1` predictions in normalized target space.
    pub pred_ci: Var,
    pub pred_price: Var,
}

/// One attention layer over a stack of `B` graphs of `n = adjacency.rows()` nodes:
/// `h' = ELU(alpha · (h W))` with `alpha` the masked softmax of
/// `LeakyReLU(a_src·(W h_i) + a_dst·(W h_j))`.
pub fn attention_layer_on_tape(
    tape: &mut Tape,
    h: Var,
    adjacency: &Tensor,
    w: Var,
    a: Var,
) -> Result<(Var, Var)> {
    let n = adjacency.rows();
    let d = tape.value(w).cols();
    if tape.value(a).shape() != (2 * d, 1) {
        return Err(Error::Shape {
            op: "attention_layer",
            left: tape.value(w).shape(),
            right: tape.value(a).shape(),
        });
    }
    if n == 0 || !tape.value(h).rows().is_multiple_of(n) {
        return Err(Error::Shape {
            op: "attention_layer",
            left: tape.value(h).shape(),
            right: adjacency.shape(),
        });
    }
    let wh = tape.matmul(h, w)?;
    let a_src = tape.slice_rows(a, 0, d)?;
    let a_dst = tape.slice_rows(a, d, d)?;
    let u = tape.matmul(wh, a_src)?;
    let v = tape.matmul(wh, a_dst)?;
    let e = tape.block_pairwise_sum(u, v, n)?;
    let e = tape.leaky_relu(e, SCORE_SLOPE);
    let alpha = tape.neighborhood_softmax(e, adjacency)?;
    let agg = tape.block_matmul(alpha, wh, n)?;
    Ok((tape.elu(agg), alpha))
}

fn head_on_tape(tape: &mut Tape, z: Var, p: HeadVars) -> Result<Var> {
    let hidden = tape.matmul(z, p.w1)?;
    let hidden = tape.add_row(hidden, p.b1)?;
    let hidden = tape.elu(hidden);
    let out = tape.matmul(hidden, p.w2)?;
    tape.add_row(out, p.b2)
}

/// Records the full forward pass. `features` is `(B*n) x d_in`, hour-major.
pub fn forward_on_tape(
    tape: &mut Tape,
    params: &ParamVars,
    shared_layers: usize,
    features: Var,
    adjacency: &Tensor,
) -> Result<TapeForward> {
    if params.vars.len() != 2 * shared_layers + 12 {
        return Err(Error::Contract(format!(
            "{} parameter handles for {shared_layers} shared layers",
            params.vars.len()
        )));
    }
    let in_dim = tape.value(params.vars[0]).rows();
    if tape.value(features).cols() != in_dim {
        return Err(Error::Shape {
            op: "forward",
            left: tape.value(features).shape(),
            right: tape.value(params.vars[0]).shape(),
        });
    }
    if adjacency.rows() != adjacency.cols() {
        return Err(Error::Shape {
            op: "forward",
            left: adjacency.shape(),
            right: adjacency.shape(),
        });
    }
    let v = &params.vars;
    let mut h = features;
    let mut shared_embeddings = Vec::with_capacity(shared_layers);
    let mut shared_attention = Vec::with_capacity(shared_layers);
    for l in 0..shared_layers {
        let p = AttentionVars { w: v[2 * l], a: v[2 * l + 1] };
        let (next, alpha) = attention_layer_on_tape(tape, h, adjacency, p.w, p.a)?;
        shared_embeddings.push(next);
        shared_attention.push(alpha);
        h = next;
    }
    let base = 2 * shared_layers;
    let branch = |k: usize| -> (AttentionVars, HeadVars) {
        let o = base + 6 * k;
        (
            AttentionVars { w: v[o], a: v[o + 1] },
            HeadVars {
                w1: v[o + 2],
                b1: v[o + 3],
                w2: v[o + 4],
                b2: v[o + 5],
            },
        )
    };
    let (ci_att, ci_head) = branch(0);
    let (price_att, price_head) = branch(1);
    let (z_ci, attention_ci) = attention_layer_on_tape(tape, h, adjacency, ci_att.w, ci_att.a)?;
    let (z_price, attention_price) = attention_layer_on_tape(tape, h, adjacency, price_att.w, price_att.a)?;
    let pred_ci = head_on_tape(tape, z_ci, ci_head)?;
    let pred_price = head_on_tape(tape, z_price, price_head)?;
    Ok(TapeForward {
        shared_embeddings,
        shared_attention,
        attention_ci,
        attention_price,
        z_ci,
        z_price,
        pred_ci,
        pred_price,
    })
}

/// Values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardActivations {
    pub shared_embeddings: Vec<Tensor>,
    pub shared_attention: Vec<Tensor>,
    /// `(B*n) x n`, row `r` holds the weights node `r % n` puts on each node.
    pub attention_ci: Tensor,
    pub attention_price: Tensor,
    pub z_ci: Tensor,
    pub z_price: Tensor,
    /// One entry per row of the feature matrix, normalized target space.
    pub pred_ci: Vec<f64>,
    pub pred_price: Vec<f64>,
}

/// Evaluates the model on `features` (`(B*n) x d_in`) without recording gradients.
pub fn forward(params: &ModelParams, features: &Tensor, adjacency: &Tensor) -> Result<ForwardActivations> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, false);
    let x = tape.constant(features.clone());
    let f = forward_on_tape(&mut tape, &vars, params.shared.len(), x, adjacency)?;
    let val = |v: Var| tape.value(v).clone();
    Ok(ForwardActivations {
        shared_embeddings: f.shared_embeddings.iter().map(|&v| val(v)).collect(),
        shared_attention: f.shared_attention.iter().map(|&v| val(v)).collect(),
        attention_ci: val(f.attention_ci),
        attention_price: val(f.attention_price),
        z_ci: val(f.z_ci),
        z_price: val(f.z_price),
        pred_ci: tape.value(f.pred_ci).data().to_vec(),
        pred_price: tape.value(f.pred_price).data().to_vec(),
    })
}

impl ModelParams {
    /// Attention block for `task`; `layer` indexes the shared stack and is
    /// ignored for the task-specific final layer.
    pub fn attention(&self, task: Task, layer: usize) -> Result<&AttentionParams> {
        match task {
            Task::Shared => self.shared.get(layer).ok_or_else(|| {
                Error::Config(format!("no shared layer {layer}; model has {}", self.shared.len()))
            }),
            Task::Ci => Ok(&self.ci_attention),
            Task::Price => Ok(&self.price_attention),
        }
    }
}

/// One attention layer evaluated outside of training; returns the new
/// embeddings and the attention matrix.
pub fn attention_layer(
    task: Task,
    layer: usize,
    params: &ModelParams,
    embeddings: &Tensor,
    adjacency: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let p = params.attention(task, layer)?;
    if embeddings.cols() != p.w.rows() {
        return Err(Error::Shape {
            op: "attention_layer",
            left: embeddings.shape(),
            right: p.w.shape(),
        });
    }
    let mut tape = Tape::new();
    let h = tape.constant(embeddings.clone());
    let w = tape.constant(p.w.clone());
    let a = tape.constant(p.a.clone());
    let (out, alpha) = attention_layer_on_tape(&mut tape, h, adjacency, w, a)?;
    Ok((tape.value(out).clone(), tape.value(alpha).clone()))
}

/// Head output for a `rows x d` latent matrix.
pub fn head(params: &HeadParams, z: &Tensor) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let p = HeadVars {
        w1: tape.constant(params.w1.clone()),
        b1: tape.constant(params.b1.clone()),
        w2: tape.constant(params.w2.clone()),
        b2: tape.constant(params.b2.clone()),
    };
    let out = head_on_tape(&mut tape, zv, p)?;
    Ok(tape.value(out).data().to_vec())
}
