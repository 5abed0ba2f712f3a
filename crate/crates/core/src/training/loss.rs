use serde::{Deserialize, Serialize};

use crate::autodiff::{pearson_value, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Loss weights `(lambda_ci, lambda_price, lambda_corr)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub ci: f64,
    pub price: f64,
    pub corr: f64,
}

/// Components of the composite loss, on normalized targets.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse_ci: f64,
    pub mse_price: f64,
    /// `|rho(y_ci, y_price) - rho(pred_ci, pred_price)|`, in `[0, 2]`.
    pub corr_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn recomputed_total(&self, w: LossWeights) -> f64 {
        w.ci * self.mse_ci + w.price * self.mse_price + w.corr * self.corr_term
    }
}

fn check_lengths(lens: [usize; 4]) -> Result<()> {
    if lens.iter().any(|&l| l != lens[0]) {
        return Err(Error::Contract(format!(
            "dual loss needs four equal-length vectors, got lengths {lens:?}"
        )));
    }
    if lens[0] == 0 {
        return Err(Error::Contract("dual loss needs at least one entry".into()));
    }
    Ok(())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Composite loss on plain vectors. With fewer than two entries the
/// correlation term is skipped (reported as 0).
pub fn dual_loss(
    pred_ci: &[f64],
    pred_price: &[f64],
    true_ci: &[f64],
    true_price: &[f64],
    w: LossWeights,
) -> Result<LossBreakdown> {
    check_lengths([pred_ci.len(), pred_price.len(), true_ci.len(), true_price.len()])?;
    let mse_ci = mse(pred_ci, true_ci);
    let mse_price = mse(pred_price, true_price);
    let corr_term = if pred_ci.len() < 2 {
        0.0
    } else {
        (pearson_value(true_ci, true_price) - pearson_value(pred_ci, pred_price)).abs()
    };
    let mut out = LossBreakdown {
        mse_ci,
        mse_price,
        corr_term,
        total: 0.0,
    };
    out.total = out.recomputed_total(w);
    Ok(out)
}

/// Tape handles of the composite loss.
#[derive(Debug, Clone, Copy)]
pub struct TapeLoss {
    pub total: Var,
    pub mse_ci: Var,
    pub mse_price: Var,
    pub corr_term: Option<Var>,
}

impl TapeLoss {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            mse_ci: tape.value(self.mse_ci).item(),
            mse_price: tape.value(self.mse_price).item(),
            corr_term: self.corr_term.map_or(0.0, |v| tape.value(v).item()),
            total: tape.value(self.total).item(),
        }
    }
}

/// Records the composite loss; predictions are tape variables, targets constants.
pub fn dual_loss_on_tape(
    tape: &mut Tape,
    pred_ci: Var,
    pred_price: Var,
    true_ci: &Tensor,
    true_price: &Tensor,
    w: LossWeights,
) -> Result<TapeLoss> {
    check_lengths([
        tape.value(pred_ci).len(),
        tape.value(pred_price).len(),
        true_ci.len(),
        true_price.len(),
    ])?;
    let mse_of = |tape: &mut Tape, pred: Var, target: &Tensor| -> Result<Var> {
        let t = tape.constant(target.clone());
        let diff = tape.sub(pred, t)?;
        let sq = tape.square(diff);
        Ok(tape.mean(sq))
    };
    let mse_ci = mse_of(tape, pred_ci, true_ci)?;
    let mse_price = mse_of(tape, pred_price, true_price)?;
    let a = tape.scale(mse_ci, w.ci);
    let b = tape.scale(mse_price, w.price);
    let mut total = tape.add(a, b)?;
    let mut corr_term = None;
    if true_ci.len() >= 2 {
        let target_rho = tape.constant(Tensor::scalar(pearson_value(true_ci.data(), true_price.data())));
        let rho = tape.pearson(pred_ci, pred_price)?;
        let diff = tape.sub(target_rho, rho)?;
        let c = tape.abs(diff);
        let weighted = tape.scale(c, w.corr);
        total = tape.add(total, weighted)?;
        corr_term = Some(c);
    }
    Ok(TapeLoss {
        total,
        mse_ci,
        mse_price,
        corr_term,
    })
}
