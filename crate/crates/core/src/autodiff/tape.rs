use super::tensor::{matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Below this population variance `pearson` returns 0 with zero gradient.
pub const PEARSON_VARIANCE_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Var, Var),
    SliceRows(Var, usize),
    LeakyRelu(Var, f64),
    Elu(Var),
    Exp(Var),
    Abs(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    NeighborhoodSoftmax(Var, usize),
    BlockPairwiseSum(Var, Var, usize),
    BlockMatMul(Var, Var, usize),
    Pearson(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records primitive operations so gradients can be replayed in reverse.
///
/// Nodes are appended in evaluation order, so index order is already a
/// topological order and the backward sweep is a single reverse pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; exactly zero when `v` did not
    /// contribute to the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; receives a gradient slot.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf (inputs, targets, masks).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.rows(), ta.cols(), data).expect("shape checked");
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip(a, b, Op::Add(a, b), |x, y| x + y))
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.rows() != 1 || tb.cols() != ta.cols() {
            return Err(shape_err("add_row", ta, tb));
        }
        let cols = ta.cols();
        let value = Tensor::from_fn(ta.rows(), cols, |r, c| ta.get(r, c) + tb.get(0, c));
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(value, Op::AddRow(a, bias), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, Op::Scale(a, factor), |x| factor * x)
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(shape_err("concat", ta, tb));
        }
        let (ca, cb) = (ta.cols(), tb.cols());
        let value = Tensor::from_fn(ta.rows(), ca + cb, |r, c| {
            if c < ca {
                ta.get(r, c)
            } else {
                tb.get(r, c - ca)
            }
        });
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Concat(a, b), rg))
    }

    /// Rows `start..start + len` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.rows() {
            return Err(Error::Shape {
                op: "slice_rows",
                left: ta.shape(),
                right: (start, len),
            });
        }
        let order: Vec<usize> = (start..start + len).collect();
        let value = ta.select_rows(&order);
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceRows(a, start), rg))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Elu(a), |x| if x > 0.0 { x } else { x.exp_m1() })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Row-wise softmax restricted to a neighborhood mask.
    ///
    /// `scores` is `(B*n) x n`, a stack of `B` blocks of `n` rows; row `r` is
    /// normalized over the columns where `mask[r % n]` is nonzero. Entries
    /// outside the mask are exactly zero.
    pub fn neighborhood_softmax(&mut self, scores: Var, mask: &Tensor) -> Result<Var> {
        let s = self.value(scores);
        let n = mask.rows();
        if mask.cols() != n || s.cols() != n || n == 0 || !s.rows().is_multiple_of(n) {
            return Err(shape_err("neighborhood_softmax", s, mask));
        }
        let mut out = Tensor::zeros(s.rows(), n);
        for r in 0..s.rows() {
            let mrow = mask.row(r % n);
            if mrow.iter().all(|m| *m == 0.0) {
                return Err(Error::Mask(format!("node {} has an empty neighborhood", r % n)));
            }
            let srow = s.row(r);
            // Overflowed scores leave `max` at -inf; the NaNs that follow are
            // caught as divergence by the caller.
            let max = mrow
                .iter()
                .zip(srow)
                .filter(|(m, _)| **m != 0.0)
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..n {
                if mrow[j] != 0.0 {
                    let e = (srow[j] - max).exp();
                    out.set(r, j, e);
                    total += e;
                }
            }
            for j in 0..n {
                if mrow[j] != 0.0 {
                    out.set(r, j, out.get(r, j) / total);
                }
            }
        }
        let rg = self.rg(scores);
        Ok(self.push(out, Op::NeighborhoodSoftmax(scores, n), rg))
    }

    /// `out[r, j] = u[r] + v[block(r) * n + j]` for column vectors `u`, `v` of
    /// length `B*n`.
    pub fn block_pairwise_sum(&mut self, u: Var, v: Var, n: usize) -> Result<Var> {
        let (tu, tv) = (self.value(u), self.value(v));
        if tu.cols() != 1 || tu.shape() != tv.shape() || n == 0 || tu.rows() % n != 0 {
            return Err(shape_err("block_pairwise_sum", tu, tv));
        }
        let value = Tensor::from_fn(tu.rows(), n, |r, j| tu.get(r, 0) + tv.get((r / n) * n + j, 0));
        let rg = self.rg(u) || self.rg(v);
        Ok(self.push(value, Op::BlockPairwiseSum(u, v, n), rg))
    }

    /// Block-diagonal product: `out[r] = sum_j alpha[r, j] * values[block(r) * n + j]`.
    pub fn block_matmul(&mut self, alpha: Var, values: Var, n: usize) -> Result<Var> {
        let (ta, tv) = (self.value(alpha), self.value(values));
        if ta.cols() != n || ta.rows() != tv.rows() || n == 0 || ta.rows() % n != 0 {
            return Err(shape_err("block_matmul", ta, tv));
        }
        let d = tv.cols();
        let mut out = Tensor::zeros(ta.rows(), d);
        for r in 0..ta.rows() {
            let base = (r / n) * n;
            let arow = ta.row(r);
            let orow = &mut out.data_mut()[r * d..(r + 1) * d];
            for (j, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, x) in orow.iter_mut().zip(tv.row(base + j)) {
                    *o += a * x;
                }
            }
        }
        let rg = self.rg(alpha) || self.rg(values);
        Ok(self.push(out, Op::BlockMatMul(alpha, values, n), rg))
    }

    /// Differentiable Pearson correlation of two equal-length tensors, read
    /// as flat vectors.
    pub fn pearson(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(shape_err("pearson", ta, tb));
        }
        if ta.len() < 2 {
            return Err(Error::Contract(format!(
                "pearson needs at least 2 entries, got {}",
                ta.len()
            )));
        }
        let rho = pearson_parts(ta.data(), tb.data()).map_or(0.0, |p| p.rho);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(rho), Op::Pearson(a, b), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        grads.resize(self.nodes.len(), None);
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(a) {
                    acc(a, matmul_nt(g, val(b)));
                }
                if self.rg(b) {
                    acc(b, matmul_tn(val(a), g));
                }
            }
            Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            Op::AddRow(a, bias) => {
                acc(a, g.clone());
                if self.rg(bias) {
                    let cols = g.cols();
                    let mut db = Tensor::zeros(1, cols);
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            db.data_mut()[c] += g.get(r, c);
                        }
                    }
                    acc(bias, db);
                }
            }
            Op::Sub(a, b) => {
                acc(a, g.clone());
                acc(b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(a), val(b));
                if self.rg(a) {
                    acc(a, zip_with(g, tb, |x, y| x * y));
                }
                if self.rg(b) {
                    acc(b, zip_with(g, ta, |x, y| x * y));
                }
            }
            Op::Scale(a, f) => acc(a, g.map(|x| f * x)),
            Op::Concat(a, b) => {
                let ca = val(a).cols();
                if self.rg(a) {
                    acc(a, Tensor::from_fn(g.rows(), ca, |r, c| g.get(r, c)));
                }
                if self.rg(b) {
                    let cb = val(b).cols();
                    acc(b, Tensor::from_fn(g.rows(), cb, |r, c| g.get(r, ca + c)));
                }
            }
            Op::SliceRows(a, start) => {
                let ta = val(a);
                let mut da = Tensor::zeros(ta.rows(), ta.cols());
                let cols = ta.cols();
                da.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                acc(a, da);
            }
            Op::LeakyRelu(a, slope) => {
                acc(a, zip_with(g, val(a), |gx, x| if x > 0.0 { gx } else { slope * gx }));
            }
            Op::Elu(a) => {
                acc(a, zip_with(g, val(a), |gx, x| if x > 0.0 { gx } else { gx * x.exp() }));
            }
            Op::Exp(a) => acc(a, zip_with(g, &node.value, |gx, y| gx * y)),
            Op::Abs(a) => acc(a, zip_with(g, val(a), |gx, x| gx * sign(x))),
            Op::Square(a) => acc(a, zip_with(g, val(a), |gx, x| 2.0 * x * gx)),
            Op::Sum(a) => {
                let ta = val(a);
                acc(a, Tensor::filled(ta.rows(), ta.cols(), g.item()));
            }
            Op::Mean(a) => {
                let ta = val(a);
                acc(a, Tensor::filled(ta.rows(), ta.cols(), g.item() / ta.len() as f64));
            }
            Op::NeighborhoodSoftmax(s, n) => {
                let alpha = &node.value;
                let mut ds = Tensor::zeros(alpha.rows(), n);
                for r in 0..alpha.rows() {
                    let (arow, grow) = (alpha.row(r), g.row(r));
                    let dot: f64 = arow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        ds.set(r, j, arow[j] * (grow[j] - dot));
                    }
                }
                acc(s, ds);
            }
            Op::BlockPairwiseSum(u, v, n) => {
                let rows = g.rows();
                let mut du = Tensor::zeros(rows, 1);
                let mut dv = Tensor::zeros(rows, 1);
                for r in 0..rows {
                    let base = (r / n) * n;
                    let grow = g.row(r);
                    du.data_mut()[r] = grow.iter().sum();
                    for (j, gx) in grow.iter().enumerate() {
                        dv.data_mut()[base + j] += gx;
                    }
                }
                acc(u, du);
                acc(v, dv);
            }
            Op::BlockMatMul(alpha, values, n) => {
                let (ta, tv) = (val(alpha), val(values));
                let d = tv.cols();
                if self.rg(alpha) {
                    let mut da = Tensor::zeros(ta.rows(), n);
                    for r in 0..ta.rows() {
                        let base = (r / n) * n;
                        let grow = g.row(r);
                        for j in 0..n {
                            let dot: f64 = grow.iter().zip(tv.row(base + j)).map(|(a, b)| a * b).sum();
                            da.set(r, j, dot);
                        }
                    }
                    acc(alpha, da);
                }
                if self.rg(values) {
                    let mut dv = Tensor::zeros(tv.rows(), d);
                    for r in 0..ta.rows() {
                        let base = (r / n) * n;
                        let grow = g.row(r).to_vec();
                        for j in 0..n {
                            let a = ta.get(r, j);
                            if a == 0.0 {
                                continue;
                            }
                            let drow = &mut dv.data_mut()[(base + j) * d..(base + j + 1) * d];
                            for (o, gx) in drow.iter_mut().zip(&grow) {
                                *o += a * gx;
                            }
                        }
                    }
                    acc(values, dv);
                }
            }
            Op::Pearson(a, b) => {
                let (ta, tb) = (val(a), val(b));
                let scale = g.item();
                match pearson_parts(ta.data(), tb.data()) {
                    Some(p) => {
                        let denom = (p.saa * p.sbb).sqrt();
                        let da: Vec<f64> = (0..ta.len())
                            .map(|i| scale * (p.cb[i] / denom - p.rho * p.ca[i] / p.saa))
                            .collect();
                        let db: Vec<f64> = (0..tb.len())
                            .map(|i| scale * (p.ca[i] / denom - p.rho * p.cb[i] / p.sbb))
                            .collect();
                        acc(a, Tensor::new(ta.rows(), ta.cols(), da).expect("same len"));
                        acc(b, Tensor::new(tb.rows(), tb.cols(), db).expect("same len"));
                    }
                    None => {
                        acc(a, Tensor::zeros(ta.rows(), ta.cols()));
                        acc(b, Tensor::zeros(tb.rows(), tb.cols()));
                    }
                }
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

struct PearsonParts {
    ca: Vec<f64>,
    cb: Vec<f64>,
    saa: f64,
    sbb: f64,
    rho: f64,
}

/// `None` when either side falls under the variance floor.
fn pearson_parts(a: &[f64], b: &[f64]) -> Option<PearsonParts> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let ca: Vec<f64> = a.iter().map(|x| x - ma).collect();
    let cb: Vec<f64> = b.iter().map(|x| x - mb).collect();
    let saa: f64 = ca.iter().map(|x| x * x).sum();
    let sbb: f64 = cb.iter().map(|x| x * x).sum();
    if saa / n < PEARSON_VARIANCE_FLOOR || sbb / n < PEARSON_VARIANCE_FLOOR {
        return None;
    }
    let sab: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    let rho = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    Some(PearsonParts { ca, cb, saa, sbb, rho })
}

/// Variance-guarded Pearson correlation on plain slices.
pub fn pearson_value(a: &[f64], b: &[f64]) -> f64 {
    pearson_parts(a, b).map_or(0.0, |p| p.rho)
}
