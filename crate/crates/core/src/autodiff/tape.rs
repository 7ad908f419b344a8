//! Reverse-mode differentiation over dense row-major matrices.
//!
//! Every operation appends a node holding its forward value; `grad` walks the
//! nodes in reverse insertion order, which is a valid topological order since an
//! operand always exists before its consumer.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array1, Array2, Axis, Zip};

use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Negative slope used by every LeakyReLU in the network.
pub const LEAKY_SLOPE: f64 = 0.2;
/// Variance floor inside batch normalization.
pub const BN_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.idx
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    MulCol(usize, usize),
    MulRow(usize, usize),
    Gelu(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    Gather(usize, Vec<usize>),
    ScatterAdd(usize, Vec<usize>),
    SegmentSoftmax(usize, Vec<usize>),
    BatchNorm { x: usize, gamma: usize, beta: usize, xhat: Array2<f64>, inv_std: Array1<f64> },
    Sum(usize),
    Mean(usize),
    Mse(usize, Array2<f64>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Batch statistics produced by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    /// Biased variance over the batch rows.
    pub var: Array1<f64>,
    pub rows: usize,
}

/// Records primitive operations for one forward pass.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var { tape: self.id, idx: self.nodes.len() - 1 }
    }

    fn idx(&self, v: Var) -> usize {
        debug_assert_eq!(v.tape, self.id, "variable from another tape");
        v.idx
    }

    fn ng(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// A value that is differentiated against.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A value treated as a constant.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[self.idx(v)].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        let d = self.value(v).dim();
        [d.0, d.1]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.ncols() != vb.nrows() {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", va.dim(), vb.dim())));
        }
        let out = va.dot(vb);
        let ng = self.ng(ia) || self.ng(ib);
        Ok(self.push(out, Op::MatMul(ia, ib), ng))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(bias));
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if vb.nrows() != 1 || vb.ncols() != va.ncols() {
            return Err(Error::shape("add_bias", format!("{:?} + {:?}", va.dim(), vb.dim())));
        }
        let out = va + vb;
        let ng = self.ng(ia) || self.ng(ib);
        Ok(self.push(out, Op::AddBias(ia, ib), ng))
    }

    fn same_shape(&self, op: &'static str, ia: usize, ib: usize) -> Result<()> {
        let (da, db) = (self.nodes[ia].value.dim(), self.nodes[ib].value.dim());
        if da != db {
            return Err(Error::shape(op, format!("{da:?} vs {db:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        self.same_shape("add", ia, ib)?;
        let out = &self.nodes[ia].value + &self.nodes[ib].value;
        let ng = self.ng(ia) || self.ng(ib);
        Ok(self.push(out, Op::Add(ia, ib), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        self.same_shape("sub", ia, ib)?;
        let out = &self.nodes[ia].value - &self.nodes[ib].value;
        let ng = self.ng(ia) || self.ng(ib);
        Ok(self.push(out, Op::Sub(ia, ib), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        self.same_shape("mul", ia, ib)?;
        let out = &self.nodes[ia].value * &self.nodes[ib].value;
        let ng = self.ng(ia) || self.ng(ib);
        Ok(self.push(out, Op::Mul(ia, ib), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ia = self.idx(a);
        let out = &self.nodes[ia].value * s;
        let ng = self.ng(ia);
        self.push(out, Op::Scale(ia, s), ng)
    }

    /// Multiplies each row of `a` by the matching entry of the column `col`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ia, ic) = (self.idx(a), self.idx(col));
        let (va, vc) = (&self.nodes[ia].value, &self.nodes[ic].value);
        if vc.ncols() != 1 || vc.nrows() != va.nrows() {
            return Err(Error::shape("mul_col", format!("{:?} * {:?}", va.dim(), vc.dim())));
        }
        let out = va * vc;
        let ng = self.ng(ia) || self.ng(ic);
        Ok(self.push(out, Op::MulCol(ia, ic), ng))
    }

    /// Multiplies every row of `a` elementwise by the `1 x c` row `row`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ia, ir) = (self.idx(a), self.idx(row));
        let (va, vr) = (&self.nodes[ia].value, &self.nodes[ir].value);
        if vr.nrows() != 1 || vr.ncols() != va.ncols() {
            return Err(Error::shape("mul_row", format!("{:?} * {:?}", va.dim(), vr.dim())));
        }
        let out = va * vr;
        let ng = self.ng(ia) || self.ng(ir);
        Ok(self.push(out, Op::MulRow(ia, ir), ng))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let out = self.nodes[ia].value.mapv(gelu);
        let ng = self.ng(ia);
        self.push(out, Op::Gelu(ia), ng)
    }

    pub fn leaky_relu(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let slope = LEAKY_SLOPE;
        let out = self.nodes[ia].value.mapv(|x| if x > 0.0 { x } else { slope * x });
        let ng = self.ng(ia);
        self.push(out, Op::LeakyRelu(ia, slope), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let out = self.nodes[ia].value.mapv(sigmoid);
        let ng = self.ng(ia);
        self.push(out, Op::Sigmoid(ia), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let ids: Vec<usize> = parts.iter().map(|&v| self.idx(v)).collect();
        let views: Vec<_> = ids.iter().map(|&i| self.nodes[i].value.view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::shape("concat_cols", e.to_string()))?;
        let ng = ids.iter().any(|&i| self.ng(i));
        Ok(self.push(out, Op::ConcatCols(ids), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let ids: Vec<usize> = parts.iter().map(|&v| self.idx(v)).collect();
        let views: Vec<_> = ids.iter().map(|&i| self.nodes[i].value.view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape("concat_rows", e.to_string()))?;
        let ng = ids.iter().any(|&i| self.ng(i));
        Ok(self.push(out, Op::ConcatRows(ids), ng))
    }

    /// Row `e` of the result is row `index[e]` of `a`.
    pub fn gather(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let ia = self.idx(a);
        let va = &self.nodes[ia].value;
        let (n, c) = va.dim();
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(Error::shape("gather", format!("row {bad} out of {n}")));
        }
        let mut out = Array2::zeros((index.len(), c));
        for (mut row, &src) in out.outer_iter_mut().zip(index) {
            row.assign(&va.row(src));
        }
        let ng = self.ng(ia);
        Ok(self.push(out, Op::Gather(ia, index.to_vec()), ng))
    }

    /// Sums row `e` of `a` into row `index[e]` of an `n_out`-row result.
    pub fn scatter_add(&mut self, a: Var, index: &[usize], n_out: usize) -> Result<Var> {
        let ia = self.idx(a);
        let va = &self.nodes[ia].value;
        if index.len() != va.nrows() {
            return Err(Error::shape("scatter_add", format!("{} indices for {} rows", index.len(), va.nrows())));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= n_out) {
            return Err(Error::shape("scatter_add", format!("target {bad} out of {n_out}")));
        }
        let mut out = Array2::zeros((n_out, va.ncols()));
        for (row, &dst) in va.outer_iter().zip(index) {
            let mut o = out.row_mut(dst);
            o += &row;
        }
        let ng = self.ng(ia);
        Ok(self.push(out, Op::ScatterAdd(ia, index.to_vec()), ng))
    }

    /// Softmax of an `E x 1` column within groups sharing a segment id.
    pub fn segment_softmax(&mut self, logits: Var, segment: &[usize], n_segments: usize) -> Result<Var> {
        let il = self.idx(logits);
        let out = segment_softmax_values(&self.nodes[il].value, segment, n_segments)?;
        let ng = self.ng(il);
        Ok(self.push(out, Op::SegmentSoftmax(il, segment.to_vec()), ng))
    }

    /// Normalizes each column with the statistics of the current rows.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var) -> Result<(Var, BatchStats)> {
        let (ix, ig, ib) = (self.idx(x), self.idx(gamma), self.idx(beta));
        let vx = &self.nodes[ix].value;
        let (n, c) = vx.dim();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        check_affine(&self.nodes[ig].value, &self.nodes[ib].value, c)?;
        let mean = vx.mean_axis(Axis(0)).expect("non-empty");
        let centered = vx - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty");
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let xhat = &centered * &inv_std;
        let out = &xhat * &self.nodes[ig].value + &self.nodes[ib].value;
        let ng = self.ng(ix) || self.ng(ig) || self.ng(ib);
        let stats = BatchStats { mean, var, rows: n };
        let v = self.push(out, Op::BatchNorm { x: ix, gamma: ig, beta: ib, xhat, inv_std }, ng);
        Ok((v, stats))
    }

    /// Normalizes with fixed statistics; differentiable through `x` and the affine.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &Array1<f64>, var: &Array1<f64>) -> Result<Var> {
        let c = self.value(x).ncols();
        let (ig, ib) = (self.idx(gamma), self.idx(beta));
        check_affine(&self.nodes[ig].value, &self.nodes[ib].value, c)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("batch_norm_eval", "running stats width"));
        }
        let scale = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt()).insert_axis(Axis(0));
        let shift = (-mean * scale.row(0)).insert_axis(Axis(0));
        let scale = self.constant(scale);
        let shift = self.constant(shift);
        // (x - m) / s == x * (1/s) + (-m/s)
        let xs = self.mul_row(x, scale)?;
        let xhat = self.add_bias(xs, shift)?;
        let y = self.mul_row(xhat, gamma)?;
        self.add_bias(y, beta)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let out = Array2::from_elem((1, 1), self.nodes[ia].value.sum());
        let ng = self.ng(ia);
        self.push(out, Op::Sum(ia), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let v = &self.nodes[ia].value;
        let m = if v.is_empty() { 0.0 } else { v.sum() / v.len() as f64 };
        let ng = self.ng(ia);
        self.push(Array2::from_elem((1, 1), m), Op::Mean(ia), ng)
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, a: Var, target: &Array2<f64>) -> Result<Var> {
        let ia = self.idx(a);
        let va = &self.nodes[ia].value;
        if va.dim() != target.dim() {
            return Err(Error::shape("mse", format!("{:?} vs {:?}", va.dim(), target.dim())));
        }
        let diff = va - target;
        let m = diff.mapv(|d| d * d).sum() / diff.len().max(1) as f64;
        let ng = self.ng(ia);
        Ok(self.push(Array2::from_elem((1, 1), m), Op::Mse(ia, diff), ng))
    }

    /// Gradients of the scalar `output` with respect to each of `params`.
    ///
    /// Consumes the tape.
    pub fn grad(self, output: Var, params: &[Var]) -> Result<Vec<Array2<f64>>> {
        if output.tape != self.id {
            return Err(Error::ForeignVar(output.idx));
        }
        if let Some(p) = params.iter().find(|p| p.tape != self.id || p.idx >= self.nodes.len()) {
            return Err(Error::ForeignVar(p.idx));
        }
        let out_shape = self.shape(output);
        if out_shape != [1, 1] {
            return Err(Error::NonScalarOutput(out_shape));
        }
        let mut grads = self.backward(output.idx);
        Ok(params
            .iter()
            .map(|p| grads[p.idx].take().unwrap_or_else(|| Array2::zeros(self.nodes[p.idx].value.raw_dim())))
            .collect())
    }

    fn backward(&self, out: usize) -> Vec<Option<Array2<f64>>> {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out] = Some(Array2::ones((1, 1)));
        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        let ga = g.dot(&self.nodes[*b].value.t());
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.ng(*b) {
                        let gb = self.nodes[*a].value.t().dot(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddBias(a, b) => {
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*a) && self.ng(*b) {
                        accumulate(&mut grads, *a, g.clone());
                        accumulate(&mut grads, *b, g);
                    } else if self.ng(*a) {
                        accumulate(&mut grads, *a, g);
                    } else if self.ng(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, -&g);
                    }
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, &g * &self.nodes[*b].value);
                    }
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, &g * &self.nodes[*a].value);
                    }
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g * *s),
                Op::MulCol(a, c) => {
                    if self.ng(*c) {
                        let gc = (&g * &self.nodes[*a].value).sum_axis(Axis(1)).insert_axis(Axis(1));
                        accumulate(&mut grads, *c, gc);
                    }
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g * &self.nodes[*c].value);
                    }
                }
                Op::MulRow(a, r) => {
                    if self.ng(*r) {
                        let gr = (&g * &self.nodes[*a].value).sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *r, gr);
                    }
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g * &self.nodes[*r].value);
                    }
                }
                Op::Gelu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&self.nodes[*a].value).for_each(|gv, &x| *gv *= gelu_grad(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&self.nodes[*a].value).for_each(|gv, &x| {
                        if x <= 0.0 {
                            *gv *= slope
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&node.value).for_each(|gv, &y| *gv *= y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(ids) => {
                    let mut off = 0;
                    for &p in ids {
                        let w = self.nodes[p].value.ncols();
                        if self.ng(p) {
                            accumulate(&mut grads, p, g.slice(s![.., off..off + w]).to_owned());
                        }
                        off += w;
                    }
                }
                Op::ConcatRows(ids) => {
                    let mut off = 0;
                    for &p in ids {
                        let h = self.nodes[p].value.nrows();
                        if self.ng(p) {
                            accumulate(&mut grads, p, g.slice(s![off..off + h, ..]).to_owned());
                        }
                        off += h;
                    }
                }
                Op::Gather(a, index) => {
                    let mut ga = Array2::zeros(self.nodes[*a].value.raw_dim());
                    for (row, &src) in g.outer_iter().zip(index) {
                        let mut r = ga.row_mut(src);
                        r += &row;
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ScatterAdd(a, index) => {
                    let mut ga = Array2::zeros(self.nodes[*a].value.raw_dim());
                    for (mut row, &dst) in ga.outer_iter_mut().zip(index) {
                        row.assign(&g.row(dst));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegmentSoftmax(a, segment) => {
                    let y = &node.value;
                    let n_seg = segment.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; n_seg];
                    for (e, &sg) in segment.iter().enumerate() {
                        dot[sg] += g[[e, 0]] * y[[e, 0]];
                    }
                    let mut ga = Array2::zeros((segment.len(), 1));
                    for (e, &sg) in segment.iter().enumerate() {
                        ga[[e, 0]] = y[[e, 0]] * (g[[e, 0]] - dot[sg]);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std } => {
                    if self.ng(*beta) {
                        accumulate(&mut grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    let g_xhat_sum = (&g * xhat).sum_axis(Axis(0));
                    if self.ng(*gamma) {
                        accumulate(&mut grads, *gamma, g_xhat_sum.clone().insert_axis(Axis(0)));
                    }
                    if self.ng(*x) {
                        let n = g.nrows() as f64;
                        let gamma_v = self.nodes[*gamma].value.row(0);
                        let g_sum = g.sum_axis(Axis(0));
                        let mut gx = g * n;
                        gx -= &g_sum;
                        gx -= &(xhat * &g_xhat_sum);
                        let coef = &gamma_v * inv_std / n;
                        gx *= &coef;
                        accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.nodes[*a].value.raw_dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let v = &self.nodes[*a].value;
                    let ga = Array2::from_elem(v.raw_dim(), g[[0, 0]] / v.len().max(1) as f64);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mse(a, diff) => {
                    let k = 2.0 * g[[0, 0]] / diff.len().max(1) as f64;
                    accumulate(&mut grads, *a, diff * k);
                }
            }
        }
        grads
    }
}

fn check_affine(gamma: &Array2<f64>, beta: &Array2<f64>, c: usize) -> Result<()> {
    if gamma.dim() != (1, c) || beta.dim() != (1, c) {
        return Err(Error::shape("batch_norm", format!("affine {:?}/{:?} for {c} channels", gamma.dim(), beta.dim())));
    }
    Ok(())
}

fn accumulate(grads: &mut [Option<Array2<f64>>], i: usize, g: Array2<f64>) {
    match &mut grads[i] {
        Some(acc) => *acc += &g,
        slot => *slot = Some(g),
    }
}

/// Exact Gaussian-CDF GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of a column within segments; errors on an empty segment.
pub fn segment_softmax_values(logits: &Array2<f64>, segment: &[usize], n_segments: usize) -> Result<Array2<f64>> {
    if logits.ncols() != 1 || logits.nrows() != segment.len() {
        return Err(Error::shape("segment_softmax", format!("{:?} logits for {} ids", logits.dim(), segment.len())));
    }
    let mut max = vec![f64::NEG_INFINITY; n_segments];
    for (e, &sg) in segment.iter().enumerate() {
        if sg >= n_segments {
            return Err(Error::shape("segment_softmax", format!("segment {sg} out of {n_segments}")));
        }
        max[sg] = max[sg].max(logits[[e, 0]]);
    }
    if let Some(empty) = max.iter().position(|m| *m == f64::NEG_INFINITY) {
        return Err(Error::EmptySegment(empty));
    }
    let mut out = Array2::zeros((segment.len(), 1));
    let mut denom = vec![0.0; n_segments];
    for (e, &sg) in segment.iter().enumerate() {
        let v = (logits[[e, 0]] - max[sg]).exp();
        out[[e, 0]] = v;
        denom[sg] += v;
    }
    for (e, &sg) in segment.iter().enumerate() {
        out[[e, 0]] /= denom[sg];
    }
    Ok(out)
}
