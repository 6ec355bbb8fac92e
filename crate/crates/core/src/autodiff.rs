//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as it is evaluated. Calling
//! [`Tape::backward`] on a `1×1` output walks the record in reverse and
//! returns the gradient of every node that depends on a trainable leaf.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::gaussian::spectral_norm;

pub type Index = Arc<Vec<usize>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a + 1·b` with `b` a single row.
    AddRow(Var, Var),
    /// Row `i` of `a` scaled by entry `i` of the column `s`.
    ScaleRows(Var, Var),
    Scale(Var, f64),
    Leaky(Var, f64),
    Exp(Var),
    Ln(Var),
    Tanh(Var),
    Sigmoid(Var),
    Square(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    RowSum(Var),
    MeanRows(Var),
    Gather(Var, Index),
    ScatterAdd(Var, Index),
    SegmentSoftmax(Var, Index),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Transpose(Var),
    Reshape(Var),
    SpectralNormalize {
        a: Var,
        sigma: f64,
        uv: DMatrix<f64>,
    },
    RowNorm(Var),
    RowNormalize(Var),
}

/// Norms below this are treated as zero by the row-norm ops.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<DMatrix<f64>>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        &self.values[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v.0][(0, 0)]
    }

    fn push(&mut self, value: DMatrix<f64>, op: Op, needs_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        Var(self.values.len() - 1)
    }

    fn any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.needs_grad[v.0])
    }

    pub fn constant(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let g = self.any(&[a, b]);
        self.push(v, Op::MatMul(a, b), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let g = self.any(&[a, b]);
        self.push(v, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let g = self.any(&[a, b]);
        self.push(v, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).component_mul(self.value(b));
        let g = self.any(&[a, b]);
        self.push(v, Op::Mul(a, b), g)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let mut v = self.value(a).clone();
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row expects a single row");
        for mut line in v.row_iter_mut() {
            line += r;
        }
        let g = self.any(&[a, row]);
        self.push(v, Op::AddRow(a, row), g)
    }

    pub fn scale_rows(&mut self, s: Var, a: Var) -> Var {
        let mut v = self.value(a).clone();
        let sv = self.value(s);
        assert_eq!(sv.ncols(), 1, "scale_rows expects a column");
        for (i, mut line) in v.row_iter_mut().enumerate() {
            line *= sv[(i, 0)];
        }
        let g = self.any(&[s, a]);
        self.push(v, Op::ScaleRows(s, a), g)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        let g = self.any(&[a]);
        self.push(v, Op::Scale(a, k), g)
    }

    /// Adds a constant matrix.
    pub fn offset(&mut self, a: Var, c: DMatrix<f64>) -> Var {
        let c = self.constant(c);
        self.add(a, c)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let g = self.any(&[a]);
        self.push(v, Op::Leaky(a, slope), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        let g = self.any(&[a]);
        self.push(v, Op::Exp(a), g)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        let g = self.any(&[a]);
        self.push(v, Op::Ln(a), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let g = self.any(&[a]);
        self.push(v, Op::Tanh(a), g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let g = self.any(&[a]);
        self.push(v, Op::Sigmoid(a), g)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        let g = self.any(&[a]);
        self.push(v, Op::Square(a), g)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.row_iter_mut() {
            let m = row.max();
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            row.add_scalar_mut(-lse);
        }
        let g = self.any(&[a]);
        self.push(v, Op::LogSoftmaxRows(a), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = DMatrix::from_element(1, 1, self.value(a).sum());
        let g = self.any(&[a]);
        self.push(v, Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum(a);
        if n == 0 {
            return s;
        }
        self.scale(s, 1.0 / n as f64)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = DMatrix::from_fn(x.nrows(), 1, |i, _| x.row(i).sum());
        let g = self.any(&[a]);
        self.push(v, Op::RowSum(a), g)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = x.nrows() as f64;
        let v = DMatrix::from_fn(1, x.ncols(), |_, j| x.column(j).sum() / n);
        let g = self.any(&[a]);
        self.push(v, Op::MeanRows(a), g)
    }

    /// Row `k` of the output is row `idx[k]` of `a`.
    pub fn gather(&mut self, a: Var, idx: &Index) -> Var {
        let x = self.value(a);
        let v = DMatrix::from_fn(idx.len(), x.ncols(), |k, j| x[(idx[k], j)]);
        let g = self.any(&[a]);
        self.push(v, Op::Gather(a, idx.clone()), g)
    }

    /// Sums row `k` of `a` into output row `idx[k]`.
    pub fn scatter_add(&mut self, a: Var, idx: &Index, rows: usize) -> Var {
        let x = self.value(a);
        let mut v = DMatrix::zeros(rows, x.ncols());
        for (k, &r) in idx.iter().enumerate() {
            for j in 0..x.ncols() {
                v[(r, j)] += x[(k, j)];
            }
        }
        let g = self.any(&[a]);
        self.push(v, Op::ScatterAdd(a, idx.clone()), g)
    }

    /// Softmax of a column within groups that share a segment id.
    pub fn segment_softmax(&mut self, a: Var, seg: &Index, n_seg: usize) -> Var {
        let x = self.value(a);
        let mut max = vec![f64::NEG_INFINITY; n_seg];
        for (k, &s) in seg.iter().enumerate() {
            max[s] = max[s].max(x[(k, 0)]);
        }
        let mut e: Vec<f64> = seg.iter().enumerate().map(|(k, &s)| (x[(k, 0)] - max[s]).exp()).collect();
        let mut z = vec![0.0; n_seg];
        for (k, &s) in seg.iter().enumerate() {
            z[s] += e[k];
        }
        for (k, &s) in seg.iter().enumerate() {
            e[k] /= z[s];
        }
        let v = DMatrix::from_vec(e.len(), 1, e);
        let g = self.any(&[a]);
        self.push(v, Op::SegmentSoftmax(a, seg.clone()), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).nrows();
        let cols: usize = parts.iter().map(|p| self.value(*p).ncols()).sum();
        let mut v = DMatrix::zeros(rows, cols);
        let mut at = 0;
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.nrows(), rows, "concat_cols row mismatch");
            v.columns_mut(at, x.ncols()).copy_from(x);
            at += x.ncols();
        }
        let g = self.any(parts);
        self.push(v, Op::ConcatCols(parts.to_vec()), g)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).ncols();
        let rows: usize = parts.iter().map(|p| self.value(*p).nrows()).sum();
        let mut v = DMatrix::zeros(rows, cols);
        let mut at = 0;
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.ncols(), cols, "concat_rows column mismatch");
            v.rows_mut(at, x.nrows()).copy_from(x);
            at += x.nrows();
        }
        let g = self.any(parts);
        self.push(v, Op::ConcatRows(parts.to_vec()), g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).columns(start, len).into_owned();
        let g = self.any(&[a]);
        self.push(v, Op::SliceCols(a, start), g)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).rows(start, len).into_owned();
        let g = self.any(&[a]);
        self.push(v, Op::SliceRows(a, start), g)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let g = self.any(&[a]);
        self.push(v, Op::Transpose(a), g)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = reshape_row_major(self.value(a), rows, cols);
        let g = self.any(&[a]);
        self.push(v, Op::Reshape(a), g)
    }

    /// `A / ‖A‖₂`. Panics on a zero or non-finite matrix.
    pub fn spectral_normalize(&mut self, a: Var) -> Var {
        let s = spectral_norm(self.value(a)).expect("spectral norm of a nonzero finite matrix");
        let v = self.value(a) / s.value;
        let uv = &s.u * s.v.transpose();
        let g = self.any(&[a]);
        self.push(
            v,
            Op::SpectralNormalize {
                a,
                sigma: s.value,
                uv,
            },
            g,
        )
    }

    pub fn row_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = DMatrix::from_fn(x.nrows(), 1, |i, _| x.row(i).norm());
        let g = self.any(&[a]);
        self.push(v, Op::RowNorm(a), g)
    }

    /// Rows scaled to unit length; rows shorter than [`NORM_FLOOR`] map to 0.
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.row_iter_mut() {
            let n = row.norm();
            if n < NORM_FLOOR {
                row.fill(0.0);
            } else {
                row /= n;
            }
        }
        let g = self.any(&[a]);
        self.push(v, Op::RowNormalize(a), g)
    }

    /// Gradients of the scalar `out` with respect to every node; `None`
    /// where a node does not influence `out` or needs no gradient.
    pub fn backward(&self, out: Var) -> Vec<Option<DMatrix<f64>>> {
        assert_eq!(self.values[out.0].shape(), (1, 1), "backward expects a scalar");
        let mut grads: Vec<Option<DMatrix<f64>>> = vec![None; self.values.len()];
        grads[out.0] = Some(DMatrix::from_element(1, 1, 1.0));
        for idx in (0..=out.0).rev() {
            if !self.needs_grad[idx] {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        grads
    }

    fn acc(&self, grads: &mut [Option<DMatrix<f64>>], v: Var, g: DMatrix<f64>) {
        if !self.needs_grad[v.0] {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => *existing += g,
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &DMatrix<f64>, grads: &mut [Option<DMatrix<f64>>]) {
        let val = |v: Var| &self.values[v.0];
        let out = &self.values[idx];
        match &self.ops[idx] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs_grad[a.0] {
                    self.acc(grads, *a, g * val(*b).transpose());
                }
                if self.needs_grad[b.0] {
                    self.acc(grads, *b, val(*a).transpose() * g);
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                self.acc(grads, *a, g.component_mul(val(*b)));
                self.acc(grads, *b, g.component_mul(val(*a)));
            }
            Op::AddRow(a, row) => {
                self.acc(grads, *a, g.clone());
                let gr = DMatrix::from_fn(1, g.ncols(), |_, j| g.column(j).sum());
                self.acc(grads, *row, gr);
            }
            Op::ScaleRows(s, a) => {
                let (sv, av) = (val(*s), val(*a));
                if self.needs_grad[s.0] {
                    let gs = DMatrix::from_fn(g.nrows(), 1, |i, _| g.row(i).dot(&av.row(i)));
                    self.acc(grads, *s, gs);
                }
                if self.needs_grad[a.0] {
                    let mut ga = g.clone();
                    for (i, mut line) in ga.row_iter_mut().enumerate() {
                        line *= sv[(i, 0)];
                    }
                    self.acc(grads, *a, ga);
                }
            }
            Op::Scale(a, k) => self.acc(grads, *a, g * *k),
            Op::Leaky(a, slope) => {
                let ga = g.zip_map(val(*a), |gi, x| if x > 0.0 { gi } else { slope * gi });
                self.acc(grads, *a, ga);
            }
            Op::Exp(a) => self.acc(grads, *a, g.component_mul(out)),
            Op::Ln(a) => self.acc(grads, *a, g.component_div(val(*a))),
            Op::Tanh(a) => self.acc(grads, *a, g.zip_map(out, |gi, y| gi * (1.0 - y * y))),
            Op::Sigmoid(a) => self.acc(grads, *a, g.zip_map(out, |gi, y| gi * y * (1.0 - y))),
            Op::Square(a) => self.acc(grads, *a, g.zip_map(val(*a), |gi, x| 2.0 * gi * x)),
            Op::LogSoftmaxRows(a) => {
                let mut ga = g.clone();
                for i in 0..ga.nrows() {
                    let total = g.row(i).sum();
                    for j in 0..ga.ncols() {
                        ga[(i, j)] -= out[(i, j)].exp() * total;
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::Sum(a) => {
                let x = val(*a);
                self.acc(grads, *a, DMatrix::from_element(x.nrows(), x.ncols(), g[(0, 0)]));
            }
            Op::RowSum(a) => {
                let x = val(*a);
                self.acc(grads, *a, DMatrix::from_fn(x.nrows(), x.ncols(), |i, _| g[(i, 0)]));
            }
            Op::MeanRows(a) => {
                let x = val(*a);
                let n = x.nrows() as f64;
                self.acc(grads, *a, DMatrix::from_fn(x.nrows(), x.ncols(), |_, j| g[(0, j)] / n));
            }
            Op::Gather(a, idx) => {
                let x = val(*a);
                let mut ga = DMatrix::zeros(x.nrows(), x.ncols());
                for (k, &r) in idx.iter().enumerate() {
                    for j in 0..x.ncols() {
                        ga[(r, j)] += g[(k, j)];
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::ScatterAdd(a, idx) => {
                let ga = DMatrix::from_fn(idx.len(), g.ncols(), |k, j| g[(idx[k], j)]);
                self.acc(grads, *a, ga);
            }
            Op::SegmentSoftmax(a, seg) => {
                let n_seg = seg.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg];
                for (k, &s) in seg.iter().enumerate() {
                    dot[s] += g[(k, 0)] * out[(k, 0)];
                }
                let ga = DMatrix::from_fn(seg.len(), 1, |k, _| out[(k, 0)] * (g[(k, 0)] - dot[seg[k]]));
                self.acc(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for p in parts {
                    let c = val(*p).ncols();
                    self.acc(grads, *p, g.columns(at, c).into_owned());
                    at += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut at = 0;
                for p in parts {
                    let r = val(*p).nrows();
                    self.acc(grads, *p, g.rows(at, r).into_owned());
                    at += r;
                }
            }
            Op::SliceCols(a, start) => {
                let x = val(*a);
                let mut ga = DMatrix::zeros(x.nrows(), x.ncols());
                ga.columns_mut(*start, g.ncols()).copy_from(g);
                self.acc(grads, *a, ga);
            }
            Op::SliceRows(a, start) => {
                let x = val(*a);
                let mut ga = DMatrix::zeros(x.nrows(), x.ncols());
                ga.rows_mut(*start, g.nrows()).copy_from(g);
                self.acc(grads, *a, ga);
            }
            Op::Transpose(a) => self.acc(grads, *a, g.transpose()),
            Op::Reshape(a) => {
                let x = val(*a);
                self.acc(grads, *a, reshape_row_major(g, x.nrows(), x.ncols()));
            }
            Op::SpectralNormalize { a, sigma, uv } => {
                let inner = g.dot(val(*a));
                let ga = g / *sigma - uv * (inner / (sigma * sigma));
                self.acc(grads, *a, ga);
            }
            Op::RowNorm(a) => {
                let x = val(*a);
                let mut ga = DMatrix::zeros(x.nrows(), x.ncols());
                for i in 0..x.nrows() {
                    let n = out[(i, 0)];
                    if n >= NORM_FLOOR {
                        for j in 0..x.ncols() {
                            ga[(i, j)] = g[(i, 0)] * x[(i, j)] / n;
                        }
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::RowNormalize(a) => {
                let x = val(*a);
                let mut ga = DMatrix::zeros(x.nrows(), x.ncols());
                for i in 0..x.nrows() {
                    let n = x.row(i).norm();
                    if n >= NORM_FLOOR {
                        let yg = out.row(i).dot(&g.row(i));
                        for j in 0..x.ncols() {
                            ga[(i, j)] = (g[(i, j)] - out[(i, j)] * yg) / n;
                        }
                    }
                }
                self.acc(grads, *a, ga);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn reshape_row_major(x: &DMatrix<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(x.len(), rows * cols, "reshape changes the element count");
    let c0 = x.ncols();
    DMatrix::from_fn(rows, cols, |i, j| {
        let k = i * cols + j;
        x[(k / c0, k % c0)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Compares the tape gradient of `f` at `x` to central differences.
    fn check(x: DMatrix<f64>, f: impl Fn(&mut Tape, Var) -> Var) {
        let mut t = Tape::new();
        let v = t.param(x.clone());
        let out = f(&mut t, v);
        let grads = t.backward(out);
        let g = grads[v.0].clone().unwrap_or_else(|| DMatrix::zeros(x.nrows(), x.ncols()));
        let h = 1e-6;
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let eval = |d: f64| {
                    let mut y = x.clone();
                    y[(i, j)] += d;
                    let mut t = Tape::new();
                    let v = t.param(y);
                    let o = f(&mut t, v);
                    t.scalar(o)
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let err = (fd - g[(i, j)]).abs() / fd.abs().max(g[(i, j)].abs()).max(1e-3);
                assert!(err < 1e-5, "entry ({i},{j}): tape {} vs fd {fd}", g[(i, j)]);
            }
        }
    }

    #[test]
    fn elementwise_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random(&mut rng, 3, 4);
        let x = random(&mut rng, 3, 4);
        check(x.clone(), |t, v| {
            let c = t.constant(w.clone());
            let a = t.mul(v, c);
            let b = t.tanh(a);
            let e = t.exp(b);
            let s = t.sigmoid(e);
            let q = t.square(s);
            let l = t.leaky_relu(v, 0.2);
            let m = t.sub(q, l);
            t.sum(m)
        });
        check(x.map(|v| v.abs() + 0.5), |t, v| {
            let l = t.ln(v);
            let s = t.scale(l, 3.0);
            t.mean(s)
        });
    }

    #[test]
    fn matrix_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random(&mut rng, 4, 2);
        let row = random(&mut rng, 1, 2);
        check(random(&mut rng, 3, 4), |t, v| {
            let wv = t.constant(w.clone());
            let r = t.param(row.clone());
            let m = t.matmul(v, wv);
            let a = t.add_row(m, r);
            let ls = t.log_softmax_rows(a);
            let tr = t.transpose(ls);
            let rs = t.reshape(tr, 3, 2);
            let rsum = t.row_sum(rs);
            let sc = t.scale_rows(rsum, rs);
            let mr = t.mean_rows(sc);
            let sq = t.square(mr);
            t.sum(sq)
        });
        let a = random(&mut rng, 2, 3);
        check(random(&mut rng, 3, 2), |t, v| {
            let av = t.constant(a.clone());
            let m = t.matmul(av, v);
            let s = t.square(m);
            t.sum(s)
        });
    }

    #[test]
    fn indexing_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let idx: Index = Arc::new(vec![2, 0, 0, 1, 2]);
        let seg: Index = Arc::new(vec![0, 0, 1, 1, 1]);
        let w = random(&mut rng, 5, 1);
        check(random(&mut rng, 3, 2), |t, v| {
            let g = t.gather(v, &idx);
            let s = t.scatter_add(g, &seg, 2);
            let head = t.slice_rows(v, 0, 2);
            let c = t.concat_cols(&[s, head]);
            let sq = t.square(c);
            let sum = t.sum(sq);
            let gcol = t.slice_cols(g, 1, 1);
            let wv = t.constant(w.clone());
            let x = t.mul(gcol, wv);
            let sm = t.segment_softmax(x, &seg, 2);
            let r = t.concat_rows(&[sm, gcol]);
            let e = t.exp(r);
            let se = t.mul(e, r);
            let total = t.sum(se);
            t.add(sum, total)
        });
    }

    #[test]
    fn segment_softmax_normalizes() {
        let mut t = Tape::new();
        let x = t.constant(DMatrix::from_vec(5, 1, vec![1.0, 2.0, 3.0, -1.0, 0.5]));
        let seg: Index = Arc::new(vec![1, 0, 1, 1, 0]);
        let s = t.segment_softmax(x, &seg, 2);
        let v = t.value(s);
        assert!((v[0] + v[2] + v[3] - 1.0).abs() < 1e-12);
        assert!((v[1] + v[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_and_norm_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random(&mut rng, 3, 3);
        check(random(&mut rng, 3, 3), |t, v| {
            let n = t.spectral_normalize(v);
            let c = t.constant(w.clone());
            let m = t.mul(n, c);
            t.sum(m)
        });
        let w = random(&mut rng, 4, 3);
        check(random(&mut rng, 4, 3), |t, v| {
            let n = t.row_norm(v);
            let u = t.row_normalize(v);
            let c = t.constant(w.clone());
            let m = t.mul(u, c);
            let s = t.sum(m);
            let s2 = t.sum(n);
            t.add(s, s2)
        });
    }

    #[test]
    fn zero_rows_have_zero_gradient() {
        let mut t = Tape::new();
        let v = t.param(DMatrix::zeros(2, 3));
        let n = t.row_norm(v);
        let u = t.row_normalize(v);
        let a = t.sum(n);
        let b = t.sum(u);
        let out = t.add(a, b);
        let g = t.backward(out);
        assert_eq!(g[v.0].as_ref().unwrap(), &DMatrix::zeros(2, 3));
        assert_eq!(t.value(u), &DMatrix::zeros(2, 3));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(DMatrix::from_element(2, 2, 1.0));
        let p = t.param(DMatrix::from_element(2, 2, 2.0));
        let m = t.mul(c, p);
        let s = t.sum(m);
        let g = t.backward(s);
        assert!(g[c.0].is_none());
        assert_eq!(g[p.0].as_ref().unwrap(), &DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn row_major_reshape() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = reshape_row_major(&x, 3, 2);
        assert_eq!(y, DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }
}
