//! Block-structured Gaussians: the per-node diagonal posterior, the
//! autoregressive prior, joint assembly, sampling, densities and KL.
//!
//! Latent blocks are 1-based in the math and 0-based here: block `0` is the
//! first latent, drawn from `(mu_first, var_steps[0])`; block `i > 0` has mean
//! `Σ_{k<i} A_k z_k` and variance `var_steps[i]`. Variances are stored, not
//! standard deviations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub const SPECTRAL_MAX_ITERS: usize = 100;
pub const SPECTRAL_TOL: f64 = 1e-10;

/// Factorized posterior: one Gaussian per furniture node, diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    /// `n_F × d_z` means.
    pub mu: DMatrix<f64>,
    /// `n_F × d_z` variances.
    pub var: DMatrix<f64>,
}

impl DiagonalGaussian {
    pub fn new(mu: DMatrix<f64>, var: DMatrix<f64>) -> Result<Self> {
        if mu.shape() != var.shape() {
            return Err(Error::Dimension(format!(
                "mean is {:?} but variance is {:?}",
                mu.shape(),
                var.shape()
            )));
        }
        if mu.iter().chain(var.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("diagonal Gaussian".into()));
        }
        if var.iter().any(|&v| v <= 0.0) {
            return Err(Error::Validation("variances must be positive".into()));
        }
        Ok(DiagonalGaussian { mu, var })
    }

    pub fn n_nodes(&self) -> usize {
        self.mu.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mu.ncols()
    }

    /// Stacks node blocks into one `n_F·d_z` Gaussian with diagonal covariance.
    pub fn to_joint(&self) -> JointGaussian {
        let (n, d) = self.mu.shape();
        let mu = DVector::from_fn(n * d, |k, _| self.mu[(k / d, k % d)]);
        let diag = DVector::from_fn(n * d, |k, _| self.var[(k / d, k % d)]);
        JointGaussian {
            mu,
            sigma: DMatrix::from_diagonal(&diag),
            block_dim: d,
        }
    }

    /// Reorders node blocks: row `i` of the result is row `order[i]` of `self`.
    pub fn reorder(&self, order: &[usize]) -> Self {
        let d = self.dim();
        DiagonalGaussian {
            mu: DMatrix::from_fn(order.len(), d, |i, j| self.mu[(order[i], j)]),
            var: DMatrix::from_fn(order.len(), d, |i, j| self.var[(order[i], j)]),
        }
    }
}

/// Parameters of the autoregressive linear-Gaussian prior.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoregressivePriorParams {
    pub mu_first: DVector<f64>,
    /// `n_F × d_z` conditional variances; row 0 belongs to the first latent.
    pub var_steps: DMatrix<f64>,
    /// `n_F − 1` transition matrices, indexed by source step.
    pub transitions: Vec<DMatrix<f64>>,
}

impl AutoregressivePriorParams {
    pub fn n_nodes(&self) -> usize {
        self.var_steps.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mu_first.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.var_steps.shape();
        if self.mu_first.len() != d {
            return Err(Error::Dimension(format!(
                "mu_first has length {}, expected {d}",
                self.mu_first.len()
            )));
        }
        if n == 0 {
            return Err(Error::Validation("prior has no nodes".into()));
        }
        if self.transitions.len() != n - 1 {
            return Err(Error::Dimension(format!(
                "expected {} transition matrices, got {}",
                n - 1,
                self.transitions.len()
            )));
        }
        if self.var_steps.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation("step variances must be positive".into()));
        }
        for (k, a) in self.transitions.iter().enumerate() {
            if a.shape() != (d, d) {
                return Err(Error::Dimension(format!(
                    "transition {k} is {:?}, expected ({d}, {d})",
                    a.shape()
                )));
            }
            let s = spectral_norm(a)?.value;
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "transition {k} has spectral norm {s}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Strictly block-lower-triangular `L` whose `(i, k)` block is `A_k`.
    pub fn transition_operator(&self) -> DMatrix<f64> {
        let (n, d) = self.var_steps.shape();
        let mut l = DMatrix::zeros(n * d, n * d);
        for i in 1..n {
            for (k, a) in self.transitions.iter().enumerate().take(i) {
                l.view_mut((i * d, k * d), (d, d)).copy_from(a);
            }
        }
        l
    }

    /// Joint precision `(I−L)ᵀ D⁻¹ (I−L)`; needs no inversion.
    pub fn precision(&self) -> DMatrix<f64> {
        let (n, d) = self.var_steps.shape();
        let mut b = DMatrix::identity(n * d, n * d) - self.transition_operator();
        let inv_d = DVector::from_fn(n * d, |k, _| 1.0 / self.var_steps[(k / d, k % d)]);
        let bt = b.transpose();
        for r in 0..n * d {
            b.row_mut(r).scale_mut(inv_d[r]);
        }
        bt * b
    }

    /// Sum of the per-step conditional log densities.
    pub fn conditional_log_density(&self, z: &DMatrix<f64>) -> f64 {
        let (n, d) = self.var_steps.shape();
        let mut total = 0.0;
        let mut carry = DVector::zeros(d);
        for i in 0..n {
            let zi = z.row(i).transpose();
            let mean = if i == 0 {
                self.mu_first.clone()
            } else {
                carry.clone()
            };
            for j in 0..d {
                let v = self.var_steps[(i, j)];
                let r = zi[j] - mean[j];
                total += -0.5 * (LN_2PI + v.ln() + r * r / v);
            }
            if i < n - 1 {
                carry += &self.transitions[i] * zi;
            }
        }
        total
    }
}

/// A dense Gaussian over the stacked `n_F·d_z` latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussian {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub block_dim: usize,
}

/// Debug dump layout: `{"block_dim", "mu": [..], "sigma": [[..], ..]}`.
#[derive(Serialize, Deserialize)]
struct JointRecord {
    block_dim: usize,
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

impl JointGaussian {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, block_dim: usize) -> Result<Self> {
        let n = mu.len();
        if sigma.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "sigma is {:?}, expected ({n}, {n})",
                sigma.shape()
            )));
        }
        if block_dim == 0 || n % block_dim != 0 {
            return Err(Error::Dimension(format!(
                "dimension {n} is not a multiple of block_dim {block_dim}"
            )));
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > 1e-9 * sigma.amax().max(1.0) {
            return Err(Error::Validation(format!(
                "sigma is not symmetric (max asymmetry {asym})"
            )));
        }
        let g = JointGaussian {
            mu,
            sigma,
            block_dim,
        };
        g.cholesky()?;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.mu.len() / self.block_dim
    }

    pub fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.sigma.clone())
            .ok_or_else(|| Error::LinearAlgebra("covariance is not positive definite".into()))
    }

    pub fn precision(&self) -> Result<DMatrix<f64>> {
        Ok(self.cholesky()?.inverse())
    }

    pub fn log_det(&self) -> Result<f64> {
        let l = self.cholesky()?;
        Ok(2.0 * l.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
    }

    /// Applies the block permutation: block `i` of the result is block
    /// `perm[i]` of `self`.
    pub fn permute_blocks(&self, perm: &[usize]) -> JointGaussian {
        let d = self.block_dim;
        let idx = |k: usize| perm[k / d] * d + k % d;
        let n = self.dim();
        JointGaussian {
            mu: DVector::from_fn(n, |k, _| self.mu[idx(k)]),
            sigma: DMatrix::from_fn(n, n, |a, b| self.sigma[(idx(a), idx(b))]),
            block_dim: d,
        }
    }

    pub fn to_json(&self) -> String {
        let rec = JointRecord {
            block_dim: self.block_dim,
            mu: self.mu.iter().copied().collect(),
            sigma: (0..self.dim())
                .map(|r| self.sigma.row(r).iter().copied().collect())
                .collect(),
        };
        serde_json::to_string_pretty(&rec).expect("joint gaussian serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: JointRecord = serde_json::from_str(text)?;
        let n = rec.mu.len();
        if rec.sigma.len() != n || rec.sigma.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("sigma must be {n}x{n}")));
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| rec.sigma[i][j]);
        JointGaussian::new(DVector::from_vec(rec.mu), sigma, rec.block_dim)
    }
}

#[derive(Debug, Clone)]
pub struct SpectralNorm {
    pub value: f64,
    /// Left and right top singular vectors.
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

/// Largest singular value with its singular vectors, by power iteration on
/// `AᵀA` from a fixed start vector. Falls back to a full SVD when the
/// iteration has not converged within the budget.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<SpectralNorm> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix for spectral norm".into()));
    }
    let scale = a.amax();
    if scale == 0.0 {
        return Err(Error::DegenerateMatrix("zero matrix has no direction".into()));
    }
    let n = a.ncols();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v.normalize_mut();
    let ata = a.transpose() * a;
    let mut lambda = 0.0;
    let mut converged = false;
    for _ in 0..SPECTRAL_MAX_ITERS {
        let w = &ata * &v;
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        let next = w / wn;
        let new_lambda = next.dot(&(&ata * &next));
        let shift = (&next - &v).norm();
        v = next;
        let done = (new_lambda - lambda).abs() <= SPECTRAL_TOL * new_lambda && shift <= 1e-8;
        lambda = new_lambda;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        let svd = a.clone().svd(true, true);
        let (i, &s) = svd
            .singular_values
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty");
        let u = svd.u.as_ref().expect("u").column(i).into_owned();
        let v = svd.v_t.as_ref().expect("v_t").row(i).transpose();
        return Ok(SpectralNorm { value: s, u, v });
    }
    let sigma = lambda.sqrt();
    let u = (a * &v) / sigma;
    Ok(SpectralNorm { value: sigma, u, v })
}

pub fn spectral_normalize(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = spectral_norm(a)?;
    Ok(a / s.value)
}

/// Joint mean and covariance of the autoregressive prior:
/// `μ = (I−L)⁻¹ c`, `Σ = (I−L)⁻¹ D (I−L)⁻ᵀ`.
pub fn assemble_joint(p: &AutoregressivePriorParams) -> Result<JointGaussian> {
    p.validate()?;
    let (n, d) = p.var_steps.shape();
    let b = DMatrix::identity(n * d, n * d) - p.transition_operator();
    // unit lower triangular, always invertible
    let t = b
        .solve_lower_triangular(&DMatrix::identity(n * d, n * d))
        .ok_or_else(|| Error::LinearAlgebra("I - L is singular".into()))?;
    let mut c = DVector::zeros(n * d);
    c.rows_mut(0, d).copy_from(&p.mu_first);
    let mu = &t * c;
    let mut td = t.clone();
    for col in 0..n * d {
        td.column_mut(col).scale_mut(p.var_steps[(col / d, col % d)]);
    }
    let mut sigma = td * t.transpose();
    sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(JointGaussian {
        mu,
        sigma,
        block_dim: d,
    })
}

/// Ancestral samples, each `n_F × d_z`.
pub fn sample_autoregressive(
    p: &AutoregressivePriorParams,
    count: usize,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| sample_once(p, &mut rng)).collect())
}

pub(crate) fn sample_once(p: &AutoregressivePriorParams, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (n, d) = p.var_steps.shape();
    let mut z = DMatrix::zeros(n, d);
    let mut carry = DVector::zeros(d);
    for i in 0..n {
        for j in 0..d {
            let eps: f64 = StandardNormal.sample(rng);
            let mean = if i == 0 { p.mu_first[j] } else { carry[j] };
            z[(i, j)] = mean + p.var_steps[(i, j)].sqrt() * eps;
        }
        if i < n - 1 {
            carry += &p.transitions[i] * z.row(i).transpose();
        }
    }
    z
}

pub fn joint_log_density(g: &JointGaussian, z: &DVector<f64>) -> Result<f64> {
    if z.len() != g.dim() {
        return Err(Error::Dimension(format!(
            "point has dimension {}, Gaussian has {}",
            z.len(),
            g.dim()
        )));
    }
    let l = g.cholesky()?;
    let r = z - &g.mu;
    let w = l
        .l_dirty()
        .solve_lower_triangular(&r)
        .ok_or_else(|| Error::LinearAlgebra("triangular solve failed".into()))?;
    let log_det = 2.0 * l.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (g.dim() as f64 * LN_2PI + log_det + w.norm_squared()))
}

/// `KL(q ‖ p)` between two dense Gaussians.
pub fn gaussian_kl(q: &JointGaussian, p: &JointGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::Dimension(format!(
            "KL between dimensions {} and {}",
            q.dim(),
            p.dim()
        )));
    }
    let lp = p.cholesky()?;
    let lq = q.cholesky()?;
    let p_inv = lp.inverse();
    let diff = &p.mu - &q.mu;
    let trace = (&p_inv * &q.sigma).trace();
    let quad = diff.dot(&(&p_inv * &diff));
    let ld_p = 2.0 * lp.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ld_q = 2.0 * lq.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * (trace + quad + ld_p - ld_q - q.dim() as f64))
}

/// Reparameterized draw `mu + sqrt(var) ⊙ η`.
pub fn reparam_sample(q: &DiagonalGaussian, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = standard_normal_matrix(&mut rng, q.n_nodes(), q.dim());
    reparam_with_noise(q, &noise)
}

pub fn reparam_with_noise(q: &DiagonalGaussian, noise: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(q.n_nodes(), q.dim(), |i, j| {
        q.mu[(i, j)] + q.var[(i, j)].sqrt() * noise[(i, j)]
    })
}

pub fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // row-major fill so the stream does not depend on storage order
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Closed-form KL from a diagonal posterior to `N(m, s)` applied to every node.
pub fn iid_kl(q: &DiagonalGaussian, prior_mu: &DVector<f64>, prior_var: &DVector<f64>) -> f64 {
    let mut kl = 0.0;
    for i in 0..q.n_nodes() {
        for j in 0..q.dim() {
            let (m, v) = (q.mu[(i, j)], q.var[(i, j)]);
            let (pm, pv) = (prior_mu[j], prior_var[j]);
            kl += 0.5 * (v / pv + (m - pm).powi(2) / pv - 1.0 + pv.ln() - v.ln());
        }
    }
    kl
}
