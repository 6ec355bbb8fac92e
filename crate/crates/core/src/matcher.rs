//! KL-optimal ordering of a posterior node set against the prior slots.
//!
//! The ordering is a quadratic assignment problem over block permutations.
//! `π[(i, j)] = 1` assigns prior slot `j` to posterior slot `i`, so the
//! permuted prior is `N(π̃ μ₁, π̃ Σ₁ π̃ᵀ)` with `π̃ = π ⊗ I`. With
//! `B = Σ₀ + μ₀μ₀ᵀ` and `Λ = Σ₁⁻¹` the objective is
//!
//! ```text
//! f(π) = Tr(Λ π̃ᵀ B π̃) − 2 Tr(π̃ᵀ μ₀ μ₁ᵀ Λ)
//! ```
//!
//! which equals `2·KL − const` on permutations. [`faq_match`] relaxes it to
//! doubly stochastic matrices and runs Frank-Wolfe from the barycenter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{AutoregressivePriorParams, DiagonalGaussian, JointGaussian};
use crate::lap::{next_permutation, solve_lap};

pub const BRUTEFORCE_MAX_N: usize = 8;
const DS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DoublyStochastic {
    pub m: DMatrix<f64>,
}

impl DoublyStochastic {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "doubly stochastic matrix must be square, got {:?}",
                m.shape()
            )));
        }
        if m.iter().any(|&v| v < -1e-12 || !v.is_finite()) {
            return Err(Error::Validation("negative or non-finite entry".into()));
        }
        for i in 0..m.nrows() {
            let (r, c) = (m.row(i).sum(), m.column(i).sum());
            if (r - 1.0).abs() > DS_TOL || (c - 1.0).abs() > DS_TOL {
                return Err(Error::Validation(format!(
                    "row/column {i} sums to {r}/{c}, expected 1"
                )));
            }
        }
        Ok(DoublyStochastic { m })
    }

    /// The uninformative start `11ᵀ/n`.
    pub fn barycenter(n: usize) -> Self {
        DoublyStochastic {
            m: DMatrix::from_element(n, n, 1.0 / n as f64),
        }
    }

    pub fn from_perm(perm: &[usize]) -> Self {
        DoublyStochastic {
            m: perm_matrix(perm),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationResult {
    /// `perm[i]` is the prior slot of posterior node `i`.
    pub perm: Vec<usize>,
    pub qap_value: f64,
    pub kl: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaqConfig {
    pub max_fw_iters: usize,
    /// Stops once the Frank-Wolfe gap falls below this.
    pub tol: f64,
}

impl Default for FaqConfig {
    fn default() -> Self {
        FaqConfig {
            max_fw_iters: 1,
            tol: 1e-9,
        }
    }
}

/// Relaxed iterates and their objective values, for diagnostics.
#[derive(Debug, Clone)]
pub struct FaqTrace {
    pub iterates: Vec<DoublyStochastic>,
    pub objective: Vec<f64>,
}

/// Precomputed quantities shared by every evaluation on one `(q, p)` pair.
#[derive(Debug, Clone)]
pub struct QapInstance {
    n: usize,
    d: usize,
    mu0: DVector<f64>,
    /// Diagonal of `Σ₀` when the posterior is factorized.
    sigma0_diag: Option<DVector<f64>>,
    sigma0: DMatrix<f64>,
    mu1: DVector<f64>,
    lambda: DMatrix<f64>,
    /// `μ₀ μ₁ᵀ Λ`
    cross: DMatrix<f64>,
    log_det_p: f64,
    log_det_q: f64,
}

impl QapInstance {
    pub fn new(q: &JointGaussian, p: &JointGaussian) -> Result<Self> {
        check_dims(q, p)?;
        let lp = p.cholesky()?;
        let log_det_p = 2.0 * lp.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let lambda = lp.inverse();
        let log_det_q = q.log_det()?;
        let sigma0_diag = is_diagonal(&q.sigma).then(|| q.sigma.diagonal());
        Ok(Self::assemble(
            q.block_dim,
            q.mu.clone(),
            sigma0_diag,
            q.sigma.clone(),
            p.mu.clone(),
            lambda,
            log_det_p,
            log_det_q,
        ))
    }

    /// Builds the instance straight from the prior parameters: the precision
    /// comes from the triangular factorization, so nothing is inverted.
    pub fn from_prior(q: &DiagonalGaussian, p: &AutoregressivePriorParams) -> Result<Self> {
        if q.mu.shape() != p.var_steps.shape() {
            return Err(Error::Dimension(format!(
                "posterior is {:?}, prior is {:?}",
                q.mu.shape(),
                p.var_steps.shape()
            )));
        }
        let (n, d) = q.mu.shape();
        let mut blocks = vec![p.mu_first.clone()];
        let mut carry = DVector::zeros(d);
        for i in 1..n {
            carry += &p.transitions[i - 1] * &blocks[i - 1];
            blocks.push(carry.clone());
        }
        let mu1 = DVector::from_fn(n * d, |k, _| blocks[k / d][k % d]);
        let joint_q = q.to_joint();
        let diag = joint_q.sigma.diagonal();
        Ok(Self::assemble(
            d,
            joint_q.mu,
            Some(diag.clone()),
            joint_q.sigma,
            mu1,
            p.precision(),
            p.var_steps.iter().map(|v| v.ln()).sum(),
            diag.iter().map(|v| v.ln()).sum(),
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        d: usize,
        mu0: DVector<f64>,
        sigma0_diag: Option<DVector<f64>>,
        sigma0: DMatrix<f64>,
        mu1: DVector<f64>,
        lambda: DMatrix<f64>,
        log_det_p: f64,
        log_det_q: f64,
    ) -> Self {
        let cross = &mu0 * (lambda.transpose() * &mu1).transpose();
        QapInstance {
            n: mu0.len() / d,
            d,
            mu0,
            sigma0_diag,
            sigma0,
            mu1,
            lambda,
            cross,
            log_det_p,
            log_det_q,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    /// `B X` for `B = Σ₀ + μ₀μ₀ᵀ`.
    fn b_times(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let rank_one = &self.mu0 * (x.transpose() * &self.mu0).transpose();
        match &self.sigma0_diag {
            Some(diag) => {
                let mut out = x.clone();
                for (r, s) in diag.iter().enumerate() {
                    out.row_mut(r).scale_mut(*s);
                }
                out + rank_one
            }
            None => &self.sigma0 * x + rank_one,
        }
    }

    fn check_pi(&self, pi: &DMatrix<f64>) -> Result<()> {
        if pi.shape() != (self.n, self.n) {
            return Err(Error::Dimension(format!(
                "pi is {:?}, expected ({n}, {n})",
                pi.shape(),
                n = self.n
            )));
        }
        Ok(())
    }

    pub fn objective(&self, pi: &DMatrix<f64>) -> Result<f64> {
        self.check_pi(pi)?;
        let lift = kron_identity(pi, self.d);
        let b_lift = self.b_times(&lift);
        let quad = (&self.lambda * lift.transpose() * b_lift).trace();
        let lin = (lift.transpose() * &self.cross).trace();
        Ok(quad - 2.0 * lin)
    }

    pub fn gradient(&self, pi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_pi(pi)?;
        let lift = kron_identity(pi, self.d);
        let g = self.b_times(&lift) * &self.lambda * 2.0 - &self.cross * 2.0;
        Ok(block_trace(&g, self.d))
    }

    /// Quadratic coefficient of `f` along direction `delta`.
    fn curvature(&self, delta: &DMatrix<f64>) -> f64 {
        let lift = kron_identity(delta, self.d);
        (&self.lambda * lift.transpose() * self.b_times(&lift)).trace()
    }

    /// Exact analytic KL of `q` against the prior permuted by `perm`.
    pub fn kl(&self, perm: &[usize]) -> f64 {
        let (n, d) = (self.n, self.d);
        // posterior reordered into prior-slot order
        let mut inv = vec![0; n];
        for (i, &j) in perm.iter().enumerate() {
            inv[j] = i;
        }
        let idx = |k: usize| inv[k / d] * d + k % d;
        let nd = n * d;
        let diff = DVector::from_fn(nd, |k, _| self.mu1[k] - self.mu0[idx(k)]);
        let trace = match &self.sigma0_diag {
            Some(diag) => (0..nd).map(|k| self.lambda[(k, k)] * diag[idx(k)]).sum(),
            None => {
                let s = DMatrix::from_fn(nd, nd, |a, b| self.sigma0[(idx(a), idx(b))]);
                (&self.lambda * s).trace()
            }
        };
        let quad = diff.dot(&(&self.lambda * &diff));
        0.5 * (trace + quad + self.log_det_p - self.log_det_q - nd as f64)
    }
}

fn check_dims(q: &JointGaussian, p: &JointGaussian) -> Result<()> {
    if q.dim() != p.dim() || q.block_dim != p.block_dim {
        return Err(Error::Dimension(format!(
            "posterior has dimension {} (blocks of {}), prior has {} (blocks of {})",
            q.dim(),
            q.block_dim,
            p.dim(),
            p.block_dim
        )));
    }
    Ok(())
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

pub fn perm_matrix(perm: &[usize]) -> DMatrix<f64> {
    let n = perm.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        m[(i, j)] = 1.0;
    }
    m
}

/// `π ⊗ I_d`.
pub fn kron_identity(pi: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let n = pi.nrows();
    let mut out = DMatrix::zeros(n * d, pi.ncols() * d);
    for i in 0..n {
        for j in 0..pi.ncols() {
            let v = pi[(i, j)];
            if v != 0.0 {
                for k in 0..d {
                    out[(i * d + k, j * d + k)] = v;
                }
            }
        }
    }
    out
}

/// Adjoint of the block lift: entry `(i, j)` is the trace of block `(i, j)`.
pub fn block_trace(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let (r, c) = (a.nrows() / d, a.ncols() / d);
    DMatrix::from_fn(r, c, |i, j| (0..d).map(|k| a[(i * d + k, j * d + k)]).sum())
}

pub fn qap_objective(pi: &DMatrix<f64>, q: &JointGaussian, p: &JointGaussian) -> Result<f64> {
    QapInstance::new(q, p)?.objective(pi)
}

pub fn qap_gradient(pi: &DMatrix<f64>, q: &JointGaussian, p: &JointGaussian) -> Result<DMatrix<f64>> {
    QapInstance::new(q, p)?.gradient(pi)
}

pub fn faq_match(q: &JointGaussian, p: &JointGaussian, config: FaqConfig) -> Result<PermutationResult> {
    faq_instance(&QapInstance::new(q, p)?, config)
}

pub fn faq_instance(inst: &QapInstance, config: FaqConfig) -> Result<PermutationResult> {
    Ok(faq_with_trace(inst, config)?.0)
}

pub fn faq_with_trace(inst: &QapInstance, config: FaqConfig) -> Result<(PermutationResult, FaqTrace)> {
    let n = inst.n;
    let mut pi = DoublyStochastic::barycenter(n).m;
    let mut value = inst.objective(&pi)?;
    let mut trace = FaqTrace {
        iterates: vec![DoublyStochastic { m: pi.clone() }],
        objective: vec![value],
    };
    let mut iterations = 0;
    for _ in 0..config.max_fw_iters {
        let grad = inst.gradient(&pi)?;
        let target = perm_matrix(&solve_lap(&grad)?.perm);
        let delta = target - &pi;
        let slope = grad.component_mul(&delta).sum();
        iterations += 1;
        if slope >= -config.tol {
            break;
        }
        let curv = inst.curvature(&delta);
        let alpha = if curv > 0.0 {
            (-slope / (2.0 * curv)).clamp(0.0, 1.0)
        } else if curv + slope < 0.0 {
            1.0
        } else {
            0.0
        };
        pi += delta * alpha;
        value = inst.objective(&pi)?;
        trace.iterates.push(DoublyStochastic { m: pi.clone() });
        trace.objective.push(value);
        if alpha == 0.0 {
            break;
        }
    }
    let projected = solve_lap(&(-&pi))?.perm;
    let identity: Vec<usize> = (0..n).collect();
    let (kl_faq, kl_id) = (inst.kl(&projected), inst.kl(&identity));
    let perm = if kl_id <= kl_faq + 1e-12 * kl_faq.abs().max(1.0) {
        identity
    } else {
        projected
    };
    let result = PermutationResult {
        qap_value: inst.objective(&perm_matrix(&perm))?,
        kl: inst.kl(&perm),
        perm,
        iterations,
    };
    Ok((result, trace))
}

/// Exact minimizer over all `n!` orderings, ties to the lexicographically
/// smallest permutation.
pub fn match_bruteforce(q: &JointGaussian, p: &JointGaussian) -> Result<PermutationResult> {
    bruteforce_instance(&QapInstance::new(q, p)?)
}

pub fn bruteforce_instance(inst: &QapInstance) -> Result<PermutationResult> {
    let n = inst.n;
    if n > BRUTEFORCE_MAX_N {
        return Err(Error::Size(format!(
            "brute-force matching supports n_F <= {BRUTEFORCE_MAX_N}, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut all = Vec::new();
    loop {
        all.push((inst.kl(&perm), perm.clone()));
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let min = all.iter().map(|(k, _)| *k).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * min.abs().max(1.0);
    let (kl, perm) = all
        .into_iter()
        .find(|(k, _)| *k <= min + tol)
        .expect("at least one permutation");
    Ok(PermutationResult {
        qap_value: inst.objective(&perm_matrix(&perm))?,
        kl,
        perm,
        iterations: 0,
    })
}

/// `PermutationResult` as the `match` subcommand prints it.
pub fn result_to_json(r: &PermutationResult) -> String {
    serde_json::json!({
        "perm": r.perm,
        "kl": r.kl,
        "qap_value": r.qap_value,
        "iterations": r.iterations,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{assemble_joint, gaussian_kl, spectral_normalize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn joint(mu: &[f64], sigma: DMatrix<f64>, d: usize) -> JointGaussian {
        JointGaussian::new(DVector::from_row_slice(mu), sigma, d).unwrap()
    }

    fn random_pair(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (DiagonalGaussian, AutoregressivePriorParams) {
        let q = DiagonalGaussian::new(
            DMatrix::from_fn(n, d, |_, _| rng.gen_range(-2.0..2.0)),
            DMatrix::from_fn(n, d, |_, _| rng.gen_range(0.2..1.5)),
        )
        .unwrap();
        let p = AutoregressivePriorParams {
            mu_first: DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
            var_steps: DMatrix::from_fn(n, d, |_, _| rng.gen_range(0.3..1.5)),
            transitions: (1..n)
                .map(|_| spectral_normalize(&DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0))).unwrap())
                .collect(),
        };
        (q, p)
    }

    #[test]
    fn scalar_objective() {
        let one = DMatrix::identity(1, 1);
        let g = joint(&[1.0], one.clone(), 1);
        assert!((qap_objective(&one, &g, &g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn standard_objective_is_constant() {
        let g = joint(&[0.0; 6], DMatrix::identity(6, 6), 2);
        let mut perm = vec![0, 1, 2];
        loop {
            let f = qap_objective(&perm_matrix(&perm), &g, &g).unwrap();
            assert!((f - 6.0).abs() < 1e-12);
            if !next_permutation(&mut perm) {
                break;
            }
        }
        let pi = DoublyStochastic::barycenter(3).m;
        let grad = qap_gradient(&pi, &g, &g).unwrap();
        assert!((grad - &pi * 4.0).amax() < 1e-12);
    }

    #[test]
    fn block_trace_of_identity() {
        assert_eq!(block_trace(&DMatrix::identity(6, 6), 2), DMatrix::identity(3, 3) * 2.0);
    }

    #[test]
    fn differences_match_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let (q, p) = random_pair(&mut rng, 3, 2);
            let (qj, pj) = (q.to_joint(), assemble_joint(&p).unwrap());
            let mut perm = vec![0, 1, 2];
            let mut rows = Vec::new();
            loop {
                let f = qap_objective(&perm_matrix(&perm), &qj, &pj).unwrap();
                // permuted prior N(π̃μ₁, π̃Σ₁π̃ᵀ)
                let lift = kron_identity(&perm_matrix(&perm), 2);
                let pp = JointGaussian::new(&lift * &pj.mu, &lift * &pj.sigma * lift.transpose(), 2).unwrap();
                rows.push((f, gaussian_kl(&qj, &pp).unwrap()));
                if !next_permutation(&mut perm) {
                    break;
                }
            }
            for a in &rows {
                for b in &rows {
                    assert!(((a.0 - b.0) - 2.0 * (a.1 - b.1)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn instance_from_prior_agrees_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (q, p) = random_pair(&mut rng, 4, 3);
        let fast = QapInstance::from_prior(&q, &p).unwrap();
        let dense = QapInstance::new(&q.to_joint(), &assemble_joint(&p).unwrap()).unwrap();
        let pi = DoublyStochastic::barycenter(4).m;
        assert!((fast.objective(&pi).unwrap() - dense.objective(&pi).unwrap()).abs() < 1e-8);
        assert!((fast.gradient(&pi).unwrap() - dense.gradient(&pi).unwrap()).amax() < 1e-8);
        for perm in [[0, 1, 2, 3], [3, 1, 0, 2]] {
            assert!((fast.kl(&perm) - dense.kl(&perm)).abs() < 1e-8);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (q, p) = random_pair(&mut rng, 3, 2);
        let inst = QapInstance::new(&q.to_joint(), &assemble_joint(&p).unwrap()).unwrap();
        let pi = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(0.0..1.0));
        let g = inst.gradient(&pi).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..3 {
                let mut a = pi.clone();
                a[(i, j)] += h;
                let mut b = pi.clone();
                b[(i, j)] -= h;
                let fd = (inst.objective(&a).unwrap() - inst.objective(&b).unwrap()) / (2.0 * h);
                let rel = (fd - g[(i, j)]).abs() / g[(i, j)].abs().max(1.0);
                assert!(rel < 1e-6, "{rel}");
            }
        }
    }

    #[test]
    fn swap_example() {
        let q = joint(&[0.0, 5.0], DMatrix::identity(2, 2), 1);
        let p = joint(&[5.0, 0.0], DMatrix::identity(2, 2), 1);
        let r = faq_match(&q, &p, FaqConfig::default()).unwrap();
        assert_eq!(r.perm, vec![1, 0]);
        assert!(r.kl.abs() < 1e-12);
        assert_eq!(match_bruteforce(&q, &p).unwrap().perm, vec![1, 0]);
    }

    #[test]
    fn single_node_and_fixed_point() {
        let q = joint(&[0.3, -0.1], DMatrix::identity(2, 2) * 0.5, 2);
        let p = joint(&[0.0, 0.0], DMatrix::identity(2, 2), 2);
        let r = faq_match(&q, &p, FaqConfig::default()).unwrap();
        assert_eq!(r.perm, vec![0]);
        assert!((r.kl - gaussian_kl(&q, &p).unwrap()).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, prior) = random_pair(&mut rng, 4, 2);
        let pj = assemble_joint(&prior).unwrap();
        let r = faq_match(&pj, &pj, FaqConfig::default()).unwrap();
        assert_eq!(r.perm, vec![0, 1, 2, 3]);
        assert!(r.kl.abs() < 1e-9);
    }

    #[test]
    fn symmetric_instance_ties_to_identity() {
        let q = joint(&[1.0; 6], DMatrix::identity(6, 6), 2);
        let p = joint(&[0.0; 6], DMatrix::identity(6, 6), 2);
        assert_eq!(match_bruteforce(&q, &p).unwrap().perm, vec![0, 1, 2]);
    }

    #[test]
    fn faq_is_monotone_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in 2..7 {
            let (q, p) = random_pair(&mut rng, n, 3);
            let inst = QapInstance::from_prior(&q, &p).unwrap();
            let cfg = FaqConfig { max_fw_iters: 30, tol: 1e-12 };
            let (r, trace) = faq_with_trace(&inst, cfg).unwrap();
            for w in trace.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-9);
            }
            for it in &trace.iterates {
                DoublyStochastic::new(it.m.clone()).unwrap();
            }
            assert!(r.kl <= inst.kl(&(0..n).collect::<Vec<_>>()) + 1e-9);
        }
    }

    #[test]
    fn bruteforce_size_limit() {
        let g = joint(&[0.0; 9], DMatrix::identity(9, 9), 1);
        assert!(matches!(match_bruteforce(&g, &g), Err(Error::Size(_))));
    }
}
