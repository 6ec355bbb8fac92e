// Orders an unordered posterior set against an autoregressive prior with
// Frank-Wolfe and compares with the exhaustive optimum.

use layoutprior::gaussian::{spectral_normalize, AutoregressivePriorParams, DiagonalGaussian};
use layoutprior::matcher::{bruteforce_instance, faq_instance, FaqConfig, QapInstance};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> layoutprior::Result<()> {
    let (n, d) = (5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let transitions = (1..n)
        .map(|_| spectral_normalize(&DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0))))
        .collect::<layoutprior::Result<Vec<_>>>()?;
    let prior = AutoregressivePriorParams {
        mu_first: DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
        var_steps: DMatrix::from_fn(n, d, |_, _| rng.gen_range(0.3..1.5)),
        transitions,
    };
    let q = DiagonalGaussian::new(
        DMatrix::from_fn(n, d, |_, _| rng.gen_range(-2.0..2.0)),
        DMatrix::from_fn(n, d, |_, _| rng.gen_range(0.2..1.0)),
    )?;
    let inst = QapInstance::from_prior(&q, &prior)?;
    let identity: Vec<usize> = (0..n).collect();

    let one = faq_instance(&inst, FaqConfig::default())?;
    let many = faq_instance(&inst, FaqConfig { max_fw_iters: 30, ..FaqConfig::default() })?;
    let best = bruteforce_instance(&inst)?;
    println!("identity KL {:.4}", inst.kl(&identity));
    println!("FAQ (1 step)  KL {:.4} perm {:?}", one.kl, one.perm);
    println!("FAQ (30 steps) KL {:.4} perm {:?}", many.kl, many.perm);
    println!("brute force   KL {:.4} perm {:?}", best.kl, best.perm);
    assert!(one.kl <= inst.kl(&identity) + 1e-12);
    assert!(best.kl <= many.kl + 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
