// Builds a small autoregressive prior, assembles its joint covariance and
// compares sample moments with the closed form.

use layoutprior::gaussian::{
    assemble_joint, gaussian_kl, joint_log_density, sample_autoregressive, spectral_normalize,
    AutoregressivePriorParams, DiagonalGaussian,
};
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> layoutprior::Result<()> {
    let d = 2;
    let a = spectral_normalize(&DMatrix::from_row_slice(2, 2, &[0.8, 0.3, -0.2, 0.5]))?;
    let prior = AutoregressivePriorParams {
        mu_first: DVector::from_vec(vec![1.0, -0.5]),
        var_steps: DMatrix::from_row_slice(3, d, &[1.0, 0.5, 0.3, 0.3, 0.2, 0.4]),
        transitions: vec![a.clone(), a],
    };
    let joint = assemble_joint(&prior)?;
    println!("joint mean {:?}", joint.mu.as_slice());

    let draws = sample_autoregressive(&prior, 20_000, 7)?;
    let mut mean = DVector::zeros(6);
    for z in &draws {
        mean += DVector::from_iterator(6, z.transpose().iter().copied());
    }
    mean /= draws.len() as f64;
    let worst = (&mean - &joint.mu).amax();
    println!("largest mean error over 20000 draws: {worst:.4}");
    assert!(worst < 0.05);

    let z = &draws[0];
    let flat = DVector::from_iterator(6, z.transpose().iter().copied());
    let dense = joint_log_density(&joint, &flat)?;
    let chain = prior.conditional_log_density(z);
    println!("log density: joint {dense:.6}, chain rule {chain:.6}");
    assert!((dense - chain).abs() < 1e-8);

    let q = DiagonalGaussian::new(DMatrix::zeros(3, d), DMatrix::from_element(3, d, 0.5))?;
    println!("KL(q || p) = {:.4}", gaussian_kl(&q.to_joint(), &joint)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
