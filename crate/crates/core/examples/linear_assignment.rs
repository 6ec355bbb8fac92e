// Exact minimum-cost assignment, checked against exhaustive search.

use layoutprior::lap::{lap_bruteforce, solve_lap};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> layoutprior::Result<()> {
    let cost = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
    let a = solve_lap(&cost)?;
    println!("perm {:?} cost {}", a.perm, a.cost);
    assert_eq!(a.cost, 5.0);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=6 {
        let c = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..10.0));
        assert_eq!(solve_lap(&c)?.perm, lap_bruteforce(&c)?.perm);
    }
    println!("hungarian agrees with brute force for n = 1..6");
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
