// A few epochs of primal-dual training on a small synthetic corpus.

use layoutprior::scene::{generate_synthetic_corpus, RoomType};
use layoutprior::training::{train_with, TrainConfig};

pub fn run_example() -> layoutprior::Result<()> {
    let (scenes, _) = generate_synthetic_corpus(0, 16, &[RoomType::Bedroom], 6)?;
    let config = TrainConfig { epochs: 4, batch: 4, head_hidden: 32, ..TrainConfig::default() };
    let (model, report) = train_with(&scenes, &config, |r| {
        println!(
            "epoch {}  elbo {:>9.2}  g1 {:.3}  g2 {:.3}  g3 {:.3}  lambda {:.3} {:.3} {:.3}",
            r.epoch, r.elbo, r.g1, r.g2, r.g3, r.lambda1, r.lambda2, r.lambda3
        )
    })?;
    let first = &report.epochs[0];
    let last = report.last().expect("epochs ran");
    assert!(last.elbo > first.elbo);
    println!("checkpoint holds {} tensors", model.params.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
