// Compares tape gradients of the training objective with central
// differences on a few sampled parameters.

use layoutprior::matcher::FaqConfig;
use layoutprior::mpgnn::{grad_check, Ctx, ModelConfig, ModelParameters};
use layoutprior::scene::{generate_synthetic_corpus, RoomType};
use layoutprior::training::{scene_lagrangian, scene_noise, ConstraintState, LatentDraw, PreparedScene};

pub fn run_example() -> layoutprior::Result<()> {
    let config = ModelConfig { head_hidden: 16, ..ModelConfig::desk(6) };
    let model = ModelParameters::init(config, 2)?;
    let (scenes, _) = generate_synthetic_corpus(1, 1, &[RoomType::Bedroom], 6)?;
    let scene = PreparedScene::new(&scenes[0])?;
    let eta = scene_noise(0, 1, 0, scene.n_furniture(), config.d_z);
    let duals = ConstraintState { lambda: [0.5, 0.5, 0.5], eps: 0.1, eta: 0.05 };

    let mut ctx = Ctx::new(&model.params, true);
    let (loss, eval) =
        scene_lagrangian(&mut ctx, &config, &scene, LatentDraw::Noise(&eta), &duals, FaqConfig::default(), None)?;
    let grads = ctx.grads(loss);
    let perm = eval.perm.clone();
    let report = grad_check(
        &model.params,
        &grads,
        |p| {
            let mut c = Ctx::new(p, false);
            let draw = LatentDraw::Noise(&eta);
            let (l, _) = scene_lagrangian(&mut c, &config, &scene, draw, &duals, FaqConfig::default(), Some(&perm))?;
            Ok(c.tape.scalar(l))
        },
        1e-5,
        20,
        3,
    )?;
    for e in report.entries.iter().take(5) {
        println!("{:<18} analytic {:>12.6e} numeric {:>12.6e}", e.name, e.analytic, e.numeric);
    }
    println!("largest relative error {:.2e}", report.max_rel_error);
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
