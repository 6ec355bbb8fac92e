// Runs the posterior encoder on a scene and on a reordering of its
// furniture; the outputs move with the nodes.

use layoutprior::mpgnn::{ModelConfig, ModelParameters};
use layoutprior::scene::{build_scene_graph, generate_synthetic_corpus, RoomType};

pub fn run_example() -> layoutprior::Result<()> {
    let (scenes, _) = generate_synthetic_corpus(5, 1, &[RoomType::Bedroom], 6)?;
    let scene = &scenes[0];
    let model = ModelParameters::init(ModelConfig { head_hidden: 64, ..ModelConfig::desk(6) }, 0)?;
    println!("{} parameters", model.params.n_scalars());

    let q = model.encode(scene)?;
    let mut reversed = scene.furniture.clone();
    reversed.reverse();
    let swapped = build_scene_graph(scene.room_type, scene.room_nodes.clone(), reversed)?;
    let q2 = model.encode(&swapped)?;
    let n = scene.n_furniture();
    for i in 0..n {
        let gap = (q.mu.row(i) - q2.mu.row(n - 1 - i)).amax();
        assert!(gap < 1e-9);
    }
    println!("posterior means for {n} items follow the reordering");

    let agg = model.room_aggregate(&scene.layout())?;
    println!("first-latent prior mean {:?}", agg.mu_first.as_slice());
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
