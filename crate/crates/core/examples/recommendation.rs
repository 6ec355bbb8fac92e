// Encodes a corpus into a latent database and ranks its entries by
// likelihood under the prior of a query room.

use layoutprior::mpgnn::{ModelConfig, ModelParameters};
use layoutprior::pipeline::{build_latent_db, recommend};
use layoutprior::scene::{generate_synthetic_corpus, RoomType};

pub fn run_example() -> layoutprior::Result<()> {
    let (scenes, shapes) = generate_synthetic_corpus(6, 8, &[RoomType::Bedroom], 6)?;
    let model = ModelParameters::init(ModelConfig { head_hidden: 32, ..ModelConfig::desk(6) }, 1)?;
    let db = build_latent_db(&scenes, &model)?;
    let room = scenes[0].layout();
    let top = recommend(&db, &room, &model, &shapes, 3)?;
    for r in &top {
        println!("{}  loglik {:>9.3}  {} items", r.scene_id, r.loglik, r.scene.n_furniture());
    }
    assert!(top.windows(2).all(|w| w[0].loglik >= w[1].loglik));
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
