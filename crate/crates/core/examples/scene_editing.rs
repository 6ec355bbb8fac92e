// Pushes one furniture latent along the direction between two category
// means and re-decodes the room.

use layoutprior::mpgnn::{ModelConfig, ModelParameters};
use layoutprior::pipeline::{build_latent_db, class_direction, edit_scene, synthesize};
use layoutprior::scene::{generate_synthetic_corpus, RoomType, SuperCategory};

pub fn run_example() -> layoutprior::Result<()> {
    let (scenes, shapes) = generate_synthetic_corpus(8, 10, &[RoomType::Bedroom], 6)?;
    let model = ModelParameters::init(ModelConfig { head_hidden: 32, ..ModelConfig::desk(6) }, 2)?;
    let db = build_latent_db(&scenes, &model)?;
    let v = class_direction(&db, SuperCategory::CabinetShelf, SuperCategory::Bed)?;

    let syn = synthesize(&scenes[0].layout(), 4, &model, &shapes, 5)?;
    for alpha in [0.0, 1.0, 2.0, 3.0] {
        let edited = edit_scene(&syn, 0, &v, alpha, &model, &shapes)?;
        println!("alpha {alpha}: node 0 -> {}", edited.asset_ids[0]);
    }
    assert_eq!(edit_scene(&syn, 0, &v, 0.0, &model, &shapes)?, syn);
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
