// Samples furniture for an empty room and renders the result as SVG.

use layoutprior::mpgnn::{ModelConfig, ModelParameters};
use layoutprior::pipeline::{render_svg, synthesize};
use layoutprior::scene::{generate_synthetic_corpus, RoomType};

pub fn run_example() -> layoutprior::Result<()> {
    let (scenes, shapes) = generate_synthetic_corpus(2, 1, &[RoomType::Bedroom], 6)?;
    let model = ModelParameters::init(ModelConfig { head_hidden: 32, ..ModelConfig::desk(6) }, 0)?;
    let room = scenes[0].layout();

    let syn = synthesize(&room, 4, &model, &shapes, 11)?;
    assert_eq!(syn, synthesize(&room, 4, &model, &shapes, 11)?);
    for (f, id) in syn.scene.furniture.iter().zip(&syn.asset_ids) {
        println!("{id:<18} at ({:.2}, {:.2})  facing {:?}", f.location[0], f.location[2], f.orientation);
    }
    let svg = render_svg(&syn.scene);
    println!("svg: {} bytes", svg.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
