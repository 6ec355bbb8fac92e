// Label-frequency divergence between corpora and the first-slot
// category statistics of a model.

use layoutprior::mpgnn::{ModelConfig, ModelParameters};
use layoutprior::pipeline::{category_kl, first_match_frequencies};
use layoutprior::scene::{generate_synthetic_corpus, RoomType, SuperCategory};

pub fn run_example() -> layoutprior::Result<()> {
    let (beds, _) = generate_synthetic_corpus(1, 20, &[RoomType::Bedroom], 6)?;
    let (mixed, _) = generate_synthetic_corpus(1, 20, &[RoomType::Bedroom, RoomType::Livingroom], 6)?;
    println!("KL(beds, beds)  = {:.2e}", category_kl(&beds, &beds)?);
    println!("KL(mixed, beds) = {:.4}", category_kl(&mixed, &beds)?);

    let model = ModelParameters::init(ModelConfig { head_hidden: 32, ..ModelConfig::desk(6) }, 0)?;
    let table = first_match_frequencies(&mixed, &model)?;
    for (room, row) in &table.rows {
        let best = SuperCategory::ALL
            .into_iter()
            .max_by(|a, b| row[a.index()].total_cmp(&row[b.index()]))
            .expect("seven categories");
        println!("{:<10} most often first: {} ({:.2})", room.name(), best.name(), row[best.index()]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
