// Generates synthetic furnished rooms, writes them as JSON and reads them
// back, then rotates one by a quarter turn.

use layoutprior::scene::{generate_synthetic_corpus, parse_corpus, rotate_scene, scene_to_json, RoomType};

pub fn run_example() -> layoutprior::Result<()> {
    let (scenes, shapes) = generate_synthetic_corpus(3, 4, &[RoomType::Bedroom, RoomType::Livingroom], 6)?;
    println!("{} scenes, {} assets", scenes.len(), shapes.entries.len());
    for s in &scenes {
        let labels: Vec<String> = s.furniture.iter().map(|f| f.label()).collect();
        println!("{:<10} {} room nodes  {:?}", s.room_type.name(), s.n_room(), labels);
    }

    let text = scene_to_json(&scenes[0]);
    let back = parse_corpus(&text)?;
    assert_eq!(back[0], scenes[0]);

    let turned = rotate_scene(&scenes[0], 1)?;
    println!(
        "first item at {:?}, after a quarter turn at {:?}",
        scenes[0].furniture[0].location, turned.furniture[0].location
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> layoutprior::Result<()> {
    run_example()
}
