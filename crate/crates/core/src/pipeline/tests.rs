use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gaussian::joint_log_density;
use crate::mpgnn::{ModelConfig, ModelParameters, PriorMode};
use crate::scene::{
    build_scene_graph, generate_synthetic_corpus, rotate_scene, RoomType, SceneGraph, ShapeDatabase, ShapeEntry,
    SuperCategory,
};

fn corpus(n: usize) -> (Vec<SceneGraph>, ShapeDatabase) {
    generate_synthetic_corpus(11, n, &[RoomType::Bedroom, RoomType::Livingroom], 6).unwrap()
}

fn model(mode: PriorMode, seed: u64) -> ModelParameters {
    let config = ModelConfig {
        head_hidden: 16,
        prior_mode: mode,
        ..ModelConfig::desk(6)
    };
    ModelParameters::init(config, seed).unwrap()
}

fn entry(id: &str, descriptor: Vec<f64>) -> ShapeEntry {
    ShapeEntry {
        asset_id: id.into(),
        category: SuperCategory::Table,
        fine_label: None,
        descriptor,
        size: [1.0; 3],
    }
}

#[test]
fn nearest_shape_exact_and_ties() {
    let db = ShapeDatabase::new(2, vec![entry("b", vec![1.0, 0.0]), entry("a", vec![-1.0, 0.0])]).unwrap();
    assert_eq!(nearest_shape(&[1.0, 0.0], &db).unwrap(), "b");
    assert_eq!(nearest_shape(&[0.0, 0.0], &db).unwrap(), "a");
    assert!(matches!(nearest_shape(&[0.0], &db), Err(crate::Error::Dimension(_))));
    let empty = ShapeDatabase::new(2, vec![]).unwrap();
    assert!(matches!(nearest_shape(&[0.0, 0.0], &empty), Err(crate::Error::Retrieval(_))));
}

#[test]
fn nearest_shape_agrees_with_exhaustive_scan() {
    let (_, db) = corpus(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let q: Vec<f64> = (0..db.d_shape).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut all: Vec<(f64, &str)> = db
            .entries
            .iter()
            .map(|e| (e.descriptor.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), e.asset_id.as_str()))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        assert_eq!(nearest_shape(&q, &db).unwrap(), all[0].1);
    }
}

#[test]
fn synthesize_contract_and_determinism() {
    let (scenes, db) = corpus(2);
    let layout = scenes[0].layout();
    for mode in [PriorMode::Autoregressive, PriorMode::IidStandard, PriorMode::IidLearned] {
        let m = model(mode, 1);
        let a = synthesize(&layout, 5, &m, &db, 9).unwrap();
        assert_eq!(a, synthesize(&layout, 5, &m, &db, 9).unwrap());
        assert_eq!(a.to_json(), synthesize(&layout, 5, &m, &db, 9).unwrap().to_json());
        assert_ne!(a.latents, synthesize(&layout, 5, &m, &db, 10).unwrap().latents);
        assert_eq!(a.scene.n_furniture(), 5);
        assert_eq!(a.asset_ids.len(), 5);
        assert_eq!(a.latents.shape(), (5, 8));
        for (f, id) in a.scene.furniture.iter().zip(&a.asset_ids) {
            f.validate(Some(6)).unwrap();
            assert_eq!(f.shape_descriptor, db.get(id).unwrap().descriptor);
            assert!(f.orientation.iter().filter(|v| v.abs() == 1.0).count() == 1);
        }
    }
    let m = model(PriorMode::Autoregressive, 1);
    assert!(synthesize(&layout, 0, &m, &db, 0).is_err());
    let empty = ShapeDatabase::new(6, vec![]).unwrap();
    assert!(matches!(synthesize(&layout, 2, &m, &empty, 0), Err(crate::Error::Retrieval(_))));
}

#[test]
fn synthesized_scene_json_round_trips() {
    let (scenes, db) = corpus(1);
    let m = model(PriorMode::Autoregressive, 2);
    let s = synthesize(&scenes[0].layout(), 4, &m, &db, 1).unwrap();
    let text = s.to_json();
    let back = SynthesizedScene::from_json(&text).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.to_json(), text);
    assert_eq!(s.provenance.checkpoint_id, checkpoint_id(&m));
    assert_eq!(s.provenance.checkpoint_id.len(), 16);
}

#[test]
fn edit_scene_identity_and_locality() {
    let (scenes, db) = corpus(1);
    let m = model(PriorMode::Autoregressive, 3);
    let s = synthesize(&scenes[0].layout(), 4, &m, &db, 2).unwrap();
    let v = DVector::from_element(8, 1.0 / 8f64.sqrt());
    assert_eq!(edit_scene(&s, 1, &v, 0.0, &m, &db).unwrap(), s);
    let e = edit_scene(&s, 1, &v, 2.0, &m, &db).unwrap();
    for i in [0, 2, 3] {
        assert_eq!(e.latents.row(i), s.latents.row(i));
    }
    assert_ne!(e.latents.row(1), s.latents.row(1));
    assert_eq!(e.scene.room_nodes, s.scene.room_nodes);
    assert!(matches!(edit_scene(&s, 4, &v, 1.0, &m, &db), Err(crate::Error::Index(_))));
}

#[test]
fn latent_db_contract() {
    let (scenes, _) = corpus(5);
    let m = model(PriorMode::Autoregressive, 4);
    let db = build_latent_db(&scenes, &m).unwrap();
    assert_eq!(db.len(), 5);
    for (e, s) in db.entries.iter().zip(&scenes) {
        assert_eq!(e.latents.shape(), (s.n_furniture(), 8));
    }
    assert_eq!(db, build_latent_db(&scenes, &m).unwrap());
    let text = db.to_json();
    assert_eq!(LatentDatabase::from_json(&text).unwrap(), db);
}

#[test]
fn recommend_contract_and_scoring() {
    let (scenes, shapes) = corpus(6);
    let m = model(PriorMode::Autoregressive, 5);
    let db = build_latent_db(&scenes, &m).unwrap();
    let room = scenes[0].layout();
    let all = recommend(&db, &room, &m, &shapes, 100).unwrap();
    assert_eq!(all.len(), 6);
    assert!(all.windows(2).all(|w| w[0].loglik >= w[1].loglik));
    assert_eq!(all, recommend(&db, &room, &m, &shapes, 100).unwrap());
    for r in &all {
        let e = db.entries.iter().find(|e| e.scene_id == r.scene_id).unwrap();
        // explicit reordering: prior slot perm[i] holds stored row i
        let n = e.n_furniture;
        let mut z = DVector::zeros(n * 8);
        for i in 0..n {
            for j in 0..8 {
                z[r.perm[i] * 8 + j] = e.latents[(i, j)];
            }
        }
        let joint = crate::gaussian::assemble_joint(&m.prior(&room, n).unwrap()).unwrap();
        assert!((joint_log_density(&joint, &z).unwrap() - r.loglik).abs() <= 1e-9);
        assert_eq!(r.scene.n_furniture(), n);
    }
    assert_eq!(recommend(&db, &room, &m, &shapes, 2).unwrap()[..], all[..2]);

    let single = LatentDatabase::new(8, vec![db.entries[3].clone()]).unwrap();
    let one = recommend(&single, &room, &m, &shapes, 5).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].scene_id, db.entries[3].scene_id);
    assert!(recommend(&LatentDatabase::new(8, vec![]).unwrap(), &room, &m, &shapes, 1).is_err());
}

fn labelled(id: &str, rows: Vec<[f64; 2]>, cats: Vec<SuperCategory>) -> LatentEntry {
    let n = rows.len();
    LatentEntry {
        scene_id: id.into(),
        room_type: RoomType::Bedroom,
        n_furniture: n,
        latents: DMatrix::from_fn(n, 2, |i, j| rows[i][j]),
        variances: DMatrix::from_element(n, 2, 1.0),
        categories: cats,
    }
}

#[test]
fn class_direction_separable_latents() {
    use SuperCategory::{Bed, Lighting, Table};
    let db = LatentDatabase::new(
        2,
        vec![
            labelled("a", vec![[-1.0, 0.2], [2.0, 1.0]], vec![Bed, Table]),
            labelled("b", vec![[-1.5, -0.1], [3.0, 0.5]], vec![Bed, Table]),
        ],
    )
    .unwrap();
    let v = class_direction(&db, Bed, Table).unwrap();
    assert!((v.norm() - 1.0).abs() <= 1e-9);
    let project = |r: [f64; 2]| r[0] * v[0] + r[1] * v[1];
    assert!(project([2.5, 0.75]) > project([-1.25, 0.05]));
    assert!(matches!(class_direction(&db, Bed, Bed), Err(crate::Error::DegenerateDirection(_))));
    assert!(matches!(class_direction(&db, Bed, Lighting), Err(crate::Error::Data(_))));
}

#[test]
fn category_kl_examples() {
    assert!((discrete_kl(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(discrete_kl(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
    let (scenes, _) = corpus(8);
    assert!(category_kl(&scenes, &scenes).unwrap() <= 1e-4);
    let mut rev = scenes.clone();
    rev.reverse();
    assert_eq!(category_kl(&rev, &scenes).unwrap(), category_kl(&scenes, &scenes).unwrap());
    let beds: Vec<SceneGraph> = scenes.iter().filter(|s| s.room_type == RoomType::Bedroom).cloned().collect();
    let kl = category_kl(&beds, &scenes).unwrap();
    assert!(kl > 1e-3);
    assert!(category_kl(&[], &scenes).is_err());
}

#[test]
fn first_match_rows_are_distributions() {
    let (scenes, _) = corpus(6);
    let m = model(PriorMode::Autoregressive, 6);
    let t = first_match_frequencies(&scenes[..1], &m).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows.values().next().unwrap().iter().filter(|&&x| x == 1.0).count(), 1);
    let t = first_match_frequencies(&scenes, &m).unwrap();
    assert_eq!(t.rows.len(), 2);
    for row in t.rows.values() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    serde_json::from_str::<serde_json::Value>(&t.to_json()).unwrap();
}

fn furniture_rects(svg: &str) -> Vec<[f64; 4]> {
    let doc = roxmltree::Document::parse(svg).unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("rect") && n.attribute("class") == Some("furniture"))
        .map(|n| ["x", "y", "width", "height"].map(|a| n.attribute(a).unwrap().parse().unwrap()))
        .collect()
}

#[test]
fn render_svg_structure_and_rotation() {
    let (scenes, _) = corpus(1);
    let scene = &scenes[0];
    let svg = render_svg(scene);
    assert_eq!(svg, render_svg(scene));
    let rects = furniture_rects(&svg);
    assert_eq!(rects.len(), scene.n_furniture());

    let pivot = scene.layout().pivot();
    let turned = furniture_rects(&render_svg(&rotate_scene(scene, 1).unwrap()));
    for (a, b) in rects.iter().zip(&turned) {
        let (cx, cz) = (a[0] + 0.5 * a[2], a[1] + 0.5 * a[3]);
        // +x goes to +z about the pivot
        let (ex, ez) = (pivot[0] - (cz - pivot[2]), pivot[2] + (cx - pivot[0]));
        assert!((b[0] + 0.5 * b[2] - ex).abs() < 1e-3);
        assert!((b[1] + 0.5 * b[3] - ez).abs() < 1e-3);
        assert!((b[2] - a[3]).abs() < 1e-3 && (b[3] - a[2]).abs() < 1e-3);
    }

    let one = build_scene_graph(scene.room_type, scene.room_nodes.clone(), scene.furniture[..1].to_vec()).unwrap();
    assert_eq!(furniture_rects(&render_svg(&one)).len(), 1);
}
