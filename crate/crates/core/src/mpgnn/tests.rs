use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::scene::{build_scene_graph, generate_synthetic_corpus, RoomType, SceneGraph};

fn small_config() -> ModelConfig {
    ModelConfig {
        head_hidden: 32,
        ..ModelConfig::desk(6)
    }
}

fn scenes(n: usize) -> Vec<SceneGraph> {
    generate_synthetic_corpus(7, n, &[RoomType::Bedroom, RoomType::Livingroom], 6)
        .unwrap()
        .0
}

fn permuted(scene: &SceneGraph, perm: &[usize]) -> SceneGraph {
    let furniture = perm.iter().map(|&i| scene.furniture[i].clone()).collect();
    build_scene_graph(scene.room_type, scene.room_nodes.clone(), furniture).unwrap()
}

fn reversed_rooms(scene: &SceneGraph) -> SceneGraph {
    let mut rooms = scene.room_nodes.clone();
    rooms.reverse();
    build_scene_graph(scene.room_type, rooms, scene.furniture.clone()).unwrap()
}

#[test]
fn attention_normalizes_per_receiver_and_type() {
    let model = ModelParameters::init(small_config(), 1).unwrap();
    let scene = &scenes(1)[0];
    let inputs = SceneInputs::from_scene(scene);
    let mut ctx = Ctx::new(&model.params, false);
    let e = encode_vars(&mut ctx, &model.config, &inputs);
    for layer in &e.attention {
        for (kind, a) in layer {
            let n = match kind.receiver() {
                NodeType::Furniture => inputs.n_furniture,
                NodeType::Room => inputs.room.n_room,
            };
            let recv = match kind {
                EdgeType::FF => &inputs.ff.0,
                EdgeType::RF => &inputs.rf.0,
                EdgeType::RR => &inputs.room.rr.0,
            };
            let mut sums = vec![0.0; n];
            for (k, &r) in recv.iter().enumerate() {
                sums[r] += ctx.value(*a)[(k, 0)];
            }
            for s in sums {
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn zero_weights_pass_nodes_through() {
    let mut model = ModelParameters::init(small_config(), 1).unwrap();
    for (name, m) in model.params.iter_mut() {
        if name.starts_with("enc.l") {
            m.fill(0.0);
        }
    }
    let scene = &scenes(1)[0];
    let inputs = SceneInputs::from_scene(scene);
    let mut ctx = Ctx::new(&model.params, false);
    let xf = ctx.constant(inputs.x_furniture.clone());
    let w = ctx.p("enc.in.F");
    let h = ctx.tape.matmul(xf, w);
    let expected = ctx.value(h).map(|x| x.max(0.0));
    let xr = ctx.constant(inputs.room.x_room.clone());
    let wr = ctx.p("enc.in.R");
    let hr = ctx.tape.matmul(xr, wr);
    let state = GraphState {
        furniture: Some(h),
        room: Some(hr),
        n_furniture: inputs.n_furniture,
        n_room: inputs.room.n_room,
        edges: vec![],
    };
    let (out, _) = mp_layer(&mut ctx, &state, "enc", 0);
    assert_eq!(ctx.value(out.furniture.unwrap()), &expected);
}

#[test]
fn encoder_is_permutation_equivariant() {
    let model = ModelParameters::init(small_config(), 2).unwrap();
    for scene in scenes(4) {
        let n = scene.n_furniture();
        let perm: Vec<usize> = (0..n).rev().collect();
        let a = model.encode(&scene).unwrap();
        let b = model.encode(&permuted(&scene, &perm)).unwrap();
        assert_eq!(a.mu.shape(), (n, 8));
        assert!(a.var.iter().all(|&v| v > 0.0));
        for (i, &p) in perm.iter().enumerate() {
            for j in 0..8 {
                assert!((b.mu[(i, j)] - a.mu[(p, j)]).abs() <= 1e-9);
                assert!((b.var[(i, j)] - a.var[(p, j)]).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn aggregator_ignores_room_order() {
    let model = ModelParameters::init(small_config(), 3).unwrap();
    let scene = &scenes(1)[0];
    let a = model.room_aggregate(&scene.layout()).unwrap();
    let b = model.room_aggregate(&reversed_rooms(scene).layout()).unwrap();
    assert!((&a.x_agg - &b.x_agg).amax() <= 1e-9);
    assert!((&a.mu_first - &b.mu_first).amax() <= 1e-9);
    assert!((&a.var_first - &b.var_first).amax() <= 1e-9);
    assert_eq!((a.x_agg.len(), a.mu_first.len(), a.var_first.len()), (16, 8, 8));
    assert!(a.var_first.iter().all(|&v| v > 0.0));
}

#[test]
fn prior_net_contract() {
    let model = ModelParameters::init(small_config(), 4).unwrap();
    let layout = scenes(1)[0].layout();
    let p = model.prior(&layout, 5).unwrap();
    p.validate().unwrap();
    assert_eq!(p.transitions.len(), 4);
    assert_eq!(p, model.prior(&layout, 5).unwrap());
    assert!(model.prior(&layout, 1).unwrap().transitions.is_empty());
    assert!(model.prior(&layout, 0).is_err());
}

#[test]
fn decoder_contract() {
    let model = ModelParameters::init(small_config(), 5).unwrap();
    let layout = scenes(1)[0].layout();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = DMatrix::from_fn(4, 8, |_, _| rng.gen_range(-1.0..1.0));
    let a = model.decode(&z, &layout).unwrap();
    assert_eq!(a.len(), 4);
    for p in &a {
        assert!((p.orient_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((p.cat_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.orient_probs.iter().chain(p.cat_probs.iter()).all(|&x| x >= 0.0));
        assert_eq!(p.shape_mu.len(), 6);
    }
    assert_eq!(a, model.decode(&z, &layout).unwrap());
    let perm = [2, 0, 3, 1];
    let zp = DMatrix::from_fn(4, 8, |i, j| z[(perm[i], j)]);
    let b = model.decode(&zp, &layout).unwrap();
    for (i, &p) in perm.iter().enumerate() {
        for k in 0..3 {
            assert!((b[i].loc_mu[k] - a[p].loc_mu[k]).abs() <= 1e-9);
        }
        for k in 0..7 {
            assert!((b[i].cat_probs[k] - a[p].cat_probs[k]).abs() <= 1e-9);
        }
    }
    assert!(model.decode(&DMatrix::zeros(2, 3), &layout).is_err());
}

fn encoder_mse(params: &ParamStore, config: &ModelConfig, inputs: &SceneInputs, grads: bool) -> (f64, Option<ParamGrads>) {
    let mut ctx = Ctx::new(params, grads);
    let e = encode_vars(&mut ctx, config, inputs);
    let sq = ctx.tape.square(e.mu);
    let v = ctx.tape.exp(e.logvar);
    let a = ctx.tape.mean(sq);
    let b = ctx.tape.mean(v);
    let out = ctx.tape.add(a, b);
    let value = ctx.tape.scalar(out);
    (value, grads.then(|| ctx.grads(out)))
}

#[test]
fn grad_check_encoder_mse() {
    let config = small_config();
    let model = ModelParameters::init(config, 6).unwrap();
    let inputs = SceneInputs::from_scene(&scenes(1)[0]);
    let (_, g) = encoder_mse(&model.params, &config, &inputs, true);
    let g = g.unwrap();
    // restrict sampling to tensors the loss depends on
    let enc = ParamStore::from_map(
        model
            .params
            .iter()
            .filter(|(n, _)| n.starts_with("enc."))
            .map(|(n, m)| (n.clone(), m.clone()))
            .collect(),
    );
    let report = grad_check(&enc, &g, |p| Ok(encoder_mse(p, &config, &inputs, false).0), 1e-5, 40, 1).unwrap();
    assert!(report.max_rel_error <= 1e-3, "{:?}", report.max_rel_error);

    // a corrupted gradient must be caught
    let mut bad = g.clone();
    for m in bad.values_mut() {
        *m *= 1.5;
    }
    let report = grad_check(&enc, &bad, |p| Ok(encoder_mse(p, &config, &inputs, false).0), 1e-5, 40, 1).unwrap();
    assert!(report.max_rel_error > 1e-3);
}

#[test]
fn grad_check_linear_loss() {
    let mut tensors = std::collections::BTreeMap::new();
    tensors.insert("w".to_string(), DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]));
    let params = ParamStore::from_map(tensors);
    let c = DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -4.0, 2.0]);
    let loss = |p: &ParamStore| Ok(p.get("w").unwrap().component_mul(&c).sum());
    let mut g = ParamGrads::new();
    g.insert("w".into(), c.clone());
    let report = grad_check(&params, &g, loss, 1e-5, 4, 0).unwrap();
    assert!(report.max_rel_error < 1e-9, "{}", report.max_rel_error);
}
