use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gaussian::{assemble_joint, gaussian_kl, iid_kl, DiagonalGaussian, JointGaussian};
use crate::matcher::{kron_identity, perm_matrix, FaqConfig};
use crate::mpgnn::{grad_check, Ctx, FurniturePrediction, ModelConfig, ModelParameters, PriorMode};
use crate::scene::{
    build_scene_graph, discretize_orientation, generate_synthetic_corpus, RoomType, SceneGraph,
};

fn corpus(n: usize) -> Vec<SceneGraph> {
    generate_synthetic_corpus(3, n, &[RoomType::Bedroom], 6).unwrap().0
}

fn config(mode: PriorMode) -> ModelConfig {
    ModelConfig {
        head_hidden: 16,
        prior_mode: mode,
        ..ModelConfig::desk(6)
    }
}

fn perfect(scene: &SceneGraph) -> Vec<FurniturePrediction> {
    scene
        .furniture
        .iter()
        .map(|f| {
            let mut orient = [0.0; 4];
            orient[discretize_orientation(&f.orientation).unwrap().index()] = 1.0;
            let mut cat = [0.0; 7];
            cat[f.super_category.index()] = 1.0;
            FurniturePrediction {
                shape_mu: f.shape_descriptor.clone(),
                orient_probs: orient,
                loc_mu: f.location,
                log_size_mu: f.size.map(f64::ln),
                cat_probs: cat,
            }
        })
        .collect()
}

#[test]
fn reconstruction_examples() {
    let scene = &corpus(1)[0];
    let mut pred = perfect(scene);
    assert_eq!(reconstruction_log_prob(&pred, scene).unwrap().total(), 0.0);
    for p in &mut pred {
        p.orient_probs = [0.25; 4];
    }
    let t = reconstruction_log_prob(&pred, scene).unwrap();
    let n = scene.n_furniture() as f64;
    assert!((t.orient + n * 4f64.ln()).abs() < 1e-12);
    assert_eq!(t.size, 0.0);
    assert!(reconstruction_log_prob(&pred[1..], scene).is_err());
}

#[test]
fn constraint_examples() {
    let scene = &corpus(1)[0];
    let pred = perfect(scene);
    let (g1, g2, g3) = constraint_values(scene, &pred).unwrap();
    assert!(g1.abs() < 1e-12 && g2.abs() < 1e-12 && (g3 - 1.0).abs() < 1e-12);

    // two pieces with their displacement reversed
    let two = build_scene_graph(scene.room_type, scene.room_nodes.clone(), scene.furniture[..2].to_vec()).unwrap();
    let mut pred = perfect(&two);
    let (a, b) = (pred[0].loc_mu, pred[1].loc_mu);
    pred[0].loc_mu = b;
    pred[1].loc_mu = a;
    let (g1, _, g3) = constraint_values(&two, &pred).unwrap();
    assert!((g3 + 1.0).abs() < 1e-12);
    assert!(g1.abs() < 1e-12);

    let one = build_scene_graph(scene.room_type, scene.room_nodes.clone(), scene.furniture[..1].to_vec()).unwrap();
    let (g1, g2, g3) = constraint_values(&one, &perfect(&one)).unwrap();
    assert_eq!((g1, g3), (0.0, 1.0));
    assert!(g2.abs() < 1e-12);

    // coincident predictions are neutral for g3
    let mut pred = perfect(&two);
    pred[1].loc_mu = pred[0].loc_mu;
    let (_, _, g3) = constraint_values(&two, &pred).unwrap();
    assert_eq!(g3, 0.0);
}

fn random_prior(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (DMatrix<f64>, DMatrix<f64>, Vec<DMatrix<f64>>) {
    let mu_first = DMatrix::from_fn(1, d, |_, _| rng.gen_range(-1.0..1.0));
    let logvar = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-0.7..0.7));
    let a = (1..n)
        .map(|_| crate::gaussian::spectral_normalize(&DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0))).unwrap())
        .collect();
    (mu_first, logvar, a)
}

#[test]
fn autoregressive_kl_matches_dense_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let empty = crate::mpgnn::ParamStore::default();
    for n in 1..6 {
        let d = 3;
        let mu = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-2.0..2.0));
        let logvar = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
        let (mf, lp, a) = random_prior(&mut rng, n, d);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        let mut ctx = Ctx::new(&empty, false);
        let (m, l, f, p) = (
            ctx.constant(mu.clone()),
            ctx.constant(logvar.clone()),
            ctx.constant(mf.clone()),
            ctx.constant(lp.clone()),
        );
        let av: Vec<_> = a.iter().map(|x| ctx.constant(x.clone())).collect();
        let kl = ar_kl_vars(&mut ctx, m, l, f, p, &av, &perm);

        let prior = crate::gaussian::AutoregressivePriorParams {
            mu_first: DVector::from_iterator(d, mf.iter().copied()),
            var_steps: lp.map(f64::exp),
            transitions: a,
        };
        let pj = assemble_joint(&prior).unwrap();
        let lift = kron_identity(&perm_matrix(&perm), d);
        let permuted = JointGaussian::new(&lift * &pj.mu, &lift * &pj.sigma * lift.transpose(), d).unwrap();
        let q = DiagonalGaussian::new(mu, logvar.map(f64::exp)).unwrap();
        let dense = gaussian_kl(&q.to_joint(), &permuted).unwrap();
        assert!((ctx.tape.scalar(kl) - dense).abs() < 1e-9 * dense.max(1.0), "n={n}");
    }
}

#[test]
fn iid_kl_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let empty = crate::mpgnn::ParamStore::default();
    let mu = DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-2.0..2.0));
    let logvar = DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
    let m = DMatrix::from_fn(1, 3, |_, _| rng.gen_range(-1.0..1.0));
    let lp = DMatrix::from_fn(1, 3, |_, _| rng.gen_range(-1.0..1.0));
    let mut ctx = Ctx::new(&empty, false);
    let vars = [mu.clone(), logvar.clone(), m.clone(), lp.clone()].map(|x| ctx.constant(x));
    let kl = iid_kl_vars(&mut ctx, vars[0], vars[1], vars[2], vars[3]);
    let q = DiagonalGaussian::new(mu, logvar.map(f64::exp)).unwrap();
    let expected = iid_kl(
        &q,
        &DVector::from_iterator(3, m.iter().copied()),
        &DVector::from_iterator(3, lp.iter().map(|x| x.exp())),
    );
    assert!((ctx.tape.scalar(kl) - expected).abs() < 1e-10);
}

#[test]
fn standard_prior_kl_vanishes_for_standard_posterior() {
    let mut model = ModelParameters::init(config(PriorMode::IidStandard), 1).unwrap();
    for name in ["enc.mu.W", "enc.mu.b", "enc.sigma.W", "enc.sigma.b"] {
        model.params.get_mut(name).unwrap().fill(0.0);
    }
    let e = elbo(&model, &corpus(1)[0], 3).unwrap();
    assert!(e.kl.abs() < 1e-12);
    let q = model.encode(&corpus(1)[0]).unwrap();
    assert!(standard_kl(&q).abs() < 1e-12);
}

#[test]
fn single_node_kl_is_direct() {
    let model = ModelParameters::init(config(PriorMode::Autoregressive), 2).unwrap();
    let scene = &corpus(1)[0];
    let one = build_scene_graph(scene.room_type, scene.room_nodes.clone(), scene.furniture[..1].to_vec()).unwrap();
    let e = elbo(&model, &one, 0).unwrap();
    let q = model.encode(&one).unwrap();
    let p = assemble_joint(&model.prior(&one.layout(), 1).unwrap()).unwrap();
    assert!((e.kl - gaussian_kl(&q.to_joint(), &p).unwrap()).abs() < 1e-9);
}

#[test]
fn faq_kl_never_exceeds_identity() {
    let model = ModelParameters::init(config(PriorMode::Autoregressive), 3).unwrap();
    for scene in corpus(20) {
        let e = elbo(&model, &scene, 0).unwrap();
        let q = model.encode(&scene).unwrap();
        let prior = model.prior(&scene.layout(), scene.n_furniture()).unwrap();
        let inst = crate::matcher::QapInstance::from_prior(&q, &prior).unwrap();
        let ident: Vec<usize> = (0..scene.n_furniture()).collect();
        assert!(e.kl >= -1e-9);
        assert!(e.kl <= inst.kl(&ident) + 1e-9);
    }
}

#[test]
fn lagrangian_gradient_matches_finite_differences() {
    let cfg = config(PriorMode::Autoregressive);
    let model = ModelParameters::init(cfg, 4).unwrap();
    let prepared = PreparedScene::new(&corpus(2)[1]).unwrap();
    let eta = scene_noise(1, 1, 0, prepared.n_furniture(), cfg.d_z);
    let duals = ConstraintState {
        lambda: [0.7, 0.3, 1.1],
        eps: 0.1,
        eta: 0.05,
    };
    let mut ctx = Ctx::new(&model.params, true);
    let (loss, eval) =
        scene_lagrangian(&mut ctx, &cfg, &prepared, LatentDraw::Noise(&eta), &duals, FaqConfig::default(), None)
            .unwrap();
    let grads = ctx.grads(loss);
    let perm = eval.perm.clone();
    let f = |p: &crate::mpgnn::ParamStore| {
        let mut c = Ctx::new(p, false);
        let (l, _) = scene_lagrangian(&mut c, &cfg, &prepared, LatentDraw::Noise(&eta), &duals, FaqConfig::default(), Some(&perm))?;
        Ok(c.tape.scalar(l))
    };
    let report = grad_check(&model.params, &grads, f, 1e-5, 60, 7).unwrap();
    // the loss is O(100), so central differences carry ~1e-7 of rounding
    for e in &report.entries {
        assert!((e.analytic - e.numeric).abs() <= 1e-3 * e.analytic.abs().max(e.numeric.abs()) + 1e-6, "{e:?}");
    }
    assert!(report.entries.iter().filter(|e| e.analytic.abs() > 1e-3).count() > 10);
}

#[test]
fn training_is_deterministic_and_frozen_duals_stay_zero() {
    let scenes = corpus(6);
    let cfg = TrainConfig {
        epochs: 2,
        batch: 4,
        head_hidden: 16,
        ..TrainConfig::default()
    };
    let (a, ra) = train(&scenes, &cfg).unwrap();
    let (b, _) = train(&scenes, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(ra.epochs.len(), 2);
    assert!(ra.to_csv().lines().count() == 3);

    let frozen = TrainConfig { eta: 0.0, ..cfg };
    let (_, r) = train(&scenes, &frozen).unwrap();
    assert!(r.epochs.iter().all(|e| e.lambda1 == 0.0 && e.lambda2 == 0.0 && e.lambda3 == 0.0));
    assert!(train(&[], &cfg).is_err());
}
