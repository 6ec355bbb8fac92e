use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::standard_normal_matrix;
use crate::matcher::FaqConfig;
use crate::mpgnn::{accumulate, Ctx, ModelConfig, ModelParameters, ParamGrads, ParamStore, PriorMode};
use crate::scene::{rotate_scene, SceneGraph};

use super::dual::{dual_update, ConstraintState};
use super::loss::{scene_lagrangian, LatentDraw, PreparedScene, ReconTerms, SceneEval};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub eta: f64,
    pub eps: f64,
    pub d_z: usize,
    pub d_h: usize,
    pub layers: usize,
    pub head_hidden: usize,
    pub prior_mode: PriorMode,
    pub seed: u64,
    /// Random quarter-turn rotation of every scene each epoch.
    pub augment: bool,
    pub faq_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch: 2,
            lr: 1e-3,
            eta: 0.05,
            eps: 0.1,
            d_z: 8,
            d_h: 16,
            layers: 2,
            head_hidden: 512,
            prior_mode: PriorMode::Autoregressive,
            seed: 0,
            augment: false,
            faq_iters: 1,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, d_shape: usize) -> ModelConfig {
        ModelConfig {
            d_z: self.d_z,
            d_h: self.d_h,
            d_e: self.d_h,
            layers: self.layers,
            d_shape,
            head_hidden: self.head_hidden,
            prior_mode: self.prior_mode,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::Validation("epochs and batch must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Averages over the corpus for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub elbo: f64,
    pub recon: ReconTerms,
    pub kl: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,elbo,recon_shape,recon_orient,recon_loc,recon_size,recon_cat,kl,g1,g2,g3,lambda1,lambda2,lambda3,wall_time_s\n",
        );
        for r in &self.epochs {
            let t = &r.recon;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.epoch, r.elbo, t.shape, t.orient, t.loc, t.size, t.cat, r.kl, r.g1, r.g2, r.g3,
                r.lambda1, r.lambda2, r.lambda3, r.wall_time_s
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Adam with the usual moment decay rates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: BTreeMap<String, DMatrix<f64>>,
    v: BTreeMap<String, DMatrix<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamGrads) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self.m.entry(name.clone()).or_insert_with(|| DMatrix::zeros(g.nrows(), g.ncols()));
            let v = self.v.entry(name.clone()).or_insert_with(|| DMatrix::zeros(g.nrows(), g.ncols()));
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                p[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Seeded noise stream for one scene visit; independent of scheduling.
pub fn scene_noise(seed: u64, epoch: usize, scene: usize, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | scene as u64);
    standard_normal_matrix(&mut rng, rows, cols)
}

/// Loss value, diagnostics and parameter gradients of one scene.
pub fn scene_gradient(
    model: &ModelParameters,
    scene: &PreparedScene,
    draw: LatentDraw,
    duals: &ConstraintState,
    faq: FaqConfig,
) -> Result<(SceneEval, ParamGrads)> {
    let mut ctx = Ctx::new(&model.params, true);
    let (loss, eval) = scene_lagrangian(&mut ctx, &model.config, scene, draw, duals, faq, None)?;
    Ok((eval, ctx.grads(loss)))
}

pub fn scene_forward(
    model: &ModelParameters,
    scene: &PreparedScene,
    draw: LatentDraw,
    duals: &ConstraintState,
    faq: FaqConfig,
) -> Result<SceneEval> {
    let mut ctx = Ctx::new(&model.params, false);
    Ok(scene_lagrangian(&mut ctx, &model.config, scene, draw, duals, faq, None)?.1)
}

/// Mean `(g1, g2, g3)` over a corpus, decoding posterior means.
pub fn evaluate_constraints(model: &ModelParameters, scenes: &[PreparedScene]) -> Result<[f64; 3]> {
    let duals = ConstraintState::new(0.0, 0.0)?;
    let evals: Vec<Result<SceneEval>> = scenes
        .par_iter()
        .map(|s| scene_forward(model, s, LatentDraw::Mean, &duals, FaqConfig::default()))
        .collect();
    let mut g = [0.0; 3];
    for e in evals {
        let e = e?;
        for k in 0..3 {
            g[k] += e.g[k];
        }
    }
    Ok(g.map(|x| x / scenes.len() as f64))
}

pub fn train(corpus: &[SceneGraph], config: &TrainConfig) -> Result<(ModelParameters, TrainReport)> {
    train_with(corpus, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    corpus: &[SceneGraph],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelParameters, TrainReport)> {
    config.validate()?;
    let first = corpus
        .first()
        .ok_or_else(|| Error::Validation("training corpus is empty".into()))?;
    let d_shape = first.d_shape();
    if let Some((i, _)) = corpus.iter().enumerate().find(|(_, s)| s.d_shape() != d_shape) {
        return Err(Error::Validation(format!("scene {i}: descriptor length differs from scene 0")));
    }
    let mut model = ModelParameters::init(config.model_config(d_shape), config.seed)?;
    let mut prepared = prepare_all(corpus)?;
    let mut duals = ConstraintState::new(config.eps, config.eta)?;
    let mut adam = Adam::new(config.lr);
    let faq = FaqConfig {
        max_fw_iters: config.faq_iters,
        ..FaqConfig::default()
    };
    let mut report = TrainReport::default();
    let start = Instant::now();
    let d_z = config.d_z;

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        if config.augment {
            let turns: Vec<u32> = (0..corpus.len()).map(|_| rand::Rng::gen_range(&mut rng, 0..4)).collect();
            let rotated: Result<Vec<SceneGraph>> =
                corpus.iter().zip(&turns).map(|(s, &t)| rotate_scene(s, t)).collect();
            prepared = prepare_all(&rotated?)?;
        }
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        order.shuffle(&mut rng);

        let mut elbo = 0.0;
        let mut kl = 0.0;
        let mut recon = ReconTerms::default();
        for batch in order.chunks(config.batch) {
            let results: Vec<Result<(SceneEval, ParamGrads)>> = batch
                .par_iter()
                .map(|&i| {
                    let n = prepared[i].n_furniture();
                    let eta = scene_noise(config.seed, epoch, i, n, d_z);
                    scene_gradient(&model, &prepared[i], LatentDraw::Noise(&eta), &duals, faq)
                })
                .collect();
            let mut total = ParamGrads::new();
            for (&i, r) in batch.iter().zip(results) {
                let (eval, g) = r?;
                if !eval.loss.is_finite() || g.values().any(|m| m.iter().any(|v| !v.is_finite())) {
                    return Err(Error::NonFiniteLoss { epoch, scene: i });
                }
                elbo += eval.elbo;
                kl += eval.kl;
                recon.add(&eval.recon);
                accumulate(&mut total, &g);
            }
            let k = 1.0 / batch.len() as f64;
            for g in total.values_mut() {
                *g *= k;
            }
            adam.step(&mut model.params, &total);
        }

        let g = evaluate_constraints(&model, &prepared)?;
        duals = dual_update(&duals, g[0], g[1], g[2]);
        let n = prepared.len() as f64;
        let record = EpochRecord {
            epoch,
            elbo: elbo / n,
            recon: recon.scaled(1.0 / n),
            kl: kl / n,
            g1: g[0],
            g2: g[1],
            g3: g[2],
            lambda1: duals.lambda[0],
            lambda2: duals.lambda[1],
            lambda3: duals.lambda[2],
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        report.epochs.push(record);
    }
    Ok((model, report))
}

pub fn prepare_all(corpus: &[SceneGraph]) -> Result<Vec<PreparedScene>> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, s)| PreparedScene::new(s).map_err(|e| Error::Validation(format!("scene {i}: {e}"))))
        .collect()
}

/// ELBO diagnostics of one scene under a seeded reparameterized draw.
pub fn elbo(model: &ModelParameters, scene: &SceneGraph, seed: u64) -> Result<SceneEval> {
    let prepared = PreparedScene::new(scene)?;
    let eta = scene_noise(seed, 0, 0, scene.n_furniture(), model.config.d_z);
    let duals = ConstraintState::new(0.0, 0.0)?;
    scene_forward(model, &prepared, LatentDraw::Noise(&eta), &duals, FaqConfig::default())
}
