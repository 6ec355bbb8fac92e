use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Index, Var};
use crate::error::{Error, Result};
use crate::gaussian::{iid_kl, DiagonalGaussian};
use crate::matcher::{faq_instance, FaqConfig, QapInstance};
use crate::mpgnn::{
    aggregate_vars, complete_pairs, decode_vars, encode_vars, prior_from, prior_vars, Ctx, DecoderVars,
    FurniturePrediction, ModelConfig, PriorMode, SceneInputs,
};
use crate::scene::{discretize_orientation, wall_inward_axis, RoomNodeKind, SceneGraph};

use super::dual::ConstraintState;

/// Per-term reconstruction log-probabilities, summed over nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconTerms {
    pub shape: f64,
    pub orient: f64,
    pub loc: f64,
    pub size: f64,
    pub cat: f64,
}

impl ReconTerms {
    pub fn total(&self) -> f64 {
        self.shape + self.orient + self.loc + self.size + self.cat
    }

    pub fn add(&mut self, o: &ReconTerms) {
        self.shape += o.shape;
        self.orient += o.orient;
        self.loc += o.loc;
        self.size += o.size;
        self.cat += o.cat;
    }

    pub fn scaled(&self, k: f64) -> ReconTerms {
        ReconTerms {
            shape: self.shape * k,
            orient: self.orient * k,
            loc: self.loc * k,
            size: self.size * k,
            cat: self.cat * k,
        }
    }
}

/// Ground truth in the layouts the loss terms consume.
#[derive(Debug, Clone)]
pub struct Targets {
    pub shape: DMatrix<f64>,
    pub orient_onehot: DMatrix<f64>,
    pub loc: DMatrix<f64>,
    pub ln_size: DMatrix<f64>,
    pub cat_onehot: DMatrix<f64>,
    ff: (Index, Index),
    ff_dist: DMatrix<f64>,
    ff_unit: DMatrix<f64>,
    /// Inward wall axes as columns, with per-wall offsets so that the signed
    /// distance of a point `p` is `p·axis − offset`.
    wall_axes: DMatrix<f64>,
    wall_offset: DMatrix<f64>,
    wall_target: DMatrix<f64>,
    centroid_furniture: Index,
    centroid_points: DMatrix<f64>,
    centroid_target: DMatrix<f64>,
    n_rf: usize,
}

impl Targets {
    pub fn from_scene(scene: &SceneGraph) -> Result<Self> {
        let n = scene.n_furniture();
        let d_shape = scene.d_shape();
        let mut shape = DMatrix::zeros(n, d_shape);
        let mut orient_onehot = DMatrix::zeros(n, 4);
        let mut loc = DMatrix::zeros(n, 3);
        let mut ln_size = DMatrix::zeros(n, 3);
        let mut cat_onehot = DMatrix::zeros(n, 7);
        for (i, f) in scene.furniture.iter().enumerate() {
            for (j, v) in f.shape_descriptor.iter().enumerate() {
                shape[(i, j)] = *v;
            }
            let class = discretize_orientation(&f.orientation)
                .map_err(|e| Error::Validation(format!("furniture {i}: {e}")))?;
            orient_onehot[(i, class.index())] = 1.0;
            for k in 0..3 {
                loc[(i, k)] = f.location[k];
                ln_size[(i, k)] = f.size[k].ln();
            }
            cat_onehot[(i, f.super_category.index())] = 1.0;
        }

        let ff = complete_pairs(n);
        let mut ff_dist = DMatrix::zeros(ff.0.len(), 1);
        let mut ff_unit = DMatrix::zeros(ff.0.len(), 3);
        for (k, (&r, &s)) in ff.0.iter().zip(ff.1.iter()).enumerate() {
            let d: Vec<f64> = (0..3).map(|c| loc[(r, c)] - loc[(s, c)]).collect();
            let len = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            ff_dist[(k, 0)] = len;
            if len >= crate::autodiff::NORM_FLOOR {
                for c in 0..3 {
                    ff_unit[(k, c)] = d[c] / len;
                }
            }
        }

        let walls: Vec<_> = scene
            .room_nodes
            .iter()
            .filter(|r| r.kind == RoomNodeKind::Wall)
            .collect();
        let mut wall_axes = DMatrix::zeros(3, walls.len());
        let mut wall_offset = DMatrix::zeros(1, walls.len());
        for (w, wall) in walls.iter().enumerate() {
            let (axis, a) = wall_inward_axis(wall)?;
            for c in 0..3 {
                wall_axes[(c, w)] = axis[c];
            }
            wall_offset[(0, w)] = axis[0] * a[0] + axis[2] * a[1];
        }
        let wall_target = signed_distances(&loc, &wall_axes, &wall_offset);

        let mut cf = Vec::new();
        let mut points = Vec::new();
        for r in 0..n {
            for node in scene.room_nodes.iter().filter(|x| x.kind != RoomNodeKind::Wall) {
                cf.push(r);
                points.push(node.centroid());
            }
        }
        let centroid_points = DMatrix::from_fn(points.len(), 3, |k, c| points[k][c]);
        let centroid_target = DMatrix::from_fn(points.len(), 1, |k, _| {
            (0..3).map(|c| (loc[(cf[k], c)] - points[k][c]).powi(2)).sum::<f64>().sqrt()
        });
        Ok(Targets {
            shape,
            orient_onehot,
            loc,
            ln_size,
            cat_onehot,
            ff,
            ff_dist,
            ff_unit,
            wall_axes,
            wall_offset,
            wall_target,
            centroid_furniture: std::sync::Arc::new(cf),
            centroid_points,
            centroid_target,
            n_rf: n * scene.n_room(),
        })
    }
}

fn signed_distances(loc: &DMatrix<f64>, axes: &DMatrix<f64>, offset: &DMatrix<f64>) -> DMatrix<f64> {
    let mut d = loc * axes;
    for mut row in d.row_iter_mut() {
        row -= offset;
    }
    d
}

/// A scene with its network inputs and loss targets precomputed.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub inputs: SceneInputs,
    pub targets: Targets,
}

impl PreparedScene {
    pub fn new(scene: &SceneGraph) -> Result<Self> {
        Ok(PreparedScene {
            inputs: SceneInputs::from_scene(scene),
            targets: Targets::from_scene(scene)?,
        })
    }

    pub fn n_furniture(&self) -> usize {
        self.inputs.n_furniture
    }
}

/// Tape variables of the five reconstruction terms, each a `1×1` log-prob.
pub struct ReconVars {
    pub shape: Var,
    pub orient: Var,
    pub loc: Var,
    pub size: Var,
    pub cat: Var,
    pub total: Var,
}

fn neg_sq_err(ctx: &mut Ctx, pred: Var, target: &DMatrix<f64>) -> Var {
    let t = ctx.constant(target.clone());
    let d = ctx.tape.sub(pred, t);
    let sq = ctx.tape.square(d);
    let s = ctx.tape.sum(sq);
    ctx.tape.scale(s, -1.0)
}

fn neg_cross_entropy(ctx: &mut Ctx, logp: Var, onehot: &DMatrix<f64>) -> Var {
    let t = ctx.constant(onehot.clone());
    let picked = ctx.tape.mul(logp, t);
    ctx.tape.sum(picked)
}

pub fn recon_vars(ctx: &mut Ctx, d: &DecoderVars, t: &Targets) -> ReconVars {
    let shape = neg_sq_err(ctx, d.shape, &t.shape);
    let orient = neg_cross_entropy(ctx, d.orient_logp, &t.orient_onehot);
    let loc = neg_sq_err(ctx, d.loc, &t.loc);
    let size = neg_sq_err(ctx, d.log_size, &t.ln_size);
    let cat = neg_cross_entropy(ctx, d.cat_logp, &t.cat_onehot);
    let a = ctx.tape.add(shape, orient);
    let b = ctx.tape.add(loc, size);
    let c = ctx.tape.add(a, b);
    let total = ctx.tape.add(c, cat);
    ReconVars {
        shape,
        orient,
        loc,
        size,
        cat,
        total,
    }
}

pub struct ConstraintVars {
    pub g1: Var,
    pub g2: Var,
    pub g3: Var,
}

/// The three constraint functionals of predicted locations `loc` (`n_F×3`).
pub fn constraint_vars(ctx: &mut Ctx, loc: Var, t: &Targets) -> ConstraintVars {
    let (g1, g3) = if t.ff.0.is_empty() {
        (ctx.constant(DMatrix::zeros(1, 1)), ctx.constant(DMatrix::from_element(1, 1, 1.0)))
    } else {
        let a = ctx.tape.gather(loc, &t.ff.0);
        let b = ctx.tape.gather(loc, &t.ff.1);
        let diff = ctx.tape.sub(a, b);
        let dist = ctx.tape.row_norm(diff);
        let target = ctx.constant(t.ff_dist.clone());
        let err = ctx.tape.sub(dist, target);
        let sq = ctx.tape.square(err);
        let g1 = ctx.tape.mean(sq);
        let unit = ctx.tape.row_normalize(diff);
        let gt = ctx.constant(t.ff_unit.clone());
        let dots = ctx.tape.mul(unit, gt);
        let g3 = ctx.tape.sum(dots);
        let g3 = ctx.tape.scale(g3, 1.0 / t.ff.0.len() as f64);
        (g1, g3)
    };

    let mut parts = Vec::new();
    if t.wall_axes.ncols() > 0 {
        let axes = ctx.constant(t.wall_axes.clone());
        let proj = ctx.tape.matmul(loc, axes);
        let off = ctx.constant(-t.wall_offset.clone());
        let signed = ctx.tape.add_row(proj, off);
        let target = ctx.constant(t.wall_target.clone());
        let err = ctx.tape.sub(signed, target);
        let sq = ctx.tape.square(err);
        parts.push(ctx.tape.sum(sq));
    }
    if !t.centroid_furniture.is_empty() {
        let at = ctx.tape.gather(loc, &t.centroid_furniture);
        let pts = ctx.constant(t.centroid_points.clone());
        let diff = ctx.tape.sub(at, pts);
        let dist = ctx.tape.row_norm(diff);
        let target = ctx.constant(t.centroid_target.clone());
        let err = ctx.tape.sub(dist, target);
        let sq = ctx.tape.square(err);
        parts.push(ctx.tape.sum(sq));
    }
    let g2 = match parts.as_slice() {
        [] => ctx.constant(DMatrix::zeros(1, 1)),
        [one] => *one,
        [a, b, ..] => ctx.tape.add(*a, *b),
    };
    let g2 = ctx.tape.scale(g2, 1.0 / t.n_rf as f64);
    ConstraintVars { g1, g2, g3 }
}

/// KL from the diagonal posterior to the autoregressive prior with the
/// posterior node `perm⁻¹[s]` placed in prior slot `s`. Closed form in the
/// conditional parameters; no matrix is inverted.
pub fn ar_kl_vars(
    ctx: &mut Ctx,
    mu: Var,
    logvar: Var,
    mu_first: Var,
    logvar_prior: Var,
    transitions: &[Var],
    perm: &[usize],
) -> Var {
    let n = perm.len();
    let mut inv = vec![0; n];
    for (i, &s) in perm.iter().enumerate() {
        inv[s] = i;
    }
    let inv: Index = std::sync::Arc::new(inv);
    let m = ctx.tape.gather(mu, &inv);
    let lv = ctx.tape.gather(logvar, &inv);
    let v = ctx.tape.exp(lv);

    let mut e0 = DMatrix::zeros(n, 1);
    e0[(0, 0)] = 1.0;
    let e0 = ctx.constant(e0);
    let mut mean = ctx.tape.matmul(e0, mu_first);
    let mut spread = v;
    if n > 1 {
        let mut mean_rows = Vec::with_capacity(n - 1);
        let mut var_rows = Vec::with_capacity(n - 1);
        for (k, a) in transitions.iter().enumerate() {
            let at = ctx.tape.transpose(*a);
            let mk = ctx.tape.slice_rows(m, k, 1);
            mean_rows.push(ctx.tape.matmul(mk, at));
            let a2 = ctx.tape.square(at);
            let vk = ctx.tape.slice_rows(v, k, 1);
            var_rows.push(ctx.tape.matmul(vk, a2));
        }
        let prefix = DMatrix::from_fn(n, n - 1, |i, k| if k < i { 1.0 } else { 0.0 });
        let prefix = ctx.constant(prefix);
        let stacked = ctx.tape.concat_rows(&mean_rows);
        let carried = ctx.tape.matmul(prefix, stacked);
        mean = ctx.tape.add(mean, carried);
        let stacked = ctx.tape.concat_rows(&var_rows);
        let carried = ctx.tape.matmul(prefix, stacked);
        spread = ctx.tape.add(spread, carried);
    }
    let w = ctx.tape.sub(m, mean);
    let w2 = ctx.tape.square(w);
    let num = ctx.tape.add(spread, w2);
    let neg = ctx.tape.scale(logvar_prior, -1.0);
    let inv_s = ctx.tape.exp(neg);
    let ratio = ctx.tape.mul(num, inv_s);
    let a = ctx.tape.add(ratio, logvar_prior);
    let b = ctx.tape.sub(a, lv);
    let total = ctx.tape.sum(b);
    let count = (n * ctx.value(mu).ncols()) as f64;
    let shifted = ctx.tape.offset(total, DMatrix::from_element(1, 1, -count));
    ctx.tape.scale(shifted, 0.5)
}

/// KL to `N(m, exp(lp))` shared by every node; `m`, `lp` are `1×d` rows.
pub fn iid_kl_vars(ctx: &mut Ctx, mu: Var, logvar: Var, m: Var, lp: Var) -> Var {
    let (n, d) = ctx.value(mu).shape();
    let v = ctx.tape.exp(logvar);
    let neg_m = ctx.tape.scale(m, -1.0);
    let diff = ctx.tape.add_row(mu, neg_m);
    let d2 = ctx.tape.square(diff);
    let num = ctx.tape.add(v, d2);
    let neg_lp = ctx.tape.scale(lp, -1.0);
    let inv_s = ctx.tape.exp(neg_lp);
    let ones = ctx.constant(DMatrix::from_element(n, 1, 1.0));
    let inv_s = ctx.tape.matmul(ones, inv_s);
    let lp_rows = ctx.tape.matmul(ones, lp);
    let ratio = ctx.tape.mul(num, inv_s);
    let a = ctx.tape.add(ratio, lp_rows);
    let b = ctx.tape.sub(a, logvar);
    let total = ctx.tape.sum(b);
    let shifted = ctx.tape.offset(total, DMatrix::from_element(1, 1, -((n * d) as f64)));
    ctx.tape.scale(shifted, 0.5)
}

/// How the latent is drawn for one forward pass.
#[derive(Debug, Clone, Copy)]
pub enum LatentDraw<'a> {
    /// `z = μ`
    Mean,
    /// `z = μ + σ ⊙ η` for the given standard-normal noise.
    Noise(&'a DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneEval {
    pub loss: f64,
    pub elbo: f64,
    pub recon: ReconTerms,
    pub kl: f64,
    pub g: [f64; 3],
    /// Prior slot of each posterior node used for the KL term.
    pub perm: Vec<usize>,
}

/// Builds the per-scene Lagrangian on `ctx` and returns its variable.
/// `perm` overrides the matching; otherwise it is found by FAQ and frozen.
pub fn scene_lagrangian(
    ctx: &mut Ctx,
    config: &ModelConfig,
    scene: &PreparedScene,
    draw: LatentDraw,
    duals: &ConstraintState,
    faq: FaqConfig,
    perm: Option<&[usize]>,
) -> Result<(Var, SceneEval)> {
    let n = scene.n_furniture();
    let enc = encode_vars(ctx, config, &scene.inputs);
    let z = match draw {
        LatentDraw::Mean => enc.mu,
        LatentDraw::Noise(eta) => {
            let half = ctx.tape.scale(enc.logvar, 0.5);
            let sd = ctx.tape.exp(half);
            let noise = ctx.constant(eta.clone());
            let scaled = ctx.tape.mul(sd, noise);
            ctx.tape.add(enc.mu, scaled)
        }
    };
    let dec = decode_vars(ctx, config, z, &scene.inputs.room);
    let recon = recon_vars(ctx, &dec, &scene.targets);
    let cons = constraint_vars(ctx, dec.loc, &scene.targets);

    let (kl, perm) = match config.prior_mode {
        PriorMode::Autoregressive => {
            let agg = aggregate_vars(ctx, config, &scene.inputs.room);
            let pv = prior_vars(ctx, config, &agg, n);
            let perm = match perm {
                Some(p) => p.to_vec(),
                None => {
                    let q = DiagonalGaussian::new(ctx.value(enc.mu).clone(), ctx.value(enc.logvar).map(f64::exp))?;
                    let inst = QapInstance::from_prior(&q, &prior_from(ctx, &pv))?;
                    faq_instance(&inst, faq)?.perm
                }
            };
            let kl = ar_kl_vars(ctx, enc.mu, enc.logvar, pv.mu_first, pv.logvar, &pv.transitions, &perm);
            (kl, perm)
        }
        PriorMode::IidLearned => {
            let agg = aggregate_vars(ctx, config, &scene.inputs.room);
            let kl = iid_kl_vars(ctx, enc.mu, enc.logvar, agg.mu_first, agg.logvar_first);
            (kl, (0..n).collect())
        }
        PriorMode::IidStandard => {
            let zero = ctx.constant(DMatrix::zeros(1, config.d_z));
            let kl = iid_kl_vars(ctx, enc.mu, enc.logvar, zero, zero);
            (kl, (0..n).collect())
        }
    };

    let elbo = ctx.tape.sub(recon.total, kl);
    let neg_elbo = ctx.tape.scale(elbo, -1.0);
    let [l1, l2, l3] = duals.lambda;
    let eps = duals.eps;
    let p1 = ctx.tape.scale(cons.g1, l1);
    let p2 = ctx.tape.scale(cons.g2, l2);
    let p3 = ctx.tape.scale(cons.g3, -l3);
    let a = ctx.tape.add(neg_elbo, p1);
    let b = ctx.tape.add(p2, p3);
    let sum = ctx.tape.add(a, b);
    let constant = -l1 * eps - l2 * eps + l3 * (1.0 - eps);
    let loss = ctx.tape.offset(sum, DMatrix::from_element(1, 1, constant));

    let s = |v: Var| ctx.tape.scalar(v);
    let eval = SceneEval {
        loss: s(loss),
        elbo: s(elbo),
        recon: ReconTerms {
            shape: s(recon.shape),
            orient: s(recon.orient),
            loc: s(recon.loc),
            size: s(recon.size),
            cat: s(recon.cat),
        },
        kl: s(kl),
        g: [s(cons.g1), s(cons.g2), s(cons.g3)],
        perm,
    };
    Ok((loss, eval))
}

/// Reconstruction log-probabilities of decoded predictions against a scene.
pub fn reconstruction_log_prob(pred: &[FurniturePrediction], scene: &SceneGraph) -> Result<ReconTerms> {
    if pred.len() != scene.n_furniture() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} furniture nodes",
            pred.len(),
            scene.n_furniture()
        )));
    }
    let mut t = ReconTerms::default();
    for (p, f) in pred.iter().zip(&scene.furniture) {
        if p.shape_mu.len() != f.shape_descriptor.len() {
            return Err(Error::Dimension("shape descriptor length".into()));
        }
        t.shape -= p.shape_mu.iter().zip(&f.shape_descriptor).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let class = discretize_orientation(&f.orientation)?;
        t.orient += p.orient_probs[class.index()].ln();
        t.loc -= (0..3).map(|k| (p.loc_mu[k] - f.location[k]).powi(2)).sum::<f64>();
        t.size -= (0..3).map(|k| (p.log_size_mu[k] - f.size[k].ln()).powi(2)).sum::<f64>();
        t.cat += p.cat_probs[f.super_category.index()].ln();
    }
    Ok(t)
}

/// `(g1, g2, g3)` for predicted locations against the scene's ground truth.
pub fn constraint_values(scene: &SceneGraph, pred: &[FurniturePrediction]) -> Result<(f64, f64, f64)> {
    if pred.len() != scene.n_furniture() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} furniture nodes",
            pred.len(),
            scene.n_furniture()
        )));
    }
    let targets = Targets::from_scene(scene)?;
    let empty = crate::mpgnn::ParamStore::default();
    let mut ctx = Ctx::new(&empty, false);
    let loc = DMatrix::from_fn(pred.len(), 3, |i, k| pred[i].loc_mu[k]);
    let loc = ctx.constant(loc);
    let c = constraint_vars(&mut ctx, loc, &targets);
    Ok((ctx.tape.scalar(c.g1), ctx.tape.scalar(c.g2), ctx.tape.scalar(c.g3)))
}

/// Analytic KL of a posterior to the standard normal, for checks.
pub fn standard_kl(q: &DiagonalGaussian) -> f64 {
    let d = q.dim();
    iid_kl(q, &nalgebra::DVector::zeros(d), &nalgebra::DVector::from_element(d, 1.0))
}
