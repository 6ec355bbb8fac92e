use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{joint_log_density, DiagonalGaussian};
use crate::matcher::{faq_instance, FaqConfig, QapInstance};
use crate::mpgnn::{ModelParameters, PriorMode};
use crate::scene::{RoomLayout, RoomType, SceneGraph, ShapeDatabase, SuperCategory, SCHEMA_VERSION};

use super::synth::{from_rows, prior_joint, realize, rows};

/// Posterior summary of one corpus scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEntry {
    pub scene_id: String,
    pub room_type: RoomType,
    pub n_furniture: usize,
    /// Posterior means, `n_F × d_z`.
    pub latents: DMatrix<f64>,
    /// Posterior variances; used to order the set against a prior.
    pub variances: DMatrix<f64>,
    /// Category of the furniture node behind each latent row.
    pub categories: Vec<SuperCategory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentDatabase {
    pub d_z: usize,
    pub entries: Vec<LatentEntry>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    scene_id: String,
    room_type: RoomType,
    n_furniture: usize,
    latents: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    categories: Vec<SuperCategory>,
}

#[derive(Serialize, Deserialize)]
struct DbRecord {
    schema_version: u64,
    d_z: usize,
    entries: Vec<EntryRecord>,
}

impl LatentDatabase {
    pub fn new(d_z: usize, entries: Vec<LatentEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.scene_id.as_str()) {
                return Err(Error::Validation(format!("duplicate scene_id '{}'", e.scene_id)));
            }
            let shape = (e.n_furniture, d_z);
            if e.latents.shape() != shape || e.variances.shape() != shape || e.categories.len() != e.n_furniture {
                return Err(Error::Validation(format!("entry '{}' has inconsistent shapes", e.scene_id)));
            }
        }
        Ok(LatentDatabase { d_z, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        let rec = DbRecord {
            schema_version: SCHEMA_VERSION,
            d_z: self.d_z,
            entries: self
                .entries
                .iter()
                .map(|e| EntryRecord {
                    scene_id: e.scene_id.clone(),
                    room_type: e.room_type,
                    n_furniture: e.n_furniture,
                    latents: rows(&e.latents),
                    variances: rows(&e.variances),
                    categories: e.categories.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&rec).expect("latent database serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: DbRecord = serde_json::from_str(text)?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: rec.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        let entries = rec
            .entries
            .into_iter()
            .map(|e| {
                Ok(LatentEntry {
                    scene_id: e.scene_id,
                    room_type: e.room_type,
                    n_furniture: e.n_furniture,
                    latents: from_rows(&e.latents)?,
                    variances: from_rows(&e.variances)?,
                    categories: e.categories,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LatentDatabase::new(rec.d_z, entries)
    }
}

/// Encodes every scene; ids are `scene-NNNN` by corpus position.
pub fn build_latent_db(corpus: &[SceneGraph], params: &ModelParameters) -> Result<LatentDatabase> {
    let entries = corpus
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let q = params.encode(s)?;
            Ok(LatentEntry {
                scene_id: format!("scene-{i:04}"),
                room_type: s.room_type,
                n_furniture: s.n_furniture(),
                latents: q.mu,
                variances: q.var,
                categories: s.furniture.iter().map(|f| f.super_category).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LatentDatabase::new(params.config.d_z, entries)
}

/// Prior slot of every posterior row. Only the autoregressive prior
/// depends on the order; the iid modes keep the identity.
pub fn match_to_prior(q: &DiagonalGaussian, layout: &RoomLayout, params: &ModelParameters) -> Result<Vec<usize>> {
    let n = q.n_nodes();
    match params.config.prior_mode {
        PriorMode::Autoregressive => {
            let prior = params.prior(layout, n)?;
            let inst = QapInstance::from_prior(q, &prior)?;
            Ok(faq_instance(&inst, FaqConfig::default())?.perm)
        }
        PriorMode::IidStandard | PriorMode::IidLearned => Ok((0..n).collect()),
    }
}

/// Rows rearranged so that row `perm[i]` holds row `i`.
pub fn to_prior_order(z: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for (i, &slot) in perm.iter().enumerate() {
        out.set_row(slot, &z.row(i));
    }
    out
}

fn flatten(z: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(z.len(), z.transpose().iter().copied())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub scene_id: String,
    pub loglik: f64,
    /// `perm[i]` is the prior slot of stored latent `i`.
    pub perm: Vec<usize>,
    pub scene: SceneGraph,
    pub asset_ids: Vec<String>,
}

/// Log-density of a stored latent set under the query room's prior.
pub fn score_entry(entry: &LatentEntry, layout: &RoomLayout, params: &ModelParameters) -> Result<(f64, Vec<usize>)> {
    let q = DiagonalGaussian::new(entry.latents.clone(), entry.variances.clone())?;
    let perm = match_to_prior(&q, layout, params)?;
    let joint = prior_joint(params, layout, entry.n_furniture)?;
    let z = to_prior_order(&entry.latents, &perm);
    Ok((joint_log_density(&joint, &flatten(&z))?, perm))
}

/// Top-`k` database entries by prior likelihood, decoded in the query room.
pub fn recommend(
    db: &LatentDatabase,
    layout: &RoomLayout,
    params: &ModelParameters,
    shape_db: &ShapeDatabase,
    k: usize,
) -> Result<Vec<Recommendation>> {
    if db.is_empty() {
        return Err(Error::Validation("latent database is empty".into()));
    }
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if db.d_z != params.config.d_z {
        return Err(Error::Dimension(format!("database d_z {} vs model d_z {}", db.d_z, params.config.d_z)));
    }
    layout.validate()?;
    let scores: Vec<Result<(f64, Vec<usize>)>> =
        db.entries.par_iter().map(|e| score_entry(e, layout, params)).collect();
    let mut ranked = Vec::with_capacity(scores.len());
    for (i, s) in scores.into_iter().enumerate() {
        let (loglik, perm) = s?;
        ranked.push((i, loglik, perm));
    }
    // stable: equal scores keep database order
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
        .into_iter()
        .take(k.min(db.len()))
        .map(|(i, loglik, perm)| {
            let entry = &db.entries[i];
            let z = to_prior_order(&entry.latents, &perm);
            let (scene, asset_ids, _) = realize(params, layout, &z, shape_db)?;
            Ok(Recommendation {
                scene_id: entry.scene_id.clone(),
                loglik,
                perm,
                scene,
                asset_ids,
            })
        })
        .collect()
}

/// Unit direction from the mean latent of category `from` to that of `to`.
pub fn class_direction(db: &LatentDatabase, from: SuperCategory, to: SuperCategory) -> Result<DVector<f64>> {
    let mean = |c: SuperCategory| -> Result<DVector<f64>> {
        let mut sum = DVector::zeros(db.d_z);
        let mut count = 0usize;
        for e in &db.entries {
            for (i, &cat) in e.categories.iter().enumerate() {
                if cat == c {
                    sum += e.latents.row(i).transpose();
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::Data(format!("category '{}' does not occur in the database", c.name())));
        }
        Ok(sum / count as f64)
    };
    let diff = mean(to)? - mean(from)?;
    let n = diff.norm();
    if n < 1e-9 {
        return Err(Error::DegenerateDirection(format!(
            "class means of '{}' and '{}' coincide",
            from.name(),
            to.name()
        )));
    }
    Ok(diff / n)
}
