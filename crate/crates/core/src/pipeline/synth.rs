use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussian::{assemble_joint, sample_autoregressive, standard_normal_matrix, JointGaussian};
use crate::mpgnn::{FurniturePrediction, ModelParameters, PriorMode};
use crate::scene::{
    build_scene_graph, FurnitureNode, OrientationClass, RoomLayout, SceneGraph, SceneRecord, ShapeDatabase,
    SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub checkpoint_id: String,
    pub n_furniture: usize,
}

/// A generated layout together with the latents it was decoded from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedScene {
    pub scene: SceneGraph,
    pub asset_ids: Vec<String>,
    /// `n_F × d_z`
    pub latents: DMatrix<f64>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct SynthRecord {
    schema_version: u64,
    scene: SceneRecord,
    asset_ids: Vec<String>,
    latents: Vec<Vec<f64>>,
    provenance: Provenance,
}

impl SynthesizedScene {
    pub fn layout(&self) -> RoomLayout {
        self.scene.layout()
    }

    pub fn to_json(&self) -> String {
        let rec = SynthRecord {
            schema_version: SCHEMA_VERSION,
            scene: SceneRecord::from_scene(&self.scene),
            asset_ids: self.asset_ids.clone(),
            latents: rows(&self.latents),
            provenance: self.provenance.clone(),
        };
        serde_json::to_string_pretty(&rec).expect("synthesized scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: SynthRecord = serde_json::from_str(text)?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: rec.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        let scene = rec.scene.into_scene()?;
        let latents = from_rows(&rec.latents)?;
        if rec.asset_ids.len() != scene.n_furniture() || latents.nrows() != scene.n_furniture() {
            return Err(Error::Validation(format!(
                "{} furniture, {} asset ids, {} latent rows",
                scene.n_furniture(),
                rec.asset_ids.len(),
                latents.nrows()
            )));
        }
        Ok(SynthesizedScene {
            scene,
            asset_ids: rec.asset_ids,
            latents,
            provenance: rec.provenance,
        })
    }
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::Validation("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

/// Short content hash of a checkpoint.
pub fn checkpoint_id(params: &ModelParameters) -> String {
    let digest = Sha256::digest(params.to_json().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Asset with the smallest ℓ₂ distance; ties go to the smaller asset id.
pub fn nearest_shape<'a>(descriptor: &[f64], db: &'a ShapeDatabase) -> Result<&'a str> {
    if db.is_empty() {
        return Err(Error::Retrieval("shape database is empty".into()));
    }
    if descriptor.len() != db.d_shape {
        return Err(Error::Dimension(format!(
            "descriptor has length {}, database holds {}",
            descriptor.len(),
            db.d_shape
        )));
    }
    let mut best: Option<(f64, &str)> = None;
    for e in &db.entries {
        let d2: f64 = e.descriptor.iter().zip(descriptor).map(|(a, b)| (a - b) * (a - b)).sum();
        let better = match best {
            None => true,
            Some((bd, id)) => d2 < bd || (d2 == bd && e.asset_id.as_str() < id),
        };
        if better {
            best = Some((d2, &e.asset_id));
        }
    }
    Ok(best.expect("database is nonempty").1)
}

/// Dense prior over `n` latents under the model's prior mode.
pub fn prior_joint(params: &ModelParameters, layout: &RoomLayout, n: usize) -> Result<JointGaussian> {
    let d = params.config.d_z;
    match params.config.prior_mode {
        PriorMode::Autoregressive => assemble_joint(&params.prior(layout, n)?),
        PriorMode::IidStandard => JointGaussian::new(DVector::zeros(n * d), DMatrix::identity(n * d, n * d), d),
        PriorMode::IidLearned => {
            let a = params.room_aggregate(layout)?;
            let mu = DVector::from_fn(n * d, |k, _| a.mu_first[k % d]);
            let var = DVector::from_fn(n * d, |k, _| a.var_first[k % d]);
            JointGaussian::new(mu, DMatrix::from_diagonal(&var), d)
        }
    }
}

/// One draw of `n × d_z` latents from the prior.
pub fn sample_prior(params: &ModelParameters, layout: &RoomLayout, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Validation("n_furniture must be at least 1".into()));
    }
    let d = params.config.d_z;
    match params.config.prior_mode {
        PriorMode::Autoregressive => {
            let p = params.prior(layout, n)?;
            Ok(sample_autoregressive(&p, 1, seed)?.remove(0))
        }
        PriorMode::IidStandard => Ok(standard_normal_matrix(&mut ChaCha8Rng::seed_from_u64(seed), n, d)),
        PriorMode::IidLearned => {
            let a = params.room_aggregate(layout)?;
            let eta = standard_normal_matrix(&mut ChaCha8Rng::seed_from_u64(seed), n, d);
            Ok(DMatrix::from_fn(n, d, |i, j| a.mu_first[j] + a.var_first[j].sqrt() * eta[(i, j)]))
        }
    }
}

/// Decodes latents and places the retrieved assets.
pub fn realize(
    params: &ModelParameters,
    layout: &RoomLayout,
    latents: &DMatrix<f64>,
    shape_db: &ShapeDatabase,
) -> Result<(SceneGraph, Vec<String>, Vec<FurniturePrediction>)> {
    if shape_db.is_empty() {
        return Err(Error::Retrieval("shape database is empty".into()));
    }
    let preds = params.decode(latents, layout)?;
    let mut furniture = Vec::with_capacity(preds.len());
    let mut ids = Vec::with_capacity(preds.len());
    for p in &preds {
        let id = nearest_shape(&p.shape_mu, shape_db)?;
        let entry = shape_db.get(id).expect("retrieved id exists");
        furniture.push(FurnitureNode {
            super_category: entry.category,
            fine_label: entry.fine_label.clone(),
            shape_descriptor: entry.descriptor.clone(),
            location: p.loc_mu,
            orientation: OrientationClass::from_index(p.orient_class()).unit_vector(),
            size: p.log_size_mu.map(f64::exp),
        });
        ids.push(id.to_string());
    }
    let scene = build_scene_graph(layout.room_type, layout.room_nodes.clone(), furniture)?;
    Ok((scene, ids, preds))
}

/// Samples the prior for a room and decodes a furnished layout.
pub fn synthesize(
    layout: &RoomLayout,
    n_furniture: usize,
    params: &ModelParameters,
    shape_db: &ShapeDatabase,
    seed: u64,
) -> Result<SynthesizedScene> {
    layout.validate()?;
    if shape_db.is_empty() {
        return Err(Error::Retrieval("shape database is empty".into()));
    }
    let latents = sample_prior(params, layout, n_furniture, seed)?;
    let (scene, asset_ids, _) = realize(params, layout, &latents, shape_db)?;
    Ok(SynthesizedScene {
        scene,
        asset_ids,
        latents,
        provenance: Provenance {
            seed,
            checkpoint_id: checkpoint_id(params),
            n_furniture,
        },
    })
}

/// Moves one latent by `alpha * v` and re-decodes the whole set.
pub fn edit_scene(
    syn: &SynthesizedScene,
    node_index: usize,
    v: &DVector<f64>,
    alpha: f64,
    params: &ModelParameters,
    shape_db: &ShapeDatabase,
) -> Result<SynthesizedScene> {
    let n = syn.latents.nrows();
    if node_index >= n {
        return Err(Error::Index(format!("node {node_index} out of range for {n} furniture")));
    }
    if v.len() != syn.latents.ncols() {
        return Err(Error::Dimension(format!(
            "direction has length {}, latents have {}",
            v.len(),
            syn.latents.ncols()
        )));
    }
    let mut latents = syn.latents.clone();
    for j in 0..v.len() {
        latents[(node_index, j)] += alpha * v[j];
    }
    let layout = syn.layout();
    let (scene, asset_ids, _) = realize(params, &layout, &latents, shape_db)?;
    Ok(SynthesizedScene {
        scene,
        asset_ids,
        latents,
        provenance: syn.provenance.clone(),
    })
}

/// Wall-clock synthesis latency over `repeat` calls with seeds `0..repeat`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub repeat: usize,
    pub n_furniture: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

pub fn bench_synth(
    layout: &RoomLayout,
    n_furniture: usize,
    params: &ModelParameters,
    shape_db: &ShapeDatabase,
    repeat: usize,
) -> Result<BenchReport> {
    if repeat == 0 {
        return Err(Error::Validation("repeat must be at least 1".into()));
    }
    let mut ms = Vec::with_capacity(repeat);
    for seed in 0..repeat as u64 {
        let t = std::time::Instant::now();
        synthesize(layout, n_furniture, params, shape_db, seed)?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(f64::total_cmp);
    let mid = ms.len() / 2;
    let median = if ms.len() % 2 == 1 { ms[mid] } else { 0.5 * (ms[mid - 1] + ms[mid]) };
    Ok(BenchReport {
        repeat,
        n_furniture,
        mean_ms: ms.iter().sum::<f64>() / repeat as f64,
        median_ms: median,
        min_ms: ms[0],
        max_ms: ms[ms.len() - 1],
    })
}
