use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mpgnn::ModelParameters;
use crate::scene::{RoomType, SceneGraph, SuperCategory};

use super::latent_db::match_to_prior;

/// Added to every count before normalizing so that labels missing on one
/// side keep the divergence finite.
pub const KL_SMOOTHING: f64 = 1e-6;

/// `Σ p ln(p / q)` over two aligned probability vectors; `0 ln 0 = 0`.
pub fn discrete_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("{} vs {} outcomes", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl)
}

/// Furniture label counts over a corpus.
pub fn label_counts(corpus: &[SceneGraph]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in corpus {
        for f in &s.furniture {
            *counts.entry(f.label()).or_insert(0) += 1;
        }
    }
    counts
}

fn smoothed(counts: &BTreeMap<String, usize>, labels: &[&String]) -> Vec<f64> {
    let raw: Vec<f64> = labels
        .iter()
        .map(|l| counts.get(*l).copied().unwrap_or(0) as f64 + KL_SMOOTHING)
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|c| c / total).collect()
}

/// Divergence of the generated label distribution from the reference one,
/// `KL(reference ‖ generated)`.
pub fn category_kl(generated: &[SceneGraph], reference: &[SceneGraph]) -> Result<f64> {
    let g = label_counts(generated);
    let r = label_counts(reference);
    if g.is_empty() || r.is_empty() {
        return Err(Error::Validation("both corpora need at least one furniture item".into()));
    }
    let mut labels: Vec<&String> = g.keys().chain(r.keys()).collect();
    labels.sort();
    labels.dedup();
    discrete_kl(&smoothed(&r, &labels), &smoothed(&g, &labels))
}

/// Per room type, how often each category lands in the first prior slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstMatchTable {
    pub rows: BTreeMap<RoomType, [f64; SuperCategory::COUNT]>,
    pub scenes: BTreeMap<RoomType, usize>,
}

impl FirstMatchTable {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::Map::new();
        for (t, row) in &self.rows {
            let mut cats = serde_json::Map::new();
            for c in SuperCategory::ALL {
                cats.insert(c.name().to_string(), row[c.index()].into());
            }
            let mut entry = serde_json::Map::new();
            entry.insert("scenes".into(), self.scenes[t].into());
            entry.insert("frequencies".into(), cats.into());
            out.insert(t.name().to_string(), entry.into());
        }
        serde_json::to_string_pretty(&out).expect("table serializes")
    }
}

pub fn first_match_frequencies(corpus: &[SceneGraph], params: &ModelParameters) -> Result<FirstMatchTable> {
    let mut counts: BTreeMap<RoomType, [usize; SuperCategory::COUNT]> = BTreeMap::new();
    for scene in corpus {
        let q = params.encode(scene)?;
        let perm = match_to_prior(&q, &scene.layout(), params)?;
        let first = perm.iter().position(|&slot| slot == 0).expect("perm is a permutation");
        let cat = scene.furniture[first].super_category;
        counts.entry(scene.room_type).or_default()[cat.index()] += 1;
    }
    let mut rows = BTreeMap::new();
    let mut scenes = BTreeMap::new();
    for (t, c) in counts {
        let total: usize = c.iter().sum();
        rows.insert(t, c.map(|x| x as f64 / total as f64));
        scenes.insert(t, total);
    }
    Ok(FirstMatchTable { rows, scenes })
}
