use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::params::{ParamGrads, ParamStore};

/// Denominator floor for the relative error, so that near-zero gradients
/// are compared on an absolute scale.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries: Vec<GradCheckEntry>,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compares `analytic` against central differences of `loss` on `samples`
/// distinct scalar parameters drawn with `seed`.
pub fn grad_check<F>(
    params: &ParamStore,
    analytic: &ParamGrads,
    loss: F,
    step: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    let index: Vec<(String, usize, usize)> = params
        .iter()
        .flat_map(|(name, m)| {
            (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| (name.clone(), i, j)))
        })
        .collect();
    if index.is_empty() {
        return Err(Error::Validation("no parameters to check".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = std::collections::BTreeSet::new();
    let want = samples.min(index.len());
    while picked.len() < want {
        picked.insert(rng.gen_range(0..index.len()));
    }
    let mut entries = Vec::with_capacity(want);
    let mut work = params.clone();
    for k in picked {
        let (name, i, j) = &index[k];
        let base = params.get(name).expect("indexed tensor")[(*i, *j)];
        let mut eval = |x: f64| -> Result<f64> {
            work.get_mut(name).expect("indexed tensor")[(*i, *j)] = x;
            let v = loss(&work)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("loss at {name}[{i},{j}]")));
            }
            Ok(v)
        };
        let numeric = (eval(base + step)? - eval(base - step)?) / (2.0 * step);
        work.get_mut(name).expect("indexed tensor")[(*i, *j)] = base;
        let a = analytic.get(name).map_or(0.0, |g| g[(*i, *j)]);
        entries.push(GradCheckEntry {
            name: name.clone(),
            row: *i,
            col: *j,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric),
        });
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        entries,
    })
}
