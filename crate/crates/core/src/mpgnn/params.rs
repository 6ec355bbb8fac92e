use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{furniture_dim, D_FF, D_RF, D_ROOM, D_RR};

use super::layer::{EdgeType, NodeType};

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    Autoregressive,
    IidStandard,
    IidLearned,
}

impl PriorMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "autoregressive" => Ok(PriorMode::Autoregressive),
            "iid-standard" => Ok(PriorMode::IidStandard),
            "iid-learned" => Ok(PriorMode::IidLearned),
            other => Err(Error::Validation(format!("unknown prior mode '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PriorMode::Autoregressive => "autoregressive",
            PriorMode::IidStandard => "iid-standard",
            PriorMode::IidLearned => "iid-learned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_z: usize,
    pub d_h: usize,
    pub d_e: usize,
    pub layers: usize,
    pub d_shape: usize,
    /// Width of the size and category head MLPs.
    pub head_hidden: usize,
    pub prior_mode: PriorMode,
}

impl ModelConfig {
    pub fn desk(d_shape: usize) -> Self {
        ModelConfig {
            d_z: 8,
            d_h: 16,
            d_e: 16,
            layers: 2,
            d_shape,
            head_hidden: 512,
            prior_mode: PriorMode::Autoregressive,
        }
    }

    pub fn rnn_hidden(&self) -> usize {
        (self.d_z * self.d_z).min(256)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_z", self.d_z),
            ("d_h", self.d_h),
            ("d_e", self.d_e),
            ("layers", self.layers),
            ("d_shape", self.d_shape),
            ("head_hidden", self.head_hidden),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Every trainable tensor with its shape and whether it is a bias.
    pub fn tensor_shapes(&self) -> Vec<(String, usize, usize, bool)> {
        let mut out = Vec::new();
        let (dz, dh) = (self.d_z, self.d_h);
        let fdim = furniture_dim(self.d_shape);
        gnn_shapes(
            &mut out,
            self,
            "enc",
            &[(NodeType::Furniture, fdim), (NodeType::Room, D_ROOM)],
            &[(EdgeType::FF, D_FF), (EdgeType::RF, D_RF), (EdgeType::RR, D_RR)],
        );
        linear(&mut out, "enc.mu", dh, dz);
        linear(&mut out, "enc.sigma", dh, dz);

        gnn_shapes(&mut out, self, "agg", &[(NodeType::Room, D_ROOM)], &[(EdgeType::RR, D_RR)]);
        linear(&mut out, "agg.mlp1", dh, dh);
        linear(&mut out, "agg.mlp2", dh, 2 * dz);

        let h = self.rnn_hidden();
        linear(&mut out, "prior.h0", dh, h);
        linear(&mut out, "prior.gru_x", dh, 3 * h);
        linear(&mut out, "prior.gru_h", h, 3 * h);
        linear(&mut out, "prior.A", h, dz * dz);
        linear(&mut out, "prior.logvar", h, dz);

        gnn_shapes(
            &mut out,
            self,
            "dec",
            &[(NodeType::Furniture, dz), (NodeType::Room, D_ROOM)],
            &[(EdgeType::FF, 2 * dz), (EdgeType::RF, 2 * dz), (EdgeType::RR, D_RR)],
        );
        out.push(("dec.P".into(), D_ROOM, dz, false));
        linear(&mut out, "dec.shape", dh, self.d_shape);
        linear(&mut out, "dec.orient", dh, 4);
        linear(&mut out, "dec.loc", dh, 3);
        linear(&mut out, "dec.size1", self.d_shape, self.head_hidden);
        linear(&mut out, "dec.size2", self.head_hidden, 3);
        linear(&mut out, "dec.cat1", self.d_shape, self.head_hidden);
        linear(&mut out, "dec.cat2", self.head_hidden, 7);
        out
    }
}

fn linear(out: &mut Vec<(String, usize, usize, bool)>, name: &str, fan_in: usize, fan_out: usize) {
    out.push((format!("{name}.W"), fan_in, fan_out, false));
    out.push((format!("{name}.b"), 1, fan_out, true));
}

fn gnn_shapes(
    out: &mut Vec<(String, usize, usize, bool)>,
    c: &ModelConfig,
    prefix: &str,
    nodes: &[(NodeType, usize)],
    edges: &[(EdgeType, usize)],
) {
    for (nu, dim) in nodes {
        out.push((format!("{prefix}.in.{}", nu.tag()), *dim, c.d_h, false));
    }
    for (eps, dim) in edges {
        out.push((format!("{prefix}.edge_in.{}", eps.tag()), *dim, c.d_e, false));
    }
    for l in 0..c.layers {
        for (nu, _) in nodes {
            out.push((format!("{prefix}.l{l}.W_r.{}", nu.tag()), c.d_h, c.d_h, false));
            out.push((format!("{prefix}.l{l}.W_s.{}", nu.tag()), c.d_h, c.d_h, false));
        }
        for (eps, _) in edges {
            let t = eps.tag();
            out.push((format!("{prefix}.l{l}.w_a.{t}"), 2 * c.d_h + c.d_e, 1, false));
            out.push((format!("{prefix}.l{l}.W_rs.{t}"), c.d_e, c.d_e, false));
            out.push((format!("{prefix}.l{l}.U_edge.{t}"), c.d_h, c.d_e, false));
            out.push((format!("{prefix}.l{l}.U_node.{t}"), c.d_e, c.d_h, false));
        }
    }
}

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    tensors: BTreeMap<String, DMatrix<f64>>,
}

pub type ParamGrads = BTreeMap<String, DMatrix<f64>>;

impl ParamStore {
    /// Glorot-uniform weights and zero biases, drawn in name order.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut shapes = config.tensor_shapes();
        shapes.sort_by(|a, b| a.0.cmp(&b.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, r, c, bias) in shapes {
            let m = if bias {
                DMatrix::zeros(r, c)
            } else {
                let limit = (6.0 / (r + c) as f64).sqrt();
                let mut m = DMatrix::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        m[(i, j)] = rng.gen_range(-limit..limit);
                    }
                }
                m
            };
            tensors.insert(name, m);
        }
        Ok(ParamStore { tensors })
    }

    pub fn from_map(tensors: BTreeMap<String, DMatrix<f64>>) -> Self {
        ParamStore { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DMatrix<f64>> {
        self.tensors.get_mut(name)
    }

    pub(crate) fn entry(&self, name: &str) -> (&str, &DMatrix<f64>) {
        match self.tensors.get_key_value(name) {
            Some((k, v)) => (k.as_str(), v),
            None => panic!("missing parameter tensor '{name}'"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &DMatrix<f64>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut DMatrix<f64>)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(|m| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(|m| m.iter().all(|v| v.is_finite()))
    }

    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let shapes = config.tensor_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(Error::Dimension(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                self.tensors.len()
            )));
        }
        for (name, r, c, _) in shapes {
            match self.tensors.get(&name) {
                None => return Err(Error::Data(format!("missing tensor '{name}'"))),
                Some(m) if m.shape() != (r, c) => {
                    return Err(Error::Dimension(format!(
                        "tensor '{name}' is {:?}, expected ({r}, {c})",
                        m.shape()
                    )))
                }
                _ => {}
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("parameter tensors".into()));
        }
        Ok(())
    }
}

/// Adds `src` into `dst`, tensor by tensor.
pub fn accumulate(dst: &mut ParamGrads, src: &ParamGrads) {
    for (name, g) in src {
        match dst.get_mut(name) {
            Some(d) => *d += g,
            None => {
                dst.insert(name.clone(), g.clone());
            }
        }
    }
}

/// Trained weights with the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointRecord {
    version: u64,
    config: ModelConfig,
    tensors: BTreeMap<String, TensorRecord>,
}

impl ModelParameters {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(ModelParameters {
            params: ParamStore::init(&config, seed)?,
            config,
        })
    }

    pub fn to_json(&self) -> String {
        let tensors = self
            .params
            .iter()
            .map(|(name, m)| {
                let data = (0..m.nrows())
                    .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
                    .map(|(i, j)| m[(i, j)])
                    .collect();
                (
                    name.clone(),
                    TensorRecord {
                        shape: [m.nrows(), m.ncols()],
                        data,
                    },
                )
            })
            .collect();
        let rec = CheckpointRecord {
            version: CHECKPOINT_VERSION,
            config: self.config,
            tensors,
        };
        serde_json::to_string(&rec).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != CHECKPOINT_VERSION {
            return Err(Error::SchemaVersion {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let rec: CheckpointRecord = serde_json::from_value(value)?;
        rec.config.validate()?;
        let mut tensors = BTreeMap::new();
        for (name, t) in rec.tensors {
            let [r, c] = t.shape;
            if t.data.len() != r * c {
                return Err(Error::Dimension(format!(
                    "tensor '{name}' declares {r}x{c} but holds {} values",
                    t.data.len()
                )));
            }
            tensors.insert(name, DMatrix::from_row_slice(r, c, &t.data));
        }
        let params = ParamStore::from_map(tensors);
        params.check_against(&rec.config)?;
        Ok(ModelParameters {
            config: rec.config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_complete() {
        let c = ModelConfig::desk(16);
        let a = ParamStore::init(&c, 3).unwrap();
        assert_eq!(a, ParamStore::init(&c, 3).unwrap());
        assert_ne!(a, ParamStore::init(&c, 4).unwrap());
        a.check_against(&c).unwrap();
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = ModelParameters::init(ModelConfig::desk(4), 9).unwrap();
        let text = m.to_json();
        let back = ModelParameters::from_json(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(text, back.to_json());
    }

    #[test]
    fn checkpoint_rejects_bad_version_and_shapes() {
        let m = ModelParameters::init(ModelConfig::desk(4), 9).unwrap();
        let text = m.to_json().replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            ModelParameters::from_json(&text),
            Err(Error::SchemaVersion { found: 2, .. })
        ));
        let mut bad = m.clone();
        *bad.params.get_mut("dec.P").unwrap() = DMatrix::zeros(2, 2);
        assert!(ModelParameters::from_json(&bad.to_json()).is_err());
    }

    #[test]
    fn prior_mode_names() {
        for m in [PriorMode::Autoregressive, PriorMode::IidStandard, PriorMode::IidLearned] {
            assert_eq!(PriorMode::parse(m.name()).unwrap(), m);
        }
        assert!(PriorMode::parse("flow").is_err());
    }
}
