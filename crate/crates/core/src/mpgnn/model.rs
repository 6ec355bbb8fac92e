use nalgebra::{DMatrix, DVector};

use crate::autodiff::{Index, Var};
use crate::error::{Error, Result};
use crate::gaussian::{AutoregressivePriorParams, DiagonalGaussian};
use crate::scene::{room_features, room_room_features, EdgeFeatures, RoomLayout, SceneGraph, D_ROOM};

use super::layer::{bipartite_pairs, complete_pairs, mp_layer, Attention, Ctx, EdgeSet, EdgeType, GraphState};
use super::params::{ModelConfig, ModelParameters};

/// Room subgraph tensors shared by the aggregator and the decoder.
#[derive(Debug, Clone)]
pub struct RoomInputs {
    pub n_room: usize,
    /// `n_R × 17`
    pub x_room: DMatrix<f64>,
    pub rr: (Index, Index),
    /// `E_RR × 4`
    pub e_rr: DMatrix<f64>,
}

impl RoomInputs {
    pub fn from_layout(layout: &RoomLayout) -> Result<Self> {
        layout.validate()?;
        let n = layout.room_nodes.len();
        let x = room_features(layout.room_type, &layout.room_nodes);
        let x_rr = room_room_features(&layout.room_nodes)?;
        Ok(Self::assemble(n, x, &x_rr))
    }

    fn from_scene(scene: &SceneGraph) -> Self {
        Self::assemble(scene.n_room(), scene.room_features(), &scene.x_rr)
    }

    fn assemble(n: usize, x: Vec<f64>, x_rr: &EdgeFeatures) -> Self {
        let rr = complete_pairs(n);
        let e_rr = edge_matrix(x_rr, &rr.0, &rr.1, false);
        RoomInputs {
            n_room: n,
            x_room: DMatrix::from_row_slice(n, D_ROOM, &x),
            rr,
            e_rr,
        }
    }
}

/// Everything the encoder reads from one scene.
#[derive(Debug, Clone)]
pub struct SceneInputs {
    pub room: RoomInputs,
    pub n_furniture: usize,
    pub x_furniture: DMatrix<f64>,
    pub ff: (Index, Index),
    pub rf: (Index, Index),
    pub e_ff: DMatrix<f64>,
    pub e_rf: DMatrix<f64>,
}

impl SceneInputs {
    pub fn from_scene(scene: &SceneGraph) -> Self {
        let n_f = scene.n_furniture();
        let x = scene.furniture_features();
        let dim = x.len() / n_f;
        let ff = complete_pairs(n_f);
        let rf = bipartite_pairs(n_f, scene.n_room());
        let e_ff = edge_matrix(&scene.x_ff, &ff.0, &ff.1, false);
        // x_rf is stored [room][furniture]
        let e_rf = edge_matrix(&scene.x_rf, &rf.0, &rf.1, true);
        SceneInputs {
            room: RoomInputs::from_scene(scene),
            n_furniture: n_f,
            x_furniture: DMatrix::from_row_slice(n_f, dim, &x),
            ff,
            rf,
            e_ff,
            e_rf,
        }
    }
}

fn edge_matrix(x: &EdgeFeatures, recv: &Index, send: &Index, sender_major: bool) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(recv.len(), x.dim);
    for (k, (&r, &s)) in recv.iter().zip(send.iter()).enumerate() {
        let f = if sender_major { x.get(s, r) } else { x.get(r, s) };
        for (j, v) in f.iter().enumerate() {
            m[(k, j)] = *v;
        }
    }
    m
}

fn run_layers(ctx: &mut Ctx, mut state: GraphState, prefix: &str, layers: usize) -> (GraphState, Vec<Attention>) {
    let mut att = Vec::with_capacity(layers);
    for l in 0..layers {
        let (next, a) = mp_layer(ctx, &state, prefix, l);
        state = next;
        att.push(a);
    }
    (state, att)
}

fn project(ctx: &mut Ctx, x: Var, name: &str) -> Var {
    let w = ctx.p(name);
    ctx.tape.matmul(x, w)
}

fn edge_set(ctx: &mut Ctx, prefix: &str, kind: EdgeType, pairs: &(Index, Index), feat: Var) -> EdgeSet {
    let h = project(ctx, feat, &format!("{prefix}.edge_in.{}", kind.tag()));
    EdgeSet {
        kind,
        recv: pairs.0.clone(),
        send: pairs.1.clone(),
        h,
    }
}

pub struct EncoderVars {
    pub mu: Var,
    pub logvar: Var,
    pub attention: Vec<Attention>,
}

pub fn encode_vars(ctx: &mut Ctx, config: &ModelConfig, x: &SceneInputs) -> EncoderVars {
    let xf = ctx.constant(x.x_furniture.clone());
    let xr = ctx.constant(x.room.x_room.clone());
    let hf = project(ctx, xf, "enc.in.F");
    let hr = project(ctx, xr, "enc.in.R");
    let eff = ctx.constant(x.e_ff.clone());
    let erf = ctx.constant(x.e_rf.clone());
    let err = ctx.constant(x.room.e_rr.clone());
    let edges = vec![
        edge_set(ctx, "enc", EdgeType::FF, &x.ff, eff),
        edge_set(ctx, "enc", EdgeType::RF, &x.rf, erf),
        edge_set(ctx, "enc", EdgeType::RR, &x.room.rr, err),
    ];
    let state = GraphState {
        furniture: Some(hf),
        room: Some(hr),
        n_furniture: x.n_furniture,
        n_room: x.room.n_room,
        edges,
    };
    let (out, attention) = run_layers(ctx, state, "enc", config.layers);
    let h = out.furniture.expect("furniture states");
    EncoderVars {
        mu: ctx.linear(h, "enc.mu"),
        logvar: ctx.linear(h, "enc.sigma"),
        attention,
    }
}

pub struct AggregateVars {
    /// `1 × d_h`
    pub x_agg: Var,
    /// `1 × d_z` each
    pub mu_first: Var,
    pub logvar_first: Var,
}

pub fn aggregate_vars(ctx: &mut Ctx, config: &ModelConfig, room: &RoomInputs) -> AggregateVars {
    let xr = ctx.constant(room.x_room.clone());
    let hr = project(ctx, xr, "agg.in.R");
    let err = ctx.constant(room.e_rr.clone());
    let edges = vec![edge_set(ctx, "agg", EdgeType::RR, &room.rr, err)];
    let state = GraphState {
        furniture: None,
        room: Some(hr),
        n_furniture: 0,
        n_room: room.n_room,
        edges,
    };
    let (out, _) = run_layers(ctx, state, "agg", config.layers);
    let x_agg = ctx.tape.mean_rows(out.room.expect("room states"));
    let h1 = ctx.linear(x_agg, "agg.mlp1");
    let h1 = ctx.tape.relu(h1);
    let head = ctx.linear(h1, "agg.mlp2");
    let mu_first = ctx.tape.slice_cols(head, 0, config.d_z);
    let logvar_first = ctx.tape.slice_cols(head, config.d_z, config.d_z);
    AggregateVars {
        x_agg,
        mu_first,
        logvar_first,
    }
}

pub struct PriorVars {
    pub mu_first: Var,
    /// `n_F × d_z` conditional log-variances.
    pub logvar: Var,
    /// `n_F − 1` spectrally normalized transitions.
    pub transitions: Vec<Var>,
}

/// Runs the gated recurrent cell for `n_F − 1` steps from the pooled room
/// state, emitting one transition matrix and one log-variance row per step.
pub fn prior_vars(ctx: &mut Ctx, config: &ModelConfig, agg: &AggregateVars, n_furniture: usize) -> PriorVars {
    let (dz, h) = (config.d_z, config.rnn_hidden());
    let mut rows = vec![agg.logvar_first];
    let mut transitions = Vec::with_capacity(n_furniture.saturating_sub(1));
    if n_furniture > 1 {
        let h0 = ctx.linear(agg.x_agg, "prior.h0");
        let mut state = ctx.tape.tanh(h0);
        let gx = ctx.linear(agg.x_agg, "prior.gru_x");
        let gx_z = ctx.tape.slice_cols(gx, 0, h);
        let gx_r = ctx.tape.slice_cols(gx, h, h);
        let gx_n = ctx.tape.slice_cols(gx, 2 * h, h);
        for _ in 1..n_furniture {
            let gh = ctx.linear(state, "prior.gru_h");
            let gh_z = ctx.tape.slice_cols(gh, 0, h);
            let gh_r = ctx.tape.slice_cols(gh, h, h);
            let gh_n = ctx.tape.slice_cols(gh, 2 * h, h);
            let z_pre = ctx.tape.add(gx_z, gh_z);
            let update = ctx.tape.sigmoid(z_pre);
            let r_pre = ctx.tape.add(gx_r, gh_r);
            let reset = ctx.tape.sigmoid(r_pre);
            let gated = ctx.tape.mul(reset, gh_n);
            let n_pre = ctx.tape.add(gx_n, gated);
            let cand = ctx.tape.tanh(n_pre);
            // h' = n + z ⊙ (h − n)
            let diff = ctx.tape.sub(state, cand);
            let keep = ctx.tape.mul(update, diff);
            state = ctx.tape.add(cand, keep);

            let flat = ctx.linear(state, "prior.A");
            let a = ctx.tape.reshape(flat, dz, dz);
            transitions.push(ctx.tape.spectral_normalize(a));
            rows.push(ctx.linear(state, "prior.logvar"));
        }
    }
    let logvar = ctx.tape.concat_rows(&rows);
    PriorVars {
        mu_first: agg.mu_first,
        logvar,
        transitions,
    }
}

pub struct DecoderVars {
    pub shape: Var,
    pub orient_logp: Var,
    pub loc: Var,
    pub log_size: Var,
    pub cat_logp: Var,
}

pub fn decode_vars(ctx: &mut Ctx, config: &ModelConfig, z: Var, room: &RoomInputs) -> DecoderVars {
    let n_f = ctx.value(z).nrows();
    let ff = complete_pairs(n_f);
    let rf = bipartite_pairs(n_f, room.n_room);

    let z_recv = ctx.tape.gather(z, &ff.0);
    let z_send = ctx.tape.gather(z, &ff.1);
    let ff_feat = ctx.tape.concat_cols(&[z_recv, z_send]);

    let xr = ctx.constant(room.x_room.clone());
    let p = ctx.p("dec.P");
    let room_z = ctx.tape.matmul(xr, p);
    let rf_room = ctx.tape.gather(room_z, &rf.1);
    let rf_furn = ctx.tape.gather(z, &rf.0);
    let rf_feat = ctx.tape.concat_cols(&[rf_room, rf_furn]);
    let err = ctx.constant(room.e_rr.clone());

    let hf = project(ctx, z, "dec.in.F");
    let hr = project(ctx, xr, "dec.in.R");
    let edges = vec![
        edge_set(ctx, "dec", EdgeType::FF, &ff, ff_feat),
        edge_set(ctx, "dec", EdgeType::RF, &rf, rf_feat),
        edge_set(ctx, "dec", EdgeType::RR, &room.rr, err),
    ];
    let state = GraphState {
        furniture: Some(hf),
        room: Some(hr),
        n_furniture: n_f,
        n_room: room.n_room,
        edges,
    };
    let (out, _) = run_layers(ctx, state, "dec", config.layers);
    let h = out.furniture.expect("furniture states");

    let shape = ctx.linear(h, "dec.shape");
    let orient = ctx.linear(h, "dec.orient");
    let orient_logp = ctx.tape.log_softmax_rows(orient);
    let loc = ctx.linear(h, "dec.loc");
    let s1 = ctx.linear(shape, "dec.size1");
    let s1 = ctx.tape.relu(s1);
    let log_size = ctx.linear(s1, "dec.size2");
    let c1 = ctx.linear(shape, "dec.cat1");
    let c1 = ctx.tape.relu(c1);
    let cat = ctx.linear(c1, "dec.cat2");
    let cat_logp = ctx.tape.log_softmax_rows(cat);
    DecoderVars {
        shape,
        orient_logp,
        loc,
        log_size,
        cat_logp,
    }
}

/// Decoded attributes of one furniture node.
#[derive(Debug, Clone, PartialEq)]
pub struct FurniturePrediction {
    pub shape_mu: Vec<f64>,
    pub orient_probs: [f64; 4],
    pub loc_mu: [f64; 3],
    pub log_size_mu: [f64; 3],
    pub cat_probs: [f64; 7],
}

impl FurniturePrediction {
    pub fn orient_class(&self) -> usize {
        argmax(&self.orient_probs)
    }

    pub fn category(&self) -> usize {
        argmax(&self.cat_probs)
    }
}

/// First index of the largest entry.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn predictions_from(ctx: &Ctx, d: &DecoderVars) -> Vec<FurniturePrediction> {
    let (shape, orient, loc) = (ctx.value(d.shape), ctx.value(d.orient_logp), ctx.value(d.loc));
    let (size, cat) = (ctx.value(d.log_size), ctx.value(d.cat_logp));
    (0..shape.nrows())
        .map(|i| FurniturePrediction {
            shape_mu: shape.row(i).iter().copied().collect(),
            orient_probs: std::array::from_fn(|k| orient[(i, k)].exp()),
            loc_mu: std::array::from_fn(|k| loc[(i, k)]),
            log_size_mu: std::array::from_fn(|k| size[(i, k)]),
            cat_probs: std::array::from_fn(|k| cat[(i, k)].exp()),
        })
        .collect()
}

/// Pooled room state and the first-latent Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomAggregate {
    pub x_agg: DVector<f64>,
    pub mu_first: DVector<f64>,
    pub var_first: DVector<f64>,
}

fn row_vector(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.len(), m.iter().copied())
}

impl ModelParameters {
    pub fn encode(&self, scene: &SceneGraph) -> Result<DiagonalGaussian> {
        self.check_scene(scene)?;
        let inputs = SceneInputs::from_scene(scene);
        let mut ctx = Ctx::new(&self.params, false);
        let e = encode_vars(&mut ctx, &self.config, &inputs);
        let var = ctx.value(e.logvar).map(f64::exp);
        DiagonalGaussian::new(ctx.value(e.mu).clone(), var)
    }

    pub fn room_aggregate(&self, layout: &RoomLayout) -> Result<RoomAggregate> {
        let room = RoomInputs::from_layout(layout)?;
        let mut ctx = Ctx::new(&self.params, false);
        let a = aggregate_vars(&mut ctx, &self.config, &room);
        Ok(RoomAggregate {
            x_agg: row_vector(ctx.value(a.x_agg)),
            mu_first: row_vector(ctx.value(a.mu_first)),
            var_first: row_vector(&ctx.value(a.logvar_first).map(f64::exp)),
        })
    }

    /// Autoregressive prior for a room and furniture count.
    pub fn prior(&self, layout: &RoomLayout, n_furniture: usize) -> Result<AutoregressivePriorParams> {
        if n_furniture == 0 {
            return Err(Error::Validation("n_furniture must be at least 1".into()));
        }
        let room = RoomInputs::from_layout(layout)?;
        let mut ctx = Ctx::new(&self.params, false);
        let a = aggregate_vars(&mut ctx, &self.config, &room);
        let p = prior_vars(&mut ctx, &self.config, &a, n_furniture);
        Ok(prior_from(&ctx, &p))
    }

    pub fn decode(&self, z: &DMatrix<f64>, layout: &RoomLayout) -> Result<Vec<FurniturePrediction>> {
        if z.ncols() != self.config.d_z || z.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "latents are {:?}, expected (n_F >= 1, {})",
                z.shape(),
                self.config.d_z
            )));
        }
        let room = RoomInputs::from_layout(layout)?;
        let mut ctx = Ctx::new(&self.params, false);
        let zv = ctx.constant(z.clone());
        let d = decode_vars(&mut ctx, &self.config, zv, &room);
        Ok(predictions_from(&ctx, &d))
    }

    fn check_scene(&self, scene: &SceneGraph) -> Result<()> {
        if scene.d_shape() != self.config.d_shape {
            return Err(Error::Dimension(format!(
                "scene descriptors have length {}, model expects {}",
                scene.d_shape(),
                self.config.d_shape
            )));
        }
        Ok(())
    }
}

pub(crate) fn prior_from(ctx: &Ctx, p: &PriorVars) -> AutoregressivePriorParams {
    AutoregressivePriorParams {
        mu_first: row_vector(ctx.value(p.mu_first)),
        var_steps: ctx.value(p.logvar).map(f64::exp),
        transitions: p.transitions.iter().map(|a| ctx.value(*a).clone()).collect(),
    }
}
