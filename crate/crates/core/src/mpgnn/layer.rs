use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::autodiff::{Index, Tape, Var};

use super::params::{ParamGrads, ParamStore};

pub const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeType {
    Furniture,
    Room,
}

impl NodeType {
    pub fn tag(self) -> &'static str {
        match self {
            NodeType::Furniture => "F",
            NodeType::Room => "R",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    FF,
    RF,
    RR,
}

impl EdgeType {
    pub fn tag(self) -> &'static str {
        match self {
            EdgeType::FF => "FF",
            EdgeType::RF => "RF",
            EdgeType::RR => "RR",
        }
    }

    pub fn receiver(self) -> NodeType {
        match self {
            EdgeType::FF | EdgeType::RF => NodeType::Furniture,
            EdgeType::RR => NodeType::Room,
        }
    }

    pub fn sender(self) -> NodeType {
        match self {
            EdgeType::FF => NodeType::Furniture,
            EdgeType::RF | EdgeType::RR => NodeType::Room,
        }
    }
}

/// A tape plus lazily registered parameter leaves.
pub struct Ctx<'p> {
    pub tape: Tape,
    params: &'p ParamStore,
    vars: BTreeMap<&'p str, Var>,
    trainable: bool,
}

impl<'p> Ctx<'p> {
    pub fn new(params: &'p ParamStore, trainable: bool) -> Self {
        Ctx {
            tape: Tape::new(),
            params,
            vars: BTreeMap::new(),
            trainable,
        }
    }

    pub fn p(&mut self, name: &str) -> Var {
        let (key, value) = self.params.entry(name);
        if let Some(v) = self.vars.get(key) {
            return *v;
        }
        let v = if self.trainable {
            self.tape.param(value.clone())
        } else {
            self.tape.constant(value.clone())
        };
        self.vars.insert(key, v);
        v
    }

    pub fn constant(&mut self, m: DMatrix<f64>) -> Var {
        self.tape.constant(m)
    }

    /// `x W + b` for the `{name}.W` / `{name}.b` pair.
    pub fn linear(&mut self, x: Var, name: &str) -> Var {
        let w = self.p(&format!("{name}.W"));
        let b = self.p(&format!("{name}.b"));
        let xw = self.tape.matmul(x, w);
        self.tape.add_row(xw, b)
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        self.tape.value(v)
    }

    /// Parameter gradients of the scalar `out`.
    pub fn grads(&self, out: Var) -> ParamGrads {
        let all = self.tape.backward(out);
        let mut g = ParamGrads::new();
        for (name, v) in &self.vars {
            let grad = all[v.0]
                .clone()
                .unwrap_or_else(|| {
                    let m = self.tape.value(*v);
                    DMatrix::zeros(m.nrows(), m.ncols())
                });
            g.insert((*name).to_string(), grad);
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct EdgeSet {
    pub kind: EdgeType,
    /// Receiver and sender node indices, one per edge.
    pub recv: Index,
    pub send: Index,
    /// `E × d_e` edge states.
    pub h: Var,
}

#[derive(Debug, Clone)]
pub struct GraphState {
    pub furniture: Option<Var>,
    pub room: Option<Var>,
    pub n_furniture: usize,
    pub n_room: usize,
    pub edges: Vec<EdgeSet>,
}

impl GraphState {
    pub fn nodes(&self, t: NodeType) -> Option<Var> {
        match t {
            NodeType::Furniture => self.furniture,
            NodeType::Room => self.room,
        }
    }

    pub fn count(&self, t: NodeType) -> usize {
        match t {
            NodeType::Furniture => self.n_furniture,
            NodeType::Room => self.n_room,
        }
    }
}

/// Attention weights of one layer, per edge type.
pub type Attention = Vec<(EdgeType, Var)>;

/// One round of typed attention message passing.
pub fn mp_layer(ctx: &mut Ctx, state: &GraphState, prefix: &str, layer: usize) -> (GraphState, Attention) {
    let pre = format!("{prefix}.l{layer}");
    let mut projected_r: BTreeMap<NodeType, Var> = BTreeMap::new();
    let mut projected_s: BTreeMap<NodeType, Var> = BTreeMap::new();
    let mut messages: BTreeMap<NodeType, Vec<Var>> = BTreeMap::new();
    let mut new_edges = Vec::with_capacity(state.edges.len());
    let mut attention = Vec::new();

    for e in &state.edges {
        let (rt, st) = (e.kind.receiver(), e.kind.sender());
        let hr = match projected_r.get(&rt) {
            Some(v) => *v,
            None => {
                let w = ctx.p(&format!("{pre}.W_r.{}", rt.tag()));
                let h = state.nodes(rt).expect("receiver nodes present");
                let v = ctx.tape.matmul(h, w);
                projected_r.insert(rt, v);
                v
            }
        };
        let hs = match projected_s.get(&st) {
            Some(v) => *v,
            None => {
                let w = ctx.p(&format!("{pre}.W_s.{}", st.tag()));
                let h = state.nodes(st).expect("sender nodes present");
                let v = ctx.tape.matmul(h, w);
                projected_s.insert(st, v);
                v
            }
        };
        let t = e.kind.tag();
        let hr_e = ctx.tape.gather(hr, &e.recv);
        let hs_e = ctx.tape.gather(hs, &e.send);
        let w_rs = ctx.p(&format!("{pre}.W_rs.{t}"));
        let he = ctx.tape.matmul(e.h, w_rs);
        let cat = ctx.tape.concat_cols(&[hr_e, hs_e, he]);
        let w_a = ctx.p(&format!("{pre}.w_a.{t}"));
        let score = ctx.tape.matmul(cat, w_a);
        let gamma = ctx.tape.leaky_relu(score, ATTENTION_SLOPE);
        let n_recv = state.count(rt);
        let a = ctx.tape.segment_softmax(gamma, &e.recv, n_recv);
        attention.push((e.kind, a));

        let u_edge = ctx.p(&format!("{pre}.U_edge.{t}"));
        let sent = ctx.tape.matmul(hs_e, u_edge);
        let pre_edge = ctx.tape.add(sent, he);
        let h_edge = ctx.tape.scale_rows(a, pre_edge);
        let u_node = ctx.p(&format!("{pre}.U_node.{t}"));
        let msg = ctx.tape.matmul(h_edge, u_node);
        let agg = ctx.tape.scatter_add(msg, &e.recv, n_recv);
        messages.entry(rt).or_default().push(agg);
        new_edges.push(EdgeSet {
            kind: e.kind,
            recv: e.recv.clone(),
            send: e.send.clone(),
            h: h_edge,
        });
    }

    let mut update = |t: NodeType, h: Option<Var>| {
        h.map(|h| {
            let mut acc = h;
            for m in messages.get(&t).into_iter().flatten() {
                acc = ctx.tape.add(acc, *m);
            }
            ctx.tape.relu(acc)
        })
    };
    let furniture = update(NodeType::Furniture, state.furniture);
    let room = update(NodeType::Room, state.room);
    (
        GraphState {
            furniture,
            room,
            n_furniture: state.n_furniture,
            n_room: state.n_room,
            edges: new_edges,
        },
        attention,
    )
}

/// Ordered pairs `(receiver, sender)` over `n` nodes without self pairs,
/// receiver-major.
pub fn complete_pairs(n: usize) -> (Index, Index) {
    let mut recv = Vec::with_capacity(n * n.saturating_sub(1));
    let mut send = Vec::with_capacity(recv.capacity());
    for r in 0..n {
        for s in 0..n {
            if r != s {
                recv.push(r);
                send.push(s);
            }
        }
    }
    (Arc::new(recv), Arc::new(send))
}

/// Every room node sends to every furniture node; receiver-major.
pub fn bipartite_pairs(n_furniture: usize, n_room: usize) -> (Index, Index) {
    let mut recv = Vec::with_capacity(n_furniture * n_room);
    let mut send = Vec::with_capacity(n_furniture * n_room);
    for r in 0..n_furniture {
        for s in 0..n_room {
            recv.push(r);
            send.push(s);
        }
    }
    (Arc::new(recv), Arc::new(send))
}
