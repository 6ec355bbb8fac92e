//! Typed attention message passing and the networks built on it: the
//! posterior encoder, the room aggregator, the recurrent prior network and
//! the decoder with its five output heads.
//!
//! Node features are stored as rows. Every network first projects node and
//! edge inputs to the hidden widths `d_h` and `d_e`, then runs `L` rounds of
//! [`mp_layer`].

mod grad_check;
mod layer;
mod model;
mod params;

pub use grad_check::{grad_check, relative_error, GradCheckEntry, GradCheckReport, GRAD_CHECK_FLOOR};
pub use layer::{
    bipartite_pairs, complete_pairs, mp_layer, Attention, Ctx, EdgeSet, EdgeType, GraphState, NodeType,
    ATTENTION_SLOPE,
};
pub use model::{
    aggregate_vars, argmax, decode_vars, encode_vars, prior_vars, AggregateVars, DecoderVars, EncoderVars,
    FurniturePrediction, PriorVars, RoomAggregate, RoomInputs, SceneInputs,
};
pub(crate) use model::prior_from;
pub use params::{
    accumulate, ModelConfig, ModelParameters, ParamGrads, ParamStore, PriorMode, CHECKPOINT_VERSION,
};

#[cfg(test)]
mod tests;
