//! End-user workflows on a trained model: synthesis, shape retrieval,
//! latent editing, database recommendation, evaluation metrics and
//! top-down rendering.

mod latent_db;
mod metrics;
mod render;
mod synth;

pub use latent_db::{
    build_latent_db, class_direction, match_to_prior, recommend, score_entry, to_prior_order, LatentDatabase,
    LatentEntry, Recommendation,
};
pub use metrics::{
    category_kl, discrete_kl, first_match_frequencies, label_counts, FirstMatchTable, KL_SMOOTHING,
};
pub use render::render_svg;
pub use synth::{
    bench_synth, checkpoint_id, edit_scene, nearest_shape, prior_joint, realize, sample_prior, synthesize,
    BenchReport, Provenance, SynthesizedScene,
};

#[cfg(test)]
mod tests;
