//! ELBO, reconstruction likelihoods, the three layout constraint functionals
//! and primal-dual training.

mod dual;
mod loss;
mod train;

pub use dual::{dual_update, ConstraintState};
pub use loss::{
    ar_kl_vars, constraint_values, constraint_vars, iid_kl_vars, recon_vars, reconstruction_log_prob,
    scene_lagrangian, standard_kl, ConstraintVars, LatentDraw, PreparedScene, ReconTerms, ReconVars, SceneEval,
    Targets,
};
pub use train::{
    elbo, evaluate_constraints, prepare_all, scene_forward, scene_gradient, scene_noise, train, train_with, Adam,
    EpochRecord, TrainConfig, TrainReport,
};

#[cfg(test)]
mod tests;
