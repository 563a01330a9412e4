//! Two-layer ReLU softmax policy trained as a one-step contextual bandit.
//!
//! Each step draws a batch of inputs, samples `S` actions per input, rewards
//! the action that matches the label and applies one Adam step along the
//! estimator's gradient. Every step also records how far that raw gradient
//! points from two label-derived reference directions,
//! `g_pg = sum_x pi(y|x) grad log pi(y|x)` and `g_ce = sum_x grad log pi(y|x)`.

mod adam;
mod mlp;
mod train;

pub use adam::AdamState;
pub use mlp::{Forward, MlpDims, MlpPolicy};
pub use train::{
    batch_update, compute_baseline, oracle_floor_arm, run_classification_experiment, run_classification_seed, Arm,
    BaselineKind, ClassifyConfig, ClassifyTrace, MisalignmentRecord,
};
