//! Joint objective, masking, optimization and prompt projection.

pub mod freeze;
pub mod loss;
pub mod masking;
pub mod projection;
pub mod trainer;

pub use freeze::freeze_check;
pub use loss::{eae_loss, mlm_loss, total_loss, LossBreakdown, MlmLossForm};
pub use masking::{apply_random_masking, MaskingPlan, Replacement};
pub use projection::{
    project_pseudo_tokens, project_with_metric, projected_prompts, Metric, ProjectedToken,
};
pub use trainer::{
    batch_loss, build_examples, predict, Example, Gradients, Mode, OptimizerKind, TrainConfig,
    Trainer,
};
