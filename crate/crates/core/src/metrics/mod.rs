//! Tracking quality and perturbation metrics.

pub mod ope;
pub mod perturb;
pub mod vot;

pub use ope::{average_overlap, precision_at, success_auc, success_rate, OpeReport};
pub use perturb::{drop_percent, l1_sparsity, ssim, ssim_gray, PerturbReport};
pub use vot::{vot_anchor_eval, VotProtocolConfig, VotReport};
