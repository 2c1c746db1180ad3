//! Training loop for the photometric-stereo network: cosine similarity loss
//! over masked pixels, stepped learning-rate schedule, patch and light-subset
//! batching, Adam, and bit-exact checkpoint/resume.

mod adam;
mod batch;
mod config;
mod error;
mod fit;
mod loss;

pub use adam::Adam;
pub use batch::{make_batch, Batch, Scene};
pub use config::{lr_at, TrainConfig};
pub use error::{TrainError, TrainResult};
pub use fit::{
    batch_loss, fit, load_checkpoint_meta, load_checkpoint_optimizer, load_checkpoint_params,
    mean_angular_error_deg, save_checkpoint, train_step, CheckpointMeta, EpochLog, FitOptions,
    FitResult,
};
pub use loss::{cosine_loss, masked_cosine_loss_node};
