//! Mask-based enhancement on fused latent/spectrogram features.

mod model;
mod smoke;
mod system;
mod train;

pub use model::{sa_loss, sa_loss_graph, MaskConfig, MaskModel};
pub use smoke::{run_smoke, smoke_config, smoke_corpus, SmokeReport, SMOKE_LEN, SMOKE_SNRS, SMOKE_TEST, SMOKE_TRAIN};
pub use system::{apply_mask, pad_for_inference, Enhancer, InferenceMode, Sidecar, CHECKPOINT_FILE, LOGITS, SIDECAR_FILE};
pub use train::{initial_system, train, write_log_csv, FeatureSource, LogRow, TrainConfig, TrainOutcome};
