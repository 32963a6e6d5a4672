//! Data model, wire formats, synthetic generation, and split assignment.

pub mod io;
pub mod split;
pub mod synthetic;
pub mod types;

pub use io::{load_dataset, save_dataset, WireFormat};
pub use split::{split_assign, split_counts};
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use types::{
    Dataset, PredictionBundle, ProfileSample, Split, Task, DEFAULT_CLASS_COUNT,
    DEFAULT_FEATURE_DIM, DEPTH_SLOTS, MIN_HORIZONS, STOP_TOKEN,
};
