//! Dataset IO, synthetic generation and splits.

mod dataset;
mod split;
mod synth;

pub use dataset::{load_dataset, parse_dataset, write_dataset, PartialDataset};
pub use split::{kfold, train_test_split, FoldSpec};
pub use synth::{make_blobs, partialize, CleanDataset};
