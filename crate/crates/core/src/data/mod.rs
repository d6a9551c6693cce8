//! Dataset files, dev splits and model checkpoints.

mod checkpoint;
mod dataset;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC};
pub use dataset::{load_dataset, parse_dataset, split_dev, PairDataset, PairRecord, Task};
