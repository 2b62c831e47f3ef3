//! Line-delimited graph datasets, seeded splits and synthetic generators.
//!
//! A dataset is a `.jsonl` file with one [`GraphRecord`] per line plus a
//! [`DatasetManifest`] stored next to it as `<stem>.manifest.json`.

mod generate;
mod record;
mod split;

pub use generate::{
    flow_oracle, gen_flow_classification, gen_pair_discrimination, FLOW_FEATURE_DIM, PAIR_FEATURE_DIM, PAIR_MAX_NODES,
    RESISTANCES,
};
pub use record::{load_records, manifest_path, save_records, Dataset, DatasetManifest, GraphRecord, Ratios};
pub use split::{cut_sizes, split, SplitStrategy, Splits};
