//! Interaction logs: ingestion, k-core filtering, leave-one-out splits, popularity negative
//! sampling and a synthetic generator.

mod raw;
mod sampler;
mod split;
mod store;
mod synth;

pub use raw::{core_filter, parse_tsv, parse_tsv_str, Interaction, MIN_INTERACTIONS};
pub use sampler::{sample_by_weight, sample_negatives, EvalTarget, NUM_NEGATIVES};
pub use split::{pad_truncate, split_leave_one_out, DatasetStats, InteractionDataset, UserSplit};
pub use store::{load_dataset, write_dataset};
pub use synth::{synth_generate, SynthRule};
