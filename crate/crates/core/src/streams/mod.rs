//! Synthetic source data, corruption operators and test-stream builders.

mod augment;
mod corruption;
mod source;
mod stream;

pub use augment::augment;
pub use corruption::{corrupt, CorruptionKind, CorruptionOp};
pub use source::{generate_source, Dataset, Sample, SourceDomain, SourceSpec};
pub use stream::{
    build_continual, build_gradual, order_by_errors, order_by_source_error, source_errors, Direction, ManifestRow,
    OrderMode, Segment, Shift, Stream, StreamBatch, StreamSpec, TestSource, DEFAULT_BATCH_SIZE, GRADUAL_PATH,
};
