//! Sequence packing and checkpoint averaging.

mod checkpoint;
mod pack;

pub use checkpoint::{
    average_checkpoints, CheckpointError, CheckpointTensorSet, Dtype, Tensor, TensorData,
    DEFAULT_AVERAGE_WINDOW, MAGIC,
};
pub use pack::{
    pack_sequences, DialogueMerge, PackError, PackMode, PackReport, PackedSequence, Sample,
    Segment, Strictness,
};
