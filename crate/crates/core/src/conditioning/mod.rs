//! Desk-scale replica of the dual-stream conditioning path: a mock causal
//! video encoder, anchor/source stream assembly, 3D rotary embeddings with a
//! temporal offset for the source segment, a single attention block with
//! hand-written gradients, and the composite training loss.

mod block;
mod loss;
mod rope;
mod stream;
mod train;
mod vae;

pub use block::{ToyBlockCfg, ToyBlockGrads, ToyBlockWeights, toy_block_forward};
pub use loss::{total_loss, LossBreakdown};
pub use rope::{rope_rotate, RopeConfig};
pub use stream::{
    assemble_anchor_stream, assemble_source_stream, downsample_mask, ConditionStream, PatchEmbed,
    Segment, StreamKind, TokenGrid,
};
pub use train::{train_steps, ToyModel, ToyModelCfg, ToyModelGrads, TrainInputs};
pub use vae::{ChannelProjection, LatentClip, MockVae, MockVaeConfig};
