mod checkpoint;
mod config;
mod model;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, STATE_PREFIX};
pub use config::{Mixing, ModelConfig, ModelVariant};
pub use model::{fuse, DecoderState, EncodedUtterance, EncoderId, Heads, Model};
pub use params::{Binder, ParamStore};
