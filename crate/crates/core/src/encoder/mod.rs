//! Small transformer encoder with exact reverse-mode gradients, parameter
//! manifest and checkpoint container.

mod checkpoint;
mod config;
mod params;
mod tensor;
mod transformer;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{EncoderConfig, MAX_ENTITY_TOKENS};
pub use params::{
    encode_entity, encode_sequence, entity_input, init_params, sequence_input, ModelParams,
    TokenStates, BIO_TAGS,
};
pub use tensor::{TensorMut, TensorRef};
pub use transformer::{EncoderCache, EncoderParams, LayerParams};
