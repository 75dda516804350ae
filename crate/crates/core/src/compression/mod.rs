//! Uniform quantization of model parameters and a context-adaptive binary
//! arithmetic coder for the resulting integer indices.

mod codec;
mod quant;
mod range_coder;
mod transport;

pub use codec::{decode, encode, CompressedModel, TensorRecord, COMPRESSED_MAGIC};
pub use quant::{
    dequantize, dequantize_model, quantize, quantize_model, space_saving, step_size, step_size_literal, weight_entropy,
    QuantConfig, QuantizedTensor,
};
pub use transport::CompressionTransport;
