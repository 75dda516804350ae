use crate::compression::{decode, dequantize_model, encode, quantize_model, CompressedModel, QuantConfig};
use crate::error::Result;
use crate::federation::{Transmission, Transport};
use crate::nn::ParameterSet;

/// Sends models as quantized, entropy-coded `FQC1` payloads; the receiver
/// sees the dequantized values.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionTransport {
    pub config: QuantConfig,
}

impl Transport for CompressionTransport {
    fn transmit(&self, params: &ParameterSet) -> Result<Transmission> {
        let bytes = encode(&quantize_model(params, &self.config)?).to_bytes();
        let received = decode(&CompressedModel::from_bytes(&bytes)?)?;
        Ok(Transmission {
            params: dequantize_model(&received)?,
            bytes: bytes.len() as u64,
        })
    }
}
