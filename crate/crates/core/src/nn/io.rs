//! `FQS1` parameter container.
//!
//! ```text
//! magic "FQS1" | u32 entry count
//! per entry: u32 name length | UTF-8 name | u32 rank | u32 dims[rank] | f32 payload[prod(dims)]
//! ```
//! Little-endian throughout. Values are stored as float32, so a save/load
//! round trip is exact for any set that already holds float32-representable values.
//! Checkpoints use the same framing under magic `FQX1` with float64 payloads.

use std::fs;
use std::path::Path;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::nn::{ParameterSet, Tensor};

pub const PARAMS_MAGIC: &[u8; 4] = b"FQS1";
pub const EXACT_PARAMS_MAGIC: &[u8; 4] = b"FQX1";

pub fn encode_params(params: &ParameterSet) -> Vec<u8> {
    encode_with(params, false)
}

/// Float64 variant used for checkpoints, bit-exact for any values.
pub fn encode_params_exact(params: &ParameterSet) -> Vec<u8> {
    encode_with(params, true)
}

pub fn decode_params(bytes: &[u8]) -> Result<ParameterSet> {
    decode_with(bytes, false)
}

pub fn decode_params_exact(bytes: &[u8]) -> Result<ParameterSet> {
    decode_with(bytes, true)
}

fn encode_with(params: &ParameterSet, exact: bool) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(if exact { EXACT_PARAMS_MAGIC } else { PARAMS_MAGIC });
    w.u32(params.len() as u32);
    for (name, tensor) in params.iter() {
        w.str(name);
        w.u32(tensor.shape().len() as u32);
        for &d in tensor.shape() {
            w.u32(d as u32);
        }
        for &v in tensor.data() {
            if exact {
                w.f64(v);
            } else {
                w.f32(v as f32);
            }
        }
    }
    w.into_inner()
}

fn decode_with(bytes: &[u8], exact: bool) -> Result<ParameterSet> {
    let width = if exact { 8 } else { 4 };
    let mut r = ByteReader::new(bytes);
    r.expect_magic(if exact { EXACT_PARAMS_MAGIC } else { PARAMS_MAGIC })?;
    let count = r.count(12)?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.str()?;
        let rank = r.count(4)?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let at = r.position();
        let len: usize = shape.iter().product();
        if len.saturating_mul(width) > r.remaining() {
            return Err(Error::decoding(at, format!("payload of {name} is truncated")));
        }
        let data = (0..len)
            .map(|_| if exact { r.f64() } else { r.f32().map(f64::from) })
            .collect::<Result<Vec<_>>>()?;
        let tensor = Tensor::new(shape, data).map_err(|e| Error::decoding(at, e.to_string()))?;
        entries.push((name, tensor));
    }
    r.finish()?;
    ParameterSet::from_entries(entries).map_err(|e| Error::decoding(0, e.to_string()))
}

pub fn save_params(params: &ParameterSet, path: &Path) -> Result<()> {
    fs::write(path, encode_params(params))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParameterSet> {
    decode_params(&fs::read(path)?)
}

/// Rounds every value to the nearest float32, i.e. what a peer would receive.
pub fn round_to_f32(params: &ParameterSet) -> ParameterSet {
    let mut out = params.clone();
    for v in out.values_mut() {
        *v = f64::from(*v as f32);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ParameterSet {
        ParameterSet::from_entries(vec![
            (
                "embedding.weight".into(),
                Tensor::new(vec![3, 2], vec![0.1, -0.2, 0.3, 1e-7, 5.0, -6.5]).unwrap(),
            ),
            ("fc.bias".into(), Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()),
        ])
        .unwrap()
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode_params(&sample());
        assert_eq!(&bytes[..4], b"FQS1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 16);
        assert_eq!(&bytes[12..28], b"embedding.weight");
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = encode_params(&sample());
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(matches!(decode_params(&bytes[..cut]), Err(Error::Decoding { .. })));
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact_at_f32(values in proptest::collection::vec(-1e6f64..1e6, 1..64)) {
            let n = values.len();
            let params = ParameterSet::from_entries(vec![("t".into(), Tensor::new(vec![n], values).unwrap())]).unwrap();
            let once = decode_params(&encode_params(&params)).unwrap();
            prop_assert_eq!(&once, &round_to_f32(&params));
            prop_assert_eq!(encode_params(&once), encode_params(&params));
        }

        #[test]
        fn exact_round_trip(values in proptest::collection::vec(proptest::num::f64::NORMAL, 1..64)) {
            let n = values.len();
            let params = ParameterSet::from_entries(vec![("t".into(), Tensor::new(vec![n], values).unwrap())]).unwrap();
            prop_assert_eq!(decode_params_exact(&encode_params_exact(&params)).unwrap(), params);
        }
    }
}
