//! Index binarization and the `FQC1` container.
//!
//! Each index is coded as: significance bin; sign bin; unary "greater than
//! k" bins for k = 1..=8; an order-0 Exp-Golomb remainder whose prefix bins
//! are context-coded and whose suffix bits bypass the probability model.
//! Significance and sign contexts depend on the two preceding indices.
//! Every tensor is coded with fresh contexts into its own payload.
//!
//! ```text
//! magic "FQC1" | u16 version | u32 tensor count
//! per tensor: name | u32 rank | u32 dims[rank] | i32 qp | f64 step | u64 offset | u64 length | 8-byte digest
//! u64 blob length | blob
//! ```

use sha2::{Digest, Sha256};

use crate::binio::{ByteReader, ByteWriter};
use crate::compression::range_coder::{Context, Decoder, Encoder};
use crate::compression::QuantizedTensor;
use crate::error::{Error, Result};

pub const COMPRESSED_MAGIC: &[u8; 4] = b"FQC1";
const VERSION: u16 = 1;
const NUM_GT: u32 = 8;
const PREFIX_CONTEXTS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub qp: i32,
    pub step_size: f64,
    pub offset: u64,
    pub length: u64,
    pub digest: [u8; 8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    pub records: Vec<TensorRecord>,
    pub blob: Vec<u8>,
}

fn digest(payload: &[u8]) -> [u8; 8] {
    let full = Sha256::digest(payload);
    let mut out = [0u8; 8];
    out.copy_from_slice(&full[..8]);
    out
}

struct Contexts {
    sig: [Context; 3],
    sign: [Context; 3],
    gt: [[Context; NUM_GT as usize]; 2],
    prefix: [Context; PREFIX_CONTEXTS],
}

impl Contexts {
    fn new() -> Self {
        Self {
            sig: [Context::default(); 3],
            sign: [Context::default(); 3],
            gt: [[Context::default(); NUM_GT as usize]; 2],
            prefix: [Context::default(); PREFIX_CONTEXTS],
        }
    }
}

/// What the coder remembers about the two previous indices.
#[derive(Default, Clone, Copy)]
struct Neighbourhood {
    prev: i32,
    prev2: i32,
}

impl Neighbourhood {
    fn sig_ctx(self) -> usize {
        usize::from(self.prev != 0) + usize::from(self.prev2 != 0)
    }

    fn sign_ctx(self) -> usize {
        match self.prev.signum() {
            0 => 0,
            1 => 1,
            _ => 2,
        }
    }

    fn push(&mut self, v: i32) {
        self.prev2 = self.prev;
        self.prev = v;
    }
}

fn encode_tensor(indices: &[i32]) -> Vec<u8> {
    let mut enc = Encoder::new();
    let mut ctx = Contexts::new();
    let mut nb = Neighbourhood::default();
    for &v in indices {
        enc.bit(&mut ctx.sig[nb.sig_ctx()], v != 0);
        if v != 0 {
            enc.bit(&mut ctx.sign[nb.sign_ctx()], v < 0);
            let a = v.unsigned_abs();
            let row = usize::from(nb.prev != 0);
            let mut k = 1;
            while k <= NUM_GT {
                let greater = a > k;
                enc.bit(&mut ctx.gt[row][(k - 1) as usize], greater);
                if !greater {
                    break;
                }
                k += 1;
            }
            if a > NUM_GT {
                let value = u64::from(a - NUM_GT - 1) + 1;
                let len = 63 - value.leading_zeros() as usize;
                for i in 0..len {
                    enc.bit(&mut ctx.prefix[i.min(PREFIX_CONTEXTS - 1)], true);
                }
                enc.bit(&mut ctx.prefix[len.min(PREFIX_CONTEXTS - 1)], false);
                for i in (0..len).rev() {
                    enc.bypass((value >> i) & 1 == 1);
                }
            }
        }
        nb.push(v);
    }
    enc.finish()
}

fn decode_tensor(payload: &[u8], count: usize, base: usize) -> Result<Vec<i32>> {
    let mut dec = Decoder::new(payload, base)?;
    let mut ctx = Contexts::new();
    let mut nb = Neighbourhood::default();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = 0i32;
        if dec.bit(&mut ctx.sig[nb.sig_ctx()])? {
            let negative = dec.bit(&mut ctx.sign[nb.sign_ctx()])?;
            let row = usize::from(nb.prev != 0);
            let mut a: u64 = 1;
            while a <= u64::from(NUM_GT) && dec.bit(&mut ctx.gt[row][(a - 1) as usize])? {
                a += 1;
            }
            if a > u64::from(NUM_GT) {
                let mut len = 0usize;
                while dec.bit(&mut ctx.prefix[len.min(PREFIX_CONTEXTS - 1)])? {
                    len += 1;
                    if len > 32 {
                        return Err(Error::decoding(dec.offset(), "Exp-Golomb prefix longer than 32 bins"));
                    }
                }
                let mut value: u64 = 1;
                for _ in 0..len {
                    value = (value << 1) | u64::from(dec.bypass()?);
                }
                a = value - 1 + u64::from(NUM_GT) + 1;
            }
            v = match (negative, a) {
                (false, a) if a <= i32::MAX as u64 => a as i32,
                (true, a) if a <= 1 << 31 => (-(a as i64)) as i32,
                _ => {
                    return Err(Error::decoding(
                        dec.offset(),
                        format!("index magnitude {a} exceeds 32 bits"),
                    ))
                }
            };
        }
        out.push(v);
        nb.push(v);
    }
    if !dec.at_end() {
        return Err(Error::decoding(dec.offset(), "payload has undecoded trailing bytes"));
    }
    Ok(out)
}

/// Entropy-codes every tensor's indices into one blob.
pub fn encode(tensors: &[QuantizedTensor]) -> CompressedModel {
    let mut blob = Vec::new();
    let mut records = Vec::with_capacity(tensors.len());
    for t in tensors {
        let payload = encode_tensor(&t.indices);
        records.push(TensorRecord {
            name: t.name.clone(),
            shape: t.shape.clone(),
            qp: t.qp,
            step_size: t.step_size,
            offset: blob.len() as u64,
            length: payload.len() as u64,
            digest: digest(&payload),
        });
        blob.extend_from_slice(&payload);
    }
    CompressedModel { records, blob }
}

/// Recovers the exact indices of every tensor.
pub fn decode(model: &CompressedModel) -> Result<Vec<QuantizedTensor>> {
    let base = model.header_len();
    model
        .records
        .iter()
        .map(|r| {
            let start = usize::try_from(r.offset).ok();
            let end = start.and_then(|s| s.checked_add(usize::try_from(r.length).ok()?));
            let payload = match (start, end) {
                (Some(s), Some(e)) if e <= model.blob.len() => &model.blob[s..e],
                _ => {
                    return Err(Error::decoding(
                        base,
                        format!("payload range of {} lies outside the blob", r.name),
                    ))
                }
            };
            let at = base + r.offset as usize;
            if digest(payload) != r.digest {
                return Err(Error::decoding(
                    at,
                    format!("payload of {} fails its digest check", r.name),
                ));
            }
            let count = r
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::decoding(at, "tensor shape overflows"))?;
            Ok(QuantizedTensor {
                name: r.name.clone(),
                shape: r.shape.clone(),
                qp: r.qp,
                step_size: r.step_size,
                indices: decode_tensor(payload, count, at)?,
            })
        })
        .collect()
}

impl CompressedModel {
    fn write_header(&self, w: &mut ByteWriter) {
        w.bytes(COMPRESSED_MAGIC);
        w.u16(VERSION);
        w.u32(self.records.len() as u32);
        for r in &self.records {
            w.str(&r.name);
            w.u32(r.shape.len() as u32);
            for &d in &r.shape {
                w.u32(d as u32);
            }
            w.i32(r.qp);
            w.f64(r.step_size);
            w.u64(r.offset);
            w.u64(r.length);
            w.bytes(&r.digest);
        }
        w.u64(self.blob.len() as u64);
    }

    /// Bytes before the blob in the serialized form.
    pub fn header_len(&self) -> usize {
        let mut w = ByteWriter::new();
        self.write_header(&mut w);
        w.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.write_header(&mut w);
        w.bytes(&self.blob);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(COMPRESSED_MAGIC)?;
        let at = r.position();
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::decoding(at, format!("unsupported version {version}")));
        }
        let count = r.count(44)?;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.str()?;
            let rank = r.count(4)?;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let qp = r.i32()?;
            let at = r.position();
            let step_size = r.f64()?;
            if !(step_size.is_finite() && step_size > 0.0) {
                return Err(Error::decoding(
                    at,
                    format!("step size {step_size} of {name} is not positive"),
                ));
            }
            let offset = r.u64()?;
            let length = r.u64()?;
            let mut digest = [0u8; 8];
            digest.copy_from_slice(r.take(8)?);
            records.push(TensorRecord {
                name,
                shape,
                qp,
                step_size,
                offset,
                length,
                digest,
            });
        }
        let at = r.position();
        let blob_len = r.u64()?;
        if blob_len != r.remaining() as u64 {
            return Err(Error::decoding(
                at,
                format!("blob length {blob_len} but {} bytes follow", r.remaining()),
            ));
        }
        let blob = r.take(blob_len as usize)?.to_vec();
        Ok(Self { records, blob })
    }
}
