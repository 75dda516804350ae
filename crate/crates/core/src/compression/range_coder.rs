//! Adaptive binary range coder with carry propagation. Probabilities are
//! 15-bit estimates of a zero bin, moved 1/32 of the way toward each
//! observed bin.

use crate::error::{Error, Result};

const PROB_BITS: u32 = 15;
const PROB_ONE: u16 = 1 << PROB_BITS;
const ADAPT_SHIFT: u32 = 5;
const TOP: u32 = 1 << 24;

/// Adaptive estimate for one bin position.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Context(u16);

impl Default for Context {
    fn default() -> Self {
        Context(PROB_ONE / 2)
    }
}

impl Context {
    fn update(&mut self, bit: bool) {
        if bit {
            self.0 -= self.0 >> ADAPT_SHIFT;
        } else {
            self.0 += (PROB_ONE - self.0) >> ADAPT_SHIFT;
        }
    }
}

pub(crate) struct Encoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn bit(&mut self, ctx: &mut Context, bit: bool) {
        let bound = (self.range >> PROB_BITS) * u32::from(ctx.0);
        if bit {
            self.low += u64::from(bound);
            self.range -= bound;
        } else {
            self.range = bound;
        }
        ctx.update(bit);
        self.normalize();
    }

    /// Equiprobable bin without a context.
    pub fn bypass(&mut self, bit: bool) {
        self.range >>= 1;
        if bit {
            self.low += u64::from(self.range);
        }
        self.normalize();
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub(crate) struct Decoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
    /// Offset of `input` inside the enclosing container, for error reports.
    base: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8], base: usize) -> Result<Self> {
        let mut d = Self {
            code: 0,
            range: u32::MAX,
            input,
            pos: 0,
            base,
        };
        for _ in 0..5 {
            d.code = (d.code << 8) | u32::from(d.next_byte()?);
        }
        Ok(d)
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self
            .input
            .get(self.pos)
            .ok_or_else(|| Error::decoding(self.base + self.pos, "arithmetic-coded payload ends early"))?;
        self.pos += 1;
        Ok(b)
    }

    fn normalize(&mut self) -> Result<()> {
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | u32::from(self.next_byte()?);
        }
        Ok(())
    }

    pub fn bit(&mut self, ctx: &mut Context) -> Result<bool> {
        let bound = (self.range >> PROB_BITS) * u32::from(ctx.0);
        let bit = self.code >= bound;
        if bit {
            self.code -= bound;
            self.range -= bound;
        } else {
            self.range = bound;
        }
        ctx.update(bit);
        self.normalize()?;
        Ok(bit)
    }

    pub fn bypass(&mut self) -> Result<bool> {
        self.range >>= 1;
        let bit = self.code >= self.range;
        if bit {
            self.code -= self.range;
        }
        self.normalize()?;
        Ok(bit)
    }

    /// Whether every payload byte was consumed.
    pub fn at_end(&self) -> bool {
        self.pos == self.input.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bits_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bits: Vec<(bool, bool)> = (0..20_000)
            .map(|_| (rng.random_bool(0.1), rng.random_bool(0.5)))
            .collect();
        let mut ctx = Context::default();
        let mut enc = Encoder::new();
        for &(b, raw) in &bits {
            enc.bit(&mut ctx, b);
            enc.bypass(raw);
        }
        let bytes = enc.finish();
        let mut ctx = Context::default();
        let mut dec = Decoder::new(&bytes, 0).unwrap();
        for &(b, raw) in &bits {
            assert_eq!(dec.bit(&mut ctx).unwrap(), b);
            assert_eq!(dec.bypass().unwrap(), raw);
        }
        assert!(dec.at_end());
    }
}
