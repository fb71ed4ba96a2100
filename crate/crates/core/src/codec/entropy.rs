//! Adaptive binary range coder.
//!
//! A carry-propagating range coder over 32-bit `range` with 12-bit adaptive
//! bit probabilities (shift-5 update). All arithmetic is integer, so output
//! is identical on every platform.
//!
//! The [`BinCoder`] trait lets the syntax layer be written once and driven by
//! either an encoder or a decoder: encoders consume the supplied value and
//! return it, decoders ignore it and return what they read.

const PROB_BITS: u32 = 12;
const PROB_ONE: u16 = 1 << PROB_BITS;
const ADAPT_SHIFT: u32 = 5;
const TOP: u32 = 1 << 24;

/// Probability that the next bit is 0, in units of 1/4096.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitModel(u16);

impl Default for BitModel {
    fn default() -> Self {
        BitModel(PROB_ONE / 2)
    }
}

impl BitModel {
    #[inline]
    fn update(&mut self, bit: u32) {
        if bit == 0 {
            self.0 += (PROB_ONE - self.0) >> ADAPT_SHIFT;
        } else {
            self.0 -= self.0 >> ADAPT_SHIFT;
        }
    }
}

pub trait BinCoder {
    /// Codes one bit under an adaptive model.
    fn bit(&mut self, model: &mut BitModel, bit: u32) -> u32;

    /// Codes one equiprobable bit.
    fn bypass(&mut self, bit: u32) -> u32;
}

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
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
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
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

    #[inline]
    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

impl BinCoder for RangeEncoder {
    #[inline]
    fn bit(&mut self, model: &mut BitModel, bit: u32) -> u32 {
        let bound = (self.range >> PROB_BITS) * model.0 as u32;
        if bit == 0 {
            self.range = bound;
        } else {
            self.low += bound as u64;
            self.range -= bound;
        }
        model.update(bit);
        self.normalize();
        bit
    }

    #[inline]
    fn bypass(&mut self, bit: u32) -> u32 {
        self.range >>= 1;
        if bit != 0 {
            self.low += self.range as u64;
        }
        self.normalize();
        bit
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = Self {
            data,
            pos: 0,
            range: u32::MAX,
            code: 0,
        };
        for _ in 0..5 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    #[inline]
    fn next_byte(&mut self) -> u8 {
        // reading past the end yields zeros, matching the encoder's flush
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    #[inline]
    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next_byte() as u32;
        }
    }
}

impl BinCoder for RangeDecoder<'_> {
    #[inline]
    fn bit(&mut self, model: &mut BitModel, _bit: u32) -> u32 {
        let bound = (self.range >> PROB_BITS) * model.0 as u32;
        let bit = if self.code < bound {
            self.range = bound;
            0
        } else {
            self.code -= bound;
            self.range -= bound;
            1
        };
        model.update(bit);
        self.normalize();
        bit
    }

    #[inline]
    fn bypass(&mut self, _bit: u32) -> u32 {
        self.range >>= 1;
        let bit = if self.code >= self.range {
            self.code -= self.range;
            1
        } else {
            0
        };
        self.normalize();
        bit
    }
}

/// Adaptive Exp-Golomb style coder for signed integers: a zero flag, a sign
/// flag, then the magnitude as a unary bucket index plus in-bucket bits, each
/// with its own adaptive model.
#[derive(Debug, Clone, Default)]
pub struct SignedModel {
    zero: BitModel,
    sign: BitModel,
    prefix: [BitModel; 16],
    suffix: [[BitModel; 16]; 16],
}

impl SignedModel {
    /// Codes `value`; magnitudes must stay below 2^16.
    pub fn code<C: BinCoder>(&mut self, coder: &mut C, value: i32) -> i32 {
        let is_zero = coder.bit(&mut self.zero, (value == 0) as u32);
        if is_zero == 1 {
            return 0;
        }
        let negative = coder.bit(&mut self.sign, (value < 0) as u32);
        // magnitude >= 1; code m = magnitude as bucket k = bit length - 1
        let m = value.unsigned_abs();
        let k_in = 31 - m.max(1).leading_zeros();
        let mut k = 0u32;
        while k < 15 {
            let more = coder.bit(&mut self.prefix[k as usize], (k < k_in) as u32);
            if more == 0 {
                break;
            }
            k += 1;
        }
        let mut mag = 1u32;
        for i in (0..k).rev() {
            let b = coder.bit(&mut self.suffix[k as usize][i as usize], (m >> i) & 1);
            mag = (mag << 1) | b;
        }
        if negative == 1 {
            -(mag as i32)
        } else {
            mag as i32
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode_bits(bits: &[u32], models: usize) -> Vec<u8> {
        let mut enc = RangeEncoder::new();
        let mut m = vec![BitModel::default(); models];
        for (i, &b) in bits.iter().enumerate() {
            if i % 7 == 3 {
                enc.bypass(b);
            } else {
                enc.bit(&mut m[i % models], b);
            }
        }
        enc.finish()
    }

    fn decode_bits(data: &[u8], n: usize, models: usize) -> Vec<u32> {
        let mut dec = RangeDecoder::new(data);
        let mut m = vec![BitModel::default(); models];
        (0..n)
            .map(|i| {
                if i % 7 == 3 {
                    dec.bypass(0)
                } else {
                    dec.bit(&mut m[i % models], 0)
                }
            })
            .collect()
    }

    #[test]
    fn skewed_stream_compresses() {
        let bits: Vec<u32> = (0..20_000).map(|i| (i % 97 == 0) as u32).collect();
        let mut enc = RangeEncoder::new();
        let mut m = BitModel::default();
        for &b in &bits {
            enc.bit(&mut m, b);
        }
        let out = enc.finish();
        assert!(out.len() < 400, "{}", out.len());
        let mut dec = RangeDecoder::new(&out);
        let mut m = BitModel::default();
        for &b in &bits {
            assert_eq!(dec.bit(&mut m, 0), b);
        }
    }

    #[test]
    fn signed_values_round_trip() {
        let values: Vec<i32> = (-300..300).chain([0, 0, 0, 65535, -65535]).collect();
        let mut enc = RangeEncoder::new();
        let mut m = SignedModel::default();
        for &v in &values {
            m.code(&mut enc, v);
        }
        let out = enc.finish();
        let mut dec = RangeDecoder::new(&out);
        let mut m = SignedModel::default();
        for &v in &values {
            assert_eq!(m.code(&mut dec, 0), v);
        }
    }

    proptest! {
        #[test]
        fn arbitrary_bits_round_trip(bits in proptest::collection::vec(0u32..2, 0..3000), models in 1usize..5) {
            let data = encode_bits(&bits, models);
            prop_assert_eq!(decode_bits(&data, bits.len(), models), bits);
        }
    }
}
