//! Byte-oriented range coder with 64-bit state and 16-bit probability
//! precision, plus the adaptive order-0 byte model used for octree payloads.
//!
//! The coder works on cumulative frequency intervals `[start, start+freq)`
//! out of `total <= 2^16`. Carries never occur because renormalization only
//! emits a byte once it can no longer change; when the interval straddles a
//! byte boundary with too little range left, two bytes are flushed and the
//! range is clamped to the remaining span (costing a fraction of a bit).

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoderError {
    #[error("corrupt payload: {0}")]
    CorruptPayload(&'static str),
}

const TOP: u64 = 1 << 40;
const BOTTOM: u64 = 1 << 24;
const MASK32: u64 = 0xffff_ffff;

/// Maximum cumulative total accepted by the coder.
pub const MAX_TOTAL: u32 = 1 << 16;

pub struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: TOP,
            out: Vec::new(),
        }
    }

    fn emit_byte(&mut self) {
        self.out.push((self.low >> 32) as u8);
        self.low = (self.low & MASK32) << 8;
        self.range <<= 8;
    }

    fn renorm(&mut self) {
        while (self.low >> 32) == ((self.low + self.range - 1) >> 32) {
            self.emit_byte();
        }
        if self.range < BOTTOM {
            self.emit_byte();
            self.emit_byte();
            // low now has its bottom 8 bits clear, so TOP - low >= 2^16
            // and one symbol at full precision still fits.
            self.range = TOP - self.low;
        }
    }

    /// Narrows the interval to `[start, start+freq) / total`.
    pub fn encode(&mut self, start: u32, freq: u32, total: u32) {
        debug_assert!(freq >= 1);
        debug_assert!(start + freq <= total);
        debug_assert!(total <= MAX_TOTAL);
        let r = self.range / total as u64;
        self.low += start as u64 * r;
        self.range = freq as u64 * r;
        self.renorm();
    }

    /// Flushes the final interval. Always ends with a fixed 5-byte tail so
    /// the decoder consumes exactly the emitted byte count.
    pub fn finish(mut self) -> Vec<u8> {
        // emit while the top byte cannot change; afterwards the interval
        // straddles a 2^32 boundary, so the smallest 2^32 multiple above
        // low lies strictly inside it and is safe to commit
        while (self.low >> 32) == ((self.low + self.range - 1) >> 32) {
            self.emit_byte();
        }
        self.low = ((self.low >> 32) + 1) << 32;
        for _ in 0..5 {
            self.out.push((self.low >> 32) as u8);
            self.low = (self.low & MASK32) << 8;
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u64,
    low: u64,
    range: u64,
    r: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        RangeDecoder {
            data,
            pos: 0,
            code: 0,
            low: 0,
            range: 1,
            r: 0,
        }
    }

    fn append_byte(&mut self) -> Result<(), CoderError> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or(CoderError::CorruptPayload("payload exhausted early"))?;
        self.pos += 1;
        self.code = ((self.code & MASK32) << 8) | b as u64;
        self.low = (self.low & MASK32) << 8;
        self.range <<= 8;
        Ok(())
    }

    fn renorm(&mut self) -> Result<(), CoderError> {
        while (self.low >> 32) == ((self.low + self.range - 1) >> 32) {
            self.append_byte()?;
        }
        if self.range < BOTTOM {
            self.append_byte()?;
            self.append_byte()?;
            self.range = TOP - self.low;
        }
        Ok(())
    }

    /// Returns the cumulative position of the next symbol in `[0, total)`.
    /// Must be followed by `consume` with the matching interval.
    pub fn decode(&mut self, total: u32) -> Result<u32, CoderError> {
        self.renorm()?;
        self.r = self.range / total as u64;
        let val = (self.code.wrapping_sub(self.low)) / self.r;
        Ok((val as u32).min(total - 1))
    }

    /// Narrows the interval after the caller resolved the symbol.
    pub fn consume(&mut self, start: u32, freq: u32) {
        self.low += start as u64 * self.r;
        self.range = freq as u64 * self.r;
    }

    /// Mirrors the encoder tail and verifies the payload was consumed
    /// exactly, rejecting both truncated and over-long payloads.
    pub fn finish(mut self) -> Result<(), CoderError> {
        self.renorm()?;
        while (self.low >> 32) == ((self.low + self.range - 1) >> 32) {
            self.append_byte()?;
        }
        if self.pos != self.data.len() {
            return Err(CoderError::CorruptPayload("trailing bytes after stream"));
        }
        Ok(())
    }
}

/// Order-0 adaptive model over bytes: counts start at 1, increment by 1 per
/// observation, and halve (rounding up) when the total reaches 2^16.
pub struct AdaptiveByteModel {
    freq: [u32; 256],
    total: u32,
}

impl Default for AdaptiveByteModel {
    fn default() -> Self {
        Self::new()
    }
}

impl AdaptiveByteModel {
    pub fn new() -> Self {
        AdaptiveByteModel {
            freq: [1; 256],
            total: 256,
        }
    }

    fn bump(&mut self, sym: u8) {
        self.freq[sym as usize] += 1;
        self.total += 1;
        if self.total >= MAX_TOTAL {
            self.total = 0;
            for f in self.freq.iter_mut() {
                *f = (*f + 1) >> 1;
                self.total += *f;
            }
        }
    }

    pub fn encode(&mut self, enc: &mut RangeEncoder, sym: u8) {
        let start: u32 = self.freq[..sym as usize].iter().sum();
        enc.encode(start, self.freq[sym as usize], self.total);
        self.bump(sym);
    }

    pub fn decode(&mut self, dec: &mut RangeDecoder) -> Result<u8, CoderError> {
        let val = dec.decode(self.total)?;
        let mut start = 0u32;
        let mut sym = 0usize;
        loop {
            let f = self.freq[sym];
            if start + f > val {
                break;
            }
            start += f;
            sym += 1;
        }
        dec.consume(start, self.freq[sym]);
        let sym = sym as u8;
        self.bump(sym);
        Ok(sym)
    }
}
