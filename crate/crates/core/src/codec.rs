//! Manchester chip coding of the node's private key.
//!
//! The node's only transmitter is a GPIO pin toggling the rectifier between
//! two reflection states, so the key travels as a self-clocking two-level
//! chip stream: each bit becomes two chips of opposite level, guaranteeing
//! a transition in the middle of every bit and an exactly 50 % duty cycle
//! regardless of key content (the mean P-wave level carries no information
//! about the key).
//!
//! Default polarity: bit `1` → chips `(0, 1)`, bit `0` → chips `(1, 0)`.
//! The convention is arbitrary and symmetric; [`Polarity::HighThenLow`]
//! flips it for interoperability experiments. Bytes are serialized
//! MSB-first, so one byte is 8 bits = 16 chips.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("chip stream has odd length {len}; chips come in per-bit pairs")]
    OddChipCount { len: usize },
    #[error("invalid chip pair at bit index {bit_index}: both chips equal")]
    InvalidChipPair { bit_index: usize },
    #[error("invalid chip rate {chip_rate_hz} Hz; must be > 0")]
    InvalidChipRate { chip_rate_hz: f64 },
}

/// Chip polarity convention: which chip order encodes a `1` bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    /// Bit `1` → `(0, 1)`, bit `0` → `(1, 0)` (default).
    #[default]
    LowThenHigh,
    /// Bit `1` → `(1, 0)`, bit `0` → `(0, 1)`.
    HighThenLow,
}

/// A stream of binary chip levels (each element is 0 or 1); one chip maps
/// to one rectifier state for one chip period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChipStream(pub Vec<u8>);

impl ChipStream {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }
}

/// The over-the-carrier identity frame: optional preamble bytes followed by
/// the private verification key, clocked out at `chip_rate_hz`.
///
/// The key is provisioned once and static for the node's lifetime; the
/// preamble defaults to empty, with `0xAA` available for detector-trigger
/// experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct PvkFrame {
    /// Private verification key bytes (16 in the reference setup).
    pub key: Vec<u8>,
    /// Bytes clocked out before the key; empty by default.
    pub preamble: Vec<u8>,
    /// GPIO toggle rate driving the rectifier (chips per second).
    pub chip_rate_hz: f64,
}

impl PvkFrame {
    pub fn new(key: Vec<u8>, chip_rate_hz: f64) -> Self {
        PvkFrame {
            key,
            preamble: Vec::new(),
            chip_rate_hz,
        }
    }

    /// Total chips in the frame: 16 per byte of preamble + key.
    pub fn chip_count(&self) -> usize {
        16 * (self.preamble.len() + self.key.len())
    }

    /// On-air duration of this frame in seconds.
    pub fn duration_s(&self) -> Result<f64, CodecError> {
        frame_duration_s(self.key.len(), self.preamble.len(), self.chip_rate_hz)
    }
}

// ---------------------------------------------------------------------------
// Bit packing
// ---------------------------------------------------------------------------

/// Unpacks bytes into bits, MSB first: `0xB3` → `1,0,1,1,0,0,1,1`.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(bytes.len() * 8);
    for b in bytes {
        for shift in (0..8).rev() {
            bits.push((b >> shift) & 1);
        }
    }
    bits
}

/// Packs bits (MSB first) back into bytes. The bit count must be a
/// multiple of 8 — frames always carry whole bytes.
pub fn bits_to_bytes(bits: &[u8]) -> Result<Vec<u8>, CodecError> {
    if bits.len() % 8 != 0 {
        return Err(CodecError::OddChipCount { len: bits.len() });
    }
    Ok(bits
        .chunks_exact(8)
        .map(|chunk| chunk.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1)))
        .collect())
}

// ---------------------------------------------------------------------------
// Manchester coding
// ---------------------------------------------------------------------------

/// Encodes bits into Manchester chips under the default polarity.
pub fn encode_manchester(bits: &[u8]) -> ChipStream {
    encode_manchester_with(bits, Polarity::default())
}

/// Encodes bits into Manchester chips: each bit becomes two opposite
/// chips, so the output is exactly twice as long and exactly half ones.
pub fn encode_manchester_with(bits: &[u8], polarity: Polarity) -> ChipStream {
    let mut chips = Vec::with_capacity(bits.len() * 2);
    for &bit in bits {
        let one = (bit != 0) ^ (polarity == Polarity::HighThenLow);
        if one {
            chips.extend_from_slice(&[0, 1]);
        } else {
            chips.extend_from_slice(&[1, 0]);
        }
    }
    ChipStream(chips)
}

/// Decodes Manchester chips back to bits under the default polarity,
/// rejecting the stream on the first malformed pair.
pub fn decode_manchester(chips: &[u8]) -> Result<Vec<u8>, CodecError> {
    decode_manchester_with(chips, Polarity::default())
}

/// Strict Manchester decode: `(0,1)`/`(1,0)` map to bits, `(0,0)`/`(1,1)`
/// are invalid and reported with the offending *bit* index.
pub fn decode_manchester_with(chips: &[u8], polarity: Polarity) -> Result<Vec<u8>, CodecError> {
    if chips.len() % 2 != 0 {
        return Err(CodecError::OddChipCount { len: chips.len() });
    }
    let mut bits = Vec::with_capacity(chips.len() / 2);
    for (bit_index, pair) in chips.chunks_exact(2).enumerate() {
        match decode_pair(pair, polarity) {
            Some(bit) => bits.push(bit),
            None => return Err(CodecError::InvalidChipPair { bit_index }),
        }
    }
    Ok(bits)
}

/// Forgiving Manchester decode for noisy slicer output: malformed pairs
/// (`(0,0)`/`(1,1)`) decode to the previous bit's value (`0` if the first
/// bit is malformed) and their bit indices are reported alongside. A
/// trailing odd chip is ignored.
pub fn decode_manchester_best_effort(chips: &[u8]) -> (Vec<u8>, Vec<usize>) {
    decode_manchester_best_effort_with(chips, Polarity::default())
}

pub fn decode_manchester_best_effort_with(
    chips: &[u8],
    polarity: Polarity,
) -> (Vec<u8>, Vec<usize>) {
    let mut bits = Vec::with_capacity(chips.len() / 2);
    let mut invalid = Vec::new();
    for (bit_index, pair) in chips.chunks_exact(2).enumerate() {
        match decode_pair(pair, polarity) {
            Some(bit) => bits.push(bit),
            None => {
                invalid.push(bit_index);
                bits.push(bits.last().copied().unwrap_or(0));
            }
        }
    }
    (bits, invalid)
}

fn decode_pair(pair: &[u8], polarity: Polarity) -> Option<u8> {
    let raw = match (pair[0] != 0, pair[1] != 0) {
        (false, true) => 1u8,
        (true, false) => 0u8,
        _ => return None,
    };
    Some(raw ^ u8::from(polarity == Polarity::HighThenLow))
}

// ---------------------------------------------------------------------------
// Frame assembly
// ---------------------------------------------------------------------------

/// The full chip stream a node clocks out each cycle: Manchester chips of
/// preamble bytes then key bytes, MSB first.
pub fn frame_chips(frame: &PvkFrame) -> ChipStream {
    let mut bytes = Vec::with_capacity(frame.preamble.len() + frame.key.len());
    bytes.extend_from_slice(&frame.preamble);
    bytes.extend_from_slice(&frame.key);
    encode_manchester(&bytes_to_bits(&bytes))
}

/// On-air frame duration in seconds: `16·(key_len + preamble_len)` chips
/// at `chip_rate_hz`. Scales inversely with chip rate.
pub fn frame_duration_s(
    key_len: usize,
    preamble_len: usize,
    chip_rate_hz: f64,
) -> Result<f64, CodecError> {
    if !(chip_rate_hz > 0.0) {
        return Err(CodecError::InvalidChipRate { chip_rate_hz });
    }
    Ok(16.0 * (key_len + preamble_len) as f64 / chip_rate_hz)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
