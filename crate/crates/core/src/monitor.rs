//! P-wave monitor: recovers node keys from the power ripple at the CN
//! monitor port and gates BLE broadcasts on them.
//!
//! The decode pipeline runs in four stages, each usable on its own:
//!
//! 1. [`detect_frame`] — locate a frame-shaped deviation from the idle
//!    baseline with a moving-average threshold detector,
//! 2. [`estimate_levels`] — split the frame window into the two chip
//!    power levels with a 1-D two-means clustering,
//! 3. [`slice_chips`] — integrate the middle of each chip period against
//!    the level threshold,
//! 4. `decode` — Manchester-decode the chips back to key bytes
//!    ([`decode_frame`] composes all four and refines chip alignment).
//!
//! Everything works on *relative* power: adding a constant dB offset to a
//! trace changes no decoding decision, which is what makes the tiny
//! (≈0.15 dB) dynamic range workable.
//!
//! A note on alignment: the envelope detector locks onto the first *high*
//! chip, which trails the true frame start by one chip whenever the lead
//! bit encodes low-first. [`decode_frame`] therefore scores a small set of
//! sub-chip and whole-chip start offsets by invalid-pair count and then by
//! waveform residual, and keeps the best. The two constant keys (all
//! zeros, all ones) are phase-degenerate under this — an unframed
//! alternating chip stream shifted by one chip is another valid Manchester
//! stream — and cannot be pinned down by any detector without a preamble;
//! every other key has a unique zero-error alignment.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{self, ChipStream, PvkFrame};

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("no frame-shaped deviation above the detection floor")]
    NoFrame,
    #[error("trace too short: holds {have_s:.6} s, frame needs {need_s:.6} s")]
    TraceTooShort { need_s: f64, have_s: f64 },
    #[error("frame window is flat: level spread below the detection floor")]
    DegenerateLevels,
    #[error(
        "sample rate {sample_rate_hz} Hz under-samples chip rate {chip_rate_hz} Hz; need >= 4x"
    )]
    InsufficientOversampling {
        sample_rate_hz: f64,
        chip_rate_hz: f64,
    },
    #[error("malformed trace at line {line}: {reason}")]
    MalformedTrace { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Power traces
// ---------------------------------------------------------------------------

/// A uniformly sampled power measurement at the monitor port, in dBm.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub sample_rate_hz: f64,
    /// Absolute time of sample 0 (s).
    pub start_time_s: f64,
    /// Frequency-division channel this trace was sensed on.
    pub channel: u32,
    pub samples_dbm: Vec<f64>,
}

impl PowerTrace {
    pub fn len(&self) -> usize {
        self.samples_dbm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples_dbm.is_empty()
    }

    /// Absolute time of sample `i` (s).
    pub fn time_of(&self, i: usize) -> f64 {
        self.start_time_s + i as f64 / self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// Writes the trace as CSV with the fixed header `time_s,power_dbm`,
    /// timestamps at nanosecond resolution.
    pub fn write_csv(&self, path: &Path) -> Result<(), MonitorError> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        writeln!(out, "time_s,power_dbm")?;
        for (i, p) in self.samples_dbm.iter().enumerate() {
            writeln!(out, "{:.9},{:.6}", self.time_of(i), p)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a trace written by [`PowerTrace::write_csv`] (or any
    /// two-column `time_s,power_dbm` CSV with a uniform time grid). The
    /// sample rate is recovered from the timestamps; the channel is not
    /// persisted and comes back as 0.
    pub fn read_csv(path: &Path) -> Result<PowerTrace, MonitorError> {
        let file = std::fs::File::open(path)?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);

        let headers = rdr
            .headers()
            .map_err(|e| MonitorError::MalformedTrace {
                line: 1,
                reason: e.to_string(),
            })?
            .clone();
        if headers.len() < 2 || &headers[0] != "time_s" || &headers[1] != "power_dbm" {
            return Err(MonitorError::MalformedTrace {
                line: 1,
                reason: format!("expected header `time_s,power_dbm`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }

        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let line = idx + 2; // header is line 1
            let record = record.map_err(|e| MonitorError::MalformedTrace {
                line,
                reason: e.to_string(),
            })?;
            let parse = |field: usize, name: &str| -> Result<f64, MonitorError> {
                record
                    .get(field)
                    .ok_or_else(|| MonitorError::MalformedTrace {
                        line,
                        reason: format!("missing {name} column"),
                    })?
                    .parse::<f64>()
                    .map_err(|e| MonitorError::MalformedTrace {
                        line,
                        reason: format!("bad {name}: {e}"),
                    })
            };
            times.push(parse(0, "time_s")?);
            samples.push(parse(1, "power_dbm")?);
        }

        if samples.len() < 2 {
            return Err(MonitorError::MalformedTrace {
                line: times.len() + 1,
                reason: "need at least two samples to recover the sample rate".into(),
            });
        }
        let span = times[times.len() - 1] - times[0];
        if !(span > 0.0) {
            return Err(MonitorError::MalformedTrace {
                line: 2,
                reason: "timestamps must be strictly increasing".into(),
            });
        }
        let dt = span / (times.len() - 1) as f64;
        for (i, pair) in times.windows(2).enumerate() {
            let step = pair[1] - pair[0];
            if (step - dt).abs() > 0.01 * dt {
                return Err(MonitorError::MalformedTrace {
                    line: i + 3,
                    reason: format!("non-uniform sampling: step {step:.3e}, grid {dt:.3e}"),
                });
            }
        }
        Ok(PowerTrace {
            sample_rate_hz: 1.0 / dt,
            start_time_s: times[0],
            channel: 0,
            samples_dbm: samples,
        })
    }
}

// ---------------------------------------------------------------------------
// Detector configuration
// ---------------------------------------------------------------------------

/// Tunables of the decode pipeline. Defaults match the reference monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Smallest deviation from baseline treated as a frame (dB).
    pub floor_db: f64,
    /// Moving-average smoothing window as a fraction of one chip.
    pub smooth_chip_frac: f64,
    /// Central fraction of each chip period integrated by the slicer.
    pub integrate_frac: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            floor_db: 0.01,
            smooth_chip_frac: 0.25,
            integrate_frac: 0.5,
        }
    }
}

/// Minimum sample-rate over chip-rate ratio the slicer needs.
pub const MIN_OVERSAMPLING: f64 = 4.0;

// ---------------------------------------------------------------------------
// Stage 1: frame detection
// ---------------------------------------------------------------------------

/// Locates one frame of `expected_chips` chips in the trace.
///
/// The baseline is the median of the leading 10 % of samples; the frame
/// start is the first sample where a centered moving average (window =
/// `smooth_chip_frac` of a chip) stays more than half the observed peak
/// deviation above baseline for at least one window's worth of samples.
/// Returns the `[start, end)` sample range covering the expected frame
/// length.
///
/// A candidate start is confirmed by integrated energy: the mean power
/// over the whole putative frame must sit at least `0.4 · floor_db`
/// above baseline. A genuine frame holds its Manchester-balanced mean
/// near half its swing above baseline for every sample, whereas a noise
/// excursion that trips the threshold cannot sustain any offset across
/// thousands of samples, so traces holding no frame come back
/// [`MonitorError::NoFrame`] instead of a random noise peak.
///
/// Accuracy is one chip: the detector locks onto the first *high* chip,
/// which is the frame start or one chip after it depending on the lead
/// bit. [`decode_frame`] compensates.
pub fn detect_frame(
    trace: &PowerTrace,
    expected_chips: usize,
    chip_rate_hz: f64,
    det: &DetectorConfig,
) -> Result<(usize, usize), MonitorError> {
    let spc = samples_per_chip(trace.sample_rate_hz, chip_rate_hz)?;
    let frame_len = (expected_chips as f64 * spc).round() as usize;
    if trace.len() < frame_len || frame_len == 0 {
        return Err(MonitorError::TraceTooShort {
            need_s: expected_chips as f64 / chip_rate_hz,
            have_s: trace.duration_s(),
        });
    }

    let samples = &trace.samples_dbm;
    let lead = (samples.len() / 10).max(1);
    let baseline = median(&samples[..lead]);

    let w = ((spc * det.smooth_chip_frac).round() as usize).max(1);
    let ma = moving_average(samples, w);

    let peak = ma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Tiny slack keeps a spread of exactly floor_db detectable despite
    // float rounding in the dB conversions upstream.
    if peak - baseline + 1e-12 < det.floor_db {
        return Err(MonitorError::NoFrame);
    }
    let threshold = baseline + 0.5 * (peak - baseline);

    // First run of >= w consecutive smoothed samples above threshold.
    let mut run = 0usize;
    let mut start = None;
    for (i, &v) in ma.iter().enumerate() {
        if v > threshold {
            run += 1;
            if run >= w {
                start = Some(i + 1 - run);
                break;
            }
        } else {
            run = 0;
        }
    }
    let start = start.ok_or(MonitorError::NoFrame)?;
    let end = start + frame_len;
    if end > samples.len() {
        // The trace could hold a frame (checked above), yet the rise sits
        // too close to the tail for one to fit: whatever tripped the
        // threshold was not the expected frame.
        return Err(MonitorError::NoFrame);
    }

    // Energy confirmation. The 0.4 factor keeps a frame whose swing sits
    // exactly at the floor (mean offset = floor / 2) comfortably inside.
    let mean = samples[start..end].iter().sum::<f64>() / frame_len as f64;
    if mean - baseline < 0.4 * det.floor_db {
        return Err(MonitorError::NoFrame);
    }
    Ok((start, end))
}

// ---------------------------------------------------------------------------
// Stage 2: level estimation
// ---------------------------------------------------------------------------

/// Splits a frame window into its two chip power levels with a 1-D
/// two-means clustering (midrange initialisation, at most 100 rounds,
/// converged at 1e-9 dB). Returns `(high, low, threshold)` where the
/// threshold is the midpoint of the final means.
///
/// Manchester coding guarantees the two clusters are equally populated,
/// which is what makes the midrange start reliable.
pub fn estimate_levels(window: &[f64], floor_db: f64) -> Result<(f64, f64, f64), MonitorError> {
    if window.is_empty() {
        return Err(MonitorError::DegenerateLevels);
    }
    let min = window.iter().copied().fold(f64::INFINITY, f64::min);
    let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min + 1e-12 < floor_db {
        return Err(MonitorError::DegenerateLevels);
    }

    let mut threshold = 0.5 * (min + max);
    let mut high = max;
    let mut low = min;
    for _ in 0..100 {
        let (mut sum_hi, mut n_hi, mut sum_lo, mut n_lo) = (0.0, 0usize, 0.0, 0usize);
        for &v in window {
            if v > threshold {
                sum_hi += v;
                n_hi += 1;
            } else {
                sum_lo += v;
                n_lo += 1;
            }
        }
        if n_hi == 0 || n_lo == 0 {
            return Err(MonitorError::DegenerateLevels);
        }
        high = sum_hi / n_hi as f64;
        low = sum_lo / n_lo as f64;
        let next = 0.5 * (high + low);
        let moved = (next - threshold).abs();
        threshold = next;
        if moved <= 1e-9 {
            break;
        }
    }
    Ok((high, low, threshold))
}

// ---------------------------------------------------------------------------
// Stage 3: chip slicing
// ---------------------------------------------------------------------------

/// Hardens a frame window into chips: the central
/// [`DetectorConfig::integrate_frac`] of each chip period is averaged and
/// compared to `threshold`. Only the level *relative* to the threshold
/// matters, so a constant dB offset on both leaves the chips unchanged.
pub fn slice_chips(
    window: &[f64],
    sample_rate_hz: f64,
    chip_rate_hz: f64,
    threshold: f64,
) -> Result<ChipStream, MonitorError> {
    slice_chips_with(
        window,
        sample_rate_hz,
        chip_rate_hz,
        threshold,
        DetectorConfig::default().integrate_frac,
    )
}

pub fn slice_chips_with(
    window: &[f64],
    sample_rate_hz: f64,
    chip_rate_hz: f64,
    threshold: f64,
    integrate_frac: f64,
) -> Result<ChipStream, MonitorError> {
    let spc = samples_per_chip(sample_rate_hz, chip_rate_hz)?;
    let n_chips = (window.len() as f64 / spc).round() as usize;
    let mut chips = Vec::with_capacity(n_chips);
    for k in 0..n_chips {
        let centre = k as f64 + 0.5;
        let lo = ((centre - 0.5 * integrate_frac) * spc).round() as usize;
        let hi = (((centre + 0.5 * integrate_frac) * spc).round() as usize).min(window.len());
        debug_assert!(hi > lo, "integration window collapsed at chip {k}");
        let mean = window[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        chips.push(u8::from(mean > threshold));
    }
    Ok(ChipStream(chips))
}

// ---------------------------------------------------------------------------
// Stage 4: full decode
// ---------------------------------------------------------------------------

/// Decode verdict for one trace window.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStatus {
    /// Every chip pair was valid Manchester; the key is exact.
    Decoded,
    /// No frame-shaped deviation found in the trace.
    NoFrame,
    /// Frame found, but some chip pairs were malformed; the key field is
    /// withheld and the bits were filled best-effort.
    ChipErrors { count: usize, first_bit_index: usize },
}

/// Outcome of decoding one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub status: DecodeStatus,
    /// Recovered key bytes; present exactly when `status == Decoded`.
    pub key: Option<Vec<u8>>,
    /// Measured frame start (s, absolute trace time). 0 when no frame.
    pub frame_start_s: f64,
    /// Measured frame end (s): start plus the expected frame span. The
    /// broadcast authentication window is anchored here.
    pub frame_end_s: f64,
    /// Estimated high−low level spread (dB). 0 when no frame.
    pub measured_dr_db: f64,
}

impl DecodeResult {
    fn no_frame() -> DecodeResult {
        DecodeResult {
            status: DecodeStatus::NoFrame,
            key: None,
            frame_start_s: 0.0,
            frame_end_s: 0.0,
            measured_dr_db: 0.0,
        }
    }

    /// The wire form: a single JSON object with fields `status`,
    /// `key_hex`, `frame_start_s`, `measured_dr_db`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "status": self.status,
            "key_hex": self.key.as_ref().map(hex::encode),
            "frame_start_s": self.frame_start_s,
            "measured_dr_db": self.measured_dr_db,
        })
    }
}

/// Runs the full pipeline against a trace expected to hold one frame
/// shaped like `frame_spec` (same byte lengths and chip rate; the key
/// *content* is what is being recovered).
///
/// A missing or flat frame yields `Ok` with [`DecodeStatus::NoFrame`];
/// hard usage errors (trace shorter than the frame, insufficient
/// oversampling) stay `Err`.
pub fn decode_frame(trace: &PowerTrace, frame_spec: &PvkFrame) -> Result<DecodeResult, MonitorError> {
    decode_frame_with(trace, frame_spec, &DetectorConfig::default())
}

pub fn decode_frame_with(
    trace: &PowerTrace,
    frame_spec: &PvkFrame,
    det: &DetectorConfig,
) -> Result<DecodeResult, MonitorError> {
    let chip_rate = frame_spec.chip_rate_hz;
    let expected_chips = frame_spec.chip_count();
    let spc = samples_per_chip(trace.sample_rate_hz, chip_rate)?;
    let frame_len = (expected_chips as f64 * spc).round() as usize;

    let (start, end) = match detect_frame(trace, expected_chips, chip_rate, det) {
        Ok(range) => range,
        Err(MonitorError::NoFrame) => return Ok(DecodeResult::no_frame()),
        Err(e) => return Err(e),
    };
    let (high, low, threshold) = match estimate_levels(&trace.samples_dbm[start..end], det.floor_db)
    {
        Ok(levels) => levels,
        // A detected deviation that collapses to one level was a noise
        // blip, not a frame.
        Err(MonitorError::DegenerateLevels) => return Ok(DecodeResult::no_frame()),
        Err(e) => return Err(e),
    };

    // The detector is late by up to a quarter chip of smoothing bias plus
    // possibly one whole chip of lead-bit ambiguity; score those start
    // offsets and keep the best alignment.
    let mut best: Option<(usize, f64, Vec<u8>, Vec<usize>, usize)> = None;
    for whole in [0.0, -1.0] {
        for sub in [0.0, -0.125, -0.25, -0.375] {
            let shift = ((whole + sub) * spc).round() as isize;
            let Some(cand) = start.checked_add_signed(shift) else {
                continue;
            };
            if cand + frame_len > trace.len() {
                continue;
            }
            let window = &trace.samples_dbm[cand..cand + frame_len];
            let chips = slice_chips_with(
                window,
                trace.sample_rate_hz,
                chip_rate,
                threshold,
                det.integrate_frac,
            )?;
            let (bits, invalid) = codec::decode_manchester_best_effort(chips.as_slice());
            let residual = waveform_residual(window, chips.as_slice(), spc, high, low);
            let better = match &best {
                None => true,
                Some((_, best_res, _, best_invalid, _)) => {
                    (invalid.len(), residual) < (best_invalid.len(), *best_res)
                }
            };
            if better {
                best = Some((cand, residual, bits, invalid, chips.len()));
            }
        }
    }
    let (cand, _, bits, invalid, _) = best.expect("offset 0 candidate always fits");

    let frame_start_s = trace.time_of(cand);
    let frame_end_s = frame_start_s + expected_chips as f64 / chip_rate;
    let measured_dr_db = high - low;

    if invalid.is_empty() {
        // Strip the preamble bits; the key is the tail.
        let bytes = codec::bits_to_bytes(&bits).expect("frame bits are whole bytes");
        let key = bytes[frame_spec.preamble.len()..].to_vec();
        Ok(DecodeResult {
            status: DecodeStatus::Decoded,
            key: Some(key),
            frame_start_s,
            frame_end_s,
            measured_dr_db,
        })
    } else {
        Ok(DecodeResult {
            status: DecodeStatus::ChipErrors {
                count: invalid.len(),
                first_bit_index: invalid[0],
            },
            key: None,
            frame_start_s,
            frame_end_s,
            measured_dr_db,
        })
    }
}

/// Mean squared error (dB²) between a window and the two-level waveform
/// its sliced chips imply. Discriminates sub-chip misalignment: the true
/// alignment reconstructs the window almost exactly.
fn waveform_residual(window: &[f64], chips: &[u8], spc: f64, high: f64, low: f64) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, &v) in window.iter().enumerate() {
        let k = ((i as f64 / spc) as usize).min(chips.len().saturating_sub(1));
        let model = if chips[k] != 0 { high } else { low };
        let err = v - model;
        acc += err * err;
    }
    acc / window.len() as f64
}

fn samples_per_chip(sample_rate_hz: f64, chip_rate_hz: f64) -> Result<f64, MonitorError> {
    if !(chip_rate_hz > 0.0) || !(sample_rate_hz > 0.0) || sample_rate_hz < MIN_OVERSAMPLING * chip_rate_hz
    {
        return Err(MonitorError::InsufficientOversampling {
            sample_rate_hz,
            chip_rate_hz,
        });
    }
    Ok(sample_rate_hz / chip_rate_hz)
}

fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("power samples are comparable"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Centered moving average with window `w` (shrinks at the edges).
fn moving_average(samples: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    let mut prefix = Vec::with_capacity(samples.len() + 1);
    prefix.push(0.0);
    for &s in samples {
        prefix.push(prefix.last().unwrap() + s);
    }
    (0..samples.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(samples.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Authentication
// ---------------------------------------------------------------------------

/// Why a broadcast was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// No decodable frame preceded the broadcast.
    NoFrame,
    /// A frame decoded cleanly but its key was not this node's.
    KeyMismatch,
    /// Key matched but the broadcast missed the time window.
    WindowExpired,
    /// The broadcaster is not in the key registry.
    UnknownNode,
    /// A frame was found but had malformed chip pairs.
    CorruptFrame,
}

impl RejectReason {
    /// Stable snake_case name, used as the report map key.
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::NoFrame => "no_frame",
            RejectReason::KeyMismatch => "key_mismatch",
            RejectReason::WindowExpired => "window_expired",
            RejectReason::UnknownNode => "unknown_node",
            RejectReason::CorruptFrame => "corrupt_frame",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthOutcome {
    Accept,
    Reject(RejectReason),
}

/// Expected key per node, plus the broadcast freshness window.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRegistry {
    keys: BTreeMap<String, Vec<u8>>,
    /// Longest acceptable gap between frame end and broadcast (s).
    pub auth_window_s: f64,
}

pub const DEFAULT_AUTH_WINDOW_S: f64 = 1.0;

impl Default for KeyRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl KeyRegistry {
    pub fn new() -> KeyRegistry {
        KeyRegistry {
            keys: BTreeMap::new(),
            auth_window_s: DEFAULT_AUTH_WINDOW_S,
        }
    }

    pub fn insert(&mut self, node_id: impl Into<String>, key: Vec<u8>) {
        self.keys.insert(node_id.into(), key);
    }

    pub fn expected(&self, node_id: &str) -> Option<&[u8]> {
        self.keys.get(node_id).map(Vec::as_slice)
    }
}

/// Gate for one BLE broadcast: accept only a registered node whose frame
/// decoded to its registered key and whose broadcast arrived within
/// `[frame_end, frame_end + auth_window]`.
pub fn authenticate(
    node_id: &str,
    result: &DecodeResult,
    ble_event_time_s: f64,
    registry: &KeyRegistry,
) -> AuthOutcome {
    let Some(expected) = registry.expected(node_id) else {
        return AuthOutcome::Reject(RejectReason::UnknownNode);
    };
    match &result.status {
        DecodeStatus::NoFrame => AuthOutcome::Reject(RejectReason::NoFrame),
        DecodeStatus::ChipErrors { .. } => AuthOutcome::Reject(RejectReason::CorruptFrame),
        DecodeStatus::Decoded => {
            let key = result
                .key
                .as_deref()
                .expect("key present iff status is Decoded");
            if key != expected {
                return AuthOutcome::Reject(RejectReason::KeyMismatch);
            }
            let gap = ble_event_time_s - result.frame_end_s;
            if gap < 0.0 || gap > registry.auth_window_s {
                return AuthOutcome::Reject(RejectReason::WindowExpired);
            }
            AuthOutcome::Accept
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
