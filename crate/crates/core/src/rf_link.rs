//! Carrier link-budget math for a monostatic wireless-power link with a
//! backscattering node.
//!
//! The charging node (CN) radiates a continuous carrier; the sensor node
//! rectifies it for energy and, by switching its antenna between two
//! reflection coefficients, bounces a modulated fraction of it back. The CN
//! watches the power arriving at its monitor port, which is the sum of
//! carrier leakage (circulator leakage plus static clutter, collapsed into
//! one *effective leakage* term) and the reflected wave. The useful signal
//! is the ratio between the two reflection states after leakage is added —
//! the *dynamic range* — which is tiny (fractions of a dB) and sets how
//! hard the decoder has to work.
//!
//! All powers are dBm, gains dBi, distances metres, frequencies Hz. Linear
//! power is always milliwatts so dBm↔linear conversions stay symmetric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum (m/s).
pub const C_M_S: f64 = 299_792_458.0;

/// Dynamic range the default parameter set is calibrated to (dB). This is
/// the ripple a practical sensing port resolves comfortably, and it is the
/// calibration target applied when no explicit leakage is configured.
pub const DEFAULT_TARGET_DR_DB: f64 = 0.15;

/// Convergence bound for leakage calibration (dB).
pub const CALIBRATION_TOL_DB: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RfError {
    #[error("invalid {field}: {constraint}")]
    InvalidParam {
        field: &'static str,
        constraint: &'static str,
    },
    #[error(
        "target dynamic range {target_db} dB is unreachable (must lie in (0, {ceiling_db} dB))"
    )]
    UnreachableTarget { target_db: f64, ceiling_db: f64 },
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Physical parameters of one CN↔node link.
///
/// `effective_leakage_dbm` is the total carrier power reaching the monitor
/// port when no node is reflecting: circulator leakage plus all static
/// reflections, after whatever cancellation the front-end applies. It is
/// normally obtained from [`calibrate_leakage`] rather than set by hand;
/// the raw, uncancelled floor would be `tx_power_dbm -
/// circulator_isolation_db`, which buries the backscatter ripple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    /// Carrier power at the CN antenna port (dBm).
    pub tx_power_dbm: f64,
    /// Carrier frequency (Hz).
    pub freq_hz: f64,
    /// CN↔node distance (m).
    pub distance_m: f64,
    /// CN antenna gain (dBi).
    pub gain_cn_dbi: f64,
    /// Node antenna gain (dBi).
    pub gain_node_dbi: f64,
    /// Circulator isolation between TX port and monitor port (dB).
    /// Informational for the raw leakage floor; the decode path uses
    /// `effective_leakage_dbm`.
    pub circulator_isolation_db: f64,
    /// Total carrier power at the monitor port with no node reflecting (dBm).
    pub effective_leakage_dbm: f64,
    /// Rectifier reflection coefficient magnitude in the reflective state.
    pub gamma_high: f64,
    /// Rectifier reflection coefficient magnitude in the absorbing state.
    pub gamma_low: f64,
    /// DC conversion efficiency of the node rectifier, (0, 1].
    pub rectifier_efficiency: f64,
    /// Std-dev of Gaussian measurement noise added per trace sample (dB).
    pub noise_sigma_db: f64,
}

impl Default for RfParams {
    /// Reference bench setup: 18 dBm carrier at 868 MHz over 1.3 m, a
    /// +9.2 dBi patch on the CN and a +1.1 dBi compact antenna on the node,
    /// 20 dB circulator isolation, rectifier states Γ = 0.8 / 0.1, 15 %
    /// DC conversion, 0.02 dB sensing noise. Effective leakage is
    /// calibrated so the two backscatter states span
    /// [`DEFAULT_TARGET_DR_DB`] at the monitor port.
    fn default() -> Self {
        let mut p = RfParams {
            tx_power_dbm: 18.0,
            freq_hz: 868.0e6,
            distance_m: 1.3,
            gain_cn_dbi: 9.2,
            gain_node_dbi: 1.1,
            circulator_isolation_db: 20.0,
            effective_leakage_dbm: 0.0, // placeholder, replaced below
            gamma_high: 0.8,
            gamma_low: 0.1,
            rectifier_efficiency: 0.15,
            noise_sigma_db: 0.02,
        };
        p.effective_leakage_dbm = calibrate_leakage(&p, DEFAULT_TARGET_DR_DB)
            .expect("default target is below the default reflection ceiling");
        p
    }
}

impl RfParams {
    /// Checks the physical invariants; returns the first violated field.
    pub fn validate(&self) -> Result<(), RfError> {
        if !(self.freq_hz > 0.0) {
            return Err(RfError::InvalidParam {
                field: "freq_hz",
                constraint: "must be > 0",
            });
        }
        if !(self.distance_m > 0.0) {
            return Err(RfError::InvalidParam {
                field: "distance_m",
                constraint: "must be > 0",
            });
        }
        if !(self.gamma_low >= 0.0) {
            return Err(RfError::InvalidParam {
                field: "gamma_low",
                constraint: "must be >= 0",
            });
        }
        if !(self.gamma_high <= 1.0) {
            return Err(RfError::InvalidParam {
                field: "gamma_high",
                constraint: "must be <= 1 (passive reflector)",
            });
        }
        if !(self.gamma_low < self.gamma_high) {
            return Err(RfError::InvalidParam {
                field: "gamma_low",
                constraint: "must be < gamma_high (states must be distinguishable)",
            });
        }
        if !(self.rectifier_efficiency > 0.0 && self.rectifier_efficiency <= 1.0) {
            return Err(RfError::InvalidParam {
                field: "rectifier_efficiency",
                constraint: "must be in (0, 1]",
            });
        }
        if !(self.noise_sigma_db >= 0.0) {
            return Err(RfError::InvalidParam {
                field: "noise_sigma_db",
                constraint: "must be >= 0",
            });
        }
        if !self.effective_leakage_dbm.is_finite() && self.effective_leakage_dbm != f64::NEG_INFINITY {
            return Err(RfError::InvalidParam {
                field: "effective_leakage_dbm",
                constraint: "must be finite or -inf (zero leakage)",
            });
        }
        Ok(())
    }

    /// Link with the node distance overridden (per-node placement).
    pub fn with_distance(&self, distance_m: f64) -> RfParams {
        RfParams {
            distance_m,
            ..self.clone()
        }
    }
}

/// Which reflection state the node rectifier is switched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReflectionState {
    /// Reflective state (Γ = `gamma_high`), the "1" chip level.
    High,
    /// Absorbing state (Γ = `gamma_low`), the "0" chip level and the idle
    /// state of a node that is merely charging.
    Low,
}

// ---------------------------------------------------------------------------
// dB helpers
// ---------------------------------------------------------------------------

/// dBm → linear milliwatts. `-inf` maps to exactly zero.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    if dbm == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(dbm / 10.0)
    }
}

/// Linear milliwatts → dBm. Zero maps to `-inf` (documented sentinel for
/// "no power"); negative power is a caller bug.
pub fn mw_to_dbm(mw: f64) -> f64 {
    debug_assert!(mw >= 0.0, "negative linear power: {mw}");
    if mw == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * mw.log10()
    }
}

/// Ratio in dB (10·log10).
pub fn ratio_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

// ---------------------------------------------------------------------------
// Link budget
// ---------------------------------------------------------------------------

/// Free-space path loss in dB for one way over `distance_m` at `freq_hz`.
///
/// `20·log10(4π·d·f / c)`. Strictly increasing in both arguments; doubling
/// the distance adds exactly `20·log10 2 ≈ 6.02 dB`.
pub fn fspl_db(freq_hz: f64, distance_m: f64) -> Result<f64, RfError> {
    if !(freq_hz > 0.0) {
        return Err(RfError::InvalidParam {
            field: "freq_hz",
            constraint: "must be > 0",
        });
    }
    if !(distance_m > 0.0) {
        return Err(RfError::InvalidParam {
            field: "distance_m",
            constraint: "must be > 0",
        });
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance_m * freq_hz / C_M_S).log10())
}

/// RF power available at the node antenna output (dBm), before
/// rectification: one-way Friis budget
/// `tx + gain_cn + gain_node − fspl`.
pub fn harvest_power_dbm(p: &RfParams) -> Result<f64, RfError> {
    let fspl = fspl_db(p.freq_hz, p.distance_m)?;
    Ok(p.tx_power_dbm + p.gain_cn_dbi + p.gain_node_dbi - fspl)
}

/// Backscattered power arriving back at the CN monitor port (dBm) for the
/// given reflection state: the carrier goes out and comes back
/// (`2·fspl`, both antenna gains applied twice) and is scaled by the
/// power reflection ratio `20·log10 Γ`.
///
/// Γ = 0 (perfect absorption) returns `-inf`: no reflected power.
pub fn backscatter_power_dbm(p: &RfParams, state: ReflectionState) -> Result<f64, RfError> {
    let gamma = match state {
        ReflectionState::High => p.gamma_high,
        ReflectionState::Low => p.gamma_low,
    };
    if gamma < 0.0 {
        return Err(RfError::InvalidParam {
            field: "gamma",
            constraint: "must be >= 0",
        });
    }
    let fspl = fspl_db(p.freq_hz, p.distance_m)?;
    if gamma == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(p.tx_power_dbm + 2.0 * (p.gain_cn_dbi + p.gain_node_dbi) - 2.0 * fspl
        + 20.0 * gamma.log10())
}

/// Dynamic range of the P-wave ripple (dB): the monitor-port power ratio
/// between the node's two reflection states, leakage included. Computed in
/// linear milliwatts:
/// `10·log10((L + P_high) / (L + P_low))`.
///
/// Monotonic: grows as leakage shrinks or `gamma_high` rises, and tends to
/// the reflection-limited ceiling `20·log10(gamma_high/gamma_low)` as
/// leakage → 0.
pub fn dynamic_range_db(p: &RfParams) -> Result<f64, RfError> {
    let l = dbm_to_mw(p.effective_leakage_dbm);
    let ph = dbm_to_mw(backscatter_power_dbm(p, ReflectionState::High)?);
    let pl = dbm_to_mw(backscatter_power_dbm(p, ReflectionState::Low)?);
    Ok(ratio_db((l + ph) / (l + pl)))
}

/// Reflection-limited dynamic range ceiling (dB): the value
/// [`dynamic_range_db`] approaches as effective leakage vanishes.
/// Infinite when `gamma_low` is zero.
pub fn dynamic_range_ceiling_db(p: &RfParams) -> Result<f64, RfError> {
    let ph = dbm_to_mw(backscatter_power_dbm(p, ReflectionState::High)?);
    let pl = dbm_to_mw(backscatter_power_dbm(p, ReflectionState::Low)?);
    if pl == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(ratio_db(ph / pl))
}

/// Effective leakage (dBm) that makes [`dynamic_range_db`] hit
/// `target_db` exactly, solving
/// `10·log10((L + P_high)/(L + P_low)) = target` for `L` in linear
/// milliwatts:
///
/// `L = (P_high − r·P_low) / (r − 1)`, with `r = 10^(target/10)`.
///
/// The closed form is exact (well inside [`CALIBRATION_TOL_DB`]). Targets
/// at or above the reflection-limited ceiling, or ≤ 0, are unreachable.
pub fn calibrate_leakage(p: &RfParams, target_db: f64) -> Result<f64, RfError> {
    let ceiling = dynamic_range_ceiling_db(p)?;
    if !(target_db > 0.0) || target_db >= ceiling {
        return Err(RfError::UnreachableTarget {
            target_db,
            ceiling_db: ceiling,
        });
    }
    let ph = dbm_to_mw(backscatter_power_dbm(p, ReflectionState::High)?);
    let pl = dbm_to_mw(backscatter_power_dbm(p, ReflectionState::Low)?);
    let r = 10f64.powf(target_db / 10.0);
    let leak_mw = (ph - r * pl) / (r - 1.0);
    Ok(mw_to_dbm(leak_mw))
}

/// DC power (watts) the node rectifier delivers to storage:
/// harvested RF power times conversion efficiency.
pub fn harvest_dc_power_w(p: &RfParams) -> Result<f64, RfError> {
    let rf_mw = dbm_to_mw(harvest_power_dbm(p)?);
    Ok(p.rectifier_efficiency * rf_mw * 1e-3)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
