//! Duty cycle of one battery-free sensor node.
//!
//! The node has no battery: a rectifier trickles harvested carrier energy
//! into a storage capacitor, and a PMU boots the node when the capacitor
//! reaches `v_start`, cutting it off again at `v_stop`. One duty cycle is
//!
//! 1. **Charging** — dark and silent until the capacitor is full,
//! 2. **Backscattering** — the key frame is clocked out by toggling the
//!    rectifier GPIO (costs nothing from storage by default: the switch
//!    steers reflected carrier power rather than spending stored charge),
//! 3. **Tasking** — sense and broadcast over the ordinary radio, spending
//!    `task_energy_j`, after which the node goes dark and charges again.
//!
//! With the reference storage (220 µF between 3.0 V and 2.2 V) and the
//! default link budget, one cycle takes ≈10 s — the cadence the monitor
//! sees frames at.

use rand::Rng;

use crate::codec::{frame_chips, ChipStream, PvkFrame};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodeError {
    #[error("no harvested power; the node can never finish charging")]
    NoHarvest,
    #[error("invalid {field}: {constraint}")]
    InvalidConfig {
        field: &'static str,
        constraint: &'static str,
    },
}

/// Default settle time between frame end and the BLE broadcast (s): boot,
/// sense, assemble the advertisement.
pub const DEFAULT_TASK_DELAY_S: f64 = 10.0e-3;

// ---------------------------------------------------------------------------
// Configuration and state
// ---------------------------------------------------------------------------

/// Static description of one node: identity, key frame, energy storage,
/// and placement.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub node_id: String,
    /// The identity frame this node backscatters every cycle.
    pub frame: PvkFrame,
    /// Storage capacitance (F).
    pub storage_capacitance_f: f64,
    /// PMU turn-on voltage (V).
    pub v_start: f64,
    /// PMU cut-off voltage (V).
    pub v_stop: f64,
    /// Energy one sense+broadcast task spends (J). Defaults to the full
    /// inter-threshold budget, i.e. the task drains the capacitor back to
    /// `v_stop`.
    pub task_energy_j: f64,
    /// Distance to the CN (m); `None` inherits the link default.
    pub distance_m: Option<f64>,
    /// Frequency-division channel this node backscatters on.
    pub channel: u32,
    /// Uniform random start-time jitter as a fraction of the cycle period;
    /// 0 keeps single-node runs exactly periodic.
    pub phase_jitter: f64,
    /// Settle time between frame end and the BLE broadcast (s).
    pub task_delay_s: f64,
    /// Stored energy spent per rectifier GPIO toggle (J); 0 by default
    /// (backscattering is free).
    pub toggle_energy_j: f64,
}

impl NodeConfig {
    /// A node with the reference storage design: 220 µF cycled between
    /// 3.0 V and 2.2 V, task draining the full budget, co-channel, no
    /// jitter.
    pub fn new(node_id: impl Into<String>, frame: PvkFrame) -> Self {
        let mut cfg = NodeConfig {
            node_id: node_id.into(),
            frame,
            storage_capacitance_f: 220.0e-6,
            v_start: 3.0,
            v_stop: 2.2,
            task_energy_j: 0.0,
            distance_m: None,
            channel: 0,
            phase_jitter: 0.0,
            task_delay_s: DEFAULT_TASK_DELAY_S,
            toggle_energy_j: 0.0,
        };
        cfg.task_energy_j = cycle_energy_budget_j(&cfg);
        cfg
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        if self.node_id.is_empty() {
            return Err(NodeError::InvalidConfig {
                field: "node_id",
                constraint: "must be non-empty",
            });
        }
        if self.frame.key.is_empty() {
            return Err(NodeError::InvalidConfig {
                field: "frame.key",
                constraint: "must be non-empty",
            });
        }
        if !(self.frame.chip_rate_hz > 0.0) {
            return Err(NodeError::InvalidConfig {
                field: "frame.chip_rate_hz",
                constraint: "must be > 0",
            });
        }
        if !(self.storage_capacitance_f > 0.0) {
            return Err(NodeError::InvalidConfig {
                field: "storage_capacitance_f",
                constraint: "must be > 0",
            });
        }
        if !(self.v_stop > 0.0 && self.v_start > self.v_stop) {
            return Err(NodeError::InvalidConfig {
                field: "v_start",
                constraint: "must satisfy v_start > v_stop > 0",
            });
        }
        let budget = cycle_energy_budget_j(self);
        if !(self.task_energy_j >= 0.0 && self.task_energy_j <= budget) {
            return Err(NodeError::InvalidConfig {
                field: "task_energy_j",
                constraint: "must be in [0, cycle energy budget]",
            });
        }
        if let Some(d) = self.distance_m {
            if !(d > 0.0) {
                return Err(NodeError::InvalidConfig {
                    field: "distance_m",
                    constraint: "must be > 0",
                });
            }
        }
        if !(0.0..1.0).contains(&self.phase_jitter) {
            return Err(NodeError::InvalidConfig {
                field: "phase_jitter",
                constraint: "must be in [0, 1)",
            });
        }
        if !(self.task_delay_s >= 0.0) {
            return Err(NodeError::InvalidConfig {
                field: "task_delay_s",
                constraint: "must be >= 0",
            });
        }
        if !(self.toggle_energy_j >= 0.0) {
            return Err(NodeError::InvalidConfig {
                field: "toggle_energy_j",
                constraint: "must be >= 0",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeMode {
    Charging,
    Backscattering,
    Tasking,
}

/// Mutable per-node simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// Energy currently in the storage capacitor (J).
    pub stored_energy_j: f64,
    pub mode: NodeMode,
    /// Completed duty cycles.
    pub cycle_count: u64,
}

impl NodeState {
    /// State at simulation start: the node has just finished a task, so
    /// the capacitor sits at the post-task level and charging begins.
    pub fn initial(cfg: &NodeConfig) -> NodeState {
        NodeState {
            stored_energy_j: full_charge_j(cfg) - cfg.task_energy_j,
            mode: NodeMode::Charging,
            cycle_count: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Energy model
// ---------------------------------------------------------------------------

/// Energy stored at the PMU turn-on voltage: `½·C·v_start²` (J).
pub fn full_charge_j(cfg: &NodeConfig) -> f64 {
    0.5 * cfg.storage_capacitance_f * cfg.v_start * cfg.v_start
}

/// Usable energy per duty cycle: `½·C·(v_start² − v_stop²)` (J).
pub fn cycle_energy_budget_j(cfg: &NodeConfig) -> f64 {
    0.5 * cfg.storage_capacitance_f * (cfg.v_start * cfg.v_start - cfg.v_stop * cfg.v_stop)
}

/// Seconds to charge `budget_j` at constant harvested DC power.
/// Zero budget charges instantly; zero or negative power never finishes.
pub fn charge_time_s(budget_j: f64, harvest_dc_power_w: f64) -> Result<f64, NodeError> {
    if !(harvest_dc_power_w > 0.0) {
        return Err(NodeError::NoHarvest);
    }
    if budget_j <= 0.0 {
        return Ok(0.0);
    }
    Ok(budget_j / harvest_dc_power_w)
}

// ---------------------------------------------------------------------------
// Waveform
// ---------------------------------------------------------------------------

/// One backscattered frame placed on the timeline: chip levels starting at
/// `start_s`, one chip per `chip_period_s`. Level 1 means the rectifier is
/// in its reflective state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipWaveform {
    pub start_s: f64,
    pub chip_period_s: f64,
    pub chips: ChipStream,
}

impl ChipWaveform {
    /// Total on-air span (s).
    pub fn span_s(&self) -> f64 {
        self.chips.len() as f64 * self.chip_period_s
    }

    /// Time the last chip ends (s).
    pub fn end_s(&self) -> f64 {
        self.start_s + self.span_s()
    }

    /// Chip level at time `t`, or `None` outside `[start_s, end_s)`.
    /// Chips are half-open intervals `[k·T, (k+1)·T)`.
    pub fn level_at(&self, t_s: f64) -> Option<u8> {
        if t_s < self.start_s || t_s >= self.end_s() || self.chips.is_empty() {
            return None;
        }
        let k = ((t_s - self.start_s) / self.chip_period_s) as usize;
        // Guard the rounding knife-edge right at the end boundary.
        Some(self.chips.as_slice()[k.min(self.chips.len() - 1)])
    }

    /// The `(time, level)` switch points: the initial level at `start_s`
    /// plus one entry per level change. Manchester coding guarantees the
    /// final entry lands at the start of the last chip.
    pub fn transitions(&self) -> Vec<(f64, u8)> {
        let mut out = Vec::new();
        let mut prev = None;
        for (k, &level) in self.chips.as_slice().iter().enumerate() {
            if prev != Some(level) {
                out.push((self.start_s + k as f64 * self.chip_period_s, level));
                prev = Some(level);
            }
        }
        out
    }

    /// GPIO toggles spent clocking the frame out (level changes, the
    /// initial switch included).
    pub fn toggle_count(&self) -> usize {
        self.transitions().len()
    }
}

/// Lays the node's identity frame onto the timeline starting at
/// `start_s`.
pub fn emit_waveform(cfg: &NodeConfig, start_s: f64) -> Result<ChipWaveform, NodeError> {
    if !(cfg.frame.chip_rate_hz > 0.0) {
        return Err(NodeError::InvalidConfig {
            field: "frame.chip_rate_hz",
            constraint: "must be > 0",
        });
    }
    Ok(ChipWaveform {
        start_s,
        chip_period_s: 1.0 / cfg.frame.chip_rate_hz,
        chips: frame_chips(&cfg.frame),
    })
}

// ---------------------------------------------------------------------------
// Duty cycle
// ---------------------------------------------------------------------------

/// Everything one completed duty cycle produced, for the engine to
/// schedule and account.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    /// When the PMU woke the node (capacitor full, jitter applied).
    pub wake_time_s: f64,
    /// The backscattered key frame (starts at `wake_time_s`).
    pub frame: ChipWaveform,
    /// When the BLE advertisement goes on air.
    pub broadcast_time_s: f64,
    pub energy_at_wake_j: f64,
    pub energy_after_frame_j: f64,
    pub energy_after_task_j: f64,
}

/// Advances one full duty cycle from `now_s`: charge to `v_start`,
/// backscatter the key frame, run the sense+broadcast task.
///
/// Call with the node in `Charging` mode; the returned state is back in
/// `Charging` with `cycle_count` bumped, ready for the next call. The
/// wake time is `now + time-to-full` plus, when `phase_jitter > 0`, a
/// uniform draw from `[0, phase_jitter · nominal period)`; jitter 0 draws
/// nothing from `rng`, keeping event times exactly periodic.
pub fn next_cycle<R: Rng + ?Sized>(
    state: &NodeState,
    cfg: &NodeConfig,
    harvest_dc_power_w: f64,
    now_s: f64,
    rng: &mut R,
) -> Result<(CycleOutcome, NodeState), NodeError> {
    debug_assert_eq!(state.mode, NodeMode::Charging, "cycle starts from Charging");
    let full = full_charge_j(cfg);
    let deficit = (full - state.stored_energy_j).max(0.0);
    let t_charge = charge_time_s(deficit, harvest_dc_power_w)?;

    let mut wake = now_s + t_charge;
    if cfg.phase_jitter > 0.0 {
        let frame_span = cfg.frame.chip_count() as f64 / cfg.frame.chip_rate_hz;
        let nominal_period = t_charge + frame_span + cfg.task_delay_s;
        wake += rng.gen_range(0.0..cfg.phase_jitter * nominal_period);
    }

    let frame = emit_waveform(cfg, wake)?;
    let energy_after_frame = full - frame.toggle_count() as f64 * cfg.toggle_energy_j;
    let energy_after_task = (energy_after_frame - cfg.task_energy_j).max(0.0);
    let broadcast_time_s = frame.end_s() + cfg.task_delay_s;

    let outcome = CycleOutcome {
        wake_time_s: wake,
        frame,
        broadcast_time_s,
        energy_at_wake_j: full,
        energy_after_frame_j: energy_after_frame,
        energy_after_task_j: energy_after_task,
    };
    let next = NodeState {
        stored_energy_j: energy_after_task,
        mode: NodeMode::Charging,
        cycle_count: state.cycle_count + 1,
    };
    Ok((outcome, next))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
