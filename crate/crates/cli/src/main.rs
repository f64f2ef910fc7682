//! `pwave` — command-line front end for the backscatter key-exchange
//! simulator.
//!
//! Exit codes: 0 success, 1 invalid arguments or domain/config errors,
//! 2 I/O errors (unreadable or unwritable files).

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pwave_core::codec::{bytes_to_bits, encode_manchester, PvkFrame};
use pwave_core::engine::{
    collision_prob_analytic, collision_prob_mc, run_scenario, run_scenario_with_traces,
    EngineError,
};
use pwave_core::monitor::{decode_frame, MonitorError, PowerTrace};
use pwave_core::rf_link::{
    backscatter_power_dbm, calibrate_leakage, dynamic_range_ceiling_db, dynamic_range_db, fspl_db,
    harvest_dc_power_w, harvest_power_dbm, ReflectionState, RfParams, DEFAULT_TARGET_DR_DB,
};
use pwave_core::scenario::{load_scenario, ScenarioError};

#[derive(Parser)]
#[command(
    name = "pwave",
    version,
    about = "Deterministic simulator for backscatter key exchange over a wireless power carrier",
    max_term_width = 100
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the carrier link budget for one monitor-node placement
    Linkbudget(LinkbudgetArgs),
    /// Solve for the effective leakage that yields a target dynamic range
    Calibrate(CalibrateArgs),
    /// Manchester-encode a key into its chip sequence
    Encode(EncodeArgs),
    /// Detect, decode and report one frame from a power-trace CSV
    Decode(DecodeArgs),
    /// Run a scenario file and print its report
    Simulate(SimulateArgs),
    /// Collision probability for unsynchronised periodic transmitters
    Collide(CollideArgs),
}

/// RF overrides shared by `linkbudget` and `calibrate`. Anything omitted
/// falls back to the reference link; an omitted leakage is calibrated so
/// the link hits the reference dynamic-range target.
#[derive(Args)]
struct RfArgs {
    /// Carrier transmit power (dBm)
    #[arg(long)]
    tx_power_dbm: Option<f64>,
    /// Carrier frequency (Hz)
    #[arg(long)]
    freq_hz: Option<f64>,
    /// Monitor-to-node distance (m)
    #[arg(long)]
    distance_m: Option<f64>,
    /// Monitor antenna gain (dBi)
    #[arg(long)]
    gain_cn_dbi: Option<f64>,
    /// Node antenna gain (dBi)
    #[arg(long)]
    gain_node_dbi: Option<f64>,
    /// Circulator isolation (dB)
    #[arg(long)]
    circulator_isolation_db: Option<f64>,
    /// Effective carrier leakage at the monitor port (dBm)
    #[arg(long)]
    effective_leakage_dbm: Option<f64>,
    /// Reflection coefficient, reflective state (0..=1)
    #[arg(long)]
    gamma_high: Option<f64>,
    /// Reflection coefficient, absorbing state (0..=1)
    #[arg(long)]
    gamma_low: Option<f64>,
    /// RF-to-DC rectifier efficiency (0..=1)
    #[arg(long)]
    rectifier_efficiency: Option<f64>,
    /// Monitor sensing noise, standard deviation (dB)
    #[arg(long)]
    noise_sigma_db: Option<f64>,
}

impl RfArgs {
    fn resolve(&self) -> Result<RfParams, CliError> {
        let mut p = RfParams::default();
        if let Some(v) = self.tx_power_dbm {
            p.tx_power_dbm = v;
        }
        if let Some(v) = self.freq_hz {
            p.freq_hz = v;
        }
        if let Some(v) = self.distance_m {
            p.distance_m = v;
        }
        if let Some(v) = self.gain_cn_dbi {
            p.gain_cn_dbi = v;
        }
        if let Some(v) = self.gain_node_dbi {
            p.gain_node_dbi = v;
        }
        if let Some(v) = self.circulator_isolation_db {
            p.circulator_isolation_db = v;
        }
        if let Some(v) = self.gamma_high {
            p.gamma_high = v;
        }
        if let Some(v) = self.gamma_low {
            p.gamma_low = v;
        }
        if let Some(v) = self.rectifier_efficiency {
            p.rectifier_efficiency = v;
        }
        if let Some(v) = self.noise_sigma_db {
            p.noise_sigma_db = v;
        }
        p.effective_leakage_dbm = match self.effective_leakage_dbm {
            Some(v) => v,
            None => calibrate_leakage(&p, DEFAULT_TARGET_DR_DB).map_err(domain)?,
        };
        p.validate().map_err(domain)?;
        Ok(p)
    }
}

#[derive(Args)]
struct LinkbudgetArgs {
    #[command(flatten)]
    rf: RfArgs,
    /// Emit machine-readable JSON instead of the table
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Dynamic range the calibrated leakage must produce (dB)
    #[arg(long, default_value_t = DEFAULT_TARGET_DR_DB)]
    target_db: f64,
    #[command(flatten)]
    rf: RfArgs,
    /// Emit machine-readable JSON instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EncodeArgs {
    /// Key to encode, hex
    #[arg(long)]
    key_hex: String,
    /// Preamble prepended to the key, hex
    #[arg(long)]
    preamble_hex: Option<String>,
    /// Chip rate (Hz)
    #[arg(long, default_value_t = 40.0e3)]
    chip_rate_hz: f64,
    /// Emit chips, count and duration as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DecodeArgs {
    /// Power-trace CSV (`time_s,power_dbm`)
    #[arg(long)]
    trace: PathBuf,
    /// Expected key length in bytes
    #[arg(long, default_value_t = 16)]
    key_len: usize,
    /// Preamble the sender prepends, hex
    #[arg(long)]
    preamble_hex: Option<String>,
    /// Chip rate the sender uses (Hz)
    #[arg(long, default_value_t = 40.0e3)]
    chip_rate_hz: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for per-frame trace CSVs and report.json
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario's master seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CollideArgs {
    /// Number of transmitters
    #[arg(long)]
    nodes: usize,
    /// Frame on-air time (s)
    #[arg(long)]
    frame_s: f64,
    /// Duty-cycle period (s)
    #[arg(long)]
    period_s: f64,
    /// Monte-Carlo trials
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Monte-Carlo seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit machine-readable JSON instead of text
    #[arg(long)]
    json: bool,
}

// ---------------------------------------------------------------------------
// Error-to-exit-code mapping
// ---------------------------------------------------------------------------

enum CliError {
    /// Bad arguments, bad config, unreachable targets: exit 1.
    Domain(String),
    /// Unreadable or unwritable files: exit 2.
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Domain(m) | CliError::Io(m) => m,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> CliError {
        match &e {
            EngineError::Io(_)
            | EngineError::Monitor(MonitorError::Io(_))
            | EngineError::Scenario(ScenarioError::Io { .. }) => CliError::Io(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> CliError {
        match &e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<MonitorError> for CliError {
    fn from(e: MonitorError) -> CliError {
        match &e {
            MonitorError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Command::Linkbudget(args) => linkbudget(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Encode(args) => encode(args),
        Command::Decode(args) => decode(args),
        Command::Simulate(args) => simulate(args),
        Command::Collide(args) => collide(args),
    }
}

/// Bolds `s` unless NO_COLOR is set or stdout is not a terminal.
fn bold(s: &str) -> String {
    let coloring = std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal();
    if coloring {
        format!("\x1b[1m{s}\x1b[0m")
    } else {
        s.to_string()
    }
}

fn linkbudget(args: LinkbudgetArgs) -> Result<(), CliError> {
    let rf = args.rf.resolve()?;
    let fspl = fspl_db(rf.freq_hz, rf.distance_m).map_err(domain)?;
    let harvest = harvest_power_dbm(&rf).map_err(domain)?;
    let harvest_dc = harvest_dc_power_w(&rf).map_err(domain)?;
    let bs_high = backscatter_power_dbm(&rf, ReflectionState::High).map_err(domain)?;
    let bs_low = backscatter_power_dbm(&rf, ReflectionState::Low).map_err(domain)?;
    let dr = dynamic_range_db(&rf).map_err(domain)?;
    let ceiling = dynamic_range_ceiling_db(&rf).map_err(domain)?;

    if args.json {
        let doc = serde_json::json!({
            "freq_hz": rf.freq_hz,
            "distance_m": rf.distance_m,
            "tx_power_dbm": rf.tx_power_dbm,
            "fspl_db": fspl,
            "harvest_dbm": harvest,
            "harvest_dc_w": harvest_dc,
            "backscatter_high_dbm": bs_high,
            "backscatter_low_dbm": bs_low,
            "effective_leakage_dbm": rf.effective_leakage_dbm,
            "dynamic_range_db": dr,
            "dynamic_range_ceiling_db": ceiling,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        return Ok(());
    }

    println!(
        "{} ({:.3} MHz carrier, {:.2} m, {:+.1} dBm tx)",
        bold("Link budget"),
        rf.freq_hz / 1.0e6,
        rf.distance_m,
        rf.tx_power_dbm
    );
    println!("  free-space path loss       {fspl:10.3} dB");
    println!("  harvested carrier          {harvest:10.3} dBm");
    println!("  rectified DC               {:10.3} uW", harvest_dc * 1.0e6);
    println!("  backscatter, reflective    {bs_high:10.3} dBm");
    println!("  backscatter, absorbing     {bs_low:10.3} dBm");
    println!("  effective leakage          {:10.3} dBm", rf.effective_leakage_dbm);
    println!("  dynamic range              {dr:10.6} dB");
    println!("  dynamic-range ceiling      {ceiling:10.3} dB");
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let rf = args.rf.resolve()?;
    let leakage = calibrate_leakage(&rf, args.target_db).map_err(domain)?;
    let round_trip = dynamic_range_db(&RfParams {
        effective_leakage_dbm: leakage,
        ..rf
    })
    .map_err(domain)?;

    if args.json {
        let doc = serde_json::json!({
            "target_dr_db": args.target_db,
            "effective_leakage_dbm": leakage,
            "round_trip_dr_db": round_trip,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        return Ok(());
    }

    println!(
        "{}: {leakage:.6} dBm (target dynamic range {:.6} dB)",
        bold("calibrated leakage"),
        args.target_db
    );
    println!("round-trip dynamic range: {round_trip:.6} dB");
    Ok(())
}

fn parse_hex(what: &str, s: &str) -> Result<Vec<u8>, CliError> {
    hex::decode(s).map_err(|e| CliError::Domain(format!("invalid {what} hex: {e}")))
}

fn encode(args: EncodeArgs) -> Result<(), CliError> {
    let key = parse_hex("key", &args.key_hex)?;
    if key.is_empty() {
        return Err(CliError::Domain("key must not be empty".into()));
    }
    let preamble = match &args.preamble_hex {
        Some(s) => parse_hex("preamble", s)?,
        None => Vec::new(),
    };
    let frame = PvkFrame {
        key,
        preamble,
        chip_rate_hz: args.chip_rate_hz,
    };
    let mut bytes = frame.preamble.clone();
    bytes.extend_from_slice(&frame.key);
    let chips = encode_manchester(&bytes_to_bits(&bytes));
    let chip_string: String = chips
        .as_slice()
        .iter()
        .map(|&c| if c != 0 { '1' } else { '0' })
        .collect();

    if args.json {
        let doc = serde_json::json!({
            "chips": chip_string,
            "chip_count": chips.len(),
            "duration_s": frame.duration_s().map_err(domain)?,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    } else {
        println!("{chip_string}");
    }
    Ok(())
}

fn decode(args: DecodeArgs) -> Result<(), CliError> {
    if args.key_len == 0 {
        return Err(CliError::Domain("key length must be at least 1 byte".into()));
    }
    let preamble = match &args.preamble_hex {
        Some(s) => parse_hex("preamble", s)?,
        None => Vec::new(),
    };
    // Only the lengths and chip rate matter for decoding; the key bytes
    // here are placeholders that are never compared.
    let frame_spec = PvkFrame {
        key: vec![0u8; args.key_len],
        preamble,
        chip_rate_hz: args.chip_rate_hz,
    };
    let trace = PowerTrace::read_csv(&args.trace)?;
    let result = decode_frame(&trace, &frame_spec)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&result.to_json()).expect("json")
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = match &args.out {
        Some(dir) => {
            let report = run_scenario_with_traces(&cfg, dir)?;
            std::fs::write(dir.join("report.json"), report.to_json_string())
                .map_err(|e| CliError::Io(format!("writing report.json: {e}")))?;
            report
        }
        None => run_scenario(&cfg)?,
    };
    print!("{}", report.to_json_string());
    Ok(())
}

fn collide(args: CollideArgs) -> Result<(), CliError> {
    let analytic = collision_prob_analytic(args.nodes, args.frame_s, args.period_s)?;
    let mc = collision_prob_mc(args.nodes, args.frame_s, args.period_s, args.trials, args.seed)?;

    if args.json {
        let doc = serde_json::json!({
            "nodes": args.nodes,
            "frame_s": args.frame_s,
            "period_s": args.period_s,
            "analytic_probability": analytic,
            "mc": mc,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        return Ok(());
    }

    println!(
        "{} ({} nodes, {:.6} s frames, {:.3} s period)",
        bold("Collision probability"),
        args.nodes,
        args.frame_s,
        args.period_s
    );
    println!("  analytic       {analytic:.6e}");
    println!(
        "  monte-carlo    {:.6e} +/- {:.2e} ({} trials, seed {})",
        mc.probability, mc.stderr, mc.trials, args.seed
    );
    Ok(())
}
