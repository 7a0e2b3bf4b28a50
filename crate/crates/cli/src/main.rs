use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use coaxscan_core::io;
use coaxscan_core::pipeline::{self, PipelineConfig, Stage, StageError, KEYS};
use coaxscan_core::simulator::{self, CalibrationBlock, DrillSpec, OcclusionModel};
use coaxscan_core::{Error, ScanMeta, ScanSet};

const ENV_PREFIX: &str = "COAXSCAN_";

/// Coaxiality of twist drills from rotating line-laser scans.
#[derive(Parser, Debug)]
#[command(name = "coaxscan", version, about)]
struct Cli {
    /// key=value settings file.
    #[arg(long, global = true, env = "COAXSCAN_CONFIG")]
    config: Option<PathBuf>,

    /// Override one setting, e.g. `--set theta_deg=15`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the sensor-to-axis distance from a stepped-block scan.
    Calibrate {
        #[command(flatten)]
        scan: ScanArgs,
        /// Where to write the calibration JSON (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the coaxiality of a drill scan.
    Measure {
        #[command(flatten)]
        scan: ScanArgs,
        /// Calibration JSON from `calibrate`.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Starting angle of the four profiles (degrees).
        #[arg(long)]
        theta: Option<f64>,
        /// Where to write the report JSON (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for plot CSVs.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Write a synthetic scan with ground truth.
    Simulate(SimulateArgs),
    /// Segment a scan and export labels and block models.
    Segment {
        #[command(flatten)]
        scan: ScanArgs,
        /// Label CSV output.
        #[arg(long)]
        labels: PathBuf,
        /// Block model JSON output.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// Scan CSV with header `frame,x,z`.
    #[arg(long)]
    scan: PathBuf,
    /// Metadata sidecar; defaults to the scan path with a `.meta` extension.
    #[arg(long)]
    meta: Option<PathBuf>,
}

impl ScanArgs {
    fn meta_path(&self) -> PathBuf {
        self.meta.clone().unwrap_or_else(|| self.scan.with_extension("meta"))
    }

    fn load(&self) -> Result<ScanSet, StageError> {
        io::load_scan(&self.scan, &self.meta_path()).map_err(|e| StageError::new(Stage::Io, e))
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
    /// Drill spec JSON; missing fields keep their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// True coaxiality of the bend (mm).
    #[arg(long)]
    coaxiality: Option<f64>,
    /// Bend plane angle (degrees).
    #[arg(long)]
    phi: Option<f64>,
    /// Axial position of the bend apex (mm).
    #[arg(long)]
    apex_x: Option<f64>,
    #[arg(long)]
    flute_count: Option<usize>,
    /// Depth noise (mm); defaults to the `noise_sigma` setting.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    frames: usize,
    #[arg(long, default_value_t = 1350)]
    points: usize,
    /// Sensor-to-axis distance (mm).
    #[arg(long, default_value_t = 150.0)]
    axis_distance: f64,
    /// Fraction of samples to displace as outliers.
    #[arg(long, default_value_t = 0.0)]
    outliers: f64,
    /// Scan the stepped calibration block instead of a drill.
    #[arg(long)]
    calibration_block: bool,
}

/// Ground-truth summary written next to a simulated scan.
#[derive(Serialize)]
struct TruthFile<'a> {
    true_coaxiality: f64,
    apex_x: f64,
    phi: f64,
    benchmark: [f64; 2],
    axis: &'a [[f64; 3]],
    spec: &'a DrillSpec,
    noise_sigma: f64,
    seed: u64,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, StageError> {
    let at = |e: Error| StageError::new(Stage::Config, e);
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| StageError::new(Stage::Io, e.into()))?;
        cfg.apply_entries(&io::parse_key_values(&text).map_err(at)?).map_err(at)?;
    }
    for (k, v) in std::env::vars() {
        let Some(name) = k.strip_prefix(ENV_PREFIX) else { continue };
        if name == "CONFIG" {
            continue;
        }
        match KEYS.iter().find(|key| key.eq_ignore_ascii_case(name)) {
            Some(key) => cfg.set(key, &v).map_err(at)?,
            None => return Err(at(Error::Config(format!("unknown setting in environment variable {k}")))),
        }
    }
    for o in &cli.overrides {
        let Some((k, v)) = o.split_once('=') else {
            return Err(at(Error::Config(format!("--set expects KEY=VALUE, got {o:?}"))));
        };
        cfg.set(k.trim(), v).map_err(at)?;
    }
    cfg.validate().map_err(at)?;
    Ok(cfg)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), StageError> {
    let io_err = |e: Error| StageError::new(Stage::Io, e);
    match out {
        Some(p) => io::write_json(p, value).map_err(io_err),
        None => {
            println!("{}", serde_json::to_string_pretty(value).map_err(|e| io_err(e.into()))?);
            Ok(())
        }
    }
}

/// Outcome of a command that ran to completion.
enum Done {
    Ok,
    /// The measurement ran but a check failed.
    Rejected,
}

fn run(cli: &Cli) -> Result<Done, StageError> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Calibrate { scan, out } => {
            let result = pipeline::calibrate(&scan.load()?, &cfg)?;
            emit(&result, out.as_deref())?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            if result.passed() {
                eprintln!("calibration passed: D = {:.4} mm, axis distance = {:.4} mm", result.d, result.axis_distance);
                Ok(Done::Ok)
            } else {
                eprintln!(
                    "calibration failed: rule II {} (delta_z = {:.4} mm, spacing residual = {:.4} mm), rule III {}",
                    if result.pass_rule_ii { "pass" } else { "FAIL" },
                    result.delta_z,
                    result.spacing_residual,
                    if result.pass_rule_iii { "pass" } else { "FAIL" },
                );
                Ok(Done::Rejected)
            }
        }
        Command::Measure { scan, calibration, theta, out, plots } => {
            if let Some(c) = calibration {
                cfg.calibration_file = Some(c.clone());
            }
            if let Some(t) = theta {
                cfg.axis.profile.theta_deg = *t;
            }
            let m = pipeline::measure(&scan.load()?, &cfg)?;
            emit(&m.report, out.as_deref())?;
            if let Some(dir) = plots {
                pipeline::write_plots(dir, &m, &cfg).map_err(|e| StageError::new(Stage::Io, e))?;
            }
            for w in &m.report.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "coaxiality {:.4} mm at x = {:.2} mm, epsilon {:.4}, {:.2} s",
                m.report.coaxiality_mm, m.report.peak_x, m.report.epsilon, m.report.duration_s
            );
            Ok(Done::Ok)
        }
        Command::Simulate(args) => simulate(args, &cfg).map(|_| Done::Ok),
        Command::Segment { scan, labels, model } => {
            let scan = scan.load()?;
            let (seg, _, point_labels) = pipeline::segment_scan(&scan, &cfg)?;
            let io_err = |e: Error| StageError::new(Stage::Io, e);
            let f = std::fs::File::create(labels).map_err(|e| io_err(e.into()))?;
            io::write_labels_csv(std::io::BufWriter::new(f), io::label_rows(&scan, &point_labels)).map_err(io_err)?;
            if let Some(p) = model {
                io::write_json(p, &pipeline::block_models(&seg)).map_err(io_err)?;
            }
            for w in &seg.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "{} blade-back, {} outlier of {} points; {} blocks",
                seg.count(coaxscan_core::Label::BladeBack),
                seg.count(coaxscan_core::Label::Outlier),
                scan.point_count(),
                seg.blocks.len()
            );
            Ok(Done::Ok)
        }
    }
}

fn drill_spec(args: &SimulateArgs) -> anyhow::Result<DrillSpec> {
    let mut spec = DrillSpec::default();
    if let Some(path) = &args.spec {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let patch: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut base = serde_json::to_value(&spec)?;
        merge(&mut base, patch);
        spec = serde_json::from_value(base).with_context(|| format!("invalid drill spec in {}", path.display()))?;
    }
    if args.coaxiality.is_some() || args.phi.is_some() || args.apex_x.is_some() {
        let b = spec.bend;
        spec = spec.with_bend(
            args.coaxiality.unwrap_or(2.0 * b.apex_offset),
            args.phi.unwrap_or(b.plane_deg),
            args.apex_x.unwrap_or(b.apex_x),
        );
    }
    if let Some(f) = args.flute_count {
        spec.flute_count = f;
    }
    Ok(spec)
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn simulate(args: &SimulateArgs, cfg: &PipelineConfig) -> Result<(), StageError> {
    let io_err = |e: Error| StageError::new(Stage::Io, e);
    let sim_err = |e: Error| StageError::new(Stage::Simulator, e);
    let noise = args.noise.unwrap_or(cfg.noise_sigma);
    let seed = args.seed.unwrap_or(cfg.seed);
    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_err(e.into()))?;
    let dir = &args.out_dir;
    if args.calibration_block {
        let meta = ScanMeta::new(args.frames, args.points, args.axis_distance, cfg.gamma.unwrap_or(1.0));
        let (scan, truth) =
            simulator::scan_calibration_block(&CalibrationBlock::default(), &meta, [-5.0, 125.0], [0.0, 0.0], noise, seed)
                .map_err(sim_err)?;
        io::save_scan(&scan, &dir.join("block.csv"), &dir.join("block.meta")).map_err(io_err)?;
        io::write_json(&dir.join("block_truth.json"), &truth).map_err(io_err)?;
        eprintln!("wrote calibration block scan to {}", dir.display());
        return Ok(());
    }
    let spec = drill_spec(args).map_err(|e| sim_err(Error::Config(format!("{e:#}"))))?;
    let meta = ScanMeta::new(args.frames, args.points, args.axis_distance, cfg.gamma.unwrap_or(spec.radius()));
    let (mut scan, mut truth) =
        simulator::scan_drill(&spec, &meta, &OcclusionModel::default(), noise, seed).map_err(sim_err)?;
    if args.outliers > 0.0 {
        simulator::inject_outliers(&mut scan, &mut truth, args.outliers, [0.5, 3.0], seed);
    }
    io::save_scan(&scan, &dir.join("scan.csv"), &dir.join("scan.meta")).map_err(io_err)?;
    let f = std::fs::File::create(dir.join("truth_labels.csv")).map_err(|e| io_err(e.into()))?;
    io::write_labels_csv(std::io::BufWriter::new(f), io::label_rows(&scan, &truth.labels)).map_err(io_err)?;
    let summary = TruthFile {
        true_coaxiality: truth.true_coaxiality,
        apex_x: truth.apex_x,
        phi: truth.phi_deg,
        benchmark: truth.benchmark,
        axis: &truth.axis,
        spec: &spec,
        noise_sigma: noise,
        seed,
    };
    io::write_json(&dir.join("truth.json"), &summary).map_err(io_err)?;
    eprintln!(
        "wrote {} points in {} frames to {} (true coaxiality {:.4} mm)",
        scan.point_count(),
        scan.frames.len(),
        dir.display(),
        truth.true_coaxiality
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::Rejected) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
