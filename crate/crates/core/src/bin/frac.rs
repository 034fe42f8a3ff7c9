//! `frac` command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use frac::bench::{
    resolution_report, run_sweep, separation_csv, separation_study, timing_csv, timing_report, SweepSpec,
    EXPECTED_ORDERING,
};
use frac::codec::{bits_from_hex, bits_per_pulse, bits_to_hex, decode, encode, FrameSelection};
use frac::crlb::{crlb, fisher, per_target};
use frac::estimate::{axis_covariance, run_estimate, Algorithm, EstimateOptions};
use frac::io::{read_snapshot, write_snapshot};
use frac::scenario::{NoiseSpec, Scenario};
use frac::signal::{snr_to_sigma2, Snapshot};
use frac::spectral::{music_spectrum, Axis};
use frac::FracError;

#[derive(Parser)]
#[command(
    name = "frac",
    version,
    about = "Sparse-MIMO FMCW radar-communication simulation and 3D parameter estimation"
)]
struct Cli {
    /// Scenario file (`key: value` lines); built-in 77 GHz defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; a `.json` extension selects JSON, anything else CSV. Stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Grid points per axis for l1 and omp.
    #[arg(long)]
    ng: Option<usize>,
    /// Outer iterations of the l1 estimator.
    #[arg(long)]
    l1_iters: Option<usize>,
    /// Trace-weight multiplier for the ANM estimators.
    #[arg(long)]
    eta: Option<f64>,
    /// Explicit trace weight; overrides --eta.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one snapshot; writes the binary file given by --out and its `.meta` sidecar.
    Synth {
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Estimate targets from a snapshot file or a freshly synthesized scenario.
    Estimate {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "ddanm-match")]
        algo: Algorithm,
        /// Number of targets; defaults to the scenario's.
        #[arg(long)]
        targets: Option<usize>,
        #[arg(long)]
        snr: Option<f64>,
        /// Print the ADMM residual trace (CSV) to stderr.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Monte Carlo RMSE-vs-SNR sweep, or a separation study with --separations.
    Sweep {
        /// Comma-separated algorithms.
        #[arg(long, value_delimiter = ',', default_value = "ddanm-match")]
        algo: Vec<Algorithm>,
        /// Comma-separated SNR points in dB.
        #[arg(long, value_delimiter = ',', default_value = "0,10,20,30")]
        snr: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Append the CRLB column.
        #[arg(long)]
        crlb: bool,
        /// Comma-separated DOA separations in degrees; runs the two-target study.
        #[arg(long, value_delimiter = ',')]
        separations: Option<Vec<f64>>,
        /// Centre angle of the separation study, degrees.
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        center: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Cramér-Rao bounds per target and SNR for the scenario's frame.
    Crlb {
        #[arg(long, value_delimiter = ',', default_value = "0,10,20,30")]
        snr: Vec<f64>,
    },
    /// MUSIC pseudo-spectrum along one axis from an ANM covariance.
    Spectrum {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "ddanm-match")]
        algo: Algorithm,
        #[arg(long, value_enum, default_value = "doa")]
        axis: AxisArg,
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long)]
        targets: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Index-modulation encoder and decoder.
    Codec {
        #[command(subcommand)]
        op: CodecOp,
    },
    /// Range, velocity and angle resolution of the configuration.
    Resolution,
    /// Median wall-clock per algorithm on the scenario.
    Timing {
        #[arg(long, value_delimiter = ',', default_value = "omp,danm2-hooi,ddanm-hooi,l1")]
        algo: Vec<Algorithm>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long)]
        snr: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Subcommand)]
enum CodecOp {
    /// Hex bit string to frame text (one pulse per line).
    Encode {
        #[arg(long)]
        hex: String,
    },
    /// Frame text file to hex bit string.
    Decode {
        #[arg(long)]
        frame: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Doa,
    Velocity,
    Range,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Doa => Axis::Doa,
            AxisArg::Velocity => Axis::Velocity,
            AxisArg::Range => Axis::Range,
        }
    }
}

fn load_scenario(cli: &Cli) -> Result<Scenario, FracError> {
    let mut sc = match &cli.config {
        Some(p) => {
            Scenario::parse(&std::fs::read_to_string(p).map_err(|e| FracError::Io(format!("{}: {e}", p.display())))?)?
        }
        None => Scenario::default(),
    };
    if let Some(s) = cli.seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn with_snr(mut sc: Scenario, snr: Option<f64>) -> Scenario {
    if let Some(s) = snr {
        sc.noise = NoiseSpec::SnrDb(s);
    }
    sc
}

fn is_json(out: &Option<PathBuf>) -> bool {
    out.as_deref().and_then(Path::extension).is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), FracError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| FracError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, FracError> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| FracError::Io(e.to_string()))
}

fn options(l: usize, sigma2: f64, solver: &SolverArgs) -> EstimateOptions {
    let mut o = EstimateOptions::new(l, sigma2);
    if let Some(ng) = solver.ng {
        o.grid_points = ng;
    }
    if let Some(it) = solver.l1_iters {
        o.l1.iterations = it;
    }
    if let Some(eta) = solver.eta {
        o.eta = eta;
    }
    o.tau = solver.tau;
    o
}

/// Snapshot from `--input`, else synthesized from the scenario. Returns the
/// snapshot, its noise variance and the scenario describing it.
fn snapshot(cli: &Cli, input: &Option<PathBuf>, snr: Option<f64>) -> Result<(Snapshot, f64, Scenario), FracError> {
    match input {
        Some(p) => {
            let (snap, meta) = read_snapshot(p)?;
            let sigma2 = match meta.noise {
                NoiseSpec::Sigma2(s) => s,
                NoiseSpec::SnrDb(_) => meta.realize()?.0.sigma2,
            };
            Ok((snap, sigma2, meta))
        }
        None => {
            let sc = with_snr(load_scenario(cli)?, snr);
            let (snap, sigma2) = sc.synthesize()?;
            Ok((snap, sigma2, sc))
        }
    }
}

fn run(cli: &Cli) -> Result<(), FracError> {
    match &cli.cmd {
        Command::Synth { snr } => {
            let path = cli.out.as_ref().ok_or_else(|| FracError::InvalidConfig("synth needs --out <file>".into()))?;
            let sc = with_snr(load_scenario(cli)?, *snr);
            let (snap, sigma2) = sc.synthesize()?;
            write_snapshot(path, &snap, &sc, sigma2)?;
            eprintln!("wrote {} ({}x{}, sigma2 {sigma2:e})", path.display(), snap.y.nrows(), snap.y.ncols());
        }
        Command::Estimate { input, algo, targets, snr, trace, solver } => {
            let (snap, sigma2, sc) = snapshot(cli, input, *snr)?;
            let l = targets.unwrap_or(sc.targets.len());
            let mut opts = options(l, sigma2, solver);
            opts.admm.record_trace = *trace;
            let out = run_estimate(&snap, *algo, &opts)?;
            for n in &out.notes {
                eprintln!("note: {n}");
            }
            if *trace {
                if let Some(d) = &out.diagnostics {
                    eprint!("{}", d.trace_csv());
                }
                if let Some(obj) = &out.l1_objective {
                    eprintln!("iter,objective");
                    for (i, f) in obj.iter().enumerate() {
                        eprintln!("{i},{f:e}");
                    }
                }
            }
            let text = if is_json(&cli.out) {
                json(&serde_json::json!({
                    "algorithm": algo,
                    "estimates": out.set.estimates.iter().map(|e| serde_json::json!({
                        "r_m": e.r, "v_mps": e.v, "theta_deg": e.theta.to_degrees(),
                        "beta_re": e.beta.re, "beta_im": e.beta.im,
                    })).collect::<Vec<_>>(),
                    "residual": out.set.residual,
                    "notes": out.notes,
                }))?
            } else {
                let mut s = String::from("target,r_m,v_mps,theta_deg,beta_re,beta_im\n");
                for (i, e) in out.set.estimates.iter().enumerate() {
                    let _ = writeln!(s, "{i},{},{},{},{},{}", e.r, e.v, e.theta.to_degrees(), e.beta.re, e.beta.im);
                }
                s
            };
            emit(&cli.out, &text)?;
        }
        Command::Sweep { algo, snr, trials, crlb, separations, center, solver } => {
            let sc = load_scenario(cli)?;
            let mut spec = SweepSpec::new(sc.cfg, sc.targets.clone(), snr.clone(), *trials, algo.clone(), sc.seed);
            spec.options = options(sc.targets.len(), 0.0, solver);
            spec.pm_levels = sc.pm_levels;
            spec.crlb = *crlb;
            let text = match separations {
                Some(seps) => {
                    let rows = separation_study(&spec, *center, seps)?;
                    if is_json(&cli.out) {
                        json(&rows)?
                    } else {
                        separation_csv(&rows)
                    }
                }
                None => {
                    let res = run_sweep(&spec)?;
                    for (a, s, n) in &res.errors {
                        eprintln!("{a} at {s} dB: {n} trial(s) failed with a solver error");
                    }
                    if is_json(&cli.out) {
                        res.to_json()? + "\n"
                    } else {
                        res.to_csv()
                    }
                }
            };
            emit(&cli.out, &text)?;
        }
        Command::Crlb { snr } => {
            let sc = load_scenario(cli)?;
            let (scene, frame) = sc.realize()?;
            let mut rows = Vec::new();
            for &s in snr {
                let sigma2 = snr_to_sigma2(s, &scene, &sc.cfg, &frame);
                let bounds = crlb(&fisher(&scene, &sc.cfg, &frame, sigma2)?)?;
                for (i, (th, r, v)) in per_target(&bounds, scene.targets.len()).into_iter().enumerate() {
                    rows.push(serde_json::json!({
                        "snr_db": s, "target": i,
                        "crlb_theta_deg": th.sqrt().to_degrees(), "crlb_r_m": r.sqrt(), "crlb_v_mps": v.sqrt(),
                    }));
                }
            }
            let text = if is_json(&cli.out) {
                json(&rows)?
            } else {
                let mut s = String::from("snr_db,target,crlb_theta_deg,crlb_r_m,crlb_v_mps\n");
                for r in &rows {
                    let _ = writeln!(
                        s,
                        "{},{},{:e},{:e},{:e}",
                        r["snr_db"],
                        r["target"],
                        r["crlb_theta_deg"].as_f64().unwrap(),
                        r["crlb_r_m"].as_f64().unwrap(),
                        r["crlb_v_mps"].as_f64().unwrap()
                    );
                }
                s
            };
            emit(&cli.out, &text)?;
        }
        Command::Spectrum { input, algo, axis, snr, targets, solver } => {
            let (snap, sigma2, sc) = snapshot(cli, input, *snr)?;
            let l = targets.unwrap_or(sc.targets.len());
            let axis = Axis::from(*axis);
            let (r, _) = axis_covariance(&snap, *algo, axis, &options(l, sigma2, solver))?;
            let report = music_spectrum(&r, l, axis, &snap.cfg, &axis.default_grid(&snap.cfg))?;
            for p in &report.peaks {
                eprintln!("peak: {p}");
            }
            emit(&cli.out, &if is_json(&cli.out) { json(&report)? } else { report.to_csv() })?;
        }
        Command::Codec { op } => {
            let sc = load_scenario(cli)?;
            let j = sc.pm_levels;
            let per = bits_per_pulse(sc.cfg.p, sc.cfg.m, sc.cfg.k, j)? as usize;
            match op {
                CodecOp::Encode { hex } => {
                    let bits = bits_from_hex(hex, per * sc.cfg.n)?;
                    let frame = encode(&bits, &sc.cfg, j)?;
                    eprintln!("{per} bits per pulse, {} per frame", per * sc.cfg.n);
                    emit(&cli.out, &frame.to_text())?;
                }
                CodecOp::Decode { frame } => {
                    let text = std::fs::read_to_string(frame)
                        .map_err(|e| FracError::Io(format!("{}: {e}", frame.display())))?;
                    let bits = decode(&FrameSelection::from_text(&text)?, &sc.cfg, j)?;
                    emit(&cli.out, &(bits_to_hex(&bits) + "\n"))?;
                }
            }
        }
        Command::Resolution => {
            let sc = load_scenario(cli)?;
            let rep = resolution_report(&sc.cfg);
            let text = if is_json(&cli.out) {
                json(&rep)?
            } else {
                format!(
                    "range_m,velocity_mps,doa_broadside_deg,doa_nominal_deg\n{},{},{},{}\n",
                    rep.range_m, rep.velocity_mps, rep.doa_broadside_deg, rep.doa_nominal_deg
                )
            };
            emit(&cli.out, &text)?;
        }
        Command::Timing { algo, runs, snr, solver } => {
            let sc = load_scenario(cli)?;
            let snr = snr.unwrap_or(match sc.noise {
                NoiseSpec::SnrDb(s) => s,
                NoiseSpec::Sigma2(_) => 20.0,
            });
            let mut spec = SweepSpec::new(sc.cfg, sc.targets.clone(), vec![snr], 1, algo.clone(), sc.seed);
            spec.options = options(sc.targets.len(), 0.0, solver);
            spec.pm_levels = sc.pm_levels;
            let rows = timing_report(&spec, *runs)?;
            eprintln!("expected ordering (slowest first): {EXPECTED_ORDERING}");
            emit(&cli.out, &if is_json(&cli.out) { json(&rows)? } else { timing_csv(&rows) })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
