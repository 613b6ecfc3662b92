//! Command-line front end for the duality-verification lab.
//!
//! Subcommands: `verify` (branch-wise identity check), `noise` (noisy
//! success-rate and Gauss-law study), `converge` (Trotter-limit table),
//! `gauge-check` (t = 0 stabilizer expectations) and `list-models`.
//!
//! Exit codes: 0 on success with all residuals under tolerance, 2 when a
//! residual or stabilizer check fails its tolerance, 3 on configuration
//! errors. Reports are written atomically; a `.meta.json` sidecar carries
//! wall-clock and environment details so the main report stays
//! byte-identical for a fixed config and seed.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use lgt_dual::dualizer::{DualityMap, DualizeMode, MapId};
use lgt_dual::lab::{
    self, convergence_csv, initial_state, noise_experiment, report_json, stabilizer_check,
    trotter_convergence, verify_duality, write_atomic, ExperimentConfig, InitialState, LatticeSpec,
    NoiseChannel, NoiseSpec, RunMode,
};
use lgt_dual::models::{build_model, table_pairs, EvolutionMode};
use lgt_dual::PairingPolicy;

const EXIT_TOLERANCE: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(
    name = "lgt-dual",
    version,
    about = "Exact verification of measurement-assisted dualities of Trotterized time evolutions",
    long_about = "Builds the six measurement-assisted duality maps (kw, kw_tri, kw_zn, kw_gm, jw, \
fs), runs the Trotterized source evolution, dualizes it with entanglers and X-basis readout, \
applies the feedforwarded correction, and checks every measurement branch against the target \
evolution of the gauged initial state.\n\nMap ids:\n  kw      transverse-field Ising -> pure \
gauge theory (square torus)\n  kw_tri  twisted Ising -> twisted gauge theory (triangular torus)\n  \
kw_zn   clock model -> Z_N gauge theory (square torus, modulus N)\n  kw_gm   1D Ising -> gauge \
theory with Ising matter (cycle)\n  jw      1D Ising -> gauged Majorana chain (cycle)\n  fs      \
star-plaquette -> Fradkin-Shenker model (square torus)\n\nWorker parallelism is capped by the \
LGT_DUAL_THREADS environment variable."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the duality identity branch by branch and report residuals.
    Verify(VerifyArgs),
    /// Interleave single-site noise and report success rate and Gauss law.
    Noise(NoiseArgs),
    /// Tabulate duality residual and exact-evolution error over a k list.
    Converge(ConvergeArgs),
    /// Dualize at t = 0 and print stabilizer expectations of the image.
    GaugeCheck(GaugeCheckArgs),
    /// Print the model pairs and the map id implementing each dualization.
    ListModels,
}

/// Flags shared by the experiment subcommands; every config-file field has
/// a mirror flag, and flags win over file values.
#[derive(Args, Clone)]
struct ConfigFlags {
    /// JSON config file (see schema/experiment-config.schema.json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Map id: kw | kw_tri | kw_zn | kw_gm | jw | fs.
    #[arg(long)]
    map: Option<String>,
    /// Lattice: cycle:L, square:LxL (optionally :modN) or triangular:LxL.
    #[arg(long)]
    lattice: Option<String>,
    /// Evolution time t (or imaginary time with --evolution imaginary).
    #[arg(long)]
    t: Option<f64>,
    /// Trotter step count.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Branch read-out: exhaustive | sampled.
    #[arg(long)]
    mode: Option<String>,
    /// Shots for sampled mode.
    #[arg(long)]
    shots: Option<usize>,
    /// Base seed for sampled measurement outcomes.
    #[arg(long)]
    sample_seed: Option<u64>,
    /// Initial state: plus | zero | random | random-symmetric | levin-gu.
    #[arg(long)]
    initial: Option<String>,
    /// Seed for the random initial-state kinds.
    #[arg(long)]
    initial_seed: Option<u64>,
    /// real | imaginary.
    #[arg(long)]
    evolution: Option<String>,
    /// Global seed echoed into the report.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report files; without it the report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Identity-residual tolerance gating the exit code.
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct NoiseArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Noise channel: z-rotation | random-unitary.
    #[arg(long)]
    channel: Option<String>,
    /// Per-site, per-layer noise probability.
    #[arg(long)]
    p: Option<f64>,
    /// Noise RNG seed.
    #[arg(long)]
    noise_seed: Option<u64>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Comma-separated Trotter step counts.
    #[arg(long, default_value = "4,8,16,32")]
    k_list: String,
}

#[derive(Args)]
struct GaugeCheckArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Stabilizer-expectation tolerance gating the exit code.
    #[arg(long, default_value_t = 1e-12)]
    stab_tolerance: f64,
}

fn fail_config(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

/// Merge a config file (if any) with flag overrides; flags win.
fn resolve_config(flags: &ConfigFlags) -> Result<ExperimentConfig, String> {
    let mut cfg: Option<ExperimentConfig> = match &flags.config {
        Some(path) => Some(ExperimentConfig::load(path).map_err(|e| e.to_string())?),
        None => None,
    };

    let map = match &flags.map {
        Some(text) => Some(MapId::from_str(text).map_err(|e| e.to_string())?),
        None => cfg.as_ref().map(|c| c.map),
    }
    .ok_or("missing --map (or a config file)")?;
    let lattice = match &flags.lattice {
        Some(text) => Some(LatticeSpec::parse(text).map_err(|e| e.to_string())?),
        None => cfg.as_ref().map(|c| c.lattice),
    }
    .ok_or("missing --lattice")?;
    let t = flags.t.or(cfg.as_ref().map(|c| c.t)).ok_or("missing --t")?;

    let mut couplings = cfg.as_ref().map(|c| c.couplings).unwrap_or_default();
    if flags.lambda.is_some() {
        couplings.lambda = flags.lambda;
    }
    if flags.g.is_some() {
        couplings.g = flags.g;
    }
    if flags.h.is_some() {
        couplings.h = flags.h;
    }
    if flags.mu.is_some() {
        couplings.mu = flags.mu;
    }

    let k = flags.k.or(cfg.as_ref().map(|c| c.k)).unwrap_or(8);
    let mode = match flags.mode.as_deref() {
        Some("exhaustive") => RunMode::Exhaustive,
        Some("sampled") => RunMode::Sampled {
            seed: flags.sample_seed.unwrap_or(0),
            shots: flags.shots.unwrap_or(1000),
        },
        Some(other) => return Err(format!("unknown mode {other:?}")),
        None => {
            let base = cfg.as_ref().map(|c| c.mode).unwrap_or_default();
            match (base, flags.shots, flags.sample_seed) {
                (RunMode::Sampled { seed, shots }, s, ss) => RunMode::Sampled {
                    seed: ss.unwrap_or(seed),
                    shots: s.unwrap_or(shots),
                },
                (RunMode::Exhaustive, None, None) => RunMode::Exhaustive,
                (RunMode::Exhaustive, _, _) => RunMode::Sampled {
                    seed: flags.sample_seed.unwrap_or(0),
                    shots: flags.shots.unwrap_or(1000),
                },
            }
        }
    };
    let initial = match flags.initial.as_deref() {
        Some("plus") => InitialState::Plus,
        Some("zero") => InitialState::Zero,
        Some("random") => InitialState::Random {
            seed: flags.initial_seed.unwrap_or(1),
        },
        Some("random-symmetric") => InitialState::RandomSymmetric {
            seed: flags.initial_seed.unwrap_or(1),
        },
        Some("levin-gu") => InitialState::LevinGu,
        Some(other) => return Err(format!("unknown initial state {other:?}")),
        None => cfg.as_ref().map(|c| c.initial).unwrap_or_default(),
    };
    let evolution = match flags.evolution.as_deref() {
        Some("real") => EvolutionMode::Real,
        Some("imaginary") => EvolutionMode::Imaginary,
        Some(other) => return Err(format!("unknown evolution mode {other:?}")),
        None => cfg
            .as_ref()
            .map(|c| c.evolution)
            .unwrap_or(EvolutionMode::Real),
    };
    let seed = flags.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let noise = cfg.as_mut().and_then(|c| c.noise.take());
    let output = flags.out.clone().or(cfg.and_then(|c| c.output));

    Ok(ExperimentConfig {
        map,
        lattice,
        couplings,
        t,
        k,
        mode,
        initial,
        noise,
        evolution,
        seed,
        output,
    })
}

struct Emitted {
    /// (file name, contents) pairs; written under --out or printed.
    files: Vec<(String, String)>,
}

fn emit(out: &Option<PathBuf>, emitted: Emitted, started: Instant) -> Result<(), String> {
    match out {
        Some(dir) => {
            for (name, contents) in &emitted.files {
                let path = dir.join(name);
                write_atomic(&path, contents).map_err(|e| e.to_string())?;
                eprintln!("wrote {}", path.display());
            }
            let meta = serde_json::json!({
                "wall_clock_ms": started.elapsed().as_millis() as u64,
                "environment": {
                    "os": std::env::consts::OS,
                    "arch": std::env::consts::ARCH,
                    "crate_version": env!("CARGO_PKG_VERSION"),
                },
            });
            let path = dir.join("report.meta.json");
            write_atomic(&path, &format!("{meta:#}\n")).map_err(|e| e.to_string())?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            for (_, contents) in &emitted.files {
                print!("{contents}");
            }
        }
    }
    Ok(())
}

fn run_verify(args: &VerifyArgs) -> Result<u8, String> {
    let started = Instant::now();
    let cfg = resolve_config(&args.flags)?;
    let report = verify_duality(&cfg).map_err(|e| e.to_string())?;
    let ok = report.results.max_residual <= args.flags.tolerance;
    eprintln!(
        "verify {}: {} branches, max residual {:.3e}, success rate {:.3}",
        cfg.map,
        report.results.branch_count,
        report.results.max_residual,
        report.results.success_rate
    );
    emit(
        &cfg.output,
        Emitted {
            files: vec![(
                "report.json".to_string(),
                report_json(&report).map_err(|e| e.to_string())?,
            )],
        },
        started,
    )?;
    Ok(if ok { 0 } else { EXIT_TOLERANCE })
}

fn run_noise(args: &NoiseArgs) -> Result<u8, String> {
    let started = Instant::now();
    let mut cfg = resolve_config(&args.flags)?;
    let channel = match args.channel.as_deref() {
        Some("z-rotation") => Some(NoiseChannel::ZRotation),
        Some("random-unitary") => Some(NoiseChannel::RandomUnitary),
        Some(other) => return Err(format!("unknown noise channel {other:?}")),
        None => None,
    };
    let base = cfg.noise;
    let p = args.p.or(base.map(|n| n.p));
    let Some(p) = p else {
        return Err("missing --p (or a config noise block)".into());
    };
    cfg.noise = Some(NoiseSpec {
        channel: channel
            .or(base.map(|n| n.channel))
            .unwrap_or(NoiseChannel::ZRotation),
        p,
        seed: args.noise_seed.or(base.map(|n| n.seed)).unwrap_or(0),
    });
    if matches!(cfg.mode, RunMode::Exhaustive) {
        cfg.mode = RunMode::Sampled {
            seed: 0,
            shots: 1000,
        };
    }
    let report = noise_experiment(&cfg).map_err(|e| e.to_string())?;
    let ok = report.results.gauss_residual_max <= args.flags.tolerance
        && report.results.loop_residual_max <= args.flags.tolerance;
    eprintln!(
        "noise p={p}: success rate {:.3} over {} runs, Gauss residual {:.3e}",
        report.results.success_rate, report.results.runs, report.results.gauss_residual_max
    );
    emit(
        &cfg.output,
        Emitted {
            files: vec![(
                "noise.json".to_string(),
                report_json(&report).map_err(|e| e.to_string())?,
            )],
        },
        started,
    )?;
    Ok(if ok { 0 } else { EXIT_TOLERANCE })
}

fn run_converge(args: &ConvergeArgs) -> Result<u8, String> {
    let started = Instant::now();
    let cfg = resolve_config(&args.flags)?;
    let k_list: Vec<usize> = args
        .k_list
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad --k-list: {e}"))?;
    if k_list.is_empty() {
        return Err("empty --k-list".into());
    }
    let report = trotter_convergence(&cfg, &k_list).map_err(|e| e.to_string())?;
    let ok = report
        .rows
        .iter()
        .all(|r| r.duality_residual <= args.flags.tolerance);
    for row in &report.rows {
        eprintln!(
            "k={}: duality {:.3e}, source exact err {:.3e}, target exact err {:.3e}",
            row.k, row.duality_residual, row.source_exact_error, row.target_exact_error
        );
    }
    emit(
        &cfg.output,
        Emitted {
            files: vec![
                (
                    "converge.json".to_string(),
                    report_json(&report).map_err(|e| e.to_string())?,
                ),
                ("converge.csv".to_string(), convergence_csv(&report)),
            ],
        },
        started,
    )?;
    Ok(if ok { 0 } else { EXIT_TOLERANCE })
}

fn run_gauge_check(args: &GaugeCheckArgs) -> Result<u8, String> {
    let started = Instant::now();
    // Gauging happens at t = 0; the flag is optional here.
    let mut flags = args.flags.clone();
    flags.t = Some(0.0);
    let mut cfg = resolve_config(&flags)?;
    cfg.t = 0.0;
    let cx = cfg.lattice.build().map_err(|e| e.to_string())?;
    let map = DualityMap::new(cfg.map, &cx).map_err(|e| e.to_string())?;
    let source =
        build_model(cfg.map.source_model(), &cx, &cfg.couplings).map_err(|e| e.to_string())?;
    let target =
        build_model(cfg.map.target_model(), &cx, &cfg.couplings).map_err(|e| e.to_string())?;
    let initial = initial_state(&cfg, &map, &source).map_err(|e| e.to_string())?;
    let mut runs = map
        .dualize(&initial, &DualizeMode::AllBranches)
        .map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for run in runs.iter_mut().filter(|r| r.success && r.weight > 1e-14) {
        let corrected = map
            .correct(run, PairingPolicy::Canonical)
            .map_err(|e| e.to_string())?;
        for (label, re, im) in stabilizer_check(&corrected, &target).map_err(|e| e.to_string())? {
            let dev = ((re - 1.0).powi(2) + im.powi(2)).sqrt();
            worst = worst.max(dev);
            rows.push(serde_json::json!({
                "branch": run.outcomes.coeffs(),
                "stabilizer": label,
                "expectation": [re, im],
            }));
        }
    }
    let ok = worst <= args.stab_tolerance;
    eprintln!(
        "gauge-check {}: max stabilizer deviation {:.3e} over {} rows",
        cfg.map,
        worst,
        rows.len()
    );
    let doc = serde_json::json!({
        "version": lab::REPORT_VERSION,
        "config": cfg,
        "results": { "max_deviation": worst, "rows": rows },
    });
    emit(
        &cfg.output,
        Emitted {
            files: vec![("gauge-check.json".to_string(), format!("{doc:#}\n"))],
        },
        started,
    )?;
    Ok(if ok { 0 } else { EXIT_TOLERANCE })
}

fn run_list_models() -> u8 {
    println!(
        "{:<10} {:<28} {:<8} {:<30} {:<8}",
        "source", "description", "target", "description", "map"
    );
    let describe = |id: lgt_dual::models::ModelId| -> &'static str {
        use lgt_dual::models::ModelId::*;
        match id {
            Tfi => "2D transverse-field Ising",
            Gt => "pure Z2 gauge theory",
            Ttfi => "twisted Ising (SPT)",
            Tgt => "twisted gauge theory",
            ZnClock => "Z_N clock model",
            ZnGt => "Z_N gauge theory",
            TlIsing => "1D Ising (transv+long)",
            Gm => "gauge theory w/ Ising matter",
            Qed => "gauged Majorana chain",
            Sp => "star-plaquette model",
            Fs => "Fradkin-Shenker model",
        }
    };
    for (src, tgt, map) in table_pairs() {
        println!(
            "{:<10} {:<28} {:<8} {:<30} {:<8}",
            src.as_str(),
            describe(src),
            tgt.as_str(),
            describe(tgt),
            map
        );
    }
    0
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let result = match &cli.command {
        Command::Verify(args) => run_verify(args),
        Command::Noise(args) => run_noise(args),
        Command::Converge(args) => run_converge(args),
        Command::GaugeCheck(args) => run_gauge_check(args),
        Command::ListModels => Ok(run_list_models()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => fail_config(msg),
    }
}
