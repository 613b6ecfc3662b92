//! Experiment harnesses: full duality verification, noise studies,
//! Trotter-limit convergence and stabilizer checks, with JSON/CSV reports.
//!
//! The central check is branch-wise: run the source evolution, dualize,
//! correct, and compare each measurement branch (divided by the analytic
//! prefactor N^{−m/2}) against the target evolution applied to the gauged
//! input built from the same coefficients. Residuals are ℓ₂ distances
//! after global-phase alignment, relative to the target norm.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::complex::{CellComplex, ComplexError, LatticeKind, PairingPolicy};
use crate::dualizer::{DualityMap, DualityRun, DualizeMode, DualizerError, MapId};
use crate::engine::{EngineError, RegisterLayout, StateVector};
use crate::models::{
    build_model, evolve, exact_evolve_model, gauge_generators, levin_gu_state, trotter_schedule,
    Couplings, EvolutionMode, ModelError, ModelSpec, TermOp,
};
use crate::weyl::{PauliKind, WeylString};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dualizer(#[from] DualizerError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Lattice description as it appears in config files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LatticeSpec {
    Cycle {
        l: usize,
        #[serde(default = "default_modulus")]
        modulus: u32,
    },
    Square {
        lx: usize,
        ly: usize,
        #[serde(default = "default_modulus")]
        modulus: u32,
    },
    Triangular {
        lx: usize,
        ly: usize,
    },
}

fn default_modulus() -> u32 {
    2
}

impl LatticeSpec {
    pub fn build(&self) -> Result<CellComplex, ComplexError> {
        match *self {
            LatticeSpec::Cycle { l, modulus } => {
                CellComplex::build(LatticeKind::Cycle, &[l], modulus)
            }
            LatticeSpec::Square { lx, ly, modulus } => {
                CellComplex::build(LatticeKind::SquareTorus, &[lx, ly], modulus)
            }
            LatticeSpec::Triangular { lx, ly } => {
                CellComplex::build(LatticeKind::TriangularTorus, &[lx, ly], 2)
            }
        }
    }

    /// Parse the CLI shorthand `cycle:4`, `square:2x2` or `triangular:2x2`,
    /// with an optional `:modN` suffix (`square:2x2:mod3`).
    pub fn parse(text: &str) -> Result<LatticeSpec, LabError> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() < 2 {
            return Err(LabError::InvalidConfig(format!(
                "lattice {text:?} should look like cycle:4 or square:2x2[:modN]"
            )));
        }
        let modulus = if parts.len() > 2 {
            let m = parts[2]
                .strip_prefix("mod")
                .ok_or_else(|| LabError::InvalidConfig(format!("bad modulus {:?}", parts[2])))?;
            m.parse::<u32>()
                .map_err(|e| LabError::InvalidConfig(format!("bad modulus: {e}")))?
        } else {
            2
        };
        match parts[0] {
            "cycle" => {
                let l = parts[1]
                    .parse()
                    .map_err(|e| LabError::InvalidConfig(format!("bad length: {e}")))?;
                Ok(LatticeSpec::Cycle { l, modulus })
            }
            "square" | "triangular" => {
                let (lx, ly) = parts[1]
                    .split_once('x')
                    .ok_or_else(|| LabError::InvalidConfig("expected LxL".into()))?;
                let lx = lx
                    .parse()
                    .map_err(|e| LabError::InvalidConfig(format!("bad extent: {e}")))?;
                let ly = ly
                    .parse()
                    .map_err(|e| LabError::InvalidConfig(format!("bad extent: {e}")))?;
                if parts[0] == "square" {
                    Ok(LatticeSpec::Square { lx, ly, modulus })
                } else if modulus == 2 {
                    Ok(LatticeSpec::Triangular { lx, ly })
                } else {
                    Err(LabError::InvalidConfig(
                        "triangular lattices are modulus 2 only".into(),
                    ))
                }
            }
            other => Err(LabError::InvalidConfig(format!(
                "unknown lattice {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for LatticeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LatticeSpec::Cycle { l, modulus } => write!(f, "cycle:{l}:mod{modulus}"),
            LatticeSpec::Square { lx, ly, modulus } => write!(f, "square:{lx}x{ly}:mod{modulus}"),
            LatticeSpec::Triangular { lx, ly } => write!(f, "triangular:{lx}x{ly}"),
        }
    }
}

/// Exhaustive branch enumeration or seeded Born sampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RunMode {
    #[default]
    Exhaustive,
    Sampled {
        seed: u64,
        shots: usize,
    },
}

/// Initial-state menu for the undualized register.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    /// |+⟩ on every site (X-basis zero state): symmetric.
    #[default]
    Plus,
    /// |0⟩ on every site; not Π X symmetric, so matter maps only.
    Zero,
    /// Seeded random state projected onto the Π X = +1 sector.
    RandomSymmetric { seed: u64 },
    /// Seeded random state with no symmetry restriction (matter maps only).
    Random { seed: u64 },
    /// The Levin-Gu state (triangular torus only).
    LevinGu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseChannel {
    /// exp(iα(Z + Z†)/c) with a uniformly random angle per hit (the bare
    /// exp(iαZ) at N = 2).
    ZRotation,
    /// A Haar-random single-site unitary per hit.
    RandomUnitary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub channel: NoiseChannel,
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
}

/// One experiment: a map, a lattice, couplings, schedule and read-out mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapId,
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub couplings: Couplings,
    pub t: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default = "default_evolution")]
    pub evolution: EvolutionMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_k() -> usize {
    8
}

fn default_evolution() -> EvolutionMode {
    EvolutionMode::Real
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// Per-branch record in a verification report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchResult {
    pub outcomes: Vec<u32>,
    pub weight: f64,
    pub success: bool,
    /// ℓ₂ distance to the target, phase aligned, relative to ‖target‖.
    pub residual: Option<f64>,
    /// Same without phase alignment.
    pub residual_unaligned: Option<f64>,
    /// Branch norm over N^{−m/2}·‖input‖.
    pub prefactor: f64,
    /// Fidelity between canonical and alternate-path corrections.
    pub alt_fidelity: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyResults {
    pub branch_count: usize,
    pub branches: Vec<BranchResult>,
    /// Max residual over evaluated branches.
    pub max_residual: f64,
    pub success_rate: f64,
    /// Per gauge generator: max ‖(g − 1)ψ̂‖ over corrected branches.
    pub gauss_residuals: Vec<f64>,
    pub gauss_residual_max: f64,
    pub prefactor_max_deviation: f64,
    pub total_branch_weight: f64,
    pub input_norm_sqr: f64,
    pub min_alt_fidelity: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub config: ExperimentConfig,
    pub results: VerifyResults,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseResults {
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub gauss_residual_max: f64,
    pub loop_residual_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseReport {
    pub version: u32,
    pub config: ExperimentConfig,
    pub results: NoiseResults,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub duality_residual: f64,
    pub source_exact_error: f64,
    pub target_exact_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub version: u32,
    pub config: ExperimentConfig,
    pub rows: Vec<ConvergenceRow>,
}

pub const REPORT_VERSION: u32 = 1;

/// Worker cap: LGT_DUAL_THREADS, else the available parallelism.
pub fn worker_count(items: usize) -> usize {
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = std::env::var("LGT_DUAL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(hw);
    cap.min(items).max(1)
}

/// Deterministic parallel map over indices: results are placed by index,
/// independent of scheduling.
pub fn par_map_indices<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync,
{
    let workers = worker_count(count);
    if workers <= 1 {
        return (0..count).map(f).collect();
    }
    let mut out: Vec<Option<U>> = Vec::with_capacity(count);
    out.resize_with(count, || None);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || {
                    let mut res = Vec::new();
                    let mut i = w;
                    while i < count {
                        res.push((i, f(i)));
                        i += workers;
                    }
                    res
                })
            })
            .collect();
        for h in handles {
            for (i, u) in h.join().expect("worker panicked") {
                out[i] = Some(u);
            }
        }
    });
    out.into_iter()
        .map(|o| o.expect("all slots filled"))
        .collect()
}

/// Project onto the Π X = +1 sector: average the Π X orbit, renormalize.
pub fn symmetrize(s: &StateVector) -> Result<StateVector, LabError> {
    let n = s.modulus();
    let flip = WeylString::from_chain(PauliKind::X, &vec![1; s.sites()], n);
    let mut acc = s.clone();
    let mut rotated = s.clone();
    for _ in 1..n {
        rotated.apply_weyl(&flip)?;
        let amps = acc.amplitudes_mut();
        for (a, b) in amps.iter_mut().zip(rotated.amplitudes()) {
            *a += b;
        }
    }
    acc.normalize()?;
    Ok(acc)
}

pub fn random_state(layout: &RegisterLayout, modulus: u32, seed: u64) -> StateVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = StateVector::dim_of(layout, modulus);
    let amps: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let mut s = StateVector::from_amplitudes(layout.clone(), modulus, amps).unwrap();
    s.normalize().unwrap();
    s
}

/// Build the configured initial state on the source model's register,
/// enforcing the map's symmetry requirement.
pub fn initial_state(
    cfg: &ExperimentConfig,
    map: &DualityMap,
    source: &ModelSpec,
) -> Result<StateVector, LabError> {
    let layout = source.layout().clone();
    let n = map.modulus();
    let state = match cfg.initial {
        InitialState::Plus => StateVector::plus_state(layout, n),
        InitialState::Zero => StateVector::zero_state(layout, n),
        InitialState::RandomSymmetric { seed } => symmetrize(&random_state(&layout, n, seed))?,
        InitialState::Random { seed } => random_state(&layout, n, seed),
        InitialState::LevinGu => {
            if map.id() != MapId::KwTri {
                return Err(LabError::InvalidConfig(
                    "the Levin-Gu initial state needs the kw_tri map".into(),
                ));
            }
            levin_gu_state(map.complex())?
        }
    };
    if cfg.map.requires_symmetric_input() {
        let symmetric = matches!(
            cfg.initial,
            InitialState::Plus | InitialState::RandomSymmetric { .. } | InitialState::LevinGu
        );
        if !symmetric {
            return Err(LabError::InvalidConfig(format!(
                "map {} requires a Π X symmetric initial state",
                cfg.map
            )));
        }
    }
    Ok(state)
}

struct Pipeline {
    map: DualityMap,
    source: ModelSpec,
    target: ModelSpec,
}

fn build_pipeline(cfg: &ExperimentConfig) -> Result<Pipeline, LabError> {
    let cx = cfg.lattice.build()?;
    let map = DualityMap::new(cfg.map, &cx)?;
    let source = build_model(cfg.map.source_model(), &cx, &cfg.couplings)?;
    let target = build_model(cfg.map.target_model(), &cx, &cfg.couplings)?;
    Ok(Pipeline {
        map,
        source,
        target,
    })
}

/// Full identity verification: evolve, dualize, correct and compare every
/// branch against the target evolution of the gauged input.
pub fn verify_duality(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    if cfg.noise.is_some() {
        return Err(LabError::InvalidConfig(
            "verify does not take a noise block; use the noise experiment".into(),
        ));
    }
    let pipe = build_pipeline(cfg)?;
    let initial = initial_state(cfg, &pipe.map, &pipe.source)?;

    let src_sched = trotter_schedule(&pipe.source, cfg.t, cfg.k)?.with_mode(cfg.evolution);
    let tgt_sched = trotter_schedule(&pipe.target, cfg.t, cfg.k)?.with_mode(cfg.evolution);
    let evolved = evolve(&initial, &src_sched)?;
    let gauged = pipe.map.gauged_input(&initial)?;
    let target = evolve(&gauged, &tgt_sched)?;

    // Sampling measurement outcomes is categorical sampling over the branch
    // weights, so one exhaustive dualization serves both modes.
    let all_runs = pipe.map.dualize(&evolved, &DualizeMode::AllBranches)?;
    let runs = match cfg.mode {
        RunMode::Exhaustive => all_runs,
        RunMode::Sampled { seed, shots } => {
            let total: f64 = all_runs.iter().map(|r| r.weight).sum();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sampled = Vec::with_capacity(shots);
            for _ in 0..shots {
                let mut draw = rng.gen::<f64>() * total;
                let mut picked = all_runs.len() - 1;
                for (b, run) in all_runs.iter().enumerate() {
                    if draw < run.weight {
                        picked = b;
                        break;
                    }
                    draw -= run.weight;
                }
                sampled.push(all_runs[picked].clone());
            }
            sampled
        }
    };

    let results = assess_runs(&pipe, runs, &target, evolved.norm_sqr())?;
    Ok(Report {
        version: REPORT_VERSION,
        config: cfg.clone(),
        results,
    })
}

fn assess_runs(
    pipe: &Pipeline,
    runs: Vec<DualityRun>,
    target: &StateVector,
    input_norm_sqr: f64,
) -> Result<VerifyResults, LabError> {
    let prefactor = pipe.map.prefactor();
    let target_norm = target.norm();
    let generators = gauge_generators(&pipe.target)?.to_vec();
    let is_string = pipe.map.id().is_string_map();

    let assessed = par_map_indices(runs.len(), |i| -> Result<_, String> {
        let mut run = runs[i].clone();
        let evaluable = run.success && run.weight > 1e-14;
        let mut residual = None;
        let mut residual_unaligned = None;
        let mut alt_fidelity = None;
        let mut gauss = vec![0.0f64; generators.len()];
        if evaluable {
            let corrected = pipe
                .map
                .correct(&mut run, PairingPolicy::Canonical)
                .map_err(|e| e.to_string())?;
            let mut lhs = corrected.clone();
            lhs.scale(Complex64::new(1.0 / prefactor, 0.0));
            residual = Some(lhs.distance_phase_aligned(target) / target_norm);
            residual_unaligned = Some(lhs.distance(target) / target_norm);
            let mut unit = corrected.clone();
            unit.normalize().map_err(|e| e.to_string())?;
            for (gi, g) in generators.iter().enumerate() {
                let mut probe = unit.clone();
                probe.apply_weyl(g).map_err(|e| e.to_string())?;
                gauss[gi] = probe.distance(&unit);
            }
            if is_string {
                let mut alt_run = runs[i].clone();
                let alt = pipe
                    .map
                    .correct(&mut alt_run, PairingPolicy::Alternate)
                    .map_err(|e| e.to_string())?;
                alt_fidelity = Some(corrected.fidelity(&alt));
            }
        }
        Ok((
            BranchResult {
                outcomes: run.outcomes.coeffs().to_vec(),
                weight: run.weight,
                success: run.success,
                residual,
                residual_unaligned,
                prefactor: run.prefactor,
                alt_fidelity,
            },
            gauss,
        ))
    });

    let mut branches = Vec::with_capacity(assessed.len());
    let mut gauss_residuals = vec![0.0f64; generators.len()];
    for item in assessed {
        let (branch, gauss) = item.map_err(LabError::InvalidConfig)?;
        for (acc, g) in gauss_residuals.iter_mut().zip(&gauss) {
            *acc = acc.max(*g);
        }
        branches.push(branch);
    }

    let max_residual = branches
        .iter()
        .filter_map(|b| b.residual)
        .fold(0.0, f64::max);
    let success_rate =
        branches.iter().filter(|b| b.success).count() as f64 / branches.len().max(1) as f64;
    let total_branch_weight: f64 = branches.iter().map(|b| b.weight).sum();
    // Matter maps have uniform branch weights N^{−m}·‖input‖²; string maps
    // concentrate the same total on the neutral branches (factor √N each
    // for symmetric inputs).
    let expected_prefactor = if is_string {
        (pipe.map.modulus() as f64).sqrt()
    } else {
        1.0
    };
    let prefactor_max_deviation = branches
        .iter()
        .filter(|b| b.weight > 1e-14)
        .map(|b| (b.prefactor - expected_prefactor).abs())
        .fold(0.0, f64::max);
    let min_alt_fidelity = branches
        .iter()
        .filter_map(|b| b.alt_fidelity)
        .fold(None, |acc: Option<f64>, f| {
            Some(acc.map_or(f, |a| a.min(f)))
        });
    let gauss_residual_max = gauss_residuals.iter().copied().fold(0.0, f64::max);

    Ok(VerifyResults {
        branch_count: branches.len(),
        branches,
        max_residual,
        success_rate,
        gauss_residuals,
        gauss_residual_max,
        prefactor_max_deviation,
        total_branch_weight,
        input_norm_sqr,
        min_alt_fidelity,
    })
}

/// Apply the schedule with single-site noise interleaved after each Trotter
/// layer on the undualized register.
fn evolve_with_noise(
    state: &StateVector,
    sched: &crate::models::TrotterSchedule,
    noise: &NoiseSpec,
    rng: &mut ChaCha8Rng,
) -> Result<StateVector, LabError> {
    let mut s = state.clone();
    let n = s.modulus();
    for _ in 0..sched.steps() {
        for (op, angle) in sched.step_factors() {
            let c = match sched.mode() {
                EvolutionMode::Real => Complex64::new(0.0, *angle),
                EvolutionMode::Imaginary => Complex64::new(*angle, 0.0),
            };
            op.apply_exp(&mut s, c)?;
        }
        for site in 0..s.sites() {
            if rng.gen::<f64>() >= noise.p {
                continue;
            }
            match noise.channel {
                NoiseChannel::ZRotation => {
                    let alpha = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
                    let mut z = WeylString::z_power(s.sites(), n, site, 1);
                    if n > 2 {
                        z = z.hermitized();
                    }
                    s.apply_term_exp(&z, alpha)?;
                }
                NoiseChannel::RandomUnitary => {
                    let u = haar_unitary(n as usize, rng);
                    s.apply_single_site(site, &u)?;
                }
            }
        }
    }
    Ok(s)
}

/// Haar-distributed unitary via QR of a complex Gaussian matrix.
fn haar_unitary(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let gauss = |rng: &mut ChaCha8Rng| {
        // Box-Muller
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut cols: Vec<Vec<Complex64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| Complex64::new(gauss(rng), gauss(rng)))
                .collect()
        })
        .collect();
    // Gram-Schmidt with phase fixed by the diagonal of R.
    for j in 0..n {
        for i in 0..j {
            let proj: Complex64 = cols[i]
                .iter()
                .zip(&cols[j])
                .map(|(a, b)| a.conj() * b)
                .sum();
            let basis = cols[i].clone();
            for (v, b) in cols[j].iter_mut().zip(&basis) {
                *v -= proj * b;
            }
        }
        let norm: f64 = cols[j].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        for v in &mut cols[j] {
            *v /= norm;
        }
    }
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for (j, col) in cols.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            m[r * n + j] = *v;
        }
    }
    m
}

/// Noise study: sampled dualizations of noisy source evolutions. Reports
/// the success rate (charge-neutral fraction) and, for every successful
/// run, the Gauss residual of the corrected state and the residual of the
/// alternate-path loop operator Z(ρ − τ).
pub fn noise_experiment(cfg: &ExperimentConfig) -> Result<NoiseReport, LabError> {
    let noise = cfg.noise.ok_or_else(|| {
        LabError::InvalidConfig("the noise experiment needs a noise block".into())
    })?;
    if !cfg.map.is_string_map() {
        return Err(LabError::InvalidConfig(
            "the noise experiment targets the Kramers-Wannier map family".into(),
        ));
    }
    let RunMode::Sampled { seed, shots } = cfg.mode else {
        return Err(LabError::InvalidConfig(
            "the noise experiment needs sampled mode".into(),
        ));
    };
    let pipe = build_pipeline(cfg)?;
    let initial = initial_state(cfg, &pipe.map, &pipe.source)?;
    let src_sched = trotter_schedule(&pipe.source, cfg.t, cfg.k)?.with_mode(cfg.evolution);
    let generators = gauge_generators(&pipe.target)?.to_vec();

    let outcomes = par_map_indices(shots, |i| -> Result<(bool, f64, f64), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(
            noise
                .seed
                .wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let noisy =
            evolve_with_noise(&initial, &src_sched, &noise, &mut rng).map_err(|e| e.to_string())?;
        let runs = pipe
            .map
            .dualize(
                &noisy,
                &DualizeMode::Sample {
                    seed: seed.wrapping_add(i as u64),
                },
            )
            .map_err(|e| e.to_string())?;
        let mut run = runs.into_iter().next().expect("one sampled run");
        if !run.success {
            return Ok((false, 0.0, 0.0));
        }
        let corrected = pipe
            .map
            .correct(&mut run, PairingPolicy::Canonical)
            .map_err(|e| e.to_string())?;
        let mut unit = corrected;
        unit.normalize().map_err(|e| e.to_string())?;
        let mut gauss = 0.0f64;
        for g in &generators {
            let mut probe = unit.clone();
            probe.apply_weyl(g).map_err(|e| e.to_string())?;
            gauss = gauss.max(probe.distance(&unit));
        }
        // Loop triviality: the canonical and alternate counter paths differ
        // by a (generally non-contractible) cycle; Z on it must be trivial.
        let tau_alt = pipe
            .map
            .complex()
            .pair_outcomes(&run.outcomes, PairingPolicy::Alternate)
            .map_err(|e| e.to_string())?;
        let rho = run.rho.clone().expect("successful run has a path");
        let loop_chain = rho.sub(&tau_alt).map_err(|e| e.to_string())?;
        let z_loop = pipe
            .map
            .byproduct_from_path(&loop_chain)
            .map_err(|e| e.to_string())?;
        let mut probe = unit.clone();
        probe.apply_weyl(&z_loop).map_err(|e| e.to_string())?;
        let loop_res = probe.distance(&unit);
        Ok((true, gauss, loop_res))
    });

    let mut successes = 0usize;
    let mut gauss_max = 0.0f64;
    let mut loop_max = 0.0f64;
    for item in outcomes {
        let (ok, gauss, loop_res) = item.map_err(LabError::InvalidConfig)?;
        if ok {
            successes += 1;
            gauss_max = gauss_max.max(gauss);
            loop_max = loop_max.max(loop_res);
        }
    }
    Ok(NoiseReport {
        version: REPORT_VERSION,
        config: cfg.clone(),
        results: NoiseResults {
            runs: shots,
            successes,
            success_rate: successes as f64 / shots.max(1) as f64,
            gauss_residual_max: gauss_max,
            loop_residual_max: loop_max,
        },
    })
}

/// Trotter-limit study: for each k, the duality residual (flat at the
/// numerical floor) and the distances of both Trotterized evolutions from
/// their exact e^{−iHt} oracles.
pub fn trotter_convergence(
    cfg: &ExperimentConfig,
    k_list: &[usize],
) -> Result<ConvergenceReport, LabError> {
    let pipe = build_pipeline(cfg)?;
    let initial = initial_state(cfg, &pipe.map, &pipe.source)?;
    let gauged = pipe.map.gauged_input(&initial)?;
    let exact_src = exact_evolve_model(&pipe.source, &initial, cfg.t)?;
    let exact_tgt = exact_evolve_model(&pipe.target, &gauged, cfg.t)?;
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let mut sub = cfg.clone();
        sub.k = k;
        let report = verify_duality(&sub)?;
        let src_sched = trotter_schedule(&pipe.source, cfg.t, k)?;
        let tgt_sched = trotter_schedule(&pipe.target, cfg.t, k)?;
        let evolved = evolve(&initial, &src_sched)?;
        let tgt_evolved = evolve(&gauged, &tgt_sched)?;
        rows.push(ConvergenceRow {
            k,
            duality_residual: report.results.max_residual,
            source_exact_error: evolved.distance(&exact_src),
            target_exact_error: tgt_evolved.distance(&exact_tgt),
        });
    }
    Ok(ConvergenceReport {
        version: REPORT_VERSION,
        config: cfg.clone(),
        rows,
    })
}

/// Expectation value of every stabilizer of a model on a state. Values are
/// real for Hermitian stabilizers; the imaginary part is returned too so
/// callers can sanity-check it.
pub fn stabilizer_check(
    state: &StateVector,
    model: &ModelSpec,
) -> Result<Vec<(String, f64, f64)>, LabError> {
    let mut out = Vec::new();
    for (label, op) in model.stabilizers() {
        let ev = match &op {
            TermOp::Weyl(w) => state.expect_weyl(w)?,
            TermOp::Twisted(_) => op.expectation(state)?,
        };
        out.push((label, ev.re, ev.im));
    }
    Ok(out)
}

/// Serialize a report to pretty JSON with a trailing newline.
pub fn report_json<T: Serialize>(report: &T) -> Result<String, LabError> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

/// CSV table for convergence studies.
pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("k,duality_residual,source_exact_error,target_exact_error\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e}\n",
            r.k, r.duality_residual, r.source_exact_error, r.target_exact_error
        ));
    }
    out
}

/// Atomically write a file: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), LabError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "report".into()),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
