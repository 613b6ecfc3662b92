//! The measurement-assisted duality pipelines: ancilla layout, entangler,
//! X-basis measurement of the undualized register, byproduct and counter
//! operators, and feedforwarded correction.
//!
//! Each map appends all-zero dual registers to the source state, applies a
//! layer of controlled gates (controls on the measured register), and
//! contracts the measured register against X-basis bras. A branch with
//! outcome chain s then satisfies, with prefactor N^{−m/2},
//!
//! ```text
//! branch(s) = N^{−m/2} · O_bp(s) · T^{M*}(t) |ψ_gauged⟩
//! ```
//!
//! For the string maps (kw, kw_tri, kw_zn) the byproduct is Z(ρ) along a
//! path with ∂ρ = s, defined only when s is charge neutral; for the matter
//! maps (kw_gm, jw, fs) it is a product of local Z's at the measured
//! locations and every branch succeeds.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{CellComplex, Chain, ComplexError, LatticeKind, PairingPolicy};
use crate::engine::{EngineError, GateStep, RegisterLayout, StateVector};
use crate::models::{ModelError, ModelId};
use crate::weyl::{
    index_digits, jw_encode, Bilinear, FermionLayout, PauliKind, WeylError, WeylString,
};

#[derive(Debug, Error)]
pub enum DualizerError {
    #[error("map {map} is not defined on a {kind} lattice with modulus {modulus}")]
    UnsupportedMap {
        map: MapId,
        kind: LatticeKind,
        modulus: u32,
    },
    #[error("unknown map id {0:?}")]
    UnknownMap(String),
    #[error("state layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("cannot correct an unsuccessful run (isolated monopole)")]
    UnsuccessfulRun,
    #[error("residual loop operator acted nontrivially (deviation {0:.3e})")]
    ResidualLoopNontrivial(f64),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The six duality maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapId {
    Kw,
    KwTri,
    KwZn,
    KwGm,
    Jw,
    Fs,
}

impl MapId {
    pub const ALL: [MapId; 6] = [
        MapId::Kw,
        MapId::KwTri,
        MapId::KwZn,
        MapId::KwGm,
        MapId::Jw,
        MapId::Fs,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MapId::Kw => "kw",
            MapId::KwTri => "kw_tri",
            MapId::KwZn => "kw_zn",
            MapId::KwGm => "kw_gm",
            MapId::Jw => "jw",
            MapId::Fs => "fs",
        }
    }

    pub fn source_model(&self) -> ModelId {
        match self {
            MapId::Kw => ModelId::Tfi,
            MapId::KwTri => ModelId::Ttfi,
            MapId::KwZn => ModelId::ZnClock,
            MapId::KwGm | MapId::Jw => ModelId::TlIsing,
            MapId::Fs => ModelId::Sp,
        }
    }

    pub fn target_model(&self) -> ModelId {
        match self {
            MapId::Kw => ModelId::Gt,
            MapId::KwTri => ModelId::Tgt,
            MapId::KwZn => ModelId::ZnGt,
            MapId::KwGm => ModelId::Gm,
            MapId::Jw => ModelId::Qed,
            MapId::Fs => ModelId::Fs,
        }
    }

    /// String maps pair outcomes into Z-string byproducts; matter maps
    /// apply local Z's and never abort.
    pub fn is_string_map(&self) -> bool {
        matches!(self, MapId::Kw | MapId::KwTri | MapId::KwZn)
    }

    /// Whether the source wave function must be symmetric under Π X.
    pub fn requires_symmetric_input(&self) -> bool {
        self.is_string_map()
    }

    /// Grade of the measurement-outcome chain (0-cells except for fs).
    pub fn outcome_grade(&self) -> usize {
        match self {
            MapId::Fs => 1,
            _ => 0,
        }
    }
}

impl std::fmt::Display for MapId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MapId {
    type Err = DualizerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MapId::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| DualizerError::UnknownMap(s.to_string()))
    }
}

/// How the measured register is read out.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualizeMode {
    /// Project onto every one of the N^m outcome tuples.
    AllBranches,
    /// Born-rule sample a single outcome tuple, deterministically per seed.
    Sample { seed: u64 },
    /// Project onto one fixed outcome tuple.
    Branch { outcomes: Vec<u32> },
}

/// Record of one dualization branch.
#[derive(Clone, Debug)]
pub struct DualityRun {
    /// Measurement outcomes as a chain (grade 0, or 1 for fs).
    pub outcomes: Chain,
    /// Byproduct path ρ with ∂ρ = s (string maps, successful runs).
    pub rho: Option<Chain>,
    /// Counter path chosen by the last correction.
    pub tau: Option<Chain>,
    /// Charge neutrality of the outcomes (always true for matter maps).
    pub success: bool,
    /// Unnormalized post-measurement state on the dual registers.
    pub post: StateVector,
    /// Squared norm of `post` (the branch probability weight).
    pub weight: f64,
    /// Branch norm divided by N^{−m/2}·‖input‖.
    pub prefactor: f64,
}

/// A fully assembled duality map on a given complex.
#[derive(Clone, Debug)]
pub struct DualityMap {
    id: MapId,
    cx: CellComplex,
    combined: RegisterLayout,
    measured: usize,
    entangler: Vec<GateStep>,
    fermions: Option<FermionLayout>,
}

impl DualityMap {
    pub fn new(id: MapId, cx: &CellComplex) -> Result<DualityMap, DualizerError> {
        let ok = match id {
            MapId::Kw => cx.kind() == LatticeKind::SquareTorus && cx.modulus() == 2,
            MapId::KwTri => cx.kind() == LatticeKind::TriangularTorus && cx.modulus() == 2,
            MapId::KwZn => cx.kind() == LatticeKind::SquareTorus,
            MapId::KwGm | MapId::Jw => cx.kind() == LatticeKind::Cycle && cx.modulus() == 2,
            MapId::Fs => cx.kind() == LatticeKind::SquareTorus && cx.modulus() == 2,
        };
        if !ok {
            return Err(DualizerError::UnsupportedMap {
                map: id,
                kind: cx.kind(),
                modulus: cx.modulus(),
            });
        }
        let n = cx.modulus();
        let nv = cx.cell_count(0);
        let ne = cx.cell_count(1);
        let (combined, measured, fermions) = match id {
            MapId::Kw | MapId::KwTri | MapId::KwZn => (
                RegisterLayout::new(vec![("vertices", nv), ("edges", ne)]),
                nv,
                None,
            ),
            MapId::KwGm => (
                RegisterLayout::new(vec![("vertices", nv), ("gauge", nv), ("matter", ne)]),
                nv,
                None,
            ),
            MapId::Jw => (
                RegisterLayout::new(vec![("vertices", nv), ("gauge", nv), ("fermions", ne)]),
                nv,
                Some(FermionLayout::antiperiodic(ne)),
            ),
            MapId::Fs => (
                RegisterLayout::new(vec![
                    ("u_edges", ne),
                    ("gauge", ne),
                    ("matter", cx.cell_count(2)),
                ]),
                ne,
                None,
            ),
        };
        let total = combined.sites();
        let mut entangler: Vec<GateStep> = Vec::new();
        match id {
            MapId::Kw | MapId::KwTri | MapId::KwZn => {
                // [CX_{σ0 σ1}]^{a(∂*σ0; σ1)} for every vertex and edge.
                for v in 0..nv {
                    for &(e, sign) in cx.dual_cell_boundary(2, v) {
                        let power = sign_mod(sign, n);
                        entangler.push(GateStep::Controlled {
                            control: v,
                            op: WeylString::x_power(total, n, nv + e, power),
                        });
                    }
                }
            }
            MapId::KwGm => {
                let (goff, _) = combined.register("gauge").unwrap();
                let (moff, _) = combined.register("matter").unwrap();
                for v in 0..nv {
                    entangler.push(GateStep::Controlled {
                        control: v,
                        op: WeylString::x_power(total, 2, goff + v, 1),
                    });
                    for &(m, sign) in cx.dual_cell_boundary(1, v) {
                        entangler.push(GateStep::Controlled {
                            control: v,
                            op: WeylString::x_power(total, 2, moff + m, sign_mod(sign, 2)),
                        });
                    }
                }
            }
            MapId::Jw => {
                let (goff, _) = combined.register("gauge").unwrap();
                let (foff, _) = combined.register("fermions").unwrap();
                let fl = fermions.unwrap();
                for v in 0..nv {
                    // CX first, then the controlled hopping CS (the hopping
                    // includes the antiperiodic seam sign).
                    entangler.push(GateStep::Controlled {
                        control: v,
                        op: WeylString::x_power(total, 2, goff + v, 1),
                    });
                    let mut s = jw_encode(&fl, Bilinear::Hopping(v))?.embedded(foff, total);
                    if fl.boundary_sign(v) < 0 {
                        s = s.with_phase(2);
                    }
                    entangler.push(GateStep::Controlled { control: v, op: s });
                }
            }
            MapId::Fs => {
                let (goff, _) = combined.register("gauge").unwrap();
                let (moff, _) = combined.register("matter").unwrap();
                for e in 0..ne {
                    entangler.push(GateStep::Controlled {
                        control: e,
                        op: WeylString::x_power(total, 2, goff + e, 1),
                    });
                    for &(p, sign) in cx.dual_cell_boundary(1, e) {
                        entangler.push(GateStep::Controlled {
                            control: e,
                            op: WeylString::x_power(total, 2, moff + p, sign_mod(sign, 2)),
                        });
                    }
                }
            }
        }
        Ok(DualityMap {
            id,
            cx: cx.clone(),
            combined,
            measured,
            entangler,
            fermions,
        })
    }

    pub fn id(&self) -> MapId {
        self.id
    }

    pub fn complex(&self) -> &CellComplex {
        &self.cx
    }

    pub fn modulus(&self) -> u32 {
        self.cx.modulus()
    }

    /// Number of measured sites m.
    pub fn measured_sites(&self) -> usize {
        self.measured
    }

    /// The combined layout: measured register first, dual registers after,
    /// all dualized sites initialized to |0⟩ by [`DualityMap::dualize`].
    pub fn ancilla_layout(&self) -> &RegisterLayout {
        &self.combined
    }

    /// The dual registers only (the target model's layout).
    pub fn dual_layout(&self) -> RegisterLayout {
        self.combined.without_first()
    }

    pub fn fermion_layout(&self) -> Option<&FermionLayout> {
        self.fermions.as_ref()
    }

    /// The entangler gate list (controls on the measured register).
    pub fn build_entangler(&self) -> &[GateStep] {
        &self.entangler
    }

    /// Gates of the inverse entangler.
    pub fn entangler_inverse(&self) -> Vec<GateStep> {
        self.entangler
            .iter()
            .rev()
            .map(|g| match g {
                GateStep::Controlled { control, op } => GateStep::Controlled {
                    control: *control,
                    op: op.inverse(),
                },
                other => other.clone(),
            })
            .collect()
    }

    /// The analytic branch prefactor N^{−m/2}.
    pub fn prefactor(&self) -> f64 {
        (self.modulus() as f64).powf(-(self.measured as f64) / 2.0)
    }

    fn check_source(&self, s: &StateVector) -> Result<(), DualizerError> {
        if s.sites() != self.measured || s.modulus() != self.modulus() {
            return Err(DualizerError::LayoutMismatch(format!(
                "source state has {} sites mod {}, map measures {} sites mod {}",
                s.sites(),
                s.modulus(),
                self.measured,
                self.modulus()
            )));
        }
        Ok(())
    }

    /// |ψ_gauged⟩ built from the same coefficients as the source state:
    /// |c⟩ ↦ |∂*c⟩ for the string maps, |c⟩ ↦ |c, ∂*c⟩ for the matter maps.
    pub fn gauged_input(&self, source: &StateVector) -> Result<StateVector, DualizerError> {
        self.check_source(source)?;
        let n = self.modulus();
        let dual = self.dual_layout();
        let mut out = StateVector::zero_state(dual, n);
        out.amplitudes_mut()[0] = Complex64::new(0.0, 0.0);
        let grade = self.id.outcome_grade();
        let mut digits = vec![0u32; self.measured];
        for (idx, amp) in source.amplitudes().iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            index_digits(idx, n, &mut digits);
            let c = Chain::from_coeffs(&self.cx, grade, false, digits.clone())?;
            let dstar = self.cx.coboundary(&c)?;
            let target = if self.id.is_string_map() {
                crate::weyl::digits_index(dstar.coeffs(), n)
            } else {
                let mut all = digits.clone();
                all.extend_from_slice(dstar.coeffs());
                crate::weyl::digits_index(&all, n)
            };
            out.amplitudes_mut()[target] += amp;
        }
        Ok(out)
    }

    /// Run the dualization: append |0…0⟩ dual registers, apply the
    /// entangler, and read the measured register in the X basis per `mode`.
    /// No correction is applied. Charge-neutrality failures are recorded on
    /// the run (success = false), not thrown.
    pub fn dualize(
        &self,
        source: &StateVector,
        mode: &DualizeMode,
    ) -> Result<Vec<DualityRun>, DualizerError> {
        self.check_source(source)?;
        let n = self.modulus();
        let input_norm = source.norm();
        let mut extended = source.with_appended_zero_registers(&RegisterLayout::new(
            self.combined.registers()[1..]
                .iter()
                .map(|(name, s)| (name.as_str(), *s))
                .collect(),
        ));
        for gate in &self.entangler {
            extended.apply_unitary_step(gate)?;
        }
        match mode {
            DualizeMode::AllBranches => {
                let branches = extended.split_leading_register_x(self.measured)?;
                let mut runs = Vec::with_capacity(branches.len());
                let mut digits = vec![0u32; self.measured];
                for (b, post) in branches.into_iter().enumerate() {
                    index_digits(b, n, &mut digits);
                    runs.push(self.make_run(&digits, post, input_norm)?);
                }
                Ok(runs)
            }
            DualizeMode::Branch { outcomes } => {
                let sites: Vec<usize> = (0..self.measured).collect();
                let post = extended.project_x(&sites, outcomes)?;
                Ok(vec![self.make_run(outcomes, post, input_norm)?])
            }
            DualizeMode::Sample { seed } => {
                let sites: Vec<usize> = (0..self.measured).collect();
                let mut work = extended;
                work.x_transform(&sites)?;
                let branches = (n as usize).pow(self.measured as u32);
                let mut probs = vec![0.0f64; branches];
                for (idx, a) in work.amplitudes().iter().enumerate() {
                    probs[idx % branches] += a.norm_sqr();
                }
                let total: f64 = probs.iter().sum();
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut draw = rng.gen::<f64>() * total;
                let mut picked = branches - 1;
                for (b, &p) in probs.iter().enumerate() {
                    if draw < p {
                        picked = b;
                        break;
                    }
                    draw -= p;
                }
                let rest = work.amplitudes().len() / branches;
                let mut amps = vec![Complex64::new(0.0, 0.0); rest];
                for (d, a) in amps.iter_mut().enumerate() {
                    *a = work.amplitudes()[picked + d * branches];
                }
                let post = StateVector::from_amplitudes(self.dual_layout(), n, amps)?;
                let mut digits = vec![0u32; self.measured];
                index_digits(picked, n, &mut digits);
                Ok(vec![self.make_run(&digits, post, input_norm)?])
            }
        }
    }

    fn make_run(
        &self,
        outcome_digits: &[u32],
        post: StateVector,
        input_norm: f64,
    ) -> Result<DualityRun, DualizerError> {
        let outcomes = Chain::from_coeffs(
            &self.cx,
            self.id.outcome_grade(),
            false,
            outcome_digits.to_vec(),
        )?;
        let (success, rho) = if self.id.is_string_map() {
            match self.cx.pair_outcomes(&outcomes, PairingPolicy::Canonical) {
                Ok(rho) => (true, Some(rho)),
                Err(ComplexError::IsolatedMonopole) => (false, None),
                Err(e) => return Err(e.into()),
            }
        } else {
            (true, None)
        };
        let weight = post.norm_sqr();
        let prefactor = if input_norm > 0.0 {
            weight.sqrt() / (self.prefactor() * input_norm)
        } else {
            0.0
        };
        Ok(DualityRun {
            outcomes,
            rho,
            tau: None,
            success,
            post,
            weight,
            prefactor,
        })
    }

    /// Z-string on the first dual register lifted from a chain.
    fn z_on_dual(&self, coeffs: &[u32]) -> Result<WeylString, DualizerError> {
        let dual = self.dual_layout();
        let (name, _) = dual.registers()[0].clone();
        let (offset, sites) = dual.register(&name).unwrap();
        Ok(WeylString::from_chain_embedded(
            PauliKind::Z,
            coeffs,
            self.modulus(),
            offset,
            sites,
            dual.sites(),
        )?)
    }

    /// The byproduct operator O_bp(s) on the dual registers: Z(ρ) with
    /// ∂ρ = s (canonical pairing) for string maps, Π Z^{s(σ)} at the
    /// measured locations for matter maps.
    pub fn byproduct(&self, outcomes: &Chain) -> Result<WeylString, DualizerError> {
        if self.id.is_string_map() {
            let rho = self.cx.pair_outcomes(outcomes, PairingPolicy::Canonical)?;
            self.z_on_dual(rho.coeffs())
        } else {
            self.z_on_dual(outcomes.coeffs())
        }
    }

    /// O_bp for an explicit string-map path.
    pub fn byproduct_from_path(&self, rho: &Chain) -> Result<WeylString, DualizerError> {
        self.z_on_dual(rho.coeffs())
    }

    /// The counter operator: Z(τ)^{−1} for a path with ∂τ = s chosen by the
    /// policy (string maps), or O_bp itself (matter maps, self-inverse).
    pub fn counter(
        &self,
        outcomes: &Chain,
        policy: PairingPolicy,
    ) -> Result<WeylString, DualizerError> {
        if self.id.is_string_map() {
            let tau = self.cx.pair_outcomes(outcomes, policy)?;
            Ok(self.z_on_dual(tau.coeffs())?.inverse())
        } else {
            self.byproduct(outcomes)
        }
    }

    /// Apply the feedforwarded correction to a successful run. For string
    /// maps the net operator O_counter·O_bp = Z(ρ − τ) is a closed loop; it
    /// must act as the identity on the corrected state, and this is checked
    /// rather than assumed.
    pub fn correct(
        &self,
        run: &mut DualityRun,
        policy: PairingPolicy,
    ) -> Result<StateVector, DualizerError> {
        if !run.success {
            return Err(DualizerError::UnsuccessfulRun);
        }
        let mut corrected = run.post.clone();
        if self.id.is_string_map() {
            let tau = self.cx.pair_outcomes(&run.outcomes, policy)?;
            let counter = self.z_on_dual(tau.coeffs())?.inverse();
            corrected.apply_weyl(&counter)?;
            run.tau = Some(tau.clone());
            // Residual loop ξ = ρ − τ: ∂ξ = 0 by construction; verify that
            // Z(ξ) is trivial on the corrected state.
            let rho = run.rho.clone().expect("successful string run has a path");
            let loop_chain = rho.sub(&tau)?;
            debug_assert!(self.cx.boundary(&loop_chain)?.is_zero());
            if !loop_chain.is_zero() && corrected.norm_sqr() > 1e-28 {
                let z_loop = self.z_on_dual(loop_chain.coeffs())?;
                let mut probe = corrected.clone();
                probe.apply_weyl(&z_loop)?;
                let dev = probe.distance(&corrected) / corrected.norm();
                if dev > 1e-10 {
                    return Err(DualizerError::ResidualLoopNontrivial(dev));
                }
            }
        } else {
            let counter = self.counter(&run.outcomes, policy)?;
            corrected.apply_weyl(&counter)?;
            run.tau = Some(run.outcomes.clone());
        }
        Ok(corrected)
    }
}

fn sign_mod(sign: i8, n: u32) -> u32 {
    if sign >= 0 {
        sign as u32 % n
    } else {
        (n - ((-sign) as u32 % n)) % n
    }
}
