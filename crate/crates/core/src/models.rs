//! Hamiltonian term builders and first-order Trotter schedules for the
//! model zoo: transverse-field Ising (2D) and its pure gauge dual, their
//! twisted variants on the triangular torus, the ℤ_N clock model and ℤ_N
//! gauge theory, the 1D transverse+longitudinal Ising chain with its
//! gauged-matter and gauged-Majorana duals, and the star-plaquette /
//! Fradkin-Shenker pair.
//!
//! Factor ordering inside one Trotter step follows each model's product
//! formula literally (rightmost factor first), so source and target factors
//! correspond one to one under the duality dictionaries.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{CellComplex, Chain, ComplexError, LatticeKind};
use crate::engine::{EngineError, RegisterLayout, StateVector};
use crate::weyl::{jw_encode, Bilinear, FermionLayout, PauliKind, WeylError, WeylString};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model {model} is not defined on a {kind} lattice")]
    IncompatibleLattice { model: ModelId, kind: LatticeKind },
    #[error("model {model} requires modulus 2, complex has {modulus}")]
    UnsupportedModulus { model: ModelId, modulus: u32 },
    #[error("model {model} needs coupling {name}")]
    MissingCoupling { model: ModelId, name: &'static str },
    #[error("coupling {name} must be nonzero for model {model}")]
    ZeroCoupling { model: ModelId, name: &'static str },
    #[error("model {0} has no gauge generators")]
    UngaugedModel(ModelId),
    #[error("symmetry check failed for {model}: term {term} vs generator {generator}")]
    SymmetryCheck {
        model: ModelId,
        term: usize,
        generator: usize,
    },
    #[error("trotter step count must be at least 1")]
    ZeroSteps,
    #[error("unknown model id {0:?}")]
    UnknownModel(String),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// The eleven model labels of the zoo.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    Tfi,
    Gt,
    Ttfi,
    Tgt,
    ZnClock,
    ZnGt,
    TlIsing,
    Gm,
    Qed,
    Sp,
    Fs,
}

impl ModelId {
    pub const ALL: [ModelId; 11] = [
        ModelId::Tfi,
        ModelId::Gt,
        ModelId::Ttfi,
        ModelId::Tgt,
        ModelId::ZnClock,
        ModelId::ZnGt,
        ModelId::TlIsing,
        ModelId::Gm,
        ModelId::Qed,
        ModelId::Sp,
        ModelId::Fs,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::Tfi => "tfi",
            ModelId::Gt => "gt",
            ModelId::Ttfi => "ttfi",
            ModelId::Tgt => "tgt",
            ModelId::ZnClock => "zn_clock",
            ModelId::ZnGt => "zn_gt",
            ModelId::TlIsing => "tl_ising",
            ModelId::Gm => "gm",
            ModelId::Qed => "qed",
            ModelId::Sp => "sp",
            ModelId::Fs => "fs",
        }
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelId::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| ModelError::UnknownModel(s.to_string()))
    }
}

/// Dimensionless couplings; a model reads only the ones it declares.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    pub lambda: Option<f64>,
    pub g: Option<f64>,
    pub h: Option<f64>,
    pub mu: Option<f64>,
}

impl Couplings {
    pub fn lambda(v: f64) -> Self {
        Couplings {
            lambda: Some(v),
            ..Default::default()
        }
    }

    pub fn gh(g: f64, h: f64) -> Self {
        Couplings {
            g: Some(g),
            h: Some(h),
            ..Default::default()
        }
    }

    pub fn g_only(v: f64) -> Self {
        Couplings {
            g: Some(v),
            ..Default::default()
        }
    }

    pub fn lambda_mu(lambda: f64, mu: f64) -> Self {
        Couplings {
            lambda: Some(lambda),
            mu: Some(mu),
            ..Default::default()
        }
    }

    fn need(&self, model: ModelId, name: &'static str) -> Result<f64, ModelError> {
        let v = match name {
            "lambda" => self.lambda,
            "g" => self.g,
            "h" => self.h,
            "mu" => self.mu,
            _ => None,
        };
        v.ok_or(ModelError::MissingCoupling { model, name })
    }
}

/// Diagonal phase factor of a twisted term: contributes a factor i on the
/// basis states whose bits on `mask` have odd parity. This is the exact
/// unitary e^{iπ/4(1−Z_u Z_{u'})} (two sites) or e^{iπ/4(1−Z_e)} (one site).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwistFactor {
    pub mask: usize,
}

/// Hamiltonian term of the form O = X(flip)·Π_f i^{parity_f(z)}, used by the
/// twisted Ising model and twisted gauge theory. Restricted to N = 2; the
/// phase factors act on sites disjoint from the flipped ones, so O² is
/// diagonal and exp(cO) closes on index pairs {z, z ⊕ flip}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwistedTerm {
    sites: usize,
    flip_mask: usize,
    factors: Vec<TwistFactor>,
}

impl TwistedTerm {
    pub fn new(sites: usize, flips: &[usize], factor_sites: &[Vec<usize>]) -> Self {
        assert!(sites <= usize::BITS as usize - 2);
        let mut flip_mask = 0usize;
        for &s in flips {
            assert!(s < sites);
            flip_mask |= 1 << s;
        }
        assert_ne!(flip_mask, 0, "twisted term needs X content");
        let factors: Vec<TwistFactor> = factor_sites
            .iter()
            .map(|sites_f| {
                let mut mask = 0usize;
                for &s in sites_f {
                    mask |= 1 << s;
                }
                assert_eq!(
                    mask & flip_mask,
                    0,
                    "twist factors must avoid flipped sites"
                );
                TwistFactor { mask }
            })
            .collect();
        TwistedTerm {
            sites,
            flip_mask,
            factors,
        }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn flip_mask(&self) -> usize {
        self.flip_mask
    }

    pub fn factors(&self) -> &[TwistFactor] {
        &self.factors
    }

    /// Number of factors with odd parity on basis index `idx`, mod 4 (the
    /// power of i the diagonal part contributes).
    fn twist_power(&self, idx: usize) -> u32 {
        let mut m = 0u32;
        for f in &self.factors {
            m += ((idx & f.mask).count_ones()) & 1;
        }
        m % 4
    }

    fn i_power(m: u32) -> Complex64 {
        match m % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }

    fn check_state(&self, s: &StateVector) -> Result<(), ModelError> {
        if s.modulus() != 2 || s.sites() != self.sites {
            return Err(ModelError::Engine(EngineError::LayoutMismatch(format!(
                "twisted term on {} sites vs state on {} sites mod {}",
                self.sites,
                s.sites(),
                s.modulus()
            ))));
        }
        Ok(())
    }

    /// O|z⟩ = i^{m(z)} |z ⊕ flip⟩.
    pub fn apply(&self, s: &mut StateVector) -> Result<(), ModelError> {
        self.check_state(s)?;
        let dim = s.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for idx in 0..dim {
            let a = s.amplitudes()[idx];
            if a.norm_sqr() == 0.0 {
                continue;
            }
            out[idx ^ self.flip_mask] = Self::i_power(self.twist_power(idx)) * a;
        }
        s.amplitudes_mut().copy_from_slice(&out);
        Ok(())
    }

    /// exp(c·O), exact on every pair {z, z ⊕ flip}: with w = c·i^{m(z)}
    /// the block is cosh(w)·1 + sinh(w)·X.
    pub fn apply_exp(&self, s: &mut StateVector, c: Complex64) -> Result<(), ModelError> {
        self.check_state(s)?;
        let dim = s.dim();
        let amps = s.amplitudes_mut();
        for idx in 0..dim {
            let jdx = idx ^ self.flip_mask;
            if jdx < idx {
                continue;
            }
            // Twist factors avoid flipped sites, so m(idx) = m(jdx).
            let w = c * Self::i_power(self.twist_power(idx));
            let (ch, sh) = (w.cosh(), w.sinh());
            let (ai, aj) = (amps[idx], amps[jdx]);
            amps[idx] = ch * ai + sh * aj;
            amps[jdx] = ch * aj + sh * ai;
        }
        Ok(())
    }

    pub fn add_dense(&self, h: &mut [Complex64], dim: usize, weight: f64) {
        for idx in 0..dim {
            h[(idx ^ self.flip_mask) * dim + idx] += weight * Self::i_power(self.twist_power(idx));
        }
    }

    /// Exact commutation test against a Weyl string: the X parts always
    /// commute mod 2; the string's Z content must see the flips an even
    /// number of times, and the string's X content must preserve every
    /// twist-factor parity.
    pub fn commutes_with_weyl(&self, w: &WeylString) -> bool {
        debug_assert_eq!(w.modulus(), 2);
        let mut zb = 0usize;
        let mut xb = 0usize;
        for (j, (&x, &z)) in w.x_exponents().iter().zip(w.z_exponents()).enumerate() {
            if x % 2 == 1 {
                xb |= 1 << j;
            }
            if z % 2 == 1 {
                zb |= 1 << j;
            }
        }
        if !(zb & self.flip_mask).count_ones().is_multiple_of(2) {
            return false;
        }
        self.factors
            .iter()
            .all(|f| (f.mask & xb).count_ones().is_multiple_of(2))
    }
}

/// A Hamiltonian term: either a Weyl string (with its hermitize flag) or a
/// twisted X·phase operator.
#[derive(Clone, Debug)]
pub enum TermOp {
    Weyl(WeylString),
    Twisted(TwistedTerm),
}

impl TermOp {
    /// exp(c·Op) with c = iθ for real time or c = θ for imaginary time.
    pub fn apply_exp(&self, s: &mut StateVector, c: Complex64) -> Result<(), ModelError> {
        match self {
            TermOp::Weyl(w) => s.apply_term_exp_scaled(w, c).map_err(ModelError::from),
            TermOp::Twisted(t) => t.apply_exp(s, c),
        }
    }

    /// Apply the bare operator (for expectation values).
    pub fn apply(&self, s: &mut StateVector) -> Result<(), ModelError> {
        match self {
            TermOp::Weyl(w) => s.apply_weyl(w).map_err(ModelError::from),
            TermOp::Twisted(t) => t.apply(s),
        }
    }

    pub fn expectation(&self, s: &StateVector) -> Result<Complex64, ModelError> {
        let mut copy = s.clone();
        self.apply(&mut copy)?;
        Ok(s.inner(&copy) / s.norm_sqr())
    }

    pub fn add_dense(&self, h: &mut [Complex64], dim: usize, weight: f64) {
        match self {
            TermOp::Weyl(w) => {
                let m = w.to_dense();
                if w.hermitize {
                    for r in 0..dim {
                        for c in 0..dim {
                            h[r * dim + c] += weight * (m[r * dim + c] + m[c * dim + r].conj());
                        }
                    }
                } else {
                    for (acc, v) in h.iter_mut().zip(&m) {
                        *acc += weight * v;
                    }
                }
            }
            TermOp::Twisted(t) => t.add_dense(h, dim, weight),
        }
    }

    pub fn commutes_with_weyl(&self, g: &WeylString) -> Result<bool, ModelError> {
        match self {
            TermOp::Weyl(w) => Ok(w.commutes_with(g)?),
            TermOp::Twisted(t) => Ok(t.commutes_with_weyl(g)),
        }
    }
}

/// One factor of a Trotter step: exp(iΔt·weight·op).
#[derive(Clone, Debug)]
pub struct Factor {
    pub op: TermOp,
    pub weight: f64,
}

/// A fully built model: its lattice, register layout, ordered Trotter
/// factors, gauge/symmetry generators and resolved couplings.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    id: ModelId,
    complex: CellComplex,
    couplings: Couplings,
    layout: RegisterLayout,
    factors: Vec<Factor>,
    gauge: Vec<WeylString>,
    symmetry: Option<WeylString>,
}

impl ModelSpec {
    pub fn id(&self) -> ModelId {
        self.id
    }

    pub fn complex(&self) -> &CellComplex {
        &self.complex
    }

    pub fn couplings(&self) -> &Couplings {
        &self.couplings
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    /// Factors of one Trotter step, first applied first.
    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn sites(&self) -> usize {
        self.layout.sites()
    }

    pub fn is_gauged(&self) -> bool {
        !self.gauge.is_empty()
    }

    /// The global symmetry generator Π X_v for symmetric ungauged models.
    pub fn symmetry_generator(&self) -> Option<&WeylString> {
        self.symmetry.as_ref()
    }

    /// H = Σ (−weight)·Op, matching exp(+iΔt·weight·Op) Trotter factors.
    pub fn hamiltonian_terms(&self) -> Vec<(f64, TermOp)> {
        self.factors
            .iter()
            .map(|f| (-f.weight, f.op.clone()))
            .collect()
    }

    /// Stabilizers checked after a t = 0 dualization: the gauge generators
    /// plus the model's X-type star/plaquette operators.
    pub fn stabilizers(&self) -> Vec<(String, TermOp)> {
        let mut out: Vec<(String, TermOp)> = self
            .gauge
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("gauss[{i}]"), TermOp::Weyl(g.clone())))
            .collect();
        match self.id {
            ModelId::Gt | ModelId::ZnGt => {
                for (i, f) in self.factors.iter().enumerate() {
                    if let TermOp::Weyl(w) = &f.op {
                        if w.x_exponents().iter().any(|&e| e != 0) {
                            let mut plain = w.clone();
                            plain.hermitize = false;
                            out.push((format!("plaquette[{i}]"), TermOp::Weyl(plain)));
                        }
                    }
                }
            }
            ModelId::Tgt => {
                for (i, f) in self.factors.iter().enumerate() {
                    if let TermOp::Twisted(t) = &f.op {
                        out.push((format!("twisted_star[{i}]"), TermOp::Twisted(t.clone())));
                    }
                }
            }
            _ => {}
        }
        out
    }
}

/// Gauge generators of a gauged model; errors for ungauged ids.
pub fn gauge_generators(m: &ModelSpec) -> Result<&[WeylString], ModelError> {
    if m.gauge.is_empty() {
        return Err(ModelError::UngaugedModel(m.id));
    }
    Ok(&m.gauge)
}

/// The six (source, target, map id) rows of the duality zoo.
pub fn table_pairs() -> [(ModelId, ModelId, &'static str); 6] {
    [
        (ModelId::Tfi, ModelId::Gt, "kw"),
        (ModelId::Ttfi, ModelId::Tgt, "kw_tri"),
        (ModelId::ZnClock, ModelId::ZnGt, "kw_zn"),
        (ModelId::TlIsing, ModelId::Gm, "kw_gm"),
        (ModelId::TlIsing, ModelId::Qed, "jw"),
        (ModelId::Sp, ModelId::Fs, "fs"),
    ]
}

fn require_kind(id: ModelId, cx: &CellComplex, kind: LatticeKind) -> Result<(), ModelError> {
    if cx.kind() != kind {
        return Err(ModelError::IncompatibleLattice {
            model: id,
            kind: cx.kind(),
        });
    }
    Ok(())
}

fn require_mod2(id: ModelId, cx: &CellComplex) -> Result<(), ModelError> {
    if cx.modulus() != 2 {
        return Err(ModelError::UnsupportedModulus {
            model: id,
            modulus: cx.modulus(),
        });
    }
    Ok(())
}

fn weyl_on(
    layout: &RegisterLayout,
    reg: &str,
    kind: PauliKind,
    coeffs: &[u32],
    modulus: u32,
) -> Result<WeylString, ModelError> {
    let (offset, sites) = layout.register(reg).ok_or_else(|| {
        ModelError::Engine(EngineError::LayoutMismatch(format!("no register {reg}")))
    })?;
    Ok(WeylString::from_chain_embedded(
        kind,
        coeffs,
        modulus,
        offset,
        sites,
        layout.sites(),
    )?)
}

/// Chain of ∂σ for a single primal cell.
fn cell_boundary_chain(cx: &CellComplex, grade: usize, idx: usize) -> Result<Chain, ComplexError> {
    cx.boundary(&Chain::unit(cx, grade, false, idx))
}

/// Chain of ∂*σ* for a single dual cell (indexed by its primal partner);
/// the result's coefficients live on primal (d − grade + 1)-cells.
fn dual_cell_boundary_chain(
    cx: &CellComplex,
    dual_grade: usize,
    idx: usize,
) -> Result<Chain, ComplexError> {
    cx.boundary(&Chain::unit(cx, dual_grade, true, idx))
}

/// Build a model on a complex. Validates lattice kind, modulus and
/// couplings, then checks every Trotter factor commutes with every gauge
/// (or global-symmetry) generator; the check is exact string algebra.
pub fn build_model(
    id: ModelId,
    cx: &CellComplex,
    couplings: &Couplings,
) -> Result<ModelSpec, ModelError> {
    let n = cx.modulus();
    let nv = cx.cell_count(0);
    let hc = n > 2; // ℤ_N models add Hermitian conjugates
    let mut factors: Vec<Factor> = Vec::new();
    let mut gauge: Vec<WeylString> = Vec::new();
    let mut symmetry: Option<WeylString> = None;

    let layout = match id {
        ModelId::Tfi | ModelId::Ttfi | ModelId::ZnClock | ModelId::TlIsing => {
            RegisterLayout::single("vertices", nv)
        }
        ModelId::Gt | ModelId::Tgt | ModelId::ZnGt | ModelId::Sp => {
            RegisterLayout::single("edges", cx.cell_count(1))
        }
        ModelId::Gm => RegisterLayout::new(vec![("gauge", nv), ("matter", cx.cell_count(1))]),
        ModelId::Qed => RegisterLayout::new(vec![("gauge", nv), ("fermions", cx.cell_count(1))]),
        ModelId::Fs => RegisterLayout::new(vec![
            ("gauge", cx.cell_count(1)),
            ("matter", cx.cell_count(2)),
        ]),
    };

    match id {
        ModelId::Tfi | ModelId::ZnClock => {
            require_kind(id, cx, LatticeKind::SquareTorus)?;
            if id == ModelId::Tfi {
                require_mod2(id, cx)?;
            }
            let lambda = couplings.need(id, "lambda")?;
            let ising: Vec<Factor> = (0..cx.cell_count(1))
                .map(|e| {
                    let b = cell_boundary_chain(cx, 1, e)?;
                    let mut w = weyl_on(&layout, "vertices", PauliKind::Z, b.coeffs(), n)?;
                    w.hermitize = hc;
                    Ok(Factor {
                        op: TermOp::Weyl(w),
                        weight: 1.0,
                    })
                })
                .collect::<Result<_, ModelError>>()?;
            let transverse: Vec<Factor> = (0..nv)
                .map(|v| {
                    let mut w = WeylString::x_power(layout.sites(), n, v, 1);
                    w.hermitize = hc;
                    Factor {
                        op: TermOp::Weyl(w),
                        weight: lambda,
                    }
                })
                .collect();
            if id == ModelId::Tfi {
                // T^TFI: Ising factors first, then the transverse ones.
                factors.extend(ising);
                factors.extend(transverse);
            } else {
                // T^{ℤ_N clock}: transverse factors first.
                factors.extend(transverse);
                factors.extend(ising);
            }
            symmetry = Some(weyl_on(&layout, "vertices", PauliKind::X, &vec![1; nv], n)?);
        }
        ModelId::Gt | ModelId::ZnGt => {
            require_kind(id, cx, LatticeKind::SquareTorus)?;
            if id == ModelId::Gt {
                require_mod2(id, cx)?;
            }
            let lambda = couplings.need(id, "lambda")?;
            let electric: Vec<Factor> = (0..cx.cell_count(1))
                .map(|e| {
                    let mut w = WeylString::z_power(layout.sites(), n, e, 1);
                    w.hermitize = hc;
                    Factor {
                        op: TermOp::Weyl(w),
                        weight: 1.0,
                    }
                })
                .collect();
            let plaquette: Vec<Factor> = (0..nv)
                .map(|v| {
                    // X(∂*σ*₂): the dual plaquette at vertex v.
                    let star = dual_cell_boundary_chain(cx, 2, v)?;
                    let mut w = weyl_on(&layout, "edges", PauliKind::X, star.coeffs(), n)?;
                    w.hermitize = hc;
                    Ok(Factor {
                        op: TermOp::Weyl(w),
                        weight: lambda,
                    })
                })
                .collect::<Result<_, ModelError>>()?;
            if id == ModelId::Gt {
                factors.extend(electric);
                factors.extend(plaquette);
            } else {
                factors.extend(plaquette);
                factors.extend(electric);
            }
            // Gauss law Z(∂σ₂) per plaquette.
            for p in 0..cx.cell_count(2) {
                let b = cell_boundary_chain(cx, 2, p)?;
                gauge.push(weyl_on(&layout, "edges", PauliKind::Z, b.coeffs(), n)?);
            }
        }
        ModelId::Ttfi => {
            require_kind(id, cx, LatticeKind::TriangularTorus)?;
            require_mod2(id, cx)?;
            let g = couplings.need(id, "g")?;
            for e in 0..cx.cell_count(1) {
                let b = cell_boundary_chain(cx, 1, e)?;
                let w = weyl_on(&layout, "vertices", PauliKind::Z, b.coeffs(), 2)?;
                factors.push(Factor {
                    op: TermOp::Weyl(w),
                    weight: g,
                });
            }
            for v in 0..nv {
                // O_v = X_v Π_{⟨vuu'⟩} e^{iπ/4(1−Z_u Z_{u'})} over the six
                // triangles at v; the twist pair is the opposite edge's ends.
                let mut pairs: Vec<Vec<usize>> = Vec::new();
                for tri in cx.triangles() {
                    if let Some(pos) = tri.vertices.iter().position(|&u| u == v) {
                        let others: Vec<usize> = (0..3)
                            .filter(|&k| k != pos)
                            .map(|k| tri.vertices[k])
                            .collect();
                        pairs.push(others);
                    }
                }
                factors.push(Factor {
                    op: TermOp::Twisted(TwistedTerm::new(layout.sites(), &[v], &pairs)),
                    weight: 1.0,
                });
            }
            symmetry = Some(weyl_on(&layout, "vertices", PauliKind::X, &vec![1; nv], 2)?);
        }
        ModelId::Tgt => {
            require_kind(id, cx, LatticeKind::TriangularTorus)?;
            require_mod2(id, cx)?;
            let g = couplings.need(id, "g")?;
            for e in 0..cx.cell_count(1) {
                factors.push(Factor {
                    op: TermOp::Weyl(WeylString::z_power(layout.sites(), 2, e, 1)),
                    weight: g,
                });
            }
            for v in 0..nv {
                // Õ_v = Π_{e ⊃ v} X_e Π_{⟨vuu'⟩} e^{iπ/4(1−Z_{⟨u,u'⟩})}.
                let star: Vec<usize> = cx
                    .dual_cell_boundary(2, v)
                    .iter()
                    .map(|&(e, _)| e)
                    .collect();
                let mut opposite: Vec<Vec<usize>> = Vec::new();
                for tri in cx.triangles() {
                    if let Some(pos) = tri.vertices.iter().position(|&u| u == v) {
                        opposite.push(vec![tri.edges[pos]]);
                    }
                }
                factors.push(Factor {
                    op: TermOp::Twisted(TwistedTerm::new(layout.sites(), &star, &opposite)),
                    weight: 1.0,
                });
            }
            for (t, _) in cx.triangles().iter().enumerate() {
                let b = cell_boundary_chain(cx, 2, t)?;
                gauge.push(weyl_on(&layout, "edges", PauliKind::Z, b.coeffs(), 2)?);
            }
        }
        ModelId::TlIsing => {
            require_kind(id, cx, LatticeKind::Cycle)?;
            require_mod2(id, cx)?;
            let g = couplings.need(id, "g")?;
            let h = couplings.need(id, "h")?;
            for v in 0..nv {
                factors.push(Factor {
                    op: TermOp::Weyl(WeylString::x_power(layout.sites(), 2, v, 1)),
                    weight: g,
                });
            }
            for v in 0..nv {
                factors.push(Factor {
                    op: TermOp::Weyl(WeylString::z_power(layout.sites(), 2, v, 1)),
                    weight: h,
                });
            }
            for e in 0..cx.cell_count(1) {
                let b = cell_boundary_chain(cx, 1, e)?;
                let w = weyl_on(&layout, "vertices", PauliKind::Z, b.coeffs(), 2)?;
                factors.push(Factor {
                    op: TermOp::Weyl(w),
                    weight: 1.0,
                });
            }
        }
        ModelId::Gm => {
            require_kind(id, cx, LatticeKind::Cycle)?;
            require_mod2(id, cx)?;
            let g = couplings.need(id, "g")?;
            let h = couplings.need(id, "h")?;
            for v in 0..nv {
                // X_{σ*₁} X(∂*σ*₁): gauge X at v times matter X on the two
                // dual vertices at the ends of dual edge v.
                let ends = dual_cell_boundary_chain(cx, 1, v)?;
                let hop = weyl_on(&layout, "matter", PauliKind::X, ends.coeffs(), 2)?
                    .mul(&weyl_on_site(&layout, "gauge", v, PauliKind::X)?)?;
                factors.push(Factor {
                    op: TermOp::Weyl(hop),
                    weight: g,
                });
            }
            for v in 0..nv {
                factors.push(Factor {
                    op: TermOp::Weyl(weyl_on_site(&layout, "gauge", v, PauliKind::Z)?),
                    weight: h,
                });
            }
            for m in 0..cx.cell_count(1) {
                factors.push(Factor {
                    op: TermOp::Weyl(weyl_on_site(&layout, "matter", m, PauliKind::Z)?),
                    weight: 1.0,
                });
            }
            // Gauss law G = Z_{σ*₀}·Z(∂σ₁) per dual vertex (primal edge).
            for m in 0..cx.cell_count(1) {
                let ends = cell_boundary_chain(cx, 1, m)?;
                let gsm = weyl_on(&layout, "gauge", PauliKind::Z, ends.coeffs(), 2)?
                    .mul(&weyl_on_site(&layout, "matter", m, PauliKind::Z)?)?;
                gauge.push(gsm);
            }
        }
        ModelId::Qed => {
            require_kind(id, cx, LatticeKind::Cycle)?;
            require_mod2(id, cx)?;
            let g = couplings.need(id, "g")?;
            let h = couplings.need(id, "h")?;
            let fl = FermionLayout::antiperiodic(cx.cell_count(1));
            let (foffset, _) = layout.register("fermions").unwrap();
            for v in 0..nv {
                // X_{e*} S_{e*} (−1)^{δ_{e*,seam}}.
                let s = jw_encode(&fl, Bilinear::Hopping(v))?.embedded(foffset, layout.sites());
                let mut hop = s.mul(&weyl_on_site(&layout, "gauge", v, PauliKind::X)?)?;
                if fl.boundary_sign(v) < 0 {
                    hop = hop.with_phase(2); // ω_4² = −1
                }
                factors.push(Factor {
                    op: TermOp::Weyl(hop),
                    weight: g,
                });
            }
            for v in 0..nv {
                factors.push(Factor {
                    op: TermOp::Weyl(weyl_on_site(&layout, "gauge", v, PauliKind::Z)?),
                    weight: h,
                });
            }
            for m in 0..fl.modes() {
                let p = jw_encode(&fl, Bilinear::Parity(m))?.embedded(foffset, layout.sites());
                factors.push(Factor {
                    op: TermOp::Weyl(p),
                    weight: 1.0,
                });
            }
            // G_{v*} = Z_{e*} P_{v*} Z_{e'*}: gauge Z on both ends of primal
            // edge m, parity on mode m.
            for m in 0..cx.cell_count(1) {
                let ends = cell_boundary_chain(cx, 1, m)?;
                let p = jw_encode(&fl, Bilinear::Parity(m))?.embedded(foffset, layout.sites());
                let gsm = weyl_on(&layout, "gauge", PauliKind::Z, ends.coeffs(), 2)?.mul(&p)?;
                gauge.push(gsm);
            }
        }
        ModelId::Sp => {
            require_kind(id, cx, LatticeKind::SquareTorus)?;
            require_mod2(id, cx)?;
            let lambda = couplings.need(id, "lambda")?;
            let mu = couplings.need(id, "mu")?;
            if lambda == 0.0 {
                return Err(ModelError::ZeroCoupling {
                    model: id,
                    name: "lambda",
                });
            }
            if mu == 0.0 {
                return Err(ModelError::ZeroCoupling {
                    model: id,
                    name: "mu",
                });
            }
            for e in 0..cx.cell_count(1) {
                factors.push(Factor {
                    op: TermOp::Weyl(WeylString::x_power(layout.sites(), 2, e, 1)),
                    weight: 1.0 / lambda,
                });
            }
            for p in 0..cx.cell_count(2) {
                let b = cell_boundary_chain(cx, 2, p)?;
                let w = weyl_on(&layout, "edges", PauliKind::Z, b.coeffs(), 2)?;
                factors.push(Factor {
                    op: TermOp::Weyl(w),
                    weight: lambda,
                });
            }
            for e in 0..cx.cell_count(1) {
                factors.push(Factor {
                    op: TermOp::Weyl(WeylString::z_power(layout.sites(), 2, e, 1)),
                    weight: 1.0 / mu,
                });
            }
            for v in 0..nv {
                let star = dual_cell_boundary_chain(cx, 2, v)?;
                let w = weyl_on(&layout, "edges", PauliKind::X, star.coeffs(), 2)?;
                factors.push(Factor {
                    op: TermOp::Weyl(w),
                    weight: mu,
                });
            }
        }
        ModelId::Fs => {
            require_kind(id, cx, LatticeKind::SquareTorus)?;
            require_mod2(id, cx)?;
            let lambda = couplings.need(id, "lambda")?;
            let mu = couplings.need(id, "mu")?;
            if lambda == 0.0 {
                return Err(ModelError::ZeroCoupling {
                    model: id,
                    name: "lambda",
                });
            }
            if mu == 0.0 {
                return Err(ModelError::ZeroCoupling {
                    model: id,
                    name: "mu",
                });
            }
            for e in 0..cx.cell_count(1) {
                // X_{σ*₁} X(∂*σ*₁): gauge X at e, matter X on the flanking
                // plaquettes.
                let ends = dual_cell_boundary_chain(cx, 1, e)?;
                let hop = weyl_on(&layout, "matter", PauliKind::X, ends.coeffs(), 2)?
                    .mul(&weyl_on_site(&layout, "gauge", e, PauliKind::X)?)?;
                factors.push(Factor {
                    op: TermOp::Weyl(hop),
                    weight: 1.0 / lambda,
                });
            }
            for p in 0..cx.cell_count(2) {
                factors.push(Factor {
                    op: TermOp::Weyl(weyl_on_site(&layout, "matter", p, PauliKind::Z)?),
                    weight: lambda,
                });
            }
            for e in 0..cx.cell_count(1) {
                factors.push(Factor {
                    op: TermOp::Weyl(weyl_on_site(&layout, "gauge", e, PauliKind::Z)?),
                    weight: 1.0 / mu,
                });
            }
            for v in 0..nv {
                let star = dual_cell_boundary_chain(cx, 2, v)?;
                let w = weyl_on(&layout, "gauge", PauliKind::X, star.coeffs(), 2)?;
                factors.push(Factor {
                    op: TermOp::Weyl(w),
                    weight: mu,
                });
            }
            for p in 0..cx.cell_count(2) {
                let b = cell_boundary_chain(cx, 2, p)?;
                let gsm = weyl_on(&layout, "gauge", PauliKind::Z, b.coeffs(), 2)?
                    .mul(&weyl_on_site(&layout, "matter", p, PauliKind::Z)?)?;
                gauge.push(gsm);
            }
        }
    }

    let spec = ModelSpec {
        id,
        complex: cx.clone(),
        couplings: *couplings,
        layout,
        factors,
        gauge,
        symmetry,
    };

    // Every term must commute with every gauge generator (gauged models)
    // or with the global symmetry (symmetric ungauged models).
    let checks: Vec<&WeylString> = if spec.gauge.is_empty() {
        spec.symmetry.iter().collect()
    } else {
        spec.gauge.iter().collect()
    };
    for (ti, f) in spec.factors.iter().enumerate() {
        for (gi, gen) in checks.iter().enumerate() {
            if !f.op.commutes_with_weyl(gen)? {
                return Err(ModelError::SymmetryCheck {
                    model: id,
                    term: ti,
                    generator: gi,
                });
            }
        }
    }

    Ok(spec)
}

fn weyl_on_site(
    layout: &RegisterLayout,
    reg: &str,
    site: usize,
    kind: PauliKind,
) -> Result<WeylString, ModelError> {
    let (offset, sites) = layout.register(reg).ok_or_else(|| {
        ModelError::Engine(EngineError::LayoutMismatch(format!("no register {reg}")))
    })?;
    debug_assert!(site < sites);
    Ok(match kind {
        PauliKind::X => WeylString::x_power(layout.sites(), 2, offset + site, 1),
        PauliKind::Z => WeylString::z_power(layout.sites(), 2, offset + site, 1),
    })
}

/// Real or imaginary time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionMode {
    Real,
    Imaginary,
}

/// k repetitions of a model's factor sequence with angles Δt·weight.
#[derive(Clone, Debug)]
pub struct TrotterSchedule {
    factors: Vec<(TermOp, f64)>,
    steps: usize,
    t: f64,
    mode: EvolutionMode,
}

impl TrotterSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn total_time(&self) -> f64 {
        self.t
    }

    pub fn mode(&self) -> EvolutionMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: EvolutionMode) -> Self {
        self.mode = mode;
        self
    }

    /// The per-step factors (op, angle), first applied first.
    pub fn step_factors(&self) -> &[(TermOp, f64)] {
        &self.factors
    }
}

pub fn trotter_schedule(m: &ModelSpec, t: f64, k: usize) -> Result<TrotterSchedule, ModelError> {
    if k < 1 {
        return Err(ModelError::ZeroSteps);
    }
    let dt = t / k as f64;
    Ok(TrotterSchedule {
        factors: m
            .factors
            .iter()
            .map(|f| (f.op.clone(), dt * f.weight))
            .collect(),
        steps: k,
        t,
        mode: EvolutionMode::Real,
    })
}

/// Apply T^M(t) (or its imaginary-time variant with t ↦ −iτ). The returned
/// state keeps its true norm; imaginary-time callers renormalize themselves
/// or use [`evolve_normalized`].
pub fn evolve(s: &StateVector, sched: &TrotterSchedule) -> Result<StateVector, ModelError> {
    let mut state = s.clone();
    for _ in 0..sched.steps {
        for (op, angle) in &sched.factors {
            let c = match sched.mode {
                EvolutionMode::Real => Complex64::new(0.0, *angle),
                EvolutionMode::Imaginary => Complex64::new(*angle, 0.0),
            };
            op.apply_exp(&mut state, c)?;
        }
    }
    Ok(state)
}

/// Like [`evolve`] but renormalized; returns the norm that was divided out.
pub fn evolve_normalized(
    s: &StateVector,
    sched: &TrotterSchedule,
) -> Result<(StateVector, f64), ModelError> {
    let mut state = evolve(s, sched)?;
    let norm = state.normalize()?;
    Ok((state, norm))
}

/// e^{−iHt} for the model's full Hamiltonian by dense eigendecomposition.
/// Oracle for Trotter-convergence studies; desk scale only.
pub fn exact_evolve_model(
    m: &ModelSpec,
    s: &StateVector,
    t: f64,
) -> Result<StateVector, ModelError> {
    let dim = s.dim();
    let mut h = vec![Complex64::new(0.0, 0.0); dim * dim];
    for (w, op) in m.hamiltonian_terms() {
        op.add_dense(&mut h, dim, w);
    }
    Ok(s.evolve_dense_hamiltonian(&h, dim, t)?)
}

/// The Levin-Gu state on a triangular torus: the simultaneous +1 eigenstate
/// of every O_v, obtained by projecting the uniform superposition with
/// Π_v (1 + O_v)/2.
pub fn levin_gu_state(cx: &CellComplex) -> Result<StateVector, ModelError> {
    let m = build_model(ModelId::Ttfi, cx, &Couplings::g_only(0.0))?;
    let mut state = StateVector::plus_state(m.layout().clone(), 2);
    for f in m.factors() {
        if let TermOp::Twisted(t) = &f.op {
            let mut flipped = state.clone();
            t.apply(&mut flipped)?;
            let amps = state.amplitudes_mut();
            for (a, b) in amps.iter_mut().zip(flipped.amplitudes()) {
                *a = 0.5 * (*a + b);
            }
        }
    }
    state.normalize()?;
    // The projection must land on a genuine +1 eigenstate of every O_v.
    for f in m.factors() {
        if let TermOp::Twisted(t) = &f.op {
            let ev = TermOp::Twisted(t.clone()).expectation(&state)?;
            debug_assert!((ev - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
    }
    Ok(state)
}
