//! Dense statevector simulator over registers of N-level sites.
//!
//! Amplitude indexing is little-endian base N: site j is digit j of the
//! basis index. States may carry non-unit norm (projected branches,
//! imaginary time). Term exponentials are applied exactly per orbit of the
//! string's X-shift, so unitarity is limited only by floating point.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

use crate::weyl::{digits_index, index_digits, omega_2n, WeylError, WeylString};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("term is not Hermitian and hermitize is not set")]
    NonHermitianTerm,
    #[error("state has vanishing norm")]
    ZeroNorm,
    #[error("dimension {dim} exceeds the dense-exponential bound {bound}")]
    DimensionBound { dim: usize, bound: usize },
    #[error("control site {0} overlaps the controlled operator's support")]
    OverlappingControl(usize),
    #[error("site {site} out of range for {sites}-site state")]
    SiteOutOfRange { site: usize, sites: usize },
    #[error("Hamiltonian is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad state file: {0}")]
    BadStateFile(String),
}

/// Ordered named registers, each a run of N-level sites.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    regs: Vec<(String, usize)>,
}

impl RegisterLayout {
    pub fn new(regs: Vec<(&str, usize)>) -> Self {
        RegisterLayout {
            regs: regs.into_iter().map(|(n, s)| (n.to_string(), s)).collect(),
        }
    }

    pub fn single(name: &str, sites: usize) -> Self {
        Self::new(vec![(name, sites)])
    }

    pub fn sites(&self) -> usize {
        self.regs.iter().map(|(_, s)| s).sum()
    }

    pub fn registers(&self) -> &[(String, usize)] {
        &self.regs
    }

    /// (offset, sites) of a named register.
    pub fn register(&self, name: &str) -> Option<(usize, usize)> {
        let mut offset = 0;
        for (n, s) in &self.regs {
            if n == name {
                return Some((offset, *s));
            }
            offset += s;
        }
        None
    }

    /// This layout followed by another one's registers.
    pub fn concat(&self, other: &RegisterLayout) -> RegisterLayout {
        let mut regs = self.regs.clone();
        regs.extend(other.regs.iter().cloned());
        RegisterLayout { regs }
    }

    /// The layout with its first register removed.
    pub fn without_first(&self) -> RegisterLayout {
        RegisterLayout {
            regs: self.regs[1..].to_vec(),
        }
    }
}

/// One step of a gate program.
#[derive(Clone, Debug)]
pub enum GateStep {
    /// exp(iθ·P) or exp(iθ·(P + P†)) depending on the string's hermitize flag.
    TermExp { op: WeylString, theta: f64 },
    /// Apply `op`^a when the control site holds digit a. Covers CX (op = X),
    /// CX⁻¹ (op = X^{N−1}) and CS (op = hopping bilinear with its seam sign).
    Controlled { control: usize, op: WeylString },
    /// X-basis measurement of the listed sites (driven by the pipeline).
    MeasureX { sites: Vec<usize> },
    /// X-basis projection onto fixed outcomes (driven by the pipeline).
    ProjectX {
        sites: Vec<usize>,
        outcomes: Vec<u32>,
    },
}

/// Dense state over a register layout.
#[derive(Clone, Debug)]
pub struct StateVector {
    modulus: u32,
    layout: RegisterLayout,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn dim_of(layout: &RegisterLayout, modulus: u32) -> usize {
        (modulus as usize).pow(layout.sites() as u32)
    }

    /// |0…0⟩.
    pub fn zero_state(layout: RegisterLayout, modulus: u32) -> Self {
        let dim = Self::dim_of(&layout, modulus);
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector {
            modulus,
            layout,
            amps,
        }
    }

    /// Product of X-basis 0 states |0̃⟩ = N^{-1/2} Σ_a |a⟩ on every site.
    pub fn plus_state(layout: RegisterLayout, modulus: u32) -> Self {
        let dim = Self::dim_of(&layout, modulus);
        let amp = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        StateVector {
            modulus,
            layout,
            amps: vec![amp; dim],
        }
    }

    pub fn basis_state(layout: RegisterLayout, modulus: u32, digits: &[u32]) -> Self {
        assert_eq!(digits.len(), layout.sites());
        let mut s = Self::zero_state(layout, modulus);
        s.amps[0] = Complex64::new(0.0, 0.0);
        let idx = digits_index(digits, modulus);
        s.amps[idx] = Complex64::new(1.0, 0.0);
        s
    }

    pub fn from_amplitudes(
        layout: RegisterLayout,
        modulus: u32,
        amps: Vec<Complex64>,
    ) -> Result<Self, EngineError> {
        let dim = Self::dim_of(&layout, modulus);
        if amps.len() != dim {
            return Err(EngineError::LayoutMismatch(format!(
                "amplitude array has length {}, layout needs {dim}",
                amps.len()
            )));
        }
        Ok(StateVector {
            modulus,
            layout,
            amps,
        })
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn sites(&self) -> usize {
        self.layout.sites()
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&mut self, factor: Complex64) {
        for a in &mut self.amps {
            *a *= factor;
        }
    }

    pub fn normalize(&mut self) -> Result<f64, EngineError> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(EngineError::ZeroNorm);
        }
        self.scale(Complex64::new(1.0 / n, 0.0));
        Ok(n)
    }

    /// ⟨self | other⟩.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// ℓ₂ distance ‖self − other‖.
    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// ℓ₂ distance after aligning the global phase of `other` to maximize
    /// the real overlap: min_φ ‖self − e^{iφ}·other‖. The optimal phase is
    /// applied element-wise so near-equal states do not lose precision to
    /// cancellation.
    pub fn distance_phase_aligned(&self, other: &StateVector) -> f64 {
        let ov = other.inner(self);
        if ov.norm() < 1e-300 {
            return self.distance(other);
        }
        let phase = ov / ov.norm();
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - phase * b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// |⟨self|other⟩| / (‖self‖·‖other‖).
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm() / (self.norm() * other.norm())
    }

    pub fn digit(&self, index: usize, site: usize) -> u32 {
        let n = self.modulus as usize;
        ((index / n.pow(site as u32)) % n) as u32
    }

    fn check_sites(&self, w: &WeylString) -> Result<(), EngineError> {
        if w.sites() != self.sites() || w.modulus() != self.modulus {
            return Err(EngineError::LayoutMismatch(format!(
                "operator on {} sites mod {} vs state on {} sites mod {}",
                w.sites(),
                w.modulus(),
                self.sites(),
                self.modulus
            )));
        }
        Ok(())
    }

    /// Index obtained by shifting the digits on `support` by the string's X
    /// exponents.
    fn shifted_index(&self, idx: usize, support: &[usize], x: &[u32]) -> usize {
        let n = self.modulus as usize;
        let mut out = idx;
        for &site in support {
            let stride = n.pow(site as u32);
            let d = (idx / stride) % n;
            let nd = (d + x[site] as usize) % n;
            out = out + stride * nd - stride * d;
        }
        out
    }

    /// Phase exponent (of ω_{2N}) the string contributes on basis index `idx`,
    /// looking only at `support` sites.
    fn phase_exp_at(&self, idx: usize, support: &[usize], w: &WeylString) -> u32 {
        let n = self.modulus as usize;
        let z = w.z_exponents();
        let mut za = 0u64;
        for &site in support {
            let d = (idx / n.pow(site as u32)) % n;
            za += z[site] as u64 * d as u64;
        }
        ((w.phase_exponent() as u64 + 2 * za) % (2 * self.modulus as u64)) as u32
    }

    /// Apply a Weyl string as a unitary.
    pub fn apply_weyl(&mut self, w: &WeylString) -> Result<(), EngineError> {
        self.check_sites(w)?;
        let support = w.support();
        let x = w.x_exponents();
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        let phases: Vec<Complex64> = (0..2 * self.modulus)
            .map(|k| omega_2n(self.modulus, k))
            .collect();
        for idx in 0..self.amps.len() {
            let a = self.amps[idx];
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let ph = phases[self.phase_exp_at(idx, &support, w) as usize];
            out[self.shifted_index(idx, &support, x)] += ph * a;
        }
        self.amps = out;
        Ok(())
    }

    /// Expectation value ⟨ψ|W|ψ⟩ / ⟨ψ|ψ⟩.
    pub fn expect_weyl(&self, w: &WeylString) -> Result<Complex64, EngineError> {
        let mut copy = self.clone();
        copy.apply_weyl(w)?;
        Ok(self.inner(&copy) / self.norm_sqr())
    }

    /// exp(iθ·P) or exp(iθ·(P + P†)) per the string's hermitize flag.
    pub fn apply_term_exp(&mut self, w: &WeylString, theta: f64) -> Result<(), EngineError> {
        self.apply_term_exp_scaled(w, Complex64::new(0.0, theta))
    }

    /// Imaginary-time factor exp(θ·P) (or exp(θ·(P + P†))): the real-time
    /// factor with t ↦ −iτ. Non-unitary; norms are the caller's business.
    pub fn apply_term_exp_imaginary(
        &mut self,
        w: &WeylString,
        theta: f64,
    ) -> Result<(), EngineError> {
        self.apply_term_exp_scaled(w, Complex64::new(theta, 0.0))
    }

    /// exp(c·P) (hermitize = false; P must be Hermitian, hence P² = 1) or
    /// exp(c·(P + P†)) (hermitize = true), applied exactly orbit by orbit.
    pub fn apply_term_exp_scaled(
        &mut self,
        w: &WeylString,
        c: Complex64,
    ) -> Result<(), EngineError> {
        self.check_sites(w)?;
        let n = self.modulus;
        let support = w.support();
        let x = w.x_exponents();
        let diagonal = x.iter().all(|&e| e == 0);

        if !w.hermitize {
            if !w.is_hermitian() {
                return Err(EngineError::NonHermitianTerm);
            }
            if diagonal {
                // Eigenvalue on |a⟩ is ω_{2N}^{phase_on(a)} = ±1 (real).
                for idx in 0..self.amps.len() {
                    let k = self.phase_exp_at(idx, &support, w);
                    let eig = omega_2n(n, k).re;
                    self.amps[idx] *= (c * eig).exp();
                }
            } else {
                // Hermitian with X content: pairs {a, a+x}, P² = 1, so
                // exp(cP) = cosh(c)·1 + sinh(c)·P on each pair.
                let ch = c.cosh();
                let sh = c.sinh();
                let mut visited = vec![false; self.amps.len()];
                for idx in 0..self.amps.len() {
                    if visited[idx] {
                        continue;
                    }
                    let jdx = self.shifted_index(idx, &support, x);
                    debug_assert_ne!(idx, jdx);
                    visited[idx] = true;
                    visited[jdx] = true;
                    let ph = omega_2n(n, self.phase_exp_at(idx, &support, w));
                    let (ai, aj) = (self.amps[idx], self.amps[jdx]);
                    // P|idx⟩ = ph|jdx⟩, P|jdx⟩ = conj(ph)|idx⟩.
                    self.amps[idx] = ch * ai + sh * ph.conj() * aj;
                    self.amps[jdx] = ch * aj + sh * ph * ai;
                }
            }
            return Ok(());
        }

        // Hermitized: M = P + P†.
        if diagonal {
            for idx in 0..self.amps.len() {
                let k = self.phase_exp_at(idx, &support, w);
                let val = 2.0 * omega_2n(n, k).re;
                self.amps[idx] *= (c * val).exp();
            }
            return Ok(());
        }

        // Orbit length of the X shift.
        let mut m = 1u32;
        for &site in &support {
            if x[site] != 0 {
                let order = n / gcd(x[site], n);
                m = lcm(m, order);
            }
        }
        let m = m as usize;

        // When the string has no Z content and no phase, every orbit sees
        // the same hopping matrix; compute its exponential once.
        let uniform = w.phase_exponent() == 0 && w.z_exponents().iter().all(|&e| e == 0);
        let shared = if uniform {
            let mut mat = vec![Complex64::new(0.0, 0.0); m * m];
            for k in 0..m {
                mat[((k + 1) % m) * m + k] += Complex64::new(1.0, 0.0);
                mat[k * m + (k + 1) % m] += Complex64::new(1.0, 0.0);
            }
            Some(small_matexp(&mat, m, c))
        } else {
            None
        };

        let mut visited = vec![false; self.amps.len()];
        let mut orbit = Vec::with_capacity(m);
        for start in 0..self.amps.len() {
            if visited[start] {
                continue;
            }
            orbit.clear();
            let mut idx = start;
            loop {
                orbit.push(idx);
                visited[idx] = true;
                idx = self.shifted_index(idx, &support, x);
                if idx == start {
                    break;
                }
            }
            debug_assert_eq!(orbit.len(), m);
            let expm = match &shared {
                Some(e) => e.clone(),
                None => {
                    let mut mat = vec![Complex64::new(0.0, 0.0); m * m];
                    for (k, &ik) in orbit.iter().enumerate() {
                        let ph = omega_2n(n, self.phase_exp_at(ik, &support, w));
                        mat[((k + 1) % m) * m + k] += ph;
                        mat[k * m + (k + 1) % m] += ph.conj();
                    }
                    small_matexp(&mat, m, c)
                }
            };
            let old: Vec<Complex64> = orbit.iter().map(|&i| self.amps[i]).collect();
            for (r, &ir) in orbit.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (q, &aq) in old.iter().enumerate() {
                    acc += expm[r * m + q] * aq;
                }
                self.amps[ir] = acc;
            }
        }
        Ok(())
    }

    /// Apply `op`^a conditioned on the control site's digit a.
    pub fn apply_controlled(&mut self, control: usize, op: &WeylString) -> Result<(), EngineError> {
        self.check_sites(op)?;
        if control >= self.sites() {
            return Err(EngineError::SiteOutOfRange {
                site: control,
                sites: self.sites(),
            });
        }
        if op.support().contains(&control) {
            return Err(EngineError::OverlappingControl(control));
        }
        let n = self.modulus;
        let powers: Vec<WeylString> = (0..n).map(|a| op.pow(a)).collect();
        let supports: Vec<Vec<usize>> = powers.iter().map(|p| p.support()).collect();
        let phases: Vec<Complex64> = (0..2 * n).map(|k| omega_2n(n, k)).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        let stride = (n as usize).pow(control as u32);
        for idx in 0..self.amps.len() {
            let a = self.amps[idx];
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let ctrl = (idx / stride) % n as usize;
            let p = &powers[ctrl];
            let sup = &supports[ctrl];
            let ph = phases[self.phase_exp_at(idx, sup, p) as usize];
            out[self.shifted_index(idx, sup, p.x_exponents())] += ph * a;
        }
        self.amps = out;
        Ok(())
    }

    pub fn apply_unitary_step(&mut self, step: &GateStep) -> Result<(), EngineError> {
        match step {
            GateStep::TermExp { op, theta } => self.apply_term_exp(op, *theta),
            GateStep::Controlled { control, op } => self.apply_controlled(*control, op),
            GateStep::MeasureX { .. } | GateStep::ProjectX { .. } => Err(
                EngineError::LayoutMismatch("measurement steps need the pipeline".into()),
            ),
        }
    }

    /// Apply a single-site dense matrix (row-major N×N).
    pub fn apply_single_site(
        &mut self,
        site: usize,
        matrix: &[Complex64],
    ) -> Result<(), EngineError> {
        let n = self.modulus as usize;
        if site >= self.sites() {
            return Err(EngineError::SiteOutOfRange {
                site,
                sites: self.sites(),
            });
        }
        debug_assert_eq!(matrix.len(), n * n);
        let stride = n.pow(site as u32);
        let block = stride * n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        for base in (0..self.amps.len()).step_by(block) {
            for low in 0..stride {
                for (d, s) in scratch.iter_mut().enumerate() {
                    *s = self.amps[base + low + d * stride];
                }
                for d in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (a, s) in scratch.iter().enumerate() {
                        acc += matrix[d * n + a] * s;
                    }
                    self.amps[base + low + d * stride] = acc;
                }
            }
        }
        Ok(())
    }

    /// The X-basis change F with F[s][a] = N^{-1/2} ω^{sa}: after applying
    /// it to a site, computational digit s holds the amplitude ⟨s̃| ⊗ 1 |ψ⟩.
    fn x_matrix(&self) -> Vec<Complex64> {
        let n = self.modulus as usize;
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        let root = 1.0 / (n as f64).sqrt();
        for s in 0..n {
            for a in 0..n {
                let ang = 2.0 * std::f64::consts::PI * (s * a) as f64 / n as f64;
                m[s * n + a] = Complex64::new(ang.cos(), ang.sin()) * root;
            }
        }
        m
    }

    fn x_matrix_inverse(&self) -> Vec<Complex64> {
        let n = self.modulus as usize;
        let f = self.x_matrix();
        let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for c in 0..n {
                inv[r * n + c] = f[c * n + r].conj();
            }
        }
        inv
    }

    pub fn x_transform(&mut self, sites: &[usize]) -> Result<(), EngineError> {
        let m = self.x_matrix();
        for &s in sites {
            self.apply_single_site(s, &m)?;
        }
        Ok(())
    }

    pub fn x_transform_inverse(&mut self, sites: &[usize]) -> Result<(), EngineError> {
        let m = self.x_matrix_inverse();
        for &s in sites {
            self.apply_single_site(s, &m)?;
        }
        Ok(())
    }

    /// Contract the listed sites against X-basis bras with the given
    /// outcomes. The result is unnormalized (its squared norm is the branch
    /// probability times the input squared norm) and drops those sites.
    pub fn project_x(&self, sites: &[usize], outcomes: &[u32]) -> Result<StateVector, EngineError> {
        assert_eq!(sites.len(), outcomes.len());
        let mut work = self.clone();
        work.x_transform(sites)?;
        let n = self.modulus as usize;
        let keep: Vec<usize> = (0..self.sites()).filter(|s| !sites.contains(s)).collect();
        let out_dim = n.pow(keep.len() as u32);
        let mut out = vec![Complex64::new(0.0, 0.0); out_dim];
        let mut digits = vec![0u32; self.sites()];
        for idx in 0..work.amps.len() {
            let amp = work.amps[idx];
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            index_digits(idx, self.modulus, &mut digits);
            if sites
                .iter()
                .zip(outcomes)
                .all(|(&s, &o)| digits[s] == o % self.modulus)
            {
                let kept: Vec<u32> = keep.iter().map(|&s| digits[s]).collect();
                out[digits_index(&kept, self.modulus)] = amp;
            }
        }
        // Rebuild the layout with the dropped sites removed per register.
        let mut regs: Vec<(String, usize)> = Vec::new();
        let mut offset = 0;
        for (name, s) in self.layout.registers() {
            let dropped = sites
                .iter()
                .filter(|&&x| x >= offset && x < offset + s)
                .count();
            if s - dropped > 0 {
                regs.push((name.clone(), s - dropped));
            }
            offset += s;
        }
        Ok(StateVector {
            modulus: self.modulus,
            layout: RegisterLayout { regs },
            amps: out,
        })
    }

    /// Specialised exhaustive projection: the first `m` sites (which must
    /// form the leading register) are contracted against every X-basis
    /// outcome at once. Returns the N^m unnormalized branch states indexed
    /// by the packed outcome digits.
    pub fn split_leading_register_x(&self, m: usize) -> Result<Vec<StateVector>, EngineError> {
        let first = self.layout.registers()[0].1;
        if first != m {
            return Err(EngineError::LayoutMismatch(format!(
                "leading register has {first} sites, expected {m}"
            )));
        }
        let mut work = self.clone();
        let sites: Vec<usize> = (0..m).collect();
        work.x_transform(&sites)?;
        let n = self.modulus as usize;
        let branches = n.pow(m as u32);
        let rest_dim = self.amps.len() / branches;
        let rest_layout = self.layout.without_first();
        let mut out = vec![
            StateVector {
                modulus: self.modulus,
                layout: rest_layout.clone(),
                amps: vec![Complex64::new(0.0, 0.0); rest_dim],
            };
            branches
        ];
        for idx in 0..work.amps.len() {
            let b = idx % branches;
            out[b].amps[idx / branches] = work.amps[idx];
        }
        Ok(out)
    }

    /// Sample X-basis outcomes on the listed sites per the Born rule,
    /// collapse onto the sampled product state and renormalize.
    /// Deterministic given the RNG state.
    pub fn measure_x<R: Rng>(
        &mut self,
        sites: &[usize],
        rng: &mut R,
    ) -> Result<Vec<u32>, EngineError> {
        if self.norm_sqr() < 1e-280 {
            return Err(EngineError::ZeroNorm);
        }
        let n = self.modulus as usize;
        let mut outcomes = Vec::with_capacity(sites.len());
        for &site in sites {
            self.x_transform(&[site])?;
            let stride = n.pow(site as u32);
            let mut probs = vec![0.0f64; n];
            for (idx, a) in self.amps.iter().enumerate() {
                probs[(idx / stride) % n] += a.norm_sqr();
            }
            let total: f64 = probs.iter().sum();
            let mut draw = rng.gen::<f64>() * total;
            let mut picked = n - 1;
            for (d, &p) in probs.iter().enumerate() {
                if draw < p {
                    picked = d;
                    break;
                }
                draw -= p;
            }
            for (idx, a) in self.amps.iter_mut().enumerate() {
                if (idx / stride) % n != picked {
                    *a = Complex64::new(0.0, 0.0);
                }
            }
            self.x_transform_inverse(&[site])?;
            outcomes.push(picked as u32);
        }
        self.normalize()?;
        Ok(outcomes)
    }

    /// Tensor |0…0⟩ ancillas (appended registers) onto the state.
    pub fn with_appended_zero_registers(&self, extra: &RegisterLayout) -> StateVector {
        let layout = self.layout.concat(extra);
        let dim = Self::dim_of(&layout, self.modulus);
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[..self.amps.len()].copy_from_slice(&self.amps);
        StateVector {
            modulus: self.modulus,
            layout,
            amps,
        }
    }

    /// Exact evolution e^{−iHt} by dense eigendecomposition, H given as
    /// weighted Weyl strings (each hermitized per its flag). Oracle only.
    pub fn exact_evolve(
        &self,
        terms: &[(f64, WeylString)],
        t: f64,
    ) -> Result<StateVector, EngineError> {
        let dim = self.dim();
        let h = dense_hamiltonian(terms, self.sites(), self.modulus)?;
        self.evolve_dense_hamiltonian(&h, dim, t)
    }

    /// e^{−iHt}ψ for a dense Hermitian matrix (row-major dim×dim).
    pub fn evolve_dense_hamiltonian(
        &self,
        h: &[Complex64],
        dim: usize,
        t: f64,
    ) -> Result<StateVector, EngineError> {
        const BOUND: usize = 1 << 14;
        if dim > BOUND {
            return Err(EngineError::DimensionBound { dim, bound: BOUND });
        }
        if dim != self.dim() {
            return Err(EngineError::LayoutMismatch(format!(
                "Hamiltonian dim {dim} vs state dim {}",
                self.dim()
            )));
        }
        let mut herm_dev = 0.0f64;
        for r in 0..dim {
            for c in 0..dim {
                herm_dev = herm_dev.max((h[r * dim + c] - h[c * dim + r].conj()).norm());
            }
        }
        if herm_dev > 1e-9 {
            return Err(EngineError::NotHermitian(herm_dev));
        }
        let (evals, evecs) = hermitian_eig(h, dim);
        // ψ' = V e^{−iΛt} V† ψ.
        let mut coeffs = vec![Complex64::new(0.0, 0.0); dim];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..dim {
                acc += evecs[r * dim + k].conj() * self.amps[r];
            }
            let ang = -evals[k] * t;
            *c = acc * Complex64::new(ang.cos(), ang.sin());
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        for (r, a) in amps.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, c) in coeffs.iter().enumerate() {
                acc += evecs[r * dim + k] * c;
            }
            *a = acc;
        }
        Ok(StateVector {
            modulus: self.modulus,
            layout: self.layout.clone(),
            amps,
        })
    }

    /// Write the state as a JSON header line (layout, modulus, norm) plus a
    /// raw little-endian (re, im) f64 blob.
    pub fn save<W: Write>(&self, mut out: W) -> Result<(), EngineError> {
        let header = StateHeader {
            version: 1,
            modulus: self.modulus,
            layout: self.layout.clone(),
            norm: self.norm(),
        };
        let mut line =
            serde_json::to_string(&header).map_err(|e| EngineError::BadStateFile(e.to_string()))?;
        line.push('\n');
        out.write_all(line.as_bytes())?;
        let mut buf = Vec::with_capacity(self.amps.len() * 16);
        for a in &self.amps {
            buf.extend_from_slice(&a.re.to_le_bytes());
            buf.extend_from_slice(&a.im.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<StateVector, EngineError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| EngineError::BadStateFile("missing header line".into()))?;
        let header: StateHeader = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| EngineError::BadStateFile(e.to_string()))?;
        let body = &bytes[nl + 1..];
        let dim = Self::dim_of(&header.layout, header.modulus);
        if body.len() != dim * 16 {
            return Err(EngineError::BadStateFile(format!(
                "amplitude blob has {} bytes, layout needs {}",
                body.len(),
                dim * 16
            )));
        }
        let mut amps = Vec::with_capacity(dim);
        for chunk in body.chunks_exact(16) {
            let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
            let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
            amps.push(Complex64::new(re, im));
        }
        Ok(StateVector {
            modulus: header.modulus,
            layout: header.layout,
            amps,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StateHeader {
    version: u32,
    modulus: u32,
    layout: RegisterLayout,
    norm: f64,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u32, b: u32) -> u32 {
    a / gcd(a, b) * b
}

/// Dense H = Σ w·(P or P + P†) as a row-major matrix.
pub fn dense_hamiltonian(
    terms: &[(f64, WeylString)],
    sites: usize,
    modulus: u32,
) -> Result<Vec<Complex64>, EngineError> {
    let dim = (modulus as usize).pow(sites as u32);
    let mut h = vec![Complex64::new(0.0, 0.0); dim * dim];
    for (w, op) in terms {
        if op.sites() != sites || op.modulus() != modulus {
            return Err(EngineError::LayoutMismatch(
                "Hamiltonian term register mismatch".into(),
            ));
        }
        add_dense_term(&mut h, dim, op, *w);
    }
    Ok(h)
}

fn add_dense_term(h: &mut [Complex64], dim: usize, op: &WeylString, weight: f64) {
    let m = op.to_dense();
    if op.hermitize {
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

/// exp(c·M) for a small row-major matrix via scaling-and-squaring Taylor.
pub fn small_matexp(mat: &[Complex64], dim: usize, c: Complex64) -> Vec<Complex64> {
    let mut scaled: Vec<Complex64> = mat.iter().map(|v| c * v).collect();
    let norm1: f64 = (0..dim)
        .map(|col| (0..dim).map(|r| scaled[r * dim + col].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let factor = 1.0 / (1u64 << squarings) as f64;
    for v in &mut scaled {
        *v *= factor;
    }
    let mut result: Vec<Complex64> = (0..dim * dim)
        .map(|i| {
            if i % (dim + 1) == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let mut term = result.clone();
    for k in 1..=24u32 {
        term = mat_mul_small(&term, &scaled, dim);
        let kf = 1.0 / k as f64;
        for v in &mut term {
            *v *= kf;
        }
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
        }
        if term.iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = mat_mul_small(&result, &result, dim);
    }
    result
}

fn mat_mul_small(a: &[Complex64], b: &[Complex64], dim: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let f = a[i * dim + k];
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += f * b[k * dim + j];
            }
        }
    }
    out
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns (eigenvalues, eigenvectors as columns, row-major).
pub fn hermitian_eig(h: &[Complex64], dim: usize) -> (Vec<f64>, Vec<Complex64>) {
    let mut a = h.to_vec();
    let mut v: Vec<Complex64> = (0..dim * dim)
        .map(|i| {
            if i % (dim + 1) == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let scale: f64 = h.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1e-300);
    for _sweep in 0..120 {
        let mut off = 0.0f64;
        for p in 0..dim {
            for q in (p + 1)..dim {
                off = off.max(a[p * dim + q].norm());
            }
        }
        if off < 1e-15 * scale {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                let abs = apq.norm();
                if abs < 1e-18 * scale {
                    continue;
                }
                let phase = apq / abs;
                let app = a[p * dim + p].re;
                let aqq = a[q * dim + q].re;
                let diff = aqq - app;
                let disc = (diff * diff + 4.0 * abs * abs).sqrt();
                let denom = if diff >= 0.0 {
                    diff + disc
                } else {
                    diff - disc
                };
                let t = -2.0 * abs / denom;
                let cth = 1.0 / (1.0 + t * t).sqrt();
                let sth = t * cth;
                // Column rotation J: col p ← c·p + s·ph̄·q ; col q ← −s·p + c·ph̄·q.
                let s_p = Complex64::new(sth, 0.0) * phase.conj();
                let c_p = Complex64::new(cth, 0.0);
                for r in 0..dim {
                    let arp = a[r * dim + p];
                    let arq = a[r * dim + q];
                    a[r * dim + p] = c_p * arp + s_p * arq;
                    a[r * dim + q] = -sth * arp + cth * (phase.conj() * arq);
                }
                for cidx in 0..dim {
                    let apc = a[p * dim + cidx];
                    let aqc = a[q * dim + cidx];
                    a[p * dim + cidx] = c_p.conj() * apc + s_p.conj() * aqc;
                    a[q * dim + cidx] = -sth * apc + cth * (phase * aqc);
                }
                for r in 0..dim {
                    let vrp = v[r * dim + p];
                    let vrq = v[r * dim + q];
                    v[r * dim + p] = c_p * vrp + s_p * vrq;
                    v[r * dim + q] = -sth * vrp + cth * (phase.conj() * vrq);
                }
            }
        }
    }
    let evals: Vec<f64> = (0..dim).map(|k| a[k * dim + k].re).collect();
    (evals, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weyl::PauliKind;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(layout: RegisterLayout, n: u32, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = StateVector::dim_of(&layout, n);
        let amps: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let mut s = StateVector::from_amplitudes(layout, n, amps).unwrap();
        s.normalize().unwrap();
        s
    }

    fn rand_weyl(rng: &mut ChaCha8Rng, sites: usize, n: u32) -> WeylString {
        let x: Vec<u32> = (0..sites).map(|_| rng.gen_range(0..n)).collect();
        let z: Vec<u32> = (0..sites).map(|_| rng.gen_range(0..n)).collect();
        let mut w = WeylString::from_chain(PauliKind::X, &x, n);
        let zs = WeylString::from_chain(PauliKind::Z, &z, n);
        w = w
            .mul(&zs)
            .unwrap()
            .with_phase(rng.gen_range(0..2 * n) as i64);
        w
    }

    /// Independent dense application for cross-checks.
    fn dense_apply(m: &[Complex64], dim: usize, amps: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for r in 0..dim {
            for c in 0..dim {
                out[r] += m[r * dim + c] * amps[c];
            }
        }
        out
    }

    #[test]
    fn term_exp_examples() {
        // exp(iθZ)|0⟩ = e^{iθ}|0⟩.
        let layout = RegisterLayout::single("r", 1);
        let mut s = StateVector::zero_state(layout.clone(), 2);
        let z = WeylString::z_power(1, 2, 0, 1);
        s.apply_term_exp(&z, 0.7).unwrap();
        let expect = Complex64::new(0.7f64.cos(), 0.7f64.sin());
        assert!((s.amplitudes()[0] - expect).norm() < 1e-14);

        // exp(iθX)|0⟩ = cosθ|0⟩ + i sinθ|1⟩.
        let mut s = StateVector::zero_state(layout, 2);
        let x = WeylString::x_power(1, 2, 0, 1);
        s.apply_term_exp(&x, 0.3).unwrap();
        assert!((s.amplitudes()[0] - Complex64::new(0.3f64.cos(), 0.0)).norm() < 1e-14);
        assert!((s.amplitudes()[1] - Complex64::new(0.0, 0.3f64.sin())).norm() < 1e-14);

        // N = 3, hermitize: exp(iθ(Z+Z†))|s⟩ = e^{2iθ cos(2πs/3)}|s⟩.
        let layout3 = RegisterLayout::single("r", 1);
        for basis in 0..3u32 {
            let mut s = StateVector::basis_state(layout3.clone(), 3, &[basis]);
            let z = WeylString::z_power(1, 3, 0, 1).hermitized();
            let theta = 0.41;
            s.apply_term_exp(&z, theta).unwrap();
            let ang = 2.0 * theta * (2.0 * std::f64::consts::PI * basis as f64 / 3.0).cos();
            let expect = Complex64::new(ang.cos(), ang.sin());
            assert!((s.amplitudes()[basis as usize] - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn non_hermitian_term_rejected() {
        let mut s = StateVector::zero_state(RegisterLayout::single("r", 1), 3);
        let x = WeylString::x_power(1, 3, 0, 1);
        assert!(matches!(
            s.apply_term_exp(&x, 0.5),
            Err(EngineError::NonHermitianTerm)
        ));
    }

    /// apply_term_exp agrees with the dense matrix exponential of the
    /// string on up to 6 sites, for random strings and angles.
    #[test]
    fn term_exp_matches_dense_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [2u32, 3] {
            for _ in 0..60 {
                let sites = rng.gen_range(1..=4usize);
                let dim = (n as usize).pow(sites as u32);
                let layout = RegisterLayout::single("r", sites);
                let mut w = rand_weyl(&mut rng, sites, n);
                if n == 2 && !w.hermitize && rng.gen::<bool>() {
                    // keep a mix of bare Hermitian strings at N = 2
                    if !w.is_hermitian() {
                        w = w.hermitized();
                    }
                } else {
                    w = w.hermitized();
                }
                let theta: f64 = rng.gen_range(-1.5..1.5);
                let s = random_state(layout, n, rng.gen());
                let mut fast = s.clone();
                fast.apply_term_exp(&w, theta).unwrap();
                // Dense oracle: exp(iθ·M) with M = P or P + P†.
                let dimf = dim;
                let mut m = vec![Complex64::new(0.0, 0.0); dimf * dimf];
                add_dense_term(&mut m, dimf, &w, 1.0);
                let em = small_matexp(&m, dimf, Complex64::new(0.0, theta));
                let expect = dense_apply(&em, dimf, s.amplitudes());
                let dist: f64 = fast
                    .amplitudes()
                    .iter()
                    .zip(&expect)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(dist < 1e-12, "dist {dist} sites {sites} N {n}");
            }
        }
    }

    #[test]
    fn controlled_gate_examples() {
        // CX|1,0⟩ = |1,1⟩.
        let layout = RegisterLayout::single("r", 2);
        let mut s = StateVector::basis_state(layout.clone(), 2, &[1, 0]);
        let cx_target = WeylString::x_power(2, 2, 1, 1);
        s.apply_controlled(0, &cx_target).unwrap();
        assert!((s.amplitudes()[3].re - 1.0).abs() < 1e-14);

        // N = 3: CX⁻¹|2, b⟩ = |2, b−2 mod 3⟩.
        let layout3 = RegisterLayout::single("r", 2);
        for b in 0..3u32 {
            let mut s = StateVector::basis_state(layout3.clone(), 3, &[2, b]);
            let inv_target = WeylString::x_power(2, 3, 1, 2); // X^{N−1} = X⁻¹
            s.apply_controlled(0, &inv_target).unwrap();
            let expect = [2, (b + 3 - 2) % 3];
            let idx = digits_index(&expect, 3);
            assert!((s.amplitudes()[idx].re - 1.0).abs() < 1e-14, "b = {b}");
        }

        // Overlapping control rejected.
        let mut s = StateVector::zero_state(RegisterLayout::single("r", 2), 2);
        let overlap = WeylString::x_power(2, 2, 0, 1);
        assert!(matches!(
            s.apply_controlled(0, &overlap),
            Err(EngineError::OverlappingControl(0))
        ));
    }

    #[test]
    fn measure_x_examples() {
        // |−⟩ gives outcome 1 with certainty.
        let layout = RegisterLayout::single("r", 1);
        let amps = vec![
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            Complex64::new(-std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ];
        let mut s = StateVector::from_amplitudes(layout, 2, amps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(s.measure_x(&[0], &mut rng).unwrap(), vec![1]);

        // |+⟩^{⊗n} gives all outcomes 0.
        let layout = RegisterLayout::single("r", 4);
        let mut s = StateVector::plus_state(layout, 2);
        let outs = s.measure_x(&[0, 1, 2, 3], &mut rng).unwrap();
        assert_eq!(outs, vec![0, 0, 0, 0]);
    }

    /// Sampling a Π X symmetric state in the X basis always returns
    /// outcomes with even parity.
    #[test]
    fn symmetric_state_measurements_have_even_parity() {
        let layout = RegisterLayout::single("r", 6);
        let mut s = random_state(layout, 2, 55);
        // Symmetrize: ψ ← (1 + ΠX)ψ / norm.
        let flip = WeylString::from_chain(PauliKind::X, &[1; 6], 2);
        let mut flipped = s.clone();
        flipped.apply_weyl(&flip).unwrap();
        for (a, b) in s.amplitudes_mut().iter_mut().zip(flipped.amplitudes()) {
            *a += b;
        }
        s.normalize().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        for _ in 0..1000 {
            let mut copy = s.clone();
            let outs = copy.measure_x(&[0, 1, 2, 3, 4, 5], &mut rng).unwrap();
            assert_eq!(outs.iter().sum::<u32>() % 2, 0, "odd parity sampled");
        }
    }

    /// Measurement statistics match branch probabilities within 5σ over
    /// 10^4 seeded samples.
    #[test]
    fn measurement_statistics() {
        let layout = RegisterLayout::single("r", 3);
        let s = random_state(layout, 2, 99);
        // Branch probabilities from projection.
        let mut probs = [0.0f64; 8];
        for b in 0..8u32 {
            let outs = [b & 1, (b >> 1) & 1, (b >> 2) & 1];
            let branch = s.project_x(&[0, 1, 2], &outs).unwrap();
            probs[b as usize] = branch.norm_sqr();
        }
        let shots = 10_000usize;
        let mut counts = [0usize; 8];
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..shots {
            let mut copy = s.clone();
            let o = copy.measure_x(&[0, 1, 2], &mut rng).unwrap();
            counts[(o[0] + 2 * o[1] + 4 * o[2]) as usize] += 1;
        }
        for b in 0..8 {
            let p = probs[b];
            let sigma = (p * (1.0 - p) / shots as f64).sqrt().max(1e-9);
            let freq = counts[b] as f64 / shots as f64;
            assert!(
                (freq - p).abs() < 5.0 * sigma + 1e-9,
                "branch {b}: freq {freq} vs p {p}"
            );
        }
    }

    #[test]
    fn projection_completeness_and_scalar_branch() {
        // Projecting |+⟩ onto outcome 0 leaves weight 1; squared branch
        // norms over all outcomes add to the input squared norm.
        let layout = RegisterLayout::single("r", 1);
        let plus = StateVector::plus_state(layout, 2);
        let b0 = plus.project_x(&[0], &[0]).unwrap();
        assert!((b0.norm_sqr() - 1.0).abs() < 1e-13);
        let b1 = plus.project_x(&[0], &[1]).unwrap();
        assert!(b1.norm_sqr() < 1e-26);

        let layout = RegisterLayout::new(vec![("a", 2), ("b", 2)]);
        let s = random_state(layout, 2, 5);
        let mut total = 0.0;
        for o0 in 0..2u32 {
            for o1 in 0..2u32 {
                total += s.project_x(&[0, 1], &[o0, o1]).unwrap().norm_sqr();
            }
        }
        assert!((total - s.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn split_leading_register_matches_project() {
        let layout = RegisterLayout::new(vec![("m", 2), ("d", 3)]);
        let s = random_state(layout, 2, 17);
        let branches = s.split_leading_register_x(2).unwrap();
        assert_eq!(branches.len(), 4);
        for (b, branch) in branches.iter().enumerate() {
            let outs = [(b & 1) as u32, ((b >> 1) & 1) as u32];
            let expect = s.project_x(&[0, 1], &outs).unwrap();
            assert!(branch.distance(&expect) < 1e-13);
            assert_eq!(branch.layout().registers()[0].0, "d");
        }
    }

    /// Norm drift below 1e−12 over 10^3 random gate applications.
    #[test]
    fn unitarity_norm_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layout = RegisterLayout::single("r", 6);
        let mut s = random_state(layout, 2, 3);
        for _ in 0..1000 {
            let mut w = rand_weyl(&mut rng, 6, 2);
            if !w.is_hermitian() {
                w = w.hermitized();
            }
            s.apply_term_exp(&w, rng.gen_range(-1.0..1.0)).unwrap();
        }
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_evolve_identity_and_single_term() {
        let layout = RegisterLayout::single("r", 2);
        let s = random_state(layout, 2, 31);
        // H = 0 is the identity.
        let out = s.exact_evolve(&[], 0.9).unwrap();
        assert!(s.distance(&out) < 1e-13);
        // H = −Z matches apply_term_exp with θ = t.
        let z = WeylString::z_power(2, 2, 0, 1);
        let out = s.exact_evolve(&[(-1.0, z.clone())], 0.8).unwrap();
        let mut direct = s.clone();
        direct.apply_term_exp(&z, 0.8).unwrap();
        assert!(out.distance(&direct) < 1e-12);
    }

    #[test]
    fn hermitian_eig_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for dim in [2usize, 3, 5, 8, 16] {
            let mut h = vec![Complex64::new(0.0, 0.0); dim * dim];
            for r in 0..dim {
                h[r * dim + r] = Complex64::new(rng.gen::<f64>() - 0.5, 0.0);
                for c in (r + 1)..dim {
                    let v = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                    h[r * dim + c] = v;
                    h[c * dim + r] = v.conj();
                }
            }
            let (evals, v) = hermitian_eig(&h, dim);
            // ‖VΛV† − H‖_max
            let mut dev = 0.0f64;
            for r in 0..dim {
                for c in 0..dim {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..dim {
                        acc += v[r * dim + k] * evals[k] * v[c * dim + k].conj();
                    }
                    dev = dev.max((acc - h[r * dim + c]).norm());
                }
            }
            assert!(dev < 1e-12, "dim {dim}: reconstruction dev {dev}");
        }
    }

    #[test]
    fn imaginary_time_projects_to_ground_state() {
        // Single −Z term: large τ on |+⟩ converges to |0⟩.
        let layout = RegisterLayout::single("r", 1);
        let mut s = StateVector::plus_state(layout, 2);
        let z = WeylString::z_power(1, 2, 0, 1);
        // exp(τZ) amplifies the Z = +1 state |0⟩ (H = −Z).
        s.apply_term_exp_imaginary(&z, 8.0).unwrap();
        s.normalize().unwrap();
        assert!((s.amplitudes()[0].norm() - 1.0).abs() < 1e-6);
        assert!(s.amplitudes()[1].norm() < 1e-6);
    }

    #[test]
    fn save_load_roundtrip() {
        let layout = RegisterLayout::new(vec![("a", 2), ("b", 1)]);
        let s = random_state(layout, 3, 8);
        let mut buf = Vec::new();
        s.save(&mut buf).unwrap();
        let loaded = StateVector::load(&buf[..]).unwrap();
        assert_eq!(loaded.layout(), s.layout());
        assert_eq!(loaded.modulus(), s.modulus());
        assert!(loaded.distance(&s) < 1e-15);
    }
}
