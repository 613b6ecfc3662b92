//! Generalized Pauli (Weyl) strings over qudits of dimension N, and the
//! Jordan-Wigner encoding of Majorana bilinears.
//!
//! A string is ω_{2N}^φ · Π_j X_j^{x_j} Z_j^{z_j} with ω_{2N} = e^{iπ/N},
//! X|a⟩ = |a+1⟩ and Z|a⟩ = ω^a|a⟩ for ω = ω_{2N}² = e^{2πi/N}. Keeping the
//! global phase as an exponent of the 2N-th root of unity makes factors
//! like −i (at N = 2) exact integers rather than floats.
//!
//! The commutation rule ZX = ωXZ fixes all phase bookkeeping:
//! (X^x Z^z)(X^{x'} Z^{z'}) = ω^{z·x'} X^{x+x'} Z^{z+z'}.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeylError {
    #[error("strings act on different registers ({0} vs {1} sites)")]
    RegisterMismatch(usize, usize),
    #[error("string moduli differ ({0} vs {1})")]
    ModulusMismatch(u32, u32),
    #[error("chain length {got} does not match register size {expected}")]
    ChainRegisterMismatch { got: usize, expected: usize },
    #[error("site {0} out of range for {1}-site register")]
    SiteOutOfRange(usize, usize),
}

/// Which single-qudit operator a chain is lifted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliKind {
    X,
    Z,
}

/// A generalized Pauli string with exact phase tracking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeylString {
    modulus: u32,
    /// Per-site X exponents mod N.
    x: Vec<u32>,
    /// Per-site Z exponents mod N.
    z: Vec<u32>,
    /// Global phase exponent of ω_{2N} = e^{iπ/N}, mod 2N.
    phase: u32,
    /// When set, term exponentials use P + P† instead of P.
    pub hermitize: bool,
}

impl WeylString {
    pub fn identity(sites: usize, modulus: u32) -> Self {
        WeylString {
            modulus,
            x: vec![0; sites],
            z: vec![0; sites],
            phase: 0,
            hermitize: false,
        }
    }

    /// Single X^k on one site.
    pub fn x_power(sites: usize, modulus: u32, site: usize, k: u32) -> Self {
        let mut w = Self::identity(sites, modulus);
        w.x[site] = k % modulus;
        w
    }

    /// Single Z^k on one site.
    pub fn z_power(sites: usize, modulus: u32, site: usize, k: u32) -> Self {
        let mut w = Self::identity(sites, modulus);
        w.z[site] = k % modulus;
        w
    }

    /// Lift a chain's coefficient vector to A(c) = Π_σ A_σ^{a(c;σ)} on a
    /// register of matching size; the global phase is zero.
    pub fn from_chain(kind: PauliKind, coeffs: &[u32], modulus: u32) -> Self {
        let reduced: Vec<u32> = coeffs.iter().map(|&a| a % modulus).collect();
        let zero = vec![0; coeffs.len()];
        let (x, z) = match kind {
            PauliKind::X => (reduced, zero),
            PauliKind::Z => (zero, reduced),
        };
        WeylString {
            modulus,
            x,
            z,
            phase: 0,
            hermitize: false,
        }
    }

    /// Like [`WeylString::from_chain`] but placed on the register starting
    /// at `offset` within a `total`-site layout. Errors when the chain does
    /// not fit the register.
    pub fn from_chain_embedded(
        kind: PauliKind,
        coeffs: &[u32],
        modulus: u32,
        offset: usize,
        register_sites: usize,
        total: usize,
    ) -> Result<Self, WeylError> {
        if coeffs.len() != register_sites {
            return Err(WeylError::ChainRegisterMismatch {
                got: coeffs.len(),
                expected: register_sites,
            });
        }
        Ok(Self::from_chain(kind, coeffs, modulus).embedded(offset, total))
    }

    /// Re-site the string into a larger register at the given offset.
    pub fn embedded(&self, offset: usize, total: usize) -> Self {
        let mut x = vec![0; total];
        let mut z = vec![0; total];
        x[offset..offset + self.sites()].copy_from_slice(&self.x);
        z[offset..offset + self.sites()].copy_from_slice(&self.z);
        WeylString {
            modulus: self.modulus,
            x,
            z,
            phase: self.phase,
            hermitize: self.hermitize,
        }
    }

    pub fn sites(&self) -> usize {
        self.x.len()
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn x_exponents(&self) -> &[u32] {
        &self.x
    }

    pub fn z_exponents(&self) -> &[u32] {
        &self.z
    }

    /// Global phase exponent of ω_{2N}, in [0, 2N).
    pub fn phase_exponent(&self) -> u32 {
        self.phase
    }

    pub fn hermitized(mut self) -> Self {
        self.hermitize = true;
        self
    }

    /// Multiply the global phase by ω_{2N}^k.
    pub fn with_phase(mut self, k: i64) -> Self {
        let m = 2 * self.modulus as i64;
        self.phase = ((self.phase as i64 + k).rem_euclid(m)) as u32;
        self
    }

    pub fn is_identity(&self) -> bool {
        self.phase == 0 && self.x.iter().all(|&e| e == 0) && self.z.iter().all(|&e| e == 0)
    }

    /// Sites with nonzero X or Z content.
    pub fn support(&self) -> Vec<usize> {
        (0..self.sites())
            .filter(|&j| self.x[j] != 0 || self.z[j] != 0)
            .collect()
    }

    fn check_compatible(&self, other: &WeylString) -> Result<(), WeylError> {
        if self.sites() != other.sites() {
            return Err(WeylError::RegisterMismatch(self.sites(), other.sites()));
        }
        if self.modulus != other.modulus {
            return Err(WeylError::ModulusMismatch(self.modulus, other.modulus));
        }
        Ok(())
    }

    /// The product self·other, with the phase updated by ZX = ωXZ.
    pub fn mul(&self, other: &WeylString) -> Result<WeylString, WeylError> {
        self.check_compatible(other)?;
        let n = self.modulus;
        let mut crossing = 0u64;
        for j in 0..self.sites() {
            crossing += (self.z[j] as u64) * (other.x[j] as u64);
        }
        let phase =
            ((self.phase as u64 + other.phase as u64 + 2 * crossing) % (2 * n as u64)) as u32;
        let x = self
            .x
            .iter()
            .zip(&other.x)
            .map(|(&a, &b)| (a + b) % n)
            .collect();
        let z = self
            .z
            .iter()
            .zip(&other.z)
            .map(|(&a, &b)| (a + b) % n)
            .collect();
        Ok(WeylString {
            modulus: n,
            x,
            z,
            phase,
            hermitize: false,
        })
    }

    /// Hermitian adjoint (equals the inverse; Weyl strings are unitary).
    pub fn dagger(&self) -> WeylString {
        let n = self.modulus;
        let mut zx = 0u64;
        for j in 0..self.sites() {
            zx += (self.z[j] as u64) * (self.x[j] as u64);
        }
        let m = 2 * n as u64;
        let phase = ((m - self.phase as u64 % m) % m + 2 * zx % m) % m;
        WeylString {
            modulus: n,
            x: self.x.iter().map(|&a| (n - a) % n).collect(),
            z: self.z.iter().map(|&a| (n - a) % n).collect(),
            phase: phase as u32,
            hermitize: false,
        }
    }

    pub fn inverse(&self) -> WeylString {
        self.dagger()
    }

    /// k-th power (k ≥ 0), by repeated multiplication.
    pub fn pow(&self, k: u32) -> WeylString {
        let mut out = WeylString::identity(self.sites(), self.modulus);
        for _ in 0..k {
            out = out.mul(self).expect("same register");
        }
        out
    }

    /// The exponent k with PQ = ω^k QP.
    pub fn commutation_phase(&self, other: &WeylString) -> Result<u32, WeylError> {
        self.check_compatible(other)?;
        let n = self.modulus as i64;
        let mut k = 0i64;
        for j in 0..self.sites() {
            k += self.z[j] as i64 * other.x[j] as i64 - self.x[j] as i64 * other.z[j] as i64;
        }
        Ok(k.rem_euclid(n) as u32)
    }

    pub fn commutes_with(&self, other: &WeylString) -> Result<bool, WeylError> {
        Ok(self.commutation_phase(other)? == 0)
    }

    /// Structural Hermiticity test: P† == P after reduction.
    pub fn is_hermitian(&self) -> bool {
        let d = self.dagger();
        d.x == self.x && d.z == self.z && d.phase == self.phase
    }

    /// Phase exponent (of ω_{2N}) picked up when acting on the basis state
    /// with digits `a`: W|a⟩ = ω_{2N}^{phase_on(a)} |a + x⟩.
    pub fn phase_on(&self, digits: &[u32]) -> u32 {
        let n = self.modulus as u64;
        let mut za = 0u64;
        for (zj, aj) in self.z.iter().zip(digits) {
            za += *zj as u64 * *aj as u64;
        }
        ((self.phase as u64 + 2 * za) % (2 * n)) as u32
    }

    /// The complex value of ω_{2N}^k for this string's modulus.
    pub fn root_phase(&self, k: u32) -> Complex64 {
        omega_2n(self.modulus, k)
    }

    /// Dense matrix (row-major, dim = N^sites). Intended for small oracles
    /// and tests.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let n = self.modulus;
        let dim = (n as usize).pow(self.sites() as u32);
        let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
        let mut digits = vec![0u32; self.sites()];
        for col in 0..dim {
            index_digits(col, n, &mut digits);
            let ph = omega_2n(n, self.phase_on(&digits));
            let mut row = 0usize;
            let mut stride = 1usize;
            for (j, &d) in digits.iter().enumerate() {
                row += stride * (((d + self.x[j]) % n) as usize);
                stride *= n as usize;
            }
            m[row * dim + col] = ph;
        }
        m
    }
}

/// ω_{2N}^k = e^{iπk/N}.
pub fn omega_2n(modulus: u32, k: u32) -> Complex64 {
    let angle = std::f64::consts::PI * (k as f64) / (modulus as f64);
    Complex64::new(angle.cos(), angle.sin())
}

/// Little-endian base-N digits of `index`.
pub fn index_digits(index: usize, modulus: u32, out: &mut [u32]) {
    let n = modulus as usize;
    let mut rem = index;
    for d in out.iter_mut() {
        *d = (rem % n) as u32;
        rem /= n;
    }
}

/// Pack little-endian base-N digits into an index.
pub fn digits_index(digits: &[u32], modulus: u32) -> usize {
    let n = modulus as usize;
    let mut idx = 0usize;
    let mut stride = 1usize;
    for &d in digits {
        idx += stride * d as usize;
        stride *= n;
    }
    idx
}

/// Ordered fermion modes on the dual vertices of a 1D cycle.
///
/// Mode `m` sits on dual vertex v*_m (the midpoint of primal edge m); the
/// Jordan-Wigner strings run in increasing mode order. The hopping on dual
/// edge k couples modes {k−1 mod L, k}, so hopping 0 is the seam that wraps
/// the order and carries the boundary sign q.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FermionLayout {
    modes: usize,
    q: i8,
}

/// Fermion-bilinear operators mapped by [`jw_encode`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bilinear {
    /// S_{e*} = −i χ'_{v*_−} χ_{v*_+} on dual edge e*, with
    /// ∂*e*_k = v*_k − v*_{k−1}.
    Hopping(usize),
    /// P_{v*} = i χ'_{v*} χ_{v*} = 1 − 2c†c on dual vertex v*.
    Parity(usize),
}

impl FermionLayout {
    pub fn new(modes: usize, q: i8) -> Self {
        assert!(q == 1 || q == -1, "boundary sign must be ±1");
        FermionLayout { modes, q }
    }

    /// Antiperiodic boundary condition (q = −1); the choice used by every
    /// shipped pipeline, which works in the even fermion-parity sector.
    pub fn antiperiodic(modes: usize) -> Self {
        Self::new(modes, -1)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn q(&self) -> i8 {
        self.q
    }

    /// The ±1 factor q^{δ_{e*, seam}} attached to hoppings across the seam.
    pub fn boundary_sign(&self, edge: usize) -> i8 {
        if edge == 0 {
            self.q
        } else {
            1
        }
    }

    /// Majorana χ_m = Z_0 … Z_{m−1} X_m as a qubit string.
    pub fn chi(&self, mode: usize) -> WeylString {
        let mut w = WeylString::identity(self.modes, 2);
        w.x[mode] = 1;
        for j in 0..mode {
            w.z[j] = 1;
        }
        w
    }

    /// Majorana χ'_m = Z_0 … Z_{m−1} Y_m (Y = iXZ).
    pub fn chi_prime(&self, mode: usize) -> WeylString {
        let mut w = self.chi(mode);
        w.z[mode] = 1;
        w.phase = 1;
        w
    }
}

/// Encode a fermion bilinear as a qubit operator under the layout's
/// Jordan-Wigner order. Hoppings come back bare (no boundary sign): the
/// interior ones are two-local X_{k−1}X_k, the seam is Y Z … Z Y.
pub fn jw_encode(layout: &FermionLayout, bilinear: Bilinear) -> Result<WeylString, WeylError> {
    match bilinear {
        Bilinear::Parity(mode) => {
            if mode >= layout.modes {
                return Err(WeylError::SiteOutOfRange(mode, layout.modes));
            }
            // i χ' χ = Z, exact from the Majorana strings.
            let p = layout.chi_prime(mode).mul(&layout.chi(mode))?.with_phase(1);
            Ok(p)
        }
        Bilinear::Hopping(edge) => {
            if edge >= layout.modes {
                return Err(WeylError::SiteOutOfRange(edge, layout.modes));
            }
            let minus = (edge + layout.modes - 1) % layout.modes;
            let plus = edge;
            // S = −i χ'_{v*_−} χ_{v*_+}.
            let s = layout
                .chi_prime(minus)
                .mul(&layout.chi(plus))?
                .with_phase(-1);
            Ok(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    /// Independent dense construction: explicit X and Z matrices combined
    /// by Kronecker products, never touching `to_dense`.
    fn kron_oracle(x: &[u32], z: &[u32], phase: u32, n: u32) -> Vec<Complex64> {
        let nn = n as usize;
        let single = |xe: u32, ze: u32| -> Vec<Complex64> {
            // X^xe Z^ze: |a⟩ → ω^{ze·a} |a+xe⟩
            let mut m = vec![Complex64::new(0.0, 0.0); nn * nn];
            for a in 0..nn {
                let ph = 2.0 * std::f64::consts::PI * (ze as f64) * (a as f64) / (n as f64);
                let row = (a + xe as usize) % nn;
                m[row * nn + a] = Complex64::new(ph.cos(), ph.sin());
            }
            m
        };
        // Site 0 is the least-significant digit: full = M_{last} ⊗ … ⊗ M_0.
        let mut full = vec![Complex64::new(1.0, 0.0)];
        let mut dim = 1usize;
        for j in 0..x.len() {
            let m = single(x[j], z[j]);
            let mut next = vec![Complex64::new(0.0, 0.0); (dim * nn) * (dim * nn)];
            for br in 0..nn {
                for bc in 0..nn {
                    let f = m[br * nn + bc];
                    if f.norm_sqr() == 0.0 {
                        continue;
                    }
                    for r in 0..dim {
                        for c in 0..dim {
                            next[(br * dim + r) * (dim * nn) + (bc * dim + c)] =
                                f * full[r * dim + c];
                        }
                    }
                }
            }
            full = next;
            dim *= nn;
        }
        let ang = std::f64::consts::PI * phase as f64 / n as f64;
        let ph = Complex64::new(ang.cos(), ang.sin());
        full.iter().map(|v| ph * v).collect()
    }

    fn matrices_close(a: &[Complex64], b: &[Complex64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).norm() < TOL)
    }

    fn mat_mul(a: &[Complex64], b: &[Complex64], dim: usize) -> Vec<Complex64> {
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

    #[test]
    fn dense_matches_kron_exhaustive_small_strings() {
        for n in [2u32, 3] {
            // All single-site strings on up to 6 sites.
            for sites in 1..=6usize {
                for site in 0..sites {
                    for xe in 0..n {
                        for ze in 0..n {
                            let mut w = WeylString::identity(sites, n);
                            w.x[site] = xe;
                            w.z[site] = ze;
                            let oracle = kron_oracle(&w.x, &w.z, 0, n);
                            assert!(matrices_close(&w.to_dense(), &oracle));
                        }
                    }
                }
            }
            // All two-site strings on 2 sites, with every global phase.
            for x0 in 0..n {
                for z0 in 0..n {
                    for x1 in 0..n {
                        for z1 in 0..n {
                            for phase in 0..2 * n {
                                let w = WeylString {
                                    modulus: n,
                                    x: vec![x0, x1],
                                    z: vec![z0, z1],
                                    phase,
                                    hermitize: false,
                                };
                                let oracle = kron_oracle(&w.x, &w.z, phase, n);
                                assert!(matrices_close(&w.to_dense(), &oracle));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn product_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2u32, 3] {
            for _ in 0..200 {
                let sites = rng.gen_range(1..=4usize);
                let rand_string = |rng: &mut ChaCha8Rng| WeylString {
                    modulus: n,
                    x: (0..sites).map(|_| rng.gen_range(0..n)).collect(),
                    z: (0..sites).map(|_| rng.gen_range(0..n)).collect(),
                    phase: rng.gen_range(0..2 * n),
                    hermitize: false,
                };
                let p = rand_string(&mut rng);
                let q = rand_string(&mut rng);
                let dim = (n as usize).pow(sites as u32);
                let dense = mat_mul(&p.to_dense(), &q.to_dense(), dim);
                assert!(matrices_close(&p.mul(&q).unwrap().to_dense(), &dense));
            }
        }
    }

    /// Algebra closure: multiplying by the inverse recovers the original
    /// string including phase, for 10^4 random pairs at N ∈ {2, 3}.
    #[test]
    fn closure_under_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2u32, 3] {
            for _ in 0..10_000 {
                let sites = rng.gen_range(1..=6usize);
                let rand_string = |rng: &mut ChaCha8Rng| WeylString {
                    modulus: n,
                    x: (0..sites).map(|_| rng.gen_range(0..n)).collect(),
                    z: (0..sites).map(|_| rng.gen_range(0..n)).collect(),
                    phase: rng.gen_range(0..2 * n),
                    hermitize: false,
                };
                let p = rand_string(&mut rng);
                let q = rand_string(&mut rng);
                let recovered = p.mul(&q).unwrap().mul(&q.inverse()).unwrap();
                assert_eq!(recovered.x, p.x);
                assert_eq!(recovered.z, p.z);
                assert_eq!(recovered.phase, p.phase);
            }
        }
    }

    #[test]
    fn commutation_phase_examples() {
        // Single overlapping site, N = 2: XZ = −ZX, exponent 1.
        let x = WeylString::x_power(3, 2, 1, 1);
        let z = WeylString::z_power(3, 2, 1, 1);
        assert_eq!(x.commutation_phase(&z).unwrap(), 1);
        // Disjoint supports commute.
        let z2 = WeylString::z_power(3, 2, 2, 1);
        assert_eq!(x.commutation_phase(&z2).unwrap(), 0);
        // The exponent matches the dense matrices: PQ = ω^k QP.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [2u32, 3] {
            for _ in 0..100 {
                let sites = 3usize;
                let rand_string = |rng: &mut ChaCha8Rng| WeylString {
                    modulus: n,
                    x: (0..sites).map(|_| rng.gen_range(0..n)).collect(),
                    z: (0..sites).map(|_| rng.gen_range(0..n)).collect(),
                    phase: rng.gen_range(0..2 * n),
                    hermitize: false,
                };
                let p = rand_string(&mut rng);
                let q = rand_string(&mut rng);
                let k = p.commutation_phase(&q).unwrap();
                let dim = (n as usize).pow(sites as u32);
                let pq = mat_mul(&p.to_dense(), &q.to_dense(), dim);
                let qp = mat_mul(&q.to_dense(), &p.to_dense(), dim);
                let ph = omega_2n(n, (2 * k) % (2 * n));
                let scaled: Vec<Complex64> = qp.iter().map(|v| ph * v).collect();
                assert!(matrices_close(&pq, &scaled));
            }
        }
    }

    #[test]
    fn from_chain_examples() {
        // Z on the zero chain is the identity.
        let w = WeylString::from_chain(PauliKind::Z, &[0, 0, 0], 2);
        assert!(w.is_identity());
        // X on a single edge.
        let w = WeylString::from_chain(PauliKind::X, &[0, 1, 0], 2);
        assert_eq!(w.x_exponents(), &[0, 1, 0]);
        assert_eq!(w.z_exponents(), &[0, 0, 0]);
        // N = 3 chain with a coefficient 2 lifts to Z².
        let w = WeylString::from_chain(PauliKind::Z, &[1, 2], 3);
        assert_eq!(w.z_exponents(), &[1, 2]);
    }

    #[test]
    fn hermiticity_detection() {
        // X, Z, Y are Hermitian at N = 2; XZ (phase 0) is not.
        assert!(WeylString::x_power(2, 2, 0, 1).is_hermitian());
        assert!(WeylString::z_power(2, 2, 1, 1).is_hermitian());
        let y = WeylString {
            modulus: 2,
            x: vec![1],
            z: vec![1],
            phase: 1,
            hermitize: false,
        };
        assert!(y.is_hermitian());
        let xz = WeylString {
            modulus: 2,
            x: vec![1],
            z: vec![1],
            phase: 0,
            hermitize: false,
        };
        assert!(!xz.is_hermitian());
        // Bare X at N = 3 is not Hermitian.
        assert!(!WeylString::x_power(1, 3, 0, 1).is_hermitian());
    }

    /// Dense Majorana oracle: χ and χ' built by explicit Kronecker products
    /// of Z…Z X and Z…Z Y matrices.
    fn majorana_dense(layout: &FermionLayout, mode: usize, primed: bool) -> Vec<Complex64> {
        let l = layout.modes();
        let x: Vec<u32> = (0..l).map(|j| u32::from(j == mode)).collect();
        let z: Vec<u32> = (0..l)
            .map(|j| u32::from(j < mode || (primed && j == mode)))
            .collect();
        let phase = u32::from(primed); // Y = iXZ
        kron_oracle(&x, &z, phase, 2)
    }

    #[test]
    fn majorana_algebra_dense() {
        for l in 2..=4usize {
            let layout = FermionLayout::antiperiodic(l);
            let dim = 1usize << l;
            let id: Vec<Complex64> = (0..dim * dim)
                .map(|i| {
                    if i % (dim + 1) == 0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            let zeros = vec![Complex64::new(0.0, 0.0); dim * dim];
            let all: Vec<Vec<Complex64>> = (0..l)
                .flat_map(|m| {
                    vec![
                        majorana_dense(&layout, m, false),
                        majorana_dense(&layout, m, true),
                    ]
                })
                .collect();
            for (i, a) in all.iter().enumerate() {
                for (j, b) in all.iter().enumerate() {
                    let mut anti = mat_mul(a, b, dim);
                    let ba = mat_mul(b, a, dim);
                    for (p, q) in anti.iter_mut().zip(&ba) {
                        *p += q;
                    }
                    if i == j {
                        let two_id: Vec<Complex64> = id.iter().map(|v| 2.0 * v).collect();
                        assert!(matrices_close(&anti, &two_id), "{{γ,γ}} ≠ 2 at {i}");
                    } else {
                        assert!(matrices_close(&anti, &zeros), "γ_{i} and γ_{j} anticommute");
                    }
                }
            }
        }
    }

    #[test]
    fn jw_encode_matches_majorana_oracle() {
        let l = 4usize;
        let layout = FermionLayout::antiperiodic(l);
        let dim = 1usize << l;

        // P_{v*} is Z on the mode qubit.
        for m in 0..l {
            let p = jw_encode(&layout, Bilinear::Parity(m)).unwrap();
            assert_eq!(p, WeylString::z_power(l, 2, m, 1));
            // Oracle: i χ' χ.
            let oracle = mat_mul(
                &majorana_dense(&layout, m, true),
                &majorana_dense(&layout, m, false),
                dim,
            )
            .iter()
            .map(|v| Complex64::new(0.0, 1.0) * v)
            .collect::<Vec<_>>();
            assert!(matrices_close(&p.to_dense(), &oracle));
        }

        // Interior hoppings are X_{k−1} X_k with phase +1; the oracle is
        // −i χ'_{k−1} χ_k.
        for k in 1..l {
            let s = jw_encode(&layout, Bilinear::Hopping(k)).unwrap();
            let mut expect = WeylString::identity(l, 2);
            expect.x[k - 1] = 1;
            expect.x[k] = 1;
            assert_eq!(s, expect, "interior hopping {k}");
            let oracle = mat_mul(
                &majorana_dense(&layout, k - 1, true),
                &majorana_dense(&layout, k, false),
                dim,
            )
            .iter()
            .map(|v| Complex64::new(0.0, -1.0) * v)
            .collect::<Vec<_>>();
            assert!(matrices_close(&s.to_dense(), &oracle));
        }

        // The seam hopping: −i χ'_{L−1} χ_0 = Y Z … Z Y, so with the
        // antiperiodic boundary sign the Hamiltonian term is −(Y Z … Z Y).
        let s = jw_encode(&layout, Bilinear::Hopping(0)).unwrap();
        let oracle = mat_mul(
            &majorana_dense(&layout, l - 1, true),
            &majorana_dense(&layout, 0, false),
            dim,
        )
        .iter()
        .map(|v| Complex64::new(0.0, -1.0) * v)
        .collect::<Vec<_>>();
        assert!(matrices_close(&s.to_dense(), &oracle));
        let yzzy = WeylString {
            modulus: 2,
            x: vec![1, 0, 0, 1],
            z: vec![1, 1, 1, 1],
            phase: 2, // (iXZ) ⊗ Z ⊗ Z ⊗ (iXZ) = −(XZ ⊗ Z ⊗ Z ⊗ XZ)
            hermitize: false,
        };
        assert_eq!(s, yzzy);
        assert_eq!(layout.boundary_sign(0), -1);
        assert_eq!(layout.boundary_sign(1), 1);

        // Out-of-range sites are rejected.
        assert!(jw_encode(&layout, Bilinear::Parity(l)).is_err());
        assert!(jw_encode(&layout, Bilinear::Hopping(l)).is_err());
    }

    #[test]
    fn hoppings_and_parities_are_hermitian_and_commute_with_gauss_pattern() {
        // Every S_{e*} X_{e*} commutes with every G_{v*} = Z_{e*} P_{v*} Z_{e'*}
        // on the combined gauge+fermion register (gauge sites first).
        let l = 4usize;
        let layout = FermionLayout::antiperiodic(l);
        let total = 2 * l;
        for k in 0..l {
            let s = jw_encode(&layout, Bilinear::Hopping(k)).unwrap();
            assert!(s.is_hermitian(), "hopping {k} must be Hermitian");
            let term = s
                .embedded(l, total)
                .mul(&WeylString::x_power(total, 2, k, 1))
                .unwrap();
            for v in 0..l {
                // G_{v*}: v* = dual vertex v sits between primal vertices v and v+1.
                let p = jw_encode(&layout, Bilinear::Parity(v))
                    .unwrap()
                    .embedded(l, total);
                let g = WeylString::z_power(total, 2, v, 1)
                    .mul(&p)
                    .unwrap()
                    .mul(&WeylString::z_power(total, 2, (v + 1) % l, 1))
                    .unwrap();
                assert!(term.commutes_with(&g).unwrap(), "hopping {k} vs Gauss {v}");
            }
        }
    }
}
