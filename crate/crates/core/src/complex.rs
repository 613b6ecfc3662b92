//! Cell complexes on periodic lattices with ℤ_N chain algebra.
//!
//! Three lattice families are supported: the 1D cycle, the square torus and
//! the triangular torus (square torus with every face cut along one fixed
//! diagonal). Cells carry an orientation so that boundary (∂) and dual
//! boundary (∂*) tables have signed entries in {−1, 0, +1}; for N = 2 the
//! signs reduce away mod 2.
//!
//! Conventions for the square torus (they make the duality relation
//! #(∂c ∩ c*) = #(c ∩ ∂*c*) hold with a plus sign in every grade):
//!
//! * primal x-edges point towards −x̂, primal y-edges towards +ŷ,
//! * dual edges are the primal edges rotated by +90°, i.e. they point
//!   towards +x̂ or +ŷ,
//! * dual plaquettes are traversed counterclockwise, primal plaquettes
//!   clockwise.
//!
//! Dual i-cells are identified with primal (d−i)-cells and share their
//! indices, so a dual chain of grade i is stored as a coefficient vector
//! over primal (d−i)-cells.

use thiserror::Error;

/// Supported periodic lattice families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LatticeKind {
    /// 1D periodic chain of `L` vertices and `L` edges.
    Cycle,
    /// 2D periodic square lattice.
    SquareTorus,
    /// Square torus with each face split along the (x, y) → (x+1, y+1)
    /// diagonal. Every vertex has degree 6. Restricted to N = 2.
    TriangularTorus,
}

impl std::fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LatticeKind::Cycle => write!(f, "cycle"),
            LatticeKind::SquareTorus => write!(f, "square-torus"),
            LatticeKind::TriangularTorus => write!(f, "triangular-torus"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("unsupported lattice/modulus combination: {0}")]
    Unsupported(String),
    #[error("lattice extent must be at least 2, got {0}")]
    ExtentTooSmall(usize),
    #[error("expected {expected} extents for {kind}, got {got}")]
    BadExtents {
        kind: LatticeKind,
        expected: usize,
        got: usize,
    },
    #[error("chain grade {0} out of range for this operation")]
    GradeOutOfRange(usize),
    #[error("chains have mismatched grade or duality")]
    GradeMismatch,
    #[error("chain modulus {chain} does not match complex modulus {complex}")]
    ModulusMismatch { chain: u32, complex: u32 },
    #[error("chain length {got} does not match cell count {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("isolated magnetic monopole: measurement outcomes are not charge neutral")]
    IsolatedMonopole,
}

/// A formal ℤ_N-linear combination of the i-cells of a [`CellComplex`].
///
/// `dual = false`: grade-i primal chain, coefficients indexed by primal
/// i-cells. `dual = true`: grade-i dual chain, coefficients indexed by the
/// primal (d−i)-cells its dual cells are identified with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    grade: usize,
    dual: bool,
    modulus: u32,
    coeffs: Vec<u32>,
}

impl Chain {
    pub fn zero(cx: &CellComplex, grade: usize, dual: bool) -> Self {
        let len = if dual {
            cx.dual_cell_count(grade)
        } else {
            cx.cell_count(grade)
        };
        Chain {
            grade,
            dual,
            modulus: cx.modulus,
            coeffs: vec![0; len],
        }
    }

    /// The chain consisting of a single cell with coefficient 1.
    pub fn unit(cx: &CellComplex, grade: usize, dual: bool, index: usize) -> Self {
        let mut c = Chain::zero(cx, grade, dual);
        c.coeffs[index] = 1 % cx.modulus;
        c
    }

    pub fn from_coeffs(
        cx: &CellComplex,
        grade: usize,
        dual: bool,
        coeffs: Vec<u32>,
    ) -> Result<Self, ComplexError> {
        let expected = if dual {
            cx.dual_cell_count(grade)
        } else {
            cx.cell_count(grade)
        };
        if coeffs.len() != expected {
            return Err(ComplexError::LengthMismatch {
                got: coeffs.len(),
                expected,
            });
        }
        let m = cx.modulus;
        Ok(Chain {
            grade,
            dual,
            modulus: m,
            coeffs: coeffs.into_iter().map(|a| a % m).collect(),
        })
    }

    pub fn grade(&self) -> usize {
        self.grade
    }

    pub fn is_dual(&self) -> bool {
        self.dual
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn coeffs(&self) -> &[u32] {
        &self.coeffs
    }

    pub fn coeff(&self, index: usize) -> u32 {
        self.coeffs[index]
    }

    pub fn set_coeff(&mut self, index: usize, value: u32) {
        self.coeffs[index] = value % self.modulus;
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&a| a == 0)
    }

    /// Indices of cells carrying a nonzero coefficient.
    pub fn support(&self) -> Vec<usize> {
        (0..self.coeffs.len())
            .filter(|&i| self.coeffs[i] != 0)
            .collect()
    }

    /// Sum of all coefficients mod N (the total "charge").
    pub fn total(&self) -> u32 {
        self.coeffs
            .iter()
            .fold(0u32, |s, &a| (s + a) % self.modulus)
    }

    /// Reinterpret a primal grade-i chain as the dual grade-(d−i) chain it
    /// is identified with (same coefficient vector), or vice versa.
    pub fn reinterpret(&self, cx: &CellComplex) -> Chain {
        Chain {
            grade: cx.dimension - self.grade,
            dual: !self.dual,
            modulus: self.modulus,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn add(&self, other: &Chain) -> Result<Chain, ComplexError> {
        if self.grade != other.grade || self.dual != other.dual || self.modulus != other.modulus {
            return Err(ComplexError::GradeMismatch);
        }
        let m = self.modulus;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| (a + b) % m)
            .collect();
        Ok(Chain {
            grade: self.grade,
            dual: self.dual,
            modulus: m,
            coeffs,
        })
    }

    pub fn neg(&self) -> Chain {
        let m = self.modulus;
        Chain {
            grade: self.grade,
            dual: self.dual,
            modulus: m,
            coeffs: self.coeffs.iter().map(|&a| (m - a) % m).collect(),
        }
    }

    pub fn sub(&self, other: &Chain) -> Result<Chain, ComplexError> {
        self.add(&other.neg())
    }

    pub fn scaled(&self, factor: u32) -> Chain {
        let m = self.modulus;
        Chain {
            grade: self.grade,
            dual: self.dual,
            modulus: m,
            coeffs: self.coeffs.iter().map(|&a| (a * factor) % m).collect(),
        }
    }
}

/// Deterministic policies for pairing nontrivial measurement outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairingPolicy {
    /// Greedy nearest-neighbour pairing over sorted vertex indices, with
    /// BFS shortest paths and ties broken by lowest cell index.
    Canonical,
    /// The canonical path plus one fundamental (non-contractible) cycle, so
    /// the result lies in a different homology class.
    Alternate,
}

/// A triangle of the triangular torus. `edges[i]` is the edge opposite
/// `vertices[i]` (the one not containing it).
#[derive(Clone, Debug)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub edges: [usize; 3],
}

/// Incidence table: `table[cell]` lists `(lower_cell, sign)` pairs.
type Incidence = Vec<Vec<(usize, i8)>>;

/// A cell complex for one of the supported periodic lattices.
///
/// Stores signed incidence tables for ∂ (primal) and ∂* (dual), the
/// primal↔dual identification σ*_i ≃ σ_{d−i} (via shared indices), and the
/// coefficient modulus N.
#[derive(Clone, Debug)]
pub struct CellComplex {
    kind: LatticeKind,
    dimension: usize,
    modulus: u32,
    extents: Vec<usize>,
    counts: [usize; 3],
    /// `bnd[i]`: ∂ on primal i-cells (defined for 1 ≤ i ≤ d).
    bnd: [Incidence; 3],
    /// `dual_bnd[i]`: ∂* on dual i-cells (defined for 1 ≤ i ≤ d). Dual
    /// i-cells are indexed by primal (d−i)-cells, entries by (d−i+1)-cells.
    dual_bnd: [Incidence; 3],
    /// Vertex adjacency: `adj[v]` lists `(edge, neighbour, sign)` with
    /// sign = +1 when ∂edge = neighbour − v.
    adj: Vec<Vec<(usize, usize, i8)>>,
    triangles: Vec<Triangle>,
}

impl CellComplex {
    /// Build a complex with periodic boundary conditions.
    ///
    /// `extents` holds one entry per axis: `[L]` for the cycle, `[Lx, Ly]`
    /// for the tori. The triangular torus is only defined for N = 2.
    pub fn build(
        kind: LatticeKind,
        extents: &[usize],
        modulus: u32,
    ) -> Result<CellComplex, ComplexError> {
        if modulus < 2 {
            return Err(ComplexError::Unsupported(format!(
                "modulus must be at least 2, got {modulus}"
            )));
        }
        for &l in extents {
            if l < 2 {
                return Err(ComplexError::ExtentTooSmall(l));
            }
        }
        match kind {
            LatticeKind::Cycle => {
                if extents.len() != 1 {
                    return Err(ComplexError::BadExtents {
                        kind,
                        expected: 1,
                        got: extents.len(),
                    });
                }
                Ok(Self::build_cycle(extents[0], modulus))
            }
            LatticeKind::SquareTorus => {
                if extents.len() != 2 {
                    return Err(ComplexError::BadExtents {
                        kind,
                        expected: 2,
                        got: extents.len(),
                    });
                }
                Ok(Self::build_square(extents[0], extents[1], modulus))
            }
            LatticeKind::TriangularTorus => {
                if extents.len() != 2 {
                    return Err(ComplexError::BadExtents {
                        kind,
                        expected: 2,
                        got: extents.len(),
                    });
                }
                if modulus != 2 {
                    return Err(ComplexError::Unsupported(format!(
                        "triangular torus requires modulus 2, got {modulus}"
                    )));
                }
                Ok(Self::build_triangular(extents[0], extents[1]))
            }
        }
    }

    fn build_cycle(l: usize, modulus: u32) -> CellComplex {
        // Edge j joins v_j and v_{j+1}, oriented towards −x̂: ∂e_j = v_j − v_{j+1}.
        let mut bnd1: Incidence = Vec::with_capacity(l);
        for j in 0..l {
            bnd1.push(vec![(j, 1), ((j + 1) % l, -1)]);
        }
        // Dual edge j sits at vertex v_j and joins the midpoints of e_{j−1}
        // and e_j, oriented towards +x̂: ∂*e*_j = v*_j − v*_{j−1}.
        let mut dbnd1: Incidence = Vec::with_capacity(l);
        for j in 0..l {
            dbnd1.push(vec![(j, 1), ((j + l - 1) % l, -1)]);
        }
        let mut cx = CellComplex {
            kind: LatticeKind::Cycle,
            dimension: 1,
            modulus,
            extents: vec![l],
            counts: [l, l, 0],
            bnd: [Vec::new(), bnd1, Vec::new()],
            dual_bnd: [Vec::new(), dbnd1, Vec::new()],
            adj: Vec::new(),
            triangles: Vec::new(),
        };
        cx.adj = cx.build_adjacency();
        cx
    }

    fn build_square(lx: usize, ly: usize, modulus: u32) -> CellComplex {
        let nv = lx * ly;
        let v = |x: usize, y: usize| (x % lx) + lx * (y % ly);
        let ex = |x: usize, y: usize| (x % lx) + lx * (y % ly);
        let ey = |x: usize, y: usize| nv + (x % lx) + lx * (y % ly);
        let p = v;

        // ∂ex(x,y) = v(x,y) − v(x+1,y)   (x-edges point −x̂)
        // ∂ey(x,y) = v(x,y+1) − v(x,y)   (y-edges point +ŷ)
        let mut bnd1: Incidence = vec![Vec::new(); 2 * nv];
        // ∂p(x,y), clockwise: +ex(x,y) − ey(x+1,y) − ex(x,y+1) + ey(x,y)
        let mut bnd2: Incidence = vec![Vec::new(); nv];
        // Dual edge crossing ex(x,y) points +ŷ: ∂* = v*(x,y) − v*(x,y−1);
        // dual edge crossing ey(x,y) points +x̂: ∂* = v*(x,y) − v*(x−1,y).
        let mut dbnd1: Incidence = vec![Vec::new(); 2 * nv];
        // Dual plaquette at v(x,y), counterclockwise:
        //   +ey(x,y−1) + ex(x,y) − ey(x,y) − ex(x−1,y)
        let mut dbnd2: Incidence = vec![Vec::new(); nv];

        for y in 0..ly {
            for x in 0..lx {
                bnd1[ex(x, y)] = vec![(v(x, y), 1), (v(x + 1, y), -1)];
                bnd1[ey(x, y)] = vec![(v(x, y + 1), 1), (v(x, y), -1)];
                bnd2[p(x, y)] = vec![
                    (ex(x, y), 1),
                    (ey(x + 1, y), -1),
                    (ex(x, y + 1), -1),
                    (ey(x, y), 1),
                ];
                dbnd1[ex(x, y)] = vec![(p(x, y), 1), (p(x, y + ly - 1), -1)];
                dbnd1[ey(x, y)] = vec![(p(x, y), 1), (p(x + lx - 1, y), -1)];
                dbnd2[v(x, y)] = vec![
                    (ey(x, y + ly - 1), 1),
                    (ex(x, y), 1),
                    (ey(x, y), -1),
                    (ex(x + lx - 1, y), -1),
                ];
            }
        }
        let mut cx = CellComplex {
            kind: LatticeKind::SquareTorus,
            dimension: 2,
            modulus,
            extents: vec![lx, ly],
            counts: [nv, 2 * nv, nv],
            bnd: [Vec::new(), bnd1, bnd2],
            dual_bnd: [Vec::new(), dbnd1, dbnd2],
            adj: Vec::new(),
            triangles: Vec::new(),
        };
        cx.adj = cx.build_adjacency();
        cx
    }

    fn build_triangular(lx: usize, ly: usize) -> CellComplex {
        let nv = lx * ly;
        let v = |x: usize, y: usize| (x % lx) + lx * (y % ly);
        let ex = |x: usize, y: usize| (x % lx) + lx * (y % ly);
        let ey = |x: usize, y: usize| nv + (x % lx) + lx * (y % ly);
        // Diagonal d(x,y) joins v(x,y) and v(x+1,y+1), oriented forward.
        let ed = |x: usize, y: usize| 2 * nv + (x % lx) + lx * (y % ly);
        let lower = |x: usize, y: usize| (x % lx) + lx * (y % ly);
        let upper = |x: usize, y: usize| nv + (x % lx) + lx * (y % ly);

        let mut bnd1: Incidence = vec![Vec::new(); 3 * nv];
        let mut bnd2: Incidence = vec![Vec::new(); 2 * nv];
        let mut dbnd1: Incidence = vec![Vec::new(); 3 * nv];
        let mut dbnd2: Incidence = vec![Vec::new(); nv];
        let mut triangles = vec![
            Triangle {
                vertices: [0; 3],
                edges: [0; 3]
            };
            2 * nv
        ];

        for y in 0..ly {
            for x in 0..lx {
                bnd1[ex(x, y)] = vec![(v(x, y), 1), (v(x + 1, y), -1)];
                bnd1[ey(x, y)] = vec![(v(x, y + 1), 1), (v(x, y), -1)];
                bnd1[ed(x, y)] = vec![(v(x + 1, y + 1), 1), (v(x, y), -1)];
                // lower(x,y): v(x,y), v(x+1,y), v(x+1,y+1); counterclockwise.
                bnd2[lower(x, y)] = vec![(ex(x, y), -1), (ey(x + 1, y), 1), (ed(x, y), -1)];
                triangles[lower(x, y)] = Triangle {
                    vertices: [v(x, y), v(x + 1, y), v(x + 1, y + 1)],
                    edges: [ey(x + 1, y), ed(x, y), ex(x, y)],
                };
                // upper(x,y): v(x,y), v(x+1,y+1), v(x,y+1).
                bnd2[upper(x, y)] = vec![(ed(x, y), 1), (ex(x, y + 1), 1), (ey(x, y), -1)];
                triangles[upper(x, y)] = Triangle {
                    vertices: [v(x, y), v(x + 1, y + 1), v(x, y + 1)],
                    edges: [ex(x, y + 1), ey(x, y), ed(x, y)],
                };
            }
        }
        // ∂* over ℤ_2: a dual edge bounds the two triangles containing its
        // primal edge; a dual plaquette is the star of its vertex.
        for (t, tri) in triangles.iter().enumerate() {
            for &e in &tri.edges {
                dbnd1[e].push((t, 1));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            debug_assert_eq!(
                {
                    let mut es = tri.edges.to_vec();
                    es.sort_unstable();
                    es
                },
                {
                    let mut es: Vec<usize> = bnd2[t].iter().map(|&(e, _)| e).collect();
                    es.sort_unstable();
                    es
                }
            );
        }
        for (e, ends) in bnd1.iter().enumerate() {
            for &(vtx, _) in ends {
                dbnd2[vtx].push((e, 1));
            }
        }
        let mut cx = CellComplex {
            kind: LatticeKind::TriangularTorus,
            dimension: 2,
            modulus: 2,
            extents: vec![lx, ly],
            counts: [nv, 3 * nv, 2 * nv],
            bnd: [Vec::new(), bnd1, bnd2],
            dual_bnd: [Vec::new(), dbnd1, dbnd2],
            adj: Vec::new(),
            triangles,
        };
        cx.adj = cx.build_adjacency();
        cx
    }

    fn build_adjacency(&self) -> Vec<Vec<(usize, usize, i8)>> {
        let mut adj = vec![Vec::new(); self.counts[0]];
        for (e, ends) in self.bnd[1].iter().enumerate() {
            // Each edge has a head (+1) and a tail (−1).
            let (head, tail) = match ends.as_slice() {
                [(a, 1), (b, -1)] => (*a, *b),
                [(a, -1), (b, 1)] => (*b, *a),
                other => unreachable!("malformed edge boundary {other:?}"),
            };
            adj[tail].push((e, head, 1));
            adj[head].push((e, tail, -1));
        }
        adj
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    /// Number of primal i-cells.
    pub fn cell_count(&self, grade: usize) -> usize {
        self.counts[grade]
    }

    /// Number of dual i-cells (= primal (d−i)-cells).
    pub fn dual_cell_count(&self, grade: usize) -> usize {
        self.counts[self.dimension - grade]
    }

    /// Triangles of the triangular torus (empty for other lattices).
    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    /// Signed boundary entries of a single primal i-cell.
    pub fn cell_boundary(&self, grade: usize, index: usize) -> &[(usize, i8)] {
        &self.bnd[grade][index]
    }

    /// Signed dual-boundary entries of a single dual i-cell (indexed by the
    /// primal (d−i)-cell it is identified with).
    pub fn dual_cell_boundary(&self, grade: usize, index: usize) -> &[(usize, i8)] {
        &self.dual_bnd[grade][index]
    }

    fn sign_mod(&self, s: i8) -> u32 {
        if s >= 0 {
            s as u32 % self.modulus
        } else {
            (self.modulus - ((-s) as u32 % self.modulus)) % self.modulus
        }
    }

    /// Apply ∂ (primal chains) or ∂* (dual chains); the grade drops by one
    /// in the respective grading. Coefficients are reduced mod N.
    pub fn boundary(&self, c: &Chain) -> Result<Chain, ComplexError> {
        if c.modulus != self.modulus {
            return Err(ComplexError::ModulusMismatch {
                chain: c.modulus,
                complex: self.modulus,
            });
        }
        if c.grade == 0 || c.grade > self.dimension {
            return Err(ComplexError::GradeOutOfRange(c.grade));
        }
        let table = if c.dual {
            &self.dual_bnd[c.grade]
        } else {
            &self.bnd[c.grade]
        };
        let mut out = Chain::zero(self, c.grade - 1, c.dual);
        for (cell, &a) in c.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for &(lower, sign) in &table[cell] {
                let term = (a * self.sign_mod(sign)) % self.modulus;
                out.coeffs[lower] = (out.coeffs[lower] + term) % self.modulus;
            }
        }
        Ok(out)
    }

    /// ∂* applied to a primal grade-i chain under the identification
    /// σ_i ≃ σ*_{d−i}: returns the dual grade-(d−i−1) chain, whose
    /// coefficients are indexed by primal (i+1)-cells.
    pub fn coboundary(&self, c: &Chain) -> Result<Chain, ComplexError> {
        if c.dual {
            return Err(ComplexError::GradeMismatch);
        }
        if c.grade >= self.dimension {
            return Err(ComplexError::GradeOutOfRange(c.grade));
        }
        self.boundary(&c.reinterpret(self))
    }

    /// Intersection pairing #(c ∩ c*) of a primal grade-i chain with a dual
    /// grade-(d−i) chain: Σ_σ a(c; σ_i)·a(c*; σ*_{d−i}) mod N.
    pub fn intersection(&self, c: &Chain, cstar: &Chain) -> Result<u32, ComplexError> {
        let (p, q) = if !c.dual && cstar.dual {
            (c, cstar)
        } else if c.dual && !cstar.dual {
            (cstar, c)
        } else {
            return Err(ComplexError::GradeMismatch);
        };
        if p.grade + q.grade != self.dimension || p.coeffs.len() != q.coeffs.len() {
            return Err(ComplexError::GradeMismatch);
        }
        let mut acc = 0u64;
        for (a, b) in p.coeffs.iter().zip(&q.coeffs) {
            acc += (*a as u64) * (*b as u64);
        }
        Ok((acc % self.modulus as u64) as u32)
    }

    /// A fixed non-contractible 1-cycle: the x-row at y = 0 for the tori,
    /// the whole circle for the cycle lattice. Satisfies ∂γ = 0.
    pub fn fundamental_cycle(&self) -> Chain {
        let mut c = Chain::zero(self, 1, false);
        match self.kind {
            LatticeKind::Cycle => {
                for j in 0..self.counts[1] {
                    c.coeffs[j] = 1;
                }
            }
            LatticeKind::SquareTorus | LatticeKind::TriangularTorus => {
                for x in 0..self.extents[0] {
                    c.coeffs[x] = 1; // ex(x, 0)
                }
            }
        }
        c
    }

    /// Construct a 1-chain ρ with ∂ρ = s for a charge-neutral 0-chain s.
    ///
    /// Charges are moved pairwise along BFS shortest paths: the lowest
    /// vertex with nonzero residual sends its whole charge to the nearest
    /// other nonzero vertex (ties broken by lowest index) until nothing is
    /// left. [`PairingPolicy::Alternate`] adds one fundamental cycle.
    pub fn pair_outcomes(&self, s: &Chain, policy: PairingPolicy) -> Result<Chain, ComplexError> {
        if s.dual || s.grade != 0 {
            return Err(ComplexError::GradeMismatch);
        }
        if s.modulus != self.modulus {
            return Err(ComplexError::ModulusMismatch {
                chain: s.modulus,
                complex: self.modulus,
            });
        }
        if s.total() != 0 {
            return Err(ComplexError::IsolatedMonopole);
        }
        let n = self.modulus;
        let mut residual = s.coeffs.clone();
        let mut rho = Chain::zero(self, 1, false);
        while let Some(u) = residual.iter().position(|&a| a != 0) {
            let (w, path) = self.bfs_nearest(u, &residual);
            let charge = residual[u];
            // ∂(charge·γ) = charge·u − charge·w for the path γ: w → u.
            for &(edge, sign) in &path {
                let add = (charge * self.sign_mod(sign)) % n;
                rho.coeffs[edge] = (rho.coeffs[edge] + add) % n;
            }
            residual[u] = 0;
            residual[w] = (residual[w] + charge) % n;
        }
        if policy == PairingPolicy::Alternate {
            rho = rho.add(&self.fundamental_cycle())?;
        }
        Ok(rho)
    }

    /// BFS from `u`; returns the nearest other vertex with nonzero residual
    /// (ties broken by lowest index) and the signed edge steps of the path
    /// walked from that vertex back to `u`.
    fn bfs_nearest(&self, u: usize, residual: &[u32]) -> (usize, Vec<(usize, i8)>) {
        let nv = self.counts[0];
        let mut dist = vec![usize::MAX; nv];
        let mut parent: Vec<Option<(usize, usize, i8)>> = vec![None; nv];
        let mut queue = std::collections::VecDeque::new();
        dist[u] = 0;
        queue.push_back(u);
        while let Some(a) = queue.pop_front() {
            for &(edge, b, sign) in &self.adj[a] {
                if dist[b] == usize::MAX {
                    dist[b] = dist[a] + 1;
                    parent[b] = Some((a, edge, sign));
                    queue.push_back(b);
                }
            }
        }
        let w = (0..nv)
            .filter(|&w| w != u && residual[w] != 0)
            .min_by_key(|&w| (dist[w], w))
            .expect("charge-neutral chain has at least two nonzero vertices");
        // Walk u ← … ← w in parent order, then flip: the path is recorded
        // as w → u with signs oriented along the walk.
        let mut steps = Vec::new();
        let mut cur = w;
        while cur != u {
            let (prev, edge, sign) = parent[cur].expect("connected lattice");
            // parent edge was walked prev → cur with `sign`; we traverse it
            // in reverse (cur → prev), so the orientation flips.
            steps.push((edge, -sign));
            cur = prev;
        }
        (w, steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_complexes() -> Vec<CellComplex> {
        vec![
            CellComplex::build(LatticeKind::Cycle, &[4], 2).unwrap(),
            CellComplex::build(LatticeKind::Cycle, &[5], 3).unwrap(),
            CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 2).unwrap(),
            CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 3).unwrap(),
            CellComplex::build(LatticeKind::SquareTorus, &[3, 2], 5).unwrap(),
            CellComplex::build(LatticeKind::TriangularTorus, &[2, 2], 2).unwrap(),
            CellComplex::build(LatticeKind::TriangularTorus, &[3, 3], 2).unwrap(),
        ]
    }

    #[test]
    fn cycle_counts_and_incidence() {
        let cx = CellComplex::build(LatticeKind::Cycle, &[4], 2).unwrap();
        assert_eq!(cx.cell_count(0), 4);
        assert_eq!(cx.cell_count(1), 4);
        // ∂e_01 = v_0 + v_1 over ℤ_2.
        let e = Chain::unit(&cx, 1, false, 0);
        let b = cx.boundary(&e).unwrap();
        assert_eq!(b.coeffs(), &[1, 1, 0, 0]);
    }

    #[test]
    fn square_torus_counts() {
        let cx = CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 2).unwrap();
        assert_eq!(cx.cell_count(0), 4);
        assert_eq!(cx.cell_count(1), 8);
        assert_eq!(cx.cell_count(2), 4);
    }

    #[test]
    fn triangular_torus_counts_and_degree() {
        let cx = CellComplex::build(LatticeKind::TriangularTorus, &[2, 2], 2).unwrap();
        assert_eq!(cx.cell_count(0), 4);
        assert_eq!(cx.cell_count(1), 12);
        assert_eq!(cx.cell_count(2), 8);
        for v in 0..4 {
            assert_eq!(cx.adj[v].len(), 6);
            assert_eq!(cx.dual_cell_boundary(2, v).len(), 6);
        }
        // Each vertex belongs to six triangles.
        for v in 0..4 {
            let count = cx
                .triangles()
                .iter()
                .filter(|t| t.vertices.contains(&v))
                .count();
            assert_eq!(count, 6);
        }
    }

    #[test]
    fn triangular_torus_requires_mod_two() {
        assert!(CellComplex::build(LatticeKind::TriangularTorus, &[2, 2], 3).is_err());
    }

    #[test]
    fn extent_below_two_rejected() {
        assert!(matches!(
            CellComplex::build(LatticeKind::Cycle, &[1], 2),
            Err(ComplexError::ExtentTooSmall(1))
        ));
    }

    #[test]
    fn nilpotency_all_grades_all_lattices() {
        for cx in all_complexes() {
            let d = cx.dimension();
            for grade in 2..=d {
                for idx in 0..cx.cell_count(grade) {
                    let c = Chain::unit(&cx, grade, false, idx);
                    let bb = cx.boundary(&cx.boundary(&c).unwrap()).unwrap();
                    assert!(bb.is_zero(), "∂∂ ≠ 0 on {} grade {grade}", cx.kind());
                }
                for idx in 0..cx.dual_cell_count(grade) {
                    let c = Chain::unit(&cx, grade, true, idx);
                    let bb = cx.boundary(&cx.boundary(&c).unwrap()).unwrap();
                    assert!(bb.is_zero(), "∂*∂* ≠ 0 on {} grade {grade}", cx.kind());
                }
            }
        }
    }

    #[test]
    fn dual_plaquette_boundary_signs_mod_three() {
        let cx = CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 3).unwrap();
        for v in 0..cx.cell_count(0) {
            let star = cx.coboundary(&Chain::unit(&cx, 0, false, v)).unwrap();
            let mut nonzero: Vec<u32> = star.coeffs().iter().copied().filter(|&a| a != 0).collect();
            nonzero.sort_unstable();
            assert_eq!(nonzero, vec![1, 1, 2, 2]);
        }
    }

    /// Exhaustive duality check on the 2×2 torus over ℤ_2: for random pairs
    /// this is #(∂c_{i+1} ∩ c*_{d−i}) = #(c_{i+1} ∩ ∂*c*_{d−i}).
    #[test]
    fn duality_relation_exhaustive_z2() {
        let cx = CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 2).unwrap();
        // Grade i = 0: c_1 over 8 edges vs dual c*_2 over 4 vertices.
        for cbits in 0..(1u32 << 8) {
            let c = Chain::from_coeffs(&cx, 1, false, (0..8).map(|j| (cbits >> j) & 1).collect())
                .unwrap();
            for sbits in 0..(1u32 << 4) {
                let cs =
                    Chain::from_coeffs(&cx, 2, true, (0..4).map(|j| (sbits >> j) & 1).collect())
                        .unwrap();
                let lhs = cx.intersection(&cx.boundary(&c).unwrap(), &cs).unwrap();
                let rhs = cx.intersection(&c, &cx.boundary(&cs).unwrap()).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
        // Grade i = 1: c_2 over 4 plaquettes vs dual c*_1 over 8 edges.
        for cbits in 0..(1u32 << 4) {
            let c = Chain::from_coeffs(&cx, 2, false, (0..4).map(|j| (cbits >> j) & 1).collect())
                .unwrap();
            for sbits in 0..(1u32 << 8) {
                let cs =
                    Chain::from_coeffs(&cx, 1, true, (0..8).map(|j| (sbits >> j) & 1).collect())
                        .unwrap();
                let lhs = cx.intersection(&cx.boundary(&c).unwrap(), &cs).unwrap();
                let rhs = cx.intersection(&c, &cx.boundary(&cs).unwrap()).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn duality_relation_random_zn() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for cx in [
            CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 3).unwrap(),
            CellComplex::build(LatticeKind::SquareTorus, &[3, 2], 5).unwrap(),
            CellComplex::build(LatticeKind::Cycle, &[5], 3).unwrap(),
        ] {
            let n = cx.modulus();
            let d = cx.dimension();
            for _ in 0..10_000 {
                let i = rng.gen_range(0..d);
                let c = Chain::from_coeffs(
                    &cx,
                    i + 1,
                    false,
                    (0..cx.cell_count(i + 1))
                        .map(|_| rng.gen_range(0..n))
                        .collect(),
                )
                .unwrap();
                let cs = Chain::from_coeffs(
                    &cx,
                    d - i,
                    true,
                    (0..cx.dual_cell_count(d - i))
                        .map(|_| rng.gen_range(0..n))
                        .collect(),
                )
                .unwrap();
                let lhs = cx.intersection(&cx.boundary(&c).unwrap(), &cs).unwrap();
                let rhs = cx.intersection(&c, &cx.boundary(&cs).unwrap()).unwrap();
                assert_eq!(lhs, rhs, "duality failed on {} i={i}", cx.kind());
            }
        }
    }

    #[test]
    fn intersection_single_overlap_and_disjoint() {
        let cx = CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 2).unwrap();
        let c = Chain::unit(&cx, 1, false, 3);
        let crossing = Chain::unit(&cx, 1, true, 3);
        assert_eq!(cx.intersection(&c, &crossing).unwrap(), 1);
        let disjoint = Chain::unit(&cx, 1, true, 5);
        assert_eq!(cx.intersection(&c, &disjoint).unwrap(), 0);
    }

    #[test]
    fn intersection_grade_mismatch_rejected() {
        let cx = CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 2).unwrap();
        let c = Chain::unit(&cx, 1, false, 0);
        let bad = Chain::unit(&cx, 2, true, 0);
        assert!(cx.intersection(&c, &bad).is_err());
        let both_primal = Chain::unit(&cx, 1, false, 1);
        assert!(cx.intersection(&c, &both_primal).is_err());
    }

    #[test]
    fn boundary_of_dual_vertex_star_is_closed() {
        // ∂(∂*v_0) = 0: the dual-plaquette boundary is a closed loop.
        let cx = CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 2).unwrap();
        let star = cx.coboundary(&Chain::unit(&cx, 0, false, 0)).unwrap();
        let loop_chain = star.reinterpret(&cx); // primal 1-chain on the same edges
        assert!(cx.boundary(&loop_chain).unwrap().is_zero());
    }

    #[test]
    fn pair_outcomes_zero_and_adjacent() {
        let cx = CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 2).unwrap();
        let zero = Chain::zero(&cx, 0, false);
        let rho = cx.pair_outcomes(&zero, PairingPolicy::Canonical).unwrap();
        assert!(rho.is_zero());

        // Two adjacent vertices v(0,0), v(1,0): expect exactly the (a)
        // shortest connecting edge found by the BFS oracle below.
        let mut s = Chain::zero(&cx, 0, false);
        s.set_coeff(0, 1);
        s.set_coeff(1, 1);
        let rho = cx.pair_outcomes(&s, PairingPolicy::Canonical).unwrap();
        assert_eq!(cx.boundary(&rho).unwrap(), s);
        assert_eq!(rho.support().len(), 1, "adjacent pair joined by one edge");
    }

    #[test]
    fn pair_outcomes_monopole_rejected() {
        let cx = CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 2).unwrap();
        let s = Chain::unit(&cx, 0, false, 2);
        assert!(matches!(
            cx.pair_outcomes(&s, PairingPolicy::Canonical),
            Err(ComplexError::IsolatedMonopole)
        ));
    }

    /// ∂ρ = s for every neutral outcome chain: exhaustive over ℤ_2 on the
    /// 2×2 torus, random over ℤ_3.
    #[test]
    fn pair_outcomes_boundary_contract() {
        let cx = CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 2).unwrap();
        for bits in 0..(1u32 << 4) {
            let s = Chain::from_coeffs(&cx, 0, false, (0..4).map(|j| (bits >> j) & 1).collect())
                .unwrap();
            let result = cx.pair_outcomes(&s, PairingPolicy::Canonical);
            if s.total() != 0 {
                assert!(matches!(result, Err(ComplexError::IsolatedMonopole)));
                continue;
            }
            let rho = result.unwrap();
            assert_eq!(cx.boundary(&rho).unwrap(), s, "∂ρ ≠ s for bits {bits:b}");
            let alt = cx.pair_outcomes(&s, PairingPolicy::Alternate).unwrap();
            assert_eq!(cx.boundary(&alt).unwrap(), s);
            let diff = rho.sub(&alt).unwrap();
            assert!(cx.boundary(&diff).unwrap().is_zero());
            assert!(!diff.is_zero(), "alternate path must differ");
        }

        let cx3 = CellComplex::build(LatticeKind::SquareTorus, &[2, 2], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tested = 0;
        while tested < 500 {
            let coeffs: Vec<u32> = (0..4).map(|_| rng.gen_range(0..3)).collect();
            let s = Chain::from_coeffs(&cx3, 0, false, coeffs).unwrap();
            if s.total() != 0 {
                continue;
            }
            tested += 1;
            let rho = cx3.pair_outcomes(&s, PairingPolicy::Canonical).unwrap();
            assert_eq!(cx3.boundary(&rho).unwrap(), s);
        }
    }

    #[test]
    fn pair_outcomes_adjacent_matches_bfs_oracle() {
        // BFS-distance oracle: for neutral ℤ_2 pairs the path length equals
        // the graph distance between the two vertices.
        let cx = CellComplex::build(LatticeKind::SquareTorus, &[3, 2], 2).unwrap();
        let dist = |a: usize, b: usize| -> usize {
            let mut d = vec![usize::MAX; cx.cell_count(0)];
            let mut q = std::collections::VecDeque::new();
            d[a] = 0;
            q.push_back(a);
            while let Some(x) = q.pop_front() {
                for &(_, y, _) in &cx.adj[x] {
                    if d[y] == usize::MAX {
                        d[y] = d[x] + 1;
                        q.push_back(y);
                    }
                }
            }
            d[b]
        };
        for a in 0..cx.cell_count(0) {
            for b in (a + 1)..cx.cell_count(0) {
                let mut s = Chain::zero(&cx, 0, false);
                s.set_coeff(a, 1);
                s.set_coeff(b, 1);
                let rho = cx.pair_outcomes(&s, PairingPolicy::Canonical).unwrap();
                assert_eq!(cx.boundary(&rho).unwrap(), s);
                assert_eq!(rho.support().len(), dist(a, b));
            }
        }
    }

    #[test]
    fn fundamental_cycle_is_closed_and_noncontractible_support() {
        for cx in all_complexes() {
            let cyc = cx.fundamental_cycle();
            assert!(cx.boundary(&cyc).unwrap().is_zero());
            assert!(!cyc.is_zero());
        }
    }
}
