//! Algebra of comparison gains, monotone aggregation, the gain operator, and
//! small-gain condition checks.
//!
//! Every gain appearing in the supported model families is a scaled power
//! `r ↦ a·r^p` or a finite max of such terms. This family is closed under
//! composition and (for single terms) inversion, so threshold constructions
//! like `σ_j ∘ φ_ij⁻¹ ∘ η_ij` stay exact instead of being approximated
//! numerically.

use nalgebra::{DMatrix, DVector};

use crate::grid::verification_grid;
#[cfg(test)]
use crate::grid::strictly_less;
use crate::{Error, Result};

/// A scaled power `r ↦ a·r^p` with `a ≥ 0`, `p > 0`.
///
/// `a = 0` encodes the zero function (the `∪{0}` convention); any `a > 0`
/// gives an unbounded, strictly increasing function that vanishes at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerGain {
    coeff: f64,
    exponent: f64,
}

impl PowerGain {
    /// Builds `r ↦ coeff·r^exponent`, validating `coeff ≥ 0`, `exponent > 0`.
    pub fn new(coeff: f64, exponent: f64) -> Result<Self> {
        if !coeff.is_finite() || coeff < 0.0 {
            return Err(Error::InvalidGain(format!("coeff must be >= 0, got {coeff}")));
        }
        if !exponent.is_finite() || exponent <= 0.0 {
            return Err(Error::InvalidGain(format!(
                "exponent must be > 0, got {exponent}"
            )));
        }
        Ok(Self { coeff, exponent })
    }

    /// The zero function.
    pub const fn zero() -> Self {
        Self { coeff: 0.0, exponent: 1.0 }
    }

    /// The identity `r ↦ r`.
    pub const fn identity() -> Self {
        Self { coeff: 1.0, exponent: 1.0 }
    }

    /// `r ↦ a·r`.
    pub fn linear(a: f64) -> Result<Self> {
        Self::new(a, 1.0)
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.coeff == 0.0
    }

    /// Evaluates the gain at `r ≥ 0`.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0, "gains are defined on nonnegative arguments");
        if self.coeff == 0.0 {
            return 0.0;
        }
        // powf dominates the simulation hot path; dispatch the common cases.
        let p = self.exponent;
        let v = if p == 1.0 {
            r
        } else if p == 2.0 {
            r * r
        } else if p == 0.5 {
            r.sqrt()
        } else if p == 4.0 {
            let r2 = r * r;
            r2 * r2
        } else {
            r.powf(p)
        };
        self.coeff * v
    }

    /// Exact composition: `self ∘ inner`, i.e. `r ↦ self(inner(r))`.
    ///
    /// The zero function absorbs on either side.
    pub fn compose(&self, inner: &PowerGain) -> PowerGain {
        if self.is_zero() || inner.is_zero() {
            return PowerGain::zero();
        }
        PowerGain {
            coeff: self.coeff * inner.coeff.powf(self.exponent),
            exponent: self.exponent * inner.exponent,
        }
    }

    /// Exact inverse: the gain `g⁻¹` with `g⁻¹(g(r)) = r`.
    pub fn invert(&self) -> Result<PowerGain> {
        if self.is_zero() {
            return Err(Error::NonInvertibleGain);
        }
        Ok(PowerGain {
            coeff: self.coeff.powf(-1.0 / self.exponent),
            exponent: 1.0 / self.exponent,
        })
    }
}

impl std::fmt::Display for PowerGain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_zero() {
            write!(f, "0")
        } else if self.exponent == 1.0 {
            write!(f, "{:.6}*r", self.coeff)
        } else {
            write!(f, "{:.6}*r^{}", self.coeff, self.exponent)
        }
    }
}

/// A finite max of [`PowerGain`] terms; the empty max is the zero function.
///
/// Normalization drops zero terms and keeps only the largest coefficient per
/// exponent, so structural equality is meaningful for constructed gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainExpr {
    terms: Vec<PowerGain>,
}

impl GainExpr {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn from_term(term: PowerGain) -> Self {
        Self::from_terms(vec![term])
    }

    pub fn from_terms(terms: Vec<PowerGain>) -> Self {
        let mut kept: Vec<PowerGain> = Vec::with_capacity(terms.len());
        for t in terms.into_iter().filter(|t| !t.is_zero()) {
            if let Some(existing) = kept.iter_mut().find(|e| e.exponent == t.exponent) {
                if t.coeff > existing.coeff {
                    *existing = t;
                }
            } else {
                kept.push(t);
            }
        }
        kept.sort_by(|a, b| {
            a.exponent
                .partial_cmp(&b.exponent)
                .unwrap()
                .then(a.coeff.partial_cmp(&b.coeff).unwrap())
        });
        Self { terms: kept }
    }

    pub fn terms(&self) -> &[PowerGain] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .fold(0.0, |acc, t| acc.max(t.eval(r)))
    }

    /// Exact composition `self ∘ inner` for single-term inner gains.
    ///
    /// Since every term is nondecreasing, `max_k f_k (g(r)) = (max_k f_k)(g(r))`,
    /// so composing termwise is exact.
    pub fn compose_inner(&self, inner: &PowerGain) -> GainExpr {
        GainExpr::from_terms(self.terms.iter().map(|t| t.compose(inner)).collect())
    }

    /// Exact composition `outer ∘ self` of a single-term outer gain.
    pub fn compose_outer(&self, outer: &PowerGain) -> GainExpr {
        GainExpr::from_terms(self.terms.iter().map(|t| outer.compose(t)).collect())
    }

    /// Exact composition of two expressions: `self ∘ inner`.
    pub fn compose(&self, inner: &GainExpr) -> GainExpr {
        let mut terms = Vec::with_capacity(self.terms.len() * inner.terms.len().max(1));
        for g in &inner.terms {
            for f in &self.terms {
                terms.push(f.compose(g));
            }
        }
        GainExpr::from_terms(terms)
    }

    /// Symbolic inverse, defined only for single-term expressions.
    pub fn invert(&self) -> Result<PowerGain> {
        match self.terms.as_slice() {
            [single] => single.invert(),
            _ => Err(Error::NonInvertibleGain),
        }
    }

    /// The single term of a one-term expression, if that is the shape.
    pub fn as_single_term(&self) -> Option<&PowerGain> {
        match self.terms.as_slice() {
            [single] => Some(single),
            _ => None,
        }
    }

    /// Inverse terms for pointwise inverse evaluation.
    ///
    /// `(max_k f_k)⁻¹(y) = min_k f_k⁻¹(y)` for strictly increasing terms.
    pub fn inverse_terms(&self) -> Result<Vec<PowerGain>> {
        if self.terms.is_empty() {
            return Err(Error::NonInvertibleGain);
        }
        self.terms.iter().map(PowerGain::invert).collect()
    }

    /// Pointwise inverse evaluation at `y ≥ 0`.
    pub fn eval_inverse(&self, y: f64) -> Result<f64> {
        let inv = self.inverse_terms()?;
        Ok(inv
            .iter()
            .map(|t| t.eval(y))
            .fold(f64::INFINITY, f64::min))
    }
}

impl std::fmt::Display for GainExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.terms.as_slice() {
            [] => write!(f, "0"),
            [single] => write!(f, "{single}"),
            terms => {
                write!(f, "max(")?;
                for (k, t) in terms.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Monotone aggregation applied along one row of the gain operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MAFKind {
    /// `μ(s) = max_j s_j`.
    Max,
    /// `μ(s) = (Σ_j s_j)²`.
    SumThenSquare,
}

impl MAFKind {
    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        match self {
            MAFKind::Max => values.iter().fold(0.0, |a, &v| a.max(v)),
            MAFKind::SumThenSquare => {
                let s: f64 = values.iter().sum();
                s * s
            }
        }
    }
}

/// The `N×N` matrix of interconnection gains with a row aggregation function,
/// representing the operator `Γ_μ`.
#[derive(Debug, Clone)]
pub struct GainMatrix {
    n: usize,
    entries: Vec<GainExpr>,
    row_maf: Vec<MAFKind>,
}

impl GainMatrix {
    /// Builds the matrix, enforcing the zero-diagonal convention.
    pub fn new(n: usize, entries: Vec<GainExpr>, row_maf: Vec<MAFKind>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
                context: "gain matrix entries",
            });
        }
        if row_maf.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row_maf.len(),
                context: "row aggregation functions",
            });
        }
        for i in 0..n {
            if !entries[i * n + i].is_zero() {
                return Err(Error::InvalidGain(format!(
                    "diagonal gain ({i},{i}) must be zero"
                )));
            }
        }
        Ok(Self { n, entries, row_maf })
    }

    /// All-zero matrix with `Max` rows.
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![GainExpr::zero(); n * n],
            row_maf: vec![MAFKind::Max; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &GainExpr {
        &self.entries[i * self.n + j]
    }

    pub fn row_maf(&self, i: usize) -> MAFKind {
        self.row_maf[i]
    }

    /// Applies the gain operator: component `i` is
    /// `μ_i(γ_i1(s_1), …, γ_iN(s_N))`.
    pub fn gamma_mu_apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: s.len(),
                context: "gamma_mu argument",
            });
        }
        let mut row = vec![0.0; self.n];
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                row[j] = self.entry(i, j).eval(s[j]);
            }
            out[i] = self.row_maf[i].apply(&row);
        }
        Ok(out)
    }

    /// Boolean adjacency of the nonzero gains (`a_ij = 1 ⇔ γ_ij ≠ 0`).
    pub fn adjacency(&self) -> Vec<bool> {
        (0..self.n * self.n)
            .map(|k| !self.entries[k].is_zero())
            .collect()
    }
}

/// Interconnection structure: which states enter each dynamics (`Σ(i)`),
/// which states each controller reads (`C(i)`), and who receives each
/// broadcast (`Z(i)`).
#[derive(Debug, Clone)]
pub struct CouplingGraph {
    n: usize,
    adjacency: Vec<bool>,
    sigma: Vec<Vec<usize>>,
    c: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
}

impl CouplingGraph {
    /// Builds the graph from the gain adjacency (`a_ij = 1 ⇔ γ_ij ≠ 0`),
    /// dynamic dependencies, and controller dependencies.
    ///
    /// `Z` is derived from `C`: `j ∈ C(i) ⇔ i ∈ Z(j)`.
    pub fn new(
        n: usize,
        adjacency: Vec<bool>,
        sigma: Vec<Vec<usize>>,
        c: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if adjacency.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: adjacency.len(),
                context: "coupling adjacency",
            });
        }
        let mut adjacency = adjacency;
        for i in 0..n {
            adjacency[i * n + i] = false;
        }
        let mut z = vec![Vec::new(); n];
        for (i, ci) in c.iter().enumerate() {
            for &j in ci {
                z[j].push(i);
            }
        }
        Ok(Self { n, adjacency, sigma, c, z })
    }

    /// Derives the graph from a gain matrix alone, taking `Σ(i) = C(i) =`
    /// the nonzero pattern of row `i`.
    pub fn from_gain_matrix(gm: &GainMatrix) -> Self {
        let n = gm.n();
        let adjacency = gm.adjacency();
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| adjacency[i * n + j]).collect())
            .collect();
        Self {
            n,
            adjacency,
            sigma: rows.clone(),
            c: rows.clone(),
            z: {
                let mut z = vec![Vec::new(); n];
                for (i, ci) in rows.iter().enumerate() {
                    for &j in ci {
                        z[j].push(i);
                    }
                }
                z
            },
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    pub fn sigma_set(&self, i: usize) -> &[usize] {
        &self.sigma[i]
    }

    pub fn c_set(&self, i: usize) -> &[usize] {
        &self.c[i]
    }

    pub fn z_set(&self, i: usize) -> &[usize] {
        &self.z[i]
    }
}

/// Result of a closed-form or sampled inequality check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    /// Whether the checked condition holds.
    pub pass: bool,
    /// Which decision route produced the verdict.
    pub method: CheckMethod,
    /// Route-specific witness: `ρ(G)` for the spectral route, the sampled
    /// sup of `γ12∘γ21(r)/r` for the cycle route, and the worst relative
    /// margin `min_i,r (σ_i(r) − lhs_i(r))/σ_i(r)` for grid verification.
    pub witness: f64,
    /// Worst or first violating sample `(row, r)`, when one exists.
    pub violation: Option<(usize, f64)>,
}

/// Decision route used by a check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMethod {
    /// Homogeneous coefficient-matrix route: `ρ(G) < 1`.
    SpectralRadius,
    /// Two-subsystem cycle route: `γ12∘γ21(r) < r` sampled on the grid.
    TwoBodyCycle,
    /// Direct grid verification of the path inequality.
    GridVerification,
}

/// Spectral radius of a nonnegative square matrix, to 1e-9 relative accuracy.
///
/// A shifted power iteration handles the generic case (the shift separates
/// eigenvalues of equal modulus in imprimitive matrices); if the Rayleigh
/// residual stalls — a defective dominant eigenvalue — a repeated-squaring
/// norm estimate takes over, which for nonnegative matrices is cancellation
/// free and accurate to well below the contract tolerance.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare { rows: m.nrows(), cols: m.ncols() });
    }
    debug_assert!(m.iter().all(|&v| v >= 0.0), "matrix must be nonnegative");
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    // Shift bound: infinity norm (max row sum) dominates rho(M).
    let shift = (0..n)
        .map(|i| m.row(i).iter().sum::<f64>())
        .fold(0.0_f64, f64::max);
    if shift == 0.0 {
        return Ok(0.0);
    }
    let b = m + DMatrix::identity(n, n) * shift;

    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut bv = DVector::zeros(n);
    for _ in 0..20_000 {
        bv.gemv(1.0, &b, &v, 0.0);
        let lambda = v.dot(&bv);
        let norm = bv.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        // Residual ||Bv - lambda v|| relative to lambda (>= shift > 0).
        let res = (&bv - &v * lambda).norm();
        v.copy_from(&bv);
        v /= norm;
        if res <= 1e-13 * lambda {
            return Ok((lambda - shift).max(0.0));
        }
    }
    Ok(gelfand_estimate(&b, shift) - shift)
}

/// Gelfand formula by repeated squaring with log-scale accumulation:
/// `ρ(B) = lim ‖B^k‖^{1/k}` evaluated at `k = 2^50`.
fn gelfand_estimate(b: &DMatrix<f64>, scale: f64) -> f64 {
    const SQUARINGS: u32 = 50;
    let mut acc = scale.ln();
    let mut cur = b / scale;
    for step in 1..=SQUARINGS {
        cur = &cur * &cur;
        let norm = cur.amax();
        if norm == 0.0 {
            return 0.0;
        }
        cur /= norm;
        acc += norm.ln() / f64::powi(2.0, step as i32);
    }
    // Residual norm of the last normalized iterate contributes 2^-SQUARINGS
    // of its log, already absorbed by the final scaling above.
    acc.exp()
}

/// Perron pair of an (entrywise) positive matrix: dominant eigenvalue and the
/// positive eigenvector normalized to max entry one.
pub fn perron_vector(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare { rows: m.nrows(), cols: m.ncols() });
    }
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0);
    let mut mv = DVector::zeros(n);
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        mv.gemv(1.0, m, &v, 0.0);
        lambda = v.dot(&mv) / v.dot(&v);
        let res = (&mv - &v * lambda).norm();
        let max = mv.amax();
        if max == 0.0 {
            return Err(Error::InvalidGain("matrix annihilates positive cone".into()));
        }
        v.copy_from(&mv);
        v /= max;
        if res <= 1e-14 * lambda.abs().max(1e-300) {
            break;
        }
    }
    let max = v.amax();
    v /= max;
    Ok((lambda, v))
}

/// Strong connectivity of the coupling graph via Tarjan's SCC algorithm:
/// irreducible iff one component covers all nodes.
pub fn is_irreducible(g: &CouplingGraph) -> bool {
    let n = g.n();
    if n == 0 {
        return true;
    }
    // Edge (j, i) whenever a_ij = 1.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if g.adjacent(i, j) {
                adj[j].push(i);
            }
        }
    }
    tarjan_scc_count(&adj) == 1
}

fn tarjan_scc_count(adj: &[Vec<usize>]) -> usize {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0usize;
    let mut count = 0usize;

    // Iterative DFS: (node, edge cursor).
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut cursor)) = call.last_mut() {
            if *cursor < adj[v].len() {
                let w = adj[v][*cursor];
                *cursor += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    count += 1;
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        if w == v {
                            break;
                        }
                    }
                }
            }
        }
    }
    count
}

/// Closed-form small-gain verdict for the two supported structures.
///
/// Route (a): all rows aggregate by sum-then-square and all nonzero entries
/// are `G_ij·√r` — the verdict is `ρ(G) < 1`.
/// Route (b): `n = 2` with max rows — the verdict is the sampled cycle
/// condition `γ12∘γ21(r) < r`.
pub fn small_gain_check(gm: &GainMatrix) -> Result<CheckReport> {
    if let Some(coeffs) = homogeneous_sqrt_coefficients(gm) {
        let rho = spectral_radius(&coeffs)?;
        return Ok(CheckReport {
            pass: rho < 1.0,
            method: CheckMethod::SpectralRadius,
            witness: rho,
            violation: None,
        });
    }
    if gm.n() == 2
        && gm.row_maf(0) == MAFKind::Max
        && gm.row_maf(1) == MAFKind::Max
    {
        let cycle = gm.entry(0, 1).compose(gm.entry(1, 0));
        let mut sup_ratio: f64 = 0.0;
        let mut worst = None;
        for &r in &verification_grid() {
            let ratio = cycle.eval(r) / r;
            if ratio > sup_ratio {
                sup_ratio = ratio;
                worst = Some((0, r));
            }
        }
        let pass = sup_ratio < 1.0 - crate::grid::STRICT_MARGIN;
        return Ok(CheckReport {
            pass,
            method: CheckMethod::TwoBodyCycle,
            witness: sup_ratio,
            violation: if pass { None } else { worst },
        });
    }
    Err(Error::NoClosedFormCheck)
}

/// Extracts the coefficient matrix when every row aggregates by
/// sum-then-square and every nonzero entry is a single `G_ij·√r` term.
fn homogeneous_sqrt_coefficients(gm: &GainMatrix) -> Option<DMatrix<f64>> {
    let n = gm.n();
    if (0..n).any(|i| gm.row_maf(i) != MAFKind::SumThenSquare) {
        return None;
    }
    let mut coeffs = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let e = gm.entry(i, j);
            if e.is_zero() {
                continue;
            }
            let term = e.as_single_term()?;
            if term.exponent() != 0.5 {
                return None;
            }
            coeffs[(i, j)] = term.coeff();
        }
    }
    Some(coeffs)
}
