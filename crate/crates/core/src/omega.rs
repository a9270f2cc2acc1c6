//! Construction and verification of Ω-paths `σ` and error-gain maps `φ`.
//!
//! An Ω-path certifies weak coupling: `Γ_μ(σ(r)) < σ(r)` for all `r > 0`.
//! The coupled condition additionally budgets the broadcast-error gains:
//! `μ_i(γ_i1(σ_1(r)), …, γ_iN(σ_N(r)), φ_i1(r), …, φ_iN(r)) < σ_i(r)`.
//! Constructors return only paths that survive grid verification.

use nalgebra::DMatrix;

use crate::gainalg::{
    perron_vector, spectral_radius, CheckMethod, CheckReport, CouplingGraph, GainExpr, GainMatrix,
    MAFKind, PowerGain,
};
use crate::grid::{log_grid, strictly_less, verification_grid};
use crate::{Error, Result};

/// How a path was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathProvenance {
    /// Perron-direction half line for the homogeneous linear family.
    LinearPerron,
    /// Interpolated `σ₂` between the cycle gains of a two-subsystem system.
    TwoBodyInterpolation,
    /// Supplied by the caller (configuration override).
    UserSupplied,
}

/// A vector of strictly increasing power gains `σ_i` with
/// `Γ_μ(σ(r)) < σ(r)`.
#[derive(Debug, Clone)]
pub struct OmegaPath {
    sigma: Vec<PowerGain>,
    provenance: PathProvenance,
}

impl OmegaPath {
    /// Wraps caller-supplied components after validating positivity.
    pub fn user_supplied(sigma: Vec<PowerGain>) -> Result<Self> {
        if sigma.iter().any(PowerGain::is_zero) {
            return Err(Error::InvalidGain(
                "omega path components must have positive coefficients".into(),
            ));
        }
        Ok(Self { sigma, provenance: PathProvenance::UserSupplied })
    }

    pub(crate) fn from_parts(sigma: Vec<PowerGain>, provenance: PathProvenance) -> Self {
        Self { sigma, provenance }
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn component(&self, i: usize) -> &PowerGain {
        &self.sigma[i]
    }

    pub fn components(&self) -> &[PowerGain] {
        &self.sigma
    }

    pub fn provenance(&self) -> PathProvenance {
        self.provenance
    }

    /// `σ_i(r)`.
    #[inline]
    pub fn eval(&self, i: usize, r: f64) -> f64 {
        self.sigma[i].eval(r)
    }

    /// `σ_i⁻¹(v)`; components are strictly increasing powers, so the inverse
    /// is total on nonnegative values.
    #[inline]
    pub fn eval_inverse(&self, i: usize, v: f64) -> f64 {
        let g = &self.sigma[i];
        // (v / a)^(1/p) evaluated directly to stay cheap in the hot path.
        let scaled = v / g.coeff();
        let p = g.exponent();
        if p == 1.0 {
            scaled
        } else if p == 2.0 {
            scaled.sqrt()
        } else {
            scaled.powf(1.0 / p)
        }
    }

    /// The coefficient vector `s*` when the path is a linear half line
    /// (`σ_i(r) = s*_i · r`).
    pub fn s_star(&self) -> Option<Vec<f64>> {
        if self.sigma.iter().all(|g| g.exponent() == 1.0) {
            Some(self.sigma.iter().map(PowerGain::coeff).collect())
        } else {
            None
        }
    }
}

/// The error-gain map `φ`, conventionally zero wherever `η_ij = 0`.
#[derive(Debug, Clone)]
pub struct PhiMap {
    n: usize,
    phi: Vec<GainExpr>,
}

impl PhiMap {
    pub fn new(n: usize, phi: Vec<GainExpr>) -> Result<Self> {
        if phi.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: phi.len(),
                context: "phi map entries",
            });
        }
        Ok(Self { n, phi })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, phi: vec![GainExpr::zero(); n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &GainExpr {
        &self.phi[i * self.n + j]
    }
}

/// Safety shrink applied to the `φ` budget so the coupled inequality is
/// strict with a quantifiable margin.
pub const PHI_SAFETY_SHRINK: f64 = 1e-6;

const MAX_EPSILON_HALVINGS: u32 = 60;

/// Ω-path for the homogeneous linear family `γ_ij(r) = G_ij √r` with
/// sum-then-square rows.
///
/// The path is the half line `σ_i(r) = s*_i r` where `√s*` is the Perron
/// eigenvector of the perturbed matrix `G* = G + εJ` (ε halved until
/// `ρ(G*) < 1`), normalized to max entry one. In the √-transformed
/// coordinates the Perron inequality `G t < t` is exactly the path property,
/// so `s* = t²` componentwise.
pub fn build_omega_path_linear(coeffs: &DMatrix<f64>, epsilon: f64) -> Result<OmegaPath> {
    let n = coeffs.nrows();
    if coeffs.ncols() != n {
        return Err(Error::NonSquare { rows: n, cols: coeffs.ncols() });
    }
    let rho = spectral_radius(coeffs)?;
    if rho >= 1.0 {
        return Err(Error::SmallGainFails { rho });
    }
    let ones = DMatrix::from_element(n, n, 1.0);
    let mut eps = epsilon;
    let mut perturbed = coeffs + &ones * eps;
    let mut halvings = 0;
    while spectral_radius(&perturbed)? >= 1.0 {
        halvings += 1;
        if halvings > MAX_EPSILON_HALVINGS {
            return Err(Error::PathConstructionFailed);
        }
        eps /= 2.0;
        perturbed = coeffs + &ones * eps;
    }
    let (_, t) = perron_vector(&perturbed)?;
    let sigma: Vec<PowerGain> = t
        .iter()
        .map(|&ti| PowerGain::linear(ti * ti))
        .collect::<Result<_>>()?;
    let path = OmegaPath::from_parts(sigma, PathProvenance::LinearPerron);

    let gm = sqrt_family_matrix(coeffs)?;
    let cert = verify_omega_condition(&gm, &path, &PhiMap::zeros(n));
    if !cert.pass {
        return Err(Error::PathConstructionFailed);
    }
    Ok(path)
}

/// Gain matrix `γ_ij(r) = G_ij √r` with sum-then-square rows.
pub fn sqrt_family_matrix(coeffs: &DMatrix<f64>) -> Result<GainMatrix> {
    let n = coeffs.nrows();
    let entries: Vec<GainExpr> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let c = coeffs[(i, j)];
            if i == j || c == 0.0 {
                Ok(GainExpr::zero())
            } else {
                Ok(GainExpr::from_term(PowerGain::new(c, 0.5)?))
            }
        })
        .collect::<Result<_>>()?;
    GainMatrix::new(n, entries, vec![MAFKind::SumThenSquare; n])
}

/// Two-subsystem Ω-path `σ = (id, σ₂)` with `γ21 < σ₂ < γ12⁻¹`.
///
/// When the bracketing gains share an exponent, `σ₂` takes the geometric
/// mean of their coefficients; otherwise a coefficient/exponent box search
/// looks for any admissible power.
pub fn choose_sigma2_twobody(gamma12: &PowerGain, gamma21: &PowerGain) -> Result<OmegaPath> {
    if gamma12.is_zero() && gamma21.is_zero() {
        return Ok(OmegaPath::from_parts(
            vec![PowerGain::identity(), PowerGain::identity()],
            PathProvenance::TwoBodyInterpolation,
        ));
    }
    let grid = verification_grid();
    let cycle_ok = grid
        .iter()
        .all(|&r| strictly_less(gamma12.eval(gamma21.eval(r)), r));
    if !cycle_ok {
        let sup = grid
            .iter()
            .map(|&r| gamma12.eval(gamma21.eval(r)) / r)
            .fold(0.0_f64, f64::max);
        return Err(Error::SmallGainFails { rho: sup });
    }

    let gm = two_body_max_matrix(gamma12, gamma21)?;
    if !gamma12.is_zero() && !gamma21.is_zero() {
        let upper = gamma12.invert()?;
        if (gamma21.exponent() - upper.exponent()).abs() < 1e-12 {
            let coeff = (gamma21.coeff() * upper.coeff()).sqrt();
            let sigma2 = PowerGain::new(coeff, gamma21.exponent())?;
            let path = OmegaPath::from_parts(
                vec![PowerGain::identity(), sigma2],
                PathProvenance::TwoBodyInterpolation,
            );
            let cert = verify_omega_condition(&gm, &path, &PhiMap::zeros(2));
            if cert.pass {
                return Ok(path);
            }
        }
    }
    // Exponent mismatch (or a degenerate one-sided cycle): search a
    // coefficient/exponent box for an admissible sigma_2.
    for &q in &[
        gamma21.exponent().max(1e-3),
        1.0,
        0.5,
        2.0,
        if gamma12.is_zero() { 1.0 } else { 1.0 / gamma12.exponent() },
    ] {
        for &c in log_grid(1e-6, 1e6, 49).iter() {
            let candidate = PowerGain::new(c, q)?;
            let path = OmegaPath::from_parts(
                vec![PowerGain::identity(), candidate],
                PathProvenance::TwoBodyInterpolation,
            );
            let cert = verify_omega_condition(&gm, &path, &PhiMap::zeros(2));
            if cert.pass {
                return Ok(path);
            }
        }
    }
    Err(Error::SigmaSearchFailed)
}

fn two_body_max_matrix(gamma12: &PowerGain, gamma21: &PowerGain) -> Result<GainMatrix> {
    GainMatrix::new(
        2,
        vec![
            GainExpr::zero(),
            GainExpr::from_term(*gamma12),
            GainExpr::from_term(*gamma21),
            GainExpr::zero(),
        ],
        vec![MAFKind::Max, MAFKind::Max],
    )
}

/// Error-gain map for the linear family: the leftover path budget
/// `ρ_i = √s*_i − Σ_{j∈(Σ(i)∪C(i))∖{i}} G_ij √s*_j` is split uniformly over
/// the controllers' inputs, shrunk by [`PHI_SAFETY_SHRINK`] to keep the
/// coupled inequality strict.
pub fn build_phi_linear(
    coeffs: &DMatrix<f64>,
    s_star: &[f64],
    graph: &CouplingGraph,
) -> Result<PhiMap> {
    let n = coeffs.nrows();
    if coeffs.ncols() != n {
        return Err(Error::NonSquare { rows: n, cols: coeffs.ncols() });
    }
    if s_star.len() != n || graph.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: s_star.len().min(graph.n()),
            context: "phi construction inputs",
        });
    }
    let mut phi = vec![GainExpr::zero(); n * n];
    for i in 0..n {
        let mut budget = s_star[i].sqrt();
        for j in 0..n {
            if j == i {
                continue;
            }
            let in_sum = graph.sigma_set(i).contains(&j) || graph.c_set(i).contains(&j);
            if in_sum {
                budget -= coeffs[(i, j)] * s_star[j].sqrt();
            }
        }
        let c_set = graph.c_set(i);
        if c_set.is_empty() {
            continue;
        }
        if budget <= 0.0 {
            return Err(Error::PathBudgetExhausted { i, value: budget });
        }
        let share = budget * (1.0 - PHI_SAFETY_SHRINK) / c_set.len() as f64;
        for &j in c_set {
            phi[i * n + j] = GainExpr::from_term(PowerGain::new(share, 0.5)?);
        }
    }
    PhiMap::new(n, phi)
}

/// Grid verification of the coupled path inequality: for every grid point
/// `r` and row `i`,
/// `μ_i(γ_i1(σ_1(r)), …, γ_iN(σ_N(r)), φ_i1(r), …, φ_iN(r)) < σ_i(r)`.
///
/// The verdict is carried in the report along with the worst relative margin
/// and the first violating `(row, r)` sample, if any.
pub fn verify_omega_condition(gm: &GainMatrix, sigma: &OmegaPath, phi: &PhiMap) -> CheckReport {
    let n = gm.n();
    debug_assert_eq!(sigma.n(), n);
    debug_assert_eq!(phi.n(), n);
    let grid = verification_grid();
    let mut worst_margin = f64::INFINITY;
    let mut violation = None;
    let mut args = vec![0.0; 2 * n];
    for &r in &grid {
        for i in 0..n {
            for j in 0..n {
                args[j] = gm.entry(i, j).eval(sigma.eval(j, r));
                args[n + j] = phi.entry(i, j).eval(r);
            }
            let lhs = gm.row_maf(i).apply(&args);
            let rhs = sigma.eval(i, r);
            let margin = (rhs - lhs) / rhs;
            if margin < worst_margin {
                worst_margin = margin;
            }
            if !strictly_less(lhs, rhs) && violation.is_none() {
                violation = Some((i, r));
            }
        }
    }
    CheckReport {
        pass: violation.is_none(),
        method: CheckMethod::GridVerification,
        witness: worst_margin,
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn pg(c: f64, p: f64) -> PowerGain {
        PowerGain::new(c, p).unwrap()
    }

    #[test]
    fn linear_path_symmetric_two_body() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 0.25, 0.25, 0.0]);
        let path = build_omega_path_linear(&g, 1e-3).unwrap();
        let s = path.s_star().unwrap();
        assert_relative_eq!(s[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(s[1], 1.0, epsilon = 1e-9);
        assert_eq!(path.provenance(), PathProvenance::LinearPerron);
    }

    #[test]
    fn linear_path_decoupled() {
        let g = DMatrix::<f64>::zeros(3, 3);
        let path = build_omega_path_linear(&g, 1e-3).unwrap();
        let gm = sqrt_family_matrix(&g).unwrap();
        let cert = verify_omega_condition(&gm, &path, &PhiMap::zeros(3));
        assert!(cert.pass);
    }

    #[test]
    fn linear_path_random_instances_certify() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..25 {
            let n = rng.random_range(2..=5);
            let raw = DMatrix::from_fn(n, n, |i, j| {
                if i == j { 0.0 } else { rng.random_range(0.05..2.0_f64) }
            });
            let rho = spectral_radius(&raw).unwrap();
            let g = raw * (0.9 / rho);
            let path = build_omega_path_linear(&g, 1e-3).unwrap();
            let gm = sqrt_family_matrix(&g).unwrap();
            let cert = verify_omega_condition(&gm, &path, &PhiMap::zeros(n));
            assert!(cert.pass, "witness {}", cert.witness);
        }
    }

    #[test]
    fn linear_path_rejects_large_gain() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        assert!(matches!(
            build_omega_path_linear(&g, 1e-3),
            Err(Error::SmallGainFails { .. })
        ));
    }

    #[test]
    fn path_scaling_invariance_of_verdict() {
        // Scaling s* leaves the homogeneous verdict unchanged: the linear
        // family inequality is degree-1 homogeneous in s*.
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..50 {
            let n = 3;
            let raw = DMatrix::from_fn(n, n, |i, j| {
                if i == j { 0.0 } else { rng.random_range(0.05..2.0_f64) }
            });
            let rho = spectral_radius(&raw).unwrap();
            let g = raw * (rng.random_range(0.5..1.5) / rho);
            let gm = sqrt_family_matrix(&g).unwrap();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
            let scale: f64 = rng.random_range(0.01..100.0);
            let path_a = OmegaPath::from_parts(
                s.iter().map(|&v| PowerGain::linear(v).unwrap()).collect(),
                PathProvenance::UserSupplied,
            );
            let path_b = OmegaPath::from_parts(
                s.iter().map(|&v| PowerGain::linear(v * scale).unwrap()).collect(),
                PathProvenance::UserSupplied,
            );
            let a = verify_omega_condition(&gm, &path_a, &PhiMap::zeros(n)).pass;
            let b = verify_omega_condition(&gm, &path_b, &PhiMap::zeros(n)).pass;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sigma2_nonlinear_benchmark() {
        let k = 64.0;
        let g12 = pg(32.0_f64.sqrt(), 0.5);
        let g21 = pg(32.0 / (k * k), 2.0);
        let path = choose_sigma2_twobody(&g12, &g21).unwrap();
        let s2 = path.component(1);
        assert_relative_eq!(s2.exponent(), 2.0);
        // geometric mean of 32/k^2 = 1/128 and 1/32 is 1/64
        assert_relative_eq!(s2.coeff(), 1.0 / 64.0, epsilon = 1e-12);
        assert!(s2.coeff() > 32.0 / (k * k) && s2.coeff() < 1.0 / 32.0);
    }

    #[test]
    fn sigma2_decoupled_and_symmetric() {
        let path = choose_sigma2_twobody(&PowerGain::zero(), &PowerGain::zero()).unwrap();
        assert_relative_eq!(path.component(0).coeff(), 1.0);
        assert_relative_eq!(path.component(1).coeff(), 1.0);

        let g = pg(0.5, 1.0);
        let path = choose_sigma2_twobody(&g, &g).unwrap();
        assert_relative_eq!(path.component(1).coeff(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(path.component(1).exponent(), 1.0);
    }

    #[test]
    fn sigma2_box_search_on_exponent_mismatch() {
        // gamma21 and gamma12^{-1} have different exponents, so the
        // geometric-mean shortcut does not apply; the box search must still
        // find an admissible power between the cycle gains.
        let g12 = pg(1e-4, 0.5);
        let g21 = pg(0.01, 1.0);
        let path = choose_sigma2_twobody(&g12, &g21).unwrap();
        let gm = GainMatrix::new(
            2,
            vec![
                GainExpr::zero(),
                GainExpr::from_term(g12),
                GainExpr::from_term(g21),
                GainExpr::zero(),
            ],
            vec![MAFKind::Max, MAFKind::Max],
        )
        .unwrap();
        let cert = verify_omega_condition(&gm, &path, &PhiMap::zeros(2));
        assert!(cert.pass, "found sigma2 {} fails", path.component(1));
    }

    #[test]
    fn sigma2_rejects_small_gain_violation() {
        let k = 16.0;
        let g12 = pg(32.0_f64.sqrt(), 0.5);
        let g21 = pg(32.0 / (k * k), 2.0);
        assert!(matches!(
            choose_sigma2_twobody(&g12, &g21),
            Err(Error::SmallGainFails { .. })
        ));
    }

    #[test]
    fn phi_linear_formula_and_edges() {
        // n = 3, |C(i)| = 2, rho_i = 0.4 -> share 0.2*(1 - shrink)
        let n = 3;
        let coeffs = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.1, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        );
        // s* chosen so sqrt(s*_0) - 0.1*sqrt(s*_1) - 0.2*sqrt(s*_2) = 0.4
        let s_star = [0.49, 1.0, 1.0];
        let adjacency = vec![
            false, true, true, //
            false, false, false, //
            false, false, false,
        ];
        let sigma_sets = vec![vec![1, 2], vec![], vec![]];
        let c_sets = vec![vec![1, 2], vec![], vec![]];
        let graph = CouplingGraph::new(n, adjacency, sigma_sets, c_sets).unwrap();
        let phi = build_phi_linear(&coeffs, &s_star, &graph).unwrap();
        let share = phi.entry(0, 1).as_single_term().unwrap().coeff();
        assert_relative_eq!(share, 0.2 * (1.0 - PHI_SAFETY_SHRINK), epsilon = 1e-12);
        // rows with empty C(i) stay zero
        assert!(phi.entry(1, 0).is_zero());
        assert!(phi.entry(2, 2).is_zero());
    }

    #[test]
    fn phi_linear_budget_exhaustion() {
        let coeffs = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let s_star = [1.0, 4.0];
        let adjacency = vec![false, true, false, false];
        let graph = CouplingGraph::new(
            2,
            adjacency,
            vec![vec![1], vec![]],
            vec![vec![1], vec![]],
        )
        .unwrap();
        // budget = 1 - 1*2 = -1
        assert!(matches!(
            build_phi_linear(&coeffs, &s_star, &graph),
            Err(Error::PathBudgetExhausted { .. })
        ));
    }

    #[test]
    fn linear_pipeline_passes_with_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for _ in 0..25 {
            let n = rng.random_range(2..=4);
            let raw = DMatrix::from_fn(n, n, |i, j| {
                if i == j { 0.0 } else { rng.random_range(0.05..1.5_f64) }
            });
            let rho = spectral_radius(&raw).unwrap();
            let g = raw * (rng.random_range(0.3..0.95) / rho);
            let gm = sqrt_family_matrix(&g).unwrap();
            let graph = CouplingGraph::from_gain_matrix(&gm);
            let path = build_omega_path_linear(&g, 1e-3).unwrap();
            let phi = build_phi_linear(&g, &path.s_star().unwrap(), &graph).unwrap();
            let cert = verify_omega_condition(&gm, &path, &phi);
            assert!(cert.pass);
            assert!(
                cert.witness >= PHI_SAFETY_SHRINK * 1e-3,
                "margin too thin: {}",
                cert.witness
            );
        }
    }

    #[test]
    fn verify_detects_inflated_phi() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let gm = sqrt_family_matrix(&g).unwrap();
        let graph = CouplingGraph::from_gain_matrix(&gm);
        let path = build_omega_path_linear(&g, 1e-3).unwrap();
        let phi = build_phi_linear(&g, &path.s_star().unwrap(), &graph).unwrap();
        assert!(verify_omega_condition(&gm, &path, &phi).pass);

        let inflated: Vec<GainExpr> = (0..2)
            .flat_map(|i| {
                (0..2).map(move |j| (i, j))
            })
            .map(|(i, j)| {
                let e = phi.entry(i, j);
                match e.as_single_term() {
                    Some(t) => GainExpr::from_term(
                        PowerGain::new(t.coeff() * 10.0, t.exponent()).unwrap(),
                    ),
                    None => e.clone(),
                }
            })
            .collect();
        let bad = PhiMap::new(2, inflated).unwrap();
        let report = verify_omega_condition(&gm, &path, &bad);
        assert!(!report.pass);
        assert!(report.violation.is_some());
    }

    #[test]
    fn verify_trivial_zero_gains() {
        let gm = GainMatrix::zeros(2);
        let path = OmegaPath::from_parts(
            vec![PowerGain::identity(), pg(2.0, 1.0)],
            PathProvenance::UserSupplied,
        );
        let report = verify_omega_condition(&gm, &path, &PhiMap::zeros(2));
        assert!(report.pass);
        assert!(report.violation.is_none());
    }
}
