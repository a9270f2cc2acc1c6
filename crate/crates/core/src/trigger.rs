//! Triggering threshold synthesis and the three event-triggered schemes.
//!
//! All thresholds are exact compositions inside the power-gain family:
//!
//! - `η̂_j = max_{i∈Z(j)} φ_ij⁻¹ ∘ η_ij` — the error level subsystem `j`
//!   may carry without breaking the coupled path inequality,
//! - `χ_j = σ_j ∘ η̂_j` — the basic trigger threshold compared against `V_j`,
//! - `ψ_j = max_{i≠j} σ_i⁻¹ ∘ α_{i1}` — scales the foreign-state estimate
//!   `W` used by the parsimonious scheme.
//!
//! The basic scheme fires when `χ_i(‖e_i‖) ≥ V_i(x_i)`; the practical scheme
//! adds a dead band of radius `ĉ` (trading asymptotic for practical
//! stability but bounding inter-event times away from zero); the
//! parsimonious scheme suppresses broadcasts whose local error is provably
//! negligible against a lower bound on the other subsystems' magnitude.

use crate::gainalg::{GainExpr, GainMatrix, PowerGain};
use crate::omega::{OmegaPath, PhiMap};
use crate::plant::{LinearGains, LinearPlant, LyapunovData};
use crate::{Error, Result};

/// Synthesized per-subsystem threshold functions.
#[derive(Debug, Clone)]
pub struct ThresholdSet {
    chi: Vec<GainExpr>,
    eta_hat: Vec<GainExpr>,
    psi: Vec<GainExpr>,
    psi_inv: Vec<Vec<PowerGain>>,
    c: Vec<f64>,
    c_hat: f64,
}

impl ThresholdSet {
    pub fn n(&self) -> usize {
        self.chi.len()
    }

    pub fn chi(&self, i: usize) -> &GainExpr {
        &self.chi[i]
    }

    pub fn eta_hat(&self, i: usize) -> &GainExpr {
        &self.eta_hat[i]
    }

    pub fn psi(&self, i: usize) -> &GainExpr {
        &self.psi[i]
    }

    pub fn practical_constants(&self) -> &[f64] {
        &self.c
    }

    /// The scalar dead-band level `ĉ = max_i{c_i, σ_i⁻¹(c_i)}`.
    pub fn c_hat(&self) -> f64 {
        self.c_hat
    }

    /// Validates that the practical scheme can run (all `c_i > 0`).
    pub fn require_practical(&self) -> Result<()> {
        for (i, &ci) in self.c.iter().enumerate() {
            if !(ci.is_finite() && ci > 0.0) {
                return Err(Error::NonPositivePracticalConstant { i, value: ci });
            }
        }
        Ok(())
    }

    /// `ψ_i⁻¹(y)` evaluated pointwise (`min` of the term inverses).
    #[inline]
    pub fn psi_inverse(&self, i: usize, y: f64) -> f64 {
        let terms = &self.psi_inv[i];
        debug_assert!(!terms.is_empty(), "psi is the zero function");
        terms
            .iter()
            .map(|t| t.eval(y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `ψ_i` is invertible (always true for two or more subsystems).
    pub fn psi_invertible(&self, i: usize) -> bool {
        !self.psi_inv[i].is_empty()
    }
}

/// Builds the threshold set from the certified path data.
///
/// `c` supplies the practical-scheme constants; `None` (or zeros) selects
/// the basic/parsimonious schemes.
pub fn compute_thresholds(
    gamma: &GainMatrix,
    eta: &[GainExpr],
    sigma: &OmegaPath,
    phi: &PhiMap,
    lyap: &LyapunovData,
    c: Option<Vec<f64>>,
) -> Result<ThresholdSet> {
    let n = gamma.n();
    if eta.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: eta.len(),
            context: "eta entries",
        });
    }
    if sigma.n() != n || phi.n() != n || lyap.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sigma.n().min(phi.n()).min(lyap.n()),
            context: "threshold inputs",
        });
    }

    let mut eta_hat = Vec::with_capacity(n);
    let mut chi = Vec::with_capacity(n);
    for j in 0..n {
        // Z(j) = { i : eta_ij != 0 }; the empty max is the zero function.
        let mut terms = Vec::new();
        for i in 0..n {
            let eta_ij = &eta[i * n + j];
            if eta_ij.is_zero() {
                continue;
            }
            let phi_ij = phi.entry(i, j);
            let phi_inv = phi_ij.invert().map_err(|_| {
                Error::ThresholdConstruction(format!(
                    "phi[{i}][{j}] is not invertible against nonzero eta[{i}][{j}]"
                ))
            })?;
            terms.extend_from_slice(eta_ij.compose_outer(&phi_inv).terms());
        }
        let eh = GainExpr::from_terms(terms);
        chi.push(eh.compose_outer(sigma.component(j)));
        eta_hat.push(eh);
    }

    let mut psi = Vec::with_capacity(n);
    let mut psi_inv = Vec::with_capacity(n);
    for j in 0..n {
        let mut terms = Vec::new();
        for i in 0..n {
            if i == j {
                continue;
            }
            let sigma_inv = sigma.component(i).invert()?;
            terms.push(sigma_inv.compose(lyap.alpha1(i)));
        }
        let p = GainExpr::from_terms(terms);
        psi_inv.push(p.inverse_terms().unwrap_or_default());
        psi.push(p);
    }

    let c = c.unwrap_or_else(|| vec![0.0; n]);
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.len(),
            context: "practical constants",
        });
    }
    if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::ThresholdConstruction(
            "practical constants must be finite and nonnegative".into(),
        ));
    }
    let c_hat = c
        .iter()
        .enumerate()
        .map(|(i, &ci)| ci.max(sigma.eval_inverse(i, ci)))
        .fold(0.0_f64, f64::max);

    Ok(ThresholdSet { chi, eta_hat, psi, psi_inv, c, c_hat })
}

/// Basic trigger value `T_i = χ_i(‖e_i‖) − V_i(x_i)`; the scheme fires on
/// `T_i ≥ 0` (the rest-at-zero rule is applied by the simulator).
#[inline]
pub fn eval_basic(ts: &ThresholdSet, lyap: &LyapunovData, i: usize, x_i: &[f64], e_i: &[f64]) -> f64 {
    let e_norm = norm(e_i);
    ts.chi[i].eval(e_norm) - lyap.v(i, x_i)
}

/// Practical trigger value
/// `T_i = η̂_i(‖e_i‖) − max{σ_i⁻¹(V_i(x_i)), ĉ}`; fires on `T_i ≥ 0`.
///
/// The error must climb from zero past `η̂_i⁻¹(ĉ) > 0` before the trigger
/// can fire, which bounds inter-event times away from zero.
#[inline]
pub fn eval_practical(
    ts: &ThresholdSet,
    sigma: &OmegaPath,
    lyap: &LyapunovData,
    i: usize,
    x_i: &[f64],
    e_i: &[f64],
) -> Result<f64> {
    if !(ts.c[i].is_finite() && ts.c[i] > 0.0) {
        return Err(Error::NonPositivePracticalConstant { i, value: ts.c[i] });
    }
    let e_norm = norm(e_i);
    let level = sigma.eval_inverse(i, lyap.v(i, x_i)).max(ts.c_hat);
    Ok(ts.eta_hat[i].eval(e_norm) - level)
}

/// Per-subsystem state for the derivative difference quotient
/// `d_i(t) = ‖x_i(t) − x_i(t_prev^i)‖ / (t − t_prev^i)`, where `t_prev^i` is
/// the subsystem's own previous trigger time.
#[derive(Debug, Clone)]
pub struct QuotientState {
    last_time: Vec<f64>,
    snapshot: Vec<Vec<f64>>,
    d: Vec<f64>,
}

impl QuotientState {
    /// Starts all quotients at `t0` with the initial broadcast state.
    pub fn new(t0: f64, x0: &[&[f64]]) -> Self {
        Self {
            last_time: vec![t0; x0.len()],
            snapshot: x0.iter().map(|s| s.to_vec()).collect(),
            d: vec![0.0; x0.len()],
        }
    }

    pub fn d(&self, i: usize) -> f64 {
        self.d[i]
    }

    pub fn last_trigger_time(&self, i: usize) -> f64 {
        self.last_time[i]
    }

    /// Recomputes and stores `d_i` at time `t > t_prev^i`.
    pub fn update_d(&mut self, i: usize, t: f64, x_i: &[f64]) -> Result<f64> {
        let stored = self.last_time[i];
        if t <= stored {
            return Err(Error::NonAdvancingTime { stored, got: t });
        }
        let mut diff2 = 0.0;
        for (a, b) in x_i.iter().zip(&self.snapshot[i]) {
            let d = a - b;
            diff2 += d * d;
        }
        let d = diff2.sqrt() / (t - stored);
        self.d[i] = d;
        Ok(d)
    }

    /// Rolls the snapshot and timestamp forward on an own-trigger at `t`.
    pub fn record_trigger(&mut self, i: usize, t: f64, x_i: &[f64]) {
        self.last_time[i] = t;
        self.snapshot[i].clear();
        self.snapshot[i].extend_from_slice(x_i);
    }
}

/// Residual of the quotient-approximation condition at a trigger time:
/// `|‖ẋ_i‖ − d_i| − κ̃_i‖x_i‖`. Positive values mean the condition failed at
/// the configured slack; the simulator logs them per event.
#[inline]
pub fn quotient_residual(d: f64, xdot_norm: f64, x_norm: f64, kappa_tilde: f64) -> f64 {
    (xdot_norm - d).abs() - kappa_tilde * x_norm
}

/// Linear bound `Θ_j(n_1, …, n_N) = Σ_k c_jk n_k` on `‖f_j‖`, valid whenever
/// the other subsystems' errors are dominated by the overall Lyapunov level.
///
/// The locally known `‖e_j‖` enters separately through `b_j` and is
/// subtracted inside the `W` computation instead of being bounded away.
#[derive(Debug, Clone)]
pub struct ThetaBound {
    n: usize,
    c: Vec<f64>,
    b: Vec<f64>,
    kappa_tilde: Vec<f64>,
}

impl ThetaBound {
    pub fn new(n: usize, c: Vec<f64>, b: Vec<f64>, kappa_tilde: Vec<f64>) -> Result<Self> {
        if c.len() != n * n || b.len() != n || kappa_tilde.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: c.len(),
                context: "theta coefficients",
            });
        }
        if c.iter().chain(&b).chain(&kappa_tilde).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::ThresholdConstruction(
                "theta coefficients must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { n, c, b, kappa_tilde })
    }

    /// Derives the bound for a linear plant:
    /// `‖f_j‖ ≤ Σ_k ‖Ā_jk‖‖x_k‖ + ‖B̄_jj‖‖e_j‖ + Σ_{i≠j} ‖B̄_ji‖‖e_i‖`,
    /// with each foreign error bounded through
    /// `‖e_i‖ ≤ η̂_i⁻¹(V(x)) ≤ max_k (η̂_i⁻¹∘σ_k⁻¹∘α_{k2})(‖x_k‖)` — a linear
    /// power composition — and the max relaxed to a sum.
    pub fn for_linear(
        plant: &LinearPlant,
        gains: &LinearGains,
        sigma: &OmegaPath,
        ts: &ThresholdSet,
        kappa_tilde: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = plant.n();
        let kappa_tilde = kappa_tilde.unwrap_or_else(|| vec![0.0; n]);
        let mut c = vec![0.0; n * n];
        let mut b = vec![0.0; n];

        // foreign_coef[i][k]: coefficient of ||x_k|| bounding ||e_i||.
        let mut foreign_coef = vec![0.0; n * n];
        for i in 0..n {
            if ts.eta_hat(i).is_zero() {
                // Nobody listens to i, so no B-bar column touches e_i.
                continue;
            }
            for k in 0..n {
                let mut best = f64::INFINITY;
                for term in ts.eta_hat(i).terms() {
                    let comp = term
                        .invert()?
                        .compose(&sigma.component(k).invert()?)
                        .compose(gains.lyap.alpha2(k));
                    if (comp.exponent() - 1.0).abs() > 1e-9 {
                        return Err(Error::ThresholdConstruction(format!(
                            "theta bound requires linear compositions; got exponent {} \
                             for subsystems ({i},{k})",
                            comp.exponent()
                        )));
                    }
                    best = best.min(comp.coeff());
                }
                foreign_coef[i * n + k] = best;
            }
        }

        for j in 0..n {
            b[j] = crate::plant::spectral_norm(plant.bbar_block(j, j));
            for k in 0..n {
                let mut cjk = crate::plant::spectral_norm(plant.abar_block(j, k));
                for i in 0..n {
                    if i == j {
                        continue;
                    }
                    let bji = crate::plant::spectral_norm(plant.bbar_block(j, i));
                    if bji > 0.0 {
                        cjk += bji * foreign_coef[i * n + k];
                    }
                }
                c[j * n + k] = cjk;
            }
        }
        Self::new(n, c, b, kappa_tilde)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coefficient(&self, j: usize, k: usize) -> f64 {
        self.c[j * self.n + k]
    }

    pub fn local_error_coefficient(&self, j: usize) -> f64 {
        self.b[j]
    }

    pub fn kappa_tilde(&self, j: usize) -> f64 {
        self.kappa_tilde[j]
    }

    /// Lipschitz constant `L_j = Σ_k c_jk`.
    pub fn lipschitz(&self, j: usize) -> f64 {
        (0..self.n).map(|k| self.coefficient(j, k)).sum()
    }

    /// Evaluates `Θ_j` on a vector of subsystem state norms.
    pub fn theta(&self, j: usize, norms: &[f64]) -> f64 {
        norms
            .iter()
            .enumerate()
            .map(|(k, &v)| self.coefficient(j, k) * v)
            .sum()
    }
}

/// Result of the foreign-state lower bound `W(j, x_j, d_j)`.
#[derive(Debug, Clone, Copy)]
pub struct WValue {
    pub value: f64,
    /// Set when all off-diagonal coefficients of `Θ_j` vanish, making the
    /// suppression condition vacuous for this subsystem.
    pub decoupled: bool,
}

/// Closed form of
/// `W(j,x_j,d_j) = min{ max_{k≠j}‖ξ_k‖ : Θ_j(ξ; x_j) + b_j‖e_j‖ ≥ d_j − κ̃_j‖x_j‖ }`:
/// the min-max over the linear constraint set is attained with all free
/// norms equal, so
/// `W = max(0, (d_j − κ̃_j‖x_j‖ − c_jj‖x_j‖ − b_j‖e_j‖) / Σ_{k≠j} c_jk)`.
pub fn compute_w(theta: &ThetaBound, j: usize, x_j_norm: f64, e_j_norm: f64, d_j: f64) -> WValue {
    let n = theta.n();
    let denom: f64 = (0..n)
        .filter(|&k| k != j)
        .map(|k| theta.coefficient(j, k))
        .sum();
    if denom <= 0.0 {
        return WValue { value: 0.0, decoupled: true };
    }
    let slack = d_j
        - theta.kappa_tilde(j) * x_j_norm
        - theta.coefficient(j, j) * x_j_norm
        - theta.local_error_coefficient(j) * e_j_norm;
    WValue { value: (slack / denom).max(0.0), decoupled: false }
}

/// Parsimonious trigger evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ParsimoniousEval {
    /// `T_{i1} = χ_i(‖e_i‖) − V_i(x_i)`.
    pub t1: f64,
    /// `T_{i2} = ψ_i⁻¹∘η̂_i(‖e_i‖) − W(i, x_i, d_i)`; not evaluated when
    /// `T_{i1} < 0` (the cheap check runs first).
    pub t2: Option<f64>,
    /// Propagated from [`compute_w`].
    pub decoupled: bool,
}

impl ParsimoniousEval {
    /// The scheme fires only when both parts are nonnegative.
    pub fn fires(&self) -> bool {
        self.t1 >= 0.0 && self.t2.is_some_and(|t2| t2 >= 0.0)
    }

    /// `min{T_{i1}, T_{i2}}` where evaluated.
    pub fn value(&self) -> f64 {
        match self.t2 {
            Some(t2) => self.t1.min(t2),
            None => self.t1,
        }
    }

    /// A broadcast the basic scheme would have made was suppressed.
    pub fn suppressed(&self) -> bool {
        self.t1 >= 0.0 && self.t2.is_some_and(|t2| t2 < 0.0)
    }
}

/// Evaluates the parsimonious trigger
/// `T_i = min{T_{i1}, T_{i2}}` with `T_{i1}` checked first.
pub fn eval_parsimonious(
    ts: &ThresholdSet,
    theta: &ThetaBound,
    lyap: &LyapunovData,
    i: usize,
    x_i: &[f64],
    e_i: &[f64],
    d_i: f64,
) -> ParsimoniousEval {
    let t1 = eval_basic(ts, lyap, i, x_i, e_i);
    if t1 < 0.0 {
        return ParsimoniousEval { t1, t2: None, decoupled: false };
    }
    let x_norm = norm(x_i);
    let e_norm = norm(e_i);
    let w = compute_w(theta, i, x_norm, e_norm, d_i);
    let lhs = ts.psi_inverse(i, ts.eta_hat(i).eval(e_norm));
    ParsimoniousEval { t1, t2: Some(lhs - w.value), decoupled: w.decoupled }
}

#[inline]
fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::verification_grid;
    use crate::plant::builtin_nonlinear_example;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn benchmark_thresholds(k: f64) -> (ThresholdSet, LyapunovData, OmegaPath) {
        let b = builtin_nonlinear_example(k, None).unwrap();
        let ts = compute_thresholds(&b.gamma, &b.eta, &b.sigma, &b.phi, &b.lyap, None).unwrap();
        (ts, b.lyap, b.sigma)
    }

    #[test]
    fn benchmark_threshold_closed_forms() {
        let (ts, _, _) = benchmark_thresholds(64.0);
        // chi_1 = r^2 / (sqrt(8) sigma_bar) with sigma_bar = 1/8
        let chi1 = ts.chi(0).as_single_term().unwrap();
        assert_relative_eq!(chi1.coeff(), 8.0 / 8.0_f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(chi1.exponent(), 2.0);
        // chi_2 = sigma_bar^2 k^2 / 4 * r^2 = 16 r^2
        let chi2 = ts.chi(1).as_single_term().unwrap();
        assert_relative_eq!(chi2.coeff(), 16.0, epsilon = 1e-10);
        assert_relative_eq!(chi2.exponent(), 2.0);
        // psi_1 = sigma_2^{-1} o alpha_21 = r / (sqrt(2) sigma_bar)
        let psi1 = ts.psi(0).as_single_term().unwrap();
        assert_relative_eq!(psi1.coeff(), 8.0 / 2.0_f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(psi1.exponent(), 1.0);
        // basic thresholds: zero practical constants
        assert_eq!(ts.c_hat(), 0.0);
    }

    #[test]
    fn empty_recipient_set_gives_zero_chi() {
        // eta column 2 all zero: subsystem 2 broadcasts to nobody.
        let b = builtin_nonlinear_example(64.0, None).unwrap();
        let mut eta = b.eta.clone();
        eta[3] = GainExpr::zero(); // remove eta_22
        let ts = compute_thresholds(&b.gamma, &eta, &b.sigma, &b.phi, &b.lyap, None).unwrap();
        assert!(ts.chi(1).is_zero());
        assert!(ts.eta_hat(1).is_zero());
        assert!(!ts.chi(0).is_zero());
    }

    #[test]
    fn non_invertible_phi_is_rejected() {
        let b = builtin_nonlinear_example(64.0, None).unwrap();
        let phi = PhiMap::zeros(2); // zero phi against nonzero eta
        let err = compute_thresholds(&b.gamma, &b.eta, &b.sigma, &phi, &b.lyap, None);
        assert!(matches!(err, Err(Error::ThresholdConstruction(_))));
    }

    #[test]
    fn closed_forms_match_pointwise_composition() {
        let b = builtin_nonlinear_example(64.0, None).unwrap();
        let ts = compute_thresholds(&b.gamma, &b.eta, &b.sigma, &b.phi, &b.lyap, None).unwrap();
        for &r in &verification_grid() {
            // eta_hat_1 pointwise: phi_11^{-1}(eta_11(r))
            let direct = b.phi.entry(0, 0).invert().unwrap().eval(b.eta[0].eval(r));
            let symbolic = ts.eta_hat(0).eval(r);
            assert_relative_eq!(direct, symbolic, max_relative = 1e-10);
            // chi_2 pointwise: sigma_2(eta_hat_2(r))
            let direct = b.sigma.component(1).eval(ts.eta_hat(1).eval(r));
            assert_relative_eq!(direct, ts.chi(1).eval(r), max_relative = 1e-10);
        }
        // zero at zero, strictly increasing where nonzero
        for i in 0..2 {
            assert_eq!(ts.chi(i).eval(0.0), 0.0);
            assert!(ts.chi(i).eval(1.0) < ts.chi(i).eval(1.0 + 1e-9));
        }
    }

    #[test]
    fn eval_basic_examples() {
        let (ts, lyap, _) = benchmark_thresholds(64.0);
        // e = 0, x != 0: no trigger.
        let t = eval_basic(&ts, &lyap, 0, &[2.0], &[0.0]);
        assert_relative_eq!(t, -2.0, epsilon = 1e-12); // -V = -x^2/2

        // x = 0, e = 0: T = 0 (the simulator's rest-at-zero rule suppresses it).
        let t = eval_basic(&ts, &lyap, 0, &[0.0], &[0.0]);
        assert_eq!(t, 0.0);

        // Subsystem 2 with x2 = 1, e2 = 0.3: 16*0.09 - 0.5 = 0.94, fires.
        let t = eval_basic(&ts, &lyap, 1, &[1.0], &[0.3]);
        assert_relative_eq!(t, 0.94, epsilon = 1e-10);
        assert!(t >= 0.0);
    }

    #[test]
    fn eval_practical_examples() {
        let b = builtin_nonlinear_example(64.0, None).unwrap();
        let c = vec![0.05, 0.05];
        let ts = compute_thresholds(&b.gamma, &b.eta, &b.sigma, &b.phi, &b.lyap, Some(c)).unwrap();
        ts.require_practical().unwrap();
        // c_hat = max{0.05, sigma_2^{-1}(0.05) = sqrt(0.05)/sigma_bar}
        assert_relative_eq!(ts.c_hat(), 8.0 * 0.05_f64.sqrt(), epsilon = 1e-12);

        // e = 0: strictly negative.
        let t = eval_practical(&ts, &b.sigma, &b.lyap, 0, &[1.0], &[0.0]).unwrap();
        assert!(t < 0.0);

        // Dead band: x = 0, error below the floor stays silent.
        let eta_hat_inv_chat = ts.eta_hat(0).eval_inverse(ts.c_hat()).unwrap();
        let t = eval_practical(&ts, &b.sigma, &b.lyap, 0, &[0.0], &[eta_hat_inv_chat * 0.9])
            .unwrap();
        assert!(t < 0.0);
        let t = eval_practical(&ts, &b.sigma, &b.lyap, 0, &[0.0], &[eta_hat_inv_chat * 1.1])
            .unwrap();
        assert!(t >= 0.0);

        // Zero constants are rejected.
        let ts0 = compute_thresholds(&b.gamma, &b.eta, &b.sigma, &b.phi, &b.lyap, None).unwrap();
        assert!(matches!(
            eval_practical(&ts0, &b.sigma, &b.lyap, 0, &[1.0], &[0.0]),
            Err(Error::NonPositivePracticalConstant { .. })
        ));
    }

    #[test]
    fn practical_fire_point_closed_form() {
        // Scalar subsystems with sigma = id and eta_hat(r) = r^2: fires
        // exactly at ||e|| = max{V, c}^{1/2}.
        use crate::gainalg::MAFKind;
        let gamma = GainMatrix::new(
            2,
            vec![GainExpr::zero(); 4],
            vec![MAFKind::Max, MAFKind::Max],
        )
        .unwrap();
        let eta = vec![
            GainExpr::from_term(PowerGain::new(1.0, 2.0).unwrap()),
            GainExpr::zero(),
            GainExpr::zero(),
            GainExpr::from_term(PowerGain::new(1.0, 2.0).unwrap()),
        ];
        let sigma = OmegaPath::user_supplied(vec![PowerGain::identity(); 2]).unwrap();
        let phi = PhiMap::new(
            2,
            vec![
                GainExpr::from_term(PowerGain::identity()),
                GainExpr::zero(),
                GainExpr::zero(),
                GainExpr::from_term(PowerGain::identity()),
            ],
        )
        .unwrap();
        let b = builtin_nonlinear_example(64.0, None).unwrap(); // reuse half-square V
        let ts =
            compute_thresholds(&gamma, &eta, &sigma, &phi, &b.lyap, Some(vec![0.01, 0.01]))
                .unwrap();
        assert_relative_eq!(ts.c_hat(), 0.01);
        let x = [0.1_f64];
        let v = b.lyap.v(0, &x);
        let fire_at = v.max(0.01).sqrt();
        let below = eval_practical(&ts, &sigma, &b.lyap, 0, &x, &[fire_at * 0.999]).unwrap();
        let above = eval_practical(&ts, &sigma, &b.lyap, 0, &x, &[fire_at * 1.001]).unwrap();
        assert!(below < 0.0 && above > 0.0);
    }

    #[test]
    fn quotient_state_updates() {
        let x0 = [1.0, 2.0];
        let mut qs = QuotientState::new(0.0, &[&x0[0..1], &x0[1..2]]);
        // Constant state: d = 0.
        assert_relative_eq!(qs.update_d(0, 0.5, &[1.0]).unwrap(), 0.0);
        // Linear motion: d = |v|.
        let v = -3.0;
        let t = 0.25;
        assert_relative_eq!(qs.update_d(1, t, &[2.0 + v * t]).unwrap(), v.abs(), epsilon = 1e-12);
        // Roll forward on trigger, then a fresh quotient.
        qs.record_trigger(0, 0.5, &[4.0]);
        assert_relative_eq!(qs.update_d(0, 1.0, &[5.0]).unwrap(), 2.0, epsilon = 1e-12);
        // Non-advancing time is an error.
        assert!(matches!(
            qs.update_d(0, 0.5, &[4.0]),
            Err(Error::NonAdvancingTime { .. })
        ));
    }

    #[test]
    fn quotient_residual_monitor() {
        assert_relative_eq!(quotient_residual(3.0, 3.5, 2.0, 0.0), 0.5);
        assert_relative_eq!(quotient_residual(3.0, 3.5, 2.0, 1.0), -1.5);
    }

    #[test]
    fn compute_w_examples() {
        // c = (1,1,1) rows, j = 0, ||x|| = 0, e = 0, d = 4 -> W = 4/2 = 2.
        let theta = ThetaBound::new(3, vec![1.0; 9], vec![0.0; 3], vec![0.0; 3]).unwrap();
        let w = compute_w(&theta, 0, 0.0, 0.0, 4.0);
        assert!(!w.decoupled);
        assert_relative_eq!(w.value, 2.0);

        // Inactive constraint: d below the locally explained level.
        let w = compute_w(&theta, 0, 10.0, 0.0, 4.0);
        assert_relative_eq!(w.value, 0.0);

        // Decoupled row.
        let mut c = vec![0.0; 9];
        c[0] = 1.0;
        let theta = ThetaBound::new(3, c, vec![0.0; 3], vec![0.0; 3]).unwrap();
        let w = compute_w(&theta, 0, 0.0, 0.0, 4.0);
        assert!(w.decoupled);
        assert_relative_eq!(w.value, 0.0);
    }

    /// Brute-force minimization of `max_{k≠j} ‖ξ_k‖` over the constraint
    /// set: every free coordinate sweeps its own 50-point grid and all
    /// combinations are checked for feasibility. Returns the minimum along
    /// with the grid resolution.
    fn brute_force_w(
        theta: &ThetaBound,
        j: usize,
        x_norm: f64,
        e_norm: f64,
        d: f64,
    ) -> (f64, f64) {
        let n = theta.n();
        let target = d - theta.kappa_tilde(j) * x_norm - theta.local_error_coefficient(j) * e_norm;
        let own = theta.coefficient(j, j) * x_norm;
        let free: Vec<usize> = (0..n).filter(|&k| k != j).collect();
        let denom: f64 = free.iter().map(|&k| theta.coefficient(j, k)).sum();
        let hi = (2.0 * (target - own).max(0.0) / denom).max(0.1);
        let pts = 50usize;
        let step = hi / (pts - 1) as f64;

        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; free.len()];
        loop {
            let mut theta_val = own;
            let mut maxi = 0.0_f64;
            for (slot, &k) in free.iter().enumerate() {
                let v = idx[slot] as f64 * step;
                theta_val += theta.coefficient(j, k) * v;
                maxi = maxi.max(v);
            }
            if theta_val >= target {
                best = best.min(maxi);
            }
            // odometer increment
            let mut slot = 0;
            loop {
                if slot == idx.len() {
                    return (best, step);
                }
                idx[slot] += 1;
                if idx[slot] < pts {
                    break;
                }
                idx[slot] = 0;
                slot += 1;
            }
        }
    }

    #[test]
    fn compute_w_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..200 {
            let n = rng.random_range(2..=4);
            let c: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.05..3.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
            let kt: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
            let theta = ThetaBound::new(n, c, b, kt).unwrap();
            let j = rng.random_range(0..n);
            let x_norm = rng.random_range(0.0..5.0);
            let e_norm = rng.random_range(0.0..2.0);
            let d = rng.random_range(0.0..20.0);
            let closed = compute_w(&theta, j, x_norm, e_norm, d).value;
            let (brute, resolution) = brute_force_w(&theta, j, x_norm, e_norm, d);
            assert!(
                (closed - brute).abs() <= resolution,
                "closed {closed} vs brute {brute} (resolution {resolution})"
            );
        }
    }

    #[test]
    fn parsimonious_min_semantics_and_suppression() {
        let (ts, lyap, _) = benchmark_thresholds(64.0);
        let theta = ThetaBound::new(
            2,
            vec![1.0, 1.0, 1.0, 1.0],
            vec![0.5, 0.5],
            vec![0.0, 0.0],
        )
        .unwrap();

        // T1 < 0 short-circuits T2.
        let ev = eval_parsimonious(&ts, &theta, &lyap, 0, &[2.0], &[0.0], 100.0);
        assert!(ev.t1 < 0.0 && ev.t2.is_none() && !ev.fires());
        assert_relative_eq!(ev.value(), ev.t1);

        // e = 0, x != 0: both parts negative / unevaluated.
        let ev = eval_parsimonious(&ts, &theta, &lyap, 1, &[1.0], &[0.0], 0.0);
        assert!(!ev.fires());

        // Large d with a tiny own state: basic would fire, W suppresses.
        let ev = eval_parsimonious(&ts, &theta, &lyap, 0, &[1e-4], &[1e-3], 50.0);
        assert!(ev.t1 >= 0.0, "t1 = {}", ev.t1);
        assert!(ev.suppressed(), "t2 = {:?}", ev.t2);

        // Same error with no foreign-state evidence fires.
        let ev = eval_parsimonious(&ts, &theta, &lyap, 0, &[1e-4], &[1e-3], 0.0);
        assert!(ev.fires());
    }
}
