//! Interconnected system models: linear interconnections with derived
//! Lyapunov/gain data, a certified random-instance generator, and the
//! built-in two-subsystem nonlinear benchmark.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::gainalg::{spectral_radius, CouplingGraph, GainExpr, GainMatrix, MAFKind, PowerGain};
use crate::omega::{OmegaPath, PathProvenance, PhiMap};
use crate::{Error, Result};

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    m.singular_values().max()
}

fn sym_eig_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.symmetric_eigenvalues();
    (ev.min(), ev.max())
}

fn is_hurwitz(m: &DMatrix<f64>) -> std::result::Result<(), f64> {
    let max_re = m
        .complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_re < -1e-12 {
        Ok(())
    } else {
        Err(max_re)
    }
}

/// Solves `Ā⊤P + PĀ = −Q` for symmetric positive definite `P`.
///
/// Matrix-sign iteration with determinant scaling: `A_k → −I` quadratically
/// for Hurwitz `Ā` while the accumulated congruence drives `Q_k → 2P`.
pub fn solve_lyapunov(abar: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = abar.nrows();
    if abar.ncols() != n {
        return Err(Error::NonSquare { rows: n, cols: abar.ncols() });
    }
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.nrows(),
            context: "lyapunov right-hand side",
        });
    }
    if let Err(max_re) = is_hurwitz(abar) {
        return Err(Error::NotHurwitz { max_re });
    }
    if (q - q.transpose()).amax() > 1e-10 * q.amax().max(1.0) {
        return Err(Error::NotPositiveDefinite("Q must be symmetric"));
    }
    let (qmin, _) = sym_eig_bounds(q);
    if qmin <= 0.0 {
        return Err(Error::NotPositiveDefinite("Q must be positive definite"));
    }

    let mut a_k = abar.clone();
    let mut q_k = q.clone();
    let identity = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    for _ in 0..100 {
        let lu = a_k.clone().lu();
        let det: f64 = lu.determinant();
        let inv = lu
            .try_inverse()
            .ok_or(Error::LyapunovNoConvergence { residual: f64::INFINITY })?;
        let c = det.abs().powf(1.0 / n as f64).max(1e-300);
        let a_next = (&a_k / c + &inv * c) * 0.5;
        q_k = (&q_k / c + inv.transpose() * &q_k * &inv * c) * 0.5;
        let delta = (&a_next - &a_k).amax();
        a_k = a_next;
        if delta <= 1e-14 * a_k.amax().max(1.0) && (&a_k + &identity).amax() < 1e-6 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::LyapunovNoConvergence { residual: f64::INFINITY });
    }
    let mut p = q_k * 0.5;
    // Symmetrize away iteration drift.
    p = (&p + p.transpose()) * 0.5;

    let residual = (abar.transpose() * &p + &p * abar + q).norm();
    if residual > 1e-8 * q.norm() {
        return Err(Error::LyapunovNoConvergence { residual });
    }
    if p.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("computed P failed Cholesky"));
    }
    Ok(p)
}

/// Stabilizing feedback for `(A, B)`: the continuous-time LQR gain with
/// identity weights, solved by Newton–Kleinman iteration seeded with a Bass
/// stabilizer. Falls back to exact eigenvalue placement at `−1, …, −n`
/// through `B⁻¹` when the Riccati route fails.
pub fn stabilizing_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NonSquare { rows: n, cols: a.ncols() });
    }
    match lqr_identity(a, b) {
        Ok(k) => Ok(k),
        Err(_) => placement_fallback(a, b),
    }
}

fn lqr_identity(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let identity = DMatrix::<f64>::identity(n, n);

    // Bass initializer: with beta > rho(A), M = -(A + beta I) is Hurwitz and
    // M P + P M^T = -2BB^T yields K0 = -B^T P^{-1} stabilizing.
    let beta = a.norm() + 0.5;
    let m = -(a + &identity * beta);
    let bbt = b * b.transpose() * 2.0 + &identity * 1e-10;
    let p0 = solve_lyapunov(&m.transpose(), &bbt)?;
    let p0_inv = p0
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::StabilizationFailed("Bass Gramian is singular".into()))?;
    let mut k = -(b.transpose() * p0_inv);

    if let Err(max_re) = is_hurwitz(&(a + b * &k)) {
        return Err(Error::StabilizationFailed(format!(
            "Bass initializer not stabilizing (max Re {max_re})"
        )));
    }

    // Newton-Kleinman on the Riccati equation with Q = R = I.
    for _ in 0..60 {
        let a_cl = a + b * &k;
        let rhs = &identity + k.transpose() * &k;
        let x = solve_lyapunov(&a_cl, &rhs)?;
        let k_next = -(b.transpose() * &x);
        let delta = (&k_next - &k).amax();
        k = k_next;
        if delta <= 1e-11 * (1.0 + k.amax()) {
            break;
        }
    }
    if let Err(max_re) = is_hurwitz(&(a + b * &k)) {
        return Err(Error::StabilizationFailed(format!(
            "Newton-Kleinman gain not stabilizing (max Re {max_re})"
        )));
    }
    Ok(k)
}

fn placement_fallback(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::StabilizationFailed(
            "placement fallback needs square B".into(),
        ));
    }
    let b_inv = b
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::StabilizationFailed("B is singular".into()))?;
    let target = DMatrix::from_fn(n, n, |i, j| if i == j { -((i + 1) as f64) } else { 0.0 });
    // A + BK = target  =>  K = B^{-1} (target - A)
    let k = b_inv * (target - a);
    is_hurwitz(&(a + b * &k))
        .map_err(|re| Error::StabilizationFailed(format!("placement failed (max Re {re})")))?;
    Ok(k)
}

/// Per-subsystem Lyapunov data: sandwich bounds, decrease rates, and the
/// evaluator for `V_i`.
#[derive(Debug, Clone)]
pub struct LyapunovData {
    alpha1: Vec<PowerGain>,
    alpha2: Vec<PowerGain>,
    decrease: Vec<PowerGain>,
    form: VForm,
}

#[derive(Debug, Clone)]
enum VForm {
    /// `V_i(x_i) = x_i⊤ P_i x_i`.
    Quadratic(Vec<DMatrix<f64>>),
    /// `V_i(x_i) = x_i²/2` (scalar subsystems).
    HalfSquare,
}

impl LyapunovData {
    pub fn n(&self) -> usize {
        self.alpha1.len()
    }

    /// Lower sandwich bound `α_{i1}` (`α_{i1}(‖x_i‖) ≤ V_i(x_i)`).
    pub fn alpha1(&self, i: usize) -> &PowerGain {
        &self.alpha1[i]
    }

    /// Upper sandwich bound `α_{i2}`.
    pub fn alpha2(&self, i: usize) -> &PowerGain {
        &self.alpha2[i]
    }

    /// Certified decrease rate `α_i`.
    pub fn decrease_rate(&self, i: usize) -> &PowerGain {
        &self.decrease[i]
    }

    /// Evaluates `V_i` on the subsystem state slice.
    #[inline]
    pub fn v(&self, i: usize, x_i: &[f64]) -> f64 {
        match &self.form {
            VForm::Quadratic(mats) => {
                let p = &mats[i];
                let d = p.nrows();
                debug_assert_eq!(x_i.len(), d);
                let mut acc = 0.0;
                for r in 0..d {
                    let mut row = 0.0;
                    for c in 0..d {
                        row += p[(r, c)] * x_i[c];
                    }
                    acc += row * x_i[r];
                }
                acc
            }
            VForm::HalfSquare => {
                debug_assert_eq!(x_i.len(), 1);
                0.5 * x_i[0] * x_i[0]
            }
        }
    }

    /// Gradient of `V_i` dotted with a direction (used by decrease
    /// certificates in tests).
    pub fn grad_dot(&self, i: usize, x_i: &[f64], dir: &[f64]) -> f64 {
        match &self.form {
            VForm::Quadratic(mats) => {
                let p = &mats[i];
                let d = p.nrows();
                let mut acc = 0.0;
                // grad = 2 P x
                for r in 0..d {
                    let mut row = 0.0;
                    for c in 0..d {
                        row += p[(r, c)] * x_i[c];
                    }
                    acc += 2.0 * row * dir[r];
                }
                acc
            }
            VForm::HalfSquare => x_i[0] * dir[0],
        }
    }
}

/// A linear interconnection `ẋ_i = Σ_j Ā_ij x_j + Σ_j B̄_ij e_j` with
/// per-subsystem Lyapunov certificates `V_i(x_i) = x_i⊤ P_i x_i`.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
    abar: Vec<DMatrix<f64>>,
    bbar: Vec<DMatrix<f64>>,
    abar_full: DMatrix<f64>,
    bbar_full: DMatrix<f64>,
    p: Vec<DMatrix<f64>>,
    q: Vec<DMatrix<f64>>,
    c_tilde: Vec<f64>,
}

impl LinearPlant {
    /// Builds and validates a plant from closed-loop blocks.
    ///
    /// Checks each `Ā_ii` Hurwitz, each `Q_i` symmetric positive definite,
    /// `0 < c̃_i < λ_min(Q_i)`, and solves the Lyapunov equations for `P_i`.
    pub fn new(
        dims: Vec<usize>,
        abar: Vec<DMatrix<f64>>,
        bbar: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        c_tilde: Vec<f64>,
    ) -> Result<Self> {
        let n = dims.len();
        if n == 0 {
            return Err(Error::InvalidPlant("at least one subsystem required".into()));
        }
        if abar.len() != n * n || bbar.len() != n * n {
            return Err(Error::InvalidPlant(format!(
                "expected {} blocks, got A: {}, B: {}",
                n * n,
                abar.len(),
                bbar.len()
            )));
        }
        if q.len() != n || c_tilde.len() != n {
            return Err(Error::InvalidPlant("Q / c_tilde length mismatch".into()));
        }
        for i in 0..n {
            for j in 0..n {
                for (name, block) in [("Abar", &abar[i * n + j]), ("Bbar", &bbar[i * n + j])] {
                    if block.nrows() != dims[i] || block.ncols() != dims[j] {
                        return Err(Error::InvalidPlant(format!(
                            "{name}[{i}][{j}] has shape {}x{}, expected {}x{}",
                            block.nrows(),
                            block.ncols(),
                            dims[i],
                            dims[j]
                        )));
                    }
                    if block.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidPlant(format!(
                            "{name}[{i}][{j}] contains non-finite entries"
                        )));
                    }
                }
            }
        }
        let mut p = Vec::with_capacity(n);
        for i in 0..n {
            let (qmin, _) = sym_eig_bounds(&q[i]);
            if !(c_tilde[i] > 0.0 && c_tilde[i] < qmin) {
                return Err(Error::InvalidPlant(format!(
                    "c_tilde[{i}] = {} must lie in (0, lambda_min(Q) = {qmin})",
                    c_tilde[i]
                )));
            }
            p.push(solve_lyapunov(&abar[i * n + i], &q[i])?);
        }
        let offsets: Vec<usize> = dims
            .iter()
            .scan(0usize, |acc, &d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        let total: usize = dims.iter().sum();
        let mut abar_full = DMatrix::zeros(total, total);
        let mut bbar_full = DMatrix::zeros(total, total);
        for i in 0..n {
            for j in 0..n {
                abar_full
                    .view_mut((offsets[i], offsets[j]), (dims[i], dims[j]))
                    .copy_from(&abar[i * n + j]);
                bbar_full
                    .view_mut((offsets[i], offsets[j]), (dims[i], dims[j]))
                    .copy_from(&bbar[i * n + j]);
            }
        }
        Ok(Self {
            dims,
            offsets,
            total,
            abar,
            bbar,
            abar_full,
            bbar_full,
            p,
            q,
            c_tilde,
        })
    }

    /// Builds the closed-loop blocks from open-loop data:
    /// `Ā_ij = A_ij + B_i K_ij`, `B̄_ij = B_i K_ij`.
    pub fn from_open_loop(
        dims: Vec<usize>,
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        k: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        c_tilde: Vec<f64>,
    ) -> Result<Self> {
        let n = dims.len();
        if a.len() != n * n || b.len() != n || k.len() != n * n {
            return Err(Error::InvalidPlant(
                "open-loop block counts do not match subsystem count".into(),
            ));
        }
        let mut abar = Vec::with_capacity(n * n);
        let mut bbar = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let bk = &b[i] * &k[i * n + j];
                abar.push(&a[i * n + j] + &bk);
                bbar.push(bk);
            }
        }
        Self::new(dims, abar, bbar, q, c_tilde)
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn abar_block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.abar[i * self.n() + j]
    }

    pub fn bbar_block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.bbar[i * self.n() + j]
    }

    pub fn abar_full(&self) -> &DMatrix<f64> {
        &self.abar_full
    }

    pub fn bbar_full(&self) -> &DMatrix<f64> {
        &self.bbar_full
    }

    pub fn p_matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.p[i]
    }

    pub fn q_matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.q[i]
    }

    pub fn c_tilde(&self) -> &[f64] {
        &self.c_tilde
    }
}

/// The built-in two-subsystem nonlinear benchmark
/// `ẋ₁ = x₁x₂ − x₁²x̂₁`, `ẋ₂ = x₁² − k·x̂₂` with `V_i = x_i²/2`.
#[derive(Debug, Clone, Copy)]
pub struct NonlinearPlant {
    k: f64,
}

impl NonlinearPlant {
    pub fn k(&self) -> f64 {
        self.k
    }
}

/// An interconnection model the simulator can integrate.
#[derive(Debug, Clone)]
pub enum Plant {
    Linear(LinearPlant),
    Nonlinear(NonlinearPlant),
}

impl Plant {
    pub fn n(&self) -> usize {
        match self {
            Plant::Linear(p) => p.n(),
            Plant::Nonlinear(_) => 2,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            Plant::Linear(p) => p.dims().to_vec(),
            Plant::Nonlinear(_) => vec![1, 1],
        }
    }

    pub fn offsets(&self) -> Vec<usize> {
        match self {
            Plant::Linear(p) => p.offsets().to_vec(),
            Plant::Nonlinear(_) => vec![0, 1],
        }
    }

    pub fn total_dim(&self) -> usize {
        match self {
            Plant::Linear(p) => p.total_dim(),
            Plant::Nonlinear(_) => 2,
        }
    }

    /// Writes `ẋ = f(x, g(x̂))` into `out`; `scratch` must have the full
    /// state dimension. Allocation free for use inside integration loops.
    #[inline]
    pub fn eval_dynamics_into(
        &self,
        x: &DVector<f64>,
        xhat: &DVector<f64>,
        out: &mut DVector<f64>,
        scratch: &mut DVector<f64>,
    ) {
        match self {
            Plant::Linear(p) => {
                // xdot = Abar x + Bbar (xhat - x)
                scratch.copy_from(xhat);
                *scratch -= x;
                out.gemv(1.0, &p.abar_full, x, 0.0);
                out.gemv(1.0, &p.bbar_full, scratch, 1.0);
            }
            Plant::Nonlinear(p) => {
                let (x1, x2) = (x[0], x[1]);
                out[0] = x1 * x2 - x1 * x1 * xhat[0];
                out[1] = x1 * x1 - p.k * xhat[1];
            }
        }
    }

    /// Dimension-checked dynamics evaluation.
    pub fn eval_dynamics(&self, x: &DVector<f64>, xhat: &DVector<f64>) -> Result<DVector<f64>> {
        let total = self.total_dim();
        if x.len() != total || xhat.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: x.len().min(xhat.len()),
                context: "dynamics state",
            });
        }
        let mut out = DVector::zeros(total);
        let mut scratch = DVector::zeros(total);
        self.eval_dynamics_into(x, xhat, &mut out, &mut scratch);
        Ok(out)
    }
}

/// Gain and Lyapunov data derived from a linear plant.
#[derive(Debug, Clone)]
pub struct LinearGains {
    /// The gain matrix `Γ` with sum-then-square rows.
    pub gamma: GainMatrix,
    /// Broadcast-error gains `η_ij` (row-major `n×n`).
    pub eta: Vec<GainExpr>,
    /// Coefficient matrix `G` with `γ_ij(r) = G_ij √r`.
    pub coeffs: DMatrix<f64>,
    /// Interconnection structure.
    pub graph: CouplingGraph,
    /// Per-subsystem Lyapunov data.
    pub lyap: LyapunovData,
}

/// Derives the interconnection gains from the plant's Lyapunov certificates:
/// `γ_ij(r) = (2‖P_i‖^{3/2}/c̃_i)(‖Ā_ij‖/λ_min(P_j)^{1/2}) √r` and
/// `η_ij(r) = (2‖P_i‖^{3/2}/c̃_i)‖B̄_ij‖ r`, with sum-then-square rows and
/// decrease rates `α_i(r) = (λ_min(Q_i) − c̃_i) r²`.
pub fn derive_linear_gains(plant: &LinearPlant) -> Result<LinearGains> {
    let n = plant.n();
    let p_norm: Vec<f64> = (0..n).map(|i| sym_eig_bounds(plant.p_matrix(i)).1).collect();
    let p_min: Vec<f64> = (0..n).map(|i| sym_eig_bounds(plant.p_matrix(i)).0).collect();

    let mut coeffs = DMatrix::zeros(n, n);
    let mut gamma_entries = vec![GainExpr::zero(); n * n];
    let mut eta = vec![GainExpr::zero(); n * n];
    let mut adjacency = vec![false; n * n];
    let mut sigma_sets: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut c_sets: Vec<Vec<usize>> = vec![Vec::new(); n];

    for i in 0..n {
        let lead = 2.0 * p_norm[i].powf(1.5) / plant.c_tilde()[i];
        for j in 0..n {
            let a_norm = spectral_norm(plant.abar_block(i, j));
            let b_norm = spectral_norm(plant.bbar_block(i, j));
            if a_norm > 0.0 {
                sigma_sets[i].push(j);
            }
            if b_norm > 0.0 {
                c_sets[i].push(j);
                eta[i * n + j] = GainExpr::from_term(PowerGain::new(lead * b_norm, 1.0)?);
            }
            if i != j && a_norm > 0.0 {
                let g = lead * a_norm / p_min[j].sqrt();
                coeffs[(i, j)] = g;
                gamma_entries[i * n + j] = GainExpr::from_term(PowerGain::new(g, 0.5)?);
                adjacency[i * n + j] = true;
            }
        }
    }

    let gamma = GainMatrix::new(n, gamma_entries, vec![MAFKind::SumThenSquare; n])?;
    let graph = CouplingGraph::new(n, adjacency, sigma_sets, c_sets)?;

    let mut alpha1 = Vec::with_capacity(n);
    let mut alpha2 = Vec::with_capacity(n);
    let mut decrease = Vec::with_capacity(n);
    for i in 0..n {
        alpha1.push(PowerGain::new(p_min[i], 2.0)?);
        alpha2.push(PowerGain::new(p_norm[i], 2.0)?);
        let c_i = sym_eig_bounds(plant.q_matrix(i)).0;
        decrease.push(PowerGain::new(c_i - plant.c_tilde()[i], 2.0)?);
    }
    let lyap = LyapunovData {
        alpha1,
        alpha2,
        decrease,
        form: VForm::Quadratic((0..n).map(|i| plant.p_matrix(i).clone()).collect()),
    };

    Ok(LinearGains { gamma, eta, coeffs, graph, lyap })
}

/// Options for the random certified-instance generator.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorConfig {
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    /// Entries of `A_ij` and `B_i` are drawn from `U(−bound, bound)`.
    pub bound: f64,
    /// When set, cross-coupling gains `K_ij` (i ≠ j) are drawn at a tenth of
    /// the bound instead of being zero, so broadcasts reach several
    /// controllers.
    pub dense_coupling: bool,
}

impl GeneratorConfig {
    pub fn new(n: usize, dim: usize, seed: u64, bound: f64) -> Self {
        Self { n, dim, seed, bound, dense_coupling: false }
    }
}

/// Open-loop data behind a generated plant (`n×n` blocks of `A` and `K`,
/// per-subsystem `B_i`), kept so serialization can reproduce the exact
/// closed-loop assembly on reload.
#[derive(Debug, Clone)]
pub struct OpenLoop {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
}

/// A generated plant together with its certificate data.
#[derive(Debug, Clone)]
pub struct GeneratedSystem {
    pub plant: LinearPlant,
    pub gains: LinearGains,
    pub open_loop: OpenLoop,
    /// Spectral radius of the accepted coefficient matrix.
    pub rho: f64,
    /// Number of random draws consumed before acceptance.
    pub attempts: u64,
}

const GENERATION_ATTEMPT_CAP: u64 = 100_000;

/// Draws interconnections until the derived coefficient matrix satisfies the
/// spectral small-gain condition `ρ(G) < 1`. Deterministic per seed.
pub fn generate_random_system(n: usize, dim: usize, seed: u64, bound: f64) -> Result<GeneratedSystem> {
    generate_random_system_with(GeneratorConfig::new(n, dim, seed, bound))
}

/// [`generate_random_system`] with explicit options.
pub fn generate_random_system_with(cfg: GeneratorConfig) -> Result<GeneratedSystem> {
    if cfg.n == 0 || cfg.dim == 0 {
        return Err(Error::InvalidPlant("n and dim must be at least 1".into()));
    }
    if !(cfg.bound.is_finite() && cfg.bound > 0.0) {
        return Err(Error::InvalidPlant("bound must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;
    let d = cfg.dim;
    for attempt in 1..=GENERATION_ATTEMPT_CAP {
        let a: Vec<DMatrix<f64>> = (0..n * n)
            .map(|_| DMatrix::from_fn(d, d, |_, _| rng.random_range(-cfg.bound..cfg.bound)))
            .collect();
        let b: Vec<DMatrix<f64>> = (0..n)
            .map(|_| DMatrix::from_fn(d, d, |_, _| rng.random_range(-cfg.bound..cfg.bound)))
            .collect();
        let mut k = vec![DMatrix::<f64>::zeros(d, d); n * n];
        if cfg.dense_coupling {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        k[i * n + j] = DMatrix::from_fn(d, d, |_, _| {
                            rng.random_range(-cfg.bound..cfg.bound) * 0.1
                        });
                    }
                }
            }
        }
        // The derived coefficients scale like ||A_ij|| / (closed-loop rate),
        // so the local loops must be fast relative to the interconnection
        // strength for rho(G) < 1 to be reachable at all. Place the poles of
        // each Abar_ii at -beta(1 ... 1.5) with beta drawn against the worst
        // row of coupling norms; the draw leaves the rejection loop live.
        let coupling_strength = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| spectral_norm(&a[i * n + j]))
                    .sum::<f64>()
            })
            .fold(0.0_f64, f64::max);
        let local_strength = (0..n)
            .map(|i| spectral_norm(&a[i * n + i]))
            .fold(0.0_f64, f64::max);
        // Floor keeps decoupled draws (n = 1) and weak couplings stabilizable.
        let row_strength = coupling_strength.max(0.3 * local_strength).max(1e-9);
        let beta = rng.random_range(2.0..3.5) * row_strength;
        let poles = DMatrix::from_fn(d, d, |r, c| {
            if r == c {
                -beta * (1.0 + 0.5 * r as f64 / (d.max(2) - 1) as f64)
            } else {
                0.0
            }
        });
        let mut stabilized = true;
        for i in 0..n {
            // K_ii = B_i^{-1} (poles - A_ii) assigns Abar_ii = poles exactly.
            match b[i].clone().lu().try_inverse() {
                Some(b_inv) => k[i * n + i] = b_inv * (&poles - &a[i * n + i]),
                None => {
                    stabilized = false;
                    break;
                }
            }
        }
        if !stabilized {
            continue;
        }
        let q = vec![DMatrix::<f64>::identity(d, d); n];
        let c_tilde = vec![0.5; n]; // lambda_min(I)/2
        let open_loop = OpenLoop { a: a.clone(), b: b.clone(), k: k.clone() };
        let plant = match LinearPlant::from_open_loop(vec![d; n], a, b, k, q, c_tilde) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let gains = derive_linear_gains(&plant)?;
        let rho = spectral_radius(&gains.coeffs)?;
        if rho < 1.0 {
            return Ok(GeneratedSystem { plant, gains, open_loop, rho, attempts: attempt });
        }
    }
    Err(Error::GenerationCapExceeded { attempts: GENERATION_ATTEMPT_CAP })
}

/// The complete construction for the nonlinear benchmark: plant, gains,
/// Ω-path, error-gain map, and Lyapunov data.
#[derive(Debug, Clone)]
pub struct NonlinearBundle {
    pub plant: NonlinearPlant,
    pub gamma: GainMatrix,
    pub eta: Vec<GainExpr>,
    pub graph: CouplingGraph,
    pub sigma: OmegaPath,
    pub phi: PhiMap,
    pub lyap: LyapunovData,
    pub sigma_bar_sq: f64,
}

/// Builds the nonlinear benchmark for controller gain `k > 32`.
///
/// `sigma_bar_sq` must lie in the open interval `(32/k², 1/32)`; `None`
/// selects the geometric mean `1/k`.
pub fn builtin_nonlinear_example(k: f64, sigma_bar_sq: Option<f64>) -> Result<NonlinearBundle> {
    if !(k.is_finite() && k > 32.0) {
        return Err(Error::NonlinearKTooSmall { k });
    }
    let lo = 32.0 / (k * k);
    let hi = 1.0 / 32.0;
    let sbsq = sigma_bar_sq.unwrap_or(1.0 / k);
    if !(sbsq.is_finite() && sbsq > lo && sbsq < hi) {
        return Err(Error::SigmaBarOutOfRange { value: sbsq, lo, hi });
    }
    let sigma_bar = sbsq.sqrt();
    let sqrt32 = 32.0_f64.sqrt();

    let gamma = GainMatrix::new(
        2,
        vec![
            GainExpr::zero(),
            GainExpr::from_term(PowerGain::new(sqrt32, 0.5)?),
            GainExpr::from_term(PowerGain::new(32.0 / (k * k), 2.0)?),
            GainExpr::zero(),
        ],
        vec![MAFKind::Max, MAFKind::Max],
    )?;
    let eta = vec![
        GainExpr::from_term(PowerGain::new(2.0, 2.0)?),
        GainExpr::zero(),
        GainExpr::zero(),
        GainExpr::from_term(PowerGain::new(8.0, 2.0)?),
    ];
    // Dynamics couple both states; each controller reads only its own.
    let graph = CouplingGraph::new(
        2,
        vec![false, true, true, false],
        vec![vec![0, 1], vec![0, 1]],
        vec![vec![0], vec![1]],
    )?;
    let provenance = if sigma_bar_sq.is_none() {
        PathProvenance::TwoBodyInterpolation
    } else {
        PathProvenance::UserSupplied
    };
    let sigma = OmegaPath::from_parts(
        vec![PowerGain::identity(), PowerGain::new(sbsq, 2.0)?],
        provenance,
    );
    let phi = PhiMap::new(
        2,
        vec![
            GainExpr::from_term(PowerGain::new(sqrt32 * sigma_bar, 1.0)?),
            GainExpr::zero(),
            GainExpr::zero(),
            GainExpr::from_term(PowerGain::new(32.0 / (k * k), 2.0)?),
        ],
    )?;
    let lyap = LyapunovData {
        alpha1: vec![PowerGain::new(0.5, 2.0)?; 2],
        alpha2: vec![PowerGain::new(0.5, 2.0)?; 2],
        decrease: vec![PowerGain::new(0.25, 4.0)?, PowerGain::new(k / 2.0, 2.0)?],
        form: VForm::HalfSquare,
    };
    let cert = crate::omega::verify_omega_condition(&gamma, &sigma, &phi);
    if !cert.pass {
        return Err(Error::PathConstructionFailed);
    }
    Ok(NonlinearBundle {
        plant: NonlinearPlant { k },
        gamma,
        eta,
        graph,
        sigma,
        phi,
        lyap,
        sigma_bar_sq: sbsq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lyapunov_scalar_and_diagonal() {
        let a = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let q = DMatrix::from_row_slice(1, 1, &[2.0]);
        let p = solve_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);

        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let q = DMatrix::identity(2, 2);
        let p = solve_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p[(1, 1)], 0.25, epsilon = 1e-12);
        assert!(p[(0, 1)].abs() < 1e-13);
    }

    /// Vectorized direct solve of `(I⊗A⊤ + A⊤⊗I) vec(P) = −vec(Q)`
    /// (column-major vec), independent of the sign-iteration route.
    fn lyapunov_kronecker_oracle(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut m = DMatrix::<f64>::zeros(n * n, n * n);
        for i1 in 0..n {
            for i2 in 0..n {
                for j1 in 0..n {
                    for j2 in 0..n {
                        let row = i1 * n + i2;
                        let col = j1 * n + j2;
                        let mut v = 0.0;
                        if i1 == j1 {
                            v += a[(j2, i2)]; // I (x) A^T
                        }
                        if i2 == j2 {
                            v += a[(j1, i1)]; // A^T (x) I
                        }
                        m[(row, col)] += v;
                    }
                }
            }
        }
        let rhs = DVector::from_fn(n * n, |k, _| -q[(k % n, k / n)]);
        let sol = m.lu().solve(&rhs).expect("oracle solve");
        DMatrix::from_fn(n, n, |r, c| sol[c * n + r])
    }

    #[test]
    fn lyapunov_random_hurwitz_matches_kronecker_oracle() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..25 {
            let n = rng.random_range(2..=4);
            // Hurwitz by construction: random minus a strong diagonal shift.
            let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0_f64));
            let shift = raw.norm() + 0.5;
            let a = raw - DMatrix::identity(n, n) * shift;
            let q = DMatrix::identity(n, n);
            let p = solve_lyapunov(&a, &q).unwrap();

            let oracle = lyapunov_kronecker_oracle(&a, &q);
            assert!(
                (&p - &oracle).amax() <= 1e-8 * oracle.amax().max(1.0),
                "sign iteration disagrees with direct solve by {}",
                (&p - &oracle).amax()
            );
            let residual = (a.transpose() * &p + &p * &a + &q).norm();
            assert!(residual <= 1e-8 * q.norm(), "residual {residual}");
            assert!((&p - p.transpose()).amax() < 1e-12);
            assert!(p.clone().cholesky().is_some());
        }
    }

    #[test]
    fn lyapunov_rejects_non_hurwitz() {
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        let q = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(matches!(solve_lyapunov(&a, &q), Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn stabilizer_produces_hurwitz_closed_loop() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..20 {
            let n = 3;
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0_f64));
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0_f64));
            let k = stabilizing_gain(&a, &b).unwrap();
            assert!(is_hurwitz(&(&a + &b * &k)).is_ok());
        }
    }

    fn scalar_chain_plant() -> LinearPlant {
        // Two scalar subsystems, Abar_ii = -1, coupling Abar_12 = 0.1,
        // Bbar_ii = 1, Q = diag(2) so P_i = 1 and c_tilde = 1/2 gives the
        // documented gain arithmetic.
        let dims = vec![1, 1];
        let abar = vec![
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DMatrix::from_row_slice(1, 1, &[0.1]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[-1.0]),
        ];
        let bbar = vec![
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
        ];
        let q = vec![
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
        ];
        LinearPlant::new(dims, abar, bbar, q, vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn derive_gains_scalar_chain() {
        let plant = scalar_chain_plant();
        assert_relative_eq!(plant.p_matrix(0)[(0, 0)], 1.0, epsilon = 1e-12);
        let gains = derive_linear_gains(&plant).unwrap();
        // gamma_12 = (2*1/0.5)*(0.1/1)*sqrt(r) = 0.4 sqrt(r)
        assert_relative_eq!(gains.coeffs[(0, 1)], 0.4, epsilon = 1e-10);
        let term = gains.gamma.entry(0, 1).as_single_term().unwrap();
        assert_relative_eq!(term.coeff(), 0.4, epsilon = 1e-10);
        assert_relative_eq!(term.exponent(), 0.5);
        // eta_11 = (2*1/0.5)*1*r = 4r
        let eta00 = gains.eta[0].as_single_term().unwrap();
        assert_relative_eq!(eta00.coeff(), 4.0, epsilon = 1e-10);
        assert_relative_eq!(eta00.exponent(), 1.0);
        // decrease rate (c - c_tilde) r^2 = 1.5 r^2
        assert_relative_eq!(gains.lyap.decrease_rate(0).coeff(), 1.5, epsilon = 1e-10);
        // Sigma/C sets: dynamics of 1 see state 2; controllers see self only.
        assert_eq!(gains.graph.sigma_set(0), &[0, 1]);
        assert_eq!(gains.graph.c_set(0), &[0]);
        assert_eq!(gains.graph.z_set(0), &[0]);
    }

    #[test]
    fn eta_row_zero_when_bbar_zero() {
        let dims = vec![1];
        let abar = vec![DMatrix::from_row_slice(1, 1, &[-1.0])];
        let bbar = vec![DMatrix::from_row_slice(1, 1, &[0.0])];
        let q = vec![DMatrix::from_row_slice(1, 1, &[1.0])];
        let plant = LinearPlant::new(dims, abar, bbar, q, vec![0.4]).unwrap();
        let gains = derive_linear_gains(&plant).unwrap();
        assert!(gains.eta[0].is_zero());
        assert!(gains.graph.c_set(0).is_empty());
    }

    #[test]
    fn dynamics_examples() {
        let plant = scalar_chain_plant();
        let p = Plant::Linear(plant);
        // xhat = x gives xdot = Abar x.
        let x = DVector::from_row_slice(&[2.0, -1.0]);
        let xdot = p.eval_dynamics(&x, &x).unwrap();
        assert_relative_eq!(xdot[0], -2.1, epsilon = 1e-12);
        assert_relative_eq!(xdot[1], 1.0, epsilon = 1e-12);

        // Equilibrium.
        let zero = DVector::zeros(2);
        assert_eq!(p.eval_dynamics(&zero, &zero).unwrap(), zero);

        let bad = p.eval_dynamics(&x, &DVector::zeros(3));
        assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn nonlinear_dynamics_benchmark_point() {
        let bundle = builtin_nonlinear_example(64.0, None).unwrap();
        let p = Plant::Nonlinear(bundle.plant);
        let x = DVector::from_row_slice(&[-4.0, 3.0]);
        let xdot = p.eval_dynamics(&x, &x).unwrap();
        assert_relative_eq!(xdot[0], 52.0, epsilon = 1e-12);
        assert_relative_eq!(xdot[1], -176.0, epsilon = 1e-12);
    }

    #[test]
    fn nonlinear_bundle_values() {
        let bundle = builtin_nonlinear_example(64.0, None).unwrap();
        assert_relative_eq!(bundle.sigma_bar_sq, 1.0 / 64.0, epsilon = 1e-15);
        assert_relative_eq!(bundle.sigma.component(1).coeff(), 1.0 / 64.0, epsilon = 1e-15);
        assert_relative_eq!(
            bundle.phi.entry(0, 0).as_single_term().unwrap().coeff(),
            32.0_f64.sqrt() / 8.0,
            epsilon = 1e-12
        );

        // k = 33: valid but near-degenerate interval.
        let tight = builtin_nonlinear_example(33.0, None).unwrap();
        assert!(tight.sigma_bar_sq > 32.0 / (33.0 * 33.0) && tight.sigma_bar_sq < 1.0 / 32.0);

        assert!(matches!(
            builtin_nonlinear_example(16.0, None),
            Err(Error::NonlinearKTooSmall { .. })
        ));
        assert!(matches!(
            builtin_nonlinear_example(64.0, Some(0.5)),
            Err(Error::SigmaBarOutOfRange { .. })
        ));
    }

    #[test]
    fn generator_deterministic_and_certified() {
        let g1 = generate_random_system(3, 3, 7, 5.0).unwrap();
        let g2 = generate_random_system(3, 3, 7, 5.0).unwrap();
        assert!(g1.rho < 1.0);
        assert_eq!(g1.attempts, g2.attempts);
        assert_eq!(g1.plant.abar_full(), g2.plant.abar_full());
        assert_eq!(g1.plant.bbar_full(), g2.plant.bbar_full());

        // n = 1: no off-diagonal gains, accepted immediately.
        let single = generate_random_system(1, 2, 3, 5.0).unwrap();
        assert_eq!(single.attempts, 1);
        assert_relative_eq!(single.rho, 0.0);
    }

    #[test]
    fn linear_decrease_certificate() {
        // Whenever V_i dominates the aggregated gains of the other levels
        // and errors, the directional derivative obeys the certified rate:
        // grad V_i . xdot_i <= -(c_i - c_tilde_i) ||x_i||^2.
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let gen = generate_random_system(3, 3, 19, 5.0).unwrap();
        let plant = gen.plant;
        let gains = gen.gains;
        let n = 3;
        let dim = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 1000 {
            let i = rng.random_range(0..n);
            let mut x: Vec<DVector<f64>> = (0..n)
                .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0_f64)))
                .collect();
            let e: Vec<DVector<f64>> = (0..n)
                .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-0.1..0.1_f64)))
                .collect();
            // The premise has no own-level term (gamma_ii = 0), so scaling
            // x_i up always makes it hold.
            let mut args = vec![0.0; 2 * n];
            for j in 0..n {
                args[j] = gains.gamma.entry(i, j).eval(gains.lyap.v(j, x[j].as_slice()));
                args[n + j] = gains.eta[i * n + j].eval(e[j].norm());
            }
            let rhs = crate::gainalg::MAFKind::SumThenSquare.apply(&args);
            let vi = gains.lyap.v(i, x[i].as_slice());
            if vi < rhs {
                let scale = (rhs / vi.max(1e-12)).sqrt() * 1.001;
                x[i] *= scale;
            }
            // xdot_i = sum_j Abar_ij x_j + sum_j Bbar_ij e_j
            let mut xdot = DVector::zeros(dim);
            for j in 0..n {
                xdot += plant.abar_block(i, j) * &x[j];
                xdot += plant.bbar_block(i, j) * &e[j];
            }
            let deriv = gains.lyap.grad_dot(i, x[i].as_slice(), xdot.as_slice());
            let rate = gains.lyap.decrease_rate(i).eval(x[i].norm());
            assert!(
                deriv <= -rate + 1e-9 * (1.0 + rate),
                "derivative {deriv} vs certified -{rate}"
            );
            checked += 1;
        }
    }

    #[test]
    fn nonlinear_decrease_certificate() {
        // Subsystem 1: V1 >= max{sqrt(32 V2), 2 e1^2} implies
        // Vdot1 <= -x1^4/4; subsystem 2 decays at rate (k/2) x2^2.
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let k = 64.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked1 = 0;
        let mut checked2 = 0;
        while checked1 < 1000 || checked2 < 1000 {
            let x1: f64 = rng.random_range(-4.0..4.0);
            let x2: f64 = rng.random_range(-4.0..4.0);
            let e1: f64 = rng.random_range(-1.0..1.0);
            let e2: f64 = rng.random_range(-1.0..1.0);
            let v1 = 0.5 * x1 * x1;
            let v2 = 0.5 * x2 * x2;
            // xdot with xhat = x + e
            let xdot1 = x1 * x2 - x1 * x1 * (x1 + e1);
            let xdot2 = x1 * x1 - k * (x2 + e2);
            if checked1 < 1000 && v1 >= (32.0 * v2).sqrt().max(2.0 * e1 * e1) {
                let vdot1 = x1 * xdot1;
                assert!(
                    vdot1 <= -x1.powi(4) / 4.0 + 1e-9,
                    "Vdot1 {vdot1} vs -x1^4/4 {}",
                    -x1.powi(4) / 4.0
                );
                checked1 += 1;
            }
            if checked2 < 1000 && v2 >= (32.0 / (k * k) * v1 * v1).max(8.0 * e2 * e2) {
                let vdot2 = x2 * xdot2;
                assert!(
                    vdot2 <= -(k / 2.0) * x2 * x2 + 1e-9,
                    "Vdot2 {vdot2} vs rate {}",
                    -(k / 2.0) * x2 * x2
                );
                checked2 += 1;
            }
        }
    }

    #[test]
    fn sandwich_bounds_hold_on_samples() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let gen = generate_random_system(3, 3, 11, 5.0).unwrap();
        let lyap = &gen.gains.lyap;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let i = rng.random_range(0..3);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let v = lyap.v(i, &x);
            assert!(lyap.alpha1(i).eval(norm) <= v * (1.0 + 1e-9) + 1e-12);
            assert!(v <= lyap.alpha2(i).eval(norm) * (1.0 + 1e-9) + 1e-12);
        }
    }
}
