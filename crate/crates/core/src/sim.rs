//! Deterministic closed-loop simulation with zero-order hold.
//!
//! The controller input is computed from the last broadcast state `x̂`,
//! which is frozen between events (`ẋ̂ = 0`). After every fixed RK4 step the
//! triggers are evaluated on the post-step state; every subsystem whose
//! condition fires broadcasts, resetting its error to zero. Scheduled
//! baselines (all-at-once periodic and round-robin) replace the trigger
//! evaluation with clock-driven refreshes.
//!
//! Event detection is grid-quantized: the continuous-time event instant is
//! delayed by less than one step. Per-step state (Lyapunov level, event
//! gaps, suppression audits) is tracked online so long simulations can store
//! a strided trace without losing metric fidelity.

use nalgebra::DVector;

use crate::omega::OmegaPath;
use crate::plant::{LyapunovData, Plant};
use crate::trigger::{
    self, eval_basic, eval_parsimonious, eval_practical, QuotientState, ThetaBound, ThresholdSet,
};
use crate::{Error, Result};

/// States below this norm count as "at zero" for the rest-at-zero rule.
pub const REST_AT_ZERO_EPS: f64 = 1e-12;

/// Hysteresis for the rest-at-zero latch: the subsystem resumes triggering
/// only after its norm recovers past `REST_AT_ZERO_EPS * REST_CLEAR_FACTOR`,
/// so machine-noise crossings of the floor do not re-arm the broadcast.
pub const REST_CLEAR_FACTOR: f64 = 100.0;

/// State norms beyond this abort the run as divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Broadcast scheduling for the periodic baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodicProtocol {
    /// Every subsystem refreshes at each period boundary.
    AllAtOnce,
    /// One subsystem refreshes per period, cycling `1, 2, …, N, 1, …`.
    RoundRobin,
}

/// Which rule decides broadcasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Basic,
    Practical,
    Parsimonious,
    Periodic { period: f64, protocol: PeriodicProtocol },
    RoundRobin { period: f64 },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Basic => "basic",
            Scheme::Practical => "practical",
            Scheme::Parsimonious => "parsimonious",
            Scheme::Periodic { protocol: PeriodicProtocol::AllAtOnce, .. } => "periodic",
            Scheme::Periodic { protocol: PeriodicProtocol::RoundRobin, .. }
            | Scheme::RoundRobin { .. } => "roundrobin",
        }
    }

    fn is_event_triggered(&self) -> bool {
        matches!(self, Scheme::Basic | Scheme::Practical | Scheme::Parsimonious)
    }
}

/// Initialization of the held state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HatInit {
    /// `x̂(0) = x(0)`, so `e(0) = 0`.
    CopyOfX0,
    /// `x̂(0) = 0`: controllers start uninformed.
    Zero,
}

/// Simulation parameters.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub x0: DVector<f64>,
    pub xhat0: HatInit,
    /// Inter-event gap below which Zeno is suspected; `None` means `2·dt`.
    pub zeno_gap_floor: Option<f64>,
    /// Events allowed per subsystem within any window of `100·dt`.
    pub zeno_window_count: usize,
    /// Store every k-th sample row (events and metrics stay step-exact).
    pub sample_stride: usize,
    /// `time_to_level` reports the first time `‖x‖` falls to this fraction
    /// of `‖x0‖`.
    pub level_fraction: f64,
}

impl SimConfig {
    pub fn new(scheme: Scheme, x0: DVector<f64>, t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            dt,
            scheme,
            x0,
            xhat0: HatInit::CopyOfX0,
            zeno_gap_floor: None,
            zeno_window_count: 50,
            sample_stride: 1,
            level_fraction: 1e-2,
        }
    }

    pub fn gap_floor(&self) -> f64 {
        self.zeno_gap_floor.unwrap_or(2.0 * self.dt)
    }

    fn validate(&self, plant: &Plant) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0 && self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::InvalidConfig("dt and t_end must be positive".into()));
        }
        if self.x0.len() != plant.total_dim() {
            return Err(Error::InvalidConfig(format!(
                "x0 has dimension {}, plant needs {}",
                self.x0.len(),
                plant.total_dim()
            )));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidConfig("sample_stride must be at least 1".into()));
        }
        if let Scheme::Periodic { period, .. } | Scheme::RoundRobin { period } = self.scheme {
            if !(period.is_finite() && period > 0.0) {
                return Err(Error::InvalidConfig("period must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Threshold data the simulator evaluates; baselines only use `sigma` and
/// `lyap` (for the reported Lyapunov level).
#[derive(Debug, Clone)]
pub struct TriggerData {
    pub set: ThresholdSet,
    pub sigma: OmegaPath,
    pub lyap: LyapunovData,
    pub theta: Option<ThetaBound>,
}

impl TriggerData {
    pub fn new(set: ThresholdSet, sigma: OmegaPath, lyap: LyapunovData) -> Self {
        Self { set, sigma, lyap, theta: None }
    }

    pub fn with_theta(mut self, theta: ThetaBound) -> Self {
        self.theta = Some(theta);
        self
    }

    fn validate(&self, plant: &Plant, scheme: &Scheme) -> Result<()> {
        let n = plant.n();
        if self.set.n() != n || self.sigma.n() != n || self.lyap.n() != n {
            return Err(Error::InvalidConfig(
                "threshold data dimension does not match the plant".into(),
            ));
        }
        match scheme {
            Scheme::Practical => self.set.require_practical(),
            Scheme::Parsimonious => {
                if self.theta.is_none() {
                    return Err(Error::InvalidConfig(
                        "parsimonious scheme needs a theta bound (linear plants)".into(),
                    ));
                }
                if (0..n).any(|i| !self.set.psi_invertible(i)) {
                    return Err(Error::InvalidConfig(
                        "parsimonious scheme needs at least two subsystems".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Why a broadcast happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A triggering condition fired.
    Triggered,
    /// Clock-driven refresh of a baseline scheme.
    Scheduled,
    /// One-time broadcast on reaching the zero state.
    ZeroBroadcast,
}

/// One broadcast by one subsystem.
#[derive(Debug, Clone)]
pub struct EventRecord {
    pub t: f64,
    pub subsystem: usize,
    pub kind: EventKind,
    /// Difference quotient at the event (parsimonious runs).
    pub d: Option<f64>,
    /// `|‖ẋ_i‖ − d_i| − κ̃_i‖x_i‖` at the event (parsimonious runs).
    pub quotient_residual: Option<f64>,
}

/// A basic-condition broadcast the parsimonious scheme suppressed.
#[derive(Debug, Clone)]
pub struct SuppressionRecord {
    pub t: f64,
    pub subsystem: usize,
    pub t1: f64,
    pub t2: f64,
    /// Simulator-side audit with global knowledge: `V(x) ≥ η̂_i(‖e_i‖)`.
    pub audit_ok: bool,
}

/// Time-stamped simulation data.
///
/// Rows are stored every `sample_stride` steps (plus the final step);
/// `events` and `suppressions` are step-exact regardless of the stride.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub n: usize,
    pub dims: Vec<usize>,
    pub offsets: Vec<usize>,
    pub dt: f64,
    pub sample_stride: usize,
    pub scheme_name: String,
    pub c_hat: Option<f64>,
    pub times: Vec<f64>,
    /// Full state per sampled row.
    pub x: Vec<Vec<f64>>,
    /// Held state per sampled row.
    pub xhat: Vec<Vec<f64>>,
    /// Per-subsystem Lyapunov values per sampled row.
    pub v_sub: Vec<Vec<f64>>,
    /// Overall level `V = max_i σ_i⁻¹(V_i)` per sampled row.
    pub v: Vec<f64>,
    /// Broadcast flags per sampled row.
    pub event_flags: Vec<Vec<bool>>,
    /// Suppression flags per sampled row (parsimonious).
    pub suppressed_flags: Vec<Vec<bool>>,
    pub events: Vec<EventRecord>,
    pub suppressions: Vec<SuppressionRecord>,
}

impl SimTrace {
    /// A bare trace carrying only events, for monitor tests.
    pub fn synthetic(n: usize, dt: f64, events: Vec<EventRecord>) -> Self {
        Self {
            n,
            dims: vec![1; n],
            offsets: (0..n).collect(),
            dt,
            sample_stride: 1,
            scheme_name: "synthetic".into(),
            c_hat: None,
            times: Vec::new(),
            x: Vec::new(),
            xhat: Vec::new(),
            v_sub: Vec::new(),
            v: Vec::new(),
            event_flags: Vec::new(),
            suppressed_flags: Vec::new(),
            events,
            suppressions: Vec::new(),
        }
    }
}

/// Zeno verdicts are heuristic on a grid: true accumulation cannot occur,
/// so the monitor reports grid saturation as its proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZenoVerdict {
    None,
    Suspected,
}

/// Inter-event statistics and the Zeno verdict.
#[derive(Debug, Clone)]
pub struct ZenoReport {
    pub verdict: ZenoVerdict,
    /// Minimum gap between consecutive broadcasts of the same subsystem.
    pub min_gap: Vec<Option<f64>>,
    /// Largest number of events of one subsystem inside any `100·dt` window.
    pub max_window_events: Vec<usize>,
    pub gap_floor: f64,
    pub window_limit: usize,
}

/// Divergence marker (time and norm at abort).
#[derive(Debug, Clone, Copy)]
pub struct Divergence {
    pub t: f64,
    pub norm: f64,
}

/// Communication and stability metrics of one run.
#[derive(Debug, Clone)]
pub struct MetricsSummary {
    pub events_per_subsystem: Vec<usize>,
    pub events_total: usize,
    /// Min/mean over same-subsystem inter-event gaps; absent without two
    /// events of one subsystem.
    pub min_gap: Option<f64>,
    pub mean_gap: Option<f64>,
    pub x_end_norm: f64,
    /// Norm level targeted by `time_to_level` (`level_fraction·‖x0‖`).
    pub level: f64,
    pub time_to_level: Option<f64>,
    /// `max_k (V_{k+1} − V_k) / (1 + V_k)` over consecutive samples.
    pub max_v_increase_rel: f64,
    /// Same, restricted to steps starting at `V ≥ ĉ·(1+1e-6)`; minus
    /// infinity when no step qualifies (or no `ĉ`).
    pub max_v_increase_above_chat_rel: f64,
    pub v_end: f64,
    pub c_hat: Option<f64>,
    pub suppression_count: usize,
    pub suppression_audit_failures: usize,
    pub diverged: Option<Divergence>,
}

/// A completed run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: SimTrace,
    pub zeno: ZenoReport,
    pub metrics: MetricsSummary,
}

struct RkBufs {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    xtmp: DVector<f64>,
    scratch: DVector<f64>,
}

impl RkBufs {
    fn new(dim: usize) -> Self {
        Self {
            k1: DVector::zeros(dim),
            k2: DVector::zeros(dim),
            k3: DVector::zeros(dim),
            k4: DVector::zeros(dim),
            xtmp: DVector::zeros(dim),
            scratch: DVector::zeros(dim),
        }
    }
}

#[inline]
fn rk4_advance(plant: &Plant, x: &mut DVector<f64>, xhat: &DVector<f64>, dt: f64, b: &mut RkBufs) {
    plant.eval_dynamics_into(x, xhat, &mut b.k1, &mut b.scratch);
    b.xtmp.copy_from(x);
    b.xtmp.axpy(dt / 2.0, &b.k1, 1.0);
    plant.eval_dynamics_into(&b.xtmp, xhat, &mut b.k2, &mut b.scratch);
    b.xtmp.copy_from(x);
    b.xtmp.axpy(dt / 2.0, &b.k2, 1.0);
    plant.eval_dynamics_into(&b.xtmp, xhat, &mut b.k3, &mut b.scratch);
    b.xtmp.copy_from(x);
    b.xtmp.axpy(dt, &b.k3, 1.0);
    plant.eval_dynamics_into(&b.xtmp, xhat, &mut b.k4, &mut b.scratch);
    x.axpy(dt / 6.0, &b.k1, 1.0);
    x.axpy(dt / 3.0, &b.k2, 1.0);
    x.axpy(dt / 3.0, &b.k3, 1.0);
    x.axpy(dt / 6.0, &b.k4, 1.0);
}

/// One classical fourth-order Runge–Kutta step with the held state frozen.
pub fn rk4_step(
    plant: &Plant,
    x: &DVector<f64>,
    xhat: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidConfig("dt must be positive".into()));
    }
    let total = plant.total_dim();
    if x.len() != total || xhat.len() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            got: x.len().min(xhat.len()),
            context: "rk4 state",
        });
    }
    let mut out = x.clone();
    let mut bufs = RkBufs::new(total);
    rk4_advance(plant, &mut out, xhat, dt, &mut bufs);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t: dt, norm: f64::INFINITY });
    }
    Ok(out)
}

/// Runs the closed loop and returns the trace, the Zeno report, and the
/// metrics. Divergence truncates the run and is flagged in the metrics
/// rather than erasing them.
pub fn run_simulation(plant: &Plant, data: &TriggerData, config: &SimConfig) -> Result<SimOutput> {
    config.validate(plant)?;
    data.validate(plant, &config.scheme)?;

    let n = plant.n();
    let dims = plant.dims();
    let offsets = plant.offsets();
    let total = plant.total_dim();
    let dt = config.dt;
    let nsteps = (config.t_end / dt).round().max(1.0) as usize;
    let stride = config.sample_stride;

    let mut x = config.x0.clone();
    let mut xhat = match config.xhat0 {
        HatInit::CopyOfX0 => config.x0.clone(),
        HatInit::Zero => DVector::zeros(total),
    };
    let mut bufs = RkBufs::new(total);
    let mut e_buf = DVector::zeros(total);

    let mut qs = {
        let xs = x.as_slice();
        let slices: Vec<&[f64]> = (0..n)
            .map(|i| &xs[offsets[i]..offsets[i] + dims[i]])
            .collect();
        QuotientState::new(0.0, &slices)
    };
    let mut zero_latch = vec![false; n];
    let mut rr_cursor = 0usize;
    let mut refresh_count = 0u64;

    let c_hat = match config.scheme {
        Scheme::Practical => Some(data.set.c_hat()),
        _ => None,
    };

    let mut trace = SimTrace {
        n,
        dims: dims.clone(),
        offsets: offsets.clone(),
        dt,
        sample_stride: stride,
        scheme_name: config.scheme.name().into(),
        c_hat,
        times: Vec::new(),
        x: Vec::new(),
        xhat: Vec::new(),
        v_sub: Vec::new(),
        v: Vec::new(),
        event_flags: Vec::new(),
        suppressed_flags: Vec::new(),
        events: Vec::new(),
        suppressions: Vec::new(),
    };

    fn push_row(
        trace: &mut SimTrace,
        t: f64,
        x: &DVector<f64>,
        xhat: &DVector<f64>,
        v_sub: &[f64],
        v: f64,
        fired: &[bool],
        suppressed: &[bool],
    ) {
        trace.times.push(t);
        trace.x.push(x.as_slice().to_vec());
        trace.xhat.push(xhat.as_slice().to_vec());
        trace.v_sub.push(v_sub.to_vec());
        trace.v.push(v);
        trace.event_flags.push(fired.to_vec());
        trace.suppressed_flags.push(suppressed.to_vec());
    }

    let mut v_sub_buf = vec![0.0; n];
    for i in 0..n {
        v_sub_buf[i] = data.lyap.v(i, &x.as_slice()[offsets[i]..offsets[i] + dims[i]]);
    }
    let mut v_prev = (0..n)
        .map(|i| data.sigma.eval_inverse(i, v_sub_buf[i]))
        .fold(0.0_f64, f64::max);

    let x0_norm = x.norm();
    let level = config.level_fraction * x0_norm;
    let mut time_to_level = if x0_norm <= level { Some(0.0) } else { None };
    let mut max_v_inc = f64::NEG_INFINITY;
    let mut max_v_inc_above = f64::NEG_INFINITY;
    let mut suppression_audit_failures = 0usize;
    let mut diverged = None;

    let no_flags = vec![false; n];
    push_row(&mut trace, 0.0, &x, &xhat, &v_sub_buf, v_prev, &no_flags, &no_flags);

    let mut fired = vec![false; n];
    let mut suppressed = vec![false; n];
    let mut fire_kind: Vec<EventKind> = vec![EventKind::Triggered; n];
    let mut fire_d: Vec<Option<f64>> = vec![None; n];

    for k in 1..=nsteps {
        let t = k as f64 * dt;
        rk4_advance(plant, &mut x, &xhat, dt, &mut bufs);

        let x_norm_total = x.norm();
        if !x_norm_total.is_finite() || x_norm_total > DIVERGENCE_NORM {
            diverged = Some(Divergence { t, norm: x_norm_total });
            break;
        }

        fired.iter_mut().for_each(|f| *f = false);
        suppressed.iter_mut().for_each(|f| *f = false);

        // e = xhat - x, refreshed once per step.
        e_buf.copy_from(&xhat);
        e_buf -= &x;

        if config.scheme.is_event_triggered() {
            for i in 0..n {
                let range = offsets[i]..offsets[i] + dims[i];
                let x_i = &x.as_slice()[range.clone()];
                let e_i = &e_buf.as_slice()[range];
                let x_i_norm = x_i.iter().map(|v| v * v).sum::<f64>().sqrt();
                if x_i_norm < REST_AT_ZERO_EPS {
                    // Broadcast once on reaching zero, then stay silent.
                    if !zero_latch[i] {
                        zero_latch[i] = true;
                        fired[i] = true;
                        fire_kind[i] = EventKind::ZeroBroadcast;
                        fire_d[i] = None;
                    }
                    continue;
                }
                if zero_latch[i] {
                    if x_i_norm < REST_AT_ZERO_EPS * REST_CLEAR_FACTOR {
                        continue;
                    }
                    zero_latch[i] = false;
                }
                match config.scheme {
                    Scheme::Basic => {
                        if eval_basic(&data.set, &data.lyap, i, x_i, e_i) >= 0.0 {
                            fired[i] = true;
                            fire_kind[i] = EventKind::Triggered;
                            fire_d[i] = None;
                        }
                    }
                    Scheme::Practical => {
                        if eval_practical(&data.set, &data.sigma, &data.lyap, i, x_i, e_i)? >= 0.0 {
                            fired[i] = true;
                            fire_kind[i] = EventKind::Triggered;
                            fire_d[i] = None;
                        }
                    }
                    Scheme::Parsimonious => {
                        let theta = data.theta.as_ref().expect("validated");
                        let d_i = qs.update_d(i, t, x_i)?;
                        let ev = eval_parsimonious(&data.set, theta, &data.lyap, i, x_i, e_i, d_i);
                        if ev.fires() {
                            fired[i] = true;
                            fire_kind[i] = EventKind::Triggered;
                            fire_d[i] = Some(d_i);
                        } else if ev.suppressed() {
                            suppressed[i] = true;
                            // Audit with global knowledge: V(x) >= eta_hat_i(||e_i||).
                            let xs = x.as_slice();
                            let v_now = (0..n)
                                .map(|j| {
                                    let vj =
                                        data.lyap.v(j, &xs[offsets[j]..offsets[j] + dims[j]]);
                                    data.sigma.eval_inverse(j, vj)
                                })
                                .fold(0.0_f64, f64::max);
                            let e_norm = e_i.iter().map(|v| v * v).sum::<f64>().sqrt();
                            let audit_ok = v_now >= data.set.eta_hat(i).eval(e_norm);
                            if !audit_ok {
                                suppression_audit_failures += 1;
                            }
                            trace.suppressions.push(SuppressionRecord {
                                t,
                                subsystem: i,
                                t1: ev.t1,
                                t2: ev.t2.unwrap_or(f64::NAN),
                                audit_ok,
                            });
                        }
                    }
                    _ => unreachable!(),
                }
            }
        } else {
            let (period, protocol) = match config.scheme {
                Scheme::Periodic { period, protocol } => (period, protocol),
                Scheme::RoundRobin { period } => (period, PeriodicProtocol::RoundRobin),
                _ => unreachable!(),
            };
            let tol = dt * 1e-3;
            while (refresh_count + 1) as f64 * period <= t + tol {
                refresh_count += 1;
                match protocol {
                    PeriodicProtocol::AllAtOnce => {
                        for i in 0..n {
                            fired[i] = true;
                            fire_kind[i] = EventKind::Scheduled;
                            fire_d[i] = None;
                        }
                    }
                    PeriodicProtocol::RoundRobin => {
                        fired[rr_cursor] = true;
                        fire_kind[rr_cursor] = EventKind::Scheduled;
                        fire_d[rr_cursor] = None;
                        rr_cursor = (rr_cursor + 1) % n;
                    }
                }
            }
        }

        if fired.iter().any(|&f| f) {
            // Pre-broadcast derivative for the quotient-residual monitor.
            let need_residual = matches!(config.scheme, Scheme::Parsimonious);
            if need_residual {
                plant.eval_dynamics_into(&x, &xhat, &mut bufs.k1, &mut bufs.scratch);
            }
            for i in 0..n {
                if !fired[i] {
                    continue;
                }
                let range = offsets[i]..offsets[i] + dims[i];
                let residual = match (need_residual, fire_d[i]) {
                    (true, Some(d)) => {
                        let theta = data.theta.as_ref().expect("validated");
                        let xdot_i = &bufs.k1.as_slice()[range.clone()];
                        let xdot_norm = xdot_i.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let x_i = &x.as_slice()[range.clone()];
                        let x_norm = x_i.iter().map(|v| v * v).sum::<f64>().sqrt();
                        Some(trigger::quotient_residual(
                            d,
                            xdot_norm,
                            x_norm,
                            theta.kappa_tilde(i),
                        ))
                    }
                    _ => None,
                };
                trace.events.push(EventRecord {
                    t,
                    subsystem: i,
                    kind: fire_kind[i],
                    d: fire_d[i],
                    quotient_residual: residual,
                });
                // Broadcast: the held copy of subsystem i snaps to x_i.
                for o in range.clone() {
                    xhat[o] = x[o];
                }
                if matches!(config.scheme, Scheme::Parsimonious) {
                    qs.record_trigger(i, t, &x.as_slice()[range]);
                }
            }
        }

        for i in 0..n {
            v_sub_buf[i] = data.lyap.v(i, &x.as_slice()[offsets[i]..offsets[i] + dims[i]]);
        }
        let v_now = (0..n)
            .map(|i| data.sigma.eval_inverse(i, v_sub_buf[i]))
            .fold(0.0_f64, f64::max);
        let inc = (v_now - v_prev) / (1.0 + v_prev);
        if inc > max_v_inc {
            max_v_inc = inc;
        }
        if let Some(chat) = c_hat {
            if v_prev >= chat * (1.0 + 1e-6) && inc > max_v_inc_above {
                max_v_inc_above = inc;
            }
        }
        v_prev = v_now;
        if time_to_level.is_none() && x_norm_total <= level {
            time_to_level = Some(t);
        }

        if k % stride == 0 || k == nsteps {
            push_row(&mut trace, t, &x, &xhat, &v_sub_buf, v_now, &fired, &suppressed);
        }
    }

    let zeno = zeno_monitor(&trace, config);
    let mut metrics = metrics_summary(&trace);
    metrics.level = level;
    metrics.time_to_level = time_to_level;
    metrics.max_v_increase_rel = max_v_inc;
    metrics.max_v_increase_above_chat_rel = max_v_inc_above;
    metrics.c_hat = c_hat;
    metrics.suppression_audit_failures = suppression_audit_failures;
    metrics.diverged = diverged;
    Ok(SimOutput { trace, zeno, metrics })
}

/// Flags suspected Zeno behavior: any same-subsystem gap below the floor,
/// or more events of one subsystem than allowed inside a `100·dt` window.
pub fn zeno_monitor(trace: &SimTrace, config: &SimConfig) -> ZenoReport {
    let n = trace.n;
    let gap_floor = config.gap_floor();
    let window_span = 100.0 * config.dt;
    let window_limit = config.zeno_window_count;

    let mut per_sub: Vec<Vec<f64>> = vec![Vec::new(); n];
    for ev in &trace.events {
        per_sub[ev.subsystem].push(ev.t);
    }
    let mut min_gap = vec![None; n];
    let mut max_window = vec![0usize; n];
    let mut verdict = ZenoVerdict::None;
    for i in 0..n {
        let times = &per_sub[i];
        for w in times.windows(2) {
            let gap = w[1] - w[0];
            if min_gap[i].is_none_or(|g| gap < g) {
                min_gap[i] = Some(gap);
            }
        }
        let mut lo = 0usize;
        for hi in 0..times.len() {
            while times[hi] - times[lo] > window_span {
                lo += 1;
            }
            max_window[i] = max_window[i].max(hi - lo + 1);
        }
        if min_gap[i].is_some_and(|g| g < gap_floor) || max_window[i] > window_limit {
            verdict = ZenoVerdict::Suspected;
        }
    }
    ZenoReport { verdict, min_gap, max_window_events: max_window, gap_floor, window_limit }
}

/// Metrics from the stored trace rows and the step-exact event log.
///
/// `run_simulation` overrides the Lyapunov-increase and time-to-level fields
/// with online (per-step) values; computing from a strided trace sees only
/// the sampled rows.
pub fn metrics_summary(trace: &SimTrace) -> MetricsSummary {
    let n = trace.n;
    let mut counts = vec![0usize; n];
    let mut per_sub: Vec<Vec<f64>> = vec![Vec::new(); n];
    for ev in &trace.events {
        counts[ev.subsystem] += 1;
        per_sub[ev.subsystem].push(ev.t);
    }
    let mut gaps = Vec::new();
    for times in &per_sub {
        for w in times.windows(2) {
            gaps.push(w[1] - w[0]);
        }
    }
    let min_gap = gaps
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))));
    let mean_gap = if gaps.is_empty() {
        None
    } else {
        Some(gaps.iter().sum::<f64>() / gaps.len() as f64)
    };

    let x_end_norm = trace
        .x
        .last()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .unwrap_or(0.0);
    let x0_norm = trace
        .x
        .first()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .unwrap_or(0.0);
    let level = 1e-2 * x0_norm;
    let time_to_level = trace
        .times
        .iter()
        .zip(&trace.x)
        .find(|(_, row)| row.iter().map(|v| v * v).sum::<f64>().sqrt() <= level)
        .map(|(t, _)| *t);

    let mut max_v_inc = f64::NEG_INFINITY;
    let mut max_v_inc_above = f64::NEG_INFINITY;
    for w in trace.v.windows(2) {
        let inc = (w[1] - w[0]) / (1.0 + w[0]);
        max_v_inc = max_v_inc.max(inc);
        if let Some(chat) = trace.c_hat {
            if w[0] >= chat * (1.0 + 1e-6) {
                max_v_inc_above = max_v_inc_above.max(inc);
            }
        }
    }

    MetricsSummary {
        events_total: counts.iter().sum(),
        events_per_subsystem: counts,
        min_gap,
        mean_gap,
        x_end_norm,
        level,
        time_to_level,
        max_v_increase_rel: max_v_inc,
        max_v_increase_above_chat_rel: max_v_inc_above,
        v_end: trace.v.last().copied().unwrap_or(0.0),
        c_hat: trace.c_hat,
        suppression_count: trace.suppressions.len(),
        suppression_audit_failures: trace.suppressions.iter().filter(|s| !s.audit_ok).count(),
        diverged: None,
    }
}
