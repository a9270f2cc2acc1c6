//! Implementations of the `analyze`, `simulate`, `compare`, and `generate`
//! subcommands.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use trignet_core::gainalg::CheckMethod;
use trignet_core::omega::{
    build_omega_path_linear, build_phi_linear, verify_omega_condition, OmegaPath, PhiMap,
};
use trignet_core::pipeline::{
    analyze_nonlinear, practical_constants_for_level, DEFAULT_EPSILON,
};
use trignet_core::plant::{
    derive_linear_gains, generate_random_system_with, GeneratorConfig, LinearPlant, Plant,
};
use trignet_core::sim::{
    run_simulation, HatInit, PeriodicProtocol, Scheme, SimConfig, SimOutput, TriggerData,
    ZenoVerdict,
};
use trignet_core::trigger::{compute_thresholds, ThetaBound};

use crate::config::{self, parse_config, ParsedConfig};
use crate::output;
use crate::CliError;

/// Everything a simulation or report needs after analysis.
pub struct AnalyzedSystem {
    pub plant: Plant,
    pub data: TriggerData,
    pub report: serde_json::Value,
    pub report_text: String,
    /// Pieces for rebuilding thresholds with practical constants.
    rebuild: RebuildData,
}

struct RebuildData {
    gamma: trignet_core::gainalg::GainMatrix,
    eta: Vec<trignet_core::gainalg::GainExpr>,
    sigma: OmegaPath,
    phi: PhiMap,
    lyap: trignet_core::plant::LyapunovData,
    theta: Option<ThetaBound>,
}

impl AnalyzedSystem {
    pub fn practical_data(&self, c: Vec<f64>) -> Result<TriggerData, CliError> {
        let ts = compute_thresholds(
            &self.rebuild.gamma,
            &self.rebuild.eta,
            &self.rebuild.sigma,
            &self.rebuild.phi,
            &self.rebuild.lyap,
            Some(c),
        )
        .map_err(CliError::from)?;
        ts.require_practical().map_err(CliError::from)?;
        let mut data = TriggerData::new(
            ts,
            self.rebuild.sigma.clone(),
            self.rebuild.lyap.clone(),
        );
        if let Some(theta) = &self.rebuild.theta {
            data = data.with_theta(theta.clone());
        }
        Ok(data)
    }
}

/// Runs the analysis pipeline on a parsed configuration, honoring any
/// `omega_path` / `phi` overrides.
pub fn analyze_config(parsed: &ParsedConfig) -> Result<AnalyzedSystem, CliError> {
    match parsed {
        ParsedConfig::NonlinearExample { k, sigma_bar_sq } => {
            let analysis = analyze_nonlinear(*k, *sigma_bar_sq).map_err(CliError::from)?;
            let ts = &analysis.thresholds;
            let report = json!({
                "system": "nonlinear_example",
                "n": 2,
                "k": k,
                "sigma_bar_sq": analysis.bundle.sigma_bar_sq,
                "small_gain": {
                    "method": "two_body_cycle",
                    "pass": analysis.small_gain.pass,
                    "sup_cycle_ratio": analysis.small_gain.witness,
                },
                "sigma": sigma_strings(&analysis.bundle.sigma),
                "phi": phi_strings(&analysis.bundle.phi),
                "chi": (0..2).map(|i| ts.chi(i).to_string()).collect::<Vec<_>>(),
                "eta_hat": (0..2).map(|i| ts.eta_hat(i).to_string()).collect::<Vec<_>>(),
                "psi": (0..2).map(|i| ts.psi(i).to_string()).collect::<Vec<_>>(),
                "certificate": {
                    "pass": analysis.certificate.pass,
                    "worst_relative_margin": analysis.certificate.witness,
                },
            });
            let text = render_report_text(&report);
            Ok(AnalyzedSystem {
                plant: analysis.plant_enum(),
                data: analysis.trigger_data(),
                rebuild: RebuildData {
                    gamma: analysis.bundle.gamma.clone(),
                    eta: analysis.bundle.eta.clone(),
                    sigma: analysis.bundle.sigma.clone(),
                    phi: analysis.bundle.phi.clone(),
                    lyap: analysis.bundle.lyap.clone(),
                    theta: None,
                },
                report,
                report_text: text,
            })
        }
        ParsedConfig::Linear { plant, overrides } => analyze_linear_config(plant, overrides),
    }
}

fn analyze_linear_config(
    plant: &LinearPlant,
    overrides: &config::AnalysisOverrides,
) -> Result<AnalyzedSystem, CliError> {
    let n = plant.n();
    let gains = derive_linear_gains(plant).map_err(CliError::from)?;
    let small_gain = trignet_core::gainalg::small_gain_check(&gains.gamma).map_err(CliError::from)?;
    if !small_gain.pass {
        return Err(CliError::SmallGain(format!(
            "spectral radius of G is {:.6} (needs < 1)",
            small_gain.witness
        )));
    }
    let irreducible = trignet_core::gainalg::is_irreducible(&gains.graph);

    let sigma = match &overrides.omega_path {
        Some(path) => {
            if path.n() != n {
                return Err(CliError::validation(format!(
                    "omega_path override has {} components, plant needs {n}",
                    path.n()
                )));
            }
            path.clone()
        }
        None => build_omega_path_linear(&gains.coeffs, DEFAULT_EPSILON).map_err(CliError::from)?,
    };
    let phi = match &overrides.phi {
        Some(map) => map.clone(),
        None => {
            let s_star = sigma.s_star().ok_or_else(|| {
                CliError::validation(
                    "a user-supplied omega_path with nonlinear components needs an explicit phi"
                        .to_string(),
                )
            })?;
            build_phi_linear(&gains.coeffs, &s_star, &gains.graph).map_err(CliError::from)?
        }
    };
    let certificate = verify_omega_condition(&gains.gamma, &sigma, &phi);
    if !certificate.pass {
        let (row, r) = certificate.violation.unwrap_or((0, 0.0));
        return Err(CliError::SmallGain(format!(
            "coupled path inequality fails at row {row}, r = {r:.3e} \
             (worst relative margin {:.3e})",
            certificate.witness
        )));
    }
    let thresholds =
        compute_thresholds(&gains.gamma, &gains.eta, &sigma, &phi, &gains.lyap, None)
            .map_err(CliError::from)?;
    let theta = ThetaBound::for_linear(plant, &gains, &sigma, &thresholds, None).ok();

    let phi_budgets: Vec<f64> = sigma
        .s_star()
        .map(|s_star| {
            (0..n)
                .map(|i| {
                    let mut budget = s_star[i].sqrt();
                    for j in 0..n {
                        if j != i
                            && (gains.graph.sigma_set(i).contains(&j)
                                || gains.graph.c_set(i).contains(&j))
                        {
                            budget -= gains.coeffs[(i, j)] * s_star[j].sqrt();
                        }
                    }
                    budget
                })
                .collect()
        })
        .unwrap_or_default();

    let ts = &thresholds;
    let report = json!({
        "system": "linear",
        "n": n,
        "small_gain": {
            "method": match small_gain.method {
                CheckMethod::SpectralRadius => "spectral_radius",
                CheckMethod::TwoBodyCycle => "two_body_cycle",
                CheckMethod::GridVerification => "grid",
            },
            "pass": small_gain.pass,
            "rho": small_gain.witness,
        },
        "irreducible": irreducible,
        "g_coeffs": {
            "shape": [n, n],
            "data": (0..n).flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| gains.coeffs[(i, j)]).collect::<Vec<f64>>(),
        },
        "s_star": sigma.s_star(),
        "sigma": sigma_strings(&sigma),
        "phi_budgets": phi_budgets,
        "phi": phi_strings(&phi),
        "chi": (0..n).map(|i| ts.chi(i).to_string()).collect::<Vec<_>>(),
        "eta_hat": (0..n).map(|i| ts.eta_hat(i).to_string()).collect::<Vec<_>>(),
        "psi": (0..n).map(|i| ts.psi(i).to_string()).collect::<Vec<_>>(),
        "certificate": {
            "pass": certificate.pass,
            "worst_relative_margin": certificate.witness,
        },
    });
    let text = render_report_text(&report);
    let mut data = TriggerData::new(thresholds.clone(), sigma.clone(), gains.lyap.clone());
    if let Some(t) = &theta {
        data = data.with_theta(t.clone());
    }
    Ok(AnalyzedSystem {
        plant: Plant::Linear(plant.clone()),
        data,
        rebuild: RebuildData {
            gamma: gains.gamma.clone(),
            eta: gains.eta.clone(),
            sigma,
            phi,
            lyap: gains.lyap.clone(),
            theta,
        },
        report,
        report_text: text,
    })
}

fn sigma_strings(sigma: &OmegaPath) -> Vec<String> {
    sigma.components().iter().map(|g| g.to_string()).collect()
}

fn phi_strings(phi: &PhiMap) -> Vec<String> {
    let n = phi.n();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| phi.entry(i, j).to_string())
        .collect()
}

fn render_report_text(report: &serde_json::Value) -> String {
    let mut out = String::new();
    let push_kv = |out: &mut String, k: &str, v: String| {
        out.push_str(&format!("{k:<28} {v}\n"));
    };
    push_kv(&mut out, "system", report["system"].as_str().unwrap_or("?").into());
    if let Some(rho) = report["small_gain"]["rho"].as_f64() {
        push_kv(&mut out, "rho(G)", format!("{rho:.6}"));
    }
    if let Some(sup) = report["small_gain"]["sup_cycle_ratio"].as_f64() {
        push_kv(&mut out, "sup gamma12(gamma21(r))/r", format!("{sup:.6}"));
    }
    push_kv(
        &mut out,
        "small-gain",
        if report["small_gain"]["pass"].as_bool().unwrap_or(false) { "pass".into() } else { "FAIL".into() },
    );
    if let Some(irr) = report["irreducible"].as_bool() {
        push_kv(&mut out, "irreducible", irr.to_string());
    }
    let fmt_nums = |arr: &[serde_json::Value]| -> String {
        arr.iter()
            .filter_map(|v| v.as_f64())
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    if let Some(s) = report["s_star"].as_array() {
        push_kv(&mut out, "s*", fmt_nums(s));
    }
    if let Some(b) = report["phi_budgets"].as_array() {
        if !b.is_empty() {
            push_kv(&mut out, "phi budgets rho_i", fmt_nums(b));
        }
    }
    for key in ["sigma", "chi", "eta_hat", "psi", "phi"] {
        if let Some(arr) = report[key].as_array() {
            let rendered: Vec<&str> = arr.iter().filter_map(|v| v.as_str()).collect();
            push_kv(&mut out, key, rendered.join(" | "));
        }
    }
    push_kv(
        &mut out,
        "certificate",
        format!(
            "{} (worst relative margin {:.3e})",
            if report["certificate"]["pass"].as_bool().unwrap_or(false) { "pass" } else { "FAIL" },
            report["certificate"]["worst_relative_margin"].as_f64().unwrap_or(f64::NAN)
        ),
    );
    out
}

/// `trignet analyze <config> [--json out.json]`
pub fn cmd_analyze(config_path: &Path, json_out: Option<&Path>) -> Result<(), CliError> {
    let parsed = parse_config(config_path)?;
    let analyzed = analyze_config(&parsed)?;
    print!("{}", analyzed.report_text);
    if let Some(path) = json_out {
        output::write_json(&analyzed.report, path)?;
    }
    Ok(())
}

/// Options shared by `simulate` and `compare`.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub t_end: f64,
    pub dt: f64,
    pub x0: Option<Vec<f64>>,
    pub xhat0: HatInit,
    pub stride: usize,
    pub practical_level: f64,
    pub practical_c: Option<Vec<f64>>,
    pub zeno_gap_floor: Option<f64>,
    pub zeno_window_count: usize,
}

impl RunOptions {
    fn x0_for(&self, plant: &Plant) -> Result<DVector<f64>, CliError> {
        match &self.x0 {
            Some(values) => {
                if values.len() != plant.total_dim() {
                    return Err(CliError::validation(format!(
                        "--x0 has {} entries, plant needs {}",
                        values.len(),
                        plant.total_dim()
                    )));
                }
                Ok(DVector::from_row_slice(values))
            }
            None => Ok(default_x0(plant)),
        }
    }
}

/// Benchmark initial condition for the nonlinear example; a deterministic
/// unit-ish vector otherwise.
pub fn default_x0(plant: &Plant) -> DVector<f64> {
    match plant {
        Plant::Nonlinear(_) => DVector::from_row_slice(&[-4.0, 3.0]),
        Plant::Linear(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
            let mut x = DVector::from_fn(p.total_dim(), |_, _| rng.random_range(-1.0..1.0_f64));
            let norm = x.norm();
            if norm > 0.0 {
                x *= 3.0 / norm;
            }
            x
        }
    }
}

fn build_sim_config(scheme: Scheme, x0: DVector<f64>, opts: &RunOptions) -> SimConfig {
    let mut cfg = SimConfig::new(scheme, x0, opts.t_end, opts.dt);
    cfg.xhat0 = opts.xhat0;
    cfg.sample_stride = opts.stride;
    cfg.zeno_gap_floor = opts.zeno_gap_floor;
    cfg.zeno_window_count = opts.zeno_window_count;
    cfg
}

fn initial_v(data: &TriggerData, plant: &Plant, x0: &DVector<f64>) -> f64 {
    let offsets = plant.offsets();
    let dims = plant.dims();
    (0..plant.n())
        .map(|i| {
            let v = data
                .lyap
                .v(i, &x0.as_slice()[offsets[i]..offsets[i] + dims[i]]);
            data.sigma.eval_inverse(i, v)
        })
        .fold(0.0_f64, f64::max)
}

fn scheme_data(
    analyzed: &AnalyzedSystem,
    scheme: &Scheme,
    x0: &DVector<f64>,
    opts: &RunOptions,
) -> Result<TriggerData, CliError> {
    match scheme {
        Scheme::Practical => {
            let c = match &opts.practical_c {
                Some(c) => c.clone(),
                None => {
                    let v0 = initial_v(&analyzed.data, &analyzed.plant, x0);
                    practical_constants_for_level(
                        &analyzed.data.sigma,
                        opts.practical_level * v0,
                    )
                }
            };
            analyzed.practical_data(c)
        }
        _ => Ok(analyzed.data.clone()),
    }
}

/// `trignet simulate <config> --scheme ...`
#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    config_path: &Path,
    scheme: Scheme,
    opts: &RunOptions,
    force: bool,
    out_prefix: Option<&Path>,
    svg: bool,
) -> Result<(), CliError> {
    let parsed = parse_config(config_path)?;
    let (plant, data) = match analyze_config(&parsed) {
        Ok(analyzed) => {
            let x0 = opts.x0_for(&analyzed.plant)?;
            let data = scheme_data(&analyzed, &scheme, &x0, opts)?;
            (analyzed.plant, data)
        }
        Err(CliError::SmallGain(msg)) => {
            let baseline =
                matches!(scheme, Scheme::Periodic { .. } | Scheme::RoundRobin { .. });
            if !(force && baseline) {
                return Err(CliError::SmallGain(msg));
            }
            // Forced baseline: identity path, trivial thresholds.
            let plant = parsed.plant()?;
            let data = forced_baseline_data(&plant)?;
            (plant, data)
        }
        Err(other) => return Err(other),
    };

    let x0 = opts.x0_for(&plant)?;
    let config = build_sim_config(scheme, x0, opts);
    let out = run_simulation(&plant, &data, &config).map_err(CliError::from)?;
    print_run_summary(&out);

    if let Some(prefix) = out_prefix {
        let csv = with_extension(prefix, "csv");
        output::write_trace_csv(&out.trace, &csv)?;
        let metrics = with_extension(prefix, "metrics.json");
        output::write_json(&output::metrics_json(&out.metrics, &out.zeno), &metrics)?;
        if svg {
            output::write_svg(&out.trace, &with_extension(prefix, "svg"))?;
        }
    }
    if let Some(d) = out.metrics.diverged {
        return Err(CliError::Divergence(format!(
            "divergence detected at t = {} (|x| = {:.3e})",
            d.t, d.norm
        )));
    }
    Ok(())
}

fn forced_baseline_data(plant: &Plant) -> Result<TriggerData, CliError> {
    use trignet_core::gainalg::{GainExpr, GainMatrix, PowerGain};
    let n = plant.n();
    let lyap = match plant {
        Plant::Linear(p) => derive_linear_gains(p).map_err(CliError::from)?.lyap,
        Plant::Nonlinear(p) => {
            trignet_core::plant::builtin_nonlinear_example(p.k(), None)
                .map_err(CliError::from)?
                .lyap
        }
    };
    let sigma = OmegaPath::user_supplied(vec![PowerGain::identity(); n]).map_err(CliError::from)?;
    let gamma = GainMatrix::zeros(n);
    let eta = vec![GainExpr::zero(); n * n];
    let phi = PhiMap::zeros(n);
    let ts = compute_thresholds(&gamma, &eta, &sigma, &phi, &lyap, None).map_err(CliError::from)?;
    Ok(TriggerData::new(ts, sigma, lyap))
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn print_run_summary(out: &SimOutput) {
    let m = &out.metrics;
    println!(
        "scheme {}: events {} (per subsystem {:?})",
        out.trace.scheme_name, m.events_total, m.events_per_subsystem
    );
    println!(
        "  |x(t_end)| = {:.6e}   V(t_end) = {:.6e}   time-to-level({:.3e}) = {}",
        m.x_end_norm,
        m.v_end,
        m.level,
        m.time_to_level
            .map(|t| format!("{t:.4}"))
            .unwrap_or_else(|| "-".into())
    );
    println!(
        "  min gap {}   max V step increase {:.3e}   zeno {:?}",
        m.min_gap.map(|g| format!("{g:.6}")).unwrap_or_else(|| "-".into()),
        m.max_v_increase_rel,
        out.zeno.verdict
    );
    if m.suppression_count > 0 {
        println!(
            "  suppressions {} (audit failures {})",
            m.suppression_count, m.suppression_audit_failures
        );
    }
    if let Some(d) = m.diverged {
        println!("  DIVERGED at t = {} (|x| = {:.3e})", d.t, d.norm);
    }
}

/// One row of the compare table.
fn compare_row(name: &str, out: &SimOutput) -> String {
    let m = &out.metrics;
    format!(
        "{name},{},{:.6e},{},{},{}",
        m.events_total,
        m.x_end_norm,
        m.time_to_level.map(|t| format!("{t:.4}")).unwrap_or_else(|| "-".into()),
        m.min_gap.map(|g| format!("{g:.6}")).unwrap_or_else(|| "-".into()),
        match out.zeno.verdict {
            ZenoVerdict::None => "none",
            ZenoVerdict::Suspected => "suspected",
        }
    )
}

const COMPARE_HEADER: &str = "scheme,events,x_end_norm,time_to_level,min_gap,zeno";

/// `trignet compare <config> --period ...`: all schemes on a matched horizon.
pub fn cmd_compare(
    config_path: &Path,
    period: f64,
    opts: &RunOptions,
    out_csv: Option<&Path>,
) -> Result<(), CliError> {
    let parsed = parse_config(config_path)?;
    let analyzed = analyze_config(&parsed)?;
    let x0 = opts.x0_for(&analyzed.plant)?;

    let mut schemes: Vec<Scheme> = vec![Scheme::Basic, Scheme::Practical];
    if analyzed.data.theta.is_some() {
        schemes.push(Scheme::Parsimonious);
    }
    schemes.push(Scheme::Periodic { period, protocol: PeriodicProtocol::AllAtOnce });
    schemes.push(Scheme::RoundRobin { period });

    let mut rows = vec![COMPARE_HEADER.to_string()];
    for scheme in schemes {
        let data = scheme_data(&analyzed, &scheme, &x0, opts)?;
        let config = build_sim_config(scheme, x0.clone(), opts);
        let out = run_simulation(&analyzed.plant, &data, &config).map_err(CliError::from)?;
        rows.push(compare_row(config.scheme.name(), &out));
    }
    emit_rows(&rows, out_csv)
}

/// seed, rho, basic events, round-robin events, and the two end norms.
type BatchRow = (u64, f64, usize, usize, f64, f64);

/// Batch compare over freshly generated instances: per-seed event counts of
/// the basic scheme against the round-robin baseline, plus ratio quantiles.
pub fn cmd_compare_batch(
    seeds: u64,
    n: usize,
    dim: usize,
    bound: f64,
    period: f64,
    opts: &RunOptions,
    out_csv: Option<&Path>,
) -> Result<(), CliError> {
    let results: Vec<Result<BatchRow, CliError>> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let generated =
                generate_random_system_with(GeneratorConfig::new(n, dim, seed, bound))
                    .map_err(CliError::from)?;
            let analysis =
                trignet_core::pipeline::analyze_linear(&generated.plant, DEFAULT_EPSILON)
                    .map_err(CliError::from)?;
            let plant = analysis.plant_enum();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let mut x0 =
                DVector::from_fn(plant.total_dim(), |_, _| rng.random_range(-1.0..1.0_f64));
            let norm = x0.norm();
            if norm > 0.0 {
                x0 *= 3.0 / norm;
            }
            let mut cfg = build_sim_config(Scheme::Basic, x0.clone(), opts);
            let basic =
                run_simulation(&plant, &analysis.trigger_data(), &cfg).map_err(CliError::from)?;
            cfg.scheme = Scheme::RoundRobin { period };
            let rr =
                run_simulation(&plant, &analysis.trigger_data(), &cfg).map_err(CliError::from)?;
            Ok((
                seed,
                generated.rho,
                basic.metrics.events_total,
                rr.metrics.events_total,
                basic.metrics.x_end_norm,
                rr.metrics.x_end_norm,
            ))
        })
        .collect();

    let mut rows = vec![
        "seed,rho,basic_events,roundrobin_events,event_ratio,basic_x_end,roundrobin_x_end"
            .to_string(),
    ];
    let mut ratios = Vec::new();
    for r in results {
        let (seed, rho, basic_ev, rr_ev, basic_x, rr_x) = r?;
        let ratio = basic_ev as f64 / rr_ev.max(1) as f64;
        ratios.push(ratio);
        rows.push(format!(
            "{seed},{rho:.6},{basic_ev},{rr_ev},{ratio:.6},{basic_x:.6e},{rr_x:.6e}"
        ));
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| -> f64 {
        if ratios.is_empty() {
            return f64::NAN;
        }
        let pos = q * (ratios.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        ratios[lo] + (ratios[hi] - ratios[lo]) * (pos - lo as f64)
    };
    rows.push(format!(
        "# event_ratio quantiles: p25 {:.4}, median {:.4}, p75 {:.4}",
        quantile(0.25),
        quantile(0.5),
        quantile(0.75)
    ));
    emit_rows(&rows, out_csv)
}

fn emit_rows(rows: &[String], out_csv: Option<&Path>) -> Result<(), CliError> {
    let text = rows.join("\n") + "\n";
    match out_csv {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `trignet generate --n ... --out config.json`
pub fn cmd_generate(
    n: usize,
    dim: usize,
    seed: u64,
    bound: f64,
    dense_coupling: bool,
    out: &Path,
) -> Result<(), CliError> {
    let mut cfg = GeneratorConfig::new(n, dim, seed, bound);
    cfg.dense_coupling = dense_coupling;
    let generated = generate_random_system_with(cfg).map_err(CliError::from)?;
    let file = config::config_from_generated(&generated, seed, bound, dense_coupling);
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::io(format!("JSON encoding failed: {e}")))?;
    std::fs::write(out, text)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", out.display())))?;
    println!(
        "generated n={n} dim={dim} seed={seed}: rho(G) = {:.6} after {} draws -> {}",
        generated.rho,
        generated.attempts,
        out.display()
    );
    Ok(())
}
