//! End-to-end analysis pipelines: from a plant to certified triggering data.
//!
//! Bundles the gain derivation, small-gain check, Ω-path and `φ`
//! construction, grid certification, and threshold synthesis behind one
//! call each for linear plants and the nonlinear benchmark.

use crate::gainalg::{is_irreducible, small_gain_check, CheckReport};
use crate::omega::{
    build_omega_path_linear, build_phi_linear, verify_omega_condition, OmegaPath, PhiMap,
};
use crate::plant::{
    builtin_nonlinear_example, derive_linear_gains, LinearGains, LinearPlant, NonlinearBundle,
    Plant,
};
use crate::sim::TriggerData;
use crate::trigger::{compute_thresholds, ThetaBound, ThresholdSet};
use crate::{Error, Result};

/// Default perturbation for the Perron-direction path construction.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Certified analysis of a linear interconnection.
#[derive(Debug, Clone)]
pub struct LinearAnalysis {
    pub plant: LinearPlant,
    pub gains: LinearGains,
    /// Spectral-radius small-gain verdict (`ρ(G)` as witness).
    pub small_gain: CheckReport,
    pub irreducible: bool,
    pub sigma: OmegaPath,
    pub phi: PhiMap,
    /// Leftover `φ` budgets `ρ_i` before the uniform split.
    pub phi_budgets: Vec<f64>,
    /// Grid certificate of the coupled path inequality.
    pub certificate: CheckReport,
    /// Basic-scheme thresholds (zero practical constants).
    pub thresholds: ThresholdSet,
    pub theta: ThetaBound,
}

impl LinearAnalysis {
    /// Trigger data for the basic and parsimonious schemes.
    pub fn trigger_data(&self) -> TriggerData {
        TriggerData::new(
            self.thresholds.clone(),
            self.sigma.clone(),
            self.gains.lyap.clone(),
        )
        .with_theta(self.theta.clone())
    }

    /// Trigger data for the practical scheme with the given constants.
    pub fn trigger_data_practical(&self, c: Vec<f64>) -> Result<TriggerData> {
        let ts = compute_thresholds(
            &self.gains.gamma,
            &self.gains.eta,
            &self.sigma,
            &self.phi,
            &self.gains.lyap,
            Some(c),
        )?;
        ts.require_practical()?;
        Ok(TriggerData::new(ts, self.sigma.clone(), self.gains.lyap.clone())
            .with_theta(self.theta.clone()))
    }

    pub fn plant_enum(&self) -> Plant {
        Plant::Linear(self.plant.clone())
    }
}

/// Runs the full linear pipeline. Fails with the small-gain diagnostic when
/// `ρ(G) ≥ 1`.
pub fn analyze_linear(plant: &LinearPlant, epsilon: f64) -> Result<LinearAnalysis> {
    let gains = derive_linear_gains(plant)?;
    let small_gain = small_gain_check(&gains.gamma)?;
    if !small_gain.pass {
        return Err(Error::SmallGainFails { rho: small_gain.witness });
    }
    let irreducible = is_irreducible(&gains.graph);
    let sigma = build_omega_path_linear(&gains.coeffs, epsilon)?;
    let s_star = sigma.s_star().expect("linear path");
    let phi_budgets = phi_budgets(&gains, &s_star);
    let phi = build_phi_linear(&gains.coeffs, &s_star, &gains.graph)?;
    let certificate = verify_omega_condition(&gains.gamma, &sigma, &phi);
    if !certificate.pass {
        return Err(Error::PathConstructionFailed);
    }
    let thresholds =
        compute_thresholds(&gains.gamma, &gains.eta, &sigma, &phi, &gains.lyap, None)?;
    let theta = ThetaBound::for_linear(plant, &gains, &sigma, &thresholds, None)?;
    Ok(LinearAnalysis {
        plant: plant.clone(),
        gains,
        small_gain,
        irreducible,
        sigma,
        phi,
        phi_budgets,
        certificate,
        thresholds,
        theta,
    })
}

fn phi_budgets(gains: &LinearGains, s_star: &[f64]) -> Vec<f64> {
    let n = s_star.len();
    (0..n)
        .map(|i| {
            let mut budget = s_star[i].sqrt();
            for j in 0..n {
                if j == i {
                    continue;
                }
                if gains.graph.sigma_set(i).contains(&j) || gains.graph.c_set(i).contains(&j) {
                    budget -= gains.coeffs[(i, j)] * s_star[j].sqrt();
                }
            }
            budget
        })
        .collect()
}

/// Certified analysis of the built-in nonlinear benchmark.
#[derive(Debug, Clone)]
pub struct NonlinearAnalysis {
    pub bundle: NonlinearBundle,
    /// Two-body cycle small-gain verdict.
    pub small_gain: CheckReport,
    /// Grid certificate of the coupled path inequality.
    pub certificate: CheckReport,
    /// Basic-scheme thresholds.
    pub thresholds: ThresholdSet,
}

impl NonlinearAnalysis {
    pub fn trigger_data(&self) -> TriggerData {
        TriggerData::new(
            self.thresholds.clone(),
            self.bundle.sigma.clone(),
            self.bundle.lyap.clone(),
        )
    }

    pub fn trigger_data_practical(&self, c: Vec<f64>) -> Result<TriggerData> {
        let ts = compute_thresholds(
            &self.bundle.gamma,
            &self.bundle.eta,
            &self.bundle.sigma,
            &self.bundle.phi,
            &self.bundle.lyap,
            Some(c),
        )?;
        ts.require_practical()?;
        Ok(TriggerData::new(
            ts,
            self.bundle.sigma.clone(),
            self.bundle.lyap.clone(),
        ))
    }

    pub fn plant_enum(&self) -> Plant {
        Plant::Nonlinear(self.bundle.plant)
    }
}

/// Runs the nonlinear-benchmark pipeline for gain `k` and optional
/// `sigma_bar_sq` (`None` selects the geometric mean).
pub fn analyze_nonlinear(k: f64, sigma_bar_sq: Option<f64>) -> Result<NonlinearAnalysis> {
    let bundle = builtin_nonlinear_example(k, sigma_bar_sq)?;
    let small_gain = small_gain_check(&bundle.gamma)?;
    if !small_gain.pass {
        return Err(Error::SmallGainFails { rho: small_gain.witness });
    }
    let certificate = verify_omega_condition(&bundle.gamma, &bundle.sigma, &bundle.phi);
    if !certificate.pass {
        return Err(Error::PathConstructionFailed);
    }
    let thresholds = compute_thresholds(
        &bundle.gamma,
        &bundle.eta,
        &bundle.sigma,
        &bundle.phi,
        &bundle.lyap,
        None,
    )?;
    Ok(NonlinearAnalysis { bundle, small_gain, certificate, thresholds })
}

/// Practical constants targeting the dead-band level `v_level`:
/// `c_i = σ_i(v_level)` makes `σ_i⁻¹(c_i) = v_level` for every subsystem,
/// so `ĉ = max(v_level, max_i c_i)`.
pub fn practical_constants_for_level(sigma: &OmegaPath, v_level: f64) -> Vec<f64> {
    (0..sigma.n()).map(|i| sigma.eval(i, v_level)).collect()
}
