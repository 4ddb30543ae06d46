//! Dry-run checks of a resolved configuration.

use declab::decoherence::{solve_beta, split_at_beta};
use declab::models::{build_combined, build_pointer_bath, build_pointer_ruler_phonon, Scenario};
use declab::reduction::{distance_to_face, SimplexPoint, Walker};
use declab::Error;

use crate::config::{Experiment, Finding, RunConfig, ScenarioSpec};

pub fn build_scenario(spec: &ScenarioSpec) -> declab::Result<Scenario> {
    match spec {
        ScenarioSpec::PointerBath(p) => build_pointer_bath(p),
        ScenarioSpec::PointerRulerPhonon(p) => build_pointer_ruler_phonon(p),
        ScenarioSpec::Combined { ruler, bath } => build_combined(ruler, bath),
    }
}

fn describe(e: &Error) -> String {
    match e {
        Error::InvalidChannels(m) => format!("channel blocks do not resolve the identity: {m}"),
        Error::GibbsOverflow { .. } | Error::BetaInfeasible { .. } | Error::DegenerateSpectrum => format!("beta infeasible: {e}"),
        other => other.to_string(),
    }
}

/// Every problem that would stop `config` from running. Empty means valid.
pub fn validate(config: &RunConfig) -> Vec<Finding> {
    let mut findings = Vec::new();
    let exp = config.experiment;

    if exp.needs_scenario() {
        match &config.scenario {
            None => findings.push(Finding::new("scenario", format!("{} needs a scenario block", exp.name()))),
            Some(spec) => check_scenario(spec, config, &mut findings),
        }
        match &config.evolution {
            None => findings.push(Finding::new("evolution", format!("{} needs an evolution block", exp.name()))),
            Some(evo) => {
                if !(evo.t_max > 0.0 && evo.t_max.is_finite()) {
                    findings.push(Finding::new("evolution.t_max", "must be positive"));
                }
                if evo.n_samples == 0 {
                    findings.push(Finding::new("evolution.n_samples", "must be at least 1"));
                }
                if let Some(dt) = evo.perturbative_dt {
                    let per_sample = evo.t_max / evo.n_samples.max(1) as f64 / dt;
                    if !(dt > 0.0) || (per_sample.round() - per_sample).abs() > 1e-9 * per_sample.max(1.0) || per_sample.round() < 1.0 {
                        findings.push(Finding::new("evolution.perturbative_dt", "sample spacing t_max/n_samples must be a positive multiple of perturbative_dt"));
                    }
                }
            }
        }
    } else {
        check_walk(config, &mut findings);
    }
    findings
}

fn check_scenario(spec: &ScenarioSpec, config: &RunConfig, findings: &mut Vec<Finding>) {
    let scenario = match build_scenario(spec) {
        Ok(s) => s,
        Err(e) => {
            findings.push(Finding::new("scenario", describe(&e)));
            return;
        }
    };
    let refresh = config.evolution.as_ref().is_some_and(|e| e.refresh_beta);
    if config.experiment == Experiment::Decoherence {
        if let Err(e) = split_at_beta(&scenario.rho0, &scenario.e, scenario.beta0) {
            findings.push(Finding::new("scenario.beta0", describe(&e)));
        }
        if refresh {
            if let Err(e) = solve_beta(&scenario.e, &scenario.rho0) {
                findings.push(Finding::new("evolution.refresh_beta", describe(&e)));
            }
        }
    }
}

fn check_walk(config: &RunConfig, findings: &mut Vec<Finding>) {
    let exp = config.experiment;
    let (Some(walk), Some(ens)) = (&config.walk, &config.ensemble) else {
        if config.walk.is_none() {
            findings.push(Finding::new("walk", format!("{} needs a walk block", exp.name())));
        }
        if config.ensemble.is_none() {
            findings.push(Finding::new("ensemble", format!("{} needs an ensemble block", exp.name())));
        }
        return;
    };
    if !(walk.step_sigma > 0.0 && walk.step_sigma.is_finite()) {
        findings.push(Finding::new("walk.step_sigma", "must be positive"));
    }
    if walk.max_steps == 0 {
        findings.push(Finding::new("walk.max_steps", "must be at least 1"));
    }
    if ens.n_traj == 0 {
        findings.push(Finding::new("ensemble.n_traj", "must be at least 1"));
    }
    let p0 = match SimplexPoint::new(ens.p0.clone()) {
        Ok(p) => p,
        Err(e) => {
            findings.push(Finding::new("ensemble.p0", e.to_string()));
            return;
        }
    };
    if let Err(e) = Walker::new(&walk.params(config.seed), p0.n()) {
        let field = if walk.covariance.is_some() && e.to_string().contains("covariance") { "walk.covariance" } else { "walk" };
        findings.push(Finding::new(field, e.to_string()));
    }
    match exp {
        Experiment::Anisotropy if walk.covariance.is_none() => {
            findings.push(Finding::new("walk.covariance", "anisotropy needs a covariance for the anisotropic arm"));
        }
        Experiment::Harmonicity => {
            if p0.active_count() != p0.n() {
                findings.push(Finding::new("ensemble.p0", "harmonicity needs every channel active"));
            }
            match (ens.radius, ens.n_sphere) {
                (Some(r), Some(m)) => {
                    let inside = (0..p0.n()).all(|k| distance_to_face(&p0, k) > r);
                    if !(r > 0.0) || !inside {
                        findings.push(Finding::new("ensemble.radius", format!("sphere of radius {r} is not strictly inside the simplex")));
                    }
                    if m == 0 {
                        findings.push(Finding::new("ensemble.n_sphere", "must be at least 1"));
                    }
                }
                _ => findings.push(Finding::new("ensemble", "harmonicity needs radius and n_sphere")),
            }
        }
        _ => {}
    }
}
