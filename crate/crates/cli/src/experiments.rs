//! Experiment implementations. Each returns a results table and a summary.

use declab::decoherence::{channel_probabilities, drift, free_generator, purity_report, split, split_at_beta, PerturbativeEvolution, SigmaState};
use declab::hilbert::{trace_distance, trace_env, DensityMatrix, Propagator};
use declab::reduction::{estimate_hitting, mean_value_check, Walker, SimplexPoint, StopRule, WalkParams};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{EnsembleConfig, EvolutionConfig, Experiment, RunConfig, ScenarioSpec, WalkConfig};
use crate::output::{Cell, Table};
use crate::validate::build_scenario;

/// Conservation slack for channel probabilities and drift sums.
const CONSERVATION_TOL: f64 = 1e-10;

/// A failure during execution; `invariant` names the violated condition.
#[derive(Debug)]
pub struct RuntimeError {
    pub invariant: String,
    pub message: String,
}

impl From<declab::Error> for RuntimeError {
    fn from(e: declab::Error) -> Self {
        Self { invariant: e.kind().into(), message: e.to_string() }
    }
}

fn violation(invariant: &str, message: String) -> RuntimeError {
    RuntimeError { invariant: invariant.into(), message }
}

pub type Outcome = Result<(Table, Value), RuntimeError>;

/// Runs a validated configuration.
pub fn run(config: &RunConfig) -> Outcome {
    let seed = config.seed;
    match config.experiment {
        Experiment::Decoherence => decoherence(scenario(config), evolution(config)),
        Experiment::DriftStudy => drift_study(scenario(config), evolution(config)),
        Experiment::Reduction => reduction(walk(config), ensemble(config), seed),
        Experiment::BornCheck => born_check(walk(config), ensemble(config), seed),
        Experiment::Harmonicity => harmonicity(walk(config), ensemble(config), seed),
        Experiment::Anisotropy => anisotropy(walk(config), ensemble(config), seed),
    }
}

fn scenario(c: &RunConfig) -> &ScenarioSpec {
    c.scenario.as_ref().expect("validated")
}

fn evolution(c: &RunConfig) -> &EvolutionConfig {
    c.evolution.as_ref().expect("validated")
}

fn walk(c: &RunConfig) -> &WalkConfig {
    c.walk.as_ref().expect("validated")
}

fn ensemble(c: &RunConfig) -> &EnsembleConfig {
    c.ensemble.as_ref().expect("validated")
}

fn sample_times(evo: &EvolutionConfig) -> Vec<f64> {
    (0..=evo.n_samples).map(|i| evo.t_max * i as f64 / evo.n_samples as f64).collect()
}

fn decoherence(spec: &ScenarioSpec, evo: &EvolutionConfig) -> Outcome {
    let s = build_scenario(spec)?;
    let prop = Propagator::new(&s.hamiltonian()?)?;
    let times = sample_times(evo);
    let n = s.channels.len();

    let perturbative = match evo.perturbative_dt {
        None => None,
        Some(dt) => {
            let sigma0 = split_at_beta(&s.rho0, &s.e, s.beta0)?.rho_hidden;
            let pert = PerturbativeEvolution::new(&s.k, &s.e, &s.c, &s.env_state, &sigma0)?;
            let stride = (evo.t_max / evo.n_samples as f64 / dt).round() as usize;
            Some(pert.run(&trace_env(s.rho0.operator())?, dt, stride * evo.n_samples, stride)?)
        }
    };

    let mut columns: Vec<String> = vec!["t".into()];
    columns.extend((1..=n).map(|j| format!("p_{j}")));
    columns.extend(["offdiag_norm", "tr_rho_hidden_sq", "cross_term"].map(String::from));
    if evo.refresh_beta {
        columns.push("beta".into());
    }
    if perturbative.is_some() {
        columns.push("perturbative_error".into());
    }
    let mut table = Table::new(columns);

    let mut offdiag = Vec::with_capacity(times.len());
    let mut worst_pert = 0.0_f64;
    for (i, &t) in times.iter().enumerate() {
        let rho = DensityMatrix::new(prop.evolve(s.rho0.operator(), t))?;
        let rk = trace_env(rho.operator())?;
        let p = channel_probabilities(&rk, &s.channels)?;
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > CONSERVATION_TOL {
            return Err(violation("channel_probabilities_sum", format!("channel probabilities sum to {total} at t = {t}")));
        }
        let parts = if evo.refresh_beta { split(&rho, &s.e)? } else { split_at_beta(&rho, &s.e, s.beta0)? };
        let report = purity_report(&parts, &rho);
        let off = s.channels.off_diagonal_norm(&rk);
        offdiag.push(off);

        let mut row: Vec<Cell> = vec![t.into()];
        row.extend(p.iter().map(|&x| Cell::from(x)));
        row.extend([off, report.tr_rhohidden2, report.cross_term].map(Cell::from));
        if evo.refresh_beta {
            row.push(parts.beta.into());
        }
        if let Some(samples) = &perturbative {
            let err = trace_distance(&rk, &samples[i].rho_k);
            worst_pert = worst_pert.max(err);
            row.push(err.into());
        }
        table.push(row);
    }

    let threshold = offdiag[0] / std::f64::consts::E;
    let t_dec = times.iter().zip(&offdiag).skip(1).find(|(_, &o)| o < threshold).map(|(t, _)| *t);
    let mut summary = json!({
        "scenario": s.name,
        "channels": n,
        "initial_offdiag_norm": offdiag[0],
        "final_offdiag_norm": offdiag[offdiag.len() - 1],
        "decoherence_time": t_dec,
    });
    if perturbative.is_some() {
        summary["max_perturbative_error"] = json!(worst_pert);
    }
    Ok((table, summary))
}

fn drift_study(spec: &ScenarioSpec, evo: &EvolutionConfig) -> Outcome {
    let s = build_scenario(spec)?;
    let prop = Propagator::new(&free_generator(&s.k, &s.e)?)?;
    let n = s.channels.len();
    let mut columns: Vec<String> = vec!["t".into()];
    columns.extend((1..=n).map(|j| format!("drift_{j}")));
    columns.extend(["drift_sum", "drift_max_abs"].map(String::from));
    let mut table = Table::new(columns);
    let mut worst = 0.0_f64;
    for t in sample_times(evo) {
        let sigma = SigmaState { sigma: prop.evolve(&s.rho_hidden0, t), time: t };
        let d = drift(&s.channels, &s.c, &sigma)?;
        let sum: f64 = d.iter().sum();
        if sum.abs() > CONSERVATION_TOL {
            return Err(violation("drift_sum", format!("channel drifts sum to {sum:e} at t = {t}")));
        }
        let inf = d.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        worst = worst.max(inf);
        let mut row: Vec<Cell> = vec![t.into()];
        row.extend(d.iter().map(|&x| Cell::from(x)));
        row.extend([sum, inf].map(Cell::from));
        table.push(row);
    }
    let summary = json!({
        "scenario": s.name,
        "channels": n,
        "max_abs_drift": worst,
        "channel_commutator_norm": s.channel_commutator_norm()?,
    });
    Ok((table, summary))
}

fn start(ens: &EnsembleConfig) -> Result<SimplexPoint, RuntimeError> {
    Ok(SimplexPoint::new(ens.p0.clone())?)
}

fn reduction(walk: &WalkConfig, ens: &EnsembleConfig, seed: u64) -> Outcome {
    let p0 = start(ens)?;
    let walker = Walker::new(&walk.params(seed), p0.n())?;
    let outcomes = (0..ens.n_traj)
        .into_par_iter()
        .map(|i| walker.simulate(&p0, i, StopRule::Vertex, |_, _| {}))
        .collect::<Result<Vec<_>, _>>()?;

    let n = p0.n();
    let mut table = Table::new(["trajectory", "winner", "steps_taken", "truncated", "absorption_order", "absorption_steps"]);
    let mut counts = vec![0u64; n];
    let mut truncated = 0u64;
    // step of the k-th absorption, summed over completed trajectories
    let mut level_steps = vec![0u128; n - 1];
    for (i, out) in outcomes.iter().enumerate() {
        let order: Vec<String> = out.absorption_order.iter().map(|(j, _)| j.to_string()).collect();
        let steps: Vec<String> = out.absorption_order.iter().map(|(_, s)| s.to_string()).collect();
        table.push(vec![
            Cell::from(i),
            Cell::Int(out.winner.map_or(-1, |w| w as i64)),
            Cell::from(out.steps_taken),
            Cell::Int(out.truncated as i64),
            Cell::Text(order.join(";")),
            Cell::Text(steps.join(";")),
        ]);
        match out.winner {
            Some(w) if !out.truncated => {
                counts[w] += 1;
                for (k, &(_, s)) in out.absorption_order.iter().enumerate() {
                    level_steps[k] += s as u128;
                }
            }
            _ => truncated += 1,
        }
    }
    let done: u64 = counts.iter().sum();
    let mean_level: Vec<Value> = level_steps.iter().map(|&s| if done > 0 { json!(s as f64 / done as f64) } else { Value::Null }).collect();
    let summary = json!({
        "n_trajectories": ens.n_traj,
        "completed": done,
        "truncated": truncated,
        "winner_counts": counts,
        "mean_absorption_step": mean_level,
    });
    Ok((table, summary))
}

fn hitting_rows(table: &mut Table, label: Option<&str>, p0: &[f64], params: &WalkParams, n_traj: u64) -> Result<Value, RuntimeError> {
    let p = SimplexPoint::new(p0.to_vec())?;
    let stats = estimate_hitting(&p, params, n_traj)?;
    if stats.n_trajectories == 0 {
        return Err(violation("completed_trajectories", format!("all {n_traj} trajectories hit max_steps = {} before a vertex", params.max_steps)));
    }
    let z = stats.z_scores(p0);
    for j in 0..p0.len() {
        let mut row = Vec::new();
        if let Some(l) = label {
            row.push(Cell::from(l));
        }
        row.extend([Cell::from(j), Cell::from(p0[j]), Cell::from(stats.pi_hat[j]), Cell::from(stats.std_err[j])]);
        if label.is_some() {
            row.push(Cell::from(z[j]));
        }
        table.push(row);
    }
    let max_z = z.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    Ok(json!({
        "n_trajectories": stats.n_trajectories,
        "truncated": stats.truncated,
        "truncation_fraction": stats.truncation_fraction(),
        "mean_steps": stats.mean_steps,
        "counts": stats.counts,
        "z_scores": z,
        "max_abs_z": max_z,
    }))
}

fn born_check(walk: &WalkConfig, ens: &EnsembleConfig, seed: u64) -> Outcome {
    let mut table = Table::new(["channel", "p0", "pi_hat", "std_err"]);
    let mut summary = hitting_rows(&mut table, None, &ens.p0, &walk.params(seed), ens.n_traj)?;
    let max_z = summary["max_abs_z"].as_f64().unwrap_or(f64::INFINITY);
    summary["within_3_sigma"] = json!(max_z <= 3.0);
    Ok((table, summary))
}

fn anisotropy(walk: &WalkConfig, ens: &EnsembleConfig, seed: u64) -> Outcome {
    let mut table = Table::new(["walk", "channel", "p0", "pi_hat", "std_err", "z_score"]);
    let aniso = walk.params(seed);
    let iso = WalkParams { covariance: None, location_covariance: None, ..aniso.clone() };
    let control = hitting_rows(&mut table, Some("isotropic"), &ens.p0, &iso, ens.n_traj)?;
    let test = hitting_rows(&mut table, Some("anisotropic"), &ens.p0, &aniso, ens.n_traj)?;
    let z = |v: &Value| v["max_abs_z"].as_f64().unwrap_or(f64::INFINITY);
    let summary = json!({
        "isotropic": control,
        "anisotropic": test,
        "control_within_3_sigma": z(&control) <= 3.0,
        "anisotropic_beyond_5_sigma": z(&test) > 5.0,
    });
    Ok((table, summary))
}

fn harmonicity(walk: &WalkConfig, ens: &EnsembleConfig, seed: u64) -> Outcome {
    let p0 = start(ens)?;
    let radius = ens.radius.expect("validated");
    let n_sphere = ens.n_sphere.expect("validated");
    let report = mean_value_check(&p0, radius, &walk.params(seed), ens.n_traj, n_sphere)?;
    if report.lhs.iter().chain(&report.rhs).any(|x| !x.is_finite()) {
        return Err(violation("completed_trajectories", format!("no trajectory reached a face within max_steps = {}", walk.max_steps)));
    }
    let z = report.z_scores();
    let mut table = Table::new(["face", "lhs", "rhs", "combined_std_err", "z_score"]);
    for k in 0..p0.n() {
        table.push(vec![Cell::from(k), report.lhs[k].into(), report.rhs[k].into(), report.combined_std_err[k].into(), z[k].into()]);
    }
    let summary = json!({
        "n_sphere": report.sphere_points.len(),
        "max_z": z.iter().fold(0.0_f64, |m, x| m.max(*x)),
        "holds_within_3_sigma": report.holds_within(3.0),
    });
    Ok((table, summary))
}
