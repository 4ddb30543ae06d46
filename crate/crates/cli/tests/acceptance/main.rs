//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! straight to stdout so it shows without `--nocapture`. The binary's
//! interface tests live in `interface`.

mod interface;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use declab::decoherence::{convergence_order, drift, purity_report, sigma_at, split};
use declab::hilbert::{CMatrix, DensityMatrix, Operator, SpaceTag};
use declab::models::{build_pointer_bath, build_pointer_ruler_phonon, irregular_levels, seeded_hidden_density, PointerBathParams, PointerRulerParams};
use declab::random::{complex_gaussian, stream_rng};
use declab::reduction::{estimate_hitting, martingale_check, mean_value_check, HittingStats, SimplexPoint, WalkParams};
use num_complex::Complex64;
use serde_json::Value;

const SIGMA: f64 = 0.005;
const N_TRAJ: u64 = 100_000;
const MAX_STEPS: u64 = 10_000_000;

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n}: {verdict} {detail}");
    let _ = out.flush();
    assert!(pass, "criterion {n}: {detail}");
}

fn born_cases() -> Vec<Vec<f64>> {
    vec![vec![0.3, 0.7], vec![0.1, 0.9], vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1], vec![0.25; 4]]
}

fn hitting(p0: &[f64], sigma: f64, seed: u64) -> HittingStats {
    let p = SimplexPoint::new(p0.to_vec()).unwrap();
    estimate_hitting(&p, &WalkParams::isotropic(sigma, MAX_STEPS, seed), N_TRAJ).unwrap()
}

/// Isotropic ensembles at the base step size, shared by criteria 1, 3 and 8.
fn base_ensembles() -> &'static Vec<HittingStats> {
    static CELL: OnceLock<Vec<HittingStats>> = OnceLock::new();
    CELL.get_or_init(|| born_cases().iter().enumerate().map(|(i, p0)| hitting(p0, SIGMA, 1000 + i as u64)).collect())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[test]
fn criterion_1_hitting_probabilities_follow_initial_weights() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (p0, stats) in born_cases().iter().zip(base_ensembles()) {
        let z = max_abs(&stats.z_scores(p0));
        let trunc = stats.truncation_fraction();
        pass &= z <= 3.0 && trunc < 1e-3;
        detail.push(format!("{p0:?}: max|z| {z:.2}, truncated {trunc:.1e}"));
    }
    report(1, pass, &detail.join("; "));
}

#[test]
fn criterion_2_face_hitting_has_the_mean_value_property() {
    let p0 = SimplexPoint::new(vec![0.5, 0.3, 0.2]).unwrap();
    let params = WalkParams::isotropic(SIGMA, MAX_STEPS, 2002);
    let rep = mean_value_check(&p0, 0.05, &params, 20_000, 32).unwrap();
    let z = rep.z_scores();
    let pass = rep.sphere_points.len() >= 32 && rep.holds_within(3.0);
    report(2, pass, &format!("lhs {:.4?}, rhs {:.4?}, z {z:.2?}", rep.lhs, rep.rhs));
}

#[test]
fn criterion_3_anisotropic_steps_break_the_born_law() {
    let p0 = [0.2, 0.3, 0.5];
    let control = &base_ensembles()[2];
    let control_z = max_abs(&control.z_scores(&p0));
    let control_ok = control_z <= 3.0 && control.truncation_fraction() < 1e-3;

    let cov = vec![vec![4.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    let params = WalkParams::isotropic(SIGMA, MAX_STEPS, 1002).with_covariance(cov);
    let stats = estimate_hitting(&SimplexPoint::new(p0.to_vec()).unwrap(), &params, N_TRAJ).unwrap();
    let z = stats.z_scores(&p0);
    let deviates = max_abs(&z) > 5.0;
    report(
        3,
        control_ok && deviates,
        &format!("anisotropic pi_hat {:.4?}, z {z:.2?}; isotropic control max|z| {control_z:.2}", stats.pi_hat),
    );
}

#[test]
fn criterion_4_coordinates_are_martingales_and_sum_to_one() {
    let p0 = SimplexPoint::new(vec![0.2, 0.3, 0.5]).unwrap();
    let params = WalkParams::isotropic(SIGMA, MAX_STEPS, 4004);
    let rep = martingale_check(&p0, &params, 10_000, &[100, 1_000, 10_000]).unwrap();
    let mut pass = rep.max_sum_deviation <= 1e-12;
    let mut detail = vec![format!("max |sum - 1| {:.1e}", rep.max_sum_deviation)];
    for c in &rep.checkpoints {
        let z: Vec<f64> = c.mean.iter().zip(&c.std_err).zip(p0.coords()).map(|((m, s), p)| (m - p) / s).collect();
        pass &= max_abs(&z) <= 3.0;
        detail.push(format!("step {}: z {z:.2?}", c.step));
    }
    report(4, pass, &detail.join("; "));
}

#[test]
fn criterion_5_drift_vanishes_only_for_commuting_couplings() {
    let mut bath_worst = 0.0_f64;
    for seed in 0..20u64 {
        let s = build_pointer_bath(&PointerBathParams::standard(3, 4, 0.3, seed)).unwrap();
        let x_diag = x_diagonal_hidden(s.joint_space(), seed);
        let generic = seeded_hidden_density(s.joint_space(), 6, 0.5, seed).unwrap();
        for sigma0 in [&x_diag, &generic] {
            for t in [0.0, 1.3, 7.9] {
                let d = drift(&s.channels, &s.c, &sigma_at(sigma0, &s.k, &s.e, t).unwrap()).unwrap();
                bath_worst = bath_worst.max(max_abs(&d));
            }
        }
    }
    let mut ruler_min = f64::INFINITY;
    let mut ruler_sum = 0.0_f64;
    let s = build_pointer_ruler_phonon(&PointerRulerParams::standard(Complex64::new(0.3, 0.1))).unwrap();
    for seed in 0..20u64 {
        let sigma0 = seeded_hidden_density(s.joint_space(), 4, 0.2, seed).unwrap();
        let d = drift(&s.channels, &s.c, &sigma_at(&sigma0, &s.k, &s.e, 0.7).unwrap()).unwrap();
        ruler_min = ruler_min.min(max_abs(&d));
        ruler_sum = ruler_sum.max(d.iter().sum::<f64>().abs());
    }
    let pass = bath_worst <= 1e-10 && ruler_min > 1e-6 && ruler_sum <= 1e-10;
    report(5, pass, &format!("pointer-bath max|drift| {bath_worst:.1e}; ruler min max|drift| {ruler_min:.2e}, max |sum| {ruler_sum:.1e}"));
}

/// Traceless Hermitian operator block diagonal in the pointer basis.
fn x_diagonal_hidden(space: SpaceTag, seed: u64) -> Operator {
    let (dk, de) = (space.dim_k, space.dim_e);
    let mut rng = stream_rng(seed, 501);
    let mut m = CMatrix::zeros(dk * de, dk * de);
    for k in 0..dk {
        for e in 0..de {
            for f in 0..de {
                m[(k * de + e, k * de + f)] = complex_gaussian(&mut rng);
            }
        }
    }
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let shift = m.trace() / Complex64::new((dk * de) as f64, 0.0);
    Operator::new(space, m - CMatrix::identity(dk * de, dk * de) * shift).unwrap()
}

fn random_state(space: SpaceTag, rank: usize, seed: u64) -> DensityMatrix {
    let d = space.dim();
    let mut rng = stream_rng(seed, 601);
    let g = CMatrix::from_fn(d, rank, |_, _| complex_gaussian(&mut rng));
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(Operator::new(space, m / tr).unwrap()).unwrap()
}

#[test]
fn criterion_6_hidden_part_is_collectively_invisible() {
    let mut worst_trace = 0.0_f64;
    let mut worst_avg = 0.0_f64;
    let mut worst_identity = 0.0_f64;
    for (dk, de) in [(2usize, 4usize), (3, 3)] {
        let space = SpaceTag::joint(dk, de);
        let e = Operator::from_real_diagonal(SpaceTag::environment(dk, de), &irregular_levels(de, 3.0)).unwrap();
        for i in 0..100u64 {
            // even indices pure, odd ones of growing rank
            let rank = if i % 2 == 0 { 1 } else { 2 + (i as usize / 2) % (dk * de - 1) };
            let rho = random_state(space, rank, 7_000 + i);
            let s = split(&rho, &e).unwrap();
            worst_trace = worst_trace.max(s.rho_hidden.trace().norm());
            for a in 0..dk {
                for b in 0..dk {
                    let mut unit = CMatrix::zeros(dk, dk);
                    unit[(a, b)] = Complex64::new(1.0, 0.0);
                    let promoted = Operator::new(SpaceTag::collective(dk, de), unit).unwrap().embed_collective().unwrap();
                    worst_avg = worst_avg.max(promoted.trace_product(&s.rho_hidden).norm());
                }
            }
            if rank == 1 {
                let r = purity_report(&s, &rho);
                worst_identity = worst_identity.max((r.identity_residual() + 2.0 * r.cross_term).abs());
            }
        }
    }
    let pass = worst_trace <= 1e-10 && worst_avg <= 1e-10 && worst_identity <= 1e-10;
    report(6, pass, &format!("max |Tr hidden| {worst_trace:.1e}, max collective average {worst_avg:.1e}, max purity identity residual {worst_identity:.1e}"));
}

#[test]
fn criterion_7_perturbative_evolution_converges_at_second_order() {
    let reference = build_pointer_bath(&PointerBathParams::standard(2, 8, 0.1, 1)).unwrap();
    let t = reference.decoherence_time(60.0, 0.05).unwrap().expect("reference decoheres");
    let lambdas = [0.1, 0.05, 0.025, 0.0125];
    let errors: Vec<f64> = lambdas
        .iter()
        .map(|&l| build_pointer_bath(&PointerBathParams::standard(2, 8, l, 1)).unwrap().perturbative_error(t, 0.01).unwrap())
        .collect();
    let order = convergence_order(&lambdas, &errors).unwrap();
    report(7, order >= 1.8, &format!("T = {t:.2}, errors {errors:.3?}, order {order:.2}"));
}

#[test]
fn criterion_8_hitting_estimates_are_step_size_robust() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, p0) in born_cases().iter().enumerate().filter(|(_, p)| p.len() == 3) {
        let coarse = &base_ensembles()[i];
        let fine = hitting(p0, SIGMA / 2.0, 8000 + i as u64);
        let z: Vec<f64> = (0..3)
            .map(|j| (fine.pi_hat[j] - coarse.pi_hat[j]) / coarse.std_err[j].hypot(fine.std_err[j]))
            .collect();
        pass &= max_abs(&z) < 3.0;
        detail.push(format!("{p0:?}: z {z:.2?}"));
    }
    report(8, pass, &detail.join("; "));
}

fn run_cli(config: &Path, prefix: &Path, threads: &str) -> (Vec<u8>, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_declab"))
        .args(["run", config.to_str().unwrap(), "--out", prefix.to_str().unwrap(), "--threads", threads])
        .env_remove("THREADS")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read(prefix.with_extension("results.csv")).unwrap();
    let mut manifest: Value = serde_json::from_str(&std::fs::read_to_string(prefix.with_extension("manifest.json")).unwrap()).unwrap();
    let obj = manifest.as_object_mut().unwrap();
    obj.remove("created_unix");
    obj.remove("results_file");
    obj["config"].as_object_mut().unwrap().remove("output");
    (csv, manifest)
}

#[test]
fn criterion_9_runs_are_reproducible_across_thread_counts() {
    let configs = [
        r#"{"schema_version": 1, "experiment": "born_check", "seed": 42, "walk": {"step_sigma": 0.01}, "ensemble": {"p0": [0.3, 0.7], "n_traj": 20000}}"#,
        r#"{"schema_version": 1, "experiment": "reduction", "seed": 5, "walk": {"step_sigma": 0.01}, "ensemble": {"p0": [0.2, 0.3, 0.5], "n_traj": 5000}}"#,
        r#"{"schema_version": 1, "experiment": "anisotropy", "seed": 6, "walk": {"step_sigma": 0.02, "covariance": [[4, 0, 0], [0, 1, 0], [0, 0, 1]]}, "ensemble": {"p0": [0.2, 0.3, 0.5], "n_traj": 5000}}"#,
        r#"{"schema_version": 1, "experiment": "harmonicity", "seed": 7, "walk": {"step_sigma": 0.01}, "ensemble": {"p0": [0.5, 0.3, 0.2], "n_traj": 500, "radius": 0.05, "n_sphere": 8}}"#,
        r#"{"schema_version": 1, "experiment": "decoherence", "seed": 1, "scenario": {"model": "pointer_bath", "lambda": 0.1}, "evolution": {"t_max": 10.0, "n_samples": 50, "perturbative_dt": 0.02, "refresh_beta": true}}"#,
        r#"{"schema_version": 1, "experiment": "drift_study", "seed": 3, "scenario": {"model": "combined", "ruler": {"lambda": [0.2, 0.1]}, "bath": {"lambda": 0.1}}, "evolution": {"t_max": 5.0, "n_samples": 20}}"#,
    ];
    let dir = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    for (i, body) in configs.iter().enumerate() {
        let cfg = dir.path().join(format!("c{i}.json"));
        std::fs::write(&cfg, body).unwrap();
        let runs: Vec<(Vec<u8>, Value)> = [("a", "1"), ("b", "1"), ("c", "8"), ("d", "8")]
            .iter()
            .map(|(tag, threads)| run_cli(&cfg, &dir.path().join(format!("c{i}{tag}")), threads))
            .collect();
        if runs.iter().any(|r| r != &runs[0]) {
            failures.push(i);
        }
    }
    let pass = failures.is_empty();
    report(9, pass, &format!("{} experiments, 2 runs each at 1 and 8 threads; differing: {failures:?}", configs.len()));
}
