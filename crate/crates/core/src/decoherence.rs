//! The decohering split `ρ = ρ′ + ρ″`, thermal matching of the environment,
//! the second-order master equation for the reduced state and the drift of
//! channel probabilities driven by the hidden density.
//!
//! With `H = K + E + C`, the decohering part is `ρ′ = ρ(K) ⊗ ρ(E)` where
//! `ρ(E) = exp(−βE)/Z`, and the hidden part `ρ″ = ρ − ρ′` is traceless and
//! invisible to every collective observable. Once the collective part of `C`
//! has been subtracted (`tr(ρ(E) C) = 0`), the reduced state obeys
//!
//! ```text
//! dρ(K)/dt = −i[K, ρ(K)] − i tr_E [C, ρ″]
//! ρ″(t)    = −i ∫₀ᵗ U(t−s) [C, ρ′(s)] U†(t−s) ds + σ(t),   σ(t) = U(t) ρ″(0) U†(t)
//! ```
//!
//! with `U(t) = exp(−i(K + E)t)`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{
    commutator, hermitian_eigen, tensor, trace_collective, trace_env, CMatrix, DensityMatrix, Operator, Propagator,
    SpaceKind, SpaceTag, GENERATOR_TOL, I,
};

/// Tolerance used when checking channel projector algebra.
pub const CHANNEL_TOL: f64 = 1e-10;
/// Largest `|β|·(ε_max − ε_min)` accepted by [`gibbs`].
pub const MAX_BOLTZMANN_EXPONENT: f64 = 700.0;
/// Energy residual at which [`solve_beta`] stops bisecting.
pub const BETA_ENERGY_TOL: f64 = 1e-12;

/// Thermal state `exp(−βE)/Z` together with `log Z`.
#[derive(Debug, Clone)]
pub struct Gibbs {
    pub state: DensityMatrix,
    pub log_z: f64,
}

pub fn gibbs(e: &Operator, beta: f64) -> Result<Gibbs> {
    if !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("beta must be finite, got {beta}")));
    }
    let defect = e.hermitian_defect();
    if defect > GENERATOR_TOL {
        return Err(Error::NotHermitian { defect, tolerance: GENERATOR_TOL });
    }
    let (energies, vectors) = hermitian_eigen(e.matrix());
    let (weights, log_z) = boltzmann_weights(&energies, beta)?;
    let d = energies.len();
    let scaled = CMatrix::from_fn(d, d, |i, j| vectors[(i, j)] * weights[j]);
    let rho = Operator::new(e.space(), scaled * vectors.adjoint())?;
    Ok(Gibbs { state: DensityMatrix::new(rho)?, log_z })
}

/// Normalized Boltzmann weights of a spectrum and `log Z`. The spectrum is
/// shifted so every exponent is non-positive.
fn boltzmann_weights(energies: &DVector<f64>, beta: f64) -> Result<(DVector<f64>, f64)> {
    let (lo, hi) = spectral_range(energies);
    let exponent = beta.abs() * (hi - lo);
    if exponent > MAX_BOLTZMANN_EXPONENT {
        return Err(Error::GibbsOverflow { exponent });
    }
    let reference = if beta >= 0.0 { lo } else { hi };
    let raw = energies.map(|x| (-beta * (x - reference)).exp());
    let z_shifted: f64 = raw.sum();
    Ok((raw / z_shifted, -beta * reference + z_shifted.ln()))
}

fn spectral_range(energies: &DVector<f64>) -> (f64, f64) {
    energies.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn thermal_mean_energy(energies: &DVector<f64>, beta: f64) -> Result<f64> {
    let (w, _) = boltzmann_weights(energies, beta)?;
    Ok(w.dot(energies))
}

/// Environment energy `Tr((I ⊗ E) ρ)` of a joint state.
pub fn environment_energy(e: &Operator, rho: &DensityMatrix) -> Result<f64> {
    let rho_e = trace_collective(rho.operator())?;
    if rho_e.space() != e.space() {
        return Err(Error::SpaceMismatch { expected: rho_e.space(), found: e.space() });
    }
    Ok(e.trace_product(&rho_e).re)
}

/// Inverse temperature whose Gibbs state reproduces the environment energy of
/// `rho`, i.e. the root of `∂ log Z/∂β = −Tr((I ⊗ E) ρ)`.
pub fn solve_beta(e: &Operator, rho: &DensityMatrix) -> Result<f64> {
    solve_beta_with_tolerance(e, rho, BETA_ENERGY_TOL)
}

pub fn solve_beta_with_tolerance(e: &Operator, rho: &DensityMatrix, energy_tol: f64) -> Result<f64> {
    let target = environment_energy(e, rho)?;
    solve_beta_for_energy(e, target, energy_tol)
}

/// Bisection on the strictly decreasing map `β ↦ ⟨E⟩_β`; the bracket grows
/// geometrically from `[-1, 1]` until it straddles `target`.
pub fn solve_beta_for_energy(e: &Operator, target: f64, energy_tol: f64) -> Result<f64> {
    let defect = e.hermitian_defect();
    if defect > GENERATOR_TOL {
        return Err(Error::NotHermitian { defect, tolerance: GENERATOR_TOL });
    }
    let (energies, _) = hermitian_eigen(e.matrix());
    let (min, max) = spectral_range(&energies);
    let span = max - min;
    if span <= 1e-12 * max.abs().max(min.abs()).max(1.0) {
        return Err(Error::DegenerateSpectrum);
    }
    if !(target > min && target < max) {
        return Err(Error::BetaInfeasible { target, min, max });
    }
    let infeasible = || Error::BetaInfeasible { target, min, max };
    let mean = |b: f64| thermal_mean_energy(&energies, b);
    let limit = MAX_BOLTZMANN_EXPONENT / span;

    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    while mean(hi)? > target {
        if hi >= limit {
            return Err(infeasible());
        }
        lo = hi;
        hi = (2.0 * hi).min(limit);
    }
    while mean(lo)? < target {
        if lo <= -limit {
            return Err(infeasible());
        }
        hi = lo;
        lo = (2.0 * lo).max(-limit);
    }

    // mean(lo) >= target >= mean(hi)
    loop {
        let mid = 0.5 * (lo + hi);
        let f = mean(mid)? - target;
        if f.abs() <= energy_tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// `tr_E((I(K) ⊗ ρ_E) C)`: the part of a coupling that acts on the collective
/// space alone when the environment is in state `ρ_E`.
pub fn collective_part(c: &Operator, rho_e: &DensityMatrix) -> Result<Operator> {
    expect_kind(c, SpaceKind::Joint)?;
    let weight = rho_e.operator().embed_environment()?;
    if weight.space() != c.space() {
        return Err(Error::SpaceMismatch { expected: c.space(), found: weight.space() });
    }
    trace_env(&(&weight * c))
}

/// `C − tr_E((I ⊗ ρ_E) C) ⊗ I(E)`, after which `tr_E((I ⊗ ρ_E) C) = 0`.
pub fn subtract_collective(c: &Operator, rho_e: &DensityMatrix) -> Result<Operator> {
    let defect = c.hermitian_defect();
    if defect > GENERATOR_TOL {
        return Err(Error::NotHermitian { defect, tolerance: GENERATOR_TOL });
    }
    let part = collective_part(c, rho_e)?;
    Ok(c - &part.embed_collective()?)
}

/// The decohering split of a joint state.
#[derive(Debug, Clone)]
pub struct DecoheringSplit {
    /// `ρ′ = ρ(K) ⊗ ρ(E)`.
    pub rho_prime: Operator,
    /// `ρ″ = ρ − ρ′`.
    pub rho_hidden: Operator,
    pub beta: f64,
    pub env_state: DensityMatrix,
    pub log_z: f64,
}

/// Splits `rho` with `β` matched to its environment energy.
pub fn split(rho: &DensityMatrix, e: &Operator) -> Result<DecoheringSplit> {
    let beta = solve_beta(e, rho)?;
    split_at_beta(rho, e, beta)
}

/// Splits `rho` against a Gibbs environment at a given `β` (used when `β` is
/// frozen at its initial value during a run).
pub fn split_at_beta(rho: &DensityMatrix, e: &Operator, beta: f64) -> Result<DecoheringSplit> {
    let Gibbs { state, log_z } = gibbs(e, beta)?;
    let rho_k = trace_env(rho.operator())?;
    let rho_prime = tensor(&rho_k, state.operator())?;
    let rho_hidden = rho.operator() - &rho_prime;
    Ok(DecoheringSplit { rho_prime, rho_hidden, beta, env_state: state, log_z })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurityReport {
    pub tr_rho2: f64,
    pub tr_rhoprime2: f64,
    pub tr_rhohidden2: f64,
    /// `Tr(ρ″ ρ′)`.
    pub cross_term: f64,
}

impl PurityReport {
    /// `Tr(ρ″²) − (1 − Tr(ρ′²))`; equals `−2·cross_term` for a pure state.
    pub fn identity_residual(&self) -> f64 {
        self.tr_rhohidden2 - (1.0 - self.tr_rhoprime2)
    }
}

pub fn purity_report(split: &DecoheringSplit, rho: &DensityMatrix) -> PurityReport {
    let hs = |a: &Operator, b: &Operator| a.trace_product(b).re;
    PurityReport {
        tr_rho2: rho.purity(),
        tr_rhoprime2: hs(&split.rho_prime, &split.rho_prime),
        tr_rhohidden2: hs(&split.rho_hidden, &split.rho_hidden),
        cross_term: hs(&split.rho_hidden, &split.rho_prime),
    }
}

/// `K ⊗ I + I ⊗ E`.
pub fn free_generator(k: &Operator, e: &Operator) -> Result<Operator> {
    expect_kind(k, SpaceKind::Collective)?;
    expect_kind(e, SpaceKind::Environment)?;
    Ok(&k.embed_collective()? + &e.embed_environment()?)
}

/// Freely evolved hidden density.
#[derive(Debug, Clone)]
pub struct SigmaState {
    pub sigma: Operator,
    pub time: f64,
}

/// `σ(t) = U(t) ρ″(0) U†(t)` with `U(t) = exp(−i(K + E)t)`.
pub fn sigma_at(rho_hidden_0: &Operator, k: &Operator, e: &Operator, t: f64) -> Result<SigmaState> {
    check_traceless_hermitian(rho_hidden_0)?;
    let prop = Propagator::new(&free_generator(k, e)?)?;
    if prop.space() != rho_hidden_0.space() {
        return Err(Error::SpaceMismatch { expected: prop.space(), found: rho_hidden_0.space() });
    }
    Ok(SigmaState { sigma: prop.evolve(rho_hidden_0, t), time: t })
}

fn check_traceless_hermitian(op: &Operator) -> Result<()> {
    expect_kind(op, SpaceKind::Joint)?;
    let defect = op.hermitian_defect();
    if defect > GENERATOR_TOL {
        return Err(Error::NotHermitian { defect, tolerance: GENERATOR_TOL });
    }
    let tr = op.trace().norm();
    if tr > GENERATOR_TOL {
        return Err(Error::InvalidParameter(format!("hidden density must be traceless, |Tr| = {tr:e}")));
    }
    Ok(())
}

/// Operators sampled on the uniform grid `0, dt, 2dt, …`.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub dt: f64,
    pub samples: Vec<Operator>,
}

impl TimeSeries {
    /// Number of grid steps to reach `t`, if `t` is a grid point covered by
    /// the samples.
    fn steps_to(&self, t: f64) -> Result<usize> {
        let fail = |reason: String| Error::GridCoverage { t, reason };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(fail(format!("grid spacing {} is not positive", self.dt)));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(fail("end time must be finite and non-negative".into()));
        }
        let steps = (t / self.dt).round();
        if (steps * self.dt - t).abs() > 1e-9 * t.max(self.dt) {
            return Err(fail(format!("t is not a multiple of dt = {}", self.dt)));
        }
        let steps = steps as usize;
        if self.samples.len() <= steps {
            return Err(fail(format!("{} samples reach only t = {}", self.samples.len(), self.samples.len().saturating_sub(1) as f64 * self.dt)));
        }
        Ok(steps)
    }
}

/// `ρ″(t)` from its integral representation, with the memory integral done by
/// composite trapezoid on the history grid.
pub fn rho_hidden_formal(
    rho_prime_history: &TimeSeries,
    c: &Operator,
    k: &Operator,
    e: &Operator,
    t: f64,
    sigma0: &Operator,
) -> Result<Operator> {
    let steps = rho_prime_history.steps_to(t)?;
    let dt = rho_prime_history.dt;
    let sigma = sigma_at(sigma0, k, e, t)?.sigma;
    let prop = Propagator::new(&free_generator(k, e)?)?;
    let d = prop.space().dim();

    let mut integral = CMatrix::zeros(d, d);
    for (i, rho_prime) in rho_prime_history.samples[..=steps].iter().enumerate() {
        if rho_prime.space() != c.space() {
            return Err(Error::SpaceMismatch { expected: c.space(), found: rho_prime.space() });
        }
        let weight = if steps == 0 { 0.0 } else if i == 0 || i == steps { 0.5 * dt } else { dt };
        if weight == 0.0 {
            continue;
        }
        let source = prop.to_eigenbasis(commutator(c, rho_prime)?.matrix());
        let lag = (steps - i) as f64 * dt;
        integral += source.component_mul(&prop.conjugation_phases(lag)) * Complex64::new(weight, 0.0);
    }
    let memory = Operator::new(c.space(), prop.from_eigenbasis(&integral) * (-I))?;
    Ok(&memory + &sigma)
}

/// Right-hand side `−i[K, ρ(K)] − i tr_E [C, ρ″]` of the reduced equation.
pub fn master_rhs(rho_k: &Operator, k: &Operator, c: &Operator, rho_hidden: &Operator) -> Result<Operator> {
    let free = commutator(k, rho_k)?;
    let coupling = trace_env(&commutator(c, rho_hidden)?)?;
    if coupling.space() != free.space() {
        return Err(Error::SpaceMismatch { expected: free.space(), found: coupling.space() });
    }
    Ok((&free + &coupling).scale(-I))
}

/// Least-squares slope of `ln error` against `ln λ`: the empirical order of
/// convergence.
pub fn convergence_order(lambdas: &[f64], errors: &[f64]) -> Result<f64> {
    if lambdas.len() != errors.len() || lambdas.len() < 2 {
        return Err(Error::InvalidParameter("need at least two (lambda, error) pairs".into()));
    }
    if lambdas.iter().chain(errors).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("lambdas and errors must be positive".into()));
    }
    let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("lambdas must not all be equal".into()));
    }
    Ok(xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx)
}

/// Orthogonal projectors on the collective space resolving the identity.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    projectors: Vec<Operator>,
    labels: Vec<String>,
}

impl ChannelSet {
    pub fn new(projectors: Vec<Operator>, labels: Vec<String>) -> Result<Self> {
        let bad = |msg: String| Error::InvalidChannels(msg);
        if projectors.is_empty() {
            return Err(bad("no projectors".into()));
        }
        if labels.len() != projectors.len() {
            return Err(bad(format!("{} labels for {} projectors", labels.len(), projectors.len())));
        }
        let space = projectors[0].space();
        if space.kind != SpaceKind::Collective {
            return Err(bad("projectors must act on the collective space".into()));
        }
        let mut total = Operator::zeros(space);
        for (j, p) in projectors.iter().enumerate() {
            if p.space() != space {
                return Err(bad(format!("projector {j} acts on {:?}", p.space())));
            }
            if p.hermitian_defect() > CHANNEL_TOL {
                return Err(bad(format!("projector {j} is not Hermitian")));
            }
            if (&(p * p) - p).max_abs() > CHANNEL_TOL {
                return Err(bad(format!("projector {j} is not idempotent")));
            }
            for (k, q) in projectors.iter().enumerate().skip(j + 1) {
                if (p * q).max_abs() > CHANNEL_TOL {
                    return Err(bad(format!("projectors {j} and {k} are not orthogonal")));
                }
            }
            total = &total + p;
        }
        if (&total - &Operator::identity(space)).max_abs() > CHANNEL_TOL {
            return Err(bad("projectors do not resolve the identity".into()));
        }
        Ok(Self { projectors, labels })
    }

    /// Channels spanned by groups of orthonormal basis vectors (the columns of
    /// `basis`). Groups must partition the columns.
    pub fn from_basis_groups(space: SpaceTag, basis: &CMatrix, groups: &[Vec<usize>]) -> Result<Self> {
        let dim = space.dim();
        let mut seen = vec![false; dim];
        for (j, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidChannels(format!("channel {j} is empty")));
            }
            for &i in g {
                if i >= dim {
                    return Err(Error::InvalidChannels(format!("basis index {i} out of range (dimension {dim})")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidChannels(format!("basis index {i} belongs to more than one channel")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidChannels(format!(
                "basis index {missing} is in no channel; the projectors cannot resolve the identity"
            )));
        }
        let projectors = groups
            .iter()
            .map(|g| {
                let mut p = CMatrix::zeros(dim, dim);
                for &i in g {
                    let v = basis.column(i);
                    p += v * v.adjoint();
                }
                Operator::new(space, p)
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = (1..=groups.len()).map(|j| format!("channel_{j}")).collect();
        Self::new(projectors, labels)
    }

    /// Each standard basis vector its own channel.
    pub fn standard_basis(space: SpaceTag) -> Result<Self> {
        let dim = space.dim();
        let groups: Vec<Vec<usize>> = (0..dim).map(|i| vec![i]).collect();
        Self::from_basis_groups(space, &CMatrix::identity(dim, dim), &groups)
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn projectors(&self) -> &[Operator] {
        &self.projectors
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn space(&self) -> SpaceTag {
        self.projectors[0].space()
    }

    /// Largest entry of the cross-channel blocks `Π_j ρ Π_k`, `j ≠ k`.
    pub fn off_diagonal_norm(&self, rho_k: &Operator) -> f64 {
        let diagonal = self.projectors.iter().fold(Operator::zeros(rho_k.space()), |acc, p| &acc + &(&(p * rho_k) * p));
        (rho_k - &diagonal).max_abs()
    }
}

/// `p_j = Tr(Π_j ρ(K) Π_j)`, with round-off negativity clamped away.
pub fn channel_probabilities(rho_k: &Operator, channels: &ChannelSet) -> Result<Vec<f64>> {
    channels
        .projectors
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let value = (&(p * rho_k) * p).trace().re;
            if value < -CHANNEL_TOL || value > 1.0 + CHANNEL_TOL {
                Err(Error::ProbabilityOutOfRange { channel: j, value })
            } else {
                Ok(value.clamp(0.0, 1.0))
            }
        })
        .collect()
}

/// Rate of change of each channel probability driven by the hidden density,
/// `dp_j/dt = −i Tr((Π_j ⊗ I) [C, σ])`.
///
/// `[C, σ]` is anti-Hermitian for Hermitian `C` and `σ`, so the trace against
/// `Π_j` is purely imaginary; the factor `−i` carried over from the reduced
/// equation makes the rate real.
pub fn drift(channels: &ChannelSet, c: &Operator, sigma: &SigmaState) -> Result<Vec<f64>> {
    let comm = commutator(c, &sigma.sigma)?;
    channels
        .projectors
        .iter()
        .map(|p| {
            let promoted = p.embed_collective()?;
            if promoted.space() != comm.space() {
                return Err(Error::SpaceMismatch { expected: comm.space(), found: promoted.space() });
            }
            Ok((-I * promoted.trace_product(&comm)).re)
        })
        .collect()
}

/// Second-order evolution of the reduced state: the reduced equation with the
/// hidden density replaced by its first-order memory integral.
///
/// Fixed-step RK4 for `ρ(K)`; the memory integral is the composite trapezoid
/// on the step grid, accumulated recursively in the eigenbasis of `K + E` so
/// each step costs `O(d²)` regardless of history length. Stages at half steps
/// close the trapezoid with a half-width panel.
#[derive(Debug, Clone)]
pub struct PerturbativeEvolution {
    k: Operator,
    c: CMatrix,
    env_state: CMatrix,
    joint: SpaceTag,
    prop: Propagator,
    sigma0_eig: CMatrix,
}

/// Snapshot of a perturbative run at one grid time.
#[derive(Debug, Clone)]
pub struct PerturbativeSample {
    pub time: f64,
    pub rho_k: Operator,
    pub rho_hidden: Operator,
}

impl PerturbativeEvolution {
    pub fn new(k: &Operator, e: &Operator, c: &Operator, env_state: &DensityMatrix, sigma0: &Operator) -> Result<Self> {
        let h0 = free_generator(k, e)?;
        let prop = Propagator::new(&h0)?;
        if c.space() != h0.space() {
            return Err(Error::SpaceMismatch { expected: h0.space(), found: c.space() });
        }
        if env_state.space() != e.space() {
            return Err(Error::SpaceMismatch { expected: e.space(), found: env_state.space() });
        }
        check_traceless_hermitian(sigma0)?;
        if sigma0.space() != h0.space() {
            return Err(Error::SpaceMismatch { expected: h0.space(), found: sigma0.space() });
        }
        Ok(Self {
            k: k.clone(),
            c: c.matrix().clone(),
            env_state: env_state.matrix().clone(),
            joint: h0.space(),
            sigma0_eig: prop.to_eigenbasis(sigma0.matrix()),
            prop,
        })
    }

    /// `V† [C, ρ_K ⊗ ρ_E] V`.
    fn source(&self, rho_k: &CMatrix) -> CMatrix {
        let rho_prime = rho_k.kronecker(&self.env_state);
        self.prop.to_eigenbasis(&(&self.c * &rho_prime - &rho_prime * &self.c))
    }

    fn hidden(&self, memory: &CMatrix, time: f64) -> CMatrix {
        let sigma = self.sigma0_eig.component_mul(&self.prop.conjugation_phases(time));
        self.prop.from_eigenbasis(&(memory * (-I) + sigma))
    }

    fn rhs(&self, rho_k: &CMatrix, rho_hidden: &CMatrix) -> CMatrix {
        let k = self.k.matrix();
        let free = k * rho_k - rho_k * k;
        let comm = Operator::from_parts(self.joint, &self.c * rho_hidden - rho_hidden * &self.c);
        let coupling = trace_env(&comm).expect("joint operator").into_matrix();
        (free + coupling) * (-I)
    }

    /// Integrates from `rho_k0` with step `dt`, returning `steps + 1` samples
    /// (including `t = 0`) every `stride` steps.
    pub fn run(&self, rho_k0: &Operator, dt: f64, steps: usize, stride: usize) -> Result<Vec<PerturbativeSample>> {
        if rho_k0.space() != self.k.space() {
            return Err(Error::SpaceMismatch { expected: self.k.space(), found: rho_k0.space() });
        }
        if !(dt > 0.0 && dt.is_finite()) || stride == 0 {
            return Err(Error::InvalidParameter("dt must be positive and stride nonzero".into()));
        }
        let d = self.joint.dim();
        let half = Complex64::new(0.5 * dt, 0.0);
        let quarter = Complex64::new(0.25 * dt, 0.0);
        let phase_full = self.prop.conjugation_phases(dt);
        let phase_half = self.prop.conjugation_phases(0.5 * dt);

        let mut y = rho_k0.matrix().clone();
        let mut memory = CMatrix::zeros(d, d);
        let mut source_n = self.source(&y);
        let mut out = Vec::with_capacity(steps / stride + 1);
        let record = |n: usize, y: &CMatrix, memory: &CMatrix, out: &mut Vec<PerturbativeSample>| {
            let time = n as f64 * dt;
            out.push(PerturbativeSample {
                time,
                rho_k: Operator::from_parts(self.k.space(), y.clone()),
                rho_hidden: Operator::from_parts(self.joint, self.hidden(memory, time)),
            });
        };
        record(0, &y, &memory, &mut out);

        for n in 0..steps {
            let t = n as f64 * dt;
            let mem_half_base = memory.component_mul(&phase_half) + source_n.component_mul(&phase_half) * quarter;
            let mem_full_base = memory.component_mul(&phase_full) + source_n.component_mul(&phase_full) * half;
            let stage = |y_s: &CMatrix, base: &CMatrix, weight: Complex64, time: f64| {
                let mem = base + self.source(y_s) * weight;
                self.rhs(y_s, &self.hidden(&mem, time))
            };

            let k1 = self.rhs(&y, &self.hidden(&memory, t));
            let y2 = &y + &k1 * half;
            let k2 = stage(&y2, &mem_half_base, quarter, t + 0.5 * dt);
            let y3 = &y + &k2 * half;
            let k3 = stage(&y3, &mem_half_base, quarter, t + 0.5 * dt);
            let y4 = &y + &k3 * Complex64::new(dt, 0.0);
            let k4 = stage(&y4, &mem_full_base, half, t + dt);
            y += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(dt / 6.0, 0.0);

            let source_next = self.source(&y);
            memory = mem_full_base + &source_next * half;
            source_n = source_next;
            if (n + 1) % stride == 0 {
                record(n + 1, &y, &memory, &mut out);
            }
        }
        Ok(out)
    }
}

fn expect_kind(op: &Operator, kind: SpaceKind) -> Result<()> {
    if op.space().kind == kind {
        Ok(())
    } else {
        Err(Error::SpaceMismatch { expected: op.space().with_kind(kind), found: op.space() })
    }
}
