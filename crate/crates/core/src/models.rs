//! Concrete measurement scenarios on truncated oscillator spaces.
//!
//! The pointer–bath scenario couples the pointer position to the bath, so the
//! coupling commutes with every position-channel projector. The
//! pointer–ruler–phonon scenario couples the relative coordinate
//! `A = X − X′ − (i/ω)(P/m − P′/m′)` to a phonon through `λ A† a + λ* A a†`,
//! which does not commute with the pointer-position channels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::decoherence::{collective_part, gibbs, subtract_collective, ChannelSet, PerturbativeEvolution};
use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eigen, tensor, trace_distance, trace_env, CMatrix, CVector, DensityMatrix, Operator, Propagator, SpaceTag, I, ONE, ZERO};
use crate::random::{haar_unitary, random_hermitian, stream_rng};

/// Truncated annihilation and creation operators, `a|k⟩ = √k |k−1⟩`.
///
/// Truncation makes `[a, a†] = I` everywhere except the last diagonal entry,
/// which is `1 − n`.
pub fn ladder(n: usize) -> Result<(Operator, Operator)> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("Fock truncation must be at least 2, got {n}")));
    }
    let a = Operator::new(mode_space(n), annihilation(n))?;
    let a_dag = a.dagger();
    Ok((a, a_dag))
}

fn mode_space(n: usize) -> SpaceTag {
    SpaceTag::collective(n, 1)
}

fn annihilation(n: usize) -> CMatrix {
    let mut a = CMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    a
}

fn number(n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| if i == j { Complex64::new(i as f64, 0.0) } else { ZERO })
}

/// Oscillator quadratures `X = (a + a†)/√(2mω)` and `P = i√(mω/2)(a† − a)`.
/// With `n = 2` and `m = ω = 1` these are `σx/√2` and `σy/√2`.
pub fn position_momentum(n: usize, mass: f64, omega_ref: f64) -> Result<(Operator, Operator)> {
    if !(mass > 0.0 && mass.is_finite()) || !(omega_ref > 0.0 && omega_ref.is_finite()) {
        return Err(Error::InvalidParameter(format!("mass ({mass}) and reference frequency ({omega_ref}) must be positive")));
    }
    let (a, a_dag) = ladder(n)?;
    let x = (&a + &a_dag).scale_real(1.0 / (2.0 * mass * omega_ref).sqrt());
    let p = (&a_dag - &a).scale(I * (mass * omega_ref / 2.0).sqrt());
    Ok((x, p))
}

/// A fully assembled `H = K + E + C` problem with its channels and initial
/// states.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub k: Operator,
    pub e: Operator,
    /// Coupling with its collective part already subtracted.
    pub c: Operator,
    pub channels: ChannelSet,
    pub rho0: DensityMatrix,
    /// Hidden density fed to `σ(t)`; traceless, Hermitian, possibly zero.
    pub rho_hidden0: Operator,
    pub beta0: f64,
    pub env_state: DensityMatrix,
}

impl Scenario {
    pub fn joint_space(&self) -> SpaceTag {
        self.c.space()
    }

    /// `K ⊗ I + I ⊗ E + C`.
    pub fn hamiltonian(&self) -> Result<Operator> {
        Ok(&(&self.k.embed_collective()? + &self.e.embed_environment()?) + &self.c)
    }

    /// Checks the structural invariants shared by every scenario.
    pub fn check_invariants(&self) -> Result<()> {
        let residual = collective_part(&self.c, &self.env_state)?.max_abs();
        if residual > 1e-10 {
            return Err(Error::InvalidParameter(format!("coupling retains a collective part of size {residual:e}")));
        }
        for (name, op) in [("K", &self.k), ("E", &self.e), ("C", &self.c), ("rho_hidden0", &self.rho_hidden0)] {
            if !op.is_hermitian(1e-10) {
                return Err(Error::InvalidParameter(format!("{name} is not Hermitian")));
            }
        }
        if self.rho_hidden0.trace().norm() > 1e-12 {
            return Err(Error::InvalidParameter("rho_hidden0 is not traceless".into()));
        }
        Ok(())
    }

    /// Exact `ρ(K)(t) = tr_E(e^{−iHt} ρ0 e^{iHt})` at each requested time.
    pub fn exact_reduced(&self, times: &[f64]) -> Result<Vec<Operator>> {
        let prop = Propagator::new(&self.hamiltonian()?)?;
        times.iter().map(|&t| trace_env(&prop.evolve(self.rho0.operator(), t))).collect()
    }

    /// First grid time `t ≤ t_max` at which the channel off-diagonal norm of
    /// the exact reduced state falls below `1/e` of its initial value.
    pub fn decoherence_time(&self, t_max: f64, dt: f64) -> Result<Option<f64>> {
        if !(dt > 0.0 && t_max >= 0.0) {
            return Err(Error::InvalidParameter("decoherence scan needs dt > 0 and t_max >= 0".into()));
        }
        let prop = Propagator::new(&self.hamiltonian()?)?;
        let off = |t: f64| -> Result<f64> { Ok(self.channels.off_diagonal_norm(&trace_env(&prop.evolve(self.rho0.operator(), t))?)) };
        let threshold = off(0.0)? / std::f64::consts::E;
        let steps = (t_max / dt).floor() as usize;
        for n in 1..=steps {
            let t = n as f64 * dt;
            if off(t)? < threshold {
                return Ok(Some(t));
            }
        }
        Ok(None)
    }

    /// Trace distance between the perturbative reduced state and the exact
    /// one at time `t`, integrating with step `dt`.
    pub fn perturbative_error(&self, t: f64, dt: f64) -> Result<f64> {
        let steps = (t / dt).round() as usize;
        if steps == 0 || (steps as f64 * dt - t).abs() > 1e-9 * t {
            return Err(Error::InvalidParameter(format!("t = {t} is not a positive multiple of dt = {dt}")));
        }
        let pert = PerturbativeEvolution::new(&self.k, &self.e, &self.c, &self.env_state, &self.rho_hidden0)?;
        let out = pert.run(&trace_env(self.rho0.operator())?, dt, steps, steps)?;
        let last = out.last().expect("run returns the final sample");
        let exact = self.exact_reduced(&[last.time])?;
        Ok(trace_distance(&exact[0], &last.rho_k))
    }

    /// Largest `‖[C, Π_j ⊗ I]‖_max` over channels.
    pub fn channel_commutator_norm(&self) -> Result<f64> {
        let mut worst = 0.0_f64;
        for p in self.channels.projectors() {
            let promoted = p.embed_collective()?;
            worst = worst.max((&(&self.c * &promoted) - &(&promoted * &self.c)).max_abs());
        }
        Ok(worst)
    }
}

/// Seeded hidden-density input: rank, Frobenius scale and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenDensitySpec {
    pub rank: usize,
    pub scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointerBathParams {
    pub n_sites: usize,
    pub n_env: usize,
    pub lambda: f64,
    pub k_energies: Vec<f64>,
    pub e_energies: Vec<f64>,
    pub seed: u64,
    /// Inverse temperature of the initial environment state.
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    /// Contiguous groups of pointer sites forming channels; one channel per
    /// site when absent.
    #[serde(default)]
    pub channel_blocks: Option<Vec<Vec<usize>>>,
    /// Pointer amplitudes of the initial superposition (normalized
    /// internally); uniform when absent.
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default)]
    pub hidden: Option<HiddenDensitySpec>,
}

fn default_beta0() -> f64 {
    0.2
}

impl PointerBathParams {
    /// Sites at energies `0.5·j`; environment levels spread irregularly over
    /// `[0, 3]` (golden-ratio sequence, sorted) to avoid commensurate
    /// recurrences.
    pub fn standard(n_sites: usize, n_env: usize, lambda: f64, seed: u64) -> Self {
        Self {
            n_sites,
            n_env,
            lambda,
            k_energies: (0..n_sites).map(|j| 0.5 * j as f64).collect(),
            e_energies: irregular_levels(n_env, 3.0),
            seed,
            beta0: default_beta0(),
            channel_blocks: None,
            amplitudes: None,
            hidden: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_sites < 2 {
            return bad(format!("n_sites must be at least 2, got {}", self.n_sites));
        }
        if self.n_env < 2 {
            return bad(format!("n_env must be at least 2, got {}", self.n_env));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.k_energies.len() != self.n_sites {
            return bad(format!("{} collective energies for {} sites", self.k_energies.len(), self.n_sites));
        }
        if self.e_energies.len() != self.n_env {
            return bad(format!("{} environment energies for dimension {}", self.e_energies.len(), self.n_env));
        }
        if let Some(a) = &self.amplitudes {
            if a.len() != self.n_sites || a.iter().all(|x| *x == 0.0) {
                return bad("amplitudes must have one nonzero-norm entry per site".into());
            }
        }
        Ok(())
    }
}

/// `n` levels in `[0, span]`: the sorted fractional parts of `j·φ`.
pub fn irregular_levels(n: usize, span: f64) -> Vec<f64> {
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let mut levels: Vec<f64> = (0..n).map(|j| span * (j as f64 * phi).fract()).collect();
    levels.sort_by(f64::total_cmp);
    levels
}

fn site_groups(dim: usize, blocks: &Option<Vec<Vec<usize>>>) -> Vec<Vec<usize>> {
    match blocks {
        Some(b) => b.clone(),
        None => (0..dim).map(|i| vec![i]).collect(),
    }
}

pub fn build_pointer_bath(params: &PointerBathParams) -> Result<Scenario> {
    params.validate()?;
    let (dk, de) = (params.n_sites, params.n_env);
    let k_space = SpaceTag::collective(dk, de);
    let e_space = SpaceTag::environment(dk, de);

    let k = Operator::from_real_diagonal(k_space, &params.k_energies)?;
    let e = Operator::from_real_diagonal(e_space, &params.e_energies)?;
    let positions: Vec<f64> = (0..dk).map(|j| j as f64).collect();
    let x = Operator::from_real_diagonal(k_space, &positions)?;
    let mut rng = stream_rng(params.seed, 0);
    // unit-variance entries: the bath operator's spread grows with its size
    let b = Operator::new(e_space, random_hermitian(de, &mut rng) * Complex64::new((de as f64).sqrt(), 0.0))?;

    let env_state = gibbs(&e, params.beta0)?.state;
    let raw = tensor(&x, &b)?.scale_real(params.lambda);
    let c = subtract_collective(&raw, &env_state)?;

    let channels = ChannelSet::from_basis_groups(k_space, &CMatrix::identity(dk, dk), &site_groups(dk, &params.channel_blocks))?;
    let amps = params.amplitudes.clone().unwrap_or_else(|| vec![1.0; dk]);
    let psi = CVector::from_iterator(dk, amps.iter().map(|&x| Complex64::new(x, 0.0)));
    let rho_k = DensityMatrix::pure(k_space, &psi)?;
    let rho0 = DensityMatrix::new(tensor(rho_k.operator(), env_state.operator())?)?;
    let rho_hidden0 = hidden_input(&params.hidden, c.space(), &env_state)?;

    let scenario = Scenario {
        name: "pointer_bath".into(),
        k,
        e,
        c,
        channels,
        rho0,
        rho_hidden0,
        beta0: params.beta0,
        env_state,
    };
    scenario.check_invariants()?;
    Ok(scenario)
}

/// A seeded hidden density with its collective part removed, so that
/// `tr_E(ρ″) = 0` as required of a hidden part.
fn hidden_input(spec: &Option<HiddenDensitySpec>, joint: SpaceTag, env_state: &DensityMatrix) -> Result<Operator> {
    match spec {
        None => Ok(Operator::zeros(joint)),
        Some(h) => {
            let raw = seeded_hidden_density(joint, h.rank, h.scale, h.seed)?;
            let visible = tensor(&crate::hilbert::trace_env(&raw)?, env_state.operator())?;
            Ok((&raw - &visible).hermitian_part())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointerRulerParams {
    pub m: f64,
    pub m_prime: f64,
    pub omega: f64,
    pub lambda: Complex64,
    pub n_fock_pointer: usize,
    pub n_fock_ruler: usize,
    pub n_fock_phonon: usize,
    /// Frequency used for the pointer and ruler quadratures and for `K`;
    /// defaults to `omega`.
    #[serde(default)]
    pub omega_ref: Option<f64>,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    /// Extra phonon modes (frequencies), each coupled through its own `A`.
    /// Single mode at `omega` when absent.
    #[serde(default)]
    pub phonon_frequencies: Option<Vec<f64>>,
    /// Groups of pointer-position eigenvectors (ascending position) forming
    /// channels; one channel per eigenvector when absent.
    #[serde(default)]
    pub channel_blocks: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub hidden: Option<HiddenDensitySpec>,
}

impl PointerRulerParams {
    pub fn standard(lambda: Complex64) -> Self {
        Self {
            m: 1.0,
            m_prime: 2.0,
            omega: 1.0,
            lambda,
            n_fock_pointer: 3,
            n_fock_ruler: 3,
            n_fock_phonon: 3,
            omega_ref: None,
            beta0: default_beta0(),
            phonon_frequencies: None,
            channel_blocks: None,
            hidden: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("m", self.m)?;
        positive("m_prime", self.m_prime)?;
        positive("omega", self.omega)?;
        if let Some(w) = self.omega_ref {
            positive("omega_ref", w)?;
        }
        for &w in self.phonon_frequencies.iter().flatten() {
            positive("phonon frequency", w)?;
        }
        if matches!(&self.phonon_frequencies, Some(f) if f.is_empty()) {
            return Err(Error::InvalidParameter("phonon_frequencies must not be empty".into()));
        }
        for (name, n) in [
            ("n_fock_pointer", self.n_fock_pointer),
            ("n_fock_ruler", self.n_fock_ruler),
            ("n_fock_phonon", self.n_fock_phonon),
        ] {
            if n < 2 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 2, got {n}")));
            }
        }
        if !(self.lambda.re.is_finite() && self.lambda.im.is_finite()) {
            return Err(Error::InvalidParameter("lambda must be finite".into()));
        }
        Ok(())
    }

    fn frequencies(&self) -> Vec<f64> {
        self.phonon_frequencies.clone().unwrap_or_else(|| vec![self.omega])
    }
}

/// Pieces of the pointer–ruler–phonon problem before the environment is
/// fixed; shared by the plain and combined scenarios.
struct RulerParts {
    dk: usize,
    k: CMatrix,
    /// Pointer position eigenvectors, embedded in the collective space and
    /// sorted by ascending position.
    pointer_x_basis: CMatrix,
    /// Position-coarse-graining channel groups.
    groups: Vec<Vec<usize>>,
    initial_k: CVector,
}

fn kron_all(mats: &[CMatrix]) -> CMatrix {
    mats.iter().skip(1).fold(mats[0].clone(), |acc, m| acc.kronecker(m))
}

/// The relative coordinate `X ⊗ I − I ⊗ X′ − (i/ω)(P/m ⊗ I − I ⊗ P′/m′)` on
/// `pointer ⊗ ruler`.
pub fn relative_coordinate(params: &PointerRulerParams, omega: f64) -> Result<CMatrix> {
    let w_ref = params.omega_ref.unwrap_or(params.omega);
    let (np, nr) = (params.n_fock_pointer, params.n_fock_ruler);
    let (x, p) = position_momentum(np, params.m, w_ref)?;
    let (xr, pr) = position_momentum(nr, params.m_prime, w_ref)?;
    let ip = CMatrix::identity(np, np);
    let ir = CMatrix::identity(nr, nr);
    let position = x.matrix().kronecker(&ir) - ip.kronecker(xr.matrix());
    let velocity = (p.matrix() / Complex64::new(params.m, 0.0)).kronecker(&ir) - ip.kronecker(&(pr.matrix() / Complex64::new(params.m_prime, 0.0)));
    Ok(position - velocity * (I / omega))
}

fn ruler_parts(params: &PointerRulerParams) -> Result<RulerParts> {
    params.validate()?;
    let w_ref = params.omega_ref.unwrap_or(params.omega);
    let (np, nr) = (params.n_fock_pointer, params.n_fock_ruler);
    let dk = np * nr;
    let k = (number(np).kronecker(&CMatrix::identity(nr, nr)) + CMatrix::identity(np, np).kronecker(&number(nr))) * Complex64::new(w_ref, 0.0);

    let (x, _) = position_momentum(np, params.m, w_ref)?;
    let (xs, vecs) = hermitian_eigen(x.matrix());
    let mut order: Vec<usize> = (0..np).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    // one column per (position eigenvector, ruler Fock state), grouped by position
    let mut basis = CMatrix::zeros(dk, dk);
    let ir = CMatrix::identity(nr, nr);
    for (slot, &col) in order.iter().enumerate() {
        let v = CMatrix::from_fn(np, 1, |i, _| vecs[(i, col)]);
        let block = v.kronecker(&ir);
        for r in 0..nr {
            basis.set_column(slot * nr + r, &block.column(r));
        }
    }
    let pointer_groups = site_groups(np, &params.channel_blocks);
    let groups = pointer_groups
        .iter()
        .map(|g| g.iter().flat_map(|&s| (0..nr).map(move |r| s * nr + r)).collect())
        .collect();
    for g in &pointer_groups {
        if let Some(&bad) = g.iter().find(|&&s| s >= np) {
            return Err(Error::InvalidChannels(format!("pointer position index {bad} out of range ({np} positions)")));
        }
    }

    // uniform superposition of pointer position eigenstates, ruler in its ground state
    let mut pointer = CVector::zeros(np);
    for &col in &order {
        pointer += vecs.column(col);
    }
    let mut ruler = CVector::zeros(nr);
    ruler[0] = ONE;
    let initial_k = kron_vec(&pointer, &ruler);
    Ok(RulerParts { dk, k, pointer_x_basis: basis, groups, initial_k })
}

fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    CVector::from_iterator(a.len() * b.len(), a.iter().flat_map(|x| b.iter().map(move |y| x * y)))
}

/// Phonon part: `E = Σ ω_m a_m† a_m` and the coupling
/// `Σ_m (λ A_m† ⊗ a_m + λ* A_m ⊗ a_m†)` on `collective ⊗ phonons`.
fn phonon_coupling(params: &PointerRulerParams) -> Result<(CMatrix, CMatrix)> {
    let freqs = params.frequencies();
    let n = params.n_fock_phonon;
    let modes = freqs.len();
    let id = CMatrix::identity(n, n);
    let embed = |op: &CMatrix, which: usize| -> CMatrix {
        let factors: Vec<CMatrix> = (0..modes).map(|m| if m == which { op.clone() } else { id.clone() }).collect();
        kron_all(&factors)
    };
    let de = n.pow(modes as u32);
    let dk = params.n_fock_pointer * params.n_fock_ruler;
    let mut e = CMatrix::zeros(de, de);
    let mut c = CMatrix::zeros(dk * de, dk * de);
    for (m, &w) in freqs.iter().enumerate() {
        e += embed(&number(n), m) * Complex64::new(w, 0.0);
        let a = embed(&annihilation(n), m);
        let rel = relative_coordinate(params, w)?;
        let term = rel.adjoint().kronecker(&a) * params.lambda;
        c += &term + term.adjoint();
    }
    Ok((e, c))
}

pub fn build_pointer_ruler_phonon(params: &PointerRulerParams) -> Result<Scenario> {
    let parts = ruler_parts(params)?;
    let (e_mat, c_mat) = phonon_coupling(params)?;
    assemble("pointer_ruler_phonon", params, parts, e_mat, c_mat)
}

fn assemble(name: &str, params: &PointerRulerParams, parts: RulerParts, e_mat: CMatrix, c_mat: CMatrix) -> Result<Scenario> {
    let dk = parts.dk;
    let de = e_mat.nrows();
    let k_space = SpaceTag::collective(dk, de);
    let k = Operator::new(k_space, parts.k)?;
    let e = Operator::new(SpaceTag::environment(dk, de), e_mat)?;
    let env_state = gibbs(&e, params.beta0)?.state;
    let raw = Operator::new(SpaceTag::joint(dk, de), c_mat)?.hermitian_part();
    let c = subtract_collective(&raw, &env_state)?;
    let channels = ChannelSet::from_basis_groups(k_space, &parts.pointer_x_basis, &parts.groups)?;
    let rho_k = DensityMatrix::pure(k_space, &parts.initial_k)?;
    let rho0 = DensityMatrix::new(tensor(rho_k.operator(), env_state.operator())?)?;
    let rho_hidden0 = hidden_input(&params.hidden, c.space(), &env_state)?;
    let scenario = Scenario {
        name: name.into(),
        k,
        e,
        c,
        channels,
        rho0,
        rho_hidden0,
        beta0: params.beta0,
        env_state,
    };
    scenario.check_invariants()?;
    Ok(scenario)
}

/// A position-coupled bath attached to the pointer in addition to the phonon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathCoupling {
    pub n_env: usize,
    pub lambda: f64,
    pub e_energies: Vec<f64>,
    pub seed: u64,
}

/// Both mechanisms at once: the phonon coupling of the ruler scenario plus
/// `λ_b X ⊗ I(ruler) ⊗ I(phonon) ⊗ B`, with environment `phonon ⊗ bath`.
pub fn build_combined(params: &PointerRulerParams, bath: &BathCoupling) -> Result<Scenario> {
    if bath.n_env < 2 || bath.e_energies.len() != bath.n_env || !(bath.lambda >= 0.0) {
        return Err(Error::InvalidParameter("bath needs n_env >= 2 matching energies and lambda >= 0".into()));
    }
    let parts = ruler_parts(params)?;
    let (e_ph, c_ph) = phonon_coupling(params)?;
    let nb = bath.n_env;
    let ib = CMatrix::identity(nb, nb);
    let dph = e_ph.nrows();
    let iph = CMatrix::identity(dph, dph);
    let e_b = CMatrix::from_fn(nb, nb, |i, j| if i == j { Complex64::new(bath.e_energies[i], 0.0) } else { ZERO });
    let e_mat = e_ph.kronecker(&ib) + iph.kronecker(&e_b);

    let w_ref = params.omega_ref.unwrap_or(params.omega);
    let (x, _) = position_momentum(params.n_fock_pointer, params.m, w_ref)?;
    let x_k = x.matrix().kronecker(&CMatrix::identity(params.n_fock_ruler, params.n_fock_ruler));
    let mut rng = stream_rng(bath.seed, 0);
    let b = random_hermitian(nb, &mut rng);
    let c_mat = c_ph.kronecker(&ib) + x_k.kronecker(&iph.kronecker(&b)) * Complex64::new(bath.lambda, 0.0);
    assemble("combined", params, parts, e_mat, c_mat)
}

/// Traceless Hermitian operator with `rank` nonzero eigenvalues of mixed sign
/// and Frobenius norm `scale`, on Haar-random eigenvectors. Deterministic in
/// `(space, rank, scale, seed)`.
pub fn seeded_hidden_density(space: SpaceTag, rank: usize, scale: f64, seed: u64) -> Result<Operator> {
    let dim = space.dim();
    if rank < 2 {
        return Err(Error::InvalidParameter(format!("rank must be at least 2, got {rank}")));
    }
    if rank > dim {
        return Err(Error::InvalidParameter(format!("rank {rank} exceeds dimension {dim}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    let mut rng = stream_rng(seed, 1);
    let eigenvalues = traceless_spectrum(rank, scale, &mut rng);
    let u = haar_unitary(dim, &mut rng);
    let mut m = CMatrix::zeros(dim, dim);
    for (j, &lam) in eigenvalues.iter().enumerate() {
        let v = u.column(j);
        m += v * v.adjoint() * Complex64::new(lam, 0.0);
    }
    // remove round-off trace along the identity
    let tr = m.trace() / Complex64::new(dim as f64, 0.0);
    for i in 0..dim {
        m[(i, i)] -= tr;
    }
    Operator::new(space, crate::hilbert::hermitize(&m))
}

/// `rank` values with zero sum and unit-`scale` Euclidean norm. Alternating
/// signs guarantee both signs occur.
fn traceless_spectrum<R: rand::Rng + ?Sized>(rank: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let mut values: Vec<f64> = (0..rank)
        .map(|j| {
            let magnitude: f64 = 0.5 + rng.random::<f64>();
            if j % 2 == 0 { magnitude } else { -magnitude }
        })
        .collect();
    let mean = values.iter().sum::<f64>() / rank as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    values.iter_mut().for_each(|v| *v *= scale / norm);
    values
}
