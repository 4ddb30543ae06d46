//! Brownian motion of channel probabilities on the simplex.
//!
//! The point `p = (p_1, …, p_n)` lives on the simplex `Σ p_j = 1, p_j ≥ 0`.
//! Each step adds a Gaussian increment projected onto the hyperplane of the
//! currently active face. When a coordinate crosses zero it is absorbed: set
//! to exactly zero, frozen, and its (negative) value is spread evenly over the
//! remaining active coordinates. The walk continues on the lower-dimensional
//! face until a single vertex remains.
//!
//! Trajectory `i` draws from the ChaCha stream `(seed, i)`, so every ensemble
//! statistic is a deterministic function of the seed and the trajectory count,
//! independent of how trajectories are scheduled across threads.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::{mix_seed, stream_rng};

/// Tolerance on `|Σ p_j − 1|` for a simplex point.
pub const SUM_TOL: f64 = 1e-12;
/// Input tolerance when constructing a point from user coordinates.
const INPUT_SUM_TOL: f64 = 1e-9;

/// Barycentric coordinates together with the mask of not-yet-absorbed
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    coords: Vec<f64>,
    active: Vec<bool>,
    n_active: usize,
}

impl SimplexPoint {
    /// Coordinates must be non-negative and sum to one (within `1e-9`; the
    /// residual is folded into the largest coordinate). Zero coordinates start
    /// out absorbed.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let active = coords.iter().map(|&c| c > 0.0).collect();
        Self::with_mask(coords, active)
    }

    pub fn with_mask(mut coords: Vec<f64>, active: Vec<bool>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidSimplexPoint(m));
        if coords.len() < 2 {
            return bad(format!("need at least 2 coordinates, got {}", coords.len()));
        }
        if active.len() != coords.len() {
            return bad("mask length differs from coordinate count".into());
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return bad(format!("coordinate {c} is negative or not finite"));
        }
        if coords.iter().zip(&active).any(|(&c, &a)| !a && c != 0.0) {
            return bad("inactive channels must have coordinate exactly 0".into());
        }
        if !active.iter().any(|&a| a) {
            return bad("no active channel".into());
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > INPUT_SUM_TOL {
            return bad(format!("coordinates sum to {sum}, not 1"));
        }
        let largest = (0..coords.len()).max_by(|&a, &b| coords[a].total_cmp(&coords[b])).unwrap_or(0);
        coords[largest] += 1.0 - sum;
        let n_active = active.iter().filter(|&&a| a).count();
        let mut p = Self { coords, active, n_active };
        if n_active == 1 {
            p.collapse_to_survivor();
        }
        Ok(p)
    }

    pub fn vertex(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::InvalidSimplexPoint(format!("vertex {k} of a {n}-channel simplex")));
        }
        let mut coords = vec![0.0; n];
        coords[k] = 1.0;
        Self::new(coords)
    }

    pub fn centroid(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn active_count(&self) -> usize {
        self.n_active
    }

    pub fn is_finished(&self) -> bool {
        self.active_count() == 1
    }

    /// The surviving channel once the walk has reached a vertex.
    pub fn winner(&self) -> Option<usize> {
        if self.is_finished() {
            self.active.iter().position(|&a| a)
        } else {
            None
        }
    }

    pub fn sum_deviation(&self) -> f64 {
        (self.coords.iter().sum::<f64>() - 1.0).abs()
    }

    fn collapse_to_survivor(&mut self) {
        for (c, &a) in self.coords.iter_mut().zip(&self.active) {
            *c = if a { 1.0 } else { 0.0 };
        }
    }
}

/// Location-dependent anisotropy: the Gaussian component along `axis` is
/// scaled by `sqrt(1 + strength·p_axis)`. Off by default; it exists to probe
/// non-homogeneous walks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationCovariance {
    pub axis: usize,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkParams {
    /// Standard deviation of each pre-projection Gaussian component.
    pub step_sigma: f64,
    /// Covariance of the pre-projection increment; identity when absent.
    #[serde(default)]
    pub covariance: Option<Vec<Vec<f64>>>,
    pub max_steps: u64,
    pub seed: u64,
    #[serde(default)]
    pub location_covariance: Option<LocationCovariance>,
    /// Record every `path_stride`-th point of each trajectory.
    #[serde(default)]
    pub path_stride: Option<u64>,
}

impl WalkParams {
    pub fn isotropic(step_sigma: f64, max_steps: u64, seed: u64) -> Self {
        Self {
            step_sigma,
            covariance: None,
            max_steps,
            seed,
            location_covariance: None,
            path_stride: None,
        }
    }

    pub fn with_covariance(mut self, covariance: Vec<Vec<f64>>) -> Self {
        self.covariance = Some(covariance);
        self
    }
}

/// Validated walk parameters for a fixed channel count, with the covariance
/// square root precomputed.
#[derive(Debug, Clone)]
pub struct Walker {
    n: usize,
    sigma: f64,
    factor: Option<DMatrix<f64>>,
    location: Option<LocationCovariance>,
    max_steps: u64,
    seed: u64,
    path_stride: Option<u64>,
    /// `1/sqrt(k(k+1))`, the scale of the k-th Helmert basis vector.
    helmert: Vec<f64>,
}

/// Symmetric square root of a PSD covariance matrix.
pub fn covariance_factor(cov: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    let bad = |m: String| Err(Error::InvalidParameter(m));
    if cov.len() != n || cov.iter().any(|row| row.len() != n) {
        return bad(format!("covariance must be {n}x{n}"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    if m.iter().any(|x| !x.is_finite()) {
        return bad("covariance has non-finite entries".into());
    }
    let asym = (&m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        return bad(format!("covariance is not symmetric (max asymmetry {asym:e})"));
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if min < -1e-12 * m.amax().max(1.0) {
        return bad(format!("covariance is not positive semidefinite (eigenvalue {min:e})"));
    }
    let roots = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

impl Walker {
    pub fn new(params: &WalkParams, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("a walk needs at least 2 channels, got {n}")));
        }
        if !(params.step_sigma >= 0.0 && params.step_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("step_sigma must be non-negative, got {}", params.step_sigma)));
        }
        let factor = params.covariance.as_ref().map(|c| covariance_factor(c, n)).transpose()?;
        if let Some(loc) = params.location_covariance {
            if loc.axis >= n || !(loc.strength >= -1.0 && loc.strength.is_finite()) {
                return Err(Error::InvalidParameter("location covariance needs axis < n and strength >= -1".into()));
            }
        }
        if params.path_stride == Some(0) {
            return Err(Error::InvalidParameter("path_stride must be positive".into()));
        }
        Ok(Self {
            n,
            sigma: params.step_sigma,
            factor,
            location: params.location_covariance,
            max_steps: params.max_steps,
            seed: params.seed,
            path_stride: params.path_stride,
            helmert: (0..n).map(|k| if k == 0 { 0.0 } else { 1.0 / ((k * (k + 1)) as f64).sqrt() }).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check_point(&self, p: &SimplexPoint) -> Result<()> {
        if p.n() != self.n {
            return Err(Error::InvalidSimplexPoint(format!("point has {} channels, walker expects {}", p.n(), self.n)));
        }
        Ok(())
    }

    /// Draws the pre-projection increment into `out`.
    fn draw<R: Rng + ?Sized>(&self, p: &SimplexPoint, rng: &mut R, raw: &mut [f64], out: &mut [f64]) {
        for z in raw.iter_mut() {
            *z = StandardNormal.sample(rng);
        }
        if let Some(loc) = self.location {
            raw[loc.axis] *= (1.0 + loc.strength * p.coords[loc.axis]).max(0.0).sqrt();
        }
        match &self.factor {
            None => out.iter_mut().zip(raw.iter()).for_each(|(o, z)| *o = self.sigma * z),
            Some(l) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.sigma * (0..self.n).map(|j| l[(i, j)] * raw[j]).sum::<f64>();
                }
            }
        }
    }

    /// Isotropic increment drawn directly in the active face: `m − 1` normals
    /// on the Helmert basis `h_k = (1, …, 1, −k, 0, …)/sqrt(k(k+1))`. Same law
    /// as projecting `m` independent normals, one fewer draw.
    fn draw_in_face<R: Rng + ?Sized>(&self, p: &SimplexPoint, rng: &mut R, out: &mut [f64]) {
        let mut j = p.n_active;
        let mut suffix = 0.0;
        for (o, &a) in out.iter_mut().zip(&p.active).rev() {
            if !a {
                *o = 0.0;
                continue;
            }
            j -= 1;
            if j == 0 {
                *o = self.sigma * suffix;
            } else {
                let z: f64 = StandardNormal.sample(rng);
                let w = self.helmert[j] * z;
                *o = self.sigma * (suffix - j as f64 * w);
                suffix += w;
            }
        }
    }

    /// One step in place. Channels absorbed during the step are appended to
    /// `absorbed` in absorption order.
    fn step_in_place<R: Rng + ?Sized>(&self, p: &mut SimplexPoint, rng: &mut R, scratch: &mut Scratch, absorbed: &mut Vec<usize>) {
        if self.factor.is_none() && self.location.is_none() {
            self.draw_in_face(p, rng, &mut scratch.delta);
        } else {
            self.draw(p, rng, &mut scratch.raw, &mut scratch.delta);
            project_in_place(&mut scratch.delta, &p.active);
        }
        let mut sum = 0.0;
        let mut any_negative = false;
        for ((c, &d), &a) in p.coords.iter_mut().zip(&scratch.delta).zip(&p.active) {
            if a {
                *c += d;
                sum += *c;
                any_negative |= *c < 0.0;
            }
        }
        let m = p.active_count() as f64;
        let drift = (sum - 1.0) / m;
        if drift != 0.0 {
            for (c, &a) in p.coords.iter_mut().zip(&p.active) {
                if a {
                    *c -= drift;
                    any_negative |= *c < 0.0;
                }
            }
        }
        if any_negative {
            absorb_in_place(p, absorbed);
        }
    }

    /// Runs one trajectory under `stop`, calling `observe(step, point)` at
    /// step 0 and after every step.
    pub fn simulate<F: FnMut(u64, &SimplexPoint)>(&self, p0: &SimplexPoint, index: u64, stop: StopRule, mut observe: F) -> Result<TrajectoryOutcome> {
        self.check_point(p0)?;
        let mut rng = stream_rng(self.seed, index);
        let mut p = p0.clone();
        let mut scratch = Scratch::new(self.n);
        let mut absorbed = Vec::new();
        let mut order: Vec<(usize, u64)> = (0..self.n).filter(|&j| !p.active[j]).map(|j| (j, 0)).collect();
        let mut path = Vec::new();
        let limit = match stop {
            StopRule::Steps(s) => s.min(self.max_steps),
            _ => self.max_steps,
        };
        let done = |p: &SimplexPoint, order: &[(usize, u64)], initial: usize| match stop {
            StopRule::Vertex | StopRule::Steps(_) => p.is_finished(),
            StopRule::FirstAbsorption => order.len() > initial || p.is_finished(),
        };
        let initially_inactive = order.len();
        observe(0, &p);
        if self.path_stride.is_some() {
            path.push(p.clone());
        }
        let mut steps = 0;
        while !done(&p, &order, initially_inactive) && steps < limit {
            absorbed.clear();
            self.step_in_place(&mut p, &mut rng, &mut scratch, &mut absorbed);
            steps += 1;
            order.extend(absorbed.iter().map(|&j| (j, steps)));
            observe(steps, &p);
            if matches!(self.path_stride, Some(k) if steps % k == 0) {
                path.push(p.clone());
            }
        }
        let reached = done(&p, &order, initially_inactive);
        Ok(TrajectoryOutcome {
            winner: p.winner(),
            steps_taken: steps,
            absorption_order: order,
            truncated: !reached && !matches!(stop, StopRule::Steps(s) if steps >= s),
            final_point: p,
            path_samples: path,
        })
    }
}

struct Scratch {
    raw: Vec<f64>,
    delta: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { raw: vec![0.0; n], delta: vec![0.0; n] }
    }
}

/// When a trajectory stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Until a single channel survives.
    Vertex,
    /// Until the first channel is absorbed.
    FirstAbsorption,
    /// After a fixed number of steps (or earlier at a vertex).
    Steps(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutcome {
    /// Surviving channel; `None` if the walk has not reached a vertex.
    pub winner: Option<usize>,
    pub steps_taken: u64,
    /// `(channel, step)` per absorption; channels inactive at the start are
    /// listed at step 0.
    pub absorption_order: Vec<(usize, u64)>,
    /// The step budget ran out before the stop rule was met.
    pub truncated: bool,
    pub final_point: SimplexPoint,
    pub path_samples: Vec<SimplexPoint>,
}

impl TrajectoryOutcome {
    pub fn first_absorbed(&self) -> Option<usize> {
        self.absorption_order.first().map(|&(j, _)| j)
    }
}

/// Orthogonal projection onto the directions of the active face: inactive
/// components are zeroed and the active mean removed.
pub fn project_increment(delta: &[f64], active: &[bool]) -> Result<Vec<f64>> {
    if delta.len() != active.len() {
        return Err(Error::InvalidParameter("increment and mask lengths differ".into()));
    }
    let count = active.iter().filter(|&&a| a).count();
    if count < 2 {
        return Err(Error::WalkFinished { active: count });
    }
    let mut out = delta.to_vec();
    project_in_place(&mut out, active);
    Ok(out)
}

fn project_in_place(delta: &mut [f64], active: &[bool]) {
    let (mut sum, mut count) = (0.0, 0usize);
    for (d, &a) in delta.iter().zip(active) {
        if a {
            sum += d;
            count += 1;
        }
    }
    let mean = sum / count as f64;
    for (d, &a) in delta.iter_mut().zip(active) {
        *d = if a { *d - mean } else { 0.0 };
    }
}

/// Resolves boundary violations: repeatedly absorbs the most negative active
/// coordinate and spreads its value evenly over the remaining active ones.
/// Returns the repaired point and the absorbed channels in order.
pub fn absorb(coords: Vec<f64>, active: Vec<bool>) -> Result<(SimplexPoint, Vec<usize>)> {
    if coords.len() != active.len() || coords.len() < 2 {
        return Err(Error::InvalidSimplexPoint("mask and coordinates must match and have length >= 2".into()));
    }
    let sum: f64 = coords.iter().sum();
    if (sum - 1.0).abs() > INPUT_SUM_TOL || coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidSimplexPoint(format!("coordinates sum to {sum}, not 1")));
    }
    if coords.iter().zip(&active).any(|(&c, &a)| !a && c != 0.0) || !active.iter().any(|&a| a) {
        return Err(Error::InvalidSimplexPoint("inactive channels must be 0 and at least one channel active".into()));
    }
    let n_active = active.iter().filter(|&&a| a).count();
    let mut p = SimplexPoint { coords, active, n_active };
    let mut absorbed = Vec::new();
    absorb_in_place(&mut p, &mut absorbed);
    Ok((p, absorbed))
}

fn absorb_in_place(p: &mut SimplexPoint, absorbed: &mut Vec<usize>) {
    loop {
        let worst = (0..p.n()).filter(|&j| p.active[j] && p.coords[j] < 0.0).min_by(|&a, &b| p.coords[a].total_cmp(&p.coords[b]));
        let Some(j) = worst else { break };
        let deficit = p.coords[j];
        p.coords[j] = 0.0;
        p.active[j] = false;
        p.n_active -= 1;
        absorbed.push(j);
        let remaining = p.n_active;
        if remaining == 1 {
            p.collapse_to_survivor();
            break;
        }
        let share = deficit / remaining as f64;
        for (c, &a) in p.coords.iter_mut().zip(&p.active) {
            if a {
                *c += share;
            }
        }
    }
}

/// Single step from `point` using the stream for `trajectory_index`.
pub fn step(point: &SimplexPoint, params: &WalkParams, trajectory_index: u64) -> Result<SimplexPoint> {
    let walker = Walker::new(params, point.n())?;
    if point.active_count() < 2 {
        return Err(Error::WalkFinished { active: point.active_count() });
    }
    let mut rng = stream_rng(params.seed, trajectory_index);
    let mut p = point.clone();
    walker.step_in_place(&mut p, &mut rng, &mut Scratch::new(point.n()), &mut Vec::new());
    Ok(p)
}

/// Walks from `p0` until a vertex is reached or `max_steps` run out.
pub fn run_trajectory(p0: &SimplexPoint, params: &WalkParams, trajectory_index: u64) -> Result<TrajectoryOutcome> {
    Walker::new(params, p0.n())?.simulate(p0, trajectory_index, StopRule::Vertex, |_, _| {})
}

/// Vertex-hitting frequencies of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingStats {
    /// Completed (non-truncated) trajectories.
    pub n_trajectories: u64,
    pub n_requested: u64,
    pub truncated: u64,
    pub counts: Vec<u64>,
    pub pi_hat: Vec<f64>,
    /// Binomial standard errors `sqrt(π̂(1 − π̂)/n)`.
    pub std_err: Vec<f64>,
    /// Mean number of steps of completed trajectories.
    pub mean_steps: f64,
}

impl HittingStats {
    pub fn truncation_fraction(&self) -> f64 {
        self.truncated as f64 / self.n_requested.max(1) as f64
    }

    /// `(π̂_j − p_j)/sqrt(p_j(1 − p_j)/n)` per channel: deviation from a
    /// reference law in units of its binomial standard error.
    pub fn z_scores(&self, reference: &[f64]) -> Vec<f64> {
        let n = self.n_trajectories as f64;
        self.pi_hat
            .iter()
            .zip(reference)
            .map(|(&pi, &p)| {
                let se = (p * (1.0 - p) / n).sqrt();
                if se > 0.0 {
                    (pi - p) / se
                } else if pi == p {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }
}

/// Tally of categorical outcomes; integer sums keep aggregation exact and
/// order-independent.
#[derive(Debug, Clone, Default)]
struct Tally {
    counts: Vec<u64>,
    truncated: u64,
    steps: u128,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self { counts: vec![0; n], truncated: 0, steps: 0 }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.truncated += other.truncated;
        self.steps += other.steps;
        self
    }

    fn into_stats(self, n_requested: u64) -> HittingStats {
        let done: u64 = self.counts.iter().sum();
        let pi_hat: Vec<f64> = self.counts.iter().map(|&c| if done > 0 { c as f64 / done as f64 } else { 0.0 }).collect();
        let std_err = pi_hat.iter().map(|&p| if done > 0 { (p * (1.0 - p) / done as f64).sqrt() } else { f64::NAN }).collect();
        HittingStats {
            n_trajectories: done,
            n_requested,
            truncated: self.truncated,
            counts: self.counts,
            pi_hat,
            std_err,
            mean_steps: if done > 0 { self.steps as f64 / done as f64 } else { f64::NAN },
        }
    }
}

fn tally<F>(walker: &Walker, p0: &SimplexPoint, n_traj: u64, stop: StopRule, classify: F) -> Result<Tally>
where
    F: Fn(&TrajectoryOutcome) -> Option<usize> + Sync,
{
    walker.check_point(p0)?;
    let n = walker.n;
    Ok((0..n_traj)
        .into_par_iter()
        .map(|i| {
            let out = walker.simulate(p0, i, stop, |_, _| {}).expect("point checked above");
            let mut t = Tally::new(n);
            match (out.truncated, classify(&out)) {
                (false, Some(j)) => {
                    t.counts[j] += 1;
                    t.steps += out.steps_taken as u128;
                }
                _ => t.truncated += 1,
            }
            t
        })
        .reduce(|| Tally::new(n), Tally::merge))
}

/// Estimates the vertex-hitting law `π_j` from `n_traj` trajectories.
pub fn estimate_hitting(p0: &SimplexPoint, params: &WalkParams, n_traj: u64) -> Result<HittingStats> {
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    let walker = Walker::new(params, p0.n())?;
    Ok(tally(&walker, p0, n_traj, StopRule::Vertex, |o| o.winner)?.into_stats(n_traj))
}

/// Probability that each face `p_k = 0` is the first one reached.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceHitting {
    pub q_hat: Vec<f64>,
    pub std_err: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_trajectories: u64,
    pub truncated: u64,
}

pub fn face_hitting_probability(p0: &SimplexPoint, params: &WalkParams, n_traj: u64) -> Result<FaceHitting> {
    if p0.active_count() != p0.n() {
        return Err(Error::InvalidSimplexPoint("face hitting needs every channel active at the start".into()));
    }
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    let walker = Walker::new(params, p0.n())?;
    let stats = tally(&walker, p0, n_traj, StopRule::FirstAbsorption, |o| o.first_absorbed())?.into_stats(n_traj);
    Ok(FaceHitting {
        q_hat: stats.pi_hat,
        std_err: stats.std_err,
        counts: stats.counts,
        n_trajectories: stats.n_trajectories,
        truncated: stats.truncated,
    })
}

/// Face-hitting probability at a point versus its average over a sphere
/// around it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanValueReport {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub combined_std_err: Vec<f64>,
    pub sphere_points: Vec<SimplexPoint>,
}

impl MeanValueReport {
    /// `|lhs − rhs| / combined_std_err` per face.
    pub fn z_scores(&self) -> Vec<f64> {
        self.lhs
            .iter()
            .zip(&self.rhs)
            .zip(&self.combined_std_err)
            .map(|((l, r), s)| if *s > 0.0 { (l - r).abs() / s } else if l == r { 0.0 } else { f64::INFINITY })
            .collect()
    }

    /// The mean-value property holds within `k` combined standard errors.
    pub fn holds_within(&self, k: f64) -> bool {
        self.z_scores().iter().all(|&z| z <= k)
    }
}

/// Distance, within the hyperplane `Σ p = 1`, from `p` to the face `p_k = 0`.
pub fn distance_to_face(p: &SimplexPoint, k: usize) -> f64 {
    p.coords[k] / (1.0 - 1.0 / p.n() as f64).sqrt()
}

/// `n_points` points on the sphere of `radius` about `center` inside the
/// hyperplane, in antipodal pairs with uniformly random axes.
pub fn sphere_points(center: &SimplexPoint, radius: f64, n_points: usize, seed: u64) -> Result<Vec<SimplexPoint>> {
    let n = center.n();
    let inside = (0..n).all(|k| center.active[k] && distance_to_face(center, k) > radius);
    if !(radius > 0.0) || !inside {
        return Err(Error::InvalidParameter(format!("sphere of radius {radius} is not strictly inside the simplex")));
    }
    let all = vec![true; n];
    let mut rng = stream_rng(mix_seed(seed, 0x5048_4552_4521), 0);
    let mut out = Vec::with_capacity(n_points);
    while out.len() < n_points {
        let dir = loop {
            let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let d = project_increment(&g, &all)?;
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break d.into_iter().map(|x| x * radius / norm).collect::<Vec<_>>();
            }
        };
        for sign in [1.0, -1.0] {
            if out.len() < n_points {
                let coords = center.coords.iter().zip(&dir).map(|(c, d)| c + sign * d).collect();
                out.push(SimplexPoint::new(coords)?);
            }
        }
    }
    Ok(out)
}

/// Compares `q_k(P)` with the average of `q_k` over a sphere around `P`.
/// Sphere point `i` uses master seed `mix_seed(seed, i + 1)`.
pub fn mean_value_check(p0: &SimplexPoint, radius: f64, params: &WalkParams, n_traj: u64, n_sphere: usize) -> Result<MeanValueReport> {
    if n_sphere == 0 {
        return Err(Error::InvalidParameter("n_sphere must be at least 1".into()));
    }
    let points = sphere_points(p0, radius, n_sphere, params.seed)?;
    let centre = face_hitting_probability(p0, params, n_traj)?;
    let n = p0.n();
    let mut rhs = vec![0.0; n];
    let mut rhs_var = vec![0.0; n];
    for (i, q) in points.iter().enumerate() {
        let sub = WalkParams { seed: mix_seed(params.seed, i as u64 + 1), ..params.clone() };
        let fh = face_hitting_probability(q, &sub, n_traj)?;
        for k in 0..n {
            rhs[k] += fh.q_hat[k];
            rhs_var[k] += fh.std_err[k] * fh.std_err[k];
        }
    }
    let m = points.len() as f64;
    let rhs: Vec<f64> = rhs.iter().map(|x| x / m).collect();
    let combined = (0..n).map(|k| (centre.std_err[k].powi(2) + rhs_var[k] / (m * m)).sqrt()).collect();
    Ok(MeanValueReport { lhs: centre.q_hat, rhs, combined_std_err: combined, sphere_points: points })
}

/// Ensemble mean of the coordinates at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMean {
    pub step: u64,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub checkpoints: Vec<CheckpointMean>,
    /// Largest `|Σ p_j − 1|` seen at any step of any trajectory.
    pub max_sum_deviation: f64,
    /// Largest `|Σ_j mean_j − 1|` over checkpoints.
    pub max_mean_sum_deviation: f64,
}

/// Per-checkpoint ensemble means of `p_j(t)`. Trajectories that reach a
/// vertex early contribute their frozen final coordinates.
pub fn martingale_check(p0: &SimplexPoint, params: &WalkParams, n_traj: u64, checkpoints: &[u64]) -> Result<MartingaleReport> {
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    if let Some(&c) = checkpoints.iter().find(|&&c| c > params.max_steps) {
        return Err(Error::InvalidParameter(format!("checkpoint {c} exceeds max_steps {}", params.max_steps)));
    }
    let walker = Walker::new(params, p0.n())?;
    walker.check_point(p0)?;
    let n = p0.n();
    let mut sorted: Vec<u64> = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let last = sorted.last().copied().unwrap_or(0);

    // per trajectory: coordinates at each checkpoint, and the max sum error
    let per_traj: Vec<(Vec<Vec<f64>>, f64)> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut snaps: Vec<Vec<f64>> = Vec::with_capacity(sorted.len());
            let mut next = 0;
            let mut worst = 0.0_f64;
            let out = walker
                .simulate(p0, i, StopRule::Steps(last), |step, p| {
                    worst = worst.max(p.sum_deviation());
                    while next < sorted.len() && sorted[next] == step {
                        snaps.push(p.coords.clone());
                        next += 1;
                    }
                })
                .expect("point checked above");
            while snaps.len() < sorted.len() {
                snaps.push(out.final_point.coords.clone());
            }
            (snaps, worst)
        })
        .collect();

    let count = n_traj as f64;
    let mut result = Vec::with_capacity(sorted.len());
    let mut max_mean_sum_deviation = 0.0_f64;
    for (c, &step) in sorted.iter().enumerate() {
        let mut mean = vec![0.0; n];
        for (snaps, _) in &per_traj {
            for (m, x) in mean.iter_mut().zip(&snaps[c]) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; n];
        for (snaps, _) in &per_traj {
            for ((v, x), m) in var.iter_mut().zip(&snaps[c]).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std_err = var.iter().map(|v| (v / (count - 1.0).max(1.0) / count).sqrt()).collect();
        max_mean_sum_deviation = max_mean_sum_deviation.max((mean.iter().sum::<f64>() - 1.0).abs());
        result.push(CheckpointMean { step, mean, std_err });
    }
    let max_sum_deviation = per_traj.iter().map(|(_, w)| *w).fold(0.0, f64::max);
    Ok(MartingaleReport { checkpoints: result, max_sum_deviation, max_mean_sum_deviation })
}
