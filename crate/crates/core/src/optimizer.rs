//! Alternating minimization of the penalized energy.
//!
//! Each outer iteration (a) projects the atoms onto the current curve, (b)
//! moves the vertices to decrease the fixed-plan objective, which is convex in
//! the stacked vertex vector, and (c) adjusts the vertex set. Reassignment can
//! only lower the fidelity, vertex steps are accepted only when they lower the
//! objective, and management steps only when they do not raise the energy,
//! so the recorded energy trace is non-increasing.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::curve::Polyline;
use crate::diagnostics::{full_report_with, TheoryReport};
use crate::energy::{
    add_length_pulls, energy, energy_total, fixed_plan_objective, pull_kernel, stationarity_report_with, target_point,
    validate_params, EnergyBreakdown, StationarityReport,
};
use crate::geom::{axpy, dist, dist2_at, dot, norm, pow_p, segment_param, sub};
use crate::hull::ConvexPolygon;
use crate::measure::DiscreteMeasure;
use crate::projection::{build_plan_with, PlanTolerances, Target, TieRule, TransportPlan};
use crate::{Error, Result};

/// Inner vertex-descent parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct InnerConfig {
    pub max_steps: usize,
    /// Step multiplier on each backtracking failure.
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Backtracking failures before the step is declared stalled.
    pub max_halvings: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self { max_steps: 50, shrink: 0.5, armijo: 1e-4, max_halvings: 60 }
    }
}

/// Fitting parameters. `None` fields are derived from the measure.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FitConfig {
    pub p: f64,
    pub lambda: f64,
    /// Initial vertex count; defaults to `ceil(sqrt n)` clamped to `[2, m_max]`.
    pub m_init: Option<usize>,
    /// Vertex budget; defaults to `10 ceil(sqrt n)` capped at 200.
    pub m_max: Option<usize>,
    pub max_outer_iters: usize,
    pub inner: InnerConfig,
    pub tol_energy_rel: f64,
    /// Gradient norm at which the inner solve stops; defaults to `1e-6 lambda`.
    pub tol_stationarity: Option<f64>,
    /// Defaults to `1e-9 diam`.
    pub eps_tie: Option<f64>,
    /// Defaults to `1e-9 diam`.
    pub eps_merge: Option<f64>,
    /// Extra starts after the plain one. Odd restarts begin from a path
    /// through groups of atoms taken in principal-axis order instead of the
    /// principal segment; restarts from the second on are jittered. Every
    /// third restart from the third on instead begins at the cheapest of many
    /// polylines with vertices on atoms.
    pub restarts: usize,
    pub seed: u64,
    pub tie_rule: TieRule,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            lambda: 0.1,
            m_init: None,
            m_max: None,
            max_outer_iters: 2000,
            inner: InnerConfig::default(),
            tol_energy_rel: 1e-8,
            tol_stationarity: None,
            eps_tie: None,
            eps_merge: None,
            restarts: 0,
            seed: 0,
            tie_rule: TieRule::FirstArcLength,
        }
    }
}

impl FitConfig {
    pub fn new(p: f64, lambda: f64) -> Self {
        Self { p, lambda, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        validate_params(self.p, self.lambda)?;
        if let (Some(a), Some(b)) = (self.m_init, self.m_max) {
            if a > b {
                return Err(Error::Config(alloc::format!("m_init ({a}) exceeds m_max ({b})")));
            }
        }
        if self.m_init == Some(0) || self.m_max == Some(0) {
            return Err(Error::Config("vertex counts must be at least 1".into()));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tol_energy_rel)
            || self.tol_stationarity.is_some_and(|t| !positive(t))
            || self.eps_tie.is_some_and(|t| !positive(t))
            || self.eps_merge.is_some_and(|t| !(t >= 0.0))
        {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.inner.shrink > 0.0 && self.inner.shrink < 1.0)
            || !(self.inner.armijo > 0.0 && self.inner.armijo < 1.0)
        {
            return Err(Error::Config("line search needs shrink and armijo in (0, 1)".into()));
        }
        Ok(())
    }

    /// Validates and fills in the defaults that depend on the measure.
    pub fn resolve(&self, mu: &DiscreteMeasure) -> Result<Resolved> {
        self.validate()?;
        let n = mu.len();
        let root = libm::ceil(libm::sqrt(n as f64)) as usize;
        let m_max = self.m_max.unwrap_or((10 * root).min(200)).max(1);
        let m_init = self.m_init.unwrap_or(root.clamp(2, m_max.max(2))).min(m_max);
        if m_init > m_max {
            return Err(Error::Config(alloc::format!("m_init ({m_init}) exceeds m_max ({m_max})")));
        }
        let diam = mu.diameter();
        let scale = if diam > 0.0 { diam } else { 1.0 };
        let mut plan_tol = PlanTolerances::for_scale(diam);
        if let Some(t) = self.eps_tie {
            plan_tol.eps_tie = t;
        }
        Ok(Resolved {
            p: self.p,
            lambda: self.lambda,
            m_init,
            m_max,
            diam,
            scale,
            plan_tol,
            eps_merge: self.eps_merge.unwrap_or(1e-9 * scale),
            tol_stationarity: self.tol_stationarity.unwrap_or(1e-6 * self.lambda),
            collapse_len: 1e-3 * scale,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Resolved {
    pub p: f64,
    pub lambda: f64,
    pub m_init: usize,
    pub m_max: usize,
    pub diam: f64,
    pub scale: f64,
    pub plan_tol: PlanTolerances,
    pub eps_merge: f64,
    pub tol_stationarity: f64,
    pub collapse_len: f64,
}

/// How a restart ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FitStatus {
    /// Energy stalled and the inner gradient met the stationarity tolerance.
    Converged,
    /// Energy stalled but the inner solve stopped on its step budget or line search.
    StationaryWithinTolerance,
    MaxIterations,
}

/// Outcome of one start.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RestartOutcome {
    pub restart: usize,
    pub curve: Polyline,
    /// Energy before the first iteration and after every outer iteration.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub status: FitStatus,
}

impl RestartOutcome {
    pub fn final_energy(&self) -> f64 {
        *self.energy_trace.last().expect("trace starts with the initial energy")
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub curve: Polyline,
    /// Energy trace of the winning restart.
    pub energy_trace: Vec<f64>,
    pub energy: EnergyBreakdown,
    pub stationarity: StationarityReport,
    pub theory: TheoryReport,
    pub iterations: usize,
    pub restart: usize,
    pub status: FitStatus,
    /// Final energy of every restart, by restart index.
    pub restart_energies: Vec<f64>,
}

/// Fits a curve, running `cfg.restarts + 1` starts and keeping the lowest
/// final energy (lowest restart index on ties).
pub fn fit(mu: &DiscreteMeasure, cfg: &FitConfig) -> Result<FitResult> {
    let r = cfg.resolve(mu)?;
    let outcomes = (0..=cfg.restarts).map(|k| run_restart(mu, cfg, k)).collect::<Result<Vec<_>>>()?;
    assemble(mu, cfg, outcomes, &r)
}

/// Builds the result from per-restart outcomes, which may have been computed
/// in any order or in parallel.
pub fn assemble(
    mu: &DiscreteMeasure,
    cfg: &FitConfig,
    mut outcomes: Vec<RestartOutcome>,
    r: &Resolved,
) -> Result<FitResult> {
    outcomes.sort_by_key(|o| o.restart);
    let restart_energies: Vec<f64> = outcomes.iter().map(RestartOutcome::final_energy).collect();
    let best = outcomes
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (k, o)| match acc {
            Some((_, e)) if e <= o.final_energy() => acc,
            _ => Some((k, o.final_energy())),
        })
        .map(|(k, _)| k)
        .ok_or_else(|| Error::Config("no restarts".into()))?;
    let win = outcomes.swap_remove(best);
    let energy = energy(mu, &win.curve, cfg.p, cfg.lambda)?;
    let stationarity = stationarity_report_with(mu, &win.curve, cfg.p, cfg.lambda, r.plan_tol)?;
    let theory = full_report_with(mu, &win.curve, cfg.p, cfg.lambda, r.plan_tol)?;
    Ok(FitResult {
        curve: win.curve,
        energy_trace: win.energy_trace,
        energy,
        stationarity,
        theory,
        iterations: win.iterations,
        restart: win.restart,
        status: win.status,
        restart_energies,
    })
}

/// Resolves defaults that depend on the measure; exposed for drivers that run
/// restarts themselves.
pub fn resolve(mu: &DiscreteMeasure, cfg: &FitConfig) -> Result<Resolved> {
    cfg.resolve(mu)
}

/// Initial curve of the plain start.
pub fn init_curve(mu: &DiscreteMeasure, cfg: &FitConfig) -> Result<Polyline> {
    let r = cfg.resolve(mu)?;
    Ok(init_for_restart(mu, &r, cfg.seed, 0))
}

/// Principal axes of `mu`: weighted mean, variances in decreasing order and
/// the matching unit axes. Each axis is oriented so that the first atom with
/// a clearly nonzero coordinate along it has a positive one; equal variances
/// keep coordinate order.
pub fn principal_frame(mu: &DiscreteMeasure) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let d = mu.dim();
    let mean = mu.mean();
    let total = mu.total_mass();
    let mut cov = alloc::vec![0.0; d * d];
    for (x, m) in mu.atoms() {
        let y = sub(x, &mean);
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += m * y[a] * y[b];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= total);
    let (vals, vecs) = jacobi_eigen(&cov, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let scale = mu.diameter().max(f64::MIN_POSITIVE);
    let mut axes = Vec::with_capacity(d);
    let mut variances = Vec::with_capacity(d);
    for &k in &order {
        let mut e: Vec<f64> = (0..d).map(|r| vecs[r * d + k]).collect();
        let first = mu.atoms().map(|(x, _)| dot(&sub(x, &mean), &e)).find(|c| c.abs() > 1e-9 * scale);
        if first.is_some_and(|c| c < 0.0) {
            e.iter_mut().for_each(|v| *v = -*v);
        }
        variances.push(vals[k].max(0.0));
        axes.push(e);
    }
    (mean, variances, axes)
}

/// Cyclic Jacobi eigendecomposition of a symmetric `d x d` matrix. Returns the
/// eigenvalues and the eigenvectors as columns of a row-major matrix.
fn jacobi_eigen(a: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = alloc::vec![0.0; d * d];
    for k in 0..d {
        v[k * d + k] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>();
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum();
        if off <= 1e-30 * frob || off == 0.0 {
            break;
        }
        for pi in 0..d {
            for q in pi + 1..d {
                let apq = a[pi * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[pi * d + pi]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + pi];
                    let akq = a[k * d + q];
                    a[k * d + pi] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[pi * d + k];
                    let aqk = a[q * d + k];
                    a[pi * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + pi];
                    let vkq = v[k * d + q];
                    v[k * d + pi] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..d).map(|k| a[k * d + k]).collect(), v)
}

/// Largest measure whose path start visits every atom.
const PATH_PER_ATOM_MAX: usize = 8;

/// Work budget, in point-to-curve distance evaluations, for choosing an atom path.
const ATOM_PATH_WORK: usize = 2_000_000;

/// Lowest-energy polyline whose vertices are distinct atoms, with between 2
/// and `min(n, m_max, m)` vertices. All such paths are tried when there are
/// few enough, each up to reversal; otherwise a seeded sample of paths with
/// the largest vertex count.
fn atom_path(mu: &DiscreteMeasure, r: &Resolved, m: usize, rng: &mut ChaCha8Rng) -> Polyline {
    let n = mu.len();
    let len = n.min(r.m_max).min(m).max(2);
    let budget = (ATOM_PATH_WORK / (n * len)).clamp(16, 4096);
    let d = mu.dim();
    let path = |idx: &[usize]| {
        let coords = idx.iter().flat_map(|&i| mu.position(i).iter().copied()).collect();
        Polyline::from_vertices_merged(d, coords).expect("non-empty")
    };
    let mut best: Option<(f64, Polyline)> = None;
    let mut consider = |idx: &[usize]| {
        let c = path(idx);
        let e = energy_total(mu, &c, r.p, r.lambda);
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, c));
        }
    };
    let total = (2..=len)
        .map(|l| (n - l + 1..=n).fold(1usize, |a, b| a.saturating_mul(b)) / 2)
        .fold(0usize, usize::saturating_add);
    if total <= budget {
        let mut idx = Vec::with_capacity(len);
        let mut used = alloc::vec![false; n];
        enumerate_paths(n, len, &mut idx, &mut used, &mut consider);
    } else {
        let mut pool: Vec<usize> = (0..n).collect();
        for _ in 0..budget {
            // Partial Fisher-Yates: the first `len` entries become the path.
            for k in 0..len {
                let j = rng.random_range(k..n);
                pool.swap(k, j);
            }
            consider(&pool[..len]);
        }
    }
    best.expect("at least one path").1
}

/// Calls `f` on every sequence of 2 to `len` distinct indices below `n` whose
/// first index is smaller than its last.
fn enumerate_paths(n: usize, len: usize, idx: &mut Vec<usize>, used: &mut [bool], f: &mut impl FnMut(&[usize])) {
    if idx.len() >= 2 && idx[0] < idx[idx.len() - 1] {
        f(idx);
    }
    if idx.len() == len {
        return;
    }
    for i in 0..n {
        if !used[i] {
            used[i] = true;
            idx.push(i);
            enumerate_paths(n, len, idx, used, f);
            idx.pop();
            used[i] = false;
        }
    }
}

/// Path through the atoms in the order of their first principal coordinate:
/// consecutive groups of nearly equal size, each replaced by its weighted mean.
fn principal_path(mu: &DiscreteMeasure, mean: &[f64], axis: &[f64], m: usize) -> Vec<f64> {
    let d = mu.dim();
    let n = mu.len();
    let key: Vec<f64> = mu.atoms().map(|(x, _)| dot(&sub(x, mean), axis)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
    let groups = m.min(n);
    let mut coords = Vec::with_capacity(groups * d);
    for g in 0..groups {
        let (lo, hi) = (g * n / groups, (g + 1) * n / groups);
        let mut acc = alloc::vec![0.0; d];
        let mut w = 0.0;
        for &i in &order[lo..hi] {
            axpy(&mut acc, mu.mass(i), mu.position(i));
            w += mu.mass(i);
        }
        coords.extend(acc.iter().map(|v| v / w));
    }
    coords
}

pub(crate) fn init_for_restart(mu: &DiscreteMeasure, r: &Resolved, seed: u64, restart: usize) -> Polyline {
    let d = mu.dim();
    let (mean, variances, axes) = principal_frame(mu);
    let half = libm::sqrt(variances[0]);
    let m = if half > 1e-12 * r.scale { r.m_init } else { 1 };
    if restart >= 3 && restart % 3 == 0 && m > 1 && mu.len() > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        return atom_path(mu, r, m, &mut rng);
    }
    let mut coords = if restart % 2 == 1 && m > 1 {
        // Tiny measures get a vertex per atom.
        let groups = if mu.len() <= PATH_PER_ATOM_MAX { mu.len().min(r.m_max) } else { m };
        principal_path(mu, &mean, &axes[0], groups)
    } else {
        let mut coords = Vec::with_capacity(m * d);
        for j in 0..m {
            let s = if m == 1 { 0.0 } else { -half + 2.0 * half * j as f64 / (m - 1) as f64 };
            let mut v = mean.clone();
            axpy(&mut v, s, &axes[0]);
            coords.extend(v);
        }
        coords
    };
    if restart > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let hull = (d == 2).then(|| ConvexPolygon::of_measure(mu).expect("planar"));
        let (lo, hi) = mu.bounding_box();
        for v in coords.chunks_exact_mut(d) {
            // Noise is drawn in the principal frame, so a rigidly moved
            // measure receives the rigidly moved perturbation.
            for axis in &axes {
                let xi: f64 = StandardNormal.sample(&mut rng);
                axpy(v, 0.1 * r.diam * xi, axis);
            }
            match &hull {
                Some(h) => {
                    let q = h.nearest(v);
                    v.copy_from_slice(&q);
                }
                None => {
                    for k in 0..d {
                        v[k] = v[k].clamp(lo[k], hi[k]);
                    }
                }
            }
        }
    }
    Polyline::from_vertices_merged(d, coords).expect("non-empty")
}

/// Result of the fixed-plan vertex descent.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub curve: Polyline,
    /// Fixed-plan objective before the first step and after each accepted step.
    pub objective_trace: Vec<f64>,
    pub steps: usize,
    /// The line search failed to find a decrease.
    pub stalled: bool,
    /// The gradient dropped below the stationarity tolerance.
    pub converged: bool,
}

/// Lowers the fixed-plan objective `sum T_ij |x_i - z_ij|^p + lambda L` with
/// targets frozen at their barycentric positions.
pub fn fixed_plan_solve(
    mu: &DiscreteMeasure,
    c: &Polyline,
    plan: &TransportPlan,
    cfg: &FitConfig,
) -> Result<InnerOutcome> {
    let r = cfg.resolve(mu)?;
    if plan.num_vertices() != c.num_vertices() {
        return Err(Error::Domain("plan was built for a different curve".into()));
    }
    let run = inner_solve(mu, c.coords(), plan, &r, &cfg.inner, false);
    Ok(InnerOutcome {
        curve: Polyline::from_vertices_merged(c.dim(), run.coords)?,
        objective_trace: run.trace,
        steps: run.steps,
        stalled: run.stalled,
        converged: run.converged,
    })
}

struct InnerRun {
    coords: Vec<f64>,
    trace: Vec<f64>,
    steps: usize,
    stalled: bool,
    converged: bool,
}

/// First-order data of the fixed-plan objective at `coords`.
/// A `p = 1` atom inside segment `segment` at parameter `t`. Sliding the
/// segment along itself costs nothing; moving it sideways costs `mass` per
/// unit of displacement at `t`.
#[derive(Debug, Clone)]
struct SegmentTie {
    segment: usize,
    t: f64,
    mass: f64,
    /// Unit direction of the segment.
    dir: Vec<f64>,
}

impl SegmentTie {
    /// Sideways component of `(1 - t) a + t b`.
    fn normal_part(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - self.t) * x + self.t * y).collect();
        let along = dot(&v, &self.dir);
        axpy(&mut v, -along, &self.dir);
        v
    }
}

struct Local {
    /// Gradient of the smooth part; atoms tied down with `p = 1` are left out.
    smooth: Vec<f64>,
    /// Minimum-norm element of the subdifferential.
    steepest: Vec<f64>,
    /// Mass of `p = 1` atoms sitting on each vertex.
    tied_mass: Vec<f64>,
    /// `p = 1` atoms sitting inside a segment.
    segment_ties: Vec<SegmentTie>,
    /// Tridiagonal curvature model shared by all coordinates.
    diag: Vec<f64>,
    off: Vec<f64>,
}

fn local_model(mu: &DiscreteMeasure, plan: &TransportPlan, coords: &[f64], r: &Resolved, sliding: &[bool]) -> Local {
    let dim = mu.dim();
    let m = coords.len() / dim;
    let p = r.p;
    let eps = r.plan_tol.eps_tie;
    let mut pulls = alloc::vec![0.0; coords.len()];
    let mut tied_mass = alloc::vec![0.0; m];
    let mut segment_ties = Vec::new();
    let mut diag = alloc::vec![0.0; m];
    let mut off = alloc::vec![0.0; m.saturating_sub(1)];
    let mut z = alloc::vec![0.0; dim];
    let mut res = alloc::vec![0.0; dim];
    for (e, &slide) in plan.entries().iter().zip(sliding) {
        let x = mu.position(e.atom);
        let target = match e.target {
            Target::Segment { segment, .. } if slide => {
                let t = segment_param(
                    x,
                    &coords[segment * dim..(segment + 1) * dim],
                    &coords[(segment + 1) * dim..(segment + 2) * dim],
                );
                Target::Segment { segment, t }
            }
            other => other,
        };
        target_point(coords, dim, target, &mut z);
        for k in 0..dim {
            res[k] = x[k] - z[k];
        }
        let rn = norm(&res);
        if rn <= eps && p < 2.0 {
            if p == 1.0 {
                match target {
                    Target::Vertex(j) => tied_mass[j] += e.mass,
                    // Outside sliding solves these atoms are left out.
                    Target::Segment { .. } if !slide => {}
                    Target::Segment { segment, t } => {
                        let a = &coords[segment * dim..(segment + 1) * dim];
                        let b = &coords[(segment + 1) * dim..(segment + 2) * dim];
                        let mut dir = sub(b, a);
                        let len = norm(&dir);
                        if len > 0.0 {
                            dir.iter_mut().for_each(|v| *v /= len);
                            segment_ties.push(SegmentTie { segment, t, mass: e.mass, dir });
                        } else {
                            tied_mass[segment] += e.mass;
                        }
                    }
                }
            }
            continue;
        }
        let k = pull_kernel(rn, p, eps).expect("radius above tie tolerance");
        crate::energy::fold_into(&mut pulls, dim, target, e.mass * k, &res);
        let w = e.mass * k * if p > 2.0 { p - 1.0 } else { 1.0 };
        match target {
            Target::Vertex(j) => diag[j] += w,
            Target::Segment { segment, t } => {
                diag[segment] += w * (1.0 - t) * (1.0 - t);
                diag[segment + 1] += w * t * t;
                off[segment] += w * t * (1.0 - t);
            }
        }
    }
    add_length_pulls(&mut pulls, coords, dim, r.lambda);
    for s in 0..m.saturating_sub(1) {
        let len = dist(&coords[s * dim..(s + 1) * dim], &coords[(s + 1) * dim..(s + 2) * dim]);
        if len > 0.0 {
            let w = r.lambda / len;
            diag[s] += w;
            diag[s + 1] += w;
            off[s] -= w;
        }
    }
    let smooth: Vec<f64> = pulls.iter().map(|g| -g).collect();
    let steepest = if segment_ties.is_empty() {
        let mut g = smooth.clone();
        for j in 0..m {
            let tm = tied_mass[j];
            if tm > 0.0 {
                let g = &mut g[j * dim..(j + 1) * dim];
                let n = norm(g);
                let f = if n <= tm { 0.0 } else { 1.0 - tm / n };
                g.iter_mut().for_each(|v| *v *= f);
            }
        }
        g
    } else {
        min_norm_subgradient(&smooth, &tied_mass, &segment_ties, dim)
    };
    Local { smooth, steepest, tied_mass, segment_ties, diag, off }
}

/// Minimum-norm element of `smooth + sum of tie balls`. A `p = 1` atom on
/// vertex j adds any vector of norm at most its mass to vertex j; one inside
/// segment s at parameter t adds `(1 - t) w` to vertex s and `t w` to vertex
/// s + 1 for any `w` normal to the segment with `|w| <= mass`. Solved by
/// cyclic projection onto each set.
fn min_norm_subgradient(smooth: &[f64], tied_mass: &[f64], segment_ties: &[SegmentTie], dim: usize) -> Vec<f64> {
    let mut g = smooth.to_vec();
    let mut u = alloc::vec![0.0; smooth.len()];
    let mut w = alloc::vec![0.0; segment_ties.len() * dim];
    let scale = smooth.iter().fold(0.0f64, |a, b| a.max(b.abs())) + tied_mass.iter().fold(0.0f64, |a, b| a.max(*b));
    let ball = |v: &mut [f64], r: f64| {
        let n = norm(v);
        if n > r {
            v.iter_mut().for_each(|x| *x *= r / n);
        }
    };
    for _ in 0..MIN_NORM_SWEEPS {
        let mut change: f64 = 0.0;
        for (j, &tm) in tied_mass.iter().enumerate() {
            if tm <= 0.0 {
                continue;
            }
            let range = j * dim..(j + 1) * dim;
            let mut next: Vec<f64> = g[range.clone()].iter().zip(&u[range.clone()]).map(|(a, b)| -(a - b)).collect();
            ball(&mut next, tm);
            for (k, i) in range.enumerate() {
                change = change.max((next[k] - u[i]).abs());
                g[i] += next[k] - u[i];
                u[i] = next[k];
            }
        }
        for (q, tie) in segment_ties.iter().enumerate() {
            let (s, a, b) = (tie.segment, 1.0 - tie.t, tie.t);
            let wq = &mut w[q * dim..(q + 1) * dim];
            let mut next: Vec<f64> = (0..dim)
                .map(|k| {
                    let hs = g[s * dim + k] - a * wq[k];
                    let ht = g[(s + 1) * dim + k] - b * wq[k];
                    -(a * hs + b * ht) / (a * a + b * b)
                })
                .collect();
            let along = dot(&next, &tie.dir);
            axpy(&mut next, -along, &tie.dir);
            ball(&mut next, tie.mass);
            for k in 0..dim {
                let dw = next[k] - wq[k];
                change = change.max(dw.abs());
                g[s * dim + k] += a * dw;
                g[(s + 1) * dim + k] += b * dw;
                wq[k] = next[k];
            }
        }
        if change <= 1e-15 * scale {
            break;
        }
    }
    g
}

const MIN_NORM_SWEEPS: usize = 200;

/// Solves the tridiagonal system `(diag, off) X = rhs` column-wise for a
/// row-major `m x dim` right-hand side.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64], dim: usize) -> Vec<f64> {
    let m = diag.len();
    let mut c = alloc::vec![0.0; m];
    let mut x = rhs.to_vec();
    let mut denom = diag[0];
    for k in 0..dim {
        x[k] /= denom;
    }
    for j in 1..m {
        c[j - 1] = off[j - 1] / denom;
        denom = diag[j] - off[j - 1] * c[j - 1];
        for k in 0..dim {
            x[j * dim + k] = (x[j * dim + k] - off[j - 1] * x[(j - 1) * dim + k]) / denom;
        }
    }
    for j in (0..m.saturating_sub(1)).rev() {
        for k in 0..dim {
            x[j * dim + k] -= c[j] * x[(j + 1) * dim + k];
        }
    }
    x
}

fn max_vertex_norm(g: &[f64], dim: usize) -> f64 {
    g.chunks_exact(dim).map(norm).fold(0.0, f64::max)
}

/// Directional derivative of the fixed-plan objective along `d`.
fn slope(local: &Local, d: &[f64], dim: usize) -> f64 {
    let tied: f64 = local
        .tied_mass
        .iter()
        .enumerate()
        .filter(|(_, tm)| **tm > 0.0)
        .map(|(j, tm)| tm * norm(&d[j * dim..(j + 1) * dim]))
        .sum();
    let inside: f64 = local
        .segment_ties
        .iter()
        .map(|tie| {
            let s = tie.segment;
            tie.mass * norm(&tie.normal_part(&d[s * dim..(s + 1) * dim], &d[(s + 1) * dim..(s + 2) * dim]))
        })
        .sum();
    dot(&local.smooth, d) + tied + inside
}

/// Preconditioned descent direction and its slope, falling back to the
/// steepest descent direction when the model step is not a descent.
fn descent_direction(local: &mut Local, dim: usize) -> Option<(Vec<f64>, f64)> {
    let m = local.diag.len();
    let peak = local.diag.iter().fold(0.0f64, |a, b| a.max(*b));
    let ridge = 1e-12 * peak + f64::MIN_POSITIVE;
    local.diag.iter_mut().for_each(|d| *d += ridge);
    // Vertices held by p = 1 atoms stay put unless the other forces win.
    for j in 0..m {
        if local.tied_mass[j] > 0.0 && local.steepest[j * dim..(j + 1) * dim].iter().all(|v| *v == 0.0) {
            local.diag[j] = 1.0;
            if j > 0 {
                local.off[j - 1] = 0.0;
            }
            if j + 1 < m {
                local.off[j] = 0.0;
            }
        }
    }
    let rhs: Vec<f64> = local.steepest.iter().map(|g| -g).collect();
    let dir = solve_tridiagonal(&local.diag, &local.off, &rhs, dim);
    let sl = slope(local, &dir, dim);
    if sl < 0.0 && dir.iter().all(|v| v.is_finite()) {
        return Some((dir, sl));
    }
    let sl = slope(local, &rhs, dim);
    (sl < 0.0).then_some((rhs, sl))
}

/// Plan entries of `p = 1` atoms lying inside their target segment. The inner
/// solve lets these slide along the segment.
fn sliding_entries(mu: &DiscreteMeasure, plan: &TransportPlan, coords: &[f64], r: &Resolved) -> Vec<bool> {
    let dim = mu.dim();
    let mut z = alloc::vec![0.0; dim];
    plan.entries()
        .iter()
        .map(|e| {
            r.p == 1.0 && matches!(e.target, Target::Segment { .. }) && {
                target_point(coords, dim, e.target, &mut z);
                dist(mu.position(e.atom), &z) <= r.plan_tol.eps_tie
            }
        })
        .collect()
}

/// The fixed-plan objective, except that sliding entries pay their distance
/// to the whole target segment. Partial minimization over the segment
/// parameter keeps it convex, and it still bounds the energy from above.
fn inner_objective(mu: &DiscreteMeasure, plan: &TransportPlan, coords: &[f64], r: &Resolved, sliding: &[bool]) -> f64 {
    if !sliding.contains(&true) {
        return fixed_plan_objective(mu, plan, coords, r.p, r.lambda);
    }
    let dim = mu.dim();
    let mut z = alloc::vec![0.0; dim];
    let mut fidelity = 0.0;
    for (e, &slide) in plan.entries().iter().zip(sliding) {
        let x = mu.position(e.atom);
        let d = match e.target {
            Target::Segment { segment, .. } if slide => {
                let a = &coords[segment * dim..(segment + 1) * dim];
                let b = &coords[(segment + 1) * dim..(segment + 2) * dim];
                libm::sqrt(dist2_at(x, a, b, segment_param(x, a, b)))
            }
            _ => {
                target_point(coords, dim, e.target, &mut z);
                dist(x, &z)
            }
        };
        fidelity += e.mass * pow_p(d, r.p);
    }
    fidelity + r.lambda * crate::energy::coords_length(coords, dim)
}

/// Descends the fixed-plan objective from `start`. With `slide`, `p = 1`
/// atoms inside their target segment may slide along it.
fn inner_solve(
    mu: &DiscreteMeasure,
    start: &[f64],
    plan: &TransportPlan,
    r: &Resolved,
    inner: &InnerConfig,
    slide: bool,
) -> InnerRun {
    let dim = mu.dim();
    let mut coords = start.to_vec();
    let sliding = if slide { sliding_entries(mu, plan, &coords, r) } else { alloc::vec![false; plan.entries().len()] };
    let mut f = inner_objective(mu, plan, &coords, r, &sliding);
    let mut trace = alloc::vec![f];
    let mut stalled = false;
    let mut converged = false;
    let mut steps = 0;
    while steps < inner.max_steps {
        let mut local = local_model(mu, plan, &coords, r, &sliding);
        if max_vertex_norm(&local.steepest, dim) < r.tol_stationarity {
            converged = true;
            break;
        }
        let Some((dir, sl)) = descent_direction(&mut local, dim) else {
            stalled = true;
            break;
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut trial = coords.clone();
        for _ in 0..=inner.max_halvings {
            for (t, (c, d)) in trial.iter_mut().zip(coords.iter().zip(&dir)) {
                *t = c + alpha * d;
            }
            let ft = inner_objective(mu, plan, &trial, r, &sliding);
            if ft <= f + inner.armijo * alpha * sl && ft < f {
                accepted = Some(ft);
                break;
            }
            alpha *= inner.shrink;
        }
        let Some(ft) = accepted else {
            stalled = true;
            break;
        };
        steps += 1;
        core::mem::swap(&mut coords, &mut trial);
        let gain = f - ft;
        f = ft;
        trace.push(f);
        if gain <= 1e-16 * f.abs() {
            break;
        }
    }
    InnerRun { coords, trace, steps, stalled, converged }
}

/// Centered principal frame of a measure. Fitting happens in this frame, which
/// makes the result follow rigid motions of the input up to rounding.
struct Frame {
    mean: Vec<f64>,
    /// Row `k` is the `k`-th principal axis.
    axes: Vec<f64>,
}

impl Frame {
    fn of(mu: &DiscreteMeasure) -> Self {
        let (mean, _, axes) = principal_frame(mu);
        Self { mean, axes: axes.concat() }
    }

    fn to_local(&self, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        let d = mu.dim();
        let mut coords = Vec::with_capacity(mu.coords().len());
        for (x, _) in mu.atoms() {
            let y = sub(x, &self.mean);
            coords.extend(self.axes.chunks_exact(d).map(|row| dot(row, &y)));
        }
        DiscreteMeasure::new(d, coords, mu.masses().to_vec())
    }

    fn to_global(&self, c: &Polyline) -> Result<Polyline> {
        let d = c.dim();
        let mut coords = Vec::with_capacity(c.coords().len());
        for v in c.vertices() {
            let mut x = self.mean.clone();
            for (k, row) in self.axes.chunks_exact(d).enumerate() {
                axpy(&mut x, v[k], row);
            }
            coords.extend(x);
        }
        Polyline::from_vertices_merged(d, coords)
    }
}

/// Runs one start of the alternating scheme.
pub fn run_restart(mu: &DiscreteMeasure, cfg: &FitConfig, restart: usize) -> Result<RestartOutcome> {
    cfg.validate()?;
    let frame = Frame::of(mu);
    let local = frame.to_local(mu)?;
    let mut out = run_restart_local(&local, cfg, restart)?;
    out.curve = frame.to_global(&out.curve)?;
    Ok(out)
}

fn run_restart_local(mu: &DiscreteMeasure, cfg: &FitConfig, restart: usize) -> Result<RestartOutcome> {
    let r = cfg.resolve(mu)?;
    let mut curve = init_for_restart(mu, &r, cfg.seed, restart);
    let mut e = energy_total(mu, &curve, r.p, r.lambda);
    if !e.is_finite() {
        return Err(Error::Numeric { iteration: 0, detail: "initial energy is not finite".into() });
    }
    let mut trace = alloc::vec![e];
    let max_len = if curve.num_segments() > 0 { 2.0 * median_segment(&curve) } else { f64::INFINITY };
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;
    let mut refine_base: Option<f64> = None;
    let hull = if mu.dim() == 2 { Some(ConvexPolygon::of_measure(mu)?) } else { None };
    for it in 1..=cfg.max_outer_iters {
        iterations = it;
        let prev = e;
        let (plan, _) = build_plan_with(mu, &curve, cfg.tie_rule, r.plan_tol)?;
        let run = inner_solve(mu, curve.coords(), &plan, &r, &cfg.inner, false);
        let candidate = Polyline::from_vertices_merged(mu.dim(), run.coords)?;
        let ec = energy_total(mu, &candidate, r.p, r.lambda);
        if !ec.is_finite() {
            return Err(Error::Numeric { iteration: it, detail: alloc::format!("energy became {ec}") });
        }
        if ec < e {
            curve = candidate;
            e = ec;
        }
        let restructured = manage(mu, &mut curve, &mut e, &r, max_len, cfg.tie_rule)?;
        let rel = (prev - e) / prev.abs().max(f64::MIN_POSITIVE);
        if !restructured && rel < cfg.tol_energy_rel {
            if r.p < 2.0 && snap_to_atoms(mu, &mut curve, &mut e, &r, cfg.tie_rule)? {
                trace.push(e);
                continue;
            }
            if r.p == 1.0 && slide_along_ties(mu, &mut curve, &mut e, &r, cfg)? {
                trace.push(e);
                continue;
            }
            if let Some(h) = &hull {
                if clip_into_hull(mu, &mut curve, &mut e, &r, h)? {
                    trace.push(e);
                    continue;
                }
            }
            if collapse_short_segment(mu, &mut curve, &mut e, &r) {
                trace.push(e);
                continue;
            }
            let refine_paid = refine_base.is_none_or(|b: f64| (b - e) > REFINE_GAIN * b.abs());
            if refine_paid && curve.num_vertices() < r.m_max {
                if let Some(refined) = refine(mu, &curve, &r, cfg.tie_rule)? {
                    refine_base = Some(e);
                    curve = refined;
                    trace.push(e);
                    continue;
                }
            }
            trace.push(e);
            status = if run.converged { FitStatus::Converged } else { FitStatus::StationaryWithinTolerance };
            break;
        }
        trace.push(e);
    }
    // The best single point is always a competitor.
    let z = best_singleton(mu, r.p);
    let point = Polyline::singleton(&z);
    let ep = energy_total(mu, &point, r.p, r.lambda);
    if ep < e {
        curve = point;
        e = ep;
        trace.push(e);
    }
    Ok(RestartOutcome { restart, curve, energy_trace: trace, iterations, status })
}

/// One inner solve in which atoms lying inside segments may slide along them,
/// kept when it lowers the energy. Fixed plans pin such atoms to one point of
/// the segment, which can hold a curve that is not stationary.
fn slide_along_ties(
    mu: &DiscreteMeasure,
    curve: &mut Polyline,
    e: &mut f64,
    r: &Resolved,
    cfg: &FitConfig,
) -> Result<bool> {
    let (plan, _) = build_plan_with(mu, curve, cfg.tie_rule, r.plan_tol)?;
    if !sliding_entries(mu, &plan, curve.coords(), r).contains(&true) {
        return Ok(false);
    }
    let run = inner_solve(mu, curve.coords(), &plan, r, &cfg.inner, true);
    let candidate = Polyline::from_vertices_merged(mu.dim(), run.coords)?;
    let ec = energy_total(mu, &candidate, r.p, r.lambda);
    if ec.is_finite() && ec < *e {
        *curve = candidate;
        *e = ec;
        return Ok(true);
    }
    Ok(false)
}

/// Puts the curve through atoms it nearly touches, one at a time, when that
/// does not raise the energy: a vertex close to an atom moves onto it, and a
/// segment passing close to an atom gets a new vertex there. For `p < 2`
/// minimizers have vertices exactly on atoms, and descent only approaches them.
fn snap_to_atoms(
    mu: &DiscreteMeasure,
    curve: &mut Polyline,
    e: &mut f64,
    r: &Resolved,
    tie_rule: TieRule,
) -> Result<bool> {
    let dim = mu.dim();
    let radius = SNAP_RADIUS * r.scale;
    let mut changed = false;
    let mut j = 0;
    while j < curve.num_vertices() {
        let v = curve.vertex(j);
        j += 1;
        let Some((i, d)) = mu.atoms().enumerate().map(|(i, (x, _))| (i, dist(x, v))).min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            continue;
        };
        if d == 0.0 || d > radius {
            continue;
        }
        let mut coords = curve.coords().to_vec();
        coords[(j - 1) * dim..j * dim].copy_from_slice(mu.position(i));
        changed |= accept_if_lower(mu, curve, e, r, coords)?;
    }
    let (plan, _) = build_plan_with(mu, curve, tie_rule, r.plan_tol)?;
    let mut inserts: Vec<(usize, f64, usize)> = plan
        .entries()
        .iter()
        .filter_map(|en| match en.target {
            Target::Segment { segment, t } if en.distance > 0.0 && en.distance <= radius => Some((segment, t, en.atom)),
            _ => None,
        })
        .collect();
    // Later insertions first so earlier segment indices stay valid.
    inserts.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)));
    inserts.dedup_by_key(|x| x.0);
    for (segment, _, atom) in inserts {
        if curve.num_vertices() >= r.m_max {
            break;
        }
        let mut coords = curve.coords().to_vec();
        let at = (segment + 1) * dim;
        coords.splice(at..at, mu.position(atom).iter().copied());
        changed |= accept_if_lower(mu, curve, e, r, coords)?;
    }
    Ok(changed)
}

fn accept_if_lower(
    mu: &DiscreteMeasure,
    curve: &mut Polyline,
    e: &mut f64,
    r: &Resolved,
    coords: Vec<f64>,
) -> Result<bool> {
    let candidate = Polyline::from_vertices_merged(mu.dim(), coords)?;
    let ec = energy_total(mu, &candidate, r.p, r.lambda);
    if ec <= *e && ec.is_finite() {
        *curve = candidate;
        *e = ec;
        return Ok(true);
    }
    Ok(false)
}

/// Snapping radius of [`snap_to_atoms`], relative to the measure scale.
const SNAP_RADIUS: f64 = 1e-3;

/// Replaces a curve that leaves the hull of the support by its projection
/// when that lowers the energy and the cuts at hull corners stay within the
/// vertex budget.
fn clip_into_hull(
    mu: &DiscreteMeasure,
    curve: &mut Polyline,
    e: &mut f64,
    r: &Resolved,
    hull: &ConvexPolygon,
) -> Result<bool> {
    if curve.vertices().all(|v| hull.contains(v)) {
        return Ok(false);
    }
    let clipped = crate::diagnostics::convex_clip(curve, hull)?.merge_vertices(r.eps_merge);
    if clipped.num_vertices() > r.m_max.max(curve.num_vertices()) {
        return Ok(false);
    }
    let ec = energy_total(mu, &clipped, r.p, r.lambda);
    if ec < *e {
        *curve = clipped;
        *e = ec;
        return Ok(true);
    }
    Ok(false)
}

/// Relative gain a refinement must bring before another one is tried.
const REFINE_GAIN: f64 = 1e-6;

/// Splits the segment whose interior carries the largest fidelity at its
/// midpoint. The image, and so the energy, is unchanged; the new vertex gives
/// the next iterations room to bend the curve.
fn refine(mu: &DiscreteMeasure, curve: &Polyline, r: &Resolved, tie_rule: TieRule) -> Result<Option<Polyline>> {
    if curve.num_segments() == 0 {
        return Ok(None);
    }
    let (plan, _) = build_plan_with(mu, curve, tie_rule, r.plan_tol)?;
    let mut load = alloc::vec![0.0; curve.num_segments()];
    for e in plan.entries() {
        if let Target::Segment { segment, .. } = e.target {
            load[segment] += e.mass * pow_p(e.distance, r.p);
        }
    }
    let (s, worst) = load.iter().enumerate().fold((0, 0.0f64), |acc, (s, l)| if *l > acc.1 { (s, *l) } else { acc });
    if worst <= 0.0 {
        return Ok(None);
    }
    let mut pieces = alloc::vec![1usize; curve.num_segments()];
    pieces[s] = 2;
    subdivide(curve, &pieces).map(Some)
}

fn median_segment(c: &Polyline) -> f64 {
    let mut lens: Vec<f64> = (0..c.num_segments()).map(|s| c.segment_length(s)).collect();
    lens.sort_by(f64::total_cmp);
    lens[lens.len() / 2]
}

/// Vertex management; returns whether the vertex set changed.
fn manage(
    mu: &DiscreteMeasure,
    curve: &mut Polyline,
    e: &mut f64,
    r: &Resolved,
    max_len: f64,
    tie_rule: TieRule,
) -> Result<bool> {
    let mut changed = false;
    let merged = curve.merge_vertices(r.eps_merge);
    if merged.num_vertices() != curve.num_vertices() {
        let em = energy_total(mu, &merged, r.p, r.lambda);
        if em <= *e {
            *curve = merged;
            *e = em;
            changed = true;
        }
    }
    // Endpoints nobody talks to.
    loop {
        let m = curve.num_vertices();
        if m < 2 {
            break;
        }
        let (_, class) = build_plan_with(mu, curve, tie_rule, r.plan_tol)?;
        let mut dropped = false;
        for end in [m - 1, 0] {
            if !class.talking[end].is_empty() {
                continue;
            }
            let d = curve.dim();
            let coords: Vec<f64> =
                curve.vertices().enumerate().filter(|(j, _)| *j != end).flat_map(|(_, v)| v.iter().copied()).collect();
            let cand = Polyline::from_vertices_merged(d, coords)?;
            let ec = energy_total(mu, &cand, r.p, r.lambda);
            if ec < *e {
                *curve = cand;
                *e = ec;
                dropped = true;
                changed = true;
                break;
            }
        }
        if !dropped {
            break;
        }
    }
    let m = curve.num_vertices();
    if m >= 2 && m < r.m_max {
        let threshold = max_len.min(2.0 * median_segment(curve));
        let mut long: Vec<(usize, f64)> =
            (0..curve.num_segments()).map(|s| (s, curve.segment_length(s))).filter(|(_, l)| *l > threshold).collect();
        if !long.is_empty() {
            long.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut budget = r.m_max - m;
            let mut pieces = alloc::vec![1usize; curve.num_segments()];
            for (s, l) in long {
                if budget == 0 {
                    break;
                }
                let k = (libm::ceil(l / threshold) as usize).min(budget + 1);
                pieces[s] = k;
                budget -= k - 1;
            }
            let cand = subdivide(curve, &pieces)?;
            let es = energy_total(mu, &cand, r.p, r.lambda);
            if es <= *e + 1e-13 * e.abs() {
                *curve = cand;
                *e = es.min(*e);
                changed = true;
            }
        }
    }
    Ok(changed)
}

fn subdivide(c: &Polyline, pieces: &[usize]) -> Result<Polyline> {
    let d = c.dim();
    let mut coords = Vec::new();
    coords.extend_from_slice(c.vertex(0));
    for (s, &k) in pieces.iter().enumerate() {
        let (a, b) = (c.vertex(s), c.vertex(s + 1));
        for i in 1..k {
            coords.extend(crate::geom::lerp(a, b, i as f64 / k as f64));
        }
        coords.extend_from_slice(b);
    }
    Polyline::from_vertices_merged(d, coords)
}

/// Tries to contract one short segment to its midpoint; keeps it if the
/// energy drops.
fn collapse_short_segment(mu: &DiscreteMeasure, curve: &mut Polyline, e: &mut f64, r: &Resolved) -> bool {
    let d = curve.dim();
    for s in 0..curve.num_segments() {
        if curve.segment_length(s) >= r.collapse_len {
            continue;
        }
        let mut coords: Vec<f64> = Vec::with_capacity(curve.coords().len());
        for (j, v) in curve.vertices().enumerate() {
            if j == s {
                coords.extend(crate::geom::lerp(v, curve.vertex(s + 1), 0.5));
            } else if j != s + 1 {
                coords.extend_from_slice(v);
            }
        }
        let Ok(cand) = Polyline::from_vertices_merged(d, coords) else { continue };
        let ec = energy_total(mu, &cand, r.p, r.lambda);
        if ec < *e {
            *curve = cand;
            *e = ec;
            return true;
        }
    }
    false
}

/// `sum m_i |x_i - z|^p`.
pub fn point_energy(mu: &DiscreteMeasure, z: &[f64], p: f64) -> f64 {
    mu.atoms().map(|(x, m)| m * pow_p(dist(x, z), p)).sum()
}

/// Approximate minimizer of `sum m_i |x_i - z|^p` over single points:
/// the weighted mean for `p = 2`, otherwise reweighted averaging (Weiszfeld's
/// iteration for `p = 1`) started from the mean, compared against the best atom.
pub fn best_singleton(mu: &DiscreteMeasure, p: f64) -> Vec<f64> {
    let mut z = mu.mean();
    let mut fz = point_energy(mu, &z, p);
    let scale = mu.diameter();
    if p != 2.0 && scale > 0.0 {
        let floor = 1e-12 * scale;
        for _ in 0..500 {
            let mut num = alloc::vec![0.0; mu.dim()];
            let mut den = 0.0;
            for (x, m) in mu.atoms() {
                let w = m * libm::pow(dist(x, &z).max(floor), p - 2.0);
                axpy(&mut num, w, x);
                den += w;
            }
            if !den.is_finite() {
                break;
            }
            let mut next: Vec<f64> = num.iter().map(|v| v / den).collect();
            let mut fnext = point_energy(mu, &next, p);
            // Damp toward the current point if the plain step overshoots.
            let mut halvings = 0;
            while fnext > fz && halvings < 30 {
                next = crate::geom::lerp(&z, &next, 0.5);
                fnext = point_energy(mu, &next, p);
                halvings += 1;
            }
            if fnext > fz {
                break;
            }
            let moved = dist(&next, &z);
            z = next;
            fz = fnext;
            if moved <= 1e-15 * scale {
                break;
            }
        }
    }
    for (x, _) in mu.atoms() {
        let fx = point_energy(mu, x, p);
        if fx < fz {
            z = x.to_vec();
            fz = fx;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::build_plan_with;

    fn two_atoms() -> DiscreteMeasure {
        DiscreteMeasure::uniform(2, &[&[0.0, 0.0], &[1.0, 0.0]]).unwrap()
    }

    #[test]
    fn atom_paths_are_enumerated_once_up_to_reversal() {
        let mut seen = Vec::new();
        enumerate_paths(4, 3, &mut Vec::new(), &mut [false; 4], &mut |idx: &[usize]| seen.push(idx.to_vec()));
        // 4 * 3 / 2 pairs and 4 * 3 * 2 / 2 triples.
        assert_eq!(seen.len(), 18);
        for p in &seen {
            let mut rev = p.clone();
            rev.reverse();
            assert!(!seen.contains(&rev) || rev == *p);
        }
    }

    #[test]
    fn atom_path_start_runs_through_atoms() {
        let mu = DiscreteMeasure::uniform(2, &[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let cfg = FitConfig::new(1.0, 0.05);
        let r = cfg.resolve(&mu).unwrap();
        let c = init_for_restart(&mu, &r, 0, 3);
        assert!(c.vertices().all(|v| mu.atoms().any(|(x, _)| x == v)));
        assert!((2..=r.m_init.max(2)).contains(&c.num_vertices()));
    }

    #[test]
    fn init_two_atoms_on_axis() {
        let cfg = FitConfig { m_init: Some(2), ..FitConfig::new(2.0, 0.2) };
        let c = init_curve(&two_atoms(), &cfg).unwrap();
        assert_eq!(c.num_vertices(), 2);
        for v in c.vertices() {
            assert!(v[1].abs() < 1e-15);
        }
        let mid = crate::geom::lerp(c.vertex(0), c.vertex(1), 0.5);
        assert!(dist(&mid, &[0.5, 0.0]) < 1e-15);
    }

    #[test]
    fn init_symmetric_picks_first_axis() {
        let mu = DiscreteMeasure::uniform(2, &[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let c = init_curve(&mu, &FitConfig { m_init: Some(3), ..FitConfig::new(2.0, 0.1) }).unwrap();
        for v in c.vertices() {
            assert!((v[1] - 0.5).abs() < 1e-15, "{:?}", c);
        }
    }

    #[test]
    fn init_single_atom_is_singleton() {
        let mu = DiscreteMeasure::uniform(2, &[&[2.0, 3.0]]).unwrap();
        let c = init_curve(&mu, &FitConfig::new(2.0, 0.1)).unwrap();
        assert_eq!(c.num_vertices(), 1);
        assert_eq!(c.vertex(0), [2.0, 3.0]);
    }

    #[test]
    fn jacobi_recovers_known_axes() {
        let (vals, vecs) = jacobi_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        let mut v = vals.clone();
        v.sort_by(f64::total_cmp);
        assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
        let top = if vals[0] > vals[1] { 0 } else { 1 };
        assert!((vecs[top].abs() - libm::sqrt(0.5)).abs() < 1e-14);
    }

    #[test]
    fn fit_two_atoms_closed_form() {
        let cfg = FitConfig { m_init: Some(2), ..FitConfig::new(2.0, 0.2) };
        let res = fit(&two_atoms(), &cfg).unwrap();
        assert!((res.energy.total - 0.16).abs() < 1e-6, "{}", res.energy.total);
        assert!((res.curve.length() - 0.6).abs() < 1e-3);
    }

    #[test]
    fn fit_two_atoms_large_lambda_is_point() {
        let cfg = FitConfig { m_init: Some(2), ..FitConfig::new(2.0, 0.6) };
        let res = fit(&two_atoms(), &cfg).unwrap();
        assert_eq!(res.curve.num_vertices(), 1);
        assert!((res.energy.total - 0.25).abs() < 1e-9);
        assert!(dist(res.curve.vertex(0), &[0.5, 0.0]) < 1e-9);
    }

    #[test]
    fn fit_single_atom() {
        let mu = DiscreteMeasure::uniform(2, &[&[0.1, 0.2]]).unwrap();
        let res = fit(&mu, &FitConfig::new(1.0, 0.3)).unwrap();
        assert_eq!(res.curve.num_vertices(), 1);
        assert_eq!(res.energy.total, 0.0);
    }

    #[test]
    fn fixed_plan_single_free_vertex_moves_to_atom() {
        let mu = DiscreteMeasure::uniform(2, &[&[1.0, 2.0]]).unwrap();
        let c = Polyline::singleton(&[0.0, 0.0]);
        let cfg = FitConfig::new(2.0, 1e-9);
        let r = cfg.resolve(&mu).unwrap();
        let (plan, _) = build_plan_with(&mu, &c, TieRule::FirstArcLength, r.plan_tol).unwrap();
        let out = fixed_plan_solve(&mu, &c, &plan, &cfg).unwrap();
        assert!(dist(out.curve.vertex(0), &[1.0, 2.0]) < 1e-12);
    }

    #[test]
    fn fixed_plan_symmetric_pulls_stay_on_axis() {
        let mu = DiscreteMeasure::uniform(
            2,
            &[&[0.0, 0.3], &[0.0, -0.3], &[1.0, 0.3], &[1.0, -0.3], &[0.5, 0.2], &[0.5, -0.2]],
        )
        .unwrap();
        let c = Polyline::from_points(&[&[0.2, 0.0], &[0.5, 0.0], &[0.8, 0.0]]).unwrap();
        let cfg = FitConfig::new(2.0, 0.05);
        let r = cfg.resolve(&mu).unwrap();
        let (plan, _) = build_plan_with(&mu, &c, TieRule::FirstArcLength, r.plan_tol).unwrap();
        let out = fixed_plan_solve(&mu, &c, &plan, &cfg).unwrap();
        for v in out.curve.vertices() {
            assert!(v[1].abs() < 1e-12);
        }
        assert!(out.objective_trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn best_singleton_geometric_median() {
        // Three collinear atoms: the geometric median is the middle one.
        let mu = DiscreteMeasure::uniform(2, &[&[0.0, 0.0], &[1.0, 0.0], &[5.0, 0.0]]).unwrap();
        let z = best_singleton(&mu, 1.0);
        assert!(dist(&z, &[1.0, 0.0]) < 1e-9);
        let z2 = best_singleton(&mu, 2.0);
        assert!(dist(&z2, &[2.0, 0.0]) < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::new(0.5, 0.2).validate().is_err());
        assert!(FitConfig::new(2.0, 0.0).validate().is_err());
        let bad = FitConfig { m_init: Some(10), m_max: Some(5), ..FitConfig::new(2.0, 0.1) };
        assert!(bad.validate().is_err());
        let bad = FitConfig { tol_energy_rel: 0.0, ..FitConfig::new(2.0, 0.1) };
        assert!(bad.validate().is_err());
    }
}
