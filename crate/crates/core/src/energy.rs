//! The penalized energy `sum m_i d(x_i, c)^p + lambda L(c)`, its gradient in
//! the vertex positions, and first-variation residuals.

use alloc::vec::Vec;

use crate::curve::Polyline;
use crate::geom::{axpy, dist, norm, pow_p, sub};
use crate::measure::DiscreteMeasure;
use crate::projection::{
    build_plan_with, nearest_distance, PlanTolerances, Target, TieRule, TransportPlan, VertexStatus,
};
use crate::{Error, Result};

/// Fidelity and length parts of the energy.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyBreakdown {
    /// `sum_i m_i d_i^p`.
    pub fidelity: f64,
    /// `lambda L(c)`.
    pub length_term: f64,
    pub total: f64,
    /// `d(x_i, c)` per atom.
    pub distances: Vec<f64>,
}

pub(crate) fn validate_params(p: f64, lambda: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Config(alloc::format!("p must be ≥ 1 (got {p})")));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(alloc::format!("lambda must be > 0 (got {lambda})")));
    }
    Ok(())
}

pub fn energy(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64) -> Result<EnergyBreakdown> {
    validate_params(p, lambda)?;
    if mu.dim() != c.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), found: c.dim() });
    }
    let distances: Vec<f64> = mu.atoms().map(|(x, _)| nearest_distance(x, c)).collect();
    let fidelity: f64 = distances.iter().zip(mu.masses()).map(|(d, m)| m * pow_p(*d, p)).sum();
    let length_term = lambda * c.length();
    Ok(EnergyBreakdown { fidelity, length_term, total: fidelity + length_term, distances })
}

/// Energy total only; used on hot paths.
pub(crate) fn energy_total(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64) -> f64 {
    let fidelity: f64 = mu.atoms().map(|(x, m)| m * pow_p(nearest_distance(x, c), p)).sum();
    fidelity + lambda * c.length()
}

/// Target point for a fixed plan entry evaluated on raw vertex coordinates.
#[inline]
pub(crate) fn target_point(coords: &[f64], dim: usize, target: Target, out: &mut [f64]) {
    match target {
        Target::Vertex(j) => out.copy_from_slice(&coords[j * dim..(j + 1) * dim]),
        Target::Segment { segment, t } => {
            let a = &coords[segment * dim..(segment + 1) * dim];
            let b = &coords[(segment + 1) * dim..(segment + 2) * dim];
            for k in 0..dim {
                out[k] = (1.0 - t) * a[k] + t * b[k];
            }
        }
    }
}

/// `sum T_ij |x_i - z_ij(v)|^p + lambda sum |v_{j+1} - v_j|` with the plan's
/// targets held at fixed barycentric positions. `coords` are the stacked
/// vertex coordinates of a curve with as many vertices as the plan.
pub fn fixed_plan_objective(mu: &DiscreteMeasure, plan: &TransportPlan, coords: &[f64], p: f64, lambda: f64) -> f64 {
    let dim = mu.dim();
    let mut z = alloc::vec![0.0; dim];
    let mut fidelity = 0.0;
    for e in plan.entries() {
        target_point(coords, dim, e.target, &mut z);
        fidelity += e.mass * pow_p(dist(mu.position(e.atom), &z), p);
    }
    fidelity + lambda * coords_length(coords, dim)
}

pub(crate) fn coords_length(coords: &[f64], dim: usize) -> f64 {
    coords.windows(2 * dim).step_by(dim).map(|w| dist(&w[..dim], &w[dim..])).sum()
}

/// Adds `weights * pull` for one entry to the per-vertex accumulator, folding
/// interior targets onto the segment endpoints barycentrically.
#[inline]
pub(crate) fn fold_into(acc: &mut [f64], dim: usize, target: Target, scale: f64, v: &[f64]) {
    match target {
        Target::Vertex(j) => axpy(&mut acc[j * dim..(j + 1) * dim], scale, v),
        Target::Segment { segment, t } => {
            axpy(&mut acc[segment * dim..(segment + 1) * dim], scale * (1.0 - t), v);
            axpy(&mut acc[(segment + 1) * dim..(segment + 2) * dim], scale * t, v);
        }
    }
}

/// Sum of unit vectors from `v_j` toward its neighbors, scaled by `lambda`,
/// accumulated into `acc`. Coincident neighbors contribute nothing.
pub(crate) fn add_length_pulls(acc: &mut [f64], coords: &[f64], dim: usize, lambda: f64) {
    let m = coords.len() / dim;
    for s in 0..m.saturating_sub(1) {
        let a = &coords[s * dim..(s + 1) * dim];
        let b = &coords[(s + 1) * dim..(s + 2) * dim];
        let d = sub(b, a);
        let len = norm(&d);
        if len <= 0.0 {
            continue;
        }
        // v_s is pulled toward v_{s+1} and vice versa.
        axpy(&mut acc[s * dim..(s + 1) * dim], lambda / len, &d);
        axpy(&mut acc[(s + 1) * dim..(s + 2) * dim], -lambda / len, &d);
    }
}

/// Fidelity kernel: the pull of one unit of mass at offset `r = x - z` is
/// `p |r|^{p-2} r`. Returns the scalar `p |r|^{p-2}`, or `None` when `p = 1`
/// and `|r| <= eps` (no derivative there). For `1 < p < 2` the radius is
/// clamped at `eps`.
#[inline]
pub(crate) fn pull_kernel(r_norm: f64, p: f64, eps: f64) -> Option<f64> {
    if p == 2.0 {
        return Some(2.0);
    }
    if p == 1.0 {
        return (r_norm > eps).then(|| 1.0 / r_norm);
    }
    if p < 2.0 {
        return Some(p * libm::pow(r_norm.max(eps), p - 2.0));
    }
    Some(if r_norm > 0.0 { p * libm::pow(r_norm, p - 2.0) } else { 0.0 })
}

/// Gradient of the energy with respect to the stacked vertex coordinates,
/// with the plan held fixed. Off tie sets the energy is locally the
/// fixed-plan objective, so this is its true gradient.
pub fn gradient(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64, plan: &TransportPlan) -> Result<Vec<f64>> {
    validate_params(p, lambda)?;
    if mu.dim() != c.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), found: c.dim() });
    }
    let eps = PlanTolerances::for_measure(mu).eps_tie;
    let dim = c.dim();
    let mut pulls = alloc::vec![0.0; c.coords().len()];
    let mut z = alloc::vec![0.0; dim];
    for e in plan.entries() {
        target_point(c.coords(), dim, e.target, &mut z);
        let r = sub(mu.position(e.atom), &z);
        let rn = norm(&r);
        let Some(k) = pull_kernel(rn, p, eps) else {
            let vertex = match e.target {
                Target::Vertex(j) => j,
                Target::Segment { segment, t } => segment + usize::from(t > 0.5),
            };
            return Err(Error::NonSmooth { vertex, atom: e.atom });
        };
        fold_into(&mut pulls, dim, e.target, e.mass * k, &r);
    }
    add_length_pulls(&mut pulls, c.coords(), dim, lambda);
    pulls.iter_mut().for_each(|g| *g = -*g);
    Ok(pulls)
}

/// First-variation residual of one vertex.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VertexResidual {
    pub vertex: usize,
    pub status: VertexStatus,
    pub endpoint: bool,
    /// Sum of fidelity pulls plus `lambda` times the neighbor unit vectors.
    /// For a tied vertex with `p = 1` the tied atom is left out.
    pub residual: Vec<f64>,
    pub norm: f64,
    /// `m_k - |residual|` for a vertex tied to atom `k` when `p = 1`; the
    /// condition holds when it is non-negative.
    pub slack: Option<f64>,
}

/// Per-vertex stationarity residuals.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StationarityReport {
    pub p: f64,
    pub lambda: f64,
    pub vertices: Vec<VertexResidual>,
    /// Largest residual norm over vertices subject to the equality condition.
    pub max_residual: f64,
    /// Smallest slack over vertices subject to the inequality condition.
    pub min_slack: Option<f64>,
}

impl StationarityReport {
    /// Whether every equality residual is below `tol` and every slack above `-tol`.
    pub fn is_stationary(&self, tol: f64) -> bool {
        self.max_residual < tol && self.min_slack.is_none_or(|s| s > -tol)
    }
}

pub fn stationarity_report(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64) -> Result<StationarityReport> {
    stationarity_report_with(mu, c, p, lambda, PlanTolerances::for_measure(mu))
}

pub(crate) fn stationarity_report_with(
    mu: &DiscreteMeasure,
    c: &Polyline,
    p: f64,
    lambda: f64,
    tol: PlanTolerances,
) -> Result<StationarityReport> {
    validate_params(p, lambda)?;
    let (plan, class) = build_plan_with(mu, c, TieRule::FirstArcLength, tol)?;
    let dim = c.dim();
    let m = c.num_vertices();
    let mut pulls = alloc::vec![0.0; c.coords().len()];
    let mut z = alloc::vec![0.0; dim];
    for e in plan.entries() {
        if p == 1.0 {
            if let Target::Vertex(j) = e.target {
                if class.status[j] == (VertexStatus::Tied { atom: e.atom }) {
                    continue;
                }
            }
        }
        target_point(c.coords(), dim, e.target, &mut z);
        let r = sub(mu.position(e.atom), &z);
        // Atoms sitting on the curve exert no well-defined pull when p = 1.
        if let Some(k) = pull_kernel(norm(&r), p, tol.eps_tie) {
            fold_into(&mut pulls, dim, e.target, e.mass * k, &r);
        }
    }
    add_length_pulls(&mut pulls, c.coords(), dim, lambda);
    let mut vertices = Vec::with_capacity(m);
    let mut max_residual = 0.0f64;
    let mut min_slack: Option<f64> = None;
    for j in 0..m {
        let residual = pulls[j * dim..(j + 1) * dim].to_vec();
        let n = norm(&residual);
        let status = class.status[j];
        let slack = match status {
            VertexStatus::Tied { atom } if p == 1.0 => Some(mu.mass(atom) - n),
            _ => None,
        };
        match slack {
            Some(s) => min_slack = Some(min_slack.map_or(s, |q| q.min(s))),
            None => max_residual = max_residual.max(n),
        }
        vertices.push(VertexResidual { vertex: j, status, endpoint: j == 0 || j + 1 == m, residual, norm: n, slack });
    }
    Ok(StationarityReport { p, lambda, vertices, max_residual, min_slack })
}
