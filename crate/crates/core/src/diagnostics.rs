//! Necessary conditions for minimality, evaluated on any curve.
//!
//! A failed check on a fitted curve is evidence that the fit is not a global
//! minimizer, not an error: the optimizer is local.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::curve::{Polyline, VertexWindow};
use crate::energy::validate_params;
use crate::geom::{cross2, norm};
use crate::hull::ConvexPolygon;
use crate::measure::DiscreteMeasure;
use crate::optimizer::{best_singleton, point_energy};
use crate::projection::{build_plan_with, PlanTolerances, Target, TieRule, TransportPlan};
use crate::{Error, Result};

/// Check names as they appear in reports.
pub mod names {
    pub const LENGTH_BOUND: &str = "length_bound";
    pub const HULL_CONTAINMENT: &str = "hull_containment";
    pub const TV_GLOBAL: &str = "tv_global";
    pub const TV_LOCAL: &str = "tv_local";
    pub const TURN_DIRECTION: &str = "turn_direction";
    pub const INJECTIVITY: &str = "injectivity";
}

/// Windows whose open tangent variation reaches this are outside the scope of the
/// one-sided turning bound.
pub const TURN_WINDOW_MAX_TV: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// One inequality `observed <= bound + tolerance`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Check {
    pub name: String,
    pub bound: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub status: CheckStatus,
    pub detail: String,
}

impl Check {
    fn compare(name: &str, observed: f64, bound: f64, tolerance: f64, detail: String) -> Self {
        let status = if observed <= bound + tolerance { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name: name.into(), bound, observed, tolerance, status, detail }
    }

    fn skipped(name: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            bound: f64::NAN,
            observed: f64::NAN,
            tolerance: 0.0,
            status: CheckStatus::Skipped,
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TheoryReport {
    pub checks: Vec<Check>,
    /// No check failed; skipped checks do not count against it.
    pub pass: bool,
}

impl TheoryReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }
}

fn rel_tol(bound: f64) -> f64 {
    1e-9 * (1.0 + bound.abs())
}

/// Slack for angle comparisons. A vertex is accepted as stationary once its
/// residual, `lambda` times the tangent jump when no mass pulls on it, drops
/// below `1e-6 lambda`, so fitted curves carry turning of that order.
pub const ANGLE_TOL: f64 = 1e-6;

fn angle_tol(bound: f64) -> f64 {
    ANGLE_TOL + rel_tol(bound)
}

fn check_dims(mu: &DiscreteMeasure, c: &Polyline) -> Result<()> {
    if mu.dim() != c.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), found: c.dim() });
    }
    Ok(())
}

/// `lambda L(c)` against the energy of the best single point, which bounds
/// the energy of any minimizer.
pub fn check_length_bound(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64) -> Result<Check> {
    validate_params(p, lambda)?;
    check_dims(mu, c)?;
    let z = best_singleton(mu, p);
    let bound = point_energy(mu, &z, p);
    let observed = lambda * c.length();
    let raw = libm::pow(mu.diameter(), p) * mu.total_mass();
    Ok(Check::compare(
        names::LENGTH_BOUND,
        observed,
        bound,
        rel_tol(bound),
        format!("best single point energy {bound:.6e}; diam^p * mass = {raw:.6e}"),
    ))
}

/// Every vertex, and hence the curve, lies in the convex hull of the support.
pub fn check_hull_containment(mu: &DiscreteMeasure, c: &Polyline) -> Result<Check> {
    check_dims(mu, c)?;
    if mu.dim() != 2 {
        return Ok(Check::skipped(names::HULL_CONTAINMENT, format!("needs d = 2, got {}", mu.dim())));
    }
    let hull = ConvexPolygon::of_measure(mu)?;
    let tol = 1e-6 * mu.diameter();
    let (worst, d) =
        c.vertices()
            .map(|v| hull.distance(v))
            .enumerate()
            .fold((0, 0.0f64), |acc, (j, d)| if d > acc.1 { (j, d) } else { acc });
    let detail = if d > tol {
        format!("vertex {worst} at {:?} is {d:.6e} outside the hull", c.vertex(worst))
    } else {
        String::from("all vertices inside the hull")
    };
    Ok(Check::compare(names::HULL_CONTAINMENT, d, 0.0, tol, detail))
}

/// Nearest-point projection of a planar curve onto a convex polygon.
///
/// Each segment is first cut wherever it crosses a boundary edge or one of
/// the normal rays at the polygon corners. On every piece the projection is
/// affine, so projecting the cut points gives the exact image curve.
pub fn convex_clip(c: &Polyline, hull: &ConvexPolygon) -> Result<Polyline> {
    if c.dim() != 2 {
        return Err(Error::UnsupportedDimension { required: 2, found: c.dim() });
    }
    if hull.vertices().is_empty() {
        return Err(Error::Domain("empty polygon".into()));
    }
    let mut lines: Vec<([f64; 2], [f64; 2], bool)> = Vec::new();
    for (a, b) in hull.edges() {
        lines.push((a, b, false));
        let e = [b[0] - a[0], b[1] - a[1]];
        let n = [e[1], -e[0]];
        lines.push((a, [a[0] + n[0], a[1] + n[1]], true));
        lines.push((b, [b[0] + n[0], b[1] + n[1]], true));
    }
    let mut out: Vec<f64> = Vec::new();
    let push = |out: &mut Vec<f64>, q: [f64; 2]| out.extend_from_slice(&q);
    push(&mut out, hull.nearest(c.vertex(0)));
    for s in 0..c.num_segments() {
        let (a, b) = (c.vertex(s), c.vertex(s + 1));
        let mut ts: Vec<f64> = lines
            .iter()
            .filter_map(|&(u, w, ray)| crossing(a, b, &u, &w, ray))
            .filter(|t| *t > 0.0 && *t < 1.0)
            .collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        for t in ts {
            let q = crate::geom::lerp(a, b, t);
            push(&mut out, hull.nearest(&q));
        }
        push(&mut out, hull.nearest(b));
    }
    Polyline::from_vertices_merged(2, out)
}

/// Parameter `t` where `a + t (b - a)` meets the segment `u w`, or the ray
/// from `u` through `w` when `ray` is set.
fn crossing(a: &[f64], b: &[f64], u: &[f64; 2], w: &[f64; 2], ray: bool) -> Option<f64> {
    let r = [b[0] - a[0], b[1] - a[1]];
    let q = [w[0] - u[0], w[1] - u[1]];
    let den = cross2(&r, &q);
    if den == 0.0 {
        return None;
    }
    let au = [u[0] - a[0], u[1] - a[1]];
    let t = cross2(&au, &q) / den;
    let s = cross2(&au, &r) / den;
    let ok = if ray { s >= 0.0 } else { (0.0..=1.0).contains(&s) };
    ok.then_some(t)
}

fn tv_bound_factor(mu: &DiscreteMeasure, p: f64, lambda: f64) -> f64 {
    (p / lambda) * libm::pow(mu.diameter(), p - 1.0)
}

/// Tangent variation against `(p / lambda) diam^(p-1) mu(R^d)`; the detail
/// also gives the sum of turning angles.
pub fn check_tv_bound(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64) -> Result<Check> {
    validate_params(p, lambda)?;
    check_dims(mu, c)?;
    let bound = tv_bound_factor(mu, p, lambda) * mu.total_mass();
    let observed = c.tangent_variation(None)?;
    let turning = c.tv_gamma_prime(None)?;
    Ok(Check::compare(
        names::TV_GLOBAL,
        observed,
        bound,
        angle_tol(bound),
        format!("tangent variation {observed:.6e}, total turning {turning:.6e} rad"),
    ))
}

/// Tangent variation inside every vertex window against `(p / lambda) diam^(p-1)`
/// times the mass projected onto the open window; reports the worst window.
pub fn check_local_tv(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64, plan: &TransportPlan) -> Result<Check> {
    validate_params(p, lambda)?;
    check_dims(mu, c)?;
    if plan.num_vertices() != c.num_vertices() {
        return Err(Error::Domain("plan was built for a different curve".into()));
    }
    let m = c.num_vertices();
    let k = tv_bound_factor(mu, p, lambda);
    let jumps = c.tangent_jumps();
    let pieces = plan.piece_masses();
    let mut worst: Option<(f64, f64, VertexWindow)> = None;
    let mut windows = 0usize;
    for a in 0..m {
        let mut tv = 0.0;
        // Mass on the open span (2a + 1 .. 2b).
        let mut mass = 0.0;
        for b in a + 1..m {
            mass += pieces[2 * b - 1];
            if b >= a + 2 {
                tv += jumps[b - 2];
                mass += pieces[2 * b - 2];
            }
            if b < a + 2 {
                continue;
            }
            windows += 1;
            let bound = k * mass;
            let excess = tv - bound - angle_tol(bound);
            if worst.is_none_or(|(e, _, _)| excess > e) {
                worst = Some((excess, bound, VertexWindow::new(a, b)));
            }
        }
    }
    let Some((_, bound, w)) = worst else {
        return Ok(Check::compare(names::TV_LOCAL, 0.0, 0.0, 0.0, "no interior vertices".into()));
    };
    let observed = c.tangent_variation(Some(w))?;
    Ok(Check::compare(
        names::TV_LOCAL,
        observed,
        bound,
        angle_tol(bound),
        format!("worst of {windows} windows: vertices {}..={}", w.start, w.end),
    ))
}

/// Side of the curve an entry's atom lies on.
#[derive(Debug, Clone, Copy)]
struct Sided {
    piece: usize,
    mass: f64,
    distance: f64,
    below: bool,
    above: bool,
}

fn classify(mu: &DiscreteMeasure, c: &Polyline, plan: &TransportPlan, eps: f64) -> Vec<Sided> {
    let m = c.num_vertices();
    plan.entries()
        .iter()
        .map(|e| {
            let tangent: Vec<f64> = match e.target {
                Target::Segment { segment, .. } => c.tangent(segment),
                Target::Vertex(j) => {
                    let mut t = alloc::vec![0.0; 2];
                    if j > 0 {
                        crate::geom::axpy(&mut t, 1.0, &c.tangent(j - 1));
                    }
                    if j + 1 < m {
                        crate::geom::axpy(&mut t, 1.0, &c.tangent(j));
                    }
                    t
                }
            };
            let z = e.target.point(c);
            let off = crate::geom::sub(mu.position(e.atom), &z);
            let tn = norm(&tangent);
            let cr = if tn > 0.0 { cross2(&tangent, &off) / tn } else { 0.0 };
            let ambiguous = e.distance <= eps || cr.abs() <= eps;
            Sided {
                piece: e.target.piece(),
                mass: e.mass,
                distance: e.distance,
                below: ambiguous || cr < 0.0,
                above: ambiguous || cr > 0.0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct SideTotals {
    below_mass: f64,
    below_d: f64,
    above_mass: f64,
    above_d: f64,
}

fn piece_sides(sided: &[Sided], pieces: usize) -> Vec<SideTotals> {
    let mut out = alloc::vec![SideTotals::default(); pieces];
    for s in sided {
        let t = &mut out[s.piece];
        if s.below {
            t.below_mass += s.mass;
            t.below_d = t.below_d.max(s.distance);
        }
        if s.above {
            t.above_mass += s.mass;
            t.above_d = t.above_d.max(s.distance);
        }
    }
    out
}

/// Frame of a window: `e_2` is the left normal of the first segment.
fn window_normal(c: &Polyline, a: usize) -> [f64; 2] {
    let t = c.tangent(a);
    [-t[1], t[0]]
}

struct TurnEval {
    up: f64,
    up_bound: f64,
    down: f64,
    down_bound: f64,
}

fn turn_bound(p: f64, lambda: f64, d: f64, mass: f64) -> f64 {
    if mass == 0.0 {
        0.0
    } else {
        (p / lambda) * libm::pow(d, p - 1.0) * mass
    }
}

fn turn_tol(bound: f64) -> f64 {
    angle_tol(bound)
}

fn margin(e: &TurnEval) -> f64 {
    (e.up - e.up_bound - turn_tol(e.up_bound)).max(e.down - e.down_bound - turn_tol(e.down_bound))
}

fn turn_check(e: &TurnEval, w: VertexWindow, extra: &str) -> Check {
    // Report the worse of the two one-sided inequalities.
    let up = e.up - e.up_bound - turn_tol(e.up_bound);
    let down = e.down - e.down_bound - turn_tol(e.down_bound);
    let (side, obs, bound) = if up >= down { ("left", e.up, e.up_bound) } else { ("right", e.down, e.down_bound) };
    Check::compare(
        names::TURN_DIRECTION,
        obs,
        bound,
        turn_tol(bound),
        format!("{extra}vertices {}..={}, {side} turning", w.start, w.end),
    )
}

fn require_turn_inputs(
    mu: &DiscreteMeasure,
    c: &Polyline,
    p: f64,
    lambda: f64,
    plan: &TransportPlan,
) -> Result<Option<Check>> {
    validate_params(p, lambda)?;
    check_dims(mu, c)?;
    if plan.num_vertices() != c.num_vertices() {
        return Err(Error::Domain("plan was built for a different curve".into()));
    }
    if mu.dim() != 2 {
        return Ok(Some(Check::skipped(names::TURN_DIRECTION, format!("needs d = 2, got {}", mu.dim()))));
    }
    Ok(None)
}

/// One-sided turning on one window `v_a ..= v_b`: in the frame where the
/// window starts along `e_1`, the largest `e_2` component of the tangent is
/// bounded by `(p / lambda) D^(p-1)` times the mass talking to the window
/// from below, `D` being the largest distance of those atoms; symmetrically
/// for downward turning with the mass above. Atoms whose side is ambiguous
/// count on both sides. Requires open tangent variation below one half and `b` short
/// of the last vertex; otherwise the check is skipped.
pub fn check_turn_direction(
    mu: &DiscreteMeasure,
    c: &Polyline,
    p: f64,
    lambda: f64,
    plan: &TransportPlan,
    window: VertexWindow,
) -> Result<Check> {
    if let Some(s) = require_turn_inputs(mu, c, p, lambda, plan)? {
        return Ok(s);
    }
    c.check_window(window)?;
    let m = c.num_vertices();
    let (a, b) = (window.start, window.end);
    if b <= a || b + 1 >= m {
        return Ok(Check::skipped(names::TURN_DIRECTION, format!("window {a}..={b} must end before the last vertex")));
    }
    let tv = c.tangent_variation(Some(window))?;
    if tv >= TURN_WINDOW_MAX_TV {
        return Ok(Check::skipped(names::TURN_DIRECTION, format!("window tangent variation {tv:.6} is not below 1/2")));
    }
    let eps = PlanTolerances::for_measure(mu).eps_tie;
    let sides = piece_sides(&classify(mu, c, plan, eps), 2 * m - 1);
    let e2 = window_normal(c, a);
    let mut acc = SideTotals::default();
    let (mut up, mut down) = (0.0f64, 0.0f64);
    for s in a..b {
        let t = c.tangent(s);
        let y = t[0] * e2[0] + t[1] * e2[1];
        up = up.max(y);
        down = down.max(-y);
    }
    for piece in window.open_span().start..window.open_span().end {
        let t = sides[piece];
        acc.below_mass += t.below_mass;
        acc.below_d = acc.below_d.max(t.below_d);
        acc.above_mass += t.above_mass;
        acc.above_d = acc.above_d.max(t.above_d);
    }
    let eval = TurnEval {
        up,
        up_bound: turn_bound(p, lambda, acc.below_d, acc.below_mass),
        down,
        down_bound: turn_bound(p, lambda, acc.above_d, acc.above_mass),
    };
    Ok(turn_check(&eval, window, ""))
}

/// [`check_turn_direction`] over every eligible window; reports the worst.
pub fn check_turn_direction_all(
    mu: &DiscreteMeasure,
    c: &Polyline,
    p: f64,
    lambda: f64,
    plan: &TransportPlan,
) -> Result<Check> {
    if let Some(s) = require_turn_inputs(mu, c, p, lambda, plan)? {
        return Ok(s);
    }
    let m = c.num_vertices();
    let eps = PlanTolerances::for_measure(mu).eps_tie;
    let sides = piece_sides(&classify(mu, c, plan, eps), 2 * m - 1);
    let jumps = c.tangent_jumps();
    let tangents: Vec<Vec<f64>> = (0..c.num_segments()).map(|s| c.tangent(s)).collect();
    let mut worst: Option<(f64, TurnEval, VertexWindow)> = None;
    let mut windows = 0usize;
    for a in 0..m.saturating_sub(2) {
        let e2 = window_normal(c, a);
        let mut acc = SideTotals::default();
        let (mut up, mut down) = (0.0f64, 0.0f64);
        let mut tv = 0.0;
        for b in a + 1..m - 1 {
            if b >= a + 2 {
                tv += jumps[b - 2];
                if tv >= TURN_WINDOW_MAX_TV {
                    break;
                }
            }
            let t = &tangents[b - 1];
            let y = t[0] * e2[0] + t[1] * e2[1];
            up = up.max(y);
            down = down.max(-y);
            // The open span grows by the pieces 2b - 1 and, once b >= a + 2, 2b - 2.
            let new_pieces = if b >= a + 2 { 2 * b - 2..2 * b } else { 2 * b - 1..2 * b };
            for piece in new_pieces {
                let t = sides[piece];
                acc.below_mass += t.below_mass;
                acc.below_d = acc.below_d.max(t.below_d);
                acc.above_mass += t.above_mass;
                acc.above_d = acc.above_d.max(t.above_d);
            }
            windows += 1;
            let eval = TurnEval {
                up,
                up_bound: turn_bound(p, lambda, acc.below_d, acc.below_mass),
                down,
                down_bound: turn_bound(p, lambda, acc.above_d, acc.above_mass),
            };
            let mg = margin(&eval);
            if worst.as_ref().is_none_or(|(w, _, _)| mg > *w) {
                worst = Some((mg, eval, VertexWindow::new(a, b)));
            }
        }
    }
    match worst {
        None => Ok(Check::compare(names::TURN_DIRECTION, 0.0, 0.0, 0.0, "no eligible windows".into())),
        Some((_, eval, w)) => Ok(turn_check(&eval, w, &format!("worst of {windows} windows: "))),
    }
}

/// A planar curve without double points; at each one found, reports whether
/// the two tangents are parallel or antiparallel.
pub fn check_injectivity(c: &Polyline, mu: &DiscreteMeasure) -> Result<Check> {
    check_dims(mu, c)?;
    if c.dim() != 2 {
        return Ok(Check::skipped(names::INJECTIVITY, format!("needs d = 2, got {}", c.dim())));
    }
    let scale = if mu.diameter() > 0.0 { mu.diameter() } else { 1.0 };
    let hits = c.self_intersections_2d(1e-9 * scale)?;
    let mut detail = String::new();
    for h in &hits {
        let (t1, t2) = (c.tangent(h.segments.0), c.tangent(h.segments.1));
        let angle = libm::atan2(cross2(&t1, &t2).abs(), t1[0] * t2[0] + t1[1] * t2[1]);
        let parallel = angle < 1e-6 || core::f64::consts::PI - angle < 1e-6;
        if !detail.is_empty() {
            detail.push_str("; ");
        }
        detail.push_str(&format!(
            "segments {} and {} meet at ({:.6}, {:.6}) ({:?}), tangent angle {:.6} rad{}",
            h.segments.0,
            h.segments.1,
            h.point[0],
            h.point[1],
            h.kind,
            angle,
            if parallel { ", (anti)parallel" } else { ", transversal" }
        ));
    }
    if hits.is_empty() {
        detail.push_str("no double points");
    }
    Ok(Check::compare(names::INJECTIVITY, hits.len() as f64, 0.0, 0.0, detail))
}

/// Runs every check with default tolerances.
pub fn full_report(mu: &DiscreteMeasure, c: &Polyline, p: f64, lambda: f64) -> Result<TheoryReport> {
    full_report_with(mu, c, p, lambda, PlanTolerances::for_measure(mu))
}

pub(crate) fn full_report_with(
    mu: &DiscreteMeasure,
    c: &Polyline,
    p: f64,
    lambda: f64,
    tol: PlanTolerances,
) -> Result<TheoryReport> {
    validate_params(p, lambda)?;
    check_dims(mu, c)?;
    let (plan, _) = build_plan_with(mu, c, TieRule::FirstArcLength, tol)?;
    let checks = alloc::vec![
        check_length_bound(mu, c, p, lambda)?,
        check_hull_containment(mu, c)?,
        check_tv_bound(mu, c, p, lambda)?,
        check_local_tv(mu, c, p, lambda, &plan)?,
        check_turn_direction_all(mu, c, p, lambda, &plan)?,
        check_injectivity(c, mu)?,
    ];
    let pass = checks.iter().all(|c| c.status != CheckStatus::Fail);
    Ok(TheoryReport { checks, pass })
}
