//! Nearest-point projection onto a polyline and the induced transport plan.
//!
//! Each atom sends its mass to its nearest point(s) on the curve. The entries
//! of the plan are the couplings `T_ij`; their pushforward onto the curve is
//! the projected measure `sigma`, and the atoms whose nearest point is a vertex
//! form that vertex's talking set.

use alloc::vec::Vec;

use crate::curve::{CurveSpan, Polyline};
use crate::geom::{dist, dist2, dist2_at, segment_param};
use crate::measure::DiscreteMeasure;
use crate::{Error, Result};

/// Where an atom's mass lands on the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Target {
    Vertex(usize),
    /// Relative interior of segment `segment`, at barycentric position `t in (0, 1)`.
    Segment {
        segment: usize,
        t: f64,
    },
}

impl Target {
    /// Piece index in the sense of [`CurveSpan`].
    pub fn piece(&self) -> usize {
        match *self {
            Target::Vertex(j) => 2 * j,
            Target::Segment { segment, .. } => 2 * segment + 1,
        }
    }

    pub fn arc_length(&self, c: &Polyline) -> f64 {
        match *self {
            Target::Vertex(j) => c.cumulative()[j],
            Target::Segment { segment, t } => c.cumulative()[segment] + t * c.segment_length(segment),
        }
    }

    pub fn point(&self, c: &Polyline) -> Vec<f64> {
        match *self {
            Target::Vertex(j) => c.vertex(j).to_vec(),
            Target::Segment { segment, t } => crate::geom::lerp(c.vertex(segment), c.vertex(segment + 1), t),
        }
    }
}

/// Distance from a point to a curve and every nearest target.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub distance: f64,
    /// Ordered by arc length.
    pub targets: Vec<Target>,
}

/// `d(x, c)` without collecting targets.
pub fn nearest_distance(x: &[f64], c: &Polyline) -> f64 {
    if c.num_vertices() == 1 {
        return dist(x, c.vertex(0));
    }
    let mut best = f64::INFINITY;
    for s in 0..c.num_segments() {
        let (a, b) = (c.vertex(s), c.vertex(s + 1));
        let t = segment_param(x, a, b);
        best = best.min(dist2_at(x, a, b, t));
    }
    libm::sqrt(best)
}

/// Nearest-point projection of `x` onto `c`. Every target within `tol` of the
/// minimum distance is listed; targets within `tol` of a vertex snap to it.
pub fn project_point(x: &[f64], c: &Polyline, tol: f64) -> Result<Projection> {
    if x.len() != c.dim() {
        return Err(Error::DimensionMismatch { expected: c.dim(), found: x.len() });
    }
    if c.num_vertices() == 1 {
        return Ok(Projection { distance: dist(x, c.vertex(0)), targets: alloc::vec![Target::Vertex(0)] });
    }
    let nseg = c.num_segments();
    let mut cand: Vec<(usize, f64, f64)> = Vec::with_capacity(nseg);
    let mut best = f64::INFINITY;
    for s in 0..nseg {
        let (a, b) = (c.vertex(s), c.vertex(s + 1));
        let t = segment_param(x, a, b);
        let d = libm::sqrt(dist2_at(x, a, b, t));
        best = best.min(d);
        cand.push((s, t, d));
    }
    let mut targets: Vec<Target> = Vec::new();
    for &(s, t, d) in &cand {
        if d > best + tol {
            continue;
        }
        let len = c.segment_length(s);
        let target = if t * len <= tol {
            Target::Vertex(s)
        } else if (1.0 - t) * len <= tol {
            Target::Vertex(s + 1)
        } else {
            Target::Segment { segment: s, t }
        };
        if targets.last() != Some(&target) {
            targets.push(target);
        }
    }
    // Segment order is arc-length order, except that ties of a vertex with
    // itself can arrive from both adjacent segments.
    targets.dedup();
    Ok(Projection { distance: best, targets })
}

/// Selection among equally near targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TieRule {
    /// All mass to the target with the smallest arc length.
    #[default]
    FirstArcLength,
    /// Mass split evenly among all nearest targets.
    SplitEvenly,
}

/// Tolerances for plan construction, in length units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanTolerances {
    /// An atom this close to a vertex ties it down.
    pub eps_tie: f64,
    /// Targets this close to the minimum distance count as nearest.
    pub eps_proj: f64,
}

impl PlanTolerances {
    /// `eps_tie = 1e-9 diam`, `eps_proj = 1e-12 diam`, with `diam` floored at 1
    /// for single-atom measures.
    pub fn for_measure(mu: &DiscreteMeasure) -> Self {
        Self::for_scale(mu.diameter())
    }

    pub fn for_scale(diam: f64) -> Self {
        let scale = if diam > 0.0 { diam } else { 1.0 };
        Self { eps_tie: 1e-9 * scale, eps_proj: 1e-12 * scale }
    }
}

/// One coupling `T_ij > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlanEntry {
    pub atom: usize,
    pub target: Target,
    pub mass: f64,
    /// `d(x_atom, c)`.
    pub distance: f64,
}

/// Sparse atom-to-curve coupling whose first marginal is `mu`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransportPlan {
    num_vertices: usize,
    /// Grouped by atom, atoms in increasing order.
    entries: Vec<PlanEntry>,
    /// `entries[offsets[i]..offsets[i + 1]]` belong to atom `i`.
    offsets: Vec<usize>,
}

impl TransportPlan {
    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn num_atoms(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn atom_entries(&self, i: usize) -> &[PlanEntry] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `d(x_i, c)` for each atom.
    pub fn distances(&self) -> Vec<f64> {
        (0..self.num_atoms()).map(|i| self.atom_entries(i)[0].distance).collect()
    }

    /// Total mass carried by the plan, summed in entry order.
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.mass).sum()
    }

    /// `sigma(span)`: mass of the entries whose target lies in `span`.
    pub fn sigma_mass(&self, span: CurveSpan) -> Result<f64> {
        let pieces = 2 * self.num_vertices - 1;
        if span.start > span.end || span.end > pieces {
            return Err(Error::Domain(alloc::format!(
                "invalid span {}..{} for a curve with {} pieces",
                span.start,
                span.end,
                pieces
            )));
        }
        Ok(self.entries.iter().filter(|e| span.contains(e.target.piece())).map(|e| e.mass).sum())
    }

    /// Projected mass per piece, indexed like [`CurveSpan`].
    pub fn piece_masses(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; 2 * self.num_vertices - 1];
        for e in &self.entries {
            out[e.target.piece()] += e.mass;
        }
        out
    }
}

/// Whether a vertex sits on an atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum VertexStatus {
    Free,
    Tied { atom: usize },
}

/// Free/tied status and talking set of every vertex.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VertexClassification {
    pub status: Vec<VertexStatus>,
    /// Atoms having the vertex among their nearest points, increasing.
    pub talking: Vec<Vec<usize>>,
}

/// Projects every atom with the default tolerances for `mu`.
pub fn build_plan(
    mu: &DiscreteMeasure,
    c: &Polyline,
    tie_rule: TieRule,
) -> Result<(TransportPlan, VertexClassification)> {
    build_plan_with(mu, c, tie_rule, PlanTolerances::for_measure(mu))
}

/// Projects every atom onto `c`, splits its mass per `tie_rule`, and
/// classifies vertices. An atom within `eps_tie` of a vertex sends all of its
/// mass to that vertex.
pub fn build_plan_with(
    mu: &DiscreteMeasure,
    c: &Polyline,
    tie_rule: TieRule,
    tol: PlanTolerances,
) -> Result<(TransportPlan, VertexClassification)> {
    if mu.dim() != c.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), found: c.dim() });
    }
    let m = c.num_vertices();
    let mut entries = Vec::with_capacity(mu.len());
    let mut offsets = Vec::with_capacity(mu.len() + 1);
    let mut status = alloc::vec![VertexStatus::Free; m];
    let mut tie_dist = alloc::vec![f64::INFINITY; m];
    let mut talking: Vec<Vec<usize>> = alloc::vec![Vec::new(); m];
    offsets.push(0);
    for (i, (x, mass)) in mu.atoms().enumerate() {
        let proj = project_point(x, c, tol.eps_proj)?;
        let tied = nearest_vertex(x, c).filter(|&(_, d)| d <= tol.eps_tie);
        for t in &proj.targets {
            if let Target::Vertex(j) = *t {
                talking[j].push(i);
            }
        }
        if let Some((j, d)) = tied {
            if talking[j].last() != Some(&i) {
                talking[j].push(i);
            }
            if d < tie_dist[j] {
                tie_dist[j] = d;
                status[j] = VertexStatus::Tied { atom: i };
            }
            entries.push(PlanEntry { atom: i, target: Target::Vertex(j), mass, distance: proj.distance });
        } else {
            match tie_rule {
                TieRule::FirstArcLength => {
                    entries.push(PlanEntry { atom: i, target: proj.targets[0], mass, distance: proj.distance })
                }
                TieRule::SplitEvenly => {
                    let k = proj.targets.len();
                    let share = mass / k as f64;
                    let mut given = 0.0;
                    for (q, t) in proj.targets.iter().enumerate() {
                        let w = if q + 1 == k { mass - given } else { share };
                        given += w;
                        entries.push(PlanEntry { atom: i, target: *t, mass: w, distance: proj.distance });
                    }
                }
            }
        }
        offsets.push(entries.len());
    }
    for t in talking.iter_mut() {
        t.sort_unstable();
        t.dedup();
    }
    Ok((TransportPlan { num_vertices: m, entries, offsets }, VertexClassification { status, talking }))
}

fn nearest_vertex(x: &[f64], c: &Polyline) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in c.vertices().enumerate() {
        let d2 = dist2(x, v);
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((j, d2));
        }
    }
    best.map(|(j, d2)| (j, libm::sqrt(d2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl(points: &[[f64; 2]]) -> Polyline {
        Polyline::from_points(&points.iter().map(|p| &p[..]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn project_point_cases() {
        let c = pl(&[[0.0, 0.0], [1.0, 0.0]]);
        let p = project_point(&[0.5, 1.0], &c, 1e-12).unwrap();
        assert_eq!(p.distance, 1.0);
        assert_eq!(p.targets, [Target::Segment { segment: 0, t: 0.5 }]);

        let p = project_point(&[2.0, 0.0], &c, 1e-12).unwrap();
        assert_eq!(p.distance, 1.0);
        assert_eq!(p.targets, [Target::Vertex(1)]);

        let corner = pl(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        let p = project_point(&[0.5, 0.5], &corner, 1e-12).unwrap();
        assert_eq!(p.distance, 0.5);
        assert_eq!(p.targets, [Target::Segment { segment: 0, t: 0.5 }, Target::Segment { segment: 1, t: 0.5 }]);
    }

    #[test]
    fn symmetric_atoms_share_foot_distance() {
        let mu = DiscreteMeasure::uniform(2, &[&[0.5, 1.0], &[0.5, -1.0]]).unwrap();
        let c = pl(&[[0.0, 0.0], [1.0, 0.0]]);
        let (plan, _) = build_plan(&mu, &c, TieRule::FirstArcLength).unwrap();
        let e = plan.entries();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].target, Target::Segment { segment: 0, t: 0.5 });
        assert_eq!(e[1].target, Target::Segment { segment: 0, t: 0.5 });
        assert_eq!(e[0].distance, e[1].distance);
    }

    #[test]
    fn atom_on_vertex_ties_it() {
        let mu = DiscreteMeasure::uniform(2, &[&[1.0, 0.0], &[0.5, 2.0]]).unwrap();
        let c = pl(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        let (plan, class) = build_plan(&mu, &c, TieRule::FirstArcLength).unwrap();
        assert_eq!(class.status[1], VertexStatus::Tied { atom: 0 });
        assert_eq!(class.status[0], VertexStatus::Free);
        assert!(class.talking[1].contains(&0));
        assert_eq!(plan.atom_entries(0)[0].distance, 0.0);
        assert_eq!(plan.atom_entries(0)[0].mass, 0.5);
    }

    #[test]
    fn tie_rules() {
        // (1, -1) is equally far from both endpoints and nearer to nothing else.
        let c = pl(&[[0.0, 0.0], [1.0, 2.0], [2.0, 0.0]]);
        let x = [1.0, -1.0];
        let mu = DiscreteMeasure::uniform(2, &[&x]).unwrap();
        let (plan, class) = build_plan(&mu, &c, TieRule::FirstArcLength).unwrap();
        assert_eq!(plan.entries().len(), 1);
        assert_eq!(plan.entries()[0].target, Target::Vertex(0));
        assert_eq!(plan.entries()[0].mass, 1.0);
        assert_eq!(class.talking[0], [0]);
        assert_eq!(class.talking[2], [0]);

        let (plan, _) = build_plan(&mu, &c, TieRule::SplitEvenly).unwrap();
        assert_eq!(plan.entries().len(), 2);
        assert_eq!(plan.entries()[1].target, Target::Vertex(2));
        assert_eq!(plan.total_mass(), 1.0);
    }

    #[test]
    fn sigma_mass_cases() {
        let mu = DiscreteMeasure::weighted(2, &[&[-1.0, 0.0], &[3.0, 0.5]], &[0.3, 0.7]).unwrap();
        let c = pl(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
        let (plan, _) = build_plan(&mu, &c, TieRule::FirstArcLength).unwrap();
        let full = plan.sigma_mass(CurveSpan::full(4)).unwrap();
        assert_eq!(full, mu.total_mass());
        assert_eq!(plan.sigma_mass(CurveSpan::empty()).unwrap(), 0.0);
        use crate::curve::VertexWindow;
        assert_eq!(plan.sigma_mass(VertexWindow::new(0, 1).closed_span()).unwrap(), 0.3);
        assert_eq!(plan.sigma_mass(VertexWindow::new(2, 3).closed_span()).unwrap(), 0.7);
        assert!(plan.sigma_mass(CurveSpan { start: 0, end: 9 }).is_err());
    }
}
