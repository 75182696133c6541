//! Polylines with arc-length parameterization.

use alloc::vec::Vec;

use crate::geom::{dist, dist2, dot, norm, orient2d, segment_segment_closest, sub};
use crate::{Error, Result};

/// An ordered vertex list `v_0 .. v_{m-1}`, `m >= 1`, traversed at unit speed.
///
/// Consecutive vertices are always distinct, so every segment has positive
/// length and the unit tangent is defined on each segment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "CurveJson", into = "CurveJson"))]
pub struct Polyline {
    dim: usize,
    coords: Vec<f64>,
    cum: Vec<f64>,
}

/// Closed range of vertex indices `start ..= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VertexWindow {
    pub start: usize,
    pub end: usize,
}

impl VertexWindow {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    /// The open arc strictly between `v_start` and `v_end`.
    pub fn open_span(self) -> CurveSpan {
        CurveSpan { start: 2 * self.start + 1, end: 2 * self.end }
    }

    /// The closed arc from `v_start` to `v_end`, endpoints included.
    pub fn closed_span(self) -> CurveSpan {
        CurveSpan { start: 2 * self.start, end: 2 * self.end + 1 }
    }
}

/// Half-open range over the pieces of a curve.
///
/// A curve with `m` vertices has `2m - 1` pieces: piece `2j` is the vertex
/// `v_j` and piece `2j + 1` is the relative interior of segment `j`. Spans
/// therefore partition the curve without double counting shared vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CurveSpan {
    pub start: usize,
    pub end: usize,
}

impl CurveSpan {
    pub fn full(num_vertices: usize) -> Self {
        Self { start: 0, end: 2 * num_vertices - 1 }
    }

    pub fn empty() -> Self {
        Self { start: 0, end: 0 }
    }

    pub fn contains(&self, piece: usize) -> bool {
        (self.start..self.end).contains(&piece)
    }
}

/// How two non-adjacent pieces of a planar curve meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum IntersectionKind {
    /// Transversal crossing in the relative interiors of both segments.
    Crossing,
    /// Touching, overlap, or approach within tolerance.
    Contact,
}

/// A double point of a planar polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelfIntersection {
    /// Segment indices, `first < second`.
    pub segments: (usize, usize),
    pub point: [f64; 2],
    pub kind: IntersectionKind,
}

impl Polyline {
    /// Builds a polyline from flat vertex coordinates. Consecutive duplicate
    /// vertices are rejected; see [`Polyline::from_vertices_merged`].
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::Domain("polyline needs at least one vertex".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite vertex coordinate".into()));
        }
        let mut cum = Vec::with_capacity(coords.len() / dim);
        cum.push(0.0);
        let mut acc = 0.0;
        for (j, w) in coords.windows(2 * dim).step_by(dim).enumerate() {
            let len = dist(&w[..dim], &w[dim..]);
            if len <= 0.0 {
                return Err(Error::Domain(alloc::format!("zero-length segment between vertices {j} and {}", j + 1)));
            }
            acc += len;
            cum.push(acc);
        }
        Ok(Self { dim, coords, cum })
    }

    /// Builds a polyline after collapsing exact consecutive duplicates.
    pub fn from_vertices_merged(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::Domain("polyline needs at least one vertex".into()));
        }
        Ok(merge_coords(dim, &coords, 0.0))
    }

    /// Convenience constructor from vertex slices.
    pub fn from_points(points: &[&[f64]]) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    /// A single-point curve.
    pub fn singleton(point: &[f64]) -> Self {
        Self { dim: point.len(), coords: point.to_vec(), cum: alloc::vec![0.0] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.cum.len()
    }

    pub fn num_segments(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn vertex(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn vertices(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Arc length at each vertex; the last entry is the total length.
    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().expect("at least one vertex")
    }

    pub fn segment_length(&self, s: usize) -> f64 {
        self.cum[s + 1] - self.cum[s]
    }

    /// Unit tangent of segment `s`.
    pub fn tangent(&self, s: usize) -> Vec<f64> {
        let d = sub(self.vertex(s + 1), self.vertex(s));
        let n = norm(&d);
        d.into_iter().map(|x| x / n).collect()
    }

    /// Point at arc length `s in [0, L]`.
    pub fn point_at(&self, s: f64) -> Result<Vec<f64>> {
        let total = self.length();
        if !(0.0..=total).contains(&s) {
            return Err(Error::Domain(alloc::format!("arc length {s} outside [0, {total}]")));
        }
        Ok(self.eval_clamped(s))
    }

    /// Like `point_at`, but frozen at the endpoints outside `[0, L]`.
    pub(crate) fn eval_clamped(&self, s: f64) -> Vec<f64> {
        let m = self.num_vertices();
        if m == 1 || s <= 0.0 {
            return self.vertex(0).to_vec();
        }
        if s >= self.length() {
            return self.vertex(m - 1).to_vec();
        }
        // Segment k with cum[k] <= s < cum[k+1].
        let k = self.cum.partition_point(|&c| c <= s) - 1;
        let t = (s - self.cum[k]) / self.segment_length(k);
        crate::geom::lerp(self.vertex(k), self.vertex(k + 1), t)
    }

    /// Angle between incoming and outgoing tangents at each interior vertex.
    pub fn turning_angles(&self) -> Vec<f64> {
        let m = self.num_vertices();
        if m < 3 {
            return Vec::new();
        }
        let tangents: Vec<Vec<f64>> = (0..m - 1).map(|s| self.tangent(s)).collect();
        tangents
            .windows(2)
            .map(|w| {
                // Kahan's angle formula for unit vectors; accurate near 0 and pi.
                let diff: f64 = libm::sqrt(dist2(&w[0], &w[1]));
                let sum: f64 = libm::sqrt(w[0].iter().zip(&w[1]).map(|(a, b)| (a + b) * (a + b)).sum());
                2.0 * libm::atan2(diff, sum)
            })
            .collect()
    }

    /// Total variation of the unit tangent over a vertex window: the sum of
    /// turning angles at vertices strictly inside it. `None` means the whole curve.
    pub fn tv_gamma_prime(&self, window: Option<VertexWindow>) -> Result<f64> {
        let m = self.num_vertices();
        let w = window.unwrap_or(VertexWindow::new(0, m - 1));
        self.check_window(w)?;
        if w.end < w.start + 2 {
            return Ok(0.0);
        }
        let angles = self.turning_angles();
        // angles[k] belongs to vertex k + 1.
        Ok(angles[w.start..w.end - 1].iter().sum())
    }

    /// `|t_out - t_in| = 2 sin(theta / 2)` at each interior vertex.
    pub fn tangent_jumps(&self) -> Vec<f64> {
        let m = self.num_vertices();
        if m < 3 {
            return Vec::new();
        }
        (1..m - 1).map(|j| libm::sqrt(dist2(&self.tangent(j - 1), &self.tangent(j)))).collect()
    }

    /// Variation of the unit tangent as a BV function of arc length over a
    /// vertex window: the sum of tangent jumps strictly inside it. Never
    /// exceeds [`Polyline::tv_gamma_prime`], and agrees with it to second
    /// order in the turning angles.
    pub fn tangent_variation(&self, window: Option<VertexWindow>) -> Result<f64> {
        let m = self.num_vertices();
        let w = window.unwrap_or(VertexWindow::new(0, m - 1));
        self.check_window(w)?;
        if w.end < w.start + 2 {
            return Ok(0.0);
        }
        Ok(self.tangent_jumps()[w.start..w.end - 1].iter().sum())
    }

    pub(crate) fn check_window(&self, w: VertexWindow) -> Result<()> {
        if w.start > w.end || w.end >= self.num_vertices() {
            return Err(Error::Domain(alloc::format!(
                "invalid vertex window {}..={} for a curve with {} vertices",
                w.start,
                w.end,
                self.num_vertices()
            )));
        }
        Ok(())
    }

    /// Signed turning angle at each interior vertex, counterclockwise positive.
    pub fn signed_turning_2d(&self) -> Result<Vec<f64>> {
        self.require_2d()?;
        let m = self.num_vertices();
        if m < 3 {
            return Ok(Vec::new());
        }
        Ok((1..m - 1)
            .map(|j| {
                let u = sub(self.vertex(j), self.vertex(j - 1));
                let v = sub(self.vertex(j + 1), self.vertex(j));
                libm::atan2(crate::geom::cross2(&u, &v), dot(&u, &v))
            })
            .collect())
    }

    fn require_2d(&self) -> Result<()> {
        if self.dim != 2 {
            return Err(Error::UnsupportedDimension { required: 2, found: self.dim });
        }
        Ok(())
    }

    /// Every place where two segments of a planar curve meet other than at the
    /// vertex shared by consecutive segments. Points closer than `eps` count as
    /// contacts. A consecutive pair that folds back onto itself is reported too,
    /// since it retraces the same points.
    pub fn self_intersections_2d(&self, eps: f64) -> Result<Vec<SelfIntersection>> {
        self.require_2d()?;
        let nseg = self.num_segments();
        let mut found: Vec<SelfIntersection> = Vec::new();
        for i in 0..nseg {
            let a = self.vertex(i);
            let b = self.vertex(i + 1);
            for j in i + 1..nseg {
                let c = self.vertex(j);
                let d = self.vertex(j + 1);
                let hit = if j == i + 1 {
                    fold_back(a, b, d).map(|point| (point, IntersectionKind::Contact))
                } else {
                    segment_pair(a, b, c, d, eps)
                };
                if let Some((point, kind)) = hit {
                    let dup = kind == IntersectionKind::Contact
                        && found
                            .iter()
                            .any(|f| f.kind == IntersectionKind::Contact && dist(&f.point, &point) <= eps.max(0.0));
                    if !dup {
                        found.push(SelfIntersection { segments: (i, j), point, kind });
                    }
                }
            }
        }
        Ok(found)
    }

    /// Uniform distance between the unit-speed parameterizations, the shorter
    /// curve frozen at its end point once it runs out.
    pub fn curve_distance(&self, other: &Polyline) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        // Between consecutive breakpoints both maps are affine in t, so the
        // squared gap is a convex quadratic and peaks at a breakpoint.
        let mut ts: Vec<f64> = self.cum.iter().chain(other.cum.iter()).copied().collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let best = ts.iter().map(|&t| dist2(&self.eval_clamped(t), &other.eval_clamped(t))).fold(0.0, f64::max);
        Ok(libm::sqrt(best))
    }

    /// Collapses consecutive vertices closer than `eps_merge` to their midpoint.
    pub fn merge_vertices(&self, eps_merge: f64) -> Polyline {
        merge_coords(self.dim, &self.coords, eps_merge)
    }

    /// Subdivides every segment longer than `max_len` into
    /// `ceil(len / max_len)` equal pieces.
    pub fn split_segments(&self, max_len: f64) -> Result<Polyline> {
        if !(max_len > 0.0) {
            return Err(Error::Config("max_len must be positive".into()));
        }
        let d = self.dim;
        let mut coords = Vec::with_capacity(self.coords.len());
        coords.extend_from_slice(self.vertex(0));
        for s in 0..self.num_segments() {
            let len = self.segment_length(s);
            let k = if len > max_len { libm::ceil(len / max_len) as usize } else { 1 };
            let (a, b) = (self.vertex(s), self.vertex(s + 1));
            for i in 1..k {
                let t = i as f64 / k as f64;
                coords.extend(crate::geom::lerp(a, b, t));
            }
            coords.extend_from_slice(b);
        }
        Polyline::new(d, coords)
    }

    /// Curve traversed backwards.
    pub fn reversed(&self) -> Polyline {
        let mut coords = Vec::with_capacity(self.coords.len());
        for v in self.coords.chunks_exact(self.dim).rev() {
            coords.extend_from_slice(v);
        }
        merge_coords(self.dim, &coords, 0.0)
    }

    /// Applies `x -> R x + b`, `R` row-major.
    pub fn transformed(&self, rotation: &[f64], shift: &[f64]) -> Polyline {
        let d = self.dim;
        let mut coords = Vec::with_capacity(self.coords.len());
        for v in self.coords.chunks_exact(d) {
            for r in 0..d {
                coords.push(dot(&rotation[r * d..(r + 1) * d], v) + shift[r]);
            }
        }
        merge_coords(d, &coords, 0.0)
    }
}

fn merge_coords(dim: usize, coords: &[f64], eps: f64) -> Polyline {
    let close = |a: &[f64], b: &[f64]| {
        let d = dist(a, b);
        d <= 0.0 || d < eps
    };
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in coords.chunks_exact(dim) {
        out.push(v.to_vec());
        while out.len() >= 2 && close(&out[out.len() - 2], &out[out.len() - 1]) {
            let b = out.pop().expect("len >= 2");
            let a = out.last_mut().expect("len >= 1");
            for (x, y) in a.iter_mut().zip(&b) {
                *x = 0.5 * (*x + y);
            }
        }
    }
    let flat: Vec<f64> = out.into_iter().flatten().collect();
    Polyline::new(dim, flat).expect("merged vertices are distinct")
}

/// Overlap of consecutive segments `[a, b]`, `[b, d]` that reverse direction.
fn fold_back(a: &[f64], b: &[f64], d: &[f64]) -> Option<[f64; 2]> {
    if orient2d(a, b, d) != 0.0 {
        return None;
    }
    let u = sub(b, a);
    let v = sub(d, b);
    if dot(&u, &v) >= 0.0 {
        return None;
    }
    // The retraced stretch ends at whichever segment is shorter.
    let end = if norm(&v) <= norm(&u) { d } else { a };
    Some([end[0], end[1]])
}

fn on_segment(a: &[f64], b: &[f64], p: &[f64]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segment_pair(a: &[f64], b: &[f64], c: &[f64], d: &[f64], eps: f64) -> Option<([f64; 2], IntersectionKind)> {
    let o1 = orient2d(a, b, c);
    let o2 = orient2d(a, b, d);
    let o3 = orient2d(c, d, a);
    let o4 = orient2d(c, d, b);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        let t = o3 / (o3 - o4);
        let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        return Some((p, IntersectionKind::Crossing));
    }
    if o1 == 0.0 && o2 == 0.0 {
        // Collinear: report the midpoint of the overlap, if any.
        let dir = sub(b, a);
        let proj = |p: &[f64]| dot(&sub(p, a), &dir);
        let (lo1, hi1) = (0.0f64, dot(&dir, &dir));
        let (pc, pd) = (proj(c), proj(d));
        let lo = lo1.max(pc.min(pd));
        let hi = hi1.min(pc.max(pd));
        if lo <= hi {
            let t = 0.5 * (lo + hi) / hi1;
            let p = [a[0] + t * dir[0], a[1] + t * dir[1]];
            return Some((p, IntersectionKind::Contact));
        }
    } else {
        for (o, p, s, e) in [(o1, c, a, b), (o2, d, a, b), (o3, a, c, d), (o4, b, c, d)] {
            if o == 0.0 && on_segment(s, e, p) {
                return Some(([p[0], p[1]], IntersectionKind::Contact));
            }
        }
    }
    if eps > 0.0 {
        let (s, t, q) = segment_segment_closest(a, b, c, d);
        if q < eps * eps {
            let p1 = crate::geom::lerp(a, b, s);
            let p2 = crate::geom::lerp(c, d, t);
            return Some(([0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1])], IntersectionKind::Contact));
        }
    }
    None
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct CurveJson {
    dim: usize,
    vertices: Vec<Vec<f64>>,
}

#[cfg(feature = "serde")]
impl TryFrom<CurveJson> for Polyline {
    type Error = Error;

    fn try_from(c: CurveJson) -> Result<Self> {
        if let Some(v) = c.vertices.iter().find(|v| v.len() != c.dim) {
            return Err(Error::DimensionMismatch { expected: c.dim, found: v.len() });
        }
        Polyline::new(c.dim, c.vertices.into_iter().flatten().collect())
    }
}

#[cfg(feature = "serde")]
impl From<Polyline> for CurveJson {
    fn from(p: Polyline) -> Self {
        CurveJson { dim: p.dim, vertices: p.vertices().map(|v| v.to_vec()).collect() }
    }
}
