//! Planar convex polygons: containment and nearest-point projection.

use alloc::vec::Vec;

use crate::geom::orient2d;
use crate::measure::{monotone_chain, DiscreteMeasure};
use crate::Result;

/// Convex polygon with counterclockwise vertices. One vertex is a point, two
/// vertices a segment.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvexPolygon {
    vertices: Vec<[f64; 2]>,
}

impl ConvexPolygon {
    /// Hull of arbitrary points.
    pub fn hull_of(points: Vec<[f64; 2]>) -> Self {
        Self { vertices: monotone_chain(points) }
    }

    /// Hull of the support of a planar measure.
    pub fn of_measure(mu: &DiscreteMeasure) -> Result<Self> {
        Ok(Self { vertices: mu.convex_hull_2d()? })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Directed boundary edges. A segment hull has both directions.
    pub fn edges(&self) -> Vec<([f64; 2], [f64; 2])> {
        let h = &self.vertices;
        match h.len() {
            0 | 1 => Vec::new(),
            n => (0..n).map(|k| (h[k], h[(k + 1) % n])).collect(),
        }
    }

    /// Whether `p` lies in the closed polygon.
    pub fn contains(&self, p: &[f64]) -> bool {
        match self.vertices.len() {
            0 => false,
            1 => self.vertices[0][0] == p[0] && self.vertices[0][1] == p[1],
            2 => {
                let (a, b) = (self.vertices[0], self.vertices[1]);
                orient2d(&a, &b, p) == 0.0
                    && p[0] >= a[0].min(b[0])
                    && p[0] <= a[0].max(b[0])
                    && p[1] >= a[1].min(b[1])
                    && p[1] <= a[1].max(b[1])
            }
            _ => self.edges().iter().all(|(a, b)| orient2d(a, b, p) >= 0.0),
        }
    }

    /// Nearest point of the polygon; `p` itself, bit for bit, when inside.
    pub fn nearest(&self, p: &[f64]) -> [f64; 2] {
        if self.vertices.len() >= 3 && self.contains(p) {
            return [p[0], p[1]];
        }
        if self.vertices.len() == 1 {
            return self.vertices[0];
        }
        let mut best = ([p[0], p[1]], f64::INFINITY);
        for (a, b) in self.edges() {
            let t = crate::geom::segment_param(p, &a, &b);
            let q = [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]];
            let d = crate::geom::dist2(&q, p);
            if d < best.1 {
                best = (q, d);
            }
        }
        best.0
    }

    /// Distance from `p` to the polygon, zero inside.
    pub fn distance(&self, p: &[f64]) -> f64 {
        crate::geom::dist(&self.nearest(p), p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_projection() {
        let sq = ConvexPolygon::hull_of(alloc::vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        assert!(sq.contains(&[0.5, 0.5]));
        assert!(sq.contains(&[1.0, 0.5]));
        assert!(!sq.contains(&[1.5, 0.5]));
        assert_eq!(sq.nearest(&[0.25, 0.75]), [0.25, 0.75]);
        assert_eq!(sq.nearest(&[2.0, 0.5]), [1.0, 0.5]);
        assert_eq!(sq.nearest(&[2.0, 2.0]), [1.0, 1.0]);
        assert_eq!(sq.distance(&[2.0, 0.0]), 1.0);
    }

    #[test]
    fn degenerate_hulls() {
        let seg = ConvexPolygon::hull_of(alloc::vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.0]]);
        assert_eq!(seg.vertices().len(), 2);
        assert_eq!(seg.distance(&[1.0, 0.0]), 0.0);
        assert_eq!(seg.nearest(&[1.0, 3.0]), [1.0, 0.0]);
        let pt = ConvexPolygon::hull_of(alloc::vec![[1.0, 1.0]]);
        assert_eq!(pt.nearest(&[5.0, 5.0]), [1.0, 1.0]);
    }
}
