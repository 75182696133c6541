//! Planar plots: atoms as dots with area proportional to mass, the hull as a
//! dashed outline, and an optional curve.

use std::fmt::Write;

use pcurve_core::{ConvexPolygon, DiscreteMeasure, Error, Polyline};

use crate::manifest::RunManifest;

/// Relative padding of the view box around the bounding box of the atoms.
const PAD: f64 = 0.05;

pub fn render(mu: &DiscreteMeasure, curve: Option<&Polyline>, manifest: &RunManifest) -> Result<String, Error> {
    if mu.dim() != 2 {
        return Err(Error::UnsupportedDimension { required: 2, found: mu.dim() });
    }
    if let Some(c) = curve {
        if c.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: c.dim() });
        }
    }
    let hull = ConvexPolygon::of_measure(mu)?;
    let (lo, hi) = mu.bounding_box();
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let extent = if extent > 0.0 { extent } else { 1.0 };
    let (w, h) = ((hi[0] - lo[0]).max(0.0), (hi[1] - lo[1]).max(0.0));
    let pad = PAD * extent;
    // SVG's y axis points down; plot (x, -y).
    let (vx, vy, vw, vh) = (lo[0] - pad, -hi[1] - pad, w + 2.0 * pad, h + 2.0 * pad);
    let stroke = 0.004 * extent;
    let rmax = 0.012 * extent;
    let mmax = mu.masses().iter().fold(0.0f64, |a, b| a.max(*b));

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{vx} {vy} {vw} {vh}">"#).unwrap();
    let meta = serde_json::to_string(manifest).expect("manifest serializes");
    writeln!(s, "<metadata>{}</metadata>", escape(&meta)).unwrap();
    let hv = hull.vertices();
    if hv.len() > 1 {
        let pts = points(hv.iter().map(|v| &v[..]));
        let tag = if hv.len() == 2 { "polyline" } else { "polygon" };
        writeln!(
            s,
            r##"<{tag} points="{pts}" fill="none" stroke="#888888" stroke-width="{stroke}" stroke-dasharray="{} {}"/>"##,
            4.0 * stroke,
            3.0 * stroke
        )
        .unwrap();
    }
    writeln!(s, r##"<g fill="#1f4e9a">"##).unwrap();
    for (x, m) in mu.atoms() {
        let r = rmax * (m / mmax).sqrt();
        writeln!(s, r#"<circle cx="{}" cy="{}" r="{r}"/>"#, x[0], flip(x[1])).unwrap();
    }
    writeln!(s, "</g>").unwrap();
    if let Some(c) = curve {
        let sw = 1.5 * stroke;
        if c.num_vertices() == 1 {
            let v = c.vertex(0);
            writeln!(s, r##"<circle cx="{}" cy="{}" r="{}" fill="#c0392b"/>"##, v[0], flip(v[1]), 2.0 * sw).unwrap();
        } else {
            let pts = points(c.vertices());
            writeln!(
                s,
                r##"<polyline points="{pts}" fill="none" stroke="#c0392b" stroke-width="{sw}" stroke-linejoin="round"/>"##
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn points<'a>(it: impl Iterator<Item = &'a [f64]>) -> String {
    it.map(|v| format!("{},{}", v[0], flip(v[1]))).collect::<Vec<_>>().join(" ")
}

/// `-y` without negative zeros.
fn flip(y: f64) -> f64 {
    0.0 - y
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> RunManifest {
        RunManifest::new("plot", serde_json::json!({}), None)
    }

    #[test]
    fn measure_only_has_dots_and_hull() {
        let mu = DiscreteMeasure::weighted(2, &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]], &[1.0, 1.0, 4.0]).unwrap();
        let s = render(&mu, None, &manifest()).unwrap();
        assert_eq!(s.matches("<circle").count(), 3);
        assert!(s.contains("stroke-dasharray"));
        assert!(!s.contains("<polyline"));
        assert!(s.contains(r#"viewBox="-0.05 -1.05 1.1 1.1""#), "{s}");
        // Area proportional to mass: radius doubles when mass quadruples.
        assert!(s.contains(r#"r="0.006""#) && s.contains(r#"r="0.012""#), "{s}");
    }

    #[test]
    fn curve_layer_and_dimension_errors() {
        let mu = DiscreteMeasure::uniform(2, &[&[0.0, 0.0], &[1.0, 0.0]]).unwrap();
        let c = Polyline::from_points(&[&[0.2, 0.0], &[0.8, 0.0]]).unwrap();
        let s = render(&mu, Some(&c), &manifest()).unwrap();
        assert!(s.contains(r#"<polyline points="0.2,0 0.8,0""#), "{s}");
        assert_eq!(s, render(&mu, Some(&c), &manifest()).unwrap());
        let mu3 = DiscreteMeasure::uniform(3, &[&[0.0, 0.0, 0.0]]).unwrap();
        assert!(render(&mu3, None, &manifest()).is_err());
    }
}
