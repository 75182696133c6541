//! Small dense-vector helpers over `&[f64]` slices.

use alloc::vec::Vec;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(dist2(a, b))
}

#[inline]
pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `(1 - t) a + t b`.
#[inline]
pub(crate) fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
}

#[inline]
pub(crate) fn axpy(acc: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += alpha * v;
    }
}

/// `r^p` with exact fast paths for the common exponents.
#[inline]
pub(crate) fn pow_p(r: f64, p: f64) -> f64 {
    if p == 1.0 {
        r
    } else if p == 2.0 {
        r * r
    } else {
        libm::pow(r, p)
    }
}

/// Closest point parameter of `x` on segment `[a, b]`, clamped to `[0, 1]`.
pub(crate) fn segment_param(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..x.len() {
        let e = b[k] - a[k];
        num += (x[k] - a[k]) * e;
        den += e * e;
    }
    if den <= 0.0 {
        return 0.0;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Squared distance from `x` to `(1 - t) a + t b`.
#[inline]
pub(crate) fn dist2_at(x: &[f64], a: &[f64], b: &[f64], t: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..x.len() {
        let z = (1.0 - t) * a[k] + t * b[k];
        s += (x[k] - z) * (x[k] - z);
    }
    s
}

#[inline]
pub(crate) fn cross2(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub(crate) fn orient2d(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    robust::orient2d(
        robust::Coord { x: a[0], y: a[1] },
        robust::Coord { x: b[0], y: b[1] },
        robust::Coord { x: c[0], y: c[1] },
    )
}

/// Nearest points between segments `[a, b]` and `[c, d]` in any dimension.
/// Returns `(s, t, squared distance)` with `s` on the first segment.
pub(crate) fn segment_segment_closest(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> (f64, f64, f64) {
    let u = sub(b, a);
    let v = sub(d, c);
    let w = sub(a, c);
    let uu = dot(&u, &u);
    let vv = dot(&v, &v);
    let uv = dot(&u, &v);
    let uw = dot(&u, &w);
    let vw = dot(&v, &w);
    let den = uu * vv - uv * uv;
    let mut best = (0.0, 0.0, f64::INFINITY);
    let mut consider = |s: f64, t: f64| {
        let s = s.clamp(0.0, 1.0);
        let t = t.clamp(0.0, 1.0);
        let mut q = 0.0;
        for k in 0..a.len() {
            let e = (a[k] + s * u[k]) - (c[k] + t * v[k]);
            q += e * e;
        }
        if q < best.2 {
            best = (s, t, q);
        }
    };
    if den > 1e-14 * uu * vv && uu > 0.0 && vv > 0.0 {
        let s = (uv * vw - vv * uw) / den;
        let t = (uu * vw - uv * uw) / den;
        if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
            consider(s, t);
        }
    }
    // Boundary candidates: each endpoint against the other segment.
    if vv > 0.0 {
        consider(0.0, vw / vv);
        consider(1.0, (vw + uv) / vv);
    } else {
        consider(0.0, 0.0);
        consider(1.0, 0.0);
    }
    if uu > 0.0 {
        consider(-uw / uu, 0.0);
        consider((uv - uw) / uu, 1.0);
    }
    best
}
