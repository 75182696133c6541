//! Exhaustive grid search for tiny planar instances.
//!
//! The search runs over polylines whose vertices are grid points of the
//! bounding box of the atoms. Repeated vertices are allowed, so an `m`-vertex
//! search also covers every curve with fewer vertices. The energy is
//! evaluated with code independent of the [`crate::energy`] module so the two
//! can check each other.
//!
//! For `m >= 3` the search does not enumerate tuples directly. With the
//! interior vertices fixed, each atom picks the nearest segment, and the
//! minimum over the free end vertices splits into independent minima over
//! the atom subsets that talk to each end segment. Enumerating subsets is
//! exact and turns the grid-to-the-`m` cost into grid-squared times `2^n`
//! (`3^n` for `m = 4`).

use alloc::vec::Vec;

use crate::curve::Polyline;
use crate::diagnostics::CheckStatus;
use crate::energy::validate_params;
use crate::measure::DiscreteMeasure;
use crate::{Error, Result};

/// Largest atom count accepted for subset enumeration.
pub const MAX_ATOMS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleConfig {
    /// Vertex count, 1 to 4.
    pub m: usize,
    /// Grid spacing per axis.
    pub h: f64,
    pub p: f64,
    pub lambda: f64,
    /// Work limit in elementary evaluations.
    pub budget: u64,
    /// Absolute slack added when comparing a fit with the oracle.
    pub tol: f64,
}

impl OracleConfig {
    pub fn new(m: usize, h: f64, p: f64, lambda: f64) -> Self {
        Self { m, h, p, lambda, budget: 1_000_000_000, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleResult {
    /// Best grid curve, repeated vertices merged.
    pub curve: Polyline,
    pub energy: f64,
    pub h: f64,
    pub m: usize,
    pub grid_points: usize,
    /// Work actually spent, in the units of [`OracleConfig::budget`].
    pub work: u64,
    /// `C` in `optimum >= energy - C h`: `p diam^(p-1) mu(R^d) + lambda m`.
    pub lipschitz: f64,
}

impl OracleResult {
    pub fn slack(&self) -> f64 {
        self.lipschitz * self.h
    }
}

/// Grid coordinates along one axis: `lo + k h` up to `hi`, plus `hi` itself
/// when it is not a grid point. Halving `h` refines the grid.
fn axis(lo: f64, hi: f64, h: f64) -> Vec<f64> {
    let steps = libm::floor((hi - lo) / h + 1e-9) as usize;
    let mut out: Vec<f64> = (0..=steps).map(|k| lo + k as f64 * h).collect();
    if hi - out[steps] > 1e-9 * h {
        out.push(hi);
    }
    out
}

fn grid(mu: &DiscreteMeasure, h: f64) -> Vec<[f64; 2]> {
    let (lo, hi) = mu.bounding_box();
    let xs = axis(lo[0], hi[0], h);
    let ys = axis(lo[1], hi[1], h);
    xs.iter().flat_map(|&x| ys.iter().map(move |&y| [x, y])).collect()
}

fn seg_dist(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (ux, uy) = (b[0] - a[0], b[1] - a[1]);
    let (wx, wy) = (x[0] - a[0], x[1] - a[1]);
    let uu = ux * ux + uy * uy;
    let t = if uu > 0.0 { ((wx * ux + wy * uy) / uu).clamp(0.0, 1.0) } else { 0.0 };
    libm::hypot(wx - t * ux, wy - t * uy)
}

fn pw(r: f64, p: f64) -> f64 {
    if p == 1.0 {
        r
    } else if p == 2.0 {
        r * r
    } else {
        libm::pow(r, p)
    }
}

fn pt_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

/// Exact energy of a grid tuple, repeated vertices allowed.
fn tuple_energy(atoms: &[([f64; 2], f64)], vs: &[[f64; 2]], p: f64, lambda: f64) -> f64 {
    let mut fid = 0.0;
    for &(x, m) in atoms {
        let d = if vs.len() == 1 {
            pt_dist(x, vs[0])
        } else {
            vs.windows(2).map(|w| seg_dist(x, w[0], w[1])).fold(f64::INFINITY, f64::min)
        };
        fid += m * pw(d, p);
    }
    let len: f64 = vs.windows(2).map(|w| pt_dist(w[0], w[1])).sum();
    fid + lambda * len
}

fn sat_mul(a: u64, b: u64) -> u64 {
    a.saturating_mul(b)
}

/// Work estimate for the configured search.
pub fn required_work(n: usize, grid_points: usize, m: usize) -> u64 {
    let g = grid_points as u64;
    let n64 = n as u64;
    let two_n = 1u64.checked_shl(n as u32).unwrap_or(u64::MAX);
    let three_n = 3u64.saturating_pow(n as u32);
    match m {
        1 => sat_mul(g, n64),
        2 => sat_mul(sat_mul(g, g + 1) / 2, n64),
        3 => sat_mul(sat_mul(g, g), n64.saturating_add(two_n)),
        _ => sat_mul(sat_mul(g, g), n64.saturating_add(two_n))
            .saturating_add(sat_mul(sat_mul(g, g + 1) / 2, n64.saturating_add(three_n))),
    }
}

/// Grid minimum of the energy over curves with `m` vertices.
pub fn brute_force_min(mu: &DiscreteMeasure, ocfg: &OracleConfig) -> Result<OracleResult> {
    validate_params(ocfg.p, ocfg.lambda)?;
    if mu.dim() != 2 {
        return Err(Error::UnsupportedDimension { required: 2, found: mu.dim() });
    }
    if !(1..=4).contains(&ocfg.m) {
        return Err(Error::Config(alloc::format!("oracle vertex count must be 1 to 4 (got {})", ocfg.m)));
    }
    if !(ocfg.h > 0.0 && ocfg.h.is_finite()) {
        return Err(Error::Config("grid spacing must be positive".into()));
    }
    let atoms: Vec<([f64; 2], f64)> = mu.atoms().map(|(x, m)| ([x[0], x[1]], m)).collect();
    let n = atoms.len();
    let (lo, hi) = mu.bounding_box();
    let per_axis = |k: usize| libm::floor((hi[k] - lo[k]) / ocfg.h + 1e-9) + 2.0;
    let estimate_points = per_axis(0) * per_axis(1);
    if estimate_points > 1e9 {
        return Err(Error::BudgetExceeded { required: u64::MAX, budget: ocfg.budget });
    }
    let required_pre = required_work(n, estimate_points as usize, ocfg.m);
    if ocfg.m >= 3 && n > MAX_ATOMS || required_pre > ocfg.budget {
        return Err(Error::BudgetExceeded { required: required_pre, budget: ocfg.budget });
    }
    let pts = grid(mu, ocfg.h);
    let work = required_work(n, pts.len(), ocfg.m);
    let (best, _) = match ocfg.m {
        1 => search_one(&atoms, &pts, ocfg),
        2 => search_two(&atoms, &pts, ocfg),
        3 => search_three(&atoms, &pts, ocfg),
        _ => search_four(&atoms, &pts, ocfg),
    };
    let energy = tuple_energy(&atoms, &best, ocfg.p, ocfg.lambda);
    let coords: Vec<f64> = best.iter().flat_map(|v| v.iter().copied()).collect();
    let curve = Polyline::from_vertices_merged(2, coords)?;
    let lipschitz = ocfg.p * libm::pow(mu.diameter(), ocfg.p - 1.0) * mu.total_mass() + ocfg.lambda * ocfg.m as f64;
    Ok(OracleResult { curve, energy, h: ocfg.h, m: ocfg.m, grid_points: pts.len(), work, lipschitz })
}

fn search_one(atoms: &[([f64; 2], f64)], pts: &[[f64; 2]], o: &OracleConfig) -> (Vec<[f64; 2]>, f64) {
    let mut best = (alloc::vec![pts[0]], f64::INFINITY);
    for &v in pts {
        let e = tuple_energy(atoms, &[v], o.p, o.lambda);
        if e < best.1 {
            best = (alloc::vec![v], e);
        }
    }
    best
}

fn search_two(atoms: &[([f64; 2], f64)], pts: &[[f64; 2]], o: &OracleConfig) -> (Vec<[f64; 2]>, f64) {
    let mut best = (alloc::vec![pts[0], pts[0]], f64::INFINITY);
    // Reversal gives the same curve, so only a <= b.
    for (a, &va) in pts.iter().enumerate() {
        for &vb in &pts[a..] {
            let e = tuple_energy(atoms, &[va, vb], o.p, o.lambda);
            if e < best.1 {
                best = (alloc::vec![va, vb], e);
            }
        }
    }
    best
}

/// For an anchor vertex `v`, the best end vertex serving each atom subset:
/// `F(S) = min_w sum_{i in S} m_i d(x_i, [v, w])^p + lambda |w - v|`.
fn end_table(
    atoms: &[([f64; 2], f64)],
    pts: &[[f64; 2]],
    v: [f64; 2],
    o: &OracleConfig,
    sums: &mut [f64],
) -> (Vec<f64>, Vec<u32>) {
    let n = atoms.len();
    let subsets = 1usize << n;
    let mut best = alloc::vec![f64::INFINITY; subsets];
    let mut arg = alloc::vec![0u32; subsets];
    for (wi, &w) in pts.iter().enumerate() {
        let base = o.lambda * pt_dist(v, w);
        sums[0] = base;
        for s in 1..subsets {
            let low = s.trailing_zeros() as usize;
            let (x, m) = atoms[low];
            sums[s] = sums[s & (s - 1)] + m * pw(seg_dist(x, v, w), o.p);
        }
        for s in 0..subsets {
            if sums[s] < best[s] {
                best[s] = sums[s];
                arg[s] = wi as u32;
            }
        }
    }
    (best, arg)
}

fn search_three(atoms: &[([f64; 2], f64)], pts: &[[f64; 2]], o: &OracleConfig) -> (Vec<[f64; 2]>, f64) {
    let n = atoms.len();
    let subsets = 1usize << n;
    let full = subsets - 1;
    let mut sums = alloc::vec![0.0; subsets];
    let mut best = (alloc::vec![pts[0]; 3], f64::INFINITY);
    for &v2 in pts {
        let (f, arg) = end_table(atoms, pts, v2, o, &mut sums);
        // S and its complement give the reversed curve.
        for s in 0..subsets {
            if n > 0 && s & 1 == 0 {
                continue;
            }
            let e = f[s] + f[full ^ s];
            if e < best.1 {
                best = (alloc::vec![pts[arg[s] as usize], v2, pts[arg[full ^ s] as usize]], e);
            }
        }
    }
    best
}

fn search_four(atoms: &[([f64; 2], f64)], pts: &[[f64; 2]], o: &OracleConfig) -> (Vec<[f64; 2]>, f64) {
    let n = atoms.len();
    let subsets = 1usize << n;
    let mut sums = alloc::vec![0.0; subsets];
    let tables: Vec<(Vec<f64>, Vec<u32>)> = pts.iter().map(|&v| end_table(atoms, pts, v, o, &mut sums)).collect();
    let mut mid = alloc::vec![0.0; n];
    let mut best = (alloc::vec![pts[0]; 4], f64::INFINITY);
    let pow3 = 3usize.pow(n as u32);
    for (a, &v2) in pts.iter().enumerate() {
        for (b, &v3) in pts.iter().enumerate().skip(a) {
            for (i, &(x, m)) in atoms.iter().enumerate() {
                mid[i] = m * pw(seg_dist(x, v2, v3), o.p);
            }
            let length = o.lambda * pt_dist(v2, v3);
            let (fa, ga) = &tables[a];
            let (fb, gb) = &tables[b];
            // Each atom goes to the first, middle, or last segment.
            for code in 0..pow3 {
                let (mut s1, mut s3, mut rest) = (0usize, 0usize, 0.0);
                let mut c = code;
                for (i, &mi) in mid.iter().enumerate() {
                    match c % 3 {
                        0 => s1 |= 1 << i,
                        1 => rest += mi,
                        _ => s3 |= 1 << i,
                    }
                    c /= 3;
                }
                let e = fa[s1] + fb[s3] + rest + length;
                if e < best.1 {
                    best = (alloc::vec![pts[ga[s1] as usize], v2, v3, pts[gb[s3] as usize]], e);
                }
            }
        }
    }
    best
}

/// Comparison of a fitted curve with the grid optimum.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Certification {
    pub status: CheckStatus,
    pub fit_energy: f64,
    pub oracle_energy: Option<f64>,
    /// `C h`.
    pub slack: f64,
    pub tol: f64,
    /// `fit_energy - oracle_energy`.
    pub gap: Option<f64>,
    pub message: alloc::string::String,
    pub oracle: Option<OracleResult>,
}

/// Passes iff the fit energy is at most the oracle energy plus `C h + tol`.
/// A refused oracle marks the comparison as skipped.
pub fn certify_fit(mu: &DiscreteMeasure, fit_curve: &Polyline, ocfg: &OracleConfig) -> Result<Certification> {
    let fit_energy = crate::energy::energy(mu, fit_curve, ocfg.p, ocfg.lambda)?.total;
    match brute_force_min(mu, ocfg) {
        Ok(res) => {
            let slack = res.slack();
            let gap = fit_energy - res.energy;
            let status = if gap <= slack + ocfg.tol { CheckStatus::Pass } else { CheckStatus::Fail };
            let message = alloc::format!(
                "fit energy {fit_energy:.9} vs oracle {:.9} (m = {}, h = {}), allowed excess {:.3e}",
                res.energy,
                res.m,
                res.h,
                slack + ocfg.tol
            );
            Ok(Certification {
                status,
                fit_energy,
                oracle_energy: Some(res.energy),
                slack,
                tol: ocfg.tol,
                gap: Some(gap),
                message,
                oracle: Some(res),
            })
        }
        Err(Error::BudgetExceeded { required, budget }) => Ok(Certification {
            status: CheckStatus::Skipped,
            fit_energy,
            oracle_energy: None,
            slack: f64::NAN,
            tol: ocfg.tol,
            gap: None,
            message: alloc::format!("oracle refused: needs about {required} evaluations, budget {budget}"),
            oracle: None,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_includes_far_end() {
        assert_eq!(axis(0.0, 1.0, 0.25), [0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(axis(0.0, 1.0, 0.3).last(), Some(&1.0));
        assert_eq!(axis(0.0, 1.0, 0.3).len(), 5);
        assert_eq!(axis(2.0, 2.0, 0.1), [2.0]);
    }

    #[test]
    fn single_atom() {
        let mu = DiscreteMeasure::uniform(2, &[&[0.3, 0.7]]).unwrap();
        let r = brute_force_min(&mu, &OracleConfig::new(1, 0.1, 2.0, 0.5)).unwrap();
        assert_eq!(r.energy, 0.0);
        assert_eq!(r.curve.vertex(0), [0.3, 0.7]);
    }

    #[test]
    fn two_atoms_closed_form() {
        let mu = DiscreteMeasure::uniform(2, &[&[0.0, 0.0], &[1.0, 0.0]]).unwrap();
        let r = brute_force_min(&mu, &OracleConfig::new(2, 0.005, 2.0, 0.2)).unwrap();
        assert!((r.energy - 0.16).abs() <= r.slack());
        assert!((r.energy - 0.16).abs() < 1e-12, "{}", r.energy);
    }

    #[test]
    fn more_vertices_never_worse() {
        let mu = DiscreteMeasure::uniform(2, &[&[0.0, 0.0], &[1.0, 0.2], &[0.4, 1.0]]).unwrap();
        let mut prev = f64::INFINITY;
        for m in 1..=3 {
            let e = brute_force_min(&mu, &OracleConfig::new(m, 0.1, 2.0, 0.05)).unwrap().energy;
            assert!(e <= prev + 1e-15);
            prev = e;
        }
    }

    #[test]
    fn subset_search_matches_direct_enumeration() {
        let mu =
            DiscreteMeasure::weighted(2, &[&[0.0, 0.0], &[1.0, 0.1], &[0.3, 0.9], &[0.7, 0.6]], &[0.3, 0.2, 0.4, 0.1])
                .unwrap();
        let atoms: Vec<([f64; 2], f64)> = mu.atoms().map(|(x, m)| ([x[0], x[1]], m)).collect();
        for (m, p, lambda) in [(3, 1.0, 0.1), (3, 2.0, 0.05), (4, 1.5, 0.05)] {
            let o = OracleConfig::new(m, 0.25, p, lambda);
            let pts = grid(&mu, o.h);
            let mut direct = f64::INFINITY;
            let g = pts.len();
            let total = g.pow(m as u32);
            for code in 0..total {
                let mut c = code;
                let vs: Vec<[f64; 2]> = (0..m)
                    .map(|_| {
                        let v = pts[c % g];
                        c /= g;
                        v
                    })
                    .collect();
                direct = direct.min(tuple_energy(&atoms, &vs, p, lambda));
            }
            let r = brute_force_min(&mu, &o).unwrap();
            assert!((r.energy - direct).abs() < 1e-12, "m {m}: {} vs {direct}", r.energy);
        }
    }

    #[test]
    fn refusal_reports_estimate() {
        let mu = DiscreteMeasure::uniform(2, &[&[0.0, 0.0], &[1.0, 1.0]]).unwrap();
        let o = OracleConfig { budget: 1000, ..OracleConfig::new(3, 0.01, 2.0, 0.1) };
        match brute_force_min(&mu, &o) {
            Err(Error::BudgetExceeded { required, budget }) => {
                assert!(required > budget);
                assert_eq!(budget, 1000);
            }
            other => panic!("{other:?}"),
        }
        let c = Polyline::singleton(&[0.5, 0.5]);
        let cert = certify_fit(&mu, &c, &o).unwrap();
        assert_eq!(cert.status, CheckStatus::Skipped);
    }

    #[test]
    fn certify_detects_bad_fit() {
        let mu = DiscreteMeasure::uniform(2, &[&[0.0, 0.0], &[1.0, 0.0]]).unwrap();
        let o = OracleConfig::new(2, 0.05, 2.0, 0.2);
        let good = Polyline::from_points(&[&[0.2, 0.0], &[0.8, 0.0]]).unwrap();
        assert_eq!(certify_fit(&mu, &good, &o).unwrap().status, CheckStatus::Pass);
        let bad = Polyline::singleton(&[0.0, 0.5]);
        let cert = certify_fit(&mu, &bad, &o).unwrap();
        assert_eq!(cert.status, CheckStatus::Fail);
        assert!(cert.message.contains("fit energy") && cert.message.contains("oracle"));
    }
}
