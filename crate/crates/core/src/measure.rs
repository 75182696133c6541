//! Finite positive discrete measures `sum m_i delta_{x_i}`.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geom::{dist2, orient2d};
use crate::{Error, Result};

/// Weighted atoms in `R^d`, `d >= 2`.
///
/// Atom order is stable and defines the summation order of every reduction in
/// the crate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from flat coordinates (atom-major) and masses.
    pub fn new(dim: usize, coords: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Domain("measure dimension must be at least 2".into()));
        }
        if masses.is_empty() {
            return Err(Error::Domain("measure has no atoms".into()));
        }
        if coords.len() != dim * masses.len() {
            return Err(Error::DimensionMismatch { expected: dim * masses.len(), found: coords.len() });
        }
        if let Some(i) = masses.iter().position(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::Domain(alloc::format!("atom {i} has non-positive mass {}", masses[i])));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("non-finite coordinate".into()));
        }
        Ok(Self { dim, coords, masses })
    }

    /// Builds a measure from points, all with mass `1/n`.
    pub fn uniform(dim: usize, points: &[&[f64]]) -> Result<Self> {
        let n = points.len();
        let mut coords = Vec::with_capacity(n * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Domain(alloc::format!("atom {i} has dimension {}, expected {dim}", p.len())));
            }
            coords.extend_from_slice(p);
        }
        let w = 1.0 / n as f64;
        Self::new(dim, coords, alloc::vec![w; n])
    }

    /// Same atoms with explicit masses.
    pub fn weighted(dim: usize, points: &[&[f64]], masses: &[f64]) -> Result<Self> {
        let mut m = Self::uniform(dim, points)?;
        if masses.len() != m.len() {
            return Err(Error::DimensionMismatch { expected: m.len(), found: masses.len() });
        }
        m = Self::new(dim, m.coords, masses.to_vec())?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// `mu(R^d)`, summed in atom order.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Iterates `(position, mass)` in atom order.
    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coords.chunks_exact(self.dim).zip(self.masses.iter().copied())
    }

    /// Maximum pairwise distance between atoms, `0` for a single atom.
    pub fn diameter(&self) -> f64 {
        if self.dim == 2 {
            let hull = self.convex_hull_2d().expect("dimension checked");
            return max_pairwise(hull.iter().map(|p| &p[..]));
        }
        max_pairwise(self.coords.chunks_exact(self.dim))
    }

    /// Counterclockwise hull vertices starting at the lexicographically smallest
    /// point. Collinear points are dropped, so a collinear input yields its two
    /// extreme points and a single distinct point yields one vertex.
    pub fn convex_hull_2d(&self) -> Result<Vec<[f64; 2]>> {
        if self.dim != 2 {
            return Err(Error::UnsupportedDimension { required: 2, found: self.dim });
        }
        let pts: Vec<[f64; 2]> = self.coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Ok(monotone_chain(pts))
    }

    /// Weighted mean of the atom positions.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = alloc::vec![0.0; self.dim];
        for (x, m) in self.atoms() {
            crate::geom::axpy(&mut acc, m, x);
        }
        let total = self.total_mass();
        acc.iter_mut().for_each(|a| *a /= total);
        acc
    }

    /// Coordinate-wise bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = alloc::vec![f64::INFINITY; self.dim];
        let mut hi = alloc::vec![f64::NEG_INFINITY; self.dim];
        for x in self.coords.chunks_exact(self.dim) {
            for k in 0..self.dim {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        (lo, hi)
    }

    /// Applies `x -> R x + b` to every atom, `R` given row-major.
    pub fn transformed(&self, rotation: &[f64], shift: &[f64]) -> Self {
        let d = self.dim;
        let mut coords = Vec::with_capacity(self.coords.len());
        for x in self.coords.chunks_exact(d) {
            for r in 0..d {
                let row = &rotation[r * d..(r + 1) * d];
                coords.push(crate::geom::dot(row, x) + shift[r]);
            }
        }
        Self { dim: d, coords, masses: self.masses.clone() }
    }
}

fn max_pairwise<'a>(pts: impl Iterator<Item = &'a [f64]> + Clone) -> f64 {
    let v: Vec<&[f64]> = pts.collect();
    let mut best = 0.0f64;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            best = best.max(dist2(v[i], v[j]));
        }
    }
    libm::sqrt(best)
}

pub(crate) fn monotone_chain(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    // Lower chain, then upper chain; pop on non-left turns so collinear points drop out.
    push_chain(&mut hull, pts.iter());
    push_chain(&mut hull, pts.iter().rev());
    hull
}

fn push_chain<'a>(hull: &mut Vec<[f64; 2]>, pts: impl Iterator<Item = &'a [f64; 2]>) {
    let start = hull.len();
    for p in pts {
        while hull.len() >= start + 2 && orient2d(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
}

/// Test-corpus families for [`synth_measure`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SynthFamily {
    /// Uniform on `[0, 1]^2`.
    UniformSquare,
    /// Isotropic Gaussian blobs around centers drawn in `[0.15, 0.85]^2`.
    GaussianClusters,
    /// Circle of radius 0.4 around `(0.5, 0.5)` with Gaussian radial noise.
    NoisyCircle,
    /// Segment `[0, 1] x {0.5}` with Gaussian normal noise.
    NoisySegment,
}

impl FromStr for SynthFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_square" => Ok(Self::UniformSquare),
            "gaussian_clusters" => Ok(Self::GaussianClusters),
            "noisy_circle" => Ok(Self::NoisyCircle),
            "noisy_segment" => Ok(Self::NoisySegment),
            other => Err(Error::Domain(alloc::format!("unknown family `{other}`"))),
        }
    }
}

impl SynthFamily {
    pub const ALL: [SynthFamily; 4] = [
        SynthFamily::UniformSquare,
        SynthFamily::GaussianClusters,
        SynthFamily::NoisyCircle,
        SynthFamily::NoisySegment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::UniformSquare => "uniform_square",
            Self::GaussianClusters => "gaussian_clusters",
            Self::NoisyCircle => "noisy_circle",
            Self::NoisySegment => "noisy_segment",
        }
    }
}

impl core::fmt::Display for SynthFamily {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape parameters for [`synth_measure`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthParams {
    /// Standard deviation of the noise for the circle and segment families.
    pub noise: f64,
    /// Number of clusters for `GaussianClusters`.
    pub clusters: usize,
    /// Per-cluster standard deviation.
    pub cluster_spread: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { noise: 0.03, clusters: 3, cluster_spread: 0.05 }
    }
}

/// Deterministic planar sample of `n` atoms with masses `1/n`.
pub fn synth_measure(family: SynthFamily, n: usize, seed: u64, params: &SynthParams) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::Domain("synthetic measure needs n >= 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(2 * n);
    match family {
        SynthFamily::UniformSquare => {
            for _ in 0..n {
                coords.push(rng.random::<f64>());
                coords.push(rng.random::<f64>());
            }
        }
        SynthFamily::GaussianClusters => {
            let k = params.clusters.max(1);
            let centers: Vec<[f64; 2]> =
                (0..k).map(|_| [0.15 + 0.7 * rng.random::<f64>(), 0.15 + 0.7 * rng.random::<f64>()]).collect();
            for i in 0..n {
                let c = centers[i % k];
                let gx: f64 = rng.sample(StandardNormal);
                let gy: f64 = rng.sample(StandardNormal);
                coords.push(c[0] + params.cluster_spread * gx);
                coords.push(c[1] + params.cluster_spread * gy);
            }
        }
        SynthFamily::NoisyCircle => {
            for _ in 0..n {
                let theta = core::f64::consts::TAU * rng.random::<f64>();
                let g: f64 = rng.sample(StandardNormal);
                let r = 0.4 + params.noise * g;
                coords.push(0.5 + r * libm::cos(theta));
                coords.push(0.5 + r * libm::sin(theta));
            }
        }
        SynthFamily::NoisySegment => {
            for _ in 0..n {
                let u = rng.random::<f64>();
                let g: f64 = rng.sample(StandardNormal);
                coords.push(u);
                coords.push(0.5 + params.noise * g);
            }
        }
    }
    DiscreteMeasure::new(2, coords, alloc::vec![1.0 / n as f64; n])
}
