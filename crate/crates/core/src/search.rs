//! Randomized hunt for planar instances whose best-found curve crosses itself.
//!
//! For `p >= 2` planar minimizers are injective, so a run with `p = 2` is a
//! control that should report nothing. Below 2 a recorded candidate is only
//! a curve that is approximately stationary and not injective; nothing here
//! certifies global optimality.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curve::{Polyline, SelfIntersection};
use crate::energy::validate_params;
use crate::measure::{synth_measure, DiscreteMeasure, SynthFamily, SynthParams};
use crate::optimizer::{fit, FitConfig};
use crate::oracle::{certify_fit, Certification, OracleConfig, MAX_ATOMS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SearchConfig {
    pub p: f64,
    /// Families cycled through; empty means all.
    pub families: Vec<SynthFamily>,
    /// Number of instances to try.
    pub budget: usize,
    pub seed: u64,
    /// Atom counts are drawn uniformly from this closed range.
    pub atoms: (usize, usize),
    /// `lambda` is drawn log-uniformly from this range.
    pub lambda_range: (f64, f64),
    /// Masses are redrawn uniformly from `[0.2, 1]` and normalized.
    pub random_masses: bool,
    pub restarts: usize,
    /// A curve counts as stationary when its residuals are below this
    /// multiple of `lambda`.
    pub stationarity_rel: f64,
    /// Candidates with at most this many atoms are compared with a
    /// three-vertex grid search of spacing `oracle_h`.
    pub oracle_max_atoms: usize,
    pub oracle_h: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            families: Vec::new(),
            budget: 20,
            seed: 0,
            atoms: (3, 8),
            lambda_range: (0.01, 0.3),
            random_masses: true,
            restarts: 6,
            stationarity_rel: 1e-3,
            oracle_max_atoms: 5,
            oracle_h: 0.05,
        }
    }
}

/// One self-intersecting, approximately stationary fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Candidate {
    /// Instance index within the run.
    pub instance: usize,
    pub family: SynthFamily,
    /// Seed the measure was drawn with.
    pub instance_seed: u64,
    pub p: f64,
    pub lambda: f64,
    pub measure: DiscreteMeasure,
    pub curve: Polyline,
    pub energy: f64,
    pub intersections: Vec<SelfIntersection>,
    pub max_residual: f64,
    pub oracle: Option<Certification>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchReport {
    pub instances: usize,
    /// Fits whose curve had a double point, stationary or not.
    pub self_intersecting: usize,
    pub candidates: Vec<Candidate>,
}

/// Draws `budget` random instances and keeps the self-intersecting
/// stationary fits.
pub fn conjecture_search(cfg: &SearchConfig) -> Result<SearchReport> {
    validate_params(cfg.p, cfg.lambda_range.0)?;
    let (lo, hi) = cfg.lambda_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::Config("lambda range must satisfy 0 < lo <= hi".into()));
    }
    if cfg.atoms.0 == 0 || cfg.atoms.0 > cfg.atoms.1 {
        return Err(Error::Config("atom range must satisfy 1 <= lo <= hi".into()));
    }
    let families: Vec<SynthFamily> =
        if cfg.families.is_empty() { SynthFamily::ALL.to_vec() } else { cfg.families.clone() };
    let mut report = SearchReport { instances: 0, self_intersecting: 0, candidates: Vec::new() };
    for k in 0..cfg.budget {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64);
        let family = families[k % families.len()];
        let n = rng.random_range(cfg.atoms.0..=cfg.atoms.1);
        let instance_seed: u64 = rng.random();
        let lambda = libm::exp(libm::log(lo) + (libm::log(hi) - libm::log(lo)) * rng.random::<f64>());
        let mut mu = synth_measure(family, n, instance_seed, &SynthParams::default())?;
        if cfg.random_masses {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..=1.0)).collect();
            let total: f64 = w.iter().sum();
            let masses = w.iter().map(|x| x / total).collect();
            mu = DiscreteMeasure::new(2, mu.coords().to_vec(), masses)?;
        }
        report.instances += 1;
        let fcfg = FitConfig { restarts: cfg.restarts, seed: instance_seed, ..FitConfig::new(cfg.p, lambda) };
        let res = fit(&mu, &fcfg)?;
        let scale = if mu.diameter() > 0.0 { mu.diameter() } else { 1.0 };
        let intersections = res.curve.self_intersections_2d(1e-9 * scale)?;
        if intersections.is_empty() {
            continue;
        }
        report.self_intersecting += 1;
        if !res.stationarity.is_stationary(cfg.stationarity_rel * lambda) {
            continue;
        }
        let oracle = if n <= cfg.oracle_max_atoms.min(MAX_ATOMS) {
            Some(certify_fit(&mu, &res.curve, &OracleConfig::new(3, cfg.oracle_h, cfg.p, lambda))?)
        } else {
            None
        };
        report.candidates.push(Candidate {
            instance: k,
            family,
            instance_seed,
            p: cfg.p,
            lambda,
            measure: mu,
            energy: res.energy.total,
            max_residual: res.stationarity.max_residual,
            curve: res.curve,
            intersections,
            oracle,
        });
    }
    Ok(report)
}
