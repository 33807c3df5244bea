//! Ensembles of Birkhoff sums and rescaled paths, and the two σ estimators.
//!
//! Sample `i` draws from its own ChaCha8 stream `(seed, i)` and runs
//! sequentially, so results do not depend on the worker count. Samples are
//! merged in index order.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function_space::GridFunction;
use crate::maps::{BitQueue, IntervalMap, MapFamily, RandomBits};
use crate::transfer::TransferOperator;

pub const MIN_SAMPLES: usize = 100;
pub const MIN_BURN_IN: usize = 1_000;
pub const DEFAULT_BURN_IN: usize = 10_000;
/// Largest tolerated fraction of samples lost to orbit escapes.
pub const MAX_DROP_FRACTION: f64 = 1e-3;
pub const DEFAULT_LAG_MAX: usize = 256;
/// Green–Kubo warning level for the last-quarter spread of the partial sums.
pub const OSCILLATION_TOL: f64 = 0.10;
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// `y = F^-1(U)` with the closed-form invariant CDF.
    InverseCdf,
    /// Uniform start iterated `burn_in` times.
    BurnInOrbit,
    /// Exact doubling-map shift on a queue of random bits.
    BitQueue,
}

impl SamplerMode {
    pub fn default_for(map: &IntervalMap) -> Self {
        match map.family() {
            MapFamily::Doubling => SamplerMode::BitQueue,
            MapFamily::Chebyshev { .. } => SamplerMode::InverseCdf,
            _ => SamplerMode::BurnInOrbit,
        }
    }
}

impl FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse-cdf" => Ok(SamplerMode::InverseCdf),
            "burn-in-orbit" => Ok(SamplerMode::BurnInOrbit),
            "bit-queue" => Ok(SamplerMode::BitQueue),
            _ => Err(Error::Config(format!(
                "unknown sampler '{s}' (expected inverse-cdf, burn-in-orbit or bit-queue)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub samples: usize,
    pub n: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub mode: SamplerMode,
}

impl EnsembleConfig {
    /// Config with the default sampler for `map`.
    pub fn for_map(map: &IntervalMap, samples: usize, n: usize, seed: u64) -> Self {
        Self {
            samples,
            n,
            burn_in: DEFAULT_BURN_IN,
            seed,
            mode: SamplerMode::default_for(map),
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self, map: &IntervalMap) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return Err(Error::Config(format!(
                "ensemble needs at least {MIN_SAMPLES} samples, got {}",
                self.samples
            )));
        }
        if self.n < 1 {
            return Err(Error::Config("Birkhoff length must be at least 1".to_string()));
        }
        match self.mode {
            SamplerMode::BurnInOrbit if self.burn_in < MIN_BURN_IN => Err(Error::Config(format!(
                "burn-in must be at least {MIN_BURN_IN}, got {}",
                self.burn_in
            ))),
            SamplerMode::InverseCdf if map.inverse_cdf(0.5).is_none() => Err(Error::Config(format!(
                "{} has no closed-form invariant CDF; use burn-in-orbit",
                map.name()
            ))),
            SamplerMode::BitQueue if map.family() != MapFamily::Doubling => Err(Error::Config(format!(
                "bit-queue sampling applies to the doubling map only, not {}",
                map.name()
            ))),
            _ => Ok(()),
        }
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

enum Orbit<'a> {
    Float { map: &'a IntervalMap, y: f64, step: usize },
    Bits(Box<BitQueue<RandomBits<ChaCha8Rng>>>),
}

impl<'a> Orbit<'a> {
    fn start(map: &'a IntervalMap, cfg: &EnsembleConfig, index: usize) -> Result<Self> {
        let mut rng = sample_rng(cfg.seed, index);
        match cfg.mode {
            SamplerMode::BitQueue => Ok(Orbit::Bits(Box::new(BitQueue::new(RandomBits::new(rng))))),
            SamplerMode::InverseCdf => {
                let u: f64 = rng.random();
                let y = map
                    .inverse_cdf(u)
                    .ok_or_else(|| Error::Config(format!("{} has no inverse CDF sampler", map.name())))?;
                Ok(Orbit::Float { map, y, step: 0 })
            }
            SamplerMode::BurnInOrbit => {
                let (lo, hi) = map.domain();
                let mut orbit = Orbit::Float {
                    map,
                    y: rng.random_range(lo..hi),
                    step: 0,
                };
                for _ in 0..cfg.burn_in {
                    orbit.advance()?;
                }
                Ok(orbit)
            }
        }
    }

    fn value(&self) -> f64 {
        match self {
            Orbit::Float { y, .. } => *y,
            Orbit::Bits(q) => q.value(),
        }
    }

    fn advance(&mut self) -> Result<()> {
        match self {
            Orbit::Float { map, y, step } => {
                *step += 1;
                *y = map.step(*y, *step)?;
                Ok(())
            }
            Orbit::Bits(q) => {
                q.advance();
                Ok(())
            }
        }
    }
}

/// Kept `(index, value)` pairs and the dropped sample indices.
type Kept<T> = (Vec<(usize, T)>, Vec<usize>);

/// Runs `f` for every sample index, dropping samples whose orbit escapes.
fn per_sample<T: Send>(
    map: &IntervalMap,
    cfg: &EnsembleConfig,
    f: impl Fn(Orbit<'_>) -> Result<T> + Sync,
) -> Result<Kept<T>> {
    cfg.validate(map)?;
    let results: Vec<Result<Option<T>>> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| match Orbit::start(map, cfg, i).and_then(&f) {
            Ok(v) => Ok(Some(v)),
            Err(Error::NumericalEscape { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut kept = Vec::with_capacity(cfg.samples);
    let mut dropped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some(v) => kept.push((i, v)),
            None => dropped.push(i),
        }
    }
    if dropped.len() as f64 > MAX_DROP_FRACTION * cfg.samples as f64 {
        return Err(Error::Run(format!(
            "{} of {} orbits escaped the domain",
            dropped.len(),
            cfg.samples
        )));
    }
    Ok((kept, dropped))
}

/// `M` initial points distributed according to the invariant measure.
pub fn sample_invariant(map: &IntervalMap, cfg: &EnsembleConfig) -> Result<Vec<f64>> {
    Ok(per_sample(map, cfg, |o| Ok(o.value()))?.0.into_iter().map(|(_, y)| y).collect())
}

/// One sample's prefix sums `S_j = sum_{i<j} h(T^i y0)` at the recorded `j`,
/// plus the functionals of the full step path `j -> S_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub index: usize,
    pub sums: Vec<f64>,
    /// `max_{0 <= j <= n} S_j`.
    pub max_sum: f64,
    /// `sum_{j<n} [S_j > 0] + [S_j = 0] / 2`.
    pub positive_time: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub n: usize,
    pub record_at: Vec<usize>,
    pub records: Vec<SampleRecord>,
    pub dropped: Vec<usize>,
}

/// Runs the ensemble once, recording `S_j` for each `j` in `record_at`.
pub fn simulate(
    map: &IntervalMap,
    h: &(dyn Fn(f64) -> f64 + Sync),
    cfg: &EnsembleConfig,
    record_at: &[usize],
) -> Result<Simulation> {
    if record_at.windows(2).any(|w| w[1] <= w[0]) || record_at.last().is_some_and(|&j| j > cfg.n) {
        return Err(Error::InvalidInput(format!(
            "record points must increase and stay within n = {}",
            cfg.n
        )));
    }
    let n = cfg.n;
    let (kept, dropped) = per_sample(map, cfg, |mut orbit| {
        let mut sums = Vec::with_capacity(record_at.len());
        let mut k = 0;
        if record_at.first() == Some(&0) {
            sums.push(0.0);
            k = 1;
        }
        let mut s = 0.0f64;
        let mut max_sum = 0.0f64;
        let mut positive = 0.0;
        for j in 0..n {
            positive += if s > 0.0 {
                1.0
            } else if s == 0.0 {
                0.5
            } else {
                0.0
            };
            s += h(orbit.value());
            max_sum = max_sum.max(s);
            if record_at.get(k) == Some(&(j + 1)) {
                sums.push(s);
                k += 1;
            }
            if j + 1 < n {
                orbit.advance()?;
            }
        }
        Ok((sums, max_sum, positive))
    })?;
    Ok(Simulation {
        n,
        record_at: record_at.to_vec(),
        records: kept
            .into_iter()
            .map(|(index, (sums, max_sum, positive_time))| SampleRecord {
                index,
                sums,
                max_sum,
                positive_time,
            })
            .collect(),
        dropped,
    })
}

impl Simulation {
    fn slot(&self, j: usize) -> Result<usize> {
        self.record_at
            .iter()
            .position(|&r| r == j)
            .ok_or_else(|| Error::InvalidInput(format!("S_{j} was not recorded")))
    }

    /// `S_j` for every kept sample.
    pub fn sums_at(&self, j: usize) -> Result<Vec<f64>> {
        let k = self.slot(j)?;
        Ok(self.records.iter().map(|r| r.sums[k]).collect())
    }

    pub fn birkhoff(&self) -> Result<BirkhoffEnsemble> {
        Ok(BirkhoffEnsemble {
            n: self.n,
            indices: self.records.iter().map(|r| r.index).collect(),
            values: self.sums_at(self.n)?,
            dropped: self.dropped.len(),
        })
    }

    /// `(j, sqrt(mean(S_j^2) / j))` for every positive record point.
    pub fn variance_growth(&self) -> Vec<(usize, f64)> {
        let m = self.records.len() as f64;
        self.record_at
            .iter()
            .enumerate()
            .filter(|(_, &j)| j > 0)
            .map(|(k, &j)| {
                let ms = self.records.iter().map(|r| r.sums[k] * r.sums[k]).sum::<f64>() / m;
                (j, (ms / j as f64).sqrt())
            })
            .collect()
    }

    /// Rescaled paths `psi(t) = S_[nt] / (sigma sqrt(n))` on the grid `t = k/m`.
    pub fn paths(&self, sigma: f64, m: usize) -> Result<Vec<PathSample>> {
        check_sigma(sigma)?;
        let grid = path_grid(self.n, m)?;
        let slots: Vec<usize> = grid.iter().map(|&j| self.slot(j)).collect::<Result<_>>()?;
        let scale = sigma * (self.n as f64).sqrt();
        Ok(self
            .records
            .iter()
            .map(|r| {
                let path: Vec<f64> = slots.iter().map(|&k| r.sums[k] / scale).collect();
                PathSample {
                    index: r.index,
                    terminal: path[m],
                    sup: r.max_sum / scale,
                    occupation: r.positive_time / self.n as f64,
                    path,
                }
            })
            .collect())
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "paths need sigma > 0, got {sigma}; run coboundary detection instead"
        )))
    }
}

/// Step counts `k n / m`, k = 0..=m.
pub fn path_grid(n: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || !n.is_multiple_of(m) {
        return Err(Error::InvalidInput(format!("path resolution {m} must divide n = {n}")));
    }
    Ok((0..=m).map(|k| k * (n / m)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffEnsemble {
    pub n: usize,
    pub indices: Vec<usize>,
    /// Unscaled `S_n`.
    pub values: Vec<f64>,
    pub dropped: usize,
}

impl BirkhoffEnsemble {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_index,value\n");
        for (i, v) in self.indices.iter().zip(&self.values) {
            let _ = writeln!(out, "{i},{v}");
        }
        out
    }
}

pub fn birkhoff_ensemble(map: &IntervalMap, h: &(dyn Fn(f64) -> f64 + Sync), cfg: &EnsembleConfig) -> Result<BirkhoffEnsemble> {
    simulate(map, h, cfg, &[cfg.n])?.birkhoff()
}

/// `sigma_n = ||S_n||_2 / sqrt(n)` from one ensemble run to `max(n_list)`.
pub fn sigma_variance_growth(
    map: &IntervalMap,
    h: &(dyn Fn(f64) -> f64 + Sync),
    n_list: &[usize],
    cfg: &EnsembleConfig,
) -> Result<Vec<(usize, f64)>> {
    let &last = n_list
        .last()
        .ok_or_else(|| Error::InvalidInput("empty list of lengths".to_string()))?;
    if n_list[0] == 0 {
        return Err(Error::InvalidInput("lengths must be positive".to_string()));
    }
    Ok(simulate(map, h, &cfg.with_n(last), n_list)?.variance_growth())
}

/// One rescaled path on the grid `t = k/m`.
///
/// `sup` and `occupation` are taken over the full step path at all `n`
/// times; `path` holds only the grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub index: usize,
    pub path: Vec<f64>,
    pub sup: f64,
    pub terminal: f64,
    pub occupation: f64,
}

impl PathSample {
    /// Maximum over the grid times only.
    pub fn grid_sup(&self) -> f64 {
        self.path.iter().copied().fold(0.0, f64::max)
    }

    /// Fraction of grid times `k/m`, k < m, with `psi > 0`, ties counting half.
    pub fn grid_occupation(&self) -> f64 {
        let m = self.path.len() - 1;
        self.path[..m]
            .iter()
            .map(|&v| if v > 0.0 { 1.0 } else if v == 0.0 { 0.5 } else { 0.0 })
            .sum::<f64>()
            / m as f64
    }
}

pub fn path_ensemble(
    map: &IntervalMap,
    h: &(dyn Fn(f64) -> f64 + Sync),
    sigma: f64,
    cfg: &EnsembleConfig,
    m: usize,
) -> Result<Vec<PathSample>> {
    check_sigma(sigma)?;
    simulate(map, h, cfg, &path_grid(cfg.n, m)?)?.paths(sigma, m)
}

pub fn paths_to_csv(paths: &[PathSample]) -> String {
    let mut out = String::from("sample_index,sup,terminal,occupation\n");
    for p in paths {
        let _ = writeln!(out, "{},{},{},{}", p.index, p.sup, p.terminal, p.occupation);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenKubo {
    pub method: CorrelationMethod,
    pub sigma2: f64,
    pub lag_max: usize,
    /// `C_k = int h (h o T^k) dnu`, k = 0..=lag_max.
    pub correlations: Vec<f64>,
    /// `C_0 + 2 sum_{k=1}^{L} C_k`, L = 0..=lag_max.
    pub curve: Vec<f64>,
    /// Spread of the last quarter of `curve` relative to its final level.
    pub oscillation: f64,
    pub warning: Option<String>,
}

impl GreenKubo {
    fn from_correlations(method: CorrelationMethod, correlations: Vec<f64>) -> Self {
        let lag_max = correlations.len() - 1;
        let mut curve = Vec::with_capacity(correlations.len());
        let mut acc = correlations[0];
        curve.push(acc);
        for c in &correlations[1..] {
            acc += 2.0 * c;
            curve.push(acc);
        }
        let tail = &curve[(3 * lag_max) / 4..];
        let spread = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - tail.iter().copied().fold(f64::INFINITY, f64::min);
        let level = acc.abs().max(1e-3 * correlations[0].abs()).max(f64::MIN_POSITIVE);
        let oscillation = spread / level;
        let warning = (oscillation > OSCILLATION_TOL).then(|| {
            format!(
                "Green–Kubo partial sums move by {:.1}% of their level over the last quarter",
                100.0 * oscillation
            )
        });
        Self {
            method,
            sigma2: acc,
            lag_max,
            correlations,
            curve,
            oscillation,
            warning,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.max(0.0).sqrt()
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("lag,correlation,partial_sum\n");
        for (k, (c, s)) in self.correlations.iter().zip(&self.curve).enumerate() {
            let _ = writeln!(out, "{k},{c},{s}");
        }
        out
    }
}

/// `sigma^2 = int h^2 + 2 sum_{k=1}^{lag_max} <P^k h, h>` by quadrature.
pub fn sigma_green_kubo(op: &TransferOperator, h: &GridFunction, lag_max: usize) -> Result<GreenKubo> {
    crate::decay::check_centered(h)?;
    if lag_max < 1 {
        return Err(Error::InvalidInput("lag_max must be at least 1".to_string()));
    }
    let mut correlations = Vec::with_capacity(lag_max + 1);
    correlations.push(h.inner_product(h)?);
    let mut cur = h.clone();
    for _ in 0..lag_max {
        cur = op.apply(&cur)?;
        correlations.push(cur.inner_product(h)?);
    }
    Ok(GreenKubo::from_correlations(CorrelationMethod::Quadrature, correlations))
}

/// Green–Kubo with correlations averaged along sampled orbits.
///
/// Samples are reduced in fixed chunks of 1024 in index order.
pub fn sigma_green_kubo_mc(
    map: &IntervalMap,
    h: &(dyn Fn(f64) -> f64 + Sync),
    lag_max: usize,
    cfg: &EnsembleConfig,
) -> Result<GreenKubo> {
    if lag_max < 1 {
        return Err(Error::InvalidInput("lag_max must be at least 1".to_string()));
    }
    let cfg = cfg.with_n(lag_max + 1);
    let (rows, _) = per_sample(map, &cfg, |mut orbit| {
        let h0 = h(orbit.value());
        let mut row = Vec::with_capacity(lag_max + 1);
        row.push(h0 * h0);
        for _ in 0..lag_max {
            orbit.advance()?;
            row.push(h0 * h(orbit.value()));
        }
        Ok(row)
    })?;
    let count = rows.len() as f64;
    let mut correlations = vec![0.0; lag_max + 1];
    for chunk in rows.chunks(CHUNK) {
        let mut part = vec![0.0; lag_max + 1];
        for (_, row) in chunk {
            for (p, v) in part.iter_mut().zip(row) {
                *p += v;
            }
        }
        for (c, p) in correlations.iter_mut().zip(part) {
            *c += p;
        }
    }
    for c in &mut correlations {
        *c /= count;
    }
    Ok(GreenKubo::from_correlations(CorrelationMethod::MonteCarlo, correlations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::{MeasureDensity, QuadratureGrid};
    use crate::stats::ks_statistic_fn;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn cos1(y: f64) -> f64 {
        (2.0 * PI * y).cos()
    }

    #[test]
    fn config_validation() {
        let d = IntervalMap::doubling();
        let lsv = IntervalMap::lsv(0.25).unwrap();
        assert!(EnsembleConfig::for_map(&d, 99, 10, 1).validate(&d).is_err());
        assert!(EnsembleConfig::for_map(&d, 100, 0, 1).validate(&d).is_err());
        let mut c = EnsembleConfig::for_map(&lsv, 100, 10, 1);
        assert_eq!(c.mode, SamplerMode::BurnInOrbit);
        c.burn_in = 999;
        assert!(c.validate(&lsv).is_err());
        c.mode = SamplerMode::InverseCdf;
        c.burn_in = 1000;
        assert!(matches!(c.validate(&lsv), Err(Error::Config(_))));
        c.mode = SamplerMode::BitQueue;
        assert!(c.validate(&lsv).is_err());
        assert_eq!("bit-queue".parse::<SamplerMode>().unwrap(), SamplerMode::BitQueue);
        assert!("fast".parse::<SamplerMode>().is_err());
    }

    #[test]
    fn chebyshev_samples_follow_arcsine() {
        let map = IntervalMap::chebyshev(2).unwrap();
        let cfg = EnsembleConfig::for_map(&map, 100_000, 1, 3);
        let ys = sample_invariant(&map, &cfg).unwrap();
        let d = ks_statistic_fn(&ys, |y| 1.0 - y.clamp(-1.0, 1.0).acos() / PI).unwrap();
        assert!(d < 0.006, "{d}");
    }

    #[test]
    fn doubling_samples_are_uniform() {
        let map = IntervalMap::doubling();
        let ys = sample_invariant(&map, &EnsembleConfig::for_map(&map, 20_000, 1, 9)).unwrap();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        assert!((mean - 0.5).abs() < 0.005);
    }

    #[test]
    fn lsv_samples_pile_up_at_zero() {
        let map = IntervalMap::lsv(0.25).unwrap();
        let ys = sample_invariant(&map, &EnsembleConfig::for_map(&map, 5_000, 1, 2)).unwrap();
        let near = ys.iter().filter(|&&y| y < 0.1).count() as f64 / ys.len() as f64;
        assert!(near > 0.1, "{near}");
        let orbit = map.orbit(0.123, 200_000).unwrap();
        let occ = orbit.iter().filter(|&&y| y < 0.1).count() as f64 / orbit.len() as f64;
        assert!((near - occ).abs() < 0.03, "{near} vs {occ}");
    }

    #[test]
    fn trivial_ensembles() {
        let map = IntervalMap::doubling();
        let cfg = EnsembleConfig::for_map(&map, 500, 64, 1);
        let z = birkhoff_ensemble(&map, &|_| 0.0, &cfg).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        let one = birkhoff_ensemble(&map, &cos1, &cfg.with_n(1)).unwrap();
        let mean = one.values.iter().sum::<f64>() / 500.0;
        assert!(mean.abs() < 3.0 * 0.5f64.sqrt() / 500f64.sqrt());
        assert!(one.to_csv().starts_with("sample_index,value\n0,"));
    }

    #[test]
    fn determinism_across_thread_counts() {
        let map = IntervalMap::lsv(0.25).unwrap();
        let cfg = EnsembleConfig::for_map(&map, 300, 200, 42);
        let h = |y: f64| y - 0.4;
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| birkhoff_ensemble(&map, &h, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        let c = birkhoff_ensemble(&map, &h, &EnsembleConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn scaling_is_exact() {
        let map = IntervalMap::doubling();
        let cfg = EnsembleConfig::for_map(&map, 200, 100, 5);
        let a = birkhoff_ensemble(&map, &cos1, &cfg).unwrap();
        let b = birkhoff_ensemble(&map, &|y| -2.0 * cos1(y), &cfg).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| *y == -2.0 * x));
    }

    #[test]
    fn paths_are_consistent() {
        let map = IntervalMap::doubling();
        let cfg = EnsembleConfig::for_map(&map, 300, 256, 8);
        let sigma = 0.5f64.sqrt();
        let paths = path_ensemble(&map, &cos1, sigma, &cfg, 16).unwrap();
        let sums = birkhoff_ensemble(&map, &cos1, &cfg).unwrap();
        let scale = sigma * 16.0;
        for (p, s) in paths.iter().zip(&sums.values) {
            assert_eq!(p.path.len(), 17);
            assert_eq!(p.path[0], 0.0);
            assert_eq!(p.terminal, s / scale);
            assert!(p.sup >= p.grid_sup() && p.sup >= 0.0);
            assert!((0.0..=1.0).contains(&p.occupation));
            assert!((0.0..=1.0).contains(&p.grid_occupation()));
        }
        assert!(path_ensemble(&map, &cos1, 0.0, &cfg, 16).is_err());
        assert!(path_ensemble(&map, &cos1, sigma, &cfg, 15).is_err());
        assert!(paths_to_csv(&paths).starts_with("sample_index,sup,terminal,occupation\n"));
    }

    #[test]
    fn exact_identity_for_annihilated_observable() {
        let map = IntervalMap::doubling();
        let cfg = EnsembleConfig::for_map(&map, 20_000, 256, 1);
        let growth = sigma_variance_growth(&map, &cos1, &[16, 64, 256], &cfg).unwrap();
        for (_, s) in growth {
            assert!((s - 0.5f64.sqrt()).abs() < 0.02 * 0.5f64.sqrt(), "{s}");
        }
    }

    fn uniform_nu(cells: usize) -> Arc<MeasureDensity> {
        let grid = Arc::new(QuadratureGrid::midpoint(0.0, 1.0, cells).unwrap());
        Arc::new(MeasureDensity::uniform(grid).unwrap())
    }

    #[test]
    fn green_kubo_annihilated_and_coboundary() {
        let map = IntervalMap::doubling();
        let nu = uniform_nu(4096);
        let op = TransferOperator::branch_sum(&map, nu.clone()).unwrap();
        let h = GridFunction::from_fn(nu.clone(), cos1).unwrap();
        let gk = sigma_green_kubo(&op, &h, DEFAULT_LAG_MAX).unwrap();
        assert!((gk.sigma2 - 0.5).abs() < 1e-6);
        assert!(gk.warning.is_none());
        let cob = GridFunction::from_fn(nu, |y| (4.0 * PI * y).cos() - cos1(y)).unwrap();
        let gk = sigma_green_kubo(&op, &cob, DEFAULT_LAG_MAX).unwrap();
        assert!(gk.sigma2.abs() < 1e-3, "{}", gk.sigma2);
        assert_eq!(gk.curve.len(), DEFAULT_LAG_MAX + 1);
        assert!(gk.curve_csv().starts_with("lag,correlation,partial_sum\n0,"));
    }

    #[test]
    fn green_kubo_monte_carlo_fallback() {
        let map = IntervalMap::doubling();
        let cfg = EnsembleConfig::for_map(&map, 20_000, 1, 4);
        let gk = sigma_green_kubo_mc(&map, &cos1, 8, &cfg).unwrap();
        assert_eq!(gk.method, CorrelationMethod::MonteCarlo);
        assert!((gk.sigma2 - 0.5).abs() < 0.05, "{}", gk.sigma2);
    }
}
