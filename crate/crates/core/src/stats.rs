//! Kolmogorov–Smirnov machinery and the reference laws of the limit theorems.

use std::f64::consts::{FRAC_2_PI, PI};

use serde::Serialize;

use crate::error::{Error, Result};

pub const SCHEMA: &str = "ergolab/1";
pub const MIN_SAMPLES: usize = 100;

/// Standard normal CDF by the rational approximation of Abramowitz and
/// Stegun 26.2.17, absolute error below 7.5e-8.
pub fn phi(x: f64) -> f64 {
    const P: f64 = 0.231_641_9;
    const B: [f64; 5] = [0.319_381_530, -0.356_563_782, 1.781_477_937, -1.821_255_978, 1.330_274_429];
    if x.is_nan() {
        return f64::NAN;
    }
    let z = x.abs();
    let t = 1.0 / (1.0 + P * z);
    let poly = t * (B[0] + t * (B[1] + t * (B[2] + t * (B[3] + t * B[4]))));
    let tail = (-0.5 * z * z).exp() / (2.0 * PI).sqrt() * poly;
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ReferenceLaw {
    /// `N(0, sigma^2)`; `sigma = 0` is the point mass at 0.
    Normal { sigma: f64 },
    /// Supremum of standard Brownian motion on `[0, 1]`.
    BrownianSup,
    /// Time spent above zero by standard Brownian motion on `[0, 1]`.
    Arcsine,
    PointMass,
}

impl ReferenceLaw {
    pub fn normal(sigma: f64) -> Result<Self> {
        if sigma >= 0.0 && sigma.is_finite() {
            Ok(ReferenceLaw::Normal { sigma })
        } else {
            Err(Error::InvalidInput(format!("sigma must be >= 0, got {sigma}")))
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ReferenceLaw::Normal { sigma } if sigma > 0.0 => phi(x / sigma),
            ReferenceLaw::Normal { .. } | ReferenceLaw::PointMass => f64::from(x >= 0.0),
            ReferenceLaw::BrownianSup => {
                if x <= 0.0 {
                    0.0
                } else {
                    2.0 * phi(x) - 1.0
                }
            }
            ReferenceLaw::Arcsine => FRAC_2_PI * x.clamp(0.0, 1.0).sqrt().asin(),
        }
    }

    fn cdf_left(&self, x: f64) -> f64 {
        match *self {
            ReferenceLaw::Normal { sigma } if sigma > 0.0 => self.cdf(x),
            ReferenceLaw::Normal { .. } | ReferenceLaw::PointMass => f64::from(x > 0.0),
            _ => self.cdf(x),
        }
    }

    fn atoms(&self) -> &'static [f64] {
        match *self {
            ReferenceLaw::Normal { sigma } if sigma > 0.0 => &[],
            ReferenceLaw::Normal { .. } | ReferenceLaw::PointMass => &[0.0],
            _ => &[],
        }
    }
}

fn sorted_samples(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "KS needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("samples contain NaN".to_string()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// `sup |F_emp - F|` for a continuous `cdf`.
pub fn ks_statistic_fn(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let s = sorted_samples(samples)?;
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    }))
}

/// `sup |F_emp - F|`, including jumps of `law` at its atoms.
pub fn ks_statistic(samples: &[f64], law: &ReferenceLaw) -> Result<f64> {
    let s = sorted_samples(samples)?;
    let n = s.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < s.len() {
        let x = s[i];
        let mut j = i;
        while j < s.len() && s[j] == x {
            j += 1;
        }
        d = d
            .max(j as f64 / n - law.cdf(x))
            .max(law.cdf_left(x) - i as f64 / n);
        i = j;
    }
    for &a in law.atoms() {
        let below = s.partition_point(|&v| v < a) as f64 / n;
        let upto = s.partition_point(|&v| v <= a) as f64 / n;
        d = d.max((upto - law.cdf(a)).abs()).max((below - law.cdf_left(a)).abs());
    }
    Ok(d.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitTest {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub samples: usize,
    pub verdict: Verdict,
}

impl LimitTest {
    fn new(name: &str, statistic: f64, threshold: f64, samples: usize) -> Self {
        Self {
            name: name.to_string(),
            statistic,
            threshold,
            samples,
            verdict: Verdict::from_bool(statistic < threshold),
        }
    }
}

pub fn ks_test(name: &str, samples: &[f64], law: &ReferenceLaw, threshold: f64) -> Result<LimitTest> {
    Ok(LimitTest::new(name, ks_statistic(samples, law)?, threshold, samples.len()))
}

/// Pass/fail allowances for the limit tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Multiplier of `1/sqrt(M)`.
    pub ks_coef: f64,
    /// Finite-`n` allowance `c_be / sqrt(n)`.
    pub c_be: f64,
    /// Extra allowance for the sup and occupation functionals.
    pub functional_allowance: f64,
    /// Degenerate case: the 0.99 quantile of `|S_n / sqrt(n)|` must stay below
    /// this multiple of `||h||_2`.
    pub degenerate_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ks_coef: 1.95,
            c_be: 1.0,
            functional_allowance: 0.01,
            degenerate_fraction: 0.05,
        }
    }
}

impl Thresholds {
    pub fn base(&self, samples: usize, n: usize) -> f64 {
        self.ks_coef / (samples as f64).sqrt() + self.c_be / (n as f64).sqrt()
    }
}

/// `q`-quantile by the nearest-rank rule.
pub fn quantile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput("quantile of an empty sample or q outside [0, 1]".to_string()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let k = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len());
    Ok(s[k - 1])
}

/// KS test of `S_n / sqrt(n)` against `N(0, sigma^2)`.
///
/// `sums` are unscaled Birkhoff sums. For `sigma = 0` the limit is the point
/// mass at 0 and the test checks the 0.99 quantile of `|S_n / sqrt(n)|`
/// against a fraction of `h_l2`.
pub fn clt_test(sums: &[f64], n: usize, sigma: f64, h_l2: f64, thr: &Thresholds) -> Result<LimitTest> {
    ReferenceLaw::normal(sigma)?;
    let root = (n as f64).sqrt();
    let scaled: Vec<f64> = sums.iter().map(|s| s / root).collect();
    if sigma == 0.0 {
        let abs: Vec<f64> = scaled.iter().map(|v| v.abs()).collect();
        return Ok(LimitTest::new(
            "clt_degenerate",
            quantile(&abs, 0.99)?,
            thr.degenerate_fraction * h_l2,
            sums.len(),
        ));
    }
    ks_test("clt", &scaled, &ReferenceLaw::Normal { sigma }, thr.base(sums.len(), n))
}

/// Terminal value, supremum and occupation time of the rescaled paths.
pub fn fclt_test(terminal: &[f64], sup: &[f64], occupation: &[f64], n: usize, thr: &Thresholds) -> Result<Vec<LimitTest>> {
    let base = thr.base(terminal.len(), n);
    Ok(vec![
        ks_test("fclt_terminal", terminal, &ReferenceLaw::Normal { sigma: 1.0 }, base)?,
        ks_test("fclt_sup", sup, &ReferenceLaw::BrownianSup, base + thr.functional_allowance)?,
        ks_test(
            "fclt_occupation",
            occupation,
            &ReferenceLaw::Arcsine,
            base + thr.functional_allowance,
        )?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    GreenKubo,
    VarianceGrowth,
    MartingaleNorm,
    /// Supplied by the user.
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaEstimate {
    pub provenance: SigmaSource,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitTestReport {
    pub schema: &'static str,
    pub map: String,
    pub observable: String,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub sigma_estimates: Vec<SigmaEstimate>,
    pub sigma: SigmaEstimate,
    pub thresholds: Thresholds,
    pub tests: Vec<LimitTest>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl LimitTestReport {
    pub fn new(map: &str, observable: &str, n: usize, samples: usize, seed: u64, sigma: SigmaEstimate, thresholds: Thresholds) -> Self {
        Self {
            schema: SCHEMA,
            map: map.to_string(),
            observable: observable.to_string(),
            n,
            samples,
            seed,
            sigma_estimates: vec![sigma],
            sigma,
            thresholds,
            tests: Vec::new(),
            verdict: Verdict::Pass,
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, test: LimitTest) {
        if !test.verdict.passed() {
            self.verdict = Verdict::Fail;
        }
        self.tests.push(test);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `Phi(x)` by composite Simpson integration of the density from 0.
    fn phi_oracle(x: f64) -> f64 {
        let steps = 20_000;
        let h = x / steps as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
        let mut s = pdf(0.0) + pdf(x);
        for i in 1..steps {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(i as f64 * h);
        }
        0.5 + s * h / 3.0
    }

    fn normal_samples(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            })
            .collect()
    }

    #[test]
    fn phi_accuracy() {
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            assert!((phi(x) - phi_oracle(x)).abs() < 1e-7, "x = {x}");
        }
        assert!((phi(0.0) - 0.5).abs() < 1e-9);
        assert!((phi(1.3) + phi(-1.3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reference_laws() {
        assert!((ReferenceLaw::Normal { sigma: 1.0 }.cdf(0.0) - 0.5).abs() < 1e-9);
        assert!((ReferenceLaw::BrownianSup.cdf(1.6449) - 0.90).abs() < 1e-4);
        assert_eq!(ReferenceLaw::BrownianSup.cdf(-1.0), 0.0);
        assert!((ReferenceLaw::Arcsine.cdf(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(ReferenceLaw::Normal { sigma: 0.0 }.cdf(-1e-300), 0.0);
        assert_eq!(ReferenceLaw::Normal { sigma: 0.0 }.cdf(0.0), 1.0);
        assert!(ReferenceLaw::normal(-1.0).is_err());
    }

    #[test]
    fn ks_on_own_law() {
        let m = 100_000;
        let s = normal_samples(m, 11);
        let d = ks_statistic(&s, &ReferenceLaw::Normal { sigma: 1.0 }).unwrap();
        assert!(d < 0.0062, "{d}");
        assert!(d < 1.95 / (m as f64).sqrt());
    }

    #[test]
    fn ks_trivial_cases() {
        let med = vec![0.0; 500];
        let d = ks_statistic(&med, &ReferenceLaw::Normal { sigma: 1.0 }).unwrap();
        assert!((d - 0.5).abs() < 1e-9);
        let below = vec![-1.0; 200];
        assert_eq!(ks_statistic(&below, &ReferenceLaw::Arcsine).unwrap(), 1.0);
        assert_eq!(ks_statistic(&below, &ReferenceLaw::PointMass).unwrap(), 1.0);
        let above = vec![0.5; 200];
        assert_eq!(ks_statistic(&above, &ReferenceLaw::PointMass).unwrap(), 1.0);
        assert_eq!(ks_statistic(&med, &ReferenceLaw::PointMass).unwrap(), 0.0);
        assert!(ks_statistic(&[0.0; 10], &ReferenceLaw::Arcsine).is_err());
        let mut nan = vec![0.0; 200];
        nan[3] = f64::NAN;
        assert!(matches!(ks_statistic(&nan, &ReferenceLaw::Arcsine), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn clt_degenerate_branch() {
        let thr = Thresholds::default();
        let sums: Vec<f64> = (0..1000).map(|i| 1e-3 * ((i % 7) as f64 - 3.0)).collect();
        let t = clt_test(&sums, 100, 0.0, 1.0, &thr).unwrap();
        assert_eq!(t.name, "clt_degenerate");
        assert!(t.verdict.passed());
        let big: Vec<f64> = sums.iter().map(|s| s * 1e4).collect();
        assert!(!clt_test(&big, 100, 0.0, 1.0, &thr).unwrap().verdict.passed());
    }

    #[test]
    fn reflected_paths_fail_terminal() {
        let m = 20_000;
        let s = normal_samples(m, 5);
        let thr = Thresholds::default();
        let ok = ks_test("t", &s, &ReferenceLaw::Normal { sigma: 1.0 }, thr.base(m, 1 << 14)).unwrap();
        assert!(ok.verdict.passed());
        let reflected: Vec<f64> = s.iter().map(|v| v.abs()).collect();
        let bad = ks_test("t", &reflected, &ReferenceLaw::Normal { sigma: 1.0 }, thr.base(m, 1 << 14)).unwrap();
        assert!(!bad.verdict.passed());
        assert!(bad.statistic > 0.45);
    }

    #[test]
    fn report_schema() {
        let sigma = SigmaEstimate {
            provenance: SigmaSource::GreenKubo,
            value: 0.5,
        };
        let mut r = LimitTestReport::new("doubling", "cos1", 16, 100, 7, sigma, Thresholds::default());
        r.push(LimitTest::new("a", 0.01, 0.02, 100));
        assert!(r.verdict.passed());
        r.push(LimitTest::new("b", 0.03, 0.02, 100));
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["schema"], "ergolab/1");
        assert_eq!(v["verdict"], "fail");
        assert_eq!(v["sigma"]["provenance"], "green_kubo");
        assert_eq!(v["tests"][1]["verdict"], "fail");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ks_invariant_under_monotone_maps(seed in any::<u64>(), shift in -2.0f64..2.0, scale in 0.1f64..3.0) {
            let s = normal_samples(300, seed);
            let law = ReferenceLaw::Normal { sigma: 1.0 };
            let d = ks_statistic(&s, &law).unwrap();
            let t: Vec<f64> = s.iter().map(|x| (scale * x + shift).exp()).collect();
            let d2 = ks_statistic_fn(&t, |y| law.cdf((y.ln() - shift) / scale)).unwrap();
            prop_assert!((d - d2).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn clt_verdict_scale_invariant(seed in any::<u64>(), c in prop_oneof![Just(-1.0), Just(2.0), Just(0.5), Just(-4.0)]) {
            let n = 64;
            let s: Vec<f64> = normal_samples(400, seed).iter().map(|x| x * 0.7 * (n as f64).sqrt()).collect();
            let thr = Thresholds::default();
            let a = clt_test(&s, n, 0.7, 1.0, &thr).unwrap();
            let scaled: Vec<f64> = s.iter().map(|x| c * x).collect();
            let b = clt_test(&scaled, n, 0.7 * f64::abs(c), 1.0, &thr).unwrap();
            prop_assert_eq!(a.verdict, b.verdict);
            if c > 0.0 {
                prop_assert!((a.statistic - b.statistic).abs() < 1e-12);
            }
        }
    }
}
