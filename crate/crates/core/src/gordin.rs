//! Resolvent martingale approximation and coboundary detection.
//!
//! For `eps > 0` the resolvent `f_eps = sum_{k>=1} P^(k-1) h / (1+eps)^k`
//! solves `(1+eps) f - P f = h`, and `h_eps = f_eps - U P f_eps` satisfies
//! `P h_eps = 0`. As `eps -> 0` along `2^-k` the `h_eps` form a Cauchy
//! sequence whose limit is the martingale part `h~`.

use std::sync::Arc;

use serde::Serialize;

use crate::decay::{self, ClassifyConfig, ConditionFlags, Flag};
use crate::error::{Error, Result};
use crate::function_space::{same_measure, GridFunction, MeasureDensity, Norm};
use crate::maps::IntervalMap;
use crate::transfer::{KoopmanOperator, TransferOperator};

/// Hard cap on the number of resolvent terms.
pub const MAX_TERMS: usize = 100_000;
pub const DEFAULT_K_MAX: usize = 12;
/// Default series tolerance relative to `||h||_2`.
pub const DEFAULT_REL_TAIL_TOL: f64 = 1e-6;
pub const DEFAULT_MARTINGALE_TOL: f64 = 5e-3;
/// Pairs whose Cauchy slack falls below this count as violations.
pub const CAUCHY_SLACK_FLOOR: f64 = -1e-8;
/// Allowed relative growth between consecutive Cauchy increments.
pub const HISTORY_SLACK: f64 = 0.10;
pub const DEFAULT_COBOUNDARY_TERMS: usize = 256;
pub const DEFAULT_COBOUNDARY_TOL: f64 = 1e-3;

/// A transfer operator and the Koopman operator on the same measure.
#[derive(Debug, Clone)]
pub struct Operators {
    pub transfer: TransferOperator,
    pub koopman: KoopmanOperator,
}

impl Operators {
    pub fn new(map: &IntervalMap, measure: Arc<MeasureDensity>) -> Result<Self> {
        Ok(Self {
            transfer: TransferOperator::branch_sum(map, measure.clone())?,
            koopman: KoopmanOperator::new(map, measure)?,
        })
    }

    pub fn from_parts(transfer: TransferOperator, koopman: KoopmanOperator) -> Result<Self> {
        if !same_measure(transfer.measure(), koopman.measure()) {
            return Err(Error::IncompatibleGrids(
                "transfer and Koopman operators use different measures".to_string(),
            ));
        }
        Ok(Self { transfer, koopman })
    }

    pub fn measure(&self) -> &Arc<MeasureDensity> {
        self.transfer.measure()
    }
}

/// A truncated resolvent series.
#[derive(Debug, Clone)]
pub struct Resolvent {
    pub epsilon: f64,
    pub f: GridFunction,
    /// Number of series terms summed.
    pub terms: usize,
    /// Upper bound on the L2 norm of the discarded tail.
    pub tail_bound: f64,
}

impl Resolvent {
    /// `||(1+eps) f - P f - h||_2`.
    pub fn identity_residual(&self, ops: &Operators, h: &GridFunction) -> Result<f64> {
        let pf = ops.transfer.apply(&self.f)?;
        self.f
            .combine(1.0 + self.epsilon, &pf, -1.0)?
            .sub(h)?
            .lp_norm(Norm::L2)
    }
}

/// `f_eps` for several `eps` at once, sharing the iterates `P^k h`.
///
/// Each series stops at the first `K` whose tail bound drops below
/// `tail_tol`. The bound is the smaller of `||h||_2 (1+eps)^-K / eps` and the
/// same expression with `||P^K h||_inf`, which lets exactly annihilated
/// observables stop after one term.
pub fn resolvents(ops: &Operators, h: &GridFunction, epsilons: &[f64], tail_tol: f64) -> Result<Vec<Resolvent>> {
    decay::check_centered(h)?;
    if let Some(&e) = epsilons.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidInput(format!("resolvent parameter must be positive, got {e}")));
    }
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidInput(format!("tail tolerance must be positive, got {tail_tol}")));
    }
    let n = h.values().len();
    let h_l2 = h.lp_norm(Norm::L2)?;
    let mut sums = vec![vec![0.0; n]; epsilons.len()];
    let mut weights = vec![1.0; epsilons.len()];
    let mut done: Vec<Option<(usize, f64)>> = vec![None; epsilons.len()];
    let mut current = h.values().to_vec();
    let mut next = vec![0.0; n];
    let mut last_bounds = vec![f64::INFINITY; epsilons.len()];
    for k in 1..=MAX_TERMS {
        ops.transfer.apply_values(&current, &mut next);
        let sup_next = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (j, &eps) in epsilons.iter().enumerate() {
            if done[j].is_some() {
                continue;
            }
            weights[j] /= 1.0 + eps;
            let w = weights[j];
            for (s, c) in sums[j].iter_mut().zip(&current) {
                *s += w * c;
            }
            let bound = h_l2.min(sup_next) * w / eps;
            last_bounds[j] = bound;
            if bound < tail_tol {
                done[j] = Some((k, bound));
            }
        }
        if done.iter().all(Option::is_some) {
            break;
        }
        std::mem::swap(&mut current, &mut next);
    }
    if let Some(j) = done.iter().position(Option::is_none) {
        let eps = epsilons[j];
        let needed = ((h_l2 / (eps * tail_tol)).ln() / (1.0 + eps).ln()).ceil();
        return Err(Error::Truncation {
            needed,
            cap: MAX_TERMS,
            achievable: last_bounds[j],
        });
    }
    Ok(epsilons
        .iter()
        .zip(sums)
        .zip(done)
        .map(|((&epsilon, values), d)| {
            let (terms, tail_bound) = d.expect("all series finished");
            Resolvent {
                epsilon,
                f: GridFunction::from_raw(h.measure().clone(), values),
                terms,
                tail_bound,
            }
        })
        .collect())
}

pub fn resolvent(ops: &Operators, h: &GridFunction, epsilon: f64, tail_tol: f64) -> Result<Resolvent> {
    Ok(resolvents(ops, h, &[epsilon], tail_tol)?.remove(0))
}

/// `h_eps = f_eps - U P f_eps` together with `P f_eps`.
fn split(ops: &Operators, r: &Resolvent) -> Result<(GridFunction, GridFunction)> {
    let pf = ops.transfer.apply(&r.f)?;
    let upf = ops.koopman.apply(&pf)?;
    Ok((r.f.sub(&upf)?, pf))
}

pub fn martingale_part(ops: &Operators, h: &GridFunction, epsilon: f64, tail_tol: f64) -> Result<GridFunction> {
    let r = resolvent(ops, h, epsilon, tail_tol)?;
    Ok(split(ops, &r)?.0)
}

/// `||h - h_eps - eps f_eps - (U P f_eps - P f_eps)||_2`.
pub fn decomposition_residual(ops: &Operators, h: &GridFunction, r: &Resolvent) -> Result<f64> {
    let (h_eps, pf) = split(ops, r)?;
    let upf = ops.koopman.apply(&pf)?;
    h.sub(&h_eps)?
        .combine(1.0, &r.f, -r.epsilon)?
        .sub(&upf)?
        .add(&pf)?
        .lp_norm(Norm::L2)
}

/// `|<h, U^n g>|`, which vanishes for `n >= 1` when `P h = 0`.
pub fn orthogonality_defect(ops: &Operators, h: &GridFunction, g: &GridFunction, n: usize) -> Result<f64> {
    let mut ug = g.clone();
    for _ in 0..n {
        ug = ops.koopman.apply(&ug)?;
    }
    Ok(h.inner_product(&ug)?.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GordinConfig {
    pub k_max: usize,
    /// Absolute series tolerance; `None` means `DEFAULT_REL_TAIL_TOL * ||h||_2`.
    pub tail_tol: Option<f64>,
    pub martingale_tol: f64,
}

impl Default for GordinConfig {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            tail_tol: None,
            martingale_tol: DEFAULT_MARTINGALE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoboundaryVerdict {
    Coboundary,
    NotCoboundary,
    /// The residual test and the bounded-Cesàro test disagree.
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct Coboundary {
    pub verdict: CoboundaryVerdict,
    pub is_coboundary: bool,
    /// `||U f - f - h||_2`.
    pub residual: f64,
    pub tol: f64,
    pub n_max: usize,
    pub cesaro_bounded: Flag,
    pub cesaro_exponent: Option<f64>,
    pub cesaro_max: f64,
    #[serde(skip)]
    pub f: GridFunction,
}

/// Tests `h = f o T - f` with `f = P sum_{k=0}^{n_max} P^k h`.
pub fn coboundary_detect(ops: &Operators, h: &GridFunction, n_max: usize, tol: f64) -> Result<Coboundary> {
    decay::check_centered(h)?;
    if n_max < 32 {
        return Err(Error::InvalidInput(format!(
            "coboundary detection needs at least 32 terms, got {n_max}"
        )));
    }
    let seq = decay::sequences(&ops.transfer, h, n_max)?;
    let (fits, flags, _) = decay::classify_conditions(&seq, &ClassifyConfig::for_n_max(n_max))?;
    let mut sum = h.clone();
    let mut cur = h.clone();
    for _ in 0..n_max {
        cur = ops.transfer.apply(&cur)?;
        sum = sum.add(&cur)?;
    }
    let f = ops.transfer.apply(&sum)?;
    let residual = ops.koopman.apply(&f)?.sub(&f)?.sub(h)?.lp_norm(Norm::L2)?;
    let residual_ok = residual < tol;
    let bounded = flags.coboundary_bounded == Flag::Pass;
    let verdict = match (residual_ok, bounded) {
        (true, true) => CoboundaryVerdict::Coboundary,
        (false, false) => CoboundaryVerdict::NotCoboundary,
        _ => CoboundaryVerdict::Indeterminate,
    };
    Ok(Coboundary {
        verdict,
        is_coboundary: residual_ok && bounded,
        residual,
        tol,
        n_max,
        cesaro_bounded: flags.coboundary_bounded,
        cesaro_exponent: fits.cesaro.map(|c| c.exponent),
        cesaro_max: seq.cesaro.iter().copied().fold(0.0, f64::max),
        f,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GordinDecomposition {
    /// `delta_k = 2^-k`, k = 1..k_max.
    pub epsilons: Vec<f64>,
    pub terms: Vec<usize>,
    pub tail_tol: f64,
    pub f_norms: Vec<f64>,
    /// Largest `||(1+eps) f - P f - h||_2` over the schedule.
    pub resolvent_residual: f64,
    /// `||P h_eps||_2` for each `eps`.
    pub annihilation_residuals: Vec<f64>,
    /// `||h_{delta_k} - h_{delta_(k-1)}||_2`, k = 2..k_max.
    pub cauchy_history: Vec<f64>,
    /// Smallest `(a+b)(||f_a||^2 + ||f_b||^2) - ||h_a - h_b||^2` over all pairs.
    pub cauchy_min_slack: f64,
    pub cauchy_violations: usize,
    /// `||P h~||_2`.
    pub martingale_residual: f64,
    pub martingale_tol: f64,
    /// `||h~||_2`.
    pub sigma_mart: f64,
    pub coboundary: Option<Coboundary>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    h_tilde: GridFunction,
    #[serde(skip)]
    f_final: GridFunction,
}

impl GordinDecomposition {
    /// The martingale part `h~`, taken as the last `h_eps`.
    pub fn h_tilde(&self) -> &GridFunction {
        &self.h_tilde
    }

    pub fn f_final(&self) -> &GridFunction {
        &self.f_final
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn gordin_decompose(
    ops: &Operators,
    h: &GridFunction,
    cfg: &GordinConfig,
    flags: Option<&ConditionFlags>,
) -> Result<GordinDecomposition> {
    if cfg.k_max < 1 {
        return Err(Error::InvalidInput("k_max must be at least 1".to_string()));
    }
    let mut warnings = Vec::new();
    if let Some(f) = flags {
        if f.thm31_summable != Flag::Pass {
            warnings.push(format!(
                "summability of the Cesàro norms is not established (flag {:?}); h_eps may not converge",
                f.thm31_summable
            ));
        }
    }
    let h_l2 = h.lp_norm(Norm::L2)?;
    let tail_tol = cfg
        .tail_tol
        .unwrap_or(DEFAULT_REL_TAIL_TOL * h_l2)
        .max(f64::MIN_POSITIVE);
    let epsilons: Vec<f64> = (1..=cfg.k_max).map(|k| 0.5f64.powi(k as i32)).collect();
    let rs = resolvents(ops, h, &epsilons, tail_tol)?;

    let mut hs = Vec::with_capacity(rs.len());
    let mut f_sq = Vec::with_capacity(rs.len());
    let mut annihilation = Vec::with_capacity(rs.len());
    let mut resolvent_residual = 0.0f64;
    for r in &rs {
        resolvent_residual = resolvent_residual.max(r.identity_residual(ops, h)?);
        let (h_eps, _) = split(ops, r)?;
        annihilation.push(ops.transfer.apply(&h_eps)?.lp_norm(Norm::L2)?);
        f_sq.push(r.f.lp_norm(Norm::L2)?.powi(2));
        hs.push(h_eps);
    }

    let mut cauchy_history = Vec::with_capacity(hs.len().saturating_sub(1));
    let mut min_slack = f64::INFINITY;
    let mut violations = 0;
    for i in 0..hs.len() {
        for j in i + 1..hs.len() {
            let d = hs[i].sub(&hs[j])?.lp_norm(Norm::L2)?;
            if j == i + 1 {
                cauchy_history.push(d);
            }
            let slack = (epsilons[i] + epsilons[j]) * (f_sq[i] + f_sq[j]) - d * d;
            min_slack = min_slack.min(slack);
            if slack < CAUCHY_SLACK_FLOOR {
                violations += 1;
            }
        }
    }
    if violations > 0 {
        warnings.push(format!("Cauchy bound violated on {violations} pairs (min slack {min_slack:e})"));
    }
    if let Some(k) = cauchy_history
        .windows(2)
        .position(|w| w[1] > (1.0 + HISTORY_SLACK) * w[0])
    {
        warnings.push(format!(
            "Cauchy increments grow at k = {}; the approximation may diverge",
            k + 3
        ));
    }
    let last = hs.len() - 1;
    let h_tilde = hs.swap_remove(last);
    let martingale_residual = annihilation[last];
    if martingale_residual >= cfg.martingale_tol {
        warnings.push(format!(
            "||P h~||_2 = {martingale_residual:e} exceeds the tolerance {:e}",
            cfg.martingale_tol
        ));
    }
    let sigma_mart = h_tilde.lp_norm(Norm::L2)?;
    Ok(GordinDecomposition {
        terms: rs.iter().map(|r| r.terms).collect(),
        f_norms: f_sq.iter().map(|v| v.sqrt()).collect(),
        f_final: rs[last].f.clone(),
        epsilons,
        tail_tol,
        resolvent_residual,
        annihilation_residuals: annihilation,
        cauchy_history,
        cauchy_min_slack: if min_slack.is_finite() { min_slack } else { 0.0 },
        cauchy_violations: violations,
        martingale_residual,
        martingale_tol: cfg.martingale_tol,
        sigma_mart,
        coboundary: None,
        warnings,
        h_tilde,
    })
}
