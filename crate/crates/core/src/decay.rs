//! Norm sequences of transfer iterates and heuristic condition flags.
//!
//! Every flag is evidence on a finite range: `pass` means the data are
//! consistent with the condition, `fail` means they point against it, and
//! `unknown` covers the band in between.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::function_space::{GridFunction, Norm};
use crate::transfer::{Backend, TransferOperator};

/// Observables whose mean exceeds this are rejected as uncentered.
pub const CENTERING_TOL: f64 = 1e-6;
pub const DEFAULT_MARGIN: f64 = 0.05;
/// Relative growth over the last quarter below which a series counts as summed.
pub const PLATEAU_TOL: f64 = 0.01;
/// Iterates below this fraction of `||h||_2` are treated as exact zeros.
pub const ZERO_REL: f64 = 1e-9;
pub const DISAGREEMENT_TOL: f64 = 0.10;

/// Default fit window `[8, min(64, n_max)]`.
pub fn default_fit_range(n_max: usize) -> (usize, usize) {
    (8.min(n_max.saturating_sub(1)).max(1), 64.min(n_max))
}

pub(crate) fn check_centered(h: &GridFunction) -> Result<()> {
    let mean = h.integrate()?;
    if mean.abs() > CENTERING_TOL {
        return Err(Error::Precondition(format!(
            "observable is not centered: mean = {mean:e}"
        )));
    }
    Ok(())
}

/// The three sequences, indexed so that entry `n - 1` belongs to `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sequences {
    /// `||P^n h||_1`, n = 1..n_max.
    pub l1: Vec<f64>,
    /// `||P^n h||_2`, n = 1..n_max.
    pub l2: Vec<f64>,
    /// `||sum_{k<n} P^k h||_2`, n = 1..n_max.
    pub cesaro: Vec<f64>,
    pub h_l2: f64,
    pub h_sup: f64,
    /// Largest `||g||_2 - sqrt(||h||_inf ||g||_1)` over the iterates `g`.
    pub interpolation_violation: f64,
}

/// Computes all sequences in one pass over the iterates.
pub fn sequences(op: &TransferOperator, h: &GridFunction, n_max: usize) -> Result<Sequences> {
    check_centered(h)?;
    if n_max < 2 {
        return Err(Error::InvalidInput(format!("n_max must be >= 2, got {n_max}")));
    }
    let h_l2 = h.lp_norm(Norm::L2)?;
    let h_sup = h.lp_norm(Norm::Inf)?;
    let mut l1 = Vec::with_capacity(n_max);
    let mut l2 = Vec::with_capacity(n_max);
    let mut cesaro = Vec::with_capacity(n_max);
    let mut violation = f64::NEG_INFINITY;
    let mut partial = h.clone();
    let mut current = h.clone();
    cesaro.push(h_l2);
    for n in 1..=n_max {
        current = op.apply(&current)?;
        let a = current.lp_norm(Norm::L1)?;
        let b = current.lp_norm(Norm::L2)?;
        violation = violation.max(b - (h_sup * a).sqrt());
        l1.push(a);
        l2.push(b);
        if n < n_max {
            partial = partial.add(&current)?;
            cesaro.push(partial.lp_norm(Norm::L2)?);
        }
    }
    Ok(Sequences {
        l1,
        l2,
        cesaro,
        h_l2,
        h_sup,
        interpolation_violation: violation,
    })
}

/// `[||P^n h||_p]` for n = 1..n_max.
pub fn norm_decay_sequence(op: &TransferOperator, h: &GridFunction, p: Norm, n_max: usize) -> Result<Vec<f64>> {
    let s = sequences(op, h, n_max)?;
    match p {
        Norm::L1 => Ok(s.l1),
        Norm::L2 => Ok(s.l2),
        Norm::Inf => Err(Error::InvalidInput("decay sequences use p = 1 or 2".to_string())),
    }
}

/// `[||sum_{k<n} P^k h||_2]` for n = 1..n_max; the first entry is `||h||_2`.
pub fn cesaro_norm_sequence(op: &TransferOperator, h: &GridFunction, n_max: usize) -> Result<Vec<f64>> {
    Ok(sequences(op, h, n_max)?.cesaro)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub exponent: f64,
    pub intercept: f64,
    pub max_log_residual: f64,
    pub range: (usize, usize),
}

/// Least-squares line through `(ln n, ln seq_n)` for `n` in `range`
/// (inclusive, 1-based).
pub fn fit_polynomial_rate(seq: &[f64], range: (usize, usize)) -> Result<RateFit> {
    let (lo, hi) = range;
    if lo < 1 || hi > seq.len() || hi <= lo {
        return Err(Error::Fit(format!(
            "range [{lo}, {hi}] is not inside [1, {}] with at least two points",
            seq.len()
        )));
    }
    let pts: Vec<(f64, f64)> = (lo..=hi)
        .map(|n| {
            let v = seq[n - 1];
            if v > 0.0 && v.is_finite() {
                Ok(((n as f64).ln(), v.ln()))
            } else {
                Err(Error::Fit(format!("entry {n} is {v}, not strictly positive")))
            }
        })
        .collect::<Result<_>>()?;
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let max_log_residual = pts
        .iter()
        .map(|p| (p.1 - intercept - exponent * p.0).abs())
        .fold(0.0, f64::max);
    Ok(RateFit {
        exponent,
        intercept,
        max_log_residual,
        range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Pass,
    Fail,
    Unknown,
}

impl Flag {
    /// Pass strictly below `pass_below`, fail strictly above `fail_above`.
    fn banded(value: f64, pass_below: f64, fail_above: f64) -> Self {
        if value < pass_below {
            Flag::Pass
        } else if value > fail_above {
            Flag::Fail
        } else {
            Flag::Unknown
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConditionFlags {
    /// `||P^n h||_2 = O(n^-beta)` with `beta > 1/2`.
    pub thm1_beta_gt_half: Flag,
    /// `sum n^(-3/2) ||sum_{k<n} P^k h||_2 < inf`.
    pub thm31_summable: Flag,
    /// `sum n^(-1/2) ||P^n h||_2 < inf`.
    pub cor32_summable: Flag,
    /// `||sum_{k<n} P^k h||_2 = O(n^alpha)` with `alpha < 1/2`.
    pub thm33_alpha_lt_half: Flag,
    /// `||sum_{k<n} P^k h||_2 = O(1)`.
    pub coboundary_bounded: Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fits {
    /// `None` when the iterates vanish on the fit range.
    pub l1: Option<RateFit>,
    pub l2: Option<RateFit>,
    pub cesaro: Option<RateFit>,
    /// Relative growth of `sum n^(-1/2) ||P^n h||_2` over the last quarter.
    pub cor32_increment: f64,
    /// Relative growth of `sum n^(-3/2) ||sum_{k<n} P^k h||_2` over the last quarter.
    pub thm31_increment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifyConfig {
    pub fit_range: (usize, usize),
    pub margin: f64,
}

impl ClassifyConfig {
    pub fn for_n_max(n_max: usize) -> Self {
        Self {
            fit_range: default_fit_range(n_max),
            margin: DEFAULT_MARGIN,
        }
    }
}

/// Relative increase of the partial sums of `terms` over the last quarter.
fn last_quarter_increment(terms: impl Iterator<Item = f64>) -> f64 {
    let partial: Vec<f64> = terms
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    let n = partial.len();
    let total = partial[n - 1];
    if total <= 0.0 {
        return 0.0;
    }
    let q = (3 * n) / 4;
    let before = if q == 0 { 0.0 } else { partial[q - 1] };
    (total - before) / total
}

/// Sets the condition flags from the sequences.
///
/// The `thm31` flag also passes whenever `thm33` passes: a Cesàro growth
/// exponent below 1/2 makes `sum n^(alpha - 3/2)` converge, which the finite
/// plateau test can miss for `alpha` close to 1/2.
pub fn classify_conditions(s: &Sequences, cfg: &ClassifyConfig) -> Result<(Fits, ConditionFlags, Vec<String>)> {
    let n_max = s.l2.len();
    if n_max < 32 {
        return Err(Error::InvalidInput(format!(
            "classification needs n_max >= 32, got {n_max}"
        )));
    }
    let (lo, hi) = cfg.fit_range;
    if lo < 1 || hi > n_max || hi <= lo {
        return Err(Error::Fit(format!("fit range [{lo}, {hi}] outside [1, {n_max}]")));
    }
    let m = cfg.margin;
    let zero = ZERO_REL * s.h_l2.max(f64::MIN_POSITIVE);
    let mut notes = Vec::new();

    let vanishes = |seq: &[f64]| seq[lo - 1..hi].iter().all(|&v| v <= zero);
    let fit_or_none = |seq: &[f64], name: &str, notes: &mut Vec<String>| -> Result<Option<RateFit>> {
        if vanishes(seq) {
            notes.push(format!("{name}: iterates vanish on the fit range (decay exponent -inf)"));
            Ok(None)
        } else {
            fit_polynomial_rate(seq, cfg.fit_range).map(Some)
        }
    };
    let l1 = fit_or_none(&s.l1, "l1", &mut notes)?;
    let l2 = fit_or_none(&s.l2, "l2", &mut notes)?;
    let cesaro = if s.h_l2 == 0.0 {
        notes.push("h vanishes identically".to_string());
        None
    } else {
        Some(fit_polynomial_rate(&s.cesaro, cfg.fit_range)?)
    };

    let thm1 = match &l2 {
        None => Flag::Pass,
        Some(f) => Flag::banded(f.exponent, -0.5 - m, -0.5 + m),
    };
    let cor32_increment =
        last_quarter_increment(s.l2.iter().enumerate().map(|(i, v)| v / ((i + 1) as f64).sqrt()));
    let cor32 = if l2.is_none() || cor32_increment < PLATEAU_TOL {
        Flag::Pass
    } else if thm1 == Flag::Fail {
        Flag::Fail
    } else {
        Flag::Unknown
    };
    let (thm33, bounded) = match &cesaro {
        None => (Flag::Pass, Flag::Pass),
        Some(f) => (
            Flag::banded(f.exponent, 0.5 - m, 0.5 + m),
            Flag::banded(f.exponent, m, 3.0 * m),
        ),
    };
    let thm31_increment =
        last_quarter_increment(s.cesaro.iter().enumerate().map(|(i, v)| v / ((i + 1) as f64).powf(1.5)));
    let thm31 = if thm31_increment < PLATEAU_TOL {
        Flag::Pass
    } else if thm33 == Flag::Pass {
        notes.push("thm31 inferred from thm33 (alpha < 1/2 implies the series converges)".to_string());
        Flag::Pass
    } else if thm33 == Flag::Fail {
        Flag::Fail
    } else {
        Flag::Unknown
    };
    for (name, fit) in [("l1", &l1), ("l2", &l2), ("cesaro", &cesaro)] {
        if let Some(f) = fit {
            if f.max_log_residual > 0.5 {
                notes.push(format!(
                    "{name}: poor power-law fit (max log residual {:.3})",
                    f.max_log_residual
                ));
            }
        }
    }
    Ok((
        Fits {
            l1,
            l2,
            cesaro,
            cor32_increment,
            thm31_increment,
        },
        ConditionFlags {
            thm1_beta_gt_half: thm1,
            thm31_summable: thm31,
            cor32_summable: cor32,
            thm33_alpha_lt_half: thm33,
            coboundary_bounded: bounded,
        },
        notes,
    ))
}

/// One backend's sequences, fits and flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendDecay {
    pub backend: Backend,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub cesaro: Vec<f64>,
    pub fits: Fits,
    pub flags: ConditionFlags,
    pub interpolation_violation: f64,
    pub notes: Vec<String>,
}

impl BackendDecay {
    pub fn compute(op: &TransferOperator, h: &GridFunction, n_max: usize, cfg: &ClassifyConfig) -> Result<Self> {
        let s = sequences(op, h, n_max)?;
        let (fits, flags, notes) = classify_conditions(&s, cfg)?;
        Ok(Self {
            backend: op.backend(),
            interpolation_violation: s.interpolation_violation,
            l1: s.l1,
            l2: s.l2,
            cesaro: s.cesaro,
            fits,
            flags,
            notes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub backend: Backend,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub cesaro: Vec<f64>,
    pub fits: Fits,
    pub flags: ConditionFlags,
    /// Largest relative gap between the two `||P^n h||_2` sequences on the fit range.
    pub l2_disagreement: f64,
    pub disagrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub map: String,
    pub observable: String,
    pub backend: Backend,
    pub n_max: usize,
    pub margin: f64,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub cesaro: Vec<f64>,
    pub fits: Fits,
    pub flags: ConditionFlags,
    pub interpolation_violation: f64,
    pub cross_check: Option<CrossCheck>,
    pub notes: Vec<String>,
}

impl DecayReport {
    pub fn new(map: &str, observable: &str, primary: BackendDecay, cross: Option<BackendDecay>, cfg: &ClassifyConfig) -> Self {
        let n_max = primary.l2.len();
        let mut notes = primary.notes;
        let cross_check = cross.map(|c| {
            let (lo, hi) = cfg.fit_range;
            let zero = ZERO_REL * primary.cesaro[0].max(f64::MIN_POSITIVE);
            let gap = (lo - 1..hi.min(c.l2.len()))
                .filter(|&i| primary.l2[i] > zero || c.l2[i] > zero)
                .map(|i| (primary.l2[i] - c.l2[i]).abs() / primary.l2[i].max(c.l2[i]))
                .fold(0.0, f64::max);
            let disagrees = gap > DISAGREEMENT_TOL;
            if disagrees {
                notes.push(format!(
                    "backends {} and {} disagree by {:.1}% on ||P^n h||_2",
                    primary.backend,
                    c.backend,
                    100.0 * gap
                ));
            }
            CrossCheck {
                backend: c.backend,
                l1: c.l1,
                l2: c.l2,
                cesaro: c.cesaro,
                fits: c.fits,
                flags: c.flags,
                l2_disagreement: gap,
                disagrees,
            }
        });
        Self {
            map: map.to_string(),
            observable: observable.to_string(),
            backend: primary.backend,
            n_max,
            margin: cfg.margin,
            l1: primary.l1,
            l2: primary.l2,
            cesaro: primary.cesaro,
            fits: primary.fits,
            flags: primary.flags,
            interpolation_violation: primary.interpolation_violation,
            cross_check,
            notes,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plot data `n,l1,l2,cesaro`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,l1,l2,cesaro\n");
        for i in 0..self.n_max {
            let _ = writeln!(out, "{},{},{},{}", i + 1, self.l1[i], self.l2[i], self.cesaro[i]);
        }
        out
    }
}
