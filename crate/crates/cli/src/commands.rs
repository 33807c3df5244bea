//! Command implementations. Each writes its outputs under the run's output
//! directory and reports whether its verdicts passed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use ergolab_core::decay::{BackendDecay, ClassifyConfig, ConditionFlags, DecayReport};
use ergolab_core::gordin::{
    coboundary_detect, gordin_decompose, Coboundary, CoboundaryVerdict, GordinConfig, GordinDecomposition,
    Operators, DEFAULT_COBOUNDARY_TERMS, DEFAULT_COBOUNDARY_TOL,
};
use ergolab_core::montecarlo::{
    path_grid, paths_to_csv, sigma_green_kubo, simulate, EnsembleConfig, GreenKubo, Simulation,
};
use ergolab_core::observable::{BoundObservable, Observable};
use ergolab_core::stats::{
    clt_test, fclt_test, LimitTestReport, SigmaEstimate, SigmaSource, Thresholds, Verdict, SCHEMA,
};
use ergolab_core::transfer::ulam::{ulam_matrix, DEFAULT_TOL};
use ergolab_core::transfer::invariant_measure;
use ergolab_core::{
    Backend, DensityKind, Error, GridFunction, IntervalMap, KoopmanOperator, MeasureDensity, Norm, QuadratureGrid,
    Result, TransferOperator,
};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

pub type Outcome = std::result::Result<Verdict, Failure>;

trait Staged<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> Staged<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

/// Below this fraction of `||h||_2` a σ estimate is treated as a possible
/// coboundary.
const SMALL_SIGMA: f64 = 0.05;

pub struct Output {
    dir: PathBuf,
    command: String,
    threads: usize,
}

impl Output {
    pub fn new(dir: &Path, command: &str, threads: usize) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            threads,
        })
    }

    pub fn write(&self, name: &str, content: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), content)?;
        Ok(())
    }

    /// Writes `name` and a `.meta.json` sidecar with run-dependent metadata.
    pub fn write_json(&self, name: &str, content: &str) -> Result<()> {
        self.write(name, content)?;
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = json!({
            "command": self.command,
            "created_unix": created,
            "threads": self.threads,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let stem = name.strip_suffix(".json").unwrap_or(name);
        self.write(&format!("{stem}.meta.json"), &serde_json::to_string_pretty(&meta)?)
    }
}

/// Map, measure and bound observable shared by the analyses.
struct Setup {
    map: IntervalMap,
    measure: Arc<MeasureDensity>,
    iterations: usize,
    transfer: TransferOperator,
}

fn setup(cfg: &RunConfig, backend: Backend) -> Result<Setup> {
    let map = IntervalMap::builtin(&cfg.map)?;
    match backend {
        Backend::BranchSum => {
            let (lo, hi) = map.domain();
            let grid = Arc::new(QuadratureGrid::midpoint(lo, hi, cfg.cells)?);
            let (m, iterations) = invariant_measure(&map, grid, cfg.oversample, DEFAULT_TOL)?;
            let measure = Arc::new(m);
            let transfer = TransferOperator::branch_sum(&map, measure.clone())?;
            Ok(Setup {
                map,
                measure,
                iterations,
                transfer,
            })
        }
        Backend::Ulam => {
            let (transfer, iterations) = TransferOperator::ulam(&map, cfg.cells, DEFAULT_TOL)?;
            Ok(Setup {
                measure: transfer.measure().clone(),
                map,
                iterations,
                transfer,
            })
        }
    }
}

fn bind(cfg: &RunConfig, s: &Setup) -> Result<(BoundObservable, GridFunction, Option<String>)> {
    let bound = Observable::parse(cfg.require_obs()?)?.bind(&s.map, &s.measure)?;
    let h = bound.on_grid(s.measure.clone())?;
    let note = (bound.shift() != 0.0 || bound.c() != 0.0).then(|| {
        format!(
            "observable centered: c = {:e}, subtracted mean {:e}",
            bound.c(),
            bound.shift()
        )
    });
    Ok((bound, h, note))
}

fn ensemble_config(cfg: &RunConfig, map: &IntervalMap, seed: u64) -> EnsembleConfig {
    let mut e = EnsembleConfig::for_map(map, cfg.samples, cfg.n, seed);
    e.burn_in = cfg.burnin;
    if let Some(mode) = cfg.sampler {
        e.mode = mode;
    }
    e
}

pub fn density(cfg: &RunConfig, out: &Output) -> Outcome {
    let map = IntervalMap::builtin(&cfg.map).stage("config")?;
    let (m, iterations, method) = match cfg.backend {
        Backend::Ulam => {
            let u = ulam_matrix(&map, cfg.cells).stage("density")?;
            let (m, it) = u.invariant_density(DEFAULT_TOL).stage("density")?;
            (m, it, "ulam")
        }
        Backend::BranchSum => {
            let (lo, hi) = map.domain();
            let grid = Arc::new(QuadratureGrid::midpoint(lo, hi, cfg.cells).stage("config")?);
            let (m, it) = invariant_measure(&map, grid, cfg.oversample, DEFAULT_TOL).stage("density")?;
            let method = match m.kind() {
                DensityKind::ClosedForm => "closed_form",
                DensityKind::NumericallyEstimated => "ulam_oversampled",
            };
            (m, it, method)
        }
    };
    let report = json!({
        "schema": SCHEMA,
        "map": map.name(),
        "cells": cfg.cells,
        "method": method,
        "oversample": if method == "ulam_oversampled" { cfg.oversample } else { 1 },
        "kind": m.kind(),
        "iterations": iterations,
        "total_mass": m.total_mass(),
        "left_tail": m.left_tail(),
        "right_tail": m.right_tail(),
    });
    let mut dat = String::from("# x density\n");
    for (x, v) in m.grid().nodes().iter().zip(m.values()) {
        let _ = writeln!(dat, "{x} {v}");
    }
    (|| {
        out.write("density.csv", &m.to_csv())?;
        out.write("density.dat", &dat)?;
        out.write_json("density.json", &serde_json::to_string_pretty(&report)?)
    })()
    .stage("output")?;
    Ok(Verdict::Pass)
}

fn decay_report(cfg: &RunConfig, s: &Setup, h: &GridFunction, note: Option<String>) -> Result<DecayReport> {
    let ccfg = ClassifyConfig::for_n_max(cfg.n_max);
    let primary = BackendDecay::compute(&s.transfer, h, cfg.n_max, &ccfg)?;
    let cross = if cfg.cross_check {
        let other = match s.transfer.backend() {
            Backend::BranchSum => Backend::Ulam,
            Backend::Ulam => Backend::BranchSum,
        };
        let s2 = setup(cfg, other)?;
        let (_, h2, _) = bind(cfg, &s2)?;
        Some(BackendDecay::compute(&s2.transfer, &h2, cfg.n_max, &ccfg)?)
    } else {
        None
    };
    let mut report = DecayReport::new(&s.map.name(), cfg.require_obs()?, primary, cross, &ccfg);
    report.notes.extend(note);
    Ok(report)
}

pub fn decay(cfg: &RunConfig, out: &Output) -> Outcome {
    let s = setup(cfg, cfg.backend).stage("density")?;
    let (_, h, note) = bind(cfg, &s).stage("observable")?;
    let report = decay_report(cfg, &s, &h, note).stage("decay")?;
    let mut dat = String::from("# n l1 l2 cesaro\n");
    for i in 0..report.n_max {
        let _ = writeln!(dat, "{} {} {} {}", i + 1, report.l1[i], report.l2[i], report.cesaro[i]);
    }
    (|| {
        out.write("decay.csv", &report.to_csv())?;
        out.write("decay.dat", &dat)?;
        out.write_json("decay.json", &report.to_json()?)
    })()
    .stage("output")?;
    Ok(Verdict::Pass)
}

fn operators(s: &Setup) -> Result<Operators> {
    Operators::from_parts(s.transfer.clone(), KoopmanOperator::new(&s.map, s.measure.clone())?)
}

fn run_gordin(cfg: &RunConfig, s: &Setup, h: &GridFunction, flags: &ConditionFlags) -> Result<GordinDecomposition> {
    let ops = operators(s)?;
    let gcfg = GordinConfig {
        k_max: cfg.k_max,
        ..GordinConfig::default()
    };
    let mut d = gordin_decompose(&ops, h, &gcfg, Some(flags))?;
    d.coboundary = Some(coboundary_detect(&ops, h, DEFAULT_COBOUNDARY_TERMS, DEFAULT_COBOUNDARY_TOL)?);
    Ok(d)
}

pub fn gordin(cfg: &RunConfig, out: &Output) -> Outcome {
    let s = setup(cfg, cfg.backend).stage("density")?;
    let (_, h, _) = bind(cfg, &s).stage("observable")?;
    let flags = decay_report(cfg, &s, &h, None).stage("decay")?.flags;
    let d = run_gordin(cfg, &s, &h, &flags).stage("gordin")?;
    out.write_json("gordin.json", &d.to_json().stage("output")?)
        .stage("output")?;
    Ok(Verdict::Pass)
}

/// Lengths at which `sigma_n` is estimated: n/16, n/4, n.
fn growth_lengths(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [n / 16, n / 4, n].into_iter().filter(|&j| j > 0).collect();
    v.dedup();
    v
}

#[derive(Serialize)]
struct GrowthPoint {
    n: usize,
    sigma: f64,
}

fn growth_csv(points: &[(usize, f64)]) -> String {
    let mut s = String::from("n,sigma_n\n");
    for (n, v) in points {
        let _ = writeln!(s, "{n},{v}");
    }
    s
}

pub fn sigma(cfg: &RunConfig, out: &Output) -> Outcome {
    let seed = cfg.require_seed().stage("config")?;
    let s = setup(cfg, cfg.backend).stage("density")?;
    let (bound, h, _) = bind(cfg, &s).stage("observable")?;
    let gk = sigma_green_kubo(&s.transfer, &h, cfg.lag_max).stage("green_kubo")?;
    let flags = decay_report(cfg, &s, &h, None).stage("decay")?.flags;
    let d = run_gordin(cfg, &s, &h, &flags).stage("gordin")?;
    let lengths = growth_lengths(cfg.n);
    let ecfg = ensemble_config(cfg, &s.map, seed);
    let sim = simulate(&s.map, &|y| bound.eval(y), &ecfg, &lengths).stage("ensemble")?;
    let growth = sim.variance_growth();
    let report = json!({
        "schema": SCHEMA,
        "map": s.map.name(),
        "observable": bound.spec(),
        "estimates": [
            SigmaEstimate { provenance: SigmaSource::GreenKubo, value: gk.sigma() },
            SigmaEstimate { provenance: SigmaSource::VarianceGrowth, value: growth.last().map_or(0.0, |p| p.1) },
            SigmaEstimate { provenance: SigmaSource::MartingaleNorm, value: d.sigma_mart },
        ],
        "green_kubo": gk,
        "variance_growth": growth.iter().map(|&(n, sigma)| GrowthPoint { n, sigma }).collect::<Vec<_>>(),
        "dropped": sim.dropped.len(),
    });
    (|| {
        out.write("green_kubo.csv", &gk.curve_csv())?;
        out.write("variance_growth.csv", &growth_csv(&growth))?;
        out.write_json("sigma.json", &serde_json::to_string_pretty(&report)?)
    })()
    .stage("output")?;
    Ok(Verdict::Pass)
}

/// The σ used by the limit tests: an explicit override or Green–Kubo.
fn chosen_sigma(cfg: &RunConfig, gk: Option<&GreenKubo>) -> SigmaEstimate {
    match (cfg.sigma, gk) {
        (Some(v), _) => SigmaEstimate {
            provenance: SigmaSource::Given,
            value: v,
        },
        (None, Some(g)) => SigmaEstimate {
            provenance: SigmaSource::GreenKubo,
            value: g.sigma(),
        },
        (None, None) => unreachable!("Green–Kubo runs whenever σ is not given"),
    }
}

/// Seed, setup, observable, σ and notes shared by `clt` and `fclt`.
type LimitInputs = (u64, Setup, BoundObservable, GridFunction, SigmaEstimate, Vec<String>);

fn limit_inputs(cfg: &RunConfig) -> std::result::Result<LimitInputs, Failure> {
    let seed = cfg.require_seed().stage("config")?;
    let s = setup(cfg, cfg.backend).stage("density")?;
    let (bound, h, note) = bind(cfg, &s).stage("observable")?;
    let gk = match cfg.sigma {
        Some(_) => None,
        None => Some(sigma_green_kubo(&s.transfer, &h, cfg.lag_max).stage("green_kubo")?),
    };
    let mut notes: Vec<String> = note.into_iter().collect();
    if cfg.sigma.is_some() {
        notes.push("σ given on the command line".to_string());
    }
    let sigma = chosen_sigma(cfg, gk.as_ref());
    Ok((seed, s, bound, h, sigma, notes))
}

pub fn clt(cfg: &RunConfig, out: &Output) -> Outcome {
    let (seed, s, bound, h, sigma, notes) = limit_inputs(cfg)?;
    let h_l2 = h.lp_norm(Norm::L2).stage("observable")?;
    let ecfg = ensemble_config(cfg, &s.map, seed);
    let sim = simulate(&s.map, &|y| bound.eval(y), &ecfg, &[cfg.n]).stage("ensemble")?;
    let ens = sim.birkhoff().stage("ensemble")?;
    let thr = Thresholds::default();
    let mut report = LimitTestReport::new(&s.map.name(), bound.spec(), cfg.n, cfg.samples, seed, sigma, thr);
    report.notes = notes;
    report.push(clt_test(&ens.values, cfg.n, sigma.value, h_l2, &thr).stage("clt")?);
    (|| {
        out.write("birkhoff.csv", &ens.to_csv())?;
        out.write_json("clt.json", &report.to_json()?)
    })()
    .stage("output")?;
    Ok(report.verdict)
}

/// Terminal values, maxima, occupation times and the paths CSV.
type Functionals = (Vec<f64>, Vec<f64>, Vec<f64>, String);

fn functionals(sim: &Simulation, sigma: f64, m: usize) -> Result<Functionals> {
    let paths = sim.paths(sigma, m)?;
    Ok((
        paths.iter().map(|p| p.terminal).collect(),
        paths.iter().map(|p| p.sup).collect(),
        paths.iter().map(|p| p.occupation).collect(),
        paths_to_csv(&paths),
    ))
}

pub fn fclt(cfg: &RunConfig, out: &Output) -> Outcome {
    let (seed, s, bound, _, sigma, notes) = limit_inputs(cfg)?;
    if !(sigma.value > 0.0) {
        return Err(Failure {
            stage: "fclt",
            error: Error::Precondition(format!(
                "σ = {} is not positive; run gordin to test for a coboundary",
                sigma.value
            )),
        });
    }
    let ecfg = ensemble_config(cfg, &s.map, seed);
    let grid = path_grid(cfg.n, cfg.m).stage("config")?;
    let sim = simulate(&s.map, &|y| bound.eval(y), &ecfg, &grid).stage("ensemble")?;
    let (terminal, sup, occupation, csv) = functionals(&sim, sigma.value, cfg.m).stage("fclt")?;
    let thr = Thresholds::default();
    let mut report = LimitTestReport::new(&s.map.name(), bound.spec(), cfg.n, cfg.samples, seed, sigma, thr);
    report.notes = notes;
    for t in fclt_test(&terminal, &sup, &occupation, cfg.n, &thr).stage("fclt")? {
        report.push(t);
    }
    (|| {
        out.write("paths.csv", &csv)?;
        out.write_json("fclt.json", &report.to_json()?)
    })()
    .stage("output")?;
    Ok(report.verdict)
}

#[derive(Serialize)]
struct GordinSummary<'a> {
    sigma_mart: f64,
    martingale_residual: f64,
    resolvent_residual: f64,
    cauchy_min_slack: f64,
    cauchy_violations: usize,
    warnings: &'a [String],
    coboundary: Option<&'a Coboundary>,
}

#[derive(Serialize)]
struct DecaySummary<'a> {
    flags: &'a ConditionFlags,
    l2_exponent: Option<f64>,
    cesaro_exponent: Option<f64>,
    interpolation_violation: f64,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    #[serde(flatten)]
    limit: &'a LimitTestReport,
    config: &'a RunConfig,
    density_iterations: usize,
    centering_shift: f64,
    decay: DecaySummary<'a>,
    gordin: GordinSummary<'a>,
    green_kubo_sigma2: f64,
    green_kubo_oscillation: f64,
    variance_growth: Vec<GrowthPoint>,
    dropped: usize,
}

pub fn verify(cfg: &RunConfig, out: &Output) -> Outcome {
    let seed = cfg.require_seed().stage("config")?;
    let s = setup(cfg, cfg.backend).stage("density")?;
    let (bound, h, note) = bind(cfg, &s).stage("observable")?;
    let h_l2 = h.lp_norm(Norm::L2).stage("observable")?;
    let decay = decay_report(cfg, &s, &h, None).stage("decay")?;
    let d = run_gordin(cfg, &s, &h, &decay.flags).stage("gordin")?;
    let gk = sigma_green_kubo(&s.transfer, &h, cfg.lag_max).stage("green_kubo")?;

    let grid = path_grid(cfg.n, cfg.m).stage("config")?;
    let mut record: Vec<usize> = grid.iter().chain(&growth_lengths(cfg.n)).copied().collect();
    record.sort_unstable();
    record.dedup();
    let ecfg = ensemble_config(cfg, &s.map, seed);
    let sim = simulate(&s.map, &|y| bound.eval(y), &ecfg, &record).stage("ensemble")?;
    let all_growth = sim.variance_growth();
    let lengths = growth_lengths(cfg.n);
    let growth: Vec<(usize, f64)> = all_growth.into_iter().filter(|(j, _)| lengths.contains(j)).collect();

    let mut sigma = chosen_sigma(cfg, Some(&gk));
    let thr = Thresholds::default();
    let mut notes: Vec<String> = note.into_iter().collect();
    notes.extend(d.warnings.iter().cloned());
    notes.extend(decay.notes.iter().cloned());
    if let Some(w) = &gk.warning {
        notes.push(w.clone());
    }
    let coboundary = d.coboundary.as_ref().map(|c| c.verdict);
    let small = sigma.value < SMALL_SIGMA * h_l2;
    let mut undecided = false;
    if small {
        if coboundary == Some(CoboundaryVerdict::Coboundary) {
            notes.push("coboundary detected: σ = 0 and the limit is the point mass at 0".to_string());
            sigma.value = 0.0;
        } else {
            notes.push(format!(
                "σ = {:e} is below {SMALL_SIGMA} ||h||_2 but no coboundary was confirmed; no limit verdict",
                sigma.value
            ));
            undecided = true;
        }
    }
    let mut report = LimitTestReport::new(&s.map.name(), bound.spec(), cfg.n, cfg.samples, seed, sigma, thr);
    report.sigma_estimates = vec![
        SigmaEstimate {
            provenance: SigmaSource::GreenKubo,
            value: gk.sigma(),
        },
        SigmaEstimate {
            provenance: SigmaSource::VarianceGrowth,
            value: growth.last().map_or(0.0, |p| p.1),
        },
        SigmaEstimate {
            provenance: SigmaSource::MartingaleNorm,
            value: d.sigma_mart,
        },
    ];
    let sums = sim.sums_at(cfg.n).stage("ensemble")?;
    report.push(clt_test(&sums, cfg.n, sigma.value, h_l2, &thr).stage("clt")?);
    let mut csv = None;
    if sigma.value > 0.0 {
        let (terminal, sup, occupation, c) = functionals(&sim, sigma.value, cfg.m).stage("fclt")?;
        for t in fclt_test(&terminal, &sup, &occupation, cfg.n, &thr).stage("fclt")? {
            report.push(t);
        }
        csv = Some(c);
    } else {
        notes.push("functional tests skipped: σ = 0".to_string());
    }
    if undecided {
        report.verdict = Verdict::Fail;
    }
    report.notes = notes;
    let full = VerifyReport {
        limit: &report,
        config: cfg,
        density_iterations: s.iterations,
        centering_shift: bound.shift(),
        decay: DecaySummary {
            flags: &decay.flags,
            l2_exponent: decay.fits.l2.map(|f| f.exponent),
            cesaro_exponent: decay.fits.cesaro.map(|f| f.exponent),
            interpolation_violation: decay.interpolation_violation,
        },
        gordin: GordinSummary {
            sigma_mart: d.sigma_mart,
            martingale_residual: d.martingale_residual,
            resolvent_residual: d.resolvent_residual,
            cauchy_min_slack: d.cauchy_min_slack,
            cauchy_violations: d.cauchy_violations,
            warnings: &d.warnings,
            coboundary: d.coboundary.as_ref(),
        },
        green_kubo_sigma2: gk.sigma2,
        green_kubo_oscillation: gk.oscillation,
        variance_growth: growth.iter().map(|&(n, sigma)| GrowthPoint { n, sigma }).collect(),
        dropped: sim.dropped.len(),
    };
    (|| {
        if let Some(c) = &csv {
            out.write("paths.csv", c)?;
        }
        out.write("variance_growth.csv", &growth_csv(&growth))?;
        out.write("green_kubo.csv", &gk.curve_csv())?;
        out.write_json("verify.json", &serde_json::to_string_pretty(&full)?)
    })()
    .stage("output")?;
    Ok(report.verdict)
}

/// Summarizes the JSON reports already present in the output directory.
pub fn report(cfg: &RunConfig, out: &Output) -> Outcome {
    let mut names: Vec<PathBuf> = std::fs::read_dir(&cfg.out)
        .map_err(Error::from)
        .stage("report")?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && !name.ends_with(".meta.json")
        })
        .collect();
    names.sort();
    let mut text = String::new();
    let mut verdict = Verdict::Pass;
    for path in &names {
        let raw = std::fs::read_to_string(path).map_err(Error::from).stage("report")?;
        let v: serde_json::Value = serde_json::from_str(&raw).map_err(Error::from).stage("report")?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("?");
        let _ = write!(text, "{name}:");
        match v.get("verdict").and_then(|x| x.as_str()) {
            Some(x) => {
                if x != "pass" {
                    verdict = Verdict::Fail;
                }
                let _ = writeln!(text, " verdict {x}");
            }
            None => {
                let _ = writeln!(text, " no verdict");
            }
        }
        if let Some(tests) = v.get("tests").and_then(|t| t.as_array()) {
            for t in tests {
                let _ = writeln!(
                    text,
                    "  {:<18} statistic {:.5} threshold {:.5} {}",
                    t["name"].as_str().unwrap_or("?"),
                    t["statistic"].as_f64().unwrap_or(f64::NAN),
                    t["threshold"].as_f64().unwrap_or(f64::NAN),
                    t["verdict"].as_str().unwrap_or("?")
                );
            }
        }
        if let Some(flags) = v.get("flags").and_then(|f| f.as_object()) {
            for (k, f) in flags {
                let _ = writeln!(text, "  {k:<22} {}", f.as_str().unwrap_or("?"));
            }
        }
    }
    print!("{text}");
    out.write("report.txt", &text).stage("output")?;
    Ok(verdict)
}
