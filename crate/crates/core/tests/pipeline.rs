//! Cross-module checks: density, operators, decay, decomposition and sampling
//! applied together.

use std::sync::Arc;

use ergolab_core::decay::{classify_conditions, sequences, ClassifyConfig, Flag};
use ergolab_core::gordin::{coboundary_detect, gordin_decompose, CoboundaryVerdict, GordinConfig, Operators};
use ergolab_core::montecarlo::{sigma_green_kubo, sigma_variance_growth, EnsembleConfig};
use ergolab_core::observable::Observable;
use ergolab_core::transfer::ulam::{invariant_measure, DEFAULT_TOL};
use ergolab_core::{GridFunction, IntervalMap, MeasureDensity, Norm, QuadratureGrid, TransferOperator};

fn setup(spec: &str, cells: usize, oversample: usize) -> (IntervalMap, Arc<MeasureDensity>) {
    let map = IntervalMap::builtin(spec).unwrap();
    let (lo, hi) = map.domain();
    let grid = Arc::new(QuadratureGrid::midpoint(lo, hi, cells).unwrap());
    let nu = Arc::new(invariant_measure(&map, grid, oversample, DEFAULT_TOL).unwrap().0);
    (map, nu)
}

fn bind(spec: &str, map: &IntervalMap, nu: &Arc<MeasureDensity>) -> GridFunction {
    Observable::parse(spec)
        .unwrap()
        .bind(map, nu)
        .unwrap()
        .on_grid(nu.clone())
        .unwrap()
}

/// `h = cos 2 pi y + cos 4 pi y / 2` on the doubling map. Fourier
/// orthogonality gives `||h||^2 = 5/8` and `<h, h o T> = 1/4`, with all later
/// correlations zero, so `sigma^2 = 5/8 + 2/4 = 9/8`.
#[test]
fn three_sigma_estimators_agree_with_fourier_oracle() {
    let expected = 9.0f64 / 8.0;
    let (map, nu) = setup("doubling", 4096, 1);
    let spec = "cos(2*pi*y) + 0.5*cos(4*pi*y)";
    let h = bind(spec, &map, &nu);
    let ops = Operators::new(&map, nu).unwrap();

    let gk = sigma_green_kubo(&ops.transfer, &h, 64).unwrap();
    assert!((gk.sigma2 - expected).abs() < 1e-6, "Green-Kubo {}", gk.sigma2);

    let d = gordin_decompose(&ops, &h, &GordinConfig::default(), None).unwrap();
    assert!((d.sigma_mart.powi(2) - expected).abs() < 1e-3, "martingale {}", d.sigma_mart);

    let obs = Observable::parse(spec).unwrap().bind(&map, ops.measure()).unwrap();
    let cfg = EnsembleConfig::for_map(&map, 20_000, 1024, 3);
    let growth = sigma_variance_growth(&map, &|y| obs.eval(y), &[1024], &cfg).unwrap();
    let sigma_mc = growth[0].1;
    assert!((sigma_mc - expected.sqrt()).abs() < 0.03, "variance growth {sigma_mc}");
}

#[test]
fn coboundary_observable_is_recognized_everywhere() {
    let (map, nu) = setup("doubling", 2048, 1);
    let h = bind("coboundary:cos2", &map, &nu);
    let ops = Operators::new(&map, nu.clone()).unwrap();
    let s = sequences(&ops.transfer, &h, 64).unwrap();
    let (_, flags, _) = classify_conditions(&s, &ClassifyConfig::for_n_max(64)).unwrap();
    assert_eq!(flags.coboundary_bounded, Flag::Pass);
    let c = coboundary_detect(&ops, &h, 128, 1e-3).unwrap();
    assert_eq!(c.verdict, CoboundaryVerdict::Coboundary);
    // The recovered transfer function is `-cos 4 pi y` up to a constant.
    let f0 = GridFunction::from_fn(nu, |y| (4.0 * std::f64::consts::PI * y).cos()).unwrap();
    let err = c.f.add(&f0).unwrap().lp_norm(Norm::L2).unwrap();
    assert!(err < 1e-3 || c.f.sub(&f0).unwrap().lp_norm(Norm::L2).unwrap() < 1e-3, "{err}");
    let gk = sigma_green_kubo(&ops.transfer, &h, 128).unwrap().sigma2;
    // Interpolation-limited at this resolution.
    assert!(gk.abs() < 1e-4, "Green-Kubo {gk}");
}

#[test]
fn intermittency_flags_follow_the_exponent() {
    let flags_for = |spec: &str| {
        let (map, nu) = setup(spec, 2048, 16);
        let h = bind("lip1", &map, &nu);
        let op = TransferOperator::branch_sum(&map, nu).unwrap();
        let s = sequences(&op, &h, 128).unwrap();
        classify_conditions(&s, &ClassifyConfig::for_n_max(128)).unwrap().1
    };
    let mild = flags_for("lsv:0.25");
    assert_eq!(mild.thm1_beta_gt_half, Flag::Pass);
    assert_eq!(mild.thm33_alpha_lt_half, Flag::Pass);
    let strong = flags_for("lsv:0.75");
    assert_eq!(strong.thm1_beta_gt_half, Flag::Fail);
    assert_eq!(strong.thm33_alpha_lt_half, Flag::Fail);
}

#[test]
fn density_csv_round_trip_keeps_masses_and_the_operator() {
    let (_, nu) = setup("lsv:0.25", 1024, 4);
    let back = MeasureDensity::from_csv(nu.to_csv().as_bytes()).unwrap();
    let worst = nu.masses().iter().zip(back.masses()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-12, "masses differ by {worst}");

    // Without fitted tails the round trip reproduces the operator itself.
    let (map, nu) = setup("chebyshev:3", 1024, 1);
    let grid = nu.grid().clone();
    let tabulated = Arc::new(MeasureDensity::from_cell_masses("arcsine", grid, nu.masses()).unwrap());
    let back = Arc::new(MeasureDensity::from_csv(tabulated.to_csv().as_bytes()).unwrap());
    let h = bind("cos(3*y)", &map, &tabulated);
    let a = TransferOperator::branch_sum(&map, tabulated).unwrap().apply(&h).unwrap();
    let b = TransferOperator::branch_sum(&map, back.clone())
        .unwrap()
        .apply(&h.with_measure(back).unwrap())
        .unwrap();
    let diff = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn both_backends_see_the_same_decay_class() {
    let (map, nu) = setup("lsv:0.25", 2048, 16);
    let h = bind("lip1", &map, &nu);
    let branch = TransferOperator::branch_sum(&map, nu).unwrap();
    let (ulam, _) = TransferOperator::ulam(&map, 2048, DEFAULT_TOL).unwrap();
    let h_ulam = bind("lip1", &map, ulam.measure());
    let cfg = ClassifyConfig::for_n_max(64);
    for (op, h) in [(&branch, &h), (&ulam, &h_ulam)] {
        let s = sequences(op, h, 64).unwrap();
        assert!(s.interpolation_violation <= 1e-8);
        let (_, flags, _) = classify_conditions(&s, &cfg).unwrap();
        assert_eq!(flags.thm1_beta_gt_half, Flag::Pass, "{:?}", op.backend());
    }
}
