//! Transfer (Perron-Frobenius) and Koopman operators on grid functions.
//!
//! Two backends discretize the transfer operator:
//!
//! * **branch sum** evaluates `Pf(x) = sum f(y) rho(y) / (rho(x) |T'(y)|)`
//!   over the preimages of every node, interpolating `f` linearly within the
//!   preimage's branch and extrapolating it as a constant past the last node
//!   of that branch, so jumps of `f` at branch ends are not smeared. The
//!   weights `rho(y) / |T'(y)|` are divided by their sum over the preimages
//!   rather than by `rho(x)`; for an exactly invariant density the two agree,
//!   and the normalized form keeps `P1 = 1` when `rho` is only approximate.
//! * **Ulam** acts through the cell transition matrix and its own stationary
//!   vector, with no point evaluation of the density at all.
//!
//! Both are row-stochastic with non-negative weights, so `|Pf| <= P|f|`
//! holds node by node.

mod sparse;
pub mod ulam;

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

pub use sparse::SparseOperator;
pub use ulam::{invariant_density, invariant_measure, ulam_matrix, Stationary, UlamMatrix};

use crate::error::{Error, Result};
use crate::function_space::{same_measure, GridFunction, MeasureDensity, Norm, QuadratureGrid};
use crate::maps::{Branch, IntervalMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    BranchSum,
    Ulam,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::BranchSum => "branch_sum",
            Backend::Ulam => "ulam",
        })
    }
}

/// Grid stencil at `y` that does not reach across the ends of `branch`.
fn branch_stencil(grid: &QuadratureGrid, branch: &Branch, y: f64) -> (usize, usize, f64) {
    let (i, k, s) = grid.stencil(y);
    let nodes = grid.nodes();
    let inside = |j: usize| nodes[j] >= branch.lo && nodes[j] <= branch.hi;
    match (inside(i), inside(k)) {
        (true, true) | (false, false) => (i, k, s),
        (true, false) => (i, i, 0.0),
        (false, true) => (k, k, 0.0),
    }
}

#[derive(Debug, Clone)]
pub struct TransferOperator {
    backend: Backend,
    map_name: String,
    measure: Arc<MeasureDensity>,
    op: SparseOperator,
}

impl TransferOperator {
    pub fn branch_sum(map: &IntervalMap, measure: Arc<MeasureDensity>) -> Result<Self> {
        check_domain(map, &measure)?;
        let grid = measure.grid().clone();
        let rows: Vec<Vec<(usize, f64)>> = grid
            .nodes()
            .par_iter()
            .map(|&x| {
                let rho_x = measure.point_density(x);
                if !(rho_x > 0.0) {
                    return Err(Error::DegenerateMeasure(format!("zero density at node {x}")));
                }
                let pre = map.preimages(x)?;
                let weights: Vec<f64> = pre
                    .iter()
                    .map(|p| measure.point_density(p.y) / p.deriv)
                    .collect();
                let total: f64 = weights.iter().sum();
                if !(total > 0.0 && total.is_finite()) {
                    return Err(Error::DegenerateMeasure(format!(
                        "preimage weights of node {x} sum to {total}"
                    )));
                }
                let mut row = Vec::with_capacity(2 * pre.len());
                for (p, w) in pre.iter().zip(&weights) {
                    let a = w / total;
                    let (i, k, s) = branch_stencil(&grid, &map.branches()[p.branch], p.y);
                    if s == 0.0 {
                        row.push((i, a));
                    } else {
                        row.push((i, a * (1.0 - s)));
                        row.push((k, a * s));
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            backend: Backend::BranchSum,
            map_name: map.name(),
            measure,
            op: SparseOperator::from_rows(grid.cells(), rows),
        })
    }

    /// Ulam backend on `cells` cells; the measure is the matrix's own
    /// stationary vector. Also returns the power-iteration count.
    pub fn ulam(map: &IntervalMap, cells: usize, tol: f64) -> Result<(Self, usize)> {
        let u = ulam_matrix(map, cells)?;
        let (measure, iterations) = u.invariant_density(tol)?;
        Ok((Self::from_ulam(&u, Arc::new(measure))?, iterations))
    }

    /// `(Pf)_j = sum_i f_i m_i M_ij / sum_i m_i M_ij` with `m` the cell
    /// masses of `measure`.
    pub fn from_ulam(u: &UlamMatrix, measure: Arc<MeasureDensity>) -> Result<Self> {
        if measure.grid() != u.grid() {
            return Err(Error::IncompatibleGrids(
                "measure and Ulam matrix use different grids".to_string(),
            ));
        }
        let op = u.matrix().transpose().reweight_columns_stochastic(&measure.masses());
        Ok(Self {
            backend: Backend::Ulam,
            map_name: u.map_name().to_string(),
            measure,
            op,
        })
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn map_name(&self) -> &str {
        &self.map_name
    }

    pub fn measure(&self) -> &Arc<MeasureDensity> {
        &self.measure
    }

    pub fn sparse(&self) -> &SparseOperator {
        &self.op
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if same_measure(f.measure(), &self.measure) {
            Ok(())
        } else {
            Err(Error::IncompatibleGrids(format!(
                "function lives on measure `{}`, operator on `{}`",
                f.measure().name(),
                self.measure.name()
            )))
        }
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check(f)?;
        Ok(GridFunction::from_raw(self.measure.clone(), self.op.apply(f.values())))
    }

    /// Raw node-value form for hot loops: `out = P x`.
    pub fn apply_values(&self, x: &[f64], out: &mut [f64]) {
        self.op.apply_into(x, out);
    }

    /// `[Pf, P^2 f, ..., P^n f]`.
    pub fn powers(&self, f: &GridFunction, n: usize) -> Result<Vec<GridFunction>> {
        self.check(f)?;
        let mut out: Vec<GridFunction> = Vec::with_capacity(n);
        for k in 0..n {
            let prev = if k == 0 { f } else { &out[k - 1] };
            let next = self.op.apply(prev.values());
            out.push(GridFunction::from_raw(self.measure.clone(), next));
        }
        Ok(out)
    }
}

/// `U f = f o T`, with `f` interpolated linearly between nodes.
#[derive(Debug, Clone)]
pub struct KoopmanOperator {
    measure: Arc<MeasureDensity>,
    op: SparseOperator,
}

impl KoopmanOperator {
    pub fn new(map: &IntervalMap, measure: Arc<MeasureDensity>) -> Result<Self> {
        check_domain(map, &measure)?;
        let grid = measure.grid().clone();
        let (lo, hi) = map.domain();
        let rows = grid
            .nodes()
            .iter()
            .map(|&x| {
                let (i, k, s) = grid.stencil(map.apply(x).clamp(lo, hi));
                if s == 0.0 {
                    vec![(i, 1.0)]
                } else {
                    vec![(i, 1.0 - s), (k, s)]
                }
            })
            .collect();
        Ok(Self {
            op: SparseOperator::from_rows(grid.cells(), rows),
            measure,
        })
    }

    pub fn measure(&self) -> &Arc<MeasureDensity> {
        &self.measure
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if !same_measure(f.measure(), &self.measure) {
            return Err(Error::IncompatibleGrids(
                "function and Koopman operator use different measures".to_string(),
            ));
        }
        Ok(GridFunction::from_raw(self.measure.clone(), self.op.apply(f.values())))
    }

    pub fn apply_values(&self, x: &[f64], out: &mut [f64]) {
        self.op.apply_into(x, out);
    }
}

fn check_domain(map: &IntervalMap, measure: &MeasureDensity) -> Result<()> {
    if measure.grid().domain() == map.domain() {
        Ok(())
    } else {
        Err(Error::IncompatibleGrids(format!(
            "measure domain {:?} differs from the map domain {:?}",
            measure.grid().domain(),
            map.domain()
        )))
    }
}

/// `f o T` on the nodes of `f`'s grid.
pub fn koopman_apply(map: &IntervalMap, f: &GridFunction) -> Result<GridFunction> {
    KoopmanOperator::new(map, f.measure().clone())?.apply(f)
}

/// Branch-sum transfer operator applied once.
pub fn transfer_apply(map: &IntervalMap, nu: &Arc<MeasureDensity>, f: &GridFunction) -> Result<GridFunction> {
    TransferOperator::branch_sum(map, nu.clone())?.apply(f)
}

/// `[Pf, ..., P^n f]` with the branch-sum backend.
pub fn transfer_power(
    map: &IntervalMap,
    nu: &Arc<MeasureDensity>,
    f: &GridFunction,
    n: usize,
) -> Result<Vec<GridFunction>> {
    if n == 0 {
        return Err(Error::InvalidInput("transfer_power needs n >= 1".to_string()));
    }
    TransferOperator::branch_sum(map, nu.clone())?.powers(f, n)
}

/// `|<P^n f, g> - integral of f (g o T^n)|`, with `T^n` applied to the nodes
/// exactly and `g` interpolated at the images.
pub fn duality_residual(
    op: &TransferOperator,
    map: &IntervalMap,
    f: &GridFunction,
    g: &GridFunction,
    n: usize,
) -> Result<f64> {
    f.check_compatible(g)?;
    if n == 0 {
        return Ok((f.inner_product(g)? - f.mul(g)?.integrate()?).abs());
    }
    let pnf = op.powers(f, n)?.pop().expect("n >= 1");
    let lhs = pnf.inner_product(g)?;
    let (lo, hi) = map.domain();
    let g_tn: Vec<f64> = f
        .grid()
        .nodes()
        .iter()
        .map(|&x| {
            let mut y = x;
            for _ in 0..n {
                y = map.apply(y).clamp(lo, hi);
            }
            g.interpolate(y)
        })
        .collect();
    let g_tn = GridFunction::new(f.measure().clone(), g_tn)?;
    let rhs = f.inner_product(&g_tn)?;
    Ok((lhs - rhs).abs())
}

/// Largest violation of `||g||_2 <= ||h||_inf^(1/2) ||g||_1^(1/2)` over the
/// iterates `g` of `h`.
pub fn interpolation_violation(h: &GridFunction, iterates: &[GridFunction]) -> Result<f64> {
    let sup = h.lp_norm(Norm::Inf)?;
    iterates.iter().try_fold(f64::NEG_INFINITY, |m, g| {
        let l1 = g.lp_norm(Norm::L1)?;
        let l2 = g.lp_norm(Norm::L2)?;
        Ok(m.max(l2 - (sup * l1).sqrt()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::QuadratureGrid;
    use std::f64::consts::PI;

    fn closed_measure(map: &IntervalMap, cells: usize) -> Arc<MeasureDensity> {
        let (lo, hi) = map.domain();
        let grid = Arc::new(QuadratureGrid::midpoint(lo, hi, cells).unwrap());
        Arc::new(invariant_measure(map, grid, 1, 1e-12).unwrap().0)
    }

    #[test]
    fn chebyshev_annihilates_identity() {
        let map = IntervalMap::chebyshev(2).unwrap();
        let nu = closed_measure(&map, 4096);
        let h = GridFunction::from_fn(nu.clone(), |y| y).unwrap();
        let ph = transfer_apply(&map, &nu, &h).unwrap();
        assert!(ph.values().iter().all(|v| v.abs() < 1e-8));
        assert!(ph.lp_norm(Norm::L2).unwrap() < 1e-6);
    }

    #[test]
    fn chebyshev_matches_explicit_formula() {
        // Pf(x) = (f(r) + f(-r)) / 2 with r = sqrt(x/2 + 1/2)
        let map = IntervalMap::chebyshev(2).unwrap();
        let nu = closed_measure(&map, 4096);
        let f = |y: f64| (2.0 * y).exp() + y * y;
        let pf = transfer_apply(&map, &nu, &GridFunction::from_fn(nu.clone(), f).unwrap()).unwrap();
        for (x, v) in nu.grid().nodes().iter().zip(pf.values()).step_by(37) {
            let r = (x / 2.0 + 0.5).sqrt();
            let exact = 0.5 * (f(r) + f(-r));
            assert!((v - exact).abs() < 1e-5, "x={x}");
        }
    }

    #[test]
    fn doubling_cosine_cancels() {
        let map = IntervalMap::doubling();
        let nu = closed_measure(&map, 4096);
        let h = GridFunction::from_fn(nu.clone(), |y| (2.0 * PI * y).cos()).unwrap();
        let ph = transfer_apply(&map, &nu, &h).unwrap();
        assert!(ph.values().iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn constants_are_fixed() {
        for spec in ["doubling", "chebyshev:3", "lsv:0.25"] {
            let map = IntervalMap::builtin(spec).unwrap();
            let nu = closed_measure(&map, 512);
            let one = GridFunction::constant(nu.clone(), 1.0).unwrap();
            for it in transfer_power(&map, &nu, &one, 5).unwrap() {
                assert!(it.values().iter().all(|v| (v - 1.0).abs() < 1e-12), "{spec}");
            }
            let (ulam, _) = TransferOperator::ulam(&map, 512, 1e-13).unwrap();
            let one = GridFunction::constant(ulam.measure().clone(), 1.0).unwrap();
            assert!(ulam.apply(&one).unwrap().values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn doubling_decays_geometrically() {
        let map = IntervalMap::doubling();
        let nu = closed_measure(&map, 16384);
        let h = GridFunction::from_fn(nu.clone(), |y| {
            (2.0 * PI * y).cos() + 0.5 * (4.0 * PI * y).cos() + 0.25 * (6.0 * PI * y).sin()
        })
        .unwrap();
        let it = transfer_power(&map, &nu, &h, 6).unwrap();
        let norms: Vec<f64> = it.iter().map(|g| g.lp_norm(Norm::L2).unwrap()).collect();
        // oracle: P cos(4 pi y) = cos(2 pi y), P cos(2 pi y) = 0, P sin(6 pi y) = 0
        assert!((norms[0] - 0.5 / 2f64.sqrt()).abs() < 1e-6);
        assert!(norms[1] < 1e-6);
    }

    #[test]
    fn koopman_basics() {
        let map = IntervalMap::doubling();
        let nu = closed_measure(&map, 4096);
        let y = GridFunction::from_fn(nu.clone(), |y| y).unwrap();
        let uy = koopman_apply(&map, &y).unwrap();
        for (x, v) in nu.grid().nodes().iter().zip(uy.values()).step_by(101) {
            assert!((v - (2.0 * x) % 1.0).abs() < 1e-3);
        }
        let c = GridFunction::constant(nu, 3.5).unwrap();
        assert!(koopman_apply(&map, &c).unwrap().values().iter().all(|&v| v == 3.5));
    }

    #[test]
    fn koopman_is_an_isometry() {
        for spec in ["doubling", "chebyshev:2"] {
            let map = IntervalMap::builtin(spec).unwrap();
            let nu = closed_measure(&map, 4096);
            let f = GridFunction::from_fn(nu, |y| (3.0 * y).sin() + y * y).unwrap();
            let uf = koopman_apply(&map, &f).unwrap();
            let d = uf.lp_norm(Norm::L2).unwrap() - f.lp_norm(Norm::L2).unwrap();
            assert!(d.abs() < 2e-3, "{spec}: {d}");
        }
    }

    #[test]
    fn transfer_inverts_koopman() {
        for spec in ["doubling", "chebyshev:2", "lsv:0.25"] {
            let map = IntervalMap::builtin(spec).unwrap();
            let mut prev = f64::INFINITY;
            for cells in [1024, 4096] {
                let nu = closed_measure(&map, cells);
                let op = TransferOperator::branch_sum(&map, nu.clone()).unwrap();
                let f = GridFunction::from_fn(nu.clone(), |y| (5.0 * y).cos()).unwrap();
                let puf = op.apply(&koopman_apply(&map, &f).unwrap()).unwrap();
                let err = puf.sub(&f).unwrap().lp_norm(Norm::L2).unwrap();
                assert!(err < 5e-3, "{spec}: {err}");
                assert!(err < prev);
                prev = err;
            }
        }
    }

    #[test]
    fn jumps_at_branch_ends_are_not_smeared() {
        // `y o T` jumps at every branch end of the doubling and LSV maps.
        for spec in ["doubling", "lsv:0.25"] {
            let map = IntervalMap::builtin(spec).unwrap();
            let err = |cells| {
                let nu = closed_measure(&map, cells);
                let op = TransferOperator::branch_sum(&map, nu.clone()).unwrap();
                let f = GridFunction::from_fn(nu.clone(), |y| y).unwrap();
                let puf = op.apply(&koopman_apply(&map, &f).unwrap()).unwrap();
                puf.sub(&f).unwrap().lp_norm(Norm::L2).unwrap()
            };
            let (coarse, fine) = (err(1024), err(4096));
            assert!(coarse / fine > 4.0, "{spec}: {coarse} -> {fine}");
        }
    }

    #[test]
    fn duality_at_zero_is_exact() {
        let map = IntervalMap::doubling();
        let nu = closed_measure(&map, 256);
        let op = TransferOperator::branch_sum(&map, nu.clone()).unwrap();
        let f = GridFunction::from_fn(nu.clone(), |y| y.sin()).unwrap();
        let g = GridFunction::from_fn(nu, |y| y.exp()).unwrap();
        assert_eq!(duality_residual(&op, &map, &f, &g, 0).unwrap(), 0.0);
    }

    #[test]
    fn duality_chebyshev_identity() {
        let map = IntervalMap::chebyshev(2).unwrap();
        let nu = closed_measure(&map, 4096);
        let op = TransferOperator::branch_sum(&map, nu.clone()).unwrap();
        let y = GridFunction::from_fn(nu, |y| y).unwrap();
        assert!(duality_residual(&op, &map, &y, &y, 1).unwrap() < 1e-6);
    }

    #[test]
    fn duality_doubling_refines() {
        let map = IntervalMap::doubling();
        let mut res = Vec::new();
        for cells in [4096, 16384] {
            let nu = closed_measure(&map, cells);
            let op = TransferOperator::branch_sum(&map, nu.clone()).unwrap();
            let f = GridFunction::from_fn(nu.clone(), |y| (1.5 * y).exp()).unwrap();
            let g = GridFunction::from_fn(nu, |y| (2.0 * PI * y).sin() + y * y).unwrap();
            res.push(duality_residual(&op, &map, &f, &g, 2).unwrap());
        }
        assert!(res[0] < 5e-4, "{res:?}");
        assert!(res[1] < res[0] / 3.0, "{res:?}");
    }

    #[test]
    fn rejects_foreign_functions() {
        let map = IntervalMap::doubling();
        let a = closed_measure(&map, 64);
        let b = closed_measure(&map, 128);
        let op = TransferOperator::branch_sum(&map, a).unwrap();
        let f = GridFunction::constant(b, 1.0).unwrap();
        assert!(matches!(op.apply(&f), Err(Error::IncompatibleGrids(_))));
    }
}
