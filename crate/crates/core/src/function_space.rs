//! Quadrature grids, invariant-measure densities and grid functions.
//!
//! Every operator in this crate acts on [`GridFunction`]s: values sampled at
//! the cell centres of a uniform [`QuadratureGrid`], paired with the
//! [`MeasureDensity`] that defines their `L^p` geometry. Densities are stored
//! as *cell averages* (cell mass divided by cell width), so integrating the
//! constant function is exact up to rounding even when the density has an
//! integrable singularity at an endpoint.

use std::fmt::Write as _;
use std::io::BufRead;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Composite midpoint rule on `N` equal cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureGrid {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub const DEFAULT_CELLS: usize = 4096;

    /// Highest polynomial degree integrated exactly against Lebesgue weights.
    pub const EXACT_DEGREE: usize = 1;

    pub fn midpoint(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("bad domain [{lo}, {hi}]")));
        }
        if cells < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 cells, got {cells}")));
        }
        let h = (hi - lo) / cells as f64;
        let nodes = (0..cells).map(|i| lo + (i as f64 + 0.5) * h).collect();
        Ok(Self {
            lo,
            hi,
            nodes,
            weights: vec![h; cells],
        })
    }

    pub fn cells(&self) -> usize {
        self.nodes.len()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    /// Cell width.
    pub fn width(&self) -> f64 {
        self.len() / self.cells() as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Left edge of cell `i`; `edge(cells())` is the right endpoint.
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.cells() {
            self.hi
        } else {
            self.lo + i as f64 * self.width()
        }
    }

    pub fn cell_of(&self, y: f64) -> usize {
        let t = ((y - self.lo) / self.width()).floor();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.cells() - 1)
        }
    }

    /// Linear interpolation stencil `(left, right, weight_of_right)` between
    /// nodes, with constant extrapolation beyond the outermost nodes.
    pub fn stencil(&self, y: f64) -> (usize, usize, f64) {
        let n = self.cells();
        let t = (y - self.lo) / self.width() - 0.5;
        if t <= 0.0 || t.is_nan() {
            (0, 0, 0.0)
        } else if t >= (n - 1) as f64 {
            (n - 1, n - 1, 0.0)
        } else {
            let i = t.floor() as usize;
            (i, i + 1, t - i as f64)
        }
    }

    pub fn interpolate(&self, values: &[f64], y: f64) -> f64 {
        let (i, j, w) = self.stencil(y);
        if w == 0.0 {
            values[i]
        } else {
            values[i] * (1.0 - w) + values[j] * w
        }
    }
}

/// Whether a density comes from a formula or from a numerical fixed-point
/// computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityKind {
    ClosedForm,
    NumericallyEstimated,
}

/// Pointwise description of a density, used when an operator needs the
/// density away from the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityLaw {
    /// Constant density on the grid's domain.
    Uniform,
    /// `1 / (pi sqrt(1 - y^2))` on `[-1, 1]`.
    Arcsine,
    /// Cell averages only; evaluated by interpolation, with power-law tails
    /// at endpoints where the density blows up.
    Tabulated,
}

impl DensityLaw {
    fn cdf(&self, lo: f64, hi: f64, y: f64) -> f64 {
        match self {
            DensityLaw::Uniform => ((y - lo) / (hi - lo)).clamp(0.0, 1.0),
            DensityLaw::Arcsine => 0.5 + y.clamp(-1.0, 1.0).asin() / std::f64::consts::PI,
            DensityLaw::Tabulated => unreachable!("tabulated laws carry no cdf"),
        }
    }
}

/// Local model `c * d^a` of a density near an endpoint, `d` the distance to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerTail {
    pub coefficient: f64,
    pub exponent: f64,
    /// The model is used for distances below this.
    pub reach: f64,
}

impl PowerTail {
    /// Fits `c d^a` to the averages `v` of the three cells of width `h`
    /// nearest an endpoint. Each consecutive pair of cells gives an exact
    /// exponent for a pure power law; the two estimates are averaged. Only
    /// kept for singular profiles, `-1 < a < 0`.
    fn fit(h: f64, v: [f64; 3]) -> Option<Self> {
        if !(v[0] > v[1] && v[1] > v[2] && v[2] > 0.0) {
            return None;
        }
        // v0 / v1 = 1 / (2^b - 1) with b = 1 + a
        let b01 = (1.0 + v[1] / v[0]).log2();
        // v1 / v2 = (2^b - 1) / (3^b - 2^b), monotone in b on (0, 1]
        let ratio = |b: f64| (2f64.powf(b) - 1.0) / (3f64.powf(b) - 2f64.powf(b));
        let target = v[1] / v[2];
        let (mut lo, mut hi) = (1e-6, 1.0);
        if !(ratio(lo) > target && target >= ratio(hi)) {
            return None;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let exponent = 0.5 * (b01 + 0.5 * (lo + hi)) - 1.0;
        if !(exponent > -1.0 && exponent < 0.0) {
            return None;
        }
        Some(Self {
            coefficient: v[0] * (1.0 + exponent) * h.powf(-exponent),
            exponent,
            reach: 1.5 * h,
        })
    }

    fn eval(&self, d: f64) -> f64 {
        self.coefficient * d.max(f64::MIN_POSITIVE).powf(self.exponent)
    }

    /// Distance of the centre of mass of `[0, h]` from the endpoint.
    fn centroid(&self, h: f64) -> f64 {
        h * (1.0 + self.exponent) / (2.0 + self.exponent)
    }
}

/// Density of a probability measure on a quadrature grid.
///
/// Besides the cell averages the measure carries nodal quadrature weights.
/// Each cell's mass is spread over neighbouring nodes so that the first
/// moment of the cell is reproduced wherever the cell's centre of mass is
/// known (closed forms, and fitted power-law tails). Without that, the
/// midpoint node of a cell next to an integrable singularity sits too far
/// from where the mass actually is.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureDensity {
    name: String,
    #[serde(skip)]
    grid: Arc<QuadratureGrid>,
    /// Cell averages; `values[i] * grid.weights()[i]` is the mass of cell `i`.
    values: Vec<f64>,
    #[serde(skip)]
    node_weights: Vec<f64>,
    kind: DensityKind,
    law: DensityLaw,
    left_tail: Option<PowerTail>,
    right_tail: Option<PowerTail>,
}

impl MeasureDensity {
    pub const NORMALIZATION_TOL: f64 = 1e-8;

    /// Lebesgue (uniform) probability measure on the grid's domain.
    pub fn uniform(grid: Arc<QuadratureGrid>) -> Result<Self> {
        Self::closed_form("uniform", grid, DensityLaw::Uniform)
    }

    /// Arcsine measure on `[-1, 1]`.
    pub fn arcsine(grid: Arc<QuadratureGrid>) -> Result<Self> {
        Self::closed_form("arcsine", grid, DensityLaw::Arcsine)
    }

    /// Cell averages computed from the exact CDF of a closed-form law.
    pub fn closed_form(name: &str, grid: Arc<QuadratureGrid>, law: DensityLaw) -> Result<Self> {
        let (lo, hi) = grid.domain();
        if law == DensityLaw::Arcsine && (lo != -1.0 || hi != 1.0) {
            return Err(Error::InvalidInput(
                "the arcsine law lives on [-1, 1]".to_string(),
            ));
        }
        if law == DensityLaw::Tabulated {
            return Err(Error::InvalidInput(
                "tabulated densities are built from cell masses".to_string(),
            ));
        }
        let masses: Vec<f64> = (0..grid.cells())
            .map(|i| law.cdf(lo, hi, grid.edge(i + 1)) - law.cdf(lo, hi, grid.edge(i)))
            .collect();
        let centroids: Vec<f64> = match law {
            DensityLaw::Arcsine => (0..grid.cells())
                .map(|i| {
                    let (a, b) = (grid.edge(i), grid.edge(i + 1));
                    let moment = ((1.0 - a * a).max(0.0).sqrt() - (1.0 - b * b).max(0.0).sqrt())
                        / std::f64::consts::PI;
                    moment / masses[i]
                })
                .collect(),
            _ => grid.nodes().to_vec(),
        };
        let mut m = Self::build(name, grid, masses)?;
        m.kind = DensityKind::ClosedForm;
        m.law = law;
        m.node_weights = moment_matched_weights(&m.grid, &m.masses(), &centroids);
        Ok(m)
    }

    /// Numerically estimated measure from (unnormalized) cell masses. The
    /// nodal weights are the cell masses themselves, so a stationary vector
    /// of a cell-to-cell Markov matrix stays exactly stationary.
    pub fn from_cell_masses(name: &str, grid: Arc<QuadratureGrid>, masses: Vec<f64>) -> Result<Self> {
        Self::build(name, grid, masses)
    }

    /// Fits power-law tails at endpoints where the tabulated density blows
    /// up. The tails drive point evaluation near the endpoint and place the
    /// end cell's mass at its fitted centre of mass.
    pub fn with_power_tails(mut self) -> Self {
        let n = self.values.len();
        if self.law != DensityLaw::Tabulated || n < 4 {
            return self;
        }
        let h = self.grid.width();
        let v = &self.values;
        self.left_tail = PowerTail::fit(h, [v[0], v[1], v[2]]);
        self.right_tail = PowerTail::fit(h, [v[n - 1], v[n - 2], v[n - 3]]);
        let (lo, hi) = self.grid.domain();
        let mut centroids = self.grid.nodes().to_vec();
        if let Some(t) = &self.left_tail {
            centroids[0] = lo + t.centroid(h);
        }
        if let Some(t) = &self.right_tail {
            centroids[n - 1] = hi - t.centroid(h);
        }
        self.node_weights = moment_matched_weights(&self.grid, &self.masses(), &centroids);
        self
    }

    fn build(name: &str, grid: Arc<QuadratureGrid>, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.cells() {
            return Err(Error::InvalidInput(format!(
                "{} masses for {} cells",
                masses.len(),
                grid.cells()
            )));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidInput(
                "cell masses must be finite and non-negative".to_string(),
            ));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateMeasure("total mass is zero".to_string()));
        }
        let values = masses
            .iter()
            .zip(grid.weights())
            .map(|(m, w)| m / total / w)
            .collect();
        let node_weights = masses.iter().map(|m| m / total).collect();
        Ok(Self {
            name: name.to_string(),
            grid,
            values,
            node_weights,
            kind: DensityKind::NumericallyEstimated,
            law: DensityLaw::Tabulated,
            left_tail: None,
            right_tail: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    /// Cell-average density values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `nu`-mass attached to each node by the quadrature rule.
    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn law(&self) -> &DensityLaw {
        &self.law
    }

    pub fn left_tail(&self) -> Option<&PowerTail> {
        self.left_tail.as_ref()
    }

    pub fn right_tail(&self) -> Option<&PowerTail> {
        self.right_tail.as_ref()
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.values[i] * self.grid.weights()[i]
    }

    pub fn masses(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.mass(i)).collect()
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.values.len()).map(|i| self.mass(i)).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_mass() - 1.0).abs() < Self::NORMALIZATION_TOL
    }

    /// Density at an arbitrary point of the domain.
    pub fn point_density(&self, y: f64) -> f64 {
        let (lo, hi) = self.grid.domain();
        match self.law {
            DensityLaw::Uniform => 1.0 / (hi - lo),
            DensityLaw::Arcsine => {
                let s = (1.0 - y * y).max(0.0).sqrt();
                if s == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / (std::f64::consts::PI * s)
                }
            }
            DensityLaw::Tabulated => {
                if let Some(t) = &self.left_tail {
                    if y - lo < t.reach {
                        return t.eval(y - lo);
                    }
                }
                if let Some(t) = &self.right_tail {
                    if hi - y < t.reach {
                        return t.eval(hi - y);
                    }
                }
                self.grid.interpolate(&self.values, y)
            }
        }
    }

    /// CSV with a `# measure=<name> normalized=<bool>` header line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# measure={} normalized={}\nnode,value\n",
            self.name,
            self.is_normalized()
        );
        for (x, v) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(out, "{x},{v}");
        }
        out
    }

    /// Reads the format written by [`MeasureDensity::to_csv`]. The result is
    /// a tabulated density on a uniform grid reconstructed from the nodes,
    /// without fitted tails.
    pub fn from_csv(reader: impl BufRead) -> Result<Self> {
        let mut name = None;
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.split_whitespace() {
                    if let Some(v) = kv.strip_prefix("measure=") {
                        name = Some(v.to_string());
                    }
                }
                continue;
            }
            if line.is_empty() || line == "node,value" {
                continue;
            }
            let (x, v) = parse_pair(line)?;
            nodes.push(x);
            values.push(v);
        }
        let name = name.ok_or_else(|| Error::Parse("missing `# measure=` header".to_string()))?;
        let grid = Arc::new(grid_from_nodes(&nodes)?);
        let masses = values.iter().zip(grid.weights()).map(|(v, w)| v * w).collect();
        Self::from_cell_masses(&name, grid, masses)
    }
}

/// Spreads each cell's mass over the two nodes bracketing its centre of mass
/// (linear extrapolation past the outermost nodes), which makes the rule
/// exact for linear integrands. Falls back to plain cell masses if any
/// aggregated weight would turn negative.
fn moment_matched_weights(grid: &QuadratureGrid, masses: &[f64], centroids: &[f64]) -> Vec<f64> {
    let n = masses.len();
    let total: f64 = masses.iter().sum();
    let h = grid.width();
    let x0 = grid.nodes()[0];
    let mut w = vec![0.0; n];
    for (i, (&m, &c)) in masses.iter().zip(centroids).enumerate() {
        let m = m / total;
        let t = (c - x0) / h;
        let j = (t.floor().max(0.0) as usize).min(n - 2);
        let s = t - j as f64;
        if (c - grid.nodes()[i]).abs() <= 1e-15 * h {
            w[i] += m;
        } else {
            w[j] += m * (1.0 - s);
            w[j + 1] += m * s;
        }
    }
    if w.iter().any(|&v| v < 0.0) {
        masses.iter().map(|m| m / total).collect()
    } else {
        w
    }
}

fn parse_pair(line: &str) -> Result<(f64, f64)> {
    let mut it = line.split(',');
    let a = it.next().map(str::trim).unwrap_or_default();
    let b = it.next().map(str::trim).unwrap_or_default();
    let x = a.parse().map_err(|_| Error::Parse(format!("bad number `{a}`")))?;
    let v = b.parse().map_err(|_| Error::Parse(format!("bad number `{b}`")))?;
    Ok((x, v))
}

fn grid_from_nodes(nodes: &[f64]) -> Result<QuadratureGrid> {
    if nodes.len() < 2 {
        return Err(Error::Parse("need at least two nodes".to_string()));
    }
    let n = nodes.len();
    let h = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
    let lo = nodes[0] - 0.5 * h;
    let hi = nodes[n - 1] + 0.5 * h;
    let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
    let grid = QuadratureGrid::midpoint(snap(lo), snap(hi), n)?;
    let max_dev = grid
        .nodes()
        .iter()
        .zip(nodes)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if max_dev > 1e-9 * grid.len() {
        return Err(Error::Parse("nodes are not uniform cell centres".to_string()));
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

/// An observable sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct GridFunction {
    measure: Arc<MeasureDensity>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(measure: Arc<MeasureDensity>, values: Vec<f64>) -> Result<Self> {
        if values.len() != measure.grid().cells() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} nodes",
                values.len(),
                measure.grid().cells()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at node {i}")));
        }
        Ok(Self { measure, values })
    }

    pub fn from_fn(measure: Arc<MeasureDensity>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = measure.grid().nodes().iter().map(|&x| f(x)).collect();
        Self::new(measure, values)
    }

    pub fn constant(measure: Arc<MeasureDensity>, c: f64) -> Result<Self> {
        let n = measure.grid().cells();
        Self::new(measure, vec![c; n])
    }

    pub(crate) fn from_raw(measure: Arc<MeasureDensity>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), measure.grid().cells());
        Self { measure, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn measure(&self) -> &Arc<MeasureDensity> {
        &self.measure
    }

    pub fn grid(&self) -> &QuadratureGrid {
        self.measure.grid()
    }

    /// Value at an arbitrary point by linear interpolation between nodes.
    pub fn interpolate(&self, y: f64) -> f64 {
        self.grid().interpolate(&self.values, y)
    }

    fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::InvalidInput(format!("non-finite value at node {i}"))),
            None => Ok(()),
        }
    }

    /// Quadrature of `f` against the attached measure.
    pub fn integrate(&self) -> Result<f64> {
        self.check_finite()?;
        Ok(self.weighted_sum(|v| v))
    }

    fn weighted_sum(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.values
            .iter()
            .zip(self.measure.node_weights())
            .map(|(v, w)| g(*v) * w)
            .sum()
    }

    pub fn lp_norm(&self, p: Norm) -> Result<f64> {
        self.check_finite()?;
        Ok(match p {
            Norm::L1 => self.weighted_sum(f64::abs),
            Norm::L2 => self.weighted_sum(|v| v * v).sqrt(),
            Norm::Inf => self.values.iter().fold(0.0, |m, v| m.max(v.abs())),
        })
    }

    pub fn inner_product(&self, other: &GridFunction) -> Result<f64> {
        self.check_compatible(other)?;
        self.check_finite()?;
        other.check_finite()?;
        let w = self.measure.node_weights();
        Ok((0..self.values.len())
            .map(|i| self.values[i] * other.values[i] * w[i])
            .sum())
    }

    pub fn is_compatible(&self, other: &GridFunction) -> bool {
        same_measure(&self.measure, &other.measure)
    }

    pub(crate) fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::IncompatibleGrids(format!(
                "measure `{}` on {} cells vs `{}` on {} cells",
                self.measure.name(),
                self.values.len(),
                other.measure.name(),
                other.values.len()
            )))
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self::from_raw(self.measure.clone(), values))
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.combine(1.0, other, -1.0)
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.combine(1.0, other, 1.0)
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        Self::from_raw(self.measure.clone(), self.values.iter().map(|v| c * v).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        Self::from_raw(self.measure.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn mul(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(Self::from_raw(self.measure.clone(), values))
    }

    /// Subtracts the quadrature mean; returns the centred function and the mean.
    pub fn centered(&self) -> Result<(GridFunction, f64)> {
        let mean = self.integrate()?;
        Ok((self.map(|v| v - mean), mean))
    }

    /// Same node values re-attached to another measure on an identical grid.
    pub fn with_measure(&self, measure: Arc<MeasureDensity>) -> Result<GridFunction> {
        if measure.grid() != self.measure.grid() {
            return Err(Error::IncompatibleGrids(
                "cannot move a grid function to a different grid".to_string(),
            ));
        }
        Ok(Self::from_raw(measure, self.values.clone()))
    }

    /// CSV with columns `node,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,value\n");
        for (x, v) in self.grid().nodes().iter().zip(&self.values) {
            let _ = writeln!(out, "{x},{v}");
        }
        out
    }

    /// Reads `node,value` rows back onto `measure`'s grid.
    pub fn from_csv(measure: Arc<MeasureDensity>, reader: impl BufRead) -> Result<Self> {
        let mut values = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == "node,value" {
                continue;
            }
            let (x, v) = parse_pair(line)?;
            let i = values.len();
            let expected = measure.grid().nodes().get(i).copied();
            match expected {
                Some(e) if (e - x).abs() <= 1e-9 * measure.grid().len() => values.push(v),
                _ => {
                    return Err(Error::IncompatibleGrids(format!(
                        "line {}: node {x} does not match the grid",
                        k + 1
                    )))
                }
            }
        }
        Self::new(measure, values)
    }
}

pub(crate) fn same_measure(a: &Arc<MeasureDensity>, b: &Arc<MeasureDensity>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}
