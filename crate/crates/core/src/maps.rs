//! Piecewise-monotone interval maps with explicit branch structure.

use std::f64::consts::PI;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::function_space::DensityLaw;

/// Preimages whose derivative magnitude falls below this are rejected.
pub const SINGULAR_DERIVATIVE: f64 = 1e-14;

/// Orbits may leave the domain by at most this much before being clamped.
pub const ESCAPE_TOL: f64 = 1e-12;

const UNIT: (f64, f64) = (0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchKind {
    /// `slope * y + offset`.
    Affine { slope: f64, offset: f64 },
    /// `y (1 + (2y)^gamma)` on `[0, 1/2]`.
    LsvLeft { gamma: f64 },
    /// `y + y^(1 + gamma) - shift`.
    PomeauManneville { gamma: f64, shift: f64 },
    /// `cos(N arccos y)` restricted to `arccos y` in `[k pi / N, (k+1) pi / N]`.
    Chebyshev { order: u32, k: u32 },
}

/// One monotone piece of an interval map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub lo: f64,
    pub hi: f64,
    /// Whether the right endpoint belongs to this branch when evaluating `T`.
    pub closed_right: bool,
    pub image_lo: f64,
    pub image_hi: f64,
    pub increasing: bool,
    pub kind: BranchKind,
}

impl Branch {
    /// A full branch: its image is the whole domain `image`. The image is set
    /// exactly rather than evaluated, since `T` at a branch end can be off by
    /// an ulp, and near a critical point that ulp moves the inverse a lot.
    fn full(lo: f64, hi: f64, closed_right: bool, kind: BranchKind, image: (f64, f64)) -> Self {
        let mut b = Self {
            lo,
            hi,
            closed_right,
            image_lo: image.0,
            image_hi: image.1,
            increasing: true,
            kind,
        };
        b.increasing = b.forward(hi) > b.forward(lo);
        b
    }

    pub fn contains(&self, y: f64) -> bool {
        (self.lo <= y && y < self.hi) || (self.closed_right && y == self.hi)
    }

    pub fn image_contains(&self, x: f64) -> bool {
        self.image_lo <= x && x <= self.image_hi
    }

    pub fn forward(&self, y: f64) -> f64 {
        match self.kind {
            BranchKind::Affine { slope, offset } => slope * y + offset,
            BranchKind::LsvLeft { gamma } => y * (1.0 + (2.0 * y).powf(gamma)),
            BranchKind::PomeauManneville { gamma, shift } => y + y.powf(1.0 + gamma) - shift,
            BranchKind::Chebyshev { order, .. } => chebyshev_t(order, y),
        }
    }

    /// `|T'(y)|`.
    pub fn derivative(&self, y: f64) -> f64 {
        match self.kind {
            BranchKind::Affine { slope, .. } => slope.abs(),
            BranchKind::LsvLeft { gamma } => 1.0 + (1.0 + gamma) * (2.0 * y).powf(gamma),
            BranchKind::PomeauManneville { gamma, .. } => 1.0 + (1.0 + gamma) * y.powf(gamma),
            BranchKind::Chebyshev { order, .. } => {
                (order as f64 * chebyshev_u(order - 1, y)).abs()
            }
        }
    }

    /// Branch inverse of `x`, which is clamped into the branch image.
    pub fn inverse(&self, x: f64) -> f64 {
        let x = x.clamp(self.image_lo, self.image_hi);
        match self.kind {
            BranchKind::Affine { slope, offset } => ((x - offset) / slope).clamp(self.lo, self.hi),
            BranchKind::Chebyshev { order, k } => {
                let phi = x.acos();
                let phi = if k % 2 == 0 { phi } else { PI - phi };
                ((k as f64 * PI + phi) / order as f64).cos().clamp(self.lo, self.hi)
            }
            BranchKind::LsvLeft { .. } | BranchKind::PomeauManneville { .. } => {
                safeguarded_newton(|y| self.forward(y), |y| self.derivative(y), x, self.lo, self.hi)
            }
        }
    }
}

/// `T_n(y)` by the three-term recurrence.
fn chebyshev_t(n: u32, y: f64) -> f64 {
    let (mut a, mut b) = (1.0, y);
    if n == 0 {
        return a;
    }
    for _ in 1..n {
        let c = 2.0 * y * b - a;
        a = b;
        b = c;
    }
    b
}

/// `U_n(y)`; `T_n' = n U_{n-1}`.
fn chebyshev_u(n: u32, y: f64) -> f64 {
    let (mut a, mut b) = (1.0, 2.0 * y);
    if n == 0 {
        return a;
    }
    for _ in 1..n {
        let c = 2.0 * y * b - a;
        a = b;
        b = c;
    }
    b
}

/// Solves `f(y) = target` for increasing `f` on `[lo, hi]`. Newton steps
/// that leave the current bracket are replaced by bisection.
fn safeguarded_newton(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    target: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let (mut a, mut b) = (lo, hi);
    if f(a) >= target {
        return a;
    }
    if f(b) <= target {
        return b;
    }
    let mut y = a + (b - a) * (target - f(a)) / (f(b) - f(a));
    for _ in 0..200 {
        let r = f(y) - target;
        if r == 0.0 {
            return y;
        }
        if r > 0.0 {
            b = y;
        } else {
            a = y;
        }
        if b - a <= f64::EPSILON * b.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let d = df(y);
        let step = y - r / d;
        y = if d > 0.0 && step > a && step < b {
            step
        } else {
            0.5 * (a + b)
        };
        if r.abs() <= 1e-16 * target.abs().max(1e-300) {
            break;
        }
    }
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MapFamily {
    Lsv { gamma: f64 },
    MannevillePomeau { gamma: f64 },
    Doubling,
    Chebyshev { order: u32 },
}

impl fmt::Display for MapFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapFamily::Lsv { gamma } => write!(f, "lsv:{gamma}"),
            MapFamily::MannevillePomeau { gamma } => write!(f, "mp:{gamma}"),
            MapFamily::Doubling => write!(f, "doubling"),
            MapFamily::Chebyshev { order } => write!(f, "chebyshev:{order}"),
        }
    }
}

/// A preimage together with `|T'(y)|` and the index of its branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preimage {
    pub y: f64,
    pub deriv: f64,
    pub branch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalMap {
    family: MapFamily,
    lo: f64,
    hi: f64,
    branches: Vec<Branch>,
}

impl IntervalMap {
    /// Parses `lsv:G`, `mp:G` (or `manneville_pomeau:G`), `doubling` and
    /// `chebyshev:N`. Parentheses are accepted in place of the colon.
    pub fn builtin(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, param) = match spec.find([':', '(']) {
            Some(i) => (
                &spec[..i],
                Some(spec[i + 1..].trim_end_matches(')').trim()),
            ),
            None => (spec, None),
        };
        let gamma = |p: Option<&str>| -> Result<f64> {
            let p = p.ok_or_else(|| Error::Config(format!("map `{name}` needs a parameter")))?;
            p.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad map parameter `{p}`")))
        };
        match name.to_ascii_lowercase().as_str() {
            "lsv" => Self::lsv(gamma(param)?),
            "mp" | "manneville_pomeau" | "pomeau_manneville" => {
                Self::manneville_pomeau(gamma(param)?)
            }
            "doubling" => match param {
                None => Ok(Self::doubling()),
                Some(_) => Err(Error::Config("doubling takes no parameter".to_string())),
            },
            "chebyshev" => {
                let p = param.unwrap_or("2");
                let n = p
                    .parse::<u32>()
                    .map_err(|_| Error::Config(format!("bad Chebyshev order `{p}`")))?;
                Self::chebyshev(n)
            }
            _ => Err(Error::Config(format!("unknown map `{spec}`"))),
        }
    }

    pub fn lsv(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            family: MapFamily::Lsv { gamma },
            lo: 0.0,
            hi: 1.0,
            branches: vec![
                Branch::full(0.0, 0.5, true, BranchKind::LsvLeft { gamma }, UNIT),
                Branch::full(0.5, 1.0, true, BranchKind::Affine { slope: 2.0, offset: -1.0 }, UNIT),
            ],
        })
    }

    /// `y + y^(1+gamma) mod 1`. Branch break points solve `y + y^(1+gamma) = j`.
    pub fn manneville_pomeau(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let g = |y: f64| y + y.powf(1.0 + gamma);
        let dg = |y: f64| 1.0 + (1.0 + gamma) * y.powf(gamma);
        let top = g(1.0).floor() as usize;
        let mut cuts = vec![0.0];
        for j in 1..=top {
            let c = safeguarded_newton(g, dg, j as f64, 0.0, 1.0);
            if c < 1.0 {
                cuts.push(c);
            }
        }
        cuts.push(1.0);
        let branches = cuts
            .windows(2)
            .enumerate()
            .map(|(j, w)| {
                let last = j + 2 == cuts.len();
                let kind = BranchKind::PomeauManneville { gamma, shift: j as f64 };
                Branch::full(w[0], w[1], last, kind, UNIT)
            })
            .collect();
        Ok(Self {
            family: MapFamily::MannevillePomeau { gamma },
            lo: 0.0,
            hi: 1.0,
            branches,
        })
    }

    pub fn doubling() -> Self {
        Self {
            family: MapFamily::Doubling,
            lo: 0.0,
            hi: 1.0,
            branches: vec![
                Branch::full(0.0, 0.5, false, BranchKind::Affine { slope: 2.0, offset: 0.0 }, UNIT),
                Branch::full(0.5, 1.0, true, BranchKind::Affine { slope: 2.0, offset: -1.0 }, UNIT),
            ],
        }
    }

    pub fn chebyshev(order: u32) -> Result<Self> {
        if order < 2 {
            return Err(Error::Config(format!("Chebyshev order must be >= 2, got {order}")));
        }
        let n = order as f64;
        // Increasing y means decreasing arccos, so walk k downward.
        let branches = (0..order)
            .rev()
            .map(|k| {
                let lo = if k + 1 == order { -1.0 } else { ((k + 1) as f64 * PI / n).cos() };
                let hi = if k == 0 { 1.0 } else { (k as f64 * PI / n).cos() };
                Branch::full(lo, hi, k == 0, BranchKind::Chebyshev { order, k }, (-1.0, 1.0))
            })
            .collect();
        Ok(Self {
            family: MapFamily::Chebyshev { order },
            lo: -1.0,
            hi: 1.0,
            branches,
        })
    }

    pub fn family(&self) -> MapFamily {
        self.family
    }

    pub fn name(&self) -> String {
        self.family.to_string()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.family {
            MapFamily::Lsv { gamma } | MapFamily::MannevillePomeau { gamma } => Some(gamma),
            _ => None,
        }
    }

    fn branch_of(&self, y: f64) -> &Branch {
        self.branches
            .iter()
            .find(|b| b.contains(y))
            .unwrap_or_else(|| if y < self.lo { &self.branches[0] } else { self.branches.last().unwrap() })
    }

    /// `T(y)` without domain checks.
    pub fn apply(&self, y: f64) -> f64 {
        self.branch_of(y).forward(y)
    }

    pub fn derivative(&self, y: f64) -> f64 {
        self.branch_of(y).derivative(y)
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if x >= self.lo && x <= self.hi {
            Ok(())
        } else {
            Err(Error::Domain { x, lo: self.lo, hi: self.hi })
        }
    }

    pub fn preimages(&self, x: f64) -> Result<Vec<Preimage>> {
        self.check_domain(x)?;
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.image_contains(x))
            .map(|(branch, b)| {
                let y = b.inverse(x);
                let deriv = b.derivative(y);
                if deriv.is_finite() && deriv >= SINGULAR_DERIVATIVE {
                    Ok(Preimage { y, deriv, branch })
                } else {
                    Err(Error::SingularDerivative { y, deriv })
                }
            })
            .collect()
    }

    /// One step with the escape check; small excursions are clamped.
    pub fn step(&self, y: f64, step: usize) -> Result<f64> {
        let z = self.apply(y);
        if !z.is_finite() || z < self.lo - ESCAPE_TOL || z > self.hi + ESCAPE_TOL {
            return Err(Error::NumericalEscape { step, value: z });
        }
        Ok(z.clamp(self.lo, self.hi))
    }

    /// `[y0, T y0, ..., T^(n-1) y0]` in floating point.
    pub fn orbit(&self, y0: f64, n: usize) -> Result<Vec<f64>> {
        self.check_domain(y0)?;
        let mut out = Vec::with_capacity(n);
        let mut y = y0;
        for j in 0..n {
            out.push(y);
            if j + 1 < n {
                y = self.step(y, j + 1)?;
            }
        }
        Ok(out)
    }

    /// Closed-form invariant density, if the family has one.
    pub fn invariant_law(&self) -> Option<DensityLaw> {
        match self.family {
            MapFamily::Doubling => Some(DensityLaw::Uniform),
            MapFamily::Chebyshev { .. } => Some(DensityLaw::Arcsine),
            _ => None,
        }
    }

    /// Inverse-CDF sampler of the invariant law applied to `u` in `[0, 1)`.
    pub fn inverse_cdf(&self, u: f64) -> Option<f64> {
        match self.family {
            MapFamily::Doubling => Some(u),
            MapFamily::Chebyshev { .. } => Some((PI * u).cos()),
            _ => None,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("gamma must be positive, got {gamma}")))
    }
}

/// Source of binary digits for [`BitQueue`].
pub trait BitSource {
    fn next_bit(&mut self) -> bool;
}

/// Binary expansion of the rational `p / q` in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct RationalBits {
    p: u128,
    q: u128,
}

impl RationalBits {
    pub fn new(p: u64, q: u64) -> Result<Self> {
        if q == 0 || p >= q {
            return Err(Error::InvalidInput(format!("{p}/{q} is not in [0, 1)")));
        }
        Ok(Self { p: p as u128, q: q as u128 })
    }
}

impl BitSource for RationalBits {
    fn next_bit(&mut self) -> bool {
        self.p *= 2;
        if self.p >= self.q {
            self.p -= self.q;
            true
        } else {
            false
        }
    }
}

/// Independent fair bits drawn 64 at a time from an RNG.
pub struct RandomBits<R> {
    rng: R,
    word: u64,
    left: u32,
}

impl<R: rand::RngCore> RandomBits<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, word: 0, left: 0 }
    }
}

impl<R: rand::RngCore> BitSource for RandomBits<R> {
    fn next_bit(&mut self) -> bool {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        self.left -= 1;
        (self.word >> self.left) & 1 == 1
    }
}

/// Doubling-map state as a shift register over a stream of bits. The
/// current point is read off the leading 64 bits, so orbits never collapse
/// onto the floating-point fixed point at 0.
pub struct BitQueue<S> {
    head: u64,
    source: S,
}

impl<S: BitSource> BitQueue<S> {
    pub fn new(mut source: S) -> Self {
        let mut head = 0u64;
        for _ in 0..64 {
            head = (head << 1) | source.next_bit() as u64;
        }
        Self { head, source }
    }

    /// Current point, correctly rounded from its leading 64 bits.
    pub fn value(&self) -> f64 {
        let y = self.head as f64 * (-64f64).exp2();
        if y >= 1.0 {
            1.0 - f64::EPSILON / 2.0
        } else {
            y
        }
    }

    /// Applies the doubling map: drop the leading bit, pull one in at the back.
    pub fn advance(&mut self) {
        self.head = (self.head << 1) | self.source.next_bit() as u64;
    }
}

/// Exact doubling-map orbit of the rational `p / q`.
pub fn doubling_rational_orbit(p: u64, q: u64, n: usize) -> Result<Vec<f64>> {
    let mut queue = BitQueue::new(RationalBits::new(p, q)?);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(queue.value());
        queue.advance();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bisect(f: impl Fn(f64) -> f64, target: f64, mut a: f64, mut b: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) < target {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn lsv_forward_value() {
        let t = IntervalMap::lsv(0.5).unwrap();
        let expected = 0.25 * (1.0 + 2f64.sqrt() / 2.0);
        assert!((t.apply(0.25) - expected).abs() < 1e-15);
        assert!((t.apply(0.25) - 0.4268).abs() < 1e-4);
        assert_eq!(t.apply(0.5), 1.0);
        assert_eq!(t.apply(0.75), 0.5);
    }

    #[test]
    fn chebyshev_forward_value() {
        let t = IntervalMap::chebyshev(2).unwrap();
        assert_eq!(t.apply(0.0), -1.0);
        let t3 = IntervalMap::chebyshev(3).unwrap();
        for y in [-0.9, -0.2, 0.35, 0.8] {
            let direct = (3.0 * f64::acos(y)).cos();
            assert!((t3.apply(y) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn doubling_values() {
        let t = IntervalMap::doubling();
        assert!((t.apply(0.3) - 0.6).abs() < 1e-15);
        assert!((t.apply(0.7) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn builtin_parsing() {
        assert_eq!(IntervalMap::builtin("lsv:0.25").unwrap().name(), "lsv:0.25");
        assert_eq!(IntervalMap::builtin("lsv(0.5)").unwrap().gamma(), Some(0.5));
        assert_eq!(IntervalMap::builtin("chebyshev:3").unwrap().branches().len(), 3);
        assert_eq!(IntervalMap::builtin("manneville_pomeau:0.3").unwrap().name(), "mp:0.3");
        for bad in ["lsv", "lsv:-1", "chebyshev:1", "tent", "doubling:2", "lsv:abc"] {
            assert!(matches!(IntervalMap::builtin(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn doubling_preimages() {
        let p = IntervalMap::doubling().preimages(0.5).unwrap();
        assert_eq!(p, vec![Preimage { y: 0.25, deriv: 2.0, branch: 0 }, Preimage { y: 0.75, deriv: 2.0, branch: 1 }]);
    }

    #[test]
    fn chebyshev_preimages_of_zero() {
        let p = IntervalMap::chebyshev(2).unwrap().preimages(0.0).unwrap();
        assert_eq!(p.len(), 2);
        let r = 0.5f64.sqrt();
        assert!((p[0].y + r).abs() < 1e-15 && (p[1].y - r).abs() < 1e-15);
        for q in &p {
            // oracle: S_2(y) = 2y^2 - 1, S_2'(y) = 4y
            assert!((2.0 * q.y * q.y - 1.0).abs() < 1e-15);
            assert!((q.deriv - 4.0 * q.y.abs()).abs() < 1e-14);
        }
    }

    #[test]
    fn lsv_preimages_against_bisection() {
        let t = IntervalMap::lsv(0.5).unwrap();
        let p = t.preimages(0.9).unwrap();
        assert_eq!(p.len(), 2);
        let left = |y: f64| y * (1.0 + (2.0 * y).powf(0.5));
        let oracle = bisect(left, 0.9, 0.0, 0.5);
        assert!((p[0].y - oracle).abs() < 1e-12);
        assert!((t.apply(p[0].y) - 0.9).abs() < 1e-10);
        assert!((p[1].y - 0.95).abs() < 1e-15);
        assert_eq!(p[1].deriv, 2.0);
    }

    #[test]
    fn preimage_errors() {
        let t = IntervalMap::doubling();
        assert!(matches!(t.preimages(1.5), Err(Error::Domain { .. })));
        let c = IntervalMap::chebyshev(2).unwrap();
        assert!(matches!(c.preimages(-1.0), Err(Error::SingularDerivative { .. })));
    }

    #[test]
    fn mp_has_two_branches_and_inverts() {
        let t = IntervalMap::manneville_pomeau(0.7).unwrap();
        assert_eq!(t.branches().len(), 2);
        let c = t.branches()[0].hi;
        assert!((c + c.powf(1.7) - 1.0).abs() < 1e-14);
        for x in [0.0, 0.1, 0.5, 0.99] {
            for p in t.preimages(x).unwrap() {
                assert!((t.apply(p.y) - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn branch_inverse_round_trip() {
        let maps = [
            IntervalMap::lsv(0.25).unwrap(),
            IntervalMap::lsv(0.9).unwrap(),
            IntervalMap::manneville_pomeau(0.5).unwrap(),
            IntervalMap::doubling(),
            IntervalMap::chebyshev(2).unwrap(),
            IntervalMap::chebyshev(5).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in &maps {
            let (lo, hi) = t.domain();
            for _ in 0..10_000 {
                let x = lo + (hi - lo) * rng.random::<f64>();
                for p in t.preimages(x).unwrap() {
                    assert!((t.apply(p.y) - x).abs() < 1e-10, "{} x={x}", t.name());
                }
            }
        }
    }

    #[test]
    fn closed_form_inverses_are_exact() {
        let t = IntervalMap::chebyshev(4).unwrap();
        for b in t.branches() {
            for s in [0.1, 0.4, 0.77] {
                let y = b.lo + s * (b.hi - b.lo);
                assert!((b.inverse(b.forward(y)) - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orbits() {
        let c = IntervalMap::chebyshev(2).unwrap();
        assert_eq!(c.orbit(1.0, 3).unwrap(), vec![1.0, 1.0, 1.0]);
        let l = IntervalMap::lsv(0.3).unwrap();
        assert!(l.orbit(0.0, 50).unwrap().iter().all(|&y| y == 0.0));
        assert_eq!(c.orbit(0.5, 0).unwrap(), Vec::<f64>::new());
        assert!(c.orbit(2.0, 3).is_err());
    }

    #[test]
    fn rational_doubling_orbit_is_exact() {
        let o = doubling_rational_orbit(1, 3, 4).unwrap();
        assert_eq!(o, vec![1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]);
        let o = doubling_rational_orbit(1, 7, 6).unwrap();
        assert_eq!(o, vec![1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]);
    }

    #[test]
    fn random_bit_queue_does_not_collapse() {
        let mut q = BitQueue::new(RandomBits::new(ChaCha8Rng::seed_from_u64(3)));
        let mut mean = 0.0;
        for _ in 0..100_000 {
            mean += q.value();
            q.advance();
        }
        assert!((mean / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn lsv_neutral_fixed_point() {
        let t = IntervalMap::lsv(0.25).unwrap();
        assert_eq!(t.apply(0.0), 0.0);
        let ratios: Vec<f64> = (1..8)
            .map(|k| {
                let y = 0.5f64.powi(4 * k);
                (t.apply(y) - y) / y
            })
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]));
        assert!(*ratios.last().unwrap() < 1e-2);
    }

    #[test]
    fn samplers() {
        let c = IntervalMap::chebyshev(2).unwrap();
        assert_eq!(c.inverse_cdf(0.5).map(|y| y.abs() < 1e-15), Some(true));
        assert!(IntervalMap::lsv(0.2).unwrap().inverse_cdf(0.5).is_none());
        assert_eq!(IntervalMap::doubling().invariant_law(), Some(DensityLaw::Uniform));
    }
}
