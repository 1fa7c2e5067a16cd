//! Invariant-measure sampling, test functions and mollifiers.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Configuration, ProcessParams};
use crate::quad;

/// Draws a configuration from the product geometric measure
/// `mu(eta(x) = k) = (1 - lambda) lambda^k`, one uniform per site.
pub fn sample_invariant<R: Rng + ?Sized>(params: &ProcessParams, rng: &mut R) -> Result<Configuration> {
    let lambda = params.lambda;
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda must lie in [0, 1), got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(Configuration::empty(params.len));
    }
    let inv_log = 1.0 / lambda.ln();
    let counts = (0..params.len)
        .map(|_| {
            // 1 - U lies in (0, 1], so the logarithm is finite
            let u: f64 = 1.0 - rng.gen::<f64>();
            (u.ln() * inv_log).floor() as u32
        })
        .collect();
    Ok(Configuration::from_counts(counts))
}

/// `psi(u) = exp(-1 / (1 - u^2))` on (-1, 1) with its first two derivatives.
fn std_bump(u: f64) -> (f64, f64, f64) {
    if u.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let s = 1.0 - u * u;
    let psi = (-1.0 / s).exp();
    let d1 = -2.0 * u / (s * s);
    let d2 = 4.0 * u * u / (s * s * s * s) - 2.0 / (s * s) - 8.0 * u * u / (s * s * s);
    (psi, psi * d1, psi * d2)
}

/// `int_{-1}^{1} psi(u) du`.
fn std_bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| quad::integrate(|u| std_bump(u).0, -1.0, 1.0, 64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    /// `amplitude * psi(2 (x - center) / width)` restricted to `x >= 0`.
    Bump { center: f64, width: f64, amplitude: f64 },
    /// `phi_eps(x) = phi(x / eps) / eps` with `phi(u) = psi(2u - 1) / mass` on (0, 1).
    Mollifier { eps: f64 },
}

impl Profile {
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Profile::Zero => (0.0, 0.0, 0.0),
            Profile::Bump { center, width, amplitude } => {
                let k = 2.0 / width;
                let (p, d1, d2) = std_bump(k * (x - center));
                (amplitude * p, amplitude * k * d1, amplitude * k * k * d2)
            }
            Profile::Mollifier { eps } => {
                let c = 2.0 / std_bump_mass() / eps;
                let k = 2.0 / eps;
                let (p, d1, d2) = std_bump(x * k - 1.0);
                (c * p, c * k * d1, c * k * k * d2)
            }
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Profile::Zero => (0.0, 0.0),
            Profile::Bump { center, width, .. } => ((center - 0.5 * width).max(0.0), (center + 0.5 * width).max(0.0)),
            Profile::Mollifier { eps } => (0.0, eps),
        }
    }
}

/// Cubic Hermite table of an antiderivative on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
struct HermiteTable {
    lo: f64,
    dx: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTable {
    fn eval(&self, x: f64) -> f64 {
        let cells = self.values.len() - 1;
        let s = (x - self.lo) / self.dx;
        if s <= 0.0 {
            return self.values[0];
        }
        if s >= cells as f64 {
            return self.values[cells];
        }
        let k = (s.floor() as usize).min(cells - 1);
        let t = s - k as f64;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[k]
            + h10 * self.dx * self.slopes[k]
            + h01 * self.values[k + 1]
            + h11 * self.dx * self.slopes[k + 1]
    }
}

/// Builds `F(x) = -int_x^hi f` on `[lo, hi]` with `cells` cells.
fn tail_table(profile: &Profile, lo: f64, hi: f64, cells: usize) -> HermiteTable {
    let dx = (hi - lo) / cells as f64;
    let f = |x: f64| profile.eval(x).0;
    let mut values = vec![0.0; cells + 1];
    for k in (0..cells).rev() {
        let a = lo + k as f64 * dx;
        values[k] = values[k + 1] - quad::panel(&f, a, a + dx);
    }
    let slopes = (0..=cells).map(|k| f(lo + k as f64 * dx)).collect();
    HermiteTable { lo, dx, values, slopes }
}

/// Smooth compactly supported function on `[0, inf)` with cached `F(x) = -int_x^inf f`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    profile: Profile,
    lo: f64,
    hi: f64,
    neumann_ok: bool,
    table: Option<HermiteTable>,
}

const DEFAULT_CELLS: usize = 1024;

impl TestFunction {
    fn build(profile: Profile, cells: usize) -> Self {
        let (lo, hi) = profile.support();
        let neumann_ok = profile.eval(0.0).1 == 0.0;
        let table = (hi > lo).then(|| tail_table(&profile, lo, hi, cells.max(1)));
        Self { profile, lo, hi, neumann_ok, table }
    }

    pub fn zero() -> Self {
        Self::build(Profile::Zero, 1)
    }

    pub fn from_profile(profile: Profile) -> Result<Self> {
        match profile {
            Profile::Zero => Ok(Self::zero()),
            Profile::Bump { center, width, amplitude } => Ok(make_bump(center, width)?.with_amplitude(amplitude)),
            Profile::Mollifier { eps } => Ok(make_mollifier(eps)?.as_test_function()),
        }
    }

    /// Scales the function (and `F`) by `amplitude`.
    pub fn with_amplitude(self, amplitude: f64) -> Self {
        match self.profile {
            Profile::Bump { center, width, .. } => {
                let cells = self.cells();
                Self::build(Profile::Bump { center, width, amplitude }, cells)
            }
            _ => self,
        }
    }

    fn cells(&self) -> usize {
        self.table.as_ref().map_or(1, |t| t.values.len() - 1)
    }

    /// Rebuilds the `F` cache with spacing at most `min(width / 1024, 1 / (4 n))`.
    pub fn resolved_for(&self, n: u32) -> Self {
        let width = self.hi - self.lo;
        if width <= 0.0 {
            return self.clone();
        }
        let dx = (width / DEFAULT_CELLS as f64).min(0.25 / n as f64);
        let cells = (width / dx).ceil() as usize;
        if cells <= self.cells() {
            return self.clone();
        }
        Self::build(self.profile.clone(), cells)
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn f(&self, x: f64) -> f64 {
        self.profile.eval(x).0
    }

    pub fn df(&self, x: f64) -> f64 {
        self.profile.eval(x).1
    }

    pub fn d2f(&self, x: f64) -> f64 {
        self.profile.eval(x).2
    }

    /// `F(x) = -int_x^inf f(y) dy`.
    pub fn big_f(&self, x: f64) -> f64 {
        match &self.table {
            None => 0.0,
            Some(t) if x >= self.hi => {
                let _ = t;
                0.0
            }
            Some(t) => t.eval(x),
        }
    }

    /// `int_0^inf f`.
    pub fn integral(&self) -> f64 {
        -self.big_f(0.0)
    }

    /// `int_0^inf f^2`, by quadrature.
    pub fn l2_norm_sq(&self) -> f64 {
        if self.hi <= self.lo {
            return 0.0;
        }
        quad::integrate(|x| self.f(x).powi(2), self.lo, self.hi, 64)
    }

    /// `int_0^inf F^2`, by quadrature on the cached `F`.
    pub fn big_f_norm_sq(&self) -> f64 {
        if self.hi <= self.lo {
            return 0.0;
        }
        let f_lo = self.big_f(self.lo);
        self.lo * f_lo * f_lo + quad::integrate(|x| self.big_f(x).powi(2), self.lo, self.hi, 128)
    }

    pub fn sup_norm(&self) -> f64 {
        if self.hi <= self.lo {
            return 0.0;
        }
        (0..=2048)
            .map(|k| self.f(self.lo + (self.hi - self.lo) * k as f64 / 2048.0).abs())
            .fold(0.0, f64::max)
    }

    /// `[lo, hi]`; `f` and `F` vanish beyond `hi`.
    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn s_max(&self) -> f64 {
        self.hi
    }

    /// True iff `f'(0) = 0`.
    pub fn neumann_ok(&self) -> bool {
        self.neumann_ok
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.profile, Profile::Zero)
    }
}

/// Standard bump on `[center - width/2, center + width/2]`, cut at the origin.
///
/// Interior bumps (`center >= width / 2`) and the origin-centred bump have
/// `f'(0) = 0`; other centres give a function outside the Neumann class, which
/// is reported by [`TestFunction::neumann_ok`].
pub fn make_bump(center: f64, width: f64) -> Result<TestFunction> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::Parameter(format!("bump width must be positive, got {width}")));
    }
    if !center.is_finite() || center + 0.5 * width <= 0.0 {
        return Err(Error::Parameter(format!("bump centred at {center} misses [0, inf)")));
    }
    Ok(TestFunction::build(Profile::Bump { center, width, amplitude: 1.0 }, DEFAULT_CELLS))
}

/// Bump centred at the origin: flat at zero (`f'(0) = 0`) with `f(0) > 0`.
pub fn make_boundary_bump(half_width: f64) -> Result<TestFunction> {
    make_bump(0.0, 2.0 * half_width)
}

/// `phi_eps` and `h_eps(x) = int_x^inf phi_eps` for a fixed smooth bump on (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    eps: f64,
    table: HermiteTable,
}

fn unit_mollifier_table() -> &'static HermiteTable {
    static TABLE: OnceLock<HermiteTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let cells = 4096;
        let dx = 1.0 / cells as f64;
        let raw = |u: f64| std_bump(2.0 * u - 1.0).0;
        let mut cum = vec![0.0; cells + 1];
        for k in 0..cells {
            cum[k + 1] = cum[k] + quad::panel(&raw, k as f64 * dx, (k + 1) as f64 * dx);
        }
        let total = cum[cells];
        // (total - cum) / total is exactly 1 at u = 0 and exactly 0 at u = 1
        let values = cum.iter().map(|c| (total - c) / total).collect();
        let slopes = (0..=cells).map(|k| -raw(k as f64 * dx) / total).collect();
        HermiteTable { lo: 0.0, dx, values, slopes }
    })
}

pub fn make_mollifier(eps: f64) -> Result<Mollifier> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Parameter(format!("mollifier width must be positive, got {eps}")));
    }
    Ok(Mollifier { eps, table: unit_mollifier_table().clone() })
}

impl Mollifier {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn phi(&self, x: f64) -> f64 {
        Profile::Mollifier { eps: self.eps }.eval(x).0
    }

    /// `h_eps(x)`: 1 at the origin, 0 from `eps` on.
    pub fn h(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else if x >= self.eps {
            0.0
        } else {
            self.table.eval(x / self.eps)
        }
    }

    /// The mollifier as a test function for the particle field (`F = -h_eps`).
    pub fn as_test_function(&self) -> TestFunction {
        TestFunction::build(Profile::Mollifier { eps: self.eps }, DEFAULT_CELLS)
    }
}
