//! Finite-volume solver for `dX = b^2 X'' dt + sqrt(2) dW` on `[0, domain_len]`
//! with reflecting ends, and the fractional Brownian covariance.
//!
//! Cell `i` covers `[i h, (i + 1) h]`. Each cell receives noise
//! `sqrt(2 dt / h) xi_i`, the finite-volume discretization of space-time white
//! noise, and the field is paired with a test function through exact cell
//! integrals `X(f) = sum_i X_i int_cell f`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, Stream};
use crate::sampler::{Mollifier, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Forward Euler; requires `b^2 dt / h^2 <= 1/2`.
    Explicit,
    /// Crank-Nicolson on the Laplacian with the noise added to the right-hand side.
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDatum {
    Zero,
    Constant(f64),
    /// `X_0(x) = W(x) / b` for a standard Brownian motion `W` from the origin,
    /// the law of the limiting static part of the particle field.
    Brownian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheConfig {
    pub b: f64,
    pub h: f64,
    pub dt: f64,
    pub domain_len: f64,
    pub scheme: Scheme,
    pub initial: InitialDatum,
    /// Multiplies the noise; 0 gives the deterministic heat flow.
    pub noise: f64,
}

impl SheConfig {
    /// Crank-Nicolson with `dt = h^2 / (2 b^2)` and domain `8 b sqrt(t_max) + s_max`.
    pub fn new(b: f64, h: f64, t_max: f64, s_max: f64) -> Result<Self> {
        if !(b > 0.0 && h > 0.0 && t_max >= 0.0 && s_max >= 0.0) {
            return Err(Error::Parameter("SHE needs b > 0, h > 0, t_max >= 0, s_max >= 0".into()));
        }
        Ok(Self {
            b,
            h,
            dt: h * h / (2.0 * b * b),
            domain_len: 8.0 * b * t_max.sqrt() + s_max,
            scheme: Scheme::CrankNicolson,
            initial: InitialDatum::Zero,
            noise: 1.0,
        })
    }

    pub fn cells(&self) -> usize {
        ((self.domain_len / self.h).ceil() as usize).max(2)
    }

    /// `b^2 dt / h^2`.
    pub fn courant(&self) -> f64 {
        self.b * self.b * self.dt / (self.h * self.h)
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.dt > 0.0 && self.b > 0.0 && self.domain_len > 0.0) {
            return Err(Error::Parameter("SHE grid parameters must be positive".into()));
        }
        if self.scheme == Scheme::Explicit && self.courant() > 0.5 + 1e-12 {
            return Err(Error::Parameter(format!(
                "explicit scheme unstable: b^2 dt / h^2 = {} > 1/2",
                self.courant()
            )));
        }
        Ok(())
    }
}

/// Tridiagonal solve for `(I + c A)` with `A` the Neumann Laplacian stencil
/// `(-1, 2, -1)` (`(-1, 1)` in the end rows), factorized once.
#[derive(Debug, Clone)]
struct Implicit {
    c: f64,
    /// Modified superdiagonal and inverse pivots of the Thomas algorithm.
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl Implicit {
    fn new(c: f64, m: usize) -> Self {
        let diag = |i: usize| 1.0 + c * if i == 0 || i == m - 1 { 1.0 } else { 2.0 };
        let off = -c;
        let mut upper = vec![0.0; m];
        let mut inv_pivot = vec![0.0; m];
        let mut prev_upper = 0.0;
        for i in 0..m {
            let pivot = diag(i) - if i > 0 { off * prev_upper } else { 0.0 };
            inv_pivot[i] = 1.0 / pivot;
            upper[i] = off / pivot;
            prev_upper = upper[i];
        }
        Self { c, upper, inv_pivot }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let m = rhs.len();
        let off = -self.c;
        rhs[0] *= self.inv_pivot[0];
        for i in 1..m {
            rhs[i] = (rhs[i] - off * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..m - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }
}

/// One replica of the discretized equation.
#[derive(Debug, Clone)]
pub struct SheGrid {
    pub config: SheConfig,
    pub values: Vec<f64>,
    pub t: f64,
    scratch: Vec<f64>,
    implicit: Option<Implicit>,
}

impl SheGrid {
    pub fn new<R: Rng + ?Sized>(config: SheConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let m = config.cells();
        let values = match config.initial {
            InitialDatum::Zero => vec![0.0; m],
            InitialDatum::Constant(c) => vec![c; m],
            InitialDatum::Brownian => {
                let (h, b) = (config.h, config.b);
                let mut v = Vec::with_capacity(m);
                // first centre sits at h/2, later centres are h apart
                let z: f64 = rng.sample(StandardNormal);
                let mut w = z * (0.5 * h).sqrt() / b;
                v.push(w);
                for _ in 1..m {
                    let z: f64 = rng.sample(StandardNormal);
                    w += z * h.sqrt() / b;
                    v.push(w);
                }
                v
            }
        };
        Ok(Self { config, values, t: 0.0, scratch: vec![0.0; m], implicit: None })
    }

    /// `sum_i X_i h`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.config.h
    }

    fn step_with<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) {
        let m = self.values.len();
        let h = self.config.h;
        let r = self.config.b * self.config.b * dt / (h * h);
        let sigma = self.config.noise * (2.0 * dt / h).sqrt();
        let x = &self.values;
        let lap = |i: usize| {
            let left = if i == 0 { x[0] } else { x[i - 1] };
            let right = if i + 1 == m { x[m - 1] } else { x[i + 1] };
            left - 2.0 * x[i] + right
        };
        match self.config.scheme {
            Scheme::Explicit => {
                for i in 0..m {
                    self.scratch[i] = x[i] + r * lap(i);
                }
            }
            Scheme::CrankNicolson => {
                for i in 0..m {
                    self.scratch[i] = x[i] + 0.5 * r * lap(i);
                }
            }
        }
        if sigma > 0.0 {
            for s in self.scratch.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *s += sigma * z;
            }
        }
        if self.config.scheme == Scheme::CrankNicolson {
            let c = 0.5 * r;
            if self.implicit.as_ref().map_or(true, |s| s.c != c) {
                self.implicit = Some(Implicit::new(c, m));
            }
            self.implicit.as_ref().expect("factorized above").solve(&mut self.scratch);
        }
        std::mem::swap(&mut self.values, &mut self.scratch);
        self.t += dt;
    }

    /// Advances to time `t` (at least the current time) in equal steps no longer than `dt`.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) {
        let span = t - self.t;
        if span <= 0.0 {
            return;
        }
        let steps = (span / self.config.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for _ in 0..steps {
            self.step_with(dt, rng);
        }
        self.t = t;
    }

    /// `X(f) = sum_i X_i (F(x_{i+1}) - F(x_i))` with cell edges `x_i = i h`.
    pub fn pair(&self, f: &TestFunction) -> f64 {
        let h = self.config.h;
        let last = ((f.s_max() / h).ceil() as usize).min(self.values.len());
        let mut prev = f.big_f(0.0);
        let mut acc = 0.0;
        for i in 0..last {
            let next = f.big_f((i + 1) as f64 * h);
            acc += self.values[i] * (next - prev);
            prev = next;
        }
        acc
    }

    /// `X(phi_eps) = sum_i X_i (h_eps(x_i) - h_eps(x_{i+1}))`.
    pub fn pair_mollifier(&self, m: &Mollifier) -> f64 {
        let h = self.config.h;
        let last = ((m.eps() / h).ceil() as usize).min(self.values.len());
        let mut prev = 1.0;
        let mut acc = 0.0;
        for i in 0..last {
            let next = m.h((i + 1) as f64 * h);
            acc += self.values[i] * (prev - next);
            prev = next;
        }
        acc
    }
}

/// One explicit or Crank-Nicolson step of length `config.dt`.
pub fn she_step<R: Rng + ?Sized>(grid: &mut SheGrid, rng: &mut R) -> Result<()> {
    grid.config.validate()?;
    let dt = grid.config.dt;
    grid.step_with(dt, rng);
    Ok(())
}

/// Checks that the mollifier is resolved by the grid (`eps >= 2h`).
pub fn check_resolution(config: &SheConfig, m: &Mollifier) -> Result<()> {
    if m.eps() < 2.0 * config.h {
        return Err(Error::Resolution(format!("eps = {} below 2h = {}", m.eps(), 2.0 * config.h)));
    }
    Ok(())
}

/// `X_t(phi_eps)` along a stored sequence of grids.
pub fn boundary_field(grids: &[SheGrid], m: &Mollifier) -> Result<Vec<(f64, f64)>> {
    if let Some(g) = grids.first() {
        check_resolution(&g.config, m)?;
    }
    Ok(grids.iter().map(|g| (g.t, g.pair_mollifier(m))).collect())
}

/// Values of one replica at the sample times: test functions first, then mollifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

/// Runs `replicas` independent solutions; replica `i` uses stream `i` of the SHE purpose.
pub fn run_she_ensemble(
    config: &SheConfig,
    sample_times: &[f64],
    observables: &[TestFunction],
    mollifiers: &[Mollifier],
    seed: u64,
    replicas: usize,
) -> Result<Vec<SheTrajectory>> {
    config.validate()?;
    for m in mollifiers {
        check_resolution(config, m)?;
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) || sample_times.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::Parameter("sample times must be nonnegative and increasing".into()));
    }
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng: Stream = stream(seed, Purpose::She, i as u64);
            let mut grid = SheGrid::new(config.clone(), &mut rng)?;
            let measure = |g: &SheGrid| -> Vec<f64> {
                observables
                    .iter()
                    .map(|f| g.pair(f))
                    .chain(mollifiers.iter().map(|m| g.pair_mollifier(m)))
                    .collect()
            };
            let initial = measure(&grid);
            let mut values = Vec::with_capacity(sample_times.len());
            for &t in sample_times {
                grid.advance_to(t, &mut rng);
                values.push(measure(&grid));
            }
            Ok(SheTrajectory { times: sample_times.to_vec(), values, initial })
        })
        .collect()
}

/// `scale (t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn fbm_covariance(t: f64, s: f64, hurst: f64, scale: f64) -> f64 {
    let e = 2.0 * hurst;
    0.5 * scale * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_stream;

    fn quiet(scheme: Scheme, initial: InitialDatum) -> SheConfig {
        SheConfig { b: 1.0, h: 0.05, dt: 0.001, domain_len: 2.0, scheme, initial, noise: 0.0 }
    }

    #[test]
    fn zero_stays_zero() {
        let mut rng = replica_stream(1, 0);
        let mut g = SheGrid::new(quiet(Scheme::Explicit, InitialDatum::Zero), &mut rng).unwrap();
        for _ in 0..100 {
            she_step(&mut g, &mut rng).unwrap();
        }
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constants_preserved() {
        for scheme in [Scheme::Explicit, Scheme::CrankNicolson] {
            let mut rng = replica_stream(1, 0);
            let mut g = SheGrid::new(quiet(scheme, InitialDatum::Constant(2.5)), &mut rng).unwrap();
            g.advance_to(0.3, &mut rng);
            assert!(g.values.iter().all(|&v| (v - 2.5).abs() < 1e-12), "{scheme:?}");
        }
    }

    #[test]
    fn unstable_explicit_rejected() {
        let mut c = quiet(Scheme::Explicit, InitialDatum::Zero);
        c.dt = 0.01;
        assert!(SheGrid::new(c, &mut replica_stream(1, 0)).is_err());
    }

    #[test]
    fn fbm_covariance_values() {
        assert_eq!(fbm_covariance(1.0, 0.0, 0.25, 1.0), 0.0);
        assert!((fbm_covariance(1.0, 1.0, 0.25, 1.0) - 1.0).abs() < 1e-15);
        assert!((fbm_covariance(4.0, 1.0, 0.25, 1.0) - 0.633_974_596_215_561_4).abs() < 1e-12);
    }

    #[test]
    fn under_resolved_mollifier_rejected() {
        let c = quiet(Scheme::Explicit, InitialDatum::Zero);
        let m = crate::sampler::make_mollifier(0.05).unwrap();
        assert!(matches!(check_resolution(&c, &m), Err(Error::Resolution(_))));
    }
}
