//! Current fluctuation field, discrete calculus and martingale observables.
//!
//! With `fw[x] = f(x/n)` on bonds `0..=len`, the field is
//! `X_t(f) = n^{-5/2} sum_x J_t(x) fw[x] + n^{-3/2} sum_x (eta_0(x) - rho) F(x/n)`.
//! A jump from site `z` by `k` changes `sum_x J(x) fw[x]` by the sum of `fw`
//! over the crossed bonds, which gives the per-site weights used by the engine
//! to integrate the compensator and the quadratic variation exactly.

use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::model::{Configuration, CurrentLedger, Kernel, ProcessParams};
use crate::sampler::TestFunction;

/// A time series `(t, value)` derived from a trajectory.
pub type Series = Vec<(f64, f64)>;

/// Field value at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    /// Macroscopic time.
    pub t: f64,
    /// `X_t(f)` for each registered test function, in registration order.
    pub values: Vec<f64>,
    /// `J_t(0)`.
    pub j0: i64,
    /// Checksum of the whole current ledger.
    pub checksum: u64,
    /// `<M_t(f)>` for each registered accumulator.
    pub qv: Vec<f64>,
    /// `int_0^t sum_z (g_s(z) - lambda) w(z) ds` for each registered accumulator.
    pub drift_integral: Vec<f64>,
    /// `int_0^t sum_z (eta_s(z) - rho) w(z) ds` for each registered accumulator.
    pub density_integral: Vec<f64>,
    /// `sup_{s <= t} |drift_integral(s)|`.
    pub drift_sup: Vec<f64>,
    /// Events executed up to `t`.
    pub events: u64,
}

/// Per-site weights of one additive functional, indexed by site `1..=len`.
///
/// For a test function, `drift[z]` is the discrete gradient `nabla_z^n f` (its
/// kernel generalization otherwise) and `qv[z]` is the expected squared jump of
/// `sum_x J(x) f(x/n)` per unit rate at `z`. `qv_const` collects the jumps out
/// of the source and the right reservoir.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteWeights {
    pub drift: Vec<f64>,
    pub qv: Vec<f64>,
    /// `sum_{z in window} drift[z]`.
    pub drift_total: f64,
    pub qv_const: f64,
    /// Multiplies the accumulated `qv` integral on output.
    pub qv_scale: f64,
}

impl SiteWeights {
    /// Weights of the field `X(f)` for the process `params`.
    pub fn for_field(params: &ProcessParams, f: &TestFunction) -> Result<Self> {
        check_support(params, f)?;
        let n = params.n as f64;
        let fw: Vec<f64> = (0..=params.len).map(|x| f.f(x as f64 / n)).collect();
        let mut w = Self::from_bond_weights(&fw, params.kernel.as_ref(), params.lambda);
        for d in &mut w.drift {
            *d *= n;
        }
        w.drift_total *= n;
        w.qv_scale = 1.0 / n;
        Ok(w)
    }

    /// Weights of `sum_x (g(eta(x)) - g(eta(x+1))) h(x)` for bond weights
    /// `h[x]`, `x = 0..=len` (nearest-neighbour dynamics).
    pub fn bond_difference(h: &[f64], lambda: f64) -> Self {
        Self::from_bond_weights(h, None, lambda)
    }

    /// Generic construction: `fw[x]` for bonds `0..=len`.
    pub fn from_bond_weights(fw: &[f64], kernel: Option<&Kernel>, lambda: f64) -> Self {
        let len = fw.len() - 1;
        let mut drift = vec![0.0; len + 1];
        let mut qv = vec![0.0; len + 1];
        match kernel.filter(|k| !k.is_nearest_neighbor()) {
            None => {
                for z in 1..=len {
                    let (a, b) = (fw[z], fw[z - 1]);
                    drift[z] = a - b;
                    qv[z] = a * a + b * b;
                }
                // virtual source site 0 and right reservoir site len + 1
                let qv_const = lambda * (fw[0] * fw[0] + fw[len] * fw[len]);
                let drift_total = fw[len] - fw[0];
                Self { drift, qv, drift_total, qv_const, qv_scale: 1.0 }
            }
            Some(kernel) => {
                let mut prefix = vec![0.0; len + 2];
                for x in 0..=len {
                    prefix[x + 1] = prefix[x] + fw[x];
                }
                let p = |x: i64| prefix[x.clamp(0, len as i64 + 1) as usize];
                // sum of fw over bonds a..b-1, clipped to the window
                let cut = |a: i64, b: i64| p(b) - p(a);
                let site = |z: i64| -> (f64, f64) {
                    let mut d = 0.0;
                    let mut q = 0.0;
                    for (i, &pk) in kernel.positive_weights().iter().enumerate() {
                        let k = i as i64 + 1;
                        let (right, left) = (cut(z, z + k), cut(z - k, z));
                        d += 2.0 * pk * (right - left);
                        q += 2.0 * pk * (right * right + left * left);
                    }
                    (d, q)
                };
                let r = kernel.range() as i64;
                let mut drift_total = 0.0;
                for z in 1..=len {
                    let (d, q) = site(z as i64);
                    drift[z] = d;
                    qv[z] = q;
                    drift_total += d;
                }
                let virtual_q: f64 =
                    (1 - r..=0).chain(len as i64 + 1..=len as i64 + r).map(|z| site(z).1).sum();
                Self { drift, qv, drift_total, qv_const: lambda * virtual_q, qv_scale: 1.0 }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.drift.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_support(params: &ProcessParams, f: &TestFunction) -> Result<()> {
    let (lo, hi) = f.support();
    let window = params.len as f64 / params.n as f64;
    if hi > window {
        return Err(Error::Support { lo, hi, window });
    }
    Ok(())
}

/// `n^{-5/2} sum_x J(x) f(x/n)`, restricted to the support of `f`.
pub fn current_pairing(ledger: &CurrentLedger, n: u32, f: &TestFunction) -> f64 {
    let nf = n as f64;
    let (lo, hi) = f.support();
    let first = ((lo * nf).floor().max(0.0)) as usize;
    let last = ((hi * nf).ceil() as usize).min(ledger.len());
    let sum: f64 = (first..=last).map(|x| ledger.get(x) as f64 * f.f(x as f64 / nf)).sum();
    sum * nf.powf(-2.5)
}

/// `n^{-3/2} sum_{x >= 1} (eta_0(x) - rho) F(x/n)`.
pub fn static_field(config0: &Configuration, params: &ProcessParams, f: &TestFunction) -> f64 {
    let nf = params.n as f64;
    let last = ((f.s_max() * nf).ceil() as usize).min(config0.len());
    let sum: f64 = (1..=last)
        .map(|x| (config0.get(x) as f64 - params.rho) * f.big_f(x as f64 / nf))
        .sum();
    sum * nf.powf(-1.5)
}

/// `X(f)` from the initial configuration and the current ledger.
pub fn evaluate_field(
    config0: &Configuration,
    ledger: &CurrentLedger,
    params: &ProcessParams,
    f: &TestFunction,
) -> Result<f64> {
    check_support(params, f)?;
    if config0.len() != params.len || ledger.len() != params.len {
        return Err(Error::Shape(format!(
            "window has {} sites but configuration has {} and ledger {}",
            params.len,
            config0.len(),
            ledger.len()
        )));
    }
    Ok(current_pairing(ledger, params.n, f) + static_field(config0, params, f))
}

/// `nabla_x^n f = n (f(x/n) - f((x-1)/n))`.
pub fn discrete_gradient(f: &TestFunction, n: u32, x: i64) -> f64 {
    let nf = n as f64;
    nf * (f.f(x as f64 / nf) - f.f((x - 1) as f64 / nf))
}

/// `Delta_x^n f = n (nabla_{x+1}^n f - nabla_x^n f)`.
pub fn discrete_laplacian(f: &TestFunction, n: u32, x: i64) -> f64 {
    n as f64 * (discrete_gradient(f, n, x + 1) - discrete_gradient(f, n, x))
}

/// Direct evaluation of `sum_{x >= 1} (g(eta(x)) - lambda) nabla_x^n f` at a frozen configuration.
pub fn drift_integrand(config: &Configuration, params: &ProcessParams, f: &TestFunction) -> f64 {
    (1..=config.len())
        .map(|x| {
            let g = if config.get(x) > 0 { 1.0 } else { 0.0 };
            (g - params.lambda) * discrete_gradient(f, params.n, x as i64)
        })
        .sum()
}

/// Direct evaluation of the Boltzmann-Gibbs integrand
/// `sum_{x >= 1} (g - lambda - (eta - rho) / (1 + rho)^2) nabla_x^n f` at a frozen configuration.
pub fn bg_integrand(config: &Configuration, params: &ProcessParams, f: &TestFunction) -> f64 {
    let c = 1.0 / (1.0 + params.rho).powi(2);
    (1..=config.len())
        .map(|x| {
            let eta = config.get(x) as f64;
            let g = if eta > 0.0 { 1.0 } else { 0.0 };
            (g - params.lambda - c * (eta - params.rho)) * discrete_gradient(f, params.n, x as i64)
        })
        .sum()
}

/// The three terms of the summation-by-parts identity behind the continuity
/// relation, all evaluated at one frozen time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityTerms {
    /// `n^{-3/2} sum_{x >= 1} (eta_s(x) - rho) nabla_x^n f`.
    pub density: f64,
    /// `n^{-5/2} sum_{x >= 0} J_s(x) Delta_x^n f`.
    pub laplacian: f64,
    /// `n^{-3/2} sum_{x >= 1} (eta_0(x) - rho) nabla_x^n f`.
    pub initial: f64,
    /// `n^{-3/2} J_s(0) nabla_0^n f`.
    pub boundary: f64,
}

impl ContinuityTerms {
    /// `density - (laplacian + initial + boundary)`; zero up to rounding.
    pub fn defect(&self) -> f64 {
        self.density - (self.laplacian + self.initial + self.boundary)
    }

    pub fn scale(&self) -> f64 {
        self.density.abs() + self.laplacian.abs() + self.initial.abs() + self.boundary.abs()
    }
}

/// Evaluates each side of
/// `sum (eta_s - rho) nabla f = sum J_s Delta f / n + sum (eta_0 - rho) nabla f + J_s(0) nabla_0 f`
/// (scaled as in the field). Requires the support of `f` to end before the last bond.
pub fn continuity_terms(
    config0: &Configuration,
    config_s: &Configuration,
    ledger: &CurrentLedger,
    params: &ProcessParams,
    f: &TestFunction,
) -> Result<ContinuityTerms> {
    check_support(params, f)?;
    let n = params.n;
    let nf = n as f64;
    let len = params.len;
    let sum_density = |c: &Configuration| -> f64 {
        (1..=len)
            .map(|x| (c.get(x) as f64 - params.rho) * discrete_gradient(f, n, x as i64))
            .sum()
    };
    let laplacian: f64 = (0..=len).map(|x| ledger.get(x) as f64 * discrete_laplacian(f, n, x as i64)).sum();
    let s = nf.powf(-1.5);
    Ok(ContinuityTerms {
        density: s * sum_density(config_s),
        laplacian: nf.powf(-2.5) * laplacian,
        initial: s * sum_density(config0),
        boundary: s * ledger.source() as f64 * discrete_gradient(f, n, 0),
    })
}

fn accumulator_index(traj: &Trajectory, index: usize) -> Result<()> {
    if index >= traj.accumulators {
        return Err(Error::MissingAccumulator(format!(
            "accumulator {index} (only {} registered)",
            traj.accumulators
        )));
    }
    Ok(())
}

/// Martingale part of one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSeries {
    pub t: Vec<f64>,
    /// `M_t(f) = X_t(f) - X_0(f) - n^{1/2} int_0^t sum (g - lambda) nabla f ds`.
    pub m: Vec<f64>,
    /// `<M_t(f)>`.
    pub qv: Vec<f64>,
}

/// `M_t(f)` and `<M_t(f)>` for the `index`-th registered test function.
pub fn martingale_part(traj: &Trajectory, index: usize) -> Result<MartingaleSeries> {
    accumulator_index(traj, index)?;
    if index >= traj.fields {
        return Err(Error::MissingAccumulator(format!("accumulator {index} has no field value")));
    }
    let sqrt_n = (traj.params.n as f64).sqrt();
    let x0 = traj.initial_values.get(index).copied().unwrap_or(0.0);
    let mut out = MartingaleSeries { t: vec![], m: vec![], qv: vec![] };
    for s in &traj.samples {
        out.t.push(s.t);
        out.m.push(s.values[index] - x0 - sqrt_n * s.drift_integral[index]);
        out.qv.push(s.qv[index]);
    }
    Ok(out)
}

/// `n^{1/2} int_0^t sum (g - lambda - (eta - rho) / (1 + rho)^2) nabla f ds`.
pub fn bg_residual(traj: &Trajectory, index: usize) -> Result<Series> {
    accumulator_index(traj, index)?;
    let sqrt_n = (traj.params.n as f64).sqrt();
    let c = 1.0 / (1.0 + traj.params.rho).powi(2);
    Ok(traj
        .samples
        .iter()
        .map(|s| (s.t, sqrt_n * (s.drift_integral[index] - c * s.density_integral[index])))
        .collect())
}

/// `J_t(0) / n^{3/2}` at every sample time.
pub fn scaled_origin_current(traj: &Trajectory) -> Series {
    let s = (traj.params.n as f64).powf(-1.5);
    traj.samples.iter().map(|x| (x.t, x.j0 as f64 * s)).collect()
}
