//! Ensemble statistics: variance scaling, fBM covariance fits, model
//! comparison and goodness of fit.
//!
//! Ensembles are stored replica-major: `data[replica][time]`.

use faer::{Mat, Side};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::she::fbm_covariance;

/// Sample mean and standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Unbiased sample variance with the standard error of that estimate.
pub fn variance_with_error(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = sq.iter().sum::<f64>() / (m - 1.0);
    let (_, se) = mean_stderr(&sq);
    (var, se * m / (m - 1.0))
}

/// Unbiased sample covariance with its standard error.
pub fn covariance_with_error(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let cov = prods.iter().sum::<f64>() / (m - 1.0);
    let (_, se) = mean_stderr(&prods);
    (cov, se * m / (m - 1.0))
}

fn column(data: &[Vec<f64>], j: usize) -> Vec<f64> {
    data.iter().map(|r| r[j]).collect()
}

fn check_ensemble(times: &[f64], data: &[Vec<f64>]) -> Result<()> {
    if data.iter().any(|r| r.len() != times.len()) {
        return Err(Error::Shape(format!("every replica needs {} values", times.len())));
    }
    Ok(())
}

/// Variance at each time for a resample of replicas given by `idx`.
fn variances(data: &[Vec<f64>], idx: &[usize], times: usize) -> Vec<f64> {
    let m = idx.len() as f64;
    (0..times)
        .map(|j| {
            let mean = idx.iter().map(|&i| data[i][j]).sum::<f64>() / m;
            idx.iter().map(|&i| (data[i][j] - mean).powi(2)).sum::<f64>() / (m - 1.0)
        })
        .collect()
}

/// Weighted least squares line; returns `(slope, intercept)`.
fn wls(x: &[f64], y: &[f64], w: &[f64]) -> Result<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("regression design is singular".into()));
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn resample_indices(seed: u64, b: usize, m: usize) -> Vec<usize> {
    let mut rng = stream(seed, Purpose::Bootstrap, b as u64);
    (0..m).map(|_| rng.gen_range(0..m)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub hurst: f64,
    pub ci: (f64, f64),
    pub level: f64,
    pub slope: f64,
    pub intercept: f64,
    pub variances: Vec<f64>,
    /// Regression weights `1 / Var_boot(log variance)`.
    pub weights: Vec<f64>,
    pub resamples: usize,
    pub replicas: usize,
    /// `log10(t_max / t_min)`.
    pub decades: f64,
}

impl HurstEstimate {
    pub fn contains(&self, h: f64) -> bool {
        self.ci.0 <= h && h <= self.ci.1
    }
}

/// Estimates `H` from `Var(Y_t) ~ t^{2H}` by weighted regression of
/// `log Var` on `log t`; the confidence interval is the percentile interval
/// of the slope over replica bootstrap resamples.
pub fn hurst_estimate(times: &[f64], data: &[Vec<f64>], resamples: usize, level: f64, seed: u64) -> Result<HurstEstimate> {
    check_ensemble(times, data)?;
    if times.len() < 2 || times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Parameter("need at least two positive times".into()));
    }
    if data.len() < 2 {
        return Err(Error::Parameter("need at least two replicas".into()));
    }
    if resamples < 2 || !(0.0 < level && level < 1.0) {
        return Err(Error::Parameter("need at least two resamples and a level in (0, 1)".into()));
    }
    let m = data.len();
    let k = times.len();
    let all: Vec<usize> = (0..m).collect();
    let v = variances(data, &all, k);
    if let Some(j) = v.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Degenerate(format!("zero variance at t = {}", times[j])));
    }
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = v.iter().map(|s| s.ln()).collect();
    let boot: Vec<Vec<f64>> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let idx = resample_indices(seed, b, m);
            variances(data, &idx, k).into_iter().map(|s| s.max(f64::MIN_POSITIVE).ln()).collect()
        })
        .collect();
    let weights: Vec<f64> = (0..k)
        .map(|j| {
            let col: Vec<f64> = boot.iter().map(|r| r[j]).collect();
            let (mean, _) = mean_stderr(&col);
            let var = col.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            1.0 / var.max(1e-300)
        })
        .collect();
    let (slope, intercept) = wls(&x, &y, &weights)?;
    let mut slopes: Vec<f64> = boot
        .iter()
        .map(|yb| wls(&x, yb, &weights).map(|s| s.0))
        .collect::<Result<_>>()?;
    slopes.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - level);
    let ci = (0.5 * percentile(&slopes, alpha), 0.5 * percentile(&slopes, 1.0 - alpha));
    Ok(HurstEstimate {
        hurst: 0.5 * slope,
        ci,
        level,
        slope,
        intercept,
        variances: v,
        weights,
        resamples,
        replicas: m,
        decades: (times[k - 1] / times[0]).log10(),
    })
}

/// Exact Gaussian paths with covariance `fbm_covariance(., ., hurst, scale)`
/// at `times`, by Cholesky factorization.
pub fn fbm_paths(times: &[f64], hurst: f64, scale: f64, replicas: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if times.len() > 2048 {
        return Err(Error::Parameter("at most 2048 time points".into()));
    }
    if !(0.0 < hurst && hurst < 1.0) || !(scale > 0.0) {
        return Err(Error::Parameter("need 0 < H < 1 and a positive scale".into()));
    }
    let k = times.len();
    let cov = Mat::<f64>::from_fn(k, k, |i, j| fbm_covariance(times[i], times[j], hurst, scale));
    let chol = cov.cholesky(Side::Lower).map_err(|_| Error::Fit("covariance not positive definite".into()))?;
    let lower = chol.compute_l();
    Ok((0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Purpose::Oracle, r as u64);
            let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            (0..k).map(|i| (0..=i).map(|j| lower.read(i, j) * z[j]).sum()).collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceFit {
    pub scale: f64,
    /// `||C - scale K||_F / ||C||_F`.
    pub residual: f64,
    /// Bootstrap percentile interval (90%) of the fitted scale.
    pub scale_ci: (f64, f64),
    /// Set when the interval is wider than the estimate or cannot be formed.
    pub wide: bool,
    pub covariance: Vec<Vec<f64>>,
}

fn empirical_covariance(data: &[Vec<f64>], idx: &[usize], k: usize) -> Vec<Vec<f64>> {
    let m = idx.len() as f64;
    let means: Vec<f64> = (0..k).map(|j| idx.iter().map(|&i| data[i][j]).sum::<f64>() / m).collect();
    let denom = (m - 1.0).max(1.0);
    (0..k)
        .map(|a| {
            (0..k)
                .map(|b| idx.iter().map(|&i| (data[i][a] - means[a]) * (data[i][b] - means[b])).sum::<f64>() / denom)
                .collect()
        })
        .collect()
}

fn fit_scale(c: &[Vec<f64>], kern: &[Vec<f64>]) -> (f64, f64) {
    let (mut ck, mut kk, mut cc) = (0.0, 0.0, 0.0);
    for (cr, kr) in c.iter().zip(kern) {
        for (x, y) in cr.iter().zip(kr) {
            ck += x * y;
            kk += y * y;
            cc += x * x;
        }
    }
    let scale = ck / kk;
    let resid: f64 = c
        .iter()
        .zip(kern)
        .flat_map(|(cr, kr)| cr.iter().zip(kr).map(move |(x, y)| (x - scale * y).powi(2)))
        .sum();
    (scale, (resid / cc).sqrt())
}

/// Least-squares fit of the empirical covariance to the fBM kernel with exponent `hurst`.
pub fn covariance_fit(times: &[f64], data: &[Vec<f64>], hurst: f64, resamples: usize, seed: u64) -> Result<CovarianceFit> {
    check_ensemble(times, data)?;
    let mut distinct = times.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Parameter("need at least three distinct times".into()));
    }
    if data.is_empty() {
        return Err(Error::Parameter("empty ensemble".into()));
    }
    let k = times.len();
    let kern: Vec<Vec<f64>> =
        times.iter().map(|&t| times.iter().map(|&s| fbm_covariance(t, s, hurst, 1.0)).collect()).collect();
    if kern.iter().flatten().all(|&v| v == 0.0) {
        return Err(Error::Fit("kernel vanishes at every time pair".into()));
    }
    let m = data.len();
    let all: Vec<usize> = (0..m).collect();
    let covariance = empirical_covariance(data, &all, k);
    let (scale, residual) = fit_scale(&covariance, &kern);
    let (scale_ci, wide) = if m < 2 || resamples < 2 {
        ((f64::NEG_INFINITY, f64::INFINITY), true)
    } else {
        let mut boot: Vec<f64> = (0..resamples)
            .into_par_iter()
            .map(|b| fit_scale(&empirical_covariance(data, &resample_indices(seed, b, m), k), &kern).0)
            .collect();
        boot.sort_by(f64::total_cmp);
        let ci = (percentile(&boot, 0.05), percentile(&boot, 0.95));
        (ci, ci.1 - ci.0 > scale.abs())
    };
    Ok(CovarianceFit { scale, residual, scale_ci, wide, covariance })
}

/// Time series of several observables over an ensemble: `values[obs][replica][time]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSeries {
    pub ids: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub observable: String,
    pub t: f64,
    pub s: f64,
    /// Particle estimate and its standard error.
    pub particle: (f64, f64),
    pub she: (f64, f64),
    pub relative: f64,
    /// `rel_tol |she| + 2 sqrt(se_p^2 + se_s^2)`.
    pub allowed: f64,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    /// Rows with `t == s` compare variances, the others covariances.
    pub rows: Vec<ComparisonRow>,
    /// Observables with f'(0) != 0, for which no agreement is expected; reported, not asserted.
    pub flagged: Vec<String>,
    /// All rows of unflagged observables agree.
    pub pass: bool,
}

/// Compares variances and covariances of matching observables between two ensembles.
/// `neumann[i]` tells whether observable `i` satisfies `f'(0) = 0`.
pub fn compare_models(particle: &EnsembleSeries, she: &EnsembleSeries, rel_tol: f64, neumann: &[bool]) -> Result<ModelComparison> {
    if particle.ids != she.ids {
        return Err(Error::Spec(format!("observables differ: {:?} vs {:?}", particle.ids, she.ids)));
    }
    if particle.times.len() != she.times.len()
        || particle.times.iter().zip(&she.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(Error::Spec("sample times differ".into()));
    }
    if neumann.len() != particle.ids.len() {
        return Err(Error::Shape("one Neumann flag per observable".into()));
    }
    let mut rows = Vec::new();
    let mut flagged = Vec::new();
    let mut pass = true;
    let times = &particle.times;
    for (o, id) in particle.ids.iter().enumerate() {
        if !neumann[o] {
            flagged.push(id.clone());
        }
        for a in 0..times.len() {
            for b in a..times.len() {
                let stat = |e: &EnsembleSeries| {
                    let x = column(&e.values[o], a);
                    let y = column(&e.values[o], b);
                    covariance_with_error(&x, &y)
                };
                let p = stat(particle);
                let s = stat(she);
                let denom = s.0.abs().max(f64::MIN_POSITIVE);
                let allowed = rel_tol * s.0.abs() + 2.0 * (p.1 * p.1 + s.1 * s.1).sqrt();
                let agree = (p.0 - s.0).abs() <= allowed;
                if neumann[o] && !agree {
                    pass = false;
                }
                let relative = if p.0 == 0.0 && s.0 == 0.0 { 0.0 } else { (p.0 - s.0) / denom };
                rows.push(ComparisonRow {
                    observable: id.clone(),
                    t: times[a],
                    s: times[b],
                    particle: p,
                    she: s,
                    relative,
                    allowed,
                    agree,
                });
            }
        }
    }
    Ok(ModelComparison { rows, flagged, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Critical value at the test level.
    pub critical: f64,
    pub pass: bool,
}

/// Pearson test of observed counts against expected counts; adjacent bins are
/// pooled from the right until each expected count is at least 5.
pub fn chi_square_test(observed: &[u64], expected: &[f64], level: f64) -> Result<ChiSquareReport> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::Shape("observed and expected bins differ".into()));
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o as f64;
        e_acc += e;
        if e_acc >= 5.0 {
            bins.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => bins.push((o_acc, e_acc)),
        }
    }
    if bins.len() < 2 {
        return Err(Error::Degenerate("fewer than two usable bins".into()));
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Parameter(e.to_string()))?;
    let critical = dist.inverse_cdf(1.0 - level);
    Ok(ChiSquareReport { statistic, dof, p_value: 1.0 - dist.cdf(statistic), critical, pass: statistic <= critical })
}

/// Goodness of fit of occupation numbers against `Geom(1 - lambda)` on `{0, 1, ...}`.
pub fn geometric_fit(samples: impl IntoIterator<Item = u32>, lambda: f64, level: f64) -> Result<ChiSquareReport> {
    let mut counts: Vec<u64> = Vec::new();
    let mut total = 0u64;
    for k in samples {
        let k = k as usize;
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
        total += 1;
    }
    // open-ended last bin so expected mass sums to one
    let kmax = counts.len().max(2);
    counts.resize(kmax + 1, 0);
    let mut expected: Vec<f64> = (0..kmax).map(|k| total as f64 * (1.0 - lambda) * lambda.powi(k as i32)).collect();
    expected.push(total as f64 * lambda.powi(kmax as i32));
    chi_square_test(&counts, &expected, level)
}
