//! Exact computations on closed boxes and for geometric averages.
//!
//! `Omega_{k,l}` is the set of occupation vectors on `{1..l}` with `k`
//! particles, carrying the uniform measure; `L_l` moves a particle from an
//! occupied site to each neighbour at rate 1.

use faer::solvers::SpSolver;
use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_ensemble, RunOptions};
use crate::error::{Error, Result};
use crate::fields::SiteWeights;
use crate::model::ProcessParams;

/// Default cap on `|Omega_{k,l}|` for enumeration.
pub const DEFAULT_STATE_CAP: usize = 200_000;

/// Largest block handed to the dense symmetric eigen-solver.
pub const DEFAULT_DENSE_CAP: usize = 10_000;

/// `C(n, r)` as `u128`, saturating.
pub fn binomial(n: u64, r: u64) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

/// `|Omega_{k,l}| = C(k + l - 1, l - 1)`.
pub fn state_count(k: u32, l: u32) -> u128 {
    if l == 0 {
        return u128::from(k == 0);
    }
    binomial(k as u64 + l as u64 - 1, l as u64 - 1)
}

/// Colexicographic rank of an occupation vector among all vectors of the same
/// length and total. The bars of the stars-and-bars picture sit at
/// `c_i = eta(1) + ... + eta(i) + i - 1` and the rank is `sum_i C(c_i, i)`.
pub fn rank(eta: &[u32]) -> usize {
    let mut r: u128 = 0;
    let mut c: u64 = 0;
    for (i, &e) in eta.iter().enumerate().take(eta.len().saturating_sub(1)) {
        c += e as u64;
        r += binomial(c + i as u64, i as u64 + 1);
    }
    r as usize
}

/// Calls `visit` on every vector of `Omega_{k,l}`.
pub fn for_each_state(k: u32, l: u32, mut visit: impl FnMut(&[u32])) {
    if l == 0 {
        if k == 0 {
            visit(&[]);
        }
        return;
    }
    let mut eta = vec![0u32; l as usize];
    fn rec(eta: &mut [u32], pos: usize, left: u32, visit: &mut dyn FnMut(&[u32])) {
        if pos + 1 == eta.len() {
            eta[pos] = left;
            visit(eta);
            return;
        }
        for v in 0..=left {
            eta[pos] = v;
            rec(eta, pos + 1, left - v, visit);
        }
    }
    rec(&mut eta, 0, k, &mut visit);
}

/// `Omega_{k,l}` with its generator, states listed in rank order.
#[derive(Debug, Clone)]
pub struct SmallSystem {
    pub k: u32,
    pub l: u32,
    states: Vec<u32>,
    /// Off-diagonal transitions `(from, to)` with unit rate, grouped by `from`.
    offsets: Vec<usize>,
    targets: Vec<u32>,
    diag: Vec<f64>,
}

impl SmallSystem {
    pub fn build(k: u32, l: u32) -> Result<Self> {
        Self::build_with_cap(k, l, DEFAULT_STATE_CAP)
    }

    pub fn build_with_cap(k: u32, l: u32, cap: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::Parameter("box length must be at least 1".into()));
        }
        let count = state_count(k, l);
        if count > cap as u128 {
            return Err(Error::Size { states: count, cap });
        }
        let count = count as usize;
        let width = l as usize;
        let mut states = vec![0u32; count * width];
        for_each_state(k, l, |eta| {
            let r = rank(eta);
            states[r * width..(r + 1) * width].copy_from_slice(eta);
        });
        let mut offsets = Vec::with_capacity(count + 1);
        let mut targets = Vec::new();
        let mut diag = vec![0.0; count];
        let mut scratch = vec![0u32; width];
        offsets.push(0);
        for s in 0..count {
            let eta = &states[s * width..(s + 1) * width];
            for x in 0..width {
                if eta[x] == 0 {
                    continue;
                }
                for y in [x.wrapping_sub(1), x + 1] {
                    if y >= width {
                        continue;
                    }
                    scratch.copy_from_slice(eta);
                    scratch[x] -= 1;
                    scratch[y] += 1;
                    targets.push(rank(&scratch) as u32);
                    diag[s] -= 1.0;
                }
            }
            offsets.push(targets.len());
        }
        Ok(Self { k, l, states, offsets, targets, diag })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn state(&self, i: usize) -> &[u32] {
        let w = self.l as usize;
        &self.states[i * w..(i + 1) * w]
    }

    /// `(L f)(s)` for every state.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|s| {
                let out: f64 = self.targets[self.offsets[s]..self.offsets[s + 1]]
                    .iter()
                    .map(|&t| f[t as usize])
                    .sum();
                out + self.diag[s] * f[s]
            })
            .collect()
    }

    /// `<f, g>` under the uniform measure.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / self.len() as f64
    }

    /// Dense generator matrix, row = from-state.
    pub fn dense_generator(&self) -> Mat<f64> {
        let n = self.len();
        let mut m = Mat::<f64>::zeros(n, n);
        for s in 0..n {
            m.write(s, s, self.diag[s]);
            for &t in &self.targets[self.offsets[s]..self.offsets[s + 1]] {
                let v = m.read(s, t as usize);
                m.write(s, t as usize, v + 1.0);
            }
        }
        m
    }

    /// Index of the mirror image `x -> l + 1 - x` of every state.
    fn reflection(&self) -> Vec<usize> {
        let mut scratch = vec![0u32; self.l as usize];
        (0..self.len())
            .map(|s| {
                scratch.copy_from_slice(self.state(s));
                scratch.reverse();
                rank(&scratch)
            })
            .collect()
    }
}

/// Smallest nonzero eigenvalue of `-L_l`, or `None` on a single state.
///
/// The generator commutes with the reflection of the box, so the symmetric and
/// antisymmetric sectors are diagonalized separately; each must fit under
/// [`DEFAULT_DENSE_CAP`].
pub fn spectral_gap(sys: &SmallSystem) -> Result<Option<f64>> {
    spectral_gap_with_cap(sys, DEFAULT_DENSE_CAP)
}

pub fn spectral_gap_with_cap(sys: &SmallSystem, dense_cap: usize) -> Result<Option<f64>> {
    let n = sys.len();
    if n <= 1 {
        return Ok(None);
    }
    let mirror = sys.reflection();
    // orbit representatives: s <= mirror(s)
    let reps: Vec<usize> = (0..n).filter(|&s| s <= mirror[s]).collect();
    let pairs: Vec<usize> = reps.iter().copied().filter(|&s| s < mirror[s]).collect();
    let biggest = reps.len().max(pairs.len());
    if biggest > dense_cap {
        return Err(Error::Size { states: biggest as u128, cap: dense_cap });
    }
    let sym = sector_matrix(sys, &mirror, &reps, 1.0);
    let mut ev = sym.selfadjoint_eigenvalues(Side::Lower);
    ev.sort_by(f64::total_cmp);
    // the constants sit in the symmetric sector at eigenvalue 0
    let mut gap = ev.get(1).copied().unwrap_or(f64::INFINITY);
    if !pairs.is_empty() {
        let anti = sector_matrix(sys, &mirror, &pairs, -1.0);
        let ev = anti.selfadjoint_eigenvalues(Side::Lower);
        gap = ev.into_iter().fold(gap, f64::min);
    }
    Ok(Some(gap))
}

/// `-L` restricted to the span of `(e_s + sign e_{mirror(s)})`, normalized.
fn sector_matrix(sys: &SmallSystem, mirror: &[usize], reps: &[usize], sign: f64) -> Mat<f64> {
    let mut index = vec![usize::MAX; sys.len()];
    for (i, &s) in reps.iter().enumerate() {
        index[s] = i;
    }
    let norm = |s: usize| if mirror[s] == s { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
    let m = reps.len();
    let mut out = Mat::<f64>::zeros(m, m);
    // column j of the sector block: apply -L to basis vector v_j, project on v_i
    for (j, &s) in reps.iter().enumerate() {
        let members: &[(usize, f64)] = if mirror[s] == s {
            &[(s, 1.0)][..]
        } else {
            &[(s, 1.0), (mirror[s], sign)][..]
        };
        for &(u, c) in members {
            let cu = c * norm(s);
            let mut add = |t: usize, v: f64| {
                let (rep, coef) = if index[t] != usize::MAX {
                    (t, 1.0)
                } else {
                    (mirror[t], sign)
                };
                let i = index[rep];
                if i == usize::MAX {
                    return;
                }
                let w = out.read(i, j) + v * coef * norm(rep) * cu;
                out.write(i, j, w);
            };
            add(u, -sys.diag[u]);
            for &t in &sys.targets[sys.offsets[u]..sys.offsets[u + 1]] {
                add(t as usize, -1.0);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub k: u32,
    pub l: u32,
    pub states: usize,
    pub gap: f64,
    /// `gap * (k + l)^2`.
    pub gap_times_klsq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
    /// `max 1 / (gap (k + l)^2)` over the grid.
    pub kappa0: f64,
    /// `min gap (k + l)^2` over the grid.
    pub min_scaled_gap: f64,
}

/// Spectral gaps over a grid of boxes; single-state boxes are skipped.
/// Fails with a degeneracy error if any gap is not strictly positive.
pub fn verify_gap_bound(grid: &[(u32, u32)]) -> Result<GapTable> {
    let rows: Vec<Option<GapRow>> = grid
        .par_iter()
        .map(|&(k, l)| -> Result<Option<GapRow>> {
            let sys = SmallSystem::build(k, l)?;
            Ok(spectral_gap(&sys)?.map(|gap| {
                let s = (k + l) as f64;
                GapRow { k, l, states: sys.len(), gap, gap_times_klsq: gap * s * s }
            }))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<GapRow> = rows.into_iter().flatten().collect();
    if let Some(bad) = rows.iter().find(|r| !(r.gap > 1e-10)) {
        return Err(Error::Degenerate(format!("gap {} at k={}, l={}", bad.gap, bad.k, bad.l)));
    }
    let min_scaled_gap = rows.iter().map(|r| r.gap_times_klsq).fold(f64::INFINITY, f64::min);
    Ok(GapTable { kappa0: 1.0 / min_scaled_gap, min_scaled_gap, rows })
}

/// `k <= kmax`, `1 <= l <= lmax`.
pub fn full_grid(kmax: u32, lmax: u32) -> Vec<(u32, u32)> {
    (1..=lmax).flat_map(|l| (0..=kmax).map(move |k| (k, l))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiValues {
    /// `1 - 1 / (1 + l/(l-1) * k/l)`.
    pub formula: f64,
    /// `P(eta(1) >= 1)` under the uniform measure on `Omega_{k,l}`, by enumeration.
    pub enumeration: f64,
}

/// Conditional expectation of `g(eta(1))` given `k` particles on `l` sites.
pub fn psi_conditional(k: u32, l: u32) -> Result<PsiValues> {
    if l < 2 {
        return Err(Error::Parameter(format!("psi needs l >= 2, got {l}")));
    }
    let count = state_count(k, l);
    if count > DEFAULT_STATE_CAP as u128 * 10 {
        return Err(Error::Size { states: count, cap: DEFAULT_STATE_CAP * 10 });
    }
    let (mut occupied, mut total) = (0u64, 0u64);
    for_each_state(k, l, |eta| {
        total += 1;
        if eta[0] > 0 {
            occupied += 1;
        }
    });
    let lf = l as f64;
    let mean = k as f64 / lf;
    Ok(PsiValues {
        formula: 1.0 - 1.0 / (1.0 + lf / (lf - 1.0) * mean),
        enumeration: occupied as f64 / total as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HMinusOne {
    /// `<f, u>` with `-L u = f`, by a dense solve.
    pub poisson: f64,
    /// `sup_h 2<f,h> - <h,-Lh>`, by conjugate-gradient ascent.
    pub variational: f64,
}

/// `||f||_{-1}^2` under the uniform measure on `Omega_{k,l}`.
pub fn h_minus_one_norm(sys: &SmallSystem, f: &[f64]) -> Result<HMinusOne> {
    let n = sys.len();
    if f.len() != n {
        return Err(Error::Shape(format!("function has {} values for {} states", f.len(), n)));
    }
    let mean = f.iter().sum::<f64>() / n as f64;
    let scale = f.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if mean.abs() > 1e-12 * scale {
        return Err(Error::Projection(mean));
    }
    if f.iter().all(|&v| v == 0.0) {
        return Ok(HMinusOne { poisson: 0.0, variational: 0.0 });
    }
    if n == 1 {
        return Ok(HMinusOne { poisson: 0.0, variational: 0.0 });
    }
    if n > DEFAULT_DENSE_CAP {
        return Err(Error::Size { states: n as u128, cap: DEFAULT_DENSE_CAP });
    }
    // -L + 11^T / n is positive definite iff the box is connected
    let mut a = sys.dense_generator();
    for i in 0..n {
        for j in 0..n {
            let v = -a.read(i, j) + 1.0 / n as f64;
            a.write(i, j, v);
        }
    }
    let chol = a.cholesky(Side::Lower).map_err(|_| Error::Singular)?;
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| f[i]);
    let u = chol.solve(&rhs);
    let u: Vec<f64> = (0..n).map(|i| u.read(i, 0)).collect();
    let poisson = sys.inner(f, &u);
    let variational = variational_h_minus_one(sys, f);
    Ok(HMinusOne { poisson, variational })
}

/// Maximizes `2<f,h> - <h,-Lh>` by conjugate gradients on `-L h = f`.
fn variational_h_minus_one(sys: &SmallSystem, f: &[f64]) -> f64 {
    let n = sys.len();
    let neg_l = |v: &[f64]| -> Vec<f64> { sys.apply(v).into_iter().map(|x| -x).collect() };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut h = vec![0.0; n];
    let mut r = f.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let tol = 1e-30 * rr.max(1e-300);
    for _ in 0..(4 * n + 100) {
        if rr <= tol {
            break;
        }
        let ap = neg_l(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            h[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let lh = neg_l(&h);
    2.0 * sys.inner(f, &h) - sys.inner(&h, &lh)
}

/// Large-deviation rate of the empirical mean of geometric variables of mean `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    pub rho: f64,
}

impl RateFunction {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
        }
        Ok(Self { rho })
    }

    /// `I(a) = a log(a (1 + rho) / (rho (1 + a))) - log((1 + a) / (1 + rho))`, with `I(0) = log(1 + rho)`.
    pub fn eval(&self, a: f64) -> f64 {
        let rho = self.rho;
        let tail = (1.0 + a).ln() - (1.0 + rho).ln();
        if a == 0.0 {
            return -tail;
        }
        a * ((1.0 / rho).ln_1p() - (1.0 / a).ln_1p()) - tail
    }
}

pub fn ldp_rate(rho: f64, a: f64) -> Result<f64> {
    if !(a.is_finite() && a >= 0.0) {
        return Err(Error::Parameter(format!("a must be nonnegative, got {a}")));
    }
    Ok(RateFunction::new(rho)?.eval(a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpLimit {
    /// `b/a - log(b/a) - 1`.
    pub limit: f64,
    /// `(n, I_{rho_n}(a_n))` with `rho_n = n/b - 1`, `a_n = n/a - 1`.
    pub approximants: Vec<(u64, f64)>,
    /// Set when `a <= b`, outside the lower-tail regime `a_n < rho_n`.
    pub flagged: bool,
}

pub fn ldp_limit(b: f64, a: f64, ns: &[u64]) -> Result<LdpLimit> {
    if !(b > 0.0 && a > 0.0) {
        return Err(Error::Parameter("a and b must be positive".into()));
    }
    let r = b / a;
    let approximants = ns
        .iter()
        .filter(|&&n| n as f64 > a.max(b))
        .map(|&n| {
            let nf = n as f64;
            Ok((n, ldp_rate(nf / b - 1.0, nf / a - 1.0)?))
        })
        .collect::<Result<_>>()?;
    Ok(LdpLimit { limit: r - r.ln() - 1.0, approximants, flagged: a <= b })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub n: u32,
    pub b: f64,
    pub l: u32,
    pub a: f64,
    pub a_n: f64,
    pub rho_n: f64,
    /// `P(mean of l geometrics <= a_n)`.
    pub probability: f64,
    /// `(1/l) log P`.
    pub log_rate: f64,
    /// `I_{rho_n}(a_n)`.
    pub rate: f64,
    /// `-I - (1/l) log P`; nonnegative when the bound holds.
    pub slack: f64,
    pub holds: bool,
    /// `a_n >= rho_n`: the event is typical and the bound is not meaningful.
    pub vacuous: bool,
}

const TAIL_CAP: usize = 50_000_000;

/// Exact `P(eta^l <= a_n)` with `a_n = n/a - 1`, compared with `exp(-l I(a_n))`.
pub fn tail_bound_check(n: u32, b: f64, l: u32, a: f64) -> Result<TailReport> {
    if l == 0 || !(a > 0.0) || !(b > 0.0) || (n as f64) <= b {
        return Err(Error::Parameter("tail check needs l >= 1, a > 0 and 0 < b < n".into()));
    }
    let nf = n as f64;
    let theta = b / nf;
    let rho_n = nf / b - 1.0;
    let a_n = nf / a - 1.0;
    if a_n < 0.0 {
        return Err(Error::Parameter(format!("a_n = {a_n} is negative")));
    }
    let m = (l as f64 * a_n + 1e-9).floor() as usize;
    if (m + 1).saturating_mul(l as usize) > TAIL_CAP {
        return Err(Error::Precision(format!("convolution support {m} too large for l = {l}")));
    }
    let probability = sum_cdf(theta, l, m);
    if !(probability > 0.0) {
        return Err(Error::Precision("tail probability underflows".into()));
    }
    let log_rate = probability.ln() / l as f64;
    let rate = ldp_rate(rho_n, a_n)?;
    let slack = -rate - log_rate;
    Ok(TailReport {
        n,
        b,
        l,
        a,
        a_n,
        rho_n,
        probability,
        log_rate,
        rate,
        slack,
        holds: slack >= -1e-12,
        vacuous: a_n >= rho_n,
    })
}

/// `P(S <= m)` for `S` a sum of `l` geometric variables on `{0, 1, ...}` with
/// success probability `theta`, by repeated convolution on `[0, m]`.
fn sum_cdf(theta: f64, l: u32, m: usize) -> f64 {
    let q = 1.0 - theta;
    // pmf of a single geometric
    let mut pmf: Vec<f64> = Vec::with_capacity(m + 1);
    let mut v = theta;
    for _ in 0..=m {
        pmf.push(v);
        v *= q;
    }
    for _ in 1..l {
        // (pmf * geom)[s] = theta pmf[s] + q (pmf * geom)[s - 1]
        let mut prev = 0.0;
        for p in pmf.iter_mut() {
            prev = theta * *p + q * prev;
            *p = prev;
        }
    }
    pmf.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u32,
    pub b: f64,
    pub l: u32,
    pub rho: f64,
    /// `Var(eta^l) = rho (1 + rho) / l`.
    pub variance: f64,
    /// `E (eta^l - rho)^4 = kappa_4 / l^3 + 3 kappa_2^2 / l^2`.
    pub fourth: f64,
    /// `l^3 E (eta^l - rho)^4 / n^4`.
    pub ratio: f64,
}

/// Exact central moments of the mean of `l` geometric variables with success `b/n`.
pub fn moment_oracle(n: u32, b: f64, l: u32) -> Result<Moments> {
    if l == 0 || !(b > 0.0) || (n as f64) < b {
        return Err(Error::Parameter("moments need l >= 1 and 0 < b <= n".into()));
    }
    let p = b / n as f64;
    let q = 1.0 - p;
    let k2 = q / (p * p);
    let k4 = q * (1.0 + 4.0 * q + q * q) / p.powi(4);
    let lf = l as f64;
    let fourth = k4 / lf.powi(3) + 3.0 * k2 * k2 / (lf * lf);
    Ok(Moments {
        n,
        b,
        l,
        rho: q / p,
        variance: k2 / lf,
        fourth,
        ratio: lf.powi(3) * fourth / (n as f64).powi(4),
    })
}

/// Experiment for the Kipnis-Varadhan bound on a bond-difference functional
/// `V = sum_x (g(eta(x)) - g(eta(x+1))) h(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KvSpec {
    pub n: u32,
    pub b: f64,
    pub horizon: f64,
    pub len: usize,
    /// `h[x]` for bonds `x = 0..=len`; must vanish on the boundary bonds.
    pub h: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KvReport {
    /// Mean of `sup_{t <= T} (int_0^t V ds)^2`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// One-sided 95% upper confidence bound on the left-hand side.
    pub lhs_upper: f64,
    /// `18 T / n^4 sum h^2`.
    pub rhs: f64,
    pub holds: bool,
}

pub fn kv_inequality_check(spec: &KvSpec) -> Result<KvReport> {
    if spec.h.len() != spec.len + 1 {
        return Err(Error::Shape(format!("h has {} bonds, window {}", spec.h.len(), spec.len + 1)));
    }
    if spec.h[0] != 0.0 || spec.h[spec.len] != 0.0 {
        return Err(Error::Unsupported(
            "weights on the boundary bonds involve reservoir rates, not differences of g".into(),
        ));
    }
    let rhs = 18.0 * spec.horizon / (spec.n as f64).powi(4) * spec.h.iter().map(|v| v * v).sum::<f64>();
    if spec.h.iter().all(|&v| v == 0.0) {
        return Ok(KvReport { lhs: 0.0, lhs_stderr: 0.0, lhs_upper: 0.0, rhs, holds: true });
    }
    if spec.replicas < 2 {
        return Err(Error::Parameter("need at least two replicas".into()));
    }
    let params = ProcessParams::new(spec.n, spec.b, spec.horizon)?.with_len(spec.len);
    let opts = RunOptions { extra: vec![SiteWeights::bond_difference(&spec.h, params.lambda)], ..Default::default() };
    let runs = run_ensemble(&params, &[spec.horizon], &[], spec.seed, spec.replicas, &opts)?;
    let vals: Vec<f64> = runs.iter().map(|r| r.samples[0].drift_sup[0].powi(2)).collect();
    let m = vals.len() as f64;
    let lhs = vals.iter().sum::<f64>() / m;
    let var = vals.iter().map(|v| (v - lhs).powi(2)).sum::<f64>() / (m - 1.0);
    let lhs_stderr = (var / m).sqrt();
    let lhs_upper = lhs + 1.6448536269514722 * lhs_stderr;
    Ok(KvReport { lhs, lhs_stderr, lhs_upper, rhs, holds: lhs_upper <= rhs })
}
