//! Process parameters, lattice state and current bookkeeping.
//!
//! Sites of the truncated window are `1..=len`. Bond `x` sits between sites
//! `x` and `x + 1`; bond `0` is the source bond (the origin reservoir) and bond
//! `len` connects the window to the right reservoir. Currents are signed
//! integer counts of particles crossing each bond left to right.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric finite-range jump distribution, stored by its positive half:
/// `probs[k - 1] = p(k) = p(-k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    probs: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from `p(1), ..., p(R)`; the negative side is implied.
    pub fn symmetric(positive: &[f64]) -> Result<Self> {
        if positive.is_empty() {
            return Err(Error::Parameter("kernel needs at least p(1)".into()));
        }
        if positive.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Parameter("kernel weights must be finite and nonnegative".into()));
        }
        let mass: f64 = 2.0 * positive.iter().sum::<f64>();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("kernel is not normalized: total mass {mass}")));
        }
        let mut probs = positive.to_vec();
        while probs.last() == Some(&0.0) {
            probs.pop();
        }
        Ok(Self { probs })
    }

    /// Builds a kernel from `(offset, weight)` pairs over both signs, checking symmetry.
    pub fn from_pairs(pairs: &[(i64, f64)]) -> Result<Self> {
        let range = pairs.iter().map(|(z, _)| z.unsigned_abs()).max().unwrap_or(0) as usize;
        let mut pos = vec![0.0; range];
        let mut neg = vec![0.0; range];
        for &(z, p) in pairs {
            match z {
                0 => {
                    if p != 0.0 {
                        return Err(Error::Parameter("kernel must not charge offset 0".into()));
                    }
                }
                z if z > 0 => pos[z as usize - 1] += p,
                z => neg[(-z) as usize - 1] += p,
            }
        }
        for (k, (a, b)) in pos.iter().zip(&neg).enumerate() {
            if (a - b).abs() > 1e-12 {
                return Err(Error::Parameter(format!(
                    "kernel is asymmetric at offset {}: p(+)={a}, p(-)={b}",
                    k + 1
                )));
            }
        }
        Self::symmetric(&pos)
    }

    pub fn nearest_neighbor() -> Self {
        Self { probs: vec![0.5] }
    }

    pub fn range(&self) -> usize {
        self.probs.len()
    }

    /// `p(z)` for any integer offset.
    pub fn p(&self, z: i64) -> f64 {
        let k = z.unsigned_abs() as usize;
        if k == 0 || k > self.probs.len() {
            0.0
        } else {
            self.probs[k - 1]
        }
    }

    pub fn positive_weights(&self) -> &[f64] {
        &self.probs
    }

    /// `sum_{z > 0} z^2 p(z)`.
    pub fn sigma2(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| ((i + 1) * (i + 1)) as f64 * p)
            .sum()
    }

    /// Diffusion factor of the simulated dynamics: every occupied site fires at
    /// rate 2 and picks its offset from `p`, so the effective coefficient is the
    /// full second moment `sum_z z^2 p(z) = 2 sigma2`. Equals 1 for nearest neighbours.
    pub fn diffusion_factor(&self) -> f64 {
        2.0 * self.sigma2()
    }

    /// `T(x) = sum_{z >= x} p(z)`, the probability mass of jumps reaching at least `x` to the right.
    pub fn tail(&self, x: usize) -> f64 {
        if x == 0 {
            return 0.5;
        }
        self.probs.iter().skip(x - 1).sum()
    }

    pub fn is_nearest_neighbor(&self) -> bool {
        self.probs.len() == 1
    }
}

/// Parameters of one scaled process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    pub n: u32,
    pub b: f64,
    pub lambda: f64,
    pub rho: f64,
    /// Number of sites in the truncated window.
    pub len: usize,
    pub kernel: Option<Kernel>,
    /// Macroscopic time horizon.
    pub horizon: f64,
}

impl ProcessParams {
    /// Standard scaling `lambda_n = 1 - b/n`, with the default window size for `horizon`.
    pub fn new(n: u32, b: f64, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("n must be positive".into()));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Parameter(format!("b must be positive, got {b}")));
        }
        let lambda = 1.0 - b / n as f64;
        let mut p = Self::with_lambda(n, b, lambda, horizon)?;
        p.rho = n as f64 / b - 1.0;
        Ok(p)
    }

    /// General mode: the caller declares `lambda` directly (with `n (1 - lambda) -> b`).
    pub fn with_lambda(n: u32, b: f64, lambda: f64, horizon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::Parameter(format!("lambda must lie in [0, 1), got {lambda}")));
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::Parameter(format!("horizon must be nonnegative, got {horizon}")));
        }
        Ok(Self {
            n,
            b,
            lambda,
            rho: lambda / (1.0 - lambda),
            len: default_len(n, b, horizon),
            kernel: None,
            horizon,
        })
    }

    pub fn with_len(mut self, len: usize) -> Self {
        self.len = len;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// `n^4`, the ratio of microscopic to macroscopic time.
    pub fn time_scale(&self) -> f64 {
        (self.n as f64).powi(4)
    }

    pub fn kernel_range(&self) -> usize {
        self.kernel.as_ref().map_or(1, Kernel::range)
    }
}

/// Default window: `max(20 n, 4 ceil(8 b n sqrt(T)))`.
pub fn default_len(n: u32, b: f64, horizon: f64) -> usize {
    let spread = (8.0 * b * n as f64 * horizon.sqrt()).ceil() as usize;
    (20 * n as usize).max(4 * spread)
}

/// Switches the process to a finite-range symmetric kernel.
pub fn set_kernel(params: &ProcessParams, kernel: Kernel) -> Result<ProcessParams> {
    if kernel.range() * 2 >= params.len {
        return Err(Error::Parameter(format!(
            "kernel range {} too large for a window of {} sites",
            kernel.range(),
            params.len
        )));
    }
    let mut out = params.clone();
    // p(+-1) = 1/2 is kept as an explicit kernel so the kernel code path can be
    // checked against the nearest-neighbour engine.
    out.kernel = Some(kernel);
    Ok(out)
}

/// Occupation numbers on sites `1..=len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    eta: Vec<u32>,
}

impl Configuration {
    pub fn empty(len: usize) -> Self {
        Self { eta: vec![0; len] }
    }

    /// Takes occupations listed from site 1 upwards.
    pub fn from_counts(counts: Vec<u32>) -> Self {
        Self { eta: counts }
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// Occupation of site `x` (1-based).
    pub fn get(&self, x: usize) -> u32 {
        self.eta[x - 1]
    }

    pub fn set(&mut self, x: usize, value: u32) {
        self.eta[x - 1] = value;
    }

    pub fn counts(&self) -> &[u32] {
        &self.eta
    }

    pub(crate) fn counts_mut(&mut self) -> &mut [u32] {
        &mut self.eta
    }

    pub fn total(&self) -> u64 {
        self.eta.iter().map(|&k| k as u64).sum()
    }

    pub fn occupied(&self) -> usize {
        self.eta.iter().filter(|&&k| k > 0).count()
    }
}

/// Integer net currents across bonds `0..=len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CurrentLedger {
    j: Vec<i64>,
}

impl CurrentLedger {
    pub fn zeros(len: usize) -> Self {
        Self { j: vec![0; len + 1] }
    }

    pub fn from_currents(j: Vec<i64>) -> Self {
        Self { j }
    }

    /// Number of sites of the window this ledger belongs to.
    pub fn len(&self) -> usize {
        self.j.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, bond: usize) -> i64 {
        self.j[bond]
    }

    /// Source current `J(0)`.
    pub fn source(&self) -> i64 {
        self.j[0]
    }

    pub fn currents(&self) -> &[i64] {
        &self.j
    }

    #[cfg(test)]
    pub(crate) fn currents_mut(&mut self) -> &mut [i64] {
        &mut self.j
    }

    /// Adds `sign` to every bond crossed by a particle moving from position
    /// `from` to position `to`. Positions `<= 0` stand for the origin
    /// reservoir and positions `> len` for the right reservoir.
    pub(crate) fn cross(&mut self, from: i64, to: i64) {
        let len = self.len() as i64;
        let (lo, hi, sign) = if to > from { (from, to, 1) } else { (to, from, -1) };
        let first = lo.max(0);
        let last = (hi - 1).min(len);
        for bond in first..=last {
            self.j[bond as usize] += sign;
        }
    }

    /// FNV-1a digest of the currents, stable across platforms and releases.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.j {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// What happens at one event of the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// A particle at `site` jumps by `offset`; landing at a position `<= 0`
    /// annihilates it at the source, landing beyond the window sends it to the
    /// right reservoir.
    Jump { site: usize, offset: i32 },
    /// The source at the origin creates a particle at `site`.
    Creation { site: usize },
    /// The right reservoir injects a particle at `site`.
    Injection { site: usize },
}

impl EventKind {
    pub fn left(site: usize) -> Self {
        EventKind::Jump { site, offset: -1 }
    }

    pub fn right(site: usize) -> Self {
        EventKind::Jump { site, offset: 1 }
    }
}

/// An event together with the microscopic waiting time that preceded it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub kind: EventKind,
    pub micro_time: f64,
}

/// Applies one event, updating exactly the bonds the particle crosses.
pub fn apply_event(config: &mut Configuration, ledger: &mut CurrentLedger, ev: &EventKind) -> Result<()> {
    let len = config.len();
    if ledger.len() != len {
        return Err(Error::Shape(format!(
            "ledger has {} bonds for a window of {} sites",
            ledger.len() + 1,
            len
        )));
    }
    let check = |site: usize| {
        if site == 0 || site > len {
            Err(Error::Range { site: site as i64, len })
        } else {
            Ok(())
        }
    };
    match *ev {
        EventKind::Jump { site, offset } => {
            check(site)?;
            if offset == 0 {
                return Err(Error::Parameter("jump offset must be nonzero".into()));
            }
            if config.get(site) == 0 {
                return Err(Error::Precondition(format!("jump from empty site {site}")));
            }
            let target = site as i64 + offset as i64;
            config.eta[site - 1] -= 1;
            if (1..=len as i64).contains(&target) {
                config.eta[target as usize - 1] += 1;
            }
            ledger.cross(site as i64, target);
        }
        EventKind::Creation { site } => {
            check(site)?;
            config.eta[site - 1] += 1;
            ledger.cross(0, site as i64);
        }
        EventKind::Injection { site } => {
            check(site)?;
            config.eta[site - 1] += 1;
            ledger.cross(len as i64 + 1, site as i64);
        }
    }
    Ok(())
}

/// Continuity relation `J(x-1) - J(x) = eta_t(x) - eta_0(x)` at every site of the window.
///
/// Bond currents are cut currents in every mode, so the site-wise identity
/// holds for finite-range kernels as well.
pub fn check_continuity(config0: &Configuration, config_t: &Configuration, ledger: &CurrentLedger) -> Result<bool> {
    if config0.len() != config_t.len() || ledger.len() != config0.len() {
        return Err(Error::Shape(format!(
            "windows differ: {} / {} sites, ledger for {}",
            config0.len(),
            config_t.len(),
            ledger.len()
        )));
    }
    Ok((1..=config0.len()).all(|x| {
        ledger.get(x - 1) - ledger.get(x) == config_t.get(x) as i64 - config0.get(x) as i64
    }))
}

/// Kernel-mode form of the continuity relation:
/// `J(x) - J(y) = sum_{z=x+1}^{y} (eta_t(z) - eta_0(z))` for every pair with `y - x = span`.
pub fn check_continuity_span(
    config0: &Configuration,
    config_t: &Configuration,
    ledger: &CurrentLedger,
    span: usize,
) -> Result<bool> {
    if config0.len() != config_t.len() || ledger.len() != config0.len() {
        return Err(Error::Shape("windows differ".into()));
    }
    let len = config0.len();
    if span == 0 || span > len {
        return Ok(true);
    }
    let mut window: i64 = (1..=span).map(|z| config_t.get(z) as i64 - config0.get(z) as i64).sum();
    for x in 0..=(len - span) {
        let y = x + span;
        if ledger.get(x) - ledger.get(y) != window {
            return Ok(false);
        }
        if y < len {
            window += config_t.get(y + 1) as i64 - config0.get(y + 1) as i64;
            window -= config_t.get(x + 1) as i64 - config0.get(x + 1) as i64;
        }
    }
    Ok(true)
}

/// Replays an event log from `config0`, returning the final state and currents.
pub fn replay<'a, I>(config0: &Configuration, events: I) -> Result<(Configuration, CurrentLedger)>
where
    I: IntoIterator<Item = &'a JumpEvent>,
{
    let mut config = config0.clone();
    let mut ledger = CurrentLedger::zeros(config.len());
    for ev in events {
        apply_event(&mut config, &mut ledger, &ev.kind)?;
    }
    Ok((config, ledger))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_and_rho_follow_the_scaling() {
        let p = ProcessParams::new(10, 1.0, 0.1).unwrap();
        assert_eq!(p.lambda, 0.9);
        assert!((p.rho - 9.0).abs() < 1e-12);
        assert!(ProcessParams::new(2, 3.0, 0.1).is_err());
        let p = ProcessParams::new(4, 4.0, 0.0).unwrap();
        assert_eq!(p.lambda, 0.0);
        assert_eq!(p.rho, 0.0);
    }

    #[test]
    fn default_window_rule() {
        assert_eq!(default_len(8, 1.0, 0.25), 160);
        // 8 * 16 * 1 = 128 -> 512
        assert_eq!(default_len(16, 1.0, 1.0), 512);
    }

    #[test]
    fn creation_on_empty_config() {
        let mut c = Configuration::empty(5);
        let mut j = CurrentLedger::zeros(5);
        apply_event(&mut c, &mut j, &EventKind::Creation { site: 1 }).unwrap();
        assert_eq!(c.get(1), 1);
        assert_eq!(j.currents(), &[1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn annihilation_at_source_bond() {
        let mut c = Configuration::from_counts(vec![1, 0, 0, 0]);
        let mut j = CurrentLedger::zeros(4);
        apply_event(&mut c, &mut j, &EventKind::left(1)).unwrap();
        assert_eq!(c.total(), 0);
        assert_eq!(j.currents(), &[-1, 0, 0, 0, 0]);
    }

    #[test]
    fn interior_jumps_touch_one_bond() {
        let mut c = Configuration::from_counts(vec![0, 2, 0, 0]);
        let mut j = CurrentLedger::zeros(4);
        apply_event(&mut c, &mut j, &EventKind::right(2)).unwrap();
        apply_event(&mut c, &mut j, &EventKind::left(2)).unwrap();
        assert_eq!(c.counts(), &[1, 0, 1, 0]);
        assert_eq!(j.currents(), &[0, -1, 1, 0, 0]);
        assert_eq!(c.total(), 2);
    }

    #[test]
    fn right_reservoir_bond() {
        let mut c = Configuration::from_counts(vec![0, 0, 1]);
        let mut j = CurrentLedger::zeros(3);
        apply_event(&mut c, &mut j, &EventKind::right(3)).unwrap();
        assert_eq!(j.get(3), 1);
        apply_event(&mut c, &mut j, &EventKind::Injection { site: 3 }).unwrap();
        assert_eq!(j.get(3), 0);
        assert_eq!(c.get(3), 1);
    }

    #[test]
    fn errors_on_empty_site_and_range() {
        let mut c = Configuration::empty(3);
        let mut j = CurrentLedger::zeros(3);
        assert!(matches!(
            apply_event(&mut c, &mut j, &EventKind::right(2)),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            apply_event(&mut c, &mut j, &EventKind::Creation { site: 4 }),
            Err(Error::Range { .. })
        ));
        assert!(matches!(
            apply_event(&mut c, &mut j, &EventKind::left(0)),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn long_jumps_update_every_crossed_cut() {
        let mut c = Configuration::from_counts(vec![0, 1, 0, 0, 0]);
        let mut j = CurrentLedger::zeros(5);
        apply_event(&mut c, &mut j, &EventKind::Jump { site: 2, offset: 2 }).unwrap();
        assert_eq!(j.currents(), &[0, 0, 1, 1, 0, 0]);
        apply_event(&mut c, &mut j, &EventKind::Jump { site: 4, offset: -5 }).unwrap();
        assert_eq!(j.currents(), &[-1, -1, 0, 0, 0, 0]);
        apply_event(&mut c, &mut j, &EventKind::Creation { site: 2 }).unwrap();
        assert_eq!(j.currents(), &[0, 0, 0, 0, 0, 0]);
        assert!(check_continuity(&Configuration::from_counts(vec![0, 1, 0, 0, 0]), &c, &j).unwrap());
    }

    #[test]
    fn continuity_examples() {
        let c0 = Configuration::from_counts(vec![3, 1, 4, 1, 5]);
        let j = CurrentLedger::zeros(5);
        assert!(check_continuity(&c0, &c0, &j).unwrap());

        let mut c = c0.clone();
        let mut j = CurrentLedger::zeros(5);
        apply_event(&mut c, &mut j, &EventKind::Creation { site: 1 }).unwrap();
        assert!(check_continuity(&c0, &c, &j).unwrap());

        let mut bad = j.clone();
        bad.currents_mut()[3] += 1;
        assert!(!check_continuity(&c0, &c, &bad).unwrap());

        assert!(matches!(
            check_continuity(&c0, &Configuration::empty(4), &j),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn kernel_validation_and_sigma2() {
        assert!(Kernel::symmetric(&[0.5, 0.1]).is_err());
        assert!(Kernel::from_pairs(&[(1, 0.3), (-1, 0.2), (2, 0.25), (-2, 0.25)]).is_err());
        let k = Kernel::from_pairs(&[(1, 0.25), (-1, 0.25), (2, 0.25), (-2, 0.25)]).unwrap();
        assert_eq!(k.range(), 2);
        assert!((k.sigma2() - 1.25).abs() < 1e-15);
        assert_eq!(Kernel::nearest_neighbor().sigma2(), 0.5);
        assert_eq!(Kernel::nearest_neighbor().diffusion_factor(), 1.0);
        assert_eq!(k.tail(1), 0.5);
        assert_eq!(k.tail(2), 0.25);
        assert_eq!(k.tail(3), 0.0);
    }

    #[test]
    fn span_continuity_detects_faults() {
        let c0 = Configuration::from_counts(vec![2, 2, 2, 2, 2, 2]);
        let mut c = c0.clone();
        let mut j = CurrentLedger::zeros(6);
        for ev in [
            EventKind::Jump { site: 1, offset: 2 },
            EventKind::Jump { site: 5, offset: -2 },
            EventKind::Jump { site: 6, offset: 2 },
            EventKind::Creation { site: 2 },
        ] {
            apply_event(&mut c, &mut j, &ev).unwrap();
        }
        for span in 1..=6 {
            assert!(check_continuity_span(&c0, &c, &j, span).unwrap());
        }
        j.currents_mut()[2] -= 1;
        assert!(!check_continuity_span(&c0, &c, &j, 3).unwrap());
    }
}
