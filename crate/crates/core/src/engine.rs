//! Event-driven simulation of the zero-range process with a source.
//!
//! Every occupied site carries a rate-2 clock; the origin creates particles at
//! rate `lambda` and a mirror reservoir beyond the last site injects at the
//! same rate, so the product geometric measure is invariant on the window.
//! Time is kept in microscopic units and reported as `t = micro / n^4`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{current_pairing, static_field, FieldSample, SiteWeights};
use crate::model::{Configuration, CurrentLedger, EventKind, JumpEvent, ProcessParams};
use crate::rng::{replica_stream, Stream};
use crate::sampler::{sample_invariant, TestFunction};

/// Integrands are recomputed from scratch this often to stop rounding drift.
const REFRESH_EVERY: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Occupied sites in a swap-with-last array with a position map.
#[derive(Debug, Clone)]
struct OccupiedSet {
    list: Vec<u32>,
    pos: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl OccupiedSet {
    fn new(config: &Configuration) -> Self {
        let mut set = Self { list: Vec::with_capacity(config.len()), pos: vec![ABSENT; config.len() + 1] };
        for x in 1..=config.len() {
            if config.get(x) > 0 {
                set.insert(x);
            }
        }
        set
    }

    #[inline]
    fn insert(&mut self, x: usize) {
        self.pos[x] = self.list.len() as u32;
        self.list.push(x as u32);
    }

    #[inline]
    fn remove(&mut self, x: usize) {
        let i = self.pos[x] as usize;
        let last = self.list.pop().expect("removing from an empty set");
        if last as usize != x {
            self.list[i] = last;
            self.pos[last as usize] = i as u32;
        }
        self.pos[x] = ABSENT;
    }
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    s_drift: f64,
    s_density: f64,
    s_qv: f64,
    drift: Kahan,
    density: Kahan,
    qv: Kahan,
    drift_sup: f64,
}

/// Options of a single run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep the configuration and ledger at every sample time.
    pub snapshots: bool,
    /// Keep every event with its waiting time.
    pub event_log: bool,
    /// Stop with [`Error::BudgetExceeded`] after this many events.
    pub max_events: Option<u64>,
    /// Start here instead of sampling the invariant measure.
    pub initial: Option<Configuration>,
    /// Additional additive functionals, registered after the test functions.
    pub extra: Vec<SiteWeights>,
}

/// Output of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ProcessParams,
    pub config0: Configuration,
    /// `X_0(f)` for each test function.
    pub initial_values: Vec<f64>,
    pub samples: Vec<FieldSample>,
    pub snapshots: Vec<(Configuration, CurrentLedger)>,
    pub events: Option<Vec<JumpEvent>>,
    pub final_config: Configuration,
    pub final_ledger: CurrentLedger,
    pub event_count: u64,
    /// Number of test functions (field values per sample).
    pub fields: usize,
    /// Number of accumulators (test functions plus extra functionals).
    pub accumulators: usize,
    /// False if the run stopped on the event budget.
    pub complete: bool,
}

/// State of one replica.
#[derive(Debug, Clone)]
pub struct SimState {
    params: ProcessParams,
    config: Configuration,
    ledger: CurrentLedger,
    occupied: OccupiedSet,
    rng: Stream,
    micro: Kahan,
    events: u64,
    /// `(cumulative probability, offset)` of a jump.
    jumps: Vec<(f64, i32)>,
    /// Cumulative distribution of the creation site.
    creation: Vec<f64>,
    /// Rate of the source (equal to that of the right reservoir).
    source_rate: f64,
    weights: Vec<SiteWeights>,
    accs: Vec<Accumulator>,
}

impl SimState {
    pub fn new(params: ProcessParams, config: Configuration, rng: Stream, weights: Vec<SiteWeights>) -> Result<Self> {
        if config.len() != params.len {
            return Err(Error::Shape(format!(
                "initial configuration has {} sites, window has {}",
                config.len(),
                params.len
            )));
        }
        if weights.iter().any(|w| w.len() != params.len) {
            return Err(Error::Shape("functional weights do not match the window".into()));
        }
        let (jumps, creation, source_rate) = match params.kernel.as_ref().filter(|k| !k.is_nearest_neighbor()) {
            None => (vec![(0.5, -1), (1.0, 1)], vec![1.0], params.lambda),
            Some(k) => {
                if 2 * k.range() >= params.len {
                    return Err(Error::Parameter("kernel range too large for the window".into()));
                }
                let mut jumps = Vec::new();
                let mut acc = 0.0;
                for (i, &p) in k.positive_weights().iter().enumerate() {
                    for sign in [-1, 1] {
                        acc += p;
                        jumps.push((acc, sign * (i as i32 + 1)));
                    }
                }
                // site x is fed at rate 2 lambda T(x); total 2 lambda sum_z z p(z)
                let tails: Vec<f64> = (1..=k.range()).map(|x| k.tail(x)).collect();
                let mass: f64 = tails.iter().sum();
                let mut creation = Vec::with_capacity(tails.len());
                let mut c = 0.0;
                for t in &tails {
                    c += t / mass;
                    creation.push(c);
                }
                if let Some(last) = jumps.last_mut() {
                    last.0 = 1.0;
                }
                if let Some(last) = creation.last_mut() {
                    *last = 1.0;
                }
                (jumps, creation, 2.0 * params.lambda * mass)
            }
        };
        let occupied = OccupiedSet::new(&config);
        let ledger = CurrentLedger::zeros(params.len);
        let accs = vec![Accumulator::default(); weights.len()];
        let mut state = Self {
            params,
            config,
            ledger,
            occupied,
            rng,
            micro: Kahan::default(),
            events: 0,
            jumps,
            creation,
            source_rate,
            weights,
            accs,
        };
        state.refresh();
        Ok(state)
    }

    pub fn params(&self) -> &ProcessParams {
        &self.params
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn ledger(&self) -> &CurrentLedger {
        &self.ledger
    }

    pub fn micro_time(&self) -> f64 {
        self.micro.sum
    }

    pub fn macro_time(&self) -> f64 {
        self.micro.sum / self.params.time_scale()
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    /// `2 #{occupied} + 2 * source rate`.
    pub fn total_activation(&self) -> f64 {
        2.0 * self.occupied.list.len() as f64 + 2.0 * self.source_rate
    }

    /// True iff the occupied-site index agrees with the configuration.
    pub fn index_consistent(&self) -> bool {
        let occupied = (1..=self.config.len()).filter(|&x| self.config.get(x) > 0).count();
        occupied == self.occupied.list.len()
            && self.occupied.list.iter().enumerate().all(|(i, &x)| {
                self.config.get(x as usize) > 0 && self.occupied.pos[x as usize] as usize == i
            })
    }

    fn refresh(&mut self) {
        let (lambda, rho) = (self.params.lambda, self.params.rho);
        let counts = self.config.counts();
        for (w, acc) in self.weights.iter().zip(self.accs.iter_mut()) {
            let mut drift = -lambda * w.drift_total;
            let mut density = -rho * w.drift_total;
            let mut qv = w.qv_const;
            for (i, &eta) in counts.iter().enumerate() {
                if eta > 0 {
                    drift += w.drift[i + 1];
                    qv += w.qv[i + 1];
                    density += eta as f64 * w.drift[i + 1];
                }
            }
            acc.s_drift = drift;
            acc.s_density = density;
            acc.s_qv = qv;
        }
    }

    /// Exponential waiting time of the next event in microscopic units.
    fn draw_wait(&mut self) -> f64 {
        let a = self.total_activation();
        if a <= 0.0 {
            return f64::INFINITY;
        }
        let u: f64 = self.rng.gen();
        -(1.0 - u).ln() / a
    }

    /// Lets `dt` microscopic time pass without events.
    #[inline]
    fn advance(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        self.micro.add(dt);
        for acc in &mut self.accs {
            acc.drift.add(acc.s_drift * dt);
            acc.density.add(acc.s_density * dt);
            acc.qv.add(acc.s_qv * dt);
            let m = acc.drift.sum.abs();
            if m > acc.drift_sup {
                acc.drift_sup = m;
            }
        }
    }

    #[inline]
    fn take(&mut self, x: usize) {
        let eta = &mut self.config.counts_mut()[x - 1];
        *eta -= 1;
        let emptied = *eta == 0;
        if emptied {
            self.occupied.remove(x);
        }
        for (w, acc) in self.weights.iter().zip(self.accs.iter_mut()) {
            acc.s_density -= w.drift[x];
            if emptied {
                acc.s_drift -= w.drift[x];
                acc.s_qv -= w.qv[x];
            }
        }
    }

    #[inline]
    fn put(&mut self, x: usize) {
        let eta = &mut self.config.counts_mut()[x - 1];
        let filled = *eta == 0;
        *eta += 1;
        if filled {
            self.occupied.insert(x);
        }
        for (w, acc) in self.weights.iter().zip(self.accs.iter_mut()) {
            acc.s_density += w.drift[x];
            if filled {
                acc.s_drift += w.drift[x];
                acc.s_qv += w.qv[x];
            }
        }
    }

    fn pick_creation_site(&self, u: f64) -> usize {
        if self.creation.len() == 1 {
            return 1;
        }
        self.creation.iter().position(|&c| u < c).unwrap_or(self.creation.len() - 1) + 1
    }

    /// Chooses and executes one event; time is not advanced.
    fn fire(&mut self) -> EventKind {
        let len = self.params.len;
        let k = self.occupied.list.len();
        let u: f64 = self.rng.gen();
        let r = u * self.total_activation();
        let kind = if r < 2.0 * k as f64 {
            let half = 0.5 * r;
            let i = (half as usize).min(k - 1);
            let frac = half - i as f64;
            let site = self.occupied.list[i] as usize;
            let offset = if self.jumps.len() == 2 {
                if frac < 0.5 {
                    -1
                } else {
                    1
                }
            } else {
                self.jumps.iter().find(|(c, _)| frac < *c).map_or(self.jumps[self.jumps.len() - 1].1, |j| j.1)
            };
            let target = site as i64 + offset as i64;
            self.take(site);
            if (1..=len as i64).contains(&target) {
                self.put(target as usize);
            }
            self.ledger.cross(site as i64, target);
            EventKind::Jump { site, offset }
        } else {
            let rest = (r - 2.0 * k as f64) / self.source_rate;
            if rest < 1.0 {
                let site = self.pick_creation_site(rest);
                self.put(site);
                self.ledger.cross(0, site as i64);
                EventKind::Creation { site }
            } else {
                let site = len + 1 - self.pick_creation_site((rest - 1.0).min(1.0 - f64::EPSILON));
                self.put(site);
                self.ledger.cross(len as i64 + 1, site as i64);
                EventKind::Injection { site }
            }
        };
        self.events += 1;
        if self.events.is_multiple_of(REFRESH_EVERY) {
            self.refresh();
        }
        kind
    }

    /// Executes one event, returning it with its waiting time.
    ///
    /// Fails with a precondition error if no clock is active.
    pub fn step(&mut self) -> Result<JumpEvent> {
        let wait = self.draw_wait();
        if !wait.is_finite() {
            return Err(Error::Precondition("no active clock (empty window and lambda = 0)".into()));
        }
        self.advance(wait);
        let kind = self.fire();
        Ok(JumpEvent { kind, micro_time: wait })
    }

    fn accumulator_values(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let scale = 1.0 / self.params.time_scale();
        let mut drift = Vec::with_capacity(self.accs.len());
        let mut density = Vec::with_capacity(self.accs.len());
        let mut qv = Vec::with_capacity(self.accs.len());
        let mut sup = Vec::with_capacity(self.accs.len());
        for (w, acc) in self.weights.iter().zip(&self.accs) {
            drift.push(acc.drift.sum * scale);
            density.push(acc.density.sum * scale);
            qv.push(acc.qv.sum * scale * w.qv_scale);
            sup.push(acc.drift_sup * scale);
        }
        (drift, density, qv, sup)
    }
}

fn check_times(params: &ProcessParams, times: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for &t in times {
        if !(t.is_finite() && t >= prev) {
            return Err(Error::Parameter("sample times must be finite, nonnegative and increasing".into()));
        }
        prev = t;
    }
    if prev > params.horizon * (1.0 + 1e-12) {
        return Err(Error::Parameter(format!(
            "sample time {prev} beyond the horizon {}",
            params.horizon
        )));
    }
    Ok(())
}

struct Recorder<'a> {
    observables: &'a [TestFunction],
    statics: Vec<f64>,
    samples: Vec<FieldSample>,
    snapshots: Vec<(Configuration, CurrentLedger)>,
    keep_snapshots: bool,
}

impl Recorder<'_> {
    fn record(&mut self, state: &SimState, t: f64) {
        let n = state.params.n;
        let values = self
            .observables
            .iter()
            .zip(&self.statics)
            .map(|(f, s)| current_pairing(&state.ledger, n, f) + s)
            .collect();
        let (drift_integral, density_integral, qv, drift_sup) = state.accumulator_values();
        self.samples.push(FieldSample {
            t,
            values,
            j0: state.ledger.source(),
            checksum: state.ledger.checksum(),
            qv,
            drift_integral,
            density_integral,
            drift_sup,
            events: state.events,
        });
        if self.keep_snapshots {
            self.snapshots.push((state.config.clone(), state.ledger.clone()));
        }
    }
}

/// Runs one replica from the invariant measure (or `opts.initial`) and records
/// the field, `J(0)`, the ledger checksum and all accumulators at `sample_times`.
pub fn run(
    params: &ProcessParams,
    sample_times: &[f64],
    observables: &[TestFunction],
    rng: &mut Stream,
    opts: &RunOptions,
) -> Result<Trajectory> {
    check_times(params, sample_times)?;
    let resolved: Vec<TestFunction> = observables.iter().map(|f| f.resolved_for(params.n)).collect();
    let mut weights = resolved
        .iter()
        .map(|f| SiteWeights::for_field(params, f))
        .collect::<Result<Vec<_>>>()?;
    weights.extend(opts.extra.iter().cloned());
    let config0 = match &opts.initial {
        Some(c) => c.clone(),
        None => sample_invariant(params, rng)?,
    };
    let statics: Vec<f64> = resolved.iter().map(|f| static_field(&config0, params, f)).collect();
    let accumulators = weights.len();
    let mut state = SimState::new(params.clone(), config0.clone(), rng.clone(), weights)?;
    let mut rec = Recorder {
        observables: &resolved,
        statics: statics.clone(),
        samples: Vec::with_capacity(sample_times.len()),
        snapshots: Vec::new(),
        keep_snapshots: opts.snapshots,
    };
    let mut log = opts.event_log.then(Vec::new);
    let scale = params.time_scale();
    let budget = opts.max_events.unwrap_or(u64::MAX);
    let mut next = 0;
    let mut complete = true;

    while next < sample_times.len() {
        let wait = state.draw_wait();
        let target = state.micro.sum + wait;
        while next < sample_times.len() && sample_times[next] * scale <= target {
            let dt = sample_times[next] * scale - state.micro.sum;
            state.advance(dt);
            rec.record(&state, sample_times[next]);
            next += 1;
        }
        if next == sample_times.len() {
            break;
        }
        if state.events >= budget {
            complete = false;
            break;
        }
        state.advance(target - state.micro.sum);
        let kind = state.fire();
        if let Some(log) = log.as_mut() {
            log.push(JumpEvent { kind, micro_time: wait });
        }
    }
    *rng = state.rng.clone();

    let traj = Trajectory {
        params: params.clone(),
        config0,
        initial_values: statics,
        samples: rec.samples,
        snapshots: rec.snapshots,
        events: log,
        final_config: state.config.clone(),
        final_ledger: state.ledger.clone(),
        event_count: state.events,
        fields: resolved.len(),
        accumulators,
        complete,
    };
    if !complete {
        return Err(Error::BudgetExceeded { budget, t: state.macro_time(), partial: Box::new(traj) });
    }
    Ok(traj)
}

/// Runs `replicas` independent replicas in parallel; replica `i` uses stream `i` of `master_seed`.
pub fn run_ensemble(
    params: &ProcessParams,
    sample_times: &[f64],
    observables: &[TestFunction],
    master_seed: u64,
    replicas: usize,
    opts: &RunOptions,
) -> Result<Vec<Trajectory>> {
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_stream(master_seed, i as u64);
            run(params, sample_times, observables, &mut rng, opts)
        })
        .collect()
}
