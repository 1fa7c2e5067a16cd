//! Exclusion picture of the zero-range process.
//!
//! Site `x` of the zero-range process is the gap between exclusion particles
//! `x` and `x + 1`: `z_{x+1} - z_x = eta(x) + 1`. A zero-range particle crossing
//! bond `x` to the right shrinks gap `x` and widens a gap further right, which
//! moves exclusion particle `x + 1` one step to the left. With displacements
//! measured leftwards, particle `x + 1` therefore carries the cut current `J(x)`
//! and the leftmost particle carries the source current `J(0)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::model::{Configuration, CurrentLedger, EventKind};

/// Positions `z_1 < ... < z_{len+1}` with `z_1 = base`.
pub fn zrp_to_exclusion(config: &Configuration, base: i64) -> Vec<i64> {
    let mut z = Vec::with_capacity(config.len() + 1);
    z.push(base);
    let mut pos = base;
    for &k in config.counts() {
        pos += k as i64 + 1;
        z.push(pos);
    }
    z
}

/// Inverse of [`zrp_to_exclusion`]; returns the configuration and the base.
pub fn exclusion_to_zrp(positions: &[i64]) -> Result<(Configuration, i64)> {
    let base = *positions.first().ok_or_else(|| Error::Shape("no particles".into()))?;
    let counts = positions
        .windows(2)
        .map(|w| {
            let gap = w[1] - w[0] - 1;
            u32::try_from(gap).map_err(|_| Error::Precondition(format!("positions {} and {} violate exclusion", w[0], w[1])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Configuration::from_counts(counts), base))
}

/// Bonds crossed by an event and the direction of the crossing (`+1` rightwards).
fn crossed_bonds(ev: &EventKind, len: usize) -> Result<(usize, usize, i64)> {
    let site = |s: usize| {
        if s == 0 || s > len {
            Err(Error::Range { site: s as i64, len })
        } else {
            Ok(s as i64)
        }
    };
    let (from, to) = match *ev {
        EventKind::Jump { site: s, offset } => {
            let s = site(s)?;
            (s, s + offset as i64)
        }
        EventKind::Creation { site: s } => (0, site(s)?),
        EventKind::Injection { site: s } => (len as i64 + 1, site(s)?),
    };
    let (lo, hi, sign) = if to > from { (from, to, 1) } else { (to, from, -1) };
    Ok((lo.max(0) as usize, (hi - 1).min(len as i64) as usize, sign))
}

/// Moves the exclusion particles affected by one zero-range event.
pub fn apply_exclusion_event(positions: &mut [i64], ev: &EventKind) -> Result<()> {
    let len = positions.len().checked_sub(1).ok_or_else(|| Error::Shape("no particles".into()))?;
    let (first, last, sign) = crossed_bonds(ev, len)?;
    for z in &mut positions[first..=last] {
        *z -= sign;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementReport {
    /// Particles `1..=tracked` were compared at every sample time.
    pub tracked: usize,
    pub samples_checked: usize,
    pub events_replayed: u64,
    /// Leftward displacement of the leftmost particle at each sample time.
    pub leftmost: Vec<(f64, i64)>,
    /// First `(sample, particle)` where displacement and current differ; particle
    /// `0` marks a checksum mismatch without a snapshot to locate it.
    pub first_mismatch: Option<(usize, usize)>,
    /// Every translated event kept `z_1 < z_2 < ...`.
    pub order_preserved: bool,
    pub exact: bool,
}

/// Replays the event log of `traj` through the exclusion picture and compares the
/// leftward displacement of particle `x + 1` with `J(x)` at every sample time.
///
/// Snapshots, when present, give the full ledger; otherwise the comparison uses
/// `J(0)` and the ledger checksum of each sample.
pub fn tagged_displacement_check(traj: &Trajectory, tracked: usize) -> Result<DisplacementReport> {
    let log = traj
        .events
        .as_ref()
        .ok_or_else(|| Error::Precondition("run has no event log".into()))?;
    let len = traj.config0.len();
    let tracked = tracked.min(len + 1);
    let base = 0;
    let start = zrp_to_exclusion(&traj.config0, base);
    let mut z = start.clone();
    let mut done = 0usize;
    let mut order_preserved = true;
    let mut first_mismatch = None;
    let mut leftmost = Vec::with_capacity(traj.samples.len());
    for (i, sample) in traj.samples.iter().enumerate() {
        let upto = sample.events as usize;
        if upto > log.len() {
            return Err(Error::Shape(format!("sample {i} needs {upto} events, log has {}", log.len())));
        }
        for ev in &log[done..upto] {
            apply_exclusion_event(&mut z, &ev.kind)?;
        }
        done = upto;
        order_preserved &= z.windows(2).all(|w| w[0] < w[1]);
        let disp: Vec<i64> = start.iter().zip(&z).map(|(a, b)| a - b).collect();
        leftmost.push((sample.t, disp[0]));
        let ok = match traj.snapshots.get(i) {
            Some((_, ledger)) => (0..tracked).find(|&x| disp[x] != ledger.get(x)).map(|x| x + 1),
            None => {
                if disp[0] != sample.j0 {
                    Some(1)
                } else if CurrentLedger::from_currents(disp.clone()).checksum() != sample.checksum {
                    Some(0)
                } else {
                    None
                }
            }
        };
        if let (None, Some(x)) = (first_mismatch, ok) {
            first_mismatch = Some((i, x));
        }
    }
    Ok(DisplacementReport {
        tracked,
        samples_checked: traj.samples.len(),
        events_replayed: done as u64,
        leftmost,
        exact: first_mismatch.is_none() && order_preserved,
        first_mismatch,
        order_preserved,
    })
}

/// [`tagged_displacement_check`] over an ensemble.
pub fn tagged_displacement_ensemble(trajs: &[Trajectory], tracked: usize) -> Result<Vec<DisplacementReport>> {
    trajs.par_iter().map(|t| tagged_displacement_check(t, tracked)).collect()
}
