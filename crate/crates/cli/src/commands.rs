//! Subcommand implementations.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use zrp_lab::engine::{run, RunOptions, Trajectory};
use zrp_lab::exact::{full_grid, ldp_limit, psi_conditional, verify_gap_bound};
use zrp_lab::exclusion::{tagged_displacement_check, zrp_to_exclusion};
use zrp_lab::fields::{bg_residual, martingale_part, scaled_origin_current};
use zrp_lab::model::ProcessParams;
use zrp_lab::rng::replica_stream;
use zrp_lab::sampler::{Mollifier, TestFunction};
use zrp_lab::she::run_she_ensemble;
use zrp_lab::stats::{compare_models, hurst_estimate, mean_stderr, variance_with_error, EnsembleSeries};
use zrp_lab::Error;

use crate::bundle::{
    ensemble, observable_ids, out_dir, prepare, read_manifest, read_series, write_json, write_records, write_series,
    Cell, Row,
};
use crate::config::{invalid, read_config, Config, Format, Observable};
use crate::{CliError, Common};

const SEED_DERIVATION: &str = "particle replica i draws from ChaCha8 seeded with the master seed, stream i; \
heat-equation replica i from ChaCha8 seeded with splitmix64(master ^ 0x53484500), stream i; \
bootstrap resamples from ChaCha8 seeded with splitmix64(seed ^ 0xB0075742)";

/// Configuration with every derived value filled in.
struct Resolved {
    cfg: Config,
    times: Vec<f64>,
    params: ProcessParams,
    observables: Vec<Observable>,
    dir: PathBuf,
    format: Format,
}

impl Resolved {
    fn load(path: &Path, common: &Common) -> Result<Self, CliError> {
        let mut cfg = read_config(path)?;
        if let Some(s) = common.seed {
            cfg.sampling.seed = s;
        }
        if cfg.sampling.replicas == 0 {
            return Err(invalid("sampling.replicas", "need at least one replica"));
        }
        let times = cfg.times()?;
        let params = cfg.params()?;
        let observables = cfg.observables()?;
        let dir = out_dir(common, cfg.output.dir.as_deref());
        let format = common.format.or(cfg.output.format).unwrap_or(Format::Csv);
        // the manifest carries these so that it alone reproduces the run
        cfg.sampling.times = Some(times.clone());
        cfg.sampling.t_min = None;
        cfg.sampling.t_max = None;
        cfg.sampling.points = None;
        cfg.sampling.spacing = None;
        cfg.process.horizon = Some(params.horizon);
        cfg.lattice.len = Some(params.len);
        cfg.output.format = Some(format);
        Ok(Self { cfg, times, params, observables, dir, format })
    }

    fn seed(&self) -> u64 {
        self.cfg.sampling.seed
    }

    fn replicas(&self) -> usize {
        self.cfg.sampling.replicas
    }

    /// Whether a synthetic `t = 0` row precedes the sampled rows.
    fn zero_row(&self) -> bool {
        self.times[0] > 0.0
    }

    fn observable_info(&self, origin: bool) -> Vec<Value> {
        let mut out: Vec<Value> = self
            .observables
            .iter()
            .map(|o| {
                let kind = match o {
                    Observable::Bump(..) => "bump",
                    Observable::Mollifier(..) => "mollifier",
                };
                json!({
                    "id": o.id(),
                    "kind": kind,
                    "neumann": o.neumann(),
                    "profile": o.test_function().profile(),
                })
            })
            .collect();
        if origin {
            out.push(json!({ "id": "j0", "kind": "origin_current", "neumann": Value::Null }));
        }
        out
    }

    fn manifest(&self, command: &str, model: &str, origin: bool, files: &[String], partial: bool, extra: Value) -> Value {
        let mut m = json!({
            "tool": "zrp",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "model": model,
            "config": self.cfg,
            "seed": self.seed(),
            "seed_derivation": SEED_DERIVATION,
            "params": self.params,
            "observables": self.observable_info(origin),
            "files": files,
            "partial": partial,
        });
        if let (Value::Object(m), Value::Object(e)) = (&mut m, extra) {
            m.extend(e);
        }
        m
    }
}

/// Runs every replica; a replica stopped by the event budget contributes its partial trajectory.
fn run_replicas(r: &Resolved, fns: &[TestFunction], opts: &RunOptions) -> Result<Vec<Trajectory>, CliError> {
    (0..r.replicas())
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_stream(r.seed(), i as u64);
            match run(&r.params, &r.times, fns, &mut rng, opts) {
                Ok(t) => Ok(t),
                Err(Error::BudgetExceeded { partial, .. }) => Ok(*partial),
                Err(e) => Err(CliError::from(e)),
            }
        })
        .collect()
}

fn particle_rows(r: &Resolved, trajs: &[Trajectory]) -> Result<Vec<Row>, CliError> {
    let origin = r.cfg.observables.origin_current;
    let diagnostics = r.cfg.observables.diagnostics;
    let ids: Vec<&str> = r.observables.iter().map(Observable::id).collect();
    let mut rows = Vec::new();
    for (rep, traj) in trajs.iter().enumerate() {
        let mut push = |t: f64, id: String, value: f64| rows.push(Row { t, replica: rep, observable: id, value });
        let (mart, bg) = if diagnostics {
            let m = (0..ids.len()).map(|i| martingale_part(traj, i)).collect::<Result<Vec<_>, _>>()?;
            let b = (0..ids.len()).map(|i| bg_residual(traj, i)).collect::<Result<Vec<_>, _>>()?;
            (m, b)
        } else {
            (Vec::new(), Vec::new())
        };
        let j0 = scaled_origin_current(traj);
        if r.zero_row() {
            for (i, id) in ids.iter().enumerate() {
                push(0.0, id.to_string(), traj.initial_values[i]);
            }
            if origin {
                push(0.0, "j0".into(), 0.0);
            }
            if diagnostics {
                for id in &ids {
                    for prefix in ["M", "qv", "bg"] {
                        push(0.0, format!("{prefix}:{id}"), 0.0);
                    }
                }
            }
        }
        for (k, s) in traj.samples.iter().enumerate() {
            for (i, id) in ids.iter().enumerate() {
                push(s.t, id.to_string(), s.values[i]);
            }
            if origin {
                push(s.t, "j0".into(), j0[k].1);
            }
            if diagnostics {
                for (i, id) in ids.iter().enumerate() {
                    push(s.t, format!("M:{id}"), mart[i].m[k]);
                    push(s.t, format!("qv:{id}"), mart[i].qv[k]);
                    push(s.t, format!("bg:{id}"), bg[i][k].1);
                }
            }
        }
    }
    Ok(rows)
}

/// Mean, variance and their standard errors for every observable and time.
fn summarize(rows: &[Row]) -> Vec<Value> {
    observable_ids(rows)
        .into_iter()
        .map(|id| {
            let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
            for r in rows.iter().filter(|r| r.observable == id) {
                match groups.iter_mut().find(|g| g.0 == r.t) {
                    Some(g) => g.1.push(r.value),
                    None => groups.push((r.t, vec![r.value])),
                }
            }
            groups.sort_by(|a, b| a.0.total_cmp(&b.0));
            let stats: Vec<Value> = groups
                .iter()
                .map(|(t, v)| {
                    let (mean, se) = mean_stderr(v);
                    let (var, var_se) = if v.len() > 1 { variance_with_error(v) } else { (f64::NAN, f64::NAN) };
                    json!({
                        "t": t,
                        "replicas": v.len(),
                        "mean": mean,
                        "stderr": se,
                        "variance": var,
                        "variance_stderr": var_se,
                    })
                })
                .collect();
            json!({ "observable": id, "stats": stats })
        })
        .collect()
}

fn exclusion_rows(trajs: &[Trajectory], particles: usize) -> Vec<Vec<Cell>> {
    let mut rows = Vec::new();
    for (rep, traj) in trajs.iter().enumerate() {
        let mut emit = |t: f64, z: &[i64]| {
            for (i, &pos) in z.iter().take(particles).enumerate() {
                rows.push(vec![Cell::Num(t), Cell::Int(rep as i64), Cell::Int(i as i64 + 1), Cell::Int(pos)]);
            }
        };
        emit(0.0, &zrp_to_exclusion(&traj.config0, 0));
        for (s, (config, ledger)) in traj.samples.iter().zip(&traj.snapshots) {
            // the leftmost particle has moved J(0) sites to the left
            emit(s.t, &zrp_to_exclusion(config, -ledger.get(0)));
        }
    }
    rows
}

const EXCLUSION_HEADER: [&str; 4] = ["t", "replica", "particle", "position"];

pub fn simulate(path: &Path, common: &Common) -> Result<(), CliError> {
    let r = Resolved::load(path, common)?;
    let origin = r.cfg.observables.origin_current;
    if r.observables.is_empty() && !origin {
        return Err(invalid("observables", "nothing to record: no bumps, no mollifiers and origin_current = false"));
    }
    let fns: Vec<TestFunction> = r.observables.iter().map(Observable::test_function).collect();
    let opts = RunOptions {
        snapshots: r.cfg.output.exclusion_snapshots,
        max_events: r.cfg.sampling.max_events,
        ..RunOptions::default()
    };
    let trajs = run_replicas(&r, &fns, &opts)?;
    let complete = trajs.iter().filter(|t| t.complete).count();
    let partial = complete < trajs.len();

    prepare(&r.dir)?;
    let rows = particle_rows(&r, &trajs)?;
    let mut files = vec![write_series(&r.dir, r.format, &rows)?];
    if r.cfg.output.exclusion_snapshots {
        let k = r.cfg.output.particles.unwrap_or(r.params.len + 1);
        files.push(write_records(&r.dir, "exclusion", r.format, &EXCLUSION_HEADER, &exclusion_rows(&trajs, k))?);
    }
    let events: u64 = trajs.iter().map(|t| t.event_count).sum();
    let summary = json!({
        "model": "particle",
        "replicas": trajs.len(),
        "complete_replicas": complete,
        "events": events,
        "partial": partial,
        "observables": summarize(&rows),
    });
    write_json(&r.dir.join("summary.json"), &summary)?;
    files.push("summary.json".into());
    files.push("manifest.json".into());
    let manifest = r.manifest("simulate", "particle", origin, &files, partial, json!({}));
    write_json(&r.dir.join("manifest.json"), &manifest)?;

    if partial {
        return Err(CliError::Runtime(format!(
            "event budget of {} exceeded in {} of {} replicas; partial output in {}",
            r.cfg.sampling.max_events.unwrap_or(u64::MAX),
            trajs.len() - complete,
            trajs.len(),
            r.dir.display()
        )));
    }
    println!("simulate: {} replicas, {events} events -> {}", trajs.len(), r.dir.display());
    Ok(())
}

pub fn she(path: &Path, common: &Common) -> Result<(), CliError> {
    let mut r = Resolved::load(path, common)?;
    if r.observables.is_empty() {
        return Err(invalid("observables", "the heat equation needs bumps or mollifiers"));
    }
    let mut bumps: Vec<TestFunction> = Vec::new();
    let mut mollifiers: Vec<Mollifier> = Vec::new();
    for o in &r.observables {
        match o {
            Observable::Bump(_, f) => bumps.push(f.clone()),
            Observable::Mollifier(_, m) => mollifiers.push(m.clone()),
        }
    }
    let s_max = r.observables.iter().map(|o| o.test_function().s_max()).fold(0.0, f64::max);
    let she_cfg = r.cfg.she_config(s_max)?;
    r.cfg.lattice.she_h = Some(she_cfg.h);
    r.cfg.lattice.she_dt = Some(she_cfg.dt);
    r.cfg.lattice.she_domain = Some(she_cfg.domain_len);
    r.cfg.lattice.she_scheme = Some(she_cfg.scheme);
    r.cfg.lattice.she_initial = Some(she_cfg.initial);
    let runs = run_she_ensemble(&she_cfg, &r.times, &bumps, &mollifiers, r.seed(), r.replicas())?;

    // observables() lists bumps before mollifiers, the order of the measured values
    let ids: Vec<&str> = r.observables.iter().map(Observable::id).collect();
    let mut rows = Vec::new();
    for (rep, traj) in runs.iter().enumerate() {
        if r.zero_row() {
            for (id, v) in ids.iter().zip(&traj.initial) {
                rows.push(Row { t: 0.0, replica: rep, observable: id.to_string(), value: *v });
            }
        }
        for (t, vals) in traj.times.iter().zip(&traj.values) {
            for (id, v) in ids.iter().zip(vals) {
                rows.push(Row { t: *t, replica: rep, observable: id.to_string(), value: *v });
            }
        }
    }
    prepare(&r.dir)?;
    let mut files = vec![write_series(&r.dir, r.format, &rows)?];
    let summary = json!({
        "model": "she",
        "replicas": runs.len(),
        "courant": she_cfg.courant(),
        "cells": she_cfg.cells(),
        "observables": summarize(&rows),
    });
    write_json(&r.dir.join("summary.json"), &summary)?;
    files.push("summary.json".into());
    files.push("manifest.json".into());
    let manifest = r.manifest("she", "she", false, &files, false, json!({ "she": she_cfg }));
    write_json(&r.dir.join("manifest.json"), &manifest)?;
    println!("she: {} replicas on {} cells -> {}", runs.len(), she_cfg.cells(), r.dir.display());
    Ok(())
}

fn plain_manifest(command: &str, args: Value, files: &[String]) -> Value {
    json!({
        "tool": "zrp",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "args": args,
        "files": files,
    })
}

fn finish(dir: &Path, command: &str, args: Value, mut files: Vec<String>, summary: &Value) -> Result<(), CliError> {
    write_json(&dir.join("summary.json"), summary)?;
    files.push("summary.json".into());
    files.push("manifest.json".into());
    write_json(&dir.join("manifest.json"), &plain_manifest(command, args, &files))
}

pub fn gap(kmax: u32, lmax: u32, common: &Common) -> Result<(), CliError> {
    if lmax == 0 {
        return Err(invalid("--lmax", "need at least one site"));
    }
    let table = match verify_gap_bound(&full_grid(kmax, lmax)) {
        Ok(t) => t,
        Err(Error::Degenerate(m)) => return Err(CliError::Check(m)),
        Err(e) => return Err(e.into()),
    };
    let dir = out_dir(common, None);
    prepare(&dir)?;
    let rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|g| {
            vec![
                Cell::Int(g.k as i64),
                Cell::Int(g.l as i64),
                Cell::Int(g.states as i64),
                Cell::Num(g.gap),
                Cell::Num(g.gap_times_klsq),
            ]
        })
        .collect();
    let format = common.format.unwrap_or(Format::Csv);
    let file = write_records(&dir, "gap", format, &["k", "l", "states", "gap", "gap_times_klsq"], &rows)?;
    let summary = json!({
        "boxes": table.rows.len(),
        "min_gap_times_klsq": table.min_scaled_gap,
        "kappa0": table.kappa0,
    });
    finish(&dir, "gap", json!({ "kmax": kmax, "lmax": lmax }), vec![file], &summary)?;
    println!(
        "gap: {} boxes, min gap (k+l)^2 = {:.6}, kappa0 = {:.6} -> {}",
        table.rows.len(),
        table.min_scaled_gap,
        table.kappa0,
        dir.display()
    );
    Ok(())
}

pub fn psi(kmax: u32, lmax: u32, tol: f64, common: &Common) -> Result<(), CliError> {
    if lmax < 2 {
        return Err(invalid("--lmax", "psi needs boxes of at least two sites"));
    }
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for l in 2..=lmax {
        for k in 0..=kmax {
            let v = psi_conditional(k, l)?;
            let diff = (v.formula - v.enumeration).abs();
            worst = worst.max(diff);
            rows.push(vec![
                Cell::Int(k as i64),
                Cell::Int(l as i64),
                Cell::Num(v.formula),
                Cell::Num(v.enumeration),
                Cell::Num(diff),
            ]);
        }
    }
    let dir = out_dir(common, None);
    prepare(&dir)?;
    let format = common.format.unwrap_or(Format::Csv);
    let file = write_records(&dir, "psi", format, &["k", "l", "formula", "enumeration", "abs_diff"], &rows)?;
    let pass = worst <= tol;
    let summary = json!({ "max_abs_diff": worst, "tol": tol, "pass": pass });
    finish(&dir, "psi", json!({ "kmax": kmax, "lmax": lmax, "tol": tol }), vec![file], &summary)?;
    println!("psi: max |formula - enumeration| = {worst:e} (tol {tol:e})");
    if !pass {
        return Err(CliError::Check(format!("max deviation {worst:e} exceeds {tol:e}")));
    }
    Ok(())
}

pub fn ldp(b: f64, a: f64, ns: &[u64], tol: Option<f64>, common: &Common) -> Result<(), CliError> {
    let lim = ldp_limit(b, a, ns)?;
    let dir = out_dir(common, None);
    prepare(&dir)?;
    let rows: Vec<Vec<Cell>> = lim
        .approximants
        .iter()
        .map(|&(n, v)| vec![Cell::Int(n as i64), Cell::Num(v), Cell::Num(v - lim.limit)])
        .collect();
    let format = common.format.unwrap_or(Format::Csv);
    let file = write_records(&dir, "ldp", format, &["n", "rate", "minus_limit"], &rows)?;
    let last = lim.approximants.last().map(|p| p.1);
    let pass = match (tol, last) {
        (Some(t), Some(v)) => (v - lim.limit).abs() <= t,
        (Some(_), None) => false,
        (None, _) => true,
    };
    let summary = json!({
        "limit": lim.limit,
        "approximants": lim.approximants,
        "flagged": lim.flagged,
        "tol": tol,
        "pass": pass,
    });
    finish(&dir, "ldp", json!({ "b": b, "a": a, "ns": ns, "tol": tol }), vec![file], &summary)?;
    println!("ldp: limit {:.9}, largest-n value {:?}{}", lim.limit, last, if lim.flagged { " (a <= b: flagged)" } else { "" });
    if !pass {
        return Err(CliError::Check(format!("largest-n value {last:?} not within {tol:?} of {}", lim.limit)));
    }
    Ok(())
}

pub fn hurst(
    bundle: &Path,
    observable: &str,
    resamples: usize,
    level: f64,
    expect: Option<(f64, f64)>,
    common: &Common,
) -> Result<(), CliError> {
    if !(0.0 < level && level < 1.0) || resamples == 0 {
        return Err(invalid("--level/--resamples", "need 0 < level < 1 and at least one resample"));
    }
    let rows = read_series(bundle)?;
    let (times, data) = ensemble(&rows, observable)?;
    if times.first() != Some(&0.0) {
        return Err(invalid(observable, "the series has no t = 0 row to take increments from"));
    }
    let incr: Vec<Vec<f64>> = data.iter().map(|r| r[1..].iter().map(|v| v - r[0]).collect()).collect();
    let seed = match common.seed {
        Some(s) => s,
        None => read_manifest(bundle).ok().and_then(|m| m["seed"].as_u64()).unwrap_or(0),
    };
    let est = match hurst_estimate(&times[1..], &incr, resamples, level, seed) {
        Ok(e) => e,
        Err(e @ Error::Degenerate(_)) => return Err(CliError::Runtime(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let dir = common.out.clone().unwrap_or_else(|| bundle.to_path_buf());
    prepare(&dir)?;
    let (pass, target) = match expect {
        Some((h, tol)) => ((est.hurst - h).abs() <= tol, json!({ "expect": h, "tol": tol })),
        None => (true, Value::Null),
    };
    let report = json!({
        "observable": observable,
        "hurst": est.hurst,
        "ci": [est.ci.0, est.ci.1],
        "level": est.level,
        "slope": est.slope,
        "intercept": est.intercept,
        "times": &times[1..],
        "variances": est.variances,
        "weights": est.weights,
        "resamples": est.resamples,
        "replicas": est.replicas,
        "decades": est.decades,
        "seed": seed,
        "target": target,
        "pass": pass,
    });
    match common.format.unwrap_or(Format::Json) {
        Format::Json => write_json(&dir.join("hurst.json"), &report)?,
        Format::Csv => {
            let row = vec![
                Cell::Text(observable.to_string()),
                Cell::Num(est.hurst),
                Cell::Num(est.ci.0),
                Cell::Num(est.ci.1),
                Cell::Num(est.level),
                Cell::Int(est.replicas as i64),
                Cell::Num(est.decades),
            ];
            write_records(
                &dir,
                "hurst",
                Format::Csv,
                &["observable", "hurst", "ci_low", "ci_high", "level", "replicas", "decades"],
                &[row],
            )?;
        }
    }
    println!("hurst: H = {:.4}, {:.0}% CI [{:.4}, {:.4}]", est.hurst, 100.0 * level, est.ci.0, est.ci.1);
    if !pass {
        let (h, tol) = expect.expect("pass is only false with a target");
        return Err(CliError::Check(format!("H = {:.4} is not within {tol} of {h}", est.hurst)));
    }
    Ok(())
}

pub fn map(path: &Path, particles: Option<usize>, common: &Common) -> Result<(), CliError> {
    let mut r = Resolved::load(path, common)?;
    let fns: Vec<TestFunction> = r.observables.iter().map(Observable::test_function).collect();
    let opts = RunOptions { snapshots: true, event_log: true, max_events: r.cfg.sampling.max_events, ..RunOptions::default() };
    let trajs = run_replicas(&r, &fns, &opts)?;
    if trajs.iter().any(|t| !t.complete) {
        return Err(CliError::Runtime("event budget exceeded; the map needs complete runs".into()));
    }
    let k = particles.or(r.cfg.output.particles).unwrap_or(r.params.len + 1).min(r.params.len + 1);
    r.cfg.output.particles = Some(k);
    let reports = trajs
        .par_iter()
        .map(|t| tagged_displacement_check(t, k))
        .collect::<Result<Vec<_>, _>>()?;
    prepare(&r.dir)?;
    let mut files = vec![write_records(&r.dir, "exclusion", r.format, &EXCLUSION_HEADER, &exclusion_rows(&trajs, k))?];
    let exact = reports.iter().all(|d| d.exact);
    let summary = json!({
        "tracked": k,
        "exact": exact,
        "events_replayed": reports.iter().map(|d| d.events_replayed).sum::<u64>(),
        "replicas": reports,
    });
    write_json(&r.dir.join("summary.json"), &summary)?;
    files.push("summary.json".into());
    files.push("manifest.json".into());
    let manifest = r.manifest("map", "particle", false, &files, false, json!({}));
    write_json(&r.dir.join("manifest.json"), &manifest)?;
    println!("map: {} replicas, {k} particles tracked, exact = {exact} -> {}", trajs.len(), r.dir.display());
    if !exact {
        let bad = reports.iter().position(|d| !d.exact).expect("some replica is inexact");
        return Err(CliError::Check(format!("replica {bad}: displacement differs from the current ledger")));
    }
    Ok(())
}

pub fn compare(particle: &Path, she: &Path, rel_tol: f64, common: &Common) -> Result<(), CliError> {
    if !(rel_tol >= 0.0) {
        return Err(invalid("--rel-tol", "must be nonnegative"));
    }
    let prows = read_series(particle)?;
    let srows = read_series(she)?;
    let manifest = read_manifest(particle)?;
    let neumann_of = |id: &str| -> bool {
        manifest["observables"]
            .as_array()
            .and_then(|a| a.iter().find(|o| o["id"] == id))
            .and_then(|o| o["neumann"].as_bool())
            .unwrap_or(false)
    };
    let sids = observable_ids(&srows);
    let ids: Vec<String> = observable_ids(&prows).into_iter().filter(|id| sids.contains(id)).collect();
    if ids.is_empty() {
        return Err(invalid("compare", "the bundles share no observable"));
    }
    let collect = |rows: &[Row]| -> Result<EnsembleSeries, CliError> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for id in &ids {
            let (t, v) = ensemble(rows, id)?;
            // t = 0 holds the static law, compared separately by neither model
            let keep: Vec<usize> = (0..t.len()).filter(|&i| t[i] > 0.0).collect();
            times = keep.iter().map(|&i| t[i]).collect();
            values.push(v.iter().map(|r| keep.iter().map(|&i| r[i]).collect()).collect());
        }
        Ok(EnsembleSeries { ids: ids.clone(), times, values })
    };
    let pe = collect(&prows)?;
    let se = collect(&srows)?;
    let neumann: Vec<bool> = ids.iter().map(|id| neumann_of(id)).collect();
    let cmp = compare_models(&pe, &se, rel_tol, &neumann)?;

    let dir = out_dir(common, None);
    prepare(&dir)?;
    let rows: Vec<Vec<Cell>> = cmp
        .rows
        .iter()
        .map(|c| {
            vec![
                Cell::Text(c.observable.clone()),
                Cell::Num(c.t),
                Cell::Num(c.s),
                Cell::Num(c.particle.0),
                Cell::Num(c.particle.1),
                Cell::Num(c.she.0),
                Cell::Num(c.she.1),
                Cell::Num(c.relative),
                Cell::Num(c.allowed),
                Cell::Text(c.agree.to_string()),
            ]
        })
        .collect();
    let format = common.format.unwrap_or(Format::Csv);
    let header =
        ["observable", "t", "s", "particle", "particle_se", "she", "she_se", "relative", "allowed", "agree"];
    let file = write_records(&dir, "comparison", format, &header, &rows)?;
    let summary = json!({ "pass": cmp.pass, "flagged": cmp.flagged, "rel_tol": rel_tol, "rows": cmp.rows.len() });
    let args = json!({ "particle": particle, "she": she, "rel_tol": rel_tol });
    finish(&dir, "compare", args, vec![file], &summary)?;
    let agree = cmp.rows.iter().filter(|c| c.agree).count();
    println!("compare: {agree}/{} rows agree, flagged {:?}", cmp.rows.len(), cmp.flagged);
    if !cmp.pass {
        return Err(CliError::Check(format!("{} of {} rows disagree", cmp.rows.len() - agree, cmp.rows.len())));
    }
    Ok(())
}
