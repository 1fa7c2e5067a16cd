//! Experiment configuration: a sectioned TOML file with
//! `[process]`, `[lattice]`, `[observables]`, `[sampling]` and `[output]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zrp_lab::model::{set_kernel, Kernel, ProcessParams};
use zrp_lab::sampler::{make_bump, make_mollifier, Mollifier, TestFunction};
use zrp_lab::she::{InitialDatum, Scheme, SheConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub process: ProcessSection,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub observables: ObservablesSection,
    pub sampling: SamplingSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    pub n: u32,
    pub b: f64,
    /// Overrides `1 - b/n`.
    pub lambda: Option<f64>,
    /// Defaults to the last sample time.
    pub horizon: Option<f64>,
    /// `p(1), ..., p(R)` of a symmetric kernel; nearest neighbour when absent.
    pub kernel: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    /// Window size; defaults to `max(20 n, 4 ceil(8 b n sqrt(T)))`.
    pub len: Option<usize>,
    pub she_h: Option<f64>,
    pub she_dt: Option<f64>,
    pub she_domain: Option<f64>,
    pub she_scheme: Option<Scheme>,
    pub she_initial: Option<InitialDatum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesSection {
    #[serde(default)]
    pub require_neumann: bool,
    /// Record `J_t(0) / n^{3/2}` as observable `j0`.
    #[serde(default = "yes")]
    pub origin_current: bool,
    #[serde(default)]
    pub bumps: Vec<BumpSpec>,
    /// Widths of boundary mollifiers, recorded as `phi_<eps>`.
    #[serde(default)]
    pub mollifiers: Vec<f64>,
    /// Also record `M:<id>`, `qv:<id>` and `bg:<id>` (martingale part, its
    /// quadratic variation and the Boltzmann-Gibbs residual).
    #[serde(default)]
    pub diagnostics: bool,
}

impl Default for ObservablesSection {
    fn default() -> Self {
        Self { require_neumann: false, origin_current: true, bumps: Vec::new(), mollifiers: Vec::new(), diagnostics: false }
    }
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub id: String,
    pub center: f64,
    pub width: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    /// Explicit sample times; otherwise `t_min`, `t_max`, `points`, `spacing`.
    pub times: Option<Vec<f64>>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub points: Option<usize>,
    pub spacing: Option<Spacing>,
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    pub max_events: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
    /// Also write exclusion positions at every sample time.
    #[serde(default)]
    pub exclusion_snapshots: bool,
    /// Number of exclusion particles written or tracked.
    pub particles: Option<usize>,
}

/// A named observable with its test function.
pub enum Observable {
    Bump(String, TestFunction),
    Mollifier(String, Mollifier),
}

impl Observable {
    pub fn id(&self) -> &str {
        match self {
            Observable::Bump(id, _) | Observable::Mollifier(id, _) => id,
        }
    }

    pub fn test_function(&self) -> TestFunction {
        match self {
            Observable::Bump(_, f) => f.clone(),
            Observable::Mollifier(_, m) => m.as_test_function(),
        }
    }

    pub fn neumann(&self) -> bool {
        match self {
            Observable::Bump(_, f) => f.neumann_ok(),
            // phi_eps vanishes near the origin
            Observable::Mollifier(..) => true,
        }
    }
}

pub fn read_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        // a manifest: reuse its resolved configuration
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let cfg = v.get("config").cloned().ok_or_else(|| {
            CliError::Validation(format!("{}: manifest has no `config` field", path.display()))
        })?;
        return serde_json::from_value(cfg).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())));
    }
    parse_config(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn parse_config(text: &str) -> Result<Config, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

impl Config {
    pub fn times(&self) -> Result<Vec<f64>, CliError> {
        let s = &self.sampling;
        let times = match (&s.times, s.t_min, s.t_max, s.points) {
            (Some(t), None, None, None) => t.clone(),
            (None, Some(lo), Some(hi), Some(k)) => {
                if k < 2 || !(hi > lo) || lo < 0.0 {
                    return Err(invalid("sampling", "need points >= 2 and 0 <= t_min < t_max"));
                }
                match s.spacing.unwrap_or(Spacing::Linear) {
                    Spacing::Linear => (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
                    Spacing::Log => {
                        if lo <= 0.0 {
                            return Err(invalid("sampling.t_min", "log spacing needs t_min > 0"));
                        }
                        (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
                    }
                }
            }
            _ => return Err(invalid("sampling", "give either `times` or all of `t_min`, `t_max`, `points`")),
        };
        if times.is_empty() {
            return Err(invalid("sampling.times", "no sample times"));
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("sampling.times", "times must be nonnegative and strictly increasing"));
        }
        Ok(times)
    }

    pub fn horizon(&self) -> Result<f64, CliError> {
        let last = *self.times()?.last().expect("times are nonempty");
        match self.process.horizon {
            Some(h) if h < last => Err(invalid("process.horizon", "horizon precedes the last sample time")),
            Some(h) => Ok(h),
            None => Ok(last),
        }
    }

    pub fn params(&self) -> Result<ProcessParams, CliError> {
        let p = &self.process;
        let horizon = self.horizon()?;
        let mut params = match p.lambda {
            Some(l) => ProcessParams::with_lambda(p.n, p.b, l, horizon),
            None => ProcessParams::new(p.n, p.b, horizon),
        }
        .map_err(|e| invalid("process", &e.to_string()))?;
        if let Some(len) = self.lattice.len {
            if len == 0 {
                return Err(invalid("lattice.len", "window must have at least one site"));
            }
            params = params.with_len(len);
        }
        if let Some(k) = &p.kernel {
            let kernel = Kernel::symmetric(k).map_err(|e| invalid("process.kernel", &e.to_string()))?;
            params = set_kernel(&params, kernel).map_err(|e| invalid("process.kernel", &e.to_string()))?;
        }
        Ok(params)
    }

    pub fn observables(&self) -> Result<Vec<Observable>, CliError> {
        let o = &self.observables;
        let mut out = Vec::new();
        for (i, bump) in o.bumps.iter().enumerate() {
            let field = format!("observables.bumps[{i}]");
            if bump.id.is_empty() || bump.id == "j0" || bump.id.contains(',') {
                return Err(invalid(&field, "id must be nonempty, free of commas and not `j0`"));
            }
            let f = make_bump(bump.center, bump.width)
                .map_err(|e| invalid(&field, &e.to_string()))?
                .with_amplitude(bump.amplitude);
            if o.require_neumann && !f.neumann_ok() {
                return Err(invalid(
                    &field,
                    &format!(
                        "f'(0) = {} is nonzero but require_neumann is set; the limit equation only \
                         covers test functions with f'(0) = 0 (use an interior bump or centre it at 0)",
                        f.df(0.0)
                    ),
                ));
            }
            out.push(Observable::Bump(bump.id.clone(), f));
        }
        for (i, &eps) in o.mollifiers.iter().enumerate() {
            let m = make_mollifier(eps).map_err(|e| invalid(&format!("observables.mollifiers[{i}]"), &e.to_string()))?;
            out.push(Observable::Mollifier(format!("phi_{eps}"), m));
        }
        let mut ids: Vec<&str> = out.iter().map(Observable::id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("observables", "observable ids must be unique"));
        }
        Ok(out)
    }

    pub fn she_config(&self, s_max: f64) -> Result<SheConfig, CliError> {
        let l = &self.lattice;
        let h = l.she_h.unwrap_or(0.01);
        let mut cfg = SheConfig::new(self.process.b, h, self.horizon()?, s_max)
            .map_err(|e| invalid("lattice", &e.to_string()))?;
        if let Some(dt) = l.she_dt {
            cfg.dt = dt;
        }
        if let Some(d) = l.she_domain {
            cfg.domain_len = d;
        }
        cfg.scheme = l.she_scheme.unwrap_or(Scheme::CrankNicolson);
        cfg.initial = l.she_initial.unwrap_or(InitialDatum::Brownian);
        Ok(cfg)
    }
}

pub fn invalid(field: &str, msg: &str) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[process]
n = 8
b = 1.0

[observables]
bumps = [{ id = "f", center = 1.0, width = 1.0 }]

[sampling]
times = [0.05, 0.1]
replicas = 4
seed = 7
"#;

    #[test]
    fn minimal_config_resolves() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.horizon().unwrap(), 0.1);
        let p = c.params().unwrap();
        assert_eq!(p.len, 160);
        assert_eq!(c.observables().unwrap().len(), 1);
        assert!(c.observables.origin_current);
    }

    #[test]
    fn unknown_field_names_the_line() {
        let err = parse_config("[process]\nn = 8\nbee = 1.0\n").unwrap_err();
        assert!(err.contains("bee"), "{err}");
        assert!(err.contains('3'), "{err}");
    }

    #[test]
    fn log_spacing() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.sampling.times = None;
        c.sampling.t_min = Some(0.01);
        c.sampling.t_max = Some(1.0);
        c.sampling.points = Some(3);
        c.sampling.spacing = Some(Spacing::Log);
        let t = c.times().unwrap();
        assert!((t[1] - 0.1).abs() < 1e-15);
    }
}
