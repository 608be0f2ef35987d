//! Flat `key = value` experiment files.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! Unknown or repeated keys are errors. Command-line flags override the file.

use anyhow::{anyhow, bail, Context, Result};
use polymerlab_core::weights::{required_order, PerturbationDist};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Raised for anything wrong with the configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Fgue,
    Laplace,
    Tw,
    Perturb,
    Diag,
    Moments,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fgue => "fgue",
            Command::Laplace => "laplace",
            Command::Tw => "tw",
            Command::Perturb => "perturb",
            Command::Diag => "diag",
            Command::Moments => "moments",
        }
    }
}

impl FromStr for Command {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fgue" => Command::Fgue,
            "laplace" => Command::Laplace,
            "tw" => Command::Tw,
            "perturb" => Command::Perturb,
            "diag" => Command::Diag,
            "moments" => Command::Moments,
            other => return Err(config_error(format!("unknown command {other:?}"))),
        })
    }
}

/// How the exp-gamma shape follows `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ShapeRule {
    /// fixed `theta` (`beta = theta^{-1/2}`)
    Fixed { theta: f64 },
    /// `beta_N = N^{-alpha}`, i.e. `theta_N = N^{2 alpha}`
    Power { alpha: f64 },
}

impl ShapeRule {
    pub fn theta(self, n: usize) -> f64 {
        match self {
            ShapeRule::Fixed { theta } => theta,
            ShapeRule::Power { alpha } => (n as f64).powf(2.0 * alpha),
        }
    }
}

/// Every setting an experiment reads. `out` and `workers` are left out of
/// the serialized copy embedded in outputs, since they must not change them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub n: Vec<usize>,
    pub shape: ShapeRule,
    pub replicas: usize,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    /// direct `u = re[, im]`, replacing the `t` grid in `laplace`
    pub u: Option<[f64; 2]>,
    /// Gauss-Legendre nodes per panel (contour commands)
    pub order: Option<usize>,
    /// fixed contour truncation
    pub truncation: Option<f64>,
    pub delta: Option<f64>,
    pub phi: f64,
    /// emit both F_GUE representations
    pub dual: bool,
    pub perturbation: PerturbationDist,
    /// perturbation order; defaults to the order required for `alpha`
    pub k: Option<u32>,
    /// extra, deliberately low order run for comparison (not checked)
    pub contrast_k: Option<u32>,
    pub theta_grid: Vec<f64>,
    pub moment_order: usize,
    pub mc_samples: usize,
    /// `|z|` limit for Monte Carlo identity checks
    pub z_max: f64,
    /// standard-error ceiling for the Laplace Monte Carlo estimate
    pub se_max: f64,
    /// KS ceiling at the largest `n` in `tw`
    pub ks_max: f64,
    /// significance level for KS critical values
    pub ks_alpha: f64,
    /// agreement required between the F_GUE representations
    pub dual_tol: f64,
    pub force: bool,
    /// reference F_GUE table; defaults to `<out>/fgue_reference.csv`
    pub fgue_cache: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub workers: usize,
}

impl ExperimentConfig {
    /// Defaults for `command`, matching the desk-scale experiments.
    pub fn defaults(command: Command) -> Self {
        let (n, shape, replicas, t_grid) = match command {
            Command::Fgue => (vec![], ShapeRule::Fixed { theta: 2.0 }, 0, vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0]),
            Command::Laplace => (vec![9], ShapeRule::Fixed { theta: 2.0 }, 1_000_000, vec![0.0, 1.0]),
            Command::Tw => (vec![64, 128, 256], ShapeRule::Fixed { theta: 2.0 }, 20_000, vec![]),
            Command::Perturb => (vec![128], ShapeRule::Power { alpha: 0.25 }, 20_000, vec![]),
            Command::Diag => (vec![64], ShapeRule::Fixed { theta: 2.0 }, 0, vec![]),
            Command::Moments => (vec![], ShapeRule::Fixed { theta: 2.0 }, 0, vec![]),
        };
        let theta_grid = match command {
            Command::Diag => vec![0.5, 2.0, 20.0, 200.0],
            Command::Moments => vec![100.0, 1000.0, 10000.0],
            _ => vec![],
        };
        ExperimentConfig {
            command,
            n,
            shape,
            replicas,
            seed: 20_240_601,
            t_grid,
            u: None,
            order: None,
            truncation: None,
            delta: None,
            phi: std::f64::consts::FRAC_PI_4,
            dual: true,
            perturbation: PerturbationDist::Uniform { half_width: 1.0 },
            k: None,
            contrast_k: None,
            theta_grid,
            moment_order: 6,
            mc_samples: 1_000_000,
            z_max: 3.0,
            se_max: 5e-3,
            ks_max: 0.05,
            ks_alpha: 0.01,
            dual_tol: 1e-6,
            force: false,
            fgue_cache: None,
            out: PathBuf::from("out"),
            workers: 0,
        }
    }

    /// Parses `text` on top of the defaults for `command`. A `command` key,
    /// if present, must agree.
    pub fn parse(command: Command, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_error(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(config_error(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        let mut cfg = Self::defaults(command);
        let mut theta: Option<f64> = None;
        let mut alpha: Option<f64> = None;
        let mut beta: Option<f64> = None;
        for (key, value) in &entries {
            let v = value.as_str();
            match key.as_str() {
                "command" => {
                    if v.parse::<Command>()? != command {
                        return Err(config_error(format!("file is for command {v:?}, running {}", command.name())));
                    }
                }
                "n" | "n_grid" => cfg.n = list(key, v)?,
                "theta" => theta = Some(scalar(key, v)?),
                "alpha" => alpha = Some(scalar(key, v)?),
                "beta" => beta = Some(scalar(key, v)?),
                "replicas" => cfg.replicas = scalar(key, v)?,
                "seed" => cfg.seed = scalar(key, v)?,
                "t" | "t_grid" => cfg.t_grid = list(key, v)?,
                "u" => {
                    let parts: Vec<f64> = list(key, v)?;
                    cfg.u = match parts.as_slice() {
                        [re] => Some([*re, 0.0]),
                        [re, im] => Some([*re, *im]),
                        _ => return Err(config_error("u takes one or two numbers")),
                    }
                }
                "order" | "m" => cfg.order = Some(scalar(key, v)?),
                "truncation" | "L" => cfg.truncation = Some(scalar(key, v)?),
                "delta" => cfg.delta = Some(scalar(key, v)?),
                "phi" => cfg.phi = scalar(key, v)?,
                "dual" => cfg.dual = scalar(key, v)?,
                "perturbation" => cfg.perturbation = perturbation(v)?,
                "k" => cfg.k = Some(scalar(key, v)?),
                "contrast_k" => cfg.contrast_k = Some(scalar(key, v)?),
                "theta_grid" => cfg.theta_grid = list(key, v)?,
                "moment_order" => cfg.moment_order = scalar(key, v)?,
                "mc_samples" => cfg.mc_samples = scalar(key, v)?,
                "z_max" => cfg.z_max = scalar(key, v)?,
                "se_max" => cfg.se_max = scalar(key, v)?,
                "ks_max" => cfg.ks_max = scalar(key, v)?,
                "ks_alpha" => cfg.ks_alpha = scalar(key, v)?,
                "dual_tol" => cfg.dual_tol = scalar(key, v)?,
                "force" => cfg.force = scalar(key, v)?,
                "fgue_cache" => cfg.fgue_cache = Some(PathBuf::from(v)),
                "out" => cfg.out = PathBuf::from(v),
                "workers" => cfg.workers = scalar(key, v)?,
                other => return Err(config_error(format!("unknown key {other:?}"))),
            }
        }
        cfg.shape = match (theta, alpha, beta) {
            (None, None, None) => cfg.shape,
            (Some(theta), None, None) => ShapeRule::Fixed { theta },
            (None, None, Some(b)) => ShapeRule::Fixed { theta: 1.0 / (b * b) },
            (None, Some(alpha), None) => ShapeRule::Power { alpha },
            _ => return Err(config_error("give at most one of theta, beta, alpha")),
        };
        Ok(cfg)
    }

    pub fn load(command: Command, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(command, &text).with_context(|| format!("in {}", path.display()))
    }

    /// Checks everything the command will read, before any work starts.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(config_error(m));
        match self.shape {
            ShapeRule::Fixed { theta } if !(theta > 0.0 && theta.is_finite()) => {
                return fail(format!("theta = {theta} must be positive"))
            }
            ShapeRule::Power { alpha } if !(alpha > 0.0 && alpha <= 0.25) => {
                return fail(format!("alpha = {alpha} outside (0, 1/4]"))
            }
            _ => {}
        }
        let needs_n = matches!(self.command, Command::Laplace | Command::Tw | Command::Perturb | Command::Diag);
        if needs_n && (self.n.is_empty() || self.n.contains(&0)) {
            return fail("n must list positive sizes".into());
        }
        let needs_replicas = matches!(self.command, Command::Laplace | Command::Tw | Command::Perturb);
        if needs_replicas && self.replicas < 2 {
            return fail("replicas must be at least 2".into());
        }
        if matches!(self.command, Command::Fgue) || (matches!(self.command, Command::Laplace) && self.u.is_none()) {
            if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !t.is_finite()) {
                return fail("t_grid must list finite values".into());
            }
        }
        if matches!(self.command, Command::Fgue) {
            let (lo, hi) = polymerlab_core::fredholm::FGUE_RANGE;
            if let Some(t) = self.t_grid.iter().find(|t| **t < lo || **t > hi) {
                return fail(format!("t = {t} outside [{lo}, {hi}]"));
            }
        }
        if let Some([re, im]) = self.u {
            if !(re > 0.0) || !im.is_finite() {
                return fail(format!("u = {re} + {im}i needs Re(u) > 0"));
            }
        }
        if let Some(order) = self.order {
            if order < 2 {
                return fail("order must be at least 2".into());
            }
        }
        if let Some(l) = self.truncation {
            if !(l > 0.0 && l.is_finite()) {
                return fail(format!("truncation = {l}"));
            }
        }
        if !(self.phi > 0.0 && self.phi <= std::f64::consts::FRAC_PI_4 + 1e-15) {
            return fail(format!("phi = {} outside (0, pi/4]", self.phi));
        }
        if matches!(self.command, Command::Diag | Command::Moments) {
            if self.theta_grid.is_empty() || self.theta_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return fail("theta_grid must list positive values".into());
            }
        }
        if matches!(self.command, Command::Moments) && !(1..=12).contains(&self.moment_order) {
            return fail("moment_order must be in 1..=12".into());
        }
        if matches!(self.command, Command::Moments) && self.mc_samples < 2 {
            return fail("mc_samples must be at least 2".into());
        }
        if matches!(self.command, Command::Perturb) {
            self.perturbation_order()?;
            if self.contrast_k == Some(0) {
                return fail("contrast_k must be positive".into());
            }
        }
        for (name, v) in [("z_max", self.z_max), ("se_max", self.se_max), ("ks_max", self.ks_max), ("dual_tol", self.dual_tol)] {
            if !(v > 0.0) {
                return fail(format!("{name} must be positive"));
            }
        }
        if !(self.ks_alpha > 0.0 && self.ks_alpha < 1.0) {
            return fail("ks_alpha must lie in (0, 1)".into());
        }
        Ok(())
    }

    /// `k` for `perturb`: explicit, or the order required by `alpha`.
    pub fn perturbation_order(&self) -> Result<u32> {
        if let Some(k) = self.k {
            if k == 0 {
                return Err(config_error("k must be positive"));
            }
            return Ok(k);
        }
        match self.shape {
            ShapeRule::Power { alpha } => required_order(alpha).map_err(|e| config_error(e.to_string())),
            ShapeRule::Fixed { .. } => Err(config_error("fixed theta needs an explicit k")),
        }
    }

    pub fn fgue_cache_path(&self) -> PathBuf {
        self.fgue_cache.clone().unwrap_or_else(|| self.out.join("fgue_reference.csv"))
    }
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| config_error(format!("{key} = {v:?}: {e}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',').map(|s| scalar(key, s.trim())).collect()
}

/// `zero`, `uniform:H`, `rademacher:A` or `clipped_normal:B`.
fn perturbation(v: &str) -> Result<PerturbationDist> {
    let (name, arg) = match v.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (v.trim(), None),
    };
    let amount = || -> Result<f64> {
        let a = arg.ok_or_else(|| config_error(format!("perturbation {name} needs a size, e.g. {name}:1")))?;
        scalar("perturbation", a)
    };
    let dist = match name {
        "zero" => PerturbationDist::Zero,
        "uniform" => PerturbationDist::Uniform { half_width: amount()? },
        "rademacher" => PerturbationDist::Rademacher { amplitude: amount()? },
        "clipped_normal" => PerturbationDist::ClippedNormal { bound: amount()? },
        other => return Err(config_error(format!("unknown perturbation {other:?}"))),
    };
    if !(dist.abs_bound() >= 0.0 && dist.abs_bound().is_finite()) {
        bail!(ConfigError(format!("perturbation size must be finite and nonnegative, got {v}")));
    }
    Ok(dist)
}

/// Compact JSON copy of `cfg`, as embedded in every output.
pub fn to_json(cfg: &ExperimentConfig) -> Result<String> {
    serde_json::to_string(cfg).map_err(|e| anyhow!("serializing config: {e}"))
}
