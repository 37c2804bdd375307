//! Resolved run configuration: defaults, then the `--config` file, then flags.

use std::path::Path;

use clap::Args;
use sharpmp::adversarial::{DEFAULT_K, DEFAULT_N, DEFAULT_N_MAX};
use sharpmp::integral_equation::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use sharpmp::phi::DEFAULT_T;
use sharpmp::{Error, OperatingPoint, Report, Result};

/// Flags shared by every subcommand; each overrides the config-file key of
/// the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// β = β* − beta_margin.
    #[arg(long)]
    pub beta_margin: Option<f64>,
    /// τ = (1 − tau_margin)·τ*(β).
    #[arg(long)]
    pub tau_margin: Option<f64>,
    /// First constructed index K.
    #[arg(long = "k")]
    pub k: Option<usize>,
    /// Index N of the target f = r_N.
    #[arg(long = "n")]
    pub n: Option<usize>,
    /// Last constructed index.
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Fixed ε instead of the automatic search.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Mollification width.
    #[arg(long)]
    pub t: Option<f64>,
    /// Grid size (odd).
    #[arg(long = "m")]
    pub m: Option<usize>,
    /// Integral-equation tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed for sampled checks.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub beta_margin: f64,
    pub tau_margin: f64,
    pub k: usize,
    pub n: usize,
    pub n_max: usize,
    pub epsilon: Option<f64>,
    pub t: f64,
    pub m: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Raw file contents, for output paths.
    file: Report,
}

impl Default for Config {
    fn default() -> Self {
        let op = OperatingPoint::default();
        Self {
            beta_margin: op.beta_margin,
            tau_margin: op.tau_margin,
            k: DEFAULT_K,
            n: DEFAULT_N,
            n_max: DEFAULT_N_MAX,
            epsilon: None,
            t: DEFAULT_T,
            m: 2001,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 1,
            file: Report::new(),
        }
    }
}

fn pick<T: std::str::FromStr>(flag: Option<T>, file: &Report, key: &str, default: T) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(s) => s.parse().map_err(|_| Error::InvalidArgument(format!("config key {key}={s} is malformed"))),
        None => Ok(default),
    }
}

impl Config {
    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let file = match path {
            Some(p) => Report::parse(&std::fs::read_to_string(p)?),
            None => Report::new(),
        };
        let d = Config::default();
        let epsilon = match (o.epsilon, file.get("epsilon")) {
            (Some(e), _) => Some(e),
            (None, None | Some("auto")) => None,
            (None, Some(s)) => {
                Some(s.parse().map_err(|_| Error::InvalidArgument(format!("config key epsilon={s} is malformed")))?)
            }
        };
        let c = Config {
            beta_margin: pick(o.beta_margin, &file, "beta_margin", d.beta_margin)?,
            tau_margin: pick(o.tau_margin, &file, "tau_margin", d.tau_margin)?,
            k: pick(o.k, &file, "K", d.k)?,
            n: pick(o.n, &file, "N", d.n)?,
            n_max: pick(o.n_max, &file, "n_max", d.n_max)?,
            epsilon,
            t: pick(o.t, &file, "t", d.t)?,
            m: pick(o.m, &file, "M", d.m)?,
            tol: pick(o.tol, &file, "tol", d.tol)?,
            max_iter: pick(None, &file, "max_iter", d.max_iter)?,
            seed: pick(o.seed, &file, "seed", d.seed)?,
            file,
        };
        if c.m < 5 || c.m % 2 == 0 {
            return Err(Error::InvalidArgument(format!("M={} must be odd and >= 5", c.m)));
        }
        Ok(c)
    }

    pub fn operating_point(&self) -> OperatingPoint {
        OperatingPoint { beta_margin: self.beta_margin, tau_margin: self.tau_margin }
    }

    /// Output path: the flag, else the config key, else `default`.
    pub fn path(&self, flag: Option<&Path>, key: &str, default: &str) -> std::path::PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.file.get(key).map(Into::into))
            .unwrap_or_else(|| default.into())
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.num("beta_margin", self.beta_margin)
            .num("tau_margin", self.tau_margin)
            .push("K", self.k)
            .push("N", self.n)
            .push("n_max", self.n_max)
            .push("epsilon", self.epsilon.map_or("auto".to_string(), sharpmp::report::fmt_f64))
            .num("t", self.t)
            .push("M", self.m)
            .num("tol", self.tol)
            .push("max_iter", self.max_iter)
            .push("seed", self.seed);
        r
    }
}
