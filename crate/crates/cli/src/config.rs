//! Run configuration: defaults, then a `key = value` file, then flags.

use std::path::{Path, PathBuf};

use clap::Args;
use ergolab_core::montecarlo::SamplerMode;
use ergolab_core::{Backend, Error, Result};
use serde::Serialize;

/// Flags shared by every command. Unset flags fall back to the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Map, e.g. `doubling`, `chebyshev:2`, `lsv:0.25`, `mp:0.3`.
    #[arg(long, global = true)]
    pub map: Option<String>,
    /// Observable: builtin name, `coboundary:<spec>`, or an expression in `y`.
    #[arg(long, global = true)]
    pub obs: Option<String>,
    /// Quadrature cells.
    #[arg(long, global = true)]
    pub cells: Option<usize>,
    /// Birkhoff length.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Ensemble size.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub burnin: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `branch_sum` or `ulam`.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Path resolution for the functional tests.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long = "lag-max", global = true)]
    pub lag_max: Option<usize>,
    #[arg(long = "k-max", global = true)]
    pub k_max: Option<usize>,
    /// Number of transfer iterates for the decay analysis.
    #[arg(long = "n-max", global = true)]
    pub n_max: Option<usize>,
    /// Refinement factor for numerically estimated densities.
    #[arg(long, global = true)]
    pub oversample: Option<usize>,
    /// `inverse-cdf`, `burn-in-orbit` or `bit-queue`.
    #[arg(long, global = true)]
    pub sampler: Option<String>,
    /// Override the σ used by `clt` and `fclt`.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Also run the other transfer backend and compare.
    #[arg(long = "cross-check", global = true)]
    pub cross_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub map: String,
    pub obs: Option<String>,
    pub cells: usize,
    pub n: usize,
    pub samples: usize,
    pub burnin: usize,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
    pub backend: Backend,
    pub m: usize,
    pub lag_max: usize,
    pub k_max: usize,
    pub n_max: usize,
    pub oversample: usize,
    pub sampler: Option<SamplerMode>,
    pub sigma: Option<f64>,
    pub cross_check: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            map: String::new(),
            obs: None,
            cells: 4096,
            n: 4096,
            samples: 10_000,
            burnin: ergolab_core::montecarlo::DEFAULT_BURN_IN,
            seed: None,
            threads: None,
            out: PathBuf::from("ergolab-out"),
            backend: Backend::BranchSum,
            m: 64,
            lag_max: ergolab_core::montecarlo::DEFAULT_LAG_MAX,
            k_max: ergolab_core::gordin::DEFAULT_K_MAX,
            n_max: 128,
            oversample: 16,
            sampler: None,
            sigma: None,
            cross_check: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for '{key}'")))
}

fn parse_backend(value: &str) -> Result<Backend> {
    match value {
        "branch_sum" | "branch-sum" => Ok(Backend::BranchSum),
        "ulam" => Ok(Backend::Ulam),
        _ => Err(Error::Config(format!("unknown backend '{value}'"))),
    }
}

impl RunConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.replace('-', "_").as_str() {
            "map" => self.map = value.to_string(),
            "obs" => self.obs = Some(value.to_string()),
            "cells" => self.cells = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "burnin" => self.burnin = parse(key, value)?,
            "seed" => self.seed = Some(parse(key, value)?),
            "threads" => self.threads = Some(parse(key, value)?),
            "out" => self.out = PathBuf::from(value),
            "backend" => self.backend = parse_backend(value)?,
            "m" => self.m = parse(key, value)?,
            "lag_max" => self.lag_max = parse(key, value)?,
            "k_max" => self.k_max = parse(key, value)?,
            "n_max" => self.n_max = parse(key, value)?,
            "oversample" => self.oversample = parse(key, value)?,
            "sampler" => self.sampler = Some(value.parse()?),
            "sigma" => self.sigma = Some(parse(key, value)?),
            "cross_check" => self.cross_check = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn from_flags(flags: &Flags) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(p) = &flags.config {
            cfg.apply_file(p)?;
        }
        if let Some(v) = &flags.map {
            cfg.map = v.clone();
        }
        if flags.obs.is_some() {
            cfg.obs = flags.obs.clone();
        }
        macro_rules! over {
            ($($f:ident),*) => {$( if let Some(v) = flags.$f { cfg.$f = v; } )*};
        }
        over!(cells, n, samples, burnin, m, lag_max, k_max, n_max, oversample);
        if flags.seed.is_some() {
            cfg.seed = flags.seed;
        }
        if flags.threads.is_some() {
            cfg.threads = flags.threads;
        }
        if let Some(p) = &flags.out {
            cfg.out = p.clone();
        }
        if let Some(b) = &flags.backend {
            cfg.backend = parse_backend(b)?;
        }
        if let Some(s) = &flags.sampler {
            cfg.sampler = Some(s.parse()?);
        }
        if flags.sigma.is_some() {
            cfg.sigma = flags.sigma;
        }
        cfg.cross_check |= flags.cross_check;
        if cfg.map.is_empty() {
            return Err(Error::Config("no map given (use --map or a config file)".to_string()));
        }
        Ok(cfg)
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("this command needs --seed".to_string()))
    }

    pub fn require_obs(&self) -> Result<&str> {
        self.obs
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs --obs".to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nmap = lsv:0.25\nobs = y - c  # centered\nseed=7\nlag-max = 64\n")
            .unwrap();
        assert_eq!(cfg.map, "lsv:0.25");
        assert_eq!(cfg.obs.as_deref(), Some("y - c"));
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.lag_max, 64);
        assert!(cfg.apply_text("bogus = 1").is_err());
        assert!(cfg.apply_text("cells = many").is_err());
        assert!(cfg.apply_text("no equals sign").is_err());
    }

    #[test]
    fn flags_override_and_seed_is_required() {
        let flags = Flags {
            map: Some("doubling".into()),
            cells: Some(256),
            backend: Some("ulam".into()),
            ..Flags::default()
        };
        let cfg = RunConfig::from_flags(&flags).unwrap();
        assert_eq!(cfg.cells, 256);
        assert_eq!(cfg.backend, Backend::Ulam);
        assert!(cfg.require_seed().is_err());
        assert!(RunConfig::from_flags(&Flags::default()).is_err());
    }
}
