//! Run configuration: defaults, flat `key = value` files, and overrides.
//!
//! Later sources win: defaults, then the file, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use nwa_core::{DesignKind, GenConfig, SolverControls, Variant};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub population_size: usize,
    pub n: usize,
    pub mu_y: f64,
    pub mu_x: f64,
    pub rho: f64,
    pub lambda: [f64; 2],
    pub design: DesignKind,
    pub reps: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub max_step: f64,
    pub variants: Vec<Variant>,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub emit_raw: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = SolverControls::default();
        Self {
            population_size: 1000,
            n: 100,
            mu_y: 4.0,
            mu_x: 4.0,
            rho: 0.6,
            lambda: [0.1, 0.4],
            design: DesignKind::Srs,
            reps: 10_000,
            seed: 20_240_601,
            tol: c.tol,
            max_iter: c.max_iter,
            max_step: c.max_step,
            variants: Variant::ALL.to_vec(),
            out: PathBuf::from("out"),
            threads: None,
            emit_raw: false,
        }
    }
}

pub const KEYS: [&str; 17] = [
    "N", "n", "mu_y", "mu_x", "rho", "lambda0", "lambda1", "design", "reps", "seed", "tol", "max_iter", "max_step", "variants",
    "out", "threads", "emit_raw",
];

fn parse<T: FromStr>(key: &str, value: &str, expect: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| err(key, format!("cannot parse `{value}`; expected {expect}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(err(key, format!("cannot parse `{value}`; expected true or false"))),
    }
}

impl RunConfig {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "N" => self.population_size = parse(key, v, "an integer >= 2")?,
            "n" => self.n = parse(key, v, "an integer in [1, N)")?,
            "mu_y" => self.mu_y = parse(key, v, "a finite real")?,
            "mu_x" => self.mu_x = parse(key, v, "a finite real")?,
            "rho" => self.rho = parse(key, v, "a real in (-1, 1)")?,
            "lambda0" => self.lambda[0] = parse(key, v, "a finite real")?,
            "lambda1" => self.lambda[1] = parse(key, v, "a finite real")?,
            "design" => self.design = v.parse().map_err(|_| err(key, format!("unknown design `{v}`; expected srs or poisson")))?,
            "reps" => self.reps = parse(key, v, "an integer >= 1")?,
            "seed" => self.seed = parse(key, v, "an unsigned 64-bit integer")?,
            "tol" => self.tol = parse(key, v, "a positive real")?,
            "max_iter" => self.max_iter = parse(key, v, "an integer >= 1")?,
            "max_step" => self.max_step = parse(key, v, "a positive real")?,
            "variants" => {
                self.variants = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.parse::<Variant>().map_err(|e| err(key, e.to_string())))
                    .collect::<Result<_, _>>()?
            }
            "out" => self.out = PathBuf::from(v),
            "threads" => self.threads = Some(parse(key, v, "an integer >= 1")?),
            "emit_raw" => self.emit_raw = parse_bool(key, v)?,
            _ => return Err(err(key, format!("unknown key; accepted keys are {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Apply a flat config text: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(line, format!("line {}: expected `key = value`", no + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err("config", format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Check every value against its accepted range.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population_size < 2 {
            return Err(err("N", format!("must be >= 2, got {}", self.population_size)));
        }
        if self.n == 0 || self.n >= self.population_size {
            return Err(err("n", format!("must lie in [1, N) = [1, {}), got {}", self.population_size, self.n)));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(err("rho", format!("must lie in (-1, 1), got {}", self.rho)));
        }
        for (key, v) in [("mu_y", self.mu_y), ("mu_x", self.mu_x), ("lambda0", self.lambda[0]), ("lambda1", self.lambda[1])] {
            if !v.is_finite() {
                return Err(err(key, format!("must be finite, got {v}")));
            }
        }
        if self.reps == 0 {
            return Err(err("reps", "must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(err("tol", format!("must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(err("max_iter", "must be >= 1"));
        }
        if !(self.max_step > 0.0) {
            return Err(err("max_step", format!("must be > 0, got {}", self.max_step)));
        }
        if self.variants.is_empty() {
            return Err(err("variants", "select at least one of HT, p, mle_1, mle_1/pi, cal_U, cal_S"));
        }
        if self.threads == Some(0) {
            return Err(err("threads", "must be >= 1"));
        }
        Ok(())
    }

    pub fn controls(&self) -> SolverControls {
        SolverControls {
            tol: self.tol,
            max_iter: self.max_iter,
            max_step: self.max_step,
            ..SolverControls::default()
        }
    }

    pub fn generator(&self, rho: f64, seed: u64) -> GenConfig {
        GenConfig {
            size: self.population_size,
            mean_mu: [self.mu_y, self.mu_x],
            rho,
            lambda: self.lambda,
            seed,
        }
    }

    /// Every setting that can change a result, one `key=value` per line.
    /// Output location and thread count are excluded.
    pub fn canonical(&self) -> String {
        let variants: Vec<&str> = self.variants.iter().map(|v| v.name()).collect();
        format!(
            "N={}\nn={}\nmu_y={:e}\nmu_x={:e}\nrho={:e}\nlambda0={:e}\nlambda1={:e}\ndesign={}\nreps={}\nseed={}\ntol={:e}\nmax_iter={}\nmax_step={:e}\nvariants={}\n",
            self.population_size,
            self.n,
            self.mu_y,
            self.mu_x,
            self.rho,
            self.lambda[0],
            self.lambda[1],
            self.design.name(),
            self.reps,
            self.seed,
            self.tol,
            self.max_iter,
            self.max_step,
            variants.join(",")
        )
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let mut c = RunConfig::default();
        c.apply_text("# nothing\n\n").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.population_size, c.n, c.reps), (1000, 100, 10_000));
        assert_eq!((c.lambda, c.rho, c.design), ([0.1, 0.4], 0.6, DesignKind::Srs));
        c.validate().unwrap();
    }

    #[test]
    fn out_of_range_rho_names_key() {
        let mut c = RunConfig::default();
        c.apply_text("rho = 1.5").unwrap();
        let e = c.validate().unwrap_err();
        assert_eq!(e.key, "rho");
        assert!(e.to_string().contains("(-1, 1)"));
    }

    #[test]
    fn unknown_key_rejected() {
        let e = RunConfig::default().apply_text("colour = red").unwrap_err();
        assert_eq!(e.key, "colour");
    }

    #[test]
    fn later_assignment_wins() {
        let mut c = RunConfig::default();
        c.apply_text("reps = 50\ndesign = poisson").unwrap();
        c.set("reps", "7").unwrap();
        assert_eq!((c.reps, c.design), (7, DesignKind::Poisson));
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        b.threads = Some(3);
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn variants_list_parses() {
        let mut c = RunConfig::default();
        c.set("variants", "cal_U, cal_S").unwrap();
        assert_eq!(c.variants, vec![Variant::CalU, Variant::CalS]);
        assert_eq!(c.set("variants", "bogus").unwrap_err().key, "variants");
    }
}
