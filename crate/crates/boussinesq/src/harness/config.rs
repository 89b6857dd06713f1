//! Flat `key = value` configuration with dotted section prefixes.
//!
//! The format is a plain text file: one assignment per line, `#` starts a
//! comment, blank lines are skipped, and grouping is by naming convention
//! only (`noise.eps`, `coupled.dt`, ...). Values are untyped strings until
//! a typed getter pulls them out; every parse failure names the offending
//! key so a bad config is diagnosable from the error alone.

use crate::boundary::AmplitudeLaw;
use crate::coupled::{CoupledConfig, CouplingMode, ZetaGuess};
use crate::exponents::ExponentPack;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Parsed assignments, deterministic iteration order.
#[derive(Clone, Debug, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Ok(ConfigMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// CLI overrides land here after the file is parsed.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing config key `{key}`")))
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        parse_typed(key, self.require(key)?)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => parse_typed(key, v),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            Some(v) => parse_typed(key, v),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(v) => parse_typed(key, v),
            None => Ok(default),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            Some(v) => parse_typed(key, v),
            None => Ok(default),
        }
    }

    /// Comma-separated floats, e.g. `eps_list = 1e-3, 1e-2, 1e-1`.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.require(key)?
            .split(',')
            .map(|piece| parse_typed::<f64>(key, piece.trim()))
            .collect()
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            Some(_) => self.f64_list(key),
            None => Ok(default.to_vec()),
        }
    }
}

fn parse_typed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{value}`: {e}")))
}

/// Which experiment family a config drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Interval convolution only: oracle validation, tail and scaling
    /// experiments with no solve attached.
    Interval,
    /// Full coupled system on the cube.
    Coupled3d,
    /// Interval temperature path lifted into the cube as buoyancy for a
    /// full velocity solve; the stopping statistics come from the 1D path.
    Hybrid,
}

impl Scenario {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "interval" => Ok(Scenario::Interval),
            "coupled3d" => Ok(Scenario::Coupled3d),
            "hybrid" => Ok(Scenario::Hybrid),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected interval, coupled3d or hybrid)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Interval => "interval",
            Scenario::Coupled3d => "coupled3d",
            Scenario::Hybrid => "hybrid",
        }
    }
}

/// Everything one experiment needs, resolved and validated.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub replicas: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    /// Intensity for single runs and oracle validation.
    pub eps: f64,
    /// Intensity grid for scaling tables, strictly positive and ascending.
    pub eps_list: Vec<f64>,
    /// Boundary truncation: interior modes on the interval, tangential
    /// wavenumber cap per face on the cube.
    pub noise_modes: usize,
    pub law: AmplitudeLaw,
    /// Regularity order for the convolution norm in interval scenarios
    /// (the cube reads it off the exponent bundle instead).
    pub z_alpha: f64,
    pub z_t_list: Vec<f64>,
    pub z_steps: usize,
    pub beta_list: Vec<f64>,
    /// Admissibility order entering the scaling bound.
    pub scaling_beta: f64,
    /// Frozen tail constant; `None` until a calibration run freezes it.
    pub c_hat: Option<f64>,
    pub pilot_replicas: usize,
    pub velocity_n: usize,
    pub coupled: CoupledConfig,
}

impl ExperimentConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let scenario = Scenario::parse(map.require("scenario")?)?;
        let replicas = map.usize_or("replicas", 100)?;
        if replicas == 0 {
            return Err(Error::Config("replicas must be positive".into()));
        }
        let base_seed = map.u64_or("base_seed", 0)?;
        let out_dir = PathBuf::from(map.str_or("out_dir", "runs"));
        let eps = map.f64_or("noise.eps", 1.0)?;
        let eps_list = map.f64_list_or("eps_list", &[1e-3, 1e-2, 1e-1])?;
        if eps_list.is_empty() || eps_list.iter().any(|&e| e <= 0.0) {
            return Err(Error::Config("eps_list must be nonempty and strictly positive".into()));
        }
        if eps_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("eps_list must be strictly ascending".into()));
        }
        let noise_modes = map.usize_or("noise.modes", 512)?;
        let law = match map.str_or("noise.law", "constant") {
            "constant" => AmplitudeLaw::Constant { scale: map.f64_or("noise.scale", 1.0)? },
            "power" => AmplitudeLaw::PowerDecay {
                scale: map.f64_or("noise.scale", 1.0)?,
                rate: map.f64_or("noise.rate", 1.5)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown amplitude law `{other}` (expected constant or power)"
                )))
            }
        };
        let exponents = ExponentPack::new(
            map.f64_or("exponents.delta", 0.1)?,
            map.f64_or("exponents.s", 0.25)?,
            map.f64_or("exponents.gamma", 0.26)?,
            map.f64_or("exponents.lambda", 0.05)?,
            map.f64_or("exponents.p", 4.0)?,
        )?;
        let coupling = match map.str_or("coupled.mode", "global_picard") {
            "global_picard" => CouplingMode::GlobalPicard,
            "per_step" => CouplingMode::PerStep,
            other => {
                return Err(Error::Config(format!(
                    "unknown coupling mode `{other}` (expected global_picard or per_step)"
                )))
            }
        };
        let coupled = CoupledConfig {
            eps,
            t_final: map.f64_or("coupled.t_final", 0.25)?,
            dt: map.f64_or("coupled.dt", 1.0 / 128.0)?,
            eta: map.f64_or("coupled.eta", 0.5)?,
            m_tilde: map.f64_or("coupled.m_tilde", 2.0)?,
            exponents,
            velocity_delta: map.f64_or("velocity.delta", 0.05)?,
            strict_smallness: map.bool_or("coupled.strict", false)?,
            coupling,
            zeta_guess: ZetaGuess::Zero,
            max_outer_iter: map.usize_or("coupled.max_outer", 25)?,
            tol: map.f64_or("coupled.tol", 1e-8)?,
        };
        coupled.validate()?;
        let config = ExperimentConfig {
            scenario,
            replicas,
            base_seed,
            out_dir,
            eps,
            eps_list,
            noise_modes,
            law,
            z_alpha: map.f64_or("z.alpha", 0.3)?,
            z_t_list: map.f64_list_or("z.t_list", &[0.1, 0.5, 1.0])?,
            z_steps: map.usize_or("z.steps", 2048)?,
            beta_list: map.f64_list_or("z.beta_list", &[0.2, 0.25, 0.3])?,
            scaling_beta: map.f64_or("scaling.beta", 0.2)?,
            c_hat: match map.get("scaling.c_hat") {
                Some(_) => Some(map.f64("scaling.c_hat")?),
                None => None,
            },
            pilot_replicas: map.usize_or("scaling.pilot_replicas", 1000)?,
            velocity_n: map.usize_or("velocity.n", 8)?,
            coupled,
        };
        if config.noise_modes == 0 || config.velocity_n == 0 {
            return Err(Error::Config("mode truncations must be positive".into()));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_map(&ConfigMap::load(path)?)
    }

    /// Base seed for one row of an intensity grid. Rows get disjoint seed
    /// streams by golden-ratio mixing so a table is reproducible per row.
    pub fn row_seed(&self, eps_index: usize) -> u64 {
        self.base_seed
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(eps_index as u64 + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# experiment
scenario = interval
replicas = 7
base_seed = 99
out_dir = /tmp/runs
noise.eps = 0.5   # trailing comment
noise.modes = 64
eps_list = 1e-3, 1e-2, 1e-1
coupled.dt = 0.0078125
coupled.t_final = 0.125
";

    #[test]
    fn parses_comments_blanks_and_dotted_keys() {
        let map = ConfigMap::parse(SAMPLE).unwrap();
        assert_eq!(map.get("scenario"), Some("interval"));
        assert_eq!(map.f64("noise.eps").unwrap(), 0.5);
        assert_eq!(map.f64_list("eps_list").unwrap(), vec![1e-3, 1e-2, 1e-1]);
        let config = ExperimentConfig::from_map(&map).unwrap();
        assert_eq!(config.scenario, Scenario::Interval);
        assert_eq!(config.replicas, 7);
        assert_eq!(config.base_seed, 99);
        assert_eq!(config.coupled.dt, 0.0078125);
    }

    #[test]
    fn rejects_duplicates_bad_lines_and_bad_values() {
        assert!(ConfigMap::parse("a = 1\na = 2").is_err());
        assert!(ConfigMap::parse("just words").is_err());
        assert!(ConfigMap::parse(" = 3").is_err());
        let map = ConfigMap::parse("scenario = interval\nreplicas = many").unwrap();
        let err = ExperimentConfig::from_map(&map).unwrap_err().to_string();
        assert!(err.contains("replicas"), "error must name the key: {err}");
    }

    #[test]
    fn rejects_unsorted_or_nonpositive_intensity_grids() {
        for bad in ["eps_list = 0.1, 0.01", "eps_list = 0, 0.1", "eps_list = -1"] {
            let text = format!("scenario = interval\n{bad}");
            let map = ConfigMap::parse(&text).unwrap();
            assert!(ExperimentConfig::from_map(&map).is_err(), "{bad}");
        }
    }

    #[test]
    fn cli_overrides_replace_file_values() {
        let mut map = ConfigMap::parse(SAMPLE).unwrap();
        map.set("replicas", "3");
        map.set("base_seed", "1234");
        let config = ExperimentConfig::from_map(&map).unwrap();
        assert_eq!(config.replicas, 3);
        assert_eq!(config.base_seed, 1234);
    }

    #[test]
    fn row_seeds_are_distinct_and_deterministic() {
        let map = ConfigMap::parse(SAMPLE).unwrap();
        let config = ExperimentConfig::from_map(&map).unwrap();
        let seeds: Vec<u64> = (0..4).map(|i| config.row_seed(i)).collect();
        let again: Vec<u64> = (0..4).map(|i| config.row_seed(i)).collect();
        assert_eq!(seeds, again);
        for i in 0..seeds.len() {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }

    #[test]
    fn unknown_scenario_and_law_are_named_in_errors() {
        let map = ConfigMap::parse("scenario = banana").unwrap();
        let err = ExperimentConfig::from_map(&map).unwrap_err().to_string();
        assert!(err.contains("banana"));
        let map = ConfigMap::parse("scenario = interval\nnoise.law = wavelet").unwrap();
        let err = ExperimentConfig::from_map(&map).unwrap_err().to_string();
        assert!(err.contains("wavelet"));
    }
}
