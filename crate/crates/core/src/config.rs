//! Run configuration: a `[system]` and a `[noise]` section read from TOML
//! or JSON, with per-field environment overrides.
//!
//! Override variables are named `NOON_<SECTION>_<FIELD>` in upper case,
//! e.g. `NOON_NOISE_SIGMA_TRAP=0` or `NOON_SYSTEM_ETA_X=0.05`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hamiltonians::SystemConfig;
use crate::noise::NoiseConfig;

pub const ENV_PREFIX: &str = "NOON_";

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub noise: NoiseConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.noise.validate()
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn from_text(text: &str) -> Result<Self> {
        let cfg: RunConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::InvalidConfiguration(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::InvalidConfiguration(e.to_string()))?
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Applies `NOON_<SECTION>_<FIELD>` overrides from `vars`; other
    /// variables are ignored.
    pub fn with_overrides<I, K, V>(self, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut tree = serde_json::to_value(self)?;
        for (key, value) in vars {
            let Some(rest) = key.as_ref().strip_prefix(ENV_PREFIX) else { continue };
            let rest = rest.to_ascii_lowercase();
            let Some((section, field)) = rest.split_once('_') else { continue };
            let Some(slot) = tree.get_mut(section).and_then(|s| s.get_mut(field)) else {
                if matches!(section, "system" | "noise") {
                    return Err(Error::InvalidConfiguration(format!("unknown override {}", key.as_ref())));
                }
                continue;
            };
            *slot = parse_scalar(slot, value.as_ref())
                .ok_or_else(|| Error::InvalidConfiguration(format!("bad value for {}: `{}`", key.as_ref(), value.as_ref())))?;
        }
        serde_json::from_value(tree).map_err(|e| Error::InvalidConfiguration(e.to_string()))
    }

    /// File (if any), then environment, then validation.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        let base = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        let cfg = base.with_overrides(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_scalar(current: &Value, text: &str) -> Option<Value> {
    let text = text.trim();
    if current.is_u64() {
        text.parse::<u64>().ok().map(Value::from)
    } else {
        text.parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let toml_text = "[system]\neta_x = 0.05\n[noise]\nseed = 7\n";
        let json_text = r#"{"system": {"eta_x": 0.05}, "noise": {"seed": 7}}"#;
        let a = RunConfig::from_text(toml_text).unwrap();
        let b = RunConfig::from_text(json_text).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.system.eta_x, 0.05);
        assert_eq!(a.system.eta_y, SystemConfig::default().eta_y);
        assert_eq!(a.noise.seed, 7);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(RunConfig::from_text("[system]\neta_z = 0.1\n").is_err());
        assert!(RunConfig::from_text("[lasers]\n").is_err());
    }

    #[test]
    fn overrides() {
        let cfg = RunConfig::default()
            .with_overrides([("NOON_NOISE_SIGMA_TRAP", "0"), ("NOON_NOISE_SEED", "11"), ("PATH", "/bin")])
            .unwrap();
        assert_eq!(cfg.noise.sigma_trap, 0.0);
        assert_eq!(cfg.noise.seed, 11);
        assert!(RunConfig::default().with_overrides([("NOON_NOISE_SEED", "-1")]).is_err());
        assert!(RunConfig::default().with_overrides([("NOON_SYSTEM_BOGUS", "1")]).is_err());
    }
}
