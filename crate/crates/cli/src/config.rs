//! Flat dotted-key configuration (`model.*`, `caps.*`, `mc.*`).
//!
//! Files are TOML, but only scalar leaves under the three prefixes are
//! accepted. `[model]` sections and `model.width_base = ...` lines are
//! equivalent because both flatten to the same dotted key.

use crate::error::CliError;
use hypmark::stats::{Observable, RunConfig};
use hypmark::thermo::Caps;
use hypmark::ModelSpec;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub model: ModelSpec,
    pub caps: Caps,
    pub mc: RunConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            model: ModelSpec::default(),
            caps: Caps::default(),
            mc: RunConfig::default(),
        }
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out)?;
            }
        }
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>, CliError> = items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    other => Err(CliError::Config(format!("{prefix}: expected strings, found {other}"))),
                })
                .collect();
            out.insert(prefix.to_string(), parts?.join(","));
        }
        toml::Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {raw:?}")))
}

impl Settings {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Settings, CliError> {
        let mut s = Settings::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            s.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
            s.set(k.trim(), v.trim())?;
        }
        s.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        s.mc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(s)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        let doc: toml::Table = text.parse().map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        let mut flat = BTreeMap::new();
        flatten("", &toml::Value::Table(doc), &mut flat)?;
        for (k, v) in &flat {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        match key {
            "model.width_base" => self.model.width_base = parse(key, raw)?,
            "model.height_base" => self.model.height_base = parse(key, raw)?,
            "model.cone_slope" => self.model.cone_slope = parse(key, raw)?,
            "model.perturbation" => self.model.perturbation = parse(key, raw)?,
            "model.symbol_cap" => self.model.symbol_cap = parse(key, raw)?,
            "caps.symbol_cap" => self.caps.symbol_cap = parse(key, raw)?,
            "caps.max_return" => self.caps.max_return = parse(key, raw)?,
            "caps.table_depth" => self.caps.table_depth = parse(key, raw)?,
            "caps.r_max" => self.caps.r_max = parse(key, raw)?,
            "caps.budget_cap" => self.caps.budget_cap = parse(key, raw)?,
            "caps.ages" => self.caps.ages = parse(key, raw)?,
            "mc.seed" => self.mc.seed = parse(key, raw)?,
            "mc.burn_in" => self.mc.burn_in = parse(key, raw)?,
            "mc.steps" => self.mc.steps = parse(key, raw)?,
            "mc.samples" => self.mc.samples = parse(key, raw)?,
            "mc.observables" => {
                self.mc.observables = raw
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse::<Observable>().map_err(|e| CliError::Config(format!("{key}: {e}"))))
                    .collect::<Result<_, _>>()?
            }
            other => return Err(CliError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, for provenance in JSON summaries.
    pub fn dotted(&self) -> BTreeMap<&'static str, String> {
        let m = &self.model;
        let c = &self.caps;
        let r = &self.mc;
        let obs: Vec<String> = r.observables.iter().map(|o| o.to_string()).collect();
        BTreeMap::from([
            ("model.width_base", m.width_base.to_string()),
            ("model.height_base", m.height_base.to_string()),
            ("model.cone_slope", m.cone_slope.to_string()),
            ("model.perturbation", m.perturbation.to_string()),
            ("model.symbol_cap", m.symbol_cap.to_string()),
            ("caps.symbol_cap", c.symbol_cap.to_string()),
            ("caps.max_return", c.max_return.to_string()),
            ("caps.table_depth", c.table_depth.to_string()),
            ("caps.r_max", c.r_max.to_string()),
            ("caps.budget_cap", c.budget_cap.to_string()),
            ("caps.ages", c.ages.to_string()),
            ("mc.seed", r.seed.to_string()),
            ("mc.burn_in", r.burn_in.to_string()),
            ("mc.steps", r.steps.to_string()),
            ("mc.samples", r.samples.to_string()),
            ("mc.observables", obs.join(",")),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_and_sectioned_forms_agree() {
        let mut a = Settings::default();
        a.apply_text("model.perturbation = 0.05\ncaps.ages = 12\nmc.observables = [\"x\", \"smooth:1:1\"]\n")
            .unwrap();
        let mut b = Settings::default();
        b.apply_text("[model]\nperturbation = 0.05\n[caps]\nages = 12\n[mc]\nobservables = \"x,smooth:1:1\"\n")
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.model.perturbation, 0.05);
        assert_eq!(a.mc.observables.len(), 2);
    }

    #[test]
    fn integer_values_parse_as_floats() {
        let mut s = Settings::default();
        s.apply_text("model.perturbation = 0").unwrap();
        assert_eq!(s.model.perturbation, 0.0);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut s = Settings::default();
        assert!(s.apply_text("model.colour = 1").is_err());
        assert!(s.apply_text("mc.seed = -1").is_err());
        assert!(s.apply_text("mc.seed = ").is_err());
        assert!(Settings::load(None, &["model.width_base=2".into()]).is_err());
        assert!(Settings::load(Some(Path::new("/nonexistent/cfg.toml")), &[]).is_err());
    }

    #[test]
    fn round_trip_through_dotted_keys() {
        let mut s = Settings::default();
        s.set("mc.seed", "99").unwrap();
        let mut t = Settings::default();
        for (k, v) in s.dotted() {
            t.set(k, &v).unwrap();
        }
        assert_eq!(s, t);
    }
}
