//! Flat `key = value` run configuration with `#` comments.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{invalid, FilmError, Result};
use crate::model::FilmConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: FilmConfig,
    pub train: TrainConfig,
}

pub const KEYS: &[&str] = &[
    "horizon",
    "multiscale_factors",
    "legendre_order",
    "mode_count",
    "mode_policy",
    "mode_seed",
    "rank",
    "revin",
    "eps_norm",
    "channels",
    "learning_rate",
    "batch_size",
    "epochs",
    "seed",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| FilmError::InvalidArgument(format!("`{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let (m, t) = (&mut self.model, &mut self.train);
        match key.trim() {
            "horizon" => m.horizon = parse(key, value)?,
            "multiscale_factors" => {
                m.multiscale_factors = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "legendre_order" => m.legendre_order = parse(key, value)?,
            "mode_count" => m.mode_count = parse(key, value)?,
            "mode_policy" => m.mode_policy = value.parse()?,
            "mode_seed" => m.mode_seed = parse(key, value)?,
            "rank" => {
                m.rank = match value {
                    "none" | "full" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "revin" => m.revin = parse(key, value)?,
            "eps_norm" => m.eps_norm = parse(key, value)?,
            "channels" => m.channels = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "adam_beta1" => t.adam_beta1 = parse(key, value)?,
            "adam_beta2" => t.adam_beta2 = parse(key, value)?,
            "adam_eps" => t.adam_eps = parse(key, value)?,
            other => return invalid(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let (m, t) = (&self.model, &self.train);
        Some(match key {
            "horizon" => m.horizon.to_string(),
            "multiscale_factors" => m
                .multiscale_factors
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "legendre_order" => m.legendre_order.to_string(),
            "mode_count" => m.mode_count.to_string(),
            "mode_policy" => m.mode_policy.to_string(),
            "mode_seed" => m.mode_seed.to_string(),
            "rank" => m.rank.map_or("none".into(), |k| k.to_string()),
            "revin" => m.revin.to_string(),
            "eps_norm" => m.eps_norm.to_string(),
            "channels" => m.channels.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "epochs" => t.epochs.to_string(),
            "seed" => t.seed.to_string(),
            "adam_beta1" => t.adam_beta1.to_string(),
            "adam_beta2" => t.adam_beta2.to_string(),
            "adam_eps" => t.adam_eps.to_string(),
            _ => return None,
        })
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| FilmError::Parse {
                line: i + 1,
                detail: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k, v).map_err(|e| FilmError::Parse {
                line: i + 1,
                detail: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("known key")))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            writeln!(out, "{k} = {v}").expect("string write");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ModePolicy;

    #[test]
    fn parses_with_comments() {
        let text = "# run\nhorizon = 24\nmultiscale_factors=1, 3 # two experts\n\nrank = 4\nmode_policy = low_random\nrevin=true\nlearning_rate = 1e-3\n";
        let c = RunConfig::from_text(text).unwrap();
        assert_eq!(c.model.horizon, 24);
        assert_eq!(c.model.multiscale_factors, vec![1, 3]);
        assert_eq!(c.model.rank, Some(4));
        assert_eq!(c.model.mode_policy, ModePolicy::LowRandom);
        assert!(c.model.revin);
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(c.train.epochs, 15);
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("eps_norm", "0.1").unwrap();
        c.set("rank", "none").unwrap();
        c.set("seed", "42").unwrap();
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
        assert_eq!(c.pairs().len(), KEYS.len());
    }

    #[test]
    fn errors_name_the_line() {
        for (text, line) in [("horizon = 3\nbogus = 1\n", 2), ("epochs\n", 1), ("epochs = x\n", 1)] {
            match RunConfig::from_text(text) {
                Err(FilmError::Parse { line: l, .. }) => assert_eq!(l, line),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
