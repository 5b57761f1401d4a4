//! `key=value` overrides from `--config <file>` and `--set`.

use std::collections::BTreeMap;
use std::path::Path;

use capgap_core::features::TfIdfConfig;
use capgap_core::linear::TrainConfig;
use capgap_core::matching::MatchConfig;

use crate::CliError;

const KEYS: &[&str] = &[
    "learning_rate",
    "weight_decay",
    "epochs",
    "batch_size",
    "label_smoothing",
    "momentum",
    "shuffle_each_epoch",
    "ngram_min",
    "ngram_max",
    "min_df",
    "max_features",
    "train_frac",
    "shared_dim",
    "tau",
];

#[derive(Debug, Default, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut s = Settings::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                s.insert(line).map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
            }
        }
        for o in overrides {
            s.insert(o).map_err(CliError::Usage)?;
        }
        Ok(s)
    }

    fn insert(&mut self, line: &str) -> Result<(), String> {
        let (k, v) = line.split_once('=').ok_or_else(|| format!("expected key=value, got `{line}`"))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(format!("unknown config key `{k}` (known: {})", KEYS.join(", ")));
        }
        self.values.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| CliError::Usage(format!("bad value `{v}` for `{key}`"))))
            .transpose()
    }

    pub fn train_frac(&self) -> Result<Option<f64>, CliError> {
        self.get("train_frac")
    }

    pub fn apply_train(&self, c: &mut TrainConfig) -> Result<(), CliError> {
        if let Some(v) = self.get("learning_rate")? {
            c.learning_rate = v;
        }
        if let Some(v) = self.get("weight_decay")? {
            c.weight_decay = v;
        }
        if let Some(v) = self.get("epochs")? {
            c.epochs = v;
        }
        if let Some(v) = self.get("batch_size")? {
            c.batch_size = v;
        }
        if let Some(v) = self.get("label_smoothing")? {
            c.label_smoothing = v;
        }
        if let Some(v) = self.get("momentum")? {
            c.momentum = v;
        }
        if let Some(v) = self.get("shuffle_each_epoch")? {
            c.shuffle_each_epoch = v;
        }
        Ok(())
    }

    pub fn apply_tfidf(&self, c: &mut TfIdfConfig) -> Result<(), CliError> {
        if let Some(v) = self.get("ngram_min")? {
            c.n_min = v;
        }
        if let Some(v) = self.get("ngram_max")? {
            c.n_max = v;
        }
        if let Some(v) = self.get("min_df")? {
            c.min_df = v;
        }
        if let Some(v) = self.get::<usize>("max_features")? {
            c.max_features = (v > 0).then_some(v);
        }
        Ok(())
    }

    pub fn apply_match(&self, c: &mut MatchConfig) -> Result<(), CliError> {
        if let Some(v) = self.get("shared_dim")? {
            c.shared_dim = v;
        }
        if let Some(v) = self.get("tau")? {
            c.tau = v;
        }
        self.apply_train(&mut c.train)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_in_order() {
        let s = Settings::load(None, &["epochs=3".into(), "epochs=5".into(), "momentum=0.9".into()]).unwrap();
        let mut c = TrainConfig::desk_sparse();
        s.apply_train(&mut c).unwrap();
        assert_eq!(c.epochs, 5);
        assert_eq!(c.momentum, 0.9);
        assert!(Settings::load(None, &["nope=1".into()]).is_err());
        assert!(Settings::load(None, &["epochs=x".into()]).unwrap().apply_train(&mut c).is_err());
    }
}
