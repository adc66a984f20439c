//! Run configuration: defaults, `key = value` config files with per-command
//! sections, and command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    None,
    Ros,
    Smote,
    Rcs,
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "baseline" => Ok(Method::None),
            "ros" => Ok(Method::Ros),
            "smote" => Ok(Method::Smote),
            "rcs" => Ok(Method::Rcs),
            other => Err(anyhow!("unknown method {other:?} (expected none, ros, smote or rcs)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::None => "none",
            Method::Ros => "ros",
            Method::Smote => "smote",
            Method::Rcs => "rcs",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub label_col: String,
    pub header: bool,
    pub method: Method,
    pub methods: Vec<Method>,
    pub eta: f64,
    pub k: usize,
    pub smote_k: usize,
    pub temperature: f64,
    pub latent_dim: Option<usize>,
    pub use_embedder: bool,
    /// Decode synthetic latents back to input space instead of classifying latents.
    pub decode_synthetic: bool,
    pub embed_epochs: usize,
    pub embed_lr: f64,
    pub classifier_hidden: Vec<usize>,
    pub classifier_epochs: usize,
    pub classifier_lr: f64,
    pub batch_size: usize,
    pub folds: usize,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            label_col: "last".into(),
            header: true,
            method: Method::Rcs,
            methods: vec![Method::None, Method::Ros, Method::Smote, Method::Rcs],
            eta: 2.0,
            k: 3,
            smote_k: 5,
            temperature: 0.07,
            latent_dim: None,
            use_embedder: false,
            decode_synthetic: false,
            embed_epochs: 200,
            embed_lr: 1e-4,
            classifier_hidden: vec![64, 32],
            classifier_epochs: 100,
            classifier_lr: 1e-3,
            batch_size: 64,
            folds: 5,
            seed: 42,
            workers: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Keys accepted in config files and their command-line spellings.
pub const KEYS: &[&str] = &[
    "data",
    "label_col",
    "header",
    "method",
    "methods",
    "eta",
    "k",
    "smote_k",
    "temp",
    "latent_dim",
    "use_embedder",
    "decode_synthetic",
    "embed_epochs",
    "embed_lr",
    "clf_hidden",
    "clf_epochs",
    "clf_lr",
    "batch_size",
    "folds",
    "seed",
    "workers",
    "out_dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| anyhow!("{key} = {value:?}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => bail!("{key} = {value:?}: expected a boolean"),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "data" => self.data = Some(PathBuf::from(value.trim())),
            "label_col" => self.label_col = value.trim().to_string(),
            "header" => self.header = parse_bool(&key, value)?,
            "method" => self.method = value.parse()?,
            "methods" => self.methods = parse_list(&key, value)?,
            "eta" => self.eta = parse(&key, value)?,
            "k" => self.k = parse(&key, value)?,
            "smote_k" => self.smote_k = parse(&key, value)?,
            "temp" | "temperature" => self.temperature = parse(&key, value)?,
            "latent_dim" => self.latent_dim = Some(parse(&key, value)?),
            "use_embedder" => self.use_embedder = parse_bool(&key, value)?,
            "decode_synthetic" => self.decode_synthetic = parse_bool(&key, value)?,
            "embed_epochs" => self.embed_epochs = parse(&key, value)?,
            "embed_lr" => self.embed_lr = parse(&key, value)?,
            "clf_hidden" => self.classifier_hidden = parse_list(&key, value)?,
            "clf_epochs" => self.classifier_epochs = parse(&key, value)?,
            "clf_lr" => self.classifier_lr = parse(&key, value)?,
            "batch_size" => self.batch_size = parse(&key, value)?,
            "folds" => self.folds = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "workers" => self.workers = parse(&key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value.trim()),
            other => bail!("unknown configuration key {other:?}"),
        }
        Ok(())
    }

    /// Apply the top-level keys of `path`, then those of `[section]`.
    pub fn apply_file(&mut self, path: &Path, section: &str) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.apply_str(&text, section).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply_str(&mut self, text: &str, section: &str) -> Result<()> {
        let doc = ini::Ini::load_from_str(text)?;
        for name in [None, Some(section)] {
            if let Some(props) = doc.section(name) {
                for (k, v) in props.iter() {
                    self.set(k, v)?;
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 1.0) || !self.eta.is_finite() {
            bail!("eta must be a finite number >= 1, got {}", self.eta);
        }
        if self.k == 0 {
            bail!("k must be >= 1");
        }
        if self.smote_k == 0 {
            bail!("smote_k must be >= 1");
        }
        if self.folds < 2 {
            bail!("folds must be >= 2, got {}", self.folds);
        }
        if self.batch_size == 0 {
            bail!("batch_size must be >= 1");
        }
        if !(self.classifier_lr >= 0.0) || !(self.embed_lr >= 0.0) {
            bail!("learning rates must be nonnegative");
        }
        if self.use_embedder && !(self.temperature > 0.0) {
            bail!("temperature must be positive, got {}", self.temperature);
        }
        if self.latent_dim == Some(0) {
            bail!("latent_dim must be >= 1");
        }
        Ok(())
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| anyhow!("no dataset given (use --data or `data = ...`)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_layer_over_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply_str("seed = 7\neta = 1.5\n[evaluate]\neta = 1.3\nmethods = none, rcs\n[inspect]\nk = 9\n", "evaluate")
            .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.eta, 1.3);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.methods, vec![Method::None, Method::Rcs]);
    }

    #[test]
    fn bad_values_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("eta", "abc").is_err());
        assert!(cfg.set("method", "adasyn").is_err());
        assert!(cfg.set("colour", "red").is_err());
        cfg.set("eta", "0.5").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn every_documented_key_is_settable() {
        let samples = [
            ("data", "x.csv"),
            ("label_col", "class"),
            ("header", "false"),
            ("method", "smote"),
            ("methods", "ros,rcs"),
            ("eta", "2"),
            ("k", "4"),
            ("smote_k", "5"),
            ("temp", "0.1"),
            ("latent_dim", "8"),
            ("use_embedder", "yes"),
            ("decode_synthetic", "no"),
            ("embed_epochs", "3"),
            ("embed_lr", "0.01"),
            ("clf_hidden", "8,4"),
            ("clf_epochs", "10"),
            ("clf_lr", "0.01"),
            ("batch_size", "16"),
            ("folds", "3"),
            ("seed", "1"),
            ("workers", "2"),
            ("out_dir", "o"),
        ];
        assert_eq!(samples.len(), KEYS.len());
        let mut cfg = RunConfig::default();
        for (k, v) in samples {
            assert!(KEYS.contains(&k));
            cfg.set(k, v).unwrap();
        }
        cfg.validate().unwrap();
        assert_eq!(cfg.classifier_hidden, vec![8, 4]);
    }
}
