use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use gatfolio::baselines::CapmConfig;
use gatfolio::data::{DatasetPaths, RegimeSpec, SplitSpec};
use gatfolio::features::Version;
use gatfolio::model::ModelConfig;

/// Where the input CSVs live. Either a directory with the standard file
/// names or explicit paths.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub news: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub market: Option<PathBuf>,
    pub riskfree: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub enabled: bool,
    pub trials: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection { enabled: false, trials: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub tickers: usize,
    pub days: usize,
    pub regime: RegimeSpec,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            tickers: 9,
            days: 1000,
            regime: RegimeSpec::default(),
        }
    }
}

/// Declarative run description as written in the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub version: Version,
    pub split: SplitSpec,
    /// Field overrides applied on top of the version preset.
    pub model: Map<String, Value>,
    pub search: SearchSection,
    pub capm: CapmConfig,
    pub synth: SynthSection,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSection::default(),
            version: Version::V1,
            split: SplitSpec::default(),
            model: Map::new(),
            search: SearchSection::default(),
            capm: CapmConfig::default(),
            synth: SynthSection::default(),
            seed: 42,
            out: PathBuf::from("run"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub version: Option<Version>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Reads `path` (relative data paths resolve against its directory)
    /// or starts from defaults, then applies flag overrides.
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut c = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut c: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                let base = p.parent().unwrap_or(Path::new(""));
                c.data.rebase(base);
                c
            }
            None => RunConfig::default(),
        };
        if let Some(s) = o.seed {
            c.seed = s;
        }
        if let Some(v) = o.version {
            c.version = v;
        }
        if let Some(t) = o.trials {
            c.search.enabled = true;
            c.search.trials = t;
        }
        if let Some(out) = &o.out {
            c.out = out.clone();
        }
        if let Some(d) = &o.data_dir {
            c.data = DataSection {
                dir: Some(d.clone()),
                ..DataSection::default()
            };
        }
        Ok(c)
    }

    /// The version preset with the file's overrides and the run seed.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut fields = match serde_json::to_value(ModelConfig::preset(self.version))? {
            Value::Object(m) => m,
            _ => unreachable!("configs serialize to objects"),
        };
        if let Some(v) = self.model.get("version") {
            bail!("model.version = {v} conflicts with the top-level version field; set it there");
        }
        fields.insert("seed".into(), self.seed.into());
        for (k, v) in &self.model {
            fields.insert(k.clone(), v.clone());
        }
        let c: ModelConfig = serde_json::from_value(Value::Object(fields)).context("invalid model override")?;
        c.validate()?;
        Ok(c)
    }

    /// Input paths; every referenced file must exist.
    pub fn dataset_paths(&self) -> Result<DatasetPaths> {
        let d = &self.data;
        let defaults = d.dir.as_deref().map(DatasetPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, fallback: Option<PathBuf>, name: &str| -> Result<PathBuf> {
            explicit
                .clone()
                .or(fallback)
                .with_context(|| format!("no {name} file configured (set data.dir or data.{name})"))
        };
        let paths = DatasetPaths {
            prices: pick(&d.prices, defaults.as_ref().map(|p| p.prices.clone()), "prices")?,
            news: pick(&d.news, defaults.as_ref().map(|p| p.news.clone()), "news")?,
            sectors: pick(&d.sectors, defaults.as_ref().map(|p| p.sectors.clone()), "sectors")?,
            market: d.market.clone().or_else(|| defaults.as_ref().and_then(|p| p.market.clone()).filter(|p| p.exists())),
            riskfree: d.riskfree.clone().or_else(|| defaults.as_ref().and_then(|p| p.riskfree.clone()).filter(|p| p.exists())),
        };
        for p in [Some(&paths.prices), Some(&paths.news), Some(&paths.sectors), paths.market.as_ref(), paths.riskfree.as_ref()]
            .into_iter()
            .flatten()
        {
            ensure!(p.exists(), "input file {} does not exist", p.display());
        }
        Ok(paths)
    }

    /// Fully resolved view written next to every output.
    pub fn resolved(&self) -> Result<Value> {
        let mut v = serde_json::to_value(self)?;
        v["model"] = serde_json::to_value(self.model_config()?)?;
        Ok(v)
    }
}

impl DataSection {
    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.dir,
            &mut self.prices,
            &mut self.news,
            &mut self.sectors,
            &mut self.market,
            &mut self.riskfree,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_sit_on_the_preset() {
        let c: RunConfig = serde_json::from_str(r#"{"version":"v3","model":{"epochs":5}}"#).unwrap();
        let m = c.model_config().unwrap();
        assert_eq!(m.epochs, 5);
        assert_eq!(m, ModelConfig { epochs: 5, ..ModelConfig::preset(Version::V3) });
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede":1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"model":{"lstm_hiden":5}}"#).unwrap();
        assert!(c.model_config().is_err());
        let c: RunConfig = serde_json::from_str(r#"{"model":{"version":"v2"}}"#).unwrap();
        assert!(c.model_config().is_err());
    }

    #[test]
    fn flags_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"seed":1,"data":{"dir":"data"}}"#).unwrap();
        let c = RunConfig::load(
            Some(&p),
            &Overrides {
                seed: Some(7),
                trials: Some(3),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model_config().unwrap().seed, 7);
        assert!(c.search.enabled && c.search.trials == 3);
        assert_eq!(c.data.dir.as_deref(), Some(dir.path().join("data").as_path()));
        assert!(c.dataset_paths().is_err());
    }
}
