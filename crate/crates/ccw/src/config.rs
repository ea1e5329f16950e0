//! Run configuration: a sectioned TOML file driving the full pipeline, with
//! every field overridable from the command line.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedcf::Variant;
use crate::wrapper::Mode;
use crate::{Error, Result, TrainConfig};

/// Number of clusters: fixed, or selected by the variance-ratio plateau rule
/// over a k range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KSpec {
    Fixed(usize),
    Auto(String),
}

impl Default for KSpec {
    fn default() -> Self {
        KSpec::Auto("auto".into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train: PathBuf,
    pub test: PathBuf,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            train: PathBuf::new(),
            test: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub k: KSpec,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    /// Plateau threshold for auto-k.
    pub epsilon: f64,
    /// Number of clustering seeds averaged in the VR curve.
    pub seeds: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            k: KSpec::default(),
            k_min: None,
            k_max: None,
            epsilon: 0.02,
            seeds: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Base model family: `plain-mf` or `propagated-l<N>`.
    pub variant: String,
    pub d: usize,
    /// Fusion mode: `base-only`, `equal-weight`, or `with-lic`.
    pub mode: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: "plain-mf".into(),
            d: 64,
            mode: "with-lic".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Allow writing into a non-empty directory.
    pub overwrite: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("ccw-out"),
            overwrite: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub master_seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub cluster: ClusterSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub output: OutputSection,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn variant(&self) -> Result<Variant> {
        Variant::from_str(&self.model.variant).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn mode(&self) -> Result<Mode> {
        Mode::from_str(&self.model.mode).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fixed k, or `None` for auto selection.
    pub fn fixed_k(&self) -> Result<Option<usize>> {
        match &self.cluster.k {
            KSpec::Fixed(k) => Ok(Some(*k)),
            KSpec::Auto(s) if s == "auto" => Ok(None),
            KSpec::Auto(s) => Err(Error::Config(format!(
                "cluster.k must be an integer or \"auto\", got \"{s}\""
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.train.as_os_str().is_empty() {
            return Err(Error::Config("data.train is required".into()));
        }
        if self.data.test.as_os_str().is_empty() {
            return Err(Error::Config("data.test is required".into()));
        }
        match self.fixed_k()? {
            Some(k) if k < 2 => {
                return Err(Error::Config("cluster.k must be >= 2".into()));
            }
            Some(_) => {}
            None => {
                let (lo, hi) = match (self.cluster.k_min, self.cluster.k_max) {
                    (Some(lo), Some(hi)) => (lo, hi),
                    _ => {
                        return Err(Error::Config(
                            "cluster.k = \"auto\" requires k_min and k_max".into(),
                        ))
                    }
                };
                if lo < 2 || hi < lo {
                    return Err(Error::Config(format!(
                        "bad auto-k range [{lo}, {hi}]; need 2 <= k_min <= k_max"
                    )));
                }
            }
        }
        if !(self.cluster.epsilon > 0.0) {
            return Err(Error::Config("cluster.epsilon must be positive".into()));
        }
        if self.cluster.seeds == 0 {
            return Err(Error::Config("cluster.seeds must be >= 1".into()));
        }
        if self.model.d < 1 {
            return Err(Error::Config("model.d must be >= 1".into()));
        }
        self.variant()?;
        self.mode()?;
        self.train
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.output.dir.as_os_str().is_empty() {
            return Err(Error::Config("output.dir is required".into()));
        }
        Ok(())
    }

    /// Create the output directory, refusing a non-empty one without the
    /// overwrite flag.
    pub fn prepare_output_dir(&self) -> Result<()> {
        let dir = &self.output.dir;
        if dir.exists() {
            let occupied = std::fs::read_dir(dir)?.next().is_some();
            if occupied && !self.output.overwrite {
                return Err(Error::Config(format!(
                    "output directory {} is not empty; pass --overwrite or set output.overwrite",
                    dir.display()
                )));
            }
        } else {
            std::fs::create_dir_all(dir)?;
        }
        Ok(())
    }
}
