//! Evaluation run manifests.
//!
//! ```json
//! {
//!   "videos": ["videos/v00.json", "videos/v01.json"],
//!   "trace": "trace.csv",
//!   "starts": "0:700:7",
//!   "session": { "startup_delay_s": 5, "rebuffer_target_s": 10, "epsilon": 0.05 },
//!   "algorithms": [
//!     { "kind": "model", "path": "model.json", "label": "mlp" },
//!     { "kind": "rate", "config": { "safety_factor": 0.9 } },
//!     { "kind": "aggressive" }
//!   ],
//!   "output_dir": "eval"
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use hasopt_core::baselines::RateBasedConfig;
use hasopt_core::{MlpModel, SessionConfig, ThroughputTrace, Video};
use serde::{Deserialize, Serialize};

use crate::evaluate::{Algorithm, AlgorithmKind, Setup};
use crate::provenance::{input_name, Provenance};
use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub videos: Vec<PathBuf>,
    pub trace: PathBuf,
    pub starts: Starts,
    #[serde(default)]
    pub session: SessionSettings,
    pub algorithms: Vec<AlgorithmEntry>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Session parameters shared by every run; the trace start varies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSettings {
    pub startup_delay_s: f64,
    pub rebuffer_target_s: f64,
    pub epsilon: f64,
}

impl Default for SessionSettings {
    fn default() -> Self {
        let d = SessionConfig::default();
        SessionSettings {
            startup_delay_s: d.startup_delay_s,
            rebuffer_target_s: d.rebuffer_target_s,
            epsilon: d.epsilon,
        }
    }
}

impl SessionSettings {
    pub fn config(&self) -> SessionConfig {
        SessionConfig {
            startup_delay_s: self.startup_delay_s,
            rebuffer_target_s: self.rebuffer_target_s,
            trace_start_s: 0,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmEntry {
    Model {
        path: PathBuf,
        #[serde(default)]
        label: Option<String>,
    },
    Rate {
        #[serde(default)]
        config: RateBasedConfig,
        #[serde(default)]
        label: Option<String>,
    },
    Aggressive {
        #[serde(default)]
        label: Option<String>,
    },
}

impl AlgorithmEntry {
    pub fn label(&self) -> String {
        match self {
            AlgorithmEntry::Model { label, .. } => label.clone().unwrap_or_else(|| "model".into()),
            AlgorithmEntry::Rate { label, .. } => label.clone().unwrap_or_else(|| "rate".into()),
            AlgorithmEntry::Aggressive { label } => label.clone().unwrap_or_else(|| "aggressive".into()),
        }
    }
}

/// Trace start offsets: a `begin:end:step` / comma-list spec, or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Starts {
    Spec(String),
    List(Vec<u32>),
}

impl Starts {
    pub fn expand(&self) -> Result<Vec<u32>> {
        match self {
            Starts::Spec(s) => Ok(s.parse::<StartSpec>()?.0),
            Starts::List(v) => Ok(v.clone()),
        }
    }
}

/// Parsed start offsets. `begin:end:step` is inclusive of `end` when it lies
/// on the grid, so `0:700:7` gives 101 offsets; `a,b,c` and a single value
/// are accepted too.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StartSpec(pub Vec<u32>);

impl FromStr for StartSpec {
    type Err = UsageError;

    fn from_str(s: &str) -> std::result::Result<Self, UsageError> {
        let bad = || UsageError(format!("invalid start spec {s:?}; expected begin:end:step or a comma list"));
        let num = |x: &str| x.trim().parse::<u32>().map_err(|_| bad());
        let parts: Vec<&str> = s.split(':').collect();
        let starts = match parts[..] {
            [begin, end, step] => {
                let (begin, end, step) = (num(begin)?, num(end)?, num(step)?);
                if step == 0 || end < begin {
                    return Err(bad());
                }
                (begin..=end).step_by(step as usize).collect()
            }
            [list] => list.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?,
            _ => return Err(bad()),
        };
        if starts.is_empty() {
            return Err(bad());
        }
        Ok(StartSpec(starts))
    }
}

impl RunManifest {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes)
            .map_err(|e| UsageError(format!("invalid manifest: {e}")).into())
    }

    /// Loads every referenced file, recording hashes in `prov`.
    pub fn load(&self, base: &Path, prov: &mut Provenance) -> Result<Setup> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        if self.videos.is_empty() {
            bail!(UsageError("manifest lists no videos".into()));
        }
        let mut videos = Vec::with_capacity(self.videos.len());
        for path in &self.videos {
            let name = input_name(path);
            let bytes = prov.read_input(format!("video:{name}"), &resolve(path))?;
            let video = Video::from_json_reader(&bytes[..]).with_context(|| format!("parsing video {}", path.display()))?;
            videos.push((name, video));
        }
        let trace_bytes = prov.read_input(format!("trace:{}", input_name(&self.trace)), &resolve(&self.trace))?;
        let trace = ThroughputTrace::read_csv(&trace_bytes[..]).context("parsing trace")?;

        let mut algorithms = Vec::with_capacity(self.algorithms.len());
        for entry in &self.algorithms {
            let label = entry.label();
            let kind = match entry {
                AlgorithmEntry::Model { path, .. } => {
                    let bytes = prov.read_input(format!("model:{label}"), &resolve(path))?;
                    let model = MlpModel::from_json_reader(&bytes[..])
                        .with_context(|| format!("parsing model {}", path.display()))?;
                    AlgorithmKind::Model(Box::new(model))
                }
                AlgorithmEntry::Rate { config, .. } => AlgorithmKind::Rate(*config),
                AlgorithmEntry::Aggressive { .. } => AlgorithmKind::Aggressive,
            };
            algorithms.push(Algorithm { label, kind });
        }
        let starts = self.starts.expand()?;
        prov.flag("starts", &starts);
        prov.flag("session", self.session);
        prov.flag(
            "algorithms",
            self.algorithms.iter().map(strip_path).collect::<Vec<_>>(),
        );
        Ok(Setup {
            videos,
            trace,
            starts,
            session: self.session.config(),
            algorithms,
        })
    }
}

/// Algorithm entry as recorded in provenance: model paths are covered by
/// their input hash instead.
fn strip_path(entry: &AlgorithmEntry) -> serde_json::Value {
    let mut v = serde_json::to_value(entry).expect("entries serialize");
    if let Some(map) = v.as_object_mut() {
        map.remove("path");
        map.insert("label".into(), entry.label().into());
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_specs() {
        let standard: StartSpec = "0:700:7".parse().unwrap();
        assert_eq!(standard.0.len(), 101);
        assert_eq!(standard.0[100], 700);
        assert_eq!("5".parse::<StartSpec>().unwrap().0, vec![5]);
        assert_eq!("1,4, 9".parse::<StartSpec>().unwrap().0, vec![1, 4, 9]);
        assert_eq!("0:10:4".parse::<StartSpec>().unwrap().0, vec![0, 4, 8]);
        for bad in ["", "0:10", "0:10:0", "10:0:1", "a", "1:2:3:4", "-1"] {
            assert!(bad.parse::<StartSpec>().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn manifest_parses_with_defaults() {
        let m = RunManifest::from_bytes(
            br#"{"videos":["a.json"],"trace":"t.csv","starts":[0,7],
                "algorithms":[{"kind":"rate","config":{"safety_factor":0.8}},{"kind":"aggressive","label":"kl"}]}"#,
        )
        .unwrap();
        assert_eq!(m.session, SessionSettings::default());
        assert_eq!(m.algorithms[0].label(), "rate");
        assert_eq!(m.algorithms[1].label(), "kl");
        match &m.algorithms[0] {
            AlgorithmEntry::Rate { config, .. } => {
                assert_eq!(config.safety_factor, 0.8);
                assert_eq!(config.smoothing_window, 5);
            }
            other => panic!("{other:?}"),
        }
        assert!(RunManifest::from_bytes(br#"{"videos":[],"trace":"t","starts":[0],"algorithms":[{"kind":"mystery"}]}"#).is_err());
    }
}
