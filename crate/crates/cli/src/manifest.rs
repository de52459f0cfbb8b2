//! Run manifests: everything needed to reproduce an output directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::DatasetRef;
use crate::settings::Settings;
use crate::CliError;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub command: String,
    pub dataset: Option<DatasetRef>,
    /// The resolved configuration, for reading.
    pub config: Value,
    pub seeds: Vec<u64>,
    /// The resolved settings; re-running them reproduces the outputs.
    pub settings: BTreeMap<String, String>,
    /// Output role to file path.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, settings: &Settings, config: Value, seeds: Vec<u64>) -> Self {
        Self {
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            dataset: None,
            config,
            seeds,
            settings: settings.clone().into_map(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.outputs
            .insert(role.to_string(), path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path).map_err(|e| {
            CliError::Usage(format!("cannot open manifest {}: {e}", path.display()))
        })?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CliError::Data(format!("{}: not a run manifest: {e}", path.display())))
    }

    /// Settings to replay. The dataset path is the resolved absolute one.
    pub fn settings(&self) -> Settings {
        let mut s = Settings::from_map(self.settings.clone());
        if let Some(d) = &self.dataset {
            s.set("input", &d.path);
            s.set("input-format", &d.format);
            if let Some(l) = &d.labels {
                s.set("labels", l);
            }
        }
        s
    }
}
