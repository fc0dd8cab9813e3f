//! Run manifests: every output directory gets a `manifest.json` carrying
//! the exact command, the resolved configuration and the master seed, which
//! together reproduce the outputs bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mktsim::harness::ExperimentConfig;
use serde::Serialize;

#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub command: String,
    pub master_seed: u64,
    pub tool_version: &'static str,
    pub config: &'a ExperimentConfig,
    pub outputs: Vec<String>,
}

impl<'a> RunManifest<'a> {
    pub fn new(argv: &[String], master_seed: u64, config: &'a ExperimentConfig) -> Self {
        RunManifest {
            command: argv.join(" "),
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            config,
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let file = File::create(dir.join("manifest.json"))?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, self)?;
        writeln!(writer)?;
        Ok(())
    }
}
