use std::fs;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{AtPath, CliError};

pub const FILE_NAME: &str = "run_manifest.toml";

/// What a command ran with, written next to its outputs.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Option<PathBuf>,
    pub output: PathBuf,
    pub seeds: Table,
    pub settings: Table,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>, output: &Path) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config: config.map(Path::to_path_buf),
            output: output.to_path_buf(),
            seeds: Table::new(),
            settings: Table::new(),
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        // TOML integers are signed; keep the bit pattern readable as text.
        self.seeds.insert(name.into(), Value::String(value.to_string()));
        self
    }

    pub fn settings(mut self, used: Table) -> Self {
        self.settings.extend(used);
        self
    }

    pub fn to_toml(&self) -> String {
        let mut t = Table::new();
        t.insert("command".into(), self.command.clone().into());
        t.insert("argv".into(), Value::Array(self.argv.iter().cloned().map(Value::String).collect()));
        t.insert(
            "config".into(),
            self.config.as_ref().map_or(String::new(), |p| p.display().to_string()).into(),
        );
        t.insert("output".into(), self.output.display().to_string().into());
        let mut versions = Table::new();
        versions.insert("neurohand".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("checkpoint_format".into(), (neurohand_core::model::checkpoint::VERSION as i64).into());
        t.insert("versions".into(), Value::Table(versions));
        t.insert("seeds".into(), Value::Table(self.seeds.clone()));
        t.insert("settings".into(), Value::Table(self.settings.clone()));
        toml::to_string(&t).expect("manifest tables serialize")
    }

    /// Writes into `dir`, or beside `dir` when it names a file.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = if dir.is_dir() {
            dir.join(FILE_NAME)
        } else {
            let stem = dir.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            dir.with_file_name(format!("{stem}.{FILE_NAME}"))
        };
        fs::write(&path, self.to_toml()).at(&path)?;
        Ok(path)
    }
}
