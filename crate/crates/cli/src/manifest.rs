//! Record of one invocation, written next to its outputs.

use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<Artifact>,
    pub versions: Versions,
    pub exit_code: u8,
    #[serde(skip)]
    fallback: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub kind: String,
    pub path: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub agvsched: &'static str,
}

impl RunManifest {
    pub fn new(command_line: Vec<String>) -> Self {
        Self {
            command_line,
            config: serde_json::Value::Null,
            seeds: Vec::new(),
            artifacts: Vec::new(),
            versions: Versions { agvsched: env!("CARGO_PKG_VERSION") },
            exit_code: 0,
            fallback: None,
        }
    }

    pub fn artifact(&mut self, kind: &str, path: &Path) {
        self.artifacts.push(Artifact { kind: kind.into(), path: path.into() });
    }

    /// Places the manifest of a command without outputs next to `input`.
    pub fn verify_next_to(&mut self, input: &Path) {
        self.fallback = Some(with_suffix(input, ".verify.manifest.json"));
    }

    /// `<first artifact>.manifest.json`, or the fallback path.
    pub fn default_path(&self) -> Option<PathBuf> {
        self.artifacts.first().map(|a| with_suffix(&a.path, ".manifest.json")).or_else(|| self.fallback.clone())
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n")
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}
