use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{Failure, EXIT_DATA};

pub const MANIFEST: &str = "manifest.json";
pub const FAILED: &str = "FAILED";

/// Output directory of one run. The manifest is written on creation, so it
/// always precedes any other output.
pub struct RunDir {
    root: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    parallel_build: bool,
    config: &'a C,
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    }
}

impl RunDir {
    pub fn create(root: &Path, command: &str, config: &impl Serialize) -> Result<Self, Failure> {
        fs::create_dir_all(root).map_err(|e| io_failure(root, e))?;
        let dir = Self {
            root: root.to_path_buf(),
        };
        let stale = dir.root.join(FAILED);
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| io_failure(&stale, e))?;
        }
        let manifest = Manifest {
            tool: "cardio-lstm",
            version: env!("CARGO_PKG_VERSION"),
            command,
            parallel_build: cfg!(feature = "parallel"),
            config,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::usage(e.to_string()))?;
        text.push('\n');
        dir.write(MANIFEST, &text)?;
        Ok(dir)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| io_failure(&path, e))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Leaves a marker naming the failure next to the manifest.
    pub fn mark_failed(&self, f: &Failure) {
        let _ = fs::write(self.root.join(FAILED), format!("exit {}: {}\n", f.code, f.message));
    }

    /// Runs `body`, marking the directory failed if it errors.
    pub fn guard<T>(&self, body: impl FnOnce(&Self) -> Result<T, Failure>) -> Result<T, Failure> {
        body(self).inspect_err(|f| self.mark_failed(f))
    }
}
