use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::StartupError;

/// Artifact locations. Relative paths are resolved against the directory
/// holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub model: PathBuf,
    pub dataset: PathBuf,
    pub evidence: PathBuf,
    pub corpus: PathBuf,
    pub router: PathBuf,
    pub step_rules: PathBuf,
    pub thresholds: PathBuf,
    pub log_dir: PathBuf,
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StartupError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| StartupError::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| StartupError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(cfg.resolved(base))
    }

    pub fn resolved(mut self, base: &Path) -> Self {
        for p in [
            &mut self.model,
            &mut self.dataset,
            &mut self.evidence,
            &mut self.corpus,
            &mut self.router,
            &mut self.step_rules,
            &mut self.thresholds,
            &mut self.log_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self
    }
}
