use std::hash::Hasher;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_text, write_text, Setup};
use crate::error::{Error, Result};

pub const ARTIFACT_FILE: &str = "artifact.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// Index of one run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub run_id: String,
    pub command: String,
    pub tool_version: String,
    /// Directory the original config's relative paths resolve against.
    pub config_dir: PathBuf,
    pub seed: u64,
    /// Paths relative to the run directory.
    pub frames: Vec<PathBuf>,
    pub traces: Vec<PathBuf>,
    pub reports: Vec<PathBuf>,
}

/// FNV-1a, stable across platforms and releases.
struct Fnv(u64);

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 = (self.0 ^ *b as u64).wrapping_mul(0x100000001b3);
        }
    }
}

impl RunArtifact {
    /// Creates a fresh run directory under `root` and snapshots the config.
    pub fn create(root: &Path, command: &str, setup: &Setup, seed: u64) -> Result<(Self, PathBuf)> {
        let mut h = Fnv(0xcbf29ce484222325);
        h.write(command.as_bytes());
        h.write(setup.source.as_bytes());
        h.write(&seed.to_le_bytes());
        let hash = format!("{:08x}", h.finish() >> 32);
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let mut n = 0;
        let (run_id, dir) = loop {
            let id = format!("{command}-{hash}-{n:03}");
            let dir = root.join(&id);
            match std::fs::create_dir(&dir) {
                Ok(()) => break (id, dir),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(Error::io(&dir, e)),
            }
        };
        write_text(&dir.join(CONFIG_SNAPSHOT), &setup.source)?;
        let config_dir = std::path::absolute(&setup.base_dir).map_err(|e| Error::io(&setup.base_dir, e))?;
        let a = Self {
            run_id,
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_dir,
            seed,
            frames: Vec::new(),
            traces: Vec::new(),
            reports: Vec::new(),
        };
        a.save(&dir)?;
        Ok((a, dir))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(ARTIFACT_FILE), &serde_json::to_string_pretty(self).expect("artifact serializes"))
    }

    /// Reads `artifact.json` and checks every listed file is present.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(ARTIFACT_FILE);
        let text = read_text(&path)?;
        let a: Self = serde_json::from_str(&text)
            .map_err(|e| Error::parse(&path, e.line(), e.to_string()))?;
        for f in a.frames.iter().chain(&a.traces).chain(&a.reports).map(PathBuf::as_path).chain([Path::new(CONFIG_SNAPSHOT)]) {
            if !dir.join(f).is_file() {
                return Err(Error::io(dir.join(f), std::io::ErrorKind::NotFound.into()));
            }
        }
        Ok(a)
    }

    /// The snapshot config, with paths resolved as in the original run.
    pub fn setup(&self, dir: &Path) -> Result<Setup> {
        let path = dir.join(CONFIG_SNAPSHOT);
        Setup::from_text(&read_text(&path)?, &path, &self.config_dir)
    }
}
