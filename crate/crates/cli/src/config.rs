use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use catqaoa::knr_gates::GateKind;
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Resonator settings shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub alpha: f64,
    /// Kerr nonlinearity; the unit of every rate and inverse time.
    pub kerr: f64,
    pub kappa: f64,
    pub dim: usize,
}

/// Fully resolved configuration. Output location and thread count are kept
/// out of it, so they never change the hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: String,
    pub physics: Physics,
    pub seed: u64,
    pub command: CommandConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CommandConfig {
    Calibrate {
        fidelity_angles: usize,
        rx_points: usize,
    },
    BuildNoiseLibrary {
        calibration_hash: String,
        cat_bins: Vec<(GateKind, usize)>,
        standard_bins: Vec<(GateKind, usize)>,
    },
    Qaoa {
        instances: usize,
        vertices: usize,
        edge_prob: f64,
        p_max: usize,
        grid: usize,
        backends: Vec<String>,
        library_hashes: Vec<String>,
    },
    QaoaToy {
        grid: usize,
        master_equation: bool,
        loss_free: bool,
        calibration_hash: Option<String>,
        library_hash: Option<String>,
    },
    AppendixC {
        grid: usize,
        p_max: usize,
        delta: f64,
        drive: f64,
        single_photon: f64,
    },
}

impl RunConfig {
    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config_hash: String,
    config: &'a RunConfig,
    out: &'a Path,
    threads: usize,
    files: &'a [String],
}

/// Output directory of one command, tagging everything it writes with the
/// config hash.
pub struct Output {
    pub dir: PathBuf,
    pub hash: String,
    config: RunConfig,
    files: Vec<String>,
}

impl Output {
    pub fn create(dir: PathBuf, config: RunConfig) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let hash = config.hash();
        log::info!("config hash {hash}");
        Ok(Self { dir, hash, config, files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Serializes `value` as a JSON object with a `config_hash` field added;
    /// non-object values go under `data`.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut obj = serde_json::Map::new();
        obj.insert("config_hash".into(), self.hash.clone().into());
        match serde_json::to_value(value)? {
            serde_json::Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        self.write_bytes(name, serde_json::to_string_pretty(&obj)?.as_bytes())
    }

    /// CSV whose first line is a `# config_hash:` comment.
    pub fn write_csv<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
    {
        let mut buf = format!("# config_hash: {}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            fill(&mut w)?;
            w.flush()?;
        }
        self.write_bytes(name, &buf)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        f.write_all(bytes)?;
        if !self.files.iter().any(|x| x == name) {
            self.files.push(name.to_string());
        }
        log::info!("wrote {}", path.display());
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.files.sort();
        let m = Manifest {
            config_hash: self.hash.clone(),
            config: &self.config,
            out: &self.dir,
            threads: rayon::current_num_threads(),
            files: &self.files,
        };
        let path = self.dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&m)?)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> RunConfig {
        RunConfig {
            version: VERSION.into(),
            physics: Physics { alpha: 2.0, kerr: 1.0, kappa: 1.0 / 1500.0, dim: 20 },
            seed: 7,
            command: CommandConfig::Calibrate { fidelity_angles: 20, rx_points: 60 },
        }
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = config();
        assert_eq!(a.hash(), config().hash());
        assert_eq!(a.hash().len(), 64);
        let mut b = config();
        b.physics.dim = 21;
        assert_ne!(a.hash(), b.hash());
        let mut c = config();
        c.seed = 8;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn outputs_carry_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Output::create(dir.path().to_path_buf(), config()).unwrap();
        out.write_json("a.json", &vec![1, 2]).unwrap();
        out.write_csv("b.csv", |w| {
            w.write_record(["x", "y"])?;
            Ok(())
        })
        .unwrap();
        let hash = out.hash.clone();
        out.finish().unwrap();
        let a: serde_json::Value = read_json(&dir.path().join("a.json")).unwrap();
        assert_eq!(a["config_hash"], hash.as_str());
        assert_eq!(a["data"], serde_json::json!([1, 2]));
        let b = fs::read_to_string(dir.path().join("b.csv")).unwrap();
        assert_eq!(b, format!("# config_hash: {hash}\nx,y\n"));
        let m: serde_json::Value = read_json(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(m["files"], serde_json::json!(["a.json", "b.csv"]));
        assert_eq!(m["config"]["command"]["name"], "calibrate");
    }
}
