//! Artifact locations, envelopes and run manifests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{WorkspaceConfig, FORMAT_VERSION};
use crate::error::CliError;

/// JSON artifact body wrapped with its provenance stamps.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format_version: u32,
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub config: WorkspaceConfig,
    pub hash: String,
}

fn display(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

impl Workspace {
    pub fn new(root: PathBuf, config: WorkspaceConfig) -> Self {
        let hash = config.hash();
        Self { root, config, hash }
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest_path(&self, stage: &str) -> PathBuf {
        self.path(self.config.paths.manifests.join(format!("{stage}.json")))
    }

    /// `rel`, which `stage` produces, or MissingArtifact.
    pub fn require(&self, stage: &'static str, rel: impl AsRef<Path>) -> Result<PathBuf, CliError> {
        let p = self.path(&rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact {
                stage,
                path: display(rel.as_ref()),
            })
        }
    }

    fn create(&self, rel: &Path) -> Result<BufWriter<File>, CliError> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(BufWriter::new(File::create(p)?))
    }

    pub fn write_json<T: Serialize>(&self, rel: &Path, body: &T) -> Result<(), CliError> {
        let env = Envelope {
            format_version: FORMAT_VERSION,
            config_hash: self.hash.clone(),
            body,
        };
        let mut w = self.create(rel)?;
        serde_json::to_writer_pretty(&mut w, &env)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Body of a JSON artifact that `stage` produces. A config hash other
    /// than the current one is logged; `report` is the command that refuses.
    pub fn read_json<T: DeserializeOwned>(&self, stage: &'static str, rel: &Path) -> Result<Envelope<T>, CliError> {
        let p = self.require(stage, rel)?;
        let env: Envelope<T> = serde_json::from_reader(BufReader::new(File::open(&p)?))
            .map_err(|e| CliError::Validation(format!("{}: {e}", display(rel))))?;
        if env.format_version != FORMAT_VERSION {
            return Err(CliError::Validation(format!(
                "{} has format_version {}, this build reads {FORMAT_VERSION}",
                display(rel),
                env.format_version
            )));
        }
        if env.config_hash != self.hash {
            log::warn!("{} was produced under a different config", display(rel));
        }
        Ok(env)
    }

    /// CSV writer whose first line is a `#` comment carrying the stamps.
    pub fn csv_writer(&self, rel: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
        let mut w = self.create(rel)?;
        writeln!(w, "# format_version={FORMAT_VERSION} config_hash={}", self.hash)?;
        Ok(csv::Writer::from_writer(w))
    }

    pub fn csv_reader(&self, stage: &'static str, rel: &Path) -> Result<csv::Reader<BufReader<File>>, CliError> {
        let p = self.require(stage, rel)?;
        let mut r = BufReader::new(File::open(&p)?);
        let mut first = String::new();
        std::io::BufRead::read_line(&mut r, &mut first)?;
        let stamp = csv_stamp(&first).ok_or_else(|| CliError::Validation(format!("{} has no provenance line", display(rel))))?;
        if stamp.0 != FORMAT_VERSION {
            return Err(CliError::Validation(format!("{} has format_version {}", display(rel), stamp.0)));
        }
        if stamp.1 != self.hash {
            log::warn!("{} was produced under a different config", display(rel));
        }
        Ok(csv::Reader::from_reader(r))
    }

    /// Record a finished stage: digests of what it read and wrote.
    pub fn finish(&self, stage: &str, inputs: &[&Path], outputs: &[&Path]) -> Result<(), CliError> {
        let digest = |rels: &[&Path]| -> Result<Vec<FileDigest>, CliError> {
            rels.iter()
                .map(|r| {
                    Ok(FileDigest {
                        path: display(r),
                        sha256: sha256_file(&self.path(r))?,
                    })
                })
                .collect()
        };
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            stage: stage.to_string(),
            config_hash: self.hash.clone(),
            seed: self.config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: digest(inputs)?,
            outputs: digest(outputs)?,
        };
        let p = self.manifest_path(stage);
        std::fs::create_dir_all(p.parent().expect("manifest dir"))?;
        std::fs::write(&p, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    pub fn read_manifest(&self, stage: &str) -> Result<Option<Manifest>, CliError> {
        let p = self.manifest_path(stage);
        if !p.exists() {
            return Ok(None);
        }
        let m = serde_json::from_str(&std::fs::read_to_string(&p)?)
            .map_err(|e| CliError::Validation(format!("manifest {}: {e}", p.display())))?;
        Ok(Some(m))
    }
}

/// `(format_version, config_hash)` from a CSV provenance line.
pub fn csv_stamp(line: &str) -> Option<(u32, String)> {
    let rest = line.trim().strip_prefix('#')?.trim();
    let mut version = None;
    let mut hash = None;
    for part in rest.split_whitespace() {
        match part.split_once('=') {
            Some(("format_version", v)) => version = v.parse().ok(),
            Some(("config_hash", h)) => hash = Some(h.to_string()),
            _ => {}
        }
    }
    Some((version?, hash?))
}
