//! Output directories for pipeline stages. A stage writes into
//! `<out>/<name>.partial` and is renamed to `<out>/<name>` only after its
//! manifest is written, so a finished directory is always complete. A
//! stage dropped without finishing removes its `.partial` directory; one
//! left behind marks an interrupted run.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";
pub const TOOL: &str = "metroepi";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub details: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Files under `dir`, recursively, as sorted `/`-separated relative paths.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

/// Finished output of an upstream command, or an error naming it.
pub fn require(out: &Path, stage: &str) -> Result<PathBuf> {
    let dir = out.join(stage);
    if !dir.join(MANIFEST).is_file() {
        bail!(
            "missing {}: run `metroepi {stage}` first",
            dir.display()
        );
    }
    Ok(dir)
}

pub struct Stage {
    name: &'static str,
    out: PathBuf,
    tmp: PathBuf,
    inputs: Vec<FileDigest>,
    finished: bool,
}

impl Drop for Stage {
    fn drop(&mut self) {
        if !self.finished && self.tmp.exists() {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

impl Stage {
    pub fn begin(out: &Path, name: &'static str) -> Result<Self> {
        let tmp = out.join(format!("{name}.partial"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(Stage {
            name,
            out: out.to_path_buf(),
            tmp,
            inputs: Vec::new(),
            finished: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.tmp
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.tmp.join(file)
    }

    /// Records an input's checksum. Paths inside the output tree are
    /// recorded relative to it so manifests do not depend on where it lives.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let shown = match path.strip_prefix(&self.out) {
            Ok(rel) => rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
            Err(_) => path.display().to_string(),
        };
        self.inputs.push(FileDigest {
            path: shown,
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn csv(&self, file: &str) -> Result<csv::Writer<BufWriter<File>>> {
        let path = self.path(file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(csv::Writer::from_writer(BufWriter::new(File::create(&path)?)))
    }

    pub fn json<T: Serialize>(&self, file: &str, value: &T) -> Result<()> {
        write_json(&self.path(file), value)
    }

    pub fn finish(mut self, config: &RunConfig, details: serde_json::Value) -> Result<PathBuf> {
        let outputs = list_files(&self.tmp)?
            .into_iter()
            .map(|rel| {
                Ok(FileDigest {
                    sha256: sha256_file(&self.tmp.join(&rel))?,
                    path: rel,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command: self.name,
            seed: config.seed,
            config,
            inputs: std::mem::take(&mut self.inputs),
            outputs,
            details,
        };
        write_json(&self.tmp.join(MANIFEST), &manifest)?;
        let done = self.out.join(self.name);
        if done.exists() {
            fs::remove_dir_all(&done)?;
        }
        fs::rename(&self.tmp, &done)?;
        self.finished = true;
        log::info!("wrote {}", done.display());
        Ok(done)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// `Display` for present values, empty for missing ones.
pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}
