//! Output directories: deterministic artifacts, a checksum manifest and a
//! timestamped log kept apart from everything that is checksummed.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "MANIFEST.sha256";
pub const LOG: &str = "run.log";
pub const SCENARIO: &str = "scenario.json";

/// Directories owned by the runner; `--force` clears them.
const OWNED_DIRS: [&str; 3] = ["records", "traces", "audio"];

pub enum Opened {
    /// A finished run whose manifest verified; nothing to do.
    Complete(OutputDir),
    Ready(OutputDir),
}

#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

impl OutputDir {
    /// Opens `root` for the run described by `scenario_json`. An existing
    /// directory for a different scenario is refused unless `force`.
    pub fn open(root: &Path, scenario_json: &str, force: bool) -> Result<Opened, CliError> {
        let dir = OutputDir { root: root.to_path_buf() };
        let saved = root.join(SCENARIO);
        if saved.exists() {
            if force {
                dir.clear()?;
            } else {
                let old = fs::read_to_string(&saved)?;
                if old != scenario_json {
                    return Err(CliError::invalid(format!(
                        "{} holds results of a different scenario; pass --force to replace them",
                        root.display()
                    )));
                }
                if root.join(MANIFEST).exists() {
                    dir.verify()?;
                    dir.log("outputs verified against manifest; nothing to do")?;
                    return Ok(Opened::Complete(dir));
                }
                dir.log("resuming an unfinished run")?;
                return Ok(Opened::Ready(dir));
            }
        }
        fs::create_dir_all(root)?;
        dir.write(SCENARIO, scenario_json.as_bytes())?;
        Ok(Opened::Ready(dir))
    }

    /// A directory used without the scenario bookkeeping, e.g. sweep parents.
    pub fn plain(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        // Write then rename, so an interrupted run never leaves a torn file.
        let tmp = p.with_extension("partial");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &p)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write(rel, to_json(value)?.as_bytes())
    }

    pub fn log(&self, msg: &str) -> Result<(), CliError> {
        log::info!("{msg}");
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(LOG))?;
        writeln!(f, "{} {msg}", chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true))?;
        Ok(())
    }

    fn clear(&self) -> Result<(), CliError> {
        if let Ok(text) = fs::read_to_string(self.path(MANIFEST)) {
            for (_, rel) in parse_manifest(&text)? {
                let p = self.path(&rel);
                if p.is_file() {
                    fs::remove_file(p)?;
                }
            }
        }
        for d in OWNED_DIRS {
            let p = self.path(d);
            if p.is_dir() {
                fs::remove_dir_all(p)?;
            }
        }
        for f in [MANIFEST, SCENARIO] {
            let p = self.path(f);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
        Ok(())
    }

    /// Every checksummed file, relative, `/`-separated and sorted.
    fn artifacts(&self) -> Result<Vec<String>, CliError> {
        let mut out = Vec::new();
        let mut stack = vec![self.root.clone()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir)? {
                let p = entry?.path();
                if p.is_dir() {
                    stack.push(p);
                    continue;
                }
                let rel = p
                    .strip_prefix(&self.root)
                    .expect("walk stays under root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/");
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                if rel != MANIFEST && name != LOG && !rel.ends_with(".partial") {
                    out.push(rel);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn write_manifest(&self) -> Result<(), CliError> {
        let mut text = String::new();
        for rel in self.artifacts()? {
            text.push_str(&format!("{}  {rel}\n", sha256_file(&self.path(&rel))?));
        }
        self.write(MANIFEST, text.as_bytes())
    }

    pub fn verify(&self) -> Result<(), CliError> {
        let text = fs::read_to_string(self.path(MANIFEST))?;
        let mut bad = Vec::new();
        for (hash, rel) in parse_manifest(&text)? {
            match sha256_file(&self.path(&rel)) {
                Ok(h) if h == hash => {}
                Ok(_) => bad.push(format!("{rel}: checksum mismatch")),
                Err(_) => bad.push(format!("{rel}: missing")),
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Runtime(format!(
                "existing outputs in {} fail verification: {}",
                self.root.display(),
                bad.join(", ")
            )))
        }
    }
}

fn parse_manifest(text: &str) -> Result<Vec<(String, String)>, CliError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once("  ")
                .map(|(h, p)| (h.to_string(), p.to_string()))
                .ok_or_else(|| CliError::Runtime(format!("malformed manifest line: {l}")))
        })
        .collect()
}

pub fn sha256_file(p: &Path) -> Result<String, CliError> {
    let bytes = fs::read(p)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}
