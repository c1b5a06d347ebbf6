//! Run manifests and output-directory ownership.
//!
//! Every command writes exactly one `manifest.txt` into its output
//! directory: the invoked command, the fully resolved configuration, seeds,
//! input/output paths and SHA-256 digests of every input and output file.
//! A `.wavelab.lock` file marks a directory as owned by a running command.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const LOCK_NAME: &str = ".wavelab.lock";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest<P: AsRef<Path>>(path: P) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Builder for the plain-text `key=value` manifest.
#[derive(Debug, Default, Clone)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, version: &str) -> Self {
        let mut m = RunManifest::default();
        m.set("command", command);
        m.set("tool_version", version);
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Records an input file with its content digest.
    pub fn add_input<P: AsRef<Path>>(&mut self, path: P) -> Result<()> {
        let digest = file_digest(&path)?;
        self.inputs
            .insert(path.as_ref().display().to_string(), digest);
        Ok(())
    }

    /// Records an output file (relative to the run directory) with its digest.
    pub fn add_output<P: AsRef<Path>>(&mut self, dir: &Path, name: P) -> Result<()> {
        let digest = file_digest(dir.join(&name))?;
        self.outputs
            .insert(name.as_ref().display().to_string(), digest);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k}={v}\n"));
        }
        for (path, digest) in &self.inputs {
            out.push_str(&format!("input.sha256.{path}={digest}\n"));
        }
        for (path, digest) in &self.outputs {
            out.push_str(&format!("output.sha256.{path}={digest}\n"));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST_NAME), self.render())?;
        Ok(())
    }
}

/// Verifies that every output digest recorded in a directory's manifest
/// matches the file present.
pub fn verify_outputs(dir: &Path) -> Result<()> {
    let manifest = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    for line in manifest.lines() {
        if let Some(rest) = line.strip_prefix("output.sha256.") {
            let (name, digest) = rest
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad manifest line `{line}`")))?;
            let actual = file_digest(dir.join(name))?;
            if actual != digest {
                return Err(Error::Format(format!(
                    "digest mismatch for `{name}`: manifest {digest}, file {actual}"
                )));
            }
        }
    }
    Ok(())
}

/// Exclusive ownership of a run directory for the duration of a command.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_NAME);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::InvalidConfig(
                format!(
                    "run directory {} is locked by another command (remove {} if stale)",
                    dir.display(),
                    path.display()
                ),
            )),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Refuses to reuse a populated run directory unless forced.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.join(MANIFEST_NAME).exists() {
        if !force {
            return Err(Error::InvalidConfig(format!(
                "output directory {} already contains a run (use --force to overwrite)",
                dir.display()
            )));
        }
        // A forced rerun owns the directory: drop the previous run's files.
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                fs::remove_file(entry.path())?;
            }
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_digests_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.bin"), b"hello").unwrap();
        let mut m = RunManifest::new("gen", "0.1.0");
        m.set("seed", 42);
        m.add_output(dir.path(), "a.bin").unwrap();
        m.write(dir.path()).unwrap();
        verify_outputs(dir.path()).unwrap();
        fs::write(dir.path().join("a.bin"), b"tampered").unwrap();
        assert!(verify_outputs(dir.path()).is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(DirLock::acquire(dir.path()).is_err());
        drop(lock);
        DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn populated_dir_requires_force() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_NAME), "command=gen\n").unwrap();
        fs::write(dir.path().join("old.bin"), b"x").unwrap();
        assert!(prepare_out_dir(dir.path(), false).is_err());
        prepare_out_dir(dir.path(), true).unwrap();
        assert!(!dir.path().join("old.bin").exists());
    }
}
