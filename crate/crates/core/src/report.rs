//! Report aggregation: merging run CSVs and assembling frame strips.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pgm;
use crate::wavd;

/// Concatenates same-schema CSV tables from several run directories into one
/// table with a leading `run_id` column. The run id is the directory name.
pub fn merge_csv_tables(run_dirs: &[PathBuf], file_name: &str) -> Result<String> {
    let mut merged = String::new();
    let mut header: Option<String> = None;
    for dir in run_dirs {
        let run_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| dir.display().to_string());
        let path = dir.join(file_name);
        let content = fs::read_to_string(&path)
            .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
        let mut lines = content.lines();
        let this_header = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?
            .to_string();
        match &header {
            None => {
                header = Some(this_header.clone());
                merged.push_str(&format!("run_id,{this_header}\n"));
            }
            Some(h) if *h == this_header => {}
            Some(h) => {
                return Err(Error::Format(format!(
                    "column mismatch in {}: `{this_header}` vs `{h}`",
                    path.display()
                )));
            }
        }
        for line in lines {
            if !line.is_empty() {
                merged.push_str(&format!("{run_id},{line}\n"));
            }
        }
    }
    if header.is_none() {
        return Err(Error::InvalidConfig("no run directories given".into()));
    }
    Ok(merged)
}

/// Side-by-side panel strip of one shared time step across several WAVD
/// files (e.g. target | noisy | one panel per model rollout). Each entry
/// carries a start offset so windows that begin mid-sequence (rollouts
/// start after induction) stay aligned with full-length panels.
pub fn frame_strip(panels: &[(PathBuf, usize)], step: usize) -> Result<String> {
    if panels.is_empty() {
        return Err(Error::InvalidConfig("frame strip needs at least one WAVD file".into()));
    }
    let mut frames: Vec<Vec<f64>> = Vec::with_capacity(panels.len());
    let mut dims: Option<(usize, usize)> = None;
    for (path, start) in panels {
        let seq = wavd::read_sequence_file(path)?;
        let local = step.checked_sub(*start).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "step {step} precedes the first frame ({start}) of {}",
                path.display()
            ))
        })?;
        if local >= seq.t {
            return Err(Error::InvalidConfig(format!(
                "step {step} out of range for {} (frames {}..{})",
                path.display(),
                start,
                start + seq.t
            )));
        }
        match dims {
            None => dims = Some((seq.h, seq.w)),
            Some(d) if d == (seq.h, seq.w) => {}
            Some(d) => {
                return Err(Error::ShapeMismatch {
                    op: "frame_strip",
                    lhs: vec![d.0, d.1],
                    rhs: vec![seq.h, seq.w],
                });
            }
        }
        frames.push(seq.frame(local).to_vec());
    }
    let (h, w) = dims.unwrap();
    let views: Vec<&[f64]> = frames.iter().map(|f| f.as_slice()).collect();
    pgm::strip_to_pgm(&views, h, w)
}

/// Reads one `key=value` entry out of a run directory's manifest.
pub fn manifest_value(dir: &Path, key: &str) -> Result<Option<String>> {
    let path = dir.join(crate::manifest::MANIFEST_NAME);
    if !path.exists() {
        return Ok(None);
    }
    let content = fs::read_to_string(path)?;
    for line in content.lines() {
        if let Some(v) = line.strip_prefix(&format!("{key}=")) {
            return Ok(Some(v.to_string()));
        }
    }
    Ok(None)
}

/// All WAVD files directly inside a directory, sorted by name.
pub fn wavd_files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "wavd").unwrap_or(false))
        .collect();
    files.sort();
    Ok(files)
}
