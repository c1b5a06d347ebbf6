//! ASCII portable graymap (P2) output for visual inspection of wave fields.
//!
//! Field values are mapped from [-1, 1] to gray levels 0..=255 (clamping
//! anything outside), so a zero field renders mid-gray.

use std::path::Path;

use crate::error::{Error, Result};

fn gray(v: f64) -> u8 {
    let x = ((v + 1.0) * 0.5).clamp(0.0, 1.0);
    (x * 255.0).round() as u8
}

/// Renders one H x W frame.
pub fn frame_to_pgm(frame: &[f64], h: usize, w: usize) -> Result<String> {
    if frame.len() != h * w {
        return Err(Error::ShapeMismatch {
            op: "frame_to_pgm",
            lhs: vec![frame.len()],
            rhs: vec![h, w],
        });
    }
    let mut out = format!("P2\n{w} {h}\n255\n");
    for row in frame.chunks(w) {
        let line: Vec<String> = row.iter().map(|v| gray(*v).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Renders frames side by side with a one-pixel black separator between
/// panels, e.g. `target | noisy | prediction...` strips.
pub fn strip_to_pgm(frames: &[&[f64]], h: usize, w: usize) -> Result<String> {
    if frames.is_empty() {
        return Err(Error::InvalidConfig("empty frame strip".into()));
    }
    for f in frames {
        if f.len() != h * w {
            return Err(Error::ShapeMismatch {
                op: "strip_to_pgm",
                lhs: vec![f.len()],
                rhs: vec![h, w],
            });
        }
    }
    let panels = frames.len();
    let total_w = panels * w + panels - 1;
    let mut out = format!("P2\n{total_w} {h}\n255\n");
    for row in 0..h {
        let mut cells: Vec<String> = Vec::with_capacity(total_w);
        for (p, frame) in frames.iter().enumerate() {
            if p > 0 {
                cells.push("0".to_string());
            }
            cells.extend(frame[row * w..(row + 1) * w].iter().map(|v| gray(*v).to_string()));
        }
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_pgm_file<P: AsRef<Path>>(path: P, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

/// Parses width, height and pixel rows back out of a P2 file. Used by tests
/// and by the report tooling to validate panel layout.
pub fn parse_pgm(content: &str) -> Result<(usize, usize, Vec<u8>)> {
    let mut tokens = content
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| l.split_whitespace());
    if tokens.next() != Some("P2") {
        return Err(Error::Format("not an ASCII P2 graymap".into()));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Format("bad PGM header".into()))?;
    }
    let [w, h, maxval] = dims;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let pixels: Vec<u8> = tokens
        .map(|t| t.parse::<u8>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format("bad PGM pixel".into()))?;
    if pixels.len() != w * h {
        return Err(Error::Format(format!(
            "PGM pixel count {} does not match {w}x{h}",
            pixels.len()
        )));
    }
    Ok((w, h, pixels))
}
