//! Directories of binary 16-bit PGM (P5) frames with a `scale.txt` sidecar
//! holding meters per raw unit.

use std::path::{Path, PathBuf};

use super::{DepthFrame, DepthSequence};
use crate::error::{Error, Result};

const SCALE_FILE: &str = "scale.txt";

/// Splits off the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Decodes one P5 image to raw sample values.
fn decode_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u16>), String> {
    let mut pos = 0;
    if next_token(bytes, &mut pos) != Some(b"P5".as_slice()) {
        return Err("not a binary PGM (P5)".into());
    }
    let mut field = |name: &str| -> std::result::Result<usize, String> {
        next_token(bytes, &mut pos)
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| format!("malformed {name}"))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if maxval != 65535 {
        return Err(format!("expected maxval 65535, got {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != 2 * width * height {
        return Err(format!("raster is {} bytes, expected {}", raster.len(), 2 * width * height));
    }
    let samples = raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Ok((width, height, samples))
}

fn read_scale(dir: &Path) -> Result<f32> {
    let path = dir.join(SCALE_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let scale: f32 = text
        .trim()
        .parse()
        .map_err(|_| Error::format(path.display().to_string(), None, format!("bad scale `{}`", text.trim())))?;
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::format(path.display().to_string(), None, "scale must be positive"));
    }
    Ok(scale)
}

/// Reads every `*.pgm` in `dir`, in lexicographic filename order.
pub fn read_pgm_dir(dir: impl AsRef<Path>) -> Result<DepthSequence<f32>> {
    let dir = dir.as_ref();
    let scale = read_scale(dir)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    let context = dir.display().to_string();
    if files.is_empty() {
        return Err(Error::format(context, None, "no .pgm frames"));
    }
    let mut frames = Vec::with_capacity(files.len());
    for (i, file) in files.iter().enumerate() {
        let bytes = std::fs::read(file).map_err(|e| Error::io(file, e))?;
        let (w, h, raw) = decode_pgm(&bytes).map_err(|m| Error::format(&context, Some(i), m))?;
        if let Some(first) = frames.first() {
            let first: &DepthFrame<f32> = first;
            if (first.width(), first.height()) != (w, h) {
                return Err(Error::format(
                    &context,
                    Some(i),
                    format!("frame is {w}x{h}, expected {}x{}", first.width(), first.height()),
                ));
            }
        }
        let values = raw.into_iter().map(|v| v as f32 * scale).collect();
        frames.push(DepthFrame::new(w, h, values).map_err(|e| Error::format(&context, Some(i), e.to_string()))?);
    }
    Ok(DepthSequence::from_frames_unchecked(String::new(), frames))
}

/// Writes `seq` as `f000.pgm, f001.pgm, ...` plus `scale.txt`; values are
/// quantized to `round(v / scale)` and saturate at 65535.
pub fn write_pgm_dir(seq: &DepthSequence<f32>, dir: impl AsRef<Path>, scale: f32) -> Result<()> {
    let dir = dir.as_ref();
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::arg("PGM scale must be positive"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scale_path = dir.join(SCALE_FILE);
    std::fs::write(&scale_path, format!("{scale}\n")).map_err(|e| Error::io(&scale_path, e))?;
    for (i, frame) in seq.frames().iter().enumerate() {
        let mut bytes = format!("P5\n{} {}\n65535\n", frame.width(), frame.height()).into_bytes();
        for &v in frame.values() {
            let q = (v / scale).round().clamp(0.0, 65535.0) as u16;
            bytes.extend_from_slice(&q.to_be_bytes());
        }
        let path = dir.join(format!("f{i:03}.pgm"));
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
