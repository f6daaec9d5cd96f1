//! Raw media on disk: 16-bit PCM WAV audio and per-frame image files.
//!
//! A video is a directory of frame files taken in lexicographic order. Each
//! frame is either an `H×W×3` tensor file (`.msma`, values in `[0, 1]`) or a
//! binary PPM (`.ppm`, 8- or 16-bit).

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use crate::datastore::tensorfile::{read_tensor, write_atomic};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::frontend::{AudioClip, RawImage};

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    if !path.is_file() {
        return Err(Error::Load { path: path.to_path_buf() });
    }
    let fmt_err = |e: hound::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut reader = hound::WavReader::open(path).map_err(fmt_err)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Format(format!(
            "{}: expected 16-bit mono PCM, got {} channel(s) at {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(fmt_err)?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Quantizes `samples` (clamped to `[-1, 1]`) to 16-bit mono PCM.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let fmt_err = |e: hound::Error| Error::Format(e.to_string());
        let mut w = hound::WavWriter::new(&mut buf, spec).map_err(fmt_err)?;
        for &s in samples {
            let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            w.write_sample(q).map_err(fmt_err)?;
        }
        w.finalize().map_err(fmt_err)?;
    }
    write_atomic(path, &buf.into_inner())
}

fn parse_ppm(bytes: &[u8], path: &Path) -> Result<RawImage> {
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token().as_deref() != Some("P6") {
        return Err(bad("not a binary PPM (P6)"));
    }
    let mut num = || token().and_then(|t| t.parse::<usize>().ok());
    let (w, h, maxval) = match (num(), num(), num()) {
        (Some(w), Some(h), Some(m)) if (1..=65535).contains(&m) => (w, h, m),
        _ => return Err(bad("malformed PPM header")),
    };
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let width = if maxval < 256 { 1 } else { 2 };
    let need = w * h * 3 * width;
    if data.len() < need {
        return Err(Error::Corruption(format!("{}: raster truncated", path.display())));
    }
    let values = if width == 1 {
        data[..need].iter().map(|&b| b as f64).collect()
    } else {
        data[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
    };
    RawImage::new(h, w, values, maxval as f64)
}

pub fn read_frame(path: &Path) -> Result<RawImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("msma") => {
            let t = read_tensor(path)?;
            match *t.dims() {
                [h, w, 3] => RawImage::new(h, w, t.into_values(), 1.0),
                ref d => Err(Error::Shape(format!("{}: frame must be H×W×3, got {d:?}", path.display()))),
            }
        }
        Some("ppm") => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_ppm(&bytes, path)
        }
        _ => Err(Error::Format(format!("{}: unsupported frame file", path.display()))),
    }
}

/// Frame files in `dir`, sorted by file name.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Load { path: dir.to_path_buf() });
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("msma" | "ppm")))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn read_video(dir: &Path) -> Result<Vec<RawImage>> {
    frame_paths(dir)?.iter().map(|p| read_frame(p)).collect()
}

/// 8-bit binary PPM of an image whose values are in `[0, max_value]`.
pub fn write_ppm(path: &Path, img: &RawImage, max_value: f64) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|v| ((v / max_value).clamp(0.0, 1.0) * 255.0).round() as u8));
    write_atomic(path, &out)
}

/// Stores an `H×W×3` frame as a tensor file.
pub fn write_frame_tensor(path: &Path, img: &RawImage) -> Result<()> {
    let t = Tensor::new(vec![img.height(), img.width(), 3], img.data().to_vec())?;
    crate::datastore::tensorfile::write_tensor(path, &t)
}
