//! File formats: PFM float maps and JSON helpers.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Decoded PFM contents, rows stored top to bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

/// Writes a little-endian PFM (`Pf` for one channel, `PF` for three). `data`
/// is row-major, top row first; PFM stores rows bottom-up.
pub fn write_pfm(path: impl AsRef<Path>, width: usize, height: usize, channels: usize, data: &[f32]) -> Result<()> {
    let bytes = encode_pfm(width, height, channels, data)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_pfm(width: usize, height: usize, channels: usize, data: &[f32]) -> Result<Vec<u8>> {
    let tag = match channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::InvalidArgument(format!("PFM supports 1 or 3 channels, got {c}"))),
    };
    if data.len() != width * height * channels {
        return Err(Error::InvalidArgument("PFM data size mismatch".into()));
    }
    let mut out = Vec::with_capacity(data.len() * 4 + 32);
    write!(out, "{tag}\n{width} {height}\n-1.0\n")?;
    let row = width * channels;
    for y in (0..height).rev() {
        for v in &data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmImage> {
    let f = fs::File::open(path)?;
    decode_pfm(BufReader::new(f))
}

pub fn decode_pfm(mut r: impl BufRead) -> Result<PfmImage> {
    let mut header = Vec::new();
    // three whitespace-separated header fields after the tag
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        header.clear();
        if r.read_until(b'\n', &mut header)? == 0 {
            return Err(Error::Format("truncated PFM header".into()));
        }
        let line = String::from_utf8_lossy(&header);
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        t => return Err(Error::Format(format!("not a PFM file (tag '{t}')"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PFM dimension '{s}'")));
    let width = parse(&tokens[1])?;
    let height = parse(&tokens[2])?;
    let scale: f32 = tokens[3].parse().map_err(|_| Error::Format("bad PFM scale".into()))?;
    let little = scale < 0.0;
    let n = width * height * channels;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw).map_err(|_| Error::Format("truncated PFM data".into()))?;
    let vals: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let row = width * channels;
    let mut data = Vec::with_capacity(n);
    for y in (0..height).rev() {
        data.extend_from_slice(&vals[y * row..(y + 1) * row]);
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let s = fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&s)?)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}
