//! Mask files.
//!
//! * PNG: head label in the red channel (k ≤ 256), plus a sidecar text file
//!   `<name>.png.txt` holding `k = …` and `provenance = …` lines.
//! * Raw: 16-byte header `"MASK"`, then `H`, `W`, `k` as little-endian `u32`,
//!   followed by `H·W` little-endian `u16` labels in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageReader, Rgb};

use crate::error::{Error, Result};
use crate::partition::{PartitionMask, Provenance};

pub const MASK_MAGIC: &[u8; 4] = b"MASK";

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

pub fn save_mask_png(path: impl AsRef<Path>, mask: &PartitionMask) -> Result<()> {
    let path = path.as_ref();
    if mask.k() > 256 {
        return Err(Error::Config(format!("PNG masks hold at most 256 heads, got {}", mask.k())));
    }
    let raw: Vec<u8> = mask.labels().iter().flat_map(|&l| [l as u8, 0, 0]).collect();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("buffer size");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::UnsupportedImage(e.to_string()))?;
    let provenance = toml::to_string(&ProvenanceDoc {
        provenance: mask.provenance().clone(),
    })
    .map_err(|e| Error::Format(e.to_string()))?;
    fs::write(
        sidecar_path(path),
        format!("k = {}\n# {}\n{}", mask.k(), mask.provenance(), provenance),
    )?;
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ProvenanceDoc {
    provenance: Provenance,
}

#[derive(serde::Deserialize)]
struct Sidecar {
    k: usize,
    provenance: Provenance,
}

pub fn load_mask_png(path: impl AsRef<Path>) -> Result<PartitionMask> {
    let path = path.as_ref();
    let img = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::UnsupportedImage(e.to_string()))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    let labels = img.pixels().map(|p| p.0[0] as u32).collect();
    let text = fs::read_to_string(sidecar_path(path))?;
    let side: Sidecar = toml::from_str(&text).map_err(|e| Error::Format(format!("mask sidecar: {e}")))?;
    PartitionMask::new(h as usize, w as usize, side.k, labels, side.provenance)
}

pub fn write_mask_raw<W: Write>(mut out: W, mask: &PartitionMask) -> Result<()> {
    if mask.k() > u16::MAX as usize + 1 {
        return Err(Error::Config("too many heads for 16-bit labels".into()));
    }
    out.write_all(MASK_MAGIC)?;
    for v in [mask.height(), mask.width(), mask.k()] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    for &l in mask.labels() {
        out.write_all(&(l as u16).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_mask_raw<R: Read>(mut input: R) -> Result<PartitionMask> {
    let mut header = [0u8; 16];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated mask header: {e}")))?;
    if &header[..4] != MASK_MAGIC {
        return Err(Error::Format("not a mask file (bad magic)".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (h, w, k) = (word(4), word(8), word(12));
    let mut body = vec![0u8; 2 * h * w];
    input
        .read_exact(&mut body)
        .map_err(|e| Error::Format(format!("truncated mask body: {e}")))?;
    let labels = body
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]) as u32)
        .collect();
    PartitionMask::new(h, w, k, labels, Provenance::Imported)
}

pub fn save_mask_raw(path: impl AsRef<Path>, mask: &PartitionMask) -> Result<()> {
    write_mask_raw(std::io::BufWriter::new(fs::File::create(path)?), mask)
}

pub fn load_mask_raw(path: impl AsRef<Path>) -> Result<PartitionMask> {
    read_mask_raw(std::io::BufReader::new(fs::File::open(path)?))
}
