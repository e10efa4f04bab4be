//! File helpers: PNG I/O, atomic writes, header checks, content hashes.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::RgbImage;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_owned(),
        source,
    })?;
    Ok(img.into_rgb8())
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes through a buffer produced by `fill`, atomically.
pub fn atomic_write_with<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    fill(&mut buf)?;
    atomic_write(path, &buf)
}

pub fn expect_header(found: &csv::StringRecord, want: &[&str]) -> Result<()> {
    for (i, col) in want.iter().enumerate() {
        if found.get(i) != Some(*col) {
            return Err(Error::Schema {
                column: col.to_string(),
                message: format!(
                    "expected header {:?}, found {:?}",
                    want.join(","),
                    found.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
    }
    if found.len() != want.len() {
        return Err(Error::Schema {
            column: found.get(want.len()).unwrap_or("").to_string(),
            message: format!("expected {} columns, found {}", want.len(), found.len()),
        });
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
