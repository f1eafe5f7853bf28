//! 8-bit grayscale file I/O. Binary PGM (P5, maxval 255) is bit-exact; PNG is
//! a convenience path through the `image` crate.

use super::GrayImage;
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    /// Infers the format from the file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("pgm") => Ok(ImageFormat::Pgm),
            Some("png") => Ok(ImageFormat::Png),
            other => Err(Error::UnsupportedFormat(format!(
                "{}: extension {:?}",
                path.display(),
                other
            ))),
        }
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    match ImageFormat::from_path(path)? {
        ImageFormat::Pgm => read_pgm(path),
        ImageFormat::Png => read_png(path),
    }
}

pub fn write_image(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    match ImageFormat::from_path(path)? {
        ImageFormat::Pgm => write_pgm(path, img),
        ImageFormat::Png => write_png(path, img),
    }
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        PgmError::Malformed(reason) => Error::Malformed {
            path: path.to_path_buf(),
            reason,
        },
        PgmError::Depth(maxval) => Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            maxval,
        },
    })
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
enum PgmError {
    Malformed(String),
    Depth(u32),
}

/// Canonical encoding: `P5\n<w> <h>\n255\n` followed by the raw samples.
fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    out
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, PgmError> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or_else(|| malformed("missing magic"))?;
    if magic != b"P5" {
        return Err(malformed(&format!(
            "expected P5, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut fields = [0u32; 3];
    for (field, name) in fields.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| malformed(&format!("missing {name}")))?;
        *field = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(&format!("bad {name}")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(malformed("zero dimension"));
    }
    if maxval != 255 {
        return Err(PgmError::Depth(maxval));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed("missing header terminator"));
    }
    pos += 1;
    let n = width as usize * height as usize;
    let payload = &bytes[pos..];
    if payload.len() < n {
        return Err(malformed(&format!(
            "truncated payload: {} of {} bytes",
            payload.len(),
            n
        )));
    }
    GrayImage::from_u8(width as usize, height as usize, &payload[..n])
        .map_err(|e| malformed(&e.to_string()))
}

fn malformed(reason: &str) -> PgmError {
    PgmError::Malformed(reason.to_string())
}

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
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

fn read_png(path: &Path) -> Result<GrayImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let dynimg = image::open(path)?;
    match dynimg {
        image::DynamicImage::ImageLuma8(buf) => {
            GrayImage::from_u8(buf.width() as usize, buf.height() as usize, buf.as_raw())
        }
        image::DynamicImage::ImageLuma16(_) | image::DynamicImage::ImageLumaA16(_) => {
            Err(Error::UnsupportedBitDepth {
                path: path.to_path_buf(),
                maxval: 65535,
            })
        }
        other => {
            let buf = other.to_luma8();
            GrayImage::from_u8(buf.width() as usize, buf.height() as usize, buf.as_raw())
        }
    }
}

fn write_png(path: &Path, img: &GrayImage) -> Result<()> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_u8())
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
