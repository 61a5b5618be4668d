//! Image files, dictionary files and the dictionary atlas.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma};
use ndarray::{Array2, ArrayView2, Axis};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

/// A decoded image: one channel, or three for RGB input.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedImage {
    Gray(Array2<f64>),
    Rgb([Array2<f64>; 3]),
}

impl LoadedImage {
    pub fn channels(&self) -> Vec<&Array2<f64>> {
        match self {
            LoadedImage::Gray(g) => vec![g],
            LoadedImage::Rgb(c) => c.iter().collect(),
        }
    }

    pub fn into_channels(self) -> Vec<Array2<f64>> {
        match self {
            LoadedImage::Gray(g) => vec![g],
            LoadedImage::Rgb(c) => c.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Reads an 8- or 16-bit grayscale or RGB PGM/PNG/PPM, scaled to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<LoadedImage> {
    let path = path.as_ref();
    let unsupported = |reason: String| Error::UnsupportedImage {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| unsupported(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let gray = |data: Vec<f64>, max: f64| Array2::from_shape_vec((h, w), data.into_iter().map(|v| v / max).collect()).unwrap();
    let split = |data: Vec<f64>, max: f64| -> [Array2<f64>; 3] {
        std::array::from_fn(|c| Array2::from_shape_fn((h, w), |(r, col)| data[3 * (r * w + col) + c] / max))
    };
    match decoded {
        DynamicImage::ImageLuma8(b) => Ok(LoadedImage::Gray(gray(b.into_raw().into_iter().map(f64::from).collect(), 255.0))),
        DynamicImage::ImageLuma16(b) => Ok(LoadedImage::Gray(gray(b.into_raw().into_iter().map(f64::from).collect(), 65535.0))),
        DynamicImage::ImageRgb8(b) => Ok(LoadedImage::Rgb(split(b.into_raw().into_iter().map(f64::from).collect(), 255.0))),
        DynamicImage::ImageRgb16(b) => Ok(LoadedImage::Rgb(split(b.into_raw().into_iter().map(f64::from).collect(), 65535.0))),
        other => Err(unsupported(format!("unsupported pixel layout {:?}", other.color()))),
    }
}

/// [`load_image`] for inputs that must be single-channel.
pub fn load_gray(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    match load_image(path)? {
        LoadedImage::Gray(g) => Ok(g),
        LoadedImage::Rgb(_) => Err(Error::UnsupportedImage {
            path: path.to_path_buf(),
            reason: "expected a grayscale image".into(),
        }),
    }
}

/// Clamps to `[0, 1]`, quantizes and writes a grayscale image; the format
/// follows the file extension (`.pgm` or `.png`).
pub fn save_image(image: ArrayView2<f64>, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = image.dim();
    let pixels = image.iter().map(|v| v.clamp(0.0, 1.0));
    match depth {
        BitDepth::Eight => {
            let raw: Vec<u8> = pixels.map(|v| (v * 255.0).round() as u8).collect();
            let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer size");
            buf.save(path)?;
        }
        BitDepth::Sixteen => {
            let raw: Vec<u16> = pixels.map(|v| (v * 65535.0).round() as u16).collect();
            let buf: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer size");
            buf.save(path)?;
        }
    }
    Ok(())
}

/// Tiles the atoms of `d` (each reshaped column-major to `patch_shape`) into
/// a grid with `columns` tiles per row and 1-pixel black separators. Every
/// atom is affinely rescaled to `[0, 1]`; a constant atom becomes 0.5.
pub fn dictionary_atlas(d: ArrayView2<f64>, patch_shape: (usize, usize), columns: usize) -> Result<Array2<f64>> {
    let (s1, s2) = patch_shape;
    if s1 * s2 != d.nrows() || columns == 0 {
        return Err(Error::InvalidGeometry(format!(
            "cannot tile {}-entry atoms as {s1}x{s2} in {columns} columns",
            d.nrows()
        )));
    }
    let n = d.ncols();
    let rows = n.div_ceil(columns).max(1);
    let mut atlas = Array2::zeros(((s1 + 1) * rows - 1, (s2 + 1) * columns - 1));
    for (j, atom) in d.axis_iter(Axis(1)).enumerate() {
        let lo = atom.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = atom.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (r0, c0) = ((j / columns) * (s1 + 1), (j % columns) * (s2 + 1));
        for c in 0..s2 {
            for r in 0..s1 {
                let v = atom[r + c * s1];
                atlas[[r0 + r, c0 + c]] = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            }
        }
    }
    Ok(atlas)
}

/// Writes [`dictionary_atlas`] with a near-square tiling as an 8-bit image.
pub fn save_dictionary_atlas(d: &Dictionary, patch_shape: (usize, usize), path: impl AsRef<Path>) -> Result<()> {
    let columns = (d.atoms() as f64).sqrt().ceil().max(1.0) as usize;
    let atlas = dictionary_atlas(d.view(), patch_shape, columns)?;
    save_image(atlas.view(), path, BitDepth::Eight)
}

const DICTIONARY_MAGIC: &[u8; 8] = b"DOLPHDIC";

/// Binary dictionary: magic, `s` and `n` as little-endian u64, then the
/// entries row-major as little-endian f64.
pub fn write_dictionary(d: &Dictionary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut bytes = Vec::with_capacity(24 + 8 * d.entries.len());
    bytes.extend_from_slice(DICTIONARY_MAGIC);
    bytes.extend_from_slice(&(d.patch_len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(d.atoms() as u64).to_le_bytes());
    for v in d.entries.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 24 || &bytes[..8] != DICTIONARY_MAGIC {
        return Err(Error::Corrupt(format!("{} is not a dictionary file", path.display())));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap()) as usize;
    let (s, n) = (word(8), word(16));
    let expected = s.checked_mul(n).and_then(|c| c.checked_mul(8)).and_then(|c| c.checked_add(24));
    if expected != Some(bytes.len()) {
        return Err(Error::Corrupt(format!(
            "{}: size does not match a {s}x{n} dictionary",
            path.display()
        )));
    }
    let values = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Dictionary::new(Array2::from_shape_vec((s, n), values).expect("checked size"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::init_dictionary;
    use image::{Rgb, RgbImage};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn white_pgm_loads_as_ones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.pgm");
        let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_pixel(5, 3, Luma([255u8]));
        buf.save(&path).unwrap();
        let img = load_gray(&path).unwrap();
        assert_eq!(img.dim(), (3, 5));
        assert!(img.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn sixteen_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let img = Array2::from_shape_simple_fn((7, 9), || rng.random::<f64>());
        for name in ["a.pgm", "a.png"] {
            let path = dir.path().join(name);
            save_image(img.view(), &path, BitDepth::Sixteen).unwrap();
            let back = load_gray(&path).unwrap();
            let err = img.iter().zip(back.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1.0 / (2.0 * 65535.0) + 1e-15, "{name}: {err}");
        }
    }

    #[test]
    fn rgb_png_splits_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let src = RgbImage::from_fn(4, 3, |x, y| Rgb([(x * 60) as u8, (y * 80) as u8, 200]));
        src.save(&path).unwrap();
        let LoadedImage::Rgb(channels) = load_image(&path).unwrap() else {
            panic!("expected RGB");
        };
        for (x, y, px) in src.enumerate_pixels() {
            for (channel, expected) in channels.iter().zip(px.0) {
                let v = channel[[y as usize, x as usize]];
                assert_eq!((v * 255.0).round() as u8, expected);
            }
        }
        assert!(load_gray(&path).is_err());
    }

    #[test]
    fn unreadable_file_is_structured_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not an image").unwrap();
        assert!(matches!(load_image(&path), Err(Error::UnsupportedImage { .. })));
        assert!(matches!(load_image(dir.path().join("missing.pgm")), Err(Error::Io { .. })));
    }

    #[test]
    fn atlas_dimensions_and_constant_atom() {
        let d = init_dictionary(8, 8);
        let atlas = dictionary_atlas(d.view(), (8, 8), 16).unwrap();
        assert_eq!(atlas.dim(), (9 * 8 - 1, 9 * 16 - 1));
        // atom 64 is the constant DCT atom
        let (atom, columns) = (64, 16);
        let (r0, c0) = ((atom / columns) * 9, (atom % columns) * 9);
        assert!(atlas.slice(ndarray::s![r0..r0 + 8, c0..c0 + 8]).iter().all(|v| *v == 0.5));
        assert!(atlas.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn dictionary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let d = init_dictionary(3, 2);
        write_dictionary(&d, &path).unwrap();
        assert_eq!(read_dictionary(&path).unwrap(), d);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_dictionary(&path), Err(Error::Corrupt(_))));
    }
}
