//! On-disk dataset layout:
//!
//! ```text
//! <root>/clips/<clip_id>/<frame>.png|ppm
//! <root>/masks/<clip_id>.png|pgm
//! <root>/index.txt
//! ```
//!
//! Each non-blank index line lists K frame paths followed by one mask path,
//! separated by whitespace and relative to `<root>`. Lines starting with `#`
//! are comments.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};

use super::augment::{resize_frame, resize_mask};
use super::sample::{SampleMeta, SequenceSample};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::{Shape, Tensor};

pub const INDEX_FILE: &str = "index.txt";
/// Mask pixels at or above this value are lane; 0 is background.
pub const MASK_THRESHOLD: u8 = 128;

fn image_error(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_frame(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_rgb8();
    Ok(frame_from_rgb(&img))
}

pub fn frame_from_rgb(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0)
}

/// Quantises a `1×3×H×W` frame in `[0, 1]` to 8-bit RGB.
pub fn frame_to_rgb(frame: &Tensor<f32>) -> RgbImage {
    let s = frame.shape();
    RgbImage::from_fn(s.w as u32, s.h as u32, |x, y| {
        let px = |c| (frame.at(0, c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([px(0), px(1), px(2)])
    })
}

/// Reads a grey mask: 0 is background, ≥128 is lane, anything else is rejected.
pub fn read_mask(path: &Path) -> Result<std::result::Result<Mask, String>> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_luma8();
    Ok(mask_from_gray(&img))
}

pub fn mask_from_gray(img: &GrayImage) -> std::result::Result<Mask, String> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = Vec::with_capacity(h * w);
    for (i, p) in img.pixels().enumerate() {
        data.push(match p[0] {
            0 => 0,
            v if v >= MASK_THRESHOLD => 1,
            v => return Err(format!("pixel ({}, {}) has ambiguous value {v}", i % w, i / w)),
        });
    }
    Ok(Mask { h, w, data })
}

pub fn mask_to_gray(mask: &Mask) -> GrayImage {
    GrayImage::from_fn(mask.w as u32, mask.h as u32, |x, y| {
        image::Luma([if mask.get(y as usize, x as usize) == 1 { 255 } else { 0 }])
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn write_frame(path: &Path, frame: &Tensor<f32>) -> Result<()> {
    ensure_parent(path)?;
    frame_to_rgb(frame).save(path).map_err(|e| image_error(path, e))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    ensure_parent(path)?;
    mask_to_gray(mask).save(path).map_err(|e| image_error(path, e))
}

/// One parsed index line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub line: usize,
    pub frames: Vec<PathBuf>,
    pub mask: PathBuf,
}

impl IndexEntry {
    /// Clip id from the mask file stem.
    pub fn clip(&self) -> String {
        self.mask
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

pub fn read_index(index_path: &Path, k: usize) -> Result<Vec<IndexEntry>> {
    let text = fs::read_to_string(index_path).map_err(|e| Error::io(index_path, e))?;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut paths: Vec<PathBuf> = line.split_whitespace().map(PathBuf::from).collect();
        if paths.len() != k + 1 {
            return Err(Error::Ingestion {
                file: index_path.to_path_buf(),
                line: i + 1,
                message: format!("expected {k} frame paths and a mask path, found {} paths", paths.len()),
            });
        }
        let mask = paths.pop().expect("k + 1 paths");
        entries.push(IndexEntry {
            line: i + 1,
            frames: paths,
            mask,
        });
    }
    Ok(entries)
}

/// Frame number from a file stem such as `07`; 0 when the stem is not numeric.
fn frame_number(path: &Path) -> usize {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

/// Loads one index entry, resizing frames bilinearly and masks by nearest
/// neighbour to `hw`.
pub fn load_entry(root: &Path, index_path: &Path, entry: &IndexEntry, hw: (usize, usize)) -> Result<SequenceSample> {
    let fail = |message: String| Error::Ingestion {
        file: index_path.to_path_buf(),
        line: entry.line,
        message,
    };
    let mut frames = Vec::with_capacity(entry.frames.len());
    for rel in &entry.frames {
        let path = root.join(rel);
        let f = read_frame(&path).map_err(|e| fail(e.to_string()))?;
        frames.push(resize_frame(&f, hw.0, hw.1));
    }
    let mask_path = root.join(&entry.mask);
    let mask = read_mask(&mask_path)
        .map_err(|e| fail(e.to_string()))?
        .map_err(|m| fail(format!("{}: {m}", mask_path.display())))?;
    let numbers: Vec<usize> = entry.frames.iter().map(|p| frame_number(p)).collect();
    let stride = match numbers.as_slice() {
        [a, b, ..] if b > a => b - a,
        _ => 1,
    };
    let ordered = numbers.windows(2).all(|p| p[0] < p[1]);
    let meta = SampleMeta {
        clip: entry.clip(),
        frames: if ordered { numbers } else { Vec::new() },
        stride,
    };
    SequenceSample::new(frames, resize_mask(&mask, hw.0, hw.1), meta).map_err(|e| fail(e.to_string()))
}

/// Streams the samples listed in `root/index_file` in index order.
pub fn load_dataset<'a>(
    root: &'a Path,
    index_file: &str,
    k: usize,
    hw: (usize, usize),
) -> Result<impl Iterator<Item = Result<SequenceSample>> + 'a> {
    let index_path = root.join(index_file);
    let entries = read_index(&index_path, k)?;
    Ok(entries
        .into_iter()
        .map(move |e| load_entry(root, &index_path, &e, hw)))
}

/// [`load_dataset`] collected, failing on the first bad entry.
pub fn load_all(root: &Path, k: usize, hw: (usize, usize)) -> Result<Vec<SequenceSample>> {
    load_dataset(root, INDEX_FILE, k, hw)?.collect()
}

/// Writes samples in the dataset layout: frames as PNG under
/// `clips/<clip>/<nn>.png`, masks under `masks/<clip>.png`, plus the index.
pub fn write_dataset(root: &Path, samples: &[SequenceSample]) -> Result<()> {
    let mut index = String::new();
    for s in samples {
        let mut line = Vec::with_capacity(s.k() + 1);
        for (i, f) in s.frames.iter().enumerate() {
            let n = s.meta.frames.get(i).copied().unwrap_or(i + 1);
            let rel = format!("clips/{}/{n:02}.png", s.meta.clip);
            write_frame(&root.join(&rel), f)?;
            line.push(rel);
        }
        let rel = format!("masks/{}.png", s.meta.clip);
        write_mask(&root.join(&rel), &s.mask)?;
        line.push(rel);
        index.push_str(&line.join(" "));
        index.push('\n');
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let path = root.join(INDEX_FILE);
    fs::write(&path, index).map_err(|e| Error::io(&path, e))
}
