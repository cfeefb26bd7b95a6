//! Dense feature maps, binary masks and sequence manifests.
//!
//! Tensors are stored as NPY v1.0 files holding little-endian `float32`
//! data in C order: `(H, W)` for objectness, `(H, W, E)` for embeddings and
//! `(H, W, 2)` for optical flow (channel 0 horizontal, channel 1 vertical
//! displacement in pixels per frame). Masks are 8-bit grayscale PNGs with
//! foreground 255 and background 0.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NPY_MAGIC: &[u8] = b"\x93NUMPY";
const NPY_ALIGN: usize = 64;
const OBJECTNESS_SLACK: f32 = 1e-6;

/// A row-major `height × width × channels` map of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    // Whether the channel axis is written to disk. Single-channel maps read
    // from `(H, W)` files keep that rank so they round-trip exactly.
    channel_axis: bool,
}

impl DenseMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        Self::with_rank(height, width, channels, data, true)
    }

    /// A single-channel map stored with shape `(H, W)`.
    pub fn plane(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::with_rank(height, width, 1, data, false)
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        DenseMap {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
            channel_axis: true,
        }
    }

    pub fn plane_zeros(height: usize, width: usize) -> Self {
        DenseMap {
            channel_axis: false,
            ..Self::zeros(height, width, 1)
        }
    }

    fn with_rank(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        channel_axis: bool,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Shape("channel count must be positive".into()));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} map needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(DenseMap {
            height,
            width,
            channels,
            data,
            channel_axis,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> Vec<usize> {
        if self.channel_axis {
            vec![self.height, self.width, self.channels]
        } else {
            vec![self.height, self.width]
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Channel vector of the pixel with row-major index `idx`.
    #[inline]
    pub fn pixel(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, idx: usize) -> &mut [f32] {
        &mut self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    /// First channel of pixel `idx`; the natural accessor for scalar maps.
    #[inline]
    pub fn value(&self, idx: usize) -> f32 {
        self.data[idx * self.channels]
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn same_size(&self, other: &DenseMap) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Encodes a map as NPY v1.0 bytes, matching what `numpy.save` writes.
pub fn encode_npy(map: &DenseMap) -> Vec<u8> {
    let shape = map.shape();
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    let shape_str = if dims.len() == 1 {
        format!("({},)", dims[0])
    } else {
        format!("({})", dims.join(", "))
    };
    let mut header =
        format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {shape_str}, }}");
    let unpadded = NPY_MAGIC.len() + 2 + 2 + header.len() + 1;
    let pad = (NPY_ALIGN - unpadded % NPY_ALIGN) % NPY_ALIGN;
    header.push_str(&" ".repeat(pad));
    header.push('\n');

    let mut out = Vec::with_capacity(NPY_MAGIC.len() + 4 + header.len() + map.data.len() * 4);
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in &map.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes NPY bytes (format version 1.0 or 2.0) holding a 2-D or 3-D
/// little-endian `float32` C-order array.
pub fn decode_npy(bytes: &[u8]) -> Result<DenseMap> {
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(Error::MalformedHeader("missing NPY magic string".into()));
    }
    let (header_len, header_start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::MalformedHeader("truncated header length".into()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(Error::MalformedHeader(format!("unsupported version {v}"))),
    };
    let payload_start = header_start + header_len;
    if bytes.len() < payload_start {
        return Err(Error::MalformedHeader("header extends past end of file".into()));
    }
    let header = std::str::from_utf8(&bytes[header_start..payload_start])
        .map_err(|_| Error::MalformedHeader("header is not valid text".into()))?;
    let header = parse_header(header)?;

    if header.descr != "<f4" {
        return Err(Error::UnsupportedDtype(header.descr));
    }
    if header.fortran_order {
        return Err(Error::MalformedHeader("fortran_order arrays are not supported".into()));
    }

    let (height, width, channels, channel_axis) = match header.shape[..] {
        [h, w] => (h, w, 1, false),
        [h, w, c] => (h, w, c, true),
        _ => {
            return Err(Error::Shape(format!(
                "expected a 2-D or 3-D array, got shape {:?}",
                header.shape
            )))
        }
    };

    let payload = &bytes[payload_start..];
    let count: usize = header.shape.iter().product();
    if payload.len() != count * 4 {
        return Err(Error::PayloadLength {
            shape: header.shape,
            expected: count * 4,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    DenseMap::with_rank(height, width, channels, data, channel_axis)
}

struct NpyHeader {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn parse_header(text: &str) -> Result<NpyHeader> {
    let bad = |msg: &str| Error::MalformedHeader(format!("{msg} in {:?}", text.trim_end()));
    let body = text
        .trim()
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| bad("header is not a dict"))?;

    let mut descr = None;
    let mut fortran_order = None;
    let mut shape = None;
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest).ok_or_else(|| bad("expected quoted key"))?;
        let after = after
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| bad("expected ':'"))?
            .trim_start();
        let after = match key {
            "descr" => {
                let (v, r) = take_quoted(after).ok_or_else(|| bad("descr must be a string"))?;
                descr = Some(v.to_string());
                r
            }
            "fortran_order" => {
                if let Some(r) = after.strip_prefix("False") {
                    fortran_order = Some(false);
                    r
                } else if let Some(r) = after.strip_prefix("True") {
                    fortran_order = Some(true);
                    r
                } else {
                    return Err(bad("fortran_order must be True or False"));
                }
            }
            "shape" => {
                let inner = after.strip_prefix('(').ok_or_else(|| bad("shape must be a tuple"))?;
                let close = inner.find(')').ok_or_else(|| bad("unterminated shape tuple"))?;
                let dims = inner[..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<usize>().map_err(|_| bad("non-integer dimension")))
                    .collect::<Result<Vec<_>>>()?;
                shape = Some(dims);
                &inner[close + 1..]
            }
            _ => return Err(bad("unknown key")),
        };
        rest = after.trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }
    Ok(NpyHeader {
        descr: descr.ok_or_else(|| bad("missing descr"))?,
        fortran_order: fortran_order.ok_or_else(|| bad("missing fortran_order"))?,
        shape: shape.ok_or_else(|| bad("missing shape"))?,
    })
}

fn take_quoted(s: &str) -> Option<(&str, &str)> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let inner = &s[1..];
    let end = inner.find(quote)?;
    Some((&inner[..end], &inner[end + 1..]))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<DenseMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_npy(&bytes)
}

pub fn save_tensor(map: &DenseMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_npy(map)).map_err(|e| Error::io(path, e))
}

/// Per-pixel foreground flags, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} mask needs {} flags, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(BinaryMask {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        BinaryMask {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.data[idx]
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        self.data[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn same_size(&self, other: &BinaryMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.at(y as usize, x as usize) { 255 } else { 0 }])
        })
    }
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    mask.to_image()
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = open_image(path)?.into_luma8();
    let (width, height) = (img.width() as usize, img.height() as usize);
    let mut data = Vec::with_capacity(width * height);
    for (i, px) in img.pixels().enumerate() {
        match px.0[0] {
            0 => data.push(false),
            255 => data.push(true),
            value => {
                return Err(Error::NonBinaryMask {
                    path: path.to_path_buf(),
                    row: i / width,
                    col: i % width,
                    value,
                })
            }
        }
    }
    BinaryMask::new(height, width, data)
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    Ok(open_image(path.as_ref())?.into_rgb8())
}

pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// File names for one frame; relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub embedding: PathBuf,
    pub objectness: PathBuf,
    pub flow: PathBuf,
    pub rgb: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation0: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SequenceManifest {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: SequenceManifest =
            serde_json::from_str(&text).map_err(|source| Error::Manifest {
                path: path.to_path_buf(),
                source,
            })?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Manifest {
            path: path.to_path_buf(),
            source,
        })?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn has_ground_truth(&self) -> bool {
        !self.frames.is_empty() && self.frames.iter().all(|f| f.gt.is_some())
    }
}

/// All per-frame inputs of the pipeline.
#[derive(Debug, Clone)]
pub struct DenseFeatureFrame {
    pub embedding: DenseMap,
    pub objectness: DenseMap,
    pub flow: DenseMap,
    pub rgb: RgbImage,
}

impl DenseFeatureFrame {
    pub fn height(&self) -> usize {
        self.embedding.height()
    }

    pub fn width(&self) -> usize {
        self.embedding.width()
    }
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub frames: Vec<DenseFeatureFrame>,
    /// Per-frame ground truth, when available.
    pub ground_truth: Vec<Option<BinaryMask>>,
    /// First-frame annotation for semi-supervised runs.
    pub annotation0: Option<BinaryMask>,
}

impl Sequence {
    /// Validates cross-frame invariants and clamps objectness into [0, 1].
    pub fn new(
        frames: Vec<DenseFeatureFrame>,
        ground_truth: Vec<Option<BinaryMask>>,
        annotation0: Option<BinaryMask>,
    ) -> Result<Self> {
        let mut seq = Sequence {
            frames,
            ground_truth,
            annotation0,
        };
        seq.validate()?;
        Ok(seq)
    }

    fn validate(&mut self) -> Result<()> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::InconsistentSequence("sequence has no frames".into()))?;
        let (h, w, e) = (first.height(), first.width(), first.embedding.channels());
        if self.ground_truth.len() != self.frames.len() {
            self.ground_truth.resize(self.frames.len(), None);
        }
        for (k, frame) in self.frames.iter_mut().enumerate() {
            let emb = &frame.embedding;
            if emb.height() != h || emb.width() != w {
                return Err(Error::InconsistentSequence(format!(
                    "frame {k} embedding is {}x{}, frame 0 is {h}x{w}",
                    emb.height(),
                    emb.width()
                )));
            }
            if emb.channels() != e {
                return Err(Error::InconsistentSequence(format!(
                    "frame {k} has {} embedding channels, frame 0 has {e}",
                    emb.channels()
                )));
            }
            if !frame.objectness.same_size(emb) || frame.objectness.channels() != 1 {
                return Err(Error::InconsistentSequence(format!(
                    "frame {k} objectness has shape {:?}, expected ({h}, {w})",
                    frame.objectness.shape()
                )));
            }
            if !frame.flow.same_size(emb) || frame.flow.channels() != 2 {
                return Err(Error::InconsistentSequence(format!(
                    "frame {k} flow has shape {:?}, expected ({h}, {w}, 2)",
                    frame.flow.shape()
                )));
            }
            if frame.rgb.height() as usize != h || frame.rgb.width() as usize != w {
                return Err(Error::InconsistentSequence(format!(
                    "frame {k} rgb is {}x{}, expected {h}x{w}",
                    frame.rgb.height(),
                    frame.rgb.width()
                )));
            }
            for v in frame.objectness.data_mut() {
                if *v < -OBJECTNESS_SLACK || *v > 1.0 + OBJECTNESS_SLACK {
                    return Err(Error::ObjectnessRange { frame: k, value: *v });
                }
                *v = v.clamp(0.0, 1.0);
            }
        }
        let masks = self
            .ground_truth
            .iter()
            .enumerate()
            .filter_map(|(k, m)| m.as_ref().map(|m| (format!("frame {k} ground truth"), m)))
            .chain(self.annotation0.iter().map(|m| ("annotation0".to_string(), m)));
        for (what, mask) in masks {
            if mask.height() != h || mask.width() != w {
                return Err(Error::InconsistentSequence(format!(
                    "{what} is {}x{}, expected {h}x{w}",
                    mask.height(),
                    mask.width()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn embedding_dim(&self) -> usize {
        self.frames[0].embedding.channels()
    }

    /// Ground truth for every frame, or an error naming the first gap.
    pub fn full_ground_truth(&self) -> Result<Vec<&BinaryMask>> {
        self.ground_truth
            .iter()
            .enumerate()
            .map(|(k, m)| {
                m.as_ref()
                    .ok_or_else(|| Error::MissingGroundTruth(format!("frame {k} has no mask")))
            })
            .collect()
    }
}

/// Loads every file named by the manifest. Frames are read in parallel; the
/// result is ordered as in the manifest regardless of completion order.
pub fn load_sequence(manifest: &SequenceManifest) -> Result<Sequence> {
    type Loaded = (DenseFeatureFrame, Option<BinaryMask>);
    let loaded: Vec<Loaded> = manifest
        .frames
        .par_iter()
        .enumerate()
        .map(|(k, entry)| -> Result<Loaded> {
            let load = || -> Result<Loaded> {
                let frame = DenseFeatureFrame {
                    embedding: load_tensor(manifest.resolve(&entry.embedding))?,
                    objectness: load_tensor(manifest.resolve(&entry.objectness))?,
                    flow: load_tensor(manifest.resolve(&entry.flow))?,
                    rgb: load_rgb(manifest.resolve(&entry.rgb))?,
                };
                let gt = entry
                    .gt
                    .as_ref()
                    .map(|p| load_mask(manifest.resolve(p)))
                    .transpose()?;
                Ok((frame, gt))
            };
            load().map_err(|e| e.at_frame(k))
        })
        .collect::<Result<_>>()?;
    let annotation0 = manifest
        .annotation0
        .as_ref()
        .map(|p| load_mask(manifest.resolve(p)))
        .transpose()?;
    let (frames, gt): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
    Sequence::new(frames, gt, annotation0)
}

/// Writes every frame of `seq` into `dir` with a `manifest.json` that
/// `load_sequence` reads back. Ground-truth masks go to `dir/gt/`. Returns
/// the manifest path.
pub fn write_sequence(seq: &Sequence, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if seq.ground_truth.iter().any(Option::is_some) {
        let gt_dir = dir.join("gt");
        fs::create_dir_all(&gt_dir).map_err(|e| Error::io(gt_dir, e))?;
    }
    let entries: Vec<FrameEntry> = seq
        .frames
        .par_iter()
        .zip(&seq.ground_truth)
        .enumerate()
        .map(|(k, (frame, gt))| -> Result<FrameEntry> {
            let entry = FrameEntry {
                embedding: format!("embedding_{k:04}.npy").into(),
                objectness: format!("objectness_{k:04}.npy").into(),
                flow: format!("flow_{k:04}.npy").into(),
                rgb: format!("rgb_{k:04}.png").into(),
                gt: gt.as_ref().map(|_| format!("gt/{k:04}.png").into()),
            };
            save_tensor(&frame.embedding, dir.join(&entry.embedding))?;
            save_tensor(&frame.objectness, dir.join(&entry.objectness))?;
            save_tensor(&frame.flow, dir.join(&entry.flow))?;
            save_rgb(&frame.rgb, dir.join(&entry.rgb))?;
            if let (Some(mask), Some(p)) = (gt, &entry.gt) {
                save_mask(mask, dir.join(p))?;
            }
            Ok(entry)
        })
        .collect::<Result<_>>()?;
    let annotation0 = match &seq.annotation0 {
        Some(mask) => {
            save_mask(mask, dir.join("annotation0.png"))?;
            Some(PathBuf::from("annotation0.png"))
        }
        None => None,
    };
    let manifest = SequenceManifest {
        frames: entries,
        annotation0,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_small() {
        let map = DenseMap::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let bytes = encode_npy(&map);
        assert_eq!(bytes.len() % NPY_ALIGN, 16 % NPY_ALIGN);
        let back = decode_npy(&bytes).unwrap();
        assert_eq!(back.data(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(back.shape(), vec![2, 2, 1]);
        assert_eq!(encode_npy(&back), bytes);
    }

    #[test]
    fn header_matches_numpy_layout() {
        let map = DenseMap::plane(3, 4, vec![0.5; 12]).unwrap();
        let bytes = encode_npy(&map);
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        let header = std::str::from_utf8(&bytes[10..10 + hlen]).unwrap();
        assert!(header.starts_with("{'descr': '<f4', 'fortran_order': False, 'shape': (3, 4), }"));
        assert!(header.ends_with('\n'));
    }

    #[test]
    fn short_payload_is_length_error() {
        let map = DenseMap::plane(2, 2, vec![1.0; 4]).unwrap();
        let mut bytes = encode_npy(&map);
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(
            decode_npy(&bytes),
            Err(Error::PayloadLength {
                expected: 16,
                found: 12,
                ..
            })
        ));
    }

    #[test]
    fn integer_dtype_rejected() {
        let map = DenseMap::plane(1, 1, vec![1.0]).unwrap();
        let mut patched = encode_npy(&map);
        let pos = patched.windows(3).position(|w| w == b"<f4").unwrap();
        patched[pos + 1] = b'i';
        assert!(matches!(decode_npy(&patched), Err(Error::UnsupportedDtype(d)) if d == "<i4"));
    }

    #[test]
    fn garbage_header_rejected() {
        assert!(matches!(decode_npy(b"not an npy file"), Err(Error::MalformedHeader(_))));
        let mut bytes = encode_npy(&DenseMap::plane(1, 1, vec![1.0]).unwrap());
        let pos = bytes.windows(5).position(|w| w == b"shape").unwrap();
        bytes[pos] = b'x';
        assert!(matches!(decode_npy(&bytes), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn nan_rejected() {
        let mut bytes = encode_npy(&DenseMap::plane(1, 2, vec![1.0, 2.0]).unwrap());
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_npy(&bytes), Err(Error::NonFinite(1))));
    }

    #[test]
    fn mask_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let checker = BinaryMask::from_fn(5, 7, |r, c| (r + c) % 2 == 0);
        save_mask(&checker, &path).unwrap();
        assert_eq!(load_mask(&path).unwrap(), checker);

        let empty = BinaryMask::empty(3, 3);
        save_mask(&empty, &path).unwrap();
        let img = image::open(&path).unwrap().into_luma8();
        assert!(img.pixels().all(|p| p.0[0] == 0));
        assert_eq!(load_mask(&path).unwrap(), empty);
    }

    #[test]
    fn grey_mask_value_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let mut img = GrayImage::new(4, 4);
        img.put_pixel(2, 1, Luma([128]));
        img.save(&path).unwrap();
        assert!(matches!(
            load_mask(&path),
            Err(Error::NonBinaryMask {
                row: 1,
                col: 2,
                value: 128,
                ..
            })
        ));
    }
}
