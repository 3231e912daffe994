//! Lossless frame-sequence I/O and the persisted noise bank.
//!
//! Sequences travel as numbered PNG files (8- or 16-bit) listed by a JSON
//! manifest: `{"channels":3,"height":64,"width":64,"frames":["f000.png",…]}`.
//! Frame paths are resolved relative to the manifest's directory.
//!
//! The noise bank is a fixed-endianness binary container:
//!
//! ```text
//! magic "NSQB" | version u32 LE | count,n,c,h,w u32 LE
//! payload: count * n * c * h * w  f32 LE, entry-major, frame-major,
//!          channel-major, row-major
//! ```
//!
//! with per-entry provenance in a `<path>.meta.json` sidecar. Entry data is
//! quantized to f32 on the way into a bank, so write/read roundtrips are
//! bitwise exact.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};
use crate::noise_extract::NoiseThresholds;

pub const BANK_MAGIC: [u8; 4] = *b"NSQB";
pub const BANK_VERSION: u32 = 1;
/// magic + six u32 fields
pub const BANK_HEADER_LEN: usize = 4 + 6 * 4;

/// Target storage depth for saved frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

impl BitDepth {
    fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Round-half-up quantization of a normalized sample.
fn quantize(v: f64, max: f64) -> u32 {
    ((v.clamp(0.0, 1.0) * max) + 0.5).floor().min(max) as u32
}

/// Snap a value onto the f32 grid (the bank's storage precision).
pub fn quantize_f32(v: f64) -> f64 {
    v as f32 as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Gray,
    Rgb,
}

/// Ordered list of frame files plus their declared shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub frames: Vec<String>,
    /// Directory frame paths are resolved against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SequenceManifest {
    pub fn color_space(&self) -> Result<ColorSpace> {
        match self.channels {
            1 => Ok(ColorSpace::Gray),
            3 => Ok(ColorSpace::Rgb),
            c => Err(Error::format(format!("unsupported channel count {c}"))),
        }
    }

    /// Parse a manifest file; frame paths resolve against its directory.
    pub fn load(path: &Path) -> Result<SequenceManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: SequenceManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(manifest)
    }

    pub fn frame_path(&self, i: usize) -> PathBuf {
        self.base_dir.join(&self.frames[i])
    }
}

/// Decode every listed frame, in order, normalized to `[0, 1]`.
pub fn load_sequence(manifest: &SequenceManifest) -> Result<VideoSequence> {
    manifest.color_space()?;
    if manifest.frames.is_empty() {
        return Err(Error::format("manifest lists no frames"));
    }
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for i in 0..manifest.frames.len() {
        let path = manifest.frame_path(i);
        let frame = load_frame(&path)?;
        if frame.shape() != (manifest.channels, manifest.height, manifest.width) {
            return Err(Error::format(format!(
                "{}: decoded shape {:?} does not match declared {}x{}x{}",
                path.display(),
                frame.shape(),
                manifest.channels,
                manifest.height,
                manifest.width
            )));
        }
        frames.push(frame);
    }
    VideoSequence::new(frames)
}

/// Decode a single PNG into a normalized frame.
pub fn load_frame(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let (c, h, w, data) = match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.into_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
            (1, h as usize, w as usize, data)
        }
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf
                .into_raw()
                .iter()
                .map(|&v| f64::from(v) / 65535.0)
                .collect();
            (1, h as usize, w as usize, data)
        }
        image::DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            (3, h as usize, w as usize, interleaved_to_planar(buf.as_raw(), 255.0))
        }
        image::DynamicImage::ImageRgb16(buf) => {
            let (w, h) = buf.dimensions();
            (3, h as usize, w as usize, interleaved_to_planar(buf.as_raw(), 65535.0))
        }
        other => {
            return Err(Error::format(format!(
                "{}: unsupported pixel layout {:?} (gray or rgb, 8/16-bit)",
                path.display(),
                other.color()
            )))
        }
    };
    Frame::new(c, h, w, data)
}

fn interleaved_to_planar<T: Copy + Into<f64>>(raw: &[T], max: f64) -> Vec<f64> {
    let pixels = raw.len() / 3;
    let mut data = vec![0.0; raw.len()];
    for p in 0..pixels {
        for ch in 0..3 {
            data[ch * pixels + p] = raw[p * 3 + ch].into() / max;
        }
    }
    data
}

/// Write numbered PNGs plus `manifest.json` into `dir`; returns the manifest.
pub fn save_sequence(video: &VideoSequence, dir: &Path, depth: BitDepth) -> Result<SequenceManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::with_capacity(video.len());
    for (i, frame) in video.iter().enumerate() {
        let name = format!("f{i:03}.png");
        save_frame(frame, &dir.join(&name), depth)?;
        names.push(name);
    }
    let manifest = SequenceManifest {
        channels: video.channels(),
        height: video.height(),
        width: video.width(),
        frames: names,
        base_dir: dir.to_path_buf(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json + "\n")
        .map_err(|e| Error::io(dir.join("manifest.json"), e))?;
    Ok(manifest)
}

/// Encode one frame as PNG at the requested depth (values clamped to [0,1],
/// round-half-up quantization).
pub fn save_frame(frame: &Frame, path: &Path, depth: BitDepth) -> Result<()> {
    let (c, h, w) = frame.shape();
    let max = depth.max_value();
    let err = |e: image::ImageError| Error::format(format!("{}: {e}", path.display()));
    match (c, depth) {
        (1, BitDepth::Eight) => {
            let raw: Vec<u8> = frame.data().iter().map(|&v| quantize(v, max) as u8).collect();
            image::GrayImage::from_raw(w as u32, h as u32, raw)
                .expect("sized buffer")
                .save(path)
                .map_err(err)
        }
        (1, BitDepth::Sixteen) => {
            let raw: Vec<u16> = frame.data().iter().map(|&v| quantize(v, max) as u16).collect();
            image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w as u32, h as u32, raw)
                .expect("sized buffer")
                .save(path)
                .map_err(err)
        }
        (3, BitDepth::Eight) => {
            let raw = planar_to_interleaved(frame, |v| quantize(v, max) as u8);
            image::RgbImage::from_raw(w as u32, h as u32, raw)
                .expect("sized buffer")
                .save(path)
                .map_err(err)
        }
        (3, BitDepth::Sixteen) => {
            let raw = planar_to_interleaved(frame, |v| quantize(v, max) as u16);
            image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(w as u32, h as u32, raw)
                .expect("sized buffer")
                .save(path)
                .map_err(err)
        }
        (c, _) => Err(Error::invalid(format!(
            "cannot encode {c}-channel frame as PNG (gray or rgb only)"
        ))),
    }
}

fn planar_to_interleaved<T>(frame: &Frame, q: impl Fn(f64) -> T) -> Vec<T> {
    let (c, h, w) = frame.shape();
    let pixels = h * w;
    let mut raw = Vec::with_capacity(c * pixels);
    for p in 0..pixels {
        for ch in 0..c {
            raw.push(q(frame.data()[ch * pixels + p]));
        }
    }
    raw
}

/// Provenance of one accepted noise sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryMeta {
    pub source: String,
    pub origin: (u32, u32),
    pub window_means: Vec<f64>,
    pub window_vars: Vec<f64>,
}

/// One accepted window sequence, stored at f32 precision.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub noise: VideoSequence,
    pub meta: EntryMeta,
}

/// Bank-level sidecar: the thresholds every entry satisfied plus the
/// statistic convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankMeta {
    pub thresholds: NoiseThresholds,
    pub variance_convention: String,
    pub zero_mean: bool,
}

impl Default for BankMeta {
    fn default() -> Self {
        BankMeta {
            thresholds: NoiseThresholds::default(),
            variance_convention: "population".to_string(),
            zero_mean: false,
        }
    }
}

/// Persisted container of noise sequences with provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank {
    pub n: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub entries: Vec<BankEntry>,
    pub meta: BankMeta,
}

impl NoiseBank {
    /// An empty bank with declared entry dimensions.
    pub fn empty(n: usize, channels: usize, height: usize, width: usize) -> Self {
        NoiseBank {
            n,
            channels,
            height,
            width,
            entries: Vec::new(),
            meta: BankMeta::default(),
        }
    }

    pub fn push(&mut self, entry: BankEntry) -> Result<()> {
        if entry.noise.shape() != (self.n, self.channels, self.height, self.width) {
            return Err(Error::invalid("bank entry shape mismatch"));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn entry_len(&self) -> usize {
        self.n * self.channels * self.height * self.width
    }
}

#[derive(Serialize, Deserialize)]
struct BankSidecar {
    n: usize,
    channels: usize,
    height: usize,
    width: usize,
    #[serde(flatten)]
    meta: BankMeta,
    entries: Vec<EntryMeta>,
}

/// Serialize the bank; returns the byte count of the binary body.
pub fn write_noise_bank(bank: &NoiseBank, path: &Path) -> Result<u64> {
    for e in &bank.entries {
        if e.noise.shape() != (bank.n, bank.channels, bank.height, bank.width) {
            return Err(Error::invalid("bank entries must share the declared shape"));
        }
    }
    let mut bytes =
        Vec::with_capacity(BANK_HEADER_LEN + bank.entries.len() * bank.entry_len() * 4);
    bytes.extend_from_slice(&BANK_MAGIC);
    for v in [
        BANK_VERSION,
        bank.entries.len() as u32,
        bank.n as u32,
        bank.channels as u32,
        bank.height as u32,
        bank.width as u32,
    ] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for entry in &bank.entries {
        for frame in entry.noise.iter() {
            for &v in frame.data() {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;

    let sidecar = BankSidecar {
        n: bank.n,
        channels: bank.channels,
        height: bank.height,
        width: bank.width,
        meta: bank.meta.clone(),
        entries: bank.entries.iter().map(|e| e.meta.clone()).collect(),
    };
    let sidecar_path = meta_path(path);
    let json =
        serde_json::to_string_pretty(&sidecar).map_err(|e| Error::format(e.to_string()))?;
    fs::write(&sidecar_path, json + "\n").map_err(|e| Error::io(&sidecar_path, e))?;
    Ok(bytes.len() as u64)
}

pub fn meta_path(bank_path: &Path) -> PathBuf {
    let mut name = bank_path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    bank_path.with_file_name(name)
}

/// Exact inverse of [`write_noise_bank`].
pub fn read_noise_bank(path: &Path) -> Result<NoiseBank> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() < BANK_HEADER_LEN {
        return Err(Error::format("noise bank shorter than header"));
    }
    if bytes[0..4] != BANK_MAGIC {
        return Err(Error::format("bad magic (expected NSQB)"));
    }
    let field = |i: usize| {
        u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("header slice"))
    };
    let version = field(0);
    if version != BANK_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (count, n, c, h, w) = (
        field(1) as usize,
        field(2) as usize,
        field(3) as usize,
        field(4) as usize,
        field(5) as usize,
    );
    let entry_len = n * c * h * w;
    let expected = BANK_HEADER_LEN + count * entry_len * 4;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "payload length {} does not match header (expected {expected} bytes)",
            bytes.len()
        )));
    }

    let sidecar_path = meta_path(path);
    let sidecar_text =
        fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    let sidecar: BankSidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| Error::format(format!("{}: {e}", sidecar_path.display())))?;
    if sidecar.entries.len() != count {
        return Err(Error::format(format!(
            "sidecar lists {} entries, container holds {count}",
            sidecar.entries.len()
        )));
    }

    let mut bank = NoiseBank::empty(n, c, h, w);
    bank.meta = sidecar.meta;
    let mut off = BANK_HEADER_LEN;
    for meta in sidecar.entries {
        let mut frames = Vec::with_capacity(n);
        for _ in 0..n {
            let mut data = Vec::with_capacity(c * h * w);
            for _ in 0..c * h * w {
                let v = f32::from_le_bytes(bytes[off..off + 4].try_into().expect("f32 slice"));
                data.push(f64::from(v));
                off += 4;
            }
            frames.push(Frame::new(c, h, w, data)?);
        }
        bank.push(BankEntry {
            noise: VideoSequence::new(frames)?,
            meta,
        })?;
    }
    Ok(bank)
}
