//! On-disk clip layout:
//!
//! ```text
//! root/clips/<clip_id>/thermal/%06d.png   16-bit grayscale, 288×384
//! root/clips/<clip_id>/poses.json         {frames: [{joints: [[x, y] × 15], valid: [bool × 15]}]}
//! root/clips/<clip_id>/meta.json          {fps, actor, room, intensity_range: [lo, hi], annotations, source, ...}
//! root/splits.json                        split manifest
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::ThermalFrame;
use crate::pose::{Pose, IMAGE_H, IMAGE_W};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Real,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub action: String,
    pub object: String,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Contents of `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub fps: f64,
    #[serde(default)]
    pub actor: String,
    #[serde(default)]
    pub room: String,
    /// Raw 16-bit values mapped to intensities 0 and 1.
    pub intensity_range: [f64; 2],
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    #[serde(default)]
    pub source: Source,
    /// Generator inputs for synthetic clips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<serde_json::Value>,
}

impl Default for ClipMeta {
    fn default() -> Self {
        ClipMeta {
            fps: 15.0,
            actor: String::new(),
            room: String::new(),
            intensity_range: [0.0, 65535.0],
            annotations: Vec::new(),
            source: Source::Real,
            scene: None,
            script: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct PosesFile<T> {
    frames: Vec<Pose<T>>,
}

#[derive(Clone, Debug)]
pub struct ClipRecord<T> {
    pub clip_id: String,
    pub fps: f64,
    pub frames: Vec<Arc<ThermalFrame<T>>>,
    pub poses: Vec<Pose<T>>,
    pub annotations: Vec<Annotation>,
    pub source: Source,
    pub meta: ClipMeta,
}

impl<T: Scalar> ClipRecord<T> {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Frame count for a duration in seconds at this clip's rate.
    pub fn frames_for(&self, seconds: f64) -> usize {
        (seconds * self.fps).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != self.poses.len() {
            return Err(Error::data(format!(
                "clip {}: {} frames but {} poses",
                self.clip_id,
                self.frames.len(),
                self.poses.len()
            )));
        }
        let dt = 1.0 / self.fps;
        for (i, w) in self.frames.windows(2).enumerate() {
            let step = w[1].timestamp - w[0].timestamp;
            if step <= 0.0 || (step - dt).abs() > 1e-6 {
                return Err(Error::data(format!(
                    "clip {}: frame {} is not spaced 1/fps after its predecessor",
                    self.clip_id,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

pub fn clip_dir(root: &Path, clip_id: &str) -> PathBuf {
    root.join("clips").join(clip_id)
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("thermal").join(format!("{index:06}.png"))
}

/// Quantize an intensity in `[0, 1]` to the raw range.
pub fn quantize<T: Scalar>(v: T, range: [f64; 2]) -> u16 {
    let x = range[0] + v.as_f64().clamp(0.0, 1.0) * (range[1] - range[0]);
    x.round().clamp(0.0, 65535.0) as u16
}

/// Min-max rescale of a raw value into `[0, 1]`.
pub fn dequantize<T: Scalar>(raw: u16, range: [f64; 2]) -> T {
    T::lit(((raw as f64 - range[0]) / (range[1] - range[0])).clamp(0.0, 1.0))
}

pub fn write_frame_png<T: Scalar>(frame: &ThermalFrame<T>, range: [f64; 2], path: &Path) -> Result<()> {
    let raw: Vec<u16> = frame.values.iter().map(|&v| quantize(v, range)).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(frame.width as u32, frame.height as u32, raw).expect("frame buffer size");
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_frame_png<T: Scalar>(path: &Path, range: [f64; 2], timestamp: f64) -> Result<ThermalFrame<T>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma16();
    if img.width() as usize != IMAGE_W || img.height() as usize != IMAGE_H {
        return Err(Error::data(format!(
            "{} is {}x{}, expected {IMAGE_W}x{IMAGE_H}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    let values = img.as_raw().iter().map(|&r| dequantize(r, range)).collect();
    ThermalFrame::new(values, timestamp)
}

/// Write a clip in the dataset layout.
pub fn write_clip<T: Scalar>(root: &Path, clip: &ClipRecord<T>) -> Result<()> {
    clip.validate()?;
    let dir = clip_dir(root, &clip.clip_id);
    let thermal = dir.join("thermal");
    std::fs::create_dir_all(&thermal).map_err(Error::io(&thermal))?;
    for (i, f) in clip.frames.iter().enumerate() {
        write_frame_png(f, clip.meta.intensity_range, &frame_path(&dir, i))?;
    }
    let poses = PosesFile {
        frames: clip.poses.clone(),
    };
    let p = dir.join("poses.json");
    std::fs::write(&p, serde_json::to_vec(&poses).map_err(Error::json(&p))?).map_err(Error::io(&p))?;
    let mut meta = clip.meta.clone();
    meta.fps = clip.fps;
    meta.annotations = clip.annotations.clone();
    meta.source = clip.source;
    let m = dir.join("meta.json");
    std::fs::write(&m, serde_json::to_vec_pretty(&meta).map_err(Error::json(&m))?).map_err(Error::io(&m))
}

/// Load one clip directory.
pub fn load_clip<T: Scalar>(dir: &Path) -> Result<ClipRecord<T>> {
    let clip_id = dir
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::data(format!("bad clip directory {}", dir.display())))?
        .to_string();
    let meta_path = dir.join("meta.json");
    let meta: ClipMeta = serde_json::from_slice(&std::fs::read(&meta_path).map_err(Error::io(&meta_path))?)
        .map_err(Error::json(&meta_path))?;
    if !(meta.fps > 0.0) {
        return Err(Error::data(format!("clip {clip_id}: fps must be positive")));
    }
    if meta.intensity_range[1] <= meta.intensity_range[0] {
        return Err(Error::data(format!("clip {clip_id}: empty intensity range")));
    }
    let poses_path = dir.join("poses.json");
    let poses: PosesFile<T> =
        serde_json::from_slice(&std::fs::read(&poses_path).map_err(Error::io(&poses_path))?)
            .map_err(Error::json(&poses_path))?;

    let thermal = dir.join("thermal");
    let mut indices = Vec::new();
    for entry in std::fs::read_dir(&thermal).map_err(Error::io(&thermal))? {
        let entry = entry.map_err(Error::io(&thermal))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".png") {
            let idx: usize = stem
                .parse()
                .map_err(|_| Error::data(format!("unexpected frame file {name}")))?;
            indices.push(idx);
        }
    }
    indices.sort_unstable();
    for (expect, &got) in indices.iter().enumerate() {
        if got != expect {
            return Err(Error::MissingFrame {
                what: "thermal frame",
                frame: expect,
                path: thermal.clone(),
            });
        }
    }
    let n = indices.len();
    if poses.frames.len() < n {
        return Err(Error::MissingFrame {
            what: "pose",
            frame: poses.frames.len(),
            path: poses_path,
        });
    }
    if poses.frames.len() > n {
        return Err(Error::MissingFrame {
            what: "thermal frame",
            frame: n,
            path: thermal,
        });
    }
    let frames = (0..n)
        .map(|i| {
            read_frame_png(&frame_path(dir, i), meta.intensity_range, i as f64 / meta.fps).map(Arc::new)
        })
        .collect::<Result<Vec<_>>>()?;
    let poses = poses
        .frames
        .into_iter()
        .map(|p| Pose::new(p.joints, p.valid))
        .collect::<Result<Vec<_>>>()?;
    let clip = ClipRecord {
        clip_id,
        fps: meta.fps,
        frames,
        poses,
        annotations: meta.annotations.clone(),
        source: meta.source,
        meta,
    };
    clip.validate()?;
    Ok(clip)
}

/// Clip ids present under `root/clips`, sorted.
pub fn list_clips(root: &Path) -> Result<Vec<String>> {
    let dir = root.join("clips");
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(&dir).map_err(Error::io(&dir))? {
        let entry = entry.map_err(Error::io(&dir))?;
        if entry.path().is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}
