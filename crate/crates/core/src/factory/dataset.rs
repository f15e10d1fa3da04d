//! Dataset export. Layout under the output directory:
//!
//! ```text
//! manifest.jsonl
//! <scene>/r<width>/b<baseline>/<pose>_{left,center,right}.png
//! <scene>/r<width>/b<baseline>/<pose>_{disp,depth,ao}.pfm
//! <scene>/r<width>/b<baseline>/<pose>_valid.png
//! ```
//!
//! The manifest's first line is a header (format, version, count,
//! histogram); every following line is one triplet record. Paths are
//! relative to the manifest and `/`-separated.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_pfm, render_triplet, write_pfm, DisparityHistogram, FactoryError, Triplet, TripletMeta};
use crate::field::RadianceField;
use crate::geometry::{depth_to_disparity, Intrinsics, Pose, StereoRig};
use crate::image::{Image, Mask};
use crate::num::Real;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const MANIFEST_FORMAT: &str = "nsf-triplets";
pub const MANIFEST_VERSION: u32 = 1;

/// A field and the poses to center triplets on.
pub struct SceneSource<'a, T> {
    pub id: String,
    pub field: &'a dyn RadianceField<T>,
    pub intrinsics: Intrinsics<T>,
    pub poses: Vec<Pose<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportConfig {
    pub baselines: Vec<f64>,
    /// Output widths; heights keep the source aspect ratio.
    pub resolutions: Vec<usize>,
    pub samples: usize,
    pub histogram_bin_width: f64,
    pub histogram_bins: usize,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            baselines: vec![0.5, 0.3, 0.1],
            resolutions: vec![64],
            samples: 128,
            histogram_bin_width: 1.0,
            histogram_bins: 128,
        }
    }
}

impl ExportConfig {
    pub fn validate(&self) -> Result<(), FactoryError> {
        let bad = |m: &str| Err(FactoryError::Config(m.into()));
        if self.baselines.is_empty() || self.baselines.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return bad("baselines must be a non-empty list of positive values");
        }
        if self.resolutions.is_empty() || self.resolutions.contains(&0) {
            return bad("resolutions must be a non-empty list of positive widths");
        }
        if self.samples == 0 {
            return bad("samples must be positive");
        }
        if !(self.histogram_bin_width > 0.0) || self.histogram_bins == 0 {
            return bad("histogram needs positive bin width and count");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub count: usize,
    pub histogram: DisparityHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletRecord {
    pub scene_id: String,
    pub pose_id: usize,
    pub baseline: f64,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub left: String,
    pub center: String,
    pub right: String,
    pub disparity: String,
    pub depth: String,
    pub ao: String,
    pub valid: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<TripletRecord>,
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png_rgb(img: &Image<f32>, path: &Path) -> Result<(), FactoryError> {
    assert_eq!(img.channels(), 3);
    let buf: Vec<u8> = img.as_slice().iter().map(|&v| to_u8(v)).collect();
    let out = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, buf).expect("buffer size");
    out.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn write_png_mask(mask: &Mask, path: &Path) -> Result<(), FactoryError> {
    let buf = mask.as_slice().iter().map(|&m| if m { 255 } else { 0 }).collect();
    let out = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, buf).expect("buffer size");
    out.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_png_rgb(path: &Path) -> Result<Image<f32>, FactoryError> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect();
    Ok(Image::from_vec(w as usize, h as usize, 3, data))
}

fn read_png_mask(path: &Path) -> Result<Mask, FactoryError> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(Mask::from_vec(w as usize, h as usize, img.into_raw().into_iter().map(|v| v >= 128).collect()))
}

/// Converts to the exported precision. Disparity is re-derived from the
/// f32 depth, so reloaded maps satisfy `d = b·f/z` exactly.
pub fn to_export<T: Real>(t: &Triplet<T>) -> Triplet<f32> {
    let depth: Image<f32> = t.depth.cast();
    let (disparity, valid) = depth_to_disparity(&depth, &t.valid, t.meta.baseline as f32, t.meta.focal as f32);
    Triplet {
        left: t.left.cast(),
        center: t.center.cast(),
        right: t.right.cast(),
        disparity,
        depth,
        ao: t.ao.cast(),
        valid,
        meta: t.meta.clone(),
    }
}

/// Writes one triplet's files under `root`; the subdirectory comes from
/// its metadata.
pub fn write_triplet(root: &Path, t: &Triplet<f32>) -> Result<TripletRecord, FactoryError> {
    let m = &t.meta;
    if m.scene_id.is_empty() || m.scene_id.contains(['/', '\\']) {
        return Err(FactoryError::Config(format!("scene id {:?} is not a path component", m.scene_id)));
    }
    let dir = format!("{}/r{}/b{:.3}", m.scene_id, t.width(), m.baseline);
    fs::create_dir_all(root.join(&dir))?;
    let rel = |suffix: &str| format!("{dir}/{:03}_{suffix}", m.pose_id);
    let record = TripletRecord {
        scene_id: m.scene_id.clone(),
        pose_id: m.pose_id,
        baseline: m.baseline,
        focal: m.focal,
        width: t.width(),
        height: t.height(),
        left: rel("left.png"),
        center: rel("center.png"),
        right: rel("right.png"),
        disparity: rel("disp.pfm"),
        depth: rel("depth.pfm"),
        ao: rel("ao.pfm"),
        valid: rel("valid.png"),
    };
    write_png_rgb(&t.left, &root.join(&record.left))?;
    write_png_rgb(&t.center, &root.join(&record.center))?;
    write_png_rgb(&t.right, &root.join(&record.right))?;
    write_pfm(&t.disparity, &root.join(&record.disparity))?;
    write_pfm(&t.depth, &root.join(&record.depth))?;
    write_pfm(&t.ao, &root.join(&record.ao))?;
    write_png_mask(&t.valid, &root.join(&record.valid))?;
    Ok(record)
}

fn histogram_of(t: &Triplet<f32>, cfg: &ExportConfig) -> DisparityHistogram {
    let mut hist = DisparityHistogram::new(cfg.histogram_bin_width, cfg.histogram_bins);
    for (&d, &v) in t.disparity.as_slice().iter().zip(t.valid.as_slice()) {
        if v {
            hist.add(f64::from(d));
        }
    }
    hist
}

fn finish(results: Vec<(TripletRecord, DisparityHistogram)>, cfg: &ExportConfig, out_dir: &Path) -> Result<DatasetManifest, FactoryError> {
    let mut histogram = DisparityHistogram::new(cfg.histogram_bin_width, cfg.histogram_bins);
    let mut records = Vec::with_capacity(results.len());
    for (rec, hist) in results {
        histogram.merge(&hist);
        records.push(rec);
    }
    let manifest = DatasetManifest {
        header: ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            count: records.len(),
            histogram,
        },
        records,
    };
    write_manifest(&manifest, &out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Writes already-built triplets (e.g. exact fixture triplets) in the
/// dataset layout. Only the histogram fields of `cfg` are used.
pub fn export_triplets<T: Real>(triplets: &[Triplet<T>], cfg: &ExportConfig, out_dir: &Path) -> Result<DatasetManifest, FactoryError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let results = triplets
        .iter()
        .map(|t| {
            let e = to_export(t);
            Ok((write_triplet(out_dir, &e)?, histogram_of(&e, cfg)))
        })
        .collect::<Result<Vec<_>, FactoryError>>()?;
    finish(results, cfg, out_dir)
}

struct Job<'s, 'a, T> {
    scene: &'s SceneSource<'a, T>,
    pose_id: usize,
    baseline: f64,
    intr: Intrinsics<T>,
}

/// Renders one triplet per (scene pose × baseline × resolution), writes
/// the files and the manifest, and returns the manifest. Triplets render
/// in parallel; the manifest is assembled in job order.
pub fn build_dataset<T: Real>(scenes: &[SceneSource<'_, T>], cfg: &ExportConfig, out_dir: &Path) -> Result<DatasetManifest, FactoryError> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(FactoryError::Config("no scenes to export".into()));
    }
    let mut ids: Vec<&str> = scenes.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != scenes.len() {
        return Err(FactoryError::Config("scene ids must be unique".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut jobs = Vec::new();
    for scene in scenes {
        for &res in &cfg.resolutions {
            let src = &scene.intrinsics;
            let h = ((res * src.height) as f64 / src.width as f64).round().max(1.0) as usize;
            let intr = src.rescaled(res, h).map_err(|e| FactoryError::Config(e.to_string()))?;
            for &baseline in &cfg.baselines {
                for pose_id in 0..scene.poses.len() {
                    jobs.push(Job {
                        scene,
                        pose_id,
                        baseline,
                        intr,
                    });
                }
            }
        }
    }
    let results = jobs
        .par_iter()
        .map(|job| {
            let rig = StereoRig::new(T::lit(job.baseline)).map_err(|e| FactoryError::Config(e.to_string()))?;
            let mut t = render_triplet(job.scene.field, &job.scene.poses[job.pose_id], &job.intr, &rig, cfg.samples);
            t.meta = TripletMeta {
                baseline: job.baseline,
                focal: job.intr.fx.as_f64(),
                pose_id: job.pose_id,
                scene_id: job.scene.id.clone(),
            };
            let e = to_export(&t);
            Ok((write_triplet(out_dir, &e)?, histogram_of(&e, cfg)))
        })
        .collect::<Result<Vec<_>, FactoryError>>()?;
    finish(results, cfg, out_dir)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), FactoryError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, &manifest.header)?;
    w.write_all(b"\n")?;
    for r in &manifest.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a manifest and checks that every referenced file exists.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest, FactoryError> {
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let header: ManifestHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(FactoryError::Format("empty manifest".into())),
    };
    if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
        return Err(FactoryError::Format(format!("unsupported manifest {} v{}", header.format, header.version)));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TripletRecord = serde_json::from_str(&line)?;
        for f in record_files(&rec) {
            if !root.join(f).is_file() {
                return Err(FactoryError::Format(format!("missing file {f}")));
            }
        }
        records.push(rec);
    }
    if records.len() != header.count {
        return Err(FactoryError::Format(format!("header count {} but {} records", header.count, records.len())));
    }
    Ok(DatasetManifest { header, records })
}

fn record_files(r: &TripletRecord) -> [&str; 7] {
    [&r.left, &r.center, &r.right, &r.disparity, &r.depth, &r.ao, &r.valid]
}

/// Loads one exported triplet; `root` is the manifest's directory.
pub fn load_triplet(root: &Path, r: &TripletRecord) -> Result<Triplet<f32>, FactoryError> {
    let p = |s: &str| -> PathBuf { root.join(s) };
    let t = Triplet {
        left: read_png_rgb(&p(&r.left))?,
        center: read_png_rgb(&p(&r.center))?,
        right: read_png_rgb(&p(&r.right))?,
        disparity: read_pfm(&p(&r.disparity))?,
        depth: read_pfm(&p(&r.depth))?,
        ao: read_pfm(&p(&r.ao))?,
        valid: read_png_mask(&p(&r.valid))?,
        meta: TripletMeta {
            baseline: r.baseline,
            focal: r.focal,
            pose_id: r.pose_id,
            scene_id: r.scene_id.clone(),
        },
    };
    let ok = [&t.left, &t.right].iter().all(|i| i.same_shape(&t.center))
        && [&t.disparity, &t.depth, &t.ao].iter().all(|m| m.same_extent(&t.center) && m.channels() == 1)
        && (t.valid.width(), t.valid.height()) == (t.width(), t.height())
        && (t.width(), t.height()) == (r.width, r.height);
    if !ok {
        return Err(FactoryError::Format(format!("inconsistent shapes in triplet {}", r.center)));
    }
    Ok(t)
}
