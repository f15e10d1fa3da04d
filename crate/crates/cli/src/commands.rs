use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use nsf_core::eval::{evaluate, occlusion_mask, report, EvalMask};
use nsf_core::factory::{
    analytic_triplet, build_dataset, export_triplets, load_triplet, read_manifest, read_pfm, read_png_rgb, write_pfm,
    write_png_rgb, DisparityHistogram, ExportConfig, SceneSource, MANIFEST_FILE,
};
use nsf_core::field::{load_checkpoint, save_checkpoint, FieldConfig};
use nsf_core::geometry::{parse_colmap_text, read_pose_file, serialize_colmap_text, ColmapView, StereoRig};
use nsf_core::nsloss::{DisparityWeighting, LossConfig, PhotometricMode};
use nsf_core::scenegen::{make_fixture_at, FixtureName, FIXTURE_RESOLUTION, FRONTAL_VIEW};
use nsf_core::stereo::{self, optimize_disparity, InitFill, OptimizeConfig};
use nsf_core::trainer::{self, fit, HoldoutView, SceneDataset, TrainConfig};
use nsf_core::{Image, Mask};

use crate::config::{layered, usage, write_resolved};
use crate::Globals;

pub const CHECKPOINT_FILE: &str = "field.nsf";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Posed images stored as `images/<name>` plus a COLMAP text model in
/// `sparse/`.
fn read_posed_images(dir: &Path) -> Result<(Vec<ColmapView<f64>>, Vec<Image<f32>>)> {
    let sparse = dir.join("sparse");
    let views = parse_colmap_text::<f64>(&read_bytes(&sparse.join("cameras.txt"))?, &read_bytes(&sparse.join("images.txt"))?)
        .with_context(|| format!("parsing camera model in {}", sparse.display()))?;
    let images = views
        .iter()
        .map(|v| {
            let p = dir.join("images").join(&v.name);
            read_png_rgb(&p).with_context(|| format!("reading {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((views, images))
}

fn read_views(dir: &Path) -> Result<Vec<ColmapView<f64>>> {
    let sparse = dir.join("sparse");
    parse_colmap_text::<f64>(&read_bytes(&sparse.join("cameras.txt"))?, &read_bytes(&sparse.join("images.txt"))?)
        .with_context(|| format!("parsing camera model in {}", sparse.display()))
}

fn write_views(dir: &Path, views: &[ColmapView<f64>]) -> Result<()> {
    let sparse = dir.join("sparse");
    fs::create_dir_all(&sparse)?;
    let (cams, imgs) = serialize_colmap_text(views);
    fs::write(sparse.join("cameras.txt"), cams)?;
    fs::write(sparse.join("images.txt"), imgs)?;
    Ok(())
}

// ---------------------------------------------------------------- gen-fixture

#[derive(Debug, Args)]
pub struct GenFixtureArgs {
    /// plane, occluder or textured_cube.
    #[arg(long)]
    name: Option<FixtureName>,
    #[arg(long)]
    seed: Option<u64>,
    /// Image width and height.
    #[arg(long)]
    resolution: Option<usize>,
    /// Baselines of the exact GT triplets, comma separated.
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenFixtureConfig {
    pub name: FixtureName,
    pub seed: u64,
    pub resolution: usize,
    pub baselines: Vec<f64>,
}

impl Default for GenFixtureConfig {
    fn default() -> Self {
        Self {
            name: FixtureName::TexturedCube,
            seed: 0,
            resolution: FIXTURE_RESOLUTION,
            baselines: ExportConfig::default().baselines,
        }
    }
}

pub fn gen_fixture(g: &Globals, a: GenFixtureArgs) -> Result<()> {
    let mut cfg = layered(GenFixtureConfig::default(), g.config.as_deref())?;
    if let Some(v) = a.name {
        cfg.name = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.resolution {
        cfg.resolution = v;
    }
    if let Some(v) = a.baselines {
        cfg.baselines = v;
    }
    if cfg.resolution == 0 {
        return Err(usage("resolution must be positive"));
    }
    let export = ExportConfig {
        baselines: cfg.baselines.clone(),
        ..ExportConfig::default()
    };
    export.validate().map_err(|e| usage(e.to_string()))?;
    write_resolved(&a.out, "gen-fixture", g.threads, &cfg)?;

    let fx = make_fixture_at(cfg.name, cfg.seed, cfg.resolution);
    let images = a.out.join("images");
    fs::create_dir_all(&images)?;
    let mut views = Vec::with_capacity(fx.poses.len());
    for (i, (pose, view)) in fx.poses.iter().zip(&fx.views).enumerate() {
        let name = format!("view_{i:03}.png");
        write_png_rgb(&view.color.cast(), &images.join(&name))?;
        views.push(ColmapView {
            image_id: i as u32 + 1,
            camera_id: 1,
            name,
            intrinsics: fx.intrinsics,
            pose: *pose,
        });
    }
    write_views(&a.out, &views)?;

    let triplets = cfg
        .baselines
        .iter()
        .map(|&b| {
            let rig = StereoRig::new(b).map_err(|e| usage(e.to_string()))?;
            let mut t = analytic_triplet(&fx.scene, fx.frontal_pose(), &fx.intrinsics, &rig);
            t.meta.pose_id = FRONTAL_VIEW;
            t.meta.scene_id = cfg.name.to_string();
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = export_triplets(&triplets, &export, &a.out.join("gt"))?;
    log::info!(
        "wrote {} views and {} exact triplets to {}",
        views.len(),
        manifest.records.len(),
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- fit-nerf

#[derive(Debug, Args)]
pub struct FitNerfArgs {
    /// Directory with images/ and sparse/ (e.g. from gen-fixture).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    rays: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Index (in image-id order) of a view withheld for PSNR tracking.
    #[arg(long)]
    holdout: Option<usize>,
    /// Fix the gradient reduction order regardless of thread count.
    #[arg(long)]
    deterministic: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub holdout: Option<usize>,
    pub field: FieldConfig,
    pub train: TrainConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            holdout: None,
            field: FieldConfig::hash_default(),
            train: TrainConfig::default(),
        }
    }
}

pub fn fit_nerf(g: &Globals, a: FitNerfArgs) -> Result<()> {
    let mut cfg = layered(FitConfig::default(), g.config.as_deref())?;
    if let Some(v) = a.steps {
        cfg.train.steps = v;
    }
    if let Some(v) = a.rays {
        cfg.train.rays_per_batch = v;
    }
    if let Some(v) = a.samples {
        cfg.train.samples = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = a.deterministic {
        cfg.train.deterministic = v;
    }
    if a.holdout.is_some() {
        cfg.holdout = a.holdout;
    }
    cfg.train.validate().map_err(|e| usage(e.to_string()))?;
    cfg.field.validate().map_err(usage)?;

    let (views, images) = read_posed_images(&a.data)?;
    if let Some(h) = cfg.holdout {
        if h >= views.len() {
            return Err(usage(format!("holdout {h} out of range for {} views", views.len())));
        }
    }
    write_resolved(&a.out, "fit-nerf", g.threads, &cfg)?;

    let keep: Vec<usize> = (0..views.len()).filter(|&i| Some(i) != cfg.holdout).collect();
    let dataset = SceneDataset::new(
        keep.iter().map(|&i| images[i].clone()).collect(),
        keep.iter().map(|&i| views[i].intrinsics.cast()).collect(),
        keep.iter().map(|&i| views[i].pose.cast()).collect(),
    )?;
    let holdout = cfg.holdout.map(|h| HoldoutView {
        image: images[h].clone(),
        intrinsics: views[h].intrinsics.cast(),
        pose: views[h].pose.cast(),
    });
    log::info!("fitting {} views for {} steps", dataset.len(), cfg.train.steps);
    let outcome = fit(&dataset, &cfg.field, &cfg.train, holdout.as_ref())?;

    save_checkpoint(&outcome.field, &a.out.join(CHECKPOINT_FILE))?;
    trainer::write_trace_csv(&outcome.trace, create(&a.out.join("trace.csv"))?)?;
    let train_views: Vec<_> = keep.iter().map(|&i| views[i].clone()).collect();
    write_views(&a.out, &train_views)?;
    if let Some(p) = outcome.final_holdout_psnr() {
        println!("holdout PSNR {p:.2} dB");
    }
    if let Some(last) = outcome.trace.last() {
        println!("final loss {:.6}", last.loss);
    }
    Ok(())
}

// ---------------------------------------------------------------- export-dataset

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// fit-nerf output directory; repeat for several scenes.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Pose file of novel center poses used for every run instead of the
    /// training cameras.
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
    #[arg(long)]
    samples: Option<usize>,
    /// Keep only the first N poses per scene.
    #[arg(long)]
    max_poses: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportCliConfig {
    pub max_poses: Option<usize>,
    pub export: ExportConfig,
}

pub fn export_dataset(g: &Globals, a: ExportArgs) -> Result<()> {
    let mut cfg = layered(ExportCliConfig::default(), g.config.as_deref())?;
    if let Some(v) = a.baselines {
        cfg.export.baselines = v;
    }
    if let Some(v) = a.resolutions {
        cfg.export.resolutions = v;
    }
    if let Some(v) = a.samples {
        cfg.export.samples = v;
    }
    if a.max_poses.is_some() {
        cfg.max_poses = a.max_poses;
    }
    cfg.export.validate().map_err(|e| usage(e.to_string()))?;

    let novel = match &a.poses {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let records = read_pose_file::<f32>(&text).with_context(|| format!("parsing {}", p.display()))?;
            if records.is_empty() {
                bail!("pose file {} is empty", p.display());
            }
            Some(records)
        }
        None => None,
    };

    let mut fields = Vec::with_capacity(a.runs.len());
    let mut meta = Vec::with_capacity(a.runs.len());
    for run in &a.runs {
        let path = run.join(CHECKPOINT_FILE);
        fields.push(load_checkpoint::<f32>(&path).with_context(|| format!("loading {}", path.display()))?);
        let id = run
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into());
        let (intrinsics, mut poses) = match &novel {
            Some(records) => (records[0].intrinsics, records.iter().map(|r| r.pose).collect::<Vec<_>>()),
            None => {
                let views = read_views(run)?;
                let first = views.first().with_context(|| format!("no cameras in {}", run.display()))?;
                (first.intrinsics.cast(), views.iter().map(|v| v.pose.cast()).collect())
            }
        };
        if let Some(m) = cfg.max_poses {
            poses.truncate(m);
        }
        meta.push((id, intrinsics, poses));
    }
    let scenes: Vec<SceneSource<'_, f32>> = fields
        .iter()
        .zip(meta)
        .map(|(field, (id, intrinsics, poses))| SceneSource {
            id,
            field,
            intrinsics,
            poses,
        })
        .collect();

    write_resolved(&a.out, "export-dataset", g.threads, &cfg)?;
    let manifest = build_dataset(&scenes, &cfg.export, &a.out)?;
    log::info!("exported {} triplets to {}", manifest.records.len(), a.out.display());
    if let Some((lo, hi)) = manifest.header.histogram.support() {
        println!("{} triplets, disparity support [{lo:.1}, {hi:.1}) px", manifest.records.len());
    }
    Ok(())
}

// ---------------------------------------------------------------- optimize

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PhotometricArg {
    None,
    RightPair,
    RightPairAutomask,
    Triplet,
}

impl From<PhotometricArg> for PhotometricMode {
    fn from(p: PhotometricArg) -> Self {
        match p {
            PhotometricArg::None => Self::None,
            PhotometricArg::RightPair => Self::RightPair { automask: false },
            PhotometricArg::RightPairAutomask => Self::RightPair { automask: true },
            PhotometricArg::Triplet => Self::Triplet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightingArg {
    None,
    Binary,
    Eta,
}

impl From<WeightingArg> for DisparityWeighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::None => Self::None,
            WeightingArg::Binary => Self::Binary,
            WeightingArg::Eta => Self::Eta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FillArg {
    Zero,
    Background,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// manifest.jsonl of an exported dataset, or its directory.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Record index to optimize; repeatable. Defaults to all.
    #[arg(long = "index")]
    indices: Vec<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long, value_enum)]
    init_fill: Option<FillArg>,
    #[arg(long, value_enum)]
    photometric: Option<PhotometricArg>,
    #[arg(long, value_enum)]
    weighting: Option<WeightingArg>,
    /// AO threshold of the disparity gate.
    #[arg(long)]
    th: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma_3rho: Option<f64>,
    #[arg(long)]
    gamma_disp: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeCliConfig {
    pub loss: LossConfig,
    pub optimize: OptimizeConfig,
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

pub fn optimize(g: &Globals, a: OptimizeArgs) -> Result<()> {
    let mut cfg = layered(OptimizeCliConfig::default(), g.config.as_deref())?;
    let (l, o) = (&mut cfg.loss, &mut cfg.optimize);
    if let Some(v) = a.steps {
        o.steps = v;
    }
    if let Some(v) = a.lr {
        o.lr = v;
    }
    if let Some(v) = a.d_max {
        o.d_max = v;
    }
    if let Some(v) = a.init_fill {
        o.init_fill = match v {
            FillArg::Zero => InitFill::Zero,
            FillArg::Background => InitFill::Background,
        };
    }
    if let Some(v) = a.photometric {
        l.photometric = v.into();
    }
    if let Some(v) = a.weighting {
        l.weighting = v.into();
    }
    if let Some(v) = a.th {
        l.th = v;
    }
    if let Some(v) = a.beta {
        l.beta = v;
    }
    if let Some(v) = a.gamma_3rho {
        l.gamma_3rho = v;
    }
    if let Some(v) = a.gamma_disp {
        l.gamma_disp = v;
    }
    cfg.loss.validate().map_err(|e| usage(e.to_string()))?;
    cfg.optimize.matcher.validate().map_err(|e| usage(e.to_string()))?;
    if !(cfg.optimize.lr > 0.0 && cfg.optimize.d_max > 0.0) {
        return Err(usage("lr and d_max must be positive"));
    }

    let mpath = manifest_path(&a.manifest);
    let manifest = read_manifest(&mpath).with_context(|| format!("reading {}", mpath.display()))?;
    let root = mpath.parent().unwrap_or(Path::new("."));
    let indices: Vec<usize> = if a.indices.is_empty() {
        (0..manifest.records.len()).collect()
    } else {
        a.indices.clone()
    };
    if let Some(&bad) = indices.iter().find(|&&i| i >= manifest.records.len()) {
        return Err(usage(format!("index {bad} out of range for {} records", manifest.records.len())));
    }
    write_resolved(&a.out, "optimize", g.threads, &cfg)?;

    let mut summary = create(&a.out.join("summary.csv"))?;
    writeln!(summary, "index,scene_id,pose_id,baseline,width,height,loss_initial,loss_final,bad_rendered_initial,bad_rendered_final")?;
    for i in indices {
        let rec = &manifest.records[i];
        let t = load_triplet(root, rec)?.cast::<f64>();
        let out = optimize_disparity(&t, &cfg.loss, &cfg.optimize, None)?;
        write_pfm(&out.disparity.cast(), &a.out.join(format!("{i:04}_disp.pfm")))?;
        stereo::write_trace_csv(&out.trace, create(&a.out.join(format!("{i:04}_trace.csv")))?)?;
        let (first, last) = (&out.trace[0], out.final_row());
        let pct = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        writeln!(
            summary,
            "{i},{},{},{},{},{},{:.8},{:.8},{},{}",
            rec.scene_id,
            rec.pose_id,
            rec.baseline,
            rec.width,
            rec.height,
            first.loss,
            last.loss,
            pct(first.bad_rendered),
            pct(last.bad_rendered)
        )?;
        log::info!("record {i}: loss {:.5} -> {:.5}", first.loss, last.loss);
    }
    summary.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted disparity PFM; repeatable.
    #[arg(long = "pred", required = true)]
    preds: Vec<PathBuf>,
    /// Ground-truth disparity PFM, one per prediction.
    #[arg(long = "gt", required = true)]
    gts: Vec<PathBuf>,
    /// Right-view GT disparity used to derive the non-occluded region.
    #[arg(long = "gt-right")]
    gt_rights: Vec<PathBuf>,
    /// Row label per prediction; defaults to the prediction file stem.
    #[arg(long = "name")]
    names: Vec<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub tau: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tau: nsf_core::eval::TAU_MIDDLEBURY,
        }
    }
}

pub fn eval(g: &Globals, a: EvalArgs) -> Result<()> {
    let mut cfg = layered(EvalConfig::default(), g.config.as_deref())?;
    if let Some(v) = a.tau {
        cfg.tau = v;
    }
    if !(cfg.tau > 0.0) {
        return Err(usage("tau must be positive"));
    }
    if a.preds.len() != a.gts.len() {
        return Err(usage("need one --gt per --pred"));
    }
    if !a.gt_rights.is_empty() && a.gt_rights.len() != a.preds.len() {
        return Err(usage("--gt-right must be given for every prediction or none"));
    }
    if !a.names.is_empty() && a.names.len() != a.preds.len() {
        return Err(usage("--name must be given for every prediction or none"));
    }
    write_resolved(&a.out, "eval", g.threads, &cfg)?;

    let mut records = Vec::with_capacity(a.preds.len());
    for (k, (pred_path, gt_path)) in a.preds.iter().zip(&a.gts).enumerate() {
        let pred = read_pfm(pred_path).with_context(|| format!("reading {}", pred_path.display()))?;
        let gt = read_pfm(gt_path).with_context(|| format!("reading {}", gt_path.display()))?;
        let valid = Mask::from_vec(
            gt.width(),
            gt.height(),
            gt.as_slice().iter().map(|d| d.is_finite() && *d > 0.0).collect(),
        );
        let mask = match a.gt_rights.get(k) {
            Some(p) => {
                let right = read_pfm(p).with_context(|| format!("reading {}", p.display()))?;
                if !right.same_shape(&gt) {
                    bail!("{} and {} differ in shape", p.display(), gt_path.display());
                }
                EvalMask::new(valid, &occlusion_mask(&gt, &right))
            }
            None => EvalMask::all_valid(valid),
        };
        let name = a.names.get(k).cloned().unwrap_or_else(|| {
            pred_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("pred{k}"))
        });
        records.push(evaluate(&name, &pred, &gt, cfg.tau, &mask).with_context(|| format!("evaluating {name}"))?);
    }
    let mut text = Vec::new();
    report(&records, &mut text, create(&a.out.join("eval.csv"))?)?;
    fs::write(a.out.join("eval.txt"), &text)?;
    print!("{}", String::from_utf8_lossy(&text));
    Ok(())
}

// ---------------------------------------------------------------- plot-hist

#[derive(Debug, Args)]
pub struct PlotHistArgs {
    /// manifest.jsonl of an exported dataset, or its directory.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistConfig {
    pub bin_width: f64,
    pub bins: usize,
    pub png_height: u32,
    pub bar_px: u32,
}

impl Default for HistConfig {
    fn default() -> Self {
        let e = ExportConfig::default();
        Self {
            bin_width: e.histogram_bin_width,
            bins: e.histogram_bins,
            png_height: 200,
            bar_px: 4,
        }
    }
}

pub fn plot_hist(g: &Globals, a: PlotHistArgs) -> Result<()> {
    let mut cfg = layered(HistConfig::default(), g.config.as_deref())?;
    if let Some(v) = a.bin_width {
        cfg.bin_width = v;
    }
    if let Some(v) = a.bins {
        cfg.bins = v;
    }
    if !(cfg.bin_width > 0.0) || cfg.bins == 0 || cfg.png_height == 0 || cfg.bar_px == 0 {
        return Err(usage("bin_width, bins, png_height and bar_px must be positive"));
    }
    let mpath = manifest_path(&a.manifest);
    let manifest = read_manifest(&mpath).with_context(|| format!("reading {}", mpath.display()))?;
    let root = mpath.parent().unwrap_or(Path::new("."));
    write_resolved(&a.out, "plot-hist", g.threads, &cfg)?;

    let mut hist = DisparityHistogram::new(cfg.bin_width, cfg.bins);
    for rec in &manifest.records {
        let t = load_triplet(root, rec)?;
        for (&d, &ok) in t.disparity.as_slice().iter().zip(t.valid.as_slice()) {
            if ok {
                hist.add(d as f64);
            }
        }
    }
    hist.write_csv(create(&a.out.join("hist.csv"))?)?;
    hist.write_png(&a.out.join("hist.png"), cfg.png_height, cfg.bar_px)?;
    match hist.support() {
        Some((lo, hi)) => println!("{} valid pixels, disparity support [{lo:.1}, {hi:.1}) px", hist.total()),
        None => println!("no valid pixels"),
    }
    Ok(())
}
