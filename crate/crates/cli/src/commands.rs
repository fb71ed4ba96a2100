use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use isomer::codec::{split_clips, ClipSpec, CodecId, DEFAULT_CLIP_SECONDS};
use isomer::evaluation::{
    evaluate_all, kfold_split, write_distribution_heatmaps, Method, DEFAULT_RANDOM_DRAWS,
};
use isomer::features::{
    extract_features, read_feature_tensor, write_feature_tensor, FeatureTensor, SlicParams,
};
use isomer::frame::EquirectFrame;
use isomer::geometry::{make_grid, Orientation, OrientationGrid};
use isomer::io::{read_frames, write_png_sequence, write_y4m_file};
use isomer::oracle::export::{
    read_bundle_json, write_bundle_json, write_heatmap_csv, write_heatmap_png, write_size_csv,
};
use isomer::oracle::{
    build_size_table, clip_metrics, normalized_sizes, relative_sizes, ClipId, SizeTable,
};
use isomer::predictor::{
    load_model, save_model, train as fit, write_training_log, ModelConfig, PredictorModel,
    TargetScale, TrainConfig,
};
use isomer::projection::project_clip;
use isomer::scenes;
use isomer::{Error, Result};
use log::info;
use serde::{Deserialize, Serialize};

use crate::run_dir::{io_err, RunDir};

const DEFAULT_FPS: f64 = 24.0;

#[derive(Args, Serialize)]
pub struct InputArgs {
    /// Equirectangular video: a .y4m file or a directory of PNG frames.
    #[arg(long)]
    pub input: PathBuf,
    /// Frame rate; defaults to the file's rate, or 24 for PNG input.
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CLIP_SECONDS)]
    pub clip_seconds: f64,
}

#[derive(Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = 5.0)]
    pub yaw_step: f64,
    #[arg(long, default_value_t = 5.0)]
    pub pitch_step: f64,
    #[arg(long, default_value_t = 45.0)]
    pub half_range: f64,
}

impl GridArgs {
    fn grid(&self) -> Result<OrientationGrid> {
        make_grid(self.yaw_step, self.pitch_step, self.half_range)
    }
}

struct Clip {
    id: ClipId,
    frames: Vec<EquirectFrame>,
    partial: bool,
}

struct Video {
    fps: f64,
    clips: Vec<Clip>,
}

fn load_video(a: &InputArgs) -> Result<Video> {
    let (file_fps, planes) = read_frames(&a.input)?;
    let fps = a.fps.or(file_fps).unwrap_or(DEFAULT_FPS);
    let frames = planes
        .into_iter()
        .map(EquirectFrame::new)
        .collect::<Result<Vec<_>>>()?;
    let name = a
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into());
    let clips = split_clips(&frames, fps, a.clip_seconds)?
        .into_iter()
        .enumerate()
        .map(|(i, (frames, partial))| Clip {
            id: ClipId::new(name.clone(), i),
            frames,
            partial,
        })
        .collect();
    Ok(Video { fps, clips })
}

fn clip_stem(id: &ClipId) -> String {
    format!("{}_c{:03}", id.video, id.index)
}

fn parse_codec(s: &str) -> std::result::Result<CodecId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
pub enum SceneKind {
    /// Textured blob drifting across a face seam.
    Seam,
    /// Whole sphere of texture rotating about the vertical axis.
    Pan,
    /// One blob at a random orientation.
    Cue,
    /// Several random blobs.
    Random,
    /// Uniform grey.
    Constant,
}

#[derive(Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "seam")]
    pub scene: SceneKind,
    /// Equirectangular height; width is twice this.
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 48)]
    pub frames: usize,
    #[arg(long, default_value_t = DEFAULT_FPS)]
    pub fps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Blob radius in degrees for `cue` scenes.
    #[arg(long, default_value_t = 30.0)]
    pub radius: f64,
    /// Base name of the output file.
    #[arg(long, default_value = "scene")]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    if a.height == 0 || a.frames == 0 {
        return Err(Error::Config(
            "height and frame count must be positive".into(),
        ));
    }
    let frames = match a.scene {
        SceneKind::Seam => scenes::seam_crosser().render(a.height, a.frames),
        SceneKind::Pan => scenes::panning_sphere(a.height, a.frames, 1.0, a.seed),
        SceneKind::Cue => {
            scenes::planted_cue_corpus(a.seed, 1, a.radius)[0].render(a.height, a.frames)
        }
        SceneKind::Random => scenes::random_scene(a.seed, 4).render(a.height, a.frames),
        SceneKind::Constant => scenes::constant_clip(a.height, a.frames, 128),
    };
    let mut run = RunDir::create(&a.out)?;
    let path = run.artifact(format!("{}.y4m", a.name))?;
    let planes: Vec<_> = frames.iter().map(|f| f.luma().clone()).collect();
    write_y4m_file(&path, &planes, a.fps.round().max(1.0) as u32)?;
    println!("{}", path.display());
    run.finish("generate", &a)
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
pub enum FrameFormat {
    Png,
    Y4m,
}

#[derive(Args, Serialize)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub yaw: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub pitch: f64,
    #[arg(long, default_value_t = 64)]
    pub face_size: usize,
    #[arg(long, value_enum, default_value = "png")]
    pub format: FrameFormat,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn project(a: ProjectArgs) -> Result<()> {
    let (file_fps, planes) = read_frames(&a.input.input)?;
    let fps = a.input.fps.or(file_fps).unwrap_or(DEFAULT_FPS);
    let frames = planes
        .into_iter()
        .map(EquirectFrame::new)
        .collect::<Result<Vec<_>>>()?;
    let cube = project_clip(&frames, Orientation::new(a.yaw, a.pitch), a.face_size)?;
    let planes: Vec<_> = cube.into_iter().map(|c| c.into_luma()).collect();
    let mut run = RunDir::create(&a.out)?;
    match a.format {
        FrameFormat::Png => {
            let dir = run.artifact("frames")?;
            write_png_sequence(&dir, &planes)?;
        }
        FrameFormat::Y4m => {
            let path = run.artifact("cubemap.y4m")?;
            write_y4m_file(&path, &planes, fps.round().max(1.0) as u32)?;
        }
    }
    info!("wrote {} cubemap frames", planes.len());
    run.finish("project", &a)
}

#[derive(Args, Serialize)]
pub struct SearchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value = "reference", value_parser = parse_codec)]
    pub codec: CodecId,
    #[arg(long, default_value_t = 64)]
    pub face_size: usize,
    /// Concurrent encodes.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn search(a: SearchArgs) -> Result<()> {
    let grid = a.grid.grid()?;
    let video = load_video(&a.input)?;
    let mut run = RunDir::create(&a.out)?;
    for clip in &video.clips {
        if clip.partial {
            info!(
                "clip {} is shorter than {} s",
                clip.id, a.input.clip_seconds
            );
        }
        let table = build_size_table(
            &clip.frames,
            &grid,
            a.codec,
            a.face_size,
            video.fps,
            clip.id.clone(),
            a.jobs,
        )?;
        let stem = clip_stem(&clip.id);
        write_size_csv(&run.artifact(format!("tables/{stem}.csv"))?, &table)?;
        write_bundle_json(&run.artifact(format!("tables/{stem}.json"))?, &table)?;
        let norm = normalized_sizes(&table).values;
        write_heatmap_csv(&run.artifact(format!("heatmaps/{stem}.csv"))?, &grid, &norm)?;
        write_heatmap_png(
            &run.artifact(format!("heatmaps/{stem}.png"))?,
            &grid,
            &norm,
            8,
        )?;
        let m = clip_metrics(&table)?;
        println!(
            "{} omega_min {} omega_max {} reduction {:.2}%",
            clip.id, m.omega_min, m.omega_max, m.reduction_percent
        );
    }
    run.finish("search", &a)
}

#[derive(Args, Serialize)]
pub struct SlicArgs {
    #[arg(long, default_value_t = 256)]
    pub superpixels: usize,
    #[arg(long, default_value_t = 1.0)]
    pub compactness: f64,
}

impl SlicArgs {
    fn params(&self) -> SlicParams {
        SlicParams {
            superpixels_per_face: self.superpixels,
            compactness: self.compactness,
            ..SlicParams::default()
        }
    }
}

#[derive(Args, Serialize)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 64)]
    pub face_size: usize,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn clip_features(
    clip: &Clip,
    fps: f64,
    face_size: usize,
    slic: &SlicParams,
) -> Result<FeatureTensor> {
    let cube = project_clip(&clip.frames, Orientation::IDENTITY, face_size)?;
    extract_features(&ClipSpec::new(cube, fps)?, slic)
}

pub fn features(a: FeaturesArgs) -> Result<()> {
    let video = load_video(&a.input)?;
    let slic = a.slic.params();
    let mut run = RunDir::create(&a.out)?;
    for clip in &video.clips {
        let t = clip_features(clip, video.fps, a.face_size, &slic)?;
        let stem = clip_stem(&clip.id);
        let path = run.artifact(format!("features/{stem}.ft"))?;
        run.artifact(format!("features/{stem}.json"))?;
        write_feature_tensor(&path, &t, &clip.id)?;
        info!("{}: tensor {:?}", clip.id, t.shape());
    }
    run.finish("features", &a)
}

/// Size tables from a search run directory (or a directory of bundles), in
/// clip order.
fn load_tables(dir: &Path) -> Result<Vec<SizeTable>> {
    let sub = dir.join("tables");
    let dir = if sub.is_dir() { sub } else { dir.to_path_buf() };
    let mut tables: Vec<SizeTable> = json_files(&dir)?
        .iter()
        .map(|p| read_bundle_json(p).map(|b| b.table))
        .collect::<Result<_>>()?;
    if tables.is_empty() {
        return Err(Error::Input(format!("no size tables in {}", dir.display())));
    }
    tables.sort_by(|a, b| a.clip.cmp(&b.clip));
    Ok(tables)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}

fn load_features(dir: &Path) -> Result<BTreeMap<ClipId, FeatureTensor>> {
    let sub = dir.join("features");
    let dir = if sub.is_dir() { sub } else { dir.to_path_buf() };
    let mut out = BTreeMap::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| io_err(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ft"))
        .collect();
    paths.sort();
    for p in paths {
        let (t, side) = read_feature_tensor(&p)?;
        out.insert(side.clip, t);
    }
    if out.is_empty() {
        return Err(Error::Input(format!(
            "no feature tensors in {}",
            dir.display()
        )));
    }
    Ok(out)
}

#[derive(Args, Serialize)]
pub struct FoldArgs {
    /// Split clips by source video into this many folds (0 = no split).
    #[arg(long, default_value_t = 0)]
    pub folds: usize,
    /// Fold held out from training and used for evaluation.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
}

impl FoldArgs {
    /// Clips kept for training (`held_out = false`) or evaluation.
    fn select(&self, clips: &[ClipId], seed: u64, held_out: bool) -> Result<Vec<ClipId>> {
        if self.folds == 0 {
            return Ok(clips.to_vec());
        }
        if self.fold >= self.folds {
            return Err(Error::Config(format!(
                "fold {} of {}",
                self.fold, self.folds
            )));
        }
        let f = kfold_split(clips, self.folds, seed)?;
        Ok(clips
            .iter()
            .filter(|c| (f.fold_of(c) == Some(self.fold)) == held_out)
            .cloned()
            .collect())
    }
}

#[derive(Args, Serialize)]
pub struct TrainArgs {
    /// Search run directory with size tables.
    #[arg(long)]
    pub tables: PathBuf,
    /// Features run directory.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 4000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// Trunk channels per block.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    pub channels: Vec<usize>,
    /// Give every temporal segment its own trunk.
    #[arg(long)]
    pub unshared_trunk: bool,
    #[command(flatten)]
    pub folds: FoldArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let tables = load_tables(&a.tables)?;
    let features = load_features(&a.features)?;
    let ids: Vec<ClipId> = tables.iter().map(|t| t.clip.clone()).collect();
    let keep = a.folds.select(&ids, a.seed, false)?;
    let mut pairs = Vec::new();
    let mut relatives = Vec::new();
    for t in tables.iter().filter(|t| keep.contains(&t.clip)) {
        let x = features
            .get(&t.clip)
            .ok_or_else(|| Error::Input(format!("no features for clip {}", t.clip)))?;
        relatives.push(relative_sizes(t)?);
        pairs.push(x.clone());
    }
    if pairs.is_empty() {
        return Err(Error::Input("no training clips".into()));
    }
    let scale = TargetScale::from_relative(&relatives)?;
    let data: Vec<_> = pairs
        .into_iter()
        .zip(&relatives)
        .map(|(x, r)| (x, scale.to_target(r)))
        .collect();
    let config = ModelConfig {
        channels: a.channels.clone(),
        shared_trunk: !a.unshared_trunk,
        dropout: a.dropout,
        outputs: tables[0].grid.len(),
        ..ModelConfig::for_input(data[0].0.height, data[0].0.width)
    };
    let mut model = PredictorModel::new(config, scale, a.seed)?;
    let cfg = TrainConfig {
        lr: a.lr,
        iterations: a.iterations,
        batch_size: a.batch_size,
        weight_decay: a.weight_decay,
        seed: a.seed,
        ..TrainConfig::default()
    };
    info!(
        "training on {} clips, {} parameters",
        data.len(),
        model.params.len()
    );
    let log = fit(&mut model, &data, &cfg)?;
    let mut run = RunDir::create(&a.out)?;
    save_model(&run.artifact("model.bin")?, &model)?;
    write_training_log(&run.artifact("training_log.csv")?, &log)?;
    if let (Some(first), Some(last)) = (log.first(), log.last()) {
        println!(
            "loss {:.4} -> {:.4} over {} iterations",
            first.loss,
            last.loss,
            log.len()
        );
    }
    run.finish("train", &a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub clip: ClipId,
    pub theta_deg: f64,
    pub phi_deg: f64,
    /// Predicted size relative to the unrotated clip, in bytes.
    pub predicted_bytes: f64,
    /// Best five orientations as `(theta, phi, predicted bytes)`.
    pub ranking: Vec<(f64, f64, f64)>,
}

#[derive(Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Equirectangular video to predict for.
    #[arg(long, conflicts_with = "features")]
    pub input: Option<PathBuf>,
    /// Features run directory, instead of a video.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CLIP_SECONDS)]
    pub clip_seconds: f64,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let grid = a.grid.grid()?;
    if grid.len() != model.config.outputs {
        return Err(Error::Input(format!(
            "model predicts {} orientations but the grid has {}",
            model.config.outputs,
            grid.len()
        )));
    }
    let inputs: Vec<(ClipId, FeatureTensor)> = match (&a.input, &a.features) {
        (Some(input), None) => {
            let video = load_video(&InputArgs {
                input: input.clone(),
                fps: a.fps,
                clip_seconds: a.clip_seconds,
            })?;
            // features are 1/8 of a 3N x 2N cubemap
            let face_size = model.config.input_height * 4;
            let slic = a.slic.params();
            video
                .clips
                .iter()
                .map(|c| Ok((c.id.clone(), clip_features(c, video.fps, face_size, &slic)?)))
                .collect::<Result<_>>()?
        }
        (None, Some(dir)) => load_features(dir)?.into_iter().collect(),
        _ => {
            return Err(Error::Config(
                "give exactly one of --input or --features".into(),
            ))
        }
    };
    let mut out = Vec::new();
    for (clip, x) in &inputs {
        let scores = model.predict(x)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
        let bytes = |i: usize| model.scale.to_bytes(scores[i]);
        let best = grid.get(order[0]);
        let p = Prediction {
            clip: clip.clone(),
            theta_deg: best.pitch_deg,
            phi_deg: best.yaw_deg,
            predicted_bytes: bytes(order[0]),
            ranking: order
                .iter()
                .take(5)
                .map(|&i| (grid.get(i).pitch_deg, grid.get(i).yaw_deg, bytes(i)))
                .collect(),
        };
        println!("{} {} {:.1}", p.theta_deg, p.phi_deg, p.predicted_bytes);
        out.push(p);
    }
    let mut run = RunDir::create(&a.out)?;
    let path = run.artifact("predictions.json")?;
    std::fs::write(&path, serde_json::to_string_pretty(&out)?).map_err(|e| io_err(&path, e))?;
    run.finish("predict", &a)
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    /// Search run directory with size tables.
    #[arg(long)]
    pub tables: PathBuf,
    /// `predictions.json` from the predict command.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Comma-separated methods, or `all`.
    #[arg(long, default_value = "all")]
    pub method: String,
    /// Codec the predictor was trained on, when scoring against another codec.
    #[arg(long, value_parser = parse_codec)]
    pub train_codec: Option<CodecId>,
    #[arg(long, default_value_t = DEFAULT_RANDOM_DRAWS)]
    pub draws: usize,
    #[command(flatten)]
    pub folds: FoldArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut methods: Vec<Method> = if a.method.eq_ignore_ascii_case("all") {
        Method::ALL.to_vec()
    } else {
        a.method
            .split(',')
            .map(|m| m.trim().parse())
            .collect::<Result<_>>()?
    };
    let all_tables = load_tables(&a.tables)?;
    let ids: Vec<ClipId> = all_tables.iter().map(|t| t.clip.clone()).collect();
    let keep = a.folds.select(&ids, a.seed, true)?;
    let tables: Vec<SizeTable> = all_tables
        .into_iter()
        .filter(|t| keep.contains(&t.clip))
        .collect();
    let predictions: Option<BTreeMap<ClipId, Orientation>> = match &a.predictions {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let list: Vec<Prediction> = serde_json::from_str(&text)?;
            Some(
                list.into_iter()
                    .map(|p| (p.clip, Orientation::new(p.phi_deg, p.theta_deg)))
                    .collect(),
            )
        }
        None => {
            if a.method.eq_ignore_ascii_case("all") {
                methods.retain(|&m| m != Method::Predicted);
            }
            None
        }
    };
    let mut report = evaluate_all(&methods, &tables, predictions.as_ref(), a.seed, a.draws)?;
    report.train_codec = a.train_codec;
    if a.folds.folds > 0 {
        report.folds = Some(kfold_split(&ids, a.folds.folds, a.seed)?);
    }
    let mut run = RunDir::create(&a.out)?;
    report.write_json(&run.artifact("report.json")?)?;
    let table = report.to_table();
    let path = run.artifact("report.txt")?;
    std::fs::write(&path, &table).map_err(|e| io_err(&path, e))?;
    if let Some(p) = &predictions {
        run.artifact("true_omega_min.csv")?;
        run.artifact("predicted_omega_min.csv")?;
        let held: BTreeMap<ClipId, Orientation> = p
            .iter()
            .filter(|(c, _)| keep.contains(c))
            .map(|(c, o)| (c.clone(), *o))
            .collect();
        write_distribution_heatmaps(&a.out, &tables, &held)?;
    }
    print!("{table}");
    run.finish("eval", &a)
}
