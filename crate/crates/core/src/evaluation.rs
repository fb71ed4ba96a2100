//! Scoring orientation choices against oracle size tables.
//!
//! For one video, with `S_max` and `S_min` the sums over its clips of the
//! per-clip largest and smallest sizes and `S` the summed size of the chosen
//! orientations, the normalized size reduction is
//! `r~ = 100 * (1 - (S - S_min) / (S_max - S_min))`. A method's score is the
//! mean of `r~` over videos; videos whose clips are all flat (`S_max = S_min`)
//! are left out because every choice is optimal there.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::CodecId;
use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::geometry::{Orientation, OrientationGrid};
use crate::oracle::export::write_heatmap_csv;
use crate::oracle::{ClipId, SizeTable};
use crate::predictor::PredictorModel;

pub const DEFAULT_RANDOM_DRAWS: usize = 1000;
pub const DEFAULT_FOLDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Random,
    Center,
    Predicted,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Random,
        Method::Center,
        Method::Predicted,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "RANDOM",
            Method::Center => "CENTER",
            Method::Predicted => "PREDICTED",
            Method::Oracle => "ORACLE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Orientation chosen for one clip and the size it achieves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipChoice {
    pub clip: ClipId,
    pub method: Method,
    pub orientation: Orientation,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: Method,
    /// Mean over videos.
    pub r_tilde: f64,
    pub per_video: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub codec: CodecId,
    /// Codec whose tables the predictor was trained on, for transfer runs.
    pub train_codec: Option<CodecId>,
    pub scores: Vec<MethodScore>,
    pub choices: Vec<ClipChoice>,
    pub folds: Option<FoldAssignment>,
}

impl EvalReport {
    pub fn score(&self, m: Method) -> Option<f64> {
        self.scores
            .iter()
            .find(|s| s.method == m)
            .map(|s| s.r_tilde)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        match self.train_codec {
            Some(train) => {
                let _ = writeln!(out, "trained on {train}, scored on {}", self.codec);
            }
            None => {
                let _ = writeln!(out, "codec {}", self.codec);
            }
        }
        let _ = writeln!(out, "{:<10} {:>8}", "method", "r~");
        for s in &self.scores {
            let _ = writeln!(out, "{:<10} {:>8.2}", s.method.name(), s.r_tilde);
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn check_tables(tables: &[SizeTable]) -> Result<&OrientationGrid> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Input("no size tables to evaluate".into()))?;
    let mut seen = BTreeSet::new();
    for t in tables {
        if t.grid != first.grid {
            return Err(Error::Input("size tables use different grids".into()));
        }
        if !seen.insert(&t.clip) {
            return Err(Error::Input(format!("clip {} appears twice", t.clip)));
        }
    }
    Ok(&first.grid)
}

/// Per-video and mean `r~` for per-clip achieved sizes (same order as `tables`).
pub fn score_choices(tables: &[SizeTable], achieved: &[f64]) -> (f64, BTreeMap<String, f64>) {
    let mut sums: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
    for (t, &a) in tables.iter().zip(achieved) {
        let e = sums.entry(t.clip.video.as_str()).or_default();
        e.0 += t.max() as f64;
        e.1 += t.min() as f64;
        e.2 += a;
    }
    let per_video: BTreeMap<String, f64> = sums
        .into_iter()
        .filter(|(_, (max, min, _))| max > min)
        .map(|(v, (max, min, s))| (v.to_string(), 100.0 * (1.0 - (s - min) / (max - min))))
        .collect();
    let mean = if per_video.is_empty() {
        100.0
    } else {
        per_video.values().sum::<f64>() / per_video.len() as f64
    };
    (mean, per_video)
}

/// Scores one method. RANDOM picks a uniform grid orientation per clip and is
/// averaged over `random_draws` seeded draws; PREDICTED needs `predictions`.
pub fn evaluate(
    method: Method,
    tables: &[SizeTable],
    predictions: Option<&BTreeMap<ClipId, Orientation>>,
    seed: u64,
    random_draws: usize,
) -> Result<(MethodScore, Vec<ClipChoice>)> {
    let grid = check_tables(tables)?;
    if method == Method::Random {
        if random_draws == 0 {
            return Err(Error::Config("RANDOM needs at least one draw".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        let mut per_video: BTreeMap<String, f64> = BTreeMap::new();
        for _ in 0..random_draws {
            let achieved: Vec<f64> = tables
                .iter()
                .map(|t| t.sizes[rng.gen_range(0..grid.len())] as f64)
                .collect();
            let (mean, pv) = score_choices(tables, &achieved);
            total += mean;
            for (v, r) in pv {
                *per_video.entry(v).or_default() += r;
            }
        }
        let n = random_draws as f64;
        per_video.values_mut().for_each(|r| *r /= n);
        let score = MethodScore {
            method,
            r_tilde: total / n,
            per_video,
        };
        return Ok((score, Vec::new()));
    }

    let choices = tables
        .iter()
        .map(|t| {
            let index = match method {
                Method::Center => t
                    .grid
                    .index_of(Orientation::IDENTITY)
                    .ok_or_else(|| Error::Input("grid has no (0, 0) orientation".into()))?,
                Method::Oracle => t.argmin(),
                Method::Predicted => {
                    let preds = predictions
                        .ok_or_else(|| Error::Input("PREDICTED needs model predictions".into()))?;
                    let o = preds.get(&t.clip).ok_or_else(|| {
                        Error::Input(format!("no prediction for clip {}", t.clip))
                    })?;
                    t.grid
                        .index_of(*o)
                        .ok_or_else(|| Error::Input(format!("prediction {o} is not on the grid")))?
                }
                Method::Random => unreachable!(),
            };
            Ok(ClipChoice {
                clip: t.clip.clone(),
                method,
                orientation: t.grid.get(index),
                bytes: t.sizes[index],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let achieved: Vec<f64> = choices.iter().map(|c| c.bytes as f64).collect();
    let (r_tilde, per_video) = score_choices(tables, &achieved);
    Ok((
        MethodScore {
            method,
            r_tilde,
            per_video,
        },
        choices,
    ))
}

/// Scores several methods into one report.
pub fn evaluate_all(
    methods: &[Method],
    tables: &[SizeTable],
    predictions: Option<&BTreeMap<ClipId, Orientation>>,
    seed: u64,
    random_draws: usize,
) -> Result<EvalReport> {
    let codec = tables
        .first()
        .ok_or_else(|| Error::Input("no size tables to evaluate".into()))?
        .codec;
    let mut scores = Vec::new();
    let mut choices = Vec::new();
    for &m in methods {
        let (s, c) = evaluate(m, tables, predictions, seed, random_draws)?;
        scores.push(s);
        choices.extend(c);
    }
    Ok(EvalReport {
        codec,
        train_codec: None,
        scores,
        choices,
        folds: None,
    })
}

/// Model predictions for each clip's features.
pub fn predict_all(
    model: &PredictorModel,
    features: &[(ClipId, FeatureTensor)],
    grid: &OrientationGrid,
) -> Result<BTreeMap<ClipId, Orientation>> {
    features
        .iter()
        .map(|(id, x)| Ok((id.clone(), model.predict_orientation(x, grid)?)))
        .collect()
}

/// Scores a model trained on `train_codec` tables against tables from another
/// codec.
pub fn transfer_eval(
    model: &PredictorModel,
    train_codec: CodecId,
    features: &[(ClipId, FeatureTensor)],
    tables: &[SizeTable],
) -> Result<EvalReport> {
    let grid = check_tables(tables)?;
    if model.config.outputs != grid.len() {
        return Err(Error::Input(format!(
            "model predicts {} orientations, tables hold {}",
            model.config.outputs,
            grid.len()
        )));
    }
    let predictions = predict_all(model, features, grid)?;
    let mut report = evaluate_all(&[Method::Predicted], tables, Some(&predictions), 0, 1)?;
    report.train_codec = Some(train_codec);
    Ok(report)
}

/// Videos assigned to folds; all clips of a video share its fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub video_fold: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, clip: &ClipId) -> Option<usize> {
        self.video_fold.get(&clip.video).copied()
    }

    /// Clips split into (training, held-out) for fold `f`.
    pub fn split<'a>(&self, clips: &'a [ClipId], f: usize) -> (Vec<&'a ClipId>, Vec<&'a ClipId>) {
        clips.iter().partition(|c| self.fold_of(c) != Some(f))
    }
}

/// Shuffles the distinct videos with `seed` and deals them round-robin into
/// `k` folds.
pub fn kfold_split(clips: &[ClipId], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 {
        return Err(Error::Config("need at least one fold".into()));
    }
    let videos: BTreeSet<&str> = clips.iter().map(|c| c.video.as_str()).collect();
    if videos.len() < k {
        return Err(Error::Input(format!(
            "{} source videos cannot fill {k} folds",
            videos.len()
        )));
    }
    let mut order: Vec<&str> = videos.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(FoldAssignment {
        k,
        video_fold: order
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v.to_string(), i % k))
            .collect(),
    })
}

/// How often each grid orientation occurs, in grid order.
pub fn orientation_histogram(
    orientations: &[Orientation],
    grid: &OrientationGrid,
) -> Result<Vec<f64>> {
    let mut h = vec![0.0; grid.len()];
    for &o in orientations {
        let i = grid
            .index_of(o)
            .ok_or_else(|| Error::Input(format!("{o} is not on the grid")))?;
        h[i] += 1.0;
    }
    Ok(h)
}

/// Writes `true_omega_min.csv` and `predicted_omega_min.csv` heatmaps.
pub fn write_distribution_heatmaps(
    dir: &Path,
    tables: &[SizeTable],
    predictions: &BTreeMap<ClipId, Orientation>,
) -> Result<()> {
    let grid = check_tables(tables)?;
    let truth: Vec<Orientation> = tables.iter().map(|t| t.grid.get(t.argmin())).collect();
    let predicted: Vec<Orientation> = predictions.values().copied().collect();
    write_heatmap_csv(
        &dir.join("true_omega_min.csv"),
        grid,
        &orientation_histogram(&truth, grid)?,
    )?;
    write_heatmap_csv(
        &dir.join("predicted_omega_min.csv"),
        grid,
        &orientation_histogram(&predicted, grid)?,
    )
}
