//! Two-stage pipeline: margin points -> relaxed box -> normalized working
//! crop -> cue map -> initial probabilities -> stage-1 mask, then click
//! rounds of fusion + CRF, with masks pasted back to native resolution.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{resample_mask, BinaryMask, BoundingBox, Connectivity, GridIndex, ScalarGrid, Shape};
use crate::interaction::{infer_relaxed_bbox, robot_refine_clicks};
use crate::metrics::{score, Scores};
use crate::provider::{baseline_from_cue, ProbabilityPair};
use crate::refine::{fuse, solve_crf, CrfParams, FusionInputs, Labeling, DEFAULT_D_MISSING};
use crate::seeds::{Label, Seed, SeedSet};
use crate::transforms::{CueMap, Encoding};

pub fn default_working_dims(rank: usize) -> Vec<usize> {
    if rank == 3 {
        vec![64, 96, 96]
    } else {
        vec![64, 64]
    }
}

pub fn default_bbox_margin(rank: usize) -> usize {
    if rank == 3 {
        3
    } else {
        5
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    /// Working resolution; chosen by rank when absent.
    pub working_dims: Option<Vec<usize>>,
    /// Relaxed-box margin; chosen by rank when absent.
    pub bbox_margin: Option<usize>,
    pub crf: CrfParams,
    pub d_missing: f64,
    /// Neighborhood for geodesic transforms.
    pub connectivity: Connectivity,
    pub encoding: Encoding,
    /// When false the CRF runs on the initial probabilities directly.
    pub fusion: bool,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            working_dims: None,
            bbox_margin: None,
            crf: CrfParams::default(),
            d_missing: DEFAULT_D_MISSING,
            connectivity: Connectivity::Face,
            encoding: Encoding::Egd,
            fusion: true,
        }
    }
}

/// Resolved source of initial probabilities.
#[derive(Clone, Debug)]
pub enum Provider {
    /// Foreground probabilities at native resolution.
    File(ProbabilityPair),
    Baseline,
}

/// The crop/resample context linking native and working coordinates.
#[derive(Clone, Debug)]
pub struct WorkingFrame {
    pub native_shape: Shape,
    pub native_spacing: Vec<f64>,
    pub bbox: BoundingBox,
    /// Normalized crop at working resolution.
    pub image: ScalarGrid,
    /// Margin points in working coordinates.
    pub margin_points: SeedSet,
    /// The crop had constant intensity.
    pub degenerate: bool,
}

impl WorkingFrame {
    pub fn new(native: &ScalarGrid, bbox: BoundingBox, working_dims: &[usize], margin_native: &SeedSet) -> Result<Self> {
        let crop = native.crop(&bbox)?;
        let norm = crop.normalize();
        let image = norm.grid.resample(working_dims)?;
        let mut frame = WorkingFrame {
            native_shape: *native.shape(),
            native_spacing: native.spacing().to_vec(),
            bbox,
            image,
            margin_points: SeedSet::empty(Label::Foreground),
            degenerate: norm.degenerate,
        };
        let pts = margin_native
            .points()
            .iter()
            .map(|p| {
                frame.to_working(&p.0).ok_or_else(|| {
                    Error::OutOfBounds(format!("margin point {:?} outside the relaxed box", p.0))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        frame.margin_points = SeedSet::new(pts, Label::Foreground);
        Ok(frame)
    }

    pub fn working_dims(&self) -> &[usize] {
        self.image.dims()
    }

    /// Working cell nearest to a native position, `None` outside the box.
    pub fn to_working(&self, native: &[usize]) -> Option<GridIndex> {
        if !self.bbox.contains(native) {
            return None;
        }
        let ext = self.bbox.extent();
        let w = self.image.dims();
        Some(GridIndex(
            (0..native.len())
                .map(|k| {
                    let local = native[k] - self.bbox.lo[k];
                    if ext[k] <= 1 || w[k] <= 1 {
                        0
                    } else {
                        // round(local * (w - 1) / (ext - 1)) in integers
                        let num = local * (w[k] - 1);
                        let den = ext[k] - 1;
                        (2 * num + den) / (2 * den)
                    }
                })
                .collect(),
        ))
    }

    /// Crop and resample a native-resolution grid into the working frame.
    pub fn to_working_grid(&self, native: &ScalarGrid) -> Result<ScalarGrid> {
        native.crop(&self.bbox)?.resample(self.working_dims())
    }

    /// Threshold a working-resolution probability at 0.5 on the native grid.
    pub fn paste_probability(&self, working_prob: &ScalarGrid) -> Result<BinaryMask> {
        let local = resample_mask(working_prob, &self.bbox.extent(), 0.5)?;
        local.embed(self.native_shape, &self.bbox.lo)
    }
}

/// Everything stage 1 produced, retained for refinement rounds.
#[derive(Clone, Debug)]
pub struct Stage1 {
    pub frame: WorkingFrame,
    pub cue: CueMap,
    /// Initial probabilities at working resolution.
    pub prob: ProbabilityPair,
    pub mask: BinaryMask,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Default)]
struct Stopwatch {
    laps: Vec<Timing>,
}

impl Stopwatch {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.laps.push(Timing {
            stage: stage.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Stage 1 with per-stage timings.
pub fn stage1(
    image: &ScalarGrid,
    margin_points: &SeedSet,
    provider: &Provider,
    params: &PipelineParams,
) -> Result<(Stage1, Vec<Timing>)> {
    let rank = image.rank();
    let working = params
        .working_dims
        .clone()
        .unwrap_or_else(|| default_working_dims(rank));
    let margin = params.bbox_margin.unwrap_or_else(|| default_bbox_margin(rank));
    let mut sw = Stopwatch::default();
    let bbox = sw.time("bbox", || infer_relaxed_bbox(margin_points, margin, image.dims()))?;
    let frame = sw.time("crop_normalize_resample", || {
        WorkingFrame::new(image, bbox, &working, margin_points)
    })?;
    let cue = sw.time("encode", || {
        params
            .encoding
            .similarity(&frame.image, &frame.margin_points, params.connectivity)
    })?;
    let prob = sw.time("provider", || match provider {
        Provider::Baseline => baseline_from_cue(&frame.image, &cue, &BoundingBox::full(frame.image.shape())),
        Provider::File(p) => {
            p.check_dims(image.dims())?;
            let fg = frame.to_working_grid(p.fg())?;
            let clamped = fg.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
            ProbabilityPair::from_foreground(fg.with_data(clamped))
        }
    })?;
    let mask = sw.time("threshold_paste", || frame.paste_probability(prob.fg()))?;
    Ok((
        Stage1 {
            frame,
            cue,
            prob,
            mask,
        },
        sw.laps,
    ))
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    /// Refined mask at native resolution.
    pub mask: BinaryMask,
    /// CRF result at working resolution; `None` for a no-op round.
    pub labeling: Option<Labeling>,
    /// Clicks that fell outside the relaxed box.
    pub ignored_clicks: usize,
    pub timings: Vec<Timing>,
}

/// One refinement with all clicks so far, in chronological order.
///
/// Clicks mapping to the same working cell resolve to the latest one. The
/// returned native mask carries every click's label at its own cell.
pub fn refine_step(stage: &Stage1, clicks: &[Seed], params: &PipelineParams) -> Result<RefineOutcome> {
    let frame = &stage.frame;
    for c in clicks {
        if !frame.native_shape.contains(&c.coords) {
            return Err(Error::OutOfBounds(format!(
                "click {:?} outside image {:?}",
                c.coords,
                frame.native_shape.dims()
            )));
        }
    }
    if clicks.is_empty() {
        return Ok(RefineOutcome {
            mask: stage.mask.clone(),
            labeling: None,
            ignored_clicks: 0,
            timings: Vec::new(),
        });
    }
    let mut sw = Stopwatch::default();
    let mut latest: HashMap<GridIndex, (usize, Label)> = HashMap::new();
    let mut ignored = 0;
    for (order, c) in clicks.iter().enumerate() {
        match frame.to_working(&c.coords) {
            Some(w) => {
                latest.insert(w, (order, c.label));
            }
            None => ignored += 1,
        }
    }
    let mut ordered: Vec<(usize, GridIndex, Label)> =
        latest.into_iter().map(|(w, (o, l))| (o, w, l)).collect();
    ordered.sort_by_key(|e| e.0);
    let pick = |l: Label| SeedSet::new(ordered.iter().filter(|e| e.2 == l).map(|e| e.1.clone()), l);
    let fg = pick(Label::Foreground);
    let bg = pick(Label::Background);

    let foreground = if params.fusion {
        sw.time("fuse", || {
            fuse(
                &FusionInputs {
                    prob: &stage.prob,
                    fg_clicks: &fg,
                    bg_clicks: &bg,
                    margin_points: &frame.margin_points,
                    image: &frame.image,
                },
                params.d_missing,
                params.connectivity,
            )
        })?
        .fg
    } else {
        stage.prob.fg().clone()
    };
    let labeling = sw.time("crf", || solve_crf(&frame.image, &foreground, &fg, &bg, &params.crf))?;
    let mask = sw.time("paste", || -> Result<BinaryMask> {
        let mut m = frame.paste_probability(&labeling.mask.to_grid())?;
        for c in clicks {
            m.set(&c.coords, c.label == Label::Foreground)?;
        }
        Ok(m)
    })?;
    Ok(RefineOutcome {
        mask,
        labeling: Some(labeling),
        ignored_clicks: ignored,
        timings: sw.laps,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub clicks: usize,
    pub scores: Option<Scores>,
    pub timings: Vec<Timing>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub bbox: BoundingBox,
    pub working_dims: Vec<usize>,
    pub stage1_timings: Vec<Timing>,
    pub stage1_scores: Option<Scores>,
    pub rounds: Vec<RoundReport>,
    pub total_clicks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotConfig {
    pub rounds: usize,
    pub clicks_per_round: usize,
    pub rng_seed: u64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig {
            rounds: 5,
            clicks_per_round: 3,
            rng_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub mask: BinaryMask,
    pub report: PipelineReport,
    pub stage1: Stage1,
    pub clicks: Vec<Seed>,
}

/// Stage 1, then either the given clicks as one refinement round or, with a
/// ground truth and a robot config, robot-driven rounds until the robot has
/// nothing left to click.
pub fn run_pipeline(
    image: &ScalarGrid,
    margin_points: &SeedSet,
    provider: &Provider,
    params: &PipelineParams,
    gt: Option<&BinaryMask>,
    clicks: &[Seed],
    robot: Option<RobotConfig>,
) -> Result<PipelineOutput> {
    let (st, stage1_timings) = stage1(image, margin_points, provider, params)?;
    let spacing = image.spacing().to_vec();
    let scores = |m: &BinaryMask| gt.map(|g| score(m, g, &spacing)).transpose();
    let stage1_scores = scores(&st.mask)?;
    let mut mask = st.mask.clone();
    let mut all_clicks: Vec<Seed> = Vec::new();
    let mut rounds = Vec::new();
    if !clicks.is_empty() {
        all_clicks.extend_from_slice(clicks);
        let out = refine_step(&st, &all_clicks, params)?;
        mask = out.mask;
        rounds.push(RoundReport {
            round: 1,
            clicks: clicks.len(),
            scores: scores(&mask)?,
            timings: out.timings,
        });
    }
    if let (Some(g), Some(cfg)) = (gt, robot) {
        for _ in 0..cfg.rounds {
            let round = rounds.len() + 1;
            let (f, b) = robot_refine_clicks(&mask, g, cfg.clicks_per_round, cfg.rng_seed + round as u64)?;
            if f.is_empty() && b.is_empty() {
                break;
            }
            let batch: Vec<Seed> = f.to_seeds().into_iter().chain(b.to_seeds()).collect();
            all_clicks.extend_from_slice(&batch);
            let out = refine_step(&st, &all_clicks, params)?;
            mask = out.mask;
            rounds.push(RoundReport {
                round,
                clicks: batch.len(),
                scores: scores(&mask)?,
                timings: out.timings,
            });
        }
    }
    let report = PipelineReport {
        bbox: st.frame.bbox.clone(),
        working_dims: st.frame.working_dims().to_vec(),
        stage1_timings,
        stage1_scores,
        total_clicks: all_clicks.len(),
        rounds,
    };
    Ok(PipelineOutput {
        mask,
        report,
        stage1: st,
        clicks: all_clicks,
    })
}
