//! Corpus-level harnesses: the encoding sweep benchmark and the robot-user
//! evaluation. Items run in parallel; each item's pipeline is sequential.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{simulate_margin_points, MarginPointConfig};
use crate::metrics::{score, Scores};
use crate::pipeline::{run_pipeline, stage1, PipelineParams, Provider, RobotConfig};
use crate::synth::Sample;
use crate::transforms::Encoding;

pub const THRESHOLD_SWEEP: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const GAUSSIAN_SWEEP: [f64; 4] = [3.0, 6.0, 9.0, 12.0];

/// Euclidean, Gaussian and geodesic grids followed by EGD.
pub fn default_sweep() -> Vec<Encoding> {
    let mut v = Vec::new();
    v.extend(THRESHOLD_SWEEP.iter().map(|&t| Encoding::Euclidean { threshold: t }));
    v.extend(GAUSSIAN_SWEEP.iter().map(|&s| Encoding::Gaussian { sigma: s }));
    v.extend(THRESHOLD_SWEEP.iter().map(|&t| Encoding::Geodesic { threshold: t }));
    v.push(Encoding::Egd);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub image: String,
    pub method: String,
    /// Empty for parameter-free methods.
    pub parameter: Option<f64>,
    pub dice: f64,
    pub assd: Option<f64>,
}

fn margin_points_for(sample: &Sample, seed: u64) -> Result<crate::seeds::SeedSet> {
    let mut cfg = MarginPointConfig::for_rank(sample.gt.shape().rank());
    cfg.rng_seed = seed;
    Ok(simulate_margin_points(&sample.gt, &cfg)?.seeds)
}

/// Stage-1 scores for every corpus item under every encoding in `sweep`.
pub fn benchmark_encodings(corpus: &[Sample], sweep: &[Encoding], params: &PipelineParams) -> Result<Vec<BenchRow>> {
    if corpus.is_empty() {
        return Err(Error::Parameter("empty corpus".into()));
    }
    if sweep.is_empty() {
        return Err(Error::Parameter("empty sweep".into()));
    }
    let per_item: Vec<Vec<BenchRow>> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, s)| -> Result<Vec<BenchRow>> {
            let margin = margin_points_for(s, i as u64)?;
            sweep
                .iter()
                .map(|enc| {
                    let p = PipelineParams {
                        encoding: *enc,
                        ..params.clone()
                    };
                    let (st, _) = stage1(&s.image, &margin, &Provider::Baseline, &p)?;
                    let sc = score(&st.mask, &s.gt, s.image.spacing())?;
                    Ok(BenchRow {
                        image: s.id.clone(),
                        method: enc.name().to_string(),
                        parameter: enc.parameter(),
                        dice: sc.dice,
                        assd: sc.assd,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_item.into_iter().flatten().collect())
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["image", "method", "parameter", "dice", "assd"])?;
    for r in rows {
        w.write_record([
            r.image.clone(),
            r.method.clone(),
            r.parameter.map(|p| p.to_string()).unwrap_or_default(),
            format!("{:.6}", r.dice),
            r.assd.map(|a| format!("{a:.6}")).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Mean Dice per (method, parameter) cell, in first-appearance order.
pub fn mean_dice_by_cell(rows: &[BenchRow]) -> Vec<(String, Option<f64>, f64)> {
    let mut order: Vec<(String, Option<f64>)> = Vec::new();
    let mut acc: Vec<(f64, usize)> = Vec::new();
    for r in rows {
        let key = (r.method.clone(), r.parameter);
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                acc.push((0.0, 0));
                order.len() - 1
            }
        };
        acc[idx].0 += r.dice;
        acc[idx].1 += 1;
    }
    order
        .into_iter()
        .zip(acc)
        .map(|((m, p), (s, n))| (m, p, s / n as f64))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub image: String,
    /// Stage-1 scores first, then one entry per refinement round.
    pub scores: Vec<Scores>,
    pub clicks_per_round: Vec<usize>,
    pub total_clicks: usize,
    /// The robot found nothing left to click.
    pub converged: bool,
    pub non_decreasing: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobotSummary {
    pub images: usize,
    pub rounds: usize,
    pub clicks_per_round: usize,
    pub stage1_dice: String,
    pub final_dice: String,
    pub final_assd: String,
    pub stage1_dice_mean: f64,
    pub final_dice_mean: f64,
    pub non_decreasing_fraction: f64,
    pub converged: usize,
    /// Total refinement clicks of each converged image, as counts.
    pub clicks_to_convergence: BTreeMap<usize, usize>,
    pub trajectories: Vec<Trajectory>,
}

/// `"mean±std"` with population std, four decimals.
pub fn mean_std(values: &[f64]) -> String {
    if values.is_empty() {
        return "nan±nan".into();
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let s = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    format!("{m:.4}±{s:.4}")
}

fn is_non_decreasing(d: &[f64]) -> bool {
    d.windows(2).all(|w| w[1] >= w[0])
}

pub fn robot_eval(corpus: &[Sample], rounds: usize, clicks: usize, params: &PipelineParams) -> Result<RobotSummary> {
    if corpus.is_empty() {
        return Err(Error::Parameter("empty corpus".into()));
    }
    if clicks == 0 {
        return Err(Error::Parameter("clicks per round must be positive".into()));
    }
    let trajectories: Vec<Trajectory> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, s)| -> Result<Trajectory> {
            let margin = margin_points_for(s, i as u64)?;
            let cfg = RobotConfig {
                rounds,
                clicks_per_round: clicks,
                rng_seed: 1000 * i as u64,
            };
            let out = run_pipeline(&s.image, &margin, &Provider::Baseline, params, Some(&s.gt), &[], Some(cfg))?;
            let r = &out.report;
            let mut scores = vec![r.stage1_scores.expect("gt supplied")];
            scores.extend(r.rounds.iter().map(|x| x.scores.expect("gt supplied")));
            let dice: Vec<f64> = scores.iter().map(|s| s.dice).collect();
            Ok(Trajectory {
                image: s.id.clone(),
                non_decreasing: is_non_decreasing(&dice),
                clicks_per_round: r.rounds.iter().map(|x| x.clicks).collect(),
                total_clicks: r.total_clicks,
                converged: out.mask == s.gt,
                scores,
            })
        })
        .collect::<Result<_>>()?;
    let stage1: Vec<f64> = trajectories.iter().map(|t| t.scores[0].dice).collect();
    let last: Vec<f64> = trajectories.iter().map(|t| t.scores.last().unwrap().dice).collect();
    let assd: Vec<f64> = trajectories
        .iter()
        .filter_map(|t| t.scores.last().unwrap().assd)
        .collect();
    let mut hist = BTreeMap::new();
    for t in trajectories.iter().filter(|t| t.converged) {
        *hist.entry(t.total_clicks).or_insert(0) += 1;
    }
    let n = trajectories.len() as f64;
    Ok(RobotSummary {
        images: trajectories.len(),
        rounds,
        clicks_per_round: clicks,
        stage1_dice: mean_std(&stage1),
        final_dice: mean_std(&last),
        final_assd: mean_std(&assd),
        stage1_dice_mean: stage1.iter().sum::<f64>() / n,
        final_dice_mean: last.iter().sum::<f64>() / n,
        non_decreasing_fraction: trajectories.iter().filter(|t| t.non_decreasing).count() as f64 / n,
        converged: trajectories.iter().filter(|t| t.converged).count(),
        clicks_to_convergence: hist,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid() {
        let s = default_sweep();
        assert_eq!(s.len(), 13);
        assert_eq!(s.iter().filter(|e| e.parameter().is_none()).count(), 1);
        assert_eq!(mean_std(&[1.0, 3.0]), "2.0000±1.0000");
        assert!(is_non_decreasing(&[0.5, 0.5, 0.9]));
        assert!(!is_non_decreasing(&[0.5, 0.4]));
    }
}
