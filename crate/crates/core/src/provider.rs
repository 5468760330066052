//! Sources of the initial foreground/background probability pair.
//!
//! Two providers exist: a file provider for maps computed by an external
//! model, and a self-contained baseline that sharpens an EGD cue map with
//! intensity-histogram likelihoods.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundingBox, Connectivity, ScalarGrid};
use crate::io;
use crate::seeds::SeedSet;
use crate::transforms::{egd, CueMap};

/// Number of intensity bins in the baseline likelihood histograms.
pub const HISTOGRAM_BINS: usize = 32;
/// Cue value separating seed-like from non-seed-like cells.
pub const CUE_SPLIT: f64 = 0.5;

/// Paired foreground/background probabilities, `fg + bg = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityPair {
    fg: ScalarGrid,
    bg: ScalarGrid,
}

impl ProbabilityPair {
    /// Validate a foreground map and derive the background as its complement.
    pub fn from_foreground(fg: ScalarGrid) -> Result<Self> {
        if let Some(i) = fg.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Probability(format!(
                "value {} at index {:?} outside [0, 1]",
                fg.data()[i],
                fg.shape().index(i).0
            )));
        }
        let bg = fg.with_data(fg.data().iter().map(|v| 1.0 - v).collect());
        Ok(ProbabilityPair { fg, bg })
    }

    pub fn fg(&self) -> &ScalarGrid {
        &self.fg
    }

    pub fn bg(&self) -> &ScalarGrid {
        &self.bg
    }

    pub fn dims(&self) -> &[usize] {
        self.fg.dims()
    }

    pub fn check_dims(&self, dims: &[usize]) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::Shape(format!(
                "probability map {:?} does not match image {:?}",
                self.dims(),
                dims
            )));
        }
        Ok(())
    }
}

/// How the initial probabilities are obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Foreground map from an SGRID file (float dtype) at native resolution.
    File(std::path::PathBuf),
    Baseline,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    /// Parses `baseline` or `file:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "baseline" {
            Ok(ProviderKind::Baseline)
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(ProviderKind::File(p.into()))
        } else {
            Err(Error::Parameter(format!(
                "unknown provider {s:?}; expected baseline or file:PATH"
            )))
        }
    }
}

/// Load a foreground probability map from an SGRID file.
pub fn load_probability(path: impl AsRef<Path>) -> Result<ProbabilityPair> {
    let bytes = std::fs::read(path)?;
    let (grid, dtype) = io::decode_sgrid_typed(&bytes)?;
    if dtype != io::Dtype::F32 {
        return Err(Error::Probability("probability map must use the f32 dtype".into()));
    }
    ProbabilityPair::from_foreground(grid)
}

/// Baseline provider: EGD of the margin points over the normalized crop,
/// sharpened by histogram likelihoods, zero outside `bbox`.
pub fn baseline_probability(
    image: &ScalarGrid,
    margin_points: &SeedSet,
    bbox: &BoundingBox,
    conn: Connectivity,
) -> Result<ProbabilityPair> {
    if margin_points.is_empty() {
        return Err(Error::EmptySeeds);
    }
    bbox.check_within(image.shape())?;
    let local = shift_into(margin_points, bbox)?;
    let crop = image.crop(bbox)?.normalize().grid;
    let cue = egd(&crop, &local, conn)?;
    baseline_from_cue(image, &cue, bbox)
}

/// Histogram reweighting of an arbitrary cue map defined on the `bbox` crop.
pub fn baseline_from_cue(image: &ScalarGrid, cue: &CueMap, bbox: &BoundingBox) -> Result<ProbabilityPair> {
    bbox.check_within(image.shape())?;
    let crop = image.crop(bbox)?;
    if cue.grid().dims() != crop.dims() {
        return Err(Error::Shape(format!(
            "cue map {:?} does not match crop {:?}",
            cue.grid().dims(),
            crop.dims()
        )));
    }
    let local = histogram_reweight(&crop, cue.grid().data());
    let mut full = image.with_data(vec![0.0; image.len()]);
    crop.with_data(local).paste_into(&mut full, &bbox.lo)?;
    ProbabilityPair::from_foreground(full)
}

fn shift_into(points: &SeedSet, bbox: &BoundingBox) -> Result<SeedSet> {
    let mut shifted = Vec::with_capacity(points.len());
    for p in points.points() {
        if !bbox.contains(&p.0) {
            return Err(Error::OutOfBounds(format!(
                "margin point {:?} outside box lo={:?} hi={:?}",
                p.0, bbox.lo, bbox.hi
            )));
        }
        shifted.push(p.0.iter().zip(&bbox.lo).map(|(c, l)| c - l).collect::<Vec<_>>().into());
    }
    Ok(SeedSet::new(shifted, points.label()))
}

fn histogram_reweight(crop: &ScalarGrid, cue: &[f64]) -> Vec<f64> {
    let (lo, hi) = crop.min_max();
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let bin = |v: f64| {
        if width > 0.0 {
            (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1)
        } else {
            0
        }
    };
    let mut h_fg = [0.0f64; HISTOGRAM_BINS];
    let mut h_bg = [0.0f64; HISTOGRAM_BINS];
    let (mut n_fg, mut n_bg) = (0.0, 0.0);
    for (&v, &c) in crop.data().iter().zip(cue) {
        if c >= CUE_SPLIT {
            h_fg[bin(v)] += 1.0;
            n_fg += 1.0;
        } else {
            h_bg[bin(v)] += 1.0;
            n_bg += 1.0;
        }
    }
    // Laplace-1 smoothing
    let k = HISTOGRAM_BINS as f64;
    for b in 0..HISTOGRAM_BINS {
        h_fg[b] = (h_fg[b] + 1.0) / (n_fg + k);
        h_bg[b] = (h_bg[b] + 1.0) / (n_bg + k);
    }
    crop.data()
        .iter()
        .zip(cue)
        .map(|(&v, &c)| {
            let b = bin(v);
            let num = c * h_fg[b];
            let den = num + (1.0 - c) * h_bg[b];
            if den > 0.0 {
                (num / den).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}
