//! Refinement stage: fusion of the initial probabilities with click-derived
//! geodesic cues, then an exact hard-constrained CRF solve by graph cut.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Connectivity, ScalarGrid};
use crate::maxflow::Graph;
use crate::provider::ProbabilityPair;
use crate::seeds::SeedSet;
use crate::transforms::geodesic_from_cells;

/// Distance assigned to the click side that has no clicks at all.
pub const DEFAULT_D_MISSING: f64 = 20.0;

pub struct FusionInputs<'a> {
    pub prob: &'a ProbabilityPair,
    pub fg_clicks: &'a SeedSet,
    pub bg_clicks: &'a SeedSet,
    pub margin_points: &'a SeedSet,
    pub image: &'a ScalarGrid,
}

/// User-calibrated probabilities and the per-cell fusion weight.
#[derive(Clone, Debug)]
pub struct CalibratedPair {
    pub fg: ScalarGrid,
    pub bg: ScalarGrid,
    pub alpha: ScalarGrid,
}

/// Fuse initial probabilities with foreground/background click cues.
///
/// `D^f` is the geodesic distance to the margin points plus foreground
/// clicks, `D^b` to the background clicks; an absent side uses `d_missing`.
pub fn fuse(inputs: &FusionInputs<'_>, d_missing: f64, conn: Connectivity) -> Result<CalibratedPair> {
    let image = inputs.image;
    let shape = image.shape();
    inputs.prob.check_dims(image.dims())?;
    if !(d_missing >= 0.0 && d_missing.is_finite()) {
        return Err(Error::Parameter(format!("d_missing must be >= 0, got {d_missing}")));
    }
    let mut fg_cells = inputs.margin_points.linear_indices(shape)?;
    fg_cells.extend(inputs.fg_clicks.linear_indices(shape)?);
    let bg_cells = inputs.bg_clicks.linear_indices(shape)?;
    if fg_cells.is_empty() && bg_cells.is_empty() {
        return Err(Error::EmptySeeds);
    }
    let side = |cells: &[usize]| {
        if cells.is_empty() {
            vec![d_missing; shape.len()]
        } else {
            geodesic_from_cells(image, cells, conn)
        }
    };
    let df = side(&fg_cells);
    let db = side(&bg_cells);
    let n = shape.len();
    let mut rf = Vec::with_capacity(n);
    let mut rb = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let (pf, pb) = (inputs.prob.fg().data(), inputs.prob.bg().data());
    for i in 0..n {
        // e^-Df / (e^-Df + e^-Db) written in overflow-free logistic form
        let ef = 1.0 / (1.0 + (df[i] - db[i]).exp());
        let eb = 1.0 / (1.0 + (db[i] - df[i]).exp());
        let a = (-df[i].min(db[i])).exp();
        rf.push((1.0 - a) * pf[i] + a * ef);
        rb.push((1.0 - a) * pb[i] + a * eb);
        alpha.push(a);
    }
    Ok(CalibratedPair {
        fg: image.with_data(rf),
        bg: image.with_data(rb),
        alpha: image.with_data(alpha),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrfParams {
    pub lambda: f64,
    pub sigma: f64,
    pub connectivity: Connectivity,
    pub prob_clamp_epsilon: f64,
    pub capacity_scale: i64,
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams {
            lambda: 5.0,
            sigma: 0.1,
            connectivity: Connectivity::Face,
            prob_clamp_epsilon: 1e-6,
            capacity_scale: 1_000_000,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.prob_clamp_epsilon > 0.0 && self.prob_clamp_epsilon < 0.5) {
            return Err(Error::Parameter(format!(
                "prob_clamp_epsilon must be in (0, 0.5), got {}",
                self.prob_clamp_epsilon
            )));
        }
        if self.capacity_scale < 1 {
            return Err(Error::Parameter("capacity_scale must be >= 1".into()));
        }
        Ok(())
    }
}

/// CRF output: labels, which cells were clamped, and the attained energy.
#[derive(Clone, Debug)]
pub struct Labeling {
    pub mask: BinaryMask,
    pub constrained: BinaryMask,
    /// Energy in real arithmetic.
    pub energy: f64,
    /// Energy in the scaled-integer arithmetic the solver minimizes exactly.
    pub scaled_energy: i64,
}

fn to_scaled(v: f64, scale: i64) -> Result<i64> {
    let s = (v * scale as f64).round();
    if !(s.is_finite() && s.abs() < (1u64 << 53) as f64) {
        return Err(Error::Parameter(format!(
            "capacity {v} overflows at scale {scale}"
        )));
    }
    Ok(s as i64)
}

/// Pairwise weight `exp(-(I_i - I_j)^2 / (2 sigma^2)) / dist_ij`.
pub fn pairwise_weight(ia: f64, ib: f64, dist: f64, sigma: f64) -> f64 {
    let d = ia - ib;
    (-(d * d) / (2.0 * sigma * sigma)).exp() / dist
}

/// Globally minimize the binary CRF energy subject to the click labels.
///
/// Unary costs are `-ln r` for foreground and `-ln(1 - r)` for background
/// with `r` clamped to `[eps, 1 - eps]`; each term and each pairwise
/// `lambda * w_ij` is rounded to an integer at `capacity_scale` before the
/// max-flow solve. Cells indifferent between labels end up background.
pub fn solve_crf(
    image: &ScalarGrid,
    foreground: &ScalarGrid,
    fg_clicks: &SeedSet,
    bg_clicks: &SeedSet,
    params: &CrfParams,
) -> Result<Labeling> {
    params.validate()?;
    let shape = *image.shape();
    if foreground.dims() != image.dims() {
        return Err(Error::Shape(format!(
            "probabilities {:?} vs image {:?}",
            foreground.dims(),
            image.dims()
        )));
    }
    let n = shape.len();
    let mut clamp: Vec<Option<bool>> = vec![None; n];
    for i in fg_clicks.linear_indices(&shape)? {
        clamp[i] = Some(true);
    }
    for i in bg_clicks.linear_indices(&shape)? {
        if clamp[i] == Some(true) {
            return Err(Error::Constraint(format!(
                "cell {:?} constrained to both labels",
                shape.index(i).0
            )));
        }
        clamp[i] = Some(false);
    }

    let scale = params.capacity_scale;
    let eps = params.prob_clamp_epsilon;
    let mut cost_fg = Vec::with_capacity(n);
    let mut cost_bg = Vec::with_capacity(n);
    for &r in foreground.data() {
        let r = r.clamp(eps, 1.0 - eps);
        cost_fg.push(to_scaled(-r.ln(), scale)?);
        cost_bg.push(to_scaled(-(1.0 - r).ln(), scale)?);
    }

    let spacing = image.spacing3();
    let intensity = image.data();
    let mut edges: Vec<(usize, usize, i64, f64)> = Vec::new();
    for o in params.connectivity.forward_offsets() {
        let dist = (0..3)
            .map(|k| (o[k] as f64 * spacing[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        for i in 0..n {
            if let Some(j) = shape.offset(shape.zyx(i), o) {
                let w = params.lambda * pairwise_weight(intensity[i], intensity[j], dist, params.sigma);
                edges.push((i, j, to_scaled(w, scale)?, w));
            }
        }
    }

    let overflow = || Error::Parameter("capacity sum overflows i64".into());
    let mut total: i64 = 0;
    for i in 0..n {
        total = total
            .checked_add(cost_fg[i].max(cost_bg[i]))
            .ok_or_else(overflow)?;
    }
    for e in &edges {
        total = total.checked_add(e.2.checked_mul(2).ok_or_else(overflow)?).ok_or_else(overflow)?;
    }
    let hard = total.checked_add(1).ok_or_else(overflow)?;
    hard.checked_mul(2).ok_or_else(overflow)?;

    // source side = foreground: cutting s->i labels i background
    let mut g = Graph::new(n, edges.len());
    for i in 0..n {
        match clamp[i] {
            Some(true) => g.add_tweights(i, hard, 0),
            Some(false) => g.add_tweights(i, 0, hard),
            None => {
                let m = cost_fg[i].min(cost_bg[i]);
                g.add_tweights(i, cost_bg[i] - m, cost_fg[i] - m);
            }
        }
    }
    for &(i, j, c, _) in &edges {
        if c > 0 {
            g.add_edge(i, j, c, c);
        }
    }
    g.maxflow();

    let labels: Vec<bool> = (0..n)
        .map(|i| clamp[i].unwrap_or_else(|| g.in_source_segment(i)))
        .collect();
    let mut scaled_energy: i64 = 0;
    let mut energy = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let r = foreground.data()[i].clamp(eps, 1.0 - eps);
        if y {
            scaled_energy += cost_fg[i];
            energy -= r.ln();
        } else {
            scaled_energy += cost_bg[i];
            energy -= (1.0 - r).ln();
        }
    }
    for &(i, j, c, w) in &edges {
        if labels[i] != labels[j] {
            scaled_energy += c;
            energy += w;
        }
    }
    let constrained = clamp.iter().map(Option::is_some).collect();
    Ok(Labeling {
        mask: BinaryMask::from_shape(shape, labels)?,
        constrained: BinaryMask::from_shape(shape, constrained)?,
        energy,
        scaled_energy,
    })
}
