//! Simulated user interaction: interior margin points from a ground-truth
//! mask, the relaxed bounding box they induce, and the robot user that
//! places refinement clicks inside error regions.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edt::interior_depth;
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, BoundingBox, Connectivity, GridIndex, Shape};
use crate::seeds::{Label, SeedSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarginPointConfig {
    /// Lower bound on points taken near the object's axis extremes.
    pub near_extreme_count: usize,
    /// Extra boundary points are drawn uniformly from `0..=extra_count_max`.
    pub extra_count_max: usize,
    /// Inward displacement in cells; must not exceed `bbox_margin`.
    pub inward_offset: usize,
    pub bbox_margin: usize,
    pub rng_seed: u64,
}

impl Default for MarginPointConfig {
    fn default() -> Self {
        Self::for_rank(2)
    }
}

impl MarginPointConfig {
    pub fn for_rank(rank: usize) -> Self {
        if rank == 3 {
            MarginPointConfig {
                near_extreme_count: 6,
                extra_count_max: 5,
                inward_offset: 2,
                bbox_margin: 3,
                rng_seed: 0,
            }
        } else {
            MarginPointConfig {
                near_extreme_count: 4,
                extra_count_max: 5,
                inward_offset: 3,
                bbox_margin: 5,
                rng_seed: 0,
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inward_offset < 1 {
            return Err(Error::Parameter("inward_offset must be >= 1".into()));
        }
        if self.inward_offset > self.bbox_margin {
            return Err(Error::Parameter(format!(
                "inward_offset {} exceeds bbox_margin {}; the relaxed box could miss the object",
                self.inward_offset, self.bbox_margin
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimulatedPoints {
    pub seeds: SeedSet,
    /// Set when some point could not be moved the full inward offset.
    pub reduced_offset: bool,
}

fn sq_dist(a: [usize; 3], b: [usize; 3]) -> usize {
    (0..3).map(|k| a[k].abs_diff(b[k]).pow(2)).sum()
}

/// Simulate interior margin points for the object in `gt`.
pub fn simulate_margin_points(gt: &BinaryMask, cfg: &MarginPointConfig) -> Result<SimulatedPoints> {
    cfg.validate()?;
    if gt.count() == 0 {
        return Err(Error::Parameter("ground-truth mask is empty".into()));
    }
    let shape = *gt.shape();
    let boundary = gt.boundary(Connectivity::Face);
    let pos: Vec<[usize; 3]> = boundary.iter().map(|&i| shape.zyx(i)).collect();
    let axes = 3 - shape.rank()..3;

    // each extreme = (axis, coordinate value); boundary cells there qualify
    let mut extremes = Vec::new();
    for k in axes {
        let lo = pos.iter().map(|p| p[k]).min().unwrap();
        let hi = pos.iter().map(|p| p[k]).max().unwrap();
        extremes.push((k, lo));
        extremes.push((k, hi));
    }
    let mut chosen: Vec<usize> = Vec::new();
    for &(k, v) in &extremes {
        // boundary is in row-major order, so the first match is lexicographically smallest
        let first = (0..pos.len()).find(|&b| pos[b][k] == v).unwrap();
        if !chosen.contains(&first) {
            chosen.push(first);
        }
    }
    let mut exhausted = vec![false; extremes.len()];
    let mut e = 0;
    while chosen.len() < cfg.near_extreme_count && exhausted.iter().any(|x| !x) {
        let (k, v) = extremes[e];
        let best = (0..pos.len())
            .filter(|&b| pos[b][k] == v && !chosen.contains(&b))
            .max_by_key(|&b| {
                let spread = chosen.iter().map(|&c| sq_dist(pos[b], pos[c])).min().unwrap_or(0);
                (spread, std::cmp::Reverse(b))
            });
        match best {
            Some(b) => chosen.push(b),
            None => exhausted[e] = true,
        }
        e = (e + 1) % extremes.len();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let remaining: Vec<usize> = (0..pos.len()).filter(|b| !chosen.contains(b)).collect();
    let n_extra = rng.random_range(0..=cfg.extra_count_max).min(remaining.len());
    let mut extra: Vec<usize> = sample(&mut rng, remaining.len(), n_extra)
        .into_iter()
        .map(|i| remaining[i])
        .collect();
    extra.sort_unstable();
    chosen.extend(extra);

    let depth = interior_depth(&shape, gt.data());
    let mut reduced = false;
    let mut points = Vec::with_capacity(chosen.len());
    for &b in &chosen {
        let (cell, r) = move_inward(&shape, gt, &depth, pos[b], cfg.inward_offset);
        reduced |= r < cfg.inward_offset;
        points.push(shape.index(cell));
    }
    Ok(SimulatedPoints {
        seeds: SeedSet::new(points, Label::Foreground),
        reduced_offset: reduced,
    })
}

/// Nearest foreground cell within Chebyshev radius `r` of `b` lying at least
/// `r` cells inside the object, trying `r = offset`, then 1, then 0.
fn move_inward(shape: &Shape, gt: &BinaryMask, depth: &[f64], b: [usize; 3], offset: usize) -> (usize, usize) {
    let e = shape.ext3();
    let used: Vec<bool> = (0..3).map(|k| k >= 3 - shape.rank()).collect();
    for r in [offset, 1] {
        if r > offset {
            continue;
        }
        let range = |k: usize| {
            if used[k] {
                b[k].saturating_sub(r)..(b[k] + r + 1).min(e[k])
            } else {
                0..1
            }
        };
        let mut best: Option<(usize, f64, usize)> = None;
        for z in range(0) {
            for y in range(1) {
                for x in range(2) {
                    let q = shape.linear3([z, y, x]);
                    if !gt.data()[q] || depth[q] < (r + 1) as f64 {
                        continue;
                    }
                    let d = sq_dist(b, [z, y, x]);
                    let better = match best {
                        None => true,
                        Some((bd, bdepth, _)) => d < bd || (d == bd && depth[q] > bdepth),
                    };
                    if better {
                        best = Some((d, depth[q], q));
                    }
                }
            }
        }
        if let Some((_, _, q)) = best {
            return (q, r);
        }
    }
    (shape.linear3(b), 0)
}

/// Box around the seeds, grown by `margin` per side and clamped to `dims`.
pub fn infer_relaxed_bbox(seeds: &SeedSet, margin: usize, dims: &[usize]) -> Result<BoundingBox> {
    let shape = Shape::new(dims)?;
    seeds.require_indices(&shape)?;
    let rank = dims.len();
    let mut lo = vec![usize::MAX; rank];
    let mut hi = vec![0; rank];
    for p in seeds.points() {
        for k in 0..rank {
            lo[k] = lo[k].min(p.0[k]);
            hi[k] = hi[k].max(p.0[k]);
        }
    }
    for k in 0..rank {
        lo[k] = lo[k].saturating_sub(margin);
        hi[k] = (hi[k] + margin).min(dims[k] - 1);
    }
    BoundingBox::new(lo, hi)
}

/// Connected components of `mask`, largest first (ties by first cell).
pub fn components(mask: &BinaryMask, conn: Connectivity) -> Vec<Vec<usize>> {
    let shape = *mask.shape();
    let offsets = conn.offsets();
    let mut seen = vec![false; shape.len()];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..shape.len() {
        if !mask.data()[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(c) = queue.pop_front() {
            comp.push(c);
            let p = shape.zyx(c);
            for &o in &offsets {
                if let Some(n) = shape.offset(p, o) {
                    if mask.data()[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    comps
}

/// Robot user: one click at the innermost cell of each of the `k` largest
/// error components. Returns `(foreground clicks, background clicks)`; both
/// are empty when the prediction already equals the ground truth.
pub fn robot_refine_clicks(
    pred: &BinaryMask,
    gt: &BinaryMask,
    k: usize,
    rng_seed: u64,
) -> Result<(SeedSet, SeedSet)> {
    if k == 0 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    let errors = pred.xor(gt)?;
    let shape = *pred.shape();
    let mut fg = SeedSet::empty(Label::Foreground);
    let mut bg = SeedSet::empty(Label::Background);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for comp in components(&errors, Connectivity::Face).into_iter().take(k) {
        let cell = pole_of_inaccessibility(&shape, &comp, &mut rng);
        let idx: GridIndex = shape.index(cell);
        if gt.data()[cell] {
            fg.push(idx);
        } else {
            bg.push(idx);
        }
    }
    Ok((fg, bg))
}

fn pole_of_inaccessibility(shape: &Shape, comp: &[usize], rng: &mut ChaCha8Rng) -> usize {
    let rank = shape.rank();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0; 3];
    for &c in comp {
        let p = shape.zyx(c);
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let ext: Vec<usize> = (3 - rank..3).map(|k| hi[k] - lo[k] + 1).collect();
    let local = Shape::new(&ext).expect("component box");
    let mut inside = vec![false; local.len()];
    for &c in comp {
        let p = shape.zyx(c);
        inside[local.linear3([p[0] - lo[0], p[1] - lo[1], p[2] - lo[2]])] = true;
    }
    let depth = interior_depth(&local, &inside);
    let best = depth.iter().cloned().fold(0.0, f64::max);
    let ties: Vec<usize> = (0..local.len())
        .filter(|&i| inside[i] && depth[i] >= best - 1e-12)
        .collect();
    let pick = ties[if ties.len() > 1 { rng.random_range(0..ties.len()) } else { 0 }];
    let q = local.zyx(pick);
    shape.linear3([q[0] + lo[0], q[1] + lo[1], q[2] + lo[2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relaxed_bbox_arithmetic() {
        let s = SeedSet::new(vec![GridIndex(vec![2, 2]), GridIndex(vec![7, 5])], Label::Foreground);
        let b = infer_relaxed_bbox(&s, 2, &[20, 20]).unwrap();
        assert_eq!(b, BoundingBox::new(vec![0, 0], vec![9, 7]).unwrap());
        let b = infer_relaxed_bbox(&s, 0, &[20, 20]).unwrap();
        assert_eq!(b, BoundingBox::new(vec![2, 2], vec![7, 5]).unwrap());
    }

    #[test]
    fn relaxed_bbox_clamps_at_edges() {
        let dims = [12, 10];
        let cases: [(&[usize], (Vec<usize>, Vec<usize>)); 3] = [
            (&[1, 1], (vec![0, 0], vec![6, 6])),
            (&[11, 9], (vec![6, 4], vec![11, 9])),
            (&[0, 8], (vec![0, 3], vec![5, 9])),
        ];
        for (p, (lo, hi)) in cases {
            let s = SeedSet::new(vec![GridIndex(p.to_vec())], Label::Foreground);
            assert_eq!(infer_relaxed_bbox(&s, 5, &dims).unwrap(), BoundingBox { lo, hi });
        }
        assert!(infer_relaxed_bbox(&SeedSet::empty(Label::Foreground), 5, &dims).is_err());
    }

    fn square(n: usize, lo: usize, side: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(Shape::new(&[n, n]).unwrap());
        for y in lo..lo + side {
            for x in lo..lo + side {
                m.set(&[y, x], true).unwrap();
            }
        }
        m
    }

    #[test]
    fn square_gets_four_inset_points() {
        let gt = square(21, 5, 11);
        let cfg = MarginPointConfig {
            near_extreme_count: 4,
            extra_count_max: 0,
            inward_offset: 2,
            bbox_margin: 5,
            rng_seed: 1,
        };
        let out = simulate_margin_points(&gt, &cfg).unwrap();
        assert_eq!(out.seeds.len(), 4);
        assert!(!out.reduced_offset);
        for p in out.seeds.points() {
            assert!(gt.get(&p.0).unwrap());
            // two cells in from the nearest side
            let (y, x) = (p.0[0] - 5, p.0[1] - 5);
            let inset = y.min(x).min(10 - y).min(10 - x);
            assert_eq!(inset, 2, "{:?}", p.0);
        }
        let b = infer_relaxed_bbox(&out.seeds, cfg.bbox_margin, gt.dims()).unwrap();
        let g = gt.bounding_box().unwrap();
        assert!(b.lo[0] <= g.lo[0] && b.lo[1] <= g.lo[1] && b.hi[0] >= g.hi[0] && b.hi[1] >= g.hi[1]);
    }

    #[test]
    fn thin_object_flags_reduced_offset() {
        let mut gt = BinaryMask::empty(Shape::new(&[9, 9]).unwrap());
        for x in 1..8 {
            gt.set(&[4, x], true).unwrap();
        }
        let out = simulate_margin_points(&gt, &MarginPointConfig::default()).unwrap();
        assert!(out.reduced_offset);
        assert!(out.seeds.points().iter().all(|p| gt.get(&p.0).unwrap()));
    }

    #[test]
    fn config_validation() {
        let gt = square(10, 2, 5);
        let bad = MarginPointConfig { inward_offset: 0, ..Default::default() };
        assert!(simulate_margin_points(&gt, &bad).is_err());
        let bad = MarginPointConfig { inward_offset: 6, bbox_margin: 5, ..Default::default() };
        assert!(simulate_margin_points(&gt, &bad).is_err());
        let empty = BinaryMask::empty(Shape::new(&[5, 5]).unwrap());
        assert!(simulate_margin_points(&empty, &MarginPointConfig::default()).is_err());
    }

    #[test]
    fn robot_converged_and_block() {
        let gt = square(20, 3, 12);
        let (f, b) = robot_refine_clicks(&gt, &gt, 3, 0).unwrap();
        assert!(f.is_empty() && b.is_empty());

        let mut pred = gt.clone();
        for y in 6..11 {
            for x in 6..11 {
                pred.set(&[y, x], false).unwrap();
            }
        }
        let (f, b) = robot_refine_clicks(&pred, &gt, 3, 0).unwrap();
        assert!(b.is_empty());
        assert_eq!(f.points(), &[GridIndex(vec![8, 8])]);
        assert!(robot_refine_clicks(&pred, &gt, 0, 0).is_err());
    }

    #[test]
    fn components_sorted_by_size() {
        let m = BinaryMask::new(
            &[3, 5],
            vec![
                true, false, true, true, false, //
                false, false, true, true, false, //
                true, false, false, false, false,
            ],
        )
        .unwrap();
        let c = components(&m, Connectivity::Face);
        assert_eq!(c.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 1, 1]);
        assert_eq!(c[1], vec![0]);
    }
}
