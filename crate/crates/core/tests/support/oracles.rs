//! Slow, obviously-correct reference implementations used to check the
//! fast ones. Nothing here shares code with the library beyond data types.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use interseg_core::{BinaryMask, Connectivity, GridIndex, Label, ScalarGrid, SeedSet, Shape};

/// All cells of a grid as coordinate vectors, row-major.
pub fn cells(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in dims {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..d).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

fn linear(dims: &[usize], p: &[usize]) -> usize {
    p.iter().zip(dims).fold(0, |acc, (&v, &d)| acc * d + v)
}

/// Neighbor pairs `(a, b)` with `a < b`, by connectivity.
pub fn neighbor_pairs(dims: &[usize], conn: Connectivity) -> Vec<(usize, usize, Vec<isize>)> {
    let all = cells(dims);
    let mut out = Vec::new();
    for (a, p) in all.iter().enumerate() {
        for (b, q) in all.iter().enumerate().skip(a + 1) {
            let diff: Vec<isize> = p.iter().zip(q).map(|(&x, &y)| y as isize - x as isize).collect();
            if diff.iter().any(|d| d.abs() > 1) {
                continue;
            }
            let nz = diff.iter().filter(|d| **d != 0).count();
            let ok = match conn {
                Connectivity::Face => nz == 1,
                Connectivity::Full => nz >= 1,
            };
            if ok {
                out.push((a, b, diff));
            }
        }
    }
    out
}

/// Bellman-Ford relaxation with edge cost `|I_a - I_b|`.
pub fn bellman_ford(image: &ScalarGrid, sources: &[usize], conn: Connectivity) -> Vec<f64> {
    let n = image.len();
    let v = image.data();
    let pairs = neighbor_pairs(image.dims(), conn);
    let mut d = vec![f64::INFINITY; n];
    for &s in sources {
        d[s] = 0.0;
    }
    for _ in 0..n {
        let mut changed = false;
        for &(a, b, _) in &pairs {
            let w = (v[a] - v[b]).abs();
            if d[a] + w < d[b] {
                d[b] = d[a] + w;
                changed = true;
            }
            if d[b] + w < d[a] {
                d[a] = d[b] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    d
}

/// Minimum spacing-scaled distance to any seed, by enumeration.
pub fn brute_euclidean(dims: &[usize], spacing: &[f64], seeds: &[Vec<usize>]) -> Vec<f64> {
    cells(dims)
        .iter()
        .map(|p| {
            seeds
                .iter()
                .map(|s| {
                    p.iter()
                        .zip(s)
                        .zip(spacing)
                        .map(|((&a, &b), &h)| ((a as f64 - b as f64) * h).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// A random CRF instance on a small grid.
pub struct CrfInstance {
    pub image: ScalarGrid,
    pub prob: ScalarGrid,
    pub fg: SeedSet,
    pub bg: SeedSet,
}

pub fn random_crf_instance(dims: &[usize], rng: &mut ChaCha8Rng) -> CrfInstance {
    let n: usize = dims.iter().product();
    let spacing = vec![1.0; dims.len()];
    let image = ScalarGrid::new(dims, &spacing, (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let prob = ScalarGrid::new(
        dims,
        &spacing,
        (0..n)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                2 => 0.5,
                _ => rng.random_range(0.0..1.0),
            })
            .collect(),
    )
    .unwrap();
    let all = cells(dims);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let nf = rng.random_range(0..3);
    let nb = rng.random_range(0..3);
    let pick = |r: std::ops::Range<usize>, l: Label| SeedSet::new(order[r].iter().map(|&i| GridIndex(all[i].clone())), l);
    CrfInstance {
        image,
        prob,
        fg: pick(0..nf, Label::Foreground),
        bg: pick(nf..nf + nb, Label::Background),
    }
}

/// Scaled-integer energy of one labeling, from the textbook definition.
pub fn scaled_energy(inst: &CrfInstance, labels: &[bool], lambda: f64, sigma: f64, scale: f64, eps: f64) -> i64 {
    let dims = inst.image.dims();
    let v = inst.image.data();
    let mut e: i64 = 0;
    for (i, &y) in labels.iter().enumerate() {
        let r = inst.prob.data()[i].max(eps).min(1.0 - eps);
        let u = if y { -r.ln() } else { -(1.0 - r).ln() };
        e += (u * scale).round() as i64;
    }
    for (a, b, diff) in neighbor_pairs(dims, Connectivity::Face) {
        if labels[a] != labels[b] {
            let dist = (diff.iter().map(|d| (d * d) as f64).sum::<f64>()).sqrt();
            let w = lambda * (-(v[a] - v[b]).powi(2) / (2.0 * sigma * sigma)).exp() / dist;
            e += (w * scale).round() as i64;
        }
    }
    e
}

/// Minimum energy over all labelings that honor the clicks.
pub fn exhaustive_min(inst: &CrfInstance, lambda: f64, sigma: f64, scale: f64, eps: f64) -> i64 {
    let dims = inst.image.dims();
    let n = inst.image.len();
    let fixed: Vec<Option<bool>> = (0..n)
        .map(|i| {
            let p = cells(dims).swap_remove(i);
            if inst.fg.points().iter().any(|g| g.0 == p) {
                Some(true)
            } else if inst.bg.points().iter().any(|g| g.0 == p) {
                Some(false)
            } else {
                None
            }
        })
        .collect();
    let mut best = i64::MAX;
    for bits in 0u32..(1 << n) {
        let labels: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
        if fixed.iter().zip(&labels).any(|(f, &l)| f.is_some_and(|f| f != l)) {
            continue;
        }
        best = best.min(scaled_energy(inst, &labels, lambda, sigma, scale, eps));
    }
    best
}

/// Foreground cells with a face neighbor outside the mask or off the grid.
pub fn brute_surface(mask: &BinaryMask) -> Vec<Vec<usize>> {
    let dims = mask.dims().to_vec();
    cells(&dims)
        .into_iter()
        .filter(|p| {
            if !mask.data()[linear(&dims, p)] {
                return false;
            }
            (0..dims.len()).any(|k| {
                [-1isize, 1].iter().any(|&s| {
                    let q = p[k] as isize + s;
                    if q < 0 || q >= dims[k] as isize {
                        return true;
                    }
                    let mut n = p.clone();
                    n[k] = q as usize;
                    !mask.data()[linear(&dims, &n)]
                })
            })
        })
        .collect()
}

/// ASSD from all surface pairs.
pub fn brute_assd(a: &BinaryMask, b: &BinaryMask, spacing: &[f64]) -> f64 {
    let sa = brute_surface(a);
    let sb = brute_surface(b);
    let dist = |p: &Vec<usize>, q: &Vec<usize>| {
        p.iter()
            .zip(q)
            .zip(spacing)
            .map(|((&x, &y), &h)| ((x as f64 - y as f64) * h).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let nearest = |p: &Vec<usize>, set: &[Vec<usize>]| set.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min);
    let total: f64 = sa.iter().map(|p| nearest(p, &sb)).sum::<f64>() + sb.iter().map(|p| nearest(p, &sa)).sum::<f64>();
    total / (sa.len() + sb.len()) as f64
}

/// Checks the two simulation rules for margin points: each point is in the
/// object within `offset + 1` cells (chessboard) of its boundary, and the
/// relaxed box covers the whole object. Returns the first violation.
pub fn check_margin_rules(gt: &BinaryMask, points: &[Vec<usize>], offset: usize, margin: usize) -> Result<(), String> {
    let dims = gt.dims().to_vec();
    if points.is_empty() {
        return Err("no points".into());
    }
    let surface = brute_surface(gt);
    for p in points {
        if p.len() != dims.len() || p.iter().zip(&dims).any(|(&v, &d)| v >= d) {
            return Err(format!("point {p:?} outside the grid"));
        }
        if !gt.data()[linear(&dims, p)] {
            return Err(format!("point {p:?} not inside the object"));
        }
        let near = surface.iter().any(|s| {
            s.iter()
                .zip(p)
                .map(|(&a, &b)| (a as isize - b as isize).unsigned_abs())
                .max()
                .unwrap()
                <= offset + 1
        });
        if !near {
            return Err(format!("point {p:?} farther than {} from the boundary", offset + 1));
        }
    }
    for k in 0..dims.len() {
        let lo = points.iter().map(|p| p[k]).min().unwrap().saturating_sub(margin);
        let hi = (points.iter().map(|p| p[k]).max().unwrap() + margin).min(dims[k] - 1);
        for c in cells(&dims) {
            if gt.data()[linear(&dims, &c)] && (c[k] < lo || c[k] > hi) {
                return Err(format!("object cell {c:?} outside the relaxed box on axis {k}"));
            }
        }
    }
    Ok(())
}

/// A mask with independently drawn cells.
pub fn random_mask(dims: &[usize], rng: &mut ChaCha8Rng, density: f64) -> BinaryMask {
    let shape = Shape::new(dims).unwrap();
    BinaryMask::from_shape(shape, (0..shape.len()).map(|_| rng.random_bool(density)).collect()).unwrap()
}
