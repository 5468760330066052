//! Interaction encodings: geodesic distance, exponentialized geodesic
//! distance (EGD), Euclidean distance, Gaussian heatmap, and the
//! truncate-and-rescale step applied to distance-style encodings.

use serde::{Deserialize, Serialize};

use crate::edt::squared_edt;
use crate::error::{Error, Result};
use crate::grid::{Connectivity, ScalarGrid, Shape};
use crate::seeds::SeedSet;

/// Nonnegative per-cell distances, zero at the seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap(pub ScalarGrid);

/// Per-cell encoding in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CueMap(pub ScalarGrid);

impl DistanceMap {
    pub fn grid(&self) -> &ScalarGrid {
        &self.0
    }
}

impl CueMap {
    pub fn grid(&self) -> &ScalarGrid {
        &self.0
    }
}

/// Most buckets kept in the ring; wider buckets are used past this.
const MAX_BUCKETS: usize = 1 << 16;

/// Multi-source shortest paths with edge cost `|I_a - I_b|`.
///
/// Cells are swept in fixed-width distance buckets held in a ring; inside a
/// bucket labels are corrected until stable, so every cell ends at the
/// least fixed point of `d(v) = min_u d(u) + |I_u - I_v|`, the same value a
/// priority-queue Dijkstra computes.
pub(crate) fn geodesic_from_cells(image: &ScalarGrid, sources: &[usize], conn: Connectivity) -> Vec<f64> {
    let shape = image.shape();
    let e = shape.ext3();
    let intensity = image.data();
    // offsets along unit-length axes always leave the grid
    let offsets: Vec<[isize; 3]> = conn
        .offsets()
        .into_iter()
        .filter(|o| (0..3).all(|k| e[k] > 1 || o[k] == 0))
        .collect();
    let deltas: Vec<isize> = offsets
        .iter()
        .map(|o| (o[0] * e[1] as isize + o[1]) * e[2] as isize + o[2])
        .collect();
    let used: Vec<usize> = (0..3).filter(|&k| e[k] > 1).collect();

    let (lo, hi) = image.min_max();
    let max_edge = hi - lo;
    let steps = intensity.windows(2).map(|w| (w[1] - w[0]).abs());
    let mean_step = steps.sum::<f64>() / shape.len().max(2) as f64;
    let mut width = if mean_step > 0.0 { mean_step } else { 1.0 };
    if max_edge / width > (MAX_BUCKETS - 2) as f64 {
        width = max_edge / (MAX_BUCKETS - 2) as f64;
    }
    // live keys always span less than max_edge + width
    let ring = ((max_edge / width).ceil() as usize + 2).min(MAX_BUCKETS);
    let mut buckets: Vec<Vec<(f64, usize)>> = vec![Vec::new(); ring];
    let slot = |d: f64| (d / width) as usize;

    let mut dist = vec![f64::INFINITY; shape.len()];
    let mut pending = 0usize;
    for &s in sources {
        dist[s] = 0.0;
        buckets[0].push((0.0, s));
        pending += 1;
    }
    let mut current = 0usize;
    while pending > 0 {
        let Some((d, cell)) = buckets[current % ring].pop() else {
            current += 1;
            continue;
        };
        pending -= 1;
        if d > dist[cell] {
            continue;
        }
        let here = intensity[cell];
        let p = shape.zyx(cell);
        let mut relax = |n: usize| {
            let nd = d + (intensity[n] - here).abs();
            if nd < dist[n] {
                dist[n] = nd;
                buckets[slot(nd).max(current) % ring].push((nd, n));
                pending += 1;
            }
        };
        if used.iter().all(|&k| p[k] > 0 && p[k] + 1 < e[k]) {
            for &delta in &deltas {
                relax((cell as isize + delta) as usize);
            }
        } else {
            for &o in &offsets {
                if let Some(n) = shape.offset(p, o) {
                    relax(n);
                }
            }
        }
    }
    dist
}

/// Exact geodesic distance from every cell to the nearest seed.
pub fn geodesic_distance(image: &ScalarGrid, seeds: &SeedSet, conn: Connectivity) -> Result<DistanceMap> {
    let cells = seeds.require_indices(image.shape())?;
    let d = geodesic_from_cells(image, &cells, conn);
    Ok(DistanceMap(image.with_data(d)))
}

/// `exp(-geodesic distance to the nearest seed)`; exactly 1 at seeds.
pub fn egd(image: &ScalarGrid, seeds: &SeedSet, conn: Connectivity) -> Result<CueMap> {
    let DistanceMap(g) = geodesic_distance(image, seeds, conn)?;
    let data = g.data().iter().map(|d| (-d).exp()).collect();
    Ok(CueMap(g.with_data(data)))
}

/// Exact spacing-scaled Euclidean distance to the nearest seed.
pub fn euclidean_distance(dims: &[usize], spacing: &[f64], seeds: &SeedSet) -> Result<DistanceMap> {
    let shape = Shape::new(dims)?;
    let probe = ScalarGrid::from_shape(shape, spacing, vec![0.0; shape.len()])?;
    let cells = seeds.require_indices(&shape)?;
    let mut src = vec![false; shape.len()];
    for c in cells {
        src[c] = true;
    }
    let d = squared_edt(&shape, probe.spacing3(), &src)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Ok(DistanceMap(probe.with_data(d)))
}

/// `max_s exp(-|x - s|^2 / (2 sigma^2))` in pixel units.
pub fn gaussian_heatmap(dims: &[usize], seeds: &SeedSet, sigma: f64) -> Result<CueMap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
    }
    let shape = Shape::new(dims)?;
    let cells = seeds.require_indices(&shape)?;
    let mut src = vec![false; shape.len()];
    for c in cells {
        src[c] = true;
    }
    let two_s2 = 2.0 * sigma * sigma;
    let data = squared_edt(&shape, [1.0; 3], &src)
        .into_iter()
        .map(|d2| (-d2 / two_s2).exp())
        .collect();
    Ok(CueMap(ScalarGrid::from_parts(shape, [1.0; 3], data)))
}

/// Rescale by the map's own maximum, clamp at `threshold`, rescale to `[0, 1]`.
pub fn truncate_rescale(map: &DistanceMap, threshold: f64) -> Result<CueMap> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Parameter(format!(
            "threshold must be in (0, 1], got {threshold}"
        )));
    }
    let g = map.grid();
    let max = g.data().iter().cloned().fold(0.0, f64::max);
    let data = if max > 0.0 {
        g.data()
            .iter()
            .map(|&d| ((d / max).min(threshold) / threshold).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; g.len()]
    };
    Ok(CueMap(g.with_data(data)))
}

/// Default truncation threshold for the geodesic and Euclidean encodings.
pub const DEFAULT_THRESHOLD: f64 = 0.6;
/// Default Gaussian heatmap width in pixels.
pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 9.0;

/// Which interaction encoding to compute.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Encoding {
    Egd,
    Geodesic { threshold: f64 },
    Euclidean { threshold: f64 },
    Gaussian { sigma: f64 },
}

impl Encoding {
    pub fn name(&self) -> &'static str {
        match self {
            Encoding::Egd => "egd",
            Encoding::Geodesic { .. } => "geodesic",
            Encoding::Euclidean { .. } => "euclidean",
            Encoding::Gaussian { .. } => "gaussian",
        }
    }

    /// The sweep parameter, `None` for the parameter-free EGD.
    pub fn parameter(&self) -> Option<f64> {
        match *self {
            Encoding::Egd => None,
            Encoding::Geodesic { threshold } | Encoding::Euclidean { threshold } => Some(threshold),
            Encoding::Gaussian { sigma } => Some(sigma),
        }
    }

    /// Truncated distances are 0 at seeds and grow outward.
    pub fn is_distance_like(&self) -> bool {
        matches!(self, Encoding::Geodesic { .. } | Encoding::Euclidean { .. })
    }

    /// The encoding exactly as defined (truncated distances stay distance-like).
    pub fn encode(&self, image: &ScalarGrid, seeds: &SeedSet, conn: Connectivity) -> Result<CueMap> {
        match *self {
            Encoding::Egd => egd(image, seeds, conn),
            Encoding::Geodesic { threshold } => {
                truncate_rescale(&geodesic_distance(image, seeds, conn)?, threshold)
            }
            Encoding::Euclidean { threshold } => truncate_rescale(
                &euclidean_distance(image.dims(), image.spacing(), seeds)?,
                threshold,
            ),
            Encoding::Gaussian { sigma } => gaussian_heatmap(image.dims(), seeds, sigma),
        }
    }

    /// Encoding oriented as a seed-similarity map: 1 at seeds, decreasing away.
    pub fn similarity(&self, image: &ScalarGrid, seeds: &SeedSet, conn: Connectivity) -> Result<CueMap> {
        let CueMap(g) = self.encode(image, seeds, conn)?;
        if self.is_distance_like() {
            let data = g.data().iter().map(|v| 1.0 - v).collect();
            Ok(CueMap(g.with_data(data)))
        } else {
            Ok(CueMap(g))
        }
    }
}

impl std::str::FromStr for Encoding {
    type Err = Error;

    /// `egd`, or `geodesic|euclidean|gaussian` with an optional `:PARAM`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => {
                let v: f64 = p
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad encoding parameter {p:?}")))?;
                (n, Some(v))
            }
            None => (s, None),
        };
        let enc = match (name, param) {
            ("egd", None) => Encoding::Egd,
            ("egd", Some(_)) => return Err(Error::Parameter("egd takes no parameter".into())),
            ("geodesic", t) => Encoding::Geodesic { threshold: t.unwrap_or(DEFAULT_THRESHOLD) },
            ("euclidean", t) => Encoding::Euclidean { threshold: t.unwrap_or(DEFAULT_THRESHOLD) },
            ("gaussian", s) => Encoding::Gaussian { sigma: s.unwrap_or(DEFAULT_GAUSSIAN_SIGMA) },
            _ => {
                return Err(Error::Parameter(format!(
                    "unknown encoding {name:?}; expected egd, geodesic, euclidean or gaussian"
                )))
            }
        };
        Ok(enc)
    }
}
