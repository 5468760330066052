//! Seeded synthetic corpus: smoothed-noise blobs rendered as two-intensity
//! images with additive Gaussian noise.
//!
//! A blob is the positive set of `1 - |x - c| / R + roughness * n(x)` where
//! `n` is unit-variance Gaussian noise blurred with three box passes. An
//! optional disk is carved out of the rim to make the object concave. Only
//! the largest component is kept and interior holes are filled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::grid::{BinaryMask, Connectivity, ScalarGrid, Shape};
use crate::interaction::components;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobParams {
    pub dims: Vec<usize>,
    pub fg_intensity: f64,
    pub bg_intensity: f64,
    pub noise_sigma: f64,
    /// Blob radius range as a fraction of the smallest extent.
    pub radius: (f64, f64),
    pub roughness: f64,
    /// Probability that a blob gets a carved-out notch.
    pub concavity: f64,
}

impl Default for BlobParams {
    fn default() -> Self {
        BlobParams {
            dims: vec![96, 96],
            fg_intensity: 200.0,
            bg_intensity: 50.0,
            noise_sigma: 10.0,
            radius: (0.14, 0.24),
            roughness: 0.25,
            concavity: 0.3,
        }
    }
}

impl BlobParams {
    pub fn volume() -> Self {
        BlobParams {
            dims: vec![32, 48, 48],
            radius: (0.22, 0.32),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub image: ScalarGrid,
    pub gt: BinaryMask,
}

fn box_blur_axis(shape: &Shape, data: &mut [f64], axis: usize, radius: usize) {
    let e = shape.ext3();
    let n = e[axis];
    if n == 1 || radius == 0 {
        return;
    }
    let strides = [e[1] * e[2], e[2], 1];
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut line = vec![0.0; n];
    let mut prefix = vec![0.0; n + 1];
    for i in 0..e[a] {
        for j in 0..e[b] {
            let base = i * strides[a] + j * strides[b];
            for k in 0..n {
                line[k] = data[base + k * strides[axis]];
                prefix[k + 1] = prefix[k] + line[k];
            }
            for k in 0..n {
                let lo = k.saturating_sub(radius);
                let hi = (k + radius + 1).min(n);
                data[base + k * strides[axis]] = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            }
        }
    }
}

/// Unit-variance smoothed Gaussian noise.
pub fn smooth_noise(shape: &Shape, radius: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut v: Vec<f64> = (0..shape.len()).map(|_| normal.sample(rng)).collect();
    for _ in 0..3 {
        for axis in 3 - shape.rank()..3 {
            box_blur_axis(shape, &mut v, axis, radius);
        }
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x = (*x - mean) / std);
    v
}

/// Keep the largest component and fill enclosed holes.
pub fn clean_mask(mask: &BinaryMask) -> BinaryMask {
    let shape = *mask.shape();
    let mut out = BinaryMask::empty(shape);
    if let Some(biggest) = components(mask, Connectivity::Face).into_iter().next() {
        for c in biggest {
            out.data_mut()[c] = true;
        }
    }
    let inverse = BinaryMask::from_shape(shape, out.data().iter().map(|b| !b).collect()).unwrap();
    for comp in components(&inverse, Connectivity::Face) {
        if !comp.iter().any(|&c| shape.on_edge(shape.zyx(c))) {
            for c in comp {
                out.data_mut()[c] = true;
            }
        }
    }
    out
}

/// A single smoothed-noise blob mask.
pub fn blob_mask(params: &BlobParams, rng: &mut ChaCha8Rng) -> BinaryMask {
    let shape = Shape::new(&params.dims).expect("blob dims");
    let e = shape.ext3();
    let used: Vec<usize> = (3 - shape.rank()..3).collect();
    let min_ext = used.iter().map(|&k| e[k]).min().unwrap() as f64;
    let radius = min_ext * rng.random_range(params.radius.0..params.radius.1);
    let mut center = [0.0; 3];
    for &k in &used {
        let mid = (e[k] as f64 - 1.0) / 2.0;
        let jitter = (e[k] as f64 / 2.0 - radius * 1.4).max(0.0) * 0.5;
        center[k] = mid + rng.random_range(-jitter..=jitter);
    }
    let noise = smooth_noise(&shape, (radius / 3.0).max(1.0) as usize, rng);
    let notch = (rng.random::<f64>() < params.concavity).then(|| {
        let mut dir = [0.0; 3];
        let normal = Normal::new(0.0, 1.0).unwrap();
        for &k in &used {
            dir[k] = normal.sample(rng);
        }
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-9);
        let mut c = center;
        for &k in &used {
            c[k] += dir[k] / norm * radius;
        }
        (c, radius * rng.random_range(0.35..0.5))
    });
    let mut data = vec![false; shape.len()];
    for (i, cell) in data.iter_mut().enumerate() {
        let p = shape.zyx(i);
        let r = used
            .iter()
            .map(|&k| (p[k] as f64 - center[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        let mut inside = 1.0 - r / radius + params.roughness * noise[i] > 0.0;
        if let Some((c, nr)) = notch {
            let dn = used.iter().map(|&k| (p[k] as f64 - c[k]).powi(2)).sum::<f64>().sqrt();
            inside &= dn > nr;
        }
        *cell = inside;
    }
    clean_mask(&BinaryMask::from_shape(shape, data).unwrap())
}

pub fn render(gt: &BinaryMask, params: &BlobParams, rng: &mut ChaCha8Rng) -> ScalarGrid {
    let normal = Normal::new(0.0, params.noise_sigma.max(0.0)).unwrap();
    let data = gt
        .data()
        .iter()
        .map(|&b| {
            let base = if b { params.fg_intensity } else { params.bg_intensity };
            base + normal.sample(rng)
        })
        .collect();
    ScalarGrid::new(gt.dims(), &vec![1.0; gt.dims().len()], data).unwrap()
}

pub fn sample(params: &BlobParams, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = blob_mask(params, &mut rng);
    let image = render(&gt, params, &mut rng);
    Sample {
        id: format!("blob-{seed}"),
        image,
        gt,
    }
}

/// `n` samples with seeds `seed, seed + 1, ...`.
pub fn corpus(n: usize, params: &BlobParams, seed: u64) -> Vec<Sample> {
    (0..n as u64).map(|i| sample(params, seed + i)).collect()
}
