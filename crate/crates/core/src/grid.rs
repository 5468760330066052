//! Dense 2D/3D grid containers and the geometric operations on them.
//!
//! All grids are stored row-major with axis order `(z,) y, x`. Internally a
//! 2D grid is treated as a 3D grid with a single slice, which lets every
//! neighborhood routine share one code path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neighborhood used by geodesic sweeps, CRF edges and surface extraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// 4-neighborhood in 2D, 6-neighborhood in 3D.
    #[default]
    Face,
    /// 8-neighborhood in 2D, 26-neighborhood in 3D.
    Full,
}

impl Connectivity {
    /// All neighbor offsets `(dz, dy, dx)`.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let nonzero = (dz != 0) as u8 + (dy != 0) as u8 + (dx != 0) as u8;
                    let keep = match self {
                        Connectivity::Face => nonzero == 1,
                        Connectivity::Full => nonzero >= 1,
                    };
                    if keep {
                        out.push([dz, dy, dx]);
                    }
                }
            }
        }
        out
    }

    /// Offsets that are lexicographically positive, so each undirected edge is
    /// visited exactly once.
    pub fn forward_offsets(self) -> Vec<[isize; 3]> {
        self.offsets()
            .into_iter()
            .filter(|o| *o > [0, 0, 0])
            .collect()
    }
}

/// Extents of a 2D or 3D grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    rank: usize,
    ext: [usize; 3],
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.len() != 2 && dims.len() != 3 {
            return Err(Error::InvalidGrid(format!(
                "rank must be 2 or 3, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidGrid(format!("zero extent in {dims:?}")));
        }
        let mut ext = [1; 3];
        ext[3 - dims.len()..].copy_from_slice(dims);
        Ok(Shape {
            rank: dims.len(),
            ext,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dims(&self) -> &[usize] {
        &self.ext[3 - self.rank..]
    }

    /// Extents padded to three axes.
    pub fn ext3(&self) -> [usize; 3] {
        self.ext
    }

    pub fn len(&self) -> usize {
        self.ext.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, coords: &[usize]) -> bool {
        coords.len() == self.rank && coords.iter().zip(self.dims()).all(|(c, d)| c < d)
    }

    pub fn linear(&self, coords: &[usize]) -> Result<usize> {
        if !self.contains(coords) {
            return Err(Error::OutOfBounds(format!(
                "index {coords:?} outside grid {:?}",
                self.dims()
            )));
        }
        let mut p = [0; 3];
        p[3 - self.rank..].copy_from_slice(coords);
        Ok(self.linear3(p))
    }

    #[inline]
    pub fn linear3(&self, p: [usize; 3]) -> usize {
        (p[0] * self.ext[1] + p[1]) * self.ext[2] + p[2]
    }

    #[inline]
    pub fn zyx(&self, lin: usize) -> [usize; 3] {
        let x = lin % self.ext[2];
        let rest = lin / self.ext[2];
        [rest / self.ext[1], rest % self.ext[1], x]
    }

    pub fn index(&self, lin: usize) -> GridIndex {
        let p = self.zyx(lin);
        GridIndex(p[3 - self.rank..].to_vec())
    }

    /// Neighbor of `lin` at `offset`, or `None` when it leaves the grid.
    #[inline]
    pub fn offset(&self, p: [usize; 3], o: [isize; 3]) -> Option<usize> {
        let mut q = [0usize; 3];
        for k in 0..3 {
            let v = p[k] as isize + o[k];
            if v < 0 || v as usize >= self.ext[k] {
                return None;
            }
            q[k] = v as usize;
        }
        Some(self.linear3(q))
    }

    /// True when the cell touches the outside of the grid along an in-use axis.
    pub fn on_edge(&self, p: [usize; 3]) -> bool {
        (3 - self.rank..3).any(|k| p[k] == 0 || p[k] + 1 == self.ext[k])
    }
}

/// A pixel or voxel position, axis order `(z,) y, x`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridIndex(pub Vec<usize>);

impl GridIndex {
    pub fn coords(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for GridIndex {
    fn from(v: Vec<usize>) -> Self {
        GridIndex(v)
    }
}

/// Inclusive axis-aligned box.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl BoundingBox {
    pub fn new(lo: Vec<usize>, hi: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::Parameter(format!("invalid box lo={lo:?} hi={hi:?}")));
        }
        Ok(BoundingBox { lo, hi })
    }

    pub fn full(shape: &Shape) -> Self {
        BoundingBox {
            lo: vec![0; shape.rank()],
            hi: shape.dims().iter().map(|d| d - 1).collect(),
        }
    }

    pub fn extent(&self) -> Vec<usize> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l + 1).collect()
    }

    pub fn contains(&self, coords: &[usize]) -> bool {
        coords.len() == self.lo.len()
            && coords
                .iter()
                .enumerate()
                .all(|(k, &c)| c >= self.lo[k] && c <= self.hi[k])
    }

    pub fn check_within(&self, shape: &Shape) -> Result<()> {
        if self.lo.len() != shape.rank() || self.hi.iter().zip(shape.dims()).any(|(h, d)| h >= d) {
            return Err(Error::OutOfBounds(format!(
                "box lo={:?} hi={:?} outside grid {:?}",
                self.lo,
                self.hi,
                shape.dims()
            )));
        }
        Ok(())
    }

    fn lo3(&self) -> [usize; 3] {
        let mut p = [0; 3];
        p[3 - self.lo.len()..].copy_from_slice(&self.lo);
        p
    }
}

fn pad_spacing(spacing: &[f64]) -> [f64; 3] {
    let mut s = [1.0; 3];
    s[3 - spacing.len()..].copy_from_slice(spacing);
    s
}

/// Dense scalar field with physical spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    shape: Shape,
    spacing: [f64; 3],
    data: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(dims: &[usize], spacing: &[f64], data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        Self::from_shape(shape, spacing, data)
    }

    pub fn from_shape(shape: Shape, spacing: &[f64], data: Vec<f64>) -> Result<Self> {
        if spacing.len() != shape.rank() {
            return Err(Error::InvalidGrid(format!(
                "spacing has {} entries for rank {}",
                spacing.len(),
                shape.rank()
            )));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidGrid(format!("spacing {spacing:?} not positive")));
        }
        if data.len() != shape.len() {
            return Err(Error::InvalidGrid(format!(
                "data length {} != {}",
                data.len(),
                shape.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "non-finite value at {:?}",
                shape.index(i).0
            )));
        }
        Ok(ScalarGrid {
            shape,
            spacing: pad_spacing(spacing),
            data,
        })
    }

    /// Unit-spacing grid filled with `value`.
    pub fn filled(dims: &[usize], value: f64) -> Result<Self> {
        let shape = Shape::new(dims)?;
        Ok(ScalarGrid {
            shape,
            spacing: [1.0; 3],
            data: vec![value; shape.len()],
        })
    }

    /// Same shape and spacing as `self`, new data. Used internally where the
    /// values are known finite.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        ScalarGrid {
            shape: self.shape,
            spacing: self.spacing,
            data,
        }
    }

    pub(crate) fn from_parts(shape: Shape, spacing3: [f64; 3], data: Vec<f64>) -> Self {
        ScalarGrid {
            shape,
            spacing: spacing3,
            data,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[3 - self.shape.rank()..]
    }

    pub(crate) fn spacing3(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, coords: &[usize]) -> Result<f64> {
        Ok(self.data[self.shape.linear(coords)?])
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Copy out the sub-grid covered by `bbox`.
    pub fn crop(&self, bbox: &BoundingBox) -> Result<ScalarGrid> {
        bbox.check_within(&self.shape)?;
        let out_shape = Shape::new(&bbox.extent())?;
        let data = crop_cells(&self.shape, &out_shape, bbox.lo3(), &self.data);
        Ok(ScalarGrid {
            shape: out_shape,
            spacing: self.spacing,
            data,
        })
    }

    /// Write `self` into `target` with its origin at `lo`.
    pub fn paste_into(&self, target: &mut ScalarGrid, lo: &[usize]) -> Result<()> {
        let bbox = paste_box(&self.shape, lo)?;
        bbox.check_within(&target.shape)?;
        paste_cells(&self.shape, &target.shape, bbox.lo3(), &self.data, &mut target.data);
        Ok(())
    }

    /// Corner-aligned (bi/tri)linear resampling to `target_dims`.
    pub fn resample(&self, target_dims: &[usize]) -> Result<ScalarGrid> {
        if target_dims.len() != self.rank() {
            return Err(Error::Shape(format!(
                "cannot resample rank {} grid to {:?}",
                self.rank(),
                target_dims
            )));
        }
        let out_shape = Shape::new(target_dims)?;
        if out_shape == self.shape {
            return Ok(self.clone());
        }
        let src = self.shape.ext3();
        let dst = out_shape.ext3();
        let axes: Vec<Vec<(usize, usize, f64)>> =
            (0..3).map(|k| axis_weights(src[k], dst[k])).collect();
        // output spacing keeps the physical extent of the sampled lattice
        let mut spacing = self.spacing;
        for k in 0..3 {
            if dst[k] > 1 && src[k] > 1 {
                spacing[k] = self.spacing[k] * (src[k] - 1) as f64 / (dst[k] - 1) as f64;
            }
        }
        let mut data = Vec::with_capacity(out_shape.len());
        for &(z0, z1, wz) in &axes[0] {
            for &(y0, y1, wy) in &axes[1] {
                for &(x0, x1, wx) in &axes[2] {
                    let at = |z: usize, y: usize, x: usize| self.data[(z * src[1] + y) * src[2] + x];
                    let lerp = |a: f64, b: f64, w: f64| if w == 0.0 { a } else { a + (b - a) * w };
                    let c00 = lerp(at(z0, y0, x0), at(z0, y0, x1), wx);
                    let c01 = lerp(at(z0, y1, x0), at(z0, y1, x1), wx);
                    let c10 = lerp(at(z1, y0, x0), at(z1, y0, x1), wx);
                    let c11 = lerp(at(z1, y1, x0), at(z1, y1, x1), wx);
                    let c0 = lerp(c00, c01, wy);
                    let c1 = lerp(c10, c11, wy);
                    data.push(lerp(c0, c1, wz));
                }
            }
        }
        Ok(ScalarGrid {
            shape: out_shape,
            spacing,
            data,
        })
    }

    /// Standardize to zero mean and unit population standard deviation.
    pub fn normalize(&self) -> Normalized {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        let var = self.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std.is_nan() || std <= 1e-12 * mean.abs().max(1.0) {
            return Normalized {
                grid: self.with_data(vec![0.0; self.data.len()]),
                degenerate: true,
            };
        }
        Normalized {
            grid: self.with_data(self.data.iter().map(|v| (v - mean) / std).collect()),
            degenerate: false,
        }
    }
}

/// Result of [`ScalarGrid::normalize`]; `degenerate` marks a constant input.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub grid: ScalarGrid,
    pub degenerate: bool,
}

/// Source index pairs and weight for each output sample along one axis.
fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|o| {
            if src == 1 || dst == 1 {
                return (0, 0, 0.0);
            }
            // exact rational position avoids drift at the far endpoint
            let num = o * (src - 1);
            let den = dst - 1;
            let i0 = num / den;
            let rem = num % den;
            if rem == 0 {
                (i0, i0, 0.0)
            } else {
                (i0, i0 + 1, rem as f64 / den as f64)
            }
        })
        .collect()
}

fn paste_box(shape: &Shape, lo: &[usize]) -> Result<BoundingBox> {
    if lo.len() != shape.rank() {
        return Err(Error::Shape(format!("origin {lo:?} has wrong rank")));
    }
    let hi = lo.iter().zip(shape.dims()).map(|(l, d)| l + d - 1).collect();
    BoundingBox::new(lo.to_vec(), hi)
}

fn crop_cells<T: Copy>(src: &Shape, out: &Shape, lo: [usize; 3], data: &[T]) -> Vec<T> {
    let e = out.ext3();
    let mut v = Vec::with_capacity(out.len());
    for z in 0..e[0] {
        for y in 0..e[1] {
            let start = src.linear3([lo[0] + z, lo[1] + y, lo[2]]);
            v.extend_from_slice(&data[start..start + e[2]]);
        }
    }
    v
}

fn paste_cells<T: Copy>(src: &Shape, dst: &Shape, lo: [usize; 3], data: &[T], out: &mut [T]) {
    let e = src.ext3();
    for z in 0..e[0] {
        for y in 0..e[1] {
            let from = src.linear3([z, y, 0]);
            let to = dst.linear3([lo[0] + z, lo[1] + y, lo[2]]);
            out[to..to + e[2]].copy_from_slice(&data[from..from + e[2]]);
        }
    }
}

/// Per-cell boolean field.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    shape: Shape,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: &[usize], data: Vec<bool>) -> Result<Self> {
        Self::from_shape(Shape::new(dims)?, data)
    }

    pub fn from_shape(shape: Shape, data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidGrid(format!(
                "mask length {} != {}",
                data.len(),
                shape.len()
            )));
        }
        Ok(BinaryMask { shape, data })
    }

    pub fn empty(shape: Shape) -> Self {
        BinaryMask {
            data: vec![false; shape.len()],
            shape,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn get(&self, coords: &[usize]) -> Result<bool> {
        Ok(self.data[self.shape.linear(coords)?])
    }

    pub fn set(&mut self, coords: &[usize], v: bool) -> Result<()> {
        let i = self.shape.linear(coords)?;
        self.data[i] = v;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Mask of cells where `grid >= threshold`.
    pub fn threshold(grid: &ScalarGrid, threshold: f64) -> Self {
        BinaryMask {
            shape: *grid.shape(),
            data: grid.data().iter().map(|&v| v >= threshold).collect(),
        }
    }

    /// 0/1 scalar view with unit spacing.
    pub fn to_grid(&self) -> ScalarGrid {
        ScalarGrid::from_parts(
            self.shape,
            [1.0; 3],
            self.data.iter().map(|&b| b as u8 as f64).collect(),
        )
    }

    pub fn crop(&self, bbox: &BoundingBox) -> Result<BinaryMask> {
        bbox.check_within(&self.shape)?;
        let out = Shape::new(&bbox.extent())?;
        Ok(BinaryMask {
            data: crop_cells(&self.shape, &out, bbox.lo3(), &self.data),
            shape: out,
        })
    }

    /// Place `self` into an otherwise-empty mask of `target` shape at `lo`.
    pub fn embed(&self, target: Shape, lo: &[usize]) -> Result<BinaryMask> {
        let bbox = paste_box(&self.shape, lo)?;
        bbox.check_within(&target)?;
        let mut out = BinaryMask::empty(target);
        paste_cells(&self.shape, &target, bbox.lo3(), &self.data, &mut out.data);
        Ok(out)
    }

    /// Bounding box of the foreground, `None` when empty.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let rank = self.shape.rank();
        let mut lo = vec![usize::MAX; rank];
        let mut hi = vec![0; rank];
        let mut any = false;
        for (i, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            any = true;
            let c = self.shape.index(i).0;
            for k in 0..rank {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        any.then_some(BoundingBox { lo, hi })
    }

    /// Foreground cells with a background face-neighbor or lying on the grid edge.
    pub fn boundary(&self, conn: Connectivity) -> Vec<usize> {
        let offsets = conn.offsets();
        (0..self.data.len())
            .filter(|&i| {
                if !self.data[i] {
                    return false;
                }
                let p = self.shape.zyx(i);
                if self.shape.on_edge(p) {
                    return true;
                }
                offsets
                    .iter()
                    .any(|&o| matches!(self.shape.offset(p, o), Some(j) if !self.data[j]))
            })
            .collect()
    }

    pub fn xor(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(BinaryMask {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a ^ b).collect(),
        })
    }
}

/// Linearly resample a probability-like grid and threshold it.
pub fn resample_mask(prob: &ScalarGrid, target_dims: &[usize], threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!("threshold {threshold} not in (0,1)")));
    }
    let r = prob.resample(target_dims)?;
    Ok(BinaryMask::threshold(&r, threshold))
}
