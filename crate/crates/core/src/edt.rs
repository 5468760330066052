//! Exact squared Euclidean distance transform (lower envelope of parabolas,
//! one separable pass per axis) with per-axis spacing.

use crate::grid::Shape;

/// Squared distance from every cell to the nearest cell with `source[i]`.
/// Cells are `f64::INFINITY` when there is no source at all.
pub(crate) fn squared_edt(shape: &Shape, spacing3: [f64; 3], source: &[bool]) -> Vec<f64> {
    let mut f: Vec<f64> = source
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let e = shape.ext3();
    let strides = [e[1] * e[2], e[2], 1];
    let mut line = Vec::new();
    let mut out = Vec::new();
    let mut hull = Envelope::default();
    for axis in 0..3 {
        let n = e[axis];
        if n == 1 {
            continue;
        }
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for i in 0..e[a] {
            for j in 0..e[b] {
                let base = i * strides[a] + j * strides[b];
                line.clear();
                line.extend((0..n).map(|k| f[base + k * strides[axis]]));
                hull.transform(&line, spacing3[axis], &mut out);
                for k in 0..n {
                    f[base + k * strides[axis]] = out[k];
                }
            }
        }
    }
    f
}

/// Unit-spacing Euclidean distance from each `inside` cell to the nearest
/// cell that is not inside, counting the region beyond the grid edge as
/// outside. Zero for cells not inside.
pub(crate) fn interior_depth(shape: &Shape, inside: &[bool]) -> Vec<f64> {
    let outside: Vec<bool> = inside.iter().map(|b| !b).collect();
    let d2 = squared_edt(shape, [1.0; 3], &outside);
    let e = shape.ext3();
    let used = 3 - shape.rank()..3;
    (0..shape.len())
        .map(|i| {
            if !inside[i] {
                return 0.0;
            }
            let p = shape.zyx(i);
            let edge = used
                .clone()
                .map(|k| (p[k] + 1).min(e[k] - p[k]) as f64)
                .fold(f64::INFINITY, f64::min);
            d2[i].sqrt().min(edge)
        })
        .collect()
}

#[derive(Default)]
struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Envelope {
    fn transform(&mut self, f: &[f64], h: f64, out: &mut Vec<f64>) {
        let n = f.len();
        out.clear();
        self.v.clear();
        self.z.clear();
        let pos = |q: usize| q as f64 * h;
        for q in 0..n {
            if !f[q].is_finite() {
                continue;
            }
            loop {
                match self.v.last() {
                    None => {
                        self.v.push(q);
                        self.z.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&p) => {
                        let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p)))
                            / (2.0 * (pos(q) - pos(p)));
                        if s <= *self.z.last().unwrap() {
                            self.v.pop();
                            self.z.pop();
                        } else {
                            self.v.push(q);
                            self.z.push(s);
                            break;
                        }
                    }
                }
            }
        }
        if self.v.is_empty() {
            out.resize(n, f64::INFINITY);
            return;
        }
        let mut k = 0;
        for q in 0..n {
            let x = pos(q);
            while k + 1 < self.v.len() && self.z[k + 1] < x {
                k += 1;
            }
            let p = self.v[k];
            let d = x - pos(p);
            out.push(d * d + f[p]);
        }
    }
}
