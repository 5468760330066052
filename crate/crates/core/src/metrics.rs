//! Dice overlap and average symmetric surface distance.

use serde::{Deserialize, Serialize};

use crate::edt::squared_edt;
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Connectivity, GridIndex};

fn same_dims(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// `2|P ∩ G| / (|P| + |G|)`; two empty masks score 1.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_dims(pred, gt)?;
    let (mut inter, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        inter += (p && g) as usize;
        np += p as usize;
        ng += g as usize;
    }
    if np + ng == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (np + ng) as f64)
}

/// Boundary cells of a mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurfaceSet {
    pub points: Vec<GridIndex>,
}

pub fn surface(mask: &BinaryMask, conn: Connectivity) -> SurfaceSet {
    SurfaceSet {
        points: mask
            .boundary(conn)
            .into_iter()
            .map(|i| mask.shape().index(i))
            .collect(),
    }
}

/// Mean of nearest-surface distances taken over both surfaces.
pub fn assd(pred: &BinaryMask, gt: &BinaryMask, spacing: &[f64], conn: Connectivity) -> Result<f64> {
    same_dims(pred, gt)?;
    if spacing.len() != pred.shape().rank() || spacing.iter().any(|s| s.is_nan() || *s <= 0.0) {
        return Err(Error::Parameter(format!("bad spacing {spacing:?}")));
    }
    if pred.count() == 0 || gt.count() == 0 {
        return Err(Error::Parameter("ASSD undefined for an empty mask".into()));
    }
    let shape = *pred.shape();
    let mut sp3 = [1.0; 3];
    sp3[3 - spacing.len()..].copy_from_slice(spacing);
    let sp = pred.boundary(conn);
    let sg = gt.boundary(conn);
    let as_source = |cells: &[usize]| {
        let mut v = vec![false; shape.len()];
        for &c in cells {
            v[c] = true;
        }
        v
    };
    let to_g = squared_edt(&shape, sp3, &as_source(&sg));
    let to_p = squared_edt(&shape, sp3, &as_source(&sp));
    let total: f64 = sp.iter().map(|&i| to_g[i].sqrt()).sum::<f64>()
        + sg.iter().map(|&i| to_p[i].sqrt()).sum::<f64>();
    Ok(total / (sp.len() + sg.len()) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub dice: f64,
    /// `None` when either mask is empty.
    pub assd: Option<f64>,
}

pub fn score(pred: &BinaryMask, gt: &BinaryMask, spacing: &[f64]) -> Result<Scores> {
    Ok(Scores {
        dice: dice(pred, gt)?,
        assd: assd(pred, gt, spacing, Connectivity::Face).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::new(
            &[h, w],
            rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect(),
        )
        .unwrap()
    }

    #[test]
    fn dice_fixtures() {
        let a = mask_from(&["##..", "##..", "....", "...."]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let b = mask_from(&["....", "....", "..##", "..##"]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        // 8 cells each, 6 shared
        let p = mask_from(&["####", "####", "....", "...."]);
        let g = mask_from(&["..##", "####", "##..", "...."]);
        assert_eq!(p.count(), 8);
        assert_eq!(g.count(), 8);
        assert_eq!(dice(&p, &g).unwrap(), 0.75);
        let e = mask_from(&["....", "...."]);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        let f = mask_from(&["#...", "...."]);
        assert_eq!(dice(&e, &f).unwrap(), 0.0);
        assert!(dice(&e, &a).is_err());
    }

    #[test]
    fn assd_fixtures() {
        let a = mask_from(&["..#...", "......"]);
        assert_eq!(assd(&a, &a, &[1.0, 1.0], Connectivity::Face).unwrap(), 0.0);
        let p = mask_from(&["#......", "......."]);
        let g = mask_from(&[".....#.", "......."]);
        assert_eq!(assd(&p, &g, &[1.0, 1.0], Connectivity::Face).unwrap(), 5.0);
        assert_eq!(assd(&p, &g, &[1.0, 2.0], Connectivity::Face).unwrap(), 10.0);
        let e = mask_from(&[".......", "......."]);
        assert!(assd(&p, &e, &[1.0, 1.0], Connectivity::Face).is_err());
    }
}
