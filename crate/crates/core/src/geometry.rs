//! Foreground splitting and masked feature aggregation.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::ScaleSpec;

/// Splits the masked points of a cloud into an even `nx x ny x nz` grid
/// over their bounding box.
///
/// Interior boundary points fall into the higher cell, the maximum
/// coordinate into the last cell. Empty cells are omitted; the rest are
/// returned in x-major cell order.
pub fn split_foreground(
    coords: &[[f32; 3]],
    mask: &[bool],
    scale: ScaleSpec,
) -> Result<Vec<Vec<usize>>> {
    Ok(foreground_cells(coords, mask, scale)?
        .into_iter()
        .map(|(_, members)| members)
        .collect())
}

/// Like [`split_foreground`], keeping each non-empty cell's linear grid index.
pub fn foreground_cells(
    coords: &[[f32; 3]],
    mask: &[bool],
    scale: ScaleSpec,
) -> Result<Vec<(usize, Vec<usize>)>> {
    if coords.len() != mask.len() {
        return Err(Error::InvalidArgument(format!(
            "{} coordinates for a mask of {}",
            coords.len(),
            mask.len()
        )));
    }
    let fg: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if fg.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &fg {
        for a in 0..3 {
            let v = coords[i][a] as f64;
            lo[a] = lo[a].min(v);
            hi[a] = hi[a].max(v);
        }
    }
    let cuts = [scale.nx, scale.ny, scale.nz];
    let cell_of = |v: f64, a: usize| -> usize {
        let extent = hi[a] - lo[a];
        if extent <= 0.0 {
            return 0;
        }
        let c = ((v - lo[a]) / extent * cuts[a] as f64).floor() as usize;
        c.min(cuts[a] - 1)
    };

    let mut cells = vec![Vec::new(); scale.cells()];
    for &i in &fg {
        let p = coords[i];
        let (cx, cy, cz) = (
            cell_of(p[0] as f64, 0),
            cell_of(p[1] as f64, 1),
            cell_of(p[2] as f64, 2),
        );
        cells[(cx * scale.ny + cy) * scale.nz + cz].push(i);
    }
    Ok(cells
        .into_iter()
        .enumerate()
        .filter(|(_, c)| !c.is_empty())
        .collect())
}

/// Mean of the rows selected by `mask`.
pub fn mean_foreground_feature<T: Scalar>(
    features: ArrayView2<T>,
    mask: &[bool],
) -> Result<Array1<T>> {
    if mask.len() != features.nrows() {
        return Err(Error::InvalidArgument(format!(
            "mask of {} for {} feature rows",
            mask.len(),
            features.nrows()
        )));
    }
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    mean_rows(features, &rows)
}

/// Mean of the listed rows.
pub fn mean_rows<T: Scalar>(features: ArrayView2<T>, rows: &[usize]) -> Result<Array1<T>> {
    if rows.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let mut acc = Array1::<T>::zeros(features.ncols());
    for &r in rows {
        acc += &features.row(r);
    }
    acc /= T::of(rows.len() as f64);
    Ok(acc)
}

/// Norm below which a vector is treated as zero by [`l2_normalize`].
pub const NORM_GUARD: f64 = 1e-12;

/// L2-normalizes `v`, returning the unit vector and the original norm.
/// Vectors with norm below [`NORM_GUARD`] map to the first basis vector.
pub fn l2_normalize<T: Scalar>(v: ArrayView1<T>) -> (Array1<T>, T) {
    let norm = v.dot(&v).sqrt();
    if norm.as_f64() < NORM_GUARD {
        let mut e = Array1::zeros(v.len());
        if !e.is_empty() {
            e[0] = T::one();
        }
        (e, norm)
    } else {
        (v.mapv(|x| x / norm), norm)
    }
}

/// Backward pass of [`l2_normalize`]: `(g - y (y . g)) / |x|`, zero under the guard.
pub fn l2_normalize_backward<T: Scalar>(
    unit: ArrayView1<T>,
    norm: T,
    grad: ArrayView1<T>,
) -> Array1<T> {
    if norm.as_f64() < NORM_GUARD {
        return Array1::zeros(unit.len());
    }
    let proj = unit.dot(&grad);
    (&grad - &unit.mapv(|u| u * proj)).mapv(|x| x / norm)
}

/// Row-wise L2 normalization of a matrix (guarded like [`l2_normalize`]).
pub fn normalize_rows<T: Scalar>(m: ArrayView2<T>) -> ndarray::Array2<T> {
    let mut out = m.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let (u, _) = l2_normalize(row.view());
        row.assign(&u);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit_cube_grid() -> Vec<[f32; 3]> {
        let mut pts = Vec::new();
        for i in 0..=4 {
            for j in 0..=4 {
                for k in 0..=2 {
                    pts.push([i as f32 / 4.0, j as f32 / 4.0, k as f32 / 2.0]);
                }
            }
        }
        pts
    }

    #[test]
    fn split_unit_cube_two_by_two() {
        let mut pts = unit_cube_grid();
        pts.push([0.25, 0.25, 0.5]);
        pts.push([0.75, 0.75, 0.5]);
        let n = pts.len();
        let mask = vec![true; n];
        let cells = split_foreground(&pts, &mask, ScaleSpec::new(2, 2, 1).unwrap()).unwrap();
        assert_eq!(cells.len(), 4);
        // cell order is x-major: (0,0), (0,1), (1,0), (1,1)
        assert!(cells[0].contains(&(n - 2)));
        assert!(cells[3].contains(&(n - 1)));
        // boundary x = 0.5 belongs to the higher cell, max coordinate to the last
        let boundary = pts.iter().position(|p| *p == [0.5, 0.0, 0.0]).unwrap();
        assert!(cells[2].contains(&boundary));
        let corner = pts.iter().position(|p| *p == [1.0, 1.0, 1.0]).unwrap();
        assert!(cells[3].contains(&corner));
    }

    #[test]
    fn coarsest_scale_is_identity() {
        let pts = unit_cube_grid();
        let mask: Vec<bool> = (0..pts.len()).map(|i| i % 3 == 0).collect();
        let cells = split_foreground(&pts, &mask, ScaleSpec::COARSEST).unwrap();
        let expected: Vec<usize> = (0..pts.len()).filter(|i| i % 3 == 0).collect();
        assert_eq!(cells, vec![expected]);
    }

    #[test]
    fn degenerate_bbox_gives_one_cell() {
        let pts = vec![[0.3, 0.3, 0.3]; 10];
        let cells = split_foreground(&pts, &[true; 10], ScaleSpec::new(2, 2, 1).unwrap()).unwrap();
        assert_eq!(cells.len(), 1);
        assert!(matches!(
            split_foreground(&pts, &[false; 10], ScaleSpec::COARSEST),
            Err(Error::EmptyForeground)
        ));
    }

    #[test]
    fn mean_feature_cases() {
        let f = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(
            mean_foreground_feature(f.view(), &[true, true]).unwrap(),
            array![0.5, 0.5]
        );
        assert_eq!(
            mean_foreground_feature(f.view(), &[false, true]).unwrap(),
            array![0.0, 1.0]
        );
        let g = array![[2.0, 0.0], [0.0, 2.0], [2.0, 2.0]];
        assert_eq!(
            mean_foreground_feature(g.view(), &[true, true, false]).unwrap(),
            array![1.0, 1.0]
        );
        assert!(mean_foreground_feature(g.view(), &[false; 3]).is_err());
    }

    #[test]
    fn normalize_guard() {
        let (u, n) = l2_normalize(array![0.0, 0.0, 0.0].view());
        assert_eq!(u, array![1.0, 0.0, 0.0]);
        assert_eq!(n, 0.0);
        let (u, _) = l2_normalize(array![3.0, 4.0].view());
        assert!((u[0] - 0.6f64).abs() < 1e-15);
    }
}
