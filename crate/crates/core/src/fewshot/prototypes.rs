use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::mean_rows;
use crate::sampling::fps_partition;

/// A class representative in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub vector: Array1<f64>,
    /// Episode label; 0 is background.
    pub class: usize,
    /// Rows of the pooled class matrix that formed this prototype.
    pub members: Vec<usize>,
    /// Fraction of members whose true class matches `class`.
    pub purity: f64,
}

/// Pooled support points of one episode class.
#[derive(Debug, Clone)]
pub struct ClassPoints<'a> {
    pub class: usize,
    pub features: ArrayView2<'a, f64>,
    /// Whether each row truly belongs to `class` (evaluation bookkeeping).
    pub truly_in_class: &'a [bool],
}

fn purity(members: &[usize], truth: &[bool]) -> f64 {
    members.iter().filter(|&&i| truth[i]).count() as f64 / members.len() as f64
}

/// FPS seeds in feature space, nearest-seed grouping, one mean per group.
pub fn multi_prototypes(points: &ClassPoints<'_>, n_proto: usize) -> Result<Vec<Prototype>> {
    if points.features.nrows() == 0 {
        return Err(Error::EmptyForeground);
    }
    if points.truly_in_class.len() != points.features.nrows() {
        return Err(Error::InvalidArgument(
            "truth flags do not match feature rows".into(),
        ));
    }
    fps_partition(points.features, n_proto)?
        .into_iter()
        .map(|members| {
            Ok(Prototype {
                vector: mean_rows(points.features, &members)?,
                class: points.class,
                purity: purity(&members, points.truly_in_class),
                members,
            })
        })
        .collect()
}

/// Multi-prototypes for every class; classes without points are skipped.
pub fn multi_prototype_generation(
    classes: &[ClassPoints<'_>],
    n_proto: usize,
) -> Result<Vec<Prototype>> {
    let mut out = Vec::new();
    for c in classes {
        if c.features.nrows() == 0 {
            log::warn!("class {} has no support points; skipping", c.class);
            continue;
        }
        out.extend(multi_prototypes(c, n_proto)?);
    }
    Ok(out)
}

/// Single mean prototype over all of a class's points.
pub fn global_prototype(points: &ClassPoints<'_>) -> Result<Prototype> {
    let members: Vec<usize> = (0..points.features.nrows()).collect();
    Ok(Prototype {
        vector: mean_rows(points.features, &members)?,
        class: points.class,
        purity: purity(&members, points.truly_in_class),
        members,
    })
}
