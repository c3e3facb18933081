use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{evaluate, ArchSpec, MetricKind, ParamVector};

pub const DEFAULT_RESOLUTION: (usize, usize) = (25, 25);
pub const DEFAULT_MARGIN: f64 = 0.2;

/// An affine plane through parameter space: `origin + x * u + y * v`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneBasis {
    pub origin: ParamVector,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// In-plane positions of the three anchors, origin first.
    pub anchor_coords: [(f64, f64); 3],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal basis of the plane through three models, `theta1` at the origin and
/// `theta2` along the positive x axis.
pub fn plane_basis(theta1: &ParamVector, theta2: &ParamVector, theta3: &ParamVector) -> Result<PlaneBasis> {
    let d2 = theta2.sub(theta1)?;
    let d3 = theta3.sub(theta1)?;
    let n2 = norm(&d2);
    if n2 == 0.0 || !n2.is_finite() {
        return Err(Error::DegeneratePlane("second anchor coincides with the origin".into()));
    }
    let u: Vec<f64> = d2.iter().map(|x| x / n2).collect();
    let x3 = dot(&d3, &u);
    let mut w: Vec<f64> = d3.iter().zip(&u).map(|(d, u)| d - x3 * u).collect();
    // a second Gram-Schmidt pass removes what the first left behind in floating point
    let c = dot(&w, &u);
    w.iter_mut().zip(&u).for_each(|(w, u)| *w -= c * u);
    let y3 = norm(&w);
    if y3 <= 1e-10 * norm(&d3) || y3 == 0.0 {
        return Err(Error::DegeneratePlane("third anchor is collinear with the first two".into()));
    }
    let v = w.iter().map(|x| x / y3).collect();
    Ok(PlaneBasis {
        origin: theta1.clone(),
        u,
        v,
        anchor_coords: [(0.0, 0.0), (n2, 0.0), (x3, y3)],
    })
}

impl PlaneBasis {
    pub fn point(&self, x: f64, y: f64) -> ParamVector {
        let values = self
            .origin
            .values
            .iter()
            .zip(self.u.iter().zip(&self.v))
            .map(|(o, (u, v))| o + (x * u + y * v))
            .collect();
        ParamVector {
            values,
            arch_signature: self.origin.arch_signature,
        }
    }

    /// Same plane with the axes swapped.
    pub fn transposed(&self) -> PlaneBasis {
        let [a, b, c] = self.anchor_coords;
        PlaneBasis {
            origin: self.origin.clone(),
            u: self.v.clone(),
            v: self.u.clone(),
            anchor_coords: [(a.1, a.0), (b.1, b.0), (c.1, c.0)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    /// Bounding box of `coords`, widened on every side by `margin` times its span.
    pub fn around(coords: &[(f64, f64)], margin: f64) -> Extent {
        let fold = |f: fn(&(f64, f64)) -> f64| {
            let lo = coords.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = coords.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            let pad = margin * (hi - lo);
            (lo - pad, hi + pad)
        };
        let (x_min, x_max) = fold(|c| c.0);
        let (y_min, y_max) = fold(|c| c.1);
        Extent { x_min, x_max, y_min, y_max }
    }

    pub fn transposed(&self) -> Extent {
        Extent {
            x_min: self.y_min,
            x_max: self.y_max,
            y_min: self.x_min,
            y_max: self.x_max,
        }
    }
}

/// `n` evenly spaced points from `lo` to `hi`, both ends exact.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|j| if j + 1 == n { hi } else { lo + j as f64 * step })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub anchors: [String; 3],
    pub anchor_coords: [(f64, f64); 3],
    pub extent: Extent,
    /// `(nx, ny)`.
    pub resolution: (usize, usize),
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[i][j]` is the error `1 - score` at `(xs[j], ys[i])`.
    pub values: Vec<Vec<f64>>,
    pub metric: MetricKind,
}

pub fn landscape_grid(
    basis: &PlaneBasis,
    anchors: [String; 3],
    extent: Extent,
    resolution: (usize, usize),
    arch: &ArchSpec,
    dataset: &LabeledDataset,
    metric: MetricKind,
) -> Result<LandscapeGrid> {
    let (nx, ny) = resolution;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument(format!("grid resolution must be at least 2x2, got {nx}x{ny}")));
    }
    if !(extent.x_min < extent.x_max && extent.y_min < extent.y_max) {
        return Err(Error::InvalidArgument(format!("empty extent {extent:?}")));
    }
    let xs = linspace(extent.x_min, extent.x_max, nx);
    let ys = linspace(extent.y_min, extent.y_max, ny);
    let flat: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / nx, k % nx);
            evaluate(&basis.point(xs[j], ys[i]), arch, dataset, metric).map(|s| 1.0 - s)
        })
        .collect::<Result<_>>()?;
    let values = flat.chunks(nx).map(<[f64]>::to_vec).collect();
    Ok(LandscapeGrid {
        anchors,
        anchor_coords: basis.anchor_coords,
        extent,
        resolution,
        xs,
        ys,
        values,
        metric,
    })
}

/// Interior cells strictly lower than all eight neighbours. Plateaus never count.
pub fn count_local_minima(values: &[Vec<f64>]) -> usize {
    let ny = values.len();
    let nx = values.first().map_or(0, Vec::len);
    if ny < 3 || nx < 3 {
        return 0;
    }
    let mut count = 0;
    for i in 1..ny - 1 {
        for j in 1..nx - 1 {
            let c = values[i][j];
            let strict = (i - 1..=i + 1)
                .flat_map(|a| (j - 1..=j + 1).map(move |b| (a, b)))
                .filter(|&(a, b)| (a, b) != (i, j))
                .all(|(a, b)| c < values[a][b]);
            if strict {
                count += 1;
            }
        }
    }
    count
}

impl LandscapeGrid {
    pub fn local_minima(&self) -> usize {
        count_local_minima(&self.values)
    }
}

#[derive(Serialize)]
struct LandscapeMeta<'a> {
    anchors: &'a [String; 3],
    anchor_coords: &'a [(f64, f64); 3],
    extent: &'a Extent,
    resolution: (usize, usize),
    metric: MetricKind,
    value: &'static str,
    local_minima: usize,
}

/// `x,y,error` rows (x fastest) to `csv_path`, plus the slice metadata as JSON.
pub fn write_landscape(grid: &LandscapeGrid, csv_path: &Path, meta_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(["x", "y", "error"])?;
    for (i, row) in grid.values.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            w.write_record([format!("{:?}", grid.xs[j]), format!("{:?}", grid.ys[i]), format!("{e:?}")])?;
        }
    }
    w.flush()?;
    let meta = LandscapeMeta {
        anchors: &grid.anchors,
        anchor_coords: &grid.anchor_coords,
        extent: &grid.extent,
        resolution: grid.resolution,
        metric: grid.metric,
        value: "1 - score",
        local_minima: grid.local_minima(),
    };
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}
