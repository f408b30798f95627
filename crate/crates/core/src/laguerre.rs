//! Generalized Laguerre and Voronoi tessellations of the raster.
//!
//! Every raster cell center `x` is labeled with the site minimizing
//! `c(x, x_i) - w_i` over the sites with finite cost; cells where every cost
//! is infinite form the residual set. Assignment is brute force over all
//! sites, ties go to the lowest index.

use rayon::prelude::*;

use crate::error::{invalid, Result, UotError};
use crate::geometry::{dist_sq, DiscreteMeasure, GridDensity, Point};
use crate::models::EntropyModel;

/// Label of raster cells outside every generalized Laguerre cell.
pub const RESIDUAL: u32 = u32::MAX;

/// Per-raster-cell site labels (0-based, or [`RESIDUAL`]) together with
/// `phi_w(x) = min_i c(x, x_i) - w_i` at every cell center.
#[derive(Clone, Debug)]
pub struct Tessellation {
    nx: usize,
    ny: usize,
    num_sites: usize,
    labels: Vec<u32>,
    phi: Vec<f64>,
    weights: Vec<f64>,
}

impl Tessellation {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// `phi_w` at each cell center, `+inf` on the residual set.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn weights_used(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self, index: usize) -> Option<usize> {
        match self.labels[index] {
            RESIDUAL => None,
            l => Some(l as usize),
        }
    }

    pub fn residual_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == RESIDUAL).count()
    }

    /// Labels in the export convention: sites are 1-based, residual is 0.
    pub fn export_labels(&self) -> Vec<u32> {
        self.labels
            .iter()
            .map(|l| if *l == RESIDUAL { 0 } else { l + 1 })
            .collect()
    }

    pub(crate) fn check_grid(&self, g: &GridDensity) -> Result<()> {
        if self.nx != g.nx() || self.ny != g.ny() {
            return Err(UotError::ShapeMismatch {
                expected: format!("{}x{}", g.nx(), g.ny()),
                actual: format!("{}x{}", self.nx, self.ny),
            });
        }
        Ok(())
    }
}

/// Masses of the cells of a tessellation under the raster measure.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMasses {
    pub masses: Vec<f64>,
    pub residual: f64,
}

impl CellMasses {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.residual
    }
}

/// Scans every raster cell with `score(site, d2)` and keeps the smallest
/// finite score. Scores of `+inf` never win.
fn scan<S>(g: &GridDensity, points: &[Point], score: S) -> (Vec<u32>, Vec<f64>)
where
    S: Fn(usize, f64) -> f64 + Sync,
{
    let xs = g.column_centers();
    let ys = g.row_centers();
    let nx = g.nx();
    let mut labels = vec![RESIDUAL; g.len()];
    let mut phi = vec![f64::INFINITY; g.len()];
    labels
        .par_chunks_mut(nx)
        .zip(phi.par_chunks_mut(nx))
        .enumerate()
        .for_each(|(j, (lrow, prow))| {
            let y = ys[j];
            for (i, x) in xs.iter().enumerate() {
                let mut best = f64::INFINITY;
                let mut arg = RESIDUAL;
                for (k, p) in points.iter().enumerate() {
                    let s = score(k, dist_sq([*x, y], *p));
                    if s < best {
                        best = s;
                        arg = k as u32;
                    }
                }
                lrow[i] = arg;
                prow[i] = best;
            }
        });
    (labels, phi)
}

/// Generalized Laguerre tessellation for weights `w`.
pub fn assign_cells(
    g: &GridDensity,
    nu: &DiscreteMeasure,
    model: &EntropyModel,
    w: &[f64],
) -> Result<Tessellation> {
    if nu.is_empty() {
        return Err(invalid("at least one site is required"));
    }
    if w.len() != nu.len() {
        return Err(invalid(format!("{} weights for {} sites", w.len(), nu.len())));
    }
    if let Some(v) = w.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("weights must be finite, found {v}")));
    }
    Ok(assign_unchecked(g, nu.points(), model, w))
}

pub(crate) fn assign_unchecked(
    g: &GridDensity,
    points: &[Point],
    model: &EntropyModel,
    w: &[f64],
) -> Tessellation {
    let (labels, phi) = scan(g, points, |k, d2| model.cost_from_sq(d2) - w[k]);
    Tessellation {
        nx: g.nx(),
        ny: g.ny(),
        num_sites: points.len(),
        labels,
        phi,
        weights: w.to_vec(),
    }
}

/// Plain Voronoi tessellation; `phi` holds the distance to the nearest site.
pub fn voronoi_assign(g: &GridDensity, points: &[Point]) -> Result<Tessellation> {
    if points.is_empty() {
        return Err(invalid("at least one site is required"));
    }
    crate::geometry::check_points(points, None)?;
    Ok(voronoi_unchecked(g, points))
}

pub(crate) fn voronoi_unchecked(g: &GridDensity, points: &[Point]) -> Tessellation {
    let (labels, mut phi) = scan(g, points, |_, d2| d2);
    phi.iter_mut().for_each(|v| *v = v.sqrt());
    Tessellation {
        nx: g.nx(),
        ny: g.ny(),
        num_sites: points.len(),
        labels,
        phi,
        weights: vec![0.0; points.len()],
    }
}

/// Runs `visit(row, acc)` for every raster row in parallel, each with its own
/// zeroed accumulator of length `width`, and sums the accumulators in row
/// order so results do not depend on the thread count.
pub(crate) fn reduce_rows<F>(ny: usize, width: usize, visit: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let rows: Vec<Vec<f64>> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let mut acc = vec![0.0; width];
            visit(j, &mut acc);
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for row in rows {
        total.iter_mut().zip(row).for_each(|(t, v)| *t += v);
    }
    total
}

/// `mu(C_i)` for every site plus `mu(R)`.
pub fn cell_masses(g: &GridDensity, t: &Tessellation) -> Result<CellMasses> {
    t.check_grid(g)?;
    let m = t.num_sites;
    let nx = g.nx();
    let values = g.values();
    let sums = reduce_rows(g.ny(), m + 1, |j, acc| {
        for idx in j * nx..(j + 1) * nx {
            let slot = match t.labels[idx] {
                RESIDUAL => m,
                l => l as usize,
            };
            acc[slot] += values[idx];
        }
    });
    let a = g.cell_area();
    Ok(CellMasses {
        masses: sums[..m].iter().map(|s| s * a).collect(),
        residual: sums[m] * a,
    })
}

/// Gap between the second-best and the best score at every raster cell
/// (`+inf` with a single finite candidate). Small margins mark cells that
/// sit on a tessellation boundary.
pub fn assignment_margins(
    g: &GridDensity,
    nu: &DiscreteMeasure,
    model: &EntropyModel,
    w: &[f64],
) -> Result<Vec<f64>> {
    if w.len() != nu.len() {
        return Err(invalid(format!("{} weights for {} sites", w.len(), nu.len())));
    }
    let points = nu.points();
    Ok((0..g.len())
        .into_par_iter()
        .map(|idx| {
            let x = g.center(idx);
            let mut best = f64::INFINITY;
            let mut second = f64::INFINITY;
            for (k, p) in points.iter().enumerate() {
                let s = model.cost_from_sq(dist_sq(x, *p)) - w[k];
                if s < best {
                    second = best;
                    best = s;
                } else if s < second {
                    second = s;
                }
            }
            second - best
        })
        .collect())
}
