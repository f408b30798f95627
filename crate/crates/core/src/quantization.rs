//! Unbalanced quantization: the energy of approximating the raster measure
//! by finitely many sites with optimal masses, its gradient in the site
//! positions, the generalized Lloyd iteration and an L-BFGS alternative.
//!
//! All integrals run over the raster Voronoi cells of the sites; since the
//! per-site integrand increases with distance, the Voronoi cell is where a
//! site wins the pointwise minimum.

use rand::seq::index::sample_weighted;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{check_points, dist_sq, GridDensity, Point};
use crate::laguerre::{assign_unchecked, reduce_rows, Tessellation, RESIDUAL};
use crate::lbfgs::{self, inf_norm, LbfgsOptions, Termination};
use crate::models::EntropyModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantMethod {
    Lloyd,
    Bfgs,
}

impl std::str::FromStr for QuantMethod {
    type Err = crate::error::UotError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lloyd" => Ok(QuantMethod::Lloyd),
            "bfgs" | "lbfgs" => Ok(QuantMethod::Bfgs),
            other => Err(invalid(format!("unknown quantization method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantOptions {
    pub max_iter: usize,
    /// Stop when `max |dJ/dx| <= grad_tol * mu(Omega)`.
    pub grad_tol: f64,
    /// Budget of energy evaluations (one per Lloyd step).
    pub max_evals: usize,
    /// Seed of the initial sampling.
    pub seed: u64,
    pub memory: usize,
}

impl Default for QuantOptions {
    fn default() -> Self {
        QuantOptions { max_iter: 200, grad_tol: 1e-6, max_evals: usize::MAX, seed: 0, memory: 10 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuantizationState {
    pub points: Vec<Point>,
    pub masses: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub energy_history: Vec<f64>,
    pub termination: Termination,
    /// Sites whose optimal mass is zero.
    pub zero_mass_sites: Vec<usize>,
}

/// One Lloyd update; `stalled[i]` marks sites without reachable mass,
/// which are left in place.
#[derive(Clone, Debug, PartialEq)]
pub struct LloydStep {
    pub points: Vec<Point>,
    pub stalled: Vec<bool>,
}

/// Per-site integrals over the raster Voronoi cells (already multiplied by
/// the cell area).
struct CellSums {
    energy: Vec<f64>,
    mass: Vec<f64>,
    r0: Vec<f64>,
    rx: Vec<f64>,
    ry: Vec<f64>,
}

const CHANNELS: usize = 5;

fn cell_sums(g: &GridDensity, points: &[Point], model: &EntropyModel) -> CellSums {
    let m = points.len();
    let nx = g.nx();
    let xs = g.column_centers();
    let ys = g.row_centers();
    let values = g.values();
    let inv_eps = 1.0 / model.epsilon;
    let sums = reduce_rows(g.ny(), CHANNELS * m, |j, acc| {
        let y = ys[j];
        for (i, x) in xs.iter().enumerate() {
            let v = values[j * nx + i];
            if v == 0.0 {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut k = 0;
            for (s, p) in points.iter().enumerate() {
                let d2 = dist_sq([*x, y], *p);
                if d2 < best {
                    best = d2;
                    k = s;
                }
            }
            let t = best.sqrt() * inv_eps;
            let r = model.r_kernel(t) * v;
            acc[k] += model.profile(t) * v;
            acc[m + k] += model.mass_density(t) * v;
            acc[2 * m + k] += r;
            acc[3 * m + k] += r * x;
            acc[4 * m + k] += r * y;
        }
    });
    let a = g.cell_area();
    let chunk = |c: usize| sums[c * m..(c + 1) * m].iter().map(|v| v * a).collect();
    CellSums { energy: chunk(0), mass: chunk(1), r0: chunk(2), rx: chunk(3), ry: chunk(4) }
}

impl CellSums {
    fn energy(&self) -> f64 {
        self.energy.iter().sum()
    }

    fn gradient(&self, points: &[Point], model: &EntropyModel) -> Vec<Point> {
        let s = 1.0 / (model.epsilon * model.epsilon);
        points
            .iter()
            .enumerate()
            .map(|(k, p)| {
                [
                    s * (p[0] * self.r0[k] - self.rx[k]),
                    s * (p[1] * self.r0[k] - self.ry[k]),
                ]
            })
            .collect()
    }

    fn lloyd(&self, points: &[Point]) -> LloydStep {
        let mut out = points.to_vec();
        let mut stalled = vec![false; points.len()];
        for k in 0..points.len() {
            if self.r0[k] > 0.0 {
                out[k] = [self.rx[k] / self.r0[k], self.ry[k] / self.r0[k]];
            } else {
                stalled[k] = true;
            }
        }
        LloydStep { points: out, stalled }
    }
}

fn check_sites(g: &GridDensity, points: &[Point]) -> Result<()> {
    if points.is_empty() {
        return Err(invalid("at least one site is required"));
    }
    check_points(points, Some(g.domain()))
}

fn grad_norm(grad: &[Point]) -> f64 {
    grad.iter().fold(0.0, |m, p| m.max(p[0].abs()).max(p[1].abs()))
}

/// Quantization energy `J`: the raster integral of
/// `min_i -F*(-c(x, x_i))`, with `F(0)` where every cost is infinite.
pub fn quant_energy(g: &GridDensity, points: &[Point], model: &EntropyModel) -> Result<f64> {
    check_sites(g, points)?;
    Ok(cell_sums(g, points, model).energy())
}

/// Optimal masses `m_i = int_{V_i} (F*)'(-c(x, x_i)) dmu`.
pub fn quant_masses(g: &GridDensity, points: &[Point], model: &EntropyModel) -> Result<Vec<f64>> {
    check_sites(g, points)?;
    Ok(cell_sums(g, points, model).mass)
}

/// Gradient of [`quant_energy`] with respect to each site position.
pub fn quant_gradient(g: &GridDensity, points: &[Point], model: &EntropyModel) -> Result<Vec<Point>> {
    check_sites(g, points)?;
    Ok(cell_sums(g, points, model).gradient(points, model))
}

/// Moves every site to the kernel-weighted barycenter of its Voronoi cell.
pub fn lloyd_step(g: &GridDensity, points: &[Point], model: &EntropyModel) -> Result<LloydStep> {
    check_sites(g, points)?;
    Ok(cell_sums(g, points, model).lloyd(points))
}

/// Tessellation at `w = 0` and the transported part of the raster measure
/// for sites carrying their optimal masses. Unlike the dual routines this
/// accepts sites whose optimal mass is zero.
pub fn quant_marginal(
    g: &GridDensity,
    points: &[Point],
    model: &EntropyModel,
) -> Result<(Tessellation, GridDensity)> {
    check_sites(g, points)?;
    let t = assign_unchecked(g, points, model, &vec![0.0; points.len()]);
    let values = g
        .values()
        .iter()
        .zip(t.labels())
        .zip(t.phi())
        .map(|((v, l), phi)| if *l == RESIDUAL || *v == 0.0 { 0.0 } else { v * model.f_star_prime(-phi) })
        .collect();
    let rho = g.with_values(values)?;
    Ok((t, rho))
}

/// `count` distinct raster cell centers sampled without replacement with
/// probability proportional to the density.
pub fn initial_points(g: &GridDensity, count: usize, seed: u64) -> Result<Vec<Point>> {
    let positive = g.values().iter().filter(|v| **v > 0.0).count();
    if count == 0 || count > positive {
        return Err(invalid(format!(
            "cannot place {count} sites on {positive} cells of positive density"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = g.values();
    let picked = sample_weighted(&mut rng, values.len(), |i| values[i], count)
        .map_err(|e| invalid(format!("weighted sampling failed: {e}")))?;
    Ok(picked.into_iter().map(|i| g.center(i)).collect())
}

/// Minimizes the quantization energy over `count` sites started from a
/// seeded density-proportional sample.
pub fn solve_quantization(
    g: &GridDensity,
    count: usize,
    model: &EntropyModel,
    method: QuantMethod,
    opts: &QuantOptions,
) -> Result<QuantizationState> {
    if !(g.total_mass() > 0.0) {
        return Err(invalid("the raster measure has no mass"));
    }
    let start = initial_points(g, count, opts.seed)?;
    solve_quantization_from(g, start, model, method, opts)
}

/// As [`solve_quantization`], from given initial sites.
pub fn solve_quantization_from(
    g: &GridDensity,
    start: Vec<Point>,
    model: &EntropyModel,
    method: QuantMethod,
    opts: &QuantOptions,
) -> Result<QuantizationState> {
    check_sites(g, &start)?;
    let tol = opts.grad_tol * g.total_mass();
    let (points, iterations, evaluations, history, termination) = match method {
        QuantMethod::Lloyd => run_lloyd(g, start, model, opts, tol),
        QuantMethod::Bfgs => run_bfgs(g, start, model, opts, tol),
    };
    let sums = cell_sums(g, &points, model);
    let grad = sums.gradient(&points, model);
    let zero_mass_sites = (0..points.len()).filter(|k| sums.mass[*k] <= 0.0).collect();
    Ok(QuantizationState {
        energy: sums.energy(),
        grad_norm: grad_norm(&grad),
        masses: sums.mass,
        points,
        iterations,
        evaluations,
        energy_history: history,
        termination,
        zero_mass_sites,
    })
}

type RunResult = (Vec<Point>, usize, usize, Vec<f64>, Termination);

fn run_lloyd(
    g: &GridDensity,
    mut points: Vec<Point>,
    model: &EntropyModel,
    opts: &QuantOptions,
    tol: f64,
) -> RunResult {
    let mut history = Vec::new();
    let mut evaluations = 0;
    let mut iterations = 0;
    let termination = loop {
        let sums = cell_sums(g, &points, model);
        evaluations += 1;
        history.push(sums.energy());
        if grad_norm(&sums.gradient(&points, model)) <= tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }
        if evaluations >= opts.max_evals {
            break Termination::MaxEvaluations;
        }
        let step = sums.lloyd(&points);
        // Distinct sites can only collide if two cells share a barycenter,
        // which needs a degenerate raster; keep the old site then.
        let mut next = step.points;
        for k in 0..next.len() {
            if next[..k].contains(&next[k]) {
                next[k] = points[k];
            }
        }
        points = next;
        iterations += 1;
    };
    (points, iterations, evaluations, history, termination)
}

fn run_bfgs(
    g: &GridDensity,
    start: Vec<Point>,
    model: &EntropyModel,
    opts: &QuantOptions,
    tol: f64,
) -> RunResult {
    let domain = *g.domain();
    // The energy is minimized over sites clamped to the domain; the
    // gradient of a clamped coordinate is zero.
    let unflatten = |x: &[f64]| -> (Vec<Point>, Vec<[bool; 2]>) {
        x.chunks(2)
            .map(|c| {
                let p = domain.project([c[0], c[1]]);
                (p, [p[0] == c[0], p[1] == c[1]])
            })
            .unzip()
    };
    let x0: Vec<f64> = start.iter().flat_map(|p| [p[0], p[1]]).collect();
    let lopts = LbfgsOptions {
        memory: opts.memory,
        max_iter: opts.max_iter,
        max_evals: opts.max_evals,
        grad_tol: tol,
        ..Default::default()
    };
    let res = lbfgs::minimize(
        |x| {
            let (pts, free) = unflatten(x);
            let sums = cell_sums(g, &pts, model);
            let grad = sums.gradient(&pts, model);
            let flat = grad
                .iter()
                .zip(&free)
                .flat_map(|(gr, f)| [if f[0] { gr[0] } else { 0.0 }, if f[1] { gr[1] } else { 0.0 }])
                .collect();
            (sums.energy(), flat)
        },
        x0,
        &lopts,
    );
    debug_assert!(inf_norm(&res.grad).is_finite());
    let (points, _) = unflatten(&res.x);
    (points, res.iterations, res.evaluations, res.history, res.termination)
}
