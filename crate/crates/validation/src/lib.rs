//! Quantitative validation criteria for `uot-core`, each reproducible at
//! desk scale on a 512 x 512 raster. Every check returns a [`Report`] with
//! the measured quantities, so a failing criterion documents by how much.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uot_core::asymptotics::{cell_b, cell_b_prime, lattice_bounds, optimal_density, HEXAGON_CONSTANT};
use uot_core::dual::{dual_gradient, dual_objective, dual_value_and_gradient, duality_gap, solve_weights, SolverOptions};
use uot_core::laguerre::voronoi_assign;
use uot_core::lbfgs::Termination;
use uot_core::quantization::{
    quant_energy, quant_gradient, solve_quantization, solve_quantization_from, QuantMethod, QuantOptions,
};
use uot_core::{presets, DiscreteMeasure, Domain, EntropyModel, GridDensity, ModelKind, Point, Result};

/// Raster resolution used throughout.
pub const N: usize = 512;

#[derive(Clone, Debug)]
pub struct Report {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Report {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<36} {} ({:.1}s): {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

pub type Check = fn() -> Result<(bool, String)>;

/// All criteria in order, as `(id, name, check)`.
pub fn criteria() -> Vec<(u32, &'static str, Check)> {
    vec![
        (1, "hexagon constant", hexagon_constant as Check),
        (2, "balanced reduction", balanced_reduction),
        (3, "duality-gap certificate", duality_certificate),
        (4, "Hellinger limit", hellinger_limit),
        (5, "Wasserstein limit", wasserstein_limit),
        (6, "gradient suites", gradient_suites),
        (7, "WFR degenerate optimum", wfr_degenerate_optimum),
        (8, "Lloyd behavior", lloyd_behavior),
        (9, "asymptotic density, balanced", balanced_density),
        (10, "asymptotic density, unbalanced", unbalanced_density),
        (11, "regime ordering", regime_ordering),
        (12, "cross-formulation consistency", cross_formulation),
    ]
}

/// Runs one criterion; an error counts as a failure.
pub fn run(id: u32, name: &'static str, check: Check) -> Report {
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Report { id, name, passed, detail, elapsed: start.elapsed() }
}

fn unit_square(n: usize) -> GridDensity {
    GridDensity::uniform(Domain::square(1.0).expect("valid"), n, n, 1.0).expect("valid")
}

fn list(values: &[f64], f: impl Fn(f64) -> String) -> String {
    format!("[{}]", values.iter().map(|v| f(*v)).collect::<Vec<_>>().join(", "))
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

pub fn hexagon_constant() -> Result<(bool, String)> {
    let model = EntropyModel::unit(ModelKind::W2);
    let (mut worst_b, mut worst_bp) = (0.0f64, 0.0f64);
    for z in [0.25, 1.0, 4.0] {
        worst_b = worst_b.max(rel(cell_b(&model, z)?, HEXAGON_CONSTANT / z));
        worst_bp = worst_bp.max(rel(cell_b_prime(&model, z)?, -HEXAGON_CONSTANT / (z * z)));
    }
    Ok((worst_b <= 1e-5 && worst_bp <= 1e-4, format!("max rel. error B {worst_b:.2e}, B' {worst_bp:.2e}")))
}

pub fn balanced_reduction() -> Result<(bool, String)> {
    let g = unit_square(N);
    let nu = presets::four_sites(1.0);
    let sol = solve_weights(&g, &nu, &EntropyModel::unit(ModelKind::W2), &SolverOptions::default())?;
    let bound = 1e-3 * g.total_mass();
    Ok((
        sol.duality_gap <= bound,
        format!(
            "marginal defect {:.2e} <= {bound:.0e}, W2^2 = {:.6}, {} iterations ({:?})",
            sol.duality_gap, sol.g_value, sol.iterations, sol.termination
        ),
    ))
}

pub fn duality_certificate() -> Result<(bool, String)> {
    let g = unit_square(N);
    let mu = g.total_mass();
    let nu = presets::four_sites(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [ModelKind::Ghk, ModelKind::Wfr, ModelKind::Qr] {
        let model = EntropyModel::unit(kind);
        let sol = solve_weights(&g, &nu, &model, &SolverOptions::default())?;
        let mut min_gap = f64::INFINITY;
        for _ in 0..100 {
            let w: Vec<f64> = (0..nu.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            min_gap = min_gap.min(duality_gap(&g, &nu, &model, &w)?);
        }
        ok &= sol.duality_gap <= 1e-4 * mu && min_gap >= -1e-9 * mu;
        parts.push(format!("{kind}: gap {:.1e}, min random gap {min_gap:.1e}", sol.duality_gap));
    }
    Ok((ok, parts.join("; ")))
}

fn wfr_values(eps: &[f64]) -> Result<Vec<f64>> {
    let g = unit_square(N);
    let nu = presets::four_sites(1.0);
    eps.iter()
        .map(|e| {
            let model = EntropyModel::new(ModelKind::Wfr, *e)?;
            Ok(solve_weights(&g, &nu, &model, &SolverOptions::default())?.g_value)
        })
        .collect()
}

pub fn hellinger_limit() -> Result<(bool, String)> {
    let eps = [0.2, 0.1, 0.05, 0.02];
    let values = wfr_values(&eps)?;
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let last = *values.last().expect("nonempty");
    let listed: Vec<String> = eps.iter().zip(&values).map(|(e, v)| format!("{e}: {v:.4}")).collect();
    Ok((
        increasing && (1.9..=2.0 + 1e-9).contains(&last),
        format!("sup G by eps [{}], target >= 1.9 at 0.02 (limit 2)", listed.join(", ")),
    ))
}

pub fn wasserstein_limit() -> Result<(bool, String)> {
    let g = unit_square(N);
    let w2 = solve_weights(&g, &presets::four_sites(1.0), &EntropyModel::unit(ModelKind::W2), &SolverOptions::default())?
        .g_value;
    let eps = [2.0, 5.0, 10.0];
    let values = wfr_values(&eps)?;
    let diffs: Vec<f64> = eps.iter().zip(&values).map(|(e, v)| (e * e * v - w2).abs()).collect();
    let decreasing = diffs.windows(2).all(|d| d[1] < d[0]);
    let last = *diffs.last().expect("nonempty");
    Ok((
        decreasing && last <= 0.05 * w2,
        format!("W2^2 = {w2:.6}, |eps^2 WFR^2 - W2^2| at eps 2, 5, 10 = {}", list(&diffs, |d| format!("{d:.2e}"))),
    ))
}

fn random_points(rng: &mut ChaCha8Rng, count: usize) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::new();
    while pts.len() < count {
        let p = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
        if pts.iter().all(|q| uot_core::geometry::dist(*q, p) > 0.05) {
            pts.push(p);
        }
    }
    pts
}

pub fn gradient_suites() -> Result<(bool, String)> {
    let g = unit_square(N);
    let bound = 5.0 * g.cell_width() * g.total_mass();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in ModelKind::ALL {
        let model = EntropyModel::new(kind, 0.5)?;
        let (mut dual_err, mut quant_err) = (0.0f64, 0.0f64);
        for _ in 0..20 {
            let pts = random_points(&mut rng, 5);
            let masses: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..0.4)).collect();
            let nu = DiscreteMeasure::new(pts.clone(), masses, None)?;
            let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let grad = dual_gradient(&g, &nu, &model, &w)?;
            let h = 1e-4;
            for i in 0..w.len() {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[i] += h;
                wm[i] -= h;
                let fd = (dual_objective(&g, &nu, &model, &wp)? - dual_objective(&g, &nu, &model, &wm)?) / (2.0 * h);
                dual_err = dual_err.max((fd - grad[i]).abs());
            }
            let qgrad = quant_gradient(&g, &pts, &model)?;
            for i in 0..pts.len() {
                for c in 0..2 {
                    let (mut pp, mut pm) = (pts.clone(), pts.clone());
                    pp[i][c] += h;
                    pm[i][c] -= h;
                    let fd = (quant_energy(&g, &pp, &model)? - quant_energy(&g, &pm, &model)?) / (2.0 * h);
                    quant_err = quant_err.max((fd - qgrad[i][c]).abs());
                }
            }
        }
        let conj_err = conjugate_derivative_error(&EntropyModel::unit(kind));
        ok &= dual_err <= bound && quant_err <= bound && conj_err <= 1e-6;
        parts.push(format!("{kind}: dual {dual_err:.1e}, quant {quant_err:.1e}, F*' {conj_err:.1e}"));
    }
    Ok((ok, format!("{} (bound {bound:.1e})", parts.join("; "))))
}

/// Largest relative error of `f_star_prime` against central differences of
/// `f_star`, away from the kink of the quadratic model.
fn conjugate_derivative_error(model: &EntropyModel) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..=80 {
        let z = -5.0 + 0.1 * k as f64 + 0.0123;
        let h = 1e-5;
        let fd = (model.f_star(z + h) - model.f_star(z - h)) / (2.0 * h);
        let d = model.f_star_prime(z);
        let err = if d == 0.0 { fd.abs() } else { ((fd - d) / d).abs() };
        worst = worst.max(err);
    }
    worst
}

pub fn wfr_degenerate_optimum() -> Result<(bool, String)> {
    let g = unit_square(N);
    let eps = 0.1;
    let model = EntropyModel::new(ModelKind::Wfr, eps)?;
    let pts = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]];
    let energy = quant_energy(&g, &pts, &model)?;
    let d = g.domain();
    let lower = lattice_bounds(&model, d.area(), d.perimeter(), pts.len(), eps)?.lower;
    let r = rel(energy, lower);
    Ok((r <= 1e-3, format!("energy {energy:.6}, |Omega| B(eps^2 M / |Omega|) = {lower:.6}, rel. {r:.1e}")))
}

pub fn lloyd_behavior() -> Result<(bool, String)> {
    let g = presets::gaussian_bump(N, N)?;
    let slack = 1e-9 * g.total_mass();
    let opts = QuantOptions { max_iter: 100, grad_tol: 0.0, ..QuantOptions::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    let mut w2_points = Vec::new();
    for kind in ModelKind::ALL {
        let model = EntropyModel::unit(kind);
        let s = solve_quantization(&g, 16, &model, QuantMethod::Lloyd, &opts)?;
        let worst_rise = s.energy_history.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        ok &= worst_rise <= slack && s.energy_history.len() == 101;
        parts.push(format!("{kind}: {} steps, max rise {worst_rise:.1e}", s.iterations));
        if kind == ModelKind::W2 {
            w2_points = s.points;
        }
    }
    // Continue the balanced run to a fixed point and check the centroids.
    let model = EntropyModel::unit(ModelKind::W2);
    let long = QuantOptions { max_iter: 2000, ..QuantOptions::default() };
    let s = solve_quantization_from(&g, w2_points, &model, QuantMethod::Lloyd, &long)?;
    let offset = centroid_offset(&g, &s.points)?;
    let limit = 2.0 * g.cell_width();
    ok &= offset <= limit;
    parts.push(format!("W2 fixed point ({:?}): centroid offset {offset:.1e} <= {limit:.1e}", s.termination));
    Ok((ok, parts.join("; ")))
}

/// Largest distance between a site and the density-weighted centroid of its
/// raster Voronoi cell.
fn centroid_offset(g: &GridDensity, points: &[Point]) -> Result<f64> {
    let t = voronoi_assign(g, points)?;
    let mut sums = vec![[0.0; 3]; points.len()];
    for (idx, v) in g.values().iter().enumerate() {
        let c = g.center(idx);
        let k = t.label(idx).expect("voronoi cells cover the raster");
        sums[k][0] += v;
        sums[k][1] += v * c[0];
        sums[k][2] += v * c[1];
    }
    Ok(points
        .iter()
        .zip(&sums)
        .map(|(p, s)| uot_core::geometry::dist(*p, [s[1] / s[0], s[2] / s[0]]))
        .fold(0.0, f64::max))
}

pub fn balanced_density() -> Result<(bool, String)> {
    let g = unit_square(N);
    let model = EntropyModel::unit(ModelKind::W2);
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.5, 1.0, 2.0] {
        let r = optimal_density(&g, &model, p)?;
        let d_err = r.density.values().iter().map(|d| rel(*d, p)).fold(0.0, f64::max);
        let e_err = rel(r.energy, HEXAGON_CONSTANT / p);
        ok &= d_err <= 1e-6 && e_err <= 1e-4;
        parts.push(format!("P {p}: D rel. {d_err:.1e}, energy rel. {e_err:.1e}"));
    }
    Ok((ok, parts.join("; ")))
}

pub fn unbalanced_density() -> Result<(bool, String)> {
    let g = presets::gaussian_bump(N, N)?;
    let model = EntropyModel::unit(ModelKind::Wfr);
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.01, 1.0, 10.0] {
        let r = optimal_density(&g, &model, p)?;
        let zero = r.density.values().iter().filter(|d| **d == 0.0).count() as f64 / g.len() as f64;
        let mass_err = rel(r.density.total_mass(), p);
        ok &= zero >= 0.05 && mass_err <= 1e-4;
        parts.push(format!("P {p}: zero cells {:.1}%, mass rel. {mass_err:.1e}", 100.0 * zero));
    }
    Ok((ok, parts.join("; ")))
}

pub fn regime_ordering() -> Result<(bool, String)> {
    let g = unit_square(N);
    let m = 256;
    let mut energies = Vec::new();
    for scale in [1e-3, 1.0, 1e3] {
        let eps = (scale / m as f64).sqrt();
        let model = EntropyModel::new(ModelKind::Wfr, eps)?;
        let s = solve_quantization(&g, m, &model, QuantMethod::Lloyd, &QuantOptions::default())?;
        energies.push(s.energy);
    }
    let ordered = energies[2] < energies[1] && energies[1] < energies[0];
    let floor = 0.95 * g.total_mass() * EntropyModel::unit(ModelKind::Wfr).f_zero();
    Ok((
        ordered && energies[0] >= floor,
        format!("energies at eps^2 M = 1e-3, 1, 1e3: {}; floor {floor:.2}", list(&energies, |e| format!("{e:.5}"))),
    ))
}

pub fn cross_formulation() -> Result<(bool, String)> {
    let g = unit_square(N);
    let bound = 5.0 * g.cell_width() * g.total_mass();
    let opts = QuantOptions { max_iter: 2000, ..QuantOptions::default() };
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in ModelKind::ALL {
        let model = EntropyModel::new(kind, 0.5)?;
        let s = solve_quantization(&g, 8, &model, QuantMethod::Lloyd, &opts)?;
        let nu = DiscreteMeasure::new(s.points.clone(), s.masses.clone(), None)?;
        let (g0, grad) = dual_value_and_gradient(&g, &nu, &model, &vec![0.0; nu.len()])?;
        let value_err = (g0 - s.energy).abs();
        let grad_norm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ok &= s.termination == Termination::GradientTolerance && value_err <= bound && grad_norm <= bound;
        parts.push(format!("{kind} ({:?}): |G(0) - J| {value_err:.1e}, |grad G(0)| {grad_norm:.1e}", s.termination));
    }
    Ok((ok, format!("{} (bound {bound:.1e})", parts.join("; "))))
}
