//! Semi-discrete unbalanced transport: the concave dual objective over the
//! site weights, its gradient, the L-BFGS solver, and the primal side used
//! to certify solutions.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, UotError};
use crate::geometry::{dist_sq, DiscreteMeasure, GridDensity, Point};
use crate::laguerre::{assign_unchecked, reduce_rows, Tessellation, RESIDUAL};
use crate::lbfgs::{self, inf_norm, LbfgsOptions, Termination};
use crate::models::EntropyModel;

/// Relative tolerance (w.r.t. `max(1, mu(Omega))`) on `|rho(C_i) - m_i|`
/// under which the balanced primal counts the marginal constraint as met.
pub const W2_MARGINAL_TOL: f64 = 1e-3;

/// Relative mismatch `|nu(Omega) - mu(Omega)|` tolerated for the balanced model.
pub const W2_BALANCE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when `max |dG/dw_i| <= grad_tol * max(1, mu(Omega))`.
    pub grad_tol: f64,
    /// A solution is certified when its duality gap is at most
    /// `gap_tol * mu(Omega)`.
    pub gap_tol: f64,
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iter: 500, grad_tol: 1e-7, gap_tol: 1e-4, memory: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct TransportSolution {
    pub w: Vec<f64>,
    pub g_value: f64,
    pub grad_norm: f64,
    pub rho: GridDensity,
    pub rho_cell_masses: Vec<f64>,
    /// Primal minus dual value; the marginal defect for the balanced model.
    pub duality_gap: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// The gradient tolerance was reached.
    pub converged: bool,
    /// The duality gap is below the certification threshold.
    pub certified: bool,
    pub tessellation: Tessellation,
}

fn check_problem(nu: &DiscreteMeasure, w: &[f64]) -> Result<()> {
    if nu.is_empty() {
        return Err(invalid("at least one site is required"));
    }
    nu.require_positive_masses()?;
    if w.len() != nu.len() {
        return Err(invalid(format!("{} weights for {} sites", w.len(), nu.len())));
    }
    if let Some(v) = w.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("weights must be finite, found {v}")));
    }
    Ok(())
}

struct Evaluation {
    value: f64,
    grad: Vec<f64>,
    residual_mass: f64,
    tess: Tessellation,
}

fn evaluate(
    g: &GridDensity,
    points: &[Point],
    masses: &[f64],
    model: &EntropyModel,
    w: &[f64],
) -> Evaluation {
    let tess = assign_unchecked(g, points, model, w);
    let m = points.len();
    let nx = g.nx();
    let values = g.values();
    let (labels, phi) = (tess.labels(), tess.phi());
    // Layout: [sum F*(-phi) v | sum (F*)'(-phi) v | residual v].
    let sums = reduce_rows(g.ny(), 2 * m + 1, |j, acc| {
        for idx in j * nx..(j + 1) * nx {
            let v = values[idx];
            if v == 0.0 {
                continue;
            }
            match labels[idx] {
                RESIDUAL => acc[2 * m] += v,
                k => {
                    let k = k as usize;
                    let z = -phi[idx];
                    acc[k] += model.f_star(z) * v;
                    acc[m + k] += model.f_star_prime(z) * v;
                }
            }
        }
    });
    let a = g.cell_area();
    let residual_mass = sums[2 * m] * a;
    let mut inner = 0.0;
    for k in 0..m {
        inner += a * sums[k] + model.f_star(-w[k]) * masses[k];
    }
    let residual_term = if residual_mass > 0.0 {
        if model.is_balanced() {
            f64::NEG_INFINITY
        } else {
            model.f_zero() * residual_mass
        }
    } else {
        0.0
    };
    let grad = (0..m)
        .map(|k| model.f_star_prime(-w[k]) * masses[k] - a * sums[m + k])
        .collect();
    Evaluation { value: residual_term - inner, grad, residual_mass, tess }
}

/// Dual objective `G(w)`. Returns `-inf` for the balanced model when some
/// mass lies outside every cell.
pub fn dual_objective(
    g: &GridDensity,
    nu: &DiscreteMeasure,
    model: &EntropyModel,
    w: &[f64],
) -> Result<f64> {
    check_problem(nu, w)?;
    Ok(evaluate(g, nu.points(), nu.masses(), model, w).value)
}

/// Gradient of [`dual_objective`] in `w`.
pub fn dual_gradient(
    g: &GridDensity,
    nu: &DiscreteMeasure,
    model: &EntropyModel,
    w: &[f64],
) -> Result<Vec<f64>> {
    check_problem(nu, w)?;
    Ok(evaluate(g, nu.points(), nu.masses(), model, w).grad)
}

/// Value and gradient of the dual objective from one raster pass.
pub fn dual_value_and_gradient(
    g: &GridDensity,
    nu: &DiscreteMeasure,
    model: &EntropyModel,
    w: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_problem(nu, w)?;
    let e = evaluate(g, nu.points(), nu.masses(), model, w);
    Ok((e.value, e.grad))
}

/// Density of the optimal first marginal for weights `w`: `mu` times
/// `(F*)'(-phi_w)` on the cells and zero on the residual set.
pub fn reconstruct_rho(
    g: &GridDensity,
    nu: &DiscreteMeasure,
    model: &EntropyModel,
    t: &Tessellation,
    w: &[f64],
) -> Result<GridDensity> {
    check_problem(nu, w)?;
    t.check_grid(g)?;
    if t.weights_used() != w {
        return Err(invalid("tessellation was computed for different weights"));
    }
    let values = g
        .values()
        .iter()
        .zip(t.labels())
        .zip(t.phi())
        .map(|((v, l), phi)| {
            if *l == RESIDUAL || *v == 0.0 {
                0.0
            } else {
                v * model.f_star_prime(-phi)
            }
        })
        .collect();
    g.with_values(values)
}

/// `rho(C_i)` for every site.
pub fn rho_cell_masses(g: &GridDensity, t: &Tessellation, rho: &GridDensity) -> Result<Vec<f64>> {
    if !rho.same_grid(g) {
        return Err(invalid("rho must live on the raster of mu"));
    }
    Ok(crate::laguerre::cell_masses(rho, t)?.masses)
}

/// Primal tessellation objective of a candidate first marginal `rho`
/// supported on the cells of `t`.
pub fn primal_objective(
    g: &GridDensity,
    nu: &DiscreteMeasure,
    model: &EntropyModel,
    t: &Tessellation,
    w: &[f64],
    rho: &GridDensity,
) -> Result<f64> {
    check_problem(nu, w)?;
    t.check_grid(g)?;
    if !rho.same_grid(g) {
        return Err(invalid("rho must live on the raster of mu"));
    }
    if let Some(v) = rho.values().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(invalid(format!("rho must be finite and >= 0, found {v}")));
    }
    let m = nu.len();
    let nx = g.nx();
    let xs = g.column_centers();
    let ys = g.row_centers();
    let points = nu.points();
    let (mu, r, labels) = (g.values(), rho.values(), t.labels());
    // Layout: [rho per site | cost + entropy terms].
    let sums = reduce_rows(g.ny(), m + 1, |j, acc| {
        for i in 0..nx {
            let idx = j * nx + i;
            let (v, p) = (mu[idx], r[idx]);
            let k = labels[idx];
            if p > 0.0 && (v == 0.0 || k == RESIDUAL) {
                acc[m] = f64::INFINITY;
                continue;
            }
            if v == 0.0 {
                continue;
            }
            if k == RESIDUAL {
                acc[m] += model.f_zero() * v;
                continue;
            }
            let k = k as usize;
            let c = model.cost_from_sq(dist_sq([xs[i], ys[j]], points[k]));
            let cost_term = if p > 0.0 { c * p } else { 0.0 };
            let entropy = model.f_value(p / v).unwrap_or(f64::INFINITY) * v;
            acc[k] += p;
            acc[m] += cost_term + entropy;
        }
    });
    let a = g.cell_area();
    let mut total = a * sums[m];
    if model.is_balanced() {
        let tol = W2_MARGINAL_TOL * g.total_mass().max(1.0);
        for k in 0..m {
            if (a * sums[k] - nu.masses()[k]).abs() > tol {
                return Ok(f64::INFINITY);
            }
        }
        return Ok(total);
    }
    for k in 0..m {
        let mk = nu.masses()[k];
        total += model.f_value(a * sums[k] / mk)? * mk;
    }
    Ok(total)
}

/// Primal minus dual value at `w`, using the reconstructed marginal as the
/// primal candidate. For the balanced model, whose primal is finite only at
/// exact optimality, this is the marginal defect `max_i |m_i - mu(C_i(w))|`.
pub fn duality_gap(
    g: &GridDensity,
    nu: &DiscreteMeasure,
    model: &EntropyModel,
    w: &[f64],
) -> Result<f64> {
    check_problem(nu, w)?;
    let e = evaluate(g, nu.points(), nu.masses(), model, w);
    gap_from(g, nu, model, w, &e)
}

fn gap_from(
    g: &GridDensity,
    nu: &DiscreteMeasure,
    model: &EntropyModel,
    w: &[f64],
    e: &Evaluation,
) -> Result<f64> {
    if model.is_balanced() {
        // For W2 the gradient is exactly the marginal defect.
        return Ok(inf_norm(&e.grad));
    }
    let rho = reconstruct_rho(g, nu, model, &e.tess, w)?;
    Ok(primal_objective(g, nu, model, &e.tess, w, &rho)? - e.value)
}

/// Maximizes `G` by L-BFGS from `w = 0`, then reconstructs `rho` and
/// certifies the result with the duality gap.
pub fn solve_weights(
    g: &GridDensity,
    nu: &DiscreteMeasure,
    model: &EntropyModel,
    opts: &SolverOptions,
) -> Result<TransportSolution> {
    let m = nu.len();
    let w0 = vec![0.0; m];
    check_problem(nu, &w0)?;
    let mu_total = g.total_mass();
    if model.is_balanced() {
        let gap = (nu.total_mass() - mu_total).abs();
        if gap > W2_BALANCE_TOL * mu_total.max(1.0) {
            return Err(UotError::Infeasible(format!(
                "balanced transport needs equal masses, got nu(Omega) = {} and mu(Omega) = {mu_total}",
                nu.total_mass()
            )));
        }
    }
    let start = evaluate(g, nu.points(), nu.masses(), model, &w0);
    if !start.value.is_finite() {
        return Err(UotError::Infeasible(format!(
            "dual objective is not finite at w = 0 (mass {} outside every cell)",
            start.residual_mass
        )));
    }

    let lopts = LbfgsOptions {
        memory: opts.memory,
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol * mu_total.max(1.0),
        ..Default::default()
    };
    let res = lbfgs::minimize(
        |w| {
            let e = evaluate(g, nu.points(), nu.masses(), model, w);
            (-e.value, e.grad.iter().map(|v| -v).collect())
        },
        w0,
        &lopts,
    );

    let e = evaluate(g, nu.points(), nu.masses(), model, &res.x);
    let gap = gap_from(g, nu, model, &res.x, &e)?;
    let rho = reconstruct_rho(g, nu, model, &e.tess, &res.x)?;
    let rho_masses = rho_cell_masses(g, &e.tess, &rho)?;
    Ok(TransportSolution {
        g_value: e.value,
        grad_norm: inf_norm(&e.grad),
        rho,
        rho_cell_masses: rho_masses,
        duality_gap: gap,
        iterations: res.iterations,
        evaluations: res.evaluations + 1,
        termination: res.termination,
        converged: res.termination == Termination::GradientTolerance,
        certified: gap <= opts.gap_tol * mu_total,
        tessellation: e.tess,
        w: res.x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::laguerre::{assignment_margins, cell_masses, voronoi_assign};
    use crate::models::ModelKind;
    use crate::presets::four_sites;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> GridDensity {
        GridDensity::uniform(Domain::square(1.0).unwrap(), n, n, 1.0).unwrap()
    }

    fn setup(side: f64, n: usize) -> (GridDensity, DiscreteMeasure) {
        let g = GridDensity::uniform(Domain::square(side).unwrap(), n, n, 1.0).unwrap();
        (g, four_sites(side))
    }

    fn all_models() -> Vec<EntropyModel> {
        ModelKind::ALL.iter().map(|k| EntropyModel::unit(*k)).collect()
    }

    #[test]
    fn single_balanced_site_is_second_moment() {
        let g = unit(512);
        let nu = DiscreteMeasure::new(vec![[0.5, 0.5]], vec![1.0], None).unwrap();
        let v = dual_objective(&g, &nu, &EntropyModel::unit(ModelKind::W2), &[0.0]).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-5, "{v}");
    }

    #[test]
    fn ghk_at_zero_ignores_masses() {
        let g = unit(128);
        let model = EntropyModel::unit(ModelKind::Ghk);
        let pts = vec![[0.2, 0.3], [0.7, 0.6], [0.4, 0.9]];
        let a = DiscreteMeasure::new(pts.clone(), vec![0.1, 0.2, 0.3], None).unwrap();
        let b = DiscreteMeasure::new(pts.clone(), vec![5.0, 0.01, 1.0], None).unwrap();
        let va = dual_objective(&g, &a, &model, &[0.0; 3]).unwrap();
        let vb = dual_objective(&g, &b, &model, &[0.0; 3]).unwrap();
        assert_eq!(va, vb);
        let t = voronoi_assign(&g, &pts).unwrap();
        let direct: f64 = (0..g.len())
            .map(|idx| {
                let k = t.label(idx).unwrap();
                -(-dist_sq(g.center(idx), pts[k])).exp_m1() * g.values()[idx]
            })
            .sum::<f64>()
            * g.cell_area();
        assert!((va - direct).abs() < 1e-12);
    }

    #[test]
    fn concave_along_random_segments() {
        let (g, nu) = setup(5.0, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for model in all_models() {
            let tol = 1e-9 * g.total_mass();
            for _ in 0..200 {
                let w1: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let w2: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let mid: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| 0.5 * (a + b)).collect();
                let f = |w: &[f64]| dual_objective(&g, &nu, &model, w).unwrap();
                assert!(f(&mid) >= 0.5 * (f(&w1) + f(&w2)) - tol, "{model:?}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let n = 512;
        let (g, nu) = setup(5.0, n);
        let tol = 5.0 * g.cell_width() * g.total_mass();
        let h = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in all_models() {
            for _ in 0..3 {
                let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let grad = dual_gradient(&g, &nu, &model, &w).unwrap();
                for i in 0..4 {
                    let (mut wp, mut wm) = (w.clone(), w.clone());
                    wp[i] += h;
                    wm[i] -= h;
                    let fd = (dual_objective(&g, &nu, &model, &wp).unwrap()
                        - dual_objective(&g, &nu, &model, &wm).unwrap())
                        / (2.0 * h);
                    assert!((fd - grad[i]).abs() <= tol, "{model:?} {i}: {fd} vs {}", grad[i]);
                }
            }
        }
    }

    #[test]
    fn weak_duality_at_random_weights() {
        let (g, nu) = setup(5.0, 96);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in all_models().into_iter().filter(|m| !m.is_balanced()) {
            for _ in 0..50 {
                let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let gap = duality_gap(&g, &nu, &model, &w).unwrap();
                assert!(gap >= -1e-9 * g.total_mass(), "{model:?}: {gap}");
            }
        }
    }

    #[test]
    fn balanced_gradient_is_mass_defect() {
        let (g, nu) = setup(5.0, 128);
        let model = EntropyModel::unit(ModelKind::W2);
        let w = [0.3, -0.2, 0.5, 0.0];
        let grad = dual_gradient(&g, &nu, &model, &w).unwrap();
        let t = assign_unchecked(&g, nu.points(), &model, &w);
        let cm = cell_masses(&g, &t).unwrap();
        for i in 0..4 {
            assert_eq!(grad[i], nu.masses()[i] - cm.masses[i]);
        }
    }

    #[test]
    fn shift_behaviour() {
        let g = unit(128);
        let pts = vec![[0.2, 0.3], [0.7, 0.6], [0.4, 0.9]];
        let total = g.total_mass();
        let nu = DiscreteMeasure::new(pts, vec![0.5 * total, 0.3 * total, 0.2 * total], None).unwrap();
        let w = [0.1, -0.3, 0.2];
        let ws: Vec<f64> = w.iter().map(|v| v + 0.1).collect();
        let w2 = EntropyModel::unit(ModelKind::W2);
        let (a, b) = (
            dual_objective(&g, &nu, &w2, &w).unwrap(),
            dual_objective(&g, &nu, &w2, &ws).unwrap(),
        );
        assert!((a - b).abs() <= 1e-12 * total, "{a} {b}");
        for kind in [ModelKind::Ghk, ModelKind::Wfr, ModelKind::Qr] {
            let model = EntropyModel::unit(kind);
            let a = dual_objective(&g, &nu, &model, &w).unwrap();
            let b = dual_objective(&g, &nu, &model, &ws).unwrap();
            assert!((a - b).abs() > 1e-6, "{kind}");
            let ta = assign_unchecked(&g, nu.points(), &model, &w);
            let tb = assign_unchecked(&g, nu.points(), &model, &ws);
            let margins = assignment_margins(&g, &nu, &model, &w).unwrap();
            for idx in 0..g.len() {
                if margins[idx] > 1e-9 {
                    assert_eq!(ta.labels()[idx], tb.labels()[idx]);
                }
            }
        }
    }

    #[test]
    fn symmetric_pair_has_zero_gradient() {
        let g = unit(128);
        let nu = DiscreteMeasure::new(vec![[0.25, 0.5], [0.75, 0.5]], vec![0.5, 0.5], None).unwrap();
        let grad = dual_gradient(&g, &nu, &EntropyModel::unit(ModelKind::W2), &[0.0, 0.0]).unwrap();
        assert!(grad.iter().all(|v| v.abs() < 1e-12), "{grad:?}");
    }

    #[test]
    fn balanced_solve_matches_masses() {
        let (g, nu) = setup(5.0, 256);
        let sol = solve_weights(&g, &nu, &EntropyModel::unit(ModelKind::W2), &SolverOptions::default())
            .unwrap();
        let t = assign_unchecked(&g, nu.points(), &EntropyModel::unit(ModelKind::W2), &sol.w);
        let cm = cell_masses(&g, &t).unwrap();
        for i in 0..4 {
            assert!((cm.masses[i] - nu.masses()[i]).abs() <= 1e-3 * g.total_mass());
        }
        assert!(sol.certified, "{}", sol.duality_gap);
        // rho equals mu for the balanced model.
        assert_eq!(sol.rho.values(), g.values());
    }

    #[test]
    fn unbalanced_solves_are_certified() {
        let (g, nu) = setup(5.0, 128);
        for kind in [ModelKind::Ghk, ModelKind::Wfr, ModelKind::Qr] {
            let sol = solve_weights(&g, &nu, &EntropyModel::unit(kind), &SolverOptions::default())
                .unwrap();
            assert!(sol.duality_gap <= 1e-5 * g.total_mass(), "{kind}: {}", sol.duality_gap);
            assert!(sol.duality_gap >= -1e-9 * g.total_mass());
            assert!(sol.grad_norm <= 1e-4, "{kind}: {}", sol.grad_norm);
        }
    }

    #[test]
    fn single_site_matches_scalar_root() {
        let g = unit(256);
        let model = EntropyModel::unit(ModelKind::Ghk);
        let mass = 0.4;
        let nu = DiscreteMeasure::new(vec![[0.5, 0.5]], vec![mass], None).unwrap();
        let integral: f64 = (0..g.len())
            .map(|idx| (-dist_sq(g.center(idx), [0.5, 0.5])).exp())
            .sum::<f64>()
            * g.cell_area();
        let phi = |w: f64| (-w).exp() * mass - w.exp() * integral;
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let sol = solve_weights(&g, &nu, &model, &SolverOptions::default()).unwrap();
        assert!((sol.w[0] - lo).abs() < 1e-6, "{} vs {lo}", sol.w[0]);
    }

    #[test]
    fn reconstructed_marginals() {
        let (g, nu) = setup(5.0, 128);
        let w = [0.4, -0.1, 0.2, 0.0];
        let ghk = EntropyModel::unit(ModelKind::Ghk);
        let t = assign_unchecked(&g, nu.points(), &ghk, &w);
        let rho = reconstruct_rho(&g, &nu, &ghk, &t, &w).unwrap();
        for idx in (0..g.len()).step_by(97) {
            let k = t.label(idx).unwrap();
            let d2 = dist_sq(g.center(idx), nu.points()[k]);
            let expect = (w[k] - d2).exp();
            assert!((rho.values()[idx] - expect).abs() < 1e-12 * expect.max(1.0));
        }

        for (eps, expect_zeros) in [(1.0, true), (2.0, false)] {
            let qr = EntropyModel::new(ModelKind::Qr, eps).unwrap();
            let sol = solve_weights(&g, &nu, &qr, &SolverOptions::default()).unwrap();
            let t = &sol.tessellation;
            let mut zeros = 0;
            for idx in 0..g.len() {
                if t.phi()[idx] >= 2.0 {
                    assert_eq!(sol.rho.values()[idx], 0.0);
                    zeros += 1;
                } else {
                    assert!(sol.rho.values()[idx] > 0.0);
                }
            }
            assert_eq!(zeros > 0, expect_zeros, "eps {eps}");
        }

        let wfr = EntropyModel::unit(ModelKind::Wfr);
        let t = assign_unchecked(&g, nu.points(), &wfr, &[0.0; 4]);
        let rho = reconstruct_rho(&g, &nu, &wfr, &t, &[0.0; 4]).unwrap();
        assert!(t.residual_count() > 0);
        for idx in 0..g.len() {
            if t.label(idx).is_none() {
                assert_eq!(rho.values()[idx], 0.0);
            }
        }
        assert!(reconstruct_rho(&g, &nu, &wfr, &t, &[1.0; 4]).is_err());
    }

    #[test]
    fn primal_of_zero_marginal() {
        let (g, nu) = setup(5.0, 64);
        let model = EntropyModel::unit(ModelKind::Ghk);
        let w = [0.0; 4];
        let t = assign_unchecked(&g, nu.points(), &model, &w);
        let zero = g.with_values(vec![0.0; g.len()]).unwrap();
        let p = primal_objective(&g, &nu, &model, &t, &w, &zero).unwrap();
        let expect = g.total_mass() + nu.total_mass();
        assert!((p - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn perturbed_primal_dominates_optimal_dual() {
        let (g, nu) = setup(5.0, 96);
        let model = EntropyModel::unit(ModelKind::Ghk);
        let sol = solve_weights(&g, &nu, &model, &SolverOptions::default()).unwrap();
        let mut w = sol.w.clone();
        w[2] += 0.1;
        let t = assign_unchecked(&g, nu.points(), &model, &w);
        let rho = reconstruct_rho(&g, &nu, &model, &t, &w).unwrap();
        let p = primal_objective(&g, &nu, &model, &t, &w, &rho).unwrap();
        assert!(p >= sol.g_value);
        assert!(duality_gap(&g, &nu, &model, &[0.0; 4]).unwrap() > 1e-6);
    }

    #[test]
    fn single_balanced_cell_has_no_gap() {
        let g = unit(64);
        let nu = DiscreteMeasure::new(vec![[0.3, 0.6]], vec![g.total_mass()], None).unwrap();
        let model = EntropyModel::unit(ModelKind::W2);
        for w in [-1.0, 0.0, 2.5] {
            assert!(duality_gap(&g, &nu, &model, &[w]).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let g = unit(16);
        let model = EntropyModel::unit(ModelKind::Ghk);
        let nu = DiscreteMeasure::new(vec![[0.3, 0.6]], vec![0.0], None).unwrap();
        assert!(matches!(dual_objective(&g, &nu, &model, &[0.0]), Err(UotError::InvalidArgument(_))));
        let nu = DiscreteMeasure::new(vec![[0.3, 0.6]], vec![1.0], None).unwrap();
        assert!(dual_gradient(&g, &nu, &model, &[0.0, 1.0]).is_err());
        let w2 = EntropyModel::unit(ModelKind::W2);
        let nu = DiscreteMeasure::new(vec![[0.3, 0.6]], vec![2.0], None).unwrap();
        assert!(matches!(solve_weights(&g, &nu, &w2, &SolverOptions::default()), Err(UotError::Infeasible(_))));
    }
}
