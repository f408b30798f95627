//! The hexagonal cell problem `B(z)`, crystallization bounds for
//! quantization with many points, the triangular-lattice construction, and
//! the asymptotically optimal point density.
//!
//! `B(z)` is the energy per unit area of a triangular lattice with `z`
//! points per unit area: `z` times the integral of the quantization
//! integrand `g(|x|) = -F*(-l(|x|))` over the regular hexagon of area `1/z`.
//! All cell-problem routines work at unit length scale; the caller moves
//! `epsilon` into the argument `z`.
//!
//! The radial integrals have closed forms, so only the angular integral
//! over a hexagon sector and the integral along an edge are done with
//! 64-point Gauss-Legendre, split where the integrand's support ends. For
//! the unbalanced models the integrand is written as `F(0) - h(r)` with
//! `h` decaying, which keeps `B` accurate as `z -> 0`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result, UotError};
use crate::geometry::{Domain, GridDensity, Point};
use crate::models::{EntropyModel, ModelKind};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// `5 sqrt(3) / 54`: the balanced hexagon constant, `B(z) = C / z`.
pub const HEXAGON_CONSTANT: f64 = 5.0 * SQRT_3 / 54.0;

fn gl() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(64).unwrap()))
}

/// Inradius of the regular hexagon of area `1/z`.
fn inradius(z: f64) -> f64 {
    1.0 / (2.0 * SQRT_3 * z).sqrt()
}

fn support(kind: ModelKind) -> f64 {
    EntropyModel::unit(kind).profile_support()
}

/// `int_0^d g(r) r dr` for the balanced model, `int_0^d h(r) r dr` with
/// `h = F(0) - g` otherwise.
fn radial_moment(kind: ModelKind, d: f64) -> f64 {
    match kind {
        ModelKind::W2 => 0.25 * d.powi(4),
        ModelKind::Ghk => -0.5 * (-d * d).exp_m1(),
        ModelKind::Wfr => {
            if d >= FRAC_PI_2 {
                PI * PI / 16.0 - 0.25
            } else {
                let s = d.sin();
                0.25 * (d * d + d * (2.0 * d).sin() - s * s)
            }
        }
        ModelKind::Qr => {
            let u = (0.5 * d * d).min(1.0);
            u - u * u + u * u * u / 3.0
        }
    }
}

/// `int_d^inf h(r) r dr` for the unbalanced models.
fn radial_tail(kind: ModelKind, d: f64) -> f64 {
    match kind {
        ModelKind::W2 => f64::INFINITY,
        ModelKind::Ghk => 0.5 * (-d * d).exp(),
        ModelKind::Wfr => {
            if d >= FRAC_PI_2 {
                return 0.0;
            }
            // With e = pi/2 - r the integrand is (pi/2 - e) sin^2 e.
            let u = FRAC_PI_2 - d;
            let (a, b) = if u < 1e-2 {
                let u2 = u * u;
                (
                    u * u2 * (1.0 / 3.0 - u2 / 15.0 + 2.0 * u2 * u2 / 315.0),
                    u2 * u2 * (0.25 - u2 / 18.0 + u2 * u2 / 180.0),
                )
            } else {
                let s = u.sin();
                (0.5 * u - 0.25 * (2.0 * u).sin(), 0.25 * (u * u - u * (2.0 * u).sin()) + 0.25 * s * s)
            };
            FRAC_PI_2 * a - b
        }
        ModelKind::Qr => {
            let v = 1.0 - 0.5 * d * d;
            if v <= 0.0 {
                0.0
            } else {
                v * v * v / 3.0
            }
        }
    }
}

/// `int_{R^2} h`, i.e. minus the plateau slope of `B'`.
fn full_plane_integral(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::W2 => f64::INFINITY,
        ModelKind::Ghk => PI,
        ModelKind::Wfr => 2.0 * PI * (PI * PI / 16.0 - 0.25),
        ModelKind::Qr => 2.0 * PI / 3.0,
    }
}

/// Integrates `f` over `[a, b]` split at `brk` when it lies inside.
fn integrate_split(a: f64, b: f64, brk: Option<f64>, f: impl Fn(f64) -> f64) -> f64 {
    match brk {
        Some(c) if c > a && c < b => gl().integrate(a, c, &f) + gl().integrate(c, b, &f),
        _ => gl().integrate(a, b, f),
    }
}

/// `12 int_0^{pi/6} R(a / cos(alpha)) d alpha` for a radial antiderivative
/// `R`: the hexagon integral when `R` is a radial moment.
fn hexagon_sectors(kind: ModelKind, a: f64, radial: impl Fn(f64) -> f64) -> f64 {
    let r = support(kind);
    let brk = (r.is_finite() && r > a).then(|| (a / r).acos());
    12.0 * integrate_split(0.0, FRAC_PI_6, brk, |alpha| radial(a / alpha.cos()))
}

/// Average of `f(|x|)` over the boundary of the hexagon with inradius `a`.
fn boundary_average(kind: ModelKind, a: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = a / SQRT_3;
    let r = support(kind);
    let brk = (r.is_finite() && r > a).then(|| (r * r - a * a).sqrt());
    integrate_split(0.0, half, brk, |s| f((a * a + s * s).sqrt())) / half
}

fn check_z(z: f64) -> Result<()> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(invalid(format!("cell problem needs finite z > 0, got {z}")));
    }
    Ok(())
}

/// Pieces of the cell problem at one `z`.
struct CellValues {
    b: f64,
    b_prime: f64,
    /// `B'(z) - slope_plateau` (infinite for the balanced model).
    excess: f64,
}

fn cell_values(kind: ModelKind, z: f64) -> CellValues {
    let a = inradius(z);
    let unit = EntropyModel::unit(kind);
    if kind == ModelKind::W2 {
        let b = z * hexagon_sectors(kind, a, |d| radial_moment(kind, d));
        let avg = boundary_average(kind, a, |t| unit.profile(t));
        return CellValues { b, b_prime: (b - avg) / z, excess: f64::INFINITY };
    }
    let inner = hexagon_sectors(kind, a, |d| radial_moment(kind, d));
    let tail = hexagon_sectors(kind, a, |d| radial_tail(kind, d));
    let avg = boundary_average(kind, a, |t| unit.profile_gap(t));
    let slope = -full_plane_integral(kind);
    let excess = avg / z + tail;
    // Pick the form that avoids cancellation.
    let b_prime = if excess <= -0.5 * slope { slope + excess } else { avg / z - inner };
    let b = if z * inner <= 0.5 {
        unit.f_zero() - z * inner
    } else {
        unit.f_zero() + slope * z + z * tail
    };
    CellValues { b, b_prime, excess }
}

/// Cell-problem energy `B(z)`, evaluated at unit length scale (the
/// model's `epsilon` is ignored).
pub fn cell_b(model: &EntropyModel, z: f64) -> Result<f64> {
    check_z(z)?;
    Ok(cell_values(model.kind, z).b)
}

/// Derivative `B'(z) = (B(z) - mean of g over the hexagon boundary) / z`.
pub fn cell_b_prime(model: &EntropyModel, z: f64) -> Result<f64> {
    check_z(z)?;
    Ok(cell_values(model.kind, z).b_prime)
}

/// `Z` and `r = lim_{z -> Z+} B'(z)`: `B'` equals `r` on `(0, Z]` and
/// increases strictly beyond.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlateauConstants {
    pub z_plateau: f64,
    pub slope_plateau: f64,
}

/// The plateau ends when the hexagon's inscribed disc just contains the
/// support of `h`; the slope is `-int_{R^2} h`.
pub fn plateau_constants(model: &EntropyModel) -> PlateauConstants {
    let kind = model.kind;
    let r = support(kind);
    let z_plateau = if r.is_finite() { 1.0 / (2.0 * SQRT_3 * r * r) } else { 0.0 };
    let slope_plateau = if kind == ModelKind::W2 { f64::NEG_INFINITY } else { -full_plane_integral(kind) };
    PlateauConstants { z_plateau, slope_plateau }
}

/// The `z > Z` with `B'(z) = s`, by bisection in `log z`.
pub fn invert_b_prime(model: &EntropyModel, s: f64) -> Result<f64> {
    let pc = plateau_constants(model);
    if !(s > pc.slope_plateau && s < 0.0) {
        return Err(UotError::OutOfRange(format!(
            "B' takes values in ({}, 0), got {s}",
            pc.slope_plateau
        )));
    }
    let kind = model.kind;
    let bp = |z: f64| cell_values(kind, z).b_prime;
    let mut lo = if pc.z_plateau > 0.0 { pc.z_plateau } else { 1.0 };
    if pc.z_plateau == 0.0 {
        while bp(lo) >= s && lo > 1e-300 {
            lo *= 0.25;
        }
    }
    let mut hi = lo.max(1.0);
    while bp(hi) < s && hi < 1e300 {
        hi *= 4.0;
    }
    for _ in 0..400 {
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if bp(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Monotone piecewise-cubic Hermite interpolant, extended linearly.
#[derive(Clone, Debug)]
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` strictly increasing, at least two nodes.
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        d[0] = delta[0];
        d[n - 1] = delta[n - 2];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        Pchip { x, y, d }
    }

    fn eval(&self, xq: f64) -> f64 {
        let n = self.x.len();
        if xq <= self.x[0] {
            return self.y[0] + self.d[0] * (xq - self.x[0]);
        }
        if xq >= self.x[n - 1] {
            return self.y[n - 1] + self.d[n - 1] * (xq - self.x[n - 1]);
        }
        let k = self.x.partition_point(|v| *v <= xq) - 1;
        let h = self.x[k + 1] - self.x[k];
        let t = (xq - self.x[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[k]
            + (t3 - 2.0 * t2 + t) * h * self.d[k]
            + (-2.0 * t3 + 3.0 * t2) * self.y[k + 1]
            + (t3 - t2) * h * self.d[k + 1]
    }
}

/// Interpolant of `y(x)` from samples with `x` monotone, keeping only
/// nodes that are numerically distinct. `None` if fewer than two remain.
fn monotone_inverse(x: &[f64], y: &[f64]) -> Option<Pchip> {
    let mut pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .collect();
    if pairs.first()?.0 > pairs.last()?.0 {
        pairs.reverse();
    }
    let mut kx = Vec::new();
    let mut ky = Vec::new();
    for (a, b) in pairs {
        if kx.last().is_none_or(|l: &f64| a - l > 1e-9 * (1.0 + l.abs())) {
            kx.push(a);
            ky.push(b);
        }
    }
    (kx.len() >= 2).then(|| Pchip::new(kx, ky))
}

/// `B` and `B'` tabulated on a log-spaced grid, with fast interpolated
/// evaluation and inversion of `B'`.
#[derive(Clone, Debug, Serialize)]
pub struct CellProblemTable {
    pub model: EntropyModel,
    pub z_samples: Vec<f64>,
    pub b_values: Vec<f64>,
    pub b_prime_values: Vec<f64>,
    pub z_plateau: f64,
    pub slope_plateau: f64,
    #[serde(skip)]
    interp: TableInterp,
}

#[derive(Clone, Debug, Default)]
struct TableInterp {
    /// `ln B` against `ln z`.
    b: Option<Pchip>,
    /// `ln(z - Z)` against `ln(B' - r)`, used close to the plateau.
    near: Option<Pchip>,
    /// `ln z` against `ln(-B')`, used close to zero slope.
    far: Option<Pchip>,
}

impl CellProblemTable {
    /// Default table: 400 samples, log-spaced over `[1e-4, 1e4]` above the
    /// plateau end.
    pub fn new(model: &EntropyModel) -> Self {
        Self::with_range(model, 1e-4, 1e4, 400).expect("valid default range")
    }

    /// Samples at `Z + t` with `t` log-spaced over `[t_min, t_max]`.
    pub fn with_range(model: &EntropyModel, t_min: f64, t_max: f64, count: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) || count < 2 {
            return Err(invalid("table range needs 0 < t_min < t_max and at least 2 samples"));
        }
        let model = EntropyModel::unit(model.kind);
        let pc = plateau_constants(&model);
        let (l0, l1) = (t_min.ln(), t_max.ln());
        let ts: Vec<f64> = (0..count)
            .map(|k| (l0 + (l1 - l0) * k as f64 / (count - 1) as f64).exp())
            .collect();
        let z_samples: Vec<f64> = ts.iter().map(|t| pc.z_plateau + t).collect();
        let values: Vec<CellValues> = z_samples.par_iter().map(|z| cell_values(model.kind, *z)).collect();
        let b_values: Vec<f64> = values.iter().map(|v| v.b).collect();
        let b_prime_values: Vec<f64> = values.iter().map(|v| v.b_prime).collect();

        let ln_z: Vec<f64> = z_samples.iter().map(|z| z.ln()).collect();
        let ln_b: Vec<f64> = b_values.iter().map(|b| b.ln()).collect();
        let ln_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let ln_excess: Vec<f64> = values.iter().map(|v| v.excess.ln()).collect();
        let ln_neg_bp: Vec<f64> = b_prime_values.iter().map(|v| (-v).ln()).collect();
        let interp = TableInterp {
            b: monotone_inverse(&ln_z, &ln_b),
            near: if pc.slope_plateau.is_finite() { monotone_inverse(&ln_excess, &ln_t) } else { None },
            far: monotone_inverse(&ln_neg_bp, &ln_z),
        };
        Ok(CellProblemTable {
            model,
            z_samples,
            b_values,
            b_prime_values,
            z_plateau: pc.z_plateau,
            slope_plateau: pc.slope_plateau,
            interp,
        })
    }

    /// Interpolated `B(z)` for `z >= 0`; exact on the plateau, `B(0) = F(0)`.
    pub fn b(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return self.model.f_zero();
        }
        if self.slope_plateau.is_finite() && z <= self.z_samples[0] {
            if z <= self.z_plateau || self.z_plateau == 0.0 {
                return self.model.f_zero() + self.slope_plateau * z;
            }
            // Between Z and the first sample: B is C^1 there, interpolate.
            let (z0, b0) = (self.z_plateau, self.model.f_zero() + self.slope_plateau * self.z_plateau);
            let (z1, b1) = (self.z_samples[0], self.b_values[0]);
            return b0 + (b1 - b0) * (z - z0) / (z1 - z0);
        }
        self.interp.b.as_ref().expect("table has samples").eval(z.ln()).exp()
    }

    /// Interpolated inverse of `B'` on `(slope_plateau, 0)`.
    pub fn invert_b_prime(&self, s: f64) -> Result<f64> {
        if !(s > self.slope_plateau && s < 0.0) {
            return Err(UotError::OutOfRange(format!(
                "B' takes values in ({}, 0), got {s}",
                self.slope_plateau
            )));
        }
        let excess = s - self.slope_plateau;
        match &self.interp.near {
            Some(near) if excess <= -s => Ok(self.z_plateau + near.eval(excess.ln()).exp()),
            _ => Ok(self.interp.far.as_ref().expect("table has samples").eval((-s).ln()).exp()),
        }
    }

    /// The density selection `D in dB*(s)` for the multiplier ratio `s`:
    /// zero at or below the plateau slope, `(B')^{-1}(s)` above.
    fn density_for(&self, s: f64) -> f64 {
        if s <= self.slope_plateau {
            0.0
        } else {
            self.invert_b_prime(s).unwrap_or(0.0)
        }
    }
}

#[derive(Clone, Debug)]
pub struct AsymptoticDensityResult {
    /// Lagrange multiplier of the point-count constraint.
    pub lambda: f64,
    /// Optimal point density `D`.
    pub density: GridDensity,
    /// `int B(D(x)) m(x) dx`.
    pub energy: f64,
    pub p_target: f64,
    /// Density chosen on the cells where `lambda / m` sits exactly on the
    /// plateau slope, if any.
    pub tie_density: Option<f64>,
    pub tie_cells: usize,
}

/// Asymptotically optimal point density for the weight `m` (the raster)
/// and total normalized point count `p_target = int D dx`.
pub fn optimal_density(
    g: &GridDensity,
    model: &EntropyModel,
    p_target: f64,
) -> Result<AsymptoticDensityResult> {
    if !(p_target > 0.0) || !p_target.is_finite() {
        return Err(UotError::OutOfRange(format!("point count must be finite and > 0, got {p_target}")));
    }
    if !(g.total_mass() > 0.0) {
        return Err(invalid("the weight raster has no mass"));
    }
    let table = CellProblemTable::new(model);
    let a = g.cell_area();
    let values = g.values();
    let density_at = |lambda: f64| -> Vec<f64> {
        values
            .par_iter()
            .map(|m| if *m > 0.0 { table.density_for(lambda / m) } else { 0.0 })
            .collect()
    };
    let mass = |d: &[f64]| a * d.iter().sum::<f64>();

    // Bracket lambda in (lo, hi) with mass(lo) <= P <= mass(hi).
    let mut hi = -1.0;
    let mut d_hi = density_at(hi);
    while mass(&d_hi) < p_target {
        hi *= 0.1;
        if hi > -1e-300 {
            return Err(UotError::OutOfRange(format!("point count {p_target} is not attainable")));
        }
        d_hi = density_at(hi);
    }
    let mut lo = -1.0;
    let mut d_lo = density_at(lo);
    while mass(&d_lo) > p_target {
        lo *= 10.0;
        if lo < -1e300 {
            return Err(UotError::OutOfRange(format!("point count {p_target} is not attainable")));
        }
        d_lo = density_at(lo);
    }

    for _ in 0..200 {
        let m_hi = mass(&d_hi);
        if (m_hi - p_target).abs() <= 1e-12 * p_target {
            break;
        }
        let mid = -((-lo).ln() * 0.5 + (-hi).ln() * 0.5).exp();
        if !(mid < lo.max(hi) && mid > lo.min(hi)) || (lo / hi - 1.0).abs() < 1e-15 {
            break;
        }
        let d_mid = density_at(mid);
        if mass(&d_mid) < p_target {
            lo = mid;
            d_lo = d_mid;
        } else {
            hi = mid;
            d_hi = d_mid;
        }
    }

    // If the mass still jumps across lambda, the jump comes from cells
    // switching on at the plateau slope; they share one density xi.
    let mut density = d_hi;
    let mut tie_density = None;
    let mut tie_cells = 0;
    let excess = mass(&density) - p_target;
    if excess.abs() > 1e-10 * p_target {
        let ties: Vec<usize> = (0..density.len())
            .filter(|i| d_lo[*i] == 0.0 && density[*i] > 0.0)
            .collect();
        if !ties.is_empty() {
            let rest: f64 = (0..density.len())
                .filter(|i| !(d_lo[*i] == 0.0 && density[*i] > 0.0))
                .map(|i| density[i])
                .sum::<f64>()
                * a;
            let xi = ((p_target - rest) / (a * ties.len() as f64)).max(0.0);
            for i in &ties {
                density[*i] = xi;
            }
            tie_density = Some(xi);
            tie_cells = ties.len();
        }
    }

    let energy = a * values
        .par_iter()
        .zip(&density)
        .map(|(m, d)| if *m > 0.0 { table.b(*d) * m } else { 0.0 })
        .sum::<f64>();
    Ok(AsymptoticDensityResult {
        lambda: hi,
        density: g.with_values(density)?,
        energy,
        p_target,
        tie_density,
        tie_cells,
    })
}

/// Crystallization bounds for `M` sites with cost scale `eps` on a domain
/// of area `omega_area` and perimeter `perimeter`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatticeBounds {
    /// `|Omega| B(eps^2 M / |Omega|)`, a lower bound of the minimal energy.
    pub lower: f64,
    /// `F(0) |dOmega| sqrt(8 |Omega| / (3 sqrt(3) M))`: the lattice
    /// construction is within this of `lower` (for uniform unit density).
    pub upper_extra: f64,
}

pub fn lattice_bounds(
    model: &EntropyModel,
    omega_area: f64,
    perimeter: f64,
    count: usize,
    eps: f64,
) -> Result<LatticeBounds> {
    if count == 0 || !(omega_area > 0.0) || !(eps > 0.0) || !(perimeter >= 0.0) {
        return Err(invalid("lattice bounds need M >= 1, |Omega| > 0, eps > 0 and |dOmega| >= 0"));
    }
    let m = count as f64;
    let lower = omega_area * cell_b(model, eps * eps * m / omega_area)?;
    let upper_extra = model.f_zero() * perimeter * (8.0 * omega_area / (3.0 * SQRT_3 * m)).sqrt();
    Ok(LatticeBounds { lower, upper_extra })
}

/// Exactly `count` distinct points: the sites of a triangular lattice with
/// hexagonal cells of area `|Omega| / count` whose cells fit in the domain,
/// topped up with points of a coarse uniform grid.
pub fn triangular_lattice(domain: &Domain, count: usize) -> Vec<Point> {
    if count == 0 {
        return Vec::new();
    }
    let spacing = (2.0 * domain.area() / (SQRT_3 * count as f64)).sqrt();
    let (half_w, half_h) = (0.5 * spacing, spacing / SQRT_3);
    let row_step = 0.5 * SQRT_3 * spacing;
    let mut points = Vec::with_capacity(count);
    let mut row = 0usize;
    loop {
        let y = domain.y_min + half_h + row as f64 * row_step;
        if y + half_h > domain.y_max + 1e-12 * domain.height() || points.len() >= count {
            break;
        }
        let offset = if row % 2 == 1 { half_w } else { 0.0 };
        let mut col = 0usize;
        loop {
            let x = domain.x_min + half_w + offset + col as f64 * spacing;
            if x + half_w > domain.x_max + 1e-12 * domain.width() || points.len() >= count {
                break;
            }
            points.push([x, y]);
            col += 1;
        }
        row += 1;
    }
    let mut side = 1usize;
    while points.len() < count {
        let needed = count - points.len();
        while side * side < needed {
            side += 1;
        }
        for k in 0..side * side {
            if points.len() == count {
                break;
            }
            let p = [
                domain.x_min + (k % side) as f64 * domain.width() / side as f64 + 0.5 * domain.width() / side as f64,
                domain.y_min + (k / side) as f64 * domain.height() / side as f64 + 0.5 * domain.height() / side as f64,
            ];
            if !points.contains(&p) {
                points.push(p);
            }
        }
        side += 1;
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dist;
    use crate::presets::gaussian_bump;

    fn unit(kind: ModelKind) -> EntropyModel {
        EntropyModel::unit(kind)
    }

    const UNBALANCED: [ModelKind; 3] = [ModelKind::Ghk, ModelKind::Wfr, ModelKind::Qr];

    #[test]
    fn balanced_closed_forms() {
        let m = unit(ModelKind::W2);
        for z in [0.25, 1.0, 4.0] {
            let b = cell_b(&m, z).unwrap();
            let bp = cell_b_prime(&m, z).unwrap();
            assert!((b * z / HEXAGON_CONSTANT - 1.0).abs() < 1e-12, "{b}");
            assert!((-bp * z * z / HEXAGON_CONSTANT - 1.0).abs() < 1e-12, "{bp}");
        }
        assert!((HEXAGON_CONSTANT - 0.160_375_1).abs() < 1e-7);
    }

    #[test]
    fn limits() {
        let wfr = unit(ModelKind::Wfr);
        assert!((cell_b(&wfr, 1e-6).unwrap() - 1.0).abs() < 1e-5);
        for kind in ModelKind::ALL {
            assert!(cell_b(&unit(kind), 1e6).unwrap() <= 1e-3);
            assert!(cell_b(&unit(kind), 1e6).unwrap() >= 0.0);
        }
        let far = cell_b_prime(&wfr, 1e6).unwrap();
        assert!(far < 0.0 && far > -1e-6);
        assert!(cell_b(&wfr, 0.0).is_err());
        assert!(cell_b_prime(&wfr, -1.0).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for kind in ModelKind::ALL {
            let m = unit(kind);
            for z in [0.5, 1.0, 2.0, 5.0] {
                let h = 1e-4 * z;
                let fd = (cell_b(&m, z + h).unwrap() - cell_b(&m, z - h).unwrap()) / (2.0 * h);
                let bp = cell_b_prime(&m, z).unwrap();
                assert!(((fd - bp) / bp).abs() < 1e-4, "{kind} z={z}: {fd} vs {bp}");
            }
        }
    }

    #[test]
    fn small_z_matches_direct_expansion() {
        // For z below the plateau end the inscribed disc contains the whole
        // support, so B(z) = F(0) - z int h.
        for kind in [ModelKind::Wfr, ModelKind::Qr] {
            let m = unit(kind);
            let pc = plateau_constants(&m);
            for z in [1e-3, 0.5 * pc.z_plateau] {
                let b = cell_b(&m, z).unwrap();
                assert!((b - (1.0 + pc.slope_plateau * z)).abs() < 1e-13);
            }
        }
        // WFR slope: -(pi^3/8 - pi/2).
        let pc = plateau_constants(&unit(ModelKind::Wfr));
        assert!((pc.slope_plateau + PI.powi(3) / 8.0 - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn plateau_detection() {
        assert_eq!(
            plateau_constants(&unit(ModelKind::W2)),
            PlateauConstants { z_plateau: 0.0, slope_plateau: f64::NEG_INFINITY }
        );
        let ghk = plateau_constants(&unit(ModelKind::Ghk));
        assert_eq!(ghk.z_plateau, 0.0);
        // Numerically: B' on a log grid is constant up to Z and strictly
        // increasing after it.
        for kind in UNBALANCED {
            let m = unit(kind);
            let pc = plateau_constants(&m);
            let zs: Vec<f64> = (0..200).map(|k| 10f64.powf(-4.0 + 6.0 * k as f64 / 199.0)).collect();
            let bps: Vec<f64> = zs.iter().map(|z| cell_b_prime(&m, *z).unwrap()).collect();
            let detected = zs
                .iter()
                .zip(&bps)
                .filter(|(_, bp)| (*bp - pc.slope_plateau).abs() < 1e-6)
                .map(|(z, _)| *z)
                .fold(0.0, f64::max);
            if pc.z_plateau > 0.0 {
                assert!(detected <= pc.z_plateau * 1.2 && detected >= pc.z_plateau / 1.2, "{kind}: {detected}");
                assert!(pc.z_plateau > 0.1);
            } else {
                // GHK: B' is numerically flat only where exp(-a^2) underflows.
                assert!(detected < 0.05, "{detected}");
            }
            let above: Vec<f64> = bps.iter().zip(&zs).filter(|(_, z)| **z > pc.z_plateau * 1.01).map(|(b, _)| *b).collect();
            assert!(above.windows(2).all(|w| w[1] >= w[0]), "{kind}");
            assert!(bps.iter().all(|b| *b <= 0.0 && *b >= pc.slope_plateau - 1e-12));
        }
    }

    #[test]
    fn inversion() {
        let w2 = unit(ModelKind::W2);
        let z1 = invert_b_prime(&w2, -HEXAGON_CONSTANT).unwrap();
        assert!((z1 - 1.0).abs() < 1e-8);
        let z2 = invert_b_prime(&w2, -4.0 * HEXAGON_CONSTANT).unwrap();
        assert!((z2 - 0.5).abs() < 1e-8);
        for kind in ModelKind::ALL {
            let m = unit(kind);
            let pc = plateau_constants(&m);
            let lo = if pc.slope_plateau.is_finite() { pc.slope_plateau } else { -100.0 };
            for k in 1..10 {
                let s = lo * (1.0 - k as f64 / 10.0);
                let z = invert_b_prime(&m, s).unwrap();
                assert!((cell_b_prime(&m, z).unwrap() - s).abs() < 1e-6, "{kind} {s}");
                assert!(z >= pc.z_plateau);
            }
            assert!(matches!(invert_b_prime(&m, 0.0), Err(UotError::OutOfRange(_))));
            if pc.slope_plateau.is_finite() {
                assert!(invert_b_prime(&m, lo - 1.0).is_err());
            }
        }
    }

    #[test]
    fn table_shape_and_accuracy() {
        for kind in ModelKind::ALL {
            let m = unit(kind);
            let t = CellProblemTable::new(&m);
            assert_eq!(t.z_samples.len(), 400);
            assert!(t.z_samples.windows(2).all(|w| w[1] > w[0]));
            assert!(t.b_values.windows(2).all(|w| w[1] <= w[0]));
            assert!(t.b_prime_values.windows(2).all(|w| w[1] >= w[0] - 1e-15));
            // Convexity: midpoint test on consecutive triples.
            for k in 1..t.z_samples.len() - 1 {
                let (z0, z1, z2) = (t.z_samples[k - 1], t.z_samples[k], t.z_samples[k + 1]);
                let lin = t.b_values[k - 1] + (t.b_values[k + 1] - t.b_values[k - 1]) * (z1 - z0) / (z2 - z0);
                assert!(t.b_values[k] <= lin + 1e-12 * lin.abs().max(1.0), "{kind} at {z1}");
            }
            for z in [0.003, 0.13, 0.2, 0.77, 3.3, 41.0, 900.0] {
                let exact = cell_b(&m, z).unwrap();
                assert!(((t.b(z) - exact) / exact).abs() < 1e-5, "{kind} B({z})");
                let s = cell_b_prime(&m, z).unwrap();
                if s > t.slope_plateau + 1e-9 {
                    let zi = t.invert_b_prime(s).unwrap();
                    assert!(((zi - z) / z).abs() < 1e-4, "{kind} z={z}: {zi}");
                }
            }
        }
    }

    #[test]
    fn balanced_density_is_uniform() {
        let g = GridDensity::uniform(Domain::square(1.0).unwrap(), 32, 32, 1.0).unwrap();
        for p in [0.5, 1.0, 2.0] {
            let r = optimal_density(&g, &unit(ModelKind::W2), p).unwrap();
            assert!(r.density.values().iter().all(|d| ((d - p) / p).abs() < 1e-6));
            assert!((r.energy * p / HEXAGON_CONSTANT - 1.0).abs() < 1e-4);
            assert!(r.lambda < 0.0);
        }
    }

    #[test]
    fn constant_weight_gives_constant_density() {
        let g = GridDensity::uniform(Domain::square(2.0).unwrap(), 16, 16, 3.0).unwrap();
        for kind in UNBALANCED {
            for p in [0.05, 2.0] {
                let r = optimal_density(&g, &unit(kind), p).unwrap();
                let d0 = r.density.values()[0];
                assert!(r.density.values().iter().all(|d| (d - d0).abs() <= 1e-12 * d0.max(1.0)));
                assert!((r.density.total_mass() - p).abs() < 1e-6 * p, "{kind} {p}");
            }
        }
        // A small target on a uniform weight falls inside the plateau jump.
        let r = optimal_density(&g, &unit(ModelKind::Wfr), 0.05).unwrap();
        assert!(r.tie_density.is_some());
        assert!(r.tie_density.unwrap() <= plateau_constants(&unit(ModelKind::Wfr)).z_plateau * 1.001);
    }

    #[test]
    fn bump_has_empty_regions_for_few_points() {
        let g = gaussian_bump(128, 128).unwrap();
        let r = optimal_density(&g, &unit(ModelKind::Wfr), 5.0).unwrap();
        let zeros = r.density.values().iter().filter(|d| **d == 0.0).count();
        assert!(zeros as f64 >= 0.05 * g.len() as f64, "{zeros}");
        assert!((r.density.total_mass() - 5.0).abs() < 1e-4 * 5.0);
    }

    #[test]
    fn conjugate_identity() {
        let g = gaussian_bump(48, 48).unwrap();
        for kind in UNBALANCED {
            let m = unit(kind);
            let p = 20.0;
            let r = optimal_density(&g, &m, p).unwrap();
            // B*(t) = sup_z t z - B(z) by golden-section search on the
            // concave objective.
            let b_star = |t: f64| -> f64 {
                let f = |z: f64| if z <= 0.0 { -m.f_zero() } else { t * z - cell_b(&m, z).unwrap() };
                let (mut a, mut b) = (0.0, 50.0);
                let phi = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..120 {
                    let c = b - phi * (b - a);
                    let d = a + phi * (b - a);
                    if f(c) >= f(d) {
                        b = d;
                    } else {
                        a = c;
                    }
                }
                f(0.5 * (a + b)).max(f(0.0))
            };
            let integral: f64 = g.values().iter().map(|mx| mx * b_star(r.lambda / mx)).sum::<f64>() * g.cell_area();
            let dual = r.lambda * p - integral;
            assert!(((dual - r.energy) / r.energy).abs() < 1e-4, "{kind}: {dual} vs {}", r.energy);
        }
    }

    #[test]
    fn multiplier_map_is_monotone() {
        let g = gaussian_bump(32, 32).unwrap();
        let table = CellProblemTable::new(&unit(ModelKind::Ghk));
        let mut last = 0.0;
        for k in 0..30 {
            let lambda = -10f64.powf(1.0 - 0.2 * k as f64);
            let mass: f64 = g.values().iter().map(|m| table.density_for(lambda / m)).sum::<f64>() * g.cell_area();
            assert!(mass >= last);
            last = mass;
        }
        assert!(matches!(
            optimal_density(&g, &unit(ModelKind::Ghk), 0.0),
            Err(UotError::OutOfRange(_))
        ));
    }

    #[test]
    fn lattice_bounds_values() {
        let w2 = unit(ModelKind::W2);
        let b = lattice_bounds(&w2, 1.0, 4.0, 1, 1.0).unwrap();
        assert!((b.lower - HEXAGON_CONSTANT).abs() < 1e-12);
        assert!(b.upper_extra.is_infinite());
        let ghk = unit(ModelKind::Ghk);
        let e100 = lattice_bounds(&ghk, 1.0, 4.0, 100, 0.1).unwrap().upper_extra;
        let e400 = lattice_bounds(&ghk, 1.0, 4.0, 400, 0.1).unwrap().upper_extra;
        assert!((e100 / e400 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_construction() {
        let d = Domain::square(1.0).unwrap();
        assert_eq!(triangular_lattice(&d, 1).len(), 1);
        for count in [1, 2, 7, 64, 100, 400] {
            let pts = triangular_lattice(&d, count);
            assert_eq!(pts.len(), count);
            crate::geometry::check_points(&pts, Some(&d)).unwrap();
        }
        let pts = triangular_lattice(&d, 400);
        let spacing = (2.0 / (SQRT_3 * 400.0)).sqrt();
        assert!((spacing - 0.0537).abs() < 1e-4);
        let interior: Vec<Point> = pts
            .iter()
            .copied()
            .filter(|p| p[0] >= 0.5 * spacing - 1e-12 && p[0] <= 1.0 - 0.5 * spacing + 1e-12)
            .collect();
        assert!(interior.len() >= 300);
        let nn = pts[..300]
            .iter()
            .enumerate()
            .map(|(i, p)| {
                pts[..300]
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| dist(*p, *q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((nn - spacing).abs() < 1e-9);
    }
}
