//! Synthetic inputs used by the experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::geometry::{DiscreteMeasure, Domain, GridDensity};

/// Relative site positions of the four-site test geometry on the unit square.
pub const FOUR_SITE_POSITIONS: [[f64; 2]; 4] = [[0.375, 0.375], [0.75, 0.35], [0.65, 0.75], [0.25, 0.8]];

/// Fractions of the total mass carried by the four sites.
pub const FOUR_SITE_FRACTIONS: [f64; 4] = [0.38, 0.29, 0.19, 0.14];

/// Four sites on `[0, side]^2` whose masses sum to the area of the square.
pub fn four_sites(side: f64) -> DiscreteMeasure {
    let area = side * side;
    let points = FOUR_SITE_POSITIONS.iter().map(|p| [side * p[0], side * p[1]]).collect();
    let masses = FOUR_SITE_FRACTIONS.iter().map(|f| area * f).collect();
    DiscreteMeasure::new(points, masses, None).expect("fixed sites are distinct")
}

/// Half-width of the Gaussian-bump domain, `4 pi`.
pub const BUMP_HALF_WIDTH: f64 = 4.0 * std::f64::consts::PI;

/// The square `[-4 pi, 4 pi]^2`.
pub fn bump_domain() -> Domain {
    Domain::new(-BUMP_HALF_WIDTH, BUMP_HALF_WIDTH, -BUMP_HALF_WIDTH, BUMP_HALF_WIDTH)
        .expect("valid domain")
}

/// `1 + exp(-|x|^2 / (2 (4 pi)^2))` on `domain`.
pub fn gaussian_bump_on(domain: Domain, nx: usize, ny: usize) -> Result<GridDensity> {
    let s2 = 2.0 * BUMP_HALF_WIDTH * BUMP_HALF_WIDTH;
    GridDensity::from_fn(domain, nx, ny, |p| 1.0 + (-(p[0] * p[0] + p[1] * p[1]) / s2).exp())
}

/// The Gaussian bump on its canonical domain `[-4 pi, 4 pi]^2`.
pub fn gaussian_bump(nx: usize, ny: usize) -> Result<GridDensity> {
    gaussian_bump_on(bump_domain(), nx, ny)
}

/// Exact mass of the bump on its canonical domain:
/// `(8 pi)^2 + 2 pi sigma^2 erf(4 pi / (sigma sqrt 2))^2` with `sigma = 4 pi`.
pub fn gaussian_bump_mass(erf: impl Fn(f64) -> f64) -> f64 {
    let l = BUMP_HALF_WIDTH;
    let sigma = BUMP_HALF_WIDTH;
    let e = erf(l / (sigma * std::f64::consts::SQRT_2));
    (2.0 * l).powi(2) + 2.0 * std::f64::consts::PI * sigma * sigma * e * e
}

/// `count` sites drawn uniformly in `domain` with masses drawn uniformly in
/// `[0.5, 1.5]` and rescaled to sum to `total`.
pub fn random_sites(domain: &Domain, count: usize, seed: u64, total: f64) -> Result<DiscreteMeasure> {
    if count == 0 || !(total > 0.0) || !total.is_finite() {
        return Err(invalid("random sites need count >= 1 and a positive finite total mass"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| [rng.gen_range(domain.x_min..domain.x_max), rng.gen_range(domain.y_min..domain.y_max)])
        .collect();
    let raw: Vec<f64> = (0..count).map(|_| rng.gen_range(0.5..1.5)).collect();
    let sum: f64 = raw.iter().sum();
    DiscreteMeasure::new(points, raw.iter().map(|r| r * total / sum).collect(), Some(domain))
}
