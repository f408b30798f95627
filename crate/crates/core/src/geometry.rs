//! Measure containers: the axis-aligned domain, the rasterized diffuse
//! measure and the discrete measure.
//!
//! Raster values are densities sampled at cell centers. Every integral in
//! the crate is a midpoint sum with weight `cell_area`, so the boundary of
//! the domain carries no mass.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A point of the plane.
pub type Point = [f64; 2];

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[inline]
pub(crate) fn dist_sq(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Closed axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let d = Domain { x_min, x_max, y_min, y_max };
        d.validate()?;
        Ok(d)
    }

    /// The square `[0, side]^2`.
    pub fn square(side: f64) -> Result<Self> {
        Self::new(0.0, side, 0.0, side)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(invalid(format!("degenerate domain {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.width() + self.height())
    }

    pub fn center(&self) -> Point {
        [
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        ]
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    /// Nearest point of the rectangle.
    pub fn project(&self, p: Point) -> Point {
        [
            p[0].clamp(self.x_min, self.x_max),
            p[1].clamp(self.y_min, self.y_max),
        ]
    }
}

/// Rasterized diffuse measure: `nx * ny` nonnegative densities at cell
/// centers, stored row-major with row 0 at `y_min`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    domain: Domain,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(domain: Domain, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        domain.validate()?;
        if nx == 0 || ny == 0 {
            return Err(invalid(format!("grid resolution must be positive, got {nx}x{ny}")));
        }
        if values.len() != nx * ny {
            return Err(invalid(format!(
                "raster has {} values, expected {}x{}",
                values.len(),
                nx,
                ny
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!("density values must be finite and >= 0, found {v}")));
        }
        Ok(GridDensity { domain, nx, ny, values })
    }

    /// Constant density `level` on the whole domain.
    pub fn uniform(domain: Domain, nx: usize, ny: usize, level: f64) -> Result<Self> {
        if !(level >= 0.0) || !level.is_finite() {
            return Err(invalid(format!("density level must be finite and >= 0, got {level}")));
        }
        Self::new(domain, nx, ny, vec![level; nx.saturating_mul(ny)])
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(domain: Domain, nx: usize, ny: usize, f: impl Fn(Point) -> f64) -> Result<Self> {
        domain.validate()?;
        if nx == 0 || ny == 0 {
            return Err(invalid(format!("grid resolution must be positive, got {nx}x{ny}")));
        }
        let dx = domain.width() / nx as f64;
        let dy = domain.height() / ny as f64;
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = domain.y_min + (j as f64 + 0.5) * dy;
            for i in 0..nx {
                let x = domain.x_min + (i as f64 + 0.5) * dx;
                values.push(f([x, y]));
            }
        }
        Self::new(domain, nx, ny, values)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dx(&self) -> f64 {
        self.domain.width() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.domain.height() / self.ny as f64
    }

    /// Larger of the two cell side lengths.
    pub fn cell_width(&self) -> f64 {
        self.dx().max(self.dy())
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    /// Center of raster cell `index` (row-major).
    #[inline]
    pub fn center(&self, index: usize) -> Point {
        let i = index % self.nx;
        let j = index / self.nx;
        [
            self.domain.x_min + (i as f64 + 0.5) * self.dx(),
            self.domain.y_min + (j as f64 + 0.5) * self.dy(),
        ]
    }

    /// x coordinates of the column centers.
    pub fn column_centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx)
            .map(|i| self.domain.x_min + (i as f64 + 0.5) * dx)
            .collect()
    }

    /// y coordinates of the row centers.
    pub fn row_centers(&self) -> Vec<f64> {
        let dy = self.dy();
        (0..self.ny)
            .map(|j| self.domain.y_min + (j as f64 + 0.5) * dy)
            .collect()
    }

    /// `mu(Omega)` by the midpoint rule.
    pub fn total_mass(&self) -> f64 {
        self.cell_area() * self.values.iter().sum::<f64>()
    }

    /// Same grid, values multiplied by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.domain,
            self.nx,
            self.ny,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// Same grid with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.domain, self.nx, self.ny, values)
    }

    pub(crate) fn same_grid(&self, other: &GridDensity) -> bool {
        self.domain == other.domain && self.nx == other.nx && self.ny == other.ny
    }
}

/// Total mass of the raster; free-function form of [`GridDensity::total_mass`].
pub fn total_mass(g: &GridDensity) -> f64 {
    g.total_mass()
}

/// Constant-density raster.
pub fn uniform_density(domain: Domain, nx: usize, ny: usize, level: f64) -> Result<GridDensity> {
    GridDensity::uniform(domain, nx, ny, level)
}

/// `sum_i m_i delta_{x_i}` with pairwise-distinct points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    points: Vec<Point>,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds the measure. Points must be finite, inside `domain` when one
    /// is given, and pairwise distinct (exact comparison). Masses must be
    /// finite and nonnegative.
    pub fn new(points: Vec<Point>, masses: Vec<f64>, domain: Option<&Domain>) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(invalid(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        if let Some(m) = masses.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(invalid(format!("masses must be finite and >= 0, found {m}")));
        }
        check_points(&points, domain)?;
        Ok(DiscreteMeasure { points, masses })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Errors unless every mass is strictly positive.
    pub fn require_positive_masses(&self) -> Result<()> {
        match self.masses.iter().position(|m| *m <= 0.0) {
            Some(i) => Err(invalid(format!(
                "mass {} of site {} must be positive for transport",
                self.masses[i],
                i + 1
            ))),
            None => Ok(()),
        }
    }
}

/// Finite, inside the domain (if given) and pairwise distinct.
pub(crate) fn check_points(points: &[Point], domain: Option<&Domain>) -> Result<()> {
    for (i, p) in points.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(invalid(format!("point {} is not finite: {p:?}", i + 1)));
        }
        if let Some(d) = domain {
            if !d.contains(*p) {
                return Err(invalid(format!("point {} = {p:?} lies outside the domain", i + 1)));
            }
        }
    }
    let mut sorted: Vec<(usize, Point)> = points.iter().copied().enumerate().collect();
    sorted.sort_by(|a, b| {
        a.1[0]
            .total_cmp(&b.1[0])
            .then(a.1[1].total_cmp(&b.1[1]))
    });
    for w in sorted.windows(2) {
        if w[0].1 == w[1].1 {
            return Err(invalid(format!(
                "points {} and {} coincide at {:?}",
                w[0].0 + 1,
                w[1].0 + 1,
                w[0].1
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_unit_square_has_unit_mass() {
        for n in [1, 7, 64] {
            let g = uniform_density(Domain::square(1.0).unwrap(), n, n, 1.0).unwrap();
            assert!((total_mass(&g) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_raster_has_zero_mass() {
        let g = uniform_density(Domain::square(1.0).unwrap(), 4, 4, 0.0).unwrap();
        assert_eq!(total_mass(&g), 0.0);
    }

    #[test]
    fn density_two_on_side_five() {
        let g = uniform_density(Domain::square(5.0).unwrap(), 100, 100, 2.0).unwrap();
        let by_sum: f64 = g.values().iter().map(|v| v * g.cell_area()).sum();
        assert!((total_mass(&g) - 50.0).abs() < 1e-10);
        assert!((by_sum - 50.0).abs() < 1e-10);
    }

    #[test]
    fn lebesgue_on_side_five() {
        let g = uniform_density(Domain::square(5.0).unwrap(), 1000, 1000, 1.0).unwrap();
        assert!((g.total_mass() - 25.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_resolution_and_values() {
        let d = Domain::square(1.0).unwrap();
        assert!(uniform_density(d, 0, 3, 1.0).is_err());
        assert!(uniform_density(d, 3, 0, 1.0).is_err());
        assert!(uniform_density(d, 3, 3, -1.0).is_err());
        assert!(GridDensity::new(d, 2, 2, vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(GridDensity::new(d, 2, 2, vec![1.0; 3]).is_err());
        assert!(Domain::new(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn discrete_measure_rejects_duplicates_and_outside_points() {
        let d = Domain::square(1.0).unwrap();
        assert!(DiscreteMeasure::new(vec![[0.2, 0.2], [0.2, 0.2]], vec![1.0, 1.0], Some(&d)).is_err());
        assert!(DiscreteMeasure::new(vec![[1.2, 0.2]], vec![1.0], Some(&d)).is_err());
        assert!(DiscreteMeasure::new(vec![[0.2, 0.2]], vec![-1.0], Some(&d)).is_err());
        let nu = DiscreteMeasure::new(vec![[0.0, 0.0], [1.0, 1.0]], vec![0.0, 2.0], Some(&d)).unwrap();
        assert!(nu.require_positive_masses().is_err());
        assert_eq!(nu.total_mass(), 2.0);
    }

    #[test]
    fn centers_follow_row_major_layout() {
        let g = uniform_density(Domain::new(0.0, 4.0, 0.0, 2.0).unwrap(), 4, 2, 1.0).unwrap();
        assert_eq!(g.center(0), [0.5, 0.5]);
        assert_eq!(g.center(3), [3.5, 0.5]);
        assert_eq!(g.center(4), [0.5, 1.5]);
    }
}
