//! Flat model spaces and their charts.
//!
//! On both spaces the chart at `x` is translation, `v ↦ x + v`, reduced mod 1
//! on the torus. Inside the chart radius it is an isometry, so the
//! distortion constants of the exponential map are exactly 1.

use nalgebra::DVector;

pub type Point = DVector<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    FlatTorus,
    Euclidean,
}

impl SpaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpaceKind::FlatTorus => "flat-torus",
            SpaceKind::Euclidean => "euclidean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "flat-torus" | "torus" => Some(SpaceKind::FlatTorus),
            "euclidean" => Some(SpaceKind::Euclidean),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelSpace {
    kind: SpaceKind,
    dim: usize,
}

impl ModelSpace {
    pub fn new(kind: SpaceKind, dim: usize) -> Self {
        assert!(dim > 0, "model space dimension must be positive");
        Self { kind, dim }
    }

    pub fn torus(dim: usize) -> Self {
        Self::new(SpaceKind::FlatTorus, dim)
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(SpaceKind::Euclidean, dim)
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_torus(&self) -> bool {
        self.kind == SpaceKind::FlatTorus
    }

    /// Radius below which the chart map is an injective isometry.
    pub fn chart_radius_limit(&self) -> f64 {
        match self.kind {
            SpaceKind::FlatTorus => 0.25,
            SpaceKind::Euclidean => f64::INFINITY,
        }
    }

    /// Upper bound used for the chart radius of periodic orbits.
    pub fn orbit_radius_cap(&self) -> f64 {
        match self.kind {
            SpaceKind::FlatTorus => 0.125,
            SpaceKind::Euclidean => f64::INFINITY,
        }
    }

    /// Canonical representative of a point (coordinates in `[0, 1)` on the torus).
    pub fn wrap(&self, x: &Point) -> Point {
        match self.kind {
            SpaceKind::Euclidean => x.clone(),
            SpaceKind::FlatTorus => x.map(wrap_unit),
        }
    }

    /// Shortest displacement from `from` to `to`; each torus coordinate lies in `[-1/2, 1/2]`.
    pub fn displacement(&self, from: &Point, to: &Point) -> DVector<f64> {
        let diff = to - from;
        match self.kind {
            SpaceKind::Euclidean => diff,
            SpaceKind::FlatTorus => diff.map(|c| c - c.round()),
        }
    }

    pub fn dist(&self, x: &Point, y: &Point) -> f64 {
        self.displacement(x, y).norm()
    }

    /// Chart map at `base`.
    pub fn exp(&self, base: &Point, v: &DVector<f64>) -> Point {
        self.wrap(&(base + v))
    }

    /// Inverse chart map at `base`.
    pub fn log(&self, base: &Point, y: &Point) -> DVector<f64> {
        self.displacement(base, y)
    }
}

fn wrap_unit(c: f64) -> f64 {
    let r = c.rem_euclid(1.0);
    // rem_euclid rounds tiny negatives up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn torus_distance_uses_quotient_metric() {
        let t = ModelSpace::torus(2);
        let x = dvector![0.05, 0.5];
        let y = dvector![0.95, 0.5];
        assert!((t.dist(&x, &y) - 0.1).abs() < 1e-15);
        let e = ModelSpace::euclidean(2);
        assert!((e.dist(&x, &y) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn wrap_never_returns_one() {
        let t = ModelSpace::torus(1);
        let w = t.wrap(&dvector![-1e-20]);
        assert_eq!(w[0], 0.0);
        assert_eq!(t.wrap(&dvector![2.25])[0], 0.25);
    }

    #[test]
    fn chart_round_trip_inside_radius() {
        let t = ModelSpace::torus(3);
        let base = dvector![0.9, 0.01, 0.5];
        let v = dvector![0.2, -0.1, 0.05];
        let back = t.log(&base, &t.exp(&base, &v));
        assert!((back - v).norm() < 1e-15);
    }
}
