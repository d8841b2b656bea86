//! Periodic orbits, iteration and local chart conjugates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::space::{ModelSpace, Point};
use crate::system::{DiscreteSystem, ToralAutomorphism};

/// Tolerance for orbit closure and point identification.
pub const CLOSURE_TOL: f64 = 1e-12;

/// Keeps the balls of radius `b` around distinct cycle points strictly disjoint.
const DISJOINT_MARGIN: f64 = 1.0 - 1e-9;

/// Largest grid enumerated by [`find_rational_periodic_orbits`].
const MAX_GRID_POINTS: u64 = 1 << 24;

/// `f^k(x)`; negative `k` uses the inverse map.
pub fn iterate(system: &dyn DiscreteSystem, x: &Point, k: i64) -> Point {
    let mut y = x.clone();
    if k >= 0 {
        for _ in 0..k {
            y = system.eval(&y);
        }
    } else {
        for _ in 0..k.unsigned_abs() {
            y = system.eval_inverse(&y);
        }
    }
    y
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicOrbit {
    space: ModelSpace,
    points: Vec<Point>,
    jacobians: Vec<DMatrix<f64>>,
    fundamental_period: usize,
    chart_radius: f64,
}

impl PeriodicOrbit {
    /// Iterates `base` under `system` and records an orbit of period `period`.
    pub fn from_system(system: &dyn DiscreteSystem, base: &Point, period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidOrbit("period must be positive".into()));
        }
        let space = system.space();
        if base.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: base.len(),
            });
        }
        let base = space.wrap(base);
        let mut points = Vec::with_capacity(period);
        let mut x = base.clone();
        for _ in 0..period {
            points.push(x.clone());
            x = system.eval(&x);
        }
        let closure = space.dist(&x, &base);
        if closure > CLOSURE_TOL {
            return Err(Error::InvalidOrbit(format!(
                "f^{period}(p) misses p by {closure:e}"
            )));
        }
        let fundamental_period = (1..=period)
            .find(|&k| period.is_multiple_of(k) && (k == period || space.dist(&points[k], &base) <= CLOSURE_TOL))
            .unwrap_or(period);
        let jacobians = points.iter().map(|p| system.jacobian(p)).collect();
        Self::from_parts(space, points, jacobians, fundamental_period)
    }

    /// Assembles an orbit from explicit data, computing the chart radius as
    /// `min(cap, half the minimal distance between distinct cycle points)`.
    pub fn from_parts(
        space: ModelSpace,
        points: Vec<Point>,
        jacobians: Vec<DMatrix<f64>>,
        fundamental_period: usize,
    ) -> Result<Self> {
        validate_shape(&space, &points, &jacobians, fundamental_period)?;
        let min_dist = min_pairwise_distance(&space, &points[..fundamental_period]);
        let chart_radius = space
            .orbit_radius_cap()
            .min(0.5 * min_dist * DISJOINT_MARGIN);
        Self::with_radius(space, points, jacobians, fundamental_period, chart_radius)
    }

    /// Assembles an orbit with an explicit chart radius; the balls around the
    /// distinct cycle points must be pairwise disjoint.
    pub fn with_radius(
        space: ModelSpace,
        points: Vec<Point>,
        jacobians: Vec<DMatrix<f64>>,
        fundamental_period: usize,
        chart_radius: f64,
    ) -> Result<Self> {
        validate_shape(&space, &points, &jacobians, fundamental_period)?;
        if chart_radius.is_nan() || chart_radius <= 0.0 {
            return Err(Error::InvalidOrbit(format!(
                "chart radius must be positive, got {chart_radius}"
            )));
        }
        if chart_radius > space.chart_radius_limit() {
            return Err(Error::InvalidOrbit(format!(
                "chart radius {chart_radius} exceeds the chart limit {}",
                space.chart_radius_limit()
            )));
        }
        let min_dist = min_pairwise_distance(&space, &points[..fundamental_period]);
        if min_dist.is_finite() && min_dist <= 2.0 * chart_radius {
            return Err(Error::InvalidOrbit(format!(
                "balls of radius {chart_radius} around cycle points overlap (min distance {min_dist})"
            )));
        }
        let points = points.iter().map(|p| space.wrap(p)).collect();
        Ok(Self {
            space,
            points,
            jacobians,
            fundamental_period,
            chart_radius,
        })
    }

    pub fn space(&self) -> ModelSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn period(&self) -> usize {
        self.points.len()
    }

    pub fn fundamental_period(&self) -> usize {
        self.fundamental_period
    }

    pub fn chart_radius(&self) -> f64 {
        self.chart_radius
    }

    pub fn base(&self) -> &Point {
        &self.points[0]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn jacobians(&self) -> &[DMatrix<f64>] {
        &self.jacobians
    }

    /// `p_k = f^k(p)` for any integer `k`.
    pub fn point(&self, k: i64) -> &Point {
        &self.points[self.index(k)]
    }

    /// `A_k = Df(p_k)` for any integer `k`.
    pub fn jacobian(&self, k: i64) -> &DMatrix<f64> {
        &self.jacobians[self.index(k)]
    }

    pub fn index(&self, k: i64) -> usize {
        k.rem_euclid(self.period() as i64) as usize
    }

    /// Index of the cycle ball that contains `p_k`.
    pub fn ball_index(&self, k: i64) -> usize {
        k.rem_euclid(self.fundamental_period as i64) as usize
    }

    /// `A_{k0+steps-1} ⋯ A_{k0}`.
    pub fn jacobian_product(&self, k0: i64, steps: usize) -> DMatrix<f64> {
        let n = self.dim();
        let mut prod = DMatrix::identity(n, n);
        for i in 0..steps as i64 {
            prod = self.jacobian(k0 + i) * prod;
        }
        prod
    }

    /// `B = A_{m-1} ⋯ A_0`, the derivative of `f^m` at the base point.
    pub fn monodromy(&self) -> DMatrix<f64> {
        self.jacobian_product(0, self.period())
    }

    /// Checks closure `f(p_k) = p_{k+1}` and `A_k = Df(p_k)` against `system`.
    pub fn verify_against(&self, system: &dyn DiscreteSystem) -> Result<()> {
        if system.space() != self.space {
            return Err(Error::InvalidOrbit("orbit and system live on different spaces".into()));
        }
        let m = self.period() as i64;
        for k in 0..m {
            let image = system.eval(self.point(k));
            let miss = self.space.dist(&image, self.point(k + 1));
            if miss > CLOSURE_TOL {
                return Err(Error::InvalidOrbit(format!("f(p_{k}) misses p_{} by {miss:e}", k + 1)));
            }
            let jac_err = (system.jacobian(self.point(k)) - self.jacobian(k)).norm();
            if jac_err > CLOSURE_TOL * (1.0 + self.jacobian(k).norm()) {
                return Err(Error::InvalidOrbit(format!("A_{k} differs from Df(p_{k}) by {jac_err:e}")));
            }
        }
        Ok(())
    }
}

fn validate_shape(
    space: &ModelSpace,
    points: &[Point],
    jacobians: &[DMatrix<f64>],
    fundamental_period: usize,
) -> Result<()> {
    let m = points.len();
    if m == 0 {
        return Err(Error::InvalidOrbit("orbit has no points".into()));
    }
    if jacobians.len() != m {
        return Err(Error::InvalidOrbit(format!(
            "{} jacobians for {m} points",
            jacobians.len()
        )));
    }
    if fundamental_period == 0 || !m.is_multiple_of(fundamental_period) {
        return Err(Error::InvalidOrbit(format!(
            "fundamental period {fundamental_period} does not divide period {m}"
        )));
    }
    let n = space.dim();
    for (p, a) in points.iter().zip(jacobians) {
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.len() });
        }
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
        }
        if p.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidOrbit("non-finite orbit data".into()));
        }
    }
    for k in fundamental_period..m {
        if space.dist(&points[k], &points[k % fundamental_period]) > CLOSURE_TOL {
            return Err(Error::InvalidOrbit(format!(
                "point {k} does not repeat with fundamental period {fundamental_period}"
            )));
        }
    }
    Ok(())
}

fn min_pairwise_distance(space: &ModelSpace, points: &[Point]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            min = min.min(space.dist(&points[i], &points[j]));
        }
    }
    min
}

/// All cycles of `system` among the grid points with coordinates in
/// `{0, 1/q, …, (q-1)/q}`, in order of first appearance in lexicographic
/// grid order. Each orbit has `m = m₀`.
pub fn find_rational_periodic_orbits(system: &ToralAutomorphism, q: u32) -> Result<Vec<PeriodicOrbit>> {
    if q == 0 {
        return Err(Error::param("denominator", "must be at least 1"));
    }
    let n = system.space().dim();
    let total = (q as u64).checked_pow(n as u32).filter(|&t| t <= MAX_GRID_POINTS).ok_or_else(|| {
        Error::param("denominator", format!("grid {q}^{n} is too large to enumerate"))
    })? as usize;
    let q = i64::from(q);
    let encode = |idx: &[i64]| idx.iter().fold(0usize, |acc, &c| acc * q as usize + c as usize);
    let decode = |mut code: usize| {
        let mut idx = vec![0i64; n];
        for c in idx.iter_mut().rev() {
            *c = (code % q as usize) as i64;
            code /= q as usize;
        }
        idx
    };
    let mut visited = vec![false; total];
    let mut orbits = Vec::new();
    for start in 0..total {
        if visited[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut idx = decode(start);
        loop {
            let code = encode(&idx);
            if visited[code] {
                break;
            }
            visited[code] = true;
            cycle.push(idx.clone());
            idx = system.apply_grid(&idx, q);
        }
        if encode(&idx) != start {
            // unreachable for an automorphism: the grid map is a bijection
            return Err(Error::InvalidOrbit("grid map is not a permutation".into()));
        }
        let points: Vec<Point> = cycle
            .iter()
            .map(|c| DVector::from_iterator(n, c.iter().map(|&i| i as f64 / q as f64)))
            .collect();
        let jacobians = vec![system.matrix().clone(); points.len()];
        let m = points.len();
        let orbit = PeriodicOrbit::from_parts(system.space(), points, jacobians, m)?;
        orbit.verify_against(system)?;
        orbits.push(orbit);
    }
    Ok(orbits)
}

/// `F_k = exp⁻¹_{p_{k+1}} ∘ f ∘ exp_{p_k}` on the ball of radius `b`.
#[derive(Clone, Copy, Debug)]
pub struct LocalConjugate<'a> {
    system: &'a dyn DiscreteSystem,
    orbit: &'a PeriodicOrbit,
    k: i64,
}

impl<'a> LocalConjugate<'a> {
    pub fn new(system: &'a dyn DiscreteSystem, orbit: &'a PeriodicOrbit, k: i64) -> Self {
        Self { system, orbit, k }
    }

    pub fn index(&self) -> i64 {
        self.k
    }

    pub fn radius(&self) -> f64 {
        self.orbit.chart_radius()
    }

    pub fn linear_part(&self) -> &'a DMatrix<f64> {
        self.orbit.jacobian(self.k)
    }

    pub fn eval(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_domain(v)?;
        Ok(self.eval_unchecked(v))
    }

    pub(crate) fn eval_unchecked(&self, v: &DVector<f64>) -> DVector<f64> {
        let space = self.orbit.space();
        let x = space.exp(self.orbit.point(self.k), v);
        space.log(self.orbit.point(self.k + 1), &self.system.eval(&x))
    }

    /// `φ_k(v) = F_k(v) - A_k v`.
    pub fn remainder(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.eval(v)? - self.linear_part() * v)
    }

    pub fn check_domain(&self, v: &DVector<f64>) -> Result<()> {
        let norm = v.norm();
        if norm > self.radius() {
            return Err(Error::ChartDomain {
                norm,
                radius: self.radius(),
            });
        }
        Ok(())
    }
}

pub fn local_conjugate<'a>(
    system: &'a dyn DiscreteSystem,
    orbit: &'a PeriodicOrbit,
    k: i64,
) -> LocalConjugate<'a> {
    LocalConjugate::new(system, orbit, k)
}

pub fn remainder(conjugate: &LocalConjugate<'_>, v: &DVector<f64>) -> Result<DVector<f64>> {
    conjugate.remainder(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{AffineCycleModel, PerturbedToralMap};
    use nalgebra::dvector;

    #[test]
    fn cat_map_fixed_point_is_fixed_under_iteration() {
        let cat = ToralAutomorphism::cat_map();
        let x = dvector![0.0, 0.0];
        assert_eq!(iterate(&cat, &x, 7), x);
        let y = dvector![0.3, 0.7];
        assert_eq!(iterate(&cat, &y, 0), y);
    }

    #[test]
    fn iterate_one_step_matches_rational_arithmetic() {
        let cat = ToralAutomorphism::cat_map();
        // (2·1 + 2, 1 + 2) / 5 = (4, 3) / 5
        let image = iterate(&cat, &dvector![0.2, 0.4], 1);
        let oracle = cat.apply_grid(&[1, 2], 5);
        let expected = dvector![oracle[0] as f64 / 5.0, oracle[1] as f64 / 5.0];
        assert!(cat.space().dist(&image, &expected) < 1e-15);
        assert!(cat.space().dist(&image, &dvector![0.8, 0.6]) < 1e-15);
        let back = iterate(&cat, &image, -1);
        assert!(cat.space().dist(&back, &dvector![0.2, 0.4]) < 1e-15);
    }

    fn brute_force_cycles(q: i64) -> Vec<usize> {
        // independent enumeration using f64-free rational iteration
        let mut seen = std::collections::HashSet::new();
        let mut lengths = Vec::new();
        for a in 0..q {
            for b in 0..q {
                if seen.contains(&(a, b)) {
                    continue;
                }
                let mut p = (a, b);
                let mut len = 0;
                loop {
                    seen.insert(p);
                    p = ((2 * p.0 + p.1) % q, (p.0 + p.1) % q);
                    len += 1;
                    if p == (a, b) {
                        break;
                    }
                }
                lengths.push(len);
            }
        }
        lengths
    }

    #[test]
    fn rational_orbits_of_cat_map() {
        let cat = ToralAutomorphism::cat_map();
        let q1 = find_rational_periodic_orbits(&cat, 1).unwrap();
        assert_eq!(q1.len(), 1);
        assert_eq!(q1[0].fundamental_period(), 1);
        assert_eq!(q1[0].base(), &dvector![0.0, 0.0]);

        let q2 = find_rational_periodic_orbits(&cat, 2).unwrap();
        let periods: Vec<usize> = q2.iter().map(|o| o.period()).collect();
        assert_eq!(periods, vec![1, 3]);
        let three = &q2[1];
        for p in [dvector![0.5, 0.0], dvector![0.0, 0.5], dvector![0.5, 0.5]] {
            assert!(three.points().contains(&p));
        }

        for q in [3u32, 4, 5, 7] {
            let orbits = find_rational_periodic_orbits(&cat, q).unwrap();
            let mut got: Vec<usize> = orbits.iter().map(|o| o.period()).collect();
            let mut expected = brute_force_cycles(i64::from(q));
            got.sort_unstable();
            expected.sort_unstable();
            assert_eq!(got, expected, "q = {q}");
            for o in &orbits {
                assert_eq!(o.period(), o.fundamental_period());
                let back = iterate(&cat, o.base(), o.period() as i64);
                assert!(cat.space().dist(&back, o.base()) < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_zero_denominator() {
        assert!(find_rational_periodic_orbits(&ToralAutomorphism::cat_map(), 0).is_err());
    }

    #[test]
    fn chart_radius_rule() {
        let cat = ToralAutomorphism::cat_map();
        let q5 = find_rational_periodic_orbits(&cat, 5).unwrap();
        for o in &q5 {
            assert!(o.chart_radius() <= 0.125);
            let pts = o.points();
            let mut min_dist = f64::INFINITY;
            for i in 0..pts.len() {
                for j in 0..i {
                    min_dist = min_dist.min(o.space().dist(&pts[i], &pts[j]));
                }
            }
            let expected = 0.125f64.min(0.5 * min_dist * (1.0 - 1e-9));
            assert_eq!(o.chart_radius(), expected);
            for i in 0..pts.len() {
                for j in 0..i {
                    assert!(o.space().dist(&pts[i], &pts[j]) > 2.0 * o.chart_radius());
                }
            }
        }
    }

    #[test]
    fn fundamental_period_detected_for_multiples() {
        let cat = ToralAutomorphism::cat_map();
        let o = PeriodicOrbit::from_system(&cat, &dvector![0.5, 0.0], 6).unwrap();
        assert_eq!(o.period(), 6);
        assert_eq!(o.fundamental_period(), 3);
        assert!(PeriodicOrbit::from_system(&cat, &dvector![0.5, 0.0], 2).is_err());
    }

    #[test]
    fn conjugate_of_cat_fixed_point_is_linear() {
        let cat = ToralAutomorphism::cat_map();
        let orbit = &find_rational_periodic_orbits(&cat, 1).unwrap()[0];
        let f0 = local_conjugate(&cat, orbit, 0);
        assert_eq!(f0.eval(&dvector![0.0, 0.0]).unwrap(), dvector![0.0, 0.0]);
        let v = dvector![1e-3, 0.0];
        let expected = dvector![2e-3, 1e-3];
        assert!((f0.eval(&v).unwrap() - expected).norm() < 1e-15);
        assert!(remainder(&f0, &v).unwrap().norm() < 1e-15);
        assert!(matches!(f0.eval(&dvector![0.2, 0.0]), Err(Error::ChartDomain { .. })));
    }

    #[test]
    fn perturbed_remainder_is_superlinear() {
        let f = PerturbedToralMap::new(ToralAutomorphism::cat_map(), 0.5).unwrap();
        let orbit = PeriodicOrbit::from_system(&f, &dvector![0.0, 0.0], 1).unwrap();
        let conj = local_conjugate(&f, &orbit, 0);
        let dir = dvector![0.6, 0.8];
        let ratios: Vec<f64> = (4..=20)
            .map(|j| {
                let r = 2f64.powi(-j);
                conj.remainder(&(&dir * r)).unwrap().norm() / r
            })
            .collect();
        for w in ratios.windows(2) {
            assert!(w[1] < w[0], "{ratios:?}");
        }
        assert!(ratios.last().unwrap() < &1e-5);
    }

    #[test]
    fn affine_cycle_orbit_matches_matrices() {
        let a0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let a1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]);
        let model = AffineCycleModel::new(vec![dvector![0.0, 0.0], dvector![10.0, 0.0]], vec![a0.clone(), a1]).unwrap();
        let orbit = PeriodicOrbit::from_system(&model, &dvector![0.0, 0.0], 2).unwrap();
        orbit.verify_against(&model).unwrap();
        assert_eq!(orbit.jacobian(0), &a0);
        let conj = local_conjugate(&model, &orbit, 0);
        let v = dvector![0.3, -0.2];
        assert!((conj.eval(&v).unwrap() - &a0 * &v).norm() < 1e-15);
    }
}
