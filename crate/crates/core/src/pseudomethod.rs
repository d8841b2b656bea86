//! Pseudomethods of classes Θ_s and Θ_t, pseudotrajectories and their
//! measurements.

use std::fmt;
use std::ops::RangeInclusive;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::orbit::PeriodicOrbit;
use crate::record::fmt_f64;
use crate::sampler::SpaceSampler;
use crate::space::Point;
use crate::system::{DiscreteSystem, SharedSystem};

/// Window of `k` values used to sample pseudomethods without a k-period.
pub const DEFAULT_SAMPLE_WINDOW: usize = 64;

const NEWTON_MAX_ITER: usize = 60;
const NEWTON_TOL: f64 = 1e-14;
const RESIDUAL_TOL: f64 = 1e-12;

/// A `k`-indexed family of self-maps `x ↦ Ψ_k(x)`.
pub trait MapFamily: Send + Sync {
    fn eval(&self, k: i64, x: &Point) -> Point;
}

impl<F> MapFamily for F
where
    F: Fn(i64, &Point) -> Point + Send + Sync,
{
    fn eval(&self, k: i64, x: &Point) -> Point {
        self(k, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PseudomethodClass {
    S,
    T,
}

impl PseudomethodClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PseudomethodClass::S => "theta_s",
            PseudomethodClass::T => "theta_t",
        }
    }
}

fn check_defect(defect: f64) -> Result<()> {
    if !(defect.is_finite() && defect >= 0.0) {
        return Err(Error::param("defect", "must be finite and non-negative"));
    }
    Ok(())
}

/// Θ_s pseudomethod: `dist(Ψ_k(x), f(x)) ≤ d` for all `k`, `x`.
#[derive(Clone)]
pub struct PseudomethodS {
    system: SharedSystem,
    maps: Arc<dyn MapFamily>,
    k_period: Option<usize>,
    defect: f64,
    sample_window: usize,
}

impl fmt::Debug for PseudomethodS {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PseudomethodS")
            .field("system", &self.system)
            .field("k_period", &self.k_period)
            .field("defect", &self.defect)
            .finish_non_exhaustive()
    }
}

impl PseudomethodS {
    /// `k_period = None` marks a family that is not periodic in `k`; the maps
    /// are then called with the raw index.
    pub fn new(
        system: SharedSystem,
        maps: Arc<dyn MapFamily>,
        k_period: Option<usize>,
        defect: f64,
    ) -> Result<Self> {
        check_defect(defect)?;
        if k_period == Some(0) {
            return Err(Error::param("k_period", "must be positive"));
        }
        Ok(Self {
            system,
            maps,
            k_period,
            defect,
            sample_window: DEFAULT_SAMPLE_WINDOW,
        })
    }

    /// `Ψ_k = f` for every `k`.
    pub fn exact(system: SharedSystem) -> Self {
        let f = system.clone();
        let maps: Arc<dyn MapFamily> = Arc::new(move |_k: i64, x: &Point| f.eval(x));
        Self::new(system, maps, Some(1), 0.0).expect("valid")
    }

    /// `Ψ_k(x) = f(x) + offset`, reduced to the model space.
    pub fn constant_drift(system: SharedSystem, offset: DVector<f64>) -> Result<Self> {
        if offset.len() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                got: offset.len(),
            });
        }
        let defect = offset.norm();
        let f = system.clone();
        let space = system.space();
        let maps: Arc<dyn MapFamily> = Arc::new(move |_k: i64, x: &Point| space.exp(&f.eval(x), &offset));
        Self::new(system, maps, Some(1), defect)
    }

    /// Sets the `k` window used for sampling when the family has no k-period.
    pub fn with_sample_window(mut self, window: usize) -> Self {
        self.sample_window = window.max(1);
        self
    }

    pub fn system(&self) -> &SharedSystem {
        &self.system
    }

    pub fn k_period(&self) -> Option<usize> {
        self.k_period
    }

    /// Claimed defect `d`.
    pub fn defect(&self) -> f64 {
        self.defect
    }

    /// Indices `0..P` (or the sample window) that represent every map of the family.
    pub fn sample_indices(&self) -> std::ops::Range<i64> {
        0..self.k_period.unwrap_or(self.sample_window) as i64
    }

    pub fn apply(&self, k: i64, x: &Point) -> Point {
        let k = match self.k_period {
            Some(p) => k.rem_euclid(p as i64),
            None => k,
        };
        self.maps.eval(k, x)
    }

    /// Solves `Ψ_k(x) = y` for `x` by Newton's method in charts, using `Df` as
    /// the Jacobian model and `f⁻¹(y)` as the starting guess.
    pub fn invert_step(&self, k: i64, y: &Point) -> Result<Point> {
        let space = self.system.space();
        let mut x = self.system.eval_inverse(y);
        let scale = 1.0f64.max(y.amax());
        let mut last = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            let r = space.displacement(y, &self.apply(k, &x));
            let rn = r.norm();
            if !rn.is_finite() {
                break;
            }
            if rn <= NEWTON_TOL * scale {
                return Ok(x);
            }
            if rn >= last && rn <= RESIDUAL_TOL * scale {
                // stalled at rounding level
                return Ok(x);
            }
            last = rn;
            let jac = self.system.jacobian(&x);
            let step = jac.lu().solve(&r).ok_or_else(|| Error::BackwardGeneration {
                k,
                reason: "singular Jacobian".into(),
            })?;
            x = space.exp(&x, &(-step));
        }
        let r = space.dist(y, &self.apply(k, &x));
        if r <= RESIDUAL_TOL * scale {
            Ok(x)
        } else {
            Err(Error::BackwardGeneration {
                k,
                reason: format!("local inversion did not converge (residual {r:e})"),
            })
        }
    }
}

/// Θ_t pseudomethod: `dist(Ψ_{k+1}(x), f(Ψ_k(x))) ≤ d`.
#[derive(Clone)]
pub struct PseudomethodT {
    system: SharedSystem,
    maps: Arc<dyn MapFamily>,
    defect: f64,
    sample_window: usize,
}

impl fmt::Debug for PseudomethodT {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PseudomethodT")
            .field("system", &self.system)
            .field("defect", &self.defect)
            .finish_non_exhaustive()
    }
}

impl PseudomethodT {
    pub fn new(system: SharedSystem, maps: Arc<dyn MapFamily>, defect: f64) -> Result<Self> {
        check_defect(defect)?;
        Ok(Self {
            system,
            maps,
            defect,
            sample_window: 16,
        })
    }

    /// `Ψ_k = f^k`.
    pub fn iterates(system: SharedSystem) -> Self {
        let f = system.clone();
        let maps: Arc<dyn MapFamily> =
            Arc::new(move |k: i64, x: &Point| crate::orbit::iterate(f.as_ref(), x, k));
        Self::new(system, maps, 0.0).expect("valid")
    }

    /// Constant maps `Ψ_k(x) = c_k`.
    pub fn constant_maps<F>(system: SharedSystem, values: F, defect: f64) -> Result<Self>
    where
        F: Fn(i64) -> Point + Send + Sync + 'static,
    {
        let maps: Arc<dyn MapFamily> = Arc::new(move |k: i64, _x: &Point| values(k));
        Self::new(system, maps, defect)
    }

    /// Sets the window `0..window` of `k` used by [`measure_defect_t`].
    pub fn with_sample_window(mut self, window: usize) -> Self {
        self.sample_window = window.max(1);
        self
    }

    pub fn system(&self) -> &SharedSystem {
        &self.system
    }

    pub fn defect(&self) -> f64 {
        self.defect
    }

    pub fn apply(&self, k: i64, x: &Point) -> Point {
        self.maps.eval(k, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pseudotrajectory {
    k_min: i64,
    points: Vec<Point>,
    class: PseudomethodClass,
}

impl Pseudotrajectory {
    pub fn new(k_min: i64, points: Vec<Point>, class: PseudomethodClass) -> Self {
        Self { k_min, points, class }
    }

    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    pub fn k_max(&self) -> i64 {
        self.k_min + self.points.len() as i64 - 1
    }

    pub fn class(&self) -> PseudomethodClass {
        self.class
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `x_k`, if `k` is inside the window.
    pub fn get(&self, k: i64) -> Option<&Point> {
        let i = k - self.k_min;
        if i < 0 {
            return None;
        }
        self.points.get(i as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &Point)> {
        let k0 = self.k_min;
        self.points.iter().enumerate().map(move |(i, x)| (k0 + i as i64, x))
    }
}

fn check_window(window: &RangeInclusive<i64>) -> Result<()> {
    if !window.contains(&0) {
        return Err(Error::param("window", "must contain 0"));
    }
    Ok(())
}

/// Largest sampled `dist(Ψ_k(x), f(x))` over every map of the family.
pub fn measure_defect_s(psi: &PseudomethodS, sampler: &SpaceSampler, count: usize) -> f64 {
    let space = psi.system.space();
    let mut sup = 0.0f64;
    for i in 0..count as u64 {
        let x = sampler.point(i);
        let fx = psi.system.eval(&x);
        for k in psi.sample_indices() {
            sup = sup.max(space.dist(&psi.apply(k, &x), &fx));
        }
    }
    sup
}

/// Largest sampled `dist(Ψ_{k+1}(x), f(Ψ_k(x)))` over the sample window.
pub fn measure_defect_t(psi: &PseudomethodT, sampler: &SpaceSampler, count: usize) -> f64 {
    let space = psi.system.space();
    let mut sup = 0.0f64;
    for i in 0..count as u64 {
        let x = sampler.point(i);
        let mut cur = psi.apply(0, &x);
        for k in 0..psi.sample_window as i64 {
            let next = psi.apply(k + 1, &x);
            sup = sup.max(space.dist(&next, &psi.system.eval(&cur)));
            cur = next;
        }
    }
    sup
}

/// Largest sampled ratio `dist(Ψ_k(x+hu), Ψ_k(x)) / h` with unit `u` along the
/// coordinate axes; a finite value bounds the local modulus of continuity.
pub fn continuity_modulus(psi: &PseudomethodS, sampler: &SpaceSampler, count: usize, h: f64) -> f64 {
    let space = psi.system.space();
    let n = space.dim();
    let mut sup = 0.0f64;
    for i in 0..count as u64 {
        let x = sampler.point(i);
        let shift = DVector::from_fn(n, |j, _| if j == (i as usize) % n { h } else { 0.0 });
        let y = space.exp(&x, &shift);
        for k in psi.sample_indices() {
            sup = sup.max(space.dist(&psi.apply(k, &x), &psi.apply(k, &y)) / h);
        }
    }
    sup
}

/// Θ_s pseudotrajectory through `x0` at `k = 0`: forward by `x_{k+1} = Ψ_k(x_k)`,
/// backward by local inversion of `Ψ_k`.
pub fn generate_s(psi: &PseudomethodS, x0: &Point, window: RangeInclusive<i64>) -> Result<Pseudotrajectory> {
    check_window(&window)?;
    let (k_min, k_max) = (*window.start(), *window.end());
    let x0 = psi.system.space().wrap(x0);
    let mut backward = Vec::with_capacity(k_min.unsigned_abs() as usize);
    let mut x = x0.clone();
    for k in (k_min..0).rev() {
        x = psi.invert_step(k, &x)?;
        backward.push(x.clone());
    }
    backward.reverse();
    let mut points = backward;
    points.push(x0.clone());
    let mut x = x0;
    for k in 0..k_max {
        x = psi.apply(k, &x);
        points.push(x.clone());
    }
    Ok(Pseudotrajectory::new(k_min, points, PseudomethodClass::S))
}

/// Θ_t pseudotrajectory `x_k = Ψ_k(x0)`.
pub fn generate_t(psi: &PseudomethodT, x0: &Point, window: RangeInclusive<i64>) -> Result<Pseudotrajectory> {
    check_window(&window)?;
    let points = window.clone().map(|k| psi.apply(k, x0)).collect();
    Ok(Pseudotrajectory::new(*window.start(), points, PseudomethodClass::T))
}

/// `max_k dist(x_{k+1}, Ψ_k(x_k))` over consecutive window indices.
pub fn theta_s_residual(psi: &PseudomethodS, traj: &Pseudotrajectory) -> f64 {
    let space = psi.system.space();
    traj.points
        .windows(2)
        .enumerate()
        .map(|(i, w)| space.dist(&w[1], &psi.apply(traj.k_min + i as i64, &w[0])))
        .fold(0.0, f64::max)
}

/// `max_k dist(x_k, f^k(p))` over the window.
pub fn shadowing_distance(traj: &Pseudotrajectory, orbit: &PeriodicOrbit) -> f64 {
    let space = orbit.space();
    traj.iter()
        .map(|(k, x)| space.dist(x, orbit.point(k)))
        .fold(0.0, f64::max)
}

/// Pseudotrajectory as CSV with columns `k, x_1..x_n, dist_to_orbit`.
pub fn trajectory_csv(traj: &Pseudotrajectory, orbit: &PeriodicOrbit) -> String {
    let n = orbit.dim();
    let mut out = String::from("k");
    for i in 1..=n {
        out.push_str(&format!(",x_{i}"));
    }
    out.push_str(",dist_to_orbit\n");
    let space = orbit.space();
    for (k, x) in traj.iter() {
        out.push_str(&k.to_string());
        for c in x.iter() {
            out.push(',');
            out.push_str(&fmt_f64(*c));
        }
        out.push(',');
        out.push_str(&fmt_f64(space.dist(x, orbit.point(k))));
        out.push('\n');
    }
    out
}

/// Helper for building systems behind `Arc`.
pub fn shared<S: DiscreteSystem + 'static>(system: S) -> SharedSystem {
    Arc::new(system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::iterate;
    use crate::space::ModelSpace;
    use crate::system::{PerturbedToralMap, ToralAutomorphism};
    use nalgebra::dvector;

    fn cat() -> SharedSystem {
        shared(ToralAutomorphism::cat_map())
    }

    fn sampler() -> SpaceSampler {
        SpaceSampler::new(ModelSpace::torus(2), 11).with_anchor(dvector![0.0, 0.0], 0.1, &[0.05])
    }

    #[test]
    fn exact_method_has_zero_defect() {
        let psi = PseudomethodS::exact(cat());
        assert_eq!(measure_defect_s(&psi, &sampler(), 500), 0.0);
    }

    #[test]
    fn constant_drift_defect_is_offset_norm() {
        let delta = 1e-3;
        let psi = PseudomethodS::constant_drift(cat(), dvector![delta, 0.0]).unwrap();
        let d = measure_defect_s(&psi, &sampler(), 500);
        assert!((d - delta).abs() < 1e-15, "{d}");
        assert_eq!(psi.defect(), delta);
    }

    #[test]
    fn defect_is_monotone_in_count() {
        let sys = cat();
        let f = sys.clone();
        let maps: Arc<dyn MapFamily> = Arc::new(move |k: i64, x: &Point| {
            let s = 1e-3 * (x[0] * 7.0 + k as f64).sin();
            ModelSpace::torus(2).exp(&f.eval(x), &dvector![s, 0.0])
        });
        let psi = PseudomethodS::new(sys, maps, Some(3), 1e-3).unwrap();
        let s = sampler();
        let mut prev = 0.0;
        for count in [1, 10, 50, 200, 800] {
            let d = measure_defect_s(&psi, &s, count);
            assert!(d >= prev);
            assert!(d <= 1e-3);
            prev = d;
        }
    }

    #[test]
    fn theta_t_iterates_and_drift() {
        let id = shared(ToralAutomorphism::identity(2));
        let s = SpaceSampler::new(ModelSpace::torus(2), 5);
        assert_eq!(measure_defect_t(&PseudomethodT::iterates(id.clone()), &s, 100), 0.0);

        // isometric f: accumulated drift kδ has one-step defect δ
        let delta = 1e-3;
        let space = ModelSpace::torus(2);
        let drift: Arc<dyn MapFamily> =
            Arc::new(move |k: i64, x: &Point| space.exp(x, &dvector![(k as f64 * delta).rem_euclid(1.0), 0.0]));
        let psi = PseudomethodT::new(id.clone(), drift, delta).unwrap();
        let d = measure_defect_t(&psi, &s, 100);
        assert!((d - delta).abs() < 1e-12, "{d}");

        // one index replaced by f^k(x) + (δ, 0)
        let single: Arc<dyn MapFamily> =
            Arc::new(move |k: i64, x: &Point| if k == 5 { space.exp(x, &dvector![delta, 0.0]) } else { x.clone() });
        let psi = PseudomethodT::new(id, single, delta).unwrap();
        let d = measure_defect_t(&psi, &s, 100);
        assert!((d - delta).abs() < 1e-12, "{d}");
    }

    #[test]
    fn theta_t_drift_on_cat_map() {
        // Ψ_k(x) = f^k(x) + c_k with c_{k+1} = A c_k + (δ, 0) has defect δ
        let sys = cat();
        let delta = 1e-4;
        let f = sys.clone();
        let a = ToralAutomorphism::cat_map().matrix().clone();
        let maps: Arc<dyn MapFamily> = Arc::new(move |k: i64, x: &Point| {
            let mut c = dvector![0.0, 0.0];
            for _ in 0..k {
                c = &a * c + dvector![delta, 0.0];
            }
            ModelSpace::torus(2).exp(&iterate(f.as_ref(), x, k), &c)
        });
        let psi = PseudomethodT::new(sys, maps, delta).unwrap().with_sample_window(5);
        let d = measure_defect_t(&psi, &SpaceSampler::new(ModelSpace::torus(2), 1), 50);
        assert!((d - delta).abs() < 1e-12, "{d}");
    }

    #[test]
    fn constant_maps_generate_given_sequence() {
        let sys = cat();
        let f = sys.clone();
        let psi = PseudomethodT::constant_maps(sys, move |k| iterate(f.as_ref(), &dvector![0.2, 0.4], k), 0.0).unwrap();
        let traj = generate_t(&psi, &dvector![0.9, 0.9], -2..=3).unwrap();
        assert_eq!(traj.class(), PseudomethodClass::T);
        assert!(ModelSpace::torus(2).dist(traj.get(1).unwrap(), &dvector![0.8, 0.6]) < 1e-15);
    }

    #[test]
    fn exact_method_reproduces_orbit() {
        let sys = cat();
        let p = dvector![0.5, 0.0];
        let orbit = PeriodicOrbit::from_system(sys.as_ref(), &p, 3).unwrap();
        let traj = generate_s(&PseudomethodS::exact(sys.clone()), &p, -4..=7).unwrap();
        assert!(shadowing_distance(&traj, &orbit) < 1e-12);
        assert_eq!(traj.k_min(), -4);
        assert_eq!(traj.k_max(), 7);
    }

    #[test]
    fn drift_three_step_oracle() {
        // x_{k+1} = A x_k + δ from the fixed point: x_1 = δ, x_2 = Aδ + δ, x_3 = A²δ + Aδ + δ
        let delta = dvector![1e-4, 0.0];
        let psi = PseudomethodS::constant_drift(cat(), delta.clone()).unwrap();
        let traj = generate_s(&psi, &dvector![0.0, 0.0], 0..=3).unwrap();
        let a = ToralAutomorphism::cat_map().matrix().clone();
        let mut x = dvector![0.0, 0.0];
        for k in 1..=3 {
            x = &a * x + &delta;
            assert!(ModelSpace::torus(2).dist(traj.get(k).unwrap(), &x) < 1e-15);
        }
        assert_eq!(traj.get(1).unwrap(), &dvector![1e-4, 0.0]);
    }

    #[test]
    fn backward_generation_satisfies_recursion() {
        let sys = shared(PerturbedToralMap::new(ToralAutomorphism::cat_map(), 0.3).unwrap());
        let psi = PseudomethodS::constant_drift(sys, dvector![1e-3, -2e-3]).unwrap();
        let traj = generate_s(&psi, &dvector![0.3, 0.6], -6..=6).unwrap();
        assert!(theta_s_residual(&psi, &traj) <= 1e-12);
    }

    #[test]
    fn single_point_offset_distance() {
        let orbit = PeriodicOrbit::from_system(cat().as_ref(), &dvector![0.0, 0.0], 1).unwrap();
        let traj = Pseudotrajectory::new(
            0,
            vec![dvector![1e-3, 0.0], dvector![0.0, 0.0], dvector![0.0, 0.0]],
            PseudomethodClass::S,
        );
        assert!((shadowing_distance(&traj, &orbit) - 1e-3).abs() < 1e-18);
        let csv = trajectory_csv(&traj, &orbit);
        assert!(csv.starts_with("k,x_1,x_2,dist_to_orbit\n0,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn window_must_contain_zero() {
        let psi = PseudomethodS::exact(cat());
        assert!(generate_s(&psi, &dvector![0.0, 0.0], 1..=3).is_err());
    }
}
