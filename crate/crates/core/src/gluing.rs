//! Gluing local near-linear maps into global maps close to `f`.
//!
//! Around each cycle point `p_j` a local map `ψ` is given in chart
//! coordinates. The glued map is
//!
//! ```text
//! Ψ(x) = exp_{p_{j+1}}((1 - β(|v|)) ψ(v) + β(|v|) F_j(v)),   v = exp⁻¹_{p_j}(x),
//! ```
//!
//! on the ball of radius `ρ_out` around `p_j`, and `f` elsewhere. On the
//! inner ball (`β = 0`) it returns `ψ` and on `β = 1` it returns `f(x)`
//! without any blending arithmetic, so both region identities are exact.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::orbit::{LocalConjugate, PeriodicOrbit};
use crate::pseudomethod::{MapFamily, PseudomethodS};
use crate::record::fmt_f64;
use crate::sampler::{derive_seed, BallSampler, SpaceSampler};
use crate::space::Point;
use crate::system::SharedSystem;

/// Absolute slack allowed on sampled closeness bounds.
pub const BOUND_SLACK: f64 = 1e-12;

const DEFAULT_REMAINDER_SAMPLES: usize = 2000;
const DEFAULT_COND1_SAMPLES: usize = 2000;

/// Cubic smoothstep `3s² - 2s³` rescaled to `[inner, outer]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpFunction {
    inner: f64,
    outer: f64,
}

impl BumpFunction {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner && outer.is_finite()) {
            return Err(Error::param("bump", format!("need 0 <= inner < outer, got {inner}, {outer}")));
        }
        Ok(Self { inner, outer })
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn outer(&self) -> f64 {
        self.outer
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.inner {
            0.0
        } else if t >= self.outer {
            1.0
        } else {
            let s = (t - self.inner) / (self.outer - self.inner);
            s * s * (3.0 - 2.0 * s)
        }
    }

    /// `sup |β'| = 3 / (2 (outer - inner))`.
    pub fn max_slope(&self) -> f64 {
        1.5 / (self.outer - self.inner)
    }
}

/// A local map in chart coordinates, `v ↦ ψ(v)` from the chart at `p_j` to
/// the chart at `p_{j+1}`.
#[derive(Clone)]
pub enum LocalMap {
    /// `ψ = F_j`, i.e. the system itself.
    Exact,
    /// `ψ(v) = M v + c`.
    Affine { matrix: DMatrix<f64>, offset: DVector<f64> },
    Custom(Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>),
}

impl fmt::Debug for LocalMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalMap::Exact => write!(f, "Exact"),
            LocalMap::Affine { matrix, offset } => f
                .debug_struct("Affine")
                .field("matrix", matrix)
                .field("offset", offset)
                .finish(),
            LocalMap::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl LocalMap {
    /// `ψ(v) = A v + c` with `A` the linearization at the ball.
    pub fn shifted_linearization(orbit: &PeriodicOrbit, j: i64, offset: DVector<f64>) -> Self {
        LocalMap::Affine {
            matrix: orbit.jacobian(j).clone(),
            offset,
        }
    }

    fn eval(&self, conj: &LocalConjugate<'_>, v: &DVector<f64>) -> DVector<f64> {
        match self {
            LocalMap::Exact => conj.eval_unchecked(v),
            LocalMap::Affine { matrix, offset } => matrix * v + offset,
            LocalMap::Custom(g) => g(v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GluingMode {
    /// Linear systems: `ψ` kept on `B(ε/2)`, `f` outside `B(ε)`.
    Linear { epsilon: f64 },
    /// Nonlinear systems: `ψ` kept on `B(Cd/2)`, `f` outside `B(Cd)`.
    Nonlinear { c: f64 },
}

impl GluingMode {
    fn name(&self) -> &'static str {
        match self {
            GluingMode::Linear { .. } => "linear",
            GluingMode::Nonlinear { .. } => "nonlinear",
        }
    }
}

/// Everything needed to glue: the orbit, one local map per cycle ball, and
/// the parameters `b`, `d` and `ε` or `C`.
#[derive(Clone, Debug)]
pub struct GluingSpec {
    pub system: SharedSystem,
    pub orbit: PeriodicOrbit,
    pub local_maps: Vec<LocalMap>,
    pub b: f64,
    pub d: f64,
    pub mode: GluingMode,
    pub seed: u64,
}

/// Bound `|ψ(v) - A_j v| ≤ cond1_bound` required on `B(b)`.
fn cond1_bound(mode: GluingMode, d: f64) -> f64 {
    match mode {
        GluingMode::Linear { .. } => d,
        GluingMode::Nonlinear { .. } => d / 2.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cond1Outcome {
    Pass { max_deviation: f64, bound: f64 },
    Fail { ball: usize, point: Point, excess: f64 },
}

impl Cond1Outcome {
    pub fn passed(&self) -> bool {
        matches!(self, Cond1Outcome::Pass { .. })
    }
}

fn cond1_on(
    system: &SharedSystem,
    orbit: &PeriodicOrbit,
    locals: &[LocalMap],
    b: f64,
    bound: f64,
    seed: u64,
    count: usize,
) -> Cond1Outcome {
    let space = orbit.space();
    let mut max_dev = 0.0f64;
    for (j, local) in locals.iter().enumerate() {
        let conj = LocalConjugate::new(system.as_ref(), orbit, j as i64);
        let a = orbit.jacobian(j as i64);
        let sampler = BallSampler::new(orbit.dim(), b, derive_seed(seed, j as u64)).with_rings(&[b, b / 2.0]);
        for i in 0..count as u64 {
            let v = sampler.point(i);
            let dev = (local.eval(&conj, &v) - a * &v).norm();
            if dev > bound + BOUND_SLACK {
                return Cond1Outcome::Fail {
                    ball: j,
                    point: space.exp(orbit.point(j as i64), &v),
                    excess: dev - bound,
                };
            }
            max_dev = max_dev.max(dev);
        }
    }
    Cond1Outcome::Pass {
        max_deviation: max_dev,
        bound,
    }
}

/// Samples `|ψ(v) - A_j(v)| ≤ d` (linear mode) or `≤ d/2` (nonlinear mode) on each ball `B(b)`.
pub fn check_cond1(spec: &GluingSpec, count: usize) -> Cond1Outcome {
    cond1_on(
        &spec.system,
        &spec.orbit,
        &spec.local_maps,
        spec.b,
        cond1_bound(spec.mode, spec.d),
        spec.seed,
        count.max(1),
    )
}

/// Sampled `sup |φ_j(v)|` over `|v| ≤ radius` and every cycle ball.
pub fn measure_remainder(system: &SharedSystem, orbit: &PeriodicOrbit, radius: f64, seed: u64, count: usize) -> f64 {
    let mut sup = 0.0f64;
    for j in 0..orbit.fundamental_period() {
        let conj = LocalConjugate::new(system.as_ref(), orbit, j as i64);
        let a = orbit.jacobian(j as i64);
        let sampler = BallSampler::new(orbit.dim(), radius, derive_seed(seed, 1000 + j as u64));
        for i in 0..count as u64 {
            let v = sampler.point(i);
            sup = sup.max((conj.eval_unchecked(&v) - a * &v).norm());
        }
    }
    sup
}

fn check_radius(orbit: &PeriodicOrbit, b: f64) -> Result<()> {
    if !(b > 0.0 && b <= orbit.chart_radius()) {
        return Err(Error::GluingPrecondition(format!(
            "b = {b:e} must be positive and at most the chart radius {:e}",
            orbit.chart_radius()
        )));
    }
    Ok(())
}

/// Supremum of admissible gluing defects: `d` can be glued iff `d` is
/// strictly below the returned value. Depends only on the system, orbit,
/// `b` and `ε` / `C`; never on the local maps.
pub fn admissible_defect(system: &SharedSystem, orbit: &PeriodicOrbit, b: f64, mode: GluingMode, seed: u64) -> Result<f64> {
    check_radius(orbit, b)?;
    match mode {
        GluingMode::Linear { epsilon } => {
            if !(epsilon > 0.0 && epsilon < b / 2.0) {
                return Err(Error::GluingPrecondition(format!("need 0 < ε < b/2, got ε = {epsilon:e}, b = {b:e}")));
            }
            Ok(epsilon / 2.0)
        }
        GluingMode::Nonlinear { c } => {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::GluingPrecondition(format!("C must be positive, got {c}")));
            }
            let ok = |d: f64| measure_remainder(system, orbit, c * d, seed, DEFAULT_REMAINDER_SAMPLES) <= d / 2.0;
            let top = b / (2.0 * c);
            if ok(top) {
                return Ok(top);
            }
            let mut lo = top;
            let mut halvings = 0;
            while !ok(lo) {
                lo /= 2.0;
                halvings += 1;
                if halvings > 200 {
                    return Err(Error::GluingPrecondition("no admissible defect found".into()));
                }
            }
            let mut hi = (2.0 * lo).min(top);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(lo)
        }
    }
}

/// Validated, ψ-independent gluing data: radii, bump function and system.
#[derive(Debug)]
pub struct Gluer {
    system: SharedSystem,
    orbit: PeriodicOrbit,
    b: f64,
    d: f64,
    mode: GluingMode,
    bump: BumpFunction,
    seed: u64,
}

impl Gluer {
    /// Checks every precondition that does not involve the local maps.
    pub fn new(system: SharedSystem, orbit: PeriodicOrbit, b: f64, d: f64, mode: GluingMode, seed: u64) -> Result<Arc<Self>> {
        if system.space() != orbit.space() {
            return Err(Error::GluingPrecondition("orbit and system live on different spaces".into()));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::GluingPrecondition(format!("d must be positive, got {d}")));
        }
        check_radius(&orbit, b)?;
        let bump = match mode {
            GluingMode::Linear { epsilon } => {
                if !system.is_linear() {
                    return Err(Error::GluingPrecondition("linear gluing needs a system that is linear on the balls".into()));
                }
                if !(epsilon > 0.0 && epsilon < b / 2.0) {
                    return Err(Error::GluingPrecondition(format!("need 0 < ε < b/2, got ε = {epsilon:e}, b = {b:e}")));
                }
                if d >= epsilon / 2.0 {
                    return Err(Error::GluingPrecondition(format!("need d < ε/2, got d = {d:e}, ε = {epsilon:e}")));
                }
                BumpFunction::new(epsilon / 2.0, epsilon)?
            }
            GluingMode::Nonlinear { c } => {
                if !(c > 0.0 && c * d < b / 2.0) {
                    return Err(Error::GluingPrecondition(format!(
                        "need C d < b/2, got C d = {:e}, b = {b:e}",
                        c * d
                    )));
                }
                let radius = c * d;
                let measured = measure_remainder(&system, &orbit, radius, seed, DEFAULT_REMAINDER_SAMPLES);
                if measured > d / 2.0 {
                    return Err(Error::RemainderBound {
                        measured,
                        allowed: d / 2.0,
                        radius,
                    });
                }
                BumpFunction::new(radius / 2.0, radius)?
            }
        };
        Ok(Arc::new(Self {
            system,
            orbit,
            b,
            d,
            mode,
            bump,
            seed,
        }))
    }

    pub fn from_spec(spec: &GluingSpec) -> Result<Arc<Self>> {
        Self::new(spec.system.clone(), spec.orbit.clone(), spec.b, spec.d, spec.mode, spec.seed)
    }

    pub fn system(&self) -> &SharedSystem {
        &self.system
    }

    pub fn orbit(&self) -> &PeriodicOrbit {
        &self.orbit
    }

    pub fn bump(&self) -> BumpFunction {
        self.bump
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn mode(&self) -> GluingMode {
        self.mode
    }

    /// The bound on `|ψ(v) - A_j v|` that local maps must satisfy.
    pub fn cond1_bound(&self) -> f64 {
        cond1_bound(self.mode, self.d)
    }

    /// Checks `cond1` on the given local maps and glues them.
    pub fn glue(self: &Arc<Self>, local_maps: Vec<LocalMap>, count: usize) -> Result<GluedMap> {
        let m0 = self.orbit.fundamental_period();
        if local_maps.len() != m0 {
            return Err(Error::GluingPrecondition(format!(
                "need {m0} local maps (one per cycle ball), got {}",
                local_maps.len()
            )));
        }
        match cond1_on(&self.system, &self.orbit, &local_maps, self.b, self.cond1_bound(), self.seed, count.max(1)) {
            Cond1Outcome::Pass { .. } => Ok(self.glue_unchecked(local_maps)),
            Cond1Outcome::Fail { ball, excess, .. } => Err(Error::Cond1 { ball, excess }),
        }
    }

    /// Glues without sampling `cond1`; for families whose local maps are
    /// certified analytically.
    pub fn glue_unchecked(self: &Arc<Self>, local_maps: Vec<LocalMap>) -> GluedMap {
        GluedMap {
            gluer: Arc::clone(self),
            locals: local_maps.into(),
        }
    }
}

pub fn glue_linear(spec: &GluingSpec) -> Result<GluedMap> {
    if !matches!(spec.mode, GluingMode::Linear { .. }) {
        return Err(Error::GluingPrecondition("glue_linear needs a linear-mode spec".into()));
    }
    Gluer::from_spec(spec)?.glue(spec.local_maps.clone(), DEFAULT_COND1_SAMPLES)
}

pub fn glue_nonlinear(spec: &GluingSpec) -> Result<GluedMap> {
    if !matches!(spec.mode, GluingMode::Nonlinear { .. }) {
        return Err(Error::GluingPrecondition("glue_nonlinear needs a nonlinear-mode spec".into()));
    }
    Gluer::from_spec(spec)?.glue(spec.local_maps.clone(), DEFAULT_COND1_SAMPLES)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// `|v| ≤ ρ_in` around cycle ball `j`: `Ψ = ψ`.
    Inner(usize),
    Transition(usize),
    /// Outside every `ρ_out` ball: `Ψ = f`.
    Outer,
}

#[derive(Clone)]
pub struct GluedMap {
    gluer: Arc<Gluer>,
    locals: Arc<[LocalMap]>,
}

impl fmt::Debug for GluedMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GluedMap")
            .field("bump", &self.gluer.bump)
            .field("locals", &self.locals)
            .finish()
    }
}

impl GluedMap {
    pub fn gluer(&self) -> &Arc<Gluer> {
        &self.gluer
    }

    pub fn local_maps(&self) -> &[LocalMap] {
        &self.locals
    }

    /// Ball `j` and chart vector `v` with `|v| < ρ_out`, if any.
    fn locate(&self, x: &Point) -> Option<(usize, DVector<f64>)> {
        let orbit = &self.gluer.orbit;
        let space = orbit.space();
        let outer = self.gluer.bump.outer();
        for j in 0..orbit.fundamental_period() {
            let v = space.log(orbit.point(j as i64), x);
            if v.norm() < outer {
                return Some((j, v));
            }
        }
        None
    }

    pub fn region(&self, x: &Point) -> Region {
        match self.locate(x) {
            None => Region::Outer,
            Some((j, v)) => match self.gluer.bump.value(v.norm()) {
                b if b == 0.0 => Region::Inner(j),
                b if b == 1.0 => Region::Outer,
                _ => Region::Transition(j),
            },
        }
    }

    /// `ψ(x)` for `x` in the chart ball `B(b)` around cycle point `j`.
    pub fn psi(&self, j: usize, x: &Point) -> Point {
        let orbit = &self.gluer.orbit;
        let space = orbit.space();
        let v = space.log(orbit.point(j as i64), x);
        let conj = LocalConjugate::new(self.gluer.system.as_ref(), orbit, j as i64);
        space.exp(orbit.point(j as i64 + 1), &self.locals[j].eval(&conj, &v))
    }

    /// Chart form `(1 - β) ψ(v) + β F_j(v)` on ball `j`.
    pub fn chart_eval(&self, j: usize, v: &DVector<f64>) -> DVector<f64> {
        let orbit = &self.gluer.orbit;
        let conj = LocalConjugate::new(self.gluer.system.as_ref(), orbit, j as i64);
        let beta = self.gluer.bump.value(v.norm());
        if beta == 0.0 {
            self.locals[j].eval(&conj, v)
        } else if beta == 1.0 {
            conj.eval_unchecked(v)
        } else {
            self.locals[j].eval(&conj, v) * (1.0 - beta) + conj.eval_unchecked(v) * beta
        }
    }

    pub fn eval(&self, x: &Point) -> Point {
        let gl = &self.gluer;
        match self.locate(x) {
            None => gl.system.eval(x),
            Some((j, v)) => {
                let beta = gl.bump.value(v.norm());
                if beta == 1.0 {
                    return gl.system.eval(x);
                }
                let orbit = &gl.orbit;
                let space = orbit.space();
                let conj = LocalConjugate::new(gl.system.as_ref(), orbit, j as i64);
                let psi = self.locals[j].eval(&conj, &v);
                let w = if beta == 0.0 {
                    psi
                } else {
                    psi * (1.0 - beta) + conj.eval_unchecked(&v) * beta
                };
                space.exp(orbit.point(j as i64 + 1), &w)
            }
        }
    }

    /// Computed Lipschitz bound of `Ψ` on the transition shell of ball `j`:
    /// `max(Lip ψ, Lip F_j) + sup|β'| · sup|ψ - F_j|`, each factor estimated
    /// from difference quotients and padded by 50%.
    pub fn continuity_bound(&self, j: usize, samples: usize) -> f64 {
        let gl = &self.gluer;
        let orbit = &gl.orbit;
        let conj = LocalConjugate::new(gl.system.as_ref(), orbit, j as i64);
        let n = orbit.dim();
        let sampler = BallSampler::new(n, gl.bump.outer(), derive_seed(gl.seed, 77 + j as u64))
            .with_rings(&[gl.bump.inner(), gl.bump.outer()]);
        let h = 1e-7 * gl.bump.outer().max(1e-300);
        let (mut lip_psi, mut lip_f, mut gap) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..samples as u64 {
            let v = sampler.point(i);
            let psi = self.locals[j].eval(&conj, &v);
            let fv = conj.eval_unchecked(&v);
            gap = gap.max((&psi - &fv).norm());
            for axis in 0..n {
                let mut w = v.clone();
                w[axis] += h;
                lip_psi = lip_psi.max((self.locals[j].eval(&conj, &w) - &psi).norm() / h);
                lip_f = lip_f.max((conj.eval_unchecked(&w) - &fv).norm() / h);
            }
        }
        1.5 * (lip_psi.max(lip_f) * (n as f64).sqrt() + gl.bump.max_slope() * gap)
    }
}

impl MapFamily for GluedMap {
    fn eval(&self, _k: i64, x: &Point) -> Point {
        GluedMap::eval(self, x)
    }
}

/// Glued maps indexed by `k`: a periodic table or a generator of local maps.
#[derive(Clone)]
pub enum GluedFamily {
    Periodic(Vec<GluedMap>),
    Generated {
        gluer: Arc<Gluer>,
        locals: Arc<dyn Fn(i64) -> Vec<LocalMap> + Send + Sync>,
    },
}

impl fmt::Debug for GluedFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GluedFamily::Periodic(maps) => write!(f, "GluedFamily::Periodic({} maps)", maps.len()),
            GluedFamily::Generated { .. } => write!(f, "GluedFamily::Generated"),
        }
    }
}

impl GluedFamily {
    pub fn map_at(&self, k: i64) -> GluedMap {
        match self {
            GluedFamily::Periodic(maps) => maps[k.rem_euclid(maps.len() as i64) as usize].clone(),
            GluedFamily::Generated { gluer, locals } => gluer.glue_unchecked(locals(k)),
        }
    }

    pub fn k_period(&self) -> Option<usize> {
        match self {
            GluedFamily::Periodic(maps) => Some(maps.len()),
            GluedFamily::Generated { .. } => None,
        }
    }

    /// Wraps the family as a Θ_s pseudomethod with the given claimed defect.
    pub fn into_pseudomethod(self, system: SharedSystem, defect: f64) -> Result<PseudomethodS> {
        let period = self.k_period();
        PseudomethodS::new(system, Arc::new(self), period, defect)
    }
}

impl MapFamily for GluedFamily {
    fn eval(&self, k: i64, x: &Point) -> Point {
        match self {
            GluedFamily::Periodic(maps) => maps[k.rem_euclid(maps.len() as i64) as usize].eval(x),
            GluedFamily::Generated { gluer, locals } => gluer.glue_unchecked(locals(k)).eval(x),
        }
    }
}

/// Result of sampling a glued map.
#[derive(Clone, Debug, PartialEq)]
pub struct GluingReport {
    pub mode: String,
    pub b: f64,
    pub d: f64,
    pub rho_in: f64,
    pub rho_out: f64,
    pub samples: usize,
    pub sup_defect: f64,
    pub defect_bound: f64,
    pub inner_samples: usize,
    pub inner_mismatches: usize,
    pub outer_samples: usize,
    pub outer_mismatches: usize,
    pub continuity_pairs: usize,
    pub continuity_worst_ratio: f64,
}

impl GluingReport {
    pub fn passed(&self) -> bool {
        self.sup_defect <= self.defect_bound + BOUND_SLACK
            && self.inner_mismatches == 0
            && self.outer_mismatches == 0
            && self.continuity_worst_ratio <= 1.0
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[gluing]");
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "b = {}", fmt_f64(self.b));
        let _ = writeln!(s, "d = {}", fmt_f64(self.d));
        let _ = writeln!(s, "rho_in = {}", fmt_f64(self.rho_in));
        let _ = writeln!(s, "rho_out = {}", fmt_f64(self.rho_out));
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "sup_defect = {}", fmt_f64(self.sup_defect));
        let _ = writeln!(s, "defect_bound = {}", fmt_f64(self.defect_bound));
        let _ = writeln!(s, "inner_identity = {}/{} mismatches", self.inner_mismatches, self.inner_samples);
        let _ = writeln!(s, "outer_identity = {}/{} mismatches", self.outer_mismatches, self.outer_samples);
        let _ = writeln!(
            s,
            "continuity = {} pairs, worst ratio to bound {}",
            self.continuity_pairs,
            fmt_f64(self.continuity_worst_ratio)
        );
        let _ = writeln!(s, "status = {}", if self.passed() { "pass" } else { "fail" });
        s
    }
}

/// Samples a glued map: the global defect `|Ψ - f|`, both region identities
/// and continuity across the outer sphere.
pub fn verify_glued(map: &GluedMap, seed: u64, count: usize) -> GluingReport {
    let gl = &map.gluer;
    let orbit = &gl.orbit;
    let space = orbit.space();
    let bump = gl.bump;
    let (ri, ro) = (bump.inner(), bump.outer());
    let rings = [0.99 * ri, ri, 0.5 * (ri + ro), ro, 1.01 * ro];
    let sampler = SpaceSampler::new(space, seed).around_orbit(orbit, gl.b, &rings);
    let mut report = GluingReport {
        mode: gl.mode.name().to_string(),
        b: gl.b,
        d: gl.d,
        rho_in: ri,
        rho_out: ro,
        samples: count,
        sup_defect: 0.0,
        defect_bound: gl.d,
        inner_samples: 0,
        inner_mismatches: 0,
        outer_samples: 0,
        outer_mismatches: 0,
        continuity_pairs: 0,
        continuity_worst_ratio: 0.0,
    };
    for i in 0..count as u64 {
        let x = sampler.point(i);
        let fx = gl.system.eval(&x);
        let psi_x = map.eval(&x);
        report.sup_defect = report.sup_defect.max(space.dist(&psi_x, &fx));
        match map.region(&x) {
            Region::Inner(j) => {
                report.inner_samples += 1;
                if psi_x != map.psi(j, &x) {
                    report.inner_mismatches += 1;
                }
            }
            Region::Outer => {
                report.outer_samples += 1;
                if psi_x != fx {
                    report.outer_mismatches += 1;
                }
            }
            Region::Transition(_) => {}
        }
    }
    // pairs straddling the outer sphere
    let h = 1e-6;
    let pairs_per_ball = (count / 20).max(10);
    for j in 0..orbit.fundamental_period() {
        let k_bound = map.continuity_bound(j, 200);
        let dirs = BallSampler::new(orbit.dim(), 1.0, derive_seed(seed, 500 + j as u64)).with_rings(&[1.0]);
        let mut taken = 0;
        let mut i = 0u64;
        while taken < pairs_per_ball {
            let u = dirs.point(i);
            i += 1;
            let norm = u.norm();
            if norm < 0.5 {
                continue;
            }
            let u = u / norm;
            let base = orbit.point(j as i64);
            let x = space.exp(base, &(&u * (ro - h / 2.0)));
            let y = space.exp(base, &(&u * (ro + h / 2.0)));
            let gap = space.dist(&map.eval(&x), &map.eval(&y));
            report.continuity_worst_ratio = report.continuity_worst_ratio.max(gap / (k_bound * h));
            taken += 1;
        }
        report.continuity_pairs += taken;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::find_rational_periodic_orbits;
    use crate::pseudomethod::shared;
    use crate::space::ModelSpace;
    use crate::system::{PerturbedToralMap, ToralAutomorphism};
    use nalgebra::dvector;

    fn cat_fixed() -> (SharedSystem, PeriodicOrbit) {
        let cat = ToralAutomorphism::cat_map();
        let orbit = find_rational_periodic_orbits(&cat, 1).unwrap().remove(0);
        (shared(cat), orbit)
    }

    fn spec(locals: Vec<LocalMap>, d: f64) -> GluingSpec {
        let (system, orbit) = cat_fixed();
        let b = orbit.chart_radius();
        GluingSpec {
            system,
            orbit,
            local_maps: locals,
            b,
            d,
            mode: GluingMode::Linear { epsilon: b / 4.0 },
            seed: 9,
        }
    }

    #[test]
    fn bump_endpoints_and_monotone() {
        let beta = BumpFunction::new(0.5, 1.0).unwrap();
        assert_eq!(beta.value(0.0), 0.0);
        assert_eq!(beta.value(0.5), 0.0);
        assert_eq!(beta.value(1.0), 1.0);
        assert_eq!(beta.value(3.0), 1.0);
        assert_eq!(beta.value(0.75), 0.5);
        let mut prev = 0.0;
        for i in 0..=1000 {
            let v = beta.value(1.2 * i as f64 / 1000.0);
            assert!(v >= prev);
            prev = v;
        }
        assert!(BumpFunction::new(1.0, 1.0).is_err());
    }

    #[test]
    fn cond1_outcomes() {
        let d = 1e-3;
        let (_, orbit) = cat_fixed();
        let exact = spec(vec![LocalMap::Exact], d);
        assert!(check_cond1(&exact, 500).passed());
        let half = spec(vec![LocalMap::shifted_linearization(&orbit, 0, dvector![d / 2.0, 0.0])], d);
        assert!(check_cond1(&half, 500).passed());
        let twice = spec(vec![LocalMap::shifted_linearization(&orbit, 0, dvector![0.0, 2.0 * d])], d);
        match check_cond1(&twice, 500) {
            Cond1Outcome::Fail { ball, excess, .. } => {
                assert_eq!(ball, 0);
                assert!((excess - d).abs() < 1e-15);
            }
            other => panic!("expected failure, got {other:?}"),
        }
        assert!(matches!(glue_linear(&twice), Err(Error::Cond1 { .. })));
    }

    #[test]
    fn exact_local_map_glues_to_f() {
        let s = spec(vec![LocalMap::Exact], 1e-3);
        let map = glue_linear(&s).unwrap();
        let sampler = SpaceSampler::new(ModelSpace::torus(2), 3).around_orbit(&s.orbit, s.b, &[]);
        for x in sampler.points(500) {
            assert!(ModelSpace::torus(2).dist(&map.eval(&x), &s.system.eval(&x)) < 1e-15);
        }
    }

    #[test]
    fn region_identities_for_offset_map() {
        let d = 1e-3;
        let (_, orbit) = cat_fixed();
        let s = spec(vec![LocalMap::shifted_linearization(&orbit, 0, dvector![0.0, d / 2.0])], d);
        let map = glue_linear(&s).unwrap();
        let eps = s.b / 4.0;
        let space = ModelSpace::torus(2);
        let p = s.orbit.base().clone();
        let inner = space.exp(&p, &dvector![0.6 * eps / 2.0, 0.8 * eps / 2.0]);
        assert_eq!(map.eval(&inner), map.psi(0, &inner));
        let outer = space.exp(&p, &dvector![0.0, eps]);
        assert_eq!(map.eval(&outer), s.system.eval(&outer));
        let report = verify_glued(&map, 1, 4000);
        assert!(report.passed(), "{}", report.render());
        assert!(report.inner_samples > 0 && report.outer_samples > 0);
        assert!(report.render().contains("status = pass"));
    }

    #[test]
    fn linear_preconditions() {
        let (_, orbit) = cat_fixed();
        let mut s = spec(vec![LocalMap::shifted_linearization(&orbit, 0, dvector![0.0, 0.0])], 1e-3);
        s.mode = GluingMode::Linear { epsilon: s.b };
        assert!(matches!(glue_linear(&s), Err(Error::GluingPrecondition(_))));
        s.mode = GluingMode::Linear { epsilon: s.b / 4.0 };
        s.d = s.b / 8.0;
        assert!(matches!(glue_linear(&s), Err(Error::GluingPrecondition(_))));
        assert!(glue_nonlinear(&s).is_err());
    }

    #[test]
    fn nonlinear_gluing_of_linear_system() {
        let (system, orbit) = cat_fixed();
        let b = orbit.chart_radius();
        let c = 10.0;
        let max_d = admissible_defect(&system, &orbit, b, GluingMode::Nonlinear { c }, 5).unwrap();
        assert_eq!(max_d, b / (2.0 * c));
        let d = 0.5 * max_d;
        let s = GluingSpec {
            system,
            local_maps: vec![LocalMap::shifted_linearization(&orbit, 0, dvector![d / 4.0, 0.0])],
            orbit,
            b,
            d,
            mode: GluingMode::Nonlinear { c },
            seed: 5,
        };
        let map = glue_nonlinear(&s).unwrap();
        let report = verify_glued(&map, 2, 4000);
        assert!(report.passed(), "{}", report.render());
        assert_eq!(report.rho_in, c * d / 2.0);
    }

    #[test]
    fn nonlinear_gluing_of_perturbed_cat_map() {
        let system = shared(PerturbedToralMap::new(ToralAutomorphism::cat_map(), 0.9).unwrap());
        let orbit = PeriodicOrbit::from_system(system.as_ref(), &dvector![0.0, 0.0], 1).unwrap();
        let b = orbit.chart_radius();
        let mode = GluingMode::Nonlinear { c: 400.0 };
        let max_d = admissible_defect(&system, &orbit, b, mode, 4).unwrap();
        assert!(max_d < b / 800.0);
        let d = 0.5 * max_d;
        let measured = measure_remainder(&system, &orbit, 400.0 * d, 4, 2000);
        assert!(measured <= d / 2.0);
        let s = GluingSpec {
            system,
            local_maps: vec![LocalMap::Exact],
            orbit,
            b,
            d,
            mode,
            seed: 4,
        };
        // the exact map has |φ| well above d/2 on B(b), so cond1 rejects it
        assert!(glue_nonlinear(&s).is_err());
        let lin = LocalMap::shifted_linearization(&s.orbit, 0, dvector![0.0, d / 3.0]);
        let s = GluingSpec { local_maps: vec![lin], ..s };
        let map = glue_nonlinear(&s).unwrap();
        let report = verify_glued(&map, 3, 4000);
        assert!(report.passed(), "{}", report.render());
        // too large a defect violates the remainder bound
        let err = Gluer::new(s.system.clone(), s.orbit.clone(), b, 0.99 * b / 800.0, mode, 4).unwrap_err();
        assert!(matches!(err, Error::RemainderBound { .. }));
    }

    #[test]
    fn admissible_defect_ignores_local_maps() {
        let (system, orbit) = cat_fixed();
        let b = orbit.chart_radius();
        let mode = GluingMode::Linear { epsilon: b / 4.0 };
        let d_max = admissible_defect(&system, &orbit, b, mode, 1).unwrap();
        assert_eq!(d_max, b / 8.0);
        let d = 0.9 * d_max;
        for offset in [dvector![0.0, 0.0], dvector![0.5 * d, -0.5 * d]] {
            let s = GluingSpec {
                system: system.clone(),
                orbit: orbit.clone(),
                local_maps: vec![LocalMap::shifted_linearization(&orbit, 0, offset)],
                b,
                d,
                mode,
                seed: 1,
            };
            assert!(glue_linear(&s).is_ok());
        }
    }

    #[test]
    fn period_three_orbit_glues_per_ball() {
        let cat = ToralAutomorphism::cat_map();
        let orbit = find_rational_periodic_orbits(&cat, 2).unwrap().remove(1);
        let system = shared(cat);
        let b = orbit.chart_radius();
        let d = b / 40.0;
        let locals = (0..3)
            .map(|j| LocalMap::shifted_linearization(&orbit, j, dvector![0.7 * d, 0.0]))
            .collect();
        let s = GluingSpec {
            system,
            orbit,
            local_maps: locals,
            b,
            d,
            mode: GluingMode::Linear { epsilon: b / 4.0 },
            seed: 8,
        };
        let map = glue_linear(&s).unwrap();
        let report = verify_glued(&map, 4, 4000);
        assert!(report.passed(), "{}", report.render());
        assert!((report.sup_defect - 0.7 * d).abs() < 1e-12);
    }
}
