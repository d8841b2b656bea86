//! Drift adversary at a periodic orbit whose monodromy has an eigenvalue
//! that is a root of unity: scaled rotations on a plane, arbitrary blocks
//! elsewhere.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{AdversaryReport, ReportRow};
use crate::error::{Error, Result};
use crate::gluing::{GluedFamily, Gluer, GluingMode, LocalMap};
use crate::linalg::spectral_norm;
use crate::orbit::PeriodicOrbit;
use crate::pseudomethod::{measure_defect_s, shared, PseudomethodS};
use crate::sampler::{derive_seed, BallSampler, SpaceSampler};
use crate::space::ModelSpace;
use crate::system::{AffineCycleModel, SharedSystem};

const INVARIANT_TOL: f64 = 1e-14;

/// Parameters of the rotation model: `A_j = diag(r_j Rot(χ), B_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationDriftSpec {
    pub m: usize,
    pub nu: usize,
    pub chi: f64,
    /// `r_0, …, r_{m-1}` with product 1.
    pub r: Vec<f64>,
    /// Bottom blocks `B_0, …, B_{m-1}`, all of the same (possibly zero) size.
    pub bottom: Vec<DMatrix<f64>>,
    /// Radius `ā` of the balls the gluing acts on.
    pub a_bar: f64,
}

impl RotationDriftSpec {
    /// Spec with contracting one-dimensional bottom blocks `B_j = 1/2`.
    pub fn new(m: usize, nu: usize, chi: f64, r: Vec<f64>) -> Self {
        Self {
            m,
            nu,
            chi,
            r,
            bottom: vec![DMatrix::from_element(1, 1, 0.5); m],
            a_bar: 0.1,
        }
    }

    pub fn without_bottom(mut self) -> Self {
        self.bottom = vec![DMatrix::zeros(0, 0); self.m];
        self
    }

    pub fn dim(&self) -> usize {
        2 + self.bottom.first().map_or(0, |b| b.nrows())
    }

    /// `R = 2 max r_j`.
    pub fn big_r(&self) -> f64 {
        2.0 * self.r.iter().copied().fold(0.0, f64::max)
    }

    pub fn eps0(&self) -> f64 {
        self.a_bar / 3.0
    }

    pub fn eps(&self) -> f64 {
        self.eps0() / 10.0
    }

    /// Exclusive upper bound on `d` from `mνd < ε/3`.
    pub fn max_drift(&self) -> f64 {
        self.eps() / (3.0 * (self.m * self.nu) as f64)
    }

    /// Per-cycle drift `mνd / (2R^m)`.
    pub fn cycle_drift(&self, d: f64) -> f64 {
        (self.m * self.nu) as f64 * d / (2.0 * self.big_r().powi(self.m as i32))
    }

    pub fn matrix(&self, j: usize) -> DMatrix<f64> {
        let n = self.dim();
        let (s, c) = self.chi.sin_cos();
        let r = self.r[j];
        let mut a = DMatrix::zeros(n, n);
        a[(0, 0)] = r * c;
        a[(0, 1)] = -r * s;
        a[(1, 0)] = r * s;
        a[(1, 1)] = r * c;
        if n > 2 {
            a.view_mut((2, 2), (n - 2, n - 2)).copy_from(&self.bottom[j]);
        }
        a
    }

    /// Drift `c_k` of `ψ_k` in the chart at `p_k`.
    pub fn drift(&self, k: i64, d: f64) -> DVector<f64> {
        let m = self.m as i64;
        let k = k.rem_euclid(m * self.nu as i64);
        let product: f64 = (0..=k).map(|i| self.r[i.rem_euclid(m) as usize]).product();
        let scale = d * product / (2.0 * self.big_r().powi(self.m as i32));
        let angle = (k + 1) as f64 * self.chi;
        let mut v = DVector::zeros(self.dim());
        v[0] = scale * angle.cos();
        v[1] = scale * angle.sin();
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.nu == 0 {
            return Err(Error::param("m, nu", "must be positive"));
        }
        if self.r.len() != self.m || self.bottom.len() != self.m {
            return Err(Error::param("r, bottom", "need one entry per cycle point"));
        }
        if self.r.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::param("r", "factors must be positive"));
        }
        let product: f64 = self.r.iter().product();
        if (product - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::param("r", format!("product must be 1, got {product}")));
        }
        let c = (self.nu as f64 * self.chi).cos();
        if (c - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::param("chi", format!("cos(nu chi) must be 1, got {c}")));
        }
        let nb = self.bottom[0].nrows();
        for b in &self.bottom {
            if b.nrows() != nb || b.ncols() != nb {
                return Err(Error::param("bottom", "blocks must be square and of equal size"));
            }
            if nb > 0 && b.clone().try_inverse().is_none() {
                return Err(Error::Singular);
            }
        }
        if !(self.a_bar > 0.0 && self.a_bar.is_finite()) {
            return Err(Error::param("a_bar", "must be positive"));
        }
        Ok(())
    }

    pub fn validate_drift(&self, d: f64) -> Result<()> {
        if !(d > 0.0 && d < self.max_drift()) {
            return Err(Error::param(
                "d",
                format!("need 0 < m nu d < eps/3, got d = {d:e}, bound {:e}", self.max_drift()),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Lemma2Model {
    pub spec: RotationDriftSpec,
    pub system: SharedSystem,
    pub orbit: PeriodicOrbit,
}

impl Lemma2Model {
    /// `Dh^m(p_0)` restricted to the rotation plane.
    pub fn plane_monodromy(&self) -> DMatrix<f64> {
        self.orbit.monodromy().view((0, 0), (2, 2)).into_owned()
    }

    /// Moduli of the plane eigenvalues and `‖P^ν - I‖` for the plane monodromy `P`.
    pub fn plane_eigen_check(&self) -> (f64, f64) {
        let p = self.plane_monodromy();
        let modulus = p.determinant().abs().sqrt();
        let mut power = DMatrix::identity(2, 2);
        for _ in 0..self.spec.nu {
            power = &p * power;
        }
        (modulus, (power - DMatrix::identity(2, 2)).amax())
    }
}

/// Cycle points `p_j = (j s, 0, …)` spaced so that the balls `B(ā)` and
/// their images stay inside the affine cells.
pub fn build_lemma2_model(spec: &RotationDriftSpec) -> Result<Lemma2Model> {
    spec.validate()?;
    let n = spec.dim();
    let matrices: Vec<_> = (0..spec.m).map(|j| spec.matrix(j)).collect();
    let stretch = matrices.iter().map(spectral_norm).fold(1.0, f64::max);
    let spacing = 4.0 * spec.a_bar * stretch;
    let points: Vec<_> = (0..spec.m)
        .map(|j| {
            let mut p = DVector::zeros(n);
            p[0] = j as f64 * spacing;
            p
        })
        .collect();
    let model = AffineCycleModel::new(points.clone(), matrices.clone())?;
    let orbit = PeriodicOrbit::from_parts(ModelSpace::euclidean(n), points, matrices, spec.m)?;
    Ok(Lemma2Model {
        spec: spec.clone(),
        system: shared(model),
        orbit,
    })
}

#[derive(Clone, Debug)]
pub struct Lemma2Adversary {
    pub model: Lemma2Model,
    pub d: f64,
    pub family: GluedFamily,
    pub psi: PseudomethodS,
    pub gluer: Arc<Gluer>,
}

/// Glues `ψ_k(y) = A_k y + c_k` on the active ball with linear-mode gluing
/// at `ε = ε_0`, `b = ā`; the claimed defect is `2d`.
pub fn build_lemma2_adversary(model: &Lemma2Model, d: f64, seed: u64) -> Result<Lemma2Adversary> {
    let spec = &model.spec;
    spec.validate_drift(d)?;
    let gluer = Gluer::new(
        model.system.clone(),
        model.orbit.clone(),
        spec.a_bar,
        d,
        GluingMode::Linear { epsilon: spec.eps0() },
        seed,
    )?;
    let period = spec.m * spec.nu;
    let maps = (0..period as i64)
        .map(|k| {
            let active = model.orbit.ball_index(k);
            let locals = (0..spec.m)
                .map(|j| {
                    if j == active {
                        LocalMap::shifted_linearization(&model.orbit, k, spec.drift(k, d))
                    } else {
                        LocalMap::Exact
                    }
                })
                .collect();
            gluer.glue_unchecked(locals)
        })
        .collect();
    let family = GluedFamily::Periodic(maps);
    let psi = family.clone().into_pseudomethod(model.system.clone(), 2.0 * d)?;
    Ok(Lemma2Adversary {
        model: model.clone(),
        d,
        family,
        psi,
        gluer,
    })
}

impl Lemma2Adversary {
    pub fn psi_radius(&self) -> f64 {
        self.gluer.bump().inner()
    }
}

/// Outcome of one sampled start.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma2Run {
    pub start: DVector<f64>,
    /// Predicted first cycle with `|pr q^{mνk}| > 3ε`.
    pub predicted: i64,
    /// Observed first such cycle.
    pub observed: Option<i64>,
    pub identity_error: f64,
    pub left_region: bool,
    /// `(k, |pr q^{mνk}|)` at cycle boundaries.
    pub cycle_norms: Vec<(i64, f64)>,
    pub rows: Vec<ReportRow>,
}

/// First `k` with `|pr q + k s e_1| > 3ε`, for `|pr q| < 3ε`.
pub fn predicted_crossing(pr: (f64, f64), s: f64, three_eps: f64) -> i64 {
    let (x, y) = pr;
    let reach = (three_eps * three_eps - y * y).max(0.0).sqrt() - x;
    (reach / s).floor() as i64 + 1
}

/// Composes the glued maps from the chart vector `q` at `p_0` up to two
/// cycles past the predicted crossing.
pub fn run_lemma2(adv: &Lemma2Adversary, q: &DVector<f64>, trial: usize) -> Lemma2Run {
    let model = &adv.model;
    let spec = &model.spec;
    let orbit = &model.orbit;
    let space = orbit.space();
    let cycle = (spec.m * spec.nu) as i64;
    let s = spec.cycle_drift(adv.d);
    let three_eps = 3.0 * spec.eps();
    let region = adv.psi_radius();
    let predicted = predicted_crossing((q[0], q[1]), s, three_eps);
    let monodromy = orbit.jacobian_product(0, cycle as usize);
    let mut linear = q.clone();
    let mut x = space.exp(orbit.point(0), q);
    let pr0 = q.rows(0, 2).norm();
    let mut run = Lemma2Run {
        start: q.clone(),
        predicted,
        observed: None,
        identity_error: 0.0,
        left_region: q.norm() > region,
        cycle_norms: vec![(0, pr0)],
        rows: vec![ReportRow {
            trial,
            k: 0,
            pr_norm: pr0,
            lower_bound: 0.0,
            in_region: q.norm() <= region,
        }],
    };
    for c in 1..=predicted + 2 {
        for step in 0..cycle {
            let k = (c - 1) * cycle + step;
            x = adv.psi.apply(k, &x);
            let v = space.log(orbit.point(k + 1), &x);
            if v.norm() > region {
                run.left_region = true;
            }
        }
        linear = &monodromy * linear;
        let v = space.log(orbit.point(0), &x);
        let mut oracle = linear.clone();
        oracle[0] += c as f64 * s;
        if !run.left_region {
            run.identity_error = run.identity_error.max((&v - oracle).norm());
        }
        let pr = v.rows(0, 2).norm();
        run.cycle_norms.push((c, pr));
        run.rows.push(ReportRow {
            trial,
            k: c * cycle,
            pr_norm: pr,
            lower_bound: (c as f64 * s - pr0).max(0.0),
            in_region: !run.left_region,
        });
        if run.observed.is_none() && pr > three_eps {
            run.observed = Some(c);
        }
    }
    run
}

/// Least-squares slope of `|pr q^{mνk}|` against `k` through the origin offset.
fn fitted_slope(points: &[(i64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    sxy / sxx
}

/// Samples starts with `|q| ≤ 2ε` (plus `q = 0` and a start with
/// `pr q = 0` and nonzero bottom block), checks the telescoped drift
/// identity, the predicted crossing of `3ε`, and the measured defect.
pub fn verify_lemma2_divergence(adv: &Lemma2Adversary, trials: usize, seed: u64) -> AdversaryReport {
    let model = &adv.model;
    let spec = &model.spec;
    let n = spec.dim();
    let eps = spec.eps();
    let mut rep = AdversaryReport::new("lemma2");
    rep.echo("m", spec.m);
    rep.echo("nu", spec.nu);
    rep.echo_f64("chi", spec.chi);
    rep.echo("r", format!("{:?}", spec.r));
    rep.echo("dim", n);
    rep.echo_f64("a_bar", spec.a_bar);
    rep.echo_f64("eps0", spec.eps0());
    rep.echo_f64("eps", eps);
    rep.echo_f64("R", spec.big_r());
    rep.echo_f64("d", adv.d);
    rep.echo_f64("cycle_drift", spec.cycle_drift(adv.d));

    let (modulus, root_err) = model.plane_eigen_check();
    rep.check("plane_eigen_modulus", (modulus - 1.0).abs() <= 1e-12, format!("modulus {modulus}"));
    rep.check("root_of_unity", root_err <= 1e-12, format!("|P^nu - I| = {root_err:e}"));

    let mut starts = vec![DVector::zeros(n)];
    if n > 2 {
        let mut q = DVector::zeros(n);
        q[2] = eps;
        starts.push(q);
    }
    let sampler = BallSampler::new(n, 2.0 * eps, derive_seed(seed, 11)).with_rings(&[2.0 * eps]);
    starts.extend(sampler.points(trials));
    let runs: Vec<Lemma2Run> = starts.par_iter().enumerate().map(|(i, q)| run_lemma2(adv, q, i)).collect();

    let identity = runs.iter().map(|r| r.identity_error).fold(0.0, f64::max);
    let left = runs.iter().filter(|r| r.left_region).count();
    let off = runs
        .iter()
        .filter(|r| !r.left_region && !r.observed.is_some_and(|o| (o - r.predicted).abs() <= 1))
        .count();
    rep.echo("left_linear_region", left);
    rep.check("telescoped_identity", identity <= 1e-10, format!("max error {identity:e}"));
    rep.check(
        "crossing_3eps",
        off == 0 && runs.iter().all(|r| r.observed.is_some()),
        format!("{off} of {} starts miss the predicted cycle", runs.len()),
    );
    let slope = fitted_slope(&runs[0].cycle_norms[1..]);
    let s = spec.cycle_drift(adv.d);
    rep.check(
        "zero_start_slope",
        ((slope - s) / s).abs() <= 0.01,
        format!("fitted {slope:e}, derived {s:e}"),
    );
    if n > 2 {
        let same = runs[0]
            .cycle_norms
            .iter()
            .zip(&runs[1].cycle_norms)
            .all(|(a, b)| (a.1 - b.1).abs() <= 1e-12);
        rep.check("bottom_start_same_growth", same, "pr_{1,2} growth with pr q = 0 and nonzero bottom block");
    }

    let sampler = SpaceSampler::new(model.orbit.space(), derive_seed(seed, 13))
        .with_extent(2.0 * model.orbit.points().iter().map(|p| p.amax()).fold(spec.a_bar, f64::max))
        .around_orbit(&model.orbit, spec.a_bar, &[adv.psi_radius(), spec.eps0()]);
    let defect = measure_defect_s(&adv.psi, &sampler, 2000);
    rep.check("defect", defect <= 2.0 * adv.d, format!("measured {defect:e}, bound {:e}", 2.0 * adv.d));

    for run in runs {
        rep.rows.extend(run.rows);
    }
    rep
}
