//! Drift adversary at a fixed point whose linearization carries a complex
//! Jordan block of modulus one.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{AdversaryReport, ReportRow};
use crate::error::{Error, Result};
use crate::gluing::{GluedFamily, Gluer, GluingMode, LocalMap};
use crate::orbit::PeriodicOrbit;
use crate::pseudomethod::{measure_defect_s, shared, PseudomethodS};
use crate::sampler::{derive_seed, BallSampler, SpaceSampler};
use crate::space::Point;
use crate::system::{AffineCycleModel, SharedSystem};

const EXIT_SLACK: f64 = 1e-12;

/// Parameters of the Jordan-block model `A = diag(H_1, H_2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JordanDriftSpec {
    /// Number of 2×2 blocks of `H_1`.
    pub l: usize,
    /// Rotation angle of `Q`.
    pub theta: f64,
    /// Unit drift direction in the last block.
    pub w: [f64; 2],
    /// Lipschitz constant `L`, a positive integer.
    pub lipschitz: u32,
    /// Radius `r̄` of the ball the gluing acts on.
    pub r_bar: f64,
    /// Remaining block `H_2`, possibly empty.
    pub h2: DMatrix<f64>,
}

impl JordanDriftSpec {
    pub fn new(l: usize, theta: f64, lipschitz: u32) -> Self {
        Self {
            l,
            theta,
            w: [1.0, 0.0],
            lipschitz,
            r_bar: 4.0,
            h2: DMatrix::zeros(0, 0),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.l + self.h2.nrows()
    }

    /// `Q = [[cos θ, sin θ], [-sin θ, cos θ]]`.
    pub fn q(&self) -> DMatrix<f64> {
        q_power(self.theta, 1)
    }

    /// `H_1`: `Q` on the diagonal blocks and the identity on the superdiagonal blocks.
    pub fn h1(&self) -> DMatrix<f64> {
        let n = 2 * self.l;
        let q = self.q();
        let mut h = DMatrix::zeros(n, n);
        for b in 0..self.l {
            h.view_mut((2 * b, 2 * b), (2, 2)).copy_from(&q);
            if b + 1 < self.l {
                h.view_mut((2 * b, 2 * b + 2), (2, 2)).copy_from(&DMatrix::identity(2, 2));
            }
        }
        h
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let k = 2 * self.l;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (k, k)).copy_from(&self.h1());
        if self.h2.nrows() > 0 {
            a.view_mut((k, k), (self.h2.nrows(), self.h2.nrows())).copy_from(&self.h2);
        }
        a
    }

    /// Index of the first coordinate of the last block, `(2l-1, 2l)` one-based.
    pub fn bottom(&self) -> usize {
        2 * self.l - 2
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(self.bottom(), 2).into_owned()
    }

    pub fn w_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.w)
    }

    pub fn validate(&self, d: f64) -> Result<()> {
        if self.l == 0 {
            return Err(Error::param("l", "must be at least 1"));
        }
        if self.lipschitz == 0 {
            return Err(Error::param("lipschitz", "must be a positive integer"));
        }
        if !self.theta.is_finite() {
            return Err(Error::param("theta", "must be finite"));
        }
        let wn = (self.w[0].hypot(self.w[1]) - 1.0).abs();
        if wn > 1e-12 {
            return Err(Error::param("w", "must be a unit vector"));
        }
        if self.h2.nrows() != self.h2.ncols() {
            return Err(Error::param("h2", "must be square"));
        }
        if self.h2.nrows() > 0 && self.h2.clone().try_inverse().is_none() {
            return Err(Error::Singular);
        }
        // isometry of Q on sampled directions
        let q = self.q();
        let dirs = BallSampler::new(2, 1.0, 17).with_rings(&[1.0]);
        for i in 0..64 {
            let v = dirs.point(i);
            if ((&q * &v).norm() - v.norm()).abs() > 1e-14 {
                return Err(Error::param("theta", "Q is not an isometry"));
            }
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::param("d", "must be positive"));
        }
        let l = f64::from(self.lipschitz);
        if 20.0 * l * d >= self.r_bar / 10.0 {
            return Err(Error::param(
                "d",
                format!("need 20 L d < r_bar/10, got {:e} >= {:e}", 20.0 * l * d, self.r_bar / 10.0),
            ));
        }
        Ok(())
    }
}

/// `Q^k` in closed form.
pub fn q_power(theta: f64, k: i64) -> DMatrix<f64> {
    let (s, c) = (k as f64 * theta).sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, s, -s, c])
}

#[derive(Clone, Debug)]
pub struct Lemma3Adversary {
    pub spec: JordanDriftSpec,
    pub d: f64,
    pub system: SharedSystem,
    pub orbit: PeriodicOrbit,
    pub family: GluedFamily,
    pub psi: PseudomethodS,
    pub gluer: Arc<Gluer>,
}

/// The linear model `x ↦ A x` and its fixed point at the origin.
pub fn lemma3_model(spec: &JordanDriftSpec) -> Result<(SharedSystem, PeriodicOrbit)> {
    let system = shared(AffineCycleModel::linear(spec.matrix())?);
    let orbit = PeriodicOrbit::from_system(system.as_ref(), &DVector::zeros(spec.dim()), 1)?;
    Ok((system, orbit))
}

/// Glues `ψ_k(y) = A y + (d/2) Q^k w` (in the last block of `H_1`) with
/// `C = 20L`, `b = r̄`; the claimed defect is `2d`.
pub fn build_lemma3_adversary(spec: &JordanDriftSpec, d: f64, seed: u64) -> Result<Lemma3Adversary> {
    spec.validate(d)?;
    let (system, orbit) = lemma3_model(spec)?;
    let c = 20.0 * f64::from(spec.lipschitz);
    let gluer = Gluer::new(system.clone(), orbit.clone(), spec.r_bar, d, GluingMode::Nonlinear { c }, seed)?;
    let matrix = spec.matrix();
    let (theta, w, bottom, n) = (spec.theta, spec.w_vec(), spec.bottom(), spec.dim());
    let locals = move |k: i64| {
        let mut offset = DVector::zeros(n);
        offset.rows_mut(bottom, 2).copy_from(&(q_power(theta, k) * &w * (d / 2.0)));
        vec![LocalMap::Affine {
            matrix: matrix.clone(),
            offset,
        }]
    };
    let family = GluedFamily::Generated {
        gluer: gluer.clone(),
        locals: Arc::new(locals),
    };
    let psi = family.clone().into_pseudomethod(system.clone(), 2.0 * d)?.with_sample_window(32);
    Ok(Lemma3Adversary {
        spec: spec.clone(),
        d,
        system,
        orbit,
        family,
        psi,
        gluer,
    })
}

impl Lemma3Adversary {
    /// `10 L d`, the radius on which `Φ_k = ψ_k`.
    pub fn psi_radius(&self) -> f64 {
        self.gluer.bump().inner()
    }

    pub fn exit_radius(&self) -> f64 {
        4.0 * f64::from(self.spec.lipschitz) * self.d
    }

    /// Exit threshold: `4Ld` with a relative slack of `1e-12`, so that a
    /// norm equal to `4Ld` up to rounding does not count as an exit.
    fn exit_threshold(&self) -> f64 {
        self.exit_radius() * (1.0 + EXIT_SLACK)
    }

    pub fn horizon(&self) -> i64 {
        20 * i64::from(self.spec.lipschitz)
    }

    /// `ψ_k(y)` without gluing.
    pub fn psi_k(&self, k: i64, y: &DVector<f64>) -> DVector<f64> {
        let mut out = self.spec.matrix() * y;
        let drift = q_power(self.spec.theta, k) * self.spec.w_vec() * (self.d / 2.0);
        let b = self.spec.bottom();
        let mut rows = out.rows_mut(b, 2);
        rows += drift;
        out
    }
}

/// Outcome of one sampled start.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma3Run {
    pub start: DVector<f64>,
    /// First `k` with `|q_k| > 4Ld`.
    pub exit: Option<i64>,
    /// First `k` with `|pr q_k| > 4Ld` among steps inside the ψ region.
    pub exit_pr: Option<i64>,
    pub identity_error: f64,
    pub lower_bound_violation: f64,
    pub rows: Vec<ReportRow>,
}

/// Iterates the glued maps from `q` until `|q_k| > 4Ld` or `20L` steps.
pub fn run_lemma3(adv: &Lemma3Adversary, q: &Point, trial: usize) -> Lemma3Run {
    let spec = &adv.spec;
    let d = adv.d;
    let exit_r = adv.exit_threshold();
    let region = adv.psi_radius();
    let pr0 = spec.project(q);
    let pr0_norm = pr0.norm();
    let w = spec.w_vec();
    let mut x = q.clone();
    let mut inside = q.norm() <= region;
    let mut run = Lemma3Run {
        start: q.clone(),
        exit: None,
        exit_pr: None,
        identity_error: 0.0,
        lower_bound_violation: 0.0,
        rows: vec![ReportRow {
            trial,
            k: 0,
            pr_norm: pr0_norm,
            lower_bound: 0.0,
            in_region: inside,
        }],
    };
    for k in 1..=adv.horizon() {
        x = adv.psi.apply(k - 1, &x);
        let pr = spec.project(&x);
        let kf = k as f64;
        let lower = (kf * d / 2.0 - pr0_norm).max(0.0);
        if inside {
            let oracle = q_power(spec.theta, k) * &pr0 + q_power(spec.theta, k - 1) * &w * (kf * d / 2.0);
            run.identity_error = run.identity_error.max((&pr - oracle).norm());
            run.lower_bound_violation = run.lower_bound_violation.max(lower - pr.norm());
            if run.exit_pr.is_none() && pr.norm() > exit_r {
                run.exit_pr = Some(k);
            }
        }
        inside = inside && x.norm() <= region;
        run.rows.push(ReportRow {
            trial,
            k,
            pr_norm: pr.norm(),
            lower_bound: lower,
            in_region: inside,
        });
        if x.norm() > exit_r {
            run.exit = Some(k);
            break;
        }
    }
    run
}

/// Samples `trials` starts in the `4Ld` ball (plus `q = 0` and the start
/// with `pr q = -4Ld Q^T w`), checks the closed-form bottom block, the lower
/// bound and exit within `20L` steps, and the gluing identities.
pub fn verify_lemma3_divergence(adv: &Lemma3Adversary, trials: usize, seed: u64) -> AdversaryReport {
    let spec = &adv.spec;
    let d = adv.d;
    let l = f64::from(spec.lipschitz);
    let n = spec.dim();
    let mut rep = AdversaryReport::new("lemma3");
    rep.echo("l", spec.l);
    rep.echo_f64("theta", spec.theta);
    rep.echo("w", format!("({}, {})", spec.w[0], spec.w[1]));
    rep.echo("L", spec.lipschitz);
    rep.echo_f64("r_bar", spec.r_bar);
    rep.echo_f64("d", d);
    rep.echo_f64("C", 20.0 * l);
    rep.echo_f64("psi_radius", adv.psi_radius());
    rep.echo_f64("exit_radius", adv.exit_radius());
    rep.echo("horizon", adv.horizon());

    let r = adv.exit_radius();
    let mut starts: Vec<DVector<f64>> = Vec::with_capacity(trials + 2);
    starts.push(DVector::zeros(n));
    let mut adversarial = DVector::zeros(n);
    adversarial
        .rows_mut(spec.bottom(), 2)
        .copy_from(&(q_power(spec.theta, -1) * spec.w_vec() * (-r)));
    starts.push(adversarial);
    let sampler = BallSampler::new(n, r, derive_seed(seed, 3)).with_rings(&[r]);
    starts.extend(sampler.points(trials));

    let runs: Vec<Lemma3Run> = starts
        .par_iter()
        .enumerate()
        .map(|(i, q)| run_lemma3(adv, q, i))
        .collect();

    let identity = runs.iter().map(|r| r.identity_error).fold(0.0, f64::max);
    let violation = runs.iter().map(|r| r.lower_bound_violation).fold(0.0, f64::max);
    let unexited = runs.iter().filter(|r| r.exit.is_none()).count();
    let worst = runs.iter().filter_map(|r| r.exit).max().unwrap_or(0);
    rep.check("bottom_block_identity", identity <= 1e-12, format!("max error {identity:e}"));
    rep.check("lower_bound", violation <= 1e-12, format!("max violation {violation:e}"));
    rep.check(
        "exit_within_20L",
        unexited == 0,
        format!("{} of {} starts exit, latest at k = {worst}", runs.len() - unexited, runs.len()),
    );
    let zero_exit = runs[0].exit;
    rep.echo("exit_q0", format!("{zero_exit:?}"));
    rep.echo("exit_adversarial", format!("{:?}", runs[1].exit));
    if spec.l == 1 {
        let expected = 8 * i64::from(spec.lipschitz) + 1;
        rep.check("exit_q0_closed_form", zero_exit == Some(expected), format!("k* = {zero_exit:?}, expected {expected}"));
    }
    let adv_bound = 16 * i64::from(spec.lipschitz) + 1;
    rep.check(
        "exit_adversarial_bound",
        runs[1].exit.is_some_and(|k| k <= adv_bound),
        format!("k* = {:?}, bound {adv_bound}", runs[1].exit),
    );

    // Φ_k = ψ_k just inside the ψ region
    let rho = 0.99 * adv.psi_radius();
    let dirs = BallSampler::new(n, rho, derive_seed(seed, 5)).with_rings(&[rho]);
    let mut region_mismatch = 0;
    for i in 0..200u64 {
        let y = dirs.point(4 * i + 3);
        let k = i as i64;
        if adv.psi.apply(k, &y) != adv.psi_k(k, &y) {
            region_mismatch += 1;
        }
    }
    rep.check("region_identity", region_mismatch == 0, format!("{region_mismatch} mismatches of 200"));

    let big = 2.0 * adv.gluer.bump().outer();
    let sampler = SpaceSampler::new(adv.orbit.space(), derive_seed(seed, 7))
        .with_extent(big)
        .around_orbit(&adv.orbit, big, &[adv.psi_radius(), adv.gluer.bump().outer()]);
    let defect = measure_defect_s(&adv.psi, &sampler, 2000);
    rep.check("defect", defect <= 2.0 * d, format!("measured {defect:e}, bound {:e}", 2.0 * d));

    for run in runs {
        rep.rows.extend(run.rows);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn jordan_matrix_layout() {
        let spec = JordanDriftSpec::new(2, FRAC_PI_2, 10);
        let a = spec.matrix();
        assert_eq!(a.nrows(), 4);
        assert!((a[(0, 1)] - 1.0).abs() < 1e-15 && (a[(1, 0)] + 1.0).abs() < 1e-15);
        assert_eq!(a[(0, 2)], 1.0);
        assert_eq!(a[(1, 3)], 1.0);
        assert_eq!(a[(2, 0)], 0.0);
        assert_eq!(spec.bottom(), 2);
    }

    #[test]
    fn rejects_large_drift() {
        let spec = JordanDriftSpec::new(1, 1.0, 10);
        assert!(build_lemma3_adversary(&spec, 0.01, 1).is_err());
    }

    #[test]
    fn zero_start_has_linear_drift() {
        let spec = JordanDriftSpec::new(1, FRAC_PI_2, 10);
        let adv = build_lemma3_adversary(&spec, 1e-3, 1).unwrap();
        let run = run_lemma3(&adv, &DVector::zeros(2), 0);
        for row in &run.rows {
            assert!((row.pr_norm - row.k as f64 * 1e-3 / 2.0).abs() < 1e-15);
        }
        assert_eq!(run.exit, Some(81));
    }

    #[test]
    fn divergence_report_passes() {
        for l in [1, 2] {
            for theta in [FRAC_PI_2, 1.0] {
                let spec = JordanDriftSpec::new(l, theta, 10);
                let adv = build_lemma3_adversary(&spec, 1e-3, 2).unwrap();
                let rep = verify_lemma3_divergence(&adv, 30, 4);
                assert!(rep.passed(), "{}", rep.summary());
            }
        }
    }

    #[test]
    fn psi_drift_has_norm_half_d() {
        let spec = JordanDriftSpec::new(2, 1.0, 10);
        let adv = build_lemma3_adversary(&spec, 1e-3, 1).unwrap();
        let y = DVector::from_vec(vec![1e-3, -2e-3, 5e-4, 0.0]);
        for k in 0..10 {
            let gap = (adv.psi_k(k, &y) - spec.matrix() * &y).norm();
            assert!((gap - 5e-4).abs() < 1e-17);
        }
    }
}
