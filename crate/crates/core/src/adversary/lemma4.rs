//! Rigid adversary at a hyperbolic periodic orbit: a pseudomethod whose only
//! pseudotrajectory near the orbit is pinned to the sequence `w_k d`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::AdversaryReport;
use crate::error::{Error, Result};
use crate::gluing::{GluedFamily, Gluer, GluingMode, LocalMap};
use crate::linalg::spectral_norm;
use crate::orbit::PeriodicOrbit;
use crate::pseudomethod::{measure_defect_s, PseudomethodS};
use crate::sampler::{BallSampler, SpaceSampler};
use crate::shadowing::{compute_splitting, HyperbolicSplitting};
use crate::system::SharedSystem;

const UNSTABLE_TOL: f64 = 1e-8;
const MAX_N: usize = 10_000;
/// `ε_2 = ε_1 / (EPS2_MARGIN · max‖A_j‖)`.
const EPS2_MARGIN: f64 = 1.1;

/// Scalars, unit vectors and drift vectors of the rigid adversary.
#[derive(Clone, Debug)]
pub struct Lemma4Sequence {
    pub orbit: PeriodicOrbit,
    /// `e_0, …, e_m`.
    pub e: Vec<DVector<f64>>,
    /// `λ_i = |A_i e_i|` for `i < m`.
    pub lambdas: Vec<f64>,
    /// `a_0 = τ, …, a_m`.
    pub a: Vec<f64>,
    pub tau: f64,
    pub n: usize,
    /// `w_0, …, w_{m(n+1)-1}`; the sequence is `m(n+1)`-periodic.
    pub w: Vec<DVector<f64>>,
    pub big_n: f64,
    pub lipschitz: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub monodromy: DMatrix<f64>,
}

/// `τ = (1 + Σ_{j=1}^{m-1} Π_{i=j}^{m-1} λ_i) / Π_{i=0}^{m-1} λ_i`.
pub fn tau_closed_form(lambdas: &[f64]) -> f64 {
    let m = lambdas.len();
    let mut numerator = 1.0;
    for j in 1..m {
        numerator += lambdas[j..].iter().product::<f64>();
    }
    numerator / lambdas.iter().product::<f64>()
}

/// Dominant unstable eigenvector of the monodromy when power iteration
/// converges inside `U(p)`, otherwise the first basis vector of `U(p)`.
/// Sign fixed so the first significant coordinate is positive.
pub fn default_unstable_vector(split: &HyperbolicSplitting) -> DVector<f64> {
    let u = split.unstable(0);
    let b = split.orbit().monodromy();
    let mut v = u.column(0).into_owned();
    let mut converged = false;
    for _ in 0..2000 {
        let next = &b * &v;
        let next = &next / next.norm();
        let change = (&next - &v).norm().min((&next + &v).norm());
        v = next;
        if change < 1e-14 {
            converged = true;
            break;
        }
    }
    // keep v inside U(p) exactly
    let mut v = if converged { u * (u.transpose() * &v) } else { u.column(0).into_owned() };
    v /= v.norm();
    if let Some(c) = v.iter().find(|c| c.abs() > 1e-12) {
        if *c < 0.0 {
            v = -v;
        }
    }
    v
}

/// Builds the sequence from a hyperbolic orbit, a unit vector `e_0 ∈ U(p)`
/// (default: [`default_unstable_vector`]) and the Lipschitz constant `L`.
pub fn build_lemma4_sequence(orbit: &PeriodicOrbit, e0: Option<DVector<f64>>, lipschitz: f64) -> Result<Lemma4Sequence> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::param("lipschitz", "must be positive and finite"));
    }
    let split = compute_splitting(orbit)?;
    if split.unstable_dim() == 0 {
        return Err(Error::param("orbit", "needs a nontrivial unstable subspace"));
    }
    let e0 = match e0 {
        Some(v) => {
            if v.len() != orbit.dim() {
                return Err(Error::DimensionMismatch {
                    expected: orbit.dim(),
                    got: v.len(),
                });
            }
            let norm = v.norm();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::param("e0", format!("must be a unit vector, |e0| = {norm}")));
            }
            let u = split.unstable(0);
            let deviation = (&v - u * (u.transpose() * &v)).norm();
            if deviation > UNSTABLE_TOL {
                return Err(Error::NotUnstable { deviation });
            }
            v
        }
        None => default_unstable_vector(&split),
    };
    let m = orbit.period();
    let mut e = vec![e0];
    let mut lambdas = Vec::with_capacity(m);
    for i in 0..m {
        let image = orbit.jacobian(i as i64) * &e[i];
        let l = image.norm();
        lambdas.push(l);
        e.push(image / l);
    }
    let tau = tau_closed_form(&lambdas);
    let mut a = vec![tau];
    for i in 0..m {
        a.push(a[i] * lambdas[i] - 1.0);
    }

    let b = orbit.monodromy();
    let b_inv = b.clone().try_inverse().ok_or(Error::Singular)?;
    let tau_e0 = &e[0] * tau;
    let mut v = tau_e0.clone();
    let mut n = 0;
    for k in 1..=MAX_N {
        v = &b_inv * v;
        if v.norm() < 1.0 {
            n = k;
            break;
        }
    }
    if n == 0 {
        return Err(Error::param("n", format!("no n ≤ {MAX_N} with |B^-n τ e0| < 1")));
    }

    let len = m * (n + 1);
    let mut w: Vec<DVector<f64>> = (0..m).map(|i| &e[i] * a[i]).collect();
    w.push(v);
    for k in m + 1..len {
        let next = orbit.jacobian(k as i64 - 1) * &w[k - 1];
        w.push(next);
    }
    let max_w = w.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let big_n = (max_w.max(20.0 * lipschitz)).floor() + 1.0;
    let eps1 = orbit.chart_radius();
    let max_a = orbit.jacobians()[..m].iter().map(spectral_norm).fold(0.0, f64::max);
    let eps2 = eps1 / (EPS2_MARGIN * max_a.max(1.0));
    Ok(Lemma4Sequence {
        orbit: orbit.clone(),
        e,
        lambdas,
        a,
        tau,
        n,
        w,
        big_n,
        lipschitz,
        eps1,
        eps2,
        monodromy: b,
    })
}

impl Lemma4Sequence {
    pub fn period(&self) -> usize {
        self.orbit.period()
    }

    /// The adversary's k-period `m(n+1)`.
    pub fn super_period(&self) -> usize {
        self.w.len()
    }

    pub fn w_at(&self, k: i64) -> &DVector<f64> {
        &self.w[k.rem_euclid(self.w.len() as i64) as usize]
    }

    pub fn max_w(&self) -> f64 {
        self.w.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Largest `d` with `800 N d < ε_2`, which covers `100 N d < ε_2` and the
    /// gluing condition `C·4d < ε_2/2` with `C = 100N`.
    pub fn max_drift(&self) -> f64 {
        self.eps2 / (800.0 * self.big_n)
    }

    /// `(|a_m| / max(1,τ), min_{j<m} a_j, max_k |w_{km} - B^{k-1-n} τ e_0|, |B^{-n} τ e_0|)`.
    pub fn invariant_residuals(&self) -> (f64, f64, f64, f64) {
        let m = self.period();
        let am = self.a[m].abs() / self.tau.max(1.0);
        let min_a = self.a[..m].iter().copied().fold(f64::INFINITY, f64::min);
        let b_inv = self.monodromy.clone().try_inverse().expect("invertible monodromy");
        let n = self.n as i32;
        let mut w_err = 0.0f64;
        for k in 1..=self.n + 1 {
            let power = k as i32 - 1 - n;
            let mut target = &self.e[0] * self.tau;
            for _ in 0..power.unsigned_abs() {
                target = if power < 0 { &b_inv * target } else { &self.monodromy * target };
            }
            let actual = if k * m == self.w.len() {
                self.orbit.jacobian(k as i64 * m as i64 - 1) * &self.w[k * m - 1]
            } else {
                self.w[k * m].clone()
            };
            w_err = w_err.max((actual - target).norm());
        }
        (am, min_a, w_err, self.w[m].norm())
    }

    /// Whether every invariant holds at the pinned tolerances.
    pub fn check_invariants(&self) -> bool {
        let (am, min_a, w_err, wm) = self.invariant_residuals();
        am <= 1e-10 && min_a > 0.0 && w_err <= 1e-10 && wm < 1.0
    }

    /// Chart offset of `ψ_k`: the constant term of the affine local map.
    pub fn offset(&self, k: i64, d: f64) -> DVector<f64> {
        let m = self.period() as i64;
        let k = k.rem_euclid(self.super_period() as i64);
        if k < m - 1 {
            -&self.e[k as usize + 1] * d
        } else if k == m - 1 {
            (&self.w[m as usize] - &self.e[m as usize]) * d
        } else {
            DVector::zeros(self.orbit.dim())
        }
    }
}

#[derive(Clone, Debug)]
pub struct Lemma4Adversary {
    pub seq: Lemma4Sequence,
    pub d: f64,
    pub family: GluedFamily,
    pub psi: PseudomethodS,
    pub gluer: Arc<Gluer>,
}

/// Glues the affine maps `ψ_k` into a `k`-periodic pseudomethod with claimed
/// defect `8d`. The gluing uses `C = 100N`, `b = ε_2` and defect parameter `4d`.
pub fn build_lemma4_adversary(system: SharedSystem, seq: &Lemma4Sequence, d: f64, seed: u64) -> Result<Lemma4Adversary> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::param("d", "must be positive"));
    }
    if 100.0 * seq.big_n * d >= seq.eps2 {
        return Err(Error::GluingPrecondition(format!(
            "need 100 N d < eps2, got {:e} >= {:e}",
            100.0 * seq.big_n * d,
            seq.eps2
        )));
    }
    let gluer = Gluer::new(
        system.clone(),
        seq.orbit.clone(),
        seq.eps2,
        4.0 * d,
        GluingMode::Nonlinear { c: 100.0 * seq.big_n },
        seed,
    )?;
    let m0 = seq.orbit.fundamental_period();
    let maps = (0..seq.super_period() as i64)
        .map(|k| {
            let active = seq.orbit.ball_index(k);
            let locals = (0..m0)
                .map(|j| {
                    if j == active {
                        LocalMap::shifted_linearization(&seq.orbit, k, seq.offset(k, d))
                    } else {
                        LocalMap::Exact
                    }
                })
                .collect();
            gluer.glue_unchecked(locals)
        })
        .collect();
    let family = GluedFamily::Periodic(maps);
    let psi = family.clone().into_pseudomethod(system, 8.0 * d)?;
    Ok(Lemma4Adversary {
        seq: seq.clone(),
        d,
        family,
        psi,
        gluer,
    })
}

impl Lemma4Adversary {
    /// Radius of the ψ region, `C·4d/2 = 200 N d`.
    pub fn psi_radius(&self) -> f64 {
        self.gluer.bump().inner()
    }

    fn pull(&self, k: i64, x: &DVector<f64>) -> DVector<f64> {
        let orbit = &self.seq.orbit;
        orbit.space().log(orbit.point(k), x)
    }

    fn push(&self, k: i64, v: &DVector<f64>) -> DVector<f64> {
        let orbit = &self.seq.orbit;
        orbit.space().exp(orbit.point(k), v)
    }

    /// `max_k |log_{p_k} x_k - w_k d|` over `0 ≤ k ≤ m(n+1)` forward and
    /// `-m(n+1) ≤ k ≤ 0` backward, starting at `exp_{p_0}(w_0 d)`.
    pub fn push_through_errors(&self) -> Result<(f64, f64)> {
        let d = self.d;
        let len = self.seq.super_period() as i64;
        let x0 = self.push(0, &(&self.seq.w[0] * d));
        let mut x = x0.clone();
        let mut fwd = 0.0f64;
        for k in 0..len {
            x = self.psi.apply(k, &x);
            fwd = fwd.max((self.pull(k + 1, &x) - self.seq.w_at(k + 1) * d).norm());
        }
        let mut x = x0;
        let mut bwd = 0.0f64;
        for k in (-len..0).rev() {
            x = self.psi.invert_step(k, &x)?;
            bwd = bwd.max((self.pull(k, &x) - self.seq.w_at(k) * d).norm());
        }
        Ok((fwd, bwd))
    }
}

/// Forward and backward runs from `w_0 d + offset`. Returns the chart
/// trajectory `q_k` in the direction of `step` (±1) until `|q_k| > 2Nd` or
/// `max_steps`, with the worst deviation from the composed linear form.
struct RigidRun {
    exit: Option<i64>,
    formula_error: f64,
    norms: Vec<(i64, f64, bool)>,
}

fn rigid_run(adv: &Lemma4Adversary, offset: &DVector<f64>, forward: bool, max_steps: usize) -> Result<RigidRun> {
    let seq = &adv.seq;
    let d = adv.d;
    let threshold = 2.0 * seq.big_n * d;
    let region = adv.psi_radius();
    let mut x = adv.push(0, &(&seq.w[0] * d + offset));
    let mut linear = offset.clone();
    let mut run = RigidRun {
        exit: None,
        formula_error: 0.0,
        norms: vec![(0, (&seq.w[0] * d + offset).norm(), true)],
    };
    for step in 1..=max_steps as i64 {
        let k = if forward { step } else { -step };
        if forward {
            x = adv.psi.apply(k - 1, &x);
            linear = seq.orbit.jacobian(k - 1) * linear;
        } else {
            x = adv.psi.invert_step(k, &x)?;
            linear = seq.orbit.jacobian(k).clone().lu().solve(&linear).ok_or(Error::Singular)?;
        }
        let q = adv.pull(k, &x);
        let formula = &linear + seq.w_at(k) * d;
        run.formula_error = run.formula_error.max((&q - &formula).norm());
        let norm = q.norm();
        run.norms.push((k, norm, norm <= region));
        if norm > threshold {
            run.exit = Some(step);
            break;
        }
    }
    Ok(run)
}

/// Push-through equalities, the composed-form identity against direct
/// composition, forward exit for offsets off `S(p)` and backward exit for
/// offsets off `U(p)`, and the `16L` budget.
pub fn verify_lemma4_rigidity(adv: &Lemma4Adversary, trials: usize, seed: u64) -> Result<AdversaryReport> {
    let seq = &adv.seq;
    let d = adv.d;
    let m = seq.period();
    let mut rep = AdversaryReport::new("lemma4");
    rep.echo("period", m);
    rep.echo("n", seq.n);
    rep.echo("super_period", seq.super_period());
    rep.echo_f64("tau", seq.tau);
    for (i, a) in seq.a.iter().enumerate() {
        rep.echo_f64(&format!("a_{i}"), *a);
    }
    for (i, l) in seq.lambdas.iter().enumerate() {
        rep.echo_f64(&format!("lambda_{i}"), *l);
    }
    rep.echo_f64("L", seq.lipschitz);
    rep.echo_f64("N", seq.big_n);
    rep.echo_f64("eps1", seq.eps1);
    rep.echo_f64("eps2", seq.eps2);
    rep.echo_f64("d", d);
    rep.echo_f64("max_w", seq.max_w());

    let (am, min_a, w_err, wm) = seq.invariant_residuals();
    rep.check("a_m_zero", am <= 1e-10, format!("|a_m|/max(1,tau) = {am:e}"));
    rep.check("a_positive", min_a > 0.0, format!("min a_j = {min_a:e}"));
    rep.check("w_km_identity", w_err <= 1e-10, format!("max error {w_err:e}"));
    rep.check("w_m_below_one", wm < 1.0, format!("|B^-n tau e0| = {wm:e}"));

    let (fwd, bwd) = adv.push_through_errors()?;
    rep.check("push_through_forward", fwd <= 1e-10, format!("max error {fwd:e}"));
    rep.check("push_through_backward", bwd <= 1e-10, format!("max error {bwd:e}"));

    let sampler = SpaceSampler::new(seq.orbit.space(), seed).around_orbit(&seq.orbit, 4.0 * d, &[4.0 * d, 8.0 * d]);
    let defect = measure_defect_s(&adv.psi, &sampler, 2000);
    rep.check("defect", defect <= 8.0 * d, format!("measured {defect:e}, bound {:e}", 8.0 * d));

    // surviving trajectory over one k-period; beyond that it repeats, while
    // rounding errors grow along the unstable direction
    let bound = seq.big_n * d;
    let base = rigid_run(adv, &DVector::zeros(seq.orbit.dim()), true, seq.super_period())?;
    let max_norm = base.norms.iter().map(|r| r.1).fold(0.0, f64::max);
    rep.check(
        "surviving_trajectory",
        base.exit.is_none() && max_norm <= bound && base.formula_error <= 1e-10,
        format!("max |q_k| = {max_norm:e} <= N d = {bound:e}"),
    );

    // single-direction oracles
    let split = compute_splitting(&seq.orbit)?;
    let mu_u = seq.lambdas.iter().product::<f64>();
    let delta = 1e-8;
    let threshold = 2.0 * seq.big_n * d;
    let predicted_u = ((threshold / delta).ln() / mu_u.ln()).ceil() as i64;
    let run_u = rigid_run(adv, &(&seq.e[0] * delta), true, (predicted_u as usize + 3) * m)?;
    let period_u = run_u.exit.map(|s| (s + m as i64 - 1) / m as i64);
    rep.check(
        "unstable_exit_horizon",
        period_u.is_some_and(|p| (p - predicted_u).abs() <= 1) && run_u.formula_error <= 1e-10,
        format!("exit period {period_u:?}, predicted {predicted_u}"),
    );
    for &(k, norm, region) in &run_u.norms {
        rep.rows.push(super::ReportRow {
            trial: 0,
            k,
            pr_norm: norm,
            lower_bound: delta * mu_u.powf((k / m as i64) as f64) - bound,
            in_region: region,
        });
    }
    if split.stable_dim() > 0 {
        let s_dir = stable_eigvec(&split);
        let bs = (&seq.monodromy * &s_dir).norm();
        let predicted_s = ((threshold / delta).ln() / (1.0 / bs).ln()).ceil() as i64;
        let run_s = rigid_run(adv, &(&s_dir * delta), false, (predicted_s as usize + 3) * m)?;
        let period_s = run_s.exit.map(|s| (s + m as i64 - 1) / m as i64);
        rep.check(
            "stable_exit_horizon",
            period_s.is_some_and(|p| (p - predicted_s).abs() <= 1) && run_s.formula_error <= 1e-10,
            format!("exit period {period_s:?}, predicted {predicted_s}"),
        );
        for &(k, norm, region) in &run_s.norms {
            rep.rows.push(super::ReportRow {
                trial: 1,
                k,
                pr_norm: norm,
                lower_bound: delta * (1.0 / bs).powf(((-k) / m as i64) as f64) - bound,
                in_region: region,
            });
        }
    }

    // sampled offsets in the 16Ld ball
    let radius = 16.0 * seq.lipschitz * d;
    let offsets = BallSampler::new(seq.orbit.dim(), radius, seed).with_rings(&[radius]);
    let (p_s, p_u) = split.projectors(0);
    let max_steps = 200 * m;
    let mut fwd_fail = 0usize;
    let mut bwd_fail = 0usize;
    let mut formula_err = 0.0f64;
    let mut tested = 0usize;
    for i in 0..trials as u64 {
        let q = offsets.point(i);
        let qn = q.norm();
        if qn == 0.0 {
            continue;
        }
        tested += 1;
        if (&p_u * &q).norm() >= 1e-6 * qn {
            let run = rigid_run(adv, &q, true, max_steps)?;
            formula_err = formula_err.max(run.formula_error);
            if run.exit.is_none() {
                fwd_fail += 1;
            }
        }
        if (&p_s * &q).norm() >= 1e-6 * qn {
            let run = rigid_run(adv, &q, false, max_steps)?;
            formula_err = formula_err.max(run.formula_error);
            if run.exit.is_none() {
                bwd_fail += 1;
            }
        }
    }
    rep.check(
        "composed_form",
        formula_err <= 1e-10,
        format!("max deviation {formula_err:e} over {tested} offsets"),
    );
    rep.check(
        "offsets_exit",
        fwd_fail == 0 && bwd_fail == 0,
        format!("{fwd_fail} forward and {bwd_fail} backward runs stayed within 2Nd"),
    );

    // a valid LipInvPerSh constant L forces |w_k| <= 16L
    let max_a = seq.a.iter().map(|a| a.abs()).fold(0.0, f64::max);
    rep.echo_f64("max_w_d", seq.max_w() * d);
    rep.echo_f64("budget_16Ld", radius);
    rep.echo("lipschitz_witness", max_a > 16.0 * seq.lipschitz);
    Ok(rep)
}

/// Unit vector along the dominant direction of `B^{-1}` inside `S(p)`.
fn stable_eigvec(split: &HyperbolicSplitting) -> DVector<f64> {
    let s = split.stable(0);
    let b_inv = split.orbit().monodromy().try_inverse().expect("invertible monodromy");
    let mut v = s.column(0).into_owned();
    for _ in 0..2000 {
        let next = &b_inv * &v;
        let next = &next / next.norm();
        let change = (&next - &v).norm().min((&next + &v).norm());
        v = next;
        if change < 1e-14 {
            break;
        }
    }
    let v = s * (s.transpose() * v);
    &v / v.norm()
}
