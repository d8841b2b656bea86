//! Perron-operator solver for periodic pseudotrajectories near a hyperbolic
//! periodic orbit.
//!
//! Writing `x_k = exp_{p_k}(v_k)`, the Θ_s recursion becomes
//! `v_{k+1} = A_k v_k + g_k(v_k)`. Each Perron step freezes `h_k = g_k(v_k)`
//! and solves the linear problem `v_{k+1} = A_k v_k + h_k` for the unique
//! window-periodic solution: stable parts are accumulated forward, unstable
//! parts backward, and the periodic closure is solved exactly on each
//! subspace.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::lcm;
use crate::pseudomethod::{theta_s_residual, PseudomethodClass, PseudomethodS, Pseudotrajectory};

use super::splitting::{classify_periodic_point, estimate_lipschitz_constant, Classification, HyperbolicSplitting};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadowingParams {
    pub lipschitz: f64,
    pub d0: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl ShadowingParams {
    pub fn new(lipschitz: f64, d0: f64) -> Result<Self> {
        if !(lipschitz >= 1.0 && lipschitz.is_finite()) {
            return Err(Error::param("lipschitz", "must be a finite number >= 1"));
        }
        if !(d0 > 0.0) {
            return Err(Error::param("d0", "must be positive"));
        }
        Ok(Self {
            lipschitz,
            d0,
            max_iterations: 200,
            tolerance: 1e-15,
        })
    }

    /// Parameters from the splitting's plug-in estimate.
    pub fn from_splitting(splitting: &HyperbolicSplitting) -> Self {
        let (l, d0) = estimate_lipschitz_constant(splitting);
        Self::new(l.max(1.0), d0).expect("positive estimate")
    }
}

#[derive(Clone, Debug)]
pub struct ShadowingSolution {
    pub trajectory: Pseudotrajectory,
    /// Chart coordinates `v_k`, `k = 0..window`.
    pub tangent: Vec<DVector<f64>>,
    pub iterations: usize,
    /// `max_k dist(x_{k+1}, Ψ_k(x_k))`, including the closure step.
    pub residual: f64,
    /// `max_k dist(x_k, p_k)`.
    pub sup_distance: f64,
    pub converged: bool,
}

/// Precomputed linear solver for `v_{k+1} = A_k v_k + h_k` with `v_W = v_0`.
struct PeriodicLinearSolver {
    window: usize,
    jac: Vec<DMatrix<f64>>,
    jac_inv: Vec<DMatrix<f64>>,
    p_s: Vec<DMatrix<f64>>,
    p_u: Vec<DMatrix<f64>>,
    s0: DMatrix<f64>,
    u0: DMatrix<f64>,
    closure_s: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    closure_u: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl PeriodicLinearSolver {
    fn new(split: &HyperbolicSplitting, window: usize) -> Result<Self> {
        let m = split.orbit().period();
        let mut jac = Vec::with_capacity(m);
        let mut jac_inv = Vec::with_capacity(m);
        let mut p_s = Vec::with_capacity(m);
        let mut p_u = Vec::with_capacity(m);
        for k in 0..m as i64 {
            jac.push(split.orbit().jacobian(k).clone());
            jac_inv.push(split.jacobian_inverse(k).clone());
            let (ps, pu) = split.projectors(k);
            p_s.push(ps);
            p_u.push(pu);
        }
        let s0 = split.stable(0).clone();
        let u0 = split.unstable(0).clone();
        let mut solver = Self {
            window,
            jac,
            jac_inv,
            p_s,
            p_u,
            s0,
            u0,
            closure_s: None,
            closure_u: None,
        };
        // homogeneous monodromies restricted to S_0 and U_0
        let mut ys = solver.s0.clone();
        for k in 0..window {
            ys = solver.ps(k + 1) * (solver.a(k) * ys);
        }
        let ms = solver.s0.transpose() * ys;
        let mut yu = solver.u0.clone();
        for k in (0..window).rev() {
            yu = solver.pu(k) * (solver.a_inv(k) * yu);
        }
        let mu = solver.u0.transpose() * yu;
        let lu_of = |m: DMatrix<f64>| -> Result<Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>> {
            if m.nrows() == 0 {
                return Ok(None);
            }
            let sys = DMatrix::identity(m.nrows(), m.nrows()) - m;
            let lu = sys.lu();
            if !lu.is_invertible() {
                return Err(Error::Singular);
            }
            Ok(Some(lu))
        };
        solver.closure_s = lu_of(ms)?;
        solver.closure_u = lu_of(mu)?;
        Ok(solver)
    }

    fn m(&self) -> usize {
        self.jac.len()
    }

    fn a(&self, k: usize) -> &DMatrix<f64> {
        &self.jac[k % self.m()]
    }

    fn a_inv(&self, k: usize) -> &DMatrix<f64> {
        &self.jac_inv[k % self.m()]
    }

    fn ps(&self, k: usize) -> &DMatrix<f64> {
        &self.p_s[k % self.m()]
    }

    fn pu(&self, k: usize) -> &DMatrix<f64> {
        &self.p_u[k % self.m()]
    }

    /// Returns `v_0..v_{W-1}`.
    fn solve(&self, h: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let w = self.window;
        let n = self.jac[0].nrows();

        let mut s = vec![DVector::zeros(n); w + 1];
        if let Some(lu) = &self.closure_s {
            let mut y = DVector::zeros(n);
            for k in 0..w {
                y = self.ps(k + 1) * (self.a(k) * y + &h[k]);
            }
            let coords = lu.solve(&(self.s0.transpose() * y)).expect("invertible");
            s[0] = &self.s0 * coords;
            for k in 0..w {
                s[k + 1] = self.ps(k + 1) * (self.a(k) * &s[k] + &h[k]);
            }
        }

        let mut u = vec![DVector::zeros(n); w + 1];
        if let Some(lu) = &self.closure_u {
            let mut y = DVector::zeros(n);
            for k in (0..w).rev() {
                y = self.pu(k) * (self.a_inv(k) * (y - self.pu(k + 1) * &h[k]));
            }
            let coords = lu.solve(&(self.u0.transpose() * y)).expect("invertible");
            u[w] = &self.u0 * coords;
            for k in (0..w).rev() {
                u[k] = self.pu(k) * (self.a_inv(k) * (&u[k + 1] - self.pu(k + 1) * &h[k]));
            }
        }
        (0..w).map(|k| &s[k] + &u[k]).collect()
    }
}

/// Window used by the solver: the least common multiple of the orbit period
/// and the pseudomethod k-period.
pub fn natural_window(splitting: &HyperbolicSplitting, psi: &PseudomethodS) -> Result<usize> {
    let p = psi
        .k_period()
        .ok_or_else(|| Error::param("pseudomethod", "the solver needs a k-periodic pseudomethod"))?;
    Ok(lcm(splitting.orbit().period(), p))
}

/// Finds a window-periodic Θ_s pseudotrajectory close to the orbit.
///
/// `window` must be a positive multiple of `lcm(m, P)`, with `P` the
/// pseudomethod's k-period.
pub fn find_shadowing_trajectory(
    psi: &PseudomethodS,
    splitting: &HyperbolicSplitting,
    params: &ShadowingParams,
    window: usize,
) -> Result<ShadowingSolution> {
    let orbit = splitting.orbit();
    if let Classification::Nonhyperbolic { witness, .. } = classify_periodic_point(orbit) {
        return Err(Error::Nonhyperbolic { modulus: witness });
    }
    if psi.system().space() != orbit.space() {
        return Err(Error::param("pseudomethod", "lives on a different space than the orbit"));
    }
    let base = natural_window(splitting, psi)?;
    if window == 0 || !window.is_multiple_of(base) {
        return Err(Error::param("window", format!("must be a positive multiple of {base}")));
    }
    let space = orbit.space();
    let b = orbit.chart_radius();
    let n = orbit.dim();
    let linear = PeriodicLinearSolver::new(splitting, window)?;

    let g = |k: usize, v: &DVector<f64>| -> DVector<f64> {
        let kk = k as i64;
        let x = space.exp(orbit.point(kk), v);
        space.log(orbit.point(kk + 1), &psi.apply(kk, &x)) - orbit.jacobian(kk) * v
    };

    let mut v = vec![DVector::zeros(n); window];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        iterations += 1;
        let h: Vec<DVector<f64>> = (0..window).map(|k| g(k, &v[k])).collect();
        let next = linear.solve(&h);
        let mut change = 0.0f64;
        let mut sup = 0.0f64;
        for (a, b_) in next.iter().zip(&v) {
            change = change.max((a - b_).norm());
            sup = sup.max(a.norm());
        }
        v = next;
        if !sup.is_finite() || sup > b {
            return Err(Error::NonConvergence {
                iterations,
                reason: format!("iterate left the chart ball (|v| = {sup:e} > b = {b:e})"),
            });
        }
        if change < params.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            reason: "successive change stayed above tolerance".into(),
        });
    }

    let mut points: Vec<_> = (0..window).map(|k| space.exp(orbit.point(k as i64), &v[k])).collect();
    points.push(points[0].clone());
    let trajectory = Pseudotrajectory::new(0, points, PseudomethodClass::S);
    let residual = theta_s_residual(psi, &trajectory);
    let sup_distance = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    Ok(ShadowingSolution {
        trajectory,
        tangent: v,
        iterations,
        residual,
        sup_distance,
        converged,
    })
}
