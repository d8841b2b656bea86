//! Hyperbolicity classification, invariant splittings and constants.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{dominant_subspace, orthonormalize, smallest_singular_value, spectral_norm, subspace_distance};
use crate::orbit::PeriodicOrbit;

/// Eigenvalue moduli within this distance of 1 count as nonhyperbolic.
pub const HYPERBOLICITY_TOL: f64 = 1e-9;

/// Headroom applied to the fitted decay constant.
pub const C_HEADROOM: f64 = 1.1;

#[derive(Clone, Debug, PartialEq)]
pub enum Classification {
    Hyperbolic { moduli: Vec<f64> },
    Nonhyperbolic { witness: f64, moduli: Vec<f64> },
}

impl Classification {
    pub fn is_hyperbolic(&self) -> bool {
        matches!(self, Classification::Hyperbolic { .. })
    }

    /// Eigenvalue moduli of the monodromy, ascending.
    pub fn moduli(&self) -> &[f64] {
        match self {
            Classification::Hyperbolic { moduli } | Classification::Nonhyperbolic { moduli, .. } => moduli,
        }
    }
}

/// Ascending eigenvalue moduli of `b`.
pub fn eigen_moduli(b: &DMatrix<f64>) -> Vec<f64> {
    let mut moduli: Vec<f64> = b.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(f64::total_cmp);
    moduli
}

/// Hyperbolic iff no eigenvalue of `B = A_{m-1} ⋯ A_0` has modulus within
/// [`HYPERBOLICITY_TOL`] of 1.
pub fn classify_periodic_point(orbit: &PeriodicOrbit) -> Classification {
    let moduli = eigen_moduli(&orbit.monodromy());
    let witness = moduli
        .iter()
        .copied()
        .filter(|m| (m - 1.0).abs() <= HYPERBOLICITY_TOL)
        .min_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()));
    match witness {
        Some(witness) => Classification::Nonhyperbolic { witness, moduli },
        None => Classification::Hyperbolic { moduli },
    }
}

/// Orthonormal bases of `S(p_k)` and `U(p_k)` for `k = 0..m`, with constants
/// `C` and `λ` such that `|Df^j v| ≤ C λ^j |v|` on `S` and `|Df^{-j} v| ≤ C λ^j |v|` on `U`.
#[derive(Clone, Debug)]
pub struct HyperbolicSplitting {
    orbit: PeriodicOrbit,
    stable: Vec<DMatrix<f64>>,
    unstable: Vec<DMatrix<f64>>,
    stable_maps: Vec<DMatrix<f64>>,
    unstable_maps: Vec<DMatrix<f64>>,
    inverses: Vec<DMatrix<f64>>,
    moduli: Vec<f64>,
    c_fit: f64,
    lambda: f64,
}

/// Numerical checks of a splitting.
#[derive(Clone, Debug, PartialEq)]
pub struct SplittingCheck {
    pub min_singular_value: f64,
    pub max_invariance_error: f64,
    pub max_decay_ratio: f64,
}

impl SplittingCheck {
    pub fn passed(&self) -> bool {
        self.min_singular_value > 1e-8 && self.max_invariance_error <= 1e-8 && self.max_decay_ratio <= 1.0
    }
}

pub fn compute_splitting(orbit: &PeriodicOrbit) -> Result<HyperbolicSplitting> {
    let moduli = match classify_periodic_point(orbit) {
        Classification::Nonhyperbolic { witness, .. } => return Err(Error::Nonhyperbolic { modulus: witness }),
        Classification::Hyperbolic { moduli } => moduli,
    };
    let m = orbit.period();
    let n = orbit.dim();
    let s_dim = moduli.iter().filter(|&&x| x < 1.0).count();
    let u_dim = n - s_dim;
    let inverses = orbit
        .jacobians()
        .iter()
        .map(|a| a.clone().try_inverse().ok_or(Error::Singular))
        .collect::<Result<Vec<_>>>()?;
    let b = orbit.monodromy();
    let b_inv = (0..m).fold(DMatrix::identity(n, n), |acc, k| acc * &inverses[k]);

    let mut unstable = Vec::with_capacity(m);
    unstable.push(dominant_subspace(&b, u_dim));
    for k in 0..m - 1 {
        let next = orthonormalize(&(orbit.jacobian(k as i64) * &unstable[k]));
        unstable.push(next);
    }
    let mut stable = vec![DMatrix::zeros(n, s_dim); m];
    stable[0] = dominant_subspace(&b_inv, s_dim);
    for k in (1..m).rev() {
        let from = if k + 1 == m { &stable[0] } else { &stable[k + 1] };
        stable[k] = orthonormalize(&(&inverses[k] * from));
    }

    // A_k restricted to S_k → S_{k+1} and A_k^{-1} restricted to U_{k+1} → U_k,
    // in the orthonormal bases
    let next = |k: usize| (k + 1) % m;
    let stable_maps: Vec<DMatrix<f64>> = (0..m)
        .map(|k| stable[next(k)].transpose() * orbit.jacobian(k as i64) * &stable[k])
        .collect();
    let unstable_maps: Vec<DMatrix<f64>> = (0..m)
        .map(|k| unstable[k].transpose() * &inverses[k] * &unstable[next(k)])
        .collect();
    let s_mono = (0..m).fold(DMatrix::identity(s_dim, s_dim), |acc, k| &stable_maps[k] * acc);
    let u_mono = (0..m).rev().fold(DMatrix::identity(u_dim, u_dim), |acc, k| &unstable_maps[k] * acc);
    let spectral_radius = |a: &DMatrix<f64>| eigen_moduli(a).last().copied().unwrap_or(0.0);
    let lambda = spectral_radius(&s_mono).max(spectral_radius(&u_mono)).powf(1.0 / m as f64);

    let mut split = HyperbolicSplitting {
        orbit: orbit.clone(),
        stable,
        unstable,
        stable_maps,
        unstable_maps,
        inverses,
        moduli,
        c_fit: 0.0,
        lambda,
    };
    split.c_fit = split.decay_sup(split.lambda);
    Ok(split)
}

impl HyperbolicSplitting {
    pub fn orbit(&self) -> &PeriodicOrbit {
        &self.orbit
    }

    /// Orthonormal basis of `S(p_k)`.
    pub fn stable(&self, k: i64) -> &DMatrix<f64> {
        &self.stable[self.orbit.index(k)]
    }

    /// Orthonormal basis of `U(p_k)`.
    pub fn unstable(&self, k: i64) -> &DMatrix<f64> {
        &self.unstable[self.orbit.index(k)]
    }

    pub fn jacobian_inverse(&self, k: i64) -> &DMatrix<f64> {
        &self.inverses[self.orbit.index(k)]
    }

    pub fn stable_dim(&self) -> usize {
        self.stable[0].ncols()
    }

    pub fn unstable_dim(&self) -> usize {
        self.unstable[0].ncols()
    }

    pub fn moduli(&self) -> &[f64] {
        &self.moduli
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Smallest constant satisfying the sampled decay inequalities.
    pub fn c_fit(&self) -> f64 {
        self.c_fit
    }

    /// Reported constant: [`C_HEADROOM`] times [`Self::c_fit`].
    pub fn c(&self) -> f64 {
        C_HEADROOM * self.c_fit
    }

    /// Horizon `j = 0..=3m` over which decay is fitted and checked.
    pub fn horizon(&self) -> usize {
        3 * self.orbit.period()
    }

    /// `max ‖Df^j|_S‖ / λ^j` and `max ‖Df^{-j}|_U‖ / λ^j` over `j ≤ 3m` and all `k`.
    ///
    /// Products are taken over the restricted maps, so rounding errors never
    /// leave the subspaces and get amplified.
    fn decay_sup(&self, lambda: f64) -> f64 {
        let m = self.orbit.period() as i64;
        let (s, u) = (self.stable_dim(), self.unstable_dim());
        let mut sup = 0.0f64;
        for k in 0..m {
            let mut fwd = DMatrix::identity(s, s);
            let mut bwd = DMatrix::identity(u, u);
            for j in 0..=self.horizon() as i32 {
                let scale = lambda.powi(j);
                sup = sup.max(spectral_norm(&fwd) / scale);
                sup = sup.max(spectral_norm(&bwd) / scale);
                fwd = &self.stable_maps[self.orbit.index(k + j as i64)] * fwd;
                bwd = &self.unstable_maps[self.orbit.index(k - 1 - j as i64)] * bwd;
            }
        }
        sup
    }

    /// Complementarity, invariance and decay with the reported `(C, λ)`.
    pub fn check(&self) -> SplittingCheck {
        self.check_with(self.c(), self.lambda)
    }

    /// As [`Self::check`], with external constants (e.g. uniform ones).
    pub fn check_with(&self, c: f64, lambda: f64) -> SplittingCheck {
        let m = self.orbit.period() as i64;
        let mut min_sv = f64::INFINITY;
        let mut inv_err = 0.0f64;
        for k in 0..m {
            let combined = DMatrix::from_columns(
                &self
                    .stable(k)
                    .column_iter()
                    .chain(self.unstable(k).column_iter())
                    .map(|c| c.into_owned())
                    .collect::<Vec<_>>(),
            );
            min_sv = min_sv.min(smallest_singular_value(&combined));
            let a = self.orbit.jacobian(k);
            inv_err = inv_err.max(subspace_distance(&orthonormalize(&(a * self.stable(k))), self.stable(k + 1)));
            inv_err = inv_err.max(subspace_distance(&orthonormalize(&(a * self.unstable(k))), self.unstable(k + 1)));
        }
        SplittingCheck {
            min_singular_value: min_sv,
            max_invariance_error: inv_err,
            max_decay_ratio: self.decay_sup(lambda) / c,
        }
    }

    /// Combined basis `[S_k | U_k]` and its inverse, for the projections
    /// onto `S_k` along `U_k` and vice versa.
    pub fn projectors(&self, k: i64) -> (DMatrix<f64>, DMatrix<f64>) {
        let s = self.stable(k);
        let u = self.unstable(k);
        let n = self.orbit.dim();
        let mut basis = DMatrix::zeros(n, n);
        basis.columns_mut(0, s.ncols()).copy_from(s);
        basis.columns_mut(s.ncols(), u.ncols()).copy_from(u);
        let inv = basis.clone().try_inverse().expect("complementary subspaces");
        let mut mask_s = DMatrix::zeros(n, n);
        for i in 0..s.ncols() {
            mask_s[(i, i)] = 1.0;
        }
        let p_s = &basis * mask_s * &inv;
        let p_u = DMatrix::identity(n, n) - &p_s;
        (p_s, p_u)
    }
}

/// Componentwise maxima of the per-orbit `(C, λ)`.
pub fn uniform_constants(orbits: &[PeriodicOrbit]) -> Result<(f64, f64)> {
    if orbits.is_empty() {
        return Err(Error::param("orbits", "need at least one orbit"));
    }
    let mut c = 0.0f64;
    let mut lambda = 0.0f64;
    for orbit in orbits {
        let s = compute_splitting(orbit)?;
        c = c.max(s.c());
        lambda = lambda.max(s.lambda());
    }
    Ok((c, lambda))
}

/// `L = 2 C (1 + λ) / (1 - λ)`.
pub fn lipschitz_bound(c: f64, lambda: f64) -> f64 {
    2.0 * c * (1.0 + lambda) / (1.0 - lambda)
}

/// `(L, d_0)` with `d_0 = min(b, b/2) / (4L)`, the smaller radius being the
/// largest ball on which gluing can act.
pub fn estimate_lipschitz_constant(splitting: &HyperbolicSplitting) -> (f64, f64) {
    let l = lipschitz_bound(splitting.c(), splitting.lambda());
    let b = splitting.orbit.chart_radius();
    let safe = b.min(b / 2.0);
    (l, safe / (4.0 * l))
}
