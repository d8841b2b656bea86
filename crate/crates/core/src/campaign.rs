//! Seeded campaigns: random smooth pseudomethods fed to the shadowing
//! solver, and random local maps fed to the gluing construction.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;
use rand::RngExt;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gluing::{admissible_defect, verify_glued, Gluer, GluingMode, GluingReport, LocalMap};
use crate::orbit::PeriodicOrbit;
use crate::pseudomethod::{shadowing_distance, theta_s_residual, MapFamily, PseudomethodS};
use crate::record::fmt_f64;
use crate::sampler::{derive_seed, index_rng, unit_direction};
use crate::shadowing::{find_shadowing_trajectory, HyperbolicSplitting, ShadowingParams};
use crate::space::Point;
use crate::system::SharedSystem;

const FIELD_TERMS: usize = 3;
const MAX_FREQUENCY: i64 = 2;

/// Smooth unit vector field
/// `u(x) = normalize(c_0 + Σ_j a_j sin(2π⟨n_j, x⟩/scale + φ_j))`
/// with `|c_0| = 1` and `Σ|a_j| ≤ 1/2`, so the sum never vanishes.
/// Integer frequencies make it periodic on the unit torus when `scale = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothField {
    base: DVector<f64>,
    amplitudes: Vec<DVector<f64>>,
    frequencies: Vec<DVector<f64>>,
    phases: Vec<f64>,
    scale: f64,
}

impl SmoothField {
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = index_rng(seed, 0);
        let base = unit_direction(&mut rng, dim);
        let weights: Vec<f64> = (0..FIELD_TERMS).map(|_| rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum::<f64>().max(1e-12);
        let mut amplitudes = Vec::with_capacity(FIELD_TERMS);
        let mut frequencies = Vec::with_capacity(FIELD_TERMS);
        let mut phases = Vec::with_capacity(FIELD_TERMS);
        for w in weights {
            amplitudes.push(unit_direction(&mut rng, dim) * (0.5 * w / total));
            frequencies.push(DVector::from_fn(dim, |_, _| {
                rng.random_range(-MAX_FREQUENCY..=MAX_FREQUENCY) as f64
            }));
            phases.push(rng.random_range(0.0..std::f64::consts::TAU));
        }
        Self {
            base,
            amplitudes,
            frequencies,
            phases,
            scale: 1.0,
        }
    }

    /// Same field with the spatial period stretched by `scale`.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut v = self.base.clone();
        for ((a, n), phi) in self.amplitudes.iter().zip(&self.frequencies).zip(&self.phases) {
            let arg = std::f64::consts::TAU * n.dot(x) / self.scale + phi;
            v.axpy(arg.sin(), a, 1.0);
        }
        let norm = v.norm();
        v / norm
    }
}

/// `Ψ_k(x) = f(x) + d u_{k mod P}(x)` on the model space; the defect is
/// exactly `d` since every `u_j` is a unit field.
pub fn random_pseudomethod(system: SharedSystem, d: f64, seed: u64, k_period: usize) -> Result<PseudomethodS> {
    if k_period == 0 {
        return Err(Error::param("k_period", "must be positive"));
    }
    let dim = system.dim();
    let fields: Vec<SmoothField> = (0..k_period as u64)
        .map(|j| SmoothField::random(dim, derive_seed(seed, j)))
        .collect();
    let f = system.clone();
    let space = system.space();
    let maps: Arc<dyn MapFamily> = Arc::new(move |k: i64, x: &Point| {
        let u = fields[k.rem_euclid(fields.len() as i64) as usize].eval(x);
        space.exp(&f.eval(x), &(u * d))
    });
    PseudomethodS::new(system, maps, Some(k_period), d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShadowRow {
    pub seed: u64,
    pub d: f64,
    pub sup_distance: f64,
    pub ratio: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ShadowCampaign {
    pub system: SharedSystem,
    pub splitting: HyperbolicSplitting,
    pub params: ShadowingParams,
    pub d: f64,
    pub k_period: usize,
    /// Window as a multiple of `lcm(m, k_period)`.
    pub window_multiple: usize,
}

impl ShadowCampaign {
    /// Solves one seeded random pseudomethod. Solver failures become rows
    /// with `converged = false`.
    pub fn run_seed(&self, seed: u64) -> ShadowRow {
        let mut row = ShadowRow {
            seed,
            d: self.d,
            sup_distance: f64::NAN,
            ratio: f64::NAN,
            iterations: 0,
            converged: false,
            residual: f64::NAN,
            error: None,
        };
        let psi = match random_pseudomethod(self.system.clone(), self.d, seed, self.k_period) {
            Ok(p) => p,
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        };
        let base = crate::linalg::lcm(self.splitting.orbit().period(), self.k_period);
        match find_shadowing_trajectory(&psi, &self.splitting, &self.params, base * self.window_multiple.max(1)) {
            Ok(sol) => {
                // independent measurement from the returned points
                let sup = shadowing_distance(&sol.trajectory, self.splitting.orbit());
                let residual = theta_s_residual(&psi, &sol.trajectory).max(sol.residual);
                row.sup_distance = sup;
                row.ratio = sup / self.d;
                row.iterations = sol.iterations;
                row.converged = sol.converged;
                row.residual = residual;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }

    /// Runs all seeds concurrently; rows come back in seed order.
    pub fn run(&self, seeds: &[u64]) -> Vec<ShadowRow> {
        seeds.par_iter().map(|&s| self.run_seed(s)).collect()
    }
}

/// Seeds `derive_seed(master, i)` for `i < count`.
pub fn campaign_seeds(master: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| derive_seed(master, i)).collect()
}

pub fn shadow_csv(rows: &[ShadowRow]) -> String {
    let mut s = String::from("seed,d,sup_distance,ratio,iterations,converged,residual\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.seed,
            fmt_f64(r.d),
            fmt_f64(r.sup_distance),
            fmt_f64(r.ratio),
            r.iterations,
            u8::from(r.converged),
            fmt_f64(r.residual)
        );
    }
    s
}

/// Largest ratio over converged rows; `None` when no row converged.
pub fn max_ratio(rows: &[ShadowRow]) -> Option<f64> {
    rows.iter().filter(|r| r.converged).map(|r| r.ratio).reduce(f64::max)
}

/// One random gluing instance: the orbit, mode and local maps with
/// `|ψ_j(v) - A_j v| ≤ cond1 bound` by construction.
#[derive(Clone, Debug)]
pub struct GlueTrial {
    pub trial: usize,
    pub orbit_period: usize,
    pub report: GluingReport,
}

/// Random local maps `ψ_j(v) = A_j v + s_j β u_j(v)` with unit fields `u_j`,
/// `s_j ∈ [1/2, 1]` and `β` the cond1 bound.
pub fn random_local_maps(orbit: &PeriodicOrbit, bound: f64, scale: f64, seed: u64) -> Vec<LocalMap> {
    (0..orbit.fundamental_period())
        .map(|j| {
            let mut rng = index_rng(seed, 1000 + j as u64);
            let s = 0.5 + 0.5 * rng.random::<f64>();
            let field = SmoothField::random(orbit.dim(), derive_seed(seed, j as u64)).with_scale(scale);
            let a = orbit.jacobian(j as i64).clone();
            LocalMap::Custom(Arc::new(move |v: &DVector<f64>| &a * v + field.eval(v) * (s * bound)))
        })
        .collect()
}

/// Glues `trials` random instances over the given orbits, alternating the
/// linear mode (`ε = b/4`, linear systems only) and the nonlinear mode
/// (`C = 8`), and samples each glued map at `samples` points.
pub fn run_glue_campaign(
    system: SharedSystem,
    orbits: &[PeriodicOrbit],
    trials: usize,
    samples: usize,
    master: u64,
) -> Result<Vec<GlueTrial>> {
    if orbits.is_empty() {
        return Err(Error::param("orbits", "need at least one orbit"));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(master, t as u64);
            let orbit = &orbits[t % orbits.len()];
            let b = orbit.chart_radius();
            let mut rng = index_rng(seed, 7);
            let fraction = 0.2 + 0.7 * rng.random::<f64>();
            let (mode, d) = if t % 2 == 0 && system.is_linear() {
                let eps = b / 4.0;
                (GluingMode::Linear { epsilon: eps }, fraction * eps / 2.0)
            } else {
                let mode = GluingMode::Nonlinear { c: 8.0 };
                (mode, fraction * admissible_defect(&system, orbit, b, mode, seed)?)
            };
            let gluer = Gluer::new(system.clone(), orbit.clone(), b, d, mode, seed)?;
            let locals = random_local_maps(orbit, gluer.cond1_bound(), b, seed);
            let map = gluer.glue(locals, 2000)?;
            Ok(GlueTrial {
                trial: t,
                orbit_period: orbit.period(),
                report: verify_glued(&map, seed, samples),
            })
        })
        .collect()
}

pub fn glue_csv(trials: &[GlueTrial]) -> String {
    let mut s = String::from(
        "trial,period,mode,b,d,rho_in,rho_out,sup_defect,inner_samples,inner_mismatches,outer_samples,outer_mismatches,continuity_ratio,passed\n",
    );
    for t in trials {
        let r = &t.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.trial,
            t.orbit_period,
            r.mode,
            fmt_f64(r.b),
            fmt_f64(r.d),
            fmt_f64(r.rho_in),
            fmt_f64(r.rho_out),
            fmt_f64(r.sup_defect),
            r.inner_samples,
            r.inner_mismatches,
            r.outer_samples,
            r.outer_mismatches,
            fmt_f64(r.continuity_worst_ratio),
            u8::from(r.passed())
        );
    }
    s
}
