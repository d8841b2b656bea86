//! Experiment configuration files.
//!
//! ```toml
//! seed = 42
//!
//! [system]
//! kind = "toral"          # toral | perturbed | rotation | linear
//! dim = 2
//! matrix = [2, 1, 1, 1]   # row-major; the cat map when omitted
//!
//! [orbit]
//! q = 2                   # grid denominator for toral systems
//! period = 3              # optional filter
//! index = 0
//!
//! [shadow]
//! d = [1e-4]
//! seeds = 200
//! ```
//!
//! Unknown keys are rejected; parse errors carry line and column.

use serde::Deserialize;

use nalgebra::{DMatrix, DVector};

use crate::adversary::{JordanDriftSpec, RotationDriftSpec};
use crate::error::{Error, Result};
use crate::orbit::{find_rational_periodic_orbits, PeriodicOrbit};
use crate::pseudomethod::shared;
use crate::system::{AffineCycleModel, PerturbedToralMap, SharedSystem, ToralAutomorphism};

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream derives from it.
    pub seed: Option<u64>,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub orbit: OrbitSelector,
    pub output: Option<OutputConfig>,
    pub orbits: Option<OrbitsConfig>,
    pub shadow: Option<ShadowConfig>,
    pub adversary: Option<AdversaryConfig>,
    pub glue: Option<GlueConfig>,
    pub hypconst: Option<HypconstConfig>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    #[default]
    Toral,
    Perturbed,
    Rotation,
    Linear,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub kind: SystemKind,
    pub dim: Option<usize>,
    /// Row-major entries; integers for toral systems.
    pub matrix: Option<Vec<f64>>,
    /// Shear strength `κ` of the perturbed map.
    pub strength: Option<f64>,
    /// Rotation angle.
    pub angle: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OrbitSelector {
    #[serde(default = "one_u32")]
    pub q: u32,
    pub period: Option<usize>,
    #[serde(default)]
    pub index: usize,
    /// Base point for non-toral systems (default: the origin).
    pub base: Option<Vec<f64>>,
}

impl Default for OrbitSelector {
    fn default() -> Self {
        Self {
            q: 1,
            period: None,
            index: 0,
            base: None,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OrbitsConfig {
    #[serde(default = "one_u32")]
    pub q_max: u32,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ShadowConfig {
    pub d: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_k_period")]
    pub k_period: usize,
    #[serde(default = "one_usize")]
    pub window_multiple: usize,
    /// Acceptance bound on `sup/d`; the plug-in estimate when omitted.
    pub lipschitz: Option<f64>,
    /// Overrides the plug-in `d_0`.
    pub d0: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub lemma: u8,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub d: Option<f64>,
    // rotation model
    pub m: Option<usize>,
    pub nu: Option<usize>,
    pub chi: Option<f64>,
    pub r: Option<Vec<f64>>,
    pub a_bar: Option<f64>,
    /// Bottom blocks as row-major square matrices, one per cycle point.
    pub bottom: Option<Vec<Vec<f64>>>,
    // Jordan model
    pub l: Option<usize>,
    pub theta: Option<f64>,
    pub w: Option<[f64; 2]>,
    pub lipschitz: Option<f64>,
    pub r_bar: Option<f64>,
    // rigid adversary
    pub e0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GlueConfig {
    #[serde(default = "default_glue_trials")]
    pub trials: usize,
    #[serde(default = "default_glue_samples")]
    pub samples: usize,
    #[serde(default = "default_q_max")]
    pub q_max: u32,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HypconstConfig {
    #[serde(default = "default_q_max")]
    pub q_max: u32,
}

impl AdversaryConfig {
    /// Section with only the construction chosen; everything else defaults.
    pub fn for_lemma(lemma: u8) -> Self {
        Self {
            lemma,
            trials: default_trials(),
            d: None,
            m: None,
            nu: None,
            chi: None,
            r: None,
            a_bar: None,
            bottom: None,
            l: None,
            theta: None,
            w: None,
            lipschitz: None,
            r_bar: None,
            e0: None,
        }
    }
}

impl Default for GlueConfig {
    fn default() -> Self {
        Self {
            trials: default_glue_trials(),
            samples: default_glue_samples(),
            q_max: default_q_max(),
        }
    }
}

impl Default for HypconstConfig {
    fn default() -> Self {
        Self { q_max: default_q_max() }
    }
}

fn one_u32() -> u32 {
    1
}
fn one_usize() -> usize {
    1
}
fn default_seeds() -> usize {
    200
}
fn default_k_period() -> usize {
    2
}
fn default_max_iterations() -> usize {
    200
}
fn default_trials() -> usize {
    100
}
fn default_glue_trials() -> usize {
    50
}
fn default_glue_samples() -> usize {
    10_000
}
fn default_q_max() -> u32 {
    3
}

/// A built system and, for toral systems, the automorphism whose rational
/// orbits can be enumerated.
#[derive(Clone, Debug)]
pub struct BuiltSystem {
    pub system: SharedSystem,
    pub toral: Option<ToralAutomorphism>,
    pub perturbed: bool,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Seed from the file, or `fallback` when absent.
    pub fn master_seed(&self, fallback: Option<u64>) -> Result<u64> {
        fallback
            .or(self.seed)
            .ok_or_else(|| Error::Config("a master seed is required (`seed = ...` or --seed)".into()))
    }

    /// Range checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        if self.orbit.q == 0 {
            return Err(Error::Config("orbit.q: must be at least 1".into()));
        }
        if let Some(s) = &self.shadow {
            if s.d.is_empty() || s.d.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return Err(Error::Config("shadow.d: need one or more positive values".into()));
            }
            if s.seeds == 0 || s.k_period == 0 || s.window_multiple == 0 || s.max_iterations == 0 {
                return Err(Error::Config(
                    "shadow: seeds, k_period, window_multiple and max_iterations must be positive".into(),
                ));
            }
            if let Some(l) = s.lipschitz {
                if !(l > 0.0 && l.is_finite()) {
                    return Err(Error::Config("shadow.lipschitz: must be positive".into()));
                }
            }
        }
        if let Some(a) = &self.adversary {
            if !(2..=4).contains(&a.lemma) {
                return Err(Error::Config(format!("adversary.lemma: must be 2, 3 or 4, got {}", a.lemma)));
            }
            if let Some(d) = a.d {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::Config("adversary.d: must be positive".into()));
                }
            }
        }
        if let Some(g) = &self.glue {
            if g.trials == 0 || g.samples == 0 || g.q_max == 0 {
                return Err(Error::Config("glue: trials, samples and q_max must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<BuiltSystem> {
        let s = &self.system;
        match s.kind {
            SystemKind::Toral | SystemKind::Perturbed => {
                let toral = match &s.matrix {
                    None => ToralAutomorphism::cat_map(),
                    Some(entries) => {
                        let dim = s.dim.unwrap_or_else(|| (entries.len() as f64).sqrt().round() as usize);
                        ToralAutomorphism::from_entries(dim, entries)?
                    }
                };
                if s.kind == SystemKind::Toral {
                    Ok(BuiltSystem {
                        system: shared(toral.clone()),
                        toral: Some(toral),
                        perturbed: false,
                    })
                } else {
                    let strength = s
                        .strength
                        .ok_or_else(|| Error::Config("system.strength: required for kind = \"perturbed\"".into()))?;
                    Ok(BuiltSystem {
                        system: shared(PerturbedToralMap::new(toral.clone(), strength)?),
                        toral: Some(toral),
                        perturbed: true,
                    })
                }
            }
            SystemKind::Rotation => {
                let angle = s
                    .angle
                    .ok_or_else(|| Error::Config("system.angle: required for kind = \"rotation\"".into()))?;
                Ok(BuiltSystem {
                    system: shared(AffineCycleModel::rotation(angle)),
                    toral: None,
                    perturbed: false,
                })
            }
            SystemKind::Linear => {
                let entries = s
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::Config("system.matrix: required for kind = \"linear\"".into()))?;
                let dim = s.dim.unwrap_or_else(|| (entries.len() as f64).sqrt().round() as usize);
                if dim * dim != entries.len() {
                    return Err(Error::Config(format!(
                        "system.matrix: expected {} entries for dim {dim}, got {}",
                        dim * dim,
                        entries.len()
                    )));
                }
                Ok(BuiltSystem {
                    system: shared(AffineCycleModel::linear(DMatrix::from_row_slice(dim, dim, entries))?),
                    toral: None,
                    perturbed: false,
                })
            }
        }
    }

    /// Periodic orbits for denominators `1..=q_max` (toral) or the single
    /// orbit through the selected base point.
    pub fn enumerate_orbits(&self, built: &BuiltSystem, q_max: u32) -> Result<Vec<PeriodicOrbit>> {
        match &built.toral {
            Some(toral) => {
                let mut out: Vec<PeriodicOrbit> = Vec::new();
                for q in 1..=q_max {
                    for orbit in orbits_for(built, toral, q)? {
                        if !out.iter().any(|o| same_cycle(o, &orbit)) {
                            out.push(orbit);
                        }
                    }
                }
                Ok(out)
            }
            None => Ok(vec![self.base_orbit(built)?]),
        }
    }

    /// The orbit chosen by `[orbit]`.
    pub fn select_orbit(&self, built: &BuiltSystem) -> Result<PeriodicOrbit> {
        let sel = &self.orbit;
        match &built.toral {
            Some(toral) => {
                let candidates: Vec<_> = orbits_for(built, toral, sel.q)?
                    .into_iter()
                    .filter(|o| sel.period.is_none_or(|p| o.period() == p))
                    .collect();
                let count = candidates.len();
                candidates.into_iter().nth(sel.index).ok_or_else(|| {
                    Error::Config(format!("orbit: index {} out of range ({count} matching orbits)", sel.index))
                })
            }
            None => self.base_orbit(built),
        }
    }

    fn base_orbit(&self, built: &BuiltSystem) -> Result<PeriodicOrbit> {
        let n = built.system.dim();
        let base = match &self.orbit.base {
            Some(b) => DVector::from_column_slice(b),
            None => DVector::zeros(n),
        };
        PeriodicOrbit::from_system(built.system.as_ref(), &base, self.orbit.period.unwrap_or(1))
    }
}

fn orbits_for(built: &BuiltSystem, toral: &ToralAutomorphism, q: u32) -> Result<Vec<PeriodicOrbit>> {
    let orbits = find_rational_periodic_orbits(toral, q)?;
    if !built.perturbed {
        return Ok(orbits);
    }
    // rational orbits on the invariant circles x_1 ∈ {0, 1/2}
    orbits
        .into_iter()
        .filter(|o| o.points().iter().all(|p| p[1] == 0.0 || p[1] == 0.5))
        .map(|o| PeriodicOrbit::from_system(built.system.as_ref(), o.base(), o.period()))
        .collect()
}

fn same_cycle(a: &PeriodicOrbit, b: &PeriodicOrbit) -> bool {
    a.period() == b.period() && a.points().iter().any(|p| p == b.base())
}

impl AdversaryConfig {
    pub fn rotation_spec(&self) -> Result<RotationDriftSpec> {
        let m = self.m.unwrap_or(1);
        let nu = self.nu.unwrap_or(1);
        let chi = self.chi.unwrap_or(0.0);
        let r = self.r.clone().unwrap_or_else(|| vec![1.0; m]);
        let mut spec = RotationDriftSpec::new(m, nu, chi, r);
        if let Some(a) = self.a_bar {
            spec.a_bar = a;
        }
        if let Some(blocks) = &self.bottom {
            spec.bottom = blocks
                .iter()
                .map(|entries| {
                    let k = (entries.len() as f64).sqrt().round() as usize;
                    if k * k != entries.len() {
                        return Err(Error::Config("adversary.bottom: blocks must be square".into()));
                    }
                    Ok(DMatrix::from_row_slice(k, k, entries))
                })
                .collect::<Result<_>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn jordan_spec(&self) -> Result<JordanDriftSpec> {
        let l = self.lipschitz.unwrap_or(10.0);
        if !(l >= 1.0 && l.fract() == 0.0 && l <= f64::from(u32::MAX)) {
            return Err(Error::Config(format!("adversary.lipschitz: must be a positive integer, got {l}")));
        }
        let mut spec = JordanDriftSpec::new(self.l.unwrap_or(1), self.theta.unwrap_or(std::f64::consts::FRAC_PI_2), l as u32);
        if let Some(w) = self.w {
            spec.w = w;
        }
        if let Some(r) = self.r_bar {
            spec.r_bar = r;
        }
        Ok(spec)
    }
}
