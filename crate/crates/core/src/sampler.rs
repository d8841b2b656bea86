//! Deterministic, index-addressable point samplers.
//!
//! Sample `i` depends only on `(seed, i)`, so the first `n` samples of a
//! sampler are always a prefix of the first `n + 1`. Suprema measured over
//! growing counts are therefore monotone.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::orbit::PeriodicOrbit;
use crate::space::{ModelSpace, Point};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th independent stream derived from `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub(crate) fn index_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    r
}

fn halton(index: u64, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |i, _| {
        let base = PRIMES[i % PRIMES.len()];
        // scramble higher dimensions with an offset so bases repeat less visibly
        radical_inverse(index + 1 + (i / PRIMES.len()) as u64 * 7919, base)
    })
}

pub(crate) fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Samples vectors in a closed ball around the origin: three quarters fill the
/// ball with a low-discrepancy radial profile, one quarter lie exactly on the
/// listed ring radii (or the boundary sphere when none are given).
#[derive(Clone, Debug)]
pub struct BallSampler {
    dim: usize,
    radius: f64,
    rings: Vec<f64>,
    seed: u64,
}

impl BallSampler {
    pub fn new(dim: usize, radius: f64, seed: u64) -> Self {
        Self {
            dim,
            radius,
            rings: Vec::new(),
            seed,
        }
    }

    pub fn with_rings(mut self, rings: &[f64]) -> Self {
        self.rings = rings.iter().copied().filter(|r| *r <= self.radius && *r >= 0.0).collect();
        self
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn point(&self, i: u64) -> DVector<f64> {
        let mut rng = index_rng(self.seed, i);
        let dir = unit_direction(&mut rng, self.dim);
        let r = if i % 4 == 3 {
            if self.rings.is_empty() {
                self.radius
            } else {
                self.rings[((i / 4) as usize) % self.rings.len()]
            }
        } else {
            let u = radical_inverse(i - i / 4 + 1, 2);
            self.radius * u.powf(1.0 / self.dim as f64)
        };
        dir * r
    }

    pub fn points(&self, count: usize) -> Vec<DVector<f64>> {
        (0..count as u64).map(|i| self.point(i)).collect()
    }
}

#[derive(Clone, Debug)]
struct Anchor {
    center: Point,
    ball: BallSampler,
}

/// Samples points of a model space: a Halton sequence over the whole space
/// (the unit cube on the torus, `[-extent, extent]^n` on Euclidean space),
/// interleaved with ball samples around anchor points.
#[derive(Clone, Debug)]
pub struct SpaceSampler {
    space: ModelSpace,
    seed: u64,
    extent: f64,
    anchors: Vec<Anchor>,
}

impl SpaceSampler {
    pub fn new(space: ModelSpace, seed: u64) -> Self {
        Self {
            space,
            seed,
            extent: 1.0,
            anchors: Vec::new(),
        }
    }

    /// Half-width of the global box on Euclidean space.
    pub fn with_extent(mut self, extent: f64) -> Self {
        self.extent = extent;
        self
    }

    pub fn with_anchor(mut self, center: Point, radius: f64, rings: &[f64]) -> Self {
        let idx = self.anchors.len() as u64;
        let ball = BallSampler::new(self.space.dim(), radius, derive_seed(self.seed, 1 << 32 | idx)).with_rings(rings);
        self.anchors.push(Anchor { center, ball });
        self
    }

    /// Anchors a ball of `radius` at every distinct cycle point of `orbit`.
    pub fn around_orbit(mut self, orbit: &PeriodicOrbit, radius: f64, rings: &[f64]) -> Self {
        for p in &orbit.points()[..orbit.fundamental_period()] {
            self = self.with_anchor(p.clone(), radius, rings);
        }
        self
    }

    pub fn space(&self) -> ModelSpace {
        self.space
    }

    pub fn point(&self, i: u64) -> Point {
        let slots = self.anchors.len() as u64 + 1;
        let slot = i % slots;
        let j = i / slots;
        if slot == 0 {
            let h = halton(j, self.space.dim());
            if self.space.is_torus() {
                h
            } else {
                h.map(|c| (2.0 * c - 1.0) * self.extent)
            }
        } else {
            let anchor = &self.anchors[(slot - 1) as usize];
            self.space.exp(&anchor.center, &anchor.ball.point(j))
        }
    }

    pub fn points(&self, count: usize) -> Vec<Point> {
        (0..count as u64).map(|i| self.point(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_eq!(radical_inverse(1, 3), 1.0 / 3.0);
    }

    #[test]
    fn ball_samples_stay_in_ball_and_hit_rings() {
        let s = BallSampler::new(3, 0.5, 7).with_rings(&[0.1, 0.5]);
        let pts = s.points(400);
        assert!(pts.iter().all(|p| p.norm() <= 0.5 + 1e-15));
        assert!(pts.iter().any(|p| (p.norm() - 0.1).abs() < 1e-15));
        assert!(pts.iter().any(|p| (p.norm() - 0.5).abs() < 1e-15));
    }

    #[test]
    fn samples_are_prefix_stable_and_deterministic() {
        let space = ModelSpace::torus(2);
        let s = SpaceSampler::new(space, 3).with_anchor(DVector::zeros(2), 0.1, &[0.05]);
        let a = s.points(50);
        let b = s.points(80);
        assert_eq!(&b[..50], &a[..]);
        let again = SpaceSampler::new(space, 3).with_anchor(DVector::zeros(2), 0.1, &[0.05]);
        assert_eq!(again.points(50), a);
        assert!(a.iter().all(|p| p.iter().all(|c| (0.0..1.0).contains(c))));
    }
}
