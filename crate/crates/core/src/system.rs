//! Concrete invertible maps on the model spaces.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::space::{ModelSpace, Point};

/// A smooth invertible map with analytic Jacobian.
pub trait DiscreteSystem: Send + Sync + fmt::Debug {
    fn space(&self) -> ModelSpace;

    fn eval(&self, x: &Point) -> Point;

    fn eval_inverse(&self, y: &Point) -> Point;

    fn jacobian(&self, x: &Point) -> DMatrix<f64>;

    /// True when the map is affine in every chart around its cycle points.
    fn is_linear(&self) -> bool {
        false
    }

    fn dim(&self) -> usize {
        self.space().dim()
    }
}

pub type SharedSystem = Arc<dyn DiscreteSystem>;

/// Linear automorphism of the flat torus given by a unimodular integer matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ToralAutomorphism {
    dim: usize,
    entries: Vec<i64>,
    inverse_entries: Vec<i64>,
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl ToralAutomorphism {
    /// Builds the automorphism from row-major entries; rejects non-integer or
    /// non-unimodular matrices.
    pub fn from_entries(dim: usize, entries: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let mut ints = Vec::with_capacity(entries.len());
        for (index, &value) in entries.iter().enumerate() {
            if !value.is_finite() || value.fract() != 0.0 || value.abs() > 1e9 {
                return Err(Error::NonIntegerMatrix { index, value });
            }
            ints.push(value as i64);
        }
        let matrix = DMatrix::from_row_slice(dim, dim, entries);
        let det = matrix.determinant();
        if (det.abs() - 1.0).abs() > 1e-6 {
            return Err(Error::NotUnimodular { det });
        }
        let inverse_f = matrix.clone().try_inverse().ok_or(Error::Singular)?;
        let inverse_entries: Vec<i64> = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| inverse_f[(i, j)].round() as i64)
            .collect();
        // exact integer check of M * M^{-1} = I
        for i in 0..dim {
            for j in 0..dim {
                let s: i64 = (0..dim)
                    .map(|l| ints[i * dim + l] * inverse_entries[l * dim + j])
                    .sum();
                if s != i64::from(i == j) {
                    return Err(Error::NotUnimodular { det });
                }
            }
        }
        let inverse = DMatrix::from_fn(dim, dim, |i, j| inverse_entries[i * dim + j] as f64);
        Ok(Self {
            dim,
            entries: ints,
            inverse_entries,
            matrix,
            inverse,
        })
    }

    pub fn from_integer_rows(dim: usize, entries: &[i64]) -> Result<Self> {
        let as_f: Vec<f64> = entries.iter().map(|&e| e as f64).collect();
        Self::from_entries(dim, &as_f)
    }

    /// Arnold's cat map, rows (2, 1) and (1, 1).
    pub fn cat_map() -> Self {
        Self::from_integer_rows(2, &[2, 1, 1, 1]).expect("cat map is unimodular")
    }

    pub fn identity(dim: usize) -> Self {
        let entries: Vec<i64> = (0..dim * dim)
            .map(|i| i64::from(i / dim == i % dim))
            .collect();
        Self::from_integer_rows(dim, &entries).expect("identity is unimodular")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn integer_entries(&self) -> &[i64] {
        &self.entries
    }

    /// Applies the matrix to an integer grid index modulo `q`.
    pub fn apply_grid(&self, index: &[i64], q: i64) -> Vec<i64> {
        (0..self.dim)
            .map(|i| {
                let s: i64 = (0..self.dim)
                    .map(|j| self.entries[i * self.dim + j] * index[j])
                    .sum();
                s.rem_euclid(q)
            })
            .collect()
    }

    pub fn apply_grid_inverse(&self, index: &[i64], q: i64) -> Vec<i64> {
        (0..self.dim)
            .map(|i| {
                let s: i64 = (0..self.dim)
                    .map(|j| self.inverse_entries[i * self.dim + j] * index[j])
                    .sum();
                s.rem_euclid(q)
            })
            .collect()
    }
}

impl DiscreteSystem for ToralAutomorphism {
    fn space(&self) -> ModelSpace {
        ModelSpace::torus(self.dim)
    }

    fn eval(&self, x: &Point) -> Point {
        self.space().wrap(&(&self.matrix * x))
    }

    fn eval_inverse(&self, y: &Point) -> Point {
        self.space().wrap(&(&self.inverse * y))
    }

    fn jacobian(&self, _x: &Point) -> DMatrix<f64> {
        self.matrix.clone()
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// A toral automorphism composed with the shear
/// `x_0 ↦ x_0 + κ/(2π) sin(2π x_1)`.
///
/// The shear fixes every point with `x_1 ∈ {0, 1/2}`, so rational orbits of the
/// base automorphism supported there survive the perturbation.
#[derive(Clone, Debug)]
pub struct PerturbedToralMap {
    base: ToralAutomorphism,
    strength: f64,
}

impl PerturbedToralMap {
    pub fn new(base: ToralAutomorphism, strength: f64) -> Result<Self> {
        if base.dim < 2 {
            return Err(Error::param("dim", "shear perturbation needs dimension >= 2"));
        }
        if !strength.is_finite() || strength.abs() >= 1.0 {
            return Err(Error::param("perturbation", "|κ| must be below 1 to keep the shear invertible"));
        }
        Ok(Self { base, strength })
    }

    pub fn base(&self) -> &ToralAutomorphism {
        &self.base
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    fn shear(&self, x: &Point) -> Point {
        let mut y = x.clone();
        y[0] += self.strength / TAU * (TAU * x[1]).sin();
        y
    }
}

impl DiscreteSystem for PerturbedToralMap {
    fn space(&self) -> ModelSpace {
        self.base.space()
    }

    fn eval(&self, x: &Point) -> Point {
        self.space().wrap(&(self.base.matrix() * self.shear(x)))
    }

    fn eval_inverse(&self, y: &Point) -> Point {
        let mut x = self.base.inverse_matrix() * y;
        x[0] -= self.strength / TAU * (TAU * x[1]).sin();
        self.space().wrap(&x)
    }

    fn jacobian(&self, x: &Point) -> DMatrix<f64> {
        let mut shear = DMatrix::identity(self.dim(), self.dim());
        shear[(0, 1)] = self.strength * (TAU * x[1]).cos();
        self.base.matrix() * shear
    }

    fn is_linear(&self) -> bool {
        self.strength == 0.0
    }
}

/// Piecewise-affine Euclidean model that is affine near each point of a
/// designated cycle: on the cell of points nearest to `p_j` it acts as
/// `x ↦ p_{j+1} + A_j (x - p_j)`.
///
/// With a single cycle point at the origin this is the global linear map `A_0`.
#[derive(Clone, Debug)]
pub struct AffineCycleModel {
    dim: usize,
    points: Vec<Point>,
    matrices: Vec<DMatrix<f64>>,
    inverses: Vec<DMatrix<f64>>,
}

impl AffineCycleModel {
    pub fn new(points: Vec<Point>, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if points.is_empty() || points.len() != matrices.len() {
            return Err(Error::param(
                "cycle",
                "need one matrix per cycle point and at least one point",
            ));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        let mut inverses = Vec::with_capacity(matrices.len());
        for (p, a) in points.iter().zip(&matrices) {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: a.nrows() });
            }
            inverses.push(a.clone().try_inverse().ok_or(Error::Singular)?);
        }
        for i in 0..points.len() {
            for j in 0..i {
                if (&points[i] - &points[j]).norm() == 0.0 {
                    return Err(Error::param("cycle", "cycle points must be distinct"));
                }
            }
        }
        Ok(Self {
            dim,
            points,
            matrices,
            inverses,
        })
    }

    /// Global linear map `x ↦ A x` with the origin as fixed point.
    pub fn linear(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        Self::new(vec![DVector::zeros(n)], vec![matrix])
    }

    /// Planar rotation by `angle`.
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::linear(DMatrix::from_row_slice(2, 2, &[c, -s, s, c])).expect("rotations are invertible")
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    fn nearest(&self, x: &Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (x - p).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

impl DiscreteSystem for AffineCycleModel {
    fn space(&self) -> ModelSpace {
        ModelSpace::euclidean(self.dim)
    }

    fn eval(&self, x: &Point) -> Point {
        let m = self.points.len();
        let j = self.nearest(x);
        &self.points[(j + 1) % m] + &self.matrices[j] * (x - &self.points[j])
    }

    fn eval_inverse(&self, y: &Point) -> Point {
        let m = self.points.len();
        let i = self.nearest(y);
        let j = (i + m - 1) % m;
        &self.points[j] + &self.inverses[j] * (y - &self.points[i])
    }

    fn jacobian(&self, x: &Point) -> DMatrix<f64> {
        self.matrices[self.nearest(x)].clone()
    }

    fn is_linear(&self) -> bool {
        true
    }
}
