//! Fixed-capacity dense matrices and vectors for dimensions 1 to 3.
//!
//! Hot loops (products, row actions) run on stack storage; anything that
//! needs a decomposition goes through `nalgebra`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;

/// A vector in `R^d`, `d <= 3`. Used both as a row vector (`x` in `xM`) and
/// as a column vector (`Q`, `R`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector {
    dim: usize,
    v: [f64; MAX_DIM],
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Self { dim, v: [0.0; MAX_DIM] }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut out = Self::zeros(values.len());
        out.v[..values.len()].copy_from_slice(values);
        out
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut out = Self::zeros(dim);
        out.v[i] = 1.0;
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.v[..self.dim]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.v[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: f64) {
        self.v[i] = value;
    }

    #[inline]
    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for i in 0..self.dim {
            s += self.v[i] * other.v[i];
        }
        s
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        match self.dim {
            1 => self.v[0].abs(),
            2 => self.v[0].hypot(self.v[1]),
            _ => self.dot(self).sqrt(),
        }
    }

    #[inline]
    pub fn scale(&self, c: f64) -> Vector {
        let mut out = *self;
        for i in 0..self.dim {
            out.v[i] *= c;
        }
        out
    }

    #[inline]
    pub fn add(&self, other: &Vector) -> Vector {
        let mut out = *self;
        for i in 0..self.dim {
            out.v[i] += other.v[i];
        }
        out
    }

    #[inline]
    pub fn sub(&self, other: &Vector) -> Vector {
        self.add(&other.neg())
    }

    #[inline]
    pub fn neg(&self) -> Vector {
        let mut out = *self;
        for i in 0..self.dim {
            out.v[i] = -out.v[i];
        }
        out
    }

    /// `self += c * other`
    #[inline]
    pub fn axpy(&mut self, c: f64, other: &Vector) {
        for i in 0..self.dim {
            self.v[i] += c * other.v[i];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    pub fn cross(&self, other: &Vector) -> Vector {
        assert_eq!(self.dim, 3);
        let (a, b) = (&self.v, &other.v);
        Vector::from_slice(&[
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ])
    }
}

impl Serialize for Vector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(serde::de::Error::custom(format!(
                "vector must have 1 to {MAX_DIM} entries, got {}",
                v.len()
            )));
        }
        Ok(Vector::from_slice(&v))
    }
}

/// A `d x d` matrix, `d <= 3`, stored row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    dim: usize,
    a: [f64; MAX_DIM * MAX_DIM],
}

impl Mat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Self {
            dim,
            a: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, c: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, c);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let d = rows.len();
        if !(1..=MAX_DIM).contains(&d) || rows.iter().any(|r| r.len() != d) {
            return None;
        }
        let mut m = Self::zeros(d);
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                m.set(i, j, x);
            }
        }
        Some(m)
    }

    /// Counter-clockwise rotation of the plane, acting on row vectors:
    /// `(1, 0) * rotation(θ) = (cos θ, sin θ)`.
    pub fn rotation2(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::from_rows(&[vec![c, s], vec![-s, c]]).unwrap()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * MAX_DIM + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.a[i * MAX_DIM + j] = x;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Row-vector action `x M`.
    #[inline]
    pub fn row_action(&self, x: &Vector) -> Vector {
        let d = self.dim;
        let mut out = Vector::zeros(d);
        for j in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                s += x.v[i] * self.a[i * MAX_DIM + j];
            }
            out.v[j] = s;
        }
        out
    }

    /// Column action `M v`.
    #[inline]
    pub fn apply(&self, v: &Vector) -> Vector {
        let d = self.dim;
        let mut out = Vector::zeros(d);
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.a[i * MAX_DIM + j] * v.v[j];
            }
            out.v[i] = s;
        }
        out
    }

    #[inline]
    pub fn mul(&self, other: &Mat) -> Mat {
        let d = self.dim;
        let mut out = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += self.a[i * MAX_DIM + k] * other.a[k * MAX_DIM + j];
                }
                out.a[i * MAX_DIM + j] = s;
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Mat {
        let mut out = *self;
        out.a.iter_mut().for_each(|x| *x *= c);
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        let mut out = *self;
        for (x, y) in out.a.iter_mut().zip(other.a.iter()) {
            *x += y;
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|x| x.is_finite())
    }

    pub fn det(&self) -> f64 {
        let g = |i, j| self.get(i, j);
        match self.dim {
            1 => g(0, 0),
            2 => g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0),
            _ => {
                g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                    + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
            }
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Mat {
        let d = m.nrows();
        let mut out = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.set(i, j, m[(i, j)]);
            }
        }
        out
    }

    /// Singular values in decreasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        if self.dim == 1 {
            return vec![self.get(0, 0).abs()];
        }
        let mut s: Vec<f64> = if self.dim == 2 {
            let m = nalgebra::Matrix2::from_fn(|i, j| self.get(i, j));
            m.singular_values().iter().copied().collect()
        } else {
            let m = nalgebra::Matrix3::from_fn(|i, j| self.get(i, j));
            m.singular_values().iter().copied().collect()
        };
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Operator norm `sup_{|x|=1} |xM|`.
    pub fn operator_norm(&self) -> f64 {
        self.singular_values()[0]
    }

    /// `inf_{|x|=1} |xM|`, the square root of the smallest eigenvalue of `M Mᵀ`.
    pub fn min_singular(&self) -> f64 {
        *self.singular_values().last().unwrap()
    }

    pub fn condition_number(&self) -> f64 {
        let s = self.singular_values();
        let lo = *s.last().unwrap();
        if lo == 0.0 {
            f64::INFINITY
        } else {
            s[0] / lo
        }
    }
}

impl Serialize for Mat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Mat::from_rows(&rows)
            .ok_or_else(|| serde::de::Error::custom(format!("matrix must be square with 1 to {MAX_DIM} rows")))
    }
}
