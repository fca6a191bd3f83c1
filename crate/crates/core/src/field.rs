//! Periodic coefficient fields represented as finite trigonometric polynomials.
//!
//! A field evaluates `Σ cos_k·cos(2π m_k·(x⊘τ)) + sin_k·sin(2π m_k·(x⊘τ))` where the
//! reduced coordinate `x_i/τ_i` is taken modulo one before the phase is formed, so
//! evaluation is τ-periodic to rounding. Matrix fields store only the upper triangle,
//! which makes every evaluation symmetric.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Period vector τ, one positive length per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Period(Vec<f64>);

impl Period {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::Dimension("period must have at least one axis".into()));
        }
        if let Some(bad) = tau.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::Config(format!("period components must be positive, got {bad}")));
        }
        Ok(Self(tau))
    }

    /// The unit period in dimension `d`.
    pub fn unit(d: usize) -> Self {
        Self(vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Period with every component multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|t| t * factor).collect())
    }
}

/// Value shape of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    /// Symmetric `d×d` matrix, packed upper triangle.
    Matrix(usize),
}

impl Shape {
    /// Number of stored components.
    pub fn packed_len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(d) => d,
            Shape::Matrix(d) => d * (d + 1) / 2,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Shape::Scalar => "scalar".into(),
            Shape::Vector(d) => format!("vector({d})"),
            Shape::Matrix(d) => format!("matrix({d}x{d})"),
        }
    }
}

/// Index of entry `(i, j)` in the packed upper triangle of a `d×d` symmetric matrix.
#[inline]
pub fn packed_index(d: usize, i: usize, j: usize) -> usize {
    let (r, c) = if i <= j { (i, j) } else { (j, i) };
    r * d - r * (r + 1) / 2 + c
}

/// One trigonometric term with packed coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub freq: Vec<i32>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Term {
    pub fn scalar(freq: Vec<i32>, cos: f64, sin: f64) -> Self {
        Self { freq, cos: vec![cos], sin: vec![sin] }
    }

    pub fn vector(freq: Vec<i32>, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        Self { freq, cos, sin }
    }

    /// Matrix term from full matrices; both must be symmetric.
    pub fn matrix(freq: Vec<i32>, cos: &DMatrix<f64>, sin: &DMatrix<f64>) -> Result<Self> {
        Ok(Self { freq, cos: pack_symmetric(cos)?, sin: pack_symmetric(sin)? })
    }

    /// Diagonal matrix term.
    pub fn diagonal(freq: Vec<i32>, cos: &[f64], sin: &[f64]) -> Self {
        let d = cos.len();
        let mut c = vec![0.0; d * (d + 1) / 2];
        let mut s = c.clone();
        for i in 0..d {
            c[packed_index(d, i, i)] = cos[i];
            s[packed_index(d, i, i)] = sin[i];
        }
        Self { freq, cos: c, sin: s }
    }

    fn is_zero_frequency(&self) -> bool {
        self.freq.iter().all(|&m| m == 0)
    }
}

fn pack_symmetric(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::ShapeMismatch { expected: "square matrix".into(), found: format!("{}x{}", d, m.ncols()) });
    }
    let mut out = vec![0.0; d * (d + 1) / 2];
    for i in 0..d {
        for j in i..d {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()) {
                return Err(Error::Validation {
                    condition: crate::error::Condition::DiffusionPsd,
                    detail: format!("matrix coefficient not symmetric at ({i},{j})"),
                });
            }
            out[packed_index(d, i, j)] = m[(i, j)];
        }
    }
    Ok(out)
}

/// Evaluated field value.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Scalar(f64),
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

/// Exactly periodic field given by a finite trigonometric polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicField {
    shape: Shape,
    period: Period,
    terms: Vec<Term>,
}

impl PeriodicField {
    pub fn new(shape: Shape, period: Period, terms: Vec<Term>) -> Result<Self> {
        let d = period.dim();
        match shape {
            Shape::Vector(k) | Shape::Matrix(k) if k != d => {
                return Err(Error::Dimension(format!("{} field on a {d}-dimensional period", shape.name())));
            }
            _ => {}
        }
        for t in &terms {
            if t.freq.len() != d {
                return Err(Error::Dimension(format!("frequency {:?} has length {}, expected {d}", t.freq, t.freq.len())));
            }
            if t.cos.len() != shape.packed_len() || t.sin.len() != shape.packed_len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} coefficients for {}", shape.packed_len(), shape.name()),
                    found: format!("{}/{}", t.cos.len(), t.sin.len()),
                });
            }
            if t.cos.iter().chain(&t.sin).any(|v| !v.is_finite()) {
                return Err(Error::Config("non-finite field coefficient".into()));
            }
        }
        Ok(Self { shape, period, terms })
    }

    pub fn zero(shape: Shape, period: Period) -> Self {
        Self { shape, period, terms: Vec::new() }
    }

    pub fn constant_scalar(period: Period, value: f64) -> Self {
        let d = period.dim();
        Self { shape: Shape::Scalar, period, terms: vec![Term::scalar(vec![0; d], value, 0.0)] }
    }

    pub fn constant_vector(period: Period, value: &[f64]) -> Result<Self> {
        let d = period.dim();
        Self::new(Shape::Vector(d), period, vec![Term::vector(vec![0; d], value.to_vec(), vec![0.0; d])])
    }

    pub fn constant_matrix(period: Period, value: &DMatrix<f64>) -> Result<Self> {
        let d = period.dim();
        let zero = DMatrix::zeros(d, d);
        Self::new(Shape::Matrix(d), period, vec![Term::matrix(vec![0; d], value, &zero)?])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn period(&self) -> &Period {
        &self.period
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.period.dim()
    }

    /// True if no term with nonzero frequency carries a nonzero coefficient.
    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.is_zero_frequency() || t.cos.iter().chain(&t.sin).all(|&v| v == 0.0))
    }

    pub fn is_identically_zero(&self) -> bool {
        self.terms.iter().all(|t| {
            if t.is_zero_frequency() {
                t.cos.iter().all(|&v| v == 0.0)
            } else {
                t.cos.iter().chain(&t.sin).all(|&v| v == 0.0)
            }
        })
    }

    /// For matrix fields: true if every off-diagonal coefficient is zero.
    pub fn is_diagonal(&self) -> bool {
        let Shape::Matrix(d) = self.shape else { return false };
        self.terms.iter().all(|t| {
            (0..d).all(|i| {
                (i + 1..d).all(|j| {
                    let k = packed_index(d, i, j);
                    t.cos[k] == 0.0 && t.sin[k] == 0.0
                })
            })
        })
    }

    /// Evaluate into the packed component buffer (length `shape.packed_len()`).
    #[inline]
    pub fn eval_packed(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let tau = self.period.as_slice();
        for t in &self.terms {
            if t.is_zero_frequency() {
                for (o, c) in out.iter_mut().zip(&t.cos) {
                    *o += c;
                }
                continue;
            }
            let mut phase = 0.0;
            for ((&m, &xi), &ti) in t.freq.iter().zip(x).zip(tau) {
                if m != 0 {
                    phase += m as f64 * (xi / ti).rem_euclid(1.0);
                }
            }
            let (s, c) = (TAU * phase.rem_euclid(1.0)).sin_cos();
            for ((o, a), b) in out.iter_mut().zip(&t.cos).zip(&t.sin) {
                *o += a * c + b * s;
            }
        }
    }

    /// Scalar evaluation without a shape check; callers guarantee a scalar field.
    #[inline]
    pub(crate) fn eval_scalar_unchecked(&self, x: &[f64]) -> f64 {
        let mut out = [0.0];
        self.eval_packed(x, &mut out);
        out[0]
    }

    pub fn eval(&self, x: &[f64]) -> FieldValue {
        let mut buf = vec![0.0; self.shape.packed_len()];
        self.eval_packed(x, &mut buf);
        match self.shape {
            Shape::Scalar => FieldValue::Scalar(buf[0]),
            Shape::Vector(_) => FieldValue::Vector(DVector::from_vec(buf)),
            Shape::Matrix(d) => FieldValue::Matrix(unpack_symmetric(d, &buf)),
        }
    }

    pub fn eval_scalar(&self, x: &[f64]) -> Result<f64> {
        self.expect_shape(Shape::Scalar)?;
        Ok(self.eval_scalar_unchecked(x))
    }

    pub fn eval_vector(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.expect_shape(Shape::Vector(self.dim()))?;
        match self.eval(x) {
            FieldValue::Vector(v) => Ok(v),
            _ => unreachable!(),
        }
    }

    pub fn eval_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.expect_shape(Shape::Matrix(self.dim()))?;
        match self.eval(x) {
            FieldValue::Matrix(m) => Ok(m),
            _ => unreachable!(),
        }
    }

    fn expect_shape(&self, want: Shape) -> Result<()> {
        if self.shape != want {
            return Err(Error::ShapeMismatch { expected: want.name(), found: self.shape.name() });
        }
        Ok(())
    }

    /// The field `x ↦ factor·f(x/eps)`, which has period `eps·τ`.
    pub fn rescaled(&self, eps: f64, factor: f64) -> Self {
        Self {
            shape: self.shape,
            period: self.period.scaled(eps),
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    freq: t.freq.clone(),
                    cos: t.cos.iter().map(|v| v * factor).collect(),
                    sin: t.sin.iter().map(|v| v * factor).collect(),
                })
                .collect(),
        }
    }

    /// Same coefficients multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        self.rescaled(1.0, factor).with_period(self.period.clone())
    }

    fn with_period(mut self, period: Period) -> Self {
        self.period = period;
        self
    }
}

pub fn unpack_symmetric(d: usize, packed: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| packed[packed_index(d, i, j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine_1d() -> PeriodicField {
        // 2 + sin(2πx)
        PeriodicField::new(
            Shape::Scalar,
            Period::unit(1),
            vec![Term::scalar(vec![0], 2.0, 0.0), Term::scalar(vec![1], 0.0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn constant_field() {
        let f = PeriodicField::constant_scalar(Period::unit(2), 5.0);
        assert_eq!(f.eval_scalar(&[0.3, -7.1]).unwrap(), 5.0);
        assert!(f.is_constant());
    }

    #[test]
    fn quarter_period() {
        let tau = 3.0;
        let f = PeriodicField::new(
            Shape::Scalar,
            Period::new(vec![tau]).unwrap(),
            vec![Term::scalar(vec![1], 0.0, 1.0)],
        )
        .unwrap();
        assert!((f.eval_scalar(&[tau / 4.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sine_against_libm() {
        let v = sine_1d().eval_scalar(&[0.3]).unwrap();
        let expected = 2.0 + (0.6 * std::f64::consts::PI).sin();
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let f = sine_1d();
        assert!(matches!(f.eval_vector(&[0.1]), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(f.eval_matrix(&[0.1]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Term::matrix(vec![0, 0], &m, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn matrix_is_symmetric() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.1, 0.5]);
        let f = PeriodicField::new(
            Shape::Matrix(2),
            Period::unit(2),
            vec![Term::matrix(vec![1, -2], &c, &s).unwrap()],
        )
        .unwrap();
        let m = f.eval_matrix(&[0.17, 0.82]).unwrap();
        assert_eq!(m, m.transpose());
        assert!(!f.is_diagonal());
    }

    #[test]
    fn rescaled_matches_composition() {
        let f = sine_1d();
        let g = f.rescaled(0.5, 3.0);
        let x = 0.123;
        assert!((g.eval_scalar(&[x]).unwrap() - 3.0 * f.eval_scalar(&[x / 0.5]).unwrap()).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn periodic_under_integer_shifts(
            x in prop::collection::vec(-50.0f64..50.0, 2),
            k in prop::collection::vec(-20i32..20, 2),
            a in -3.0f64..3.0, b in -3.0f64..3.0,
        ) {
            let period = Period::new(vec![1.0, 2.5]).unwrap();
            let f = PeriodicField::new(
                Shape::Scalar,
                period.clone(),
                vec![
                    Term::scalar(vec![0, 0], 1.0, 0.0),
                    Term::scalar(vec![1, 0], a, b),
                    Term::scalar(vec![2, -3], b, a),
                ],
            ).unwrap();
            let shifted: Vec<f64> = x.iter().zip(&k).zip(period.as_slice())
                .map(|((xi, ki), ti)| xi + *ki as f64 * ti).collect();
            let v0 = f.eval_scalar(&x).unwrap();
            let v1 = f.eval_scalar(&shifted).unwrap();
            prop_assert!((v0 - v1).abs() <= 1e-12 * (1.0 + v0.abs()));
        }
    }
}
