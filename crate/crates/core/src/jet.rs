//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] holds the Taylor coefficients of a scalar function of up to
//! [`MAX_DIM`] variables through total order [`MAX_ORDER`]. Coefficients are
//! stored densely in graded order (total degree first, then exponents in
//! descending lexicographic order) and in Taylor form, i.e. the partial
//! derivative divided by the multi-index factorial. Multiplication is then a
//! plain truncated convolution.
//!
//! Univariate functions (`ln`, `exp`, `sqrt`, reciprocal, constant powers) are
//! applied by composing their Taylor series at the jet value with the
//! nilpotent part of the jet, which is Faà di Bruno's formula in disguise.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use crate::scalar::Real;

pub const MAX_ORDER: usize = 4;
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("variable index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("jet order {0} out of range (expected 0..={MAX_ORDER})")]
    OrderOutOfRange(usize),
    #[error("jet dimension {0} out of range (expected 1..={MAX_DIM})")]
    DimOutOfRange(usize),
    #[error("jet shape mismatch: ({0}, {1}) vs ({2}, {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("division by a jet with zero value")]
    DivisionByZero,
    #[error("{func} is undefined at {value}")]
    Domain { func: &'static str, value: f64 },
    #[error("derivative of order {requested} requested from a jet of order {order}")]
    OrderExceeded { requested: usize, order: usize },
}

/// Exponent vector of a monomial; its length is the ambient dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u8>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn new(exponents: Vec<u8>) -> Self {
        MultiIndex(exponents)
    }

    /// Multi-index of the mixed partial `∂_{vars[0]} ∂_{vars[1]} ...`.
    pub fn from_vars(dim: usize, vars: &[usize]) -> Result<Self, JetError> {
        let mut e = vec![0u8; dim];
        for &v in vars {
            if v >= dim {
                return Err(JetError::IndexOutOfRange { index: v, dim });
            }
            e[v] += 1;
        }
        Ok(MultiIndex(e))
    }

    pub fn exponents(&self) -> &[u8] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    /// Product of the factorials of the exponents.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&e| factorial(e as usize)).product()
    }

    fn sum(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    fn graded_cmp(&self, other: &MultiIndex) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Coefficient ordering and product table shared by all jets of one shape.
#[derive(Debug)]
pub struct Layout {
    dim: usize,
    order: usize,
    indices: Vec<MultiIndex>,
    /// `(i, j, k)` with `indices[i] + indices[j] == indices[k]`.
    products: Vec<(u16, u16, u16)>,
}

impl Layout {
    fn build(dim: usize, order: usize) -> Layout {
        let mut indices = Vec::new();
        for degree in 0..=order {
            let mut current = vec![0u8; dim];
            push_degree(&mut indices, &mut current, 0, degree);
        }
        let mut layout = Layout {
            dim,
            order,
            indices,
            products: Vec::new(),
        };
        let n = layout.indices.len();
        let mut products = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (&layout.indices[i], &layout.indices[j]);
                if a.order() + b.order() <= order {
                    let k = layout.rank(&a.sum(b)).expect("sum within order");
                    products.push((i as u16, j as u16, k as u16));
                }
            }
        }
        layout.products = products;
        layout
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Position of `idx` in the coefficient table, if its order fits.
    pub fn rank(&self, idx: &MultiIndex) -> Option<usize> {
        if idx.dim() != self.dim || idx.order() > self.order {
            return None;
        }
        self.indices
            .binary_search_by(|probe| probe.graded_cmp(idx))
            .ok()
    }
}

fn push_degree(out: &mut Vec<MultiIndex>, current: &mut Vec<u8>, var: usize, remaining: usize) {
    if var + 1 == current.len() {
        current[var] = remaining as u8;
        out.push(MultiIndex(current.clone()));
        current[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e as u8;
        push_degree(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

type LayoutCache = Mutex<HashMap<(usize, usize), Arc<Layout>>>;

/// Shared layout for `(dim, order)`; built once per process.
pub fn layout(dim: usize, order: usize) -> Result<Arc<Layout>, JetError> {
    if dim == 0 || dim > MAX_DIM {
        return Err(JetError::DimOutOfRange(dim));
    }
    if order > MAX_ORDER {
        return Err(JetError::OrderOutOfRange(order));
    }
    static CACHE: OnceLock<LayoutCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    Ok(guard
        .entry((dim, order))
        .or_insert_with(|| Arc::new(Layout::build(dim, order)))
        .clone())
}

/// Truncated Taylor expansion of a scalar function at a point.
#[derive(Clone)]
pub struct Jet<T: Real> {
    layout: Arc<Layout>,
    coeffs: Vec<T>,
}

impl<T: Real> fmt::Debug for Jet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.dim())
            .field("order", &self.order())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl<T: Real> PartialEq for Jet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

impl<T: Real> Jet<T> {
    pub fn constant(value: T, dim: usize, order: usize) -> Result<Self, JetError> {
        let layout = layout(dim, order)?;
        let mut coeffs = vec![T::zero(); layout.len()];
        coeffs[0] = value;
        Ok(Jet { layout, coeffs })
    }

    /// Jet of the coordinate function `x^var` at `point`.
    pub fn seed(point: &[T], var: usize, order: usize) -> Result<Self, JetError> {
        if var >= point.len() {
            return Err(JetError::IndexOutOfRange {
                index: var,
                dim: point.len(),
            });
        }
        if order == 0 || order > MAX_ORDER {
            return Err(JetError::OrderOutOfRange(order));
        }
        Self::variable(point[var], var, point.len(), order)
    }

    /// Jet of `value + (x^var - x^var_0)`.
    pub fn variable(value: T, var: usize, dim: usize, order: usize) -> Result<Self, JetError> {
        let mut jet = Self::constant(value, dim, order)?;
        if var >= dim {
            return Err(JetError::IndexOutOfRange { index: var, dim });
        }
        if order >= 1 {
            // degree-one block follows the constant, x^1 first
            jet.coeffs[1 + var] = T::one();
        }
        Ok(jet)
    }

    /// Build a jet from raw Taylor coefficients in layout order.
    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<T>) -> Result<Self, JetError> {
        let layout = layout(dim, order)?;
        if coeffs.len() != layout.len() {
            return Err(JetError::ShapeMismatch(
                dim,
                order,
                coeffs.len(),
                layout.len(),
            ));
        }
        Ok(Jet { layout, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn value(&self) -> T {
        self.coeffs[0]
    }

    /// Taylor coefficients in layout order.
    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeff(&self, idx: &MultiIndex) -> Result<T, JetError> {
        self.layout
            .rank(idx)
            .map(|k| self.coeffs[k])
            .ok_or(JetError::OrderExceeded {
                requested: idx.order(),
                order: self.order(),
            })
    }

    /// The partial derivative `∂^idx f` (coefficient times multi-index factorial).
    pub fn extract(&self, idx: &MultiIndex) -> Result<T, JetError> {
        if idx.dim() != self.dim() {
            return Err(JetError::ShapeMismatch(
                idx.dim(),
                idx.order(),
                self.dim(),
                self.order(),
            ));
        }
        Ok(self.coeff(idx)? * T::lit(idx.factorial()))
    }

    /// Mixed partial over a list of variable indices, e.g. `&[0, 0, 2]` for `∂0∂0∂2`.
    pub fn partial(&self, vars: &[usize]) -> Result<T, JetError> {
        self.extract(&MultiIndex::from_vars(self.dim(), vars)?)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs[1..].iter().all(|c| c.is_zero())
    }

    fn check_shape(&self, other: &Self) -> Result<(), JetError> {
        if self.dim() != other.dim() || self.order() != other.order() {
            return Err(JetError::ShapeMismatch(
                self.dim(),
                self.order(),
                other.dim(),
                other.order(),
            ));
        }
        Ok(())
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        Jet {
            layout: self.layout.clone(),
            coeffs: self.coeffs.iter().map(|&c| f(c)).collect(),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, JetError> {
        self.check_shape(other)?;
        Ok(Jet {
            layout: self.layout.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, JetError> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, JetError> {
        self.zip(other, |a, b| a - b)
    }

    pub fn neg(&self) -> Self {
        self.map(|c| -c)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|c| c * s)
    }

    pub fn add_scalar(&self, s: T) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0] + s;
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self, JetError> {
        self.check_shape(other)?;
        let mut coeffs = vec![T::zero(); self.coeffs.len()];
        for &(i, j, k) in &self.layout.products {
            let (i, j, k) = (i as usize, j as usize, k as usize);
            coeffs[k] = coeffs[k] + self.coeffs[i] * other.coeffs[j];
        }
        Ok(Jet {
            layout: self.layout.clone(),
            coeffs,
        })
    }

    pub fn div(&self, other: &Self) -> Result<Self, JetError> {
        self.check_shape(other)?;
        self.mul(&other.recip()?)
    }

    /// Compose with a univariate function given its Taylor coefficients
    /// `f^(k)(value) / k!` for `k = 0..=order`.
    pub fn compose(&self, taylor: &[T]) -> Self {
        let order = self.order();
        let mut nil = self.clone();
        nil.coeffs[0] = T::zero();
        let mut out = Jet {
            layout: self.layout.clone(),
            coeffs: vec![T::zero(); self.coeffs.len()],
        };
        out.coeffs[0] = taylor[0];
        let mut power = nil.clone();
        for (k, &t) in taylor.iter().enumerate().take(order + 1).skip(1) {
            if k > 1 {
                power = power.mul(&nil).expect("same layout");
            }
            if !t.is_zero() {
                for (o, &p) in out.coeffs.iter_mut().zip(&power.coeffs) {
                    *o = *o + t * p;
                }
            }
        }
        out
    }

    pub fn recip(&self) -> Result<Self, JetError> {
        let v = self.value();
        if v.is_zero() {
            return Err(JetError::DivisionByZero);
        }
        let inv = v.recip();
        let mut taylor = Vec::with_capacity(self.order() + 1);
        let mut t = inv;
        for _ in 0..=self.order() {
            taylor.push(t);
            t = -t * inv;
        }
        Ok(self.compose(&taylor))
    }

    pub fn ln(&self) -> Result<Self, JetError> {
        let v = self.value();
        if !(v > T::zero()) {
            return Err(JetError::Domain {
                func: "ln",
                value: v.to_f64_lossy(),
            });
        }
        let mut taylor = vec![v.ln()];
        let inv = v.recip();
        let mut p = inv;
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { T::one() } else { -T::one() };
            taylor.push(sign * p / T::lit(k as f64));
            p = p * inv;
        }
        Ok(self.compose(&taylor))
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        let taylor: Vec<T> = (0..=self.order())
            .map(|k| e / T::lit(factorial(k)))
            .collect();
        self.compose(&taylor)
    }

    pub fn sqrt(&self) -> Result<Self, JetError> {
        let v = self.value();
        if !(v > T::zero()) {
            return Err(JetError::Domain {
                func: "sqrt",
                value: v.to_f64_lossy(),
            });
        }
        self.powf_unchecked(T::lit(0.5))
    }

    /// `self^p` for a constant exponent.
    ///
    /// Non-integer exponents need a positive value; integer exponents are
    /// defined for any value except a zero base with a negative exponent.
    pub fn pow_const(&self, p: T) -> Result<Self, JetError> {
        let v = self.value();
        let integral = p.fract().is_zero();
        if !integral && !(v > T::zero()) {
            return Err(JetError::Domain {
                func: "pow",
                value: v.to_f64_lossy(),
            });
        }
        if integral {
            if v.is_zero() && p < T::zero() {
                return Err(JetError::DivisionByZero);
            }
            return Ok(self.powi_series(p));
        }
        self.powf_unchecked(p)
    }

    fn powf_unchecked(&self, p: T) -> Result<Self, JetError> {
        let v = self.value();
        let mut taylor = Vec::with_capacity(self.order() + 1);
        let mut binom = T::one();
        for k in 0..=self.order() {
            taylor.push(binom * v.powf(p - T::lit(k as f64)));
            binom = binom * (p - T::lit(k as f64)) / T::lit((k + 1) as f64);
        }
        Ok(self.compose(&taylor))
    }

    fn powi_series(&self, p: T) -> Self {
        let v = self.value();
        let mut taylor = Vec::with_capacity(self.order() + 1);
        let mut binom = T::one();
        for k in 0..=self.order() {
            let e = p - T::lit(k as f64);
            // binomial coefficient vanishes once k exceeds a non-negative integer p
            let term = if binom.is_zero() {
                T::zero()
            } else {
                binom * powi_exact(v, e)
            };
            taylor.push(term);
            binom = binom * (p - T::lit(k as f64)) / T::lit((k + 1) as f64);
        }
        self.compose(&taylor)
    }

    /// `self^other` as `exp(other * ln self)`; needs a positive base value.
    pub fn pow(&self, other: &Self) -> Result<Self, JetError> {
        self.check_shape(other)?;
        Ok(other.mul(&self.ln()?)?.exp())
    }

    pub fn gradient(&self) -> Result<Vec<T>, JetError> {
        (0..self.dim()).map(|i| self.partial(&[i])).collect()
    }

    /// Dense `n x n` Hessian, row-major.
    pub fn hessian(&self) -> Result<Vec<T>, JetError> {
        let n = self.dim();
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let h = self.partial(&[i, j])?;
                out[i * n + j] = h;
                out[j * n + i] = h;
            }
        }
        Ok(out)
    }

    /// Dense fully-symmetric tensor of all partials of total order `k`,
    /// row-major over `k` indices.
    pub fn derivative_tensor(&self, k: usize) -> Result<Vec<T>, JetError> {
        if k > self.order() {
            return Err(JetError::OrderExceeded {
                requested: k,
                order: self.order(),
            });
        }
        let n = self.dim();
        let len = n.pow(k as u32);
        let mut out = Vec::with_capacity(len);
        let mut vars = vec![0usize; k];
        for flat in 0..len {
            let mut rest = flat;
            for slot in (0..k).rev() {
                vars[slot] = rest % n;
                rest /= n;
            }
            out.push(self.partial(&vars)?);
        }
        Ok(out)
    }
}

fn powi_exact<T: Real>(v: T, e: T) -> T {
    match e.to_i32() {
        Some(i) => v.powi(i),
        None => v.powf(e),
    }
}
