//! Exact rational polynomial algebra on the unit simplex.
//!
//! The unit d-simplex has vertices at the origin and at the unit coordinate
//! vectors. Everything here is exact; floats only appear in the helpers that
//! convert for display or runtime evaluation.

mod lagrange;
mod monomials;

pub use lagrange::{lagrange_basis, space_dimension, LagrangeBasis, MAX_DEGREE_2D, MAX_DEGREE_3D};
pub use monomials::MonomialTable;
pub(crate) use lagrange::positive_compositions;

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision rational, always kept in lowest terms.
pub type Rational = BigRational;

pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Nearest double to an exact rational.
pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Renders `p/q`, or just `p` for integers.
pub fn rational_to_string(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(Rational::new(n, d))
        }
        None => s.parse::<BigInt>().ok().map(Rational::from_integer),
    }
}

pub(crate) fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Exponent vector of a monomial `X^m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// All multi-indices of total degree at most `degree`, ordered by degree
    /// and then reverse-lexicographically within a degree (`X` before `Y`).
    pub fn all_up_to(dim: usize, degree: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for total in 0..=degree {
            let mut current = vec![0u32; dim];
            fill_compositions(&mut current, 0, total, &mut out);
        }
        out
    }
}

fn fill_compositions(current: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex(current.clone()));
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill_compositions(current, pos + 1, remaining - e, out);
    }
}

/// Exact integral of `X^m` over the unit simplex: `prod(m_i!) / (|m| + d)!`.
pub fn monomial_integral(m: &MultiIndex) -> Rational {
    let numer = m.0.iter().fold(BigInt::one(), |acc, &e| acc * factorial(e));
    let denom = factorial(m.degree() + m.dim() as u32);
    Rational::new(numer, denom)
}

/// Multivariate polynomial with exact rational coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<MultiIndex, Rational>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: Rational) -> Self {
        Self::monomial(MultiIndex::zeros(dim), c)
    }

    pub fn monomial(m: MultiIndex, c: Rational) -> Self {
        let mut p = Polynomial::zero(m.dim());
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    /// The coordinate function `X_axis`.
    pub fn variable(dim: usize, axis: usize) -> Self {
        Self::monomial(MultiIndex::unit(dim, axis), Rational::one())
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, merging
    /// duplicates and dropping zeros.
    pub fn from_terms<I>(dim: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (MultiIndex, Rational)>,
    {
        let mut p = Polynomial::zero(dim);
        for (m, c) in terms {
            assert_eq!(m.dim(), dim, "multi-index length must equal the dimension");
            p.add_term(m, c);
        }
        p
    }

    fn add_term(&mut self, m: MultiIndex, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::degree).max()
    }

    pub fn coefficient(&self, m: &MultiIndex) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn scale(&self, c: &Rational) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(self.dim);
        }
        Polynomial {
            dim: self.dim,
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    fn check_dim(&self, other: &Polynomial) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_dim(other)?;
        let mut acc: BTreeMap<MultiIndex, Rational> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *acc.entry(ma.plus(mb)).or_insert_with(Rational::zero) += ca * cb;
            }
        }
        acc.retain(|_, v| !v.is_zero());
        Ok(Polynomial {
            dim: self.dim,
            terms: acc,
        })
    }

    /// Exact partial derivative with respect to `X_axis`.
    pub fn diff(&self, axis: usize) -> Result<Polynomial> {
        if axis >= self.dim {
            return Err(Error::AxisOutOfRange {
                axis,
                dim: self.dim,
            });
        }
        let mut out = Polynomial::zero(self.dim);
        for (m, c) in &self.terms {
            let e = m.0[axis];
            if e == 0 {
                continue;
            }
            let mut lowered = m.clone();
            lowered.0[axis] -= 1;
            out.add_term(lowered, c * rat_int(e as i64));
        }
        Ok(out)
    }

    pub fn eval(&self, point: &[Rational]) -> Rational {
        assert_eq!(point.len(), self.dim);
        let mut total = Rational::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for (x, &e) in point.iter().zip(&m.0) {
                for _ in 0..e {
                    v *= x;
                }
            }
            total += v;
        }
        total
    }

    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                to_f64(c)
                    * point
                        .iter()
                        .zip(&m.0)
                        .map(|(x, &e)| x.powi(e as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// Exact integral over the unit simplex.
    pub fn integrate(&self) -> Rational {
        self.terms
            .iter()
            .map(|(m, c)| c * monomial_integral(m))
            .fold(Rational::zero(), |a, b| a + b)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(&-Rational::one())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("polynomial dimension mismatch")
    }
}

const VARS: [&str; 3] = ["X", "Y", "Z"];

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        // highest degree first reads more naturally
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| b.0.degree().cmp(&a.0.degree()).then(a.0.cmp(b.0).reverse()));
        for (m, c) in terms {
            let neg = c.is_negative();
            let abs = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            let mono: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| {
                    if e == 1 {
                        VARS[i].to_string()
                    } else {
                        format!("{}^{}", VARS[i], e)
                    }
                })
                .collect();
            if mono.is_empty() {
                write!(f, "{}", rational_to_string(&abs))?;
            } else if abs.is_one() {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{}*{}", rational_to_string(&abs), mono.join("*"))?;
            }
        }
        Ok(())
    }
}
