//! Exact construction of `A0`.
//!
//! Each entry is the integral over the unit simplex of a product of two or
//! three basis polynomials (or their reference derivatives). To keep this
//! cheap at high degree, the basis is scaled by the common denominator `D` of
//! its coefficients so that all factors are integer polynomials, and the
//! monomial moments are scaled by `(N + d)!` so they are integers as well.
//! The products are then accumulated in checked `i128` arithmetic and only
//! the final quotient becomes a rational.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;

use super::{FlattenedReferenceTensor, Form, FormSpec, Mode};
use crate::error::{Error, Result};
use crate::simplex_poly::{factorial, lagrange_basis, LagrangeBasis, MonomialTable, Polynomial, Rational};

type IntPoly = Vec<(usize, i128)>;

const OVERFLOW: Error = Error::Overflow("integrating the reference tensor");

struct ScaledBasis {
    denom: i128,
    phi: Vec<IntPoly>,
    /// `dphi[i][alpha]`
    dphi: Vec<Vec<IntPoly>>,
}

fn to_int_poly(p: &Polynomial, scale: &BigInt, table: &MonomialTable) -> Result<IntPoly> {
    let mut out = Vec::with_capacity(p.num_terms());
    for (m, c) in p.terms() {
        let v = c * Rational::from_integer(scale.clone());
        debug_assert!(v.is_integer());
        let v = v.to_integer().to_i128().ok_or(OVERFLOW)?;
        let idx = table.index(m.exponents()).ok_or(OVERFLOW)?;
        out.push((idx, v));
    }
    Ok(out)
}

impl ScaledBasis {
    fn new(basis: &LagrangeBasis, table: &MonomialTable) -> Result<Self> {
        let mut lcm = BigInt::one();
        for f in &basis.functions {
            for (_, c) in f.terms() {
                lcm = lcm.lcm(c.denom());
            }
        }
        let phi = basis
            .functions
            .iter()
            .map(|f| to_int_poly(f, &lcm, table))
            .collect::<Result<Vec<_>>>()?;
        let dphi = basis
            .functions
            .iter()
            .map(|f| {
                (0..basis.dim)
                    .map(|a| to_int_poly(&f.diff(a)?, &lcm, table))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScaledBasis {
            denom: lcm.to_i128().ok_or(OVERFLOW)?,
            phi,
            dphi,
        })
    }
}

/// `M[a] = a! (N + d)! / (|a| + d)!`, the integral of `X^a` times `(N + d)!`.
fn scaled_moments(table: &MonomialTable) -> Result<Vec<i128>> {
    let d = table.dim() as u32;
    let top = factorial(table.max_degree() + d);
    (0..table.len())
        .map(|idx| {
            let e = table.exponents(idx);
            let num: BigInt = e.iter().map(|&x| factorial(x)).product::<BigInt>() * &top;
            let den = factorial(table.degree(idx) + d);
            (num / den).to_i128().ok_or(OVERFLOW)
        })
        .collect()
}

fn mul(table: &MonomialTable, a: &IntPoly, b: &IntPoly) -> Result<IntPoly> {
    let mut dense = vec![0i128; table.len()];
    for &(ia, ca) in a {
        for &(ib, cb) in b {
            let idx = table.product(ia, ib).ok_or(OVERFLOW)?;
            let term = ca.checked_mul(cb).ok_or(OVERFLOW)?;
            dense[idx] = dense[idx].checked_add(term).ok_or(OVERFLOW)?;
        }
    }
    Ok(dense
        .into_iter()
        .enumerate()
        .filter(|(_, v)| *v != 0)
        .collect())
}

/// `v[a] = sum_b B_b M[a + b]`, so that the scaled integral of `A * B` is
/// `sum_a A_a v[a]`. Entries whose product would exceed the table stay 0 and
/// are never read for factors of admissible degree.
fn moment_vector(table: &MonomialTable, moments: &[i128], b: &IntPoly) -> Result<Vec<i128>> {
    let mut v = vec![0i128; table.len()];
    for (a, slot) in v.iter_mut().enumerate() {
        for &(ib, cb) in b {
            if let Some(idx) = table.product(a, ib) {
                let term = cb.checked_mul(moments[idx]).ok_or(OVERFLOW)?;
                *slot = slot.checked_add(term).ok_or(OVERFLOW)?;
            }
        }
    }
    Ok(v)
}

fn pair(a: &IntPoly, v: &[i128]) -> Result<i128> {
    let mut acc = 0i128;
    for &(ia, ca) in a {
        acc = acc
            .checked_add(ca.checked_mul(v[ia]).ok_or(OVERFLOW)?)
            .ok_or(OVERFLOW)?;
    }
    Ok(acc)
}

fn integrand_degree(form: Form, k: u32) -> u32 {
    match form {
        Form::Laplacian => 2 * k - 2,
        Form::WeightedLaplacian => 3 * k - 2,
        Form::Advection => 2 * k - 1,
        Form::WeightedAdvectionX1 => 3 * k - 1,
    }
}

/// Builds the exact flattened reference tensor for `spec`.
pub fn build_reference_tensor(spec: FormSpec) -> Result<FlattenedReferenceTensor> {
    spec.validate()?;
    let basis = lagrange_basis(spec.dim, spec.degree)?;
    let n = basis.len();
    let d = spec.dim;
    let max_deg = integrand_degree(spec.form, spec.degree as u32);
    let table = MonomialTable::new(d, max_deg.max(spec.degree as u32));
    let sb = ScaledBasis::new(&basis, &table)?;
    let moments = scaled_moments(&table)?;

    let factors: u32 = if spec.form.is_weighted() { 3 } else { 2 };
    let denom = BigInt::from(sb.denom).pow(factors) * factorial(table.max_degree() + d as u32);

    // moment vectors of the trial-function derivative factor: mv[i2][alpha]
    let mv: Vec<Vec<Vec<i128>>> = sb
        .dphi
        .par_iter()
        .map(|per_axis| {
            per_axis
                .iter()
                .map(|q| moment_vector(&table, &moments, q))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let nc = if spec.form.is_weighted() { n } else { 1 };
    let na = spec.derivative_cols();

    // core[i1] holds numerators indexed by (i2, c, alpha-flat)
    let core: Vec<Vec<i128>> = (0..n)
        .into_par_iter()
        .map(|i1| -> Result<Vec<i128>> {
            let mut row = vec![0i128; n * nc * na];
            let at = |i2: usize, c: usize, a: usize| (i2 * nc + c) * na + a;
            match spec.form {
                Form::Laplacian => {
                    for i2 in 0..n {
                        for a1 in 0..d {
                            for a2 in 0..d {
                                row[at(i2, 0, a1 * d + a2)] = pair(&sb.dphi[i1][a1], &mv[i2][a2])?;
                            }
                        }
                    }
                }
                Form::WeightedLaplacian => {
                    for c in 0..n {
                        for a1 in 0..d {
                            let wp = mul(&table, &sb.phi[c], &sb.dphi[i1][a1])?;
                            for i2 in 0..n {
                                for a2 in 0..d {
                                    row[at(i2, c, a1 * d + a2)] = pair(&wp, &mv[i2][a2])?;
                                }
                            }
                        }
                    }
                }
                Form::Advection => {
                    for i2 in 0..n {
                        for a3 in 0..d {
                            let v = pair(&sb.phi[i1], &mv[i2][a3])?;
                            for a1 in 0..d {
                                // beta's basis is the unit vector field: only a1 == a2 survives
                                row[at(i2, 0, (a1 * d + a1) * d + a3)] = v;
                            }
                        }
                    }
                }
                Form::WeightedAdvectionX1 => {
                    for c in 0..n {
                        let vw = mul(&table, &sb.phi[i1], &sb.phi[c])?;
                        for i2 in 0..n {
                            for a in 0..d {
                                row[at(i2, c, a)] = pair(&vw, &mv[i2][a])?;
                            }
                        }
                    }
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let nrows = spec.nrows();
    let ncols = spec.ncols();
    let positions: Vec<(usize, usize, usize, usize)> = (0..n)
        .flat_map(|i1| {
            (0..n).flat_map(move |i2| (0..nc).flat_map(move |c| (0..na).map(move |a| (i1, i2, c, a))))
        })
        .collect();
    let mut numerators = vec![0i128; nrows * ncols];
    for &(i1, i2, c, a) in &positions {
        let (r, col) = match spec.mode {
            Mode::Matrix => (i1 * n + i2, c * na + a),
            Mode::Action => (i1, (c * n + i2) * na + a),
        };
        numerators[r * ncols + col] = core[i1][(i2 * nc + c) * na + a];
    }
    let entries: Vec<Rational> = numerators
        .par_iter()
        .map(|&num| Rational::new(BigInt::from(num), denom.clone()))
        .collect();

    let mut tensor = FlattenedReferenceTensor::from_entries(spec, nrows, ncols, entries)?;
    tensor.row_labels = spec.row_labels();
    tensor.col_axes = spec.col_axes();
    Ok(tensor)
}
