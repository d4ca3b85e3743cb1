//! Element tensors computed without the reference tensor.
//!
//! The physical integrand is pulled back to the reference cell as a
//! float-coefficient polynomial (chain rule through the affine map) and
//! integrated exactly with the monomial moments. Nothing here touches the
//! flattened tensor or the geometry-vector layout.
//!
//! High-degree Lagrange functions have large alternating power-basis
//! coefficients, so the arithmetic runs in double-double precision to keep
//! cancellation well below the comparison tolerance.

use num_traits::FromPrimitive;
use twofloat::TwoFloat;

use super::geometry::{affine_map, CellCoefficients, CellGeometry};
use super::{Form, FormSpec, Mode};
use crate::error::{Error, Result};
use crate::simplex_poly::{lagrange_basis, monomial_integral, to_f64, MonomialTable, MultiIndex, Polynomial, Rational};

type Dd = TwoFloat;

const ZERO: Dd = TwoFloat::from_f64(0.0);

/// Nearest double-double to an exact rational.
fn to_dd(r: &Rational) -> Dd {
    let hi = to_f64(r);
    let rest = r - Rational::from_f64(hi).expect("finite");
    TwoFloat::new_add(hi, to_f64(&rest))
}

struct FloatPolys<'t> {
    table: &'t MonomialTable,
    moments: Vec<Dd>,
}

impl<'t> FloatPolys<'t> {
    fn new(table: &'t MonomialTable) -> Self {
        let moments = (0..table.len())
            .map(|i| {
                let e = table.exponents(i);
                to_dd(&monomial_integral(&MultiIndex::new(e[..table.dim()].to_vec())))
            })
            .collect();
        FloatPolys { table, moments }
    }

    fn from_exact(&self, p: &Polynomial) -> Vec<Dd> {
        let mut out = vec![ZERO; self.table.len()];
        for (m, c) in p.terms() {
            out[self.table.index(m.exponents()).expect("degree fits table")] = to_dd(c);
        }
        out
    }

    fn mul(&self, a: &[Dd], b: &[Dd]) -> Vec<Dd> {
        let mut out = vec![ZERO; self.table.len()];
        for (ia, ca) in a.iter().enumerate().filter(|(_, c)| **c != ZERO) {
            for (ib, cb) in b.iter().enumerate().filter(|(_, c)| **c != ZERO) {
                let idx = self.table.product(ia, ib).expect("degree fits table");
                out[idx] += *ca * *cb;
            }
        }
        out
    }

    /// `v[a] = int X^a * b`, so `int a*b = sum a_i v_i`.
    fn moment_vector(&self, b: &[Dd]) -> Vec<Dd> {
        let mut v = vec![ZERO; self.table.len()];
        for (a, slot) in v.iter_mut().enumerate() {
            for (ib, cb) in b.iter().enumerate().filter(|(_, c)| **c != ZERO) {
                if let Some(idx) = self.table.product(a, ib) {
                    *slot += *cb * self.moments[idx];
                }
            }
        }
        v
    }
}

fn dot(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + *x * *y)
}

fn lincomb(coeffs: &[f64], polys: &[Vec<Dd>]) -> Vec<Dd> {
    let mut out = vec![ZERO; polys[0].len()];
    for (c, p) in coeffs.iter().zip(polys) {
        for (o, v) in out.iter_mut().zip(p) {
            *o += *v * *c;
        }
    }
    out
}

fn check_len<'a>(v: Option<&'a [f64]>, name: &'static str, expected: usize) -> Result<&'a [f64]> {
    let v = v.unwrap_or(&[]);
    if v.len() != expected {
        return Err(Error::CoefficientArity {
            name,
            expected,
            got: v.len(),
        });
    }
    Ok(v)
}

/// Element tensor for one cell (row-major `n x n` in matrix mode, length `n`
/// in action mode).
pub fn quadrature_oracle(spec: &FormSpec, cell: &CellGeometry, coeffs: &CellCoefficients<'_>) -> Result<Vec<f64>> {
    spec.validate()?;
    let map = affine_map(cell)?;
    let basis = lagrange_basis(spec.dim, spec.degree)?;
    let n = basis.len();
    let d = spec.dim;
    let k = spec.degree as u32;
    let table = MonomialTable::new(d, 3 * k);
    let fp = FloatPolys::new(&table);
    let measure = map.det.abs();

    let phi: Vec<Vec<Dd>> = basis.functions.iter().map(|f| fp.from_exact(f)).collect();
    let dref: Vec<Vec<Vec<Dd>>> = basis
        .functions
        .iter()
        .map(|f| (0..d).map(|a| Ok(fp.from_exact(&f.diff(a)?))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    // physical gradient: d phi / d x_b = sum_a (dX_a / dx_b) d phi / d X_a
    let dphys: Vec<Vec<Vec<Dd>>> = dref
        .iter()
        .map(|per_axis| {
            (0..d)
                .map(|b| {
                    let c: Vec<f64> = (0..d).map(|a| map.inverse[a][b]).collect();
                    lincomb(&c, per_axis)
                })
                .collect()
        })
        .collect();

    let w_poly = if spec.form.is_weighted() {
        Some(lincomb(check_len(coeffs.weight, "weight", n)?, &phi))
    } else {
        None
    };
    let beta = if spec.form.has_beta() {
        Some(check_len(coeffs.beta, "beta", d)?)
    } else {
        None
    };

    // The trial-side factor of the integrand, per trial function (matrix) or
    // for the single trial field u (action).
    let trial_factor = |grads: &[Vec<Dd>]| -> Vec<Vec<Dd>> {
        match spec.form {
            Form::Laplacian | Form::WeightedLaplacian => grads.iter().map(|g| fp.moment_vector(g)).collect(),
            Form::Advection => {
                let b = beta.expect("checked above");
                vec![fp.moment_vector(&lincomb(b, grads))]
            }
            Form::WeightedAdvectionX1 => vec![fp.moment_vector(&grads[0])],
        }
    };
    let test_factor = |i1: usize| -> Vec<Vec<Dd>> {
        match spec.form {
            Form::Laplacian => dphys[i1].clone(),
            Form::WeightedLaplacian => {
                let w = w_poly.as_ref().expect("weighted");
                dphys[i1].iter().map(|g| fp.mul(w, g)).collect()
            }
            Form::Advection => vec![phi[i1].clone()],
            Form::WeightedAdvectionX1 => vec![fp.mul(&phi[i1], w_poly.as_ref().expect("weighted"))],
        }
    };

    let trials: Vec<Vec<Vec<Dd>>> = match spec.mode {
        Mode::Matrix => dphys.iter().map(|g| trial_factor(g)).collect(),
        Mode::Action => {
            let u = check_len(coeffs.trial, "trial", n)?;
            let du: Vec<Vec<Dd>> = (0..d)
                .map(|b| {
                    let per_fn: Vec<Vec<Dd>> = dphys.iter().map(|g| g[b].clone()).collect();
                    lincomb(u, &per_fn)
                })
                .collect();
            vec![trial_factor(&du)]
        }
    };

    let mut out = Vec::with_capacity(n * trials.len());
    for i1 in 0..n {
        let left = test_factor(i1);
        for right in &trials {
            let v = left.iter().zip(right).fold(ZERO, |acc, (l, r)| acc + dot(l, r));
            out.push(f64::from(v * measure));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_triangle() -> CellGeometry {
        CellGeometry::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]])
    }

    #[test]
    fn p1_laplacian_reference_cell() {
        let spec = FormSpec::new(Form::Laplacian, Mode::Matrix, 2, 1).unwrap();
        let a = quadrature_oracle(&spec, &reference_triangle(), &CellCoefficients::default()).unwrap();
        let expected = [1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5];
        for (x, y) in a.iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn p1_laplacian_textbook_formula() {
        // K_ij = (b_i b_j + c_i c_j) / (4 area) for a linear triangle
        let p = [[0.2, 0.1], [1.4, 0.3], [0.5, 1.2]];
        let cell = CellGeometry::new(p.iter().map(|v| v.to_vec()).collect());
        let spec = FormSpec::new(Form::Laplacian, Mode::Matrix, 2, 1).unwrap();
        let a = quadrature_oracle(&spec, &cell, &CellCoefficients::default()).unwrap();
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        for i in 0..3 {
            for j in 0..3 {
                let k = (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
                assert!((a[i * 3 + j] - k).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_beta_gives_zero() {
        let spec = FormSpec::new(Form::Advection, Mode::Matrix, 2, 2).unwrap();
        let beta = [0.0, 0.0];
        let coeffs = CellCoefficients {
            beta: Some(&beta),
            ..Default::default()
        };
        let a = quadrature_oracle(&spec, &reference_triangle(), &coeffs).unwrap();
        assert!(a.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn degenerate_cell_error() {
        let spec = FormSpec::new(Form::Laplacian, Mode::Matrix, 2, 1).unwrap();
        let cell = CellGeometry::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]);
        assert!(matches!(
            quadrature_oracle(&spec, &cell, &CellCoefficients::default()),
            Err(Error::DegenerateCell { .. })
        ));
    }
}
