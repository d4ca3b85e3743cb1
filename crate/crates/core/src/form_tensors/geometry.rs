use super::{FlattenedReferenceTensor, Form, FormSpec, Mode};
use crate::error::{Error, Result};

/// The `d + 1` vertices of a simplex cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGeometry {
    pub vertices: Vec<Vec<f64>>,
}

impl CellGeometry {
    pub fn new(vertices: Vec<Vec<f64>>) -> Self {
        CellGeometry { vertices }
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Image of a reference point under the affine map.
    pub fn map_point(&self, reference: &[f64]) -> Vec<f64> {
        let v0 = &self.vertices[0];
        (0..self.dim())
            .map(|r| {
                v0[r]
                    + reference
                        .iter()
                        .enumerate()
                        .map(|(c, x)| x * (self.vertices[c + 1][r] - v0[r]))
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Jacobian `F_K'`, its inverse `dX/dx` and determinant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMapData {
    pub dim: usize,
    /// `jacobian[r][c] = dx_r / dX_c`
    pub jacobian: [[f64; 3]; 3],
    /// `inverse[a][b] = dX_a / dx_b`
    pub inverse: [[f64; 3]; 3],
    pub det: f64,
}

pub fn affine_map(cell: &CellGeometry) -> Result<AffineMapData> {
    let refs: Vec<&[f64]> = cell.vertices.iter().map(Vec::as_slice).collect();
    affine_map_of(&refs)
}

/// [`affine_map`] over borrowed vertex coordinates.
pub fn affine_map_of(vertices: &[&[f64]]) -> Result<AffineMapData> {
    let d = vertices.len().saturating_sub(1);
    if !(2..=3).contains(&d) || vertices.iter().any(|v| v.len() != d) {
        return Err(Error::UnsupportedElement { dim: d, degree: 1 });
    }
    let v0 = vertices[0];
    let mut j = [[0.0; 3]; 3];
    let mut scale: f64 = 0.0;
    for c in 0..d {
        for r in 0..d {
            j[r][c] = vertices[c + 1][r] - v0[r];
            scale = scale.max(j[r][c].abs());
        }
    }
    let mut inv = [[0.0; 3]; 3];
    let det = if d == 2 {
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        inv[0][0] = j[1][1] / det;
        inv[0][1] = -j[0][1] / det;
        inv[1][0] = -j[1][0] / det;
        inv[1][1] = j[0][0] / det;
        det
    } else {
        let c00 = j[1][1] * j[2][2] - j[1][2] * j[2][1];
        let c01 = j[1][2] * j[2][0] - j[1][0] * j[2][2];
        let c02 = j[1][0] * j[2][1] - j[1][1] * j[2][0];
        let det = j[0][0] * c00 + j[0][1] * c01 + j[0][2] * c02;
        inv[0][0] = c00 / det;
        inv[1][0] = c01 / det;
        inv[2][0] = c02 / det;
        inv[0][1] = (j[0][2] * j[2][1] - j[0][1] * j[2][2]) / det;
        inv[1][1] = (j[0][0] * j[2][2] - j[0][2] * j[2][0]) / det;
        inv[2][1] = (j[0][1] * j[2][0] - j[0][0] * j[2][1]) / det;
        inv[0][2] = (j[0][1] * j[1][2] - j[0][2] * j[1][1]) / det;
        inv[1][2] = (j[0][2] * j[1][0] - j[0][0] * j[1][2]) / det;
        inv[2][2] = (j[0][0] * j[1][1] - j[0][1] * j[1][0]) / det;
        det
    };
    if !(det.abs() >= 1e-14 * scale.powi(d as i32)) || scale == 0.0 {
        return Err(Error::DegenerateCell { det });
    }
    Ok(AffineMapData {
        dim: d,
        jacobian: j,
        inverse: inv,
        det,
    })
}

/// Per-cell coefficient dofs. Only the ones the form uses are read.
#[derive(Clone, Copy, Debug, Default)]
pub struct CellCoefficients<'a> {
    /// Weight `w`, `|P_k|` nodal values.
    pub weight: Option<&'a [f64]>,
    /// Constant advection velocity, `d` components.
    pub beta: Option<&'a [f64]>,
    /// Trial function `u` for action mode, `|P_k|` nodal values.
    pub trial: Option<&'a [f64]>,
}

fn required<'a>(v: Option<&'a [f64]>, name: &'static str, expected: usize) -> Result<&'a [f64]> {
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

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryVector {
    pub values: Vec<f64>,
}

/// Builds `g_K` in the column layout of the matching reference tensor.
pub fn build_geometry_vector(
    spec: &FormSpec,
    map: &AffineMapData,
    coeffs: &CellCoefficients<'_>,
) -> Result<GeometryVector> {
    let mut values = vec![0.0; spec.ncols()];
    write_geometry_vector(spec, map, coeffs, &mut values)?;
    Ok(GeometryVector { values })
}

/// Allocation-free variant of [`build_geometry_vector`] for assembly loops.
pub(crate) fn write_geometry_vector(
    spec: &FormSpec,
    map: &AffineMapData,
    coeffs: &CellCoefficients<'_>,
    out: &mut [f64],
) -> Result<()> {
    let d = spec.dim;
    let n = spec.space_dim();
    if out.len() != spec.ncols() {
        return Err(Error::LengthMismatch {
            expected: spec.ncols(),
            got: out.len(),
        });
    }
    if map.dim != d {
        return Err(Error::LengthMismatch {
            expected: d,
            got: map.dim,
        });
    }
    let weight = if spec.form.is_weighted() {
        Some(required(coeffs.weight, "weight", n)?)
    } else {
        None
    };
    let trial = if spec.mode == Mode::Action {
        Some(required(coeffs.trial, "trial", n)?)
    } else {
        None
    };

    // |det| is the cell measure ratio; meshes are oriented so it equals det.
    let det = map.det.abs();
    let k = &map.inverse;
    let mut base = [0.0; 27];
    let na = spec.derivative_cols();
    match spec.form {
        Form::Laplacian | Form::WeightedLaplacian => {
            for a1 in 0..d {
                for a2 in 0..d {
                    let s: f64 = (0..d).map(|b| k[a1][b] * k[a2][b]).sum();
                    base[a1 * d + a2] = det * s;
                }
            }
        }
        Form::Advection => {
            let beta = required(coeffs.beta, "beta", d)?;
            for a1 in 0..d {
                for a2 in 0..d {
                    for a3 in 0..d {
                        base[(a1 * d + a2) * d + a3] = det * beta[a1] * k[a3][a2];
                    }
                }
            }
        }
        Form::WeightedAdvectionX1 => {
            for a in 0..d {
                base[a] = det * k[a][0];
            }
        }
    }

    let weights: &[f64] = weight.unwrap_or(&[1.0]);
    let trials: &[f64] = trial.unwrap_or(&[1.0]);
    let mut pos = 0;
    for &w in weights {
        for &u in trials {
            let s = w * u;
            for b in &base[..na] {
                out[pos] = s * b;
                pos += 1;
            }
        }
    }
    debug_assert_eq!(pos, out.len());
    Ok(())
}

/// Naive dense contraction `A0 g` using the float mirror; one value per row.
pub fn contract(tensor: &FlattenedReferenceTensor, g: &GeometryVector) -> Result<Vec<f64>> {
    let mut out = vec![0.0; tensor.nrows];
    contract_into(tensor, &g.values, &mut out)?;
    Ok(out)
}

pub(crate) fn contract_into(tensor: &FlattenedReferenceTensor, g: &[f64], out: &mut [f64]) -> Result<()> {
    if g.len() != tensor.ncols {
        return Err(Error::LengthMismatch {
            expected: tensor.ncols,
            got: g.len(),
        });
    }
    for (r, slot) in out.iter_mut().enumerate().take(tensor.nrows) {
        *slot = tensor.float_row(r).iter().zip(g).map(|(a, b)| a * b).sum();
    }
    Ok(())
}
