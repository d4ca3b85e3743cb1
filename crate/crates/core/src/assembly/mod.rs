//! Structured meshes, Lagrange dof maps, and sparse global assembly.
//!
//! Assembly runs on one thread. Each cell gets its geometry vector, the
//! element kernel turns it into the element tensor, and the result is
//! scatter-added through the dof map.

mod bench;
mod dofmap;
mod mesh;

use std::collections::BTreeMap;

pub use bench::{benchmark, thread_cpu_time, BenchConfig, CaseTiming, Measurement, TimingReport};
pub use dofmap::{build_dofmap, DofMap};
pub use mesh::{unit_cube_mesh, unit_square_mesh, Mesh};

use crate::error::{Error, Result};
use crate::form_tensors::{
    affine_map_of, contract_into, write_geometry_vector, CellCoefficients, FlattenedReferenceTensor, FormSpec, Mode,
};
use crate::progir::StraightLineProgram;

/// Row-wise ordered maps from column to value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseMatrix {
    pub rows: Vec<BTreeMap<usize, f64>>,
}

impl SparseMatrix {
    pub fn new(n: usize) -> Self {
        SparseMatrix {
            rows: vec![BTreeMap::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        *self.rows[row].entry(col).or_insert(0.0) += value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row].get(&col).copied().unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(BTreeMap::len).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.rows.iter().map(|r| r.iter().map(|(&c, v)| v * x[c]).sum()).collect())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.values().sum()).collect()
    }

    /// Largest entrywise difference, treating absent entries as zero.
    pub fn max_abs_diff(&self, other: &SparseMatrix) -> f64 {
        let mut worst: f64 = if self.dim() == other.dim() { 0.0 } else { f64::INFINITY };
        for (a, b) in self.rows.iter().zip(&other.rows) {
            for (c, v) in a {
                worst = worst.max((v - b.get(c).copied().unwrap_or(0.0)).abs());
            }
            for (c, v) in b {
                if !a.contains_key(c) {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            for (&c, v) in row {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }
}

/// Something that maps a geometry vector to an element tensor.
pub trait ElementKernel {
    fn spec(&self) -> FormSpec;
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `g` and `y` have lengths `ncols` and `nrows`.
    fn evaluate(&self, g: &[f64], y: &mut [f64]);
}

/// Dense contraction over every entry, zeros included.
impl ElementKernel for FlattenedReferenceTensor {
    fn spec(&self) -> FormSpec {
        self.spec
    }
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn evaluate(&self, g: &[f64], y: &mut [f64]) {
        contract_into(self, g, y).expect("lengths checked by caller");
    }
}

impl ElementKernel for StraightLineProgram {
    fn spec(&self) -> FormSpec {
        self.spec
    }
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn evaluate(&self, g: &[f64], y: &mut [f64]) {
        self.run_unchecked(g, y);
    }
}

/// Global coefficient data; only what the form needs is read.
#[derive(Clone, Copy, Debug, Default)]
pub struct GlobalCoefficients<'a> {
    /// Nodal values of the weight, one per global dof.
    pub weight: Option<&'a [f64]>,
    /// Constant velocity, `dim` components.
    pub beta: Option<&'a [f64]>,
}

fn check_setup(mesh: &Mesh, dofmap: &DofMap, kernel: &dyn ElementKernel, mode: Mode, coeffs: &GlobalCoefficients<'_>) -> Result<FormSpec> {
    let spec = kernel.spec();
    if spec.mode != mode {
        return Err(Error::ModeMismatch {
            expected: mode,
            got: spec.mode,
        });
    }
    if spec.dim != mesh.dim {
        return Err(Error::DimensionMismatch {
            left: spec.dim,
            right: mesh.dim,
        });
    }
    if spec.degree != dofmap.degree || dofmap.cell_dofs.len() != mesh.num_cells() {
        return Err(Error::LengthMismatch {
            expected: spec.space_dim(),
            got: dofmap.dofs_per_cell(),
        });
    }
    if kernel.ncols() != spec.ncols() || kernel.nrows() != spec.nrows() {
        return Err(Error::LengthMismatch {
            expected: spec.ncols(),
            got: kernel.ncols(),
        });
    }
    if spec.form.is_weighted() {
        let got = coeffs.weight.map_or(0, <[f64]>::len);
        if got != dofmap.num_global_dofs {
            return Err(Error::CoefficientArity {
                name: "weight",
                expected: dofmap.num_global_dofs,
                got,
            });
        }
    }
    Ok(spec)
}

/// Drives the per-cell loop: geometry vector, kernel, then `scatter`.
fn for_each_element(
    mesh: &Mesh,
    dofmap: &DofMap,
    spec: &FormSpec,
    kernel: &dyn ElementKernel,
    coeffs: &GlobalCoefficients<'_>,
    u: Option<&[f64]>,
    mut scatter: impl FnMut(&[usize], &[f64]),
) -> Result<()> {
    let n = spec.space_dim();
    let mut w_local = vec![0.0; n];
    let mut u_local = vec![0.0; n];
    let mut g = vec![0.0; kernel.ncols()];
    let mut y = vec![0.0; kernel.nrows()];
    for cell in 0..mesh.num_cells() {
        let (pts, nv) = mesh.cell_points(cell);
        let map = affine_map_of(&pts[..nv])?;
        if let Some(w) = coeffs.weight {
            dofmap.restrict_into(cell, w, &mut w_local);
        }
        if let Some(u) = u {
            dofmap.restrict_into(cell, u, &mut u_local);
        }
        let local = CellCoefficients {
            weight: coeffs.weight.map(|_| w_local.as_slice()),
            beta: coeffs.beta,
            trial: u.map(|_| u_local.as_slice()),
        };
        write_geometry_vector(spec, &map, &local, &mut g)?;
        kernel.evaluate(&g, &mut y);
        scatter(&dofmap.cell_dofs[cell], &y);
    }
    Ok(())
}

pub fn assemble_matrix(
    mesh: &Mesh,
    dofmap: &DofMap,
    kernel: &dyn ElementKernel,
    coeffs: &GlobalCoefficients<'_>,
) -> Result<SparseMatrix> {
    let spec = check_setup(mesh, dofmap, kernel, Mode::Matrix, coeffs)?;
    let n = spec.space_dim();
    let mut a = SparseMatrix::new(dofmap.num_global_dofs);
    for_each_element(mesh, dofmap, &spec, kernel, coeffs, None, |dofs, y| {
        for (i1, &gi) in dofs.iter().enumerate() {
            let row = &mut a.rows[gi];
            for (i2, &gj) in dofs.iter().enumerate() {
                *row.entry(gj).or_insert(0.0) += y[i1 * n + i2];
            }
        }
    })?;
    Ok(a)
}

pub fn assemble_action(
    mesh: &Mesh,
    dofmap: &DofMap,
    kernel: &dyn ElementKernel,
    coeffs: &GlobalCoefficients<'_>,
    u: &[f64],
) -> Result<Vec<f64>> {
    let spec = check_setup(mesh, dofmap, kernel, Mode::Action, coeffs)?;
    if u.len() != dofmap.num_global_dofs {
        return Err(Error::LengthMismatch {
            expected: dofmap.num_global_dofs,
            got: u.len(),
        });
    }
    let mut b = vec![0.0; dofmap.num_global_dofs];
    for_each_element(mesh, dofmap, &spec, kernel, coeffs, Some(u), |dofs, y| {
        for (&gi, v) in dofs.iter().zip(y) {
            b[gi] += v;
        }
    })?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form_tensors::{build_reference_tensor, Form};
    use crate::progir::{generate, generate_direct};
    use crate::relations::optimize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tensor(form: Form, mode: Mode, dim: usize, k: usize) -> FlattenedReferenceTensor {
        build_reference_tensor(FormSpec::new(form, mode, dim, k).unwrap()).unwrap()
    }

    #[test]
    fn p1_laplacian_unit_square() {
        let mesh = unit_square_mesh(1).unwrap();
        let dm = build_dofmap(&mesh, 1).unwrap();
        let t = tensor(Form::Laplacian, Mode::Matrix, 2, 1);
        let a = assemble_matrix(&mesh, &dm, &t, &GlobalCoefficients::default()).unwrap();
        assert_eq!(a.dim(), 4);
        assert!(a.row_sums().iter().all(|s| s.abs() < 1e-14));
        assert!(a.max_asymmetry() < 1e-14);
        // corner (0,0) touches both triangles: diagonal 1
        assert!((a.get(0, 0) - 1.0).abs() < 1e-14);
        // the split diagonal carries no stiffness coupling for right triangles
        assert!(a.get(0, 3).abs() < 1e-14);
    }

    #[test]
    fn optimized_matches_dense_and_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mesh = unit_square_mesh(3).unwrap();
        for form in Form::ALL {
            let k = 2;
            let dm = build_dofmap(&mesh, k).unwrap();
            let w: Vec<f64> = (0..dm.num_global_dofs).map(|_| rng.gen_range(0.5..1.5)).collect();
            let beta = [0.3, -0.7];
            let coeffs = GlobalCoefficients {
                weight: form.is_weighted().then_some(w.as_slice()),
                beta: form.has_beta().then_some(&beta[..]),
            };
            let tm = tensor(form, Mode::Matrix, 2, k);
            let pm = generate(&optimize(&tm), &tm).unwrap();
            let dense = assemble_matrix(&mesh, &dm, &tm, &coeffs).unwrap();
            let opt = assemble_matrix(&mesh, &dm, &pm, &coeffs).unwrap();
            let direct = assemble_matrix(&mesh, &dm, &generate_direct(&tm), &coeffs).unwrap();
            assert!(dense.max_abs_diff(&opt) < 1e-12);
            assert!(dense.max_abs_diff(&direct) < 1e-12);

            let ta = tensor(form, Mode::Action, 2, k);
            let pa = generate(&optimize(&ta), &ta).unwrap();
            let u: Vec<f64> = (0..dm.num_global_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let au = dense.mul_vec(&u).unwrap();
            let b = assemble_action(&mesh, &dm, &pa, &coeffs, &u).unwrap();
            let scale = au.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in au.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * scale);
            }
            let zero = assemble_action(&mesh, &dm, &pa, &coeffs, &vec![0.0; u.len()]).unwrap();
            assert!(zero.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn laplacian_kills_constants_3d() {
        let mesh = unit_cube_mesh(2).unwrap();
        let dm = build_dofmap(&mesh, 2).unwrap();
        let t = tensor(Form::Laplacian, Mode::Action, 3, 2);
        let b = assemble_action(&mesh, &dm, &t, &GlobalCoefficients::default(), &vec![1.0; dm.num_global_dofs]).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn mass_like_check_through_advection() {
        // with beta = e_x and u = x, the advection action integrates the test
        // functions: the entries sum to the domain area
        let mesh = unit_square_mesh(4).unwrap();
        let dm = build_dofmap(&mesh, 1).unwrap();
        let t = tensor(Form::Advection, Mode::Action, 2, 1);
        let u: Vec<f64> = mesh.vertices.iter().map(|v| v[0]).collect();
        let beta = [1.0, 0.0];
        let coeffs = GlobalCoefficients {
            weight: None,
            beta: Some(&beta),
        };
        let b = assemble_action(&mesh, &dm, &t, &coeffs, &u).unwrap();
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn setup_errors() {
        let mesh = unit_square_mesh(2).unwrap();
        let dm = build_dofmap(&mesh, 1).unwrap();
        let ta = tensor(Form::Laplacian, Mode::Action, 2, 1);
        let tm = tensor(Form::Laplacian, Mode::Matrix, 2, 1);
        let none = GlobalCoefficients::default();
        assert!(matches!(assemble_matrix(&mesh, &dm, &ta, &none), Err(Error::ModeMismatch { .. })));
        assert!(matches!(assemble_action(&mesh, &dm, &tm, &none, &[0.0; 9]), Err(Error::ModeMismatch { .. })));
        assert!(assemble_action(&mesh, &dm, &ta, &none, &[0.0; 3]).is_err());
        let tw = tensor(Form::WeightedLaplacian, Mode::Matrix, 2, 1);
        assert!(matches!(assemble_matrix(&mesh, &dm, &tw, &none), Err(Error::CoefficientArity { .. })));
        let dm2 = build_dofmap(&mesh, 2).unwrap();
        assert!(assemble_matrix(&mesh, &dm2, &tm, &none).is_err());
    }
}
