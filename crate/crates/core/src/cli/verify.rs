use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_action, assemble_matrix, build_dofmap, unit_cube_mesh, unit_square_mesh, GlobalCoefficients, Mesh,
};
use crate::error::Result;
use crate::form_tensors::{
    affine_map, build_geometry_vector, build_reference_tensor, contract, quadrature_oracle, CellCoefficients,
    CellGeometry, FlattenedReferenceTensor, Form, FormSpec, GeometryVector, Mode,
};
use crate::progir::{generate, interpret};
use crate::relations::{forest_cost, optimize};
use crate::simplex_poly::rat_int;

pub const ORACLE_TOL: f64 = 1e-10;
pub const PROGRAM_TOL: f64 = 1e-12;
pub const GLOBAL_MATRIX_TOL: f64 = 1e-10;
pub const GLOBAL_VECTOR_TOL: f64 = 1e-9;
pub const ROW_SUM_TOL: f64 = 1e-9;
pub const ORACLE_CELLS: usize = 20;
pub const PROGRAM_SAMPLES: usize = 100;

/// `max |a - b| / max |b|`, falling back to the absolute error when `b`
/// vanishes.
pub fn normwise_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// A random cell with vertices in `[-1, 1]^d` whose Jacobian is not close
/// to singular.
pub fn random_cell(rng: &mut impl Rng, dim: usize) -> CellGeometry {
    loop {
        let cell = CellGeometry::new(
            (0..=dim)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
        );
        if let Ok(map) = affine_map(&cell) {
            if map.det.abs() > 0.05 {
                return cell;
            }
        }
    }
}

/// Largest `|y - c| / max(|c|, sum |a_j g_j|)` over the rows, the error of
/// a program relative to the naive dot products.
pub fn program_rel_err(tensor: &FlattenedReferenceTensor, g: &[f64], y: &[f64], naive: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..tensor.nrows {
        let mag: f64 = tensor.float_row(r).iter().zip(g).map(|(a, b)| (a * b).abs()).sum();
        let scale = mag.max(naive[r].abs());
        let err = (y[r] - naive[r]).abs();
        worst = worst.max(if scale > 0.0 { err / scale } else { err });
    }
    worst
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseCheck {
    pub form: Form,
    pub mode: Mode,
    pub dim: usize,
    pub degree: usize,
    pub passed: bool,
    pub oracle_rel_err: f64,
    pub program_rel_err: f64,
    /// Absolute for matrices, relative for vectors.
    pub global_err: f64,
    pub duality_rel_err: f64,
    pub row_sum_max: Option<f64>,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub mesh_n_2d: usize,
    pub mesh_n_3d: usize,
    pub passed: usize,
    pub failed: usize,
    pub cases: Vec<CaseCheck>,
}

impl VerifySummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.cases {
            let spec = FormSpec {
                form: c.form,
                mode: c.mode,
                dim: c.dim,
                degree: c.degree,
            };
            let _ = write!(
                out,
                "{} {:<36} oracle {:.1e}  program {:.1e}  global {:.1e}  duality {:.1e}",
                if c.passed { "PASS" } else { "FAIL" },
                spec.to_string(),
                c.oracle_rel_err,
                c.program_rel_err,
                c.global_err,
                c.duality_rel_err
            );
            if let Some(rs) = c.row_sum_max {
                let _ = write!(out, "  rowsum {rs:.1e}");
            }
            for f in &c.failures {
                let _ = write!(out, "\n     {f}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "{}/{} cases passed (seed {}, mesh n: 2D {}, 3D {})",
            self.passed,
            self.passed + self.failed,
            self.seed,
            self.mesh_n_2d,
            self.mesh_n_3d
        );
        out
    }
}

/// Test hook: perturbs one entry so that every downstream check should
/// notice.
fn corrupt(tensor: &mut FlattenedReferenceTensor) {
    let v = tensor.entry(0, 0) + rat_int(1);
    tensor.set_entry(0, 0, v);
}

fn case_rng(seed: u64, spec: &FormSpec) -> ChaCha8Rng {
    let form = Form::ALL.iter().position(|f| *f == spec.form).unwrap_or(0) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((((form * 2 + (spec.mode == Mode::Action) as u64) * 10 + spec.dim as u64) * 10 + spec.degree as u64) | 1 << 32);
    rng
}

fn uniform(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn check_case(spec: FormSpec, mesh: &Mesh, seed: u64, inject_fault: bool) -> Result<CaseCheck> {
    let mut rng = case_rng(seed, &spec);
    let mut tensor = build_reference_tensor(spec)?;
    if inject_fault {
        corrupt(&mut tensor);
    }
    let forest = optimize(&tensor);
    let program = generate(&forest, &tensor)?;
    let n = spec.space_dim();
    let d = spec.dim;
    let mut failures = Vec::new();

    let counts = forest_cost(&forest, &tensor);
    if !(counts.ferari <= counts.ffc && counts.ffc <= counts.base) || program.op_counts.maps != counts.ferari {
        failures.push(format!("op counts out of order: {counts:?}"));
    }

    let mut oracle_rel_err: f64 = 0.0;
    for _ in 0..ORACLE_CELLS {
        let cell = random_cell(&mut rng, d);
        let (w, beta, u) = (uniform(&mut rng, n), uniform(&mut rng, d), uniform(&mut rng, n));
        let coeffs = CellCoefficients {
            weight: Some(&w),
            beta: Some(&beta),
            trial: Some(&u),
        };
        let g = build_geometry_vector(&spec, &affine_map(&cell)?, &coeffs)?;
        let a = contract(&tensor, &g)?;
        let o = quadrature_oracle(&spec, &cell, &coeffs)?;
        oracle_rel_err = oracle_rel_err.max(normwise_rel_err(&a, &o));
    }
    if !(oracle_rel_err <= ORACLE_TOL) {
        failures.push(format!("oracle mismatch {oracle_rel_err:.3e} > {ORACLE_TOL:e}"));
    }

    let mut program_err: f64 = 0.0;
    for _ in 0..PROGRAM_SAMPLES {
        let g = uniform(&mut rng, tensor.ncols);
        let y = interpret(&program, &g)?;
        let naive = contract(&tensor, &GeometryVector { values: g.clone() })?;
        program_err = program_err.max(program_rel_err(&tensor, &g, &y, &naive));
    }
    if !(program_err <= PROGRAM_TOL) {
        failures.push(format!("program mismatch {program_err:.3e} > {PROGRAM_TOL:e}"));
    }

    let dofmap = build_dofmap(mesh, spec.degree)?;
    let ndofs = dofmap.num_global_dofs;
    let weight: Vec<f64> = (0..ndofs).map(|_| rng.gen_range(0.5..1.5)).collect();
    let beta = uniform(&mut rng, d);
    let u = uniform(&mut rng, ndofs);
    let coeffs = GlobalCoefficients {
        weight: spec.form.is_weighted().then_some(weight.as_slice()),
        beta: spec.form.has_beta().then_some(beta.as_slice()),
    };

    // the other mode of the same form, uncorrupted
    let other = build_reference_tensor(spec.with_mode(match spec.mode {
        Mode::Matrix => Mode::Action,
        Mode::Action => Mode::Matrix,
    }))?;
    let (matrix_tensor, action_tensor) = match spec.mode {
        Mode::Matrix => (&tensor, &other),
        Mode::Action => (&other, &tensor),
    };

    let global_err;
    let mut row_sum_max = None;
    match spec.mode {
        Mode::Matrix => {
            let naive = assemble_matrix(mesh, &dofmap, &tensor, &coeffs)?;
            let opt = assemble_matrix(mesh, &dofmap, &program, &coeffs)?;
            global_err = naive.max_abs_diff(&opt);
            if !(global_err <= GLOBAL_MATRIX_TOL) {
                failures.push(format!("global matrix mismatch {global_err:.3e}"));
            }
            if spec.form.is_symmetric() {
                let rs = opt.row_sums().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if !(rs <= ROW_SUM_TOL) {
                    failures.push(format!("row sums {rs:.3e}"));
                }
                row_sum_max = Some(rs);
            }
        }
        Mode::Action => {
            let naive = assemble_action(mesh, &dofmap, &tensor, &coeffs, &u)?;
            let opt = assemble_action(mesh, &dofmap, &program, &coeffs, &u)?;
            global_err = normwise_rel_err(&opt, &naive);
            if !(global_err <= GLOBAL_VECTOR_TOL) {
                failures.push(format!("global vector mismatch {global_err:.3e}"));
            }
        }
    }

    let a = assemble_matrix(mesh, &dofmap, matrix_tensor, &coeffs)?;
    let b = assemble_action(mesh, &dofmap, action_tensor, &coeffs, &u)?;
    let duality_rel_err = normwise_rel_err(&b, &a.mul_vec(&u)?);
    if !(duality_rel_err <= GLOBAL_VECTOR_TOL) {
        failures.push(format!("matrix/action mismatch {duality_rel_err:.3e}"));
    }

    Ok(CaseCheck {
        form: spec.form,
        mode: spec.mode,
        dim: spec.dim,
        degree: spec.degree,
        passed: failures.is_empty(),
        oracle_rel_err,
        program_rel_err: program_err,
        global_err,
        duality_rel_err,
        row_sum_max,
        failures,
    })
}

pub fn verify(specs: &[FormSpec], mesh_n_2d: usize, mesh_n_3d: usize, seed: u64, inject_fault: bool) -> Result<VerifySummary> {
    let mut meshes: [Option<Mesh>; 2] = [None, None];
    let mut cases = Vec::with_capacity(specs.len());
    for spec in specs {
        let slot = &mut meshes[spec.dim - 2];
        if slot.is_none() {
            *slot = Some(if spec.dim == 2 {
                unit_square_mesh(mesh_n_2d)?
            } else {
                unit_cube_mesh(mesh_n_3d)?
            });
        }
        let mesh = slot.as_ref().expect("just built");
        cases.push(check_case(*spec, mesh, seed, inject_fault)?);
    }
    let passed = cases.iter().filter(|c| c.passed).count();
    Ok(VerifySummary {
        seed,
        mesh_n_2d,
        mesh_n_3d,
        passed,
        failed: cases.len() - passed,
        cases,
    })
}
