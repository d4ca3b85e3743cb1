//! Flattened reference tensors and runtime geometry vectors.
//!
//! For a form on affine simplices the element tensor is a matrix-vector
//! product `a_K = A0 g_K`, where `A0` (rows: element-tensor entries,
//! columns: flattened coefficient and derivative-direction axes) is exact and
//! cell independent, and `g_K` carries the Jacobian inverse, determinant and
//! coefficient values of one cell.
//!
//! Column layout is row-major over the axes listed by
//! [`FlattenedReferenceTensor::col_axes`]: the weight index `c` slowest, then
//! the trial index `j` (action mode only), then the derivative directions in
//! subscript order.

mod build;
mod geometry;
mod oracle;

pub use geometry::{
    affine_map, affine_map_of, build_geometry_vector, contract, AffineMapData, CellCoefficients,
    CellGeometry, GeometryVector,
};
pub(crate) use geometry::{contract_into, write_geometry_vector};
pub use oracle::quadrature_oracle;

use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::format_table;
use crate::simplex_poly::{rational_to_string, space_dimension, to_f64, Rational, MAX_DEGREE_2D, MAX_DEGREE_3D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// `grad v . grad u`
    Laplacian,
    /// `w grad v . grad u`
    WeightedLaplacian,
    /// `v (beta . grad u)`, beta piecewise constant
    Advection,
    /// `v w du/dx_1`
    WeightedAdvectionX1,
}

impl Form {
    pub const ALL: [Form; 4] = [
        Form::Laplacian,
        Form::WeightedLaplacian,
        Form::Advection,
        Form::WeightedAdvectionX1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Form::Laplacian => "laplacian",
            Form::WeightedLaplacian => "weighted_laplacian",
            Form::Advection => "advection",
            Form::WeightedAdvectionX1 => "weighted_advection_x1",
        }
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, Form::WeightedLaplacian | Form::WeightedAdvectionX1)
    }

    pub fn has_beta(self) -> bool {
        matches!(self, Form::Advection)
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, Form::Laplacian | Form::WeightedLaplacian)
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Form {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Form::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown form `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Matrix,
    Action,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Matrix, Mode::Action];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Matrix => "matrix",
            Mode::Action => "action",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FormSpec {
    pub form: Form,
    pub mode: Mode,
    pub dim: usize,
    pub degree: usize,
}

impl FormSpec {
    pub fn new(form: Form, mode: Mode, dim: usize, degree: usize) -> Result<Self> {
        let spec = FormSpec {
            form,
            mode,
            dim,
            degree,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let max = match self.dim {
            2 => MAX_DEGREE_2D,
            3 => MAX_DEGREE_3D,
            _ => 0,
        };
        if self.degree == 0 || self.degree > max {
            return Err(Error::UnsupportedElement {
                dim: self.dim,
                degree: self.degree,
            });
        }
        Ok(())
    }

    /// Every supported spec for one spatial dimension.
    pub fn suite(dim: usize) -> Vec<FormSpec> {
        let max = if dim == 2 { MAX_DEGREE_2D } else { MAX_DEGREE_3D };
        let mut out = Vec::new();
        for form in Form::ALL {
            for mode in Mode::ALL {
                for degree in 1..=max {
                    out.push(FormSpec {
                        form,
                        mode,
                        dim,
                        degree,
                    });
                }
            }
        }
        out
    }

    /// `|P_k|`
    pub fn space_dim(&self) -> usize {
        space_dimension(self.dim, self.degree)
    }

    pub fn with_mode(&self, mode: Mode) -> FormSpec {
        FormSpec { mode, ..*self }
    }

    pub fn col_axes(&self) -> Vec<ColumnAxis> {
        let n = self.space_dim();
        let d = self.dim;
        let mut axes = Vec::new();
        if self.form.is_weighted() {
            axes.push(ColumnAxis::new("c", n));
        }
        if self.mode == Mode::Action {
            axes.push(ColumnAxis::new("j", n));
        }
        let derivative_axes: &[&str] = match self.form {
            Form::Laplacian | Form::WeightedLaplacian => &["alpha1", "alpha2"],
            Form::Advection => &["alpha1", "alpha2", "alpha3"],
            Form::WeightedAdvectionX1 => &["alpha"],
        };
        axes.extend(derivative_axes.iter().map(|name| ColumnAxis::new(name, d)));
        axes
    }

    /// Number of flattened derivative-direction columns (`d^2`, `d^3` or `d`).
    pub fn derivative_cols(&self) -> usize {
        match self.form {
            Form::Laplacian | Form::WeightedLaplacian => self.dim * self.dim,
            Form::Advection => self.dim.pow(3),
            Form::WeightedAdvectionX1 => self.dim,
        }
    }

    pub fn nrows(&self) -> usize {
        match self.mode {
            Mode::Matrix => self.space_dim().pow(2),
            Mode::Action => self.space_dim(),
        }
    }

    pub fn ncols(&self) -> usize {
        self.col_axes().iter().map(|a| a.extent).product()
    }

    pub fn row_labels(&self) -> Vec<Vec<usize>> {
        let n = self.space_dim();
        match self.mode {
            Mode::Matrix => (0..n).flat_map(|i| (0..n).map(move |j| vec![i, j])).collect(),
            Mode::Action => (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}-{}d-p{}", self.form, self.mode, self.dim, self.degree)
    }
}

impl fmt::Display for FormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} d={} k={}",
            self.form, self.mode, self.dim, self.degree
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnAxis {
    pub name: String,
    pub extent: usize,
}

impl ColumnAxis {
    fn new(name: &str, extent: usize) -> Self {
        ColumnAxis {
            name: name.to_string(),
            extent,
        }
    }
}

/// `A0` reshaped into a matrix, exact with a float mirror.
#[derive(Clone, Debug)]
pub struct FlattenedReferenceTensor {
    pub spec: FormSpec,
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<Rational>,
    values: Vec<f64>,
    pub row_labels: Vec<Vec<usize>>,
    pub col_axes: Vec<ColumnAxis>,
}

impl FlattenedReferenceTensor {
    /// Wraps explicit exact entries (row-major). Used for hand-built
    /// tensors; the form builders go through [`build_reference_tensor`].
    pub fn from_entries(spec: FormSpec, nrows: usize, ncols: usize, entries: Vec<Rational>) -> Result<Self> {
        if entries.len() != nrows * ncols {
            return Err(Error::LengthMismatch {
                expected: nrows * ncols,
                got: entries.len(),
            });
        }
        let values = entries.iter().map(to_f64).collect();
        Ok(FlattenedReferenceTensor {
            spec,
            nrows,
            ncols,
            entries,
            values,
            row_labels: (0..nrows).map(|r| vec![r]).collect(),
            col_axes: vec![ColumnAxis::new("col", ncols)],
        })
    }

    pub fn entry(&self, row: usize, col: usize) -> &Rational {
        &self.entries[row * self.ncols + col]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn row(&self, row: usize) -> &[Rational] {
        &self.entries[row * self.ncols..(row + 1) * self.ncols]
    }

    pub fn float_row(&self, row: usize) -> &[f64] {
        &self.values[row * self.ncols..(row + 1) * self.ncols]
    }

    pub fn entries(&self) -> &[Rational] {
        &self.entries
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|v| !v.is_zero()).count()
    }

    /// Overwrites one exact entry (and its float mirror).
    pub fn set_entry(&mut self, row: usize, col: usize, value: Rational) {
        let idx = row * self.ncols + col;
        self.values[idx] = to_f64(&value);
        self.entries[idx] = value;
    }

    pub fn row_label_string(&self, row: usize) -> String {
        let parts: Vec<String> = self.row_labels[row].iter().map(|i| i.to_string()).collect();
        format!("({})", parts.join(", "))
    }

    /// One line per row: `(i1, i2) | v1 v2 ...`, values at 11 significant
    /// digits.
    pub fn to_table_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.nrows {
            out.push_str(&self.row_label_string(r));
            out.push_str(" |");
            for v in self.float_row(r) {
                out.push(' ');
                out.push_str(&format_table(*v, 11));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> TensorJson {
        TensorJson {
            spec: self.spec,
            nrows: self.nrows,
            ncols: self.ncols,
            row_labels: self.row_labels.clone(),
            col_axes: self.col_axes.clone(),
            entries: (0..self.nrows)
                .map(|r| self.row(r).iter().map(rational_to_string).collect())
                .collect(),
        }
    }
}

/// Exact-rational serialization of a tensor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorJson {
    pub spec: FormSpec,
    pub nrows: usize,
    pub ncols: usize,
    pub row_labels: Vec<Vec<usize>>,
    pub col_axes: Vec<ColumnAxis>,
    pub entries: Vec<Vec<String>>,
}

pub use build::build_reference_tensor;
