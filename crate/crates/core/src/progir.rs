//! Unrolled straight-line programs for `y = A0 g`.
//!
//! A program assigns every row `y[R]` exactly once, in an order where each
//! row's source is already available. Three instruction shapes exist:
//!
//! ```text
//! y[R] = c1*g[C1] + c2*g[C2] ...      direct, zeros skipped
//! y[R] = s*y[S]                       scale (s = 1 is a free copy)
//! y[R] = y[S] + d1*g[C1] + ...        delta over the differing columns
//! ```

use std::fmt::Write as _;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form_tensors::{FlattenedReferenceTensor, FormSpec};
use crate::numfmt::format_sig;
use crate::relations::{DependencyForest, Parent, Relation};
use crate::simplex_poly::to_f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Instruction {
    Direct {
        row: usize,
        terms: Vec<(usize, f64)>,
    },
    Scale {
        row: usize,
        src_row: usize,
        scalar: f64,
    },
    Delta {
        row: usize,
        src_row: usize,
        terms: Vec<(usize, f64)>,
    },
}

impl Instruction {
    pub fn row(&self) -> usize {
        match self {
            Instruction::Direct { row, .. } | Instruction::Scale { row, .. } | Instruction::Delta { row, .. } => *row,
        }
    }

    pub fn source(&self) -> Option<usize> {
        match self {
            Instruction::Direct { .. } => None,
            Instruction::Scale { src_row, .. } | Instruction::Delta { src_row, .. } => Some(*src_row),
        }
    }

    fn counts(&self) -> ProgramOpCounts {
        match self {
            Instruction::Direct { terms, .. } => {
                let t = terms.len() as u64;
                ProgramOpCounts {
                    maps: t,
                    multiplies: t,
                    additions: t.saturating_sub(1),
                }
            }
            Instruction::Scale { scalar, .. } if *scalar == 1.0 => ProgramOpCounts::default(),
            Instruction::Scale { .. } => ProgramOpCounts {
                maps: 1,
                multiplies: 1,
                additions: 0,
            },
            Instruction::Delta { terms, .. } => {
                let t = terms.len() as u64;
                ProgramOpCounts {
                    maps: t,
                    multiplies: t,
                    additions: t,
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramOpCounts {
    /// Multiply-add pairs.
    pub maps: u64,
    pub multiplies: u64,
    pub additions: u64,
}

#[derive(Clone, Debug, Copy)]
enum FlatOp {
    Direct { row: u32, start: u32, end: u32 },
    Copy { row: u32, src: u32 },
    Scale { row: u32, src: u32, scalar: f64 },
    Delta { row: u32, src: u32, start: u32, end: u32 },
}

/// Instructions lowered to contiguous arrays for the evaluation loop.
#[derive(Clone, Debug, Default)]
struct FlatKernel {
    ops: Vec<FlatOp>,
    cols: Vec<u32>,
    coeffs: Vec<f64>,
}

impl FlatKernel {
    fn lower(instructions: &[Instruction]) -> Self {
        let mut k = FlatKernel::default();
        let push_terms = |k: &mut FlatKernel, terms: &[(usize, f64)]| {
            let start = k.cols.len() as u32;
            for &(c, v) in terms {
                k.cols.push(c as u32);
                k.coeffs.push(v);
            }
            (start, k.cols.len() as u32)
        };
        for ins in instructions {
            let op = match ins {
                Instruction::Direct { row, terms } => {
                    let (start, end) = push_terms(&mut k, terms);
                    FlatOp::Direct {
                        row: *row as u32,
                        start,
                        end,
                    }
                }
                Instruction::Scale { row, src_row, scalar } if *scalar == 1.0 => FlatOp::Copy {
                    row: *row as u32,
                    src: *src_row as u32,
                },
                Instruction::Scale { row, src_row, scalar } => FlatOp::Scale {
                    row: *row as u32,
                    src: *src_row as u32,
                    scalar: *scalar,
                },
                Instruction::Delta { row, src_row, terms } => {
                    let (start, end) = push_terms(&mut k, terms);
                    FlatOp::Delta {
                        row: *row as u32,
                        src: *src_row as u32,
                        start,
                        end,
                    }
                }
            };
            k.ops.push(op);
        }
        k
    }

    #[inline]
    fn dot(&self, start: u32, end: u32, g: &[f64]) -> f64 {
        let (s, e) = (start as usize, end as usize);
        let mut acc = 0.0;
        for (c, v) in self.cols[s..e].iter().zip(&self.coeffs[s..e]) {
            acc += v * g[*c as usize];
        }
        acc
    }

    fn run(&self, g: &[f64], y: &mut [f64]) {
        for op in &self.ops {
            match *op {
                FlatOp::Direct { row, start, end } => y[row as usize] = self.dot(start, end, g),
                FlatOp::Copy { row, src } => y[row as usize] = y[src as usize],
                FlatOp::Scale { row, src, scalar } => y[row as usize] = scalar * y[src as usize],
                FlatOp::Delta { row, src, start, end } => {
                    y[row as usize] = y[src as usize] + self.dot(start, end, g)
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct StraightLineProgram {
    pub spec: FormSpec,
    pub nrows: usize,
    pub ncols: usize,
    pub instructions: Vec<Instruction>,
    pub op_counts: ProgramOpCounts,
    flat: FlatKernel,
}

impl StraightLineProgram {
    /// Validates and wraps an instruction list: every row written exactly
    /// once, sources written before use, columns in range.
    pub fn from_instructions(spec: FormSpec, nrows: usize, ncols: usize, instructions: Vec<Instruction>) -> Result<Self> {
        let mut written = vec![false; nrows];
        for ins in &instructions {
            let row = ins.row();
            if row >= nrows {
                return Err(Error::InconsistentProgram(format!("row {row} out of range")));
            }
            if let Some(src) = ins.source() {
                if src >= nrows || !written[src] {
                    return Err(Error::InconsistentProgram(format!("row {row} reads y[{src}] before it is written")));
                }
            }
            if written[row] {
                return Err(Error::InconsistentProgram(format!("row {row} written twice")));
            }
            let terms = match ins {
                Instruction::Direct { terms, .. } | Instruction::Delta { terms, .. } => terms.as_slice(),
                Instruction::Scale { scalar, .. } => {
                    if *scalar == 0.0 {
                        return Err(Error::InconsistentProgram(format!("row {row} scales by zero")));
                    }
                    &[]
                }
            };
            if terms.iter().any(|&(c, v)| c >= ncols || v == 0.0) {
                return Err(Error::InconsistentProgram(format!("row {row} has a zero or out-of-range term")));
            }
            if matches!(ins, Instruction::Delta { terms, .. } if terms.is_empty()) {
                return Err(Error::InconsistentProgram(format!("row {row} has an empty delta")));
            }
            written[row] = true;
        }
        if let Some(missing) = written.iter().position(|w| !w) {
            return Err(Error::InconsistentProgram(format!("row {missing} never written")));
        }
        let op_counts = count_instructions(&instructions);
        let flat = FlatKernel::lower(&instructions);
        Ok(StraightLineProgram {
            spec,
            nrows,
            ncols,
            instructions,
            op_counts,
            flat,
        })
    }

    /// Evaluates into a caller-owned buffer of length `nrows`.
    pub fn evaluate_into(&self, g: &[f64], y: &mut [f64]) -> Result<()> {
        if g.len() != self.ncols {
            return Err(Error::LengthMismatch {
                expected: self.ncols,
                got: g.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(Error::LengthMismatch {
                expected: self.nrows,
                got: y.len(),
            });
        }
        self.flat.run(g, y);
        Ok(())
    }

    pub(crate) fn run_unchecked(&self, g: &[f64], y: &mut [f64]) {
        self.flat.run(g, y);
    }
}

fn count_instructions(instructions: &[Instruction]) -> ProgramOpCounts {
    instructions.iter().map(Instruction::counts).fold(ProgramOpCounts::default(), |a, b| ProgramOpCounts {
        maps: a.maps + b.maps,
        multiplies: a.multiplies + b.multiplies,
        additions: a.additions + b.additions,
    })
}

fn direct_terms(tensor: &FlattenedReferenceTensor, row: usize) -> Vec<(usize, f64)> {
    tensor
        .row(row)
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_zero())
        .map(|(c, v)| (c, to_f64(v)))
        .collect()
}

/// Lowers a dependency forest to a program, rows in the forest's
/// topological order.
pub fn generate(forest: &DependencyForest, tensor: &FlattenedReferenceTensor) -> Result<StraightLineProgram> {
    if forest.nrows() != tensor.nrows || forest.topo_order.len() != tensor.nrows {
        return Err(Error::InconsistentProgram(format!(
            "forest has {} rows, tensor has {}",
            forest.nrows(),
            tensor.nrows
        )));
    }
    let mut instructions = Vec::with_capacity(tensor.nrows);
    for &row in &forest.topo_order {
        let ins = match (forest.parent[row], &forest.relation[row]) {
            (Parent::Root, Relation::Direct { .. }) => Instruction::Direct {
                row,
                terms: direct_terms(tensor, row),
            },
            (Parent::Row(src_row), Relation::Equal) => Instruction::Scale {
                row,
                src_row,
                scalar: 1.0,
            },
            (Parent::Row(src_row), Relation::Collinear { scalar }) => Instruction::Scale {
                row,
                src_row,
                scalar: to_f64(scalar),
            },
            (Parent::Row(src_row), Relation::Hamming { diff_positions }) => {
                let (a, p) = (tensor.row(row), tensor.row(src_row));
                let terms = diff_positions.iter().map(|&c| (c, to_f64(&(&a[c] - &p[c])))).collect();
                Instruction::Delta { row, src_row, terms }
            }
            (parent, rel) => {
                return Err(Error::InconsistentProgram(format!(
                    "row {row}: relation {} cannot hang off {parent:?}",
                    rel.kind()
                )))
            }
        };
        instructions.push(ins);
    }
    let program = StraightLineProgram::from_instructions(tensor.spec, tensor.nrows, tensor.ncols, instructions)?;
    if program.op_counts.maps != forest.total_cost {
        return Err(Error::InconsistentProgram(format!(
            "program costs {} MAPs, forest {}",
            program.op_counts.maps, forest.total_cost
        )));
    }
    Ok(program)
}

/// The unoptimized baseline: every row computed directly, zeros skipped.
pub fn generate_direct(tensor: &FlattenedReferenceTensor) -> StraightLineProgram {
    let instructions = (0..tensor.nrows)
        .map(|row| Instruction::Direct {
            row,
            terms: direct_terms(tensor, row),
        })
        .collect();
    StraightLineProgram::from_instructions(tensor.spec, tensor.nrows, tensor.ncols, instructions)
        .expect("direct program is well formed")
}

pub fn interpret(program: &StraightLineProgram, g: &[f64]) -> Result<Vec<f64>> {
    let mut y = vec![0.0; program.nrows];
    program.evaluate_into(g, &mut y)?;
    Ok(y)
}

pub fn count_ops(program: &StraightLineProgram) -> ProgramOpCounts {
    count_instructions(&program.instructions)
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], leading: bool) {
    for (i, &(c, v)) in terms.iter().enumerate() {
        let mag = format_sig(v.abs(), 17);
        if i == 0 && leading {
            let sign = if v < 0.0 { "-" } else { "" };
            let _ = write!(out, "{sign}{mag}*g[{c}]");
        } else {
            let sign = if v < 0.0 { '-' } else { '+' };
            let _ = write!(out, " {sign} {mag}*g[{c}]");
        }
    }
}

/// Kernel text, one line per instruction.
pub fn emit_text(program: &StraightLineProgram) -> String {
    let mut out = String::new();
    for ins in &program.instructions {
        match ins {
            Instruction::Direct { row, terms } => {
                let _ = write!(out, "y[{row}] = ");
                if terms.is_empty() {
                    out.push('0');
                } else {
                    write_terms(&mut out, terms, true);
                }
            }
            Instruction::Scale { row, src_row, scalar } => {
                let _ = write!(out, "y[{row}] = {}*y[{src_row}]", format_sig(*scalar, 17));
            }
            Instruction::Delta { row, src_row, terms } => {
                let _ = write!(out, "y[{row}] = y[{src_row}]");
                write_terms(&mut out, terms, false);
            }
        }
        out.push('\n');
    }
    out
}

fn bracketed(s: &str, prefix: &str) -> Option<usize> {
    s.strip_prefix(prefix)?.strip_suffix(']')?.parse().ok()
}

/// Parses kernel text back into instructions. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_text<'a>(text: &'a str) -> Result<Vec<Instruction>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let (lhs, rhs) = line.split_once(" = ").ok_or_else(|| err("missing ` = `"))?;
        let row = bracketed(lhs.trim(), "y[").ok_or_else(|| err("bad target"))?;
        let rhs = rhs.trim();
        if rhs == "0" {
            out.push(Instruction::Direct { row, terms: vec![] });
            continue;
        }
        // split into signed tokens
        let mut tokens: Vec<(f64, &str)> = Vec::new();
        let mut rest = rhs;
        let mut sign = 1.0;
        if let Some(r) = rest.strip_prefix('-') {
            sign = -1.0;
            rest = r;
        }
        loop {
            let next = rest.find(" + ").map(|i| (i, 1.0)).into_iter().chain(rest.find(" - ").map(|i| (i, -1.0))).min_by_key(|(i, _)| *i);
            match next {
                Some((i, s)) => {
                    tokens.push((sign, &rest[..i]));
                    sign = s;
                    rest = &rest[i + 3..];
                }
                None => {
                    tokens.push((sign, rest));
                    break;
                }
            }
        }
        let parse_term = |(s, tok): (f64, &'a str)| -> Result<(f64, &'a str)> {
            let (c, var) = tok.split_once('*').ok_or_else(|| err("expected `coeff*var`"))?;
            let c: f64 = c.parse().map_err(|_| err("bad coefficient"))?;
            Ok((s * c, var))
        };
        let first = tokens[0];
        if first.1.starts_with("y[") {
            // delta
            let src_row = bracketed(first.1, "y[").ok_or_else(|| err("bad source"))?;
            if first.0 < 0.0 {
                return Err(err("negated source"));
            }
            let terms = tokens[1..]
                .iter()
                .map(|&t| {
                    let (c, var) = parse_term(t)?;
                    Ok((bracketed(var, "g[").ok_or_else(|| err("bad column"))?, c))
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(Instruction::Delta { row, src_row, terms });
        } else if tokens.len() == 1 && first.1.contains("*y[") {
            let (scalar, var) = parse_term(first)?;
            let src_row = bracketed(var, "y[").ok_or_else(|| err("bad source"))?;
            out.push(Instruction::Scale { row, src_row, scalar });
        } else {
            let terms = tokens
                .iter()
                .map(|&t| {
                    let (c, var) = parse_term(t)?;
                    Ok((bracketed(var, "g[").ok_or_else(|| err("bad column"))?, c))
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(Instruction::Direct { row, terms });
        }
    }
    Ok(out)
}

/// Dependency forest as a DOT digraph; arrows point from a row to the row
/// it is computed from, and directly computed rows have no outgoing arrow.
pub fn emit_dot(forest: &DependencyForest) -> String {
    let mut out = String::from("digraph dependencies {\n  rankdir=RL;\n  node [shape=box];\n");
    for (r, label) in forest.labels.iter().enumerate() {
        let _ = writeln!(out, "  n{r} [label=\"{label}\"];");
    }
    for r in 0..forest.nrows() {
        if let Parent::Row(p) = forest.parent[r] {
            let rel = &forest.relation[r];
            let _ = writeln!(out, "  n{r} -> n{p} [label=\"{} {}\"];", rel.kind(), rel.cost());
        }
    }
    out.push_str("}\n");
    out
}

/// JSON dump of a program.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProgramJson {
    pub spec: FormSpec,
    pub nrows: usize,
    pub ncols: usize,
    pub instructions: Vec<Instruction>,
    pub op_counts: ProgramOpCounts,
}

impl From<&StraightLineProgram> for ProgramJson {
    fn from(p: &StraightLineProgram) -> Self {
        ProgramJson {
            spec: p.spec,
            nrows: p.nrows,
            ncols: p.ncols,
            instructions: p.instructions.clone(),
            op_counts: p.op_counts,
        }
    }
}
