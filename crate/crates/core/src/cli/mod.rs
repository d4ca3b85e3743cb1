//! Command-line front end.
//!
//! ```text
//! formopt tensor   --form laplacian --mode matrix --dim 2 --degree 2
//! formopt optimize --form laplacian --mode matrix --dim 2 --degree 2 -O --out build
//! formopt bench    --dim 2 --mesh-n 8 --out build
//! formopt verify   --dim 2 --seed 7
//! ```
//!
//! Exit codes: 0 success, 1 verification failure or runtime error, 2 usage
//! error.

pub mod verify;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::assembly::{benchmark, BenchConfig};
use crate::error::{Error, Result};
use crate::form_tensors::{build_reference_tensor, Form, FormSpec, Mode};
use crate::progir::{emit_dot, emit_text, generate, generate_direct, ProgramJson, ProgramOpCounts};
use crate::relations::{build_graph_until, forest_cost, minimum_spanning_forest, OpCounts};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "formopt", version, about = "Optimizing compiler for finite element forms on affine simplices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the flattened reference tensor.
    Tensor(CaseArgs),
    /// Optimize one case and write kernel.txt, forest.dot and program.json.
    Optimize(CaseArgs),
    /// Time naive and optimized kernels; writes report.json and report.txt.
    Bench(CaseArgs),
    /// Check tensors, programs and assembly against independent oracles.
    Verify(CaseArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args, Debug, Clone)]
struct CaseArgs {
    #[arg(long)]
    form: Option<Form>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
    /// Emit the optimized kernel instead of the zero-skipping direct one.
    #[arg(short = 'O', long)]
    optimize: bool,
    /// Mesh resolution for both dimensions (default: 64/16 for bench, 8/4 for verify).
    #[arg(long)]
    mesh_n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Output directory for generated files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-case time budget in seconds.
    #[arg(long, default_value_t = 600.0)]
    time_budget: f64,
    /// Corrupt one tensor entry before verifying.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Debug)]
enum CmdError {
    Usage(String),
    Run(Error),
}

impl<E: Into<Error>> From<E> for CmdError {
    fn from(e: E) -> Self {
        CmdError::Run(e.into())
    }
}

type CmdResult = std::result::Result<i32, CmdError>;

impl CaseArgs {
    fn single(&self) -> std::result::Result<FormSpec, CmdError> {
        let missing: Vec<&str> = [
            ("--form", self.form.is_none()),
            ("--mode", self.mode.is_none()),
            ("--dim", self.dim.is_none()),
            ("--degree", self.degree.is_none()),
        ]
        .iter()
        .filter(|(_, m)| *m)
        .map(|(n, _)| *n)
        .collect();
        if !missing.is_empty() {
            return Err(CmdError::Usage(format!("missing {}", missing.join(", "))));
        }
        FormSpec::new(
            self.form.expect("checked"),
            self.mode.expect("checked"),
            self.dim.expect("checked"),
            self.degree.expect("checked"),
        )
        .map_err(|e| CmdError::Usage(e.to_string()))
    }

    /// Every supported spec matching the given selectors.
    fn selection(&self) -> std::result::Result<Vec<FormSpec>, CmdError> {
        let dims: Vec<usize> = match self.dim {
            Some(d) if d == 2 || d == 3 => vec![d],
            Some(d) => return Err(CmdError::Usage(format!("unsupported dimension {d}"))),
            None => vec![2, 3],
        };
        let mut specs = Vec::new();
        for d in dims {
            if let Some(k) = self.degree {
                FormSpec::new(Form::Laplacian, Mode::Matrix, d, k).map_err(|e| CmdError::Usage(e.to_string()))?;
            }
            specs.extend(FormSpec::suite(d).into_iter().filter(|s| {
                self.form.map_or(true, |f| f == s.form)
                    && self.mode.map_or(true, |m| m == s.mode)
                    && self.degree.map_or(true, |k| k == s.degree)
            }));
        }
        if specs.is_empty() {
            return Err(CmdError::Usage("no case matches the selectors".into()));
        }
        Ok(specs)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

/// What `optimize` reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub spec: FormSpec,
    pub nrows: usize,
    pub ncols: usize,
    pub nnz: usize,
    pub status: String,
    pub op_counts: Option<OpCounts>,
    pub relation_counts: BTreeMap<String, usize>,
    pub optimized: bool,
    pub kernel_op_counts: Option<ProgramOpCounts>,
    pub tensor_secs: f64,
    pub optimizer_secs: Option<f64>,
    pub files: Vec<String>,
}

impl OptimizeSummary {
    fn to_text(&self) -> String {
        let mut s = format!(
            "case: {}\ntensor: {} x {}, {} nonzeros\n",
            self.spec, self.nrows, self.ncols, self.nnz
        );
        let Some(c) = self.op_counts else {
            s.push_str(&format!("skipped: {}\n", self.status));
            return s;
        };
        let ratio = |n: u64| if c.ferari == 0 { 0.0 } else { n as f64 / c.ferari as f64 };
        s.push_str(&format!(
            "op counts (multiply-add pairs): base {}  ffc {}  ferari {}\nratios: base/ferari {:.2}  ffc/ferari {:.2}\n",
            c.base,
            c.ffc,
            c.ferari,
            ratio(c.base),
            ratio(c.ffc)
        ));
        let rels: Vec<String> = self.relation_counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
        s.push_str(&format!("relations: {}\n", rels.join(", ")));
        if let Some(k) = self.kernel_op_counts {
            s.push_str(&format!(
                "emitted kernel: {}, {} multiplies, {} additions\n",
                if self.optimized { "optimized" } else { "direct (pass -O to optimize)" },
                k.multiplies,
                k.additions
            ));
        }
        s.push_str(&format!(
            "tensor time {:.3} s, optimizer time {:.3} s\n",
            self.tensor_secs,
            self.optimizer_secs.unwrap_or(0.0)
        ));
        if !self.files.is_empty() {
            s.push_str(&format!("wrote {}\n", self.files.join(", ")));
        }
        s
    }
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    files.push(path.display().to_string());
    Ok(())
}

fn cmd_tensor(args: &CaseArgs, out: &mut dyn Write) -> CmdResult {
    let spec = args.single()?;
    let tensor = build_reference_tensor(spec)?;
    let text = match args.format {
        Format::Text => tensor.to_table_text(),
        Format::Json => serde_json::to_string_pretty(&tensor.to_json())? + "\n",
    };
    if args.out.is_some() {
        let name = if args.format == Format::Json { "tensor.json" } else { "tensor.txt" };
        fs::write(args.out_dir()?.join(name), &text)?;
    }
    out.write_all(text.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_optimize(args: &CaseArgs, out: &mut dyn Write) -> CmdResult {
    let spec = args.single()?;
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(args.time_budget.max(0.0));
    let tensor = build_reference_tensor(spec)?;
    let tensor_secs = start.elapsed().as_secs_f64();
    let mut summary = OptimizeSummary {
        spec,
        nrows: tensor.nrows,
        ncols: tensor.ncols,
        nnz: tensor.nnz(),
        status: "ok".into(),
        op_counts: None,
        relation_counts: BTreeMap::new(),
        optimized: args.optimize,
        kernel_op_counts: None,
        tensor_secs,
        optimizer_secs: None,
        files: Vec::new(),
    };

    let t_opt = Instant::now();
    match build_graph_until(&tensor, Some((deadline, args.time_budget))) {
        Err(Error::BudgetExceeded { phase, budget_secs }) => {
            summary.status = format!("time budget of {budget_secs} s exceeded during {phase}");
        }
        Err(e) => return Err(e.into()),
        Ok(graph) => {
            let forest = minimum_spanning_forest(&graph);
            drop(graph);
            let optimized = generate(&forest, &tensor)?;
            summary.optimizer_secs = Some(t_opt.elapsed().as_secs_f64());
            summary.op_counts = Some(forest_cost(&forest, &tensor));
            for rel in &forest.relation {
                *summary.relation_counts.entry(rel.kind().to_string()).or_default() += 1;
            }
            let program = if args.optimize { optimized } else { generate_direct(&tensor) };
            summary.kernel_op_counts = Some(program.op_counts);
            let dir = args.out_dir()?;
            let mut files = Vec::new();
            write_file(&dir, "kernel.txt", &emit_text(&program), &mut files)?;
            write_file(&dir, "forest.dot", &emit_dot(&forest), &mut files)?;
            let json = serde_json::to_string_pretty(&ProgramJson::from(&program))? + "\n";
            write_file(&dir, "program.json", &json, &mut files)?;
            summary.files = files;
        }
    }
    let text = match args.format {
        Format::Text => summary.to_text(),
        Format::Json => serde_json::to_string_pretty(&summary)? + "\n",
    };
    out.write_all(text.as_bytes())?;
    Ok(EXIT_OK)
}

fn cmd_bench(args: &CaseArgs, out: &mut dyn Write) -> CmdResult {
    let specs = args.selection()?;
    let defaults = BenchConfig::default();
    let config = BenchConfig {
        mesh_n_2d: args.mesh_n.unwrap_or(defaults.mesh_n_2d),
        mesh_n_3d: args.mesh_n.unwrap_or(defaults.mesh_n_3d),
        seed: args.seed,
        time_budget_secs: args.time_budget,
        ..defaults
    };
    let report = benchmark(&specs, &config)?;
    let dir = args.out_dir()?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    let text = report.to_text();
    fs::write(dir.join("report.json"), &json)?;
    fs::write(dir.join("report.txt"), &text)?;
    match args.format {
        Format::Text => out.write_all(text.as_bytes())?,
        Format::Json => out.write_all(json.as_bytes())?,
    }
    Ok(if report.cases.iter().any(|c| c.completed()) {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

fn cmd_verify(args: &CaseArgs, out: &mut dyn Write) -> CmdResult {
    let specs = args.selection()?;
    let summary = verify::verify(
        &specs,
        args.mesh_n.unwrap_or(8),
        args.mesh_n.unwrap_or(4),
        args.seed,
        args.inject_fault,
    )?;
    let text = match args.format {
        Format::Text => summary.to_text(),
        Format::Json => serde_json::to_string_pretty(&summary)? + "\n",
    };
    if args.out.is_some() {
        let name = if args.format == Format::Json { "verify.json" } else { "verify.txt" };
        fs::write(args.out_dir()?.join(name), &text)?;
    }
    out.write_all(text.as_bytes())?;
    Ok(if summary.failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Tensor(a) => cmd_tensor(a, out),
        Command::Optimize(a) => cmd_optimize(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Verify(a) => cmd_verify(a, out),
    };
    match result {
        Ok(code) => code,
        Err(CmdError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CmdError::Run(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}
