use std::collections::HashMap;
use std::fmt::Write as _;
use std::hint::black_box;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    assemble_action, assemble_matrix, build_dofmap, unit_cube_mesh, unit_square_mesh, DofMap, ElementKernel,
    GlobalCoefficients, Mesh,
};
use crate::error::{Error, Result};
use crate::form_tensors::{
    affine_map_of, build_reference_tensor, write_geometry_vector, CellCoefficients, Form, FormSpec, Mode,
};
use crate::progir::{generate, generate_direct, StraightLineProgram};
use crate::relations::{build_graph_until, forest_cost, minimum_spanning_forest, OpCounts};

/// CPU time consumed by the calling thread, in seconds.
pub fn thread_cpu_time() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid out-pointer and the clock id is a constant
    // supported on every Linux kernel this targets.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    assert_eq!(rc, 0, "clock_gettime(CLOCK_THREAD_CPUTIME_ID) failed");
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchConfig {
    pub mesh_n_2d: usize,
    pub mesh_n_3d: usize,
    pub seed: u64,
    /// Per case; a case that runs past it is reported as skipped.
    pub time_budget_secs: f64,
    pub min_reps: u64,
    pub min_cpu_secs: f64,
    /// Geometry vectors precomputed for the local timing loop.
    pub batch_size: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            mesh_n_2d: 64,
            mesh_n_3d: 16,
            seed: 0,
            time_budget_secs: 600.0,
            min_reps: 10,
            min_cpu_secs: 1.0,
            batch_size: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub seconds_per_rep: f64,
    pub reps: u64,
    pub cpu_secs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speedups {
    pub local: f64,
    pub global: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseTiming {
    pub form: Form,
    pub mode: Mode,
    pub dim: usize,
    pub degree: usize,
    pub status: String,
    pub skip_reason: Option<String>,
    pub nrows: usize,
    pub ncols: usize,
    pub mesh_n: usize,
    pub num_cells: usize,
    pub num_global_dofs: usize,
    pub op_counts: Option<OpCounts>,
    pub ffc_over_ferari: Option<f64>,
    pub base_over_ferari: Option<f64>,
    pub tensor_secs: f64,
    pub optimizer_secs: Option<f64>,
    pub local_time_naive: Option<Measurement>,
    pub local_time_opt: Option<Measurement>,
    pub global_time_naive: Option<Measurement>,
    pub global_time_opt: Option<Measurement>,
    pub speedups: Option<Speedups>,
}

impl CaseTiming {
    pub fn spec(&self) -> FormSpec {
        FormSpec {
            form: self.form,
            mode: self.mode,
            dim: self.dim,
            degree: self.degree,
        }
    }

    pub fn completed(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpeedupPoint {
    pub case: String,
    pub ncols: usize,
    pub global_speedup: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimingReport {
    pub seed: u64,
    pub config: BenchConfig,
    /// How the two timing columns are measured.
    pub method: String,
    pub cases: Vec<CaseTiming>,
    pub speedup_by_columns: Vec<SpeedupPoint>,
}

const METHOD: &str = "thread CPU time; repetitions double until at least min_reps reps and min_cpu_secs seconds; \
local = one pass of the element kernel over batch_size precomputed geometry vectors; \
global = full assembly (geometry, kernel, sparse insertion) over the mesh; \
naive = every nonzero of the reference tensor multiplied directly";

/// Runs `f(reps)` with doubling repetition counts until both thresholds are
/// met. Returns `None` if the deadline passes first.
fn measure(config: &BenchConfig, deadline: Instant, mut f: impl FnMut(u64)) -> Option<Measurement> {
    let mut reps = 1u64;
    loop {
        let t0 = thread_cpu_time();
        f(reps);
        let t = thread_cpu_time() - t0;
        if reps >= config.min_reps && t >= config.min_cpu_secs {
            return Some(Measurement {
                seconds_per_rep: t / reps as f64,
                reps,
                cpu_secs: t,
            });
        }
        if Instant::now() > deadline {
            return None;
        }
        // skip doublings that would clearly fall short again
        let per_rep = t / reps as f64;
        reps *= 2;
        while reps < config.min_reps || (per_rep > 0.0 && per_rep * (reps as f64) < 0.75 * config.min_cpu_secs) {
            reps *= 2;
        }
    }
}

fn case_rng(seed: u64, spec: &FormSpec) -> ChaCha8Rng {
    let form = Form::ALL.iter().position(|f| *f == spec.form).unwrap_or(0) as u64;
    let mode = (spec.mode == Mode::Action) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((form * 2 + mode) * 10 + spec.dim as u64) * 10 + spec.degree as u64);
    rng
}

/// Random global data for one case, derived from the seed.
pub(crate) struct CaseData {
    pub weight: Vec<f64>,
    pub beta: Vec<f64>,
    pub u: Vec<f64>,
}

impl CaseData {
    pub(crate) fn new(seed: u64, spec: &FormSpec, ndofs: usize) -> Self {
        let mut rng = case_rng(seed, spec);
        CaseData {
            weight: (0..ndofs).map(|_| rng.gen_range(0.5..1.5)).collect(),
            beta: (0..spec.dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            u: (0..ndofs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    pub(crate) fn coefficients(&self, spec: &FormSpec) -> GlobalCoefficients<'_> {
        GlobalCoefficients {
            weight: spec.form.is_weighted().then_some(self.weight.as_slice()),
            beta: spec.form.has_beta().then_some(self.beta.as_slice()),
        }
    }
}

fn geometry_batch(mesh: &Mesh, dofmap: &DofMap, spec: &FormSpec, data: &CaseData, batch: usize) -> Result<Vec<f64>> {
    let n = spec.space_dim();
    let ncols = spec.ncols();
    let count = batch.clamp(1, mesh.num_cells());
    let mut out = vec![0.0; count * ncols];
    let (mut w, mut u) = (vec![0.0; n], vec![0.0; n]);
    for b in 0..count {
        let cell = b * mesh.num_cells() / count;
        let (pts, nv) = mesh.cell_points(cell);
        let map = affine_map_of(&pts[..nv])?;
        dofmap.restrict_into(cell, &data.weight, &mut w);
        dofmap.restrict_into(cell, &data.u, &mut u);
        let coeffs = CellCoefficients {
            weight: spec.form.is_weighted().then_some(w.as_slice()),
            beta: spec.form.has_beta().then_some(data.beta.as_slice()),
            trial: (spec.mode == Mode::Action).then_some(u.as_slice()),
        };
        write_geometry_vector(spec, &map, &coeffs, &mut out[b * ncols..(b + 1) * ncols])?;
    }
    Ok(out)
}

fn local_loop(kernel: &dyn ElementKernel, batch: &[f64], reps: u64) {
    let ncols = kernel.ncols();
    let mut y = vec![0.0; kernel.nrows()];
    for _ in 0..reps {
        for g in batch.chunks_exact(ncols) {
            kernel.evaluate(black_box(g), &mut y);
            black_box(&mut y);
        }
    }
}

fn global_once(mesh: &Mesh, dofmap: &DofMap, kernel: &dyn ElementKernel, spec: &FormSpec, data: &CaseData) -> Result<()> {
    let coeffs = data.coefficients(spec);
    match spec.mode {
        Mode::Matrix => {
            black_box(assemble_matrix(mesh, dofmap, kernel, &coeffs)?);
        }
        Mode::Action => {
            black_box(assemble_action(mesh, dofmap, kernel, &coeffs, &data.u)?);
        }
    }
    Ok(())
}

struct Meshes {
    meshes: HashMap<usize, Mesh>,
    dofmaps: HashMap<(usize, usize), DofMap>,
}

impl Meshes {
    fn get(&mut self, config: &BenchConfig, dim: usize, degree: usize) -> Result<(&Mesh, &DofMap)> {
        if !self.meshes.contains_key(&dim) {
            let mesh = if dim == 2 {
                unit_square_mesh(config.mesh_n_2d)?
            } else {
                unit_cube_mesh(config.mesh_n_3d)?
            };
            self.meshes.insert(dim, mesh);
        }
        let mesh = &self.meshes[&dim];
        if !self.dofmaps.contains_key(&(dim, degree)) {
            self.dofmaps.insert((dim, degree), build_dofmap(mesh, degree)?);
        }
        Ok((mesh, &self.dofmaps[&(dim, degree)]))
    }
}

fn skipped(mut case: CaseTiming, reason: String) -> CaseTiming {
    case.status = "skipped".into();
    case.skip_reason = Some(reason);
    case
}

fn run_case(spec: FormSpec, config: &BenchConfig, meshes: &mut Meshes) -> Result<CaseTiming> {
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(config.time_budget_secs);
    let (mesh, dofmap) = meshes.get(config, spec.dim, spec.degree)?;
    let mut case = CaseTiming {
        form: spec.form,
        mode: spec.mode,
        dim: spec.dim,
        degree: spec.degree,
        status: "ok".into(),
        skip_reason: None,
        nrows: spec.nrows(),
        ncols: spec.ncols(),
        mesh_n: if spec.dim == 2 { config.mesh_n_2d } else { config.mesh_n_3d },
        num_cells: mesh.num_cells(),
        num_global_dofs: dofmap.num_global_dofs,
        op_counts: None,
        ffc_over_ferari: None,
        base_over_ferari: None,
        tensor_secs: 0.0,
        optimizer_secs: None,
        local_time_naive: None,
        local_time_opt: None,
        global_time_naive: None,
        global_time_opt: None,
        speedups: None,
    };

    let tensor = build_reference_tensor(spec)?;
    case.tensor_secs = start.elapsed().as_secs_f64();

    let t_opt = Instant::now();
    let graph = match build_graph_until(&tensor, Some((deadline, config.time_budget_secs))) {
        Ok(g) => g,
        Err(Error::BudgetExceeded { .. }) => return Ok(skipped(case, "optimizer exceeded the time budget".into())),
        Err(e) => return Err(e),
    };
    let forest = minimum_spanning_forest(&graph);
    drop(graph);
    let optimized: StraightLineProgram = generate(&forest, &tensor)?;
    case.optimizer_secs = Some(t_opt.elapsed().as_secs_f64());
    let counts = forest_cost(&forest, &tensor);
    let ratio = |num: u64| if counts.ferari == 0 { 0.0 } else { num as f64 / counts.ferari as f64 };
    case.ffc_over_ferari = Some(ratio(counts.ffc));
    case.base_over_ferari = Some(ratio(counts.base));
    case.op_counts = Some(counts);
    let naive = generate_direct(&tensor);
    drop(tensor);

    let data = CaseData::new(config.seed, &spec, dofmap.num_global_dofs);
    let batch = geometry_batch(mesh, dofmap, &spec, &data, config.batch_size)?;

    let over = |what: &str| format!("{what} timing exceeded the time budget");
    let Some(ln) = measure(config, deadline, |r| local_loop(&naive, &batch, r)) else {
        return Ok(skipped(case, over("local")));
    };
    case.local_time_naive = Some(ln);
    let Some(lo) = measure(config, deadline, |r| local_loop(&optimized, &batch, r)) else {
        return Ok(skipped(case, over("local")));
    };
    case.local_time_opt = Some(lo);

    let mut failure = None;
    let mut global = |kernel: &dyn ElementKernel| {
        measure(config, deadline, |r| {
            for _ in 0..r {
                if let Err(e) = global_once(mesh, dofmap, kernel, &spec, &data) {
                    failure.get_or_insert(e);
                }
            }
        })
    };
    let gn = global(&naive);
    let go = gn.and_then(|_| global(&optimized));
    if let Some(e) = failure {
        return Err(e);
    }
    let (Some(gn), Some(go)) = (gn, go) else {
        return Ok(skipped(case, over("global")));
    };
    case.global_time_naive = Some(gn);
    case.global_time_opt = Some(go);
    let speed = |a: &Measurement, b: &Measurement| {
        if b.seconds_per_rep > 0.0 {
            a.seconds_per_rep / b.seconds_per_rep
        } else {
            0.0
        }
    };
    case.speedups = Some(Speedups {
        local: speed(&ln, &lo),
        global: speed(&gn, &go),
    });
    Ok(case)
}

/// Times naive and optimized kernels for each case, one case at a time.
pub fn benchmark(specs: &[FormSpec], config: &BenchConfig) -> Result<TimingReport> {
    let mut meshes = Meshes {
        meshes: HashMap::new(),
        dofmaps: HashMap::new(),
    };
    let mut cases = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        cases.push(run_case(*spec, config, &mut meshes)?);
        // the largest 3D meshes are only kept while their cases run
        if specs.iter().skip(cases.len()).all(|s| s.dim != spec.dim) {
            meshes.meshes.remove(&spec.dim);
            meshes.dofmaps.retain(|(d, _), _| *d != spec.dim);
        }
    }
    let speedup_by_columns = cases
        .iter()
        .filter_map(|c| {
            c.speedups.map(|s| SpeedupPoint {
                case: c.spec().label(),
                ncols: c.ncols,
                global_speedup: s.global,
            })
        })
        .collect();
    Ok(TimingReport {
        seed: config.seed,
        config: config.clone(),
        method: METHOD.to_string(),
        cases,
        speedup_by_columns,
    })
}

impl TimingReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "seed {}  mesh n: 2D {}, 3D {}  min reps {}  min cpu {} s  batch {}",
            self.seed,
            self.config.mesh_n_2d,
            self.config.mesh_n_3d,
            self.config.min_reps,
            self.config.min_cpu_secs,
            self.config.batch_size
        );
        let _ = writeln!(
            out,
            "{:<36} {:>6} {:>6} {:>9} {:>9} {:>9} {:>7} {:>9} {:>11} {:>11} {:>7} {:>11} {:>11} {:>7}",
            "case",
            "rows",
            "cols",
            "base",
            "ffc",
            "ferari",
            "ffc/fe",
            "opt s",
            "local nv",
            "local opt",
            "x",
            "global nv",
            "global opt",
            "x"
        );
        let t = |m: &Option<Measurement>| m.map_or("-".to_string(), |m| format!("{:.4e}", m.seconds_per_rep));
        for c in &self.cases {
            let (base, ffc, fe) = c.op_counts.map_or(("-".into(), "-".into(), "-".into()), |o| {
                (o.base.to_string(), o.ffc.to_string(), o.ferari.to_string())
            });
            let (ls, gs) = c
                .speedups
                .map_or(("-".into(), "-".into()), |s| (format!("{:.2}", s.local), format!("{:.2}", s.global)));
            let _ = writeln!(
                out,
                "{:<36} {:>6} {:>6} {:>9} {:>9} {:>9} {:>7} {:>9} {:>11} {:>11} {:>7} {:>11} {:>11} {:>7}{}",
                c.spec().label(),
                c.nrows,
                c.ncols,
                base,
                ffc,
                fe,
                c.ffc_over_ferari.map_or("-".into(), |r| format!("{r:.2}")),
                c.optimizer_secs.map_or("-".into(), |s| format!("{s:.3}")),
                t(&c.local_time_naive),
                t(&c.local_time_opt),
                ls,
                t(&c.global_time_naive),
                t(&c.global_time_opt),
                gs,
                c.skip_reason.as_ref().map_or(String::new(), |r| format!("  skipped: {r}"))
            );
        }
        out.push_str("\ncolumns vs global speedup\n");
        for p in &self.speedup_by_columns {
            let _ = writeln!(out, "{:>6} {:>8.3}  {}", p.ncols, p.global_speedup, p.case);
        }
        out
    }
}
