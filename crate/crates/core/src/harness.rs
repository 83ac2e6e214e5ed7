//! Experiment plumbing behind the `emodm` CLI: run configurations, file
//! formats and the four commands.
//!
//! Formats:
//! * trajectory: JSON lines, a `header` record then one `generation` record
//!   per generation with its decision and objective matrices;
//! * library: one JSON document holding provenance and the trained library;
//! * Pareto set: CSV with header `x1..xd,f1..fm`;
//! * IGD profile: CSV with header `step,igd`.
//!
//! Every command returns the text it reports, one `key=value` record per
//! line, and is a pure function of its configuration and input files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{self, PretrainedLibrary, XiMode};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{self, FeLedger, Phase};
use crate::moea::{self, EvolutionaryTrajectory};
use crate::parallel;
use crate::problems::{make_problem, MopInstance, Population, Space, Suite};
use crate::seed;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_REF_SIZE: usize = 1000;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub version: u32,
    pub problem_id: String,
    pub suite: Suite,
    pub index: usize,
    pub m: usize,
    pub d: usize,
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub decisions: Matrix,
    pub objectives: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TrajectoryLine {
    Header(TrajectoryHeader),
    Generation(GenerationRecord),
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn json_line<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_trajectory(path: &Path, trajectory: &EvolutionaryTrajectory) -> Result<()> {
    let header = TrajectoryLine::Header(TrajectoryHeader {
        version: FORMAT_VERSION,
        problem_id: trajectory.problem_id.clone(),
        suite: trajectory.suite,
        index: trajectory.index,
        m: trajectory.m,
        d: trajectory.d,
        n: trajectory.n,
        t: trajectory.t,
        seed: trajectory.seed,
        lower: trajectory.lower.clone(),
        upper: trajectory.upper.clone(),
    });
    let mut out = json_line(path, &header)?;
    out.push('\n');
    for (g, pop) in trajectory.generations.iter().enumerate() {
        let record = TrajectoryLine::Generation(GenerationRecord {
            generation: g,
            decisions: pop.decisions.clone(),
            objectives: pop.objectives()?.clone(),
        });
        out.push_str(&json_line(path, &record)?);
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<EvolutionaryTrajectory> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let parse = |no: usize, line: std::io::Result<String>| -> Result<TrajectoryLine> {
        let line = line.map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", no + 1)))
    };
    let header = match lines.next() {
        Some((no, line)) => match parse(no, line)? {
            TrajectoryLine::Header(h) => h,
            TrajectoryLine::Generation(_) => {
                return Err(Error::format(path, "line 1: expected a header record"))
            }
        },
        None => return Err(Error::format(path, "empty trajectory file")),
    };
    if header.version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported trajectory version {}", header.version),
        ));
    }
    let mut generations = Vec::with_capacity(header.t + 1);
    for (no, line) in lines {
        match parse(no, line)? {
            TrajectoryLine::Generation(g) => {
                if g.generation != generations.len() {
                    return Err(Error::format(
                        path,
                        format!("line {}: generation {} out of order", no + 1, g.generation),
                    ));
                }
                let pop = Population::new(g.generation, g.decisions, Space::Raw)
                    .with_objectives(g.objectives)
                    .map_err(|e| Error::format(path, format!("line {}: {e}", no + 1)))?;
                generations.push(pop);
            }
            TrajectoryLine::Header(_) => {
                return Err(Error::format(path, format!("line {}: second header", no + 1)))
            }
        }
    }
    let trajectory = EvolutionaryTrajectory {
        problem_id: header.problem_id,
        suite: header.suite,
        index: header.index,
        m: header.m,
        d: header.d,
        n: header.n,
        t: header.t,
        seed: header.seed,
        lower: header.lower,
        upper: header.upper,
        generations,
    };
    trajectory
        .validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(trajectory)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub format_version: u32,
    pub use_attention: bool,
    pub inputs: Vec<InputDigest>,
    /// Histogram bins per entry.
    pub bins: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryFile {
    pub provenance: Provenance,
    pub library: PretrainedLibrary,
}

pub fn write_library(path: &Path, file: &LibraryFile) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(file).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_library(path: &Path) -> Result<LibraryFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: LibraryFile =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if file.provenance.format_version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported library version {}", file.provenance.format_version),
        ));
    }
    file.library
        .validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(file)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Writes `x1..xd,f1..fm` rows.
pub fn write_pareto_csv(path: &Path, pop: &Population) -> Result<()> {
    let obj = pop.objectives()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=pop.dim())
        .map(|i| format!("x{i}"))
        .chain((1..=obj.cols()).map(|i| format!("f{i}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (x, f) in pop.decisions.iter_rows().zip(obj.iter_rows()) {
        let row: Vec<String> = x.iter().chain(f).map(|v| v.to_string()).collect();
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    write_file(path, &bytes)
}

/// Decision and objective columns of a Pareto CSV.
pub fn read_pareto_csv(path: &Path) -> Result<(Matrix, Matrix)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut xs = Vec::new();
    let mut fs_ = Vec::new();
    for (i, name) in header.iter().enumerate() {
        let (prefix, num) = name.split_at(name.len().min(1));
        let expected = if prefix == "x" { xs.len() + 1 } else { fs_.len() + 1 };
        if num.parse::<usize>().ok() != Some(expected) || !(prefix == "x" || prefix == "f") {
            return Err(Error::format(path, format!("unexpected header column `{name}`")));
        }
        if prefix == "x" {
            if !fs_.is_empty() {
                return Err(Error::format(path, "decision columns must precede objectives"));
            }
            xs.push(i);
        } else {
            fs_.push(i);
        }
    }
    if fs_.is_empty() {
        return Err(Error::format(path, "no objective columns"));
    }
    let mut dec = Vec::new();
    let mut obj = Vec::new();
    let mut rows = 0;
    for (no, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let value = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::format(path, format!("row {}: bad value in column {}", no + 2, i + 1)))
        };
        for &i in &xs {
            dec.push(value(i)?);
        }
        for &i in &fs_ {
            obj.push(value(i)?);
        }
        rows += 1;
    }
    Ok((
        Matrix::from_vec(rows, xs.len(), dec),
        Matrix::from_vec(rows, fs_.len(), obj),
    ))
}

pub fn write_profile_csv(path: &Path, profile: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "igd"]).map_err(|e| csv_error(path, e))?;
    for (step, igd) in profile {
        w.write_record([step.to_string(), igd.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    write_file(path, &bytes)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// IGD of the non-dominated subset of `objectives`.
pub fn front_igd(reference: &[Vec<f64>], objectives: &Matrix) -> Result<f64> {
    let front = objectives
        .select_rows(&metrics::nondominated_indices(objectives))
        .to_rows();
    metrics::igd(reference, &front)
}

/// IGD of `n` uniform random solutions, drawn from the baseline stream of
/// `seed`. Evaluations are charged to the diagnostics phase.
pub fn random_baseline_igd(
    instance: &MopInstance,
    reference: &[Vec<f64>],
    n: usize,
    seed: u64,
    ledger: &FeLedger,
) -> Result<f64> {
    let mut rng = seed::stream(seed, seed::labels::BASELINE, 0);
    let pop = instance.uniform_population(n, &mut rng)?;
    let evaluated = instance.evaluate(&pop, ledger, Phase::Diagnostics)?;
    front_igd(reference, evaluated.objectives()?)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
    (mean, var.sqrt())
}

fn non_empty<T>(v: &[T], field: &'static str) -> Result<()> {
    if v.is_empty() {
        Err(Error::param(field, "at least one value is required"))
    } else {
        Ok(())
    }
}

/// `path` itself for a single seed, otherwise `<stem>-s<seed>.<ext>`.
pub fn seeded_path(path: &Path, seed: u64, several: bool) -> PathBuf {
    if !several {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-s{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}-s{seed}"),
    };
    path.with_file_name(name)
}

/// Problem selection shared by the commands.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub suite: Suite,
    pub index: usize,
    pub m: usize,
    pub d: usize,
}

impl InstanceSpec {
    pub fn build(&self) -> Result<MopInstance> {
        make_problem(self.suite, self.index, self.m, self.d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub suite: Suite,
    pub indices: Vec<usize>,
    pub m: usize,
    pub d: usize,
    pub n: usize,
    pub t: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl GenConfig {
    pub fn validate(&self) -> Result<Vec<MopInstance>> {
        non_empty(&self.indices, "index")?;
        non_empty(&self.seeds, "seed")?;
        moea::validate_run_size(self.n, self.t)?;
        self.indices
            .iter()
            .map(|&i| make_problem(self.suite, i, self.m, self.d))
            .collect()
    }
}

/// File name of the trajectory of `problem_id` under `seed`.
pub fn trajectory_file_name(problem_id: &str, seed: u64) -> String {
    format!("{problem_id}-s{seed}.jsonl")
}

pub fn cmd_gen_trajectories(config: &GenConfig) -> Result<String> {
    let instances = config.validate()?;
    let jobs: Vec<(&MopInstance, u64)> = instances
        .iter()
        .flat_map(|inst| config.seeds.iter().map(move |&s| (inst, s)))
        .collect();
    let results: Vec<Result<String>> = parallel::map(&jobs, |&(inst, seed)| {
        let ledger = FeLedger::new();
        let trajectory = moea::nsga2_run(inst, config.n, config.t, seed, &ledger)?;
        let path = config.out_dir.join(trajectory_file_name(&inst.id, seed));
        write_trajectory(&path, &trajectory)?;
        Ok(format!(
            "trajectory problem={} seed={} generations={} fe={} out={}",
            inst.id,
            seed,
            trajectory.generations.len(),
            ledger.count(Phase::TrajectoryGeneration),
            path.display()
        ))
    });
    let lines: Vec<String> = results.into_iter().collect::<Result<_>>()?;
    let total = (config.n * (config.t + 1) * jobs.len()) as u64;
    Ok(format!("{}\nfe_total={total}\n", lines.join("\n")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub use_attention: bool,
}

pub fn cmd_train(config: &TrainConfig) -> Result<String> {
    non_empty(&config.inputs, "inputs")?;
    let loaded: Vec<Result<(EvolutionaryTrajectory, InputDigest)>> =
        parallel::map(&config.inputs, |path| {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let trajectory = read_trajectory(path)?;
            let digest = InputDigest {
                path: path.display().to_string(),
                sha256: sha256_hex(&bytes),
            };
            Ok((trajectory, digest))
        });
    let (trajectories, inputs): (Vec<_>, Vec<_>) =
        loaded.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let first = &trajectories[0];
    for (tr, digest) in trajectories.iter().zip(&inputs).skip(1) {
        if tr.t != first.t {
            return Err(Error::Inconsistent(format!(
                "mixed T: {} has T={}, {} has T={}",
                inputs[0].path, first.t, digest.path, tr.t
            )));
        }
        if tr.m != first.m {
            return Err(Error::Inconsistent(format!(
                "mixed m: {} has m={}, {} has m={}",
                inputs[0].path, first.m, digest.path, tr.m
            )));
        }
    }
    let library = diffusion::train_forward(&trajectories, config.use_attention)?;
    let file = LibraryFile {
        provenance: Provenance {
            tool_version: TOOL_VERSION.to_string(),
            format_version: FORMAT_VERSION,
            use_attention: config.use_attention,
            inputs,
            bins: library.entries.iter().map(|e| e.bins).collect(),
        },
        library,
    };
    write_library(&config.out, &file)?;
    let mut report = String::new();
    for e in &file.library.entries {
        report.push_str(&format!(
            "entry problem={} d={} steps={} training_loss={} sweeps={}\n",
            e.problem_id,
            e.d,
            e.steps.len(),
            e.training_loss,
            e.training_sweeps
        ));
    }
    report.push_str(&format!(
        "library entries={} t={} max_d={} attention={} out={}\n",
        file.library.entries.len(),
        file.library.t,
        file.library.max_d,
        config.use_attention,
        config.out.display()
    ));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub model: PathBuf,
    pub instance: InstanceSpec,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub xi: XiMode,
    pub out: PathBuf,
    pub igd_profile: Option<PathBuf>,
    pub ref_size: usize,
}

fn check_ref_size(ref_size: usize) -> Result<()> {
    if ref_size == 0 {
        return Err(Error::param("ref-size", "must be ≥ 1"));
    }
    Ok(())
}

pub fn cmd_sample(config: &SampleConfig) -> Result<String> {
    let instance = config.instance.build()?;
    non_empty(&config.seeds, "seed")?;
    check_ref_size(config.ref_size)?;
    if config.n < 2 {
        return Err(Error::param("n-pop", format!("must be ≥ 2, got {}", config.n)));
    }
    let library = read_library(&config.model)?.library;
    let reference = match config.igd_profile {
        Some(_) => Some(instance.sample_reference_front(config.ref_size)?),
        None => None,
    };
    let several = config.seeds.len() > 1;
    let schedule_len = diffusion::check_schedule(library.t, config.xi).len();
    let results: Vec<Result<String>> = parallel::map(&config.seeds, |&seed| {
        let ledger = FeLedger::new();
        let outcome = diffusion::sample_pareto_set(
            &library,
            &instance,
            config.n,
            config.xi,
            seed,
            &ledger,
            reference.as_deref(),
        )?;
        let out = seeded_path(&config.out, seed, several);
        write_pareto_csv(&out, &outcome.population)?;
        let mut line = format!(
            "sample problem={} seed={} xi={} checks={} fe={} solutions={} out={}",
            instance.id,
            seed,
            config.xi.name(),
            schedule_len,
            ledger.budgeted_total(),
            outcome.population.size(),
            out.display()
        );
        if let (Some(path), Some(profile)) = (&config.igd_profile, &outcome.igd_profile) {
            let p = seeded_path(path, seed, several);
            write_profile_csv(&p, profile)?;
            line.push_str(&format!(" profile={}", p.display()));
        }
        Ok(line)
    });
    let lines: Vec<String> = results.into_iter().collect::<Result<_>>()?;
    Ok(format!("{}\n", lines.join("\n")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateConfig {
    pub instance: InstanceSpec,
    pub points: Vec<PathBuf>,
    pub ref_size: usize,
    /// Seeds of the random-population baseline; empty skips it.
    pub baseline_seeds: Vec<u64>,
    pub n: usize,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsIgd {
    pub path: String,
    pub points: usize,
    pub igd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub igd: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub problem_id: String,
    pub ref_size: usize,
    pub results: Vec<PointsIgd>,
    pub mean: f64,
    pub std: f64,
    pub baseline: Option<BaselineReport>,
}

/// Objective vectors of a points file: a Pareto CSV, or the last generation
/// of a trajectory file (`.jsonl`).
pub fn read_objectives(path: &Path, instance: &MopInstance) -> Result<Matrix> {
    let is_trajectory = path.extension().is_some_and(|e| e == "jsonl");
    let (dec, obj) = if is_trajectory {
        let tr = read_trajectory(path)?;
        let last = tr.last();
        (last.decisions.clone(), last.objectives()?.clone())
    } else {
        read_pareto_csv(path)?
    };
    if obj.cols() != instance.m {
        return Err(Error::Dimension(format!(
            "{} holds {} objectives, instance {} has m={}",
            path.display(),
            obj.cols(),
            instance.id,
            instance.m
        )));
    }
    if dec.cols() != 0 && dec.cols() != instance.d {
        return Err(Error::Dimension(format!(
            "{} holds {} decision variables, instance {} has d={}",
            path.display(),
            dec.cols(),
            instance.id,
            instance.d
        )));
    }
    if obj.rows() == 0 {
        return Err(Error::Empty("points file rows"));
    }
    Ok(obj)
}

pub fn evaluate(config: &EvaluateConfig) -> Result<EvaluationReport> {
    let instance = config.instance.build()?;
    non_empty(&config.points, "points")?;
    check_ref_size(config.ref_size)?;
    if !config.baseline_seeds.is_empty() && config.n < 2 {
        return Err(Error::param("n-pop", format!("must be ≥ 2, got {}", config.n)));
    }
    let reference = instance.sample_reference_front(config.ref_size)?;
    let results: Vec<PointsIgd> = config
        .points
        .iter()
        .map(|path| {
            let obj = read_objectives(path, &instance)?;
            Ok(PointsIgd {
                path: path.display().to_string(),
                points: obj.rows(),
                igd: front_igd(&reference, &obj)?,
            })
        })
        .collect::<Result<_>>()?;
    let (mean, std) = mean_std(&results.iter().map(|r| r.igd).collect::<Vec<_>>());
    let baseline = if config.baseline_seeds.is_empty() {
        None
    } else {
        let ledger = FeLedger::new();
        let igd: Vec<f64> = parallel::map(&config.baseline_seeds, |&s| {
            random_baseline_igd(&instance, &reference, config.n, s, &ledger)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let (mean, std) = mean_std(&igd);
        Some(BaselineReport {
            n: config.n,
            seeds: config.baseline_seeds.clone(),
            igd,
            mean,
            std,
        })
    };
    Ok(EvaluationReport {
        problem_id: instance.id,
        ref_size: config.ref_size,
        results,
        mean,
        std,
        baseline,
    })
}

pub fn cmd_evaluate(config: &EvaluateConfig) -> Result<String> {
    let report = evaluate(config)?;
    if let Some(out) = &config.out {
        let mut text =
            serde_json::to_string_pretty(&report).map_err(|e| Error::format(out, e.to_string()))?;
        text.push('\n');
        write_file(out, text.as_bytes())?;
    }
    let mut s = String::new();
    for r in &report.results {
        s.push_str(&format!("igd file={} points={} value={}\n", r.path, r.points, r.igd));
    }
    s.push_str(&format!(
        "igd problem={} ref_size={} files={} mean={} std={}\n",
        report.problem_id,
        report.ref_size,
        report.results.len(),
        report.mean,
        report.std
    ));
    if let Some(b) = &report.baseline {
        s.push_str(&format!(
            "baseline n={} seeds={} mean={} std={}\n",
            b.n,
            b.seeds.len(),
            b.mean,
            b.std
        ));
    }
    Ok(s)
}

/// One-line JSON rendering of an error for the CLI.
pub fn error_line(err: &Error) -> String {
    let mut line = serde_json::json!({ "error": err.kind(), "message": err.to_string() }).to_string();
    line.retain(|c| c != '\n');
    line
}

/// Appends `text` to a writer, mapping failures onto [`Error::Io`].
pub fn emit(mut w: impl Write, text: &str) -> Result<()> {
    w.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}
