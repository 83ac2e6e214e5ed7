//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use emodm::attention::{compute_attention, mutual_information, normalized_mi};
use emodm::diffusion::{
    check_schedule, estimate_step, forward_noising, sample_pareto_set, train_forward,
    PretrainedLibrary, XiMode,
};
use emodm::harness::{self, front_igd, random_baseline_igd, SampleConfig, InstanceSpec};
use emodm::metrics::{igd, nondominated_filter, Solution};
use emodm::moea::{fast_nondominated_sort, nsga2_run, EvolutionaryTrajectory};
use emodm::seed::StreamRng;
use emodm::{make_problem, Error, FeLedger, Matrix, Phase, Population, Space, Suite};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn zdt1() -> emodm::MopInstance {
    make_problem(Suite::Zdt, 1, 2, 30).unwrap()
}

fn zdt1_trajectory(seed: u64, t: usize) -> EvolutionaryTrajectory {
    nsga2_run(&zdt1(), 100, t, seed, &FeLedger::new()).unwrap()
}

fn sampled_fe(library: &PretrainedLibrary, dir: &Path, name: &str) -> Result<(u64, u64), String> {
    let path = dir.join(format!("{name}.json"));
    harness::write_library(
        &path,
        &harness::LibraryFile {
            provenance: harness::Provenance {
                tool_version: harness::TOOL_VERSION.into(),
                format_version: harness::FORMAT_VERSION,
                use_attention: true,
                inputs: vec![],
                bins: library.entries.iter().map(|e| e.bins).collect(),
            },
            library: library.clone(),
        },
    )
    .map_err(|e| e.to_string())?;
    let report = harness::cmd_sample(&SampleConfig {
        model: path,
        instance: InstanceSpec { suite: Suite::Zdt, index: 1, m: 2, d: 30 },
        n: 100,
        seeds: vec![1],
        xi: XiMode::Log2,
        out: dir.join(format!("{name}.csv")),
        igd_profile: None,
        ref_size: 1000,
    })
    .map_err(|e| e.to_string())?;
    let printed: u64 = report
        .split_whitespace()
        .find_map(|w| w.strip_prefix("fe="))
        .and_then(|v| v.parse().ok())
        .ok_or("no fe= field in sample report")?;
    let ledger = FeLedger::new();
    sample_pareto_set(library, &zdt1(), 100, XiMode::Log2, 1, &ledger, None).map_err(|e| e.to_string())?;
    Ok((printed, ledger.budgeted_total()))
}

fn criterion_1(ctx: &Context) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (p200, l200) = sampled_fe(&ctx.zdt1_libraries[0], dir.path(), "t200")?;
    let long = train_forward(&[zdt1_trajectory(1, 2000)], true).unwrap();
    let (p2000, l2000) = sampled_fe(&long, dir.path(), "t2000")?;
    ensure(
        (p200, l200, p2000, l2000) == (800, 800, 1100, 1100),
        format!("T=200: printed {p200}, ledger {l200}; T=2000: printed {p2000}, ledger {l2000}"),
    )?;
    Ok(format!("T=200 → {l200} FEs, T=2000 → {l2000} FEs"))
}

fn criterion_2(_: &Context) -> Outcome {
    let s = check_schedule(200, XiMode::Log2);
    let mut asc = s.clone();
    asc.sort_unstable();
    ensure(asc == vec![1, 2, 4, 8, 16, 32, 64, 128], format!("log2(200) = {asc:?}"))?;
    let n = check_schedule(2000, XiMode::Log2).len();
    ensure(n == 11, format!("|log2(2000)| = {n}"))?;
    Ok(format!("log2(200) = {asc:?}, |log2(2000)| = {n}"))
}

fn criterion_3(ctx: &Context) -> Outcome {
    let inst = zdt1();
    let reference = inst.sample_reference_front(1000).unwrap();
    let mut passed = 0;
    let mut rows = Vec::new();
    for (k, seed) in (1..=3u64).enumerate() {
        let tr = &ctx.zdt1_trajectories[k];
        let final_igd = front_igd(&reference, tr.last().objectives().unwrap()).unwrap();
        let out = sample_pareto_set(&ctx.zdt1_libraries[k], &inst, 100, XiMode::Log2, seed, &FeLedger::new(), None)
            .map_err(|e| e.to_string())?;
        let got = front_igd(&reference, out.population.objectives().unwrap()).unwrap();
        let baseline = random_baseline_igd(&inst, &reference, 100, seed, &FeLedger::new()).unwrap();
        let ok = got <= (2.0 * final_igd).max(0.1) && got <= 0.25 * baseline;
        passed += ok as usize;
        rows.push(format!("seed {seed}: {got:.4} (final {final_igd:.4}, random {baseline:.4})"));
    }
    ensure(passed >= 2, format!("{passed}/3 seeds pass; {}", rows.join("; ")))?;
    Ok(format!("{passed}/3 seeds; {}", rows.join("; ")))
}

fn criterion_4(ctx: &Context) -> Outcome {
    let mut wins = 0;
    let mut rows = Vec::new();
    for index in 5..=8 {
        let inst = make_problem(Suite::Lsmop, index, 3, 50).unwrap();
        let reference = inst.sample_reference_front(1000).unwrap();
        let mut ours = Vec::new();
        let mut base = Vec::new();
        for seed in 1..=5u64 {
            let out = sample_pareto_set(&ctx.lsmop_library, &inst, 100, XiMode::Log2, seed, &FeLedger::new(), None)
                .map_err(|e| e.to_string())?;
            ours.push(front_igd(&reference, out.population.objectives().unwrap()).unwrap());
            base.push(random_baseline_igd(&inst, &reference, 100, seed, &FeLedger::new()).unwrap());
        }
        let (a, b) = (median(ours), median(base));
        wins += (a < b) as usize;
        rows.push(format!("LSMOP{index} {a:.4} vs {b:.4}"));
    }
    ensure(wins >= 3, format!("{wins}/4 below baseline; {}", rows.join("; ")))?;
    Ok(format!("{wins}/4 below random baseline (median of 5); {}", rows.join("; ")))
}

fn criterion_5(ctx: &Context) -> Outcome {
    let big = make_problem(Suite::Lsmop, 5, 3, 100).unwrap();
    let err = sample_pareto_set(&ctx.lsmop_library, &big, 100, XiMode::Log2, 1, &FeLedger::new(), None);
    let msg = match err {
        Err(e @ Error::Dimension(_)) => e.to_string(),
        other => return Err(format!("d=100 not rejected: {:?}", other.map(|o| o.population.size()))),
    };
    let small = make_problem(Suite::Lsmop, 5, 3, 30).unwrap();
    let out = sample_pareto_set(&ctx.lsmop_library, &small, 100, XiMode::Log2, 1, &FeLedger::new(), None)
        .map_err(|e| format!("d=30 failed: {e}"))?;
    ensure(out.population.dim() == 30, "d=30 output has wrong width")?;
    ensure(out.population.decisions.iter_rows().all(|x| small.contains(x)), "d=30 output out of bounds")?;
    Ok(format!("d=100 rejected ({msg}); d=30 produced {} solutions", out.population.size()))
}

fn criterion_6(ctx: &Context) -> Outcome {
    let inst = zdt1();
    let mut counts = Vec::new();
    for xi in [XiMode::EveryStep, XiMode::Tenth, XiMode::Log2, XiMode::FirstOnly] {
        let ledger = FeLedger::new();
        sample_pareto_set(&ctx.zdt1_libraries[0], &inst, 100, xi, 1, &ledger, None)
            .map_err(|e| format!("{}: {e}", xi.name()))?;
        let expected = 100 * check_schedule(200, xi).len() as u64;
        ensure(ledger.budgeted_total() == expected, format!("{}: {} ≠ {expected}", xi.name(), ledger.budgeted_total()))?;
        counts.push(ledger.budgeted_total());
    }
    ensure(counts == vec![20000, 2000, 800, 100], format!("counts {counts:?}"))?;
    Ok(format!("every_step/tenth/log2/first_only = {counts:?}"))
}

fn random_points(rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let m = rng.random_range(2..=3);
    let n = rng.random_range(1..=50);
    (0..n).map(|_| (0..m).map(|_| f64::from(rng.random_range(0u8..6))).collect()).collect()
}

fn criterion_7(ctx: &Context) -> Outcome {
    let mut checks = 0;
    for seed in 0..10u64 {
        let mut rng = StreamRng::seed_from_u64(seed);
        let x: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        let z: Vec<f64> = x.iter().map(|v| (v * 3.0).sin() + 0.1 * rng.random::<f64>()).collect();
        let (a, b) = (mutual_information(&x, &z, 8).unwrap(), mutual_information(&z, &x, 8).unwrap());
        ensure(a == b && a >= 0.0, format!("MI symmetry/non-negativity, seed {seed}"))?;
        let i = mutual_information(&x, &y, 4).unwrap();
        ensure(i < 0.05, format!("independent MI {i} ≥ 0.05, seed {seed}"))?;
        let s = normalized_mi(&x, &x, 32).unwrap();
        ensure((s - 1.0).abs() < 0.02, format!("NMI(x;x) = {s}"))?;
        checks += 3;
    }
    let inst = make_problem(Suite::Dtlz, 2, 3, 8).unwrap();
    for seed in 0..10u64 {
        let mut rng = StreamRng::seed_from_u64(seed);
        let pop = inst.uniform_population(60, &mut rng).unwrap();
        let pop = inst.evaluate(&pop, &FeLedger::new(), Phase::Diagnostics).unwrap();
        let att = compute_attention(&pop).unwrap();
        ensure((att.w.iter().sum::<f64>() - 1.0).abs() < 1e-12 && att.w.iter().all(|&w| w > 0.0), "weights off the simplex")?;
        let perm: Vec<usize> = (0..inst.d).rev().collect();
        let mut dec = Matrix::zeros(pop.size(), inst.d);
        for r in 0..pop.size() {
            for (k, &src) in perm.iter().enumerate() {
                dec.set(r, k, pop.decisions.get(r, src));
            }
        }
        let ppop = Population::new(0, dec, Space::Raw).with_objectives(pop.objectives().unwrap().clone()).unwrap();
        let patt = compute_attention(&ppop).unwrap();
        ensure(perm.iter().enumerate().all(|(k, &s)| (patt.w[k] - att.w[s]).abs() < 1e-12), "attention not permutation-equivariant")?;
        checks += 2;
    }
    for lib in ctx.zdt1_libraries.iter().chain([&ctx.lsmop_library]) {
        for e in &lib.entries {
            let mut prev = 1.0;
            for s in &e.steps {
                ensure((s.alpha_bar / prev - s.alpha).abs() < 1e-9, format!("{} step {} telescoping", e.problem_id, s.t))?;
                prev = s.alpha_bar;
                checks += 1;
            }
        }
    }
    for (k, alpha) in [0.6, 0.9, 0.96].into_iter().enumerate() {
        let mut rng = StreamRng::seed_from_u64(100 + k as u64);
        let mut z = Matrix::zeros(1000, 5);
        for v in z.as_mut_slice() {
            *v = 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
        let prev = Population::new(0, z, Space::Normalized);
        let curr = forward_noising(&prev, alpha, &mut rng).unwrap();
        let est = estimate_step(&prev, &curr).unwrap().alpha;
        ensure((est - alpha).abs() < 0.02, format!("alpha {alpha} estimated {est}"))?;
        checks += 1;
    }
    let mut rng = StreamRng::seed_from_u64(7);
    for case in 0..100 {
        let pts = random_points(&mut rng);
        let sols: Vec<Solution> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| Solution { decision: vec![i as f64], objective: p.clone() })
            .collect();
        let kept: Vec<usize> = nondominated_filter(&sols).points().iter().map(|s| s.decision[0] as usize).collect();
        ensure(kept == brute_nondominated(&pts), format!("filter mismatch, case {case}"))?;
        let fronts = fast_nondominated_sort(&Matrix::from_rows(&pts).unwrap());
        ensure(fronts == brute_fronts(&pts), format!("sort mismatch, case {case}"))?;
        checks += 2;
    }
    let sq = |v: &[&[f64]]| v.iter().map(|p| p.to_vec()).collect::<Vec<_>>();
    let hand = [
        (igd(&sq(&[&[0.0, 1.0], &[1.0, 0.0]]), &sq(&[&[1.0, 0.0], &[0.0, 1.0], &[2.0, 2.0]])).unwrap(), 0.0),
        (igd(&sq(&[&[0.0, 0.0]]), &sq(&[&[3.0, 4.0]])).unwrap(), 5.0),
        (igd(&sq(&[&[0.0, 1.0], &[1.0, 0.0]]), &sq(&[&[1.0, 1.0]])).unwrap(), 1.0),
    ];
    for (got, want) in hand {
        ensure((got - want).abs() <= 1e-12, format!("IGD {got} ≠ {want}"))?;
        checks += 1;
    }
    Ok(format!("{checks} property checks"))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_emodm"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
    Ok(out.stdout)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn criterion_8(_: &Context) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        "gen-trajectories --suite zdt --index 1,2 --m 2 --d 30 --n-pop 100 --t-steps 200 --seed 1,2 --out traj",
        "train traj/ZDT1-m2-d30-s1.jsonl traj/ZDT2-m2-d30-s1.jsonl --out lib.json",
        "train traj/ZDT1-m2-d30-s2.jsonl --no-attention --out lib-a.json",
        "sample --model lib.json --suite zdt --index 1 --m 2 --d 30 --seed 1,2 --out front.csv --igd-profile profile.csv",
        "sample --model lib-a.json --suite zdt --index 2 --m 2 --d 20 --xi tenth --out front-a.csv",
        "evaluate front-s1.csv front-s2.csv traj/ZDT1-m2-d30-s1.jsonl --suite zdt --index 1 --m 2 --d 30 --seed 1,2,3 --out report.json",
        "evaluate front-a.csv --suite zdt --index 2 --m 2 --d 20 --ref-size 500",
    ]
    .into_iter()
    .map(|c| c.split_whitespace().collect())
    .collect();
    let first: Vec<Vec<u8>> = commands.iter().map(|a| run_cli(dir.path(), a)).collect::<Result<_, _>>()?;
    let files = snapshot(dir.path());
    for (args, stdout) in commands.iter().zip(&first) {
        let again = run_cli(dir.path(), args)?;
        ensure(&again == stdout, format!("stdout differs on rerun of {}", args[0]))?;
    }
    let rerun = snapshot(dir.path());
    ensure(rerun.len() == files.len(), "rerun produced a different file set")?;
    for ((name, a), (_, b)) in files.iter().zip(&rerun) {
        ensure(a == b, format!("{name} differs after rerun"))?;
    }
    Ok(format!("{} commands rerun byte-identically ({} output files)", commands.len(), files.len()))
}

struct Context {
    zdt1_trajectories: Vec<EvolutionaryTrajectory>,
    zdt1_libraries: Vec<PretrainedLibrary>,
    lsmop_library: PretrainedLibrary,
}

fn main() {
    let start = Instant::now();
    let zdt1_trajectories: Vec<_> = (1..=3).map(|s| zdt1_trajectory(s, 200)).collect();
    let zdt1_libraries = zdt1_trajectories
        .iter()
        .map(|t| train_forward(std::slice::from_ref(t), true).unwrap())
        .collect();
    let lsmop: Vec<_> = [1, 2, 3, 4, 9]
        .iter()
        .map(|&i| nsga2_run(&make_problem(Suite::Lsmop, i, 3, 50).unwrap(), 100, 200, 1, &FeLedger::new()).unwrap())
        .collect();
    let ctx = Context {
        zdt1_trajectories,
        zdt1_libraries,
        lsmop_library: train_forward(&lsmop, true).unwrap(),
    };
    println!("setup: trajectories and libraries ready in {:.1}s", start.elapsed().as_secs_f64());

    let criteria: [(&str, fn(&Context) -> Outcome); 8] = [
        ("FE budget 800 / 1100", criterion_1),
        ("check schedule content", criterion_2),
        ("ZDT1 self-reconstruction", criterion_3),
        ("LSMOP generalization split", criterion_4),
        ("dimension-mismatch rule", criterion_5),
        ("xi sensitivity FE counts", criterion_6),
        ("property suites", criterion_7),
        ("CLI determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| f(&ctx)))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().map(String::as_str).or(p.downcast_ref::<&str>().copied()))));
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {} ({name}) [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}) [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
