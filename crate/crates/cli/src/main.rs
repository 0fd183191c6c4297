//! `agvsched`: generate instances, solve, verify, simulate and report.

mod manifest;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use agvsched::exact::{solve_exact, ExactConfig, ExactError, ExactStatus, SolverCommand, SOLVER_ENV};
use agvsched::graph::{generate_grid_graph, Graph};
use agvsched::heuristics::{base_schedule, Assigner, OnlineState};
use agvsched::instance::{
    generate_density_stream, generate_offline_instance, instance_to_json, load_instance, plant_benchmark_spec, Density, Instance,
    OfflineSpec,
};
use agvsched::simulator::{run_online, Algorithm, PeriodBudget, PeriodConfig, ReplanTrigger, SimulationError};
use agvsched::solution::{kpis, verify, write_kpi_csv, KpiReport, KpiRow, Solution};
use agvsched::tabu::{tabu_search, CostWeights, SearchLimits};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "agvsched", version, about = "Scheduling and routing of AGVs on loop-based graphs")]
struct Cli {
    /// Manifest path; defaults to a file next to the main output.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance file.
    #[command(subcommand)]
    Generate(Generate),
    /// Solve one or more offline instances.
    Solve(SolveArgs),
    /// Check a solution against every constraint.
    Verify(VerifyArgs),
    /// Run the rolling-horizon simulation over an instance's release times.
    Simulate(SimulateArgs),
    /// Aggregate KPI files into one table.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum Generate {
    /// All requests released at step 0.
    Offline(OfflineArgs),
    /// Requests released one after another at a constant density.
    Online(OnlineArgs),
}

#[derive(Args, Clone)]
struct OfflineArgs {
    /// Grid dimensions `XxY` of the plant layout.
    #[arg(long, default_value = "4x4")]
    grid: String,
    /// Benchmark station set `a`..`g` on the 9x6 layout; overrides the station lists.
    #[arg(long)]
    benchmark: Option<char>,
    #[arg(long, value_delimiter = ',')]
    unpaired: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    paired: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    agvs: usize,
    #[arg(long, default_value_t = 2)]
    capacity: u32,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OnlineArgs {
    /// Base instance whose requests form the stream.
    #[arg(long, conflicts_with_all = ["grid", "benchmark", "unpaired", "paired"])]
    base: Option<PathBuf>,
    #[command(flatten)]
    offline: OfflineArgs,
    /// Requests released per step, in (0, 1].
    #[arg(long)]
    density: String,
    #[arg(long, default_value_t = 20)]
    window: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Greedy,
    Loops,
    Tabu,
    Exact,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

impl From<Algo> for Algorithm {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Greedy => Algorithm::Greedy,
            Algo::Loops => Algorithm::Loops,
            Algo::Tabu => Algorithm::Tabu,
            Algo::Exact => Algorithm::Exact,
        }
    }
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Wall-clock limit in seconds for tabu and exact.
    #[arg(long, default_value_t = 120.0)]
    time_limit: f64,
    /// Fixed tabu iteration budget; also records a wall time of 0.
    #[arg(long)]
    deterministic_iters: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    max_stall_iters: usize,
    #[arg(long, default_value_t = 50)]
    tenure: usize,
    /// Cost weights file with keys `w` and `W`.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Solver executable or argument template; `AGV_SOLVER_CMD` is used when omitted.
    #[arg(long)]
    solver_cmd: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    #[arg(long, required = true, num_args = 1..)]
    instance: Vec<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    /// Solution file (single instance).
    #[arg(long)]
    out: Option<PathBuf>,
    /// KPI CSV file (single instance).
    #[arg(long)]
    kpi: Option<PathBuf>,
    /// Directory for per-instance outputs when several instances are given.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Instances solved concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    #[arg(long)]
    online_state: Option<PathBuf>,
    /// Print violations as JSON lines.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Replan {
    EveryStep,
    OnNewJobs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    algo: Algo,
    /// Per-period wall-clock budget such as `20s`.
    #[arg(long, conflicts_with = "budget_iters")]
    budget: Option<String>,
    /// Per-period iteration budget (seconds for exact); deterministic.
    #[arg(long)]
    budget_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "every-step")]
    replan: Replan,
    #[arg(long, default_value_t = 2000)]
    max_stall_iters: usize,
    #[arg(long, default_value_t = 50)]
    tenure: usize,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    solver_cmd: Option<String>,
    /// Period log (JSON lines).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    kpi: Option<PathBuf>,
    /// Stitched solution.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    kpi_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Error carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    fn infeasible(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, error: error.into() }
    }

    fn environment(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, error: error.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::environment(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut manifest = RunManifest::new(std::env::args().collect());
    let result = match &cli.command {
        Command::Generate(g) => generate(g, &mut manifest),
        Command::Solve(a) => solve(a, &mut manifest),
        Command::Verify(a) => verify_cmd(a, &mut manifest),
        Command::Simulate(a) => simulate(a, &mut manifest),
        Command::Report(a) => report(a, &mut manifest),
    };
    let code = match &result {
        Ok(()) => 0,
        Err(f) => f.code,
    };
    manifest.exit_code = code;
    if let Some(path) = cli.manifest.clone().or_else(|| manifest.default_path()) {
        if let Err(e) = manifest.write(&path) {
            eprintln!("error: cannot write manifest {}: {e}", path.display());
        }
    }
    if let Err(f) = result {
        eprintln!("error: {:#}", f.error);
    }
    ExitCode::from(code)
}

fn read_instance(path: &Path) -> Result<Instance, Failure> {
    load_instance(path).map_err(Failure::usage)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display())).map_err(Failure::usage)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display())).map_err(Failure::usage)
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(Failure::environment)
}

fn parse_grid(text: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::usage(anyhow!("grid must look like 4x4, got `{text}`"));
    let (x, y) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
}

fn offline_instance(args: &OfflineArgs) -> Result<Instance, Failure> {
    let (graph, spec): (Graph, OfflineSpec) = match args.benchmark {
        Some(name) => {
            let spec = plant_benchmark_spec(name, args.agvs).ok_or_else(|| Failure::usage(anyhow!("unknown benchmark `{name}`")))?;
            (generate_grid_graph(9, 6).map_err(Failure::usage)?, OfflineSpec { agv_capacity: args.capacity, ..spec })
        }
        None => {
            let (x, y) = parse_grid(&args.grid)?;
            let spec = OfflineSpec {
                unpaired: args.unpaired.clone(),
                paired: args.paired.clone(),
                agv_count: args.agvs,
                agv_capacity: args.capacity,
            };
            (generate_grid_graph(x, y).map_err(Failure::usage)?, spec)
        }
    };
    generate_offline_instance(&spec, &graph).map_err(Failure::usage)
}

fn emit_instance(instance: &Instance, out: Option<&Path>, manifest: &mut RunManifest) -> Outcome {
    let text = instance_to_json(instance) + "\n";
    match out {
        Some(p) => {
            write_text(p, &text)?;
            manifest.artifact("instance", p);
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn generate(cmd: &Generate, manifest: &mut RunManifest) -> Outcome {
    match cmd {
        Generate::Offline(args) => {
            let inst = offline_instance(args)?;
            manifest.config = serde_json::json!({
                "mode": "offline", "grid": args.grid, "benchmark": args.benchmark,
                "unpaired": args.unpaired, "paired": args.paired, "agvs": args.agvs, "capacity": args.capacity,
            });
            emit_instance(&inst, args.out.as_deref(), manifest)
        }
        Generate::Online(args) => {
            let base = match &args.base {
                Some(p) => read_instance(p)?,
                None => offline_instance(&args.offline)?,
            };
            let density: Density = args.density.parse().map_err(Failure::usage)?;
            if density.release_of(1) == 0 {
                return Err(Failure::usage(anyhow!("density must not exceed 1, got {}", args.density)));
            }
            let jobs = generate_density_stream(base.jobs(), density, args.window, args.seed);
            let inst = Instance::new(base.graph().clone(), base.agvs().to_vec(), jobs).map_err(Failure::usage)?;
            manifest.seeds.push(args.seed);
            manifest.config = serde_json::json!({
                "mode": "online", "base": args.base, "grid": args.offline.grid, "benchmark": args.offline.benchmark,
                "unpaired": args.offline.unpaired, "paired": args.offline.paired, "agvs": args.offline.agvs,
                "capacity": args.offline.capacity, "density": args.density, "window": args.window,
            });
            emit_instance(&inst, args.offline.out.as_deref(), manifest)
        }
    }
}

fn load_weights(path: Option<&Path>) -> Result<CostWeights, Failure> {
    let Some(p) = path else { return Ok(CostWeights::default()) };
    let w: CostWeights = read_json(p, "weights")?;
    w.validate().map_err(|e| Failure::usage(anyhow!(e)))?;
    Ok(w)
}

fn solver_command(flag: Option<&str>) -> Result<SolverCommand, Failure> {
    let exact = |e: ExactError| if e.is_environment() { Failure::environment(e) } else { Failure::usage(e) };
    match flag {
        Some(t) => SolverCommand::for_program(t).map_err(exact),
        None if std::env::var(SOLVER_ENV).is_ok_and(|v| !v.trim().is_empty()) => SolverCommand::from_env().map_err(exact),
        None => Err(Failure::usage(anyhow!("exact needs --solver-cmd or {SOLVER_ENV}"))),
    }
}

fn exact_failure(e: ExactError) -> Failure {
    match e {
        ExactError::Infeasible => Failure::infeasible(e),
        e if e.is_environment() => Failure::environment(e),
        e => Failure::infeasible(e),
    }
}

struct Solved {
    solution: Solution,
    kpi: KpiReport,
    status: String,
}

fn solve_one(instance: &Instance, algo: Algo, search: &SearchArgs, weights: &CostWeights) -> Result<Solved, Failure> {
    let started = Instant::now();
    let heuristic = |a| base_schedule(instance, None, a).map_err(Failure::infeasible);
    let (solution, status) = match algo {
        Algo::Greedy => (heuristic(Assigner::Greedy)?, "heuristic".to_string()),
        Algo::Loops => (heuristic(Assigner::Loops)?, "heuristic".to_string()),
        Algo::Tabu => {
            let initial = heuristic(Assigner::Loops)?;
            let limits = SearchLimits {
                wall_time_s: search.deterministic_iters.is_none().then_some(search.time_limit),
                max_iterations_no_improvement: search.max_stall_iters,
                tabu_tenure: search.tenure,
                max_iterations: search.deterministic_iters,
            };
            (tabu_search(instance, &initial, weights, &limits, None).map_err(Failure::usage)?, "searched".to_string())
        }
        Algo::Exact => {
            let config = ExactConfig { time_limit_s: search.time_limit, command: solver_command(search.solver_cmd.as_deref())? };
            let out = solve_exact(instance, None, &config).map_err(exact_failure)?;
            let status = match out.status {
                ExactStatus::Optimal => "optimal",
                ExactStatus::Improved => "feasible",
                ExactStatus::Incumbent => "timeout_kept_start",
            };
            (out.solution, status.to_string())
        }
    };
    let elapsed = if search.deterministic_iters.is_some() { 0.0 } else { started.elapsed().as_secs_f64() };
    let violations = verify(instance, &solution, None);
    if !violations.is_empty() {
        return Err(Failure::infeasible(anyhow!("solution fails verification: {}", violations[0])));
    }
    let releases = instance.jobs().iter().map(|j| (j.id, j.release_time)).collect();
    let kpi = kpis(instance, &solution, &releases, elapsed);
    Ok(Solved { solution, kpi, status })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "instance".into())
}

fn kpi_csv(instance: &str, algorithm: &str, report: KpiReport) -> Result<String, Failure> {
    let mut buf = Vec::new();
    write_kpi_csv(&mut buf, &[KpiRow { instance: instance.into(), algorithm: algorithm.into(), report }]).map_err(Failure::environment)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn solution_json(sol: &Solution) -> String {
    serde_json::to_string_pretty(sol).expect("solution serializes") + "\n"
}

fn solve(args: &SolveArgs, manifest: &mut RunManifest) -> Outcome {
    let weights = load_weights(args.search.weights.as_deref())?;
    let batch = args.instance.len() > 1;
    if batch && args.out_dir.is_none() {
        return Err(Failure::usage(anyhow!("several instances need --out-dir")));
    }
    if batch && (args.out.is_some() || args.kpi.is_some()) {
        return Err(Failure::usage(anyhow!("--out and --kpi take a single instance; use --out-dir")));
    }
    if args.jobs == 0 {
        return Err(Failure::usage(anyhow!("--jobs must be positive")));
    }
    manifest.config = serde_json::json!({
        "algo": args.algo.to_string(), "time_limit": args.search.time_limit,
        "deterministic_iters": args.search.deterministic_iters, "max_stall_iters": args.search.max_stall_iters,
        "tenure": args.search.tenure, "weights": weights, "solver_cmd": args.search.solver_cmd,
        "instances": args.instance,
    });
    let instances: Vec<(PathBuf, Instance)> =
        args.instance.iter().map(|p| read_instance(p).map(|i| (p.clone(), i))).collect::<Result<_, _>>()?;
    let results: Vec<Result<Solved, Failure>> = run_batch(&instances, args.jobs, |inst| solve_one(inst, args.algo, &args.search, &weights));

    let mut first_failure = None;
    for ((path, _), result) in instances.iter().zip(results) {
        let name = stem(path);
        match result {
            Ok(solved) => {
                eprintln!("{name}: {} horizon {} status {}", args.algo, solved.solution.horizon, solved.status);
                let (out, kpi) = match &args.out_dir {
                    Some(dir) => {
                        std::fs::create_dir_all(dir)?;
                        (Some(dir.join(format!("{name}.{}.solution.json", args.algo))), Some(dir.join(format!("{name}.{}.kpi.csv", args.algo))))
                    }
                    None => (args.out.clone(), args.kpi.clone()),
                };
                match &out {
                    Some(p) => {
                        write_text(p, &solution_json(&solved.solution))?;
                        manifest.artifact("solution", p);
                    }
                    None => print!("{}", solution_json(&solved.solution)),
                }
                if let Some(p) = &kpi {
                    write_text(p, &kpi_csv(&name, &args.algo.to_string(), solved.kpi)?)?;
                    manifest.artifact("kpi", p);
                }
            }
            Err(f) => {
                if batch {
                    eprintln!("{name}: {:#}", f.error);
                }
                first_failure.get_or_insert(f);
            }
        }
    }
    first_failure.map_or(Ok(()), Err)
}

/// Applies `f` to every instance on up to `jobs` threads, keeping order.
fn run_batch<T: Send>(instances: &[(PathBuf, Instance)], jobs: usize, f: impl Fn(&Instance) -> T + Sync) -> Vec<T> {
    if jobs <= 1 || instances.len() <= 1 {
        return instances.iter().map(|(_, i)| f(i)).collect();
    }
    let chunk = instances.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = instances.chunks(chunk).map(|c| scope.spawn(|| c.iter().map(|(_, i)| f(i)).collect::<Vec<T>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}

fn verify_cmd(args: &VerifyArgs, manifest: &mut RunManifest) -> Outcome {
    let instance = read_instance(&args.instance)?;
    let solution: Solution = read_json(&args.solution, "solution")?;
    let state: Option<OnlineState> = args.online_state.as_deref().map(|p| read_json(p, "online state")).transpose()?;
    manifest.config = serde_json::json!({ "instance": args.instance, "solution": args.solution, "online_state": args.online_state });
    manifest.verify_next_to(&args.solution);
    let violations = verify(&instance, &solution, state.as_ref());
    for v in &violations {
        if args.json {
            println!("{}", serde_json::to_string(v).expect("violation serializes"));
        } else {
            println!("{v}");
        }
    }
    if violations.is_empty() {
        eprintln!("feasible");
        Ok(())
    } else {
        Err(Failure::infeasible(anyhow!("{} violation(s)", violations.len())))
    }
}

fn parse_seconds(text: &str) -> Result<f64, Failure> {
    let t = text.trim();
    let num = t.strip_suffix('s').unwrap_or(t);
    match num.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(Failure::usage(anyhow!("budget must look like 20s, got `{text}`"))),
    }
}

fn simulate(args: &SimulateArgs, manifest: &mut RunManifest) -> Outcome {
    let instance = read_instance(&args.instance)?;
    let budget = match (&args.budget, args.budget_iters) {
        (Some(b), None) => PeriodBudget::WallSeconds(parse_seconds(b)?),
        (None, Some(n)) => PeriodBudget::Iterations(n),
        (None, None) => PeriodBudget::WallSeconds(20.0),
        (Some(_), Some(_)) => unreachable!("clap rejects both budgets"),
    };
    let weights = load_weights(args.weights.as_deref())?;
    let solver = match args.algo {
        Algo::Exact => {
            solver_command(args.solver_cmd.as_deref())?;
            Some(args.solver_cmd.clone().or_else(|| std::env::var(SOLVER_ENV).ok()).expect("checked above"))
        }
        _ => None,
    };
    let config = PeriodConfig {
        budget,
        algorithm: args.algo.into(),
        replan_trigger: match args.replan {
            Replan::EveryStep => ReplanTrigger::EveryStep,
            Replan::OnNewJobs => ReplanTrigger::OnNewJobs,
        },
        weights: Some(weights),
        limits: Some(SearchLimits {
            max_iterations_no_improvement: args.max_stall_iters,
            tabu_tenure: args.tenure,
            ..SearchLimits::default()
        }),
        solver,
    };
    manifest.seeds.push(args.seed);
    manifest.config = serde_json::to_value(&config).expect("config serializes");
    manifest.config["instance"] = serde_json::json!(args.instance);
    let started = Instant::now();
    let log = run_online(&instance, &config, args.seed).map_err(|e| match e {
        SimulationError::Exact(e) => exact_failure(e),
        SimulationError::Budget(_) => Failure::usage(e),
        e => Failure::infeasible(e),
    })?;
    let mut kpi = log.kpi.clone();
    if matches!(budget, PeriodBudget::WallSeconds(_)) {
        kpi.wall_time_s = started.elapsed().as_secs_f64();
    }
    eprintln!("{} periods, horizon {}", log.periods.len(), log.solution.horizon);
    if let Some(p) = &args.log {
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf)?;
        write_text(p, &String::from_utf8(buf).expect("json is utf-8"))?;
        manifest.artifact("log", p);
    }
    match &args.out {
        Some(p) => {
            write_text(p, &solution_json(&log.solution))?;
            manifest.artifact("solution", p);
        }
        None => print!("{}", solution_json(&log.solution)),
    }
    if let Some(p) = &args.kpi {
        write_text(p, &kpi_csv(&stem(&args.instance), &args.algo.to_string(), kpi)?)?;
        manifest.artifact("kpi", p);
    }
    Ok(())
}

#[derive(Default)]
struct Aggregate {
    runs: usize,
    sums: [f64; 5],
    counts: [usize; 5],
}

fn report(args: &ReportArgs, manifest: &mut RunManifest) -> Outcome {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.kpi_dir)
        .with_context(|| format!("reading {}", args.kpi_dir.display()))
        .map_err(Failure::usage)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::usage(anyhow!("no KPI files in {}", args.kpi_dir.display())));
    }
    manifest.config = serde_json::json!({ "kpi_dir": args.kpi_dir, "inputs": files });
    let mut table: BTreeMap<(String, String), Aggregate> = BTreeMap::new();
    for file in &files {
        let mut reader = csv::Reader::from_path(file).with_context(|| format!("reading {}", file.display())).map_err(Failure::usage)?;
        let header = reader.headers().map_err(Failure::usage)?.clone();
        if header.iter().ne(agvsched::solution::KPI_HEADER) {
            return Err(Failure::usage(anyhow!("{} does not have the KPI columns", file.display())));
        }
        for record in reader.records() {
            let record = record.with_context(|| format!("reading {}", file.display())).map_err(Failure::usage)?;
            let agg = table.entry((record[0].to_string(), record[1].to_string())).or_default();
            agg.runs += 1;
            for k in 0..5 {
                let cell = record[k + 2].trim();
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell.parse().with_context(|| format!("{}: bad number `{cell}`", file.display())).map_err(Failure::usage)?;
                agg.sums[k] += v;
                agg.counts[k] += 1;
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["instance", "algorithm", "runs", "MCT", "MCT_min", "sigma_CT", "ASU", "Time"]).map_err(Failure::environment)?;
    for ((inst, algo), agg) in &table {
        let mean = |k: usize| if agg.counts[k] == 0 { String::new() } else { format!("{:.4}", agg.sums[k] / agg.counts[k] as f64) };
        let row = [inst.clone(), algo.clone(), agg.runs.to_string(), mean(0), mean(1), mean(2), mean(3), mean(4)];
        w.write_record(&row).map_err(Failure::environment)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::environment(anyhow!("{e}")))?;
    write_text(&args.out, &String::from_utf8(bytes).expect("csv output is utf-8"))?;
    manifest.artifact("report", &args.out);
    Ok(())
}
