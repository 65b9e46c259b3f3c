//! `sfc`: simulate the crystallizer, generate data, train surrogates and run
//! the closed-loop studies.

mod config;
mod error;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sfc_core::harness::case_study::{mode_for, run_case};
use sfc_core::harness::{
    case_study_1, case_study_surrogate_config, generate_data, loop_metrics, open_vs_closed_loop, test_metrics, tracking_scenario,
    train_models, CaseStudyReport, DataGenConfig, ScenarioConfig,
};
use sfc_core::par::Execution;
use sfc_core::sim::{Inputs, PlantParams, SimConfig, Simulator, Trajectory, TrajectoryRow};
use sfc_core::surrogate::{Model, ModelKind, Surrogate};
use sfc_core::mpc::MpcConfig;

use config::{load, resolve_seed};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "sfc", version, about = "Slug-flow crystallizer simulation and model predictive control")]
struct Cli {
    /// Random seed; overrides config files and SFC_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root holding data/, models/ and runs/.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// JSON config of the subcommand's own concern.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the plant at constant inputs and write data/simulation.csv.
    /// The config is a plant parameter file.
    Simulate(SimulateArgs),
    /// Generate excitation data into data/data.csv. The config is a data
    /// generation file.
    GenData(GenDataArgs),
    /// Train surrogates into models/. The config is a surrogate file.
    Train(TrainArgs),
    /// Run one closed-loop scenario into runs/<name>/. The config is a
    /// scenario file.
    Control(ControlArgs),
    /// Run a multi-run study into runs/<name>/<label>/. The config is a
    /// scenario file.
    CaseStudy(CaseStudyArgs),
    /// Summarize every runs/**/report.json.
    Report,
}

#[derive(Args, Debug)]
struct PlantArgs {
    /// Plant parameter file.
    #[arg(long)]
    plant: Option<PathBuf>,
    /// Simulation settings file.
    #[arg(long)]
    sim: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Simulation settings file.
    #[arg(long)]
    sim: Option<PathBuf>,
    /// Constant inputs file.
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Logged samples.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Unlogged time before the first sample, s.
    #[arg(long, default_value_t = 0.0)]
    warmup: f64,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    plant: PlantArgs,
    /// Total logged samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Independent runs.
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Trajectory CSV; defaults to data/data.csv under the output root.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model families to train; all by default.
    #[arg(long = "model", value_delimiter = ',')]
    models: Vec<Family>,
    /// CQR miscoverage level.
    #[arg(long)]
    alpha: Option<f64>,
    /// BLL standard-deviation multiplier.
    #[arg(long)]
    m: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Nn,
    Cqr,
    Bll,
}

impl From<Family> for ModelKind {
    fn from(f: Family) -> Self {
        match f {
            Family::Nn => ModelKind::Nn,
            Family::Cqr => ModelKind::Cqr,
            Family::Bll => ModelKind::Bll,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// Economic objective with a d90 bound under a disturbance drop.
    Disturbance,
    /// d50 tracking under a varying disturbance.
    Tracking,
}

impl Preset {
    fn scenario(self) -> ScenarioConfig {
        match self {
            Preset::Disturbance => ScenarioConfig::default(),
            Preset::Tracking => tracking_scenario(),
        }
    }
}

#[derive(Args, Debug)]
struct ControlArgs {
    #[command(flatten)]
    plant: PlantArgs,
    /// Model artifact; the controller mode follows its family and a CQR
    /// model sets the controller's alpha.
    #[arg(long)]
    model: PathBuf,
    /// Scenario preset under the config file.
    #[arg(long, value_enum, default_value = "disturbance")]
    scenario: Preset,
    /// Run directory name; defaults to the model family.
    #[arg(long)]
    name: Option<String>,
    /// Controller steps.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Study {
    /// Every model in the model directory on the same disturbance scenario.
    Models,
    /// One-shot plan against receding-horizon control of one model.
    OpenClosed,
}

#[derive(Args, Debug)]
struct CaseStudyArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[arg(long, value_enum, default_value = "models")]
    study: Study,
    /// Directory of model artifacts; defaults to models/ under the output root.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Model family of the open/closed comparison.
    #[arg(long, value_enum, default_value = "nn")]
    model: Family,
    /// Run directory name; defaults to the study name.
    #[arg(long)]
    name: Option<String>,
    /// Controller steps.
    #[arg(long)]
    steps: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let seed = resolve_seed(cli.seed)?;
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Simulate(a) => simulate(&cli.out, cfg, seed, a),
        Command::GenData(a) => gen_data(&cli.out, cfg, seed, a),
        Command::Train(a) => train(&cli.out, cfg, seed, a),
        Command::Control(a) => control(&cli.out, cfg, seed, a),
        Command::CaseStudy(a) => case_study(&cli.out, cfg, seed, a),
        Command::Report => report(&cli.out),
    }
}

fn plant_and_sim(args: &PlantArgs, seed: Option<u64>) -> Result<(PlantParams, SimConfig), CliError> {
    let plant = load(PlantParams::default(), args.plant.as_deref())?;
    let mut sim = load(SimConfig::default(), args.sim.as_deref())?;
    if let Some(s) = seed {
        sim.seed = s;
    }
    plant.validate()?;
    sim.validate()?;
    Ok((plant, sim))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn simulate(out: &Path, cfg: Option<&Path>, seed: Option<u64>, a: SimulateArgs) -> Result<(), CliError> {
    let plant = load(PlantParams::default(), cfg)?;
    let mut sim_cfg = load(SimConfig::default(), a.sim.as_deref())?;
    let inputs = load(Inputs::default(), a.inputs.as_deref())?;
    if let Some(s) = seed {
        sim_cfg.seed = s;
    }
    inputs.validate()?;
    if !(a.warmup.is_finite() && a.warmup >= 0.0) {
        return Err(CliError::Invalid {
            field: "warmup".into(),
            reason: format!("must be finite and >= 0, got {}", a.warmup),
        });
    }
    let mut sim = Simulator::new(plant, sim_cfg)?;

    sim.run_for(&inputs, a.warmup)?;
    let mut traj = Trajectory::default();
    for _ in 0..a.steps {
        let m = sim.run_sample(&inputs)?;
        traj.rows.push(TrajectoryRow::new(inputs, &m));
    }
    let path = out.join("data").join("simulation.csv");
    let mut w = create(&path)?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    println!("wrote {} samples to {}", traj.len(), path.display());
    Ok(())
}

fn gen_data(out: &Path, cfg: Option<&Path>, seed: Option<u64>, a: GenDataArgs) -> Result<(), CliError> {
    let mut gen = load(DataGenConfig::default(), cfg)?;
    if let Some(s) = seed {
        gen.seed = s;
    }
    if let Some(n) = a.samples {
        gen.n_samples = n;
    }
    if let Some(n) = a.runs {
        gen.n_runs = n;
    }
    gen.validate()?;
    let (plant, sim) = plant_and_sim(&a.plant, None)?;

    let data = generate_data(&plant, &sim, &gen)?;
    let path = out.join("data").join("data.csv");
    let mut w = create(&path)?;
    Trajectory::write_many(&data.trajectories, &mut w)?;
    w.flush()?;
    write_json(&out.join("data").join("datagen.json"), &gen)?;
    println!("wrote {} samples in {} runs to {}", data.n_samples(), data.trajectories.len(), path.display());
    for e in &data.errors {
        eprintln!("run failed: {e}");
    }
    if data.errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::PartialFailure(data.errors.len()))
    }
}

fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    Trajectory::read_csv(BufReader::new(file)).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        source: e,
    })
}

fn train(out: &Path, cfg: Option<&Path>, seed: Option<u64>, a: TrainArgs) -> Result<(), CliError> {
    let mut sc = load(case_study_surrogate_config(), cfg)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(alpha) = a.alpha {
        sc.alpha = alpha;
    }
    if let Some(m) = a.m {
        sc.m = m;
    }
    sc.validate()?;
    let kinds: Vec<ModelKind> = if a.models.is_empty() {
        ModelKind::ALL.to_vec()
    } else {
        a.models.iter().map(|&f| f.into()).collect()
    };
    let data_path = a.data.unwrap_or_else(|| out.join("data").join("data.csv"));
    let trajs = read_trajectories(&data_path)?;

    let (ds, models) = train_models(&trajs, &sc, &kinds)?;
    let dir = out.join("models");
    fs::create_dir_all(&dir)?;
    for m in &models {
        let path = dir.join(format!("{}.json", m.kind().name()));
        m.save(&path)?;
        println!("wrote {}", path.display());
    }
    write_json(&dir.join("surrogate.json"), &sc)?;
    let metrics: Vec<_> = test_metrics(&ds, &models)
        .into_iter()
        .map(|(kind, prediction, simulation)| serde_json::json!({"model": kind, "prediction": prediction, "simulation": simulation}))
        .collect();
    for (kind, m) in kinds.iter().zip(&metrics) {
        println!(
            "{:<4} test MSE {:.3e}  coverage {}",
            kind.name(),
            m["prediction"]["mse"].as_f64().unwrap_or(f64::NAN),
            m["prediction"]["coverage"].as_f64().map_or("-".into(), |c| format!("{:.2}%", 100.0 * c))
        );
    }
    write_json(&dir.join("metrics.json"), &metrics)
}

fn load_model(path: &Path) -> Result<Surrogate, CliError> {
    Surrogate::load(path).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        source: e,
    })
}

/// CQR offsets are valid only at their calibration level, so the controller
/// takes alpha from the artifact.
fn adopt_alpha(sc: &mut ScenarioConfig, models: &[Surrogate]) {
    for m in models {
        if let Model::Cqr { cqr } = &m.model {
            sc.mpc.alpha = cqr.alpha;
        }
    }
}

fn scenario(cfg: Option<&Path>, preset: Preset, seed: Option<u64>, steps: Option<usize>) -> Result<ScenarioConfig, CliError> {
    let mut sc = load(preset.scenario(), cfg)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(n) = steps {
        sc.steps = n;
    }
    sc.validate()?;
    Ok(sc)
}

fn run_name(name: Option<String>, default: &str) -> Result<String, CliError> {
    let name = name.unwrap_or_else(|| default.to_string());
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(CliError::Invalid {
            field: "name".into(),
            reason: format!("`{name}` is not a plain directory name"),
        });
    }
    Ok(name)
}

fn print_metrics(label: &str, r: &CaseStudyReport) {
    let m = &r.metrics;
    println!(
        "{label:<8} violations {:>5.1}%  rel. violation {:.3}%  cost {:.4}  solve mean {:.3} s max {:.3} s  failures {}",
        m.violation_fraction_pct, m.avg_relative_violation_pct, m.avg_cost, m.avg_solve_time_s, m.max_solve_time_s, m.failures
    );
}

fn control(out: &Path, cfg: Option<&Path>, seed: Option<u64>, a: ControlArgs) -> Result<(), CliError> {
    let mut sc = scenario(cfg, a.scenario, seed, a.steps)?;
    let (plant, sim) = plant_and_sim(&a.plant, None)?;
    let model = load_model(&a.model)?;
    adopt_alpha(&mut sc, std::slice::from_ref(&model));
    let name = run_name(a.name, model.kind().name())?;

    let report = run_case(&model, &plant, &sim, &sc)?;
    let dir = out.join("runs").join(&name);
    report.write_to(&dir)?;
    print_metrics(model.kind().name(), &report);
    println!("wrote {}", dir.display());
    Ok(())
}

fn case_study(out: &Path, cfg: Option<&Path>, seed: Option<u64>, a: CaseStudyArgs) -> Result<(), CliError> {
    let preset = match a.study {
        Study::Models => Preset::Disturbance,
        Study::OpenClosed => Preset::Tracking,
    };
    let mut sc = scenario(cfg, preset, seed, a.steps)?;
    let (plant, sim) = plant_and_sim(&a.plant, None)?;
    let model_dir = a.models.unwrap_or_else(|| out.join("models"));
    let default_name = match a.study {
        Study::Models => "models",
        Study::OpenClosed => "open-closed",
    };
    let dir = out.join("runs").join(run_name(a.name, default_name)?);

    match a.study {
        Study::Models => {
            let models = ModelKind::ALL
                .iter()
                .map(|k| model_dir.join(format!("{}.json", k.name())))
                .filter(|p| p.exists())
                .map(|p| load_model(&p))
                .collect::<Result<Vec<_>, _>>()?;
            adopt_alpha(&mut sc, &models);
            if models.is_empty() {
                return Err(CliError::Invalid {
                    field: "models".into(),
                    reason: format!("no nn.json, cqr.json or bll.json in {}", model_dir.display()),
                });
            }
            let reports = case_study_1(&models, &plant, &sim, &sc, Execution::Parallel)?;
            for r in &reports {
                r.write_to(&dir.join(r.model.name()))?;
                print_metrics(r.model.name(), r);
            }
        }
        Study::OpenClosed => {
            let kind: ModelKind = a.model.into();
            let model = load_model(&model_dir.join(format!("{}.json", kind.name())))?;
            adopt_alpha(&mut sc, std::slice::from_ref(&model));
            let cmp = open_vs_closed_loop(&model, &plant, &sim, &sc, None)?;
            let mpc = MpcConfig {
                mode: mode_for(kind),
                ..sc.mpc
            };
            for (label, run) in [("open", &cmp.open_loop), ("closed", &cmp.closed_loop)] {
                let r = CaseStudyReport {
                    model: kind,
                    mode: mpc.mode,
                    metrics: loop_metrics(run, &mpc),
                    failure_messages: run.failures.clone(),
                    trajectory: run.clone(),
                };
                r.write_to(&dir.join(label))?;
            }
            write_json(
                &dir.join("comparison.json"),
                &serde_json::json!({
                    "model": kind,
                    "d50_target": cmp.target,
                    "open_loop_rms": cmp.open_loop_rms,
                    "closed_loop_rms": cmp.closed_loop_rms,
                }),
            )?;
            println!(
                "RMS d50 error: open loop {:.2} um, closed loop {:.2} um",
                cmp.open_loop_rms * 1e6,
                cmp.closed_loop_rms * 1e6
            );
        }
    }
    write_json(&dir.join("scenario.json"), &sc)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn find_reports(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            find_reports(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "report.json") {
            found.push(p);
        }
    }
    Ok(())
}

fn report(out: &Path) -> Result<(), CliError> {
    let runs = out.join("runs");
    if !runs.is_dir() {
        return Err(CliError::Invalid {
            field: "out".into(),
            reason: format!("{} has no runs/ directory", out.display()),
        });
    }
    let mut paths = Vec::new();
    find_reports(&runs, &mut paths)?;
    let reports = paths
        .iter()
        .map(|p| {
            let r: CaseStudyReport = serde_json::from_reader(BufReader::new(File::open(p)?)).map_err(|e| CliError::Config {
                path: p.clone(),
                reason: e.to_string(),
            })?;
            Ok((p.parent().unwrap().strip_prefix(&runs).unwrap().display().to_string(), r))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let path = out.join("summary.csv");
    let mut w = create(&path)?;
    writeln!(w, "run,model,mode,steps,violation_pct,rel_violation_pct,avg_cost,avg_solve_s,max_solve_s,failures")?;
    println!(
        "{:<24} {:<5} {:>6} {:>9} {:>9} {:>10} {:>9} {:>9}",
        "run", "model", "steps", "viol. %", "rel. %", "cost", "solve s", "max s"
    );
    for (run, r) in &reports {
        let m = &r.metrics;
        let mode = serde_json::to_value(r.mode)?;
        writeln!(
            w,
            "{run},{},{},{},{},{},{},{},{},{}",
            r.model.name(),
            mode.as_str().unwrap_or_default(),
            m.steps,
            m.violation_fraction_pct,
            m.avg_relative_violation_pct,
            m.avg_cost,
            m.avg_solve_time_s,
            m.max_solve_time_s,
            m.failures
        )?;
        println!(
            "{run:<24} {:<5} {:>6} {:>9.2} {:>9.3} {:>10.4} {:>9.3} {:>9.3}",
            r.model.name(),
            m.steps,
            m.violation_fraction_pct,
            m.avg_relative_violation_pct,
            m.avg_cost,
            m.avg_solve_time_s,
            m.max_solve_time_s
        );
    }
    w.flush()?;
    println!("wrote {} ({} runs)", path.display(), reports.len());
    Ok(())
}
