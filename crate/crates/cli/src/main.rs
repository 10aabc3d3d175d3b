use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flowcoop::artifact::{load_model, save_model};
use flowcoop::datagen::{default_modes, generate, ModeSpec, DEFAULT_SAMPLE_RATE};
use flowcoop::harness::{
    config_hash, obstacle_prepared, prepare, sweep_prepared, write_json, write_obstacle, write_sweep, ObstaclePlacement,
    SweepConfig,
};
use flowcoop::pipeline::{train, TrainedModel};
use flowcoop::planner::{parse_obstacles, Obstacle};
use flowcoop::session::{default_start, SessionConfig};
use flowcoop::trajectory::{load_csv_path, load_dataset, preprocess_with, DataFormat, Trajectory};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "flowcoop", version, about = "Motion-flow recognition and cooperative planning")]
struct Cli {
    /// Random seed.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// JSON configuration: a file path or an inline object.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Output directory (for `gen`, a `.json` path is also accepted).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        /// Mode list as JSON; the four built-in modes otherwise.
        #[arg(long)]
        modes: Option<PathBuf>,
    },
    /// Train the flow bank and reward and write a model artifact.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Motion descriptor of a human trajectory.
    Describe {
        #[command(flatten)]
        input: Input,
        /// Also write the descriptor of every prefix.
        #[arg(long)]
        prefixes: bool,
    },
    /// Plan a robot trajectory for an observed human trajectory.
    Plan {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        obstacles: Option<PathBuf>,
        /// Current joints as comma-separated radians.
        #[arg(long, value_delimiter = ',')]
        q_now: Option<Vec<f64>>,
    },
    /// RMS error over observation ratios.
    Sweep {
        #[arg(long)]
        data: PathBuf,
    },
    /// Clearance and RMS with an obstacle on every run's target path.
    ObstacleStudy {
        #[arg(long)]
        data: PathBuf,
        /// Fixed obstacles instead of one on each target path's midpoint.
        #[arg(long)]
        obstacles: Option<PathBuf>,
    },
    /// Serve live sessions over HTTP and WebSocket.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Args)]
struct Input {
    #[arg(long)]
    model: PathBuf,
    /// Dataset containing the trajectory; use with --demo.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    demo: usize,
    /// CSV file with columns t,x,y,z.
    #[arg(long, conflicts_with = "data")]
    traj: Option<PathBuf>,
    /// Fraction of the trajectory observed.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct CliConfig {
    sweep: SweepConfig,
    session: SessionConfig,
    sample_rate_hz: Option<f64>,
    obstacle_radius_m: Option<f64>,
}

fn load_config(arg: Option<&str>) -> Result<CliConfig> {
    let Some(arg) = arg else {
        return Ok(CliConfig::default());
    };
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).with_context(|| format!("reading config {arg}"))?
    };
    serde_json::from_str(&text).context("parsing config")
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Gen { modes } => cmd_gen(&cli, &config, modes.as_deref()),
        Command::Train { data } => cmd_train(&cli, &config, data),
        Command::Describe { input, prefixes } => cmd_describe(&cli, input, *prefixes),
        Command::Plan {
            input,
            obstacles,
            q_now,
        } => cmd_plan(&cli, input, obstacles.as_deref(), q_now.clone()),
        Command::Sweep { data } => cmd_sweep(&cli, &config, data),
        Command::ObstacleStudy { data, obstacles } => cmd_obstacle(&cli, &config, data, obstacles.as_deref()),
        Command::Serve { model, addr } => cmd_serve(&cli, &config, model, *addr),
    }
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    Ok(&cli.out)
}

fn cmd_gen(cli: &Cli, config: &CliConfig, modes: Option<&Path>) -> Result<()> {
    let specs: Vec<ModeSpec> = match modes {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).context("parsing modes")?,
        None => default_modes(),
    };
    let rate = config.sample_rate_hz.unwrap_or(DEFAULT_SAMPLE_RATE);
    let data = generate(&specs, rate, cli.seed)?;
    let (file, dir) = if cli.out.extension().is_some_and(|e| e == "json") {
        let dir = cli.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        (cli.out.clone(), dir.to_path_buf())
    } else {
        let dir = out_dir(cli)?;
        (dir.join("data.json"), dir.to_path_buf())
    };
    fs::write(&file, serde_json::to_string_pretty(&data)?)?;
    let mut w = csv::Writer::from_path(dir.join("demos.csv"))?;
    w.write_record(["demo", "mode", "n_points", "duration_s", "seed"])?;
    for (i, d) in data.demos.iter().enumerate() {
        w.write_record([
            i.to_string(),
            d.mode.clone().unwrap_or_default(),
            d.human.len().to_string(),
            d.human.duration().to_string(),
            cli.seed.to_string(),
        ])?;
    }
    w.flush()?;
    println!("wrote {} demos to {}", data.demos.len(), file.display());
    Ok(())
}

fn read_dataset(path: &Path) -> Result<flowcoop::trajectory::Dataset> {
    load_dataset(path, DataFormat::from_path(path)).with_context(|| format!("loading {}", path.display()))
}

#[derive(Serialize)]
struct TrainSummary {
    config_hash: String,
    seed: u64,
    n_demos: usize,
    k: usize,
    labels: Vec<usize>,
    n_inducing: usize,
    lambda: f64,
}

fn cmd_train(cli: &Cli, config: &CliConfig, data: &Path) -> Result<()> {
    let dataset = read_dataset(data)?;
    let pipeline = config.sweep.effective_pipeline();
    let model = train(&dataset, &pipeline, cli.seed)?;
    let dir = out_dir(cli)?;
    save_model(&model, &dir.join("model.json"))?;
    let summary = TrainSummary {
        config_hash: config_hash(&pipeline),
        seed: cli.seed,
        n_demos: model.demos.len(),
        k: model.bank.k(),
        labels: model.bank.labels.clone(),
        n_inducing: model.reward.inducing.len(),
        lambda: model.reward.lambda,
    };
    write_json(&dir.join("train.json"), &summary)?;
    let mut w = csv::Writer::from_path(dir.join("clusters.csv"))?;
    w.write_record(["demo", "mode", "cluster", "config_hash", "seed"])?;
    for (i, (d, l)) in dataset.demos.iter().zip(&model.bank.labels).enumerate() {
        w.write_record([
            i.to_string(),
            d.mode.clone().unwrap_or_default(),
            l.to_string(),
            summary.config_hash.clone(),
            cli.seed.to_string(),
        ])?;
    }
    w.flush()?;
    println!(
        "trained {} flows on {} demos; model at {}",
        summary.k,
        summary.n_demos,
        dir.join("model.json").display()
    );
    Ok(())
}

fn observed(model: &TrainedModel, input: &Input) -> Result<Trajectory> {
    if !(input.ratio > 0.0 && input.ratio <= 1.0) {
        bail!("--ratio must lie in (0, 1]");
    }
    let raw = match (&input.data, &input.traj) {
        (Some(data), None) => {
            let dataset = read_dataset(data)?;
            let Some(demo) = dataset.demos.get(input.demo) else {
                bail!("dataset has {} demos, --demo {} is out of range", dataset.demos.len(), input.demo);
            };
            demo.human.clone()
        }
        (None, Some(traj)) => load_csv_path(traj)?,
        _ => bail!("give either --data with --demo, or --traj"),
    };
    let traj = preprocess_with(&raw, &model.config.preprocess)?.trajectory;
    Ok(traj.observed(input.ratio))
}

fn cmd_describe(cli: &Cli, input: &Input, prefixes: bool) -> Result<()> {
    let model = load_model(&input.model)?;
    let obs = observed(&model, input)?;
    let phi = model.bank.describe(&obs)?;
    let dir = out_dir(cli)?;
    write_json(
        &dir.join("descriptor.json"),
        &serde_json::json!({
            "p": phi.p,
            "argmax": phi.argmax(),
            "ratio": input.ratio,
            "n_points": obs.len(),
            "seed": cli.seed,
        }),
    )?;
    let mut w = csv::Writer::from_path(dir.join("descriptor.csv"))?;
    w.write_record(["component", "p"])?;
    for (k, p) in phi.p.iter().enumerate() {
        w.write_record([k.to_string(), p.to_string()])?;
    }
    w.flush()?;
    if prefixes {
        let mut w = csv::Writer::from_path(dir.join("prefix_descriptors.csv"))?;
        let mut header = vec!["t".to_string()];
        header.extend((0..phi.len()).map(|k| format!("p{k}")));
        w.write_record(&header)?;
        for (i, d) in model.bank.prefix_descriptors(&obs)?.iter().enumerate() {
            let mut row = vec![obs.times()[i + 1].to_string()];
            row.extend(d.p.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    println!("p = {:?} (argmax {})", phi.p, phi.argmax());
    Ok(())
}

fn cmd_plan(cli: &Cli, input: &Input, obstacles: Option<&Path>, q_now: Option<Vec<f64>>) -> Result<()> {
    let model = load_model(&input.model)?;
    let planner = model.planner()?;
    let obs = observed(&model, input)?;
    let obstacles: Vec<Obstacle> = match obstacles {
        Some(p) => parse_obstacles(&fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let q_now = q_now.unwrap_or_else(|| default_start(&planner));
    let plan = planner.plan(&obs, &q_now, cli.seed, &obstacles)?;
    let dir = out_dir(cli)?;
    write_json(&dir.join("plan.json"), &plan.export())?;
    let mut w = csv::Writer::from_path(dir.join("plan.csv"))?;
    let mut header: Vec<String> = ["step", "x", "y", "z"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=7).map(|j| format!("q{j}")));
    w.write_record(&header)?;
    for i in 0..plan.path.nrows() {
        let mut row = vec![i.to_string()];
        row.extend(plan.path.row(i).iter().map(|v| v.to_string()));
        row.extend(plan.joints.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    let end = plan.path.row(plan.path.nrows() - 1);
    println!(
        "planned {} steps; descriptor argmax {}; end ({:.3}, {:.3}, {:.3}); clearance {:?} mm",
        plan.path.nrows(),
        plan.descriptor.argmax(),
        end[0],
        end[1],
        end[2],
        plan.clearance_mm
    );
    Ok(())
}

fn cmd_sweep(cli: &Cli, config: &CliConfig, data: &Path) -> Result<()> {
    config.sweep.validate()?;
    let dataset = read_dataset(data)?;
    let prep = prepare(&dataset, &config.sweep.effective_pipeline(), cli.seed)?;
    let report = sweep_prepared(&prep, &config.sweep, cli.seed)?;
    write_sweep(out_dir(cli)?, &report)?;
    println!("ratio  mean_rms_m  std_rms_m");
    for s in &report.summary {
        println!("{:>5.2}  {:>10.4}  {:>9.4}", s.ratio, s.mean_rms_m, s.std_rms_m);
    }
    println!(
        "early agreement {:.3}; degradation {:.3}",
        report.early_agreement, report.degradation
    );
    Ok(())
}

fn cmd_obstacle(cli: &Cli, config: &CliConfig, data: &Path, obstacles: Option<&Path>) -> Result<()> {
    let dataset = read_dataset(data)?;
    let placement = match obstacles {
        Some(p) => ObstaclePlacement::Fixed(parse_obstacles(&fs::read_to_string(p)?)?),
        None => ObstaclePlacement::TargetMidpoint {
            radius_m: config.obstacle_radius_m.unwrap_or(0.05),
        },
    };
    config.sweep.validate()?;
    let prep = prepare(&dataset, &config.sweep.effective_pipeline(), cli.seed)?;
    let report = obstacle_prepared(&prep, &config.sweep, &placement, cli.seed)?;
    write_obstacle(out_dir(cli)?, &report)?;
    println!(
        "{} runs; clearance > {} mm in {:.1}%; min clearance {:?} mm; mean RMS {:.4} m (without obstacle {:.4} m)",
        report.rows.len(),
        report.alpha_mm,
        100.0 * report.clear_fraction,
        report.min_d_min_mm,
        report.mean_rms_m,
        report.mean_baseline_rms_m
    );
    Ok(())
}

fn cmd_serve(cli: &Cli, config: &CliConfig, model: &Path, addr: SocketAddr) -> Result<()> {
    let model = load_model(model)?;
    let planner = model.planner()?;
    let mut defaults = config.session.clone();
    defaults.seed = cli.seed;
    let state = flowcoop_service::AppState::new(planner, model.config.preprocess.clone(), defaults);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(flowcoop_service::serve(addr, Arc::clone(&state)))?;
    Ok(())
}
