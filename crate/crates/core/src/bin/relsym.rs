use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relsym::pipeline::{
    cmd_collect, cmd_emit, cmd_eval, cmd_induce, cmd_pipeline, cmd_plan, cmd_symbolize, cmd_train, load_config, Paths, PipelineError,
    Profile,
};

#[derive(Parser)]
#[command(name = "relsym", version, about = "Learn relational symbols from pick-and-place data, induce PDDL operators and plan")]
struct Cli {
    /// key = value configuration file applied on top of the profile
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "desk", value_parser = ["paper", "desk"])]
    profile: String,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Collect random-exploration transitions
    Collect {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the effect-prediction network
    Train {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Convert transitions to symbolic transitions with a trained model
    Symbolize {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Induce lifted operators from symbolic transitions
    Induce {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the PDDL domain and a sample problem
    Emit {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        problem: Option<PathBuf>,
    },
    /// Plan for a PDDL problem
    Plan {
        /// Domain file
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Initial and goal scenes for replay validation
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the planning evaluation on generated problem pairs
    Eval {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage in order
    Pipeline,
}

fn run(cli: Cli) -> Result<Vec<String>, PipelineError> {
    let profile = Profile::from_name(&cli.profile).expect("restricted by clap");
    let mut overrides = Vec::new();
    if let Some(seed) = cli.seed {
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PipelineError::Stage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let cfg = load_config(profile, cli.config.as_deref(), &overrides)?;
    let mut p = Paths::in_dir(&cfg.out_dir);
    let pick = |o: Option<PathBuf>, d: &PathBuf| o.unwrap_or_else(|| d.clone());
    let summary = match cli.command {
        Cmd::Collect { out } => cmd_collect(&cfg, &pick(out, &p.dataset))?,
        Cmd::Train { input, out, metrics } => cmd_train(&cfg, &pick(input, &p.dataset), &pick(out, &p.model), &pick(metrics, &p.metrics))?,
        Cmd::Symbolize { input, model, out } => cmd_symbolize(&pick(input, &p.dataset), &pick(model, &p.model), &pick(out, &p.symbolic))?,
        Cmd::Induce { input, out } => cmd_induce(&cfg, &pick(input, &p.symbolic), &pick(out, &p.operators))?,
        Cmd::Emit { input, model, out, problem } => {
            p.domain = pick(out, &p.domain);
            p.problem = pick(problem, &p.problem);
            cmd_emit(&cfg, &pick(input, &p.operators), &pick(model, &p.model), &p)?
        }
        Cmd::Plan { input, problem, scenes, out } => {
            p.domain = pick(input, &p.domain);
            p.problem = pick(problem, &p.problem);
            p.scenes = pick(scenes, &p.scenes);
            p.plan = pick(out, &p.plan);
            cmd_plan(&cfg, &p)?
        }
        Cmd::Eval { input, model, out } => {
            p.report = pick(out, &p.report);
            cmd_eval(&cfg, &pick(input, &p.operators), &pick(model, &p.model), &p)?
        }
        Cmd::Pipeline => return cmd_pipeline(&cfg, &p),
    };
    Ok(vec![summary])
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
