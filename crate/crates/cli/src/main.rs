use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use symwm_cli::commands::{self, Services};
use symwm_cli::config::{LabelerConfig, Overrides, RunConfig};
use symwm_sim::DomainName;
use symwm_vlm::GatewayConfig;

#[derive(Parser)]
#[command(name = "symwm", version, about = "Learn symbolic world models from demonstrations")]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Opts {
    /// JSON run configuration; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    domain: Option<String>,
    /// Comma-separated seeds.
    #[arg(long = "seeds", global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    n_demo: Option<usize>,
    #[arg(long, global = true)]
    j_thresh: Option<f64>,
    #[arg(long, global = true)]
    h_pre: Option<f64>,
    #[arg(long, global = true)]
    h_data: Option<f64>,
    #[arg(long, global = true)]
    n_tasks: Option<usize>,
    #[arg(long, global = true)]
    node_budget: Option<usize>,
    #[arg(long, global = true, value_enum)]
    labeler: Option<LabelerKind>,
    /// Flip rate for `--labeler noisy`.
    #[arg(long, global = true, default_value_t = 0.05)]
    flip_rate: f64,
    #[arg(long, global = true)]
    noise_seed: Option<u64>,
    /// Chat-completions base URL for `--labeler vlm`.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    vlm_model: Option<String>,
    #[arg(long, global = true)]
    vlm_cache: Option<PathBuf>,
    /// Dataset JSON to learn from instead of generated demonstrations.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelerKind {
    GroundTruth,
    Noisy,
    Vlm,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a model per seed: model.json, domain.pddl, listing.txt, trace.json.
    Learn,
    /// Run generated test tasks against learned models and write CSV reports.
    Eval {
        /// A model file, or a `learn` output directory.
        #[arg(long)]
        model: PathBuf,
    },
    /// Plan one generated test task and print the plan.
    Plan {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        task: usize,
    },
    /// Label a dataset and write labels.json.
    Label {
        /// Candidate pool from `propose`; defaults to the given and goal predicates.
        #[arg(long)]
        pool: Option<PathBuf>,
    },
    /// Propose candidate predicates and write pool.json.
    Propose,
    /// Generate demonstration datasets, one per seed.
    GenDemos,
    /// Summarize learn and eval outputs into report.md.
    Report {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn overrides(o: &Opts) -> Overrides {
    let labeler = o.labeler.map(|k| match k {
        LabelerKind::GroundTruth => LabelerConfig::GroundTruth,
        LabelerKind::Noisy => LabelerConfig::Noisy {
            flip_rate: o.flip_rate,
            seed: o.noise_seed,
        },
        LabelerKind::Vlm => {
            let mut gateway = GatewayConfig::default();
            if let Some(e) = &o.endpoint {
                gateway.base_url = e.clone();
            }
            if let Some(m) = &o.vlm_model {
                gateway.model = m.clone();
            }
            LabelerConfig::Vlm {
                gateway,
                cache_dir: o.vlm_cache.clone(),
                double_check: true,
            }
        }
    });
    Overrides {
        domain: o.domain.clone(),
        seeds: o.seeds.clone(),
        n_demo: o.n_demo,
        j_thresh: o.j_thresh,
        h_pre_frac: o.h_pre,
        h_data_frac: o.h_data,
        n_tasks: o.n_tasks,
        node_budget: o.node_budget,
        labeler,
        dataset: o.dataset.clone(),
        output_dir: o.out.clone(),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let base = match &cli.opts.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::for_domain(DomainName::MoreStacks),
    };
    let cfg = base.apply(&overrides(&cli.opts))?;
    let services = Services::default();
    match cli.command {
        Command::Learn => {
            for s in commands::cmd_learn(&cfg, &services)? {
                println!(
                    "seed {}: {} operators, selected [{}], J = {} -> {}",
                    s.seed,
                    s.report.operators,
                    s.report.selected.join(", "),
                    s.report.trace.final_j,
                    s.dir.display()
                );
            }
        }
        Command::Eval { model } => {
            let s = commands::cmd_eval(&cfg, &model)?;
            print!("{}", s.text);
            println!("wrote {}", cfg.output_dir.join("eval.csv").display());
        }
        Command::Plan { model, task } => {
            let seed = cfg.seeds[0];
            let p = commands::cmd_plan(&cfg, &model, seed, task)?;
            for (i, s) in p.steps.iter().enumerate() {
                println!("{i}: {s}");
            }
            println!("{} nodes; problem written to {}", p.nodes_created, p.problem_path.display());
        }
        Command::Label { pool } => {
            let s = commands::cmd_label(&cfg, pool.as_deref(), &services)?;
            println!(
                "labeled {} demos with {} ({} gateway requests) -> {}",
                s.file.demos.len(),
                s.file.labeler,
                s.gateway_requests,
                s.path.display()
            );
        }
        Command::Propose => {
            let s = commands::cmd_propose(&cfg, &services)?;
            println!(
                "{} candidate predicates ({} gateway requests) -> {}",
                s.pool.len(),
                s.gateway_requests,
                s.path.display()
            );
        }
        Command::GenDemos => {
            for p in commands::cmd_gen_demos(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Report { dir } => {
            print!("{}", commands::cmd_report(dir.as_deref().unwrap_or(&cfg.output_dir))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
