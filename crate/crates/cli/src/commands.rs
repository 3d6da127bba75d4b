//! The `symwm` subcommands as library functions. Each writes its artifacts
//! under the configured output directory and returns a summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};
use symwm_core::artifact::{digest, DatasetArtifact, ModelArtifact, Provenance, SCHEMA_VERSION};
use symwm_core::atoms::{GroundAtom, KindTag, Label, Pred, Predicate};
use symwm_core::execute::Model;
use symwm_core::labeling::{abstract_state, label_demo, make_noisy, write_atomic, LabelBatch, LabelContext, LabelError, Labeler};
use symwm_core::listing::Listing;
use symwm_core::operator::Demonstration;
use symwm_core::pddl::{emit_domain, emit_problem, Domain};
use symwm_core::planner::{ground_all, plan};
use symwm_core::proposal::Pool;
use symwm_core::selection::SelectionTrace;
use symwm_core::types::State;
use symwm_sim::DomainName;
use symwm_vlm::{build_proposal_prompt, Gateway, HttpTransport, Mode, ProposalPromptConfig, Transport, VlmLabeler};

use crate::config::{LabelerConfig, RunConfig};
use crate::pipeline::{evaluate_tasks, goal_predicates, learn_with, mock_proposals, pool_from_proposals};

/// Injection points for tests; the defaults talk to the real services.
#[derive(Default, Clone)]
pub struct Services {
    /// Replaces the HTTP transport of VLM-backed commands.
    pub transport: Option<Arc<dyn Transport>>,
}

/// Routes visual atoms to one labeler and everything else to another.
pub struct SplitLabeler {
    pub visual: Arc<dyn Labeler>,
    pub rest: Arc<dyn Labeler>,
}

impl Labeler for SplitLabeler {
    fn identity(&self) -> String {
        format!("split({}, {})", self.visual.identity(), self.rest.identity())
    }

    fn supports(&self, kind: KindTag) -> bool {
        match kind {
            KindTag::Visual => self.visual.supports(kind),
            _ => self.rest.supports(kind),
        }
    }

    fn label_batch(&self, state: &State, atoms: &[GroundAtom], ctx: &LabelContext) -> Result<LabelBatch, LabelError> {
        let (visual, rest): (Vec<GroundAtom>, Vec<GroundAtom>) =
            atoms.iter().cloned().partition(|a| a.predicate.kind.tag() == KindTag::Visual);
        let mut labels = BTreeMap::new();
        let mut raw = None;
        if !visual.is_empty() {
            let b = self.visual.label_batch(state, &visual, ctx)?;
            labels.extend(b.labels);
            raw = b.raw;
        }
        if !rest.is_empty() {
            labels.extend(self.rest.label_batch(state, &rest, ctx)?.labels);
        }
        Ok(LabelBatch { labels, raw })
    }
}

/// The gateway of a VLM-backed config. Credentials are checked here, before
/// anything is read or written.
pub fn gateway(cfg: &RunConfig, services: &Services) -> anyhow::Result<Option<Arc<Gateway>>> {
    let LabelerConfig::Vlm {
        gateway, cache_dir, ..
    } = &cfg.labeler
    else {
        return Ok(None);
    };
    let transport: Arc<dyn Transport> = match &services.transport {
        Some(t) => t.clone(),
        None => Arc::new(HttpTransport::from_config(gateway)?),
    };
    let cache = cache_dir.clone().unwrap_or_else(|| cfg.output_dir.join("vlm_cache"));
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let g = Gateway::new(gateway.clone(), transport)
        .with_cache(cache)
        .with_audit(cfg.output_dir.join("audit.ndjson"))?;
    Ok(Some(Arc::new(g)))
}

/// The labeler for one seed. Noise spares the `protected` (goal) predicates.
pub fn labeler(
    cfg: &RunConfig,
    domain: DomainName,
    protected: &BTreeSet<Pred>,
    seed: u64,
    gateway: Option<&Arc<Gateway>>,
) -> Arc<dyn Labeler> {
    match &cfg.labeler {
        LabelerConfig::GroundTruth => Arc::new(domain.labeler()),
        LabelerConfig::Noisy { flip_rate, seed: s } => {
            Arc::new(make_noisy(domain.labeler(), *flip_rate, s.unwrap_or(seed), protected.clone()))
        }
        LabelerConfig::Vlm { double_check, .. } => {
            let g = gateway.expect("VLM configs build their gateway first").clone();
            let mut vlm = VlmLabeler::new(g, Mode::Training);
            vlm.double_check = *double_check;
            Arc::new(SplitLabeler {
                visual: Arc::new(vlm),
                rest: Arc::new(domain.labeler()),
            })
        }
    }
}

/// Digest of the settings that influence results; where outputs go does not.
pub fn config_digest(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    digest(&c)
}

/// Demonstrations for `seed`: the configured dataset, or freshly generated.
pub fn load_demos(cfg: &RunConfig, seed: u64) -> anyhow::Result<(Vec<Demonstration>, DatasetArtifact)> {
    let domain = cfg.domain()?;
    if let Some(path) = &cfg.dataset {
        let text = fs::read_to_string(path).with_context(|| format!("reading dataset {}", path.display()))?;
        let ds = DatasetArtifact::from_json(&text).with_context(|| format!("dataset {}", path.display()))?;
        ensure!(
            ds.domain == domain.name(),
            "dataset {} is for domain {}, config says {}",
            path.display(),
            ds.domain,
            domain
        );
        let demos = ds.demos()?;
        ensure!(!demos.is_empty(), "dataset {} has no demonstrations", path.display());
        return Ok((demos, ds));
    }
    ensure!(cfg.n_demo > 0, "n_demo must be positive when no dataset is given");
    let demos = domain.generate_demos(cfg.n_demo, seed)?;
    let ds = DatasetArtifact::from_demos(domain.name(), &domain.types(), &goal_predicates(&demos), &demos);
    Ok((demos, ds))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, text).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn cmd_gen_demos(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    cfg.seeds
        .iter()
        .map(|&seed| {
            let (_, ds) = load_demos(cfg, seed)?;
            let path = cfg.output_dir.join(format!("dataset_seed{seed}.json"));
            write(&path, &ds.to_json())?;
            Ok(path)
        })
        .collect()
}

/// Proposer answers, one per demonstration.
fn proposals(
    cfg: &RunConfig,
    domain: DomainName,
    demos: &[Demonstration],
    seed: u64,
    gateway: Option<&Arc<Gateway>>,
) -> anyhow::Result<Vec<String>> {
    match gateway {
        None => Ok(mock_proposals(domain, demos, &cfg.pipeline(seed))),
        Some(g) => demos
            .iter()
            .map(|d| {
                let bundle = build_proposal_prompt(d, &ProposalPromptConfig::default())?;
                Ok(g.request(&bundle)?)
            })
            .collect(),
    }
}

/// Trace report written next to every learned model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub schema_version: u32,
    pub domain: String,
    pub seed: u64,
    pub config_digest: String,
    pub dataset_digest: String,
    pub labeler: String,
    pub demos: usize,
    pub pool: Vec<String>,
    pub selected: Vec<String>,
    pub learned: Vec<String>,
    pub operators: usize,
    pub pruned_operators: usize,
    pub trace: SelectionTrace,
}

#[derive(Debug, Clone)]
pub struct LearnSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub report: LearnReport,
    pub model: Model,
    pub listing: String,
}

pub fn cmd_learn(cfg: &RunConfig, services: &Services) -> anyhow::Result<Vec<LearnSummary>> {
    let domain = cfg.domain()?;
    let gw = gateway(cfg, services)?;
    let cfg_digest = config_digest(cfg);
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let (demos, ds) = load_demos(cfg, seed)?;
        let pcfg = cfg.pipeline(seed);
        let texts = proposals(cfg, domain, &demos, seed, gw.as_ref())?;
        let pool = pool_from_proposals(domain, &demos, &texts, &pcfg);
        let lab = labeler(cfg, domain, &pool.goal, seed, gw.as_ref());
        let run = learn_with(domain, demos, pool, lab.as_ref(), &pcfg)?;

        let dataset_digest = digest(&ds);
        let mut artifact = ModelArtifact::from_model(domain.name(), &run.model, &run.learned);
        artifact.trace = Some(run.selection.trace.clone());
        artifact.provenance = Provenance {
            config_digest: cfg_digest.clone(),
            dataset_digest: dataset_digest.clone(),
        };
        let listing = Listing::from_model(&run.learned, &run.model.operators).render();
        let pddl = emit_domain(&Domain {
            name: domain.name().to_string(),
            types: run.model.types.clone(),
            predicates: run.model.predicates.clone(),
            operators: run.model.operators.clone(),
        });
        let report = LearnReport {
            schema_version: SCHEMA_VERSION,
            domain: domain.name().to_string(),
            seed,
            config_digest: cfg_digest.clone(),
            dataset_digest,
            labeler: lab.identity(),
            demos: run.demos.len(),
            pool: run.pool.predicates.iter().map(|p| p.name.clone()).collect(),
            selected: run.selection.selected.iter().map(|p| p.name.clone()).collect(),
            learned: run.learned.iter().map(|p| p.name.clone()).collect(),
            operators: run.model.operators.len(),
            pruned_operators: run.selection.evaluation.learned.pruned.len(),
            trace: run.selection.trace.clone(),
        };
        let dir = cfg.output_dir.join(format!("seed{seed}"));
        write(&dir.join("model.json"), &artifact.to_json())?;
        write(&dir.join("domain.pddl"), &pddl)?;
        write(&dir.join("listing.txt"), &listing)?;
        write(&dir.join("trace.json"), &pretty(&report))?;
        out.push(LearnSummary {
            seed,
            dir,
            report,
            model: run.model,
            listing,
        });
    }
    Ok(out)
}

pub fn load_model(path: &Path) -> anyhow::Result<(ModelArtifact, Model)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let artifact = ModelArtifact::from_json(&text).with_context(|| format!("model {}", path.display()))?;
    let model = artifact.to_model().with_context(|| format!("model {}", path.display()))?;
    Ok((artifact, model))
}

/// A model file, or a `learn` output directory holding `seed<N>/model.json`.
pub fn model_path(model: &Path, seed: u64) -> PathBuf {
    if model.is_dir() {
        model.join(format!("seed{seed}")).join("model.json")
    } else {
        model.to_path_buf()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub seed: u64,
    pub task: usize,
    pub outcome: String,
    pub success: bool,
    pub plan_length: usize,
    pub nodes_created: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub seed: u64,
    pub tasks: usize,
    pub successes: usize,
    pub success_rate: f64,
}

/// Which model a seed was evaluated with, and what it was learned from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub model_digest: String,
    pub config_digest: String,
    pub dataset_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub domain: String,
    pub config_digest: String,
    pub models: BTreeMap<u64, ModelRef>,
    pub seeds: Vec<SeedAggregate>,
    pub mean_success_rate: f64,
    /// Population standard deviation of the per-seed rates.
    pub std_success_rate: f64,
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    pub report: EvalReport,
    pub text: String,
}

fn outcome_name(o: &symwm_core::execute::Outcome) -> String {
    use symwm_core::execute::Outcome;
    match o {
        Outcome::Success => "success".into(),
        Outcome::PlanFailure { .. } => "plan_failure".into(),
        Outcome::ExecutionDivergence { .. } => "execution_divergence".into(),
    }
}

/// Aggregates and a human-readable table for evaluated rows.
pub fn summarize(domain: &str, config_digest: String, rows: Vec<EvalRow>, models: BTreeMap<u64, ModelRef>) -> EvalSummary {
    let mut by_seed: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for r in &rows {
        let e = by_seed.entry(r.seed).or_default();
        e.0 += 1;
        e.1 += usize::from(r.success);
    }
    let seeds: Vec<SeedAggregate> = by_seed
        .into_iter()
        .map(|(seed, (tasks, successes))| SeedAggregate {
            seed,
            tasks,
            successes,
            success_rate: if tasks == 0 { 0.0 } else { successes as f64 / tasks as f64 },
        })
        .collect();
    let n = seeds.len().max(1) as f64;
    let mean = seeds.iter().map(|s| s.success_rate).sum::<f64>() / n;
    let std = (seeds.iter().map(|s| (s.success_rate - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut text = format!("{domain}: success rate {:.1}% ± {:.1}% over {} seeds\n", 100.0 * mean, 100.0 * std, seeds.len());
    text.push_str("seed  solved  rate\n");
    for s in &seeds {
        writeln!(text, "{:<5} {:>3}/{:<3} {:>5.1}%", s.seed, s.successes, s.tasks, 100.0 * s.success_rate).unwrap();
    }
    let report = EvalReport {
        schema_version: SCHEMA_VERSION,
        domain: domain.to_string(),
        config_digest,
        models,
        seeds,
        mean_success_rate: mean,
        std_success_rate: std,
    };
    EvalSummary { rows, report, text }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
    write(path, &String::from_utf8(bytes)?)
}

pub fn cmd_eval(cfg: &RunConfig, model: &Path) -> anyhow::Result<EvalSummary> {
    let domain = cfg.domain()?;
    let mut rows = Vec::new();
    let mut models = BTreeMap::new();
    for &seed in &cfg.seeds {
        let path = model_path(model, seed);
        let (artifact, m) = load_model(&path)?;
        ensure!(
            artifact.domain == domain.name(),
            "{} holds a {} model, config says {}",
            path.display(),
            artifact.domain,
            domain
        );
        let tasks = domain.generate_tasks(cfg.n_tasks, seed)?;
        let reports = evaluate_tasks(domain, &m, &tasks, &cfg.exec, seed)?;
        for (i, r) in reports.iter().enumerate() {
            rows.push(EvalRow {
                seed,
                task: i,
                outcome: outcome_name(&r.outcome),
                success: r.success(),
                plan_length: r.plan_length,
                nodes_created: r.nodes_created,
            });
        }
        models.insert(
            seed,
            ModelRef {
                model_digest: digest(&artifact),
                config_digest: artifact.provenance.config_digest.clone(),
                dataset_digest: artifact.provenance.dataset_digest.clone(),
            },
        );
    }
    let summary = summarize(domain.name(), config_digest(cfg), rows, models);
    write_csv(&cfg.output_dir.join("eval.csv"), &summary.rows)?;
    write_csv(&cfg.output_dir.join("eval_seeds.csv"), &summary.report.seeds)?;
    write(&cfg.output_dir.join("eval_report.json"), &pretty(&summary.report))?;
    write(&cfg.output_dir.join("eval_summary.txt"), &summary.text)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    pub steps: Vec<String>,
    pub nodes_created: usize,
    pub problem_path: PathBuf,
}

/// Plans test task `task` of `seed` with the model, without executing it.
pub fn cmd_plan(cfg: &RunConfig, model: &Path, seed: u64, task: usize) -> anyhow::Result<PlanOutput> {
    let domain = cfg.domain()?;
    let (_, m) = load_model(&model_path(model, seed))?;
    let tasks = domain.generate_tasks(task + 1, seed)?;
    let t = &tasks[task].task;
    let init = abstract_state(&t.init, &m.predicates, &t.objects, &m.types, &domain.labeler())?;
    let problem = emit_problem(&format!("seed{seed}-task{task}"), domain.name(), &t.objects, &init.atoms, &t.goal);
    let problem_path = cfg.output_dir.join(format!("problem_seed{seed}_task{task}.pddl"));
    write(&problem_path, &problem)?;
    let ground = ground_all(&m.operators, &t.objects, &m.types, Some(&init));
    let p = plan(&init, &t.goal, &ground, cfg.exec.node_budget)?;
    Ok(PlanOutput {
        steps: p.steps.iter().map(|s| s.to_string()).collect(),
        nodes_created: p.stats.nodes_created,
        problem_path,
    })
}

/// Proposal results for a dataset, loadable as a candidate pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolFile {
    pub schema_version: u32,
    pub domain: String,
    pub dataset_digest: String,
    pub responses: Vec<String>,
    pub predicates: Vec<Predicate>,
    pub initial: Vec<String>,
    pub goal: Vec<String>,
}

impl PoolFile {
    pub fn to_pool(&self) -> Pool {
        let preds: Vec<Pred> = self.predicates.iter().cloned().map(Arc::new).collect();
        let pick = |names: &[String]| preds.iter().filter(|p| names.contains(&p.name)).cloned().collect();
        Pool {
            initial: pick(&self.initial),
            goal: pick(&self.goal),
            predicates: preds,
        }
    }
}

pub fn load_pool(path: &Path) -> anyhow::Result<Pool> {
    let text = fs::read_to_string(path).with_context(|| format!("reading pool {}", path.display()))?;
    let f: PoolFile = serde_json::from_str(&text).with_context(|| format!("pool {}", path.display()))?;
    ensure!(f.schema_version == SCHEMA_VERSION, "pool {}: unsupported schema_version {}", path.display(), f.schema_version);
    Ok(f.to_pool())
}

#[derive(Debug, Clone)]
pub struct ProposeSummary {
    pub path: PathBuf,
    pub pool: Pool,
    pub gateway_requests: usize,
}

/// Proposes predicates for the first seed's dataset.
pub fn cmd_propose(cfg: &RunConfig, services: &Services) -> anyhow::Result<ProposeSummary> {
    let domain = cfg.domain()?;
    let gw = gateway(cfg, services)?;
    let seed = cfg.seeds[0];
    let (demos, ds) = load_demos(cfg, seed)?;
    let responses = proposals(cfg, domain, &demos, seed, gw.as_ref())?;
    let pool = pool_from_proposals(domain, &demos, &responses, &cfg.pipeline(seed));
    let file = PoolFile {
        schema_version: SCHEMA_VERSION,
        domain: domain.name().to_string(),
        dataset_digest: digest(&ds),
        responses,
        predicates: pool.predicates.iter().map(|p| (**p).clone()).collect(),
        initial: pool.initial.iter().map(|p| p.name.clone()).collect(),
        goal: pool.goal.iter().map(|p| p.name.clone()).collect(),
    };
    let path = cfg.output_dir.join("pool.json");
    write(&path, &pretty(&file))?;
    Ok(ProposeSummary {
        path,
        pool,
        gateway_requests: gw.map_or(0, |g| g.network_calls()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub schema_version: u32,
    pub domain: String,
    pub labeler: String,
    pub dataset_digest: String,
    pub predicates: Vec<String>,
    /// `demos[d][t]` maps every grounded atom to its label at step `t`.
    pub demos: Vec<Vec<BTreeMap<String, Label>>>,
}

#[derive(Debug, Clone)]
pub struct LabelSummary {
    pub path: PathBuf,
    pub file: LabelsFile,
    pub gateway_requests: usize,
}

/// Labels every state of the first seed's dataset over the pool's
/// predicates (or, without a pool, the domain's given and goal predicates).
pub fn cmd_label(cfg: &RunConfig, pool: Option<&Path>, services: &Services) -> anyhow::Result<LabelSummary> {
    let domain = cfg.domain()?;
    let gw = gateway(cfg, services)?;
    let seed = cfg.seeds[0];
    let (demos, ds) = load_demos(cfg, seed)?;
    let (predicates, goal): (Vec<Pred>, BTreeSet<Pred>) = match pool {
        Some(p) => {
            let pool = load_pool(p)?;
            (pool.predicates.clone(), pool.goal)
        }
        None => {
            let goal = goal_predicates(&demos);
            let mut preds = goal.clone();
            preds.extend(domain.initial_predicates().into_iter().filter(|p| !goal.contains(p)));
            (preds, goal.into_iter().collect())
        }
    };
    if predicates.is_empty() {
        bail!("nothing to label: no predicates");
    }
    let lab = labeler(cfg, domain, &goal, seed, gw.as_ref());
    let types = domain.types();
    let mut out = Vec::new();
    for d in &demos {
        let states = label_demo(d, &predicates, &types, lab.as_ref())?;
        out.push(
            states
                .into_iter()
                .map(|m| m.into_iter().map(|(a, l)| (a.to_string(), l)).collect())
                .collect(),
        );
    }
    let file = LabelsFile {
        schema_version: SCHEMA_VERSION,
        domain: domain.name().to_string(),
        labeler: lab.identity(),
        dataset_digest: digest(&ds),
        predicates: predicates.iter().map(|p| p.name.clone()).collect(),
        demos: out,
    };
    let path = cfg.output_dir.join("labels.json");
    write(&path, &pretty(&file))?;
    Ok(LabelSummary {
        path,
        file,
        gateway_requests: gw.map_or(0, |g| g.network_calls()),
    })
}

/// Markdown digest of whatever `learn` and `eval` left in `dir`.
pub fn cmd_report(dir: &Path) -> anyhow::Result<String> {
    let mut learn: Vec<LearnReport> = Vec::new();
    if dir.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for e in entries {
            let trace = e.join("trace.json");
            if trace.is_file() {
                let text = fs::read_to_string(&trace)?;
                learn.push(serde_json::from_str(&text).with_context(|| format!("reading {}", trace.display()))?);
            }
        }
    }
    learn.sort_by_key(|r| r.seed);
    let eval: Option<EvalReport> = match fs::read_to_string(dir.join("eval_report.json")) {
        Ok(t) => Some(serde_json::from_str(&t).context("reading eval_report.json")?),
        Err(_) => None,
    };
    ensure!(!learn.is_empty() || eval.is_some(), "no learn or eval outputs in {}", dir.display());
    let mut md = String::from("# symwm report\n\n");
    if !learn.is_empty() {
        md.push_str("## Learning\n\n| seed | demos | pool | selected | operators | pruned | final J | config | dataset |\n|---|---|---|---|---|---|---|---|---|\n");
        for r in &learn {
            writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                r.seed,
                r.demos,
                r.pool.len(),
                r.selected.len(),
                r.operators,
                r.pruned_operators,
                r.trace.final_j,
                &r.config_digest[..12.min(r.config_digest.len())],
                &r.dataset_digest[..12.min(r.dataset_digest.len())],
            )
            .unwrap();
        }
        md.push('\n');
    }
    if let Some(e) = &eval {
        writeln!(
            md,
            "## Evaluation\n\nMean success rate {:.1}% (std {:.1}%), config {}.\n\n| seed | solved | tasks | rate |\n|---|---|---|---|",
            100.0 * e.mean_success_rate,
            100.0 * e.std_success_rate,
            &e.config_digest[..12.min(e.config_digest.len())]
        )
        .unwrap();
        for s in &e.seeds {
            writeln!(md, "| {} | {} | {} | {:.1}% |", s.seed, s.successes, s.tasks, 100.0 * s.success_rate).unwrap();
        }
    }
    write(&dir.join("report.md"), &md)?;
    Ok(md)
}
