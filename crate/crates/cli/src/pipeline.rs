//! End-to-end learning and evaluation on the simulated domains.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use symwm_core::atoms::Pred;
use symwm_core::execute::{plan_and_execute, ExecConfig, ExecutionReport, Model};
use symwm_core::labeling::{make_noisy, AbstractionStore, Labeler};
use symwm_core::learning::{abstract_demos, match_transitions};
use symwm_core::listing::Listing;
use symwm_core::operator::Demonstration;
use symwm_core::proposal::{
    assemble_pool, generate_feature_grammar, lift_and_dedup, parse_proposals, FeatureGrammarConfig, Pool,
};
use symwm_core::sampler::learn_samplers;
use symwm_core::selection::{hill_climb, SelectionConfig, SelectionResult};
use symwm_core::SamplerConfig;
use symwm_sim::{mock_propose, DomainName, GeneratedTask, SimEnv, SimPlanChecker};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub flip_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    pub k_synonyms: usize,
    pub k_antonyms: usize,
    pub junk: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            k_synonyms: 2,
            k_antonyms: 2,
            junk: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_demo: usize,
    pub seed: u64,
    pub proposal: ProposalConfig,
    pub feature_grammar: bool,
    pub selection: SelectionConfig,
    pub noise: Option<NoiseConfig>,
    pub sampler: SamplerConfig,
}

impl PipelineConfig {
    /// Domain defaults for the given seed.
    pub fn for_domain(domain: DomainName, seed: u64) -> Self {
        let d = domain.defaults();
        let mut selection = SelectionConfig::default();
        selection.j_thresh = d.j_thresh;
        selection.learn.h_pre_frac = d.h_pre_frac;
        selection.learn.h_data_frac = d.h_data_frac;
        Self {
            n_demo: d.n_demo,
            seed,
            proposal: ProposalConfig::default(),
            feature_grammar: d.feature_grammar,
            selection,
            noise: None,
            sampler: SamplerConfig::default(),
        }
    }
}

/// Everything a learning run produced.
pub struct LearnRun {
    pub demos: Arc<Vec<Demonstration>>,
    pub pool: Pool,
    pub selection: SelectionResult,
    pub model: Model,
    /// Selected predicates that were not given up front.
    pub learned: Vec<Pred>,
}

/// Predicates named in the demonstrations' goals.
pub fn goal_predicates(demos: &[Demonstration]) -> Vec<Pred> {
    let set: BTreeSet<Pred> = demos.iter().flat_map(|d| d.goal.iter().map(|a| a.predicate.clone())).collect();
    set.into_iter().collect()
}

/// Proposal transcripts from the scripted proposer, one per demonstration.
pub fn mock_proposals(domain: DomainName, demos: &[Demonstration], cfg: &PipelineConfig) -> Vec<String> {
    let p = &cfg.proposal;
    demos
        .iter()
        .enumerate()
        .map(|(i, d)| mock_propose(domain, d, p.k_synonyms, p.k_antonyms, p.junk, cfg.seed ^ i as u64))
        .collect()
}

/// Initial, goal, proposed visual and (optionally) grammar predicates.
/// `proposals[i]` is the proposer's answer for `demos[i]`.
pub fn pool_from_proposals(
    domain: DomainName,
    demos: &[Demonstration],
    proposals: &[String],
    cfg: &PipelineConfig,
) -> Pool {
    let mut atoms = Vec::new();
    for (d, text) in demos.iter().zip(proposals) {
        atoms.extend(parse_proposals(text, &d.objects).accepted);
    }
    let visual = lift_and_dedup(&atoms);
    let feature = if cfg.feature_grammar {
        generate_feature_grammar(demos, &FeatureGrammarConfig::default())
    } else {
        vec![]
    };
    let goal = goal_predicates(demos);
    let init: Vec<Pred> = domain.initial_predicates().into_iter().filter(|p| !goal.contains(p)).collect();
    assemble_pool(&init, &goal, &visual, &feature)
}

pub fn build_pool(domain: DomainName, demos: &[Demonstration], cfg: &PipelineConfig) -> Pool {
    pool_from_proposals(domain, demos, &mock_proposals(domain, demos, cfg), cfg)
}

/// The labeler a run uses: ground truth, optionally with label noise that
/// spares the goal predicates.
pub fn run_labeler(domain: DomainName, pool: &Pool, noise: Option<NoiseConfig>) -> Arc<dyn Labeler> {
    let gt = domain.labeler();
    match noise {
        Some(n) if n.flip_rate > 0.0 => Arc::new(make_noisy(gt, n.flip_rate, n.seed, pool.goal.clone())),
        _ => Arc::new(gt),
    }
}

pub fn learn(domain: DomainName, cfg: &PipelineConfig) -> anyhow::Result<LearnRun> {
    let demos = domain.generate_demos(cfg.n_demo, cfg.seed)?;
    learn_from_demos(domain, demos, cfg)
}

pub fn learn_from_demos(
    domain: DomainName,
    demos: Vec<Demonstration>,
    cfg: &PipelineConfig,
) -> anyhow::Result<LearnRun> {
    let pool = build_pool(domain, &demos, cfg);
    let labeler = run_labeler(domain, &pool, cfg.noise);
    learn_with(domain, demos, pool, labeler.as_ref(), cfg)
}

/// Selection, operator learning and sampler fitting over a prepared pool.
pub fn learn_with(
    domain: DomainName,
    demos: Vec<Demonstration>,
    pool: Pool,
    labeler: &dyn Labeler,
    cfg: &PipelineConfig,
) -> anyhow::Result<LearnRun> {
    anyhow::ensure!(!demos.is_empty(), "no demonstrations to learn from");
    let demos = Arc::new(demos);
    let types = domain.types();
    let store = AbstractionStore::new(demos.clone(), types.clone());
    let checker = SimPlanChecker::new(domain, demos.clone());
    let selection = hill_climb(&pool, &store, labeler, &checker, &cfg.selection)?;
    let samplers = learn_samplers(
        &selection.evaluation.learned.classes,
        &selection.evaluation.transitions,
        &demos,
        &types,
        &cfg.sampler,
    );
    let learned = selection
        .selected
        .iter()
        .filter(|p| !pool.initial.contains(*p))
        .cloned()
        .collect();
    let model = Model {
        types,
        predicates: selection.selected.clone(),
        operators: selection.evaluation.learned.operators(),
        samplers,
    };
    Ok(LearnRun {
        demos,
        pool,
        selection,
        model,
        learned,
    })
}

/// A runnable model from a text listing: skills are resolved against the
/// domain (by name, or by signature when the listing names them differently)
/// and samplers are fitted on the demonstrations each operator
/// explains.
pub fn model_from_listing(
    domain: DomainName,
    listing: &Listing,
    demos: &[Demonstration],
    sampler: &SamplerConfig,
) -> anyhow::Result<Model> {
    let types = domain.types();
    let skills = domain.skills();
    let mut operators = listing.to_operators();
    for op in &mut operators {
        let arg_types: Vec<&str> = op.skill_args.iter().map(|v| v.ty.as_str()).collect();
        let same_types: Vec<_> = skills
            .iter()
            .filter(|s| s.params.iter().map(|v| v.ty.as_str()).eq(arg_types.iter().copied()))
            .collect();
        // By name, else the only skill with the same signature.
        op.skill = match skills.iter().find(|s| s.name == op.skill.name) {
            Some(s) => s.clone(),
            None if same_types.len() == 1 => same_types[0].clone(),
            None => anyhow::bail!("skill {} does not resolve to a unique {domain} skill", op.skill.name),
        };
    }
    let mut predicates: Vec<Pred> = Vec::new();
    for op in &operators {
        for a in op.preconditions.iter().chain(&op.add_effects).chain(&op.delete_effects) {
            if !predicates.contains(&a.predicate) {
                predicates.push(a.predicate.clone());
            }
        }
    }
    for p in goal_predicates(demos) {
        if !predicates.contains(&p) {
            predicates.push(p);
        }
    }
    let transitions = abstract_demos(demos, &predicates, &types, &domain.labeler())?;
    let classes = match_transitions(&operators, &transitions, demos, &types);
    if let Some(c) = classes.iter().find(|c| c.members.is_empty()) {
        anyhow::bail!("no demonstration step matches {}", c.operator.name);
    }
    let samplers = learn_samplers(&classes, &transitions, demos, &types, sampler);
    Ok(Model {
        types,
        predicates,
        operators,
        samplers,
    })
}

/// Plans and executes every task once with the ground-truth labeler.
pub fn evaluate_tasks(
    domain: DomainName,
    model: &Model,
    tasks: &[GeneratedTask],
    cfg: &ExecConfig,
    seed: u64,
) -> anyhow::Result<Vec<ExecutionReport>> {
    let labeler = domain.labeler();
    tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut env = SimEnv::new(domain, t.task.init.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            Ok(plan_and_execute(&t.task, model, &mut env, &labeler, cfg, &mut rng)?)
        })
        .collect()
}
