//! Plan-then-execute: abstract the initial state, plan, then run each skill
//! with sampled continuous parameters.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::atoms::{GroundAtom, Pred};
use crate::labeling::{abstract_state, LabelError, Labeler};
use crate::operator::{Operator, Task};
use crate::planner::{ground_all, plan, PlanFailure};
use crate::sampler::{input_vector, OperatorSampler};
use crate::types::{Action, State, TypeHierarchy};

/// A resettable low-level environment.
pub trait Environment {
    fn reset(&mut self, task: &Task) -> State;
    fn step(&mut self, action: &Action) -> State;
    /// Ground-truth goal test on a low-level state.
    fn goal_reached(&self, state: &State, goal: &BTreeSet<GroundAtom>) -> bool;
}

/// Predicates, operators and one sampler per operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub types: TypeHierarchy,
    pub predicates: Vec<Pred>,
    pub operators: Vec<Operator>,
    pub samplers: Vec<OperatorSampler<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    pub node_budget: usize,
    /// Replan from the observed state when it departs from the plan's
    /// expectation, at most this many times. Zero keeps execution open-loop.
    pub max_replans: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            node_budget: 10_000,
            max_replans: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    PlanFailure { reason: String },
    /// The goal was not reached; `step` is the first step whose observed
    /// abstract state differed from the plan's expectation, if any.
    ExecutionDivergence { step: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub outcome: Outcome,
    pub plan_length: usize,
    pub nodes_created: usize,
    pub actions: Vec<String>,
    pub divergences: Vec<usize>,
}

impl ExecutionReport {
    pub fn success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

pub fn plan_and_execute<E: Environment, R: Rng + ?Sized>(
    task: &Task,
    model: &Model,
    env: &mut E,
    labeler: &dyn Labeler,
    cfg: &ExecConfig,
    rng: &mut R,
) -> Result<ExecutionReport, LabelError> {
    let mut state = env.reset(task);
    let mut report = ExecutionReport {
        outcome: Outcome::PlanFailure {
            reason: String::new(),
        },
        plan_length: 0,
        nodes_created: 0,
        actions: vec![],
        divergences: vec![],
    };
    let mut replans = 0;
    let mut abs = abstract_state(&state, &model.predicates, &task.objects, &model.types, labeler)?;
    'outer: loop {
        let ground = ground_all(&model.operators, &task.objects, &model.types, Some(&abs));
        let p = match plan(&abs, &task.goal, &ground, cfg.node_budget) {
            Ok(p) => p,
            Err(e) => {
                report.nodes_created += e.stats().nodes_created;
                report.outcome = Outcome::PlanFailure {
                    reason: match e {
                        PlanFailure::BudgetExhausted { .. } => "budget_exhausted".into(),
                        PlanFailure::ProvenUnreachable { .. } => "proven_unreachable".into(),
                    },
                };
                return Ok(report);
            }
        };
        report.nodes_created += p.stats.nodes_created;
        report.plan_length += p.steps.len();
        for (i, op) in p.steps.iter().enumerate() {
            let sampler = &model.samplers[op.op_index];
            let theta = if op.skill.continuous_dim == 0 {
                vec![]
            } else {
                match sampler.sample(&input_vector(&state, &op.binding), rng) {
                    Ok(t) => t,
                    Err(e) => {
                        report.outcome = Outcome::PlanFailure {
                            reason: format!("step {}: {e}", report.actions.len()),
                        };
                        return Ok(report);
                    }
                }
            };
            let action = Action {
                skill: op.skill.clone(),
                objects: op.skill_objects.clone(),
                theta,
            };
            report.actions.push(action.to_string());
            state = env.step(&action);
            abs = abstract_state(&state, &model.predicates, &task.objects, &model.types, labeler)?;
            if abs != p.states[i + 1] {
                report.divergences.push(report.actions.len() - 1);
                if replans < cfg.max_replans {
                    replans += 1;
                    continue 'outer;
                }
            }
        }
        break;
    }
    report.outcome = if env.goal_reached(&state, &task.goal) {
        Outcome::Success
    } else {
        Outcome::ExecutionDivergence {
            step: report.divergences.first().copied(),
        }
    };
    Ok(report)
}
