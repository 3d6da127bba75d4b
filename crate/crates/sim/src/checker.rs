//! Scores abstract plans by executing their skill sequence in the simulator.

use std::sync::Arc;

use symwm_core::operator::Demonstration;
use symwm_core::planner::AbstractPlan;
use symwm_core::selection::PlanChecker;
use symwm_core::types::Action;

use crate::{goal_holds, DomainName, FAILED};

/// Replays a plan from a demonstration's initial state with expert
/// parameters. A plan that reaches the goal scores 0; otherwise the score
/// falls from 1 towards 0.5 with the fraction of leading steps that ran.
pub struct SimPlanChecker {
    pub domain: DomainName,
    pub demos: Arc<Vec<Demonstration>>,
}

impl SimPlanChecker {
    pub fn new(domain: DomainName, demos: Arc<Vec<Demonstration>>) -> Self {
        Self { domain, demos }
    }
}

impl PlanChecker for SimPlanChecker {
    fn failure_fraction(&self, demo: usize, plan: &AbstractPlan) -> f64 {
        let d = &self.demos[demo];
        let mut state = d.states[0].clone();
        let mut ran = 0;
        for step in &plan.steps {
            let theta = self.domain.expert_theta(&state, &step.skill, &step.skill_objects);
            let action = Action {
                skill: step.skill.clone(),
                objects: step.skill_objects.clone(),
                theta,
            };
            match self.domain.step(&state, &action) {
                Ok(next) if !next.hidden_flag(FAILED) => {
                    state = next;
                    ran += 1;
                }
                _ => break,
            }
        }
        if ran == plan.steps.len() && goal_holds(self.domain, &state, &d.goal) {
            return 0.0;
        }
        let n = plan.steps.len().max(1) as f64;
        1.0 - 0.5 * ran as f64 / n
    }
}
