//! Deterministic simulated domains: the Burger grid world (three task
//! distributions) and KitchenLite, with ground-truth labelers, a mock
//! proposer, scripted demonstrations and test-task generators.

pub mod burger;
pub mod checker;
pub mod kitchen;
pub mod labeler;
pub mod mock;
mod scenarios;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symwm_core::atoms::{GroundAtom, Pred};
use symwm_core::execute::Environment;
use symwm_core::labeling::{LabelContext, Labeler};
use symwm_core::operator::{Demonstration, Task};
use symwm_core::types::{Action, Obj, Skill, State, TypeHierarchy};

pub use checker::SimPlanChecker;
pub use labeler::GroundTruthLabeler;
pub use mock::mock_propose;

/// Hidden key set to 1 when the last skill could not be applied.
pub const FAILED: &str = "failed";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("unknown skill {0}")]
    UnknownSkill(String),
    #[error("unknown domain {0}")]
    UnknownDomain(String),
    #[error("expert script failed at step {step} ({action})")]
    ExpertFailed { step: usize, action: String },
    #[error("expert script did not reach the goal")]
    GoalNotReached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DomainName {
    BiggerBurger,
    MoreStacks,
    ComboBurger,
    Kitchen,
}

/// Hyperparameters used for each domain by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainDefaults {
    pub j_thresh: f64,
    pub h_pre_frac: f64,
    pub h_data_frac: f64,
    pub n_demo: usize,
    /// Whether the feature grammar contributes to the candidate pool.
    pub feature_grammar: bool,
}

impl DomainName {
    pub const ALL: [DomainName; 4] = [
        DomainName::BiggerBurger,
        DomainName::MoreStacks,
        DomainName::ComboBurger,
        DomainName::Kitchen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DomainName::BiggerBurger => "bigger_burger",
            DomainName::MoreStacks => "more_stacks",
            DomainName::ComboBurger => "combo_burger",
            DomainName::Kitchen => "kitchen",
        }
    }

    pub fn is_burger(self) -> bool {
        self != DomainName::Kitchen
    }

    pub fn defaults(self) -> DomainDefaults {
        match self {
            DomainName::Kitchen => DomainDefaults {
                j_thresh: 100.0,
                h_pre_frac: 0.8,
                h_data_frac: 0.05,
                n_demo: 3,
                feature_grammar: true,
            },
            _ => DomainDefaults {
                j_thresh: 2000.0,
                h_pre_frac: 0.8,
                h_data_frac: 0.05,
                n_demo: 12,
                feature_grammar: false,
            },
        }
    }

    pub fn types(self) -> TypeHierarchy {
        if self.is_burger() {
            burger::types()
        } else {
            kitchen::types()
        }
    }

    pub fn skills(self) -> Vec<Arc<Skill>> {
        if self.is_burger() {
            burger::skills()
        } else {
            kitchen::skills()
        }
    }

    /// Predicates given to the learner up front.
    pub fn initial_predicates(self) -> Vec<Pred> {
        use burger::*;
        let mut base = vec![on(), on_ground(), clear(), holding()];
        match self {
            DomainName::BiggerBurger => {
                base.push(saap("patty", "bottom_bun"));
                base.extend(["cutting_board", "grill", "patty"].map(raap));
            }
            DomainName::MoreStacks => base.push(saap("patty", "bottom_bun")),
            DomainName::ComboBurger => {
                base.push(saap("patty", "bottom_bun"));
                base.push(saap("lettuce", "bottom_bun"));
                base.push(saap("lettuce", "patty"));
            }
            DomainName::Kitchen => return vec![kitchen::kettle_boiling(), kitchen::linked()],
        }
        base
    }

    pub fn labeler(self) -> GroundTruthLabeler {
        GroundTruthLabeler::new(self)
    }

    pub fn step(self, state: &State, action: &Action) -> Result<State, SimError> {
        if self.is_burger() {
            burger::step(state, action)
        } else {
            kitchen::step(state, action)
        }
    }

    /// Noise-free expert parameters for `skill` on `objects` in `state`.
    pub fn expert_theta(self, state: &State, skill: &Skill, objects: &[Obj]) -> Vec<f64> {
        kitchen::expert_theta::<ChaCha8Rng>(state, skill, objects, None)
    }

    /// `n` training demonstrations in the domain's composition.
    pub fn generate_demos(self, n: usize, seed: u64) -> Result<Vec<Demonstration>, SimError> {
        (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, i as u64));
                let ep = scenarios::train(self, i, n, &mut rng);
                run_expert(self, &ep, Some(&mut rng)).map(|(demo, _)| demo)
            })
            .collect()
    }

    /// One test task; the seed's parity picks the variant.
    pub fn test_task(self, seed: u64) -> Result<GeneratedTask, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, u64::MAX));
        let ep = scenarios::test(self, seed, &mut rng);
        let (demo, witness) = run_expert(self, &ep, None)?;
        Ok(GeneratedTask {
            task: Task {
                objects: demo.objects,
                init: demo.states[0].clone(),
                goal: demo.goal,
            },
            witness,
        })
    }

    /// `n` test tasks, alternating between the two variants.
    pub fn generate_tasks(self, n: usize, seed: u64) -> Result<Vec<GeneratedTask>, SimError> {
        (0..n as u64).map(|i| self.test_task(seed * 1000 + i)).collect()
    }
}

impl fmt::Display for DomainName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainName {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DomainName::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| SimError::UnknownDomain(s.to_string()))
    }
}

fn mix(seed: u64, i: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ i.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ 0x5EED
}

/// A scripted episode before execution.
#[derive(Debug, Clone)]
pub struct Episode {
    pub objects: Vec<Obj>,
    pub init: State,
    pub goal: BTreeSet<GroundAtom>,
    pub script: Vec<(Arc<Skill>, Vec<String>)>,
}

/// A test task with an expert action sequence that solves it.
#[derive(Debug, Clone)]
pub struct GeneratedTask {
    pub task: Task,
    pub witness: Vec<Action>,
}

/// Ground-truth goal test.
pub fn goal_holds(domain: DomainName, state: &State, goal: &BTreeSet<GroundAtom>) -> bool {
    let atoms: Vec<GroundAtom> = goal.iter().cloned().collect();
    match domain.labeler().label_batch(state, &atoms, &LabelContext::initial()) {
        Ok(b) => b.labels.values().all(|l| l.holds()),
        Err(_) => false,
    }
}

/// Executes a script, checking every step and the goal.
pub fn run_expert(
    domain: DomainName,
    ep: &Episode,
    mut noise: Option<&mut ChaCha8Rng>,
) -> Result<(Demonstration, Vec<Action>), SimError> {
    let types = domain.types();
    let mut states = vec![ep.init.clone()];
    let mut actions = Vec::new();
    for (i, (skill, names)) in ep.script.iter().enumerate() {
        let objs: Vec<Obj> = names.iter().map(|n| burger::find(&ep.objects, n).clone()).collect();
        let state = states.last().expect("non-empty");
        let theta = kitchen::expert_theta(state, skill, &objs, noise.as_deref_mut());
        let action = Action::new(skill.clone(), objs, theta, &types).expect("well-typed script");
        let next = domain.step(state, &action)?;
        if next.hidden_flag(FAILED) {
            return Err(SimError::ExpertFailed {
                step: i,
                action: action.to_string(),
            });
        }
        states.push(next);
        actions.push(action);
    }
    if !goal_holds(domain, states.last().expect("non-empty"), &ep.goal) {
        return Err(SimError::GoalNotReached);
    }
    let demo = Demonstration {
        objects: ep.objects.clone(),
        states,
        actions: actions.clone(),
        goal: ep.goal.clone(),
    };
    Ok((demo, actions))
}

/// Which task family to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskDistributionSpec {
    pub domain: DomainName,
    pub split: Split,
}

/// A fresh environment on a task drawn from `spec`.
pub fn reset(spec: TaskDistributionSpec, seed: u64) -> Result<(GeneratedTask, SimEnv), SimError> {
    let task = match spec.split {
        Split::Test => spec.domain.test_task(seed)?,
        Split::Train => {
            let demo = spec.domain.generate_demos(1, seed)?.remove(0);
            GeneratedTask {
                witness: demo.actions.clone(),
                task: Task {
                    objects: demo.objects,
                    init: demo.states[0].clone(),
                    goal: demo.goal,
                },
            }
        }
    };
    let env = SimEnv::new(spec.domain, task.task.init.clone());
    Ok((task, env))
}

/// Owned simulator instance for closed-loop execution.
#[derive(Debug, Clone)]
pub struct SimEnv {
    pub domain: DomainName,
    pub state: State,
}

impl SimEnv {
    pub fn new(domain: DomainName, state: State) -> Self {
        Self { domain, state }
    }
}

impl Environment for SimEnv {
    fn reset(&mut self, task: &Task) -> State {
        self.state = task.init.clone();
        self.state.clone()
    }

    fn step(&mut self, action: &Action) -> State {
        self.state = match self.domain.step(&self.state, action) {
            Ok(s) => s,
            Err(_) => {
                let mut s = self.state.clone();
                s.timestep += 1;
                s.hidden.insert(FAILED.into(), 1.0);
                s
            }
        };
        self.state.clone()
    }

    fn goal_reached(&self, state: &State, goal: &BTreeSet<GroundAtom>) -> bool {
        goal_holds(self.domain, state, goal)
    }
}
