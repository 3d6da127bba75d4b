//! Versioned JSON forms of datasets and learned models.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atoms::{GroundAtom, LiftedAtom, Pred, Predicate};
use crate::execute::Model;
use crate::operator::{Demonstration, Operator};
use crate::sampler::OperatorSampler;
use crate::selection::SelectionTrace;
use crate::types::{Action, Obj, ObjectRef, ObjectState, Skill, State, TypeHierarchy, Variable};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("{0}")]
    Invalid(String),
}

impl From<serde_json::Error> for ArtifactError {
    fn from(e: serde_json::Error) -> Self {
        ArtifactError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

fn unknown(kind: &'static str, name: &str) -> ArtifactError {
    ArtifactError::Unknown {
        kind,
        name: name.to_string(),
    }
}

/// Hex SHA-256 of a serializable value's compact JSON.
pub fn digest<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("serializable")))
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn check_version(text: &str) -> Result<(), ArtifactError> {
    #[derive(Deserialize)]
    struct Probe {
        schema_version: u32,
    }
    let p: Probe = serde_json::from_str(text)?;
    if p.schema_version != SCHEMA_VERSION {
        return Err(ArtifactError::SchemaVersion {
            found: p.schema_version,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub predicate: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub features: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hidden: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub skill: String,
    pub args: Vec<String>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: StateRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub objects: Vec<String>,
    pub goal: Vec<AtomRecord>,
    pub steps: Vec<StepRecord>,
}

/// Demonstrations plus everything needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetArtifact {
    pub schema_version: u32,
    pub domain: String,
    pub types: TypeHierarchy,
    pub objects: Vec<ObjectRef>,
    pub skills: Vec<Skill>,
    /// Predicates the goals are stated in.
    pub predicates: Vec<Predicate>,
    pub demos: Vec<DemoRecord>,
}

fn state_record(s: &State) -> StateRecord {
    StateRecord {
        features: s.objects.iter().map(|(o, f)| (o.name.clone(), f.clone())).collect(),
        images: s.images.clone(),
        hidden: s.hidden.clone(),
    }
}

fn ground_record(a: &GroundAtom) -> AtomRecord {
    AtomRecord {
        predicate: a.predicate.name.clone(),
        args: a.args.iter().map(|o| o.name.clone()).collect(),
    }
}

/// Looks a predicate up by name and argument types.
fn find_pred<'a>(preds: &'a [Pred], name: &str, types: &[&str]) -> Option<&'a Pred> {
    preds
        .iter()
        .find(|p| p.name == name && p.arg_types.len() == types.len() && p.arg_types.iter().zip(types).all(|(a, b)| a == b))
}

impl DatasetArtifact {
    pub fn from_demos(
        domain: &str,
        types: &TypeHierarchy,
        predicates: &[Pred],
        demos: &[Demonstration],
    ) -> Self {
        let mut objects: BTreeMap<String, ObjectRef> = BTreeMap::new();
        let mut skills: BTreeMap<String, Skill> = BTreeMap::new();
        for d in demos {
            for o in &d.objects {
                objects.entry(o.name.clone()).or_insert_with(|| (**o).clone());
            }
            for a in &d.actions {
                skills.entry(a.skill.name.clone()).or_insert_with(|| (*a.skill).clone());
            }
        }
        DatasetArtifact {
            schema_version: SCHEMA_VERSION,
            domain: domain.to_string(),
            types: types.clone(),
            objects: objects.into_values().collect(),
            skills: skills.into_values().collect(),
            predicates: predicates.iter().map(|p| (**p).clone()).collect(),
            demos: demos
                .iter()
                .map(|d| DemoRecord {
                    objects: d.objects.iter().map(|o| o.name.clone()).collect(),
                    goal: d.goal.iter().map(ground_record).collect(),
                    steps: d
                        .states
                        .iter()
                        .enumerate()
                        .map(|(i, s)| StepRecord {
                            state: state_record(s),
                            action: d.actions.get(i).map(|a| ActionRecord {
                                skill: a.skill.name.clone(),
                                args: a.objects.iter().map(|o| o.name.clone()).collect(),
                                theta: a.theta.clone(),
                            }),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn predicates(&self) -> Vec<Pred> {
        self.predicates.iter().cloned().map(Arc::new).collect()
    }

    pub fn demos(&self) -> Result<Vec<Demonstration>, ArtifactError> {
        let objects: HashMap<&str, Obj> = self
            .objects
            .iter()
            .map(|o| (o.name.as_str(), Arc::new(o.clone())))
            .collect();
        let obj = |n: &str| objects.get(n).cloned().ok_or_else(|| unknown("object", n));
        let skills: HashMap<&str, Arc<Skill>> =
            self.skills.iter().map(|s| (s.name.as_str(), Arc::new(s.clone()))).collect();
        let preds = self.predicates();
        let mut out = Vec::new();
        for (di, d) in self.demos.iter().enumerate() {
            let demo_objects = d.objects.iter().map(|n| obj(n)).collect::<Result<Vec<_>, _>>()?;
            let mut states = Vec::new();
            let mut actions = Vec::new();
            for (t, step) in d.steps.iter().enumerate() {
                let mut os = ObjectState::new();
                for (n, f) in &step.state.features {
                    os.insert(obj(n)?, f.clone());
                }
                states.push(State {
                    images: step.state.images.clone(),
                    objects: os,
                    timestep: t,
                    hidden: step.state.hidden.clone(),
                });
                if let Some(a) = &step.action {
                    let skill = skills.get(a.skill.as_str()).cloned().ok_or_else(|| unknown("skill", &a.skill))?;
                    let objs = a.args.iter().map(|n| obj(n)).collect::<Result<Vec<_>, _>>()?;
                    let action = Action::new(skill, objs, a.theta.clone(), &self.types)
                        .map_err(|e| ArtifactError::Invalid(format!("demo {di} step {t}: {e}")))?;
                    actions.push(action);
                }
            }
            if actions.len() + 1 != states.len() {
                return Err(ArtifactError::Invalid(format!(
                    "demo {di}: every step but the last needs an action"
                )));
            }
            let mut goal = BTreeSet::new();
            for g in &d.goal {
                let args = g.args.iter().map(|n| obj(n)).collect::<Result<Vec<_>, _>>()?;
                let tys: Vec<&str> = args.iter().map(|o| o.ty.as_str()).collect();
                let p = preds
                    .iter()
                    .find(|p| {
                        p.name == g.predicate
                            && p.arg_types.len() == tys.len()
                            && p.arg_types.iter().zip(&tys).all(|(a, b)| self.types.is_subtype(b, a))
                    })
                    .ok_or_else(|| unknown("predicate", &g.predicate))?;
                goal.insert(GroundAtom::new_unchecked(p.clone(), args));
            }
            out.push(Demonstration {
                objects: demo_objects,
                states,
                actions,
                goal,
            });
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        to_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        check_version(text)?;
        let d: Self = serde_json::from_str(text)?;
        if d.demos.is_empty() {
            return Err(ArtifactError::Invalid("dataset has no demonstrations".into()));
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub name: String,
    pub params: Vec<Variable>,
    pub preconditions: Vec<AtomRecord>,
    pub add_effects: Vec<AtomRecord>,
    pub delete_effects: Vec<AtomRecord>,
    pub skill: String,
    pub skill_args: Vec<String>,
    pub support_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: String,
    pub dataset_digest: String,
}

/// A self-contained learned model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub domain: String,
    pub types: TypeHierarchy,
    pub skills: Vec<Skill>,
    pub predicates: Vec<Predicate>,
    /// Names of predicates invented during learning (listed in the text form).
    pub learned: Vec<String>,
    pub operators: Vec<OperatorRecord>,
    pub samplers: Vec<OperatorSampler<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<SelectionTrace>,
    pub provenance: Provenance,
}

impl ModelArtifact {
    pub fn from_model(domain: &str, model: &Model, learned: &[Pred]) -> Self {
        let lifted = |v: &[LiftedAtom]| -> Vec<AtomRecord> {
            v.iter()
                .map(|a| AtomRecord {
                    predicate: a.predicate.name.clone(),
                    args: a.args.iter().map(|x| x.name.clone()).collect(),
                })
                .collect()
        };
        let mut skills: BTreeMap<String, Skill> = BTreeMap::new();
        for op in &model.operators {
            skills.entry(op.skill.name.clone()).or_insert_with(|| (*op.skill).clone());
        }
        ModelArtifact {
            schema_version: SCHEMA_VERSION,
            domain: domain.to_string(),
            types: model.types.clone(),
            skills: skills.into_values().collect(),
            predicates: model.predicates.iter().map(|p| (**p).clone()).collect(),
            learned: learned.iter().map(|p| p.name.clone()).collect(),
            operators: model
                .operators
                .iter()
                .map(|op| OperatorRecord {
                    name: op.name.clone(),
                    params: op.params.clone(),
                    preconditions: lifted(&op.preconditions),
                    add_effects: lifted(&op.add_effects),
                    delete_effects: lifted(&op.delete_effects),
                    skill: op.skill.name.clone(),
                    skill_args: op.skill_args.iter().map(|v| v.name.clone()).collect(),
                    support_count: op.support_count,
                })
                .collect(),
            samplers: model.samplers.clone(),
            trace: None,
            provenance: Provenance::default(),
        }
    }

    pub fn learned_predicates(&self) -> Vec<Pred> {
        let preds: Vec<Pred> = self.predicates.iter().cloned().map(Arc::new).collect();
        self.learned
            .iter()
            .filter_map(|n| preds.iter().find(|p| &p.name == n).cloned())
            .collect()
    }

    pub fn to_model(&self) -> Result<Model, ArtifactError> {
        let preds: Vec<Pred> = self.predicates.iter().cloned().map(Arc::new).collect();
        let skills: HashMap<&str, Arc<Skill>> =
            self.skills.iter().map(|s| (s.name.as_str(), Arc::new(s.clone()))).collect();
        let mut operators = Vec::new();
        for r in &self.operators {
            let var = |n: &str| {
                r.params
                    .iter()
                    .find(|v| v.name == n)
                    .cloned()
                    .ok_or_else(|| unknown("variable", n))
            };
            let lift = |v: &[AtomRecord]| -> Result<Vec<LiftedAtom>, ArtifactError> {
                v.iter()
                    .map(|a| {
                        let args = a.args.iter().map(|n| var(n)).collect::<Result<Vec<_>, _>>()?;
                        let tys: Vec<&str> = args.iter().map(|v| v.ty.as_str()).collect();
                        let p = find_pred(&preds, &a.predicate, &tys).ok_or_else(|| unknown("predicate", &a.predicate))?;
                        Ok(LiftedAtom::new(p.clone(), args))
                    })
                    .collect()
            };
            let op = Operator {
                name: r.name.clone(),
                params: r.params.clone(),
                preconditions: lift(&r.preconditions)?,
                add_effects: lift(&r.add_effects)?,
                delete_effects: lift(&r.delete_effects)?,
                ignore_effects: vec![],
                skill: skills.get(r.skill.as_str()).cloned().ok_or_else(|| unknown("skill", &r.skill))?,
                skill_args: r.skill_args.iter().map(|n| var(n)).collect::<Result<_, _>>()?,
                support_count: r.support_count,
            };
            op.check().map_err(|e| ArtifactError::Invalid(e.to_string()))?;
            operators.push(op);
        }
        if self.samplers.len() != operators.len() {
            return Err(ArtifactError::Invalid(format!(
                "{} samplers for {} operators",
                self.samplers.len(),
                operators.len()
            )));
        }
        Ok(Model {
            types: self.types.clone(),
            predicates: preds,
            operators,
            samplers: self.samplers.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        to_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        check_version(text)?;
        Ok(serde_json::from_str(text)?)
    }
}
