//! Lifted operators, demonstrations and tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::atoms::{GroundAtom, LiftedAtom};
use crate::types::{Action, Obj, Skill, State, Variable};

/// Lifted STRIPS operator linked to a skill.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub name: String,
    pub params: Vec<Variable>,
    pub preconditions: Vec<LiftedAtom>,
    pub add_effects: Vec<LiftedAtom>,
    pub delete_effects: Vec<LiftedAtom>,
    /// Carried for listing fidelity only; always empty for learned operators.
    pub ignore_effects: Vec<LiftedAtom>,
    pub skill: Arc<Skill>,
    pub skill_args: Vec<Variable>,
    pub support_count: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OperatorError {
    #[error("operator {op}: variable {var} is not a parameter")]
    UnboundVariable { op: String, var: String },
    #[error("operator {op}: {atom} is both added and deleted")]
    AddDeleteOverlap { op: String, atom: String },
    #[error("operator {op}: skill {skill} takes {expected} arguments, got {got}")]
    SkillArity {
        op: String,
        skill: String,
        expected: usize,
        got: usize,
    },
}

impl Operator {
    pub fn check(&self) -> Result<(), OperatorError> {
        let params: BTreeSet<&Variable> = self.params.iter().collect();
        let atoms = self
            .preconditions
            .iter()
            .chain(&self.add_effects)
            .chain(&self.delete_effects);
        for v in atoms.flat_map(|a| &a.args).chain(&self.skill_args) {
            if !params.contains(v) {
                return Err(OperatorError::UnboundVariable {
                    op: self.name.clone(),
                    var: v.to_string(),
                });
            }
        }
        let adds: BTreeSet<&LiftedAtom> = self.add_effects.iter().collect();
        if let Some(a) = self.delete_effects.iter().find(|a| adds.contains(a)) {
            return Err(OperatorError::AddDeleteOverlap {
                op: self.name.clone(),
                atom: a.to_string(),
            });
        }
        if !self.skill.params.is_empty() && self.skill.params.len() != self.skill_args.len() {
            return Err(OperatorError::SkillArity {
                op: self.name.clone(),
                skill: self.skill.name.clone(),
                expected: self.skill.params.len(),
                got: self.skill_args.len(),
            });
        }
        Ok(())
    }

    /// |P| + |E+| + |E-|.
    pub fn size(&self) -> usize {
        self.preconditions.len() + self.add_effects.len() + self.delete_effects.len()
    }

    /// Grounds this operator under a binding aligned with `params`.
    pub fn ground(&self, index: usize, binding: &[Obj]) -> GroundOperator {
        let map: BTreeMap<&str, &Obj> = self
            .params
            .iter()
            .map(|v| v.name.as_str())
            .zip(binding)
            .collect();
        let g = |atoms: &[LiftedAtom]| -> Vec<GroundAtom> {
            atoms
                .iter()
                .map(|a| a.ground_with(&|v: &Variable| map[v.name.as_str()].clone()))
                .collect()
        };
        GroundOperator {
            op_index: index,
            name: self.name.clone(),
            binding: binding.to_vec(),
            preconditions: g(&self.preconditions),
            add_effects: g(&self.add_effects),
            delete_effects: g(&self.delete_effects),
            skill: self.skill.clone(),
            skill_objects: self
                .skill_args
                .iter()
                .map(|v| map[v.name.as_str()].clone())
                .collect(),
        }
    }
}

/// An operator with its parameters bound to objects.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundOperator {
    pub op_index: usize,
    pub name: String,
    pub binding: Vec<Obj>,
    pub preconditions: Vec<GroundAtom>,
    pub add_effects: Vec<GroundAtom>,
    pub delete_effects: Vec<GroundAtom>,
    pub skill: Arc<Skill>,
    pub skill_objects: Vec<Obj>,
}

impl fmt::Display for GroundOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, o) in self.binding.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(&o.name)?;
        }
        write!(f, ") -> {}[", self.skill.name)?;
        for (i, o) in self.skill_objects.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}:{}", o.name, o.ty)?;
        }
        f.write_str("]")
    }
}

/// Skill-segmented trajectory `s0, a0, s1, ..., sk` with a conjunctive goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub objects: Vec<Obj>,
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub goal: BTreeSet<GroundAtom>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_well_formed(&self) -> bool {
        let objs: BTreeSet<&Obj> = self.objects.iter().collect();
        self.states.len() == self.actions.len() + 1
            && self
                .actions
                .iter()
                .all(|a| a.objects.iter().all(|o| objs.contains(o)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub objects: Vec<Obj>,
    pub init: State,
    pub goal: BTreeSet<GroundAtom>,
}
