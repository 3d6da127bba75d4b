//! Human-readable learned-model listings: a "Learned predicates" block
//! followed by "Learned operators". Parsing then emitting is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::atoms::{FeatureClassifier, LiftedAtom, Pred, Predicate, PredicateKind};
use crate::operator::Operator;
use crate::types::{Skill, Variable};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListedPredicate {
    pub name: String,
    /// Absent when the listing shows a bare name.
    pub params: Option<Vec<Variable>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListedAtom {
    pub predicate: String,
    pub args: Vec<Variable>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListedOperator {
    pub name: String,
    pub params: Vec<Variable>,
    pub preconditions: Vec<ListedAtom>,
    pub add_effects: Vec<ListedAtom>,
    pub delete_effects: Vec<ListedAtom>,
    pub ignore_effects: Vec<ListedAtom>,
    pub skill: String,
    pub skill_args: Vec<Variable>,
    pub blank_lines_after: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Listing {
    pub predicates_header: String,
    pub predicates: Vec<ListedPredicate>,
    pub operators: Vec<ListedOperator>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("listing line {line}: {message}")]
pub struct ListingError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ListingError {
    ListingError {
        line: line + 1,
        message: message.into(),
    }
}

fn parse_variable(s: &str) -> Option<Variable> {
    let (name, ty) = s.split_once(':')?;
    if !name.starts_with('?') || ty.is_empty() {
        return None;
    }
    Some(Variable::new(name, ty))
}

fn parse_variables(s: &str) -> Option<Vec<Variable>> {
    if s.is_empty() {
        return Some(vec![]);
    }
    s.split(", ").map(parse_variable).collect()
}

/// `name(?a:t, ?b:u)`, where the name may contain brackets but no parentheses
/// outside them.
fn parse_call(s: &str) -> Option<(String, Vec<Variable>)> {
    let open = s.find('(')?;
    let inner = s[open + 1..].strip_suffix(')')?;
    Some((s[..open].to_string(), parse_variables(inner)?))
}

fn parse_atom_list(s: &str) -> Option<Vec<ListedAtom>> {
    let inner = s.strip_prefix('[')?.strip_suffix(']')?;
    let mut out = Vec::new();
    let bytes = inner.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let mut depth = 0i32;
        while i < bytes.len() && !(bytes[i] == b'(' && depth == 0) {
            match bytes[i] {
                b'[' => depth += 1,
                b']' => depth -= 1,
                _ => {}
            }
            i += 1;
        }
        let close = inner[i..].find(')')? + i;
        let (predicate, args) = parse_call(&inner[start..=close])?;
        out.push(ListedAtom { predicate, args });
        i = close + 1;
        if i < bytes.len() {
            i += inner[i..].strip_prefix(", ").map(|_| 2)?;
        }
    }
    Some(out)
}

impl Listing {
    pub fn parse(text: &str) -> Result<Self, ListingError> {
        let lines: Vec<&str> = text.split('\n').collect();
        if lines.last() != Some(&"") {
            return Err(err(lines.len() - 1, "missing final newline"));
        }
        let lines = &lines[..lines.len() - 1];
        let mut i = 0;
        let header = *lines.first().ok_or_else(|| err(0, "empty listing"))?;
        if !header.eq_ignore_ascii_case("Learned predicates:") {
            return Err(err(0, "expected predicates header"));
        }
        i += 1;
        let mut predicates = Vec::new();
        while i < lines.len() && !lines[i].is_empty() {
            let l = lines[i];
            let p = if l.ends_with(')') && !l.starts_with('[') && !l.starts_with("NOT-") {
                let (name, params) = parse_call(l).ok_or_else(|| err(i, "bad predicate"))?;
                ListedPredicate {
                    name,
                    params: Some(params),
                }
            } else {
                ListedPredicate {
                    name: l.to_string(),
                    params: None,
                }
            };
            predicates.push(p);
            i += 1;
        }
        if lines.get(i) != Some(&"") || lines.get(i + 1) != Some(&"Learned operators:") {
            return Err(err(i, "expected blank line and operators header"));
        }
        i += 2;
        let mut operators = Vec::new();
        while i < lines.len() {
            let name = lines[i]
                .strip_suffix(':')
                .filter(|n| !n.starts_with(' '))
                .ok_or_else(|| err(i, "expected operator name"))?
                .to_string();
            let field = |j: usize, key: &str| -> Result<&str, ListingError> {
                lines
                    .get(j)
                    .and_then(|l| l.strip_prefix("  ")?.strip_prefix(key)?.strip_prefix(": "))
                    .ok_or_else(|| err(j, format!("expected {key}")))
            };
            let params = field(i + 1, "Parameters")?;
            let params = params
                .strip_prefix('[')
                .and_then(|p| p.strip_suffix(']'))
                .and_then(parse_variables)
                .ok_or_else(|| err(i + 1, "bad parameters"))?;
            let atoms = |j: usize, key: &str| -> Result<Vec<ListedAtom>, ListingError> {
                parse_atom_list(field(j, key)?).ok_or_else(|| err(j, format!("bad {key}")))
            };
            let preconditions = atoms(i + 2, "Preconditions")?;
            let add_effects = atoms(i + 3, "Add Effects")?;
            let delete_effects = atoms(i + 4, "Delete Effects")?;
            let ignore_effects = atoms(i + 5, "Ignore Effects")?;
            let (skill, skill_args) =
                parse_call(field(i + 6, "Skill")?).ok_or_else(|| err(i + 6, "bad skill"))?;
            i += 7;
            let mut blank = 0;
            while i < lines.len() && lines[i].is_empty() {
                blank += 1;
                i += 1;
            }
            operators.push(ListedOperator {
                name,
                params,
                preconditions,
                add_effects,
                delete_effects,
                ignore_effects,
                skill,
                skill_args,
                blank_lines_after: blank,
            });
        }
        Ok(Listing {
            predicates_header: header.to_string(),
            predicates,
            operators,
        })
    }

    pub fn render(&self) -> String {
        fn vars(v: &[Variable]) -> String {
            v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
        }
        fn atoms(a: &[ListedAtom]) -> String {
            let parts: Vec<String> = a.iter().map(|a| format!("{}({})", a.predicate, vars(&a.args))).collect();
            format!("[{}]", parts.join(", "))
        }
        let mut out = String::new();
        out.push_str(&self.predicates_header);
        out.push('\n');
        for p in &self.predicates {
            match &p.params {
                Some(v) => writeln!(out, "{}({})", p.name, vars(v)).unwrap(),
                None => writeln!(out, "{}", p.name).unwrap(),
            }
        }
        out.push_str("\nLearned operators:\n");
        for op in &self.operators {
            writeln!(out, "{}:", op.name).unwrap();
            writeln!(out, "  Parameters: [{}]", vars(&op.params)).unwrap();
            writeln!(out, "  Preconditions: {}", atoms(&op.preconditions)).unwrap();
            writeln!(out, "  Add Effects: {}", atoms(&op.add_effects)).unwrap();
            writeln!(out, "  Delete Effects: {}", atoms(&op.delete_effects)).unwrap();
            writeln!(out, "  Ignore Effects: {}", atoms(&op.ignore_effects)).unwrap();
            writeln!(out, "  Skill: {}({})", op.skill, vars(&op.skill_args)).unwrap();
            for _ in 0..op.blank_lines_after {
                out.push('\n');
            }
        }
        out
    }

    /// Listing of a learned model; `learned` are the invented predicates.
    pub fn from_model(learned: &[Pred], operators: &[Operator]) -> Self {
        let lift = |a: &LiftedAtom| ListedAtom {
            predicate: a.predicate.name.clone(),
            args: a.args.clone(),
        };
        let n = operators.len();
        Listing {
            predicates_header: "Learned predicates:".into(),
            predicates: learned
                .iter()
                .map(|p| ListedPredicate {
                    name: p.name.clone(),
                    params: match p.kind {
                        PredicateKind::Feature { .. } => None,
                        _ => Some(crate::atoms::signature_variables(&p.arg_types)),
                    },
                })
                .collect(),
            operators: operators
                .iter()
                .enumerate()
                .map(|(i, op)| ListedOperator {
                    name: op.name.clone(),
                    params: op.params.clone(),
                    preconditions: op.preconditions.iter().map(lift).collect(),
                    add_effects: op.add_effects.iter().map(lift).collect(),
                    delete_effects: op.delete_effects.iter().map(lift).collect(),
                    ignore_effects: op.ignore_effects.iter().map(lift).collect(),
                    skill: op.skill.name.clone(),
                    skill_args: op.skill_args.clone(),
                    blank_lines_after: usize::from(i + 1 < n),
                })
                .collect(),
        }
    }

    /// Rebuilds typed operators. Names that parse as feature thresholds
    /// become feature predicates, listed names become visual predicates and
    /// everything else is treated as provided.
    pub fn to_operators(&self) -> Vec<Operator> {
        let learned: std::collections::BTreeSet<&str> =
            self.predicates.iter().map(|p| p.name.as_str()).collect();
        let mut preds: BTreeMap<(String, Vec<String>), Pred> = BTreeMap::new();
        let mut skills: BTreeMap<(String, Vec<String>), Arc<Skill>> = BTreeMap::new();
        let mut pred = |a: &ListedAtom| -> Pred {
            let types: Vec<String> = a.args.iter().map(|v| v.ty.clone()).collect();
            preds
                .entry((a.predicate.clone(), types.clone()))
                .or_insert_with(|| {
                    let kind = match FeatureClassifier::parse_name(&a.predicate) {
                        Some(classifier) => PredicateKind::Feature { classifier },
                        None if learned.contains(a.predicate.as_str()) => PredicateKind::Visual,
                        None => PredicateKind::Provided,
                    };
                    Arc::new(Predicate {
                        name: a.predicate.clone(),
                        arg_types: types,
                        kind,
                    })
                })
                .clone()
        };
        self.operators
            .iter()
            .map(|op| {
                let mut lift = |v: &[ListedAtom]| -> Vec<LiftedAtom> {
                    v.iter().map(|a| LiftedAtom::new(pred(a), a.args.clone())).collect()
                };
                let preconditions = lift(&op.preconditions);
                let add_effects = lift(&op.add_effects);
                let delete_effects = lift(&op.delete_effects);
                let ignore_effects = lift(&op.ignore_effects);
                let types: Vec<String> = op.skill_args.iter().map(|v| v.ty.clone()).collect();
                let skill = skills
                    .entry((op.skill.clone(), types))
                    .or_insert_with(|| {
                        let params = op
                            .skill_args
                            .iter()
                            .enumerate()
                            .map(|(i, v)| Variable::new(format!("?a{i}"), v.ty.clone()))
                            .collect();
                        Skill::new(op.skill.clone(), params, 0)
                    })
                    .clone();
                Operator {
                    name: op.name.clone(),
                    params: op.params.clone(),
                    preconditions,
                    add_effects,
                    delete_effects,
                    ignore_effects,
                    skill,
                    skill_args: op.skill_args.clone(),
                    support_count: 0,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_list_with_bracketed_names() {
        let a = parse_atom_list("[KnobAndBurnerLinked(?x3:knob, ?x0:surface), NOT-[[0:surface].z<=[idx_0]1.59](?x0:surface)]").unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[1].predicate, "NOT-[[0:surface].z<=[idx_0]1.59]");
        assert_eq!(a[1].args, vec![Variable::new("?x0", "surface")]);
        assert_eq!(parse_atom_list("[]").unwrap(), vec![]);
        assert!(parse_atom_list("[A(?x:t) B(?y:t)]").is_none());
    }

    #[test]
    fn malformed_listings_report_lines() {
        assert_eq!(Listing::parse("").unwrap_err().line, 1);
        let e = Listing::parse("Learned predicates:\n\nLearned operators:\nOp:\n  Parameters: [\n").unwrap_err();
        assert_eq!(e.line, 5);
    }
}
