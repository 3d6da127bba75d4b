//! Candidate predicate pool: proposal parsing, lifting, and the feature grammar.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::atoms::{FeatureClassifier, GroundAtom, Pred, Predicate, PredicateKind};
use crate::operator::Demonstration;
use crate::types::Obj;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    UnknownObject,
    Malformed,
    ArityConflict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub raw: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProposalResult {
    pub accepted: Vec<GroundAtom>,
    pub rejected: Vec<Rejected>,
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

/// Scans the whole text for `name(arg, ...)` tokens and classifies each.
pub fn parse_proposals(text: &str, objects: &[Obj]) -> ProposalResult {
    let exact: HashMap<&str, &Obj> = objects.iter().map(|o| (o.name.as_str(), o)).collect();
    let folded: HashMap<String, &Obj> = objects
        .iter()
        .map(|o| (o.name.to_lowercase(), o))
        .collect();
    let mut arities: HashMap<String, usize> = HashMap::new();
    let mut seen: BTreeSet<GroundAtom> = BTreeSet::new();
    let mut out = ProposalResult::default();

    for line in text.lines() {
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            let (start, c) = chars[i];
            let boundary = i == 0 || !is_name_char(chars[i - 1].1);
            if !(boundary && is_name_start(c)) {
                i += 1;
                continue;
            }
            let mut j = i;
            while j < chars.len() && is_name_char(chars[j].1) {
                j += 1;
            }
            if j >= chars.len() || chars[j].1 != '(' {
                i = j.max(i + 1);
                continue;
            }
            let name = &line[start..chars[j].0];
            let open = chars[j].0;
            let Some(rel) = line[open + 1..].find([')', '(']) else {
                out.rejected.push(Rejected {
                    raw: line[start..].trim_end().to_owned(),
                    reason: RejectReason::Malformed,
                });
                break;
            };
            let close = open + 1 + rel;
            let raw = &line[start..=close.min(line.len() - 1)];
            if line.as_bytes()[close] == b'(' {
                out.rejected.push(Rejected {
                    raw: line[start..close].to_owned(),
                    reason: RejectReason::Malformed,
                });
                i = chars.iter().position(|(b, _)| *b == close).unwrap_or(chars.len());
                continue;
            }
            i = chars
                .iter()
                .position(|(b, _)| *b > close)
                .unwrap_or(chars.len());

            let args: Vec<&str> = line[open + 1..close].split(',').map(str::trim).collect();
            if args.iter().any(|a| a.is_empty()) {
                out.rejected.push(Rejected {
                    raw: raw.to_owned(),
                    reason: RejectReason::Malformed,
                });
                continue;
            }
            let resolved: Option<Vec<Obj>> = args
                .iter()
                .map(|a| {
                    exact
                        .get(a)
                        .or_else(|| folded.get(&a.to_lowercase()))
                        .map(|o| (*o).clone())
                })
                .collect();
            let Some(resolved) = resolved else {
                out.rejected.push(Rejected {
                    raw: raw.to_owned(),
                    reason: RejectReason::UnknownObject,
                });
                continue;
            };
            let distinct: BTreeSet<&Obj> = resolved.iter().collect();
            if distinct.len() != resolved.len() {
                out.rejected.push(Rejected {
                    raw: raw.to_owned(),
                    reason: RejectReason::Malformed,
                });
                continue;
            }
            let lname = name.to_lowercase();
            match arities.get(&lname) {
                Some(&n) if n != resolved.len() => {
                    out.rejected.push(Rejected {
                        raw: raw.to_owned(),
                        reason: RejectReason::ArityConflict,
                    });
                    continue;
                }
                None => {
                    arities.insert(lname.clone(), resolved.len());
                }
                _ => {}
            }
            let types: Vec<&str> = resolved.iter().map(|o| o.ty.as_str()).collect();
            let atom = GroundAtom::new_unchecked(Predicate::visual(lname, &types), resolved);
            if seen.insert(atom.clone()) {
                out.accepted.push(atom);
            }
        }
    }
    out
}

/// One predicate per distinct (name, signature). Names carrying several
/// signatures get a numeric suffix per signature in first-seen order.
pub fn lift_and_dedup(atoms: &[GroundAtom]) -> Vec<Pred> {
    let mut order: Vec<String> = Vec::new();
    let mut sigs: HashMap<String, Vec<Pred>> = HashMap::new();
    for a in atoms {
        let entry = sigs.entry(a.predicate.name.clone()).or_insert_with(|| {
            order.push(a.predicate.name.clone());
            Vec::new()
        });
        if !entry.iter().any(|p| p.arg_types == a.predicate.arg_types) {
            entry.push(a.predicate.clone());
        }
    }
    let mut out = Vec::new();
    for name in order {
        let list = &sigs[&name];
        if list.len() == 1 {
            out.push(Pred::new(Predicate {
                name: name.clone(),
                arg_types: list[0].arg_types.clone(),
                kind: list[0].kind.clone(),
            }));
        } else {
            for (i, p) in list.iter().enumerate() {
                out.push(Pred::new(Predicate {
                    name: format!("{name}{i}"),
                    arg_types: p.arg_types.clone(),
                    kind: p.kind.clone(),
                }));
            }
        }
    }
    out
}

/// Maps each accepted atom to the lifted predicate it belongs to.
pub fn relabel_atoms(atoms: &[GroundAtom], lifted: &[Pred]) -> Vec<GroundAtom> {
    let mut by_name: BTreeMap<&str, Vec<&Pred>> = BTreeMap::new();
    for p in lifted {
        by_name.entry(base_name(&p.name)).or_default().push(p);
    }
    atoms
        .iter()
        .filter_map(|a| {
            let cands = by_name.get(base_name(&a.predicate.name))?;
            let p = cands
                .iter()
                .find(|p| p.arg_types == a.predicate.arg_types)?;
            Some(GroundAtom::new_unchecked((*p).clone(), a.args.clone()))
        })
        .collect()
}

fn base_name(n: &str) -> &str {
    n.trim_end_matches(|c: char| c.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrammarConfig {
    pub include_negations: bool,
    pub max_thresholds_per_feature: usize,
}

impl Default for FeatureGrammarConfig {
    fn default() -> Self {
        Self {
            include_negations: true,
            max_thresholds_per_feature: 4,
        }
    }
}

/// Unary threshold predicates at midpoints between consecutive distinct
/// observed values of each (type, feature).
pub fn generate_feature_grammar(demos: &[Demonstration], cfg: &FeatureGrammarConfig) -> Vec<Pred> {
    assert!(cfg.max_thresholds_per_feature >= 1);
    let mut values: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for d in demos {
        for s in &d.states {
            for (o, feats) in s.objects.iter() {
                for (f, v) in feats {
                    if v.is_finite() {
                        values.entry((o.ty.clone(), f.clone())).or_default().push(*v);
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    for ((ty, feature), mut vs) in values {
        vs.sort_by(f64::total_cmp);
        vs.dedup();
        if vs.len() < 2 {
            continue;
        }
        let mids: Vec<f64> = vs.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
        for theta in select_thresholds(&mids, cfg.max_thresholds_per_feature) {
            let c = FeatureClassifier {
                ty: ty.clone(),
                feature: feature.clone(),
                threshold: theta,
                negated: false,
            };
            if cfg.include_negations {
                out.push(Predicate::feature(c.negation()));
            }
            out.push(Predicate::feature(c));
        }
    }
    out
}

/// Keeps the `cap` midpoints closest (by rank) to the median split.
fn select_thresholds(mids: &[f64], cap: usize) -> Vec<f64> {
    if mids.len() <= cap {
        return mids.to_vec();
    }
    let center = (mids.len() - 1) as f64 / 2.0;
    let mut idx: Vec<usize> = (0..mids.len()).collect();
    idx.sort_by(|a, b| {
        let da = (*a as f64 - center).abs();
        let db = (*b as f64 - center).abs();
        da.total_cmp(&db).then(a.cmp(b))
    });
    let mut keep: Vec<usize> = idx.into_iter().take(cap).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| mids[i]).collect()
}

/// Candidate predicate pool with its never-removable goal subset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub predicates: Vec<Pred>,
    pub initial: BTreeSet<Pred>,
    pub goal: BTreeSet<Pred>,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn candidates(&self) -> Vec<Pred> {
        self.predicates
            .iter()
            .filter(|p| !self.initial.contains(*p) && !self.goal.contains(*p))
            .cloned()
            .collect()
    }
}

/// Union of the three sources. Initial predicates win name collisions with an
/// identical signature; a colliding name with a different signature is
/// suffixed with the first free index.
pub fn assemble_pool(
    init: &[Pred],
    goal: &[Pred],
    visual: &[Pred],
    feature: &[Pred],
) -> Pool {
    let mut pool = Pool::default();
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut keys: BTreeSet<(String, Vec<String>)> = BTreeSet::new();
    for p in goal.iter().chain(init) {
        if keys.insert((p.name.to_lowercase(), p.arg_types.clone())) {
            used.insert(p.name.to_lowercase());
            pool.predicates.push(p.clone());
            pool.initial.insert(p.clone());
        }
    }
    pool.goal = goal.iter().cloned().collect();
    let init_names: BTreeSet<String> = used.clone();
    for p in visual.iter().chain(feature) {
        let lname = p.name.to_lowercase();
        if keys.contains(&(lname.clone(), p.arg_types.clone())) {
            continue;
        }
        let renamed = if init_names.contains(&lname) {
            let mut i = 0;
            loop {
                let cand = format!("{}{i}", p.name);
                if !used.contains(&cand.to_lowercase()) {
                    break cand;
                }
                i += 1;
            }
        } else {
            p.name.clone()
        };
        let q = if renamed == p.name {
            p.clone()
        } else {
            Pred::new(Predicate {
                name: renamed.clone(),
                arg_types: p.arg_types.clone(),
                kind: p.kind.clone(),
            })
        };
        keys.insert((q.name.to_lowercase(), q.arg_types.clone()));
        used.insert(q.name.to_lowercase());
        pool.predicates.push(q);
    }
    pool
}

/// True for predicates evaluated by a labeler rather than from features.
pub fn needs_labeler(p: &Predicate) -> bool {
    !matches!(p.kind, PredicateKind::Feature { .. })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::ground;
    use crate::types::{ObjectRef, ObjectState, State, TypeHierarchy};
    use proptest::prelude::*;

    fn objs() -> Vec<Obj> {
        vec![
            ObjectRef::new("patty1", "patty"),
            ObjectRef::new("grill", "grill"),
            ObjectRef::new("robot", "robot"),
        ]
    }

    #[test]
    fn parse_examples() {
        let r = parse_proposals("on(patty1, grill)", &objs());
        assert_eq!(r.accepted.len(), 1);
        assert_eq!(r.accepted[0].to_string(), "on(patty1, grill)");
        assert_eq!(r.accepted[0].predicate.arg_types, vec!["patty", "grill"]);

        let apple = vec![ObjectRef::new("apple", "movable")];
        let r = parse_proposals("Inside(apple, room1)", &apple);
        assert!(r.accepted.is_empty());
        assert_eq!(r.rejected[0].reason, RejectReason::UnknownObject);
        assert_eq!(r.rejected[0].raw, "Inside(apple, room1)");

        let r = parse_proposals("cooked(", &objs());
        assert_eq!(r.rejected, vec![Rejected { raw: "cooked(".into(), reason: RejectReason::Malformed }]);
    }

    #[test]
    fn names_case_normalized_and_arity_checked() {
        let r = parse_proposals(
            "* Cooked(patty1)\n* cooked(patty1, grill)\nnear(robot, grill) and far(robot)",
            &objs(),
        );
        let acc: Vec<String> = r.accepted.iter().map(|a| a.to_string()).collect();
        assert_eq!(acc, vec!["cooked(patty1)", "near(robot, grill)", "far(robot)"]);
        assert_eq!(r.rejected.len(), 1);
        assert_eq!(r.rejected[0].reason, RejectReason::ArityConflict);
    }

    #[test]
    fn prose_and_brackets_ignored() {
        let r = parse_proposals(
            "1. **Pick[robot:robot, patty1:patty]**\n   - Before: on(patty1, grill) (the grill)",
            &objs(),
        );
        assert_eq!(r.accepted.len(), 1);
        assert!(r.rejected.is_empty());
    }

    #[test]
    fn lift_examples() {
        let apple = ObjectRef::new("apple", "movable");
        let table = ObjectRef::new("short_round_coffee_table", "table");
        let a = GroundAtom::new_unchecked(Predicate::visual("OnTop", &["movable", "table"]), vec![apple, table]);
        let ps = lift_and_dedup(&[a]);
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].signature(), "OnTop(?m:movable, ?t:table)");

        let jug = ObjectRef::new("jug0", "jug");
        let table0 = ObjectRef::new("table0", "table");
        let c1 = GroundAtom::new_unchecked(Predicate::visual("Clear", &["jug"]), vec![jug]);
        let c2 = GroundAtom::new_unchecked(Predicate::visual("Clear", &["table"]), vec![table0]);
        let sigs: Vec<String> = lift_and_dedup(&[c1, c2]).iter().map(|p| p.signature()).collect();
        assert_eq!(sigs, vec!["Clear0(?j:jug)", "Clear1(?t:table)"]);

        let p1 = ObjectRef::new("patty1", "patty");
        let p2 = ObjectRef::new("patty2", "patty");
        let cooked = Predicate::visual("cooked", &["patty"]);
        let ps = lift_and_dedup(&[
            GroundAtom::new_unchecked(cooked.clone(), vec![p1]),
            GroundAtom::new_unchecked(cooked, vec![p2]),
        ]);
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].signature(), "cooked(?p:patty)");
    }

    fn demo_with(values: &[(&str, &str, f64)]) -> Demonstration {
        let states = values
            .iter()
            .map(|(ty, f, v)| {
                let mut os = ObjectState::new();
                os.set(&ObjectRef::new(format!("{ty}0"), *ty), f, *v);
                State {
                    objects: os,
                    ..State::default()
                }
            })
            .collect::<Vec<_>>();
        Demonstration {
            objects: vec![],
            actions: vec![],
            states,
            goal: BTreeSet::new(),
        }
    }

    #[test]
    fn grammar_examples() {
        let d = demo_with(&[("surface", "z", 1.0), ("surface", "z", 2.18), ("surface", "z", 1.0)]);
        let names: Vec<String> = generate_feature_grammar(&[d], &FeatureGrammarConfig::default())
            .iter()
            .map(|p| p.name.clone())
            .collect();
        assert_eq!(
            names,
            vec!["NOT-[[0:surface].z<=[idx_0]1.59]", "[[0:surface].z<=[idx_0]1.59]"]
        );
        let d = demo_with(&[("robot", "fingers", 0.0), ("robot", "fingers", 1.0)]);
        let cfg = FeatureGrammarConfig {
            include_negations: false,
            ..Default::default()
        };
        let names: Vec<String> = generate_feature_grammar(&[d], &cfg).iter().map(|p| p.name.clone()).collect();
        assert_eq!(names, vec!["[[0:robot].fingers<=[idx_0]0.5]"]);
        let d = demo_with(&[("robot", "dir", 3.0), ("robot", "dir", 3.0)]);
        assert!(generate_feature_grammar(&[d], &cfg).is_empty());
    }

    #[test]
    fn grammar_cap_keeps_median_thresholds() {
        assert_eq!(select_thresholds(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3), vec![2.0, 3.0, 4.0]);
        assert_eq!(select_thresholds(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 2), vec![2.0, 3.0]);
        assert_eq!(select_thresholds(&[0.0, 1.0], 4), vec![0.0, 1.0]);
    }

    #[test]
    fn pool_examples() {
        let on = Predicate::provided("On", &["object", "object"]);
        let pool = assemble_pool(&[on.clone()], &[on.clone()], &[], &[]);
        assert_eq!(pool.predicates, vec![on.clone()]);
        assert!(pool.candidates().is_empty());

        let clear = Predicate::provided("Clear", &["object"]);
        let vis_same = Predicate::visual("clear", &["object"]);
        let vis_other = Predicate::visual("clear", &["patty"]);
        let pool = assemble_pool(&[clear.clone(), on.clone()], &[on.clone()], &[vis_same, vis_other], &[]);
        let names: Vec<String> = pool.predicates.iter().map(|p| p.signature()).collect();
        assert_eq!(names, vec!["On(?o1:object, ?o2:object)", "Clear(?o:object)", "clear0(?p:patty)"]);
        assert!(matches!(pool.predicates[1].kind, PredicateKind::Provided));
    }

    fn atom_list() -> impl Strategy<Value = Vec<GroundAtom>> {
        let names = ["a", "b", "c"];
        let tys = ["t1", "t2"];
        proptest::collection::vec((0..3usize, 0..2usize, 0..2usize, 0..3usize), 0..12).prop_map(
            move |v| {
                v.into_iter()
                    .map(|(n, t1, t2, o)| {
                        let args = vec![
                            ObjectRef::new(format!("x{o}"), tys[t1]),
                            ObjectRef::new(format!("y{o}"), tys[t2]),
                        ];
                        GroundAtom::new_unchecked(Predicate::visual(names[n], &[tys[t1], tys[t2]]), args)
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn lift_is_idempotent_and_grounds_back(atoms in atom_list()) {
            let lifted = lift_and_dedup(&atoms);
            let relabeled = relabel_atoms(&atoms, &lifted);
            prop_assert_eq!(relabeled.len(), atoms.len());
            let mut again = lift_and_dedup(&relabeled);
            let mut expected = lifted.clone();
            again.sort();
            expected.sort();
            prop_assert_eq!(&again, &expected);
            let t = TypeHierarchy::default();
            for (orig, re) in atoms.iter().zip(&relabeled) {
                let g = ground(&re.predicate, &orig.args, &t).unwrap();
                prop_assert_eq!(&g.args, &orig.args);
                prop_assert_eq!(&g.predicate.arg_types, &orig.predicate.arg_types);
            }
        }

        #[test]
        fn grammar_twins_are_opposite(vals in proptest::collection::vec(-5.0f64..5.0, 2..10), probe in -6.0f64..6.0) {
            let states: Vec<(&str, &str, f64)> = vals.iter().map(|v| ("t", "f", *v)).collect();
            let d = demo_with(&states);
            let preds = generate_feature_grammar(&[d], &FeatureGrammarConfig::default());
            let mut os = ObjectState::new();
            let o = ObjectRef::new("t0", "t");
            os.set(&o, "f", probe);
            for pair in preds.chunks(2) {
                let a = pair[0].classifier().unwrap().evaluate(&os, &o).unwrap();
                let b = pair[1].classifier().unwrap().evaluate(&os, &o).unwrap();
                prop_assert_ne!(a, b);
            }
        }
    }
}
