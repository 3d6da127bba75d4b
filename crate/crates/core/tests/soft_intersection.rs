use std::collections::BTreeSet;

use symwm_core::atoms::{AbstractState, GroundAtom, Pred, Predicate};
use symwm_core::learning::{learn_from_transitions, meets_fraction, LearnConfig, Transition};
use symwm_core::types::{Action, Obj, ObjectRef, Skill, Variable};
use symwm_testkit::learning::{naive_learn, types};

fn p(name: &str) -> Pred {
    Predicate::provided(name, &["a"])
}

/// Five `Move(a_i)` transitions that all add `Done(a_i)`. `X` holds before
/// every one, `Y` before four, `Z` before three.
fn five() -> Vec<Transition> {
    let skill = Skill::new("Move", vec![Variable::new("?x", "a")], 0);
    (0..5)
        .map(|i| {
            let o: Obj = ObjectRef::new(format!("a{i}"), "a");
            let at = |name: &str| GroundAtom::new_unchecked(p(name), vec![o.clone()]);
            let mut pre = vec![at("X")];
            if i < 4 {
                pre.push(at("Y"));
            }
            if i < 3 {
                pre.push(at("Z"));
            }
            let mut post = pre.clone();
            post.push(at("Done"));
            Transition {
                demo: i,
                step: 0,
                state: AbstractState::new(pre),
                action: Action::new(skill.clone(), vec![o], vec![], &types()).unwrap(),
                next: AbstractState::new(post),
            }
        })
        .collect()
}

fn preconditions(h_pre_frac: f64) -> BTreeSet<String> {
    let out = learn_from_transitions(
        &five(),
        &LearnConfig {
            h_pre_frac,
            h_data_frac: 0.0,
        },
    );
    assert_eq!(out.classes.len(), 1);
    out.classes[0].operator.preconditions.iter().map(|a| a.predicate.name.clone()).collect()
}

fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn four_of_five_is_kept_at_point_eight() {
    assert_eq!(preconditions(0.8), set(&["X", "Y"]));
}

#[test]
fn three_of_five_is_dropped_at_point_eight() {
    assert!(!preconditions(0.8).contains("Z"));
    assert_eq!(preconditions(0.6), set(&["X", "Y", "Z"]));
}

#[test]
fn full_fraction_is_exact_intersection() {
    assert_eq!(preconditions(1.0), set(&["X"]));
    let naive = naive_learn(&five());
    let exact: BTreeSet<String> = naive[0].preconditions.iter().map(|a| a.predicate.name.clone()).collect();
    assert_eq!(exact, preconditions(1.0));
}

#[test]
fn fraction_boundaries() {
    assert!(meets_fraction(4, 5, 0.8));
    assert!(!meets_fraction(3, 5, 0.8));
    assert!(meets_fraction(5, 5, 1.0));
    assert!(!meets_fraction(4, 5, 1.0));
    assert!(meets_fraction(1, 20, 0.05));
    assert!(!meets_fraction(0, 20, 0.05));
    assert!(meets_fraction(0, 20, 0.0));
    assert!(!meets_fraction(0, 0, 0.0));
    // Products that are inexact in binary floating point still land on the
    // inclusive side.
    assert!(meets_fraction(7, 10, 0.7));
    assert!(meets_fraction(3, 10, 0.3));
    assert!(meets_fraction(29, 100, 0.29));
}

#[test]
fn pruning_uses_the_skills_own_transition_count() {
    // 19 identical Move transitions plus one odd one: 1/20 survives at 0.05.
    let mut ts = Vec::new();
    let base = five();
    for i in 0..19 {
        let mut t = base[0].clone();
        t.demo = i;
        ts.push(t);
    }
    let mut odd = base[1].clone();
    odd.demo = 19;
    odd.next = AbstractState::new(odd.state.iter().cloned());
    ts.push(odd);
    let keep = learn_from_transitions(
        &ts,
        &LearnConfig {
            h_pre_frac: 1.0,
            h_data_frac: 0.05,
        },
    );
    assert_eq!((keep.classes.len(), keep.pruned.len()), (2, 0));
    let drop = learn_from_transitions(
        &ts,
        &LearnConfig {
            h_pre_frac: 1.0,
            h_data_frac: 0.051,
        },
    );
    assert_eq!((drop.classes.len(), drop.pruned.len()), (1, 1));
    assert_eq!(drop.pruned[0].support_count, 1);
}
