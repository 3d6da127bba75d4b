use std::collections::BTreeSet;

use symwm_core::atoms::{AbstractState, GroundAtom, Predicate};
use symwm_core::labeling::{abstract_state, LabelContext, LabelError, Labeler};
use symwm_core::proposal::parse_proposals;
use symwm_core::types::{Action, Obj, State};
use symwm_sim::burger::{self, SceneSpec};
use symwm_sim::{
    goal_holds, kitchen, mock_propose, reset, DomainName, SimEnv, SimError, Split, TaskDistributionSpec, FAILED,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symwm_core::execute::Environment;

fn act(domain: DomainName, skill: std::sync::Arc<symwm_core::types::Skill>, objs: &[&Obj]) -> Action {
    Action::new(skill, objs.iter().map(|o| (*o).clone()).collect(), vec![], &domain.types()).unwrap()
}

fn o<'a>(objects: &'a [Obj], name: &str) -> &'a Obj {
    burger::find(objects, name)
}

fn scene(spec: SceneSpec, seed: u64) -> (Vec<Obj>, State) {
    burger::scene(&spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn run(domain: DomainName, state: &State, actions: &[Action]) -> State {
    actions
        .iter()
        .fold(state.clone(), |s, a| domain.step(&s, a).unwrap())
}

#[test]
fn demos_are_deterministic_and_replay_bit_for_bit() {
    for domain in DomainName::ALL {
        let a = domain.generate_demos(6, 3).unwrap();
        let b = domain.generate_demos(6, 3).unwrap();
        assert_eq!(a, b, "{domain}");
        for demo in &a {
            let mut s = demo.states[0].clone();
            for (t, action) in demo.actions.iter().enumerate() {
                s = domain.step(&s, action).unwrap();
                assert_eq!(s, demo.states[t + 1], "{domain} step {t}");
            }
        }
    }
}

#[test]
fn demo_goals_hold_in_final_states() {
    for domain in DomainName::ALL {
        let n = domain.defaults().n_demo;
        for demo in domain.generate_demos(n, 11).unwrap() {
            assert!(goal_holds(domain, demo.states.last().unwrap(), &demo.goal), "{domain}");
            assert!(!demo.goal.is_empty());
        }
    }
}

#[test]
fn every_test_task_has_a_working_witness() {
    for domain in DomainName::ALL {
        for task in domain.generate_tasks(6, 2).unwrap() {
            let end = run(domain, &task.task.init, &task.witness);
            assert!(!end.hidden_flag(FAILED));
            assert!(goal_holds(domain, &end, &task.task.goal), "{domain}");
            assert!(!goal_holds(domain, &task.task.init, &task.task.goal), "{domain} trivially solved");
        }
    }
}

#[test]
fn goals_use_only_given_predicates() {
    for domain in DomainName::ALL {
        let given: BTreeSet<_> = domain.initial_predicates().into_iter().collect();
        for task in domain.generate_tasks(4, 0).unwrap() {
            assert!(task.task.goal.iter().all(|a| given.contains(&a.predicate)), "{domain}");
        }
    }
}

#[test]
fn same_seed_same_task() {
    for domain in DomainName::ALL {
        let a = domain.test_task(42).unwrap();
        let b = domain.test_task(42).unwrap();
        assert_eq!(a.task, b.task);
        assert_eq!(a.witness, b.witness);
    }
}

#[test]
fn more_stacks_test_parity_selects_variant() {
    let d = DomainName::MoreStacks;
    let even = d.test_task(10).unwrap();
    let odd = d.test_task(11).unwrap();
    assert_eq!(even.task.goal.len(), 5);
    assert_eq!(odd.task.goal.len(), 6);
    let patty1 = o(&odd.task.objects, "patty1");
    assert!(burger::is_held(&odd.task.init, patty1));
    assert!(burger::held_item(&even.task.init).is_none());
    // Held patties are raw.
    assert!(!burger::is_prepped(&odd.task.init, patty1));
    // The witness for the held variant starts by putting the patty down.
    assert_eq!(odd.witness[0].skill.name, "Place");
}

#[test]
fn kitchen_reset_train_starts_front_left() {
    let spec = TaskDistributionSpec {
        domain: DomainName::Kitchen,
        split: Split::Train,
    };
    for seed in 0..5 {
        let (task, env) = reset(spec, seed).unwrap();
        let objects = &task.task.objects;
        let kettle = o(objects, "kettle1");
        let b1 = o(objects, "burner1");
        assert!(kitchen::kettle_on(&task.task.init, kettle, b1));
        let goal: Vec<&GroundAtom> = task.task.goal.iter().collect();
        assert_eq!(goal.len(), 1);
        assert_eq!(goal[0].predicate.name, "KettleBoiling");
        let names: Vec<&str> = goal[0].args.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["kettle1", "burner2", "knob2"]);
        assert_eq!(env.state, task.task.init);
    }
}

#[test]
fn kitchen_test_goes_front_right_to_back_right_in_two_steps() {
    let t = DomainName::Kitchen.test_task(0).unwrap();
    let kettle = o(&t.task.objects, "kettle1");
    assert!(kitchen::kettle_on(&t.task.init, kettle, o(&t.task.objects, "burner3")));
    let names: Vec<&str> = t.witness.iter().map(|a| a.skill.name.as_str()).collect();
    assert_eq!(names, ["TurnOnKnob", "PushKettleOntoBurner"]);
}

#[test]
fn pick_while_holding_fails_and_changes_nothing() {
    let d = DomainName::ComboBurger;
    let (objs, s0) = scene(
        SceneSpec {
            patties: 1,
            lettuces: 1,
            held: Some("lettuce1".into()),
            ..SceneSpec::default()
        },
        5,
    );
    let next = d.step(&s0, &act(d, burger::pick(), &[o(&objs, "robot"), o(&objs, "patty1")])).unwrap();
    assert!(next.hidden_flag(FAILED));
    assert_eq!(next.objects, s0.objects);
    assert_eq!(next.timestep, s0.timestep + 1);
}

#[test]
fn cook_on_grill_sets_cooked() {
    let d = DomainName::MoreStacks;
    let (objs, s0) = scene(
        SceneSpec {
            patties: 1,
            grill: true,
            ..SceneSpec::default()
        },
        1,
    );
    let (r, p, g) = (o(&objs, "robot"), o(&objs, "patty1"), o(&objs, "grill"));
    // Not yet on the grill: infeasible.
    let early = d.step(&s0, &act(d, burger::cook(), &[r, p, g])).unwrap();
    assert!(early.hidden_flag(FAILED));
    assert!(!burger::is_prepped(&early, p));
    let s = run(
        d,
        &s0,
        &[
            act(d, burger::pick(), &[r, p]),
            act(d, burger::place(), &[r, p, g]),
            act(d, burger::cook(), &[r, p, g]),
        ],
    );
    assert!(!s.hidden_flag(FAILED));
    assert!(burger::is_prepped(&s, p));
    assert!(burger::directly_atop(&s, p, g));
}

#[test]
fn chop_on_board_sets_chopped() {
    let d = DomainName::ComboBurger;
    let (objs, s0) = scene(
        SceneSpec {
            lettuces: 1,
            cutting_board: true,
            ..SceneSpec::default()
        },
        2,
    );
    let (r, l, c) = (o(&objs, "robot"), o(&objs, "lettuce1"), o(&objs, "cutting_board"));
    let s = run(
        d,
        &s0,
        &[
            act(d, burger::pick(), &[r, l]),
            act(d, burger::place(), &[r, l, c]),
            act(d, burger::chop(), &[r, l, c]),
        ],
    );
    assert!(burger::is_prepped(&s, l));
    assert_eq!(burger::concept("chopped", &s, &[l.clone()]), Some(true));
}

#[test]
fn unknown_skill_is_an_error() {
    let d = DomainName::MoreStacks;
    let (objs, s0) = scene(
        SceneSpec {
            patties: 1,
            ..SceneSpec::default()
        },
        0,
    );
    let bogus = symwm_core::types::Skill::new("Fly", vec![], 0);
    let a = Action {
        skill: bogus,
        objects: vec![o(&objs, "robot").clone()],
        theta: vec![],
    };
    assert_eq!(d.step(&s0, &a), Err(SimError::UnknownSkill("Fly".into())));
    // The environment wrapper records it as a failed step instead.
    let mut env = SimEnv::new(d, s0.clone());
    let s = env.step(&a);
    assert!(s.hidden_flag(FAILED));
    assert_eq!(s.objects, s0.objects);
}

fn label(domain: DomainName, state: &State, atom: GroundAtom) -> Result<bool, LabelError> {
    let batch = domain
        .labeler()
        .label_batch(state, std::slice::from_ref(&atom), &LabelContext::initial())?;
    Ok(batch.labels[&atom].holds())
}

#[test]
fn labeler_clear_and_somewhere_above_and_prepped() {
    let d = DomainName::MoreStacks;
    let (objs, s0) = scene(
        SceneSpec {
            patties: 2,
            bottom_buns: 1,
            grill: true,
            ..SceneSpec::default()
        },
        9,
    );
    let (r, p1, p2, b, g) = (
        o(&objs, "robot"),
        o(&objs, "patty1"),
        o(&objs, "patty2"),
        o(&objs, "bottom_bun1"),
        o(&objs, "grill"),
    );
    let clear_b = burger::atom(&burger::clear(), &objs, &["bottom_bun1"]);
    assert!(label(d, &s0, clear_b.clone()).unwrap());
    let mut script = Vec::new();
    for p in [p1, p2] {
        script.extend([
            act(d, burger::pick(), &[r, p]),
            act(d, burger::place(), &[r, p, g]),
            act(d, burger::cook(), &[r, p, g]),
            act(d, burger::pick(), &[r, p]),
        ]);
        let target = if p == p1 { b } else { p1 };
        script.push(act(d, burger::place(), &[r, p, target]));
    }
    let s = run(d, &s0, &script);
    assert!(!s.hidden_flag(FAILED));
    assert!(!label(d, &s, clear_b).unwrap());
    // patty2 is two levels above the bun.
    let saap = burger::saap("patty", "bottom_bun");
    assert!(label(d, &s, burger::atom(&saap, &objs, &["patty2", "bottom_bun1"])).unwrap());
    assert!(!label(d, &s, burger::atom(&burger::on(), &objs, &["patty2", "bottom_bun1"])).unwrap());
    assert!(label(d, &s, burger::atom(&burger::on(), &objs, &["patty2", "patty1"])).unwrap());
    assert!(label(d, &s, burger::atom(&burger::clear(), &objs, &["patty2"])).unwrap());
}

#[test]
fn labeler_rejects_unknown_predicates() {
    let d = DomainName::MoreStacks;
    let (objs, s0) = scene(
        SceneSpec {
            patties: 1,
            ..SceneSpec::default()
        },
        0,
    );
    let weird = Predicate::visual("sparkly", &["patty"]);
    let a = GroundAtom::new_unchecked(weird, vec![o(&objs, "patty1").clone()]);
    assert!(matches!(label(d, &s0, a), Err(LabelError::UnsupportedPredicateKind { .. })));
}

#[test]
fn labeler_maps_synonyms_and_antonyms() {
    let d = DomainName::MoreStacks;
    let (objs, s0) = scene(
        SceneSpec {
            patties: 1,
            grill: true,
            ..SceneSpec::default()
        },
        4,
    );
    let p = o(&objs, "patty1");
    let atom = |name: &str| GroundAtom::new_unchecked(Predicate::visual(name, &["patty"]), vec![p.clone()]);
    for (name, raw_value) in [("cooked", false), ("grilled", false), ("Prepared2", false), ("raw", true), ("uncooked0", true)] {
        assert_eq!(label(d, &s0, atom(name)).unwrap(), raw_value, "{name}");
    }
}

/// Given predicates plus the main visual concepts.
fn visual_and_given(domain: DomainName) -> Vec<symwm_core::atoms::Pred> {
    let mut preds = domain.initial_predicates();
    preds.push(Predicate::visual("cooked", &["patty"]));
    preds.push(Predicate::visual("chopped", &["lettuce"]));
    preds.push(Predicate::visual("empty_hands", &["robot"]));
    preds
}

#[test]
fn cook_and_chop_change_only_prepared_atoms() {
    for domain in [DomainName::MoreStacks, DomainName::ComboBurger, DomainName::BiggerBurger] {
        let preds = visual_and_given(domain);
        let types = domain.types();
        for demo in domain.generate_demos(8, 21).unwrap() {
            let abs: Vec<AbstractState> = demo
                .states
                .iter()
                .map(|s| abstract_state(s, &preds, &demo.objects, &types, &domain.labeler()).unwrap())
                .collect();
            for (t, a) in demo.actions.iter().enumerate() {
                let before: BTreeSet<_> = abs[t].iter().cloned().collect();
                let after: BTreeSet<_> = abs[t + 1].iter().cloned().collect();
                let changed: Vec<&GroundAtom> = before.symmetric_difference(&after).collect();
                match a.skill.name.as_str() {
                    "Cook" | "Chop" => {
                        let target = &a.objects[1];
                        assert!(!changed.is_empty());
                        for c in &changed {
                            assert!(after.contains(*c), "prep only adds: {c}");
                            assert!(c.args.first() == Some(target), "{c} is not about {target}");
                            let n = c.predicate.name.as_str();
                            assert!(n == "cooked" || n == "chopped" || n.ends_with("AndPrepped"), "{n}");
                        }
                    }
                    _ => assert!(changed
                        .iter()
                        .all(|c| c.predicate.name != "cooked" && c.predicate.name != "chopped")),
                }
            }
        }
    }
}

fn concept_atom_set(demo: &symwm_core::operator::Demonstration) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for s in &demo.states {
        for a in &demo.objects {
            for name in ["cooked", "chopped", "empty_hands"] {
                if burger::concept(name, s, std::slice::from_ref(a)) == Some(true) {
                    out.insert(format!("{name}({})", a.name));
                }
            }
            for b in &demo.objects {
                if a == b {
                    continue;
                }
                if a.ty == "robot" && burger::is_item(b) && burger::concept("holding", s, &[a.clone(), b.clone()]) == Some(true) {
                    out.insert(format!("holding({}, {})", a.name, b.name));
                }
                if burger::is_item(a) && b.ty != "robot" && burger::concept("on", s, &[a.clone(), b.clone()]) == Some(true) {
                    out.insert(format!("on({}, {})", a.name, b.name));
                }
            }
        }
    }
    out
}

fn accepted_names(text: &str, objects: &[Obj]) -> BTreeSet<String> {
    parse_proposals(text, objects)
        .accepted
        .iter()
        .map(|a| {
            let args: Vec<&str> = a.args.iter().map(|o| o.name.as_str()).collect();
            format!("{}({})", a.predicate.name, args.join(", "))
        })
        .collect()
}

#[test]
fn mock_without_distractors_emits_exactly_the_concept_atoms() {
    for domain in [DomainName::MoreStacks, DomainName::ComboBurger] {
        for demo in domain.generate_demos(4, 8).unwrap() {
            let text = mock_propose(domain, &demo, 0, 0, 0, 1);
            assert_eq!(accepted_names(&text, &demo.objects), concept_atom_set(&demo));
        }
    }
}

#[test]
fn mock_synonyms_include_grilled() {
    let demo = &DomainName::MoreStacks.generate_demos(1, 0).unwrap()[0];
    let text = mock_propose(DomainName::MoreStacks, demo, 1, 0, 0, 1);
    let names = accepted_names(&text, &demo.objects);
    assert!(names.contains("grilled(patty1)"), "{names:?}");
    assert!(!names.contains("raw(patty1)"));
    let with_antonyms = accepted_names(&mock_propose(DomainName::MoreStacks, demo, 1, 1, 0, 1), &demo.objects);
    assert!(with_antonyms.contains("raw(patty1)"));
}

#[test]
fn mock_junk_is_rejected_by_the_parser() {
    let demo = &DomainName::MoreStacks.generate_demos(1, 0).unwrap()[0];
    let clean = mock_propose(DomainName::MoreStacks, demo, 2, 2, 0, 7);
    let noisy = mock_propose(DomainName::MoreStacks, demo, 2, 2, 5, 7);
    let parsed = parse_proposals(&noisy, &demo.objects);
    assert_eq!(parsed.rejected.len(), 5);
    assert_eq!(accepted_names(&noisy, &demo.objects), accepted_names(&clean, &demo.objects));
}

#[test]
fn mock_proposals_use_the_response_layout() {
    let demo = &DomainName::MoreStacks.generate_demos(1, 0).unwrap()[0];
    let text = mock_propose(DomainName::MoreStacks, demo, 2, 2, 0, 0);
    assert!(text.starts_with("**Predicates for Each Action**\n\n1. **Pick[robot:robot, patty1:patty]"));
    assert!(text.contains("    - Synonyms: "));
    assert!(text.contains("    - Antonyms: "));
    let kitchen = &DomainName::Kitchen.generate_demos(1, 0).unwrap()[0];
    assert!(parse_proposals(&mock_propose(DomainName::Kitchen, kitchen, 2, 2, 0, 0), &kitchen.objects)
        .accepted
        .is_empty());
}

#[test]
fn single_burger_script_has_seven_skills() {
    let demo = &DomainName::MoreStacks.generate_demos(3, 0).unwrap()[0];
    let names: Vec<&str> = demo.actions.iter().map(|a| a.skill.name.as_str()).collect();
    assert_eq!(names, ["Pick", "Place", "Cook", "Pick", "Place", "Pick", "Place"]);
}

#[test]
fn kitchen_demos_are_two_steps() {
    let demos = DomainName::Kitchen.generate_demos(3, 0).unwrap();
    assert_eq!(demos.len(), 3);
    for d in demos {
        let names: Vec<&str> = d.actions.iter().map(|a| a.skill.name.as_str()).collect();
        assert_eq!(names, ["TurnOnKnob", "PushKettleOntoBurner"]);
        // The burner's z is the only feature that tracks the knob.
        let burner = o(&d.objects, "burner2");
        assert_eq!(d.states[0].objects.get(burner, "z"), Some(kitchen::COLD_Z));
        assert_eq!(d.states[2].objects.get(burner, "z"), Some(kitchen::HOT_Z));
    }
}

#[test]
fn kitchen_skills_respect_their_tolerances() {
    let d = DomainName::Kitchen;
    let t = d.test_task(0).unwrap();
    let objs = &t.task.objects;
    let (g, k4) = (o(objs, "gripper"), o(objs, "knob4"));
    let turn = |angle: f64| Action {
        skill: kitchen::turn_on_knob(),
        objects: vec![g.clone(), k4.clone()],
        theta: vec![angle],
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    assert!(!d.step(&t.task.init, &turn(half_pi + 0.29)).unwrap().hidden_flag(FAILED));
    assert!(d.step(&t.task.init, &turn(half_pi + 0.31)).unwrap().hidden_flag(FAILED));
    let on = d.step(&t.task.init, &turn(half_pi)).unwrap();
    assert!(kitchen::knob_on(&on, k4));
    let b4 = o(objs, "burner4");
    assert_eq!(on.objects.get(b4, "z"), Some(kitchen::HOT_Z));
}

#[test]
fn grid_dump_shows_stacks_and_robot() {
    let (objs, s0) = scene(
        SceneSpec {
            patties: 1,
            bottom_buns: 1,
            held: Some("patty1".into()),
            ..SceneSpec::default()
        },
        3,
    );
    let d = DomainName::MoreStacks;
    let (r, p, b) = (o(&objs, "robot"), o(&objs, "patty1"), o(&objs, "bottom_bun1"));
    let dump = burger::render_grid(&s0, &objs);
    assert_eq!(dump.lines().count(), burger::ROWS);
    assert!(dump.contains("R+p1"));
    assert!(dump.contains("bb1"));
    let s = d.step(&s0, &act(d, burger::place(), &[r, p, b])).unwrap();
    let dump = burger::render_grid(&s, &objs);
    assert!(dump.contains("bb1/p1"), "{dump}");
}
