use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symwm_core::types::{Action, Obj, State};
use symwm_sim::burger::{self, SceneSpec};
use symwm_sim::{DomainName, FAILED};

fn spec() -> SceneSpec {
    SceneSpec {
        patties: 2,
        lettuces: 1,
        bottom_buns: 1,
        top_buns: 1,
        grill: true,
        cutting_board: true,
        held: None,
    }
}

fn all_actions(objs: &[Obj]) -> Vec<Action> {
    let types = DomainName::ComboBurger.types();
    let robot = burger::find(objs, "robot");
    let mut out = Vec::new();
    for skill in burger::skills() {
        let params = &skill.params;
        let cands: Vec<Vec<&Obj>> = params
            .iter()
            .map(|p| objs.iter().filter(|o| types.is_subtype(&o.ty, &p.ty)).collect())
            .collect();
        match cands.len() {
            2 => {
                for x in &cands[1] {
                    out.push(Action::new(skill.clone(), vec![robot.clone(), (*x).clone()], vec![], &types).unwrap());
                }
            }
            3 => {
                for x in &cands[1] {
                    for y in &cands[2] {
                        if x != y {
                            let objects = vec![robot.clone(), (*x).clone(), (*y).clone()];
                            out.push(Action::new(skill.clone(), objects, vec![], &types).unwrap());
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    out
}

fn check_invariants(s: &State, objs: &[Obj]) -> Result<(), TestCaseError> {
    let held: Vec<&Obj> = objs.iter().filter(|o| burger::is_held(s, o)).collect();
    prop_assert!(held.len() <= 1);
    let robot = burger::find(objs, "robot");
    prop_assert_eq!(s.objects.get(robot, "fingers") == Some(1.0), held.len() == 1);
    let mut stacks: BTreeMap<(i64, i64), Vec<i64>> = BTreeMap::new();
    for o in objs.iter().filter(|o| o.ty != "robot" && !burger::is_held(s, o)) {
        let cell = (
            s.objects.get(o, "row").unwrap() as i64,
            s.objects.get(o, "col").unwrap() as i64,
        );
        stacks.entry(cell).or_default().push(s.objects.get(o, "z").unwrap() as i64);
    }
    for (cell, mut zs) in stacks {
        zs.sort_unstable();
        let want: Vec<i64> = (0..zs.len() as i64).collect();
        prop_assert_eq!(zs, want, "stack at {:?} is not contiguous", cell);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_skill_sequences_keep_the_world_consistent(
        seed in 0u64..1000,
        picks in prop::collection::vec(0usize..10_000, 1..40),
    ) {
        let (objs, s0) = burger::scene(&spec(), &mut ChaCha8Rng::seed_from_u64(seed));
        let actions = all_actions(&objs);
        let d = DomainName::ComboBurger;
        let mut s = s0;
        check_invariants(&s, &objs)?;
        for i in picks {
            let a = &actions[i % actions.len()];
            let next = d.step(&s, a).unwrap();
            prop_assert_eq!(next.timestep, s.timestep + 1);
            if next.hidden_flag(FAILED) {
                prop_assert_eq!(&next.objects, &s.objects);
            }
            // Preparation is permanent.
            for o in &objs {
                if burger::is_prepped(&s, o) {
                    prop_assert!(burger::is_prepped(&next, o));
                }
            }
            check_invariants(&next, &objs)?;
            // Same state and action, same successor.
            prop_assert_eq!(&d.step(&s, a).unwrap(), &next);
            s = next;
        }
    }
}
