//! Training compositions and test families per domain.

use rand_chacha::ChaCha8Rng;
use symwm_core::atoms::Pred;

use crate::burger::{self, *};
use crate::kitchen;
use crate::{DomainName, Episode};

type GoalSpec = Vec<(Pred, Vec<String>)>;

fn g(p: Pred, args: &[&str]) -> (Pred, Vec<String>) {
    (p, args.iter().map(|a| a.to_string()).collect())
}

fn episode(spec: &SceneSpec, goal: GoalSpec, script: Script, rng: &mut ChaCha8Rng) -> Episode {
    let (objects, init) = scene(spec, rng);
    let goal = burger::goal(&objects, &goal);
    Episode {
        objects,
        init,
        goal,
        script,
    }
}

fn name(ty: &str, i: usize) -> String {
    format!("{ty}{i}")
}

/// Cooked patty `k` on bottom bun `k`, optionally closed by top bun `k`.
fn burger_k(script: &mut Script, goal: &mut GoalSpec, k: usize, top: bool, patty_held: bool) {
    let (p, b, t) = (name("patty", k), name("bottom_bun", k), name("top_bun", k));
    cook_and_pick(script, &p, patty_held);
    put(script, &p, &b);
    goal.push(g(saap("patty", "bottom_bun"), &[&p, &b]));
    if top {
        pick_up(script, &t);
        put(script, &t, &p);
        goal.push(g(on(), &[&t, &p]));
    }
}

fn burgers(n: usize, top: bool, held_first: bool, rng: &mut ChaCha8Rng) -> Episode {
    let spec = SceneSpec {
        patties: n,
        bottom_buns: n,
        top_buns: if top { n } else { 0 },
        grill: true,
        held: held_first.then(|| "patty1".to_string()),
        ..SceneSpec::default()
    };
    let (mut script, mut goal) = (Script::new(), GoalSpec::new());
    for k in 1..=n {
        burger_k(&mut script, &mut goal, k, top, held_first && k == 1);
    }
    episode(&spec, goal, script, rng)
}

fn kitchen_episode(start: usize, target: usize, rng: &mut ChaCha8Rng) -> Episode {
    let (objects, init) = kitchen::initial_state(start, rng);
    let (b, kn) = (format!("burner{target}"), format!("knob{target}"));
    let goal = burger::goal(&objects, &[g(kitchen::kettle_boiling(), &["kettle1", &b, &kn])]);
    let script = vec![
        (kitchen::turn_on_knob(), vec!["gripper".to_string(), kn.clone()]),
        (kitchen::push_kettle(), vec!["gripper".into(), "kettle1".into(), b.clone()]),
    ];
    Episode {
        objects,
        init,
        goal,
        script,
    }
}

/// Demonstration `i` of `n`.
pub fn train(domain: DomainName, i: usize, n: usize, rng: &mut ChaCha8Rng) -> Episode {
    match domain {
        // One two-burger demonstration, the rest single burgers.
        DomainName::MoreStacks => burgers(if n >= 2 && i == n - 1 { 2 } else { 1 }, true, false, rng),
        DomainName::BiggerBurger => match i % 3 {
            0 => burgers(1, true, false, rng),
            variant => {
                let spec = SceneSpec {
                    patties: 2,
                    grill: true,
                    cutting_board: true,
                    ..SceneSpec::default()
                };
                let mut script = Script::new();
                let goal = if variant == 1 {
                    cook_and_pick(&mut script, "patty1", false);
                    put(&mut script, "patty1", "cutting_board");
                    cook_and_pick(&mut script, "patty2", false);
                    put(&mut script, "patty2", "patty1");
                    vec![
                        g(raap("cutting_board"), &["patty1", "cutting_board"]),
                        g(raap("patty"), &["patty2", "patty1"]),
                    ]
                } else {
                    cook_and_pick(&mut script, "patty2", false);
                    put(&mut script, "patty2", "cutting_board");
                    pick_up(&mut script, "patty1");
                    put(&mut script, "patty1", "grill");
                    script.push((cook(), vec!["robot".into(), "patty1".into(), "grill".into()]));
                    pick_up(&mut script, "patty2");
                    put(&mut script, "patty2", "patty1");
                    vec![
                        g(raap("grill"), &["patty1", "grill"]),
                        g(raap("patty"), &["patty2", "patty1"]),
                    ]
                };
                episode(&spec, goal, script, rng)
            }
        },
        DomainName::ComboBurger => match i % 4 {
            0 => burgers(1, true, false, rng),
            1 => {
                let spec = SceneSpec {
                    lettuces: 1,
                    bottom_buns: 1,
                    top_buns: 1,
                    cutting_board: true,
                    ..SceneSpec::default()
                };
                let mut script = Script::new();
                chop_and_pick(&mut script, "lettuce1");
                put(&mut script, "lettuce1", "bottom_bun1");
                pick_up(&mut script, "top_bun1");
                put(&mut script, "top_bun1", "lettuce1");
                let goal = vec![
                    g(saap("lettuce", "bottom_bun"), &["lettuce1", "bottom_bun1"]),
                    g(on(), &["top_bun1", "lettuce1"]),
                ];
                episode(&spec, goal, script, rng)
            }
            variant => {
                let spec = SceneSpec {
                    patties: 1,
                    lettuces: 1,
                    grill: true,
                    cutting_board: true,
                    ..SceneSpec::default()
                };
                let mut script = Script::new();
                let mut goal = vec![g(saap("lettuce", "patty"), &["lettuce1", "patty1"])];
                if variant == 3 {
                    pick_up(&mut script, "patty1");
                    put(&mut script, "patty1", "grill");
                    goal.push(g(on(), &["patty1", "grill"]));
                }
                chop_and_pick(&mut script, "lettuce1");
                put(&mut script, "lettuce1", "patty1");
                episode(&spec, goal, script, rng)
            }
        },
        DomainName::Kitchen => kitchen_episode(1, 2, rng),
    }
}

/// Test task for `seed`; odd seeds start with a raw patty in the gripper.
pub fn test(domain: DomainName, seed: u64, rng: &mut ChaCha8Rng) -> Episode {
    let held = seed % 2 == 1;
    match domain {
        DomainName::MoreStacks => burgers(if held { 6 } else { 5 }, false, held, rng),
        DomainName::BiggerBurger => {
            let spec = SceneSpec {
                patties: if held { 3 } else { 2 },
                bottom_buns: if held { 2 } else { 1 },
                top_buns: 1,
                grill: true,
                held: held.then(|| "patty3".to_string()),
                ..SceneSpec::default()
            };
            let mut script = Script::new();
            let mut goal = GoalSpec::new();
            if held {
                cook_and_pick(&mut script, "patty3", true);
                put(&mut script, "patty3", "bottom_bun2");
                goal.push(g(saap("patty", "bottom_bun"), &["patty3", "bottom_bun2"]));
            }
            cook_and_pick(&mut script, "patty1", false);
            put(&mut script, "patty1", "bottom_bun1");
            cook_and_pick(&mut script, "patty2", false);
            put(&mut script, "patty2", "patty1");
            pick_up(&mut script, "top_bun1");
            put(&mut script, "top_bun1", "patty2");
            goal.extend([
                g(saap("patty", "bottom_bun"), &["patty1", "bottom_bun1"]),
                g(saap("patty", "bottom_bun"), &["patty2", "bottom_bun1"]),
                g(raap("patty"), &["patty2", "patty1"]),
                g(on(), &["top_bun1", "patty2"]),
            ]);
            episode(&spec, goal, script, rng)
        }
        DomainName::ComboBurger => {
            let n = if held { 3 } else { 2 };
            let spec = SceneSpec {
                patties: n,
                lettuces: 2,
                bottom_buns: n,
                top_buns: n,
                grill: true,
                cutting_board: true,
                held: held.then(|| "patty3".to_string()),
                ..SceneSpec::default()
            };
            let mut script = Script::new();
            let mut goal = GoalSpec::new();
            if held {
                burger_k(&mut script, &mut goal, 3, true, true);
            }
            for k in 1..=2 {
                let (p, l, b, t) = (name("patty", k), name("lettuce", k), name("bottom_bun", k), name("top_bun", k));
                cook_and_pick(&mut script, &p, false);
                put(&mut script, &p, &b);
                chop_and_pick(&mut script, &l);
                put(&mut script, &l, &p);
                pick_up(&mut script, &t);
                put(&mut script, &t, &l);
                goal.extend([
                    g(saap("patty", "bottom_bun"), &[&p, &b]),
                    g(saap("lettuce", "patty"), &[&l, &p]),
                    g(on(), &[&t, &l]),
                ]);
            }
            episode(&spec, goal, script, rng)
        }
        DomainName::Kitchen => kitchen_episode(3, 4, rng),
    }
}
