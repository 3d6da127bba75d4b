//! KitchenLite: a kettle pushed between four burner slots, each burner heated
//! by its linked knob. Burner `z` rises when its knob is on.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use symwm_core::atoms::Pred;
use symwm_core::atoms::Predicate;
use symwm_core::types::{Action, Obj, ObjectRef, ObjectType, Skill, State, TypeHierarchy, Variable};

use crate::{SimError, FAILED};

pub const COLD_Z: f64 = 1.0;
pub const HOT_Z: f64 = 2.18;
/// Accepted knob push angle around vertical.
pub const KNOB_TOLERANCE: f64 = 0.3;
/// Half-width of a burner slot.
pub const SLOT_HALF_WIDTH: f64 = 0.1;
/// Uniform start jitter of the kettle inside its slot.
pub const START_JITTER: f64 = 0.03;

/// Slot centres, indexed by burner number - 1: front-left, back-left,
/// front-right, back-right.
pub const SLOTS: [(f64, f64); 4] = [(0.0, 0.0), (0.0, 0.4), (0.4, 0.0), (0.4, 0.4)];
const GRIPPER_HOME: (f64, f64, f64) = (0.2, -0.3, 1.5);

pub fn types() -> TypeHierarchy {
    TypeHierarchy::new(
        ["gripper", "kettle", "knob", "surface"].map(|t| ObjectType::new(t, Some("object"))),
    )
    .expect("static hierarchy")
}

pub fn turn_on_knob() -> Arc<Skill> {
    Skill::new(
        "TurnOnKnob",
        vec![Variable::new("?g", "gripper"), Variable::new("?kn", "knob")],
        1,
    )
}

pub fn push_kettle() -> Arc<Skill> {
    Skill::new(
        "PushKettleOntoBurner",
        vec![
            Variable::new("?g", "gripper"),
            Variable::new("?k", "kettle"),
            Variable::new("?b", "surface"),
        ],
        3,
    )
}

pub fn skills() -> Vec<Arc<Skill>> {
    vec![turn_on_knob(), push_kettle()]
}

pub fn kettle_boiling() -> Pred {
    Predicate::provided("KettleBoiling", &["kettle", "surface", "knob"])
}

pub fn linked() -> Pred {
    Predicate::provided("KnobAndBurnerLinked", &["knob", "surface"])
}

pub fn objects() -> Vec<Obj> {
    let mut out = vec![ObjectRef::new("gripper", "gripper"), ObjectRef::new("kettle1", "kettle")];
    for i in 1..=4 {
        out.push(ObjectRef::new(format!("burner{i}"), "surface"));
        out.push(ObjectRef::new(format!("knob{i}"), "knob"));
    }
    out
}

fn index(o: &ObjectRef) -> usize {
    o.name
        .trim_start_matches(|c: char| !c.is_ascii_digit())
        .parse()
        .unwrap_or(0)
}

pub fn is_linked(state: &State, knob: &ObjectRef, burner: &ObjectRef) -> bool {
    knob.ty == "knob"
        && burner.ty == "surface"
        && state.hidden_flag(&format!("link/{}/{}", knob.name, burner.name))
}

pub fn knob_on(state: &State, knob: &ObjectRef) -> bool {
    state.hidden_flag(&format!("knob_on/{}", knob.name))
}

fn kettle_xy(state: &State, kettle: &ObjectRef) -> (f64, f64) {
    (
        state.objects.get(kettle, "x").unwrap_or(f64::NAN),
        state.objects.get(kettle, "y").unwrap_or(f64::NAN),
    )
}

fn burner_xy(state: &State, burner: &ObjectRef) -> (f64, f64) {
    (
        state.objects.get(burner, "x").unwrap_or(f64::NAN),
        state.objects.get(burner, "y").unwrap_or(f64::NAN),
    )
}

fn within_slot(p: (f64, f64), slot: (f64, f64)) -> bool {
    (p.0 - slot.0).abs() <= SLOT_HALF_WIDTH && (p.1 - slot.1).abs() <= SLOT_HALF_WIDTH
}

pub fn kettle_on(state: &State, kettle: &ObjectRef, burner: &ObjectRef) -> bool {
    kettle.ty == "kettle" && burner.ty == "surface" && within_slot(kettle_xy(state, kettle), burner_xy(state, burner))
}

/// Kettle argument order follows the predicate signature (kettle, surface, knob).
pub fn concept(name: &str, state: &State, args: &[Obj]) -> Option<bool> {
    Some(match (name, args) {
        ("kettleboiling", [k, b, kn]) => {
            kettle_on(state, k, b) && is_linked(state, kn, b) && knob_on(state, kn)
        }
        ("knobandburnerlinked", [kn, b]) => is_linked(state, kn, b),
        ("kettleboiling" | "knobandburnerlinked", _) => false,
        _ => return None,
    })
}

/// Initial state with the kettle jittered inside burner `start` (1-based).
pub fn initial_state<R: Rng + ?Sized>(start: usize, rng: &mut R) -> (Vec<Obj>, State) {
    let objects = objects();
    let mut state = State {
        images: vec!["kitchen/t000.png".into()],
        ..State::default()
    };
    for o in &objects {
        match o.ty.as_str() {
            "gripper" => {
                state.objects.set(o, "x", GRIPPER_HOME.0);
                state.objects.set(o, "y", GRIPPER_HOME.1);
                state.objects.set(o, "z", GRIPPER_HOME.2);
            }
            "kettle" => {
                let (x, y) = SLOTS[start - 1];
                state.objects.set(o, "x", x + rng.random_range(-START_JITTER..=START_JITTER));
                state.objects.set(o, "y", y + rng.random_range(-START_JITTER..=START_JITTER));
            }
            "surface" => {
                let (x, y) = SLOTS[index(o) - 1];
                state.objects.set(o, "x", x);
                state.objects.set(o, "y", y);
                state.objects.set(o, "z", COLD_Z);
            }
            "knob" => {
                let (x, y) = SLOTS[index(o) - 1];
                state.objects.set(o, "x", x + 0.05);
                state.objects.set(o, "y", -0.2 - y / 4.0);
                state.hidden.insert(format!("knob_on/{}", o.name), 0.0);
                state.hidden.insert(format!("link/{}/burner{}", o.name, index(o)), 1.0);
            }
            _ => unreachable!(),
        }
    }
    state.hidden.insert(FAILED.into(), 0.0);
    (objects, state)
}

pub fn step(state: &State, action: &Action) -> Result<State, SimError> {
    let mut next = state.clone();
    next.timestep += 1;
    next.images = vec![format!("kitchen/t{:03}.png", next.timestep)];
    let o = &action.objects;
    let ok = match action.skill.name.as_str() {
        "TurnOnKnob" => {
            let knob = &o[1];
            let ok = action.theta.len() == 1 && (action.theta[0] - FRAC_PI_2).abs() <= KNOB_TOLERANCE;
            if ok {
                next.hidden.insert(format!("knob_on/{}", knob.name), 1.0);
                let burners: Vec<Obj> = state
                    .objects
                    .objects()
                    .filter(|b| is_linked(state, knob, b))
                    .cloned()
                    .collect();
                for b in burners {
                    next.objects.set(&b, "z", HOT_Z);
                }
            }
            ok
        }
        "PushKettleOntoBurner" => {
            let (kettle, burner) = (&o[1], &o[2]);
            let (x, y) = kettle_xy(state, kettle);
            let ok = action.theta.len() == 3 && {
                let land = (x + action.theta[0], y + action.theta[1]);
                within_slot(land, burner_xy(state, burner))
            };
            if ok {
                next.objects.set(kettle, "x", x + action.theta[0]);
                next.objects.set(kettle, "y", y + action.theta[1]);
            }
            ok
        }
        other => return Err(SimError::UnknownSkill(other.to_string())),
    };
    next.hidden.insert(FAILED.into(), if ok { 0.0 } else { 1.0 });
    Ok(next)
}

/// Ideal parameters for an action in `state`, optionally perturbed.
pub fn expert_theta<R: Rng + ?Sized>(
    state: &State,
    skill: &Skill,
    objects: &[Obj],
    noise: Option<&mut R>,
) -> Vec<f64> {
    let mut theta = match skill.name.as_str() {
        "TurnOnKnob" => vec![FRAC_PI_2],
        "PushKettleOntoBurner" => {
            let (x, y) = kettle_xy(state, &objects[1]);
            let (bx, by) = burner_xy(state, &objects[2]);
            vec![bx - x, by - y, 0.0]
        }
        _ => vec![],
    };
    if let Some(rng) = noise {
        let (sd_angle, sd_push) = (0.05, 0.01);
        for (i, t) in theta.iter_mut().enumerate() {
            let sd = if skill.name == "TurnOnKnob" && i == 0 { sd_angle } else { sd_push };
            *t += Normal::new(0.0, sd).expect("positive sd").sample(rng);
        }
    }
    theta
}
