//! Burger grid world. Objects sit in stacks on grid cells; the robot carries
//! at most one item. Movement is folded into the skills.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use symwm_core::atoms::{GroundAtom, Pred, Predicate};
use symwm_core::types::{Action, Obj, ObjectRef, ObjectType, Skill, State, TypeHierarchy, Variable};

use crate::{SimError, FAILED};

pub const ROWS: usize = 6;
pub const COLS: usize = 6;
/// `z` of an item in the robot's gripper.
pub const HELD_Z: f64 = -1.0;

const ITEM_TYPES: [&str; 5] = ["patty", "lettuce", "cheese", "bottom_bun", "top_bun"];

pub fn types() -> TypeHierarchy {
    let mut t = vec![
        ObjectType::new("item", Some("object")),
        ObjectType::new("robot", Some("object")),
        ObjectType::new("grill", Some("object")),
        ObjectType::new("cutting_board", Some("object")),
    ];
    t.extend(ITEM_TYPES.iter().map(|n| ObjectType::new(*n, Some("item"))));
    TypeHierarchy::new(t).expect("static hierarchy")
}

fn v(name: &str, ty: &str) -> Variable {
    Variable::new(name, ty)
}

pub fn pick() -> Arc<Skill> {
    Skill::new("Pick", vec![v("?r", "robot"), v("?i", "item")], 0)
}

pub fn place() -> Arc<Skill> {
    Skill::new("Place", vec![v("?r", "robot"), v("?i", "item"), v("?o", "object")], 0)
}

pub fn cook() -> Arc<Skill> {
    Skill::new("Cook", vec![v("?r", "robot"), v("?p", "patty"), v("?g", "grill")], 0)
}

pub fn chop() -> Arc<Skill> {
    Skill::new("Chop", vec![v("?r", "robot"), v("?l", "lettuce"), v("?c", "cutting_board")], 0)
}

pub fn skills() -> Vec<Arc<Skill>> {
    vec![pick(), place(), cook(), chop()]
}

pub fn on() -> Pred {
    Predicate::provided("On", &["object", "object"])
}
pub fn on_ground() -> Pred {
    Predicate::provided("OnGround", &["object"])
}
pub fn clear() -> Pred {
    Predicate::provided("Clear", &["object"])
}
pub fn holding() -> Pred {
    Predicate::provided("Holding", &["robot", "item"])
}
pub fn saap(upper: &str, lower: &str) -> Pred {
    Predicate::provided("SomewhereAboveAndPrepped", &[upper, lower])
}
pub fn raap(lower: &str) -> Pred {
    Predicate::provided("RightAboveAndPrepped", &["patty", lower])
}

pub fn is_item(o: &ObjectRef) -> bool {
    ITEM_TYPES.contains(&o.ty.as_str())
}

fn f(state: &State, o: &ObjectRef, feat: &str) -> f64 {
    state.objects.get(o, feat).unwrap_or(f64::NAN)
}

fn z(state: &State, o: &ObjectRef) -> i64 {
    f(state, o, "z").round() as i64
}

fn cell(state: &State, o: &ObjectRef) -> (i64, i64) {
    (f(state, o, "row").round() as i64, f(state, o, "col").round() as i64)
}

pub fn is_held(state: &State, o: &ObjectRef) -> bool {
    o.ty != "robot" && f(state, o, "z") < -0.5
}

fn in_stack(state: &State, o: &ObjectRef) -> bool {
    o.ty != "robot" && !is_held(state, o)
}

/// `a` rests directly on `b`.
pub fn directly_atop(state: &State, a: &ObjectRef, b: &ObjectRef) -> bool {
    a != b
        && is_item(a)
        && in_stack(state, a)
        && in_stack(state, b)
        && cell(state, a) == cell(state, b)
        && z(state, a) == z(state, b) + 1
}

pub fn somewhere_above(state: &State, a: &ObjectRef, b: &ObjectRef) -> bool {
    a != b
        && is_item(a)
        && in_stack(state, a)
        && in_stack(state, b)
        && cell(state, a) == cell(state, b)
        && z(state, a) > z(state, b)
}

/// Nothing rests on `o`. The robot is always clear; a held item is not.
pub fn is_clear(state: &State, o: &ObjectRef) -> bool {
    if o.ty == "robot" {
        return true;
    }
    if is_held(state, o) {
        return false;
    }
    !state.objects.objects().any(|x| directly_atop(state, x, o))
}

/// Only items can be on the ground; fixtures such as the grill are not.
pub fn is_on_ground(state: &State, o: &ObjectRef) -> bool {
    is_item(o) && in_stack(state, o) && z(state, o) == 0
}

pub fn held_item(state: &State) -> Option<&Obj> {
    state.objects.objects().find(|o| is_held(state, o))
}

pub fn is_prepped(state: &State, o: &ObjectRef) -> bool {
    match o.ty.as_str() {
        "patty" => state.hidden_flag(&format!("cooked/{}", o.name)),
        "lettuce" => state.hidden_flag(&format!("chopped/{}", o.name)),
        _ => false,
    }
}

/// Evaluates a Burger concept on arguments; `None` when the name is unknown.
pub fn concept(name: &str, state: &State, args: &[Obj]) -> Option<bool> {
    let a = |i: usize| args.get(i).map(|o| o.as_ref());
    let arity = |n: usize| args.len() == n;
    Some(match name {
        "on" => arity(2) && directly_atop(state, a(0)?, a(1)?),
        "onground" => arity(1) && is_on_ground(state, a(0)?),
        "clear" => arity(1) && is_clear(state, a(0)?),
        "holding" => arity(2) && a(0)?.ty == "robot" && is_held(state, a(1)?),
        "somewhereaboveandprepped" => {
            arity(2) && somewhere_above(state, a(0)?, a(1)?) && is_prepped(state, a(0)?)
        }
        "rightaboveandprepped" => {
            arity(2) && directly_atop(state, a(0)?, a(1)?) && is_prepped(state, a(0)?)
        }
        "cooked" => arity(1) && a(0)?.ty == "patty" && is_prepped(state, a(0)?),
        "chopped" => arity(1) && a(0)?.ty == "lettuce" && is_prepped(state, a(0)?),
        "empty_hands" => arity(1) && a(0)?.ty == "robot" && held_item(state).is_none(),
        _ => return None,
    })
}

const DIRS: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

/// Moves the robot next to `target`'s cell, facing it.
fn approach(state: &mut State, robot: &Obj, target: (i64, i64)) {
    for (d, (dr, dc)) in DIRS.iter().enumerate() {
        let (r, c) = (target.0 - dr, target.1 - dc);
        if (0..ROWS as i64).contains(&r) && (0..COLS as i64).contains(&c) {
            state.objects.set(robot, "row", r as f64);
            state.objects.set(robot, "col", c as f64);
            state.objects.set(robot, "dir", d as f64);
            return;
        }
    }
}

/// Deterministic transition. Infeasible skills leave the state unchanged
/// apart from the timestep and the failed flag.
pub fn step(state: &State, action: &Action) -> Result<State, SimError> {
    let mut next = state.clone();
    next.timestep += 1;
    next.images = vec![format!("burger/t{:03}.png", next.timestep)];
    let o = &action.objects;
    let ok = match action.skill.name.as_str() {
        "Pick" => {
            let (r, i) = (&o[0], &o[1]);
            let ok = held_item(state).is_none() && is_item(i) && is_clear(state, i);
            if ok {
                let target = cell(state, i);
                approach(&mut next, r, target);
                let (rr, rc) = (f(&next, r, "row"), f(&next, r, "col"));
                next.objects.set(i, "z", HELD_Z);
                next.objects.set(i, "row", rr);
                next.objects.set(i, "col", rc);
                next.objects.set(r, "fingers", 1.0);
            }
            ok
        }
        "Place" => {
            let (r, i, t) = (&o[0], &o[1], &o[2]);
            let ok = is_held(state, i) && t != i && t.ty != "robot" && is_clear(state, t);
            if ok {
                let target = cell(state, t);
                approach(&mut next, r, target);
                next.objects.set(i, "row", target.0 as f64);
                next.objects.set(i, "col", target.1 as f64);
                next.objects.set(i, "z", (z(state, t) + 1) as f64);
                next.objects.set(r, "fingers", 0.0);
            }
            ok
        }
        "Cook" | "Chop" => {
            let (r, x, base) = (&o[0], &o[1], &o[2]);
            let ok = directly_atop(state, x, base);
            if ok {
                approach(&mut next, r, cell(state, base));
                let key = if action.skill.name == "Cook" { "cooked" } else { "chopped" };
                next.hidden.insert(format!("{key}/{}", x.name), 1.0);
            }
            ok
        }
        other => return Err(SimError::UnknownSkill(other.to_string())),
    };
    if !ok {
        next.objects = state.objects.clone();
        next.hidden = state.hidden.clone();
    }
    next.hidden.insert(FAILED.into(), if ok { 0.0 } else { 1.0 });
    Ok(next)
}

/// Object counts and start configuration of one episode.
#[derive(Debug, Clone, Default)]
pub struct SceneSpec {
    pub patties: usize,
    pub bottom_buns: usize,
    pub top_buns: usize,
    pub lettuces: usize,
    pub grill: bool,
    pub cutting_board: bool,
    /// Name of an item that starts in the gripper.
    pub held: Option<String>,
}

pub fn obj(name: &str, ty: &str) -> Obj {
    ObjectRef::new(name, ty)
}

/// Objects of the scene in a fixed order.
pub fn scene_objects(spec: &SceneSpec) -> Vec<Obj> {
    let mut out = Vec::new();
    let mut add = |n: usize, ty: &str| {
        for i in 1..=n {
            out.push(obj(&format!("{ty}{i}"), ty));
        }
    };
    add(spec.patties, "patty");
    add(spec.lettuces, "lettuce");
    add(spec.bottom_buns, "bottom_bun");
    add(spec.top_buns, "top_bun");
    if spec.grill {
        out.push(obj("grill", "grill"));
    }
    if spec.cutting_board {
        out.push(obj("cutting_board", "cutting_board"));
    }
    out.push(obj("robot", "robot"));
    out
}

/// Random placement: every grounded object gets its own cell.
pub fn scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> (Vec<Obj>, State) {
    let objects = scene_objects(spec);
    let mut cells: Vec<(usize, usize)> = (0..ROWS).flat_map(|r| (0..COLS).map(move |c| (r, c))).collect();
    cells.shuffle(rng);
    let mut cells = cells.into_iter();
    let mut state = State {
        images: vec!["burger/t000.png".into()],
        ..State::default()
    };
    let robot_cell = cells.next().expect("grid has free cells");
    for o in &objects {
        if o.ty == "robot" {
            state.objects.set(o, "row", robot_cell.0 as f64);
            state.objects.set(o, "col", robot_cell.1 as f64);
            state.objects.set(o, "fingers", if spec.held.is_some() { 1.0 } else { 0.0 });
            state.objects.set(o, "dir", 0.0);
        } else if spec.held.as_deref() == Some(o.name.as_str()) {
            state.objects.set(o, "row", robot_cell.0 as f64);
            state.objects.set(o, "col", robot_cell.1 as f64);
            state.objects.set(o, "z", HELD_Z);
        } else {
            let (r, c) = cells.next().expect("grid too small for scene");
            state.objects.set(o, "row", r as f64);
            state.objects.set(o, "col", c as f64);
            state.objects.set(o, "z", 0.0);
        }
    }
    state.hidden.insert(FAILED.into(), 0.0);
    (objects, state)
}

/// Finds an object by name; panics on scripting errors.
pub fn find<'a>(objects: &'a [Obj], name: &str) -> &'a Obj {
    objects
        .iter()
        .find(|o| o.name == name)
        .unwrap_or_else(|| panic!("scene has no object {name}"))
}

/// Expert scripts as (skill, object names).
pub type Script = Vec<(Arc<Skill>, Vec<String>)>;

fn s(skill: Arc<Skill>, args: &[&str]) -> (Arc<Skill>, Vec<String>) {
    (skill, args.iter().map(|a| a.to_string()).collect())
}

/// Cook a patty on the grill and end up holding it.
pub fn cook_and_pick(script: &mut Script, patty: &str, already_held: bool) {
    if !already_held {
        script.push(s(pick(), &["robot", patty]));
    }
    script.push(s(place(), &["robot", patty, "grill"]));
    script.push(s(cook(), &["robot", patty, "grill"]));
    script.push(s(pick(), &["robot", patty]));
}

/// Chop a lettuce on the board and end up holding it.
pub fn chop_and_pick(script: &mut Script, lettuce: &str) {
    script.push(s(pick(), &["robot", lettuce]));
    script.push(s(place(), &["robot", lettuce, "cutting_board"]));
    script.push(s(chop(), &["robot", lettuce, "cutting_board"]));
    script.push(s(pick(), &["robot", lettuce]));
}

pub fn put(script: &mut Script, item: &str, target: &str) {
    script.push(s(place(), &["robot", item, target]));
}

pub fn pick_up(script: &mut Script, item: &str) {
    script.push(s(pick(), &["robot", item]));
}

pub fn atom(p: &Pred, objects: &[Obj], names: &[&str]) -> GroundAtom {
    GroundAtom::new_unchecked(p.clone(), names.iter().map(|n| find(objects, n).clone()).collect())
}

/// Goal-atom builder: `(predicate, argument names)` pairs.
pub fn goal(objects: &[Obj], atoms: &[(Pred, Vec<String>)]) -> BTreeSet<GroundAtom> {
    atoms
        .iter()
        .map(|(p, names)| {
            let n: Vec<&str> = names.iter().map(String::as_str).collect();
            atom(p, objects, &n)
        })
        .collect()
}

fn short(o: &Obj) -> String {
    let digits: String = o.name.chars().filter(char::is_ascii_digit).collect();
    let initials: String = o.ty.split('_').filter_map(|w| w.chars().next()).collect();
    if digits.is_empty() {
        initials.to_uppercase()
    } else {
        format!("{initials}{digits}")
    }
}

/// ASCII grid for debugging. Each cell lists its stack bottom-up; `R` is the
/// robot and `R+x` the robot holding `x`.
pub fn render_grid(state: &State, objects: &[Obj]) -> String {
    let mut cells = vec![vec![Vec::<String>::new(); COLS]; ROWS];
    let mut stacked: Vec<(i64, &Obj)> = objects
        .iter()
        .filter(|o| o.ty != "robot" && !is_held(state, o))
        .map(|o| (z(state, o), o))
        .collect();
    stacked.sort_by_key(|(z, o)| (*z, o.name.clone()));
    for (_, o) in stacked {
        let (r, c) = cell(state, o);
        cells[r as usize][c as usize].push(short(o));
    }
    for r in objects.iter().filter(|o| o.ty == "robot") {
        let (row, col) = cell(state, r);
        let label = match held_item(state) {
            Some(h) => format!("R+{}", short(h)),
            None => "R".to_string(),
        };
        cells[row as usize][col as usize].push(label);
    }
    let text: Vec<Vec<String>> = cells
        .iter()
        .map(|row| row.iter().map(|c| if c.is_empty() { ".".into() } else { c.join("/") }).collect())
        .collect();
    let width = text.iter().flatten().map(String::len).max().unwrap_or(1);
    text.iter()
        .map(|row| row.iter().map(|c| format!("{c:<width$}")).collect::<Vec<_>>().join(" ").trim_end().to_string() + "\n")
        .collect()
}
