//! Structural isomorphism between operator sets, modulo renaming of
//! variables, types, skills and predicates (with argument reordering).

use std::collections::BTreeMap;

use crate::atoms::LiftedAtom;
use crate::operator::Operator;
use crate::types::Variable;

/// Witness of an isomorphism from the left operator set onto the right one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Isomorphism {
    /// left operator index -> right operator index
    pub operators: Vec<usize>,
    /// left predicate name -> (right predicate name, argument permutation)
    pub predicates: BTreeMap<String, (String, Vec<usize>)>,
    pub types: BTreeMap<String, String>,
    pub skills: BTreeMap<String, String>,
}

#[derive(Clone, Default)]
struct Maps {
    preds: BTreeMap<(String, usize), ((String, usize), Vec<usize>)>,
    preds_rev: BTreeMap<(String, usize), (String, usize)>,
    types: BTreeMap<String, String>,
    types_rev: BTreeMap<String, String>,
    skills: BTreeMap<String, String>,
    skills_rev: BTreeMap<String, String>,
}

fn bind(fwd: &mut BTreeMap<String, String>, rev: &mut BTreeMap<String, String>, a: &str, b: &str) -> bool {
    match (fwd.get(a), rev.get(b)) {
        (Some(x), _) => x == b,
        (None, Some(_)) => false,
        (None, None) => {
            fwd.insert(a.to_string(), b.to_string());
            rev.insert(b.to_string(), a.to_string());
            true
        }
    }
}

fn pred_key(a: &LiftedAtom) -> (String, usize) {
    (a.predicate.name.clone(), a.args.len())
}

fn shape(op: &Operator) -> (usize, usize, usize, usize, usize) {
    (
        op.params.len(),
        op.preconditions.len(),
        op.add_effects.len(),
        op.delete_effects.len(),
        op.skill_args.len(),
    )
}

/// Finds an isomorphism between two operator sets if one exists.
pub fn find_isomorphism(left: &[Operator], right: &[Operator]) -> Option<Isomorphism> {
    if left.len() != right.len() {
        return None;
    }
    find_embedding(left, right)
}

pub fn isomorphic(left: &[Operator], right: &[Operator]) -> bool {
    find_isomorphism(left, right).is_some()
}

/// Maps every left operator injectively onto a distinct right operator
/// under one consistent renaming; extra right operators are ignored.
pub fn find_embedding(left: &[Operator], right: &[Operator]) -> Option<Isomorphism> {
    if left.len() > right.len() {
        return None;
    }
    let mut used = vec![false; right.len()];
    let mut assign = Vec::new();
    let maps = match_ops(left, right, 0, &mut used, &mut assign, Maps::default())?;
    Some(Isomorphism {
        operators: assign,
        predicates: maps
            .preds
            .into_iter()
            .map(|((l, _), ((r, _), perm))| (l, (r, perm)))
            .collect(),
        types: maps.types,
        skills: maps.skills,
    })
}

/// True when `right` contains a copy of every operator in `left`.
pub fn embeds(left: &[Operator], right: &[Operator]) -> bool {
    find_embedding(left, right).is_some()
}

fn match_ops(
    left: &[Operator],
    right: &[Operator],
    i: usize,
    used: &mut Vec<bool>,
    assign: &mut Vec<usize>,
    maps: Maps,
) -> Option<Maps> {
    if i == left.len() {
        return Some(maps);
    }
    for j in 0..right.len() {
        if used[j] || shape(&left[i]) != shape(&right[j]) {
            continue;
        }
        let mut m = maps.clone();
        if !bind(&mut m.skills, &mut m.skills_rev, &left[i].skill.name, &right[j].skill.name) {
            continue;
        }
        let mut found = None;
        match_vars(&left[i], &right[j], m, &mut |m| {
            used[j] = true;
            assign.push(j);
            found = match_ops(left, right, i + 1, used, assign, m);
            if found.is_none() {
                used[j] = false;
                assign.pop();
            }
            found.is_some()
        });
        if found.is_some() {
            return found;
        }
    }
    None
}

/// Enumerates variable bijections fixed positionally on skill arguments,
/// then matches the atom sets; `k` continues the outer search and returns
/// true to stop.
fn match_vars(a: &Operator, b: &Operator, maps: Maps, k: &mut dyn FnMut(Maps) -> bool) -> bool {
    let mut vmap: BTreeMap<&Variable, &Variable> = BTreeMap::new();
    let mut vrev: BTreeMap<&Variable, &Variable> = BTreeMap::new();
    let mut m = maps;
    for (x, y) in a.skill_args.iter().zip(&b.skill_args) {
        match (vmap.get(x), vrev.get(y)) {
            (Some(z), _) if *z != y => return false,
            (None, Some(_)) => return false,
            _ => {}
        }
        vmap.insert(x, y);
        vrev.insert(y, x);
        if !bind(&mut m.types, &mut m.types_rev, &x.ty, &y.ty) {
            return false;
        }
    }
    let free: Vec<&Variable> = a.params.iter().filter(|v| !vmap.contains_key(v)).collect();
    let targets: Vec<&Variable> = b.params.iter().filter(|v| !vrev.contains_key(v)).collect();
    if free.len() != targets.len() {
        return false;
    }
    fn rec<'a>(
        i: usize,
        free: &[&'a Variable],
        targets: &[&'a Variable],
        taken: &mut Vec<bool>,
        vmap: &mut BTreeMap<&'a Variable, &'a Variable>,
        m: Maps,
        a: &Operator,
        b: &Operator,
        k: &mut dyn FnMut(Maps) -> bool,
    ) -> bool {
        if i == free.len() {
            let sections = [
                (&a.preconditions, &b.preconditions),
                (&a.add_effects, &b.add_effects),
                (&a.delete_effects, &b.delete_effects),
            ];
            return match_atoms(&sections, 0, 0, &mut vec![false; b.preconditions.len()], vmap, m, k);
        }
        for (j, t) in targets.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let mut m2 = m.clone();
            if !bind(&mut m2.types, &mut m2.types_rev, &free[i].ty, &t.ty) {
                continue;
            }
            taken[j] = true;
            vmap.insert(free[i], t);
            if rec(i + 1, free, targets, taken, vmap, m2, a, b, k) {
                return true;
            }
            vmap.remove(free[i]);
            taken[j] = false;
        }
        false
    }
    let mut taken = vec![false; targets.len()];
    rec(0, &free, &targets, &mut taken, &mut vmap, m, a, b, k)
}

type Section<'a> = (&'a Vec<LiftedAtom>, &'a Vec<LiftedAtom>);

fn match_atoms(
    sections: &[Section],
    s: usize,
    i: usize,
    used: &mut Vec<bool>,
    vmap: &BTreeMap<&Variable, &Variable>,
    m: Maps,
    k: &mut dyn FnMut(Maps) -> bool,
) -> bool {
    if s == sections.len() {
        return k(m);
    }
    let (la, ra) = sections[s];
    if i == la.len() {
        let next_len = sections.get(s + 1).map_or(0, |x| x.1.len());
        return match_atoms(sections, s + 1, 0, &mut vec![false; next_len], vmap, m, k);
    }
    let atom = &la[i];
    let image: Vec<&Variable> = atom.args.iter().map(|v| vmap[v]).collect();
    let key = pred_key(atom);
    for (j, cand) in ra.iter().enumerate() {
        if used[j] || cand.args.len() != image.len() {
            continue;
        }
        // cand.args[p] == image[perm[p]]
        let perm: Option<Vec<usize>> = cand
            .args
            .iter()
            .map(|v| image.iter().position(|w| *w == v))
            .collect();
        let Some(perm) = perm else { continue };
        let ckey = pred_key(cand);
        let mut m2 = m.clone();
        match m2.preds.get(&key) {
            Some((rk, p)) if *rk != ckey || *p != perm => continue,
            Some(_) => {}
            None => {
                if m2.preds_rev.contains_key(&ckey) {
                    continue;
                }
                m2.preds.insert(key.clone(), (ckey.clone(), perm));
                m2.preds_rev.insert(ckey, key.clone());
            }
        }
        used[j] = true;
        if match_atoms(sections, s, i + 1, used, vmap, m2, k) {
            return true;
        }
        used[j] = false;
    }
    false
}
