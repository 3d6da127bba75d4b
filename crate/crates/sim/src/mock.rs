//! Deterministic proposer that answers like a VLM asked for relevant atoms
//! with synonyms and antonyms.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symwm_core::operator::Demonstration;
use symwm_core::types::{Obj, State};

use crate::burger;
use crate::labeler::CONCEPTS;
use crate::DomainName;

/// Ground concept atom rendered as `(concept, args)`.
type ConceptAtom = (&'static str, Vec<Obj>);

fn concept_atoms(state: &State, objects: &[Obj]) -> BTreeSet<(String, Vec<String>)> {
    let mut out = BTreeSet::new();
    let robots: Vec<&Obj> = objects.iter().filter(|o| o.ty == "robot").collect();
    let items: Vec<&Obj> = objects.iter().filter(|o| burger::is_item(o)).collect();
    let mut cands: Vec<ConceptAtom> = Vec::new();
    for o in objects {
        match o.ty.as_str() {
            "patty" => cands.push(("cooked", vec![o.clone()])),
            "lettuce" => cands.push(("chopped", vec![o.clone()])),
            _ => {}
        }
    }
    for r in &robots {
        cands.push(("empty_hands", vec![(*r).clone()]));
        for i in &items {
            cands.push(("holding", vec![(*r).clone(), (*i).clone()]));
        }
    }
    for i in &items {
        for o in objects.iter().filter(|o| o.ty != "robot" && o != i) {
            cands.push(("on", vec![(*i).clone(), o.clone()]));
        }
    }
    for (name, args) in cands {
        if burger::concept(name, state, &args) == Some(true) {
            out.insert((name.to_string(), args.iter().map(|o| o.name.clone()).collect()));
        }
    }
    out
}

fn render(name: &str, args: &[String]) -> String {
    format!("{name}({})", args.join(", "))
}

/// Proposal text for one demonstration. `junk` atoms name objects that do
/// not exist, so a parser must reject them. Kitchen has no visual concepts
/// and yields an empty response body.
pub fn mock_propose(
    domain: DomainName,
    demo: &Demonstration,
    k_synonyms: usize,
    k_antonyms: usize,
    junk: usize,
    seed: u64,
) -> String {
    let mut out = String::from("**Predicates for Each Action**\n\n");
    if !domain.is_burger() {
        return out;
    }
    // The concept table carries two synonyms and two antonyms per concept.
    let related = |name: &str, args: &[String]| -> (Vec<String>, Vec<String>) {
        let c = CONCEPTS.iter().find(|c| c.name == name).expect("known concept");
        (
            c.synonyms.iter().take(k_synonyms).map(|s| render(s, args)).collect(),
            c.antonyms.iter().take(k_antonyms).map(|s| render(s, args)).collect(),
        )
    };
    let mut mentioned: BTreeSet<(String, Vec<String>)> = BTreeSet::new();
    for (t, action) in demo.actions.iter().enumerate() {
        let before = concept_atoms(&demo.states[t], &demo.objects);
        let after = concept_atoms(&demo.states[t + 1], &demo.objects);
        let lost: Vec<_> = before.difference(&after).cloned().collect();
        let gained: Vec<_> = after.difference(&before).cloned().collect();
        writeln!(out, "{}. **{}**", t + 1, action).unwrap();
        let list = |v: &[(String, Vec<String>)]| -> String {
            if v.is_empty() {
                "none".into()
            } else {
                v.iter().map(|(n, a)| render(n, a)).collect::<Vec<_>>().join(", ")
            }
        };
        writeln!(out, "    - Before: {}", list(&lost)).unwrap();
        writeln!(out, "    - After: {}", list(&gained)).unwrap();
        let (mut syn, mut ant) = (Vec::new(), Vec::new());
        for (n, a) in lost.iter().chain(&gained) {
            let (s, x) = related(n, a);
            syn.extend(s);
            ant.extend(x);
        }
        if !syn.is_empty() {
            writeln!(out, "    - Synonyms: {}", syn.join(", ")).unwrap();
        }
        if !ant.is_empty() {
            writeln!(out, "    - Antonyms: {}", ant.join(", ")).unwrap();
        }
        out.push('\n');
        mentioned.extend(lost);
        mentioned.extend(gained);
    }
    let unchanged: Vec<_> = concept_atoms(&demo.states[0], &demo.objects)
        .into_iter()
        .filter(|a| !mentioned.contains(a))
        .collect();
    if !unchanged.is_empty() {
        out.push_str("**Other Relevant Predicates**\n\n");
        for (n, a) in &unchanged {
            let (s, x) = related(n, a);
            let all: Vec<String> = std::iter::once(render(n, a)).chain(s).chain(x).collect();
            writeln!(out, "- {}", all.join(", ")).unwrap();
        }
        out.push('\n');
    }
    if junk > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.push_str("**Possibly Relevant**\n\n");
        for i in 0..junk {
            let real = &demo.objects[rng.random_range(0..demo.objects.len())];
            let n = CONCEPTS[rng.random_range(0..CONCEPTS.len())].name;
            writeln!(out, "- {}", render(n, &[real.name.clone(), format!("phantom{i}")])).unwrap();
        }
    }
    out
}
