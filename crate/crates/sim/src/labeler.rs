//! Programmatic stand-in for a VLM: evaluates the provided predicates and
//! every proposed concept (and its synonyms and antonyms) from the simulator
//! state.

use std::collections::BTreeMap;

use symwm_core::atoms::{GroundAtom, KindTag, Label};
use symwm_core::labeling::{evaluate_feature, LabelBatch, LabelContext, LabelError, Labeler};
use symwm_core::types::State;

use crate::{burger, kitchen, DomainName};

/// A concept with the distractor names the mock proposer may use for it.
pub struct Concept {
    pub name: &'static str,
    pub synonyms: [&'static str; 2],
    pub antonyms: [&'static str; 2],
}

pub const CONCEPTS: [Concept; 5] = [
    Concept { name: "cooked", synonyms: ["grilled", "prepared"], antonyms: ["raw", "uncooked"] },
    Concept { name: "holding", synonyms: ["grasping", "carrying"], antonyms: ["releasing", "dropping"] },
    Concept { name: "on", synonyms: ["atop", "above"], antonyms: ["off", "under"] },
    Concept {
        name: "empty_hands",
        synonyms: ["free_hands", "gripper_empty"],
        antonyms: ["busy_hands", "occupied"],
    },
    Concept { name: "chopped", synonyms: ["cut", "sliced"], antonyms: ["whole", "intact"] },
];

/// Lowercased name without the numeric suffix added when lifting.
pub fn base_name(name: &str) -> String {
    name.to_lowercase().trim_end_matches(|c: char| c.is_ascii_digit()).to_string()
}

/// Resolves a predicate name to (concept, negated).
pub fn resolve(name: &str) -> (String, bool) {
    let base = base_name(name);
    for c in &CONCEPTS {
        if c.synonyms.contains(&base.as_str()) {
            return (c.name.to_string(), false);
        }
        if c.antonyms.contains(&base.as_str()) {
            return (c.name.to_string(), true);
        }
    }
    (base, false)
}

/// Evaluates a non-feature atom in `domain`; `None` when the name is unknown.
pub fn evaluate(domain: DomainName, state: &State, atom: &GroundAtom) -> Option<bool> {
    let (concept, negated) = resolve(&atom.predicate.name);
    let v = if domain.is_burger() {
        burger::concept(&concept, state, &atom.args)
    } else {
        kitchen::concept(&concept, state, &atom.args)
    }?;
    Some(v != negated)
}

#[derive(Debug, Clone, Copy)]
pub struct GroundTruthLabeler {
    pub domain: DomainName,
}

impl GroundTruthLabeler {
    pub fn new(domain: DomainName) -> Self {
        Self { domain }
    }
}

impl Labeler for GroundTruthLabeler {
    fn identity(&self) -> String {
        format!("ground_truth:{}", self.domain.name())
    }

    fn supports(&self, _kind: KindTag) -> bool {
        true
    }

    fn label_batch(
        &self,
        state: &State,
        atoms: &[GroundAtom],
        _ctx: &LabelContext,
    ) -> Result<LabelBatch, LabelError> {
        let mut labels = BTreeMap::new();
        for a in atoms {
            let l = match evaluate_feature(state, a) {
                Some(l) => l,
                None => match evaluate(self.domain, state, a) {
                    Some(b) => Label::from_bool(b),
                    None => {
                        return Err(LabelError::UnsupportedPredicateKind {
                            labeler: self.identity(),
                            predicate: a.predicate.name.clone(),
                            kind: a.predicate.kind.tag(),
                        })
                    }
                },
            };
            labels.insert(a.clone(), l);
        }
        Ok(LabelBatch { labels, raw: None })
    }
}
