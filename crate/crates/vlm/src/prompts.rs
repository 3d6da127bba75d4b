//! Prompt construction for labeling and proposal. Pure: equal inputs give
//! byte-identical bundles.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use symwm_core::atoms::{GroundAtom, Label};
use symwm_core::labeling::LabelContext;
use symwm_core::operator::Demonstration;
use symwm_core::types::{Obj, State};

pub const LABEL_T0: &str = include_str!("../templates/label_t0.txt");
pub const LABEL_T: &str = include_str!("../templates/label_t.txt");
pub const DOUBLE_CHECK: &str = include_str!("../templates/double_check.txt");
pub const PROPOSE: &str = include_str!("../templates/propose.txt");

/// Optional restriction some domains add to the proposal prompt.
pub const PROPOSAL_CAP: &str = "Generate only 5-10 predicates.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub heading: String,
    pub path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    User,
    Assistant,
}

/// One earlier message of the conversation, sent before `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub images: Vec<ImageRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub history: Vec<Turn>,
    pub text: String,
    pub images: Vec<ImageRef>,
    /// Atoms the response is expected to label, in prompt order. Not
    /// serialized: the text already names them.
    #[serde(skip)]
    pub atoms: Vec<GroundAtom>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("state at timestep {0} has no image")]
    NoImage(usize),
    #[error("label context must carry previous state, labels and action together")]
    IncompleteContext,
    #[error("nothing to double-check: the previous response is empty")]
    EmptyPrevious,
}

fn images_of(state: &State, heading: &str) -> Vec<ImageRef> {
    state
        .images
        .iter()
        .map(|p| ImageRef {
            heading: heading.to_string(),
            path: p.clone(),
        })
        .collect()
}

fn timestep_images(state: &State) -> Result<Vec<ImageRef>, PromptError> {
    if state.images.is_empty() {
        return Err(PromptError::NoImage(state.timestep));
    }
    Ok(images_of(state, &format!("timestep {}", state.timestep)))
}

fn atom_lines(atoms: &[GroundAtom]) -> String {
    atoms.iter().map(|a| format!("{a}\n")).collect()
}

/// Objects whose descriptor says more than their name, as a trailing block.
fn descriptors(objects: impl IntoIterator<Item = Obj>) -> String {
    let set: BTreeSet<Obj> = objects.into_iter().filter(|o| o.descriptor != o.name && !o.descriptor.is_empty()).collect();
    if set.is_empty() {
        return String::new();
    }
    let mut out = String::from("\nObject descriptions:\n");
    for o in set {
        writeln!(out, "{}: {}", o.name, o.descriptor).unwrap();
    }
    out
}

fn atom_objects(atoms: &[GroundAtom]) -> impl Iterator<Item = Obj> + '_ {
    atoms.iter().flat_map(|a| a.args.iter().cloned())
}

pub fn build_label_prompt_t0(atoms: &[GroundAtom], state: &State) -> Result<PromptBundle, PromptError> {
    Ok(PromptBundle {
        history: vec![],
        text: format!("{LABEL_T0}{}{}", atom_lines(atoms), descriptors(atom_objects(atoms))),
        images: timestep_images(state)?,
        atoms: atoms.to_vec(),
    })
}

/// Previous labels in the response format, for labelers that kept no text.
pub fn render_labels<'a>(labels: impl IntoIterator<Item = (&'a GroundAtom, &'a Label)>) -> String {
    labels
        .into_iter()
        .map(|(a, l)| {
            let v = match l {
                Label::True => "True",
                Label::False => "False",
                Label::Unknown => "Unknown",
            };
            format!("* {a}: {v}.\n")
        })
        .collect()
}

/// `crops` are close-up references appended after the full frames.
pub fn build_label_prompt_t(
    atoms: &[GroundAtom],
    state: &State,
    ctx: &LabelContext,
    crops: Option<&[String]>,
) -> Result<PromptBundle, PromptError> {
    let prev = ctx.previous.as_ref().ok_or(PromptError::IncompleteContext)?;
    let previous_text = match &prev.raw_response {
        Some(r) => r.clone(),
        None => render_labels(&prev.labels),
    };
    let mut images = timestep_images(&prev.state)?;
    images.extend(timestep_images(state)?);
    for c in crops.unwrap_or_default() {
        images.push(ImageRef {
            heading: format!("timestep {} close-up", state.timestep),
            path: c.clone(),
        });
    }
    let text = format!(
        "{LABEL_T}{}\nSkill executed between states: {}\n\nPredicate values in the first scene, before the skill was executed: \n{}{}",
        atom_lines(atoms),
        prev.action,
        previous_text,
        descriptors(atom_objects(atoms).chain(prev.action.objects.iter().cloned())),
    );
    Ok(PromptBundle {
        history: vec![],
        text,
        images,
        atoms: atoms.to_vec(),
    })
}

/// Follow-up turn asking the model to re-check `response` to `original`
/// against the previous timestep's labels.
pub fn build_double_check_prompt(
    original: &PromptBundle,
    response: &str,
    previous_labels: &str,
) -> Result<PromptBundle, PromptError> {
    if response.trim().is_empty() {
        return Err(PromptError::EmptyPrevious);
    }
    let mut history = original.history.clone();
    history.push(Turn {
        role: Role::User,
        text: original.text.clone(),
        images: original.images.clone(),
    });
    history.push(Turn {
        role: Role::Assistant,
        text: response.to_string(),
        images: vec![],
    });
    Ok(PromptBundle {
        history,
        text: format!("{DOUBLE_CHECK}\n\n{previous_labels}"),
        images: vec![],
        atoms: original.atoms.clone(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalPromptConfig {
    /// Append the "5-10 predicates" restriction.
    pub cap: bool,
}

pub fn build_proposal_prompt(demo: &Demonstration, cfg: &ProposalPromptConfig) -> Result<PromptBundle, PromptError> {
    let objs: Vec<&str> = demo.objects.iter().map(|o| o.name.as_str()).collect();
    let mut text = PROPOSE.replace("{objs}", &objs.join(", "));
    if cfg.cap {
        text.push(' ');
        text.push_str(PROPOSAL_CAP);
    }
    text.push_str("\n\nSkills executed in trajectory:\n");
    for a in &demo.actions {
        writeln!(text, "{a}").unwrap();
    }
    text.push_str(&descriptors(demo.objects.iter().cloned()));
    let mut images = Vec::new();
    for s in &demo.states {
        images.extend(timestep_images(s)?);
    }
    Ok(PromptBundle {
        history: vec![],
        text,
        images,
        atoms: vec![],
    })
}
