//! A [`Labeler`] backed by the gateway.

use std::collections::BTreeMap;
use std::sync::Arc;

use symwm_core::atoms::{GroundAtom, KindTag};
use symwm_core::labeling::{LabelBatch, LabelContext, LabelError, Labeler};
use symwm_core::types::State;

use crate::gateway::{Gateway, GatewayError};
use crate::parse::parse_label_response;
use crate::prompts::{build_double_check_prompt, build_label_prompt_t, build_label_prompt_t0, render_labels, PromptError};

/// Double-checking runs only while building training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Training,
    Evaluation,
}

pub struct VlmLabeler {
    gateway: Arc<Gateway>,
    pub mode: Mode,
    pub double_check: bool,
}

impl VlmLabeler {
    pub fn new(gateway: Arc<Gateway>, mode: Mode) -> Self {
        Self {
            gateway,
            mode,
            double_check: true,
        }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }
}

fn prompt_err(e: PromptError) -> LabelError {
    match e {
        PromptError::IncompleteContext => LabelError::IncompleteContext,
        other => LabelError::Fatal(other.to_string()),
    }
}

fn gateway_err(e: GatewayError) -> LabelError {
    match e {
        GatewayError::AuthFailure(_) | GatewayError::MalformedEndpoint(_) => LabelError::Fatal(e.to_string()),
        other => LabelError::LabelerUnavailable(other.to_string()),
    }
}

impl Labeler for VlmLabeler {
    fn identity(&self) -> String {
        format!("vlm-{}-t{}", self.gateway.cfg.model, self.gateway.cfg.temperature)
    }

    fn supports(&self, kind: KindTag) -> bool {
        kind == KindTag::Visual
    }

    fn label_batch(&self, state: &State, atoms: &[GroundAtom], ctx: &LabelContext) -> Result<LabelBatch, LabelError> {
        let size = self.gateway.cfg.batch_size.unwrap_or(atoms.len()).max(1);
        let mut labels = BTreeMap::new();
        let mut raw = Vec::new();
        for chunk in atoms.chunks(size) {
            let bundle = match &ctx.previous {
                None => build_label_prompt_t0(chunk, state),
                Some(_) => build_label_prompt_t(chunk, state, ctx, None),
            }
            .map_err(prompt_err)?;
            let mut text = self.gateway.request(&bundle).map_err(gateway_err)?;
            if let (Mode::Training, true, Some(prev)) = (self.mode, self.double_check, &ctx.previous) {
                let previous = prev.raw_response.clone().unwrap_or_else(|| render_labels(&prev.labels));
                let check = build_double_check_prompt(&bundle, &text, &previous).map_err(prompt_err)?;
                text = self.gateway.request(&check).map_err(gateway_err)?;
            }
            labels.extend(parse_label_response(&text, chunk).labels);
            raw.push(text);
        }
        Ok(LabelBatch {
            labels,
            raw: Some(raw.join("\n")),
        })
    }
}
