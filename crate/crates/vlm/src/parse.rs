//! Extracts `* <atom>: <True|False|Unknown>. <explanation>` lines.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use symwm_core::atoms::{GroundAtom, Label};

fn bullet() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*(?:[*\-•]|\d+\.)\s*(.+?)\s*:\s*\**\s*(true|false|unknown)\b").unwrap())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLabels {
    /// One entry per expected atom.
    pub labels: BTreeMap<GroundAtom, Label>,
    /// Bulleted lines that named no expected atom, plus repeats.
    pub unparsed: Vec<String>,
}

/// Lowercase, no whitespace, hyphens folded into underscores, stray
/// backslashes and emphasis markers dropped.
pub fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != '\\' && *c != '*' && *c != '`')
        .map(|c| if c == '-' { '_' } else { c.to_ascii_lowercase() })
        .collect()
}

pub fn parse_label_response(text: &str, expected: &[GroundAtom]) -> ParsedLabels {
    let keys: HashMap<String, &GroundAtom> = expected.iter().map(|a| (normalize(&a.to_string()), a)).collect();
    let mut out = ParsedLabels::default();
    for line in text.lines() {
        let Some(c) = bullet().captures(line) else {
            continue;
        };
        let label = match c[2].to_ascii_lowercase().as_str() {
            "true" => Label::True,
            "false" => Label::False,
            _ => Label::Unknown,
        };
        match keys.get(&normalize(&c[1])) {
            Some(a) if !out.labels.contains_key(*a) => {
                out.labels.insert((*a).clone(), label);
            }
            _ => out.unparsed.push(line.to_string()),
        }
    }
    for a in expected {
        out.labels.entry(a.clone()).or_insert(Label::Unknown);
    }
    out
}
