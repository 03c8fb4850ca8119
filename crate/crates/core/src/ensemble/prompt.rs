//! Prompt templates for the LLM cooperation step.
//!
//! Templates are plain text with `{{name}}` placeholders:
//!
//! - `{{n}}`: number of summaries
//! - `{{summary_1}}` .. `{{summary_n}}`: one summary's text
//! - `{{summaries}}`: all summaries as a numbered block
//!
//! Substitution is a single left-to-right pass, so braces inside summary text
//! are copied through untouched.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CooperateStrategy, SummarySet};
use crate::{Error, Result};

const BUILTIN: &[(&str, &str)] = &[
    ("common_ground_v1", include_str!("../../templates/common_ground_v1.txt")),
    ("merge_v1", include_str!("../../templates/merge_v1.txt")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooperationRequest {
    pub strategy: CooperateStrategy,
    pub prompt_template_id: String,
    pub rendered_prompt: String,
    pub inputs: SummarySet,
}

#[derive(Debug, Clone)]
pub struct TemplateStore {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateStore {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateStore {
    /// The templates shipped in `templates/`.
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(id, text)| (id.to_string(), text.trim_end().to_string()))
            .collect();
        Self { templates }
    }

    /// Built-ins overlaid with every `<id>.txt` found in `dir`.
    pub fn with_dir(dir: &Path) -> Result<Self> {
        let mut store = Self::builtin();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            store.insert(id, text);
        }
        Ok(store)
    }

    pub fn insert(&mut self, id: &str, text: impl AsRef<str>) {
        self.templates
            .insert(id.to_string(), text.as_ref().trim_end().to_string());
    }

    pub fn get(&self, id: &str) -> Result<&str> {
        self.templates
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownTemplate(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

/// Fills the strategy's template (or `template_id`, when given) with the
/// retained summaries.
pub fn render_prompt(
    strategy: CooperateStrategy,
    template_id: Option<&str>,
    retained: &SummarySet,
    store: &TemplateStore,
) -> Result<CooperationRequest> {
    let id = template_id
        .or(strategy.default_template_id())
        .ok_or_else(|| Error::UnknownTemplate(format!("no template for strategy `{strategy}`")))?;
    let template = store.get(id)?;
    if retained.len() < 2 {
        return Err(Error::InvalidSummarySet(format!(
            "cooperation needs at least 2 summaries, got {}",
            retained.len()
        )));
    }
    let rendered = substitute(id, template, retained)?;
    for (i, s) in retained.items().iter().enumerate() {
        if !rendered.contains(&s.text) {
            return Err(Error::TemplateMismatch {
                id: id.to_string(),
                index: i + 1,
                reason: "template has no placeholder for this summary".into(),
            });
        }
    }
    Ok(CooperationRequest {
        strategy,
        prompt_template_id: id.to_string(),
        rendered_prompt: rendered,
        inputs: retained.clone(),
    })
}

fn substitute(id: &str, template: &str, set: &SummarySet) -> Result<String> {
    let texts: Vec<&str> = set.items().iter().map(|s| s.text.as_str()).collect();
    let mut out = String::with_capacity(template.len() + texts.iter().map(|t| t.len() + 16).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else {
            break;
        };
        let name = rest[open + 2..open + 2 + close].trim();
        out.push_str(&rest[..open]);
        match name {
            "n" => out.push_str(&texts.len().to_string()),
            "summaries" => {
                for (i, t) in texts.iter().enumerate() {
                    if i > 0 {
                        out.push_str("\n\n");
                    }
                    out.push_str(&format!("Summary {}:\n", i + 1));
                    out.push_str(t);
                }
            }
            _ => {
                let index = name
                    .strip_prefix("summary_")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| Error::TemplateMismatch {
                        id: id.to_string(),
                        index: 0,
                        reason: format!("unknown placeholder `{name}`"),
                    })?;
                let text = index
                    .checked_sub(1)
                    .and_then(|i| texts.get(i))
                    .ok_or_else(|| Error::TemplateMismatch {
                        id: id.to_string(),
                        index,
                        reason: format!("only {} summaries supplied", texts.len()),
                    })?;
                out.push_str(text);
            }
        }
        rest = &rest[open + 2 + close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}
