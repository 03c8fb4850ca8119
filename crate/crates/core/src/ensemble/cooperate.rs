use serde::{Deserialize, Serialize};

use super::{argmax, render_prompt, CooperateStrategy, Summary, SummarySet, TemplateStore};
use crate::providers::ChatClient;
use crate::{Error, Result};

pub const FUSED_EXPERT_ID: &str = "fused";

/// The cooperation result plus what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedSummary {
    pub summary: Summary,
    pub strategy: CooperateStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_expert: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_model: Option<String>,
}

/// Fuses the retained summaries into one.
///
/// `Select` never calls the LLM; it returns the retained summary with the
/// highest filter score. The other strategies send one rendered prompt and
/// wrap the trimmed reply as a summary with expert id `fused`.
pub fn cooperate(
    strategy: CooperateStrategy,
    template_id: Option<&str>,
    retained: &SummarySet,
    llm: &dyn ChatClient,
    templates: &TemplateStore,
) -> Result<FusedSummary> {
    if strategy == CooperateStrategy::Select {
        let scores = retained.scores().ok_or(Error::MissingScores)?;
        let best = argmax(scores).ok_or(Error::MissingScores)?;
        let chosen = retained.items()[best].clone();
        return Ok(FusedSummary {
            selected_expert: Some(chosen.expert_id.clone()),
            summary: chosen,
            strategy,
            template_id: None,
            llm_model: None,
        });
    }

    let request = render_prompt(strategy, template_id, retained, templates)?;
    let reply = llm.complete(&request.rendered_prompt)?;
    let text = reply.trim();
    if text.is_empty() {
        return Err(Error::EmptyResponse);
    }
    let summary = Summary {
        expert_id: FUSED_EXPERT_ID.to_string(),
        text: text.to_string(),
        used_audio: retained.items().iter().any(|s| s.used_audio),
        embedding: None,
    };
    Ok(FusedSummary {
        summary,
        strategy,
        template_id: Some(request.prompt_template_id),
        selected_expert: None,
        llm_model: Some(llm.model_name().to_string()),
    })
}
