// SPDX-License-Identifier: Apache-2.0

//! Natural-language intent to validated policy, with a bounded
//! translate / validate / correct loop.

mod external;
mod grammar;
mod prompt;
pub mod stubs;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::RealizationConfig;
use crate::intent_model::{validate_policy_ir, Intent, PolicyIr, ValidationFailure};

pub use external::{decode_document, response_content, ExternalTranslator, ServiceEndpoint};
pub use grammar::{grammar_translate, ParseFailure};
pub use prompt::{
    context_examples, correction_template, render_system_prompt, CorrectionPrompt, EXAMPLE_TEXTS, TEMPLATE_ID,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub source_text: String,
    pub context_examples: Vec<(String, Value)>,
    pub prompt_template_id: String,
    pub attempt: u32,
    pub correction: Option<CorrectionPrompt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[serde(tag = "error", content = "detail")]
pub enum TranslateError {
    #[error("{0}")]
    Parse(ParseFailure),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no policy document in response: {0}")]
    Decode(String),
}

pub trait Translator: Send {
    fn id(&self) -> &str;
    fn deterministic(&self) -> bool;
    fn translate(&mut self, req: &TranslationRequest) -> Result<Value, TranslateError>;

    /// Request/response record of the last call, for the event log.
    fn take_exchange(&mut self) -> Option<Value> {
        None
    }
}

/// The built-in controlled-language translator.
#[derive(Debug, Clone, Copy, Default)]
pub struct GrammarTranslator;

impl Translator for GrammarTranslator {
    fn id(&self) -> &str {
        "grammar"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn translate(&mut self, req: &TranslationRequest) -> Result<Value, TranslateError> {
        grammar_translate(&req.source_text).map_err(TranslateError::Parse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "detail")]
pub enum AttemptFailure {
    Translate(TranslateError),
    Validation(ValidationFailure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub document: Option<Value>,
    pub failure: Option<AttemptFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realized {
    pub policy: PolicyIr,
    pub translator_id: String,
    pub attempts: Vec<AttemptRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[error("realization of {intent_id} failed after {} attempts", attempts.len())]
pub struct RealizationFailure {
    pub intent_id: String,
    pub translator_id: String,
    pub attempts: Vec<AttemptRecord>,
}

impl RealizationFailure {
    pub fn validation_failures(&self) -> impl Iterator<Item = &ValidationFailure> {
        self.attempts.iter().filter_map(|a| match &a.failure {
            Some(AttemptFailure::Validation(v)) => Some(v),
            _ => None,
        })
    }
}

/// Runs the translate / validate / correct loop for one intent. Pure with
/// respect to the rest of the system: the caller records state changes.
///
/// A deterministic translator that cannot parse the text stops the loop
/// early, since retrying the same request would fail the same way.
pub fn realize(
    intent: &Intent,
    translator: &mut dyn Translator,
    cfg: &RealizationConfig,
) -> Result<Realized, RealizationFailure> {
    let examples = context_examples();
    let mut attempts = Vec::new();
    let mut correction: Option<CorrectionPrompt> = None;
    for attempt in 1..=cfg.max_attempts.max(1) {
        let req = TranslationRequest {
            source_text: intent.source_text.clone(),
            context_examples: examples.clone(),
            prompt_template_id: TEMPLATE_ID.to_string(),
            attempt,
            correction: correction.clone(),
        };
        let result = translator.translate(&req);
        let exchange = translator.take_exchange();
        let doc = match result {
            Ok(doc) => doc,
            Err(e) => {
                let stop = translator.deterministic() && matches!(e, TranslateError::Parse(_));
                attempts.push(AttemptRecord {
                    attempt,
                    document: None,
                    failure: Some(AttemptFailure::Translate(e)),
                    exchange,
                });
                if stop {
                    break;
                }
                continue;
            }
        };
        match validate_policy_ir(&doc) {
            Ok(mut policy) => {
                policy.intent_id = intent.id.clone();
                policy.policy_id = format!("pol-{}", intent.id);
                attempts.push(AttemptRecord { attempt, document: Some(doc), failure: None, exchange });
                return Ok(Realized { policy, translator_id: translator.id().to_string(), attempts });
            }
            Err(failure) => {
                correction = CorrectionPrompt::build(doc.clone(), failure.violations.clone());
                attempts.push(AttemptRecord {
                    attempt,
                    document: Some(doc),
                    failure: Some(AttemptFailure::Validation(failure)),
                    exchange,
                });
            }
        }
    }
    Err(RealizationFailure { intent_id: intent.id.clone(), translator_id: translator.id().to_string(), attempts })
}
