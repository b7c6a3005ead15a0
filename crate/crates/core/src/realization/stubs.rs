// SPDX-License-Identifier: Apache-2.0

//! Scripted translators for exercising the correction loop offline.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{grammar_translate, TranslateError, TranslationRequest, Translator, EXAMPLE_TEXTS};
use crate::intent_model::ViolationCode;

/// A single injected schema defect. Each one surfaces as a violation at
/// [`Defect::path`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Defect {
    DropPriority,
    PriorityOutOfRange,
    ExtraField,
    BadKind,
    PolicyIdNotString,
    WrongUnit,
    BadOp,
    EmptyNodes,
    DropActivation,
}

impl Defect {
    pub const ALL: [Defect; 9] = [
        Defect::DropPriority,
        Defect::PriorityOutOfRange,
        Defect::ExtraField,
        Defect::BadKind,
        Defect::PolicyIdNotString,
        Defect::WrongUnit,
        Defect::BadOp,
        Defect::EmptyNodes,
        Defect::DropActivation,
    ];

    pub fn path(self) -> &'static str {
        match self {
            Defect::DropPriority | Defect::PriorityOutOfRange => "/priority",
            Defect::ExtraField => "/note",
            Defect::BadKind => "/kind",
            Defect::PolicyIdNotString => "/policy_id",
            Defect::WrongUnit => "/constraints/0/unit",
            Defect::BadOp => "/constraints/0/op",
            Defect::EmptyNodes => "/scope/nodes",
            Defect::DropActivation => "/activation_mode",
        }
    }

    pub fn code(self) -> ViolationCode {
        match self {
            Defect::DropPriority | Defect::DropActivation => ViolationCode::MissingField,
            Defect::PriorityOutOfRange => ViolationCode::RangeViolation,
            Defect::ExtraField => ViolationCode::UnknownField,
            Defect::BadKind | Defect::BadOp => ViolationCode::BadEnum,
            Defect::PolicyIdNotString => ViolationCode::BadType,
            Defect::WrongUnit => ViolationCode::UnitMismatch,
            Defect::EmptyNodes => ViolationCode::EmptyScopeSet,
        }
    }

    fn needs_constraint(self) -> bool {
        matches!(self, Defect::WrongUnit | Defect::BadOp)
    }

    fn apply(self, doc: &mut Value) {
        let obj = doc.as_object_mut().expect("document is an object");
        match self {
            Defect::DropPriority => {
                obj.remove("priority");
            }
            Defect::PriorityOutOfRange => {
                obj.insert("priority".into(), json!(250));
            }
            Defect::ExtraField => {
                obj.insert("note".into(), json!("generated"));
            }
            Defect::BadKind => {
                obj.insert("kind".into(), json!("LatencyGuarantee"));
            }
            Defect::PolicyIdNotString => {
                obj.insert("policy_id".into(), json!(7));
            }
            Defect::WrongUnit => {
                obj["constraints"][0]["unit"] = json!("furlongs");
            }
            Defect::BadOp => {
                obj["constraints"][0]["op"] = json!("LT");
            }
            Defect::EmptyNodes => {
                obj["scope"]["nodes"] = json!([]);
            }
            Defect::DropActivation => {
                obj.remove("activation_mode");
            }
        }
    }
}

/// Emits the grammar translation of the text with `defects` injected on the
/// first attempt. Each correction prompt repairs up to
/// [`FaultyTranslator::FIXES_PER_CORRECTION`] outstanding defects, and only
/// those whose path the prompt names.
#[derive(Debug, Clone)]
pub struct FaultyTranslator {
    defects: Vec<Defect>,
    outstanding: Vec<Defect>,
    calls: u32,
}

impl FaultyTranslator {
    pub const FIXES_PER_CORRECTION: usize = 2;

    pub fn new(defects: Vec<Defect>) -> Self {
        FaultyTranslator { outstanding: defects.clone(), defects, calls: 0 }
    }

    pub fn calls(&self) -> u32 {
        self.calls
    }

    pub fn defects(&self) -> &[Defect] {
        &self.defects
    }
}

impl Translator for FaultyTranslator {
    fn id(&self) -> &str {
        "faulty-stub"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn translate(&mut self, req: &TranslationRequest) -> Result<Value, TranslateError> {
        self.calls += 1;
        if req.attempt == 1 {
            self.outstanding = self.defects.clone();
        } else if let Some(c) = &req.correction {
            let mut fixed = 0;
            self.outstanding.retain(|d| {
                let named = c.failures.iter().any(|v| v.path == d.path());
                if named && fixed < Self::FIXES_PER_CORRECTION {
                    fixed += 1;
                    false
                } else {
                    true
                }
            });
        }
        let mut doc = grammar_translate(&req.source_text).map_err(TranslateError::Parse)?;
        for d in &self.outstanding {
            d.apply(&mut doc);
        }
        Ok(doc)
    }
}

/// Always emits an unknown `/kind`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExhaustTranslator;

impl Translator for ExhaustTranslator {
    fn id(&self) -> &str {
        "exhaust-stub"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn translate(&mut self, req: &TranslationRequest) -> Result<Value, TranslateError> {
        let mut doc = grammar_translate(&req.source_text).map_err(TranslateError::Parse)?;
        Defect::BadKind.apply(&mut doc);
        Ok(doc)
    }
}

/// A seeded corpus of (source text, defect set) cases with 1 to 4 defects
/// on distinct paths, every one repairable within two corrections.
pub fn defect_corpus(n: usize, seed: u64) -> Vec<(String, Vec<Defect>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let text = *EXAMPLE_TEXTS.choose(&mut rng).expect("non-empty");
            let access = text.starts_with("block") || text.starts_with("allow");
            let want = rng.random_range(1..=4usize);
            let mut picked: Vec<Defect> = Vec::new();
            while picked.len() < want {
                let d = *Defect::ALL.choose(&mut rng).expect("non-empty");
                if (access && d.needs_constraint()) || picked.iter().any(|p| p.path() == d.path()) {
                    continue;
                }
                picked.push(d);
            }
            (text.to_string(), picked)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent_model::validate_policy_ir;

    #[test]
    fn each_defect_surfaces_at_its_path() {
        for d in Defect::ALL {
            let text = EXAMPLE_TEXTS[0];
            let mut doc = grammar_translate(text).unwrap();
            d.apply(&mut doc);
            let f = validate_policy_ir(&doc).unwrap_err();
            assert!(f.has(d.code(), d.path()), "{d:?}: {f:?}");
        }
    }

    #[test]
    fn corpus_is_seeded() {
        assert_eq!(defect_corpus(50, 3), defect_corpus(50, 3));
        assert!(defect_corpus(50, 3).iter().all(|(_, d)| (1..=4).contains(&d.len())));
    }
}
