// SPDX-License-Identifier: Apache-2.0

//! Intents, the policy IR, its validator, and scope/metadata helpers.

mod metadata;
mod policy;
mod scope;
mod validate;

pub use metadata::{extract_metadata, matched_services, PolicyMetadata, ScopeResolvesEmpty};
pub use policy::{
    Action, ActionType, ActivationMode, CmpOp, Constraint, Intent, IntentError, IntentKind, IntentState, PolicyIr,
    DEFAULT_PRIORITY, SCHEMA_VERSION,
};
pub use scope::{scope_intersect, scope_subsumes, Scope, ScopeTuple, Selector};
pub use validate::{validate_policy_ir, ValidationFailure, Violation, ViolationCode};
