// SPDX-License-Identifier: Apache-2.0

//! Closed-loop intent-based networking over a simulated domain.
//!
//! The pipeline runs in three stages that mirror the classic IBN loop:
//!
//! - **realize**: controlled natural language (or an external chat-completion
//!   endpoint) is translated into a [`PolicyIr`], validated against the schema,
//!   and corrected/re-generated up to a bounded number of attempts;
//! - **activate**: the validated policy is checked for conflicts against the
//!   active set, resolved or escalated, then enforced through a
//!   [`DomainAdapter`] with an explicit post-apply probe and optional canary;
//! - **assure**: simulator telemetry feeds drift detection, per-intent risk,
//!   root-cause/victim labelling, KPI attribution and lead-time estimates,
//!   which in turn drive ranked remediation plans.
//!
//! [`Engine`] wires the stages together behind an append-only event log from
//! which the [`IntentStore`] can be rebuilt at any event boundary.

pub mod activation;
pub mod assurance;
pub mod canonical;
pub mod config;
pub mod conflict;
pub mod engine;
pub mod events;
pub mod intent_model;
pub mod netsim;
pub mod realization;
pub mod remediation;
pub mod scenario;
pub mod store;
pub mod telemetry;

pub use activation::{DomainAdapter, EnforcementReceipt, SimAdapter};
pub use config::LoopConfig;
pub use engine::Engine;
pub use events::{Event, EventLog, EventRecord};
pub use intent_model::{Intent, IntentKind, IntentState, PolicyIr, PolicyMetadata, Scope, Selector};
pub use store::IntentStore;
pub use telemetry::{KpiKey, KpiSample, ResourceId};
