// SPDX-License-Identifier: Apache-2.0

#[path = "support/active_set.rs"]
mod active_set;
#[path = "support/conflict_oracle.rs"]
#[allow(dead_code)]
mod conflict_oracle;

use std::sync::OnceLock;

use loopbench_core::canonical::canonical;
use loopbench_core::events::EventRecord;
use loopbench_core::intent_model::{IntentState, PolicyIr};
use loopbench_core::scenario::{run, s1, RunOptions};
use loopbench_core::store::IntentStore;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn policy(seed: u64) -> PolicyIr {
    conflict_oracle::random_policy(&mut ChaCha8Rng::seed_from_u64(seed), "p")
}

fn s1_log() -> &'static [EventRecord] {
    static LOG: OnceLock<Vec<EventRecord>> = OnceLock::new();
    LOG.get_or_init(|| {
        let e = run(&s1(), &RunOptions::default()).unwrap();
        e.log().records().to_vec()
    })
}

const STATES: [IntentState; 7] = [
    IntentState::Submitted,
    IntentState::Realized,
    IntentState::Active,
    IntentState::Degraded,
    IntentState::Violated,
    IntentState::Suspended,
    IntentState::Withdrawn,
];

fn allowed(from: IntentState, to: IntentState) -> bool {
    use IntentState::*;
    let table: &[(IntentState, IntentState)] = &[
        (Submitted, Realized),
        (Realized, Active),
        (Active, Degraded),
        (Active, Violated),
        (Active, Suspended),
        (Degraded, Active),
    ];
    table.contains(&(from, to)) || (to == Withdrawn && from != Withdrawn)
}

proptest! {
    #[test]
    fn canonical_form_is_a_fixed_point(seed in any::<u64>()) {
        let p = policy(seed);
        let once = canonical(&p);
        let back: PolicyIr = serde_json::from_str(&once).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(canonical(&back), once);
    }

    #[test]
    fn scope_intersection_commutes(a in any::<u64>(), b in any::<u64>()) {
        let (pa, pb) = (policy(a), policy(b));
        let ab = pa.scope.intersect(&pb.scope);
        let ba = pb.scope.intersect(&pa.scope);
        prop_assert_eq!(ab.as_ref().map(conflict_oracle::points), ba.as_ref().map(conflict_oracle::points));
        prop_assert!(pa.scope.subsumes(&pa.scope));
        if let Some(x) = ab {
            prop_assert!(pa.scope.subsumes(&x) && pb.scope.subsumes(&x));
        }
    }

    #[test]
    fn store_prefix_then_suffix_equals_full_replay(k in 0usize..=1000) {
        let log = s1_log();
        let k = k.min(log.len());
        let mut s = IntentStore::replay(&log[..k]);
        prop_assert_eq!(s.head, log[..k].last().map_or(0, |r| r.seq));
        for r in &log[k..] {
            s.apply(r);
        }
        prop_assert_eq!(s, IntentStore::replay(log));
    }

    #[test]
    fn store_snapshot_round_trips(k in 0usize..=1000) {
        let log = s1_log();
        let s = IntentStore::replay(&log[..k.min(log.len())]);
        let back: IntentStore = serde_json::from_str(&canonical(&s)).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn intent_transitions_follow_the_table(path in proptest::collection::vec(0usize..7, 1..20)) {
        let mut state = IntentState::Submitted;
        for i in path {
            let next = STATES[i];
            prop_assert_eq!(state.can_transition_to(next), allowed(state, next), "{:?} -> {:?}", state, next);
            if allowed(state, next) {
                state = next;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn active_set_never_holds_a_contradiction(seed in any::<u64>()) {
        if let Err(e) = active_set::random_walk(seed, 200) {
            prop_assert!(false, "{}", e);
        }
    }
}

#[test]
fn random_walk_exercises_resolutions() {
    let resolved: usize = (0..4).map(|seed| active_set::random_walk(seed, 200).unwrap()).sum();
    assert!(resolved >= 10, "only {resolved} escalations resolved");
}
