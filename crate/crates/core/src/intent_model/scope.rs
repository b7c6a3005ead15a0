// SPDX-License-Identifier: Apache-2.0

//! Four-dimension scope algebra with wildcards.

use std::collections::BTreeSet;
use std::fmt;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::canonical;

/// One scope dimension: the full domain, or an explicit non-empty set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Selector {
    Any,
    Only(BTreeSet<String>),
}

impl Selector {
    pub fn only<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Selector::Only(names.into_iter().map(Into::into).collect())
    }

    pub fn is_any(&self) -> bool {
        matches!(self, Selector::Any)
    }

    pub fn matches(&self, name: &str) -> bool {
        match self {
            Selector::Any => true,
            Selector::Only(set) => set.contains(name),
        }
    }

    /// `None` when the intersection is empty.
    pub fn intersect(&self, other: &Selector) -> Option<Selector> {
        match (self, other) {
            (Selector::Any, x) | (x, Selector::Any) => Some(x.clone()),
            (Selector::Only(a), Selector::Only(b)) => {
                let both: BTreeSet<String> = a.intersection(b).cloned().collect();
                (!both.is_empty()).then_some(Selector::Only(both))
            }
        }
    }

    pub fn subsumes(&self, inner: &Selector) -> bool {
        match (self, inner) {
            (Selector::Any, _) => true,
            (Selector::Only(_), Selector::Any) => false,
            (Selector::Only(outer), Selector::Only(inner)) => inner.is_subset(outer),
        }
    }

    /// A concrete representative: the smallest name, or `*` for `Any`.
    pub fn representative(&self) -> String {
        match self {
            Selector::Any => "*".to_string(),
            Selector::Only(set) => set.iter().next().cloned().unwrap_or_default(),
        }
    }

    /// Witness components use `*` for "every name"; only `Any` covers it.
    pub fn covers(&self, component: &str) -> bool {
        match self {
            Selector::Any => true,
            Selector::Only(set) => component != "*" && set.contains(component),
        }
    }
}

impl Serialize for Selector {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            Selector::Any => ser.serialize_str("*"),
            Selector::Only(set) => set.serialize(ser),
        }
    }
}

impl<'de> Deserialize<'de> for Selector {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Selector;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"*\" or a non-empty array of names")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Selector, E> {
                if v == "*" {
                    Ok(Selector::Any)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Selector, A::Error> {
                let mut set = BTreeSet::new();
                while let Some(name) = seq.next_element::<String>()? {
                    set.insert(name);
                }
                if set.is_empty() {
                    return Err(de::Error::invalid_length(0, &self));
                }
                Ok(Selector::Only(set))
            }
        }
        de.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scope {
    pub services: Selector,
    pub nodes: Selector,
    pub segments: Selector,
    pub traffic_class: Selector,
}

/// A concrete point in scope space (`*` where both sides were wildcards).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScopeTuple {
    pub service: String,
    pub node: String,
    pub segment: String,
    pub traffic_class: String,
}

impl Scope {
    pub fn wildcard() -> Self {
        Self { services: Selector::Any, nodes: Selector::Any, segments: Selector::Any, traffic_class: Selector::Any }
    }

    pub fn services<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { services: Selector::only(names), ..Self::wildcard() }
    }

    pub fn dims(&self) -> [&Selector; 4] {
        [&self.services, &self.nodes, &self.segments, &self.traffic_class]
    }

    /// Per-dimension intersection; `None` if any dimension is empty.
    pub fn intersect(&self, other: &Scope) -> Option<Scope> {
        Some(Scope {
            services: self.services.intersect(&other.services)?,
            nodes: self.nodes.intersect(&other.nodes)?,
            segments: self.segments.intersect(&other.segments)?,
            traffic_class: self.traffic_class.intersect(&other.traffic_class)?,
        })
    }

    /// True iff every tuple matched by `inner` is matched by `self`.
    pub fn subsumes(&self, inner: &Scope) -> bool {
        self.dims().iter().zip(inner.dims()).all(|(o, i)| o.subsumes(i))
    }

    pub fn matches(&self, t: &ScopeTuple) -> bool {
        self.services.covers(&t.service)
            && self.nodes.covers(&t.node)
            && self.segments.covers(&t.segment)
            && self.traffic_class.covers(&t.traffic_class)
    }

    pub fn representative(&self) -> ScopeTuple {
        ScopeTuple {
            service: self.services.representative(),
            node: self.nodes.representative(),
            segment: self.segments.representative(),
            traffic_class: self.traffic_class.representative(),
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::canonical(self).into_bytes()
    }

    /// 64-bit FNV-1a of the canonical form, 16 lowercase hex digits.
    pub fn fingerprint(&self) -> String {
        canonical::fnv1a_hex(&self.canonical_bytes())
    }
}

/// Free-function forms matching the operation names.
pub fn scope_intersect(a: &Scope, b: &Scope) -> Option<Scope> {
    a.intersect(b)
}

pub fn scope_subsumes(outer: &Scope, inner: &Scope) -> bool {
    outer.subsumes(inner)
}
