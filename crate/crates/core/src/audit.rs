//! Mechanical privacy checks over recorded exchanges.

use std::collections::HashMap;
use std::fmt;

use crate::data::{to_pm1, to_zero_one, PartyTable};
use crate::pipeline::Exchange;
use crate::wire::{BodyValue, Message};

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Index into the audited exchanges.
    pub exchange: usize,
    pub sender: String,
    pub receiver: String,
    pub phase: i32,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "exchange {} ({} -> {}, phase {}), key {:?}: {}",
            self.exchange, self.sender, self.receiver, self.phase, self.key, self.reason
        )
    }
}

/// What each party knows privately: feature values by owner and the label vector.
pub struct PrivacyBoundary {
    feature_owner: HashMap<u64, String>,
    label_forms: Vec<Vec<f64>>,
    passive: Vec<String>,
}

const FORBIDDEN_KEYS: [&str; 1] = ["threshold"];
const LABEL_KEYS: [&str; 3] = ["label", "labels", "y"];

impl PrivacyBoundary {
    pub fn new(tables: &[PartyTable]) -> Self {
        let mut feature_owner = HashMap::new();
        let mut label_forms = Vec::new();
        let mut passive = Vec::new();
        for t in tables {
            for &x in t.features() {
                feature_owner.insert(x.to_bits(), t.name().to_owned());
            }
            match t.labels() {
                Some(y) => {
                    label_forms.push(y.to_vec());
                    label_forms.extend(to_pm1(y).ok());
                    label_forms.extend(to_zero_one(y).ok());
                    label_forms.push(y.iter().map(|v| -v).collect());
                }
                None => passive.push(t.name().to_owned()),
            }
        }
        Self {
            feature_owner,
            label_forms,
            passive,
        }
    }

    fn floats(value: &BodyValue) -> &[f64] {
        match value {
            BodyValue::Float(x) => std::slice::from_ref(x),
            BodyValue::FloatVec(v) => v,
            BodyValue::FloatMat(m) => m.data(),
            _ => &[],
        }
    }

    /// Violations carried by one message.
    pub fn check_message(&self, m: &Message) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let from_passive = self.passive.contains(&m.sender);
        for (key, value) in m.body.iter() {
            let leaf = key.rsplit('.').next().unwrap_or(key);
            if FORBIDDEN_KEYS.contains(&leaf) {
                out.push((key.to_owned(), "split thresholds must stay with their owner".into()));
            }
            if let Some(x) = Self::floats(value)
                .iter()
                .find(|x| self.feature_owner.contains_key(&x.to_bits()))
            {
                let owner = &self.feature_owner[&x.to_bits()];
                out.push((key.to_owned(), format!("carries raw feature value {x} of {owner}")));
            }
            if from_passive {
                let plain = !matches!(value, BodyValue::BigIntVec(_));
                if plain && LABEL_KEYS.contains(&leaf) {
                    out.push((key.to_owned(), "plaintext label key in a passive-party message".into()));
                }
                if let BodyValue::FloatVec(v) = value {
                    if self.label_forms.iter().any(|y| y == v) {
                        out.push((key.to_owned(), "label vector in a passive-party message".into()));
                    }
                }
            }
        }
        out
    }

    pub fn audit<'a>(&self, exchanges: impl IntoIterator<Item = &'a Exchange>) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, ex) in exchanges.into_iter().enumerate() {
            for m in [&ex.request, &ex.response] {
                for (key, reason) in self.check_message(m) {
                    out.push(Violation {
                        exchange: i,
                        sender: m.sender.clone(),
                        receiver: m.receiver.clone(),
                        phase: m.phase_id,
                        key,
                        reason,
                    });
                }
            }
        }
        out
    }
}
