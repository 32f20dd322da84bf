//! Pattern table for the first cascade stage, and the offline trainer that
//! builds it from labelled decisions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::ActionId;
use crate::agent::StateKey;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternEntry {
    pub action: ActionId,
    pub confidence: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PatternError {
    #[error("confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error("no labelled samples")]
    EmptyCorpus,
    #[error("malformed pattern table: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatternTable {
    entries: BTreeMap<StateKey, PatternEntry>,
}

impl PatternTable {
    pub fn insert(&mut self, key: StateKey, entry: PatternEntry) -> Result<(), PatternError> {
        if !(0.0..=1.0).contains(&entry.confidence) {
            return Err(PatternError::BadConfidence(entry.confidence));
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    pub fn get(&self, key: StateKey) -> Option<&PatternEntry> {
        self.entries.get(&key)
    }

    /// Highest-confidence entry; the first state in key order wins ties.
    pub fn best(&self) -> Option<&PatternEntry> {
        self.entries.values().fold(None, |best: Option<&PatternEntry>, e| match best {
            Some(b) if b.confidence >= e.confidence => Some(b),
            _ => Some(e),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, &PatternEntry)> {
        self.entries.iter()
    }

    pub fn to_text(&self) -> String {
        let file = PatternFile { patterns: self.entries.iter().map(|(k, e)| (k.code(), *e)).collect() };
        toml::to_string(&file).expect("pattern table serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, PatternError> {
        let file: PatternFile = toml::from_str(text).map_err(|e| PatternError::Malformed(e.to_string()))?;
        let mut table = PatternTable::default();
        for (code, entry) in file.patterns {
            let key = StateKey::parse_code(&code).ok_or_else(|| PatternError::Malformed(format!("bad key `{code}`")))?;
            table.insert(key, entry)?;
        }
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternFile {
    #[serde(default)]
    patterns: BTreeMap<String, PatternEntry>,
}

/// One past decision and whether it paid off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub state: StateKey,
    pub action: ActionId,
    pub success: bool,
}

/// For every state, pick the action with the best success rate among those
/// seen at least `min_support` times (lowest id on ties). Confidence is that
/// success rate. States with no supported action get no entry.
pub fn offline_train(samples: &[LabeledSample], min_support: u64) -> Result<PatternTable, PatternError> {
    if samples.is_empty() {
        return Err(PatternError::EmptyCorpus);
    }
    let mut counts: BTreeMap<(StateKey, ActionId), (u64, u64)> = BTreeMap::new();
    for s in samples {
        let c = counts.entry((s.state, s.action)).or_default();
        c.0 += 1;
        c.1 += s.success as u64;
    }
    let mut best: BTreeMap<StateKey, PatternEntry> = BTreeMap::new();
    for (&(state, action), &(n, wins)) in &counts {
        if n < min_support.max(1) {
            continue;
        }
        let rate = wins as f64 / n as f64;
        match best.get(&state) {
            Some(b) if b.confidence >= rate => {}
            _ => {
                best.insert(state, PatternEntry { action, confidence: rate });
            }
        }
    }
    Ok(PatternTable { entries: best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(t: u8) -> StateKey {
        StateKey { threat_bin: t, load_bin: 0, honeypots_active_bin: 0, recent_honey_touch: false }
    }

    fn sample(t: u8, a: u16, success: bool) -> LabeledSample {
        LabeledSample { state: key(t), action: ActionId(a), success }
    }

    #[test]
    fn trainer_picks_best_supported_action() {
        let mut corpus = vec![];
        corpus.extend((0..4).map(|i| sample(1, 3, i < 3)));
        corpus.extend((0..4).map(|i| sample(1, 5, i < 1)));
        // perfect but under-supported
        corpus.push(sample(1, 7, true));
        corpus.extend((0..2).map(|_| sample(2, 4, false)));
        let t = offline_train(&corpus, 3).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(key(1)), Some(&PatternEntry { action: ActionId(3), confidence: 0.75 }));
        assert_eq!(t.get(key(2)), None);
        assert_eq!(offline_train(&[], 1), Err(PatternError::EmptyCorpus));
    }

    #[test]
    fn trainer_tie_lowest_id() {
        let corpus = [sample(0, 9, true), sample(0, 2, true)];
        assert_eq!(offline_train(&corpus, 1).unwrap().get(key(0)).unwrap().action, ActionId(2));
    }

    #[test]
    fn text_round_trip() {
        let mut t = PatternTable::default();
        t.insert(key(3), PatternEntry { action: ActionId(5), confidence: 0.875 }).unwrap();
        t.insert(key(0), PatternEntry { action: ActionId(1), confidence: 0.5 }).unwrap();
        let back = PatternTable::from_text(&t.to_text()).unwrap();
        assert_eq!(back, t);
        assert_eq!(PatternTable::from_text("").unwrap(), PatternTable::default());
        assert!(t.clone().insert(key(1), PatternEntry { action: ActionId(1), confidence: 1.5 }).is_err());
        assert!(PatternTable::from_text("[patterns.zz]\naction = 1\nconfidence = 0.5").is_err());
    }
}
