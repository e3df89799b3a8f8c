use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use super::link::{bler, BlerModel, ReceivedSegment};
use super::GnbError;
use crate::cg_core::RvPattern;

/// Survival flag per transmission, where `keys[i]` is the occasion (or
/// resource) transmission `i` occupies. On the shared pool a transmission
/// survives iff it is alone on its key; on dedicated resources any sharing
/// is a configuration error.
pub fn resolve_collisions<K: Ord + Clone + std::fmt::Debug>(keys: &[K], shared: bool) -> Result<Vec<bool>, GnbError> {
    let mut occupancy: BTreeMap<&K, u32> = BTreeMap::new();
    for k in keys {
        *occupancy.entry(k).or_default() += 1;
    }
    if !shared {
        if let Some((k, _)) = occupancy.iter().find(|(_, n)| **n > 1) {
            return Err(GnbError::DedicatedOverlap(format!("{k:?}")));
        }
    }
    Ok(keys.iter().map(|k| occupancy[k] == 1).collect())
}

/// Infers the RV labels of occasions `detected_index..k` from one segment
/// decoded under RV hypothesis `rv`. `None` when the pattern never uses `rv`.
pub fn blind_rv_recovery(pattern: RvPattern, detected_index: u32, rv: u8, k: u32) -> Option<Vec<u8>> {
    let seq = pattern.sequence();
    let pos = seq.iter().position(|&x| x == rv)?;
    Some((0..k.saturating_sub(detected_index)).map(|j| seq[(pos + j as usize) % 4]).collect())
}

/// One HARQ buffer at the gNB: segments combined so far and the decoding
/// threshold drawn when the block first arrived. The block decodes once the
/// combined error drops below the threshold, so adding segments can only
/// help.
#[derive(Debug, Clone)]
pub struct SoftEntry {
    pub segments: Vec<ReceivedSegment>,
    pub threshold: f64,
    pub decoded: bool,
}

/// Soft-combining buffers keyed by (UE, HARQ process, NDI).
#[derive(Debug, Clone, Default)]
pub struct SoftBuffer<K: Hash + Eq> {
    entries: HashMap<K, SoftEntry>,
}

impl<K: Hash + Eq + Clone> SoftBuffer<K> {
    pub fn new() -> Self {
        Self { entries: HashMap::new() }
    }

    /// Adds segments and returns whether the block is decoded afterwards.
    /// `threshold` is only used when the entry is created.
    pub fn combine(&mut self, key: K, segments: &[ReceivedSegment], threshold: f64, model: &BlerModel, gamma: f64) -> bool {
        let entry = self
            .entries
            .entry(key)
            .or_insert_with(|| SoftEntry { segments: Vec::new(), threshold, decoded: false });
        if !entry.decoded {
            entry.segments.extend_from_slice(segments);
            entry.decoded = bler(model, gamma, &entry.segments) < entry.threshold;
        }
        entry.decoded
    }

    pub fn get(&self, key: &K) -> Option<&SoftEntry> {
        self.entries.get(key)
    }

    pub fn flush(&mut self, key: &K) -> Option<SoftEntry> {
        self.entries.remove(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collision_examples() {
        assert_eq!(resolve_collisions(&[0u32], true).unwrap(), vec![true]);
        assert_eq!(resolve_collisions(&[1u32, 1], true).unwrap(), vec![false, false]);
        assert_eq!(resolve_collisions(&[0u32, 0, 1], true).unwrap(), vec![false, false, true]);
        assert!(resolve_collisions(&[2u32, 2], false).is_err());
        assert_eq!(resolve_collisions(&[2u32, 3], false).unwrap(), vec![true, true]);
    }

    #[test]
    fn collision_exhaustive_small() {
        // Every occupancy with up to 4 UEs on up to 4 occasions.
        for ues in 1..=4u32 {
            for occ in 1..=4u32 {
                for code in 0..occ.pow(ues) {
                    let keys: Vec<u32> = (0..ues).map(|u| code / occ.pow(u) % occ).collect();
                    let alive = resolve_collisions(&keys, true).unwrap();
                    for (i, k) in keys.iter().enumerate() {
                        let alone = keys.iter().enumerate().all(|(j, o)| j == i || o != k);
                        assert_eq!(alive[i], alone);
                    }
                }
            }
        }
    }

    #[test]
    fn rv_rotation() {
        assert_eq!(blind_rv_recovery(RvPattern::Rv0231, 1, 3, 4), Some(vec![3, 1, 0]));
        assert_eq!(blind_rv_recovery(RvPattern::Rv0231, 0, 0, 4), Some(vec![0, 2, 3, 1]));
        assert_eq!(blind_rv_recovery(RvPattern::Rv0000, 2, 0, 5), Some(vec![0, 0, 0]));
        assert_eq!(blind_rv_recovery(RvPattern::Rv0303, 0, 2, 4), None);
    }

    #[test]
    fn soft_combining_accumulates() {
        let model = BlerModel::Bernoulli { epsilon: 0.5 };
        let mut buf = SoftBuffer::new();
        let s = |r| ReceivedSegment { repetition: r, symbols: 14, rbs: 1, rv: 0 };
        // Threshold 0.3: one copy (0.5) fails, two copies (0.25) decode.
        assert!(!buf.combine((0u32, 0u32), &[s(0)], 0.3, &model, 1.0));
        assert!(buf.combine((0, 0), &[s(1)], 0.9, &model, 1.0));
        assert_eq!(buf.get(&(0, 0)).unwrap().segments.len(), 2);
        assert!(buf.flush(&(0, 0)).is_some());
        assert!(buf.is_empty());
    }
}
