use rand::Rng;
use serde::Serialize;

use crate::analytics::SharedPoolConfig;
use crate::time_grid::CarrierId;

/// One contention occasion of the shared pool: `occasion` out of `k_plus`
/// frequency-multiplexed occasions in `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SharedOccasion {
    pub slot: u64,
    pub occasion: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fallback {
    /// All K repetitions went out on dedicated occasions.
    NotNeeded,
    /// Nothing was sent in the dedicated period: wait for the next one.
    Postpone,
    /// No shared pool configured; only the dedicated repetitions count.
    NoPool,
    Shared(Vec<SharedOccasion>),
}

/// Decides how the `k - sent_dedicated` missing repetitions are handled.
/// Shared repetitions go to consecutive slots starting at `first_slot`, each
/// on a uniformly drawn occasion.
pub fn shared_pool_fallback<R: Rng + ?Sized>(
    k: u32,
    sent_dedicated: u32,
    pool: Option<&SharedPoolConfig>,
    first_slot: u64,
    rng: &mut R,
) -> Fallback {
    if sent_dedicated >= k {
        return Fallback::NotNeeded;
    }
    if sent_dedicated == 0 {
        return Fallback::Postpone;
    }
    let Some(pool) = pool else {
        return Fallback::NoPool;
    };
    let picks = (0..k - sent_dedicated)
        .map(|j| SharedOccasion {
            slot: first_slot + j as u64,
            occasion: rng.gen_range(0..pool.k_plus),
        })
        .collect();
    Fallback::Shared(picks)
}

/// Time-frequency area referenced by a group-common NACK.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct GridRef {
    pub carrier_id: CarrierId,
    pub start: u64,
    pub end: u64,
    pub rb_lo: u32,
    pub rb_hi: u32,
}

impl GridRef {
    pub fn overlaps(&self, other: &GridRef) -> bool {
        self.carrier_id == other.carrier_id
            && self.start < other.end
            && other.start < self.end
            && self.rb_lo <= other.rb_hi
            && other.rb_lo <= self.rb_hi
    }
}

/// Returns the index of the UE's own transmission that the broadcast flags,
/// or `None` when the broadcast was not decoded or names someone else's grid.
pub fn handle_common_nack(own: &[GridRef], broadcast: &GridRef, decoded: bool) -> Option<usize> {
    if !decoded {
        return None;
    }
    own.iter().position(|g| g.overlaps(broadcast))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pool() -> SharedPoolConfig {
        SharedPoolConfig { k_plus: 3, n_ues: 5, activity_q: 0.1 }
    }

    #[test]
    fn fallback_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(shared_pool_fallback(4, 4, Some(&pool()), 10, &mut rng), Fallback::NotNeeded);
        assert_eq!(shared_pool_fallback(4, 0, Some(&pool()), 10, &mut rng), Fallback::Postpone);
        assert_eq!(shared_pool_fallback(4, 2, None, 10, &mut rng), Fallback::NoPool);
        match shared_pool_fallback(4, 1, Some(&pool()), 10, &mut rng) {
            Fallback::Shared(v) => {
                assert_eq!(v.len(), 3);
                assert_eq!(v.iter().map(|o| o.slot).collect::<Vec<_>>(), vec![10, 11, 12]);
                assert!(v.iter().all(|o| o.occasion < 3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn common_nack_matching() {
        let mine = [
            GridRef { carrier_id: 0, start: 0, end: 14, rb_lo: 0, rb_hi: 3 },
            GridRef { carrier_id: 0, start: 56, end: 70, rb_lo: 0, rb_hi: 3 },
        ];
        let flagged = GridRef { carrier_id: 0, start: 56, end: 70, rb_lo: 2, rb_hi: 2 };
        assert_eq!(handle_common_nack(&mine, &flagged, true), Some(1));
        let other = GridRef { rb_lo: 10, rb_hi: 12, ..flagged };
        assert_eq!(handle_common_nack(&mine, &other, true), None);
        assert_eq!(handle_common_nack(&mine, &flagged, false), None);
    }
}
