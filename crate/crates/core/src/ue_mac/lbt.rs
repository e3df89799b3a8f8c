use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::time_grid::SYMBOLS_PER_SLOT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbtMode {
    /// Load-based: sense at the occasion, back off once if busy.
    Lbe,
    /// Frame-based: the gNB senses once per fixed frame period.
    Fbe,
}

fn default_window() -> u32 {
    3
}

fn default_ffp() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbtConfig {
    pub mode: LbtMode,
    pub p_busy: f64,
    /// LBE backoff window W in symbols.
    #[serde(default = "default_window")]
    pub backoff_window: u32,
    /// FBE fixed frame period in slots.
    #[serde(default = "default_ffp")]
    pub ffp_slots: u32,
}

impl LbtConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.p_busy) {
            return Err(format!("p_busy {} outside [0, 1]", self.p_busy));
        }
        if self.backoff_window == 0 || self.ffp_slots == 0 {
            return Err("backoff_window and ffp_slots must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbtOutcome {
    /// Transmit, losing `backoff` leading symbols of the occasion.
    Proceed { backoff: u32 },
    Blocked,
}

/// Per-carrier record of FBE sensing results, drawn once per FFP.
#[derive(Debug, Clone, Default)]
pub struct FfpGate {
    decided: BTreeMap<u64, bool>,
}

impl FfpGate {
    pub fn ffp_clear<R: Rng + ?Sized>(&mut self, cfg: &LbtConfig, to_start: u64, rng: &mut R) -> bool {
        let ffp = to_start / (cfg.ffp_slots as u64 * SYMBOLS_PER_SLOT as u64);
        *self.decided.entry(ffp).or_insert_with(|| !rng.gen_bool(cfg.p_busy))
    }

    /// Drops decisions for frames that ended before `now`.
    pub fn forget_before(&mut self, now: u64, cfg: &LbtConfig) {
        let ffp = now / (cfg.ffp_slots as u64 * SYMBOLS_PER_SLOT as u64);
        self.decided = self.decided.split_off(&ffp);
    }
}

/// Channel access check for an occasion of `to_len` symbols at `to_start`.
pub fn lbt_gate<R: Rng + ?Sized>(cfg: &LbtConfig, to_start: u64, to_len: u32, gate: &mut FfpGate, rng: &mut R) -> LbtOutcome {
    match cfg.mode {
        LbtMode::Lbe => {
            if !rng.gen_bool(cfg.p_busy) {
                return LbtOutcome::Proceed { backoff: 0 };
            }
            let backoff = rng.gen_range(1..=cfg.backoff_window);
            if backoff < to_len && !rng.gen_bool(cfg.p_busy) {
                LbtOutcome::Proceed { backoff }
            } else {
                LbtOutcome::Blocked
            }
        }
        LbtMode::Fbe => {
            if gate.ffp_clear(cfg, to_start, rng) {
                LbtOutcome::Proceed { backoff: 0 }
            } else {
                LbtOutcome::Blocked
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(mode: LbtMode, p_busy: f64) -> LbtConfig {
        LbtConfig { mode, p_busy, backoff_window: 3, ffp_slots: 2 }
    }

    #[test]
    fn idle_channel_always_proceeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gate = FfpGate::default();
        for mode in [LbtMode::Lbe, LbtMode::Fbe] {
            for t in 0..200 {
                assert_eq!(lbt_gate(&cfg(mode, 0.0), t * 7, 7, &mut gate, &mut rng), LbtOutcome::Proceed { backoff: 0 });
            }
        }
    }

    #[test]
    fn busy_channel_always_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gate = FfpGate::default();
        for t in 0..200 {
            assert_eq!(lbt_gate(&cfg(LbtMode::Lbe, 1.0), t * 7, 7, &mut gate, &mut rng), LbtOutcome::Blocked);
        }
    }

    #[test]
    fn fbe_failure_blocks_whole_frame() {
        let c = cfg(LbtMode::Fbe, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut gate = FfpGate::default();
        for frame in 0..50u64 {
            let base = frame * 28;
            let first = lbt_gate(&c, base, 7, &mut gate, &mut rng);
            for off in [7, 14, 21] {
                assert_eq!(lbt_gate(&c, base + off, 7, &mut gate, &mut rng), first);
            }
        }
    }

    #[test]
    fn lbe_backoff_leaves_at_least_one_symbol() {
        let c = cfg(LbtMode::Lbe, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut gate = FfpGate::default();
        let mut saw_backoff = false;
        for t in 0..2000 {
            if let LbtOutcome::Proceed { backoff } = lbt_gate(&c, t, 2, &mut gate, &mut rng) {
                assert!(backoff < 2);
                saw_backoff |= backoff > 0;
            }
        }
        assert!(saw_backoff);
    }

    #[test]
    fn lbe_block_rate_matches_two_draws() {
        // Blocked iff busy and (backoff >= len or busy again).
        let c = LbtConfig { mode: LbtMode::Lbe, p_busy: 0.3, backoff_window: 4, ffp_slots: 1 };
        let len = 3;
        let p_long = 2.0 / 4.0;
        let expected = 0.3 * (p_long + (1.0 - p_long) * 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut gate = FfpGate::default();
        let n = 200_000;
        let blocked = (0..n).filter(|&t| lbt_gate(&c, t, len, &mut gate, &mut rng) == LbtOutcome::Blocked).count();
        let p = blocked as f64 / n as f64;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((p - expected).abs() < 4.0 * se, "{p} vs {expected}");
    }
}
