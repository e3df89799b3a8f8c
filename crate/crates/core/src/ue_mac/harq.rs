use serde::Serialize;

use crate::cg_core::DciMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HarqState {
    Idle,
    AwaitingFeedback,
    Retransmitting,
    DoneAck,
    DoneFailed,
}

/// Transmit-side HARQ process. All instants are absolute symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HarqProcess {
    pub harq_id: u32,
    pub ndi: u8,
    pub attempts: u32,
    pub rv_cursor: u32,
    /// configuredGrantTimer expiry; nothing may be sent at or after it.
    pub cgt_deadline: u64,
    /// cgRetransmissionTimer expiry (NR-U only).
    pub retx_timer_deadline: Option<u64>,
    pub state: HarqState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NruAction {
    None,
    Ack,
    Failed,
    /// Retransmit at the next usable occasion.
    Retransmit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrAction {
    None,
    ImplicitAck,
    Retransmit,
    /// A DCI that is not a retransmission grant for this process.
    Ignored,
}

impl HarqProcess {
    pub fn new(harq_id: u32) -> Self {
        Self {
            harq_id,
            ndi: 0,
            attempts: 0,
            rv_cursor: 0,
            cgt_deadline: 0,
            retx_timer_deadline: None,
            state: HarqState::Idle,
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(self.state, HarqState::DoneAck | HarqState::DoneFailed)
    }

    pub fn is_busy(&self) -> bool {
        !matches!(self.state, HarqState::Idle) && !self.is_done()
    }

    /// Starts a new transport block: toggles NDI and arms the CG timer.
    pub fn begin(&mut self, now: u64, cgt_symbols: u64) {
        self.ndi ^= 1;
        self.attempts = 0;
        self.rv_cursor = 0;
        self.cgt_deadline = now + cgt_symbols;
        self.retx_timer_deadline = None;
        self.state = HarqState::Retransmitting;
    }

    /// Whether a transmission at `at` is still allowed by the CG timer.
    pub fn may_transmit_at(&self, at: u64) -> bool {
        !self.is_done() && at < self.cgt_deadline
    }

    /// Records a transmission; `retx_deadline` re-arms cgRetransmissionTimer.
    pub fn on_transmit(&mut self, at: u64, retx_deadline: Option<u64>) {
        debug_assert!(self.may_transmit_at(at), "transmission after CG timer expiry");
        self.attempts += 1;
        self.rv_cursor += 1;
        self.retx_timer_deadline = retx_deadline;
        self.state = HarqState::AwaitingFeedback;
    }

    /// Gives up on the block, e.g. when the next usable occasion lies past
    /// the CG timer.
    pub fn fail(&mut self) {
        if !self.is_done() {
            self.state = HarqState::DoneFailed;
        }
    }

    pub fn ack(&mut self) {
        if self.state != HarqState::DoneFailed {
            self.state = HarqState::DoneAck;
        }
    }

    /// NR-U feedback handling at instant `now`. `dfi` carries this process's
    /// bit of a CG-DFI received now (true = ACK).
    pub fn nru_feedback_step(&mut self, now: u64, dfi: Option<bool>) -> NruAction {
        if self.is_done() {
            return NruAction::None;
        }
        if dfi == Some(true) {
            self.state = HarqState::DoneAck;
            return NruAction::Ack;
        }
        if now >= self.cgt_deadline {
            self.state = HarqState::DoneFailed;
            return NruAction::Failed;
        }
        let timer_expired = self.retx_timer_deadline.is_some_and(|d| d <= now);
        if self.state == HarqState::AwaitingFeedback && (dfi == Some(false) || timer_expired) {
            self.state = HarqState::Retransmitting;
            self.retx_timer_deadline = None;
            return NruAction::Retransmit;
        }
        NruAction::None
    }

    /// NR feedback handling: an explicit retransmission grant, or an
    /// implicit ACK once the CG timer runs out.
    pub fn nr_feedback_step(&mut self, now: u64, dci: Option<&DciMessage>) -> NrAction {
        if self.is_done() {
            return NrAction::None;
        }
        if let Some(dci) = dci {
            if !dci.is_retransmission_grant() || dci.harq_field != self.harq_id {
                return NrAction::Ignored;
            }
            if now < self.cgt_deadline {
                self.state = HarqState::Retransmitting;
                return NrAction::Retransmit;
            }
        }
        if now >= self.cgt_deadline {
            self.state = HarqState::DoneAck;
            return NrAction::ImplicitAck;
        }
        NrAction::None
    }
}

/// Lowest-numbered process not currently in use.
pub fn free_process(pool: &[HarqProcess]) -> Option<usize> {
    pool.iter().position(|p| !p.is_busy())
}

/// gNB-side HARQ id rule used for NR: period index modulo the pool size.
pub fn nr_harq_id(period_index: u64, pool_size: u32) -> u32 {
    (period_index % pool_size.max(1) as u64) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg_core::DciFormat;

    const TO: u64 = 14;

    /// Drives one NR-U process over one-occasion-per-slot timing and
    /// returns (event, occasion index) pairs.
    fn nru_trace(retx_timer_tos: u64, cgt_tos: u64, ack_at: Option<u64>) -> Vec<(&'static str, u64)> {
        let mut p = HarqProcess::new(0);
        let mut log = Vec::new();
        p.begin(0, cgt_tos * TO);
        p.on_transmit(0, Some(retx_timer_tos * TO));
        log.push(("tx", 0));
        for to in 1..=cgt_tos + 2 {
            let now = to * TO;
            let dfi = (ack_at == Some(to)).then_some(true);
            match p.nru_feedback_step(now, dfi) {
                NruAction::Retransmit => {
                    if p.may_transmit_at(now) {
                        p.on_transmit(now, Some(now + retx_timer_tos * TO));
                        log.push(("tx", to));
                    }
                }
                NruAction::Ack => log.push(("ack", to)),
                NruAction::Failed => log.push(("failed", to)),
                NruAction::None => {}
            }
        }
        log
    }

    #[test]
    fn autonomous_retx_at_timer_expiry() {
        assert_eq!(nru_trace(4, 8, None), vec![("tx", 0), ("tx", 4), ("failed", 8)]);
    }

    #[test]
    fn ack_suppresses_retransmission() {
        assert_eq!(nru_trace(4, 8, Some(2)), vec![("tx", 0), ("ack", 2)]);
    }

    #[test]
    fn cgt_bounds_attempts() {
        let log = nru_trace(1, 2, None);
        assert_eq!(log, vec![("tx", 0), ("tx", 1), ("failed", 2)]);
        assert!(log.iter().filter(|(e, _)| *e == "tx").count() <= 2);
    }

    #[test]
    fn dfi_nack_triggers_immediate_retx() {
        let mut p = HarqProcess::new(1);
        p.begin(0, 100);
        p.on_transmit(0, Some(50));
        assert_eq!(p.nru_feedback_step(20, None), NruAction::None);
        assert_eq!(p.nru_feedback_step(20, Some(false)), NruAction::Retransmit);
    }

    #[test]
    fn nr_implicit_ack_and_grant() {
        let mut p = HarqProcess::new(2);
        p.begin(0, 56);
        p.on_transmit(0, None);
        assert_eq!(p.nr_feedback_step(20, None), NrAction::None);
        let activation = DciMessage::activation(DciFormat::F0_0);
        assert_eq!(p.nr_feedback_step(20, Some(&activation)), NrAction::Ignored);
        let grant = DciMessage::retx_grant(DciFormat::F0_1, 2);
        assert_eq!(p.nr_feedback_step(28, Some(&grant)), NrAction::Retransmit);
        p.on_transmit(30, None);
        assert_eq!(p.nr_feedback_step(56, None), NrAction::ImplicitAck);
        assert_eq!(p.state, HarqState::DoneAck);
        assert_eq!(p.nr_feedback_step(60, Some(&grant)), NrAction::None);
    }

    #[test]
    fn harq_id_rule_and_pool() {
        assert_eq!(nr_harq_id(7, 4), 3);
        let mut pool = vec![HarqProcess::new(0), HarqProcess::new(1)];
        pool[0].begin(0, 10);
        assert_eq!(free_process(&pool), Some(1));
        pool[0].ack();
        assert_eq!(free_process(&pool), Some(0));
    }
}
