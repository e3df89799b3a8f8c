use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::metrics::{symbols_to_us, UeMetrics};
use super::scenario::{CarrierMap, DciEvent, MissPolicy, ScenarioConfig};
use crate::analytics::SharedPoolConfig;
use crate::cg_core::{
    allowed_start_indices, occasions_in_period, period_containing, CgConfig, DciPurpose, FeatureProfile, TransmissionOccasion,
};
use crate::gnb_model::{
    detect, emit_feedback, resolve_collisions, DetectionOutcome, FeedbackMessage, FeedbackPolicy, ProcessOutcome, ReceivedSegment,
    SoftBuffer,
};
use crate::time_grid::{CarrierId, Segment, SymbolSpan, SYMBOLS_PER_SLOT};
use crate::ue_mac::{
    handle_common_nack, lbt_gate, nr_harq_id, resolve_overlap, select_grant, shared_pool_fallback, transmit_repetitions,
    Fallback, FfpGate, GrantClaim, GrantKind, GridRef, HarqProcess, HarqState, LbtOutcome, NrAction, NruAction, Packet,
    RepetitionRequest, SharedOccasion, Transmission, TxResource,
};

const SPS: u64 = SYMBOLS_PER_SLOT as u64;
/// First RB index used to label shared-pool occasions in grid references.
const SHARED_RB_BASE: u32 = 1 << 20;
/// Slots searched for a usable dynamic retransmission slot.
const DYNAMIC_SEARCH_SLOTS: u64 = 64;
/// Periods searched for a retransmission occasion.
const RETX_SEARCH_PERIODS: u64 = 4;
/// Recent grids kept per UE for matching group-common NACKs.
const RECENT_GRIDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Rank {
    Feedback,
    Timer,
    Arrival,
    TxStart,
    Reception,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimerKind {
    Retx,
    Cgt,
}

#[derive(Debug, Clone)]
enum EventKind {
    Arrival { ue: usize, n: u64, instant: f64 },
    Dci { ue: usize, index: usize },
    Feedback(FeedbackMessage),
    Timer { ue: usize, harq: usize, kind: TimerKind, gen: u64 },
    TxStart(u64),
    Reception(u64),
}

#[derive(Debug, Clone)]
struct Event {
    at: u64,
    rank: Rank,
    ue_id: u32,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (u64, Rank, u32, u64) {
        (self.at, self.rank, self.ue_id, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Cancelled,
    Aborted,
    Lbt,
}

/// Observable events of a traced run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceKind {
    Arrival { packet: u64 },
    Dropped { packet: u64 },
    Tx { packet: u64, cg_id: u8, period: u64, occasion: u32, rv: u8, resource: TxResource, cg_uci: bool },
    Skipped { packet: u64, reason: SkipReason },
    Collision { packet: u64 },
    Detection { packet: u64, outcome: DetectionOutcome },
    Delivered { packet: u64 },
    Ack,
    ImplicitAck,
    Failed,
    RetxGrant,
    AutonomousRetx,
    CommonNack { decoded: bool },
    CommonNackRetx,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub at: u64,
    pub ue_id: u32,
    pub harq_id: Option<u32>,
    #[serde(flatten)]
    pub kind: TraceKind,
}

/// Final record of one packet in a traced run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PacketRecord {
    pub packet: Packet,
    pub cg_id: Option<u8>,
    pub arrival_period: Option<u64>,
    pub in_period_reps: u32,
    pub first_tx: Option<u64>,
    pub dropped: bool,
}

/// Everything one replication produces.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub replication: u32,
    pub ues: Vec<UeMetrics>,
    pub trace: Vec<TraceEvent>,
    pub packets: Vec<PacketRecord>,
    /// Events handled; time never decreased between them.
    pub events: u64,
}

struct HarqSlot {
    proc: HarqProcess,
    cg: usize,
    packet: Option<u64>,
    tb: u64,
    retx_gen: u64,
    last_tx_end: u64,
    attempt_sent: u32,
}

struct PacketRt {
    packet: Packet,
    cg: Option<usize>,
    arrival_period: Option<u64>,
    in_period: u32,
    first_tx: Option<u64>,
    decoded: bool,
    recovered: bool,
    dropped: bool,
}

struct PlannedTx {
    ue: usize,
    harq: usize,
    tb: u64,
    packet: u64,
    tx: Transmission,
    shared: Option<SharedOccasion>,
    rbs: u32,
    grid: GridRef,
    cancelled: bool,
    last_in_attempt: bool,
    nru_retx: bool,
    cn_retx: bool,
}

struct CgRt {
    cfg: CgConfig,
    complement: Option<CarrierId>,
    rbs: u32,
    rb_lo: u32,
    rb_hi: u32,
}

struct UeRt {
    ue_id: u32,
    cgs: Vec<CgRt>,
    states: crate::cg_core::CgStateTable,
    harq: Vec<HarqSlot>,
    harq_base: Vec<usize>,
    queue: VecDeque<u64>,
    reserved: HashMap<(usize, u64), u32>,
    layouts: HashMap<(usize, u64), Rc<Vec<TransmissionOccasion>>>,
    pending: Vec<u64>,
    ffp: FfpGate,
    recent: VecDeque<(GridRef, usize, u64)>,
}

#[derive(Default)]
struct SlotPool {
    explicit: Vec<(u32, u64)>,
    background: Vec<u32>,
}

type SoftKey = (usize, usize, u64);

/// Discrete-event simulation of one replication.
pub struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    profile: FeatureProfile,
    carriers: CarrierMap,
    policy: FeedbackPolicy,
    pool: Option<SharedPoolConfig>,
    population: u32,
    background: u32,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: u64,
    horizon: u64,
    end_of_traffic: u64,
    ues: Vec<UeRt>,
    packets: HashMap<u64, PacketRt>,
    next_packet: u64,
    txs: HashMap<u64, PlannedTx>,
    next_tx: u64,
    next_tb: u64,
    soft: SoftBuffer<SoftKey>,
    shared: HashMap<u64, SlotPool>,
    metrics: Vec<UeMetrics>,
    trace: Vec<TraceEvent>,
    records: Vec<PacketRecord>,
    events: u64,
}

/// RNG of replication `r`: the scenario seed selects the key, `r` the stream.
pub fn replication_rng(seed: u64, replication: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

/// Runs replication `replication` of a validated scenario.
pub fn run_replication(cfg: &ScenarioConfig, replication: u32) -> ReplicationResult {
    let mut engine = Engine::new(cfg, replication_rng(cfg.seed, replication));
    engine.run();
    engine.finish(replication)
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &'a ScenarioConfig, rng: ChaCha8Rng) -> Self {
        let pool = cfg.active_pool();
        let explicit = cfg.ues.len() as u32;
        let population = pool.map_or(explicit, |p| p.n_ues.max(explicit));
        let ues: Vec<UeRt> = cfg
            .ues
            .iter()
            .map(|u| {
                let mut harq = Vec::new();
                let mut harq_base = Vec::new();
                for (ci, cg) in u.configured_grants.iter().enumerate() {
                    harq_base.push(harq.len());
                    for _ in 0..cg.harq_processes.max(1) {
                        harq.push(HarqSlot {
                            proc: HarqProcess::new(harq.len() as u32),
                            cg: ci,
                            packet: None,
                            tb: 0,
                            retx_gen: 0,
                            last_tx_end: 0,
                            attempt_sent: 0,
                        });
                    }
                }
                let cgs = u
                    .configured_grants
                    .iter()
                    .map(|c| {
                        let rbs = c.fdra.resource_blocks().unwrap_or_default();
                        CgRt {
                            cfg: c.clone(),
                            complement: cfg.complement_of(c.carrier_id),
                            rbs: rbs.len() as u32,
                            rb_lo: rbs.first().copied().unwrap_or(0),
                            rb_hi: rbs.last().copied().unwrap_or(0),
                        }
                    })
                    .collect();
                UeRt {
                    ue_id: u.ue_id,
                    cgs,
                    states: crate::cg_core::CgStateTable::configure(&u.configured_grants),
                    harq,
                    harq_base,
                    queue: VecDeque::new(),
                    reserved: HashMap::new(),
                    layouts: HashMap::new(),
                    pending: Vec::new(),
                    ffp: FfpGate::default(),
                    recent: VecDeque::new(),
                }
            })
            .collect();
        let longest = cfg
            .ues
            .iter()
            .flat_map(|u| &u.configured_grants)
            .map(|c| c.period_slots.max(c.cg_timer_slots()) as u64)
            .max()
            .unwrap_or(1);
        let end_of_traffic = cfg.duration_symbols();
        Self {
            cfg,
            profile: cfg.profile,
            carriers: cfg.carrier_map(),
            policy: cfg.feedback_policy(),
            pool,
            population,
            background: population - explicit,
            rng,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            horizon: end_of_traffic + (RETX_SEARCH_PERIODS + 4) * longest * SPS,
            end_of_traffic,
            ues,
            packets: HashMap::new(),
            next_packet: 0,
            txs: HashMap::new(),
            next_tx: 0,
            next_tb: 0,
            soft: SoftBuffer::new(),
            shared: HashMap::new(),
            metrics: cfg.ues.iter().map(|u| UeMetrics::new(u.ue_id)).collect(),
            trace: Vec::new(),
            records: Vec::new(),
            events: 0,
        }
    }

    fn push(&mut self, at: u64, rank: Rank, ue_id: u32, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse(Event { at, rank, ue_id, seq: self.seq, kind }));
    }

    fn log(&mut self, ue: usize, harq: Option<usize>, kind: TraceKind) {
        if self.cfg.trace {
            let ue_id = self.ues[ue].ue_id;
            let harq_id = harq.map(|h| self.ues[ue].harq[h].proc.harq_id);
            self.trace.push(TraceEvent { at: self.now, ue_id, harq_id, kind });
        }
    }

    pub fn run(&mut self) {
        for ue in 0..self.ues.len() {
            self.schedule_arrival(ue, 0);
            let events: Vec<(usize, &DciEvent)> = self.cfg.ues[ue].dci_events.iter().enumerate().collect();
            for (index, ev) in events {
                let ue_id = self.ues[ue].ue_id;
                self.push(ev.at_slot * SPS, Rank::Feedback, ue_id, EventKind::Dci { ue, index });
            }
        }
        while let Some(Reverse(ev)) = self.heap.pop() {
            if ev.at > self.horizon {
                break;
            }
            debug_assert!(ev.at >= self.now, "event time went backwards");
            self.now = ev.at;
            self.events += 1;
            match ev.kind {
                EventKind::Arrival { ue, n, instant } => self.on_arrival(ue, n, instant),
                EventKind::Dci { ue, index } => self.on_dci(ue, index),
                EventKind::Feedback(msg) => self.on_feedback(msg),
                EventKind::Timer { ue, harq, kind, gen } => self.on_timer(ue, harq, kind, gen),
                EventKind::TxStart(id) => self.on_tx_start(id),
                EventKind::Reception(id) => self.on_reception(id),
            }
        }
    }

    fn schedule_arrival(&mut self, ue: usize, n: u64) {
        let Some(instant) = self.cfg.ues[ue].traffic.arrival_instant(n, &mut self.rng) else {
            return;
        };
        if (instant.ceil() as u64) < self.end_of_traffic {
            let ue_id = self.ues[ue].ue_id;
            self.push(instant.ceil() as u64, Rank::Arrival, ue_id, EventKind::Arrival { ue, n, instant });
        }
    }

    fn on_arrival(&mut self, ue: usize, n: u64, instant: f64) {
        let u = &self.cfg.ues[ue];
        let deadline = u.deadline_slots as u64 * SPS;
        let id = self.next_packet;
        self.next_packet += 1;
        let packet = Packet::new(id, u.ue_id, instant, u.traffic.payload_bits(), deadline);
        self.packets.insert(
            id,
            PacketRt { packet, cg: None, arrival_period: None, in_period: 0, first_tx: None, decoded: false, recovered: false, dropped: false },
        );
        self.metrics[ue].offered += 1;
        self.ues[ue].queue.push_back(id);
        self.log(ue, None, TraceKind::Arrival { packet: id });
        self.schedule_arrival(ue, n + 1);
        self.try_schedule(ue);
    }

    fn layout(&mut self, ue: usize, cg: usize, period: u64) -> Rc<Vec<TransmissionOccasion>> {
        layout_of(&mut self.ues[ue], &self.carriers, self.profile, cg, period)
    }

    fn harq_for_period(&self, ue: usize, cg: usize, period: u64) -> Option<usize> {
        let u = &self.ues[ue];
        let base = u.harq_base[cg];
        let pool = u.cgs[cg].cfg.harq_processes.max(1);
        match self.profile {
            FeatureProfile::NruR16 => {
                let end = base + pool as usize;
                u.harq[base..end].iter().position(|h| !h.proc.is_busy()).map(|i| base + i)
            }
            _ => {
                let h = base + nr_harq_id(period, pool) as usize;
                (!u.harq[h].proc.is_busy()).then_some(h)
            }
        }
    }

    /// Maps queued packets onto grants until the queue empties or no grant
    /// can take the head packet right now.
    fn try_schedule(&mut self, ue: usize) {
        while let Some(&pid) = self.ues[ue].queue.front() {
            let arrival = self.packets[&pid].packet.arrival_time;
            let ready = arrival.max(self.now) + self.cfg.ues[ue].processing_margin_symbols as u64;
            let profile = self.profile;
            let choice = {
                let this = &*self;
                let u = &this.ues[ue];
                let active: Vec<&CgConfig> = u.cgs.iter().filter(|c| u.states.is_active(c.cfg.cg_id)).map(|c| &c.cfg).collect();
                if active.is_empty() {
                    return;
                }
                let index_of = |cg_id: u8| u.cgs.iter().position(|c| c.cfg.cg_id == cg_id).unwrap_or(0);
                let cell = std::cell::RefCell::new(HashMap::new());
                let occasions = |c: &CgConfig, period: u64| {
                    let ci = index_of(c.cg_id);
                    let rc = cell
                        .borrow_mut()
                        .entry((ci, period))
                        .or_insert_with(|| Rc::new(compute_layout(&u.cgs[ci], &this.carriers, profile, period)))
                        .clone();
                    rc.as_ref().clone()
                };
                let first_free = |cg_id: u8, period: u64| {
                    let ci = index_of(cg_id);
                    if this.harq_for_period(ue, ci, period).is_none() {
                        return u32::MAX;
                    }
                    u.reserved.get(&(ci, period)).copied().unwrap_or(0)
                };
                select_grant(&active, profile, ready, occasions, first_free)
            };
            let Some(choice) = choice else { return };
            let cg = self.ues[ue].cgs.iter().position(|c| c.cfg.cg_id == choice.cg_id).unwrap_or(0);
            self.ues[ue].queue.pop_front();
            let arrival_slot = arrival / SPS;
            let arrival_period = period_containing(&self.ues[ue].cgs[cg].cfg, arrival_slot);
            if let Some(p) = self.packets.get_mut(&pid) {
                p.cg = Some(cg);
                p.arrival_period = arrival_period;
            }
            if choice.waited && self.cfg.ues[ue].miss_policy == MissPolicy::Drop {
                self.metrics[ue].dropped += 1;
                if let Some(p) = self.packets.get_mut(&pid) {
                    p.dropped = true;
                }
                self.log(ue, None, TraceKind::Dropped { packet: pid });
                self.close_packet(ue, pid);
                continue;
            }
            let Some(h) = self.harq_for_period(ue, cg, choice.period_index) else { return };
            self.start_block(ue, cg, h, pid, choice.period_index, choice.start_index);
        }
    }

    /// Starts a new transport block for `pid` on process `h`.
    fn start_block(&mut self, ue: usize, cg: usize, h: usize, pid: u64, period: u64, start: u32) {
        let tos = self.layout(ue, cg, period);
        let first = tos[start as usize..].iter().find(|t| t.valid).map_or(tos[start as usize].nominal_start, |t| t.start());
        let cgt = self.ues[ue].cgs[cg].cfg.cg_timer_slots() as u64 * SPS;
        self.next_tb += 1;
        let tb = self.next_tb;
        {
            let slot = &mut self.ues[ue].harq[h];
            slot.proc.begin(first, cgt);
            slot.packet = Some(pid);
            slot.tb = tb;
            slot.attempt_sent = 0;
        }
        let deadline = self.ues[ue].harq[h].proc.cgt_deadline;
        let ue_id = self.ues[ue].ue_id;
        self.push(deadline, Rank::Timer, ue_id, EventKind::Timer { ue, harq: h, kind: TimerKind::Cgt, gen: tb });
        let planned = self.plan_bundle(ue, cg, h, period, start, false, false);
        let k = self.ues[ue].cgs[cg].cfg.repetitions;
        let ready_slot = self.packets[&pid].packet.arrival_time.max(self.now).div_ceil(SPS);
        let sent = planned.len() as u32;
        let mut last = planned;
        if let Some(pool) = self.pool.filter(|_| self.profile != FeatureProfile::NruR16) {
            if let Fallback::Shared(picks) = shared_pool_fallback(k, sent, Some(&pool), ready_slot, &mut self.rng) {
                let carrier = self.ues[ue].cgs[cg].cfg.carrier_id;
                let slots = self.usable_slots(carrier, ready_slot, picks.len());
                for (j, (pick, slot)) in picks.into_iter().zip(slots).enumerate() {
                    let pick = SharedOccasion { slot, occasion: pick.occasion };
                    let rv = self.ues[ue].cgs[cg].cfg.rv_pattern.rv_at(sent + j as u32);
                    let id = self.plan_shared(ue, cg, h, period, pick, rv);
                    last.push(id);
                }
            }
        }
        self.mark_last(&last);
    }

    /// First `n` slots from `from` whose every symbol is usable uplink.
    fn usable_slots(&self, carrier: CarrierId, from: u64, n: usize) -> Vec<u64> {
        let Some(tdd) = self.carriers.get(&carrier) else { return Vec::new() };
        (from..)
            .filter(|&s| (0..SYMBOLS_PER_SLOT).all(|sym| tdd.is_valid_symbol(s, sym)))
            .take(n)
            .collect()
    }

    fn mark_last(&mut self, ids: &[u64]) {
        let last = ids.iter().copied().max_by_key(|id| (self.txs[id].tx.end(), *id));
        if let Some(id) = last {
            if let Some(t) = self.txs.get_mut(&id) {
                t.last_in_attempt = true;
            }
        }
    }

    /// Plans the CG repetitions of the block on `h` from occasion `start`.
    #[allow(clippy::too_many_arguments)]
    fn plan_bundle(&mut self, ue: usize, cg: usize, h: usize, period: u64, start: u32, nru_retx: bool, cn_retx: bool) -> Vec<u64> {
        let tos = self.layout(ue, cg, period);
        let (ue_id, ndi, harq_id) = {
            let u = &self.ues[ue];
            (u.ue_id, u.harq[h].proc.ndi, u.harq[h].proc.harq_id)
        };
        let planned = {
            let c = &self.ues[ue].cgs[cg].cfg;
            transmit_repetitions(RepetitionRequest { ue_id, cfg: c, profile: self.profile, occasions: &tos, start, harq_id, ndi })
        };
        let Ok(planned) = planned else { return Vec::new() };
        let m = &mut self.metrics[ue];
        m.skipped_invalid += planned.skipped_invalid as u64;
        m.skipped_missed += planned.skipped_missed as u64;
        m.reps_scheduled += (planned.skipped_invalid + planned.skipped_missed) as u64;
        let end = planned.transmissions.iter().map(|t| t.occasion_index + 1).max().unwrap_or(start);
        let reserved_to = match self.profile {
            FeatureProfile::NruR16 => end,
            _ => self.ues[ue].cgs[cg].cfg.repetitions,
        };
        let r = self.ues[ue].reserved.entry((cg, period)).or_insert(0);
        *r = (*r).max(reserved_to);
        let (rbs, rb_lo, rb_hi) = {
            let c = &self.ues[ue].cgs[cg];
            (c.rbs, c.rb_lo, c.rb_hi)
        };
        let mut ids = Vec::new();
        for tx in planned.transmissions {
            let grid = GridRef { carrier_id: tx.carrier_id, start: tx.start(), end: tx.end(), rb_lo, rb_hi };
            ids.push(self.add_tx(ue, h, tx, None, rbs, grid, nru_retx, cn_retx));
        }
        ids
    }

    fn plan_shared(&mut self, ue: usize, cg: usize, h: usize, period: u64, pick: SharedOccasion, rv: u8) -> u64 {
        let u = &self.ues[ue];
        let c = &u.cgs[cg].cfg;
        let span = SymbolSpan { carrier_id: c.carrier_id, slot: pick.slot, start_symbol: 0, length: SYMBOLS_PER_SLOT };
        let tx = Transmission {
            ue_id: u.ue_id,
            cg_id: c.cg_id,
            period_index: period,
            occasion_index: pick.occasion,
            rv,
            harq_id: u.harq[h].proc.harq_id,
            ndi: u.harq[h].proc.ndi,
            segments: vec![Segment { span, nominal_index: 0 }],
            carrier_id: c.carrier_id,
            resource: TxResource::Shared,
            cg_uci: None,
        };
        let rb = SHARED_RB_BASE + pick.occasion;
        let grid = GridRef { carrier_id: c.carrier_id, start: tx.start(), end: tx.end(), rb_lo: rb, rb_hi: rb };
        let rbs = u.cgs[cg].rbs;
        self.metrics[ue].reps_scheduled += 1;
        self.add_tx(ue, h, tx, Some(pick), rbs, grid, false, false)
    }

    /// Registers a planned transmission, resolves overlaps with the UE's
    /// other pending transmissions and queues its start event.
    #[allow(clippy::too_many_arguments)]
    fn add_tx(
        &mut self,
        ue: usize,
        h: usize,
        tx: Transmission,
        shared: Option<SharedOccasion>,
        rbs: u32,
        grid: GridRef,
        nru_retx: bool,
        cn_retx: bool,
    ) -> u64 {
        if shared.is_none() {
            self.metrics[ue].reps_scheduled += 1;
        }
        let id = self.next_tx;
        self.next_tx += 1;
        let (tb, packet) = {
            let slot = &self.ues[ue].harq[h];
            (slot.tb, slot.packet.unwrap_or(u64::MAX))
        };
        let start = tx.start();
        let ue_id = self.ues[ue].ue_id;
        self.txs.insert(
            id,
            PlannedTx { ue, harq: h, tb, packet, tx, shared, rbs, grid, cancelled: false, last_in_attempt: false, nru_retx, cn_retx },
        );
        if shared.is_none() {
            self.resolve_pending(ue, id);
        }
        self.ues[ue].pending.push(id);
        self.push(start, Rank::TxStart, ue_id, EventKind::TxStart(id));
        id
    }

    fn claim(&self, id: u64) -> GrantClaim {
        let t = &self.txs[&id];
        let cg = &self.ues[t.ue].cgs[self.ues[t.ue].harq[t.harq].cg].cfg;
        GrantClaim {
            kind: match t.tx.resource {
                TxResource::Dynamic => GrantKind::Dynamic,
                _ => GrantKind::Configured { cg_id: cg.cg_id },
            },
            priority: cg.phy_priority,
            start: t.tx.start(),
            has_data: true,
            nru_retransmission: t.nru_retx,
        }
    }

    fn resolve_pending(&mut self, ue: usize, id: u64) {
        let new = &self.txs[&id];
        let (carrier, s, e) = (new.tx.carrier_id, new.tx.start(), new.tx.end());
        let clashing: Vec<u64> = self.ues[ue]
            .pending
            .iter()
            .copied()
            .filter(|o| {
                let t = &self.txs[o];
                !t.cancelled && t.shared.is_none() && t.tx.carrier_id == carrier && t.tx.start() < e && s < t.tx.end()
            })
            .collect();
        if clashing.is_empty() {
            return;
        }
        let mut ids = clashing;
        ids.push(id);
        let claims: Vec<GrantClaim> = ids.iter().map(|&i| self.claim(i)).collect();
        let res = resolve_overlap(self.profile, &claims);
        for i in res.cancelled {
            if let Some(t) = self.txs.get_mut(&ids[i]) {
                t.cancelled = true;
            }
        }
    }

    fn skip(&mut self, id: u64, reason: SkipReason) {
        let Some(t) = self.txs.remove(&id) else { return };
        let m = &mut self.metrics[t.ue];
        match reason {
            SkipReason::Cancelled => m.skipped_cancelled += 1,
            SkipReason::Aborted => m.skipped_aborted += 1,
            SkipReason::Lbt => m.skipped_lbt += 1,
        }
        self.log(t.ue, Some(t.harq), TraceKind::Skipped { packet: t.packet, reason });
        if t.last_in_attempt {
            self.attempt_closed_unsent(t.ue, t.harq, t.tb);
        }
    }

    /// NR-U: an attempt that never reached the air is retried at the next
    /// occasion, since no feedback or timer will ever follow it.
    fn attempt_closed_unsent(&mut self, ue: usize, h: usize, tb: u64) {
        let slot = &self.ues[ue].harq[h];
        if self.profile != FeatureProfile::NruR16 || slot.tb != tb || slot.attempt_sent > 0 || !slot.proc.is_busy() {
            return;
        }
        self.nru_retransmit(ue, h, false);
    }

    fn on_tx_start(&mut self, id: u64) {
        let Some(t) = self.txs.get(&id) else { return };
        let (ue, h, tb) = (t.ue, t.harq, t.tb);
        self.ues[ue].pending.retain(|&p| p != id);
        if t.cancelled {
            return self.skip(id, SkipReason::Cancelled);
        }
        let slot = &self.ues[ue].harq[h];
        if slot.tb != tb || !slot.proc.may_transmit_at(self.now) {
            return self.skip(id, SkipReason::Aborted);
        }
        let mut backoff = 0;
        if self.profile == FeatureProfile::NruR16 {
            if let Some(lbt) = self.cfg.ues[ue].lbt.clone() {
                let len = self.txs[&id].tx.segments.first().map_or(0, |s| s.span.length);
                let ue_rt = &mut self.ues[ue];
                ue_rt.ffp.forget_before(self.now, &lbt);
                match lbt_gate(&lbt, self.now, len, &mut ue_rt.ffp, &mut self.rng) {
                    LbtOutcome::Blocked => {
                        self.metrics[ue].lbt_blocks += 1;
                        return self.skip(id, SkipReason::Lbt);
                    }
                    LbtOutcome::Proceed { backoff: b } => backoff = b,
                }
            }
        }
        let t = self.txs.get_mut(&id).expect("planned transmission");
        if backoff > 0 {
            if let Some(seg) = t.tx.segments.first_mut() {
                seg.span.start_symbol += backoff;
                seg.span.length -= backoff;
            }
            t.grid.start = t.tx.start();
        }
        let (end, packet, shared, cg_uci) = (t.tx.end(), t.packet, t.shared, t.tx.cg_uci.is_some());
        let log_kind = TraceKind::Tx {
            packet,
            cg_id: t.tx.cg_id,
            period: t.tx.period_index,
            occasion: t.tx.occasion_index,
            rv: t.tx.rv,
            resource: t.tx.resource,
            cg_uci,
        };
        let (resource, tx_cg, tx_period) = (t.tx.resource, t.tx.cg_id, t.tx.period_index);
        let grid = t.grid;
        let retx = self.cfg.ues[ue].configured_grants[self.ues[ue].harq[h].cg].cg_retx_timer;
        let nru_tos = self.cfg.ues[ue].configured_grants[self.ues[ue].harq[h].cg].nru_tos_per_slot.max(1) as u64;
        let retx_deadline = match (self.profile, retx) {
            (FeatureProfile::NruR16, Some(n)) => Some(self.now + n as u64 * SPS / nru_tos),
            _ => None,
        };
        let ue_id = self.ues[ue].ue_id;
        {
            let slot = &mut self.ues[ue].harq[h];
            slot.proc.on_transmit(self.now, retx_deadline);
            slot.retx_gen += 1;
            slot.last_tx_end = end;
            slot.attempt_sent += 1;
        }
        let gen = self.ues[ue].harq[h].retx_gen;
        if let Some(d) = retx_deadline {
            self.push(d, Rank::Timer, ue_id, EventKind::Timer { ue, harq: h, kind: TimerKind::Retx, gen });
        }
        let m = &mut self.metrics[ue];
        m.reps_emitted += 1;
        if cg_uci {
            m.cg_uci_tx += 1;
        }
        if let Some(pick) = shared {
            m.shared_tx += 1;
            self.shared_slot(pick.slot).explicit.push((pick.occasion, id));
        }
        if let Some(p) = self.packets.get_mut(&packet) {
            if p.first_tx.is_none() {
                p.first_tx = Some(self.now);
                let wait = (self.now as f64 - p.packet.arrival_instant) / SPS as f64;
                let m = &mut self.metrics[ue];
                m.initial_tx += 1;
                m.alignment_delay_sum += wait;
                m.alignment_delay_sq_sum += wait * wait;
            }
            let cg_id = p.cg.map(|c| self.ues[ue].cgs[c].cfg.cg_id);
            if resource == TxResource::Configured && cg_id == Some(tx_cg) && p.arrival_period == Some(tx_period) {
                p.in_period += 1;
            }
        }
        let u = &mut self.ues[ue];
        u.recent.push_back((grid, h, tb));
        if u.recent.len() > RECENT_GRIDS {
            u.recent.pop_front();
        }
        self.log(ue, Some(h), log_kind);
        self.push(end, Rank::Reception, ue_id, EventKind::Reception(id));
    }

    fn shared_slot(&mut self, slot: u64) -> &mut SlotPool {
        let pool = self.pool.expect("shared transmission without a pool");
        let (background, rng) = (self.background, &mut self.rng);
        self.shared.entry(slot).or_insert_with(|| {
            let mut active = Vec::new();
            for _ in 0..background {
                if rng.gen_bool(pool.activity_q) {
                    active.push(rng.gen_range(0..pool.k_plus));
                }
            }
            let background = active;
            SlotPool { explicit: Vec::new(), background }
        })
    }

    fn collided(&mut self, pick: SharedOccasion, id: u64) -> bool {
        let pool = self.shared_slot(pick.slot);
        let mut keys: Vec<u32> = pool.explicit.iter().map(|&(o, _)| o).collect();
        let mine = pool.explicit.iter().position(|&(_, t)| t == id).unwrap_or(0);
        keys.extend_from_slice(&pool.background);
        let survived = resolve_collisions(&keys, true).map(|v| v[mine]).unwrap_or(false);
        !survived
    }

    fn on_reception(&mut self, id: u64) {
        let Some(t) = self.txs.remove(&id) else { return };
        let ue = t.ue;
        if let Some(pick) = t.shared {
            if self.collided(pick, id) {
                self.metrics[ue].collisions += 1;
                self.log(ue, Some(t.harq), TraceKind::Collision { packet: t.packet });
                return self.after_reception(&t, DetectionOutcome::NotDetected, false);
            }
        }
        let link = &self.cfg.ues[ue].link;
        let ue_id = self.ues[ue].ue_id;
        let detection = detect(ue_id, self.population, link, &mut self.rng);
        self.log(ue, Some(t.harq), TraceKind::Detection { packet: t.packet, outcome: detection });
        let mut decoded = false;
        match detection {
            DetectionOutcome::Identified(_) => {
                let key = (ue, t.harq, t.tb);
                let threshold = match self.soft.get(&key) {
                    Some(e) => e.threshold,
                    None => 1.0 - self.rng.gen::<f64>(),
                };
                let segs: Vec<ReceivedSegment> = t
                    .tx
                    .segments
                    .iter()
                    .map(|s| ReceivedSegment { repetition: id as u32, symbols: s.span.length, rbs: t.rbs, rv: t.tx.rv })
                    .collect();
                decoded = self.soft.combine(key, &segs, threshold, &link.bler, link.gamma());
                if t.cn_retx {
                    if let Some(p) = self.packets.get_mut(&t.packet) {
                        if !p.recovered {
                            p.recovered = true;
                            self.metrics[ue].cn_recoveries += 1;
                        }
                    }
                }
                if decoded {
                    self.deliver(ue, t.harq, t.packet);
                }
            }
            DetectionOutcome::Misdetected(_) => self.metrics[ue].misdetections += 1,
            DetectionOutcome::UnknownDetection => self.metrics[ue].unknown_detections += 1,
            DetectionOutcome::NotDetected => {}
        }
        self.after_reception(&t, detection, decoded);
    }

    fn deliver(&mut self, ue: usize, h: usize, pid: u64) {
        let numerology = self.cfg.numerology;
        let Some(p) = self.packets.get_mut(&pid) else { return };
        if p.decoded {
            return;
        }
        p.decoded = true;
        p.packet.delivered_time = Some(self.now);
        let m = &mut self.metrics[ue];
        m.delivered += 1;
        if p.packet.within_deadline() {
            m.delivered_in_deadline += 1;
        }
        if let Some(l) = p.packet.latency() {
            m.latencies_us.push(symbols_to_us(l, numerology));
        }
        self.log(ue, Some(h), TraceKind::Delivered { packet: pid });
    }

    fn after_reception(&mut self, t: &PlannedTx, detection: DetectionOutcome, decoded: bool) {
        let unknown_nack = matches!(detection, DetectionOutcome::UnknownDetection) && self.policy.common_nack;
        if !(decoded || t.last_in_attempt || unknown_nack) {
            return;
        }
        let outcome = ProcessOutcome {
            ue_id: self.ues[t.ue].ue_id,
            harq_id: self.ues[t.ue].harq[t.harq].proc.harq_id,
            detection,
            decoded,
            grid: t.grid,
            harq_processes: self.ues[t.ue].harq.len() as u32,
        };
        for msg in emit_feedback(self.profile, &[outcome], &self.policy, self.now) {
            let ue_id = match &msg {
                FeedbackMessage::RetxDci { ue_id, .. } | FeedbackMessage::CgDfi { ue_id, .. } => *ue_id,
                FeedbackMessage::CommonNack { .. } => 0,
            };
            self.push(msg.at(), Rank::Feedback, ue_id, EventKind::Feedback(msg));
        }
    }

    fn ue_index(&self, ue_id: u32) -> Option<usize> {
        self.ues.iter().position(|u| u.ue_id == ue_id)
    }

    fn on_feedback(&mut self, msg: FeedbackMessage) {
        match msg {
            FeedbackMessage::RetxDci { ue_id, dci, .. } => {
                let Some(ue) = self.ue_index(ue_id) else { return };
                let Some(h) = self.ues[ue].harq.iter().position(|s| s.proc.harq_id == dci.harq_field) else { return };
                if self.ues[ue].harq[h].proc.nr_feedback_step(self.now, Some(&dci)) == NrAction::Retransmit {
                    self.log(ue, Some(h), TraceKind::RetxGrant);
                    self.dynamic_retransmit(ue, h);
                }
            }
            FeedbackMessage::CgDfi { ue_id, generated_at, ack_bitmap, .. } => {
                let Some(ue) = self.ue_index(ue_id) else { return };
                for (h, &bit) in ack_bitmap.iter().enumerate().take(self.ues[ue].harq.len()) {
                    let slot = &self.ues[ue].harq[h];
                    if !slot.proc.is_busy() {
                        continue;
                    }
                    let dfi = if bit {
                        Some(true)
                    } else if slot.last_tx_end <= generated_at && slot.proc.state == HarqState::AwaitingFeedback {
                        Some(false)
                    } else {
                        continue;
                    };
                    let action = self.ues[ue].harq[h].proc.nru_feedback_step(self.now, dfi);
                    self.on_nru_action(ue, h, action);
                }
            }
            FeedbackMessage::CommonNack { grid, .. } => {
                for ue in 0..self.ues.len() {
                    let p_cn = self.cfg.ues[ue].link.p_cn;
                    let decoded = self.rng.gen_bool(p_cn);
                    let own: Vec<GridRef> = self.ues[ue].recent.iter().map(|r| r.0).collect();
                    let Some(i) = handle_common_nack(&own, &grid, decoded) else {
                        if own.iter().any(|g| g.overlaps(&grid)) {
                            self.log(ue, None, TraceKind::CommonNack { decoded });
                        }
                        continue;
                    };
                    self.metrics[ue].cn_decoded += 1;
                    self.log(ue, None, TraceKind::CommonNack { decoded });
                    let (_, h, tb) = self.ues[ue].recent[i];
                    let slot = &self.ues[ue].harq[h];
                    if slot.tb == tb && slot.proc.is_busy() {
                        self.cn_retransmit(ue, h);
                    }
                }
            }
        }
    }

    fn on_nru_action(&mut self, ue: usize, h: usize, action: NruAction) {
        match action {
            NruAction::None => {}
            NruAction::Ack => {
                self.log(ue, Some(h), TraceKind::Ack);
                self.release_process(ue, h);
            }
            NruAction::Failed => {
                self.log(ue, Some(h), TraceKind::Failed);
                self.release_process(ue, h);
            }
            NruAction::Retransmit => {
                self.log(ue, Some(h), TraceKind::AutonomousRetx);
                self.nru_retransmit(ue, h, true);
            }
        }
    }

    fn on_timer(&mut self, ue: usize, h: usize, kind: TimerKind, gen: u64) {
        let slot = &self.ues[ue].harq[h];
        let current = match kind {
            TimerKind::Retx => slot.retx_gen == gen,
            TimerKind::Cgt => slot.tb == gen,
        };
        if !current || !slot.proc.is_busy() {
            return;
        }
        if self.profile == FeatureProfile::NruR16 {
            let action = self.ues[ue].harq[h].proc.nru_feedback_step(self.now, None);
            return self.on_nru_action(ue, h, action);
        }
        if kind == TimerKind::Cgt && self.ues[ue].harq[h].proc.nr_feedback_step(self.now, None) == NrAction::ImplicitAck {
            self.log(ue, Some(h), TraceKind::ImplicitAck);
            self.release_process(ue, h);
        }
    }

    /// Releases process `h` after ACK, implicit ACK or failure.
    fn release_process(&mut self, ue: usize, h: usize) {
        let (tb, packet) = {
            let slot = &mut self.ues[ue].harq[h];
            if !slot.proc.is_done() {
                slot.proc.ack();
            }
            (slot.tb, slot.packet.take())
        };
        self.soft.flush(&(ue, h, tb));
        if let Some(pid) = packet {
            self.close_packet(ue, pid);
        }
        self.try_schedule(ue);
    }

    fn close_packet(&mut self, ue: usize, pid: u64) {
        let Some(p) = self.packets.remove(&pid) else { return };
        self.metrics[ue].record_in_period(p.in_period);
        if self.cfg.trace {
            self.records.push(PacketRecord {
                cg_id: p.cg.map(|c| self.ues[ue].cgs[c].cfg.cg_id),
                arrival_period: p.arrival_period,
                in_period_reps: p.in_period,
                first_tx: p.first_tx,
                dropped: p.dropped,
                packet: p.packet,
            });
        }
    }

    /// NR: grant-based retransmission in the first usable slot after the DCI.
    fn dynamic_retransmit(&mut self, ue: usize, h: usize) {
        let cg = self.ues[ue].harq[h].cg;
        let (sliv, carrier) = {
            let c = &self.ues[ue].cgs[cg].cfg;
            (c.sliv, c.carrier_id)
        };
        let Some(tdd) = self.carriers.get(&carrier) else { return };
        let from = self.now.div_ceil(SPS);
        let deadline = self.ues[ue].harq[h].proc.cgt_deadline;
        let slot = (from..from + DYNAMIC_SEARCH_SLOTS).find(|&s| {
            (sliv.start_symbol..sliv.start_symbol + sliv.length).all(|sym| tdd.is_valid_symbol(s, sym)) && s * SPS < deadline
        });
        let Some(slot) = slot else { return };
        let span = SymbolSpan { carrier_id: carrier, slot, start_symbol: sliv.start_symbol, length: sliv.length };
        let u = &self.ues[ue];
        let tx = Transmission {
            ue_id: u.ue_id,
            cg_id: u.cgs[cg].cfg.cg_id,
            period_index: u64::MAX,
            occasion_index: 0,
            rv: 0,
            harq_id: u.harq[h].proc.harq_id,
            ndi: u.harq[h].proc.ndi,
            segments: vec![Segment { span, nominal_index: 0 }],
            carrier_id: carrier,
            resource: TxResource::Dynamic,
            cg_uci: None,
        };
        let c = &u.cgs[cg];
        let grid = GridRef { carrier_id: carrier, start: tx.start(), end: tx.end(), rb_lo: c.rb_lo, rb_hi: c.rb_hi };
        let rbs = c.rbs;
        let id = self.add_tx(ue, h, tx, None, rbs, grid, false, false);
        self.mark_last(&[id]);
    }

    /// First occasion at or after now on the process's own grant that is a
    /// permitted start and not taken by another block.
    fn next_start(&mut self, ue: usize, cg: usize) -> Option<(u64, u32)> {
        let c = &self.ues[ue].cgs[cg].cfg;
        let allowed = allowed_start_indices(c, self.profile);
        let first = period_containing(c, self.now / SPS).unwrap_or(0);
        for period in first..first + RETX_SEARCH_PERIODS {
            let tos = self.layout(ue, cg, period);
            let taken = self.ues[ue].reserved.get(&(cg, period)).copied().unwrap_or(0);
            if let Some(&i) = allowed.iter().find(|&&i| i >= taken && tos[i as usize].valid && tos[i as usize].nominal_start >= self.now) {
                return Some((period, i));
            }
        }
        None
    }

    /// NR-U: retransmission on the next free occasion of the same grant.
    fn nru_retransmit(&mut self, ue: usize, h: usize, after_feedback: bool) {
        let cg = self.ues[ue].harq[h].cg;
        let Some((period, start)) = self.next_start(ue, cg) else { return };
        self.ues[ue].harq[h].attempt_sent = 0;
        let ids = self.plan_bundle(ue, cg, h, period, start, after_feedback, false);
        self.mark_last(&ids);
    }

    /// Retransmission triggered by a group-common NACK naming this UE's grid.
    fn cn_retransmit(&mut self, ue: usize, h: usize) {
        let cg = self.ues[ue].harq[h].cg;
        let Some((period, start)) = self.next_start(ue, cg) else { return };
        self.log(ue, Some(h), TraceKind::CommonNackRetx);
        let ids = self.plan_bundle(ue, cg, h, period, start, self.profile == FeatureProfile::NruR16, true);
        self.mark_last(&ids);
    }

    fn on_dci(&mut self, ue: usize, index: usize) {
        let ev = self.cfg.ues[ue].dci_events[index].clone();
        match ev.dci.purpose {
            DciPurpose::Activate => {
                if self.ues[ue].states.apply_activation(&ev.dci, self.profile).is_some() {
                    self.ues[ue].states.confirm();
                    self.try_schedule(ue);
                }
            }
            DciPurpose::Release => {
                let targets: BTreeSet<u8> = ev.targets.iter().copied().collect();
                let released = self.ues[ue].states.apply_release(&ev.dci, self.profile, &targets).unwrap_or_default();
                self.ues[ue].states.confirm();
                let pending = self.ues[ue].pending.clone();
                for id in pending {
                    if let Some(t) = self.txs.get_mut(&id) {
                        if released.contains(&t.tx.cg_id) && t.tx.resource == TxResource::Configured {
                            t.cancelled = true;
                        }
                    }
                }
            }
            _ => {}
        }
    }

    /// Closes the run: transmissions and packets still open count as aborted
    /// and undelivered.
    pub fn finish(mut self, replication: u32) -> ReplicationResult {
        // Transmissions already on air are counted as emitted; only the ones
        // that never started are aborted.
        let mut open: Vec<u64> = self.ues.iter().flat_map(|u| u.pending.iter().copied()).collect();
        open.sort_unstable();
        for id in open {
            if let Some(t) = self.txs.remove(&id) {
                let m = &mut self.metrics[t.ue];
                if t.cancelled {
                    m.skipped_cancelled += 1;
                } else {
                    m.skipped_aborted += 1;
                }
            }
        }
        self.txs.clear();
        let mut rest: Vec<(u64, usize)> = self
            .packets
            .iter()
            .map(|(&id, p)| (id, self.ues.iter().position(|u| u.ue_id == p.packet.ue_id).unwrap_or(0)))
            .collect();
        rest.sort_unstable();
        for (id, ue) in rest {
            self.close_packet(ue, id);
        }
        for m in &mut self.metrics {
            m.finalize();
        }
        self.records.sort_by_key(|r| r.packet.id);
        ReplicationResult { replication, ues: self.metrics, trace: self.trace, packets: self.records, events: self.events }
    }
}

fn compute_layout(cg: &CgRt, carriers: &CarrierMap, profile: FeatureProfile, period: u64) -> Vec<TransmissionOccasion> {
    let tdd = carriers.get(&cg.cfg.carrier_id).expect("carrier validated with the scenario");
    occasions_in_period(&cg.cfg, profile, tdd, period, cg.complement).expect("grant layout validated with the scenario")
}

fn layout_of(u: &mut UeRt, carriers: &CarrierMap, profile: FeatureProfile, cg: usize, period: u64) -> Rc<Vec<TransmissionOccasion>> {
    if u.layouts.len() > 256 {
        let keep = period.saturating_sub(2);
        u.layouts.retain(|&(_, p), _| p >= keep);
        u.reserved.retain(|&(_, p), _| p >= keep);
    }
    u.layouts
        .entry((cg, period))
        .or_insert_with(|| Rc::new(compute_layout(&u.cgs[cg], carriers, profile, period)))
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::SharedPoolConfig;
    use crate::cg_core::RvPattern;
    use crate::gnb_model::{BlerModel, LinkModel};
    use crate::sim::scenario::UeConfig;
    use crate::ue_mac::TrafficModel;

    fn nru_scenario(p_e: f64) -> ScenarioConfig {
        let mut cg = CgConfig::new(0, 16, 1, RvPattern::Rv0000);
        cg.nru_slots = 16;
        cg.nru_tos_per_slot = 1;
        cg.cg_retx_timer = Some(4);
        cg.cg_timer = Some(8);
        let traffic = TrafficModel::Deterministic { period_slots: 16, phase_slots: 0, payload_bits: 64 };
        let mut ue = UeConfig::new(0, vec![cg], traffic);
        ue.link = LinkModel { p_e, bler: BlerModel::Bernoulli { epsilon: 0.0 }, ..LinkModel::default() };
        let mut s = ScenarioConfig::new(FeatureProfile::NruR16, vec![ue], 16);
        s.trace = true;
        s.validate().unwrap();
        s
    }

    fn timeline(r: &ReplicationResult) -> Vec<(&'static str, u64)> {
        r.trace
            .iter()
            .filter_map(|e| match e.kind {
                TraceKind::Tx { .. } => Some(("tx", e.at)),
                TraceKind::Ack => Some(("ack", e.at)),
                TraceKind::Failed => Some(("failed", e.at)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn nru_retransmits_on_timer_then_fails() {
        let r = run_replication(&nru_scenario(0.0), 0);
        assert_eq!(timeline(&r), vec![("tx", 0), ("tx", 56), ("failed", 112)]);
    }

    #[test]
    fn nru_dfi_acks() {
        let r = run_replication(&nru_scenario(1.0), 0);
        assert_eq!(timeline(&r), vec![("tx", 0), ("ack", 28)]);
        assert_eq!(r.ues[0].delivered, 1);
        assert_eq!(r.ues[0].cg_uci_tx, 1);
    }

    fn nr_scenario(k: u32, phase: u32) -> ScenarioConfig {
        let mut cg = CgConfig::new(0, 4, k, RvPattern::Rv0000);
        cg.harq_processes = 2;
        cg.cg_timer = Some(4);
        let traffic = TrafficModel::Deterministic { period_slots: 4, phase_slots: phase, payload_bits: 64 };
        let ue = UeConfig::new(0, vec![cg], traffic);
        let mut s = ScenarioConfig::new(FeatureProfile::NrR16, vec![ue], 400);
        s.seed = 7;
        s.validate().unwrap();
        s
    }

    fn conserved(m: &UeMetrics) -> bool {
        m.reps_scheduled == m.reps_emitted + m.reps_skipped()
    }

    #[test]
    fn perfect_link_delivers_everything() {
        let r = run_replication(&nr_scenario(4, 0), 0);
        let m = &r.ues[0];
        assert_eq!(m.offered, 100);
        assert_eq!(m.delivered, 100);
        assert_eq!(m.reps_emitted, 400);
        assert_eq!(m.in_period_reps_min, Some(4));
        assert!(conserved(m));
        assert_eq!(m.latencies_us.len(), 100);
    }

    #[test]
    fn legacy_start_postpones_to_next_period() {
        let r = run_replication(&nr_scenario(4, 1), 0);
        let m = &r.ues[0];
        assert_eq!(m.in_period_served, 0);
        assert_eq!(m.delivered, m.offered);
        assert!((m.mean_alignment_delay().unwrap() - 3.0).abs() < 1e-12);
        assert!(conserved(m));
    }

    #[test]
    fn drop_policy_discards_missed_packets() {
        let mut s = nr_scenario(4, 1);
        s.ues[0].miss_policy = MissPolicy::Drop;
        let r = run_replication(&s, 0);
        assert_eq!(r.ues[0].dropped, r.ues[0].offered);
        assert_eq!(r.ues[0].reps_emitted, 0);
    }

    #[test]
    fn flexible_start_serves_in_period() {
        let mut s = nr_scenario(4, 1);
        s.enhancements.flexible_start = true;
        s.ues[0].configured_grants[0].flexible_start = true;
        let r = run_replication(&s, 0);
        assert_eq!(r.ues[0].in_period_reps_min, Some(3));
        assert_eq!(r.ues[0].in_period_reps_max, Some(3));
    }

    #[test]
    fn same_seed_same_result() {
        let mut s = nr_scenario(2, 0);
        s.ues[0].link = LinkModel { p_e: 0.9, p_d: 0.8, p_md: 0.1, bler: BlerModel::Bernoulli { epsilon: 0.3 }, ..LinkModel::default() };
        s.trace = true;
        let a = run_replication(&s, 3);
        let b = run_replication(&s, 3);
        assert_eq!(a, b);
        let c = run_replication(&s, 4);
        assert_ne!(a.trace, c.trace);
        assert!(a.ues[0].delivered <= a.ues[0].offered);
        assert!(conserved(&a.ues[0]));
    }

    #[test]
    fn shared_pool_collision_rate() {
        let mut s = nr_scenario(4, 3);
        s.enhancements.flexible_start = true;
        s.enhancements.shared_pool = true;
        s.shared_pool = Some(SharedPoolConfig { k_plus: 2, n_ues: 5, activity_q: 0.5 });
        s.ues[0].configured_grants[0].flexible_start = true;
        s.duration_slots = 40_000;
        let r = run_replication(&s, 0);
        let m = &r.ues[0];
        assert_eq!(m.shared_tx, 3 * m.offered);
        let expected = 1.0 - (1.0 - 0.25f64).powi(4);
        let rate = m.collision_rate().unwrap();
        let se = (expected * (1.0 - expected) / m.shared_tx as f64).sqrt();
        assert!((rate - expected).abs() < 4.0 * se, "rate {rate} expected {expected}");
        assert!(conserved(m));
    }
}
