use proptest::prelude::*;

use cgsim::cg_core::{CgConfig, FeatureProfile, RepetitionType, RvPattern, Sliv};
use cgsim::gnb_model::{bler, resolve_collisions, BlerModel, LinkModel, ReceivedSegment};
use cgsim::sim::{percentiles, run_replication, CarrierConfig, MissPolicy, ScenarioConfig, TraceKind, UeConfig};
use cgsim::time_grid::{segment_type_b, TddPattern, SYMBOLS_PER_SLOT};
use cgsim::ue_mac::TrafficModel;

const SLOT_KINDS: [&str; 4] = ["UUUUUUUUUUUUUU", "DDDDDDDDDDDDDD", "FFFFFFFFFFFFFF", "DDDDUUUUUUUUUU"];

fn tdd_strings() -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(SLOT_KINDS.to_vec()), 1..6)
        .prop_filter("needs an uplink symbol", |v| v.iter().any(|s| s.contains('U') || s.contains('F')))
}

fn pattern() -> impl Strategy<Value = RvPattern> {
    prop::sample::select(vec![RvPattern::Rv0000, RvPattern::Rv0303, RvPattern::Rv0231])
}

#[derive(Debug, Clone)]
struct Case {
    tdd: Vec<&'static str>,
    k: u32,
    period: u32,
    rv: RvPattern,
    type_b: Option<u32>,
    flexible: bool,
    drop: bool,
    p_e: f64,
    epsilon: f64,
    seed: u64,
}

fn case() -> impl Strategy<Value = Case> {
    (
        tdd_strings(),
        1..=4u32,
        0..=4u32,
        pattern(),
        prop::option::of(prop::sample::select(vec![2u32, 4, 7])),
        any::<bool>(),
        any::<bool>(),
        0.5..=1.0f64,
        0.0..0.6f64,
        any::<u64>(),
    )
        .prop_map(|(tdd, k, extra, rv, type_b, flexible, drop, p_e, epsilon, seed)| Case {
            tdd,
            k,
            period: k + extra,
            rv,
            type_b,
            flexible,
            drop,
            p_e,
            epsilon,
            seed,
        })
}

fn scenario(c: &Case) -> ScenarioConfig {
    let mut cg = CgConfig::new(0, c.period, c.k, c.rv);
    if let Some(len) = c.type_b {
        cg.repetition_type = RepetitionType::B;
        cg.sliv = Sliv { start_symbol: 0, length: len };
    }
    cg.flexible_start = c.flexible;
    cg.harq_processes = 2;
    cg.cg_timer = Some(c.period);
    let traffic = TrafficModel::UniformInPeriod { n_slots: c.period, payload_bits: 64 };
    let mut ue = UeConfig::new(0, vec![cg], traffic);
    ue.link = LinkModel { p_e: c.p_e, p_d: 0.9, p_md: 0.05, bler: BlerModel::Bernoulli { epsilon: c.epsilon }, ..LinkModel::default() };
    ue.miss_policy = if c.drop { MissPolicy::Drop } else { MissPolicy::Postpone };
    let mut s = ScenarioConfig::new(FeatureProfile::NrR16, vec![ue], 200);
    s.enhancements.flexible_start = c.flexible;
    s.carriers = vec![CarrierConfig { carrier_id: 0, tdd: c.tdd.join(",") }];
    s.seed = c.seed;
    s.trace = true;
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn type_b_segments_cover_only_valid_symbols(
        tdd in tdd_strings(),
        slot in 0u64..8,
        start in 0u32..SYMBOLS_PER_SLOT,
        len in 1u32..=SYMBOLS_PER_SLOT,
        k in 1u32..=8,
        cross in any::<bool>(),
    ) {
        let pat = TddPattern::from_slot_strings(&tdd).unwrap();
        let segs = segment_type_b(0, slot, start, len, k, &pat, cross).unwrap();
        let base = slot * SYMBOLS_PER_SLOT as u64 + start as u64;
        let mut covered = 0u64;
        for s in &segs {
            let lo = base + (s.nominal_index * len) as u64;
            prop_assert!(s.span.abs_start() >= lo && s.span.abs_end() <= lo + len as u64);
            prop_assert!(s.span.symbols().all(|t| pat.is_valid_abs(t)));
            covered += s.span.length as u64;
        }
        let valid: u64 = (0..k)
            .map(|i| {
                let lo = base + (i * len) as u64;
                let mut hi = lo + len as u64;
                if !cross {
                    hi = hi.min((lo / SYMBOLS_PER_SLOT as u64 + 1) * SYMBOLS_PER_SLOT as u64);
                }
                (lo..hi).filter(|&t| pat.is_valid_abs(t)).count() as u64
            })
            .sum();
        prop_assert_eq!(covered, valid);
    }

    #[test]
    fn adding_a_segment_never_raises_bler(
        reps in prop::collection::vec((1u32..=14, 1u32..=8, prop::sample::select(vec![0u8, 2, 3, 1])), 1..6),
        gamma_db in -10.0..20.0f64,
        epsilon in 0.0..1.0f64,
    ) {
        let gamma = 10f64.powf(gamma_db / 10.0);
        let models = [
            BlerModel::Bernoulli { epsilon },
            BlerModel::FiniteBlocklength { payload_bits: 256, dmrs_overhead: 1, subcarriers_per_rb: 12 },
        ];
        let segs: Vec<ReceivedSegment> = reps
            .iter()
            .enumerate()
            .map(|(i, &(symbols, rbs, rv))| ReceivedSegment { repetition: i as u32, symbols, rbs, rv })
            .collect();
        for m in &models {
            for n in 1..segs.len() {
                prop_assert!(bler(m, gamma, &segs[..n + 1]) <= bler(m, gamma, &segs[..n]) + 1e-15);
            }
        }
    }

    #[test]
    fn shared_survivor_is_alone(keys in prop::collection::vec(0u8..6, 0..20)) {
        let alive = resolve_collisions(&keys, true).unwrap();
        for (i, k) in keys.iter().enumerate() {
            let alone = keys.iter().filter(|x| *x == k).count() == 1;
            prop_assert_eq!(alive[i], alone);
        }
    }

    #[test]
    fn percentiles_are_monotone(mut xs in prop::collection::vec(0.0..1e6f64, 0..3000)) {
        xs.sort_by(f64::total_cmp);
        let p: Vec<f64> = percentiles(&xs).into_iter().flatten().collect();
        prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engine_invariants(c in case()) {
        let s = scenario(&c);
        prop_assume!(s.validate().is_ok());
        let r = run_replication(&s, 0);
        prop_assert_eq!(&r, &run_replication(&s, 0));

        let m = &r.ues[0];
        prop_assert_eq!(m.reps_scheduled, m.reps_emitted + m.reps_skipped());
        prop_assert!(m.delivered_in_deadline <= m.delivered && m.delivered <= m.offered);
        prop_assert!(m.delivered + m.dropped <= m.offered);

        let pat = TddPattern::from_slot_strings(&c.tdd).unwrap();
        prop_assert!(r.trace.windows(2).all(|w| w[0].at <= w[1].at));
        for e in &r.trace {
            if let TraceKind::Tx { .. } = e.kind {
                prop_assert!(pat.is_valid_abs(e.at), "tx at invalid symbol {}", e.at);
            }
        }
        for p in &r.packets {
            if let Some(t) = p.first_tx {
                prop_assert!(t >= p.packet.arrival_time);
            }
            if let Some(d) = p.packet.delivered_time {
                prop_assert!(d > p.packet.arrival_time);
                prop_assert!(p.first_tx.is_some_and(|t| d > t));
            }
        }
    }
}
