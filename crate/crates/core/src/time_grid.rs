//! Numerology, slot/symbol addressing, TDD validity and repetition layout.
//!
//! Absolute time inside the simulator is an integer symbol counter per
//! carrier: `slot * 14 + symbol`. Everything in this module is a pure
//! function of its inputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SYMBOLS_PER_SLOT: u32 = 14;

pub type CarrierId = u8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("unsupported subcarrier spacing {0} kHz (expected 15, 30, 60 or 120)")]
    Numerology(u32),
    #[error("allocation length {0} outside 1..=14")]
    Length(u32),
    #[error("start symbol {0} outside 0..=13")]
    StartSymbol(u32),
    #[error("repetition count must be at least 1")]
    Repetitions,
    #[error("invalid TDD slot string {0:?}: need 14 characters from U, D, F")]
    TddString(String),
    #[error("TDD pattern must contain at least one slot")]
    EmptyTdd,
}

/// Subcarrier spacing and the derived slot timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "NumerologyRepr", into = "NumerologyRepr")]
pub struct Numerology {
    scs_khz: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumerologyRepr {
    scs_khz: u32,
}

impl TryFrom<NumerologyRepr> for Numerology {
    type Error = GridError;
    fn try_from(r: NumerologyRepr) -> Result<Self, GridError> {
        Numerology::new(r.scs_khz)
    }
}

impl From<Numerology> for NumerologyRepr {
    fn from(n: Numerology) -> Self {
        NumerologyRepr { scs_khz: n.scs_khz }
    }
}

impl Numerology {
    pub fn new(scs_khz: u32) -> Result<Self, GridError> {
        match scs_khz {
            15 | 30 | 60 | 120 => Ok(Self { scs_khz }),
            other => Err(GridError::Numerology(other)),
        }
    }

    pub fn scs_khz(&self) -> u32 {
        self.scs_khz
    }

    pub fn symbols_per_slot(&self) -> u32 {
        SYMBOLS_PER_SLOT
    }

    pub fn slot_duration_us(&self) -> f64 {
        1000.0 / (self.scs_khz as f64 / 15.0)
    }

    /// Nominal symbol length, ignoring the longer first cyclic prefix.
    pub fn symbol_duration_us(&self) -> f64 {
        self.slot_duration_us() / SYMBOLS_PER_SLOT as f64
    }
}

impl Default for Numerology {
    fn default() -> Self {
        Self { scs_khz: 120 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "U")]
    Uplink,
    #[serde(rename = "D")]
    Downlink,
    #[serde(rename = "F")]
    Flexible,
}

impl Direction {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'U' => Some(Direction::Uplink),
            'D' => Some(Direction::Downlink),
            'F' => Some(Direction::Flexible),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Direction::Uplink => 'U',
            Direction::Downlink => 'D',
            Direction::Flexible => 'F',
        }
    }
}

/// Per-symbol direction map repeating every `period_slots()` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TddPattern {
    slots: Vec<[Direction; SYMBOLS_PER_SLOT as usize]>,
    flexible_is_uplink: bool,
}

impl TddPattern {
    pub fn all_uplink() -> Self {
        Self {
            slots: vec![[Direction::Uplink; SYMBOLS_PER_SLOT as usize]],
            flexible_is_uplink: true,
        }
    }

    pub fn all_downlink() -> Self {
        Self {
            slots: vec![[Direction::Downlink; SYMBOLS_PER_SLOT as usize]],
            flexible_is_uplink: true,
        }
    }

    /// Builds a pattern from one 14-character string per slot.
    pub fn from_slot_strings<S: AsRef<str>>(slots: &[S]) -> Result<Self, GridError> {
        if slots.is_empty() {
            return Err(GridError::EmptyTdd);
        }
        let slots = slots
            .iter()
            .map(|s| parse_slot(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            slots,
            flexible_is_uplink: true,
        })
    }

    /// Flexible symbols count as uplink unless this is switched off.
    pub fn with_flexible_as_uplink(mut self, allowed: bool) -> Self {
        self.flexible_is_uplink = allowed;
        self
    }

    pub fn period_slots(&self) -> u64 {
        self.slots.len() as u64
    }

    pub fn direction(&self, slot: u64, symbol: u32) -> Direction {
        self.slots[(slot % self.period_slots()) as usize][symbol as usize]
    }

    pub fn is_valid_symbol(&self, slot: u64, symbol: u32) -> bool {
        debug_assert!(symbol < SYMBOLS_PER_SLOT);
        match self.direction(slot, symbol) {
            Direction::Uplink => true,
            Direction::Flexible => self.flexible_is_uplink,
            Direction::Downlink => false,
        }
    }

    /// Validity of an absolute symbol index.
    pub fn is_valid_abs(&self, abs_symbol: u64) -> bool {
        let slot = abs_symbol / SYMBOLS_PER_SLOT as u64;
        let sym = (abs_symbol % SYMBOLS_PER_SLOT as u64) as u32;
        self.is_valid_symbol(slot, sym)
    }

    pub fn to_slot_strings(&self) -> Vec<String> {
        self.slots
            .iter()
            .map(|s| s.iter().map(|d| d.as_char()).collect())
            .collect()
    }
}

fn parse_slot(s: &str) -> Result<[Direction; SYMBOLS_PER_SLOT as usize], GridError> {
    let dirs: Option<Vec<Direction>> = s.chars().map(Direction::from_char).collect();
    match dirs {
        Some(v) if v.len() == SYMBOLS_PER_SLOT as usize => {
            let mut out = [Direction::Uplink; SYMBOLS_PER_SLOT as usize];
            out.copy_from_slice(&v);
            Ok(out)
        }
        _ => Err(GridError::TddString(s.to_owned())),
    }
}

impl FromStr for TddPattern {
    type Err = GridError;

    /// Slots separated by whitespace or commas.
    fn from_str(s: &str) -> Result<Self, GridError> {
        let parts: Vec<&str> = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        Self::from_slot_strings(&parts)
    }
}

impl fmt::Display for TddPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_slot_strings().join(","))
    }
}

/// A contiguous run of symbols inside one slot of one carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SymbolSpan {
    pub carrier_id: CarrierId,
    pub slot: u64,
    pub start_symbol: u32,
    pub length: u32,
}

impl SymbolSpan {
    pub fn new(carrier_id: CarrierId, slot: u64, start_symbol: u32, length: u32) -> Result<Self, GridError> {
        if start_symbol >= SYMBOLS_PER_SLOT {
            return Err(GridError::StartSymbol(start_symbol));
        }
        if length == 0 || start_symbol + length > SYMBOLS_PER_SLOT {
            return Err(GridError::Length(length));
        }
        Ok(Self {
            carrier_id,
            slot,
            start_symbol,
            length,
        })
    }

    pub fn abs_start(&self) -> u64 {
        self.slot * SYMBOLS_PER_SLOT as u64 + self.start_symbol as u64
    }

    /// One past the last symbol.
    pub fn abs_end(&self) -> u64 {
        self.abs_start() + self.length as u64
    }

    pub fn symbols(&self) -> impl Iterator<Item = u64> {
        self.abs_start()..self.abs_end()
    }

    pub fn overlaps(&self, other: &SymbolSpan) -> bool {
        self.carrier_id == other.carrier_id
            && self.abs_start() < other.abs_end()
            && other.abs_start() < self.abs_end()
    }

    pub fn on_carrier(mut self, carrier_id: CarrierId) -> Self {
        self.carrier_id = carrier_id;
        self
    }
}

/// Part of a nominal repetition that is actually transmitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub span: SymbolSpan,
    pub nominal_index: u32,
}

fn check_layout(start_symbol: u32, length: u32, k: u32) -> Result<(), GridError> {
    if start_symbol >= SYMBOLS_PER_SLOT {
        return Err(GridError::StartSymbol(start_symbol));
    }
    if length == 0 || length > SYMBOLS_PER_SLOT {
        return Err(GridError::Length(length));
    }
    if k == 0 {
        return Err(GridError::Repetitions);
    }
    Ok(())
}

/// Splits the absolute half-open interval `[from, to)` at slot borders and
/// at valid/invalid transitions, keeping only the valid runs.
fn valid_runs(carrier_id: CarrierId, from: u64, to: u64, tdd: &TddPattern) -> Vec<SymbolSpan> {
    let sps = SYMBOLS_PER_SLOT as u64;
    let mut out = Vec::new();
    let mut run_start: Option<u64> = None;
    let mut t = from;
    while t <= to {
        let boundary = t == to || (t > from && t.is_multiple_of(sps));
        let valid = t < to && tdd.is_valid_abs(t);
        if let Some(rs) = run_start {
            if boundary || !valid {
                out.push(SymbolSpan {
                    carrier_id,
                    slot: rs / sps,
                    start_symbol: (rs % sps) as u32,
                    length: (t - rs) as u32,
                });
                run_start = None;
            }
        }
        if valid && run_start.is_none() {
            run_start = Some(t);
        }
        t += 1;
    }
    out
}

/// Type B (mini-slot) layout: `k` back-to-back nominal repetitions of
/// `length` symbols starting at `start_symbol` of `start_slot`.
///
/// Each nominal repetition is cut at slot borders and at every switch between
/// valid and invalid symbols. Runs of invalid symbols are dropped. When
/// `cross_slot_allowed` is false, whatever lies past the border of the slot
/// in which a nominal repetition starts is dropped instead of segmented.
pub fn segment_type_b(
    carrier_id: CarrierId,
    start_slot: u64,
    start_symbol: u32,
    length: u32,
    k: u32,
    tdd: &TddPattern,
    cross_slot_allowed: bool,
) -> Result<Vec<Segment>, GridError> {
    check_layout(start_symbol, length, k)?;
    let sps = SYMBOLS_PER_SLOT as u64;
    let base = start_slot * sps + start_symbol as u64;
    let mut out = Vec::new();
    for i in 0..k {
        let from = base + (i * length) as u64;
        let mut to = from + length as u64;
        if !cross_slot_allowed {
            let border = (from / sps + 1) * sps;
            to = to.min(border);
        }
        out.extend(valid_runs(carrier_id, from, to, tdd).into_iter().map(|span| Segment {
            span,
            nominal_index: i,
        }));
    }
    Ok(out)
}

/// Type A (slot aggregation) layout. Repetition `i` reuses the same SLIV in
/// slot `s0 + i * (1 + gap_slots)`; a repetition touching any invalid symbol
/// is dropped whole.
pub fn enumerate_type_a(sliv: SymbolSpan, k: u32, gap_slots: u32, tdd: &TddPattern) -> Result<Vec<Segment>, GridError> {
    check_layout(sliv.start_symbol, sliv.length, k)?;
    if sliv.start_symbol + sliv.length > SYMBOLS_PER_SLOT {
        return Err(GridError::Length(sliv.length));
    }
    let out = (0..k)
        .filter_map(|i| {
            let span = SymbolSpan {
                slot: sliv.slot + i as u64 * (1 + gap_slots as u64),
                ..sliv
            };
            span.symbols()
                .all(|t| tdd.is_valid_abs(t))
                .then_some(Segment { span, nominal_index: i })
        })
        .collect();
    Ok(out)
}

/// Type A layout without TDD filtering, i.e. the nominal occasions.
pub fn nominal_type_a(sliv: SymbolSpan, k: u32, gap_slots: u32) -> Result<Vec<Segment>, GridError> {
    enumerate_type_a(sliv, k, gap_slots, &TddPattern::all_uplink())
}

/// Moves every nominal repetition that the primary TDD pattern would drop or
/// truncate onto `secondary_carrier`, at the same absolute time.
///
/// `nominal` is the pre-drop layout (slot-split but not TDD-filtered).
/// Repetitions fully valid on the primary carrier are kept as they are; a
/// repetition with any invalid symbol is re-emitted whole on the secondary
/// carrier, which is assumed to be uplink-capable everywhere.
pub fn complementary_carrier_map(
    nominal: &[Segment],
    primary_tdd: &TddPattern,
    secondary_carrier: CarrierId,
) -> Vec<Segment> {
    let conflicted: std::collections::BTreeSet<u32> = nominal
        .iter()
        .filter(|s| !s.span.symbols().all(|t| primary_tdd.is_valid_abs(t)))
        .map(|s| s.nominal_index)
        .collect();
    let mut out: Vec<Segment> = nominal
        .iter()
        .map(|s| {
            if conflicted.contains(&s.nominal_index) {
                Segment {
                    span: s.span.on_carrier(secondary_carrier),
                    ..*s
                }
            } else {
                *s
            }
        })
        .collect();
    out.sort_by_key(|s| (s.span.abs_start(), s.span.carrier_id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dddsu() -> TddPattern {
        TddPattern::from_slot_strings(&[
            "DDDDDDDDDDDDDD",
            "DDDDDDDDDDDDDD",
            "DDDDDDDDDDDDDD",
            "DDDDDDDDDDUUUU",
            "UUUUUUUUUUUUUU",
        ])
        .unwrap()
    }

    #[test]
    fn slot_duration_120khz() {
        assert_eq!(Numerology::new(120).unwrap().slot_duration_us(), 125.0);
        assert_eq!(Numerology::new(15).unwrap().slot_duration_us(), 1000.0);
        assert!(Numerology::new(240).is_err());
    }

    #[test]
    fn validity_lookup() {
        assert!(TddPattern::all_uplink().is_valid_symbol(1234, 7));
        let p = TddPattern::from_slot_strings(&["DDDDDDDDDDDDDD", "UUUUUUUUUUUUUU"]).unwrap();
        assert!(!p.is_valid_symbol(0, 5));
        let p = dddsu();
        assert!(p.is_valid_symbol(3, 12));
        assert!(!p.is_valid_symbol(3, 4));
        assert!(p.is_valid_symbol(8, 12));
    }

    #[test]
    fn flexible_symbols_configurable() {
        let p = TddPattern::from_slot_strings(&["FFFFFFFFFFFFFF"]).unwrap();
        assert!(p.is_valid_symbol(0, 0));
        assert!(!p.clone().with_flexible_as_uplink(false).is_valid_symbol(0, 0));
    }

    #[test]
    fn tdd_string_errors() {
        assert!(TddPattern::from_slot_strings(&["UUU"]).is_err());
        assert!(TddPattern::from_slot_strings(&["UUUUUUUUUUUUUX"]).is_err());
        let empty: [&str; 0] = [];
        assert_eq!(TddPattern::from_slot_strings(&empty), Err(GridError::EmptyTdd));
        let p: TddPattern = "DDDDDDDDDDUUUU, UUUUUUUUUUUUUU".parse().unwrap();
        assert_eq!(p.period_slots(), 2);
        assert_eq!(p.to_string(), "DDDDDDDDDDUUUU,UUUUUUUUUUUUUU");
    }

    #[test]
    fn type_b_splits_at_slot_border() {
        let segs = segment_type_b(0, 5, 12, 4, 1, &TddPattern::all_uplink(), true).unwrap();
        assert_eq!(
            segs,
            vec![
                Segment { span: SymbolSpan::new(0, 5, 12, 2).unwrap(), nominal_index: 0 },
                Segment { span: SymbolSpan::new(0, 6, 0, 2).unwrap(), nominal_index: 0 },
            ]
        );
    }

    #[test]
    fn type_b_no_split_needed() {
        let segs = segment_type_b(0, 0, 0, 2, 4, &TddPattern::all_uplink(), true).unwrap();
        assert_eq!(segs.len(), 4);
        for (i, s) in segs.iter().enumerate() {
            assert_eq!(s.nominal_index, i as u32);
            assert_eq!(s.span.start_symbol, 2 * i as u32);
            assert_eq!(s.span.length, 2);
        }
    }

    #[test]
    fn type_b_drops_repetition_in_dl_slot() {
        let tdd = TddPattern::from_slot_strings(&["UUUUUUUUUUUUUU", "DDDDDDDDDDDDDD"]).unwrap();
        let segs = segment_type_b(0, 0, 10, 4, 2, &tdd, true).unwrap();
        assert_eq!(segs, vec![Segment { span: SymbolSpan::new(0, 0, 10, 4).unwrap(), nominal_index: 0 }]);
    }

    #[test]
    fn type_b_without_cross_slot_truncates() {
        let segs = segment_type_b(0, 0, 12, 4, 1, &TddPattern::all_uplink(), false).unwrap();
        assert_eq!(segs, vec![Segment { span: SymbolSpan::new(0, 0, 12, 2).unwrap(), nominal_index: 0 }]);
    }

    #[test]
    fn type_b_multiple_segments_around_invalid_symbols() {
        let tdd = TddPattern::from_slot_strings(&["UUUDDUUUDUUUUU"]).unwrap();
        let segs = segment_type_b(0, 0, 0, 10, 1, &tdd, true).unwrap();
        let lens: Vec<_> = segs.iter().map(|s| (s.span.start_symbol, s.span.length)).collect();
        assert_eq!(lens, vec![(0, 3), (5, 3), (9, 1)]);
    }

    #[test]
    fn layout_errors() {
        let tdd = TddPattern::all_uplink();
        assert_eq!(segment_type_b(0, 0, 0, 15, 1, &tdd, true), Err(GridError::Length(15)));
        assert_eq!(segment_type_b(0, 0, 0, 2, 0, &tdd, true), Err(GridError::Repetitions));
        let sliv = SymbolSpan::new(0, 0, 0, 14).unwrap();
        assert_eq!(enumerate_type_a(sliv, 0, 0, &tdd), Err(GridError::Repetitions));
    }

    #[test]
    fn type_a_slot_aggregation() {
        let sliv = SymbolSpan::new(0, 0, 0, 14).unwrap();
        let slots: Vec<u64> = enumerate_type_a(sliv, 2, 0, &TddPattern::all_uplink())
            .unwrap()
            .iter()
            .map(|s| s.span.slot)
            .collect();
        assert_eq!(slots, vec![0, 1]);
    }

    #[test]
    fn type_a_single_repetition_ignores_gap() {
        let sliv = SymbolSpan::new(0, 3, 2, 4).unwrap();
        for gap in 0..5 {
            let segs = enumerate_type_a(sliv, 1, gap, &TddPattern::all_uplink()).unwrap();
            assert_eq!(segs, vec![Segment { span: sliv, nominal_index: 0 }]);
        }
    }

    #[test]
    fn type_a_with_gap() {
        let sliv = SymbolSpan::new(0, 0, 0, 14).unwrap();
        let slots: Vec<u64> = enumerate_type_a(sliv, 4, 1, &TddPattern::all_uplink())
            .unwrap()
            .iter()
            .map(|s| s.span.slot)
            .collect();
        assert_eq!(slots, vec![0, 2, 4, 6]);
    }

    #[test]
    fn type_a_drops_whole_repetition() {
        let tdd = TddPattern::from_slot_strings(&["UUUUUUUUUUUUUU", "DUUUUUUUUUUUUU"]).unwrap();
        let sliv = SymbolSpan::new(0, 0, 0, 14).unwrap();
        let idx: Vec<u32> = enumerate_type_a(sliv, 4, 0, &tdd).unwrap().iter().map(|s| s.nominal_index).collect();
        assert_eq!(idx, vec![0, 2]);
    }

    #[test]
    fn complementary_map_cases() {
        let sliv = SymbolSpan::new(0, 0, 0, 14).unwrap();
        let nominal = nominal_type_a(sliv, 4, 0).unwrap();

        let out = complementary_carrier_map(&nominal, &TddPattern::all_uplink(), 1);
        assert_eq!(out, nominal);

        let tdd = TddPattern::from_slot_strings(&[
            "UUUUUUUUUUUUUU",
            "UUUUUUUUUUUUUU",
            "DDDDDDDDDDDDDD",
            "DDDDDDDDDDDDDD",
        ])
        .unwrap();
        let out = complementary_carrier_map(&nominal, &tdd, 1);
        let placed: Vec<(u32, u8, u64)> = out.iter().map(|s| (s.nominal_index, s.span.carrier_id, s.span.slot)).collect();
        assert_eq!(placed, vec![(0, 0, 0), (1, 0, 1), (2, 1, 2), (3, 1, 3)]);

        let out = complementary_carrier_map(&nominal, &TddPattern::all_downlink(), 1);
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|s| s.span.carrier_id == 1));
    }
}
