//! Shared test support: an exhaustive slotted-ALOHA oracle, a single-round
//! harness built from the real reader and devices, and event-log helpers.
#![allow(dead_code)]

use std::collections::BTreeMap;

use aiot_core::device::{DeviceParams, DeviceSim};
use aiot_core::reader::{Reader, ReaderEvent};
use aiot_core::{
    DeviceProfile, DeviceState, EnergyStorage, EventRecord, Mechanism, MessageErrorConfig, Payload,
    RoundTiming, StateKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Probability that one given device succeeds when `n` devices each transmit
/// with probability `q` on one of `k` occasions chosen uniformly.
///
/// Enumerates every joint choice, `none` or one occasion per device.
pub fn oracle_success(n: u32, k: u32, q: f64) -> f64 {
    let choices = k + 1;
    let mut total = 0.0;
    for code in 0..choices.pow(n) {
        let mut c = code;
        let mut picks = Vec::with_capacity(n as usize);
        let mut weight = 1.0;
        for _ in 0..n {
            let pick = c % choices;
            c /= choices;
            weight *= if pick == 0 { 1.0 - q } else { q / f64::from(k) };
            picks.push(pick);
        }
        let mine = picks[0];
        if mine != 0 && picks[1..].iter().all(|&p| p != mine) {
            total += weight;
        }
    }
    total
}

pub fn single_channel_timing(k: u16) -> RoundTiming {
    RoundTiming {
        paging_slots: 2,
        msg1_slots: 1,
        msg2_slots: 1,
        msg3_slots: 6,
        ao_time: k,
        ao_freq: 1,
        t_pg: 24,
    }
}

pub fn em_params(timing: RoundTiming) -> DeviceParams {
    let t = DeviceProfile::device1();
    DeviceParams {
        mechanism: Mechanism::Em,
        power: t.power,
        timing,
        t_on_timer: t.t_on_timer_slots,
        t_on_dcm: t.t_on_dcm_slots,
        n_g: 1,
        lp_wur: false,
        errors: MessageErrorConfig::default(),
        slot_duration: t.slot_duration,
    }
}

/// One paging round with `n` fully charged listening devices and no
/// harvesting; returns which devices got their Msg3 through.
pub fn simulate_round(n: u32, params: &DeviceParams, q: f64, trial: u64) -> Vec<bool> {
    let t = DeviceProfile::device1();
    let mut devices: Vec<DeviceSim> = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            rng.set_stream(u64::from(i));
            let storage =
                EnergyStorage::new_unchecked(t.e_max, t.e_up, t.e_low).with_level(t.e_max);
            let mut d = DeviceSim::new(i, None, 0.0, 0.0, storage, rng);
            d.state = DeviceState::OnMonitoring { window_end: None };
            d
        })
        .collect();
    let mut reader_rng = ChaCha8Rng::seed_from_u64(trial);
    reader_rng.set_stream(u64::MAX);
    let mut reader = Reader::new(params.timing, 1, 0, params.errors, reader_rng);
    reader.ledger.q = vec![q];

    let mut success = vec![false; n as usize];
    let mut changes = Vec::new();
    let mut events = Vec::new();
    let mut uplinks = Vec::new();
    let mut round_end = None;
    let mut slot = 0;
    while round_end.is_none_or(|end| slot <= end) && slot < 1_000 {
        reader.begin_slot(slot);
        let air = reader.on_air(slot);
        uplinks.clear();
        let activities: Vec<_> = devices
            .iter_mut()
            .map(|d| d.act(slot, air.as_ref(), params, &mut changes))
            .collect();
        uplinks.extend(activities.iter().filter_map(|a| a.uplink));
        reader.receive(slot, &uplinks, &mut events);
        for ev in events.drain(..) {
            match ev {
                ReaderEvent::Msg3Delivered {
                    device,
                    round_index: 0,
                } => success[device as usize] = true,
                ReaderEvent::RoundScheduled {
                    round_index: 0,
                    round_end: end,
                    ..
                } => round_end = Some(end),
                _ => {}
            }
        }
        for (d, a) in devices.iter_mut().zip(&activities) {
            d.settle(slot, a, params, &mut changes);
        }
        slot += 1;
    }
    success
}

/// Success count of device 0 over `trials` independent rounds.
pub fn device0_successes(n: u32, k: u16, q: f64, trials: u64) -> u64 {
    let params = em_params(single_channel_timing(k));
    (0..trials)
        .filter(|&trial| simulate_round(n, &params, q, trial)[0])
        .count() as u64
}

/// `|freq - p|` in units of the binomial standard error over `trials`.
pub fn sigmas(successes: u64, trials: u64, p: f64) -> f64 {
    let freq = successes as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    if se == 0.0 {
        if (freq - p).abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (freq - p).abs() / se
    }
}

/// Half-open interval `[start, end)` a device spent in one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub state: StateKind,
    pub start: u64,
    /// `None` if the run ended in this state.
    pub end: Option<u64>,
    /// Synchronization flag logged on entry.
    pub synchronized: bool,
    pub e_es_on_entry: f64,
    /// State entered when this span ended.
    pub next: Option<StateKind>,
}

/// Per-device state history rebuilt from a full-detail event log. Every
/// device starts `Off` at slot 0.
pub fn timelines(events: &[EventRecord], n_devices: usize) -> Vec<Vec<Span>> {
    let mut out: Vec<Vec<Span>> = (0..n_devices)
        .map(|_| {
            vec![Span {
                state: StateKind::Off,
                start: 0,
                end: None,
                synchronized: false,
                e_es_on_entry: f64::NAN,
                next: None,
            }]
        })
        .collect();
    for e in events {
        if let (
            Some(d),
            Payload::State {
                to,
                e_es,
                synchronized,
                ..
            },
        ) = (e.device, e.payload)
        {
            let spans = &mut out[d as usize];
            let last = spans.last_mut().expect("seeded above");
            last.end = Some(e.slot);
            last.next = Some(to);
            spans.push(Span {
                state: to,
                start: e.slot,
                end: None,
                synchronized,
                e_es_on_entry: e_es,
                next: None,
            });
        }
    }
    out
}

/// State of a device at `slot` according to its spans.
pub fn state_at(spans: &[Span], slot: u64) -> StateKind {
    let i = spans.partition_point(|s| s.start <= slot);
    spans[i.saturating_sub(1)].state
}

/// Paging start slots keyed by round index.
pub fn pagings(events: &[EventRecord]) -> BTreeMap<u64, u64> {
    events
        .iter()
        .filter_map(|e| match e.payload {
            Payload::Paging { round_index, .. } => Some((round_index, e.slot)),
            _ => None,
        })
        .collect()
}

/// Msg1 transmissions grouped by `(round_index, ao)` into their random IDs,
/// assigning each Msg1 to the latest paging at or before it.
pub fn msg1_by_occasion(events: &[EventRecord]) -> BTreeMap<(u64, u16), Vec<u16>> {
    let mut out: BTreeMap<(u64, u16), Vec<u16>> = BTreeMap::new();
    let mut round = None;
    for e in events {
        match e.payload {
            Payload::Paging { round_index, .. } => round = Some(round_index),
            Payload::Msg1 { ao, random_id } => {
                let r = round.expect("Msg1 before any paging");
                out.entry((r, ao.0)).or_default().push(random_id);
            }
            _ => {}
        }
    }
    out
}

/// Msg2s keyed by `(round_index, ao)` with their echoed random ID.
pub fn msg2_by_occasion(events: &[EventRecord]) -> BTreeMap<(u64, u16), Vec<u16>> {
    let mut out: BTreeMap<(u64, u16), Vec<u16>> = BTreeMap::new();
    for e in events {
        if let Payload::Msg2 {
            round_index,
            ao,
            random_id,
            ..
        } = e.payload
        {
            out.entry((round_index, ao.0)).or_default().push(random_id);
        }
    }
    out
}

/// Msg1 or Msg3 completions logged while the sender was not `OnExchange`.
pub fn transmissions_outside_on(events: &[EventRecord], spans: &[Vec<Span>]) -> Vec<String> {
    events
        .iter()
        .filter(|e| matches!(e.payload, Payload::Msg1 { .. } | Payload::Msg3 { .. }))
        .filter_map(|e| {
            let d = e.device? as usize;
            let state = state_at(&spans[d], e.slot);
            (state != StateKind::OnExchange).then(|| {
                format!(
                    "device {d} sent {:?} at slot {} while {}",
                    e.kind(),
                    e.slot,
                    state.name()
                )
            })
        })
        .collect()
}

/// Occasions where a Msg2 was sent without exactly one Msg1, or with the
/// wrong echo, or where a lone Msg1 got no Msg2.
pub fn msg2_iff_success(events: &[EventRecord]) -> Vec<String> {
    let msg1 = msg1_by_occasion(events);
    let msg2 = msg2_by_occasion(events);
    let mut bad = Vec::new();
    for (key, ids) in &msg1 {
        match (ids.as_slice(), msg2.get(key).map(Vec::as_slice)) {
            ([id], Some([echo])) if id == echo => {}
            ([_], other) => bad.push(format!("lone Msg1 at {key:?} answered by {other:?}")),
            (_, Some(echo)) => bad.push(format!("collided occasion {key:?} answered by {echo:?}")),
            (_, None) => {}
        }
    }
    for key in msg2.keys() {
        if !msg1.contains_key(key) {
            bad.push(format!("Msg2 on idle occasion {key:?}"));
        }
    }
    bad
}

/// Stored energy logged outside `[0, e_max]`.
pub fn energy_out_of_range(events: &[EventRecord], e_max: f64) -> Vec<String> {
    events
        .iter()
        .filter_map(|e| match e.payload {
            Payload::State { e_es, .. } | Payload::Energy { e_es } => Some((e.slot, e_es)),
            _ => None,
        })
        .filter(|&(_, e_es)| !(0.0..=e_max).contains(&e_es))
        .map(|(slot, e_es)| format!("e_es {e_es} at slot {slot}"))
        .collect()
}

pub fn non_decreasing(points: &[aiot_core::ProgressPoint]) -> bool {
    points
        .windows(2)
        .all(|w| w[1].fraction >= w[0].fraction && w[1].time_s >= w[0].time_s)
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct WindowCheck {
    pub checked: usize,
    /// Windows cut short by the turn-off threshold before their paging.
    pub depleted: usize,
    pub violations: Vec<String>,
}

/// Every closed on-window a synchronized device enters from `Sleep` must
/// overlap a paging of one fixed group (`round_index mod n_g`).
pub fn synced_windows_overlap_group_paging(
    events: &[EventRecord],
    spans: &[Vec<Span>],
    n_g: u32,
    paging_slots: u32,
) -> WindowCheck {
    let pagings = pagings(events);
    let mut out = WindowCheck::default();
    for (d, timeline) in spans.iter().enumerate() {
        let mut group: Option<Vec<u64>> = None;
        for w in timeline.windows(2) {
            let (prev, span) = (w[0], w[1]);
            if span.state != StateKind::OnMonitoring
                || prev.state != StateKind::Sleep
                || !span.synchronized
            {
                if span.state == StateKind::Off {
                    group = None;
                }
                continue;
            }
            let Some(end) = span.end else { continue };
            let groups: Vec<u64> = pagings
                .iter()
                .filter(|&(_, &p)| p < end && span.start < p + u64::from(paging_slots))
                .map(|(&r, _)| r % u64::from(n_g))
                .collect();
            let candidates: Vec<u64> = match &group {
                None => groups,
                Some(known) => known
                    .iter()
                    .copied()
                    .filter(|g| groups.contains(g))
                    .collect(),
            };
            if candidates.is_empty() && span.next == Some(StateKind::Off) {
                out.depleted += 1;
                continue;
            }
            out.checked += 1;
            if candidates.is_empty() {
                out.violations.push(format!(
                    "device {d}: window [{}, {end}) misses its group's paging",
                    span.start
                ));
            } else {
                group = Some(candidates);
            }
        }
    }
    out
}
