//! Reader side of contention-based random access: paging rounds, the
//! access-occasion grid, Msg1 detection, Msg2/Msg3 grant layout, the
//! access-probability controller and the inventory ledger.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;

use crate::channel::{self, MessageErrorConfig};
use crate::device::DeviceId;

/// Linear index of an access occasion, `t * ao_freq + f`.
///
/// Ascending index order is lexicographic `(time, frequency)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AoIndex(pub u16);

/// Slot durations and the Msg1 access-occasion grid of one paging round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundTiming {
    pub paging_slots: u32,
    pub msg1_slots: u32,
    pub msg2_slots: u32,
    pub msg3_slots: u32,
    pub ao_time: u16,
    pub ao_freq: u16,
    /// Paging periodicity in slots.
    pub t_pg: u32,
}

impl RoundTiming {
    /// Total number of access occasions `K`.
    pub fn ao_count(&self) -> u16 {
        self.ao_time * self.ao_freq
    }

    pub fn ao(&self, time: u16, freq: u16) -> AoIndex {
        AoIndex(time * self.ao_freq + freq)
    }

    pub fn ao_time_of(&self, ao: AoIndex) -> u16 {
        ao.0 / self.ao_freq
    }

    pub fn ao_freq_of(&self, ao: AoIndex) -> u16 {
        ao.0 % self.ao_freq
    }

    /// First slot of the Msg1 transmission on `ao` for a paging starting at `paging_start`.
    pub fn ao_slot(&self, paging_start: u64, ao: AoIndex) -> u64 {
        paging_start
            + u64::from(self.paging_slots)
            + u64::from(self.ao_time_of(ao)) * u64::from(self.msg1_slots)
    }

    /// First slot after the Msg1 region, where Msg2s begin.
    pub fn msg2_start(&self, paging_start: u64) -> u64 {
        paging_start
            + u64::from(self.paging_slots)
            + u64::from(self.ao_time) * u64::from(self.msg1_slots)
    }

    /// Last slot in which a device that used `ao` may still receive its Msg2.
    ///
    /// At most `ao.0` successful occasions precede it in service order.
    pub fn msg2_deadline(&self, paging_start: u64, ao: AoIndex) -> u64 {
        self.msg2_start(paging_start) + (u64::from(ao.0) + 1) * u64::from(self.msg2_slots) - 1
    }
}

/// R2D message that opens a random-access round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PagingMsg {
    /// Sequence number of this paging within the inventory stage.
    pub round_index: u64,
    pub start_slot: u64,
    pub access_probability: f64,
    pub ao_time: u16,
    pub ao_freq: u16,
    pub group_modulus: u32,
    pub duration: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Msg1 {
    pub device: DeviceId,
    pub ao: AoIndex,
    pub random_id: u16,
}

/// Random-ID echo plus the Msg3 grant it schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Msg2 {
    pub round_index: u64,
    pub ao: AoIndex,
    pub random_id: u16,
    pub slot: u64,
    pub msg3_start: u64,
    pub channel: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AoOutcome {
    Idle,
    Success(u16),
    Collision,
}

/// Classify one access occasion from the Msg1s the channel delivered on it.
pub fn detect_msg1(deliveries: &[Msg1]) -> AoOutcome {
    match deliveries {
        [] => AoOutcome::Idle,
        [only] => AoOutcome::Success(only.random_id),
        _ => AoOutcome::Collision,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundSchedule {
    pub paging_start: u64,
    pub msg2_start: u64,
    /// One Msg2 per successful occasion, in service order.
    pub grants: Vec<Msg2>,
    /// First slot after every message of the round.
    pub round_end: u64,
}

impl RoundSchedule {
    /// Lay out Msg2s serially after the Msg1 region and pack each Msg3 on its
    /// occasion's frequency channel, no earlier than the slot after its Msg2.
    pub fn schedule_grants(
        &mut self,
        timing: &RoundTiming,
        round_index: u64,
        outcomes: &[AoOutcome],
    ) {
        let mut channel_free = vec![0u64; usize::from(timing.ao_freq)];
        let mut msg2_slot = self.msg2_start;
        self.grants.clear();
        for (idx, outcome) in outcomes.iter().enumerate() {
            let AoOutcome::Success(random_id) = *outcome else {
                continue;
            };
            let ao = AoIndex(idx as u16);
            let channel = timing.ao_freq_of(ao);
            let free = &mut channel_free[usize::from(channel)];
            let msg3_start = (msg2_slot + u64::from(timing.msg2_slots)).max(*free);
            *free = msg3_start + u64::from(timing.msg3_slots);
            self.grants.push(Msg2 {
                round_index,
                ao,
                random_id,
                slot: msg2_slot,
                msg3_start,
                channel,
            });
            msg2_slot += u64::from(timing.msg2_slots);
        }
        self.round_end = channel_free
            .into_iter()
            .fold(msg2_slot, u64::max)
            .max(self.msg2_start);
    }
}

/// Paging message and the (grant-free) layout of a new round.
pub fn build_round(
    round_index: u64,
    start_slot: u64,
    access_probability: f64,
    group_modulus: u32,
    timing: &RoundTiming,
) -> (PagingMsg, RoundSchedule) {
    let paging = PagingMsg {
        round_index,
        start_slot,
        access_probability,
        ao_time: timing.ao_time,
        ao_freq: timing.ao_freq,
        group_modulus,
        duration: timing.paging_slots,
    };
    let msg2_start = timing.msg2_start(start_slot);
    let schedule = RoundSchedule {
        paging_start: start_slot,
        msg2_start,
        grants: Vec::new(),
        round_end: msg2_start,
    };
    (paging, schedule)
}

/// Smallest paging-grid boundary at or after `round_end`.
pub fn next_paging_slot(round_end: u64, inventory_start: u64, t_pg: u32) -> u64 {
    let t_pg = u64::from(t_pg);
    let rel = round_end.saturating_sub(inventory_start);
    inventory_start + rel.div_ceil(t_pg) * t_pg
}

pub const Q_INITIAL: f64 = 1.0;
pub const Q_MIN: f64 = 1.0 / 64.0;

/// Backlog-driven access probability for the next paging.
///
/// Every collided occasion is taken to hide two devices and every success one,
/// scaled up by the fraction of devices the last paging silenced:
/// `N = max(1, round((2C + S) / q))`, `q' = clamp(K / N, q_min, 1)`.
pub fn update_access_probability(
    collided: u32,
    succeeded: u32,
    last_q: f64,
    ao_count: u16,
    q_min: f64,
) -> f64 {
    let observed = f64::from(2 * collided + succeeded);
    let backlog = (observed / last_q).round().max(1.0);
    (f64::from(ao_count) / backlog).clamp(q_min, 1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundCounters {
    pub idle: u32,
    pub success: u32,
    pub collision: u32,
}

impl RoundCounters {
    pub fn tally(outcomes: &[AoOutcome]) -> Self {
        outcomes.iter().fold(Self::default(), |mut c, o| {
            match o {
                AoOutcome::Idle => c.idle += 1,
                AoOutcome::Success(_) => c.success += 1,
                AoOutcome::Collision => c.collision += 1,
            }
            c
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InventoryLedger {
    pub inventoried: BTreeSet<DeviceId>,
    pub rounds: Vec<RoundCounters>,
    /// Current access probability of each paging group.
    pub q: Vec<f64>,
}

impl Default for InventoryLedger {
    fn default() -> Self {
        Self::new(1)
    }
}

impl InventoryLedger {
    pub fn new(groups: u32) -> Self {
        Self {
            inventoried: BTreeSet::new(),
            rounds: Vec::new(),
            q: vec![Q_INITIAL; groups.max(1) as usize],
        }
    }

    pub fn q_for(&self, round_index: u64) -> f64 {
        self.q[(round_index % self.q.len() as u64) as usize]
    }

    /// Record delivered Msg3s; returns the ids that were not already known.
    pub fn process_msg3(&mut self, delivered: &[DeviceId]) -> Vec<DeviceId> {
        delivered
            .iter()
            .copied()
            .filter(|id| self.inventoried.insert(*id))
            .collect()
    }
}

/// What the reader puts on the R2D link in a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Air {
    Paging {
        msg: PagingMsg,
        first: bool,
        last: bool,
    },
    Msg2 {
        msg: Msg2,
        last: bool,
    },
}

/// D2R transmission completed by a device in this slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Uplink {
    Msg1(Msg1),
    Msg3 { device: DeviceId, grant: Msg2 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReaderEvent {
    PagingSent(PagingMsg),
    Msg1Collision {
        round_index: u64,
        ao: AoIndex,
    },
    Msg2Sent(Msg2),
    Msg3Delivered {
        device: DeviceId,
        round_index: u64,
    },
    /// Msg1 outcomes are known and grants are laid out.
    RoundScheduled {
        round_index: u64,
        counters: RoundCounters,
        round_end: u64,
        next_paging: u64,
    },
}

#[derive(Debug, Clone)]
struct ActiveRound {
    paging: PagingMsg,
    schedule: RoundSchedule,
    msg1: Vec<Vec<Msg1>>,
    outcomes: Option<Vec<AoOutcome>>,
}

/// The one active reader of a run.
#[derive(Debug, Clone)]
pub struct Reader {
    timing: RoundTiming,
    group_modulus: u32,
    q_min: f64,
    inventory_start: u64,
    next_paging: u64,
    rounds_started: u64,
    round: Option<ActiveRound>,
    pub ledger: InventoryLedger,
    errors: MessageErrorConfig,
    rng: ChaCha8Rng,
}

impl Reader {
    pub fn new(
        timing: RoundTiming,
        group_modulus: u32,
        inventory_start: u64,
        errors: MessageErrorConfig,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            timing,
            group_modulus,
            q_min: Q_MIN,
            inventory_start,
            next_paging: inventory_start,
            rounds_started: 0,
            round: None,
            ledger: InventoryLedger::new(group_modulus),
            errors,
            rng,
        }
    }

    pub fn timing(&self) -> &RoundTiming {
        &self.timing
    }

    pub fn next_paging(&self) -> u64 {
        self.next_paging
    }

    /// Opens a round if `slot` is the next paging slot.
    pub fn begin_slot(&mut self, slot: u64) -> Option<PagingMsg> {
        if self.round.is_some() || slot != self.next_paging {
            return None;
        }
        let round_index = self.rounds_started;
        self.rounds_started += 1;
        let (paging, schedule) = build_round(
            round_index,
            slot,
            self.ledger.q_for(round_index),
            self.group_modulus,
            &self.timing,
        );
        self.round = Some(ActiveRound {
            paging,
            schedule,
            msg1: vec![Vec::new(); usize::from(self.timing.ao_count())],
            outcomes: None,
        });
        Some(paging)
    }

    /// The R2D signal on air in `slot`, if any.
    pub fn on_air(&self, slot: u64) -> Option<Air> {
        let round = self.round.as_ref()?;
        let start = round.paging.start_slot;
        let paging_end = start + u64::from(self.timing.paging_slots);
        if (start..paging_end).contains(&slot) {
            return Some(Air::Paging {
                msg: round.paging,
                first: slot == start,
                last: slot + 1 == paging_end,
            });
        }
        let msg2_len = u64::from(self.timing.msg2_slots);
        round
            .schedule
            .grants
            .iter()
            .find(|g| (g.slot..g.slot + msg2_len).contains(&slot))
            .map(|g| Air::Msg2 {
                msg: *g,
                last: slot + 1 == g.slot + msg2_len,
            })
    }

    /// Take the uplink transmissions completed in `slot`.
    pub fn receive(&mut self, slot: u64, uplink: &[Uplink], events: &mut Vec<ReaderEvent>) {
        let Some(round) = self.round.as_mut() else {
            return;
        };
        let mut on_grant: Vec<(Msg2, DeviceId)> = Vec::new();
        for tx in uplink {
            match *tx {
                Uplink::Msg1(m) => {
                    if let Some(bucket) = round.msg1.get_mut(usize::from(m.ao.0)) {
                        bucket.push(m);
                    }
                }
                Uplink::Msg3 { device, grant } => {
                    let granted = round.schedule.grants.contains(&grant);
                    let end = grant.msg3_start + u64::from(self.timing.msg3_slots) - 1;
                    if granted && end == slot {
                        on_grant.push((grant, device));
                    }
                }
            }
        }
        // Two devices answering the same echo collide on the granted resource.
        let mut msg3 = Vec::new();
        for (grant, device) in &on_grant {
            let shared = on_grant.iter().filter(|(g, _)| g == grant).count() > 1;
            if !shared && channel::deliver(true, self.errors.msg3, &mut self.rng) {
                msg3.push(*device);
            }
        }
        msg3.sort_unstable();
        for device in self.ledger.process_msg3(&msg3) {
            events.push(ReaderEvent::Msg3Delivered {
                device,
                round_index: round.paging.round_index,
            });
        }

        let msg1_end = round.schedule.msg2_start;
        if round.outcomes.is_none() && slot + 1 == msg1_end {
            let outcomes: Vec<AoOutcome> = round
                .msg1
                .iter()
                .map(|txs| {
                    let delivered: Vec<Msg1> = match txs.as_slice() {
                        [single] => {
                            if channel::deliver(true, self.errors.msg1, &mut self.rng) {
                                vec![*single]
                            } else {
                                Vec::new()
                            }
                        }
                        many => many.to_vec(),
                    };
                    detect_msg1(&delivered)
                })
                .collect();
            let counters = RoundCounters::tally(&outcomes);
            for (idx, o) in outcomes.iter().enumerate() {
                if *o == AoOutcome::Collision {
                    events.push(ReaderEvent::Msg1Collision {
                        round_index: round.paging.round_index,
                        ao: AoIndex(idx as u16),
                    });
                }
            }
            round
                .schedule
                .schedule_grants(&self.timing, round.paging.round_index, &outcomes);
            self.ledger.rounds.push(counters);
            // Each group keeps its own estimate: group populations differ widely.
            let group = (round.paging.round_index % self.ledger.q.len() as u64) as usize;
            self.ledger.q[group] = update_access_probability(
                counters.collision,
                counters.success,
                round.paging.access_probability,
                self.timing.ao_count(),
                self.q_min,
            );
            self.next_paging = next_paging_slot(
                round.schedule.round_end,
                self.inventory_start,
                self.timing.t_pg,
            );
            events.push(ReaderEvent::RoundScheduled {
                round_index: round.paging.round_index,
                counters,
                round_end: round.schedule.round_end,
                next_paging: self.next_paging,
            });
            round.outcomes = Some(outcomes);
        }

        if round.outcomes.is_some() && slot + 1 >= round.schedule.round_end {
            self.round = None;
        }
    }
}
