//! Per-device state machine: energy-based monitoring (EM), duty-cycled
//! monitoring (DCM) with grouping, the wake-up receiver option, and the
//! device half of the random-access exchange.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, MessageErrorConfig};
use crate::energy::{EnergyStorage, PowerProfile};
use crate::reader::{Air, AoIndex, Msg1, Msg2, PagingMsg, RoundTiming, Uplink};

pub type DeviceId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    #[serde(rename = "em")]
    Em,
    #[serde(rename = "dcm")]
    Dcm,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Self::Em => "em",
            Self::Dcm => "dcm",
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Self::Em),
            "dcm" => Ok(Self::Dcm),
            other => Err(format!("unknown mechanism `{other}` (em|dcm)")),
        }
    }
}

/// Progress through one random-access attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exchange {
    /// Msg1 goes out on `ao` starting at `slot`.
    TransmittingMsg1 {
        ao: AoIndex,
        slot: u64,
        deadline: u64,
    },
    /// Listening for the random-ID echo from `msg2_start` until `deadline` (inclusive).
    AwaitingMsg2 {
        ao: AoIndex,
        msg2_start: u64,
        deadline: u64,
    },
    /// Granted; idle until `grant.msg3_start`, then transmitting.
    TransmittingMsg3 { grant: Msg2 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceState {
    Off,
    /// `window_end` is the exclusive end of a timed on-window. A synchronized
    /// DCM device has none until its group's paging arrives.
    OnMonitoring {
        window_end: Option<u64>,
    },
    OnExchange(Exchange),
    Sleep {
        wake_at: u64,
    },
}

impl DeviceState {
    pub fn kind(&self) -> StateKind {
        match self {
            Self::Off => StateKind::Off,
            Self::OnMonitoring { .. } => StateKind::OnMonitoring,
            Self::OnExchange(_) => StateKind::OnExchange,
            Self::Sleep { .. } => StateKind::Sleep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StateKind {
    Off,
    OnMonitoring,
    OnExchange,
    Sleep,
}

impl StateKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Off => "off",
            Self::OnMonitoring => "on_monitoring",
            Self::OnExchange => "on_exchange",
            Self::Sleep => "sleep",
        }
    }

    pub fn is_on(self) -> bool {
        matches!(self, Self::OnMonitoring | Self::OnExchange)
    }
}

/// Timing reference: start of the last decoded paging of the device's group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sync {
    pub anchor: u64,
    pub group: u32,
}

/// A state transition, stamped with the first slot spent in the new state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateChange {
    pub slot: u64,
    pub device: DeviceId,
    pub from: StateKind,
    pub to: StateKind,
    pub e_es: f64,
    pub synchronized: bool,
}

/// Parameters shared by every device in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    pub mechanism: Mechanism,
    pub power: PowerProfile,
    pub timing: RoundTiming,
    pub t_on_timer: u32,
    pub t_on_dcm: u32,
    pub n_g: u32,
    pub lp_wur: bool,
    pub errors: MessageErrorConfig,
    pub slot_duration: f64,
}

impl DeviceParams {
    /// Wake-up period of a synchronized DCM device, `N_g * T_pg`.
    pub fn wake_period(&self) -> u64 {
        u64::from(self.n_g) * u64::from(self.timing.t_pg)
    }

    /// Sleep length of an idle synchronized cycle, `N_g * T_pg - T_on^DCM`.
    pub fn dcm_sleep_slots(&self) -> u64 {
        self.wake_period() - u64::from(self.t_on_dcm)
    }
}

/// Group of a device whose first decoded paging was the reader's `first_paging_index`-th.
pub fn assign_group(first_paging_index: u64, n_g: u32) -> u32 {
    (first_paging_index % u64::from(n_g)) as u32
}

/// Power and harvesting status of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activity {
    pub draw: f64,
    pub harvesting: bool,
    pub uplink: Option<Uplink>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Msg1Intent {
    pub ao: AoIndex,
    pub random_id: u16,
}

#[derive(Debug, Clone)]
pub struct DeviceSim {
    pub id: DeviceId,
    pub position: Option<(f64, f64)>,
    pub p_in_dbm: f64,
    pub harvest_w: f64,
    pub storage: EnergyStorage,
    pub state: DeviceState,
    pub random_id: u16,
    pub sync: Option<Sync>,
    pub inventoried: bool,
    /// Paging preamble seen in the current round (wake-up receiver handover).
    paging_detected: bool,
    /// Round whose paging this device has been receiving since its first slot.
    paging_rx: Option<u64>,
    pub attempts: u32,
    pub outages: u32,
    rng: ChaCha8Rng,
}

impl DeviceSim {
    pub fn new(
        id: DeviceId,
        position: Option<(f64, f64)>,
        p_in_dbm: f64,
        harvest_w: f64,
        storage: EnergyStorage,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            id,
            position,
            p_in_dbm,
            harvest_w,
            storage,
            state: DeviceState::Off,
            random_id: 0,
            sync: None,
            inventoried: false,
            paging_detected: false,
            paging_rx: None,
            attempts: 0,
            outages: 0,
            rng,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn synchronized(&self) -> bool {
        self.sync.is_some()
    }

    pub fn group_index(&self) -> Option<u32> {
        self.sync.map(|s| s.group)
    }

    pub fn mark_inventoried(&mut self) {
        self.inventoried = true;
    }

    /// Power drawn while monitoring for paging.
    pub fn monitoring_draw(&self, p: &DeviceParams) -> f64 {
        if p.lp_wur && !self.paging_detected {
            p.power.p_lpwur
        } else {
            p.power.p_rx
        }
    }

    fn set_state(&mut self, next: DeviceState, slot: u64, changes: &mut Vec<StateChange>) {
        let from = self.state.kind();
        let to = next.kind();
        if to != StateKind::OnMonitoring {
            self.paging_rx = None;
        }
        if from != to {
            if to == StateKind::OnMonitoring {
                self.paging_detected = false;
            }
            changes.push(StateChange {
                slot,
                device: self.id,
                from,
                to,
                e_es: self.storage.level(),
                synchronized: self.sync.is_some(),
            });
        }
        self.state = next;
    }

    /// Earliest possible slot of the group's next paging at or after `slot`.
    ///
    /// Overrunning rounds only ever delay pagings, so waking here never misses one.
    fn next_wake(&self, sync: Sync, slot: u64, p: &DeviceParams) -> u64 {
        let period = p.wake_period();
        let rel = slot.saturating_sub(sync.anchor);
        sync.anchor + rel.div_ceil(period) * period
    }

    /// Where a device goes when it is neither exchanging nor out of energy.
    fn rest(&mut self, slot: u64, p: &DeviceParams, changes: &mut Vec<StateChange>) {
        let next = match (p.mechanism, self.sync) {
            (Mechanism::Em, _) => DeviceState::OnMonitoring { window_end: None },
            (Mechanism::Dcm, Some(sync)) => {
                let wake = self.next_wake(sync, slot, p);
                if wake == slot {
                    DeviceState::OnMonitoring { window_end: None }
                } else {
                    DeviceState::Sleep { wake_at: wake }
                }
            }
            (Mechanism::Dcm, None) => DeviceState::OnMonitoring {
                window_end: Some(slot + u64::from(p.t_on_timer)),
            },
        };
        self.set_state(next, slot, changes);
        if p.mechanism == Mechanism::Em {
            self.paging_detected = false;
        }
    }

    /// Timer expiries that take effect at the start of `slot`.
    fn expire_timers(&mut self, slot: u64, p: &DeviceParams, changes: &mut Vec<StateChange>) {
        match self.state {
            DeviceState::OnMonitoring {
                window_end: Some(end),
            } if slot >= end => {
                if self.sync.is_some() {
                    self.rest(slot, p, changes);
                } else {
                    // Pre-acquisition on timer ran out without a paging.
                    self.set_state(DeviceState::Off, slot, changes);
                }
            }
            DeviceState::Sleep { wake_at } if slot >= wake_at => {
                self.set_state(
                    DeviceState::OnMonitoring { window_end: None },
                    slot,
                    changes,
                );
            }
            DeviceState::OnExchange(Exchange::AwaitingMsg2 { deadline, .. }) if slot > deadline => {
                self.rest(slot, p, changes);
            }
            DeviceState::OnExchange(Exchange::TransmittingMsg3 { grant })
                if slot >= grant.msg3_start + u64::from(p.timing.msg3_slots) =>
            {
                self.rest(slot, p, changes);
            }
            _ => {}
        }
    }

    /// Everything the device does in `slot` except energy integration:
    /// timer expiries, R2D reception, FSM transitions and any D2R transmission.
    pub fn act(
        &mut self,
        slot: u64,
        air: Option<&Air>,
        p: &DeviceParams,
        changes: &mut Vec<StateChange>,
    ) -> Activity {
        self.expire_timers(slot, p, changes);
        match self.state {
            DeviceState::Off => Activity {
                draw: PowerProfile::P_OFF,
                harvesting: true,
                uplink: None,
            },
            DeviceState::Sleep { .. } => Activity {
                draw: p.power.p_sl,
                harvesting: true,
                uplink: None,
            },
            DeviceState::OnMonitoring { .. } => self.monitor(slot, air, p, changes),
            DeviceState::OnExchange(ex) => self.exchange(slot, air, p, ex, changes),
        }
    }

    fn monitor(
        &mut self,
        slot: u64,
        air: Option<&Air>,
        p: &DeviceParams,
        changes: &mut Vec<StateChange>,
    ) -> Activity {
        let mut draw = self.monitoring_draw(p);
        if let Some(&Air::Paging { msg, first, last }) = air {
            if first {
                let missed =
                    p.lp_wur && !channel::deliver(true, p.errors.lpwur_miss, &mut self.rng);
                if !missed {
                    self.paging_rx = Some(msg.round_index);
                    self.paging_detected = true;
                }
            } else if self.paging_rx == Some(msg.round_index) {
                draw = p.power.p_rx;
            }
            if last
                && self.paging_rx.take() == Some(msg.round_index)
                && channel::deliver(true, p.errors.paging, &mut self.rng)
            {
                self.on_paging(slot, &msg, p, changes);
            }
            if last {
                if let DeviceState::OnMonitoring { window_end: None } = self.state {
                    // Still waiting for a paging meant for this device.
                    self.paging_detected = false;
                }
            }
        }
        Activity {
            draw,
            harvesting: false,
            uplink: None,
        }
    }

    /// React to a decoded paging at the end of `slot`. Returns the Msg1 the
    /// device commits to, if it decides to access.
    pub fn on_paging(
        &mut self,
        slot: u64,
        paging: &PagingMsg,
        p: &DeviceParams,
        changes: &mut Vec<StateChange>,
    ) -> Option<Msg1Intent> {
        if p.mechanism == Mechanism::Dcm {
            match self.sync {
                None => {
                    self.sync = Some(Sync {
                        anchor: paging.start_slot,
                        group: assign_group(paging.round_index, p.n_g),
                    });
                    self.state = DeviceState::OnMonitoring {
                        window_end: Some(paging.start_slot + u64::from(p.t_on_dcm)),
                    };
                }
                Some(sync) => {
                    if assign_group(paging.round_index, p.n_g) != sync.group {
                        // Stay on: the group's own paging is still to come.
                        return None;
                    }
                    self.sync = Some(Sync {
                        anchor: paging.start_slot,
                        ..sync
                    });
                    self.state = DeviceState::OnMonitoring {
                        window_end: Some(paging.start_slot + u64::from(p.t_on_dcm)),
                    };
                }
            }
        }
        if self.inventoried || self.storage.is_depleted() {
            return None;
        }
        if !self.rng.gen_bool(paging.access_probability.clamp(0.0, 1.0)) {
            if p.mechanism == Mechanism::Em {
                self.paging_detected = false;
            }
            return None;
        }
        let intent = Msg1Intent {
            ao: AoIndex(self.rng.gen_range(0..p.timing.ao_count())),
            random_id: self.rng.gen(),
        };
        self.random_id = intent.random_id;
        self.attempts += 1;
        let ao_slot = p.timing.ao_slot(paging.start_slot, intent.ao);
        let next = DeviceState::OnExchange(Exchange::TransmittingMsg1 {
            ao: intent.ao,
            slot: ao_slot,
            deadline: p.timing.msg2_deadline(paging.start_slot, intent.ao),
        });
        self.set_state(next, slot + 1, changes);
        Some(intent)
    }

    /// React to a decoded Msg2 while awaiting one. Returns the grant to use for Msg3.
    pub fn on_msg2(
        &mut self,
        slot: u64,
        msg2: &Msg2,
        changes: &mut Vec<StateChange>,
    ) -> Option<Msg2> {
        let DeviceState::OnExchange(Exchange::AwaitingMsg2 { .. }) = self.state else {
            return None;
        };
        if msg2.random_id != self.random_id || self.storage.is_depleted() {
            return None;
        }
        let next = DeviceState::OnExchange(Exchange::TransmittingMsg3 { grant: *msg2 });
        self.set_state(next, slot + 1, changes);
        Some(*msg2)
    }

    fn exchange(
        &mut self,
        slot: u64,
        air: Option<&Air>,
        p: &DeviceParams,
        ex: Exchange,
        changes: &mut Vec<StateChange>,
    ) -> Activity {
        let mut activity = Activity {
            draw: p.power.p_rx,
            harvesting: false,
            uplink: None,
        };
        match ex {
            Exchange::TransmittingMsg1 {
                ao,
                slot: start,
                deadline,
            } => {
                let end = start + u64::from(p.timing.msg1_slots);
                if (start..end).contains(&slot) {
                    activity.draw = p.power.p_tx;
                    if slot + 1 == end {
                        activity.uplink = Some(Uplink::Msg1(Msg1 {
                            device: self.id,
                            ao,
                            random_id: self.random_id,
                        }));
                        let paging_start = start
                            - u64::from(p.timing.paging_slots)
                            - u64::from(p.timing.ao_time_of(ao)) * u64::from(p.timing.msg1_slots);
                        self.state = DeviceState::OnExchange(Exchange::AwaitingMsg2 {
                            ao,
                            msg2_start: p.timing.msg2_start(paging_start),
                            deadline,
                        });
                    }
                }
            }
            Exchange::AwaitingMsg2 { ao, msg2_start, .. } => {
                // Msg2s go out back to back in occasion order, so an echo for
                // this or a later occasion, or silence, means none is coming.
                let hopeless = match air {
                    Some(&Air::Msg2 { msg, last: true }) => {
                        channel::deliver(true, p.errors.msg2, &mut self.rng)
                            && self.on_msg2(slot, &msg, changes).is_none()
                            && msg.ao >= ao
                    }
                    Some(_) => false,
                    None => slot >= msg2_start,
                };
                if hopeless {
                    self.rest(slot + 1, p, changes);
                }
            }
            Exchange::TransmittingMsg3 { grant } => {
                let end = grant.msg3_start + u64::from(p.timing.msg3_slots);
                if slot >= grant.msg3_start {
                    activity.draw = p.power.p_tx;
                    if slot + 1 == end {
                        activity.uplink = Some(Uplink::Msg3 {
                            device: self.id,
                            grant,
                        });
                    }
                }
            }
        }
        activity
    }

    /// Integrate energy over `slot` and apply the on/off thresholds, effective next slot.
    pub fn settle(
        &mut self,
        slot: u64,
        activity: &Activity,
        p: &DeviceParams,
        changes: &mut Vec<StateChange>,
    ) {
        let harvest = if activity.harvesting {
            self.harvest_w
        } else {
            0.0
        };
        self.storage
            .integrate(activity.draw, harvest, p.slot_duration);
        match self.state {
            DeviceState::Off => {
                if self.storage.is_charged() {
                    let window_end = match p.mechanism {
                        Mechanism::Em => None,
                        Mechanism::Dcm => Some(slot + 1 + u64::from(p.t_on_timer)),
                    };
                    self.set_state(DeviceState::OnMonitoring { window_end }, slot + 1, changes);
                }
            }
            _ => {
                if self.storage.is_depleted() {
                    self.sync = None;
                    self.outages += 1;
                    self.set_state(DeviceState::Off, slot + 1, changes);
                }
            }
        }
    }
}
