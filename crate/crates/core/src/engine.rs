//! Slot-synchronous simulation loop.
//!
//! Per slot: the reader opens rounds and puts R2D signals on air, every device
//! receives and decides, D2R transmissions reach the reader, devices integrate
//! energy and apply thresholds, and progress is recorded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{self, Placement};
use crate::device::{DeviceParams, DeviceSim, StateChange};
use crate::energy::{harvest_power, EnergyStorage};
use crate::error::Result;
use crate::metrics::{
    completion_quantile, DeviceRecord, EventRecord, LogLevel, Payload, ProgressPoint, SimResult,
    Summary,
};
use crate::reader::{Air, Reader, ReaderEvent, Uplink};
use crate::scenario::Scenario;

const PLACEMENT_STREAM: u64 = 0;
const READER_STREAM: u64 = u64::MAX;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Maps slots to seconds relative to the first paging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotClock {
    pub slot_duration: f64,
    pub inventory_start: u64,
}

impl SlotClock {
    /// Time at the end of `slot`.
    pub fn elapsed_after(&self, slot: u64) -> f64 {
        (slot + 1).saturating_sub(self.inventory_start) as f64 * self.slot_duration
    }

    pub fn at(&self, slot: u64) -> f64 {
        slot.saturating_sub(self.inventory_start) as f64 * self.slot_duration
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub log: LogLevel,
}

/// Complete simulation state.
#[derive(Debug, Clone)]
pub struct World {
    pub params: DeviceParams,
    pub devices: Vec<DeviceSim>,
    pub reader: Reader,
    pub clock: SlotClock,
    /// Next slot to simulate.
    pub slot: u64,
    /// Exclusive bound of the inventory stage.
    pub end_slot: u64,
    scenario: Scenario,
    log: LogLevel,
    events: Vec<EventRecord>,
    changes: Vec<StateChange>,
    uplinks: Vec<Uplink>,
    reader_events: Vec<ReaderEvent>,
    inventoried: usize,
    inventoried_at: Vec<Option<f64>>,
    e_es_at_start: Vec<f64>,
    series: Vec<ProgressPoint>,
    progress: Vec<ProgressPoint>,
}

impl World {
    pub fn new(scenario: &Scenario, options: RunOptions) -> Result<Self> {
        scenario.validate()?;
        let t = &scenario.profile;
        let seed = scenario.rng_seed;
        let placements: Vec<Placement> = match &scenario.pin_samples {
            Some(samples) => channel::place_from_samples(
                scenario.n_devices,
                samples,
                scenario.layout.sensitivity_dbm,
            )?,
            None => channel::place_devices(
                scenario.n_devices,
                &scenario.layout,
                &mut stream(seed, PLACEMENT_STREAM),
            )?,
        };
        let devices = placements
            .iter()
            .enumerate()
            .map(|(i, pl)| {
                let mut rng = stream(seed, i as u64 + 1);
                // Random charge phase so devices do not turn on in lockstep.
                let level = rng.gen_range(t.e_low..=t.e_up);
                let storage =
                    EnergyStorage::new_unchecked(t.e_max, t.e_up, t.e_low).with_level(level);
                let harvest = harvest_power(pl.p_in_dbm, scenario.efficiency_mode);
                DeviceSim::new(i as u32, pl.position, pl.p_in_dbm, harvest, storage, rng)
            })
            .collect::<Vec<_>>();
        let params = DeviceParams {
            mechanism: scenario.mechanism,
            power: t.power,
            timing: t.timing(),
            t_on_timer: t.t_on_timer_slots,
            t_on_dcm: t.t_on_dcm_slots,
            n_g: scenario.n_g,
            lp_wur: scenario.lp_wur,
            errors: scenario.errors,
            slot_duration: t.slot_duration,
        };
        let inventory_start = scenario.slots(scenario.warmup_duration);
        let reader = Reader::new(
            t.timing(),
            scenario.n_g,
            inventory_start,
            scenario.errors,
            stream(seed, READER_STREAM),
        );
        let n = devices.len();
        Ok(Self {
            params,
            devices,
            reader,
            clock: SlotClock {
                slot_duration: t.slot_duration,
                inventory_start,
            },
            slot: 0,
            end_slot: inventory_start + scenario.slots(scenario.max_sim_time).max(1),
            scenario: scenario.clone(),
            log: options.log,
            events: Vec::new(),
            changes: Vec::new(),
            uplinks: Vec::new(),
            reader_events: Vec::new(),
            inventoried: 0,
            inventoried_at: vec![None; n],
            e_es_at_start: vec![0.0; n],
            series: Vec::new(),
            progress: Vec::new(),
        })
    }

    pub fn inventoried(&self) -> usize {
        self.inventoried
    }

    pub fn fraction(&self) -> f64 {
        self.inventoried as f64 / self.devices.len() as f64
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn finished(&self) -> bool {
        self.slot >= self.end_slot || self.inventoried == self.devices.len()
    }

    fn record(&mut self, slot: u64, device: Option<u32>, payload: Payload) {
        let wanted = match payload {
            Payload::State { .. } | Payload::Energy { .. } => self.log >= LogLevel::Full,
            _ => self.log >= LogLevel::Protocol,
        };
        if wanted {
            self.events.push(EventRecord {
                slot,
                device,
                payload,
            });
        }
    }

    fn start_inventory(&mut self, slot: u64) {
        for i in 0..self.devices.len() {
            let d = &mut self.devices[i];
            d.outages = 0;
            d.attempts = 0;
            let e_es = d.storage.level();
            self.e_es_at_start[i] = e_es;
            self.record(slot, Some(i as u32), Payload::Energy { e_es });
        }
        self.series.push(ProgressPoint {
            time_s: 0.0,
            fraction: 0.0,
        });
    }

    /// Advance one slot.
    pub fn step_slot(&mut self) {
        let slot = self.slot;
        if slot == self.clock.inventory_start {
            self.start_inventory(slot);
        }
        if let Some(paging) = self.reader.begin_slot(slot) {
            self.record(
                slot,
                None,
                Payload::Paging {
                    round_index: paging.round_index,
                    q: paging.access_probability,
                },
            );
            if slot > self.clock.inventory_start {
                self.series.push(ProgressPoint {
                    time_s: self.clock.at(slot),
                    fraction: self.fraction(),
                });
            }
        }
        let air = self.reader.on_air(slot);
        if let Some(Air::Msg2 { msg, .. }) = air {
            if msg.slot == slot {
                self.record(
                    slot,
                    None,
                    Payload::Msg2 {
                        round_index: msg.round_index,
                        ao: msg.ao,
                        random_id: msg.random_id,
                        msg3_start: msg.msg3_start,
                        channel: msg.channel,
                    },
                );
            }
        }

        let mut changes = std::mem::take(&mut self.changes);
        let mut uplinks = std::mem::take(&mut self.uplinks);
        let mut activities = Vec::with_capacity(self.devices.len());
        for d in &mut self.devices {
            let a = d.act(slot, air.as_ref(), &self.params, &mut changes);
            if let Some(u) = a.uplink {
                uplinks.push(u);
            }
            activities.push(a);
        }
        for u in &uplinks {
            if let Uplink::Msg1(m) = *u {
                self.record(
                    slot,
                    Some(m.device),
                    Payload::Msg1 {
                        ao: m.ao,
                        random_id: m.random_id,
                    },
                );
            }
        }

        let mut reader_events = std::mem::take(&mut self.reader_events);
        self.reader.receive(slot, &uplinks, &mut reader_events);
        let mut progressed = false;
        for ev in reader_events.drain(..) {
            match ev {
                ReaderEvent::Msg3Delivered {
                    device,
                    round_index,
                } => {
                    let d = &mut self.devices[device as usize];
                    if !d.inventoried {
                        d.mark_inventoried();
                        self.inventoried += 1;
                        self.inventoried_at[device as usize] = Some(self.clock.elapsed_after(slot));
                        progressed = true;
                    }
                    self.record(slot, Some(device), Payload::Msg3 { round_index });
                }
                ReaderEvent::Msg1Collision { round_index, ao } => {
                    self.record(slot, None, Payload::Collision { round_index, ao });
                }
                ReaderEvent::PagingSent(_)
                | ReaderEvent::Msg2Sent(_)
                | ReaderEvent::RoundScheduled { .. } => {}
            }
        }
        if progressed {
            self.progress.push(ProgressPoint {
                time_s: self.clock.elapsed_after(slot),
                fraction: self.fraction(),
            });
        }

        for (d, a) in self.devices.iter_mut().zip(&activities) {
            d.settle(slot, a, &self.params, &mut changes);
        }
        for c in changes.drain(..) {
            self.record(
                c.slot,
                Some(c.device),
                Payload::State {
                    from: c.from,
                    to: c.to,
                    e_es: c.e_es,
                    synchronized: c.synchronized,
                },
            );
        }
        uplinks.clear();
        self.changes = changes;
        self.uplinks = uplinks;
        self.reader_events = reader_events;
        self.slot += 1;
    }

    /// Run to completion and collect the results.
    pub fn finish(mut self) -> Result<SimResult> {
        while !self.finished() {
            self.step_slot();
        }
        let last = self.slot.saturating_sub(1);
        let simulated_s = self.clock.elapsed_after(last);
        self.series.push(ProgressPoint {
            time_s: simulated_s,
            fraction: self.fraction(),
        });
        self.events.sort_by_key(|e| e.slot);
        let q = |x: f64| completion_quantile(&self.progress, x);
        let n = self.devices.len();
        let summary = Summary {
            scenario: self.scenario.name.clone(),
            mechanism: self.scenario.mechanism.name().to_owned(),
            seed: self.scenario.rng_seed,
            n_devices: n,
            inventoried: self.inventoried,
            t50_s: q(0.5)?,
            t90_s: q(0.9)?,
            t95_s: q(0.95)?,
            t99_s: q(0.99)?,
            t100_s: q(1.0)?,
            rounds: self.reader.ledger.rounds.len() as u64,
            mean_attempts: self
                .devices
                .iter()
                .map(|d| f64::from(d.attempts))
                .sum::<f64>()
                / n as f64,
            outages: self.devices.iter().map(|d| u64::from(d.outages)).sum(),
            simulated_s,
        };
        let t_inv = q(self.scenario.completion_target)?;
        let devices = self
            .devices
            .iter()
            .enumerate()
            .map(|(i, d)| DeviceRecord {
                id: d.id,
                p_in_dbm: d.p_in_dbm,
                inventoried_at: self.inventoried_at[i],
                attempts: d.attempts,
                outages: d.outages,
                e_es_at_start: self.e_es_at_start[i],
            })
            .collect();
        Ok(SimResult {
            summary,
            inventoried_fraction_series: self.series,
            progress: self.progress,
            events: self.events,
            devices,
            p_in_samples: self.devices.iter().map(|d| d.p_in_dbm).collect(),
            t_inv,
            slot_duration: self.clock.slot_duration,
            inventory_start_slot: self.clock.inventory_start,
        })
    }
}

pub fn run_with(scenario: &Scenario, options: RunOptions) -> Result<SimResult> {
    World::new(scenario, options)?.finish()
}

pub fn run(scenario: &Scenario) -> Result<SimResult> {
    run_with(scenario, RunOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::Mechanism;
    use crate::error::Error;

    fn small(mechanism: Mechanism) -> Scenario {
        Scenario {
            n_devices: 20,
            warmup_duration: 1.0,
            max_sim_time: 5.0,
            pin_samples: Some(vec![-10.0]),
            ..Scenario::device1().with_mechanism(mechanism)
        }
    }

    #[test]
    fn clock_maps_slots() {
        let c = SlotClock {
            slot_duration: 0.5e-3,
            inventory_start: 100,
        };
        assert_eq!(c.at(100), 0.0);
        assert_eq!(c.elapsed_after(101), 1e-3);
        assert_eq!(c.at(50), 0.0);
    }

    #[test]
    fn zero_devices_is_invalid() {
        let s = Scenario {
            n_devices: 0,
            ..Scenario::device1()
        };
        assert!(matches!(run(&s), Err(Error::InvalidScenario(_))));
    }

    #[test]
    fn single_strong_device_inventoried_in_first_round() {
        let s = Scenario {
            n_devices: 1,
            warmup_duration: 0.05,
            pin_samples: Some(vec![0.0]),
            ..Scenario::device1().with_mechanism(Mechanism::Em)
        };
        let r = run(&s).unwrap();
        let t100 = r.summary.t100_s.unwrap();
        assert!(t100 < 48.0 * 0.5e-3, "t100 {t100}");
        assert_eq!(r.summary.inventoried, 1);
    }

    #[test]
    fn progress_is_monotone_and_complete() {
        for m in [Mechanism::Em, Mechanism::Dcm] {
            let r = run(&small(m)).unwrap();
            assert_eq!(r.summary.inventoried, 20, "{m:?}");
            assert!(r
                .progress
                .windows(2)
                .all(|w| w[0].fraction <= w[1].fraction));
            assert!(r
                .inventoried_fraction_series
                .windows(2)
                .all(|w| w[0].time_s <= w[1].time_s));
            assert_eq!(r.progress.last().unwrap().fraction, 1.0);
        }
    }

    #[test]
    fn log_levels_filter_events() {
        let s = small(Mechanism::Dcm);
        let off = run_with(&s, RunOptions { log: LogLevel::Off }).unwrap();
        let protocol = run(&s).unwrap();
        let full = run_with(
            &s,
            RunOptions {
                log: LogLevel::Full,
            },
        )
        .unwrap();
        assert!(off.events.is_empty());
        assert!(protocol
            .events
            .iter()
            .all(|e| !matches!(e.payload, Payload::State { .. })));
        assert!(full.events.len() > protocol.events.len());
        assert!(full.events.windows(2).all(|w| w[0].slot <= w[1].slot));
        assert_eq!(off.summary, full.summary);
    }
}
