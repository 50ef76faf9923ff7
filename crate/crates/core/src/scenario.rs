//! Scenario definition, the two device presets, validation and the TOML
//! scenario-file format.
//!
//! Files use human-scale units with the unit in the key name (`_nj`, `_uw`,
//! `_ms`, `_slots`, `_s`). Internally everything is SI.

use serde::{Deserialize, Serialize};

use crate::channel::{LayoutConfig, MessageErrorConfig, PathLossModel};
use crate::device::Mechanism;
use crate::energy::{EfficiencyMode, PowerProfile};
use crate::error::{Error, Result, Violation};
use crate::reader::RoundTiming;

const PER_NJ: f64 = 1e9;
const PER_UW: f64 = 1e6;
const PER_MS: f64 = 1e3;

fn nj(x: f64) -> f64 {
    x / PER_NJ
}

fn uw(x: f64) -> f64 {
    x / PER_UW
}

fn ms(x: f64) -> f64 {
    x / PER_MS
}

/// Device and protocol parameters of one device type.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceProfile {
    pub e_max: f64,
    pub e_up: f64,
    pub e_low: f64,
    pub power: PowerProfile,
    pub slot_duration: f64,
    pub paging_slots: u32,
    pub t_pg_slots: u32,
    pub msg1_slots: u32,
    pub msg2_slots: u32,
    pub msg3_slots: u32,
    pub t_on_dcm_slots: u32,
    pub t_on_timer_slots: u32,
    pub ao_time: u16,
    pub ao_freq: u16,
}

impl DeviceProfile {
    pub fn device1() -> Self {
        Self {
            e_max: nj(500.0),
            e_up: nj(500.0),
            e_low: nj(250.0),
            power: PowerProfile {
                p_rx: uw(1.0),
                p_tx: uw(1.0),
                p_sl: uw(0.1),
                p_lpwur: uw(1.0),
            },
            slot_duration: ms(0.5),
            paging_slots: 2,
            t_pg_slots: 24,
            msg1_slots: 1,
            msg2_slots: 1,
            msg3_slots: 6,
            t_on_dcm_slots: 4,
            t_on_timer_slots: 36,
            ao_time: 4,
            ao_freq: 2,
        }
    }

    pub fn device2() -> Self {
        Self {
            e_max: nj(5000.0),
            e_up: nj(5000.0),
            e_low: nj(2500.0),
            power: PowerProfile {
                p_rx: uw(50.0),
                p_tx: uw(200.0),
                p_sl: uw(0.1),
                p_lpwur: uw(1.0),
            },
            t_pg_slots: 28,
            t_on_dcm_slots: 2,
            t_on_timer_slots: 52,
            ao_freq: 4,
            ..Self::device1()
        }
    }

    pub fn timing(&self) -> RoundTiming {
        RoundTiming {
            paging_slots: self.paging_slots,
            msg1_slots: self.msg1_slots,
            msg2_slots: self.msg2_slots,
            msg3_slots: self.msg3_slots,
            ao_time: self.ao_time,
            ao_freq: self.ao_freq,
            t_pg: self.t_pg_slots,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub device_type: u8,
    pub n_devices: usize,
    pub mechanism: Mechanism,
    /// Number of paging groups; 1 disables grouping.
    pub n_g: u32,
    pub lp_wur: bool,
    pub profile: DeviceProfile,
    pub layout: LayoutConfig,
    pub errors: MessageErrorConfig,
    pub efficiency_mode: EfficiencyMode,
    pub warmup_duration: f64,
    /// Length of the inventory stage after warm-up.
    pub max_sim_time: f64,
    pub rng_seed: u64,
    /// Fraction whose completion time is reported as `t_inv`.
    pub completion_target: f64,
    /// Injected incident powers (dBm) that replace geometric placement.
    pub pin_samples: Option<Vec<f64>>,
}

pub const PRESETS: [&str; 2] = ["device1", "device2"];

impl Scenario {
    /// Passive backscatter device: 500 nJ storage, 1 uW radio.
    pub fn device1() -> Self {
        Self {
            name: "device1".into(),
            device_type: 1,
            n_devices: 600,
            mechanism: Mechanism::Dcm,
            n_g: 4,
            lp_wur: false,
            profile: DeviceProfile::device1(),
            layout: LayoutConfig::default(),
            errors: MessageErrorConfig::default(),
            efficiency_mode: EfficiencyMode::PeakAtMinus10,
            warmup_duration: 30.0,
            max_sim_time: 60.0,
            rng_seed: 1,
            completion_target: 0.99,
            pin_samples: None,
        }
    }

    /// Active device: 5000 nJ storage, 50/200 uW radio, wake-up receiver on.
    ///
    /// The charging stage covers a full `E_low -> E_up` recharge at the
    /// sensitivity limit (about 199 s), and the inventory stage is long enough
    /// for the energy-based baseline to finish.
    pub fn device2() -> Self {
        Self {
            name: "device2".into(),
            device_type: 2,
            n_g: 48,
            lp_wur: true,
            profile: DeviceProfile::device2(),
            warmup_duration: 220.0,
            max_sim_time: 300.0,
            ..Self::device1()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "device1" => Ok(Self::device1()),
            "device2" => Ok(Self::device2()),
            other => Err(Error::UnknownPreset(other.to_owned())),
        }
    }

    pub fn with_mechanism(mut self, mechanism: Mechanism) -> Self {
        self.mechanism = mechanism;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn slots(&self, seconds: f64) -> u64 {
        (seconds / self.profile.slot_duration).round() as u64
    }

    /// Every violated constraint, keyed by scenario-file key.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let t = &self.profile;
        let mut check = |ok: bool, key: &str, msg: String| {
            if !ok {
                v.push(Violation::new(key, msg));
            }
        };
        check(
            self.n_devices >= 1,
            "n_devices",
            "must be at least 1".into(),
        );
        check(self.n_g >= 1, "ng", "must be at least 1".into());
        check(
            self.device_type == 1 || self.device_type == 2,
            "device_type",
            format!("must be 1 or 2, got {}", self.device_type),
        );
        check(
            self.warmup_duration >= 0.0 && self.warmup_duration.is_finite(),
            "warmup_s",
            "must be >= 0".into(),
        );
        check(
            self.max_sim_time > 0.0 && self.max_sim_time.is_finite(),
            "max_sim_time_s",
            "must be > 0".into(),
        );
        check(t.slot_duration > 0.0, "slot_ms", "must be > 0".into());
        check(
            t.e_low >= 0.0 && t.e_low < t.e_up,
            "e_low_nj",
            format!(
                "turn-off threshold {} nJ must be below turn-on threshold {} nJ",
                t.e_low * PER_NJ,
                t.e_up * PER_NJ
            ),
        );
        check(
            t.e_up <= t.e_max,
            "e_up_nj",
            format!(
                "turn-on threshold {} nJ exceeds storage size {} nJ",
                t.e_up * PER_NJ,
                t.e_max * PER_NJ
            ),
        );
        let p = &t.power;
        check(
            [p.p_rx, p.p_tx, p.p_sl, p.p_lpwur]
                .iter()
                .all(|x| *x >= 0.0),
            "p_rx_uw",
            "power values must be non-negative".into(),
        );
        check(
            p.p_sl < p.p_rx,
            "p_sl_uw",
            "sleep power must be below reception power".into(),
        );
        for (key, slots) in [
            ("paging_slots", t.paging_slots),
            ("t_pg_slots", t.t_pg_slots),
            ("msg1_slots", t.msg1_slots),
            ("msg2_slots", t.msg2_slots),
            ("msg3_slots", t.msg3_slots),
            ("t_on_dcm_slots", t.t_on_dcm_slots),
        ] {
            check(slots >= 1, key, "must be at least 1 slot".into());
        }
        check(t.ao_time >= 1, "ao_time", "must be at least 1".into());
        check(t.ao_freq >= 1, "ao_freq", "must be at least 1".into());
        check(
            t.t_on_timer_slots >= t.t_pg_slots,
            "t_on_timer_slots",
            format!(
                "on timer ({} slots) must be at least the paging period T_pg ({} slots)",
                t.t_on_timer_slots, t.t_pg_slots
            ),
        );
        check(
            t.t_on_dcm_slots >= t.paging_slots && t.t_on_dcm_slots < t.t_pg_slots,
            "t_on_dcm_slots",
            format!(
                "DCM on duration must cover the paging ({} slots) and be shorter than T_pg ({} slots)",
                t.paging_slots, t.t_pg_slots
            ),
        );
        let k = u32::from(t.ao_time) * u32::from(t.ao_freq);
        let msg2_window = t.paging_slots + u32::from(t.ao_time) * t.msg1_slots + k * t.msg2_slots;
        check(
            t.t_pg_slots >= msg2_window,
            "t_pg_slots",
            format!("must fit paging, the Msg1 occasions and {k} Msg2 slots ({msg2_window} slots)"),
        );
        let e = &self.errors;
        for (key, prob) in [
            ("errors.paging", e.paging),
            ("errors.msg1", e.msg1),
            ("errors.msg2", e.msg2),
            ("errors.msg3", e.msg3),
            ("errors.lpwur_miss", e.lpwur_miss),
        ] {
            check(
                (0.0..=1.0).contains(&prob),
                key,
                "probability must lie in [0, 1]".into(),
            );
        }
        check(
            self.completion_target > 0.0 && self.completion_target <= 1.0,
            "completion_target",
            "must lie in (0, 1]".into(),
        );
        let l = &self.layout;
        check(
            l.hall_x_m > 0.0 && l.hall_y_m > 0.0,
            "layout.hall_x_m",
            "hall dimensions must be positive".into(),
        );
        check(
            l.active_bs < (l.bs_rows * l.bs_cols) as usize,
            "layout.active_bs",
            format!("index must be below {}", l.bs_rows * l.bs_cols),
        );
        check(
            l.carrier_ghz > 0.0,
            "layout.carrier_ghz",
            "must be > 0".into(),
        );
        if let PathLossModel::FixedTable { points } = &l.pathloss {
            check(
                !points.is_empty() && points.windows(2).all(|w| w[0].0 < w[1].0),
                "layout.pathloss_table",
                "needs at least one point with strictly increasing distances".into(),
            );
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(v))
        }
    }
}

/// On-disk scenario: an optional preset plus overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub device_type: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_devices: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<Mechanism>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ng: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp_wur: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_storage_nj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_up_nj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_low_nj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_rx_uw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_tx_uw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_sl_uw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_lpwur_uw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paging_slots: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_pg_slots: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msg1_slots: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msg2_slots: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msg3_slots: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_on_dcm_slots: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_on_timer_slots: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ao_time: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ao_freq: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency_mode: Option<EfficiencyMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_sim_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completion_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorsFile>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hall_x_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hall_y_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bs_rows: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bs_cols: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bs_spacing_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active_bs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nearest_bs: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_power_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub carrier_ghz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pathloss: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pathloss_table: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity_dbm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paging: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msg1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msg2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msg3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lpwur_miss: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_owned(),
            message: e.to_string(),
        })
    }

    /// Apply this file on top of its preset (or the preset for its device type).
    pub fn resolve(&self) -> Result<Scenario> {
        let base = match (&self.preset, self.device_type) {
            (Some(name), _) => Scenario::preset(name)?,
            (None, Some(2)) => Scenario::device2(),
            _ => Scenario::device1(),
        };
        let mut s = base;
        set(&mut s.name, self.name.clone());
        set(&mut s.device_type, self.device_type);
        set(&mut s.n_devices, self.n_devices);
        set(&mut s.mechanism, self.mechanism);
        set(&mut s.n_g, self.ng);
        set(&mut s.lp_wur, self.lp_wur);
        let t = &mut s.profile;
        if let Some(e_max) = self.energy_storage_nj {
            t.e_max = nj(e_max);
            t.e_up = t.e_max;
            t.e_low = 0.5 * t.e_max;
        }
        set(&mut t.e_up, self.e_up_nj.map(nj));
        set(&mut t.e_low, self.e_low_nj.map(nj));
        set(&mut t.power.p_rx, self.p_rx_uw.map(uw));
        set(&mut t.power.p_tx, self.p_tx_uw.map(uw));
        set(&mut t.power.p_sl, self.p_sl_uw.map(uw));
        set(&mut t.power.p_lpwur, self.p_lpwur_uw.map(uw));
        set(&mut t.slot_duration, self.slot_ms.map(ms));
        set(&mut t.paging_slots, self.paging_slots);
        set(&mut t.t_pg_slots, self.t_pg_slots);
        set(&mut t.msg1_slots, self.msg1_slots);
        set(&mut t.msg2_slots, self.msg2_slots);
        set(&mut t.msg3_slots, self.msg3_slots);
        set(&mut t.t_on_dcm_slots, self.t_on_dcm_slots);
        set(&mut t.t_on_timer_slots, self.t_on_timer_slots);
        set(&mut t.ao_time, self.ao_time);
        set(&mut t.ao_freq, self.ao_freq);
        set(&mut s.efficiency_mode, self.efficiency_mode);
        set(&mut s.warmup_duration, self.warmup_s);
        set(&mut s.max_sim_time, self.max_sim_time_s);
        set(&mut s.rng_seed, self.seed);
        set(&mut s.completion_target, self.completion_target);
        if let Some(l) = &self.layout {
            let layout = &mut s.layout;
            set(&mut layout.hall_x_m, l.hall_x_m);
            set(&mut layout.hall_y_m, l.hall_y_m);
            set(&mut layout.bs_rows, l.bs_rows);
            set(&mut layout.bs_cols, l.bs_cols);
            set(&mut layout.bs_spacing_m, l.bs_spacing_m);
            set(&mut layout.active_bs, l.active_bs);
            set(&mut layout.nearest_bs, l.nearest_bs);
            set(&mut layout.tx_power_dbm, l.tx_power_dbm);
            set(&mut layout.carrier_ghz, l.carrier_ghz);
            set(&mut layout.sensitivity_dbm, l.sensitivity_dbm);
            if let Some(name) = &l.pathloss {
                layout.pathloss = name.parse()?;
            }
            if let Some(table) = &l.pathloss_table {
                layout.pathloss = PathLossModel::FixedTable {
                    points: table.iter().map(|&[d, loss]| (d, loss)).collect(),
                };
            }
        }
        if let Some(e) = &self.errors {
            set(&mut s.errors.paging, e.paging);
            set(&mut s.errors.msg1, e.msg1);
            set(&mut s.errors.msg2, e.msg2);
            set(&mut s.errors.msg3, e.msg3);
            set(&mut s.errors.lpwur_miss, e.lpwur_miss);
        }
        Ok(s)
    }

    /// Fully populated file for a scenario.
    pub fn from_scenario(s: &Scenario) -> Self {
        let t = &s.profile;
        let l = &s.layout;
        let table = match &l.pathloss {
            PathLossModel::FixedTable { points } => {
                Some(points.iter().map(|&(d, x)| [d, x]).collect())
            }
            _ => None,
        };
        Self {
            preset: None,
            name: Some(s.name.clone()),
            device_type: Some(s.device_type),
            n_devices: Some(s.n_devices),
            mechanism: Some(s.mechanism),
            ng: Some(s.n_g),
            lp_wur: Some(s.lp_wur),
            energy_storage_nj: Some(round_unit(t.e_max * PER_NJ)),
            e_up_nj: Some(round_unit(t.e_up * PER_NJ)),
            e_low_nj: Some(round_unit(t.e_low * PER_NJ)),
            p_rx_uw: Some(round_unit(t.power.p_rx * PER_UW)),
            p_tx_uw: Some(round_unit(t.power.p_tx * PER_UW)),
            p_sl_uw: Some(round_unit(t.power.p_sl * PER_UW)),
            p_lpwur_uw: Some(round_unit(t.power.p_lpwur * PER_UW)),
            slot_ms: Some(round_unit(t.slot_duration * PER_MS)),
            paging_slots: Some(t.paging_slots),
            t_pg_slots: Some(t.t_pg_slots),
            msg1_slots: Some(t.msg1_slots),
            msg2_slots: Some(t.msg2_slots),
            msg3_slots: Some(t.msg3_slots),
            t_on_dcm_slots: Some(t.t_on_dcm_slots),
            t_on_timer_slots: Some(t.t_on_timer_slots),
            ao_time: Some(t.ao_time),
            ao_freq: Some(t.ao_freq),
            efficiency_mode: Some(s.efficiency_mode),
            warmup_s: Some(s.warmup_duration),
            max_sim_time_s: Some(s.max_sim_time),
            seed: Some(s.rng_seed),
            completion_target: Some(s.completion_target),
            layout: Some(LayoutFile {
                hall_x_m: Some(l.hall_x_m),
                hall_y_m: Some(l.hall_y_m),
                bs_rows: Some(l.bs_rows),
                bs_cols: Some(l.bs_cols),
                bs_spacing_m: Some(l.bs_spacing_m),
                active_bs: Some(l.active_bs),
                nearest_bs: Some(l.nearest_bs),
                tx_power_dbm: Some(l.tx_power_dbm),
                carrier_ghz: Some(l.carrier_ghz),
                pathloss: Some(l.pathloss.name().to_owned()),
                pathloss_table: table,
                sensitivity_dbm: Some(l.sensitivity_dbm),
            }),
            errors: Some(ErrorsFile {
                paging: Some(s.errors.paging),
                msg1: Some(s.errors.msg1),
                msg2: Some(s.errors.msg2),
                msg3: Some(s.errors.msg3),
                lpwur_miss: Some(s.errors.lpwur_miss),
            }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario file is plain data")
    }
}

/// Undo unit-conversion noise such as `0.1e-6 / 1e-6 = 0.09999999999999999`.
fn round_unit(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Parse and resolve a scenario file, reporting every violated constraint.
pub fn validate_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let scenario = ScenarioFile::parse(text, origin)?.resolve()?;
    scenario.validate()?;
    Ok(scenario)
}
