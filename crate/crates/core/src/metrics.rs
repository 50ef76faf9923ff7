//! Event log, inventory progress, completion quantiles and file output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::device::{DeviceId, StateKind};
use crate::error::{Error, Result};
use crate::reader::AoIndex;

/// How much of the per-slot activity goes into the event log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub enum LogLevel {
    Off,
    /// Paging, Msg1, collisions, Msg2 and Msg3 deliveries.
    #[default]
    Protocol,
    /// Protocol events plus every state change and inventory-start energy samples.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    PagingSent,
    Msg1Tx,
    Msg1Collision,
    Msg2Sent,
    Msg3Delivered,
    StateChange,
    EnergySample,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PagingSent => "paging_sent",
            Self::Msg1Tx => "msg1_tx",
            Self::Msg1Collision => "msg1_collision",
            Self::Msg2Sent => "msg2_sent",
            Self::Msg3Delivered => "msg3_delivered",
            Self::StateChange => "state_change",
            Self::EnergySample => "energy_sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    Paging {
        round_index: u64,
        q: f64,
    },
    Msg1 {
        ao: AoIndex,
        random_id: u16,
    },
    Collision {
        round_index: u64,
        ao: AoIndex,
    },
    Msg2 {
        round_index: u64,
        ao: AoIndex,
        random_id: u16,
        msg3_start: u64,
        channel: u16,
    },
    Msg3 {
        round_index: u64,
    },
    State {
        from: StateKind,
        to: StateKind,
        e_es: f64,
        synchronized: bool,
    },
    Energy {
        e_es: f64,
    },
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Self::Paging { .. } => EventKind::PagingSent,
            Self::Msg1 { .. } => EventKind::Msg1Tx,
            Self::Collision { .. } => EventKind::Msg1Collision,
            Self::Msg2 { .. } => EventKind::Msg2Sent,
            Self::Msg3 { .. } => EventKind::Msg3Delivered,
            Self::State { .. } => EventKind::StateChange,
            Self::Energy { .. } => EventKind::EnergySample,
        }
    }

    fn detail(&self) -> String {
        match *self {
            Self::Paging { round_index, q } => format!("round={round_index} q={q}"),
            Self::Msg1 { ao, random_id } => format!("ao={} rid={random_id:#06x}", ao.0),
            Self::Collision { round_index, ao } => format!("round={round_index} ao={}", ao.0),
            Self::Msg2 {
                round_index,
                ao,
                random_id,
                msg3_start,
                channel,
            } => format!(
                "round={round_index} ao={} rid={random_id:#06x} msg3_start={msg3_start} ch={channel}",
                ao.0
            ),
            Self::Msg3 { round_index } => format!("round={round_index}"),
            Self::State {
                from,
                to,
                e_es,
                synchronized,
            } => format!(
                "{}->{} e_nj={} sync={synchronized}",
                from.name(),
                to.name(),
                e_es * 1e9
            ),
            Self::Energy { e_es } => format!("e_nj={}", e_es * 1e9),
        }
    }
}

/// One logged event. `slot` is absolute; for state changes it is the first
/// slot spent in the new state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub slot: u64,
    pub device: Option<DeviceId>,
    pub payload: Payload,
}

impl EventRecord {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

/// A `(time_s, fraction)` point of the inventory progress curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressPoint {
    pub time_s: f64,
    pub fraction: f64,
}

/// First time the fraction reaches `x`, or `None` if it never does.
pub fn completion_quantile(series: &[ProgressPoint], x: f64) -> Result<Option<f64>> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::InvalidQuantile(x));
    }
    Ok(series.iter().find(|p| p.fraction >= x).map(|p| p.time_s))
}

/// Per-device outcome of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceRecord {
    pub id: DeviceId,
    pub p_in_dbm: f64,
    /// Seconds from the first paging until the device's Msg3 was delivered.
    pub inventoried_at: Option<f64>,
    pub attempts: u32,
    pub outages: u32,
    /// Stored energy when the first paging went out.
    pub e_es_at_start: f64,
}

/// Key results of one run, written as `summary.txt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub mechanism: String,
    pub seed: u64,
    pub n_devices: usize,
    pub inventoried: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t50_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t90_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t95_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t99_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t100_s: Option<f64>,
    pub rounds: u64,
    pub mean_attempts: f64,
    pub outages: u64,
    pub simulated_s: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub summary: Summary,
    /// One point per paging round plus the final slot.
    pub inventoried_fraction_series: Vec<ProgressPoint>,
    /// Every change of the inventoried fraction.
    pub progress: Vec<ProgressPoint>,
    pub events: Vec<EventRecord>,
    pub devices: Vec<DeviceRecord>,
    pub p_in_samples: Vec<f64>,
    /// Time to the scenario's completion target, if reached.
    pub t_inv: Option<f64>,
    pub slot_duration: f64,
    pub inventory_start_slot: u64,
}

impl SimResult {
    pub fn quantile(&self, x: f64) -> Result<Option<f64>> {
        completion_quantile(&self.progress, x)
    }

    pub fn progress_csv(&self) -> String {
        let mut out = String::from("time_s,fraction_inventoried\n");
        for p in &self.inventoried_fraction_series {
            let _ = writeln!(out, "{},{}", p.time_s, p.fraction);
        }
        out
    }

    pub fn summary_toml(&self) -> String {
        toml::to_string(&self.summary).expect("summary is plain data")
    }

    pub fn pin_csv(&self) -> String {
        let mut out = String::from("device,p_in_dbm\n");
        for d in &self.devices {
            let _ = writeln!(out, "{},{}", d.id, d.p_in_dbm);
        }
        out
    }

    pub fn events_csv(&self) -> String {
        let mut out = String::from("slot,time_s,device,kind,detail\n");
        for e in &self.events {
            let rel = e.slot as f64 - self.inventory_start_slot as f64;
            let device = e.device.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.slot,
                rel * self.slot_duration,
                device,
                e.kind().name(),
                e.payload.detail()
            );
        }
        out
    }

    /// Write `progress.csv`, `summary.txt`, `pin.csv` and optionally `events.csv` into `dir`.
    pub fn emit(&self, dir: &Path, with_events: bool) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| Error::Unwritable {
            path: dir.to_path_buf(),
            source,
        })?;
        write_file(&dir.join("progress.csv"), &self.progress_csv())?;
        write_file(&dir.join("summary.txt"), &self.summary_toml())?;
        write_file(&dir.join("pin.csv"), &self.pin_csv())?;
        if with_events {
            write_file(&dir.join("events.csv"), &self.events_csv())?;
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Unwritable {
        path: path.to_path_buf(),
        source,
    })
}

/// Mean and sample standard deviation over the values that are present.
pub fn mean_std(values: impl IntoIterator<Item = Option<f64>>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Seed-sweep table: one row per summary, then `mean` and `stddev` rows.
/// Missing quantiles are left empty and excluded from the statistics.
pub fn sweep_csv(summaries: &[Summary]) -> String {
    let mut out = String::from(
        "seed,t50_s,t90_s,t95_s,t99_s,t100_s,rounds,mean_attempts,outages,inventoried\n",
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.seed,
            cell(s.t50_s),
            cell(s.t90_s),
            cell(s.t95_s),
            cell(s.t99_s),
            cell(s.t100_s),
            s.rounds,
            s.mean_attempts,
            s.outages,
            s.inventoried
        );
    }
    let columns: [fn(&Summary) -> Option<f64>; 9] = [
        |s| s.t50_s,
        |s| s.t90_s,
        |s| s.t95_s,
        |s| s.t99_s,
        |s| s.t100_s,
        |s| Some(s.rounds as f64),
        |s| Some(s.mean_attempts),
        |s| Some(s.outages as f64),
        |s| Some(s.inventoried as f64),
    ];
    let stats: Vec<Option<(f64, f64)>> = columns
        .iter()
        .map(|f| mean_std(summaries.iter().map(f)))
        .collect();
    let row = |label: &str, pick: fn((f64, f64)) -> f64| {
        let cells: Vec<String> = stats.iter().map(|s| cell(s.map(pick))).collect();
        format!("{label},{}\n", cells.join(","))
    };
    out.push_str(&row("mean", |(m, _)| m));
    out.push_str(&row("stddev", |(_, s)| s));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: &[(f64, f64)]) -> Vec<ProgressPoint> {
        points
            .iter()
            .map(|&(time_s, fraction)| ProgressPoint { time_s, fraction })
            .collect()
    }

    #[test]
    fn quantile_of_complete_series() {
        let s = series(&[(0.0, 0.0), (0.5, 0.5), (1.5, 1.0)]);
        assert_eq!(completion_quantile(&s, 1.0).unwrap(), Some(1.5));
        assert_eq!(completion_quantile(&s, 0.5).unwrap(), Some(0.5));
        assert_eq!(completion_quantile(&s, 0.3).unwrap(), Some(0.5));
    }

    #[test]
    fn unreached_quantile_is_absent() {
        let s = series(&[(0.0, 0.0), (3.0, 0.98)]);
        assert_eq!(completion_quantile(&s, 0.99).unwrap(), None);
    }

    #[test]
    fn quantile_bounds_are_checked() {
        assert!(matches!(
            completion_quantile(&[], 0.0),
            Err(Error::InvalidQuantile(_))
        ));
        assert!(completion_quantile(&[], 1.01).is_err());
        assert!(completion_quantile(&[], f64::NAN).is_err());
    }

    #[test]
    fn ninety_nine_percent_of_six_hundred() {
        let s = series(&[(1.0, 593.0 / 600.0), (2.0, 594.0 / 600.0)]);
        assert_eq!(completion_quantile(&s, 0.99).unwrap(), Some(2.0));
    }

    fn summary(seed: u64, t99: Option<f64>) -> Summary {
        Summary {
            scenario: "device1".into(),
            mechanism: "em".into(),
            seed,
            n_devices: 10,
            inventoried: 10,
            t50_s: Some(1.0),
            t90_s: None,
            t95_s: None,
            t99_s: t99,
            t100_s: None,
            rounds: 4,
            mean_attempts: 1.5,
            outages: 0,
            simulated_s: 3.0,
        }
    }

    #[test]
    fn sweep_aggregates_present_values() {
        let csv = sweep_csv(&[
            summary(1, Some(2.0)),
            summary(2, Some(4.0)),
            summary(3, None),
        ]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 3 + 2);
        assert!(lines[3].starts_with("3,1,,,,,4,"));
        let mean: Vec<&str> = lines[4].split(',').collect();
        let std: Vec<&str> = lines[5].split(',').collect();
        assert_eq!(mean[0], "mean");
        assert_eq!(mean[4], "3");
        assert_eq!(std[4], 2f64.sqrt().to_string());
        assert_eq!(mean[2], "");
    }

    #[test]
    fn summary_omits_absent_quantiles() {
        let text = toml::to_string(&summary(9, None)).unwrap();
        assert!(text.contains("t50_s = 1.0"));
        assert!(!text.contains("t99_s"));
        let back: Summary = toml::from_str(&text).unwrap();
        assert_eq!(back, summary(9, None));
    }
}
