//! Factory-hall geometry, path loss, incident power and message delivery.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rejection sampling gives up after this many consecutive misses.
const MAX_CONSECUTIVE_REJECTS: u32 = 1_000_000;
/// Distances are floored at the 1 m reference distance.
const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum PathLossModel {
    /// Indoor-factory dense-clutter NLOS: `33.63 + 21.9 log10(d) + 20 log10(f_GHz)`.
    #[default]
    InfDhNlos,
    FreeSpace,
    /// Linear interpolation over `(distance_m, loss_db)` points sorted by distance.
    FixedTable {
        points: Vec<(f64, f64)>,
    },
}

impl FromStr for PathLossModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf-dh-nlos" => Ok(Self::InfDhNlos),
            "free-space" => Ok(Self::FreeSpace),
            "fixed-table" => Ok(Self::FixedTable { points: Vec::new() }),
            other => Err(Error::UnsupportedModel(other.to_owned())),
        }
    }
}

impl PathLossModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::InfDhNlos => "inf-dh-nlos",
            Self::FreeSpace => "free-space",
            Self::FixedTable { .. } => "fixed-table",
        }
    }
}

/// Path loss in dB at `distance_m` (> 0).
pub fn path_loss(distance_m: f64, model: &PathLossModel, carrier_ghz: f64) -> f64 {
    match model {
        PathLossModel::InfDhNlos => 33.63 + 21.9 * distance_m.log10() + 20.0 * carrier_ghz.log10(),
        PathLossModel::FreeSpace => {
            32.45 + 20.0 * (distance_m / 1000.0 * carrier_ghz * 1000.0).log10()
        }
        PathLossModel::FixedTable { points } => interpolate(points, distance_m),
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    match points {
        [] => f64::NAN,
        [(_, y)] => *y,
        _ => {
            let i = points.partition_point(|&(d, _)| d < x);
            if i == 0 {
                return points[0].1;
            }
            if i == points.len() {
                return points[i - 1].1;
            }
            let (x0, y0) = points[i - 1];
            let (x1, y1) = points[i];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

/// Hall geometry, reader placement and link parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub hall_x_m: f64,
    pub hall_y_m: f64,
    pub bs_rows: u32,
    pub bs_cols: u32,
    pub bs_spacing_m: f64,
    pub active_bs: usize,
    /// Associate each device with its nearest base station instead of `active_bs`.
    pub nearest_bs: bool,
    pub tx_power_dbm: f64,
    pub carrier_ghz: f64,
    pub pathloss: PathLossModel,
    pub sensitivity_dbm: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            hall_x_m: 120.0,
            hall_y_m: 60.0,
            bs_rows: 3,
            bs_cols: 6,
            bs_spacing_m: 20.0,
            // Row 1, column 2: (50, 30), next to the hall centre.
            active_bs: 8,
            nearest_bs: false,
            tx_power_dbm: 33.0,
            carrier_ghz: 0.9,
            pathloss: PathLossModel::InfDhNlos,
            sensitivity_dbm: -36.0,
        }
    }
}

impl LayoutConfig {
    /// Base-station grid, row-major, centred in the hall.
    pub fn bs_positions(&self) -> Vec<(f64, f64)> {
        let width = f64::from(self.bs_cols.saturating_sub(1)) * self.bs_spacing_m;
        let height = f64::from(self.bs_rows.saturating_sub(1)) * self.bs_spacing_m;
        let x0 = (self.hall_x_m - width) / 2.0;
        let y0 = (self.hall_y_m - height) / 2.0;
        (0..self.bs_rows)
            .flat_map(|r| {
                (0..self.bs_cols).map(move |c| {
                    (
                        x0 + f64::from(c) * self.bs_spacing_m,
                        y0 + f64::from(r) * self.bs_spacing_m,
                    )
                })
            })
            .collect()
    }

    /// Incident power at `pos`.
    pub fn p_in_at(&self, pos: (f64, f64)) -> f64 {
        let bs = self.bs_positions();
        let distance = |b: &(f64, f64)| ((pos.0 - b.0).powi(2) + (pos.1 - b.1).powi(2)).sqrt();
        let d = if self.nearest_bs {
            bs.iter().map(distance).fold(f64::INFINITY, f64::min)
        } else {
            distance(&bs[self.active_bs])
        };
        self.tx_power_dbm - path_loss(d.max(MIN_DISTANCE_M), &self.pathloss, self.carrier_ghz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub position: Option<(f64, f64)>,
    pub p_in_dbm: f64,
}

/// Uniform positions over the hall, redrawn until `p_in >= sensitivity`.
pub fn place_devices(
    n: usize,
    layout: &LayoutConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Placement>> {
    let mut out = Vec::with_capacity(n);
    let mut misses = 0u32;
    while out.len() < n {
        let pos = (
            rng.gen::<f64>() * layout.hall_x_m,
            rng.gen::<f64>() * layout.hall_y_m,
        );
        let p_in_dbm = layout.p_in_at(pos);
        if p_in_dbm >= layout.sensitivity_dbm {
            out.push(Placement {
                position: Some(pos),
                p_in_dbm,
            });
            misses = 0;
        } else {
            misses += 1;
            if misses >= MAX_CONSECUTIVE_REJECTS {
                return Err(Error::PlacementInfeasible {
                    sensitivity_dbm: layout.sensitivity_dbm,
                });
            }
        }
    }
    Ok(out)
}

/// Devices from an injected `p_in` list: samples below sensitivity are dropped,
/// the rest are assigned in order and cycled if there are fewer than `n`.
pub fn place_from_samples(
    n: usize,
    samples: &[f64],
    sensitivity_dbm: f64,
) -> Result<Vec<Placement>> {
    let usable: Vec<f64> = samples
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p >= sensitivity_dbm)
        .collect();
    if usable.is_empty() {
        return Err(Error::PlacementInfeasible { sensitivity_dbm });
    }
    Ok(usable
        .iter()
        .cycle()
        .take(n)
        .map(|&p_in_dbm| Placement {
            position: None,
            p_in_dbm,
        })
        .collect())
}

/// Parse dBm values, one per line. Comma-separated lines contribute their last
/// field, so a `pin.csv` from an earlier run is accepted; a leading
/// non-numeric line is taken as a header. Blank lines and `#` comments are skipped.
pub fn parse_pin_samples(text: &str, origin: &str) -> Result<Vec<f64>> {
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.rsplit(',').next().unwrap_or(l).trim()))
        .peekable();
    if let Some((_, first)) = rows.peek() {
        if first.parse::<f64>().is_err() && first.chars().any(char::is_alphabetic) {
            rows.next();
        }
    }
    rows.map(|(i, l)| {
        l.parse::<f64>().map_err(|e| Error::Parse {
            path: format!("{origin}:{}", i + 1),
            message: e.to_string(),
        })
    })
    .collect()
}

/// Per-message-type loss probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MessageErrorConfig {
    pub paging: f64,
    pub msg1: f64,
    pub msg2: f64,
    pub msg3: f64,
    /// Extra chance that the wake-up receiver misses a paging preamble.
    pub lpwur_miss: f64,
}

/// A message reaches its recipient iff the recipient was able to receive for
/// the whole duration and an independent loss draw spares it.
pub fn deliver(received_full_duration: bool, loss_probability: f64, rng: &mut impl Rng) -> bool {
    if !received_full_duration {
        return false;
    }
    if loss_probability <= 0.0 {
        return true;
    }
    !rng.gen_bool(loss_probability.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inf_dh_nlos_values() {
        let pl = path_loss(10.0, &PathLossModel::InfDhNlos, 0.9);
        assert!((pl - (33.63 + 21.9 + 20.0 * 0.9f64.log10())).abs() < 1e-12);
        assert!((pl - 54.6).abs() < 0.05);
        assert!((path_loss(1.0, &PathLossModel::InfDhNlos, 1.0) - 33.63).abs() < 1e-12);
    }

    #[test]
    fn free_space_at_reference_distance() {
        let layout = LayoutConfig {
            pathloss: PathLossModel::FreeSpace,
            ..LayoutConfig::default()
        };
        let bs = layout.bs_positions()[layout.active_bs];
        // 20 log10(900) - 27.55 = 31.535 dB
        assert!((layout.p_in_at(bs) - (33.0 - 31.535)).abs() < 1e-3);
    }

    #[test]
    fn fixed_table_interpolates_and_clamps() {
        let m = PathLossModel::FixedTable {
            points: vec![(1.0, 30.0), (11.0, 80.0)],
        };
        assert_eq!(path_loss(6.0, &m, 0.9), 55.0);
        assert_eq!(path_loss(0.5, &m, 0.9), 30.0);
        assert_eq!(path_loss(50.0, &m, 0.9), 80.0);
    }

    #[test]
    fn unknown_model_is_rejected() {
        assert!(matches!(
            "okumura-hata".parse::<PathLossModel>(),
            Err(Error::UnsupportedModel(_))
        ));
        assert_eq!(
            "free-space".parse::<PathLossModel>().unwrap(),
            PathLossModel::FreeSpace
        );
    }

    #[test]
    fn eighteen_centred_base_stations() {
        let bs = LayoutConfig::default().bs_positions();
        assert_eq!(bs.len(), 18);
        assert_eq!(bs[0], (10.0, 10.0));
        assert_eq!(bs[17], (110.0, 50.0));
        assert_eq!(bs[8], (50.0, 30.0));
    }

    #[test]
    fn placement_respects_sensitivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = LayoutConfig::default();
        let devices = place_devices(600, &layout, &mut rng).unwrap();
        assert_eq!(devices.len(), 600);
        let min = devices
            .iter()
            .map(|d| d.p_in_dbm)
            .fold(f64::INFINITY, f64::min);
        assert!(min >= -36.0);
        // The population reaches close to the cutoff.
        assert!(min < -35.5, "min p_in {min}");
        for d in &devices {
            let (x, y) = d.position.unwrap();
            assert!((0.0..=120.0).contains(&x) && (0.0..=60.0).contains(&y));
        }
    }

    #[test]
    fn placement_infeasible_with_absurd_power() {
        let layout = LayoutConfig {
            tx_power_dbm: -100.0,
            ..LayoutConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            place_devices(1, &layout, &mut rng),
            Err(Error::PlacementInfeasible { .. })
        ));
    }

    #[test]
    fn samples_are_filtered_and_cycled() {
        let p = place_from_samples(5, &[-40.0, -20.0, -30.0], -36.0).unwrap();
        let v: Vec<f64> = p.iter().map(|d| d.p_in_dbm).collect();
        assert_eq!(v, vec![-20.0, -30.0, -20.0, -30.0, -20.0]);
        assert!(place_from_samples(1, &[-50.0], -36.0).is_err());
    }

    #[test]
    fn parses_sample_file() {
        let v = parse_pin_samples("-30\n\n# comment\n -12.5 \n", "x").unwrap();
        assert_eq!(v, vec![-30.0, -12.5]);
        let err = parse_pin_samples("-30\nabc\n", "pins.txt").unwrap_err();
        assert!(err.to_string().contains("pins.txt:2"));
    }

    #[test]
    fn parses_pin_csv() {
        let v = parse_pin_samples("device,p_in_dbm\n0,-20.5\n1,-35\n", "pin.csv").unwrap();
        assert_eq!(v, vec![-20.5, -35.0]);
    }

    #[test]
    fn delivery_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(deliver(true, 0.0, &mut rng));
        assert!(!deliver(false, 0.0, &mut rng));
        assert!((0..1000).all(|_| !deliver(true, 1.0, &mut rng)));
    }

    proptest::proptest! {
        #[test]
        fn path_loss_is_increasing(d1 in 1.0f64..500.0, extra in 0.01f64..500.0) {
            for m in [PathLossModel::InfDhNlos, PathLossModel::FreeSpace] {
                proptest::prop_assert!(path_loss(d1 + extra, &m, 0.9) > path_loss(d1, &m, 0.9));
            }
        }
    }
}
