//! Comma-separated data files and metadata sidecars.
//!
//! Matrices store one grid row per line, rows ordered by increasing `y` and
//! columns by increasing `x`. Floats use the shortest representation that
//! reads back to the same value.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::Scenario;
use crate::error::Result;
use crate::experiments::{BerMap, Curve, MapGrid};

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        let mut buf = ryu::Buffer::new();
        let s = buf.format_finite(v);
        s.strip_suffix(".0").unwrap_or(s).to_string()
    } else {
        v.to_string()
    }
}

/// Values for [`matrix_csv`].
pub trait Cell {
    fn render(&self) -> String;
}

impl Cell for f64 {
    fn render(&self) -> String {
        fmt_f64(*self)
    }
}

impl Cell for usize {
    fn render(&self) -> String {
        self.to_string()
    }
}

pub fn matrix_csv<T: Cell>(values: &[T], nx: usize) -> String {
    let mut out = String::new();
    for row in values.chunks(nx.max(1)) {
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix<T: Cell>(path: &Path, values: &[T], nx: usize) -> Result<()> {
    write_atomic(path, matrix_csv(values, nx).as_bytes())
}

pub fn curve_csv(curve: &Curve) -> String {
    let mut out = String::from("snr_db,value\n");
    for (s, v) in curve.snr_db.iter().zip(&curve.value) {
        out.push_str(&format!("{},{}\n", fmt_f64(*s), fmt_f64(*v)));
    }
    out
}

pub fn write_curve(path: &Path, curve: &Curve) -> Result<()> {
    write_atomic(path, curve_csv(curve).as_bytes())
}

/// Parses a file written by [`write_curve`].
pub fn parse_curve(text: &str, label: &str) -> Result<Curve> {
    let mut curve = Curve {
        label: label.to_string(),
        snr_db: Vec::new(),
        value: Vec::new(),
    };
    for (i, line) in text.lines().enumerate().skip(1) {
        let parsed = line.split_once(',').and_then(|(a, b)| {
            Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?))
        });
        let (s, v) = parsed.ok_or_else(|| crate::Error::Parse {
            line: i + 1,
            message: format!("expected `snr_db,value`, got `{line}`"),
        })?;
        curve.snr_db.push(s);
        curve.value.push(v);
    }
    Ok(curve)
}

/// Per-cell best tag orientation in long format.
pub fn carpet_csv(map: &BerMap) -> String {
    let mut out = String::from("x,y,polar_deg,azimuth_deg,pattern\n");
    for (idx, (o, p)) in map
        .best_orientation
        .iter()
        .zip(&map.best_pattern)
        .enumerate()
    {
        let pos = map.grid.point(idx);
        let (polar, azimuth) = o.to_degrees();
        out.push_str(&format!(
            "{},{},{},{},{p}\n",
            fmt_f64(pos.x),
            fmt_f64(pos.y),
            fmt_f64(polar),
            fmt_f64(azimuth)
        ));
    }
    out
}

/// Sidecar describing a map file set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub x_origin: f64,
    pub y_origin: f64,
    pub z: f64,
    pub step: f64,
    pub nx: usize,
    pub ny: usize,
    pub snr_tx_db: f64,
    pub seed: u64,
    pub scenario_hash: String,
    pub tag: String,
    pub detector: String,
}

impl MapMeta {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: &MapGrid,
        snr_tx_db: f64,
        seed: u64,
        scenario: &Scenario,
        tag: &str,
        detector: &str,
    ) -> Self {
        Self {
            x_origin: grid.x_min,
            y_origin: grid.y_min,
            z: grid.z,
            step: grid.step,
            nx: grid.nx(),
            ny: grid.ny(),
            snr_tx_db,
            seed,
            scenario_hash: scenario_hash(scenario),
            tag: tag.to_string(),
            detector: detector.to_string(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("metadata serializes");
        write_atomic(path, format!("{json}\n").as_bytes())
    }
}

/// SHA-256 over the scenario's canonical JSON form, hex encoded.
pub fn scenario_hash(scenario: &Scenario) -> String {
    let json = serde_json::to_vec(scenario).expect("scenario serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::Orientation;

    #[test]
    fn matrix_layout() {
        assert_eq!(
            matrix_csv(&[1.0, 0.5, 0.25, 2.0, 3.0, 1e-300], 3),
            "1,0.5,0.25\n2,3,1e-300\n"
        );
        assert_eq!(matrix_csv(&[3usize, 0, 80], 2), "3,0\n80\n");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(-0.07), "-0.07");
    }

    #[test]
    fn curve_round_trip() {
        let c = Curve {
            label: "x".into(),
            snr_db: vec![100.0, 105.5],
            value: vec![0.123_456_789_012_345_67, 0.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_curve(&p, &c).unwrap();
        let back = parse_curve(&std::fs::read_to_string(&p).unwrap(), "x").unwrap();
        assert_eq!(back, c);
        assert!(parse_curve("snr_db,value\n1;2\n", "x").is_err());
        assert!(!dir.path().join(".c.csv.tmp").exists());
    }

    #[test]
    fn hash_tracks_scenario_content() {
        let a = Scenario::reference(116.0);
        let mut b = a.clone();
        assert_eq!(scenario_hash(&a), scenario_hash(&b));
        assert_eq!(scenario_hash(&a).len(), 64);
        b.reader.orientation = Orientation::VERTICAL;
        assert_ne!(scenario_hash(&a), scenario_hash(&b));
    }
}
