use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Reserved state identifier of the source-to-reader channel.
pub const DIRECT_STATE: &str = "DIRECT";
pub const MEASURED_HEADER: [&str; 4] = ["state_id", "rx_antenna_id", "re", "im"];

/// Per-state backscatter channels and per-antenna direct channels.
///
/// States and antennas keep the order of their first appearance in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredChannelSet {
    states: Vec<String>,
    antennas: Vec<String>,
    direct: Vec<Complex64>,
    /// `tag[state][antenna]`
    tag: Vec<Vec<Complex64>>,
}

impl MeasuredChannelSet {
    pub fn new(
        states: Vec<String>,
        antennas: Vec<String>,
        direct: Vec<Complex64>,
        tag: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidTag(format!(
                "a measured set needs at least 2 states, got {}",
                states.len()
            )));
        }
        if antennas.is_empty() {
            return Err(Error::InvalidTag(
                "a measured set needs an rx antenna".into(),
            ));
        }
        if states.iter().any(|s| s == DIRECT_STATE) {
            return Err(Error::InvalidTag(format!("`{DIRECT_STATE}` is reserved")));
        }
        if direct.len() != antennas.len()
            || tag.len() != states.len()
            || tag.iter().any(|row| row.len() != antennas.len())
        {
            return Err(Error::InvalidTag(
                "channel table does not match its labels".into(),
            ));
        }
        let finite = direct
            .iter()
            .chain(tag.iter().flatten())
            .all(|c| c.is_finite());
        if !finite {
            return Err(Error::InvalidTag("non-finite channel coefficient".into()));
        }
        Ok(Self {
            states,
            antennas,
            direct,
            tag,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
        if header.iter().ne(MEASURED_HEADER) {
            return Err(Error::Parse {
                line: 1,
                message: format!("header must be `{}`", MEASURED_HEADER.join(",")),
            });
        }

        let mut states: Vec<String> = Vec::new();
        let mut antennas: Vec<String> = Vec::new();
        let mut values: HashMap<(String, String), Complex64> = HashMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(e, 0))?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 4 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 4 fields, found {}", record.len()),
                });
            }
            let num = |i: usize, what: &str| -> Result<f64> {
                let v: f64 = record[i].parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("{what} `{}` is not a number", &record[i]),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Parse {
                        line,
                        message: format!("{what} is not finite"),
                    })
                }
            };
            let (state, antenna) = (record[0].to_string(), record[1].to_string());
            if state.is_empty() || antenna.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "empty identifier".into(),
                });
            }
            let value = Complex64::new(num(2, "re")?, num(3, "im")?);
            if state != DIRECT_STATE && !states.contains(&state) {
                states.push(state.clone());
            }
            if !antennas.contains(&antenna) {
                antennas.push(antenna.clone());
            }
            if values
                .insert((state.clone(), antenna.clone()), value)
                .is_some()
            {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate entry for state `{state}`, antenna `{antenna}`"),
                });
            }
        }

        let lookup = |state: &str, antenna: &str| {
            values
                .get(&(state.to_string(), antenna.to_string()))
                .copied()
                .ok_or_else(|| Error::MissingState(format!("{state} at rx antenna {antenna}")))
        };
        let direct = antennas
            .iter()
            .map(|a| lookup(DIRECT_STATE, a))
            .collect::<Result<Vec<_>>>()?;
        let tag = states
            .iter()
            .map(|s| {
                antennas
                    .iter()
                    .map(|a| lookup(s, a))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, antennas, direct, tag)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// File text; values carry 17 significant digits and read back bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = MEASURED_HEADER.join(",");
        out.push('\n');
        let mut row = |s: &str, a: &str, c: Complex64| {
            out.push_str(&format!("{s},{a},{:.16e},{:.16e}\n", c.re, c.im));
        };
        for (a, c) in self.antennas.iter().zip(&self.direct) {
            row(DIRECT_STATE, a, *c);
        }
        for (s, values) in self.states.iter().zip(&self.tag) {
            for (a, c) in self.antennas.iter().zip(values) {
                row(s, a, *c);
            }
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn antennas(&self) -> &[String] {
        &self.antennas
    }

    pub fn state_index(&self, id: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| Error::MissingState(id.to_string()))
    }

    pub fn direct(&self, antenna: usize) -> Complex64 {
        self.direct[antenna]
    }

    pub fn tag(&self, state: usize, antenna: usize) -> Complex64 {
        self.tag[state][antenna]
    }
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn load_measured_channels(path: impl AsRef<Path>) -> Result<MeasuredChannelSet> {
    MeasuredChannelSet::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_text() -> String {
        let mut t = String::from("state_id,rx_antenna_id,re,im\n");
        for a in 1..=3 {
            t.push_str(&format!("DIRECT,{a},{},{}\n", 1e-3 * a as f64, -2e-4));
        }
        for s in 1..=4 {
            for a in 1..=3 {
                t.push_str(&format!(
                    "{s},{a},{:.9e},{:.9e}\n",
                    1e-5 * s as f64,
                    3e-6 * a as f64
                ));
            }
        }
        t
    }

    #[test]
    fn accepts_four_states_three_antennas() {
        let text = sample_text();
        assert_eq!(text.lines().count(), 16);
        let set = MeasuredChannelSet::parse(&text).unwrap();
        assert_eq!(set.states(), ["1", "2", "3", "4"]);
        assert_eq!(set.antennas(), ["1", "2", "3"]);
        assert_eq!(set.tag(3, 2), Complex64::new(4e-5, 9e-6));
        assert_eq!(set.direct(1), Complex64::new(2e-3, -2e-4));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let set = MeasuredChannelSet::new(
            vec!["a".into(), "b".into()],
            vec!["r0".into()],
            vec![Complex64::new(0.1 + 0.2, -1.0 / 3.0)],
            vec![
                vec![Complex64::new(std::f64::consts::PI * 1e-7, 5e-324)],
                vec![Complex64::new(-1.234_567_890_123_456_7e-9, 2.0f64.sqrt())],
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("channels.csv");
        set.write(&path).unwrap();
        let back = load_measured_channels(&path).unwrap();
        assert_eq!(back, set);
        for s in 0..2 {
            assert_eq!(back.tag(s, 0).re.to_bits(), set.tag(s, 0).re.to_bits());
            assert_eq!(back.tag(s, 0).im.to_bits(), set.tag(s, 0).im.to_bits());
        }
    }

    #[test]
    fn rejects_missing_direct() {
        let text: String = sample_text()
            .lines()
            .filter(|l| !l.starts_with("DIRECT,2"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = MeasuredChannelSet::parse(&text).unwrap_err();
        assert!(
            matches!(err, Error::MissingState(ref m) if m.contains("DIRECT")),
            "{err}"
        );
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let mut text = sample_text();
        text.push_str("4,1,0.5\n");
        match MeasuredChannelSet::parse(&text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 17),
            e => panic!("{e}"),
        }
        let bad = sample_text().replacen("1,1,1.000000000e-5", "1,1,abc", 1);
        match MeasuredChannelSet::parse(&bad).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("abc"));
            }
            e => panic!("{e}"),
        }
        let header = sample_text().replacen("state_id", "state", 1);
        assert!(matches!(
            MeasuredChannelSet::parse(&header),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_duplicates_and_single_state() {
        let mut text = sample_text();
        text.push_str("2,3,0,0\n");
        assert!(matches!(
            MeasuredChannelSet::parse(&text),
            Err(Error::Parse { line: 17, .. })
        ));
        let one = "state_id,rx_antenna_id,re,im\nDIRECT,1,1,0\n1,1,0,1\n";
        assert!(MeasuredChannelSet::parse(one).is_err());
    }
}
