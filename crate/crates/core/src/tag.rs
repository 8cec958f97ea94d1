//! Tag models and the two coding schemes.
//!
//! A tag is an ordered set of radiation patterns plus the two modulation
//! factors of its load states. With the backscatter/transparent scheme
//! ([`encode_bts`]) each pattern carries a full copy of the message in
//! on/off keying. With the polarization scheme ([`encode_pcs`]) the tag is
//! always backscattering and the bit selects one of two patterns.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::Orientation;

/// Number of IPR patterns, a 9 × 9 grid over `[0°, 180°]²`.
pub const IPR_PATTERNS: usize = 81;
const IPR_STEP_DEG: f64 = 22.5;

/// `(polar, azimuth)` degrees of the four 4PR patterns, states 1 to 4.
pub const FOUR_PR_DEG: [(f64, f64); 4] = [(0.0, 90.0), (45.0, 90.0), (90.0, 90.0), (135.0, 90.0)];

/// Best fixed orientation for the cross-polarized reference link.
pub const NR_BEST_DEG: (f64, f64) = (45.0, 90.0);
/// Worst fixed orientation: aligned with the reader, orthogonal to the source.
pub const NR_WORST_DEG: (f64, f64) = (90.0, 90.0);

/// The six state pairs, written `bit1:bit0`.
pub const PCS_PAIRS: [&str; 6] = ["2:1", "3:1", "4:1", "3:2", "4:2", "4:3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagKind {
    Nr,
    FourPr,
    Ipr,
    Measured,
}

impl fmt::Display for TagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagKind::Nr => "nr",
            TagKind::FourPr => "4pr",
            TagKind::Ipr => "ipr",
            TagKind::Measured => "measured",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TagPattern {
    /// Rotating dipole along this axis.
    Dipole(Orientation),
    /// Opaque state of a measured antenna.
    State(String),
}

impl TagPattern {
    pub fn orientation(&self) -> Option<Orientation> {
        match self {
            TagPattern::Dipole(o) => Some(*o),
            TagPattern::State(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagModel {
    pub kind: TagKind,
    pub patterns: Vec<TagPattern>,
    pub gamma_on: Complex64,
    pub gamma_off: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NrPreset {
    Best,
    Worst,
}

/// Optional changes applied on top of a tag kind's defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagOverrides {
    pub nr_preset: Option<NrPreset>,
    /// `(polar, azimuth)` in degrees; wins over `nr_preset`.
    pub nr_orientation_deg: Option<(f64, f64)>,
    pub gamma_on: Option<Complex64>,
    pub gamma_off: Option<Complex64>,
    /// State identifiers for [`TagKind::Measured`].
    pub measured_states: Vec<String>,
}

pub fn build_tag(kind: TagKind, overrides: &TagOverrides) -> Result<TagModel> {
    let patterns = match kind {
        TagKind::Nr => {
            let (p, a) = match (overrides.nr_orientation_deg, overrides.nr_preset) {
                (Some(deg), _) => deg,
                (None, Some(NrPreset::Worst)) => NR_WORST_DEG,
                (None, _) => NR_BEST_DEG,
            };
            vec![TagPattern::Dipole(
                Orientation::from_degrees(p, a)
                    .map_err(|e| Error::InvalidTag(format!("NR orientation ({p}, {a}): {e}")))?,
            )]
        }
        TagKind::FourPr => FOUR_PR_DEG
            .iter()
            .map(|&(p, a)| Orientation::from_degrees(p, a).map(TagPattern::Dipole))
            .collect::<Result<_>>()?,
        TagKind::Ipr => {
            let mut v = Vec::with_capacity(IPR_PATTERNS);
            for i in 0..9 {
                for j in 0..9 {
                    let o = Orientation::from_degrees(
                        i as f64 * IPR_STEP_DEG,
                        j as f64 * IPR_STEP_DEG,
                    )?;
                    v.push(TagPattern::Dipole(o));
                }
            }
            v
        }
        TagKind::Measured => {
            let states = &overrides.measured_states;
            if states.len() < 2 {
                return Err(Error::InvalidTag(format!(
                    "a measured tag needs at least 2 states, got {}",
                    states.len()
                )));
            }
            for (i, s) in states.iter().enumerate() {
                if states[..i].contains(s) {
                    return Err(Error::InvalidTag(format!("duplicate state `{s}`")));
                }
            }
            states.iter().cloned().map(TagPattern::State).collect()
        }
    };
    let gamma_on = overrides.gamma_on.unwrap_or(Complex64::new(1.0, 0.0));
    let gamma_off = overrides.gamma_off.unwrap_or(Complex64::new(0.0, 0.0));
    if !gamma_on.is_finite() || !gamma_off.is_finite() {
        return Err(Error::InvalidTag(
            "modulation factors must be finite".into(),
        ));
    }
    Ok(TagModel {
        kind,
        patterns,
        gamma_on,
        gamma_off,
    })
}

impl TagModel {
    pub fn nr(preset: NrPreset) -> TagModel {
        build_tag(
            TagKind::Nr,
            &TagOverrides {
                nr_preset: Some(preset),
                ..Default::default()
            },
        )
        .expect("preset angles are valid")
    }

    pub fn four_pr() -> TagModel {
        build_tag(TagKind::FourPr, &TagOverrides::default()).expect("valid")
    }

    pub fn ipr() -> TagModel {
        build_tag(TagKind::Ipr, &TagOverrides::default()).expect("valid")
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Dipole axes of every pattern; `None` for measured tags.
    pub fn orientations(&self) -> Option<Vec<Orientation>> {
        self.patterns.iter().map(TagPattern::orientation).collect()
    }

    /// Pattern index of a state label. Dipole tags number their states from
    /// 1; measured tags use their state identifiers.
    pub fn state_index(&self, label: &str) -> Result<usize> {
        match self.kind {
            TagKind::Measured => self
                .patterns
                .iter()
                .position(|p| matches!(p, TagPattern::State(s) if s == label))
                .ok_or_else(|| Error::MissingState(label.to_string())),
            _ => {
                let n: usize = label
                    .parse()
                    .map_err(|_| Error::MissingState(label.to_string()))?;
                if n == 0 || n > self.patterns.len() {
                    return Err(Error::MissingState(label.to_string()));
                }
                Ok(n - 1)
            }
        }
    }
}

/// Two tag states: the one sent for bit 1 and the one sent for bit 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatePair {
    pub one: String,
    pub zero: String,
}

impl StatePair {
    pub fn new(one: impl Into<String>, zero: impl Into<String>) -> Self {
        Self {
            one: one.into(),
            zero: zero.into(),
        }
    }

    /// The six standard pairs in table order.
    pub fn standard() -> Vec<StatePair> {
        PCS_PAIRS
            .iter()
            .map(|s| s.parse().expect("valid"))
            .collect()
    }

    /// Name usable in file names (`4:2` → `4-2`).
    pub fn file_stem(&self) -> String {
        format!("{}-{}", self.one, self.zero)
    }
}

impl FromStr for StatePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (one, zero) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidStatePair(s.to_string()))?;
        let (one, zero) = (one.trim(), zero.trim());
        if one.is_empty() || zero.is_empty() {
            return Err(Error::InvalidStatePair(s.to_string()));
        }
        Ok(StatePair::new(one, zero))
    }
}

impl fmt::Display for StatePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.one, self.zero)
    }
}

/// What the tag presents during one symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagState {
    pub pattern: usize,
    pub gamma: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Symbol {
    pub state: TagState,
    pub bit: u8,
}

/// A run of symbols sharing one `(bit 1, bit 0)` state assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanBlock {
    pub one: TagState,
    pub zero: TagState,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPlan {
    pub bits: Vec<u8>,
    pub symbols: Vec<Symbol>,
    pub blocks: Vec<PlanBlock>,
}

impl SymbolPlan {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    fn push_block(&mut self, one: TagState, zero: TagState) {
        let start = self.symbols.len();
        for &bit in &self.bits {
            let state = if bit == 1 { one } else { zero };
            self.symbols.push(Symbol { state, bit });
        }
        self.blocks.push(PlanBlock {
            one,
            zero,
            start,
            len: self.bits.len(),
        });
    }
}

fn check_bits(bits: &[u8]) -> Result<()> {
    if bits.is_empty() {
        return Err(Error::InvalidTag("empty bit sequence".into()));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::InvalidTag("bits must be 0 or 1".into()));
    }
    Ok(())
}

/// On/off keying repeated once per pattern, in pattern order.
pub fn encode_bts(bits: &[u8], tag: &TagModel) -> Result<SymbolPlan> {
    check_bits(bits)?;
    if tag.is_empty() {
        return Err(Error::InvalidTag("tag has no pattern".into()));
    }
    let mut plan = SymbolPlan {
        bits: bits.to_vec(),
        symbols: Vec::with_capacity(bits.len() * tag.len()),
        blocks: Vec::with_capacity(tag.len()),
    };
    for pattern in 0..tag.len() {
        plan.push_block(
            TagState {
                pattern,
                gamma: tag.gamma_on,
            },
            TagState {
                pattern,
                gamma: tag.gamma_off,
            },
        );
    }
    Ok(plan)
}

/// Bit 1 on `pair.one`, bit 0 on `pair.zero`, always backscattering.
pub fn encode_pcs(bits: &[u8], tag: &TagModel, pair: &StatePair) -> Result<SymbolPlan> {
    check_bits(bits)?;
    let one = tag.state_index(&pair.one)?;
    let zero = tag.state_index(&pair.zero)?;
    if one == zero {
        return Err(Error::InvalidStatePair(format!(
            "{pair}: both bits use the same state"
        )));
    }
    let mut plan = SymbolPlan {
        bits: bits.to_vec(),
        symbols: Vec::with_capacity(bits.len()),
        blocks: Vec::with_capacity(1),
    };
    plan.push_block(
        TagState {
            pattern: one,
            gamma: tag.gamma_on,
        },
        TagState {
            pattern: zero,
            gamma: tag.gamma_on,
        },
    );
    Ok(plan)
}
