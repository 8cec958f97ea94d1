use num_complex::Complex64;
use rayon::prelude::*;

use super::measured::MeasuredChannelSet;
use super::outage::SnrAxis;
use super::{dipole_axes, Curve};
use crate::channel::{self, db_to_linear, Scenario, TagIllumination};
use crate::detector::{self, DetectorKind, LinkOptions};
use crate::error::{Error, Result};
use crate::seed::{child_rng, child_seed};
use crate::tag::{StatePair, TagModel};

pub const MIN_PCS_BITS: usize = 10_000;

/// Where polarization-coding channels come from.
#[derive(Debug, Clone)]
pub enum PcsSource {
    /// Per-state channels from a measurement file, unit noise power.
    Measured(MeasuredChannelSet),
    /// Projection-model channels of a dipole tag at the scenario's tag position.
    Model { scenario: Scenario, tag: TagModel },
}

/// Channels of one receive antenna: direct path and one entry per state.
struct AntennaChannels {
    label: String,
    direct: Complex64,
    states: Vec<Complex64>,
}

impl PcsSource {
    fn resolve(&self) -> Result<(Vec<String>, Vec<AntennaChannels>, f64)> {
        match self {
            PcsSource::Measured(set) => {
                let antennas = (0..set.antennas().len())
                    .map(|a| AntennaChannels {
                        label: set.antennas()[a].clone(),
                        direct: set.direct(a),
                        states: (0..set.states().len()).map(|s| set.tag(s, a)).collect(),
                    })
                    .collect();
                Ok((set.states().to_vec(), antennas, 1.0))
            }
            PcsSource::Model { scenario, tag } => {
                scenario.validate()?;
                let axes = dipole_axes(tag)?;
                let illum = TagIllumination::at(scenario, scenario.tag.position)?;
                let states = axes
                    .iter()
                    .map(|&o| tag.gamma_on * illum.channel(o).0)
                    .collect();
                let labels = (1..=axes.len()).map(|i| i.to_string()).collect();
                let antenna = AntennaChannels {
                    label: "reader".into(),
                    direct: channel::direct_channel(scenario)?.0,
                    states,
                };
                Ok((labels, vec![antenna], scenario.noise_power))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcsCurve {
    pub pair: StatePair,
    /// Receive antenna selected for the pair.
    pub antenna: String,
    /// `|g1 − g0|` on the selected antenna.
    pub separation: f64,
    pub curve: Curve,
}

fn check_bits(n_bits: usize) -> Result<()> {
    if n_bits < MIN_PCS_BITS {
        return Err(Error::Detector(format!(
            "at least {MIN_PCS_BITS} bits per point are required, got {n_bits}"
        )));
    }
    Ok(())
}

/// Monte Carlo LSE BER per state pair over the SNR axis.
///
/// Each pair uses the receive antenna with the largest `|g1 − g0|`; the
/// captured SNR refers to that antenna's direct channel.
pub fn pcs_sweep(
    source: &PcsSource,
    pairs: &[StatePair],
    axis: SnrAxis,
    snr_db: &[f64],
    n_bits: usize,
    link: &LinkOptions,
    seed: u64,
) -> Result<Vec<PcsCurve>> {
    check_bits(n_bits)?;
    let (labels, antennas, noise_power) = source.resolve()?;
    let index = |id: &str| {
        labels
            .iter()
            .position(|l| l == id)
            .ok_or_else(|| Error::MissingState(id.to_string()))
    };
    let mut setups = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (one, zero) = (index(&pair.one)?, index(&pair.zero)?);
        if one == zero {
            return Err(Error::InvalidStatePair(pair.to_string()));
        }
        let mut best: Option<(&AntennaChannels, f64)> = None;
        for a in &antennas {
            let sep = (a.states[one] - a.states[zero]).norm();
            if best.is_none_or(|(_, s)| sep > s) {
                best = Some((a, sep));
            }
        }
        let (a, sep) = best.expect("at least one antenna");
        let tx_powers = snr_db
            .iter()
            .map(|&s| Ok(noise_power * db_to_linear(axis.to_transmit_db(s, a.direct.norm_sqr())?)))
            .collect::<Result<Vec<f64>>>()?;
        setups.push((
            a,
            sep,
            a.direct + a.states[zero],
            a.direct + a.states[one],
            tx_powers,
        ));
    }

    let jobs: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|p| (0..snr_db.len()).map(move |k| (p, k)))
        .collect();
    let bers: Vec<f64> = jobs
        .par_iter()
        .map(|&(p, k)| {
            let (_, _, g0, g1, ref tx) = setups[p];
            let mut rng = child_rng(child_seed(seed, p as u64), k as u64);
            let (_, ber) = detector::monte_carlo_ber(
                g0,
                g1,
                DetectorKind::Lse,
                tx[k],
                noise_power,
                n_bits,
                link,
                &mut rng,
            )?;
            Ok(ber)
        })
        .collect::<Result<_>>()?;

    Ok(pairs
        .iter()
        .zip(&setups)
        .enumerate()
        .map(|(p, (pair, (a, sep, ..)))| PcsCurve {
            pair: pair.clone(),
            antenna: a.label.clone(),
            separation: *sep,
            curve: Curve {
                label: pair.to_string(),
                snr_db: snr_db.to_vec(),
                value: bers[p * snr_db.len()..(p + 1) * snr_db.len()].to_vec(),
            },
        })
        .collect())
}

/// Correlated two-state channels `g_k = h_SR + σ_T·(ρ·u + √(1 − ρ²)·w_k)`
/// with `u`, `w_k` unit complex Gaussians redrawn every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPcs {
    pub rhos: Vec<f64>,
    /// `σ_T / |h_SR|`.
    pub relative_sigma: f64,
    pub direct: Complex64,
    pub frame_bits: usize,
}

impl Default for SyntheticPcs {
    fn default() -> Self {
        Self {
            rhos: vec![0.1, 0.5, 0.9],
            relative_sigma: 1.0,
            direct: Complex64::new(1.0, 0.0),
            frame_bits: 100,
        }
    }
}

/// BER per correlation over captured SNR, unit noise power.
///
/// Every correlation sees the same frames and noise, so the curves differ
/// only through `ρ`.
pub fn synthetic_pcs_sweep(
    cfg: &SyntheticPcs,
    snr_captured_db: &[f64],
    n_bits: usize,
    link: &LinkOptions,
    seed: u64,
) -> Result<Vec<Curve>> {
    check_bits(n_bits)?;
    if cfg.rhos.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::Detector("correlations must lie in [0, 1]".into()));
    }
    if !(cfg.direct.norm() > 0.0) || !(cfg.relative_sigma > 0.0) || cfg.frame_bits == 0 {
        return Err(Error::Detector(
            "synthetic channels need a direct path, a positive spread and non-empty frames".into(),
        ));
    }
    let h = cfg.direct;
    let sigma = cfg.relative_sigma * h.norm();
    let n_frames = n_bits.div_ceil(cfg.frame_bits);
    let jobs: Vec<(usize, usize)> = (0..cfg.rhos.len())
        .flat_map(|r| (0..snr_captured_db.len()).map(move |k| (r, k)))
        .collect();
    let bers: Vec<f64> = jobs
        .par_iter()
        .map(|&(r, k)| {
            let rho = cfg.rhos[r];
            let tx = db_to_linear(snr_captured_db[k]) / h.norm_sqr();
            let point_seed = child_seed(seed, k as u64);
            let mut errors = 0.0;
            for f in 0..n_frames {
                let bits = cfg.frame_bits.min(n_bits - f * cfg.frame_bits);
                let mut rng = child_rng(point_seed, f as u64);
                let u = channel::complex_noise(1.0, &mut rng);
                let w0 = channel::complex_noise(1.0, &mut rng);
                let w1 = channel::complex_noise(1.0, &mut rng);
                let spread = (1.0 - rho * rho).sqrt();
                let g0 = h + sigma * (rho * u + spread * w0);
                let g1 = h + sigma * (rho * u + spread * w1);
                let (_, ber) = detector::monte_carlo_ber(
                    g0,
                    g1,
                    DetectorKind::Lse,
                    tx,
                    1.0,
                    bits,
                    link,
                    &mut rng,
                )?;
                errors += ber * bits as f64;
            }
            Ok(errors / n_bits as f64)
        })
        .collect::<Result<_>>()?;
    let n_snr = snr_captured_db.len();
    Ok(cfg
        .rhos
        .iter()
        .enumerate()
        .map(|(r, rho)| Curve {
            label: format!("rho={rho}"),
            snr_db: snr_captured_db.to_vec(),
            value: bers[r * n_snr..(r + 1) * n_snr].to_vec(),
        })
        .collect())
}
