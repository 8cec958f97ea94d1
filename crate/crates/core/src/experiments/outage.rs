use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::map::{best_contrast, best_separation, bts_states, tx_power_for, MapGrid};
use super::{channels_at, dipole_axes, Curve};
use crate::channel::{self, linear_to_db, Scenario};
use crate::detector::{self, DetectorKind, LinkChannels, LinkOptions};
use crate::error::{Error, Result};
use crate::seed::{child_rng, child_seed};
use crate::tag::TagModel;

/// Which SNR the curve's abscissa measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrAxis {
    /// `P_tx / P_noise`.
    #[default]
    Transmit,
    /// `|h_SR|² · P_tx / P_noise`, the reader's SNR with the tag transparent.
    Captured,
}

impl SnrAxis {
    /// Transmit SNR in dB for an abscissa value.
    pub fn to_transmit_db(self, snr_db: f64, direct_gain: f64) -> Result<f64> {
        match self {
            SnrAxis::Transmit => Ok(snr_db),
            SnrAxis::Captured => {
                if !(direct_gain > 0.0) {
                    return Err(Error::InvalidScenario(
                        "captured SNR is undefined with a null direct channel".into(),
                    ));
                }
                Ok(snr_db - linear_to_db(direct_gain))
            }
        }
    }
}

/// Tag positions whose distance to the reader lies strictly inside
/// `(inner, outer)`, sampled on a square grid of cell centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
    pub step: f64,
}

impl Annulus {
    /// `0.5λ < D < 3λ` with the given step.
    pub fn for_wavelength(lambda: f64, step: f64) -> Self {
        Self {
            inner: 0.5 * lambda,
            outer: 3.0 * lambda,
            step,
        }
    }

    pub fn cells(&self, sc: &Scenario) -> Result<Vec<crate::polarization::Vec3>> {
        if !(self.inner >= 0.0 && self.outer > self.inner && self.step > 0.0) {
            return Err(Error::EmptyRegion(format!(
                "annulus ({}, {}) with step {}",
                self.inner, self.outer, self.step
            )));
        }
        let center = sc.reader.position;
        let grid = MapGrid::around(center, self.outer, self.step)
            .map_err(|e| Error::EmptyRegion(e.to_string()))?;
        let cells: Vec<_> = (0..grid.len())
            .map(|i| grid.point(i))
            .filter(|p| {
                let d = p.distance(center);
                d > self.inner && d < self.outer
            })
            .collect();
        if cells.is_empty() {
            return Err(Error::EmptyRegion(format!(
                "no grid cell between {} and {} m of the reader",
                self.inner, self.outer
            )));
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LseMethod {
    /// Closed-form minimum-distance BER with known channels.
    Analytic,
    /// Pilot-trained Monte Carlo with this many bits per cell and SNR point.
    MonteCarlo { bits: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageOptions {
    pub ber_target: f64,
    pub lse: LseMethod,
    pub link: LinkOptions,
    pub seed: u64,
}

impl Default for OutageOptions {
    fn default() -> Self {
        Self {
            ber_target: 1e-2,
            lse: LseMethod::Analytic,
            link: LinkOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutageCurve {
    pub axis: SnrAxis,
    pub snr_db: Vec<f64>,
    /// Fraction of locations whose best-pattern BER exceeds the target.
    pub outage: Vec<f64>,
    pub n_locations: usize,
}

impl OutageCurve {
    pub fn to_curve(&self, label: impl Into<String>) -> Curve {
        Curve {
            label: label.into(),
            snr_db: self.snr_db.clone(),
            value: self.outage.clone(),
        }
    }
}

/// Outage probability over the annulus for each abscissa value.
pub fn outage_curve(
    template: &Scenario,
    tag: &TagModel,
    kind: DetectorKind,
    axis: SnrAxis,
    snr_db: &[f64],
    region: &Annulus,
    opts: &OutageOptions,
) -> Result<OutageCurve> {
    template.validate()?;
    if !(opts.ber_target > 0.0 && opts.ber_target < 1.0) {
        return Err(Error::Detector(format!(
            "BER target {} outside (0, 1)",
            opts.ber_target
        )));
    }
    let axes = dipole_axes(tag)?;
    let cells = region.cells(template)?;
    let direct = channel::direct_channel(template)?.0;
    let tx_powers: Vec<f64> = snr_db
        .iter()
        .map(|&s| {
            Ok(tx_power_for(
                template,
                axis.to_transmit_db(s, direct.norm_sqr())?,
            ))
        })
        .collect::<Result<_>>()?;
    let p_n = template.noise_power;
    let a_noise = detector::ed_noise_amplitude(p_n);

    // per cell, a decision per SNR point: BER above target
    let failures: Vec<Vec<bool>> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &pos)| {
            let ch = channels_at(template, direct, &axes, pos)?;
            match (kind, opts.lse) {
                (DetectorKind::Ed, _) => {
                    let (_, c) = best_contrast(&ch, tag);
                    tx_powers
                        .iter()
                        .map(|p| {
                            Ok(detector::ed_ber_analytic(c * p.sqrt(), a_noise)? > opts.ber_target)
                        })
                        .collect()
                }
                (DetectorKind::Lse, LseMethod::Analytic) => {
                    let (_, s) = best_separation(&ch, tag);
                    Ok(tx_powers
                        .iter()
                        .map(|&p| detector::lse_ber_analytic(s, p, p_n) > opts.ber_target)
                        .collect())
                }
                (DetectorKind::Lse, LseMethod::MonteCarlo { bits }) => {
                    lse_monte_carlo_failures(&ch, tag, &tx_powers, p_n, bits, opts, idx)
                }
            }
        })
        .collect::<Result<_>>()?;

    let n = cells.len();
    let outage = (0..snr_db.len())
        .map(|k| failures.iter().filter(|f| f[k]).count() as f64 / n as f64)
        .collect();
    Ok(OutageCurve {
        axis,
        snr_db: snr_db.to_vec(),
        outage,
        n_locations: n,
    })
}

fn lse_monte_carlo_failures(
    ch: &LinkChannels,
    tag: &TagModel,
    tx_powers: &[f64],
    p_n: f64,
    bits: usize,
    opts: &OutageOptions,
    cell: usize,
) -> Result<Vec<bool>> {
    let (p, _) = best_separation(ch, tag);
    let (one, zero) = bts_states(tag, p);
    let cell_seed = child_seed(opts.seed, cell as u64);
    tx_powers
        .iter()
        .enumerate()
        .map(|(k, &p_tx)| {
            let mut rng = child_rng(cell_seed, k as u64);
            let (_, ber) = detector::monte_carlo_ber(
                ch.aggregate(zero),
                ch.aggregate(one),
                DetectorKind::Lse,
                p_tx,
                p_n,
                bits,
                &opts.link,
                &mut rng,
            )?;
            Ok(ber > opts.ber_target)
        })
        .collect()
}

/// Reader SNR with the tag transparent, in dB, against transmit SNR.
///
/// The transparent state leaves only the direct channel, so the curve is
/// `SNR_tx + 20·log10|h_SR|` and is `-inf` when the direct channel is null.
pub fn captured_snr_curve(template: &Scenario, snr_tx_db: &[f64]) -> Result<Curve> {
    let gain = channel::direct_channel(template)?.0.norm_sqr();
    Ok(Curve {
        label: "captured".into(),
        snr_db: snr_tx_db.to_vec(),
        value: snr_tx_db.iter().map(|s| s + linear_to_db(gain)).collect(),
    })
}
