//! Spatial BER maps, outage curves, captured-SNR curves, amplitude maps and
//! polarization-coding sweeps.

mod map;
mod measured;
mod outage;
mod pcs;

pub use map::{amplitude_maps, ber_map, AmplitudeMaps, BerMap, MapGrid, MapOptions};
pub use measured::{load_measured_channels, MeasuredChannelSet, DIRECT_STATE, MEASURED_HEADER};
pub use outage::{
    captured_snr_curve, outage_curve, Annulus, LseMethod, OutageCurve, OutageOptions, SnrAxis,
};
pub use pcs::{pcs_sweep, synthetic_pcs_sweep, PcsCurve, PcsSource, SyntheticPcs};

use crate::channel::{self, PlacementConstraints, Scenario, TagIllumination};
use crate::detector::LinkChannels;
use crate::error::{Error, Result};
use crate::polarization::{Orientation, Vec3};
use crate::seed::rng_from_seed;
use num_complex::Complex64;

/// Two-column curve keyed by SNR in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub snr_db: Vec<f64>,
    pub value: Vec<f64>,
}

/// Draws `n` scatterers of length `λ/2` and unit gain around the reader,
/// clear of the source and reader, above the ground when it is present.
pub fn populate_scatterers(sc: &mut Scenario, n: usize, seed: u64) -> Result<()> {
    let lambda = sc.wavelength();
    let constraints = PlacementConstraints {
        above_ground: sc.ground_plane,
        ..PlacementConstraints::for_wavelength(lambda)
    };
    let mut rng = rng_from_seed(seed);
    sc.scatterers = channel::sample_scatterers(
        &mut rng,
        n,
        &constraints,
        sc.reader.position,
        &[sc.source.position],
        lambda / 2.0,
        Complex64::new(1.0, 0.0),
    )?;
    Ok(())
}

/// Channels of every tag axis at `position`, sharing the direct channel.
pub(crate) fn channels_at(
    sc: &Scenario,
    direct: Complex64,
    axes: &[Orientation],
    position: Vec3,
) -> Result<LinkChannels> {
    let illum = TagIllumination::at(sc, position)?;
    Ok(LinkChannels {
        direct,
        tag: axes.iter().map(|&o| illum.channel(o).0).collect(),
    })
}

pub(crate) fn dipole_axes(tag: &crate::tag::TagModel) -> Result<Vec<Orientation>> {
    tag.orientations()
        .ok_or_else(|| Error::InvalidTag("spatial studies need a rotating-dipole tag".into()))
}
