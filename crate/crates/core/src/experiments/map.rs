use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{channels_at, dipole_axes};
use crate::channel::{self, db_to_linear, Scenario};
use crate::detector::{self, DetectorKind, LinkChannels, LinkOptions};
use crate::error::{Error, Result};
use crate::polarization::{Orientation, Vec3};
use crate::seed::child_rng;
use crate::tag::{TagModel, TagState};

/// Rectangular grid of tag positions at a fixed height.
///
/// Cell `(i, j)` sits at `(x_min + i·step, y_min + j·step, z)`; the last
/// column and row are the last points not beyond `x_max` and `y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub step: f64,
    pub z: f64,
}

impl MapGrid {
    pub fn new(x: (f64, f64), y: (f64, f64), step: f64, z: f64) -> Result<Self> {
        let g = MapGrid {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            step,
            z,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square grid of cell centres within `center ± half_width`. Each side
    /// has an even number of cells, so none lands on `center`.
    pub fn around(center: Vec3, half_width: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && half_width >= step / 2.0) {
            return Err(Error::InvalidGrid(format!(
                "half width {half_width} and step {step} leave no cell"
            )));
        }
        let fit = ((2.0 * half_width / step) + 1e-9).floor() as usize;
        let n = (fit - fit % 2).max(2) as f64;
        let first = -0.5 * (n - 1.0) * step;
        let last = first + (n - 1.0) * step;
        MapGrid::new(
            (center.x + first, center.x + last),
            (center.y + first, center.y + last),
            step,
            center.z,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.x_min, self.x_max, self.y_min, self.y_max, self.step, self.z,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite bound".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.x_max < self.x_min || self.y_max < self.y_min {
            return Err(Error::InvalidGrid(
                "range upper bound below lower bound".into(),
            ));
        }
        Ok(())
    }

    fn count(lo: f64, hi: f64, step: f64) -> usize {
        ((hi - lo) / step + 1e-9).floor() as usize + 1
    }

    pub fn nx(&self) -> usize {
        Self::count(self.x_min, self.x_max, self.step)
    }

    pub fn ny(&self) -> usize {
        Self::count(self.y_min, self.y_max, self.step)
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.step
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.step
    }

    /// Position of flat, row-major cell `index` (rows run along `y`).
    pub fn point(&self, index: usize) -> Vec3 {
        let nx = self.nx();
        Vec3::new(self.x(index % nx), self.y(index / nx), self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapOptions {
    /// Monte Carlo bits per cell for the LSE detector.
    pub lse_bits: usize,
    pub link: LinkOptions,
    pub seed: u64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            lse_bits: 10_000,
            link: LinkOptions::default(),
            seed: 0,
        }
    }
}

/// Row-major matrices over a [`MapGrid`]: `ny` rows of `nx` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct BerMap {
    pub grid: MapGrid,
    pub ber: Vec<f64>,
    pub best_pattern: Vec<usize>,
    pub best_orientation: Vec<Orientation>,
}

impl BerMap {
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.ber.chunks(self.grid.nx())
    }
}

/// States `(one, zero)` of pattern `p` under on-off keying.
pub(crate) fn bts_states(tag: &TagModel, p: usize) -> (TagState, TagState) {
    (
        TagState {
            pattern: p,
            gamma: tag.gamma_on,
        },
        TagState {
            pattern: p,
            gamma: tag.gamma_off,
        },
    )
}

/// Pattern with the largest `||g1| − |g0||` and that value. Ties keep the
/// first pattern.
pub(crate) fn best_contrast(ch: &LinkChannels, tag: &TagModel) -> (usize, f64) {
    best_by(ch, tag, |g1, g0| (g1.norm() - g0.norm()).abs())
}

/// Pattern with the largest `|g1 − g0|` and that value.
pub(crate) fn best_separation(ch: &LinkChannels, tag: &TagModel) -> (usize, f64) {
    best_by(ch, tag, |g1, g0| (g1 - g0).norm())
}

fn best_by(
    ch: &LinkChannels,
    tag: &TagModel,
    f: impl Fn(Complex64, Complex64) -> f64,
) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for p in 0..ch.tag.len() {
        let (one, zero) = bts_states(tag, p);
        let v = f(ch.aggregate(one), ch.aggregate(zero));
        if v > best.1 {
            best = (p, v);
        }
    }
    best
}

/// BER map over `grid` with the template's source, reader and scatterers.
///
/// The energy detector uses the closed form and the pattern of maximal
/// contrast, which is also the pattern of minimal BER. The LSE detector
/// runs a Monte Carlo link on the pattern of maximal state separation.
pub fn ber_map(
    template: &Scenario,
    tag: &TagModel,
    kind: DetectorKind,
    grid: &MapGrid,
    snr_tx_db: f64,
    opts: &MapOptions,
) -> Result<BerMap> {
    grid.validate()?;
    let mut sc = template.clone();
    sc.set_snr_tx_db(snr_tx_db);
    sc.validate()?;
    let axes = dipole_axes(tag)?;
    let direct = channel::direct_channel(&sc)?.0;
    let (p_tx, p_n) = (sc.tx_power, sc.noise_power);
    let cells: Vec<(f64, usize)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let ch = channels_at(&sc, direct, &axes, grid.point(idx))?;
            match kind {
                DetectorKind::Ed => {
                    let (p, c) = best_contrast(&ch, tag);
                    Ok((
                        detector::ed_ber_analytic(
                            c * p_tx.sqrt(),
                            detector::ed_noise_amplitude(p_n),
                        )?,
                        p,
                    ))
                }
                DetectorKind::Lse => {
                    let (p, _) = best_separation(&ch, tag);
                    let (one, zero) = bts_states(tag, p);
                    let mut rng = child_rng(opts.seed, idx as u64);
                    let (_, ber) = detector::monte_carlo_ber(
                        ch.aggregate(zero),
                        ch.aggregate(one),
                        DetectorKind::Lse,
                        p_tx,
                        p_n,
                        opts.lse_bits,
                        &opts.link,
                        &mut rng,
                    )?;
                    Ok((ber, p))
                }
            }
        })
        .collect::<Result<_>>()?;
    let (ber, best_pattern): (Vec<f64>, Vec<usize>) = cells.into_iter().unzip();
    Ok(BerMap {
        grid: *grid,
        best_orientation: best_pattern.iter().map(|&p| axes[p]).collect(),
        ber,
        best_pattern,
    })
}

/// Noiseless received amplitudes of the backscattering and transparent
/// states, per cell, for the pattern of maximal contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeMaps {
    pub grid: MapGrid,
    pub a_on: Vec<f64>,
    pub a_off: Vec<f64>,
    pub pattern: Vec<usize>,
}

/// Amplitude maps at the template's transmit power.
pub fn amplitude_maps(
    template: &Scenario,
    tag: &TagModel,
    grid: &MapGrid,
) -> Result<AmplitudeMaps> {
    grid.validate()?;
    template.validate()?;
    let axes = dipole_axes(tag)?;
    let direct = channel::direct_channel(template)?.0;
    let sqrt_p = template.tx_power.sqrt();
    let cells: Vec<(f64, f64, usize)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let ch = channels_at(template, direct, &axes, grid.point(idx))?;
            let (p, _) = best_contrast(&ch, tag);
            let (one, zero) = bts_states(tag, p);
            Ok((
                ch.aggregate(one).norm() * sqrt_p,
                ch.aggregate(zero).norm() * sqrt_p,
                p,
            ))
        })
        .collect::<Result<_>>()?;
    let mut maps = AmplitudeMaps {
        grid: *grid,
        a_on: Vec::with_capacity(cells.len()),
        a_off: Vec::with_capacity(cells.len()),
        pattern: Vec::with_capacity(cells.len()),
    };
    for (on, off, p) in cells {
        maps.a_on.push(on);
        maps.a_off.push(off);
        maps.pattern.push(p);
    }
    Ok(maps)
}

/// `db_to_linear` of the transmit SNR scaled to the template noise power.
pub(crate) fn tx_power_for(sc: &Scenario, snr_tx_db: f64) -> f64 {
    sc.noise_power * db_to_linear(snr_tx_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::populate_scatterers;
    use crate::tag::NrPreset;

    fn scattering(seed: u64) -> Scenario {
        let mut sc = Scenario::reference(116.0);
        sc.ground_plane = true;
        populate_scatterers(&mut sc, 20, seed).unwrap();
        sc
    }

    fn small_grid(sc: &Scenario) -> MapGrid {
        MapGrid::around(sc.reader.position, 0.2, 0.02).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = MapGrid::new((0.0, 1.0), (2.0, 2.5), 0.25, 0.3).unwrap();
        assert_eq!((g.nx(), g.ny(), g.len()), (5, 3, 15));
        assert_eq!(g.point(7), Vec3::new(0.5, 2.25, 0.3));
        assert!(MapGrid::new((0.0, 1.0), (0.0, 1.0), 0.0, 0.0).is_err());
        assert!(MapGrid::new((1.0, 0.0), (0.0, 1.0), 0.1, 0.0).is_err());

        let c = Vec3::new(100.0, 0.0, 0.3);
        let a = MapGrid::around(c, 0.4, 0.005).unwrap();
        assert_eq!(a.nx(), 160);
        assert!((0..a.len()).all(|i| a.point(i).distance(c) > 1e-3));
        assert!((a.x_min - c.x + a.x_max - c.x).abs() < 1e-9);
    }

    #[test]
    fn nr_carpet_is_uniform() {
        for sc in [Scenario::reference(116.0), scattering(3)] {
            let m = ber_map(
                &sc,
                &TagModel::nr(NrPreset::Best),
                DetectorKind::Ed,
                &small_grid(&sc),
                116.0,
                &MapOptions::default(),
            )
            .unwrap();
            assert!(m.best_pattern.iter().all(|&p| p == 0));
            assert!(m.best_orientation.windows(2).all(|w| w[0] == w[1]));
            assert!(m.ber.iter().all(|b| (0.0..=0.5).contains(b)));
        }
    }

    #[test]
    fn ipr_carpet_varies_with_scatterers() {
        let sc = scattering(3);
        let m = ber_map(
            &sc,
            &TagModel::ipr(),
            DetectorKind::Ed,
            &small_grid(&sc),
            116.0,
            &MapOptions::default(),
        )
        .unwrap();
        let first = m.best_orientation[0];
        assert!(m.best_orientation.iter().any(|o| *o != first));
    }

    #[test]
    fn nested_pattern_sets_dominate_cellwise() {
        let sc = scattering(11);
        let grid = small_grid(&sc);
        let opts = MapOptions::default();
        let map = |tag: TagModel| {
            ber_map(&sc, &tag, DetectorKind::Ed, &grid, 116.0, &opts)
                .unwrap()
                .ber
        };
        let ipr = map(TagModel::ipr());
        let four = map(TagModel::four_pr());
        let nr = map(TagModel::nr(NrPreset::Best));
        for i in 0..ipr.len() {
            assert!(ipr[i] <= four[i] && four[i] <= nr[i], "cell {i}");
        }
    }

    #[test]
    fn lse_map_is_deterministic_and_beats_ed() {
        let sc = scattering(5);
        let grid = MapGrid::around(sc.reader.position, 0.1, 0.04).unwrap();
        let opts = MapOptions {
            lse_bits: 2000,
            ..Default::default()
        };
        let tag = TagModel::four_pr();
        let a = ber_map(&sc, &tag, DetectorKind::Lse, &grid, 125.0, &opts).unwrap();
        let b = ber_map(&sc, &tag, DetectorKind::Lse, &grid, 125.0, &opts).unwrap();
        assert_eq!(a, b);
        let ed = ber_map(&sc, &tag, DetectorKind::Ed, &grid, 125.0, &opts).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&a.ber) <= mean(&ed.ber) + 0.01);
    }

    #[test]
    fn amplitude_maps_match_contrast() {
        let los = Scenario::reference(116.0);
        let grid = small_grid(&los);
        let m = amplitude_maps(&los, &TagModel::four_pr(), &grid).unwrap();
        // transparent LOS tag: only the direct channel is left, and it is null
        assert!(m.a_off.iter().all(|&a| a == m.a_off[0]));
        assert_eq!(m.a_off[0], 0.0);
        let scat = amplitude_maps(&scattering(2), &TagModel::four_pr(), &grid).unwrap();
        assert!(scat.a_off[0] > 1e3 * m.a_off[0].max(1e-300));

        let sqrt_p = los.tx_power.sqrt();
        let axes = los_axes();
        let direct = channel::direct_channel(&los).unwrap().0;
        for idx in [0, 17, grid.len() - 1] {
            let ch = channels_at(&los, direct, &axes, grid.point(idx)).unwrap();
            let (_, c) = best_contrast(&ch, &TagModel::four_pr());
            let delta = detector::signal_contrast(m.a_on[idx], m.a_off[idx]);
            assert!((delta - c * sqrt_p).abs() <= 1e-9 * delta.max(1.0));
        }
    }

    fn los_axes() -> Vec<Orientation> {
        TagModel::four_pr().orientations().unwrap()
    }

    #[test]
    fn measured_tags_are_rejected() {
        let tag = crate::tag::build_tag(
            crate::tag::TagKind::Measured,
            &crate::tag::TagOverrides {
                measured_states: vec!["a".into(), "b".into()],
                ..Default::default()
            },
        )
        .unwrap();
        let sc = Scenario::reference(116.0);
        assert!(ber_map(
            &sc,
            &tag,
            DetectorKind::Ed,
            &small_grid(&sc),
            116.0,
            &MapOptions::default()
        )
        .is_err());
    }
}
