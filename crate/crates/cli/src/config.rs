//! Run configuration: TOML files, presets and resolution into scenarios.

use std::path::{Path, PathBuf};

use ambsim::channel::{ElementPattern, Pose, Scenario};
use ambsim::detector::{DetectorKind, LinkOptions};
use ambsim::experiments::{self, Annulus, LseMethod, MapGrid, SnrAxis};
use ambsim::polarization::{Orientation, Vec3};
use ambsim::seed::child_seed;
use ambsim::tag::{self, NrPreset, StatePair, TagKind, TagModel, TagOverrides};
use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const PRESETS: [&str; 8] = [
    "los-nr-best",
    "los-nr-worst",
    "los-4pr",
    "los-ipr",
    "scat-nr-best",
    "scat-nr-worst",
    "scat-4pr",
    "scat-ipr",
];

/// Seed streams derived from the run seed.
const SCATTERER_STREAM: u64 = 0;
const MONTE_CARLO_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub preset: Option<String>,
    pub frequency_hz: f64,
    pub snr_tx_db: f64,
    pub noise_power_w: f64,
    pub ber_target: f64,
    pub seed: u64,
    pub source_position: [f64; 3],
    pub source_orientation_deg: [f64; 2],
    pub reader_position: [f64; 3],
    pub reader_orientation_deg: [f64; 2],
    pub tag_position: [f64; 3],
    pub n_scatterers: Option<usize>,
    pub scatterer_gain: [f64; 2],
    pub ground_plane: Option<bool>,
    pub backscatter_gain: [f64; 2],
    pub tag_scatterer_bounces: bool,
    pub element_pattern: ElementPattern,
    pub tag: TagConfig,
    pub detector: DetectorConfig,
    pub optimum: OptimumConfig,
    pub map: MapConfig,
    pub outage: OutageConfig,
    pub pcs: PcsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            preset: None,
            frequency_hz: 2.4e9,
            snr_tx_db: 116.0,
            noise_power_w: 1.0,
            ber_target: 1e-2,
            seed: 0,
            source_position: [0.0, 0.0, 0.3],
            source_orientation_deg: [0.0, 0.0],
            reader_position: [100.0, 0.0, 0.3],
            reader_orientation_deg: [90.0, 90.0],
            tag_position: [99.85, 0.05, 0.3],
            n_scatterers: None,
            scatterer_gain: [1.0, 0.0],
            ground_plane: None,
            backscatter_gain: [1.0, 0.0],
            tag_scatterer_bounces: false,
            element_pattern: ElementPattern::Projection,
            tag: TagConfig::default(),
            detector: DetectorConfig::default(),
            optimum: OptimumConfig::default(),
            map: MapConfig::default(),
            outage: OutageConfig::default(),
            pcs: PcsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TagConfig {
    /// `nr`, `4pr` or `ipr`.
    pub kind: Option<String>,
    pub nr_preset: Option<NrPreset>,
    /// `[polar, azimuth]`; overrides `nr_preset`.
    pub nr_orientation_deg: Option<[f64; 2]>,
    pub gamma_on: Option<[f64; 2]>,
    pub gamma_off: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub pilots_per_state: usize,
    pub samples_per_symbol: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            kind: DetectorKind::Ed,
            pilots_per_state: 64,
            samples_per_symbol: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimumConfig {
    /// `[start, stop, step]` in degrees.
    pub reader_polar_deg: [f64; 3],
    pub reader_azimuth_deg: [f64; 3],
    pub search_step_deg: f64,
}

impl Default for OptimumConfig {
    fn default() -> Self {
        Self {
            reader_polar_deg: [0.0, 90.0, 10.0],
            reader_azimuth_deg: [0.0, 90.0, 10.0],
            search_step_deg: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    /// Square map of cell centres around the reader.
    pub half_width_m: f64,
    pub step_m: f64,
    /// Explicit `[min, max]` ranges replace the square map.
    pub x_range_m: Option<[f64; 2]>,
    pub y_range_m: Option<[f64; 2]>,
    pub lse_bits: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            half_width_m: 0.4,
            step_m: 0.005,
            x_range_m: None,
            y_range_m: None,
            lse_bits: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LseOutageMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutageConfig {
    pub snr_axis: SnrAxis,
    /// `[start, stop, step]` in dB.
    pub snr_db: [f64; 3],
    pub annulus_inner_wavelengths: f64,
    pub annulus_outer_wavelengths: f64,
    pub step_m: f64,
    /// Tag presets `nr-best`, `nr-worst`, `4pr`, `ipr`; empty runs the
    /// configured tag.
    pub tags: Vec<String>,
    /// Empty runs the configured detector.
    pub detectors: Vec<DetectorKind>,
    /// Independent scatterer draws averaged into each curve.
    pub scatterer_realizations: usize,
    pub lse_method: LseOutageMethod,
    pub monte_carlo_bits: usize,
}

impl Default for OutageConfig {
    fn default() -> Self {
        Self {
            snr_axis: SnrAxis::Transmit,
            snr_db: [80.0, 160.0, 5.0],
            annulus_inner_wavelengths: 0.5,
            annulus_outer_wavelengths: 3.0,
            step_m: 0.005,
            tags: Vec::new(),
            detectors: Vec::new(),
            scatterer_realizations: 1,
            lse_method: LseOutageMethod::Analytic,
            monte_carlo_bits: 2_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcsSourceKind {
    Model,
    Measured,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcsConfig {
    pub source: PcsSourceKind,
    pub measured_file: Option<PathBuf>,
    /// `one:zero` state labels.
    pub pairs: Vec<String>,
    pub snr_axis: SnrAxis,
    pub snr_db: [f64; 3],
    pub n_bits: usize,
    pub rho: Vec<f64>,
    pub relative_sigma: f64,
    pub frame_bits: usize,
}

impl Default for PcsConfig {
    fn default() -> Self {
        Self {
            source: PcsSourceKind::Model,
            measured_file: None,
            pairs: tag::PCS_PAIRS.iter().map(|p| p.to_string()).collect(),
            snr_axis: SnrAxis::Transmit,
            snr_db: [100.0, 130.0, 2.0],
            n_bits: 100_000,
            rho: vec![0.1, 0.5, 0.9],
            relative_sigma: 1.0,
            frame_bits: 100,
        }
    }
}

fn preset_parts(name: &str) -> Result<(bool, &str)> {
    let (env, tag) = name
        .split_once('-')
        .with_context(|| format!("unknown preset `{name}`"))?;
    let scattering = match env {
        "los" => false,
        "scat" => true,
        _ => bail!(
            "unknown preset `{name}`; expected one of {}",
            PRESETS.join(", ")
        ),
    };
    if !matches!(tag, "nr-best" | "nr-worst" | "4pr" | "ipr") {
        bail!(
            "unknown preset `{name}`; expected one of {}",
            PRESETS.join(", ")
        );
    }
    Ok((scattering, tag))
}

/// `(kind, nr preset)` of a tag preset name.
pub fn tag_preset(name: &str) -> Result<(String, Option<NrPreset>)> {
    Ok(match name {
        "nr-best" => ("nr".into(), Some(NrPreset::Best)),
        "nr-worst" => ("nr".into(), Some(NrPreset::Worst)),
        "4pr" | "ipr" => (name.into(), None),
        _ => bail!("unknown tag preset `{name}`; expected nr-best, nr-worst, 4pr or ipr"),
    })
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        cfg.resolved()
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        Config {
            preset: Some(name.to_string()),
            ..Default::default()
        }
        .resolved()
    }

    /// Loads a `.toml` config, or the config recorded in a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: crate::manifest::Manifest = serde_json::from_str(&text)
                .with_context(|| format!("parsing manifest {}", path.display()))?;
            return manifest.config.resolved();
        }
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Fills preset-driven fields and checks every value.
    pub fn resolved(mut self) -> Result<Self> {
        let (scattering, tag_name) = match &self.preset {
            Some(p) => {
                let (s, t) = preset_parts(p)?;
                (s, Some(t.to_string()))
            }
            None => (false, None),
        };
        self.ground_plane.get_or_insert(scattering);
        self.n_scatterers
            .get_or_insert(if scattering { 20 } else { 0 });
        if self.tag.kind.is_none() {
            let (kind, nr) = tag_preset(tag_name.as_deref().unwrap_or("nr-best"))?;
            self.tag.kind = Some(kind);
            if self.tag.nr_preset.is_none() {
                self.tag.nr_preset = nr;
            }
        }
        if self.tag.kind.as_deref() == Some("nr") && self.tag.nr_preset.is_none() {
            self.tag.nr_preset = Some(NrPreset::Best);
        }
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0) {
            bail!("frequency_hz: must be positive");
        }
        if !(self.noise_power_w > 0.0) {
            bail!("noise_power_w: must be positive");
        }
        if !(self.ber_target > 0.0 && self.ber_target < 1.0) {
            bail!("ber_target: must lie in (0, 1)");
        }
        self.tag_model().context("tag")?;
        axis_points(self.outage.snr_db).context("outage.snr_db")?;
        axis_points(self.pcs.snr_db).context("pcs.snr_db")?;
        for name in &self.outage.tags {
            tag_preset(name).context("outage.tags")?;
        }
        for p in &self.pcs.pairs {
            p.parse::<StatePair>().context("pcs.pairs")?;
        }
        if self.outage.scatterer_realizations == 0 {
            bail!("outage.scatterer_realizations: must be at least 1");
        }
        if self.detector.pilots_per_state == 0 || self.detector.samples_per_symbol == 0 {
            bail!("detector: pilots_per_state and samples_per_symbol must be at least 1");
        }
        Ok(())
    }

    pub fn tag_model(&self) -> Result<TagModel> {
        let kind = match self.tag.kind.as_deref().unwrap_or("nr") {
            "nr" => TagKind::Nr,
            "4pr" => TagKind::FourPr,
            "ipr" => TagKind::Ipr,
            other => bail!("kind: unknown tag kind `{other}`; expected nr, 4pr or ipr"),
        };
        let overrides = TagOverrides {
            nr_preset: self.tag.nr_preset,
            nr_orientation_deg: self.tag.nr_orientation_deg.map(|[p, a]| (p, a)),
            gamma_on: self.tag.gamma_on.map(complex),
            gamma_off: self.tag.gamma_off.map(complex),
            measured_states: Vec::new(),
        };
        Ok(tag::build_tag(kind, &overrides)?)
    }

    /// Tag model of a preset name with this config's modulation factors.
    pub fn preset_tag(&self, name: &str) -> Result<TagModel> {
        let (kind, nr) = tag_preset(name)?;
        let cfg = Config {
            tag: TagConfig {
                kind: Some(kind),
                nr_preset: nr,
                nr_orientation_deg: None,
                ..self.tag.clone()
            },
            ..self.clone()
        };
        cfg.tag_model()
    }

    pub fn tag_label(&self) -> String {
        match (self.tag.kind.as_deref(), self.tag.nr_preset) {
            (Some("nr"), _) if self.tag.nr_orientation_deg.is_some() => "nr".into(),
            (Some("nr"), Some(NrPreset::Worst)) => "nr-worst".into(),
            (Some("nr"), _) => "nr-best".into(),
            (Some(k), _) => k.into(),
            (None, _) => "nr-best".into(),
        }
    }

    /// Scenario without scatterers.
    pub fn base_scenario(&self) -> Result<Scenario> {
        let pose = |p: [f64; 3], o: [f64; 2], what: &str| -> Result<Pose> {
            let orientation = Orientation::from_degrees(o[0], o[1])
                .with_context(|| format!("{what}_orientation_deg"))?;
            Ok(Pose::new(Vec3::from_array(p), orientation))
        };
        let mut sc = Scenario::reference(self.snr_tx_db);
        sc.source = pose(self.source_position, self.source_orientation_deg, "source")?;
        sc.reader = pose(self.reader_position, self.reader_orientation_deg, "reader")?;
        sc.tag = Pose::new(Vec3::from_array(self.tag_position), sc.tag.orientation);
        sc.ground_plane = self.ground_plane.unwrap_or(false);
        sc.frequency = self.frequency_hz;
        sc.noise_power = self.noise_power_w;
        sc.set_snr_tx_db(self.snr_tx_db);
        sc.backscatter_gain = complex(self.backscatter_gain);
        sc.tag_scatterer_bounces = self.tag_scatterer_bounces;
        sc.element_pattern = self.element_pattern;
        sc.rng_seed = self.seed;
        Ok(sc)
    }

    /// Scenario with scatterer realization `index`; realization 0 is the
    /// one every single-scenario command uses.
    pub fn scenario(&self, index: u64) -> Result<Scenario> {
        let mut sc = self.base_scenario()?;
        let n = self.n_scatterers.unwrap_or(0);
        let seed = child_seed(child_seed(self.seed, SCATTERER_STREAM), index);
        experiments::populate_scatterers(&mut sc, n, seed)?;
        for s in &mut sc.scatterers {
            s.gain = complex(self.scatterer_gain);
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn monte_carlo_seed(&self) -> u64 {
        child_seed(self.seed, MONTE_CARLO_STREAM)
    }

    pub fn link_options(&self) -> LinkOptions {
        LinkOptions {
            pilots_per_state: self.detector.pilots_per_state,
            samples_per_symbol: self.detector.samples_per_symbol,
        }
    }

    pub fn map_grid(&self, sc: &Scenario) -> Result<MapGrid> {
        let m = &self.map;
        let grid = match (m.x_range_m, m.y_range_m) {
            (None, None) => MapGrid::around(sc.reader.position, m.half_width_m, m.step_m)?,
            (x, y) => {
                let r = sc.reader.position;
                let x = x.unwrap_or([r.x - m.half_width_m, r.x + m.half_width_m]);
                let y = y.unwrap_or([r.y - m.half_width_m, r.y + m.half_width_m]);
                MapGrid::new((x[0], x[1]), (y[0], y[1]), m.step_m, r.z)?
            }
        };
        Ok(grid)
    }

    pub fn annulus(&self) -> Annulus {
        let lambda = ambsim::channel::SPEED_OF_LIGHT / self.frequency_hz;
        Annulus {
            inner: self.outage.annulus_inner_wavelengths * lambda,
            outer: self.outage.annulus_outer_wavelengths * lambda,
            step: self.outage.step_m,
        }
    }

    pub fn lse_method(&self) -> LseMethod {
        match self.outage.lse_method {
            LseOutageMethod::Analytic => LseMethod::Analytic,
            LseOutageMethod::MonteCarlo => LseMethod::MonteCarlo {
                bits: self.outage.monte_carlo_bits,
            },
        }
    }
}

fn complex([re, im]: [f64; 2]) -> Complex64 {
    Complex64::new(re, im)
}

/// Points `start, start + step, …` not beyond `stop`.
pub fn axis_points([start, stop, step]: [f64; 3]) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite()) || stop < start {
        bail!("range [{start}, {stop}] is empty");
    }
    if start == stop {
        return Ok(vec![start]);
    }
    if !(step > 0.0) {
        bail!("step must be positive, got {step}");
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}
