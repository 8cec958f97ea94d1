//! Energy detector, least-squares detector and Monte Carlo link runs.
//!
//! Noise amplitude convention: the energy detector's `A_noise` is
//! `2·√P_noise`. With a midpoint threshold on `|y|` and circular Gaussian
//! noise of power `P_noise`, the radial noise has standard deviation
//! `√(P_noise/2)`, so the bit error probability at high SNR is
//! `Q(ΔA / √(2 P_noise)) = 0.5·erfc(ΔA / (2√P_noise))`, which is exactly
//! [`ed_ber_analytic`] with that `A_noise`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::channel::{self, ChannelCoefficient, Scenario, TagIllumination};
use crate::error::{Error, Result};
use crate::tag::{SymbolPlan, TagModel, TagState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Ed,
    Lse,
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DetectorKind::Ed => "ed",
            DetectorKind::Lse => "lse",
        })
    }
}

pub fn erfc(x: f64) -> f64 {
    erf::erfc(x)
}

/// `ΔA = |A_on − A_off|`.
pub fn signal_contrast(a_on: f64, a_off: f64) -> f64 {
    (a_on - a_off).abs()
}

/// Energy-detector noise amplitude for receiver noise power `noise_power`.
pub fn ed_noise_amplitude(noise_power: f64) -> f64 {
    2.0 * noise_power.sqrt()
}

/// `0.5·erfc(ΔA / A_noise)`.
pub fn ed_ber_analytic(delta_a: f64, a_noise: f64) -> Result<f64> {
    if !(a_noise > 0.0) {
        return Err(Error::Detector(format!(
            "noise amplitude must be positive, got {a_noise}"
        )));
    }
    if !(delta_a >= 0.0) {
        return Err(Error::Detector(format!(
            "contrast must be non-negative, got {delta_a}"
        )));
    }
    Ok(0.5 * erfc(delta_a / a_noise))
}

/// Energy-detector BER of a tag whose two states give aggregate channels
/// `g0` and `g1`.
pub fn ed_ber_for_channels(g0: Complex64, g1: Complex64, tx_power: f64, noise_power: f64) -> f64 {
    let delta = signal_contrast(g1.norm() * tx_power.sqrt(), g0.norm() * tx_power.sqrt());
    0.5 * erfc(delta / ed_noise_amplitude(noise_power))
}

/// Minimum-distance detection error between two points in complex AWGN:
/// `0.5·erfc(|g1 − g0|·√P_tx / (2√P_noise))`.
pub fn lse_ber_analytic(separation: f64, tx_power: f64, noise_power: f64) -> f64 {
    0.5 * erfc(separation * tx_power.sqrt() / (2.0 * noise_power.sqrt()))
}

pub fn bit_error_rate(truth: &[u8], detected: &[u8]) -> Result<f64> {
    if truth.len() != detected.len() || truth.is_empty() {
        return Err(Error::Detector(format!(
            "bit sequences of length {} and {} cannot be compared",
            truth.len(),
            detected.len()
        )));
    }
    let errors = truth.iter().zip(detected).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / truth.len() as f64)
}

/// Energy-detector decision rule learned from training windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdThreshold {
    pub level: f64,
    /// Bit 1 is the *lower* amplitude when set.
    pub inverted: bool,
}

impl EdThreshold {
    /// Midpoint of the mean training amplitudes of each state.
    pub fn train(on: &[Complex64], off: &[Complex64]) -> Result<(Self, f64)> {
        if on.is_empty() || off.is_empty() {
            return Err(Error::Detector("empty ED training set".into()));
        }
        let a_on = mean_amplitude(on);
        let a_off = mean_amplitude(off);
        Ok((
            EdThreshold {
                level: 0.5 * (a_on + a_off),
                inverted: a_on < a_off,
            },
            signal_contrast(a_on, a_off),
        ))
    }
}

fn mean_amplitude(samples: &[Complex64]) -> f64 {
    samples.iter().map(|y| y.norm()).sum::<f64>() / samples.len() as f64
}

fn window_means(samples: &[Complex64], samples_per_bit: usize) -> Result<Vec<f64>> {
    if samples_per_bit == 0 {
        return Err(Error::Detector("zero-length bit window".into()));
    }
    if !samples.len().is_multiple_of(samples_per_bit) {
        return Err(Error::Detector(format!(
            "{} samples do not split into windows of {samples_per_bit}",
            samples.len()
        )));
    }
    Ok(samples
        .chunks_exact(samples_per_bit)
        .map(mean_amplitude)
        .collect())
}

/// Compares the windowed mean of `|y|` with the threshold.
pub fn ed_detect(
    samples: &[Complex64],
    threshold: &EdThreshold,
    samples_per_bit: usize,
) -> Result<Vec<u8>> {
    if !(threshold.level > 0.0 && threshold.level.is_finite()) {
        return Err(Error::Detector(format!(
            "threshold must be positive, got {}",
            threshold.level
        )));
    }
    Ok(window_means(samples, samples_per_bit)?
        .into_iter()
        .map(|m| {
            let above = m > threshold.level;
            u8::from(above != threshold.inverted)
        })
        .collect())
}

/// Least-squares channel estimates of the two tag states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimates {
    pub g0: ChannelCoefficient,
    pub g1: ChannelCoefficient,
    /// RMS of the pilot residuals, an estimate of `√P_noise`.
    pub noise_amplitude: f64,
}

impl ChannelEstimates {
    pub fn separation(&self) -> f64 {
        (self.g1.0 - self.g0.0).norm()
    }
}

pub fn lse_estimate(
    pilots0: &[Complex64],
    pilots1: &[Complex64],
    tx_power: f64,
) -> Result<ChannelEstimates> {
    if pilots0.is_empty() || pilots1.is_empty() {
        return Err(Error::Detector("empty pilot set".into()));
    }
    if !(tx_power > 0.0) {
        return Err(Error::Detector("tx_power must be positive".into()));
    }
    let mean = |p: &[Complex64]| p.iter().sum::<Complex64>() / p.len() as f64;
    let m0 = mean(pilots0);
    let m1 = mean(pilots1);
    let ss: f64 = pilots0.iter().map(|y| (y - m0).norm_sqr()).sum::<f64>()
        + pilots1.iter().map(|y| (y - m1).norm_sqr()).sum::<f64>();
    let dof = (pilots0.len() + pilots1.len()).saturating_sub(2).max(1);
    let sqrt_p = tx_power.sqrt();
    Ok(ChannelEstimates {
        g0: ChannelCoefficient(m0 / sqrt_p),
        g1: ChannelCoefficient(m1 / sqrt_p),
        noise_amplitude: (ss / dof as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LseDetection {
    pub bits: Vec<u8>,
    /// The estimates coincide and every decision fell back to bit 0.
    pub degenerate: bool,
}

/// Nearest hypothesis `g_k √P_tx` to each sample, ties to bit 0.
pub fn lse_detect(samples: &[Complex64], est: &ChannelEstimates, tx_power: f64) -> LseDetection {
    let sqrt_p = tx_power.sqrt();
    let z0 = est.g0.0 * sqrt_p;
    let z1 = est.g1.0 * sqrt_p;
    let degenerate = z0 == z1;
    let bits = samples
        .iter()
        .map(|y| u8::from((z1 - y).norm_sqr() < (z0 - y).norm_sqr()))
        .collect();
    LseDetection { bits, degenerate }
}

/// Noise-free channels of every tag pattern at one tag position.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkChannels {
    pub direct: Complex64,
    pub tag: Vec<Complex64>,
}

impl LinkChannels {
    /// Channels of a rotating-dipole tag at `sc.tag.position`.
    pub fn from_scenario(sc: &Scenario, tag: &TagModel) -> Result<Self> {
        let axes = tag
            .orientations()
            .ok_or_else(|| Error::InvalidTag("measured tags need measured channels".into()))?;
        let direct = channel::direct_channel(sc)?.0;
        let illum = TagIllumination::at(sc, sc.tag.position)?;
        Ok(Self {
            direct,
            tag: axes.into_iter().map(|o| illum.channel(o).0).collect(),
        })
    }

    pub fn aggregate(&self, state: TagState) -> Complex64 {
        self.direct + state.gamma * self.tag[state.pattern]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkOptions {
    /// Training symbols per tag state and per block.
    pub pilots_per_state: usize,
    pub samples_per_symbol: usize,
}

impl Default for LinkOptions {
    fn default() -> Self {
        Self {
            pilots_per_state: 64,
            samples_per_symbol: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Detected bits of the selected block.
    pub bits: Vec<u8>,
    pub ber: f64,
    /// Training metric per block: `ΔA` for ED, `|ĝ1 − ĝ0|` for LSE.
    pub per_pattern_metric: Vec<f64>,
    /// Pattern carrying bit 1 in the selected block.
    pub selected_pattern: usize,
    pub selected_block: usize,
    /// Training could not tell the two states apart.
    pub degenerate: bool,
}

enum Trained {
    Ed(Option<EdThreshold>),
    Lse(ChannelEstimates),
}

fn draw<R: Rng + ?Sized>(
    g: Complex64,
    n: usize,
    tx_power: f64,
    noise_power: f64,
    rng: &mut R,
    out: &mut Vec<Complex64>,
) {
    for _ in 0..n {
        out.push(channel::received_sample(
            ChannelCoefficient(g),
            tx_power,
            noise_power,
            rng,
        ));
    }
}

fn train<R: Rng + ?Sized>(
    g0: Complex64,
    g1: Complex64,
    kind: DetectorKind,
    tx_power: f64,
    noise_power: f64,
    opts: &LinkOptions,
    rng: &mut R,
) -> Result<(Trained, f64)> {
    if opts.pilots_per_state == 0 {
        return Err(Error::Detector(
            "at least one pilot per state is required".into(),
        ));
    }
    let sps = opts.samples_per_symbol;
    let n = opts.pilots_per_state * sps;
    let mut p0 = Vec::with_capacity(n);
    let mut p1 = Vec::with_capacity(n);
    draw(g0, n, tx_power, noise_power, rng, &mut p0);
    draw(g1, n, tx_power, noise_power, rng, &mut p1);
    match kind {
        DetectorKind::Ed => {
            let (threshold, metric) = EdThreshold::train(&p1, &p0)?;
            let usable = threshold.level > 0.0 && threshold.level.is_finite();
            Ok((Trained::Ed(usable.then_some(threshold)), metric))
        }
        DetectorKind::Lse => {
            let est = lse_estimate(
                &average_symbols(&p0, sps),
                &average_symbols(&p1, sps),
                tx_power,
            )?;
            let metric = est.separation();
            Ok((Trained::Lse(est), metric))
        }
    }
}

fn average_symbols(samples: &[Complex64], sps: usize) -> Vec<Complex64> {
    if sps == 1 {
        return samples.to_vec();
    }
    samples
        .chunks_exact(sps)
        .map(|c| c.iter().sum::<Complex64>() / sps as f64)
        .collect()
}

fn detect(
    trained: &Trained,
    samples: &[Complex64],
    tx_power: f64,
    sps: usize,
) -> Result<(Vec<u8>, bool)> {
    match trained {
        Trained::Ed(Some(t)) => Ok((ed_detect(samples, t, sps)?, false)),
        Trained::Ed(None) => Ok((vec![0; samples.len() / sps.max(1)], true)),
        Trained::Lse(est) => {
            let d = lse_detect(&average_symbols(samples, sps), est, tx_power);
            Ok((d.bits, d.degenerate))
        }
    }
}

/// Simulates `plan` over the scenario's channels and detects it.
pub fn run_link<R: Rng + ?Sized>(
    sc: &Scenario,
    tag: &TagModel,
    plan: &SymbolPlan,
    kind: DetectorKind,
    rng: &mut R,
    truth_bits: &[u8],
    opts: &LinkOptions,
) -> Result<DetectionResult> {
    let channels = LinkChannels::from_scenario(sc, tag)?;
    run_link_on(
        &channels,
        sc.tx_power,
        sc.noise_power,
        plan,
        kind,
        rng,
        truth_bits,
        opts,
    )
}

/// [`run_link`] over precomputed channels.
///
/// Each block is trained on its own pilot prefix, then detected. The block
/// with the best training metric is reported.
#[allow(clippy::too_many_arguments)]
pub fn run_link_on<R: Rng + ?Sized>(
    channels: &LinkChannels,
    tx_power: f64,
    noise_power: f64,
    plan: &SymbolPlan,
    kind: DetectorKind,
    rng: &mut R,
    truth_bits: &[u8],
    opts: &LinkOptions,
) -> Result<DetectionResult> {
    if plan.blocks.is_empty() {
        return Err(Error::Detector("empty symbol plan".into()));
    }
    if truth_bits.len() != plan.bits.len() {
        return Err(Error::Detector(format!(
            "truth has {} bits, plan carries {}",
            truth_bits.len(),
            plan.bits.len()
        )));
    }
    if let Some(bad) = plan
        .symbols
        .iter()
        .find(|s| s.state.pattern >= channels.tag.len())
    {
        return Err(Error::Detector(format!(
            "plan references pattern {} of a {}-pattern tag",
            bad.state.pattern,
            channels.tag.len()
        )));
    }
    let sps = opts.samples_per_symbol;
    if sps == 0 {
        return Err(Error::Detector("zero samples per symbol".into()));
    }
    let mut best: Option<(usize, f64, Vec<u8>, bool)> = None;
    let mut metrics = Vec::with_capacity(plan.blocks.len());
    let mut samples = Vec::new();
    for (b, block) in plan.blocks.iter().enumerate() {
        let g0 = channels.aggregate(block.zero);
        let g1 = channels.aggregate(block.one);
        let (trained, metric) = train(g0, g1, kind, tx_power, noise_power, opts, rng)?;
        samples.clear();
        for s in &plan.symbols[block.start..block.start + block.len] {
            draw(
                channels.aggregate(s.state),
                sps,
                tx_power,
                noise_power,
                rng,
                &mut samples,
            );
        }
        let (bits, degenerate) = detect(&trained, &samples, tx_power, sps)?;
        metrics.push(metric);
        if best.as_ref().is_none_or(|(_, m, _, _)| metric > *m) {
            best = Some((b, metric, bits, degenerate));
        }
    }
    let (selected_block, _, bits, degenerate) = best.expect("at least one block");
    let ber = bit_error_rate(truth_bits, &bits)?;
    Ok(DetectionResult {
        bits,
        ber,
        per_pattern_metric: metrics,
        selected_pattern: plan.blocks[selected_block].one.pattern,
        selected_block,
        degenerate,
    })
}

/// Trains on pilots, then counts errors over `n_bits` uniformly random bits
/// sent with states `one` and `zero`. Returns the training metric and the BER.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_ber<R: Rng + ?Sized>(
    g0: Complex64,
    g1: Complex64,
    kind: DetectorKind,
    tx_power: f64,
    noise_power: f64,
    n_bits: usize,
    opts: &LinkOptions,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_bits == 0 {
        return Err(Error::Detector("zero bits requested".into()));
    }
    let sps = opts.samples_per_symbol.max(1);
    let (trained, metric) = train(g0, g1, kind, tx_power, noise_power, opts, rng)?;
    let mut truth = Vec::with_capacity(n_bits);
    let mut samples = Vec::with_capacity(n_bits * sps);
    for _ in 0..n_bits {
        let bit: u8 = rng.random_range(0..=1);
        truth.push(bit);
        draw(
            if bit == 1 { g1 } else { g0 },
            sps,
            tx_power,
            noise_power,
            rng,
            &mut samples,
        );
    }
    let (bits, _) = detect(&trained, &samples, tx_power, sps)?;
    Ok((metric, bit_error_rate(&truth, &bits)?))
}
