//! First-order polarized ray model for the source, tag, reader and scatterers.
//!
//! Every segment between two dipoles carries a free-space amplitude
//! `λ / (4πd)`, a propagation phase `exp(-j 2πd / λ)` and the projection of
//! one dipole axis on the other. Scatterers re-radiate along their own axis
//! (single bounce only). The optional ground plane is a perfect conductor at
//! `z = 0` handled with image theory: the image keeps the vertical axis
//! component and flips the horizontal ones.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::{Orientation, Vec3};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Distances below this are treated as coincident.
const MIN_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Orientation,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Orientation) -> Self {
        Self {
            position,
            orientation,
        }
    }

    fn element(&self) -> Element {
        Element {
            position: self.position,
            axis: self.orientation.unit_vector(),
        }
    }
}

/// A conductive line re-radiating what it captures along its axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub pose: Pose,
    /// Wire length in meters.
    pub length: f64,
    /// Complex scattering amplitude applied at the bounce.
    pub gain: Complex64,
}

/// Radiation pattern of every dipole element.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementPattern {
    /// Pure axis projection, no directional factor.
    #[default]
    Projection,
    /// Adds the half-wave dipole factor `cos(π/2 · cos ψ) / sin ψ` at both ends.
    HalfWaveDipole,
}

impl ElementPattern {
    fn factor(self, axis: Vec3, direction: Vec3) -> f64 {
        match self {
            ElementPattern::Projection => 1.0,
            ElementPattern::HalfWaveDipole => {
                let c = axis.dot(direction).clamp(-1.0, 1.0);
                let s = (1.0 - c * c).sqrt();
                if s < 1e-12 {
                    0.0
                } else {
                    (0.5 * PI * c).cos() / s
                }
            }
        }
    }
}

/// Complete description of one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub source: Pose,
    pub reader: Pose,
    pub tag: Pose,
    pub scatterers: Vec<Scatterer>,
    pub ground_plane: bool,
    /// Carrier frequency in Hz.
    pub frequency: f64,
    /// Source transmit power in watts.
    pub tx_power: f64,
    /// Receiver noise power in watts.
    pub noise_power: f64,
    pub backscatter_gain: Complex64,
    /// Adds source→scatterer→tag and tag→scatterer→reader paths.
    pub tag_scatterer_bounces: bool,
    pub element_pattern: ElementPattern,
    pub rng_seed: u64,
}

impl Scenario {
    /// LOS scenario with the reference geometry: vertical source at
    /// `(0, 0, 0.3)`, reader at `(100, 0, 0.3)` along `y`, 2.4 GHz carrier,
    /// unit noise power.
    pub fn reference(snr_tx_db: f64) -> Self {
        let z = 0.3;
        Scenario {
            source: Pose::new(Vec3::new(0.0, 0.0, z), Orientation::VERTICAL),
            reader: Pose::new(
                Vec3::new(100.0, 0.0, z),
                Orientation::from_degrees(90.0, 90.0).expect("valid"),
            ),
            tag: Pose::new(
                Vec3::new(99.8, 0.1, z),
                Orientation::from_degrees(45.0, 90.0).expect("valid"),
            ),
            scatterers: Vec::new(),
            ground_plane: false,
            frequency: 2.4e9,
            tx_power: db_to_linear(snr_tx_db),
            noise_power: 1.0,
            backscatter_gain: Complex64::new(1.0, 0.0),
            tag_scatterer_bounces: false,
            element_pattern: ElementPattern::Projection,
            rng_seed: 0,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency
    }

    /// `P_tx / P_noise`, linear.
    pub fn snr_tx(&self) -> f64 {
        self.tx_power / self.noise_power
    }

    /// Sets the transmit power so that `P_tx / P_noise` equals `snr_db`.
    pub fn set_snr_tx_db(&mut self, snr_db: f64) {
        self.tx_power = self.noise_power * db_to_linear(snr_db);
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "frequency must be positive, got {}",
                self.frequency
            )));
        }
        if !(self.tx_power > 0.0 && self.tx_power.is_finite()) {
            return Err(Error::InvalidScenario("tx_power must be positive".into()));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::InvalidScenario(
                "noise_power must be positive".into(),
            ));
        }
        for (name, p) in [
            ("source", self.source.position),
            ("reader", self.reader.position),
            ("tag", self.tag.position),
        ] {
            if !p.is_finite() {
                return Err(Error::InvalidScenario(format!(
                    "{name} position not finite"
                )));
            }
            if self.ground_plane && p.z <= 0.0 {
                return Err(Error::InvalidScenario(format!(
                    "{name} must lie above the ground plane (z = {})",
                    p.z
                )));
            }
        }
        ensure_apart(
            "source",
            self.source.position,
            "reader",
            self.reader.position,
        )?;
        ensure_apart("source", self.source.position, "tag", self.tag.position)?;
        ensure_apart("tag", self.tag.position, "reader", self.reader.position)?;
        for (i, sc) in self.scatterers.iter().enumerate() {
            if !(sc.length > 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "scatterer {i} has non-positive length"
                )));
            }
            if !sc.pose.position.is_finite() || !sc.gain.is_finite() {
                return Err(Error::InvalidScenario(format!("scatterer {i} not finite")));
            }
            let label = format!("scatterer {i}");
            ensure_apart(&label, sc.pose.position, "source", self.source.position)?;
            ensure_apart(&label, sc.pose.position, "reader", self.reader.position)?;
            if self.tag_scatterer_bounces {
                ensure_apart(&label, sc.pose.position, "tag", self.tag.position)?;
            }
        }
        Ok(())
    }

    /// One noisy reader sample for aggregate channel `g`.
    pub fn received_sample<R: Rng + ?Sized>(
        &self,
        g: ChannelCoefficient,
        rng: &mut R,
    ) -> Complex64 {
        received_sample(g, self.tx_power, self.noise_power, rng)
    }
}

fn ensure_apart(a: &str, pa: Vec3, b: &str, pb: Vec3) -> Result<()> {
    if pa.distance(pb) < MIN_SEPARATION {
        Err(Error::CoincidentPositions(format!(
            "{a} and {b} at {:?}",
            pa
        )))
    } else {
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// One complex channel coefficient (dimensionless amplitude ratio).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelCoefficient(pub Complex64);

impl ChannelCoefficient {
    pub const ZERO: ChannelCoefficient = ChannelCoefficient(Complex64::new(0.0, 0.0));

    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn norm(self) -> f64 {
        self.0.norm()
    }
}

impl From<Complex64> for ChannelCoefficient {
    fn from(c: Complex64) -> Self {
        ChannelCoefficient(c)
    }
}

#[derive(Debug, Clone, Copy)]
struct Element {
    position: Vec3,
    axis: Vec3,
}

impl Element {
    fn image(&self) -> Element {
        Element {
            position: self.position.mirror_z(),
            axis: Vec3::new(-self.axis.x, -self.axis.y, self.axis.z),
        }
    }
}

fn propagation(distance: f64, wavelength: f64) -> Complex64 {
    let amplitude = wavelength / (4.0 * PI * distance);
    Complex64::from_polar(amplitude, -2.0 * PI * distance / wavelength)
}

/// Separation and unit direction from `a` to `b`.
fn link(a: Vec3, b: Vec3, what: &str) -> Result<(f64, Vec3)> {
    let delta = b - a;
    let d = delta.norm();
    if d < MIN_SEPARATION {
        return Err(Error::CoincidentPositions(what.to_string()));
    }
    Ok((d, delta * (1.0 / d)))
}

fn segment(
    a: &Element,
    b: &Element,
    wavelength: f64,
    pattern: ElementPattern,
) -> Result<Complex64> {
    let (d, dir) = link(a.position, b.position, "segment endpoints")?;
    let projection = a.axis.dot(b.axis);
    let factor = pattern.factor(a.axis, dir) * pattern.factor(b.axis, dir);
    Ok(propagation(d, wavelength) * (projection * factor))
}

/// Free-space segment between two dipoles using the projection-only element.
pub fn los_segment(a: &Pose, b: &Pose, wavelength: f64) -> Result<ChannelCoefficient> {
    los_segment_with(a, b, wavelength, ElementPattern::Projection)
}

pub fn los_segment_with(
    a: &Pose,
    b: &Pose,
    wavelength: f64,
    pattern: ElementPattern,
) -> Result<ChannelCoefficient> {
    segment(&a.element(), &b.element(), wavelength, pattern).map(ChannelCoefficient)
}

fn scatterer_element(sc: &Scatterer) -> Element {
    sc.pose.element()
}

/// Source-to-reader channel: LOS, ground image and single-bounce scatterer paths.
pub fn direct_channel(sc: &Scenario) -> Result<ChannelCoefficient> {
    sc.validate()?;
    let lambda = sc.wavelength();
    let pattern = sc.element_pattern;
    let source = sc.source.element();
    let reader = sc.reader.element();
    let mut h = segment(&source, &reader, lambda, pattern)?;
    if sc.ground_plane {
        h += segment(&source.image(), &reader, lambda, pattern)?;
    }
    for s in &sc.scatterers {
        h += scatterer_path(&source, s, &reader, lambda, pattern)?;
    }
    Ok(ChannelCoefficient(h))
}

fn scatterer_path(
    from: &Element,
    s: &Scatterer,
    to: &Element,
    lambda: f64,
    pattern: ElementPattern,
) -> Result<Complex64> {
    let e = scatterer_element(s);
    Ok(segment(from, &e, lambda, pattern)? * s.gain * segment(&e, to, lambda, pattern)?)
}

/// One wave reaching the tag position, before projection on the tag axis.
#[derive(Debug, Clone, Copy)]
struct Arrival {
    amplitude: Complex64,
    /// Axis of the element the wave last left.
    polarization: Vec3,
    /// Unit vector from the tag toward that element.
    direction: Vec3,
}

/// Everything the tag sees at one position, independent of its axis.
///
/// `incident` collects the waves from the source, `outgoing` the reciprocal
/// paths to the reader. Evaluating many tag axes at the same position only
/// costs two short sums per axis.
#[derive(Debug, Clone)]
pub struct TagIllumination {
    incident: Vec<Arrival>,
    outgoing: Vec<Arrival>,
    backscatter_gain: Complex64,
    pattern: ElementPattern,
}

impl TagIllumination {
    /// Illumination at `position`; scenario-level validation is the caller's job.
    pub fn at(sc: &Scenario, position: Vec3) -> Result<Self> {
        let lambda = sc.wavelength();
        let pattern = sc.element_pattern;
        if sc.ground_plane && position.z <= 0.0 {
            return Err(Error::InvalidScenario(format!(
                "tag must lie above the ground plane (z = {})",
                position.z
            )));
        }
        let source = sc.source.element();
        let reader = sc.reader.element();
        let mut incident = vec![arrival(
            &source,
            position,
            lambda,
            pattern,
            "source and tag",
        )?];
        let mut outgoing = vec![arrival(
            &reader,
            position,
            lambda,
            pattern,
            "tag and reader",
        )?];
        if sc.ground_plane {
            incident.push(arrival(
                &source.image(),
                position,
                lambda,
                pattern,
                "source image and tag",
            )?);
            outgoing.push(arrival(
                &reader.image(),
                position,
                lambda,
                pattern,
                "reader image and tag",
            )?);
        }
        if sc.tag_scatterer_bounces {
            for s in &sc.scatterers {
                let e = scatterer_element(s);
                let inc = segment(&source, &e, lambda, pattern)? * s.gain;
                let out = segment(&reader, &e, lambda, pattern)? * s.gain;
                let a = arrival(&e, position, lambda, pattern, "scatterer and tag")?;
                incident.push(Arrival {
                    amplitude: a.amplitude * inc,
                    ..a
                });
                outgoing.push(Arrival {
                    amplitude: a.amplitude * out,
                    ..a
                });
            }
        }
        Ok(Self {
            incident,
            outgoing,
            backscatter_gain: sc.backscatter_gain,
            pattern,
        })
    }

    /// Backscatter channel `h_TR` for a tag dipole along `axis`.
    pub fn channel(&self, axis: Orientation) -> ChannelCoefficient {
        let t = axis.unit_vector();
        let captured = couple(&self.incident, t, self.pattern);
        let radiated = couple(&self.outgoing, t, self.pattern);
        ChannelCoefficient(self.backscatter_gain * captured * radiated)
    }
}

fn arrival(
    far: &Element,
    tag_position: Vec3,
    lambda: f64,
    pattern: ElementPattern,
    what: &str,
) -> Result<Arrival> {
    let (d, dir) = link(tag_position, far.position, what)?;
    Ok(Arrival {
        amplitude: propagation(d, lambda) * pattern.factor(far.axis, dir),
        polarization: far.axis,
        direction: dir,
    })
}

fn couple(arrivals: &[Arrival], t: Vec3, pattern: ElementPattern) -> Complex64 {
    arrivals
        .iter()
        .map(|a| a.amplitude * (a.polarization.dot(t) * pattern.factor(t, a.direction)))
        .sum()
}

/// Backscatter channel for the tag at `sc.tag.position` with dipole `tag_axis`.
pub fn tag_channel(sc: &Scenario, tag_axis: Orientation) -> Result<ChannelCoefficient> {
    sc.validate()?;
    Ok(TagIllumination::at(sc, sc.tag.position)?.channel(tag_axis))
}

/// Aggregate channel `g = h_SR + γ · h_TR`.
pub fn aggregate_channel(
    h_sr: ChannelCoefficient,
    h_tr: ChannelCoefficient,
    gamma: Complex64,
) -> ChannelCoefficient {
    ChannelCoefficient(h_sr.0 + gamma * h_tr.0)
}

/// Circularly-symmetric complex Gaussian sample with `E|v|² = noise_power`.
pub fn complex_noise<R: Rng + ?Sized>(noise_power: f64, rng: &mut R) -> Complex64 {
    let s = (noise_power / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// `y = g √P_tx + v`.
pub fn received_sample<R: Rng + ?Sized>(
    g: ChannelCoefficient,
    tx_power: f64,
    noise_power: f64,
    rng: &mut R,
) -> Complex64 {
    let clean = g.0 * tx_power.sqrt();
    if noise_power > 0.0 {
        clean + complex_noise(noise_power, rng)
    } else {
        clean
    }
}

/// Geometric rules for randomly placed scatterers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementConstraints {
    /// Minimum distance from any antenna (exclusive).
    pub min_dist_to_antennas: f64,
    /// Maximum distance from the reader (exclusive).
    pub max_dist_to_reader: f64,
    /// Minimum distance between two scatterers.
    pub min_pairwise: f64,
    /// Keep scatterers strictly above `z = 0`.
    pub above_ground: bool,
}

impl PlacementConstraints {
    /// `λ` from antennas, within `10λ` of the reader, `λ/2` apart.
    pub fn for_wavelength(lambda: f64) -> Self {
        Self {
            min_dist_to_antennas: lambda,
            max_dist_to_reader: 10.0 * lambda,
            min_pairwise: lambda / 2.0,
            above_ground: false,
        }
    }
}

const ATTEMPTS_PER_SCATTERER: usize = 10_000;

/// Rejection-samples `n` scatterers uniformly in the shell around the reader
/// with uniformly random axes.
///
/// `antennas` lists every dipole the scatterers must keep clear of; the
/// reader is always included.
pub fn sample_scatterers<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    constraints: &PlacementConstraints,
    reader: Vec3,
    antennas: &[Vec3],
    length: f64,
    gain: Complex64,
) -> Result<Vec<Scatterer>> {
    let r_min = constraints.min_dist_to_antennas;
    let r_max = constraints.max_dist_to_reader;
    if !(r_max > r_min && r_min >= 0.0) || !(length > 0.0) {
        return Err(Error::InvalidScenario(format!(
            "unsatisfiable placement: shell ({r_min}, {r_max}), length {length}"
        )));
    }
    let cap = ATTEMPTS_PER_SCATTERER * n.max(1);
    let mut placed: Vec<Scatterer> = Vec::with_capacity(n);
    let mut attempts = 0;
    while placed.len() < n {
        if attempts >= cap {
            return Err(Error::PlacementFailed {
                attempts,
                placed: placed.len(),
                requested: n,
            });
        }
        attempts += 1;
        // uniform in volume over the shell
        let u: f64 = rng.random();
        let radius = (r_min.powi(3) + u * (r_max.powi(3) - r_min.powi(3))).cbrt();
        let dir = random_direction(rng);
        let position = reader + dir * radius;
        let axis = random_orientation(rng);
        let candidate = Scatterer {
            pose: Pose::new(position, axis),
            length,
            gain,
        };
        if placement_ok(&candidate, &placed, constraints, reader, antennas) {
            placed.push(candidate);
        }
    }
    Ok(placed)
}

fn placement_ok(
    c: &Scatterer,
    placed: &[Scatterer],
    k: &PlacementConstraints,
    reader: Vec3,
    antennas: &[Vec3],
) -> bool {
    let p = c.pose.position;
    if k.above_ground && p.z <= 0.0 {
        return false;
    }
    if p.distance(reader) >= k.max_dist_to_reader {
        return false;
    }
    if std::iter::once(&reader)
        .chain(antennas)
        .any(|a| p.distance(*a) <= k.min_dist_to_antennas)
    {
        return false;
    }
    placed
        .iter()
        .all(|q| p.distance(q.pose.position) >= k.min_pairwise)
}

/// Lists every violated placement rule; empty when all hold.
pub fn placement_violations(
    scatterers: &[Scatterer],
    k: &PlacementConstraints,
    reader: Vec3,
    antennas: &[Vec3],
) -> Vec<String> {
    let mut out = Vec::new();
    for (i, s) in scatterers.iter().enumerate() {
        let p = s.pose.position;
        if k.above_ground && p.z <= 0.0 {
            out.push(format!("scatterer {i} below ground (z = {:.4})", p.z));
        }
        let dr = p.distance(reader);
        if dr >= k.max_dist_to_reader {
            out.push(format!("scatterer {i} too far from reader ({dr:.4} m)"));
        }
        for a in std::iter::once(&reader).chain(antennas) {
            let d = p.distance(*a);
            if d <= k.min_dist_to_antennas {
                out.push(format!(
                    "scatterer {i} within {d:.4} m of antenna at {:?}",
                    a.to_array()
                ));
            }
        }
        for (j, q) in scatterers.iter().enumerate().skip(i + 1) {
            let d = p.distance(q.pose.position);
            if d < k.min_pairwise {
                out.push(format!("scatterers {i} and {j} only {d:.4} m apart"));
            }
        }
    }
    out
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(s * a.cos(), s * a.sin(), z)
}

fn random_orientation<R: Rng + ?Sized>(rng: &mut R) -> Orientation {
    let c: f64 = rng.random_range(-1.0..=1.0);
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    Orientation::new(c.acos(), a).expect("acos lies in [0, π]")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LAMBDA: f64 = 0.125;

    fn pose(x: f64, y: f64, z: f64, polar: f64, az: f64) -> Pose {
        Pose::new(
            Vec3::new(x, y, z),
            Orientation::from_degrees(polar, az).unwrap(),
        )
    }

    #[test]
    fn los_segment_one_wavelength() {
        let a = pose(0.0, 0.0, 0.0, 0.0, 0.0);
        let b = pose(LAMBDA, 0.0, 0.0, 0.0, 0.0);
        let h = los_segment(&a, &b, LAMBDA).unwrap().0;
        assert_abs_diff_eq!(h.norm(), 1.0 / (4.0 * PI), epsilon = 1e-12);
        // phase -2π wraps to 0
        assert_abs_diff_eq!(h.im, 0.0, epsilon = 1e-12);
        assert!(h.re > 0.0);
    }

    #[test]
    fn los_segment_orthogonal_and_doubled() {
        let a = pose(0.0, 0.0, 0.0, 0.0, 0.0);
        let b = pose(1.0, 0.0, 0.0, 90.0, 90.0);
        assert_abs_diff_eq!(los_segment(&a, &b, LAMBDA).unwrap().norm(), 0.0);

        let d = 0.37;
        let near = los_segment(&a, &pose(d, 0.0, 0.0, 0.0, 0.0), LAMBDA)
            .unwrap()
            .0;
        let far = los_segment(&a, &pose(2.0 * d, 0.0, 0.0, 0.0, 0.0), LAMBDA)
            .unwrap()
            .0;
        assert_abs_diff_eq!(far.norm(), near.norm() / 2.0, epsilon = 1e-15);
        let expected = near * Complex64::from_polar(0.5, -2.0 * PI * d / LAMBDA);
        assert_abs_diff_eq!((far - expected).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn coincident_segment_rejected() {
        let a = pose(1.0, 2.0, 3.0, 0.0, 0.0);
        assert!(matches!(
            los_segment(&a, &a, LAMBDA),
            Err(Error::CoincidentPositions(_))
        ));
    }

    fn los_scenario() -> Scenario {
        let mut sc = Scenario::reference(116.0);
        sc.frequency = SPEED_OF_LIGHT / LAMBDA;
        sc
    }

    #[test]
    fn direct_channel_reduces_to_los() {
        let mut sc = los_scenario();
        sc.reader.orientation = Orientation::VERTICAL;
        let h = direct_channel(&sc).unwrap();
        let los = los_segment(&sc.source, &sc.reader, sc.wavelength()).unwrap();
        assert_eq!(h, los);
    }

    #[test]
    fn cross_polarized_direct_is_zero_without_multipath() {
        let sc = los_scenario();
        assert_abs_diff_eq!(direct_channel(&sc).unwrap().norm(), 0.0);
        // a vertical image keeps the cross-polarization
        let mut g = sc.clone();
        g.ground_plane = true;
        assert_abs_diff_eq!(direct_channel(&g).unwrap().norm(), 0.0, epsilon = 1e-20);
    }

    #[test]
    fn single_scatterer_path_composes_two_segments() {
        let mut sc = los_scenario();
        let s = Scatterer {
            pose: pose(50.0, 3.0, 0.3, 60.0, 40.0),
            length: LAMBDA / 2.0,
            gain: Complex64::from_polar(0.7, 0.4),
        };
        sc.scatterers.push(s);
        // independent composition from the raw formula
        let lambda = sc.wavelength();
        let seg = |a: &Pose, b: &Pose| {
            let d = a.position.distance(b.position);
            let proj = a.orientation.unit_vector().dot(b.orientation.unit_vector());
            Complex64::from_polar(lambda / (4.0 * PI * d), -2.0 * PI * d / lambda) * proj
        };
        let expected = seg(&sc.source, &sc.reader)
            + seg(&sc.source, &s.pose) * s.gain * seg(&s.pose, &sc.reader);
        let h = direct_channel(&sc).unwrap().0;
        assert_abs_diff_eq!((h - expected).norm(), 0.0, epsilon = 1e-18);
    }

    #[test]
    fn ground_image_term() {
        let mut sc = los_scenario();
        sc.reader.orientation = Orientation::from_degrees(30.0, 10.0).unwrap();
        sc.source.orientation = Orientation::from_degrees(70.0, 200.0).unwrap();
        sc.ground_plane = true;
        let lambda = sc.wavelength();
        let s = sc.source.orientation.unit_vector();
        let image = Pose::new(sc.source.position.mirror_z(), sc.source.orientation);
        let d = image.position.distance(sc.reader.position);
        let img_axis = Vec3::new(-s.x, -s.y, s.z);
        let expected_img = Complex64::from_polar(lambda / (4.0 * PI * d), -2.0 * PI * d / lambda)
            * img_axis.dot(sc.reader.orientation.unit_vector());
        let los = los_segment(&sc.source, &sc.reader, lambda).unwrap().0;
        let h = direct_channel(&sc).unwrap().0;
        assert_abs_diff_eq!((h - los - expected_img).norm(), 0.0, epsilon = 1e-18);
    }

    #[test]
    fn tag_channel_bisector_and_null() {
        let sc = los_scenario();
        let lambda = sc.wavelength();
        let axis = Orientation::from_degrees(45.0, 90.0).unwrap();
        let h = tag_channel(&sc, axis).unwrap();
        let d_st = sc.source.position.distance(sc.tag.position);
        let d_tr = sc.tag.position.distance(sc.reader.position);
        let expected = 0.5 * lambda / (4.0 * PI * d_st) * lambda / (4.0 * PI * d_tr);
        assert_abs_diff_eq!(h.norm(), expected, epsilon = expected * 1e-12);

        // x axis is orthogonal to the vertical source
        let null = tag_channel(&sc, Orientation::from_degrees(90.0, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(null.norm(), 0.0);
    }

    #[test]
    fn tag_channel_projection_bound() {
        let mut sc = los_scenario();
        sc.tag.position = Vec3::new(50.0, 0.5, 0.3);
        let lambda = sc.wavelength();
        let d_st = sc.source.position.distance(sc.tag.position);
        let d_tr = sc.tag.position.distance(sc.reader.position);
        let free = lambda / (4.0 * PI * d_st) * lambda / (4.0 * PI * d_tr);
        for p in (0..=180).step_by(15) {
            for a in (0..360).step_by(15) {
                let o = Orientation::from_degrees(p as f64, a as f64).unwrap();
                let tag = Pose::new(sc.tag.position, o);
                let h = tag_channel(&sc, o).unwrap().0;
                let chain = los_segment(&sc.source, &tag, lambda).unwrap().0
                    * los_segment(&tag, &sc.reader, lambda).unwrap().0;
                assert_abs_diff_eq!((h - chain).norm(), 0.0, epsilon = free * 1e-12);
                assert!(h.norm() <= free * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn aggregate_examples() {
        let h_sr = ChannelCoefficient(Complex64::new(0.3, -0.1));
        let h_tr = ChannelCoefficient(Complex64::new(-0.05, 0.2));
        assert_eq!(
            aggregate_channel(h_sr, h_tr, Complex64::new(0.0, 0.0)),
            h_sr
        );
        assert_eq!(
            aggregate_channel(h_sr, h_tr, Complex64::new(1.0, 0.0)).0,
            h_sr.0 + h_tr.0
        );
        assert_eq!(
            aggregate_channel(h_sr, ChannelCoefficient::ZERO, Complex64::new(0.4, 3.0)),
            h_sr
        );
    }

    #[test]
    fn sample_scatterers_respects_constraints() {
        let lambda = 0.125;
        let k = PlacementConstraints::for_wavelength(lambda);
        let reader = Vec3::new(100.0, 0.0, 0.3);
        let antennas = [Vec3::new(0.0, 0.0, 0.3)];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = sample_scatterers(
            &mut rng,
            20,
            &k,
            reader,
            &antennas,
            lambda / 2.0,
            Complex64::new(1.0, 0.0),
        )
        .unwrap();
        assert_eq!(s.len(), 20);
        assert!(placement_violations(&s, &k, reader, &antennas).is_empty());

        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let again = sample_scatterers(
            &mut rng2,
            20,
            &k,
            reader,
            &antennas,
            lambda / 2.0,
            Complex64::new(1.0, 0.0),
        )
        .unwrap();
        assert_eq!(s, again);

        let none = sample_scatterers(
            &mut rng,
            0,
            &k,
            reader,
            &antennas,
            lambda / 2.0,
            Complex64::new(1.0, 0.0),
        )
        .unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn sample_scatterers_reports_cap() {
        // a shell this thin cannot hold 500 scatterers λ/2 apart
        let k = PlacementConstraints {
            min_dist_to_antennas: 0.1,
            max_dist_to_reader: 0.11,
            min_pairwise: 0.1,
            above_ground: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_scatterers(
            &mut rng,
            500,
            &k,
            Vec3::ZERO,
            &[],
            0.06,
            Complex64::new(1.0, 0.0),
        );
        assert!(matches!(err, Err(Error::PlacementFailed { .. })));
    }

    #[test]
    fn noise_moments_and_noiseless_limit() {
        let g = ChannelCoefficient(Complex64::new(0.2, -0.7));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(received_sample(g, 4.0, 0.0, &mut rng), g.0 * 2.0);

        let pn = 2.5;
        let n = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mean_power: f64 = (0..n)
            .map(|_| received_sample(ChannelCoefficient::ZERO, 1.0, pn, &mut rng).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean_power / pn - 1.0).abs() < 0.01, "{mean_power}");
    }

    #[test]
    fn validate_rejects_bad_scenarios() {
        let mut sc = los_scenario();
        sc.tag.position = sc.reader.position;
        assert!(matches!(sc.validate(), Err(Error::CoincidentPositions(_))));
        let mut sc = los_scenario();
        sc.frequency = 0.0;
        assert!(sc.validate().is_err());
        let mut sc = los_scenario();
        sc.ground_plane = true;
        sc.source.position.z = -1.0;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn half_wave_factor_limits() {
        let p = ElementPattern::HalfWaveDipole;
        assert_abs_diff_eq!(p.factor(Vec3::Z, Vec3::X), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.factor(Vec3::Z, Vec3::Z), 0.0);
        assert!(p.factor(Vec3::Z, Vec3::new(1.0, 0.0, 1.0).normalized()) < 1.0);
    }

    fn point() -> impl Strategy<Value = Vec3> {
        (-3.0..3.0f64, -3.0..3.0f64, 0.05..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn orient() -> impl Strategy<Value = Orientation> {
        (0.0..=PI, 0.0..std::f64::consts::TAU).prop_map(|(p, a)| Orientation::new(p, a).unwrap())
    }

    proptest! {
        #[test]
        fn segments_are_reciprocal(pa in point(), pb in point(), oa in orient(), ob in orient()) {
            prop_assume!(pa.distance(pb) > 1e-3);
            let a = Pose::new(pa, oa);
            let b = Pose::new(pb, ob);
            for pattern in [ElementPattern::Projection, ElementPattern::HalfWaveDipole] {
                let ab = los_segment_with(&a, &b, LAMBDA, pattern).unwrap().0;
                let ba = los_segment_with(&b, &a, LAMBDA, pattern).unwrap().0;
                prop_assert!((ab - ba).norm() <= 1e-12 * ab.norm().max(1e-300));
            }
        }

        #[test]
        fn direct_channel_is_additive_over_scatterers(seed in 0u64..1000) {
            let mut sc = los_scenario();
            sc.reader.orientation = Orientation::from_degrees(80.0, 70.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = PlacementConstraints::for_wavelength(sc.wavelength());
            let all = sample_scatterers(&mut rng, 6, &k, sc.reader.position, &[sc.source.position], 0.06, Complex64::new(1.0, 0.0)).unwrap();
            let base = direct_channel(&sc).unwrap().0;
            let with = |subset: &[Scatterer]| {
                let mut s = sc.clone();
                s.scatterers = subset.to_vec();
                direct_channel(&s).unwrap().0 - base
            };
            let total = with(&all);
            let split = with(&all[..2]) + with(&all[2..]);
            prop_assert!((total - split).norm() <= 1e-12 * total.norm().max(1e-300));
        }
    }
}
