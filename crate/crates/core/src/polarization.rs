//! Dipole orientation algebra and the projection-based polarization model.
//!
//! An [`Orientation`] is the axis of a linear dipole, given by its polar
//! tilt from the vertical `+z` axis and its azimuth from `+x`. A vertical
//! dipole is `polar = 0`. Config files and CSV outputs carry degrees in
//! `(polar, azimuth)` order; everything inside the crate is radians.
//!
//! The direct signal is modeled as the projection of the source axis on the
//! reader axis, and the backscattered signal as the projection of the
//! source axis on the tag axis, re-projected on the reader axis.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Unit vector along `self`; the zero vector is returned unchanged.
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Mirror image through the plane `z = 0`.
    pub fn mirror_z(self) -> Vec3 {
        Vec3::new(self.x, self.y, -self.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Axis of a linear dipole.
///
/// `polar` is the tilt from `+z` in `[0, π]`, `azimuth` is measured from `+x`
/// in `[0, 2π)`. Azimuths outside that range are wrapped on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    polar: f64,
    azimuth: f64,
}

impl Orientation {
    pub const VERTICAL: Orientation = Orientation {
        polar: 0.0,
        azimuth: 0.0,
    };

    pub fn new(polar: f64, azimuth: f64) -> Result<Self> {
        if !polar.is_finite() || !azimuth.is_finite() {
            return Err(Error::InvalidOrientation(format!(
                "non-finite angles ({polar}, {azimuth})"
            )));
        }
        // Allow a few ulps of slack so that degree round trips of 180° stay valid.
        if !(-1e-12..=PI + 1e-12).contains(&polar) {
            return Err(Error::InvalidOrientation(format!(
                "polar angle {:.6}° outside [0°, 180°]",
                polar.to_degrees()
            )));
        }
        Ok(Self {
            polar: polar.clamp(0.0, PI),
            azimuth: wrap_tau(azimuth),
        })
    }

    /// Builds an orientation from `(polar, azimuth)` in degrees.
    pub fn from_degrees(polar_deg: f64, azimuth_deg: f64) -> Result<Self> {
        Self::new(polar_deg.to_radians(), azimuth_deg.to_radians())
    }

    pub fn polar(&self) -> f64 {
        self.polar
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    /// `(polar, azimuth)` in degrees.
    pub fn to_degrees(&self) -> (f64, f64) {
        (self.polar.to_degrees(), self.azimuth.to_degrees())
    }

    pub fn unit_vector(&self) -> Vec3 {
        unit_vector(*self)
    }

    /// The same dipole axis written with the opposite direction vector.
    pub fn antiparallel(&self) -> Orientation {
        Orientation {
            polar: PI - self.polar,
            azimuth: wrap_tau(self.azimuth + PI),
        }
    }

    /// Representative of the axis with `polar <= 90°`; on the horizontal
    /// plane the azimuth is reduced into `[0°, 180°)`.
    pub fn canonical_axis(&self) -> Orientation {
        let mut o = if self.polar > FRAC_PI_2 {
            self.antiparallel()
        } else {
            *self
        };
        if o.polar == FRAC_PI_2 && o.azimuth >= PI {
            o.azimuth -= PI;
        }
        o
    }

    /// Whether the axis is the vertical `z` axis.
    pub fn is_vertical(&self) -> bool {
        self.polar.sin().abs() < 1e-12
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, a) = self.to_degrees();
        write!(f, "(polar={p:.3}°, azimuth={a:.3}°)")
    }
}

fn wrap_tau(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn unit_vector(o: Orientation) -> Vec3 {
    let (sp, cp) = sin_cos_snapped(o.polar);
    let (sa, ca) = sin_cos_snapped(o.azimuth);
    Vec3::new(sp * ca, sp * sa, cp)
}

/// `sin_cos` that returns exact values on multiples of a right angle, so
/// that axis-aligned dipoles are exactly orthogonal.
fn sin_cos_snapped(a: f64) -> (f64, f64) {
    let quarters = a / FRAC_PI_2;
    let k = quarters.round();
    if (quarters - k).abs() < 1e-14 {
        match (k as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        a.sin_cos()
    }
}

/// Direct source-to-reader polarization factor `s · r`.
pub fn direct_projection(s: Vec3, r: Vec3) -> f64 {
    s.dot(r)
}

/// Backscatter polarization factor `((s · t) t) · r = (s · t)(t · r)`.
pub fn backscatter_projection(s: Vec3, t: Vec3, r: Vec3) -> f64 {
    (t * s.dot(t)).dot(r)
}

/// Optimal tag axis for a vertical source and the given reader axis.
///
/// The closed form keeps the reader azimuth and halves its tilt, modulo a
/// quarter turn of tilt. Of the two members of that family the one with the
/// larger backscatter projection is returned (the bisector of the acute angle
/// between the source and the reader axis), in canonical axis form.
pub fn optimal_tag_orientation(reader: Orientation) -> Orientation {
    let r = reader.unit_vector();
    let value = |o: &Orientation| backscatter_projection(Vec3::Z, o.unit_vector(), r).abs();
    let half = Orientation {
        polar: reader.polar / 2.0,
        azimuth: reader.azimuth,
    };
    let quarter_turn = Orientation {
        polar: (reader.polar / 2.0 + FRAC_PI_2).min(PI),
        azimuth: reader.azimuth,
    };
    let best = if value(&quarter_turn) > value(&half) + 1e-15 {
        quarter_turn
    } else {
        half
    };
    best.canonical_axis()
}

/// Angles `start, start + step, …, stop` (degrees in, radians out).
///
/// Points are generated as `start + i · step` so that integer degree grids
/// hit their nominal values exactly.
pub fn degree_grid(start_deg: f64, stop_deg: f64, step_deg: f64) -> Vec<f64> {
    if step_deg <= 0.0 || stop_deg < start_deg {
        return if stop_deg == start_deg {
            vec![start_deg.to_radians()]
        } else {
            Vec::new()
        };
    }
    let n = ((stop_deg - start_deg) / step_deg + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| (start_deg + i as f64 * step_deg).to_radians())
        .collect()
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Grid search over `polar × azimuth`.
///
/// Returns the first point (smallest polar, then smallest azimuth, in grid
/// order) reaching the largest objective value. Values within a relative
/// `1e-12` of each other count as equal, so rounding cannot reorder exact ties.
pub fn exhaustive_best_orientation<F>(
    objective: F,
    polar_grid: &[f64],
    azimuth_grid: &[f64],
) -> Result<(Orientation, f64)>
where
    F: Fn(Orientation) -> f64,
{
    if polar_grid.is_empty() {
        return Err(Error::EmptyGrid("polar grid"));
    }
    if azimuth_grid.is_empty() {
        return Err(Error::EmptyGrid("azimuth grid"));
    }
    let mut best: Option<(Orientation, f64)> = None;
    for &p in polar_grid {
        for &a in azimuth_grid {
            let o = Orientation::new(p, a)?;
            let v = objective(o);
            match best {
                Some((_, bv)) if !(v > bv + TIE_TOLERANCE * bv.abs()) => {}
                _ => best = Some((o, v)),
            }
        }
    }
    Ok(best.expect("non-empty grids"))
}

/// Agreement between the closed-form optimum and the grid-search optimum
/// for every reader orientation on a grid.
#[derive(Debug, Clone)]
pub struct AgreementMap {
    /// Reader polar angles (radians), one per row.
    pub reader_polar: Vec<f64>,
    /// Reader azimuths (radians), one per column.
    pub reader_azimuth: Vec<f64>,
    /// `|T_closed_form · T_search|`, row-major `[polar][azimuth]`.
    pub dot: Vec<Vec<f64>>,
    pub analytic: Vec<Vec<Orientation>>,
    pub searched: Vec<Vec<Orientation>>,
}

impl AgreementMap {
    pub fn min_dot(&self) -> f64 {
        self.dot
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.reader_polar.len() * self.reader_azimuth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Compares [`optimal_tag_orientation`] with an exhaustive search of
/// `|backscatter_projection|` for each reader orientation.
pub fn agreement_map(
    source: Orientation,
    reader_polar: &[f64],
    reader_azimuth: &[f64],
    tag_polar: &[f64],
    tag_azimuth: &[f64],
) -> Result<AgreementMap> {
    if !source.is_vertical() {
        return Err(Error::InvalidOrientation(format!(
            "closed-form optimum needs a vertical source, got {source}"
        )));
    }
    if reader_polar.is_empty() || reader_azimuth.is_empty() {
        return Err(Error::EmptyGrid("reader grid"));
    }
    if tag_polar.is_empty() || tag_azimuth.is_empty() {
        return Err(Error::EmptyGrid("tag grid"));
    }
    let s = source.unit_vector();
    let rows: Vec<Vec<(f64, Orientation, Orientation)>> = reader_polar
        .par_iter()
        .map(|&rp| {
            reader_azimuth
                .iter()
                .map(|&ra| {
                    let reader = Orientation::new(rp, ra)?;
                    let r = reader.unit_vector();
                    let analytic = optimal_tag_orientation(reader);
                    let (searched, _) = exhaustive_best_orientation(
                        |t| backscatter_projection(s, t.unit_vector(), r).abs(),
                        tag_polar,
                        tag_azimuth,
                    )?;
                    let dot = analytic.unit_vector().dot(searched.unit_vector()).abs();
                    Ok((dot, analytic, searched))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AgreementMap {
        reader_polar: reader_polar.to_vec(),
        reader_azimuth: reader_azimuth.to_vec(),
        dot: rows
            .iter()
            .map(|r| r.iter().map(|e| e.0).collect())
            .collect(),
        analytic: rows
            .iter()
            .map(|r| r.iter().map(|e| e.1).collect())
            .collect(),
        searched: rows
            .iter()
            .map(|r| r.iter().map(|e| e.2).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn deg(p: f64, a: f64) -> Orientation {
        Orientation::from_degrees(p, a).unwrap()
    }

    fn assert_vec(v: Vec3, x: f64, y: f64, z: f64) {
        assert_abs_diff_eq!(v.x, x, epsilon = 1e-12);
        assert_abs_diff_eq!(v.y, y, epsilon = 1e-12);
        assert_abs_diff_eq!(v.z, z, epsilon = 1e-12);
    }

    #[test]
    fn unit_vector_axes() {
        assert_vec(deg(0.0, 0.0).unit_vector(), 0.0, 0.0, 1.0);
        assert_vec(deg(90.0, 90.0).unit_vector(), 0.0, 1.0, 0.0);
        let h = 2f64.sqrt() / 2.0;
        assert_vec(deg(90.0, 45.0).unit_vector(), h, h, 0.0);
    }

    #[test]
    fn rejects_polar_out_of_range() {
        assert!(Orientation::from_degrees(181.0, 0.0).is_err());
        assert!(Orientation::from_degrees(-1.0, 0.0).is_err());
        assert!(Orientation::new(f64::NAN, 0.0).is_err());
        // azimuth wraps
        let o = deg(10.0, 370.0);
        assert_abs_diff_eq!(o.azimuth(), 10f64.to_radians(), epsilon = 1e-12);
    }

    #[test]
    fn direct_projection_examples() {
        assert_eq!(direct_projection(Vec3::Z, Vec3::Z), 1.0);
        assert_eq!(direct_projection(Vec3::Z, Vec3::Y), 0.0);
        let r = deg(45.0, 90.0).unit_vector();
        assert_abs_diff_eq!(
            direct_projection(Vec3::Z, r),
            0.5f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn backscatter_projection_examples() {
        let v = deg(33.0, 71.0).unit_vector();
        assert_abs_diff_eq!(backscatter_projection(v, v, v), 1.0, epsilon = 1e-12);
        // tag orthogonal to the source captures nothing
        for r in [Vec3::X, Vec3::Y, Vec3::Z, v] {
            assert_abs_diff_eq!(backscatter_projection(Vec3::Z, Vec3::X, r), 0.0);
        }
        // bisector of a vertical source and a y-oriented reader
        let t = deg(45.0, 90.0).unit_vector();
        assert_abs_diff_eq!(
            backscatter_projection(Vec3::Z, t, Vec3::Y),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn orthogonal_pair_maximum_is_half_on_a_one_degree_scan() {
        // oracle: scan the tag over a 1° grid on the full sphere of axes
        let mut best: f64 = 0.0;
        for p in 0..=180 {
            for a in 0..360 {
                let t = deg(p as f64, a as f64).unit_vector();
                best = best.max(backscatter_projection(Vec3::Z, t, Vec3::Y).abs());
            }
        }
        assert_abs_diff_eq!(best, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn optimal_orientation_examples() {
        let o = optimal_tag_orientation(deg(90.0, 90.0));
        let (p, a) = o.to_degrees();
        assert_abs_diff_eq!(p, 45.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a, 90.0, epsilon = 1e-9);

        let (p, _) = optimal_tag_orientation(deg(0.0, 0.0)).to_degrees();
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-9);

        let o = optimal_tag_orientation(deg(60.0, 90.0));
        let (p, a) = o.to_degrees();
        assert_abs_diff_eq!(p, 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a, 90.0, epsilon = 1e-9);
    }

    #[test]
    fn optimal_orientation_matches_search_for_reader_at_60() {
        let reader = deg(60.0, 90.0);
        let r = reader.unit_vector();
        let (found, value) = exhaustive_best_orientation(
            |t| backscatter_projection(Vec3::Z, t.unit_vector(), r).abs(),
            &degree_grid(0.0, 90.0, 1.0),
            &degree_grid(0.0, 180.0, 1.0),
        )
        .unwrap();
        let (p, a) = found.to_degrees();
        assert_abs_diff_eq!(p, 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a, 90.0, epsilon = 1e-9);
        // cos²(30°)
        assert_abs_diff_eq!(value, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn full_sphere_search_breaks_bisector_ties_in_grid_order() {
        // an orthogonal reader has two optimal bisectors; the first in grid
        // order is the closed-form one
        for az in [0.0, 30.0, 70.0, 90.0] {
            let reader = deg(90.0, az);
            let (found, _) = exhaustive_best_orientation(
                |t| backscatter_projection(Vec3::Z, t.unit_vector(), reader.unit_vector()).abs(),
                &degree_grid(0.0, 180.0, 1.0),
                &degree_grid(0.0, 359.0, 1.0),
            )
            .unwrap();
            let dot = found
                .unit_vector()
                .dot(optimal_tag_orientation(reader).unit_vector());
            assert!(dot.abs() > 0.999, "azimuth {az}: found {found}");
        }
    }

    #[test]
    fn optimal_orientation_uses_acute_bisector_for_steep_readers() {
        // reader tilted 150°: the bisector with -r is 15° from vertical
        let reader = deg(150.0, 20.0);
        let o = optimal_tag_orientation(reader);
        let v = backscatter_projection(Vec3::Z, o.unit_vector(), reader.unit_vector()).abs();
        assert_abs_diff_eq!(v, 15f64.to_radians().cos().powi(2), epsilon = 1e-12);
        assert!(o.polar() <= FRAC_PI_2 + 1e-12);
    }

    #[test]
    fn exhaustive_search_examples() {
        let (o, v) = exhaustive_best_orientation(
            |t| backscatter_projection(Vec3::Z, t.unit_vector(), Vec3::Y).abs(),
            &degree_grid(0.0, 90.0, 1.0),
            &degree_grid(0.0, 180.0, 1.0),
        )
        .unwrap();
        let (p, a) = o.to_degrees();
        assert_abs_diff_eq!(p, 45.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a, 90.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-12);

        // constant objective: first grid point
        let (o, v) = exhaustive_best_orientation(
            |_| 1.0,
            &degree_grid(10.0, 20.0, 5.0),
            &degree_grid(30.0, 40.0, 5.0),
        )
        .unwrap();
        assert_eq!(o, deg(10.0, 30.0));
        assert_eq!(v, 1.0);

        let (o, _) = exhaustive_best_orientation(|_| 0.0, &[0.3], &[1.2]).unwrap();
        assert_eq!(o, Orientation::new(0.3, 1.2).unwrap());

        assert!(exhaustive_best_orientation(|_| 0.0, &[], &[0.0]).is_err());
        assert!(exhaustive_best_orientation(|_| 0.0, &[0.0], &[]).is_err());
    }

    #[test]
    fn agreement_map_cross_and_co_polarized() {
        let tag_p = degree_grid(0.0, 90.0, 1.0);
        let tag_a = degree_grid(0.0, 180.0, 1.0);
        let m = agreement_map(
            Orientation::VERTICAL,
            &degree_grid(90.0, 90.0, 10.0),
            &[0.0, FRAC_PI_2],
            &tag_p,
            &tag_a,
        )
        .unwrap();
        assert_abs_diff_eq!(m.dot[0][0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m.dot[0][1], 1.0, epsilon = 1e-6);
        assert!(agreement_map(deg(10.0, 0.0), &[0.0], &[0.0], &tag_p, &tag_a).is_err());
        assert!(agreement_map(Orientation::VERTICAL, &[], &[0.0], &tag_p, &tag_a).is_err());
    }

    #[test]
    fn degree_grid_hits_nominal_points() {
        let g = degree_grid(0.0, 90.0, 10.0);
        assert_eq!(g.len(), 10);
        assert_eq!(g[9], 90f64.to_radians());
        assert_eq!(degree_grid(0.0, 180.0, 22.5).len(), 9);
        assert_eq!(degree_grid(5.0, 5.0, 1.0).len(), 1);
    }

    fn orientation() -> impl Strategy<Value = Orientation> {
        (0.0..=PI, 0.0..TAU).prop_map(|(p, a)| Orientation::new(p, a).unwrap())
    }

    proptest! {
        #[test]
        fn unit_vector_has_unit_norm(o in orientation()) {
            prop_assert!((o.unit_vector().norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn antiparallel_flips_vector(o in orientation()) {
            let u = o.unit_vector();
            let w = o.antiparallel().unit_vector();
            prop_assert!((u + w).norm() < 1e-12);
            let r = Vec3::new(0.3, -0.2, 0.9).normalized();
            prop_assert!((direct_projection(u, r).abs() - direct_projection(w, r).abs()).abs() < 1e-12);
        }

        #[test]
        fn backscatter_bounded_and_even_in_tag(
            s in orientation(), t in orientation(), r in orientation()
        ) {
            let (s, t, r) = (s.unit_vector(), t.unit_vector(), r.unit_vector());
            let b = backscatter_projection(s, t, r);
            prop_assert!(b.abs() <= s.dot(t).abs().min(t.dot(r).abs()) + 1e-12);
            prop_assert!((b - backscatter_projection(s, -t, r)).abs() < 1e-12);
        }

    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn closed_form_reaches_grid_maximum(p in 0.0..=180.0f64, a in 0.0..180.0f64) {
            let reader = Orientation::from_degrees(p, a).unwrap();
            let r = reader.unit_vector();
            let obj = |t: Orientation| backscatter_projection(Vec3::Z, t.unit_vector(), r).abs();
            let closed = obj(optimal_tag_orientation(reader));
            // a 1° grid over the full axis domain
            let (_, grid_best) = exhaustive_best_orientation(
                obj,
                &degree_grid(0.0, 180.0, 1.0),
                &degree_grid(0.0, 359.0, 1.0),
            ).unwrap();
            prop_assert!(closed >= grid_best - 1e-12);
        }

        #[test]
        fn canonical_axis_is_same_axis(o in orientation()) {
            let c = o.canonical_axis();
            prop_assert!(c.polar() <= FRAC_PI_2 + 1e-12);
            prop_assert!((c.unit_vector().dot(o.unit_vector()).abs() - 1.0).abs() < 1e-12);
        }
    }
}
