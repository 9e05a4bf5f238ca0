//! Arithmetic and geometry of the Heisenberg group ℍⁿ = ℝ²ⁿ × ℝ.
//!
//! Coordinates are stored as `(x₁, …, x_{2n}, t)`. The product is
//!
//! ```text
//! x·y = (x_h + y_h, x_t + y_t + 2 Σⱼ (yⱼ x_{n+j} − xⱼ y_{n+j}))
//! ```
//!
//! with identity `0` and inverse `−x`. Dilations act as
//! `δ_r(x_h, t) = (r x_h, r² t)` and the Korányi norm
//! `|x|_h = (|x_h|⁴ + t²)^{1/4}` is 1-homogeneous under them.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub(crate) type Coords = SmallVec<[f64; 7]>;

/// Dimension data for ℍⁿ: `Q = 2n + 2`, the unit-ball volume and the
/// unit-sphere area `ω_Q = Q·Ω_Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeisDim {
    n: usize,
    big_omega: f64,
}

impl HeisDim {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ℍⁿ requires n ≥ 1"));
        }
        Ok(HeisDim { n, big_omega: unit_ball_volume_formula(n) })
    }

    /// ℍ¹, the default for every tested path.
    pub fn h1() -> Self {
        HeisDim::new(1).expect("n = 1 is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of real coordinates, `2n + 1`.
    pub fn coords(&self) -> usize {
        2 * self.n + 1
    }

    /// Homogeneous dimension `Q = 2n + 2`.
    pub fn q(&self) -> usize {
        2 * self.n + 2
    }

    pub fn qf(&self) -> f64 {
        self.q() as f64
    }

    /// `Ω_Q`, the measure assigned to the unit Korányi ball.
    pub fn unit_ball_volume(&self) -> f64 {
        self.big_omega
    }

    /// `ω_Q = Q·Ω_Q`, the constant in `∫_{|x|<r} g(|x|) dx = ω_Q ∫₀^r g(ρ) ρ^{Q−1} dρ`.
    pub fn sphere_area(&self) -> f64 {
        self.qf() * self.big_omega
    }

    /// `|B(x, r)| = Ω_Q r^Q`.
    pub fn ball_volume(&self, r: f64) -> f64 {
        self.big_omega * r.powi(self.q() as i32)
    }
}

/// `Ω_Q = 2π^{n+½} Γ(n/2) / ((n+1) Γ(n) Γ((n+1)/2))`.
///
/// This is the normalization used throughout the crate for Korányi balls
/// and shells. It is exactly twice the Lebesgue volume of
/// `{|x_h|⁴ + t² < 1}` (for n = 1 that volume is π²/2); integrals over
/// coordinate boxes ([`crate::quad::McRegion::Box`]) are plain Lebesgue.
pub fn unit_ball_volume_formula(n: usize) -> f64 {
    let nf = n as f64;
    2.0 * PI.powf(nf + 0.5) * libm::tgamma(nf / 2.0)
        / ((nf + 1.0) * libm::tgamma(nf) * libm::tgamma((nf + 1.0) / 2.0))
}

/// Same as [`HeisDim::unit_ball_volume`].
pub fn unit_ball_volume(dim: HeisDim) -> f64 {
    dim.unit_ball_volume()
}

/// A point of ℍⁿ.
#[derive(Clone, PartialEq)]
pub struct GroupPoint {
    coords: Coords,
}

impl GroupPoint {
    pub fn new(coords: impl Into<Vec<f64>>) -> Result<Self> {
        let coords: Vec<f64> = coords.into();
        if coords.len() < 3 || coords.len().is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "a point of ℍⁿ has 2n+1 ≥ 3 coordinates, got {}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {bad}")));
        }
        Ok(GroupPoint { coords: Coords::from_vec(coords) })
    }

    pub(crate) fn from_coords(coords: Coords) -> Self {
        debug_assert!(coords.len() % 2 == 1);
        GroupPoint { coords }
    }

    /// The identity element of ℍⁿ.
    pub fn zero(n: usize) -> Self {
        GroupPoint { coords: SmallVec::from_elem(0.0, 2 * n + 1) }
    }

    /// Horizontal part of `x` and vertical coordinate `t`.
    pub fn from_parts(horizontal: &[f64], t: f64) -> Result<Self> {
        let mut v = horizontal.to_vec();
        v.push(t);
        GroupPoint::new(v)
    }

    /// The point `(ρ, 0, …, 0)`, a representative of the sphere of radius ρ.
    pub fn on_axis(n: usize, rho: f64) -> Self {
        let mut p = GroupPoint::zero(n);
        p.coords[0] = rho;
        p
    }

    pub fn n(&self) -> usize {
        (self.coords.len() - 1) / 2
    }

    pub fn dim(&self) -> HeisDim {
        HeisDim::new(self.n()).expect("points always have n ≥ 1")
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn horizontal(&self) -> &[f64] {
        &self.coords[..self.coords.len() - 1]
    }

    pub fn vertical(&self) -> f64 {
        self.coords[self.coords.len() - 1]
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }

    pub fn koranyi_norm(&self) -> f64 {
        koranyi(&self.coords)
    }

    pub fn inverse(&self) -> GroupPoint {
        group_inverse(self)
    }

    /// Group product `self · other`.
    pub fn mul(&self, other: &GroupPoint) -> Result<GroupPoint> {
        group_mul(self, other)
    }

    /// `δ_r(self)`; panics in debug builds if `r ≤ 0`.
    pub(crate) fn dilated(&self, r: f64) -> GroupPoint {
        debug_assert!(r > 0.0);
        let mut c = self.coords.clone();
        dilate_in_place(&mut c, r);
        GroupPoint { coords: c }
    }
}

impl Index<usize> for GroupPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

impl fmt::Debug for GroupPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("GroupPoint").field(&self.coords.as_slice()).finish()
    }
}

impl Serialize for GroupPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        GroupPoint::new(v).map_err(serde::de::Error::custom)
    }
}

#[inline]
pub(crate) fn koranyi(c: &[f64]) -> f64 {
    let (h, t) = c.split_at(c.len() - 1);
    let s: f64 = h.iter().map(|v| v * v).sum();
    // hypot keeps s² + t² clear of underflow and overflow.
    s.hypot(t[0]).sqrt()
}

#[inline]
pub(crate) fn dilate_in_place(c: &mut [f64], r: f64) {
    let last = c.len() - 1;
    for v in &mut c[..last] {
        *v *= r;
    }
    c[last] *= r * r;
}

/// Last coordinate of the product: `x_t + y_t + 2 Σ (yⱼ x_{n+j} − xⱼ y_{n+j})`.
#[inline]
pub(crate) fn mul_coords(x: &[f64], y: &[f64]) -> Coords {
    let n = (x.len() - 1) / 2;
    let mut out: Coords = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let mut twist = 0.0;
    for j in 0..n {
        twist += y[j] * x[n + j] - x[j] * y[n + j];
    }
    out[2 * n] += 2.0 * twist;
    out
}

pub fn group_mul(x: &GroupPoint, y: &GroupPoint) -> Result<GroupPoint> {
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch { expected: x.n(), found: y.n() });
    }
    Ok(GroupPoint { coords: mul_coords(&x.coords, &y.coords) })
}

pub fn group_inverse(x: &GroupPoint) -> GroupPoint {
    GroupPoint { coords: x.coords.iter().map(|v| -v).collect() }
}

pub fn dilate(r: f64, x: &GroupPoint) -> Result<GroupPoint> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("dilation factor must be positive, got {r}")));
    }
    Ok(x.dilated(r))
}

pub fn koranyi_norm(x: &GroupPoint) -> f64 {
    x.koranyi_norm()
}

/// `d(p, q) = |q⁻¹ p|_h`.
pub fn distance(p: &GroupPoint, q: &GroupPoint) -> Result<f64> {
    Ok(group_mul(&group_inverse(q), p)?.koranyi_norm())
}

/// A Korányi ball `B(center, radius) = center · B(0, radius)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: GroupPoint,
    pub radius: f64,
}

impl BallSpec {
    pub fn new(center: GroupPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("ball radius must be positive, got {radius}")));
        }
        Ok(BallSpec { center, radius })
    }

    pub fn central(n: usize, radius: f64) -> Result<Self> {
        BallSpec::new(GroupPoint::zero(n), radius)
    }

    pub fn is_central(&self) -> bool {
        self.center.is_zero()
    }

    pub fn contains(&self, x: &GroupPoint) -> bool {
        distance(x, &self.center).map(|d| d < self.radius).unwrap_or(false)
    }

    pub fn volume(&self) -> f64 {
        self.center.dim().ball_volume(self.radius)
    }
}

/// Default finite-difference step `1e-5·(1 + |x|_h)`.
pub fn default_fd_step(x: &GroupPoint) -> f64 {
    1e-5 * (1.0 + x.koranyi_norm())
}

/// Central-difference evaluation of the left-invariant field `X_j f(x)`,
/// `j ∈ 1..=2n+1`:
///
/// * `X_j = ∂_j + 2 x_{n+j} ∂_t` for `j ≤ n`,
/// * `X_{n+j} = ∂_{n+j} − 2 x_j ∂_t`,
/// * `X_{2n+1} = ∂_t`.
///
/// `X_j f(x)` is the derivative of `s ↦ f(x · s e_j)` at 0, and that curve is
/// a straight line in coordinates, so a symmetric difference along it is
/// second-order accurate.
pub fn vector_field_apply<F>(j: usize, f: F, x: &GroupPoint, h: f64) -> Result<f64>
where
    F: Fn(&GroupPoint) -> f64,
{
    let n = x.n();
    if j == 0 || j > 2 * n + 1 {
        return Err(Error::invalid(format!("vector field index {j} outside 1..={}", 2 * n + 1)));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let dir = vector_field_direction(j, x);
    let shifted = |s: f64| {
        let c: Coords = x.coords.iter().zip(&dir).map(|(a, d)| a + s * d).collect();
        f(&GroupPoint { coords: c })
    };
    Ok((shifted(h) - shifted(-h)) / (2.0 * h))
}

/// Coefficients of `X_j` at `x` in the coordinate basis.
fn vector_field_direction(j: usize, x: &GroupPoint) -> Coords {
    let n = x.n();
    let mut dir: Coords = SmallVec::from_elem(0.0, 2 * n + 1);
    dir[j - 1] = 1.0;
    if j <= n {
        dir[2 * n] = 2.0 * x.coords[n + j - 1];
    } else if j <= 2 * n {
        dir[2 * n] = -2.0 * x.coords[j - n - 1];
    }
    dir
}
