//! Hausdorff operators `H_{Φ,A} f(x) = ∫ Φ(y)/|y|_h^Q f(A(y)x) dy`, their
//! commutators with a symbol `b`, and the split of the commutator over
//! `{‖A(y)‖ ≤ 1}` and `{‖A(y)‖ > 1}`.
//!
//! When `Φ` is radial and `A(y)` depends on `|y|_h` only, the `y`-integral
//! is reduced to `ω_Q ∫ g(ρ) ρ^{−1} K(ρ) dρ` and evaluated by quadrature.
//! Everything else goes through Monte Carlo over the (bounded) support of
//! `Φ`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::heis::{dilate_in_place, BallSpec, Coords, GroupPoint, HeisDim};
use crate::linmap::{diagonal_op_norm, LinearMap};
use crate::quad::{find_sign_changes, integrate_1d, integrate_mc, Estimate, McConfig, McRegion, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Support {
    Ball { outer: f64 },
    Annulus { inner: f64, outer: f64 },
    All,
}

impl Support {
    /// `(a, b)` with `supp Φ ⊂ {a ≤ |y|_h ≤ b}`.
    pub fn radii(&self) -> (f64, f64) {
        match *self {
            Support::Ball { outer } => (0.0, outer),
            Support::Annulus { inner, outer } => (inner, outer),
            Support::All => (0.0, f64::INFINITY),
        }
    }
}

/// The generating function `Φ` with its declared support.
#[derive(Debug, Clone)]
pub struct GeneratingFunction {
    pub phi: ScalarField,
    pub support: Support,
    pub nonnegative: bool,
}

impl GeneratingFunction {
    pub fn new(phi: ScalarField, support: Support, nonnegative: bool) -> Result<Self> {
        match support {
            Support::Ball { outer } if !(outer > 0.0) => {
                return Err(Error::invalid(format!("support radius must be positive, got {outer}")))
            }
            Support::Annulus { inner, outer } if !(inner >= 0.0 && inner < outer) => {
                return Err(Error::invalid(format!("annulus support needs 0 ≤ a < b, got ({inner}, {outer})")))
            }
            _ => {}
        }
        Ok(GeneratingFunction { phi, support, nonnegative })
    }

    pub fn zero() -> Self {
        GeneratingFunction { phi: ScalarField::zero(), support: Support::Ball { outer: 1.0 }, nonnegative: true }
    }

    /// `1_{|y|_h ≤ r}`.
    pub fn ball_indicator(r: f64) -> Result<Self> {
        Self::new(ScalarField::ball_indicator(r), Support::Ball { outer: r }, true)
    }

    /// `1_{a ≤ |y|_h ≤ b}`.
    pub fn annulus_indicator(a: f64, b: f64) -> Result<Self> {
        Self::new(ScalarField::annulus_indicator(a, b), Support::Annulus { inner: a, outer: b }, true)
    }

    /// `|y|_h^β 1_{|y|_h ≤ r}`.
    pub fn power_ball(beta: f64, r: f64) -> Result<Self> {
        Self::new(ScalarField::power(beta).times(ScalarField::ball_indicator(r)), Support::Ball { outer: r }, true)
    }

    /// `Φ · 1_{|y|_h ≥ ε}`.
    pub fn truncated(&self, eps: f64) -> Result<Self> {
        let (a, b) = self.support.radii();
        let inner = a.max(eps);
        let support = if b.is_finite() { Support::Annulus { inner, outer: b } } else { Support::All };
        let phi = self.phi.clone().times(ScalarField::annulus_indicator(inner, f64::INFINITY));
        Self::new(phi, support, self.nonnegative)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.phi, ScalarField::Constant(c) if c == 0.0)
    }

    pub fn eval(&self, y: &GroupPoint) -> f64 {
        self.phi.eval(y)
    }

    pub fn is_radial(&self) -> bool {
        self.phi.is_radial()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let (a, b) = self.support.radii();
        let mut v = self.phi.radial_breakpoints();
        v.extend([a, b]);
        v.retain(|r| *r > 0.0 && r.is_finite());
        v
    }

    fn region(&self, n: usize) -> Result<McRegion> {
        match self.support {
            Support::Ball { outer } => Ok(McRegion::Ball(BallSpec::central(n, outer)?)),
            Support::Annulus { inner, outer } => Ok(McRegion::Annulus { n, inner, outer }),
            Support::All => Err(Error::Unsupported(
                "Monte Carlo evaluation needs Φ with bounded support; declare a ball or annulus support".into(),
            )),
        }
    }
}

pub type DiagonalFn = Arc<dyn Fn(&GroupPoint) -> Vec<f64> + Send + Sync>;
pub type MapFn = Arc<dyn Fn(&GroupPoint) -> LinearMap + Send + Sync>;

#[derive(Clone)]
pub enum MatrixKind {
    /// `A(y) = δ_{1/|y|_h}`, i.e. `diag(1/|y|, …, 1/|y|, 1/|y|²)`.
    Dilation,
    /// `A(y) = diag(1/(d₁|y|), …, 1/(d_{2n}|y|), 1/(d_t|y|²))`.
    ScaledDilation { horizontal: Vec<f64>, vertical: f64 },
    /// `A(y) = diag(1/λ₁(y), …, 1/λ_{2n+1}(y))` for the given `λ`.
    Diagonal(DiagonalFn),
    General(MapFn),
}

/// The matrix-valued function `y ↦ A(y)`.
#[derive(Clone)]
pub struct MatrixField {
    pub kind: MatrixKind,
    pub n: usize,
    /// `A(y)` depends on `|y|_h` only.
    pub radius_only: bool,
    /// `C₀` with `‖A⁻¹(y)‖ ≤ C₀‖A(y)‖⁻¹` on the support of `Φ`.
    pub comparability: Option<f64>,
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            MatrixKind::Dilation => "dilation".to_string(),
            MatrixKind::ScaledDilation { horizontal, vertical } => format!("scaled-dilation({horizontal:?}, {vertical})"),
            MatrixKind::Diagonal(_) => "diagonal(..)".into(),
            MatrixKind::General(_) => "general(..)".into(),
        };
        f.debug_struct("MatrixField")
            .field("kind", &kind)
            .field("n", &self.n)
            .field("radius_only", &self.radius_only)
            .field("comparability", &self.comparability)
            .finish()
    }
}

/// `‖A(y)‖`, `‖A(y)⁻¹‖` and `|det A(y)|` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSample {
    pub norm: f64,
    pub inverse_norm: f64,
    pub det_abs: f64,
}

impl MapSample {
    /// `‖A‖^Q / |det A|`.
    pub fn volume_ratio(&self, q: f64) -> f64 {
        self.norm.powf(q) / self.det_abs
    }
}

impl MatrixField {
    pub fn dilation(n: usize) -> Self {
        MatrixField { kind: MatrixKind::Dilation, n, radius_only: true, comparability: Some(1.0) }
    }

    /// Diagonal map with `λᵢ(y) = dᵢ|y|_h` and
    /// `λ_{2n+1}(y) = d_t|y|_h²`.
    pub fn scaled_dilation(horizontal: Vec<f64>, vertical: f64) -> Result<Self> {
        if horizontal.is_empty() || !horizontal.len().is_multiple_of(2) {
            return Err(Error::invalid("scaled dilation needs 2n horizontal factors"));
        }
        if horizontal.iter().chain([&vertical]).any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid("scaled dilation factors must be positive and finite"));
        }
        let n = horizontal.len() / 2;
        let big = horizontal.iter().copied().fold(vertical.sqrt(), f64::max);
        let small = horizontal.iter().copied().fold(vertical.sqrt(), f64::min);
        Ok(MatrixField {
            kind: MatrixKind::ScaledDilation { horizontal, vertical },
            n,
            radius_only: true,
            comparability: Some(big / small),
        })
    }

    pub fn diagonal(
        n: usize,
        lambda: impl Fn(&GroupPoint) -> Vec<f64> + Send + Sync + 'static,
        radius_only: bool,
        comparability: Option<f64>,
    ) -> Self {
        MatrixField { kind: MatrixKind::Diagonal(Arc::new(lambda)), n, radius_only, comparability }
    }

    pub fn general(
        n: usize,
        map: impl Fn(&GroupPoint) -> LinearMap + Send + Sync + 'static,
        radius_only: bool,
        comparability: Option<f64>,
    ) -> Self {
        MatrixField { kind: MatrixKind::General(Arc::new(map)), n, radius_only, comparability }
    }

    pub fn dim(&self) -> HeisDim {
        HeisDim::new(self.n).expect("n ≥ 1 by construction")
    }

    fn scale_factor(&self) -> Option<f64> {
        match &self.kind {
            MatrixKind::Dilation => Some(1.0),
            MatrixKind::ScaledDilation { horizontal, vertical } => {
                Some(1.0 / horizontal.iter().copied().fold(vertical.sqrt(), f64::min))
            }
            _ => None,
        }
    }

    fn diagonal_entries(&self, y: &GroupPoint) -> Result<Option<Vec<f64>>> {
        let rho = y.koranyi_norm();
        let n2 = 2 * self.n;
        Ok(match &self.kind {
            MatrixKind::Dilation => {
                let mut d = vec![1.0 / rho; n2 + 1];
                d[n2] = 1.0 / (rho * rho);
                Some(d)
            }
            MatrixKind::ScaledDilation { horizontal, vertical } => {
                let mut d: Vec<f64> = horizontal.iter().map(|h| 1.0 / (h * rho)).collect();
                d.push(1.0 / (vertical * rho * rho));
                Some(d)
            }
            MatrixKind::Diagonal(lam) => {
                let l = lam(y);
                if l.len() != n2 + 1 {
                    return Err(Error::DimensionMismatch { expected: n2 + 1, found: l.len() });
                }
                if let Some(z) = l.iter().find(|v| **v == 0.0 || !v.is_finite()) {
                    return Err(Error::Singular(*z));
                }
                Some(l.iter().map(|v| 1.0 / v).collect())
            }
            MatrixKind::General(_) => None,
        })
    }

    /// `‖A(y)‖`, `‖A(y)⁻¹‖`, `|det A(y)|`; closed forms for the diagonal
    /// kinds, the sphere estimator otherwise.
    pub fn sample(&self, y: &GroupPoint) -> Result<MapSample> {
        if let MatrixKind::Dilation = self.kind {
            let rho = y.koranyi_norm();
            return Ok(MapSample { norm: 1.0 / rho, inverse_norm: rho, det_abs: rho.powf(-self.dim().qf()) });
        }
        if let Some(d) = self.diagonal_entries(y)? {
            let inv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
            let det_abs = d.iter().map(|v| v.abs()).product();
            return Ok(MapSample { norm: diagonal_op_norm(&d), inverse_norm: diagonal_op_norm(&inv), det_abs });
        }
        let MatrixKind::General(f) = &self.kind else { unreachable!() };
        let m = f(y);
        if m.det() == 0.0 || !m.det().is_finite() {
            return Err(Error::Singular(m.det()));
        }
        Ok(MapSample { norm: m.op_norm().value, inverse_norm: m.inverse()?.op_norm().value, det_abs: m.det().abs() })
    }

    pub fn sample_radius(&self, rho: f64) -> Result<MapSample> {
        self.sample(&GroupPoint::on_axis(self.n, rho))
    }

    /// `A(y)x` as the matrix acting on coordinates.
    pub fn apply(&self, y: &GroupPoint, x: &GroupPoint) -> Result<GroupPoint> {
        if x.n() != self.n {
            return Err(Error::DimensionMismatch { expected: 2 * self.n + 1, found: x.dim().coords() });
        }
        Ok(GroupPoint::from_coords(self.apply_coords(y, x.coords())?))
    }

    fn apply_coords(&self, y: &GroupPoint, x: &[f64]) -> Result<Coords> {
        if let MatrixKind::Dilation = self.kind {
            let mut c = Coords::from_slice(x);
            dilate_in_place(&mut c, 1.0 / y.koranyi_norm());
            return Ok(c);
        }
        if let Some(d) = self.diagonal_entries(y)? {
            return Ok(x.iter().zip(&d).map(|(a, b)| a * b).collect());
        }
        let MatrixKind::General(f) = &self.kind else { unreachable!() };
        Ok(f(y).apply_coords(x))
    }

    /// `|D x|_h` where `A(y) = D δ_{1/|y|}` for the dilation kinds.
    fn base_image_norm(&self, x: &GroupPoint) -> Option<f64> {
        match &self.kind {
            MatrixKind::Dilation => Some(x.koranyi_norm()),
            MatrixKind::ScaledDilation { horizontal, vertical } => {
                let c = x.coords();
                let mut img: Coords = c.iter().zip(horizontal).map(|(a, d)| a / d).collect();
                img.push(c[c.len() - 1] / vertical);
                Some(crate::heis::koranyi(&img))
            }
            _ => None,
        }
    }

    /// Radii in `[lo, hi]` where `‖A(ρ)‖` crosses `level` (radius-only kinds).
    fn level_crossings(&self, level: f64, lo: f64, hi: f64) -> Vec<f64> {
        if let Some(k) = self.scale_factor() {
            let r = k / level;
            return if r >= lo && r <= hi { vec![r] } else { Vec::new() };
        }
        let (a, b) = scan_window(lo, hi);
        let per_octave = if matches!(self.kind, MatrixKind::General(_)) { 2 } else { 8 };
        find_sign_changes(|r| self.sample_radius(r).map(|s| s.norm - level).unwrap_or(f64::NAN), a, b, per_octave)
    }

    /// Radii in `[lo, hi]` where `|A(ρ)x|_h` crosses `level`.
    fn image_crossings(&self, x: &GroupPoint, level: f64, lo: f64, hi: f64) -> Vec<f64> {
        if let Some(base) = self.base_image_norm(x) {
            let r = base / level;
            return if r >= lo && r <= hi { vec![r] } else { Vec::new() };
        }
        let (a, b) = scan_window(lo, hi);
        let y = |r| GroupPoint::on_axis(self.n, r);
        find_sign_changes(
            |r| self.apply_coords(&y(r), x.coords()).map(|c| crate::heis::koranyi(&c) - level).unwrap_or(f64::NAN),
            a,
            b,
            8,
        )
    }
}

fn scan_window(lo: f64, hi: f64) -> (f64, f64) {
    (lo.max(1e-6), hi.min(1e6))
}

/// Which part of the support to integrate over, by the value of `‖A(y)‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBand {
    /// Keep `‖A(y)‖ > above`.
    pub above: Option<f64>,
    /// Keep `‖A(y)‖ ≤ at_most`.
    pub at_most: Option<f64>,
}

impl NormBand {
    pub const ALL: NormBand = NormBand { above: None, at_most: None };

    pub fn contains(&self, norm: f64) -> bool {
        self.above.is_none_or(|a| norm > a) && self.at_most.is_none_or(|b| norm <= b)
    }

    fn levels(&self) -> Vec<f64> {
        self.above.into_iter().chain(self.at_most).collect()
    }

    fn is_all(&self) -> bool {
        self.above.is_none() && self.at_most.is_none()
    }
}

/// The two commutator pieces: `{‖A(y)‖ ≤ 1}` and `{‖A(y)‖ > 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Piece {
    One,
    Two,
}

impl Piece {
    pub fn band(self) -> NormBand {
        match self {
            Piece::One => NormBand { above: None, at_most: Some(1.0) },
            Piece::Two => NormBand { above: Some(1.0), at_most: None },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    RadialExact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorEval {
    pub value: f64,
    pub std_error: f64,
    pub mode: EvalMode,
}

impl OperatorEval {
    fn exact_zero() -> Self {
        OperatorEval { value: 0.0, std_error: 0.0, mode: EvalMode::RadialExact }
    }

    fn from_estimate(e: Estimate, mode: EvalMode) -> Self {
        OperatorEval { value: e.value, std_error: e.error, mode }
    }
}

/// The `y`-dependent factor of an integrand over `supp Φ`.
pub enum Kernel<'a> {
    /// A function of the map data at `y`.
    Map(&'a (dyn Fn(&MapSample) -> f64 + Sync)),
    /// A function of `y` itself (for operators, `y ↦ f(A(y)x)`).
    Point(&'a (dyn Fn(&GroupPoint) -> f64 + Sync)),
}

/// Extra knowledge about the radial integrand.
#[derive(Debug, Clone, Default)]
pub struct KernelHints {
    /// `K(ρ) ~ ρ^κ` as `ρ → 0` when known.
    pub zero_exponent: Option<f64>,
    /// Radii where `K` jumps or kinks.
    pub breakpoints: Vec<f64>,
    /// Functions of the map data whose sign changes along `ρ` are kinks.
    pub map_kinks: Vec<fn(&MapSample, f64) -> f64>,
}

/// `∫_{band} Φ(y)/|y|_h^Q · K(y) dy`.
pub fn phi_integral(
    phi: &GeneratingFunction,
    a: &MatrixField,
    band: NormBand,
    kernel: Kernel<'_>,
    hints: &KernelHints,
    cfg: &McConfig,
    opts: &QuadOptions,
) -> Result<OperatorEval> {
    if phi.is_zero() {
        return Ok(OperatorEval::exact_zero());
    }
    let dim = a.dim();
    if phi.is_radial() && a.radius_only {
        let (lo, hi) = phi.support.radii();
        let mut breaks = phi.breakpoints();
        breaks.extend(hints.breakpoints.iter().copied());
        for level in band.levels() {
            breaks.extend(a.level_crossings(level, lo, hi));
        }
        if !hints.map_kinks.is_empty() {
            let (s, e) = scan_window(lo, hi);
            let q = dim.qf();
            for k in &hints.map_kinks {
                breaks.extend(find_sign_changes(
                    |r| a.sample_radius(r).map(|m| k(&m, q)).unwrap_or(f64::NAN),
                    s,
                    e,
                    8,
                ));
            }
        }
        breaks.retain(|r| *r > lo && *r < hi);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        let near_zero_in_band = band.is_all() || {
            // Band membership is constant below the first crossing.
            let top = breaks.first().copied().unwrap_or(if hi.is_finite() { hi } else { 1.0 });
            a.sample_radius(0.5 * top).map(|m| band.contains(m.norm)).unwrap_or(true)
        };
        let hint = match (phi.phi.zero_exponent(), hints.zero_exponent) {
            (Some(s), Some(k)) if s.is_finite() && near_zero_in_band => Some(s - 1.0 + k),
            _ => None,
        };
        let omega = dim.sphere_area();
        let n = a.n;
        let integrand = |r: f64| -> f64 {
            let g = phi.phi.eval_radius(r).unwrap_or(f64::NAN);
            if g == 0.0 {
                return 0.0;
            }
            let needs_sample = !band.is_all() || matches!(kernel, Kernel::Map(_));
            let sample = if needs_sample {
                match a.sample_radius(r) {
                    Ok(s) => Some(s),
                    Err(_) => return f64::NAN,
                }
            } else {
                None
            };
            if let Some(s) = &sample {
                if !band.contains(s.norm) {
                    return 0.0;
                }
            }
            let k = match &kernel {
                Kernel::Map(f) => f(sample.as_ref().expect("sampled above")),
                Kernel::Point(f) => f(&GroupPoint::on_axis(n, r)),
            };
            g * k / r
        };
        let est = integrate_1d(integrand, lo, hi, hint, &breaks, opts)?;
        return Ok(OperatorEval::from_estimate(est.scale(omega), EvalMode::RadialExact));
    }

    let region = phi.region(a.n)?;
    let q = dim.q() as i32;
    let est = integrate_mc(
        |y: &GroupPoint| {
            let g = phi.eval(y);
            if g == 0.0 {
                return 0.0;
            }
            let sample = if !band.is_all() || matches!(kernel, Kernel::Map(_)) {
                match a.sample(y) {
                    Ok(s) => Some(s),
                    Err(_) => return f64::NAN,
                }
            } else {
                None
            };
            if let Some(s) = &sample {
                if !band.contains(s.norm) {
                    return 0.0;
                }
            }
            let k = match &kernel {
                Kernel::Map(f) => f(sample.as_ref().expect("sampled above")),
                Kernel::Point(f) => f(y),
            };
            g * k / y.koranyi_norm().powi(q)
        },
        &region,
        cfg,
    )?;
    Ok(OperatorEval { value: est.value, std_error: est.std_error, mode: EvalMode::Mc })
}

fn check_dim(a: &MatrixField, x: &GroupPoint) -> Result<()> {
    if x.n() != a.n {
        return Err(Error::DimensionMismatch { expected: 2 * a.n + 1, found: x.dim().coords() });
    }
    Ok(())
}

/// Kinks of `ρ ↦ F(|A(ρ)x|_h)` for a radial `F` with the given breakpoints.
fn composed_breaks(a: &MatrixField, x: &GroupPoint, field_breaks: &[f64], phi: &GeneratingFunction) -> Vec<f64> {
    if !(a.radius_only && phi.is_radial()) {
        return Vec::new();
    }
    let (lo, hi) = phi.support.radii();
    field_breaks.iter().flat_map(|&r| a.image_crossings(x, r, lo, hi)).collect()
}

/// `(ρ-exponent of f(A(ρ)x), c, s, |Dx|)` when `f = c|·|^s` and `A` is of
/// dilation type, so that `f(A(ρ)x) = c|Dx|^s ρ^{−s}`.
fn power_dilation(a: &MatrixField, f: &ScalarField, x: &GroupPoint) -> Option<(f64, f64, f64, f64)> {
    let (c, s) = f.power_form()?;
    let base = a.base_image_norm(x)?;
    Some((-s, c, s, base))
}

/// `∫_{band} Φ(y)/|y|^Q ρ^{−s} (ln ρ)^j dy` for the dilation fast paths.
fn dilation_moment(
    phi: &GeneratingFunction,
    a: &MatrixField,
    band: NormBand,
    s: f64,
    log_power: i32,
    cfg: &McConfig,
    opts: &QuadOptions,
) -> Result<OperatorEval> {
    let kernel = move |y: &GroupPoint| {
        let r = y.koranyi_norm();
        let p = if s == 0.0 { 1.0 } else { r.powf(-s) };
        if log_power == 0 {
            p
        } else {
            p * r.ln().powi(log_power)
        }
    };
    let hints = KernelHints { zero_exponent: Some(-s), ..Default::default() };
    phi_integral(phi, a, band, Kernel::Point(&kernel), &hints, cfg, opts)
}

fn scale_eval(e: OperatorEval, c: f64) -> OperatorEval {
    OperatorEval { value: c * e.value, std_error: c.abs() * e.std_error, mode: e.mode }
}

/// `H_{Φ,A} f(x)`.
pub fn eval_hausdorff(
    phi: &GeneratingFunction,
    a: &MatrixField,
    f: &ScalarField,
    x: &GroupPoint,
    cfg: &McConfig,
) -> Result<OperatorEval> {
    eval_hausdorff_band(phi, a, f, x, NormBand::ALL, cfg, &QuadOptions::default())
}

fn eval_hausdorff_band(
    phi: &GeneratingFunction,
    a: &MatrixField,
    f: &ScalarField,
    x: &GroupPoint,
    band: NormBand,
    cfg: &McConfig,
    opts: &QuadOptions,
) -> Result<OperatorEval> {
    check_dim(a, x)?;
    if phi.is_zero() || matches!(f, ScalarField::Constant(c) if *c == 0.0) {
        return Ok(OperatorEval::exact_zero());
    }
    if phi.is_radial() {
        if let Some((_, c, s, base)) = power_dilation(a, f, x) {
            let m = dilation_moment(phi, a, band, s, 0, cfg, opts)?;
            let factor = if s == 0.0 { c } else { c * base.powf(s) };
            return Ok(scale_eval(m, factor));
        }
    }
    let kernel = |y: &GroupPoint| match a.apply_coords(y, x.coords()) {
        Ok(ax) => f.eval(&GroupPoint::from_coords(ax)),
        Err(_) => f64::NAN,
    };
    let hints = KernelHints { breakpoints: composed_breaks(a, x, &f.radial_breakpoints(), phi), ..Default::default() };
    phi_integral(phi, a, band, Kernel::Point(&kernel), &hints, cfg, opts)
}

/// `b(x)·H f(x) − H(bf)(x)`, computed as one integral of
/// `Φ(y)/|y|^Q f(A(y)x)[b(x) − b(A(y)x)]`.
pub fn eval_commutator(
    phi: &GeneratingFunction,
    a: &MatrixField,
    b: &ScalarField,
    f: &ScalarField,
    x: &GroupPoint,
    cfg: &McConfig,
) -> Result<OperatorEval> {
    eval_commutator_band(phi, a, b, f, x, NormBand::ALL, cfg, &QuadOptions::default())
}

/// The commutator restricted to `{‖A(y)‖ ≤ 1}` (piece one) or
/// `{‖A(y)‖ > 1}` (piece two).
pub fn eval_commutator_piece(
    piece: Piece,
    phi: &GeneratingFunction,
    a: &MatrixField,
    b: &ScalarField,
    f: &ScalarField,
    x: &GroupPoint,
    cfg: &McConfig,
) -> Result<OperatorEval> {
    eval_commutator_band(phi, a, b, f, x, piece.band(), cfg, &QuadOptions::default())
}

#[allow(clippy::too_many_arguments)]
fn eval_commutator_band(
    phi: &GeneratingFunction,
    a: &MatrixField,
    b: &ScalarField,
    f: &ScalarField,
    x: &GroupPoint,
    band: NormBand,
    cfg: &McConfig,
    opts: &QuadOptions,
) -> Result<OperatorEval> {
    check_dim(a, x)?;
    let b_const = matches!(b.log_form(), Some((k, _)) if k == 0.0);
    if phi.is_zero() || b_const || matches!(f, ScalarField::Constant(c) if *c == 0.0) {
        return Ok(OperatorEval::exact_zero());
    }
    if phi.is_radial() {
        if let (Some((_, c, s, base)), Some((k, _))) = (power_dilation(a, f, x), b.log_form()) {
            // b(x) − b(A(y)x) = k(ln|x| − ln|Dx| + ln ρ).
            let fx = if s == 0.0 { c } else { c * base.powf(s) };
            let shift = x.koranyi_norm().ln() - base.ln();
            let m1 = dilation_moment(phi, a, band, s, 1, cfg, opts)?;
            let mut out = scale_eval(m1, k * fx);
            if shift != 0.0 {
                let m0 = dilation_moment(phi, a, band, s, 0, cfg, opts)?;
                out.value += k * fx * shift * m0.value;
                out.std_error += (k * fx * shift).abs() * m0.std_error;
            }
            return Ok(out);
        }
    }
    let bx = b.eval(x);
    let kernel = |y: &GroupPoint| match a.apply_coords(y, x.coords()) {
        Ok(ax) => {
            let ax = GroupPoint::from_coords(ax);
            let fv = f.eval(&ax);
            if fv == 0.0 {
                0.0
            } else {
                fv * (bx - b.eval(&ax))
            }
        }
        Err(_) => f64::NAN,
    };
    let mut fb = f.radial_breakpoints();
    fb.extend(b.radial_breakpoints());
    let hints = KernelHints { breakpoints: composed_breaks(a, x, &fb, phi), ..Default::default() };
    phi_integral(phi, a, band, Kernel::Point(&kernel), &hints, cfg, opts)
}

fn nan_on_err(r: Result<OperatorEval>) -> f64 {
    r.map(|e| e.value).unwrap_or(f64::NAN)
}

fn radial_output_breaks(phi: &GeneratingFunction, field_breaks: &[f64]) -> Vec<f64> {
    let mut edges = phi.breakpoints();
    edges.push(1.0);
    let mut out = Vec::new();
    for r in field_breaks {
        for e in &edges {
            out.push(r * e);
        }
    }
    out
}

/// `H_{Φ,A} f` as a field, keeping whatever structure survives: a power
/// stays a power under dilation kinds, a radial `f` stays radial under the
/// pure dilation.
pub fn hausdorff_field(phi: &GeneratingFunction, a: &MatrixField, f: &ScalarField, cfg: &McConfig) -> Result<ScalarField> {
    hausdorff_field_band(phi, a, f, NormBand::ALL, cfg)
}

fn hausdorff_field_band(
    phi: &GeneratingFunction,
    a: &MatrixField,
    f: &ScalarField,
    band: NormBand,
    cfg: &McConfig,
) -> Result<ScalarField> {
    let opts = QuadOptions::default();
    if phi.is_zero() {
        return Ok(ScalarField::zero());
    }
    if let (true, Some((c, s))) = (phi.is_radial(), f.power_form()) {
        if a.scale_factor().is_some() {
            let m = dilation_moment(phi, a, band, s, 0, cfg, &opts)?.value;
            if let MatrixKind::Dilation = a.kind {
                return Ok(ScalarField::Power { coeff: c * m, exponent: s });
            }
            let a2 = a.clone();
            return Ok(ScalarField::general(move |x| c * m * a2.base_image_norm(x).expect("dilation kind").powf(s)));
        }
    }
    let (phi, a, f, cfg) = (phi.clone(), a.clone(), f.clone(), *cfg);
    if matches!(a.kind, MatrixKind::Dilation) && f.is_radial() && phi.is_radial() {
        let breaks = radial_output_breaks(&phi, &f.radial_breakpoints());
        let n = a.n;
        return Ok(ScalarField::radial_with(
            move |r| nan_on_err(eval_hausdorff_band(&phi, &a, &f, &GroupPoint::on_axis(n, r), band, &cfg, &opts)),
            breaks,
            None,
        ));
    }
    Ok(ScalarField::general(move |x| nan_on_err(eval_hausdorff_band(&phi, &a, &f, x, band, &cfg, &opts))))
}

/// The commutator `H^b_{Φ,A} f` (or one of its pieces) as a field.
pub fn commutator_field(
    phi: &GeneratingFunction,
    a: &MatrixField,
    b: &ScalarField,
    f: &ScalarField,
    piece: Option<Piece>,
    cfg: &McConfig,
) -> Result<ScalarField> {
    let band = piece.map_or(NormBand::ALL, Piece::band);
    let opts = QuadOptions::default();
    if phi.is_zero() || matches!(b.log_form(), Some((k, _)) if k == 0.0) {
        return Ok(ScalarField::zero());
    }
    if let (true, Some((c, s)), Some((k, _))) = (phi.is_radial(), f.power_form(), b.log_form()) {
        if a.scale_factor().is_some() {
            let m1 = dilation_moment(phi, a, band, s, 1, cfg, &opts)?.value;
            if let MatrixKind::Dilation = a.kind {
                return Ok(ScalarField::Power { coeff: c * k * m1, exponent: s });
            }
            let m0 = dilation_moment(phi, a, band, s, 0, cfg, &opts)?.value;
            let a2 = a.clone();
            return Ok(ScalarField::general(move |x| {
                let base = a2.base_image_norm(x).expect("dilation kind");
                c * k * base.powf(s) * ((x.koranyi_norm().ln() - base.ln()) * m0 + m1)
            }));
        }
    }
    let (phi, a, b, f, cfg) = (phi.clone(), a.clone(), b.clone(), f.clone(), *cfg);
    if matches!(a.kind, MatrixKind::Dilation) && f.is_radial() && b.is_radial() && phi.is_radial() {
        let mut fb = f.radial_breakpoints();
        fb.extend(b.radial_breakpoints());
        let breaks = radial_output_breaks(&phi, &fb);
        let n = a.n;
        return Ok(ScalarField::radial_with(
            move |r| {
                nan_on_err(eval_commutator_band(&phi, &a, &b, &f, &GroupPoint::on_axis(n, r), band, &cfg, &opts))
            },
            breaks,
            None,
        ));
    }
    Ok(ScalarField::general(move |x| nan_on_err(eval_commutator_band(&phi, &a, &b, &f, x, band, &cfg, &opts))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn x3(c: [f64; 3]) -> GroupPoint {
        GroupPoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn extremizer_is_an_eigenfunction() {
        let phi = GeneratingFunction::ball_indicator(1.0).unwrap();
        let a = MatrixField::dilation(1);
        let f = ScalarField::power(-1.0);
        let cfg = McConfig::default();
        for x in [[1.0, 0.0, 0.0], [0.3, -2.0, 1.0], [0.0, 0.0, 5.0]] {
            let x = x3(x);
            let e = eval_hausdorff(&phi, &a, &f, &x, &cfg).unwrap();
            assert_eq!(e.mode, EvalMode::RadialExact);
            assert_relative_eq!(e.value, 4.0 * PI * PI / x.koranyi_norm(), max_relative = 1e-9);
        }
    }

    #[test]
    fn constant_input() {
        let phi = GeneratingFunction::annulus_indicator(1.0, 2.0).unwrap();
        let a = MatrixField::dilation(1);
        let e = eval_hausdorff(&phi, &a, &ScalarField::constant(1.0), &x3([0.2, 0.1, 0.0]), &McConfig::default());
        assert_relative_eq!(e.unwrap().value, 4.0 * PI * PI * 2f64.ln(), max_relative = 1e-9);
    }

    #[test]
    fn support_reasoning() {
        let phi = GeneratingFunction::annulus_indicator(1.0, 2.0).unwrap();
        let a = MatrixField::dilation(1);
        let f = ScalarField::ball_indicator(1.0);
        let e = eval_hausdorff(&phi, &a, &f, &GroupPoint::on_axis(1, 3.0), &McConfig::default()).unwrap();
        assert_eq!(e.value, 0.0);
        // |x| = 1.5: f(δ_{1/ρ}x) = 1 iff ρ ≥ 1.5.
        let e = eval_hausdorff(&phi, &a, &f, &GroupPoint::on_axis(1, 1.5), &McConfig::default()).unwrap();
        assert_relative_eq!(e.value, 4.0 * PI * PI * (2.0f64 / 1.5).ln(), max_relative = 1e-9);
    }

    #[test]
    fn commutator_zero_cases() {
        let phi = GeneratingFunction::ball_indicator(1.0).unwrap();
        let a = MatrixField::dilation(1);
        let cfg = McConfig::default();
        let x = x3([0.5, 0.5, 0.5]);
        let f = ScalarField::power(-1.0);
        assert_eq!(eval_commutator(&phi, &a, &ScalarField::constant(3.0), &f, &x, &cfg).unwrap().value, 0.0);
        assert_eq!(eval_commutator(&phi, &a, &ScalarField::log_norm(), &ScalarField::zero(), &x, &cfg).unwrap().value, 0.0);
        let p1 = eval_commutator_piece(Piece::One, &phi, &a, &ScalarField::log_norm(), &f, &x, &cfg).unwrap();
        assert_eq!(p1.value, 0.0);
    }

    #[test]
    fn log_commutator_closed_form() {
        // f = |x|^{-1}, b = ln|x|, Φ = 1_{|y|≤1}: f(x)·ω∫₀¹ ln ρ dρ = −4π² f(x).
        let phi = GeneratingFunction::ball_indicator(1.0).unwrap();
        let a = MatrixField::dilation(1);
        let x = x3([1.0, 1.0, 2.0]);
        let e = eval_commutator(&phi, &a, &ScalarField::log_norm(), &ScalarField::power(-1.0), &x, &McConfig::default());
        assert_relative_eq!(e.unwrap().value, -4.0 * PI * PI / x.koranyi_norm(), max_relative = 1e-8);
    }

    #[test]
    fn scaled_dilation_norms() {
        let a = MatrixField::scaled_dilation(vec![2.0, 1.0], 4.0).unwrap();
        let s = a.sample_radius(0.5).unwrap();
        assert_relative_eq!(s.norm, 2.0);
        assert_relative_eq!(s.inverse_norm, 1.0);
        assert_relative_eq!(s.det_abs, 1.0 / (2.0 * 4.0 * 0.5f64.powi(4)));
        assert_eq!(a.comparability, Some(2.0));
    }

    #[test]
    fn general_path_matches_dilation_fast_path() {
        let phi = GeneratingFunction::ball_indicator(1.0).unwrap();
        let dil = MatrixField::dilation(1);
        let gen = MatrixField::diagonal(
            1,
            |y: &GroupPoint| {
                let r = y.koranyi_norm();
                vec![r, r, r * r]
            },
            true,
            Some(1.0),
        );
        let f = ScalarField::power(-1.0).times(ScalarField::ball_indicator(2.0));
        let x = x3([0.7, 0.2, -0.3]);
        let cfg = McConfig::default();
        let a = eval_hausdorff(&phi, &dil, &f, &x, &cfg).unwrap().value;
        let b = eval_hausdorff(&phi, &gen, &f, &x, &cfg).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-8);
    }
}
