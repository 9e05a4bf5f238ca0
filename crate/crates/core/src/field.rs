//! Real-valued functions on ℍⁿ.
//!
//! Structure (radial, power form, logarithmic form) is declared by the
//! constructor, never inferred. Evaluation fast paths rely on it.

use std::fmt;
use std::sync::Arc;

use crate::heis::GroupPoint;

pub type PointFn = Arc<dyn Fn(&GroupPoint) -> f64 + Send + Sync>;
pub type RadiusFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    /// `coeff · |x|_h^exponent`.
    Power { coeff: f64, exponent: f64 },
    /// `coeff · ln|x|_h`.
    LogNorm { coeff: f64 },
    /// `1` on the closed ball `|x|_h ≤ radius`.
    BallIndicator { radius: f64 },
    /// `1` on `inner ≤ |x|_h ≤ outer`.
    AnnulusIndicator { inner: f64, outer: f64 },
    Product(Vec<ScalarField>),
    /// `Σ cᵢ fᵢ`.
    Sum(Vec<(f64, ScalarField)>),
    /// `g(|x|_h)` with the radii where `g` jumps or kinks, and optionally
    /// the exponent `τ` in `g(ρ) ~ ρ^τ` as `ρ → 0`.
    Radial { profile: RadiusFn, breakpoints: Vec<f64>, zero_exponent: Option<f64> },
    General(PointFn),
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        ScalarField::Constant(c)
    }

    pub fn zero() -> Self {
        ScalarField::Constant(0.0)
    }

    pub fn power(exponent: f64) -> Self {
        ScalarField::Power { coeff: 1.0, exponent }
    }

    /// `ln|x|_h`.
    pub fn log_norm() -> Self {
        ScalarField::LogNorm { coeff: 1.0 }
    }

    /// `ln(1/|x|_h)`.
    pub fn inv_log_norm() -> Self {
        ScalarField::LogNorm { coeff: -1.0 }
    }

    pub fn ball_indicator(radius: f64) -> Self {
        ScalarField::BallIndicator { radius }
    }

    pub fn annulus_indicator(inner: f64, outer: f64) -> Self {
        ScalarField::AnnulusIndicator { inner, outer }
    }

    pub fn radial(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Radial { profile: Arc::new(g), breakpoints: Vec::new(), zero_exponent: None }
    }

    pub fn radial_with(g: impl Fn(f64) -> f64 + Send + Sync + 'static, breakpoints: Vec<f64>, zero_exponent: Option<f64>) -> Self {
        ScalarField::Radial { profile: Arc::new(g), breakpoints, zero_exponent }
    }

    pub fn general(f: impl Fn(&GroupPoint) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::General(Arc::new(f))
    }

    pub fn times(self, other: ScalarField) -> Self {
        match self {
            ScalarField::Product(mut v) => {
                v.push(other);
                ScalarField::Product(v)
            }
            s => ScalarField::Product(vec![s, other]),
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        match self {
            ScalarField::Constant(v) => ScalarField::Constant(c * v),
            ScalarField::Power { coeff, exponent } => ScalarField::Power { coeff: c * coeff, exponent },
            ScalarField::LogNorm { coeff } => ScalarField::LogNorm { coeff: c * coeff },
            s => ScalarField::Sum(vec![(c, s)]),
        }
    }

    pub fn plus(self, c: f64, other: ScalarField) -> Self {
        match self {
            ScalarField::Sum(mut v) => {
                v.push((c, other));
                ScalarField::Sum(v)
            }
            s => ScalarField::Sum(vec![(1.0, s), (c, other)]),
        }
    }

    pub fn eval(&self, x: &GroupPoint) -> f64 {
        match self {
            ScalarField::Product(v) => v.iter().map(|f| f.eval(x)).product(),
            ScalarField::Sum(v) => v.iter().map(|(c, f)| c * f.eval(x)).sum(),
            ScalarField::General(f) => f(x),
            s => s.radial_value(x.koranyi_norm()).expect("leaf fields are radial"),
        }
    }

    /// Value at any point of Korányi radius `rho`, if the field is radial.
    pub fn eval_radius(&self, rho: f64) -> Option<f64> {
        if self.is_radial() {
            self.radial_value(rho)
        } else {
            None
        }
    }

    fn radial_value(&self, rho: f64) -> Option<f64> {
        Some(match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Power { coeff, exponent } => {
                if *coeff == 0.0 {
                    0.0
                } else if *exponent == 0.0 {
                    *coeff
                } else {
                    coeff * rho.powf(*exponent)
                }
            }
            ScalarField::LogNorm { coeff } => {
                if *coeff == 0.0 {
                    0.0
                } else {
                    coeff * rho.ln()
                }
            }
            ScalarField::BallIndicator { radius } => f64::from(u8::from(rho <= *radius)),
            ScalarField::AnnulusIndicator { inner, outer } => f64::from(u8::from(rho >= *inner && rho <= *outer)),
            ScalarField::Product(v) => {
                let mut acc = 1.0;
                for f in v {
                    let y = f.radial_value(rho)?;
                    // An indicator that vanishes wins over a singular factor.
                    if y == 0.0 {
                        return Some(0.0);
                    }
                    acc *= y;
                }
                acc
            }
            ScalarField::Sum(v) => {
                let mut acc = 0.0;
                for (c, f) in v {
                    acc += c * f.radial_value(rho)?;
                }
                acc
            }
            ScalarField::Radial { profile, .. } => profile(rho),
            ScalarField::General(_) => return None,
        })
    }

    pub fn is_radial(&self) -> bool {
        match self {
            ScalarField::Product(v) => v.iter().all(ScalarField::is_radial),
            ScalarField::Sum(v) => v.iter().all(|(_, f)| f.is_radial()),
            ScalarField::General(_) => false,
            _ => true,
        }
    }

    /// Radii where the radial profile jumps or has a kink.
    pub fn radial_breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breakpoints(&mut out);
        out.retain(|r| r.is_finite() && *r > 0.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            ScalarField::BallIndicator { radius } => out.push(*radius),
            ScalarField::AnnulusIndicator { inner, outer } => out.extend([*inner, *outer]),
            ScalarField::Product(v) => v.iter().for_each(|f| f.collect_breakpoints(out)),
            ScalarField::Sum(v) => v.iter().for_each(|(_, f)| f.collect_breakpoints(out)),
            ScalarField::Radial { breakpoints, .. } => out.extend(breakpoints),
            _ => {}
        }
    }

    /// `(c, s)` when the field is exactly `c·|x|_h^s`.
    pub fn power_form(&self) -> Option<(f64, f64)> {
        match self {
            ScalarField::Constant(c) => Some((*c, 0.0)),
            ScalarField::Power { coeff, exponent } => Some((*coeff, *exponent)),
            ScalarField::Product(v) => v.iter().try_fold((1.0, 0.0), |(c, s), f| {
                let (c2, s2) = f.power_form()?;
                Some((c * c2, s + s2))
            }),
            ScalarField::Sum(v) if v.len() == 1 => {
                let (c, s) = v[0].1.power_form()?;
                Some((v[0].0 * c, s))
            }
            _ => None,
        }
    }

    /// `(k, c)` when the field is exactly `k·ln|x|_h + c`.
    pub fn log_form(&self) -> Option<(f64, f64)> {
        match self {
            ScalarField::Constant(c) => Some((0.0, *c)),
            ScalarField::Power { coeff, exponent } if *exponent == 0.0 => Some((0.0, *coeff)),
            ScalarField::LogNorm { coeff } => Some((*coeff, 0.0)),
            ScalarField::Sum(v) => v.iter().try_fold((0.0, 0.0), |(k, c), (w, f)| {
                let (k2, c2) = f.log_form()?;
                Some((k + w * k2, c + w * c2))
            }),
            _ => None,
        }
    }

    /// Exponent `τ` with `|f(x)| ≲ |x|_h^τ` as `x → 0`; `+∞` when the field
    /// vanishes near the origin. A logarithm counts as exponent 0.
    pub fn zero_exponent(&self) -> Option<f64> {
        match self {
            ScalarField::Constant(c) => Some(if *c == 0.0 { f64::INFINITY } else { 0.0 }),
            ScalarField::Power { coeff, exponent } => Some(if *coeff == 0.0 { f64::INFINITY } else { *exponent }),
            ScalarField::LogNorm { coeff } => Some(if *coeff == 0.0 { f64::INFINITY } else { 0.0 }),
            ScalarField::BallIndicator { .. } => Some(0.0),
            ScalarField::AnnulusIndicator { inner, .. } => Some(if *inner > 0.0 { f64::INFINITY } else { 0.0 }),
            ScalarField::Product(v) => v.iter().try_fold(0.0, |acc, f| Some(acc + f.zero_exponent()?)),
            ScalarField::Sum(v) => v.iter().try_fold(f64::INFINITY, |acc: f64, (c, f)| {
                Some(if *c == 0.0 { acc } else { acc.min(f.zero_exponent()?) })
            }),
            ScalarField::Radial { zero_exponent, .. } => *zero_exponent,
            ScalarField::General(_) => None,
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Power { coeff, exponent } => write!(f, "{coeff}·|x|^{exponent}"),
            ScalarField::LogNorm { coeff } => write!(f, "{coeff}·ln|x|"),
            ScalarField::BallIndicator { radius } => write!(f, "1[|x| ≤ {radius}]"),
            ScalarField::AnnulusIndicator { inner, outer } => write!(f, "1[{inner} ≤ |x| ≤ {outer}]"),
            ScalarField::Product(v) => f.debug_tuple("Product").field(v).finish(),
            ScalarField::Sum(v) => f.debug_tuple("Sum").field(v).finish(),
            ScalarField::Radial { breakpoints, .. } => write!(f, "Radial(breakpoints={breakpoints:?})"),
            ScalarField::General(_) => write!(f, "General(..)"),
        }
    }
}
