//! Power-type weights, their ball masses, and family-restricted probes of
//! the A_p and reverse-Hölder conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heis::{BallSpec, GroupPoint, HeisDim};
use crate::par;
use crate::quad::{integrate_1d, integrate_mc, Estimate, McConfig, McRegion, QuadOptions, RadialProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    /// `|x|_h^α`.
    Power,
    /// `max(|x|_h, 1)^α`: constant near the origin, power-like at infinity.
    ClippedPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub alpha: f64,
    pub dim: HeisDim,
}

impl WeightSpec {
    pub fn power(dim: HeisDim, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= -dim.qf() {
            return Err(Error::invalid(format!(
                "power weight |x|^α needs α > −Q = {} for local integrability, got α = {alpha}",
                -dim.qf()
            )));
        }
        Ok(WeightSpec { kind: WeightKind::Power, alpha, dim })
    }

    pub fn clipped_power(dim: HeisDim, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::invalid("weight exponent must be finite"));
        }
        Ok(WeightSpec { kind: WeightKind::ClippedPower, alpha, dim })
    }

    /// Lebesgue measure.
    pub fn unweighted(dim: HeisDim) -> Self {
        WeightSpec { kind: WeightKind::Power, alpha: 0.0, dim }
    }

    pub fn is_constant(&self) -> bool {
        self.alpha == 0.0
    }

    pub fn eval_radius(&self, rho: f64) -> f64 {
        if self.alpha == 0.0 {
            return 1.0;
        }
        match self.kind {
            WeightKind::Power => rho.powf(self.alpha),
            WeightKind::ClippedPower => rho.max(1.0).powf(self.alpha),
        }
    }

    pub fn eval(&self, x: &GroupPoint) -> f64 {
        self.eval_radius(x.koranyi_norm())
    }

    /// Behaviour `w ~ ρ^τ` at the origin.
    pub fn zero_exponent(&self) -> f64 {
        match self.kind {
            WeightKind::Power => self.alpha,
            WeightKind::ClippedPower => 0.0,
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            WeightKind::ClippedPower if self.alpha != 0.0 => vec![1.0],
            _ => Vec::new(),
        }
    }

    /// `q_w = inf{q : w ∈ A_q}` for the power profile: `(Q+α)/Q` when
    /// `α > 0`, else 1.
    pub fn critical_q(&self) -> f64 {
        let q = self.dim.qf();
        if self.alpha > 0.0 {
            (q + self.alpha) / q
        } else {
            1.0
        }
    }

    /// Whether `w ∈ A_p`: `−Q < α ≤ 0` for `p = 1`, `−Q < α < Q(p−1)` for
    /// `p > 1`.
    pub fn in_ap(&self, p: f64) -> bool {
        let q = self.dim.qf();
        if p < 1.0 || self.alpha <= -q {
            return false;
        }
        if p == 1.0 {
            self.alpha <= 0.0
        } else {
            self.alpha < q * (p - 1.0)
        }
    }

    /// Supremal reverse-Hölder exponent of the power profile: `w^r` stays
    /// locally integrable iff `αr > −Q`, so `r_w = Q/|α|` for `α < 0` and
    /// `+∞` otherwise.
    pub fn reverse_holder_index(&self) -> f64 {
        if self.alpha < 0.0 {
            self.dim.qf() / -self.alpha
        } else {
            f64::INFINITY
        }
    }

    /// `w^γ` as a radial profile (a weight raised to a power).
    fn powered_profile(&self, gamma: f64) -> RadialProfile {
        let w = *self;
        RadialProfile::new(move |r| w.eval_radius(r).powf(gamma))
            .with_hint(gamma * self.zero_exponent())
            .with_breakpoints(self.breakpoints())
    }

    /// Whether `w^γ` fails to be integrable near the origin.
    fn singular_power(&self, gamma: f64) -> bool {
        gamma * self.zero_exponent() <= -self.dim.qf()
    }

    /// `w(B) = ∫_B w`. Central balls under a power weight use the closed
    /// form `ω_Q r^{Q+α}/(Q+α)`; other central balls use radial quadrature
    /// and off-centre balls Monte Carlo.
    pub fn ball_mass(&self, ball: &BallSpec, cfg: &McConfig) -> Result<Estimate> {
        self.power_integral(1.0, ball, cfg)
    }

    /// `∫_B w^γ`.
    pub fn power_integral(&self, gamma: f64, ball: &BallSpec, cfg: &McConfig) -> Result<Estimate> {
        let dim = ball.center.dim();
        if dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim.coords(), found: dim.coords() });
        }
        let origin_inside = ball.center.koranyi_norm() <= ball.radius;
        if origin_inside && self.singular_power(gamma) {
            return Err(Error::divergent(
                format!("w^{gamma} is not integrable at the origin (exponent {} ≤ −Q)", gamma * self.zero_exponent()),
                Some(0.0),
            ));
        }
        if ball.is_central() {
            let qa = dim.qf() + gamma * self.alpha;
            if self.kind == WeightKind::Power {
                return Ok(Estimate::exact(dim.sphere_area() * ball.radius.powf(qa) / qa));
            }
            return radial_integral(&self.powered_profile(gamma), dim, ball.radius);
        }
        let w = *self;
        let est = integrate_mc(move |x| w.eval(x).powf(gamma), &McRegion::Ball(ball.clone()), cfg)?;
        Ok(est.estimate())
    }
}

fn radial_integral(g: &RadialProfile, dim: HeisDim, r: f64) -> Result<Estimate> {
    crate::quad::integrate_radial(g, dim, 0.0, r, &QuadOptions::default())
}

/// Largest A_p ratio found on a ball family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApProbeReport {
    pub p: f64,
    pub max_ratio: f64,
    pub witness: BallSpec,
    pub balls_tested: usize,
    pub ratios: Vec<f64>,
}

/// Default probe family: centres at Korányi radius 0, ½, 1, 2, 4 (on the
/// horizontal and vertical axes) and radii `2^k`, `k ∈ [−3, 3]`.
pub fn default_ball_family(n: usize) -> Vec<BallSpec> {
    let dim = 2 * n + 1;
    let mut centers = vec![GroupPoint::zero(n)];
    for c in [0.5, 1.0, 2.0, 4.0] {
        let mut h = vec![0.0; dim];
        h[0] = c;
        centers.push(GroupPoint::new(h).expect("finite"));
        let mut v = vec![0.0; dim];
        v[dim - 1] = c * c;
        centers.push(GroupPoint::new(v).expect("finite"));
    }
    let mut out = Vec::new();
    for c in &centers {
        for k in -3..=3 {
            out.push(BallSpec::new(c.clone(), 2f64.powi(k)).expect("positive radius"));
        }
    }
    out
}

/// Points of `B(c, r)` where a radial weight is extremal along the ray
/// through the centre: the origin if it lies inside, and `c·δ_k(∓c)` with
/// `k = r/|c|_h`, which lie on the sphere of radius `r` about `c`.
fn essinf_probes(ball: &BallSpec) -> Vec<GroupPoint> {
    let c = &ball.center;
    let n = c.n();
    let mut out = Vec::new();
    let rho = c.koranyi_norm();
    if rho <= ball.radius {
        out.push(GroupPoint::zero(n));
    }
    if c.is_zero() {
        out.push(GroupPoint::on_axis(n, ball.radius));
    } else {
        let k = ball.radius / rho;
        let toward = c.mul(&c.dilated(k).inverse()).expect("same dimension");
        let away = c.mul(&c.dilated(k)).expect("same dimension");
        out.push(toward);
        out.push(away);
    }
    out
}

fn sampled_min(w: &WeightSpec, ball: &BallSpec, cfg: &McConfig) -> Result<f64> {
    let w2 = *w;
    Ok(integrate_mc(move |x| w2.eval(x), &McRegion::Ball(ball.clone()), cfg)?.min_sample)
}

fn ap_ratio(w: &WeightSpec, p: f64, ball: &BallSpec, cfg: &McConfig) -> Result<f64> {
    if w.is_constant() {
        return Ok(1.0);
    }
    let avg = w.ball_mass(ball, cfg)?.value / ball.volume();
    if p == 1.0 {
        let mut inf = if ball.is_central() && w.kind == WeightKind::Power {
            // Exact: |x|^α on B(0, r) has infimum 0 (α > 0) or r^α (α < 0).
            if w.alpha > 0.0 { 0.0 } else { ball.radius.powf(w.alpha) }
        } else {
            sampled_min(w, ball, cfg)?
        };
        for x in essinf_probes(ball) {
            inf = inf.min(w.eval(&x));
        }
        return Ok(if inf > 0.0 { avg / inf } else { f64::INFINITY });
    }
    let gamma = -1.0 / (p - 1.0);
    let dual = match w.power_integral(gamma, ball, cfg) {
        Ok(m) => m.value / ball.volume(),
        Err(e) if e.is_divergent() => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    Ok(avg * dual.powf(p - 1.0))
}

/// `max_B (avg_B w)(avg_B w^{−1/(p−1)})^{p−1}` over the family, or
/// `max_B avg_B w / essinf_B w` for `p = 1`.
pub fn ap_probe(w: &WeightSpec, p: f64, family: &[BallSpec], cfg: &McConfig) -> Result<ApProbeReport> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("A_p probe needs 1 ≤ p < ∞, got p = {p}")));
    }
    if family.is_empty() {
        return Err(Error::invalid("A_p probe needs a non-empty ball family"));
    }
    let ratios: Vec<f64> = par::map_range(family.len(), |i| ap_ratio(w, p, &family[i], &cfg.derived(i as u64)))
        .into_iter()
        .collect::<Result<_>>()?;
    let (best, max_ratio) = argmax(&ratios);
    Ok(ApProbeReport { p, max_ratio, witness: family[best].clone(), balls_tested: family.len(), ratios })
}

fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    (best, v[best])
}

/// `max_B (avg_B w^r)^{1/r} / avg_B w` over the family; `+∞` when `w^r`
/// is not integrable on some ball.
pub fn reverse_holder_probe(w: &WeightSpec, r: f64, family: &[BallSpec], cfg: &McConfig) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::invalid(format!("reverse Hölder probe needs r > 1, got r = {r}")));
    }
    if family.is_empty() {
        return Err(Error::invalid("reverse Hölder probe needs a non-empty ball family"));
    }
    let vals = par::map_range(family.len(), |i| -> Result<f64> {
        let ball = &family[i];
        let c = cfg.derived(i as u64);
        let high = match w.power_integral(r, ball, &c) {
            Ok(m) => m.value / ball.volume(),
            Err(e) if e.is_divergent() => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        };
        let avg = w.power_integral(1.0, ball, &c)?.value / ball.volume();
        Ok(high.powf(1.0 / r) / avg)
    });
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    Ok(argmax(&vals).1)
}

/// Outcome of the nested-ball mass comparison for `E = B(0, r/2) ⊂ B = B(0, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// `w(E)/w(B)` at each tested radius.
    pub ratios: Vec<(f64, f64)>,
    /// `|E|/|B| = 2^{−Q}`.
    pub measure_ratio: f64,
    pub lower_envelope: f64,
    pub upper_envelope: f64,
    /// `(|E|/|B|)^p ≤ w(E)/w(B) ≤ (|E|/|B|)^{(δ−1)/δ}` with unit constants.
    pub holds_unit: bool,
    /// Both envelopes calibrated on the first radius hold on all others.
    pub holds_calibrated: bool,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.holds_unit && self.holds_calibrated
    }
}

/// Compares `w(E)/w(B)` for nested central balls with the envelopes
/// `C₁(|E|/|B|)^p` and `C₂(|E|/|B|)^{(δ−1)/δ}`.
pub fn power_weight_sandwich_check(dim: HeisDim, alpha: f64, p: f64, delta: f64, radii: &[f64]) -> Result<SandwichReport> {
    let w = WeightSpec::power(dim, alpha)?;
    if !w.in_ap(p) {
        return Err(Error::invalid(format!("|x|^{alpha} is not an A_{p} weight (requires −Q < α < Q(p−1))")));
    }
    if !(delta > 1.0) {
        return Err(Error::invalid("sandwich check requires δ > 1"));
    }
    if radii.is_empty() {
        return Err(Error::invalid("sandwich check needs at least one radius"));
    }
    let cfg = McConfig::default();
    let mut ratios = Vec::with_capacity(radii.len());
    for &r in radii {
        let big = w.ball_mass(&BallSpec::central(dim.n(), r)?, &cfg)?.value;
        let small = w.ball_mass(&BallSpec::central(dim.n(), r / 2.0)?, &cfg)?.value;
        ratios.push((r, small / big));
    }
    let m = 2f64.powf(-dim.qf());
    let lower = m.powf(p);
    let upper = m.powf((delta - 1.0) / delta);
    let slack = 1e-12;
    let holds_unit = ratios.iter().all(|&(_, x)| lower <= x * (1.0 + slack) && x <= upper * (1.0 + slack));
    let c1 = ratios[0].1 / lower;
    let c2 = ratios[0].1 / upper;
    let holds_calibrated =
        ratios.iter().all(|&(_, x)| c1 * lower <= x * (1.0 + slack) && x <= c2 * upper * (1.0 + slack));
    Ok(SandwichReport { ratios, measure_ratio: m, lower_envelope: lower, upper_envelope: upper, holds_unit, holds_calibrated })
}

/// `∫_0^r g(ρ) dρ` helper exposed for radial oracles in tests and tools.
pub fn radial_mass(w: &WeightSpec, r: f64) -> Result<Estimate> {
    let dim = w.dim;
    let q1 = dim.qf() - 1.0;
    let w2 = *w;
    let e = integrate_1d(
        move |s| w2.eval_radius(s) * s.powf(q1),
        0.0,
        r,
        Some(w.zero_exponent() + q1),
        &w.breakpoints(),
        &QuadOptions::default(),
    )?;
    Ok(e.scale(dim.sphere_area()))
}
