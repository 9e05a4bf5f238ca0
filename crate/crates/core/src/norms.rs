//! Weighted central Morrey and central BMO (CMO) norms, evaluated as a
//! maximum over a grid of central balls.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::heis::{BallSpec, HeisDim};
use crate::par;
use crate::quad::{find_sign_changes, integrate_1d, integrate_mc, Estimate, McConfig, McRegion, QuadOptions};
use crate::weights::WeightSpec;

/// Exponents of a Morrey/CMO/theorem computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub p: f64,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub q: Option<f64>,
    pub lambda: f64,
    pub alpha: f64,
    pub delta: Option<f64>,
}

impl NormParams {
    pub fn morrey(p: f64, lambda: f64, alpha: f64) -> Self {
        NormParams { p, p1: None, p2: None, q: None, lambda, alpha, delta: None }
    }

    pub fn with_p1(mut self, p1: f64) -> Self {
        self.p1 = Some(p1);
        self
    }

    pub fn with_p2(mut self, p2: f64) -> Self {
        self.p2 = Some(p2);
        self
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = Some(q);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    /// Range checks shared by every computation: `1 ≤ p < ∞` (and the same
    /// for `p₁, p₂, q`), `λ < 0`, `α > −Q`, `δ > 1`.
    pub fn validate(&self, dim: HeisDim) -> Result<()> {
        let exps = [("p", Some(self.p)), ("p₁", self.p1), ("p₂", self.p2), ("q", self.q)];
        for (name, v) in exps {
            if let Some(v) = v {
                if !(v >= 1.0 && v.is_finite()) {
                    return Err(Error::invalid(format!("requires 1 ≤ {name} < ∞, got {name} = {v}")));
                }
            }
        }
        if !(self.lambda < 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("requires λ < 0, got λ = {}", self.lambda)));
        }
        if !(self.alpha > -dim.qf()) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("requires −Q < α, got α = {} with Q = {}", self.alpha, dim.q())));
        }
        if let Some(d) = self.delta {
            if !(d > 1.0) {
                return Err(Error::invalid(format!("requires δ > 1, got δ = {d}")));
            }
        }
        Ok(())
    }

    /// `−1/p ≤ λ < 0`, the range in which the Morrey norm is defined.
    pub fn check_morrey_range(p: f64, lambda: f64) -> Result<()> {
        if !(lambda >= -1.0 / p && lambda < 0.0) {
            return Err(Error::invalid(format!("requires −1/p ≤ λ < 0, got p = {p}, λ = {lambda}")));
        }
        Ok(())
    }

    /// `1/p = 1/p₁ + 1/p₂`.
    pub fn check_holder_split(&self) -> Result<(f64, f64)> {
        let (Some(p1), Some(p2)) = (self.p1, self.p2) else {
            return Err(Error::invalid("requires p₁ and p₂ with 1/p = 1/p₁ + 1/p₂"));
        };
        let gap = 1.0 / self.p - 1.0 / p1 - 1.0 / p2;
        if gap.abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "requires 1/p = 1/p₁ + 1/p₂, got 1/p = {:.6}, 1/p₁ + 1/p₂ = {:.6}",
                1.0 / self.p,
                1.0 / p1 + 1.0 / p2
            )));
        }
        Ok((p1, p2))
    }
}

/// Radii of the central balls over which `sup_{r>0}` is taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusGrid {
    pub r_values: Vec<f64>,
}

impl Default for RadiusGrid {
    fn default() -> Self {
        RadiusGrid::dyadic(-10, 10)
    }
}

impl RadiusGrid {
    pub fn new(r_values: Vec<f64>) -> Result<Self> {
        if r_values.is_empty() {
            return Err(Error::invalid("radius grid must not be empty"));
        }
        if r_values.iter().any(|r| !(r.is_finite() && *r > 0.0)) || r_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("radius grid must be positive and strictly increasing"));
        }
        Ok(RadiusGrid { r_values })
    }

    /// `2^k` for `k = kmin..=kmax`.
    pub fn dyadic(kmin: i32, kmax: i32) -> Self {
        RadiusGrid { r_values: (kmin..=kmax).map(|k| 2f64.powi(k)).collect() }
    }

    pub fn len(&self) -> usize {
        self.r_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub r: f64,
    pub value: f64,
    pub err: f64,
}

/// Grid maximum together with the per-radius table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub err: f64,
    pub argmax_r: f64,
    pub table: Vec<NormRow>,
    /// First radius at which the ball integral diverged; the norm is then
    /// infinite.
    pub divergent_at: Option<f64>,
}

impl NormResult {
    pub fn is_finite(&self) -> bool {
        self.divergent_at.is_none() && self.value.is_finite()
    }

    /// Largest relative deviation of the table from its mean.
    pub fn flatness(&self) -> f64 {
        let mean = self.table.iter().map(|r| r.value).sum::<f64>() / self.table.len() as f64;
        self.table.iter().map(|r| ((r.value - mean) / mean).abs()).fold(0.0, f64::max)
    }

    /// `r,value,err` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,value,err\n");
        for row in &self.table {
            let _ = writeln!(s, "{:e},{:e},{:e}", row.r, row.value, row.err);
        }
        s
    }

    fn assemble(grid: &RadiusGrid, rows: Vec<Result<Estimate>>) -> Result<Self> {
        let mut table = Vec::with_capacity(rows.len());
        let mut divergent_at = None;
        for (r, row) in grid.r_values.iter().zip(rows) {
            match row {
                Ok(e) => table.push(NormRow { r: *r, value: e.value, err: e.error }),
                Err(e) if e.is_divergent() => {
                    divergent_at.get_or_insert(*r);
                    table.push(NormRow { r: *r, value: f64::INFINITY, err: f64::INFINITY });
                }
                Err(e) => return Err(e),
            }
        }
        let mut best = 0;
        for (i, row) in table.iter().enumerate() {
            if row.value > table[best].value || row.value.is_nan() {
                best = i;
            }
        }
        let (value, err) = if divergent_at.is_some() { (f64::INFINITY, f64::INFINITY) } else { (table[best].value, table[best].err) };
        Ok(NormResult { value, err, argmax_r: table[best].r, table, divergent_at })
    }
}

fn check_weight(w: &WeightSpec, dim: HeisDim) -> Result<()> {
    if w.dim != dim {
        return Err(Error::DimensionMismatch { expected: dim.coords(), found: w.dim.coords() });
    }
    Ok(())
}

/// `∫_{B(0,r)} h(|x|) w(x) dx` for a radial `h` by quadrature. The
/// variable is rescaled to `[0, 1]` so the absolute tolerance does not
/// dominate for small balls.
fn radial_ball_integral<H: Fn(f64) -> f64>(
    h: H,
    h_zero_exponent: Option<f64>,
    breaks: &[f64],
    w: &WeightSpec,
    r: f64,
) -> Result<Estimate> {
    let dim = w.dim;
    let q1 = dim.qf() - 1.0;
    let mut bk: Vec<f64> = breaks.iter().chain(w.breakpoints().iter()).map(|b| b / r).collect();
    bk.retain(|b| b.is_finite() && *b > 0.0);
    let hint = h_zero_exponent.filter(|t| t.is_finite()).map(|t| t + w.zero_exponent() + q1);
    let wr = w.eval_radius(r);
    let wr = if wr.is_finite() && wr > 0.0 { wr } else { 1.0 };
    let e = integrate_1d(
        |u| {
            let s = r * u;
            let v = h(s);
            if v == 0.0 {
                0.0
            } else {
                v * (w.eval_radius(s) / wr) * u.powf(q1)
            }
        },
        0.0,
        1.0,
        hint,
        &bk,
        &QuadOptions::default(),
    )?;
    Ok(e.scale(dim.sphere_area() * r.powf(q1 + 1.0) * wr))
}

/// `∫_B |f|^p w`.
fn power_integral(f: &ScalarField, p: f64, w: &WeightSpec, ball: &BallSpec, cfg: &McConfig) -> Result<Estimate> {
    if matches!(f, ScalarField::Constant(c) if *c == 0.0) {
        return Ok(Estimate::exact(0.0));
    }
    if ball.is_central() && f.is_radial() {
        let hint = f.zero_exponent().map(|t| p * t);
        let h = |s: f64| f.eval_radius(s).expect("radial").abs().powf(p);
        return radial_ball_integral(h, hint, &f.radial_breakpoints(), w, ball.radius);
    }
    let est = integrate_mc(|x| f.eval(x).abs().powf(p) * w.eval(x), &McRegion::Ball(ball.clone()), cfg)?;
    Ok(est.estimate())
}

fn root(e: Estimate, p: f64) -> Estimate {
    let v = e.value.powf(1.0 / p);
    let err = if e.value > 0.0 { v * e.error / (p * e.value) } else { e.error.powf(1.0 / p) };
    Estimate::new(v, err)
}

/// `‖f‖_{L^p(B; w)} = (∫_B |f|^p w)^{1/p}`; exact radial path for central
/// balls and radial `f`, Monte Carlo otherwise.
pub fn lp_ball_norm(f: &ScalarField, p: f64, w: &WeightSpec, ball: &BallSpec, cfg: &McConfig) -> Result<Estimate> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("requires 1 ≤ p < ∞, got p = {p}")));
    }
    check_weight(w, ball.center.dim())?;
    Ok(root(power_integral(f, p, w, ball, cfg)?, p))
}

/// `max_r (w(B(0,r))^{−(1+pλ)} ∫_{B(0,r)} |f|^p w)^{1/p}` over the grid.
pub fn morrey_norm(f: &ScalarField, p: f64, lambda: f64, w: &WeightSpec, grid: &RadiusGrid, cfg: &McConfig) -> Result<NormResult> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("requires 1 ≤ p < ∞, got p = {p}")));
    }
    NormParams::check_morrey_range(p, lambda)?;
    let dim = w.dim;
    let rows = par::map_range(grid.len(), |i| -> Result<Estimate> {
        let r = grid.r_values[i];
        let ball = BallSpec::central(dim.n(), r)?;
        let c = cfg.derived(i as u64);
        let mass = w.ball_mass(&ball, &c)?.value;
        let e = power_integral(f, p, w, &ball, &c)?;
        Ok(root(e.scale(mass.powf(-(1.0 + p * lambda))), p))
    });
    NormResult::assemble(grid, rows)
}

/// [`morrey_norm`] with `(p, λ, α)` taken from `prm`.
pub fn morrey_norm_with(f: &ScalarField, prm: &NormParams, dim: HeisDim, grid: &RadiusGrid, cfg: &McConfig) -> Result<NormResult> {
    prm.validate(dim)?;
    let w = WeightSpec::power(dim, prm.alpha)?;
    morrey_norm(f, prm.p, prm.lambda, &w, grid, cfg)
}

/// Unweighted mean `b_B = |B|⁻¹ ∫_B b` over a central ball.
pub fn central_mean(b: &ScalarField, dim: HeisDim, r: f64, cfg: &McConfig) -> Result<Estimate> {
    let vol = dim.ball_volume(r);
    let ball = BallSpec::central(dim.n(), r)?;
    if b.is_radial() {
        let h = |s: f64| b.eval_radius(s).expect("radial");
        let e = radial_ball_integral(h, b.zero_exponent(), &b.radial_breakpoints(), &WeightSpec::unweighted(dim), r)?;
        return Ok(e.scale(1.0 / vol));
    }
    Ok(integrate_mc(|x| b.eval(x), &McRegion::Ball(ball), cfg)?.estimate().scale(1.0 / vol))
}

/// `max_r (w(B)^{−1} ∫_B |b − b_B|^{p₂} w)^{1/p₂}` over central balls,
/// with `b_B` the unweighted mean.
pub fn cmo_norm(b: &ScalarField, p2: f64, w: &WeightSpec, grid: &RadiusGrid, cfg: &McConfig) -> Result<NormResult> {
    if !(p2 >= 1.0 && p2.is_finite()) {
        return Err(Error::invalid(format!("requires 1 ≤ p₂ < ∞, got p₂ = {p2}")));
    }
    let dim = w.dim;
    let rows = par::map_range(grid.len(), |i| -> Result<Estimate> {
        let r = grid.r_values[i];
        let c = cfg.derived(i as u64);
        let ball = BallSpec::central(dim.n(), r)?;
        let mean = central_mean(b, dim, r, &c)?.value;
        let mass = w.ball_mass(&ball, &c)?.value;
        let osc = if b.is_radial() {
            let h = |s: f64| (b.eval_radius(s).expect("radial") - mean).abs().powf(p2);
            let mut breaks = b.radial_breakpoints();
            breaks.extend(find_sign_changes(|s| b.eval_radius(s).expect("radial") - mean, r * 2f64.powi(-40), r, 8));
            let hint = b.zero_exponent().map(|t| p2 * t.min(0.0));
            radial_ball_integral(h, hint, &breaks, w, r)?
        } else {
            integrate_mc(|x| (b.eval(x) - mean).abs().powf(p2) * w.eval(x), &McRegion::Ball(ball), &c)?.estimate()
        };
        Ok(root(osc.scale(1.0 / mass), p2))
    });
    NormResult::assemble(grid, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{E, PI};

    #[test]
    fn lp_examples() {
        let d = HeisDim::h1();
        let w = WeightSpec::unweighted(d);
        let b = BallSpec::central(1, 1.0).unwrap();
        let cfg = McConfig::default();
        assert_relative_eq!(lp_ball_norm(&ScalarField::constant(1.0), 2.0, &w, &b, &cfg).unwrap().value, PI, max_relative = 1e-10);
        let v = lp_ball_norm(&ScalarField::power(-1.0), 2.0, &w, &b, &cfg).unwrap().value;
        assert_relative_eq!(v, (2.0 * PI * PI).sqrt(), max_relative = 1e-9);
        assert_eq!(lp_ball_norm(&ScalarField::zero(), 2.0, &w, &b, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn extremizer_table_is_flat() {
        let d = HeisDim::h1();
        let w = WeightSpec::unweighted(d);
        let res = morrey_norm(&ScalarField::power(-1.0), 2.0, -0.25, &w, &RadiusGrid::default(), &McConfig::default()).unwrap();
        assert_relative_eq!(res.value, (2.0 * PI).sqrt(), max_relative = 1e-8);
        assert!(res.flatness() < 1e-8);
        assert!(res.to_csv().starts_with("r,value,err\n"));
    }

    #[test]
    fn constant_grows() {
        let d = HeisDim::h1();
        let w = WeightSpec::unweighted(d);
        let res = morrey_norm(&ScalarField::constant(1.0), 2.0, -0.25, &w, &RadiusGrid::dyadic(-3, 3), &McConfig::default()).unwrap();
        assert!(res.table.windows(2).all(|p| p[1].value > p[0].value));
        assert_eq!(res.argmax_r, 8.0);
    }

    #[test]
    fn divergence_poisons() {
        let d = HeisDim::h1();
        let w = WeightSpec::unweighted(d);
        // |x|^{-2} squared is |x|^{-4}: not integrable at 0 in Q = 4.
        let res = morrey_norm(&ScalarField::power(-2.0), 2.0, -0.25, &w, &RadiusGrid::dyadic(-1, 1), &McConfig::default()).unwrap();
        assert!(!res.is_finite());
        assert_eq!(res.divergent_at, Some(0.5));
    }

    #[test]
    fn log_mean_and_cmo() {
        let d = HeisDim::h1();
        for r in [0.5, 1.0, 3.0] {
            let m = central_mean(&ScalarField::log_norm(), d, r, &McConfig::default()).unwrap().value;
            assert!((m - (r.ln() - 0.25)).abs() < 1e-9, "{m}");
        }
        let res = cmo_norm(&ScalarField::log_norm(), 1.0, &WeightSpec::unweighted(d), &RadiusGrid::dyadic(-2, 2), &McConfig::default()).unwrap();
        assert_relative_eq!(res.value, 1.0 / (2.0 * E), max_relative = 1e-7);
    }

    #[test]
    fn holder_split_message() {
        let prm = NormParams::morrey(2.0, -0.25, 0.0).with_p1(3.0).with_p2(3.0);
        let e = prm.check_holder_split().unwrap_err().to_string();
        assert!(e.contains("1/p = 1/p₁ + 1/p₂"), "{e}");
    }
}
