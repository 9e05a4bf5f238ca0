//! Integration over ℍⁿ.
//!
//! * [`integrate_1d`]: adaptive composite 15-point Gauss–Legendre on a finite
//!   core, with dyadic shells toward an endpoint at `0` or `+∞`. Shell
//!   contributions that fail to decay geometrically are reported as
//!   divergence.
//! * [`integrate_radial`]: `∫_{a<|x|_h<b} g(|x|_h) dx = ω_Q ∫_a^b g(ρ) ρ^{Q−1} dρ`.
//! * [`integrate_mc`]: seeded Monte Carlo stratified over log-spaced Korányi
//!   shells (or slabs, for coordinate boxes).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heis::{dilate_in_place, koranyi, mul_coords, BallSpec, Coords, GroupPoint, HeisDim};
use crate::par;

/// A value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Estimate { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, error: 0.0 }
    }

    pub fn scale(self, c: f64) -> Self {
        Estimate { value: c * self.value, error: c.abs() * self.error }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate { value: self.value + o.value, error: self.error + o.error }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
    /// Dyadic shells allowed toward each improper endpoint.
    pub max_shells: usize,
    /// Shells whose successive ratio stays at or above this are divergent.
    pub ratio_threshold: f64,
    pub ratio_window: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            max_panels: 1 << 14,
            max_shells: 1000,
            ratio_threshold: 0.99,
            ratio_window: 6,
        }
    }
}

struct GaussRule {
    nodes: [f64; 15],
    weights: [f64; 15],
}

/// Nodes and weights of the 15-point Gauss–Legendre rule on [−1, 1],
/// computed once by Newton iteration on P₁₅.
fn gauss15() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| {
        const N: usize = 15;
        let mut nodes = [0.0; N];
        let mut weights = [0.0; N];
        for i in 0..N {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=N {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussRule { nodes, weights }
    })
}

fn gl15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let rule = gauss15();
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        s += w * f(m + h * x);
    }
    s * h
}

struct Panel {
    a: f64,
    b: f64,
    left: f64,
    right: f64,
    err: f64,
}

impl Panel {
    fn new<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64) -> Self {
        let m = 0.5 * (a + b);
        let (left, right) = (gl15(f, a, m), gl15(f, m, b));
        Panel { a, b, left, right, err: (whole - left - right).abs() }
    }
    fn value(&self) -> f64 {
        self.left + self.right
    }
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive Gauss–Legendre on the finite interval `[a, b]`, with
/// the interval pre-split at `breaks`.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], opts: &QuadOptions) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("adaptive quadrature needs a finite interval"));
    }
    if a == b {
        return Ok(Estimate::exact(0.0));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&c| c > lo && c < hi).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(hi);

    let mut heap = BinaryHeap::new();
    for w in cuts.windows(2) {
        let whole = gl15(f, w[0], w[1]);
        heap.push(Panel::new(f, w[0], w[1], whole));
    }
    loop {
        let (mut total, mut err, mut abs_total) = (0.0, 0.0, 0.0);
        for p in heap.iter() {
            total += p.value();
            err += p.err;
            abs_total += p.left.abs() + p.right.abs();
        }
        if !total.is_finite() || !err.is_finite() {
            let at = heap.iter().find(|p| !p.value().is_finite()).map(|p| 0.5 * (p.a + p.b));
            return Err(Error::divergent("integrand is not finite on the interval", at));
        }
        // Rounding floor: panel sums cannot be resolved below a few ulps.
        let err = err + 64.0 * f64::EPSILON * abs_total;
        if err <= (opts.rel_tol * total.abs()).max(opts.abs_tol) {
            return Ok(Estimate::new(sign * total, err));
        }
        if heap.len() >= opts.max_panels {
            return Err(Error::divergent(
                format!("adaptive quadrature did not reach tolerance after {} panels (error {err:.3e})", heap.len()),
                None,
            ));
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Panel narrower than floating-point resolution; accept it as is.
            return Ok(Estimate::new(sign * total, err));
        }
        heap.push(Panel::new(f, worst.a, m, worst.left));
        heap.push(Panel::new(f, m, worst.b, worst.right));
    }
}

/// `∫_a^b f(x) dx` for `0 ≤ a < b ≤ ∞`.
///
/// A lower endpoint at exactly `0` and an upper endpoint at `+∞` are
/// handled by dyadic shells (equivalently, unit-width panels after the
/// substitution `ρ = e^u`). `zero_exponent_hint` is `τ` in `f(ρ) ~ ρ^τ` as
/// `ρ → 0`; `τ ≤ −1` is reported as divergence without evaluating.
pub fn integrate_1d<F>(
    f: F,
    a: f64,
    b: f64,
    zero_exponent_hint: Option<f64>,
    breaks: &[f64],
    opts: &QuadOptions,
) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    if a.is_nan() || b.is_nan() || a < 0.0 || a > b || a.is_infinite() {
        return Err(Error::invalid(format!("integration bounds must satisfy 0 ≤ a ≤ b, got ({a}, {b})")));
    }
    if a == b {
        return Ok(Estimate::exact(0.0));
    }
    let graded_low = a == 0.0;
    let graded_high = b.is_infinite();
    if graded_low {
        if let Some(tau) = zero_exponent_hint {
            if tau <= -1.0 {
                return Err(Error::divergent(format!("integrand ~ ρ^{tau} is not integrable at 0"), Some(0.0)));
            }
        }
    }
    let mut positive: Vec<f64> = breaks.iter().copied().filter(|&c| c > a && c < b && c.is_finite()).collect();
    positive.sort_by(f64::total_cmp);

    let c0 = if graded_low {
        let top = if graded_high { 1.0 } else { b };
        0.5 * positive.first().copied().unwrap_or(top).min(top)
    } else {
        a
    };
    let c1 = if graded_high {
        2.0 * positive.last().copied().unwrap_or(1.0).max(c0).max(1.0)
    } else {
        b
    };

    let core = adaptive(&f, c0, c1, &positive, opts)?;
    let mut total = core;
    if graded_low {
        // A hint above −1 settles convergence, so slow early shells (log
        // factors) are not read as divergence.
        let trusted = zero_exponent_hint.is_some_and(|t| t > -1.0);
        let tail = graded_tail(
            &f,
            |k| (c0 * 0.5f64.powi(k as i32 + 1), c0 * 0.5f64.powi(k as i32)),
            &positive,
            core.value,
            trusted,
            opts,
        )
        .map_err(|e| relocate(e, 0.0))?;
        total = total + tail;
    }
    if graded_high {
        let tail = graded_tail(&f, |k| (c1 * 2f64.powi(k as i32), c1 * 2f64.powi(k as i32 + 1)), &positive, total.value, false, opts)
            .map_err(|e| relocate(e, f64::INFINITY))?;
        total = total + tail;
    }
    Ok(total)
}

fn relocate(e: Error, at: f64) -> Error {
    match e {
        Error::Divergent { reason, at: None } => Error::Divergent { reason, at: Some(at) },
        other => other,
    }
}

fn graded_tail<F, S>(f: &F, shell: S, breaks: &[f64], core: f64, trusted: bool, opts: &QuadOptions) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
    S: Fn(usize) -> (f64, f64),
{
    const MIN_SHELLS: usize = 4;
    let mut sum = Estimate::exact(0.0);
    let mut mags: Vec<f64> = Vec::new();
    for k in 0..opts.max_shells {
        let (lo, hi) = shell(k);
        if !(lo > 0.0 && hi.is_finite() && lo < hi) {
            break;
        }
        let piece = adaptive(f, lo, hi, breaks, opts)?;
        if !piece.value.is_finite() {
            return Err(Error::divergent("shell contribution is not finite", Some(lo)));
        }
        sum = sum + piece;
        mags.push(piece.value.abs());
        let running = (core + sum.value).abs();

        let w = opts.ratio_window;
        if !trusted && mags.len() > w {
            let tail = &mags[mags.len() - w - 1..];
            let slow = tail.windows(2).all(|p| p[0] > 0.0 && p[1] >= opts.ratio_threshold * p[0]);
            if slow {
                return Err(Error::divergent(
                    format!("dyadic shells decay slower than ratio {} over {w} shells", opts.ratio_threshold),
                    None,
                ));
            }
        }
        if k + 1 >= MIN_SHELLS {
            let last3 = &mags[mags.len() - 3..];
            if last3.iter().all(|&m| m == 0.0) {
                return Ok(sum);
            }
            let ratio = last3.windows(2).map(|p| if p[0] > 0.0 { p[1] / p[0] } else { 1.0 }).fold(0.0f64, f64::max);
            if trusted && ratio < 1.0 && last3.iter().all(|&m| m > 0.0) {
                // Known integrable power law: shells are geometric, so the
                // tail is summed in closed form even when the ratio is near 1.
                let (r1, r2) = (last3[1] / last3[0], last3[2] / last3[1]);
                let last = piece.value;
                let tail = last * r2 / (1.0 - r2);
                let spread = last.abs() * (r2 - r1).abs() / ((1.0 - r2) * (1.0 - r2));
                if spread <= 0.05 * (opts.rel_tol * (running + tail.abs())).max(opts.abs_tol) {
                    return Ok(Estimate::new(sum.value + tail, sum.error + spread));
                }
            }
            if ratio < opts.ratio_threshold {
                // Geometric extrapolation of the remaining shells; exact for
                // power-law integrands, and held well below tolerance anyway.
                let last = piece.value;
                let tail = last.abs() * ratio / (1.0 - ratio);
                if tail <= 0.05 * (opts.rel_tol * running).max(opts.abs_tol) {
                    return Ok(Estimate::new(sum.value + last * ratio / (1.0 - ratio), sum.error + tail));
                }
            }
        }
    }
    Err(Error::divergent(format!("no convergence within {} dyadic shells", opts.max_shells), None))
}

/// A radial integrand `g(ρ)`, optionally with its behaviour `g ~ ρ^σ` at 0
/// and radii where it jumps.
#[derive(Clone)]
pub struct RadialProfile {
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub singular_exponent_hint: Option<f64>,
    pub breakpoints: Vec<f64>,
}

impl RadialProfile {
    pub fn new(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RadialProfile { g: Arc::new(g), singular_exponent_hint: None, breakpoints: Vec::new() }
    }

    pub fn with_hint(mut self, sigma: f64) -> Self {
        self.singular_exponent_hint = Some(sigma);
        self
    }

    pub fn with_breakpoints(mut self, b: Vec<f64>) -> Self {
        self.breakpoints = b;
        self
    }

    pub fn eval(&self, rho: f64) -> f64 {
        (self.g)(rho)
    }
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialProfile")
            .field("singular_exponent_hint", &self.singular_exponent_hint)
            .field("breakpoints", &self.breakpoints)
            .finish_non_exhaustive()
    }
}

/// `∫_{a<|x|_h<b} g(|x|_h) dx = ω_Q ∫_a^b g(ρ) ρ^{Q−1} dρ`.
pub fn integrate_radial(g: &RadialProfile, dim: HeisDim, a: f64, b: f64, opts: &QuadOptions) -> Result<Estimate> {
    let q1 = dim.qf() - 1.0;
    let hint = g.singular_exponent_hint.map(|s| s + q1);
    let est = integrate_1d(|r| g.eval(r) * r.powf(q1), a, b, hint, &g.breakpoints, opts)?;
    Ok(est.scale(dim.sphere_area()))
}

/// Radii in `[lo, hi]` (both finite and positive) where `h` changes sign,
/// located by a log-spaced scan followed by bisection.
pub fn find_sign_changes<H: Fn(f64) -> f64>(h: H, lo: f64, hi: f64, per_octave: usize) -> Vec<f64> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Vec::new();
    }
    let steps = (((hi / lo).log2() * per_octave as f64).ceil() as usize).clamp(1, 20_000);
    let ratio = (hi / lo).powf(1.0 / steps as f64);
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut h0 = h(x0);
    for i in 1..=steps {
        let x1 = if i == steps { hi } else { lo * ratio.powi(i as i32) };
        let h1 = h(x1);
        if h0 == 0.0 {
            out.push(x0);
        } else if h0.is_finite() && h1.is_finite() && h0.signum() != h1.signum() && h1 != 0.0 {
            let (mut a, mut b, mut ha) = (x0, x1, h0);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                let hm = h(m);
                if hm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if hm.signum() == ha.signum() {
                    a = m;
                    ha = hm;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        x0 = x1;
        h0 = h1;
    }
    if h0 == 0.0 {
        out.push(x0);
    }
    out.dedup();
    out
}

/// Monte Carlo configuration: total sample budget and the number of strata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub seed: u64,
    pub samples: usize,
    pub strata: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { seed: 0x5EED, samples: 1 << 16, strata: 32 }
    }
}

impl McConfig {
    pub fn new(seed: u64, samples: usize, strata: usize) -> Result<Self> {
        let c = McConfig { seed, samples, strata };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strata == 0 || self.samples < self.strata {
            return Err(Error::invalid(format!(
                "Monte Carlo needs samples ≥ strata ≥ 1, got samples={} strata={}",
                self.samples, self.strata
            )));
        }
        Ok(())
    }

    /// Same budget with a seed derived from `(self.seed, stream)`.
    pub fn derived(&self, stream: u64) -> Self {
        let mut s = self.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        s ^= s >> 31;
        McConfig { seed: s.wrapping_mul(0xBF58_476D_1CE4_E5B9), ..*self }
    }

    pub fn with_samples(&self, samples: usize) -> Self {
        McConfig { samples, ..*self }
    }
}

pub type Mask = Arc<dyn Fn(&GroupPoint) -> bool + Send + Sync>;

#[derive(Clone)]
pub enum McRegion {
    /// Korányi ball `B(c, r) = c · B(0, r)`, stratified in shells about `c`.
    Ball(BallSpec),
    /// Central annulus `{inner ≤ |x|_h < outer}` in ℍⁿ.
    Annulus { n: usize, inner: f64, outer: f64 },
    /// Coordinate box with Lebesgue measure, stratified in slabs along x₁.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `base` restricted to the points where `mask` holds.
    Masked { base: std::boxed::Box<McRegion>, mask: Mask },
}

impl fmt::Debug for McRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McRegion::Ball(b) => f.debug_tuple("Ball").field(b).finish(),
            McRegion::Annulus { n, inner, outer } => {
                f.debug_struct("Annulus").field("n", n).field("inner", inner).field("outer", outer).finish()
            }
            McRegion::Box { lo, hi } => f.debug_struct("Box").field("lo", lo).field("hi", hi).finish(),
            McRegion::Masked { base, .. } => f.debug_struct("Masked").field("base", base).finish_non_exhaustive(),
        }
    }
}

impl McRegion {
    pub fn masked(self, mask: impl Fn(&GroupPoint) -> bool + Send + Sync + 'static) -> Self {
        McRegion::Masked { base: std::boxed::Box::new(self), mask: Arc::new(mask) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Smallest and largest integrand values seen.
    pub min_sample: f64,
    pub max_sample: f64,
}

impl McEstimate {
    fn empty() -> Self {
        McEstimate { value: 0.0, std_error: 0.0, samples: 0, min_sample: f64::INFINITY, max_sample: f64::NEG_INFINITY }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.value, self.std_error)
    }
}

enum Stratum {
    Shell { center: Option<Coords>, n: usize, inner: f64, outer: f64 },
    Slab { lo: Vec<f64>, hi: Vec<f64> },
}

impl Stratum {
    fn measure(&self, omega: f64, q: i32) -> f64 {
        match self {
            Stratum::Shell { inner, outer, .. } => omega * (outer.powi(q) - inner.powi(q)),
            Stratum::Slab { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, q: i32) -> Coords {
        match self {
            Stratum::Shell { center, n, inner, outer } => {
                let (a, b) = (inner.powi(q), outer.powi(q));
                let rho = (a + rng.random::<f64>() * (b - a)).powf(1.0 / q as f64);
                let mut x = koranyi_direction(rng, *n);
                dilate_in_place(&mut x, rho);
                match center {
                    Some(c) => mul_coords(c, &x),
                    None => x,
                }
            }
            Stratum::Slab { lo, hi } => lo.iter().zip(hi).map(|(a, b)| a + rng.random::<f64>() * (b - a)).collect(),
        }
    }
}

/// A point of the unit Korányi sphere distributed by the polar-coordinate
/// surface measure: uniform in the unit ball by box rejection, then pushed
/// to the sphere with `δ_{1/|z|_h}`.
fn koranyi_direction(rng: &mut ChaCha8Rng, n: usize) -> Coords {
    loop {
        let z: Coords = (0..2 * n + 1).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let r = koranyi(&z);
        if r < 1.0 && r > 1e-12 {
            let mut z = z;
            dilate_in_place(&mut z, 1.0 / r);
            return z;
        }
    }
}

fn shell_edges(inner: f64, outer: f64, strata: usize) -> Vec<f64> {
    if strata == 1 {
        return vec![inner, outer];
    }
    if inner > 0.0 {
        let r = outer / inner;
        return (0..=strata).map(|i| if i == strata { outer } else { inner * r.powf(i as f64 / strata as f64) }).collect();
    }
    let first = outer * 2f64.powf(-(strata as f64) / 4.0);
    let r = outer / first;
    let mut e = vec![0.0];
    for i in 0..strata {
        e.push(if i + 1 == strata { outer } else { first * r.powf(i as f64 / (strata - 1) as f64) });
    }
    e
}

fn strata_for(region: &McRegion, count: usize) -> Result<(Vec<Stratum>, HeisDim)> {
    Ok(match region {
        McRegion::Ball(b) => {
            let n = b.center.n();
            let center = if b.center.is_zero() { None } else { Some(Coords::from_slice(b.center.coords())) };
            let edges = shell_edges(0.0, b.radius, count);
            let s = edges
                .windows(2)
                .map(|w| Stratum::Shell { center: center.clone(), n, inner: w[0], outer: w[1] })
                .collect();
            (s, HeisDim::new(n)?)
        }
        McRegion::Annulus { n, inner, outer } => {
            if !(*inner >= 0.0 && outer >= inner && outer.is_finite()) {
                return Err(Error::invalid(format!("bad annulus ({inner}, {outer})")));
            }
            let edges = shell_edges(*inner, *outer, count);
            let s = edges.windows(2).map(|w| Stratum::Shell { center: None, n: *n, inner: w[0], outer: w[1] }).collect();
            (s, HeisDim::new(*n)?)
        }
        McRegion::Box { lo, hi } => {
            if lo.len() != hi.len() || lo.len() < 3 || lo.len() % 2 == 0 {
                return Err(Error::invalid("box corners must both have 2n+1 coordinates"));
            }
            if lo.iter().zip(hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
                return Err(Error::invalid("box needs finite lo ≤ hi"));
            }
            let width = (hi[0] - lo[0]) / count as f64;
            let s = (0..count)
                .map(|k| {
                    let mut l = lo.clone();
                    let mut h = hi.clone();
                    l[0] = lo[0] + width * k as f64;
                    h[0] = if k + 1 == count { hi[0] } else { lo[0] + width * (k + 1) as f64 };
                    Stratum::Slab { lo: l, hi: h }
                })
                .collect();
            (s, HeisDim::new((lo.len() - 1) / 2)?)
        }
        McRegion::Masked { base, .. } => strata_for(base, count)?,
    })
}

fn masks_of(region: &McRegion) -> Vec<Mask> {
    let mut out = Vec::new();
    let mut r = region;
    while let McRegion::Masked { base, mask } = r {
        out.push(mask.clone());
        r = base;
    }
    out
}

/// Stratified Monte Carlo estimate of `∫_region f`.
///
/// Samples are allocated to strata in proportion to their measure (at
/// least two each). Every stratum draws from its own ChaCha stream, and the
/// strata are reduced in a fixed order, so the result depends only on
/// `cfg` and never on the thread count.
pub fn integrate_mc<F>(f: F, region: &McRegion, cfg: &McConfig) -> Result<McEstimate>
where
    F: Fn(&GroupPoint) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let (strata, dim) = strata_for(region, cfg.strata)?;
    let masks = masks_of(region);
    let q = dim.q() as i32;
    let omega = dim.unit_ball_volume();
    let measures: Vec<f64> = strata.iter().map(|s| s.measure(omega, q)).collect();
    let total: f64 = measures.iter().sum();
    if !(total > 0.0) {
        return Ok(McEstimate { samples: 0, ..McEstimate::empty() }.zeroed());
    }
    let counts: Vec<usize> =
        measures.iter().map(|m| ((cfg.samples as f64 * m / total).round() as usize).max(2)).collect();

    let per_stratum = par::map_range(strata.len(), |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64);
        let (mut mean, mut m2) = (0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut bad = None;
        for i in 0..counts[k] {
            let x = GroupPoint::from_coords(strata[k].sample(&mut rng, q));
            let v = if masks.iter().all(|m| m(&x)) { f(&x) } else { 0.0 };
            if !v.is_finite() && bad.is_none() {
                bad = Some(x.koranyi_norm());
            }
            lo = lo.min(v);
            hi = hi.max(v);
            let d = v - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (v - mean);
        }
        (mean, m2 / (counts[k] - 1) as f64, lo, hi, bad)
    });

    let mut est = McEstimate::empty();
    let mut var = 0.0;
    for (k, (mean, s2, lo, hi, bad)) in per_stratum.into_iter().enumerate() {
        if let Some(r) = bad {
            return Err(Error::divergent("integrand is not finite at a sample point", Some(r)));
        }
        est.value += measures[k] * mean;
        var += measures[k] * measures[k] * s2 / counts[k] as f64;
        est.samples += counts[k];
        est.min_sample = est.min_sample.min(lo);
        est.max_sample = est.max_sample.max(hi);
    }
    est.std_error = var.sqrt();
    Ok(est)
}

impl McEstimate {
    fn zeroed(mut self) -> Self {
        self.min_sample = 0.0;
        self.max_sample = 0.0;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gauss_rule_is_exact_for_degree_29() {
        let rule = gauss15();
        let s: f64 = rule.weights.iter().sum();
        assert_relative_eq!(s, 2.0, max_relative = 1e-14);
        let v = gl15(&|x: f64| x.powi(28), -1.0, 1.0);
        assert_relative_eq!(v, 2.0 / 29.0, max_relative = 1e-13);
    }

    #[test]
    fn finite_interval() {
        let e = integrate_1d(|x| x.sin(), 0.5, PI, None, &[], &QuadOptions::default()).unwrap();
        assert_relative_eq!(e.value, 1.0 + 0.5f64.cos(), max_relative = 1e-10);
    }

    #[test]
    fn jump_without_breakpoint() {
        let e = adaptive(&|x: f64| if x < 0.3 { 1.0 } else { 0.0 }, 0.0, 1.0, &[], &QuadOptions::default()).unwrap();
        assert!((e.value - 0.3).abs() < 1e-8);
    }

    #[test]
    fn singular_at_zero() {
        let e = integrate_1d(|x| x.powf(-0.5), 0.0, 1.0, None, &[], &QuadOptions::default()).unwrap();
        assert_relative_eq!(e.value, 2.0, max_relative = 1e-8);
        let e = integrate_1d(|x| -x.ln(), 0.0, 1.0, None, &[], &QuadOptions::default()).unwrap();
        assert_relative_eq!(e.value, 1.0, max_relative = 1e-8);
    }

    #[test]
    fn infinite_range() {
        let e = integrate_1d(|x| (-x).exp(), 0.0, f64::INFINITY, None, &[], &QuadOptions::default()).unwrap();
        assert_relative_eq!(e.value, 1.0, max_relative = 1e-8);
        let e = integrate_1d(|x| x.powi(-5), 1.0, f64::INFINITY, None, &[], &QuadOptions::default()).unwrap();
        assert_relative_eq!(e.value, 0.25, max_relative = 1e-8);
    }

    #[test]
    fn divergence_is_signalled() {
        let o = QuadOptions::default();
        let e = integrate_1d(|x| 1.0 / x, 0.0, 1.0, None, &[], &o).unwrap_err();
        assert!(e.is_divergent());
        let e = integrate_1d(|x| x.powf(-1.2), 0.0, 1.0, None, &[], &o).unwrap_err();
        assert!(e.is_divergent());
        let e = integrate_1d(|x| 1.0 / (x * (1.0 + (1.0 / x).log2())), 0.0, 1.0, None, &[], &o).unwrap_err();
        assert!(e.is_divergent());
        let e = integrate_1d(|x| 1.0 / x, 1.0, f64::INFINITY, None, &[], &o).unwrap_err();
        assert!(matches!(e, Error::Divergent { at: Some(a), .. } if a.is_infinite()));
        let e = integrate_1d(|x| x, 0.0, 1.0, Some(-1.0), &[], &o).unwrap_err();
        assert!(e.is_divergent());
    }

    #[test]
    fn radial_examples() {
        let d = HeisDim::h1();
        let o = QuadOptions::default();
        let one = RadialProfile::new(|_| 1.0);
        assert_relative_eq!(integrate_radial(&one, d, 0.0, 1.0, &o).unwrap().value, PI * PI, max_relative = 1e-9);
        let inv2 = RadialProfile::new(|r: f64| r.powi(-2)).with_hint(-2.0);
        assert_relative_eq!(integrate_radial(&inv2, d, 0.0, 1.0, &o).unwrap().value, 2.0 * PI * PI, max_relative = 1e-8);
        let lin = RadialProfile::new(|r| r);
        for r in [0.5, 1.0, 3.0] {
            let v = integrate_radial(&lin, d, 0.0, r, &o).unwrap().value;
            assert_relative_eq!(v, 4.0 * PI * PI / 5.0 * r.powi(5), max_relative = 1e-8);
        }
        let bad = RadialProfile::new(|r: f64| r.powi(-4)).with_hint(-4.0);
        assert!(integrate_radial(&bad, d, 0.0, 1.0, &o).unwrap_err().is_divergent());
    }

    #[test]
    fn sign_changes() {
        let roots = find_sign_changes(|r| r.ln() - 0.25, 1e-3, 1e3, 8);
        assert_eq!(roots.len(), 1);
        assert_relative_eq!(roots[0], 0.25f64.exp(), max_relative = 1e-12);
    }

    #[test]
    fn mc_measure_recovery_and_determinism() {
        let cfg = McConfig::default();
        let ball = McRegion::Ball(BallSpec::central(1, 1.0).unwrap());
        let e = integrate_mc(|_| 1.0, &ball, &cfg).unwrap();
        assert_relative_eq!(e.value, PI * PI, max_relative = 1e-12);
        let ann = McRegion::Annulus { n: 1, inner: 1.0, outer: 2.0 };
        let e = integrate_mc(|_| 1.0, &ann, &cfg).unwrap();
        assert_relative_eq!(e.value, PI * PI * 15.0, max_relative = 1e-12);

        let f = |x: &GroupPoint| x.koranyi_norm().powi(-2);
        let a = integrate_mc(f, &ball, &cfg).unwrap();
        let b = integrate_mc(f, &ball, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!((a.value - 2.0 * PI * PI).abs() <= 3.0 * a.std_error);
    }

    #[test]
    fn mc_zero_measure_and_validation() {
        let cfg = McConfig::default();
        let ann = McRegion::Annulus { n: 1, inner: 1.0, outer: 1.0 };
        let e = integrate_mc(|_| 1.0, &ann, &cfg).unwrap();
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
        assert!(McConfig::new(1, 4, 8).is_err());
    }

    #[test]
    fn masked_region_partitions() {
        let cfg = McConfig::default().with_samples(1 << 12);
        let ball = McRegion::Ball(BallSpec::central(1, 2.0).unwrap());
        let f = |x: &GroupPoint| 1.0 + x[0] * x[0];
        let full = integrate_mc(f, &ball, &cfg).unwrap();
        let inner = integrate_mc(f, &ball.clone().masked(|x| x.koranyi_norm() <= 1.0), &cfg).unwrap();
        let outer = integrate_mc(f, &ball.masked(|x| x.koranyi_norm() > 1.0), &cfg).unwrap();
        assert_relative_eq!(inner.value + outer.value, full.value, max_relative = 1e-12);
    }
}
