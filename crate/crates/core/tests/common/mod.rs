//! Test-side oracles, kept independent of the library's quadrature.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

/// Double-exponential (tanh-sinh) rule on a finite `[a, b]`, refined by
/// halving the step until two levels agree.
fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let node = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let w = FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        // Distances to the nearer endpoint, computed without cancellation.
        let d = (b - a) / (1.0 + (2.0 * u.abs()).exp());
        let x = if u < 0.0 { a + d } else { b - d };
        if d <= 0.0 || x <= a || x >= b {
            return 0.0;
        }
        let v = f(x);
        if v.is_finite() {
            half * w * v
        } else {
            0.0
        }
    };
    let tmax = 4.0;
    let mut h = 0.5;
    let mut sum = node(0.0);
    let mut k = 1;
    while k as f64 * h <= tmax {
        sum += node(k as f64 * h) + node(-(k as f64) * h);
        k += 1;
    }
    let mut prev = sum * h;
    for _ in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= tmax {
            sum += node(k as f64 * h) + node(-(k as f64) * h);
            k += 2;
        }
        let cur = sum * h;
        if (cur - prev).abs() <= 1e-14 * cur.abs().max(1e-300) {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// `∫_a^∞ f` by the exp-sinh substitution `x = a + e^{π/2 sinh t}`.
fn exp_sinh(f: &dyn Fn(f64) -> f64, a: f64) -> f64 {
    let node = |t: f64| -> f64 {
        let e = (FRAC_PI_2 * t.sinh()).exp();
        let x = a + e;
        if !x.is_finite() || x <= a {
            return 0.0;
        }
        let v = f(x) * FRAC_PI_2 * t.cosh() * e;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let tmax = 4.5;
    let mut h = 0.5;
    let mut sum = node(0.0);
    let mut k = 1;
    while k as f64 * h <= tmax {
        sum += node(k as f64 * h) + node(-(k as f64) * h);
        k += 1;
    }
    let mut prev = sum * h;
    for _ in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= tmax {
            sum += node(k as f64 * h) + node(-(k as f64) * h);
            k += 2;
        }
        let cur = sum * h;
        if (cur - prev).abs() <= 1e-14 * cur.abs().max(1e-300) {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// `∫_a^b f` with `b` possibly infinite, split at `breaks`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b && x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut edges = vec![a];
    edges.extend(pts);
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += tanh_sinh(&f, w[0], w[1]);
    }
    let last = *edges.last().unwrap();
    if b.is_infinite() {
        total += exp_sinh(&f, last);
    } else {
        total += tanh_sinh(&f, last, b);
    }
    total
}

/// `4π²`, the sphere-area factor for ℍ¹ in the normalization used here.
pub const OMEGA_H1: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Map data of `A(y) = diag(1/(dᵢρ), 1/(d_tρ²))` at `ρ = |y|_h`, derived
/// directly from the diagonal closed form.
#[derive(Clone, Copy, Debug)]
pub struct Map {
    pub norm: f64,
    pub inv_norm: f64,
    pub det: f64,
}

pub fn scaled_map(dh: &[f64], dt: f64, rho: f64) -> Map {
    let entries: Vec<f64> = dh.iter().map(|d| 1.0 / (d * rho)).collect();
    let t = 1.0 / (dt * rho * rho);
    let norm = entries.iter().fold(t.sqrt(), |m, &e| m.max(e));
    let inv_norm = entries.iter().fold((1.0 / t).sqrt(), |m, &e| m.max(1.0 / e));
    let det = entries.iter().product::<f64>() * t;
    Map { norm, inv_norm, det }
}

pub fn dilation_map(n: usize, rho: f64) -> Map {
    scaled_map(&vec![1.0; 2 * n], 1.0, rho)
}

/// Sanity checks of the oracle itself against textbook integrals.
pub fn self_check() -> Vec<(&'static str, f64)> {
    vec![
        ("∫₀¹ |ln x|", rel(integrate(|x| x.ln().abs(), 0.0, 1.0, &[]), 1.0)),
        ("∫₀^∞ e^{−x}", rel(integrate(|x| (-x).exp(), 0.0, f64::INFINITY, &[]), 1.0)),
        ("∫₀¹ x^{−1/2}", rel(integrate(|x| x.powf(-0.5), 0.0, 1.0, &[]), 2.0)),
        ("∫₀¹ |x − 0.3|", rel(integrate(|x| (x - 0.3).abs(), 0.0, 1.0, &[0.3]), 0.29)),
        ("∫₁^∞ x^{−2}", rel(integrate(|x| x.powi(-2), 1.0, f64::INFINITY, &[]), 1.0)),
    ]
}
