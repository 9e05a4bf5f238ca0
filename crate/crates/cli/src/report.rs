//! Built-in battery of closed-form checks for `hhl report`.
//!
//! Uses the ℍⁿ dimension, seed and sample count from the common flags; the
//! exponents are fixed so the expected values are known in closed form.

use std::f64::consts::{E, LN_2, PI};

use serde::Serialize;
use serde_json::json;

use hhl_core::heis::HeisDim;
use hhl_core::norms::{cmo_norm, morrey_norm};
use hhl_core::sharpness::{self, Theorem, Tolerances};
use hhl_core::{GeneratingFunction, MatrixField, NormParams, RadiusGrid, ScalarField, WeightSpec};

use crate::{Common, Failure, Outcome};

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    expected: f64,
    rel_tol: f64,
    pass: bool,
}

fn check(name: &'static str, value: f64, expected: f64, rel_tol: f64) -> Check {
    let pass = (value - expected).abs() <= rel_tol * expected.abs();
    Check { name, value, expected, rel_tol, pass }
}

pub fn run(c: &Common) -> Result<Outcome, Failure> {
    if c.n != 1 {
        return Err(Failure::Config(anyhow::anyhow!("the report battery is tabulated for n = 1")));
    }
    let cfg = c.mc()?;
    let dim = HeisDim::h1();
    let omega = 4.0 * PI * PI;
    let w = WeightSpec::power(dim, 0.0)?;
    let grid = RadiusGrid::dyadic(-10, 10);
    let phi = GeneratingFunction::ball_indicator(1.0)?;
    let a = MatrixField::dilation(1);
    let prm = NormParams::morrey(2.0, -0.25, 0.0);

    let mut checks = vec![check("unit ball volume", dim.unit_ball_volume(), PI * PI, 1e-12)];
    let fstar = ScalarField::power(-1.0);
    checks.push(check("extremizer Morrey norm", morrey_norm(&fstar, 2.0, -0.25, &w, &grid, &cfg)?.value, (2.0 * PI).sqrt(), 1e-6));
    checks.push(check("CMO norm of log|x|", cmo_norm(&ScalarField::log_norm(), 1.0, &w, &grid, &cfg)?.value, 1.0 / (2.0 * E), 1e-6));
    checks.push(check("sharp integral", sharpness::sharp_integral(&phi, &a, &prm, &cfg)?.value, omega, 1e-8));
    checks.push(check("C3", sharpness::constant_c3(&phi, &a, &prm, &cfg)?.value, omega, 1e-8));
    let c1 = prm.with_p1(4.0).with_q(1.0).with_delta(2.0);
    checks.push(check("C1", sharpness::constant_c1(&phi, &a, &c1, &cfg)?.value, 2.0 * omega, 1e-8));
    let c4 = NormParams::morrey(1.0, -0.25, 0.0).with_p1(2.0).with_p2(2.0);
    checks.push(check(
        "C4",
        sharpness::constant_c4_c5(&phi, &a, &c4, &cfg)?.value,
        omega * (1.0 + 1.0 / (2.0 * LN_2)),
        1e-8,
    ));
    checks.push(check(
        "log integral, piece two",
        sharpness::log_integral(hhl_core::Piece::Two, &phi, &a, &prm, &cfg)?.value,
        omega / LN_2,
        1e-8,
    ));
    let rep = sharpness::verify_sharpness(
        Theorem::SharpHausdorff,
        &phi,
        &a,
        &prm,
        &RadiusGrid::dyadic(-4, 4),
        &cfg,
        &Tolerances::default(),
    )?;
    checks.push(check("sharpness ratio", rep.operator_ratio, omega, 1e-6));

    let failed = checks.iter().filter(|k| !k.pass).count();
    let mut csv = String::from("check,value,expected,pass\n");
    for k in &checks {
        csv.push_str(&format!("{},{},{},{}\n", k.name, k.value, k.expected, k.pass));
    }
    Ok(Outcome {
        summary: format!("{} checks, {} failed", checks.len(), failed),
        failed: failed > 0,
        result: json!({ "checks": checks, "failed": failed }),
        csv,
    })
}
