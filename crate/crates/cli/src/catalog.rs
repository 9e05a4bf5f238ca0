//! Catalog selectors: `name` or `name:arg1,arg2,...`.

use anyhow::{anyhow, bail, Context, Result};
use hhl_core::{GeneratingFunction, MatrixField, ScalarField, WeightSpec};
use hhl_core::heis::HeisDim;

fn split(sel: &str) -> Result<(&str, Vec<f64>)> {
    let (name, rest) = match sel.split_once(':') {
        Some((n, r)) => (n, Some(r)),
        None => (sel, None),
    };
    let args = match rest {
        None => Vec::new(),
        Some(r) => r
            .split(',')
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number '{s}' in selector '{sel}'")))
            .collect::<Result<_>>()?,
    };
    Ok((name.trim(), args))
}

fn arity(sel: &str, args: &[f64], allowed: &[usize]) -> Result<()> {
    if !allowed.contains(&args.len()) {
        bail!("selector '{sel}' takes {allowed:?} arguments, got {}", args.len());
    }
    Ok(())
}

pub const PHI_IDS: &str = "ball-indicator[:r], annulus-indicator:a,b, power-ball:beta[,r], zero";
pub const MAP_IDS: &str = "dilation, diagonal:d1,..,d2n,dt";
pub const FIELD_IDS: &str = "power:s, ball-indicator[:r], constant:c, log-norm, inv-log-norm";

pub fn phi(sel: &str) -> Result<GeneratingFunction> {
    let (name, a) = split(sel)?;
    let g = match name {
        "ball-indicator" => {
            arity(sel, &a, &[0, 1])?;
            GeneratingFunction::ball_indicator(a.first().copied().unwrap_or(1.0))?
        }
        "annulus-indicator" => {
            arity(sel, &a, &[2])?;
            GeneratingFunction::annulus_indicator(a[0], a[1])?
        }
        "power-ball" => {
            arity(sel, &a, &[1, 2])?;
            GeneratingFunction::power_ball(a[0], a.get(1).copied().unwrap_or(1.0))?
        }
        "zero" => {
            arity(sel, &a, &[0])?;
            GeneratingFunction::zero()
        }
        _ => bail!("unknown Φ catalog id '{name}' (known: {PHI_IDS})"),
    };
    Ok(g)
}

pub fn matrix(sel: &str, n: usize) -> Result<MatrixField> {
    let (name, a) = split(sel)?;
    match name {
        "dilation" => {
            arity(sel, &a, &[0])?;
            Ok(MatrixField::dilation(n))
        }
        "diagonal" => {
            if a.len() != 2 * n + 1 {
                bail!("selector '{sel}' needs 2n+1 = {} factors for n = {n}", 2 * n + 1);
            }
            Ok(MatrixField::scaled_dilation(a[..2 * n].to_vec(), a[2 * n])?)
        }
        _ => Err(anyhow!("unknown A catalog id '{name}' (known: {MAP_IDS})")),
    }
}

pub fn field(sel: &str) -> Result<ScalarField> {
    let (name, a) = split(sel)?;
    let f = match name {
        "power" => {
            arity(sel, &a, &[1])?;
            ScalarField::power(a[0])
        }
        "ball-indicator" => {
            arity(sel, &a, &[0, 1])?;
            ScalarField::ball_indicator(a.first().copied().unwrap_or(1.0))
        }
        "constant" => {
            arity(sel, &a, &[1])?;
            ScalarField::constant(a[0])
        }
        "log-norm" => {
            arity(sel, &a, &[0])?;
            ScalarField::log_norm()
        }
        "inv-log-norm" => {
            arity(sel, &a, &[0])?;
            ScalarField::inv_log_norm()
        }
        _ => bail!("unknown function catalog id '{name}' (known: {FIELD_IDS})"),
    };
    Ok(f)
}

pub fn weight(sel: &str, dim: HeisDim, alpha: f64) -> Result<WeightSpec> {
    Ok(match sel {
        "power" => WeightSpec::power(dim, alpha)?,
        "clipped-power" => WeightSpec::clipped_power(dim, alpha)?,
        "none" => {
            if alpha != 0.0 {
                bail!("weight 'none' needs α = 0");
            }
            WeightSpec::unweighted(dim)
        }
        other => bail!("unknown weight id '{other}' (known: power, clipped-power, none)"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_selectors() {
        assert!(phi("ball-indicator").is_ok());
        assert!(phi("annulus-indicator:0.5,2").is_ok());
        assert!(phi("annulus-indicator:2").is_err());
        assert!(matrix("diagonal:1,2,3", 1).is_ok());
        assert!(matrix("diagonal:1,2", 1).is_err());
        assert!(field("power:-1").is_ok());
        assert!(field("power:x").is_err());
        assert!(field("sinc").unwrap_err().to_string().contains("unknown"));
    }
}
