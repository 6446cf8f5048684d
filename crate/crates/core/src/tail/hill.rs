use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Pre-registered fraction of upper order statistics used for acceptance.
pub const HILL_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct HillPoint {
    pub fraction: f64,
    pub k: usize,
    /// `1 / H_k`
    pub kappa: f64,
    /// `κ̂ / sqrt(k)`
    pub std_error: f64,
}

/// Hill estimates of the tail index of `values` (only positive values enter)
/// for each fraction `k / n`.
///
/// `H_k = (1/k) Σ_{i≤k} ln(X_(i) / X_(k+1))` over the descending order
/// statistics; `κ̂ = 1 / H_k`.
pub fn hill_estimate(values: &[f64], k_fractions: &[f64]) -> Result<Vec<HillPoint>> {
    let mut pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    pos.sort_by(|a, b| b.total_cmp(a));
    let n = values.len();
    let logs: Vec<f64> = pos.iter().map(|v| v.ln()).collect();
    k_fractions
        .iter()
        .map(|&fraction| {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::InvalidArgument(format!("k fraction {fraction} not in (0, 1)")));
            }
            let k = ((fraction * n as f64).round() as usize).max(1);
            if pos.len() <= k {
                return Err(Error::InsufficientSamples(format!(
                    "Hill estimate at k = {k} needs more than {k} positive values, have {}",
                    pos.len()
                )));
            }
            let h = logs[..k].iter().map(|l| l - logs[k]).sum::<f64>() / k as f64;
            let kappa = 1.0 / h;
            Ok(HillPoint {
                fraction,
                k,
                kappa,
                std_error: kappa / (k as f64).sqrt(),
            })
        })
        .collect()
}

/// Log-spaced fractions from 1e-4 to 0.1 for plateau inspection.
pub fn default_fractions() -> Vec<f64> {
    let mut f: Vec<f64> = (0..=12).map(|i| 10f64.powf(-4.0 + 3.0 * i as f64 / 12.0)).collect();
    if !f.iter().any(|v| (v - HILL_FRACTION).abs() < 1e-12) {
        f.push(HILL_FRACTION);
        f.sort_by(f64::total_cmp);
    }
    f
}

pub fn write_hill_csv<W: Write>(traces: &[(String, Vec<HillPoint>)], mut w: W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "series,fraction,k,kappa,std_error")?;
    for (name, trace) in traces {
        for p in trace {
            writeln!(
                w,
                "{name},{:.6e},{},{:.16e},{:.16e}",
                p.fraction, p.k, p.kappa, p.std_error
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_invariant() {
        let v: Vec<f64> = (1..=1000).map(|i| (i as f64).powf(1.3)).collect();
        let a = hill_estimate(&v, &[0.05]).unwrap();
        let b = hill_estimate(&v.iter().map(|x| 7.5 * x).collect::<Vec<_>>(), &[0.05]).unwrap();
        assert!((a[0].kappa - b[0].kappa).abs() < 1e-12);
    }

    #[test]
    fn too_few_positive() {
        assert!(hill_estimate(&[-1.0, 2.0, 3.0], &[0.9]).is_err());
    }
}
