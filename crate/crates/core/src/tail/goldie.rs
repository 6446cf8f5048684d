use rayon::prelude::*;
use serde::Serialize;

use super::sampling::RSampleSet;
use crate::error::{Error, Result};
use crate::geometry::GridFunction;
use crate::model::PairLaw;
use crate::rng::{tag, Streams};
use crate::shifted_chain::StationaryEstimate;

const CHUNK: usize = 4096;

/// `K̂₀` with its error components.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct GoldieEstimate {
    pub k0: f64,
    pub std_error: f64,
    /// Monte Carlo error over the pairs `(M_i, Q_i, R_i)`.
    pub se_mc: f64,
    /// Propagated from the standard error of `α̂`.
    pub se_alpha: f64,
    /// Propagated from the bin-mass errors of `π̂`.
    pub se_pi: f64,
    pub n_pairs: usize,
}

fn pos_pow(v: f64, kappa: f64) -> f64 {
    if v > 0.0 {
        v.powf(kappa)
    } else {
        0.0
    }
}

/// `K̂₀ = (α̂κ)^{-1} Σ_y π̂(y) r(y)^{-1} (1/n) Σ_i [((y(M_iR_i + Q_i))⁺)^κ − ((yM_iR_i)⁺)^κ]`.
///
/// `R_i` are the first `n_pairs` samples; `(M_i, Q_i)` are fresh draws.
/// `y(M_iR_i + Q_i)` has the law of `yR`, and pairing it with `yM_iR_i`
/// keeps the difference integrable even though each term alone has infinite
/// mean at the tail index.
#[allow(clippy::too_many_arguments)]
pub fn goldie_constant<L: PairLaw>(
    samples: &RSampleSet,
    law: &L,
    kappa: f64,
    r: &GridFunction,
    pi: &StationaryEstimate,
    alpha: (f64, f64),
    n_pairs: usize,
    streams: &Streams,
) -> Result<GoldieEstimate> {
    goldie_constant_with(samples, law, kappa, r, pi, alpha, n_pairs, streams, false)
}

/// [`goldie_constant`] with the `M`-term optionally removed, leaving
/// `(α̂κ)^{-1} Σ_y π̂(y) r(y)^{-1} E ((yQ)⁺)^κ` when `M` is zeroed.
#[allow(clippy::too_many_arguments)]
pub fn goldie_constant_with<L: PairLaw>(
    samples: &RSampleSet,
    law: &L,
    kappa: f64,
    r: &GridFunction,
    pi: &StationaryEstimate,
    alpha: (f64, f64),
    n_pairs: usize,
    streams: &Streams,
    zero_m: bool,
) -> Result<GoldieEstimate> {
    if n_pairs < 2 || n_pairs > samples.len() {
        return Err(Error::InsufficientSamples(format!(
            "need 2..={} pairs, asked for {n_pairs}",
            samples.len()
        )));
    }
    if !(alpha.0 > 0.0 && kappa > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "K0 needs alpha > 0 and kappa > 0, got {} and {kappa}",
            alpha.0
        )));
    }
    let grid = &pi.grid;
    if grid.dim() != law.dimension() {
        return Err(Error::InvalidArgument("pi grid has the wrong dimension".into()));
    }
    // bins carrying mass, with weights π̂(y)/r(y)
    let bins: Vec<(usize, f64)> = (0..grid.len())
        .filter(|&k| pi.pi[k] > 0.0)
        .map(|k| (k, 1.0 / r.interpolate(grid.point(k))))
        .collect();
    let nb = bins.len();
    let chunks = n_pairs.div_ceil(CHUNK);
    // per chunk: Σ_i g_i, Σ_i g_i², Σ_i h_y(i) per bin
    let parts: Vec<(f64, f64, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = streams.rng(tag::GOLDIE, c as u64);
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n_pairs);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut hy = vec![0.0; nb];
            for i in start..end {
                let pair = law.draw(&mut rng)?;
                let mr = if zero_m {
                    crate::linalg::Vector::zeros(law.dimension())
                } else {
                    pair.m.apply(&samples.samples[i])
                };
                let full = mr.add(&pair.q);
                let mut g = 0.0;
                for (b, &(k, inv_r)) in bins.iter().enumerate() {
                    let y = grid.point(k).coords();
                    let h = pos_pow(y.dot(&full), kappa) - pos_pow(y.dot(&mr), kappa);
                    hy[b] += h;
                    g += pi.pi[k] * inv_r * h;
                }
                s1 += g;
                s2 += g * g;
            }
            Ok((s1, s2, hy))
        })
        .collect::<Result<_>>()?;
    let n = n_pairs as f64;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut hy = vec![0.0; nb];
    for (a, b, h) in parts {
        s1 += a;
        s2 += b;
        for (acc, v) in hy.iter_mut().zip(h) {
            *acc += v;
        }
    }
    let norm = 1.0 / (alpha.0 * kappa);
    let mean_g = s1 / n;
    let var_g = ((s2 - n * mean_g * mean_g) / (n - 1.0)).max(0.0);
    let k0 = norm * mean_g;
    let se_mc = norm * (var_g / n).sqrt();
    let se_alpha = k0.abs() * alpha.1 / alpha.0;
    let se_pi = norm
        * bins
            .iter()
            .zip(&hy)
            .map(|(&(k, inv_r), h)| (inv_r * h / n * pi.pi_se[k]).powi(2))
            .sum::<f64>()
            .sqrt();
    Ok(GoldieEstimate {
        k0,
        std_error: (se_mc.powi(2) + se_alpha.powi(2) + se_pi.powi(2)).sqrt(),
        se_mc,
        se_alpha,
        se_pi,
        n_pairs,
    })
}
