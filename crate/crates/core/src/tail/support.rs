use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::SpherePoint;
use crate::stats::median;

use super::sampling::RSampleSet;

/// Median block maximum must grow by at least this factor from block size
/// `n/4` to `n`.
pub const MIN_GROWTH: f64 = 1.1;

#[derive(Clone, Debug, Serialize)]
pub struct SupportDirection {
    pub x: SpherePoint,
    /// `max xR` over the first `n` samples and over all `4n`.
    pub max_n: f64,
    pub max_4n: f64,
    /// Median of 16 block maxima of size `n/4` and of 4 of size `n`.
    pub block_median_small: f64,
    pub block_median_large: f64,
    pub growth: f64,
    /// `xR ≤ 0` for every sample, as for `x = -1` with a positive scalar
    /// model; such directions carry no information and are skipped.
    pub excluded: bool,
    pub consistent_with_unbounded: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SupportCheck {
    pub n: usize,
    pub directions: Vec<SupportDirection>,
    pub consistent_with_unbounded: bool,
}

fn block_max_median(values: &[f64], size: usize) -> f64 {
    let maxima: Vec<f64> = values
        .chunks_exact(size)
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    median(&maxima)
}

/// Probes whether `xR` looks unbounded above in each direction, using the
/// first `4n` samples (`n` = a quarter of the set, rounded down to a
/// multiple of 4).
///
/// A raw "max at `4n` exceeds max at `n`" comparison succeeds with
/// probability 3/4 for any continuous law, bounded or not, so the verdict
/// instead requires the median block maximum to grow by [`MIN_GROWTH`] when
/// the block size quadruples. The raw maxima are still reported. Directions
/// with no positive projection are excluded from the verdict.
pub fn support_unbounded_check(samples: &RSampleSet, directions: &[SpherePoint]) -> Result<SupportCheck> {
    let n = (samples.len() / 4) / 4 * 4;
    if n < 64 {
        return Err(Error::InsufficientSamples(format!(
            "support check needs at least 256 samples, got {}",
            samples.len()
        )));
    }
    if directions.is_empty() {
        return Err(Error::InvalidArgument("no directions to probe".into()));
    }
    let dirs: Vec<SupportDirection> = directions
        .iter()
        .map(|x| {
            let proj: Vec<f64> = samples.samples[..4 * n].iter().map(|r| x.coords().dot(r)).collect();
            let max_n = proj[..n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let max_4n = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let small = block_max_median(&proj, n / 4);
            let large = block_max_median(&proj, n);
            let growth = if small > 0.0 { large / small } else { f64::NAN };
            let excluded = max_4n <= 0.0;
            SupportDirection {
                x: *x,
                max_n,
                max_4n,
                block_median_small: small,
                block_median_large: large,
                growth,
                excluded,
                consistent_with_unbounded: !excluded && growth >= MIN_GROWTH,
            }
        })
        .collect();
    Ok(SupportCheck {
        n,
        consistent_with_unbounded: dirs.iter().any(|d| !d.excluded)
            && dirs.iter().filter(|d| !d.excluded).all(|d| d.consistent_with_unbounded),
        directions: dirs,
    })
}
