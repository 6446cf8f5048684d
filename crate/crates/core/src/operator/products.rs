use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::PairLaw;
use crate::rng::{tag, Streams};

const CHUNK: usize = 10_000;

/// `(Ê ‖Π_n‖^ϰ)^{1/n}` from `n_mc` dense products of `n` factors.
pub fn validate_rho_by_products<L: PairLaw>(
    law: &L,
    varkappa: f64,
    n: usize,
    n_mc: usize,
    streams: &Streams,
) -> Result<f64> {
    if n == 0 || n > 30 {
        return Err(Error::InvalidArgument(format!(
            "product length must be in 1..=30, got {n}"
        )));
    }
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be positive".into()));
    }
    let streams = streams.child(tag::OPERATOR, 2);
    let chunks = n_mc.div_ceil(CHUNK);
    let sums: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = streams.rng(tag::OPERATOR, c as u64);
            let count = CHUNK.min(n_mc - c * CHUNK);
            let mut s = 0.0;
            for _ in 0..count {
                let mut p = Mat::identity(law.dimension());
                for _ in 0..n {
                    p = p.mul(&law.draw(&mut rng)?.m);
                }
                if !p.is_finite() {
                    return Err(Error::Overflow(format!("Π_{n} has non-finite entries")));
                }
                s += p.operator_norm().powf(varkappa);
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let mean = sums.iter().sum::<f64>() / n_mc as f64;
    if !mean.is_finite() {
        return Err(Error::Overflow(format!("E ||Π_{n}||^{varkappa} overflowed")));
    }
    Ok(mean.powf(1.0 / n as f64))
}
