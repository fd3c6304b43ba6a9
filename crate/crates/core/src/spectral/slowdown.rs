use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use super::{second_eigenvalue, SpectralError};
use crate::ingest::EntityId;
use crate::pathrec::PathMultiset;
use crate::tensors::{
    build_one_step, build_shipment_tensor, build_two_step, end_fractions, mix, to_second_order,
    unit_volumes, CountTensor, Flexibility, OrderTransitionTensor, SecondOrderGraph, TensorError,
};

/// Builds the absorbing second-order chain for any flexibility, with unit
/// volumes.
#[derive(Debug, Clone)]
pub struct ChainBuilder {
    pub two_step: OrderTransitionTensor,
    pub one_step: OrderTransitionTensor,
    pub omega: BTreeMap<EntityId, f64>,
}

impl ChainBuilder {
    pub fn new(
        two_step: OrderTransitionTensor,
        one_step: OrderTransitionTensor,
        omega: BTreeMap<EntityId, f64>,
    ) -> Self {
        ChainBuilder {
            two_step,
            one_step,
            omega,
        }
    }

    pub fn from_paths(paths: &PathMultiset) -> Self {
        let counts = CountTensor::from_paths(paths);
        ChainBuilder::new(build_two_step(&counts), build_one_step(&counts), end_fractions(paths))
    }

    pub fn chain(&self, phi: &Flexibility) -> Result<SecondOrderGraph, TensorError> {
        let t = mix(&self.two_step, &self.one_step, phi)?;
        let b = build_shipment_tensor(&t, &unit_volumes(&t), 365);
        let mut g = to_second_order(&b, &self.omega)?;
        g.classify(&self.two_step);
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowdownResult {
    pub lambda2_base: f64,
    pub lambda2_flex: f64,
    /// `ln|λ2(0)| / ln|λ2(φ)|`.
    pub sigma: f64,
}

fn sigma_of(base: f64, flex: f64) -> Result<f64, SpectralError> {
    if base.to_bits() == flex.to_bits() {
        return Ok(1.0);
    }
    for v in [base, flex] {
        if v > 1.0 - 1e-9 {
            return Err(SpectralError::Degenerate(v));
        }
    }
    Ok(base.ln() / flex.ln())
}

pub fn slowdown_factor(
    builder: &ChainBuilder,
    phi: &Flexibility,
    tol: f64,
) -> Result<SlowdownResult, SpectralError> {
    let base = second_eigenvalue(&builder.chain(&Flexibility::zero())?.to_matrix(), tol)?;
    let flex = second_eigenvalue(&builder.chain(phi)?.to_matrix(), tol)?;
    Ok(SlowdownResult {
        lambda2_base: base.modulus,
        lambda2_flex: flex.modulus,
        sigma: sigma_of(base.modulus, flex.modulus)?,
    })
}

/// One output row, with percentile bands of σ over bootstrap replicas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowdownRow {
    pub phi: f64,
    pub lambda2_base: f64,
    pub lambda2_flex: f64,
    pub sigma: f64,
    pub ci_low50: f64,
    pub ci_high50: f64,
    pub ci_low95: f64,
    pub ci_high95: f64,
}

/// Multinomial resample of packages over paths.
fn resample(paths: &PathMultiset, rng: &mut ChaCha8Rng) -> PathMultiset {
    let mut remaining = paths.total_count();
    let mut mass: f64 = paths.paths.iter().map(|p| p.count as f64).sum();
    let mut out = Vec::with_capacity(paths.len());
    for p in &paths.paths {
        if remaining == 0 {
            break;
        }
        let prob = (p.count as f64 / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, prob).expect("valid binomial").sample(rng);
        mass -= p.count as f64;
        remaining -= draw;
        if draw > 0 {
            let mut q = p.clone();
            q.count = draw;
            out.push(q);
        }
    }
    PathMultiset::from_paths(out)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// σ at each uniform flexibility in `phis`, with bands from `samples`
/// path-resampled replicas. Replica `s` draws from stream `s` of `seed`, so
/// the result does not depend on the worker count.
pub fn bootstrap_slowdown(
    paths: &PathMultiset,
    phis: &[f64],
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<SlowdownRow>, SpectralError> {
    let builder = ChainBuilder::from_paths(paths);
    let point: Vec<SlowdownResult> = phis
        .iter()
        .map(|&phi| slowdown_factor(&builder, &Flexibility::uniform(phi)?, tol))
        .collect::<Result<_, _>>()?;
    let replicas: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let b = ChainBuilder::from_paths(&resample(paths, &mut rng));
            phis.iter()
                .map(|&phi| Ok(slowdown_factor(&b, &Flexibility::uniform(phi)?, tol)?.sigma))
                .collect::<Result<Vec<f64>, SpectralError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(phis
        .iter()
        .enumerate()
        .map(|(n, &phi)| {
            let mut s: Vec<f64> = replicas.iter().map(|r| r[n]).collect();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let p = point[n];
            let band = |q: f64| if s.is_empty() { p.sigma } else { quantile(&s, q) };
            SlowdownRow {
                phi,
                lambda2_base: p.lambda2_base,
                lambda2_flex: p.lambda2_flex,
                sigma: p.sigma,
                ci_low50: band(0.25),
                ci_high50: band(0.75),
                ci_low95: band(0.025),
                ci_high95: band(0.975),
            }
        })
        .collect())
}

pub fn write_slowdown_csv<W: Write>(rows: &[SlowdownRow], out: W) -> Result<(), SpectralError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "phi",
        "lambda2_base",
        "lambda2_flex",
        "sigma",
        "ci_low50",
        "ci_high50",
        "ci_low95",
        "ci_high95",
    ])?;
    for r in rows {
        w.write_record(
            [
                r.phi,
                r.lambda2_base,
                r.lambda2_flex,
                r.sigma,
                r.ci_low50,
                r.ci_high50,
                r.ci_low95,
                r.ci_high95,
            ]
            .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_edge_cases() {
        assert_eq!(sigma_of(0.5, 0.5).unwrap(), 1.0);
        assert_eq!(sigma_of(0.0, 0.0).unwrap(), 1.0);
        assert!((sigma_of(0.25, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!(sigma_of(0.5, 1.0).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert_eq!(quantile(&s, 0.25), 2.0);
        assert_eq!(quantile(&s, 0.1), 1.4);
    }
}
