//! Aggregated-feature statistics and discriminant gain.
//!
//! The pairwise gain is available through two independent routes: the
//! symmetric KL divergence summed over aggregated dimensions
//! ([`pairwise_dg_definition`]), and the closed form in the precoders
//! ([`pairwise_dg_closedform`]). They must agree to rounding.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{AggregatedStatistics, ChannelSet, ClassStatistics, Precoders, SystemConfig};

/// `w^H h`.
pub fn inner(w: &[Complex64], h: &[Complex64]) -> Complex64 {
    w.iter().zip(h).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Effective gains `ω_{u,k} = w_k^H h_{u,k} v_{u,k}`, `U×K` row-major.
pub fn effective_gains(ch: &ChannelSet, pc: &Precoders) -> Result<Vec<Complex64>> {
    pc.check_against(ch)?;
    let (users, subcarriers) = (ch.users(), ch.subcarriers());
    let mut omega = Vec::with_capacity(users * subcarriers);
    for u in 0..users {
        for k in 0..subcarriers {
            omega.push(inner(pc.w(k), ch.get(u, k)) * pc.v(u, k));
        }
    }
    Ok(omega)
}

fn check_dims(cfg: &SystemConfig, stats: &ClassStatistics, ch: &ChannelSet) -> Result<()> {
    if stats.subcarriers() != ch.subcarriers()
        || cfg.subcarriers != ch.subcarriers()
        || cfg.users != ch.users()
        || cfg.antennas != ch.antennas()
    {
        return Err(Error::DimensionMismatch(format!(
            "config U={} M={} K={}, statistics K={}, channels U={} M={} K={}",
            cfg.users,
            cfg.antennas,
            cfg.subcarriers,
            stats.subcarriers(),
            ch.users(),
            ch.antennas(),
            ch.subcarriers()
        )));
    }
    Ok(())
}

/// Class-conditional mean and variance of the aggregated feature under the
/// paired-variance approximation.
pub fn aggregate_statistics(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
    pc: &Precoders,
) -> Result<AggregatedStatistics> {
    check_dims(cfg, stats, ch)?;
    let omega = effective_gains(ch, pc)?;
    let (users, subcarriers) = (ch.users(), ch.subcarriers());
    let (classes, dim) = (stats.classes(), stats.dim());

    let mut mu_hat = vec![0.0; classes * dim];
    for l in 0..classes {
        let mu = stats.centroid(l);
        let out = &mut mu_hat[l * dim..(l + 1) * dim];
        for k in 0..subcarriers {
            let (re, im) = (mu[2 * k], mu[2 * k + 1]);
            let (mut a_sum, mut b_sum) = (0.0, 0.0);
            for u in 0..users {
                let w = omega[u * subcarriers + k];
                a_sum += w.re * re - w.im * im;
                b_sum += w.re * im + w.im * re;
            }
            out[2 * k] = a_sum;
            out[2 * k + 1] = b_sum;
        }
    }

    let eta = (0..subcarriers)
        .map(|k| {
            let signal: f64 = (0..users).map(|u| omega[u * subcarriers + k].norm_sqr()).sum();
            stats.delta2()[k] * signal + 0.5 * cfg.noise_power * pc.receive_power(k)
        })
        .collect();

    Ok(AggregatedStatistics {
        classes,
        dim,
        mu_hat,
        eta,
    })
}

/// `KL(f₁‖f₂) + KL(f₂‖f₁)` for scalar Gaussians sharing variance `var`.
pub fn symmetric_kl_gaussian(mu1: f64, mu2: f64, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::NonPositiveParameter(format!("variance {var}")));
    }
    let d = mu1 - mu2;
    Ok(d * d / var)
}

fn ordered_pair(l: usize, lp: usize) -> Result<(usize, usize)> {
    if l == lp {
        return Err(Error::DegeneratePair(l));
    }
    Ok((l.min(lp), l.max(lp)))
}

fn check_class(l: usize, classes: usize) -> Result<()> {
    if l >= classes {
        return Err(Error::ClassOutOfRange { index: l, classes });
    }
    Ok(())
}

/// Pairwise gain as a sum of per-dimension symmetric KL divergences between
/// the aggregated class-conditional distributions.
pub fn pairwise_dg_definition(agg: &AggregatedStatistics, l: usize, lp: usize) -> Result<f64> {
    check_class(l, agg.classes)?;
    check_class(lp, agg.classes)?;
    let (a, b) = ordered_pair(l, lp)?;
    if let Some(k) = agg.eta.iter().position(|&e| !(e > 0.0)) {
        return Err(Error::ZeroVariance(k));
    }
    let (ma, mb) = (agg.centroid(a), agg.centroid(b));
    let mut total = 0.0;
    for n in 0..agg.dim {
        total += symmetric_kl_gaussian(ma[n], mb[n], agg.variance(n))?;
    }
    Ok(total)
}

/// Centroid separation per class pair and subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseSeparation {
    classes: usize,
    subcarriers: usize,
    delta_d: Vec<Complex64>,
}

impl PairwiseSeparation {
    pub fn new(stats: &ClassStatistics) -> Self {
        let (classes, subcarriers) = (stats.classes(), stats.subcarriers());
        let mut delta_d = Vec::with_capacity(classes * classes * subcarriers);
        for l in 0..classes {
            for lp in 0..classes {
                let (ma, mb) = (stats.centroid(l), stats.centroid(lp));
                for k in 0..subcarriers {
                    delta_d.push(Complex64::new(
                        ma[2 * k] - mb[2 * k],
                        ma[2 * k + 1] - mb[2 * k + 1],
                    ));
                }
            }
        }
        Self {
            classes,
            subcarriers,
            delta_d,
        }
    }

    /// `Δd_{l,l',k} = Δμ_{2k−1} + jΔμ_{2k}`.
    pub fn delta_d(&self, l: usize, lp: usize, k: usize) -> Complex64 {
        self.delta_d[(l * self.classes + lp) * self.subcarriers + k]
    }

    /// `ψ_{l,l',k} = |Δd_{l,l',k}|²`.
    pub fn psi(&self, l: usize, lp: usize, k: usize) -> f64 {
        self.delta_d(l, lp, k).norm_sqr()
    }

    /// `Ψ_k = Σ_{l<l'} ψ_{l,l',k}`.
    pub fn pair_weight(&self, k: usize) -> f64 {
        let mut total = 0.0;
        for lp in 1..self.classes {
            for l in 0..lp {
                total += self.psi(l, lp, k);
            }
        }
        total
    }

    pub fn pair_weights(&self) -> Vec<f64> {
        (0..self.subcarriers).map(|k| self.pair_weight(k)).collect()
    }
}

/// Per-subcarrier ratio `|Σ_u ω_{u,k}|² / (δ_k² Σ_u |ω_{u,k}|² + σ_c²/2 ‖w_k‖²)`.
pub fn subcarrier_ratios(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
    pc: &Precoders,
) -> Result<Vec<f64>> {
    check_dims(cfg, stats, ch)?;
    let omega = effective_gains(ch, pc)?;
    let (users, subcarriers) = (ch.users(), ch.subcarriers());
    (0..subcarriers)
        .map(|k| {
            let receive = pc.receive_power(k);
            if receive == 0.0 {
                return Err(Error::ZeroDenominator(k));
            }
            let mut coherent = Complex64::new(0.0, 0.0);
            let mut energy = 0.0;
            for u in 0..users {
                let w = omega[u * subcarriers + k];
                coherent += w;
                energy += w.norm_sqr();
            }
            let denom = stats.delta2()[k] * energy + 0.5 * cfg.noise_power * receive;
            Ok(coherent.norm_sqr() / denom)
        })
        .collect()
}

fn pair_from_ratios(sep: &PairwiseSeparation, ratios: &[f64], a: usize, b: usize) -> f64 {
    ratios
        .iter()
        .enumerate()
        .map(|(k, r)| r * sep.psi(a, b, k))
        .sum()
}

/// Pairwise gain as an explicit function of the precoders.
pub fn pairwise_dg_closedform(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
    pc: &Precoders,
    l: usize,
    lp: usize,
) -> Result<f64> {
    check_class(l, stats.classes())?;
    check_class(lp, stats.classes())?;
    let (a, b) = ordered_pair(l, lp)?;
    let ratios = subcarrier_ratios(cfg, stats, ch, pc)?;
    Ok(pair_from_ratios(&PairwiseSeparation::new(stats), &ratios, a, b))
}

/// All pairwise gains `(l, l', G)` with `l < l'`, column-major over `l'`.
pub fn pairwise_table(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
    pc: &Precoders,
) -> Result<Vec<(usize, usize, f64)>> {
    let ratios = subcarrier_ratios(cfg, stats, ch, pc)?;
    let sep = PairwiseSeparation::new(stats);
    let classes = stats.classes();
    let mut table = Vec::with_capacity(classes * (classes - 1) / 2);
    for lp in 1..classes {
        for l in 0..lp {
            table.push((l, lp, pair_from_ratios(&sep, &ratios, l, lp)));
        }
    }
    Ok(table)
}

/// Average of all pairwise gains.
pub fn overall_dg(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
    pc: &Precoders,
) -> Result<f64> {
    let classes = stats.classes() as f64;
    let total: f64 = pairwise_table(cfg, stats, ch, pc)?
        .iter()
        .map(|&(_, _, g)| g)
        .sum();
    Ok(2.0 * total / (classes * (classes - 1.0)))
}
