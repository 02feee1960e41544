//! End-to-end link simulation: feature mapping onto subcarriers, AirComp
//! aggregation, server-side classification and Monte Carlo accuracy.
//!
//! Each trial draws its channel, feature and noise realizations from streams
//! derived from `(seed, trial)`. Schemes evaluated with the same seed see the
//! same objects and channels.

use num_complex::Complex64;
use rand::Rng;

use crate::datagen::{
    complex_normal, sample_channels, sample_features, trial_rng, FeatureSample, Stream,
};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_statistics, inner, overall_dg};
use crate::model::{
    AggregatedStatistics, ChannelSet, ClassStatistics, Precoders, Scheme, SweepRecord,
    SystemConfig,
};
use crate::par::{map_indexed, Execution};
use crate::precoding::{alternating_optimize, pat_mc_precoders};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub true_class: usize,
    pub predicted_class: usize,
}

impl TrialOutcome {
    pub fn correct(&self) -> bool {
        self.true_class == self.predicted_class
    }
}

/// Received aggregated feature `x̂` for one sample.
pub fn aircomp_forward<R: Rng + ?Sized>(
    sample: &FeatureSample,
    ch: &ChannelSet,
    pc: &Precoders,
    noise_power: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if sample.users() != ch.users() || sample.dim() != 2 * ch.subcarriers() {
        return Err(Error::DimensionMismatch(format!(
            "sample has {} sensors of dimension {}, channels have {} sensors and {} subcarriers",
            sample.users(),
            sample.dim(),
            ch.users(),
            ch.subcarriers()
        )));
    }
    if pc.users() != ch.users() || pc.subcarriers() != ch.subcarriers() || pc.antennas() != ch.antennas() {
        return Err(Error::DimensionMismatch("precoders do not match channels".into()));
    }
    let noise_sd = noise_power.max(0.0).sqrt();
    let mut out = Vec::with_capacity(sample.dim());
    for k in 0..ch.subcarriers() {
        let w = pc.w(k);
        let mut s_hat = Complex64::new(0.0, 0.0);
        for u in 0..ch.users() {
            let x = sample.sensor(u);
            let symbol = Complex64::new(x[2 * k], x[2 * k + 1]);
            s_hat += inner(w, ch.get(u, k)) * pc.v(u, k) * symbol;
        }
        if noise_sd > 0.0 {
            let noise: Vec<Complex64> = (0..ch.antennas())
                .map(|_| complex_normal(rng) * noise_sd)
                .collect();
            s_hat += inner(w, &noise);
        }
        out.push(s_hat.re);
        out.push(s_hat.im);
    }
    Ok(out)
}

/// Nearest class centroid under the diagonal Mahalanobis distance. Ties go
/// to the smallest class index.
pub fn mahalanobis_classify(x: &[f64], agg: &AggregatedStatistics) -> Result<usize> {
    if x.len() != agg.dim {
        return Err(Error::DimensionMismatch(format!(
            "feature of length {}, statistics of dimension {}",
            x.len(),
            agg.dim
        )));
    }
    if let Some(k) = agg.eta.iter().position(|&e| !(e > 0.0)) {
        return Err(Error::ZeroVariance(k));
    }
    let inv: Vec<f64> = (0..agg.dim).map(|n| 1.0 / agg.variance(n)).collect();
    Ok(nearest(x, agg.classes, |l| agg.centroid(l), &inv))
}

fn nearest<'a>(x: &[f64], classes: usize, centroid: impl Fn(usize) -> &'a [f64], inv_var: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for l in 0..classes {
        let d: f64 = x
            .iter()
            .zip(centroid(l))
            .zip(inv_var)
            .map(|((a, m), iv)| (a - m) * (a - m) * iv)
            .sum();
        if d < best.1 {
            best = (l, d);
        }
    }
    best.0
}

/// Classifies the noiseless average of the local features against the
/// original centroids with variances `σ²/U`.
pub fn ideal_classify(sample: &FeatureSample, stats: &ClassStatistics) -> usize {
    let users = sample.users() as f64;
    let mean: Vec<f64> = (0..sample.dim())
        .map(|n| (0..sample.users()).map(|u| sample.sensor(u)[n]).sum::<f64>() / users)
        .collect();
    let inv: Vec<f64> = stats.sigma2().iter().map(|s| users / s).collect();
    nearest(&mean, stats.classes(), |l| stats.centroid(l), &inv)
}

/// Where trial features come from.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSource<'a> {
    /// Fresh draws from the class statistics, class chosen uniformly.
    Synthetic,
    /// Recorded samples, trial `t` using sample `t mod len`.
    Recorded(&'a [FeatureSample]),
}

#[derive(Debug, Clone, Copy)]
struct TrialResult {
    outcome: TrialOutcome,
    dg: Option<f64>,
}

/// Monte Carlo accuracy estimation for one system and feature model.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    cfg: &'a SystemConfig,
    stats: &'a ClassStatistics,
    source: FeatureSource<'a>,
    execution: Execution,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &'a SystemConfig, stats: &'a ClassStatistics) -> Self {
        Self {
            cfg,
            stats,
            source: FeatureSource::Synthetic,
            execution: Execution::default(),
        }
    }

    pub fn with_source(self, source: FeatureSource<'a>) -> Self {
        Self { source, ..self }
    }

    pub fn with_execution(self, execution: Execution) -> Self {
        Self { execution, ..self }
    }

    fn sample(&self, trial: usize, seed: u64) -> Result<FeatureSample> {
        match self.source {
            FeatureSource::Synthetic => {
                let mut rng = trial_rng(seed, trial as u64, Stream::Feature);
                let class = rng.random_range(0..self.stats.classes());
                sample_features(self.stats, self.cfg.users, class, &mut rng)
            }
            FeatureSource::Recorded(samples) => {
                let sample = samples
                    .get(trial % samples.len().max(1))
                    .ok_or_else(|| Error::DimensionMismatch("no recorded samples".into()))?;
                Ok(sample.clone())
            }
        }
    }

    /// Precoders a scheme deploys on `ch`, with their overall gain.
    pub fn precoders(&self, cfg: &SystemConfig, scheme: Scheme, ch: &ChannelSet) -> Result<(Precoders, f64)> {
        let baseline = pat_mc_precoders(cfg, self.stats, ch)?;
        match scheme {
            Scheme::Proposed => {
                let report = alternating_optimize(cfg, self.stats, ch, &baseline)?;
                let dg = report.final_dg();
                Ok((report.final_precoders, dg))
            }
            _ => {
                let dg = overall_dg(cfg, self.stats, ch, &baseline)?;
                Ok((baseline, dg))
            }
        }
    }

    fn trial(&self, cfg: &SystemConfig, scheme: Scheme, trial: usize, seed: u64) -> Result<TrialResult> {
        let sample = self.sample(trial, seed)?;
        if sample.users() != cfg.users {
            return Err(Error::DimensionMismatch(format!(
                "sample has {} sensors, configuration has {}",
                sample.users(),
                cfg.users
            )));
        }
        if scheme == Scheme::Ideal {
            let outcome = TrialOutcome {
                true_class: sample.true_class,
                predicted_class: ideal_classify(&sample, self.stats),
            };
            return Ok(TrialResult { outcome, dg: None });
        }

        let ch = sample_channels(cfg, &mut trial_rng(seed, trial as u64, Stream::Channel));
        let (pc, dg) = self.precoders(cfg, scheme, &ch)?;
        let agg = aggregate_statistics(cfg, self.stats, &ch, &pc)?;
        let mut noise_rng = trial_rng(seed, trial as u64, Stream::Noise);
        let x_hat = aircomp_forward(&sample, &ch, &pc, cfg.noise_power, &mut noise_rng)?;
        let outcome = TrialOutcome {
            true_class: sample.true_class,
            predicted_class: mahalanobis_classify(&x_hat, &agg)?,
        };
        Ok(TrialResult {
            outcome,
            dg: Some(dg),
        })
    }

    /// Accuracy of `scheme` at analytical SNR `snr` (linear).
    pub fn run_accuracy(&self, scheme: Scheme, snr: f64, trials: usize, seed: u64) -> Result<SweepRecord> {
        if trials == 0 {
            return Err(Error::NonPositiveParameter("trials = 0".into()));
        }
        let cfg = self.cfg.with_snr(snr);
        crate::model::validate_config(&cfg, self.stats)?;
        cfg.sensor_budget(self.stats)?;

        let results = map_indexed(self.execution, trials, |t| self.trial(&cfg, scheme, t, seed));
        let mut correct = 0usize;
        let mut dg_sum = 0.0;
        for r in results {
            let r = r?;
            correct += usize::from(r.outcome.correct());
            dg_sum += r.dg.unwrap_or(0.0);
        }
        Ok(SweepRecord {
            scheme,
            snr,
            classes: self.stats.classes(),
            antennas: cfg.antennas,
            users: cfg.users,
            subcarriers: cfg.subcarriers,
            accuracy: correct as f64 / trials as f64,
            dg: (scheme != Scheme::Ideal).then(|| dg_sum / trials as f64),
            trials,
            seed,
        })
    }

    /// One record per `(scheme, snr)`, schemes outermost. Every cell uses the
    /// same seed, so all cells share channel and feature realizations.
    pub fn run_sweep(
        &self,
        schemes: &[Scheme],
        snr_grid: &[f64],
        trials: usize,
        seed: u64,
    ) -> Result<Vec<SweepRecord>> {
        if schemes.is_empty() || snr_grid.is_empty() {
            return Err(Error::DimensionMismatch("empty scheme list or SNR grid".into()));
        }
        let mut rows = Vec::with_capacity(schemes.len() * snr_grid.len());
        for &scheme in schemes {
            for &snr in snr_grid {
                rows.push(self.run_accuracy(scheme, snr, trials, seed)?);
            }
        }
        Ok(rows)
    }
}

pub fn run_accuracy(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    scheme: Scheme,
    snr: f64,
    trials: usize,
    seed: u64,
) -> Result<SweepRecord> {
    Simulator::new(cfg, stats).run_accuracy(scheme, snr, trials, seed)
}

pub fn run_sweep(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    schemes: &[Scheme],
    snr_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRecord>> {
    Simulator::new(cfg, stats).run_sweep(schemes, snr_grid, trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_synthetic_stats, BlockRule};
    use crate::model::SensorPower;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_class_agg(eta: Vec<f64>) -> AggregatedStatistics {
        AggregatedStatistics {
            classes: 2,
            dim: 2,
            mu_hat: vec![0.0, 0.0, 2.0, 0.0],
            eta,
        }
    }

    #[test]
    fn forward_identity_channel() {
        let ch = ChannelSet::new(1, 1, 1, vec![c(1.0, 0.0)]).unwrap();
        let pc = Precoders::new(1, 1, 1, vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]).unwrap();
        let x = FeatureSample::new(0, vec![vec![0.5, -1.5]]).unwrap();
        let y = aircomp_forward(&x, &ch, &pc, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(y, vec![0.5, -1.5]);
    }

    #[test]
    fn forward_rotation_and_sum() {
        // ω = j on both sensors: (a + jb)·j = −b + ja, summed over sensors.
        let ch = ChannelSet::new(2, 1, 1, vec![c(0.0, 1.0), c(0.0, 1.0)]).unwrap();
        let pc = Precoders::new(2, 1, 1, vec![c(1.0, 0.0); 2], vec![c(1.0, 0.0)]).unwrap();
        let x = FeatureSample::new(0, vec![vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let y = aircomp_forward(&x, &ch, &pc, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((y[0] - (-2.0 + 1.0)).abs() < 1e-15);
        assert!((y[1] - (1.0 + 3.0)).abs() < 1e-15);
    }

    #[test]
    fn forward_noise_variance() {
        let ch = ChannelSet::new(1, 1, 2, vec![c(0.0, 0.0); 2]).unwrap();
        let pc = Precoders::new(1, 1, 2, vec![c(0.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let x = FeatureSample::new(0, vec![vec![0.0, 0.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let y = aircomp_forward(&x, &ch, &pc, 4.0, &mut rng).unwrap();
            acc[0] += y[0] * y[0];
            acc[1] += y[1] * y[1];
        }
        // Each part carries σ²/2·‖w‖² = 4.
        for a in acc {
            assert!((a / n as f64 - 4.0).abs() < 0.1);
        }
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let ch = ChannelSet::new(1, 1, 1, vec![c(1.0, 0.0)]).unwrap();
        let pc = Precoders::new(1, 1, 1, vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]).unwrap();
        let x = FeatureSample::new(0, vec![vec![0.0; 4]]).unwrap();
        let err = aircomp_forward(&x, &ch, &pc, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn mahalanobis_examples() {
        let agg = two_class_agg(vec![1.0]);
        assert_eq!(mahalanobis_classify(&[0.9, 5.0], &agg).unwrap(), 0);
        assert_eq!(mahalanobis_classify(&[1.1, -3.0], &agg).unwrap(), 1);
        // Equidistant: smaller index wins.
        assert_eq!(mahalanobis_classify(&[1.0, 0.0], &agg).unwrap(), 0);
    }

    #[test]
    fn mahalanobis_errors() {
        assert!(matches!(
            mahalanobis_classify(&[0.0, 0.0], &two_class_agg(vec![0.0])),
            Err(Error::ZeroVariance(0))
        ));
        assert!(matches!(
            mahalanobis_classify(&[0.0], &two_class_agg(vec![1.0])),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ideal_uses_sensor_average() {
        let stats = ClassStatistics::new(vec![vec![-1.0, 1.0], vec![1.0, 1.0]], vec![3.0, 3.0]).unwrap();
        let x = FeatureSample::new(1, vec![vec![3.0, 1.0], vec![-2.0, 1.0]]).unwrap();
        assert_eq!(ideal_classify(&x, &stats), 1);
        let x = FeatureSample::new(0, vec![vec![-3.0, 1.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(ideal_classify(&x, &stats), 0);
    }

    fn small() -> (SystemConfig, ClassStatistics) {
        let cfg = SystemConfig::new(4, 4, 3, 1000.0, 1000.0, SensorPower::Snr(1.0));
        (cfg, make_synthetic_stats(3, 6, BlockRule::Exact).unwrap())
    }

    #[test]
    fn accuracy_is_deterministic_and_mode_independent() {
        let (cfg, stats) = small();
        let sim = Simulator::new(&cfg, &stats);
        for scheme in [Scheme::Proposed, Scheme::PatMc, Scheme::Ideal] {
            let a = sim.with_execution(Execution::Sequential).run_accuracy(scheme, 0.5, 60, 9).unwrap();
            let b = sim.with_execution(Execution::Parallel).run_accuracy(scheme, 0.5, 60, 9).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.dg.is_none(), scheme == Scheme::Ideal);
        }
    }

    #[test]
    fn high_snr_approaches_ideal() {
        let (cfg, stats) = small();
        let ideal = run_accuracy(&cfg, &stats, Scheme::Ideal, 1e6, 400, 3).unwrap();
        for scheme in [Scheme::Proposed, Scheme::PatMc] {
            let r = run_accuracy(&cfg, &stats, scheme, 1e6, 400, 3).unwrap();
            assert!((r.accuracy - ideal.accuracy).abs() <= 0.02, "{scheme}: {} vs {}", r.accuracy, ideal.accuracy);
        }
    }

    #[test]
    fn ideal_dominates_at_low_snr() {
        let (cfg, stats) = small();
        let ideal = run_accuracy(&cfg, &stats, Scheme::Ideal, 0.1, 2000, 4).unwrap();
        let proposed = run_accuracy(&cfg, &stats, Scheme::Proposed, 0.1, 2000, 4).unwrap();
        assert!(ideal.accuracy > proposed.accuracy);
    }

    #[test]
    fn sweep_order_and_single_cell() {
        let (cfg, stats) = small();
        let rows = run_sweep(&cfg, &stats, &[Scheme::PatMc, Scheme::Ideal], &[0.1, 1.0, 10.0], 20, 5).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].scheme, Scheme::PatMc);
        assert_eq!(rows[3].scheme, Scheme::Ideal);
        assert_eq!(rows[4].snr, 1.0);
        let single = run_sweep(&cfg, &stats, &[Scheme::PatMc], &[1.0], 20, 5).unwrap();
        assert_eq!(single[0], run_accuracy(&cfg, &stats, Scheme::PatMc, 1.0, 20, 5).unwrap());
        assert!(run_sweep(&cfg, &stats, &[], &[1.0], 20, 5).is_err());
        assert!(run_accuracy(&cfg, &stats, Scheme::PatMc, 1.0, 0, 5).is_err());
    }

    #[test]
    fn recorded_samples_cycle() {
        let (cfg, stats) = small();
        let sample = FeatureSample::new(2, vec![vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0]; 4]).unwrap();
        let samples = vec![sample];
        let sim = Simulator::new(&cfg, &stats).with_source(FeatureSource::Recorded(&samples));
        let r = sim.run_accuracy(Scheme::Ideal, 1.0, 5, 0).unwrap();
        assert_eq!(r.accuracy, 1.0);
    }
}
