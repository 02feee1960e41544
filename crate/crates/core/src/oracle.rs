//! Independent consistency checks: random-instance generators, Monte Carlo
//! moment estimates, a projected-gradient solver for the transmit QP, and
//! the four validation suites run by `iscc-sim validate` and the acceptance
//! tests.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datagen::{complex_normal, derive_seed, make_synthetic_stats, sample_channels, sample_features, BlockRule};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_statistics, norm_sqr, overall_dg, pairwise_dg_closedform, pairwise_dg_definition};
use crate::model::{db_to_linear, ChannelSet, ClassStatistics, Precoders, SensorPower, SystemConfig, FEASIBILITY_SLACK};
use crate::par::{map_indexed, Execution};
use crate::precoding::{alternating_optimize, optimize_receive, pat_mc_precoders, ReceiveCoefficients, TransmitCoefficients};
use crate::simulate::aircomp_forward;

/// One randomly drawn system with feasible precoders.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cfg: SystemConfig,
    pub stats: ClassStatistics,
    pub ch: ChannelSet,
    pub pc: Precoders,
}

/// Class statistics with Gaussian centroids and variances in `[0.5, 3)`.
/// With `paired`, both dimensions of a subcarrier share one variance.
pub fn random_stats<R: Rng + ?Sized>(classes: usize, subcarriers: usize, paired: bool, rng: &mut R) -> Result<ClassStatistics> {
    let dim = 2 * subcarriers;
    let centroids = (0..classes)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * 1.5).collect())
        .collect();
    let mut sigma2: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..3.0)).collect();
    if paired {
        for k in 0..subcarriers {
            sigma2[2 * k + 1] = sigma2[2 * k];
        }
    }
    ClassStatistics::new(centroids, sigma2)
}

/// Random transmit and receive coefficients, each sensor and subcarrier at
/// between 20% and 100% of its budget.
pub fn random_precoders<R: Rng + ?Sized>(cfg: &SystemConfig, budget: f64, rng: &mut R) -> Result<Precoders> {
    let (users, subcarriers, m) = (cfg.users, cfg.subcarriers, cfg.antennas);
    let mut v: Vec<Complex64> = (0..users * subcarriers).map(|_| complex_normal(rng)).collect();
    for row in v.chunks_mut(subcarriers) {
        scale_to(row, budget * rng.random_range(0.2..1.0));
    }
    let mut w: Vec<Complex64> = (0..subcarriers * m).map(|_| complex_normal(rng)).collect();
    for row in w.chunks_mut(m) {
        scale_to(row, cfg.server_power * rng.random_range(0.2..1.0));
    }
    Precoders::new(users, subcarriers, m, v, w)
}

fn scale_to(x: &mut [Complex64], power: f64) {
    let p = norm_sqr(x);
    if p > 0.0 {
        let s = (power / p).sqrt();
        x.iter_mut().for_each(|z| *z *= s);
    }
}

/// Instance with `U, M, K ≤ max_size`, `2 ≤ L ≤ max_size`, SNR drawn in
/// `[−10, 10]` dB and unit-scale powers.
pub fn random_instance<R: Rng + ?Sized>(max_size: usize, paired: bool, rng: &mut R) -> Result<Instance> {
    let users = rng.random_range(1..=max_size);
    let antennas = rng.random_range(1..=max_size);
    let subcarriers = rng.random_range(1..=max_size);
    let classes = rng.random_range(2..=max_size.max(2));
    let snr = db_to_linear(rng.random_range(-10.0..10.0));
    let cfg = SystemConfig::new(users, antennas, subcarriers, 1.0, 1.0, SensorPower::Snr(snr));
    let stats = random_stats(classes, subcarriers, paired, rng)?;
    let ch = sample_channels(&cfg, rng);
    let pc = random_precoders(&cfg, cfg.sensor_budget(&stats)?, rng)?;
    Ok(Instance { cfg, stats, ch, pc })
}

fn instance_rng(seed: u64, index: usize, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64, salt))
}

/// Per-class sample mean and variance of the aggregated feature over
/// `samples` transmissions, class-major `L×N`.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub samples: usize,
}

pub fn monte_carlo_moments<R: Rng + ?Sized>(inst: &Instance, samples: usize, rng: &mut R) -> Result<MomentEstimate> {
    let (classes, dim) = (inst.stats.classes(), inst.stats.dim());
    if samples < 2 {
        return Err(Error::NonPositiveParameter(format!("{samples} samples")));
    }
    let mut mean = vec![0.0; classes * dim];
    let mut variance = vec![0.0; classes * dim];
    for l in 0..classes {
        // Welford accumulation per dimension.
        let mut m = vec![0.0; dim];
        let mut s = vec![0.0; dim];
        for i in 0..samples {
            let x = sample_features(&inst.stats, inst.cfg.users, l, rng)?;
            let y = aircomp_forward(&x, &inst.ch, &inst.pc, inst.cfg.noise_power, rng)?;
            for n in 0..dim {
                let d = y[n] - m[n];
                m[n] += d / (i + 1) as f64;
                s[n] += d * (y[n] - m[n]);
            }
        }
        mean[l * dim..(l + 1) * dim].copy_from_slice(&m);
        for n in 0..dim {
            variance[l * dim + n] = s[n] / (samples - 1) as f64;
        }
    }
    Ok(MomentEstimate { mean, variance, samples })
}

/// Maximizes the transmit surrogate for fixed `χ` by accelerated projected
/// gradient ascent on each sensor's coefficients.
pub fn projected_gradient_surrogate(coef: &TransmitCoefficients, chi: &[Complex64], budget: f64, max_iters: usize) -> Vec<Complex64> {
    let k_count = coef.subcarriers;
    let mut out = Vec::with_capacity(coef.users * k_count);
    for u in 0..coef.users {
        let lin: Vec<Complex64> = (0..k_count)
            .map(|k| coef.weight[k] * chi[k] * coef.alpha[u * k_count + k].conj())
            .collect();
        let curv: Vec<f64> = (0..k_count)
            .map(|k| coef.weight[k] * chi[k].norm_sqr() * coef.beta[u * k_count + k])
            .collect();
        let lipschitz = curv.iter().copied().fold(0.0, f64::max);
        let step = if lipschitz > 0.0 {
            1.0 / lipschitz
        } else {
            // Linear objective: one step reaches the boundary.
            f64::MAX.sqrt()
        };
        let project = |x: &mut Vec<Complex64>| {
            let p = norm_sqr(x);
            if p > budget {
                let s = (budget / p).sqrt();
                x.iter_mut().for_each(|z| *z *= s);
            }
        };
        let mut x = vec![Complex64::new(0.0, 0.0); k_count];
        let mut y = x.clone();
        let mut t: f64 = 1.0;
        for _ in 0..max_iters {
            let mut next: Vec<Complex64> = (0..k_count).map(|k| y[k] + (lin[k] - y[k] * curv[k]) * step).collect();
            project(&mut next);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let delta: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum();
            y = next
                .iter()
                .zip(&x)
                .map(|(a, b)| a + (a - b) * ((t - 1.0) / t_next))
                .collect();
            x = next;
            t = t_next;
            if delta <= 1e-30 * budget {
                break;
            }
        }
        out.extend(x);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Identity,
    Moments,
    Subproblems,
    Ascent,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Identity, Suite::Moments, Suite::Subproblems, Suite::Ascent];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Identity => "theorem1",
            Suite::Moments => "lemma1",
            Suite::Subproblems => "subproblems",
            Suite::Ascent => "ascent",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown suite `{s}` (expected theorem1, lemma1, subproblems or ascent)"))
    }
}

/// A measured worst case against its limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub worst: f64,
    pub limit: f64,
    /// `worst ≤ limit` when true, `worst ≥ limit` otherwise.
    pub upper: bool,
}

impl Check {
    fn at_most(name: &'static str, worst: f64, limit: f64) -> Self {
        Self { name, worst, limit, upper: true }
    }

    fn at_least(name: &'static str, worst: f64, limit: f64) -> Self {
        Self { name, worst, limit, upper: false }
    }

    pub fn passed(&self) -> bool {
        if self.upper {
            self.worst <= self.limit
        } else {
            self.worst >= self.limit
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = if self.upper { "<=" } else { ">=" };
        write!(f, "{} {:.3e} {op} {:.3e}", self.name, self.worst, self.limit)
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub instances: usize,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} instances, {:.2?}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.instances,
            self.elapsed
        )?;
        for c in &self.checks {
            write!(f, "; {c}")?;
        }
        Ok(())
    }
}

/// Problem sizes for the suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteSizes {
    pub identity_instances: usize,
    pub moment_instances: usize,
    pub moment_samples: usize,
    pub receive_instances: usize,
    pub receive_perturbations: usize,
    pub transmit_instances: usize,
    pub ascent_instances: usize,
    /// `(U, M, K, L)` for the ascent instances.
    pub ascent_shape: (usize, usize, usize, usize),
    /// SNR range in dB the ascent instances are drawn from.
    pub ascent_snr_db: (f64, f64),
}

impl SuiteSizes {
    /// Full-size acceptance settings.
    pub fn full() -> Self {
        Self {
            identity_instances: 1000,
            moment_instances: 20,
            moment_samples: 100_000,
            receive_instances: 100,
            receive_perturbations: 200,
            transmit_instances: 100,
            ascent_instances: 100,
            ascent_shape: (12, 10, 10, 10),
            ascent_snr_db: (-25.0, 10.0),
        }
    }

    /// Quick settings for the command-line `validate`.
    pub fn reduced() -> Self {
        Self {
            identity_instances: 200,
            moment_instances: 4,
            moment_samples: 50_000,
            receive_instances: 20,
            receive_perturbations: 200,
            transmit_instances: 20,
            ascent_instances: 10,
            ascent_shape: (4, 4, 3, 4),
            ascent_snr_db: (-25.0, 10.0),
        }
    }
}

pub const IDENTITY_TOL: f64 = 1e-9;
pub const MOMENT_MEAN_SE: f64 = 4.0;
pub const MOMENT_VAR_TOL: f64 = 0.05;
pub const RECEIVE_TOL: f64 = 1e-8;
pub const TRANSMIT_QP_TOL: f64 = 1e-6;
pub const ASCENT_SLACK: f64 = 1e-9;
pub const ASCENT_MAX_ROUNDS: usize = 100;

pub fn run_suite(suite: Suite, sizes: &SuiteSizes, seed: u64, execution: Execution) -> Result<SuiteReport> {
    let start = Instant::now();
    let (instances, checks) = match suite {
        Suite::Identity => identity_checks(sizes, seed, execution)?,
        Suite::Moments => moment_checks(sizes, seed, execution)?,
        Suite::Subproblems => subproblem_checks(sizes, seed, execution)?,
        Suite::Ascent => ascent_checks(sizes, seed, execution)?,
    };
    Ok(SuiteReport {
        suite,
        instances,
        checks,
        elapsed: start.elapsed(),
    })
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Closed-form pairwise gain against the divergence of the aggregated
/// statistics, every pair of every instance.
fn identity_checks(sizes: &SuiteSizes, seed: u64, execution: Execution) -> Result<(usize, Vec<Check>)> {
    let n = sizes.identity_instances;
    let worst = collect(map_indexed(execution, n, |i| {
        let inst = random_instance(4, false, &mut instance_rng(seed, i, 11))?;
        let agg = aggregate_statistics(&inst.cfg, &inst.stats, &inst.ch, &inst.pc)?;
        let mut worst: f64 = 0.0;
        for lp in 1..inst.stats.classes() {
            for l in 0..lp {
                let def = pairwise_dg_definition(&agg, l, lp)?;
                let closed = pairwise_dg_closedform(&inst.cfg, &inst.stats, &inst.ch, &inst.pc, l, lp)?;
                worst = worst.max(rel_err(closed, def));
            }
        }
        Ok(worst)
    }))?
    .into_iter()
    .fold(0.0, f64::max);
    Ok((n, vec![Check::at_most("max relative error", worst, IDENTITY_TOL)]))
}

/// Monte Carlo moments of the received feature against the predicted
/// aggregated statistics.
fn moment_checks(sizes: &SuiteSizes, seed: u64, execution: Execution) -> Result<(usize, Vec<Check>)> {
    let n = sizes.moment_instances;
    let samples = sizes.moment_samples;
    let per = collect(map_indexed(execution, n, |i| {
        let mut rng = instance_rng(seed, i, 12);
        let inst = random_instance(4, true, &mut rng)?;
        let agg = aggregate_statistics(&inst.cfg, &inst.stats, &inst.ch, &inst.pc)?;
        let est = monte_carlo_moments(&inst, samples, &mut rng)?;
        let dim = agg.dim;
        let (mut z_max, mut v_max): (f64, f64) = (0.0, 0.0);
        for l in 0..agg.classes {
            for d in 0..dim {
                let var = agg.variance(d);
                let se = (var / samples as f64).sqrt();
                z_max = z_max.max((est.mean[l * dim + d] - agg.centroid(l)[d]).abs() / se);
                v_max = v_max.max((est.variance[l * dim + d] - var).abs() / var);
            }
        }
        Ok((z_max, v_max))
    }))?;
    let z = per.iter().map(|p| p.0).fold(0.0, f64::max);
    let v = per.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok((
        n,
        vec![
            Check::at_most("max mean deviation (standard errors)", z, MOMENT_MEAN_SE),
            Check::at_most("max variance relative error", v, MOMENT_VAR_TOL),
        ],
    ))
}

/// Receive step against random feasible perturbations and the transmit QP
/// step against projected gradient ascent.
fn subproblem_checks(sizes: &SuiteSizes, seed: u64, execution: Execution) -> Result<(usize, Vec<Check>)> {
    let perturbations = sizes.receive_perturbations;
    let receive = collect(map_indexed(execution, sizes.receive_instances, |i| {
        let mut rng = instance_rng(seed, i, 13);
        let inst = random_instance(4, false, &mut rng)?;
        let m = inst.cfg.antennas;
        let w = optimize_receive(&inst.cfg, &inst.stats, &inst.ch, inst.pc.transmit())?;
        let mut worst = f64::NEG_INFINITY;
        for k in 0..inst.cfg.subcarriers {
            let coef = ReceiveCoefficients::new(&inst.ch, inst.pc.transmit(), k);
            let delta2 = inst.stats.delta2()[k];
            let wk = &w[k * m..(k + 1) * m];
            let best = coef.objective(delta2, inst.cfg.noise_power, wk);
            for j in 0..perturbations {
                // Scales from 1e-4 up to a fresh random direction.
                let scale = 10f64.powf(-4.0 + 5.0 * j as f64 / perturbations as f64);
                let mut p: Vec<Complex64> = wk
                    .iter()
                    .map(|z| z + complex_normal(&mut rng) * scale * inst.cfg.server_power.sqrt())
                    .collect();
                scale_to(&mut p, inst.cfg.server_power * rng.random_range(0.1..1.0));
                let val = coef.objective(delta2, inst.cfg.noise_power, &p);
                worst = worst.max((val - best) / best);
            }
        }
        Ok(worst)
    }))?
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max);

    let transmit = collect(map_indexed(execution, sizes.transmit_instances, |i| {
        let mut rng = instance_rng(seed, i, 14);
        let inst = random_instance(2, false, &mut rng)?;
        let budget = inst.cfg.sensor_budget(&inst.stats)?;
        let coef = TransmitCoefficients::new(&inst.cfg, &inst.stats, &inst.ch, inst.pc.receive())?;
        let chi = coef.auxiliary(inst.pc.transmit());
        let kkt = coef.maximize_surrogate(&chi, budget);
        let pg = projected_gradient_surrogate(&coef, &chi, budget, 1_000_000);
        let (a, b) = (coef.surrogate(&chi, &kkt), coef.surrogate(&chi, &pg));
        let feasible = (0..inst.cfg.users)
            .all(|u| norm_sqr(&kkt[u * coef.subcarriers..(u + 1) * coef.subcarriers]) <= budget * (1.0 + FEASIBILITY_SLACK));
        Ok(if feasible { rel_err(a, b) } else { f64::INFINITY })
    }))?
    .into_iter()
    .fold(0.0, f64::max);

    Ok((
        sizes.receive_instances + sizes.transmit_instances,
        vec![
            Check::at_most("receive: max relative gain of a perturbation", receive, RECEIVE_TOL),
            Check::at_most("transmit QP: max relative gap to projected gradient", transmit, TRANSMIT_QP_TOL),
        ],
    ))
}

/// Outcome of the alternating optimization on one instance.
#[derive(Debug, Clone, Copy)]
pub struct AscentOutcome {
    pub snr_db: f64,
    pub max_drop: f64,
    pub rounds: usize,
    pub converged: bool,
    pub final_dg: f64,
    pub baseline_dg: f64,
    pub feasible: bool,
}

pub fn ascent_outcomes(sizes: &SuiteSizes, seed: u64, execution: Execution) -> Result<Vec<AscentOutcome>> {
    let (users, antennas, subcarriers, classes) = sizes.ascent_shape;
    let (lo, hi) = sizes.ascent_snr_db;
    let stats = make_synthetic_stats(classes, 2 * subcarriers, BlockRule::Rounded)?;
    collect(map_indexed(execution, sizes.ascent_instances, |i| {
        let mut rng = instance_rng(seed, i, 15);
        let snr_db = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let cfg = SystemConfig::new(users, antennas, subcarriers, 1000.0, 1000.0, SensorPower::Snr(db_to_linear(snr_db)));
        let ch = sample_channels(&cfg, &mut rng);
        let init = pat_mc_precoders(&cfg, &stats, &ch)?;
        let baseline_dg = overall_dg(&cfg, &stats, &ch, &init)?;
        let report = alternating_optimize(&cfg, &stats, &ch, &init)?;
        let max_drop = report
            .dg_trace
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max);
        let budget = cfg.sensor_budget(&stats)?;
        Ok(AscentOutcome {
            snr_db,
            max_drop,
            rounds: report.iterations,
            converged: report.converged,
            final_dg: report.final_dg(),
            baseline_dg,
            feasible: report.final_precoders.is_feasible(budget, cfg.server_power),
        })
    }))
}

fn ascent_checks(sizes: &SuiteSizes, seed: u64, execution: Execution) -> Result<(usize, Vec<Check>)> {
    let out = ascent_outcomes(sizes, seed, execution)?;
    let drop = out.iter().map(|o| o.max_drop).fold(0.0, f64::max);
    let rounds = out.iter().map(|o| o.rounds).max().unwrap_or(0);
    let unconverged = out.iter().filter(|o| !o.converged).count();
    let margin = out.iter().map(|o| o.final_dg - o.baseline_dg).fold(f64::INFINITY, f64::min);
    let infeasible = out.iter().filter(|o| !o.feasible).count();
    Ok((
        out.len(),
        vec![
            Check::at_most("max trace decrease", drop, ASCENT_SLACK),
            Check::at_most("rounds", rounds as f64, ASCENT_MAX_ROUNDS as f64),
            Check::at_most("instances without convergence", unconverged as f64, 0.0),
            Check::at_least("min DG gain over PAT-MC", margin, -ASCENT_SLACK),
            Check::at_most("infeasible results", infeasible as f64, 0.0),
        ],
    ))
}
