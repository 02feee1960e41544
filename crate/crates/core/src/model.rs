//! Domain types shared by the analysis, optimization and simulation code.
//!
//! All powers are linear milliwatts. Conversion from dBm happens once, at
//! configuration parsing, through [`dbm_to_mw`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied to power constraints when checking feasibility.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// How the per-sensor transmit budget is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SensorPower {
    /// Analytical equivalent SNR (linear), mapped through [`snr_to_sensor_power`].
    Snr(f64),
    /// Direct budget in mW.
    Budget(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub users: usize,
    pub antennas: usize,
    pub subcarriers: usize,
    pub feature_dim: usize,
    /// Communication noise power per antenna, mW.
    pub noise_power: f64,
    /// Receive power budget per subcarrier, mW.
    pub server_power: f64,
    pub sensor_power: SensorPower,
}

impl SystemConfig {
    /// Configuration with `N = 2K` and the given per-sensor budget.
    pub fn new(
        users: usize,
        antennas: usize,
        subcarriers: usize,
        noise_power: f64,
        server_power: f64,
        sensor_power: SensorPower,
    ) -> Self {
        Self {
            users,
            antennas,
            subcarriers,
            feature_dim: 2 * subcarriers,
            noise_power,
            server_power,
            sensor_power,
        }
    }

    /// Same configuration at a different analytical SNR.
    pub fn with_snr(&self, snr: f64) -> Self {
        Self {
            sensor_power: SensorPower::Snr(snr),
            ..self.clone()
        }
    }

    pub fn with_antennas(&self, antennas: usize) -> Self {
        Self {
            antennas,
            ..self.clone()
        }
    }

    /// Resolved per-sensor transmit budget `P̃` in mW.
    pub fn sensor_budget(&self, stats: &ClassStatistics) -> Result<f64> {
        match self.sensor_power {
            SensorPower::Budget(p) if p > 0.0 && p.is_finite() => Ok(p),
            SensorPower::Budget(p) => Err(Error::NonPositiveParameter(format!(
                "sensor power budget {p}"
            ))),
            SensorPower::Snr(snr) => snr_to_sensor_power(self, stats, snr),
        }
    }

    fn check_shape(&self) -> Result<()> {
        for (name, value) in [
            ("users", self.users),
            ("antennas", self.antennas),
            ("subcarriers", self.subcarriers),
        ] {
            if value == 0 {
                return Err(Error::NonPositiveParameter(format!("{name} = 0")));
            }
        }
        if self.feature_dim != 2 * self.subcarriers {
            return Err(Error::DimensionMismatch(format!(
                "feature dimension N = {} must equal 2K = {}",
                self.feature_dim,
                2 * self.subcarriers
            )));
        }
        for (name, value) in [
            ("noise power", self.noise_power),
            ("server power", self.server_power),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveParameter(format!("{name} = {value}")));
            }
        }
        match self.sensor_power {
            SensorPower::Snr(v) | SensorPower::Budget(v) if !(v > 0.0 && v.is_finite()) => Err(
                Error::NonPositiveParameter(format!("sensor power / SNR = {v}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Per-class feature statistics: centroids `mu` (L×N, row-major) and
/// per-dimension variances, with the per-subcarrier quantities derived from
/// them at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStatistics {
    classes: usize,
    dim: usize,
    mu: Vec<f64>,
    sigma2: Vec<f64>,
    delta2: Vec<f64>,
    varpi: Vec<f64>,
    varpi_hat: f64,
}

impl ClassStatistics {
    pub fn new(centroids: Vec<Vec<f64>>, sigma2: Vec<f64>) -> Result<Self> {
        let classes = centroids.len();
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        let dim = sigma2.len();
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::DimensionMismatch(format!(
                "feature dimension {dim} must be even and positive"
            )));
        }
        if let Some(row) = centroids.iter().position(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "centroid {} has {} entries, expected {dim}",
                row + 1,
                centroids[row].len()
            )));
        }
        if let Some(n) = sigma2.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::NonPositiveParameter(format!(
                "variance of dimension {} is {}",
                n + 1,
                sigma2[n]
            )));
        }
        if centroids.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite centroid entry".into()));
        }

        let mu: Vec<f64> = centroids.into_iter().flatten().collect();
        let k_count = dim / 2;
        let delta2: Vec<f64> = (0..k_count)
            .map(|k| 0.5 * (sigma2[2 * k] + sigma2[2 * k + 1]))
            .collect();
        let varpi: Vec<f64> = (0..k_count)
            .map(|k| {
                let energy: f64 = (0..classes)
                    .map(|l| {
                        let re = mu[l * dim + 2 * k];
                        let im = mu[l * dim + 2 * k + 1];
                        re * re + im * im
                    })
                    .sum();
                sigma2[2 * k] + sigma2[2 * k + 1] + energy / classes as f64
            })
            .collect();
        let varpi_hat = varpi.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        Ok(Self {
            classes,
            dim,
            mu,
            sigma2,
            delta2,
            varpi,
            varpi_hat,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subcarriers(&self) -> usize {
        self.dim / 2
    }

    /// Centroid of class `l` (0-based).
    pub fn centroid(&self, l: usize) -> &[f64] {
        &self.mu[l * self.dim..(l + 1) * self.dim]
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    /// Paired variance `δ_k² = (σ²_{2k−1} + σ²_{2k}) / 2`.
    pub fn delta2(&self) -> &[f64] {
        &self.delta2
    }

    /// Per-subcarrier symbol second moment `ϖ_k`.
    pub fn varpi(&self) -> &[f64] {
        &self.varpi
    }

    pub fn varpi_hat(&self) -> f64 {
        self.varpi_hat
    }
}

/// Uplink channels `h_{u,k} ∈ C^M`, stored user-major then subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    users: usize,
    subcarriers: usize,
    antennas: usize,
    h: Vec<Complex64>,
}

impl ChannelSet {
    pub fn new(
        users: usize,
        subcarriers: usize,
        antennas: usize,
        h: Vec<Complex64>,
    ) -> Result<Self> {
        if h.len() != users * subcarriers * antennas {
            return Err(Error::DimensionMismatch(format!(
                "channel buffer has {} entries, expected {users}x{subcarriers}x{antennas}",
                h.len()
            )));
        }
        if h.iter().any(|z| !z.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite channel entry".into()));
        }
        Ok(Self {
            users,
            subcarriers,
            antennas,
            h,
        })
    }

    pub fn from_fn(
        users: usize,
        subcarriers: usize,
        antennas: usize,
        mut f: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut h = Vec::with_capacity(users * subcarriers * antennas);
        for u in 0..users {
            for k in 0..subcarriers {
                for m in 0..antennas {
                    h.push(f(u, k, m));
                }
            }
        }
        Self {
            users,
            subcarriers,
            antennas,
            h,
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn get(&self, u: usize, k: usize) -> &[Complex64] {
        let start = (u * self.subcarriers + k) * self.antennas;
        &self.h[start..start + self.antennas]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.h
    }
}

/// Transmit scalars `v_{u,k}` and receive combiners `w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoders {
    users: usize,
    subcarriers: usize,
    antennas: usize,
    v: Vec<Complex64>,
    w: Vec<Complex64>,
}

impl Precoders {
    pub fn new(
        users: usize,
        subcarriers: usize,
        antennas: usize,
        v: Vec<Complex64>,
        w: Vec<Complex64>,
    ) -> Result<Self> {
        if v.len() != users * subcarriers {
            return Err(Error::DimensionMismatch(format!(
                "transmit coefficients: {} entries, expected {}",
                v.len(),
                users * subcarriers
            )));
        }
        if w.len() != subcarriers * antennas {
            return Err(Error::DimensionMismatch(format!(
                "receive vectors: {} entries, expected {}",
                w.len(),
                subcarriers * antennas
            )));
        }
        Ok(Self {
            users,
            subcarriers,
            antennas,
            v,
            w,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn v(&self, u: usize, k: usize) -> Complex64 {
        self.v[u * self.subcarriers + k]
    }

    pub fn w(&self, k: usize) -> &[Complex64] {
        &self.w[k * self.antennas..(k + 1) * self.antennas]
    }

    /// Transmit coefficients, `U×K` row-major.
    pub fn transmit(&self) -> &[Complex64] {
        &self.v
    }

    /// Receive vectors, `K×M` row-major.
    pub fn receive(&self) -> &[Complex64] {
        &self.w
    }

    pub fn sensor_power(&self, u: usize) -> f64 {
        self.v[u * self.subcarriers..(u + 1) * self.subcarriers]
            .iter()
            .map(|z| z.norm_sqr())
            .sum()
    }

    pub fn receive_power(&self, k: usize) -> f64 {
        self.w(k).iter().map(|z| z.norm_sqr()).sum()
    }

    /// Checks both power constraints with [`FEASIBILITY_SLACK`].
    pub fn is_feasible(&self, sensor_budget: f64, server_budget: f64) -> bool {
        let tx = (0..self.users)
            .all(|u| self.sensor_power(u) <= sensor_budget * (1.0 + FEASIBILITY_SLACK));
        let rx = (0..self.subcarriers)
            .all(|k| self.receive_power(k) <= server_budget * (1.0 + FEASIBILITY_SLACK));
        tx && rx
    }

    pub(crate) fn check_against(&self, ch: &ChannelSet) -> Result<()> {
        if self.users != ch.users || self.subcarriers != ch.subcarriers || self.antennas != ch.antennas
        {
            return Err(Error::DimensionMismatch(format!(
                "precoders are {}x{}x{}, channels are {}x{}x{}",
                self.users, self.subcarriers, self.antennas, ch.users, ch.subcarriers, ch.antennas
            )));
        }
        Ok(())
    }
}

/// Class-conditional statistics of the aggregated feature.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedStatistics {
    pub classes: usize,
    pub dim: usize,
    /// Aggregated centroids, `L×N` row-major.
    pub mu_hat: Vec<f64>,
    /// Per-subcarrier variance shared by dimensions `2k−1` and `2k`.
    pub eta: Vec<f64>,
}

impl AggregatedStatistics {
    pub fn centroid(&self, l: usize) -> &[f64] {
        &self.mu_hat[l * self.dim..(l + 1) * self.dim]
    }

    /// Variance of feature dimension `n` (0-based).
    pub fn variance(&self, n: usize) -> f64 {
        self.eta[n / 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    PatMc,
    Ideal,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::PatMc => "pat_mc",
            Scheme::Ideal => "ideal",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Scheme::Proposed),
            "pat_mc" => Ok(Scheme::PatMc),
            "ideal" => Ok(Scheme::Ideal),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

/// One row of an accuracy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub scheme: Scheme,
    /// Analytical equivalent SNR, linear.
    pub snr: f64,
    pub classes: usize,
    pub antennas: usize,
    pub users: usize,
    pub subcarriers: usize,
    pub accuracy: f64,
    /// Mean overall discriminant gain; `None` for the ideal scheme.
    pub dg: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// Checks every configuration and statistics invariant and their mutual
/// consistency.
pub fn validate_config(cfg: &SystemConfig, stats: &ClassStatistics) -> Result<()> {
    cfg.check_shape()?;
    if stats.dim() != cfg.feature_dim {
        return Err(Error::DimensionMismatch(format!(
            "statistics have dimension {}, configuration has N = {}",
            stats.dim(),
            cfg.feature_dim
        )));
    }
    Ok(())
}

/// Per-sensor budget `P̃ = SNR·K·σ_c² / (ϖ̂·U)` for a given analytical SNR.
pub fn snr_to_sensor_power(cfg: &SystemConfig, stats: &ClassStatistics, snr: f64) -> Result<f64> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::NonPositiveParameter(format!("SNR = {snr}")));
    }
    if !(cfg.noise_power > 0.0) || cfg.users == 0 {
        return Err(Error::NonPositiveParameter(
            "noise power and user count must be positive".into(),
        ));
    }
    Ok(snr * cfg.subcarriers as f64 * cfg.noise_power / (stats.varpi_hat() * cfg.users as f64))
}
