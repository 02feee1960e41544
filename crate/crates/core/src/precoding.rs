//! Discriminant-gain maximizing precoder design.
//!
//! The joint problem is split into a receive step, a generalized Rayleigh
//! quotient per subcarrier with a closed-form maximizer, and a transmit step,
//! a sum of ratios handled by the quadratic transform. The transformed
//! transmit problem decouples across sensors and is solved from its KKT
//! conditions with a bisection on each sensor's power multiplier.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::metrics::{self, inner, PairwiseSeparation};
use crate::model::{ChannelSet, ClassStatistics, Precoders, SystemConfig};

const OUTER_TOL: f64 = 1e-6;
const OUTER_MAX_ROUNDS: usize = 100;
const INNER_TOL: f64 = 1e-8;
const INNER_MAX_ITERS: usize = 50;
const BACKTRACK_STEPS: usize = 8;
const BISECTION_STEPS: usize = 100;
const BISECTION_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Receive-step quantities for one subcarrier: `g_k = Σ_u v_{u,k} h_{u,k}` and
/// `R_k = Σ_u |v_{u,k}|² h_{u,k} h_{u,k}^H`.
#[derive(Debug, Clone)]
pub struct ReceiveCoefficients {
    pub g: DVector<Complex64>,
    pub r: DMatrix<Complex64>,
}

impl ReceiveCoefficients {
    pub fn new(ch: &ChannelSet, v: &[Complex64], k: usize) -> Self {
        let (m, subcarriers) = (ch.antennas(), ch.subcarriers());
        let mut g = DVector::zeros(m);
        let mut r = DMatrix::zeros(m, m);
        for u in 0..ch.users() {
            let vu = v[u * subcarriers + k];
            let h = DVector::from_column_slice(ch.get(u, k));
            g.axpy(vu, &h, Complex64::new(1.0, 0.0));
            r.gerc(Complex64::new(vu.norm_sqr(), 0.0), &h, &h, Complex64::new(1.0, 0.0));
        }
        Self { g, r }
    }

    /// `|w^H g|² / (δ² w^H R w + σ_c²/2 ‖w‖²)`.
    pub fn objective(&self, delta2: f64, noise_power: f64, w: &[Complex64]) -> f64 {
        let w = DVector::from_column_slice(w);
        let num = w.dotc(&self.g).norm_sqr();
        let quad = w.dotc(&(&self.r * &w)).re;
        num / (delta2 * quad + 0.5 * noise_power * w.norm_squared())
    }
}

fn transmit_len(ch: &ChannelSet, v: &[Complex64]) -> Result<()> {
    if v.len() != ch.users() * ch.subcarriers() {
        return Err(Error::DimensionMismatch(format!(
            "{} transmit coefficients for {} sensors and {} subcarriers",
            v.len(),
            ch.users(),
            ch.subcarriers()
        )));
    }
    Ok(())
}

/// Optimal receive vectors for fixed transmit coefficients, `K×M` row-major,
/// each at full power `P_server`.
pub fn optimize_receive(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
    v: &[Complex64],
) -> Result<Vec<Complex64>> {
    transmit_len(ch, v)?;
    let m = ch.antennas();
    let scale = cfg.server_power.sqrt();
    let mut w = Vec::with_capacity(ch.subcarriers() * m);
    for k in 0..ch.subcarriers() {
        let coef = ReceiveCoefficients::new(ch, v, k);
        if coef.g.iter().all(|z| *z == ZERO) {
            // Any feasible vector attains zero.
            w.push(Complex64::new(scale, 0.0));
            w.extend(std::iter::repeat_n(ZERO, m - 1));
            continue;
        }
        let mut a = coef.r * Complex64::new(stats.delta2()[k], 0.0);
        for i in 0..m {
            a[(i, i)] += 0.5 * cfg.noise_power;
        }
        let solved = a
            .cholesky()
            .ok_or_else(|| Error::NonPositiveParameter("receive system not positive definite".into()))?
            .solve(&coef.g);
        let norm = solved.norm();
        w.extend(solved.iter().map(|z| z * (scale / norm)));
    }
    Ok(w)
}

/// Transmit-step quantities for fixed receive vectors.
#[derive(Debug, Clone)]
pub struct TransmitCoefficients {
    pub users: usize,
    pub subcarriers: usize,
    /// `α_{u,k} = w_k^H h_{u,k}`, `U×K` row-major.
    pub alpha: Vec<Complex64>,
    /// `β_{u,k} = δ_k² |α_{u,k}|²`.
    pub beta: Vec<f64>,
    /// `γ_k = σ_c²/2 ‖w_k‖²`.
    pub gamma: Vec<f64>,
    /// Class-pair weights `Ψ_k`.
    pub weight: Vec<f64>,
}

impl TransmitCoefficients {
    pub fn new(
        cfg: &SystemConfig,
        stats: &ClassStatistics,
        ch: &ChannelSet,
        w: &[Complex64],
    ) -> Result<Self> {
        let (users, subcarriers, m) = (ch.users(), ch.subcarriers(), ch.antennas());
        if w.len() != subcarriers * m {
            return Err(Error::DimensionMismatch(format!(
                "{} receive entries for {subcarriers} subcarriers and {m} antennas",
                w.len()
            )));
        }
        let wk = |k: usize| &w[k * m..(k + 1) * m];
        let mut alpha = Vec::with_capacity(users * subcarriers);
        let mut beta = Vec::with_capacity(users * subcarriers);
        for u in 0..users {
            for k in 0..subcarriers {
                let a = inner(wk(k), ch.get(u, k));
                alpha.push(a);
                beta.push(stats.delta2()[k] * a.norm_sqr());
            }
        }
        let gamma = (0..subcarriers)
            .map(|k| 0.5 * cfg.noise_power * metrics::norm_sqr(wk(k)))
            .collect();
        Ok(Self {
            users,
            subcarriers,
            alpha,
            beta,
            gamma,
            weight: PairwiseSeparation::new(stats).pair_weights(),
        })
    }

    fn numerator(&self, v: &[Complex64], k: usize) -> Complex64 {
        (0..self.users)
            .map(|u| self.alpha[u * self.subcarriers + k] * v[u * self.subcarriers + k])
            .sum()
    }

    fn denominator(&self, v: &[Complex64], k: usize) -> f64 {
        let idx = |u: usize| u * self.subcarriers + k;
        (0..self.users)
            .map(|u| self.beta[idx(u)] * v[idx(u)].norm_sqr())
            .sum::<f64>()
            + self.gamma[k]
    }

    /// `Σ_k Ψ_k |Σ_u α v|² / (Σ_u β |v|² + γ_k)`; the overall gain up to the
    /// factor `2/(L(L−1))`.
    pub fn objective(&self, v: &[Complex64]) -> f64 {
        (0..self.subcarriers)
            .filter(|&k| self.weight[k] > 0.0)
            .map(|k| self.weight[k] * self.numerator(v, k).norm_sqr() / self.denominator(v, k))
            .sum()
    }

    /// Auxiliary variables `χ_k = Σ_u α v / (Σ_u β |v|² + γ_k)` that make the
    /// surrogate tight at `v`.
    pub fn auxiliary(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.subcarriers)
            .map(|k| self.numerator(v, k) / self.denominator(v, k))
            .collect()
    }

    /// Quadratic-transform surrogate
    /// `Σ_k Ψ_k (2Re{χ_k^* Σ_u α v} − |χ_k|² (Σ_u β |v|² + γ_k))`.
    pub fn surrogate(&self, chi: &[Complex64], v: &[Complex64]) -> f64 {
        (0..self.subcarriers)
            .map(|k| {
                let lin = 2.0 * (chi[k].conj() * self.numerator(v, k)).re;
                self.weight[k] * (lin - chi[k].norm_sqr() * self.denominator(v, k))
            })
            .sum()
    }

    /// Maximizes the surrogate for fixed `χ` under the per-sensor budgets.
    ///
    /// Stationarity gives `v_{u,k} = Ψ_k χ_k α_{u,k}^* / (Ψ_k |χ_k|² β_{u,k} + λ_u)`;
    /// `λ_u` is zero when that point is inside the budget and otherwise found by
    /// bisection so the budget is met with equality.
    pub fn maximize_surrogate(&self, chi: &[Complex64], budget: f64) -> Vec<Complex64> {
        let k_count = self.subcarriers;
        let mut v = vec![ZERO; self.users * k_count];
        let mut lin = vec![ZERO; k_count];
        let mut curv = vec![0.0; k_count];
        for u in 0..self.users {
            for k in 0..k_count {
                let idx = u * k_count + k;
                lin[k] = self.weight[k] * chi[k] * self.alpha[idx].conj();
                curv[k] = self.weight[k] * chi[k].norm_sqr() * self.beta[idx];
            }
            let lambda = power_multiplier(&lin, &curv, budget);
            for k in 0..k_count {
                if lin[k] != ZERO {
                    v[u * k_count + k] = lin[k] / (curv[k] + lambda);
                }
            }
        }
        v
    }
}

fn allocated_power(lin: &[Complex64], curv: &[f64], lambda: f64) -> f64 {
    lin.iter()
        .zip(curv)
        .filter(|(c, _)| **c != ZERO)
        .map(|(c, d)| c.norm_sqr() / ((d + lambda) * (d + lambda)))
        .sum()
}

/// Smallest `λ ≥ 0` with `Σ_k |c_k|² / (d_k + λ)² ≤ budget`.
fn power_multiplier(lin: &[Complex64], curv: &[f64], budget: f64) -> f64 {
    let total: f64 = lin.iter().map(|c| c.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let unbounded = lin.iter().zip(curv).any(|(c, d)| *c != ZERO && *d == 0.0);
    if !unbounded && allocated_power(lin, curv, 0.0) <= budget {
        return 0.0;
    }
    // At λ = sqrt(Σ|c|²/P) every term is at most |c_k|²/λ², so the budget holds.
    let (mut lo, mut hi) = (0.0, (total / budget).sqrt());
    for _ in 0..BISECTION_STEPS {
        if hi - lo <= BISECTION_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if allocated_power(lin, curv, mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Debug, Clone)]
pub struct TransmitSolution {
    pub v: Vec<Complex64>,
    /// Value of [`TransmitCoefficients::objective`] at `v`.
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
}

/// Quadratic-transform iterations on the transmit coefficients for fixed
/// receive vectors, warm-started from `warm`.
pub fn optimize_transmit(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
    w: &[Complex64],
    warm: &[Complex64],
) -> Result<TransmitSolution> {
    transmit_len(ch, warm)?;
    let budget = cfg.sensor_budget(stats)?;
    let coef = TransmitCoefficients::new(cfg, stats, ch, w)?;
    if let Some(k) = coef.gamma.iter().position(|&g| g == 0.0) {
        return Err(Error::ZeroDenominator(k));
    }
    Ok(transmit_iterations(&coef, warm, budget))
}

fn transmit_iterations(coef: &TransmitCoefficients, warm: &[Complex64], budget: f64) -> TransmitSolution {
    let mut best = warm.to_vec();
    let mut best_obj = coef.objective(&best);
    for iter in 1..=INNER_MAX_ITERS {
        let chi = coef.auxiliary(&best);
        let candidate = coef.maximize_surrogate(&chi, budget);
        let obj = coef.objective(&candidate);
        let gain = obj - best_obj;
        if obj >= best_obj {
            best = candidate;
            best_obj = obj;
        }
        if gain <= INNER_TOL * best_obj.abs() {
            return TransmitSolution {
                v: best,
                objective: best_obj,
                iterations: iter,
                converged: true,
            };
        }
    }
    TransmitSolution {
        v: best,
        objective: best_obj,
        iterations: INNER_MAX_ITERS,
        converged: false,
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerReport {
    /// Overall gain at the initial point and after every round.
    pub dg_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Rounds whose transmit step hit its iteration cap.
    pub transmit_cap_hits: usize,
    pub final_precoders: Precoders,
}

impl OptimizerReport {
    /// Overall gain of `final_precoders`, the best iterate.
    pub fn final_dg(&self) -> f64 {
        self.dg_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One alternating round: exact receive step for `v`, then the transmit
/// iterations warm-started at `v`.
fn ao_round(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
    v: &[Complex64],
    budget: f64,
) -> Result<(Precoders, f64, bool)> {
    let w = optimize_receive(cfg, stats, ch, v)?;
    let coef = TransmitCoefficients::new(cfg, stats, ch, &w)?;
    let tx = transmit_iterations(&coef, v, budget);
    let pc = Precoders::new(ch.users(), ch.subcarriers(), ch.antennas(), tx.v, w)?;
    let dg = metrics::overall_dg(cfg, stats, ch, &pc)?;
    Ok((pc, dg, tx.converged))
}

/// Scales every row of `v` back onto the per-sensor budget if it exceeds it.
fn project_budget(v: &mut [Complex64], subcarriers: usize, budget: f64) {
    for row in v.chunks_mut(subcarriers) {
        let p: f64 = row.iter().map(|z| z.norm_sqr()).sum();
        if p > budget {
            let s = (budget / p).sqrt();
            row.iter_mut().for_each(|z| *z *= s);
        }
    }
}

/// Squared-extrapolation step length from three successive iterates, with
/// the differences `r = v1 − v0` and `q = v2 − 2v1 + v0`.
fn squarem_step(v0: &[Complex64], v1: &[Complex64], v2: &[Complex64]) -> Option<(f64, Vec<Complex64>, Vec<Complex64>)> {
    let r: Vec<Complex64> = v1.iter().zip(v0).map(|(a, b)| a - b).collect();
    let q: Vec<Complex64> = v2.iter().zip(v1).zip(&r).map(|((a, b), c)| a - b - c).collect();
    let rn = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let qn = q.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(qn > 0.0) {
        return None;
    }
    Some(((-rn / qn).min(-1.0), r, q))
}

/// Overall gain of `v` completed by an exact receive step.
fn receive_completed_dg(cfg: &SystemConfig, stats: &ClassStatistics, ch: &ChannelSet, v: &[Complex64]) -> Result<f64> {
    let w = optimize_receive(cfg, stats, ch, v)?;
    let pc = Precoders::new(ch.users(), ch.subcarriers(), ch.antennas(), v.to_vec(), w)?;
    metrics::overall_dg(cfg, stats, ch, &pc)
}

/// Extrapolated transmit point that beats `best_dg` after a receive step,
/// halving the step towards the plain iterate until one does.
fn extrapolate(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
    history: &[Vec<Complex64>],
    best_dg: f64,
    budget: f64,
) -> Result<Option<Vec<Complex64>>> {
    let [v0, v1, v2] = history else {
        return Ok(None);
    };
    let Some((mut alpha, r, q)) = squarem_step(v0, v1, v2) else {
        return Ok(None);
    };
    for _ in 0..BACKTRACK_STEPS {
        if alpha > -1.0 - 1e-3 {
            break;
        }
        let mut v: Vec<Complex64> = v0
            .iter()
            .zip(&r)
            .zip(&q)
            .map(|((a, b), c)| a - b * (2.0 * alpha) + c * (alpha * alpha))
            .collect();
        project_budget(&mut v, ch.subcarriers(), budget);
        if receive_completed_dg(cfg, stats, ch, &v)? > best_dg {
            return Ok(Some(v));
        }
        alpha = 0.5 * (alpha - 1.0);
    }
    Ok(None)
}

/// Alternates receive and transmit steps from a feasible starting point until
/// the overall gain stalls.
///
/// After every two accepted rounds the transmit iterates are extrapolated
/// along a squared step and completed by one more round; the result is kept
/// only if it beats the current best, so the trace stays non-decreasing.
/// `iterations` counts every round, extrapolated ones included.
pub fn alternating_optimize(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
    init: &Precoders,
) -> Result<OptimizerReport> {
    init.check_against(ch)?;
    let budget = cfg.sensor_budget(stats)?;
    let mut best = init.clone();
    let mut best_dg = metrics::overall_dg(cfg, stats, ch, &best)?;
    let mut trace = vec![best_dg];
    let mut cap_hits = 0;
    let mut converged = false;
    let mut rounds = 0;
    let mut history: Vec<Vec<Complex64>> = vec![best.transmit().to_vec()];

    while rounds < OUTER_MAX_ROUNDS {
        rounds += 1;
        let (pc, dg, ok) = ao_round(cfg, stats, ch, best.transmit(), budget)?;
        cap_hits += usize::from(!ok);
        let gain = dg - best_dg;
        trace.push(dg);
        if dg >= best_dg {
            best = pc;
            best_dg = dg;
            history.push(best.transmit().to_vec());
        }
        if gain <= OUTER_TOL * best_dg.abs() {
            converged = true;
            break;
        }
        if history.len() < 3 || rounds >= OUTER_MAX_ROUNDS {
            continue;
        }
        let start = history.len() - 3;
        let candidate = extrapolate(cfg, stats, ch, &history[start..], best_dg, budget)?;
        history.clear();
        history.push(best.transmit().to_vec());
        let Some(vx) = candidate else {
            continue;
        };
        rounds += 1;
        let (pc, dg, ok) = ao_round(cfg, stats, ch, &vx, budget)?;
        cap_hits += usize::from(!ok);
        trace.push(dg.max(best_dg));
        if dg > best_dg {
            best = pc;
            best_dg = dg;
            history[0] = best.transmit().to_vec();
        }
    }

    Ok(OptimizerReport {
        dg_trace: trace,
        iterations: rounds,
        converged,
        transmit_cap_hits: cap_hits,
        final_precoders: best,
    })
}

/// Phase-aligned transmission with matched combining.
pub fn pat_mc_precoders(
    cfg: &SystemConfig,
    stats: &ClassStatistics,
    ch: &ChannelSet,
) -> Result<Precoders> {
    let budget = cfg.sensor_budget(stats)?;
    let (users, subcarriers, m) = (ch.users(), ch.subcarriers(), ch.antennas());
    let mut w = Vec::with_capacity(subcarriers * m);
    for k in 0..subcarriers {
        let mut sum = vec![ZERO; m];
        for u in 0..users {
            for (acc, h) in sum.iter_mut().zip(ch.get(u, k)) {
                *acc += h;
            }
        }
        let norm = metrics::norm_sqr(&sum).sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateChannel(format!(
                "channel sum of subcarrier {} is zero",
                k + 1
            )));
        }
        let scale = cfg.server_power.sqrt() / norm;
        w.extend(sum.iter().map(|z| z * scale));
    }

    let amplitude = (budget / subcarriers as f64).sqrt();
    let mut v = Vec::with_capacity(users * subcarriers);
    for u in 0..users {
        for k in 0..subcarriers {
            let a = inner(&w[k * m..(k + 1) * m], ch.get(u, k));
            let mag = a.norm();
            if mag == 0.0 {
                return Err(Error::DegenerateChannel(format!(
                    "effective channel of sensor {} on subcarrier {} is zero",
                    u + 1,
                    k + 1
                )));
            }
            v.push(a.conj() * (amplitude / mag));
        }
    }
    Precoders::new(users, subcarriers, m, v, w)
}
