//! Seeded generators for Gaussian-mixture features and Rayleigh channels, and
//! readers for externally computed feature statistics and samples.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{ChannelSet, ClassStatistics, SystemConfig};

/// Independent random streams used within one Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Channel = 1,
    Feature = 2,
    Noise = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `(trial, stream)` under a master seed. Pure function, so trials
/// can run in any order.
pub fn derive_seed(master: u64, trial: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ trial) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn trial_rng(master: u64, trial: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, trial, stream as u64))
}

/// Placement of the `−1` centroid block for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockRule {
    /// Requires `L | N`.
    #[default]
    Exact,
    /// Dimension `n` (1-based) belongs to class `ceil(n·L/N)`. Identical to
    /// `Exact` whenever `L | N`.
    Rounded,
}

/// Synthetic class statistics: class `l` has `−1` on its block of
/// dimensions and `+1` elsewhere, with `Σ = 3I`.
pub fn make_synthetic_stats(classes: usize, dim: usize, rule: BlockRule) -> Result<ClassStatistics> {
    if classes < 2 {
        return Err(Error::TooFewClasses(classes));
    }
    if rule == BlockRule::Exact && !dim.is_multiple_of(classes) {
        return Err(Error::IndivisibleBlock { classes, dim });
    }
    let centroids = (1..=classes)
        .map(|l| {
            (1..=dim)
                .map(|n| if (n * classes).div_ceil(dim) == l { -1.0 } else { 1.0 })
                .collect()
        })
        .collect();
    ClassStatistics::new(centroids, vec![3.0; dim])
}

/// Local features of all sensors observing one object.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    /// 0-based class index.
    pub true_class: usize,
    users: usize,
    dim: usize,
    x: Vec<f64>,
}

impl FeatureSample {
    pub fn new(true_class: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let users = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if users == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(
                "feature sample rows must be non-empty and equally long".into(),
            ));
        }
        Ok(Self {
            true_class,
            users,
            dim,
            x: rows.into_iter().flatten().collect(),
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sensor(&self, u: usize) -> &[f64] {
        &self.x[u * self.dim..(u + 1) * self.dim]
    }
}

/// Draws `users` independent feature vectors from `N(μ_class, diag(σ²))`.
pub fn sample_features<R: Rng + ?Sized>(
    stats: &ClassStatistics,
    users: usize,
    class: usize,
    rng: &mut R,
) -> Result<FeatureSample> {
    if class >= stats.classes() {
        return Err(Error::ClassOutOfRange {
            index: class,
            classes: stats.classes(),
        });
    }
    let dim = stats.dim();
    let mu = stats.centroid(class);
    let sd: Vec<f64> = stats.sigma2().iter().map(|s| s.sqrt()).collect();
    let mut x = Vec::with_capacity(users * dim);
    for _ in 0..users {
        for n in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            x.push(mu[n] + sd[n] * z);
        }
    }
    Ok(FeatureSample {
        true_class: class,
        users,
        dim,
        x,
    })
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// i.i.d. Rayleigh fading, `h_{u,k} ~ CN(0, I_M)`.
pub fn sample_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelSet {
    ChannelSet::from_fn(cfg.users, cfg.subcarriers, cfg.antennas, |_, _, _| {
        complex_normal(rng)
    })
}

fn parse_reals(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|field| {
            let field = field.trim();
            field.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("`{field}` is not a number"),
            })
        })
        .collect()
}

fn parse_count(field: &str, key: &str, lineno: usize) -> Result<usize> {
    let field = field.trim();
    let value = field
        .strip_prefix(key)
        .and_then(|rest| rest.trim_start().strip_prefix('='))
        .unwrap_or(field)
        .trim();
    value.parse().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("`{field}` is not a count"),
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses a statistics file: `L,N` (or `L=..,N=..`), then `L` centroid rows,
/// then one row of `N` variances.
pub fn parse_stats(text: &str) -> Result<ClassStatistics> {
    let mut lines = content_lines(text);
    let (lineno, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty statistics file".into(),
    })?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 2 {
        return Err(Error::Parse {
            line: lineno,
            msg: "header must be `L,N`".into(),
        });
    }
    let classes = parse_count(fields[0], "L", lineno)?;
    let dim = parse_count(fields[1], "N", lineno)?;

    let mut rows = Vec::with_capacity(classes + 1);
    for _ in 0..=classes {
        let (lineno, line) = lines.next().ok_or(Error::Parse {
            line: lineno,
            msg: format!("expected {} centroid rows and one variance row", classes),
        })?;
        let row = parse_reals(line, lineno)?;
        if row.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("{} values, expected {dim}", row.len()),
            });
        }
        rows.push(row);
    }
    if let Some((lineno, _)) = lines.next() {
        return Err(Error::Parse {
            line: lineno,
            msg: "trailing content after variance row".into(),
        });
    }
    let sigma2 = rows.pop().expect("variance row");
    ClassStatistics::new(rows, sigma2)
}

pub fn load_external_stats(path: impl AsRef<Path>) -> Result<ClassStatistics> {
    parse_stats(&fs::read_to_string(path)?)
}

/// Renders statistics in the format read by [`parse_stats`].
pub fn format_stats(stats: &ClassStatistics) -> String {
    let row = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:?}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = format!("{},{}\n", stats.classes(), stats.dim());
    for l in 0..stats.classes() {
        out.push_str(&row(stats.centroid(l)));
        out.push('\n');
    }
    out.push_str(&row(stats.sigma2()));
    out.push('\n');
    out
}

/// Parses a samples file with rows `class,u,x_1,...,x_N` (class and sensor
/// 1-based). A sample is the run of rows with `u = 1, 2, ..., U`.
pub fn parse_samples(text: &str, stats: &ClassStatistics) -> Result<Vec<FeatureSample>> {
    let dim = stats.dim();
    let mut samples = Vec::new();
    let mut current: Option<(usize, Vec<Vec<f64>>)> = None;
    let mut users: Option<usize> = None;

    let mut finish = |cur: Option<(usize, Vec<Vec<f64>>)>, lineno: usize| -> Result<()> {
        if let Some((class, rows)) = cur {
            match users {
                Some(u) if u != rows.len() => {
                    return Err(Error::DimensionMismatch(format!(
                        "sample ending before line {lineno} has {} sensors, expected {u}",
                        rows.len()
                    )))
                }
                _ => users = Some(rows.len()),
            }
            samples.push(FeatureSample::new(class, rows)?);
        }
        Ok(())
    };

    for (lineno, line) in content_lines(text) {
        let values = parse_reals(line, lineno)?;
        if values.len() != dim + 2 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("{} feature values, expected {dim}", values.len().saturating_sub(2)),
            });
        }
        let as_index = |v: f64, what: &str| -> Result<usize> {
            if v.fract() != 0.0 || v < 1.0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("{what} `{v}` is not a 1-based index"),
                });
            }
            Ok(v as usize - 1)
        };
        let class = as_index(values[0], "class")?;
        let u = as_index(values[1], "sensor")?;
        if class >= stats.classes() {
            return Err(Error::ClassOutOfRange {
                index: class,
                classes: stats.classes(),
            });
        }
        let x = values[2..].to_vec();
        if u == 0 {
            finish(current.take(), lineno)?;
            current = Some((class, vec![x]));
        } else {
            match current.as_mut() {
                Some((c, rows)) if *c == class && rows.len() == u => rows.push(x),
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "sensor rows must run 1..U within one class".into(),
                    })
                }
            }
        }
    }
    finish(current.take(), usize::MAX)?;
    Ok(samples)
}

pub fn load_external_samples(
    path: impl AsRef<Path>,
    stats: &ClassStatistics,
) -> Result<Vec<FeatureSample>> {
    parse_samples(&fs::read_to_string(path)?, stats)
}
