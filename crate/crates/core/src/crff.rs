//! Conditional random Fourier features.
//!
//! A density `p` on a box is approximated by the Monte-Carlo truncated inverse
//! Fourier transform
//! `p(y) ~ (Vol(B_W) / d) sum_k Re(g_k exp(2 pi i w_k . y))`
//! where `w_k` are uniform on the ball `B_W` and `g_k` is the empirical
//! characteristic function of `N` samples. The estimate factorizes as
//! `phi_hat . mu(y)` with a sample-dependent `phi_hat` and a fixed
//! trigonometric `mu`.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{seeded, stream};
use crate::stats::{log_log_slope, median};

#[derive(Debug, Error, PartialEq)]
pub enum CrffError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("need at least one frequency")]
    NoFrequencies,
    #[error("need at least one sample")]
    NoSamples,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("feature length {got}, expected {expected}")]
    FeatureLength { got: usize, expected: usize },
    #[error("point has {got} coordinates, expected {expected}")]
    PointDimension { got: usize, expected: usize },
    #[error("sweep grid `{0}` is empty")]
    EmptyGrid(&'static str),
    #[error("quadrature grid needs at least 3 points")]
    CoarseGrid,
}

/// Volume of the `dim`-ball of radius `radius`.
pub fn ball_volume(dim: usize, radius: f64) -> f64 {
    // V_0 = 1, V_1 = 2, V_n = V_{n-2} 2 pi / n on the unit ball
    let (mut even, mut odd) = (1.0, 2.0);
    let mut unit = if dim == 0 { 1.0 } else { 2.0 };
    for n in 2..=dim {
        if n % 2 == 0 {
            even *= TAU / n as f64;
            unit = even;
        } else {
            odd *= TAU / n as f64;
            unit = odd;
        }
    }
    unit * radius.powi(dim as i32)
}

/// `d` frequencies drawn uniformly from the ball of radius `W` in `R^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBank {
    dim: usize,
    radius: f64,
    vol: f64,
    seed: u64,
    /// Row-major `d x D`.
    freqs: Vec<f64>,
}

impl FrequencyBank {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn vol(&self) -> f64 {
        self.vol
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.freqs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn freq(&self, k: usize) -> &[f64] {
        &self.freqs[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.freqs.chunks_exact(self.dim)
    }

    /// The first `d` frequencies, as if sampled with `d` directly.
    pub fn prefix(&self, d: usize) -> Result<Self, CrffError> {
        if d == 0 {
            return Err(CrffError::NoFrequencies);
        }
        let d = d.min(self.len());
        Ok(Self {
            freqs: self.freqs[..d * self.dim].to_vec(),
            ..self.clone()
        })
    }

    /// Feature length `2d`.
    pub fn feature_len(&self) -> usize {
        2 * self.len()
    }
}

/// Radial method: Gaussian direction, radius `W U^{1/D}`. Banks sampled with
/// the same seed are prefixes of each other.
pub fn sample_frequencies(radius: f64, d: usize, dim: usize, seed: u64) -> Result<FrequencyBank, CrffError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(CrffError::NonPositiveRadius(radius));
    }
    if d == 0 {
        return Err(CrffError::NoFrequencies);
    }
    if dim == 0 {
        return Err(CrffError::ZeroDimension);
    }
    let mut rng = seeded(seed, stream::FREQUENCIES);
    let mut freqs = Vec::with_capacity(d * dim);
    let mut dir = vec![0.0; dim];
    for _ in 0..d {
        let norm = loop {
            dir.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                break n;
            }
        };
        let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
        freqs.extend(dir.iter().map(|x| x / norm * r));
    }
    Ok(FrequencyBank {
        dim,
        radius,
        vol: ball_volume(dim, radius),
        seed,
        freqs,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(cos(2 pi w_k . y), -sin(2 pi w_k . y)) / sqrt(d)` interleaved.
pub fn mu_features(y: &[f64], bank: &FrequencyBank) -> Result<Vec<f64>, CrffError> {
    if y.len() != bank.dim {
        return Err(CrffError::PointDimension {
            got: y.len(),
            expected: bank.dim,
        });
    }
    let scale = 1.0 / (bank.len() as f64).sqrt();
    let mut out = Vec::with_capacity(bank.feature_len());
    for w in bank.iter() {
        let (s, c) = (TAU * dot(w, y)).sin_cos();
        out.push(c * scale);
        out.push(-s * scale);
    }
    Ok(out)
}

/// Real and imaginary parts of the empirical characteristic function
/// `(1/N) sum_i exp(-2 pi i w . y_i)` at one frequency.
fn char_fn(w: &[f64], samples: &[f64], dim: usize) -> (f64, f64) {
    let n = samples.len() / dim;
    let (mut re, mut im) = (0.0, 0.0);
    for y in samples.chunks_exact(dim) {
        let (s, c) = (TAU * dot(w, y)).sin_cos();
        re += c;
        im -= s;
    }
    (re / n as f64, im / n as f64)
}

/// Empirical characteristic function at every frequency of the bank;
/// `samples` is row-major `N x D`.
pub fn empirical_char_fn(samples: &[f64], bank: &FrequencyBank) -> Result<Vec<(f64, f64)>, CrffError> {
    if samples.is_empty() {
        return Err(CrffError::NoSamples);
    }
    if !samples.len().is_multiple_of(bank.dim) {
        return Err(CrffError::PointDimension {
            got: samples.len() % bank.dim,
            expected: bank.dim,
        });
    }
    let dim = bank.dim;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok(bank
            .freqs
            .par_chunks_exact(dim)
            .map(|w| char_fn(w, samples, dim))
            .collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(bank.iter().map(|w| char_fn(w, samples, dim)).collect())
    }
}

/// `(g_1^re, g_1^im, ..., g_d^re, g_d^im) Vol(B_W) / sqrt(d)`.
pub fn phi_hat(samples: &[f64], bank: &FrequencyBank) -> Result<Vec<f64>, CrffError> {
    let g = empirical_char_fn(samples, bank)?;
    let scale = bank.vol / (bank.len() as f64).sqrt();
    Ok(g.into_iter().flat_map(|(re, im)| [re * scale, im * scale]).collect())
}

/// `phi_hat . mu(y)`, unclamped.
pub fn approx_density(phi_hat: &[f64], mu_y: &[f64]) -> Result<f64, CrffError> {
    if phi_hat.len() != mu_y.len() {
        return Err(CrffError::FeatureLength {
            got: mu_y.len(),
            expected: phi_hat.len(),
        });
    }
    Ok(dot(phi_hat, mu_y))
}

/// `(Vol / d) sum_k Re(g_k exp(2 pi i w_k . y))` evaluated directly.
pub fn truncated_fourier_sum(g: &[(f64, f64)], bank: &FrequencyBank, y: &[f64]) -> f64 {
    let total: f64 = bank
        .iter()
        .zip(g)
        .map(|(w, &(re, im))| {
            let theta = TAU * dot(w, y);
            re * theta.cos() - im * theta.sin()
        })
        .sum();
    bank.vol / bank.len() as f64 * total
}

/// A density on `[0, 1]^D` with a sampler.
pub trait DensityOracle: Sync {
    fn dim(&self) -> usize;
    fn pdf(&self, y: &[f64]) -> f64;
    /// Upper bound on the density.
    fn sup(&self) -> f64;
    /// Smoothness order of the density at the boundary; `None` when infinite.
    fn smoothness(&self) -> Option<u32>;
    fn name(&self) -> &'static str;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>
    where
        Self: Sized,
    {
        // rejection from the uniform box
        let m = self.sup();
        let mut y = vec![0.0; self.dim()];
        loop {
            y.iter_mut().for_each(|x| *x = rng.random::<f64>());
            if rng.random::<f64>() * m <= self.pdf(&y) {
                return y;
            }
        }
    }
}

/// `N` samples, row-major, from the density sample stream.
pub fn draw_samples<D: DensityOracle>(density: &D, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed, stream::DENSITY_SAMPLES);
    (0..n).flat_map(|_| density.sample(&mut rng)).collect()
}

/// Composite Simpson weights for `n` (odd) equispaced points on `[0, 1]`.
pub fn simpson_weights(n: usize) -> Result<Vec<f64>, CrffError> {
    if n < 3 {
        return Err(CrffError::CoarseGrid);
    }
    let n = if n.is_multiple_of(2) { n + 1 } else { n };
    let h = 1.0 / (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect())
}

fn simpson_1d(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let w = simpson_weights(n).expect("n >= 3");
    let step = 1.0 / (w.len() - 1) as f64;
    w.iter().enumerate().map(|(i, wi)| wi * f(i as f64 * step)).sum()
}

fn raw_bump(y: f64) -> f64 {
    let x = 2.0 * y - 1.0;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// Product of `c exp(-1/(1-(2y-1)^2))` over coordinates; vanishes with all
/// derivatives on the boundary of the unit box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpDensity {
    dim: usize,
    norm: f64,
}

impl BumpDensity {
    pub fn new(dim: usize) -> Result<Self, CrffError> {
        if dim == 0 {
            return Err(CrffError::ZeroDimension);
        }
        Ok(Self {
            dim,
            norm: 1.0 / simpson_1d(raw_bump, 1 << 14),
        })
    }

    /// One-dimensional normalizing constant `c`.
    pub fn constant(&self) -> f64 {
        self.norm
    }
}

impl DensityOracle for BumpDensity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn pdf(&self, y: &[f64]) -> f64 {
        y.iter().map(|&v| self.norm * raw_bump(v)).product()
    }

    fn sup(&self) -> f64 {
        (self.norm * (-1f64).exp()).powi(self.dim as i32)
    }

    fn smoothness(&self) -> Option<u32> {
        None
    }

    fn name(&self) -> &'static str {
        "bump"
    }
}

/// Isotropic Gaussian truncated to the unit box. It does not vanish on the
/// boundary, so truncation error decays slowly in `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedGaussian {
    dim: usize,
    mean: f64,
    sd: f64,
    norm: f64,
}

impl TruncatedGaussian {
    pub fn new(dim: usize, mean: f64, sd: f64) -> Result<Self, CrffError> {
        if dim == 0 {
            return Err(CrffError::ZeroDimension);
        }
        let raw = |y: f64| (-0.5 * ((y - mean) / sd).powi(2)).exp();
        Ok(Self {
            dim,
            mean,
            sd,
            norm: 1.0 / simpson_1d(raw, 1 << 14),
        })
    }
}

impl DensityOracle for TruncatedGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn pdf(&self, y: &[f64]) -> f64 {
        y.iter()
            .map(|&v| {
                if (0.0..=1.0).contains(&v) {
                    self.norm * (-0.5 * ((v - self.mean) / self.sd).powi(2)).exp()
                } else {
                    0.0
                }
            })
            .product()
    }

    fn sup(&self) -> f64 {
        let peak = self.mean.clamp(0.0, 1.0);
        self.pdf(&vec![peak; self.dim])
    }

    fn smoothness(&self) -> Option<u32> {
        Some(0)
    }

    fn name(&self) -> &'static str {
        "truncated-gaussian"
    }
}

/// Simpson integral of the density over the unit box with `n` points per axis
/// (`D <= 2`).
pub fn quadrature_mass<D: DensityOracle>(density: &D, n: usize) -> Result<f64, CrffError> {
    let w = simpson_weights(n)?;
    let step = 1.0 / (w.len() - 1) as f64;
    Ok(match density.dim() {
        1 => w.iter().enumerate().map(|(i, wi)| wi * density.pdf(&[i as f64 * step])).sum(),
        _ => {
            let mut total = 0.0;
            for (i, wi) in w.iter().enumerate() {
                for (j, wj) in w.iter().enumerate() {
                    let mut y = vec![0.5; density.dim()];
                    y[0] = i as f64 * step;
                    y[1] = j as f64 * step;
                    total += wi * wj * density.pdf(&y);
                }
            }
            total
        }
    })
}

/// Equispaced evaluation grid with `n` points per axis over the unit box.
pub fn eval_grid(dim: usize, n: usize) -> Vec<Vec<f64>> {
    let step = 1.0 / (n.max(2) - 1) as f64;
    let mut points = vec![Vec::new()];
    for _ in 0..dim {
        points = points
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |i| {
                    let mut q = p.clone();
                    q.push(i as f64 * step);
                    q
                })
            })
            .collect();
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridError {
    pub max_err: f64,
    pub mean_err: f64,
}

/// Max and mean of `|pdf - estimate|` over `points`.
pub fn grid_error<D: DensityOracle>(density: &D, g: &[(f64, f64)], bank: &FrequencyBank, points: &[Vec<f64>]) -> GridError {
    let err = |y: &Vec<f64>| (density.pdf(y) - truncated_fourier_sum(g, bank, y)).abs();
    #[cfg(feature = "parallel")]
    let errs: Vec<f64> = {
        use rayon::prelude::*;
        points.par_iter().map(err).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let errs: Vec<f64> = points.iter().map(err).collect();
    GridError {
        max_err: errs.iter().copied().fold(0.0, f64::max),
        mean_err: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
    }
}

/// Estimate error for one `(W, d, N, seed)` cell.
pub fn estimate_error<D: DensityOracle>(
    density: &D,
    radius: f64,
    d: usize,
    n: usize,
    seed: u64,
    grid_points: usize,
) -> Result<GridError, CrffError> {
    let bank = sample_frequencies(radius, d, density.dim(), seed)?;
    let samples = draw_samples(density, n, seed);
    let g = empirical_char_fn(&samples, &bank)?;
    Ok(grid_error(density, &g, &bank, &eval_grid(density.dim(), grid_points)))
}

/// Which parameter a sweep row varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    W,
    D,
    N,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::W => "W",
            Axis::D => "d",
            Axis::N => "N",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub axis: Axis,
    pub radius: f64,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub max_err: f64,
    pub mean_err: f64,
}

/// `W` varies with `d` and `N` fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusSweep {
    pub radii: Vec<f64>,
    pub d: usize,
    pub n: usize,
}

/// `d` varies with `W` and `N` fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSweep {
    pub ds: Vec<usize>,
    pub radius: f64,
    pub n: usize,
}

/// `N` varies with `W` and `d` fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSweep {
    pub ns: Vec<usize>,
    pub radius: f64,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub radius_axis: RadiusSweep,
    pub feature_axis: FeatureSweep,
    pub sample_axis: SampleSweep,
    pub seeds: Vec<u64>,
    pub grid_points: usize,
}

impl SweepSpec {
    /// Settings used for the decay-exponent check on the 1-D bump: the
    /// held-fixed axis is large enough that its error term sits well below
    /// the varied one.
    pub fn bump_default(seeds: Vec<u64>) -> Self {
        Self {
            radius_axis: RadiusSweep {
                radii: vec![0.5, 1.0, 2.0, 4.0],
                d: 2048,
                n: 20_000,
            },
            feature_axis: FeatureSweep {
                ds: vec![16, 32, 64, 128, 256],
                radius: 8.0,
                n: 100_000,
            },
            sample_axis: SampleSweep {
                ns: vec![100, 200, 400, 800, 1600, 3200],
                radius: 8.0,
                d: 16_384,
            },
            seeds,
            grid_points: 512,
        }
    }

    fn validate(&self) -> Result<(), CrffError> {
        if self.radius_axis.radii.is_empty() {
            return Err(CrffError::EmptyGrid("W"));
        }
        if self.feature_axis.ds.is_empty() {
            return Err(CrffError::EmptyGrid("d"));
        }
        if self.sample_axis.ns.is_empty() {
            return Err(CrffError::EmptyGrid("N"));
        }
        if self.seeds.is_empty() {
            return Err(CrffError::EmptyGrid("seeds"));
        }
        if self.grid_points < 3 {
            return Err(CrffError::CoarseGrid);
        }
        let radii = self.radius_axis.radii.iter().chain([&self.feature_axis.radius, &self.sample_axis.radius]);
        if let Some(&r) = radii.into_iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(CrffError::NonPositiveRadius(r));
        }
        let ds = self.feature_axis.ds.iter().chain([&self.radius_axis.d, &self.sample_axis.d]);
        if ds.into_iter().any(|&d| d == 0) {
            return Err(CrffError::NoFrequencies);
        }
        let ns = self.sample_axis.ns.iter().chain([&self.radius_axis.n, &self.feature_axis.n]);
        if ns.into_iter().any(|&n| n == 0) {
            return Err(CrffError::NoSamples);
        }
        Ok(())
    }
}

/// Empirical characteristic function on the first `n` samples for each `n`
/// in `checkpoints` (sorted ascending), in one pass over the samples.
pub fn char_fn_prefixes(samples: &[f64], bank: &FrequencyBank, checkpoints: &[usize]) -> Vec<Vec<(f64, f64)>> {
    let dim = bank.dim;
    let per_freq = |w: &[f64]| {
        let mut out = Vec::with_capacity(checkpoints.len());
        let (mut re, mut im) = (0.0, 0.0);
        let mut next = checkpoints.iter().peekable();
        for (i, y) in samples.chunks_exact(dim).enumerate() {
            let (s, c) = (TAU * dot(w, y)).sin_cos();
            re += c;
            im -= s;
            while next.peek().is_some_and(|&&n| n == i + 1) {
                let n = *next.next().expect("peeked") as f64;
                out.push((re / n, im / n));
            }
        }
        out
    };
    #[cfg(feature = "parallel")]
    let by_freq: Vec<Vec<(f64, f64)>> = {
        use rayon::prelude::*;
        bank.freqs.par_chunks_exact(dim).map(per_freq).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let by_freq: Vec<Vec<(f64, f64)>> = bank.iter().map(per_freq).collect();
    (0..checkpoints.len())
        .map(|j| by_freq.iter().map(|g| g[j]).collect())
        .collect()
}

/// One-at-a-time sweep results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub density: String,
    pub rows: Vec<ErrorRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisTrend {
    pub axis: Axis,
    /// Log-log slope of the per-value median max error.
    pub slope: Option<f64>,
    /// Whether the median max error never increases along the axis.
    pub monotone_decreasing: bool,
}

impl ErrorTable {
    pub const CSV_HEADER: &'static str = "axis,W,d,N,max_err,mean_err,seed";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.12e},{:.12e},{}\n",
                r.axis.name(),
                r.radius,
                r.d,
                r.n,
                r.max_err,
                r.mean_err,
                r.seed
            ));
        }
        out
    }

    /// `(axis value, median max error over seeds)` in increasing axis order.
    pub fn medians(&self, axis: Axis) -> Vec<(f64, f64)> {
        let mut xs: Vec<f64> = Vec::new();
        for r in self.rows.iter().filter(|r| r.axis == axis) {
            let x = axis_value(r);
            if !xs.contains(&x) {
                xs.push(x);
            }
        }
        xs.sort_by(f64::total_cmp);
        xs.into_iter()
            .map(|x| {
                let errs: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.axis == axis && axis_value(r) == x)
                    .map(|r| r.max_err)
                    .collect();
                (x, median(&errs).unwrap_or(f64::NAN))
            })
            .collect()
    }

    pub fn trend(&self, axis: Axis) -> AxisTrend {
        let m = self.medians(axis);
        let (xs, ys): (Vec<f64>, Vec<f64>) = m.iter().copied().unzip();
        AxisTrend {
            axis,
            slope: log_log_slope(&xs, &ys),
            monotone_decreasing: ys.windows(2).all(|w| w[1] <= w[0]),
        }
    }
}

fn axis_value(r: &ErrorRow) -> f64 {
    match r.axis {
        Axis::W => r.radius,
        Axis::D => r.d as f64,
        Axis::N => r.n as f64,
    }
}

/// Runs the three one-at-a-time sweeps for every seed. Within one axis the
/// frequency bank and the sample set are shared across values through the
/// prefix property, so successive rows differ only in the varied parameter.
pub fn error_sweep<D: DensityOracle>(density: &D, spec: &SweepSpec) -> Result<ErrorTable, CrffError> {
    spec.validate()?;
    let dim = density.dim();
    let points = eval_grid(dim, spec.grid_points);
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let mut push = |axis, radius, d, n, e: GridError| {
            rows.push(ErrorRow {
                axis,
                radius,
                d,
                n,
                seed,
                max_err: e.max_err,
                mean_err: e.mean_err,
            })
        };

        let RadiusSweep { ref radii, d, n } = spec.radius_axis;
        let samples = draw_samples(density, n, seed);
        for &radius in radii {
            let bank = sample_frequencies(radius, d, dim, seed)?;
            let g = empirical_char_fn(&samples, &bank)?;
            push(Axis::W, radius, d, n, grid_error(density, &g, &bank, &points));
        }

        let FeatureSweep { ref ds, radius, n } = spec.feature_axis;
        let d_max = *ds.iter().max().expect("validated");
        let full = sample_frequencies(radius, d_max, dim, seed)?;
        let g = empirical_char_fn(&draw_samples(density, n, seed), &full)?;
        for &d in ds {
            let bank = full.prefix(d)?;
            push(Axis::D, radius, d, n, grid_error(density, &g[..d], &bank, &points));
        }

        let SampleSweep { ref ns, radius, d } = spec.sample_axis;
        let mut sorted = ns.clone();
        sorted.sort_unstable();
        sorted.dedup();
        let bank = sample_frequencies(radius, d, dim, seed)?;
        let samples = draw_samples(density, *sorted.last().expect("validated"), seed);
        let gs = char_fn_prefixes(&samples, &bank, &sorted);
        for &n in ns {
            let j = sorted.binary_search(&n).expect("present");
            push(Axis::N, radius, d, n, grid_error(density, &gs[j], &bank, &points));
        }
    }
    Ok(ErrorTable {
        density: density.name().to_string(),
        rows,
    })
}

/// Expected norm and its standard deviation for a uniform point in the
/// `dim`-ball of radius `radius`.
pub fn radial_moments(dim: usize, radius: f64) -> (f64, f64) {
    let n = dim as f64;
    let mean = radius * n / (n + 1.0);
    let second = radius * radius * n / (n + 2.0);
    (mean, (second - mean * mean).sqrt())
}
