//! Monte Carlo ensembles over independent realizations.
//!
//! Realizations run concurrently (rayon), each on its own RNG stream derived
//! from `(master_seed, realization_index)`, and are reduced in realization
//! order with a streaming mean/variance update. Results are therefore
//! identical for any thread count, including the cap set through the
//! `OPENHK_THREADS` environment variable.

use rayon::prelude::*;
use thiserror::Error;

use crate::open_process::{simulate_realization, RealizationConfig, RunError, Trace};

/// Environment variable capping ensemble parallelism. Changes wall time only,
/// never results.
pub const THREADS_ENV: &str = "OPENHK_THREADS";

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ensemble needs at least one realization")]
    Empty,
    #[error("series {index} was sampled on a different grid")]
    GridMismatch { index: usize },
    #[error("grid point t = {t} is not sampled by the trace")]
    PointNotSampled { t: f64 },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Strictly increasing sampling times spanning `[t0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `num_points >= 2` points; endpoints are exact.
    pub fn uniform(t0: f64, t_end: f64, num_points: usize) -> Result<Self, String> {
        if num_points < 2 {
            return Err(format!("grid needs at least 2 points, got {num_points}"));
        }
        if !(t0.is_finite() && t_end.is_finite() && t0 < t_end) {
            return Err(format!("invalid grid span [{t0}, {t_end}]"));
        }
        let n = num_points;
        let mut points: Vec<f64> = (0..n)
            .map(|k| t0 + (t_end - t0) * k as f64 / (n - 1) as f64)
            .collect();
        points[0] = t0;
        points[n - 1] = t_end;
        Self::from_points(points)
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self, String> {
        if points.len() < 2 {
            return Err(format!("grid needs at least 2 points, got {}", points.len()));
        }
        if !points.iter().all(|t| t.is_finite()) {
            return Err("grid points must be finite".to_string());
        }
        if !points.windows(2).all(|w| w[0] < w[1]) {
            return Err("grid points must be strictly increasing".to_string());
        }
        Ok(TimeGrid { points })
    }

    pub fn t0(&self) -> f64 {
        self.points[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Observables of one realization evaluated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub grid: TimeGrid,
    pub u0: Vec<f64>,
    pub u_local: Vec<f64>,
    pub v_local: Vec<f64>,
    pub w0: Vec<f64>,
    pub population: Vec<f64>,
}

/// Pointwise mean and unbiased sample variance of one observable.
#[derive(Debug, Clone, PartialEq)]
pub struct StatSeries {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Ensemble statistics of all tracked observables on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub grid: TimeGrid,
    pub u0: StatSeries,
    pub u_local: StatSeries,
    pub v_local: StatSeries,
    pub w0: StatSeries,
    pub population: StatSeries,
    /// Number of realizations behind every grid point.
    pub count: usize,
}

/// Evaluate a trace's observables at the requested grid times.
///
/// Samples are right-continuous at event times. Every requested time must
/// coincide with a sampled time of the trace (the trace's own grid is always
/// valid); times outside the trace horizon are rejected.
pub fn sample_on_grid(trace: &Trace, grid: &TimeGrid) -> Result<ObservableSeries, EnsembleError> {
    let mut series = ObservableSeries {
        grid: grid.clone(),
        u0: Vec::with_capacity(grid.len()),
        u_local: Vec::with_capacity(grid.len()),
        v_local: Vec::with_capacity(grid.len()),
        w0: Vec::with_capacity(grid.len()),
        population: Vec::with_capacity(grid.len()),
    };
    let same_grid = trace.grid == *grid;
    for (k, &t) in grid.points().iter().enumerate() {
        let sample = if same_grid {
            &trace.samples[k]
        } else {
            let tol = 1e-9 * t.abs().max(1.0);
            trace
                .samples
                .iter()
                .find(|s| (s.time - t).abs() <= tol)
                .ok_or(EnsembleError::PointNotSampled { t })?
        };
        series.u0.push(sample.lyapunov.u0);
        series.u_local.push(sample.lyapunov.u_local);
        series.v_local.push(sample.lyapunov.v_local);
        series.w0.push(sample.lyapunov.w0);
        series.population.push(sample.n as f64);
    }
    Ok(series)
}

struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Welford { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn update(&mut self, values: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for (i, &v) in values.iter().enumerate() {
            let d1 = v - self.mean[i];
            self.mean[i] += d1 / c;
            let d2 = v - self.mean[i];
            self.m2[i] += d1 * d2;
        }
    }

    fn finish(self) -> StatSeries {
        let variance = if self.count >= 2 {
            let denom = (self.count - 1) as f64;
            self.m2.iter().map(|m| m / denom).collect()
        } else {
            vec![0.0; self.mean.len()]
        };
        StatSeries { mean: self.mean, variance }
    }
}

/// Reduce per-realization series into pointwise means and sample variances.
/// All series must share one grid; the reduction is a numerically stable
/// one-pass update applied in list order.
pub fn aggregate(series: &[ObservableSeries]) -> Result<EnsembleStats, EnsembleError> {
    let first = series.first().ok_or(EnsembleError::Empty)?;
    let grid = first.grid.clone();
    let len = grid.len();
    let mut u0 = Welford::new(len);
    let mut u_local = Welford::new(len);
    let mut v_local = Welford::new(len);
    let mut w0 = Welford::new(len);
    let mut population = Welford::new(len);
    for (index, s) in series.iter().enumerate() {
        if s.grid != grid {
            return Err(EnsembleError::GridMismatch { index });
        }
        u0.update(&s.u0);
        u_local.update(&s.u_local);
        v_local.update(&s.v_local);
        w0.update(&s.w0);
        population.update(&s.population);
    }
    Ok(EnsembleStats {
        grid,
        u0: u0.finish(),
        u_local: u_local.finish(),
        v_local: v_local.finish(),
        w0: w0.finish(),
        population: population.finish(),
        count: series.len(),
    })
}

fn realization_series(
    config: &RealizationConfig,
    master_seed: u64,
    index: u64,
) -> Result<ObservableSeries, EnsembleError> {
    let trace: Trace = simulate_realization(config, master_seed, index)?;
    sample_on_grid(&trace, &config.grid)
}

/// Run `realizations` independent realizations and aggregate their
/// observables. Thread count is taken from [`THREADS_ENV`] when set.
pub fn run_ensemble(
    config: &RealizationConfig,
    realizations: usize,
    master_seed: u64,
) -> Result<EnsembleStats, EnsembleError> {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|s| s.parse::<usize>().ok());
    run_ensemble_with_threads(config, realizations, master_seed, threads)
}

/// [`run_ensemble`] with an explicit thread cap (`None` uses rayon's global
/// pool). The result does not depend on the thread count.
pub fn run_ensemble_with_threads(
    config: &RealizationConfig,
    realizations: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<EnsembleStats, EnsembleError> {
    if realizations == 0 {
        return Err(EnsembleError::Empty);
    }
    config.validate().map_err(|e| EnsembleError::Run(RunError::Config(e)))?;
    let job = || -> Result<Vec<ObservableSeries>, EnsembleError> {
        (0..realizations as u64)
            .into_par_iter()
            .map(|index| realization_series(config, master_seed, index))
            .collect()
    };
    let series = match threads {
        None => job()?,
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| EnsembleError::ThreadPool(e.to_string()))?;
            pool.install(job)?
        }
    };
    aggregate(&series)
}
