//! Orbit caching and deterministic parallel job execution.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matkernel::{max_abs, ComplexMatrix};
use crate::model::{BasePoint, OperatorModel};

/// Potential blocks `f(Tⁿθ₀)` for `n = 0..len`, computed once and shared
/// read-only across energy jobs.
#[derive(Debug, Clone)]
pub struct OrbitCache {
    theta0: BasePoint,
    points: Vec<BasePoint>,
    blocks: Vec<ComplexMatrix>,
}

impl OrbitCache {
    pub fn build(model: &OperatorModel, theta0: &BasePoint, len: usize) -> Result<Self> {
        let base = model.base();
        let points: Vec<BasePoint> = match base.rotation_vector() {
            // direct evaluation avoids accumulating rounding along the orbit
            Some(_) => (0..len).map(|n| base.advance(theta0, n as i64)).collect::<Result<_>>()?,
            None => {
                let mut pts = Vec::with_capacity(len);
                let mut cur = base.advance(theta0, 0)?;
                for _ in 0..len {
                    let next = base.advance(&cur, 1)?;
                    pts.push(cur);
                    cur = next;
                }
                pts
            }
        };
        let blocks = points.par_iter().map(|p| model.potential_at(p)).collect();
        Ok(Self { theta0: theta0.clone(), points, blocks })
    }

    pub fn theta0(&self) -> &BasePoint {
        &self.theta0
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn point(&self, n: usize) -> &BasePoint {
        &self.points[n]
    }

    /// `f(Tⁿθ₀)`.
    pub fn block(&self, n: usize) -> &ComplexMatrix {
        &self.blocks[n]
    }

    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }

    /// Re-evaluates every `stride`-th entry and returns the largest
    /// deviation from the cached value.
    pub fn max_deviation(&self, model: &OperatorModel, stride: usize) -> f64 {
        (0..self.len())
            .step_by(stride.max(1))
            .map(|n| max_abs(&(model.potential_at(&self.points[n]) - &self.blocks[n])))
            .fold(0.0, f64::max)
    }
}

/// Outcome of one job.
#[derive(Debug, Clone, PartialEq)]
pub enum JobOutcome<T> {
    Done(T),
    Failed(String),
}

impl<T> JobOutcome<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Self::Done(v) => Some(v),
            Self::Failed(_) => None,
        }
    }
}

/// Results in job order, independent of scheduling.
#[derive(Debug, Clone)]
pub struct ScanReport<T> {
    pub outcomes: Vec<JobOutcome<T>>,
    pub wall_time: Duration,
}

impl<T> ScanReport<T> {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| matches!(o, JobOutcome::Failed(_))).count()
    }

    /// All results, or the first failure.
    pub fn into_results(self) -> Result<Vec<T>> {
        self.outcomes
            .into_iter()
            .enumerate()
            .map(|(i, o)| match o {
                JobOutcome::Done(v) => Ok(v),
                JobOutcome::Failed(msg) => Err(Error::InvalidInput(format!("job {i} failed: {msg}"))),
            })
            .collect()
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".into())
}

/// Runs `job(key)` for every key on a pool of `workers` threads. A job
/// that returns an error or panics is marked failed; the others still run.
pub fn scan<K, T, F>(keys: &[K], workers: usize, job: F) -> ScanReport<T>
where
    K: Sync,
    T: Send,
    F: Fn(&K) -> Result<T> + Sync,
{
    let start = Instant::now();
    let run = || {
        keys.par_iter()
            .map(|k| match catch_unwind(AssertUnwindSafe(|| job(k))) {
                Ok(Ok(v)) => JobOutcome::Done(v),
                Ok(Err(e)) => JobOutcome::Failed(e.to_string()),
                Err(p) => JobOutcome::Failed(panic_message(p)),
            })
            .collect::<Vec<_>>()
    };
    let outcomes = match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    ScanReport { outcomes, wall_time: start.elapsed() }
}
