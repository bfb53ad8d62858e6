use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use fnv::FnvHasher;

use crate::error::{invalid, Error, Result};

/// Dissimilarity used between points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// L2 norm of the difference.
    Euclidean,
    /// `1 - cos(angle)`, clamped to `[0, 2]`.
    Cosine,
}

impl Metric {
    pub fn tag(self) -> u32 {
        match self {
            Metric::Euclidean => 0,
            Metric::Cosine => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Metric::Euclidean),
            1 => Some(Metric::Cosine),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => invalid(format!("unknown metric '{other}'")),
        }
    }
}

/// An immutable `n x d` matrix of finite points together with its metric.
///
/// The dataset also carries a counter of raw distance-kernel evaluations so
/// callers can check how many distances a build actually computed.
#[derive(Debug)]
pub struct Dataset {
    n: usize,
    d: usize,
    points: Vec<f64>,
    metric: Metric,
    // Row norms, only populated for the cosine metric.
    norms: Vec<f64>,
    kernel_calls: AtomicU64,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Dataset {
            n: self.n,
            d: self.d,
            points: self.points.clone(),
            metric: self.metric,
            norms: self.norms.clone(),
            kernel_calls: AtomicU64::new(0),
        }
    }
}

impl Dataset {
    /// Builds a dataset from a row-major buffer of `n * d` coordinates.
    pub fn new(points: Vec<f64>, d: usize, metric: Metric) -> Result<Self> {
        if d == 0 {
            return invalid("dimension must be at least 1");
        }
        if points.len() % d != 0 {
            return invalid(format!(
                "buffer of {} values is not a multiple of d = {d}",
                points.len()
            ));
        }
        let n = points.len() / d;
        if n < 2 {
            return invalid(format!("need at least 2 points, got {n}"));
        }
        if n > u32::MAX as usize {
            return invalid("point ids must fit in 32 bits");
        }
        if let Some(pos) = points.iter().position(|x| !x.is_finite()) {
            return invalid(format!(
                "non-finite coordinate at point {}, dim {}",
                pos / d,
                pos % d
            ));
        }
        let norms = match metric {
            Metric::Euclidean => Vec::new(),
            Metric::Cosine => {
                let norms: Vec<f64> = points
                    .chunks_exact(d)
                    .map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt())
                    .collect();
                if let Some(i) = norms.iter().position(|&v| v == 0.0) {
                    return invalid(format!("point {i} has zero norm under the cosine metric"));
                }
                norms
            }
        };
        Ok(Dataset {
            n,
            d,
            points,
            metric,
            norms,
            kernel_calls: AtomicU64::new(0),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], metric: Metric) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return invalid(format!(
                "row {i} has {} columns, expected {d}",
                rows[i].len()
            ));
        }
        Dataset::new(rows.concat(), d, metric)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    /// Checked distance between two distinct points.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.n || j >= self.n {
            return invalid(format!("point index out of range ({i}, {j}) for n = {}", self.n));
        }
        if i == j {
            return invalid(format!("distance requested between point {i} and itself"));
        }
        Ok(self.dist(i, j))
    }

    /// Counted distance without argument checks.
    #[inline]
    pub(crate) fn dist(&self, i: usize, j: usize) -> f64 {
        self.count_kernel_calls(1);
        self.kernel(i, j)
    }

    /// The raw distance kernel. Uncounted; callers account for evaluations
    /// through [`Dataset::count_kernel_calls`].
    #[inline]
    pub(crate) fn kernel(&self, i: usize, j: usize) -> f64 {
        let a = self.point(i);
        let b = self.point(j);
        match self.metric {
            Metric::Euclidean => {
                let mut sum = 0.0;
                for (x, y) in a.iter().zip(b) {
                    let t = x - y;
                    sum += t * t;
                }
                sum.sqrt()
            }
            Metric::Cosine => {
                let mut dot = 0.0;
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                }
                (1.0 - dot / (self.norms[i] * self.norms[j])).clamp(0.0, 2.0)
            }
        }
    }

    // Plain load/store rather than fetch_add: every counted path is
    // single-threaded, and a locked add per distance is measurable.
    #[inline]
    pub(crate) fn count_kernel_calls(&self, calls: u64) {
        let v = self.kernel_calls.load(Ordering::Relaxed);
        self.kernel_calls.store(v + calls, Ordering::Relaxed);
    }

    /// Number of raw kernel evaluations since construction or the last reset.
    pub fn kernel_calls(&self) -> u64 {
        self.kernel_calls.load(Ordering::Relaxed)
    }

    pub fn reset_kernel_calls(&self) {
        self.kernel_calls.store(0, Ordering::Relaxed);
    }

    /// 64-bit FNV-1a digest of `d` followed by the little-endian coordinate bytes.
    pub fn digest(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write(&(self.d as u64).to_le_bytes());
        for x in &self.points {
            h.write(&x.to_le_bytes());
        }
        h.finish()
    }
}
