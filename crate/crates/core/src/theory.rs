//! Discovery probabilities under the idealized random-partition-tree model,
//! and Monte-Carlo simulators that check them.
//!
//! The model: a true neighbor pair lands on the same side of each
//! hyperplane independently with probability `p`; a tree of depth `h`
//! co-locates the pair iff all `h` hyperplanes do; trees are independent.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// Probability that a single tree of depth `h` co-locates a pair: `p^h`.
pub fn single_tree_prob(p: f64, h: u32) -> f64 {
    p.powi(h as i32)
}

/// Probability that at least one of `l` trees co-locates a pair.
pub fn multi_tree_prob(p: f64, h: u32, l: u32) -> f64 {
    1.0 - (1.0 - single_tree_prob(p, h)).powi(l as i32)
}

/// Probability that the `l`-th tree is the first to co-locate a pair.
pub fn new_discovery_prob(p: f64, h: u32, l: u32) -> f64 {
    debug_assert!(l >= 1);
    let ph = single_tree_prob(p, h);
    (1.0 - ph).powi(l as i32 - 1) * ph
}

/// Probability that after `l - 1` trees both `(i, n)` and `(j, n)` have been
/// found, so `j` is reachable from `i` through the shared neighbor `n`.
pub fn propagation_prob(p_in: f64, p_jn: f64, h: u32, l: u32) -> f64 {
    debug_assert!(l >= 1);
    multi_tree_prob(p_in, h, l - 1) * multi_tree_prob(p_jn, h, l - 1)
}

/// Generalization of [`propagation_prob`] to a path of intermediate points:
/// every consecutive pair on the path must have been found in `l - 1` trees.
pub fn path_propagation_prob(path: &[f64], h: u32, l: u32) -> Result<f64> {
    if path.is_empty() {
        return invalid("propagation path needs at least one hop");
    }
    if l < 1 {
        return invalid("need at least one tree");
    }
    Ok(path.iter().map(|&p| multi_tree_prob(p, h, l - 1)).product())
}

/// Lower bound on discovering a true neighbor with `l` trees plus one round
/// of first-order propagation through a shared neighbor:
/// `1 - (1 - p^h)^(2l) (2 - (1 - p^h)^l)`.
pub fn combined_lower_bound(p: f64, h: u32, l: u32) -> f64 {
    let miss = (1.0 - single_tree_prob(p, h)).powi(l as i32);
    1.0 - miss * miss * (2.0 - miss)
}

/// Same-side probability of a random hyperplane through the origin for two
/// vectors at angle `angle`: `1 - angle / pi`.
pub fn cosine_collision_prob(angle: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&angle) {
        return invalid(format!("angle {angle} outside [0, pi]"));
    }
    Ok(1.0 - angle / PI)
}

/// Density of `|Z|` for standard normal `Z`.
fn half_normal_pdf(x: f64) -> f64 {
    (2.0 / PI).sqrt() * (-0.5 * x * x).exp()
}

/// Collision probability of the hash `floor((a.x + b) / w)` with Gaussian
/// `a` and `b ~ U[0, w]` for two points at Euclidean distance `d`, by
/// adaptive quadrature to absolute error 1e-8.
pub fn euclidean_collision_prob(d: f64, w: f64) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) || !(w > 0.0 && w.is_finite()) {
        return invalid(format!("need d > 0 and w > 0, got d = {d}, w = {w}"));
    }
    let f = |t: f64| half_normal_pdf(t / d) / d * (1.0 - t / w);
    Ok(adaptive_simpson(&f, 0.0, w, 1e-8))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Idealized forest: per-hyperplane same-side probability `p`, depth `h`,
/// `l` trees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeModel {
    pub p: f64,
    pub h: u32,
    pub l: u32,
}

/// Which discovery event a simulation counts.
#[derive(Debug, Clone, PartialEq)]
pub enum Discovery {
    /// The first tree co-locates `(i, j)`.
    SingleTree,
    /// Some tree among `l` co-locates `(i, j)`.
    AnyTree,
    /// Tree `l` co-locates `(i, j)` and trees `1..l` do not.
    NewAtLast,
    /// Within `l - 1` trees both `(i, n)` and `(j, n)` are co-located.
    ThroughCommon { p_in: f64, p_jn: f64 },
    /// Within `l - 1` trees every hop of the path is co-located.
    ThroughPath { hops: Vec<f64> },
    /// Within `l` trees `(i, j)` is co-located, or both `(i, n)` and
    /// `(j, n)` are (first-order propagation through `n`).
    TreesOrPropagation { p_in: f64, p_jn: f64 },
}

/// Empirical frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub freq: f64,
    pub std_err: f64,
    pub trials: u64,
}

impl Estimate {
    fn from_counts(successes: u64, trials: u64) -> Self {
        let freq = successes as f64 / trials as f64;
        Estimate {
            freq,
            std_err: (freq * (1.0 - freq) / trials as f64).sqrt(),
            trials,
        }
    }

    /// Distance to `value` in standard errors; infinite if SE is zero and
    /// the values differ.
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = (self.freq - value).abs();
        if diff == 0.0 {
            0.0
        } else if self.std_err == 0.0 {
            f64::INFINITY
        } else {
            diff / self.std_err
        }
    }

    pub fn agrees_with(&self, value: f64, n_se: f64) -> bool {
        self.z_score(value) <= n_se
    }
}

fn colocated<R: Rng + ?Sized>(p: f64, h: u32, rng: &mut R) -> bool {
    (0..h).all(|_| rng.gen_bool(p))
}

fn found_within<R: Rng + ?Sized>(p: f64, h: u32, trees: u32, rng: &mut R) -> bool {
    (0..trees).any(|_| colocated(p, h, rng))
}

/// Monte-Carlo frequency of `event` under `model` over `trials` forests.
pub fn simulate_discovery<R: Rng + ?Sized>(
    model: &TreeModel,
    event: &Discovery,
    trials: u64,
    rng: &mut R,
) -> Result<Estimate> {
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let probs_ok = |p: f64| (0.0..=1.0).contains(&p);
    let extra: &[f64] = match event {
        Discovery::ThroughCommon { p_in, p_jn } | Discovery::TreesOrPropagation { p_in, p_jn } => {
            &[*p_in, *p_jn]
        }
        Discovery::ThroughPath { hops } => hops,
        _ => &[],
    };
    if !probs_ok(model.p) || !extra.iter().all(|&p| probs_ok(p)) {
        return invalid("probabilities must lie in [0, 1]");
    }
    if model.h == 0 {
        return invalid("tree depth must be >= 1");
    }
    let needs_tree = matches!(
        event,
        Discovery::NewAtLast | Discovery::ThroughCommon { .. } | Discovery::ThroughPath { .. }
    );
    if needs_tree && model.l == 0 {
        return invalid("event needs at least one tree");
    }
    if let Discovery::ThroughPath { hops } = event {
        if hops.is_empty() {
            return invalid("propagation path needs at least one hop");
        }
    }

    let TreeModel { p, h, l } = *model;
    let mut successes = 0u64;
    for _ in 0..trials {
        let hit = match event {
            Discovery::SingleTree => colocated(p, h, rng),
            Discovery::AnyTree => found_within(p, h, l, rng),
            Discovery::NewAtLast => {
                let earlier = found_within(p, h, l - 1, rng);
                let last = colocated(p, h, rng);
                !earlier && last
            }
            Discovery::ThroughCommon { p_in, p_jn } => {
                let a = found_within(*p_in, h, l - 1, rng);
                let b = found_within(*p_jn, h, l - 1, rng);
                a && b
            }
            Discovery::ThroughPath { hops } => {
                let mut all = true;
                for &hp in hops {
                    all &= found_within(hp, h, l - 1, rng);
                }
                all
            }
            Discovery::TreesOrPropagation { p_in, p_jn } => {
                let direct = found_within(p, h, l, rng);
                let a = found_within(*p_in, h, l, rng);
                let b = found_within(*p_jn, h, l, rng);
                direct || (a && b)
            }
        };
        successes += u64::from(hit);
    }
    Ok(Estimate::from_counts(successes, trials))
}

/// Frequency with which a random hyperplane through the origin puts two
/// unit vectors at angle `angle` on the same side.
pub fn simulate_cosine_collision<R: Rng + ?Sized>(angle: f64, trials: u64, rng: &mut R) -> Estimate {
    let y = [angle.cos(), angle.sin()];
    let mut same = 0u64;
    for _ in 0..trials {
        let a0: f64 = rng.sample(StandardNormal);
        let a1: f64 = rng.sample(StandardNormal);
        let sx = a0 >= 0.0;
        let sy = a0 * y[0] + a1 * y[1] >= 0.0;
        same += u64::from(sx == sy);
    }
    Estimate::from_counts(same, trials)
}

/// Frequency with which `floor((a.x + b) / w)` agrees for two points at
/// distance `d` in `dim` dimensions, with fresh `a ~ N(0, I)`,
/// `b ~ U[0, w]` per trial.
pub fn simulate_euclidean_collision<R: Rng + ?Sized>(
    d: f64,
    w: f64,
    dim: usize,
    trials: u64,
    rng: &mut R,
) -> Estimate {
    let dim = dim.max(1);
    let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    let y: Vec<f64> = x.iter().zip(&dir).map(|(a, u)| a + d * u).collect();
    let mut same = 0u64;
    for _ in 0..trials {
        let mut ax = 0.0;
        let mut ay = 0.0;
        for (xi, yi) in x.iter().zip(&y) {
            let a: f64 = rng.sample(StandardNormal);
            ax += a * xi;
            ay += a * yi;
        }
        let b = rng.gen_range(0.0..w);
        same += u64::from(((ax + b) / w).floor() == ((ay + b) / w).floor());
    }
    Estimate::from_counts(same, trials)
}

/// Grid of model parameters for the formula-vs-simulation table.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryGrid {
    pub p: Vec<f64>,
    pub h: Vec<u32>,
    pub l: Vec<u32>,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryRow {
    pub quantity: &'static str,
    pub p: f64,
    pub h: u32,
    pub l: u32,
    pub formula: f64,
    pub simulated: f64,
    pub std_err: f64,
}

impl TheoryRow {
    pub fn z_score(&self) -> f64 {
        Estimate {
            freq: self.simulated,
            std_err: self.std_err,
            trials: 0,
        }
        .z_score(self.formula)
    }
}

/// For every grid point, compares each closed form against its simulator.
/// Shared-neighbor probabilities are set equal to `p`. Rows needing a tree
/// (`l = 0`) are skipped for the events that require one.
pub fn theory_table<R: Rng + ?Sized>(grid: &TheoryGrid, rng: &mut R) -> Result<Vec<TheoryRow>> {
    let mut rows = Vec::new();
    for &p in &grid.p {
        for &h in &grid.h {
            for &l in &grid.l {
                let model = TreeModel { p, h, l };
                let mut events: Vec<(&'static str, f64, Discovery)> =
                    vec![("multi_tree", multi_tree_prob(p, h, l), Discovery::AnyTree)];
                if l >= 1 {
                    events.push(("new_discovery", new_discovery_prob(p, h, l), Discovery::NewAtLast));
                    events.push((
                        "propagation",
                        propagation_prob(p, p, h, l),
                        Discovery::ThroughCommon { p_in: p, p_jn: p },
                    ));
                    events.push((
                        "combined_bound",
                        combined_lower_bound(p, h, l),
                        Discovery::TreesOrPropagation { p_in: p, p_jn: p },
                    ));
                }
                for (quantity, formula, event) in events {
                    let est = simulate_discovery(&model, &event, grid.trials, rng)?;
                    rows.push(TheoryRow {
                        quantity,
                        p,
                        h,
                        l,
                        formula,
                        simulated: est.freq,
                        std_err: est.std_err,
                    });
                }
            }
        }
    }
    Ok(rows)
}
