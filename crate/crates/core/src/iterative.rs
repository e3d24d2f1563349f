//! The Down-Up iterative method: capture the point on the B-curve whose
//! ordinate is near the tail probability, by alternating between the
//! order-statistic exceedance inequality and the curve itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{subsample_bounds, BoundCollection};
use crate::stats::{binomial_cdf, fmt_full, quantile_sorted};

/// Evaluation grid for the candidate tail probabilities.
///
/// Points are increment, 2*increment, ..., up to max_p.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PGrid {
    pub increment: f64,
    pub max_p: f64,
}

impl PGrid {
    pub fn new(increment: f64, max_p: f64) -> Result<Self> {
        if increment <= 0.0 || max_p <= 0.0 || increment.is_nan() || max_p.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "grid increment {increment} and max_p {max_p} must be positive"
            )));
        }
        Ok(Self { increment, max_p })
    }

    /// Default increment for a target tail probability: 0.0001 near 1e-3,
    /// 0.000015 near 1e-4.
    pub fn default_increment(p_target: f64) -> f64 {
        if p_target < 3e-4 {
            0.000015
        } else {
            0.0001
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let last = (self.max_p / self.increment * (1.0 + 1e-12)).floor() as usize;
        (1..=last).map(move |k| k as f64 * self.increment)
    }
}

/// P(B_(j) > p) for n i.i.d. bounds with F_B(p) = f: the binomial tail
/// sum_{k=0}^{j-1} C(n,k) f^k (1-f)^{n-k}, computed through the regularized
/// incomplete beta so n = 1000 and beyond stay exact.
pub fn orderstat_exceed_prob(n: usize, j: usize, f_at_p: f64) -> Result<f64> {
    if j < 1 || j > n {
        return Err(Error::IndexOutOfRange { j, n });
    }
    if !(0.0..=1.0).contains(&f_at_p) {
        return Err(Error::InvalidConfig(format!(
            "F value {f_at_p} not in [0,1]"
        )));
    }
    Ok(binomial_cdf(j - 1, n, f_at_p))
}

/// Smallest grid point p with P(B_(j) > p) <= cap, scanning upward.
pub fn smallest_p<F>(n: usize, j: usize, fb: F, grid: &PGrid, cap: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    for p in grid.points() {
        if orderstat_exceed_prob(n, j, fb(p))? <= cap {
            return Ok(p);
        }
    }
    Err(Error::GridExhausted { j })
}

/// 1-based index j minimizing |B_(j) - p|; ties toward the smaller j.
pub fn nearest_bound_index(sorted: &[f64], p: f64) -> usize {
    debug_assert!(!sorted.is_empty());
    let i = sorted.partition_point(|&b| b < p);
    let candidates = [i.checked_sub(1), (i < sorted.len()).then_some(i)];
    let best = candidates
        .into_iter()
        .flatten()
        .min_by(|&a, &b| {
            (sorted[a] - p)
                .abs()
                .total_cmp(&(sorted[b] - p).abs())
                .then(a.cmp(&b))
        })
        .unwrap();
    best + 1
}

/// Direction of a converged trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Down,
    Up,
    Immediate,
}

/// One Down-Up iteration run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    pub start_j: usize,
    /// The (j_k, p_{j_k}) sequence; at convergence the last two entries repeat.
    pub steps: Vec<(usize, f64)>,
    pub direction: Direction,
    pub converged_p: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_ITERATIONS: usize = 100;

/// Alternate `smallest_p` and `nearest_bound_index` from `start_j` until the
/// (j, p) pair repeats.
///
/// Direction: Down when the first evaluated p exceeds the converged p, Up
/// when it is below; on a flat trace the movement of the bound index decides,
/// and a trace whose index never moves is Immediate.
pub fn iterate(
    start_j: usize,
    coll: &BoundCollection,
    grid: &PGrid,
    cap: f64,
) -> Result<IterationTrace> {
    run_iteration(
        start_j,
        coll.sorted(),
        |p| crate::fusion::empirical_fb(coll, p),
        grid,
        cap,
    )
}

fn run_iteration<F>(
    start_j: usize,
    sorted: &[f64],
    fb: F,
    grid: &PGrid,
    cap: f64,
) -> Result<IterationTrace>
where
    F: Fn(f64) -> f64,
{
    let n = sorted.len();
    if start_j < 1 || start_j > n {
        return Err(Error::IndexOutOfRange { j: start_j, n });
    }
    let mut steps: Vec<(usize, f64)> = Vec::new();
    let mut j = start_j;
    let mut p = smallest_p(n, j, &fb, grid, cap)?;
    steps.push((j, p));
    let mut converged = false;
    while steps.len() < MAX_ITERATIONS {
        let j2 = nearest_bound_index(sorted, p);
        let p2 = smallest_p(n, j2, &fb, grid, cap)?;
        steps.push((j2, p2));
        if j2 == j && p2 == p {
            converged = true;
            break;
        }
        j = j2;
        p = p2;
    }
    let converged_p = steps.last().unwrap().1;
    let first_p = steps[0].1;
    let moved_up = steps.len() > 1 && steps[1].0 > steps[0].0;
    let moved_down = steps.len() > 1 && steps[1].0 < steps[0].0;
    let direction = match first_p.partial_cmp(&converged_p) {
        Some(std::cmp::Ordering::Greater) => Direction::Down,
        Some(std::cmp::Ordering::Less) => Direction::Up,
        _ if moved_up => Direction::Up,
        _ if moved_down => Direction::Down,
        _ => Direction::Immediate,
    };
    Ok(IterationTrace {
        start_j,
        iterations: steps.len(),
        steps,
        direction,
        converged_p,
        converged,
    })
}

/// How the final estimate is read off the ladder of traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateRule {
    /// Mean of the Down-side and Up-side converged values at the shift.
    ShiftMean,
    /// Mean of the converged values of the last k ladder entries ending at
    /// the first Up trace (table-style average).
    LastEntriesMean(usize),
}

/// Options for `down_up_estimate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DownUpConfig {
    /// Working subsample size (paper protocol: 1000).
    pub subsample_size: usize,
    pub subsample_seed: u64,
    pub increment: f64,
    /// Upper end of the grid; defaults to the working collection's largest bound.
    pub max_p: Option<f64>,
    /// Exceedance-probability cap in the inequality.
    pub cap: f64,
    /// Ladder step; defaults to max(10, n/100).
    pub ladder_step: Option<usize>,
    pub rule: EstimateRule,
    /// Evaluate F_B from the working subsample (default) or the full collection.
    pub use_full_fb: bool,
}

impl DownUpConfig {
    pub fn new(increment: f64, subsample_seed: u64) -> Self {
        Self {
            subsample_size: 1000,
            subsample_seed,
            increment,
            max_p: None,
            cap: 0.95,
            ladder_step: None,
            rule: EstimateRule::ShiftMean,
            use_full_fb: false,
        }
    }
}

/// A Down-Up estimate with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DownUpEstimate {
    pub p_hat: f64,
    /// (last Down converged p, first Up converged p).
    pub shift_pair: (f64, f64),
    pub traces: Vec<IterationTrace>,
    pub subsample_seed: u64,
    pub subsample_size: usize,
    pub rule: EstimateRule,
}

fn ladder_estimate(
    working: &BoundCollection,
    full_fb: Option<&BoundCollection>,
    grid: &PGrid,
    cap: f64,
    ladder_step: usize,
    rule: EstimateRule,
) -> Result<(f64, (f64, f64), Vec<IterationTrace>)> {
    let sorted = working.sorted();
    let q3 = quantile_sorted(sorted, 0.75);
    let start = nearest_bound_index(sorted, q3);
    let mut traces = Vec::new();
    let mut last_down: Option<f64> = None;
    let mut shift: Option<(f64, f64)> = None;
    let mut saw_down = false;
    let mut j = start;
    loop {
        let trace = match full_fb {
            None => iterate(j, working, grid, cap),
            Some(full) => iterate_with_fb(j, working, full, grid, cap),
        };
        match trace {
            Ok(tr) => {
                match tr.direction {
                    Direction::Down => {
                        saw_down = true;
                        last_down = Some(tr.converged_p);
                    }
                    Direction::Up => {
                        if let Some(d) = last_down {
                            shift = Some((d, tr.converged_p));
                            traces.push(tr);
                            break;
                        }
                    }
                    Direction::Immediate => {}
                }
                traces.push(tr);
            }
            Err(Error::GridExhausted { .. }) => {} // rung unusable; continue downward
            Err(e) => return Err(e),
        }
        if j <= ladder_step {
            break;
        }
        j -= ladder_step;
    }
    let (down_p, up_p) = match shift {
        Some(pair) => pair,
        None if saw_down => return Err(Error::NoUpSequence),
        None => return Err(Error::NoDownSequence),
    };
    let p_hat = match rule {
        EstimateRule::ShiftMean => 0.5 * (down_p + up_p),
        EstimateRule::LastEntriesMean(k) => {
            let k = k.max(1).min(traces.len());
            let vals: Vec<f64> = traces[traces.len() - k..]
                .iter()
                .map(|t| t.converged_p)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    Ok((p_hat, (down_p, up_p), traces))
}

/// `iterate` with F_B taken from a different (full) collection while j ranges
/// over the working subsample's curve.
fn iterate_with_fb(
    start_j: usize,
    working: &BoundCollection,
    fb_coll: &BoundCollection,
    grid: &PGrid,
    cap: f64,
) -> Result<IterationTrace> {
    run_iteration(
        start_j,
        working.sorted(),
        |p| crate::fusion::empirical_fb(fb_coll, p),
        grid,
        cap,
    )
}

/// Full Down-Up protocol: subsample the collection, walk a descending ladder
/// of starting indices from the third-quartile bound, and locate the first
/// Down-to-Up transition.
pub fn down_up_estimate(full: &BoundCollection, cfg: &DownUpConfig) -> Result<DownUpEstimate> {
    if full.len() < cfg.subsample_size {
        return Err(Error::SubsampleTooLarge {
            k: cfg.subsample_size,
            n: full.len(),
        });
    }
    let working = subsample_bounds(full, cfg.subsample_size, cfg.subsample_seed)?;
    let n = working.len();
    let grid = PGrid::new(cfg.increment, cfg.max_p.unwrap_or_else(|| working.max()))?;
    let ladder_step = cfg.ladder_step.unwrap_or_else(|| (n / 100).max(10));
    let fb = cfg.use_full_fb.then_some(full);
    let (p_hat, shift_pair, traces) =
        ladder_estimate(&working, fb, &grid, cfg.cap, ladder_step, cfg.rule)?;
    Ok(DownUpEstimate {
        p_hat,
        shift_pair,
        traces,
        subsample_seed: cfg.subsample_seed,
        subsample_size: cfg.subsample_size,
        rule: cfg.rule,
    })
}

/// Single-start estimate used by the comparison protocol: start at the index
/// whose bound matches the collection's third quartile and iterate to the
/// fixed point. Non-converged runs error.
pub fn single_start_estimate(
    coll: &BoundCollection,
    increment: f64,
    cap: f64,
) -> Result<(f64, IterationTrace)> {
    let sorted = coll.sorted();
    let grid = PGrid::new(increment, coll.max())?;
    let start = nearest_bound_index(sorted, quantile_sorted(sorted, 0.75));
    let trace = iterate(start, coll, &grid, cap)?;
    if !trace.converged {
        return Err(Error::NoConvergence {
            iterations: trace.iterations,
            grad_norm: f64::NAN,
        });
    }
    Ok((trace.converged_p, trace))
}

/// Remove the `drop` largest observations (ties broken by position).
pub fn trim_reference(reference: &[f64], drop: usize) -> Vec<f64> {
    if drop == 0 {
        return reference.to_vec();
    }
    let drop = drop.min(reference.len().saturating_sub(1));
    let mut idx: Vec<usize> = (0..reference.len()).collect();
    idx.sort_by(|&a, &b| reference[b].total_cmp(&reference[a]).then(a.cmp(&b)));
    let mut dropmask = vec![false; reference.len()];
    for &i in &idx[..drop] {
        dropmask[i] = true;
    }
    reference
        .iter()
        .zip(&dropmask)
        .filter_map(|(&x, &d)| (!d).then_some(x))
        .collect()
}

/// Trace export: CSV `step,j,p,direction`.
pub fn trace_csv(trace: &IterationTrace) -> String {
    let dir = match trace.direction {
        Direction::Down => "Down",
        Direction::Up => "Up",
        Direction::Immediate => "Immediate",
    };
    let mut out = String::from("step,j,p,direction\n");
    for (k, (j, p)) in trace.steps.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", k + 1, j, fmt_full(*p), dir));
    }
    out
}
