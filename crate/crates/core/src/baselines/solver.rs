use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BaselineError, Result};

/// Per-asset weight box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { lo: -1.5, hi: 1.5 }
    }
}

impl Bounds {
    fn check(&self, n: usize) -> Result<()> {
        let nf = n as f64;
        if n == 0 || !(self.lo <= self.hi) || nf * self.lo > 1.0 || nf * self.hi < 1.0 {
            return Err(BaselineError::InfeasibleBounds {
                lo: self.lo,
                hi: self.hi,
                n,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    MaxSharpe,
    GmvFallback,
    HistoricalMeanFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvoSolution {
    pub weights: Vec<f64>,
    /// In-sample `(wᵀμ − R_f)/√(wᵀΣw)`; absent for variance-only solves.
    pub sharpe: Option<f64>,
    pub variance: f64,
    pub status: SolveStatus,
    /// False when the iteration cap was hit; the best iterate is returned.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub starts: usize,
    pub max_iter: usize,
    /// Stop once an accepted step moves no coordinate more than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            starts: 16,
            max_iter: 5000,
            tol: 1e-12,
            seed: 0,
        }
    }
}

/// Euclidean projection onto `{w : Σw = 1, lo ≤ wᵢ ≤ hi}`.
///
/// The projection is `clip(v − τ)` for the unique shift τ making the sum
/// one; τ is bracketed and bisected, then refined in closed form on the
/// coordinates left strictly inside the box.
pub fn project_capped_simplex(v: &[f64], b: Bounds) -> Vec<f64> {
    let clip = |x: f64| x.clamp(b.lo, b.hi);
    let total = |tau: f64| v.iter().map(|x| clip(x - tau)).sum::<f64>();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    // total(lo_tau) = n·hi ≥ 1 and total(hi_tau) = n·lo ≤ 1
    let (mut lo_tau, mut hi_tau) = (min - b.hi, max - b.lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo_tau + hi_tau);
        if total(mid) > 1.0 {
            lo_tau = mid;
        } else {
            hi_tau = mid;
        }
        if hi_tau - lo_tau <= f64::EPSILON * (1.0 + mid.abs()) {
            break;
        }
    }
    let tau = 0.5 * (lo_tau + hi_tau);
    let mut w: Vec<f64> = v.iter().map(|x| clip(x - tau)).collect();
    let free: Vec<usize> = (0..w.len()).filter(|&i| w[i] > b.lo && w[i] < b.hi).collect();
    if !free.is_empty() {
        let fixed: f64 = (0..w.len()).filter(|i| !free.contains(i)).map(|i| w[i]).sum();
        let tau = (free.iter().map(|&i| v[i]).sum::<f64>() + fixed - 1.0) / free.len() as f64;
        let refined: Vec<f64> = free.iter().map(|&i| v[i] - tau).collect();
        if refined.iter().all(|x| (b.lo..=b.hi).contains(x)) {
            for (&i, x) in free.iter().zip(refined) {
                w[i] = x;
            }
        }
    }
    w
}

struct Problem {
    n: usize,
    sigma: Vec<f64>,
}

impl Problem {
    /// Symmetrizes Σ and adds a `1e-8·trace/n` ridge unless it is already
    /// positive definite.
    fn new(sigma: &[f64], n: usize) -> Result<Self> {
        if sigma.len() != n * n {
            return Err(BaselineError::Shape(format!("covariance has {} entries for {n} assets", sigma.len())));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(BaselineError::NonFinite("covariance"));
        }
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = 0.5 * (sigma[i * n + j] + sigma[j * n + i]);
            }
        }
        if DMatrix::from_row_slice(n, n, &s).cholesky().is_none() {
            let trace: f64 = (0..n).map(|i| s[i * n + i]).sum();
            let ridge = (1e-8 * trace / n as f64).max(f64::MIN_POSITIVE);
            for i in 0..n {
                s[i * n + i] += ridge;
            }
        }
        Ok(Problem { n, sigma: s })
    }

    fn sigma_w(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.sigma[i * self.n..(i + 1) * self.n].iter().zip(w).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn variance(&self, w: &[f64]) -> f64 {
        self.sigma_w(w).iter().zip(w).map(|(a, b)| a * b).sum::<f64>().max(0.0)
    }

    fn largest_eigenvalue(&self) -> f64 {
        let e = SymmetricEigen::new(DMatrix::from_row_slice(self.n, self.n, &self.sigma));
        e.eigenvalues.iter().copied().fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_step(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Accelerated projected gradient on `wᵀΣw` with step `1/L`.
fn gmv_solve(p: &Problem, bounds: Bounds, opts: &SolverOptions) -> (Vec<f64>, bool) {
    let n = p.n;
    let lipschitz = 2.0 * p.largest_eigenvalue();
    let mut w = vec![1.0 / n as f64; n];
    if n == 1 || lipschitz <= 0.0 {
        return (w, true);
    }
    let step = 1.0 / lipschitz;
    let mut y = w.clone();
    let mut momentum = 1.0f64;
    for _ in 0..opts.max_iter * 4 {
        let g = p.sigma_w(&y);
        let target: Vec<f64> = y.iter().zip(&g).map(|(v, gi)| v - 2.0 * step * gi).collect();
        let next = project_capped_simplex(&target, bounds);
        let delta = max_step(&next, &w);
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / m_next;
        // restart the momentum whenever the objective rises
        let rising = p.variance(&next) > p.variance(&w);
        y = if rising {
            momentum = 1.0;
            next.clone()
        } else {
            momentum = m_next;
            next.iter().zip(&w).map(|(a, b)| a + beta * (a - b)).collect()
        };
        w = next;
        if delta < opts.tol {
            return (w, true);
        }
    }
    (w, false)
}

pub fn gmv(sigma: &[f64], n: usize, bounds: Bounds, opts: &SolverOptions) -> Result<MvoSolution> {
    bounds.check(n)?;
    let p = Problem::new(sigma, n)?;
    let (weights, converged) = gmv_solve(&p, bounds, opts);
    Ok(MvoSolution {
        variance: p.variance(&weights),
        weights,
        sharpe: None,
        status: SolveStatus::GmvFallback,
        converged,
    })
}

fn sharpe_of(p: &Problem, mu: &[f64], rf: f64, w: &[f64]) -> f64 {
    (dot(w, mu) - rf) / p.variance(w).sqrt()
}

/// Projected gradient ascent with Armijo backtracking from one start.
fn ascend(p: &Problem, mu: &[f64], rf: f64, bounds: Bounds, start: Vec<f64>, opts: &SolverOptions) -> (Vec<f64>, f64, bool) {
    let mut w = start;
    let mut f = sharpe_of(p, mu, rf, &w);
    let mut step = 1.0;
    for _ in 0..opts.max_iter {
        let sw = p.sigma_w(&w);
        let var = dot(&sw, &w);
        let sd = var.sqrt();
        let excess = dot(&w, mu) - rf;
        let grad: Vec<f64> = mu.iter().zip(&sw).map(|(m, s)| m / sd - excess * s / (var * sd)).collect();
        let mut accepted = None;
        step *= 2.0;
        while step > 1e-20 {
            let target: Vec<f64> = w.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
            let cand = project_capped_simplex(&target, bounds);
            let fc = sharpe_of(p, mu, rf, &cand);
            let diff: Vec<f64> = cand.iter().zip(&w).map(|(a, b)| a - b).collect();
            if fc.is_finite() && fc >= f + 1e-4 * dot(&grad, &diff) {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            return (w, f, true);
        };
        let delta = max_step(&cand, &w);
        w = cand;
        f = fc;
        if delta < opts.tol {
            return (w, f, true);
        }
    }
    (w, f, false)
}

/// Maximum-Sharpe portfolio over the box-constrained, fully invested set.
/// Multi-start: equal weight, the GMV point, then seeded random feasible
/// points; the best local optimum wins.
pub fn max_sharpe(mu: &[f64], sigma: &[f64], rf: f64, bounds: Bounds, opts: &SolverOptions) -> Result<MvoSolution> {
    let n = mu.len();
    bounds.check(n)?;
    if mu.iter().any(|m| !m.is_finite()) || !rf.is_finite() {
        return Err(BaselineError::NonFinite("expected returns"));
    }
    if mu.iter().all(|&m| m <= rf) {
        return Err(BaselineError::NoPositiveExcess { rf });
    }
    let p = Problem::new(sigma, n)?;
    let solution = |weights: Vec<f64>, sharpe: f64, converged: bool| MvoSolution {
        variance: p.variance(&weights),
        weights,
        sharpe: Some(sharpe),
        status: SolveStatus::MaxSharpe,
        converged,
    };
    if n == 1 {
        let w = vec![1.0];
        return Ok(solution(w.clone(), sharpe_of(&p, mu, rf, &w), true));
    }
    let mut starts = vec![vec![1.0 / n as f64; n], gmv_solve(&p, bounds, opts).0];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.starts.max(2) {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(bounds.lo..=bounds.hi)).collect();
        starts.push(project_capped_simplex(&v, bounds));
    }
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for s in starts {
        let (w, f, conv) = ascend(&p, mu, rf, bounds, s, opts);
        if f.is_finite() && best.as_ref().is_none_or(|b| f > b.1) {
            best = Some((w, f, conv));
        }
    }
    let (w, f, conv) = best.ok_or(BaselineError::NonFinite("Sharpe objective"))?;
    Ok(solution(w, f, conv))
}
