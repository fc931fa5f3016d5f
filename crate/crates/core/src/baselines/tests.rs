use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform in the box, conditioned on summing to one (rejection).
fn random_feasible(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.5..1.5)).collect();
        let last = 1.0 - w.iter().sum::<f64>();
        if (-1.5..=1.5).contains(&last) {
            w.push(last);
            return w;
        }
    }
}

fn quad(sigma: &[f64], w: &[f64]) -> f64 {
    let n = w.len();
    (0..n).map(|i| (0..n).map(|j| w[i] * sigma[i * n + j] * w[j]).sum::<f64>()).sum()
}

fn sharpe(mu: &[f64], sigma: &[f64], rf: f64, w: &[f64]) -> f64 {
    (w.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>() - rf) / quad(sigma, w).sqrt()
}

fn random_problem(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.25)).collect();
    let a: Vec<f64> = (0..n * n).map(|_| normal(rng) * 0.15).collect();
    let mut sigma = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sigma[i * n + j] = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum::<f64>() + if i == j { 0.005 } else { 0.0 };
        }
    }
    (mu, sigma)
}

fn assert_feasible(w: &[f64]) {
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-8, "{w:?}");
    assert!(w.iter().all(|x| (-1.5 - 1e-12..=1.5 + 1e-12).contains(x)), "{w:?}");
}

#[test]
fn equal_weight_rows() {
    let w = equal_weight(9, 10..20);
    assert_eq!(w.days, (10..20).collect::<Vec<_>>());
    for row in &w.weights {
        assert!(row.iter().all(|v| *v == 1.0 / 9.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn beta_on_linear_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m: Vec<f64> = (0..300).map(|_| normal(&mut rng) * 0.01).collect();
    let doubled: Vec<f64> = m.iter().map(|x| 2.0 * x).collect();
    assert!((estimate_beta(&m, &m, 252, 299).unwrap() - 1.0).abs() < 1e-12);
    assert!((estimate_beta(&doubled, &m, 252, 299).unwrap() - 2.0).abs() < 1e-12);
    let noise: Vec<f64> = (0..300).map(|_| normal(&mut rng) * 0.01).collect();
    assert!(estimate_beta(&noise, &m, 252, 299).unwrap().abs() < 0.15);
    assert!(matches!(
        estimate_beta(&m, &m, 252, 200),
        Err(BaselineError::InsufficientHistory { .. })
    ));
    assert!(matches!(
        estimate_beta(&m, &[0.001; 300], 252, 299),
        Err(BaselineError::ZeroMarketVariance)
    ));
}

#[test]
fn capm_substitution() {
    let e = capm_expected_returns(&[1.0, 0.0, 2.0], 0.02, 0.08);
    assert!((e[0] - 0.08).abs() < 1e-15);
    assert!((e[1] - 0.02).abs() < 1e-15);
    assert!((e[2] - 0.14).abs() < 1e-15);
}

#[test]
fn projection_properties() {
    let b = Bounds::default();
    let w = project_capped_simplex(&[5.0, -4.0, 0.2], b);
    assert_feasible(&w);
    assert_eq!(w[0], 1.5);
    assert_eq!(w[1], -1.5);
    let inside = [0.3, 0.5, 0.2];
    assert!(max_abs(&project_capped_simplex(&inside, b), &inside) < 1e-15);
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn single_asset_is_fully_invested() {
    let s = max_sharpe(&[0.1], &[0.04], 0.0, Bounds::default(), &SolverOptions::default()).unwrap();
    assert_eq!(s.weights, vec![1.0]);
    assert_eq!(gmv(&[0.04], 1, Bounds::default(), &SolverOptions::default()).unwrap().weights, vec![1.0]);
}

#[test]
fn max_sharpe_beats_random_portfolios() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mu, sigma) = (vec![0.1, 0.05], vec![0.04, 0.0, 0.0, 0.04]);
    let sol = max_sharpe(&mu, &sigma, 0.0, Bounds::default(), &SolverOptions::default()).unwrap();
    assert_feasible(&sol.weights);
    let best = (0..100_000).map(|_| sharpe(&mu, &sigma, 0.0, &random_feasible(2, &mut rng))).fold(f64::MIN, f64::max);
    assert!(sol.sharpe.unwrap() >= best - 1e-6);
    // two-asset tangency with equal variances: w ∝ μ, inside the box
    assert!((sol.weights[0] - 2.0 / 3.0).abs() < 1e-6);

    for trial in 0..5 {
        let n = 2 + trial % 5;
        let (mu, sigma) = random_problem(n, &mut rng);
        let sol = max_sharpe(&mu, &sigma, 0.01, Bounds::default(), &SolverOptions::default()).unwrap();
        assert_feasible(&sol.weights);
        let best = (0..20_000).map(|_| sharpe(&mu, &sigma, 0.01, &random_feasible(n, &mut rng))).fold(f64::MIN, f64::max);
        assert!(sol.sharpe.unwrap() >= best - 1e-6, "trial {trial}: {} < {best}", sol.sharpe.unwrap());
    }
}

#[test]
fn identical_assets_are_swap_symmetric() {
    let mu = [0.08, 0.08, 0.03];
    let sigma = [0.04, 0.01, 0.0, 0.01, 0.04, 0.0, 0.0, 0.0, 0.02];
    let sol = max_sharpe(&mu, &sigma, 0.0, Bounds::default(), &SolverOptions::default()).unwrap();
    let w = &sol.weights;
    let swapped = [w[1], w[0], w[2]];
    assert!((sharpe(&mu, &sigma, 0.0, w) - sharpe(&mu, &sigma, 0.0, &swapped)).abs() < 1e-9);
}

#[test]
fn no_asset_above_riskfree_is_an_error() {
    let r = max_sharpe(&[0.01, 0.02], &[0.04, 0.0, 0.0, 0.04], 0.03, Bounds::default(), &SolverOptions::default());
    assert!(matches!(r, Err(BaselineError::NoPositiveExcess { .. })));
}

#[test]
fn gmv_closed_forms() {
    let opts = SolverOptions::default();
    let s = gmv(&[0.04, 0.0, 0.0, 0.09], 2, Bounds::default(), &opts).unwrap();
    let (a, b) = (1.0 / 0.04, 1.0 / 0.09);
    assert!((s.weights[0] - a / (a + b)).abs() < 1e-6);
    assert!((s.weights[1] - b / (a + b)).abs() < 1e-6);
    let n = 5;
    let eye: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
    let s = gmv(&eye, n, Bounds::default(), &opts).unwrap();
    assert!(s.weights.iter().all(|w| (w - 0.2).abs() < 1e-9));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (_, sigma) = random_problem(4, &mut rng);
    let s = gmv(&sigma, 4, Bounds::default(), &opts).unwrap();
    assert_feasible(&s.weights);
    let best = (0..20_000).map(|_| quad(&sigma, &random_feasible(4, &mut rng))).fold(f64::MAX, f64::min);
    assert!(s.variance <= best + 1e-12);
}

#[test]
fn singular_covariance_gets_a_ridge() {
    // perfectly collinear assets
    let sigma = [0.04, 0.04, 0.04, 0.04];
    let s = max_sharpe(&[0.1, 0.05], &sigma, 0.0, Bounds::default(), &SolverOptions::default()).unwrap();
    assert_feasible(&s.weights);
    assert!(s.sharpe.unwrap().is_finite());
}

/// Market with a negative drift below a 5% risk-free rate; assets track it
/// with β ≈ 1 but carry a positive idiosyncratic drift.
fn below_riskfree_fixture(days: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut market = vec![0.0];
    let mut assets = vec![vec![0.0; 3]];
    for _ in 1..days {
        let m = -0.0005 + 0.01 * normal(&mut rng);
        market.push(m);
        assets.push((0..3).map(|a| m + 0.001 * (a + 1) as f64 + 0.005 * normal(&mut rng)).collect());
    }
    (assets, market, vec![0.05; days])
}

#[test]
fn historical_mean_fallback_and_schedule() {
    let (assets, market, rf) = below_riskfree_fixture(400);
    let est = CapmEstimate::at(&assets, &market, &rf, 300, &CapmConfig::default()).unwrap();
    assert!(est.betas.iter().all(|b| *b > 0.5));
    assert!(est.expected.iter().all(|e| *e <= est.rf));

    let out = capm_mvo_backtest(&assets, &market, &rf, 260..400, &CapmConfig::default()).unwrap();
    let days: Vec<usize> = out.rebalances.iter().map(|r| r.day).collect();
    assert_eq!(days, (260..400).step_by(21).collect::<Vec<_>>());
    assert!(out.rebalances.iter().all(|r| r.status == SolveStatus::HistoricalMeanFallback));
    for (k, row) in out.weights.weights.iter().enumerate() {
        assert_feasible(row);
        if k % 21 != 0 {
            assert_eq!(row, &out.weights.weights[k - 1]);
        }
    }
}

#[test]
fn capm_fixture_uses_capm_when_market_beats_riskfree() {
    let (assets, market, _) = below_riskfree_fixture(300);
    let out = capm_mvo_backtest(&assets, &market, &vec![-0.5; 300], 260..300, &CapmConfig::default()).unwrap();
    assert!(out.rebalances.iter().all(|r| r.status == SolveStatus::MaxSharpe));
}

#[test]
fn backtest_needs_a_full_window() {
    let (assets, market, rf) = below_riskfree_fixture(300);
    let r = capm_mvo_backtest(&assets, &market, &rf, 200..300, &CapmConfig::default());
    assert!(matches!(r, Err(BaselineError::InsufficientHistory { .. })));
}

#[test]
fn weights_ignore_future_data() {
    let (assets, market, rf) = below_riskfree_fixture(400);
    let full = capm_mvo_backtest(&assets, &market, &rf, 260..400, &CapmConfig::default()).unwrap();
    let mut cut = assets.clone();
    for row in cut.iter_mut().skip(330) {
        row.iter_mut().for_each(|v| *v = 0.3);
    }
    let partial = capm_mvo_backtest(&cut, &market, &rf, 260..400, &CapmConfig::default()).unwrap();
    // decisions through day 329 only see unchanged data
    assert_eq!(full.weights.weights[..70], partial.weights.weights[..70]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn projection_is_feasible_and_idempotent(v in prop::collection::vec(-6.0f64..6.0, 1..10)) {
        let b = Bounds::default();
        let w = project_capped_simplex(&v, b);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(w.iter().all(|x| (b.lo..=b.hi).contains(x)));
        prop_assert!(max_abs(&project_capped_simplex(&w, b), &w) < 1e-10);
    }

    #[test]
    fn solutions_are_feasible(seed in 0u64..1000, n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut mu, sigma) = random_problem(n, &mut rng);
        mu[0] = 0.2;
        let s = max_sharpe(&mu, &sigma, 0.0, Bounds::default(), &SolverOptions::default()).unwrap();
        prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        prop_assert!(s.weights.iter().all(|x| x.abs() <= 1.5));
        let g = gmv(&sigma, n, Bounds::default(), &SolverOptions::default()).unwrap();
        prop_assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        prop_assert!(g.weights.iter().all(|x| x.abs() <= 1.5));
    }
}
