//! Criteria that train models or drive the command line end to end.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gatfolio::data::{generate_synthetic, split_panel, RegimeSpec, SplitSpec};
use gatfolio::features::Version;
use gatfolio::hparam::{search, SearchSpace};
use gatfolio::model::{predict_weights, train, ModelConfig, ModelParams};
use gatfolio::pipeline::{equal_weight_report, prepare, report};

use crate::support::{ensure, gatfolio, within};

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Every data row of a `date,<assets...>` weights file.
fn weight_rows(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .skip(1)
        .map(|line| line.split(',').skip(1).map(|v| v.parse::<f64>().map_err(err)).collect())
        .collect()
}

pub fn c2_weight_contract() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let root = dir.path();
    gatfolio(root, &["synth", "--tickers", "9", "--days", "1000", "--out", "data"])?;
    fs::write(
        root.join("run.json"),
        r#"{"data":{"dir":"data"},"version":"v2","model":{"epochs":2,"lstm_hidden":32,"gat_hidden":32},"out":"run"}"#,
    )
    .map_err(err)?;
    gatfolio(root, &["train", "--config", "run.json"])?;
    gatfolio(root, &["backtest", "--config", "run.json"])?;
    let mut rows = 0;
    let mut worst = 0.0f64;
    for strategy in ["model", "equal_weight", "capm_mvo"] {
        let w = weight_rows(&root.join(format!("run/weights_{strategy}.csv")))?;
        ensure!(!w.is_empty(), "{strategy}: no weight rows");
        for (k, row) in w.iter().enumerate() {
            ensure!(row.len() == 9, "{strategy} row {k} has {} weights", row.len());
            let dev = (row.iter().sum::<f64>() - 1.0).abs();
            ensure!(dev <= 1e-9, "{strategy} row {k} sums to 1 + {dev:e}");
            worst = worst.max(dev);
        }
        rows += w.len();
    }
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("run/report_model.json")).map_err(err)?).map_err(err)?;
    let logged = rep["degenerate_days"].as_array().ok_or("model report does not list degenerate days")?.len();

    // a head that scores every asset 0 makes every day degenerate
    let ds = generate_synthetic(4, 300, 1, &RegimeSpec::default()).map_err(err)?.to_dataset().map_err(err)?;
    let splits = split_panel(ds.panel.n_days(), &SplitSpec::default(), 30).map_err(err)?;
    let config = ModelConfig {
        lstm_hidden: 8,
        gat_hidden: 8,
        ..ModelConfig::preset(Version::V1)
    };
    let mut prep = prepare(&ds.panel, Version::V1, splits.train_full(), config.cov_window).map_err(err)?;
    let mut params = ModelParams::init(&config, &mut ChaCha8Rng::seed_from_u64(0));
    for t in params.tensors.iter_mut().filter(|t| t.name.starts_with("head.")) {
        t.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let w = predict_weights(&params, &config, &prep.data.inputs, &mut prep.data.graphs, splits.test.clone()).map_err(err)?;
    ensure!(w.fallbacks == w.days, "only {} of {} zero-score days were flagged", w.fallbacks.len(), w.days.len());
    ensure!(
        w.weights.iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= 1e-9),
        "degenerate days emitted rows that do not sum to one"
    );
    Ok(format!(
        "{rows} rows across 3 strategies within {worst:.1e}; {logged} degenerate days logged in the run; zero-score days all flagged"
    ))
}

pub fn c8_learning_signal() -> Result<String, String> {
    let t0 = Instant::now();
    let (n, days) = (4, 400);
    let mut drift = vec![0.0; n];
    drift[0] = 0.3;
    let regime = RegimeSpec {
        drift,
        default_vol: 0.1,
        ..RegimeSpec::default()
    };
    let mut good = 0;
    let mut lines = Vec::new();
    for seed in 1..=10u64 {
        let ds = generate_synthetic(n, days, seed, &regime).map_err(err)?.to_dataset().map_err(err)?;
        let splits = split_panel(days, &SplitSpec::default(), 30).map_err(err)?;
        let config = ModelConfig {
            epochs: 20,
            seed,
            ..ModelConfig::preset(Version::V1)
        };
        let mut prep = prepare(&ds.panel, Version::V1, splits.train_full(), config.cov_window).map_err(err)?;
        let out = train(&config, &mut prep.data, splits.train.clone(), Some(splits.val.clone())).map_err(err)?;
        let (first, last) = (out.history[0].train_loss, out.history[out.history.len() - 1].train_loss);
        let w = predict_weights(&out.params, &config, &prep.data.inputs, &mut prep.data.graphs, splits.test.clone()).map_err(err)?;
        let model = report("model", &ds.panel, &w).map_err(err)?.metrics.sharpe;
        let ew = equal_weight_report(&ds.panel, splits.test.clone()).map_err(err)?.metrics.sharpe;
        let ok = last < first && model >= ew;
        good += ok as usize;
        lines.push(format!(
            "seed {seed}: loss {first:.5} -> {last:.5}, sharpe {model:.6} vs ew {ew:.6} (diff {:+.2e}){}",
            model - ew,
            if ok { "" } else { " MISS" }
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    within(t0.elapsed(), 900, "learning-signal runs")?;
    ensure!(good >= 8, "only {good} of 10 seeds reduced the loss and matched equal weight");
    Ok(format!("{good} of 10 seeds"))
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(err)? {
        let entry = entry.map_err(err)?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path()).map_err(err)?);
    }
    Ok(files)
}

pub fn c9_determinism() -> Result<String, String> {
    let config = r#"{"data":{"dir":"data"},"version":"v3","seed":42,"model":{"epochs":3,"lstm_hidden":16,"gat_hidden":16},"out":"run"}"#;
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(err)?;
        let root = dir.path();
        gatfolio(root, &["synth", "--tickers", "4", "--days", "400", "--seed", "42", "--out", "data"])?;
        fs::write(root.join("run.json"), config).map_err(err)?;
        gatfolio(root, &["train", "--config", "run.json"])?;
        gatfolio(root, &["backtest", "--config", "run.json"])?;
        runs.push(snapshot(&root.join("run"))?);
    }
    let (a, b) = (&runs[0], &runs[1]);
    ensure!(a.keys().eq(b.keys()), "runs wrote different files");
    for required in ["weights_model.csv", "weights_equal_weight.csv", "weights_capm_mvo.csv", "report_model.json", "report_capm_mvo.json"] {
        ensure!(a.contains_key(required), "{required} missing");
    }
    for (name, bytes) in a {
        ensure!(&b[name] == bytes, "{name} differs between runs");
    }
    Ok(format!("all {} output files byte-identical across two seed-42 runs", a.len()))
}

pub fn c10_search() -> Result<String, String> {
    let t0 = Instant::now();
    let ds = generate_synthetic(3, 200, 10, &RegimeSpec::default()).map_err(err)?.to_dataset().map_err(err)?;
    let lookback = 10;
    let splits = split_panel(ds.panel.n_days(), &SplitSpec::default(), lookback).map_err(err)?;
    let base = ModelConfig {
        lookback,
        cov_window: lookback,
        epochs: 3,
        ..ModelConfig::preset(Version::V1)
    };
    let mut prep = prepare(&ds.panel, Version::V1, splits.train_full(), lookback).map_err(err)?;
    let space = SearchSpace::default();
    let outcome = search(&mut prep.data, &splits, &space, &base, 50, 42).map_err(err)?;
    ensure!(outcome.trials.len() == 50, "{} trials recorded", outcome.trials.len());
    for t in &outcome.trials {
        ensure!(space.contains(&t.config), "trial {} left the search space: {:?}", t.trial, t.config);
    }
    let best = outcome.best.val_sharpe.ok_or("winner has no validation Sharpe")?;
    let failed = outcome.trials.iter().filter(|t| t.val_sharpe.is_none()).count();
    for t in &outcome.trials {
        if let Some(s) = t.val_sharpe {
            ensure!(best >= s, "trial {} has validation Sharpe {s} above the winner's {best}", t.trial);
        }
    }
    within(t0.elapsed(), 45 * 60, "50-trial search")?;
    Ok(format!("50 trials inside the domains, {failed} failed; winner trial {} with val Sharpe {best:.4}", outcome.best.trial))
}
