use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use log::warn;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use gatfolio::autodiff::{suite, GradCheckConfig};
use gatfolio::backtest::{excess_curve, percentage_difference, write_comparison_csv, write_equity_csv, write_excess_csv, BacktestReport, METRIC_NAMES};
use gatfolio::baselines::{equal_weight, Rebalance};
use gatfolio::data::{generate_synthetic, load_dataset, split_panel, Dataset, Splits};
use gatfolio::features::{FeatureFrame, GraphKind};
use gatfolio::graphs::{dynamic_graph, log_return_panel, sentiment_panel, AssetGraph, EDGE_THRESHOLD};
use gatfolio::hparam::{search, write_trials_csv, SearchSpace};
use gatfolio::model::{end_to_end_grad_check, predict_weights, train, write_weights_csv, Checkpoint, EpochRecord, ModelConfig, WeightMatrix, CHECKPOINT_FORMAT};
use gatfolio::pipeline::{capm_mvo, prepare, report, restore};

use crate::config::RunConfig;
use crate::output::OutDir;

/// A check or computation that ran but produced numerically bad results.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct NumericalFailure(pub String);

const ROW_SUM_TOL: f64 = 1e-9;

fn to_json(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn load(c: &RunConfig) -> Result<Dataset> {
    let paths = c.dataset_paths()?;
    let ds = load_dataset(&paths)?;
    if ds.dropped_news + ds.unknown_news > 0 {
        warn!(
            "ignored {} news records after the last trading day and {} for unknown tickers",
            ds.dropped_news, ds.unknown_news
        );
    }
    Ok(ds)
}

fn print_splits(splits: &Splits, ds: &Dataset) {
    let b = splits.boundaries(&ds.panel.calendar);
    for ((name, range), (first, last)) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)].iter().zip(b) {
        println!("{name:<5} days {:>5}..{:<5} {first} .. {last}", range.start, range.end);
    }
}

pub fn synth(c: &RunConfig, force: bool) -> Result<()> {
    let s = &c.synth;
    let ds = generate_synthetic(s.tickers, s.days, c.seed, &s.regime)?;
    let mut names: Vec<String> = ds.files().iter().map(|(n, _)| n.to_string()).collect();
    names.push("synth_config.json".into());
    let out = OutDir::claim(&c.out, force, &names)?;
    for (name, text) in ds.files() {
        out.write(name, text)?;
        let digest = Sha256::digest(text.as_bytes());
        let hex: String = digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        println!("{name:<14} {:>10} bytes  sha256 {hex}", text.len());
    }
    out.write("synth_config.json", to_json(&c.resolved()?)?)?;
    println!("wrote {} tickers × {} days to {}", s.tickers, s.days, c.out.display());
    Ok(())
}

pub fn features(c: &RunConfig, force: bool) -> Result<()> {
    let out = OutDir::claim(&c.out, force, &["features.csv".into(), "features_config.json".into()])?;
    let ds = load(c)?;
    let frame = FeatureFrame::compute(&ds.panel, &c.version.features())?;
    out.write_with("features.csv", |w| frame.write_csv(&ds.panel, w))?;
    out.write("features_config.json", to_json(&c.resolved()?)?)?;
    println!(
        "{} features × {} assets × {} days -> {}",
        frame.dim(),
        frame.n_assets,
        frame.n_days,
        out.path("features.csv").display()
    );
    Ok(())
}

pub fn graph(c: &RunConfig, day: Option<usize>, force: bool) -> Result<()> {
    let model = c.model_config()?;
    let out = OutDir::claim(&c.out, force, &["graph.csv".into()])?;
    let ds = load(c)?;
    let panel = &ds.panel;
    let g: AssetGraph = match c.version.graph_kind() {
        GraphKind::Static => {
            let splits = split_panel(panel.n_days(), &c.split, model.lookback)?;
            let prep = prepare(panel, c.version, splits.train_full(), model.cov_window)?;
            prep.static_graph.expect("static versions fit a graph")
        }
        GraphKind::Dynamic => {
            let t = day.unwrap_or(panel.n_days() - 1);
            ensure!(t < panel.n_days(), "day {t} is outside the {}-day panel", panel.n_days());
            dynamic_graph(t, &panel.sectors, &log_return_panel(panel), &sentiment_panel(panel), EDGE_THRESHOLD)
        }
    };
    out.write_with("graph.csv", |w| g.write_csv(&panel.tickers, w))?;
    println!("{} graph over {} assets -> {}", c.version, g.n, out.path("graph.csv").display());
    Ok(())
}

fn write_history(w: &mut impl Write, phase: &str, history: &[EpochRecord]) -> std::io::Result<()> {
    for h in history {
        writeln!(
            w,
            "{phase},{},{},{},{},{}",
            h.epoch,
            h.train_loss,
            h.val_sharpe.map_or(String::new(), |s| s.to_string()),
            h.skipped,
            h.aborted
        )?;
    }
    Ok(())
}

/// Selects an epoch budget (and, with search enabled, hyperparameters) on
/// the validation split, then refits on train ∪ validation.
pub fn train_cmd(c: &RunConfig, force: bool) -> Result<()> {
    let base = c.model_config()?;
    let mut names: Vec<String> = ["checkpoint.json", "history.csv", "splits.json", "train_config.json"].map(String::from).into();
    if c.search.enabled {
        names.push("trials.csv".into());
    }
    let out = OutDir::claim(&c.out, force, &names)?;
    let ds = load(c)?;
    let panel = &ds.panel;
    let splits = split_panel(panel.n_days(), &c.split, base.lookback)?;
    print_splits(&splits, &ds);
    let mut prep = prepare(panel, c.version, splits.train_full(), base.cov_window)?;

    let (chosen, best_epoch, best_val, selection) = if c.search.enabled {
        let res = search(&mut prep.data, &splits, &SearchSpace::default(), &base, c.search.trials, c.seed)?;
        out.write_with("trials.csv", |w| write_trials_csv(&res.trials, w))?;
        println!(
            "search: {} trials, best trial {} (val sharpe {:.4}, epoch {})",
            res.trials.len(),
            res.best.trial,
            res.best.val_sharpe.unwrap_or(f64::NAN),
            res.best.best_epoch
        );
        (res.best.config.clone(), res.best.best_epoch, res.best.val_sharpe, Vec::new())
    } else {
        let sel = train(&base, &mut prep.data, splits.train.clone(), Some(splits.val.clone()))?;
        (base.clone(), sel.best_epoch, sel.best_val_sharpe, sel.history)
    };
    if best_epoch == 0 {
        warn!("no epoch improved on the initial parameters; the checkpoint keeps them");
    }
    let final_config = ModelConfig {
        epochs: best_epoch,
        ..chosen
    };
    let refit = train(&final_config, &mut prep.data, splits.train_full(), None)?;
    out.write_with("history.csv", |w| {
        writeln!(w, "phase,epoch,train_loss,val_sharpe,skipped,aborted")?;
        write_history(w, "select", &selection)?;
        write_history(w, "refit", &refit.history)
    })?;
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT,
        config: final_config,
        pipeline: prep.pipeline,
        static_graph: prep.static_graph,
        fit_range: splits.train_full(),
        tickers: panel.tickers.clone(),
        best_epoch,
        params: refit.params,
    };
    ck.save(&out.path("checkpoint.json"))?;
    out.write(
        "splits.json",
        to_json(&json!({
            "splits": splits,
            "dates": splits.boundaries(&panel.calendar),
        }))?,
    )?;
    out.write("train_config.json", to_json(&c.resolved()?)?)?;
    println!(
        "best epoch {best_epoch} (val sharpe {}), refit on days {}..{} -> {}",
        best_val.map_or("-".into(), |s| format!("{s:.4}")),
        splits.train_full().start,
        splits.train_full().end,
        out.path("checkpoint.json").display()
    );
    Ok(())
}

fn check_rows(w: &WeightMatrix, name: &str) -> Result<()> {
    for (day, row) in w.days.iter().zip(&w.weights) {
        let s: f64 = row.iter().sum();
        if !((s - 1.0).abs() <= ROW_SUM_TOL) {
            return Err(NumericalFailure(format!("{name} weights on day {day} sum to {s}")).into());
        }
    }
    Ok(())
}

fn write_rebalances(w: &mut impl Write, rebalances: &[Rebalance], ds: &Dataset) -> std::io::Result<()> {
    writeln!(w, "date,status,solver,sharpe,converged")?;
    for r in rebalances {
        let status = |s| serde_json::to_value(s).ok().and_then(|v: Value| v.as_str().map(String::from)).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{:.12e},{}",
            ds.panel.calendar[r.day],
            status(r.status),
            status(r.solver),
            r.sharpe,
            r.converged
        )?;
    }
    Ok(())
}

/// Model, equal-weight and CAPM-MVO on the test split.
pub fn backtest(c: &RunConfig, checkpoint: Option<&Path>, force: bool) -> Result<()> {
    let ck_path = checkpoint.map_or_else(|| c.out.join("checkpoint.json"), Path::to_path_buf);
    let strategies = ["model", "equal_weight", "capm_mvo"];
    let mut names: Vec<String> = Vec::new();
    for s in strategies {
        names.extend([format!("weights_{s}.csv"), format!("report_{s}.json"), format!("equity_{s}.csv")]);
    }
    names.extend(
        [
            "excess_model_vs_equal_weight.csv",
            "excess_model_vs_capm_mvo.csv",
            "comparison.csv",
            "percentage_difference.csv",
            "capm_rebalances.csv",
            "backtest_config.json",
        ]
        .map(String::from),
    );
    let out = OutDir::claim(&c.out, force, &names)?;
    let ck = Checkpoint::load(&ck_path)?;
    ensure!(
        ck.config.version == c.version,
        "checkpoint was trained for {} but the run config says {}",
        ck.config.version,
        c.version
    );
    let ds = load(c)?;
    let panel = &ds.panel;
    ensure!(ck.tickers == panel.tickers, "checkpoint tickers differ from the dataset's");
    let splits = split_panel(panel.n_days(), &c.split, ck.config.lookback)?;
    ensure!(
        ck.fit_range == splits.train_full(),
        "checkpoint was fitted on days {:?} but this split's training block is {:?}",
        ck.fit_range,
        splits.train_full()
    );
    print_splits(&splits, &ds);
    let test = splits.test.clone();
    let mut prep = restore(panel, ck.pipeline.clone(), ck.static_graph.clone(), ck.fit_range.clone(), ck.config.cov_window)?;
    let model_w = predict_weights(&ck.params, &ck.config, &prep.data.inputs, &mut prep.data.graphs, test.clone())?;
    if !model_w.fallbacks.is_empty() {
        warn!("{} degenerate test days reused the previous allocation", model_w.fallbacks.len());
    }
    check_rows(&model_w, "model")?;
    let ew_w = equal_weight(panel.n_assets(), test.clone());
    let (capm_out, capm_rep) = capm_mvo(&ds, test.clone(), &c.capm)?;
    check_rows(&capm_out.weights, "capm_mvo")?;

    let reports: Vec<(BacktestReport, &WeightMatrix)> = vec![
        (report("model", panel, &model_w)?, &model_w),
        (report("equal_weight", panel, &ew_w)?, &ew_w),
        (capm_rep, &capm_out.weights),
    ];
    // the output location is left out so reruns elsewhere compare byte for byte
    let mut echo = c.resolved()?;
    if let Value::Object(m) = &mut echo {
        m.remove("out");
    }
    echo["model"] = serde_json::to_value(&ck.config)?;
    for (rep, w) in &reports {
        let s = &rep.strategy;
        out.write_with(&format!("weights_{s}.csv"), |f| write_weights_csv(w, &panel.calendar, &panel.tickers, f))?;
        out.write_with(&format!("equity_{s}.csv"), |f| write_equity_csv(rep, f))?;
        let mut summary: Value = serde_json::from_str(&rep.summary_json(&echo)?)?;
        if s == "model" {
            summary["degenerate_days"] = json!(model_w.fallbacks.iter().map(|&d| panel.calendar[d]).collect::<Vec<_>>());
        }
        out.write(&format!("report_{s}.json"), to_json(&summary)?)?;
    }
    let model = &reports[0].0;
    for bench in &reports[1..] {
        let excess = excess_curve(model, &bench.0)?;
        out.write_with(&format!("excess_model_vs_{}.csv", bench.0.strategy), |f| write_excess_csv(&model.dates, &excess, f))?;
    }
    let refs: Vec<&BacktestReport> = reports.iter().map(|(r, _)| r).collect();
    out.write_with("comparison.csv", |f| write_comparison_csv(&refs, f))?;
    out.write_with("percentage_difference.csv", |f| write_pct_csv(f, &refs))?;
    out.write_with("capm_rebalances.csv", |f| write_rebalances(f, &capm_out.rebalances, &ds))?;
    out.write("backtest_config.json", to_json(&c.resolved()?)?)?;
    print_table(&refs);
    Ok(())
}

fn write_pct_csv(w: &mut impl Write, reports: &[&BacktestReport]) -> std::io::Result<()> {
    writeln!(w, "benchmark,metric,model,benchmark_value,percent")?;
    for bench in &reports[1..] {
        for d in percentage_difference(&reports[0].metrics, &bench.metrics) {
            writeln!(
                w,
                "{},{},{:.12e},{:.12e},{}",
                bench.strategy,
                d.metric,
                d.model,
                d.benchmark,
                d.percent.map_or("undefined".into(), |p| format!("{p:.6}"))
            )?;
        }
    }
    Ok(())
}

fn print_table(reports: &[&BacktestReport]) {
    print!("{:<18}", "metric");
    for r in reports {
        print!("{:>14}", r.strategy);
    }
    println!();
    for (i, m) in METRIC_NAMES.iter().enumerate() {
        print!("{m:<18}");
        for r in reports {
            print!("{:>14.4}", r.metrics.values()[i]);
        }
        println!();
    }
    if reports.len() > 1 {
        for bench in &reports[1..] {
            println!("{} vs {}:", reports[0].strategy, bench.strategy);
            for d in percentage_difference(&reports[0].metrics, &bench.metrics) {
                println!(
                    "  {:<18}{:>10}",
                    d.metric,
                    d.percent.map_or("undefined".into(), |p| format!("{p:+.2}%"))
                );
            }
        }
    }
}

/// Prints the metric table for saved report JSONs; the first is compared
/// against the rest.
pub fn compare(files: &[impl AsRef<Path>]) -> Result<()> {
    ensure!(!files.is_empty(), "no report files given");
    let mut reports = Vec::new();
    for f in files {
        let f = f.as_ref();
        let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display()))?;
        let metrics = serde_json::from_value(v["metrics"].clone()).with_context(|| format!("{}: no metrics", f.display()))?;
        let strategy = v["strategy"].as_str().unwrap_or("?").to_string();
        reports.push(BacktestReport {
            strategy,
            dates: Vec::new(),
            weights: Vec::new(),
            returns: Vec::new(),
            equity: Vec::new(),
            metrics,
        });
    }
    let refs: Vec<&BacktestReport> = reports.iter().collect();
    print_table(&refs);
    Ok(())
}

/// Report files in `dir`, model first.
pub fn reports_in(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("report_") && n.ends_with(".json"))
        })
        .collect();
    files.sort_by_key(|p| (!p.ends_with("report_model.json"), p.clone()));
    if files.is_empty() {
        bail!("no report_*.json files in {}", dir.display());
    }
    Ok(files)
}

pub fn gradcheck(seed: u64, instances: usize) -> Result<()> {
    let config = GradCheckConfig::default();
    let mut failed = Vec::new();
    println!("{:<16}{:>10}{:>16}  result", "check", "instances", "max rel error");
    for op in suite::primitive_checks(seed, instances, &config)? {
        println!(
            "{:<16}{:>10}{:>16.3e}  {}",
            op.op,
            op.instances,
            op.max_rel_error,
            if op.passed { "pass" } else { "FAIL" }
        );
        if !op.passed {
            failed.push(op.op.to_string());
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..instances as u64 {
        let r = end_to_end_grad_check(seed.wrapping_add(k), &config)?;
        worst = worst.max(r.max_rel_error);
    }
    let ok = worst <= config.tolerance;
    println!("{:<16}{:>10}{:>16.3e}  {}", "end_to_end", instances, worst, if ok { "pass" } else { "FAIL" });
    if !ok {
        failed.push("end_to_end".into());
    }
    if failed.is_empty() {
        println!("all gradient checks passed (eps {:e}, tolerance {:e})", config.epsilon, config.tolerance);
        Ok(())
    } else {
        Err(NumericalFailure(format!("gradient checks failed: {}", failed.join(", "))).into())
    }
}
