//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so every criterion reports even when an earlier one fails.

mod analytic;
mod behavior;
mod support;

use std::process::ExitCode;
use std::time::Instant;

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, Check); 10] = [
        ("C1", "gradient correctness", analytic::c1_gradients),
        ("C2", "weight rows sum to one", behavior::c2_weight_contract),
        ("C3", "loss properties", analytic::c3_loss),
        ("C4", "graph rules", analytic::c4_graphs),
        ("C5", "feature formulas", analytic::c5_features),
        ("C6", "CAPM-MVO", analytic::c6_capm_mvo),
        ("C7", "metrics", analytic::c7_metrics),
        ("C8", "learning signal", behavior::c8_learning_signal),
        ("C9", "determinism", behavior::c9_determinism),
        ("C10", "hyperparameter search", behavior::c10_search),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o.eq_ignore_ascii_case(id)) {
            continue;
        }
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {id} {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
