use std::path::Path;
use std::process::Command;
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Fails the criterion with a message unless `cond` holds.
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}
pub(crate) use ensure;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Runs the CLI in `cwd`; errors carry stderr.
pub fn gatfolio(cwd: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gatfolio"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| format!("spawning gatfolio: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "gatfolio {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

pub fn within(elapsed: Duration, limit_secs: u64, what: &str) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_secs as f64 {
        Ok(())
    } else {
        Err(format!("{what} took {:.1}s, over the {limit_secs}s budget", elapsed.as_secs_f64()))
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Uniform point of the box [-1.5, 1.5]ⁿ conditioned on summing to one.
pub fn random_feasible(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.5..1.5)).collect();
        let last = 1.0 - w.iter().sum::<f64>();
        if (-1.5..=1.5).contains(&last) {
            w.push(last);
            return w;
        }
    }
}

pub fn quad(sigma: &[f64], w: &[f64]) -> f64 {
    let n = w.len();
    (0..n).map(|i| (0..n).map(|j| w[i] * sigma[i * n + j] * w[j]).sum::<f64>()).sum()
}
