use super::{AutodiffError, Graph, Tensor, Var};

/// Central-difference settings for [`grad_check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InputReport {
    pub input: usize,
    /// max over elements of `|g_ad - g_fd| / max(1, |g_fd|)`
    pub max_rel_error: f64,
    pub worst_element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub inputs: Vec<InputReport>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn evaluate<F>(f: &F, inputs: &[Tensor], track: bool) -> Result<(Graph, Vec<Var>, Var), AutodiffError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut graph = Graph::new();
    let vars = inputs
        .iter()
        .map(|t| graph.leaf(t.clone(), track))
        .collect::<Result<Vec<_>, _>>()?;
    let out = f(&mut graph, &vars)?;
    Ok((graph, vars, out))
}

/// Compares reverse-mode gradients of a scalar-valued `f` against central
/// finite differences for every element of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor], config: &GradCheckConfig) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    let (graph, vars, out) = evaluate(&f, inputs, true)?;
    let grads = graph.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();
    drop(graph);

    let mut reports = Vec::with_capacity(inputs.len());
    let mut perturbed = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut report = InputReport {
            input: i,
            max_rel_error: 0.0,
            worst_element: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..input.numel() {
            let base = input.data()[k];
            perturbed[i].data_mut()[k] = base + config.epsilon;
            let plus = evaluate(&f, &perturbed, false)?;
            let plus = plus.0.value(plus.2).item()?;
            perturbed[i].data_mut()[k] = base - config.epsilon;
            let minus = evaluate(&f, &perturbed, false)?;
            let minus = minus.0.value(minus.2).item()?;
            perturbed[i].data_mut()[k] = base;

            let numeric = (plus - minus) / (2.0 * config.epsilon);
            let ad = analytic[i].data()[k];
            let err = (ad - numeric).abs() / numeric.abs().max(1.0);
            if k == 0 || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_element = k;
                report.analytic = ad;
                report.numeric = numeric;
            }
        }
        reports.push(report);
    }
    let max_rel_error = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        inputs: reports,
        max_rel_error,
        tolerance: config.tolerance,
        passed: max_rel_error <= config.tolerance,
    })
}
