use super::{Graph, Tensor, Var};
use crate::error::{ensure, Result};

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-12)` over input tensors `i`, with
    /// `a_i`, `n_i` the analytic and numeric gradients and `|.|` the Euclidean norm.
    pub max_rel_error: f64,
    pub worst_input: usize,
    /// The same ratio taken element by element. Near-zero entries make this
    /// dominated by finite-difference roundoff, so it is diagnostic only.
    pub max_elementwise_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

fn rel(diff: f64, a: f64, b: f64) -> f64 {
    diff / a.max(b).max(1e-12)
}

/// Differentiate the scalar graph built by `build` with respect to every
/// element of every input, analytically and by central differences with step `h`.
pub fn finite_diff_check<F>(build: F, inputs: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    ensure!(h > 0.0, InvalidInput, "step must be positive");
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = values
            .iter()
            .map(|t| g.variable(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = build(&mut g, &vars)?;
        ensure!(g.value(out).numel() == 1, InvalidInput, "graph is not scalar-valued");
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars = inputs
        .iter()
        .map(|t| g.variable(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_input: 0,
        max_elementwise_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut work = inputs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        let analytic = grads.get(v);
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for j in 0..inputs[i].numel() {
            let x = inputs[i].data()[j];
            work[i].data_mut()[j] = x + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = x - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.map_or(0.0, |g| g[j]);
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
            let e = rel((a - numeric).abs(), a.abs(), numeric.abs());
            report.checked += 1;
            if e > report.max_elementwise_rel_error {
                report.max_elementwise_rel_error = e;
                report.worst_index = j;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
        let e = rel(diff2.sqrt(), a2.sqrt(), n2.sqrt());
        if e > report.max_rel_error {
            report.max_rel_error = e;
            report.worst_input = i;
        }
    }
    Ok(report)
}
