use ndarray::ArrayD;

use crate::nn::graph::{Graph, Var};

pub const FD_STEP: f64 = 1e-5;

/// Compare analytic gradients against central finite differences for a
/// scalar-valued function of several tensor parameters.
///
/// `f` must be a pure deterministic function of its inputs (pre-sample
/// any dropout masks or noise outside and capture them). Returns the
/// maximum relative error over all parameter entries, where the relative
/// error uses `max(|analytic|, |numeric|, 1e-3)` as denominator so that
/// near-zero gradients are compared absolutely.
pub fn max_grad_rel_error<F>(params: &[ArrayD<f64>], f: F, step: f64) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let mut g = Graph::<f64>::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone(), true)).collect();
    let loss = f(&mut g, &vars);
    g.backward(loss);
    let analytic: Vec<ArrayD<f64>> = vars
        .iter()
        .map(|v| g.grad(*v).cloned().unwrap_or_else(|| ArrayD::zeros(g.value(*v).raw_dim())))
        .collect();

    let eval = |params: &[ArrayD<f64>]| -> f64 {
        let mut g = Graph::<f64>::new();
        let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone(), true)).collect();
        let loss = f(&mut g, &vars);
        g.scalar(loss)
    };

    let mut worst = 0.0f64;
    let mut work: Vec<ArrayD<f64>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for idx in 0..p.len() {
            let orig = p.as_slice().expect("standard layout")[idx];
            work[pi].as_slice_mut().unwrap()[idx] = orig + step;
            let up = eval(&work);
            work[pi].as_slice_mut().unwrap()[idx] = orig - step;
            let down = eval(&work);
            work[pi].as_slice_mut().unwrap()[idx] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[pi].as_slice().unwrap()[idx];
            let denom = a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}
