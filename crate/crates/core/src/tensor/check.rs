use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Max over all entries of `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    /// (leaf index, flat entry index) where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub entries_checked: usize,
}

/// Checks `f`'s gradient with respect to every entry of every leaf.
///
/// `f` builds a single-element loss from the leaves registered on a fresh
/// graph. It is re-run twice per entry, so keep it small.
pub fn grad_check<F>(f: F, leaves: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }

    let mut graph = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| graph.param(t.clone())).collect();
    let loss = f(&mut graph, &vars)?;
    let grads = graph.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| grads.get(v).cloned().expect("leaves require grad"))
        .collect();

    let eval = |point: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = point.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let value = g.value(out).item()?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteInput("grad_check objective"))
        }
    };

    let mut point: Vec<Tensor> = leaves.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for li in 0..point.len() {
        for ei in 0..point[li].numel() {
            let original = point[li].data[ei];
            point[li].data[ei] = original + step;
            let plus = eval(&point)?;
            point[li].data[ei] = original - step;
            let minus = eval(&point)?;
            point[li].data[ei] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[li].data()[ei];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((li, ei));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let x = Tensor::new(vec![1], vec![3.0]).unwrap();
        let r = grad_check(
            |g, v| {
                let sq = g.mul(v[0], v[0])?;
                g.sum(sq)
            },
            &[x],
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(r.max_rel_error <= 1e-9, "{r:?}");
    }

    #[test]
    fn constant_objective_has_zero_error() {
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let r = grad_check(
            |g, v| {
                let zero = g.scale(v[0], 0.0)?;
                let s = g.sum(zero)?;
                g.add_scalar(s, 4.0)
            },
            &[x],
            DEFAULT_STEP,
        )
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.entries_checked, 3);
    }

    #[test]
    fn rejects_non_positive_step() {
        let x = Tensor::scalar(1.0);
        assert!(grad_check(|g, v| g.sum(v[0]), &[x], 0.0).is_err());
    }
}
