//! Central finite-difference check of reverse-mode gradients.

use crate::error::{Error, Result};
use crate::numcore::{Graph, ParameterSet, Var};

/// Worst disagreement found by [`check_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|)` over
    /// entries whose absolute difference exceeds `abs_floor`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error <= rel_tol
    }
}

/// Compares the gradients of the scalar built by `f` against central
/// differences with step `h` on every parameter entry. Differences below
/// `abs_floor` count as agreement regardless of relative size.
pub fn check_gradients<F>(params: &ParameterSet, h: f64, abs_floor: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &ParameterSet) -> Result<Var>,
{
    let mut ps = params.clone();
    ps.zero_grads();
    let mut g = Graph::new();
    let loss = f(&mut g, &ps)?;
    if g.value(loss).numel() != 1 {
        return Err(Error::shape("check_gradients", g.shape(loss), &[1]));
    }
    g.backward(loss, &mut ps)?;
    let analytic: Vec<(String, Vec<f64>)> = ps
        .iter()
        .map(|(n, p)| (n.to_string(), p.grad.data().to_vec()))
        .collect();
    let eval = |ps: &ParameterSet| -> Result<f64> {
        let mut g = Graph::new();
        let v = f(&mut g, ps)?;
        Ok(g.value(v).item())
    };
    let mut report = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (name, grads) in analytic {
        for (i, &a) in grads.iter().enumerate() {
            let base = ps.value(&name)?.clone();
            let mut plus = base.clone();
            plus.data_mut()[i] += h;
            ps.set_value(&name, plus)?;
            let fp = eval(&ps)?;
            let mut minus = base.clone();
            minus.data_mut()[i] -= h;
            ps.set_value(&name, minus)?;
            let fm = eval(&ps)?;
            ps.set_value(&name, base)?;
            let numeric = (fp - fm) / (2.0 * h);
            let abs = (a - numeric).abs();
            report.max_abs_error = report.max_abs_error.max(abs);
            if abs > abs_floor {
                let rel = abs / a.abs().max(numeric.abs());
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some((name.clone(), i));
                }
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
