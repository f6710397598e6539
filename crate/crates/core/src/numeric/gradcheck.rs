use crate::error::{Result, SegError};

use super::{GradientBundle, ParamStore};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares an analytic gradient against central differences, coordinate by
/// coordinate, and returns the largest `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<L, G>(loss_fn: L, grad_fn: G, params: &ParamStore, h: f64) -> Result<f64>
where
    L: Fn(&ParamStore) -> Result<f64>,
    G: Fn(&ParamStore) -> Result<GradientBundle>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(SegError::InvalidInput(format!("finite-difference step {h}")));
    }
    let analytic = grad_fn(params)?;
    if !analytic.matches(params) {
        return Err(SegError::Shape("analytic gradient layout".into()));
    }
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for k in 0..params.num_scalars() {
        let theta = params.scalar(k);
        probe.set_scalar(k, theta + h);
        let up = loss_fn(&probe)?;
        probe.set_scalar(k, theta - h);
        let down = loss_fn(&probe)?;
        probe.set_scalar(k, theta);
        if !up.is_finite() || !down.is_finite() {
            return Err(SegError::NonFinite(format!(
                "loss at perturbed coordinate {k}"
            )));
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.scalar(k);
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_store() -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("a", &[3], vec![0.5, -1.25, 2.0]).unwrap();
        p.insert("b", &[2, 1], vec![3.0, -0.1]).unwrap();
        p
    }

    fn sum_sq(p: &ParamStore) -> Result<f64> {
        Ok(p.entries()
            .iter()
            .flat_map(|e| e.values.iter())
            .map(|v| v * v)
            .sum())
    }

    fn sum_sq_grad(p: &ParamStore, scale: f64) -> Result<GradientBundle> {
        let mut g = GradientBundle::zeros_like(p);
        for (i, e) in p.entries().iter().enumerate() {
            for (gv, v) in g.values_mut(i).iter_mut().zip(&e.values) {
                *gv = 2.0 * v * scale;
            }
        }
        Ok(g)
    }

    #[test]
    fn exact_on_quadratic() {
        let p = quad_store();
        let err = grad_check(sum_sq, |p| sum_sq_grad(p, 1.0), &p, DEFAULT_STEP).unwrap();
        assert!(err <= 1e-7, "{err}");
    }

    #[test]
    fn detects_planted_scale_fault() {
        let p = quad_store();
        let err = grad_check(sum_sq, |p| sum_sq_grad(p, 1.01), &p, DEFAULT_STEP).unwrap();
        assert!(err >= 9e-3, "{err}");
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let p = quad_store();
        let res = grad_check(
            |p| Ok(if p.scalar(0) > 0.5 { f64::INFINITY } else { 0.0 }),
            |p| Ok(GradientBundle::zeros_like(p)),
            &p,
            DEFAULT_STEP,
        );
        assert!(matches!(res, Err(SegError::NonFinite(_))));
    }
}
