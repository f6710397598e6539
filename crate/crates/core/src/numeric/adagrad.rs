use crate::error::{Result, SegError};

use super::{GradientBundle, ParamStore};

/// Per-coordinate AdaGrad: `G += g^2; theta -= lr * g / (sqrt(G) + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradState {
    accum: ParamStore,
    pub lr: f64,
    pub eps: f64,
}

impl AdaGradState {
    pub const DEFAULT_LR: f64 = 0.01;
    pub const DEFAULT_EPS: f64 = 1e-8;

    pub fn new(params: &ParamStore, lr: f64, eps: f64) -> Self {
        Self {
            accum: params.zeros_like(),
            lr,
            eps,
        }
    }

    /// Squared-gradient sums, laid out like the parameters.
    pub fn accumulators(&self) -> &ParamStore {
        &self.accum
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &GradientBundle) -> Result<()> {
        if !grads.matches(params) || !self.accum.same_layout(params) {
            return Err(SegError::Shape(
                "gradient/optimizer layout does not match parameters".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(SegError::NonFinite("gradient passed to AdaGrad".into()));
        }
        for idx in 0..params.len() {
            let g = grads.values(idx);
            let acc = self.accum.values_mut(idx);
            let theta = params.values_mut(idx);
            for ((t, a), &gi) in theta.iter_mut().zip(acc.iter_mut()).zip(g) {
                if gi == 0.0 {
                    continue;
                }
                *a += gi * gi;
                *t -= self.lr * gi / (a.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(theta: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("x", &[1], vec![theta]).unwrap();
        p
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = single(0.3);
        let before = p.clone();
        let mut st = AdaGradState::new(&p, 0.1, 1e-8);
        let g = GradientBundle::zeros_like(&p);
        st.step(&mut p, &g).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.accumulators().get("x").unwrap(), &[0.0]);
    }

    #[test]
    fn single_update_matches_rule() {
        let mut p = single(0.0);
        let mut st = AdaGradState::new(&p, 0.1, 1e-8);
        let mut g = GradientBundle::zeros_like(&p);
        g.get_mut("x").unwrap()[0] = 2.0;
        st.step(&mut p, &g).unwrap();
        assert_eq!(st.accumulators().get("x").unwrap()[0], 4.0);
        let expected = -0.1 * 2.0 / (2.0 + 1e-8);
        assert_eq!(p.get("x").unwrap()[0], expected);
        assert!((expected + 0.1).abs() < 1e-8);
    }

    #[test]
    fn repeated_gradient_shrinks_step() {
        let mut p = single(0.0);
        let mut st = AdaGradState::new(&p, 0.1, 1e-8);
        let mut g = GradientBundle::zeros_like(&p);
        g.get_mut("x").unwrap()[0] = 1.5;
        st.step(&mut p, &g).unwrap();
        let first = -p.get("x").unwrap()[0];
        st.step(&mut p, &g).unwrap();
        let second = -p.get("x").unwrap()[0] - first;
        assert!(second < first);
    }

    #[test]
    fn rejects_non_finite_and_mismatch() {
        let mut p = single(0.0);
        let mut st = AdaGradState::new(&p, 0.1, 1e-8);
        let mut g = GradientBundle::zeros_like(&p);
        g.get_mut("x").unwrap()[0] = f64::NAN;
        assert!(matches!(st.step(&mut p, &g), Err(SegError::NonFinite(_))));

        let mut other = ParamStore::new();
        other.insert("y", &[1], vec![0.0]).unwrap();
        let g2 = GradientBundle::zeros_like(&other);
        assert!(matches!(st.step(&mut p, &g2), Err(SegError::Shape(_))));
    }
}
