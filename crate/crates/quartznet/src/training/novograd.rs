//! NovoGrad: layer-wise second moments with decoupled weight decay.
//!
//! Per parameter tensor `l` with gradient `g_l`:
//!
//! ```text
//! v_l <- beta2 * v_l + (1 - beta2) * ||g_l||^2      (first step: v_l = ||g_l||^2)
//! ghat = g_l / (sqrt(v_l) + eps) + lambda * w_l
//! m_l  <- beta1 * m_l + ghat
//! w_l  <- w_l - lr * m_l
//! ```
//!
//! State lives in the parameter element type so that f32 training
//! checkpoints restore it exactly.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone)]
pub struct NovoGrad<E: Element> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Per-tensor squared-gradient moving average (scalar per layer).
    v: Vec<Option<E>>,
    /// Per-parameter first moment.
    m: Vec<Vec<E>>,
    steps: usize,
}

impl<E: Element> NovoGrad<E> {
    pub fn new(beta1: f64, beta2: f64, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::Config(format!(
                "betas must lie in [0, 1): got {beta1}, {beta2}"
            )));
        }
        Ok(NovoGrad {
            beta1,
            beta2,
            epsilon: 1e-8,
            weight_decay,
            v: Vec::new(),
            m: Vec::new(),
            steps: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Apply one update. `grad_scale` pre-multiplies every gradient (the
    /// trainer passes the global-norm clip factor). Parameters with no
    /// accumulated gradient are treated as having zero gradient.
    pub fn step(
        &mut self,
        params: &[(String, Tensor<E>)],
        lr: f64,
        grad_scale: f64,
    ) -> Result<()> {
        if self.v.is_empty() {
            self.v = vec![None; params.len()];
            self.m = params
                .iter()
                .map(|(_, p)| vec![E::ZERO; p.numel()])
                .collect();
        }
        if self.v.len() != params.len() {
            return Err(Error::Config(format!(
                "optimizer state holds {} tensors, model has {}",
                self.v.len(),
                params.len()
            )));
        }

        let scale = E::from_f64(grad_scale);
        let b1 = E::from_f64(self.beta1);
        let b2 = E::from_f64(self.beta2);
        let lam = E::from_f64(self.weight_decay);
        let eps = E::from_f64(self.epsilon);
        let lr_e = E::from_f64(lr);

        for (i, (name, p)) in params.iter().enumerate() {
            let grad = p.grad();
            let grad = match grad {
                Some(g) => g.iter().map(|&v| v * scale).collect::<Vec<E>>(),
                None => vec![E::ZERO; p.numel()],
            };
            let mut norm_sq = E::ZERO;
            for &g in &grad {
                norm_sq += g * g;
            }
            if !norm_sq.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in {name}; step aborted"
                )));
            }
            let v = match self.v[i] {
                None => norm_sq,
                Some(prev) => b2 * prev + (E::ONE - b2) * norm_sq,
            };
            self.v[i] = Some(v);
            let denom = v.sqrt() + eps;

            let m = &mut self.m[i];
            p.update_data(|w| {
                for j in 0..w.len() {
                    let ghat = grad[j] / denom + lam * w[j];
                    m[j] = b1 * m[j] + ghat;
                    w[j] -= lr_e * m[j];
                }
            });
        }
        self.steps += 1;
        Ok(())
    }

    /// Serialize state for checkpoints: (`opt.v.<name>`, `opt.m.<name>`).
    pub fn export(&self, params: &[(String, Tensor<E>)]) -> Vec<(String, Vec<f32>)> {
        let mut out = Vec::new();
        if self.v.is_empty() {
            return out;
        }
        for (i, (name, _)) in params.iter().enumerate() {
            if let Some(v) = self.v[i] {
                out.push((format!("opt.v.{name}"), vec![v.to_f64() as f32]));
                out.push((
                    format!("opt.m.{name}"),
                    self.m[i].iter().map(|x| x.to_f64() as f32).collect(),
                ));
            }
        }
        out
    }

    /// Restore exported state; silently starts fresh when the checkpoint
    /// carries no optimizer tensors.
    pub fn restore(
        &mut self,
        params: &[(String, Tensor<E>)],
        lookup: impl Fn(&str) -> Option<Vec<f32>>,
        steps: usize,
    ) -> Result<()> {
        let mut v = Vec::with_capacity(params.len());
        let mut m = Vec::with_capacity(params.len());
        let mut any = false;
        for (name, p) in params {
            match (
                lookup(&format!("opt.v.{name}")),
                lookup(&format!("opt.m.{name}")),
            ) {
                (Some(vs), Some(ms)) => {
                    if vs.len() != 1 || ms.len() != p.numel() {
                        return Err(Error::Config(format!(
                            "optimizer state for {name} has the wrong shape"
                        )));
                    }
                    any = true;
                    v.push(Some(E::from_f64(vs[0] as f64)));
                    m.push(ms.iter().map(|&x| E::from_f64(x as f64)).collect());
                }
                (None, None) => {
                    v.push(None);
                    m.push(vec![E::ZERO; p.numel()]);
                }
                _ => {
                    return Err(Error::Config(format!(
                        "optimizer state for {name} is half missing"
                    )));
                }
            }
        }
        if any {
            self.v = v;
            self.m = m;
            self.steps = steps;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, values: Vec<f64>) -> Vec<(String, Tensor<f64>)> {
        vec![(name.into(), Tensor::param(&[values.len()], values).unwrap())]
    }

    #[test]
    fn first_step_matches_hand_calculation() {
        // w=0, g=2, lambda=0, lr=0.1: v=4, m = 2/(2+eps) ~ 1, w = -0.1
        let params = single("w", vec![0.0]);
        params[0].1.accumulate_grad(&[2.0]);
        let mut opt = NovoGrad::new(0.95, 0.5, 0.0).unwrap();
        opt.step(&params, 0.1, 1.0).unwrap();
        assert!((opt.v[0].unwrap() - 4.0).abs() < 1e-12);
        assert!((opt.m[0][0] - 1.0).abs() < 1e-8);
        assert!((params[0].1.values()[0] - (-0.1)).abs() < 1e-8);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let params = single("w", vec![1.5, -2.0]);
        let mut opt = NovoGrad::new(0.95, 0.5, 0.0).unwrap();
        opt.step(&params, 0.1, 1.0).unwrap();
        assert_eq!(params[0].1.values(), vec![1.5, -2.0]);
    }

    #[test]
    fn two_steps_match_scalar_recursion_oracle() {
        // Loss w^2/2 from w=1: g = w each step.
        for (b1, b2, lam, lr) in [
            (0.95, 0.5, 0.0, 0.1),
            (0.9, 0.25, 0.001, 0.05),
            (0.0, 0.9, 0.01, 0.2),
        ] {
            let params = single("w", vec![1.0]);
            let mut opt = NovoGrad::new(b1, b2, lam).unwrap();

            // Oracle: the same recursion written out by hand.
            let eps = 1e-8f64;
            let mut w_o = 1.0f64;
            let mut v_o: Option<f64> = None;
            let mut m_o = 0.0f64;

            for _ in 0..2 {
                let g = params[0].1.values()[0];
                params[0].1.zero_grad();
                params[0].1.accumulate_grad(&[g]);
                opt.step(&params, lr, 1.0).unwrap();

                let g_o = w_o;
                let v_new = match v_o {
                    None => g_o * g_o,
                    Some(v) => b2 * v + (1.0 - b2) * g_o * g_o,
                };
                v_o = Some(v_new);
                let ghat = g_o / (v_new.sqrt() + eps) + lam * w_o;
                m_o = b1 * m_o + ghat;
                w_o -= lr * m_o;

                assert!(
                    (params[0].1.values()[0] - w_o).abs() < 1e-12,
                    "({b1},{b2},{lam},{lr}): {} vs {w_o}",
                    params[0].1.values()[0]
                );
            }
        }
    }

    #[test]
    fn non_finite_gradient_names_the_layer() {
        let params = single("b3.m1.dw.weight", vec![0.0]);
        params[0].1.accumulate_grad(&[f64::NAN]);
        let mut opt = NovoGrad::new(0.95, 0.5, 0.0).unwrap();
        let err = opt.step(&params, 0.1, 1.0).unwrap_err();
        assert!(err.to_string().contains("b3.m1.dw.weight"), "{err}");
    }

    #[test]
    fn invalid_betas_rejected() {
        assert!(NovoGrad::<f64>::new(1.0, 0.5, 0.0).is_err());
        assert!(NovoGrad::<f64>::new(0.5, -0.1, 0.0).is_err());
    }

    #[test]
    fn export_restore_roundtrip() {
        let params = single("w", vec![1.0, 2.0]);
        params[0].1.accumulate_grad(&[0.5, -0.5]);
        let mut opt = NovoGrad::new(0.95, 0.5, 0.001).unwrap();
        opt.step(&params, 0.1, 1.0).unwrap();
        let exported = opt.export(&params);

        let mut restored = NovoGrad::new(0.95, 0.5, 0.001).unwrap();
        restored
            .restore(
                &params,
                |name| {
                    exported
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, v)| v.clone())
                },
                1,
            )
            .unwrap();
        assert_eq!(restored.steps_taken(), 1);
        assert_eq!(restored.v[0].map(|v| v as f32), opt.v[0].map(|v| v as f32));
    }
}
