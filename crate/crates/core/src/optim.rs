//! Adam over [`ModelParams`].

use crate::error::{Result, StylerError};
use crate::params::ModelParams;

pub const BETA1: f32 = 0.9;
pub const BETA2: f32 = 0.999;
pub const EPSILON: f32 = 1e-8;

/// First and second moment estimates plus the number of updates applied.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn new(model: &ModelParams) -> Self {
        Self { step: 0, m: model.zeros_like(), v: model.zeros_like() }
    }

    /// One bias-corrected Adam update of `params` with gradients `grads`.
    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) -> Result<()> {
        if params.config != grads.config || params.config != self.m.config {
            return Err(StylerError::Argument("optimizer state belongs to a different model config".into()));
        }
        for ((name, p), (_, g)) in params.named().into_iter().zip(grads.named()) {
            if g.shape() != p.shape() {
                return Err(StylerError::Dimension(format!("gradient of {name} has shape {:?}", g.shape())));
            }
        }
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let step_size = (lr / (1.0 - f64::from(BETA1).powi(t))) as f32;
        let bc2_sqrt = (1.0 - f64::from(BETA2).powi(t)).sqrt() as f32;

        let slots = params.slots_mut().into_iter().zip(self.m.slots_mut()).zip(self.v.slots_mut());
        for (((p, m), v), g) in slots.zip(grads.named().into_iter().map(|(_, g)| g)) {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let denom = v[i].sqrt() / bc2_sqrt + EPSILON;
                p[i] -= step_size * m[i] / denom;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;
    use crate::vgg::Arch;

    #[test]
    fn first_step_moves_each_weight_by_lr() {
        let cfg = ModelConfig::with_arch(Arch { base_width: 1 });
        let mut p = ModelParams::init(cfg, 0);
        let before = p.clone();
        let grads = p.map_named(|_, t| t.map(|_| 0.5));
        let mut adam = AdamState::new(&p);
        adam.update(&mut p, &grads, 1e-3).unwrap();
        let deltas = before.zip_map(&p, |_, a, b| a.zip_map(b, |x, y| x - y).unwrap());
        for (_, d) in deltas.named() {
            for &x in d.data() {
                assert!((x - 1e-3).abs() < 1e-7, "{x}");
            }
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let cfg = ModelConfig::with_arch(Arch { base_width: 1 });
        let mut p = ModelParams::init(cfg, 1);
        let before = p.clone();
        let mut adam = AdamState::new(&p);
        let zeros = p.zeros_like();
        adam.update(&mut p, &zeros, 1e-4).unwrap();
        assert_eq!(p, before);
    }
}
