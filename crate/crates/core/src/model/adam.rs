use super::{ModelConfig, ModelError, ModelParams, ParamGroup, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam with bias correction and per-group L2 decay added to the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub lstm_decay: f64,
    pub gat_decay: f64,
    pub final_decay: f64,
    pub grad_clip: Option<f64>,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: &ModelConfig, params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Adam {
            lr: config.learning_rate,
            lstm_decay: config.lstm_weight_decay,
            gat_decay: config.gat_weight_decay,
            final_decay: config.final_weight_decay,
            grad_clip: config.grad_clip,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn decay(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Lstm => self.lstm_decay,
            ParamGroup::Gat => self.gat_decay,
            ParamGroup::Final => self.final_decay,
        }
    }

    /// One update. Leaves `params` untouched and returns an error if any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != params.tensors.len() {
            return Err(ModelError::Config("gradient count does not match parameters".into()));
        }
        for (t, g) in params.tensors.iter().zip(grads) {
            if g.len() != t.data.len() {
                return Err(ModelError::Config(format!("gradient shape mismatch for {}", t.name)));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::NonFiniteGradient(t.name.clone()));
            }
        }
        let full: Vec<Vec<f64>> = params
            .tensors
            .iter()
            .zip(grads)
            .map(|(t, g)| {
                let d = self.decay(t.group);
                g.iter().zip(&t.data).map(|(g, w)| g + d * w).collect()
            })
            .collect();
        let scale = match self.grad_clip {
            Some(cap) => {
                let norm = full.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
                if norm > cap {
                    cap / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (k, t) in params.tensors.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in t.data.iter_mut().enumerate() {
                let g = full[k][i] * scale;
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *w -= self.lr * mhat / (vhat.sqrt() + EPS);
            }
        }
        Ok(())
    }
}
