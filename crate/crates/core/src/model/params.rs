use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Result};
use crate::autodiff::Tensor;

/// Weight-decay group of a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Lstm,
    Gat,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn tensor(&self) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.clone()).expect("stored parameter shape")
    }
}

/// All trainable tensors in a fixed order:
/// per LSTM layer `w_ih (in×4H)`, `w_hh (H×4H)`, `b (1×4H)` with gate
/// blocks ordered input, forget, candidate, output; per GAT layer
/// `w (in×D)`, `a_src (D×1)`, `a_dst (D×1)`, `b (1×D)`; then the head
/// `w (D×1)`, `b (1×1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tensors: Vec<NamedTensor>,
}

/// Positions of each tensor inside [`ModelParams::tensors`].
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub lstm_layers: usize,
}

impl Layout {
    pub fn lstm(&self, layer: usize) -> (usize, usize, usize) {
        (3 * layer, 3 * layer + 1, 3 * layer + 2)
    }

    pub fn gat(&self, layer: usize) -> (usize, usize, usize, usize) {
        let base = 3 * self.lstm_layers + 4 * layer;
        (base, base + 1, base + 2, base + 3)
    }

    pub fn head(&self) -> (usize, usize) {
        let base = 3 * self.lstm_layers + 8;
        (base, base + 1)
    }

    pub fn len(&self) -> usize {
        3 * self.lstm_layers + 10
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn uniform(rng: &mut impl Rng, shape: &[usize], limit: f64) -> Vec<f64> {
    (0..shape.iter().product::<usize>()).map(|_| rng.random_range(-limit..=limit)).collect()
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> (Vec<usize>, Vec<f64>) {
    let shape = vec![rows, cols];
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = uniform(rng, &shape, limit);
    (shape, data)
}

impl ModelParams {
    /// LSTM tensors uniform in ±1/√H with forget-gate bias offset; GAT and
    /// head weights Glorot-uniform; GAT biases zero; head bias constant.
    pub fn init(config: &ModelConfig, rng: &mut impl Rng) -> Self {
        Self::init_with_input(config, config.input_dim(), rng)
    }

    /// As [`ModelParams::init`] for an explicit input feature count.
    pub fn init_with_input(config: &ModelConfig, input_dim: usize, rng: &mut impl Rng) -> Self {
        let h = config.lstm_hidden;
        let d = config.gat_hidden;
        let lim = 1.0 / (h as f64).sqrt();
        let mut tensors = Vec::new();
        let mut push = |name: String, group, shape: Vec<usize>, data: Vec<f64>| {
            tensors.push(NamedTensor { name, group, shape, data });
        };
        for l in 0..config.lstm_layers {
            let input = if l == 0 { input_dim } else { h };
            push(format!("lstm.{l}.w_ih"), ParamGroup::Lstm, vec![input, 4 * h], uniform(rng, &[input, 4 * h], lim));
            push(format!("lstm.{l}.w_hh"), ParamGroup::Lstm, vec![h, 4 * h], uniform(rng, &[h, 4 * h], lim));
            let mut b = uniform(rng, &[1, 4 * h], lim);
            b[h..2 * h].iter_mut().for_each(|v| *v += config.forget_bias_init);
            push(format!("lstm.{l}.b"), ParamGroup::Lstm, vec![1, 4 * h], b);
        }
        for l in 0..2 {
            let input = if l == 0 { h } else { d };
            let (s, w) = glorot(rng, input, d);
            push(format!("gat.{l}.w"), ParamGroup::Gat, s, w);
            let (s, a) = glorot(rng, d, 1);
            push(format!("gat.{l}.a_src"), ParamGroup::Gat, s, a);
            let (s, a) = glorot(rng, d, 1);
            push(format!("gat.{l}.a_dst"), ParamGroup::Gat, s, a);
            push(format!("gat.{l}.b"), ParamGroup::Gat, vec![1, d], vec![0.0; d]);
        }
        let (s, w) = glorot(rng, d, 1);
        push("head.w".into(), ParamGroup::Final, s, w);
        push("head.b".into(), ParamGroup::Final, vec![1, 1], vec![config.head_bias_init]);
        ModelParams { tensors }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            lstm_layers: (self.tensors.len() - 10) / 3,
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Checks shapes against `config` (e.g. after loading a checkpoint).
    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let expected = ModelParams::init(config, &mut rng);
        if expected.tensors.len() != self.tensors.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter tensors, found {}",
                expected.tensors.len(),
                self.tensors.len()
            )));
        }
        for (e, t) in expected.tensors.iter().zip(&self.tensors) {
            if e.name != t.name || e.shape != t.shape || e.group != t.group || t.data.len() != e.data.len() {
                return Err(ModelError::Config(format!(
                    "parameter {} has shape {:?}, expected {} {:?}",
                    t.name, t.shape, e.name, e.shape
                )));
            }
        }
        if !self.is_finite() {
            return Err(ModelError::Config("non-finite parameter values".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn groups_cover_every_tensor_once() {
        let c = ModelConfig::default();
        let p = ModelParams::init(&c, &mut ChaCha8Rng::seed_from_u64(1));
        let layout = p.layout();
        assert_eq!(layout.len(), p.len());
        assert_eq!(layout.lstm_layers, c.lstm_layers);
        let lstm = p.tensors.iter().filter(|t| t.group == ParamGroup::Lstm).count();
        let gat = p.tensors.iter().filter(|t| t.group == ParamGroup::Gat).count();
        let fin = p.tensors.iter().filter(|t| t.group == ParamGroup::Final).count();
        assert_eq!((lstm, gat, fin), (3 * c.lstm_layers, 8, 2));
        assert_eq!(p.tensors[layout.head().1].data, vec![0.5]);
        p.check(&c).unwrap();
    }

    #[test]
    fn init_respects_bounds() {
        let c = ModelConfig::default();
        let p = ModelParams::init(&c, &mut ChaCha8Rng::seed_from_u64(2));
        let lim = 1.0 / (c.lstm_hidden as f64).sqrt();
        let w = &p.tensors[0];
        assert!(w.data.iter().all(|v| v.abs() <= lim));
        let b = &p.tensors[2].data;
        let h = c.lstm_hidden;
        assert!(b[h..2 * h].iter().all(|v| *v >= 1.0 - lim));
    }
}
