use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Sample, SampleSet, SelectionRule};
use crate::error::{Error, Result};

/// Fully connected ReLU network with a linear output layer and squared loss
/// `½‖z(x; A_j) − y_j‖²`.
///
/// Parameters are stored layer by layer from the input side; layer `l`
/// holds its weight matrix (row-major, `out × in`) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluMlp {
    widths: Vec<usize>,
    data: SampleSet,
    offsets: Vec<usize>,
    param_box: f64,
    init: Vec<f64>,
    pub selection: SelectionRule,
}

impl ReluMlp {
    pub const DEFAULT_PARAM_BOX: f64 = 1.0;

    /// `widths = [input, hidden…, output]`.
    pub fn new(widths: Vec<usize>, data: SampleSet, param_box: f64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Input("relu-mlp needs at least two positive layer widths".into()));
        }
        if !(param_box > 0.0 && param_box.is_finite()) {
            return Err(Error::Input("relu-mlp parameter box must be positive".into()));
        }
        let (din, dout) = (widths[0], *widths.last().unwrap());
        for (j, s) in data.iter().enumerate() {
            if s.input.len() != din || s.target.len() != dout {
                return Err(Error::Input(format!(
                    "sample {j}: expected {din} inputs and {dout} targets, got {} and {}",
                    s.input.len(),
                    s.target.len()
                )));
            }
        }
        let mut offsets = vec![0];
        for w in widths.windows(2) {
            let last = *offsets.last().unwrap();
            offsets.push(last + w[0] * w[1] + w[1]);
        }
        let n = *offsets.last().unwrap();
        Ok(Self {
            widths,
            data,
            offsets,
            param_box,
            init: vec![0.0; n],
            selection: SelectionRule::default(),
        })
    }

    /// Inputs uniform in `[−1, 1]`, targets from a random teacher network of
    /// the same shape; the initial point is drawn from an independent stream.
    pub fn synthetic(widths: Vec<usize>, samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 || widths.is_empty() {
            return Err(Error::Input("relu-mlp needs at least one sample".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Vec<f64>> = (0..samples)
            .map(|_| (0..widths[0]).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let dout = *widths.last().unwrap();
        let placeholder = inputs
            .iter()
            .map(|a| Sample {
                input: a.clone(),
                target: vec![0.0; dout],
            })
            .collect();
        let shape = Self::new(widths.clone(), SampleSet::new(placeholder)?, Self::DEFAULT_PARAM_BOX)?;
        let teacher: Vec<f64> = (0..shape.num_params()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let data = inputs
            .into_iter()
            .map(|a| {
                let target = shape.forward(&teacher, &a).1.pop().unwrap();
                Sample { input: a, target }
            })
            .collect();
        let mut out = Self::new(widths, SampleSet::new(data)?, Self::DEFAULT_PARAM_BOX)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        out.init = (0..out.num_params()).map(|_| init_rng.gen_range(-0.5..0.5)).collect();
        Ok(out)
    }

    pub fn with_init(mut self, x0: Vec<f64>) -> Result<Self> {
        crate::error::check_dim(self.num_params(), x0.len())?;
        self.init = x0;
        Ok(self)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn data(&self) -> &SampleSet {
        &self.data
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn num_samples(&self) -> usize {
        self.data.len()
    }

    pub fn param_box(&self) -> f64 {
        self.param_box
    }

    pub fn default_x0(&self) -> Vec<f64> {
        self.init.clone()
    }

    /// Parameter index range of layer `l`.
    pub fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    pub fn layer_blocks(&self) -> Vec<Vec<usize>> {
        (0..self.num_layers()).map(|l| self.layer_range(l).collect()).collect()
    }

    /// Layer containing parameter `p`.
    pub fn layer_of(&self, p: usize) -> usize {
        self.offsets.partition_point(|&o| o <= p) - 1
    }

    /// Lowest layer touched by `block`: where the restricted reverse pass
    /// may stop.
    pub fn lowest_layer(&self, block: &[usize]) -> usize {
        block.iter().map(|&p| self.layer_of(p)).min().unwrap_or(0)
    }

    /// Multiply-accumulates of one full reverse pass for one sample.
    pub fn reverse_flops(&self) -> u64 {
        self.widths.windows(2).map(|w| 2 * (w[0] * w[1]) as u64).sum()
    }

    /// Pre-activations per layer and activations (input first, network
    /// output last).
    fn forward(&self, x: &[f64], input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let layers = self.num_layers();
        let mut pre = Vec::with_capacity(layers);
        let mut act = vec![input.to_vec()];
        for l in 0..layers {
            let (din, dout) = (self.widths[l], self.widths[l + 1]);
            let w = &x[self.offsets[l]..self.offsets[l] + din * dout];
            let b = &x[self.offsets[l] + din * dout..self.offsets[l + 1]];
            let a = &act[l];
            let z: Vec<f64> = (0..dout)
                .map(|o| {
                    let row = &w[o * din..(o + 1) * din];
                    row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>() + b[o]
                })
                .collect();
            let next = if l + 1 < layers {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            act.push(next);
        }
        (pre, act)
    }

    pub fn sample_loss(&self, x: &[f64], j: usize) -> f64 {
        let s = self.data.get(j);
        let (_, act) = self.forward(x, &s.input);
        let out = act.last().unwrap();
        0.5 * out.iter().zip(&s.target).map(|(z, y)| (z - y) * (z - y)).sum::<f64>()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (0..self.num_samples()).map(|j| self.sample_loss(x, j)).sum::<f64>() / self.num_samples() as f64
    }

    /// Reverse pass for sample `j` from the output down to layer `stop`.
    /// Returns a full-length vector (layers below `stop` left at zero) and
    /// the multiply-accumulates performed.
    pub fn sample_grad(&self, x: &[f64], j: usize, stop: usize) -> (Vec<f64>, u64) {
        let s = self.data.get(j);
        let (pre, act) = self.forward(x, &s.input);
        let mut g = vec![0.0; self.num_params()];
        let mut flops = 0u64;
        let mut delta: Vec<f64> = act
            .last()
            .unwrap()
            .iter()
            .zip(&s.target)
            .map(|(z, y)| z - y)
            .collect();
        for l in (stop..self.num_layers()).rev() {
            let (din, dout) = (self.widths[l], self.widths[l + 1]);
            let off = self.offsets[l];
            let w = &x[off..off + din * dout];
            let a = &act[l];
            for o in 0..dout {
                for i in 0..din {
                    g[off + o * din + i] = delta[o] * a[i];
                }
                g[off + din * dout + o] = delta[o];
            }
            let mut back = vec![0.0; din];
            for o in 0..dout {
                for i in 0..din {
                    back[i] += w[o * din + i] * delta[o];
                }
            }
            flops += 2 * (din * dout) as u64;
            if l > 0 {
                delta = back
                    .iter()
                    .zip(&pre[l - 1])
                    .map(|(d, &z)| d * self.selection.relu_slope(z))
                    .collect();
            }
        }
        (g, flops)
    }

    /// Samples with some hidden pre-activation exactly zero.
    pub fn kink_samples(&self, x: &[f64]) -> Vec<usize> {
        let hidden = self.num_layers() - 1;
        (0..self.num_samples())
            .filter(|&j| {
                let (pre, _) = self.forward(x, &self.data.get(j).input);
                pre[..hidden].iter().flatten().any(|&z| z == 0.0)
            })
            .collect()
    }

    /// Norm bound on every sample gradient over the parameter box, from
    /// Frobenius bounds on each layer.
    pub fn grad_bound(&self) -> f64 {
        let r = self.param_box;
        let layers = self.num_layers();
        let mut worst: f64 = 0.0;
        for s in self.data.iter() {
            let mut act = vec![s.input.iter().map(|v| v * v).sum::<f64>().sqrt()];
            for l in 0..layers {
                let (din, dout) = (self.widths[l] as f64, self.widths[l + 1] as f64);
                let prev = *act.last().unwrap();
                act.push(r * (din * dout).sqrt() * prev + r * dout.sqrt());
            }
            let y = s.target.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut delta = act[layers] + y;
            let mut total = 0.0;
            for l in (0..layers).rev() {
                total += delta * delta * (act[l] * act[l] + 1.0);
                let (din, dout) = (self.widths[l] as f64, self.widths[l + 1] as f64);
                delta *= r * (din * dout).sqrt();
            }
            worst = worst.max(total.sqrt());
        }
        worst
    }
}
