use crate::numerics::Mat;
use crate::{Error, Result};

/// Negative-side slope of the hidden activation `max(0.01 v, v)`.
pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn leaky_relu(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

#[inline]
fn leaky_relu_slope(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// One fully connected layer, `weight` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weight: Mat, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::DimensionMismatch {
                what: "layer bias",
                expected: weight.rows(),
                got: bias.len(),
            });
        }
        Ok(Dense { weight, bias })
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            weight: Mat::zeros(n_out, n_in),
            bias: vec![0.0; n_out],
        }
    }

    #[inline]
    pub fn n_in(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn n_out(&self) -> usize {
        self.weight.rows()
    }

    fn apply_into(&self, input: &[f64], out: &mut [f64]) {
        self.weight.matvec_into(input, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }
}

/// Feedforward network: LeakyReLU on every hidden layer, affine output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct Trace {
    /// `acts[0]` is the input, `acts[l]` the (activated) output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input")
    }
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::DimensionMismatch {
                    what: "adjacent layer widths",
                    expected: pair[0].n_out(),
                    got: pair[1].n_in(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    /// All-zero network with the given widths `[n_in, hidden.., n_out]`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths must have >= 2 positive entries, got {widths:?}"
            )));
        }
        Mlp::new(widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::n_out))
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(self.forward_unchecked(input))
    }

    pub(crate) fn forward_unchecked(&self, input: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut cur = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.n_out()];
            layer.apply_into(&cur, &mut next);
            if l != last {
                next.iter_mut().for_each(|v| *v = leaky_relu(*v));
            }
            cur = next;
        }
        cur
    }

    pub(crate) fn trace(&self, input: &[f64]) -> Trace {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.n_out()];
            layer.apply_into(&acts[l], &mut z);
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|v| leaky_relu(*v)).collect()
            };
            pre.push(z);
            acts.push(a);
        }
        Trace { acts, pre }
    }

    /// Backpropagates `d_output` through a recorded pass.
    ///
    /// When `param_grad` is given, parameter gradients are *added* into it
    /// using the layout of [`Mlp::write_params`]. Returns the gradient with
    /// respect to the input.
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        d_output: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let last = self.layers.len() - 1;
        // parameter offsets per layer
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.n_out() * layer.n_in() + layer.n_out();
        }

        let mut delta = d_output.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l != last {
                for (d, z) in delta.iter_mut().zip(&trace.pre[l]) {
                    *d *= leaky_relu_slope(*z);
                }
            }
            let input = &trace.acts[l];
            let (n_in, n_out) = (layer.n_in(), layer.n_out());
            if let Some(grad) = param_grad.as_deref_mut() {
                let base = offsets[l];
                let (gw, gb) = grad[base..base + n_out * n_in + n_out].split_at_mut(n_out * n_in);
                for (o, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                            *g += d * a;
                        }
                    }
                    gb[o] += d;
                }
            }
            let mut d_in = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    for (di, w) in d_in.iter_mut().zip(layer.weight.row(o)) {
                        *di += d * w;
                    }
                }
            }
            delta = d_in;
        }
        delta
    }

    /// Sign pattern of every hidden pre-activation (true = non-negative side).
    pub fn activation_pattern(&self, input: &[f64]) -> Vec<bool> {
        let trace = self.trace(input);
        let hidden = self.layers.len() - 1;
        trace.pre[..hidden]
            .iter()
            .flat_map(|z| z.iter().map(|v| *v >= 0.0))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.n_out() * l.n_in() + l.n_out())
            .sum()
    }

    /// Appends parameters layer by layer: weight (row-major) then bias.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.as_slice());
            out.extend_from_slice(&layer.bias);
        }
    }

    /// Inverse of [`Mlp::write_params`]; returns the number of values consumed.
    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut off = 0;
        for layer in &mut self.layers {
            let nw = layer.weight.as_slice().len();
            layer
                .weight
                .as_mut_slice()
                .copy_from_slice(&src[off..off + nw]);
            off += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&src[off..off + nb]);
            off += nb;
        }
        off
    }
}
