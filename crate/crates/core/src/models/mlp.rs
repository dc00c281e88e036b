//! Dense feed-forward network with hand-written backprop.

use crate::error::{Error, Result};
use crate::numerics::{affine_backward_into, affine_forward_into, sgd_step, Activation, Real, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Real> {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_in x n_out`, row-major.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> Dense<T> {
    /// He-normal weights for ReLU layers, `N(0, 1/n_in)` otherwise; zero bias.
    pub fn init(n_in: usize, n_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let gain = if activation == Activation::Relu { 2.0 } else { 1.0 };
        let std = (gain / n_in as f64).sqrt();
        Self {
            n_in,
            n_out,
            weights: (0..n_in * n_out).map(|_| T::of(std * rng.normal())).collect(),
            bias: vec![T::zero(); n_out],
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            n_in: self.n_in,
            n_out: self.n_out,
            weights: self.weights.iter().map(|w| U::of(w.wide())).collect(),
            bias: self.bias.iter().map(|b| U::of(b.wide())).collect(),
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Where the upstream gradient handed to [`Mlp::backward`] attaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientAt {
    /// Gradient w.r.t. the network output (after the final activation).
    Output,
    /// Gradient w.r.t. the final pre-activation (sigmoid + cross-entropy).
    Logits,
}

/// Post-activation values of every layer; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub activations: Vec<Vec<T>>,
    pub batch: usize,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("trace holds the input at least")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Real> {
    layers: Vec<Dense<T>>,
}

impl<T: Real> Mlp<T> {
    /// `sizes = [n_in, h1, ..., n_out]`; `hidden` applies to every layer but
    /// the last, which uses `output`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { hidden };
                Dense::init(w[0], w[1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network without layers".into()));
        }
        for l in &layers {
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(Error::Shape(format!(
                    "layer {}x{} has {} weights and {} biases",
                    l.n_in,
                    l.n_out,
                    l.weights.len(),
                    l.bias.len()
                )));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].n_out != pair[1].n_in {
                return Err(Error::Shape(format!(
                    "layer output {} does not feed next layer input {}",
                    pair[0].n_out, pair[1].n_in
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.n_in())
            .chain(self.layers.iter().map(|l| l.n_out))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    fn check_input(&self, len: usize, batch: usize) -> Result<()> {
        if len != batch * self.n_in() {
            return Err(Error::Shape(format!(
                "network expects {} inputs per row, got {len} values for {batch} rows",
                self.n_in()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(x.len(), batch)?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer_forward(layer, &cur, batch);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: Vec<T>, batch: usize) -> Result<Trace<T>> {
        self.check_input(x.len(), batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x);
        for layer in &self.layers {
            let next = layer_forward(layer, activations.last().unwrap(), batch);
            activations.push(next);
        }
        Ok(Trace { activations, batch })
    }

    /// Backpropagates `upstream` through the traced pass. Returns per-layer
    /// parameter gradients and, when `need_input_grad`, the gradient w.r.t.
    /// the network input.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        upstream: &[T],
        at: GradientAt,
        need_input_grad: bool,
    ) -> (Vec<LayerGrad<T>>, Option<Vec<T>>) {
        let batch = trace.batch;
        let n_layers = self.layers.len();
        assert_eq!(upstream.len(), batch * self.n_out(), "upstream gradient size");

        let mut delta: Vec<T> = match at {
            GradientAt::Logits => upstream.to_vec(),
            GradientAt::Output => {
                let act = self.layers[n_layers - 1].activation;
                upstream
                    .iter()
                    .zip(trace.output())
                    .map(|(&g, &y)| g * act.derivative_from_output(y))
                    .collect()
            }
        };

        let mut grads: Vec<LayerGrad<T>> = Vec::with_capacity(n_layers);
        let mut input_grad = None;
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let x = &trace.activations[l];
            let mut dw = vec![T::zero(); layer.n_in * layer.n_out];
            let mut db = vec![T::zero(); layer.n_out];
            let want_dx = l > 0 || need_input_grad;
            let mut dx = if want_dx {
                vec![T::zero(); batch * layer.n_in]
            } else {
                Vec::new()
            };
            affine_backward_into(
                &delta,
                x,
                &layer.weights,
                batch,
                layer.n_in,
                layer.n_out,
                want_dx.then_some(&mut dx[..]),
                &mut dw,
                &mut db,
            );
            grads.push(LayerGrad {
                weights: dw,
                bias: db,
            });
            if l > 0 {
                let prev_act = self.layers[l - 1].activation;
                for (d, &y) in dx.iter_mut().zip(x) {
                    *d = *d * prev_act.derivative_from_output(y);
                }
                delta = dx;
            } else if need_input_grad {
                input_grad = Some(dx);
            }
        }
        grads.reverse();
        (grads, input_grad)
    }

    pub fn apply_gradients(&mut self, grads: &[LayerGrad<T>], lr: f64, l2: f64) -> Result<()> {
        if grads.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} layer gradients for {} layers",
                grads.len(),
                self.layers.len()
            )));
        }
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            sgd_step(&mut layer.weights, &g.weights, lr, l2)?;
            // biases are not decayed
            sgd_step(&mut layer.bias, &g.bias, lr, 0.0)?;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            layers: self.layers.iter().map(Dense::cast).collect(),
        }
    }

    /// Parameters in layer order, weights (row-major) then bias per layer.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Gradient list flattened in the same order as [`Mlp::params_flat`].
pub fn flatten_grads<T: Real>(grads: &[LayerGrad<T>]) -> Vec<T> {
    grads
        .iter()
        .flat_map(|g| g.weights.iter().chain(&g.bias).copied())
        .collect()
}

fn layer_forward<T: Real>(layer: &Dense<T>, x: &[T], batch: usize) -> Vec<T> {
    let mut y = vec![T::zero(); batch * layer.n_out];
    affine_forward_into(x, &layer.weights, &layer.bias, batch, layer.n_in, layer.n_out, &mut y);
    if layer.activation != Activation::Identity {
        for v in &mut y {
            *v = layer.activation.apply(*v);
        }
    }
    y
}
