//! Feed-forward regression network of the NNARX model.
//!
//! Layer `l` computes `h_l = psi_l(W_l u + U_l h_{l-1} + b_l)` with `h_0 = x`;
//! the output is `U_0 h_M + b_0`. The current input `u` is fed to every layer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::linalg::spectral_norm;
use crate::scalar::{lit, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, a: T) -> T {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }

    /// Derivative expressed through the activation output `h = psi(a)`.
    #[inline]
    pub fn derivative_from_output<T: Real>(self, h: T) -> T {
        match self {
            Activation::Tanh => T::one() - h * h,
            Activation::Identity => T::one(),
        }
    }

    /// Lipschitz constant `L_psi`.
    pub fn lipschitz(self) -> f64 {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T: Real> {
    /// `W_l`, h_l x m.
    pub input_weights: DMatrix<T>,
    /// `U_l`, h_l x h_{l-1} (h_0 = n).
    pub feed_weights: DMatrix<T>,
    /// `b_l`, h_l.
    pub bias: DVector<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    pub fn width(&self) -> usize {
        self.bias.len()
    }
}

/// Weights `Phi = {U_0, b_0, {W_l, U_l, b_l}}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FfnnParams<T: Real> {
    pub layers: Vec<Layer<T>>,
    /// `U_0`, p x h_M.
    pub output_weights: DMatrix<T>,
    /// `b_0`, p.
    pub output_bias: DVector<T>,
}

/// Intermediate values of one forward pass, kept for the reverse sweep.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T: Real> {
    /// Post-activation outputs `h_1 .. h_M`.
    pub hidden: Vec<DVector<T>>,
    pub output: DVector<T>,
}

/// Adjoints of the network inputs returned by [`FfnnParams::backward`].
#[derive(Clone, Debug)]
pub struct InputAdjoint<T: Real> {
    pub state: DVector<T>,
    pub input: DVector<T>,
}

impl<T: Real> FfnnParams<T> {
    pub fn new(
        layers: Vec<Layer<T>>,
        output_weights: DMatrix<T>,
        output_bias: DVector<T>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network needs at least one layer".into()));
        }
        let m = layers[0].input_weights.ncols();
        let mut prev = layers[0].feed_weights.ncols();
        for (l, layer) in layers.iter().enumerate() {
            let h = layer.bias.len();
            dim_check(
                layer.input_weights.shape() == (h, m),
                || format!("layer {}: W has shape {:?}, expected ({h}, {m})", l + 1, layer.input_weights.shape()),
            )?;
            dim_check(
                layer.feed_weights.shape() == (h, prev),
                || format!("layer {}: U has shape {:?}, expected ({h}, {prev})", l + 1, layer.feed_weights.shape()),
            )?;
            prev = h;
        }
        let p = output_bias.len();
        dim_check(output_weights.shape() == (p, prev), || {
            format!("U_0 has shape {:?}, expected ({p}, {prev})", output_weights.shape())
        })?;
        Ok(Self {
            layers,
            output_weights,
            output_bias,
        })
    }

    /// All-zero network with the given layer widths.
    pub fn zeros(state_dim: usize, inputs: usize, outputs: usize, widths: &[usize], activation: Activation) -> Result<Self> {
        let mut prev = state_dim;
        let layers = widths
            .iter()
            .map(|&h| {
                let layer = Layer {
                    input_weights: DMatrix::zeros(h, inputs),
                    feed_weights: DMatrix::zeros(h, prev),
                    bias: DVector::zeros(h),
                    activation,
                };
                prev = h;
                layer
            })
            .collect();
        Self::new(layers, DMatrix::zeros(outputs, prev), DVector::zeros(outputs))
    }

    /// Weights uniform in `[-0.5/sqrt(fan_in), 0.5/sqrt(fan_in)]`, biases zero.
    pub fn random<R: Rng + ?Sized>(
        state_dim: usize,
        inputs: usize,
        outputs: usize,
        widths: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(state_dim, inputs, outputs, widths, activation)?;
        let mut fill = |m: &mut DMatrix<T>, fan_in: usize| {
            let bound = 0.5 / (fan_in as f64).sqrt();
            m.iter_mut().for_each(|w| *w = lit(rng.gen_range(-bound..=bound)));
        };
        for layer in &mut p.layers {
            let fan_in = layer.input_weights.ncols() + layer.feed_weights.ncols();
            fill(&mut layer.input_weights, fan_in);
            fill(&mut layer.feed_weights, fan_in);
        }
        let fan_in = p.output_weights.ncols();
        fill(&mut p.output_weights, fan_in);
        Ok(p)
    }

    pub fn state_dim(&self) -> usize {
        self.layers[0].feed_weights.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.output_bias.len()
    }

    /// Same shapes, all entries zero (used as a gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                input_weights: DMatrix::zeros(l.input_weights.nrows(), l.input_weights.ncols()),
                feed_weights: DMatrix::zeros(l.feed_weights.nrows(), l.feed_weights.ncols()),
                bias: DVector::zeros(l.bias.len()),
                activation: l.activation,
            })
            .collect();
        Self {
            layers,
            output_weights: DMatrix::zeros(self.output_weights.nrows(), self.output_weights.ncols()),
            output_bias: DVector::zeros(self.output_bias.len()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.input_weights.len() + l.feed_weights.len() + l.bias.len())
            .sum::<usize>()
            + self.output_weights.len()
            + self.output_bias.len()
    }

    fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.input_weights.as_slice());
            out.push(l.feed_weights.as_slice());
            out.push(l.bias.as_slice());
        }
        out.push(self.output_weights.as_slice());
        out.push(self.output_bias.as_slice());
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.input_weights.as_mut_slice());
            out.push(l.feed_weights.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out.push(self.output_weights.as_mut_slice());
        out.push(self.output_bias.as_mut_slice());
        out
    }

    /// Flattens every parameter into one vector (storage order).
    pub fn to_flat(&self) -> Vec<T> {
        self.slices().concat()
    }

    /// Overwrites the parameters from a flat vector produced by [`Self::to_flat`].
    pub fn set_flat(&mut self, values: &[T]) -> Result<()> {
        dim_check(values.len() == self.param_count(), || {
            format!("expected {} parameters, got {}", self.param_count(), values.len())
        })?;
        let mut offset = 0;
        for s in self.slices_mut() {
            let len = s.len();
            s.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub fn scale_mut(&mut self, scale: T) {
        for dst in self.slices_mut() {
            dst.iter_mut().for_each(|d| *d *= scale);
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * *s;
            }
        }
    }

    pub fn forward(&self, x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let mut h = x.clone();
        for layer in &self.layers {
            let mut a = &layer.feed_weights * &h + &layer.bias;
            a.gemv(T::one(), &layer.input_weights, u, T::one());
            a.apply(|v| *v = layer.activation.apply(*v));
            h = a;
        }
        &self.output_weights * h + &self.output_bias
    }

    pub fn forward_trace(&self, x: &DVector<T>, u: &DVector<T>) -> ForwardTrace<T> {
        let mut hidden = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev = hidden.last().unwrap_or(x);
            let mut a = &layer.feed_weights * prev + &layer.bias;
            a.gemv(T::one(), &layer.input_weights, u, T::one());
            a.apply(|v| *v = layer.activation.apply(*v));
            hidden.push(a);
        }
        let output = &self.output_weights * hidden.last().unwrap() + &self.output_bias;
        ForwardTrace { hidden, output }
    }

    /// Reverse sweep: given the adjoint of the output, returns the adjoints of
    /// `x` and `u`, and accumulates parameter gradients into `grad` if given.
    pub fn backward(
        &self,
        x: &DVector<T>,
        u: &DVector<T>,
        trace: &ForwardTrace<T>,
        out_adjoint: &DVector<T>,
        mut grad: Option<&mut FfnnParams<T>>,
    ) -> InputAdjoint<T> {
        let last = trace.hidden.len() - 1;
        if let Some(g) = grad.as_deref_mut() {
            g.output_weights.ger(T::one(), out_adjoint, &trace.hidden[last], T::one());
            g.output_bias += out_adjoint;
        }
        let mut dh = self.output_weights.tr_mul(out_adjoint);
        let mut du = DVector::zeros(u.len());
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let h = &trace.hidden[l];
            let mut da = dh;
            for (d, &hv) in da.iter_mut().zip(h.iter()) {
                *d *= layer.activation.derivative_from_output(hv);
            }
            let prev = if l == 0 { x } else { &trace.hidden[l - 1] };
            if let Some(g) = grad.as_deref_mut() {
                let gl = &mut g.layers[l];
                gl.input_weights.ger(T::one(), &da, u, T::one());
                gl.feed_weights.ger(T::one(), &da, prev, T::one());
                gl.bias += &da;
            }
            du.gemv_tr(T::one(), &layer.input_weights, &da, T::one());
            dh = layer.feed_weights.tr_mul(&da);
        }
        InputAdjoint {
            state: dh,
            input: du,
        }
    }

    /// `(d eta / d x, d eta / d u)` by forward-mode chain rule.
    pub fn jacobians(&self, x: &DVector<T>, u: &DVector<T>) -> (DMatrix<T>, DMatrix<T>) {
        let trace = self.forward_trace(x, u);
        let n = x.len();
        let m = u.len();
        let mut dx = DMatrix::<T>::identity(n, n);
        let mut du = DMatrix::<T>::zeros(n, m);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut nx = &layer.feed_weights * &dx;
            let mut nu = &layer.feed_weights * &du + &layer.input_weights;
            for (r, &hv) in trace.hidden[l].iter().enumerate() {
                let s = layer.activation.derivative_from_output(hv);
                nx.row_mut(r).scale_mut(s);
                nu.row_mut(r).scale_mut(s);
            }
            dx = nx;
            du = nu;
        }
        (&self.output_weights * dx, &self.output_weights * du)
    }

    /// Lipschitz bound of `eta` with respect to `x`:
    /// `||U_0||_2 * prod_l L_l ||U_l||_2`.
    pub fn contraction_margin(&self) -> T {
        let mut r = spectral_norm(&self.output_weights).value;
        for layer in &self.layers {
            r *= lit::<T>(layer.activation.lipschitz()) * spectral_norm(&layer.feed_weights).value;
        }
        r
    }

    /// Contraction margin and its gradient with respect to every parameter
    /// (non-zero only on `U_0` and the `U_l`).
    pub fn contraction_margin_with_gradient(&self) -> (T, FfnnParams<T>) {
        let out = spectral_norm(&self.output_weights);
        let feeds: Vec<_> = self.layers.iter().map(|l| spectral_norm(&l.feed_weights)).collect();
        let lip: T = self
            .layers
            .iter()
            .fold(T::one(), |acc, l| acc * lit::<T>(l.activation.lipschitz()));
        let factors: Vec<T> = std::iter::once(out.value).chain(feeds.iter().map(|s| s.value)).collect();
        let margin = factors.iter().fold(lip, |acc, &f| acc * f);
        let mut grad = self.zeros_like();
        // d r / d M_j = (prod of the other factors) * u_j v_j'
        let others = |skip: usize| {
            factors
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .fold(lip, |acc, (_, &f)| acc * f)
        };
        if out.value > T::zero() {
            grad.output_weights.ger(others(0), &out.left, &out.right, T::zero());
        }
        for (l, s) in feeds.iter().enumerate() {
            if s.value > T::zero() {
                grad.layers[l].feed_weights.ger(others(l + 1), &s.left, &s.right, T::zero());
            }
        }
        (margin, grad)
    }
}
