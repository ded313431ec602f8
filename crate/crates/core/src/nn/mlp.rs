use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamAddr, ParamTree};
use crate::error::{Error, Result};
use crate::rng;

/// Std of a unit normal truncated to `[-2, 2]`. Dividing by it makes the
/// truncated draw have the requested std.
const TRUNC_NORMAL_STD: f64 = 0.879_625_661_034_239_8;

/// Layer widths of a fully connected network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            output,
        }
    }

    /// Number of affine layers (hidden layers plus the output head).
    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input);
        w.extend_from_slice(&self.hidden);
        w.push(self.output);
        w
    }

    fn validate(&self) -> Result<()> {
        if self.widths().contains(&0) {
            return Err(Error::config(format!(
                "network widths must be positive, got {:?}",
                self.widths()
            )));
        }
        Ok(())
    }
}

/// Activations retained by a forward pass, consumed by [`Mlp::backward`].
///
/// `inputs[i]` is the input of affine layer `i`; for `i > 0` it is the ReLU
/// output of layer `i - 1`, which also encodes the ReLU derivative mask.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

/// Multilayer perceptron: ReLU on hidden layers, identity on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParamTree,
}

impl Mlp {
    /// Truncated-normal weights with std `1/sqrt(fan_in)`, zero biases.
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(seed);
        let widths = spec.widths();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = 1.0 / (fan_in as f64).sqrt() / TRUNC_NORMAL_STD;
                let weight =
                    Array2::from_shape_simple_fn((fan_in, fan_out), || std * truncated_normal(&mut rng));
                (weight, Array2::zeros((1, fan_out)))
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            params: ParamTree::from_layers(layers),
        })
    }

    pub fn zeros(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .widths()
            .windows(2)
            .map(|w| (Array2::zeros((w[0], w[1])), Array2::zeros((1, w[1]))))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            params: ParamTree::from_layers(layers),
        })
    }

    /// Rebuilds a network from a parameter tree, checking shapes against `spec`.
    pub fn from_params(spec: MlpSpec, params: ParamTree) -> Result<Self> {
        let expected = Self::zeros(&spec)?;
        if params.len() != expected.params.len()
            || params
                .iter()
                .zip(expected.params.iter())
                .any(|((_, a), (_, b))| a.value.dim() != b.value.dim())
        {
            return Err(Error::config("parameter shapes do not match network spec"));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output
    }

    pub fn num_layers(&self) -> usize {
        self.spec.num_layers()
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.spec.hidden.len()
    }

    pub fn params(&self) -> &ParamTree {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamTree {
        &mut self.params
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input {
            return Err(Error::config(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.spec.input
            )));
        }
        Ok(())
    }

    fn affine(&self, layer: usize, x: &ArrayView2<f64>) -> Array2<f64> {
        let w = &self.params.entry(ParamAddr::weight(layer)).value;
        let b = &self.params.entry(ParamAddr::bias(layer)).value;
        let mut z = x.dot(w);
        z += b;
        z
    }

    /// Forward pass without retaining activations.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let last = self.num_layers() - 1;
        let mut h = self.affine(0, &x);
        for layer in 1..=last {
            h.mapv_inplace(relu);
            h = self.affine(layer, &h.view());
        }
        Ok(h)
    }

    /// Forward pass that records the activations needed by [`Mlp::backward`].
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.num_layers());
        inputs.push(x.to_owned());
        let last = self.num_layers() - 1;
        let mut h = self.affine(0, &x);
        for layer in 1..=last {
            h.mapv_inplace(relu);
            let next = self.affine(layer, &h.view());
            inputs.push(h);
            h = next;
        }
        Ok((h, Tape { inputs }))
    }

    /// Reverse pass: gradients for every address plus the gradient with
    /// respect to the network input.
    pub fn backward(
        &self,
        tape: &Tape,
        grad_out: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if tape.inputs.len() != self.num_layers() {
            return Err(Error::Usage(
                "backward called without a matching forward tape".into(),
            ));
        }
        if grad_out.dim() != (tape.batch_size(), self.spec.output) {
            return Err(Error::config(format!(
                "output gradient has shape {:?}, expected ({}, {})",
                grad_out.dim(),
                tape.batch_size(),
                self.spec.output
            )));
        }
        let n = self.num_layers();
        let mut grads = vec![Array2::zeros((0, 0)); 2 * n];
        let mut delta = grad_out.to_owned();
        for layer in (0..n).rev() {
            let a = &tape.inputs[layer];
            grads[2 * layer] = a.t().dot(&delta);
            grads[2 * layer + 1] = delta.sum_axis(Axis(0)).insert_axis(Axis(0));
            let w = &self.params.entry(ParamAddr::weight(layer)).value;
            let mut upstream = delta.dot(&w.t());
            if layer > 0 {
                Zip::from(&mut upstream).and(a).for_each(|g, &act| {
                    if act <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            delta = upstream;
        }
        Ok((Gradients::from_vec(grads), delta))
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn set(mlp: &mut Mlp, addr: ParamAddr, value: Array2<f64>) {
        mlp.params_mut().get_mut(addr).unwrap().value = value;
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mlp = Mlp::zeros(&MlpSpec::new(3, &[5, 4], 2)).unwrap();
        let x = array![[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]];
        let y = mlp.predict(x.view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_layer() {
        let mut mlp = Mlp::zeros(&MlpSpec::new(2, &[], 2)).unwrap();
        set(&mut mlp, ParamAddr::weight(0), Array2::eye(2));
        let y = mlp.predict(array![[1.0, 2.0]].view()).unwrap();
        assert_eq!(y, array![[1.0, 2.0]]);
    }

    #[test]
    fn hand_evaluated_two_layer_forward() {
        // 1 -> 2 -> 1: h = relu([2, -1] * x + [0.5, 0.25]), y = [3, 4] . h + 1
        // x = 1: h = relu([2.5, -0.75]) = [2.5, 0], y = 7.5 + 0 + 1 = 8.5
        let mut mlp = Mlp::zeros(&MlpSpec::new(1, &[2], 1)).unwrap();
        set(&mut mlp, ParamAddr::weight(0), array![[2.0, -1.0]]);
        set(&mut mlp, ParamAddr::bias(0), array![[0.5, 0.25]]);
        set(&mut mlp, ParamAddr::weight(1), array![[3.0], [4.0]]);
        set(&mut mlp, ParamAddr::bias(1), array![[1.0]]);
        let y = mlp.predict(array![[1.0]].view()).unwrap();
        assert_eq!(y, array![[8.5]]);
        let (y2, _) = mlp.forward(array![[1.0]].view()).unwrap();
        assert_eq!(y, y2);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let mlp = Mlp::zeros(&MlpSpec::new(3, &[4], 1)).unwrap();
        let err = mlp.predict(array![[1.0, 2.0]].view()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn linear_gradient() {
        // y = w x with w = 3, x = 2, loss = y  =>  dloss/dw = 2
        let mut mlp = Mlp::zeros(&MlpSpec::new(1, &[], 1)).unwrap();
        set(&mut mlp, ParamAddr::weight(0), array![[3.0]]);
        let (y, tape) = mlp.forward(array![[2.0]].view()).unwrap();
        assert_eq!(y[[0, 0]], 6.0);
        let (g, gx) = mlp.backward(&tape, array![[1.0]].view()).unwrap();
        assert_eq!(g.get(ParamAddr::weight(0)).unwrap()[[0, 0]], 2.0);
        assert_eq!(g.get(ParamAddr::bias(0)).unwrap()[[0, 0]], 1.0);
        assert_eq!(gx[[0, 0]], 3.0);
    }

    #[test]
    fn zero_loss_gradient_gives_zero_tree() {
        let mlp = Mlp::init(&MlpSpec::new(3, &[8, 8], 2), 1).unwrap();
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]];
        let (_, tape) = mlp.forward(x.view()).unwrap();
        let (g, gx) = mlp.backward(&tape, Array2::zeros((2, 2)).view()).unwrap();
        assert!(g.is_all_zero());
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_without_forward_is_usage_error() {
        let mlp = Mlp::init(&MlpSpec::new(2, &[3], 1), 1).unwrap();
        let err = mlp
            .backward(&Tape::default(), Array2::zeros((1, 1)).view())
            .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let spec = MlpSpec::new(4, &[16, 16], 3);
        assert_eq!(Mlp::init(&spec, 11).unwrap(), Mlp::init(&spec, 11).unwrap());
        assert_ne!(Mlp::init(&spec, 11).unwrap(), Mlp::init(&spec, 12).unwrap());
    }

    #[test]
    fn init_biases_are_zero() {
        let mlp = Mlp::init(&MlpSpec::new(4, &[16, 16], 3), 3).unwrap();
        for layer in 0..mlp.num_layers() {
            let b = &mlp.params().get(ParamAddr::bias(layer)).unwrap().value;
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_weight_std_matches_fan_in_scale() {
        // 400 x 250 = 10^5 draws.
        let mlp = Mlp::init(&MlpSpec::new(400, &[], 250), 5).unwrap();
        let w = &mlp.params().get(ParamAddr::weight(0)).unwrap().value;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let std = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = 1.0 / 400f64.sqrt();
        assert!((std / target - 1.0).abs() < 0.1, "std {std} vs {target}");
        let bound = 2.0 * target / TRUNC_NORMAL_STD;
        assert!(w.iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn zero_width_rejected() {
        assert!(Mlp::init(&MlpSpec::new(3, &[0], 1), 0).is_err());
    }
}
