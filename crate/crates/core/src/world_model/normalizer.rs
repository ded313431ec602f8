use ndarray::{Array1, Array2, ArrayView2, Axis};

const STD_FLOOR: f64 = 1e-8;

/// Per-dimension input standardization fitted on the environment dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub count: u64,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl Normalizer {
    /// Identity transform until the first fit.
    pub fn identity(dim: usize) -> Self {
        Self {
            count: 0,
            mean: Array1::zeros(dim),
            var: Array1::ones(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Replaces the statistics with the mean and population variance of `x`.
    pub fn fit(&mut self, x: ArrayView2<f64>) {
        let n = x.nrows();
        if n == 0 {
            return;
        }
        self.count = n as u64;
        self.mean = x.mean_axis(Axis(0)).expect("non-empty");
        self.var = x.var_axis(Axis(0), 0.0);
    }

    pub fn std(&self) -> Array1<f64> {
        self.var.mapv(|v| v.sqrt().max(STD_FLOOR))
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let std = self.std();
        (&x - &self.mean) / &std
    }
}
