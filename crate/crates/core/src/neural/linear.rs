use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::ops::add_outer;
use super::{Gradients, Init, ParamId, ParameterSet, Real};
use crate::error::Result;

/// `y = W x + b` with `W: out x in` and `b: 1 x out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Weights and bias uniform in `[-1/sqrt(in), 1/sqrt(in)]`.
    pub fn new(
        params: &mut ParameterSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<Self> {
        let a = 1.0 / (in_dim.max(1) as f64).sqrt();
        Ok(Self {
            weight: params.add(&format!("{name}.weight"), out_dim, in_dim, Init::Uniform(a))?,
            bias: params.add(&format!("{name}.bias"), 1, out_dim, Init::Uniform(a))?,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, params: &ParameterSet, x: ArrayView2<Real>) -> Array2<Real> {
        let mut y = x.dot(&params.get(self.weight).t());
        y += &params.get(self.bias).row(0);
        y
    }

    pub fn forward_vec(&self, params: &ParameterSet, x: ArrayView1<Real>) -> Array1<Real> {
        params.get(self.weight).dot(&x) + params.get(self.bias).row(0)
    }

    /// Accumulates `dW`, `db` and returns `dx`.
    pub fn backward(
        &self,
        params: &ParameterSet,
        grads: &mut Gradients,
        x: ArrayView2<Real>,
        dy: ArrayView2<Real>,
    ) -> Array2<Real> {
        grads[self.weight] += &dy.t().dot(&x);
        grads[self.bias]
            .row_mut(0)
            .scaled_add(1.0, &dy.sum_axis(Axis(0)));
        dy.dot(params.get(self.weight))
    }

    pub fn backward_vec(
        &self,
        params: &ParameterSet,
        grads: &mut Gradients,
        x: ArrayView1<Real>,
        dy: ArrayView1<Real>,
    ) -> Array1<Real> {
        add_outer(&mut grads[self.weight], 1.0, dy, x);
        grads[self.bias].row_mut(0).scaled_add(1.0, &dy);
        params.get(self.weight).t().dot(&dy)
    }
}
