//! Additive attention: `score_t = v . tanh(W_k k_t + W_q q + b)`,
//! weights are the softmax of the scores and the context is the weighted sum
//! of the keys.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::ops::{add_outer, softmax, softmax_backward};
use super::{Gradients, Init, ParamId, ParameterSet, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdditiveAttention {
    /// `a x q`
    pub w_query: ParamId,
    /// `a x k`
    pub w_key: ParamId,
    /// `1 x a`
    pub bias: ParamId,
    /// `1 x a`
    pub score: ParamId,
    pub query_dim: usize,
    pub key_dim: usize,
    pub attn_dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttendCache {
    query: Array1<Real>,
    /// `tanh` activations, `n x a`.
    act: Array2<Real>,
    pub weights: Array1<Real>,
}

impl AdditiveAttention {
    pub fn new(
        params: &mut ParameterSet,
        name: &str,
        query_dim: usize,
        key_dim: usize,
        attn_dim: usize,
    ) -> Result<Self> {
        let scale = |d: usize| Init::Uniform(1.0 / (d.max(1) as f64).sqrt());
        Ok(Self {
            w_query: params.add(
                &format!("{name}.w_query"),
                attn_dim,
                query_dim,
                scale(query_dim),
            )?,
            w_key: params.add(&format!("{name}.w_key"), attn_dim, key_dim, scale(key_dim))?,
            bias: params.add(&format!("{name}.bias"), 1, attn_dim, scale(attn_dim))?,
            score: params.add(&format!("{name}.score"), 1, attn_dim, scale(attn_dim))?,
            query_dim,
            key_dim,
            attn_dim,
        })
    }

    /// `K W_k^T`, computed once per key set and shared across queries.
    pub fn project_keys(&self, params: &ParameterSet, keys: ArrayView2<Real>) -> Array2<Real> {
        keys.dot(&params.get(self.w_key).t())
    }

    /// Returns the context vector; the weights live in the cache.
    pub fn attend(
        &self,
        params: &ParameterSet,
        query: ArrayView1<Real>,
        keys: ArrayView2<Real>,
        projected: ArrayView2<Real>,
    ) -> Result<(Array1<Real>, AttendCache)> {
        if keys.nrows() == 0 {
            return Err(Error::Shape("attention over an empty key set".into()));
        }
        let mut q = params.get(self.w_query).dot(&query);
        q += &params.get(self.bias).row(0);
        let mut act = projected.to_owned();
        act += &q;
        act.mapv_inplace(Real::tanh);
        let scores = act.dot(&params.get(self.score).row(0));
        let weights = softmax(scores.view());
        let context = keys.t().dot(&weights);
        Ok((
            context,
            AttendCache {
                query: query.to_owned(),
                act,
                weights,
            },
        ))
    }

    /// Backward of one `attend` call. `dweights` is any gradient reaching the
    /// weights directly, in addition to the path through the context.
    ///
    /// Returns `(dquery, dkeys, dprojected)`. `dkeys` covers only the context
    /// path; feed the accumulated `dprojected` to [`Self::project_keys_backward`].
    pub fn attend_backward(
        &self,
        params: &ParameterSet,
        grads: &mut Gradients,
        keys: ArrayView2<Real>,
        cache: &AttendCache,
        dcontext: ArrayView1<Real>,
        dweights: Option<ArrayView1<Real>>,
    ) -> (Array1<Real>, Array2<Real>, Array2<Real>) {
        let mut dw = keys.dot(&dcontext);
        if let Some(extra) = dweights {
            dw += &extra;
        }
        let dscores = softmax_backward(cache.weights.view(), dw.view());
        grads[self.score]
            .row_mut(0)
            .scaled_add(1.0, &cache.act.t().dot(&dscores));

        let v = params.get(self.score).row(0).to_owned();
        let mut dpre = Array2::zeros(cache.act.raw_dim());
        add_outer(&mut dpre, 1.0, dscores.view(), v.view());
        dpre *= &cache.act.mapv(|a| 1.0 - a * a);

        let dq = dpre.sum_axis(Axis(0));
        grads[self.bias].row_mut(0).scaled_add(1.0, &dq);
        add_outer(&mut grads[self.w_query], 1.0, dq.view(), cache.query.view());
        let dquery = params.get(self.w_query).t().dot(&dq);

        let mut dkeys = Array2::zeros(keys.raw_dim());
        add_outer(&mut dkeys, 1.0, cache.weights.view(), dcontext);
        (dquery, dkeys, dpre)
    }

    /// Backward of [`Self::project_keys`]; returns the key gradient.
    pub fn project_keys_backward(
        &self,
        params: &ParameterSet,
        grads: &mut Gradients,
        keys: ArrayView2<Real>,
        dprojected: ArrayView2<Real>,
    ) -> Array2<Real> {
        grads[self.w_key] += &dprojected.t().dot(&keys);
        dprojected.dot(params.get(self.w_key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setup(q: usize, k: usize) -> (ParameterSet, AdditiveAttention) {
        let mut p = ParameterSet::new(2);
        let att = AdditiveAttention::new(&mut p, "att", q, k, 5).unwrap();
        (p, att)
    }

    #[test]
    fn singleton_key() {
        let (p, att) = setup(3, 4);
        let keys = Array2::from_shape_vec((1, 4), vec![0.1, -0.2, 0.3, 0.4]).unwrap();
        let proj = att.project_keys(&p, keys.view());
        let (ctx, cache) = att
            .attend(
                &p,
                Array1::from(vec![1.0, 2.0, 3.0]).view(),
                keys.view(),
                proj.view(),
            )
            .unwrap();
        assert_eq!(cache.weights.to_vec(), vec![1.0]);
        assert_eq!(ctx, keys.row(0));
    }

    #[test]
    fn identical_keys_get_uniform_weights() {
        let (p, att) = setup(3, 4);
        let keys = Array2::from_shape_fn((6, 4), |(_, j)| j as Real * 0.3 - 0.5);
        let proj = att.project_keys(&p, keys.view());
        let (_, cache) = att
            .attend(
                &p,
                Array1::from(vec![0.5, -1.0, 0.2]).view(),
                keys.view(),
                proj.view(),
            )
            .unwrap();
        for w in cache.weights.iter() {
            assert!((w - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_keys_rejected() {
        let (p, att) = setup(2, 2);
        let keys = Array2::<Real>::zeros((0, 2));
        assert!(att
            .attend(&p, Array1::zeros(2).view(), keys.view(), keys.view())
            .is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(seed in any::<u64>(), n in 1usize..20) {
            let (p, att) = setup(3, 4);
            let keys = Array2::from_shape_fn((n, 4), |(i, j)| ((seed % 1000) as Real * 0.01 + (i * 7 + j) as Real).sin() * 3.0);
            let proj = att.project_keys(&p, keys.view());
            let q = Array1::from_shape_fn(3, |i| ((seed >> 3) % 97) as Real * 0.1 - i as Real);
            let (_, cache) = att.attend(&p, q.view(), keys.view(), proj.view()).unwrap();
            prop_assert!((cache.weights.sum() - 1.0).abs() <= crate::neural::TEST_TOL);
        }
    }
}
