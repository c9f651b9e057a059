//! LSTM cell (gate order i, f, g, o) and a bidirectional sequence encoder.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::ops::{add_outer, sigmoid};
use super::{Gradients, Init, ParamId, ParameterSet, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    /// `4h x in`
    pub w_ih: ParamId,
    /// `4h x h`
    pub w_hh: ParamId,
    /// `1 x 4h`
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

/// Everything a single step needs for its backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Array1<Real>,
    pub h_prev: Array1<Real>,
    pub c_prev: Array1<Real>,
    /// Activated gates `[i, f, g, o]`.
    pub gates: Array1<Real>,
    pub c: Array1<Real>,
    pub tanh_c: Array1<Real>,
    pub h: Array1<Real>,
}

/// Cache of a full run over a sequence, rows indexed by sequence position.
#[derive(Debug, Clone)]
pub struct SeqCache {
    pub xs: Array2<Real>,
    pub reverse: bool,
    pub gates: Array2<Real>,
    pub cs: Array2<Real>,
    pub tanh_cs: Array2<Real>,
    pub hs: Array2<Real>,
}

impl SeqCache {
    fn prev(&self, t: usize) -> Option<usize> {
        if self.reverse {
            (t + 1 < self.hs.nrows()).then_some(t + 1)
        } else {
            t.checked_sub(1)
        }
    }
}

/// Applies the gate nonlinearities to `z` in place and writes the new cell
/// state, its tanh and the hidden state.
fn activate(z: &mut [Real], c_prev: &[Real], c: &mut [Real], tanh_c: &mut [Real], h: &mut [Real]) {
    let n = c.len();
    for k in 0..n {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[n + k]);
        let g = z[2 * n + k].tanh();
        let o = sigmoid(z[3 * n + k]);
        z[k] = i;
        z[n + k] = f;
        z[2 * n + k] = g;
        z[3 * n + k] = o;
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
}

/// Gradient of the gate pre-activations and of the previous cell state.
fn gate_backward(
    gates: &[Real],
    c_prev: &[Real],
    tanh_c: &[Real],
    dh: &[Real],
    dc_in: &[Real],
    dz: &mut [Real],
    dc_prev: &mut [Real],
) {
    let n = tanh_c.len();
    for k in 0..n {
        let (i, f, g, o) = (gates[k], gates[n + k], gates[2 * n + k], gates[3 * n + k]);
        let d_o = dh[k] * tanh_c[k];
        let dc = dc_in[k] + dh[k] * o * (1.0 - tanh_c[k] * tanh_c[k]);
        dz[k] = dc * g * i * (1.0 - i);
        dz[n + k] = dc * c_prev[k] * f * (1.0 - f);
        dz[2 * n + k] = dc * i * (1.0 - g * g);
        dz[3 * n + k] = d_o * o * (1.0 - o);
        dc_prev[k] = dc * f;
    }
}

impl LstmCell {
    /// All weights uniform in `[-1/sqrt(h), 1/sqrt(h)]`.
    pub fn new(
        params: &mut ParameterSet,
        name: &str,
        input_dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        let init = Init::Uniform(1.0 / (hidden.max(1) as f64).sqrt());
        Ok(Self {
            w_ih: params.add(&format!("{name}.w_ih"), 4 * hidden, input_dim, init)?,
            w_hh: params.add(&format!("{name}.w_hh"), 4 * hidden, hidden, init)?,
            bias: params.add(&format!("{name}.bias"), 1, 4 * hidden, init)?,
            input_dim,
            hidden,
        })
    }

    pub fn step(
        &self,
        params: &ParameterSet,
        x: ArrayView1<Real>,
        h_prev: ArrayView1<Real>,
        c_prev: ArrayView1<Real>,
    ) -> StepCache {
        let n = self.hidden;
        let mut z = params.get(self.w_ih).dot(&x) + params.get(self.w_hh).dot(&h_prev);
        z += &params.get(self.bias).row(0);
        let (mut c, mut tanh_c, mut h) = (Array1::zeros(n), Array1::zeros(n), Array1::zeros(n));
        let c_prev = c_prev.to_owned();
        activate(
            z.as_slice_mut().unwrap(),
            c_prev.as_slice().unwrap(),
            c.as_slice_mut().unwrap(),
            tanh_c.as_slice_mut().unwrap(),
            h.as_slice_mut().unwrap(),
        );
        StepCache {
            x: x.to_owned(),
            h_prev: h_prev.to_owned(),
            c_prev,
            gates: z,
            c,
            tanh_c,
            h,
        }
    }

    /// Returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        params: &ParameterSet,
        grads: &mut Gradients,
        cache: &StepCache,
        dh: ArrayView1<Real>,
        dc: ArrayView1<Real>,
    ) -> (Array1<Real>, Array1<Real>, Array1<Real>) {
        let n = self.hidden;
        let mut dz = Array1::zeros(4 * n);
        let mut dc_prev = Array1::zeros(n);
        let (dh, dc) = (dh.to_owned(), dc.to_owned());
        gate_backward(
            cache.gates.as_slice().unwrap(),
            cache.c_prev.as_slice().unwrap(),
            cache.tanh_c.as_slice().unwrap(),
            dh.as_slice().unwrap(),
            dc.as_slice().unwrap(),
            dz.as_slice_mut().unwrap(),
            dc_prev.as_slice_mut().unwrap(),
        );
        add_outer(&mut grads[self.w_ih], 1.0, dz.view(), cache.x.view());
        add_outer(&mut grads[self.w_hh], 1.0, dz.view(), cache.h_prev.view());
        grads[self.bias].row_mut(0).scaled_add(1.0, &dz);
        let dx = params.get(self.w_ih).t().dot(&dz);
        let dh_prev = params.get(self.w_hh).t().dot(&dz);
        (dx, dh_prev, dc_prev)
    }

    /// Runs over `xs` (rows are time steps) from a zero state, right to left
    /// when `reverse` is set. Hidden state rows stay aligned with input rows.
    pub fn run(
        &self,
        params: &ParameterSet,
        xs: ArrayView2<Real>,
        reverse: bool,
    ) -> Result<SeqCache> {
        let (len, dim) = xs.dim();
        if len == 0 {
            return Err(Error::Shape(
                "recurrent encoder on an empty sequence".into(),
            ));
        }
        if dim != self.input_dim {
            return Err(Error::Shape(format!(
                "input dim {dim}, cell expects {}",
                self.input_dim
            )));
        }
        let n = self.hidden;
        let mut gates = xs.dot(&params.get(self.w_ih).t());
        gates += &params.get(self.bias).row(0);
        let mut cs = Array2::zeros((len, n));
        let mut tanh_cs = Array2::zeros((len, n));
        let mut hs = Array2::zeros((len, n));
        let w_hh = params.get(self.w_hh);
        let zero = Array1::<Real>::zeros(n);
        let order: Vec<usize> = if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        let mut prev: Option<usize> = None;
        for &t in &order {
            let (h_prev, c_prev) = match prev {
                Some(p) => (hs.row(p).to_owned(), cs.row(p).to_owned()),
                None => (zero.clone(), zero.clone()),
            };
            let rec = w_hh.dot(&h_prev);
            let mut z = gates.row_mut(t);
            z += &rec;
            let (mut c, mut tc, mut h) = (Array1::zeros(n), Array1::zeros(n), Array1::zeros(n));
            activate(
                z.as_slice_mut().unwrap(),
                c_prev.as_slice().unwrap(),
                c.as_slice_mut().unwrap(),
                tc.as_slice_mut().unwrap(),
                h.as_slice_mut().unwrap(),
            );
            cs.row_mut(t).assign(&c);
            tanh_cs.row_mut(t).assign(&tc);
            hs.row_mut(t).assign(&h);
            prev = Some(t);
        }
        Ok(SeqCache {
            xs: xs.to_owned(),
            reverse,
            gates,
            cs,
            tanh_cs,
            hs,
        })
    }

    /// Backpropagates `dhs` (gradient w.r.t. every hidden state row) through
    /// the run and returns the gradient w.r.t. the inputs.
    pub fn run_backward(
        &self,
        params: &ParameterSet,
        grads: &mut Gradients,
        cache: &SeqCache,
        dhs: ArrayView2<Real>,
    ) -> Array2<Real> {
        let len = cache.hs.nrows();
        let n = self.hidden;
        let w_hh = params.get(self.w_hh);
        let zero = Array1::<Real>::zeros(n);
        let mut dz = Array2::zeros((len, 4 * n));
        let mut h_prevs = Array2::zeros((len, n));
        let mut dh_next = Array1::<Real>::zeros(n);
        let mut dc_next = Array1::<Real>::zeros(n);
        let mut dc_prev = Array1::<Real>::zeros(n);
        let order: Vec<usize> = if cache.reverse {
            (0..len).collect()
        } else {
            (0..len).rev().collect()
        };
        for &t in &order {
            let prev = cache.prev(t);
            let c_prev = prev.map_or(zero.view(), |p| cache.cs.row(p));
            if let Some(p) = prev {
                h_prevs.row_mut(t).assign(&cache.hs.row(p));
            }
            let dh = &dhs.row(t) + &dh_next;
            let mut dzt = dz.row_mut(t);
            gate_backward(
                cache.gates.row(t).as_slice().unwrap(),
                c_prev.as_slice().unwrap(),
                cache.tanh_cs.row(t).as_slice().unwrap(),
                dh.as_slice().unwrap(),
                dc_next.as_slice().unwrap(),
                dzt.as_slice_mut().unwrap(),
                dc_prev.as_slice_mut().unwrap(),
            );
            dh_next = w_hh.t().dot(&dz.row(t));
            std::mem::swap(&mut dc_next, &mut dc_prev);
        }
        grads[self.w_ih] += &dz.t().dot(&cache.xs);
        grads[self.w_hh] += &dz.t().dot(&h_prevs);
        grads[self.bias]
            .row_mut(0)
            .scaled_add(1.0, &dz.sum_axis(Axis(0)));
        dz.dot(params.get(self.w_ih))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

#[derive(Debug, Clone)]
pub struct BiLstmOutput {
    /// `len x 2h`, forward half first.
    pub hiddens: Array2<Real>,
    /// Forward state after the last step joined with backward state after
    /// the first step, `2h`.
    pub final_state: Array1<Real>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: SeqCache,
    bwd: SeqCache,
}

impl BiLstm {
    pub fn new(
        params: &mut ParameterSet,
        name: &str,
        input_dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        Ok(Self {
            fwd: LstmCell::new(params, &format!("{name}.fwd"), input_dim, hidden)?,
            bwd: LstmCell::new(params, &format!("{name}.bwd"), input_dim, hidden)?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn encode(
        &self,
        params: &ParameterSet,
        xs: ArrayView2<Real>,
    ) -> Result<(BiLstmOutput, BiLstmCache)> {
        let fwd = self.fwd.run(params, xs, false)?;
        let bwd = self.bwd.run(params, xs, true)?;
        let (len, n) = (xs.nrows(), self.hidden());
        let mut hiddens = Array2::zeros((len, 2 * n));
        hiddens.slice_mut(s![.., ..n]).assign(&fwd.hs);
        hiddens.slice_mut(s![.., n..]).assign(&bwd.hs);
        let mut final_state = Array1::zeros(2 * n);
        final_state.slice_mut(s![..n]).assign(&fwd.hs.row(len - 1));
        final_state.slice_mut(s![n..]).assign(&bwd.hs.row(0));
        Ok((
            BiLstmOutput {
                hiddens,
                final_state,
            },
            BiLstmCache { fwd, bwd },
        ))
    }

    pub fn backward(
        &self,
        params: &ParameterSet,
        grads: &mut Gradients,
        cache: &BiLstmCache,
        dhiddens: ArrayView2<Real>,
        dfinal: ArrayView1<Real>,
    ) -> Array2<Real> {
        let n = self.hidden();
        let len = dhiddens.nrows();
        let mut dfwd = dhiddens.slice(s![.., ..n]).to_owned();
        let mut dbwd = dhiddens.slice(s![.., n..]).to_owned();
        dfwd.row_mut(len - 1)
            .scaled_add(1.0, &dfinal.slice(s![..n]));
        dbwd.row_mut(0).scaled_add(1.0, &dfinal.slice(s![n..]));
        let mut dx = self
            .fwd
            .run_backward(params, grads, &cache.fwd, dfwd.view());
        dx += &self
            .bwd
            .run_backward(params, grads, &cache.bwd, dbwd.view());
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sequence_is_an_error() {
        let mut p = ParameterSet::new(0);
        let enc = BiLstm::new(&mut p, "enc", 3, 4).unwrap();
        assert!(enc.encode(&p, Array2::zeros((0, 3)).view()).is_err());
    }

    #[test]
    fn zero_inputs_and_biases_give_zero_states() {
        // z = 0 at every step: i = f = o = 1/2, g = 0, so c = 0 and h = 0.
        let mut p = ParameterSet::new(3);
        let enc = BiLstm::new(&mut p, "enc", 3, 4).unwrap();
        p.get_mut(enc.fwd.bias).fill(0.0);
        p.get_mut(enc.bwd.bias).fill(0.0);
        let (out, cache) = enc.encode(&p, Array2::zeros((5, 3)).view()).unwrap();
        assert!(out.hiddens.iter().all(|v| *v == 0.0));
        assert!(out.final_state.iter().all(|v| *v == 0.0));
        assert!(cache.fwd.gates.slice(s![.., ..4]).iter().all(|v| *v == 0.5));
        assert!(cache
            .fwd
            .gates
            .slice(s![.., 8..12])
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn tied_directions_agree_on_length_one() {
        let mut p = ParameterSet::new(9);
        let enc = BiLstm::new(&mut p, "enc", 3, 4).unwrap();
        for (a, b) in [
            (enc.fwd.w_ih, enc.bwd.w_ih),
            (enc.fwd.w_hh, enc.bwd.w_hh),
            (enc.fwd.bias, enc.bwd.bias),
        ] {
            let v = p.get(a).clone();
            *p.get_mut(b) = v;
        }
        let x = Array2::from_shape_vec((1, 3), vec![0.3, -0.7, 1.1]).unwrap();
        let (out, _) = enc.encode(&p, x.view()).unwrap();
        assert_eq!(out.hiddens.dim(), (1, 8));
        assert_eq!(out.hiddens.slice(s![0, ..4]), out.hiddens.slice(s![0, 4..]));
    }

    #[test]
    fn step_matches_run() {
        let mut p = ParameterSet::new(4);
        let cell = LstmCell::new(&mut p, "c", 3, 5).unwrap();
        let xs = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as Real * 0.37).sin());
        let run = cell.run(&p, xs.view(), false).unwrap();
        let (mut h, mut c) = (Array1::zeros(5), Array1::zeros(5));
        for t in 0..4 {
            let st = cell.step(&p, xs.row(t), h.view(), c.view());
            h = st.h;
            c = st.c;
            for k in 0..5 {
                assert!((h[k] - run.hs[[t, k]]).abs() < crate::neural::TEST_TOL);
            }
        }
    }
}
