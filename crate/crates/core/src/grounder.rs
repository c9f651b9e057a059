//! Interval prediction.
//!
//! [`Grounder`] is the boundary the trainer talks to; any model that maps
//! (video features, query) to a normalized interval and can backpropagate the
//! grounding loss fits behind it. [`ReferenceGrounder`] is a compact recurrent
//! model: bidirectional encoders for query and frames, additive attention from
//! the sentence state over frame states, and a sigmoid-bounded head that
//! regresses (center, width).

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::corpus::Interval;
use crate::error::{Error, Result};
use crate::neural::ops::{concat, sigmoid, smooth_l1, smooth_l1_grad};
use crate::neural::{
    AdditiveAttention, AttendCache, BiLstm, BiLstmCache, Embedding, Gradients, Linear, ParamId,
    ParameterSet, Real,
};

/// A predicted interval.
#[derive(Debug, Clone, PartialEq)]
pub struct GrounderOutput {
    /// Normalized center in [0, 1].
    pub center: f64,
    /// Normalized width, floored at one frame.
    pub width: f64,
    /// `(center - width/2, center + width/2)` clamped to [0, 1].
    pub interval_norm: (f64, f64),
    pub interval_sec: Interval,
    /// Per-frame attention weights, for diagnostics and the calibration term.
    pub attention: Vec<f64>,
}

impl GrounderOutput {
    pub fn new(center: f64, width: f64, duration: f64, attention: Vec<f64>) -> Self {
        let start = (center - width / 2.0).clamp(0.0, 1.0);
        let end = (center + width / 2.0).clamp(0.0, 1.0);
        Self {
            center,
            width,
            interval_norm: (start, end),
            interval_sec: Interval::new(start * duration, end * duration),
            attention,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingLossConfig {
    /// Smooth-L1 threshold on normalized endpoints.
    pub beta: f64,
    /// Weight of the attention-calibration term.
    pub attention_weight: f64,
}

impl Default for GroundingLossConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            attention_weight: 0.5,
        }
    }
}

/// Loss value and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingLossGrad {
    pub loss: f64,
    pub regression: f64,
    pub calibration: f64,
    pub d_center: f64,
    pub d_width: f64,
    pub d_attention: Vec<f64>,
}

/// Frames whose centers fall inside the normalized gold span; if none does,
/// the frame containing the span's midpoint.
pub fn gold_frame_mask(frames: usize, gold_start: f64, gold_end: f64) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..frames)
        .map(|t| {
            let c = (t as f64 + 0.5) / frames as f64;
            gold_start <= c && c <= gold_end
        })
        .collect();
    if frames > 0 && !mask.iter().any(|m| *m) {
        let mid = ((gold_start + gold_end) / 2.0 * frames as f64).floor() as usize;
        mask[mid.min(frames - 1)] = true;
    }
    mask
}

/// Smooth-L1 on the two normalized endpoints (mean over endpoints) plus
/// `attention_weight * -ln(attention mass inside gold)`.
pub fn grounding_loss_grad(
    pred: &GrounderOutput,
    gold: Interval,
    duration: f64,
    config: &GroundingLossConfig,
) -> Result<GroundingLossGrad> {
    if !(duration > 0.0) {
        return Err(Error::Validation(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let (gs, ge) = (gold.start / duration, gold.end / duration);
    let beta = config.beta as Real;
    let ds = (pred.center - pred.width / 2.0 - gs) as Real;
    let de = (pred.center + pred.width / 2.0 - ge) as Real;
    let regression = 0.5 * (smooth_l1(ds, beta) + smooth_l1(de, beta)) as f64;
    let gs_ = 0.5 * smooth_l1_grad(ds, beta) as f64;
    let ge_ = 0.5 * smooth_l1_grad(de, beta) as f64;

    let mask = gold_frame_mask(pred.attention.len(), gs, ge);
    let mass: f64 = pred
        .attention
        .iter()
        .zip(&mask)
        .filter(|(_, m)| **m)
        .map(|(a, _)| *a)
        .sum::<f64>()
        .max(1e-12);
    let calibration = -mass.ln().min(0.0);
    let d_attention = mask
        .iter()
        .map(|m| {
            if *m {
                -config.attention_weight / mass
            } else {
                0.0
            }
        })
        .collect();
    Ok(GroundingLossGrad {
        loss: regression + config.attention_weight * calibration,
        regression,
        calibration,
        d_center: gs_ + ge_,
        d_width: 0.5 * (ge_ - gs_),
        d_attention,
    })
}

pub fn grounding_loss(
    pred: &GrounderOutput,
    gold: Interval,
    duration: f64,
    config: &GroundingLossConfig,
) -> Result<f64> {
    grounding_loss_grad(pred, gold, duration, config).map(|g| g.loss)
}

/// What the trainer needs from an interval predictor.
pub trait Grounder {
    type Cache;

    /// Parameters this grounder reads, including any shared ones.
    fn parameter_ids(&self) -> Vec<ParamId>;

    fn loss_config(&self) -> GroundingLossConfig {
        GroundingLossConfig::default()
    }

    /// `video` is `T x D`; `query` holds input-vocabulary indices.
    fn forward(
        &self,
        params: &ParameterSet,
        video: ArrayView2<Real>,
        query: &[usize],
        duration: f64,
    ) -> Result<(GrounderOutput, Self::Cache)>;

    fn loss(&self, out: &GrounderOutput, gold: Interval, duration: f64) -> Result<f64> {
        grounding_loss(out, gold, duration, &self.loss_config())
    }

    /// Accumulates `scale * d(loss)/d(params)` and returns the unscaled loss.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        params: &ParameterSet,
        grads: &mut Gradients,
        cache: &Self::Cache,
        out: &GrounderOutput,
        gold: Interval,
        duration: f64,
        scale: Real,
    ) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGrounderConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub attn_dim: usize,
    pub head_hidden: usize,
    #[serde(default)]
    pub loss: GroundingLossConfig,
}

#[derive(Debug, Clone)]
pub struct ReferenceGrounder {
    pub word_embedding: Embedding,
    pub text_encoder: BiLstm,
    pub frame_projection: Linear,
    pub video_encoder: BiLstm,
    pub attention: AdditiveAttention,
    pub head_hidden: Linear,
    pub head_out: Linear,
    loss: GroundingLossConfig,
    own: Vec<ParamId>,
}

#[derive(Debug, Clone)]
pub struct ReferenceCache {
    query: Vec<usize>,
    text: BiLstmCache,
    text_len: usize,
    frames_in: Array2<Real>,
    frames_proj: Array2<Real>,
    video: BiLstmCache,
    video_states: Array2<Real>,
    attend: AttendCache,
    positions: Array1<Real>,
    mean_pos: Real,
    spread: Real,
    head_in: Array1<Real>,
    head_act: Array1<Real>,
    raw_width: Real,
    width_floored: bool,
}

impl ReferenceGrounder {
    /// Registers parameters under `name`; `word_embedding` may be shared.
    pub fn new(
        params: &mut ParameterSet,
        name: &str,
        word_embedding: Embedding,
        feature_dim: usize,
        config: &ReferenceGrounderConfig,
    ) -> Result<Self> {
        let before = params.len();
        let h = config.hidden;
        let text_encoder = BiLstm::new(
            params,
            &format!("{name}.text_encoder"),
            word_embedding.dim,
            h,
        )?;
        // Frame features carry one extra channel: the normalized frame position.
        let frame_projection = Linear::new(
            params,
            &format!("{name}.frame_projection"),
            feature_dim + 1,
            config.embed_dim,
        )?;
        let video_encoder = BiLstm::new(
            params,
            &format!("{name}.video_encoder"),
            config.embed_dim,
            h,
        )?;
        let attention = AdditiveAttention::new(
            params,
            &format!("{name}.attention"),
            2 * h,
            2 * h,
            config.attn_dim,
        )?;
        let head_hidden = Linear::new(
            params,
            &format!("{name}.head_hidden"),
            4 * h + 2,
            config.head_hidden,
        )?;
        let head_out = Linear::new(params, &format!("{name}.head_out"), config.head_hidden, 2)?;
        let own = params.ids().skip(before).collect();
        Ok(Self {
            word_embedding,
            text_encoder,
            frame_projection,
            video_encoder,
            attention,
            head_hidden,
            head_out,
            loss: config.loss,
            own,
        })
    }
}

impl Grounder for ReferenceGrounder {
    type Cache = ReferenceCache;

    fn parameter_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.word_embedding.table];
        ids.extend(&self.own);
        ids
    }

    fn loss_config(&self) -> GroundingLossConfig {
        self.loss
    }

    fn forward(
        &self,
        params: &ParameterSet,
        video: ArrayView2<Real>,
        query: &[usize],
        duration: f64,
    ) -> Result<(GrounderOutput, ReferenceCache)> {
        if query.is_empty() {
            return Err(Error::Shape("grounder needs a non-empty query".into()));
        }
        let (frames, dim) = video.dim();
        if frames == 0 {
            return Err(Error::Shape("grounder needs at least one frame".into()));
        }
        if dim + 1 != self.frame_projection.in_dim {
            return Err(Error::Shape(format!(
                "feature dim {dim}, grounder built for {}",
                self.frame_projection.in_dim - 1
            )));
        }
        let words = self.word_embedding.forward(params, query)?;
        let (text, text_cache) = self.text_encoder.encode(params, words.view())?;
        let sentence = text.final_state;

        let positions = Array1::from_shape_fn(frames, |t| (t as Real + 0.5) / frames as Real);
        let mut frames_in = Array2::zeros((frames, dim + 1));
        frames_in.slice_mut(s![.., ..dim]).assign(&video);
        frames_in.column_mut(dim).assign(&positions);
        let mut frames_proj = self.frame_projection.forward(params, frames_in.view());
        frames_proj.mapv_inplace(Real::tanh);
        let (encoded, video_cache) = self.video_encoder.encode(params, frames_proj.view())?;
        let states = encoded.hiddens;

        let projected = self.attention.project_keys(params, states.view());
        let (context, attend) =
            self.attention
                .attend(params, sentence.view(), states.view(), projected.view())?;
        let mean_pos = attend.weights.dot(&positions);
        let var = attend
            .weights
            .iter()
            .zip(positions.iter())
            .map(|(a, p)| a * (p - mean_pos) * (p - mean_pos))
            .sum::<Real>();
        let spread = (var + 1e-12).sqrt();

        let head_in = concat(&[
            context.view(),
            sentence.view(),
            ArrayView1::from(&[mean_pos]),
            ArrayView1::from(&[spread]),
        ]);
        let head_act = self
            .head_hidden
            .forward_vec(params, head_in.view())
            .mapv(Real::tanh);
        let logits = self.head_out.forward_vec(params, head_act.view());
        let center = sigmoid(logits[0]);
        let raw_width = sigmoid(logits[1]);
        let min_width = 1.0 / frames as Real;
        let width_floored = raw_width < min_width;
        let width = raw_width.max(min_width);

        let out = GrounderOutput::new(
            center as f64,
            width as f64,
            duration,
            attend.weights.iter().map(|w| *w as f64).collect(),
        );
        Ok((
            out,
            ReferenceCache {
                query: query.to_vec(),
                text: text_cache,
                text_len: query.len(),
                frames_in,
                frames_proj,
                video: video_cache,
                video_states: states,
                attend,
                positions,
                mean_pos,
                spread,
                head_in,
                head_act,
                raw_width,
                width_floored,
            },
        ))
    }

    fn backward(
        &self,
        params: &ParameterSet,
        grads: &mut Gradients,
        cache: &ReferenceCache,
        out: &GrounderOutput,
        gold: Interval,
        duration: f64,
        scale: Real,
    ) -> Result<f64> {
        let lg = grounding_loss_grad(out, gold, duration, &self.loss)?;
        let h = self.text_encoder.hidden();

        let center = out.center as Real;
        let d_center = lg.d_center as Real * scale;
        let d_width = if cache.width_floored {
            0.0
        } else {
            lg.d_width as Real * scale
        };
        let dlogits = Array1::from(vec![
            d_center * center * (1.0 - center),
            d_width * cache.raw_width * (1.0 - cache.raw_width),
        ]);
        let dact = self
            .head_out
            .backward_vec(params, grads, cache.head_act.view(), dlogits.view());
        let dpre = dact * cache.head_act.mapv(|a| 1.0 - a * a);
        let dhead_in =
            self.head_hidden
                .backward_vec(params, grads, cache.head_in.view(), dpre.view());

        let dcontext = dhead_in.slice(s![..2 * h]);
        let mut dsentence = dhead_in.slice(s![2 * h..4 * h]).to_owned();
        let d_mean = dhead_in[4 * h];
        let d_var = dhead_in[4 * h + 1] / (2.0 * cache.spread);
        let dweights = Array1::from_shape_fn(cache.positions.len(), |t| {
            let p = cache.positions[t];
            lg.d_attention[t] as Real * scale
                + d_mean * p
                + d_var * (p - cache.mean_pos) * (p - cache.mean_pos)
        });

        let states = cache.video_states.view();
        let (dquery, mut dstates, dprojected) = self.attention.attend_backward(
            params,
            grads,
            states,
            &cache.attend,
            dcontext,
            Some(dweights.view()),
        );
        dstates += &self
            .attention
            .project_keys_backward(params, grads, states, dprojected.view());
        dsentence += &dquery;

        let dproj = self.video_encoder.backward(
            params,
            grads,
            &cache.video,
            dstates.view(),
            Array1::zeros(2 * h).view(),
        );
        let dproj_pre = dproj * cache.frames_proj.mapv(|a| 1.0 - a * a);
        self.frame_projection
            .backward(params, grads, cache.frames_in.view(), dproj_pre.view());

        let dwords = self.text_encoder.backward(
            params,
            grads,
            &cache.text,
            Array2::zeros((cache.text_len, 2 * h)).view(),
            dsentence.view(),
        );
        self.word_embedding
            .backward(grads, &cache.query, dwords.view());
        Ok(lg.loss)
    }
}

/// Always predicts the same normalized interval with uniform attention. Has
/// no parameters; used to exercise the trainer against a foreign grounder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantGrounder {
    pub center: f64,
    pub width: f64,
}

impl Grounder for ConstantGrounder {
    type Cache = ();

    fn parameter_ids(&self) -> Vec<ParamId> {
        Vec::new()
    }

    fn forward(
        &self,
        _params: &ParameterSet,
        video: ArrayView2<Real>,
        query: &[usize],
        duration: f64,
    ) -> Result<(GrounderOutput, ())> {
        if query.is_empty() || video.nrows() == 0 {
            return Err(Error::Shape("empty query or video".into()));
        }
        let t = video.nrows();
        Ok((
            GrounderOutput::new(self.center, self.width, duration, vec![1.0 / t as f64; t]),
            (),
        ))
    }

    fn backward(
        &self,
        _params: &ParameterSet,
        _grads: &mut Gradients,
        _cache: &(),
        out: &GrounderOutput,
        gold: Interval,
        duration: f64,
        _scale: Real,
    ) -> Result<f64> {
        self.loss(out, gold, duration)
    }
}
