//! Video-pivoted query simplification.
//!
//! Two bidirectional encoders read the 32-frame clip and the query. Their
//! final states are concatenated and projected to the decoder's initial
//! hidden state. Each decoder step attends over frame states and query states
//! from the previous hidden state and feeds both contexts, together with the
//! previous token's embedding, into the cell.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::corpus::{EOS, PAD, SOS};
use crate::error::{Error, Result};
use crate::neural::ops::{concat, nll_loss};
use crate::neural::{
    AdditiveAttention, AttendCache, BiLstm, BiLstmCache, Embedding, Gradients, Linear, LstmCell,
    ParamId, ParameterSet, Real, StepCache,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslatorConfig {
    /// Width frames are projected to before encoding.
    pub frame_dim: usize,
    /// Encoder hidden size per direction.
    pub hidden: usize,
    pub decoder_hidden: usize,
    pub attn_dim: usize,
    pub target_embed_dim: usize,
    pub max_decode_len: usize,
}

#[derive(Debug, Clone)]
pub struct Translator {
    pub word_embedding: Embedding,
    pub frame_projection: Linear,
    pub video_encoder: BiLstm,
    pub text_encoder: BiLstm,
    pub init_projection: Linear,
    pub video_attention: AdditiveAttention,
    pub text_attention: AdditiveAttention,
    pub target_embedding: Embedding,
    pub decoder: LstmCell,
    pub output: Linear,
    pub max_decode_len: usize,
    own: Vec<ParamId>,
}

/// Encoder outputs the decoder attends over, plus what backward needs.
#[derive(Debug, Clone)]
pub struct TranslatorState {
    pub video_hiddens: Array2<Real>,
    pub text_hiddens: Array2<Real>,
    pub init_state: Array1<Real>,
    video_keys: Array2<Real>,
    text_keys: Array2<Real>,
    clip: Array2<Real>,
    clip_proj: Array2<Real>,
    video_cache: BiLstmCache,
    query: Vec<usize>,
    text_cache: BiLstmCache,
    init_in: Array1<Real>,
}

/// Decoder recurrent state.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub h: Array1<Real>,
    pub c: Array1<Real>,
}

#[derive(Debug, Clone)]
pub struct DecodeStepCache {
    prev_token: usize,
    video_attend: AttendCache,
    text_attend: AttendCache,
    cell: StepCache,
}

impl DecodeStepCache {
    pub fn video_weights(&self) -> &Array1<Real> {
        &self.video_attend.weights
    }

    pub fn text_weights(&self) -> &Array1<Real> {
        &self.text_attend.weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Emitted tokens, without the terminating `<eos>`.
    pub token_indices: Vec<usize>,
    /// Whether decoding stopped on `<eos>` rather than the length cap.
    pub ended: bool,
    pub per_step_logits: Vec<Array1<Real>>,
    pub video_attention: Vec<Array1<Real>>,
}

/// Cache of a teacher-forced pass.
#[derive(Debug, Clone)]
pub struct ForcedCache {
    state: TranslatorState,
    steps: Vec<DecodeStepCache>,
    dlogits: Array2<Real>,
}

impl ForcedCache {
    pub fn steps(&self) -> &[DecodeStepCache] {
        &self.steps
    }
}

impl Translator {
    pub fn new(
        params: &mut ParameterSet,
        name: &str,
        word_embedding: Embedding,
        clip_feature_dim: usize,
        target_vocab: usize,
        config: &TranslatorConfig,
    ) -> Result<Self> {
        if config.max_decode_len == 0 {
            return Err(Error::Config("max_decode_len must be at least 1".into()));
        }
        let before = params.len();
        let h = config.hidden;
        let dh = config.decoder_hidden;
        let frame_projection = Linear::new(
            params,
            &format!("{name}.frame_projection"),
            clip_feature_dim,
            config.frame_dim,
        )?;
        let video_encoder = BiLstm::new(
            params,
            &format!("{name}.video_encoder"),
            config.frame_dim,
            h,
        )?;
        let text_encoder = BiLstm::new(
            params,
            &format!("{name}.text_encoder"),
            word_embedding.dim,
            h,
        )?;
        let init_projection = Linear::new(params, &format!("{name}.init_projection"), 4 * h, dh)?;
        let video_attention = AdditiveAttention::new(
            params,
            &format!("{name}.video_attention"),
            dh,
            2 * h,
            config.attn_dim,
        )?;
        let text_attention = AdditiveAttention::new(
            params,
            &format!("{name}.text_attention"),
            dh,
            2 * h,
            config.attn_dim,
        )?;
        let target_embedding = Embedding::new(
            params,
            &format!("{name}.target_embedding"),
            target_vocab,
            config.target_embed_dim,
        )?;
        let decoder = LstmCell::new(
            params,
            &format!("{name}.decoder"),
            config.target_embed_dim + 4 * h,
            dh,
        )?;
        let output = Linear::new(params, &format!("{name}.output"), dh, target_vocab)?;
        let own = params.ids().skip(before).collect();
        Ok(Self {
            word_embedding,
            frame_projection,
            video_encoder,
            text_encoder,
            init_projection,
            video_attention,
            text_attention,
            target_embedding,
            decoder,
            output,
            max_decode_len: config.max_decode_len,
            own,
        })
    }

    /// Parameters owned by the translator, excluding the shared word table.
    pub fn own_parameter_ids(&self) -> &[ParamId] {
        &self.own
    }

    pub fn parameter_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.word_embedding.table];
        ids.extend(&self.own);
        ids
    }

    pub fn target_vocab(&self) -> usize {
        self.output.out_dim
    }

    pub fn encode_pair(
        &self,
        params: &ParameterSet,
        clip: ArrayView2<Real>,
        query: &[usize],
    ) -> Result<TranslatorState> {
        if query.is_empty() {
            return Err(Error::Shape("translator needs a non-empty query".into()));
        }
        if clip.ncols() != self.frame_projection.in_dim {
            return Err(Error::Shape(format!(
                "clip feature dim {}, translator built for {}",
                clip.ncols(),
                self.frame_projection.in_dim
            )));
        }
        let mut clip_proj = self.frame_projection.forward(params, clip);
        clip_proj.mapv_inplace(Real::tanh);
        let (video, video_cache) = self.video_encoder.encode(params, clip_proj.view())?;
        let words = self.word_embedding.forward(params, query)?;
        let (text, text_cache) = self.text_encoder.encode(params, words.view())?;

        let init_in = concat(&[video.final_state.view(), text.final_state.view()]);
        let init_state = self
            .init_projection
            .forward_vec(params, init_in.view())
            .mapv(Real::tanh);
        let video_keys = self
            .video_attention
            .project_keys(params, video.hiddens.view());
        let text_keys = self
            .text_attention
            .project_keys(params, text.hiddens.view());
        Ok(TranslatorState {
            video_hiddens: video.hiddens,
            text_hiddens: text.hiddens,
            init_state,
            video_keys,
            text_keys,
            clip: clip.to_owned(),
            clip_proj,
            video_cache,
            query: query.to_vec(),
            text_cache,
            init_in,
        })
    }

    pub fn initial_decoder_state(&self, state: &TranslatorState) -> DecoderState {
        DecoderState {
            h: state.init_state.clone(),
            c: Array1::zeros(state.init_state.len()),
        }
    }

    /// One decoder step from `dec` after emitting `prev_token`.
    pub fn decode_step(
        &self,
        params: &ParameterSet,
        dec: &DecoderState,
        prev_token: usize,
        state: &TranslatorState,
    ) -> Result<(Array1<Real>, DecoderState, DecodeStepCache)> {
        let (ctx_v, video_attend) = self.video_attention.attend(
            params,
            dec.h.view(),
            state.video_hiddens.view(),
            state.video_keys.view(),
        )?;
        let (ctx_t, text_attend) = self.text_attention.attend(
            params,
            dec.h.view(),
            state.text_hiddens.view(),
            state.text_keys.view(),
        )?;
        let emb = self.target_embedding.forward(params, &[prev_token])?;
        let x = concat(&[emb.row(0), ctx_v.view(), ctx_t.view()]);
        let cell = self
            .decoder
            .step(params, x.view(), dec.h.view(), dec.c.view());
        let logits = self.output.forward_vec(params, cell.h.view());
        let next = DecoderState {
            h: cell.h.clone(),
            c: cell.c.clone(),
        };
        Ok((
            logits,
            next,
            DecodeStepCache {
                prev_token,
                video_attend,
                text_attend,
                cell,
            },
        ))
    }

    /// Mean NLL of `target` followed by `<eos>`, feeding gold tokens.
    pub fn forward_teacher_forced(
        &self,
        params: &ParameterSet,
        clip: ArrayView2<Real>,
        query: &[usize],
        target: &[usize],
    ) -> Result<(Real, ForcedCache)> {
        if target.is_empty() {
            return Err(Error::Validation("empty simplification target".into()));
        }
        let state = self.encode_pair(params, clip, query)?;
        let inputs: Vec<usize> = std::iter::once(SOS).chain(target.iter().copied()).collect();
        let outputs: Vec<usize> = target.iter().copied().chain(std::iter::once(EOS)).collect();
        let mut dec = self.initial_decoder_state(&state);
        let mut logits = Array2::zeros((inputs.len(), self.target_vocab()));
        let mut steps = Vec::with_capacity(inputs.len());
        for (t, &prev) in inputs.iter().enumerate() {
            let (l, next, cache) = self.decode_step(params, &dec, prev, &state)?;
            logits.row_mut(t).assign(&l);
            steps.push(cache);
            dec = next;
        }
        let (loss, dlogits) = nll_loss(logits.view(), &outputs, PAD)?;
        Ok((
            loss,
            ForcedCache {
                state,
                steps,
                dlogits,
            },
        ))
    }

    pub fn teacher_forced_loss(
        &self,
        params: &ParameterSet,
        clip: ArrayView2<Real>,
        query: &[usize],
        target: &[usize],
    ) -> Result<Real> {
        self.forward_teacher_forced(params, clip, query, target)
            .map(|(l, _)| l)
    }

    /// Accumulates `scale * d(loss)/d(params)`; the clip is a constant.
    pub fn backward(
        &self,
        params: &ParameterSet,
        grads: &mut Gradients,
        cache: &ForcedCache,
        scale: Real,
    ) {
        let st = &cache.state;
        let h = self.video_encoder.hidden();
        let e = self.target_embedding.dim;
        let dh_size = self.decoder.hidden;
        let mut dvideo = Array2::zeros(st.video_hiddens.raw_dim());
        let mut dtext = Array2::zeros(st.text_hiddens.raw_dim());
        let mut dvideo_keys = Array2::zeros(st.video_keys.raw_dim());
        let mut dtext_keys = Array2::zeros(st.text_keys.raw_dim());
        let mut dh_next = Array1::zeros(dh_size);
        let mut dc_next = Array1::zeros(dh_size);

        for (t, step) in cache.steps.iter().enumerate().rev() {
            let dlogit = cache.dlogits.row(t).mapv(|g| g * scale);
            let mut dh = self
                .output
                .backward_vec(params, grads, step.cell.h.view(), dlogit.view());
            dh += &dh_next;
            let (dx, mut dh_prev, dc_prev) =
                self.decoder
                    .step_backward(params, grads, &step.cell, dh.view(), dc_next.view());

            let demb = dx.slice(s![..e]).insert_axis(ndarray::Axis(0)).to_owned();
            self.target_embedding
                .backward(grads, &[step.prev_token], demb.view());

            let (dq, dk, dp) = self.video_attention.attend_backward(
                params,
                grads,
                st.video_hiddens.view(),
                &step.video_attend,
                dx.slice(s![e..e + 2 * h]),
                None,
            );
            dh_prev += &dq;
            dvideo += &dk;
            dvideo_keys += &dp;
            let (dq, dk, dp) = self.text_attention.attend_backward(
                params,
                grads,
                st.text_hiddens.view(),
                &step.text_attend,
                dx.slice(s![e + 2 * h..]),
                None,
            );
            dh_prev += &dq;
            dtext += &dk;
            dtext_keys += &dp;

            dh_next = dh_prev;
            dc_next = dc_prev;
        }

        let dinit = dh_next * st.init_state.mapv(|a| 1.0 - a * a);
        let dinit_in =
            self.init_projection
                .backward_vec(params, grads, st.init_in.view(), dinit.view());

        dvideo += &self.video_attention.project_keys_backward(
            params,
            grads,
            st.video_hiddens.view(),
            dvideo_keys.view(),
        );
        dtext += &self.text_attention.project_keys_backward(
            params,
            grads,
            st.text_hiddens.view(),
            dtext_keys.view(),
        );

        let dproj = self.video_encoder.backward(
            params,
            grads,
            &st.video_cache,
            dvideo.view(),
            dinit_in.slice(s![..2 * h]),
        );
        let dproj_pre = dproj * st.clip_proj.mapv(|a| 1.0 - a * a);
        self.frame_projection
            .backward(params, grads, st.clip.view(), dproj_pre.view());

        let dwords = self.text_encoder.backward(
            params,
            grads,
            &st.text_cache,
            dtext.view(),
            dinit_in.slice(s![2 * h..]),
        );
        self.word_embedding
            .backward(grads, &st.query, dwords.view());
    }

    /// Argmax decoding; `<pad>` and `<sos>` are never emitted.
    pub fn greedy_decode(
        &self,
        params: &ParameterSet,
        clip: ArrayView2<Real>,
        query: &[usize],
        max_len: usize,
    ) -> Result<DecodeResult> {
        if max_len == 0 {
            return Err(Error::Validation("max_len must be at least 1".into()));
        }
        let state = self.encode_pair(params, clip, query)?;
        let mut dec = self.initial_decoder_state(&state);
        let mut prev = SOS;
        let mut out = DecodeResult {
            token_indices: Vec::new(),
            ended: false,
            per_step_logits: Vec::new(),
            video_attention: Vec::new(),
        };
        for _ in 0..max_len {
            let (logits, next, cache) = self.decode_step(params, &dec, prev, &state)?;
            let token = argmax_emittable(logits.view());
            out.per_step_logits.push(logits);
            out.video_attention.push(cache.video_attend.weights);
            if token == EOS {
                out.ended = true;
                break;
            }
            out.token_indices.push(token);
            prev = token;
            dec = next;
        }
        Ok(out)
    }
}

fn argmax_emittable(logits: ArrayView1<Real>) -> usize {
    let mut best = EOS;
    for (i, &v) in logits.iter().enumerate() {
        if i != PAD && i != SOS && v > logits[best] {
            best = i;
        }
    }
    best
}
