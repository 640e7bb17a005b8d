//! Encoder, attention and decoder of the parser.

mod config;
mod vocab;

#[cfg(test)]
mod tests;

pub use config::{parse_kv, AttentionKind, FeatureFlags, ModelConfig, PAUSE_CATEGORIES};
pub(crate) use config::parse_field;
pub use vocab::{SymbolVocab, WordVocab, UNK};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{lstm_cell, Graph, LstmParams, LstmState, ParamId, ParamStore, Var};
use crate::corpus::{Example, Utterance};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::prosody::{build_prosodic_inputs, utterance_prosody, DurationLexicon, ProsodicInput};

/// Handles of every learned tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamIds {
    pub word_embed: ParamId,
    pub pause_embed: Option<ParamId>,
    /// `(width, filters, bias)` per CNN filter width.
    pub cnn: Vec<(usize, ParamId, ParamId)>,
    pub encoder: Vec<LstmParams>,
    pub decoder: Vec<LstmParams>,
    pub symbol_embed: ParamId,
    pub att_w1: ParamId,
    pub att_w2: ParamId,
    pub att_bias: ParamId,
    pub att_v: ParamId,
    pub att_wf: Option<ParamId>,
    pub att_filters: Option<ParamId>,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

/// Model inputs of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceInput {
    pub word_ids: Vec<usize>,
    pub prosody: Option<Vec<ProsodicInput>>,
}

impl SentenceInput {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }
}

/// Encoder outputs in original word order.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `T × H` top-layer states.
    pub states: Var,
    /// `T × A` projection `h_i W₁ᵀ`, shared by every decoding step.
    pub projected: Var,
    /// Last state of each layer, used to start the decoder.
    pub final_states: Vec<LstmState>,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct DecoderState {
    pub layers: Vec<LstmState>,
    /// `1 × T` attention weights of the previous step.
    pub alpha: Var,
    /// `1 × H` context vector of the previous step.
    pub context: Var,
}

/// One decoding step's output.
#[derive(Debug, Clone)]
pub struct Step {
    pub logits: Var,
    pub alpha: Var,
    pub state: DecoderState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parser {
    pub config: ModelConfig,
    pub words: WordVocab,
    pub symbols: SymbolVocab,
    pub params: ParamStore,
    pub ids: ParamIds,
}

impl Parser {
    /// A freshly initialized parser: weights uniform in ±`init_scale`, biases
    /// zero except the LSTM forget gates, which start at 1.
    pub fn new(config: ModelConfig, words: WordVocab, symbols: SymbolVocab, seed: u64) -> Result<Parser> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let ids = allocate(&config, words.len(), symbols.len(), &mut params, &mut rng);
        Ok(Parser {
            config,
            words,
            symbols,
            params,
            ids,
        })
    }

    /// Rebinds saved parameters; names and shapes must match what `config`
    /// allocates.
    pub fn from_params(config: ModelConfig, words: WordVocab, symbols: SymbolVocab, params: ParamStore) -> Result<Parser> {
        let mut parser = Parser::new(config, words, symbols, 0)?;
        let want = parser.params.manifest();
        let got = params.manifest();
        if want.len() != got.len() {
            return Err(Error::Format(alloc::format!(
                "expected {} parameter tensors, found {}",
                want.len(),
                got.len()
            )));
        }
        for (w, g) in want.iter().zip(&got) {
            if w.name != g.name || w.rows != g.rows || w.cols != g.cols {
                return Err(Error::Format(alloc::format!(
                    "parameter `{}` {}×{} does not match `{}` {}×{}",
                    g.name,
                    g.rows,
                    g.cols,
                    w.name,
                    w.rows,
                    w.cols
                )));
            }
        }
        parser.params = params;
        Ok(parser)
    }

    /// Word ids only; used for text-only models and as the backoff input.
    pub fn text_input<S: AsRef<str>>(&self, tokens: &[S]) -> SentenceInput {
        SentenceInput {
            word_ids: tokens.iter().map(|t| self.words.id(t.as_ref())).collect(),
            prosody: None,
        }
    }

    /// Inputs for an example under this model's feature flags. Fails with
    /// [`Error::Backoff`] when acoustic features are needed but missing.
    pub fn example_input(&self, example: &Example, lexicon: &DurationLexicon) -> Result<SentenceInput> {
        let mut input = self.text_input(example.tokens());
        if self.config.features.any() {
            input.prosody = Some(build_prosodic_inputs(
                example,
                lexicon,
                self.config.context_seconds,
                self.config.min_frame_rows(),
            )?);
        }
        Ok(input)
    }

    /// [`Parser::example_input`] for an utterance without a gold tree.
    pub fn utterance_input(&self, utt: &Utterance, lexicon: &DurationLexicon) -> Result<SentenceInput> {
        let mut input = self.text_input(&utt.tokens);
        if self.config.features.any() {
            input.prosody = Some(utterance_prosody(
                utt,
                lexicon,
                self.config.context_seconds,
                self.config.min_frame_rows(),
            )?);
        }
        Ok(input)
    }

    /// Concatenated max-pooled convolutions over one word's frames, `1 × mN`.
    pub fn acoustic_cnn(&self, g: &mut Graph<'_>, frames: &Matrix) -> Result<Var> {
        let input = g.constant(frames.rows(), frames.cols(), frames.as_slice().to_vec());
        let mut pooled = Vec::with_capacity(self.ids.cnn.len());
        for &(_, filters, bias) in &self.ids.cnn {
            let f = g.param(filters);
            let b = g.param(bias);
            pooled.push(g.conv1d_maxpool(input, f, b)?);
        }
        g.concat_cols(&pooled)
    }

    /// Encoder input `x_i = [e_i φ_i]` for word `i`.
    pub fn assemble_input(&self, g: &mut Graph<'_>, input: &SentenceInput, i: usize) -> Result<Var> {
        let table = g.param(self.ids.word_embed);
        let e = g.gather(table, input.word_ids[i])?;
        let flags = self.config.features;
        if !flags.any() {
            return Ok(e);
        }
        let pi = input
            .prosody
            .as_ref()
            .and_then(|p| p.get(i))
            .ok_or_else(|| Error::Backoff(alloc::format!("word {i} has no prosodic input")))?;
        let mut parts = vec![e];
        if let Some(pause) = self.ids.pause_embed {
            let table = g.param(pause);
            parts.push(g.gather(table, pi.pause_pre.index())?);
            parts.push(g.gather(table, pi.pause_post.index())?);
        }
        if flags.duration {
            parts.push(g.constant(1, 1, vec![pi.delta]));
        }
        if flags.cnn {
            parts.push(self.acoustic_cnn(g, &pi.frames)?);
        }
        g.concat_cols(&parts)
    }

    /// Runs the stacked encoder over the reversed sentence.
    pub fn encode<R: Rng>(&self, g: &mut Graph<'_>, input: &SentenceInput, training: bool, rng: &mut R) -> Result<Encoded> {
        let t = input.len();
        if t == 0 {
            return Err(Error::InvalidArgument("cannot encode an empty sentence".into()));
        }
        let p = self.config.dropout;
        let mut layer_in = Vec::with_capacity(t);
        for i in (0..t).rev() {
            layer_in.push(self.assemble_input(g, input, i)?);
        }
        let mut final_states = Vec::with_capacity(self.ids.encoder.len());
        for lp in &self.ids.encoder {
            let mut state = self.zero_state(g);
            let mut outputs = Vec::with_capacity(t);
            for &x in &layer_in {
                state = lstm_cell(g, x, state, *lp)?;
                outputs.push(g.dropout(state.h, p, training, rng)?);
            }
            final_states.push(state);
            layer_in = outputs;
        }
        layer_in.reverse();
        let states = g.stack_rows(&layer_in)?;
        let w1 = g.param(self.ids.att_w1);
        let projected = g.matmul_nt(states, w1)?;
        Ok(Encoded {
            states,
            projected,
            final_states,
            len: t,
        })
    }

    /// Decoder state before the first symbol.
    pub fn initial_state(&self, g: &mut Graph<'_>, enc: &Encoded) -> DecoderState {
        let t = enc.len;
        DecoderState {
            layers: enc.final_states.clone(),
            alpha: g.constant(1, t, vec![1.0 / t as f64; t]),
            context: g.constant(1, self.config.hidden, vec![0.0; self.config.hidden]),
        }
    }

    fn zero_state(&self, g: &mut Graph<'_>) -> LstmState {
        let h = self.config.hidden;
        LstmState {
            h: g.constant(1, h, vec![0.0; h]),
            c: g.constant(1, h, vec![0.0; h]),
        }
    }

    fn query(&self, g: &mut Graph<'_>, d: Var) -> Result<Var> {
        let w2 = g.param(self.ids.att_w2);
        let b = g.param(self.ids.att_bias);
        let q = g.matmul_nt(d, w2)?;
        g.add(q, b)
    }

    fn weights_and_context(&self, g: &mut Graph<'_>, enc: &Encoded, pre: Var) -> Result<(Var, Var)> {
        let act = g.tanh(pre);
        let v = g.param(self.ids.att_v);
        let scores = g.matmul_nt(act, v)?;
        let scores = g.reshape(scores, 1, enc.len)?;
        let alpha = g.softmax(scores);
        let context = g.matmul(alpha, enc.states)?;
        Ok((alpha, context))
    }

    /// `u_i = vᵀ tanh(W₁h_i + W₂d_t + b_a)`; returns `(α, c)`.
    pub fn attend_content(&self, g: &mut Graph<'_>, enc: &Encoded, d: Var) -> Result<(Var, Var)> {
        let q = self.query(g, d)?;
        let pre = g.add_row(enc.projected, q)?;
        self.weights_and_context(g, enc, pre)
    }

    /// Content attention plus `W_f f_i`, where `f = F ∗ α_{t−1}`.
    pub fn attend_location(&self, g: &mut Graph<'_>, enc: &Encoded, d: Var, alpha_prev: Var) -> Result<(Var, Var)> {
        let (wf, filters) = match (self.ids.att_wf, self.ids.att_filters) {
            (Some(wf), Some(f)) => (wf, f),
            _ => return Err(Error::Contract("model has no location-attention parameters".into())),
        };
        let q = self.query(g, d)?;
        let pre = g.add_row(enc.projected, q)?;
        let f = g.param(filters);
        let feats = g.conv_same(alpha_prev, f)?;
        let wf = g.param(wf);
        let loc = g.matmul_nt(feats, wf)?;
        let pre = g.add(pre, loc)?;
        self.weights_and_context(g, enc, pre)
    }

    /// Feeds `y_prev`, attends, and returns unnormalized output scores.
    pub fn decode_step<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        enc: &Encoded,
        y_prev: usize,
        state: &DecoderState,
        training: bool,
        rng: &mut R,
    ) -> Result<Step> {
        let p = self.config.dropout;
        let table = g.param(self.ids.symbol_embed);
        let emb = g.gather(table, y_prev)?;
        let mut x = g.concat_cols(&[emb, state.context])?;
        let mut layers = Vec::with_capacity(self.ids.decoder.len());
        for (lp, prev) in self.ids.decoder.iter().zip(&state.layers) {
            let s = lstm_cell(g, x, *prev, *lp)?;
            x = g.dropout(s.h, p, training, rng)?;
            layers.push(s);
        }
        let (alpha, context) = match self.config.attention {
            AttentionKind::Content => self.attend_content(g, enc, x)?,
            AttentionKind::Location => self.attend_location(g, enc, x, state.alpha)?,
        };
        let w = g.param(self.ids.out_weight);
        let b = g.param(self.ids.out_bias);
        let cd = g.concat_cols(&[context, x])?;
        let logits = g.matmul_nt(cd, w)?;
        let logits = g.add(logits, b)?;
        Ok(Step {
            logits,
            alpha,
            state: DecoderState { layers, alpha, context },
        })
    }

    /// Output distribution of one step.
    pub fn step_distribution<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        enc: &Encoded,
        y_prev: usize,
        state: &DecoderState,
        rng: &mut R,
    ) -> Result<(Vec<f64>, DecoderState)> {
        let step = self.decode_step(g, enc, y_prev, state, false, rng)?;
        let probs = g.softmax(step.logits);
        Ok((g.value(probs).to_vec(), step.state))
    }

    /// Summed negative log-likelihood of `targets` under teacher forcing.
    pub fn sequence_loss<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        input: &SentenceInput,
        targets: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if targets.is_empty() {
            return Err(Error::InvalidArgument("empty target sequence".into()));
        }
        let enc = self.encode(g, input, training, rng)?;
        let mut state = self.initial_state(g, &enc);
        let mut prev = SymbolVocab::START;
        let mut terms = Vec::with_capacity(targets.len());
        for &y in targets {
            let step = self.decode_step(g, &enc, prev, &state, training, rng)?;
            terms.push(g.nll(step.logits, y)?);
            state = step.state;
            prev = y;
        }
        g.add_n(&terms)
    }

    /// Output ids chosen greedily (lowest id on ties), excluding the end
    /// marker, capped at `max_len` symbols.
    pub fn greedy_ids(&self, input: &SentenceInput, max_len: usize) -> Result<Vec<usize>> {
        let mut g = Graph::new(&self.params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = self.encode(&mut g, input, false, &mut rng)?;
        let mut state = self.initial_state(&mut g, &enc);
        let mut prev = SymbolVocab::START;
        let mut out = Vec::new();
        while out.len() < max_len {
            let step = self.decode_step(&mut g, &enc, prev, &state, false, &mut rng)?;
            let y = argmax(g.value(step.logits));
            if y == SymbolVocab::END {
                break;
            }
            out.push(y);
            state = step.state;
            prev = y;
        }
        Ok(out)
    }

    /// Parameter names in allocation order.
    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|(_, p)| p.name.clone()).collect()
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn lstm_layer<R: Rng>(params: &mut ParamStore, name: &str, input: usize, hidden: usize, scale: f64, rng: &mut R) -> LstmParams {
    let weight = params.add_uniform(&alloc::format!("{name}.weight"), 4 * hidden, input + hidden, scale, rng);
    let mut b = vec![0.0; 4 * hidden];
    b[hidden..2 * hidden].fill(1.0);
    let bias = params.add(&alloc::format!("{name}.bias"), 1, 4 * hidden, b);
    LstmParams { weight, bias, hidden }
}

fn allocate<R: Rng>(c: &ModelConfig, words: usize, symbols: usize, params: &mut ParamStore, rng: &mut R) -> ParamIds {
    let s = c.init_scale;
    let h = c.hidden;
    let word_embed = params.add_uniform("embed.word", words, c.word_embed_dim, s, rng);
    let pause_embed = c
        .features
        .pause
        .then(|| params.add_uniform("embed.pause", PAUSE_CATEGORIES, c.pause_embed_dim, s, rng));
    let mut cnn = Vec::new();
    if c.features.cnn {
        for &w in &c.cnn_filter_widths {
            let filters = params.add_uniform(
                &alloc::format!("cnn.w{w}.filters"),
                c.cnn_filters_per_width,
                w * crate::corpus::FRAME_FEATURES,
                s,
                rng,
            );
            let bias = params.add_zeros(&alloc::format!("cnn.w{w}.bias"), 1, c.cnn_filters_per_width);
            cnn.push((w, filters, bias));
        }
    }
    let mut encoder = Vec::with_capacity(c.layers);
    for l in 0..c.layers {
        let input = if l == 0 { c.input_width() } else { h };
        encoder.push(lstm_layer(params, &alloc::format!("encoder.l{l}"), input, h, s, rng));
    }
    let symbol_embed = params.add_uniform("embed.symbol", symbols, c.output_embed_dim, s, rng);
    let mut decoder = Vec::with_capacity(c.layers);
    for l in 0..c.layers {
        let input = if l == 0 { c.output_embed_dim + h } else { h };
        decoder.push(lstm_layer(params, &alloc::format!("decoder.l{l}"), input, h, s, rng));
    }
    let att_w1 = params.add_uniform("attention.w1", h, h, s, rng);
    let att_w2 = params.add_uniform("attention.w2", h, h, s, rng);
    let att_bias = params.add_zeros("attention.bias", 1, h);
    let att_v = params.add_uniform("attention.v", 1, h, s, rng);
    let (att_wf, att_filters) = match c.attention {
        AttentionKind::Location => (
            Some(params.add_uniform("attention.wf", h, c.location_filters, s, rng)),
            Some(params.add_uniform("attention.filters", c.location_filters, c.location_width, s, rng)),
        ),
        AttentionKind::Content => (None, None),
    };
    let out_weight = params.add_uniform("output.weight", symbols, 2 * h, s, rng);
    let out_bias = params.add_zeros("output.bias", 1, symbols);
    ParamIds {
        word_embed,
        pause_embed,
        cnn,
        encoder,
        decoder,
        symbol_embed,
        att_w1,
        att_w2,
        att_bias,
        att_v,
        att_wf,
        att_filters,
        out_weight,
        out_bias,
    }
}
