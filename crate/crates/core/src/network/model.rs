use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Mixing, ModelConfig, ModelVariant};
use super::params::{Binder, ParamStore};
use crate::alignments::Language;
use crate::error::{Error, Result};
use crate::losses::CtcLogPosteriors;
use crate::numerics::{matmul_raw, Tape, Tensor, Var};

/// Identifies one encoder stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderId {
    M,
    E,
    /// Unconditioned third encoder of the three-encoder variant.
    A,
    /// The single bilingual encoder of the vanilla baseline.
    Shared,
}

impl EncoderId {
    fn prefix(self) -> &'static str {
        match self {
            EncoderId::M => "enc_m",
            EncoderId::E => "enc_e",
            EncoderId::A => "enc_a",
            EncoderId::Shared => "enc",
        }
    }

    pub fn of(lang: Language) -> Self {
        match lang {
            Language::M => EncoderId::M,
            Language::E => EncoderId::E,
        }
    }
}

fn ctc_prefix(lang: Language) -> &'static str {
    match lang {
        Language::M => "ctc_m",
        Language::E => "ctc_e",
    }
}

/// Tape outputs of a full forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Heads {
    /// `T x (U+1) x V` transducer log-probabilities.
    pub rnnt: Var,
    pub ctc_m: Option<Var>,
    pub ctc_e: Option<Var>,
}

/// Recurrent state of the prediction network.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub hidden: Vec<f64>,
}

/// Encoder-side quantities needed to decode one utterance.
#[derive(Debug, Clone)]
pub struct EncodedUtterance {
    pub frames: usize,
    /// Fused encoder output projected into the joint space, `T x J`.
    pub enc_proj: Tensor,
    pub ctc_m: Option<CtcLogPosteriors>,
    pub ctc_e: Option<CtcLogPosteriors>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
}

impl Model {
    /// Freshly initialised model; identical seeds give identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let c = &config;
        for enc in Self::encoder_ids(c.variant) {
            Self::init_encoder(&mut p, c, *enc, &mut rng)?;
        }
        if c.variant.has_ctc_heads() {
            for lang in Language::BOTH {
                let n = 1 + match lang {
                    Language::M => c.m_units,
                    Language::E => c.e_units,
                };
                let pre = ctc_prefix(lang);
                p.insert_weight(&format!("{pre}.w"), &[c.hidden_dim, n], &mut rng)?;
                p.insert_zeros(&format!("{pre}.b"), &[1, n])?;
            }
        }
        p.insert_weight("dec.embed", &[c.output_dim() + 1, c.embed_dim], &mut rng)?;
        p.insert_weight("dec.w_in", &[c.embed_dim, c.decoder_dim], &mut rng)?;
        p.insert_weight("dec.w_rec", &[c.decoder_dim, c.decoder_dim], &mut rng)?;
        p.insert_zeros("dec.b", &[1, c.decoder_dim])?;
        p.insert_weight("joint.w_enc", &[c.encoder_width(), c.joint_dim], &mut rng)?;
        p.insert_weight("joint.w_dec", &[c.decoder_dim, c.joint_dim], &mut rng)?;
        p.insert_zeros("joint.b", &[1, c.joint_dim])?;
        p.insert_weight("joint.w_out", &[c.joint_dim, c.output_dim()], &mut rng)?;
        p.insert_zeros("joint.b_out", &[1, c.output_dim()])?;
        Ok(Model { config, params: p })
    }

    /// Wraps existing parameters, checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let reference = Model::new(config.clone(), 0)?;
        if reference.params.names() != params.names() {
            return Err(Error::Checkpoint(format!(
                "parameter names do not match the {} layout",
                config.variant.architecture()
            )));
        }
        for ((name, a), b) in reference.params.iter().zip(params.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(Model { config, params })
    }

    fn encoder_ids(variant: ModelVariant) -> &'static [EncoderId] {
        match variant {
            ModelVariant::Conditional | ModelVariant::ConditionalLS => &[EncoderId::M, EncoderId::E],
            ModelVariant::ThreeEncoder => &[EncoderId::M, EncoderId::E, EncoderId::A],
            ModelVariant::Vanilla => &[EncoderId::Shared],
        }
    }

    fn init_encoder(p: &mut ParamStore, c: &ModelConfig, id: EncoderId, rng: &mut ChaCha8Rng) -> Result<()> {
        let width = c.encoder_width();
        let mut in_dim = c.input_dim;
        for layer in 0..c.encoder_layers {
            let pre = format!("{}.{layer}", id.prefix());
            match c.mixing {
                Mixing::Conv { window } => {
                    p.insert_weight(&format!("{pre}.mix.w"), &[window * in_dim, width], rng)?;
                }
                Mixing::Recurrent => {
                    p.insert_weight(&format!("{pre}.mix.w"), &[in_dim, width], rng)?;
                    p.insert_weight(&format!("{pre}.mix.w_rec"), &[width, width], rng)?;
                }
            }
            p.insert_zeros(&format!("{pre}.mix.b"), &[1, width])?;
            p.insert_weight(&format!("{pre}.ff.w"), &[width, width], rng)?;
            p.insert_zeros(&format!("{pre}.ff.b"), &[1, width])?;
            in_dim = width;
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    /// Reinterprets the parameters as another variant with the same layout.
    pub fn with_variant(mut self, variant: ModelVariant) -> Result<Self> {
        if variant.architecture() != self.config.variant.architecture() {
            return Err(Error::UnsupportedVariant(format!(
                "cannot reuse {} parameters as {}",
                self.config.variant, variant
            )));
        }
        self.config.variant = variant;
        Ok(self)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    fn check_features(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 2 || x.shape()[1] != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: x.shape().to_vec(),
                right: vec![x.shape().first().copied().unwrap_or(0), self.config.input_dim],
            });
        }
        Ok(())
    }

    /// `x W + b` with `b` broadcast over rows.
    fn affine(&self, tape: &mut Tape, b: &mut Binder, x: Var, w: &str, bias: &str) -> Result<Var> {
        let rows = tape.shape(x)[0];
        let w = b.get(tape, w);
        let bias = b.get(tape, bias);
        let xw = tape.matmul(x, w)?;
        let bb = tape.index_select(bias, &vec![0; rows])?;
        tape.add(xw, bb)
    }

    /// Length-preserving `T x D` to `T x width` encoder stack.
    pub fn encode(&self, tape: &mut Tape, b: &mut Binder, id: EncoderId, x: Var) -> Result<Var> {
        if !Self::encoder_ids(self.config.variant).contains(&id) {
            return Err(Error::UnsupportedVariant(format!(
                "{} has no {:?} encoder",
                self.config.variant, id
            )));
        }
        let frames = tape.shape(x)[0];
        let mut h = x;
        for layer in 0..self.config.encoder_layers {
            let pre = format!("{}.{layer}", id.prefix());
            let act = match self.config.mixing {
                Mixing::Conv { window } => {
                    let radius = window / 2;
                    let padded = if radius > 0 {
                        let in_dim = tape.shape(h)[1];
                        let pad = tape.constant(Tensor::zeros(&[radius, in_dim]));
                        tape.concat(&[pad, h, pad], 0)?
                    } else {
                        h
                    };
                    let shifted: Vec<Var> = (0..window)
                        .map(|o| {
                            let idx: Vec<usize> = (o..o + frames).collect();
                            tape.index_select(padded, &idx)
                        })
                        .collect::<Result<_>>()?;
                    let stacked = tape.concat(&shifted, 1)?;
                    let mixed =
                        self.affine(tape, b, stacked, &format!("{pre}.mix.w"), &format!("{pre}.mix.b"))?;
                    tape.tanh(mixed)
                }
                Mixing::Recurrent => {
                    let driven =
                        self.affine(tape, b, h, &format!("{pre}.mix.w"), &format!("{pre}.mix.b"))?;
                    let w_rec = b.get(tape, &format!("{pre}.mix.w_rec"));
                    self.recur(tape, driven, w_rec)?
                }
            };
            let ff = self.affine(tape, b, act, &format!("{pre}.ff.w"), &format!("{pre}.ff.b"))?;
            h = tape.tanh(ff);
        }
        Ok(h)
    }

    /// Per-frame log-posteriors of the `lang` CTC head.
    pub fn ctc_head(&self, tape: &mut Tape, b: &mut Binder, h: Var, lang: Language) -> Result<Var> {
        if !self.config.variant.has_ctc_heads() {
            return Err(Error::UnsupportedVariant(format!(
                "{} has no CTC heads",
                self.config.variant
            )));
        }
        let pre = ctc_prefix(lang);
        let logits = self.affine(tape, b, h, &format!("{pre}.w"), &format!("{pre}.b"))?;
        tape.log_softmax(logits, 1)
    }

    /// Elementwise sum of encoder outputs.
    pub fn fuse(&self, tape: &mut Tape, parts: &[Var]) -> Result<Var> {
        fuse(tape, parts)
    }

    /// Prediction-network outputs for the start token followed by `labels`,
    /// one row per prefix length `0..=U`.
    pub fn predict_all(&self, tape: &mut Tape, b: &mut Binder, labels: &[usize]) -> Result<Var> {
        let tokens: Vec<usize> = std::iter::once(self.config.start_token())
            .chain(labels.iter().copied())
            .collect();
        if let Some(&bad) = tokens[1..].iter().find(|&&l| l == 0 || l >= self.config.output_dim()) {
            return Err(Error::InvalidLabel(bad));
        }
        let embed = b.get(tape, "dec.embed");
        let emb = tape.index_select(embed, &tokens)?;
        let driven = self.affine(tape, b, emb, "dec.w_in", "dec.b")?;
        let w_rec = b.get(tape, "dec.w_rec");
        self.recur(tape, driven, w_rec)
    }

    /// Elman recurrence `s_t = tanh(drive_t + s_{t-1} W_rec)` with `s_{-1} = 0`.
    fn recur(&self, tape: &mut Tape, driven: Var, w_rec: Var) -> Result<Var> {
        let steps = tape.shape(driven)[0];
        let mut rows = Vec::with_capacity(steps);
        let mut prev: Option<Var> = None;
        for t in 0..steps {
            let drive = tape.index_select(driven, &[t])?;
            let pre = match prev {
                Some(p) => {
                    let r = tape.matmul(p, w_rec)?;
                    tape.add(drive, r)?
                }
                None => drive,
            };
            let s = tape.tanh(pre);
            rows.push(s);
            prev = Some(s);
        }
        tape.concat(&rows, 0)
    }

    /// Full `T x (U+1) x V` lattice of joint log-probabilities.
    pub fn joint_lattice(&self, tape: &mut Tape, b: &mut Binder, h_enc: Var, h_dec: Var) -> Result<Var> {
        let frames = tape.shape(h_enc)[0];
        let positions = tape.shape(h_dec)[0];
        let w_enc = b.get(tape, "joint.w_enc");
        let enc = tape.matmul(h_enc, w_enc)?;
        let dec = self.affine(tape, b, h_dec, "joint.w_dec", "joint.b")?;
        let enc_idx: Vec<usize> = (0..frames).flat_map(|t| std::iter::repeat_n(t, positions)).collect();
        let dec_idx: Vec<usize> = (0..frames).flat_map(|_| 0..positions).collect();
        let e = tape.index_select(enc, &enc_idx)?;
        let d = tape.index_select(dec, &dec_idx)?;
        let sum = tape.add(e, d)?;
        let hidden = tape.tanh(sum);
        let logits = self.affine(tape, b, hidden, "joint.w_out", "joint.b_out")?;
        let logp = tape.log_softmax(logits, 1)?;
        tape.reshape(logp, &[frames, positions, self.config.output_dim()])
    }

    /// Encoder outputs of every encoder in the variant, in fusion order.
    fn encoders(&self, tape: &mut Tape, b: &mut Binder, x: Var) -> Result<Vec<(EncoderId, Var)>> {
        Self::encoder_ids(self.config.variant)
            .iter()
            .map(|&id| Ok((id, self.encode(tape, b, id, x)?)))
            .collect()
    }

    /// All heads on one tape. `labels` are global bilingual ids.
    pub fn forward(&self, tape: &mut Tape, b: &mut Binder, x: &Tensor, labels: &[usize]) -> Result<Heads> {
        self.check_features(x)?;
        let xv = tape.constant(x.clone());
        let encs = self.encoders(tape, b, xv)?;
        let hs: Vec<Var> = encs.iter().map(|(_, v)| *v).collect();
        let fused = fuse(tape, &hs)?;
        let h_dec = self.predict_all(tape, b, labels)?;
        let rnnt = self.joint_lattice(tape, b, fused, h_dec)?;
        let (mut ctc_m, mut ctc_e) = (None, None);
        if self.config.variant.has_ctc_heads() {
            ctc_m = Some(self.ctc_head(tape, b, hs[0], Language::M)?);
            ctc_e = Some(self.ctc_head(tape, b, hs[1], Language::E)?);
        }
        Ok(Heads { rnnt, ctc_m, ctc_e })
    }

    /// Only the monolingual encoder and CTC head for `lang`.
    pub fn forward_ctc(&self, tape: &mut Tape, b: &mut Binder, x: &Tensor, lang: Language) -> Result<Var> {
        self.check_features(x)?;
        let xv = tape.constant(x.clone());
        let h = self.encode(tape, b, EncoderId::of(lang), xv)?;
        self.ctc_head(tape, b, h, lang)
    }

    /// Runs the encoders once and prepares everything decoding needs.
    pub fn encode_for_decoding(&self, x: &Tensor) -> Result<EncodedUtterance> {
        self.check_features(x)?;
        let mut tape = Tape::new();
        let mut b = Binder::new(&self.params);
        let xv = tape.constant(x.clone());
        let encs = self.encoders(&mut tape, &mut b, xv)?;
        let hs: Vec<Var> = encs.iter().map(|(_, v)| *v).collect();
        let fused = fuse(&mut tape, &hs)?;
        let w_enc = b.get(&mut tape, "joint.w_enc");
        let proj = tape.matmul(fused, w_enc)?;
        let (mut ctc_m, mut ctc_e) = (None, None);
        if self.config.variant.has_ctc_heads() {
            let m = self.ctc_head(&mut tape, &mut b, hs[0], Language::M)?;
            let e = self.ctc_head(&mut tape, &mut b, hs[1], Language::E)?;
            ctc_m = Some(CtcLogPosteriors::new(tape.value(m).clone())?);
            ctc_e = Some(CtcLogPosteriors::new(tape.value(e).clone())?);
        }
        Ok(EncodedUtterance {
            frames: x.shape()[0],
            enc_proj: tape.value(proj).clone(),
            ctc_m,
            ctc_e,
        })
    }

    pub fn decoder_initial_state(&self) -> DecoderState {
        DecoderState {
            hidden: vec![0.0; self.config.decoder_dim],
        }
    }

    /// One prediction-network step consuming `token` (a label or the start
    /// token). Returns the output `h_dec` and the next state.
    pub fn predict(&self, token: usize, state: &DecoderState) -> Result<(Vec<f64>, DecoderState)> {
        let c = &self.config;
        if token == 0 || token > c.start_token() {
            return Err(Error::InvalidLabel(token));
        }
        let emb = self.params.expect("dec.embed").row(token);
        let mut pre = matmul_raw(emb, self.params.expect("dec.w_in").data(), 1, c.embed_dim, c.decoder_dim);
        let rec = matmul_raw(
            &state.hidden,
            self.params.expect("dec.w_rec").data(),
            1,
            c.decoder_dim,
            c.decoder_dim,
        );
        let bias = self.params.expect("dec.b").data();
        for j in 0..c.decoder_dim {
            pre[j] = (pre[j] + rec[j] + bias[j]).tanh();
        }
        Ok((pre.clone(), DecoderState { hidden: pre }))
    }

    /// Prediction-network output after the start token and `prefix`.
    pub fn predict_prefix(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let (mut out, mut state) = self.predict(self.config.start_token(), &self.decoder_initial_state())?;
        for &tok in prefix {
            if tok == self.config.start_token() {
                return Err(Error::InvalidLabel(tok));
            }
            (out, state) = self.predict(tok, &state)?;
        }
        Ok(out)
    }

    /// `h_dec W_dec + b`, the decoder half of the joint pre-activation.
    pub fn project_decoder(&self, h_dec: &[f64]) -> Vec<f64> {
        let c = &self.config;
        let mut out = matmul_raw(h_dec, self.params.expect("joint.w_dec").data(), 1, c.decoder_dim, c.joint_dim);
        let b = self.params.expect("joint.b").data();
        out.iter_mut().zip(b).for_each(|(o, x)| *o += x);
        out
    }

    /// Joint log-distribution over blank and all units for one lattice cell.
    pub fn joint_logp(&self, enc_proj_row: &[f64], dec_proj: &[f64]) -> Vec<f64> {
        let c = &self.config;
        let hidden: Vec<f64> = enc_proj_row
            .iter()
            .zip(dec_proj)
            .map(|(a, b)| (a + b).tanh())
            .collect();
        let mut logits = matmul_raw(&hidden, self.params.expect("joint.w_out").data(), 1, c.joint_dim, c.output_dim());
        let b = self.params.expect("joint.b_out").data();
        logits.iter_mut().zip(b).for_each(|(o, x)| *o += x);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        logits.iter_mut().for_each(|v| *v -= lse);
        logits
    }
}

/// Elementwise sum of identically shaped tensors.
pub fn fuse(tape: &mut Tape, parts: &[Var]) -> Result<Var> {
    let (&first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("fusion of zero encoders".into()))?;
    rest.iter().try_fold(first, |acc, &p| tape.add(acc, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignments::{mask_labels, Vocabulary};
    use crate::losses::{ctc_loss, ls_loss, rnnt_loss, RnntLogPosteriors};
    use crate::numerics::grad_check;
    use crate::network::Checkpoint;

    fn tiny(variant: ModelVariant) -> ModelConfig {
        ModelConfig {
            variant,
            input_dim: 3,
            hidden_dim: 4,
            encoder_layers: 1,
            mixing: Mixing::Conv { window: 3 },
            embed_dim: 3,
            decoder_dim: 4,
            joint_dim: 5,
            vanilla_width_factor: 1.5,
            m_units: 2,
            e_units: 2,
        }
    }

    fn features(frames: usize, dim: usize, salt: f64) -> Tensor {
        let data = (0..frames * dim)
            .map(|i| ((i as f64 + salt) * 0.7).sin())
            .collect();
        Tensor::new(vec![frames, dim], data).unwrap()
    }

    fn encode_value(model: &Model, id: EncoderId, x: &Tensor) -> Tensor {
        let mut tape = Tape::new();
        let mut b = Binder::new(model.params());
        let xv = tape.constant(x.clone());
        let h = model.encode(&mut tape, &mut b, id, xv).unwrap();
        tape.value(h).clone()
    }

    #[test]
    fn zero_weights_and_input_give_zero_output() {
        for mixing in [Mixing::Conv { window: 3 }, Mixing::Recurrent] {
            let mut cfg = tiny(ModelVariant::Conditional);
            cfg.mixing = mixing;
            cfg.encoder_layers = 2;
            let mut model = Model::new(cfg, 1).unwrap();
            model.params_mut().tensors_mut().iter_mut().for_each(|t| t.data_mut().fill(0.0));
            let h = encode_value(&model, EncoderId::M, &Tensor::zeros(&[5, 3]));
            assert!(h.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn encoder_is_length_preserving() {
        for mixing in [Mixing::Conv { window: 5 }, Mixing::Recurrent] {
            let mut cfg = tiny(ModelVariant::Vanilla);
            cfg.mixing = mixing;
            let model = Model::new(cfg.clone(), 2).unwrap();
            for frames in 1..6 {
                let h = encode_value(&model, EncoderId::Shared, &features(frames, 3, 0.0));
                assert_eq!(h.shape(), &[frames, cfg.encoder_width()]);
            }
        }
    }

    #[test]
    fn feature_dim_mismatch_is_rejected() {
        let model = Model::new(tiny(ModelVariant::Conditional), 0).unwrap();
        assert!(model.encode_for_decoding(&Tensor::zeros(&[4, 2])).is_err());
    }

    #[test]
    fn encode_gradients_match_finite_differences() {
        for mixing in [Mixing::Conv { window: 3 }, Mixing::Recurrent] {
            let mut cfg = tiny(ModelVariant::Conditional);
            cfg.mixing = mixing;
            cfg.encoder_layers = 2;
            let model = Model::new(cfg, 3).unwrap();
            let x = features(4, 3, 1.0);
            let probe = features(4, 4, 2.0);
            let err = grad_check(
                |tape, vars| {
                    let mut b = Binder::bound(model.params(), vars);
                    let xv = tape.constant(x.clone());
                    let h = model.encode(tape, &mut b, EncoderId::E, xv)?;
                    let p = tape.constant(probe.clone());
                    let hp = tape.mul(h, p)?;
                    Ok(tape.sum(hp))
                },
                model.params().tensors(),
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{mixing:?}: {err}");
        }
    }

    #[test]
    fn ctc_head_rows_are_distributions() {
        let model = Model::new(tiny(ModelVariant::Conditional), 4).unwrap();
        let enc = model.encode_for_decoding(&features(6, 3, 0.5)).unwrap();
        for post in [enc.ctc_m.unwrap(), enc.ctc_e.unwrap()] {
            assert_eq!(post.classes(), 3);
            for t in 0..post.frames() {
                let s: f64 = post.row(t).iter().map(|v| v.exp()).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_logits_give_uniform_ctc_rows() {
        let mut model = Model::new(tiny(ModelVariant::Conditional), 4).unwrap();
        for name in ["ctc_m.w", "ctc_m.b"] {
            let i = model.params().index_of(name).unwrap();
            model.params_mut().tensors_mut()[i].data_mut().fill(0.0);
        }
        let post = model.encode_for_decoding(&features(3, 3, 0.0)).unwrap().ctc_m.unwrap();
        for t in 0..3 {
            assert!(post.row(t).iter().all(|v| (v + 3f64.ln()).abs() < 1e-12));
        }
    }

    #[test]
    fn fusion_adds_elementwise() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(&[1.0, 2.0]));
        let b = tape.constant(Tensor::vector(&[3.0, 4.0]));
        let c = tape.constant(Tensor::vector(&[1.0, 1.0]));
        let z = tape.constant(Tensor::vector(&[0.0, 0.0]));
        let ab = fuse(&mut tape, &[a, b]).unwrap();
        let ba = fuse(&mut tape, &[b, a]).unwrap();
        let abc = fuse(&mut tape, &[a, b, c]).unwrap();
        let az = fuse(&mut tape, &[a, z]).unwrap();
        assert_eq!(tape.value(ab).data(), &[4.0, 6.0]);
        assert_eq!(tape.value(ab).data(), tape.value(ba).data());
        assert_eq!(tape.value(abc).data(), &[5.0, 7.0]);
        assert_eq!(tape.value(az).data(), &[1.0, 2.0]);
        let bad = tape.constant(Tensor::vector(&[1.0]));
        assert!(fuse(&mut tape, &[a, bad]).is_err());
        assert!(fuse(&mut tape, &[]).is_err());
    }

    #[test]
    fn empty_prefix_is_start_token_through_one_step() {
        let model = Model::new(tiny(ModelVariant::Conditional), 5).unwrap();
        let c = model.config();
        let emb = model.params().expect("dec.embed").row(c.start_token());
        let w_in = model.params().expect("dec.w_in").data();
        let expected: Vec<f64> = matmul_raw(emb, w_in, 1, c.embed_dim, c.decoder_dim)
            .into_iter()
            .map(f64::tanh)
            .collect();
        assert_eq!(model.predict_prefix(&[]).unwrap(), expected);
        assert_eq!(model.predict_prefix(&[1, 3]).unwrap(), model.predict_prefix(&[1, 3]).unwrap());
        assert!(matches!(model.predict_prefix(&[0]), Err(Error::InvalidLabel(0))));
        assert!(model.predict_prefix(&[c.start_token()]).is_err());
    }

    #[test]
    fn joint_output_is_a_distribution_over_all_units() {
        let model = Model::new(tiny(ModelVariant::Conditional), 6).unwrap();
        let enc = model.encode_for_decoding(&features(2, 3, 0.0)).unwrap();
        let dec = model.project_decoder(&model.predict_prefix(&[2]).unwrap());
        let lp = model.joint_logp(enc.enc_proj.row(1), &dec);
        assert_eq!(lp.len(), 5);
        let s: f64 = lp.iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tape_lattice_matches_decoding_path() {
        for variant in ModelVariant::ALL {
            let model = Model::new(tiny(variant), 7).unwrap();
            let x = features(4, 3, 0.3);
            let labels = [1, 4, 2];
            let mut tape = Tape::new();
            let mut b = Binder::new(model.params());
            let heads = model.forward(&mut tape, &mut b, &x, &labels).unwrap();
            let lattice = RnntLogPosteriors::new(tape.value(heads.rnnt).clone()).unwrap();
            assert_eq!(lattice.tensor().shape(), &[4, 4, 5]);
            let enc = model.encode_for_decoding(&x).unwrap();
            for u in 0..=labels.len() {
                let dec = model.project_decoder(&model.predict_prefix(&labels[..u]).unwrap());
                for t in 0..4 {
                    let lp = model.joint_logp(enc.enc_proj.row(t), &dec);
                    for (k, v) in lp.iter().enumerate() {
                        let w = lattice.tensor().data()[(t * 4 + u) * 5 + k];
                        assert!((v - w).abs() < 1e-12, "{variant} t={t} u={u} k={k}");
                    }
                }
            }
            let loss = rnnt_loss(&mut tape, heads.rnnt, &labels).unwrap();
            assert!(tape.value(loss).item().is_finite());
        }
    }

    #[test]
    fn forward_head_contract_per_variant() {
        let x = features(3, 3, 0.0);
        for variant in ModelVariant::ALL {
            let model = Model::new(tiny(variant), 8).unwrap();
            let mut tape = Tape::new();
            let mut b = Binder::new(model.params());
            let heads = model.forward(&mut tape, &mut b, &x, &[2]).unwrap();
            assert_eq!(tape.shape(heads.rnnt), &[3, 2, 5]);
            assert_eq!(heads.ctc_m.is_some(), variant != ModelVariant::Vanilla);
            assert_eq!(heads.ctc_e.is_some(), variant != ModelVariant::Vanilla);
        }
        let vanilla = Model::new(tiny(ModelVariant::Vanilla), 8).unwrap();
        let mut tape = Tape::new();
        let mut b = Binder::new(vanilla.params());
        assert!(vanilla.forward_ctc(&mut tape, &mut b, &x, Language::M).is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let cfg = tiny(ModelVariant::ThreeEncoder);
        let a = Model::new(cfg.clone(), 9).unwrap();
        let b = Model::new(cfg.clone(), 9).unwrap();
        let c = Model::new(cfg, 10).unwrap();
        assert!(a.params().bit_identical(b.params()));
        assert!(!a.params().bit_identical(c.params()));
    }

    #[test]
    fn vanilla_parameter_count_is_within_ten_percent() {
        for mixing in [Mixing::Conv { window: 3 }, Mixing::Recurrent] {
            let mut cond = ModelConfig::toy(ModelVariant::Conditional, 8, 5, 5);
            cond.mixing = mixing;
            let mut van = cond.clone();
            van.variant = ModelVariant::Vanilla;
            let nc = Model::new(cond, 0).unwrap().num_parameters() as f64;
            let nv = Model::new(van, 0).unwrap().num_parameters() as f64;
            assert!((nv - nc).abs() / nc <= 0.10, "{mixing:?}: conditional {nc}, vanilla {nv}");
        }
    }

    #[test]
    fn checkpoint_round_trip_continues_identically() {
        let model = Model::new(tiny(ModelVariant::ConditionalLS), 11).unwrap();
        let fp = model.config().fingerprint();
        let bytes = Checkpoint::new(fp.clone(), model.params().clone()).to_bytes();
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        ck.verify(&fp).unwrap();
        let restored = Model::from_params(model.config().clone(), ck.params).unwrap();
        let s0 = model.decoder_initial_state();
        let (_, s1) = model.predict(model.config().start_token(), &s0).unwrap();
        let (a, _) = model.predict(3, &s1).unwrap();
        let (b, _) = restored.predict(3, &s1).unwrap();
        assert_eq!(a, b);
        let other = Model::new(tiny(ModelVariant::ThreeEncoder), 0).unwrap();
        assert!(Model::from_params(model.config().clone(), other.into_params()).is_err());
    }

    #[test]
    fn with_variant_only_within_architecture() {
        let model = Model::new(tiny(ModelVariant::Conditional), 0).unwrap();
        let ls = model.clone().with_variant(ModelVariant::ConditionalLS).unwrap();
        assert_eq!(ls.variant(), ModelVariant::ConditionalLS);
        assert!(model.with_variant(ModelVariant::Vanilla).is_err());
    }

    #[test]
    fn full_conditional_ls_loss_gradients() {
        let cfg = ModelConfig {
            hidden_dim: 4,
            ..tiny(ModelVariant::ConditionalLS)
        };
        let model = Model::new(cfg, 12).unwrap();
        let vocab = Vocabulary::new(&["m1", "m2"], &["e1", "e2"]).unwrap();
        let x = features(3, 3, 0.9);
        let y = [1, 3];
        let local = |lang| -> Vec<usize> {
            mask_labels(&y, lang, &vocab)
                .iter()
                .map(|&id| vocab.to_local(id, lang).unwrap())
                .collect()
        };
        let (ym, ye) = (local(Language::M), local(Language::E));
        let err = grad_check(
            |tape, vars| {
                let mut b = Binder::bound(model.params(), vars);
                let heads = model.forward(tape, &mut b, &x, &y)?;
                let r = rnnt_loss(tape, heads.rnnt, &y)?;
                let m = ctc_loss(tape, heads.ctc_m.unwrap(), &ym)?;
                let e = ctc_loss(tape, heads.ctc_e.unwrap(), &ye)?;
                ls_loss(tape, r, m, e, 0.5)
            },
            model.params().tensors(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
