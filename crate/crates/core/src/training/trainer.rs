use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{FineTuneData, TrainingConfig};
use super::optim::Optimizer;
use crate::alignments::{mask_labels, Language, Vocabulary};
use crate::data::{Corpus, Partition, Split, Subset, Utterance};
use crate::error::{Error, Result};
use crate::losses::{ctc_loss, ls_loss, rnnt_loss};
use crate::network::{Binder, Checkpoint, Model, ModelConfig, ParamStore};
use crate::numerics::{Tape, Tensor, Var};

/// Pre-training trains the monolingual encoders and CTC heads; fine-tuning
/// trains the whole network on the bilingual objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl Stage {
    fn code(self) -> u64 {
        match self {
            Stage::Pretrain => 0,
            Stage::Finetune => 1,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
        })
    }
}

/// Training and validation utterances for both stages.
#[derive(Debug, Clone, Copy)]
pub struct TrainSets<'a> {
    pub vocab: &'a Vocabulary,
    pub train_m: &'a [Utterance],
    pub train_e: &'a [Utterance],
    pub train_cs: &'a [Utterance],
    pub dev_m: &'a [Utterance],
    pub dev_e: &'a [Utterance],
    pub dev_cs: &'a [Utterance],
}

impl<'a> TrainSets<'a> {
    pub fn from_corpus(corpus: &'a Corpus) -> Self {
        let s = |p, sub| corpus.split(Split::new(p, sub));
        TrainSets {
            vocab: &corpus.vocab,
            train_m: s(Partition::Train, Subset::M),
            train_e: s(Partition::Train, Subset::E),
            train_cs: s(Partition::Train, Subset::Cs),
            dev_m: s(Partition::Dev, Subset::M),
            dev_e: s(Partition::Dev, Subset::E),
            dev_cs: s(Partition::Dev, Subset::Cs),
        }
    }

    fn train_mono(&self, lang: Language) -> &'a [Utterance] {
        match lang {
            Language::M => self.train_m,
            Language::E => self.train_e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Item {
    Mono(Language, usize),
    Cs(usize),
}

/// Per-utterance loss terms; absent terms are `None`.
#[derive(Debug, Clone, Copy, Default)]
struct Terms {
    rnnt: Option<f64>,
    ctc_m: Option<f64>,
    ctc_e: Option<f64>,
    loss: f64,
}

/// Validation loss recorded after epoch `epoch` (0 = before training).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub epoch: usize,
    pub loss: f64,
}

/// Resumable training loop for one stage.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    config: TrainingConfig,
    stage: Stage,
    optimizer: Optimizer,
    epoch: usize,
    cursor: usize,
    validations: Vec<Validation>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainingConfig, stage: Stage) -> Result<Self> {
        config.validate()?;
        if stage == Stage::Pretrain && !model.variant().has_ctc_heads() {
            return Err(Error::UnsupportedVariant(format!(
                "{} has no monolingual CTC heads to pre-train",
                model.variant()
            )));
        }
        let optimizer = Optimizer::new(config.optimizer, model.params());
        Ok(Trainer {
            model,
            config,
            stage,
            optimizer,
            epoch: 0,
            cursor: 0,
            validations: Vec::new(),
        })
    }

    /// Continues a run saved with [`Trainer::checkpoint`].
    pub fn resume(model_config: ModelConfig, config: TrainingConfig, stage: Stage, ck: Checkpoint) -> Result<Self> {
        ck.verify(&model_config.fingerprint())?;
        let model = Model::from_params(model_config, ck.params)?;
        let mut t = Trainer::new(model, config, stage)?;
        let state = &ck.state;
        let get = |key: &str| -> Result<&Tensor> {
            state
                .get(key)
                .ok_or_else(|| Error::Checkpoint(format!("missing training state `{key}`")))
        };
        if get("stage")?.item() as u64 != stage.code() {
            return Err(Error::Checkpoint(format!("checkpoint was not saved during {stage}")));
        }
        if get("seed")?.item().to_bits() != t.config.seed {
            return Err(Error::Checkpoint("checkpoint was saved with a different seed".into()));
        }
        t.epoch = get("epoch")?.item() as usize;
        t.cursor = get("cursor")?.item() as usize;
        t.optimizer = Optimizer::from_state_blocks(t.config.optimizer, t.model.params(), state)?;
        Ok(t)
    }

    /// Parameters plus everything needed to resume.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(self.model.config().fingerprint(), self.model.params().clone());
        let mut state = ParamStore::new();
        state.insert("stage", Tensor::scalar(self.stage.code() as f64))?;
        state.insert("epoch", Tensor::scalar(self.epoch as f64))?;
        state.insert("cursor", Tensor::scalar(self.cursor as f64))?;
        state.insert("seed", Tensor::scalar(f64::from_bits(self.config.seed)))?;
        for (name, t) in self.optimizer.state_blocks(self.model.params())?.iter() {
            state.insert(name, t.clone())?;
        }
        ck.state = state;
        Ok(ck)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn steps(&self) -> u64 {
        self.optimizer.step
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn validations(&self) -> &[Validation] {
        &self.validations
    }

    /// Trains until all epochs are done, or until `max_steps` total updates.
    pub fn run(&mut self, sets: &TrainSets, log: &mut dyn Write, max_steps: Option<u64>) -> Result<()> {
        self.check_languages(sets)?;
        if self.epoch == 0 && self.cursor == 0 && self.optimizer.step == 0 && self.config.epochs > 0 {
            self.validate(sets, log)?;
        }
        while !self.finished() {
            let plan = self.plan(sets, self.epoch)?;
            while self.cursor < plan.len() {
                if max_steps.is_some_and(|m| self.optimizer.step >= m) {
                    return Ok(());
                }
                self.train_batch(sets, &plan[self.cursor], log)?;
                self.cursor += 1;
            }
            self.epoch += 1;
            self.cursor = 0;
            self.validate(sets, log)?;
        }
        Ok(())
    }

    fn check_languages(&self, sets: &TrainSets) -> Result<()> {
        let uses_mono = self.stage == Stage::Pretrain
            || self.config.fine_tune_data == FineTuneData::CsPlusMono;
        if !uses_mono {
            return Ok(());
        }
        let groups = [
            (Language::M, sets.train_m),
            (Language::M, sets.dev_m),
            (Language::E, sets.train_e),
            (Language::E, sets.dev_e),
        ];
        for (lang, utts) in groups {
            for u in utts {
                if let Some(&bad) = u.transcript.iter().find(|&&id| sets.vocab.language(id) != Some(lang)) {
                    return Err(Error::LanguageViolation {
                        utt: u.id.clone(),
                        unit: sets.vocab.surface(bad).unwrap_or("<unknown>").to_string(),
                        expected: lang,
                    });
                }
            }
        }
        Ok(())
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream((self.stage.code() << 32) | epoch as u64);
        rng
    }

    /// Batches of one epoch; a pure function of seed, stage and epoch.
    fn plan(&self, sets: &TrainSets, epoch: usize) -> Result<Vec<Vec<Item>>> {
        let mut rng = self.epoch_rng(epoch);
        let bs = self.config.batch_size;
        let shuffled = |rng: &mut ChaCha8Rng, n: usize| {
            let mut v: Vec<usize> = (0..n).collect();
            v.shuffle(rng);
            v
        };
        match self.stage {
            Stage::Pretrain => {
                let mut items: Vec<Item> = (0..sets.train_m.len())
                    .map(|i| Item::Mono(Language::M, i))
                    .chain((0..sets.train_e.len()).map(|i| Item::Mono(Language::E, i)))
                    .collect();
                if items.is_empty() {
                    return Err(Error::Config("pre-training needs monolingual training data".into()));
                }
                items.shuffle(&mut rng);
                Ok(items.chunks(bs).map(<[Item]>::to_vec).collect())
            }
            Stage::Finetune => {
                let cs = shuffled(&mut rng, sets.train_cs.len());
                let m = shuffled(&mut rng, sets.train_m.len());
                let e = shuffled(&mut rng, sets.train_e.len());
                let with_mono = self.config.fine_tune_data == FineTuneData::CsPlusMono;
                let total = cs.len() + if with_mono { m.len() + e.len() } else { 0 };
                if total == 0 {
                    return Err(Error::Config("fine-tuning needs training data".into()));
                }
                let mut pos = [0usize; 3];
                let mut batches = Vec::with_capacity(total.div_ceil(bs));
                for _ in 0..total.div_ceil(bs) {
                    let mut source = 0;
                    if with_mono && rng.gen::<f64>() < self.config.mono_mix_ratio {
                        source = if rng.gen_bool(0.5) { 1 } else { 2 };
                    }
                    let order = [&cs, &m, &e];
                    if order[source].is_empty() {
                        source = (0..3).find(|&s| !order[s].is_empty()).expect("total > 0");
                    }
                    let pool = order[source];
                    let batch = (0..bs.min(pool.len()))
                        .map(|k| {
                            let i = pool[(pos[source] + k) % pool.len()];
                            match source {
                                0 => Item::Cs(i),
                                1 => Item::Mono(Language::M, i),
                                _ => Item::Mono(Language::E, i),
                            }
                        })
                        .collect();
                    pos[source] += bs.min(pool.len());
                    batches.push(batch);
                }
                Ok(batches)
            }
        }
    }

    fn utterance<'s>(&self, sets: &TrainSets<'s>, item: Item) -> &'s Utterance {
        match item {
            Item::Mono(lang, i) => &sets.train_mono(lang)[i],
            Item::Cs(i) => &sets.train_cs[i],
        }
    }

    fn local_labels(vocab: &Vocabulary, y: &[usize], lang: Language) -> Vec<usize> {
        mask_labels(y, lang, vocab)
            .iter()
            .map(|&id| vocab.to_local(id, lang).expect("masked labels belong to the head"))
            .collect()
    }

    /// Builds the stage objective for one utterance on `tape`.
    fn objective(
        &self,
        tape: &mut Tape,
        b: &mut Binder,
        vocab: &Vocabulary,
        utt: &Utterance,
        mono: Option<Language>,
    ) -> Result<(Var, Terms)> {
        let x = &utt.features;
        let y = &utt.transcript;
        match self.stage {
            Stage::Pretrain => {
                let lang = mono.expect("pre-training items are monolingual");
                let logp = self.model.forward_ctc(tape, b, x, lang)?;
                let loss = ctc_loss(tape, logp, &Self::local_labels(vocab, y, lang))?;
                let v = tape.value(loss).item();
                let mut terms = Terms { loss: v, ..Terms::default() };
                match lang {
                    Language::M => terms.ctc_m = Some(v),
                    Language::E => terms.ctc_e = Some(v),
                }
                Ok((loss, terms))
            }
            Stage::Finetune => {
                let heads = self.model.forward(tape, b, x, y)?;
                let rnnt = rnnt_loss(tape, heads.rnnt, y)?;
                let r = tape.value(rnnt).item();
                if !self.model.variant().uses_ls_loss() {
                    let terms = Terms { rnnt: Some(r), loss: r, ..Terms::default() };
                    return Ok((rnnt, terms));
                }
                let (hm, he) = (heads.ctc_m.expect("ctc heads"), heads.ctc_e.expect("ctc heads"));
                let cm = ctc_loss(tape, hm, &Self::local_labels(vocab, y, Language::M))?;
                let ce = ctc_loss(tape, he, &Self::local_labels(vocab, y, Language::E))?;
                let loss = ls_loss(tape, rnnt, cm, ce, self.config.lambda)?;
                let terms = Terms {
                    rnnt: Some(r),
                    ctc_m: Some(tape.value(cm).item()),
                    ctc_e: Some(tape.value(ce).item()),
                    loss: tape.value(loss).item(),
                };
                Ok((loss, terms))
            }
        }
    }

    fn train_batch(&mut self, sets: &TrainSets, batch: &[Item], log: &mut dyn Write) -> Result<()> {
        let mut grads = self.model.params().zeros_like();
        let scale = 1.0 / batch.len() as f64;
        let mut terms = Vec::with_capacity(batch.len());
        for &item in batch {
            let utt = self.utterance(sets, item);
            let mono = match item {
                Item::Mono(lang, _) => Some(lang),
                Item::Cs(_) => None,
            };
            let mut tape = Tape::new();
            let mut b = Binder::new(self.model.params());
            let (loss, t) = self.objective(&mut tape, &mut b, sets.vocab, utt, mono)?;
            tape.backward(loss)?;
            b.accumulate_grads(&tape, &mut grads, scale);
            terms.push(t);
        }
        let lr = self.config.schedule.lr(self.config.learning_rate, self.optimizer.step + 1);
        self.optimizer.apply(self.model.params_mut(), &mut grads, lr)?;
        let mean = |f: fn(&Terms) -> Option<f64>| -> String {
            let vals: Vec<f64> = terms.iter().filter_map(f).collect();
            if vals.is_empty() {
                "-".to_string()
            } else {
                format!("{:.6}", vals.iter().sum::<f64>() / vals.len() as f64)
            }
        };
        writeln!(
            log,
            "step={} epoch={} rnnt={} ctc_m={} ctc_e={} loss={} lr={:.6e}",
            self.optimizer.step,
            self.epoch + 1,
            mean(|t| t.rnnt),
            mean(|t| t.ctc_m),
            mean(|t| t.ctc_e),
            mean(|t| Some(t.loss)),
            lr
        )
        .map_err(|e| Error::io("training log", e))
    }

    /// Mean stage objective over the development utterances.
    pub fn validation_loss(&self, sets: &TrainSets) -> Result<f64> {
        let items: Vec<(&Utterance, Option<Language>)> = match self.stage {
            Stage::Pretrain => sets
                .dev_m
                .iter()
                .map(|u| (u, Some(Language::M)))
                .chain(sets.dev_e.iter().map(|u| (u, Some(Language::E))))
                .collect(),
            Stage::Finetune => sets.dev_cs.iter().map(|u| (u, None)).collect(),
        };
        if items.is_empty() {
            return Ok(f64::NAN);
        }
        let mut total = 0.0;
        for (utt, mono) in &items {
            let mut tape = Tape::new();
            let mut b = Binder::new(self.model.params());
            total += self.objective(&mut tape, &mut b, sets.vocab, utt, *mono)?.1.loss;
        }
        Ok(total / items.len() as f64)
    }

    fn validate(&mut self, sets: &TrainSets, log: &mut dyn Write) -> Result<()> {
        let loss = self.validation_loss(sets)?;
        self.validations.push(Validation { epoch: self.epoch, loss });
        writeln!(log, "epoch={} valid_loss={:.6}", self.epoch, loss).map_err(|e| Error::io("training log", e))
    }
}

/// Monolingual CTC pre-training of the encoders and their heads.
pub fn pretrain(model: Model, sets: &TrainSets, config: &TrainingConfig, log: &mut dyn Write) -> Result<Model> {
    let mut t = Trainer::new(model, config.clone(), Stage::Pretrain)?;
    t.run(sets, log, None)?;
    Ok(t.into_model())
}

/// Fine-tuning of the whole network on the variant's bilingual objective.
pub fn finetune(model: Model, sets: &TrainSets, config: &TrainingConfig, log: &mut dyn Write) -> Result<Model> {
    let mut t = Trainer::new(model, config.clone(), Stage::Finetune)?;
    t.run(sets, log, None)?;
    Ok(t.into_model())
}
