use std::io;

use super::*;
use crate::data::{generate, Corpus, CorpusSpec};
use crate::error::Error;
use crate::network::{Checkpoint, Model, ModelConfig, ModelVariant};

fn corpus() -> Corpus {
    generate(&CorpusSpec {
        train_count: 10,
        dev_count: 3,
        test_count: 1,
        ..CorpusSpec::default()
    })
    .unwrap()
}

fn small(variant: ModelVariant) -> ModelConfig {
    ModelConfig {
        hidden_dim: 8,
        embed_dim: 4,
        decoder_dim: 8,
        joint_dim: 8,
        ..ModelConfig::toy(variant, 8, 5, 5)
    }
}

fn config() -> TrainingConfig {
    TrainingConfig {
        epochs: 2,
        batch_size: 4,
        seed: 5,
        ..TrainingConfig::default()
    }
}

fn trained(variant: ModelVariant, cfg: &TrainingConfig, stage: Stage, log: &mut Vec<u8>) -> Model {
    let c = corpus();
    let sets = TrainSets::from_corpus(&c);
    let model = Model::new(small(variant), 3).unwrap();
    let mut t = Trainer::new(model, cfg.clone(), stage).unwrap();
    t.run(&sets, log, None).unwrap();
    t.into_model()
}

#[test]
fn zero_epochs_returns_initialisation() {
    let c = corpus();
    let sets = TrainSets::from_corpus(&c);
    let init = Model::new(small(ModelVariant::Conditional), 3).unwrap();
    let cfg = TrainingConfig { epochs: 0, ..config() };
    let out = pretrain(init.clone(), &sets, &cfg, &mut io::sink()).unwrap();
    assert!(out.params().bit_identical(init.params()));
}

#[test]
fn same_seed_gives_bit_identical_models() {
    for stage in [Stage::Pretrain, Stage::Finetune] {
        let a = trained(ModelVariant::ConditionalLS, &config(), stage, &mut Vec::new());
        let b = trained(ModelVariant::ConditionalLS, &config(), stage, &mut Vec::new());
        assert!(a.params().bit_identical(b.params()), "{stage}");
    }
}

#[test]
fn lambda_one_reproduces_transducer_only_training() {
    let cfg = TrainingConfig { lambda: 1.0, ..config() };
    let mut log_a = Vec::new();
    let mut log_b = Vec::new();
    let a = trained(ModelVariant::Conditional, &cfg, Stage::Finetune, &mut log_a);
    let b = trained(ModelVariant::ConditionalLS, &cfg, Stage::Finetune, &mut log_b);
    assert!(a.params().bit_identical(b.params()));
    let column = |log: &[u8], key: &str| -> Vec<String> {
        String::from_utf8_lossy(log)
            .lines()
            .filter(|l| l.starts_with("step="))
            .map(|l| l.split(' ').find(|f| f.starts_with(key)).unwrap().to_string())
            .collect()
    };
    assert_eq!(column(&log_a, "rnnt="), column(&log_b, "rnnt="));
    assert_eq!(column(&log_a, "loss="), column(&log_b, "loss="));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let c = corpus();
    let sets = TrainSets::from_corpus(&c);
    let mcfg = small(ModelVariant::ConditionalLS);
    let cfg = config();
    let mut full_log = Vec::new();
    let mut full = Trainer::new(Model::new(mcfg.clone(), 3).unwrap(), cfg.clone(), Stage::Finetune).unwrap();
    full.run(&sets, &mut full_log, None).unwrap();

    let mut log = Vec::new();
    let mut first = Trainer::new(Model::new(mcfg.clone(), 3).unwrap(), cfg.clone(), Stage::Finetune).unwrap();
    first.run(&sets, &mut log, Some(3)).unwrap();
    assert!(!first.finished());
    let bytes = first.checkpoint().unwrap().to_bytes();
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    let mut second = Trainer::resume(mcfg, cfg, Stage::Finetune, ck).unwrap();
    second.run(&sets, &mut log, None).unwrap();
    assert!(second.model().params().bit_identical(full.model().params()));
    assert_eq!(log, full_log);
}

#[test]
fn resume_rejects_other_stage_and_fingerprint() {
    let model = Model::new(small(ModelVariant::Conditional), 3).unwrap();
    let t = Trainer::new(model, config(), Stage::Pretrain).unwrap();
    let ck = t.checkpoint().unwrap();
    let cfg = small(ModelVariant::Conditional);
    assert!(Trainer::resume(cfg, config(), Stage::Finetune, ck.clone()).is_err());
    let three = small(ModelVariant::ThreeEncoder);
    assert!(matches!(
        Trainer::resume(three, config(), Stage::Pretrain, ck),
        Err(Error::FingerprintMismatch { .. })
    ));
}

#[test]
fn pretraining_touches_only_encoders_and_heads() {
    let init = Model::new(small(ModelVariant::Conditional), 3).unwrap();
    let out = trained(ModelVariant::Conditional, &config(), Stage::Pretrain, &mut Vec::new());
    for ((name, a), b) in init.params().iter().zip(out.params().tensors()) {
        let same = a.data() == b.data();
        let trainable = name.starts_with("enc") || name.starts_with("ctc");
        assert_eq!(same, !trainable, "{name}");
    }
}

#[test]
fn vanilla_cannot_be_pretrained() {
    let model = Model::new(small(ModelVariant::Vanilla), 0).unwrap();
    assert!(matches!(
        Trainer::new(model, config(), Stage::Pretrain),
        Err(Error::UnsupportedVariant(_))
    ));
}

#[test]
fn language_violation_is_reported() {
    let mut c = corpus();
    let split = crate::data::Split::new(crate::data::Partition::Train, crate::data::Subset::M);
    let utts = c.splits.get_mut(&split).unwrap();
    let mut ids = utts[2].transcript.to_vec();
    ids[0] = 7;
    utts[2].transcript = crate::alignments::LabelSeq::new(ids).unwrap();
    let sets = TrainSets::from_corpus(&c);
    let model = Model::new(small(ModelVariant::Conditional), 0).unwrap();
    let err = pretrain(model, &sets, &config(), &mut io::sink()).unwrap_err();
    assert!(
        matches!(&err, Error::LanguageViolation { utt, unit, .. } if utt == "train-m-00002" && unit == "e2"),
        "{err}"
    );
}

#[test]
fn mixed_fine_tuning_logs_mono_batches_with_empty_other_target() {
    let mut log = Vec::new();
    trained(ModelVariant::ConditionalLS, &config(), Stage::Finetune, &mut log);
    let text = String::from_utf8(log).unwrap();
    let steps: Vec<&str> = text.lines().filter(|l| l.starts_with("step=")).collect();
    assert_eq!(steps.len(), 2 * 30usize.div_ceil(4));
    assert!(steps.iter().all(|l| l.contains("ctc_m=") && l.contains("lr=")));
    let cs_only = TrainingConfig { fine_tune_data: FineTuneData::CsOnly, ..config() };
    let mut log = Vec::new();
    trained(ModelVariant::ConditionalLS, &cs_only, Stage::Finetune, &mut log);
    let steps = String::from_utf8(log).unwrap().lines().filter(|l| l.starts_with("step=")).count();
    assert_eq!(steps, 2 * 10usize.div_ceil(4));
}

#[test]
fn best_validation_loss_improves_on_initial() {
    let c = corpus();
    let sets = TrainSets::from_corpus(&c);
    let cfg = TrainingConfig { epochs: 4, ..config() };
    let mut t = Trainer::new(Model::new(small(ModelVariant::Conditional), 3).unwrap(), cfg, Stage::Pretrain).unwrap();
    t.run(&sets, &mut io::sink(), None).unwrap();
    let v = t.validations();
    assert_eq!(v.len(), 5);
    let best = v[1..].iter().map(|x| x.loss).fold(f64::INFINITY, f64::min);
    assert!(best <= v[0].loss, "{v:?}");
}
