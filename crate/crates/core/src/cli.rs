//! Command-line front end. Every flag maps to a [`RunConfig`] key; flags are
//! applied on top of `--config`.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::alignments::Language;
use crate::config::{model_config_text, parse_model_config, MixingKind, RunConfig, ScheduleKind};
use crate::data::{generate, load_corpus, load_split, write_corpus, CorpusSpec, Split, Utterance};
use crate::decoding::rnnt_decode;
use crate::diagnostics::{gradient_suite, oracle_suite};
use crate::error::Error;
use crate::keyvalue::KeyValues;
use crate::metrics::{dump_frame_posteriors, eval_language_separation, evaluate, EvalReport, SeparationReport};
use crate::network::{Checkpoint, Mixing, Model, ModelConfig, ModelVariant};
use crate::training::{FineTuneData, OptimizerKind, Stage, TrainSets, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const MODEL_FILE: &str = "model.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "train.log";

pub const ORACLE_INSTANCES: usize = 200;
pub const ORACLE_TOLERANCE: f64 = 1e-6;
pub const GRAD_CASES: usize = 20;
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "condrnnt", version, about = "Bilingual conditional transducer toolkit", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic code-switched corpus.
    GenData(GenDataArgs),
    /// Pre-train the monolingual encoders with their CTC heads.
    Pretrain(TrainArgs),
    /// Fine-tune the full transducer.
    Finetune(TrainArgs),
    /// Beam-search decode a split and print one hypothesis per utterance.
    Decode(DecodeArgs),
    /// Print MER/CER/WER for a split.
    Eval(DecodeArgs),
    /// Print per-encoder language separation error and insertion rates.
    EvalLs(DecodeArgs),
    /// Write per-frame blank/non-blank posteriors of both encoders as CSV.
    DumpPosteriors(DecodeArgs),
    /// Finite-difference check of both losses and a tiny full model.
    Gradcheck(CheckArgs),
    /// Compare both lattice losses with brute-force enumeration.
    OracleCheck(CheckArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Key = value file applied before the command-line flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    /// `default` or a corpus spec file.
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct ModelFlags {
    #[arg(long)]
    variant: Option<ModelVariant>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    encoder_layers: Option<usize>,
    #[arg(long)]
    encoder_mixing: Option<MixingKind>,
    #[arg(long)]
    conv_window: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    decoder_dim: Option<usize>,
    #[arg(long)]
    joint_dim: Option<usize>,
    #[arg(long)]
    vanilla_width_factor: Option<f64>,
}

#[derive(Args, Debug)]
struct OptimFlags {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    #[arg(long)]
    warmup_steps: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    fine_tune_data: Option<FineTuneData>,
    #[arg(long)]
    mono_mix_ratio: Option<f64>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    grad_clip: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus directory written by `gen-data`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model directory to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pre-trained model directory to start from.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    optim: OptimFlags,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model directory written by `pretrain` or `finetune`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Corpus directory; defaults to the one the model was trained on.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Split name such as `test-cs`.
    #[arg(long)]
    split: Option<String>,
    /// Restrict to a single utterance id.
    #[arg(long)]
    utt: Option<String>,
    #[arg(long)]
    beam: Option<usize>,
    /// Output file (dump-posteriors only).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Collects flags as `key = value` lines so they go through the config parser.
#[derive(Default)]
struct Overrides(String);

impl Overrides {
    fn put<T: Display>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.0.push_str(&format!("{key} = {v}\n"));
        }
    }

    fn put_path(&mut self, key: &str, value: &Option<PathBuf>) {
        self.put(key, &value.as_ref().map(|p| p.display()));
    }

    fn flag(&mut self, key: &str, set: bool) {
        if set {
            self.0.push_str(&format!("{key} = true\n"));
        }
    }

    fn common(&mut self, c: &Common) {
        self.put("seed", &c.seed);
    }

    fn model(&mut self, m: &ModelFlags) {
        self.put("variant", &m.variant);
        self.put("hidden_dim", &m.hidden_dim);
        self.put("encoder_layers", &m.encoder_layers);
        self.put("encoder_mixing", &m.encoder_mixing);
        self.put("conv_window", &m.conv_window);
        self.put("embed_dim", &m.embed_dim);
        self.put("decoder_dim", &m.decoder_dim);
        self.put("joint_dim", &m.joint_dim);
        self.put("vanilla_width_factor", &m.vanilla_width_factor);
    }

    fn optim(&mut self, o: &OptimFlags) {
        self.put("lambda", &o.lambda);
        self.put("learning_rate", &o.learning_rate);
        self.put("schedule", &o.schedule);
        self.put("warmup_steps", &o.warmup_steps);
        self.put("epochs", &o.epochs);
        self.put("batch_size", &o.batch_size);
        self.put("fine_tune_data", &o.fine_tune_data);
        self.put("mono_mix_ratio", &o.mono_mix_ratio);
        self.put("optimizer", &o.optimizer);
        self.put("beta1", &o.beta1);
        self.put("beta2", &o.beta2);
        self.put("grad_clip", &o.grad_clip);
    }
}

struct Resolved {
    run: RunConfig,
    /// Whether `seed` was given in the config file or on the command line.
    explicit_seed: bool,
}

fn resolve(config: &Option<PathBuf>, overrides: Overrides) -> Outcome<Resolved> {
    let mut run = RunConfig::default();
    let mut explicit_seed = overrides.0.lines().any(|l| l.starts_with("seed ="));
    if let Some(path) = config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        explicit_seed |= KeyValues::parse(&text, path)?.take("seed").is_some();
        run.merge_text(&text, path)?;
    }
    run.merge_text(&overrides.0, Path::new("<command line>"))
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(Resolved { run, explicit_seed })
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Outcome<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Failure::Usage(format!("missing required option --{flag}")))
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force` is set.
fn prepare_out_dir(dir: &Path, force: bool) -> Outcome<()> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() && !force {
            return Err(Failure::Runtime(Error::Config(format!(
                "output directory {} is not empty; pass --force to reuse it",
                dir.display()
            ))));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Outcome<()> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(Error::io(path, e)))
}

/// Parameters and architecture stored in a model directory.
pub fn load_model_dir(dir: &Path) -> crate::Result<Model> {
    let path = dir.join(MODEL_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let config = parse_model_config(&text, &path)?;
    let ck = Checkpoint::load_verified(&dir.join(CHECKPOINT_FILE), &config.fingerprint())?;
    Model::from_params(config, ck.params)
}

fn save_model_dir(dir: &Path, ck: &Checkpoint, model: &ModelConfig) -> Outcome<()> {
    ck.save(&dir.join(CHECKPOINT_FILE))?;
    write_file(&dir.join(MODEL_FILE), model_config_text(model))
}

fn sync_architecture(run: &mut RunConfig, c: &ModelConfig) {
    run.variant = c.variant;
    run.hidden_dim = c.hidden_dim;
    run.encoder_layers = c.encoder_layers;
    run.embed_dim = c.embed_dim;
    run.decoder_dim = c.decoder_dim;
    run.joint_dim = c.joint_dim;
    run.vanilla_width_factor = c.vanilla_width_factor;
    match c.mixing {
        Mixing::Conv { window } => {
            run.encoder_mixing = MixingKind::Conv;
            run.conv_window = window;
        }
        Mixing::Recurrent => run.encoder_mixing = MixingKind::Recurrent,
    }
}

fn gen_data(args: &GenDataArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let mut ov = Overrides::default();
    ov.common(&args.common);
    ov.put("spec", &args.spec);
    ov.put_path("out", &args.out);
    ov.flag("force", args.force);
    let Resolved { run, explicit_seed } = resolve(&args.common.config, ov)?;
    let out = required(&run.out, "out")?.clone();
    let mut spec = match run.spec.as_deref() {
        None | Some("default") => CorpusSpec::default(),
        Some(path) => {
            let path = Path::new(path);
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            CorpusSpec::from_text(&text, path)?
        }
    };
    if explicit_seed {
        spec.seed = run.seed;
    }
    spec.validate()?;
    prepare_out_dir(&out, run.force)?;
    let corpus = generate(&spec)?;
    write_corpus(&corpus, &spec.to_text(), &out)?;
    write_file(&out.join(CONFIG_FILE), run.to_text())?;
    let total: usize = corpus.splits.values().map(Vec::len).sum();
    writeln!(stdout, "wrote {total} utterances to {} (seed {})", out.display(), spec.seed).map_err(io_out)?;
    Ok(())
}

fn io_out(e: std::io::Error) -> Failure {
    Failure::Runtime(Error::io("<stdout>", e))
}

fn train(args: &TrainArgs, stage: Stage, stdout: &mut dyn Write) -> Outcome<()> {
    let mut ov = Overrides::default();
    ov.common(&args.common);
    ov.put_path("data", &args.data);
    ov.put_path("out", &args.out);
    ov.put_path("init", &args.init);
    ov.flag("force", args.force);
    ov.model(&args.model);
    ov.optim(&args.optim);
    let Resolved { mut run, .. } = resolve(&args.common.config, ov)?;
    let data = required(&run.data, "data")?.clone();
    let out = required(&run.out, "out")?.clone();
    let training = run.training()?;

    let corpus = load_corpus(&data)?;
    let input_dim = corpus
        .splits
        .values()
        .flatten()
        .next()
        .map(|u| u.features.shape()[1])
        .ok_or_else(|| Error::Config(format!("corpus {} is empty", data.display())))?;
    let (m, e) = (corpus.vocab.size_of(Language::M), corpus.vocab.size_of(Language::E));

    let model = match (stage, &run.init) {
        (Stage::Finetune, Some(init)) => load_model_dir(init)?.with_variant(run.variant)?,
        (Stage::Finetune, None) if run.variant != ModelVariant::Vanilla => {
            return Err(Failure::Usage(format!(
                "finetune of {} needs --init with a pre-trained model directory",
                run.variant
            )))
        }
        _ => Model::new(run.model_config(input_dim, m, e)?, training.seed)?,
    };
    if model.config().input_dim != input_dim
        || model.config().m_units != m
        || model.config().e_units != e
    {
        return Err(Failure::Runtime(Error::Config(format!(
            "model expects {}-dim features and {}+{} units, corpus has {input_dim} and {m}+{e}",
            model.config().input_dim,
            model.config().m_units,
            model.config().e_units
        ))));
    }
    sync_architecture(&mut run, model.config());

    prepare_out_dir(&out, run.force)?;
    write_file(&out.join(CONFIG_FILE), run.to_text())?;
    let log_path = out.join(LOG_FILE);
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    writeln!(
        log,
        "# {stage} variant={} seed={} params={}",
        model.variant(),
        training.seed,
        model.num_parameters()
    )
    .map_err(|e| Error::io(&log_path, e))?;

    let sets = TrainSets::from_corpus(&corpus);
    let model_config = model.config().clone();
    let mut trainer = Trainer::new(model, training, stage)?;
    trainer.run(&sets, &mut log, None)?;
    save_model_dir(&out, &trainer.checkpoint()?, &model_config)?;
    let best = trainer
        .validations()
        .iter()
        .map(|v| v.loss)
        .fold(f64::INFINITY, f64::min);
    writeln!(
        stdout,
        "{stage}: {} steps, best valid_loss {best:.6}, wrote {}",
        trainer.steps(),
        out.join(CHECKPOINT_FILE).display()
    )
    .map_err(io_out)?;
    Ok(())
}

struct EvalInputs {
    run: RunConfig,
    model: Model,
    split: Split,
    vocab: crate::alignments::Vocabulary,
    utts: Vec<Utterance>,
}

fn eval_inputs(args: &DecodeArgs) -> Outcome<EvalInputs> {
    let mut ov = Overrides::default();
    ov.put_path("model", &args.model);
    ov.put_path("data", &args.data);
    ov.put("split", &args.split);
    ov.put("utt", &args.utt);
    ov.put("beam", &args.beam);
    ov.put_path("out", &args.out);
    ov.flag("force", args.force);
    let Resolved { mut run, .. } = resolve(&args.config, ov)?;
    let model_dir = required(&run.model, "model")?.clone();
    let split: Split = required(&run.split, "split")?
        .parse()
        .map_err(|e: Error| Failure::Usage(e.to_string()))?;
    if run.beam == 0 {
        return Err(Failure::Usage("--beam must be at least 1".into()));
    }
    if run.data.is_none() {
        let trained = RunConfig::load(&model_dir.join(CONFIG_FILE))?;
        run.data = trained.data;
    }
    let data = required(&run.data, "data")?.clone();
    let model = load_model_dir(&model_dir)?;
    let (vocab, mut utts) = load_split(&data, split)?;
    if let Some(id) = &run.utt {
        utts.retain(|u| &u.id == id);
        if utts.is_empty() {
            return Err(Failure::Runtime(Error::Config(format!("no utterance `{id}` in {split}"))));
        }
    }
    Ok(EvalInputs {
        run,
        model,
        split,
        vocab,
        utts,
    })
}

fn decode(args: &DecodeArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let inp = eval_inputs(args)?;
    for u in &inp.utts {
        let hyp = rnnt_decode(&inp.model, &u.features, inp.run.beam)?;
        writeln!(stdout, "{}\t{}", u.id, inp.vocab.render(&hyp.labels)).map_err(io_out)?;
    }
    Ok(())
}

fn eval(args: &DecodeArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let inp = eval_inputs(args)?;
    let report = evaluate(&inp.model, &inp.utts, &inp.vocab, inp.run.beam)?;
    writeln!(stdout, "{}\n{}", EvalReport::header(), report.row(&inp.split.name())).map_err(io_out)?;
    Ok(())
}

fn eval_ls(args: &DecodeArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let inp = eval_inputs(args)?;
    let report = eval_language_separation(&inp.model, &inp.utts, &inp.vocab)?;
    write!(stdout, "{}\n{}", SeparationReport::header(), report.rows()).map_err(io_out)?;
    Ok(())
}

fn dump_posteriors(args: &DecodeArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let inp = eval_inputs(args)?;
    let utt = required(&inp.run.utt, "utt")?;
    let out = required(&inp.run.out, "out")?;
    if out.exists() && !inp.run.force {
        return Err(Failure::Runtime(Error::Config(format!(
            "{} exists; pass --force to overwrite it",
            out.display()
        ))));
    }
    dump_frame_posteriors(&inp.model, &inp.utts[0].features, &inp.vocab, out)?;
    writeln!(stdout, "wrote posteriors of {utt} to {}", out.display()).map_err(io_out)?;
    Ok(())
}

fn gradcheck(args: &CheckArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let mut ov = Overrides::default();
    ov.common(&args.common);
    let Resolved { run, .. } = resolve(&args.common.config, ov)?;
    let r = gradient_suite(run.seed, GRAD_CASES)?;
    writeln!(
        stdout,
        "gradcheck: ctc {:.3e} rnnt {:.3e} model {:.3e} (tolerance {GRAD_TOLERANCE:.0e})",
        r.ctc, r.rnnt, r.model
    )
    .map_err(io_out)?;
    if r.worst() >= GRAD_TOLERANCE {
        return Err(Failure::Runtime(Error::InvalidArgument(format!(
            "relative gradient error {:.3e} exceeds {GRAD_TOLERANCE:.0e}",
            r.worst()
        ))));
    }
    Ok(())
}

fn oracle_check(args: &CheckArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let mut ov = Overrides::default();
    ov.common(&args.common);
    let Resolved { run, .. } = resolve(&args.common.config, ov)?;
    let r = oracle_suite(run.seed, ORACLE_INSTANCES)?;
    writeln!(
        stdout,
        "oracle-check: {} instances, ctc max |dp - oracle| {:.3e}, rnnt {:.3e} (tolerance {ORACLE_TOLERANCE:.0e})",
        r.instances, r.ctc_max_error, r.rnnt_max_error
    )
    .map_err(io_out)?;
    if !r.passes(ORACLE_TOLERANCE) {
        return Err(Failure::Runtime(Error::InvalidArgument(
            "dynamic-programming loss disagrees with enumeration".into(),
        )));
    }
    Ok(())
}

/// Runs one command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let missing = e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand;
            return if e.use_stderr() || missing {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let outcome = match &cli.command {
        Command::GenData(a) => gen_data(a, stdout),
        Command::Pretrain(a) => train(a, Stage::Pretrain, stdout),
        Command::Finetune(a) => train(a, Stage::Finetune, stdout),
        Command::Decode(a) => decode(a, stdout),
        Command::Eval(a) => eval(a, stdout),
        Command::EvalLs(a) => eval_ls(a, stdout),
        Command::DumpPosteriors(a) => dump_posteriors(a, stdout),
        Command::Gradcheck(a) => gradcheck(a, stdout),
        Command::OracleCheck(a) => oracle_check(a, stdout),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}\n\n{}", Cli::command().render_usage());
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let argv = std::iter::once("condrnnt").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn no_arguments_prints_usage_and_exits_one() {
        let (code, _, err) = call(&[]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("Usage"));
    }

    #[test]
    fn unknown_flag_and_bad_value_are_usage_errors() {
        assert_eq!(call(&["eval", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(call(&["pretrain", "--variant", "gated"]).0, EXIT_USAGE);
        assert_eq!(call(&["decode", "--model", "m"]).0, EXIT_USAGE);
        let (code, _, err) = call(&["eval", "--model", "m", "--split", "train-x"]);
        assert_eq!(code, EXIT_USAGE, "{err}");
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("oracle-check"));
    }

    #[test]
    fn missing_model_is_a_runtime_failure() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("none");
        let (code, _, err) = call(&["eval", "--model", m.to_str().unwrap(), "--split", "test-cs", "--data", "x"]);
        assert_eq!(code, EXIT_FAILURE);
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.txt");
        fs::write(&cfg, "seed = 9\nhidden_dim = 7\n").unwrap();
        let mut ov = Overrides::default();
        ov.put("hidden_dim", &Some(5));
        let r = resolve(&Some(cfg), ov).unwrap();
        assert_eq!(r.run.hidden_dim, 5);
        assert_eq!(r.run.seed, 9);
        assert!(r.explicit_seed);
        assert!(!resolve(&None, Overrides::default()).unwrap().explicit_seed);
    }

    #[test]
    fn non_empty_out_dir_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x"), "").unwrap();
        assert!(matches!(prepare_out_dir(dir.path(), false), Err(Failure::Runtime(_))));
        assert!(prepare_out_dir(dir.path(), true).is_ok());
        assert!(prepare_out_dir(&dir.path().join("fresh"), false).is_ok());
    }

    #[test]
    fn oracle_check_passes() {
        let (code, out, _) = call(&["oracle-check", "--seed", "4"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.starts_with("oracle-check: 200 instances"));
    }
}
