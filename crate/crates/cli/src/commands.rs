use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use hdnn::losses::TemperatureMode;
use hdnn::sequence::SmbrConfig;
use hdnn::trainer::{
    adapt, distill_from_targets, distill_network, frame_error, sequence_train, train_ce,
    AdaptMode, EpochReport, FrameSet, LossKind, LrSchedule, SequenceRegulariser,
    SequenceUtterance, TrainConfig, UpdateScope,
};
use hdnn::workbench::{
    build_lattice, gen_corpus, load_model_with_metadata, load_soft_targets, read_corpus_info,
    read_split, save_model_with_metadata, save_soft_targets, splice, spliced_dim, write_corpus,
    write_lattices, CorpusParams, CorpusSpec, Split,
};
use hdnn::{count_params, Architecture, Matrix, Network, NetworkConfig, Rng, SoftTargets};

use crate::*;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::TrainCe(a) => train_ce_cmd(a),
        Command::Distill(a) => distill_cmd(a),
        Command::MakeLattices(a) => make_lattices(a),
        Command::TrainSmbr(a) => train_smbr(a),
        Command::Adapt(a) => adapt_cmd(a),
        Command::Eval(a) => eval(a),
        Command::CountParams(a) => {
            let config = NetworkConfig::new(a.arch.into(), a.input, a.hidden, a.layers, a.out);
            config.validate()?;
            if a.gates_only {
                let gates = if config.is_highway() { 2 * a.hidden * a.hidden } else { 0 };
                println!("{gates}");
            } else {
                println!("{}", count_params(&config));
            }
            Ok(())
        }
        Command::ExportPosteriors(a) => export_posteriors(a),
    }
}

impl From<Arch> for Architecture {
    fn from(a: Arch) -> Self {
        match a {
            Arch::Plain => Architecture::Plain,
            Arch::Highway => Architecture::Highway,
        }
    }
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Cv => Split::Cv,
            SplitArg::Adapt => Split::Adapt,
        }
    }
}

/// Desk-scale defaults for frame-level training.
fn frame_defaults() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        minibatch_size: 64,
        max_epochs: 15,
        ..TrainConfig::default()
    }
}

fn apply(opt: &OptArgs, mut cfg: TrainConfig) -> TrainConfig {
    if let Some(lr) = opt.lr {
        cfg.learning_rate = lr;
    }
    if let Some(e) = opt.epochs {
        cfg.max_epochs = e;
    }
    if let Some(m) = opt.minibatch {
        cfg.minibatch_size = m;
    }
    if let Some(m) = opt.momentum {
        cfg.momentum_after_first_epoch = m;
    }
    if let Some(s) = opt.schedule {
        cfg.lr_schedule = match s {
            Schedule::Constant => LrSchedule::Constant,
            Schedule::HalveOnCvStall => LrSchedule::HalveOnCvStall,
        };
    }
    if let Some(s) = opt.scope {
        cfg.update_scope = match s {
            Scope::All => UpdateScope::All,
            Scope::GatesOnly => UpdateScope::GatesOnly,
        };
    }
    if let Some(p) = opt.lr_per_sample {
        cfg.lr_per_sample = p;
    }
    cfg.seed = opt.seed;
    cfg
}

fn write_reports(reports: &[EpochReport], args: &ReportArgs) -> Result<()> {
    if let Some(path) = &args.report {
        write_report_file(reports, path, args.no_timing)?;
    }
    if let Some(last) = reports.last() {
        println!(
            "epoch {} loss {:.6} cv_frame_error {:.6}",
            last.epoch, last.loss, last.cv_frame_error
        );
    }
    Ok(())
}

fn write_report_file(reports: &[EpochReport], path: &Path, no_timing: bool) -> Result<()> {
    let mut text = String::new();
    for r in reports {
        let mut r = r.clone();
        if no_timing {
            r.seconds = 0.0;
        }
        text.push_str(&r.to_json_line());
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<(Network, usize)> {
    let (net, meta) =
        load_model_with_metadata(path).with_context(|| format!("loading {}", path.display()))?;
    let context = meta
        .get("context")
        .map(|c| c.parse())
        .transpose()
        .context("bad context in model metadata")?
        .unwrap_or(0);
    Ok((net, context))
}

fn save_model(net: &Network, context: usize, path: &Path) -> Result<()> {
    save_model_with_metadata(net, &[("context", context.to_string())], path)
        .with_context(|| format!("saving {}", path.display()))
}

fn frames(data: &Path, split: Split, context: usize) -> Result<FrameSet> {
    let utts = read_split(data, split)?;
    ensure!(!utts.is_empty(), "split {} is empty", split.name());
    Ok(FrameSet::from_utterances(&utts, context)?)
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut params = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<CorpusParams>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => CorpusParams::default(),
    };
    if let Some(seed) = a.seed {
        params.seed = seed;
    }
    let spec = CorpusSpec::from_params(&params)?;
    let corpus = gen_corpus(&spec)?;
    write_corpus(&corpus, params.seed, &a.out)?;
    println!(
        "wrote {} train, {} cv, {} adapt utterances to {}",
        corpus.train.len(),
        corpus.cv.len(),
        corpus.adapt.len(),
        a.out.display()
    );
    Ok(())
}

fn train_ce_cmd(a: TrainCeArgs) -> Result<()> {
    let info = read_corpus_info(&a.data)?;
    let train = frames(&a.data, Split::Train, a.context)?;
    let cv = frames(&a.data, Split::Cv, a.context)?;
    let config = NetworkConfig::new(
        a.arch.arch.into(),
        spliced_dim(info.feature_dim, a.context),
        a.arch.hidden,
        a.arch.layers,
        info.num_states,
    );
    let cfg = apply(&a.opt, frame_defaults());
    let mut net = Network::build(config, cfg.seed)?;
    let reports = train_ce(&mut net, &train, &cv, &cfg)?;
    save_model(&net, a.context, &a.out)?;
    write_reports(&reports, &a.report)
}

fn distill_cmd(a: DistillArgs) -> Result<()> {
    let info = read_corpus_info(&a.data)?;
    let (teacher, context) = load_model(&a.teacher)?;
    let mut train = frames(&a.data, Split::Train, context)?;
    if a.unlabeled {
        train = train.without_labels();
    }
    let cv = frames(&a.data, Split::Cv, context)?;
    let cfg = TrainConfig {
        loss_kind: if a.q > 0.0 { LossKind::Hybrid } else { LossKind::Kd },
        q: a.q,
        temperature: a.temperature,
        temperature_mode: if a.teacher_only_temperature {
            TemperatureMode::TeacherOnly
        } else {
            TemperatureMode::Shared
        },
        ..apply(&a.opt, frame_defaults())
    };
    let mut student = match &a.init {
        Some(path) => load_model(path)?.0,
        None => Network::build(
            NetworkConfig::new(
                a.arch.arch.into(),
                spliced_dim(info.feature_dim, context),
                a.arch.hidden,
                a.arch.layers,
                info.num_states,
            ),
            cfg.seed,
        )?,
    };
    let reports = match &a.targets {
        Some(dir) => {
            let utts = read_split(&a.data, Split::Train)?;
            let mut parts = Vec::with_capacity(utts.len());
            for u in &utts {
                let t = load_soft_targets(dir.join(format!("{}.post", u.id)))?;
                ensure!(
                    t.temperature == cfg.temperature,
                    "{}: targets exported at T={}, training at T={}",
                    u.id,
                    t.temperature,
                    cfg.temperature
                );
                parts.push(t.posteriors);
            }
            let refs: Vec<&Matrix> = parts.iter().collect();
            let targets = SoftTargets::new(Matrix::vstack(&refs)?, cfg.temperature)?;
            distill_from_targets(&mut student, &targets, &train, &cv, &cfg)?
        }
        None => distill_network(&mut student, &teacher, &train, &cv, &cfg)?,
    };
    save_model(&student, context, &a.out)?;
    write_reports(&reports, &a.report)
}

fn make_lattices(a: MakeLatticesArgs) -> Result<()> {
    let info = read_corpus_info(&a.data)?;
    let split: Split = a.split.into();
    let mut utts = read_split(&a.data, split)?;
    for u in &mut utts {
        let mut rng = Rng::new(a.seed, &format!("lattice/{}", u.id));
        u.lattice = Some(build_lattice(&u.alignment, info.num_states, a.branch, &mut rng)?);
    }
    write_lattices(&a.data, split, &utts)?;
    println!("wrote {} lattices", utts.len());
    Ok(())
}

fn train_smbr(a: TrainSmbrArgs) -> Result<()> {
    let info = read_corpus_info(&a.data)?;
    let (mut net, context) = load_model(&a.model)?;
    let train = read_split(&a.data, Split::Train)?;
    let utts = SequenceUtterance::from_utterances(&train, context)?;
    let cv = frames(&a.data, Split::Cv, context)?;
    let priors = SmbrConfig::from_labels(
        a.acoustic_scale,
        info.num_states,
        train.iter().flat_map(|u| u.alignment.states()),
    )?;
    let teacher = a.teacher.as_deref().map(load_model).transpose()?;
    let reg = match (&teacher, a.ce_smoothing) {
        (Some(_), true) => bail!("--teacher and --ce-smoothing are mutually exclusive"),
        (Some((t, _)), false) => SequenceRegulariser::Teacher(t),
        (None, true) => SequenceRegulariser::Labels,
        (None, false) => SequenceRegulariser::None,
    };
    let defaults = TrainConfig {
        learning_rate: 1e-4,
        max_epochs: 20,
        lr_per_sample: true,
        ..TrainConfig::default()
    };
    let cfg = TrainConfig {
        loss_kind: LossKind::SmbrKd,
        p: a.p,
        temperature: a.temperature,
        ..apply(&a.opt, defaults)
    };
    let reports = sequence_train(&mut net, &utts, &cv, reg, &priors, &cfg)?;
    save_model(&net, context, &a.out)?;
    write_reports(&reports, &a.report)
}

fn adapt_cmd(a: AdaptArgs) -> Result<()> {
    let (si, context) = load_model(&a.model)?;
    let teacher = a.teacher.as_deref().map(load_model).transpose()?;
    let mode = match a.mode {
        AdaptModeArg::TwoPassCe => AdaptMode::TwoPassCe,
        AdaptModeArg::OnePassKd => AdaptMode::OnePassKd,
    };
    let cfg = TrainConfig {
        temperature: a.temperature,
        ..apply(&a.opt, TrainConfig::adaptation())
    };
    let split: Split = a.split.into();
    let utts = read_split(&a.data, split)?;
    let mut speakers: Vec<usize> = utts.iter().map(|u| u.speaker).collect();
    speakers.sort_unstable();
    speakers.dedup();
    ensure!(!speakers.is_empty(), "split {} is empty", split.name());
    fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut summary = String::new();
    for spk in speakers {
        let mine: Vec<_> = utts.iter().filter(|u| u.speaker == spk).cloned().collect();
        let data = FrameSet::from_utterances(&mine, context)?;
        let (net, reports) =
            adapt(&si, &data, &data, mode, teacher.as_ref().map(|(t, _)| t), &cfg)?;
        save_model(&net, context, &a.out_dir.join(format!("spk{spk:03}.model")))?;
        write_report_file(
            &reports,
            &a.out_dir.join(format!("spk{spk:03}.jsonl")),
            a.no_timing,
        )?;
        let line = format!(
            "speaker {spk} frames {} before {:.6} after {:.6}\n",
            data.len(),
            reports[0].cv_frame_error,
            reports.last().expect("epoch 0 report").cv_frame_error
        );
        print!("{line}");
        summary.push_str(&line);
    }
    fs::write(a.out_dir.join("summary.txt"), summary).context("writing adaptation summary")?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (net, context) = load_model(&a.model)?;
    let set = frames(&a.data, a.split.into(), context)?;
    println!("frame_error {:.6} frames {}", frame_error(&net, &set)?, set.len());
    Ok(())
}

fn export_posteriors(a: ExportPosteriorsArgs) -> Result<()> {
    let (net, context) = load_model(&a.model)?;
    let utts = read_split(&a.data, a.split.into())?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for u in &utts {
        let post = net.posteriors(&splice(&u.features, context), a.temperature)?;
        let targets = SoftTargets::new(post, a.temperature)?;
        save_soft_targets(&targets, a.out.join(format!("{}.post", u.id)))?;
    }
    println!("wrote posteriors for {} utterances", utts.len());
    Ok(())
}
