use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use zsgan_core::config::Ablation;
use zsgan_core::container::{write_tensors, Meta};
use zsgan_core::data::{
    generate_synthetic, load_dataset, load_embeddings, load_word_vectors, normalize_embeddings, save_dataset,
    save_embeddings, Dataset, EmbeddingTable, Split,
};
use zsgan_core::eval::{
    aggregate, evaluate_generator, evaluate_ridge, pca_2d, run_protocol, split_train_seed, summary_table, synthesize_bank,
    train_on_split, write_2d, write_reports, Method, ProtocolRun, SplitData, SplitResult, NO_ABLATION,
};
use zsgan_core::trainer::{checkpoint_due, load_checkpoint, save_checkpoint, train, EpochRecord, TrainState, TrainingSet};
use zsgan_core::{Error, Result, TrainConfig};
use zsgan_numeric::Matrix;

use crate::config::RunConfig;

pub const TELEMETRY_FILE: &str = "telemetry.jsonl";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.txt";

fn load_inputs(cfg: &RunConfig) -> Result<(Dataset, EmbeddingTable)> {
    let dir = cfg.dataset_dir()?;
    let ds = load_dataset(dir)?;
    let table = match &cfg.embeddings {
        Some(p) => normalize_embeddings(&load_word_vectors(p, ds.category_names())?)?,
        None => load_embeddings(dir)?,
    };
    if table.len() != ds.num_categories() {
        return Err(Error::Data(format!(
            "{} embeddings for {} categories",
            table.len(),
            ds.num_categories()
        )));
    }
    Ok((ds, table))
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    cfg.data.validate()?;
    let (ds, table, truth) = generate_synthetic(&cfg.data)?;
    save_dataset(&ds, &cfg.out)?;
    save_embeddings(&table, &cfg.out)?;
    truth.save(&cfg.out)?;
    cfg.echo()?;
    println!(
        "wrote {} rows, {} categories (d_v {}, d_e {}) to {}",
        ds.len(),
        ds.num_categories(),
        ds.d_v(),
        table.d_e(),
        cfg.out.display()
    );
    Ok(())
}

fn append_record(path: &Path, rec: &EpochRecord) -> Result<()> {
    let mut f = OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(rec).expect("records serialize");
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Config fields that may change between a checkpoint and its resumption.
fn same_run(a: &TrainConfig, b: &TrainConfig) -> bool {
    let strip = |c: &TrainConfig| TrainConfig {
        epochs: 0,
        max_steps: None,
        checkpoint_every: 0,
        ..c.clone()
    };
    strip(a) == strip(b)
}

fn numeric_diagnostic(out: &Path, err: &Error, state: Option<&TrainState<f32>>) -> PathBuf {
    let path = out.join(DIAGNOSTIC_FILE);
    let mut text = format!("{err}\n");
    if let Some(s) = state {
        text += &format!("epoch {} step {}\n", s.epoch, s.step);
        if let Some(last) = s.history.last() {
            text += &format!("last epoch record: {}\n", serde_json::to_string(last).expect("records serialize"));
        }
    }
    // best effort; the error itself is reported either way
    let _ = fs::create_dir_all(out).and_then(|_| fs::write(&path, text));
    path
}

pub fn train_cmd(cfg: &RunConfig, resume: bool) -> Result<()> {
    let (ds, table) = load_inputs(cfg)?;
    let split = cfg.protocol.split(ds.num_categories(), cfg.split)?;
    let data = SplitData::prepare(&ds, split, cfg.protocol.standardize)?;
    let seen = data.split.seen.clone();
    let set = TrainingSet::<f32>::from_split(&data.dataset, &table, &seen)?;
    let ckpt = cfg.checkpoint_dir();
    let mut state = if resume {
        let c = load_checkpoint(&ckpt)?;
        if c.seen != seen {
            return Err(Error::Config(format!(
                "checkpoint was trained on categories {:?}, split {} has {:?}",
                c.seen, cfg.split, seen
            )));
        }
        if !same_run(&c.state.cfg, &cfg.train) {
            return Err(Error::Config(
                "checkpoint config differs from [train] beyond epochs, max_steps and checkpoint_every".into(),
            ));
        }
        let mut s = c.state;
        s.cfg = cfg.train.clone();
        s
    } else {
        TrainState::for_set(cfg.train.clone(), &set)?
    };
    cfg.echo()?;
    let telemetry = cfg.out.join(TELEMETRY_FILE);
    let mut text = String::new();
    for rec in &state.history {
        text += &serde_json::to_string(rec).expect("records serialize");
        text.push('\n');
    }
    fs::write(&telemetry, text).map_err(|e| Error::io(&telemetry, e))?;

    let result = train(&mut state, &set, |s| {
        append_record(&telemetry, s.history.last().expect("epoch just finished"))?;
        if checkpoint_due(&s.cfg, s.epoch) {
            save_checkpoint(s, &seen, &ckpt)?;
        }
        Ok(())
    });
    if let Err(e) = result {
        if e.is_numeric() {
            let p = numeric_diagnostic(&cfg.out, &e, Some(&state));
            eprintln!("diagnostic written to {}", p.display());
        }
        return Err(e);
    }
    save_checkpoint(&state, &seen, &ckpt)?;
    let last = state.history.last();
    println!(
        "trained {} epochs ({} steps) on {} seen categories; checkpoint in {}{}",
        state.epoch,
        state.step,
        seen.len(),
        ckpt.display(),
        last.map_or(String::new(), |r| format!(
            "; last epoch d_loss {:.4} g_loss {:.4}",
            r.d_loss, r.g_loss
        ))
    );
    Ok(())
}

/// Split implied by a checkpoint's seen list.
fn checkpoint_split(ds: &Dataset, index: usize, seen: &[usize]) -> Result<Split> {
    if seen.is_empty() || seen.iter().any(|&c| c >= ds.num_categories()) {
        return Err(Error::Data("checkpoint seen categories do not fit the dataset".into()));
    }
    let unseen: Vec<usize> = (0..ds.num_categories()).filter(|c| !seen.contains(c)).collect();
    if unseen.is_empty() {
        return Err(Error::Data("checkpoint covers every category; nothing is unseen".into()));
    }
    Ok(Split {
        index,
        seen: seen.to_vec(),
        unseen,
    })
}

fn export_joint_2d(out: &Path, bank: &Matrix<f32>, bank_labels: &[usize], data: &SplitData) -> Result<()> {
    let test = data.test_features();
    let coords = pca_2d(&bank.vcat(&test)?)?;
    let n = bank.rows();
    let pick = |rows: std::ops::Range<usize>| coords.select_rows(&rows.collect::<Vec<_>>());
    write_2d(&out.join("bank_2d.txt"), &pick(0..n), bank_labels)?;
    write_2d(&out.join("test_2d.txt"), &pick(n..coords.rows()), &data.test_labels())?;
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let (ds, table) = load_inputs(cfg)?;
    let ckpt = load_checkpoint(&cfg.checkpoint_dir())?;
    let split = checkpoint_split(&ds, cfg.split, &ckpt.seen)?;
    let data = SplitData::prepare(&ds, split, cfg.protocol.standardize)?;
    let k = cfg.protocol.bank_per_category.unwrap_or_else(|| data.default_bank_size());
    let bank = synthesize_bank(&ckpt.state.models.g, &table, &data.split.unseen, k, ckpt.state.cfg.seed)?;
    cfg.echo()?;
    let mut meta = Meta::new("bank");
    meta.push("seed", bank.seed)?;
    meta.push("per_category", k)?;
    let labels: Vec<String> = bank.labels.iter().map(usize::to_string).collect();
    meta.push("labels", labels.join(","))?;
    write_tensors(&cfg.out, "bank", meta, &[("features".to_string(), &bank.features)])?;
    if cfg.export_2d {
        export_joint_2d(&cfg.out, &bank.features, &bank.labels, &data)?;
    }
    println!(
        "synthesized {} rows for {} unseen categories into {}",
        bank.features.rows(),
        data.split.unseen.len(),
        cfg.out.display()
    );
    Ok(())
}

fn finish_protocol(cfg: &RunConfig, run: &ProtocolRun) -> Result<()> {
    write_reports(&cfg.out, run)?;
    print!("{}", summary_table(&run.reports));
    for r in run.reports.iter().filter(|r| !r.complete) {
        for (split, e) in &r.errors {
            eprintln!("{} {} split {split}: {e}", r.method.tag(), r.ablation);
        }
    }
    // a protocol whose every cell failed is a failure of the command
    if run.reports.iter().all(|r| r.accuracies.is_empty()) {
        let first = run.results.first().map(|r| format!("{:?}", r.outcome)).unwrap_or_default();
        return Err(Error::Data(format!("every evaluation cell failed; first: {first}")));
    }
    Ok(())
}

fn eval_checkpoint(cfg: &RunConfig) -> Result<()> {
    let (ds, table) = load_inputs(cfg)?;
    let ckpt = load_checkpoint(&cfg.checkpoint_dir())?;
    let split = checkpoint_split(&ds, cfg.split, &ckpt.seen)?;
    let data = SplitData::prepare(&ds, split, cfg.protocol.standardize)?;
    let g = &ckpt.state.models.g;
    if g.d_v() != ds.d_v() || table.d_e() != ckpt.state.models.dims.d_e {
        return Err(Error::Data(format!(
            "checkpoint expects d_v {} and d_e {}, data has {} and {}",
            g.d_v(),
            ckpt.state.models.dims.d_e,
            ds.d_v(),
            table.d_e()
        )));
    }
    cfg.echo()?;
    let seed = ckpt.state.cfg.seed;
    let mut results: Vec<SplitResult> = evaluate_generator(g, &data, &table, &cfg.protocol, &cfg.protocol.methods, seed)?
        .into_iter()
        .map(|(method, outcome)| SplitResult {
            split: data.split.index,
            method,
            ablation: "checkpoint".into(),
            outcome,
        })
        .collect();
    if cfg.protocol.methods.contains(&Method::Ridge) {
        results.push(SplitResult {
            split: data.split.index,
            method: Method::Ridge,
            ablation: NO_ABLATION.into(),
            outcome: evaluate_ridge(&data, &table, &cfg.protocol),
        });
    }
    if cfg.export_2d {
        let k = cfg.protocol.bank_per_category.unwrap_or_else(|| data.default_bank_size());
        let bank = synthesize_bank(g, &table, &data.split.unseen, k, seed)?;
        export_joint_2d(&cfg.out, &bank.features, &bank.labels, &data)?;
    }
    let reports = aggregate(&results, 1);
    finish_protocol(cfg, &ProtocolRun { results, reports })
}

fn eval_protocol(cfg: &RunConfig) -> Result<()> {
    let (ds, table) = load_inputs(cfg)?;
    cfg.echo()?;
    let run = run_protocol(&ds, &table, &cfg.train, &cfg.protocol)?;
    if cfg.export_2d {
        // retrains split 0 under the first ablation; identical to the protocol's own run
        let data = SplitData::prepare(&ds, cfg.protocol.split(ds.num_categories(), 0)?, cfg.protocol.standardize)?;
        let ablation = cfg.protocol.ablations.first().copied().unwrap_or(Ablation::Full);
        let mut tcfg = ablation.apply(&cfg.train);
        tcfg.seed = split_train_seed(cfg.train.seed, 0);
        let state = train_on_split(&data, &table, tcfg)?;
        let k = cfg.protocol.bank_per_category.unwrap_or_else(|| data.default_bank_size());
        let bank = synthesize_bank(&state.models.g, &table, &data.split.unseen, k, state.cfg.seed)?;
        export_joint_2d(&cfg.out, &bank.features, &bank.labels, &data)?;
    }
    finish_protocol(cfg, &run)
}

/// Evaluates a checkpoint when one is configured, otherwise runs the
/// protocol over `num_splits` splits.
pub fn eval(cfg: &RunConfig) -> Result<()> {
    if cfg.checkpoint.is_some() {
        eval_checkpoint(cfg)
    } else {
        eval_protocol(cfg)
    }
}

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.protocol.ablations = Ablation::ALL.to_vec();
    eval_protocol(&cfg)
}
