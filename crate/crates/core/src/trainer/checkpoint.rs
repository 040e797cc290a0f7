//! Training checkpoints: parameters, Adam moments, counters, the sampling
//! stream position, a config snapshot and the epoch history.

use std::fs;
use std::io::Write;
use std::path::Path;

use zsgan_numeric::{AdamState, Matrix, ParamStore, RngPosition, RngStream};

use super::{EpochRecord, TrainState};
use crate::config::TrainConfig;
use crate::container::{read_tensors, write_tensors, Meta};
use crate::error::{Error, Result};
use crate::models::{ModelDims, ModelTriplet};

pub const CHECKPOINT_STEM: &str = "checkpoint";
pub const CONFIG_FILE: &str = "config.toml";
pub const HISTORY_FILE: &str = "history.jsonl";

/// A restored training state and the global seen-category ids it trained on.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: TrainState<f32>,
    pub seen: Vec<usize>,
}

const NETS: [&str; 3] = ["g", "r", "d"];

fn adam_tensors(store: &ParamStore<f32>, adam: &AdamState<f32>, out: &mut Vec<(String, Matrix<f32>)>) {
    for ((p, m), v) in store.iter().zip(&adam.m).zip(&adam.v) {
        out.push((format!("adam.m.{}", p.name), m.clone()));
        out.push((format!("adam.v.{}", p.name), v.clone()));
    }
}

pub fn save_checkpoint(state: &TrainState<f32>, seen: &[usize], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut meta = Meta::new("checkpoint");
    meta.push("precision", "f32")?;
    meta.push("epoch", state.epoch)?;
    meta.push("step", state.step)?;
    let pos = state.rng.position();
    meta.push("rng.seed", pos.seed)?;
    meta.push("rng.stream", pos.stream)?;
    meta.push("rng.word_pos", pos.word_pos)?;
    let dims = &state.models.dims;
    for (k, v) in dims_entries(dims) {
        meta.push(format!("dims.{k}"), v)?;
    }
    for (name, adam) in NETS.iter().zip([&state.adam_g, &state.adam_r, &state.adam_d]) {
        meta.push(format!("adam_t.{name}"), adam.t)?;
    }
    let seen_list: Vec<String> = seen.iter().map(usize::to_string).collect();
    meta.push("seen", seen_list.join(","))?;

    let mut tensors = state.models.named_tensors();
    adam_tensors(state.models.g.store(), &state.adam_g, &mut tensors);
    adam_tensors(state.models.r.store(), &state.adam_r, &mut tensors);
    adam_tensors(state.models.d.store(), &state.adam_d, &mut tensors);
    let named: Vec<(String, &Matrix<f32>)> = tensors.iter().map(|(n, m)| (n.clone(), m)).collect();
    write_tensors(dir, CHECKPOINT_STEM, meta, &named)?;

    let cfg = toml::to_string(&state.cfg).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, cfg).map_err(|e| Error::io(&cfg_path, e))?;
    write_history(&state.history, &dir.join(HISTORY_FILE))
}

pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for rec in history {
        let line = serde_json::to_string(rec).expect("records serialize");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn dims_entries(d: &ModelDims) -> [(&'static str, usize); 8] {
    [
        ("z_dim", d.z_dim),
        ("d_e", d.d_e),
        ("d_v", d.d_v),
        ("num_seen", d.num_seen),
        ("g_hidden", d.g_hidden),
        ("r_hidden", d.r_hidden),
        ("d_hidden1", d.d_hidden1),
        ("d_hidden2", d.d_hidden2),
    ]
}

fn restore_adam(
    store: &ParamStore<f32>,
    adam: &mut AdamState<f32>,
    t: u64,
    tensors: &[(String, Matrix<f32>)],
    path: &Path,
) -> Result<()> {
    let find = |name: &str, shape: (usize, usize)| -> Result<Matrix<f32>> {
        let m = tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::format(path, 0, format!("missing tensor `{name}`")))?;
        if m.shape() != shape {
            return Err(Error::format(path, 0, format!("tensor `{name}` has shape {:?}", m.shape())));
        }
        Ok(m)
    };
    adam.t = t;
    for (i, p) in store.iter().enumerate() {
        adam.m[i] = find(&format!("adam.m.{}", p.name), p.value.shape())?;
        adam.v[i] = find(&format!("adam.v.{}", p.name), p.value.shape())?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let meta_path = dir.join(format!("{CHECKPOINT_STEM}.meta"));
    let (meta, tensors) = read_tensors(dir, CHECKPOINT_STEM)?;
    meta.expect_kind("checkpoint", &meta_path)?;
    let get = |k: &str| -> Result<usize> { meta.require_parse(&format!("dims.{k}"), &meta_path) };
    let dims = ModelDims {
        z_dim: get("z_dim")?,
        d_e: get("d_e")?,
        d_v: get("d_v")?,
        num_seen: get("num_seen")?,
        g_hidden: get("g_hidden")?,
        r_hidden: get("r_hidden")?,
        d_hidden1: get("d_hidden1")?,
        d_hidden2: get("d_hidden2")?,
    };
    let cfg_path = dir.join(CONFIG_FILE);
    let cfg_text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let cfg: TrainConfig =
        toml::from_str(&cfg_text).map_err(|e| Error::format(&cfg_path, 0, format!("bad config snapshot: {e}")))?;

    let mut models = ModelTriplet::<f32>::new(dims, cfg.seed)?;
    models.load_tensors(&tensors)?;
    let mut state = TrainState::from_models(cfg, models);
    let adam_t = |n: &str| -> Result<u64> { meta.require_parse(&format!("adam_t.{n}"), &meta_path) };
    restore_adam(state.models.g.store(), &mut state.adam_g, adam_t("g")?, &tensors, &meta_path)?;
    restore_adam(state.models.r.store(), &mut state.adam_r, adam_t("r")?, &tensors, &meta_path)?;
    restore_adam(state.models.d.store(), &mut state.adam_d, adam_t("d")?, &tensors, &meta_path)?;
    state.epoch = meta.require_parse("epoch", &meta_path)?;
    state.step = meta.require_parse("step", &meta_path)?;
    state.rng = RngStream::from_position(RngPosition {
        seed: meta.require_parse("rng.seed", &meta_path)?,
        stream: meta.require_parse("rng.stream", &meta_path)?,
        word_pos: meta.require_parse("rng.word_pos", &meta_path)?,
    });

    let hist_path = dir.join(HISTORY_FILE);
    let text = fs::read_to_string(&hist_path).map_err(|e| Error::io(&hist_path, e))?;
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        if !line.trim().is_empty() {
            let rec = serde_json::from_str(line.trim())
                .map_err(|e| Error::format(&hist_path, offset, format!("bad history record: {e}")))?;
            state.history.push(rec);
        }
        offset += line.len() as u64;
    }

    let seen_raw = meta.require("seen", &meta_path)?;
    let seen = if seen_raw.is_empty() {
        Vec::new()
    } else {
        seen_raw
            .split(',')
            .map(|s| s.parse().map_err(|_| Error::format(&meta_path, 0, format!("bad seen list `{seen_raw}`"))))
            .collect::<Result<Vec<usize>>>()?
    };
    Ok(Checkpoint { state, seen })
}
