use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use grouprec::checkpoint::{load_checkpoint, read_manifest, save_checkpoint};
use grouprec::data::{apply_filters, build_eval_queries, load_dataset, split_leave_one_out, write_prepared, ID_MAPS_FILE};
use grouprec::eval::{efficiency_profile, evaluate as evaluate_scorer, popularity_baseline, EfficiencyProfile, MetricRecord, ModelScorer};
use grouprec::rng::{stream, StreamPurpose};
use grouprec::train::{train_with_validation, Trainer};
use grouprec::{ConsensusModel, EvalQuery, Format, ModelParams, SplitDataset, Task};
use serde::Serialize;

use crate::config::{RunConfig, EFFECTIVE_CONFIG_FILE};
use crate::svg;
use crate::CliError;

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

fn usage(path: &Path, e: io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

/// Reads `kind\text\tdense` lines into `(kind, dense) -> ext`.
fn read_id_maps(path: &Path) -> Result<HashMap<(String, String), String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Lib(io_error(path, e)))?;
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        let [kind, ext, dense] = fields[..] else {
            return Err(CliError::Lib(grouprec::Error::Parse {
                file: path.to_path_buf(),
                line: n + 1,
                message: "expected kind, external id and dense id".into(),
            }));
        };
        out.insert((kind.to_owned(), dense.to_owned()), ext.to_owned());
    }
    Ok(out)
}

fn io_error(path: &Path, source: io::Error) -> grouprec::Error {
    grouprec::Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads, filters and writes a dataset in canonical form. When the input is
/// itself a prepared directory, its id map is composed so output tokens
/// still refer to the original raw ids.
pub fn prepare(input: &Path, format: Format, output: &Path, min_members: usize, min_group_items: usize) -> Result<(), CliError> {
    let raw = load_dataset(input, format)?;
    let upstream = input.join(ID_MAPS_FILE);
    let upstream = if format == Format::Canonical && upstream.is_file() {
        Some(read_id_maps(&upstream)?)
    } else {
        None
    };
    let filtered = apply_filters(&raw, min_members, min_group_items);
    let written = write_prepared(&filtered, output)?;
    if let Some(upstream) = upstream {
        let path = output.join(ID_MAPS_FILE);
        let mut body = String::new();
        let text = fs::read_to_string(&path).map_err(|e| CliError::Lib(io_error(&path, e)))?;
        for line in text.lines() {
            let mut f = line.split('\t');
            let (Some(kind), Some(ext), Some(dense)) = (f.next(), f.next(), f.next()) else { continue };
            let original = upstream.get(&(kind.to_owned(), ext.to_owned())).map_or(ext, String::as_str);
            body.push_str(&format!("{kind}\t{original}\t{dense}\n"));
        }
        fs::write(&path, body).map_err(|e| CliError::Lib(io_error(&path, e)))?;
    }
    println!("{}", written.stats());
    Ok(())
}

fn eval_queries(split: &SplitDataset, cfg: &RunConfig) -> Result<Vec<EvalQuery>, CliError> {
    let seed = cfg.train_config().seed;
    Ok(build_eval_queries(split, cfg.n_neg_eval(), &mut stream(seed, StreamPurpose::EvalNegatives))?)
}

pub fn train(cfg: RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let output = cfg
        .output
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory given (use --output or the `output` key)".into()))?;
    fs::create_dir_all(&output).map_err(|e| usage(&output, e))?;
    let effective = cfg.effective();
    effective.write(&output.join(EFFECTIVE_CONFIG_FILE))?;

    let tc = effective.train_config();
    let data = load_dataset(effective.require_data()?, effective.format())?;
    let split = split_leave_one_out(&data, tc.seed);
    let ks = effective.ks();
    let queries = if tc.eval_every > 0 {
        eval_queries(&split, &effective)?
    } else {
        Vec::new()
    };
    let (params, log) = train_with_validation(&split, &tc, &queries, &ks)?;
    save_checkpoint(&params, tc.layers, &output.join(CHECKPOINT_DIR))?;
    log.write_jsonl(&output.join(TRAIN_LOG_FILE))?;
    if let Some(last) = log.epochs().last() {
        eprintln!(
            "trained {} epochs: loss_group={:.6} loss_user={:.6}",
            last.epoch, last.loss_group, last.loss_user
        );
    }
    Ok(())
}

/// Everything needed to score a checkpoint against its dataset.
struct Session {
    cfg: RunConfig,
    split: SplitDataset,
    queries: Vec<EvalQuery>,
    params: ModelParams,
    model: ConsensusModel,
}

/// Resolves the configuration for a checkpoint. Without `--config`, the
/// effective config written next to the checkpoint by `train` is used.
fn open_session(checkpoint: &Path, config: Option<&Path>, top: RunConfig) -> Result<Session, CliError> {
    let sibling: Option<PathBuf> = checkpoint
        .parent()
        .map(|p| p.join(EFFECTIVE_CONFIG_FILE))
        .filter(|p| p.is_file());
    let base = RunConfig::load_optional(config.or(sibling.as_deref()))?;
    let mut cfg = base.overlay(top).with_env_seed()?;
    let manifest = read_manifest(checkpoint)?;
    if cfg.dim.is_some() || cfg.layers.is_some() {
        manifest.check_config(cfg.dim.unwrap_or(manifest.dim), cfg.layers.unwrap_or(manifest.layers))?;
    }
    cfg.dim = Some(manifest.dim);
    cfg.layers = Some(manifest.layers);
    cfg.validate()?;

    let data = load_dataset(cfg.require_data()?, cfg.format())?;
    manifest.check_dataset(data.num_users(), data.num_items(), data.num_groups())?;
    let (params, _) = load_checkpoint(checkpoint)?;
    let tc = cfg.train_config();
    let split = split_leave_one_out(&data, tc.seed);
    let queries = eval_queries(&split, &cfg)?;
    let model = ConsensusModel::new(&split.train, tc.layers, tc.views, tc.group_self_loops);
    Ok(Session {
        cfg,
        split,
        queries,
        params,
        model,
    })
}

fn write_lines(lines: &[String], out: Option<&Path>) -> Result<(), CliError> {
    let mut body = lines.join("\n");
    body.push('\n');
    match out {
        Some(path) => fs::write(path, body).map_err(|e| usage(path, e)),
        None => io::stdout().write_all(body.as_bytes()).map_err(|e| CliError::Usage(e.to_string())),
    }
}

pub fn evaluate(
    checkpoint: &Path,
    config: Option<&Path>,
    top: RunConfig,
    tasks: &[Task],
    popularity: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let s = open_session(checkpoint, config, top)?;
    let ks = s.cfg.ks();
    let outputs = s.model.forward(&s.params)?;
    let scorer = ModelScorer::new(&s.params, &outputs);
    let mut records: Vec<MetricRecord> = Vec::new();
    for &task in tasks {
        let report = evaluate_scorer(&scorer, &s.queries, &ks, task, s.model.propagation_passes())?;
        records.extend(report.records(None));
    }
    if popularity {
        for &task in tasks {
            records.extend(popularity_baseline(&s.split.train, &s.queries, &ks, task)?.records(Some("popularity")));
        }
    }
    let lines: Vec<String> = records
        .iter()
        .map(|r| serde_json::to_string(r).expect("metric records serialize"))
        .collect();
    write_lines(&lines, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingTable {
    Items,
    Groups,
    Users,
}

/// Writes a base embedding table as CSV (`id,d0,..`) and optionally a
/// scatter plot of two of its columns.
pub fn export_embeddings(
    checkpoint: &Path,
    table: EmbeddingTable,
    out: &Path,
    svg_out: Option<&Path>,
    dims: &[usize],
) -> Result<(), CliError> {
    let (params, _) = load_checkpoint(checkpoint)?;
    let d = params.dim();
    if svg_out.is_some() {
        if dims.len() != 2 {
            return Err(CliError::Usage(format!("--dims takes exactly two values, got {dims:?}")));
        }
        if let Some(&bad) = dims.iter().find(|&&x| x >= d) {
            return Err(CliError::Usage(format!("--dims {bad} out of range for embedding dim {d}")));
        }
    }
    let m = match table {
        EmbeddingTable::Items => &params.items,
        EmbeddingTable::Groups => &params.groups,
        EmbeddingTable::Users => &params.users,
    };
    let mut csv = String::from("id");
    for c in 0..d {
        csv.push_str(&format!(",d{c}"));
    }
    csv.push('\n');
    for r in 0..m.rows() {
        csv.push_str(&r.to_string());
        for v in m.row(r) {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    fs::write(out, csv).map_err(|e| usage(out, e))?;
    if let Some(path) = svg_out {
        let (a, b) = (dims[0], dims[1]);
        let points: Vec<(String, f64, f64)> = (0..m.rows()).map(|r| (r.to_string(), m.get(r, a), m.get(r, b))).collect();
        let doc = svg::scatter(&points, &format!("d{a}"), &format!("d{b}"));
        fs::write(path, doc).map_err(|e| usage(path, e))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ProfileReport {
    train_epoch_seconds: f64,
    #[serde(flatten)]
    scoring: EfficiencyProfile,
}

pub fn profile(
    checkpoint: &Path,
    config: Option<&Path>,
    top: RunConfig,
    sizes: &[usize],
    repeats: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if sizes.is_empty() || sizes.contains(&0) || repeats == 0 {
        return Err(CliError::Usage("--sizes must be positive and --repeats at least 1".into()));
    }
    let s = open_session(checkpoint, config, top)?;
    let mut trainer = Trainer::with_params(&s.split, &s.cfg.train_config(), s.params.clone())?;
    let start = Instant::now();
    trainer.run_epoch()?;
    let train_epoch_seconds = start.elapsed().as_secs_f64();
    let scoring = efficiency_profile(&s.model, &s.params, &s.queries, sizes, repeats)?;
    let report = ProfileReport {
        train_epoch_seconds,
        scoring,
    };
    write_lines(&[serde_json::to_string_pretty(&report).expect("profile serializes")], out)
}
