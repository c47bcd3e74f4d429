use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deepconn_core::baseline::{
    evaluate_cf, item_similarity, predict_cf, CfEvaluation, RatingMatrix,
};
use deepconn_core::ingest::{
    dataset_stats, parse_reviews, split_dataset, ParseMode, ReviewRecord, Split,
};
use deepconn_core::model::DeepConn;
use deepconn_core::text::load_embeddings_with;
use deepconn_core::train::checkpoint::read_checkpoint;
use deepconn_core::train::report::{read_loss_curve, write_loss_curve, TableRow};
use deepconn_core::train::{
    evaluate, fit, global_mean_mse, load_checkpoint_into, mean_rating, save_checkpoint_with,
    DocumentBank, EvalOptions, Evaluation, TrainReport,
};
use deepconn_core::verify::{gradcheck_suite, SuiteOptions};
use deepconn_core::Error;

use crate::config::{RunArgs, RunConfig, SplitConfig};

/// A check ran and failed; maps to its own exit code.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn load_records(path: &Path, strict: bool) -> Result<Vec<ReviewRecord>> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mode = if strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    let parsed = parse_reviews(BufReader::new(file), mode)?;
    if !parsed.skips.is_empty() {
        eprintln!("{}", parsed.skip_report());
    }
    Ok(parsed.records)
}

fn make_split(records: &[ReviewRecord], s: &SplitConfig) -> Result<Split> {
    let keep = 1.0 - s.test_fraction;
    let train = keep * (1.0 - s.validation_fraction);
    let validation = keep * s.validation_fraction;
    if train >= 1.0 {
        return Ok(Split {
            train: records.to_vec(),
            validation: Vec::new(),
            test: Vec::new(),
            mode: s.mode,
            seed: s.seed,
        });
    }
    Ok(split_dataset(records, train, validation, s.seed, s.mode)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn stats(data: &Path, strict: bool, json: bool) -> Result<()> {
    let records = load_records(data, strict)?;
    let s = dataset_stats(&records, None);
    if json {
        println!("{}", serde_json::to_string_pretty(&s)?);
    } else {
        println!("reviews\t{}", s.n_reviews);
        println!("users\t{}", s.n_users);
        println!("items\t{}", s.n_items);
    }
    Ok(())
}

struct Prepared {
    split: Split,
    bank: DocumentBank,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let records = load_records(cfg.data_path()?, cfg.strict)?;
    let split = make_split(&records, &cfg.split)?;
    let table = load_embeddings_with(
        cfg.embeddings_path()?,
        cfg.model.tower.embedding_dim,
        cfg.oov,
    )?;
    if !table.duplicates().is_empty() {
        eprintln!(
            "embeddings: {} duplicate tokens, last occurrence kept",
            table.duplicates().len()
        );
    }
    let bank = DocumentBank::from_split(&split, cfg.documents, table, cfg.model.doc_len)?;
    eprintln!(
        "split: {} train / {} validation / {} test; documents for {} users, {} items",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        bank.n_users(),
        bank.n_items()
    );
    Ok(Prepared { split, bank })
}

fn eval_options(cfg: &RunConfig, split: &Split) -> Result<EvalOptions> {
    Ok(EvalOptions {
        cold_start: cfg.cold_start,
        global_mean: mean_rating(&split.train)?,
        clamp: cfg.clamp,
    })
}

pub struct TrainOutcome {
    pub report: TrainReport,
    pub split: Split,
}

pub fn train(args: &RunArgs, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let cfg = args.resolve()?;
    let Prepared { split, bank } = prepare(&cfg)?;
    let mut model = DeepConn::new(cfg.model.clone())?;
    eprintln!(
        "model: {} parameters, {}",
        deepconn_core::kernel::HasParams::num_weights(&model),
        TableRow::new(&cfg.model, 0.0, None).model
    );
    let outcome = fit(&mut model, &bank, &split.train, &split.validation, &cfg.fit)?;
    for e in &outcome.epochs {
        let val = e.val_loss.map_or("-".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "epoch {}/{}  train {:.4}  val {}  ({:.1} s)",
            e.epoch, cfg.fit.epochs, e.train_loss, val, e.seconds
        );
    }

    let opts = eval_options(&cfg, &split)?;
    let test: Option<Evaluation> = if split.test.is_empty() {
        None
    } else {
        Some(evaluate(&model, &bank, &split.test, &opts)?)
    };
    let global = if split.test.is_empty() {
        None
    } else {
        Some(global_mean_mse(&split.train, &split.test)?)
    };
    let report = TrainReport {
        config: serde_json::json!({ "args": args, "resolved": cfg }),
        seed: cfg.fit.seed,
        epochs: outcome.epochs.clone(),
        initial_val_loss: outcome.initial_val_loss,
        best_epoch: outcome.best.as_ref().map(|b| b.epoch),
        best_val_loss: outcome.best.as_ref().map(|b| b.val_loss),
        steps: outcome.steps,
        train_seconds: outcome.seconds,
        test: test.clone(),
        global_mean_mse: global,
        row: TableRow::new(&cfg.model, outcome.seconds, test.as_ref().map(|t| t.mse)),
    };

    if let Some(dir) = out_dir {
        create_dir(dir)?;
        let mut meta = BTreeMap::new();
        meta.insert("run_args".to_string(), serde_json::to_value(args)?);
        meta.insert(
            "global_mean".to_string(),
            serde_json::json!(opts.global_mean),
        );
        save_checkpoint_with(&model, dir.join("model.ckpt"), meta.clone())?;
        if let Some(best) = &outcome.best {
            meta.insert("epoch".to_string(), serde_json::json!(best.epoch));
            save_checkpoint_with(&best.model, dir.join("best.ckpt"), meta)?;
        }
        write_json(&dir.join("report.json"), &report)?;
        let csv = dir.join("loss.csv");
        let file = File::create(&csv).map_err(|e| Error::Io {
            path: csv.clone(),
            source: e,
        })?;
        write_loss_curve(BufWriter::new(file), &report.epochs, cfg.curve_timing)?;
    }

    println!("{}", TableRow::HEADER);
    println!("{}", report.row);
    if let Some(v) = report.initial_val_loss {
        println!("validation MSE before training\t{v:.6}");
    }
    if let (Some(t), Some(g)) = (&report.test, report.global_mean_mse) {
        print_eval(t, g);
    }
    Ok(TrainOutcome { report, split })
}

fn print_eval(t: &Evaluation, global: f64) {
    println!("test MSE\t{:.6}", t.mse);
    println!("global-mean MSE\t{global:.6}");
    println!("test pairs\t{}", t.n_pairs);
    println!(
        "cold start\tusers {}  items {}  fallbacks {}",
        t.cold_users, t.cold_items, t.fallbacks
    );
}

pub fn evaluate_checkpoint(checkpoint: &Path, cli: &RunArgs, json: bool) -> Result<()> {
    let (manifest, _) = read_checkpoint(checkpoint)?;
    let stored: RunArgs = match manifest.metadata.get("run_args") {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| Error::CheckpointCorrupt(format!("run_args: {e}")))?,
        None => RunArgs::default(),
    };
    let args = stored.overlay(cli);
    let cfg = args.resolve()?;
    let model = load_checkpoint_into(checkpoint, cfg.model.clone())?;
    let Prepared { split, bank } = prepare(&cfg)?;
    if split.test.is_empty() {
        bail!(Error::InvalidConfig("the split has no test pairs".into()));
    }
    let t = evaluate(&model, &bank, &split.test, &eval_options(&cfg, &split)?)?;
    let g = global_mean_mse(&split.train, &split.test)?;
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({ "test": t, "global_mean_mse": g }))?
        );
    } else {
        print_eval(&t, g);
    }
    Ok(())
}

fn print_cf(ev: &CfEvaluation, global: f64) {
    println!("CF test MSE\t{:.6}", ev.mse);
    println!("global-mean MSE\t{global:.6}");
    println!("test pairs\t{}", ev.n_pairs);
    println!(
        "sources\tneighbors {}  user-mean {}  global-mean {}  (unknown users {})",
        ev.neighbors, ev.user_mean, ev.global_mean, ev.unknown_users
    );
}

pub fn baseline(args: &RunArgs, queries: &[String], export: Option<&Path>) -> Result<()> {
    let cfg = args.resolve()?;
    let records = load_records(cfg.data_path()?, cfg.strict)?;
    if !queries.is_empty() || export.is_some() {
        let matrix = RatingMatrix::from_records(&records)?;
        let sims = item_similarity(&matrix);
        for q in queries {
            let Some((user, item)) = q.rsplit_once(':') else {
                bail!(Error::InvalidConfig(format!(
                    "query `{q}` is not user:item"
                )));
            };
            let p = predict_cf(&matrix, &sims, user, item, cfg.k)?;
            println!(
                "{user}:{item}\t{}\t{:?} ({} neighbors)",
                p.value, p.source, p.neighbors
            );
        }
        if let Some(path) = export {
            let file = File::create(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            sims.write_table(BufWriter::new(file), matrix.items())?;
        }
        if !queries.is_empty() {
            return Ok(());
        }
    }
    let split = make_split(&records, &cfg.split)?;
    if split.test.is_empty() {
        bail!(Error::InvalidConfig("the split has no test pairs".into()));
    }
    let ev = evaluate_cf(&split.train, &split.test, cfg.k)?;
    print_cf(&ev, global_mean_mse(&split.train, &split.test)?);
    Ok(())
}

pub fn compare(args: &RunArgs, out_dir: Option<&Path>) -> Result<()> {
    let TrainOutcome { report, split } = train(args, out_dir)?;
    let cfg = args.resolve()?;
    let Some(test) = &report.test else {
        bail!(Error::InvalidConfig("the split has no test pairs".into()));
    };
    let cf = evaluate_cf(&split.train, &split.test, cfg.k)?;
    println!();
    println!("model\ttest MSE");
    println!("DeepCoNN ({})\t{:.6}", report.row.model, test.mse);
    println!("item-item CF\t{:.6}", cf.mse);
    println!(
        "global mean\t{:.6}",
        report.global_mean_mse.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn gradcheck(opts: &SuiteOptions) -> Result<()> {
    let outcomes = gradcheck_suite(opts)?;
    let mut failed = Vec::new();
    for o in &outcomes {
        if o.passed {
            println!(
                "PASS  {:<18} max_rel_err={:.3e}  ({} entries)",
                o.name, o.max_relative_error, o.entries_checked
            );
        } else {
            println!(
                "FAIL  {:<18} max_rel_err={:.3e}  worst {}[{}] analytic={:.6e} numeric={:.6e}",
                o.name,
                o.max_relative_error,
                o.worst_param,
                o.worst_index,
                o.worst_analytic,
                o.worst_numeric
            );
            failed.push(o.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(VerificationFailed(format!(
            "gradient check failed for {} (threshold {:e})",
            failed.join(", "),
            opts.threshold
        ))
        .into())
    }
}

pub fn export_curves(report: &Path, out: &Path, timing: bool) -> Result<()> {
    let text = fs::read_to_string(report).map_err(|e| Error::Io {
        path: report.to_path_buf(),
        source: e,
    })?;
    let epochs = if report.extension().is_some_and(|e| e == "csv") {
        read_loss_curve(&text)?
    } else {
        let r: TrainReport = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", report.display())))
            .context("reading training report")?;
        r.epochs
    };
    let file = File::create(out).map_err(|e| Error::Io {
        path: PathBuf::from(out),
        source: e,
    })?;
    write_loss_curve(BufWriter::new(file), &epochs, timing)?;
    Ok(())
}
