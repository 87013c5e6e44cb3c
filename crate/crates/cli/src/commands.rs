//! The five subcommands as library functions returning their artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mtpp_core::conflictscope::{
    export_histograms, one_step_comparison, read_records, write_records, ConflictStats,
    GroupSummary, POOLED,
};
use mtpp_core::diffgraph::ParamStore;
use mtpp_core::trainer::epoch_batches;
use mtpp_core::{
    evaluate, fit, load_dataset, split_dataset, write_dataset, write_history, Dataset, EvalReport,
    EventSequence, Model, ModelSpec, Objective, Setting,
};
use serde::Serialize;

use crate::config::{RunConfig, SynthConfig};
use crate::error::{CliError, CliResult};

pub const SYNTH_DATA_FILE: &str = "events.jsonl";
pub const PROVENANCE_FILE: &str = "provenance.toml";
pub const RUN_CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const TEST_DATA_FILE: &str = "test.jsonl";
pub const CONFLICT_STEPS_FILE: &str = "conflict_steps.csv";
pub const CONFLICT_HISTOGRAM_FILE: &str = "conflict_histograms.csv";
pub const CONFLICT_SUMMARY_FILE: &str = "conflict_summary.csv";
pub const COMPARE_FILE: &str = "compare.csv";

/// Step size of the one-step shared-vs-duplicated comparison in `compare`.
pub const COMPARE_STEP: f64 = 1e-4;

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: String,
    config_hash: String,
    seed: u64,
    sequences: usize,
    events: usize,
    synth: &'a SynthConfig,
}

/// Simulates the configured Hawkes process into `out`; returns the data path.
pub fn synth(cfg: &RunConfig, out: &Path) -> CliResult<PathBuf> {
    let synth = cfg.data.synth.as_ref().ok_or_else(|| CliError::Config {
        path: PathBuf::from("<config>"),
        message: "synth needs a [data.synth] section".into(),
    })?;
    synth.hawkes()?;
    let data = cfg.load_data()?;
    create_dir(out)?;
    let path = out.join(SYNTH_DATA_FILE);
    write_dataset(&data, &path)?;
    let provenance = Provenance {
        tool: format!("mtpp {}", env!("CARGO_PKG_VERSION")),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        sequences: data.len(),
        events: data.num_events(),
        synth,
    };
    let text = toml::to_string(&provenance).expect("provenance serializes");
    write_text(
        &out.join(PROVENANCE_FILE),
        &format!("# {}\n{text}", cfg.comment()),
    )?;
    Ok(path)
}

/// Data folds and the fully resolved configuration of a run.
pub struct Prepared {
    pub config: RunConfig,
    pub spec: ModelSpec,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Seeds, loads, splits and pins the model spec.
pub fn prepare(mut cfg: RunConfig) -> CliResult<Prepared> {
    cfg.propagate_seed();
    let data = cfg.load_data()?;
    let (train, val, test) = split_dataset(&data, &cfg.split_spec())?;
    let spec = cfg.model_spec(data.num_marks)?;
    cfg.pin_model(&spec);
    Ok(Prepared {
        config: cfg,
        spec,
        train,
        val,
        test,
    })
}

pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub model: Model,
    pub config: RunConfig,
    pub test: Dataset,
    pub conflicts: ConflictStats,
    pub epochs: usize,
    pub report: Option<EvalReport>,
}

/// Trains one configuration and writes its run directory.
pub fn train(cfg: RunConfig, out: &Path) -> CliResult<TrainOutcome> {
    let p = prepare(cfg)?;
    let comment = p.config.comment();
    create_dir(out)?;
    write_text(
        &out.join(RUN_CONFIG_FILE),
        &format!("# {comment}\n{}", p.config.to_toml()),
    )?;
    write_dataset(&p.test, out.join(TEST_DATA_FILE))?;

    let model = Model::new(p.spec, p.config.seed)?;
    let result = fit(model, &p.train, &p.val, &p.config.train)?;
    result.model.store.save(out.join(CHECKPOINT_FILE))?;
    write_history(&result.history, &out.join(HISTORY_FILE), &comment)?;
    write_records(
        &result.conflicts.records,
        &out.join(CONFLICT_STEPS_FILE),
        &comment,
    )?;
    export_histograms(
        &result.conflicts,
        &out.join(CONFLICT_HISTOGRAM_FILE),
        &out.join(CONFLICT_SUMMARY_FILE),
        &comment,
    )?;
    let report = if p.config.evaluate {
        let report = evaluate(&result.model, &p.test, &p.config.eval)?;
        mtpp_core::write_report(&report, out, &comment)?;
        Some(report)
    } else {
        None
    };
    Ok(TrainOutcome {
        run_dir: out.to_path_buf(),
        model: result.model,
        config: p.config,
        test: p.test,
        conflicts: result.conflicts,
        epochs: result.history.len(),
        report,
    })
}

/// Rebuilds the trained model stored in a run directory.
pub fn load_run(run_dir: &Path) -> CliResult<(RunConfig, Model)> {
    let ckpt = run_dir.join(CHECKPOINT_FILE);
    if !ckpt.is_file() {
        return Err(CliError::MissingCheckpoint(ckpt));
    }
    let cfg = RunConfig::load(&run_dir.join(RUN_CONFIG_FILE))?;
    let num_marks = cfg.model.num_marks.ok_or_else(|| CliError::Config {
        path: run_dir.join(RUN_CONFIG_FILE),
        message: "model.num_marks missing from a resolved config".into(),
    })?;
    let spec = cfg.model_spec(num_marks)?;
    let store = ParamStore::load(&ckpt)?;
    Ok((cfg.clone(), Model::from_store(spec, &store)?))
}

/// Evaluates a run on `data` (default: its stored test fold) and writes
/// the report files into `out` (default: the run directory).
pub fn eval(run_dir: &Path, data: Option<&Path>, out: Option<&Path>) -> CliResult<EvalReport> {
    let (cfg, model) = load_run(run_dir)?;
    let data_path = data
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join(TEST_DATA_FILE));
    let test = load_dataset(&data_path, Some(model.spec().num_marks))?;
    let report = evaluate(&model, &test, &cfg.eval)?;
    let out = out.unwrap_or(run_dir);
    create_dir(out)?;
    mtpp_core::write_report(&report, out, &cfg.comment())?;
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn summary_table(summaries: &[GroupSummary]) -> String {
    let mut s = format!(
        "{:<28} {:>7} {:>9} {:>11} {:>7} {:>9} {:>9}\n",
        "group", "steps", "undefined", "conflicting", "CG", "mean_GMS", "mean_TPI"
    );
    for g in summaries {
        let _ = writeln!(
            s,
            "{:<28} {:>7} {:>9} {:>11} {:>7} {:>9} {:>9}",
            g.group,
            g.steps,
            g.undefined,
            g.conflicting,
            fmt_opt(g.cg),
            fmt_opt(g.mean_gms),
            fmt_opt(g.mean_tpi)
        );
    }
    s
}

/// Per-block and pooled conflict statistics of a run, as printable text.
pub fn diagnose(run_dir: &Path) -> CliResult<String> {
    let path = run_dir.join(CONFLICT_STEPS_FILE);
    if !path.is_file() {
        return Err(CliError::MissingDiagnostics(path));
    }
    let stats = ConflictStats {
        records: read_records(&path)?,
    };
    if stats.is_empty() {
        return Ok("no shared blocks: the time and mark losses share no parameters, so no conflicts were recorded\n".into());
    }
    let summaries = stats.summaries();
    let mut s = summary_table(&summaries);
    s.push_str("\ncos histogram (40 bins on [-1, 1])\n");
    for g in &summaries {
        let counts: Vec<String> = g.histogram.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "{:<28} {}", g.group, counts.join(" "));
    }
    Ok(s)
}

/// One row of the `compare` table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub run: String,
    pub setting: Setting,
    pub decoder: String,
    pub params: usize,
    pub test_time: f64,
    pub test_mark: f64,
    pub cg: Option<f64>,
    pub mean_gms: Option<f64>,
    pub mean_tpi: Option<f64>,
    /// Total-loss change after one plain step from a shared initialization,
    /// relative to the base model; set only for base versus dup pairs.
    pub delta_one_step: Option<f64>,
}

/// `L_disjoint - L_shared` after one step from identical initialization,
/// when one config is `base` and the other a duplicated setting of it.
fn one_step_delta(
    a: &ModelSpec,
    b: &ModelSpec,
    cfg: &RunConfig,
    train: &Dataset,
) -> CliResult<Option<(bool, f64)>> {
    let dup = |s: Setting| matches!(s, Setting::Dup | Setting::DupDisjoint);
    let (base, other, base_first) = match (a.setting, b.setting) {
        (Setting::Base, s) if dup(s) => (a, b, true),
        (s, Setting::Base) if dup(s) => (b, a, false),
        _ => return Ok(None),
    };
    if base.family != other.family
        || base.widths != other.widths
        || base.num_marks != other.num_marks
    {
        return Ok(None);
    }
    let shared = Model::new(*base, cfg.seed)?;
    let duplicated = Model::duplicate_from(&shared, other.setting)?;
    let batch_idx = epoch_batches(train.len(), cfg.train.batch_size, cfg.seed, 1).remove(0);
    let batch: Vec<&EventSequence> = batch_idx.iter().map(|i| &train.sequences[*i]).collect();
    let objective = Objective::new(cfg.train.form, cfg.train.quadrature)?;
    let report = one_step_comparison(&shared, &duplicated, &batch, &objective, &[COMPARE_STEP])?;
    Ok(Some((base_first, report.rows[0].delta)))
}

fn row(label: &str, outcome: &TrainOutcome) -> CliResult<CompareRow> {
    let seqs: Vec<&EventSequence> = outcome.test.sequences.iter().collect();
    let nll = Objective::new(outcome.config.eval.form, outcome.config.eval.quadrature)?
        .evaluate(&outcome.model, &seqs)?;
    let pooled = outcome.conflicts.summary(POOLED);
    let spec = outcome.model.spec();
    Ok(CompareRow {
        run: label.to_string(),
        setting: spec.setting,
        decoder: spec.family.to_string(),
        params: outcome.model.store.total_params(),
        test_time: nll.time_loss,
        test_mark: nll.mark_loss,
        cg: pooled.as_ref().and_then(|p| p.cg),
        mean_gms: pooled.as_ref().and_then(|p| p.mean_gms),
        mean_tpi: pooled.as_ref().and_then(|p| p.mean_tpi),
        delta_one_step: None,
    })
}

/// Trains two configurations on the data of the first, sequentially, and
/// tabulates them side by side. Runs land in `out/a` and `out/b`.
pub fn compare(a: RunConfig, b: RunConfig, out: &Path) -> CliResult<(Vec<CompareRow>, String)> {
    if a.data != b.data {
        return Err(CliError::Config {
            path: PathBuf::from("<compare>"),
            message: "both configs must use the same data section".into(),
        });
    }
    let delta = {
        let (pa, pb) = (prepare(a.clone())?, prepare(b.clone())?);
        one_step_delta(&pa.spec, &pb.spec, &pa.config, &pa.train)?
    };
    let run_a = train(a, &out.join("a"))?;
    let run_b = train(b, &out.join("b"))?;
    let mut rows = vec![row("a", &run_a)?, row("b", &run_b)?];
    if let Some((base_first, d)) = delta {
        let (base, dup) = if base_first { (0, 1) } else { (1, 0) };
        rows[base].delta_one_step = Some(0.0);
        rows[dup].delta_one_step = Some(d);
    }

    let comment = format!(
        "mtpp {} configs={},{}",
        env!("CARGO_PKG_VERSION"),
        run_a.config.hash(),
        run_b.config.hash()
    );
    let mut csv = format!("# {comment}\nrun,setting,decoder,params,test_LT,test_LM,CG,mean_GMS,mean_TPI,delta_one_step\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut table = format!(
        "{:<4} {:<12} {:<7} {:>8} {:>10} {:>10} {:>7} {:>9} {:>9} {:>12}\n",
        "run",
        "setting",
        "decoder",
        "params",
        "test_LT",
        "test_LM",
        "CG",
        "mean_GMS",
        "mean_TPI",
        "delta_1step"
    );
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            r.run,
            r.setting,
            r.decoder,
            r.params,
            r.test_time,
            r.test_mark,
            opt(r.cg),
            opt(r.mean_gms),
            opt(r.mean_tpi),
            opt(r.delta_one_step)
        );
        let _ = writeln!(
            table,
            "{:<4} {:<12} {:<7} {:>8} {:>10.4} {:>10.4} {:>7} {:>9} {:>9} {:>12}",
            r.run,
            r.setting.to_string(),
            r.decoder,
            r.params,
            r.test_time,
            r.test_mark,
            fmt_opt(r.cg),
            fmt_opt(r.mean_gms),
            fmt_opt(r.mean_tpi),
            r.delta_one_step
                .map(|d| format!("{d:.3e}"))
                .unwrap_or_else(|| "-".into())
        );
    }
    write_text(&out.join(COMPARE_FILE), &csv)?;
    Ok((rows, table))
}
