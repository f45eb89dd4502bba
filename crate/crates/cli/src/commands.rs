//! Subcommand implementations. Each one reads the run configuration,
//! executes the corresponding pipeline, writes its artifact, and prints a
//! one-line summary on stdout. Validation problems (bad config, missing or
//! malformed inputs) exit with code 1, runtime failures with code 2.

use crate::config::RunConfig;
use crate::error::{runtime, validation, CliError};
use crate::formats;
use anyhow::anyhow;
use smallnet::evaluation::{
    cross_validate, dataset_from_recording, rank_combinations, segment_examples, ExampleOrigin,
};
use smallnet::game::{
    generate_track, run_race, AllWrongDecoder, Decoder, NetDecoder, OracleDecoder, RaceSetup,
    SignaturePilot,
};
use smallnet::ica::{fit_correction, CorrectionMatrix};
use smallnet::network;
use smallnet::protocol::{run_session, Phase, SessionReport};
use smallnet::seeds::{self, stage};
use smallnet::signal::{apply_acquisition_chain, generate_recording};
use std::path::{Path, PathBuf};

fn require_out(out: &Option<PathBuf>) -> Result<&Path, CliError> {
    out.as_deref()
        .ok_or_else(|| validation(anyhow!("this subcommand requires --out")))
}

fn load_correction_or_identity(
    path: &Option<PathBuf>,
) -> Result<CorrectionMatrix, CliError> {
    match path {
        None => Ok(CorrectionMatrix::identity()),
        Some(p) => formats::load_correction(p)
            .map(|(c, _)| c)
            .map_err(|e| validation(anyhow!("correction `{}`: {e}", p.display()))),
    }
}

/// Round-robin generation plan over the active tasks.
fn round_robin_plan(tasks: &[String], block_s: f64, n_blocks: usize) -> Vec<(String, f64)> {
    (0..n_blocks)
        .map(|i| (tasks[i % tasks.len()].clone(), block_s))
        .collect()
}

// -- gen-data -----------------------------------------------------------------

pub fn gen_data(
    config: &RunConfig,
    seed: u64,
    out: &Option<PathBuf>,
    correction: &Option<PathBuf>,
) -> Result<(), CliError> {
    let out = require_out(out)?;
    let tasks = config.active_tasks();
    let generator = config.generator(&tasks, seed).map_err(validation)?;
    let block_s = config.f64("gen.block_s", 12.0).map_err(validation)?;
    let n_blocks = config.usize("gen.n_blocks", 51).map_err(validation)?;
    let truncate = config.usize("gen.truncate", 0).map_err(validation)?;
    let grid = config.grid().map_err(validation)?;
    let corr = load_correction_or_identity(correction)?;

    let plan = round_robin_plan(&tasks, block_s, n_blocks);
    let raw = generate_recording(&plan, &generator, seeds::derive(seed, stage::SIGNAL))
        .map_err(|e| runtime(e.into()))?;
    let filtered = apply_acquisition_chain(&raw).map_err(|e| runtime(e.into()))?;
    let mut dataset = dataset_from_recording(&filtered, &grid, &corr, ExampleOrigin::Video)
        .map_err(|e| runtime(e.into()))?;
    if truncate > 0 {
        dataset.examples.truncate(truncate);
    }
    formats::save_dataset(&dataset, out).map_err(|e| runtime(e.into()))?;
    println!(
        "gen-data: {} examples over {} tasks ({:.1} s of signal) -> {}",
        dataset.len(),
        tasks.len(),
        filtered.duration_s(),
        out.display()
    );
    Ok(())
}

// -- fit-ica ------------------------------------------------------------------

pub fn fit_ica_cmd(config: &RunConfig, seed: u64, out: &Option<PathBuf>) -> Result<(), CliError> {
    let out = require_out(out)?;
    let tasks = config.active_tasks();
    let generator = config.generator(&tasks, seed).map_err(validation)?;
    let calibration_s = config.f64("ica.calibration_s", 60.0).map_err(validation)?;
    let n_components = config.usize("ica.components", 24).map_err(validation)?;
    let max_iter = config.usize("ica.max_iter", 200).map_err(validation)?;
    let tol = config.f64("ica.tol", 1e-4).map_err(validation)?;
    let threshold = config.f64("ica.threshold", 0.7).map_err(validation)?;

    let block_s = 5.0;
    let n_blocks = (calibration_s / block_s).ceil() as usize;
    let plan = round_robin_plan(&tasks, block_s, n_blocks);
    let raw = generate_recording(&plan, &generator, seeds::derive(seed, stage::SIGNAL))
        .map_err(|e| runtime(e.into()))?;
    let filtered = apply_acquisition_chain(&raw).map_err(|e| runtime(e.into()))?;
    let (model, correction) = fit_correction(&filtered, n_components, max_iter, tol,
        seeds::derive(seed, stage::ICA), threshold)
        .map_err(|e| runtime(e.into()))?;
    let flagged: Vec<usize> = model.flagged_eog.iter().copied().collect();
    formats::save_correction(&correction, &flagged, out).map_err(|e| runtime(e.into()))?;
    println!(
        "fit-ica: {} components, {} iteration(s), flagged {:?} -> {}",
        model.n_components(),
        model.iterations,
        flagged,
        out.display()
    );
    Ok(())
}

// -- train ----------------------------------------------------------------------

pub fn train_cmd(
    config: &RunConfig,
    seed: u64,
    data: &Path,
    out: &Option<PathBuf>,
    correction: &Option<PathBuf>,
) -> Result<(), CliError> {
    let out = require_out(out)?;
    let dataset = formats::load_dataset(data)
        .map_err(|e| validation(anyhow!("dataset `{}`: {e}", data.display())))?;
    if dataset.is_empty() {
        return Err(validation(anyhow!("dataset `{}` is empty", data.display())));
    }
    let arch = config.architecture().map_err(validation)?;
    let train_config = config
        .train_config(seeds::derive(seed, stage::SHUFFLE))
        .map_err(validation)?;
    let corr = load_correction_or_identity(correction)?;

    let items = dataset.train_items();
    let start = network::init(&arch, seeds::derive(seed, stage::INIT));
    let (trained, history) = network::train(&start, &items, &train_config)
        .map_err(|e| runtime(e.into()))?;
    formats::save_model(&trained, &corr, out).map_err(|e| runtime(e.into()))?;
    let holdout = history
        .iter()
        .filter_map(|h| h.holdout_accuracy)
        .fold(0.0f64, f64::max);
    println!(
        "train: {} on {} examples, {} epoch(s), holdout accuracy {:.3} -> {}",
        arch.variant.name(),
        items.len().min(train_config.max_examples),
        history.len(),
        holdout,
        out.display()
    );
    Ok(())
}

// -- cv --------------------------------------------------------------------------

pub fn cv_cmd(
    config: &RunConfig,
    seed: u64,
    data: &Path,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let dataset = formats::load_dataset(data)
        .map_err(|e| validation(anyhow!("dataset `{}`: {e}", data.display())))?;
    let arch = config.architecture().map_err(validation)?;
    let train_config = config
        .train_config(seeds::derive(seed, stage::SHUFFLE))
        .map_err(validation)?;
    let k = config.usize("cv.k", 5).map_err(validation)?;
    let n_seeds = config.usize("cv.n_seeds", 5).map_err(validation)?;

    let cv = cross_validate(&dataset, &arch, &train_config, k, n_seeds)
        .map_err(|e| runtime(e.into()))?;
    for w in &cv.warnings {
        log::warn!("{w}");
    }
    if let Some(path) = out {
        let mut text = String::from("fold");
        for s in 0..n_seeds {
            text.push_str(&format!(",seed{s}"));
        }
        text.push('\n');
        for (f, row) in cv.fold_accuracies.iter().enumerate() {
            text.push_str(&f.to_string());
            for a in row {
                text.push_str(&format!(",{a:.6}"));
            }
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| runtime(e.into()))?;
    }
    println!(
        "cv: {}x{} folds, accuracy {:.3} ± {:.3}",
        k, n_seeds, cv.mean, cv.std
    );
    Ok(())
}

// -- rank-tasks --------------------------------------------------------------------

pub fn rank_tasks_cmd(
    config: &RunConfig,
    seed: u64,
    out: &Option<PathBuf>,
    correction: &Option<PathBuf>,
) -> Result<(), CliError> {
    let out = require_out(out)?;
    let pool_tasks = config.pool_tasks();
    let generator = config.generator(&pool_tasks, seed).map_err(validation)?;
    let per_task = config.usize("rank.examples_per_task", 100).map_err(validation)?;
    let segment_s = config.f64("rank.segment_s", 1.0).map_err(validation)?;
    let alpha = config.f64("rank.alpha", 0.01).map_err(validation)?;
    let arch = config.architecture().map_err(validation)?;
    let mut train_config = config
        .train_config(seeds::derive(seed, stage::RANK))
        .map_err(validation)?;
    train_config.max_epochs = config.usize("rank.max_epochs", 5).map_err(validation)?;
    train_config.patience = 0;
    let k = config.usize("cv.k", 5).map_err(validation)?;
    let n_seeds = config.usize("cv.n_seeds", 5).map_err(validation)?;
    let grid = config.grid().map_err(validation)?;
    let corr = load_correction_or_identity(correction)?;

    // Instructed-segment pool: per_task × 1 s segments, round-robin so every
    // chronological fold sees every task.
    let plan = round_robin_plan(&pool_tasks, segment_s, per_task * pool_tasks.len());
    let raw = generate_recording(&plan, &generator, seeds::derive(seed, stage::SIGNAL))
        .map_err(|e| runtime(e.into()))?;
    let filtered = apply_acquisition_chain(&raw).map_err(|e| runtime(e.into()))?;
    let pool = segment_examples(&filtered, &grid, &corr).map_err(|e| runtime(e.into()))?;
    drop(filtered);

    let ranking = rank_combinations(&pool, &arch, &train_config, k, n_seeds, alpha)
        .map_err(|e| runtime(e.into()))?;

    let mut text = String::from("rank,task1,task2,task3,task4,mean_ta,n_sig_diff\n");
    for (i, row) in ranking.rows.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{},{},{},{:.6},{}\n",
            i + 1,
            row.tasks[0],
            row.tasks[1],
            row.tasks[2],
            row.tasks[3],
            row.mean_ta,
            row.n_sig_diff
        ));
    }
    std::fs::write(out, text).map_err(|e| runtime(e.into()))?;
    println!(
        "rank-tasks: {} combinations over {} tasks, best {:.3} ({}) -> {}",
        ranking.rows.len(),
        pool_tasks.len(),
        ranking.rows[0].mean_ta,
        ranking.rows[0].tasks.join("+"),
        out.display()
    );
    Ok(())
}

// -- race ------------------------------------------------------------------------

pub fn race_cmd(
    config: &RunConfig,
    seed: u64,
    model_path: &Option<PathBuf>,
    decoder_name: &str,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let out_dir = require_out(out)?;
    std::fs::create_dir_all(out_dir).map_err(|e| runtime(e.into()))?;
    let tasks = config.active_tasks();
    let generator = config.generator(&tasks, seed).map_err(validation)?;
    let plan = config.session_plan(seed).map_err(validation)?;
    let speed = config.speed_model().map_err(validation)?;
    let grid = config.grid().map_err(validation)?;

    let (mut decoder, correction): (Box<dyn Decoder>, CorrectionMatrix) = match decoder_name {
        "oracle" => (Box::new(OracleDecoder), CorrectionMatrix::identity()),
        "all-wrong" => (Box::new(AllWrongDecoder), CorrectionMatrix::identity()),
        "network" => {
            let path = model_path
                .as_ref()
                .ok_or_else(|| validation(anyhow!("--decoder network requires --model")))?;
            let (params, correction) = formats::load_model(path)
                .map_err(|e| validation(anyhow!("model `{}`: {e}", path.display())))?;
            (Box::new(NetDecoder { params }), correction)
        }
        other => {
            return Err(validation(anyhow!(
                "unknown decoder `{other}` (expected network, oracle, all-wrong)"
            )))
        }
    };

    let track = generate_track(
        plan.race_n_pads,
        plan.pad_length_m,
        seeds::derive(seed, stage::TRACK),
    )
    .map_err(|e| runtime(e.into()))?;
    let game_generator = generator.shifted(plan.game_gain_scale, plan.game_noise_scale);
    let mut pilot = SignaturePilot::new(&game_generator, seeds::derive(seed, stage::PILOT))
        .map_err(|e| runtime(e.into()))?;
    let setup = RaceSetup {
        track: &track,
        speed,
        grid: &grid,
        correction: &correction,
        reaction_delay_s: plan.reaction_delay_s,
        collect_examples: false,
    };
    let run = run_race(&setup, &mut pilot, decoder.as_mut()).map_err(|e| runtime(e.into()))?;
    let r = &run.result;

    let mut log_text = format!
        ("# track_seed={} n_pads={} pad_length_m={} v_correct={} v_none={} v_wrong={}\n",
        track.seed, track.pads.len(), plan.pad_length_m, speed.v_correct, speed.v_none, speed.v_wrong);
    log_text.push_str("chunk_start_s,issue_s,start_pad,issue_pad,predicted,applied\n");
    for e in &r.events {
        log_text.push_str(&format!(
            "{:.3},{:.3},{},{},{},{}\n",
            e.chunk_start_time_s,
            e.issue_time_s,
            e.chunk_start_pad,
            e.pad_at_issue,
            e.predicted_label,
            e.applied
        ));
    }
    std::fs::write(out_dir.join("race.log"), log_text).map_err(|e| runtime(e.into()))?;
    let summary = format!(
        "race_id,time_s,acc1,acc2\n0,{:.3},{:.6},{:.6}\n",
        r.completion_time_s, r.acc1, r.acc2
    );
    std::fs::write(out_dir.join("race.csv"), summary).map_err(|e| runtime(e.into()))?;
    println!(
        "race: {} decoder finished in {:.1} s, acc1 {:.3}, acc2 {:.3}, decode wall mean {:.1} ms max {:.1} ms -> {}",
        decoder.name(),
        r.completion_time_s,
        r.acc1,
        r.acc2,
        1e3 * r.mean_decode_wall_s,
        1e3 * r.max_decode_wall_s,
        out_dir.display()
    );
    Ok(())
}

// -- session -----------------------------------------------------------------------

pub fn session_cmd(config: &RunConfig, seed: u64, out: &Option<PathBuf>) -> Result<(), CliError> {
    let out_dir = require_out(out)?;
    std::fs::create_dir_all(out_dir).map_err(|e| runtime(e.into()))?;
    let tasks = config.active_tasks();
    let generator = config.generator(&tasks, seed).map_err(validation)?;
    let plan = config.session_plan(seed).map_err(validation)?;
    let speed = config.speed_model().map_err(validation)?;
    let arch = config.architecture().map_err(validation)?;
    let train_config = config.train_config(0).map_err(validation)?; // session derives its own
    let grid = config.grid().map_err(validation)?;

    let report = run_session(&plan, &arch, &train_config, &generator, &speed, &grid)
        .map_err(|e| runtime(e.into()))?;
    write_session_artifacts(&report, out_dir)?;

    let wall_max = report
        .rows
        .iter()
        .map(|r| r.max_decode_wall_s)
        .fold(0.0f64, f64::max);
    println!(
        "session: {} races ({} warmup, {} adaptive), video examples {}, video test acc {:.3}, \
         adaptive mean acc2 {:.3}, max decode wall {:.1} ms -> {}",
        report.rows.len(),
        report.rows.iter().filter(|r| r.phase == Phase::Warmup).count(),
        report.rows.iter().filter(|r| r.phase == Phase::Adaptive).count(),
        report.video_example_count,
        report.video_test_accuracy,
        report.mean_acc2(Phase::Adaptive),
        1e3 * wall_max,
        out_dir.display()
    );
    if let Some(err) = &report.error {
        return Err(runtime(anyhow!("session truncated: {err}")));
    }
    Ok(())
}

pub fn write_session_artifacts(report: &SessionReport, out_dir: &Path) -> Result<(), CliError> {
    let mut csv = String::from("race_id,phase,time_s,acc1,acc2,test_acc\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{:.3},{:.6},{:.6},{:.6}\n",
            row.race_id,
            row.phase.name(),
            row.completion_time_s,
            row.acc1,
            row.acc2,
            row.test_accuracy
        ));
    }
    std::fs::write(out_dir.join("report.csv"), csv).map_err(|e| runtime(e.into()))?;

    let mut text = String::new();
    text.push_str(&format!(
        "video_examples = {}\nvideo_test_accuracy = {:.6}\nflagged_components = {:?}\n",
        report.video_example_count, report.video_test_accuracy, report.flagged_components
    ));
    text.push_str(&format!(
        "warmup_mean_acc2 = {:.6}\nadaptive_mean_acc2 = {:.6}\n",
        report.mean_acc2(Phase::Warmup),
        report.mean_acc2(Phase::Adaptive)
    ));
    text.push_str(&format!(
        "adaptive_mean_test_accuracy = {:.6}\n",
        report.mean_test_accuracy(Phase::Adaptive)
    ));
    text.push_str(&format!(
        "pearson_test_accuracy_vs_time = {:.6}\n",
        report.pearson_accuracy_time()
    ));
    text.push_str("\n# test_accuracy,completion_time_s\n");
    for (acc, time) in report.accuracy_time_pairs() {
        text.push_str(&format!("{acc:.6},{time:.3}\n"));
    }
    if let Some(err) = &report.error {
        text.push_str(&format!("\nerror = {err}\n"));
    }
    std::fs::write(out_dir.join("summary.txt"), text).map_err(|e| runtime(e.into()))?;
    Ok(())
}

// -- report ------------------------------------------------------------------------

pub fn report_cmd(input: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| validation(anyhow!("report `{}`: {e}", input.display())))?;
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| validation(anyhow!("report `{}` is empty", input.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let time_idx = cols
        .iter()
        .position(|c| *c == "time_s")
        .ok_or_else(|| validation(anyhow!("report missing `time_s` column")))?;
    let acc_idx = cols
        .iter()
        .position(|c| *c == "test_acc")
        .ok_or_else(|| validation(anyhow!("report missing `test_acc` column")))?;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |idx: usize| -> Result<f64, CliError> {
            fields
                .get(idx)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| validation(anyhow!("report line {}: bad field {idx}", i + 2)))
        };
        pairs.push((parse(acc_idx)?, parse(time_idx)?));
    }
    if pairs.is_empty() {
        return Err(validation(anyhow!("report has no data rows")));
    }
    let (acc, time): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let r = smallnet::evaluation::pearson(&acc, &time);
    println!("report: {} race(s)", pairs.len());
    println!("test_accuracy,completion_time_s");
    for (a, t) in &pairs {
        println!("{a:.6},{t:.3}");
    }
    println!("pearson_r = {r:.4}");
    Ok(())
}
