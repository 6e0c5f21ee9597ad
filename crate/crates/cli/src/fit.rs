//! Model fitting and BIC selection.

use std::io::Write;
use std::path::{Path, PathBuf};

use hdgmm::em_batch::{fit_batch, BatchConfig};
use hdgmm::em_online::{memory_estimate, Checkpoint, OnlineConfig, OnlineEstimator};
use hdgmm::io::{self, ChunkReader, RecordSource};
use hdgmm::matching::normalize_signals;
use hdgmm::{init_model, BasisMode, HdGmmModel};
use nalgebra::DMatrix;
use serde_json::json;

use crate::data::{load_dict, signals};
use crate::error::{CliError, CliResult};
use crate::output::{create, Basis, FitMode, Run};
use crate::{BicScanArgs, FitArgs};

/// Dictionary file read chunk by chunk, possibly for several passes.
struct FileStream {
    path: PathBuf,
    reader: ChunkReader,
    chunk: usize,
    passes_left: usize,
    normalize: bool,
}

impl FileStream {
    fn open(path: &Path, chunk: usize, passes: usize, normalize: bool) -> CliResult<Self> {
        let reader = io::open_chunked(path, chunk).map_err(CliError::at(path))?;
        Ok(Self { path: path.to_path_buf(), reader, chunk, passes_left: passes.max(1), normalize })
    }

    /// Discards `n` records, wrapping across passes like normal reads.
    fn skip(&mut self, mut n: u64) -> CliResult<()> {
        while n > 0 {
            let take = n.min(self.chunk as u64) as usize;
            match self.next_records(take)? {
                Some(b) => n -= b.nrows() as u64,
                None => return Err(CliError::Usage("checkpoint has seen more records than the stream holds".into())),
            }
        }
        Ok(())
    }
}

impl RecordSource for FileStream {
    fn dim(&self) -> usize {
        self.reader.header().m
    }

    fn next_records(&mut self, max: usize) -> hdgmm::Result<Option<DMatrix<f64>>> {
        loop {
            if let Some(batch) = self.reader.next_records(max)? {
                return if self.normalize { normalize_signals(&batch).map(Some) } else { Ok(Some(batch)) };
            }
            if self.passes_left <= 1 || self.reader.header().n == 0 {
                return Ok(None);
            }
            self.passes_left -= 1;
            self.reader = io::open_chunked(&self.path, self.chunk)?;
        }
    }
}

fn head(path: &Path, rows: usize, normalize: bool) -> CliResult<DMatrix<f64>> {
    let mut r = io::open_chunked(path, rows.max(1)).map_err(CliError::at(path))?;
    let block = r
        .next_records(rows.max(1))
        .map_err(CliError::at(path))?
        .ok_or(CliError::Core(hdgmm::Error::EmptyDictionary))?;
    if normalize {
        Ok(normalize_signals(&block)?)
    } else {
        Ok(block)
    }
}

fn per_record(model: &HdGmmModel, data: &DMatrix<f64>) -> CliResult<f64> {
    Ok(model.log_likelihood(data)? / data.nrows().max(1) as f64)
}

pub fn fit(run: &mut Run, a: FitArgs) -> CliResult<()> {
    let s = &mut run.settings;
    let dict_path = s.path("dict", a.dict)?;
    let out = s.path("out", a.out)?;
    let k = s.get("k", a.k, 8)?;
    let d = s.get("d", a.d, 10)?;
    let mode = s.get("mode", a.mode, FitMode::Batch)?;
    let normalize = s.get("normalize", a.normalize, true)?;
    let holdout = s.path_opt("holdout", a.holdout)?;
    match mode {
        FitMode::Batch => {
            let cfg = BatchConfig {
                max_iter: s.get("max-iter", a.max_iter, 200)?,
                rel_tol: s.get("tol", a.tol, 1e-7)?,
                seed: run.seed,
                ..BatchConfig::default()
            };
            run.echo_config()?;
            let dict = load_dict(&dict_path)?;
            let data = signals(&dict, normalize)?;
            let (model, trace) = fit_batch(&data, k, d, &cfg)?;
            io::write_model(&out, &model).map_err(CliError::at(&out))?;
            let (n, m) = data.shape();
            let ll = trace.final_log_likelihood().unwrap_or(f64::NAN);
            let memory = 8 * (n * m + 2 * n * k + 2 * k * m * m) as u64;
            let held = holdout_ll(&holdout, &model, normalize)?;
            println!("iterations {}", trace.iterations);
            println!("converged {}", trace.converged);
            println!("log_likelihood {ll}");
            println!("log_likelihood_per_record {}", ll / n as f64);
            if let Some(h) = held {
                println!("holdout_log_likelihood_per_record {h}");
            }
            let wall = run.elapsed();
            run.emit(
                "result",
                json!({
                    "mode": "batch", "k": k, "d": d, "n": n, "m": m,
                    "iterations": trace.iterations, "converged": trace.converged,
                    "log_likelihood": ll, "log_likelihood_per_record": ll / n as f64,
                    "holdout_log_likelihood_per_record": held,
                    "peak_memory_estimate_bytes": memory, "wall_time_s": wall,
                }),
            )
        }
        FitMode::Online => {
            let mut cfg = OnlineConfig::default();
            cfg.batch_size = s.get("batch-size", a.batch_size, cfg.batch_size)?;
            cfg.alpha = s.get("alpha", a.alpha, cfg.alpha)?;
            cfg.t0 = s.get("t0", a.t0, cfg.t0)?;
            cfg.burn_in = s.get_opt("burn-in", a.burn_in)?;
            cfg.basis_mode = match s.get("basis", a.basis, Basis::Stiefel)? {
                Basis::Eigen => BasisMode::Eigen,
                Basis::Stiefel => BasisMode::Stiefel,
            };
            let init_size = s.get("init-size", a.init_size, 2000)?;
            let passes = s.get("passes", a.passes, 1)?;
            let checkpoint = s.path_opt("checkpoint", a.checkpoint)?;
            let every = s.get("checkpoint-every", a.checkpoint_every, 0)?;
            let resume = s.path_opt("resume", a.resume)?;
            let stop_after = s.get_opt("stop-after", a.stop_after)?;
            run.echo_config()?;
            cfg.validate()?;

            let head = head(&dict_path, init_size, normalize)?;
            let mut source = FileStream::open(&dict_path, cfg.batch_size, passes, normalize)?;
            let mut est = match &resume {
                Some(path) => {
                    let cp: Checkpoint = io::read_checkpoint(path).map_err(CliError::at(path))?;
                    let seen = cp.records_seen;
                    let est = OnlineEstimator::resume(cp, cfg)?;
                    source.skip(seen)?;
                    est
                }
                None => OnlineEstimator::new(init_model(&head, k, d, run.seed)?, cfg)?,
            };
            if est.model().k() != k || est.model().d() != d || est.model().m() != source.dim() {
                return Err(CliError::Core(hdgmm::Error::DimensionMismatch {
                    expected: est.model().m(),
                    found: source.dim(),
                }));
            }
            let save = |est: &OnlineEstimator| -> CliResult<()> {
                match &checkpoint {
                    Some(p) => io::write_checkpoint(p, &est.checkpoint()).map_err(CliError::at(p)),
                    None => Ok(()),
                }
            };
            let mut batches = 0usize;
            let mut stopped = false;
            while let Some(batch) = source.next_records(cfg.batch_size).map_err(CliError::at(&dict_path))? {
                est.observe(&batch)?;
                batches += 1;
                if every > 0 && batches % every == 0 {
                    save(&est)?;
                }
                if stop_after == Some(batches) {
                    stopped = true;
                    break;
                }
            }
            let burn_in = cfg.burn_in_for(k, d);
            if !stopped && (est.records_seen() as usize) < burn_in {
                return Err(CliError::Core(hdgmm::Error::InsufficientData {
                    needed: burn_in,
                    got: est.records_seen() as usize,
                }));
            }
            save(&est)?;
            let model = est.model().clone();
            io::write_model(&out, &model).map_err(CliError::at(&out))?;
            let m = model.m();
            let ll_head = per_record(&model, &head)?;
            let held = holdout_ll(&holdout, &model, normalize)?;
            let memory = memory_estimate(k, m, d, cfg.batch_size) + 8 * (head.len() as u64);
            println!("batches {batches}");
            println!("records_seen {}", est.records_seen());
            println!("starved_events {}", est.starved_events());
            println!("head_log_likelihood_per_record {ll_head}");
            if let Some(h) = held {
                println!("holdout_log_likelihood_per_record {h}");
            }
            let wall = run.elapsed();
            run.emit(
                "result",
                json!({
                    "mode": "online", "k": k, "d": d, "m": m,
                    "batches": batches, "records_seen": est.records_seen(),
                    "starved_events": est.starved_events(), "stopped_early": stopped,
                    "head_log_likelihood_per_record": ll_head,
                    "holdout_log_likelihood_per_record": held,
                    "peak_memory_estimate_bytes": memory, "wall_time_s": wall,
                }),
            )
        }
    }
}

fn holdout_ll(path: &Option<PathBuf>, model: &HdGmmModel, normalize: bool) -> CliResult<Option<f64>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let data = signals(&load_dict(p)?, normalize)?;
            per_record(model, &data).map(Some)
        }
    }
}

pub fn bic_scan(run: &mut Run, a: BicScanArgs) -> CliResult<()> {
    let s = &mut run.settings;
    let dict_path = s.path("dict", a.dict)?;
    let k_grid: Vec<usize> = s.list("k-grid", a.k_grid, "1,2,3,4,5")?;
    let d_grid: Vec<usize> = s.list("d-grid", a.d_grid, "1,2,3,4")?;
    let normalize = s.get("normalize", a.normalize, true)?;
    let out = s.path_opt("out", a.out)?;
    let cfg = BatchConfig {
        max_iter: s.get("max-iter", a.max_iter, 200)?,
        rel_tol: s.get("tol", a.tol, 1e-7)?,
        seed: run.seed,
        ..BatchConfig::default()
    };
    run.echo_config()?;

    let data = signals(&load_dict(&dict_path)?, normalize)?;
    let scan = hdgmm::bic_scan(&data, &k_grid, &d_grid, &cfg)?;
    let mut csv = match &out {
        Some(p) => Some(create(p)?),
        None => None,
    };
    let werr = |e: std::io::Error| CliError::Io(e.to_string());
    if let Some(w) = csv.as_mut() {
        writeln!(w, "k,d,params,bic,log_likelihood,error").map_err(werr)?;
    }
    println!("{:>4} {:>4} {:>8} {:>16} {:>16}", "K", "d", "params", "BIC", "loglik");
    for c in &scan.cells {
        let (bic, ll, err) = match &c.outcome {
            Ok((b, l)) => (b.to_string(), l.to_string(), String::new()),
            Err(e) => (String::new(), String::new(), e.replace(',', ";")),
        };
        println!("{:>4} {:>4} {:>8} {:>16} {:>16} {}", c.k, c.d, c.params, bic, ll, err);
        if let Some(w) = csv.as_mut() {
            writeln!(w, "{},{},{},{bic},{ll},{err}", c.k, c.d, c.params).map_err(werr)?;
        }
        run.emit(
            "cell",
            json!({ "k": c.k, "d": c.d, "params": c.params,
                    "bic": c.outcome.as_ref().ok().map(|o| o.0),
                    "log_likelihood": c.outcome.as_ref().ok().map(|o| o.1),
                    "error": c.outcome.as_ref().err() }),
        )?;
    }
    if let Some(mut w) = csv {
        w.flush().map_err(werr)?;
    }
    match scan.best {
        Some((k, d)) => {
            println!("best K={k} d={d}");
            let wall = run.elapsed();
            run.emit("result", json!({ "best_k": k, "best_d": d, "wall_time_s": wall }))
        }
        None => Err(CliError::Core(hdgmm::Error::NoCandidates)),
    }
}
