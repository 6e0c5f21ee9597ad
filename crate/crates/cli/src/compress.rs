//! Compression, decoding and the loss table.

use hdgmm::em_batch::{fit_batch, BatchConfig};
use hdgmm::eval::{hdgmm_row, svd_row, EvalRow};
use hdgmm::io;
use hdgmm::matching::{svd_compress, Dictionary};
use hdgmm::reduction::{compressed_size_bytes, gigaoctets, reconstruct_dataset, reduce_dataset, CompressionReport};
use hdgmm::HdGmmModel;
use serde_json::json;

use crate::data::{load_dict, signals};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_snr, Run, Width};
use crate::{CompressArgs, EvaluateArgs, ReconstructArgs};

pub fn compress(run: &mut Run, a: CompressArgs) -> CliResult<()> {
    let s = &mut run.settings;
    let dict_path = s.path("dict", a.dict)?;
    let model_path = s.path("model", a.model)?;
    let out = s.path("out", a.out)?;
    let normalize = s.get("normalize", a.normalize, true)?;
    let width = s.get("width", a.width, Width::F64)?;
    run.echo_config()?;

    let model = io::read_model(&model_path).map_err(CliError::at(&model_path))?;
    let data = signals(&load_dict(&dict_path)?, normalize)?;
    let cds = reduce_dataset(&model, &data)?;
    io::write_compressed(&out, &cds, width.into()).map_err(CliError::at(&out))?;
    let bytes = io::compressed_file_len(model.k(), model.m(), model.d(), cds.count() as u64, width.into());
    let payload = compressed_size_bytes(cds.count() as u64, model.d(), 8, false);
    let sizes = cds.cluster_sizes();
    println!("records {}", cds.count());
    println!("clusters {}", model.k());
    println!("cluster_sizes {}", sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    println!("coordinate_bytes {payload}");
    println!("file_bytes {bytes}");
    run.emit(
        "result",
        json!({ "n": cds.count(), "k": model.k(), "d": model.d(), "cluster_sizes": sizes,
                "coordinate_bytes": payload, "file_bytes": bytes }),
    )
}

pub fn reconstruct(run: &mut Run, a: ReconstructArgs) -> CliResult<()> {
    let s = &mut run.settings;
    let path = s.path("compressed", a.compressed)?;
    let out = s.path("out", a.out)?;
    let labels_from = s.path_opt("labels-from", a.labels_from)?;
    let width = s.get("width", a.width, Width::F64)?;
    run.echo_config()?;

    let cds = io::read_compressed(&path).map_err(CliError::at(&path))?;
    let signals = reconstruct_dataset(&cds)?;
    let dict = match &labels_from {
        Some(p) => {
            let (_, labels, names) = load_dict(p)?.into_parts();
            if labels.nrows() != signals.nrows() {
                return Err(CliError::Core(hdgmm::Error::DimensionMismatch {
                    expected: signals.nrows(),
                    found: labels.nrows(),
                }));
            }
            Dictionary::new(signals, labels, names)?
        }
        None => Dictionary::unlabeled(signals)?,
    };
    io::write_dictionary(&out, &dict, width.into()).map_err(CliError::at(&out))?;
    println!("records {}", dict.len());
    println!("samples {}", dict.m());
    run.emit("result", json!({ "n": dict.len(), "m": dict.m() }))
}

fn size_table(run: &mut Run, n: u64, ds: &[usize], m: Option<usize>, stated: Option<u64>) -> CliResult<()> {
    println!("{:>4} {:>14} {:>8}", "d", "bytes", "Go");
    for &d in ds {
        let bytes = compressed_size_bytes(n, d, 8, false);
        println!("{d:>4} {bytes:>14} {:>8.2}", gigaoctets(bytes));
        run.emit("size", json!({ "n": n, "d": d, "bytes": bytes, "go": gigaoctets(bytes) }))?;
        if let Some(m) = m {
            let rep = CompressionReport::new(n, m, d, 8, stated);
            println!(
                "     ratio vs raw {:.1}% ({} bytes){}",
                100.0 * rep.raw_ratio,
                rep.raw_original_bytes,
                rep.stated_ratio.map(|r| format!(", vs stated {:.1}%", 100.0 * r)).unwrap_or_default()
            );
            if rep.original_size_discrepancy {
                println!("     warning: stated original size differs from N·M·8 bytes by more than 1%");
            }
            run.emit(
                "compression",
                json!({ "n": n, "m": m, "d": d, "compressed_bytes": rep.compressed_bytes,
                        "raw_original_bytes": rep.raw_original_bytes, "raw_ratio": rep.raw_ratio,
                        "stated_original_bytes": rep.stated_original_bytes, "stated_ratio": rep.stated_ratio,
                        "original_size_discrepancy": rep.original_size_discrepancy }),
            )?;
        }
    }
    Ok(())
}

pub fn evaluate(run: &mut Run, a: EvaluateArgs) -> CliResult<()> {
    let s = &mut run.settings;
    let size_query = s.get_opt("size-query", a.size_query)?;
    let ds: Vec<usize> = s.list("d", a.d, "4,6,8")?;
    if let Some(n) = size_query {
        let m = s.get_opt("m", a.m)?;
        let stated = s.get_opt("stated-original-bytes", a.stated_original_bytes)?;
        run.echo_config()?;
        return size_table(run, n, &ds, m, stated);
    }
    let dict_path = s.path("dict", a.dict)?;
    let model_path = s.path_opt("model", a.model)?;
    let snrs: Vec<f64> = s.list("snr", a.snr, "15")?;
    let k = s.get("k", a.k, 8)?;
    let max_iter = s.get("max-iter", a.max_iter, 30)?;
    let normalize = s.get("normalize", a.normalize, true)?;
    run.echo_config()?;

    let clean = signals(&load_dict(&dict_path)?, normalize)?;
    let fixed: Option<HdGmmModel> = match &model_path {
        Some(p) => Some(io::read_model(p).map_err(CliError::at(p))?),
        None => None,
    };
    let ds = match &fixed {
        Some(model) => vec![model.d()],
        None => ds,
    };
    let levels: Vec<Option<f64>> = std::iter::once(None).chain(snrs.iter().copied().map(Some)).collect();
    let cfg = BatchConfig { max_iter, seed: run.seed, ..BatchConfig::default() };
    let unlabeled = Dictionary::unlabeled(clean.clone())?;
    let mut rows: Vec<EvalRow> = Vec::new();
    for &d in &ds {
        let model = match &fixed {
            Some(m) => m.clone(),
            None => fit_batch(&clean, k, d, &cfg)?.0,
        };
        if model.m() != clean.ncols() {
            return Err(CliError::Core(hdgmm::Error::DimensionMismatch { expected: model.m(), found: clean.ncols() }));
        }
        let sc = svd_compress(&unlabeled, d)?;
        for (i, &snr) in levels.iter().enumerate() {
            let noise_seed = run.seed.wrapping_add(1 + i as u64);
            rows.push(svd_row(&sc, &clean, snr, noise_seed)?);
            rows.push(hdgmm_row(&model, &clean, snr, noise_seed)?);
        }
    }
    println!("{:>6} {:>4} {:>6} {:>12} {:>12}", "method", "d", "snr", "mae", "size_bytes");
    for r in &rows {
        println!("{:>6} {:>4} {:>6} {:>12.6e} {:>12}", r.method.name(), r.d, fmt_snr(r.snr_db), r.mae, r.size_bytes);
    }
    for r in &rows {
        run.emit(
            "row",
            json!({ "method": r.method.name(), "d": r.d, "snr_db": r.snr_db, "snr": fmt_snr(r.snr_db),
                    "mae": r.mae, "size_bytes": r.size_bytes }),
        )?;
    }
    let wall = run.elapsed();
    run.emit("result", json!({ "rows": rows.len(), "wall_time_s": wall }))
}
