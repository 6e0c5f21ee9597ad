//! Generators and file inspection.

use std::path::Path;

use hdgmm::io::{self, FileInfo, SampleWidth};
use hdgmm::matching::{normalize_signals, Dictionary};
use hdgmm::synth::{self, RandomModelSpec, SyntheticGrid};
use nalgebra::DMatrix;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::output::{Run, Width};
use crate::{GenDictArgs, GenGmmArgs, InfoArgs};

pub fn load_dict(path: &Path) -> CliResult<Dictionary> {
    io::read_dictionary(path).map_err(CliError::at(path))
}

/// Signals of `dict`, row-normalized when asked.
pub fn signals(dict: &Dictionary, normalize: bool) -> CliResult<DMatrix<f64>> {
    if normalize {
        Ok(normalize_signals(dict.signals())?)
    } else {
        Ok(dict.signals().clone())
    }
}

/// Predicted file size from the header arithmetic.
fn dictionary_bytes(n: usize, m: usize, names: &[String], width: SampleWidth) -> u64 {
    io::dictionary_header_len(names) + (n * (m + names.len()) * width.bytes()) as u64
}

fn write_and_report(run: &mut Run, out: &Path, dict: &Dictionary, width: Width) -> CliResult<()> {
    io::write_dictionary(out, dict, width.into()).map_err(CliError::at(out))?;
    let bytes = dictionary_bytes(dict.len(), dict.m(), dict.label_names(), width.into());
    println!("records {}", dict.len());
    println!("samples {}", dict.m());
    println!("bytes {bytes}");
    run.emit("result", json!({ "n": dict.len(), "m": dict.m(), "bytes": bytes, "out": out.display().to_string() }))
}

pub fn gen_dict(run: &mut Run, a: GenDictArgs) -> CliResult<()> {
    let s = &mut run.settings;
    let def = SyntheticGrid::default();
    let out = s.path("out", a.out)?;
    let t1: Vec<f64> = s.list("t1", a.t1, "1.0")?;
    let t2_min = s.get("t2-min", a.t2_min, 0.02)?;
    let t2_max = s.get("t2-max", a.t2_max, 0.6)?;
    let t2_n = s.get("t2-n", a.t2_n, def.t2.len())?;
    let df_min = s.get("df-min", a.df_min, 0.0)?;
    let df_max = s.get("df-max", a.df_max, 40.0)?;
    let df_n = s.get("df-n", a.df_n, def.df.len())?;
    let m = s.get("m", a.m, def.m)?;
    let dt = s.get("dt", a.dt, def.dt)?;
    let tr = s.get("tr", a.tr, def.tr)?;
    let snr = s.get_opt("snr", a.snr)?;
    let width = s.get("width", a.width, Width::F64)?;
    run.echo_config()?;

    if t2_min <= 0.0 || t2_max < t2_min {
        return Err(CliError::Usage("T2 range must satisfy 0 < t2-min ≤ t2-max".into()));
    }
    let grid = SyntheticGrid {
        t1,
        t2: synth::geomspace(t2_min, t2_max, t2_n),
        df: synth::linspace(df_min, df_max, df_n),
        m,
        dt,
        tr,
    };
    let mut dict = synth::gen_synthetic_dictionary(&grid)?;
    if let Some(snr) = snr {
        let (clean, labels, names) = dict.into_parts();
        dict = Dictionary::new(synth::add_noise(&clean, snr, run.seed)?, labels, names)?;
    }
    write_and_report(run, &out, &dict, width)
}

pub fn gen_gmm(run: &mut Run, a: GenGmmArgs) -> CliResult<()> {
    let s = &mut run.settings;
    let out = s.path("out", a.out)?;
    let model_out = s.path_opt("model-out", a.model_out)?;
    let k = s.get("k", a.k, 3)?;
    let m = s.get("m", a.m, 10)?;
    let d = s.get("d", a.d, 2)?;
    let n = s.get("n", a.n, 1500)?;
    let sample_seed = s.get("sample-seed", a.sample_seed, run.seed.wrapping_add(1))?;
    let mut spec = RandomModelSpec::new(k, m, d);
    spec.separation = s.get("separation", a.separation, spec.separation)?;
    spec.noise = s.get("noise", a.noise, spec.noise)?;
    let width = s.get("width", a.width, Width::F64)?;
    run.echo_config()?;

    let model = synth::random_model(&spec, run.seed)?;
    let (samples, comp) = synth::sample_hdgmm(&model, n, sample_seed)?;
    let labels = DMatrix::from_fn(n, 1, |i, _| comp[i] as f64);
    let dict = Dictionary::new(samples, labels, vec!["component".to_string()])?;
    if let Some(path) = &model_out {
        io::write_model(path, &model).map_err(CliError::at(path))?;
    }
    write_and_report(run, &out, &dict, width)
}

pub fn info(run: &mut Run, a: InfoArgs) -> CliResult<()> {
    run.echo_config()?;
    let info = io::inspect(&a.path).map_err(CliError::at(&a.path))?;
    let record = match &info {
        FileInfo::Dictionary(h) => {
            println!("format dictionary");
            println!("version {}", h.version);
            println!("records {}", h.n);
            println!("samples {}", h.m);
            println!("labels {}", h.label_names.join(","));
            println!("width {}", h.width.bytes() * 8);
            println!("header_bytes {}", h.header_len);
            println!("bytes {}", h.file_len());
            json!({ "format": "dictionary", "n": h.n, "m": h.m, "labels": h.label_names, "bytes": h.file_len() })
        }
        FileInfo::Model { k, m, d, bytes } => {
            println!("format model");
            println!("k {k}\nm {m}\nd {d}\nbytes {bytes}");
            json!({ "format": "model", "k": k, "m": m, "d": d, "bytes": bytes })
        }
        FileInfo::Compressed { k, m, d, n, bytes } => {
            println!("format compressed");
            println!("k {k}\nm {m}\nd {d}\nrecords {n}\nbytes {bytes}");
            json!({ "format": "compressed", "k": k, "m": m, "d": d, "n": n, "bytes": bytes })
        }
        FileInfo::Checkpoint { k, m, d, t, records_seen, bytes } => {
            println!("format checkpoint");
            println!("k {k}\nm {m}\nd {d}\nbatches {t}\nrecords_seen {records_seen}\nbytes {bytes}");
            json!({ "format": "checkpoint", "k": k, "m": m, "d": d, "t": t, "records_seen": records_seen, "bytes": bytes })
        }
    };
    run.emit("result", record)
}
