mod common;

use common::*;
use hdgmm::em_online::Checkpoint;
use hdgmm::io::*;
use hdgmm::reduction::{reconstruction_mae, reduce_dataset};
use hdgmm::synth::sample_hdgmm;
use hdgmm::{Dictionary, OnlineConfig, OnlineEstimator};
use nalgebra::DMatrix;
use std::fs;

fn random_dict(n: usize, m: usize, p: usize, seed: u64) -> Dictionary {
    let mut r = rng(seed);
    let names = (0..p).map(|j| format!("p{j}")).collect();
    Dictionary::new(gaussian_mat(n, m, &mut r), gaussian_mat(n, p, &mut r), names).unwrap()
}

#[test]
fn dictionary_roundtrip_is_bitwise_at_width_8() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.hdgf");
    let dict = random_dict(100, 16, 3, 1);
    write_dictionary(&path, &dict, SampleWidth::F64).unwrap();
    let back = read_dictionary(&path).unwrap();
    assert_eq!(back, dict);
    let header = read_dictionary_header(&path).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), header.file_len());
    assert_eq!(header.header_len, dictionary_header_len(dict.label_names()));
}

#[test]
fn width_4_roundtrip_quantizes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.hdgf");
    let dict = random_dict(20, 5, 2, 2);
    write_dictionary(&path, &dict, SampleWidth::F32).unwrap();
    let back = read_dictionary(&path).unwrap();
    assert_eq!(back.signals(), &dict.signals().map(|v| v as f32 as f64));
    assert_eq!(back.labels(), &dict.labels().map(|v| v as f32 as f64));
}

#[test]
fn chunked_reads_concatenate_to_whole_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.hdgf");
    let dict = random_dict(100, 16, 3, 3);
    write_dictionary(&path, &dict, SampleWidth::F64).unwrap();
    let mut reader = open_chunked(&path, 7).unwrap();
    let mut sig = Vec::new();
    let mut lab = Vec::new();
    let mut sizes = Vec::new();
    while let Some((s, l)) = reader.next_chunk().unwrap() {
        sizes.push(s.nrows());
        sig.push(s);
        lab.push(l);
    }
    assert!(sizes[..sizes.len() - 1].iter().all(|&s| s == 7));
    assert_eq!(sizes.iter().sum::<usize>(), 100);
    let stack = |parts: &[DMatrix<f64>], cols| {
        let rows: usize = parts.iter().map(|p| p.nrows()).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut at = 0;
        for p in parts {
            out.rows_mut(at, p.nrows()).copy_from(p);
            at += p.nrows();
        }
        out
    };
    assert_eq!(&stack(&sig, 16), dict.signals());
    assert_eq!(&stack(&lab, 3), dict.labels());

    let mut src = open_chunked(&path, 1000).unwrap();
    let mut rows = 0;
    while let Some(b) = src.next_records(13).unwrap() {
        assert_eq!(b, dict.signals().rows(rows, b.nrows()).into_owned());
        rows += b.nrows();
    }
    assert_eq!(rows, 100);
}

#[test]
fn malformed_dictionaries_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.hdgf");
    write_dictionary(&path, &random_dict(10, 4, 1, 4), SampleWidth::F64).unwrap();
    let bytes = fs::read(&path).unwrap();

    let bad = dir.path().join("bad");
    fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(read_dictionary(&bad), Err(hdgmm::Error::Format(_))));

    let mut wrong_magic = bytes.clone();
    wrong_magic[0] = b'X';
    fs::write(&bad, &wrong_magic).unwrap();
    assert!(read_dictionary(&bad).unwrap_err().to_string().contains("magic"));

    let mut wrong_version = bytes.clone();
    wrong_version[4] = 2;
    fs::write(&bad, &wrong_version).unwrap();
    assert!(read_dictionary(&bad).unwrap_err().to_string().contains("version"));

    let mut padded = bytes;
    padded.push(0);
    fs::write(&bad, &padded).unwrap();
    assert!(read_dictionary(&bad).is_err());
}

#[test]
fn non_finite_values_are_refused_on_write() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DMatrix::from_element(3, 2, 1.0);
    s[(1, 0)] = 1e300;
    let dict = Dictionary::unlabeled(s).unwrap();
    let err = write_dictionary(dir.path().join("x"), &dict, SampleWidth::F32).unwrap_err();
    assert!(matches!(err, hdgmm::Error::NonFinite { row: 1 }));
}

#[test]
fn model_roundtrip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.hdgm");
    let mut r = rng(5);
    let model = random_model(&mut r, 4, 9, 3);
    write_model(&path, &model).unwrap();
    assert_eq!(fs::metadata(&path).unwrap().len(), model_file_len(4, 9, 3));
    assert_eq!(read_model(&path).unwrap(), model);

    // perturb one basis entry of the first component
    let mut bytes = fs::read(&path).unwrap();
    let offset = 18 + 8 * (1 + 9 + 3 + 1);
    let v = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap()) + 1e-6;
    bytes[offset..offset + 8].copy_from_slice(&v.to_le_bytes());
    assert!(model_from_bytes(&bytes).is_err());
}

#[test]
fn compressed_roundtrip_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(6);
    let model = random_model(&mut r, 3, 8, 2);
    let (data, _) = sample_hdgmm(&model, 250, 1).unwrap();
    let cds = reduce_dataset(&model, &data).unwrap();
    let mae = reconstruction_mae(&data, &cds).unwrap();
    for width in [SampleWidth::F64, SampleWidth::F32] {
        let path = dir.path().join(format!("c{}", width.bytes()));
        write_compressed(&path, &cds, width).unwrap();
        let len = fs::metadata(&path).unwrap().len();
        assert_eq!(len, compressed_file_len(3, 8, 2, 250, width));
        assert_eq!(len - (6 + model_file_len(3, 8, 2) + 9), 250 * (2 + 2 * width.bytes() as u64));
        let back = read_compressed(&path).unwrap();
        if width == SampleWidth::F64 {
            assert_eq!(back, cds);
            assert_eq!(reconstruction_mae(&data, &back).unwrap(), mae);
        } else {
            assert_eq!(back.records().len(), 250);
        }
    }
}

#[test]
fn checkpoint_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(7);
    let model = random_model(&mut r, 2, 5, 2);
    let (data, _) = sample_hdgmm(&model, 600, 1).unwrap();
    let mut est = OnlineEstimator::new(model, OnlineConfig::default()).unwrap();
    est.run(&mut MatrixSource::new(&data)).unwrap();
    let cp: Checkpoint = est.checkpoint();
    let path = dir.path().join("k.hdgk");
    write_checkpoint(&path, &cp).unwrap();
    assert_eq!(read_checkpoint(&path).unwrap(), cp);
    assert!(matches!(inspect(&path).unwrap(), FileInfo::Checkpoint { k: 2, m: 5, d: 2, .. }));
}

#[test]
fn inspect_detects_formats() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d");
    write_dictionary(&path, &random_dict(5, 3, 1, 8), SampleWidth::F64).unwrap();
    assert!(matches!(inspect(&path).unwrap(), FileInfo::Dictionary(h) if h.n == 5 && h.m == 3));
    fs::write(&path, b"nope").unwrap();
    assert!(inspect(&path).is_err());
    assert!(matches!(inspect(dir.path().join("missing")), Err(hdgmm::Error::Io(_))));
}
