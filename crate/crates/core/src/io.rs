//! Binary file formats and bounded-memory readers.
//!
//! All integers and floats are little-endian; strings are UTF-8 prefixed by
//! a `u16` byte length. Four formats share a 4-byte magic and a `u16`
//! version:
//!
//! | magic  | content                                                      |
//! |--------|--------------------------------------------------------------|
//! | `HDGF` | dictionary: `N u64, M u32, P u32, P names, width u8`, then row-major signals and row-major labels at `width` bytes per sample |
//! | `HDGM` | model: `K u32, M u32, d u32`, then per component `π, μ[M], a[d], b, W[M×d]` (column-major) as `f64` |
//! | `HDGC` | compressed: embedded model file, `N u64, width u8`, then per record `cluster u16` and `d` coordinates |
//! | `HDGK` | checkpoint: embedded model file, `K u32, M u32, t u64, records u64, starved u64`, then per component `s0, s1[M], s2[M×M]` (row-major) as `f64` |

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::em_online::{Checkpoint, SuffStats};
use crate::error::{Error, Result};
use crate::matching::Dictionary;
use crate::model::{Component, HdGmmModel};
use crate::reduction::{CompressedDataset, CompressedRecord};

pub const FORMAT_VERSION: u16 = 1;
pub const DICTIONARY_MAGIC: [u8; 4] = *b"HDGF";
pub const MODEL_MAGIC: [u8; 4] = *b"HDGM";
pub const COMPRESSED_MAGIC: [u8; 4] = *b"HDGC";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HDGK";

/// Sample width in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleWidth {
    F32,
    F64,
}

impl SampleWidth {
    pub fn bytes(self) -> usize {
        match self {
            SampleWidth::F32 => 4,
            SampleWidth::F64 => 8,
        }
    }

    pub fn from_bytes(b: u8) -> Result<Self> {
        match b {
            4 => Ok(SampleWidth::F32),
            8 => Ok(SampleWidth::F64),
            other => Err(Error::Format(format!("unsupported sample width {other}"))),
        }
    }

    fn put(self, out: &mut Vec<u8>, v: f64) {
        match self {
            SampleWidth::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            SampleWidth::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }

    /// Value after a write/read cycle at this width.
    pub fn quantize(self, v: f64) -> f64 {
        match self {
            SampleWidth::F32 => v as f32 as f64,
            SampleWidth::F64 => v,
        }
    }
}

/// Streaming access to records, `max` rows at a time.
pub trait RecordSource {
    /// Columns per record.
    fn dim(&self) -> usize;

    /// Up to `max` records as a `B × M` matrix, `None` once exhausted.
    fn next_records(&mut self, max: usize) -> Result<Option<DMatrix<f64>>>;
}

/// Serves rows of an in-memory matrix in order, optionally for several
/// passes.
#[derive(Debug, Clone)]
pub struct MatrixSource<'a> {
    data: &'a DMatrix<f64>,
    cursor: usize,
    passes_left: usize,
}

impl<'a> MatrixSource<'a> {
    pub fn new(data: &'a DMatrix<f64>) -> Self {
        Self { data, cursor: 0, passes_left: 1 }
    }

    pub fn passes(data: &'a DMatrix<f64>, passes: usize) -> Self {
        Self { data, cursor: 0, passes_left: passes }
    }
}

impl RecordSource for MatrixSource<'_> {
    fn dim(&self) -> usize {
        self.data.ncols()
    }

    fn next_records(&mut self, max: usize) -> Result<Option<DMatrix<f64>>> {
        if self.cursor >= self.data.nrows() {
            if self.passes_left <= 1 || self.data.nrows() == 0 {
                return Ok(None);
            }
            self.passes_left -= 1;
            self.cursor = 0;
        }
        let take = max.max(1).min(self.data.nrows() - self.cursor);
        let out = self.data.rows(self.cursor, take).into_owned();
        self.cursor += take;
        Ok(Some(out))
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("truncated {} file: needed {} more bytes at offset {}", self.what, n, self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn sample(&mut self, width: SampleWidth) -> Result<f64> {
        match width {
            SampleWidth::F32 => Ok(f32::from_le_bytes(self.array()?) as f64),
            SampleWidth::F64 => self.f64(),
        }
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let got: [u8; 4] = self.array()?;
        if got != expected {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(&expected)
            )));
        }
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported {} format version {version}", self.what)));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} file has {} trailing bytes",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_header(out: &mut Vec<u8>, magic: [u8; 4]) {
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
}

fn put_f64s<'a>(out: &mut Vec<u8>, vals: impl IntoIterator<Item = &'a f64>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} = {v} does not fit in u32")))
}

// ---------------------------------------------------------------- dictionary

/// Parsed `HDGF` header.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryHeader {
    pub version: u16,
    pub n: u64,
    pub m: usize,
    pub p: usize,
    pub label_names: Vec<String>,
    pub width: SampleWidth,
    /// Bytes before the signal payload.
    pub header_len: u64,
}

impl DictionaryHeader {
    pub fn signals_len(&self) -> u64 {
        self.n * self.m as u64 * self.width.bytes() as u64
    }

    pub fn payload_len(&self) -> u64 {
        self.n * (self.m + self.p) as u64 * self.width.bytes() as u64
    }

    pub fn file_len(&self) -> u64 {
        self.header_len + self.payload_len()
    }
}

fn encode_dictionary_header(out: &mut Vec<u8>, n: u64, m: usize, names: &[String], width: SampleWidth) -> Result<()> {
    put_header(out, DICTIONARY_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&u32_of(m, "M")?.to_le_bytes());
    out.extend_from_slice(&u32_of(names.len(), "P")?.to_le_bytes());
    for name in names {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("label name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    out.push(width.bytes() as u8);
    Ok(())
}

/// Header size in bytes for the given label names.
pub fn dictionary_header_len(label_names: &[String]) -> u64 {
    (4 + 2 + 8 + 4 + 4 + 1 + label_names.iter().map(|n| 2 + n.len()).sum::<usize>()) as u64
}

fn check_finite_rows(mat: &DMatrix<f64>, width: SampleWidth) -> Result<()> {
    for i in 0..mat.nrows() {
        if mat.row(i).iter().any(|&v| !width.quantize(v).is_finite()) {
            return Err(Error::NonFinite { row: i });
        }
    }
    Ok(())
}

pub fn write_dictionary(path: impl AsRef<Path>, dict: &Dictionary, width: SampleWidth) -> Result<()> {
    check_finite_rows(dict.signals(), width)?;
    check_finite_rows(dict.labels(), width)?;
    let (n, m) = dict.signals().shape();
    let p = dict.labels().ncols();
    let mut out = Vec::with_capacity(dictionary_header_len(dict.label_names()) as usize + n * (m + p) * width.bytes());
    encode_dictionary_header(&mut out, n as u64, m, dict.label_names(), width)?;
    for mat in [dict.signals(), dict.labels()] {
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                width.put(&mut out, mat[(i, j)]);
            }
        }
    }
    write_file(path.as_ref(), &out)
}

fn parse_dictionary_header<R: Read>(r: &mut R) -> Result<DictionaryHeader> {
    let mut fixed = [0u8; 22];
    r.read_exact(&mut fixed).map_err(|_| Error::Format("truncated dictionary header".into()))?;
    let mut br = ByteReader::new(&fixed, "dictionary");
    br.magic(DICTIONARY_MAGIC)?;
    let n = br.u64()?;
    let m = br.u32()? as usize;
    let p = br.u32()? as usize;
    let mut label_names = Vec::with_capacity(p);
    let mut header_len = 22u64;
    for _ in 0..p {
        let mut len = [0u8; 2];
        r.read_exact(&mut len).map_err(|_| Error::Format("truncated label names".into()))?;
        let len = u16::from_le_bytes(len) as usize;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes).map_err(|_| Error::Format("truncated label names".into()))?;
        label_names.push(String::from_utf8(bytes).map_err(|_| Error::Format("label name is not UTF-8".into()))?);
        header_len += 2 + len as u64;
    }
    let mut w = [0u8; 1];
    r.read_exact(&mut w).map_err(|_| Error::Format("truncated dictionary header".into()))?;
    header_len += 1;
    let width = SampleWidth::from_bytes(w[0])?;
    Ok(DictionaryHeader { version: FORMAT_VERSION, n, m, p, label_names, width, header_len })
}

/// Reads and validates a dictionary header, including the file size.
pub fn read_dictionary_header(path: impl AsRef<Path>) -> Result<DictionaryHeader> {
    let path = path.as_ref();
    let file_len = fs::metadata(path)?.len();
    let header = parse_dictionary_header(&mut BufReader::new(File::open(path)?))?;
    if header.file_len() != file_len {
        return Err(Error::Format(format!(
            "dictionary declares {} bytes but file has {file_len} (truncated or padded payload)",
            header.file_len()
        )));
    }
    Ok(header)
}

pub fn read_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    let mut reader = open_chunked(path, usize::MAX)?;
    let n = reader.header.n as usize;
    let (signals, labels) = reader.next_chunk()?.unwrap_or_else(|| {
        (DMatrix::zeros(0, reader.header.m), DMatrix::zeros(0, reader.header.p))
    });
    debug_assert_eq!(signals.nrows(), n);
    Dictionary::new(signals, labels, reader.header.label_names.clone())
}

/// Sequential reader yielding `chunk` records at a time from a dictionary
/// file; only one chunk is resident.
#[derive(Debug)]
pub struct ChunkReader {
    header: DictionaryHeader,
    signals: BufReader<File>,
    labels: BufReader<File>,
    chunk: usize,
    cursor: u64,
}

pub fn open_chunked(path: impl AsRef<Path>, chunk: usize) -> Result<ChunkReader> {
    let path = path.as_ref();
    let header = read_dictionary_header(path)?;
    let mut signals = BufReader::new(File::open(path)?);
    signals.seek(SeekFrom::Start(header.header_len))?;
    let mut labels = BufReader::new(File::open(path)?);
    labels.seek(SeekFrom::Start(header.header_len + header.signals_len()))?;
    Ok(ChunkReader { header, signals, labels, chunk: chunk.max(1), cursor: 0 })
}

fn read_block<R: Read>(r: &mut R, rows: usize, cols: usize, width: SampleWidth) -> Result<DMatrix<f64>> {
    let mut bytes = vec![0u8; rows * cols * width.bytes()];
    r.read_exact(&mut bytes).map_err(|_| Error::Format("truncated dictionary payload".into()))?;
    let mut br = ByteReader::new(&bytes, "dictionary");
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            out[(i, j)] = br.sample(width)?;
        }
    }
    Ok(out)
}

impl ChunkReader {
    pub fn header(&self) -> &DictionaryHeader {
        &self.header
    }

    pub fn remaining(&self) -> u64 {
        self.header.n - self.cursor
    }

    fn next_len(&self, max: usize) -> usize {
        (self.remaining().min(max as u64) as usize).min(self.chunk)
    }

    /// Next chunk of signals and labels.
    pub fn next_chunk(&mut self) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>> {
        let rows = self.next_len(usize::MAX);
        if rows == 0 {
            return Ok(None);
        }
        let s = read_block(&mut self.signals, rows, self.header.m, self.header.width)?;
        let l = read_block(&mut self.labels, rows, self.header.p, self.header.width)?;
        self.cursor += rows as u64;
        Ok(Some((s, l)))
    }
}

impl RecordSource for ChunkReader {
    fn dim(&self) -> usize {
        self.header.m
    }

    fn next_records(&mut self, max: usize) -> Result<Option<DMatrix<f64>>> {
        let rows = self.next_len(max);
        if rows == 0 {
            return Ok(None);
        }
        let s = read_block(&mut self.signals, rows, self.header.m, self.header.width)?;
        // keep the label cursor aligned for callers mixing both APIs
        self.labels.seek_relative((rows * self.header.p * self.header.width.bytes()) as i64)?;
        self.cursor += rows as u64;
        Ok(Some(s))
    }
}

// --------------------------------------------------------------------- model

/// Size of a model file in bytes.
pub fn model_file_len(k: usize, m: usize, d: usize) -> u64 {
    (4 + 2 + 12 + k * 8 * (2 + m + d + m * d)) as u64
}

fn encode_model(out: &mut Vec<u8>, model: &HdGmmModel) -> Result<()> {
    put_header(out, MODEL_MAGIC);
    out.extend_from_slice(&u32_of(model.k(), "K")?.to_le_bytes());
    out.extend_from_slice(&u32_of(model.m(), "M")?.to_le_bytes());
    out.extend_from_slice(&u32_of(model.d(), "d")?.to_le_bytes());
    for c in model.components() {
        out.extend_from_slice(&c.weight().to_le_bytes());
        put_f64s(out, c.mean().iter());
        put_f64s(out, c.signal_variances().iter());
        out.extend_from_slice(&c.noise_variance().to_le_bytes());
        // nalgebra storage is column-major
        put_f64s(out, c.basis().as_slice());
    }
    Ok(())
}

fn decode_model(br: &mut ByteReader) -> Result<HdGmmModel> {
    br.magic(MODEL_MAGIC)?;
    let k = br.u32()? as usize;
    let m = br.u32()? as usize;
    let d = br.u32()? as usize;
    let needed = model_file_len(k, m, d) as usize - 18;
    if br.buf.len() - br.pos < needed {
        return Err(Error::Format(format!("truncated model: {k} components of M = {m}, d = {d}")));
    }
    let mut comps = Vec::with_capacity(k);
    for idx in 0..k {
        let weight = br.f64()?;
        let mean = DVector::from_vec(br.f64_vec(m)?);
        let a = DVector::from_vec(br.f64_vec(d)?);
        let b = br.f64()?;
        let w = DMatrix::from_vec(m, d, br.f64_vec(m * d)?);
        let comp = Component::new(weight, mean, a, b, w)
            .map_err(|e| Error::Format(format!("component {idx} violates model invariants: {e}")))?;
        if comp.noise_variance() != b {
            return Err(Error::Format(format!("component {idx} noise variance below floor")));
        }
        comps.push(comp);
    }
    HdGmmModel::new(comps).map_err(|e| Error::Format(format!("invalid model: {e}")))
}

pub fn model_to_bytes(model: &HdGmmModel) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(model_file_len(model.k(), model.m(), model.d()) as usize);
    encode_model(&mut out, model)?;
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<HdGmmModel> {
    let mut br = ByteReader::new(bytes, "model");
    let model = decode_model(&mut br)?;
    br.finish()?;
    Ok(model)
}

pub fn write_model(path: impl AsRef<Path>, model: &HdGmmModel) -> Result<()> {
    write_file(path.as_ref(), &model_to_bytes(model)?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<HdGmmModel> {
    model_from_bytes(&fs::read(path)?)
}

// ---------------------------------------------------------------- compressed

/// Size of a compressed file: header, embedded model and
/// `N·(2 + d·width)` record bytes.
pub fn compressed_file_len(k: usize, m: usize, d: usize, n: u64, width: SampleWidth) -> u64 {
    6 + model_file_len(k, m, d) + 9 + n * (2 + d as u64 * width.bytes() as u64)
}

pub fn compressed_to_bytes(cds: &CompressedDataset, width: SampleWidth) -> Result<Vec<u8>> {
    let model = cds.model();
    if model.k() > u16::MAX as usize + 1 {
        return Err(Error::Format(format!("K = {} exceeds the u16 cluster id range", model.k())));
    }
    let mut out = Vec::with_capacity(compressed_file_len(model.k(), model.m(), model.d(), cds.count() as u64, width) as usize);
    put_header(&mut out, COMPRESSED_MAGIC);
    encode_model(&mut out, model)?;
    out.extend_from_slice(&(cds.count() as u64).to_le_bytes());
    out.push(width.bytes() as u8);
    for (i, rec) in cds.records().iter().enumerate() {
        if rec.coords.iter().any(|&v| !width.quantize(v).is_finite()) {
            return Err(Error::NonFinite { row: i });
        }
        out.extend_from_slice(&(rec.cluster_id as u16).to_le_bytes());
        for &v in rec.coords.iter() {
            width.put(&mut out, v);
        }
    }
    Ok(out)
}

pub fn compressed_from_bytes(bytes: &[u8]) -> Result<CompressedDataset> {
    let mut br = ByteReader::new(bytes, "compressed");
    br.magic(COMPRESSED_MAGIC)?;
    let model = decode_model(&mut br)?;
    let n = br.u64()?;
    let width = SampleWidth::from_bytes(br.u8()?)?;
    let d = model.d();
    let expected = compressed_file_len(model.k(), model.m(), d, n, width);
    if expected != bytes.len() as u64 {
        return Err(Error::Format(format!(
            "compressed file declares {expected} bytes but has {} (truncated or padded payload)",
            bytes.len()
        )));
    }
    let mut records = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let cluster_id = br.u16()? as usize;
        let coords = DVector::from_iterator(d, (0..d).map(|_| br.sample(width)).collect::<Result<Vec<_>>>()?);
        records.push(CompressedRecord { cluster_id, coords });
    }
    br.finish()?;
    CompressedDataset::new(model, records).map_err(|e| Error::Format(format!("invalid compressed records: {e}")))
}

pub fn write_compressed(path: impl AsRef<Path>, cds: &CompressedDataset, width: SampleWidth) -> Result<()> {
    write_file(path.as_ref(), &compressed_to_bytes(cds, width)?)
}

pub fn read_compressed(path: impl AsRef<Path>) -> Result<CompressedDataset> {
    compressed_from_bytes(&fs::read(path)?)
}

// ---------------------------------------------------------------- checkpoint

pub fn checkpoint_to_bytes(cp: &Checkpoint) -> Result<Vec<u8>> {
    let (k, m) = (cp.stats.k(), cp.stats.m());
    if k != cp.model.k() || m != cp.model.m() {
        return Err(Error::DimensionMismatch { expected: cp.model.k(), found: k });
    }
    let mut out = Vec::new();
    put_header(&mut out, CHECKPOINT_MAGIC);
    encode_model(&mut out, &cp.model)?;
    out.extend_from_slice(&u32_of(k, "K")?.to_le_bytes());
    out.extend_from_slice(&u32_of(m, "M")?.to_le_bytes());
    out.extend_from_slice(&cp.stats.t.to_le_bytes());
    out.extend_from_slice(&cp.records_seen.to_le_bytes());
    out.extend_from_slice(&cp.starved_events.to_le_bytes());
    for kk in 0..k {
        out.extend_from_slice(&cp.stats.s0[kk].to_le_bytes());
        put_f64s(&mut out, cp.stats.s1[kk].iter());
        let s2 = &cp.stats.s2[kk];
        for i in 0..m {
            for j in 0..m {
                out.extend_from_slice(&s2[(i, j)].to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut br = ByteReader::new(bytes, "checkpoint");
    br.magic(CHECKPOINT_MAGIC)?;
    let model = decode_model(&mut br)?;
    let k = br.u32()? as usize;
    let m = br.u32()? as usize;
    if k != model.k() || m != model.m() {
        return Err(Error::Format("checkpoint statistics do not match the embedded model".into()));
    }
    let t = br.u64()?;
    let records_seen = br.u64()?;
    let starved_events = br.u64()?;
    let mut stats = SuffStats { s0: Vec::new(), s1: Vec::new(), s2: Vec::new(), t };
    for _ in 0..k {
        stats.s0.push(br.f64()?);
        stats.s1.push(DVector::from_vec(br.f64_vec(m)?));
        stats.s2.push(DMatrix::from_row_slice(m, m, &br.f64_vec(m * m)?));
    }
    br.finish()?;
    Ok(Checkpoint { model, stats, records_seen, starved_events })
}

pub fn write_checkpoint(path: impl AsRef<Path>, cp: &Checkpoint) -> Result<()> {
    write_file(path.as_ref(), &checkpoint_to_bytes(cp)?)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    checkpoint_from_bytes(&fs::read(path)?)
}

// ---------------------------------------------------------------------- info

/// Validated summary of any supported file.
#[derive(Debug, Clone, PartialEq)]
pub enum FileInfo {
    Dictionary(DictionaryHeader),
    Model { k: usize, m: usize, d: usize, bytes: u64 },
    Compressed { k: usize, m: usize, d: usize, n: usize, bytes: u64 },
    Checkpoint { k: usize, m: usize, d: usize, t: u64, records_seen: u64, bytes: u64 },
}

/// Detects the format from the magic and validates the whole file.
pub fn inspect(path: impl AsRef<Path>) -> Result<FileInfo> {
    let path = path.as_ref();
    let mut magic = [0u8; 4];
    File::open(path)?
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for a magic number".into()))?;
    match magic {
        DICTIONARY_MAGIC => Ok(FileInfo::Dictionary(read_dictionary_header(path)?)),
        MODEL_MAGIC => {
            let bytes = fs::read(path)?;
            let model = model_from_bytes(&bytes)?;
            Ok(FileInfo::Model { k: model.k(), m: model.m(), d: model.d(), bytes: bytes.len() as u64 })
        }
        COMPRESSED_MAGIC => {
            let bytes = fs::read(path)?;
            let cds = compressed_from_bytes(&bytes)?;
            let model = cds.model();
            Ok(FileInfo::Compressed { k: model.k(), m: model.m(), d: model.d(), n: cds.count(), bytes: bytes.len() as u64 })
        }
        CHECKPOINT_MAGIC => {
            let bytes = fs::read(path)?;
            let cp = checkpoint_from_bytes(&bytes)?;
            Ok(FileInfo::Checkpoint {
                k: cp.model.k(),
                m: cp.model.m(),
                d: cp.model.d(),
                t: cp.stats.t,
                records_seen: cp.records_seen,
                bytes: bytes.len() as u64,
            })
        }
        other => Err(Error::Format(format!("unknown magic {:?}", String::from_utf8_lossy(&other)))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_length_formula() {
        let names = vec!["T1".to_string(), "δf".to_string()];
        let mut out = Vec::new();
        encode_dictionary_header(&mut out, 3, 5, &names, SampleWidth::F64).unwrap();
        assert_eq!(out.len() as u64, dictionary_header_len(&names));
    }

    #[test]
    fn model_len_formula() {
        let w = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let c = Component::new(1.0, DVector::zeros(3), DVector::from_element(1, 2.0), 1.0, w).unwrap();
        let model = HdGmmModel::new(vec![c]).unwrap();
        assert_eq!(model_to_bytes(&model).unwrap().len() as u64, model_file_len(1, 3, 1));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = b"XXXX".to_vec();
        bytes.extend_from_slice(&1u16.to_le_bytes());
        assert!(matches!(model_from_bytes(&bytes), Err(Error::Format(_))));
        let mut bytes = MODEL_MAGIC.to_vec();
        bytes.extend_from_slice(&9u16.to_le_bytes());
        let err = model_from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }

    #[test]
    fn matrix_source_passes() {
        let data = DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64);
        let mut src = MatrixSource::passes(&data, 2);
        let mut rows = 0;
        while let Some(b) = src.next_records(3).unwrap() {
            rows += b.nrows();
        }
        assert_eq!(rows, 10);
    }
}
