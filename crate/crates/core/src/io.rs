//! File formats.
//!
//! Matrices are exchanged as binary blobs: the magic bytes `OIFS`, a `u16`
//! format version, `u32` rows, `u32` columns and then `rows·cols` little-endian
//! doubles in column-major order. CSV (one matrix row per line) is accepted
//! wherever a blob is, selected by the `.csv` extension.
//!
//! Models, reduced models and snapshot sets are JSON manifests that name their
//! dimensions and point at blob files relative to the manifest's directory.
//! Quadratic operators are stored in the full `n × n²` Kronecker form.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{compress_quadratic_operator, expand_quadratic_operator, DenseMatrix, Vector};
use crate::model::{QuadDaeModel, ReducedQuadModel, SnapshotSet};

pub const BLOB_MAGIC: &[u8; 4] = b"OIFS";
pub const BLOB_VERSION: u16 = 1;
const HEADER_LEN: usize = 14;

pub fn encode_blob(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(BLOB_MAGIC);
    out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn decode_blob(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(parse_err(
            bytes.len(),
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if &bytes[..4] != BLOB_MAGIC {
        return Err(parse_err(0, "bad magic, expected \"OIFS\""));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BLOB_VERSION {
        return Err(parse_err(4, format!("unsupported blob version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| parse_err(6, format!("dimensions {rows}x{cols} overflow")))?;
    let expected = count
        .checked_mul(8)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| parse_err(6, format!("dimensions {rows}x{cols} overflow")))?;
    if bytes.len() < expected {
        let complete = (bytes.len() - HEADER_LEN) / 8;
        return Err(parse_err(
            HEADER_LEN + 8 * complete,
            format!("truncated data: {complete} of {count} values present"),
        ));
    }
    if bytes.len() > expected {
        return Err(parse_err(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(DenseMatrix::from_vec(rows, cols, data))
}

pub fn encode_csv(m: &DenseMatrix) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|x| format!("{x:e}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn decode_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if !body.trim().is_empty() {
            let mut row = Vec::new();
            let mut field_off = offset;
            for field in body.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(field_off, format!("not a number: {:?}", field.trim())))?;
                row.push(v);
                field_off += field.len() + 1;
            }
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(parse_err(offset, format!("row has {} fields, expected {}", row.len(), first.len())));
                }
            }
            rows.push(row);
        }
        offset += line.len();
    }
    let cols = rows.first().map_or(0, |r| r.len());
    Ok(DenseMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let res = if is_csv(path) {
        fs::write(path, encode_csv(m))
    } else {
        fs::write(path, encode_blob(m))
    };
    res.map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|e| parse_err(e.utf8_error().valid_up_to(), "invalid UTF-8"))?;
        decode_csv(&text)
    } else {
        decode_blob(&bytes)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        // serde_json reports line/column; convert to a byte offset.
        let offset: usize = text
            .split_inclusive('\n')
            .take(e.line().saturating_sub(1))
            .map(str::len)
            .sum::<usize>()
            + e.column().saturating_sub(1);
        parse_err(offset, e.to_string())
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sibling(manifest: &Path, file: &str) -> PathBuf {
    manifest.parent().unwrap_or_else(|| Path::new(".")).join(file)
}

fn blob_name(manifest: &Path, key: &str) -> String {
    let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    format!("{stem}.{key}.oifs")
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    version: u32,
    dims: BTreeMap<String, usize>,
    matrices: BTreeMap<String, String>,
}

struct ManifestWriter<'a> {
    path: &'a Path,
    manifest: Manifest,
}

impl<'a> ManifestWriter<'a> {
    fn new(path: &'a Path, kind: &str) -> Self {
        ManifestWriter {
            path,
            manifest: Manifest {
                kind: kind.into(),
                version: 1,
                dims: BTreeMap::new(),
                matrices: BTreeMap::new(),
            },
        }
    }

    fn dim(&mut self, key: &str, value: usize) {
        self.manifest.dims.insert(key.into(), value);
    }

    fn matrix(&mut self, key: &str, m: &DenseMatrix) -> Result<()> {
        let name = blob_name(self.path, key);
        write_matrix(&sibling(self.path, &name), m)?;
        self.manifest.matrices.insert(key.into(), name);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        write_json(self.path, &self.manifest)
    }
}

struct ManifestReader<'a> {
    path: &'a Path,
    manifest: Manifest,
}

impl<'a> ManifestReader<'a> {
    fn open(path: &'a Path, kind: &str) -> Result<Self> {
        let manifest: Manifest = read_json(path)?;
        if manifest.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "{} holds a {:?} manifest, expected {kind:?}",
                path.display(),
                manifest.kind
            )));
        }
        if manifest.version != 1 {
            return Err(Error::InvalidArgument(format!("unsupported manifest version {}", manifest.version)));
        }
        Ok(ManifestReader { path, manifest })
    }

    fn dim(&self, key: &'static str) -> Result<usize> {
        self.manifest
            .dims
            .get(key)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("manifest is missing dimension {key:?}")))
    }

    fn optional(&self, key: &str, rows: impl Into<Option<usize>>, cols: Option<usize>) -> Result<Option<DenseMatrix>> {
        let Some(file) = self.manifest.matrices.get(key) else {
            return Ok(None);
        };
        let rows = rows.into();
        let m = read_matrix(&sibling(self.path, file))?;
        if rows.is_some_and(|r| r != m.nrows()) || cols.is_some_and(|c| c != m.ncols()) {
            let show = |d: Option<usize>| d.map_or("*".to_string(), |d| d.to_string());
            return Err(Error::Dimension {
                context: "manifest matrix shape",
                expected: format!("{key}: {}x{}", show(rows), show(cols)),
                actual: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        Ok(Some(m))
    }

    fn required(&self, key: &str, rows: impl Into<Option<usize>>, cols: Option<usize>) -> Result<DenseMatrix> {
        self.optional(key, rows, cols)?
            .ok_or_else(|| Error::InvalidArgument(format!("manifest is missing matrix {key:?}")))
    }
}

pub fn save_model(path: &Path, model: &QuadDaeModel) -> Result<()> {
    model.check_shapes()?;
    let mut w = ManifestWriter::new(path, "quad-dae-model");
    w.dim("nv", model.nv());
    w.dim("np", model.np());
    w.dim("m", model.m());
    w.matrix("e11", &model.e11)?;
    w.matrix("a11", &model.a11)?;
    w.matrix("a12", &model.a12)?;
    w.matrix("h", &expand_quadratic_operator(&model.h)?)?;
    w.matrix("b1", &model.b1)?;
    for (key, m) in [("bperp", &model.bperp), ("cv", &model.cv), ("cp", &model.cp)] {
        if let Some(m) = m {
            w.matrix(key, m)?;
        }
    }
    w.finish()
}

pub fn load_model(path: &Path) -> Result<QuadDaeModel> {
    let r = ManifestReader::open(path, "quad-dae-model")?;
    let (nv, np, m) = (r.dim("nv")?, r.dim("np")?, r.dim("m")?);
    let model = QuadDaeModel {
        e11: r.required("e11", nv, Some(nv))?,
        a11: r.required("a11", nv, Some(nv))?,
        a12: r.required("a12", nv, Some(np))?,
        h: compress_quadratic_operator(&r.required("h", nv, Some(nv * nv))?)?,
        b1: r.required("b1", nv, Some(m))?,
        bperp: r.optional("bperp", np, Some(1))?,
        cv: r.optional("cv", None, Some(nv))?,
        cp: r.optional("cp", None, Some(np))?,
    };
    model.check_shapes()?;
    Ok(model)
}

fn column(v: &Vector) -> DenseMatrix {
    DenseMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn to_vector(m: Option<DenseMatrix>) -> Option<Vector> {
    m.map(|m| Vector::from_column_slice(m.as_slice()))
}

pub fn save_rom(path: &Path, rom: &ReducedQuadModel) -> Result<()> {
    rom.check()?;
    let mut w = ManifestWriter::new(path, "reduced-model");
    w.dim("r", rom.order());
    w.dim("m", rom.input_dim());
    w.matrix("a", &rom.a)?;
    if let Some(h) = &rom.h {
        w.matrix("h", &expand_quadratic_operator(h)?)?;
    }
    if let Some(b) = &rom.b {
        w.matrix("b", b)?;
    }
    if let Some(n) = &rom.n {
        w.matrix("n", n)?;
    }
    for (key, v) in [("c", &rom.c), ("k", &rom.k), ("d", &rom.d), ("e", &rom.e)] {
        if let Some(v) = v {
            w.matrix(key, &column(v))?;
        }
    }
    w.finish()
}

pub fn load_rom(path: &Path) -> Result<ReducedQuadModel> {
    let rd = ManifestReader::open(path, "reduced-model")?;
    let (r, m) = (rd.dim("r")?, rd.dim("m")?);
    let mut rom = ReducedQuadModel::new(rd.required("a", r, Some(r))?);
    rom.h = rd
        .optional("h", r, Some(r * r))?
        .map(|h| compress_quadratic_operator(&h))
        .transpose()?;
    rom.b = rd.optional("b", r, Some(m))?;
    rom.n = rd.optional("n", r, Some(r))?;
    rom.c = to_vector(rd.optional("c", r, Some(1))?);
    rom.k = to_vector(rd.optional("k", r, Some(1))?);
    rom.d = to_vector(rd.optional("d", r, Some(1))?);
    rom.e = to_vector(rd.optional("e", r, Some(1))?);
    rom.check()?;
    Ok(rom)
}

pub fn save_snapshots(path: &Path, set: &SnapshotSet) -> Result<()> {
    set.check()?;
    let mut w = ManifestWriter::new(path, "snapshot-set");
    w.dim("nv", set.v.nrows());
    w.dim("columns", set.len());
    w.matrix("times", &DenseMatrix::from_row_slice(1, set.len(), &set.times))?;
    w.matrix("v", &set.v)?;
    for (key, m) in [("p", &set.p), ("u", &set.u), ("uperp", &set.uperp)] {
        if let Some(m) = m {
            w.matrix(key, m)?;
        }
    }
    w.finish()
}

/// Summary of an ingested snapshot set.
#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub columns: usize,
    pub nv: usize,
    pub np: Option<usize>,
    pub m: Option<usize>,
    pub uniform_step: Option<f64>,
    /// Largest `‖A12ᵀv_k + Bperp u⊥_k‖ / ‖v_k‖` over the snapshots, when a model is given.
    pub constraint_residual: Option<f64>,
}

/// Loads and validates a snapshot set; with a model, also checks dimensions
/// against it and reports how well the snapshots satisfy the constraint.
pub fn ingest_snapshots(path: &Path, model: Option<&QuadDaeModel>) -> Result<(SnapshotSet, IngestReport)> {
    let r = ManifestReader::open(path, "snapshot-set")?;
    let nv = r.dim("nv")?;
    let cols = r.dim("columns")?;
    let times = r.required("times", 1, None)?;
    if times.ncols() != cols {
        return Err(Error::dim("snapshot time points", cols, times.ncols()));
    }
    let v = r.required("v", nv, None)?;
    let p = r.optional("p", None, None)?;
    let u = r.optional("u", None, None)?;
    let uperp = r.optional("uperp", 1, None)?;
    let set = SnapshotSet::new(times.as_slice().to_vec(), v, p, u, uperp)?;

    let mut constraint_residual = None;
    if let Some(model) = model {
        if model.nv() != nv {
            return Err(Error::dim("snapshot velocity rows vs model", model.nv(), nv));
        }
        if let Some(p) = &set.p {
            if p.nrows() != model.np() {
                return Err(Error::dim("snapshot pressure rows vs model", model.np(), p.nrows()));
            }
        }
        if let Some(u) = &set.u {
            if u.nrows() != model.m() {
                return Err(Error::dim("snapshot input rows vs model", model.m(), u.nrows()));
            }
        }
        let mut worst: f64 = 0.0;
        for k in 0..set.len() {
            let up = set.uperp.as_ref().map_or(0.0, |m| m[(0, k)]);
            let vk = set.v.column(k).into_owned();
            let scale = vk.norm().max(f64::MIN_POSITIVE);
            worst = worst.max(model.constraint_residual(&vk, up) / scale);
        }
        constraint_residual = Some(worst);
    }
    let report = IngestReport {
        columns: set.len(),
        nv,
        np: set.p.as_ref().map(|p| p.nrows()),
        m: set.u.as_ref().map(|u| u.nrows()),
        uniform_step: set.uniform_step(),
        constraint_residual,
    };
    Ok((set, report))
}
