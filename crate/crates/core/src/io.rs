//! File formats: PGM masks, PFM probability maps, CSV manifests and reports.
//!
//! # Masks
//!
//! Binary PGM (`P5`), maxval 255, one byte per pixel, rows top to bottom.
//! Only the pixel values 0 (background) and 255 (foreground) are accepted.
//!
//! # Probability maps
//!
//! Grayscale PFM (`Pf`) with scale `-1.0`, i.e. little-endian `f32`
//! samples. **PFM stores rows bottom to top.** Files are written in that
//! order and flipped on read, so in memory row 0 is always the top row.
//! Positive scales (big-endian files) are rejected.
//!
//! # CSV
//!
//! Manifests bind slice ids to a truth mask and one map per model. Reports,
//! grid tables and heatmap panels are written byte-deterministically.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::ensemble::{parse_exact, GridSearchResult, HeatmapMatrix, WeightVector};
use crate::error::{Error, ParseErrorKind, Result};
use crate::metrics::{aggregate_h, f1, iou, precision, recall, MetricsRecord};
use crate::raster::{ConfusionCounts, Mask, ProbMap};

/// A decode failure before it is attached to a path.
pub type DecodeError = (u64, ParseErrorKind);

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            Error::io(path, e)
        }
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn with_path<T>(path: &Path, r: std::result::Result<T, DecodeError>) -> Result<T> {
    r.map_err(|(offset, kind)| Error::Parse {
        path: path.to_path_buf(),
        offset,
        kind,
    })
}

/// Cursor over a netpbm-style header.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    allow_comments: bool,
}

impl<'a> Header<'a> {
    fn new(bytes: &'a [u8], magic: &'static str, allow_comments: bool) -> std::result::Result<Self, DecodeError> {
        if !bytes.starts_with(magic.as_bytes()) {
            return Err((0, ParseErrorKind::WrongMagic { expected: magic }));
        }
        Ok(Header {
            bytes,
            pos: magic.len(),
            allow_comments,
        })
    }

    fn malformed(&self, msg: &str) -> DecodeError {
        (self.pos as u64, ParseErrorKind::MalformedHeader(msg.into()))
    }

    /// Skips at least one whitespace byte (and comments, for PGM).
    fn separator(&mut self) -> std::result::Result<(), DecodeError> {
        let start = self.pos;
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') if self.allow_comments => {
                    while !matches!(self.bytes.get(self.pos), None | Some(b'\n' | b'\r')) {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
        if self.pos == start {
            return Err(self.malformed("expected whitespace"));
        }
        Ok(())
    }

    fn token(&mut self) -> &'a str {
        let start = self.pos;
        while matches!(self.bytes.get(self.pos), Some(b) if !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("")
    }

    fn dimension(&mut self, what: &str) -> std::result::Result<usize, DecodeError> {
        self.separator()?;
        let at = self.pos;
        let tok = self.token();
        match tok.parse::<usize>() {
            Ok(v) if v > 0 && tok.bytes().all(|b| b.is_ascii_digit()) => Ok(v),
            _ => Err((
                at as u64,
                ParseErrorKind::MalformedHeader(format!("invalid {what} {tok:?}")),
            )),
        }
    }

    /// Consumes the single whitespace byte that ends the header.
    fn end(&mut self) -> std::result::Result<usize, DecodeError> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(self.malformed("header must end with a single whitespace byte")),
        }
    }
}

fn payload_len(
    offset: usize,
    available: usize,
    expected: usize,
) -> std::result::Result<(), DecodeError> {
    if available < expected {
        return Err((
            offset as u64,
            ParseErrorKind::Truncated {
                expected: expected as u64,
                found: available as u64,
            },
        ));
    }
    if available > expected {
        return Err((
            (offset + expected) as u64,
            ParseErrorKind::TrailingData((available - expected) as u64),
        ));
    }
    Ok(())
}

/// Serialises a mask as binary PGM.
pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Parses a binary PGM mask.
pub fn decode_mask(bytes: &[u8]) -> std::result::Result<Mask, DecodeError> {
    let mut h = Header::new(bytes, "P5", true)?;
    let width = h.dimension("width")?;
    let height = h.dimension("height")?;
    h.separator()?;
    let at = h.pos;
    let maxval = h.token();
    if maxval != "255" {
        return Err((
            at as u64,
            ParseErrorKind::MalformedHeader(format!("maxval must be 255, got {maxval:?}")),
        ));
    }
    let start = h.end()?;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| (0, ParseErrorKind::MalformedHeader("dimensions overflow".into())))?;
    let payload = &bytes[start..];
    payload_len(start, payload.len(), n)?;
    let bits = payload
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0 => Ok(false),
            255 => Ok(true),
            value => Err(((start + i) as u64, ParseErrorKind::InvalidPixel { value })),
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Mask::new(width, height, bits).expect("dimensions checked"))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    with_path(path, decode_mask(&read_bytes(path)?))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    write_bytes(path.as_ref(), &encode_mask(mask))
}

/// Serialises a probability map as little-endian grayscale PFM, bottom row
/// first.
pub fn encode_probmap(map: &ProbMap) -> Vec<u8> {
    let (w, h) = map.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in map.values().chunks(w).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a little-endian grayscale PFM, flipping rows to top-first order.
pub fn decode_probmap(bytes: &[u8]) -> std::result::Result<ProbMap, DecodeError> {
    let mut h = Header::new(bytes, "Pf", false)?;
    let width = h.dimension("width")?;
    let height = h.dimension("height")?;
    h.separator()?;
    let at = h.pos;
    let scale_text = h.token();
    let scale: f32 = scale_text.parse().map_err(|_| {
        (
            at as u64,
            ParseErrorKind::MalformedHeader(format!("invalid scale {scale_text:?}")),
        )
    })?;
    if scale.is_nan() || scale == 0.0 {
        return Err((
            at as u64,
            ParseErrorKind::MalformedHeader(format!("invalid scale {scale_text:?}")),
        ));
    }
    if scale > 0.0 {
        return Err((at as u64, ParseErrorKind::BigEndianUnsupported));
    }
    let start = h.end()?;
    let n = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4).map(|b| (n, b)))
        .ok_or_else(|| (0, ParseErrorKind::MalformedHeader("dimensions overflow".into())))?;
    let payload = &bytes[start..];
    payload_len(start, payload.len(), n.1)?;
    let mut values = vec![0.0f32; n.0];
    for (file_row, chunk) in payload.chunks_exact(width * 4).enumerate() {
        let row = height - 1 - file_row;
        for (col, sample) in chunk.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(sample.try_into().expect("4-byte chunk"));
            let index = row * width + col;
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                let offset = start + (file_row * width + col) * 4;
                return Err((offset as u64, ParseErrorKind::SampleOutOfRange { index, value: v }));
            }
            values[index] = v;
        }
    }
    Ok(ProbMap::new(width, height, values).expect("samples checked"))
}

pub fn read_probmap(path: impl AsRef<Path>) -> Result<ProbMap> {
    let path = path.as_ref();
    with_path(path, decode_probmap(&read_bytes(path)?))
}

pub fn write_probmap(path: impl AsRef<Path>, map: &ProbMap) -> Result<()> {
    write_bytes(path.as_ref(), &encode_probmap(map))
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub slice_id: String,
    pub truth: PathBuf,
    pub models: Vec<PathBuf>,
}

/// Binds slice ids to truth masks and per-model probability maps.
///
/// Column order of `model_names` is the model order used for weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub model_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(model_names: Vec<String>, entries: Vec<ManifestEntry>) -> Result<Self> {
        if model_names.is_empty() {
            return Err(Error::InvalidArgument("manifest has no model columns".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if e.models.len() != model_names.len() {
                return Err(Error::InvalidArgument(format!(
                    "slice {:?} lists {} models, expected {}",
                    e.slice_id,
                    e.models.len(),
                    model_names.len()
                )));
            }
            if !seen.insert(e.slice_id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate slice id {:?}",
                    e.slice_id
                )));
            }
        }
        Ok(Manifest {
            model_names,
            entries,
        })
    }

    pub fn n_models(&self) -> usize {
        self.model_names.len()
    }

    /// Reads every raster the manifest references.
    pub fn load_slices(&self) -> Result<Vec<(String, crate::ensemble::LabeledSlice)>> {
        use rayon::prelude::*;
        self.entries
            .par_iter()
            .map(|e| {
                let truth = read_mask(&e.truth)?;
                let maps = e
                    .models
                    .iter()
                    .map(read_probmap)
                    .collect::<Result<Vec<_>>>()?;
                let slice = crate::ensemble::LabeledSlice::new(truth, maps).map_err(|err| {
                    Error::Shape(format!("slice {:?}: {err}", e.slice_id))
                })?;
                Ok((e.slice_id.clone(), slice))
            })
            .collect()
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.kind() {
        csv::ErrorKind::Io(_) => match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::io(path, e),
            _ => unreachable!(),
        },
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Csv {
            path: path.to_path_buf(),
            line,
            message: format!("ragged row: expected {expected_len} fields, found {len}"),
        },
        _ => Error::Csv {
            path: path.to_path_buf(),
            line,
            message: err.to_string(),
        },
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            Error::io(path, e)
        }
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

/// Reads a manifest CSV with header `slice_id,truth,<model_1>,...`.
///
/// Relative paths are resolved against the manifest's directory, and every
/// referenced file must exist.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let csv_err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    if headers.len() < 3 || &headers[0] != "slice_id" || &headers[1] != "truth" {
        return Err(csv_err(
            1,
            "header must be slice_id,truth,<model_1>,...".into(),
        ));
    }
    let model_names: Vec<String> = headers.iter().skip(2).map(str::to_owned).collect();
    if let Some(name) = model_names.iter().find(|n| n.is_empty()) {
        return Err(csv_err(1, format!("empty model name {name:?}")));
    }
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let slice_id = record[0].to_owned();
        if slice_id.is_empty() {
            return Err(csv_err(line, "empty slice_id".into()));
        }
        if !seen.insert(slice_id.clone()) {
            return Err(csv_err(line, format!("duplicate slice_id {slice_id:?}")));
        }
        let resolve = |field: &str| -> Result<PathBuf> {
            if field.is_empty() {
                return Err(csv_err(line, "empty path".into()));
            }
            let p = base.join(field);
            if !p.is_file() {
                return Err(Error::MissingFile { path: p });
            }
            Ok(p)
        };
        let truth = resolve(&record[1])?;
        let models = record
            .iter()
            .skip(2)
            .map(resolve)
            .collect::<Result<Vec<_>>>()?;
        entries.push(ManifestEntry {
            slice_id,
            truth,
            models,
        });
    }
    Manifest::new(model_names, entries)
}

/// Writes a manifest CSV. Paths are written as stored, so callers wanting a
/// relocatable tree should store paths relative to the manifest directory.
pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["slice_id".to_owned(), "truth".to_owned()];
    header.extend(manifest.model_names.iter().cloned());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for e in &manifest.entries {
        let mut row = vec![e.slice_id.clone(), e.truth.to_string_lossy().into_owned()];
        row.extend(e.models.iter().map(|p| p.to_string_lossy().into_owned()));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_bytes(path, &bytes)
}

/// Fixed four-decimal rendering, ties to even on the exact binary value.
pub fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

/// Dataset-level row of a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Sum of `log10(hd95 + 1)` over the slices.
    pub h: f64,
}

/// Per-slice metrics plus the aggregate row.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<(String, MetricsRecord)>,
    pub aggregate: AggregateRow,
}

impl Report {
    /// Builds a report whose aggregate overlap metrics come from the pooled
    /// counts and whose `h` is the log-sum of the per-slice HD95 values.
    pub fn new(rows: Vec<(String, MetricsRecord)>, pooled: &ConfusionCounts) -> Self {
        let hd: Vec<f64> = rows.iter().map(|(_, r)| r.hd95).collect();
        let p = precision(pooled);
        let r = recall(pooled);
        Report {
            aggregate: AggregateRow {
                iou: iou(pooled),
                precision: p,
                recall: r,
                f1: f1(p, r),
                h: aggregate_h(&hd),
            },
            rows,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::from("id,iou,precision,recall,f1,hd95\n");
        for (id, r) in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(id),
                fmt4(r.iou),
                fmt4(r.precision),
                fmt4(r.recall),
                fmt4(r.f1),
                fmt4(r.hd95)
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "AGGREGATE,{},{},{},{},{}",
            fmt4(a.iou),
            fmt4(a.precision),
            fmt4(a.recall),
            fmt4(a.f1),
            fmt4(a.h)
        );
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn write_report(path: impl AsRef<Path>, report: &Report) -> Result<()> {
    write_bytes(path.as_ref(), report.render().as_bytes())
}

/// Reads a report written by [`write_report`]. Values carry the file's four
/// decimals of precision.
pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let bad = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    if headers.iter().collect::<Vec<_>>() != ["id", "iou", "precision", "recall", "f1", "hd95"] {
        return Err(bad(1, "unexpected report header".into()));
    }
    let mut rows = Vec::new();
    let mut aggregate = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if aggregate.is_some() {
            return Err(bad(line, "rows after the AGGREGATE row".into()));
        }
        let vals = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(line, format!("invalid number {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if &record[0] == "AGGREGATE" {
            aggregate = Some(AggregateRow {
                iou: vals[0],
                precision: vals[1],
                recall: vals[2],
                f1: vals[3],
                h: vals[4],
            });
        } else {
            rows.push((
                record[0].to_owned(),
                MetricsRecord {
                    iou: vals[0],
                    precision: vals[1],
                    recall: vals[2],
                    f1: vals[3],
                    hd95: vals[4],
                },
            ));
        }
    }
    let aggregate = aggregate.ok_or_else(|| bad(0, "missing AGGREGATE row".into()))?;
    Ok(Report { rows, aggregate })
}

/// Renders the full weight table: `w_1..w_N,objective,best`. Objectives use
/// the shortest representation that reads back to the same `f64`.
pub fn render_grid_table(result: &GridSearchResult) -> String {
    let n = result.n_models();
    let mut out = String::new();
    for k in 1..=n {
        let _ = write!(out, "w_{k},");
    }
    out.push_str("objective,best\n");
    for (w, v) in &result.table {
        let _ = writeln!(
            out,
            "{},{},{}",
            w.format_weights().join(","),
            v,
            u8::from(*w == result.best)
        );
    }
    out
}

pub fn write_grid_table(path: impl AsRef<Path>, result: &GridSearchResult) -> Result<()> {
    write_bytes(path.as_ref(), render_grid_table(result).as_bytes())
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Reads a grid table back. The grid denominator is the least common multiple
/// of the reduced weight denominators, and the flagged row must agree with
/// the recomputed argmax.
pub fn read_grid_table(path: impl AsRef<Path>) -> Result<GridSearchResult> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let bad = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let n = headers.len().saturating_sub(2);
    let expected: Vec<String> = (1..=n)
        .map(|k| format!("w_{k}"))
        .chain(["objective".into(), "best".into()])
        .collect();
    if n < 2 || headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(bad(1, "header must be w_1,...,w_N,objective,best".into()));
    }
    let mut raw = Vec::new();
    let mut lcm: u128 = 1;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut fracs = Vec::with_capacity(n);
        for field in record.iter().take(n) {
            let (num, den) = parse_exact(field).map_err(|e| bad(line, e.to_string()))?;
            let g = gcd(num, den).max(1);
            let (num, den) = (num / g, den / g);
            lcm = lcm / gcd(lcm, den) * den;
            if lcm > u128::from(crate::ensemble::MAX_DENOMINATOR) {
                return Err(bad(line, "weight grid is too fine".into()));
            }
            fracs.push((num, den));
        }
        let objective: f64 = record[n]
            .parse()
            .map_err(|_| bad(line, format!("invalid objective {:?}", &record[n])))?;
        let flagged = match &record[n + 1] {
            "0" => false,
            "1" => true,
            other => return Err(bad(line, format!("best flag must be 0 or 1, got {other:?}"))),
        };
        raw.push((line, fracs, objective, flagged));
    }
    let denominator = lcm as u32;
    let mut table = Vec::with_capacity(raw.len());
    let mut flagged_rows = Vec::new();
    for (line, fracs, objective, flagged) in raw {
        let numerators = fracs
            .iter()
            .map(|&(num, den)| (num * (lcm / den)) as u32)
            .collect();
        let w = WeightVector::new(numerators, denominator).map_err(|e| bad(line, e.to_string()))?;
        if flagged {
            flagged_rows.push(w.clone());
        }
        table.push((w, objective));
    }
    let result =
        GridSearchResult::from_table(table).map_err(|e| bad(0, e.to_string()))?;
    if flagged_rows != [result.best.clone()] {
        return Err(bad(
            0,
            format!(
                "best flag marks {} rows and disagrees with the argmax {}",
                flagged_rows.len(),
                result.best
            ),
        ));
    }
    Ok(result)
}

/// Renders a heatmap panel: one `#` metadata line, a header of horizontal
/// weights, then one row per vertical weight. Absent cells are empty fields.
pub fn render_heatmap(matrix: &HeatmapMatrix) -> String {
    let d = matrix.denominator;
    let name = |k: usize| format!("w_{}", k + 1);
    let [h_axis, v_axis, implied] = matrix.axes;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# fixed={},fixed_weight={},horizontal={},vertical={},implied={},argmax_{}={},argmax_{}={},argmax_z={}",
        name(matrix.fixed_index),
        crate::ensemble::format_grid_value(matrix.fixed_numerator, d),
        name(h_axis),
        name(v_axis),
        name(implied),
        name(h_axis),
        crate::ensemble::format_grid_value(matrix.argmax.horizontal, d),
        name(v_axis),
        crate::ensemble::format_grid_value(matrix.argmax.vertical, d),
        fmt4(matrix.argmax.z),
    );
    let _ = write!(out, "{}\\{}", name(v_axis), name(h_axis));
    for h in 0..=d {
        let _ = write!(out, ",{}", crate::ensemble::format_grid_value(h, d));
    }
    out.push('\n');
    for (v, row) in matrix.cells.iter().enumerate() {
        out.push_str(&crate::ensemble::format_grid_value(v as u32, d));
        for cell in row {
            out.push(',');
            if let Some(z) = cell {
                out.push_str(&fmt4(*z));
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_heatmap(path: impl AsRef<Path>, matrix: &HeatmapMatrix) -> Result<()> {
    write_bytes(path.as_ref(), render_heatmap(matrix).as_bytes())
}

/// Renders the argmax of a grid search as `key=value` lines.
pub fn render_best_weights(result: &GridSearchResult, model_names: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "denominator={}", result.denominator());
    let _ = writeln!(out, "weights={}", result.best.format_weights().join(","));
    let _ = writeln!(out, "objective={}", result.best_objective);
    for (k, value) in result.best.format_weights().iter().enumerate() {
        match model_names.get(k) {
            Some(name) => {
                let _ = writeln!(out, "w_{}={value} # {name}", k + 1);
            }
            None => {
                let _ = writeln!(out, "w_{}={value}", k + 1);
            }
        }
    }
    out
}

pub fn write_best_weights(
    path: impl AsRef<Path>,
    result: &GridSearchResult,
    model_names: &[String],
) -> Result<()> {
    write_bytes(
        path.as_ref(),
        render_best_weights(result, model_names).as_bytes(),
    )
}

/// Reads the `weights` and `denominator` keys of a best-weights file.
pub fn read_best_weights(path: impl AsRef<Path>) -> Result<WeightVector> {
    let path = path.as_ref();
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to() as u64,
        kind: ParseErrorKind::MalformedHeader("not UTF-8".into()),
    })?;
    let mut weights = None;
    let mut denominator = None;
    for (i, line) in text.lines().enumerate() {
        let bad = |message: String| Error::Csv {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message,
        };
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        match key.trim() {
            "weights" => weights = Some(value.trim().to_owned()),
            "denominator" => {
                denominator = Some(
                    value
                        .trim()
                        .parse::<u32>()
                        .map_err(|_| bad(format!("invalid denominator {value:?}")))?,
                )
            }
            _ => {}
        }
    }
    let missing = |key: &str| Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        message: format!("missing {key} key"),
    };
    let weights = weights.ok_or_else(|| missing("weights"))?;
    let denominator = denominator.ok_or_else(|| missing("denominator"))?;
    WeightVector::parse(&weights, denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{enumerate_simplex, heatmap};

    #[test]
    fn pgm_bytes_for_2x2_foreground() {
        let mask = Mask::new(2, 2, vec![true; 4]).unwrap();
        let bytes = encode_mask(&mask);
        let mut expect = b"P5\n2 2\n255\n".to_vec();
        expect.extend([0xFF, 0xFF, 0xFF, 0xFF]);
        assert_eq!(bytes, expect);
        assert_eq!(decode_mask(&bytes).unwrap(), mask);
    }

    #[test]
    fn pgm_rejects_bad_pixel() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend([0, 7]);
        assert_eq!(
            decode_mask(&bytes).unwrap_err(),
            (12, ParseErrorKind::InvalidPixel { value: 7 })
        );
    }

    #[test]
    fn pgm_header_errors() {
        assert!(matches!(
            decode_mask(b"P2\n1 1\n255\n\0").unwrap_err(),
            (0, ParseErrorKind::WrongMagic { .. })
        ));
        assert!(matches!(
            decode_mask(b"P5\n1 1\n15\n\0").unwrap_err(),
            (7, ParseErrorKind::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_mask(b"P5\nx 1\n255\n\0").unwrap_err(),
            (3, ParseErrorKind::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_mask(b"P5\n0 1\n255\n").unwrap_err(),
            (3, ParseErrorKind::MalformedHeader(_))
        ));
        assert_eq!(
            decode_mask(b"P5\n2 2\n255\n\0\0").unwrap_err(),
            (11, ParseErrorKind::Truncated { expected: 4, found: 2 })
        );
        assert_eq!(
            decode_mask(b"P5\n1 1\n255\n\0\0").unwrap_err(),
            (12, ParseErrorKind::TrailingData(1))
        );
        assert!(decode_mask(b"").is_err());
        assert!(decode_mask(b"P5").is_err());
    }

    #[test]
    fn pgm_accepts_comments() {
        let bytes = b"P5\n# made by hand\n1 2\n255\n\xff\x00";
        let m = decode_mask(bytes).unwrap();
        assert_eq!(m.bits(), &[true, false]);
    }

    #[test]
    fn pfm_bytes_for_half() {
        let map = ProbMap::filled(1, 1, 0.5).unwrap();
        let bytes = encode_probmap(&map);
        let mut expect = b"Pf\n1 1\n-1.0\n".to_vec();
        expect.extend([0x00, 0x00, 0x00, 0x3F]);
        assert_eq!(bytes, expect);
        assert_eq!(decode_probmap(&bytes).unwrap(), map);
    }

    #[test]
    fn pfm_rows_are_bottom_up_on_disk() {
        let map = ProbMap::new(1, 2, vec![0.25, 0.75]).unwrap();
        let bytes = encode_probmap(&map);
        let payload = &bytes[bytes.len() - 8..];
        assert_eq!(&payload[..4], &0.75f32.to_le_bytes());
        assert_eq!(&payload[4..], &0.25f32.to_le_bytes());
        assert_eq!(decode_probmap(&bytes).unwrap(), map);
    }

    #[test]
    fn pfm_errors() {
        let mut bytes = b"Pf\n2 1\n-1.0\n".to_vec();
        bytes.extend(0.5f32.to_le_bytes());
        bytes.extend(1.5f32.to_le_bytes());
        assert!(matches!(
            decode_probmap(&bytes).unwrap_err(),
            (16, ParseErrorKind::SampleOutOfRange { index: 1, .. })
        ));
        let mut be = b"Pf\n1 1\n1.0\n".to_vec();
        be.extend(0.5f32.to_be_bytes());
        assert_eq!(decode_probmap(&be).unwrap_err(), (7, ParseErrorKind::BigEndianUnsupported));
        assert!(matches!(
            decode_probmap(b"PF\n1 1\n-1.0\n\0\0\0\0").unwrap_err(),
            (0, ParseErrorKind::WrongMagic { .. })
        ));
        assert!(matches!(
            decode_probmap(b"Pf\n1 1\n-1.0\n\0\0").unwrap_err(),
            (12, ParseErrorKind::Truncated { .. })
        ));
        assert!(matches!(
            decode_probmap(b"Pf\n1 1\nabc\n\0\0\0\0").unwrap_err(),
            (7, ParseErrorKind::MalformedHeader(_))
        ));
        let mut nan = b"Pf\n1 1\n-1.0\n".to_vec();
        nan.extend(f32::NAN.to_le_bytes());
        assert!(decode_probmap(&nan).is_err());
    }

    #[test]
    fn report_formats_reference_row() {
        let report = Report {
            rows: vec![],
            aggregate: AggregateRow {
                iou: 0.7279,
                precision: 0.8,
                recall: 0.8131,
                f1: 0.8065,
                h: 92.4604,
            },
        };
        assert_eq!(
            report.render(),
            "id,iou,precision,recall,f1,hd95\nAGGREGATE,0.7279,0.8000,0.8131,0.8065,92.4604\n"
        );
    }

    #[test]
    fn fmt4_rounds_ties_to_even() {
        // 0.03125 and 0.09375 are exact binary values sitting on a tie.
        assert_eq!(fmt4(0.03125), "0.0312");
        assert_eq!(fmt4(0.09375), "0.0938");
        assert_eq!(fmt4(1.0), "1.0000");
        assert_eq!(fmt4(0.0), "0.0000");
    }

    #[test]
    fn single_slice_aggregate() {
        let c = ConfusionCounts::new(6, 2, 1, 91);
        let rec = MetricsRecord::from_counts(&c, 4.0);
        let report = Report::new(vec![("s0".into(), rec)], &c);
        assert_eq!(report.aggregate.iou, rec.iou);
        assert_eq!(report.aggregate.f1, rec.f1);
        assert!((report.aggregate.h - 5f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn perfect_slices_aggregate() {
        let c = ConfusionCounts::new(10, 0, 0, 90);
        let rec = MetricsRecord::from_counts(&c, 0.0);
        let report = Report::new(vec![("a".into(), rec), ("b".into(), rec)], &(c + c));
        assert!(report.render().ends_with("AGGREGATE,1.0000,1.0000,1.0000,1.0000,0.0000\n"));
    }

    fn synthetic_result() -> GridSearchResult {
        let table = enumerate_simplex(4, 10)
            .unwrap()
            .into_iter()
            .map(|w| {
                let v = 0.5 + 0.01 * f64::from(w.numerators()[2]) - 0.003 * f64::from(w.numerators()[0]);
                (w, v)
            })
            .collect();
        GridSearchResult::from_table(table).unwrap()
    }

    #[test]
    fn grid_table_shape() {
        let result = synthetic_result();
        let text = render_grid_table(&result);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "w_1,w_2,w_3,w_4,objective,best");
        assert_eq!(lines.len(), 287);
        assert!(lines.iter().any(|l| l.starts_with("0.1,0.0,0.9,0.0,")));
        assert_eq!(lines.iter().filter(|l| l.ends_with(",1")).count(), 1);
    }

    #[test]
    fn grid_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        let result = synthetic_result();
        write_grid_table(&path, &result).unwrap();
        assert_eq!(read_grid_table(&path).unwrap(), result);
    }

    #[test]
    fn grid_table_rejects_wrong_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        let text = render_grid_table(&synthetic_result()).replace(",1\n", ",0\n");
        fs::write(&path, text).unwrap();
        assert!(read_grid_table(&path).is_err());
    }

    #[test]
    fn heatmap_layout() {
        let result = synthetic_result();
        let panel = heatmap(&result, 0, 2).unwrap();
        let text = render_heatmap(&panel);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# fixed=w_1,fixed_weight=0.2,horizontal=w_2,vertical=w_3,implied=w_4"));
        assert_eq!(lines[1], "w_3\\w_2,0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0");
        assert_eq!(lines.len(), 2 + 11);
        // w_3 = 0.9 with w_1 = 0.2 leaves no room: all fields empty.
        assert_eq!(lines[2 + 9], "0.9,,,,,,,,,,,");
        assert!(lines.iter().skip(2).all(|l| l.split(',').count() == 12));
    }

    #[test]
    fn best_weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("best.txt");
        let result = synthetic_result();
        let names: Vec<String> = ["PAN", "FPN", "Unet", "DeepLabv3+"].map(String::from).into();
        write_best_weights(&path, &result, &names).unwrap();
        assert_eq!(read_best_weights(&path).unwrap(), result.best);
    }
}
