//! On-disk interchange formats.
//!
//! * matrices: NPY v1.0 (2-D, little-endian `f4`/`f8`, C order) or CSV
//! * token tables: one JSON string per line (`.tokens.jsonl`)
//! * lexicons: TOML with one `[[category]]` table per concept
//! * reports: JSON or CSV with floats rounded to 6 significant digits

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{ConceptLexicon, ScoreReport, TokenTable};
use crate::pairing::DEFAULT_STOPLIST;

const NPY_MAGIC: &[u8] = b"\x93NUMPY";
const NPY_PREAMBLE: usize = 10;

/// Shipped concept lexicon.
pub const DEFAULT_LEXICON: &str = include_str!("../data/concepts.lexicon");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixFileHeader {
    pub dtype: Dtype,
    pub shape: (usize, usize),
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a matrix from `.npy` or `.csv`; other extensions are sniffed by
/// the NPY magic string.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv || !bytes.starts_with(NPY_MAGIC) {
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Csv {
            line: 1 + bytes[..e.valid_up_to()]
                .iter()
                .filter(|&&b| b == b'\n')
                .count(),
            cell: 0,
            message: "invalid UTF-8".into(),
        })?;
        parse_csv(text)
    } else {
        parse_npy(&bytes)
    }
}

fn npy_err(offset: usize, message: impl Into<String>) -> Error {
    Error::NpyFormat {
        offset,
        message: message.into(),
    }
}

/// Parses an NPY v1.0 byte buffer holding a 2-D float array.
pub fn parse_npy(bytes: &[u8]) -> Result<Matrix> {
    let (header, data_start) = parse_npy_header(bytes)?;
    let (rows, cols) = header.shape;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| npy_err(NPY_PREAMBLE, "shape overflows"))?;
    let payload = &bytes[data_start..];
    let expected = n * header.dtype.size();
    if payload.len() != expected {
        return Err(npy_err(
            data_start,
            format!(
                "payload has {} bytes, shape {rows}x{cols} needs {expected}",
                payload.len()
            ),
        ));
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let m = Matrix::new(rows, cols, data)?;
    if let Some((row, col)) = m.first_non_finite() {
        return Err(Error::NonFiniteEntry { row, col });
    }
    Ok(m)
}

/// Parses the magic string, version, and header dictionary. Returns the
/// header and the byte offset of the payload.
pub fn parse_npy_header(bytes: &[u8]) -> Result<(MatrixFileHeader, usize)> {
    if bytes.len() < NPY_PREAMBLE || !bytes.starts_with(NPY_MAGIC) {
        return Err(npy_err(0, "missing \\x93NUMPY magic string"));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(npy_err(
            6,
            format!("unsupported version {}.{} (need 1.0)", bytes[6], bytes[7]),
        ));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = NPY_PREAMBLE + hlen;
    if bytes.len() < data_start {
        return Err(npy_err(
            8,
            format!("header length {hlen} exceeds file size"),
        ));
    }
    let raw = &bytes[NPY_PREAMBLE..data_start];
    let text = std::str::from_utf8(raw)
        .ok()
        .filter(|t| t.is_ascii())
        .ok_or_else(|| npy_err(NPY_PREAMBLE, "header is not ASCII"))?;
    if !text.ends_with('\n') {
        return Err(npy_err(data_start - 1, "header not terminated by newline"));
    }
    let dict = HeaderParser::new(text, NPY_PREAMBLE).dict()?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    for (key, value, at) in dict {
        let slot_taken = match key.as_str() {
            "descr" => descr.replace((value, at)).is_some(),
            "fortran_order" => fortran.replace((value, at)).is_some(),
            "shape" => shape.replace((value, at)).is_some(),
            other => return Err(npy_err(at, format!("unexpected header key {other:?}"))),
        };
        if slot_taken {
            return Err(npy_err(at, format!("duplicate header key {key:?}")));
        }
    }
    let (descr, at) = descr.ok_or_else(|| npy_err(NPY_PREAMBLE, "missing 'descr'"))?;
    let dtype = match descr {
        HeaderValue::Str(s) if s == "<f8" => Dtype::F64,
        HeaderValue::Str(s) if s == "<f4" => Dtype::F32,
        HeaderValue::Str(s) => {
            return Err(npy_err(
                at,
                format!("unsupported dtype {s:?} (need '<f4' or '<f8')"),
            ))
        }
        _ => return Err(npy_err(at, "'descr' must be a string")),
    };
    match fortran.ok_or_else(|| npy_err(NPY_PREAMBLE, "missing 'fortran_order'"))? {
        (HeaderValue::Bool(false), _) => {}
        (HeaderValue::Bool(true), at) => {
            return Err(npy_err(at, "Fortran-order arrays are not supported"))
        }
        (_, at) => return Err(npy_err(at, "'fortran_order' must be True or False")),
    }
    let shape = match shape.ok_or_else(|| npy_err(NPY_PREAMBLE, "missing 'shape'"))? {
        (HeaderValue::Tuple(dims), _) if dims.len() == 2 => (dims[0], dims[1]),
        (HeaderValue::Tuple(dims), at) => {
            return Err(npy_err(
                at,
                format!("expected a 2-D array, got {}-D", dims.len()),
            ))
        }
        (_, at) => return Err(npy_err(at, "'shape' must be a tuple")),
    };
    Ok((MatrixFileHeader { dtype, shape }, data_start))
}

#[derive(Debug)]
enum HeaderValue {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Parser for the Python dict literal in an NPY header.
struct HeaderParser<'a> {
    src: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> HeaderParser<'a> {
    fn new(text: &'a str, base: usize) -> Self {
        HeaderParser {
            src: text.as_bytes(),
            pos: 0,
            base,
        }
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        npy_err(self.offset(), msg)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && matches!(self.src[self.pos], b' ' | b'\t' | b'\n') {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {:?}", c as char)))
        }
    }

    fn dict(mut self) -> Result<Vec<(String, HeaderValue, usize)>> {
        self.expect(b'{')?;
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let at = self.offset();
            let key = self.string()?;
            self.expect(b':')?;
            self.skip_ws();
            let value = self.value()?;
            out.push((key, value, at));
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {
                    self.pos += 1;
                    break;
                }
                _ => return Err(self.err("expected ',' or '}'")),
            }
        }
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.err("trailing characters after header dict"));
        }
        Ok(out)
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected a quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.peek().is_some_and(|c| c != quote) {
            self.pos += 1;
        }
        if self.peek().is_none() {
            return Err(self.err("unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn value(&mut self) -> Result<HeaderValue> {
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(HeaderValue::Str),
            Some(b'(') => self.tuple(),
            _ => {
                let rest = &self.src[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(HeaderValue::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(HeaderValue::Bool(false))
                } else {
                    Err(self.err("expected a string, tuple, True or False"))
                }
            }
        }
    }

    fn tuple(&mut self) -> Result<HeaderValue> {
        self.pos += 1;
        let mut dims = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    return Ok(HeaderValue::Tuple(dims));
                }
                Some(c) if c.is_ascii_digit() => {
                    let start = self.pos;
                    while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        self.pos += 1;
                    }
                    let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    // accept Python 2 long suffix
                    if self.peek() == Some(b'L') {
                        self.pos += 1;
                    }
                    let d = s.parse().map_err(|_| self.err("dimension out of range"))?;
                    dims.push(d);
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(self.err("expected ',' or ')' in shape")),
                    }
                }
                _ => return Err(self.err("expected a dimension")),
            }
        }
    }
}

/// Encodes a matrix as NPY v1.0 bytes, header padded to 64 bytes.
pub fn encode_npy(m: &Matrix, dtype: Dtype) -> Vec<u8> {
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}",
        dtype.descr(),
        m.rows(),
        m.cols()
    );
    let unpadded = NPY_PREAMBLE + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');
    let mut out = Vec::with_capacity(NPY_PREAMBLE + dict.len() + m.as_slice().len() * dtype.size());
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    for &v in m.as_slice() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn write_npy(path: impl AsRef<Path>, m: &Matrix, dtype: Dtype) -> Result<()> {
    write_bytes(path.as_ref(), &encode_npy(m, dtype))
}

/// Parses comma-separated decimal rows. Blank lines are skipped.
pub fn parse_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (ci, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                line: li + 1,
                cell: ci + 1,
                message: format!("not a decimal number: {:?}", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry {
                    row: rows.len(),
                    col: ci,
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Csv {
                    line: li + 1,
                    cell: row.len(),
                    message: format!("expected {} cells", first.len()),
                });
            }
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

pub fn write_csv(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in m.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_bytes(path.as_ref(), out.as_bytes())
}

/// Reads a token table: one JSON string literal per line.
pub fn load_token_table(path: impl AsRef<Path>) -> Result<TokenTable> {
    parse_token_table(&read_bytes(path.as_ref())?)
}

pub fn parse_token_table(bytes: &[u8]) -> Result<TokenTable> {
    let mut tokens = Vec::new();
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.is_empty() {
        return Ok(TokenTable::new(tokens));
    }
    for (i, line) in body.split(|&b| b == b'\n').enumerate() {
        let line_no = i + 1;
        let text = std::str::from_utf8(line).map_err(|_| Error::TokenTable {
            line: line_no,
            message: "invalid UTF-8".into(),
        })?;
        let text = text.strip_suffix('\r').unwrap_or(text);
        let tok: String = serde_json::from_str(text).map_err(|e| Error::TokenTable {
            line: line_no,
            message: format!("invalid JSON string: {e}"),
        })?;
        tokens.push(tok);
    }
    Ok(TokenTable::new(tokens))
}

pub fn encode_token_table(table: &TokenTable) -> String {
    let mut out = String::new();
    for t in table.tokens() {
        out.push_str(&serde_json::to_string(t).expect("strings always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_token_table(path: impl AsRef<Path>, table: &TokenTable) -> Result<()> {
    write_bytes(path.as_ref(), encode_token_table(table).as_bytes())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    #[serde(default)]
    category: Vec<LexiconEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconEntry {
    name: String,
    keywords: Vec<String>,
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<ConceptLexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text)
}

/// The shipped lexicon.
pub fn default_lexicon() -> ConceptLexicon {
    parse_lexicon(DEFAULT_LEXICON).expect("shipped lexicon is valid")
}

/// Parses lexicon text. Keywords are trimmed, lowercased and deduplicated;
/// a repeated category name is an error, as is any keyword that collides
/// with the non-concept stoplist.
pub fn parse_lexicon(text: &str) -> Result<ConceptLexicon> {
    let file: LexiconFile = toml::from_str(text).map_err(|e| Error::Lexicon(e.to_string()))?;
    let stop: HashSet<&str> = DEFAULT_STOPLIST.iter().copied().collect();
    let mut categories = BTreeMap::new();
    for entry in file.category {
        let mut seen = HashSet::new();
        let mut words = Vec::new();
        for kw in entry.keywords {
            let kw = kw.trim().to_lowercase();
            if kw.is_empty() || stop.contains(kw.as_str()) {
                return Err(Error::Lexicon(format!(
                    "category {:?}: keyword {kw:?} is a non-concept token",
                    entry.name
                )));
            }
            if seen.insert(kw.clone()) {
                words.push(kw);
            }
        }
        if categories.insert(entry.name.clone(), words).is_some() {
            return Err(Error::DuplicateCategory(entry.name));
        }
    }
    ConceptLexicon::new(categories)
}

pub fn encode_lexicon(lex: &ConceptLexicon) -> String {
    let mut out = String::new();
    for (name, words) in lex.categories() {
        out.push_str("[[category]]\n");
        out.push_str(&format!("name = {}\n", toml_str(name)));
        let quoted: Vec<String> = words.iter().map(|w| toml_str(w)).collect();
        out.push_str(&format!("keywords = [{}]\n\n", quoted.join(", ")));
    }
    out
}

fn toml_str(s: &str) -> String {
    // JSON string escapes are valid TOML basic-string escapes
    serde_json::to_string(s).expect("strings always serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown report format {other:?}"
            ))),
        }
    }
}

impl ReportFormat {
    /// Picks the format from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> ReportFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

/// One report plus the context it belongs to in a sweep or subspace run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub layer_a: Option<u32>,
    pub layer_b: Option<u32>,
    pub label: Option<String>,
    pub report: ScoreReport,
}

impl ReportRow {
    pub fn single(report: ScoreReport) -> Self {
        ReportRow {
            layer_a: None,
            layer_b: None,
            label: None,
            report,
        }
    }
}

/// Rounds to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// Formats with 6 significant digits using the shortest exact spelling.
pub fn fmt_sig6(x: f64) -> String {
    let r = round_sig6(x);
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(round_sig6(x)).map_or(Value::Null, Value::Number)
}

/// JSON object for one report with rounded floats.
pub fn report_json(report: &ScoreReport) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("metric".into(), json!(report.metric.as_str()));
    m.insert("paired_score".into(), num(report.paired_score));
    m.insert("null_mean".into(), num(report.null_mean));
    m.insert("null_samples".into(), json!(report.null_samples));
    m.insert("p_value".into(), num(report.p_value));
    m.insert("n_pairs".into(), json!(report.n_pairs));
    m.insert("filters_applied".into(), json!(report.filters_applied));
    m.insert("seed".into(), json!(report.seed));
    let stages: Vec<Value> = report
        .stage_counts
        .iter()
        .map(|s| json!({"stage": s.stage, "n_pairs": s.n_pairs}))
        .collect();
    m.insert("stage_counts".into(), Value::Array(stages));
    m.insert("params".into(), json!(report.params));
    m
}

fn row_json(row: &ReportRow) -> Value {
    let mut m = report_json(&row.report);
    if let Some(a) = row.layer_a {
        m.insert("layer_a".into(), json!(a));
    }
    if let Some(b) = row.layer_b {
        m.insert("layer_b".into(), json!(b));
    }
    if let Some(l) = &row.label {
        m.insert("label".into(), json!(l));
    }
    Value::Object(m)
}

/// Renders report rows. A lone row without layers or label becomes a
/// single JSON object; anything else becomes an array.
pub fn encode_reports(rows: &[ReportRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let v = match rows {
                [r] if r.layer_a.is_none() && r.layer_b.is_none() && r.label.is_none() => {
                    row_json(r)
                }
                _ => Value::Array(rows.iter().map(row_json).collect()),
            };
            let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = String::from(
                "layer_a,layer_b,label,metric,paired_score,null_mean,null_samples,p_value,n_pairs,seed,stage_counts\n",
            );
            for row in rows {
                let r = &row.report;
                let stages: Vec<String> = r
                    .stage_counts
                    .iter()
                    .map(|s| format!("{}={}", s.stage, s.n_pairs))
                    .collect();
                let cells = [
                    row.layer_a.map(|v| v.to_string()).unwrap_or_default(),
                    row.layer_b.map(|v| v.to_string()).unwrap_or_default(),
                    csv_cell(row.label.as_deref().unwrap_or("")),
                    r.metric.to_string(),
                    fmt_sig6(r.paired_score),
                    fmt_sig6(r.null_mean),
                    r.null_samples.to_string(),
                    fmt_sig6(r.p_value),
                    r.n_pairs.to_string(),
                    r.seed.to_string(),
                    csv_cell(&stages.join(";")),
                ];
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_reports(
    path: impl AsRef<Path>,
    rows: &[ReportRow],
    format: ReportFormat,
) -> Result<()> {
    write_bytes(path.as_ref(), encode_reports(rows, format).as_bytes())
}

pub fn write_report(
    path: impl AsRef<Path>,
    report: &ScoreReport,
    format: ReportFormat,
) -> Result<()> {
    report.validate()?;
    write_reports(path, &[ReportRow::single(report.clone())], format)
}
