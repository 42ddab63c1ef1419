//! File formats.
//!
//! * Series CSV: header `t,y1,...,yK`, one row per time index, consecutive `t`,
//!   presample rows at `t ≤ 0`. No missing cells.
//! * Key-value documents (ground truth, fit reports): `key = value` lines followed
//!   by matrix blocks introduced by `[Name RxC]` and holding `R` lines of `C`
//!   whitespace-separated numbers. `#` starts a comment line.
//! * Trace CSV: `iter,objective`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is lossless and repeated writes are byte-identical.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Result, VecmError};
use crate::mm::FitReport;
use crate::simulate::{DgpSpec, GroundTruth};
use crate::vecm::{SamplePath, VecmParams};

/// Shortest round-trip representation, switching to exponent form for very
/// large or small magnitudes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_path_csv<W: Write>(path: &SamplePath, out: W) -> Result<()> {
    let k = path.k();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("y{i}")));
    w.write_record(&header)?;
    let p0 = path.presample.ncols() as i64;
    let columns = path
        .presample
        .column_iter()
        .chain(path.observations.column_iter());
    for (i, col) in columns.enumerate() {
        let t = i as i64 - p0 + 1;
        let mut rec = vec![t.to_string()];
        rec.extend(col.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_path_csv<R: Read>(input: R) -> Result<SamplePath> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != "t" {
        return Err(VecmError::Parse("header must start with 't' followed by y1..yK".into()));
    }
    let k = header.len() - 1;
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != format!("y{}", i + 1) {
            return Err(VecmError::Parse(format!(
                "header column {} is '{name}', expected 'y{}'",
                i + 2,
                i + 1
            )));
        }
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != k + 1 {
            return Err(VecmError::Parse(format!(
                "row {} has {} cells, expected {}",
                row + 1,
                rec.len(),
                k + 1
            )));
        }
        let t: i64 = rec[0]
            .parse()
            .map_err(|_| VecmError::Parse(format!("row {}: bad time index '{}'", row + 1, &rec[0])))?;
        if let Some(&prev) = times.last() {
            if t != prev + 1 {
                return Err(VecmError::Parse(format!(
                    "row {}: time index {t} does not follow {prev}",
                    row + 1
                )));
            }
        }
        times.push(t);
        for (col, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                return Err(VecmError::Parse(format!("row {}: missing y{}", row + 1, col + 1)));
            }
            let v: f64 = cell.parse().map_err(|_| {
                VecmError::Parse(format!("row {}: bad value '{cell}' for y{}", row + 1, col + 1))
            })?;
            if !v.is_finite() {
                return Err(VecmError::NonFiniteData {
                    what: "series",
                    row: row + 1,
                    col: col + 1,
                });
            }
            values.push(v);
        }
    }
    let first = *times
        .first()
        .ok_or_else(|| VecmError::Parse("no data rows".into()))?;
    let p0 = if first <= 0 { (1 - first) as usize } else { 0 };
    if first > 1 {
        return Err(VecmError::Parse(format!("series starts at t = {first}, expected t <= 1")));
    }
    let all = DMatrix::from_column_slice(k, times.len(), &values);
    if times.len() <= p0 {
        return Err(VecmError::Parse("no rows with t >= 1".into()));
    }
    SamplePath::new(
        all.columns(0, p0).into_owned(),
        all.columns(p0, times.len() - p0).into_owned(),
    )
}

pub fn save_path(path: &SamplePath, file: &Path) -> Result<()> {
    write_path_csv(path, BufWriter::new(File::create(file)?))
}

pub fn load_path(file: &Path) -> Result<SamplePath> {
    read_path_csv(BufReader::new(File::open(file)?))
}

pub fn write_trace_csv<W: Write>(trace: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "objective"])?;
    for (i, f) in trace.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(*f)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| VecmError::Parse(format!("trace row {}: bad objective", i + 1)))?;
        out.push(f);
    }
    Ok(out)
}

/// Flat key-value entries plus named matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDocument {
    pub entries: Vec<(String, String)>,
    pub matrices: Vec<(String, DMatrix<f64>)>,
}

impl KvDocument {
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn set_matrix(&mut self, name: &str, m: DMatrix<f64>) -> &mut Self {
        match self.matrices.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = m,
            None => self.matrices.push((name.to_string(), m)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| VecmError::Parse(format!("missing key '{key}'")))?;
        raw.parse()
            .map_err(|_| VecmError::Parse(format!("key '{key}': cannot parse '{raw}'")))
    }

    pub fn matrix(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.matrices
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| VecmError::Parse(format!("missing matrix block '{name}'")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (name, m) in &self.matrices {
            let _ = writeln!(s, "\n[{name} {}x{}]", m.nrows(), m.ncols());
            for row in m.row_iter() {
                let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
                let _ = writeln!(s, "{}", cells.join(" "));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDocument::default();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((no, raw)) = lines.next() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(head) = line.strip_prefix('[') {
                let head = head
                    .strip_suffix(']')
                    .ok_or_else(|| VecmError::Parse(format!("line {}: unterminated block header", no + 1)))?;
                let (name, dims) = head
                    .rsplit_once(' ')
                    .ok_or_else(|| VecmError::Parse(format!("line {}: expected [Name RxC]", no + 1)))?;
                let (r, c) = dims
                    .split_once('x')
                    .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
                    .ok_or_else(|| VecmError::Parse(format!("line {}: bad dimensions '{dims}'", no + 1)))?;
                let mut data = Vec::with_capacity(r * c);
                for i in 0..r {
                    let (rno, row) = lines.next().ok_or_else(|| {
                        VecmError::Parse(format!("block '{name}' ends after {i} of {r} rows"))
                    })?;
                    let cells: Vec<&str> = row.split_whitespace().collect();
                    if cells.len() != c {
                        return Err(VecmError::Parse(format!(
                            "line {}: block '{name}' row has {} values, expected {c}",
                            rno + 1,
                            cells.len()
                        )));
                    }
                    for cell in cells {
                        data.push(cell.parse::<f64>().map_err(|_| {
                            VecmError::Parse(format!("line {}: bad number '{cell}'", rno + 1))
                        })?);
                    }
                }
                doc.matrices
                    .push((name.trim().to_string(), DMatrix::from_row_slice(r, c, &data)));
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| VecmError::Parse(format!("line {}: expected 'key = value'", no + 1)))?;
            doc.entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(doc)
    }

    pub fn save(&self, file: &Path) -> Result<()> {
        std::fs::write(file, self.to_text())?;
        Ok(())
    }

    pub fn load(file: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(file)?)
    }
}

fn join_usize(v: &[usize]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| VecmError::Parse(format!("bad index '{t}' in list")))
        })
        .collect()
}

fn params_into(doc: &mut KvDocument, params: &VecmParams) {
    doc.set("k", params.k).set("p", params.p).set("r", params.r);
    doc.set_matrix("Pi", params.pi.clone())
        .set_matrix("Gamma", params.gamma.clone())
        .set_matrix("Sigma", params.sigma.clone());
}

fn params_from(doc: &KvDocument) -> Result<VecmParams> {
    VecmParams::new(
        doc.require("k")?,
        doc.require("p")?,
        doc.require("r")?,
        doc.matrix("Pi")?.clone(),
        doc.matrix("Gamma")?.clone(),
        doc.matrix("Sigma")?.clone(),
    )
}

pub fn ground_truth_document(truth: &GroundTruth, spec: &DgpSpec) -> KvDocument {
    let mut doc = KvDocument::default();
    doc.set("kind", "ground_truth");
    params_into(&mut doc, &truth.params);
    doc.set("n", spec.n)
        .set("active", spec.active)
        .set("support", join_usize(&truth.support))
        .set("innovation", spec.innovation)
        .set("seed", spec.seed);
    doc
}

/// Parameters and support stored in a ground-truth document.
pub fn ground_truth_from_document(doc: &KvDocument) -> Result<(VecmParams, Vec<usize>)> {
    if doc.get("kind") != Some("ground_truth") {
        return Err(VecmError::Parse("not a ground-truth document".into()));
    }
    let params = params_from(doc)?;
    let support = parse_usize_list(doc.get("support").unwrap_or(""))?;
    Ok((params, support))
}

/// Fit report document; `meta` entries (solver, loss, ξ, …) precede the estimates.
pub fn fit_report_document(report: &FitReport, meta: &[(&str, String)], timing: bool) -> KvDocument {
    let mut doc = KvDocument::default();
    doc.set("kind", "fit_report");
    for (k, v) in meta {
        doc.set(k, v);
    }
    params_into(&mut doc, &report.params);
    doc.set("iterations", report.iterations)
        .set("termination", report.terminated)
        .set("initial_objective", fmt_f64(report.obj_trace[0]))
        .set("final_objective", fmt_f64(report.final_objective()));
    if timing {
        doc.set("wall_time_seconds", fmt_f64(report.wall_time));
    }
    doc.set_matrix("Alpha", report.factors.alpha.clone())
        .set_matrix("Beta", report.factors.beta.clone());
    doc
}

/// Estimated parameters stored in a fit report document.
pub fn fit_params_from_document(doc: &KvDocument) -> Result<VecmParams> {
    if doc.get("kind") != Some("fit_report") {
        return Err(VecmError::Parse("not a fit report".into()));
    }
    params_from(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_path() -> SamplePath {
        SamplePath::new(
            DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.125]),
            DMatrix::from_fn(2, 4, |i, j| (i as f64 + 1.0) * 0.1 + j as f64 / 3.0),
        )
        .unwrap()
    }

    #[test]
    fn path_round_trip() {
        let p = small_path();
        let mut buf = Vec::new();
        write_path_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,y1,y2\n-1,0.5,2.0\n0,-1.0,0.125\n1,"));
        assert_eq!(read_path_csv(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn csv_without_presample() {
        let text = "t,y1\n1,0\n2,1\n3,3\n";
        let p = read_path_csv(text.as_bytes()).unwrap();
        assert_eq!(p.presample.ncols(), 0);
        assert_eq!(p.n(), 3);
    }

    #[test]
    fn csv_errors() {
        let bad = [
            "x,y1\n1,0\n2,1\n",
            "t,y2\n1,0\n2,1\n",
            "t,y1\n1,0\n3,1\n",
            "t,y1\n1,\n2,1\n",
            "t,y1\n1,abc\n2,1\n",
            "t,y1\n1,inf\n2,1\n",
            "t,y1\n2,0\n3,1\n",
            "t,y1\n",
            "t,y1,y2\n1,0\n2,1,1\n",
        ];
        for text in bad {
            assert!(read_path_csv(text.as_bytes()).is_err(), "accepted {text:?}");
        }
    }

    #[test]
    fn document_round_trip() {
        let mut doc = KvDocument::default();
        doc.set("a", 1).set("name", "x y").set("a", 2);
        doc.set_matrix("M", DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 1e-300, 0.1, 3.0, -0.0]));
        let text = doc.to_text();
        assert!(text.contains("a = 2\n"));
        assert!(text.contains("[M 2x3]\n1.0 -2.5 1e-300\n"));
        assert_eq!(KvDocument::parse(&text).unwrap(), doc);
    }

    #[test]
    fn document_errors() {
        for text in ["novalue\n", "[M 2x2]\n1 2\n", "[M 1x2]\n1\n", "[M 1x1\n1\n", "[M axb]\n"] {
            assert!(KvDocument::parse(text).is_err(), "accepted {text:?}");
        }
    }

    #[test]
    fn trace_round_trip() {
        let trace = [3.5, 2.25, 2.0 + 1e-12];
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        assert!(buf.starts_with(b"iter,objective\n0,3.5\n1,2.25\n"));
        assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), trace);
    }
}
