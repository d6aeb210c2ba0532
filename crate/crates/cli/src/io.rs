//! File formats.
//!
//! Trace CSV: header `k,u_0..,d_0..,f_0..,x_0..,y_0..`, one row per sample
//! `k = 0..T-1`. The last row leaves the `u`, `d`, `f` cells empty because
//! those signals have `T - 1` samples. Absent `d` or `f` columns read as zero.
//!
//! Residual CSV: header `k,r_0..`, one row per sample.
//!
//! Matrix bundle: a JSON header line naming each matrix and its shape, then the
//! rows of every matrix in header order as CSV lines. A matrix without columns
//! contributes no lines.
//!
//! Floats are written in shortest round-trip form, so reading a
//! file back reproduces every value exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ddfdi_core::lti_model::SignalTrace;
use ddfdi_core::{Mat, SystemRealization, Tolerance, UioMatrices, Vector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const BUNDLE_FORMAT: &str = "ddfdi-matrices";
pub const BUNDLE_VERSION: u32 = 1;

pub fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

pub fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| CliError::io(path, e))
}

/// Shortest round-trip text; exponent form outside `[1e-5, 1e16)`.
pub fn fmt(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn parse_cell(cell: &str, row: usize, column: &str) -> CliResult<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Schema(format!("row {row}, column {column}: cannot parse {cell:?} as a number")))
}

fn csv_err(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => CliError::Io { path: String::new(), source: e },
        other => CliError::Schema(format!("malformed CSV: {other:?}")),
    }
}

/// Column groups of a trace header, in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TraceLayout {
    m: usize,
    r: usize,
    m_f: usize,
    n: usize,
    p: usize,
}

const TRACE_GROUPS: [&str; 5] = ["u", "d", "f", "x", "y"];

fn parse_trace_header(header: &csv::StringRecord) -> CliResult<TraceLayout> {
    let mut fields = header.iter();
    if fields.next() != Some("k") {
        return Err(CliError::Schema("trace header must start with `k`".into()));
    }
    let mut widths = [0usize; 5];
    let mut group = 0;
    for name in fields {
        let (prefix, index) = name
            .split_once('_')
            .ok_or_else(|| CliError::Schema(format!("unexpected trace column {name:?}")))?;
        let g = TRACE_GROUPS
            .iter()
            .position(|p| *p == prefix)
            .ok_or_else(|| CliError::Schema(format!("unexpected trace column {name:?}")))?;
        if g < group {
            return Err(CliError::Schema(format!(
                "column {name:?} out of order; groups must appear as u, d, f, x, y"
            )));
        }
        group = g;
        let index: usize = index
            .parse()
            .map_err(|_| CliError::Schema(format!("unexpected trace column {name:?}")))?;
        if index != widths[g] {
            return Err(CliError::Schema(format!(
                "column {name:?} out of order; expected {prefix}_{}",
                widths[g]
            )));
        }
        widths[g] += 1;
    }
    let [m, r, m_f, n, p] = widths;
    if m == 0 || p == 0 {
        return Err(CliError::Schema("trace needs at least one u and one y column".into()));
    }
    if m_f != 0 && m_f != m {
        return Err(CliError::Schema(format!("trace has {m} u columns but {m_f} f columns")));
    }
    Ok(TraceLayout { m, r, m_f, n, p })
}

pub fn trace_header(trace: &SignalTrace) -> Vec<String> {
    let width = |seq: &[Vector]| seq.first().map_or(0, |v| v.len());
    let mut header = vec!["k".to_string()];
    for (name, w) in [
        ("u", width(&trace.u)),
        ("d", width(&trace.d)),
        ("f", width(&trace.f)),
        ("x", width(&trace.x)),
        ("y", width(&trace.y)),
    ] {
        header.extend((0..w).map(|i| format!("{name}_{i}")));
    }
    header
}

pub fn write_trace<W: Write>(trace: &SignalTrace, out: W) -> CliResult<()> {
    trace.validate()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(trace)).map_err(csv_err)?;
    let t = trace.horizon();
    let width = |seq: &[Vector]| seq.first().map_or(0, |v| v.len());
    let (m, r, m_f) = (width(&trace.u), width(&trace.d), width(&trace.f));
    for k in 0..t {
        let mut row = vec![k.to_string()];
        for (seq, w) in [(&trace.u, m), (&trace.d, r), (&trace.f, m_f)] {
            match seq.get(k) {
                Some(v) => row.extend(v.iter().map(|x| fmt(*x))),
                None => row.extend(std::iter::repeat_n(String::new(), w)),
            }
        }
        row.extend(trace.x[k].iter().map(|x| fmt(*x)));
        row.extend(trace.y[k].iter().map(|x| fmt(*x)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io("<trace output>", e))?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> CliResult<SignalTrace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let layout = parse_trace_header(&header)?;
    let TraceLayout { m, r, m_f, n, p } = layout;
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>().map_err(csv_err)?;
    let t = rows.len();
    if t == 0 {
        return Err(CliError::Schema("trace has no samples".into()));
    }
    let mut trace = SignalTrace {
        u: Vec::with_capacity(t - 1),
        d: Vec::with_capacity(t - 1),
        f: Vec::with_capacity(t - 1),
        x: Vec::with_capacity(t),
        y: Vec::with_capacity(t),
    };
    for (k, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(CliError::Schema(format!(
                "row {k} has {} cells, header has {}",
                row.len(),
                header.len()
            )));
        }
        if row[0].parse::<usize>().ok() != Some(k) {
            return Err(CliError::Schema(format!("row {k}: expected k = {k}, found {:?}", &row[0])));
        }
        let last = k + 1 == t;
        let mut col = 1;
        let mut take = |w: usize, optional: bool| -> CliResult<Option<Vector>> {
            let cells: Vec<&str> = (col..col + w).map(|j| &row[j]).collect();
            let names: Vec<&str> = (col..col + w).map(|j| &header[j]).collect();
            col += w;
            if optional && cells.iter().all(|c| c.is_empty()) {
                return Ok(None);
            }
            let values = cells
                .iter()
                .zip(&names)
                .map(|(c, name)| parse_cell(c, k, name))
                .collect::<CliResult<Vec<f64>>>()?;
            Ok(Some(Vector::from_vec(values)))
        };
        let u = take(m, last)?;
        let d = take(r, last)?;
        let f = take(m_f, last)?;
        let x = take(n, false)?.unwrap_or_else(|| Vector::zeros(n));
        let y = take(p, false)?.unwrap_or_else(|| Vector::zeros(p));
        if !last {
            trace.u.push(u.unwrap_or_else(|| Vector::zeros(m)));
            trace.d.push(d.unwrap_or_else(|| Vector::zeros(r)));
            trace.f.push(if m_f == 0 { Vector::zeros(m) } else { f.unwrap_or_else(|| Vector::zeros(m)) });
        } else if u.is_some() || (r > 0 && d.is_some()) || (m_f > 0 && f.is_some()) {
            return Err(CliError::Schema(format!("row {k}: the last sample must leave u, d and f empty")));
        }
        trace.x.push(x);
        trace.y.push(y);
    }
    Ok(trace)
}

pub fn read_trace_file(path: &Path) -> CliResult<SignalTrace> {
    read_trace(open(path)?).map_err(|e| e.at(path))
}

pub fn write_residuals<W: Write>(residuals: &[Vector], out: W) -> CliResult<()> {
    let p = residuals.first().map_or(0, |v| v.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((0..p).map(|i| format!("r_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, r) in residuals.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(r.iter().map(|v| fmt(*v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io("<residual output>", e))?;
    Ok(())
}

pub fn read_residuals<R: Read>(input: R) -> CliResult<Vec<Vector>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("k") {
        return Err(CliError::Schema("residual header must start with `k`".into()));
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != format!("r_{i}") {
            return Err(CliError::Schema(format!("unexpected residual column {name:?}; expected r_{i}")));
        }
    }
    let p = header.len() - 1;
    if p == 0 {
        return Err(CliError::Schema("residual file needs at least one r column".into()));
    }
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        if row.len() != header.len() {
            return Err(CliError::Schema(format!("row {k} has {} cells, header has {}", row.len(), header.len())));
        }
        if row[0].parse::<usize>().ok() != Some(k) {
            return Err(CliError::Schema(format!("row {k}: expected k = {k}, found {:?}", &row[0])));
        }
        let values = (1..=p)
            .map(|j| parse_cell(&row[j], k, &header[j]))
            .collect::<CliResult<Vec<f64>>>()?;
        out.push(Vector::from_vec(values));
    }
    Ok(out)
}

/// True when the CSV header names a residual file rather than a trace.
pub fn is_residual_header(path: &Path) -> CliResult<bool> {
    let mut line = String::new();
    BufReader::new(open(path)?)
        .read_line(&mut line)
        .map_err(|e| CliError::io(path, e))?;
    Ok(line.trim_start().starts_with("k,r_"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleHeader {
    pub format: String,
    pub version: u32,
    pub matrices: Vec<MatrixShape>,
}

pub fn write_bundle<W: Write>(matrices: &[(&str, &Mat)], mut out: W) -> CliResult<()> {
    let header = BundleHeader {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        matrices: matrices
            .iter()
            .map(|(name, m)| MatrixShape {
                name: name.to_string(),
                rows: m.nrows(),
                cols: m.ncols(),
            })
            .collect(),
    };
    let line = serde_json::to_string(&header).map_err(|e| CliError::Schema(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| CliError::io("<bundle output>", e))?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    for (_, m) in matrices {
        if m.ncols() == 0 {
            continue;
        }
        for i in 0..m.nrows() {
            w.write_record(m.row(i).iter().map(|v| fmt(*v))).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::io("<bundle output>", e))?;
    Ok(())
}

pub fn read_bundle<R: Read>(input: R) -> CliResult<Vec<(String, Mat)>> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| CliError::io("<bundle input>", e))?;
    let header: BundleHeader =
        serde_json::from_str(first.trim()).map_err(|e| CliError::Schema(format!("bundle header: {e}")))?;
    if header.format != BUNDLE_FORMAT || header.version != BUNDLE_VERSION {
        return Err(CliError::Schema(format!(
            "bundle header names {} version {}, expected {BUNDLE_FORMAT} version {BUNDLE_VERSION}",
            header.format, header.version
        )));
    }
    let mut rows = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
        .into_records();
    let mut line = 1;
    let mut out = Vec::with_capacity(header.matrices.len());
    for shape in &header.matrices {
        let mut m = Mat::zeros(shape.rows, shape.cols);
        if shape.cols > 0 {
            for i in 0..shape.rows {
                line += 1;
                let row = rows
                    .next()
                    .ok_or_else(|| CliError::Schema(format!("bundle ends inside matrix {}", shape.name)))?
                    .map_err(csv_err)?;
                if row.len() != shape.cols {
                    return Err(CliError::Schema(format!(
                        "line {line}: matrix {} row {i} has {} entries, expected {}",
                        shape.name,
                        row.len(),
                        shape.cols
                    )));
                }
                for (j, cell) in row.iter().enumerate() {
                    m[(i, j)] = parse_cell(cell, line, &shape.name)?;
                }
            }
        }
        out.push((shape.name.clone(), m));
    }
    if rows.next().is_some() {
        return Err(CliError::Schema("bundle has rows beyond the declared matrices".into()));
    }
    Ok(out)
}

fn take_named(bundle: &mut Vec<(String, Mat)>, name: &str) -> CliResult<Mat> {
    let pos = bundle
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| CliError::Schema(format!("bundle lacks matrix {name}")))?;
    Ok(bundle.remove(pos).1)
}

pub fn write_system<W: Write>(sys: &SystemRealization, out: W) -> CliResult<()> {
    write_bundle(&[("A", sys.a()), ("B", sys.b()), ("C", sys.c()), ("E", sys.e())], out)
}

pub fn read_system_file(path: &Path, tol: &Tolerance) -> CliResult<SystemRealization> {
    let inner = || -> CliResult<SystemRealization> {
        let mut b = read_bundle(open(path)?)?;
        let (a, bm, c, e) = (
            take_named(&mut b, "A")?,
            take_named(&mut b, "B")?,
            take_named(&mut b, "C")?,
            take_named(&mut b, "E")?,
        );
        Ok(SystemRealization::new(a, bm, c, e, tol)?)
    };
    inner().map_err(|e| e.at(path))
}

pub fn write_uio<W: Write>(uio: &UioMatrices, out: W) -> CliResult<()> {
    write_bundle(
        &[
            ("A_uio", &uio.a_uio),
            ("B_u", &uio.b_u),
            ("B_y", &uio.b_y),
            ("D_uio", &uio.d_uio),
            ("C", &uio.c),
        ],
        out,
    )
}

pub fn read_uio_file(path: &Path) -> CliResult<UioMatrices> {
    let inner = || -> CliResult<UioMatrices> {
        let mut b = read_bundle(open(path)?)?;
        Ok(UioMatrices::new(
            take_named(&mut b, "A_uio")?,
            take_named(&mut b, "B_u")?,
            take_named(&mut b, "B_y")?,
            take_named(&mut b, "D_uio")?,
            take_named(&mut b, "C")?,
        )?)
    };
    inner().map_err(|e| e.at(path))
}

/// Whitespace-separated `k f fhat` rows (`k f_0 fhat_0 f_1 fhat_1 ...` for
/// several channels) with a `#` header line. Unknown true faults print `NaN`.
pub fn write_plot_data<W: Write>(rows: &[(usize, Vec<f64>, Vec<f64>)], mut out: W) -> CliResult<()> {
    let io = |e| CliError::io("<plot output>", e);
    let m = rows.first().map_or(1, |(_, _, fh)| fh.len());
    if m == 1 {
        writeln!(out, "# k f fhat").map_err(io)?;
    } else {
        let cols: Vec<String> = (0..m).map(|i| format!("f_{i} fhat_{i}")).collect();
        writeln!(out, "# k {}", cols.join(" ")).map_err(io)?;
    }
    for (k, f, fh) in rows {
        let mut line = k.to_string();
        for (i, fhi) in fh.iter().enumerate().take(m) {
            let fi = f.get(i).copied().unwrap_or(f64::NAN);
            line.push_str(&format!(" {} {}", fmt(fi), fmt(*fhi)));
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}
