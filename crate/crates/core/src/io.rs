//! CSV and JSON import/export for traces, sampled functions, tables and
//! Gramian matrices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dynamics::EnergyTrace;
use crate::error::{Error, Result};
use crate::lemma::SampledH;
use crate::linalg::Matrix;
use crate::rate::RateFunction;
use crate::scalar::Real;
use crate::spectral::GraphNorms;

/// Writes `t,energy,flux` rows with a header.
pub fn write_trace_csv<T: Real, W: Write>(trace: &EnergyTrace<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "energy", "flux"])?;
    for i in 0..trace.len() {
        w.serialize((trace.times[i], trace.energies[i], trace.flux[i]))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `t,energy,flux` CSV. The CSV carries no norms, so the initial
/// norms are supplied by the caller.
pub fn read_trace_csv<T: Real, R: Read>(input: R, initial_norms: GraphNorms<T>) -> Result<EnergyTrace<T>> {
    let rows: Vec<(T, T, T)> = read_rows(input)?;
    let trace = EnergyTrace {
        times: rows.iter().map(|r| r.0).collect(),
        energies: rows.iter().map(|r| r.1).collect(),
        flux: rows.iter().map(|r| r.2).collect(),
        initial_norms,
    };
    if trace.is_empty() {
        return Err(Error::Parse("trace CSV has no rows".into()));
    }
    Ok(trace)
}

/// Two-column numeric CSV with a header row.
pub fn read_pairs<T: Real, R: Read>(input: R) -> Result<(Vec<T>, Vec<T>)> {
    let rows: Vec<(T, T)> = read_rows(input)?;
    Ok(rows.into_iter().unzip())
}

fn read_rows<Row: DeserializeOwned, R: Read>(input: R) -> Result<Vec<Row>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1))))
        .collect()
}

pub fn write_pairs<T: Real, W: Write>(header: [&str; 2], xs: &[T], ys: &[T], out: W) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("column lengths differ"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for (x, y) in xs.iter().zip(ys) {
        w.serialize((x, y))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sampled_h<T: Real, W: Write>(h: &SampledH<T>, out: W) -> Result<()> {
    write_pairs(["t", "H"], h.times(), h.values(), out)
}

pub fn read_sampled_h<T: Real, R: Read>(input: R) -> Result<SampledH<T>> {
    let (t, v) = read_pairs(input)?;
    SampledH::new(t, v)
}

/// Tabulated rate from `x,G` rows.
pub fn read_rate_table<T: Real, R: Read>(input: R) -> Result<RateFunction<T>> {
    let (x, g) = read_pairs(input)?;
    RateFunction::tabulated(x, g)
}

/// Plot data: `t,E,bound` rows.
pub fn write_plot_csv<T: Real, W: Write>(times: &[T], energies: &[T], bound: &[T], out: W) -> Result<()> {
    if times.len() != energies.len() || times.len() != bound.len() {
        return Err(Error::invalid("plot columns have different lengths"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "E", "bound"])?;
    for i in 0..times.len() {
        w.serialize((times[i], energies[i], bound[i]))?;
    }
    w.flush()?;
    Ok(())
}

/// Dense matrix as headerless CSV, one row per line.
pub fn write_matrix_csv<T: Real, W: Write>(m: &Matrix<T>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..m.rows() {
        w.serialize(m.row(i))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<T: Real, R: Read>(input: R) -> Result<Matrix<T>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let rows: Vec<Vec<T>> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    Matrix::from_rows(rows)
}

pub fn write_json<V: Serialize, W: Write>(value: &V, out: W) -> Result<()> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<V: DeserializeOwned, R: Read>(input: R) -> Result<V> {
    Ok(serde_json::from_reader(input)?)
}

pub fn create(path: impl AsRef<Path>) -> Result<BufWriter<File>> {
    let path = path.as_ref();
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn open(path: impl AsRef<Path>) -> Result<BufReader<File>> {
    let path = path.as_ref();
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
