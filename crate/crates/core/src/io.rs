//! Binary and CSV containers for measurements, operators and solver traces.
//!
//! Binary layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `CPRB` |
//! | 4     | version (`u32`, currently 1) |
//! | 4     | tag (`u32`): 0 vector, 1 modal operator, 2 zonal operator, 3 measurements |
//! | 8     | rows (`u64`) |
//! | 8     | cols (`u64`) |
//! | 8     | scale (`f64`, normalization factor; 1 when unused) |
//! | 16 n  | payload: `re, im` pairs of `f64`, column-major |

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::admm::SolveTrace;
use crate::baselines::ApRecord;
use crate::copr::{CoprResult, OuterRecord};
use crate::forward_model::{Form, Measurements, PropagationMatrix};
use crate::lifted::BlockLifted;
use crate::{CoefficientVector, CoprError, Result, C64};

pub const MAGIC: &[u8; 4] = b"CPRB";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerTag {
    Vector = 0,
    ModalOperator = 1,
    ZonalOperator = 2,
    Measurements = 3,
}

impl ContainerTag {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            0 => Some(Self::Vector),
            1 => Some(Self::ModalOperator),
            2 => Some(Self::ZonalOperator),
            3 => Some(Self::Measurements),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub tag: ContainerTag,
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
    /// Column-major entries.
    pub data: Vec<C64>,
}

impl Container {
    pub fn from_vector(v: &CoefficientVector) -> Self {
        Self {
            tag: ContainerTag::Vector,
            rows: v.len(),
            cols: 1,
            scale: 1.0,
            data: v.as_slice().to_vec(),
        }
    }

    pub fn from_measurements(y: &Measurements) -> Self {
        Self {
            tag: ContainerTag::Measurements,
            rows: y.len(),
            cols: 1,
            scale: y.scale,
            data: y.y.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }

    /// Materializes the operator; zonal operators become dense here.
    pub fn from_operator(u: &PropagationMatrix) -> Self {
        let dense = u.to_dense();
        let tag = match u.form() {
            Form::Modal => ContainerTag::ModalOperator,
            Form::Zonal => ContainerTag::ZonalOperator,
        };
        Self {
            tag,
            rows: dense.nrows(),
            cols: dense.ncols(),
            scale: 1.0,
            data: dense.as_slice().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.data)
    }

    pub fn to_vector(&self) -> Result<CoefficientVector> {
        if self.cols != 1 {
            return Err(CoprError::invalid(format!(
                "expected a column, got {} columns",
                self.cols
            )));
        }
        Ok(DVector::from_column_slice(&self.data))
    }

    /// Real parts as normalized measurements; imaginary parts must vanish.
    pub fn to_measurements(&self) -> Result<Measurements> {
        let v = self.to_vector()?;
        if v.iter().any(|z| z.im != 0.0) {
            return Err(CoprError::invalid(
                "measurement container has imaginary parts",
            ));
        }
        Measurements::from_normalized(v.map(|z| z.re), self.scale)
    }

    pub fn to_operator(&self) -> PropagationMatrix {
        PropagationMatrix::from_dense(self.to_matrix())
    }
}

pub fn write_container<W: Write>(mut w: W, c: &Container) -> Result<()> {
    if c.data.len() != c.rows * c.cols {
        return Err(CoprError::DimensionMismatch {
            what: "container payload",
            expected: c.rows * c.cols,
            got: c.data.len(),
        });
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(c.tag as u32).to_le_bytes())?;
    w.write_all(&(c.rows as u64).to_le_bytes())?;
    w.write_all(&(c.cols as u64).to_le_bytes())?;
    w.write_all(&c.scale.to_le_bytes())?;
    for z in &c.data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn parse_err(offset: usize, message: impl Into<String>) -> CoprError {
    CoprError::Parse {
        offset,
        message: message.into(),
    }
}

fn take<'a>(buf: &'a [u8], at: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| {
            parse_err(
                *at,
                format!(
                    "truncated {what}: need {n} bytes, {} left",
                    buf.len().saturating_sub(*at)
                ),
            )
        })?;
    let out = &buf[*at..end];
    *at = end;
    Ok(out)
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8 bytes"))
}

fn le_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().expect("8 bytes"))
}

/// Parses a container; errors carry the byte offset of the offending field.
pub fn parse_container(buf: &[u8]) -> Result<Container> {
    let mut at = 0;
    if take(buf, &mut at, 4, "magic")? != MAGIC {
        return Err(parse_err(0, "bad magic, expected CPRB"));
    }
    let version = le_u32(take(buf, &mut at, 4, "version")?);
    if version != VERSION {
        return Err(parse_err(4, format!("unsupported version {version}")));
    }
    let raw_tag = le_u32(take(buf, &mut at, 4, "tag")?);
    let tag = ContainerTag::from_u32(raw_tag)
        .ok_or_else(|| parse_err(8, format!("unknown tag {raw_tag}")))?;
    let rows = le_u64(take(buf, &mut at, 8, "rows")?);
    let cols = le_u64(take(buf, &mut at, 8, "cols")?);
    let scale = le_f64(take(buf, &mut at, 8, "scale")?);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(parse_err(
            28,
            format!("scale must be positive and finite, got {scale}"),
        ));
    }
    debug_assert_eq!(at, HEADER_LEN);
    let n = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .filter(|n| n.checked_mul(16).is_some())
        .ok_or_else(|| parse_err(12, format!("dimensions {rows}x{cols} overflow")))?;
    let expected = HEADER_LEN + 16 * n;
    if buf.len() < expected {
        return Err(parse_err(
            buf.len(),
            format!(
                "truncated payload: expected {expected} bytes, got {}",
                buf.len()
            ),
        ));
    }
    if buf.len() > expected {
        return Err(parse_err(
            expected,
            format!("{} trailing bytes", buf.len() - expected),
        ));
    }
    let data = buf[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| C64::new(le_f64(&c[..8]), le_f64(&c[8..])))
        .collect();
    Ok(Container {
        tag,
        rows: rows as usize,
        cols: cols as usize,
        scale,
        data,
    })
}

pub fn read_container<R: Read>(mut r: R) -> Result<Container> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    parse_container(&buf)
}

fn csv_err(e: csv::Error) -> CoprError {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CoprError::Io(io),
        kind => parse_err(offset, format!("{kind:?}")),
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

#[derive(Serialize, Deserialize)]
struct MeasurementRow {
    i: usize,
    y: f64,
}

/// `i,y` rows. The normalization scale is not part of the CSV form.
pub fn write_measurements_csv<W: Write>(w: W, y: &Measurements) -> Result<()> {
    let mut wr = writer(w);
    for (i, &v) in y.y.iter().enumerate() {
        wr.serialize(MeasurementRow { i, y: v }).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads `i,y` rows (header required, indices must run 0, 1, ...).
pub fn read_measurements_csv<R: Read>(r: R, scale: f64) -> Result<Measurements> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize::<MeasurementRow>() {
        let row = rec.map_err(csv_err)?;
        if row.i != out.len() {
            return Err(parse_err(
                0,
                format!(
                    "row index {} out of sequence, expected {}",
                    row.i,
                    out.len()
                ),
            ));
        }
        out.push(row.y);
    }
    if out.is_empty() {
        return Err(parse_err(0, "no measurement rows"));
    }
    Measurements::from_normalized(DVector::from_vec(out), scale)
}

/// `row,col,re,im` for every entry.
pub fn write_matrix_csv<W: Write>(w: W, m: &DMatrix<C64>) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["row", "col", "re", "im"])
        .map_err(csv_err)?;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let z = m[(r, c)];
            wr.write_record(&[
                r.to_string(),
                c.to_string(),
                z.re.to_string(),
                z.im.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Real `m x m` map as `m` lines of `m` values.
pub fn write_real_grid_csv<W: Write>(w: W, m: &DMatrix<f64>) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for r in 0..m.nrows() {
        wr.write_record(m.row(r).iter().map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// `i,c,re_t,im_t` per 2x2 block of the lifted matrix.
pub fn write_blocks_csv<W: Write>(w: W, m: &BlockLifted) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["i", "c", "re_t", "im_t"])
        .map_err(csv_err)?;
    for i in 0..m.n_y() {
        let t = m.t[i];
        wr.write_record(&[
            i.to_string(),
            m.c[i].to_string(),
            t.re.to_string(),
            t.im.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

const TRACE_HEADER: [&str; 6] = [
    "iter",
    "nuclear_norm",
    "primal_res",
    "dual_res",
    "rho",
    "ms",
];

pub fn write_trace_csv<W: Write>(w: W, trace: &SolveTrace) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in &trace.records {
        wr.write_record(&[
            r.iter.to_string(),
            r.nuclear_norm.to_string(),
            r.primal_res.to_string(),
            r.dual_res.to_string(),
            r.rho.to_string(),
            r.ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Alternating-projection trace in the ADMM trace schema. The nuclear-norm
/// column holds `||M(U, a, -a, y)||_* = misfit + n_y`; columns without a
/// counterpart are left empty.
pub fn write_ap_trace_csv<W: Write>(w: W, trace: &[ApRecord], n_y: usize) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace {
        wr.write_record(&[
            r.iter.to_string(),
            (r.misfit + n_y as f64).to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// JSON shape of a [`CoprResult`]; complex entries are `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub a: Vec<[f64; 2]>,
    pub converged: bool,
    pub stopped: bool,
    pub total_inner: usize,
    pub outer_trace: Vec<OuterRecord>,
}

impl From<&CoprResult> for ResultJson {
    fn from(r: &CoprResult) -> Self {
        Self {
            a: r.a.iter().map(|z| [z.re, z.im]).collect(),
            converged: r.converged,
            stopped: r.stopped,
            total_inner: r.total_inner,
            outer_trace: r.outer_trace.clone(),
        }
    }
}

impl ResultJson {
    pub fn coefficients(&self) -> CoefficientVector {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|p| C64::new(p[0], p[1])))
    }
}

pub fn write_result_json<W: Write>(w: W, r: &CoprResult) -> Result<()> {
    serde_json::to_writer_pretty(w, &ResultJson::from(r)).map_err(|e| CoprError::Io(e.into()))
}
