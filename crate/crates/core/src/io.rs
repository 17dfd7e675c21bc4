//! CSV formats for points, control nets and convergence traces.
//!
//! Point files carry a header naming their columns: data coordinates
//! `x[,y[,z]]` followed by optional parameters `u[,v[,w]]`. Values are
//! written with 17 significant digits so that files round-trip exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::basis::{BasisSpace, ParamPoint};
use crate::error::{Error, Result};
use crate::fitting::DataSet;
use crate::points::PointMatrix;
use crate::solver::TraceRecord;

const DATA_COLUMNS: [&str; 3] = ["x", "y", "z"];
const PARAM_COLUMNS: [&str; 3] = ["u", "v", "w"];

/// Contents of a point file; parameters are present when the header names them.
#[derive(Clone, Debug, PartialEq)]
pub struct PointFile {
    pub points: PointMatrix,
    pub params: Option<Vec<ParamPoint>>,
}

impl PointFile {
    pub fn into_dataset(self) -> Result<DataSet> {
        let params = self.params.ok_or_else(|| Error::Config("point file has no parameter columns".into()))?;
        DataSet::new(self.points, params)
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            Error::Parse { line, message: format!("expected {expected_len} columns, found {len}") }
        }
        _ => Error::Parse { line, message: e.to_string() },
    }
}

/// Splits a header into `(data columns, parameter columns)` positions.
fn classify_header(header: &csv::StringRecord) -> Result<(usize, usize)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let n_data = names.iter().take_while(|n| DATA_COLUMNS.contains(n)).count();
    let rest = &names[n_data..];
    if n_data == 0 || names[..n_data] != DATA_COLUMNS[..n_data] {
        return Err(Error::Parse { line: 1, message: format!("header must start with x[,y[,z]], got {names:?}") });
    }
    if rest.len() > 3 || rest != &PARAM_COLUMNS[..rest.len()] {
        return Err(Error::Parse { line: 1, message: format!("parameter columns must be u[,v[,w]], got {rest:?}") });
    }
    Ok((n_data, rest.len()))
}

pub fn read_points<R: Read>(reader: R) -> Result<PointFile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let header = rdr.headers().map_err(parse_error)?.clone();
    if header.is_empty() {
        return Err(Error::Parse { line: 1, message: "empty file".into() });
    }
    let (n_data, n_params) = classify_header(&header)?;
    let mut data = Vec::new();
    let mut params = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(parse_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let values = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("`{f}`: {e}") }))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse { line, message: format!("non-finite value {bad}") });
        }
        data.extend_from_slice(&values[..n_data]);
        if n_params > 0 {
            params.push(ParamPoint::new(&values[n_data..])?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse { line: 1, message: "no data rows".into() });
    }
    Ok(PointFile { points: PointMatrix::new(rows, n_data, data)?, params: (n_params > 0).then_some(params) })
}

pub fn load_points(path: &Path) -> Result<PointFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_points(std::io::BufReader::new(file))
}

pub fn write_points<W: Write>(mut w: W, points: &PointMatrix, params: Option<&[ParamPoint]>) -> Result<()> {
    if points.dim() == 0 || points.dim() > 3 {
        return Err(Error::Shape(format!("point files hold 1-3 coordinates, got {}", points.dim())));
    }
    let pdim = params.and_then(|p| p.first()).map_or(0, ParamPoint::dim);
    let mut header: Vec<&str> = DATA_COLUMNS[..points.dim()].to_vec();
    header.extend_from_slice(&PARAM_COLUMNS[..pdim]);
    writeln!(w, "{}", header.join(","))?;
    for (j, row) in points.iter_rows().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        if let Some(p) = params {
            fields.extend(p[j].coords().iter().map(|&v| fmt_f64(v)));
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn write_dataset<W: Write>(w: W, data: &DataSet) -> Result<()> {
    write_points(w, data.points(), Some(data.params()))
}

/// Control net: flat index, per-direction indices, coordinates.
pub fn write_controls<W: Write>(mut w: W, space: &BasisSpace, controls: &PointMatrix) -> Result<()> {
    if controls.rows() != space.len() {
        return Err(Error::Shape(format!("{} controls for {} basis functions", controls.rows(), space.len())));
    }
    if controls.dim() == 0 || controls.dim() > 3 {
        return Err(Error::Shape(format!("control files hold 1-3 coordinates, got {}", controls.dim())));
    }
    let idx_names = ["iu", "iv", "iw"];
    let mut header = vec!["i"];
    header.extend_from_slice(&idx_names[..space.dim()]);
    header.extend_from_slice(&DATA_COLUMNS[..controls.dim()]);
    writeln!(w, "{}", header.join(","))?;
    for i in 0..controls.rows() {
        let mut fields = vec![i.to_string()];
        fields.extend(space.unflatten_index(i)?.iter().map(usize::to_string));
        fields.extend(controls.row(i).iter().map(|&v| fmt_f64(v)));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Reads a control net written by [`write_controls`]; rows are placed by
/// their flat index.
pub fn read_controls<R: Read>(reader: R) -> Result<PointMatrix> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(parse_error)?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.first() != Some(&"i") {
        return Err(Error::Parse { line: 1, message: "control file header must start with `i`".into() });
    }
    let first_coord = names
        .iter()
        .position(|n| *n == "x")
        .ok_or_else(|| Error::Parse { line: 1, message: "control file has no coordinate columns".into() })?;
    let dim = names.len() - first_coord;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(parse_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let i: usize = record[0].parse().map_err(|e| Error::Parse { line, message: format!("index: {e}") })?;
        let coords = record
            .iter()
            .skip(first_coord)
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("`{f}`: {e}") }))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((i, coords));
    }
    let n = rows.len();
    let mut out = PointMatrix::zeros(n, dim);
    let mut seen = vec![false; n];
    for (i, coords) in rows {
        if i >= n || seen[i] {
            return Err(Error::Parse { line: 0, message: format!("control index {i} repeated or out of range") });
        }
        seen[i] = true;
        out.row_mut(i).copy_from_slice(&coords);
    }
    Ok(out)
}

pub fn write_trace<W: Write>(mut w: W, trace: &[TraceRecord]) -> Result<()> {
    writeln!(w, "iter,residual_norm,delta_norm,wall_ms")?;
    for r in trace {
        writeln!(w, "{},{},{},{:.3}", r.iteration, fmt_f64(r.residual_norm), fmt_f64(r.delta_norm), r.wall_ms)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::evaluate_form;
    use proptest::prelude::*;

    #[test]
    fn points_without_params() {
        let f = read_points("x,y,z\n1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert_eq!(f.points.rows(), 2);
        assert_eq!(f.points.dim(), 3);
        assert!(f.params.is_none());
        assert!(f.into_dataset().is_err());
    }

    #[test]
    fn volumetric_points_with_params() {
        let f = read_points("x,y,z,u,v,w\n1,2,3,0.1,0.2,0.3\n".as_bytes()).unwrap();
        let p = f.params.as_ref().unwrap();
        assert_eq!(p[0].coords(), &[0.1, 0.2, 0.3]);
        assert_eq!(f.into_dataset().unwrap().len(), 1);
    }

    #[test]
    fn malformed_input_reports_line() {
        assert!(matches!(read_points("".as_bytes()), Err(Error::Parse { .. })));
        assert!(matches!(read_points("x,y\n".as_bytes()), Err(Error::Parse { .. })));
        let err = read_points("x,y\n1,2\n3,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = read_points("x,y,u\n1,2,0.5\n3,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        assert!(matches!(read_points("x,q\n1,2\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_points("x,v\n1,2\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn trace_format() {
        let t = [TraceRecord { iteration: 0, residual_norm: 1.5, delta_norm: 0.0, wall_ms: 0.0 }];
        let mut buf = Vec::new();
        write_trace(&mut buf, &t).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "iter,residual_norm,delta_norm,wall_ms\n0,1.5000000000000000e0,0.0000000000000000e0,0.000\n");
    }

    proptest! {
        #[test]
        fn controls_round_trip_preserves_evaluation(
            coords in prop::collection::vec(-1e3f64..1e3, 3 * 16),
            u in 0.0f64..=1.0,
            v in 0.0f64..=1.0,
        ) {
            let space = BasisSpace::clamped_uniform(&[2, 3], &[4, 4]).unwrap();
            let p = PointMatrix::new(16, 3, coords).unwrap();
            let mut buf = Vec::new();
            write_controls(&mut buf, &space, &p).unwrap();
            let back = read_controls(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &p);
            let t = ParamPoint::uv(u, v);
            let a = evaluate_form(&space, &p, &t).unwrap();
            let b = evaluate_form(&space, &back, &t).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn points_round_trip_exactly(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 2 * 5)) {
            let p = PointMatrix::new(5, 2, values).unwrap();
            let params: Vec<ParamPoint> = (0..5).map(|j| ParamPoint::u(j as f64 / 4.0)).collect();
            let mut buf = Vec::new();
            write_points(&mut buf, &p, Some(&params)).unwrap();
            let back = read_points(buf.as_slice()).unwrap();
            prop_assert_eq!(back.points, p);
            prop_assert_eq!(back.params.unwrap(), params);
        }
    }
}
