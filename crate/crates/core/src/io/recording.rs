use std::fmt::Write;

use nalgebra::DMatrix;

use super::{parse_floats, records, IoError};
use crate::segment::Recording;

/// Parses the recording format:
///
/// ```text
/// D=2,shoulder,elbow
/// 0.00,0.1,0.2
/// 0.01,0.1,0.21
/// ```
///
/// Each record holds `t` and `D` positions, optionally followed by `D`
/// velocities (all records must agree). Blank lines and `#` comments are
/// skipped.
pub fn parse_recording(text: &str) -> Result<Recording, IoError> {
    let mut lines = records(text);
    let (header_line, header) = lines.next().ok_or_else(|| IoError::Invalid("empty recording".into()))?;
    let n_dof = header[0]
        .strip_prefix("D=")
        .and_then(|d| d.trim().parse::<usize>().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| IoError::parse(header_line, "header must start with `D=<n>`"))?;
    let names: Vec<String> = header[1..].iter().map(|s| s.to_string()).collect();
    if names.len() != n_dof || names.iter().any(String::is_empty) {
        return Err(IoError::parse(
            header_line,
            format!("header declares D={n_dof} but names {} joints", names.len()),
        ));
    }
    let mut width = None;
    let mut t = Vec::new();
    let mut data = Vec::new();
    for (line_no, fields) in lines {
        let w = fields.len();
        if w != 1 + n_dof && w != 1 + 2 * n_dof {
            return Err(IoError::parse(
                line_no,
                format!("expected {} or {} fields, found {w}", 1 + n_dof, 1 + 2 * n_dof),
            ));
        }
        if *width.get_or_insert(w) != w {
            return Err(IoError::parse(line_no, "records mix rows with and without velocities"));
        }
        let values = parse_floats(line_no, &fields)?;
        t.push(values[0]);
        data.extend_from_slice(&values[1..]);
    }
    let w = width.unwrap_or(1 + n_dof);
    let rows = DMatrix::from_row_slice(t.len(), w - 1, &data);
    let positions = rows.columns(0, n_dof).into_owned();
    let velocities = (w == 1 + 2 * n_dof).then(|| rows.columns(n_dof, n_dof).into_owned());
    Ok(Recording::new(names, t, positions, velocities)?)
}

/// Writes a recording; velocities are included when `with_velocities`.
pub fn write_recording(rec: &Recording, with_velocities: bool) -> String {
    let mut out = String::new();
    out.push_str(&format!("D={}", rec.n_dof()));
    for name in rec.joint_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let (pos, vel) = (rec.positions(), rec.velocities());
    for (i, t) in rec.timestamps().iter().enumerate() {
        write!(out, "{t}").unwrap();
        for j in 0..rec.n_dof() {
            write!(out, ",{}", pos[(i, j)]).unwrap();
        }
        if with_velocities {
            for j in 0..rec.n_dof() {
                write!(out, ",{}", vel[(i, j)]).unwrap();
            }
        }
        out.push('\n');
    }
    out
}
