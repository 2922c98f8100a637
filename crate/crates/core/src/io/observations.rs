use nalgebra::Vector3;

use super::{parse_floats, records, IoError};
use crate::tracker::Observation;

const HEADER: [&str; 6] = ["stamp", "source_id", "x", "y", "z", "noise_std"];

/// Parses `stamp,source_id,x,y,z,noise_std` lines (header optional).
pub fn parse_observations(text: &str) -> Result<Vec<Observation>, IoError> {
    let mut out = Vec::new();
    for (line_no, fields) in records(text) {
        if fields == HEADER && out.is_empty() {
            continue;
        }
        if fields.len() != 6 {
            return Err(IoError::parse(line_no, format!("expected 6 fields, found {}", fields.len())));
        }
        let source_id: u32 = fields[1]
            .parse()
            .map_err(|_| IoError::parse(line_no, format!("`{}` is not a source id", fields[1])))?;
        let mut values = parse_floats(line_no, &[fields[0], fields[2], fields[3], fields[4], fields[5]])?;
        let noise_std = values.pop().unwrap_or_default();
        let obs = Observation {
            position: Vector3::new(values[1], values[2], values[3]),
            noise_std,
            source_id,
            stamp: values[0],
        };
        obs.validate().map_err(|e| IoError::parse(line_no, e.to_string()))?;
        out.push(obs);
    }
    Ok(out)
}

pub fn write_observations(obs: &[Observation]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for o in obs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            o.stamp, o.source_id, o.position.x, o.position.y, o.position.z, o.noise_std
        ));
    }
    out
}
