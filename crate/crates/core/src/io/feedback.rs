use super::{records, IoError};
use crate::refine::FeedbackRecord;

/// Parses `trajectory_id,reward` lines; an optional `trajectory_id,reward`
/// header is skipped. Rewards must be one of the five admissible values and
/// ids must be unique.
pub fn parse_feedback(text: &str) -> Result<Vec<FeedbackRecord>, IoError> {
    let mut out: Vec<FeedbackRecord> = Vec::new();
    for (line_no, fields) in records(text) {
        if fields == ["trajectory_id", "reward"] && out.is_empty() {
            continue;
        }
        let [id, reward] = fields.as_slice() else {
            return Err(IoError::parse(line_no, format!("expected 2 fields, found {}", fields.len())));
        };
        if id.is_empty() {
            return Err(IoError::parse(line_no, "empty trajectory id"));
        }
        let reward: f64 = reward
            .parse()
            .map_err(|_| IoError::parse(line_no, format!("`{reward}` is not a number")))?;
        let record = FeedbackRecord::new(*id, reward).map_err(|e| IoError::parse(line_no, e.to_string()))?;
        if out.iter().any(|r| r.trajectory_id == record.trajectory_id) {
            return Err(IoError::parse(line_no, format!("duplicate trajectory id `{id}`")));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_feedback(records: &[FeedbackRecord]) -> String {
    let mut out = String::from("trajectory_id,reward\n");
    for r in records {
        out.push_str(&format!("{},{}\n", r.trajectory_id, r.reward));
    }
    out
}
