use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{from_json, IoError};
use crate::promp::{BasisConfig, PrimitiveParams};

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    schema_version: u32,
    basis: BasisDoc,
    mu_w: Vec<f64>,
    sigma_w_rowmajor: Vec<f64>,
    sigma_y_rowmajor: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisDoc {
    #[serde(rename = "K")]
    n_basis: usize,
    #[serde(rename = "h")]
    bandwidth: f64,
    centers: Vec<f64>,
    phase_duration: f64,
    #[serde(rename = "D")]
    n_dof: usize,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Serializes parameters as
/// `{schema_version, basis: {K, h, centers, phase_duration, D}, mu_w,
/// sigma_w_rowmajor, sigma_y_rowmajor}`.
pub fn params_to_json(p: &PrimitiveParams) -> String {
    let doc = ParamsDoc {
        schema_version: PARAMS_SCHEMA_VERSION,
        basis: BasisDoc {
            n_basis: p.basis.n_basis(),
            bandwidth: p.basis.bandwidth,
            centers: p.basis.centers.clone(),
            phase_duration: p.basis.phase_duration,
            n_dof: p.basis.n_dof,
        },
        mu_w: p.mu_w.as_slice().to_vec(),
        sigma_w_rowmajor: row_major(&p.sigma_w),
        sigma_y_rowmajor: row_major(&p.sigma_y),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("plain data serializes");
    out.push('\n');
    out
}

pub fn params_from_json(text: &str) -> Result<PrimitiveParams, IoError> {
    let doc: ParamsDoc = from_json(text)?;
    if doc.schema_version != PARAMS_SCHEMA_VERSION {
        return Err(IoError::Json {
            path: "schema_version".into(),
            message: format!("unsupported version {}", doc.schema_version),
        });
    }
    if doc.basis.centers.len() != doc.basis.n_basis {
        return Err(IoError::Json {
            path: "basis.centers".into(),
            message: format!("{} centers for K = {}", doc.basis.centers.len(), doc.basis.n_basis),
        });
    }
    let n = doc.basis.n_basis * doc.basis.n_dof;
    let d = doc.basis.n_dof;
    let check = |field: &str, len: usize, expected: usize| {
        if len == expected {
            Ok(())
        } else {
            Err(IoError::Json {
                path: field.into(),
                message: format!("expected {expected} values, found {len}"),
            })
        }
    };
    check("mu_w", doc.mu_w.len(), n)?;
    check("sigma_w_rowmajor", doc.sigma_w_rowmajor.len(), n * n)?;
    check("sigma_y_rowmajor", doc.sigma_y_rowmajor.len(), d * d)?;
    let basis = BasisConfig::new(doc.basis.centers, doc.basis.bandwidth, d, doc.basis.phase_duration)?;
    Ok(PrimitiveParams::new(
        basis,
        DVector::from_vec(doc.mu_w),
        DMatrix::from_row_slice(n, n, &doc.sigma_w_rowmajor),
        DMatrix::from_row_slice(d, d, &doc.sigma_y_rowmajor),
    )?)
}
