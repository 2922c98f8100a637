use nalgebra::{DVector, Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{from_json, IoError};
use crate::kinematics::{Joint, JointKind, KinematicChain, Limits};

/// A chain plus optional per-stroke IK offset limits.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile {
    pub chain: KinematicChain,
    pub limits: Option<Limits>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainDoc {
    joints: Vec<JointDoc>,
    #[serde(default)]
    tool: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    limits: Option<LimitsDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    kind: KindDoc,
    axis: [f64; 3],
    fixed_transform: TransformDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindDoc {
    Prismatic,
    Revolute,
}

/// Translation in meters, rotation as roll/pitch/yaw in radians.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformDoc {
    #[serde(default)]
    translation: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitsDoc {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

pub fn chain_to_json(chain: &KinematicChain, limits: Option<&Limits>) -> String {
    let joints = chain
        .joints()
        .iter()
        .map(|j| {
            let (r, p, y) = j.origin.rotation.euler_angles();
            JointDoc {
                kind: match j.kind {
                    JointKind::Prismatic => KindDoc::Prismatic,
                    JointKind::Revolute => KindDoc::Revolute,
                },
                axis: j.axis.into(),
                fixed_transform: TransformDoc {
                    translation: j.origin.translation.vector.into(),
                    rpy: [r, p, y],
                },
            }
        })
        .collect();
    let doc = ChainDoc {
        joints,
        tool: (*chain.tool()).into(),
        limits: limits.map(|l| LimitsDoc {
            lower: l.lower().as_slice().to_vec(),
            upper: l.upper().as_slice().to_vec(),
        }),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("plain data serializes");
    out.push('\n');
    out
}

pub fn chain_from_json(text: &str) -> Result<ChainFile, IoError> {
    let doc: ChainDoc = from_json(text)?;
    let joints = doc
        .joints
        .into_iter()
        .map(|j| {
            let [r, p, y] = j.fixed_transform.rpy;
            let origin = Isometry3::from_parts(
                Translation3::from(Vector3::from(j.fixed_transform.translation)),
                UnitQuaternion::from_euler_angles(r, p, y),
            );
            let kind = match j.kind {
                KindDoc::Prismatic => JointKind::Prismatic,
                KindDoc::Revolute => JointKind::Revolute,
            };
            Joint::new(kind, Vector3::from(j.axis), origin)
        })
        .collect();
    let chain = KinematicChain::new(joints, Vector3::from(doc.tool))?;
    let limits = match doc.limits {
        None => None,
        Some(l) => {
            if l.lower.len() != chain.dof() {
                return Err(IoError::Json {
                    path: "limits.lower".into(),
                    message: format!("expected {} values, found {}", chain.dof(), l.lower.len()),
                });
            }
            Some(Limits::new(DVector::from_vec(l.lower), DVector::from_vec(l.upper))?)
        }
    };
    Ok(ChainFile { chain, limits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn built_in_chain_round_trips() {
        let chain = KinematicChain::wheelchair_arm();
        let limits = Limits::symmetric(-0.5, 0.5, chain.arm_dof(), 0.4).unwrap();
        let file = chain_from_json(&chain_to_json(&chain, Some(&limits))).unwrap();
        assert_eq!(file.chain, chain);
        assert_eq!(file.limits, Some(limits));
    }

    #[test]
    fn rotated_origin_round_trips_through_rpy() {
        let origin = Isometry3::from_parts(
            Translation3::new(0.1, 0.2, 0.3),
            UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
        );
        let chain = KinematicChain::new(
            vec![
                Joint::new(JointKind::Prismatic, Vector3::y(), Isometry3::identity()),
                Joint::new(JointKind::Revolute, Vector3::z(), origin),
            ],
            Vector3::new(0.0, 0.0, 0.4),
        )
        .unwrap();
        let back = chain_from_json(&chain_to_json(&chain, None)).unwrap().chain;
        let q = DVector::from_vec(vec![0.7]);
        assert!((back.forward(0.2, &q).unwrap() - chain.forward(0.2, &q).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn first_joint_must_be_prismatic() {
        let text = r#"{"joints":[
            {"kind":"revolute","axis":[0,0,1],"fixed_transform":{}},
            {"kind":"revolute","axis":[0,0,1],"fixed_transform":{}}]}"#;
        assert!(matches!(chain_from_json(text), Err(IoError::Kinematics(_))));
    }

    #[test]
    fn unknown_kind_reports_path() {
        let text = r#"{"joints":[{"kind":"ball","axis":[0,0,1],"fixed_transform":{}}]}"#;
        match chain_from_json(text) {
            Err(IoError::Json { path, .. }) => assert_eq!(path, "joints[0].kind"),
            other => panic!("{other:?}"),
        }
    }
}
