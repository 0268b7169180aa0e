use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// A 2D hand keypoint detection in one view.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointObservation {
    pub view: usize,
    pub joint: usize,
    pub uv: Vec2,
    pub confidence: f64,
}

#[derive(Serialize, Deserialize)]
struct Record {
    view: i64,
    joint: i64,
    uv: [f64; 2],
    conf: f64,
}

pub fn parse_keypoints(text: &str, path: &Path) -> Result<Vec<KeypointObservation>> {
    let recs: Vec<Record> = serde_json::from_str(text).map_err(|e| Error::parse(path, e))?;
    recs.into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.view < 0 || r.joint < 0 {
                return Err(Error::parse(path, format!("entry {i}: negative view or joint")));
            }
            if !(0.0..=1.0).contains(&r.conf) {
                return Err(Error::parse(path, format!("entry {i}: confidence {} outside [0,1]", r.conf)));
            }
            if !r.uv.iter().all(|x| x.is_finite()) {
                return Err(Error::parse(path, format!("entry {i}: non-finite uv")));
            }
            Ok(KeypointObservation {
                view: r.view as usize,
                joint: r.joint as usize,
                uv: Vec2::new(r.uv[0], r.uv[1]),
                confidence: r.conf,
            })
        })
        .collect()
}

pub fn load_keypoints(path: &Path) -> Result<Vec<KeypointObservation>> {
    let text = super::read_string(path)?;
    parse_keypoints(&text, path)
}

pub fn save_keypoints(path: &Path, obs: &[KeypointObservation]) -> Result<()> {
    let recs: Vec<Record> = obs
        .iter()
        .map(|o| Record {
            view: o.view as i64,
            joint: o.joint as i64,
            uv: [o.uv.x, o.uv.y],
            conf: o.confidence,
        })
        .collect();
    super::write_json(path, &recs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_out_of_range_rejected() {
        let t = r#"[{"view":0,"joint":1,"uv":[1.0,2.0],"conf":1.5}]"#;
        assert!(parse_keypoints(t, Path::new("k.json")).is_err());
    }

    #[test]
    fn round_trip() {
        let obs = vec![KeypointObservation {
            view: 2,
            joint: 7,
            uv: Vec2::new(0.1 + 0.2, 511.999999999),
            confidence: 0.61,
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.json");
        save_keypoints(&p, &obs).unwrap();
        assert_eq!(load_keypoints(&p).unwrap(), obs);
    }
}
