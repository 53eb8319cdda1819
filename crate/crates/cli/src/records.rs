//! JSON Lines records for detections and ground truths.
//!
//! One object per line. Detections carry
//! `{image_id, class_id, score, box, sigma}`, ground truths
//! `{image_id, class_id, box}`. Boxes are `[cx, cy, w, h]` in normalized
//! coordinates. Blank lines are skipped; unknown keys are rejected.

use gaussbox::{BBox, GaussPred4};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: field `{field}`: {message}")]
pub struct RecordError {
    /// 1-based line number in the input.
    pub line: usize,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class_id: u32,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub sigma: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub class_id: u32,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

impl DetectionRecord {
    pub fn to_bbox(&self) -> BBox {
        BBox::from_array(self.bbox).expect("validated at parse time")
    }

    pub fn to_gaussian(&self) -> GaussPred4 {
        GaussPred4::from_sigma(self.bbox, self.sigma).expect("validated at parse time")
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain record serializes")
    }
}

impl GroundTruthRecord {
    pub fn to_bbox(&self) -> BBox {
        BBox::from_array(self.bbox).expect("validated at parse time")
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain record serializes")
    }
}

struct Line<'a> {
    number: usize,
    obj: Map<String, Value>,
    allowed: &'a [&'static str],
}

impl Line<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> RecordError {
        RecordError {
            line: self.number,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn get(&self, field: &'static str) -> Result<&Value, RecordError> {
        self.obj.get(field).ok_or_else(|| self.err(field, "missing"))
    }

    fn check_keys(&self) -> Result<(), RecordError> {
        match self.obj.keys().find(|k| !self.allowed.contains(&k.as_str())) {
            Some(k) => Err(self.err(k, "unknown field")),
            None => Ok(()),
        }
    }

    fn image_id(&self) -> Result<String, RecordError> {
        match self.get("image_id")? {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(self.err("image_id", "expected a string")),
        }
    }

    fn class_id(&self) -> Result<u32, RecordError> {
        self.get("class_id")?
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| self.err("class_id", "expected a non-negative integer"))
    }

    fn number(&self, field: &'static str, v: &Value) -> Result<f64, RecordError> {
        v.as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.err(field, "expected a finite number"))
    }

    fn quad(&self, field: &'static str) -> Result<[f64; 4], RecordError> {
        let arr = self
            .get(field)?
            .as_array()
            .filter(|a| a.len() == 4)
            .ok_or_else(|| self.err(field, "expected an array of 4 numbers"))?;
        let mut out = [0.0; 4];
        for (o, v) in out.iter_mut().zip(arr) {
            *o = self.number(field, v)?;
        }
        Ok(out)
    }

    fn bbox(&self) -> Result<[f64; 4], RecordError> {
        let b = self.quad("box")?;
        BBox::from_array(b).map_err(|e| self.err("box", e.to_string()))?;
        Ok(b)
    }
}

fn lines<'a>(
    text: &'a str,
    allowed: &'a [&'static str],
) -> impl Iterator<Item = Result<Line<'a>, RecordError>> + 'a {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(move |(i, l)| {
            let number = i + 1;
            match serde_json::from_str::<Value>(l) {
                Ok(Value::Object(obj)) => Ok(Line { number, obj, allowed }),
                Ok(_) => Err(RecordError {
                    line: number,
                    field: "<record>".into(),
                    message: "expected a JSON object".into(),
                }),
                Err(e) => Err(RecordError {
                    line: number,
                    field: "<record>".into(),
                    message: format!("invalid JSON: {e}"),
                }),
            }
        })
}

const DETECTION_KEYS: &[&str] = &["image_id", "class_id", "score", "box", "sigma"];
const GROUND_TRUTH_KEYS: &[&str] = &["image_id", "class_id", "box"];

pub fn parse_detections(text: &str) -> Result<Vec<DetectionRecord>, RecordError> {
    lines(text, DETECTION_KEYS)
        .map(|line| {
            let line = line?;
            line.check_keys()?;
            let image_id = line.image_id()?;
            let class_id = line.class_id()?;
            let score = line.number("score", line.get("score")?)?;
            if !(0.0..=1.0).contains(&score) {
                return Err(line.err("score", format!("{score} outside [0, 1]")));
            }
            let bbox = line.bbox()?;
            let sigma = line.quad("sigma")?;
            GaussPred4::from_sigma(bbox, sigma).map_err(|e| line.err("sigma", e.to_string()))?;
            Ok(DetectionRecord {
                image_id,
                class_id,
                score,
                bbox,
                sigma,
            })
        })
        .collect()
}

pub fn parse_ground_truths(text: &str) -> Result<Vec<GroundTruthRecord>, RecordError> {
    lines(text, GROUND_TRUTH_KEYS)
        .map(|line| {
            let line = line?;
            line.check_keys()?;
            Ok(GroundTruthRecord {
                image_id: line.image_id()?,
                class_id: line.class_id()?,
                bbox: line.bbox()?,
            })
        })
        .collect()
}
