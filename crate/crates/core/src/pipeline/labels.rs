use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::pipeline::detection::BuildingDetection;

/// Default tolerance around a box edge when matching annotation points.
pub const DEFAULT_MATCH_RADIUS_M: f64 = 2.0;

/// The five-level manual damage scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DamageGrade {
    NoDamage,
    Possible,
    Moderate,
    Severe,
    Destroyed,
}

impl DamageGrade {
    pub const ALL: [DamageGrade; 5] = [
        DamageGrade::NoDamage,
        DamageGrade::Possible,
        DamageGrade::Moderate,
        DamageGrade::Severe,
        DamageGrade::Destroyed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DamageGrade::NoDamage => "No Damage",
            DamageGrade::Possible => "Possible Damage",
            DamageGrade::Moderate => "Moderate Damage",
            DamageGrade::Severe => "Severe Damage",
            DamageGrade::Destroyed => "Destroyed",
        }
    }
}

impl fmt::Display for DamageGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DamageGrade {
    type Err = Error;

    /// Accepts the assessment strings (`"Severe Damage"`) and the compact
    /// variant names (`"Severe"`), case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| !c.is_whitespace() && *c != '_').collect::<String>().to_lowercase();
        let grade = match key.as_str() {
            "nodamage" | "none" => DamageGrade::NoDamage,
            "possible" | "possibledamage" => DamageGrade::Possible,
            "moderate" | "moderatedamage" => DamageGrade::Moderate,
            "severe" | "severedamage" => DamageGrade::Severe,
            "destroyed" => DamageGrade::Destroyed,
            _ => return Err(Error::parse("damage grade", format!("unknown damage grade {s:?}"))),
        };
        Ok(grade)
    }
}

impl Serialize for DamageGrade {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for DamageGrade {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Damaged,
    Undamaged,
}

impl Label {
    pub fn as_f32(self) -> f32 {
        match self {
            Label::Damaged => 1.0,
            Label::Undamaged => 0.0,
        }
    }

    pub fn is_damaged(self) -> bool {
        self == Label::Damaged
    }
}

/// Severe and Destroyed form the damaged class; every other grade is
/// undamaged.
pub fn binarize_grade(grade: DamageGrade) -> Label {
    match grade {
        DamageGrade::Severe | DamageGrade::Destroyed => Label::Damaged,
        DamageGrade::NoDamage | DamageGrade::Possible | DamageGrade::Moderate => Label::Undamaged,
    }
}

/// A graded point from a manual damage assessment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageAnnotation {
    pub lon: f64,
    pub lat: f64,
    pub grade: DamageGrade,
}

/// Reads JSON-lines annotations (`{"lon": .., "lat": .., "grade": ".."}`).
pub fn read_annotations<R: BufRead>(input: R, source: &str) -> Result<Vec<DamageAnnotation>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let a: DamageAnnotation =
            serde_json::from_str(&line).map_err(|e| Error::parse(format!("{source}:{}", i + 1), e.to_string()))?;
        out.push(a);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBuilding {
    pub detection: BuildingDetection,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinResult {
    /// One entry per input detection, in input order.
    pub buildings: Vec<LabeledBuilding>,
    /// Damaged-grade annotations that matched no detection.
    pub orphans: usize,
}

impl JoinResult {
    pub fn damaged(&self) -> usize {
        self.buildings.iter().filter(|b| b.label.is_damaged()).count()
    }

    pub fn undamaged(&self) -> usize {
        self.buildings.len() - self.damaged()
    }
}

/// Labels detections from damage annotations.
///
/// Each damaged-grade annotation is assigned to the detection that contains
/// it or, failing that, the nearest detection within `match_radius_m` of its
/// edge (ties go to the earlier detection). Detections receiving at least
/// one damaged annotation are damaged; all others are undamaged negatives.
pub fn join_labels(
    detections: &[BuildingDetection],
    annotations: &[DamageAnnotation],
    match_radius_m: f64,
) -> JoinResult {
    let mut damaged = vec![false; detections.len()];
    let mut orphans = 0;
    for a in annotations.iter().filter(|a| binarize_grade(a.grade).is_damaged()) {
        let mut best: Option<(usize, f64)> = None;
        for (i, d) in detections.iter().enumerate() {
            let dist = d.bbox.distance_m(a.lon, a.lat);
            if dist <= match_radius_m && best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((i, dist));
            }
        }
        match best {
            Some((i, _)) => damaged[i] = true,
            None => orphans += 1,
        }
    }
    let buildings = detections
        .iter()
        .zip(damaged)
        .map(|(d, hit)| LabeledBuilding {
            detection: *d,
            label: if hit { Label::Damaged } else { Label::Undamaged },
        })
        .collect();
    JoinResult { buildings, orphans }
}
