use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::io_util;
use crate::{Error, Result};

/// One of the six channel expansion ratios {0.25, 0.5, 1, 2, 3, 4}.
///
/// Stored in quarters so that applying it to a base width divisible by 4 is exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ratio(u8);

impl Ratio {
    pub const QUARTER: Ratio = Ratio(1);
    pub const HALF: Ratio = Ratio(2);
    pub const ONE: Ratio = Ratio(4);
    pub const TWO: Ratio = Ratio(8);
    pub const THREE: Ratio = Ratio(12);
    pub const FOUR: Ratio = Ratio(16);

    pub const ALL: [Ratio; 6] = [
        Self::QUARTER,
        Self::HALF,
        Self::ONE,
        Self::TWO,
        Self::THREE,
        Self::FOUR,
    ];

    pub fn from_f64(value: f64) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_f64() == value)
            .ok_or_else(|| {
                Error::Input(format!(
                    "expansion ratio {value} is not one of 0.25, 0.5, 1, 2, 3, 4"
                ))
            })
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 4.0
    }

    pub fn quarters(self) -> usize {
        self.0 as usize
    }

    /// `ratio × base`; `base` must be divisible by 4.
    pub fn apply(self, base: usize) -> usize {
        debug_assert_eq!(base % 4, 0);
        base * self.quarters() / 4
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            1 => f.write_str("0.25"),
            2 => f.write_str("0.5"),
            q => write!(f, "{}", q / 4),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 % 4 == 0 {
            s.serialize_u64(self.0 as u64 / 4)
        } else {
            s.serialize_f64(self.as_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ratio::from_f64(v).map_err(serde::de::Error::custom)
    }
}

/// Per-gene expansion ratios of one candidate architecture.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpansionCode(Vec<Ratio>);

impl ExpansionCode {
    pub fn new(ratios: Vec<Ratio>) -> Self {
        Self(ratios)
    }

    pub fn from_f64s(values: &[f64]) -> Result<Self> {
        values.iter().map(|&v| Ratio::from_f64(v)).collect::<Result<_>>().map(Self)
    }

    pub fn uniform(ratio: Ratio, n: usize) -> Self {
        Self(vec![ratio; n])
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        Self((0..n).map(|_| Ratio::ALL[rng.random_range(0..Ratio::ALL.len())]).collect())
    }

    pub fn ratios(&self) -> &[Ratio] {
        &self.0
    }

    pub fn ratios_mut(&mut self) -> &mut [Ratio] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_f64s(&self) -> Vec<f64> {
        self.0.iter().map(|r| r.as_f64()).collect()
    }

    /// The common ratio when every gene is equal.
    pub fn uniform_ratio(&self) -> Option<Ratio> {
        let first = *self.0.first()?;
        self.0.iter().all(|&r| r == first).then_some(first)
    }
}

impl fmt::Display for ExpansionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str("]")
    }
}

pub fn uniform_code(ratio: f64, n: usize) -> Result<ExpansionCode> {
    Ok(ExpansionCode::uniform(Ratio::from_f64(ratio)?, n))
}

/// On-disk form of a code: `{"template": "...", "ratios": [0.25, 1, 4, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeFile {
    pub template: String,
    pub ratios: ExpansionCode,
}

impl CodeFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("code file serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(0, format!("code file: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io_util::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = io_util::read(path)?;
        Self::from_json(&String::from_utf8_lossy(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_membership() {
        for v in [0.25, 0.5, 1.0, 2.0, 3.0, 4.0] {
            assert_eq!(Ratio::from_f64(v).unwrap().as_f64(), v);
        }
        assert!(Ratio::from_f64(1.5).is_err());
        assert!(Ratio::from_f64(8.0).is_err());
        assert_eq!(Ratio::QUARTER.apply(64), 16);
    }

    #[test]
    fn uniform_codes() {
        assert_eq!(uniform_code(1.0, 5).unwrap().as_f64s(), vec![1.0; 5]);
        assert_eq!(uniform_code(4.0, 2).unwrap().as_f64s(), vec![4.0, 4.0]);
        assert!(matches!(uniform_code(5.0, 2), Err(Error::Input(_))));
    }

    #[test]
    fn code_file_uses_exact_decimals() {
        let f = CodeFile {
            template: "vgg_small".into(),
            ratios: ExpansionCode::from_f64s(&[0.25, 0.5, 1.0, 2.0, 3.0, 4.0]).unwrap(),
        };
        let json = f.to_json();
        assert_eq!(json, "{\"template\":\"vgg_small\",\"ratios\":[0.25,0.5,1,2,3,4]}\n");
        assert_eq!(CodeFile::from_json(&json).unwrap(), f);
        assert!(CodeFile::from_json("{\"template\":\"x\",\"ratios\":[1.5]}").is_err());
        assert!(CodeFile::from_json("{\"template\":\"x\",\"ratios\":[1],\"extra\":1}").is_err());
    }

    #[test]
    fn display() {
        let c = ExpansionCode::from_f64s(&[0.25, 3.0]).unwrap();
        assert_eq!(c.to_string(), "[0.25,3]");
    }
}
