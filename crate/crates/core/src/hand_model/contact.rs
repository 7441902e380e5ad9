use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Binary per-vertex contact labels. Serialized as a JSON array of 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContactVector {
    values: Vec<bool>,
}

impl ContactVector {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![false; len] }
    }

    pub fn all_ones(len: usize) -> Self {
        Self { values: vec![true; len] }
    }

    pub fn from_bools(values: Vec<bool>) -> Self {
        Self { values }
    }

    /// Binarizes soft labels: a value at or above `threshold` is contact.
    pub fn from_scores(scores: &[f64], threshold: f64) -> Self {
        Self { values: scores.iter().map(|&s| s >= threshold).collect() }
    }

    pub fn from_vertex_ids(len: usize, ids: impl IntoIterator<Item = u32>) -> Self {
        let mut c = Self::zeros(len);
        for v in ids {
            c.set(v, true);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, v: u32) -> bool {
        self.values[v as usize]
    }

    pub fn set(&mut self, v: u32, value: bool) {
        self.values[v as usize] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.values
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }

    /// Indices of contact vertices, ascending.
    pub fn ones(&self) -> impl Iterator<Item = u32> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as u32)
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.values.iter().map(|&b| u8::from(b)).collect()
    }
}

impl Serialize for ContactVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_bits().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ContactVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let bits = Vec::<u8>::deserialize(deserializer)?;
        let values = bits
            .into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(D::Error::custom(format!("contact value {other} is not 0 or 1"))),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { values })
    }
}
