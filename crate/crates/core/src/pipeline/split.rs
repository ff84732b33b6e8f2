use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::DEFAULT_SEED;
use crate::error::{Error, Result};

use super::dataset::DatasetIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
            seed: DEFAULT_SEED,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        if [train, val, test].iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("split ratios must be positive"));
        }
        if (train + val + test - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split ratios must sum to 1, got {}",
                train + val + test
            )));
        }
        Ok(Self { train, val, test, seed })
    }

    /// Partition sizes for `n` patients from cumulative floor cut points.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let nf = n as f64;
        let c1 = ((self.train * nf + 1e-9).floor() as usize).min(n);
        let c2 = (((self.train + self.val) * nf + 1e-9).floor() as usize).clamp(c1, n);
        [c1, c2 - c1, n - c2]
    }
}

/// Shuffles the sorted, de-duplicated ids with the split seed and cuts them
/// into train, validation and test groups.
pub fn split_patient_ids(ids: &[String], spec: &SplitSpec) -> Result<[Vec<String>; 3]> {
    let mut unique: Vec<String> = ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if unique.len() < 3 {
        return Err(Error::TooFewPatients(unique.len()));
    }
    unique.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let [a, b, _] = spec.sizes(unique.len());
    let test = unique.split_off(a + b);
    let val = unique.split_off(a);
    Ok([unique, val, test])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: DatasetIndex,
    pub val: DatasetIndex,
    pub test: DatasetIndex,
}

impl DatasetSplit {
    pub fn partitions(&self) -> [(&'static str, &DatasetIndex); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }

    /// `image_id,patient_id,partition`, ordered by image id.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(&str, &str, &str)> = self
            .partitions()
            .iter()
            .flat_map(|(name, idx)| idx.records().iter().map(move |r| (r.image_id(), r.patient_id(), *name)))
            .collect();
        rows.sort();
        let mut s = String::from("image_id,patient_id,partition\n");
        for (i, p, n) in rows {
            s.push_str(&format!("{i},{p},{n}\n"));
        }
        s
    }
}

pub fn patient_level_split(index: &DatasetIndex, spec: &SplitSpec) -> Result<DatasetSplit> {
    let ids: Vec<String> = index.patient_ids().into_iter().map(str::to_string).collect();
    let [train, val, test] = split_patient_ids(&ids, spec)?;
    let pick = |group: Vec<String>| index.filter_patients(&group.into_iter().collect());
    Ok(DatasetSplit {
        train: pick(train),
        val: pick(val),
        test: pick(test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:05}")).collect()
    }

    #[test]
    fn sizes_for_reference_counts() {
        let spec = SplitSpec::default();
        assert_eq!(spec.sizes(1000), [700, 150, 150]);
        assert_eq!(spec.sizes(1088), [761, 163, 164]);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let spec = SplitSpec::default();
        let a = split_patient_ids(&ids(50), &spec).unwrap();
        assert_eq!(a, split_patient_ids(&ids(50), &spec).unwrap());
        let other = split_patient_ids(&ids(50), &SplitSpec { seed: 7, ..spec }).unwrap();
        assert_ne!(a, other);
        let all: BTreeSet<&String> = a.iter().flatten().collect();
        assert_eq!(all.len(), 50);
    }

    #[test]
    fn spec_validation() {
        assert!(SplitSpec::new(0.7, 0.2, 0.2, 1).is_err());
        assert!(SplitSpec::new(0.7, 0.3, 0.0, 1).is_err());
        assert!(matches!(
            split_patient_ids(&ids(2), &SplitSpec::default()),
            Err(Error::TooFewPatients(2))
        ));
    }
}
