use std::collections::{HashMap, HashSet};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// How to partition a dataset into train/validation/test.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Shuffled split; sizes are `round(f * n)` for train and validation, the
    /// remainder goes to test.
    Fractions { train: f64, val: f64, test: f64 },
    /// Explicit, disjoint id lists. Ids not listed are dropped.
    Ids {
        train: Vec<String>,
        val: Vec<String>,
        test: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &Dataset)> {
        [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ]
        .into_iter()
    }
}

/// Indices of each split, each list in original order.
pub(crate) fn split_indices(
    ids: &[&str],
    spec: &SplitSpec,
    rng: &mut Rng,
) -> Result<[Vec<usize>; 3]> {
    match spec {
        SplitSpec::Fractions { train, val, test } => {
            let fr = [*train, *val, *test];
            if fr.iter().any(|f| !(0.0..=1.0).contains(f))
                || ((train + val + test) - 1.0).abs() > 1e-9
            {
                return Err(Error::invalid(format!(
                    "split fractions {fr:?} must be in [0, 1] and sum to 1"
                )));
            }
            let n = ids.len();
            let n_train = (train * n as f64).round() as usize;
            let n_val = ((val * n as f64).round() as usize).min(n - n_train);
            let perm = rng.permutation(n);
            let mut parts = [
                perm[..n_train].to_vec(),
                perm[n_train..n_train + n_val].to_vec(),
                perm[n_train + n_val..].to_vec(),
            ];
            parts.iter_mut().for_each(|p| p.sort_unstable());
            Ok(parts)
        }
        SplitSpec::Ids { train, val, test } => {
            let pos: HashMap<&str, usize> =
                ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
            let mut seen = HashSet::new();
            let mut parts: [Vec<usize>; 3] = Default::default();
            for (part, list) in parts.iter_mut().zip([train, val, test]) {
                for id in list {
                    if !seen.insert(id.as_str()) {
                        return Err(Error::invalid(format!(
                            "id {id} appears in more than one split"
                        )));
                    }
                    let i = *pos
                        .get(id.as_str())
                        .ok_or_else(|| Error::invalid(format!("unknown id {id}")))?;
                    part.push(i);
                }
                part.sort_unstable();
            }
            Ok(parts)
        }
    }
}

/// Splits `ds`; membership is a deterministic function of `rng`'s seed.
pub fn split(ds: &Dataset, spec: &SplitSpec, rng: &mut Rng) -> Result<Splits> {
    let ids: Vec<&str> = ds.records.iter().map(|r| r.id.as_str()).collect();
    let seed = rng.seed();
    let parts = split_indices(&ids, spec, rng)?;
    let sizes: std::collections::BTreeMap<String, usize> = ["train", "val", "test"]
        .iter()
        .zip(&parts)
        .map(|(n, p)| (n.to_string(), p.len()))
        .collect();
    let make = |name: &str, idx: &[usize]| {
        let mut part = ds.select(idx);
        part.header.metadata.split = Some(name.to_string());
        part.header.metadata.sizes = Some(sizes.clone());
        part.header
            .metadata
            .extra
            .insert("split_seed".into(), seed.into());
        part
    };
    Ok(Splits {
        train: make("train", &parts[0]),
        val: make("val", &parts[1]),
        test: make("test", &parts[2]),
    })
}

/// Random subset of `n` records (original order kept).
pub fn subsample(ds: &Dataset, n: usize, rng: &mut Rng) -> Result<Dataset> {
    if n > ds.len() {
        return Err(Error::invalid(format!(
            "cannot subsample {n} of {} records",
            ds.len()
        )));
    }
    let mut idx = rng.permutation(ds.len());
    idx.truncate(n);
    idx.sort_unstable();
    let mut out = ds.select(&idx);
    out.header
        .metadata
        .extra
        .insert("subsample_seed".into(), rng.seed().into());
    out.header
        .metadata
        .extra
        .insert("subsampled_from".into(), ds.len().into());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::{Header, Metadata, Record, Schema, Target};
    use crate::Task;

    fn ds(n: usize) -> Dataset {
        let records = (0..n)
            .map(|i| Record {
                id: format!("e{i}"),
                x: vec![vec![i as f64]],
                y: Target::Label((i % 2) as u8),
                mask: None,
            })
            .collect();
        Dataset::new(
            Header::new(
                Schema::plain(["v".to_string()]),
                1,
                Task::Classification,
                Metadata::default(),
            ),
            records,
        )
        .unwrap()
    }

    fn ids(d: &Dataset) -> Vec<String> {
        d.records.iter().map(|r| r.id.clone()).collect()
    }

    #[test]
    fn fraction_sizes() {
        let s = split(
            &ds(1000),
            &SplitSpec::Fractions {
                train: 0.8,
                val: 0.1,
                test: 0.1,
            },
            &mut Rng::new(1),
        )
        .unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (800, 100, 100));
        assert_eq!(s.test.header.metadata.split.as_deref(), Some("test"));
    }

    #[test]
    fn same_seed_same_membership() {
        let spec = SplitSpec::Fractions {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        };
        let a = split(&ds(50), &spec, &mut Rng::new(9)).unwrap();
        let b = split(&ds(50), &spec, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let c = split(&ds(50), &spec, &mut Rng::new(10)).unwrap();
        assert_ne!(ids(&a.train), ids(&c.train));
    }

    #[test]
    fn explicit_lists_must_be_disjoint() {
        let spec = SplitSpec::Ids {
            train: vec!["e0".into(), "e1".into()],
            val: vec!["e1".into()],
            test: vec![],
        };
        assert!(split(&ds(3), &spec, &mut Rng::new(0)).is_err());
        let spec = SplitSpec::Ids {
            train: vec!["e2".into(), "e0".into()],
            val: vec!["e1".into()],
            test: vec![],
        };
        let s = split(&ds(3), &spec, &mut Rng::new(0)).unwrap();
        assert_eq!(ids(&s.train), ["e0", "e2"]);
    }

    #[test]
    fn subsampling_train_leaves_test_alone() {
        let s = split(
            &ds(400),
            &SplitSpec::Fractions {
                train: 0.5,
                val: 0.25,
                test: 0.25,
            },
            &mut Rng::new(2),
        )
        .unwrap();
        let test_before = s.test.clone();
        let small = subsample(&s.train, 50, &mut Rng::new(3)).unwrap();
        assert_eq!(small.len(), 50);
        let train_ids: HashSet<String> = ids(&s.train).into_iter().collect();
        assert!(ids(&small).iter().all(|i| train_ids.contains(i)));
        assert_eq!(s.test, test_before);
        assert!(subsample(&s.train, 201, &mut Rng::new(3)).is_err());
    }
}
