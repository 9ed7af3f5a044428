use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{config, Result};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Equal labeled counts per class, differing by at most one.
    #[default]
    Stratified,
    /// Labeled counts proportional to class frequency, at least one each.
    Proportional,
}

/// Index sets into a dataset. The unlabeled set is every example not labeled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SslSplit {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

pub fn make_ssl_split(dataset: &Dataset, n_labeled: usize, seed: u64) -> Result<SslSplit> {
    make_ssl_split_with(dataset, n_labeled, SplitMode::Stratified, seed)
}

pub fn make_ssl_split_with(dataset: &Dataset, n_labeled: usize, mode: SplitMode, seed: u64) -> Result<SslSplit> {
    let classes = dataset.classes;
    if n_labeled < classes {
        return Err(config(format!("{n_labeled} labels cannot cover {classes} classes")));
    }
    if n_labeled > dataset.len() {
        return Err(config(format!("{n_labeled} labels requested from {} examples", dataset.len())));
    }
    let mut rng = stream_rng(seed, 0x5911, 0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in dataset.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quota = match mode {
        SplitMode::Stratified => stratified_quota(&sizes, n_labeled, &mut rng)?,
        SplitMode::Proportional => proportional_quota(&sizes, n_labeled)?,
    };
    let mut labeled = Vec::with_capacity(n_labeled);
    let mut unlabeled = Vec::with_capacity(dataset.len() - n_labeled);
    for (members, q) in by_class.iter().zip(quota) {
        labeled.extend_from_slice(&members[..q]);
        unlabeled.extend_from_slice(&members[q..]);
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    Ok(SslSplit { labeled, unlabeled })
}

fn stratified_quota(sizes: &[usize], n: usize, rng: &mut impl rand::Rng) -> Result<Vec<usize>> {
    let classes = sizes.len();
    let mut quota = vec![n / classes; classes];
    let mut extra: Vec<usize> = (0..classes).collect();
    extra.shuffle(rng);
    for &c in extra.iter().take(n % classes) {
        quota[c] += 1;
    }
    fill_quota(sizes, quota, n)
}

fn proportional_quota(sizes: &[usize], n: usize) -> Result<Vec<usize>> {
    let total: usize = sizes.iter().sum();
    let quota = sizes
        .iter()
        .map(|&s| ((s as f64 / total as f64 * n as f64).floor() as usize).max(1))
        .collect();
    fill_quota(sizes, quota, n)
}

/// Caps each quota at its class size, then moves surplus or deficit onto the
/// classes with the most room so the total is exactly `n`.
fn fill_quota(sizes: &[usize], mut quota: Vec<usize>, n: usize) -> Result<Vec<usize>> {
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(config(format!("class {c} has no examples")));
    }
    for (q, &s) in quota.iter_mut().zip(sizes) {
        *q = (*q).min(s);
    }
    let mut assigned: usize = quota.iter().sum();
    while assigned < n {
        let c = (0..sizes.len()).max_by_key(|&c| (sizes[c] - quota[c], usize::MAX - c)).expect("nonempty");
        quota[c] += 1;
        assigned += 1;
    }
    while assigned > n {
        let c = (0..sizes.len())
            .filter(|&c| quota[c] > 1)
            .max_by_key(|&c| (quota[c], usize::MAX - c))
            .expect("n covers classes");
        quota[c] -= 1;
        assigned -= 1;
    }
    Ok(quota)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, synth_dataset_weighted, SynthShape};

    fn shape() -> SynthShape {
        SynthShape::square(4, 1)
    }

    #[test]
    fn stratified_split_covers_each_class() {
        let d = synth_dataset(200, 10, shape(), 1).unwrap();
        let s = make_ssl_split(&d, 40, 3).unwrap();
        assert_eq!(s.labeled.len(), 40);
        assert_eq!(s.unlabeled.len(), 160);
        let mut counts = vec![0; 10];
        for &i in &s.labeled {
            counts[d.labels[i]] += 1;
        }
        assert_eq!(counts, vec![4; 10]);
        assert_eq!(s, make_ssl_split(&d, 40, 3).unwrap());
        assert_ne!(s, make_ssl_split(&d, 40, 4).unwrap());
    }

    #[test]
    fn edge_cases() {
        let d = synth_dataset(50, 10, shape(), 1).unwrap();
        assert!(make_ssl_split(&d, 9, 0).is_err());
        assert!(make_ssl_split(&d, 51, 0).is_err());
        let all = make_ssl_split(&d, 50, 0).unwrap();
        assert!(all.unlabeled.is_empty());
        let odd = make_ssl_split(&d, 13, 0).unwrap();
        assert_eq!(odd.labeled.len(), 13);
    }

    #[test]
    fn proportional_follows_frequencies() {
        let d = synth_dataset_weighted(1000, &[6.0, 3.0, 1.0], shape(), 0).unwrap();
        let s = make_ssl_split_with(&d, 100, SplitMode::Proportional, 0).unwrap();
        let mut counts = vec![0; 3];
        for &i in &s.labeled {
            counts[d.labels[i]] += 1;
        }
        assert_eq!(counts, vec![60, 30, 10]);
    }
}
