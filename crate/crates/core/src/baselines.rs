//! Comparison oversamplers: random duplication and SMOTE.

use rand::Rng;

use crate::dataset::{class_counts, LabeledDataset};
use crate::error::{RcsError, Result};
use crate::linalg::{squared_distance, Vector};
use crate::par::Exec;
use crate::rng::Seed;

fn check_nonempty(ds: &LabeledDataset) -> Result<()> {
    if let Some((c, _)) = ds.counts_by_label().iter().enumerate().find(|(_, &n)| n == 0) {
        return Err(RcsError::EmptyInput(format!("class {} has no rows", ds.label_names()[c])));
    }
    Ok(())
}

/// Duplicate uniformly chosen rows until every class reaches `N₁`.
pub fn random_oversample(ds: &LabeledDataset, seed: u64, exec: Exec) -> Result<LabeledDataset> {
    check_nonempty(ds)?;
    let counts = class_counts(ds)?;
    let root = Seed::new(seed).child("ros");
    let draws = exec.map(&counts.ordered, |&(label, n)| {
        let rows = ds.class_rows(label);
        let mut rng = root.index(label as u64).rng();
        let picks: Vec<Vector> =
            (0..counts.n1 - n).map(|_| rows[rng.random_range(0..rows.len())].clone()).collect();
        (label, picks)
    });
    let mut out = ds.clone();
    for (label, rows) in draws {
        out.push_synthetic(label, rows)?;
    }
    Ok(out)
}

/// Same-class nearest neighbors of row `i` (Euclidean, ties by index).
fn neighbors(rows: &[Vector], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, r)| (squared_distance(&rows[i], r), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// SMOTE: interpolate between a random class row and one of its `k` nearest
/// same-class neighbors. Returns the balanced data and any warnings.
pub fn smote(ds: &LabeledDataset, k: usize, seed: u64, exec: Exec) -> Result<(LabeledDataset, Vec<String>)> {
    if k == 0 {
        return Err(RcsError::InvalidArgument("SMOTE needs k >= 1".into()));
    }
    check_nonempty(ds)?;
    let counts = class_counts(ds)?;
    let needy: Vec<(usize, usize)> =
        counts.ordered.iter().copied().filter(|&(_, n)| n < counts.n1).collect();
    if let Some(&(label, _)) = needy.iter().find(|&&(_, n)| n < 2) {
        return Err(RcsError::InsufficientSamples(format!(
            "SMOTE needs two rows in class {}",
            ds.label_names()[label]
        )));
    }
    let root = Seed::new(seed).child("smote");
    let mut warnings = Vec::new();
    for &(label, n) in &needy {
        if k > n - 1 {
            warnings.push(format!(
                "class {}: k = {k} clamped to {} neighbors",
                ds.label_names()[label],
                n - 1
            ));
        }
    }
    let draws = exec.map(&needy, |&(label, n)| {
        let rows = ds.class_rows(label);
        let kk = k.min(n - 1);
        let nn: Vec<Vec<usize>> = (0..rows.len()).map(|i| neighbors(&rows, i, kk)).collect();
        let mut rng = root.index(label as u64).rng();
        let synth: Vec<Vector> = (0..counts.n1 - n)
            .map(|_| {
                let i = rng.random_range(0..rows.len());
                let j = nn[i][rng.random_range(0..kk)];
                let u: f64 = rng.random();
                rows[i].iter().zip(&rows[j]).map(|(a, b)| a + u * (b - a)).collect()
            })
            .collect();
        (label, synth)
    });
    let mut out = ds.clone();
    for (label, rows) in draws {
        out.push_synthetic(label, rows)?;
    }
    Ok((out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(counts: &[usize]) -> LabeledDataset {
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                feats.push(vec![c as f64 * 10.0 + i as f64, (i * i) as f64 * 0.5 - c as f64]);
                labels.push(c);
            }
        }
        LabeledDataset::from_parts(feats, labels, counts.len()).unwrap()
    }

    #[test]
    fn ros_examples() {
        let balanced = toy(&[3, 3]);
        assert_eq!(random_oversample(&balanced, 1, Exec::Serial).unwrap(), balanced);

        let ds = toy(&[3, 1]);
        let out = random_oversample(&ds, 1, Exec::Serial).unwrap();
        assert_eq!(out.counts_by_label(), vec![3, 3]);
        let minority = &ds.features()[3];
        let extra: Vec<&Vector> = out.features()[4..].iter().collect();
        assert_eq!(extra, vec![minority, minority]);

        let ds = toy(&[9, 4, 2]);
        let out = random_oversample(&ds, 5, Exec::Parallel).unwrap();
        for (x, &syn) in out.features().iter().zip(out.synthetic()) {
            if syn {
                assert!(ds.features().contains(x));
            }
        }
        assert_eq!(out, random_oversample(&ds, 5, Exec::Serial).unwrap());
    }

    #[test]
    fn smote_segment_and_balance() {
        let ds = LabeledDataset::from_parts(
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 1.0], vec![3.0, 5.0]],
            vec![0, 0, 0, 1, 1],
            2,
        )
        .unwrap();
        let (out, _) = smote(&ds, 5, 3, Exec::Serial).unwrap();
        assert_eq!(out.counts_by_label(), vec![3, 3]);
        let s = &out.features()[5];
        assert_eq!(s[0], 3.0);
        assert!((1.0..=5.0).contains(&s[1]));

        let balanced = toy(&[4, 4]);
        assert_eq!(smote(&balanced, 5, 0, Exec::Serial).unwrap().0, balanced);
        assert!(matches!(smote(&toy(&[4, 1]), 5, 0, Exec::Serial), Err(RcsError::InsufficientSamples(_))));
        let (_, warnings) = smote(&toy(&[6, 3]), 5, 0, Exec::Serial).unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn empty_declared_class_is_rejected() {
        let ds = LabeledDataset::from_parts(vec![vec![0.0], vec![1.0]], vec![0, 0], 2).unwrap();
        assert!(matches!(random_oversample(&ds, 0, Exec::Serial), Err(RcsError::EmptyInput(_))));
    }
}
