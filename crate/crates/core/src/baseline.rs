//! Dynamic time warping and a k-nearest-neighbour classifier over it.

use crate::error::{Error, Result};
use crate::inject::AnomalyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DtwConfig {
    /// Sakoe-Chiba band radius; `None` is unconstrained.
    pub window: Option<usize>,
}

/// DTW distance with absolute-difference local cost and match, insertion and
/// deletion steps.
pub fn dtw(a: &[f64], b: &[f64], cfg: &DtwConfig) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("baseline", "dtw needs non-empty sequences"));
    }
    let (n, m) = (a.len(), b.len());
    let w = match cfg.window {
        Some(w) => {
            if n.abs_diff(m) > w {
                return Err(Error::Infeasible {
                    window: w,
                    len_a: n,
                    len_b: m,
                });
            }
            w
        }
        None => n.max(m),
    };
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::INFINITY);
        let lo = i.saturating_sub(w).max(1);
        let hi = (i + w).min(m);
        for j in lo..=hi {
            let cost = (a[i - 1] - b[j - 1]).abs();
            cur[j] = cost + prev[j - 1].min(prev[j]).min(cur[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// k-NN over DTW distances. Neighbours are ranked by distance, then by label
/// order, so the result does not depend on the order of the training set.
/// The majority label among the `k` nearest wins; ties go to the smaller
/// summed distance, then to the earlier label in [`AnomalyKind::ALL`].
pub fn knn_classify(train: &[(&[f64], AnomalyKind)], query: &[f64], k: usize, cfg: &DtwConfig) -> Result<AnomalyKind> {
    if train.is_empty() {
        return Err(Error::param("baseline", "empty training set"));
    }
    if k == 0 || k > train.len() {
        return Err(Error::param("baseline", format!("k={k} outside 1..={}", train.len())));
    }
    let mut dists = train
        .iter()
        .map(|(series, label)| Ok((dtw(series, query, cfg)?, *label)))
        .collect::<Result<Vec<_>>>()?;
    dists.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut votes = [(0usize, 0.0f64); 5];
    for &(d, label) in &dists[..k] {
        votes[label.index()].0 += 1;
        votes[label.index()].1 += d;
    }
    let best = (0..5)
        .filter(|&i| votes[i].0 > 0)
        .min_by(|&i, &j| {
            votes[j].0
                .cmp(&votes[i].0)
                .then(votes[i].1.total_cmp(&votes[j].1))
                .then(i.cmp(&j))
        })
        .expect("k >= 1 neighbours voted");
    Ok(AnomalyKind::ALL[best])
}
