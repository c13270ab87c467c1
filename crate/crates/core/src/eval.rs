//! Cross-camera retrieval metrics and adjusted mutual information.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::association::PseudoLabeling;
use crate::error::{Error, Result};

pub const CMC_RANKS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub map: f64,
    /// Match rates at ranks 1, 5 and 10.
    pub cmc: [f64; 3],
    pub valid_queries: usize,
    /// Queries without any cross-camera match of their identity.
    pub skipped_queries: usize,
}

/// Average precision of one ranked list of relevance flags.
pub fn average_precision(relevant: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Every video queries the videos of all other cameras, ranked by cosine
/// similarity with ties broken by lower id.
pub fn cmc_map(
    features: ArrayView2<f64>,
    camera_ids: &[usize],
    identities: &[usize],
) -> Result<RetrievalMetrics> {
    let n = features.nrows();
    if camera_ids.len() != n || identities.len() != n {
        return Err(Error::Shape(format!(
            "{n} feature rows, {} camera ids, {} identities",
            camera_ids.len(),
            identities.len()
        )));
    }
    let (unit, _) = crate::nn::l2_normalize_rows(&features.to_owned());
    let sims = unit.dot(&unit.t());

    let mut ap_sum = 0.0;
    let mut cmc_hits = [0usize; 3];
    let mut valid = 0usize;
    for q in 0..n {
        let mut gallery: Vec<usize> = (0..n).filter(|&g| camera_ids[g] != camera_ids[q]).collect();
        if !gallery.iter().any(|&g| identities[g] == identities[q]) {
            continue;
        }
        gallery.sort_by(|&a, &b| sims[[q, b]].total_cmp(&sims[[q, a]]).then(a.cmp(&b)));
        let relevant: Vec<bool> = gallery.iter().map(|&g| identities[g] == identities[q]).collect();
        valid += 1;
        ap_sum += average_precision(&relevant);
        let first = relevant.iter().position(|&r| r).unwrap_or(usize::MAX);
        for (k, &rank) in CMC_RANKS.iter().enumerate() {
            if first < rank {
                cmc_hits[k] += 1;
            }
        }
    }
    if valid == 0 {
        return Err(Error::NoValidQueries);
    }
    Ok(RetrievalMetrics {
        map: ap_sum / valid as f64,
        cmc: cmc_hits.map(|h| h as f64 / valid as f64),
        valid_queries: valid,
        skipped_queries: n - valid,
    })
}

fn relabel<T: Ord + Copy>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    let dense = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (dense, ids.len())
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `ln(k!)` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Expected mutual information of two partitions with the given marginals
/// under the hypergeometric model, summed exactly.
pub fn expected_mutual_information(a: &[usize], b: &[usize], n: usize) -> f64 {
    let lf = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in a {
        for &bj in b {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            let base = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj] - lf[n];
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (ai as f64 * bj as f64)).ln();
                let log_p = base - lf[nij] - lf[ai - nij] - lf[bj - nij] - lf[n + nij - ai - bj];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with arithmetic-mean normalization.
///
/// Two single-class labelings score 1. When the normalizer vanishes otherwise,
/// the score is 1 for identical partitions and 0 for different ones.
pub fn ami<A: Ord + Copy, B: Ord + Copy>(labels_a: &[A], labels_b: &[B]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::Shape(format!(
            "labelings of length {} and {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.is_empty() {
        return Err(Error::Insufficient("AMI of empty labelings".into()));
    }
    let n = labels_a.len();
    let nf = n as f64;
    let (a, ka) = relabel(labels_a);
    let (b, kb) = relabel(labels_b);
    if ka == 1 && kb == 1 {
        return Ok(1.0);
    }
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut row = vec![0usize; ka];
    let mut col = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(&b) {
        *table.entry((x, y)).or_default() += 1;
        row[x] += 1;
        col[y] += 1;
    }
    let same_partition = table.len() == ka && ka == kb;

    let mi: f64 = table
        .iter()
        .map(|(&(i, j), &c)| {
            let c = c as f64;
            c / nf * (nf * c / (row[i] as f64 * col[j] as f64)).ln()
        })
        .sum();
    let emi = expected_mutual_information(&row, &col, n);
    let mean_h = 0.5 * (entropy(&row, nf) + entropy(&col, nf));
    let denom = mean_h - emi;
    if denom.abs() < 1e-15 {
        return Ok(if same_partition { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denom)
}

/// AMI of a pseudo labeling against ground truth on its labeled subset.
/// `None` when nothing is labeled.
pub fn pseudo_label_ami(labeling: &PseudoLabeling, identities: &[usize]) -> Result<Option<f64>> {
    let labeled = labeling.labeled();
    if labeled.is_empty() {
        return Ok(None);
    }
    let pred: Vec<usize> = labeled.iter().map(|&(_, l)| l).collect();
    let truth: Vec<usize> = labeled.iter().map(|&(i, _)| identities[i]).collect();
    ami(&pred, &truth).map(Some)
}

/// Metrics of one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub map: f64,
    pub cmc: [f64; 3],
    pub ami: Option<f64>,
    pub coverage: Option<f64>,
}
