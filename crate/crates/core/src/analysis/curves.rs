use crate::data::NoiseRecord;

/// Counts sorted in descending order.
pub fn selection_occurrence_curve(counts: &[u64]) -> Vec<u64> {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted
}

/// Selections made between two cumulative count snapshots.
pub fn windowed_counts(start: &[u64], end: &[u64]) -> Vec<u64> {
    end.iter().zip(start).map(|(e, s)| e.saturating_sub(*s)).collect()
}

/// Fraction of corrupted instances inside each position of a sliding window
/// over instances sorted by descending selection count (ties by index).
///
/// Returns `N - window + 1` values, or nothing when `window` is zero or
/// exceeds `N`.
pub fn mislabeled_fraction_overlay(counts: &[u64], manifest: &[NoiseRecord], window: usize) -> Vec<f64> {
    let n = counts.len();
    if window == 0 || window > n {
        return Vec::new();
    }
    let mut corrupted = vec![false; n];
    for r in manifest {
        if r.index < n {
            corrupted[r.index] = true;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let flags: Vec<u32> = order.iter().map(|&i| u32::from(corrupted[i])).collect();
    let mut inside: u32 = flags[..window].iter().sum();
    let mut out = Vec::with_capacity(n - window + 1);
    out.push(f64::from(inside) / window as f64);
    for pos in window..n {
        inside = inside + flags[pos] - flags[pos - window];
        out.push(f64::from(inside) / window as f64);
    }
    out
}

/// Natural-log entropy of `w / sum(w)`; all-zero weights count as uniform.
pub fn weight_entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return (weights.len() as f64).ln();
    }
    -weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let q = w / total;
            q * q.ln()
        })
        .sum::<f64>()
}

pub fn weight_entropy_series<S: AsRef<[f64]>>(snapshots: &[S]) -> Vec<f64> {
    snapshots.iter().map(|s| weight_entropy(s.as_ref())).collect()
}
