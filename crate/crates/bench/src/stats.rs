//! Paired comparison statistics.

/// Exact one-sided p-value of the Wilcoxon signed-rank test for the
/// alternative that the differences are shifted above zero. Zero
/// differences are dropped; tied magnitudes get averaged ranks. The null
/// distribution is enumerated over all sign assignments.
pub fn wilcoxon_signed_rank_greater(diffs: &[f64]) -> f64 {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return 1.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nonzero[a].abs().total_cmp(&nonzero[b].abs()));
    // Ranks are doubled so averaged ties stay integral.
    let mut rank2 = vec![0usize; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nonzero[order[j + 1]].abs() == nonzero[order[i]].abs() {
            j += 1;
        }
        for &k in &order[i..=j] {
            rank2[k] = i + j + 2;
        }
        i = j + 1;
    }
    let observed: usize = (0..n).filter(|&k| nonzero[k] > 0.0).map(|k| rank2[k]).sum();
    let total: usize = rank2.iter().sum();
    let mut ways = vec![0f64; total + 1];
    ways[0] = 1.0;
    for &r in &rank2 {
        for s in (r..=total).rev() {
            ways[s] += ways[s - r];
        }
    }
    ways[observed..].iter().sum::<f64>() / 2f64.powi(n as i32)
}
