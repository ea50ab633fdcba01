//! Small descriptive statistics used by experiments and acceptance checks.

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn std_err(v: &[f64]) -> f64 {
    std_dev(v) / (v.len() as f64).sqrt()
}

/// Standard error of the mean of an autocorrelated series, estimated from
/// `n_batches` contiguous batch means.
pub fn batch_means_std_err(v: &[f64], n_batches: usize) -> f64 {
    let n_batches = n_batches.max(2).min(v.len());
    let size = v.len() / n_batches;
    if size == 0 {
        return std_err(v);
    }
    let means: Vec<f64> = v.chunks_exact(size).take(n_batches).map(mean).collect();
    std_err(&means)
}

/// Fractional ranks with ties sharing their average rank (1-based).
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut end = k + 1;
        while end < idx.len() && v[idx[end]] == v[idx[k]] {
            end += 1;
        }
        let avg = (k + end + 1) as f64 / 2.0;
        for &i in &idx[k..end] {
            out[i] = avg;
        }
        k = end;
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        // A constant series carries no monotone association.
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation (Pearson correlation of tie-averaged ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// Rounds every value to a multiple of `resolution`, so values that agree to
/// floating-point rounding rank as ties.
pub fn quantize(v: &[f64], resolution: f64) -> Vec<f64> {
    v.iter().map(|x| (x / resolution).round() * resolution).collect()
}
