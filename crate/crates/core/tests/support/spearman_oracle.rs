//! Brute-force Spearman reference: quadratic ranking, floating-point
//! Pearson on the ranks and plain lexicographic permutation enumeration.

/// Average rank by counting: 1 + #smaller + (#equal - 1) / 2.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn centre(r: &[f64]) -> Vec<f64> {
    let mean = (r.len() as f64 + 1.0) / 2.0;
    r.iter().map(|v| v - mean).collect()
}

fn cross(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `None` when either sequence has no rank variance.
pub fn rho(x: &[f64], y: &[f64]) -> Option<f64> {
    let a = centre(&ranks(x));
    let b = centre(&ranks(y));
    let (xx, yy) = (cross(&a, &a), cross(&b, &b));
    if xx == 0.0 || yy == 0.0 {
        return None;
    }
    Some(cross(&a, &b) / (xx * yy).sqrt())
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (0..p.len().saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..p.len()).rev().find(|&j| p[j] > p[i]).unwrap();
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Two-sided permutation p-value: share of all orderings of `y` whose
/// rank cross sum is at least as large in magnitude as the observed one.
pub fn permutation_p(x: &[f64], y: &[f64]) -> f64 {
    let a = centre(&ranks(x));
    let b = centre(&ranks(y));
    let observed = cross(&a, &b).abs();
    let mut idx: Vec<usize> = (0..b.len()).collect();
    let (mut hits, mut total) = (0u64, 0u64);
    loop {
        let c: f64 = a.iter().zip(&idx).map(|(x, &i)| x * b[i]).sum();
        total += 1;
        if c.abs() >= observed {
            hits += 1;
        }
        if !next_permutation(&mut idx) {
            break;
        }
    }
    hits as f64 / total as f64
}
