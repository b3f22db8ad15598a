//! Deterministic summation helpers.

const LEAF: usize = 64;

/// Pairwise (tree) sum with a fixed split pattern.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        let mut acc = [0.0f64; 4];
        let mut chunks = xs.chunks_exact(4);
        for c in &mut chunks {
            acc[0] += c[0];
            acc[1] += c[1];
            acc[2] += c[2];
            acc[3] += c[3];
        }
        let tail: f64 = chunks.remainder().iter().sum();
        return (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(i)` over `0..n` without materializing the terms.
pub fn pairwise_sum_by<F: Fn(usize) -> f64 + Copy>(lo: usize, hi: usize, f: F) -> f64 {
    let n = hi - lo;
    if n <= LEAF {
        let mut acc = [0.0f64; 4];
        let mut i = lo;
        while i + 4 <= hi {
            acc[0] += f(i);
            acc[1] += f(i + 1);
            acc[2] += f(i + 2);
            acc[3] += f(i + 3);
            i += 4;
        }
        let mut tail = 0.0;
        while i < hi {
            tail += f(i);
            i += 1;
        }
        return (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
    }
    let mid = lo + n / 2;
    pairwise_sum_by(lo, mid, f) + pairwise_sum_by(mid, hi, f)
}

/// Combine equally shaped partial vectors with a fixed balanced tree.
pub fn pairwise_merge(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    if parts.is_empty() {
        return Vec::new();
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap()
}

/// Ordinary least squares line `y = intercept + slope·x` with its R².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { ((sxy * sxy) / (sxx * syy)).min(1.0) };
    Some(LineFit { slope, intercept, r_squared })
}
