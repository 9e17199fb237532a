use std::f64::consts::PI;

/// Crossover between the power series and the Hankel asymptotic expansion.
const SERIES_LIMIT: f64 = 12.0;

/// Bessel function of the first kind, order one.
pub fn bessel_j1(x: f64) -> f64 {
    if x < 0.0 {
        return -bessel_j1(-x);
    }
    if x <= SERIES_LIMIT {
        series(x)
    } else {
        asymptotic(x)
    }
}

/// Σ (−1)^m / (m!(m+1)!) · (x/2)^(2m+1), summed until the increment drops
/// below 1e-16 relative to the running total.
fn series(x: f64) -> f64 {
    let half = x / 2.0;
    let q = half * half;
    let mut term = half;
    let mut sum = term;
    let mut m = 0.0;
    loop {
        m += 1.0;
        term *= -q / (m * (m + 1.0));
        sum += term;
        if term.abs() < 1e-16 * sum.abs().max(1e-300) || term == 0.0 {
            return sum;
        }
    }
}

/// Hankel expansion J₁(x) ≈ √(2/πx)·(P cos χ − Q sin χ), χ = x − 3π/4.
/// Both series are truncated at their smallest term.
fn asymptotic(x: f64) -> f64 {
    const MU: f64 = 4.0; // 4ν² for ν = 1
    let eight_x = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    // term_k = Π_{j=1..k} (μ − (2j−1)²) / (k! (8x)^k), alternating into P (even k) and Q (odd k)
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = term * (MU - odd * odd) / (k as f64 * eight_x);
        if next.abs() >= last {
            break;
        }
        last = next.abs();
        term = next;
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - 0.75 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
