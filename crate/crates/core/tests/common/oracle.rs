//! Reference statistics that share no code with the library: densities from
//! a Lanczos log-gamma, integrated by composite Simpson's rule.

use std::f64::consts::PI;

fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn t_two_sided(t: f64, df: f64) -> f64 {
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * PI).sqrt();
    let pdf = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    1.0 - 2.0 * simpson(pdf, 0.0, t.abs(), 20_000)
}

/// Upper tail of F(1, d2), substituting x = u^2.
fn f1_upper(w: f64, d2: f64) -> f64 {
    let c = (ln_gamma((1.0 + d2) / 2.0) - ln_gamma(0.5) - ln_gamma(d2 / 2.0)).exp() / d2.sqrt();
    let g = |u: f64| 2.0 * c * (1.0 + u * u / d2).powf(-(1.0 + d2) / 2.0);
    1.0 - simpson(g, 0.0, w.sqrt(), 20_000)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// (t, df, two-sided p)
pub fn welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let v = |x: &[f64]| {
        let mu = mean(x);
        x.iter().map(|y| (y - mu) * (y - mu)).sum::<f64>() / (x.len() - 1) as f64
    };
    let (qa, qb) = (v(a) / a.len() as f64, v(b) / b.len() as f64);
    let t = (mean(a) - mean(b)) / (qa + qb).sqrt();
    let df = (qa + qb).powi(2) / (qa * qa / (a.len() - 1) as f64 + qb * qb / (b.len() - 1) as f64);
    (t, df, t_two_sided(t, df))
}

/// Mean-centred Levene for two groups: (W, p).
pub fn levene(a: &[f64], b: &[f64]) -> (f64, f64) {
    let za: Vec<f64> = a.iter().map(|x| (x - mean(a)).abs()).collect();
    let zb: Vec<f64> = b.iter().map(|x| (x - mean(b)).abs()).collect();
    let all: Vec<f64> = za.iter().chain(&zb).copied().collect();
    let n = all.len() as f64;
    let between =
        za.len() as f64 * (mean(&za) - mean(&all)).powi(2) + zb.len() as f64 * (mean(&zb) - mean(&all)).powi(2);
    let within: f64 = za.iter().map(|z| (z - mean(&za)).powi(2)).sum::<f64>()
        + zb.iter().map(|z| (z - mean(&zb)).powi(2)).sum::<f64>();
    let w = (n - 2.0) * between / within;
    (w, f1_upper(w, n - 2.0))
}
