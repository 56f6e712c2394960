//! Reference oracles for the specadapt test suites.
//!
//! Nothing here depends on the library under test. Each routine takes the
//! slow, obvious route: adaptive quadrature instead of continued fractions,
//! cell-by-cell loops instead of slice operations.

/// 7-point Gauss / 15-point Kronrod nodes on [-1, 1] (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

#[derive(PartialEq)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss-Kronrod integral of `f` over `[a, b]`.
///
/// Repeatedly bisects the interval with the largest error estimate until the
/// summed estimate drops below `rel_tol * |integral|` or 20 000 pieces exist.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (value, err) = gauss_kronrod(f, a, b);
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Piece { a, b, value, err });
    let (mut total, mut total_err) = (value, err);
    let mut pieces = 1;
    while total_err > rel_tol * total.abs() && pieces < 20_000 {
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (lv, le) = gauss_kronrod(f, worst.a, mid);
        let (rv, re) = gauss_kronrod(f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: lv, err: le });
        heap.push(Piece { a: mid, b: worst.b, value: rv, err: re });
        pieces += 1;
    }
    // re-sum to shed accumulated cancellation in the running total
    heap.iter().map(|p| p.value).sum()
}

/// `int_0^y t^(alpha-1) (1-t)^(beta-1) dt * exp(-log_scale)` for `y <= 1/2`.
fn left_tail(y: f64, alpha: f64, beta: f64, log_scale: f64) -> f64 {
    if alpha >= 1.0 {
        let f = |t: f64| {
            if t <= 0.0 {
                if alpha == 1.0 { (-log_scale).exp() } else { 0.0 }
            } else {
                ((alpha - 1.0) * t.ln() + (beta - 1.0) * (-t).ln_1p() - log_scale).exp()
            }
        };
        integrate(&f, 0.0, y, 1e-14)
    } else {
        // u = t^alpha removes the endpoint singularity
        let f = |u: f64| {
            let t = u.powf(1.0 / alpha);
            ((beta - 1.0) * (-t).ln_1p() - log_scale).exp() / alpha
        };
        integrate(&f, 0.0, y.powf(alpha), 1e-14)
    }
}

/// Same scaled integral over `[y, 1]` for `y >= 1/2`, via `t -> 1 - t`.
fn right_tail(y: f64, alpha: f64, beta: f64, log_scale: f64) -> f64 {
    left_tail(1.0 - y, beta, alpha, log_scale)
}

/// Regularized incomplete beta by direct quadrature of the Beta density.
///
/// Panics outside the domain; this is test-only code.
pub fn ibf_quadrature(x: f64, alpha: f64, beta: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "x = {x} outside [0, 1]");
    assert!(alpha > 0.0 && beta > 0.0, "shape ({alpha}, {beta}) not positive");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    // divide the density by its peak so large shapes do not underflow
    let log_scale = if alpha > 1.0 && beta > 1.0 {
        let mode = (alpha - 1.0) / (alpha + beta - 2.0);
        (alpha - 1.0) * mode.ln() + (beta - 1.0) * (-mode).ln_1p()
    } else {
        0.0
    };
    let complete = left_tail(0.5, alpha, beta, log_scale) + right_tail(0.5, alpha, beta, log_scale);
    if x <= 0.5 {
        left_tail(x, alpha, beta, log_scale) / complete
    } else {
        1.0 - right_tail(x, alpha, beta, log_scale) / complete
    }
}

/// Intermediates of the clip / ratio / min-max loss pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridReference {
    pub mean: f64,
    pub var: f64,
    pub clipped: Vec<f64>,
    pub meannorm: Vec<f64>,
    pub minmax: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Straight-line clip -> ratio -> min-max -> `1 - cdf` pipeline.
///
/// `use_std` switches the clipping band from variance to standard deviation.
pub fn hybrid_reference(losses: &[f64], use_std: bool, cdf: impl Fn(f64) -> f64) -> HybridReference {
    let n = losses.len() as f64;
    let mut sum = 0.0;
    for &l in losses {
        sum += l;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for &l in losses {
        sq += (l - mean) * (l - mean);
    }
    let var = sq / n;
    let spread = if use_std { var.sqrt() } else { var };
    let lower = mean - 2.0 * spread;
    let upper = mean + 2.0 * spread;

    let mut clipped = Vec::new();
    for &l in losses {
        let c = if l < lower {
            lower
        } else if l > upper {
            upper
        } else {
            l
        };
        clipped.push(c);
    }
    let mut csum = 0.0;
    for &c in &clipped {
        csum += c;
    }
    let cmean = csum / n;

    let mut meannorm = Vec::new();
    for &c in &clipped {
        meannorm.push(if c + cmean == 0.0 { 0.0 } else { c / (c + cmean) });
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &meannorm {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    let mut minmax = Vec::new();
    for &v in &meannorm {
        minmax.push(if hi == lo { 0.5 } else { (v - lo) / (hi - lo) });
    }
    let mut lambda = Vec::new();
    for &m in &minmax {
        lambda.push(1.0 - cdf(m));
    }
    HybridReference {
        mean,
        var,
        clipped,
        meannorm,
        minmax,
        lambda,
    }
}

/// Operator event with inclusive mask bounds, mirrored from the library's plan format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefEvent {
    TimeMask { t1: usize, t2: usize },
    FreqMask { f1: usize, f2: usize },
    TimeSub { dest_t: usize, src_t: usize, width: usize },
}

/// Cell-by-cell application of `events` to a row-major `frames x bins` grid.
pub fn naive_apply(frames: usize, bins: usize, values: &[f32], events: &[RefEvent]) -> Vec<f32> {
    let mut grid: Vec<Vec<f32>> = (0..frames).map(|t| values[t * bins..(t + 1) * bins].to_vec()).collect();
    for ev in events {
        match *ev {
            RefEvent::TimeMask { t1, t2 } => {
                for row in grid.iter_mut().take(t2 + 1).skip(t1) {
                    for cell in row.iter_mut() {
                        *cell = 0.0;
                    }
                }
            }
            RefEvent::FreqMask { f1, f2 } => {
                for row in grid.iter_mut() {
                    for cell in row.iter_mut().take(f2 + 1).skip(f1) {
                        *cell = 0.0;
                    }
                }
            }
            RefEvent::TimeSub { dest_t, src_t, width } => {
                let snapshot = grid.clone();
                #[allow(clippy::manual_memcpy)] // kept as an explicit loop on purpose
                for k in 0..width {
                    grid[dest_t + k] = snapshot[src_t + k].clone();
                }
            }
        }
    }
    grid.into_iter().flatten().collect()
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("no NaN"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; NaN when either input is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_matches_polynomial_closed_form() {
        // alpha = 2, beta = 3 integrates to 6x^2 - 8x^3 + 3x^4
        for &x in &[0.05f64, 0.3, 0.5, 0.71, 0.99] {
            let exact = 6.0 * x * x - 8.0 * x * x * x + 3.0 * x * x * x * x;
            assert!((ibf_quadrature(x, 2.0, 3.0) - exact).abs() < 1e-13, "x = {x}");
        }
        assert!((ibf_quadrature(0.3, 2.0, 3.0) - 0.3483).abs() < 1e-12);
    }

    #[test]
    fn quadrature_handles_endpoint_singularities() {
        // alpha = 1/2, beta = 1/2 is the arcsine law: (2/pi) asin(sqrt x)
        for &x in &[1e-6f64, 0.1, 0.5, 0.9, 1.0 - 1e-6] {
            let exact = 2.0 / std::f64::consts::PI * x.sqrt().asin();
            assert!((ibf_quadrature(x, 0.5, 0.5) - exact).abs() < 1e-11, "x = {x}");
        }
        assert_eq!(ibf_quadrature(0.0, 0.2, 7.0), 0.0);
        assert_eq!(ibf_quadrature(1.0, 0.2, 7.0), 1.0);
    }

    #[test]
    fn naive_apply_substitution() {
        let values: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let out = naive_apply(6, 2, &values, &[RefEvent::TimeSub { dest_t: 3, src_t: 0, width: 2 }]);
        assert_eq!(out, vec![0., 1., 2., 3., 4., 5., 0., 1., 2., 3., 10., 11.]);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1., 2., 3.], &[10., 20., 30.]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1., 2., 3.], &[3., 2., 1.]) + 1.0).abs() < 1e-15);
        assert_eq!(average_ranks(&[5., 1., 5.]), vec![2.5, 1.0, 2.5]);
    }
}
