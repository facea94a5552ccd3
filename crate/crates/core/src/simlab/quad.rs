// 8-point Gauss-Legendre rule on [-1, 1]; exact for polynomials of degree 15.
const NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Integral of `f` over `[0, 1]` on panels split at `breaks` and refined to
/// width at most `max_width`.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], max_width: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|b| *b > 0.0 && *b < 1.0).collect();
    pts.push(0.0);
    pts.push(1.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pieces = ((b - a) / max_width).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        for k in 0..pieces {
            let lo = a + k as f64 * h;
            let mid = lo + 0.5 * h;
            let half = 0.5 * h;
            let mut s = 0.0;
            for (x, wt) in NODES.iter().zip(&WEIGHTS) {
                s += wt * (f(mid - half * x) + f(mid + half * x));
            }
            total += s * half;
        }
    }
    total
}
