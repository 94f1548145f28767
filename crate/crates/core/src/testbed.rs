//! Test functions, space-filling designs and accuracy metrics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One-dimensional non-stationary test function on `[0, 1]`:
/// `sin(30 (x - 0.9)^4) cos(2 (x - 0.9)) + (x - 0.9) / 2`.
pub fn bjx(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain(format!("bjx input {x} outside [0, 1]")));
    }
    let t = x - 0.9;
    Ok(libm::sin(30.0 * t * t * t * t) * libm::cos(2.0 * t) + 0.5 * t)
}

/// Input ranges of [`wing_weight`]: wing area, fuel weight, aspect ratio,
/// sweep (degrees), dynamic pressure, taper ratio, thickness-to-chord,
/// ultimate load factor, design gross weight, paint weight.
pub const WING_WEIGHT_BOUNDS: [(f64, f64); 10] = [
    (150.0, 200.0),
    (220.0, 300.0),
    (6.0, 10.0),
    (-10.0, 10.0),
    (16.0, 45.0),
    (0.5, 1.0),
    (0.08, 0.18),
    (2.5, 6.0),
    (1700.0, 2500.0),
    (0.025, 0.08),
];

/// Light-aircraft wing weight (pounds). The sweep angle is in degrees.
pub fn wing_weight(x: &[f64]) -> Result<f64> {
    if x.len() != 10 {
        return Err(Error::DimensionMismatch(format!("wing weight takes 10 inputs, got {}", x.len())));
    }
    for (j, (v, (lo, hi))) in x.iter().zip(WING_WEIGHT_BOUNDS).enumerate() {
        if !(*v >= lo && *v <= hi) {
            return Err(Error::OutOfDomain(format!("wing weight input {} = {v} outside [{lo}, {hi}]", j + 1)));
        }
    }
    let [sw, wfw, a, sweep, q, lambda, tc, nz, wdg, wp] = [x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9]];
    let c = libm::cos(sweep * core::f64::consts::PI / 180.0);
    Ok(0.036
        * libm::pow(sw, 0.758)
        * libm::pow(wfw, 0.0035)
        * libm::pow(a / (c * c), 0.6)
        * libm::pow(q, 0.006)
        * libm::pow(lambda, 0.04)
        * libm::pow(100.0 * tc / c, -0.3)
        * libm::pow(nz * wdg, 0.49)
        + sw * wp)
}

/// A named deterministic test function with its input box.
#[derive(Debug, Clone, Copy)]
pub struct TestFunction {
    pub name: &'static str,
    pub bounds: &'static [(f64, f64)],
    eval: fn(&[f64]) -> Result<f64>,
}

fn bjx_vec(x: &[f64]) -> Result<f64> {
    match x {
        [v] => bjx(*v),
        _ => Err(Error::DimensionMismatch(format!("bjx takes 1 input, got {}", x.len()))),
    }
}

impl TestFunction {
    pub const BJX: TestFunction = TestFunction { name: "bjx", bounds: &[(0.0, 1.0)], eval: bjx_vec };
    pub const WING_WEIGHT: TestFunction =
        TestFunction { name: "wingweight", bounds: &WING_WEIGHT_BOUNDS, eval: wing_weight };

    pub fn by_name(name: &str) -> Result<TestFunction> {
        match name {
            "bjx" => Ok(Self::BJX),
            "wingweight" | "wing_weight" => Ok(Self::WING_WEIGHT),
            _ => Err(Error::InvalidParameter(format!("unknown test function {name:?} (expected bjx or wingweight)"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        (self.eval)(x)
    }

    /// Maps unit-cube points into the input box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.bounds).map(|(v, (lo, hi))| lo + v * (hi - lo)).collect()
    }
}

/// `n` equispaced points from 0 to 1 inclusive.
pub fn equispaced(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

fn min_sq_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for k in 0..i {
            let s: f64 = points[i].iter().zip(&points[k]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(s);
        }
    }
    best
}

/// Smallest Euclidean distance between two design points.
pub fn min_distance(points: &[Vec<f64>]) -> f64 {
    libm::sqrt(min_sq_distance(points))
}

/// A random Latin hypercube: one point per stratum `[(i-1)/n, i/n)` in
/// every coordinate, uniformly placed within the stratum.
pub fn random_lhd<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            let u: f64 = rng.random();
            p[j] = ((perm[i] as f64 + u) / n as f64).min(libm::nextafter((perm[i] + 1) as f64 / n as f64, 0.0));
        }
    }
    pts
}

/// Best of `n_candidates` random Latin hypercubes by minimum interpoint
/// distance; ties keep the earlier candidate.
pub fn lhs_maximin(n: usize, d: usize, seed: u64, n_candidates: usize) -> Result<Vec<Vec<f64>>> {
    if n < 2 || d == 0 || n_candidates == 0 {
        return Err(Error::InvalidParameter(format!(
            "need n >= 2, d >= 1, candidates >= 1 (got {n}, {d}, {n_candidates})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = random_lhd(n, d, &mut rng);
    let mut best_d = min_sq_distance(&best);
    for _ in 1..n_candidates {
        let c = random_lhd(n, d, &mut rng);
        let v = min_sq_distance(&c);
        if v > best_d {
            best = c;
            best_d = v;
        }
    }
    Ok(best)
}

/// `(s, a, m_1..m_s)` for dimensions 2 onward (Joe and Kuo, new-joe-kuo-6.21201).
const SOBOL_DIRECTIONS: [(u32, u32, &[u32]); 15] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
];

/// Largest dimension supported by [`sobol_points`].
pub const SOBOL_MAX_DIM: usize = SOBOL_DIRECTIONS.len() + 1;

const SOBOL_BITS: usize = 32;

fn sobol_directions(dim: usize) -> [u32; SOBOL_BITS] {
    let mut v = [0u32; SOBOL_BITS];
    if dim == 0 {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = 1u32 << (31 - i);
        }
        return v;
    }
    let (s, a, m) = SOBOL_DIRECTIONS[dim - 1];
    let s = s as usize;
    for i in 0..s.min(SOBOL_BITS) {
        v[i] = m[i] << (31 - i);
    }
    for i in s..SOBOL_BITS {
        let mut x = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                x ^= v[i - k];
            }
        }
        v[i] = x;
    }
    v
}

/// First `n` points of the unscrambled Sobol' sequence in `[0,1)^d`,
/// starting with the origin.
pub fn sobol_points(n: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    if d == 0 || d > SOBOL_MAX_DIM {
        return Err(Error::InvalidParameter(format!("Sobol dimension must be 1..={SOBOL_MAX_DIM}, got {d}")));
    }
    if n as u64 > 1u64 << SOBOL_BITS {
        return Err(Error::InvalidParameter(format!("at most 2^{SOBOL_BITS} Sobol points")));
    }
    let dirs: Vec<[u32; SOBOL_BITS]> = (0..d).map(sobol_directions).collect();
    let mut x = vec![0u32; d];
    let mut out = Vec::with_capacity(n);
    let scale = 1.0 / 4_294_967_296.0;
    for i in 0..n {
        if i > 0 {
            let c = (i - 1).trailing_ones() as usize;
            for j in 0..d {
                x[j] ^= dirs[j][c];
            }
        }
        out.push(x.iter().map(|v| *v as f64 * scale).collect());
    }
    Ok(out)
}

/// Centered L2 discrepancy of a point set in the unit cube.
pub fn centered_l2_discrepancy(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let d = points.first().map_or(0, Vec::len) as i32;
    let mut t1 = 0.0;
    for p in points {
        let mut prod = 1.0;
        for &x in p {
            let z = libm::fabs(x - 0.5);
            prod *= 1.0 + 0.5 * z - 0.5 * z * z;
        }
        t1 += prod;
    }
    let mut t2 = 0.0;
    for p in points {
        for q in points {
            let mut prod = 1.0;
            for (&x, &y) in p.iter().zip(q) {
                let (zx, zy) = (libm::fabs(x - 0.5), libm::fabs(y - 0.5));
                prod *= 1.0 + 0.5 * zx + 0.5 * zy - 0.5 * libm::fabs(x - y);
            }
            t2 += prod;
        }
    }
    let v = libm::pow(13.0 / 12.0, f64::from(d)) - 2.0 / n * t1 + t2 / (n * n);
    libm::sqrt(v.max(0.0))
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions for {} truths", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter("no predictions".into()));
    }
    Ok(())
}

/// Root mean squared prediction error.
pub fn rmspe(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(libm::sqrt(ss / pred.len() as f64))
}

/// `|pred - truth| / |truth|` per point.
pub fn relative_errors(pred: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    check_pair(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| libm::fabs(p - t) / libm::fabs(*t)).collect())
}

/// Five-number style summary of the values falling in one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSummary {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile with linear interpolation at position `p (n - 1)` of sorted data.
fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = p * (s.len() - 1) as f64;
    let i = libm::floor(h) as usize;
    if i + 1 >= s.len() {
        return s[s.len() - 1];
    }
    s[i] + (h - i as f64) * (s[i + 1] - s[i])
}

/// Splits `inputs` into `n_bins` equal-width bins over their range (the last
/// bin closed on the right) and summarizes the matching `values`. Empty bins
/// report NaN statistics.
pub fn group_by_bins(inputs: &[f64], values: &[f64], n_bins: usize) -> Result<Vec<BinSummary>> {
    check_pair(inputs, values)?;
    if n_bins == 0 {
        return Err(Error::InvalidParameter("need at least one bin".into()));
    }
    let lo = inputs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = inputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for (x, v) in inputs.iter().zip(values) {
        let b = if width > 0.0 { (libm::floor((x - lo) / width) as usize).min(n_bins - 1) } else { 0 };
        groups[b].push(*v);
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(b, mut g)| {
            g.sort_by(f64::total_cmp);
            let blo = lo + b as f64 * width;
            let bhi = if b + 1 == n_bins { hi } else { lo + (b + 1) as f64 * width };
            if g.is_empty() {
                return BinSummary {
                    lo: blo,
                    hi: bhi,
                    count: 0,
                    min: f64::NAN,
                    q1: f64::NAN,
                    median: f64::NAN,
                    q3: f64::NAN,
                    max: f64::NAN,
                };
            }
            BinSummary {
                lo: blo,
                hi: bhi,
                count: g.len(),
                min: g[0],
                q1: quantile_sorted(&g, 0.25),
                median: quantile_sorted(&g, 0.5),
                q3: quantile_sorted(&g, 0.75),
                max: g[g.len() - 1],
            }
        })
        .collect())
}
