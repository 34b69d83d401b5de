//! Square MQAM constellations and their phase-noise geometry.
//!
//! Points live on the unnormalized odd-integer lattice (`±1±1i` for 4QAM,
//! `{±1,±3}²` for 16QAM). Besides Gray labelling this module provides the
//! first-order phase-noise sensitivity of a symbol, the overlap probability
//! of two phase-rotated symbols, and the partition of the constellation into
//! two-symbol pools whose members are pi apart in phase.

use std::f64::consts::PI;

use serde::Serialize;

use crate::{stats, Complex, Error, Result};

/// Phase at which sensitivity reports are evaluated unless told otherwise.
pub const DEFAULT_PROBE_PHASE: f64 = 0.1;

const PHASE_TOL: f64 = 1e-12;

/// An MQAM constellation indexed by bit label.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    /// `points[label]` is the symbol carrying `label`.
    points: Vec<Complex>,
    symbol_energy: f64,
}

impl Constellation {
    /// Wraps an arbitrary point set; point `i` carries label `i`.
    ///
    /// Only used for experiments and for exercising the pool construction
    /// error path; `build_mqam` is the normal constructor.
    pub fn from_points(points: Vec<Complex>) -> Result<Self> {
        let order = points.len();
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::UnsupportedOrder(order));
        }
        let symbol_energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
        Ok(Self {
            order,
            points,
            symbol_energy,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Bits per symbol.
    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// Points in label order.
    pub fn points(&self) -> &[Complex] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex {
        self.points[label]
    }

    /// Mean symbol energy `E|x|^2`.
    pub fn symbol_energy(&self) -> f64 {
        self.symbol_energy
    }

    /// Label of the point equal to `x`, if any.
    pub fn label_of(&self, x: Complex) -> Option<usize> {
        self.points.iter().position(|&p| p == x)
    }
}

/// Builds square MQAM with Gray labelling on each axis.
///
/// The high half of the label selects the in-phase level and the low half
/// the quadrature level; levels are `2i - (L - 1)` for `i = gray^{-1}(g)`.
pub fn build_mqam(order: usize) -> Result<Constellation> {
    let m = order.trailing_zeros() as usize;
    if order < 4 || !order.is_power_of_two() || m % 2 != 0 {
        return Err(Error::UnsupportedOrder(order));
    }
    let half = m / 2;
    let levels = 1usize << half;
    let level = |gray: usize| -> f64 {
        let mut idx = gray;
        let mut shift = gray >> 1;
        while shift != 0 {
            idx ^= shift;
            shift >>= 1;
        }
        2.0 * idx as f64 - (levels as f64 - 1.0)
    };
    let points = (0..order)
        .map(|label| {
            let gi = label >> half;
            let gq = label & (levels - 1);
            Complex::new(level(gi), level(gq))
        })
        .collect();
    Constellation::from_points(points)
}

/// Relative first-order perturbation of a symbol's real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    /// |relative change of the real part|, percent.
    pub eps_re: f64,
    /// |relative change of the imaginary part|, percent.
    pub eps_im: f64,
}

/// First-order model of a symbol rotated by a small phase `phi`:
/// `|x|(cos t - phi sin t) + j|x|(sin t + phi cos t)`.
pub fn first_order_rotation(x: Complex, phi: f64) -> Complex {
    let (r, t) = x.to_polar();
    Complex::new(
        r * (t.cos() - phi * t.sin()),
        r * (t.sin() + phi * t.cos()),
    )
}

/// Relative perturbation (percent) of the real and imaginary parts of `x`
/// under the first-order phase-noise model at phase `phi`.
pub fn pn_sensitivity(x: Complex, phi: f64) -> Result<SensitivityReport> {
    if x.re == 0.0 || x.im == 0.0 {
        return Err(Error::Domain(format!(
            "sensitivity undefined for symbol {x} with a zero component"
        )));
    }
    let perturbed = first_order_rotation(x, phi);
    Ok(SensitivityReport {
        eps_re: ((perturbed.re - x.re) / x.re * 100.0).abs(),
        eps_im: ((perturbed.im - x.im) / x.im * 100.0).abs(),
    })
}

/// Phase-noise sensitivity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sensitivity {
    /// Diagonal symbol (|Re| = |Im|), balanced perturbation.
    Robust,
    /// Off-diagonal symbol, unbalanced perturbation.
    Sensitive,
    /// Single-amplitude constellation where every symbol is equally robust.
    Uniform,
}

impl Sensitivity {
    /// One-letter tag used in tables.
    pub fn tag(self) -> &'static str {
        match self {
            Sensitivity::Robust => "R",
            Sensitivity::Sensitive => "S",
            Sensitivity::Uniform => "U",
        }
    }
}

/// Result of [`classify_symbols`].
#[derive(Debug, Clone, PartialEq)]
pub enum SymbolClasses {
    Uniform,
    Partition {
        /// Labels of robust symbols.
        robust: Vec<usize>,
        /// Labels of sensitive symbols.
        sensitive: Vec<usize>,
    },
}

/// Sensitivity class of a single point.
pub fn point_sensitivity(x: Complex) -> Sensitivity {
    if (x.re.abs() - x.im.abs()).abs() <= PHASE_TOL * x.norm().max(1.0) {
        Sensitivity::Robust
    } else {
        Sensitivity::Sensitive
    }
}

/// Splits a constellation into robust and sensitive symbols; returns
/// `Uniform` when every point has the same amplitude and all are robust.
pub fn classify_symbols(c: &Constellation) -> SymbolClasses {
    let (robust, sensitive): (Vec<usize>, Vec<usize>) =
        (0..c.order()).partition(|&i| point_sensitivity(c.point(i)) == Sensitivity::Robust);
    let r0 = c.point(0).norm();
    let single_amplitude = c
        .points()
        .iter()
        .all(|p| (p.norm() - r0).abs() <= PHASE_TOL * r0.max(1.0));
    if sensitive.is_empty() && single_amplitude {
        SymbolClasses::Uniform
    } else {
        SymbolClasses::Partition { robust, sensitive }
    }
}

/// Absolute phase difference wrapped to `[0, pi]`.
pub fn angular_separation(theta1: f64, theta2: f64) -> f64 {
    let d = (theta1 - theta2).rem_euclid(2.0 * PI);
    if d > PI {
        2.0 * PI - d
    } else {
        d
    }
}

/// Closed-form overlap of two Gaussian phase densities with common variance:
/// `exp(-dtheta^2 / (4 var)) / (2 sqrt(pi var))`.
pub fn overlap_probability(theta1: f64, theta2: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!(
            "overlap needs a positive phase variance, got {variance}"
        )));
    }
    let d = angular_separation(theta1, theta2);
    Ok((-d * d / (4.0 * variance)).exp() / (2.0 * (PI * variance).sqrt()))
}

/// The same overlap by adaptive quadrature of the product of the two
/// densities over +-12 sigma around their midpoint, to relative accuracy
/// `rel_tol`.
pub fn overlap_probability_numeric(theta1: f64, theta2: f64, variance: f64, rel_tol: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!(
            "overlap needs a positive phase variance, got {variance}"
        )));
    }
    let d = angular_separation(theta1, theta2);
    let sigma = variance.sqrt();
    let norm = 1.0 / (2.0 * PI * variance).sqrt();
    let density = |phi: f64, mean: f64| norm * (-(phi - mean).powi(2) / (2.0 * variance)).exp();
    let mid = d / 2.0;
    stats::integrate(
        |phi| density(phi, 0.0) * density(phi, d),
        mid - 12.0 * sigma,
        mid + 12.0 * sigma,
        0.0,
        rel_tol,
    )
}

/// Two constellation points with pi phase separation and a common
/// sensitivity class.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    /// Zero-based pool index; its binary form is the MQAM bit prefix.
    pub index: usize,
    /// The within-pool selector bit `0` picks `symbols[0]`.
    pub symbols: [Complex; 2],
    pub sensitivity: Sensitivity,
}

impl Pool {
    /// Phase separation of the two members, wrapped to `[0, pi]`.
    pub fn separation(&self) -> f64 {
        angular_separation(self.symbols[0].arg(), self.symbols[1].arg())
    }

    pub fn euclidean_distance(&self) -> f64 {
        (self.symbols[0] - self.symbols[1]).norm()
    }
}

/// Printed pool order for the two tabulated constellations, as
/// `(first symbol, second symbol)` lattice coordinates.
const LAYOUT_4QAM: [[(i32, i32); 2]; 2] = [[(-1, 1), (1, -1)], [(1, 1), (-1, -1)]];
const LAYOUT_16QAM: [[(i32, i32); 2]; 8] = [
    [(3, 3), (-1, -1)],
    [(-3, -3), (1, 1)],
    [(-3, 3), (1, -1)],
    [(-1, 1), (3, -3)],
    [(-1, 3), (1, -3)],
    [(1, 3), (-1, -3)],
    [(3, 1), (-3, -1)],
    [(-3, 1), (3, -1)],
];

fn lattice(p: (i32, i32)) -> Complex {
    Complex::new(p.0 as f64, p.1 as f64)
}

/// Builds the `M/2` symbol pools.
///
/// Within each sensitivity class, points are grouped by the line through
/// the origin they lie on. The points on one side of the origin are matched
/// to those on the other side so that the smallest within-pool Euclidean
/// distance is as large as possible (ties: larger total distance). Each
/// resulting pair is pi apart and homogeneous in sensitivity. The pools of
/// 4QAM and 16QAM are then listed in the tabulated order; other orders are
/// listed robust-first by line angle.
pub fn build_pools(c: &Constellation) -> Result<Vec<Pool>> {
    let groups: Vec<(Sensitivity, Vec<usize>)> = match classify_symbols(c) {
        SymbolClasses::Uniform => vec![(Sensitivity::Uniform, (0..c.order()).collect())],
        SymbolClasses::Partition { robust, sensitive } => vec![
            (Sensitivity::Robust, robust),
            (Sensitivity::Sensitive, sensitive),
        ],
    };

    let mut pairs: Vec<(Sensitivity, f64, [Complex; 2])> = Vec::with_capacity(c.order() / 2);
    for (class, members) in groups {
        for (angle, positive, negative) in lines_through_origin(c, &members)? {
            for (p, n) in max_min_matching(&positive, &negative)? {
                pairs.push((class, angle, [p, n]));
            }
        }
    }

    let layout: Option<&[[(i32, i32); 2]]> = match c.order() {
        4 if is_lattice_mqam(c) => Some(&LAYOUT_4QAM),
        16 if is_lattice_mqam(c) => Some(&LAYOUT_16QAM),
        _ => None,
    };

    let ordered: Vec<(Sensitivity, [Complex; 2])> = match layout {
        Some(layout) => layout
            .iter()
            .map(|&[a, b]| {
                let (a, b) = (lattice(a), lattice(b));
                pairs
                    .iter()
                    .find(|(_, _, s)| (s[0] == a && s[1] == b) || (s[0] == b && s[1] == a))
                    .map(|&(class, _, _)| (class, [a, b]))
                    .ok_or_else(|| {
                        Error::PoolConstruction(format!(
                            "pairing did not produce tabulated pool [{a}, {b}]"
                        ))
                    })
            })
            .collect::<Result<_>>()?,
        None => {
            let rank = |s: Sensitivity| match s {
                Sensitivity::Robust | Sensitivity::Uniform => 0,
                Sensitivity::Sensitive => 1,
            };
            pairs.sort_by(|x, y| {
                rank(x.0)
                    .cmp(&rank(y.0))
                    .then(x.1.total_cmp(&y.1))
                    .then(y.2[0].norm().total_cmp(&x.2[0].norm()))
            });
            pairs.into_iter().map(|(class, _, s)| (class, s)).collect()
        }
    };

    Ok(ordered
        .into_iter()
        .enumerate()
        .map(|(index, (sensitivity, symbols))| Pool {
            index,
            symbols,
            sensitivity,
        })
        .collect())
}

fn is_lattice_mqam(c: &Constellation) -> bool {
    build_mqam(c.order())
        .map(|reference| {
            let mut a: Vec<(i64, i64)> = c.points().iter().map(|p| (p.re as i64, p.im as i64)).collect();
            let mut b: Vec<(i64, i64)> =
                reference.points().iter().map(|p| (p.re as i64, p.im as i64)).collect();
            a.sort();
            b.sort();
            a == b && c.points().iter().all(|p| p.re.fract() == 0.0 && p.im.fract() == 0.0)
        })
        .unwrap_or(false)
}

type Line = (f64, Vec<Complex>, Vec<Complex>);

/// Groups the given labels by line through the origin. Returns, per line,
/// its direction angle in `(-pi/2, pi/2]` and the points on either side.
fn lines_through_origin(c: &Constellation, members: &[usize]) -> Result<Vec<Line>> {
    let mut lines: Vec<Line> = Vec::new();
    for &label in members {
        let p = c.point(label);
        if p.norm() == 0.0 {
            return Err(Error::PoolConstruction(
                "a point at the origin has no phase".into(),
            ));
        }
        let theta = p.arg();
        let mut dir = theta;
        if dir <= -PI / 2.0 {
            dir += PI;
        } else if dir > PI / 2.0 {
            dir -= PI;
        }
        let positive = angular_separation(theta, dir) < PI / 2.0;
        let line = match lines
            .iter_mut()
            .find(|(a, _, _)| angular_separation(2.0 * *a, 2.0 * dir) <= 2.0 * PHASE_TOL)
        {
            Some(line) => line,
            None => {
                lines.push((dir, Vec::new(), Vec::new()));
                lines.last_mut().expect("just pushed")
            }
        };
        if positive {
            line.1.push(p);
        } else {
            line.2.push(p);
        }
    }
    for (angle, pos, neg) in &lines {
        if pos.len() != neg.len() {
            return Err(Error::PoolConstruction(format!(
                "line at {:.4} rad has {} points on one side and {} on the other; \
                 pi-separated pairs with a common sensitivity class are impossible",
                angle,
                pos.len(),
                neg.len()
            )));
        }
    }
    Ok(lines)
}

/// Pairs `positive[i]` with `negative[perm[i]]`, maximizing the minimum pair
/// distance and then the total distance, by exhaustive search.
fn max_min_matching(positive: &[Complex], negative: &[Complex]) -> Result<Vec<(Complex, Complex)>> {
    let n = positive.len();
    if n > 8 {
        return Err(Error::PoolConstruction(format!(
            "{n} points on one ray exceeds the exhaustive matching limit"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    loop {
        let dists: Vec<f64> = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| (positive[i] - negative[j]).norm())
            .collect();
        let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
        let sum: f64 = dists.iter().sum();
        let better = match &best {
            None => true,
            Some((bm, bs, _)) => min > bm + 1e-12 || ((min - bm).abs() <= 1e-12 && sum > bs + 1e-12),
        };
        if better {
            best = Some((min, sum, perm.clone()));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (_, _, perm) = best.unwrap_or((0.0, 0.0, Vec::new()));
    Ok(perm
        .iter()
        .enumerate()
        .map(|(i, &j)| (positive[i], negative[j]))
        .collect())
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
