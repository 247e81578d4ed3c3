//! Quadrature on triangles and on pairs of triangles.
//!
//! Points are stored as barycentric coordinates with respect to the
//! triangle vertices `(P0, P1, P2)`; weights are normalized so that
//! `∫_T f ≈ |T| Σ w_k f(x_k)` and `∫_T ∫_S f ≈ |T||S| Σ w_k f(x_k, y_k)`.
//!
//! The reference triangle is `{0 ≤ x̂2 ≤ x̂1 ≤ 1}` with vertices (0,0),
//! (1,0), (1,1), mapped by `x = P0 + x̂1 (P1 − P0) + x̂2 (P2 − P1)`.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Singular configuration of a pair of flat panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairKind {
    Coincident,
    /// Shared edge `P0 P1` in both panels.
    CommonEdge,
    /// Shared vertex `P0` in both panels.
    CommonVertex,
}

#[derive(Debug, Clone)]
pub struct PairRule {
    pub x: Vec<[f64; 3]>,
    pub y: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl PairRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = ((4 * i + 3) as f64 * PI / (4 * n + 2) as f64).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

fn reference_to_barycentric(x1: f64, x2: f64) -> [f64; 3] {
    [1.0 - x1, x1 - x2, x2]
}

/// Symmetric rule exact for polynomials of the given total degree.
/// Degrees up to 6 use Dunavant's rules; higher degrees fall back to a
/// collapsed Gauss product rule.
pub fn triangle_rule(degree: usize) -> TriangleRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut orbit3 = |a: f64, w: f64| {
        let b = 1.0 - 2.0 * a;
        for p in [[b, a, a], [a, b, a], [a, a, b]] {
            points.push(p);
            weights.push(w);
        }
    };
    match degree {
        0 | 1 => {
            return TriangleRule { points: vec![[1.0 / 3.0; 3]], weights: vec![1.0] };
        }
        2 => orbit3(1.0 / 6.0, 1.0 / 3.0),
        3 | 4 => {
            orbit3(0.445_948_490_915_965, 0.223_381_589_678_011);
            orbit3(0.091_576_213_509_771, 0.109_951_743_655_322);
        }
        5 => {
            orbit3(0.470_142_064_105_115, 0.132_394_152_788_506);
            orbit3(0.101_286_507_323_456, 0.125_939_180_544_827);
            points.push([1.0 / 3.0; 3]);
            weights.push(0.225);
        }
        6 => {
            orbit3(0.249_286_745_170_910, 0.116_786_275_726_379);
            orbit3(0.063_089_014_491_502, 0.050_844_906_370_207);
            let (a, b, c) = (0.053_145_049_844_817, 0.310_352_451_033_784, 0.636_502_499_121_399);
            for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                points.push(p);
                weights.push(0.082_851_075_618_374);
            }
        }
        _ => return collapsed_gauss((degree + 3) / 2),
    }
    TriangleRule { points, weights }
}

/// Duffy-collapsed `q × q` Gauss product rule, exact to degree `2q − 2`.
pub fn collapsed_gauss(q: usize) -> TriangleRule {
    let (t, w) = gauss_legendre(q);
    let mut points = Vec::with_capacity(q * q);
    let mut weights = Vec::with_capacity(q * q);
    for (&u, &wu) in t.iter().zip(&w) {
        for (&v, &wv) in t.iter().zip(&w) {
            points.push(reference_to_barycentric(u, u * v));
            // reference area is 1/2
            weights.push(2.0 * wu * wv * u);
        }
    }
    TriangleRule { points, weights }
}

/// Tensor product of two triangle rules, for well-separated panel pairs.
pub fn product_rule(a: &TriangleRule, b: &TriangleRule) -> PairRule {
    let n = a.len() * b.len();
    let mut rule = PairRule { x: Vec::with_capacity(n), y: Vec::with_capacity(n), weights: Vec::with_capacity(n) };
    for (pa, wa) in a.points.iter().zip(&a.weights) {
        for (pb, wb) in b.points.iter().zip(&b.weights) {
            rule.x.push(*pa);
            rule.y.push(*pb);
            rule.weights.push(wa * wb);
        }
    }
    rule
}

type Map = fn(f64, f64, f64, f64) -> ([f64; 2], [f64; 2], f64);

const COINCIDENT: [Map; 6] = [
    |k, a, b, c| ([k, k * (1.0 - a + a * b)], [k * (1.0 - a * b * c), k * (1.0 - a)], k * k * k * a * a * b),
    |k, a, b, c| ([k * (1.0 - a * b * c), k * (1.0 - a)], [k, k * (1.0 - a + a * b)], k * k * k * a * a * b),
    |k, a, b, c| ([k, k * a * (1.0 - b + b * c)], [k * (1.0 - a * b), k * a * (1.0 - b)], k * k * k * a * a * b),
    |k, a, b, c| ([k * (1.0 - a * b), k * a * (1.0 - b)], [k, k * a * (1.0 - b + b * c)], k * k * k * a * a * b),
    |k, a, b, c| ([k * (1.0 - a * b * c), k * a * (1.0 - b * c)], [k, k * a * (1.0 - b)], k * k * k * a * a * b),
    |k, a, b, c| ([k, k * a * (1.0 - b)], [k * (1.0 - a * b * c), k * a * (1.0 - b * c)], k * k * k * a * a * b),
];

const COMMON_EDGE: [Map; 5] = [
    |k, a, b, c| ([k, k * a * c], [k * (1.0 - a * b), k * a * (1.0 - b)], k * k * k * a * a),
    |k, a, b, c| ([k, k * a], [k * (1.0 - a * b * c), k * a * b * (1.0 - c)], k * k * k * a * a * b),
    |k, a, b, c| ([k * (1.0 - a * b), k * a * (1.0 - b)], [k, k * a * b * c], k * k * k * a * a * b),
    |k, a, b, c| ([k * (1.0 - a * b * c), k * a * b * (1.0 - c)], [k, k * a], k * k * k * a * a * b),
    |k, a, b, c| ([k * (1.0 - a * b * c), k * a * (1.0 - b * c)], [k, k * a * b], k * k * k * a * a * b),
];

const COMMON_VERTEX: [Map; 2] = [
    |k, a, b, c| ([k, k * a], [k * b, k * b * c], k * k * k * b),
    |k, a, b, c| ([k * b, k * b * c], [k, k * a], k * k * k * b),
];

/// Sauter–Schwab rule for a singular panel pair with `order` Gauss points
/// per direction in each of the four integration variables.
pub fn sauter_schwab(kind: PairKind, order: usize) -> PairRule {
    let maps: &[Map] = match kind {
        PairKind::Coincident => &COINCIDENT,
        PairKind::CommonEdge => &COMMON_EDGE,
        PairKind::CommonVertex => &COMMON_VERTEX,
    };
    let (t, w) = gauss_legendre(order);
    let n = maps.len() * order.pow(4);
    let mut rule = PairRule { x: Vec::with_capacity(n), y: Vec::with_capacity(n), weights: Vec::with_capacity(n) };
    for map in maps {
        for (&k, &wk) in t.iter().zip(&w) {
            for (&a, &wa) in t.iter().zip(&w) {
                for (&b, &wb) in t.iter().zip(&w) {
                    for (&c, &wc) in t.iter().zip(&w) {
                        let (x, y, jac) = map(k, a, b, c);
                        rule.x.push(reference_to_barycentric(x[0], x[1]));
                        rule.y.push(reference_to_barycentric(y[0], y[1]));
                        // both reference triangles have area 1/2
                        rule.weights.push(4.0 * wk * wa * wb * wc * jac);
                    }
                }
            }
        }
    }
    rule
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫ over the reference triangle of x̂1^a x̂2^b.
    fn reference_monomial(a: i32, b: i32) -> f64 {
        1.0 / ((b + 1) as f64 * (a + b + 2) as f64)
    }

    fn to_reference(l: [f64; 3]) -> (f64, f64) {
        (l[1] + l[2], l[2])
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) as i32 {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
                assert!((q - 1.0 / (p + 1) as f64).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn triangle_rules_are_exact_to_their_degree() {
        for degree in [1, 2, 4, 5, 6, 8, 11] {
            let rule = triangle_rule(degree);
            for a in 0..=degree as i32 {
                for b in 0..=(degree as i32 - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(l, w)| {
                            let (x1, x2) = to_reference(*l);
                            w * x1.powi(a) * x2.powi(b)
                        })
                        .sum::<f64>()
                        * 0.5;
                    let exact = reference_monomial(a, b);
                    assert!((q - exact).abs() < 1e-13, "degree {degree}: x^{a} y^{b}: {q} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn collapsed_gauss_degree() {
        let rule = collapsed_gauss(8);
        assert_eq!(rule.len(), 64);
        let q: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| {
                let (x1, x2) = to_reference(*l);
                w * x1.powi(9) * x2.powi(5)
            })
            .sum::<f64>()
            * 0.5;
        assert!((q - reference_monomial(9, 5)).abs() < 1e-15);
    }

    #[test]
    fn sauter_schwab_rules_partition_the_product_domain() {
        // smooth integrands must be integrated exactly (up to Gauss accuracy)
        let monomials = [(0, 0, 0, 0), (1, 0, 0, 0), (0, 1, 1, 0), (2, 1, 0, 1), (1, 1, 2, 2), (0, 2, 2, 0)];
        for kind in [PairKind::Coincident, PairKind::CommonEdge, PairKind::CommonVertex] {
            let rule = sauter_schwab(kind, 7);
            for &(a, b, c, d) in &monomials {
                let q: f64 = (0..rule.len())
                    .map(|k| {
                        let (x1, x2) = to_reference(rule.x[k]);
                        let (y1, y2) = to_reference(rule.y[k]);
                        rule.weights[k] * x1.powi(a) * x2.powi(b) * y1.powi(c) * y2.powi(d)
                    })
                    .sum::<f64>()
                    * 0.25;
                let exact = reference_monomial(a, b) * reference_monomial(c, d);
                assert!((q - exact).abs() < 1e-12 * exact.max(1e-3), "{kind:?} {a}{b}{c}{d}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn sauter_schwab_points_touch_where_expected() {
        // the singular sets: coincident x = y; common edge shares x̂2 = ŷ2 = 0;
        // common vertex shares the origin
        let (t, _) = gauss_legendre(3);
        let small = t[0] * 1e-6;
        for (kind, maps) in [
            (PairKind::Coincident, &COINCIDENT[..]),
            (PairKind::CommonEdge, &COMMON_EDGE[..]),
            (PairKind::CommonVertex, &COMMON_VERTEX[..]),
        ] {
            for map in maps {
                let (x, y, _) = map(0.7, small, small, 0.5);
                let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                let (x0, _, _) = map(small, 0.3, 0.6, 0.2);
                match kind {
                    PairKind::Coincident | PairKind::CommonEdge => {
                        assert!(d < 1e-5, "{kind:?}");
                    }
                    PairKind::CommonVertex => assert!(x0[0] < 1e-5),
                }
            }
        }
    }
}
