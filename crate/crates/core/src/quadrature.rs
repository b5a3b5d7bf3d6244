//! Gauss-Legendre rules and exact power-moment integration of
//! polynomial-times-power integrands.

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A fixed Gauss-Legendre rule reusable over many intervals.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let c = 0.5 * (hi + lo);
        let r = 0.5 * (hi - lo);
        r * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(c + r * x))
            .sum::<f64>()
    }

    /// Composite rule over `pieces` equal subintervals.
    pub fn integrate_composite(&self, lo: f64, hi: f64, pieces: usize, f: impl Fn(f64) -> f64) -> f64 {
        let dx = (hi - lo) / pieces as f64;
        (0..pieces)
            .map(|k| {
                let a = lo + k as f64 * dx;
                self.integrate(a, a + dx, &f)
            })
            .sum()
    }
}

/// Polynomial with monomial coefficients `c[0] + c[1] x + ...` (degree <= 3).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cubic(pub [f64; 4]);

impl Cubic {
    pub fn eval(&self, x: f64) -> f64 {
        let c = &self.0;
        ((c[3] * x + c[2]) * x + c[1]) * x + c[0]
    }

    /// `p(sigma * (x - shift))` expanded in powers of `x`.
    pub fn compose_affine(&self, sigma: f64, shift: f64) -> Cubic {
        // u = sigma x - sigma shift
        let (a1, a0) = (sigma, -sigma * shift);
        let c = &self.0;
        let mut out = [0.0; 4];
        // powers of (a1 x + a0)
        let mut pow = [1.0, 0.0, 0.0, 0.0];
        for &ck in c.iter() {
            for j in 0..4 {
                out[j] += ck * pow[j];
            }
            let mut next = [0.0; 4];
            for j in 0..4 {
                next[j] += a0 * pow[j];
                if j + 1 < 4 {
                    next[j + 1] += a1 * pow[j];
                }
            }
            pow = next;
        }
        Cubic(out)
    }

    pub fn add(&self, other: &Cubic, scale: f64) -> Cubic {
        let mut out = self.0;
        for (o, c) in out.iter_mut().zip(other.0) {
            *o += scale * c;
        }
        Cubic(out)
    }
}

/// `int_lo^hi x^e dx` for `0 <= lo < hi`, with the logarithmic case at `e = -1`.
///
/// Written as `lo^(e+1) expm1((e+1) ln(hi/lo)) / (e+1)` so that exponents close
/// to `-1` lose no accuracy.
pub fn power_moment(lo: f64, hi: f64, e: f64) -> f64 {
    let p = e + 1.0;
    if lo == 0.0 {
        assert!(p > 0.0, "divergent moment at the origin");
        return hi.powf(p) / p;
    }
    let l = (hi / lo).ln();
    if p.abs() * l < 1e-12 {
        lo.powf(p) * l * (1.0 + 0.5 * p * l)
    } else {
        lo.powf(p) * (p * l).exp_m1() / p
    }
}

/// `int_lo^hi poly(x) x^beta dx` by exact moments.
///
/// On an interval starting at the origin the monomials that would make the
/// moment diverge must vanish; they are dropped.
pub fn poly_power_exact(poly: &Cubic, lo: f64, hi: f64, beta: f64) -> f64 {
    poly.0
        .iter()
        .enumerate()
        .filter(|(j, _)| lo > 0.0 || *j as f64 + beta > -1.0)
        .map(|(j, &c)| if c == 0.0 { 0.0 } else { c * power_moment(lo, hi, j as f64 + beta) })
        .sum()
}
