//! Probabilists' Hermite chaos machinery.
//!
//! Multi-index polynomial bases over independent standard-normal germs,
//! Gauss-Hermite quadrature for the standard normal weight, norm and
//! triple-product tensors for Galerkin projection, and gPC expansion of
//! nonlinear parameter transforms (notably the reciprocal conduction
//! resistance).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Ordering tag written into serialized surrogates. Terms are sorted by total
/// degree; within a degree, single-germ terms come first (by germ index),
/// followed by mixed terms in descending lexicographic order.
pub const ORDERING_TAG: &str = "graded-single-first";

/// Probabilists' Hermite polynomial `He_n(x)` (monic, weight exp(-x^2/2)).
pub fn hermite(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0;
            let mut cur = x;
            for k in 1..n {
                let next = x * cur - k as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Gauss-Hermite rule for the normalized standard normal weight: sums of
/// `w_i f(x_i)` approximate `E[f(xi)]`, exactly for polynomials of degree
/// `<= 2n - 1`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Build the `n`-node rule. Roots of `He_n` are found by interlacing
/// bisection with a Newton polish; the weight at each node is
/// `1 / sum_k he_k(x)^2` over the orthonormal polynomials below order `n`.
pub fn gauss_hermite(n: usize) -> GaussHermite {
    assert!(n >= 1 && n <= 64, "quadrature order {n} outside 1..=64");
    let mut roots = vec![0.0f64];
    for k in 2..=n {
        let bound = (4.0 * k as f64 + 2.0).sqrt() + 1.0;
        let mut brackets = Vec::with_capacity(k + 1);
        brackets.push(-bound);
        brackets.extend(roots.iter().copied());
        brackets.push(bound);
        let mut next = Vec::with_capacity(k);
        for w in brackets.windows(2) {
            next.push(find_root(k, w[0], w[1]));
        }
        roots = next;
    }
    let weights = roots.iter().map(|&x| 1.0 / orthonormal_sum_sq(n, x)).collect();
    GaussHermite { nodes: roots, weights }
}

fn find_root(n: usize, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = hermite(n, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let f_mid = hermite(n, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_lo < 0.0) == (f_mid < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    // Newton polish; He_n'(x) = n He_{n-1}(x).
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let fx = hermite(n, x);
        let dfx = n as f64 * hermite(n - 1, x);
        if dfx == 0.0 {
            break;
        }
        let step = fx / dfx;
        let next = x - step;
        if next >= lo && next <= hi {
            x = next;
        }
    }
    x
}

/// `sum_{k=0}^{n-1} he_k(x)^2` with `he_k = He_k / sqrt(k!)` orthonormal.
fn orthonormal_sum_sq(n: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut acc = 1.0;
    for k in 0..n - 1 {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        acc += cur * cur;
    }
    acc
}

/// Multi-index Hermite basis over `n_germs` independent standard normal
/// germs, containing every term of total degree `<= order`.
///
/// The term count is `(n_germs + order)! / (n_germs! order!)`. For the
/// two-germ, order-two case used throughout the battery model the ordering is
/// `1, x1, x2, x1^2 - 1, x2^2 - 1, x1 x2`, which groups the Galerkin coupling
/// into the blocks {0, 2, 4}, {1, 5}, {3}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexBasis {
    n_germs: usize,
    order: usize,
    terms: Vec<Vec<usize>>,
}

impl MultiIndexBasis {
    /// Construct the basis. Errors if the term count overflows.
    pub fn new(n_germs: usize, order: usize) -> Result<Arc<Self>> {
        if n_germs < 1 || order < 1 {
            return Err(Error::InvalidParameter(format!(
                "basis needs n_germs >= 1 and order >= 1, got ({n_germs}, {order})"
            )));
        }
        let count = binomial_checked(n_germs + order, order)
            .ok_or(Error::BasisOverflow { n_germs, order })?;
        let mut terms: Vec<Vec<usize>> = Vec::with_capacity(count);
        for degree in 0..=order {
            let mut pure: Vec<Vec<usize>> = Vec::new();
            let mut mixed: Vec<Vec<usize>> = Vec::new();
            enumerate_degree(n_germs, degree, &mut |idx| {
                if idx.iter().filter(|&&m| m > 0).count() <= 1 {
                    pure.push(idx.to_vec());
                } else {
                    mixed.push(idx.to_vec());
                }
            });
            // Pure terms by germ index (ascending position of the nonzero).
            pure.sort_by_key(|idx| idx.iter().position(|&m| m > 0).unwrap_or(0));
            // Mixed terms in descending lexicographic order.
            mixed.sort_by(|a, b| b.cmp(a));
            terms.extend(pure);
            terms.extend(mixed);
        }
        debug_assert_eq!(terms.len(), count);
        Ok(Arc::new(Self { n_germs, order, terms }))
    }

    pub fn n_germs(&self) -> usize {
        self.n_germs
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of terms, `Q + 1`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Highest term index `Q`.
    pub fn highest_index(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn term(&self, k: usize) -> &[usize] {
        &self.terms[k]
    }

    /// Index of the first-order term in the given germ, if present.
    pub fn linear_term(&self, germ: usize) -> Option<usize> {
        self.find_single(germ, 1)
    }

    /// Index of the second-order term in the given germ, if present.
    pub fn quadratic_term(&self, germ: usize) -> Option<usize> {
        self.find_single(germ, 2)
    }

    fn find_single(&self, germ: usize, degree: usize) -> Option<usize> {
        self.terms.iter().position(|idx| {
            idx.iter().enumerate().all(|(g, &m)| if g == germ { m == degree } else { m == 0 })
        })
    }

    /// Evaluate basis function `k` at the germ vector `xi`.
    pub fn eval(&self, k: usize, xi: &[f64]) -> f64 {
        assert_eq!(xi.len(), self.n_germs, "germ vector dimension mismatch");
        self.terms[k]
            .iter()
            .zip(xi)
            .map(|(&m, &x)| hermite(m, x))
            .product()
    }

    /// Evaluate every basis function at `xi` into `out`.
    pub fn eval_all(&self, xi: &[f64], out: &mut [f64]) {
        assert_eq!(out.len(), self.terms.len());
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.eval(k, xi);
        }
    }

    /// Dot product of `coeffs` with the basis functions at `xi`, using
    /// per-germ Hermite tables so each polynomial value is computed once.
    pub fn eval_expansion(&self, coeffs: &[f64], xi: &[f64]) -> f64 {
        debug_assert_eq!(coeffs.len(), self.terms.len());
        debug_assert_eq!(xi.len(), self.n_germs);
        const MAX_GERMS: usize = 4;
        const MAX_ORDER: usize = 7;
        if self.n_germs > MAX_GERMS || self.order > MAX_ORDER {
            return coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c * self.eval(k, xi))
                .sum();
        }
        let mut table = [[0.0f64; MAX_ORDER + 1]; MAX_GERMS];
        for (g, &x) in xi.iter().enumerate() {
            table[g][0] = 1.0;
            if self.order >= 1 {
                table[g][1] = x;
            }
            for m in 1..self.order {
                table[g][m + 1] = x * table[g][m] - m as f64 * table[g][m - 1];
            }
        }
        let mut acc = 0.0;
        for (term, &c) in self.terms.iter().zip(coeffs) {
            if c != 0.0 {
                let mut phi = 1.0;
                for (g, &m) in term.iter().enumerate() {
                    phi *= table[g][m];
                }
                acc += c * phi;
            }
        }
        acc
    }

    /// Squared norm `<phi_k^2>`, the product of per-germ factorials.
    pub fn norm_sq(&self, k: usize) -> f64 {
        self.terms[k].iter().map(|&m| factorial(m)).product()
    }
}

fn binomial_checked(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
    }
    usize::try_from(acc).ok()
}

fn enumerate_degree(n_germs: usize, degree: usize, visit: &mut impl FnMut(&[usize])) {
    let mut idx = vec![0usize; n_germs];
    fn rec(idx: &mut Vec<usize>, germ: usize, remaining: usize, visit: &mut impl FnMut(&[usize])) {
        if germ == idx.len() - 1 {
            idx[germ] = remaining;
            visit(idx);
            return;
        }
        for m in (0..=remaining).rev() {
            idx[germ] = m;
            rec(idx, germ + 1, remaining - m, visit);
        }
        idx[germ] = 0;
    }
    if n_germs == 1 {
        idx[0] = degree;
        visit(&idx);
    } else {
        rec(&mut idx, 0, degree, visit);
    }
}

/// Norms and triple products of a basis: everything the Galerkin projection
/// of a product needs.
#[derive(Debug, Clone)]
pub struct GalerkinTensors {
    norm_sq: Vec<f64>,
    triple: Vec<f64>,
    dim: usize,
}

impl GalerkinTensors {
    pub fn norm_sq(&self, k: usize) -> f64 {
        self.norm_sq[k]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norm_sq
    }

    /// `<phi_i phi_j phi_k>`.
    pub fn triple(&self, i: usize, j: usize, k: usize) -> f64 {
        self.triple[(i * self.dim + j) * self.dim + k]
    }
}

/// Exact Gaussian-moment evaluation of `<phi_k^2>` and `<phi_i phi_j phi_k>`.
///
/// Each entry factors over germs into one-dimensional Hermite triple moments
/// `E[He_a He_b He_c]`, which vanish unless `a + b + c` is even and the
/// triangle inequality holds, and otherwise equal
/// `a! b! c! / ((s-a)!(s-b)!(s-c)!)` with `s = (a+b+c)/2`.
pub fn norms_and_triples(basis: &MultiIndexBasis) -> GalerkinTensors {
    let dim = basis.len();
    let norm_sq: Vec<f64> = (0..dim).map(|k| basis.norm_sq(k)).collect();
    let mut triple = vec![0.0; dim * dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                let mut value = 1.0;
                for g in 0..basis.n_germs() {
                    value *= hermite_triple_moment(
                        basis.term(i)[g],
                        basis.term(j)[g],
                        basis.term(k)[g],
                    );
                    if value == 0.0 {
                        break;
                    }
                }
                triple[(i * dim + j) * dim + k] = value;
            }
        }
    }
    GalerkinTensors { norm_sq, triple, dim }
}

fn hermite_triple_moment(a: usize, b: usize, c: usize) -> f64 {
    let total = a + b + c;
    if total % 2 != 0 {
        return 0.0;
    }
    let s = total / 2;
    if s < a || s < b || s < c {
        return 0.0;
    }
    factorial(a) * factorial(b) * factorial(c)
        / (factorial(s - a) * factorial(s - b) * factorial(s - c))
}

/// One scalar random quantity represented by gPC coefficients over a shared
/// basis. Coefficient 0 is the mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SurrogateRecord", into = "SurrogateRecord")]
pub struct GpcSurrogate {
    basis: Arc<MultiIndexBasis>,
    coeffs: Vec<f64>,
}

impl GpcSurrogate {
    pub fn new(basis: Arc<MultiIndexBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::InvalidParameter(format!(
                "surrogate needs {} coefficients, got {}",
                basis.len(),
                coeffs.len()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    /// Surrogate fixed at a deterministic value.
    pub fn constant(basis: Arc<MultiIndexBasis>, value: f64) -> Self {
        let mut coeffs = vec![0.0; basis.len()];
        coeffs[0] = value;
        Self { basis, coeffs }
    }

    pub fn basis(&self) -> &Arc<MultiIndexBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// The mean is the zeroth coefficient.
    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    /// Variance from the higher-order coefficients and basis norms; never
    /// negative.
    pub fn variance(&self, tensors: &GalerkinTensors) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * c * tensors.norm_sq(k))
            .sum()
    }

    pub fn std_dev(&self, tensors: &GalerkinTensors) -> f64 {
        self.variance(tensors).sqrt()
    }

    /// Evaluate the expansion at one germ vector.
    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.basis.eval_expansion(&self.coeffs, xi)
    }

    /// Pointwise evaluation over a list of germ draws.
    pub fn sample(&self, draws: &[Vec<f64>]) -> Vec<f64> {
        draws.iter().map(|xi| self.eval(xi)).collect()
    }
}

#[derive(Serialize, Deserialize, Clone)]
struct SurrogateRecord {
    n_germs: usize,
    order: usize,
    ordering: String,
    coeffs: Vec<f64>,
}

impl From<GpcSurrogate> for SurrogateRecord {
    fn from(s: GpcSurrogate) -> Self {
        Self {
            n_germs: s.basis.n_germs(),
            order: s.basis.order(),
            ordering: ORDERING_TAG.into(),
            coeffs: s.coeffs,
        }
    }
}

impl TryFrom<SurrogateRecord> for GpcSurrogate {
    type Error = String;

    fn try_from(r: SurrogateRecord) -> std::result::Result<Self, String> {
        if r.ordering != ORDERING_TAG {
            return Err(format!("unknown basis ordering tag {:?}", r.ordering));
        }
        let basis = MultiIndexBasis::new(r.n_germs, r.order).map_err(|e| e.to_string())?;
        GpcSurrogate::new(basis, r.coeffs).map_err(|e| e.to_string())
    }
}

/// Project `f` applied to a surrogate back onto the surrogate's basis by
/// tensorized Gauss-Hermite quadrature:
/// `coeff_k = <f(s(xi)), phi_k> / <phi_k^2>`.
///
/// Exact when `f(s(xi))` is a polynomial of degree `<= 2 quad_order - 1` in
/// each germ. Errors if `f` produces a non-finite value at any node (for
/// example a pole inside the quadrature support).
pub fn expand_transform(
    f: impl Fn(f64) -> f64,
    s: &GpcSurrogate,
    quad_order: usize,
) -> Result<GpcSurrogate> {
    let basis = s.basis();
    if quad_order < basis.order() + 2 {
        return Err(Error::InvalidParameter(format!(
            "quad_order {} too small for basis order {}",
            quad_order,
            basis.order()
        )));
    }
    let rule = gauss_hermite(quad_order);
    let n_germs = basis.n_germs();
    let dim = basis.len();
    let mut numerators = vec![0.0; dim];
    let mut phi = vec![0.0; dim];
    let mut node_idx = vec![0usize; n_germs];
    let mut xi = vec![0.0; n_germs];
    loop {
        let mut weight = 1.0;
        for g in 0..n_germs {
            xi[g] = rule.nodes[node_idx[g]];
            weight *= rule.weights[node_idx[g]];
        }
        let value = f(s.eval(&xi));
        if !value.is_finite() {
            return Err(Error::QuadratureFailure { node: xi.clone() });
        }
        basis.eval_all(&xi, &mut phi);
        for (num, p) in numerators.iter_mut().zip(&phi) {
            *num += weight * value * p;
        }

        // Advance the tensor-product counter.
        let mut g = 0;
        loop {
            if g == n_germs {
                let coeffs = numerators
                    .iter()
                    .enumerate()
                    .map(|(k, &num)| num / basis.norm_sq(k))
                    .collect();
                return GpcSurrogate::new(basis.clone(), coeffs);
            }
            node_idx[g] += 1;
            if node_idx[g] < rule.nodes.len() {
                break;
            }
            node_idx[g] = 0;
            g += 1;
        }
    }
}
