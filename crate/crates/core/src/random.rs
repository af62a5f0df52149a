//! Seeded random draws of coefficients, points and response functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::ResponseFunction;
use crate::poly::{monomials_between, Monomial, PolyField};

pub type Rand = ChaCha8Rng;

pub fn rng(seed: u64) -> Rand {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on `[-2, -0.2] ∪ [0.2, 2]`, away from accidental zeros.
pub fn coefficient(rng: &mut Rand) -> f64 {
    let m = rng.gen_range(0.2..2.0);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

pub fn uniform_vec(rng: &mut Rand, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..r)).collect()
}

/// Dense random field with every monomial of degree `lo..=hi`.
pub fn random_field(rng: &mut Rand, n_in: usize, n_out: usize, lo: u32, hi: u32) -> PolyField {
    let terms: Vec<(Monomial, Vec<f64>)> = monomials_between(n_in, lo, hi)
        .into_iter()
        .map(|m| (m, (0..n_out).map(|_| coefficient(rng)).collect()))
        .collect();
    PolyField::from_terms(n_in, n_out, hi, terms).expect("shapes agree by construction")
}

/// Random response of degree `degree` including a constant term.
pub fn random_response(rng: &mut Rand, slots: usize, cell_dim: usize, degree: u32) -> ResponseFunction {
    let poly = random_field(rng, slots * cell_dim + 1, cell_dim, 0, degree);
    ResponseFunction::new(poly, slots, cell_dim).expect("shapes agree by construction")
}

/// Random response vanishing at the origin whose derivative in the cell's own
/// state is zero, so that the synchronous equilibrium sits at a bifurcation
/// point at `λ = 0`. Scalar cells only.
pub fn bifurcation_response(rng: &mut Rand, slots: usize, degree: u32) -> ResponseFunction {
    let n_in = slots + 1;
    let own = Monomial::var(n_in, 0);
    let terms: Vec<(Monomial, Vec<f64>)> = monomials_between(n_in, 1, degree)
        .into_iter()
        .filter(|m| *m != own)
        .map(|m| (m, vec![coefficient(rng)]))
        .collect();
    let poly = PolyField::from_terms(n_in, 1, degree, terms).expect("shapes agree by construction");
    ResponseFunction::new(poly, slots, 1).expect("shapes agree by construction")
}

/// Random linear response with the given slot coefficients and zero
/// parameter dependence.
pub fn linear_response(coeffs: &[f64]) -> ResponseFunction {
    let n_in = coeffs.len() + 1;
    let terms = coeffs.iter().enumerate().map(|(i, &c)| (Monomial::var(n_in, i), vec![c]));
    let poly = PolyField::from_terms(n_in, 1, 1, terms).expect("shapes agree by construction");
    ResponseFunction::new(poly, coeffs.len(), 1).expect("shapes agree by construction")
}
