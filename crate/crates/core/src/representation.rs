//! The regular representation `A_σ` of a monoid on `V^Σ`, equivariance
//! checks, commutants, intertwiners and indecomposable splittings.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{admissible_field, fundamental_network, Monoid, ResponseFunction};
use crate::poly::{monomials_between, Monomial, Poly, PolyField};
use crate::random;
use crate::spectral::{canonical_orthonormal, Splitting};
use crate::synchrony::Partition;

/// `A_σ` for the monoid element with index `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct RepMatrix {
    pub sigma: String,
    pub matrix: DMatrix<f64>,
}

fn rep_from_table(table: &[Vec<usize>], i: usize, cell_dim: usize) -> DMatrix<f64> {
    let n = table.len();
    let d = cell_dim;
    let mut m = DMatrix::zeros(n * d, n * d);
    for (j, row) in table.iter().enumerate() {
        let k = row[i];
        for e in 0..d {
            m[(j * d + e, k * d + e)] = 1.0;
        }
    }
    m
}

/// `(A_σ X)_{σ_j} = X_{σ_j ∘ σ}`.
pub fn rep_matrix(sigma: usize, monoid: &Monoid, cell_dim: usize) -> Result<RepMatrix> {
    if sigma >= monoid.size() {
        return Err(Error::Dimension(format!("element {sigma} not in a monoid of size {}", monoid.size())));
    }
    Ok(RepMatrix {
        sigma: monoid.elements[sigma].label.clone(),
        matrix: rep_from_table(&monoid.table, sigma, cell_dim),
    })
}

pub fn rep_matrices(monoid: &Monoid, cell_dim: usize) -> Vec<DMatrix<f64>> {
    (0..monoid.size()).map(|i| rep_from_table(&monoid.table, i, cell_dim)).collect()
}

/// `A_{σ_i} A_{σ_j} = A_{σ_i ∘ σ_j}` for all pairs, exactly.
pub fn check_representation(monoid: &Monoid) -> bool {
    let n = monoid.size();
    if monoid.table.iter().any(|r| r.len() != n || r.iter().any(|&k| k >= n)) {
        return false;
    }
    let a = rep_matrices(monoid, 1);
    (0..n).all(|i| (0..n).all(|j| &a[i] * &a[j] == a[monoid.table[i][j]]))
}

/// Action on `V^n × R`: `A_σ` on the state, identity on the parameter.
pub fn augment_action(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    let mut out = DMatrix::identity(m + 1, m + 1);
    out.view_mut((0, 0), (m, m)).copy_from(a);
    out
}

fn equivariance_defect(f: &PolyField, a: &DMatrix<f64>, with_param: bool) -> Result<f64> {
    let inner = if with_param { augment_action(a) } else { a.clone() };
    let lhs = f.compose_linear(&inner)?;
    let rhs = f.left_mul(a)?;
    lhs.max_abs_diff(&rhs)
}

/// Checks `F(A_σ x, λ) = A_σ F(x, λ)` on random points and coefficient by coefficient.
///
/// `F` may take the state alone or the state followed by one parameter slot.
pub fn is_equivariant(f: &PolyField, actions: &[DMatrix<f64>], tol: f64) -> Result<bool> {
    let m = actions.first().map(|a| a.nrows()).unwrap_or(0);
    let with_param = match f.n_in() {
        k if k == m => false,
        k if k == m + 1 => true,
        k => return Err(Error::Dimension(format!("field takes {k} inputs, representation has dimension {m}"))),
    };
    if f.n_out() != m {
        return Err(Error::Dimension(format!("field has {} outputs, representation dimension {m}", f.n_out())));
    }
    let scale = 1.0 + f.max_abs_coeff();
    let mut rng = random::rng(0x5eed);
    let c = f.compile();
    for _ in 0..20 {
        let x = random::uniform_vec(&mut rng, f.n_in(), 1.0);
        let fx = nalgebra::DVector::from_vec(c.eval(&x));
        for a in actions {
            let mut ax = x.clone();
            let xs = nalgebra::DVector::from_column_slice(&x[..m]);
            ax[..m].copy_from_slice((a * xs).as_slice());
            let lhs = nalgebra::DVector::from_vec(c.eval(&ax));
            if (lhs - a * &fx).amax() > tol * scale {
                return Ok(false);
            }
        }
    }
    for a in actions {
        if equivariance_defect(f, a, with_param)? > tol * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Recovers `f` from an equivariant field `F = Γ_f` as its unit component.
pub fn response_from_equivariant(f: &PolyField, monoid: &Monoid, cell_dim: usize) -> Result<ResponseFunction> {
    let actions = rep_matrices(monoid, cell_dim);
    if !is_equivariant(f, &actions, 1e-9)? {
        return Err(Error::NotEquivariant("field does not commute with the monoid action".into()));
    }
    let d = cell_dim;
    let f = &if f.n_in() == actions[0].nrows() { f.with_extra_inputs(1) } else { f.clone() };
    let u = monoid.unit_index;
    let rows: Vec<usize> = (u * d..(u + 1) * d).collect();
    let resp = ResponseFunction::new(f.select(&rows), monoid.size(), d)?;
    let back = admissible_field(&fundamental_network(monoid, d), &resp)?;
    let err = back.max_abs_diff(f)?;
    if err > 1e-12 * (1.0 + f.max_abs_coeff()) {
        return Err(Error::NotEquivariant(format!("unit component does not reproduce the field (error {err:e})")));
    }
    Ok(resp)
}

/// Null space of the stacked linear system `T B1_σ - B2_σ T = 0`, as matrices.
fn hom_space(b1: &[DMatrix<f64>], b2: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let (k1, k2) = (b1[0].nrows(), b2[0].nrows());
    let rows = b1.len() * k1 * k2;
    let mut sys = DMatrix::zeros(rows, k1 * k2);
    let i1 = DMatrix::<f64>::identity(k1, k1);
    let i2 = DMatrix::<f64>::identity(k2, k2);
    for (s, (x, y)) in b1.iter().zip(b2).enumerate() {
        // vec(T X) = (X^T ⊗ I) vec T, vec(Y T) = (I ⊗ Y) vec T
        let blk = linalg::kron(&x.transpose(), &i2) - linalg::kron(&i1, y);
        sys.view_mut((s * k1 * k2, 0), (k1 * k2, k1 * k2)).copy_from(&blk);
    }
    let scale = 1.0 + linalg::max_abs(&sys);
    let ns = linalg::null_space(&sys, 1e-9 * scale);
    ns.column_iter()
        .map(|c| DMatrix::from_column_slice(k2, k1, c.as_slice()))
        .collect()
}

/// Frobenius-orthonormal basis of `{B : B A_σ = A_σ B}`.
pub fn commutant_of(actions: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    hom_space(actions, actions)
}

pub fn commutant_basis(monoid: &Monoid, cell_dim: usize) -> Vec<DMatrix<f64>> {
    commutant_of(&rep_matrices(monoid, cell_dim))
}

/// Equivariant linear maps from the first action to the second.
pub fn intertwiners(b1: &[DMatrix<f64>], b2: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    hom_space(b1, b2)
}

/// Matrices of the action restricted to an invariant subspace spanned by `basis`.
pub fn restricted_action(basis: &DMatrix<f64>, actions: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let p = linalg::pinv(basis);
    actions.iter().map(|a| &p * a * basis).collect()
}

/// Largest `‖A u - basis (restricted A) u‖` over the action.
pub fn invariance_defect(basis: &DMatrix<f64>, actions: &[DMatrix<f64>]) -> f64 {
    let r = restricted_action(basis, actions);
    actions
        .iter()
        .zip(&r)
        .map(|(a, b)| linalg::max_abs(&(a * basis - basis * b)))
        .fold(0.0, f64::max)
}

/// A random invertible intertwiner, if the two actions are isomorphic.
pub fn random_isomorphism(b1: &[DMatrix<f64>], b2: &[DMatrix<f64>], seed: u64) -> Option<DMatrix<f64>> {
    let k = b1.first()?.nrows();
    if b2.first()?.nrows() != k {
        return None;
    }
    let basis = intertwiners(b1, b2);
    if basis.is_empty() {
        return None;
    }
    let mut rng = random::rng(seed);
    for _ in 0..10 {
        let mut t = DMatrix::zeros(k, k);
        for b in &basis {
            t += b * rng.gen_range(-1.0..1.0);
        }
        let s = linalg::singular_values(&t);
        if s.last().copied().unwrap_or(0.0) > 1e-6 * s[0] {
            return Some(t);
        }
    }
    None
}

/// Nontrivial idempotent in the span of `basis`, found by Newton's method on
/// `E² = E` (in sign-function form `S ← (S + S⁻¹)/2`, `E = (I + S)/2`) from a
/// random element shifted to separate its spectrum.
fn find_idempotent(basis: &[DMatrix<f64>], rng: &mut random::Rand, starts: usize) -> Option<DMatrix<f64>> {
    let k = basis.first()?.nrows();
    if k < 2 {
        return None;
    }
    let id = DMatrix::<f64>::identity(k, k);
    for _ in 0..starts {
        let mut x = DMatrix::zeros(k, k);
        for b in basis {
            x += b * rng.gen_range(-1.0..1.0);
        }
        let mut re: Vec<f64> = crate::spectral::eigenvalues(&x).iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let scale = 1e-12 + re.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gap = re
            .windows(2)
            .map(|w| (w[1] - w[0], 0.5 * (w[0] + w[1])))
            .fold((0.0, 0.0), |best, cur| if cur.0 > best.0 { cur } else { best });
        if gap.0 <= 1e-6 * scale {
            continue;
        }
        let mut s = (&x - &id * gap.1) / gap.0;
        let mut ok = false;
        for _ in 0..100 {
            let inv = match s.clone().try_inverse() {
                Some(i) => i,
                None => break,
            };
            let next = (&s + inv) * 0.5;
            let delta = linalg::max_abs(&(&next - &s));
            s = next;
            if delta <= 1e-13 * (1.0 + linalg::max_abs(&s)) {
                ok = true;
                break;
            }
        }
        if !ok {
            continue;
        }
        let e = (&id + &s) * 0.5;
        if linalg::max_abs(&(&e * &e - &e)) > 1e-9 {
            continue;
        }
        let r = linalg::rank(&e, 1e-8);
        if r > 0 && r < k {
            return Some(e);
        }
    }
    None
}

/// One summand of an indecomposable splitting.
#[derive(Clone, Debug)]
pub struct Summand {
    pub basis: DMatrix<f64>,
    pub commutant_dim: usize,
}

/// Indecomposable invariant splitting plus the restricted commutant dimensions.
#[derive(Clone, Debug)]
pub struct IndecomposableSplitting {
    pub splitting: Splitting,
    pub summands: Vec<Summand>,
}

/// Splits `V^n` into indecomposable invariant summands.
pub fn indecomposable_splitting(monoid: &Monoid, cell_dim: usize, seed: u64) -> Result<IndecomposableSplitting> {
    split_action(&rep_matrices(monoid, cell_dim), seed)
}

/// Indecomposable splitting for an arbitrary list of action matrices.
pub fn split_action(actions: &[DMatrix<f64>], seed: u64) -> Result<IndecomposableSplitting> {
    let m = actions[0].nrows();
    let mut rng = random::rng(seed);
    let mut pending = vec![DMatrix::<f64>::identity(m, m)];
    let mut done: Vec<Summand> = Vec::new();
    let mut iterations = 0;
    while let Some(u) = pending.pop() {
        iterations += 1;
        if iterations > 100 {
            return Err(Error::Numerical("indecomposable splitting did not converge in 100 iterations".into()));
        }
        let restricted = restricted_action(&u, actions);
        let comm = commutant_of(&restricted);
        match find_idempotent(&comm, &mut rng, 20) {
            Some(e) => {
                let k = u.ncols();
                let id = DMatrix::<f64>::identity(k, k);
                let a = linalg::range_basis(&(&u * &e), 1e-8);
                let b = linalg::range_basis(&(&u * (&id - &e)), 1e-8);
                pending.push(canonical_orthonormal(&a));
                pending.push(canonical_orthonormal(&b));
            }
            None => done.push(Summand { basis: canonical_orthonormal(&u), commutant_dim: comm.len() }),
        }
    }
    let key = |s: &Summand| -> Vec<i64> {
        linalg::canonical_basis(&s.basis, 1e-9).iter().map(|x| (x * 1e9).round() as i64).collect()
    };
    done.sort_by(|a, b| a.basis.ncols().cmp(&b.basis.ncols()).then_with(|| key(b).cmp(&key(a))));
    let splitting = Splitting::from_subspaces(done.iter().map(|s| s.basis.clone()).collect())?;
    Ok(IndecomposableSplitting { splitting, summands: done })
}

/// Checks that an equivariant isomorphism between matching summands carries
/// `Δ_P ∩ W_j` bijectively onto `Δ_P ∩ W'_j` for every `j`.
pub fn splitting_synchrony_check(
    first: &Splitting,
    second: &Splitting,
    p: &Partition,
    actions: &[DMatrix<f64>],
    cell_dim: usize,
    seed: u64,
) -> Result<bool> {
    if first.dims() != second.dims() {
        return Err(Error::Numerical("splittings have different summand dimensions".into()));
    }
    let delta = p.indicator(cell_dim);
    let tol = 1e-9;
    for (j, (u, w)) in first.subspaces.iter().zip(&second.subspaces).enumerate() {
        let bu = restricted_action(u, actions);
        let bw = restricted_action(w, actions);
        let phi = random_isomorphism(&bu, &bw, seed.wrapping_add(j as u64))
            .ok_or_else(|| Error::Numerical(format!("summand {j} of the two splittings is not isomorphic")))?;
        let ambient = w * &phi * linalg::pinv(u);
        let du = linalg::intersect(&delta, u, tol);
        let dw = linalg::intersect(&delta, w, tol);
        if du.ncols() != dw.ncols() {
            return Ok(false);
        }
        if du.ncols() == 0 {
            continue;
        }
        let image = &ambient * &du;
        if linalg::rank(&image, tol) != du.ncols() {
            return Ok(false);
        }
        if linalg::rank(&linalg::hstack(&[&dw, &image]), tol) != dw.ncols() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Basis of the polynomial maps `F` of degree `<= degree` on an invariant
/// subspace that commute with the restricted action, optionally with one
/// parameter slot acted on trivially.
pub fn equivariant_field_space(
    actions: &[DMatrix<f64>],
    basis: &DMatrix<f64>,
    degree: u32,
    with_parameter: bool,
) -> Result<Vec<PolyField>> {
    if invariance_defect(basis, actions) > 1e-9 {
        return Err(Error::Dimension("subspace is not invariant".into()));
    }
    let restricted = restricted_action(basis, actions);
    let c = basis.ncols();
    let nv = c + usize::from(with_parameter);
    let monos = monomials_between(nv, 0, degree);
    let unknowns: Vec<(usize, &Monomial)> = (0..c).flat_map(|o| monos.iter().map(move |m| (o, m))).collect();
    let position = |o: usize, m: &Monomial| o * monos.len() + monos.iter().position(|x| x == m).unwrap();
    let rows = restricted.len() * unknowns.len();
    let mut sys = DMatrix::zeros(rows, unknowns.len());
    for (s, b) in restricted.iter().enumerate() {
        let inner = if with_parameter { augment_action(b) } else { b.clone() };
        for (col, &(o, m)) in unknowns.iter().enumerate() {
            let mut comps = vec![Poly::zero(nv); c];
            comps[o].add_term(m.clone(), 1.0);
            let f = PolyField::from_components(nv, degree, comps)?;
            let defect = f.compose_linear(&inner)?.sub(&f.left_mul(b)?)?;
            for (oo, p) in defect.components().iter().enumerate() {
                for (mm, v) in p.terms() {
                    sys[(s * unknowns.len() + position(oo, mm), col)] = v;
                }
            }
        }
    }
    let ns = linalg::null_space(&sys, 1e-9 * (1.0 + linalg::max_abs(&sys)));
    let canon = linalg::canonical_basis(&ns, 1e-9);
    canon
        .column_iter()
        .map(|col| {
            let terms = unknowns.iter().zip(col.iter()).filter(|(_, v)| v.abs() > 1e-12).map(|(&(o, m), &v)| {
                let mut coeff = vec![0.0; c];
                coeff[o] = v;
                (m.clone(), coeff)
            });
            PolyField::from_terms(nv, c, degree, terms.collect::<Vec<_>>())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{complete_monoid, parse_network_spec, NetworkSpec, InputMap};

    fn monoid_of(text: &str) -> Monoid {
        complete_monoid(&parse_network_spec(text).unwrap())
    }

    fn network_a() -> Monoid {
        monoid_of(r#"{"cells":3,"maps":[{"label":"s2","target":[2,3,3]},{"label":"s3","target":[3,3,3]}]}"#)
    }

    #[test]
    fn network_a_shift() {
        let m = network_a();
        let a = rep_matrix(1, &m, 1).unwrap().matrix;
        let x = nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!((a * x).as_slice(), &[2.0, 3.0, 3.0]);
        assert_eq!(rep_matrix(0, &m, 1).unwrap().matrix, DMatrix::identity(3, 3));
        assert!(check_representation(&m));
    }

    #[test]
    fn corrupted_table_is_detected() {
        let mut m = network_a();
        m.table[2][2] = 0;
        assert!(!check_representation(&m));
    }

    #[test]
    fn commutant_dimensions() {
        assert_eq!(commutant_basis(&network_a(), 1).len(), 3);
        assert_eq!(commutant_basis(&monoid_of(r#"{"cells":1}"#), 1).len(), 1);
        let z2 = complete_monoid(&NetworkSpec::new(2, 1, vec![InputMap::from_one_based("t", &[2, 1]).unwrap()]).unwrap());
        assert_eq!(commutant_basis(&z2, 1).len(), 2);
    }

    #[test]
    fn commutant_is_orthonormal() {
        let b = commutant_basis(&network_a(), 1);
        for (i, x) in b.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                let ip = x.component_mul(y).sum();
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_field_is_equivariant() {
        let m = network_a();
        let acts = rep_matrices(&m, 1);
        assert!(is_equivariant(&PolyField::identity(3, 1), &acts, 1e-12).unwrap());
    }

    #[test]
    fn trivial_splitting() {
        let s = indecomposable_splitting(&monoid_of(r#"{"cells":1}"#), 1, 0).unwrap();
        assert_eq!(s.splitting.dims(), vec![1]);
    }

    #[test]
    fn z2_splits_into_two_lines() {
        let z2 = complete_monoid(&NetworkSpec::new(2, 1, vec![InputMap::from_one_based("t", &[2, 1]).unwrap()]).unwrap());
        let s = indecomposable_splitting(&z2, 1, 3).unwrap();
        assert_eq!(s.splitting.dims(), vec![1, 1]);
        assert!(s.splitting.invariance_defect(&rep_matrices(&z2, 1)) < 1e-12);
    }

    #[test]
    fn linear_equivariant_response() {
        // F = A_{σ2} is Γ_f for f(X) = X_{σ2}
        let m = network_a();
        let a = rep_matrix(1, &m, 1).unwrap().matrix;
        let f = PolyField::linear(&a, 1);
        let r = response_from_equivariant(&f, &m, 1).unwrap();
        let x2 = Monomial::var(4, 1);
        assert_eq!(r.poly.coeff(0, &x2), 1.0);
        assert_eq!(r.poly.terms().len(), 1);
        let z = response_from_equivariant(&PolyField::zero(3, 3, 2), &m, 1).unwrap();
        assert!(z.poly.is_zero());
    }
}
