//! Parameter-augmented center manifold reduction on formal Taylor jets.
//!
//! The augmented field `(x, λ) -> (Γ_f(x, λ), 0)` is brought into block form
//! by the coordinates `x = V_c y + w λ + V_h z`, where `w ∈ W_h` is chosen so
//! that `(w, 1)` lies in the generalized kernel of the linearization. In these
//! coordinates the linear part is block diagonal, `u = (y, λ)` are the center
//! coordinates and the manifold is the graph `z = ψ(u)`, found degree by degree
//! from the tangency equation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{admissible_field, fundamental_network, Monoid, ResponseFunction};
use crate::poly::{monomials_of_degree, Poly, PolyField};
use crate::representation::{is_equivariant, rep_matrices, response_from_equivariant};
use crate::spectral::{center_hyperbolic_split, CenterSplit};
use crate::synchrony::Partition;

pub const DEFAULT_ORDER: u32 = 3;
pub const MAX_ORDER: u32 = 5;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReduceOptions {
    pub order: u32,
    pub tol_re: Option<f64>,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { order: DEFAULT_ORDER, tol_re: None }
    }
}

/// The augmented system `ẋ = Γ_f(x, λ), λ̇ = 0` with its splitting.
#[derive(Clone, Debug)]
pub struct AugmentedSystem {
    pub monoid: Monoid,
    pub cell_dim: usize,
    pub order: u32,
    /// `Γ_f` on `(x, λ)`, truncated at `order`.
    pub field: PolyField,
    /// `DΓ̲_f(0)`, of size `(m+1) × (m+1)` with a zero last row.
    pub linear: DMatrix<f64>,
    /// `Γ̲_f − linear`, vanishing to second order.
    pub nonlinear: PolyField,
    pub jacobian: DMatrix<f64>,
    pub param_direction: DVector<f64>,
    pub split: CenterSplit,
    /// `w` with `(w, 1)` a generalized null vector of `linear` and `w ∈ W_h`.
    pub w: DVector<f64>,
    pub actions: Vec<DMatrix<f64>>,
    /// Columns `(V_c, w, V_h)` over a last row `(0, 1, 0)`.
    pub frame: DMatrix<f64>,
    pub frame_inv: DMatrix<f64>,
}

impl AugmentedSystem {
    pub fn state_dim(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn center_dim(&self) -> usize {
        self.split.center_dim()
    }

    pub fn hyperbolic_dim(&self) -> usize {
        self.state_dim() - self.center_dim()
    }

    /// Coordinates along `W_c` of a state (rows of the inverse of `[V_c V_h]`).
    pub fn center_coords(&self) -> DMatrix<f64> {
        let (m, c) = (self.state_dim(), self.center_dim());
        self.frame_inv.view((0, 0), (c, m)).into_owned()
    }

    pub fn hyperbolic_coords(&self) -> DMatrix<f64> {
        let (m, c) = (self.state_dim(), self.center_dim());
        self.frame_inv.view((c + 1, 0), (m - c, m)).into_owned()
    }

    /// `(B_c, B_h)`: the action restricted to `W_c` and `W_h`.
    pub fn split_actions(&self) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
        let (pc, ph) = (self.center_coords(), self.hyperbolic_coords());
        self.actions
            .iter()
            .map(|a| (&pc * a * self.split.center(), &ph * a * self.split.hyperbolic()))
            .collect()
    }

    /// The field in block coordinates `ξ = (y, λ, z)`.
    pub fn block_field(&self) -> Result<PolyField> {
        let m = self.state_dim();
        let lifted = PolyField::stack(&[self.field.clone(), PolyField::zero(m + 1, 1, self.order)])?;
        lifted.compose_linear(&self.frame)?.left_mul(&self.frame_inv)
    }
}

fn frame_matrices(split: &CenterSplit, w: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = w.len();
    let c = split.center_dim();
    let mut t = DMatrix::zeros(m + 1, m + 1);
    t.view_mut((0, 0), (m, c)).copy_from(split.center());
    t.view_mut((0, c), (m, 1)).copy_from(w);
    t[(m, c)] = 1.0;
    t.view_mut((0, c + 1), (m, m - c)).copy_from(split.hyperbolic());
    let cond = linalg::condition_number(&t);
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::Numerical(format!("block coordinates are ill conditioned (condition number {cond:e})")));
    }
    let mut tinv = t.clone().try_inverse().ok_or_else(|| Error::Numerical("block coordinates are singular".into()))?;
    // the parameter coordinate is read off exactly
    tinv.row_mut(c).fill(0.0);
    tinv[(c, m)] = 1.0;
    Ok((t, tinv))
}

/// Builds the augmented system of `Γ_f` on the fundamental network of `monoid`.
pub fn augment(monoid: &Monoid, f: &ResponseFunction, opts: &ReduceOptions) -> Result<AugmentedSystem> {
    if opts.order < 2 || opts.order > MAX_ORDER {
        return Err(Error::Dimension(format!("jet order must lie in 2..={MAX_ORDER}, got {}", opts.order)));
    }
    let d = f.cell_dim;
    let fund = fundamental_network(monoid, d);
    let f = if f.slots < monoid.size() { f.pad_slots(monoid.size())? } else { f.clone() };
    let origin = f.value_at_origin();
    if origin.iter().any(|v| *v != 0.0) {
        return Err(Error::NotEquilibrium(format!("f(0, 0) = {origin:?}")));
    }
    let field = admissible_field(&fund, &f)?.truncate(opts.order);
    let m = fund.state_dim();
    let lin = field.linear_part();
    let jacobian = lin.view((0, 0), (m, m)).into_owned();
    let param_direction = DVector::from_iterator(m, lin.column(m).iter().copied());

    // independent assembly: row block j of DΓ_f(0) is Df(0) A_{σ_j}
    let actions = rep_matrices(monoid, d);
    let df = f.poly.linear_part();
    let dfx = df.view((0, 0), (d, monoid.size() * d)).into_owned();
    for (j, a) in actions.iter().enumerate() {
        let rows = &dfx * a;
        let got = jacobian.view((j * d, 0), (d, m));
        if linalg::max_abs(&(rows - got)) > 1e-12 * (1.0 + linalg::max_abs(&dfx)) {
            return Err(Error::Internal("linear part of Γ_f differs from Df(0) A_σ".into()));
        }
    }

    let split = center_hyperbolic_split(&jacobian, opts.tol_re)?;
    if !split.center_is_nilpotent() {
        return Err(Error::Numerical(
            "center spectrum contains nonzero imaginary eigenvalues; only steady-state centers are reduced".into(),
        ));
    }
    let c = split.center_dim();
    let vh = split.hyperbolic();
    let s = linalg::hstack(&[split.center(), vh]);
    let sinv = s.clone().try_inverse().ok_or_else(|| Error::Numerical("center and hyperbolic spaces overlap".into()))?;
    let ph_rows = sinv.view((c, 0), (m - c, m)).into_owned();
    let jh = &ph_rows * &jacobian * vh;
    let rhs = &ph_rows * &param_direction;
    let w = if m == c {
        DVector::zeros(m)
    } else {
        let sol = jh.clone().lu().solve(&rhs).ok_or_else(|| Error::Numerical("hyperbolic block is singular".into()))?;
        -(vh * sol)
    };
    let defect = &ph_rows * (&jacobian * &w + &param_direction);
    if defect.amax() > 1e-10 * (1.0 + param_direction.amax()) {
        return Err(Error::Internal(format!("(w, 1) is not a generalized null vector (defect {:e})", defect.amax())));
    }
    let (frame, frame_inv) = frame_matrices(&split, &w)?;

    let mut linear = DMatrix::zeros(m + 1, m + 1);
    linear.view_mut((0, 0), (m, m + 1)).copy_from(&lin);
    let lifted = PolyField::stack(&[field.clone(), PolyField::zero(m + 1, 1, opts.order)])?;
    let nonlinear = lifted.sub(&PolyField::linear(&linear, opts.order))?;
    Ok(AugmentedSystem {
        monoid: monoid.clone(),
        cell_dim: d,
        order: opts.order,
        field,
        linear,
        nonlinear,
        jacobian,
        param_direction,
        split,
        w,
        actions,
        frame,
        frame_inv,
    })
}

/// Taylor jet of the manifold graph `z = ψ(u)`, degrees `2..=order`.
#[derive(Clone, Debug)]
pub struct CenterManifoldJet {
    pub psi: PolyField,
    pub order: u32,
    /// Condition number of the homological operator at each degree `2..=order`.
    pub conditions: Vec<f64>,
}

/// Diagonal linear blocks `(A_c, A_h)` and the field with off-block linear
/// terms (rounding noise) removed.
fn block_form(ft: &PolyField, nu: usize) -> Result<(DMatrix<f64>, DMatrix<f64>, PolyField)> {
    let n = ft.n_in();
    let lin = ft.linear_part();
    let ac = lin.view((0, 0), (nu, nu)).into_owned();
    let ah = lin.view((nu, nu), (n - nu, n - nu)).into_owned();
    let mut diag = DMatrix::zeros(n, n);
    diag.view_mut((0, 0), (nu, nu)).copy_from(&ac);
    diag.view_mut((nu, nu), (n - nu, n - nu)).copy_from(&ah);
    let blocked = ft.sub(&PolyField::linear(&(&lin - &diag), ft.degree()))?;
    Ok((ac, ah, blocked))
}

fn homological_operator(ac: &DMatrix<f64>, ah: &DMatrix<f64>, degree: u32) -> (DMatrix<f64>, Vec<crate::poly::Monomial>) {
    let nu = ac.nrows();
    let h = ah.nrows();
    let monos = monomials_of_degree(nu, degree);
    let k = monos.len();
    let lin_u = PolyField::linear(ac, degree);
    let mut op = DMatrix::zeros(h * k, h * k);
    for o in 0..h {
        for (a, mono) in monos.iter().enumerate() {
            let mut comps = vec![Poly::zero(nu); h];
            comps[o].add_term(mono.clone(), 1.0);
            let e = PolyField::from_components(nu, degree, comps).expect("shape");
            let image = e.jacobian_times(&lin_u, degree).expect("shape").sub(&e.left_mul(ah).expect("shape")).expect("shape");
            for (oo, p) in image.components().iter().enumerate() {
                for (mm, v) in p.terms() {
                    let b = monos.iter().position(|x| x == mm).expect("homogeneous image");
                    op[(oo * k + b, o * k + a)] = v;
                }
            }
        }
    }
    (op, monos)
}

/// Graph of `(u, ψ(u))` as a map into block coordinates.
fn graph(psi: &PolyField) -> Result<PolyField> {
    PolyField::stack(&[PolyField::identity(psi.n_in(), psi.degree()), psi.clone()])
}

/// `F_h(u, ψ(u)) − Dψ(u) F_u(u, ψ(u))`, truncated at `degree`.
fn tangency_defect(ft: &PolyField, psi: &PolyField, degree: u32) -> Result<PolyField> {
    let nu = psi.n_in();
    let on = ft.compose(&graph(psi)?, degree)?;
    let fu = on.select(&(0..nu).collect::<Vec<_>>());
    let fh = on.select(&(nu..ft.n_out()).collect::<Vec<_>>());
    fh.sub(&psi.with_degree(degree).jacobian_times(&fu, degree)?)
}

/// Solves the tangency equation for a field already in block form: the first
/// `nu` coordinates are central, the rest hyperbolic.
pub fn center_manifold_jet(ft: &PolyField, nu: usize, order: u32) -> Result<CenterManifoldJet> {
    let n = ft.n_in();
    if ft.n_out() != n || nu > n {
        return Err(Error::Dimension("block field must be square with nu <= dimension".into()));
    }
    let h = n - nu;
    let ft = ft.truncate(order).with_degree(order);
    let (ac, ah, blocked) = block_form(&ft, nu)?;
    let mut psi = PolyField::zero(nu, h, order);
    let mut conditions = Vec::new();
    for degree in 2..=order {
        if h == 0 {
            conditions.push(1.0);
            continue;
        }
        let rhs = tangency_defect(&blocked, &psi, degree)?.graded_component(degree);
        let (op, monos) = homological_operator(&ac, &ah, degree);
        let k = monos.len();
        let mut b = DVector::zeros(h * k);
        for (o, p) in rhs.components().iter().enumerate() {
            for (mm, v) in p.terms() {
                let idx = monos.iter().position(|x| x == mm).expect("homogeneous part");
                b[o * k + idx] = v;
            }
        }
        let cond = linalg::condition_number(&op);
        if !cond.is_finite() || cond > 1e12 {
            let ev: Vec<String> =
                crate::spectral::eigenvalues(&ah).iter().map(|z| format!("{:.3e}{:+.3e}i", z.re, z.im)).collect();
            return Err(Error::Numerical(format!(
                "homological operator at degree {degree} is singular (condition {cond:e}); hyperbolic spectrum [{}]",
                ev.join(", ")
            )));
        }
        let x = op.lu().solve(&b).ok_or_else(|| Error::Numerical(format!("homological solve failed at degree {degree}")))?;
        for o in 0..h {
            for (a, mono) in monos.iter().enumerate() {
                psi.component_mut(o).add_term(mono.clone(), x[o * k + a]);
            }
        }
        conditions.push(cond);
    }
    Ok(CenterManifoldJet { psi, order, conditions })
}

/// Coefficient-level tangency residual for each degree `2..=order`.
pub fn tangency_residuals(ft: &PolyField, jet: &CenterManifoldJet) -> Result<Vec<f64>> {
    let (_, _, blocked) = block_form(&ft.truncate(jet.order).with_degree(jet.order), jet.psi.n_in())?;
    let defect = tangency_defect(&blocked, &jet.psi, jet.order)?;
    Ok((2..=jet.order).map(|k| defect.graded_component(k).max_abs_coeff()).collect())
}

/// Vector field on a set of coordinates `s` with `y = embed s` in center coordinates.
#[derive(Clone, Debug)]
pub struct ReducedField {
    /// `(s, λ) -> ṡ`.
    pub field: PolyField,
    pub embed: DMatrix<f64>,
    pub names: Vec<String>,
}

impl ReducedField {
    pub fn dim(&self) -> usize {
        self.field.n_out()
    }

    /// The same field in coordinates `t` with `s = embed t`, read back by
    /// `pull` (a left inverse of `embed` on its range). Fails if the range of
    /// `embed` is not invariant.
    pub fn change_coordinates(&self, embed: &DMatrix<f64>, pull: &DMatrix<f64>, names: Vec<String>) -> Result<ReducedField> {
        let r = embed.ncols();
        let inner = augment_param(embed);
        let on = self.field.compose_linear(&inner)?;
        let back = on.left_mul(pull)?;
        let again = back.left_mul(embed)?;
        let defect = again.max_abs_diff(&on)?;
        if defect > 1e-9 * (1.0 + on.max_abs_coeff()) {
            return Err(Error::Internal(format!("coordinate subspace is not invariant under the reduced field (defect {defect:e})")));
        }
        debug_assert_eq!(back.n_out(), r);
        Ok(ReducedField { field: back, embed: &self.embed * embed, names })
    }

    pub fn jacobian(&self, s: &[f64], lambda: f64) -> DMatrix<f64> {
        let mut x = s.to_vec();
        x.push(lambda);
        let j = self.field.jacobian(&x);
        j.view((0, 0), (self.dim(), self.dim())).into_owned()
    }

    pub fn eval(&self, s: &[f64], lambda: f64) -> Vec<f64> {
        let mut x = s.to_vec();
        x.push(lambda);
        self.field.eval(&x)
    }
}

/// `blockdiag(M, 1)`.
pub fn augment_param(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(r + 1, c + 1);
    out.view_mut((0, 0), (r, c)).copy_from(m);
    out[(r, c)] = 1.0;
    out
}

/// Full reduction result: augmented system, manifold jet and reduced field.
#[derive(Clone, Debug)]
pub struct CenterReduction {
    pub aug: AugmentedSystem,
    pub jet: CenterManifoldJet,
    /// Reduced field in center coordinates `y`.
    pub reduced: ReducedField,
    pub tangency: Vec<f64>,
}

impl CenterReduction {
    /// Fundamental-network state on the manifold over center coordinates `y`.
    pub fn lift(&self, y: &[f64], lambda: f64) -> Vec<f64> {
        let mut u = y.to_vec();
        u.push(lambda);
        let z = self.jet.psi.eval(&u);
        let mut xi = u;
        xi.extend(z);
        let full = &self.aug.frame * DVector::from_vec(xi);
        full.as_slice()[..self.aug.state_dim()].to_vec()
    }
}

/// Solves the jet and assembles the reduced field in center coordinates.
pub fn reduce(aug: &AugmentedSystem) -> Result<CenterReduction> {
    let c = aug.center_dim();
    let nu = c + 1;
    let ft = aug.block_field()?;
    let jet = center_manifold_jet(&ft, nu, aug.order)?;
    let tangency = tangency_residuals(&ft, &jet)?;
    let on = ft.compose(&graph(&jet.psi)?, aug.order)?;
    let param_row = on.component(c).max_abs();
    let scale = 1.0 + ft.max_abs_coeff();
    if param_row > 1e-10 * scale {
        return Err(Error::Internal(format!("parameter component of the reduced field is {param_row:e}, expected 0")));
    }
    let field = on.select(&(0..c).collect::<Vec<_>>());
    let names = (1..=c).map(|i| format!("y{i}")).collect();
    let reduced = ReducedField { field, embed: DMatrix::identity(c, c), names };
    Ok(CenterReduction { aug: aug.clone(), jet, reduced, tangency })
}

/// Augments and reduces in one step.
pub fn reduce_network(monoid: &Monoid, f: &ResponseFunction, opts: &ReduceOptions) -> Result<CenterReduction> {
    reduce(&augment(monoid, f, opts)?)
}

/// Checks of a reduction against its defining identities.
#[derive(Clone, Debug, Serialize)]
pub struct ReductionReport {
    pub center_dim: usize,
    pub vanishes_at_origin: bool,
    pub linear_spectrum_max_re: f64,
    /// Largest tangency residual per degree `2..=order`.
    pub tangency: Vec<f64>,
    /// Largest `ψ(B_c u) − B_h ψ(u)` per degree.
    pub psi_equivariance: Vec<f64>,
    pub reduced_equivariance: f64,
    /// `|D_x R(0,0) − V_cᵀ J V_c|` and `|D_λ R(0,0) − V_cᵀ P_c v|`.
    pub linear_state_defect: f64,
    pub linear_param_defect: f64,
    pub conditions: Vec<f64>,
    pub passed: bool,
}

fn psi_equivariance(red: &CenterReduction) -> Result<Vec<f64>> {
    let mut worst = vec![0.0f64; red.jet.order as usize - 1];
    for (bc, bh) in red.aug.split_actions() {
        let lhs = red.jet.psi.compose_linear(&augment_param(&bc))?;
        let rhs = red.jet.psi.left_mul(&bh)?;
        let diff = lhs.sub(&rhs)?;
        for k in 2..=red.jet.order {
            let v = diff.graded_component(k).max_abs_coeff();
            worst[k as usize - 2] = worst[k as usize - 2].max(v);
        }
    }
    Ok(worst)
}

/// Largest restricted-equivariance defect of a field in center coordinates.
pub fn reduced_equivariance_defect(field: &PolyField, actions: &[(DMatrix<f64>, DMatrix<f64>)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (bc, _) in actions {
        let lhs = field.compose_linear(&augment_param(bc))?;
        let rhs = field.left_mul(bc)?;
        worst = worst.max(lhs.max_abs_diff(&rhs)?);
    }
    Ok(worst)
}

/// Verifies `R(0,0) = 0`, the center spectrum, equivariance and the linear-part identities.
pub fn verify_reduced(red: &CenterReduction, tol: f64) -> Result<ReductionReport> {
    let aug = &red.aug;
    let c = aug.center_dim();
    let r = &red.reduced.field;
    let scale = 1.0 + aug.field.max_abs_coeff();
    let vanishes_at_origin = r.constant_part().iter().all(|v| v.abs() <= tol * scale);
    let lin = r.linear_part();
    let dx = lin.view((0, 0), (c, c)).into_owned();
    let dl = lin.view((0, c), (c, 1)).into_owned();
    let vc = aug.split.center();
    let expect_dx = vc.transpose() * &aug.jacobian * vc;
    let expect_dl = vc.transpose() * aug.split.p_center() * &aug.param_direction;
    let linear_state_defect = if c == 0 { 0.0 } else { linalg::max_abs(&(dx.clone() - expect_dx)) };
    let linear_param_defect = if c == 0 { 0.0 } else { (dl - expect_dl).amax() };
    let linear_spectrum_max_re =
        crate::spectral::eigenvalues(&dx).iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let psi_equivariance = psi_equivariance(red)?;
    let reduced_equivariance = reduced_equivariance_defect(r, &aug.split_actions())?;
    let passed = vanishes_at_origin
        && linear_spectrum_max_re < aug.split.tol_re.max(tol)
        && red.tangency.iter().all(|v| *v <= tol * scale)
        && psi_equivariance.iter().all(|v| *v <= tol * scale)
        && reduced_equivariance <= tol * scale
        && linear_state_defect <= 1e-12 * scale
        && linear_param_defect <= 1e-12 * scale;
    Ok(ReductionReport {
        center_dim: c,
        vanishes_at_origin,
        linear_spectrum_max_re,
        tangency: red.tangency.clone(),
        psi_equivariance,
        reduced_equivariance,
        linear_state_defect,
        linear_param_defect,
        conditions: red.jet.conditions.clone(),
        passed,
    })
}

/// Restricts the reduced field to `W_c ∩ Δ_P`, in orthonormal coordinates.
pub fn restrict_to_synchrony(red: &CenterReduction, p: &Partition) -> Result<ReducedField> {
    let vc = red.aug.split.center();
    let delta = p.indicator(red.aug.cell_dim);
    let meet = linalg::intersect(&delta, vc, 1e-9);
    let e = if meet.ncols() == 0 {
        DMatrix::zeros(vc.ncols(), 0)
    } else {
        crate::spectral::canonical_orthonormal(&(vc.transpose() * meet))
    };
    let names = (1..=e.ncols()).map(|i| format!("s{i}")).collect();
    red.reduced.change_coordinates(&e, &e.transpose(), names)
}

/// Builds `Γ_f` whose reduced field in center coordinates is `Ã + G`, where
/// `Ã` is the linear part of the given system. `G` maps `(y, λ)` to `W_c`
/// coordinates, vanishes to second order and is equivariant.
pub fn realize(aug: &AugmentedSystem, g: &PolyField) -> Result<ResponseFunction> {
    let c = aug.center_dim();
    let m = aug.state_dim();
    if g.n_in() != c + 1 || g.n_out() != c {
        return Err(Error::Dimension(format!("G must map {} center coordinates to {c}", c + 1)));
    }
    if g.constant_part().iter().any(|v| *v != 0.0) || linalg::max_abs(&g.linear_part()) != 0.0 {
        return Err(Error::Dimension("G must vanish to second order at the origin".into()));
    }
    let scale = 1.0 + g.max_abs_coeff();
    if reduced_equivariance_defect(g, &aug.split_actions())? > 1e-10 * scale {
        return Err(Error::NotEquivariant("G does not commute with the action on the center space".into()));
    }
    let order = aug.order.max(g.degree());
    let ft = aug.block_field()?;
    let lin = ft.linear_part();
    let nu = c + 1;
    let mut blk = DMatrix::zeros(m + 1, m + 1);
    blk.view_mut((0, 0), (nu, nu)).copy_from(&lin.view((0, 0), (nu, nu)));
    blk.view_mut((nu, nu), (m - c, m - c)).copy_from(&lin.view((nu, nu), (m - c, m - c)));
    let g_xi = g.compose_linear(&{
        let mut sel = DMatrix::zeros(nu, m + 1);
        sel.view_mut((0, 0), (nu, nu)).fill_with_identity();
        sel
    })?;
    let mut comps: Vec<Poly> = g_xi.components().to_vec();
    comps.extend(std::iter::repeat(Poly::zero(m + 1)).take(m + 1 - c));
    let nonlinear = PolyField::from_components(m + 1, order, comps)?;
    let new_block = PolyField::linear(&blk, order).add(&nonlinear)?;
    let ambient = new_block.compose_linear(&aug.frame_inv)?.left_mul(&aug.frame)?;
    let gamma = ambient.select(&(0..m).collect::<Vec<_>>());
    let gamma = gamma.chop(1e-15 * (1.0 + gamma.max_abs_coeff()));
    let actions = rep_matrices(&aug.monoid, aug.cell_dim);
    if !is_equivariant(&gamma, &actions, 1e-9)? {
        return Err(Error::Internal("realized field is not equivariant".into()));
    }
    response_from_equivariant(&gamma, &aug.monoid, aug.cell_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{complete_monoid, parse_network_spec};
    use crate::poly::Monomial;
    use crate::random;

    fn network_b() -> Monoid {
        complete_monoid(
            &parse_network_spec(
                r#"{"cells":3,"maps":[{"label":"s2","target":[2,3,3]},{"label":"s3","target":[2,2,2]},{"label":"s4","target":[3,3,3]}]}"#,
            )
            .unwrap(),
        )
    }

    #[test]
    fn decoupled_quadratic_graph() {
        // ẋ_c = 0, ẋ_h = -x_h + x_c^2
        let mut comps = vec![Poly::zero(2), Poly::zero(2)];
        comps[1].add_term(Monomial::var(2, 1), -1.0);
        comps[1].add_term(Monomial::new(vec![2, 0]), 1.0);
        let ft = PolyField::from_components(2, 3, comps).unwrap();
        let jet = center_manifold_jet(&ft, 1, 3).unwrap();
        assert!((jet.psi.coeff(0, &Monomial::new(vec![2])) - 1.0).abs() < 1e-14);
        assert_eq!(jet.psi.component(0).len(), 1);
    }

    #[test]
    fn zero_hyperbolic_nonlinearity_gives_flat_graph() {
        let mut comps = vec![Poly::zero(2), Poly::zero(2)];
        comps[0].add_term(Monomial::new(vec![2, 0]), 1.0);
        comps[1].add_term(Monomial::var(2, 1), -2.0);
        let ft = PolyField::from_components(2, 3, comps).unwrap();
        assert!(center_manifold_jet(&ft, 1, 3).unwrap().psi.is_zero());
    }

    #[test]
    fn constant_term_is_rejected() {
        let m = network_b();
        let mut rng = random::rng(1);
        let f = random::random_response(&mut rng, 4, 1, 2);
        assert!(matches!(augment(&m, &f, &ReduceOptions::default()), Err(Error::NotEquilibrium(_))));
    }

    #[test]
    fn network_b_pipeline() {
        let m = network_b();
        let mut rng = random::rng(5);
        let f = random::bifurcation_response(&mut rng, 4, 3);
        let red = reduce_network(&m, &f, &ReduceOptions::default()).unwrap();
        assert_eq!(red.aug.center_dim(), 3);
        let rep = verify_reduced(&red, 1e-9).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn linear_response_gives_linear_reduced_field() {
        let m = network_b();
        let mut rng = random::rng(2);
        let f = random::bifurcation_response(&mut rng, 4, 1);
        let red = reduce_network(&m, &f, &ReduceOptions::default()).unwrap();
        for k in 2..=3 {
            assert!(red.reduced.field.graded_component(k).max_abs_coeff() < 1e-13);
        }
    }
}
