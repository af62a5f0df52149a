//! Steady-state branches of a reduced field: multistart Newton over a λ grid,
//! linking by continuation, synchrony labels, asymptotic fits and stability.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{cell_projection, complete_monoid, injectivity_witness, Monoid, NetworkSpec, ResponseFunction};
use crate::poly::{Monomial, PolyField};
use crate::reduce::{reduce_network, CenterReduction, ReduceOptions, ReducedField};
use crate::spectral::eigenvalues;
use crate::synchrony::{enumerate_robust, Partition};

/// Genericity threshold for the nondegeneracy conditions.
pub const GENERICITY_TOL: f64 = 1e-6;
/// Model-field coefficients below this (relative) size are rounding noise.
pub const MODEL_CHOP: f64 = 1e-10;
/// Steady-state residual required of every stored branch point.
pub const RESIDUAL_TOL: f64 = 1e-11;

/// The worked example a network is recognized as, by its completed maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NetworkTag {
    A,
    B,
    C,
    Other,
}

impl fmt::Display for NetworkTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NetworkTag::A => "A",
            NetworkTag::B => "B",
            NetworkTag::C => "C",
            NetworkTag::Other => "other",
        };
        f.write_str(s)
    }
}

fn target_set(monoid: &Monoid) -> Vec<Vec<usize>> {
    let mut t: Vec<Vec<usize>> = monoid.elements.iter().map(|e| e.target.clone()).collect();
    t.sort();
    t
}

/// Recognizes the three three-cell examples from their completed monoids.
pub fn detect_tag(monoid: &Monoid) -> NetworkTag {
    if monoid.cells() != 3 {
        return NetworkTag::Other;
    }
    let known: [(NetworkTag, &[[usize; 3]]); 3] = [
        (NetworkTag::A, &[[0, 1, 2], [1, 2, 2], [2, 2, 2]]),
        (NetworkTag::B, &[[0, 1, 2], [1, 2, 2], [1, 1, 1], [2, 2, 2]]),
        (NetworkTag::C, &[[0, 1, 2], [1, 2, 2], [0, 0, 0], [2, 2, 2], [1, 1, 1]]),
    ];
    let have = target_set(monoid);
    for (tag, maps) in known {
        let mut want: Vec<Vec<usize>> = maps.iter().map(|m| m.to_vec()).collect();
        want.sort();
        if want == have {
            return tag;
        }
    }
    NetworkTag::Other
}

/// Coordinates on `W' ∩ Δ_P`, where `W'` is the invariant complement of full
/// synchrony on which one constant cell vanishes and `Δ_P` is the image of the
/// original network inside the fundamental one.
#[derive(Clone, Debug)]
pub struct ModelFrame {
    /// Fundamental cell forced to zero.
    pub zero_cell: usize,
    /// Partition of fundamental cells by `σ_j(p)`.
    pub image: Partition,
    /// State `X` on `W' ∩ Δ_P` from model coordinates (class values).
    pub embed_state: DMatrix<f64>,
    pub names: Vec<String>,
}

/// Builds the model frame. The vanishing cell is the constant map whose
/// image is the highest-numbered original cell.
pub fn model_frame(monoid: &Monoid, cell: usize) -> Result<ModelFrame> {
    let zero_cell = monoid
        .elements
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_constant())
        .max_by_key(|(_, e)| e.target[0])
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Dimension("no constant input map to anchor the model frame".into()))?;
    let ids: Vec<usize> = monoid.elements.iter().map(|e| e.apply(cell)).collect();
    let image = Partition::new(&ids);
    let dropped = image.class_of()[zero_cell];
    let classes = image.classes();
    let kept: Vec<usize> = (0..classes.len()).filter(|&k| k != dropped).collect();
    let ind = image.indicator(1);
    let mut embed_state = DMatrix::zeros(monoid.size(), kept.len());
    let mut names = Vec::new();
    for (col, &k) in kept.iter().enumerate() {
        embed_state.set_column(col, &ind.column(k));
        names.push(format!("X{}", classes[k][0] + 1));
    }
    Ok(ModelFrame { zero_cell, image, embed_state, names })
}

/// The reduced field in model coordinates, `R'(v) = Φ R(Φ⁻¹ v)` with `Φ`
/// the equivariant projection `X -> X − X_zero 1` restricted to `W_c`.
pub fn model_field(red: &CenterReduction, frame: &ModelFrame) -> Result<ReducedField> {
    if red.aug.cell_dim != 1 {
        return Err(Error::Dimension("model frame needs scalar cells".into()));
    }
    let m = red.aug.state_dim();
    let vc = red.aug.split.center();
    let mut proj = DMatrix::<f64>::identity(m, m);
    for i in 0..m {
        proj[(i, frame.zero_cell)] -= 1.0;
    }
    let pvc = &proj * vc;
    let e = &frame.embed_state;
    let embed = linalg::pinv(&pvc) * e;
    let back = &pvc * &embed - e;
    if linalg::max_abs(&back) > 1e-9 {
        return Err(Error::Numerical("model subspace is not covered by the center subspace".into()));
    }
    let pull = linalg::pinv(e) * &pvc;
    red.reduced.change_coordinates(&embed, &pull, frame.names.clone())
}

/// Scalars of the local normal form, read from Taylor coefficients of the
/// model-frame field.
#[derive(Clone, Debug, Serialize)]
pub struct ModelCoefficients {
    pub tag: NetworkTag,
    pub c: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Parameter coefficient for network C.
    pub a4: Option<f64>,
    /// Difference between the two readings of the parameter coefficient.
    pub consistency: f64,
}

fn mono(e: &[u16]) -> Monomial {
    Monomial::new(e.to_vec())
}

/// Reads the normal-form scalars for networks B and C.
///
/// Network B, in `(X1, X2, λ)`: `a1 = [X1²]R1`, `a3 = [X1 λ]R1`,
/// `C = [X2]R1`, `a2 = [X2²]R2 − a1`, checked by `[X2 λ]R2 = a3`.
///
/// Network C: `a2 = [X1 X2]R2`, `a1 = [X1²]R1 − a2`, `a3 = [X2²]R2 − a1`,
/// `a4 = [X1 λ]R1`, checked by `[X2 λ]R2 = a4`, `C = [X2]R1`.
pub fn extract_model_coefficients(field: &PolyField, tag: NetworkTag) -> Result<ModelCoefficients> {
    if field.n_in() != 3 || field.n_out() != 2 {
        return Err(Error::Dimension("model field must be planar with one parameter".into()));
    }
    let r = |o: usize, e: &[u16]| field.coeff(o, &mono(e));
    let out = match tag {
        NetworkTag::B => {
            let a1 = r(0, &[2, 0, 0]);
            let a3 = r(0, &[1, 0, 1]);
            let c = r(0, &[0, 1, 0]);
            let a2 = r(1, &[0, 2, 0]) - a1;
            let consistency = (r(1, &[0, 1, 1]) - a3).abs();
            let checks = [("C", c), ("a1", a1), ("a3", a3), ("a1 + a2", a1 + a2)];
            degenerate(&checks)?;
            ModelCoefficients { tag, c, a1, a2, a3, a4: None, consistency }
        }
        NetworkTag::C => {
            let a2 = r(1, &[1, 1, 0]);
            let a1 = r(0, &[2, 0, 0]) - a2;
            let a3 = r(1, &[0, 2, 0]) - a1;
            let a4 = r(0, &[1, 0, 1]);
            let c = r(0, &[0, 1, 0]);
            let consistency = (r(1, &[0, 1, 1]) - a4).abs();
            let checks = [("C", c), ("a2", a2), ("a1", a1), ("a1 + a2", a1 + a2), ("a4", a4)];
            degenerate(&checks)?;
            ModelCoefficients { tag, c, a1, a2, a3, a4: Some(a4), consistency }
        }
        _ => return Err(Error::Dimension(format!("no normal-form coefficients for network {tag}"))),
    };
    Ok(out)
}

fn degenerate(checks: &[(&str, f64)]) -> Result<()> {
    let bad: Vec<String> =
        checks.iter().filter(|(_, v)| v.abs() < GENERICITY_TOL).map(|(n, v)| format!("|{n}| = {:.3e}", v.abs())).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Degenerate(bad.join(", ")))
    }
}

/// Branch class by synchrony of the original network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum BranchKind {
    Full,
    Partial,
    None,
}

impl fmt::Display for BranchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BranchKind::Full => "Full",
            BranchKind::Partial => "Partial",
            BranchKind::None => "None",
        })
    }
}

/// Leading-order predictions for the branches of networks B and C.
impl ModelCoefficients {
    /// Coefficient of `X1 λ`: `a3` for network B, `a4` for network C.
    pub fn lam(&self) -> f64 {
        self.a4.unwrap_or(self.a3)
    }

    /// Predicted `X1` (and `X2`) coefficients of `λ^p` for each branch.
    pub fn partial_x1(&self) -> f64 {
        match self.tag {
            NetworkTag::B => -self.a3 / self.a1,
            _ => -self.lam() / (self.a1 + self.a2),
        }
    }

    /// Network B: `X1 = ±k √|λ|` on the side where `C a3 λ / (a1 (a1 + a2)) > 0`.
    pub fn nonsync_sqrt(&self) -> (f64, f64) {
        let q = self.c * self.a3 / (self.a1 * (self.a1 + self.a2));
        (q.abs().sqrt(), q.signum())
    }

    /// Network B: `X2 = −a3/(a1 + a2) λ` on the non-synchronous branch.
    pub fn nonsync_b_x2(&self) -> f64 {
        -self.a3 / (self.a1 + self.a2)
    }

    /// Network C: `X1 = −a4/a2 λ`, `X2 = −a4² a1/(C a2²) λ²`.
    pub fn nonsync_c(&self) -> (f64, f64) {
        let a4 = self.lam();
        (-a4 / self.a2, -a4 * a4 * self.a1 / (self.c * self.a2 * self.a2))
    }

    /// Network C: `β1 + β2` and `β1 β2` on the non-synchronous branch.
    pub fn nonsync_c_trace_det(&self) -> (f64, f64) {
        let a4 = self.lam();
        (-a4 * (2.0 * self.a1 + self.a2) / self.a2, a4 * a4 * self.a1 / self.a2)
    }

    /// Leading-order model coordinates of every nontrivial branch at `lambda`.
    pub fn leading_points(&self, lambda: f64) -> Vec<Vec<f64>> {
        let mut out = vec![vec![self.partial_x1() * lambda, 0.0]];
        match self.tag {
            NetworkTag::B => {
                let (amp, sign) = self.nonsync_sqrt();
                if sign * lambda > 0.0 {
                    let x2 = self.nonsync_b_x2() * lambda;
                    let x1 = amp * lambda.abs().sqrt();
                    out.push(vec![x1, x2]);
                    out.push(vec![-x1, x2]);
                }
            }
            _ => {
                let (x1, x2) = self.nonsync_c();
                out.push(vec![x1 * lambda, x2 * lambda * lambda]);
            }
        }
        out
    }

    /// Eigenvalue coefficients of `λ` on the partially synchronous branch.
    pub fn partial_eigen(&self) -> (f64, f64) {
        match self.tag {
            NetworkTag::B => (self.a3, -self.a3),
            _ => {
                let a4 = self.lam();
                (-a4, self.a1 * a4 / (self.a1 + self.a2))
            }
        }
    }

    /// Double eigenvalue coefficient on the fully synchronous branch.
    pub fn full_eigen(&self) -> f64 {
        self.lam()
    }
}

/// One steady state on a branch.
#[derive(Clone, Debug, Serialize)]
pub struct BranchPoint {
    pub lambda: f64,
    pub coords: Vec<f64>,
    /// Eigenvalues of the reduced Jacobian, as `(re, im)`.
    pub eigenvalues: Vec<(f64, f64)>,
    pub residual: f64,
    /// State of the original network, when a lift is available.
    pub state: Option<Vec<f64>>,
}

/// Fitted leading behavior `x ≈ k |λ|^p`.
#[derive(Clone, Debug, Serialize)]
pub struct Fit {
    /// `None` when the quantity vanishes along the branch (exponent ∞).
    pub exponent: Option<f64>,
    pub coefficient: f64,
    /// Exponent snapped to the nearest half-integer, used for `coefficient`.
    pub snapped: Option<f64>,
    pub residual: f64,
}

impl Fit {
    fn zero() -> Fit {
        Fit { exponent: None, coefficient: 0.0, snapped: None, residual: 0.0 }
    }

    pub fn exponent_label(&self) -> String {
        match self.exponent {
            None => "inf".into(),
            Some(p) => format!("{p:.3}"),
        }
    }
}

/// A steady-state curve on one side of `λ = 0`.
#[derive(Clone, Debug, Serialize)]
pub struct Branch {
    /// `+1` for `λ > 0`, `-1` for `λ < 0`.
    pub side: i8,
    pub points: Vec<BranchPoint>,
    pub synchrony: Option<Partition>,
    pub kind: Option<BranchKind>,
    /// Fit of the state norm (original network when lifted, else model).
    pub norm_fit: Fit,
    pub coord_fits: Vec<Fit>,
    /// Signs of the eigenvalue real parts, `+` first.
    pub signs: String,
    pub indeterminate: bool,
}

impl Branch {
    pub fn label(&self) -> String {
        self.synchrony.as_ref().map(|p| p.to_string()).unwrap_or_default()
    }

    /// Point whose `|λ|` is closest to `target`.
    pub fn point_near(&self, target: f64) -> &BranchPoint {
        self.points
            .iter()
            .min_by(|a, b| {
                let da = (a.lambda.abs().ln() - target.ln()).abs();
                let db = (b.lambda.abs().ln() - target.ln()).abs();
                da.partial_cmp(&db).unwrap()
            })
            .expect("branches are nonempty")
    }
}

/// Settings for the branch search.
#[derive(Clone, Debug, Serialize)]
pub struct BranchOptions {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points_per_side: usize,
    /// Largest accepted coordinate norm; larger roots are truncation artifacts.
    pub radius: f64,
    pub dedup_tol: f64,
    pub link_tol: f64,
    pub max_starts: usize,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions {
            lambda_min: 1e-4,
            lambda_max: 1e-2,
            points_per_side: 20,
            radius: 0.5,
            dedup_tol: 1e-9,
            link_tol: 0.5,
            max_starts: 4096,
        }
    }
}

/// Symmetric grid, `λ < 0` first, log-spaced in `|λ|`.
pub fn lambda_grid(opts: &BranchOptions) -> Result<Vec<f64>> {
    if !(opts.lambda_min > 0.0 && opts.lambda_max > opts.lambda_min) || opts.points_per_side < 2 {
        return Err(Error::Dimension("λ grid needs 0 < min < max and at least two points per side".into()));
    }
    let n = opts.points_per_side;
    let (lo, hi) = (opts.lambda_min.ln(), opts.lambda_max.ln());
    let mags: Vec<f64> = (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect();
    let mut g: Vec<f64> = mags.iter().rev().map(|m| -m).collect();
    g.extend(mags);
    Ok(g)
}

fn starts(dim: usize, lambda: f64, max_starts: usize) -> Vec<Vec<f64>> {
    let l = lambda.abs();
    let mut vals = vec![0.0];
    for e in [0.5, 1.0, 2.0] {
        for c in [0.1, 1.0, 10.0] {
            let v = c * l.powf(e);
            vals.push(v);
            vals.push(-v);
        }
    }
    let k = vals.len();
    let total = (k as f64).powi(dim as i32);
    if total <= max_starts as f64 {
        let mut out = vec![Vec::new()];
        for _ in 0..dim {
            out = out.into_iter().flat_map(|p| vals.iter().map(move |v| [p.clone(), vec![*v]].concat())).collect();
        }
        out
    } else {
        // deterministic quasi-random subset of the tensor grid
        let mut out = Vec::with_capacity(max_starts);
        let mut state: u64 = 0x9e3779b97f4a7c15;
        for _ in 0..max_starts {
            let p = (0..dim)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    vals[(state % k as u64) as usize]
                })
                .collect();
            out.push(p);
        }
        out
    }
}

fn newton(f: &crate::poly::CompiledField, x0: &[f64], lambda: f64, radius: f64) -> Option<(Vec<f64>, f64)> {
    let n = x0.len();
    let mut arg = x0.to_vec();
    arg.push(lambda);
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut polish = 0;
    for _ in 0..80 {
        let r = f.eval(&arg);
        let jac = f.jacobian(&arg);
        let j = jac.view((0, 0), (n, n)).into_owned();
        let step = j.lu().solve(&DVector::from_vec(r.clone()))?;
        for i in 0..n {
            arg[i] -= step[i];
        }
        if !arg.iter().all(|v| v.is_finite()) || norm(&arg[..n]) > 10.0 * radius {
            return None;
        }
        if step.amax() <= 1e-15 * (1e-300 + norm(&arg[..n])) || step.amax() == 0.0 {
            polish += 1;
            if polish >= 2 {
                break;
            }
        }
    }
    let res = norm(&f.eval(&arg));
    if res <= RESIDUAL_TOL && norm(&arg[..n]) <= radius {
        arg.pop();
        Some((arg, res))
    } else {
        None
    }
}

/// Newton solve of `R(x, λ) = 0` from `start`, held to the branch residual tolerance.
pub fn refine_point(field: &ReducedField, start: &[f64], lambda: f64) -> Result<Vec<f64>> {
    newton(&field.field.compile(), start, lambda, f64::INFINITY)
        .map(|(x, _)| x)
        .ok_or_else(|| Error::Numerical(format!("Newton did not converge at λ = {lambda:e}")))
}

fn solve_at(field: &ReducedField, lambda: f64, opts: &BranchOptions) -> Vec<(Vec<f64>, f64)> {
    let f = field.field.compile();
    let mut found: Vec<(Vec<f64>, f64)> = Vec::new();
    for s in starts(field.dim(), lambda, opts.max_starts) {
        if let Some((x, res)) = newton(&f, &s, lambda, opts.radius) {
            let dup = found.iter().any(|(y, _)| x.iter().zip(y).all(|(a, b)| (a - b).abs() <= opts.dedup_tol));
            if !dup {
                found.push((x, res));
            }
        }
    }
    found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    found
}

fn predict(points: &[BranchPoint], lambda: f64) -> Vec<f64> {
    let last = points.last().expect("nonempty");
    if points.len() < 2 {
        let r = lambda / last.lambda;
        return last.coords.iter().map(|x| x * r).collect();
    }
    let prev = &points[points.len() - 2];
    let t = (lambda.abs() / last.lambda.abs()).ln() / (last.lambda.abs() / prev.lambda.abs()).ln();
    last.coords
        .iter()
        .zip(&prev.coords)
        .map(|(&x1, &x0)| {
            if x1 == 0.0 || x0 == 0.0 || x1.signum() != x0.signum() {
                x1
            } else {
                x1 * (x1 / x0).powf(t)
            }
        })
        .collect()
}

fn rel_distance(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let s = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if d == 0.0 {
        0.0
    } else {
        d / s.max(1e-300)
    }
}

/// Maps model coordinates at `λ` to a state of the original network.
pub type Lift<'a> = dyn Fn(&[f64], f64) -> Vec<f64> + Sync + 'a;

/// Solutions found on the grid, linked into branches.
#[derive(Clone, Debug, Serialize)]
pub struct BranchSet {
    pub grid: Vec<f64>,
    pub branches: Vec<Branch>,
    /// Grid values where no start converged.
    pub gaps: Vec<f64>,
    /// Discarded curves that do not shrink to the origin.
    pub discarded: usize,
}

fn eig_pairs(j: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut ev: Vec<(f64, f64)> = eigenvalues(j).iter().map(|z| (z.re, z.im)).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

/// Solves `R(x, λ) = 0` on the grid and links the solutions into branches.
pub fn find_branches(field: &ReducedField, opts: &BranchOptions, lift: Option<&Lift>) -> Result<BranchSet> {
    let grid = lambda_grid(opts)?;
    let solved: Vec<Vec<(Vec<f64>, f64)>> = grid.par_iter().map(|&l| solve_at(field, l, opts)).collect();
    let gaps: Vec<f64> = grid.iter().zip(&solved).filter(|(_, s)| s.is_empty()).map(|(l, _)| *l).collect();
    let mut branches = Vec::new();
    let mut discarded = 0;
    for side in [-1i8, 1] {
        let mut order: Vec<usize> = (0..grid.len()).filter(|&i| grid[i].signum() as i8 == side).collect();
        order.sort_by(|&a, &b| grid[a].abs().partial_cmp(&grid[b].abs()).unwrap());
        let mut curves: Vec<Vec<BranchPoint>> = Vec::new();
        for &i in &order {
            let lambda = grid[i];
            let sols = &solved[i];
            let mut used = vec![false; sols.len()];
            let mut taken = vec![false; curves.len()];
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for (ci, c) in curves.iter().enumerate() {
                let p = predict(c, lambda);
                for (si, (x, _)) in sols.iter().enumerate() {
                    let d = rel_distance(&p, x);
                    if d <= opts.link_tol {
                        pairs.push((d, ci, si));
                    }
                }
            }
            pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let make = |x: &Vec<f64>, res: f64| BranchPoint {
                lambda,
                coords: x.clone(),
                eigenvalues: eig_pairs(&field.jacobian(x, lambda)),
                residual: res,
                state: lift.map(|l| l(x, lambda)),
            };
            for (_, ci, si) in pairs {
                if taken[ci] || used[si] {
                    continue;
                }
                taken[ci] = true;
                used[si] = true;
                let (x, res) = &sols[si];
                curves[ci].push(make(x, *res));
            }
            for (si, (x, res)) in sols.iter().enumerate() {
                if !used[si] {
                    curves.push(vec![make(x, *res)]);
                }
            }
        }
        for c in curves {
            match finish_branch(side, c) {
                Some(b) => branches.push(b),
                None => discarded += 1,
            }
        }
    }
    branches.sort_by(|a, b| {
        a.side.cmp(&b.side).then_with(|| {
            let ka = &a.point_near(1e-3).coords;
            let kb = &b.point_near(1e-3).coords;
            ka.partial_cmp(kb).unwrap()
        })
    });
    Ok(BranchSet { grid, branches, gaps, discarded })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn finish_branch(side: i8, points: Vec<BranchPoint>) -> Option<Branch> {
    if points.len() < 8 {
        return None;
    }
    let norms: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.lambda, norm2(p.state.as_deref().unwrap_or(&p.coords))))
        .collect();
    let coord_norms: Vec<(f64, f64)> = points.iter().map(|p| (p.lambda, norm2(&p.coords))).collect();
    // the branch must shrink to the origin as λ -> 0, both overall and
    // between typical neighbouring points (a far root can pick up one jump)
    let cf = fit_exponent(&coord_norms).ok()?;
    if let Some(p) = cf.exponent {
        let mut slopes: Vec<f64> = coord_norms
            .windows(2)
            .map(|w| (w[1].1 / w[0].1).ln() / (w[1].0 / w[0].0).ln())
            .collect();
        slopes.sort_by(|a, b| a.total_cmp(b));
        if p < 0.25 || !(slopes[slopes.len() / 2] >= 0.25) {
            return None;
        }
    }
    let norm_fit = fit_exponent(&norms).ok()?;
    let dim = points[0].coords.len();
    let coord_fits = (0..dim)
        .map(|k| {
            let series: Vec<(f64, f64)> = points.iter().map(|p| (p.lambda, p.coords[k])).collect();
            fit_exponent(&series).unwrap_or_else(|_| Fit::zero())
        })
        .collect();
    let (signs, indeterminate) = sign_pattern(&points);
    Some(Branch { side, points, synchrony: None, kind: None, norm_fit, coord_fits, signs, indeterminate })
}

/// Sign pattern of eigenvalue real parts at the point with `|λ|` nearest the
/// geometric middle of the branch, `+` first.
fn sign_pattern(points: &[BranchPoint]) -> (String, bool) {
    let mid = &points[points.len() / 2];
    let scale = 1.0 + mid.eigenvalues.iter().map(|e| e.0.hypot(e.1)).fold(0.0, f64::max);
    let mut ind = false;
    let mut s: Vec<char> = mid
        .eigenvalues
        .iter()
        .map(|e| {
            if e.0.abs() < 1e-12 * scale {
                ind = true;
                '0'
            } else if e.0 > 0.0 {
                '+'
            } else {
                '-'
            }
        })
        .collect();
    s.sort_by_key(|c| match c {
        '+' => 0,
        '0' => 1,
        _ => 2,
    });
    (s.into_iter().collect(), ind)
}

/// Least-squares fit of `log|x| = log k + p log|λ| + γ |λ|^½ + δ |λ|`.
///
/// The two correction terms absorb the next orders of a Puiseux expansion,
/// so the slope is the leading exponent rather than a secant. The coefficient
/// is refitted with the exponent snapped to the nearest half-integer.
pub fn fit_exponent(series: &[(f64, f64)]) -> Result<Fit> {
    if series.iter().all(|(_, v)| v.abs() <= 1e-13) {
        return Ok(Fit::zero());
    }
    if series.len() < 8 {
        return Err(Error::Numerical(format!("need at least 8 points to fit, have {}", series.len())));
    }
    if series.iter().any(|(l, v)| *v == 0.0 || *l == 0.0) {
        return Err(Error::Numerical("coordinate vanishes at some but not all points".into()));
    }
    let sign = series[series.len() / 2].1.signum();
    let n = series.len();
    let row = |l: f64| [1.0, l.abs().ln(), l.abs().sqrt(), l.abs()];
    let a = DMatrix::from_fn(n, 4, |i, j| row(series[i].0)[j]);
    let b = DVector::from_iterator(n, series.iter().map(|(_, v)| v.abs().ln()));
    let sol = a.clone().svd(true, true).solve(&b, 1e-14).map_err(|e| Error::Numerical(e.to_string()))?;
    let residual = (&a * &sol - &b).amax();
    let p = sol[1];
    let snapped = (2.0 * p).round() / 2.0;
    let a2 = DMatrix::from_fn(n, 3, |i, j| [1.0, row(series[i].0)[2], row(series[i].0)[3]][j]);
    let b2 = DVector::from_iterator(n, series.iter().map(|(l, v)| v.abs().ln() - snapped * l.abs().ln()));
    let sol2 = a2.svd(true, true).solve(&b2, 1e-14).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(Fit { exponent: Some(p), coefficient: sign * sol2[0].exp(), snapped: Some(snapped), residual })
}

/// Labels each branch with the coarsest balanced partition of the original
/// network whose classes stay equal (within `1e-8 (1 + |x|)`) along the branch.
pub fn label_branches(set: &mut BranchSet, spec: &NetworkSpec) -> Result<()> {
    let parts = enumerate_robust(spec)?;
    let n = spec.cells;
    let d = spec.cell_dim;
    for b in &mut set.branches {
        let mut eq = vec![vec![true; n]; n];
        for p in &b.points {
            let x = match &p.state {
                Some(x) => x,
                None => return Err(Error::Internal("branch labeling needs lifted states".into())),
            };
            let tol = 1e-8 * (1.0 + norm2(x));
            for i in 0..n {
                for j in 0..n {
                    if (0..d).any(|k| (x[i * d + k] - x[j * d + k]).abs() > tol) {
                        eq[i][j] = false;
                    }
                }
            }
        }
        let label = parts
            .iter()
            .find(|p| (0..n).all(|i| (0..n).all(|j| !p.same_class(i, j) || eq[i][j])))
            .cloned()
            .unwrap_or_else(|| Partition::singletons(n));
        b.kind = Some(if label.class_count() == 1 {
            BranchKind::Full
        } else if label.is_singletons() {
            BranchKind::None
        } else {
            BranchKind::Partial
        });
        b.synchrony = Some(label);
    }
    Ok(())
}

/// Everything needed to analyze one network and response.
#[derive(Clone, Debug)]
pub struct AnalysisOptions {
    pub reduce: ReduceOptions,
    pub branches: BranchOptions,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { reduce: ReduceOptions::default(), branches: BranchOptions::default() }
    }
}

/// Result of the full pipeline for one draw.
#[derive(Clone, Debug)]
pub struct BifurcationAnalysis {
    pub tag: NetworkTag,
    pub monoid: Monoid,
    pub reduction: CenterReduction,
    pub frame: Option<ModelFrame>,
    pub model: ReducedField,
    pub coefficients: Option<ModelCoefficients>,
    pub branches: BranchSet,
    /// `π_1` left inverse, from fundamental to original states.
    pub unproject: DMatrix<f64>,
}

impl BifurcationAnalysis {
    /// Original-network state for model coordinates `v` at `λ`.
    pub fn lift(&self, v: &[f64], lambda: f64) -> Vec<f64> {
        lift_with(&self.reduction, &self.model, &self.unproject, v, lambda)
    }

    pub fn branches_of(&self, kind: BranchKind) -> Vec<&Branch> {
        self.branches.branches.iter().filter(|b| b.kind == Some(kind)).collect()
    }
}

fn lift_with(red: &CenterReduction, model: &ReducedField, unproject: &DMatrix<f64>, v: &[f64], lambda: f64) -> Vec<f64> {
    let y = &model.embed * DVector::from_column_slice(v);
    let fund = red.lift(y.as_slice(), lambda);
    (unproject * DVector::from_vec(fund)).as_slice().to_vec()
}

/// Linear maps between center coordinates `y` and model coordinates `v`:
/// `y = embed v` on the model subspace, `v = pull y` there.
#[derive(Clone, Debug)]
pub struct ModelMap {
    pub embed: DMatrix<f64>,
    pub pull: DMatrix<f64>,
}

impl ModelMap {
    /// A field on `(y, λ)` with values in `y`, written in `(v, λ)`.
    pub fn to_model(&self, g: &PolyField) -> Result<PolyField> {
        g.compose_linear(&crate::reduce::augment_param(&self.embed))?.left_mul(&self.pull)
    }
}

/// Model field (model frame when available, otherwise orthonormal
/// coordinates on `W_c ∩ Δ_P` for the image `P` of the original network).
pub fn model_for(red: &CenterReduction, monoid: &Monoid) -> Result<(Option<ModelFrame>, ReducedField)> {
    if let Ok(frame) = model_frame(monoid, 0) {
        if let Ok(model) = model_field(red, &frame) {
            return Ok((Some(frame), model));
        }
    }
    let ids: Vec<usize> = monoid.elements.iter().map(|e| e.apply(0)).collect();
    let model = crate::reduce::restrict_to_synchrony(red, &Partition::new(&ids))?;
    Ok((None, model))
}

/// Center-coordinate maps of the model subspace.
pub fn model_map(model: &ReducedField) -> ModelMap {
    let pull = linalg::pinv(&model.embed);
    ModelMap { embed: model.embed.clone(), pull }
}

/// Reduction and model field for one draw, before the branch search.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub tag: NetworkTag,
    pub monoid: Monoid,
    pub reduction: CenterReduction,
    pub frame: Option<ModelFrame>,
    pub model: ReducedField,
    pub coefficients: Option<ModelCoefficients>,
    pub unproject: DMatrix<f64>,
}

/// Reduces, restricts to the model subspace and reads the coefficients.
pub fn prepare(spec: &NetworkSpec, f: &ResponseFunction, opts: &ReduceOptions) -> Result<Prepared> {
    let monoid = complete_monoid(spec);
    let tag = detect_tag(&monoid);
    let (injective, _) = injectivity_witness(0, &monoid);
    if !injective {
        return Err(Error::Dimension("cell 1 does not see every cell; branch lifting needs an injective projection".into()));
    }
    let red = reduce_network(&monoid, f, opts)?;
    if red.aug.center_dim() == 0 {
        return Err(Error::Degenerate("the origin is hyperbolic, so there is no bifurcation at λ = 0".into()));
    }
    let (frame, mut model) = model_for(&red, &monoid)?;
    // rounding noise would otherwise seed spurious roots near the origin
    model.field = model.field.chop(MODEL_CHOP * (1.0 + model.field.max_abs_coeff()));
    let coefficients = match tag {
        NetworkTag::B | NetworkTag::C => Some(extract_model_coefficients(&model.field, tag)?),
        _ => None,
    };
    let proj = cell_projection(0, &monoid, spec.cells, spec.cell_dim)?;
    let unproject = linalg::pinv(&proj);
    Ok(Prepared { tag, monoid, reduction: red, frame, model, coefficients, unproject })
}

/// Runs reduction, model restriction, coefficient extraction and the branch search.
pub fn analyze(spec: &NetworkSpec, f: &ResponseFunction, opts: &AnalysisOptions) -> Result<BifurcationAnalysis> {
    search(spec, prepare(spec, f, &opts.reduce)?, &opts.branches)
}

/// Branch search and labeling for a prepared draw.
pub fn search(spec: &NetworkSpec, p: Prepared, opts: &BranchOptions) -> Result<BifurcationAnalysis> {
    let lift = |v: &[f64], l: f64| lift_with(&p.reduction, &p.model, &p.unproject, v, l);
    let mut branches = find_branches(&p.model, opts, Some(&lift))?;
    label_branches(&mut branches, spec)?;
    Ok(BifurcationAnalysis {
        tag: p.tag,
        monoid: p.monoid,
        reduction: p.reduction,
        frame: p.frame,
        model: p.model,
        coefficients: p.coefficients,
        branches,
        unproject: p.unproject,
    })
}

/// Margins a random draw must clear to be used for asymptotic checks.
#[derive(Clone, Debug, Serialize)]
pub struct DrawScreen {
    /// Smallest accepted magnitude of any normal-form scalar or combination.
    pub min_coefficient: f64,
    pub max_coefficient: f64,
    /// Smallest accepted `|Re|` of a hyperbolic eigenvalue.
    pub min_hyperbolic: f64,
    /// Largest predicted branch amplitude at `λ_max`.
    pub max_amplitude: f64,
    /// Largest relative Newton correction to a leading-order branch point
    /// at `±λ_max`, i.e. how far the truncated normal form is from the full
    /// model field at the grid edge.
    pub max_truncation: f64,
    pub max_attempts: usize,
}

impl Default for DrawScreen {
    fn default() -> Self {
        DrawScreen { min_coefficient: 0.05, max_coefficient: 10.0, min_hyperbolic: 0.1, max_amplitude: 0.25, max_truncation: 0.1, max_attempts: 200 }
    }
}

impl DrawScreen {
    /// `None` when the draw passes, otherwise the reason it is rejected.
    pub fn reject(&self, p: &Prepared, lambda_max: f64) -> Option<String> {
        let aug = &p.reduction.aug;
        let m = aug.state_dim();
        let jm = aug.linear.view((0, 0), (m, m)).into_owned();
        let weak = eigenvalues(&jm)
            .iter()
            .filter(|z| z.re.abs() > aug.split.tol_re)
            .any(|z| z.re.abs() < self.min_hyperbolic);
        if weak {
            return Some("weakly hyperbolic".into());
        }
        let k = p.coefficients.as_ref()?;
        let mut vals = vec![k.c, k.a1, k.a2, k.a1 + k.a2];
        match k.tag {
            NetworkTag::B => vals.push(k.a3),
            _ => vals.push(k.lam()),
        }
        let small = vals.iter().any(|v| v.abs() < self.min_coefficient);
        if small || [k.a3, k.lam()].iter().chain(&vals).any(|v| v.abs() > self.max_coefficient) {
            return Some(format!("coefficient margin {vals:?}"));
        }
        let amp = match k.tag {
            NetworkTag::B => (k.nonsync_sqrt().0 * lambda_max.sqrt()).max(k.partial_x1().abs() * lambda_max),
            _ => {
                let (x1, x2) = k.nonsync_c();
                (x1.abs() * lambda_max).max(x2.abs() * lambda_max * lambda_max).max(k.partial_x1().abs() * lambda_max)
            }
        };
        if amp > self.max_amplitude {
            return Some(format!("predicted amplitude {amp:.3} at the grid edge"));
        }
        let big = p.model.field.max_abs_coeff();
        if big > self.max_coefficient {
            return Some(format!("model field coefficient {big:.3}"));
        }
        for lambda in [-lambda_max, lambda_max] {
            for x in k.leading_points(lambda) {
                let r = DVector::from_vec(p.model.eval(&x, lambda));
                let step = match p.model.jacobian(&x, lambda).lu().solve(&r) {
                    Some(s) => s.norm(),
                    None => f64::INFINITY,
                };
                let size = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(step <= self.max_truncation * size) {
                    return Some(format!("truncation correction {:.3} at λ = {lambda:e}", step / size));
                }
            }
        }
        None
    }
}

/// A screened random draw.
#[derive(Clone, Debug)]
pub struct Draw {
    pub seed: u64,
    /// 1-based index of the accepted draw within the seed's stream.
    pub attempt: usize,
    pub response: ResponseFunction,
    pub prepared: Prepared,
}

/// Draws bifurcation responses from the stream of `seed` until one passes
/// the screen and reduces without a degenerate or ill-conditioned reduction.
pub fn screened_draw(spec: &NetworkSpec, seed: u64, opts: &AnalysisOptions, screen: &DrawScreen) -> Result<Draw> {
    let monoid = complete_monoid(spec);
    let mut rng = crate::random::rng(seed);
    let mut last = String::new();
    for attempt in 1..=screen.max_attempts {
        let f = crate::random::bifurcation_response(&mut rng, monoid.size(), 3);
        match prepare(spec, &f, &opts.reduce) {
            Ok(p) => match screen.reject(&p, opts.branches.lambda_max) {
                None => return Ok(Draw { seed, attempt, response: f, prepared: p }),
                Some(why) => last = why,
            },
            Err(e @ (Error::Degenerate(_) | Error::NotEquilibrium(_) | Error::Numerical(_))) => last = e.to_string(),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Degenerate(format!("no acceptable draw in {} attempts for seed {seed}: {last}", screen.max_attempts)))
}

/// Target normal-form scalars for a prescribed network-C regime.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Regime {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

/// The three network-C stability scenarios, all with `a4 = 1`: stability
/// passes to the partial branch, to the non-synchronous branch, or to neither.
pub fn scenario_regimes() -> [(&'static str, Regime); 3] {
    [
        ("to partial", Regime { a1: 1.0, a2: -2.0, a3: 0.5, a4: 1.0 }),
        ("to non-synchronous", Regime { a1: 1.0, a2: 2.0, a3: 0.5, a4: 1.0 }),
        ("neither", Regime { a1: 2.0, a2: -1.0, a3: 0.5, a4: 1.0 }),
    ]
}

/// Builds a response on network C whose model field has the prescribed
/// quadratic scalars and the linear part of `base`.
///
/// The quadratic part is the least-norm equivariant quadratic map on the
/// center space hitting the targets, realized with [`crate::reduce::realize`].
pub fn realize_regime(base: &Prepared, regime: &Regime) -> Result<ResponseFunction> {
    if base.tag != NetworkTag::C {
        return Err(Error::Dimension("coefficient regimes are defined for network C".into()));
    }
    let aug = &base.reduction.aug;
    let c = aug.center_dim();
    let bc: Vec<DMatrix<f64>> = aug.split_actions().into_iter().map(|(b, _)| b).collect();
    let space = crate::representation::equivariant_field_space(&bc, &DMatrix::identity(c, c), 2, true)?;
    let quads: Vec<PolyField> =
        space.iter().map(|e| e.graded_component(2)).filter(|e| e.max_abs_coeff() > 1e-12).collect();
    let map = model_map(&base.model);
    // [X1²]R1, [X1 X2]R2, [X2²]R2, [X1 λ]R1, [X2 λ]R2, [X1 X2]R1
    let probes: [(usize, [u16; 3]); 6] =
        [(0, [2, 0, 0]), (1, [1, 1, 0]), (1, [0, 2, 0]), (0, [1, 0, 1]), (1, [0, 1, 1]), (0, [1, 1, 0])];
    let target = [regime.a1 + regime.a2, regime.a2, regime.a1 + regime.a3, regime.a4, regime.a4, 0.0];
    let mut a = DMatrix::zeros(probes.len(), quads.len());
    for (k, q) in quads.iter().enumerate() {
        let m = map.to_model(q)?;
        for (r, (o, e)) in probes.iter().enumerate() {
            a[(r, k)] = m.coeff(*o, &mono(e));
        }
    }
    let want = DVector::from_row_slice(&target);
    let t = linalg::pinv(&a) * &want;
    let miss = (&a * &t - &want).amax();
    if miss > 1e-9 {
        return Err(Error::Numerical(format!("regime is not reachable by equivariant quadratics (miss {miss:.2e})")));
    }
    let mut g = PolyField::zero(c + 1, c, 2);
    for (q, tk) in quads.iter().zip(t.iter()) {
        g = g.add(&q.scale(*tk))?;
    }
    crate::reduce::realize(aug, &g.chop(1e-14))
}

/// One row of the asymptotics table.
#[derive(Clone, Debug, Serialize)]
pub struct TableRow {
    pub kind: BranchKind,
    pub exponent: Option<f64>,
    pub negative_side: Vec<String>,
    pub positive_side: Vec<String>,
}

/// Rows `Full`, `Partial`, `None` with state-norm exponents and sign patterns per side.
pub fn summary_table(set: &BranchSet) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for kind in [BranchKind::Full, BranchKind::Partial, BranchKind::None] {
        let bs: Vec<&Branch> = set.branches.iter().filter(|b| b.kind == Some(kind)).collect();
        let exps: Vec<f64> = bs.iter().filter_map(|b| b.norm_fit.exponent).collect();
        let exponent = if exps.is_empty() { None } else { Some(exps.iter().sum::<f64>() / exps.len() as f64) };
        let side = |s: i8| -> Vec<String> {
            let mut v: Vec<String> = bs.iter().filter(|b| b.side == s).map(|b| b.signs.clone()).collect();
            v.sort();
            v.dedup();
            v
        };
        rows.push(TableRow { kind, exponent, negative_side: side(-1), positive_side: side(1) });
    }
    rows
}

/// Counts of branches per kind and side.
pub fn branch_counts(set: &BranchSet) -> BTreeMap<(BranchKind, i8), usize> {
    let mut out = BTreeMap::new();
    for b in &set.branches {
        if let Some(k) = b.kind {
            *out.entry((k, b.side)).or_insert(0) += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly;

    fn field(n_in: usize, comps: Vec<Vec<(Vec<u16>, f64)>>) -> PolyField {
        let polys = comps
            .into_iter()
            .map(|terms| {
                let mut p = Poly::zero(n_in);
                for (e, c) in terms {
                    p.add_term(Monomial::new(e), c);
                }
                p
            })
            .collect();
        PolyField::from_components(n_in, 3, polys).unwrap()
    }

    #[test]
    fn round_trip_b_frame() {
        // G = 1, H = X1 + 2 X2 + 3 λ: R1 = X2 + X1 H(X1, X2), R2 = X2 H(X2, X2)
        let r = field(
            3,
            vec![
                vec![(vec![0, 1, 0], 1.0), (vec![2, 0, 0], 1.0), (vec![1, 1, 0], 2.0), (vec![1, 0, 1], 3.0)],
                vec![(vec![0, 2, 0], 3.0), (vec![0, 1, 1], 3.0)],
            ],
        );
        let k = extract_model_coefficients(&r, NetworkTag::B).unwrap();
        assert_eq!((k.c, k.a1, k.a2, k.a3), (1.0, 1.0, 2.0, 3.0));
        assert_eq!(k.consistency, 0.0);
    }

    #[test]
    fn degenerate_sum_is_reported() {
        let r = field(
            3,
            vec![
                vec![(vec![0, 1, 0], 1.0), (vec![2, 0, 0], 1.0), (vec![1, 1, 0], -1.0), (vec![1, 0, 1], 3.0)],
                vec![(vec![0, 1, 1], 3.0)],
            ],
        );
        match extract_model_coefficients(&r, NetworkTag::B) {
            Err(Error::Degenerate(msg)) => assert!(msg.contains("a1 + a2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn linear_branch_fit() {
        let s: Vec<(f64, f64)> = (0..20).map(|i| 1e-4 * 1.3f64.powi(i)).map(|l| (l, 3.0 * l)).collect();
        let f = fit_exponent(&s).unwrap();
        assert!((f.exponent.unwrap() - 1.0).abs() < 1e-9);
        assert!((f.coefficient - 3.0).abs() < 1e-9);
    }

    #[test]
    fn fold_normal_form() {
        // R(x, λ) = λ − x²
        let r = field(2, vec![vec![(vec![0, 1], 1.0), (vec![2, 0], -1.0)]]);
        let rf = ReducedField { field: r, embed: DMatrix::identity(1, 1), names: vec!["x".into()] };
        let set = find_branches(&rf, &BranchOptions::default(), None).unwrap();
        assert_eq!(set.branches.len(), 2);
        for b in &set.branches {
            assert_eq!(b.side, 1);
            assert!((b.coord_fits[0].exponent.unwrap() - 0.5).abs() < 1e-6);
            assert!((b.coord_fits[0].coefficient.abs() - 1.0).abs() < 1e-6);
        }
        assert_eq!(set.gaps.len(), 20);
    }

    #[test]
    fn grid_is_symmetric() {
        let g = lambda_grid(&BranchOptions::default()).unwrap();
        assert_eq!(g.len(), 40);
        for i in 0..20 {
            assert_eq!(g[i], -g[39 - i]);
        }
        assert!((g[20] - 1e-4).abs() < 1e-18 && (g[39] - 1e-2).abs() < 1e-15);
    }
}
