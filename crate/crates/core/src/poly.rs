//! Truncated multivariate polynomial arithmetic.
//!
//! A [`Poly`] is a sparse scalar polynomial; a [`PolyField`] is a vector of
//! them sharing one variable set and one truncation order. Terms are kept in
//! graded-lex order: total degree first, then lexicographically with the
//! first variable largest (`x1^2 < x1 x2 < x2^2` within degree two).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent multi-index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Monomial(Vec<u16>);

impl Monomial {
    pub fn new(exps: Vec<u16>) -> Self {
        Monomial(exps)
    }

    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Monomial(e)
    }

    pub fn exps(&self) -> &[u16] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials of exact total degree `d` in `nvars` variables, in term order.
pub fn monomials_of_degree(nvars: usize, d: u32) -> Vec<Monomial> {
    fn rec(n: usize, d: u32, prefix: &mut Vec<u16>, out: &mut Vec<Monomial>) {
        if prefix.len() + 1 == n {
            prefix.push(d as u16);
            out.push(Monomial(prefix.clone()));
            prefix.pop();
            return;
        }
        for e in (0..=d).rev() {
            prefix.push(e as u16);
            rec(n, d - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if nvars == 0 {
        if d == 0 {
            out.push(Monomial(Vec::new()));
        }
        return out;
    }
    rec(nvars, d, &mut Vec::with_capacity(nvars), &mut out);
    out
}

/// All monomials of total degree `lo..=hi`, in term order.
pub fn monomials_between(nvars: usize, lo: u32, hi: u32) -> Vec<Monomial> {
    (lo..=hi).flat_map(|d| monomials_of_degree(nvars, d)).collect()
}

/// Sparse scalar polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(Monomial::var(nvars, i), 1.0);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Adds `c * m`, dropping the term if the result is exactly zero.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.nvars(), self.nvars);
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    /// Highest total degree present (0 for the zero polynomial).
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add_scaled(&mut self, other: &Poly, s: f64) {
        for (m, c) in other.terms() {
            self.add_term(m.clone(), s * c);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut p = self.clone();
        p.add_scaled(other, 1.0);
        p
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut p = self.clone();
        p.add_scaled(other, -1.0);
        p
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut p = Poly::zero(self.nvars);
        p.add_scaled(self, s);
        p
    }

    /// Product truncated to total degree `trunc`.
    pub fn mul(&self, other: &Poly, trunc: u32) -> Poly {
        let mut p = Poly::zero(self.nvars);
        for (m1, c1) in self.terms() {
            let d1 = m1.degree();
            if d1 > trunc {
                continue;
            }
            for (m2, c2) in other.terms() {
                if d1 + m2.degree() > trunc {
                    continue;
                }
                p.add_term(m1.mul(m2), c1 * c2);
            }
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms().map(|(m, c)| c * m.eval(x)).sum()
    }

    pub fn derivative(&self, i: usize) -> Poly {
        let mut p = Poly::zero(self.nvars);
        for (m, c) in self.terms() {
            let e = m.0[i];
            if e == 0 {
                continue;
            }
            let mut exps = m.0.clone();
            exps[i] -= 1;
            p.add_term(Monomial(exps), c * e as f64);
        }
        p
    }

    pub fn graded(&self, k: u32) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() == k)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    pub fn truncate(&self, k: u32) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() <= k)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    /// Drops terms with `|c| <= tol`.
    pub fn chop(&self, tol: f64) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Substitutes `inner[i]` for variable `i`, truncating at `trunc`.
    pub fn substitute(&self, inner: &[Poly], trunc: u32) -> Poly {
        let nvars = inner.first().map(|p| p.nvars).unwrap_or(0);
        let mut cache = PowerCache::new(inner, nvars, trunc);
        self.substitute_cached(&mut cache)
    }

    fn substitute_cached(&self, cache: &mut PowerCache) -> Poly {
        let nv = cache.nvars;
        let trunc = cache.trunc;
        let mut out = Poly::zero(nv);
        for (m, c) in self.terms() {
            let mut acc = Poly::constant(nv, c);
            for (i, &e) in m.exps().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let pw = cache.power(i, e);
                acc = acc.mul(pw, trunc);
                if acc.is_empty() {
                    break;
                }
            }
            out.add_scaled(&acc, 1.0);
        }
        out
    }
}

struct PowerCache<'a> {
    inner: &'a [Poly],
    nvars: usize,
    trunc: u32,
    powers: Vec<Vec<Poly>>,
}

impl<'a> PowerCache<'a> {
    fn new(inner: &'a [Poly], nvars: usize, trunc: u32) -> Self {
        let powers = inner
            .iter()
            .map(|p| vec![Poly::constant(nvars, 1.0), p.truncate(trunc)])
            .collect();
        PowerCache { inner, nvars, trunc, powers }
    }

    fn power(&mut self, i: usize, e: u16) -> &Poly {
        let e = e as usize;
        while self.powers[i].len() <= e {
            let next = self.powers[i].last().unwrap().mul(&self.inner[i], self.trunc);
            self.powers[i].push(next);
        }
        &self.powers[i][e]
    }
}

/// Truncated polynomial map `R^n_in -> R^n_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyField {
    n_in: usize,
    degree: u32,
    comps: Vec<Poly>,
}

impl PolyField {
    pub fn zero(n_in: usize, n_out: usize, degree: u32) -> Self {
        PolyField { n_in, degree, comps: vec![Poly::zero(n_in); n_out] }
    }

    pub fn identity(n: usize, degree: u32) -> Self {
        PolyField { n_in: n, degree, comps: (0..n).map(|i| Poly::var(n, i)).collect() }
    }

    /// The linear map `x -> M x`.
    pub fn linear(m: &DMatrix<f64>, degree: u32) -> Self {
        let n_in = m.ncols();
        let comps = (0..m.nrows())
            .map(|r| {
                let mut p = Poly::zero(n_in);
                for c in 0..n_in {
                    p.add_term(Monomial::var(n_in, c), m[(r, c)]);
                }
                p
            })
            .collect();
        PolyField { n_in, degree, comps }
    }

    pub fn from_components(n_in: usize, degree: u32, comps: Vec<Poly>) -> Result<Self> {
        if let Some(p) = comps.iter().find(|p| p.nvars != n_in) {
            return Err(Error::Dimension(format!(
                "component has {} variables, field has {}",
                p.nvars, n_in
            )));
        }
        Ok(PolyField { n_in, degree, comps: comps.iter().map(|p| p.truncate(degree)).collect() })
    }

    /// Builds a field from `(monomial, coefficient vector)` pairs.
    pub fn from_terms<I>(n_in: usize, n_out: usize, degree: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Monomial, Vec<f64>)>,
    {
        let mut f = PolyField::zero(n_in, n_out, degree);
        for (m, c) in terms {
            if m.nvars() != n_in || c.len() != n_out {
                return Err(Error::Dimension(format!(
                    "term with {} exponents and {} coefficients in a {}->{} field",
                    m.nvars(),
                    c.len(),
                    n_in,
                    n_out
                )));
            }
            if m.degree() > degree {
                return Err(Error::Dimension(format!(
                    "term of degree {} exceeds truncation order {}",
                    m.degree(),
                    degree
                )));
            }
            for (i, v) in c.into_iter().enumerate() {
                f.comps[i].add_term(m.clone(), v);
            }
        }
        Ok(f)
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.comps.len()
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn component(&self, i: usize) -> &Poly {
        &self.comps[i]
    }

    pub fn components(&self) -> &[Poly] {
        &self.comps
    }

    pub fn component_mut(&mut self, i: usize) -> &mut Poly {
        &mut self.comps[i]
    }

    pub fn coeff(&self, out: usize, m: &Monomial) -> f64 {
        self.comps[out].coeff(m)
    }

    /// Terms grouped by monomial, each with its full coefficient vector.
    pub fn terms(&self) -> BTreeMap<Monomial, Vec<f64>> {
        let mut map: BTreeMap<Monomial, Vec<f64>> = BTreeMap::new();
        let n_out = self.n_out();
        for (i, p) in self.comps.iter().enumerate() {
            for (m, c) in p.terms() {
                map.entry(m.clone()).or_insert_with(|| vec![0.0; n_out])[i] = c;
            }
        }
        map
    }

    pub fn with_degree(&self, degree: u32) -> PolyField {
        PolyField { n_in: self.n_in, degree, comps: self.comps.iter().map(|p| p.truncate(degree)).collect() }
    }

    pub fn truncate(&self, k: u32) -> PolyField {
        self.with_degree(k.min(self.degree))
    }

    pub fn graded_component(&self, k: u32) -> PolyField {
        PolyField { n_in: self.n_in, degree: self.degree, comps: self.comps.iter().map(|p| p.graded(k)).collect() }
    }

    pub fn chop(&self, tol: f64) -> PolyField {
        PolyField { n_in: self.n_in, degree: self.degree, comps: self.comps.iter().map(|p| p.chop(tol)).collect() }
    }

    fn check_same_shape(&self, other: &PolyField) -> Result<()> {
        if self.n_in != other.n_in || self.n_out() != other.n_out() {
            return Err(Error::Dimension(format!(
                "{}->{} field combined with {}->{} field",
                self.n_in,
                self.n_out(),
                other.n_in,
                other.n_out()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &PolyField) -> Result<PolyField> {
        self.check_same_shape(other)?;
        Ok(PolyField {
            n_in: self.n_in,
            degree: self.degree.max(other.degree),
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect(),
        })
    }

    pub fn sub(&self, other: &PolyField) -> Result<PolyField> {
        self.check_same_shape(other)?;
        Ok(PolyField {
            n_in: self.n_in,
            degree: self.degree.max(other.degree),
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.sub(b)).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> PolyField {
        PolyField { n_in: self.n_in, degree: self.degree, comps: self.comps.iter().map(|p| p.scale(s)).collect() }
    }

    /// Componentwise product with a scalar polynomial, truncated at `trunc`.
    pub fn mul_scalar_poly(&self, p: &Poly, trunc: u32) -> PolyField {
        PolyField { n_in: self.n_in, degree: trunc, comps: self.comps.iter().map(|c| c.mul(p, trunc)).collect() }
    }

    /// `x -> M F(x)`.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Result<PolyField> {
        if m.ncols() != self.n_out() {
            return Err(Error::Dimension(format!(
                "{}x{} matrix applied to a field with {} outputs",
                m.nrows(),
                m.ncols(),
                self.n_out()
            )));
        }
        let comps = (0..m.nrows())
            .map(|r| {
                let mut p = Poly::zero(self.n_in);
                for c in 0..m.ncols() {
                    let s = m[(r, c)];
                    if s != 0.0 {
                        p.add_scaled(&self.comps[c], s);
                    }
                }
                p
            })
            .collect();
        Ok(PolyField { n_in: self.n_in, degree: self.degree, comps })
    }

    /// Composition `self ∘ inner`, truncated at `degree`.
    pub fn compose(&self, inner: &PolyField, degree: u32) -> Result<PolyField> {
        if inner.n_out() != self.n_in {
            return Err(Error::Dimension(format!(
                "outer field takes {} inputs, inner field yields {}",
                self.n_in,
                inner.n_out()
            )));
        }
        let mut cache = PowerCache::new(&inner.comps, inner.n_in, degree);
        let comps = self.comps.iter().map(|p| p.substitute_cached(&mut cache)).collect();
        Ok(PolyField { n_in: inner.n_in, degree, comps })
    }

    /// `x -> F(M x)`.
    pub fn compose_linear(&self, m: &DMatrix<f64>) -> Result<PolyField> {
        self.compose(&PolyField::linear(m, self.degree), self.degree)
    }

    /// Rows `rows` of the field, in the given order.
    pub fn select(&self, rows: &[usize]) -> PolyField {
        PolyField { n_in: self.n_in, degree: self.degree, comps: rows.iter().map(|&r| self.comps[r].clone()).collect() }
    }

    /// Stacks fields with equal input dimension on top of each other.
    pub fn stack(fields: &[PolyField]) -> Result<PolyField> {
        let first = fields
            .first()
            .ok_or_else(|| Error::Dimension("cannot stack an empty list of fields".into()))?;
        let mut comps = Vec::new();
        let mut degree = 0;
        for f in fields {
            if f.n_in != first.n_in {
                return Err(Error::Dimension("stacked fields differ in input dimension".into()));
            }
            degree = degree.max(f.degree);
            comps.extend(f.comps.iter().cloned());
        }
        Ok(PolyField { n_in: first.n_in, degree, comps })
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|p| p.eval(x)).collect()
    }

    pub fn derivative(&self, j: usize) -> PolyField {
        PolyField { n_in: self.n_in, degree: self.degree, comps: self.comps.iter().map(|p| p.derivative(j)).collect() }
    }

    pub fn jacobian(&self, at: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_out(), self.n_in, |r, c| self.comps[r].derivative(c).eval(at))
    }

    /// Coefficient matrix of the degree-one part.
    pub fn linear_part(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_out(), self.n_in, |r, c| self.comps[r].coeff(&Monomial::var(self.n_in, c)))
    }

    pub fn constant_part(&self) -> Vec<f64> {
        let one = Monomial::one(self.n_in);
        self.comps.iter().map(|p| p.coeff(&one)).collect()
    }

    /// `x -> DF(x) V(x)`, truncated at `trunc`.
    pub fn jacobian_times(&self, v: &PolyField, trunc: u32) -> Result<PolyField> {
        if v.n_out() != self.n_in || v.n_in != self.n_in {
            return Err(Error::Dimension("direction field does not match the field's input space".into()));
        }
        let mut out = PolyField::zero(self.n_in, self.n_out(), trunc);
        for j in 0..self.n_in {
            if v.comps[j].is_empty() {
                continue;
            }
            let d = self.derivative(j);
            for (o, p) in out.comps.iter_mut().zip(&d.comps) {
                if !p.is_empty() {
                    o.add_scaled(&p.mul(&v.comps[j], trunc), 1.0);
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.comps.iter().fold(0.0, |a, p| a.max(p.max_abs()))
    }

    /// Largest coefficient-wise difference.
    pub fn max_abs_diff(&self, other: &PolyField) -> Result<f64> {
        Ok(self.sub(other)?.max_abs_coeff())
    }

    /// The same map with `k` further (unused) input variables appended.
    pub fn with_extra_inputs(&self, k: usize) -> PolyField {
        let n_in = self.n_in + k;
        let comps = self
            .comps
            .iter()
            .map(|p| {
                let mut q = Poly::zero(n_in);
                for (m, c) in p.terms() {
                    let mut e = m.0.clone();
                    e.resize(n_in, 0);
                    q.add_term(Monomial(e), c);
                }
                q
            })
            .collect();
        PolyField { n_in, degree: self.degree, comps }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Poly::is_empty)
    }

    pub fn compile(&self) -> CompiledField {
        CompiledField::new(self)
    }

    /// Plain term-list form used in files and reports.
    pub fn to_term_list(&self) -> TermList {
        TermList {
            n_in: self.n_in,
            n_out: self.n_out(),
            degree: self.degree,
            terms: self
                .terms()
                .into_iter()
                .map(|(m, c)| TermEntry { monomial: m.0, coeff: c })
                .collect(),
        }
    }

    pub fn from_term_list(list: &TermList) -> Result<PolyField> {
        PolyField::from_terms(
            list.n_in,
            list.n_out,
            list.degree,
            list.terms.iter().map(|t| (Monomial(t.monomial.clone()), t.coeff.clone())),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub monomial: Vec<u16>,
    pub coeff: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermList {
    pub n_in: usize,
    pub n_out: usize,
    pub degree: u32,
    pub terms: Vec<TermEntry>,
}

/// Flattened form of a field for repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledField {
    n_in: usize,
    max_exp: usize,
    comps: Vec<Vec<(f64, Vec<(usize, usize)>)>>,
    jac: Vec<Vec<Vec<(f64, Vec<(usize, usize)>)>>>,
}

fn flatten(p: &Poly) -> Vec<(f64, Vec<(usize, usize)>)> {
    p.terms()
        .map(|(m, c)| {
            let f = m
                .exps()
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| (i, e as usize))
                .collect();
            (c, f)
        })
        .collect()
}

impl CompiledField {
    fn new(f: &PolyField) -> Self {
        let max_exp = f
            .comps
            .iter()
            .flat_map(|p| p.terms().flat_map(|(m, _)| m.exps().iter().map(|&e| e as usize).collect::<Vec<_>>()))
            .max()
            .unwrap_or(0);
        let comps = f.comps.iter().map(flatten).collect();
        let jac = f
            .comps
            .iter()
            .map(|p| (0..f.n_in).map(|j| flatten(&p.derivative(j))).collect())
            .collect();
        CompiledField { n_in: f.n_in, max_exp, comps, jac }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.comps.len()
    }

    fn powers(&self, x: &[f64]) -> Vec<f64> {
        let w = self.max_exp + 1;
        let mut pw = vec![1.0; self.n_in * w];
        for i in 0..self.n_in {
            for e in 1..w {
                pw[i * w + e] = pw[i * w + e - 1] * x[i];
            }
        }
        pw
    }

    fn eval_terms(terms: &[(f64, Vec<(usize, usize)>)], pw: &[f64], w: usize) -> f64 {
        terms
            .iter()
            .map(|(c, f)| f.iter().fold(*c, |acc, &(i, e)| acc * pw[i * w + e]))
            .sum()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let pw = self.powers(x);
        let w = self.max_exp + 1;
        for (o, t) in out.iter_mut().zip(&self.comps) {
            *o = Self::eval_terms(t, &pw, w);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_out()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let pw = self.powers(x);
        let w = self.max_exp + 1;
        DMatrix::from_fn(self.n_out(), self.n_in, |r, c| Self::eval_terms(&self.jac[r][c], &pw, w))
    }
}
