//! Balanced partitions and robust synchrony spaces.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::random;

/// Largest cell count for exhaustive enumeration.
pub const MAX_ENUMERATION_CELLS: usize = 12;

/// Partition of cells in restricted-growth form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Partition {
    class_of: Vec<usize>,
    classes: usize,
}

impl Partition {
    /// Canonicalizes arbitrary class ids into first-occurrence order.
    pub fn new(ids: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let class_of: Vec<usize> = ids
            .iter()
            .map(|id| {
                let next = map.len();
                *map.entry(*id).or_insert(next)
            })
            .collect();
        Partition { classes: map.len(), class_of }
    }

    /// From explicit 0-based groups; unlisted cells become singletons.
    pub fn from_groups(n: usize, groups: &[&[usize]]) -> Self {
        let mut ids: Vec<usize> = (0..n).map(|i| n + i).collect();
        for (g, cells) in groups.iter().enumerate() {
            for &c in *cells {
                ids[c] = g;
            }
        }
        Partition::new(&ids)
    }

    pub fn full_sync(n: usize) -> Self {
        Partition::new(&vec![0; n])
    }

    pub fn singletons(n: usize) -> Self {
        Partition::new(&(0..n).collect::<Vec<_>>())
    }

    pub fn cells(&self) -> usize {
        self.class_of.len()
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }

    pub fn same_class(&self, i: usize, j: usize) -> bool {
        self.class_of[i] == self.class_of[j]
    }

    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.classes];
        for (i, &c) in self.class_of.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn is_singletons(&self) -> bool {
        self.classes == self.cells()
    }

    /// True when every class of `self` lies inside a class of `other`.
    pub fn refines(&self, other: &Partition) -> bool {
        (0..self.cells()).all(|i| (0..self.cells()).all(|j| !self.same_class(i, j) || other.same_class(i, j)))
    }

    /// Common refinement.
    pub fn meet(&self, other: &Partition) -> Partition {
        let ids: Vec<usize> = self
            .class_of
            .iter()
            .zip(&other.class_of)
            .map(|(a, b)| a * other.classes + b)
            .collect();
        Partition::new(&ids)
    }

    /// Finest partition coarser than both.
    pub fn join(&self, other: &Partition) -> Partition {
        let n = self.cells();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for part in [self, other] {
            for cls in part.classes() {
                for w in cls.windows(2) {
                    let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                    parent[a] = b;
                }
            }
        }
        let ids: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        Partition::new(&ids)
    }

    /// Polydiagonal indicator matrix with one block column per class.
    pub fn indicator(&self, cell_dim: usize) -> DMatrix<f64> {
        let d = cell_dim;
        let mut m = DMatrix::zeros(self.cells() * d, self.classes * d);
        for (i, &c) in self.class_of.iter().enumerate() {
            for k in 0..d {
                m[(i * d + k, c * d + k)] = 1.0;
            }
        }
        m
    }

    /// Whether a state vector lies in the synchrony space within `tol`.
    pub fn contains(&self, x: &[f64], cell_dim: usize, tol: f64) -> bool {
        let d = cell_dim;
        (0..self.cells()).all(|i| {
            (0..i).all(|j| {
                !self.same_class(i, j) || (0..d).all(|k| (x[i * d + k] - x[j * d + k]).abs() <= tol)
            })
        })
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for cls in self.classes() {
            let names: Vec<String> = cls.iter().map(|c| (c + 1).to_string()).collect();
            write!(f, "{{{}}}", names.join(","))?;
        }
        Ok(())
    }
}

/// Orthonormal basis of a synchrony space.
#[derive(Clone, Debug)]
pub struct SynchronySubspace {
    pub partition: Partition,
    pub basis: DMatrix<f64>,
}

pub fn synchrony_basis(p: &Partition, cell_dim: usize) -> SynchronySubspace {
    let mut b = p.indicator(cell_dim);
    for mut col in b.column_iter_mut() {
        let n = col.norm();
        col /= n;
    }
    SynchronySubspace { partition: p.clone(), basis: b }
}

/// Balance condition: `i ~ j` implies `σ(i) ~ σ(j)` for every input map.
pub fn is_robust(p: &Partition, spec: &NetworkSpec) -> bool {
    let n = spec.cells;
    spec.maps.iter().all(|m| {
        (0..n).all(|i| (0..i).all(|j| !p.same_class(i, j) || p.same_class(m.apply(i), m.apply(j))))
    })
}

/// Every partition of `n` cells as restricted-growth strings, in lexicographic order.
pub fn all_partitions(n: usize) -> Vec<Partition> {
    fn rec(n: usize, cur: &mut Vec<usize>, maxc: usize, out: &mut Vec<Partition>) {
        if cur.len() == n {
            out.push(Partition { class_of: cur.clone(), classes: maxc });
            return;
        }
        for c in 0..=maxc {
            cur.push(c);
            rec(n, cur, maxc.max(c + 1), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, &mut vec![0], 1, &mut out);
    }
    out
}

/// All balanced partitions, coarsest first, then lexicographic.
pub fn enumerate_robust(spec: &NetworkSpec) -> Result<Vec<Partition>> {
    if spec.cells > MAX_ENUMERATION_CELLS {
        return Err(Error::TooLarge(format!("a network with {} cells", spec.cells)));
    }
    let mut out: Vec<Partition> = all_partitions(spec.cells).into_iter().filter(|p| is_robust(p, spec)).collect();
    out.sort_by(|a, b| a.classes.cmp(&b.classes).then_with(|| a.class_of.cmp(&b.class_of)));
    Ok(out)
}

/// Covering relations `(coarser, finer)` among the given partitions.
pub fn hasse_edges(parts: &[Partition]) -> Vec<(usize, usize)> {
    let strictly = |fine: &Partition, coarse: &Partition| fine != coarse && fine.refines(coarse);
    let mut edges = Vec::new();
    for (i, c) in parts.iter().enumerate() {
        for (j, f) in parts.iter().enumerate() {
            if strictly(f, c) && !parts.iter().any(|m| strictly(f, m) && strictly(m, c)) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Randomized check that `γ_f(Δ_P) ⊂ Δ_P` for random polynomial responses.
pub fn invariance_oracle(p: &Partition, spec: &NetworkSpec, trials: usize, seed: u64) -> bool {
    let mut rng = random::rng(seed);
    let d = spec.cell_dim;
    let n = spec.cells;
    let slots = spec.slots();
    for _ in 0..trials {
        let f = random::random_response(&mut rng, slots, d, 3).poly.compile();
        let values: Vec<f64> = random::uniform_vec(&mut rng, p.class_count() * d, 1.0);
        let lambda = rng.gen_range(-1.0..1.0);
        let x: Vec<f64> = (0..n * d).map(|i| values[p.class_of()[i / d] * d + i % d]).collect();
        let mut y = Vec::with_capacity(n * d);
        let mut args = vec![0.0; slots * d + 1];
        args[slots * d] = lambda;
        for cell in 0..n {
            for (k, m) in spec.maps.iter().enumerate() {
                let q = m.apply(cell);
                args[k * d..(k + 1) * d].copy_from_slice(&x[q * d..(q + 1) * d]);
            }
            y.extend(f.eval(&args));
        }
        let scale = 1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !p.contains(&y, d, 1e-10 * scale) {
            return false;
        }
    }
    true
}
