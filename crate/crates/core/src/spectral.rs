//! Eigenvalue clusters, invariant splittings and the center/hyperbolic split.
//!
//! Center blocks of network Jacobians are typically non-diagonalizable, so
//! eigenvalues are grouped into clusters (a perturbed Jordan block of size `k`
//! spreads its eigenvalue over a disc of radius about `eps^(1/k)`) and
//! generalized eigenspaces are computed as kernels of matrix polynomials built
//! from the cluster centroids.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// A group of numerically coincident eigenvalues.
#[derive(Clone, Debug, Serialize)]
pub struct Cluster {
    pub centroid: (f64, f64),
    pub size: usize,
    pub radius: f64,
    pub members: Vec<(f64, f64)>,
}

impl Cluster {
    pub fn re(&self) -> f64 {
        self.centroid.0
    }

    pub fn im(&self) -> f64 {
        self.centroid.1
    }
}

pub fn eigenvalues(j: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if j.nrows() == 0 {
        return Vec::new();
    }
    let n = j.nrows();
    if j.iter().all(|v| *v == 0.0) || j.iter().any(|v| !v.is_finite()) {
        let fill = if j.iter().all(|v| *v == 0.0) { 0.0 } else { f64::NAN };
        return vec![Complex::new(fill, fill); n];
    }
    let mut rng = crate::random::rng(0x5c4u64);
    let mut m = j.clone();
    for _ in 0..8 {
        if let Some(s) = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 2000 * n) {
            return s.complex_eigenvalues().iter().copied().collect();
        }
        // the unshifted iteration can stall on exactly structured input;
        // an orthogonal similarity leaves the spectrum unchanged
        let g = DMatrix::from_vec(n, n, crate::random::uniform_vec(&mut rng, n * n, 1.0));
        let q = g.qr().q();
        m = q.transpose() * &m * &q;
    }
    j.complex_eigenvalues().iter().copied().collect()
}

/// Default merge distance: the worst-case spread of a perturbed Jordan block
/// filling the whole matrix, with a safety factor.
pub fn default_cluster_tol(j: &DMatrix<f64>) -> f64 {
    let n = j.nrows().max(1) as f64;
    let scale = 1.0 + j.norm();
    4.0 * f64::EPSILON.powf(1.0 / n) * scale
}

/// Single-linkage clustering of the spectrum at distance `tol`; clusters are
/// sorted by centroid real part, then imaginary part.
pub fn eigen_clusters(j: &DMatrix<f64>, tol: f64) -> Vec<Cluster> {
    let ev = eigenvalues(j);
    let n = ev.len();
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in 0..n {
                if (ev[a] - ev[b]).norm() <= tol && label[a] != label[b] {
                    let (lo, hi) = (label[a].min(label[b]), label[a].max(label[b]));
                    label.iter_mut().filter(|l| **l == hi).for_each(|l| *l = lo);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut ids: Vec<usize> = label.clone();
    ids.sort();
    ids.dedup();
    let mut clusters: Vec<Cluster> = ids
        .into_iter()
        .map(|id| {
            let m: Vec<Complex<f64>> = (0..n).filter(|&i| label[i] == id).map(|i| ev[i]).collect();
            let c = m.iter().sum::<Complex<f64>>() / m.len() as f64;
            let radius = m.iter().map(|z| (z - c).norm()).fold(0.0, f64::max);
            Cluster {
                centroid: (c.re, if c.im.abs() <= tol { 0.0 } else { c.im }),
                size: m.len(),
                radius,
                members: m.iter().map(|z| (z.re, z.im)).collect(),
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        a.re().partial_cmp(&b.re()).unwrap().then(a.im().partial_cmp(&b.im()).unwrap())
    });
    clusters
}

/// Real matrix polynomial vanishing on the generalized eigenspaces of the clusters.
fn annihilator(j: &DMatrix<f64>, clusters: &[&Cluster]) -> DMatrix<f64> {
    let n = j.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut p = id.clone();
    for c in clusters {
        if c.im() < 0.0 {
            continue;
        }
        let factor = if c.im() == 0.0 {
            j - &id * c.re()
        } else {
            j * j - j * (2.0 * c.re()) + &id * (c.re() * c.re() + c.im() * c.im())
        };
        for _ in 0..c.size {
            p = &factor * &p;
        }
    }
    p
}

/// Invariant direct-sum decomposition with its projections.
#[derive(Clone, Debug)]
pub struct Splitting {
    pub subspaces: Vec<DMatrix<f64>>,
    pub projections: Vec<DMatrix<f64>>,
}

impl Splitting {
    /// Projections along the other summands; fails if the spans are not complementary.
    pub fn from_subspaces(subspaces: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = subspaces.first().map(|s| s.nrows()).unwrap_or(0);
        let total: usize = subspaces.iter().map(|s| s.ncols()).sum();
        if total != n {
            return Err(Error::Numerical(format!("summand dimensions add to {total}, ambient is {n}")));
        }
        let refs: Vec<&DMatrix<f64>> = subspaces.iter().collect();
        let t = linalg::hstack(&refs);
        let tinv = t
            .clone()
            .try_inverse()
            .filter(|_| linalg::condition_number(&t) < 1e12)
            .ok_or_else(|| Error::Numerical("summands are not complementary".into()))?;
        let mut projections = Vec::with_capacity(subspaces.len());
        let mut c = 0;
        for s in &subspaces {
            let k = s.ncols();
            projections.push(s * tinv.rows(c, k));
            c += k;
        }
        Ok(Splitting { subspaces, projections })
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subspaces.iter().map(|s| s.ncols()).collect()
    }

    /// Largest invariance defect `‖(I - P_j) A U_j‖` and commutator `‖P_j A - A P_j‖`.
    pub fn invariance_defect(&self, actions: &[DMatrix<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for (u, p) in self.subspaces.iter().zip(&self.projections) {
            for a in actions {
                let au = a * u;
                worst = worst.max(linalg::max_abs(&(&au - p * &au)));
                worst = worst.max(linalg::max_abs(&(p * a - a * p)));
            }
        }
        worst
    }
}

/// Orthonormal basis of a span chosen canonically (independent of the input basis).
pub fn canonical_orthonormal(v: &DMatrix<f64>) -> DMatrix<f64> {
    if v.ncols() == 0 {
        return v.clone();
    }
    let c = linalg::canonical_basis(v, 1e-10);
    let qr = c.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q.columns(0, c.ncols()).into_owned();
    for k in 0..c.ncols() {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// Result of splitting a matrix into center and hyperbolic parts.
#[derive(Clone, Debug)]
pub struct CenterSplit {
    pub splitting: Splitting,
    pub clusters: Vec<Cluster>,
    pub center_clusters: Vec<Cluster>,
    pub tol_re: f64,
    /// Some cluster has `tol_re <= |Re| < 10 tol_re`.
    pub ambiguous: bool,
}

impl CenterSplit {
    pub fn center(&self) -> &DMatrix<f64> {
        &self.splitting.subspaces[0]
    }

    pub fn hyperbolic(&self) -> &DMatrix<f64> {
        &self.splitting.subspaces[1]
    }

    pub fn p_center(&self) -> &DMatrix<f64> {
        &self.splitting.projections[0]
    }

    pub fn p_hyperbolic(&self) -> &DMatrix<f64> {
        &self.splitting.projections[1]
    }

    pub fn center_dim(&self) -> usize {
        self.center().ncols()
    }

    /// True when every center eigenvalue is zero (steady-state case).
    pub fn center_is_nilpotent(&self) -> bool {
        self.center_clusters.iter().all(|c| c.im() == 0.0)
    }
}

pub fn default_tol_re(j: &DMatrix<f64>) -> f64 {
    1e-8 * (1.0 + j.norm())
}

/// Generalized eigenspaces for `|Re| < tol_re` (center) and the rest (hyperbolic).
pub fn center_hyperbolic_split(j: &DMatrix<f64>, tol_re: Option<f64>) -> Result<CenterSplit> {
    if j.nrows() != j.ncols() {
        return Err(Error::Dimension("Jacobian must be square".into()));
    }
    let n = j.nrows();
    let tol_re = tol_re.unwrap_or_else(|| default_tol_re(j));
    let clusters = eigen_clusters(j, default_cluster_tol(j));
    let (center, hyper): (Vec<&Cluster>, Vec<&Cluster>) = clusters.iter().partition(|c| c.re().abs() < tol_re);
    let ambiguous = hyper.iter().any(|c| c.re().abs() < 10.0 * tol_re);
    let c_dim: usize = center.iter().map(|c| c.size).sum();
    let h_dim = n - c_dim;
    let kernel = |cl: &[&Cluster], dim: usize| -> Result<DMatrix<f64>> {
        if dim == 0 {
            return Ok(DMatrix::zeros(n, 0));
        }
        if dim == n {
            return Ok(DMatrix::identity(n, n));
        }
        let p = annihilator(j, cl);
        let s = linalg::singular_values(&p);
        let (inside, outside) = (s[n - dim], s[n - dim - 1]);
        if inside > 1e-6 * outside {
            return Err(Error::Numerical(format!(
                "generalized eigenspace not resolved: singular values {inside:e} vs {outside:e}"
            )));
        }
        Ok(canonical_orthonormal(&linalg::smallest_right_vectors(&p, dim)))
    };
    let wc = kernel(&center, c_dim)?;
    let wh = kernel(&hyper, h_dim)?;
    let splitting = Splitting::from_subspaces(vec![wc, wh])?;
    Ok(CenterSplit {
        splitting,
        center_clusters: center.into_iter().cloned().collect(),
        clusters,
        tol_re,
        ambiguous,
    })
}
