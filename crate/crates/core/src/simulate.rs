//! Fixed-step RK4 integration of admissible fields, relaxation to steady
//! states, and flow-level checks of synchrony and semiconjugacy.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{admissible_field, cell_projection, complete_monoid, fundamental_network, NetworkSpec, ResponseFunction};
use crate::poly::CompiledField;
use crate::synchrony::Partition;

/// States beyond this norm end the integration early.
pub const BLOW_UP: f64 = 1e6;

#[derive(Clone, Debug, Serialize)]
pub struct IntegratorMeta {
    pub method: &'static str,
    pub step: f64,
    pub t_end: f64,
    pub lambda: f64,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub meta: IntegratorMeta,
    pub blow_up: bool,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectories start with x0")
    }

    /// CSV with a header `t,x1,...`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.6e}"));
            for v in s {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Autonomous vector field at a fixed parameter value.
pub struct Flow {
    field: CompiledField,
    lambda: f64,
    dim: usize,
}

impl Flow {
    /// Flow of `γ_f` on the network.
    pub fn new(spec: &NetworkSpec, f: &ResponseFunction, lambda: f64) -> Result<Flow> {
        let field = admissible_field(spec, f)?.compile();
        Ok(Flow { field, lambda, dim: spec.state_dim() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut arg = x.to_vec();
        arg.push(self.lambda);
        self.field.eval(&arg)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut arg = x.to_vec();
        arg.push(self.lambda);
        let j = self.field.jacobian(&arg);
        j.view((0, 0), (self.dim, self.dim)).into_owned()
    }

    fn rk4(&self, x: &[f64], h: f64) -> Vec<f64> {
        let add = |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<_>>();
        let k1 = self.eval(x);
        let k2 = self.eval(&add(x, &k1, h / 2.0));
        let k3 = self.eval(&add(x, &k2, h / 2.0));
        let k4 = self.eval(&add(x, &k3, h));
        (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
    }

    /// Fixed-step RK4 from `x0` over `[0, t_end]`, storing every `stride`-th step.
    pub fn integrate(&self, x0: &[f64], t_end: f64, h: f64, stride: usize) -> Result<Trajectory> {
        check_steps(t_end, h)?;
        if x0.len() != self.dim {
            return Err(Error::Dimension(format!("initial state has {} entries, expected {}", x0.len(), self.dim)));
        }
        let steps = (t_end / h).round().max(1.0) as usize;
        let h = t_end / steps as f64;
        let stride = stride.max(1);
        let mut x = x0.to_vec();
        let mut times = vec![0.0];
        let mut states = vec![x.clone()];
        let mut blow_up = false;
        for k in 1..=steps {
            x = self.rk4(&x, h);
            let big = x.iter().any(|v| !v.is_finite()) || norm(&x) > BLOW_UP;
            if k % stride == 0 || k == steps || big {
                times.push(k as f64 * h);
                states.push(x.clone());
            }
            if big {
                blow_up = true;
                break;
            }
        }
        let meta = IntegratorMeta { method: "rk4", step: h, t_end, lambda: self.lambda, seed: None };
        Ok(Trajectory { times, states, meta, blow_up })
    }

    /// End state after `t_end` without storing the path.
    pub fn advance(&self, x0: &[f64], t_end: f64, h: f64) -> Result<Vec<f64>> {
        Ok(self.integrate(x0, t_end, h, usize::MAX)?.last().to_vec())
    }

    /// `|x_h(T) − x_{h/2}(T)|_∞ / T`, the step-halving error per unit time.
    pub fn halving_error(&self, x0: &[f64], t_end: f64, h: f64) -> Result<f64> {
        let a = self.advance(x0, t_end, h)?;
        let b = self.advance(x0, t_end, h / 2.0)?;
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / t_end)
    }
}

fn check_steps(t_end: f64, h: f64) -> Result<()> {
    if !(h > 0.0 && t_end > 0.0 && h.is_finite() && t_end.is_finite()) {
        return Err(Error::Dimension(format!("need h > 0 and T > 0, got h = {h}, T = {t_end}")));
    }
    Ok(())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Integrates `γ_f` on the network.
pub fn integrate(spec: &NetworkSpec, f: &ResponseFunction, x0: &[f64], lambda: f64, t_end: f64, h: f64) -> Result<Trajectory> {
    Flow::new(spec, f, lambda)?.integrate(x0, t_end, h, 1)
}

#[derive(Clone, Debug, Serialize)]
pub struct RelaxOptions {
    pub step: f64,
    pub t_max: f64,
    pub residual_tol: f64,
    /// Integration time between residual checks.
    pub chunk: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions { step: 0.05, t_max: 1e4, residual_tol: 1e-12, chunk: 10.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Relaxation {
    pub state: Vec<f64>,
    pub residual: f64,
    pub time: f64,
    pub converged: bool,
    pub blow_up: bool,
}

/// Integrates until `|γ_f| <= residual_tol` or `t_max`, then polishes with Newton.
pub fn relax_to_steady(flow: &Flow, x0: &[f64], opts: &RelaxOptions) -> Result<Relaxation> {
    check_steps(opts.t_max, opts.step)?;
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut res = norm(&flow.eval(&x));
    // keep RK4 inside its stability region for the fastest decaying mode
    let rho = crate::spectral::eigenvalues(&flow.jacobian(&x)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let h = if rho > 0.0 { opts.step.min(1.0 / rho) } else { opts.step };
    while res > opts.residual_tol && t < opts.t_max {
        let dt = opts.chunk.min(opts.t_max - t);
        let tr = flow.integrate(&x, dt, h, usize::MAX)?;
        x = tr.last().to_vec();
        t += dt;
        if tr.blow_up {
            return Ok(Relaxation { residual: f64::INFINITY, state: x, time: t, converged: false, blow_up: true });
        }
        res = norm(&flow.eval(&x));
    }
    if res > 0.0 {
        for _ in 0..8 {
            let j = flow.jacobian(&x);
            let r = DVector::from_vec(flow.eval(&x));
            let Some(step) = j.lu().solve(&r) else { break };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a - b).collect();
            let tres = norm(&flow.eval(&trial));
            if !(tres < res) {
                break;
            }
            x = trial;
            res = tres;
        }
    }
    Ok(Relaxation { converged: res <= opts.residual_tol, state: x, residual: res, time: t, blow_up: false })
}

/// `x` plus a fixed kick of relative size `rel` in `|·|_2`.
///
/// Near a Jordan-degenerate center the linearization is strongly nonnormal
/// and amplifies kicks by about `1/|λ|` before they decay, so relaxation
/// checks should keep `rel` well below `|λ|`.
pub fn perturbed_start(x: &[f64], rel: f64) -> Vec<f64> {
    let scale = rel * norm(x);
    x.iter().enumerate().map(|(i, v)| v + scale * [0.6, -0.8, 0.3][i % 3]).collect()
}

/// Largest distance from `Δ_P` along the trajectory from `x0 ∈ Δ_P`.
pub fn synchrony_flow_defect(flow: &Flow, p: &Partition, cell_dim: usize, x0: &[f64], t_end: f64, h: f64) -> Result<f64> {
    let tr = flow.integrate(x0, t_end, h, 1)?;
    if tr.blow_up {
        return Err(Error::Numerical("trajectory blew up".into()));
    }
    let d = cell_dim;
    let mut worst = 0.0f64;
    for x in &tr.states {
        for i in 0..p.cells() {
            for j in 0..i {
                if p.same_class(i, j) {
                    for k in 0..d {
                        worst = worst.max((x[i * d + k] - x[j * d + k]).abs());
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// `|π_p φ_γ^t(x0) − φ_Γ^t(π_p x0)|_∞` at `t = t_end`.
pub fn semiconjugacy_defect(
    spec: &NetworkSpec,
    f: &ResponseFunction,
    p: usize,
    x0: &[f64],
    lambda: f64,
    t_end: f64,
    h: f64,
) -> Result<f64> {
    let monoid = complete_monoid(spec);
    let fund = fundamental_network(&monoid, spec.cell_dim);
    let pi = cell_projection(p, &monoid, spec.cells, spec.cell_dim)?;
    let g = f.pad_slots(fund.slots())?;
    let small = Flow::new(spec, &f.pad_slots(spec.slots())?, lambda)?.advance(x0, t_end, h)?;
    let big0 = &pi * DVector::from_column_slice(x0);
    let big = Flow::new(&fund, &g, lambda)?.advance(big0.as_slice(), t_end, h)?;
    let proj = &pi * DVector::from_vec(small);
    Ok(proj.iter().zip(&big).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_network_spec;
    use crate::poly::{Monomial, PolyField};
    use crate::random;

    fn decay() -> (NetworkSpec, ResponseFunction) {
        // one cell, f(x, λ) = −x
        let spec = NetworkSpec::new(1, 1, vec![]).unwrap();
        let poly = PolyField::from_terms(2, 1, 1, vec![(Monomial::var(2, 0), vec![-1.0])]).unwrap();
        (spec, ResponseFunction::new(poly, 1, 1).unwrap())
    }

    #[test]
    fn exponential_decay() {
        let (spec, f) = decay();
        let tr = integrate(&spec, &f, &[1.0], 0.0, 1.0, 0.01).unwrap();
        assert!((tr.last()[0] - (-1.0f64).exp()).abs() < 1e-8);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        let flow = Flow::new(&spec, &f, 0.0).unwrap();
        assert!(flow.halving_error(&[1.0], 1.0, 0.01).unwrap() < 1e-8);
    }

    #[test]
    fn origin_is_immediately_steady() {
        let (spec, f) = decay();
        let flow = Flow::new(&spec, &f, 0.0).unwrap();
        let r = relax_to_steady(&flow, &[0.0], &RelaxOptions::default()).unwrap();
        assert!(r.converged && r.time == 0.0 && r.state == vec![0.0]);
    }

    #[test]
    fn blow_up_stops_early() {
        let spec = NetworkSpec::new(1, 1, vec![]).unwrap();
        let poly = PolyField::from_terms(2, 1, 2, vec![(Monomial::new(vec![2, 0]), vec![1.0])]).unwrap();
        let f = ResponseFunction::new(poly, 1, 1).unwrap();
        let tr = integrate(&spec, &f, &[1.0], 0.0, 5.0, 0.01).unwrap();
        assert!(tr.blow_up && *tr.times.last().unwrap() < 1.1, "{:?}", tr.times.last());
    }

    #[test]
    fn bad_steps_rejected() {
        let (spec, f) = decay();
        assert!(integrate(&spec, &f, &[1.0], 0.0, 1.0, 0.0).is_err());
        assert!(integrate(&spec, &f, &[1.0], 0.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn network_a_keeps_synchrony_and_semiconjugacy() {
        let spec =
            parse_network_spec(r#"{"cells":3,"maps":[{"label":"s2","target":[2,3,3]},{"label":"s3","target":[3,3,3]}]}"#)
                .unwrap();
        let mut rng = random::rng(3);
        let f = random::random_response(&mut rng, spec.slots(), 1, 3).poly;
        // damp so trajectories stay bounded
        let mut f = f;
        f.component_mut(0).add_term(Monomial::var(4, 0), -3.0);
        let f = ResponseFunction::new(f, spec.slots(), 1).unwrap();
        let flow = Flow::new(&spec, &f, 0.1).unwrap();
        let p = Partition::from_groups(3, &[&[1, 2]]);
        let dev = synchrony_flow_defect(&flow, &p, 1, &[0.1, -0.05, -0.05], 2.0, 0.01).unwrap();
        assert!(dev <= 1e-9, "{dev}");
        let s = semiconjugacy_defect(&spec, &f, 0, &[0.1, 0.02, -0.03], 0.1, 1.0, 0.01).unwrap();
        assert!(s <= 1e-10, "{s}");
    }
}
