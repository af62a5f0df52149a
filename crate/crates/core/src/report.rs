//! Full-pipeline report: `report.json`, `branches.csv` and `diagram.svg`.
//!
//! Everything written here is a deterministic function of the input file and
//! the options, so two runs with the same seed produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::bifurcation::{
    self, refine_point, screened_draw, search, summary_table, AnalysisOptions, BifurcationAnalysis, BranchKind,
    BranchOptions, DrawScreen, ModelCoefficients, TableRow,
};
use crate::error::Result;
use crate::network::{admissible_field, complete_monoid, fundamental_network, parse_network_file, NetworkSpec, ResponseFunction};
use crate::poly::TermList;
use crate::reduce::{verify_reduced, ReduceOptions, ReductionReport};
use crate::representation::indecomposable_splitting;
use crate::simulate::{perturbed_start, relax_to_steady, Flow, RelaxOptions};
use crate::spectral::{eigen_clusters, default_cluster_tol, eigenvalues, Cluster};
use crate::synchrony::{enumerate_robust, hasse_edges};

/// Files written by [`write_report`].
pub const REPORT_FILES: [&str; 3] = ["report.json", "branches.csv", "diagram.svg"];

#[derive(Clone, Debug, Serialize)]
pub struct ReportOptions {
    pub seed: u64,
    pub order: u32,
    pub tol_re: Option<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points_per_side: usize,
    /// Parameter values for the simulation cross-check.
    pub validate_at: Vec<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        let b = BranchOptions::default();
        ReportOptions {
            seed: 0,
            order: 3,
            tol_re: None,
            lambda_min: b.lambda_min,
            lambda_max: b.lambda_max,
            points_per_side: b.points_per_side,
            validate_at: vec![-5e-3, 5e-3],
        }
    }
}

impl ReportOptions {
    pub fn analysis(&self) -> AnalysisOptions {
        AnalysisOptions {
            reduce: ReduceOptions { order: self.order, tol_re: self.tol_re },
            branches: BranchOptions {
                lambda_min: self.lambda_min,
                lambda_max: self.lambda_max,
                points_per_side: self.points_per_side,
                ..BranchOptions::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub version: &'static str,
    pub seed: u64,
    /// Index of the accepted draw in the seed's stream (0 when the file gives `f`).
    pub draw_attempt: usize,
    pub response_source: &'static str,
    pub options: ReportOptions,
    pub screen: Option<DrawScreen>,
    pub residual_tol: f64,
    pub dedup_tol: f64,
    pub synchrony_tol: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetworkSummary {
    pub name: Option<String>,
    pub cells: usize,
    pub cell_dim: usize,
    /// One-based targets, identity first.
    pub maps: Vec<(String, Vec<usize>)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonoidSummary {
    pub labels: Vec<String>,
    pub targets: Vec<Vec<usize>>,
    /// `table[i][j]` is the (0-based) index of `σ_i ∘ σ_j`.
    pub table: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SynchronySummary {
    pub balanced: Vec<String>,
    pub hasse: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    /// Eigenvalues of the original network at the origin, `λ = 0`.
    pub network: Vec<(f64, f64)>,
    /// Eigenvalue clusters of the fundamental network.
    pub fundamental: Vec<Cluster>,
    pub center_dim: usize,
    pub tol_re: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingSummary {
    pub dims: Vec<usize>,
    pub commutant_dims: Vec<usize>,
    pub invariance_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReducedSummary {
    pub names: Vec<String>,
    pub model_field: TermList,
    pub checks: ReductionReport,
    pub coefficients: Option<ModelCoefficients>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchSummary {
    pub id: usize,
    pub kind: Option<BranchKind>,
    pub side: i8,
    pub synchrony: String,
    pub points: usize,
    pub norm_exponent: Option<f64>,
    pub exponents: Vec<Option<f64>>,
    pub coefficients: Vec<f64>,
    pub fit_residuals: Vec<f64>,
    pub eig_signs: String,
    pub indeterminate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationPoint {
    pub branch: usize,
    pub lambda: f64,
    pub stable: bool,
    pub state: Vec<f64>,
    /// All eigenvalues of the network Jacobian at the predicted state.
    pub eigenvalues: Vec<(f64, f64)>,
    /// `|relaxed − predicted|_∞` for stable points.
    pub relaxation_error: Option<f64>,
    pub relaxation_converged: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub meta: Meta,
    pub network: NetworkSummary,
    pub monoid: MonoidSummary,
    pub synchrony: SynchronySummary,
    pub spectrum: SpectrumSummary,
    pub splitting: SplittingSummary,
    pub reduced: ReducedSummary,
    pub branches: Vec<BranchSummary>,
    pub table: Vec<TableRow>,
    pub gaps: Vec<f64>,
    pub validation: Vec<ValidationPoint>,
}

/// Network, response (given or drawn) and the analysis.
pub struct Pipeline {
    pub name: Option<String>,
    pub spec: NetworkSpec,
    pub response: ResponseFunction,
    pub attempt: usize,
    pub analysis: BifurcationAnalysis,
}

/// Runs the full pipeline on a network file. A response in the file is used
/// as is; otherwise one is drawn from the seed's stream and screened.
pub fn run_pipeline(text: &str, opts: &ReportOptions) -> Result<Pipeline> {
    let file = parse_network_file(text)?;
    let spec = file.spec;
    let aopts = opts.analysis();
    let (response, attempt, analysis) = match file.response {
        Some(f) => {
            let a = bifurcation::analyze(&spec, &f, &aopts)?;
            (f, 0, a)
        }
        None => {
            let d = screened_draw(&spec, opts.seed, &aopts, &DrawScreen::default())?;
            let f = d.response.clone();
            (f, d.attempt, search(&spec, d.prepared, &aopts.branches)?)
        }
    };
    Ok(Pipeline { name: file.name, spec, response, attempt, analysis })
}

fn validation(p: &Pipeline, at: &[f64]) -> Result<Vec<ValidationPoint>> {
    let a = &p.analysis;
    let mut out = Vec::new();
    for &lambda in at {
        let flow = Flow::new(&p.spec, &p.response, lambda)?;
        for (id, b) in a.branches.branches.iter().enumerate() {
            if b.side as f64 != lambda.signum() {
                continue;
            }
            let Ok(v) = refine_point(&a.model, &b.point_near(lambda.abs()).coords, lambda) else { continue };
            let x = a.lift(&v, lambda);
            let ev: Vec<(f64, f64)> = eigenvalues(&flow.jacobian(&x)).iter().map(|z| (z.re, z.im)).collect();
            let stable = ev.iter().all(|e| e.0 < 0.0);
            let (mut err, mut conv) = (None, None);
            if stable {
                let start = perturbed_start(&x, 1e-3);
                let r = relax_to_steady(&flow, &start, &RelaxOptions::default())?;
                err = Some(r.state.iter().zip(&x).map(|(s, t)| (s - t).abs()).fold(0.0, f64::max));
                conv = Some(r.converged);
            }
            out.push(ValidationPoint {
                branch: id,
                lambda,
                stable,
                state: x,
                eigenvalues: ev,
                relaxation_error: err,
                relaxation_converged: conv,
            });
        }
    }
    Ok(out)
}

/// Assembles the report for a finished pipeline.
pub fn build_report(p: &Pipeline, opts: &ReportOptions) -> Result<AnalysisReport> {
    let a = &p.analysis;
    let spec = &p.spec;
    let monoid = complete_monoid(spec);
    let parts = enumerate_robust(spec)?;
    let n = spec.state_dim();
    let field = admissible_field(spec, &p.response)?;
    let jac = field.linear_part().view((0, 0), (n, n)).into_owned();
    let fund = fundamental_network(&monoid, spec.cell_dim);
    let fund_field = admissible_field(&fund, &p.response.pad_slots(fund.slots())?)?;
    let m = fund.state_dim();
    let fj: DMatrix<f64> = fund_field.linear_part().view((0, 0), (m, m)).into_owned();
    let split = indecomposable_splitting(&monoid, spec.cell_dim, opts.seed)?;
    let actions = crate::representation::rep_matrices(&monoid, spec.cell_dim);
    let branches = a
        .branches
        .branches
        .iter()
        .enumerate()
        .map(|(id, b)| BranchSummary {
            id,
            kind: b.kind,
            side: b.side,
            synchrony: b.label(),
            points: b.points.len(),
            norm_exponent: b.norm_fit.exponent,
            exponents: b.coord_fits.iter().map(|f| f.exponent).collect(),
            coefficients: b.coord_fits.iter().map(|f| f.coefficient).collect(),
            fit_residuals: b.coord_fits.iter().map(|f| f.residual).collect(),
            eig_signs: b.signs.clone(),
            indeterminate: b.indeterminate,
        })
        .collect();
    Ok(AnalysisReport {
        meta: Meta {
            version: env!("CARGO_PKG_VERSION"),
            seed: opts.seed,
            draw_attempt: p.attempt,
            response_source: if p.attempt == 0 { "file" } else { "seeded draw" },
            options: opts.clone(),
            screen: (p.attempt > 0).then(DrawScreen::default),
            residual_tol: bifurcation::RESIDUAL_TOL,
            dedup_tol: BranchOptions::default().dedup_tol,
            synchrony_tol: "1e-8 (1 + |x|)",
        },
        network: NetworkSummary {
            name: p.name.clone(),
            cells: spec.cells,
            cell_dim: spec.cell_dim,
            maps: spec.maps.iter().map(|m| (m.label.clone(), m.one_based())).collect(),
        },
        monoid: MonoidSummary {
            labels: monoid.elements.iter().map(|e| e.label.clone()).collect(),
            targets: monoid.elements.iter().map(|e| e.one_based()).collect(),
            table: monoid.table.clone(),
        },
        synchrony: SynchronySummary { balanced: parts.iter().map(|p| p.to_string()).collect(), hasse: hasse_edges(&parts) },
        spectrum: SpectrumSummary {
            network: eigenvalues(&jac).iter().map(|z| (z.re, z.im)).collect(),
            fundamental: eigen_clusters(&fj, default_cluster_tol(&fj)),
            center_dim: a.reduction.aug.center_dim(),
            tol_re: a.reduction.aug.split.tol_re,
        },
        splitting: SplittingSummary {
            dims: split.splitting.dims(),
            commutant_dims: split.summands.iter().map(|s| s.commutant_dim).collect(),
            invariance_defect: split.splitting.invariance_defect(&actions),
        },
        reduced: ReducedSummary {
            names: a.model.names.clone(),
            model_field: a.model.field.to_term_list(),
            checks: verify_reduced(&a.reduction, 1e-9)?,
            coefficients: a.coefficients.clone(),
        },
        branches,
        table: summary_table(&a.branches),
        gaps: a.branches.gaps.clone(),
        validation: validation(p, &opts.validate_at)?,
    })
}

/// Per-point CSV: branch id, kind, side, λ, model coordinates, eigenvalue real parts.
pub fn branches_csv(a: &BifurcationAnalysis) -> String {
    let dim = a.model.dim();
    let mut out = String::from("branch,kind,side,synchrony,lambda");
    for name in &a.model.names {
        let _ = write!(out, ",{name}");
    }
    for i in 1..=dim {
        let _ = write!(out, ",re_eig{i}");
    }
    out.push('\n');
    for (id, b) in a.branches.branches.iter().enumerate() {
        let kind = b.kind.map(|k| k.to_string()).unwrap_or_default();
        for p in &b.points {
            let _ = write!(out, "{id},{kind},{},\"{}\",{:.10e}", b.side, b.label(), p.lambda);
            for v in &p.coords {
                let _ = write!(out, ",{v:.12e}");
            }
            for e in &p.eigenvalues {
                let _ = write!(out, ",{:.12e}", e.0);
            }
            out.push('\n');
        }
    }
    out
}

/// Minimal line plot of the first model coordinate against `λ`, one
/// polyline per branch, dashed where unstable.
pub fn diagram_svg(a: &BifurcationAnalysis) -> String {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let pts: Vec<(f64, f64)> =
        a.branches.branches.iter().flat_map(|b| b.points.iter().map(|p| (p.lambda, p.coords.first().copied().unwrap_or(0.0)))).collect();
    let lx = pts.iter().map(|p| p.0.abs()).fold(1e-12, f64::max);
    let ly = pts.iter().map(|p| p.1.abs()).fold(1e-12, f64::max);
    let sx = |x: f64| pad + (x / lx + 1.0) / 2.0 * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y / ly + 1.0) / 2.0 * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<g stroke="#888" stroke-width="1"><line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/><line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/></g>"##,
        pad,
        sy(0.0),
        w - pad,
        sy(0.0),
        sx(0.0),
        pad,
        sx(0.0),
        h - pad
    );
    let name = a.model.names.first().cloned().unwrap_or_else(|| "x".into());
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="end">λ</text>"#, w - pad, sy(0.0) - 6.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12">{name}</text>"#, sx(0.0) + 6.0, pad);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11">±{lx:.1e}</text>"#, w - pad - 40.0, h - pad + 16.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11">±{ly:.1e}</text>"#, 4.0, pad - 6.0);
    for b in &a.branches.branches {
        let color = match b.kind {
            Some(BranchKind::Full) => "#1f77b4",
            Some(BranchKind::Partial) => "#ff7f0e",
            Some(BranchKind::None) => "#2ca02c",
            None => "#555555",
        };
        let dash = if b.signs.chars().all(|c| c == '-') { "" } else { r#" stroke-dasharray="5,3""# };
        let path: Vec<String> =
            b.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.lambda), sy(p.coords.first().copied().unwrap_or(0.0)))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{}"/>"#, path.join(" "));
    }
    for (i, (label, color)) in [("Full", "#1f77b4"), ("Partial", "#ff7f0e"), ("None", "#2ca02c")].iter().enumerate() {
        let y = 20.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}" font-size="12" fill="{color}">{label}</text>"#, w - 90.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Runs the pipeline and writes the three report files into `out`.
pub fn write_report(text: &str, opts: &ReportOptions, out: &Path) -> Result<AnalysisReport> {
    let p = run_pipeline(text, opts)?;
    let report = build_report(&p, opts)?;
    std::fs::create_dir_all(out)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| crate::Error::Internal(e.to_string()))?;
    std::fs::write(out.join(REPORT_FILES[0]), json + "\n")?;
    std::fs::write(out.join(REPORT_FILES[1]), branches_csv(&p.analysis))?;
    std::fs::write(out.join(REPORT_FILES[2]), diagram_svg(&p.analysis))?;
    Ok(report)
}
