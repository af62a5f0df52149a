//! Homogeneous coupled cell networks: input maps, monoid completion, the
//! fundamental network and admissible vector fields.
//!
//! Cell indices are 0-based in memory and 1-based in files and reports.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Monomial, PolyField};

/// A map `σ: cells -> cells`; `target[p] = σ(p)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InputMap {
    pub label: String,
    pub target: Vec<usize>,
}

impl InputMap {
    pub fn new(label: impl Into<String>, target: Vec<usize>) -> Self {
        InputMap { label: label.into(), target }
    }

    pub fn identity(n: usize, label: impl Into<String>) -> Self {
        InputMap::new(label, (0..n).collect())
    }

    /// Builds a map from 1-based targets.
    pub fn from_one_based(label: impl Into<String>, target: &[usize]) -> Result<Self> {
        let n = target.len();
        let mut t = Vec::with_capacity(n);
        for &v in target {
            if v == 0 || v > n {
                return Err(Error::CellIndexOutOfRange(format!("entry {v} with {n} cells")));
            }
            t.push(v - 1);
        }
        Ok(InputMap::new(label, t))
    }

    pub fn cells(&self) -> usize {
        self.target.len()
    }

    pub fn is_identity(&self) -> bool {
        self.target.iter().enumerate().all(|(i, &t)| i == t)
    }

    pub fn is_constant(&self) -> bool {
        self.target.windows(2).all(|w| w[0] == w[1])
    }

    pub fn apply(&self, p: usize) -> usize {
        self.target[p]
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.target.iter().map(|t| t + 1).collect()
    }
}

/// `(outer ∘ inner)(p) = outer(inner(p))`.
pub fn compose(outer: &InputMap, inner: &InputMap) -> Result<InputMap> {
    if outer.cells() != inner.cells() {
        return Err(Error::Dimension(format!(
            "composing maps on {} and {} cells",
            outer.cells(),
            inner.cells()
        )));
    }
    let target = inner.target.iter().map(|&q| outer.target[q]).collect();
    Ok(InputMap::new(format!("{}∘{}", outer.label, inner.label), target))
}

/// Cells, input maps (identity first) and single-cell dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub cells: usize,
    pub cell_dim: usize,
    pub maps: Vec<InputMap>,
}

impl NetworkSpec {
    /// Validates the maps and puts an identity map in front when none is given.
    pub fn new(cells: usize, cell_dim: usize, maps: Vec<InputMap>) -> Result<Self> {
        if cells == 0 {
            return Err(Error::Parse("a network needs at least one cell".into()));
        }
        if cell_dim == 0 {
            return Err(Error::Parse("cell_dim must be positive".into()));
        }
        let mut labels = HashSet::new();
        let mut targets = HashSet::new();
        for m in &maps {
            if m.cells() != cells {
                return Err(Error::Parse(format!(
                    "map {} has {} entries, expected {}",
                    m.label,
                    m.cells(),
                    cells
                )));
            }
            if let Some(&bad) = m.target.iter().find(|&&t| t >= cells) {
                return Err(Error::CellIndexOutOfRange(format!("entry {} in map {}", bad + 1, m.label)));
            }
            if !labels.insert(m.label.clone()) {
                return Err(Error::DuplicateLabel(m.label.clone()));
            }
            if !targets.insert(m.target.clone()) {
                return Err(Error::Parse(format!("map {} repeats an earlier map", m.label)));
            }
        }
        let mut maps = maps;
        match maps.iter().position(InputMap::is_identity) {
            Some(0) => {}
            Some(i) => {
                return Err(Error::Parse(format!(
                    "identity map {} must be listed first",
                    maps[i].label
                )))
            }
            None => {
                let mut label = "id".to_string();
                while labels.contains(&label) {
                    label.push('_');
                }
                maps.insert(0, InputMap::identity(cells, label));
            }
        }
        Ok(NetworkSpec { cells, cell_dim, maps })
    }

    /// Number of input slots per cell.
    pub fn slots(&self) -> usize {
        self.maps.len()
    }

    /// State dimension `N * cell_dim`.
    pub fn state_dim(&self) -> usize {
        self.cells * self.cell_dim
    }
}

/// Composition-closed set of input maps with its multiplication table.
#[derive(Clone, Debug, PartialEq)]
pub struct Monoid {
    pub elements: Vec<InputMap>,
    /// `table[i][j]` is the index of `σ_i ∘ σ_j`.
    pub table: Vec<Vec<usize>>,
    pub unit_index: usize,
}

impl Monoid {
    pub fn size(&self) -> usize {
        self.elements.len()
    }

    pub fn cells(&self) -> usize {
        self.elements[0].cells()
    }

    pub fn index_of(&self, target: &[usize]) -> Option<usize> {
        self.elements.iter().position(|e| e.target == target)
    }

    pub fn index_of_label(&self, label: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.label == label)
    }

    /// Checks closure, unit laws and associativity.
    pub fn check_laws(&self) -> bool {
        let n = self.size();
        let closed = self.table.len() == n && self.table.iter().all(|r| r.len() == n && r.iter().all(|&x| x < n));
        if !closed {
            return false;
        }
        let u = self.unit_index;
        let unit = (0..n).all(|j| self.table[u][j] == j && self.table[j][u] == j);
        let assoc = (0..n).all(|i| {
            (0..n).all(|j| (0..n).all(|k| self.table[self.table[i][j]][k] == self.table[i][self.table[j][k]]))
        });
        unit && assoc
    }
}

/// Smallest composition-closed superset of the network's maps.
///
/// New elements are found breadth first by multiplying known elements on the
/// right by generators, and labeled `g1`, `g2`, ... in discovery order.
pub fn complete_monoid(spec: &NetworkSpec) -> Monoid {
    let mut elements = spec.maps.clone();
    let mut index: HashMap<Vec<usize>, usize> =
        elements.iter().enumerate().map(|(i, e)| (e.target.clone(), i)).collect();
    let labels: HashSet<String> = elements.iter().map(|e| e.label.clone()).collect();
    let mut counter = 0usize;
    let mut queue: VecDeque<usize> = (0..elements.len()).collect();
    while let Some(i) = queue.pop_front() {
        for g in &spec.maps {
            let target: Vec<usize> = g.target.iter().map(|&q| elements[i].target[q]).collect();
            if index.contains_key(&target) {
                continue;
            }
            let label = loop {
                counter += 1;
                let l = format!("g{counter}");
                if !labels.contains(&l) {
                    break l;
                }
            };
            index.insert(target.clone(), elements.len());
            queue.push_back(elements.len());
            elements.push(InputMap::new(label, target));
        }
    }
    let n = elements.len();
    let table = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let t: Vec<usize> = elements[j].target.iter().map(|&q| elements[i].target[q]).collect();
                    index[&t]
                })
                .collect()
        })
        .collect();
    Monoid { elements, table, unit_index: 0 }
}

/// Network on the monoid elements: input slot `k` of cell `σ_j` reads cell `σ_k ∘ σ_j`.
pub fn fundamental_network(monoid: &Monoid, cell_dim: usize) -> NetworkSpec {
    let n = monoid.size();
    let maps = (0..n)
        .map(|k| InputMap::new(monoid.elements[k].label.clone(), (0..n).map(|j| monoid.table[k][j]).collect()))
        .collect();
    NetworkSpec { cells: n, cell_dim, maps }
}

/// Matrix of `π_p: V^N -> V^n`, `π_p(x)_{σ_j} = x_{σ_j(p)}`.
pub fn cell_projection(p: usize, monoid: &Monoid, orig_cells: usize, cell_dim: usize) -> Result<DMatrix<f64>> {
    if p >= orig_cells || monoid.cells() != orig_cells {
        return Err(Error::CellIndexOutOfRange(format!("cell {} of {}", p + 1, orig_cells)));
    }
    let n = monoid.size();
    let d = cell_dim;
    let mut m = DMatrix::zeros(n * d, orig_cells * d);
    for (j, s) in monoid.elements.iter().enumerate() {
        let q = s.apply(p);
        for k in 0..d {
            m[(j * d + k, q * d + k)] = 1.0;
        }
    }
    Ok(m)
}

/// Whether `π_p` is injective, with the orbit `{σ(p)}`.
pub fn injectivity_witness(p: usize, monoid: &Monoid) -> (bool, BTreeSet<usize>) {
    let orbit: BTreeSet<usize> = monoid.elements.iter().map(|s| s.apply(p)).collect();
    (orbit.len() == monoid.cells(), orbit)
}

/// Response function `f: V^n × R -> V` as a polynomial in `n * cell_dim + 1` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseFunction {
    pub poly: PolyField,
    pub slots: usize,
    pub cell_dim: usize,
}

impl ResponseFunction {
    pub fn new(poly: PolyField, slots: usize, cell_dim: usize) -> Result<Self> {
        if poly.n_in() != slots * cell_dim + 1 || poly.n_out() != cell_dim {
            return Err(Error::Dimension(format!(
                "response with {} inputs and {} outputs for {} slots of dimension {}",
                poly.n_in(),
                poly.n_out(),
                slots,
                cell_dim
            )));
        }
        if poly.components().iter().any(|p| p.terms().any(|(_, c)| !c.is_finite())) {
            return Err(Error::Parse("response coefficients must be finite".into()));
        }
        Ok(ResponseFunction { poly, slots, cell_dim })
    }

    pub fn degree(&self) -> u32 {
        self.poly.degree()
    }

    /// The same function viewed with `slots` arguments, ignoring the extra ones.
    pub fn pad_slots(&self, slots: usize) -> Result<ResponseFunction> {
        if slots < self.slots {
            return Err(Error::Dimension("cannot drop response slots".into()));
        }
        let d = self.cell_dim;
        let old = self.slots * d;
        let n_in = slots * d + 1;
        let terms = self.poly.terms().into_iter().map(|(m, c)| {
            let mut e = vec![0u16; n_in];
            e[..old].copy_from_slice(&m.exps()[..old]);
            e[n_in - 1] = m.exps()[old];
            (Monomial::new(e), c)
        });
        let poly = PolyField::from_terms(n_in, d, self.poly.degree(), terms)?;
        ResponseFunction::new(poly, slots, d)
    }

    /// Value of `f` at the origin and `λ = 0`.
    pub fn value_at_origin(&self) -> Vec<f64> {
        self.poly.constant_part()
    }
}

/// Variable selection `(x, λ) -> (x_{σ_1(p)}, …, x_{σ_n(p)}, λ)`.
fn slot_selection(spec: &NetworkSpec, p: usize) -> DMatrix<f64> {
    let d = spec.cell_dim;
    let n = spec.slots();
    let big = spec.state_dim();
    let mut s = DMatrix::zeros(n * d + 1, big + 1);
    for (k, m) in spec.maps.iter().enumerate() {
        let q = m.apply(p);
        for i in 0..d {
            s[(k * d + i, q * d + i)] = 1.0;
        }
    }
    s[(n * d, big)] = 1.0;
    s
}

/// The admissible field `γ_f` of the network, on `V^N × R`.
pub fn admissible_field(spec: &NetworkSpec, f: &ResponseFunction) -> Result<PolyField> {
    if f.slots != spec.slots() || f.cell_dim != spec.cell_dim {
        return Err(Error::Dimension(format!(
            "response has {} slots of dimension {}, network has {} maps on cells of dimension {}",
            f.slots,
            f.cell_dim,
            spec.slots(),
            spec.cell_dim
        )));
    }
    let parts = (0..spec.cells)
        .map(|p| f.poly.compose_linear(&slot_selection(spec, p)))
        .collect::<Result<Vec<_>>>()?;
    PolyField::stack(&parts)
}

// ---- file format ----

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MapRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    target: Vec<i64>,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum CoeffRepr {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TermRepr {
    monomial: Vec<u16>,
    coeff: CoeffRepr,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ResponseRepr {
    degree: u32,
    terms: Vec<TermRepr>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FileRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    cells: usize,
    #[serde(default = "one")]
    cell_dim: usize,
    #[serde(default)]
    maps: Vec<MapRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    response: Option<ResponseRepr>,
}

fn one() -> usize {
    1
}

/// Parsed contents of a network file.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkFile {
    pub name: Option<String>,
    pub spec: NetworkSpec,
    pub response: Option<ResponseFunction>,
}

pub fn parse_network_spec(text: &str) -> Result<NetworkSpec> {
    parse_network_file(text).map(|f| f.spec)
}

pub fn parse_network_file(text: &str) -> Result<NetworkFile> {
    let repr: FileRepr = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let n = repr.cells;
    let mut maps = Vec::with_capacity(repr.maps.len());
    for (i, m) in repr.maps.iter().enumerate() {
        let label = m.label.clone().unwrap_or_else(|| format!("s{}", i + 1));
        if m.target.len() != n {
            return Err(Error::Parse(format!("map {label} has {} entries, expected {n}", m.target.len())));
        }
        let mut t = Vec::with_capacity(n);
        for &v in &m.target {
            if v < 1 || v as usize > n {
                return Err(Error::CellIndexOutOfRange(format!("entry {v} in map {label}")));
            }
            t.push(v as usize - 1);
        }
        maps.push(InputMap::new(label, t));
    }
    let spec = NetworkSpec::new(n, repr.cell_dim, maps)?;
    let response = match repr.response {
        None => None,
        Some(r) => Some(response_from_repr(&r, &spec)?),
    };
    Ok(NetworkFile { name: repr.name, spec, response })
}

fn response_from_repr(r: &ResponseRepr, spec: &NetworkSpec) -> Result<ResponseFunction> {
    let d = spec.cell_dim;
    let n_in = spec.slots() * d + 1;
    let mut terms = Vec::with_capacity(r.terms.len());
    for t in &r.terms {
        if t.monomial.len() != n_in {
            return Err(Error::Parse(format!(
                "monomial with {} exponents, expected {} (one per slot variable plus the parameter)",
                t.monomial.len(),
                n_in
            )));
        }
        let c = match &t.coeff {
            CoeffRepr::Scalar(c) if d == 1 => vec![*c],
            CoeffRepr::Vector(v) if v.len() == d => v.clone(),
            _ => return Err(Error::Parse(format!("coefficient must have {d} entries"))),
        };
        let m = Monomial::new(t.monomial.clone());
        if m.degree() > r.degree {
            return Err(Error::Parse(format!("term of degree {} above declared degree {}", m.degree(), r.degree)));
        }
        terms.push((m, c));
    }
    let poly = PolyField::from_terms(n_in, d, r.degree, terms).map_err(|e| Error::Parse(e.to_string()))?;
    ResponseFunction::new(poly, spec.slots(), d)
}

/// Serializes a network (and optionally a response) in the file format.
pub fn network_to_json(spec: &NetworkSpec, response: Option<&ResponseFunction>, name: Option<&str>) -> String {
    let maps = spec
        .maps
        .iter()
        .map(|m| MapRepr { label: Some(m.label.clone()), target: m.target.iter().map(|&t| t as i64 + 1).collect() })
        .collect();
    let response = response.map(|f| ResponseRepr {
        degree: f.poly.degree(),
        terms: f
            .poly
            .terms()
            .into_iter()
            .map(|(m, c)| TermRepr {
                monomial: m.exps().to_vec(),
                coeff: if c.len() == 1 { CoeffRepr::Scalar(c[0]) } else { CoeffRepr::Vector(c) },
            })
            .collect(),
    });
    let repr = FileRepr { name: name.map(str::to_string), cells: spec.cells, cell_dim: spec.cell_dim, maps, response };
    serde_json::to_string_pretty(&repr).expect("network serializes")
}
