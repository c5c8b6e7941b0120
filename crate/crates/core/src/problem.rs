//! Grids, grid fields, nonlinearities and the validated problem description.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::pointwise::CostParams;

/// Axis-aligned box `(0, L_1) x ... ` with a uniform node lattice.
///
/// `interior[k]` counts interior nodes along axis `k`; the lattice has
/// `interior[k] + 2` nodes per axis including the two Dirichlet boundary nodes,
/// so `h[k] = extent[k] / (interior[k] + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    dim: usize,
    extent: [f64; 2],
    interior: [usize; 2],
    h: [f64; 2],
}

impl Grid {
    pub fn new_1d(extent: f64, interior: usize) -> Result<Grid> {
        Grid::new(&[extent], &[interior])
    }

    pub fn new_2d(extent: [f64; 2], interior: [usize; 2]) -> Result<Grid> {
        Grid::new(&extent, &interior)
    }

    pub fn new(extent: &[f64], interior: &[usize]) -> Result<Grid> {
        let dim = extent.len();
        if !(1..=2).contains(&dim) || interior.len() != dim {
            return Err(Error::Config(format!(
                "grid must be 1D or 2D with one extent and node count per axis (got {} extents, {} counts)",
                extent.len(),
                interior.len()
            )));
        }
        let mut e = [1.0; 2];
        let mut n = [1usize; 2];
        let mut h = [1.0; 2];
        for k in 0..dim {
            if !(extent[k].is_finite() && extent[k] > 0.0) {
                return Err(Error::Config(format!("extent must be positive, got {}", extent[k])));
            }
            if interior[k] < 1 {
                return Err(Error::Config(
                    "need at least one interior node per axis (3 nodes including boundary)".into(),
                ));
            }
            e[k] = extent[k];
            n[k] = interior[k];
            h[k] = extent[k] / (interior[k] + 1) as f64;
        }
        Ok(Grid {
            dim,
            extent: e,
            interior: n,
            h,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    /// Interior nodes per axis.
    pub fn interior_per_axis(&self) -> &[usize] {
        &self.interior[..self.dim]
    }

    /// Total nodes per axis, boundary included.
    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.interior_per_axis().iter().map(|n| n + 2).collect()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h[..self.dim]
    }

    /// Number of interior nodes `N` (the unknowns).
    pub fn len(&self) -> usize {
        self.interior_per_axis().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total lattice size including boundary nodes.
    pub fn total_nodes(&self) -> usize {
        self.nodes_per_axis().iter().product()
    }

    /// Quadrature weight of every interior node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// `|Omega|`.
    pub fn measure(&self) -> f64 {
        self.extent().iter().product()
    }

    /// Lattice index (boundary included) of interior node `i`.
    pub fn lattice_index(&self, i: usize) -> usize {
        match self.dim {
            1 => i + 1,
            _ => {
                let nx = self.interior[0];
                let (ix, iy) = (i % nx, i / nx);
                (iy + 1) * (nx + 2) + ix + 1
            }
        }
    }

    /// Lattice coordinates of a lattice index.
    pub fn lattice_coords(&self, l: usize) -> (f64, f64) {
        match self.dim {
            1 => (l as f64 * self.h[0], 0.0),
            _ => {
                let mx = self.interior[0] + 2;
                ((l % mx) as f64 * self.h[0], (l / mx) as f64 * self.h[1])
            }
        }
    }

    /// Physical coordinates of interior node `i`; `y = 0` in 1D.
    pub fn coords(&self, i: usize) -> (f64, f64) {
        self.lattice_coords(self.lattice_index(i))
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> {
        0..self.len()
    }

    /// Lattice indices of the Dirichlet boundary nodes.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let m = self.nodes_per_axis();
        match self.dim {
            1 => vec![0, m[0] - 1],
            _ => (0..self.total_nodes())
                .filter(|&l| {
                    let (ix, iy) = (l % m[0], l / m[0]);
                    ix == 0 || iy == 0 || ix == m[0] - 1 || iy == m[1] - 1
                })
                .collect(),
        }
    }
}

/// Real values on the interior nodes of a grid.
///
/// Boundary values are implicitly zero for states and adjoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<GridField> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid has {} interior nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite field value at node {i}")));
        }
        Ok(GridField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> GridField {
        let n = grid.len();
        GridField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> GridField {
        let n = grid.len();
        GridField {
            grid,
            values: vec![c; n],
        }
    }

    /// Samples `f(x, y)` at every interior node.
    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(f64, f64) -> f64) -> GridField {
        let values = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.coords(i);
                f(x, y)
            })
            .collect();
        GridField { grid, values }
    }

    pub(crate) fn from_vec_unchecked(grid: Arc<Grid>, values: Vec<f64>) -> GridField {
        debug_assert_eq!(values.len(), grid.len());
        GridField { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> GridField {
        debug_assert_eq!(self.len(), other.len());
        GridField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Discrete `L^2` inner product (node value times cell volume).
    pub fn dot(&self, other: &GridField) -> f64 {
        self.grid.cell_volume() * dot(&self.values, &other.values)
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Integral by node-wise quadrature.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Add for &GridField {
    type Output = GridField;
    fn add(self, rhs: &GridField) -> GridField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &GridField {
    type Output = GridField;
    fn sub(self, rhs: &GridField) -> GridField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &GridField {
    type Output = GridField;
    fn mul(self, c: f64) -> GridField {
        self.map(|v| c * v)
    }
}

/// Discrete measure of the support `{|u| > zero_tol}`.
pub fn l0_norm(u: &GridField, zero_tol: f64) -> f64 {
    u.grid().cell_volume() * u.values().iter().filter(|v| v.abs() > zero_tol).count() as f64
}

/// Pointwise clamp onto `[-gamma, gamma]`; identity for `gamma = inf`.
pub fn uad_project(u: &GridField, gamma: f64) -> GridField {
    if gamma.is_infinite() {
        return u.clone();
    }
    u.map(|v| v.clamp(-gamma, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearityFamily {
    /// `a = c0 y`
    Linear,
    /// `a = c0 y + c3 y^3`
    Cubic,
    /// `a = c0 atan(y)`
    Arctan,
}

impl NonlinearityFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "cubic" => Ok(Self::Cubic),
            "arctan" | "atan" => Ok(Self::Arctan),
            other => Err(Error::Config(format!(
                "unknown nonlinearity `{other}` (expected linear, cubic or arctan)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Cubic => "cubic",
            Self::Arctan => "arctan",
        }
    }
}

/// Monotone nonlinearity `a(x, y)` from a fixed whitelist, with node-wise
/// nonnegative coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    family: NonlinearityFamily,
    c0: Vec<f64>,
    c3: Vec<f64>,
}

impl Nonlinearity {
    pub fn new(family: NonlinearityFamily, c0: Vec<f64>, c3: Vec<f64>) -> Result<Self> {
        if c0.len() != c3.len() {
            return Err(Error::InvalidArgument("c0 and c3 lengths differ".into()));
        }
        for (name, c) in [("c0", &c0), ("c3", &c3)] {
            if let Some(v) = c.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Config(format!(
                    "coefficient {name} must be finite and nonnegative, found {v}"
                )));
            }
        }
        Ok(Nonlinearity { family, c0, c3 })
    }

    pub fn family(&self) -> NonlinearityFamily {
        self.family
    }

    pub fn c0(&self) -> &[f64] {
        &self.c0
    }

    pub fn c3(&self) -> &[f64] {
        &self.c3
    }

    #[inline]
    pub fn value(&self, i: usize, y: f64) -> f64 {
        match self.family {
            NonlinearityFamily::Linear => self.c0[i] * y,
            NonlinearityFamily::Cubic => self.c0[i] * y + self.c3[i] * y * y * y,
            NonlinearityFamily::Arctan => self.c0[i] * y.atan(),
        }
    }

    #[inline]
    pub fn dy(&self, i: usize, y: f64) -> f64 {
        match self.family {
            NonlinearityFamily::Linear => self.c0[i],
            NonlinearityFamily::Cubic => self.c0[i] + 3.0 * self.c3[i] * y * y,
            NonlinearityFamily::Arctan => self.c0[i] / (1.0 + y * y),
        }
    }

    #[inline]
    pub fn dyy(&self, i: usize, y: f64) -> f64 {
        match self.family {
            NonlinearityFamily::Linear => 0.0,
            NonlinearityFamily::Cubic => 6.0 * self.c3[i] * y,
            NonlinearityFamily::Arctan => {
                let d = 1.0 + y * y;
                -2.0 * self.c0[i] * y / (d * d)
            }
        }
    }
}

/// Tracking functional `L(x, y) = (y - y_d(x))^2 / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    target: Vec<f64>,
}

impl Objective {
    pub fn tracking(target: Vec<f64>) -> Result<Self> {
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("target y_d must be finite".into()));
        }
        Ok(Objective { target })
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    #[inline]
    pub fn value(&self, i: usize, y: f64) -> f64 {
        let d = y - self.target[i];
        0.5 * d * d
    }

    #[inline]
    pub fn dy(&self, i: usize, y: f64) -> f64 {
        y - self.target[i]
    }

    #[inline]
    pub fn dyy(&self, _i: usize, _y: f64) -> f64 {
        1.0
    }
}

/// Where a coefficient or target field comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    Constant(f64),
    Expr(Expr),
    /// Explicit node values (interior nodes, or all lattice nodes for `kappa`).
    Values(Vec<f64>),
    /// Field CSV as written by [`write_field_csv`].
    File(PathBuf),
}

impl FieldSource {
    /// `file:PATH`, a number, or an expression in `x`, `y`.
    pub fn parse(s: &str) -> Result<FieldSource> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(FieldSource::File(PathBuf::from(path.trim())));
        }
        if let Ok(v) = s.parse::<f64>() {
            return Ok(FieldSource::Constant(v));
        }
        Ok(FieldSource::Expr(Expr::parse(s)?))
    }

    fn describe(&self) -> String {
        match self {
            FieldSource::Constant(v) => format!("{v}"),
            FieldSource::Expr(e) => e.source().to_string(),
            FieldSource::Values(v) => format!("<{} values>", v.len()),
            FieldSource::File(p) => format!("file:{}", p.display()),
        }
    }

    fn sample_at(&self, pts: &[(f64, f64)], what: &str) -> Result<Vec<f64>> {
        match self {
            FieldSource::Constant(c) => Ok(vec![*c; pts.len()]),
            FieldSource::Expr(e) => Ok(pts.iter().map(|&(x, y)| e.eval(x, y)).collect()),
            FieldSource::Values(v) if v.len() == pts.len() => Ok(v.clone()),
            FieldSource::Values(v) => Err(Error::Config(format!(
                "{what}: expected {} values, got {}",
                pts.len(),
                v.len()
            ))),
            FieldSource::File(_) => Err(Error::Config(format!(
                "{what}: file input is only supported for interior fields"
            ))),
        }
    }

    fn sample_interior(&self, grid: &Arc<Grid>, what: &str) -> Result<Vec<f64>> {
        if let FieldSource::File(path) = self {
            return Ok(read_field_csv(path, grid.clone())?.into_values());
        }
        let pts: Vec<_> = (0..grid.len()).map(|i| grid.coords(i)).collect();
        self.sample_at(&pts, what)
    }

    fn sample_lattice(&self, grid: &Grid, what: &str) -> Result<Vec<f64>> {
        let pts: Vec<_> = (0..grid.total_nodes()).map(|l| grid.lattice_coords(l)).collect();
        self.sample_at(&pts, what)
    }
}

/// Structured description of a problem before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub extent: Vec<f64>,
    /// Interior nodes per axis; its length is the dimension.
    pub interior: Vec<usize>,
    /// Diffusion coefficient sampled on the full lattice (boundary included).
    pub kappa: FieldSource,
    /// Declared ellipticity constant; defaults to `min kappa`.
    pub lambda_a: Option<f64>,
    pub nonlinearity: NonlinearityFamily,
    pub c0: FieldSource,
    pub c3: FieldSource,
    pub target: FieldSource,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            extent: vec![1.0],
            interior: vec![63],
            kappa: FieldSource::Constant(1.0),
            lambda_a: None,
            nonlinearity: NonlinearityFamily::Linear,
            c0: FieldSource::Constant(0.0),
            c3: FieldSource::Constant(0.0),
            target: FieldSource::Constant(0.0),
            alpha: 1.0,
            beta: 1.0,
            gamma: 10.0,
        }
    }
}

/// Keys understood by [`ProblemConfig::from_key_values`].
pub const PROBLEM_KEYS: &[&str] = &[
    "dim",
    "extent",
    "n",
    "kappa",
    "lambda_a",
    "nonlinearity",
    "c0",
    "c3",
    "y_d",
    "alpha",
    "beta",
    "gamma",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        let key = k.trim().to_string();
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(out)
}

pub fn parse_real(s: &str, key: &str) -> Result<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
        t => t
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}` as a number"))),
    }
}

fn parse_list<T>(s: &str, key: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| f(p.trim()).ok_or_else(|| Error::Config(format!("`{key}`: bad entry `{p}`"))))
        .collect()
}

impl ProblemConfig {
    /// Builds a config from parsed key-value pairs. Keys outside
    /// [`PROBLEM_KEYS`] are ignored here; the caller decides whether they are
    /// legal.
    pub fn from_key_values(kv: &BTreeMap<String, String>) -> Result<ProblemConfig> {
        let mut cfg = ProblemConfig::default();
        let dim = match kv.get("dim") {
            Some(d) => d
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("`dim`: bad value `{d}`")))?,
            None => 1,
        };
        if !(1..=2).contains(&dim) {
            return Err(Error::Config(format!("`dim` must be 1 or 2, got {dim}")));
        }
        let broadcast = |v: Vec<f64>| if v.len() == 1 { vec![v[0]; dim] } else { v };
        cfg.extent = broadcast(match kv.get("extent") {
            Some(s) => parse_list(s, "extent", |p| p.parse().ok())?,
            None => vec![1.0],
        });
        let n: Vec<usize> = match kv.get("n") {
            Some(s) => parse_list(s, "n", |p| p.parse().ok())?,
            None => vec![63],
        };
        cfg.interior = if n.len() == 1 { vec![n[0]; dim] } else { n };
        if cfg.extent.len() != dim || cfg.interior.len() != dim {
            return Err(Error::Config(format!(
                "`extent` and `n` must have {dim} entries for dim = {dim}"
            )));
        }
        if let Some(s) = kv.get("kappa") {
            cfg.kappa = FieldSource::parse(s)?;
        }
        if let Some(s) = kv.get("lambda_a") {
            cfg.lambda_a = Some(parse_real(s, "lambda_a")?);
        }
        if let Some(s) = kv.get("nonlinearity") {
            cfg.nonlinearity = NonlinearityFamily::parse(s)?;
        }
        if let Some(s) = kv.get("c0") {
            cfg.c0 = FieldSource::parse(s)?;
        }
        if let Some(s) = kv.get("c3") {
            cfg.c3 = FieldSource::parse(s)?;
        }
        if let Some(s) = kv.get("y_d") {
            cfg.target = FieldSource::parse(s)?;
        }
        if let Some(s) = kv.get("alpha") {
            cfg.alpha = parse_real(s, "alpha")?;
        }
        if let Some(s) = kv.get("beta") {
            cfg.beta = parse_real(s, "beta")?;
        }
        if let Some(s) = kv.get("gamma") {
            cfg.gamma = parse_real(s, "gamma")?;
        }
        Ok(cfg)
    }

    /// Key-value echo for reports.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut m = BTreeMap::new();
        m.insert("dim".into(), self.interior.len().to_string());
        m.insert("extent".into(), list(&self.extent));
        m.insert(
            "n".into(),
            self.interior.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "),
        );
        m.insert("kappa".into(), self.kappa.describe());
        if let Some(l) = self.lambda_a {
            m.insert("lambda_a".into(), l.to_string());
        }
        m.insert("nonlinearity".into(), self.nonlinearity.name().into());
        m.insert("c0".into(), self.c0.describe());
        m.insert("c3".into(), self.c3.describe());
        m.insert("y_d".into(), self.target.describe());
        m.insert("alpha".into(), self.alpha.to_string());
        m.insert("beta".into(), self.beta.to_string());
        m.insert("gamma".into(), self.gamma.to_string());
        m
    }
}

/// Validated problem: grid, coefficients, nonlinearity, tracking target and
/// the cost parameters `alpha`, `beta`, `gamma`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    grid: Arc<Grid>,
    kappa: Vec<f64>,
    lambda_a: f64,
    nonlinearity: Nonlinearity,
    objective: Objective,
    alpha: f64,
    beta: f64,
    gamma: f64,
    config: ProblemConfig,
}

/// Validates a [`ProblemConfig`] and samples all fields.
pub fn build_problem(cfg: &ProblemConfig) -> Result<ProblemSpec> {
    let (alpha, beta, gamma) = (cfg.alpha, cfg.beta, cfg.gamma);
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Config(format!("beta must be finite and > 0, got {beta}")));
    }
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::Config(format!("gamma must be > 0 (or inf), got {gamma}")));
    }
    if alpha == 0.0 && gamma.is_infinite() {
        return Err(Error::Config(
            "gamma must be finite when alpha = 0 (the control bound is the only coercive term)"
                .into(),
        ));
    }
    let grid = Arc::new(Grid::new(&cfg.extent, &cfg.interior)?);
    let kappa = cfg.kappa.sample_lattice(&grid, "kappa")?;
    let kmin = kappa.iter().cloned().fold(f64::INFINITY, f64::min);
    if let Some(l) = kappa.iter().position(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(Error::Config(format!(
            "kappa must be positive everywhere (ellipticity); found {} at lattice node {l}",
            kappa[l]
        )));
    }
    let lambda_a = cfg.lambda_a.unwrap_or(kmin);
    if !(lambda_a > 0.0 && lambda_a <= kmin) {
        return Err(Error::Config(format!(
            "declared lambda_a = {lambda_a} must lie in (0, min kappa = {kmin}]"
        )));
    }
    let c0 = cfg.c0.sample_interior(&grid, "c0")?;
    let c3 = cfg.c3.sample_interior(&grid, "c3")?;
    let nonlinearity = Nonlinearity::new(cfg.nonlinearity, c0, c3)?;
    let objective = Objective::tracking(cfg.target.sample_interior(&grid, "y_d")?)?;
    Ok(ProblemSpec {
        grid,
        kappa,
        lambda_a,
        nonlinearity,
        objective,
        alpha,
        beta,
        gamma,
        config: cfg.clone(),
    })
}

impl ProblemSpec {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Diffusion coefficient on the full lattice.
    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn lambda_a(&self) -> f64 {
        self.lambda_a
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.config
    }

    pub fn cost_params(&self) -> CostParams {
        CostParams::new(self.alpha, self.beta, self.gamma)
    }

    /// Same problem with a different sparsity weight.
    pub fn with_beta(&self, beta: f64) -> Result<ProblemSpec> {
        let mut cfg = self.config.clone();
        cfg.beta = beta;
        let mut out = self.clone();
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Config(format!("beta must be finite and > 0, got {beta}")));
        }
        out.beta = beta;
        out.config = cfg;
        Ok(out)
    }

    /// Threshold below which a control value counts as zero.
    pub fn zero_tol(&self) -> f64 {
        if self.gamma.is_finite() {
            1e-12 * self.gamma.max(1.0)
        } else {
            1e-12
        }
    }

    pub fn l0_norm(&self, u: &GridField) -> f64 {
        l0_norm(u, self.zero_tol())
    }

    pub fn zeros(&self) -> GridField {
        GridField::zeros(self.grid.clone())
    }

    pub fn target_field(&self) -> GridField {
        GridField::from_vec_unchecked(self.grid.clone(), self.objective.target.clone())
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}D grid {:?}, {} nonlinearity, alpha={}, beta={}, gamma={}",
            self.grid.dim(),
            self.grid.interior_per_axis(),
            self.nonlinearity.family.name(),
            self.alpha,
            self.beta,
            self.gamma
        )
    }
}

/// Writes `index, x[, y], value` rows for every interior node.
pub fn write_field_csv(path: &Path, field: &GridField) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let grid = field.grid();
    if grid.dim() == 1 {
        w.write_record(["index", "x", "value"])?;
    } else {
        w.write_record(["index", "x", "y", "value"])?;
    }
    for (i, v) in field.values().iter().enumerate() {
        let (x, y) = grid.coords(i);
        let mut rec = vec![i.to_string(), fmt_num(x)];
        if grid.dim() == 2 {
            rec.push(fmt_num(y));
        }
        rec.push(fmt_num(*v));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip representation.
pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// Reads a field CSV written by [`write_field_csv`]; the last column is the value.
pub fn read_field_csv(path: &Path, grid: Arc<Grid>) -> Result<GridField> {
    let mut r = csv::Reader::from_path(path)?;
    let mut values = vec![f64::NAN; grid.len()];
    let mut seen = 0usize;
    for rec in r.records() {
        let rec = rec?;
        let idx: usize = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("{}: bad index column", path.display())))?;
        let v: f64 = rec
            .get(rec.len() - 1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("{}: bad value column", path.display())))?;
        if idx >= values.len() {
            return Err(Error::Config(format!(
                "{}: node index {idx} out of range for {} nodes",
                path.display(),
                values.len()
            )));
        }
        values[idx] = v;
        seen += 1;
    }
    if seen != grid.len() {
        return Err(Error::Config(format!(
            "{}: expected {} rows, found {seen}",
            path.display(),
            grid.len()
        )));
    }
    GridField::new(grid, values).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
