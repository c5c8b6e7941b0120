//! Scalar mathematics of the cost integrand `alpha/2 u^2 + beta |u|_0` on
//! `[-gamma, gamma]`: Hamiltonian minimizers, the convex envelope `g`, its
//! directional derivatives, and proximal maps.

use serde::Serialize;

/// Relative tolerance used to classify `|u|` against the kink `s`.
pub const KINK_RTOL: f64 = 1e-12;

/// Relative tolerance for deciding that two candidate objective values tie.
pub const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `alpha > 0` and `s < gamma`: `g` has a linear and a quadratic branch.
    InteriorKink,
    /// `g` is a multiple of `|u|`.
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl CostParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> CostParams {
        CostParams { alpha, beta, gamma }
    }

    /// `s = sqrt(2 beta / alpha)`, `inf` for `alpha = 0`.
    pub fn kink(&self) -> f64 {
        if self.alpha > 0.0 {
            (2.0 * self.beta / self.alpha).sqrt()
        } else {
            f64::INFINITY
        }
    }

    /// `sqrt(2 alpha beta)`.
    pub fn adjoint_threshold(&self) -> f64 {
        (2.0 * self.alpha * self.beta).sqrt()
    }

    /// `alpha gamma / 2 + beta / gamma`.
    pub fn bang_threshold(&self) -> f64 {
        0.5 * self.alpha * self.gamma + self.beta / self.gamma
    }

    pub fn regime(&self) -> Regime {
        if self.alpha > 0.0 && self.kink() < self.gamma {
            Regime::InteriorKink
        } else {
            Regime::L1
        }
    }

    pub fn is_interior_kink(&self) -> bool {
        self.regime() == Regime::InteriorKink
    }

    /// Slope of `g` in the l1 regime.
    pub fn l1_slope(&self) -> f64 {
        self.bang_threshold()
    }

    /// `|u| >= s` up to [`KINK_RTOL`].
    pub fn on_quadratic_branch(&self, u: f64) -> bool {
        let s = self.kink();
        u.abs() >= s * (1.0 - KINK_RTOL)
    }

    fn at_kink(&self, u: f64) -> bool {
        let s = self.kink();
        (u.abs() - s).abs() <= s * KINK_RTOL
    }
}

/// `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn clamp_box(v: f64, gamma: f64) -> f64 {
    if gamma.is_finite() {
        v.clamp(-gamma, gamma)
    } else {
        v
    }
}

fn ties(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= TIE_RTOL * scale.max(1e-300)
}

#[inline]
pub fn j0_scalar(u: f64, p: &CostParams) -> f64 {
    0.5 * p.alpha * u * u + if u != 0.0 { p.beta } else { 0.0 }
}

/// `phi u + alpha/2 u^2 + beta |u|_0`; the state-dependent part of the
/// Hamiltonian cancels in all comparisons.
#[inline]
pub fn hamiltonian(u: f64, phi: f64, p: &CostParams) -> f64 {
    phi * u + j0_scalar(u, p)
}

/// One or two global minimizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ArgminSet {
    One(f64),
    Two(f64, f64),
}

impl ArgminSet {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            ArgminSet::One(a) => vec![a],
            ArgminSet::Two(a, b) => vec![a, b],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArgminSet::One(_) => 1,
            ArgminSet::Two(..) => 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains_zero(&self) -> bool {
        self.values().contains(&0.0)
    }

    /// Member of smallest magnitude; ties broken toward sparsity.
    pub fn sparsest(&self) -> f64 {
        match *self {
            ArgminSet::One(a) => a,
            ArgminSet::Two(a, b) => {
                if a.abs() <= b.abs() {
                    a
                } else {
                    b
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseLabel {
    /// `|phi| >= alpha gamma`, bang control is the unique minimizer.
    C1,
    /// `|phi| >= alpha gamma`, bang and zero tie.
    C2,
    /// `|phi| >= alpha gamma`, zero wins.
    C3,
    /// `|phi| < alpha gamma`, `-phi/alpha` wins.
    C4,
    /// `|phi| < alpha gamma`, `-phi/alpha` and zero tie.
    C5,
    /// `|phi| < alpha gamma`, zero wins.
    C6,
    NegBang,
    Zero,
    PosBang,
    Tie,
}

impl CaseLabel {
    pub fn number(self) -> Option<u8> {
        match self {
            CaseLabel::C1 => Some(1),
            CaseLabel::C2 => Some(2),
            CaseLabel::C3 => Some(3),
            CaseLabel::C4 => Some(4),
            CaseLabel::C5 => Some(5),
            CaseLabel::C6 => Some(6),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CaseLabel::C1 => "1",
            CaseLabel::C2 => "2",
            CaseLabel::C3 => "3",
            CaseLabel::C4 => "4",
            CaseLabel::C5 => "5",
            CaseLabel::C6 => "6",
            CaseLabel::NegBang => "neg-bang",
            CaseLabel::Zero => "zero",
            CaseLabel::PosBang => "pos-bang",
            CaseLabel::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarCaseResult {
    pub set: ArgminSet,
    pub case: CaseLabel,
    /// Minimal Hamiltonian value.
    pub value: f64,
}

/// All global minimizers of `u -> phi u + alpha/2 u^2 + beta |u|_0` over
/// `[-gamma, gamma]`.
///
/// Panics when `alpha = 0` and `gamma = inf` (no minimizer exists).
pub fn hamiltonian_argmin(phi: f64, p: &CostParams) -> ScalarCaseResult {
    assert!(
        p.alpha > 0.0 || p.gamma.is_finite(),
        "hamiltonian_argmin needs alpha > 0 or a finite gamma"
    );
    // best nonzero candidate: minimizer of the smooth part over the box
    let v = if p.alpha > 0.0 {
        clamp_box(-phi / p.alpha, p.gamma)
    } else {
        -sign(phi) * p.gamma
    };
    let fv = if v != 0.0 { hamiltonian(v, phi, p) } else { f64::INFINITY };
    let scale = p.beta + (phi * v).abs() + 0.5 * p.alpha * v * v;
    let (set, value) = if fv.is_finite() && ties(fv, 0.0, scale) {
        (ArgminSet::Two(0.0, v), 0.0)
    } else if fv < 0.0 {
        (ArgminSet::One(v), fv)
    } else {
        (ArgminSet::One(0.0), 0.0)
    };
    let case = if p.alpha > 0.0 {
        let bang = phi.abs() >= p.alpha * p.gamma;
        match (set, bang) {
            (ArgminSet::One(u), true) if u != 0.0 => CaseLabel::C1,
            (ArgminSet::Two(..), true) => CaseLabel::C2,
            (_, true) => CaseLabel::C3,
            (ArgminSet::One(u), false) if u != 0.0 => CaseLabel::C4,
            (ArgminSet::Two(..), false) => CaseLabel::C5,
            (_, false) => CaseLabel::C6,
        }
    } else {
        match set {
            ArgminSet::Two(..) => CaseLabel::Tie,
            ArgminSet::One(u) if u < 0.0 => CaseLabel::NegBang,
            ArgminSet::One(u) if u > 0.0 => CaseLabel::PosBang,
            _ => CaseLabel::Zero,
        }
    };
    ScalarCaseResult { set, case, value }
}

/// Convex envelope of `j0_scalar` on `[-gamma, gamma]`.
#[inline]
pub fn g_scalar(u: f64, p: &CostParams) -> f64 {
    match p.regime() {
        Regime::InteriorKink => {
            if u.abs() < p.kink() {
                p.adjoint_threshold() * u.abs()
            } else {
                // same expression as j0_scalar so the two agree bitwise
                0.5 * p.alpha * u * u + p.beta
            }
        }
        Regime::L1 => p.l1_slope() * u.abs(),
    }
}

/// Directional derivative `g'(u; v)`.
#[inline]
pub fn g_dir1(u: f64, v: f64, p: &CostParams) -> f64 {
    match p.regime() {
        Regime::InteriorKink => {
            if u == 0.0 {
                p.adjoint_threshold() * v.abs()
            } else if p.on_quadratic_branch(u) {
                p.alpha * u * v
            } else {
                p.adjoint_threshold() * sign(u) * v
            }
        }
        Regime::L1 => {
            if u == 0.0 {
                p.l1_slope() * v.abs()
            } else {
                p.l1_slope() * sign(u) * v
            }
        }
    }
}

/// One-sided second derivative `g''(u; h^2)`; zero in the l1 regime.
#[inline]
pub fn g_dir2(u: f64, h: f64, p: &CostParams) -> f64 {
    if !p.is_interior_kink() {
        return 0.0;
    }
    let s = p.kink();
    let outward = p.at_kink(u) && sign(h) * sign(u) >= 0.0;
    if u.abs() > s * (1.0 + KINK_RTOL) || outward {
        p.alpha * h * h
    } else {
        0.0
    }
}

/// Sign-restricted surrogate: `alpha v^2` where `|u| >= s` and
/// `sign(v) = sign(u)`.
#[inline]
pub fn gtilde_scalar(u: f64, v: f64, p: &CostParams) -> f64 {
    if p.is_interior_kink() && v != 0.0 && p.on_quadratic_branch(u) && sign(v) == sign(u) {
        p.alpha * v * v
    } else {
        0.0
    }
}

/// `g(u+h) - g(u) - g'(u;h) - g''(u;h^2)/2`, evaluated branch by branch so
/// that the exact zeros are not lost to cancellation.
pub fn taylor_remainder(u: f64, h: f64, p: &CostParams) -> f64 {
    let w = u + h;
    let s = p.kink();
    if p.is_interior_kink() {
        if u.abs() > s * (1.0 + KINK_RTOL) {
            let d = (s - w.abs()).max(0.0);
            return -0.5 * p.alpha * d * d;
        }
        if p.at_kink(u) && sign(h) * sign(u) >= 0.0 {
            return 0.0;
        }
    }
    // linear branch at u: g(w) - slope * sigma * w
    let slope = if p.is_interior_kink() { p.adjoint_threshold() } else { p.l1_slope() };
    let sigma = if u != 0.0 { sign(u) } else { sign(h) };
    if sigma * w <= 0.0 {
        g_scalar(w, p) + slope * w.abs()
    } else if p.is_interior_kink() && w.abs() > s {
        let d = w.abs() - s;
        0.5 * p.alpha * d * d
    } else {
        0.0
    }
}

/// Pointwise lower bound for [`taylor_remainder`].
pub fn taylor_remainder_bound(u: f64, h: f64, p: &CostParams) -> f64 {
    let s = p.kink();
    if u.abs() <= s {
        0.0
    } else {
        let d = (s - (u + h).abs()).max(0.0);
        -0.5 * p.alpha * d * d
    }
}

/// All minimizers over `[-gamma, gamma]` of
/// `(v-w)^2/(2t) + alpha/2 v^2 + beta |v|_0`.
pub fn prox_j0(w: f64, t: f64, p: &CostParams) -> ArgminSet {
    debug_assert!(t > 0.0);
    let v = clamp_box(w / (1.0 + t * p.alpha), p.gamma);
    if v == 0.0 {
        return ArgminSet::One(0.0);
    }
    let f0 = w * w / (2.0 * t);
    let fv = (v - w) * (v - w) / (2.0 * t) + 0.5 * p.alpha * v * v + p.beta;
    if ties(f0, fv, f0.max(fv)) {
        ArgminSet::Two(0.0, v)
    } else if fv < f0 {
        ArgminSet::One(v)
    } else {
        ArgminSet::One(0.0)
    }
}

/// Unique minimizer over `[-gamma, gamma]` of `(v-w)^2/(2t) + g(v)`.
pub fn prox_g(w: f64, t: f64, p: &CostParams) -> f64 {
    debug_assert!(t > 0.0);
    if w < 0.0 {
        return -prox_g(-w, t, p);
    }
    match p.regime() {
        Regime::L1 => clamp_box((w - t * p.l1_slope()).max(0.0), p.gamma),
        Regime::InteriorKink => {
            let s = p.kink();
            let obj = |v: f64| (v - w) * (v - w) / (2.0 * t) + g_scalar(v, p);
            let mut best = 0.0;
            let mut fbest = obj(0.0);
            let lin = w - t * p.adjoint_threshold();
            let quad = w / (1.0 + t * p.alpha);
            let mut consider = |v: f64| {
                let f = obj(v);
                if f < fbest {
                    best = v;
                    fbest = f;
                }
            };
            if lin > 0.0 && lin < s {
                consider(lin);
            }
            if quad >= s && quad <= p.gamma {
                consider(quad);
            }
            consider(s);
            consider(p.gamma);
            best
        }
    }
}
