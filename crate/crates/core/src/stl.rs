//! Signal temporal logic over discrete trajectories.
//!
//! Time bounds are inclusive step indices: `Globally { a, b, .. }` at step
//! `t` looks at steps `t + a ..= t + b`. Evaluation never truncates a
//! window; asking for a time whose window runs past the end of the
//! trajectory is an error.
//!
//! The quantitative evaluator is written once over [`Scalar`] so that the
//! plain `f64` robustness and the taped robustness agree bit for bit.
//! Temporal and Boolean connectives only ever *select* one of their
//! operands (left-most on ties), so gradients flow to exactly one leaf.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Scalar, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("evaluation at step {t} needs {depth} further steps but the trajectory has {len} states")]
    WindowExceedsTrajectory { t: usize, depth: usize, len: usize },
    #[error("temporal bounds [{a}, {b}] are not ordered")]
    BadBounds { a: usize, b: usize },
    #[error("atom references component {component} of a {dim}-dimensional state")]
    ComponentOutOfRange { component: usize, dim: usize },
    #[error("robustness is unbounded ({0}) and cannot be differentiated")]
    Unbounded(f64),
    #[error("requirement set is empty")]
    EmptyRequirements,
    #[error("requirement weights must be non-negative with a positive sum")]
    BadWeights,
    #[error("formula depth {depth} does not fit a window of {window} states")]
    DepthExceedsWindow { depth: usize, window: usize },
    #[error("trajectory is malformed: {0}")]
    BadTrajectory(String),
}

/// Which side of the bound an atom asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `s[c] >= bound`, robustness `s[c] - bound`.
    Ge,
    /// `s[c] <= bound`, robustness `bound - s[c]`.
    Le,
}

/// Affine predicate `f(s) = sum(coef * s[i]) + constant > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "AtomRepr", into = "AtomRepr")]
pub struct Atom {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
    pub label: String,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum AtomRepr {
    Bound {
        component: usize,
        direction: Direction,
        bound: f64,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        label: String,
    },
    Affine {
        terms: Vec<(usize, f64)>,
        constant: f64,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        label: String,
    },
}

impl From<AtomRepr> for Atom {
    fn from(r: AtomRepr) -> Self {
        match r {
            AtomRepr::Bound {
                component,
                direction,
                bound,
                label,
            } => {
                let mut atom = Atom::bound(component, direction, bound);
                if !label.is_empty() {
                    atom.label = label;
                }
                atom
            }
            AtomRepr::Affine {
                terms,
                constant,
                label,
            } => Atom {
                terms,
                constant,
                label,
            },
        }
    }
}

impl From<Atom> for AtomRepr {
    fn from(a: Atom) -> Self {
        match a.as_bound() {
            Some((component, direction, bound)) => AtomRepr::Bound {
                component,
                direction,
                bound,
                label: a.label,
            },
            None => AtomRepr::Affine {
                terms: a.terms,
                constant: a.constant,
                label: a.label,
            },
        }
    }
}

impl Atom {
    pub fn bound(component: usize, direction: Direction, bound: f64) -> Self {
        let (coef, constant, op) = match direction {
            Direction::Ge => (1.0, -bound, ">="),
            Direction::Le => (-1.0, bound, "<="),
        };
        Atom {
            terms: vec![(component, coef)],
            constant,
            label: format!("s[{component}] {op} {bound}"),
        }
    }

    pub fn ge(component: usize, bound: f64) -> Self {
        Self::bound(component, Direction::Ge, bound)
    }

    pub fn le(component: usize, bound: f64) -> Self {
        Self::bound(component, Direction::Le, bound)
    }

    pub fn affine(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Atom {
            label: format!("affine{terms:?}+{constant}"),
            terms,
            constant,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn as_bound(&self) -> Option<(usize, Direction, f64)> {
        match self.terms.as_slice() {
            [(c, k)] if *k == 1.0 => Some((*c, Direction::Ge, -self.constant)),
            [(c, k)] if *k == -1.0 => Some((*c, Direction::Le, self.constant)),
            _ => None,
        }
    }

    /// `f(s)`. Unit coefficients are applied without a multiplication.
    pub fn eval<S: Scalar>(&self, s: &[S]) -> S {
        let mut acc: Option<S> = None;
        for &(i, k) in &self.terms {
            let term = if k == 1.0 {
                s[i]
            } else if k == -1.0 {
                -s[i]
            } else {
                s[i] * k
            };
            acc = Some(match acc {
                None => term,
                Some(a) => a + term,
            });
        }
        match acc {
            Some(a) => a + self.constant,
            None => panic!("atom without terms"),
        }
    }

    fn max_component(&self) -> Option<usize> {
        self.terms.iter().map(|&(i, _)| i).max()
    }
}

/// STL formula with discrete-step time bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Formula {
    True,
    Atom(Atom),
    Not {
        arg: Box<Formula>,
    },
    And {
        lhs: Box<Formula>,
        rhs: Box<Formula>,
    },
    Or {
        lhs: Box<Formula>,
        rhs: Box<Formula>,
    },
    Until {
        a: usize,
        b: usize,
        lhs: Box<Formula>,
        rhs: Box<Formula>,
    },
    Eventually {
        a: usize,
        b: usize,
        arg: Box<Formula>,
    },
    Globally {
        a: usize,
        b: usize,
        arg: Box<Formula>,
    },
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Atom(a) => write!(f, "({})", a.label),
            Formula::Not { arg } => write!(f, "!{arg}"),
            Formula::And { lhs, rhs } => write!(f, "({lhs} & {rhs})"),
            Formula::Or { lhs, rhs } => write!(f, "({lhs} | {rhs})"),
            Formula::Until { a, b, lhs, rhs } => write!(f, "({lhs} U[{a},{b}] {rhs})"),
            Formula::Eventually { a, b, arg } => write!(f, "F[{a},{b}] {arg}"),
            Formula::Globally { a, b, arg } => write!(f, "G[{a},{b}] {arg}"),
        }
    }
}

impl Formula {
    pub fn atom(atom: Atom) -> Self {
        Formula::Atom(atom)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(arg: Formula) -> Self {
        Formula::Not { arg: Box::new(arg) }
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Self {
        Formula::And {
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Self {
        Formula::Or {
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn until(a: usize, b: usize, lhs: Formula, rhs: Formula) -> Self {
        Formula::Until {
            a,
            b,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn eventually(a: usize, b: usize, arg: Formula) -> Self {
        Formula::Eventually {
            a,
            b,
            arg: Box::new(arg),
        }
    }

    pub fn globally(a: usize, b: usize, arg: Formula) -> Self {
        Formula::Globally {
            a,
            b,
            arg: Box::new(arg),
        }
    }

    /// `lo <= s[c] <= hi` as a conjunction of two atoms.
    pub fn in_box(component: usize, lo: f64, hi: f64) -> Self {
        Formula::and(
            Formula::atom(Atom::le(component, hi)),
            Formula::atom(Atom::ge(component, lo)),
        )
    }

    /// Sum of the upper bounds of nested temporal operators (max over branches).
    pub fn temporal_depth(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 0,
            Formula::Not { arg } => arg.temporal_depth(),
            Formula::And { lhs, rhs } | Formula::Or { lhs, rhs } => {
                lhs.temporal_depth().max(rhs.temporal_depth())
            }
            Formula::Until { b, lhs, rhs, .. } => b + lhs.temporal_depth().max(rhs.temporal_depth()),
            Formula::Eventually { b, arg, .. } | Formula::Globally { b, arg, .. } => {
                b + arg.temporal_depth()
            }
        }
    }

    /// Checks bound ordering and that atoms fit a `dim`-dimensional state.
    pub fn validate(&self, dim: usize) -> Result<(), StlError> {
        match self {
            Formula::True => Ok(()),
            Formula::Atom(atom) => match atom.max_component() {
                Some(c) if c >= dim => Err(StlError::ComponentOutOfRange { component: c, dim }),
                Some(_) => Ok(()),
                None => Err(StlError::BadTrajectory("atom without terms".into())),
            },
            Formula::Not { arg } => arg.validate(dim),
            Formula::And { lhs, rhs } | Formula::Or { lhs, rhs } => {
                lhs.validate(dim)?;
                rhs.validate(dim)
            }
            Formula::Until { a, b, lhs, rhs } => {
                if a > b {
                    return Err(StlError::BadBounds { a: *a, b: *b });
                }
                lhs.validate(dim)?;
                rhs.validate(dim)
            }
            Formula::Eventually { a, b, arg } | Formula::Globally { a, b, arg } => {
                if a > b {
                    return Err(StlError::BadBounds { a: *a, b: *b });
                }
                arg.validate(dim)
            }
        }
    }
}

/// Time-indexed sequence of equally sized real vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(states: Vec<Vec<f64>>, dt: f64) -> Result<Self, StlError> {
        if states.is_empty() {
            return Err(StlError::BadTrajectory("no states".into()));
        }
        if !(dt > 0.0) {
            return Err(StlError::BadTrajectory(format!("step {dt} is not positive")));
        }
        let dim = states[0].len();
        if states.iter().any(|s| s.len() != dim) {
            return Err(StlError::BadTrajectory("states differ in dimension".into()));
        }
        Ok(Self { states, dt })
    }

    /// One-dimensional trajectory from a scalar signal.
    pub fn scalar(values: &[f64], dt: f64) -> Result<Self, StlError> {
        Self::new(values.iter().map(|&v| vec![v]).collect(), dt)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }
}

/// Robustness value extended with `±inf` (for `true` and its negation).
#[derive(Debug, Clone, Copy)]
enum Ext<S> {
    Bot,
    Fin(S),
    Top,
}

impl<S: Scalar> Ext<S> {
    fn key(&self) -> f64 {
        match self {
            Ext::Bot => f64::NEG_INFINITY,
            Ext::Fin(s) => s.value(),
            Ext::Top => f64::INFINITY,
        }
    }

    fn neg(self) -> Self {
        match self {
            Ext::Bot => Ext::Top,
            Ext::Fin(s) => Ext::Fin(-s),
            Ext::Top => Ext::Bot,
        }
    }

    fn min(self, other: Self) -> Self {
        if self.key() <= other.key() {
            self
        } else {
            other
        }
    }

    fn max(self, other: Self) -> Self {
        if self.key() >= other.key() {
            self
        } else {
            other
        }
    }
}

fn check_window(phi: &Formula, len: usize, t: usize) -> Result<usize, StlError> {
    let depth = phi.temporal_depth();
    if t + depth >= len {
        return Err(StlError::WindowExceedsTrajectory { t, depth, len });
    }
    Ok(depth)
}

/// Robustness signal of `phi` at every step `0 ..= len - 1 - depth(phi)`.
fn signal<S: Scalar>(phi: &Formula, xs: &[Vec<S>]) -> Vec<Ext<S>> {
    match phi {
        Formula::True => {
            let n = xs.len();
            vec![Ext::Top; n]
        }
        Formula::Atom(atom) => xs.iter().map(|s| Ext::Fin(atom.eval(s))).collect(),
        Formula::Not { arg } => signal(arg, xs).into_iter().map(Ext::neg).collect(),
        Formula::And { lhs, rhs } => {
            let (l, r) = (signal(lhs, xs), signal(rhs, xs));
            l.into_iter().zip(r).map(|(x, y)| x.min(y)).collect()
        }
        Formula::Or { lhs, rhs } => {
            let (l, r) = (signal(lhs, xs), signal(rhs, xs));
            l.into_iter().zip(r).map(|(x, y)| x.max(y)).collect()
        }
        Formula::Globally { a, b, arg } => sliding(&signal(arg, xs), *a, *b, true),
        Formula::Eventually { a, b, arg } => sliding(&signal(arg, xs), *a, *b, false),
        Formula::Until { a, b, lhs, rhs } => {
            let (l, r) = (signal(lhs, xs), signal(rhs, xs));
            until(&l, &r, *a, *b)
        }
    }
}

/// Windowed min (or max) over `sig[t + a ..= t + b]` with a monotone deque.
/// The earliest extremum wins ties.
fn sliding<S: Scalar>(sig: &[Ext<S>], a: usize, b: usize, take_min: bool) -> Vec<Ext<S>> {
    if sig.len() <= b {
        return Vec::new();
    }
    let out_len = sig.len() - b;
    let worse = |back: f64, new: f64| if take_min { back > new } else { back < new };
    let mut out = Vec::with_capacity(out_len);
    let mut dq: VecDeque<usize> = VecDeque::with_capacity(b - a + 1);
    let mut next = a;
    for t in 0..out_len {
        while next <= t + b {
            let k = sig[next].key();
            while dq.back().is_some_and(|&j| worse(sig[j].key(), k)) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&j| j < t + a) {
            dq.pop_front();
        }
        out.push(sig[*dq.front().expect("window is never empty")]);
    }
    out
}

fn until<S: Scalar>(l: &[Ext<S>], r: &[Ext<S>], a: usize, b: usize) -> Vec<Ext<S>> {
    let len = l.len().min(r.len());
    if len <= b {
        return Vec::new();
    }
    (0..len - b)
        .map(|t| {
            let mut running = l[t];
            let mut best: Option<Ext<S>> = None;
            for tau in t..=t + b {
                if tau > t {
                    running = running.min(l[tau]);
                }
                if tau >= t + a {
                    let cand = r[tau].min(running);
                    best = Some(match best {
                        None => cand,
                        Some(bst) => bst.max(cand),
                    });
                }
            }
            best.expect("until window is never empty")
        })
        .collect()
}

fn eval_at<S: Scalar>(phi: &Formula, xs: &[Vec<S>], t: usize) -> Result<Ext<S>, StlError> {
    let depth = check_window(phi, xs.len(), t)?;
    let dim = xs[0].len();
    phi.validate(dim)?;
    let sig = signal(phi, &xs[t..=t + depth]);
    Ok(sig[0])
}

/// Quantitative robustness of `phi` on `xi` at step `t`.
///
/// `true` evaluates to `+inf`.
pub fn robustness(phi: &Formula, xi: &Trajectory, t: usize) -> Result<f64, StlError> {
    robustness_states(phi, &xi.states, t)
}

/// [`robustness`] on a bare slice of states.
pub fn robustness_states(phi: &Formula, states: &[Vec<f64>], t: usize) -> Result<f64, StlError> {
    Ok(eval_at(phi, states, t)?.key())
}

/// Robustness recorded on a tape.
///
/// The node's value equals [`robustness`] on the same values exactly.
pub fn robustness_diff<'t>(
    phi: &Formula,
    states: &[Vec<Var<'t>>],
    t: usize,
) -> Result<Var<'t>, StlError> {
    robustness_generic(phi, states, t)
}

/// Generic robustness for any [`Scalar`]; unbounded values are an error.
pub fn robustness_generic<S: Scalar>(
    phi: &Formula,
    states: &[Vec<S>],
    t: usize,
) -> Result<S, StlError> {
    match eval_at(phi, states, t)? {
        Ext::Fin(s) => Ok(s),
        other => Err(StlError::Unbounded(other.key())),
    }
}

/// Boolean satisfaction. Atoms are strict: `f(s) > 0`.
pub fn satisfies(phi: &Formula, xi: &Trajectory, t: usize) -> Result<bool, StlError> {
    check_window(phi, xi.len(), t)?;
    phi.validate(xi.dim())?;
    Ok(sat(phi, &xi.states, t))
}

fn sat(phi: &Formula, xs: &[Vec<f64>], t: usize) -> bool {
    match phi {
        Formula::True => true,
        Formula::Atom(atom) => atom.eval(&xs[t]) > 0.0,
        Formula::Not { arg } => !sat(arg, xs, t),
        Formula::And { lhs, rhs } => sat(lhs, xs, t) && sat(rhs, xs, t),
        Formula::Or { lhs, rhs } => sat(lhs, xs, t) || sat(rhs, xs, t),
        Formula::Until { a, b, lhs, rhs } => (t + a..=t + b)
            .any(|tp| sat(rhs, xs, tp) && (t..=tp).all(|tpp| sat(lhs, xs, tpp))),
        Formula::Eventually { a, b, arg } => (t + a..=t + b).any(|tp| sat(arg, xs, tp)),
        Formula::Globally { a, b, arg } => (t + a..=t + b).all(|tp| sat(arg, xs, tp)),
    }
}

/// Boolean summary of a robustness value. Zero robustness counts as not
/// satisfied and is flagged as a boundary case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub satisfied: bool,
    pub boundary: bool,
}

impl Verdict {
    pub fn from_robustness(rho: f64) -> Self {
        Verdict {
            satisfied: rho > 0.0,
            boundary: rho == 0.0,
        }
    }
}

/// Weighted set of requirements evaluated on windows of `window` states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementSet {
    pub requirements: Vec<Requirement>,
    /// Number of states in each evaluation window.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Requirement {
    pub name: String,
    pub formula: Formula,
    pub weight: f64,
}

impl RequirementSet {
    pub fn new(requirements: Vec<Requirement>, window: usize) -> Result<Self, StlError> {
        let set = Self {
            requirements,
            window,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), StlError> {
        if self.requirements.is_empty() {
            return Err(StlError::EmptyRequirements);
        }
        let total: f64 = self.requirements.iter().map(|r| r.weight).sum();
        if self.requirements.iter().any(|r| !(r.weight >= 0.0)) || !(total > 0.0) || !total.is_finite() {
            return Err(StlError::BadWeights);
        }
        for r in &self.requirements {
            let depth = r.formula.temporal_depth();
            if depth >= self.window {
                return Err(StlError::DepthExceedsWindow {
                    depth,
                    window: self.window,
                });
            }
        }
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.requirements.iter().map(|r| r.weight).sum()
    }

    pub fn names(&self) -> Vec<String> {
        self.requirements.iter().map(|r| r.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.requirements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty()
    }
}

/// `(1 / sum(w)) * sum(w_i * rho_i)` over the requirement set.
pub fn combined_robustness_generic<S: Scalar>(
    set: &RequirementSet,
    states: &[Vec<S>],
    t: usize,
) -> Result<S, StlError> {
    set.validate()?;
    let mut acc: Option<S> = None;
    for r in &set.requirements {
        let term = robustness_generic(&r.formula, states, t)? * r.weight;
        acc = Some(match acc {
            None => term,
            Some(a) => a + term,
        });
    }
    let acc = acc.ok_or(StlError::EmptyRequirements)?;
    Ok(acc / set.total_weight())
}

pub fn combined_robustness(set: &RequirementSet, xi: &Trajectory, t: usize) -> Result<f64, StlError> {
    combined_robustness_generic(set, &xi.states, t)
}

pub fn combined_robustness_diff<'t>(
    set: &RequirementSet,
    states: &[Vec<Var<'t>>],
    t: usize,
) -> Result<Var<'t>, StlError> {
    combined_robustness_generic(set, states, t)
}

/// Robustness of "`phi` holds over the whole trajectory".
///
/// For `Globally[a, b](body)` this widens the outer window to the full
/// trajectory; any other formula is wrapped in `Globally` over every step
/// where its window fits.
pub fn global_robustness(phi: &Formula, states: &[Vec<f64>]) -> Result<f64, StlError> {
    let len = states.len();
    let wrapped = match phi {
        Formula::Globally { a: 0, arg, .. } => {
            let inner = arg.temporal_depth();
            if inner >= len {
                return Err(StlError::WindowExceedsTrajectory { t: 0, depth: inner, len });
            }
            Formula::Globally {
                a: 0,
                b: len - 1 - inner,
                arg: arg.clone(),
            }
        }
        other => {
            let depth = other.temporal_depth();
            if depth >= len {
                return Err(StlError::WindowExceedsTrajectory { t: 0, depth, len });
            }
            Formula::globally(0, len - 1 - depth, other.clone())
        }
    };
    robustness_states(&wrapped, states, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn d_traj() -> Trajectory {
        Trajectory::scalar(&[3.0, 4.0, 9.5], 0.05).unwrap()
    }

    #[test]
    fn depth_examples() {
        let p = Formula::atom(Atom::ge(0, 2.0));
        assert_eq!(p.temporal_depth(), 0);
        let nested = Formula::globally(0, 5, Formula::eventually(0, 3, p.clone()));
        assert_eq!(nested.temporal_depth(), 8);
        let conj = Formula::and(Formula::globally(0, 10, p.clone()), Formula::globally(0, 4, p));
        assert_eq!(conj.temporal_depth(), 10);
    }

    #[test]
    fn boolean_examples() {
        let xi = d_traj();
        assert!(satisfies(&Formula::True, &xi, 2).unwrap());
        let boxed = Formula::globally(0, 2, Formula::in_box(0, 2.0, 10.0));
        assert!(satisfies(&boxed, &xi, 0).unwrap());
        let ev = Formula::eventually(0, 2, Formula::atom(Atom::ge(0, 9.0)));
        assert!(satisfies(&ev, &xi, 0).unwrap());
    }

    #[test]
    fn box_robustness_example() {
        let xi = d_traj();
        let phi = Formula::globally(0, 2, Formula::in_box(0, 2.0, 10.0));
        assert_eq!(robustness(&phi, &xi, 0).unwrap(), 0.5);
    }

    #[test]
    fn until_robustness_example() {
        let xi = Trajectory::scalar(&[1.0, 2.0, 3.0], 1.0).unwrap();
        let phi = Formula::until(
            0,
            2,
            Formula::atom(Atom::ge(0, 0.0)),
            Formula::atom(Atom::ge(0, 2.5)),
        );
        assert_eq!(robustness(&phi, &xi, 0).unwrap(), 0.5);
    }

    #[test]
    fn negation_flips_sign() {
        let xi = d_traj();
        let phi = Formula::eventually(0, 1, Formula::in_box(0, 3.5, 9.0));
        let r = robustness(&phi, &xi, 0).unwrap();
        assert_eq!(robustness(&Formula::not(phi), &xi, 0).unwrap(), -r);
    }

    #[test]
    fn windows_are_strict() {
        let xi = d_traj();
        let phi = Formula::globally(0, 3, Formula::atom(Atom::ge(0, 0.0)));
        assert!(matches!(
            robustness(&phi, &xi, 0),
            Err(StlError::WindowExceedsTrajectory { .. })
        ));
        assert!(satisfies(&phi, &xi, 0).is_err());
        let phi = Formula::globally(0, 1, Formula::atom(Atom::ge(0, 0.0)));
        assert!(robustness(&phi, &xi, 1).is_ok());
        assert!(robustness(&phi, &xi, 2).is_err());
    }

    #[test]
    fn bad_bounds_rejected() {
        let xi = d_traj();
        let phi = Formula::eventually(2, 1, Formula::True);
        assert_eq!(robustness(&phi, &xi, 0).unwrap_err(), StlError::BadBounds { a: 2, b: 1 });
        let phi = Formula::atom(Atom::ge(3, 0.0));
        assert!(matches!(
            robustness(&phi, &xi, 0),
            Err(StlError::ComponentOutOfRange { .. })
        ));
    }

    #[test]
    fn true_is_unbounded() {
        let xi = d_traj();
        assert_eq!(robustness(&Formula::True, &xi, 0).unwrap(), f64::INFINITY);
        let tape = Tape::new();
        let xs: Vec<Vec<Var>> = xi.states.iter().map(|s| tape.lift_all(s).unwrap()).collect();
        assert!(matches!(
            robustness_diff(&Formula::True, &xs, 0),
            Err(StlError::Unbounded(_))
        ));
    }

    #[test]
    fn diff_gradient_selects_minimum() {
        let tape = Tape::new();
        let xs = vec![vec![tape.lift(0.3).unwrap()], vec![tape.lift(0.8).unwrap()]];
        let phi = Formula::globally(0, 1, Formula::atom(Atom::ge(0, 0.0)));
        let r = robustness_diff(&phi, &xs, 0).unwrap();
        assert_eq!(r.value(), 0.3);
        let g = tape.backward(r);
        assert_eq!((g.wrt(xs[0][0]), g.wrt(xs[1][0])), (1.0, 0.0));
    }

    #[test]
    fn diff_gradient_tie_goes_left() {
        let tape = Tape::new();
        let xs = vec![vec![tape.lift(0.5).unwrap()], vec![tape.lift(0.5).unwrap()]];
        let phi = Formula::globally(0, 1, Formula::atom(Atom::ge(0, 0.0)));
        let r = robustness_diff(&phi, &xs, 0).unwrap();
        let g = tape.backward(r);
        assert_eq!((g.wrt(xs[0][0]), g.wrt(xs[1][0])), (1.0, 0.0));
    }

    #[test]
    fn or_matches_de_morgan() {
        let xi = Trajectory::scalar(&[0.3, -1.2, 2.0, 0.1], 1.0).unwrap();
        let p = Formula::atom(Atom::ge(0, 0.5));
        let q = Formula::eventually(1, 2, Formula::atom(Atom::le(0, -1.0)));
        let or = Formula::or(p.clone(), q.clone());
        let dm = Formula::not(Formula::and(Formula::not(p), Formula::not(q)));
        for t in 0..2 {
            assert_eq!(robustness(&or, &xi, t).unwrap(), robustness(&dm, &xi, t).unwrap());
            assert_eq!(satisfies(&or, &xi, t).unwrap(), satisfies(&dm, &xi, t).unwrap());
        }
    }

    fn two(r: (f64, f64), w: (f64, f64)) -> f64 {
        let set = RequirementSet::new(
            vec![
                Requirement {
                    name: "a".into(),
                    formula: Formula::atom(Atom::le(0, r.0)),
                    weight: w.0,
                },
                Requirement {
                    name: "b".into(),
                    formula: Formula::atom(Atom::le(0, r.1)),
                    weight: w.1,
                },
            ],
            1,
        )
        .unwrap();
        let xi = Trajectory::scalar(&[0.0], 1.0).unwrap();
        combined_robustness(&set, &xi, 0).unwrap()
    }

    #[test]
    fn combined_weighting() {
        assert!((two((1.0, -0.5), (0.4, 0.6)) - 0.1).abs() < 1e-15);
        let scaled = two((1.0, -0.5), (4.0, 6.0));
        assert!((scaled - 0.1).abs() < 1e-15);
        assert_eq!(two((1.0, -0.5), (1.0, 0.0)), 1.0);
    }

    #[test]
    fn requirement_set_validation() {
        assert_eq!(RequirementSet::new(vec![], 3).unwrap_err(), StlError::EmptyRequirements);
        let r = |w: f64| Requirement {
            name: "r".into(),
            formula: Formula::globally(0, 4, Formula::True),
            weight: w,
        };
        assert_eq!(RequirementSet::new(vec![r(0.0)], 10).unwrap_err(), StlError::BadWeights);
        assert_eq!(RequirementSet::new(vec![r(-1.0), r(2.0)], 10).unwrap_err(), StlError::BadWeights);
        assert!(matches!(
            RequirementSet::new(vec![r(1.0)], 4),
            Err(StlError::DepthExceedsWindow { .. })
        ));
        assert!(RequirementSet::new(vec![r(1.0)], 5).is_ok());
    }

    #[test]
    fn global_robustness_widens_outer_window() {
        let xi = Trajectory::scalar(&[3.0, 4.0, 9.5, 11.0, 5.0], 1.0).unwrap();
        let phi = Formula::globally(0, 1, Formula::in_box(0, 2.0, 10.0));
        assert_eq!(global_robustness(&phi, &xi.states).unwrap(), -1.0);
        let per_t: Vec<f64> = (0..4).map(|t| robustness(&phi, &xi, t).unwrap()).collect();
        let min = per_t.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(min, -1.0);
    }

    #[test]
    fn formula_json_shape() {
        let phi = Formula::globally(0, 9, Formula::in_box(1, -0.5, 0.5));
        let json = serde_json::to_string(&phi).unwrap();
        assert!(json.contains("\"kind\":\"globally\""));
        assert!(json.contains("\"direction\":\"le\""));
        let back: Formula = serde_json::from_str(&json).unwrap();
        assert_eq!(back, phi);
        let custom = r#"{"kind":"atom","terms":[[0,2.0],[1,-1.0]],"constant":0.5}"#;
        let parsed: Formula = serde_json::from_str(custom).unwrap();
        assert_eq!(parsed.temporal_depth(), 0);
        assert!(serde_json::from_str::<Formula>(r#"{"kind":"globally","a":0,"b":1,"arg":{"kind":"true"},"oops":1}"#).is_err());
    }
}
