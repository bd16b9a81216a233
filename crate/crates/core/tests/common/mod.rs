#![allow(dead_code)]

use rand::Rng;
use stlgame::autodiff::{Op, Tape};
use stlgame::stl::{Atom, Formula};

/// Robustness by direct recursion on the quantitative semantics. Ties keep
/// the earlier operand, so results are comparable bit for bit.
pub fn oracle_rho(phi: &Formula, xs: &[Vec<f64>], t: usize) -> f64 {
    match phi {
        Formula::True => f64::INFINITY,
        Formula::Atom(a) => atom_value(a, &xs[t]),
        Formula::Not { arg } => -oracle_rho(arg, xs, t),
        Formula::And { lhs, rhs } => lmin(oracle_rho(lhs, xs, t), oracle_rho(rhs, xs, t)),
        Formula::Or { lhs, rhs } => lmax(oracle_rho(lhs, xs, t), oracle_rho(rhs, xs, t)),
        Formula::Eventually { a, b, arg } => (t + a..=t + b)
            .map(|tp| oracle_rho(arg, xs, tp))
            .reduce(lmax)
            .unwrap(),
        Formula::Globally { a, b, arg } => (t + a..=t + b)
            .map(|tp| oracle_rho(arg, xs, tp))
            .reduce(lmin)
            .unwrap(),
        Formula::Until { a, b, lhs, rhs } => (t + a..=t + b)
            .map(|tau| {
                let hold = (t..=tau).map(|s| oracle_rho(lhs, xs, s)).reduce(lmin).unwrap();
                lmin(oracle_rho(rhs, xs, tau), hold)
            })
            .reduce(lmax)
            .unwrap(),
    }
}

/// Boolean satisfaction by direct recursion.
pub fn oracle_sat(phi: &Formula, xs: &[Vec<f64>], t: usize) -> bool {
    match phi {
        Formula::True => true,
        Formula::Atom(a) => atom_value(a, &xs[t]) > 0.0,
        Formula::Not { arg } => !oracle_sat(arg, xs, t),
        Formula::And { lhs, rhs } => oracle_sat(lhs, xs, t) && oracle_sat(rhs, xs, t),
        Formula::Or { lhs, rhs } => oracle_sat(lhs, xs, t) || oracle_sat(rhs, xs, t),
        Formula::Eventually { a, b, arg } => (t + a..=t + b).any(|tp| oracle_sat(arg, xs, tp)),
        Formula::Globally { a, b, arg } => (t + a..=t + b).all(|tp| oracle_sat(arg, xs, tp)),
        Formula::Until { a, b, lhs, rhs } => (t + a..=t + b)
            .any(|tau| oracle_sat(rhs, xs, tau) && (t..=tau).all(|s| oracle_sat(lhs, xs, s))),
    }
}

fn atom_value(a: &Atom, s: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (k, &(i, c)) in a.terms.iter().enumerate() {
        acc = if k == 0 { c * s[i] } else { acc + c * s[i] };
    }
    acc + a.constant
}

fn lmin(a: f64, b: f64) -> f64 {
    if a <= b {
        a
    } else {
        b
    }
}

fn lmax(a: f64, b: f64) -> f64 {
    if a >= b {
        a
    } else {
        b
    }
}

/// Random formula with at most `depth` nested operators and windows
/// `0 <= a <= b <= max_window`.
pub fn random_formula<R: Rng>(rng: &mut R, depth: usize, dim: usize, max_window: usize) -> Formula {
    if depth == 0 || rng.random_bool(0.2) {
        return match rng.random_range(0..10) {
            0 => Formula::True,
            1..=4 => Formula::atom(Atom::le(rng.random_range(0..dim), round(rng.random_range(-1.0..1.0)))),
            5..=8 => Formula::atom(Atom::ge(rng.random_range(0..dim), round(rng.random_range(-1.0..1.0)))),
            _ => {
                let i = rng.random_range(0..dim);
                let j = rng.random_range(0..dim);
                Formula::atom(Atom::affine(
                    vec![(i, rng.random_range(-2.0..2.0)), (j, rng.random_range(-2.0..2.0))],
                    rng.random_range(-1.0..1.0),
                ))
            }
        };
    }
    let window = |rng: &mut R| {
        let b = rng.random_range(0..=max_window);
        (rng.random_range(0..=b), b)
    };
    let sub = |rng: &mut R| random_formula(rng, depth - 1, dim, max_window);
    match rng.random_range(0..7) {
        0 => Formula::not(sub(rng)),
        1 => Formula::and(sub(rng), sub(rng)),
        2 => Formula::or(sub(rng), sub(rng)),
        3 => {
            let (a, b) = window(rng);
            Formula::eventually(a, b, sub(rng))
        }
        4 => {
            let (a, b) = window(rng);
            Formula::globally(a, b, sub(rng))
        }
        _ => {
            let (a, b) = window(rng);
            Formula::until(a, b, sub(rng), sub(rng))
        }
    }
}

/// Thresholds on a coarse grid so that exact ties actually occur.
fn round(x: f64) -> f64 {
    (x * 4.0).round() / 4.0
}

/// Random walk trajectory; every fourth draw snaps to a grid value so that
/// comparisons against grid thresholds hit exact ties.
pub fn random_trajectory<R: Rng>(rng: &mut R, len: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut s: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(s.clone());
        for x in s.iter_mut() {
            *x = if rng.random_range(0..4) == 0 {
                round(rng.random_range(-1.0..1.0))
            } else {
                (*x + rng.random_range(-0.3..0.3)).clamp(-1.5, 1.5)
            };
        }
    }
    out
}

/// Smallest distance of any recorded non-smooth operation that depends on
/// `inputs` from its switch point: operand gap for `min`/`max`, distance
/// from zero for `abs` and the leaky rectifier.
pub fn kink_margin(tape: &Tape, inputs: &[usize]) -> f64 {
    let nodes = tape.nodes();
    let mut live = vec![false; nodes.len()];
    for &i in inputs {
        live[i] = true;
    }
    let mut margin = f64::INFINITY;
    for (k, n) in nodes.iter().enumerate() {
        let arity = n.op.arity();
        let parents = &n.parents[..arity];
        if !live[k] {
            live[k] = parents.iter().any(|&p| live[p as usize]);
        }
        if !live[k] {
            continue;
        }
        let value = |i: u32| nodes[i as usize].value;
        let gap = match n.op {
            Op::Min | Op::Max => (value(n.parents[0]) - value(n.parents[1])).abs(),
            Op::Abs | Op::LeakyRelu(_) => value(n.parents[0]).abs(),
            _ => continue,
        };
        margin = margin.min(gap);
    }
    margin
}

/// Smallest operand gap over every `min`/`max` comparison made while
/// evaluating `phi` at `t` by direct recursion. Only comparisons with at
/// least one operand flagged in `live` count.
pub fn selection_margin(phi: &Formula, xs: &[Vec<f64>], live: &[Vec<bool>], t: usize) -> f64 {
    let mut margin = f64::INFINITY;
    tracked(phi, xs, live, t, &mut margin);
    margin
}

type Tracked = (f64, bool);

fn pick(a: Tracked, b: Tracked, m: &mut f64, take_min: bool) -> Tracked {
    if (a.1 || b.1) && a.0.is_finite() && b.0.is_finite() {
        *m = m.min((a.0 - b.0).abs());
    }
    let v = if take_min { lmin(a.0, b.0) } else { lmax(a.0, b.0) };
    (v, a.1 || b.1)
}

fn tracked(phi: &Formula, xs: &[Vec<f64>], live: &[Vec<bool>], t: usize, m: &mut f64) -> Tracked {
    match phi {
        Formula::True => (f64::INFINITY, false),
        Formula::Atom(a) => (atom_value(a, &xs[t]), a.terms.iter().any(|&(i, _)| live[t][i])),
        Formula::Not { arg } => {
            let (v, l) = tracked(arg, xs, live, t, m);
            (-v, l)
        }
        Formula::And { lhs, rhs } | Formula::Or { lhs, rhs } => {
            let l = tracked(lhs, xs, live, t, m);
            let r = tracked(rhs, xs, live, t, m);
            pick(l, r, m, matches!(phi, Formula::And { .. }))
        }
        Formula::Eventually { a, b, arg } | Formula::Globally { a, b, arg } => {
            let take_min = matches!(phi, Formula::Globally { .. });
            let mut acc = tracked(arg, xs, live, t + a, m);
            for tp in t + a + 1..=t + b {
                let v = tracked(arg, xs, live, tp, m);
                acc = pick(acc, v, m, take_min);
            }
            acc
        }
        Formula::Until { a, b, lhs, rhs } => {
            let mut best: Option<Tracked> = None;
            for tau in t + a..=t + b {
                let mut hold = tracked(lhs, xs, live, t, m);
                for s in t + 1..=tau {
                    let v = tracked(lhs, xs, live, s, m);
                    hold = pick(hold, v, m, true);
                }
                let r = tracked(rhs, xs, live, tau, m);
                let cand = pick(r, hold, m, true);
                best = Some(match best {
                    None => cand,
                    Some(b) => pick(b, cand, m, false),
                });
            }
            best.unwrap()
        }
    }
}

/// `||a - b|| / max(||b||, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}
