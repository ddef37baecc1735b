//! Minimal tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every operation on [`Var`]s as a node with at most two
//! parents. [`Tape::adjoints`] runs one reverse sweep from an arbitrary set of
//! seeded outputs, which is what lets the fitting code checkpoint a large
//! computation into a link-level tape and many small per-splat tapes.
//!
//! Constants carry no tape reference and never allocate nodes.

use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Real;

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    /// Drop all nodes, keeping the allocation. Every `Var` issued before the
    /// call becomes meaningless.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A new independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.push(Node {
            parents: [NO_PARENT, NO_PARENT],
            partials: [0.0, 0.0],
        });
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len() as u32;
        nodes.push(node);
        index
    }

    /// Reverse sweep. `seeds` give d(objective)/d(output) for any number of
    /// outputs; the returned vector holds the adjoint of every node, indexed
    /// by [`Var::index`].
    pub fn adjoints(&self, seeds: &[(Var<'_>, f64)]) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = alloc::vec![0.0; nodes.len()];
        for (v, s) in seeds {
            if let Some(i) = v.node() {
                adj[i] += *s;
            }
        }
        for i in (0..nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = &nodes[i];
            for k in 0..2 {
                let p = n.parents[k];
                if p != NO_PARENT {
                    adj[p as usize] += a * n.partials[k];
                }
            }
        }
        adj
    }

    /// Gradient of a single output with respect to `inputs`.
    pub fn gradient(&self, output: Var<'_>, inputs: &[Var<'_>]) -> Vec<f64> {
        let adj = self.adjoints(&[(output, 1.0)]);
        inputs.iter().map(|v| v.adjoint_in(&adj)).collect()
    }
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    index: u32,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({})", self.value)
    }
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Var {
            tape: None,
            index: NO_PARENT,
            value,
        }
    }

    pub fn node(&self) -> Option<usize> {
        self.tape.map(|_| self.index as usize)
    }

    /// This variable's entry in an adjoint vector from [`Tape::adjoints`].
    pub fn adjoint_in(&self, adjoints: &[f64]) -> f64 {
        match self.node() {
            Some(i) => adjoints[i],
            None => 0.0,
        }
    }

    #[inline]
    fn unary(self, value: f64, d: f64) -> Self {
        match self.tape {
            None => Var::constant(value),
            Some(t) => Var {
                tape: Some(t),
                index: t.push(Node {
                    parents: [self.index, NO_PARENT],
                    partials: [d, 0.0],
                }),
                value,
            },
        }
    }

    #[inline]
    fn binary(self, other: Self, value: f64, da: f64, db: f64) -> Self {
        match (self.tape, other.tape) {
            (None, None) => Var::constant(value),
            (Some(t), None) => Var {
                tape: Some(t),
                index: t.push(Node {
                    parents: [self.index, NO_PARENT],
                    partials: [da, 0.0],
                }),
                value,
            },
            (None, Some(t)) => Var {
                tape: Some(t),
                index: t.push(Node {
                    parents: [other.index, NO_PARENT],
                    partials: [db, 0.0],
                }),
                value,
            },
            (Some(t), Some(_)) => Var {
                tape: Some(t),
                index: t.push(Node {
                    parents: [self.index, other.index],
                    partials: [da, db],
                }),
                value,
            },
        }
    }
}

impl Add for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        self.binary(o, self.value + o.value, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.value - o.value, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.value * o.value, o.value, self.value)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.value;
        let q = self.value * inv;
        self.binary(o, q, inv, -q * inv)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        self.unary(self.value + o, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        self.unary(self.value - o, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        self.unary(self.value * o, o)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self.unary(self.value / o, 1.0 / o)
    }
}

impl Real for Var<'_> {
    fn from_f64(v: f64) -> Self {
        Var::constant(v)
    }
    #[inline]
    fn value(self) -> f64 {
        self.value
    }
    fn sqrt(self) -> Self {
        let s = libm::sqrt(self.value);
        let d = if s > 0.0 { 0.5 / s } else { 0.0 };
        self.unary(s, d)
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.value);
        self.unary(e, e)
    }
    fn sin(self) -> Self {
        self.unary(libm::sin(self.value), libm::cos(self.value))
    }
    fn cos(self) -> Self {
        self.unary(libm::cos(self.value), -libm::sin(self.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_and_chain() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        // f = x*y + exp(x/y) - sqrt(x*x)
        let f = x * y + (x / y).exp() - (x * x).sqrt();
        let g = tape.gradient(f, &[x, y]);
        let e = libm::exp(-1.5);
        assert!((g[0] - (-2.0 + e / -2.0 - 1.0)).abs() < 1e-12);
        assert!((g[1] - (3.0 + e * (-3.0 / 4.0))).abs() < 1e-12);
    }

    #[test]
    fn constants_do_not_touch_the_tape() {
        let tape = Tape::new();
        let c = Var::constant(2.0);
        let d = c * 4.0 + c.sin();
        assert!(d.node().is_none());
        assert!(tape.is_empty());
    }

    #[test]
    fn sqrt_at_zero_has_zero_slope() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let n = (x * x).sqrt();
        let g = tape.gradient(n, &[x]);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn multiple_seeds_accumulate() {
        let tape = Tape::new();
        let x = tape.var(1.5);
        let a = x * 2.0;
        let b = x * x;
        let adj = tape.adjoints(&[(a, 1.0), (b, 10.0)]);
        assert!((x.adjoint_in(&adj) - (2.0 + 30.0)).abs() < 1e-12);
    }
}
