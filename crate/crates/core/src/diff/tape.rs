//! Scalar reverse-mode tape.
//!
//! Each node records at most two parents with their local partials; the
//! backward sweep walks the tape once in reverse. Suited to small programs
//! and to certifying the fused kernels in the field, renderer and loss
//! modules, which carry their own hand-written adjoints for speed.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::DiffError;
use crate::num::Real;

#[derive(Debug, Clone, Copy)]
struct Node<T> {
    parents: [(usize, T); 2],
    arity: u8,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// A value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real> {
    tape: &'t Tape<T>,
    index: usize,
    value: T,
}

impl<T: Real> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({})", self.index, self.value)
    }
}

/// Adjoints of every tape node after a backward sweep.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    adjoints: Vec<T>,
}

impl<T: Real> Grads<T> {
    pub fn wrt(&self, v: &Var<'_, T>) -> T {
        self.adjoints[v.index]
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, parents: [(usize, T); 2], arity: u8) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, arity });
        nodes.len() - 1
    }

    pub fn var(&self, value: T) -> Var<'_, T> {
        let index = self.push([(0, T::zero()); 2], 0);
        Var {
            tape: self,
            index,
            value,
        }
    }

    pub fn constant(&self, value: T) -> Var<'_, T> {
        self.var(value)
    }

    fn unary<'t>(&'t self, a: Var<'t, T>, value: T, da: T) -> Var<'t, T> {
        let index = self.push([(a.index, da), (0, T::zero())], 1);
        Var {
            tape: self,
            index,
            value,
        }
    }

    fn binary<'t>(&'t self, a: Var<'t, T>, b: Var<'t, T>, value: T, da: T, db: T) -> Var<'t, T> {
        let index = self.push([(a.index, da), (b.index, db)], 2);
        Var {
            tape: self,
            index,
            value,
        }
    }

    /// Sum with a fixed left-to-right order.
    pub fn sum<'t>(&'t self, xs: &[Var<'t, T>]) -> Var<'t, T> {
        let mut acc = self.constant(T::zero());
        for &x in xs {
            acc = acc + x;
        }
        acc
    }

    /// Builds an operation by name. Only the supported primitive set is
    /// accepted; anything else is rejected before it reaches the tape.
    pub fn apply<'t>(&'t self, op: &str, args: &[Var<'t, T>]) -> Result<Var<'t, T>, DiffError> {
        let arity_err = || DiffError::Arity {
            op: op.to_string(),
            got: args.len(),
        };
        let one = |f: fn(Var<'t, T>) -> Var<'t, T>| args.first().copied().filter(|_| args.len() == 1).map(f).ok_or_else(arity_err);
        let two = |f: fn(Var<'t, T>, Var<'t, T>) -> Var<'t, T>| {
            if args.len() == 2 {
                Ok(f(args[0], args[1]))
            } else {
                Err(arity_err())
            }
        };
        match op {
            "add" => two(|a, b| a + b),
            "sub" => two(|a, b| a - b),
            "mul" => two(|a, b| a * b),
            "div" => two(|a, b| a / b),
            "min" => two(|a, b| a.min(b)),
            "max" => two(|a, b| a.max(b)),
            "neg" => one(|a| -a),
            "exp" => one(Var::exp),
            "ln" => one(Var::ln),
            "sqrt" => one(Var::sqrt),
            "abs" => one(Var::abs),
            "relu" => one(Var::relu),
            "sigmoid" => one(Var::sigmoid),
            "softplus" => one(Var::softplus),
            "square" => one(Var::square),
            "sin" => one(Var::sin),
            "cos" => one(Var::cos),
            "sum" => Ok(self.sum(args)),
            other => Err(DiffError::UnsupportedPrimitive(other.to_string())),
        }
    }

    /// Reverse sweep from `output`.
    pub fn backward(&self, output: &Var<'_, T>) -> Grads<T> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![T::zero(); nodes.len()];
        adj[output.index] = T::one();
        for i in (0..=output.index).rev() {
            let g = adj[i];
            if g == T::zero() {
                continue;
            }
            let node = nodes[i];
            for k in 0..node.arity as usize {
                let (p, d) = node.parents[k];
                adj[p] += g * d;
            }
        }
        Grads { adjoints: adj }
    }
}

impl<'t, T: Real> Var<'t, T> {
    #[inline]
    pub fn value(&self) -> T {
        self.value
    }

    pub fn exp(self) -> Self {
        let v = self.value.exp();
        self.tape.unary(self, v, v)
    }

    pub fn ln(self) -> Self {
        self.tape.unary(self, self.value.ln(), T::one() / self.value)
    }

    pub fn sqrt(self) -> Self {
        let v = self.value.sqrt();
        self.tape.unary(self, v, T::lit(0.5) / v)
    }

    pub fn abs(self) -> Self {
        let s = if self.value >= T::zero() { T::one() } else { -T::one() };
        self.tape.unary(self, self.value.abs(), s)
    }

    pub fn relu(self) -> Self {
        if self.value > T::zero() {
            self.tape.unary(self, self.value, T::one())
        } else {
            self.tape.unary(self, T::zero(), T::zero())
        }
    }

    pub fn sigmoid(self) -> Self {
        let s = self.value.sigmoid();
        self.tape.unary(self, s, s * (T::one() - s))
    }

    pub fn softplus(self) -> Self {
        self.tape.unary(self, self.value.softplus(), self.value.sigmoid())
    }

    pub fn square(self) -> Self {
        self.tape.unary(self, self.value * self.value, T::lit(2.0) * self.value)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.tape.unary(self, s, c)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.tape.unary(self, c, -s)
    }

    /// Ties route the gradient to `self`.
    pub fn min(self, o: Self) -> Self {
        if self.value <= o.value {
            self.tape.binary(self, o, self.value, T::one(), T::zero())
        } else {
            self.tape.binary(self, o, o.value, T::zero(), T::one())
        }
    }

    pub fn max(self, o: Self) -> Self {
        if self.value >= o.value {
            self.tape.binary(self, o, self.value, T::one(), T::zero())
        } else {
            self.tape.binary(self, o, o.value, T::zero(), T::one())
        }
    }

    pub fn scale(self, s: T) -> Self {
        self.tape.unary(self, self.value * s, s)
    }

    pub fn offset(self, c: T) -> Self {
        self.tape.unary(self, self.value + c, T::one())
    }
}

impl<'t, T: Real> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.tape.binary(self, o, self.value + o.value, T::one(), T::one())
    }
}

impl<'t, T: Real> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.tape.binary(self, o, self.value - o.value, T::one(), -T::one())
    }
}

impl<'t, T: Real> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.tape.binary(self, o, self.value * o.value, o.value, self.value)
    }
}

impl<'t, T: Real> Div for Var<'t, T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.value;
        self.tape
            .binary(self, o, self.value * inv, inv, -self.value * inv * inv)
    }
}

impl<'t, T: Real> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.tape.unary(self, -self.value, -T::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_at_three() {
        let tape = Tape::<f64>::new();
        let p = tape.var(3.0);
        let f = p * p;
        assert_eq!(tape.backward(&f).wrt(&p), 6.0);
    }

    #[test]
    fn chain_of_transcendentals() {
        let tape = Tape::<f64>::new();
        let x = tape.var(0.3);
        let y = (x.sin() * x.exp()).sigmoid().ln();
        let g = tape.backward(&y).wrt(&x);
        let f = |x: f64| (x.sin() * x.exp()).sigmoid().ln();
        let h = 1e-6;
        assert_abs_diff_eq!(g, (f(0.3 + h) - f(0.3 - h)) / (2.0 * h), epsilon = 1e-8);
    }

    #[test]
    fn named_ops_and_rejection() {
        let tape = Tape::<f64>::new();
        let a = tape.var(2.0);
        let b = tape.var(5.0);
        let m = tape.apply("mul", &[a, b]).unwrap();
        assert_eq!(m.value(), 10.0);
        assert!(matches!(tape.apply("gamma", &[a]), Err(DiffError::UnsupportedPrimitive(_))));
        assert!(matches!(tape.apply("exp", &[a, b]), Err(DiffError::Arity { .. })));
    }

    #[test]
    fn reused_variable_accumulates() {
        let tape = Tape::<f64>::new();
        let x = tape.var(2.0);
        let y = x * x + x.scale(3.0) - x / x;
        assert_abs_diff_eq!(tape.backward(&y).wrt(&x), 7.0, epsilon = 1e-15);
    }
}
