//! Reverse accumulation over an append-only record of scalar operations.
//!
//! The tape is rebuilt for every optimization step. Leaves are registered
//! either as parameters (their gradients are reported by [`Tape::backward`])
//! or as constants. Each recorded node stores its operand indices together
//! with the local partial derivative of the node with respect to that operand.

use std::sync::atomic::{AtomicU32, Ordering};

use super::JetError;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a scalar recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u32,
    idx: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx as usize
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    edge_start: u32,
    edge_len: u32,
}

#[derive(Debug)]
pub struct Tape {
    id: u32,
    values: Vec<f64>,
    nodes: Vec<Node>,
    edges: Vec<(u32, f64)>,
    params: Vec<u32>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::with_capacity(0)
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            values: Vec::with_capacity(nodes),
            nodes: Vec::with_capacity(nodes),
            edges: Vec::with_capacity(2 * nodes),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: f64, edges: &[(Var, f64)]) -> Var {
        let start = self.edges.len() as u32;
        for &(v, d) in edges {
            debug_assert_eq!(v.tape, self.id, "operand from another tape");
            self.edges.push((v.idx, d));
        }
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            edge_start: start,
            edge_len: edges.len() as u32,
        });
        self.values.push(value);
        Var { tape: self.id, idx }
    }

    /// Registers a differentiable leaf.
    pub fn param(&mut self, value: f64) -> Var {
        let v = self.push(value, &[]);
        self.params.push(v.idx);
        v
    }

    /// Registers a leaf that receives no gradient.
    pub fn constant(&mut self, value: f64) -> Var {
        self.push(value, &[])
    }

    /// Parameters in registration order.
    pub fn params(&self) -> impl Iterator<Item = Var> + '_ {
        self.params
            .iter()
            .map(move |&idx| Var { tape: self.id, idx })
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let val = self.value(a) + self.value(b);
        self.push(val, &[(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let val = self.value(a) - self.value(b);
        self.push(val, &[(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(x * y, &[(a, y), (b, x)])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, JetError> {
        let (x, y) = (self.value(a), self.value(b));
        if y == 0.0 {
            return Err(JetError::DivisionByZero);
        }
        Ok(self.push(x / y, &[(a, 1.0 / y), (b, -x / (y * y))]))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let val = c * self.value(a);
        self.push(val, &[(a, c)])
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let val = self.value(a) + c;
        self.push(val, &[(a, 1.0)])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(x * x, &[(a, 2.0 * x)])
    }

    /// Square root of `max(a, floor)`; the floor keeps the derivative finite.
    pub fn sqrt_floored(&mut self, a: Var, floor: f64) -> Var {
        let x = self.value(a);
        if x <= floor {
            let s = floor.sqrt();
            self.push(s, &[(a, 0.0)])
        } else {
            let s = x.sqrt();
            self.push(s, &[(a, 0.5 / s)])
        }
    }

    /// `max(0, a)`; the subgradient at zero is taken as zero.
    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        if x > 0.0 {
            self.push(x, &[(a, 1.0)])
        } else {
            self.push(0.0, &[(a, 0.0)])
        }
    }

    /// Sum of many terms as a single node.
    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let val = terms.iter().map(|&t| self.value(t)).sum();
        let edges: Vec<(Var, f64)> = terms.iter().map(|&t| (t, 1.0)).collect();
        self.push(val, &edges)
    }

    /// `c * Σ terms`.
    pub fn scaled_sum(&mut self, terms: &[Var], c: f64) -> Var {
        let val = c * terms.iter().map(|&t| self.value(t)).sum::<f64>();
        let edges: Vec<(Var, f64)> = terms.iter().map(|&t| (t, c)).collect();
        self.push(val, &edges)
    }

    /// `Σ_i coeffs[i] * terms[i]`.
    pub fn linear_combination(&mut self, terms: &[(Var, f64)]) -> Var {
        let val = terms.iter().map(|&(t, c)| c * self.value(t)).sum();
        self.push(val, terms)
    }

    /// Dot product of two 3-vectors.
    pub fn dot3(&mut self, a: &[Var; 3], b: &[Var; 3]) -> Var {
        let va = a.map(|x| self.value(x));
        let vb = b.map(|x| self.value(x));
        let val = va[0] * vb[0] + va[1] * vb[1] + va[2] * vb[2];
        self.push(
            val,
            &[
                (a[0], vb[0]),
                (a[1], vb[1]),
                (a[2], vb[2]),
                (b[0], va[0]),
                (b[1], va[1]),
                (b[2], va[2]),
            ],
        )
    }

    /// Squared distance from a 3-vector of variables to a fixed point.
    pub fn sq_dist_to(&mut self, a: &[Var; 3], q: [f64; 3]) -> Var {
        let d = [
            self.value(a[0]) - q[0],
            self.value(a[1]) - q[1],
            self.value(a[2]) - q[2],
        ];
        let val = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        self.push(
            val,
            &[(a[0], 2.0 * d[0]), (a[1], 2.0 * d[1]), (a[2], 2.0 * d[2])],
        )
    }

    fn check(&self, v: Var) -> Result<(), JetError> {
        if v.tape != self.id || v.index() >= self.nodes.len() {
            return Err(JetError::ForeignNode);
        }
        Ok(())
    }

    /// Propagates adjoints from `loss` back to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, JetError> {
        self.check(loss)?;
        let mut adjoint = vec![0.0; loss.index() + 1];
        adjoint[loss.index()] = 1.0;
        for i in (0..=loss.index()).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = self.nodes[i];
            let edges =
                &self.edges[node.edge_start as usize..(node.edge_start + node.edge_len) as usize];
            for &(j, d) in edges {
                adjoint[j as usize] += a * d;
            }
        }
        Ok(Gradients {
            tape: self.id,
            adjoint,
        })
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u32,
    adjoint: Vec<f64>,
}

impl Gradients {
    /// d loss / d v. Nodes recorded after the loss have zero gradient.
    pub fn wrt(&self, v: Var) -> f64 {
        debug_assert_eq!(v.tape, self.tape);
        self.adjoint.get(v.index()).copied().unwrap_or(0.0)
    }

    /// Gradients of every registered parameter, in registration order.
    pub fn params(&self, tape: &Tape) -> Vec<f64> {
        tape.params().map(|p| self.wrt(p)).collect()
    }
}
