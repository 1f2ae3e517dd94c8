//! Vector computation graphs.
//!
//! Model code is written once against [`Graph`]. [`Eval`] computes values
//! directly (inference); [`Tape`] records the same operations and replays them
//! backwards to produce exact parameter gradients (training).

use crate::linalg::{add_into, dot, norm};
use crate::params::{ModelParams, ParamId};
use crate::scalar::Scalar;

pub trait Graph<T: Scalar> {
    type V: Clone;

    fn params(&self) -> &ModelParams<T>;
    fn value<'a>(&'a self, v: &'a Self::V) -> &'a [T];

    /// A constant (no gradient).
    fn input(&mut self, v: Vec<T>) -> Self::V;
    /// A whole parameter tensor, flattened.
    fn param(&mut self, id: ParamId) -> Self::V;
    fn param_row(&mut self, id: ParamId, row: usize) -> Self::V;
    /// `W · x` for parameter matrix `W`.
    fn matvec(&mut self, id: ParamId, x: &Self::V) -> Self::V;

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn abs(&mut self, a: &Self::V) -> Self::V;
    fn tanh(&mut self, a: &Self::V) -> Self::V;
    fn sigmoid(&mut self, a: &Self::V) -> Self::V;
    fn scale(&mut self, a: &Self::V, s: T) -> Self::V;
    fn concat(&mut self, parts: &[Self::V]) -> Self::V;
    fn slice(&mut self, a: &Self::V, start: usize, len: usize) -> Self::V;
    fn sum(&mut self, parts: &[Self::V]) -> Self::V;
    /// Length-1 cosine similarity; 0 when either side has zero norm.
    fn cosine(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    /// Length-1 `-log softmax(logits)[gold]`.
    fn nll(&mut self, logits: &Self::V, gold: usize) -> Self::V;

    fn mean(&mut self, parts: &[Self::V]) -> Self::V {
        let s = self.sum(parts);
        self.scale(&s, T::one() / T::lit(parts.len() as f64))
    }
}

pub(crate) fn cosine_value<T: Scalar>(a: &[T], b: &[T]) -> T {
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() || nb == T::zero() {
        T::zero()
    } else {
        dot(a, b) / (na * nb)
    }
}

pub(crate) fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
    logits.iter().map(|&z| z - lse).collect()
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn zip_map<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn matvec<T: Scalar>(p: &ModelParams<T>, id: ParamId, x: &[T]) -> Vec<T> {
    p.get(id)
        .matvec(x)
        .unwrap_or_else(|e| panic!("{}: {e}", id.name()))
}

/// Direct evaluation.
pub struct Eval<'a, T> {
    params: &'a ModelParams<T>,
}

impl<'a, T: Scalar> Eval<'a, T> {
    pub fn new(params: &'a ModelParams<T>) -> Self {
        Eval { params }
    }
}

impl<T: Scalar> Graph<T> for Eval<'_, T> {
    type V = Vec<T>;

    fn params(&self) -> &ModelParams<T> {
        self.params
    }

    fn value<'a>(&'a self, v: &'a Vec<T>) -> &'a [T] {
        v
    }

    fn input(&mut self, v: Vec<T>) -> Vec<T> {
        v
    }

    fn param(&mut self, id: ParamId) -> Vec<T> {
        self.params.get(id).data.clone()
    }

    fn param_row(&mut self, id: ParamId, row: usize) -> Vec<T> {
        self.params.get(id).row(row).to_vec()
    }

    fn matvec(&mut self, id: ParamId, x: &Vec<T>) -> Vec<T> {
        matvec(self.params, id, x)
    }

    fn add(&mut self, a: &Vec<T>, b: &Vec<T>) -> Vec<T> {
        zip_map(a, b, |x, y| x + y)
    }

    fn sub(&mut self, a: &Vec<T>, b: &Vec<T>) -> Vec<T> {
        zip_map(a, b, |x, y| x - y)
    }

    fn mul(&mut self, a: &Vec<T>, b: &Vec<T>) -> Vec<T> {
        zip_map(a, b, |x, y| x * y)
    }

    fn abs(&mut self, a: &Vec<T>) -> Vec<T> {
        a.iter().map(|x| x.abs()).collect()
    }

    fn tanh(&mut self, a: &Vec<T>) -> Vec<T> {
        a.iter().map(|x| x.tanh()).collect()
    }

    fn sigmoid(&mut self, a: &Vec<T>) -> Vec<T> {
        a.iter().map(|&x| sigmoid(x)).collect()
    }

    fn scale(&mut self, a: &Vec<T>, s: T) -> Vec<T> {
        a.iter().map(|&x| x * s).collect()
    }

    fn concat(&mut self, parts: &[Vec<T>]) -> Vec<T> {
        parts.concat()
    }

    fn slice(&mut self, a: &Vec<T>, start: usize, len: usize) -> Vec<T> {
        a[start..start + len].to_vec()
    }

    fn sum(&mut self, parts: &[Vec<T>]) -> Vec<T> {
        let mut acc = parts[0].clone();
        for p in &parts[1..] {
            add_into(&mut acc, p);
        }
        acc
    }

    fn cosine(&mut self, a: &Vec<T>, b: &Vec<T>) -> Vec<T> {
        vec![cosine_value(a, b)]
    }

    fn nll(&mut self, logits: &Vec<T>, gold: usize) -> Vec<T> {
        vec![-log_softmax(logits)[gold]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param(ParamId),
    ParamRow(ParamId, usize),
    MatVec(ParamId, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Abs(Var),
    Tanh(Var),
    Sigmoid(Var),
    Scale(Var, T),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Sum(Vec<Var>),
    Cosine(Var, Var),
    Nll(Var, usize),
}

struct Node<T> {
    value: Vec<T>,
    op: Op<T>,
}

/// Reverse-mode recording of a computation.
pub struct Tape<'a, T> {
    params: &'a ModelParams<T>,
    nodes: Vec<Node<T>>,
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new(params: &'a ModelParams<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    /// Gradients of the scalar `output` with respect to every parameter.
    pub fn backward(&self, output: Var) -> ModelParams<T> {
        let mut pgrad = self.params.zeros_like();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![T::one(); self.nodes[output.0].value.len()]);

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let nodes = &self.nodes;
            match &node.op {
                Op::Input => {}
                Op::Param(id) => add_into(&mut pgrad.get_mut(*id).data, &g),
                Op::ParamRow(id, row) => {
                    let t = pgrad.get_mut(*id);
                    let cols = t.cols;
                    add_into(&mut t.data[row * cols..(row + 1) * cols], &g);
                }
                Op::MatVec(id, x) => {
                    let w = self.params.get(*id);
                    let xv = self.val(*x);
                    let gw = pgrad.get_mut(*id);
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == T::zero() {
                            continue;
                        }
                        let row = &mut gw.data[r * w.cols..(r + 1) * w.cols];
                        for (d, &xj) in row.iter_mut().zip(xv) {
                            *d += gr * xj;
                        }
                    }
                    if let Some(gx) = slot(&mut grads, nodes, *x) {
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == T::zero() {
                                continue;
                            }
                            for (d, &wij) in gx.iter_mut().zip(w.row(r)) {
                                *d += gr * wij;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if let Some(gv) = slot(&mut grads, nodes, v) {
                            add_into(gv, &g);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        add_into(ga, &g);
                    }
                    if let Some(gb) = slot(&mut grads, nodes, *b) {
                        for (d, &gi) in gb.iter_mut().zip(&g) {
                            *d -= gi;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        for ((d, &gi), &y) in ga.iter_mut().zip(&g).zip(bv) {
                            *d += gi * y;
                        }
                    }
                    if let Some(gb) = slot(&mut grads, nodes, *b) {
                        for ((d, &gi), &x) in gb.iter_mut().zip(&g).zip(av) {
                            *d += gi * x;
                        }
                    }
                }
                Op::Abs(a) => {
                    let av = self.val(*a);
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        for ((d, &gi), &x) in ga.iter_mut().zip(&g).zip(av) {
                            if x > T::zero() {
                                *d += gi;
                            } else if x < T::zero() {
                                *d -= gi;
                            }
                        }
                    }
                }
                Op::Tanh(a) => {
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        for ((d, &gi), &y) in ga.iter_mut().zip(&g).zip(&node.value) {
                            *d += gi * (T::one() - y * y);
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        for ((d, &gi), &y) in ga.iter_mut().zip(&g).zip(&node.value) {
                            *d += gi * y * (T::one() - y);
                        }
                    }
                }
                Op::Scale(a, s) => {
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        for (d, &gi) in ga.iter_mut().zip(&g) {
                            *d += gi * *s;
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = nodes[p.0].value.len();
                        if let Some(gp) = slot(&mut grads, nodes, p) {
                            add_into(gp, &g[off..off + n]);
                        }
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        add_into(&mut ga[*start..*start + g.len()], &g);
                    }
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        if let Some(gp) = slot(&mut grads, nodes, p) {
                            add_into(gp, &g);
                        }
                    }
                }
                Op::Cosine(a, b) => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    let (na, nb) = (norm(av), norm(bv));
                    if na == T::zero() || nb == T::zero() {
                        continue;
                    }
                    let c = node.value[0];
                    let inv = g[0] / (na * nb);
                    let (ca, cb) = (g[0] * c / (na * na), g[0] * c / (nb * nb));
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        for ((d, &x), &y) in ga.iter_mut().zip(av).zip(bv) {
                            *d += y * inv - ca * x;
                        }
                    }
                    if let Some(gb) = slot(&mut grads, nodes, *b) {
                        for ((d, &x), &y) in gb.iter_mut().zip(av).zip(bv) {
                            *d += x * inv - cb * y;
                        }
                    }
                }
                Op::Nll(logits, gold) => {
                    let ls = log_softmax(self.val(*logits));
                    if let Some(gl) = slot(&mut grads, nodes, *logits) {
                        for (j, (d, &l)) in gl.iter_mut().zip(&ls).enumerate() {
                            let target = if j == *gold { T::one() } else { T::zero() };
                            *d += g[0] * (l.exp() - target);
                        }
                    }
                }
            }
        }
        pgrad
    }
}

/// Gradient buffer for `v`, allocated on first use; constants get none.
fn slot<'g, T: Scalar>(grads: &'g mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> Option<&'g mut [T]> {
    if matches!(nodes[v.0].op, Op::Input) {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()]))
}

impl<T: Scalar> Graph<T> for Tape<'_, T> {
    type V = Var;

    fn params(&self) -> &ModelParams<T> {
        self.params
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a [T] {
        self.val(*v)
    }

    fn input(&mut self, v: Vec<T>) -> Var {
        self.push(v, Op::Input)
    }

    fn param(&mut self, id: ParamId) -> Var {
        let v = self.params.get(id).data.clone();
        self.push(v, Op::Param(id))
    }

    fn param_row(&mut self, id: ParamId, row: usize) -> Var {
        let v = self.params.get(id).row(row).to_vec();
        self.push(v, Op::ParamRow(id, row))
    }

    fn matvec(&mut self, id: ParamId, x: &Var) -> Var {
        let v = matvec(self.params, id, self.val(*x));
        self.push(v, Op::MatVec(id, *x))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let v = zip_map(self.val(*a), self.val(*b), |x, y| x + y);
        self.push(v, Op::Add(*a, *b))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        let v = zip_map(self.val(*a), self.val(*b), |x, y| x - y);
        self.push(v, Op::Sub(*a, *b))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        let v = zip_map(self.val(*a), self.val(*b), |x, y| x * y);
        self.push(v, Op::Mul(*a, *b))
    }

    fn abs(&mut self, a: &Var) -> Var {
        let v = self.val(*a).iter().map(|x| x.abs()).collect();
        self.push(v, Op::Abs(*a))
    }

    fn tanh(&mut self, a: &Var) -> Var {
        let v = self.val(*a).iter().map(|x| x.tanh()).collect();
        self.push(v, Op::Tanh(*a))
    }

    fn sigmoid(&mut self, a: &Var) -> Var {
        let v = self.val(*a).iter().map(|&x| sigmoid(x)).collect();
        self.push(v, Op::Sigmoid(*a))
    }

    fn scale(&mut self, a: &Var, s: T) -> Var {
        let v = self.val(*a).iter().map(|&x| x * s).collect();
        self.push(v, Op::Scale(*a, s))
    }

    fn concat(&mut self, parts: &[Var]) -> Var {
        let mut v = Vec::new();
        for p in parts {
            v.extend_from_slice(self.val(*p));
        }
        self.push(v, Op::Concat(parts.to_vec()))
    }

    fn slice(&mut self, a: &Var, start: usize, len: usize) -> Var {
        let v = self.val(*a)[start..start + len].to_vec();
        self.push(v, Op::Slice(*a, start))
    }

    fn sum(&mut self, parts: &[Var]) -> Var {
        let mut v = self.val(parts[0]).to_vec();
        for p in &parts[1..] {
            add_into(&mut v, self.val(*p));
        }
        self.push(v, Op::Sum(parts.to_vec()))
    }

    fn cosine(&mut self, a: &Var, b: &Var) -> Var {
        let v = vec![cosine_value(self.val(*a), self.val(*b))];
        self.push(v, Op::Cosine(*a, *b))
    }

    fn nll(&mut self, logits: &Var, gold: usize) -> Var {
        let v = vec![-log_softmax(self.val(*logits))[gold]];
        self.push(v, Op::Nll(*logits, gold))
    }
}
