//! Scalar expression language shared by Lagrangians, anchors, structure
//! functions and constraints.
//!
//! Expressions are parsed against an explicit variable list and evaluated
//! either over `f64` or over [`HyperDual`] numbers, which yields exact first
//! and second partial derivatives.

mod ast;
mod hyperdual;
mod parser;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

pub use ast::{BinaryOp, Node, UnaryOp};
pub use hyperdual::HyperDual;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` takes 1 argument, got {got} (at byte {offset})")]
    Arity {
        name: String,
        got: usize,
        offset: usize,
    },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
    #[error("point has {got} entries but the expression declares {expected} variables")]
    PointLength { expected: usize, got: usize },
}

/// A parsed expression together with the variable names it was parsed against.
///
/// Immutable after construction; cloning is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Arc<Node>,
    vars: Arc<[String]>,
}

/// Value, gradient and Hessian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

impl Expr {
    pub fn parse<S: AsRef<str>>(text: &str, vars: &[S]) -> Result<Self, ExprError> {
        let vars: Vec<String> = vars.iter().map(|v| v.as_ref().to_string()).collect();
        let root = parser::parse(text, &vars)?;
        Ok(Self {
            root: Arc::new(root),
            vars: vars.into(),
        })
    }

    pub fn constant(value: f64, vars: &[String]) -> Self {
        Self {
            root: Arc::new(Node::Const(value)),
            vars: vars.into(),
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn is_constant(&self) -> bool {
        self.root.is_constant()
    }

    /// Indices of the variables that actually occur in the tree, in first-use order.
    pub fn used_vars(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.root.collect_vars(&mut out);
        out
    }

    pub fn uses_var(&self, name: &str) -> bool {
        self.used_vars().iter().any(|&i| self.vars[i] == name)
    }

    fn check_len(&self, n: usize) -> Result<(), ExprError> {
        if n != self.vars.len() {
            return Err(ExprError::PointLength {
                expected: self.vars.len(),
                got: n,
            });
        }
        Ok(())
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        self.check_len(point.len())?;
        eval_node(&self.root, point, &self.vars)
    }

    pub fn eval_hyper(&self, point: &[HyperDual]) -> Result<HyperDual, ExprError> {
        self.check_len(point.len())?;
        eval_node(&self.root, point, &self.vars)
    }

    /// Exact gradient, one hyper-dual pass per variable.
    pub fn grad(&self, point: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.check_len(point.len())?;
        let mut seeded: Vec<HyperDual> = point.iter().copied().map(HyperDual::constant).collect();
        let mut out = vec![0.0; point.len()];
        let used = self.used_vars();
        for &i in &used {
            seeded[i].d1 = 1.0;
            out[i] = eval_node(&self.root, &seeded, &self.vars)?.d1;
            seeded[i].d1 = 0.0;
        }
        if used.is_empty() {
            eval_node(&self.root, point, &self.vars)?;
        }
        Ok(out)
    }

    /// Exact symmetric Hessian; each off-diagonal entry is computed once and mirrored.
    pub fn hessian(&self, point: &[f64]) -> Result<DMatrix<f64>, ExprError> {
        Ok(self.derivatives(point)?.hessian)
    }

    /// Value, gradient and Hessian from `k(k+1)/2` seeded passes over the
    /// `k` variables that occur in the expression.
    pub fn derivatives(&self, point: &[f64]) -> Result<Derivatives, ExprError> {
        self.check_len(point.len())?;
        let n = point.len();
        let mut grad = vec![0.0; n];
        let mut hessian = DMatrix::zeros(n, n);
        let used = self.used_vars();
        let value = eval_node(&self.root, point, &self.vars)?;
        let mut seeded: Vec<HyperDual> = point.iter().copied().map(HyperDual::constant).collect();
        for (a, &i) in used.iter().enumerate() {
            for &j in &used[a..] {
                seeded[i].d1 = 1.0;
                seeded[j].d2 = 1.0;
                let r = eval_node(&self.root, &seeded, &self.vars)?;
                seeded[i].d1 = 0.0;
                seeded[j].d2 = 0.0;
                if i == j {
                    grad[i] = r.d1;
                }
                hessian[(i, j)] = r.d12;
                hessian[(j, i)] = r.d12;
            }
        }
        Ok(Derivatives {
            value,
            grad,
            hessian,
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.root.write_to(&self.vars, &mut s)?;
        f.write_str(&s)
    }
}

trait Scalar: Copy {
    fn lift(c: f64) -> Self;
    fn value(&self) -> f64;
    fn is_exact_constant(&self) -> bool;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn mul(self, o: Self) -> Self;
    fn div(self, o: Self) -> Self;
    fn neg(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn powi(self, k: i32) -> Self;
}

impl Scalar for f64 {
    fn lift(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn is_exact_constant(&self) -> bool {
        true
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn neg(self) -> Self {
        -self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn powi(self, k: i32) -> Self {
        f64::powi(self, k)
    }
}

impl Scalar for HyperDual {
    fn lift(c: f64) -> Self {
        HyperDual::constant(c)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn is_exact_constant(&self) -> bool {
        !self.has_derivatives()
    }
    fn add(self, o: Self) -> Self {
        self + o
    }
    fn sub(self, o: Self) -> Self {
        self - o
    }
    fn mul(self, o: Self) -> Self {
        self * o
    }
    fn div(self, o: Self) -> Self {
        self / o
    }
    fn neg(self) -> Self {
        -self
    }
    fn sin(self) -> Self {
        HyperDual::sin(self)
    }
    fn cos(self) -> Self {
        HyperDual::cos(self)
    }
    fn exp(self) -> Self {
        HyperDual::exp(self)
    }
    fn ln(self) -> Self {
        HyperDual::ln(self)
    }
    fn sqrt(self) -> Self {
        HyperDual::sqrt(self)
    }
    fn tanh(self) -> Self {
        HyperDual::tanh(self)
    }
    fn powi(self, k: i32) -> Self {
        HyperDual::powi(self, k)
    }
}

fn domain(node: &Node, vars: &[String], reason: &str) -> ExprError {
    let mut subexpr = String::new();
    let _ = node.write_to(vars, &mut subexpr);
    ExprError::Domain {
        subexpr,
        reason: reason.to_string(),
    }
}

fn eval_node<S: Scalar>(node: &Node, point: &[S], vars: &[String]) -> Result<S, ExprError> {
    Ok(match node {
        Node::Const(c) => S::lift(*c),
        Node::Var(i) => point[*i],
        Node::Unary(op, a) => {
            let x = eval_node(a, point, vars)?;
            match op {
                UnaryOp::Neg => x.neg(),
                UnaryOp::Sin => x.sin(),
                UnaryOp::Cos => x.cos(),
                UnaryOp::Exp => x.exp(),
                UnaryOp::Tanh => x.tanh(),
                UnaryOp::Log => {
                    if x.value() <= 0.0 {
                        return Err(domain(node, vars, "log of a nonpositive value"));
                    }
                    x.ln()
                }
                UnaryOp::Sqrt => {
                    let v = x.value();
                    if v < 0.0 || (v == 0.0 && !x.is_exact_constant()) {
                        return Err(domain(node, vars, "sqrt outside its differentiable domain"));
                    }
                    x.sqrt()
                }
            }
        }
        Node::Binary(op, a, b) => {
            let l = eval_node(a, point, vars)?;
            let r = eval_node(b, point, vars)?;
            match op {
                BinaryOp::Add => l.add(r),
                BinaryOp::Sub => l.sub(r),
                BinaryOp::Mul => l.mul(r),
                BinaryOp::Div => {
                    if r.value() == 0.0 {
                        return Err(domain(node, vars, "division by zero"));
                    }
                    l.div(r)
                }
                BinaryOp::Pow => pow(node, l, r, vars)?,
            }
        }
    })
}

fn pow<S: Scalar>(node: &Node, base: S, exponent: S, vars: &[String]) -> Result<S, ExprError> {
    let e = exponent.value();
    if exponent.is_exact_constant() && e.fract() == 0.0 && e.abs() <= f64::from(i32::MAX) {
        if e < 0.0 && base.value() == 0.0 {
            return Err(domain(node, vars, "zero raised to a negative power"));
        }
        return Ok(base.powi(e as i32));
    }
    if base.value() <= 0.0 {
        return Err(domain(
            node,
            vars,
            "non-integer or variable exponent requires a positive base",
        ));
    }
    Ok(base.ln().mul(exponent).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_and_eval_quadratic() {
        let e = Expr::parse("y1^2/2 + v1^2/2", &["y1", "v1"]).unwrap();
        assert_eq!(e.eval(&[2.0, 3.0]).unwrap(), 6.5);
    }

    #[test]
    fn annihilation_by_zero() {
        let e = Expr::parse("sin(x1)*0", &["x1"]).unwrap();
        for x in [-3.0, 0.0, 0.7, 12.0] {
            assert_eq!(e.eval(&[x]).unwrap(), 0.0);
        }
    }

    #[test]
    fn unknown_identifier_is_named() {
        let err = Expr::parse("v1 + w1", &["v1"]).unwrap_err();
        assert_eq!(
            err,
            ExprError::UnknownIdentifier {
                name: "w1".into(),
                offset: 5
            }
        );
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match Expr::parse("x1 + * 2", &["x1"]).unwrap_err() {
            ExprError::Syntax { offset, .. } => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        match Expr::parse("(x1 + 2", &["x1"]).unwrap_err() {
            ExprError::Syntax { offset, .. } => assert_eq!(offset, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Expr::parse("", &["x1"]),
            Err(ExprError::Syntax { offset: 0, .. })
        ));
        assert!(matches!(
            Expr::parse("x1 # 2", &["x1"]),
            Err(ExprError::Syntax { offset: 3, .. })
        ));
    }

    #[test]
    fn wrong_arity() {
        let err = Expr::parse("sin(x1, x1)", &["x1"]).unwrap_err();
        assert!(matches!(err, ExprError::Arity { got: 2, .. }), "{err:?}");
    }

    #[test]
    fn precedence_and_associativity() {
        let v: [&str; 0] = [];
        let cases = [
            ("-2^2", -4.0),
            ("2^3^2", 512.0),
            ("2^-1", 0.5),
            ("8/4/2", 1.0),
            ("8-4-2", 2.0),
            ("2*3+4*5", 26.0),
            ("-(2+3)*2", -10.0),
            ("2*-3", -6.0),
            ("1.5e1 + 2E-1", 15.2),
        ];
        for (text, want) in cases {
            let got = Expr::parse(text, &v).unwrap().eval(&[]).unwrap();
            assert!((got - want).abs() < 1e-14, "{text}: {got} != {want}");
        }
        let pi = Expr::parse("pi", &v).unwrap().eval(&[]).unwrap();
        assert_eq!(pi, std::f64::consts::PI);
        let e = Expr::parse("e", &v).unwrap().eval(&[]).unwrap();
        assert_eq!(e, std::f64::consts::E);
    }

    #[test]
    fn monomial_and_sine_derivatives() {
        let e = Expr::parse("v1^2/2", &["v1"]).unwrap();
        assert_eq!(e.grad(&[3.0]).unwrap(), vec![3.0]);
        let s = Expr::parse("sin(x1)", &["x1"]).unwrap();
        assert_eq!(s.grad(&[0.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn hessian_examples() {
        let e = Expr::parse("v1^2/2 + v2^2/2", &["v1", "v2"]).unwrap();
        assert_eq!(e.hessian(&[0.3, -2.0]).unwrap(), DMatrix::identity(2, 2));
        let c = Expr::parse("3", &["x1", "y1"]).unwrap();
        assert_eq!(c.hessian(&[1.0, 2.0]).unwrap(), DMatrix::zeros(2, 2));
        let m = Expr::parse("x1^2*y1", &["x1", "y1"]).unwrap();
        let h = m.hessian(&[1.0, 2.0]).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 0.0]));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let e = Expr::parse("x1*y1 + exp(x1)", &["x1", "y1"]).unwrap();
        let p = [0.3, -1.2];
        let g = e.grad(&p).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            let fd = (e.eval(&a).unwrap() - e.eval(&b).unwrap()) / (2.0 * h);
            assert!((g[i] - fd).abs() / fd.abs().max(1e-8) < 1e-6);
        }
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = Expr::parse("1 + log(x1)", &["x1"]).unwrap();
        match e.grad(&[-1.0]).unwrap_err() {
            ExprError::Domain { subexpr, .. } => assert_eq!(subexpr, "log(x1)"),
            other => panic!("unexpected {other:?}"),
        }
        let d = Expr::parse("1/(x1-1)", &["x1"]).unwrap();
        assert!(matches!(d.eval(&[1.0]), Err(ExprError::Domain { .. })));
        let p = Expr::parse("x1^0.5", &["x1"]).unwrap();
        assert!(matches!(p.eval(&[-4.0]), Err(ExprError::Domain { .. })));
        assert_eq!(
            Expr::parse("x1^2", &["x1"]).unwrap().eval(&[-3.0]).unwrap(),
            9.0
        );
    }

    #[test]
    fn variable_exponent_derivative() {
        // d/dx x^x = x^x (ln x + 1)
        let e = Expr::parse("x1^x1", &["x1"]).unwrap();
        let x: f64 = 1.3;
        let g = e.grad(&[x]).unwrap()[0];
        assert!((g - x.powf(x) * (x.ln() + 1.0)).abs() < 1e-13);
    }

    #[test]
    fn point_length_checked() {
        let e = Expr::parse("x1", &["x1"]).unwrap();
        assert!(matches!(
            e.eval(&[1.0, 2.0]),
            Err(ExprError::PointLength { .. })
        ));
    }

    #[test]
    fn printer_round_trips() {
        let vars = names(&["x1", "y1", "v1"]);
        for text in [
            "-x1^2",
            "(-x1)^2",
            "x1^y1^v1",
            "(x1^y1)^v1",
            "x1-(y1-v1)",
            "x1-y1-v1",
            "x1/(y1*v1)",
            "-(x1+y1)*sin(v1)",
            "x1^-y1",
            "x1^(-y1+1)",
            "2*-x1",
            "--x1",
            "exp(tanh(x1))/sqrt(2)",
        ] {
            let a = Expr::parse(text, &vars).unwrap();
            let printed = a.to_string();
            let b = Expr::parse(&printed, &vars).unwrap();
            assert_eq!(a, b, "{text} -> {printed}");
        }
    }
}
