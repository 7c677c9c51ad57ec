use std::fmt::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl UnaryOp {
    pub fn from_function_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "exp" => Self::Exp,
            "log" => Self::Log,
            "sqrt" => Self::Sqrt,
            "tanh" => Self::Tanh,
            _ => return None,
        })
    }

    pub fn function_name(self) -> Option<&'static str> {
        Some(match self {
            Self::Neg => return None,
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Log => "log",
            Self::Sqrt => "sqrt",
            Self::Tanh => "tanh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            Self::Add => '+',
            Self::Sub => '-',
            Self::Mul => '*',
            Self::Div => '/',
            Self::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            Self::Add | Self::Sub => PREC_ADD,
            Self::Mul | Self::Div => PREC_MUL,
            Self::Pow => PREC_POW,
        }
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

/// Expression tree. Variables are stored as indices into the owning
/// [`Expr`](super::Expr)'s variable list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    fn precedence(&self) -> u8 {
        match self {
            Node::Const(c) if *c < 0.0 || c.is_sign_negative() => PREC_NEG,
            Node::Const(_) | Node::Var(_) => PREC_ATOM,
            Node::Unary(UnaryOp::Neg, _) => PREC_NEG,
            Node::Unary(_, _) => PREC_ATOM,
            Node::Binary(op, _, _) => op.precedence(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Node::Const(_) => true,
            Node::Var(_) => false,
            Node::Unary(_, a) => a.is_constant(),
            Node::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    pub fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Node::Const(_) => {}
            Node::Var(i) => {
                if !out.contains(i) {
                    out.push(*i);
                }
            }
            Node::Unary(_, a) => a.collect_vars(out),
            Node::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Deterministic unparser; the output re-parses to a structurally equal tree.
    pub fn write_to(&self, vars: &[String], out: &mut String) -> fmt::Result {
        match self {
            Node::Const(c) => write!(out, "{c:?}"),
            Node::Var(i) => out.write_str(&vars[*i]),
            Node::Unary(UnaryOp::Neg, a) => {
                out.write_char('-')?;
                write_child(a, vars, out, a.precedence() < PREC_NEG)
            }
            Node::Unary(op, a) => {
                out.write_str(op.function_name().unwrap_or_default())?;
                out.write_char('(')?;
                a.write_to(vars, out)?;
                out.write_char(')')
            }
            Node::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_parens, right_parens) = if *op == BinaryOp::Pow {
                    (a.precedence() <= PREC_POW, b.precedence() < PREC_NEG)
                } else {
                    (a.precedence() < p, b.precedence() <= p)
                };
                write_child(a, vars, out, left_parens)?;
                out.write_char(op.symbol())?;
                write_child(b, vars, out, right_parens)
            }
        }
    }
}

fn write_child(node: &Node, vars: &[String], out: &mut String, parens: bool) -> fmt::Result {
    if parens {
        out.write_char('(')?;
        node.write_to(vars, out)?;
        out.write_char(')')
    } else {
        node.write_to(vars, out)
    }
}
