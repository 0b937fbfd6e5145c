//! A closed, decidable expression language for writing checkable pre- and
//! postconditions over the built-in value model.
//!
//! Concrete syntax is parenthesized prefix form:
//!
//! ```text
//! (and (gt (len xs) 0) (forall v xs (ge (count xs y) (count xs v))))
//! ```
//!
//! The grammar has integer and boolean literals, variable references, the
//! comparisons eq/ne/lt/le/gt/ge, the arithmetic add/sub/mul, the list
//! operations len/count/member/nth, the connectives and/or/not/implies, and a
//! bounded `(forall v xs body)` over list elements. There is no division and
//! every closed, well-typed instance evaluates in finite time.

use std::fmt;

use crate::model::Value;

/// Parse and evaluation errors, with a source position or an expression path.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MiniSpecError {
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("type error at {path}: {message}")]
    Type { path: String, message: String },
    #[error("unbound variable `{name}` at {path}")]
    UnboundVar { name: String, path: String },
}

impl MiniSpecError {
    fn parse(position: usize, message: impl Into<String>) -> Self {
        MiniSpecError::Parse {
            position,
            message: message.into(),
        }
    }
}

/// Binary comparison operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn name(&self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
        }
    }
}

/// Binary arithmetic operators; integer-valued, wrapping on overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    fn name(&self) -> &'static str {
        match self {
            ArithOp::Add => "add",
            ArithOp::Sub => "sub",
            ArithOp::Mul => "mul",
        }
    }
}

/// An expression tree.
///
/// `Lit` holds any value: the parser only produces integer and boolean
/// literals, but substitution of test values introduces text and list
/// constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Len(Box<Expr>),
    Count(Box<Expr>, Box<Expr>),
    Member(Box<Expr>, Box<Expr>),
    Nth(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Forall {
        var: String,
        list: Box<Expr>,
        body: Box<Expr>,
    },
}

impl Expr {
    /// Collects free variable names in first-occurrence order.
    pub fn free_vars(&self) -> Vec<String> {
        let mut bound = Vec::new();
        let mut free = Vec::new();
        self.collect_free(&mut bound, &mut free);
        free
    }

    fn collect_free(&self, bound: &mut Vec<String>, free: &mut Vec<String>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(name) => {
                if !bound.iter().any(|b| b == name) && !free.iter().any(|f| f == name) {
                    free.push(name.clone());
                }
            }
            Expr::Cmp(_, a, b)
            | Expr::Arith(_, a, b)
            | Expr::Count(a, b)
            | Expr::Member(a, b)
            | Expr::Nth(a, b)
            | Expr::And(a, b)
            | Expr::Or(a, b)
            | Expr::Implies(a, b) => {
                a.collect_free(bound, free);
                b.collect_free(bound, free);
            }
            Expr::Len(a) | Expr::Not(a) => a.collect_free(bound, free),
            Expr::Forall { var, list, body } => {
                list.collect_free(bound, free);
                bound.push(var.clone());
                body.collect_free(bound, free);
                bound.pop();
            }
        }
    }

    /// Replaces every free occurrence of `name` with a constant value.
    pub fn substitute(&self, name: &str, value: &Value) -> Expr {
        match self {
            Expr::Lit(v) => Expr::Lit(v.clone()),
            Expr::Var(n) => {
                if n == name {
                    Expr::Lit(value.clone())
                } else {
                    Expr::Var(n.clone())
                }
            }
            Expr::Cmp(op, a, b) => Expr::Cmp(
                *op,
                Box::new(a.substitute(name, value)),
                Box::new(b.substitute(name, value)),
            ),
            Expr::Arith(op, a, b) => Expr::Arith(
                *op,
                Box::new(a.substitute(name, value)),
                Box::new(b.substitute(name, value)),
            ),
            Expr::Len(a) => Expr::Len(Box::new(a.substitute(name, value))),
            Expr::Count(a, b) => Expr::Count(
                Box::new(a.substitute(name, value)),
                Box::new(b.substitute(name, value)),
            ),
            Expr::Member(a, b) => Expr::Member(
                Box::new(a.substitute(name, value)),
                Box::new(b.substitute(name, value)),
            ),
            Expr::Nth(a, b) => Expr::Nth(
                Box::new(a.substitute(name, value)),
                Box::new(b.substitute(name, value)),
            ),
            Expr::And(a, b) => Expr::And(
                Box::new(a.substitute(name, value)),
                Box::new(b.substitute(name, value)),
            ),
            Expr::Or(a, b) => Expr::Or(
                Box::new(a.substitute(name, value)),
                Box::new(b.substitute(name, value)),
            ),
            Expr::Not(a) => Expr::Not(Box::new(a.substitute(name, value))),
            Expr::Implies(a, b) => Expr::Implies(
                Box::new(a.substitute(name, value)),
                Box::new(b.substitute(name, value)),
            ),
            Expr::Forall { var, list, body } => {
                let list = Box::new(list.substitute(name, value));
                let body = if var == name {
                    body.clone()
                } else {
                    Box::new(body.substitute(name, value))
                };
                Expr::Forall {
                    var: var.clone(),
                    list,
                    body,
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(Value::Int(i)) => write!(f, "{i}"),
            Expr::Lit(Value::Bool(b)) => write!(f, "{b}"),
            Expr::Lit(other) => write!(f, "{other}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Cmp(op, a, b) => write!(f, "({} {a} {b})", op.name()),
            Expr::Arith(op, a, b) => write!(f, "({} {a} {b})", op.name()),
            Expr::Len(a) => write!(f, "(len {a})"),
            Expr::Count(a, b) => write!(f, "(count {a} {b})"),
            Expr::Member(a, b) => write!(f, "(member {a} {b})"),
            Expr::Nth(a, b) => write!(f, "(nth {a} {b})"),
            Expr::And(a, b) => write!(f, "(and {a} {b})"),
            Expr::Or(a, b) => write!(f, "(or {a} {b})"),
            Expr::Not(a) => write!(f, "(not {a})"),
            Expr::Implies(a, b) => write!(f, "(implies {a} {b})"),
            Expr::Forall { var, list, body } => write!(f, "(forall {var} {list} {body})"),
        }
    }
}

// ─────────────────────────── Parser ───────────────────────────

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open(usize),
    Close(usize),
    Int(usize, i64),
    Symbol(usize, String),
}

impl Token {
    fn position(&self) -> usize {
        match self {
            Token::Open(p) | Token::Close(p) | Token::Int(p, _) | Token::Symbol(p, _) => *p,
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, MiniSpecError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' {
            tokens.push(Token::Open(i));
            i += 1;
        } else if c == ')' {
            tokens.push(Token::Close(i));
            i += 1;
        } else if c.is_ascii_digit() || (c == '-' && bytes.get(i + 1).is_some_and(|b| (*b as char).is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            let lexeme = &text[start..i];
            let value = lexeme
                .parse::<i64>()
                .map_err(|_| MiniSpecError::parse(start, format!("integer `{lexeme}` out of range")))?;
            tokens.push(Token::Int(start, value));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_ascii_alphanumeric() || c == '_' {
                    i += 1;
                } else {
                    break;
                }
            }
            tokens.push(Token::Symbol(start, text[start..i].to_owned()));
        } else {
            return Err(MiniSpecError::parse(i, format!("unexpected character `{c}`")));
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<&Token, MiniSpecError> {
        let token = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| MiniSpecError::parse(self.end, "unexpected end of input"))?;
        self.pos += 1;
        Ok(token)
    }

    fn expect_close(&mut self, opened_at: usize) -> Result<(), MiniSpecError> {
        match self.next()? {
            Token::Close(_) => Ok(()),
            other => Err(MiniSpecError::parse(
                other.position(),
                format!("expected `)` for the form opened at byte {opened_at}"),
            )),
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, MiniSpecError> {
        match self.next()?.clone() {
            Token::Int(_, value) => Ok(Expr::Lit(Value::Int(value))),
            Token::Symbol(pos, name) => match name.as_str() {
                "true" => Ok(Expr::Lit(Value::Bool(true))),
                "false" => Ok(Expr::Lit(Value::Bool(false))),
                _ if is_operator(&name) => Err(MiniSpecError::parse(
                    pos,
                    format!("operator `{name}` must appear in parentheses"),
                )),
                _ => Ok(Expr::Var(name)),
            },
            Token::Close(pos) => Err(MiniSpecError::parse(pos, "unexpected `)`")),
            Token::Open(open_pos) => {
                let head = match self.next()?.clone() {
                    Token::Symbol(_, name) => name,
                    other => {
                        return Err(MiniSpecError::parse(
                            other.position(),
                            "expected an operator name after `(`",
                        ))
                    }
                };
                let expr = self.parse_form(open_pos, &head)?;
                self.expect_close(open_pos)?;
                Ok(expr)
            }
        }
    }

    fn parse_cmp(&mut self, op: CmpOp) -> Result<Expr, MiniSpecError> {
        Ok(Expr::Cmp(
            op,
            Box::new(self.parse_expr()?),
            Box::new(self.parse_expr()?),
        ))
    }

    fn parse_form(&mut self, open_pos: usize, head: &str) -> Result<Expr, MiniSpecError> {
        match head {
            "eq" => self.parse_cmp(CmpOp::Eq),
            "ne" => self.parse_cmp(CmpOp::Ne),
            "lt" => self.parse_cmp(CmpOp::Lt),
            "le" => self.parse_cmp(CmpOp::Le),
            "gt" => self.parse_cmp(CmpOp::Gt),
            "ge" => self.parse_cmp(CmpOp::Ge),
            "add" | "sub" | "mul" => {
                let op = match head {
                    "add" => ArithOp::Add,
                    "sub" => ArithOp::Sub,
                    _ => ArithOp::Mul,
                };
                Ok(Expr::Arith(
                    op,
                    Box::new(self.parse_expr()?),
                    Box::new(self.parse_expr()?),
                ))
            }
            "len" => Ok(Expr::Len(Box::new(self.parse_expr()?))),
            "count" => Ok(Expr::Count(
                Box::new(self.parse_expr()?),
                Box::new(self.parse_expr()?),
            )),
            "member" => Ok(Expr::Member(
                Box::new(self.parse_expr()?),
                Box::new(self.parse_expr()?),
            )),
            "nth" => Ok(Expr::Nth(
                Box::new(self.parse_expr()?),
                Box::new(self.parse_expr()?),
            )),
            "and" => Ok(Expr::And(
                Box::new(self.parse_expr()?),
                Box::new(self.parse_expr()?),
            )),
            "or" => Ok(Expr::Or(
                Box::new(self.parse_expr()?),
                Box::new(self.parse_expr()?),
            )),
            "not" => Ok(Expr::Not(Box::new(self.parse_expr()?))),
            "implies" => Ok(Expr::Implies(
                Box::new(self.parse_expr()?),
                Box::new(self.parse_expr()?),
            )),
            "forall" => {
                let var = match self.next()?.clone() {
                    Token::Symbol(pos, name) => {
                        if is_operator(&name) || name == "true" || name == "false" {
                            return Err(MiniSpecError::parse(
                                pos,
                                format!("`{name}` cannot be used as a binder"),
                            ));
                        }
                        name
                    }
                    other => {
                        return Err(MiniSpecError::parse(
                            other.position(),
                            "expected a binder name after `forall`",
                        ))
                    }
                };
                Ok(Expr::Forall {
                    var,
                    list: Box::new(self.parse_expr()?),
                    body: Box::new(self.parse_expr()?),
                })
            }
            other => Err(MiniSpecError::parse(
                open_pos,
                format!("unknown operator `{other}`"),
            )),
        }
    }
}

fn is_operator(name: &str) -> bool {
    matches!(
        name,
        "eq" | "ne"
            | "lt"
            | "le"
            | "gt"
            | "ge"
            | "add"
            | "sub"
            | "mul"
            | "len"
            | "count"
            | "member"
            | "nth"
            | "and"
            | "or"
            | "not"
            | "implies"
            | "forall"
    )
}

/// Parses one expression; surrounding whitespace is permitted, trailing
/// tokens are not.
pub fn parse(text: &str) -> Result<Expr, MiniSpecError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.parse_expr()?;
    if let Some(extra) = parser.peek() {
        return Err(MiniSpecError::parse(
            extra.position(),
            "trailing input after the expression",
        ));
    }
    Ok(expr)
}

// ─────────────────────────── Evaluator ───────────────────────────

fn eval_at(expr: &Expr, scope: &mut Vec<(String, Value)>, path: &str) -> Result<Value, MiniSpecError> {
    let type_err = |message: String| MiniSpecError::Type {
        path: path.to_owned(),
        message,
    };
    let sub = |segment: &str| {
        if path.is_empty() {
            segment.to_owned()
        } else {
            format!("{path}.{segment}")
        }
    };
    match expr {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Var(name) => scope
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| MiniSpecError::UnboundVar {
                name: name.clone(),
                path: path.to_owned(),
            }),
        Expr::Cmp(op, a, b) => {
            let left = eval_at(a, scope, &sub("left"))?;
            let right = eval_at(b, scope, &sub("right"))?;
            let result = match op {
                CmpOp::Eq => left == right,
                CmpOp::Ne => left != right,
                CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge => {
                    let ordering = match (&left, &right) {
                        (Value::Int(x), Value::Int(y)) => x.cmp(y),
                        (Value::Text(x), Value::Text(y)) => x.cmp(y),
                        _ => {
                            return Err(type_err(format!(
                                "`{}` needs two integers or two texts, got {left} and {right}",
                                op.name()
                            )))
                        }
                    };
                    match op {
                        CmpOp::Lt => ordering.is_lt(),
                        CmpOp::Le => ordering.is_le(),
                        CmpOp::Gt => ordering.is_gt(),
                        CmpOp::Ge => ordering.is_ge(),
                        _ => unreachable!(),
                    }
                }
            };
            Ok(Value::Bool(result))
        }
        Expr::Arith(op, a, b) => {
            let left = eval_at(a, scope, &sub("left"))?;
            let right = eval_at(b, scope, &sub("right"))?;
            let (Value::Int(x), Value::Int(y)) = (&left, &right) else {
                return Err(type_err(format!(
                    "`{}` needs two integers, got {left} and {right}",
                    op.name()
                )));
            };
            let result = match op {
                ArithOp::Add => x.wrapping_add(*y),
                ArithOp::Sub => x.wrapping_sub(*y),
                ArithOp::Mul => x.wrapping_mul(*y),
            };
            Ok(Value::Int(result))
        }
        Expr::Len(a) => {
            let value = eval_at(a, scope, &sub("arg"))?;
            let Value::List(items) = value else {
                return Err(type_err(format!("`len` needs a list, got {value}")));
            };
            Ok(Value::Int(items.len() as i64))
        }
        Expr::Count(list, needle) => {
            let list_value = eval_at(list, scope, &sub("list"))?;
            let needle = eval_at(needle, scope, &sub("value"))?;
            let Value::List(items) = list_value else {
                return Err(type_err(format!("`count` needs a list, got {list_value}")));
            };
            Ok(Value::Int(items.iter().filter(|v| **v == needle).count() as i64))
        }
        Expr::Member(needle, list) => {
            let needle = eval_at(needle, scope, &sub("value"))?;
            let list_value = eval_at(list, scope, &sub("list"))?;
            let Value::List(items) = list_value else {
                return Err(type_err(format!("`member` needs a list, got {list_value}")));
            };
            Ok(Value::Bool(items.contains(&needle)))
        }
        Expr::Nth(list, index) => {
            let list_value = eval_at(list, scope, &sub("list"))?;
            let index_value = eval_at(index, scope, &sub("index"))?;
            let Value::List(items) = list_value else {
                return Err(type_err(format!("`nth` needs a list, got {list_value}")));
            };
            let Value::Int(i) = index_value else {
                return Err(type_err(format!(
                    "`nth` needs an integer index, got {index_value}"
                )));
            };
            usize::try_from(i)
                .ok()
                .and_then(|i| items.get(i).cloned())
                .ok_or_else(|| {
                    type_err(format!(
                        "index {i} is out of range for a list of length {}",
                        items.len()
                    ))
                })
        }
        Expr::And(a, b) => {
            let left = eval_bool(a, scope, &sub("left"))?;
            let right = eval_bool(b, scope, &sub("right"))?;
            Ok(Value::Bool(left && right))
        }
        Expr::Or(a, b) => {
            let left = eval_bool(a, scope, &sub("left"))?;
            let right = eval_bool(b, scope, &sub("right"))?;
            Ok(Value::Bool(left || right))
        }
        Expr::Not(a) => {
            let inner = eval_bool(a, scope, &sub("arg"))?;
            Ok(Value::Bool(!inner))
        }
        Expr::Implies(a, b) => {
            let left = eval_bool(a, scope, &sub("left"))?;
            let right = eval_bool(b, scope, &sub("right"))?;
            Ok(Value::Bool(!left || right))
        }
        Expr::Forall { var, list, body } => {
            let list_value = eval_at(list, scope, &sub("list"))?;
            let Value::List(items) = list_value else {
                return Err(type_err(format!("`forall` needs a list, got {list_value}")));
            };
            for (i, item) in items.iter().enumerate() {
                scope.push((var.clone(), item.clone()));
                let holds = eval_bool(body, scope, &sub(&format!("body[{i}]")));
                scope.pop();
                if !holds? {
                    return Ok(Value::Bool(false));
                }
            }
            Ok(Value::Bool(true))
        }
    }
}

fn eval_bool(expr: &Expr, scope: &mut Vec<(String, Value)>, path: &str) -> Result<bool, MiniSpecError> {
    match eval_at(expr, scope, path)? {
        Value::Bool(b) => Ok(b),
        other => Err(MiniSpecError::Type {
            path: path.to_owned(),
            message: format!("expected a boolean, got {other}"),
        }),
    }
}

/// Evaluates an expression under a variable scope.
pub fn eval(expr: &Expr, scope: &[(String, Value)]) -> Result<Value, MiniSpecError> {
    let mut scope = scope.to_vec();
    eval_at(expr, &mut scope, "")
}

/// Evaluates a closed boolean expression; strict in both operands of every
/// connective, so type errors anywhere in the tree surface as errors.
pub fn mini_eval(expr: &Expr) -> Result<bool, MiniSpecError> {
    let mut scope = Vec::new();
    eval_bool(expr, &mut scope, "")
}
