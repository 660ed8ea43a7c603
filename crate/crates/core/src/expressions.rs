//! Symbolic function mini-language used by configuration values.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          // right-associative
//! primary := number | 's' | 't' | 'pi' | func '(' sum ')' | '(' sum ')'
//! ```
//!
//! Configuration values go through a three-stage cascade in [`resolve`]:
//! a bare number becomes a literal, a parsable string becomes a symbolic
//! expression, and anything else is looked up in a [`FunctionRegistry`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    SyntaxError { position: usize, message: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("cannot resolve `{text}` as a function: {cause}")]
    UnresolvableFunction { text: String, cause: Box<ExprError> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    S,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Function {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Function::Sin,
            "cos" => Function::Cos,
            "exp" => Function::Exp,
            "sqrt" => Function::Sqrt,
            "abs" => Function::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Exp => "exp",
            Function::Sqrt => "sqrt",
            Function::Abs => "abs",
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Number(f64),
    Var(Variable),
    Pi,
    Neg(Box<Expression>),
    Binary(BinaryOp, Box<Expression>, Box<Expression>),
    Call(Function, Box<Expression>),
}

impl Expression {
    /// Evaluates the expression at `(s, t)`.
    ///
    /// Division by zero, square roots of negative numbers and any other
    /// non-finite intermediate result are reported as [`ExprError::DomainError`].
    pub fn evaluate(&self, s: f64, t: f64) -> Result<f64, ExprError> {
        let value = match self {
            Expression::Number(v) => *v,
            Expression::Var(Variable::S) => s,
            Expression::Var(Variable::T) => t,
            Expression::Pi => std::f64::consts::PI,
            Expression::Neg(inner) => -inner.evaluate(s, t)?,
            Expression::Binary(op, lhs, rhs) => {
                let a = lhs.evaluate(s, t)?;
                let b = rhs.evaluate(s, t)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(ExprError::DomainError(format!("division by zero ({a}/0)")));
                        }
                        a / b
                    }
                    BinaryOp::Pow => a.powf(b),
                }
            }
            Expression::Call(func, arg) => {
                let x = arg.evaluate(s, t)?;
                match func {
                    Function::Sin => x.sin(),
                    Function::Cos => x.cos(),
                    Function::Exp => x.exp(),
                    Function::Abs => x.abs(),
                    Function::Sqrt => {
                        if x < 0.0 {
                            return Err(ExprError::DomainError(format!("sqrt of negative value {x}")));
                        }
                        x.sqrt()
                    }
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ExprError::DomainError(format!("non-finite result in `{self}`")))
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expression::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expression::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expression::Neg(_) => 3,
            Expression::Binary(BinaryOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expression, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Number(v) => write!(f, "{v:?}"),
            Expression::Var(Variable::S) => f.write_str("s"),
            Expression::Var(Variable::T) => f.write_str("t"),
            Expression::Pi => f.write_str("pi"),
            Expression::Neg(inner) => {
                f.write_str("-")?;
                write_operand(f, inner, inner.precedence() < 3)
            }
            Expression::Call(func, arg) => write!(f, "{}({arg})", func.name()),
            Expression::Binary(op, lhs, rhs) => {
                let p = self.precedence();
                let (sym, right_assoc) = match op {
                    BinaryOp::Add => ("+", false),
                    BinaryOp::Sub => ("-", false),
                    BinaryOp::Mul => ("*", false),
                    BinaryOp::Div => ("/", false),
                    BinaryOp::Pow => ("^", true),
                };
                let lp = lhs.precedence();
                let rp = rhs.precedence();
                write_operand(f, lhs, lp < p || (right_assoc && lp == p))?;
                write!(f, " {sym} ")?;
                write_operand(f, rhs, rp < p || (!right_assoc && rp == p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lexeme = &text[start..i];
            let value = lexeme.parse::<f64>().map_err(|_| ExprError::SyntaxError {
                position: start,
                message: format!("malformed number `{lexeme}`"),
            })?;
            tokens.push((start, Token::Number(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push((start, Token::Ident(text[start..i].to_string())));
        } else {
            let token = match c {
                '+' | '-' | '*' | '/' | '^' => Token::Op(c),
                '(' => Token::LParen,
                ')' => Token::RParen,
                _ => {
                    return Err(ExprError::SyntaxError {
                        position: i,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            tokens.push((i, token));
            i += 1;
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError::SyntaxError { position: self.position(), message: message.into() }
    }

    fn sum(&mut self) -> Result<Expression, ExprError> {
        let mut lhs = self.product()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expression::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expression, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expression::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expression, ExprError> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expression::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ExprError> {
        let base = self.primary()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expression::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.peek() {
            Some(Token::RParen) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error("expected `)`")),
        }
    }

    fn primary(&mut self) -> Result<Expression, ExprError> {
        let token = match self.peek() {
            Some(t) => t.clone(),
            None => return Err(self.error("unexpected end of input")),
        };
        self.pos += 1;
        match token {
            Token::Number(v) => Ok(Expression::Number(v)),
            Token::LParen => {
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => match name.as_str() {
                "s" => Ok(Expression::Var(Variable::S)),
                "t" => Ok(Expression::Var(Variable::T)),
                "pi" => Ok(Expression::Pi),
                _ => {
                    let func = Function::from_name(&name).ok_or(ExprError::UnknownIdentifier(name))?;
                    match self.peek() {
                        Some(Token::LParen) => self.pos += 1,
                        _ => return Err(self.error(format!("expected `(` after `{}`", func.name()))),
                    }
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    Ok(Expression::Call(func, Box::new(arg)))
                }
            },
            Token::Op(c) => {
                self.pos -= 1;
                Err(self.error(format!("unexpected operator `{c}`")))
            }
            Token::RParen => {
                self.pos -= 1;
                Err(self.error("unexpected `)`"))
            }
        }
    }
}

/// Parses an expression string.
pub fn parse_expression(text: &str) -> Result<Expression, ExprError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ExprError::SyntaxError { position: 0, message: "empty expression".into() });
    }
    let mut parser = Parser { tokens, pos: 0, end: text.len() };
    let expr = parser.sum()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

pub type BuiltinFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Named functions available as the last stage of [`resolve`].
#[derive(Clone)]
pub struct FunctionRegistry {
    entries: BTreeMap<String, BuiltinFn>,
}

impl fmt::Debug for FunctionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.entries.keys()).finish()
    }
}

impl Default for FunctionRegistry {
    fn default() -> Self {
        let mut registry = FunctionRegistry { entries: BTreeMap::new() };
        registry.register("zero", |_, _| 0.0);
        registry.register("one", |_, _| 1.0);
        registry
    }
}

impl FunctionRegistry {
    pub fn register<F>(&mut self, name: &str, f: F)
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.entries.insert(name.to_string(), Arc::new(f));
    }

    pub fn get(&self, name: &str) -> Option<BuiltinFn> {
        self.entries.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// A raw configuration value before resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    Number(f64),
    Text(String),
}

impl From<f64> for ConfigValue {
    fn from(v: f64) -> Self {
        ConfigValue::Number(v)
    }
}

impl From<&str> for ConfigValue {
    fn from(v: &str) -> Self {
        ConfigValue::Text(v.to_string())
    }
}

/// A function of `(s, t)` obtained from a configuration value.
#[derive(Clone)]
pub enum ResolvedFunction {
    Literal(f64),
    Symbolic(Arc<Expression>),
    Builtin { name: String, func: BuiltinFn },
}

impl fmt::Debug for ResolvedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResolvedFunction::Literal(v) => write!(f, "Literal({v:?})"),
            ResolvedFunction::Symbolic(e) => write!(f, "Symbolic({e})"),
            ResolvedFunction::Builtin { name, .. } => write!(f, "Builtin({name})"),
        }
    }
}

impl PartialEq for ResolvedFunction {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ResolvedFunction::Literal(a), ResolvedFunction::Literal(b)) => a.to_bits() == b.to_bits(),
            (ResolvedFunction::Symbolic(a), ResolvedFunction::Symbolic(b)) => a == b,
            (ResolvedFunction::Builtin { name: a, .. }, ResolvedFunction::Builtin { name: b, .. }) => a == b,
            _ => false,
        }
    }
}

impl ResolvedFunction {
    pub fn zero() -> Self {
        ResolvedFunction::Literal(0.0)
    }

    pub fn eval(&self, s: f64, t: f64) -> Result<f64, ExprError> {
        match self {
            ResolvedFunction::Literal(c) => Ok(*c),
            ResolvedFunction::Symbolic(e) => e.evaluate(s, t),
            ResolvedFunction::Builtin { name, func } => {
                let v = func(s, t);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ExprError::DomainError(format!("builtin `{name}` returned {v}")))
                }
            }
        }
    }

    /// `true` when the function is the literal constant zero.
    pub fn is_zero_literal(&self) -> bool {
        matches!(self, ResolvedFunction::Literal(c) if *c == 0.0)
    }

    /// Text form that resolves back to an equal function.
    pub fn source(&self) -> ConfigValue {
        match self {
            ResolvedFunction::Literal(c) => ConfigValue::Number(*c),
            ResolvedFunction::Symbolic(e) => ConfigValue::Text(e.to_string()),
            ResolvedFunction::Builtin { name, .. } => ConfigValue::Text(name.clone()),
        }
    }
}

/// Resolves a configuration value: literal, then symbolic, then builtin.
pub fn resolve(value: &ConfigValue, registry: &FunctionRegistry) -> Result<ResolvedFunction, ExprError> {
    let text = match value {
        ConfigValue::Number(v) => return Ok(ResolvedFunction::Literal(*v)),
        ConfigValue::Text(text) => text.trim(),
    };
    if let Ok(v) = text.parse::<f64>() {
        if v.is_finite() {
            return Ok(ResolvedFunction::Literal(v));
        }
    }
    let parse_error = match parse_expression(text) {
        Ok(expr) => return Ok(ResolvedFunction::Symbolic(Arc::new(expr))),
        Err(e) => e,
    };
    if let Some(func) = registry.get(text) {
        return Ok(ResolvedFunction::Builtin { name: text.to_string(), func });
    }
    Err(ExprError::UnresolvableFunction { text: text.to_string(), cause: Box::new(parse_error) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn num(v: f64) -> Box<Expression> {
        Box::new(Expression::Number(v))
    }

    #[test]
    fn parses_constant_with_zero_coefficient() {
        let e = parse_expression("2.5 + 0.0*s").unwrap();
        let expected = Expression::Binary(
            BinaryOp::Add,
            num(2.5),
            Box::new(Expression::Binary(BinaryOp::Mul, num(0.0), Box::new(Expression::Var(Variable::S)))),
        );
        assert_eq!(e, expected);
        assert_eq!(e.evaluate(123.0, 0.0).unwrap(), 2.5);
    }

    #[test]
    fn parses_sine_of_scaled_coordinate() {
        let e = parse_expression("sin(2*pi*s)").unwrap();
        let inner = Expression::Binary(
            BinaryOp::Mul,
            Box::new(Expression::Binary(BinaryOp::Mul, num(2.0), Box::new(Expression::Pi))),
            Box::new(Expression::Var(Variable::S)),
        );
        assert_eq!(e, Expression::Call(Function::Sin, Box::new(inner)));
        assert!((e.evaluate(0.25, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn precedence_and_associativity() {
        let eval = |s: &str| parse_expression(s).unwrap().evaluate(0.0, 0.0).unwrap();
        assert_eq!(eval("2^3^2"), 512.0);
        assert_eq!(eval("-2^2"), -4.0);
        assert_eq!(eval("8/4/2"), 1.0);
        assert_eq!(eval("1 - 2 - 3"), -4.0);
        assert_eq!(eval("2*3+4"), 10.0);
        assert_eq!(eval("2^-1"), 0.5);
        assert_eq!(eval("1e-3*1e3"), 1.0);
    }

    #[test]
    fn malformed_input_is_a_syntax_error() {
        for bad in ["2**", "", "(1+2", "1+", "sin 2", ")", "3 4", "1 $ 2"] {
            assert!(
                matches!(parse_expression(bad), Err(ExprError::SyntaxError { .. })),
                "{bad:?} should be a syntax error"
            );
        }
        assert_eq!(parse_expression("foo(s)"), Err(ExprError::UnknownIdentifier("foo".into())));
        assert_eq!(parse_expression("x + 1"), Err(ExprError::UnknownIdentifier("x".into())));
    }

    #[test]
    fn domain_errors() {
        let e = parse_expression("1/s").unwrap();
        assert!(matches!(e.evaluate(0.0, 0.0), Err(ExprError::DomainError(_))));
        let e = parse_expression("sqrt(s - 1)").unwrap();
        assert!(matches!(e.evaluate(0.0, 0.0), Err(ExprError::DomainError(_))));
        assert_eq!(e.evaluate(5.0, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn time_variable() {
        let e = parse_expression("exp(-t) * cos(s)").unwrap();
        assert!((e.evaluate(0.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn cascade_stages() {
        let reg = FunctionRegistry::default();
        assert_eq!(resolve(&2.75.into(), &reg).unwrap(), ResolvedFunction::Literal(2.75));
        assert_eq!(resolve(&" 2.5e-3 ".into(), &reg).unwrap(), ResolvedFunction::Literal(2.5e-3));
        assert!(matches!(resolve(&"sin(2*pi*s)".into(), &reg).unwrap(), ResolvedFunction::Symbolic(_)));
        assert!(matches!(resolve(&"one".into(), &reg).unwrap(), ResolvedFunction::Builtin { .. }));
        match resolve(&"no_such_fn(".into(), &reg) {
            Err(ExprError::UnresolvableFunction { cause, .. }) => {
                assert!(matches!(*cause, ExprError::UnknownIdentifier(_)))
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut reg = reg;
        reg.register("ramp", |s, _| 2.0 * s);
        assert_eq!(resolve(&"ramp".into(), &reg).unwrap().eval(3.0, 0.0).unwrap(), 6.0);
    }

    #[test]
    fn literal_evaluates_everywhere() {
        let f = ResolvedFunction::Literal(-7.25);
        for (s, t) in [(0.0, 0.0), (1e9, -3.0), (-2.0, 1e-9)] {
            assert_eq!(f.eval(s, t).unwrap(), -7.25);
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expression> {
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Expression::Number),
            Just(Expression::Var(Variable::S)),
            Just(Expression::Var(Variable::T)),
            Just(Expression::Pi),
            Just(Expression::Number(1e-9)),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let op = prop_oneof![
                Just(BinaryOp::Add),
                Just(BinaryOp::Sub),
                Just(BinaryOp::Mul),
                Just(BinaryOp::Div),
                Just(BinaryOp::Pow),
            ];
            let func = prop_oneof![
                Just(Function::Sin),
                Just(Function::Cos),
                Just(Function::Exp),
                Just(Function::Sqrt),
                Just(Function::Abs),
            ];
            prop_oneof![
                inner.clone().prop_map(|e| Expression::Neg(Box::new(e))),
                (op, inner.clone(), inner.clone())
                    .prop_map(|(op, a, b)| Expression::Binary(op, Box::new(a), Box::new(b))),
                (func, inner).prop_map(|(f, a)| Expression::Call(f, Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = parse_expression(&printed).unwrap();
            prop_assert_eq!(reparsed, e);
        }

        #[test]
        fn numeric_strings_never_reach_the_parser(v in proptest::num::f64::NORMAL) {
            let reg = FunctionRegistry::default();
            let text = format!("{v:e}");
            prop_assert_eq!(resolve(&ConfigValue::Text(text), &reg).unwrap(), ResolvedFunction::Literal(v));
        }

        #[test]
        fn evaluation_is_bit_reproducible(e in arb_expr(), s in -10.0f64..10.0, t in 0.0f64..5.0) {
            let a = e.evaluate(s, t);
            let b = e.evaluate(s, t);
            match (a, b) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                (Err(x), Err(y)) => prop_assert_eq!(x, y),
                _ => prop_assert!(false, "evaluation outcome changed between calls"),
            }
        }
    }
}
