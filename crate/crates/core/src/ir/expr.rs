//! S-expression guard/effect language used by contract documents.
//!
//! Expressions are written in prefix form, e.g. `(> (req body amount) 100)`
//! or `(and (= (req body version) version) (<= (req body quantity) stock))`.
//! Atoms are numbers, double-quoted strings, `true`/`false`, and variable
//! names; `(req body <key>)`, `(req query <key>)`, `(req path <param>)`, and
//! `(req header <name>)` read from the incoming request.

use std::fmt;
use thiserror::Error;

/// Where a `req` accessor reads from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReqSource {
    Body,
    Query,
    Path,
    Header,
}

impl ReqSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ReqSource::Body => "body",
            ReqSource::Query => "query",
            ReqSource::Path => "path",
            ReqSource::Header => "header",
        }
    }
}

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
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// Whether this comparison requires numeric operands.
    pub fn is_ordered(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn as_str(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// A parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Bool(bool),
    /// A declared variable.
    Var(String),
    /// `(req <source> <name>)` — a request accessor.
    Req(ReqSource, String),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    /// `(has <map-var> <key>)` — membership test on a map variable.
    Has(String, Box<Expr>),
    /// `(get <map-var> <key>)` — lookup on a map variable.
    Get(String, Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    /// `(mint_id "prefix")` — mints `prefix-<n>` from the session counter.
    MintId(String),
}

/// A parsed effect, applied when a transition fires.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    /// `(assign <var> <expr>)`
    Assign(String, Expr),
    /// `(map_put <map-var> <key> <value>)`
    MapPut(String, Expr, Expr),
    /// `(map_delete <map-var> <key>)`
    MapDelete(String, Expr),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct ExprError(pub String);

fn err<T>(message: impl Into<String>) -> Result<T, ExprError> {
    Err(ExprError(message.into()))
}

// ============================================================================
// Tokenizer and reader
// ============================================================================

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    Str(String),
    List(Vec<Sexp>),
}

fn tokenize(src: &str) -> Result<Vec<Sexp>, ExprError> {
    // A tiny recursive-descent reader over chars.
    struct Reader<'a> {
        chars: std::iter::Peekable<std::str::Chars<'a>>,
    }
    impl Reader<'_> {
        fn skip_ws(&mut self) {
            while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
                self.chars.next();
            }
        }
        fn read(&mut self) -> Result<Sexp, ExprError> {
            self.skip_ws();
            match self.chars.peek() {
                None => err("unexpected end of expression"),
                Some('(') => {
                    self.chars.next();
                    let mut items = Vec::new();
                    loop {
                        self.skip_ws();
                        match self.chars.peek() {
                            None => return err("unclosed '('"),
                            Some(')') => {
                                self.chars.next();
                                return Ok(Sexp::List(items));
                            }
                            Some(_) => items.push(self.read()?),
                        }
                    }
                }
                Some(')') => err("unexpected ')'"),
                Some('"') => {
                    self.chars.next();
                    let mut s = String::new();
                    loop {
                        match self.chars.next() {
                            None => return err("unterminated string literal"),
                            Some('"') => return Ok(Sexp::Str(s)),
                            Some('\\') => match self.chars.next() {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some(c) => return err(format!("unknown escape \\{c}")),
                                None => return err("unterminated string literal"),
                            },
                            Some(c) => s.push(c),
                        }
                    }
                }
                Some(_) => {
                    let mut atom = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                            break;
                        }
                        atom.push(c);
                        self.chars.next();
                    }
                    Ok(Sexp::Atom(atom))
                }
            }
        }
    }

    let mut reader = Reader {
        chars: src.chars().peekable(),
    };
    let mut forms = Vec::new();
    loop {
        reader.skip_ws();
        if reader.chars.peek().is_none() {
            break;
        }
        forms.push(reader.read()?);
    }
    Ok(forms)
}

fn read_one(src: &str) -> Result<Sexp, ExprError> {
    let forms = tokenize(src)?;
    match forms.len() {
        0 => err("empty expression"),
        1 => Ok(forms.into_iter().next().expect("one form")),
        n => err(format!("expected one expression, found {n}")),
    }
}

// ============================================================================
// Conversion to Expr / Effect
// ============================================================================

fn is_symbol(atom: &str) -> bool {
    let mut chars = atom.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn atom_expr(atom: &str) -> Result<Expr, ExprError> {
    if let Ok(n) = atom.parse::<f64>() {
        if n.is_finite() {
            return Ok(Expr::Num(n));
        }
    }
    match atom {
        "true" => Ok(Expr::Bool(true)),
        "false" => Ok(Expr::Bool(false)),
        _ if is_symbol(atom) => Ok(Expr::Var(atom.to_string())),
        _ => err(format!("{atom:?} is not a number, boolean, or variable name")),
    }
}

fn expect_symbol(sexp: &Sexp, what: &str) -> Result<String, ExprError> {
    match sexp {
        Sexp::Atom(a) if is_symbol(a) => Ok(a.clone()),
        _ => err(format!("expected {what}")),
    }
}

fn args(items: &[Sexp], op: &str, n: usize) -> Result<(), ExprError> {
    if items.len() - 1 == n {
        Ok(())
    } else {
        err(format!(
            "{op} takes {n} argument{}, found {}",
            if n == 1 { "" } else { "s" },
            items.len() - 1
        ))
    }
}

fn to_expr(sexp: &Sexp) -> Result<Expr, ExprError> {
    match sexp {
        Sexp::Atom(a) => atom_expr(a),
        Sexp::Str(s) => Ok(Expr::Str(s.clone())),
        Sexp::List(items) => {
            let Some(Sexp::Atom(op)) = items.first() else {
                return err("expected an operator after '('");
            };
            let rest = &items[1..];
            match op.as_str() {
                "req" => {
                    args(items, "req", 2)?;
                    let source = match &rest[0] {
                        Sexp::Atom(a) => match a.as_str() {
                            "body" => ReqSource::Body,
                            "query" => ReqSource::Query,
                            "path" => ReqSource::Path,
                            "header" => ReqSource::Header,
                            other => {
                                return err(format!(
                                    "req source must be body/query/path/header, not {other:?}"
                                ))
                            }
                        },
                        _ => return err("req source must be body/query/path/header"),
                    };
                    let name = match &rest[1] {
                        Sexp::Atom(a) => a.clone(),
                        Sexp::Str(s) => s.clone(),
                        _ => return err("req field name must be an atom"),
                    };
                    Ok(Expr::Req(source, name))
                }
                "=" | "!=" | "<" | "<=" | ">" | ">=" => {
                    args(items, op, 2)?;
                    let cmp = match op.as_str() {
                        "=" => CmpOp::Eq,
                        "!=" => CmpOp::Ne,
                        "<" => CmpOp::Lt,
                        "<=" => CmpOp::Le,
                        ">" => CmpOp::Gt,
                        _ => CmpOp::Ge,
                    };
                    Ok(Expr::Cmp(
                        cmp,
                        Box::new(to_expr(&rest[0])?),
                        Box::new(to_expr(&rest[1])?),
                    ))
                }
                "and" | "or" => {
                    if rest.len() < 2 {
                        return err(format!("{op} takes at least 2 arguments"));
                    }
                    // Fold n-ary forms into right-nested binary nodes.
                    let mut iter = rest.iter().rev();
                    let mut acc = to_expr(iter.next().expect("len >= 2"))?;
                    for item in iter {
                        let lhs = Box::new(to_expr(item)?);
                        acc = if op == "and" {
                            Expr::And(lhs, Box::new(acc))
                        } else {
                            Expr::Or(lhs, Box::new(acc))
                        };
                    }
                    Ok(acc)
                }
                "not" => {
                    args(items, "not", 1)?;
                    Ok(Expr::Not(Box::new(to_expr(&rest[0])?)))
                }
                "has" | "get" => {
                    args(items, op, 2)?;
                    let var = expect_symbol(&rest[0], "a map variable name")?;
                    let key = Box::new(to_expr(&rest[1])?);
                    Ok(if op == "has" {
                        Expr::Has(var, key)
                    } else {
                        Expr::Get(var, key)
                    })
                }
                "+" | "-" | "*" | "/" => {
                    args(items, op, 2)?;
                    let arith = match op.as_str() {
                        "+" => ArithOp::Add,
                        "-" => ArithOp::Sub,
                        "*" => ArithOp::Mul,
                        _ => ArithOp::Div,
                    };
                    Ok(Expr::Arith(
                        arith,
                        Box::new(to_expr(&rest[0])?),
                        Box::new(to_expr(&rest[1])?),
                    ))
                }
                "mint_id" => {
                    args(items, "mint_id", 1)?;
                    match &rest[0] {
                        Sexp::Str(prefix) => Ok(Expr::MintId(prefix.clone())),
                        _ => err("mint_id takes a string prefix, e.g. (mint_id \"rsv\")"),
                    }
                }
                "assign" | "map_put" | "map_delete" => {
                    err(format!("{op} is an effect, not an expression"))
                }
                other => err(format!("unknown operator {other:?}")),
            }
        }
    }
}

fn to_effect(sexp: &Sexp) -> Result<Effect, ExprError> {
    let Sexp::List(items) = sexp else {
        return err("expected an effect such as (assign var expr)");
    };
    let Some(Sexp::Atom(op)) = items.first() else {
        return err("expected an effect operator after '('");
    };
    let rest = &items[1..];
    match op.as_str() {
        "assign" => {
            args(items, "assign", 2)?;
            Ok(Effect::Assign(
                expect_symbol(&rest[0], "a variable name")?,
                to_expr(&rest[1])?,
            ))
        }
        "map_put" => {
            args(items, "map_put", 3)?;
            Ok(Effect::MapPut(
                expect_symbol(&rest[0], "a map variable name")?,
                to_expr(&rest[1])?,
                to_expr(&rest[2])?,
            ))
        }
        "map_delete" => {
            args(items, "map_delete", 2)?;
            Ok(Effect::MapDelete(
                expect_symbol(&rest[0], "a map variable name")?,
                to_expr(&rest[1])?,
            ))
        }
        other => err(format!("{other:?} is not an effect (assign/map_put/map_delete)")),
    }
}

/// Parses one expression.
pub fn parse_expr(src: &str) -> Result<Expr, ExprError> {
    to_expr(&read_one(src)?)
}

/// Parses one effect.
pub fn parse_effect(src: &str) -> Result<Effect, ExprError> {
    to_effect(&read_one(src)?)
}

// ============================================================================
// Display (used in diagnostics and runtime error bodies)
// ============================================================================

fn fmt_num(n: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        write!(f, "{}", n as i64)
    } else {
        write!(f, "{n}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(n) => fmt_num(*n, f),
            Expr::Str(s) => write!(f, "{}", serde_json::to_string(s).expect("string serializes")),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Req(src, name) => write!(f, "(req {} {name})", src.as_str()),
            Expr::Cmp(op, a, b) => write!(f, "({} {a} {b})", op.as_str()),
            Expr::And(a, b) => write!(f, "(and {a} {b})"),
            Expr::Or(a, b) => write!(f, "(or {a} {b})"),
            Expr::Not(a) => write!(f, "(not {a})"),
            Expr::Has(m, k) => write!(f, "(has {m} {k})"),
            Expr::Get(m, k) => write!(f, "(get {m} {k})"),
            Expr::Arith(op, a, b) => write!(f, "({} {a} {b})", op.as_str()),
            Expr::MintId(p) => write!(
                f,
                "(mint_id {})",
                serde_json::to_string(p).expect("string serializes")
            ),
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::Assign(v, e) => write!(f, "(assign {v} {e})"),
            Effect::MapPut(m, k, v) => write!(f, "(map_put {m} {k} {v})"),
            Effect::MapDelete(m, k) => write!(f, "(map_delete {m} {k})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_canonical_guard_example() {
        let e = parse_expr("(> (req body amount) 100)").unwrap();
        assert_eq!(
            e,
            Expr::Cmp(
                CmpOp::Gt,
                Box::new(Expr::Req(ReqSource::Body, "amount".to_string())),
                Box::new(Expr::Num(100.0)),
            )
        );
        assert_eq!(e.to_string(), "(> (req body amount) 100)");
    }

    #[test]
    fn parses_atoms() {
        assert_eq!(parse_expr("42").unwrap(), Expr::Num(42.0));
        assert_eq!(parse_expr("-3.5").unwrap(), Expr::Num(-3.5));
        assert_eq!(parse_expr("true").unwrap(), Expr::Bool(true));
        assert_eq!(parse_expr("stock").unwrap(), Expr::Var("stock".to_string()));
        assert_eq!(
            parse_expr(r#""hi \"there\"""#).unwrap(),
            Expr::Str("hi \"there\"".to_string())
        );
    }

    #[test]
    fn nary_and_folds_right() {
        let e = parse_expr("(and a b c)").unwrap();
        assert_eq!(
            e,
            Expr::And(
                Box::new(Expr::Var("a".into())),
                Box::new(Expr::And(
                    Box::new(Expr::Var("b".into())),
                    Box::new(Expr::Var("c".into())),
                )),
            )
        );
    }

    #[test]
    fn effects_parse_and_display() {
        let e = parse_effect(r#"(assign stock (- stock (req body quantity)))"#).unwrap();
        assert_eq!(e.to_string(), "(assign stock (- stock (req body quantity)))");

        let e = parse_effect(r#"(map_put reservations (mint_id "rsv") "pending")"#).unwrap();
        assert!(matches!(e, Effect::MapPut(..)));

        let e = parse_effect(r#"(map_delete reservations (req path rid))"#).unwrap();
        assert_eq!(e.to_string(), "(map_delete reservations (req path rid))");
    }

    #[test]
    fn arity_and_operator_errors() {
        assert!(parse_expr("(= 1)").unwrap_err().0.contains("2 arguments"));
        assert!(parse_expr("(frob 1 2)").unwrap_err().0.contains("unknown operator"));
        assert!(parse_expr("(assign x 1)").unwrap_err().0.contains("effect"));
        assert!(parse_effect("(= 1 2)").unwrap_err().0.contains("not an effect"));
        assert!(parse_expr("(").unwrap_err().0.contains("unclosed"));
        assert!(parse_expr("(= 1 2) (= 3 4)").unwrap_err().0.contains("one expression"));
    }

    #[test]
    fn mint_id_requires_string_prefix() {
        assert!(parse_expr("(mint_id rsv)").unwrap_err().0.contains("string prefix"));
        assert_eq!(
            parse_expr(r#"(mint_id "rsv")"#).unwrap(),
            Expr::MintId("rsv".to_string())
        );
    }

    #[test]
    fn display_round_trips_through_parser() {
        for src in [
            "(and (= (req body version) version) (<= (req body quantity) stock))",
            "(or (not ok) (has reservations (req path rid)))",
            r#"(= (get reservations (req path rid)) "pending")"#,
            "(+ (* 2 3) (/ 8 4))",
        ] {
            let parsed = parse_expr(src).unwrap();
            let reparsed = parse_expr(&parsed.to_string()).unwrap();
            assert_eq!(parsed, reparsed, "{src}");
        }
    }
}
