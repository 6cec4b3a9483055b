//! Runtime for contract documents: matches transitions in order, evaluates
//! guards and effects against typed session state, and renders templated
//! responses. Runtime evaluation failures surface as
//! `500 {"error": "evaluation failed", "expression": ...}` so a broken
//! document is loud rather than silently wrong.

use super::expr::{parse_effect, parse_expr, ArithOp, CmpOp, Effect, Expr, ReqSource};
use super::validate::{template_fragments, validate};
use super::{ContractIR, IrError, ResponseSpec, StatusSpec, VarType};
use crate::response::MockResponse;
use crate::trace::HttpRequestRecord;
use serde_json::Value;
use std::collections::BTreeMap;

/// Runtime value of a contract variable or expression.
#[derive(Debug, Clone, PartialEq)]
pub enum IrValue {
    Num(f64),
    Str(String),
    Bool(bool),
    Map(BTreeMap<String, IrValue>),
    List(Vec<IrValue>),
    Null,
}

impl IrValue {
    fn from_json(v: &Value) -> IrValue {
        match v {
            Value::Null => IrValue::Null,
            Value::Bool(b) => IrValue::Bool(*b),
            Value::Number(n) => IrValue::Num(n.as_f64().unwrap_or(0.0)),
            Value::String(s) => IrValue::Str(s.clone()),
            Value::Array(items) => IrValue::List(items.iter().map(IrValue::from_json).collect()),
            Value::Object(map) => IrValue::Map(
                map.iter()
                    .map(|(k, v)| (k.clone(), IrValue::from_json(v)))
                    .collect(),
            ),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            IrValue::Null => Value::Null,
            IrValue::Bool(b) => Value::Bool(*b),
            IrValue::Num(n) => {
                if n.fract() == 0.0 && n.abs() < 9_007_199_254_740_992.0 {
                    Value::from(*n as i64)
                } else {
                    Value::from(*n)
                }
            }
            IrValue::Str(s) => Value::String(s.clone()),
            IrValue::List(items) => Value::Array(items.iter().map(IrValue::to_json).collect()),
            IrValue::Map(map) => Value::Object(
                map.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            ),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            IrValue::Num(_) => "number",
            IrValue::Str(_) => "string",
            IrValue::Bool(_) => "bool",
            IrValue::Map(_) => "map",
            IrValue::List(_) => "list",
            IrValue::Null => "null",
        }
    }

    /// Rendered form used when a template fragment is spliced into a
    /// larger string.
    fn render(&self) -> String {
        match self {
            IrValue::Str(s) => s.clone(),
            other => crate::json::canonical(&other.to_json()),
        }
    }

    fn matches_type(&self, ty: VarType) -> bool {
        matches!(
            (self, ty),
            (IrValue::Num(_), VarType::Int)
                | (IrValue::Num(_), VarType::Number)
                | (IrValue::Str(_), VarType::String)
                | (IrValue::Bool(_), VarType::Bool)
                | (IrValue::Map(_), VarType::Map)
        )
    }
}

/// A runtime evaluation failure, carrying the text of the expression that
/// failed so the 500 body can name it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalError {
    pub expression: String,
    pub message: String,
}

fn eval_err<T>(expr: &impl std::fmt::Display, message: impl Into<String>) -> Result<T, EvalError> {
    Err(EvalError {
        expression: expr.to_string(),
        message: message.into(),
    })
}

// ============================================================================
// Compiled form
// ============================================================================

#[derive(Debug, Clone)]
enum Seg {
    Lit(String),
    Param(String),
}

#[derive(Debug, Clone)]
enum CompiledStatus {
    Code(u16),
    Expr(Expr),
}

#[derive(Debug, Clone)]
struct CompiledResponse {
    status: CompiledStatus,
    body: Option<Value>,
    headers: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
struct CompiledTransition {
    method: String,
    segments: Vec<Seg>,
    guard: Option<Expr>,
    effects: Vec<Effect>,
    response: CompiledResponse,
}

fn compile_segments(path: &str) -> Vec<Seg> {
    path.split('/')
        .skip(1)
        .map(|seg| {
            match seg
                .strip_prefix('{')
                .and_then(|s| s.strip_suffix('}'))
            {
                Some(name) => Seg::Param(name.to_string()),
                None => Seg::Lit(seg.to_string()),
            }
        })
        .collect()
}

fn compile_response(spec: &ResponseSpec) -> Result<CompiledResponse, IrError> {
    let status = match &spec.status {
        StatusSpec::Code(c) => CompiledStatus::Code(*c),
        StatusSpec::Expr(src) => {
            CompiledStatus::Expr(parse_expr(src).map_err(|e| IrError::Parse(e.to_string()))?)
        }
    };
    Ok(CompiledResponse {
        status,
        body: spec.body.clone(),
        headers: spec.headers.clone(),
    })
}

// ============================================================================
// Session
// ============================================================================

/// An executing instance of a validated contract document.
#[derive(Debug, Clone)]
pub struct IrSession {
    doc: ContractIR,
    transitions: Vec<CompiledTransition>,
    default_response: CompiledResponse,
    declared: BTreeMap<String, VarType>,
    initials: BTreeMap<String, IrValue>,
    vars: BTreeMap<String, IrValue>,
    mint_counter: u64,
}

impl IrSession {
    /// Validates and compiles a document. Documents with diagnostics are
    /// rejected with [`IrError::Invalid`].
    pub fn new(doc: ContractIR) -> Result<IrSession, IrError> {
        let diags = validate(&doc);
        if !diags.is_empty() {
            return Err(IrError::Invalid(diags));
        }
        let transitions = doc
            .transitions
            .iter()
            .map(|t| {
                Ok(CompiledTransition {
                    method: t.matcher.method.clone(),
                    segments: compile_segments(&t.matcher.path),
                    guard: t
                        .guard
                        .as_ref()
                        .map(|g| parse_expr(g).map_err(|e| IrError::Parse(e.to_string())))
                        .transpose()?,
                    effects: t
                        .effects
                        .iter()
                        .map(|e| parse_effect(e).map_err(|e| IrError::Parse(e.to_string())))
                        .collect::<Result<Vec<_>, IrError>>()?,
                    response: compile_response(&t.response)?,
                })
            })
            .collect::<Result<Vec<_>, IrError>>()?;
        let default_response = match &doc.default_response {
            Some(spec) => compile_response(spec)?,
            None => CompiledResponse {
                status: CompiledStatus::Code(404),
                body: Some(serde_json::json!({"error": "no matching transition"})),
                headers: BTreeMap::new(),
            },
        };
        let initials: BTreeMap<String, IrValue> = doc
            .variables
            .iter()
            .map(|d| (d.name.clone(), IrValue::from_json(&d.initial)))
            .collect();
        let declared = doc
            .variables
            .iter()
            .map(|d| (d.name.clone(), d.ty))
            .collect();
        Ok(IrSession {
            vars: initials.clone(),
            initials,
            declared,
            transitions,
            default_response,
            doc,
            mint_counter: 0,
        })
    }

    pub fn document(&self) -> &ContractIR {
        &self.doc
    }

    /// Restores initial variable values and the id counter.
    pub fn reset(&mut self) {
        self.vars = self.initials.clone();
        self.mint_counter = 0;
    }

    /// Answers one request: first transition whose method, path, and guard
    /// all match fires its effects and renders its response; otherwise the
    /// default response renders. Evaluation failures return a 500 naming
    /// the failing expression.
    pub fn serve(&mut self, request: &HttpRequestRecord) -> MockResponse {
        for i in 0..self.transitions.len() {
            let t = &self.transitions[i];
            if t.method != request.method {
                continue;
            }
            let Some(bindings) = match_path(&t.segments, &request.path) else {
                continue;
            };
            if let Some(guard) = &t.guard {
                let env = EvalEnv {
                    vars: &self.vars,
                    req: request,
                    bindings: &bindings,
                };
                match eval(guard, &env, &mut self.mint_counter) {
                    Ok(IrValue::Bool(true)) => {}
                    Ok(IrValue::Bool(false)) => continue,
                    Ok(other) => {
                        return failure_response(&EvalError {
                            expression: guard.to_string(),
                            message: format!("guard produced {}, not a boolean", other.kind()),
                        })
                    }
                    Err(e) => return failure_response(&e),
                }
            }
            // The transition fires: apply effects, then render. Effects
            // already applied before a failing one stay applied.
            let t = self.transitions[i].clone();
            for effect in &t.effects {
                if let Err(e) = apply_effect(
                    effect,
                    &self.declared,
                    &mut self.vars,
                    &mut self.mint_counter,
                    request,
                    &bindings,
                ) {
                    return failure_response(&e);
                }
            }
            let env = EvalEnv {
                vars: &self.vars,
                req: request,
                bindings: &bindings,
            };
            return match render_response(&t.response, &env, &mut self.mint_counter) {
                Ok(resp) => resp,
                Err(e) => failure_response(&e),
            };
        }

        let bindings = BTreeMap::new();
        let env = EvalEnv {
            vars: &self.vars,
            req: request,
            bindings: &bindings,
        };
        let default = self.default_response.clone();
        match render_response(&default, &env, &mut self.mint_counter) {
            Ok(resp) => resp,
            Err(e) => failure_response(&e),
        }
    }
}

fn failure_response(e: &EvalError) -> MockResponse {
    MockResponse::json(
        500,
        serde_json::json!({
            "error": "evaluation failed",
            "expression": e.expression,
            "detail": e.message,
        }),
    )
}

fn match_path(segments: &[Seg], path: &str) -> Option<BTreeMap<String, String>> {
    let parts: Vec<&str> = path.split('/').skip(1).collect();
    if parts.len() != segments.len() {
        return None;
    }
    let mut bindings = BTreeMap::new();
    for (seg, part) in segments.iter().zip(parts) {
        match seg {
            Seg::Lit(lit) if lit == part => {}
            Seg::Lit(_) => return None,
            Seg::Param(_) if part.is_empty() => return None,
            Seg::Param(name) => {
                bindings.insert(name.clone(), part.to_string());
            }
        }
    }
    Some(bindings)
}

// ============================================================================
// Evaluation
// ============================================================================

struct EvalEnv<'a> {
    vars: &'a BTreeMap<String, IrValue>,
    req: &'a HttpRequestRecord,
    bindings: &'a BTreeMap<String, String>,
}

fn value_eq(a: &IrValue, b: &IrValue) -> bool {
    match (a, b) {
        (IrValue::Num(x), IrValue::Num(y)) => x == y,
        _ => a == b,
    }
}

fn eval(expr: &Expr, env: &EvalEnv<'_>, mint: &mut u64) -> Result<IrValue, EvalError> {
    match expr {
        Expr::Num(n) => Ok(IrValue::Num(*n)),
        Expr::Str(s) => Ok(IrValue::Str(s.clone())),
        Expr::Bool(b) => Ok(IrValue::Bool(*b)),
        Expr::Var(name) => match env.vars.get(name) {
            Some(v) => Ok(v.clone()),
            None => eval_err(expr, format!("unknown variable `{name}`")),
        },
        Expr::Req(source, name) => Ok(read_request(env, *source, name)),
        Expr::Cmp(op, a, b) => {
            let va = eval(a, env, mint)?;
            let vb = eval(b, env, mint)?;
            let result = match op {
                CmpOp::Eq => value_eq(&va, &vb),
                CmpOp::Ne => !value_eq(&va, &vb),
                // Ordered comparisons are defined only for numbers; any
                // other operand kind simply fails the comparison so guards
                // fail closed instead of erroring on absent fields.
                ordered => match (&va, &vb) {
                    (IrValue::Num(x), IrValue::Num(y)) => match ordered {
                        CmpOp::Lt => x < y,
                        CmpOp::Le => x <= y,
                        CmpOp::Gt => x > y,
                        CmpOp::Ge => x >= y,
                        _ => unreachable!("eq/ne handled above"),
                    },
                    _ => false,
                },
            };
            Ok(IrValue::Bool(result))
        }
        Expr::And(a, b) => {
            if !eval_bool(a, env, mint)? {
                return Ok(IrValue::Bool(false));
            }
            Ok(IrValue::Bool(eval_bool(b, env, mint)?))
        }
        Expr::Or(a, b) => {
            if eval_bool(a, env, mint)? {
                return Ok(IrValue::Bool(true));
            }
            Ok(IrValue::Bool(eval_bool(b, env, mint)?))
        }
        Expr::Not(a) => Ok(IrValue::Bool(!eval_bool(a, env, mint)?)),
        Expr::Has(map, key) => {
            let entries = map_var(env, expr, map)?;
            let key = eval_str(key, env, mint)?;
            Ok(IrValue::Bool(entries.contains_key(&key)))
        }
        Expr::Get(map, key) => {
            let entries = map_var(env, expr, map)?;
            let key = eval_str(key, env, mint)?;
            match entries.get(&key) {
                Some(v) => Ok(v.clone()),
                None => eval_err(expr, format!("map `{map}` has no key {key:?}")),
            }
        }
        Expr::Arith(op, a, b) => {
            let x = eval_num(a, env, mint)?;
            let y = eval_num(b, env, mint)?;
            let value = match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => {
                    if y == 0.0 {
                        return eval_err(expr, "division by zero");
                    }
                    x / y
                }
            };
            Ok(IrValue::Num(value))
        }
        Expr::MintId(prefix) => {
            *mint += 1;
            Ok(IrValue::Str(format!("{prefix}-{mint}")))
        }
    }
}

fn eval_bool(expr: &Expr, env: &EvalEnv<'_>, mint: &mut u64) -> Result<bool, EvalError> {
    match eval(expr, env, mint)? {
        IrValue::Bool(b) => Ok(b),
        other => eval_err(expr, format!("expected a boolean, got {}", other.kind())),
    }
}

fn eval_num(expr: &Expr, env: &EvalEnv<'_>, mint: &mut u64) -> Result<f64, EvalError> {
    match eval(expr, env, mint)? {
        IrValue::Num(n) => Ok(n),
        other => eval_err(expr, format!("expected a number, got {}", other.kind())),
    }
}

fn eval_str(expr: &Expr, env: &EvalEnv<'_>, mint: &mut u64) -> Result<String, EvalError> {
    match eval(expr, env, mint)? {
        IrValue::Str(s) => Ok(s),
        other => eval_err(expr, format!("expected a string, got {}", other.kind())),
    }
}

fn map_var<'e>(
    env: &'e EvalEnv<'_>,
    whole: &Expr,
    name: &str,
) -> Result<&'e BTreeMap<String, IrValue>, EvalError> {
    match env.vars.get(name) {
        Some(IrValue::Map(m)) => Ok(m),
        Some(other) => eval_err(whole, format!("`{name}` is {}, not a map", other.kind())),
        None => eval_err(whole, format!("unknown variable `{name}`")),
    }
}

fn read_request(env: &EvalEnv<'_>, source: ReqSource, name: &str) -> IrValue {
    match source {
        ReqSource::Body => env
            .req
            .body
            .as_ref()
            .and_then(|b| b.get(name))
            .map(IrValue::from_json)
            .unwrap_or(IrValue::Null),
        ReqSource::Query => env
            .req
            .query
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| IrValue::Str(v.clone()))
            .unwrap_or(IrValue::Null),
        ReqSource::Path => env
            .bindings
            .get(name)
            .map(|v| IrValue::Str(v.clone()))
            .unwrap_or(IrValue::Null),
        ReqSource::Header => env
            .req
            .headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| IrValue::Str(v.clone()))
            .unwrap_or(IrValue::Null),
    }
}

fn apply_effect(
    effect: &Effect,
    declared: &BTreeMap<String, VarType>,
    vars: &mut BTreeMap<String, IrValue>,
    mint: &mut u64,
    req: &HttpRequestRecord,
    bindings: &BTreeMap<String, String>,
) -> Result<(), EvalError> {
    match effect {
        Effect::Assign(var, rhs) => {
            let value = {
                let env = EvalEnv {
                    vars,
                    req,
                    bindings,
                };
                eval(rhs, &env, mint)?
            };
            let ty = declared.get(var).copied().ok_or_else(|| EvalError {
                expression: effect.to_string(),
                message: format!("unknown variable `{var}`"),
            })?;
            if !value.matches_type(ty) {
                return eval_err(
                    effect,
                    format!("assigning {} to `{var}` declared as {ty:?}", value.kind()),
                );
            }
            vars.insert(var.clone(), value);
            Ok(())
        }
        Effect::MapPut(map, key, value) => {
            let (key, value) = {
                let env = EvalEnv {
                    vars,
                    req,
                    bindings,
                };
                (eval_str(key, &env, mint)?, eval(value, &env, mint)?)
            };
            match vars.get_mut(map) {
                Some(IrValue::Map(entries)) => {
                    entries.insert(key, value);
                    Ok(())
                }
                _ => eval_err(effect, format!("`{map}` is not a map")),
            }
        }
        Effect::MapDelete(map, key) => {
            let key = {
                let env = EvalEnv {
                    vars,
                    req,
                    bindings,
                };
                eval_str(key, &env, mint)?
            };
            match vars.get_mut(map) {
                Some(IrValue::Map(entries)) => {
                    entries.remove(&key);
                    Ok(())
                }
                _ => eval_err(effect, format!("`{map}` is not a map")),
            }
        }
    }
}

// ============================================================================
// Response rendering
// ============================================================================

fn render_response(
    resp: &CompiledResponse,
    env: &EvalEnv<'_>,
    mint: &mut u64,
) -> Result<MockResponse, EvalError> {
    let status = match &resp.status {
        CompiledStatus::Code(c) => *c,
        CompiledStatus::Expr(e) => {
            let n = eval_num(e, env, mint)?;
            if n.fract() != 0.0 || !(100.0..=599.0).contains(&n) {
                return eval_err(e, format!("status expression produced {n}"));
            }
            n as u16
        }
    };
    let body = resp
        .body
        .as_ref()
        .map(|b| render_template(b, env, mint))
        .transpose()?;
    Ok(MockResponse {
        status,
        body,
        headers: resp.headers.clone(),
    })
}

fn render_template(
    template: &Value,
    env: &EvalEnv<'_>,
    mint: &mut u64,
) -> Result<Value, EvalError> {
    match template {
        Value::String(s) => {
            let frags = template_fragments(s);
            if frags.is_empty() {
                return Ok(template.clone());
            }
            // A string that is exactly one fragment injects the typed value.
            if frags.len() == 1 && s == &format!("${{{}}}", frags[0]) {
                let expr = parse_frag(frags[0])?;
                return Ok(eval(&expr, env, mint)?.to_json());
            }
            // Otherwise splice rendered fragments into the literal text.
            let mut out = String::new();
            let mut rest = s.as_str();
            while let Some(start) = rest.find("${") {
                out.push_str(&rest[..start]);
                let after = &rest[start + 2..];
                match after.find('}') {
                    Some(end) => {
                        let expr = parse_frag(&after[..end])?;
                        out.push_str(&eval(&expr, env, mint)?.render());
                        rest = &after[end + 1..];
                    }
                    None => {
                        out.push_str(&rest[start..]);
                        rest = "";
                    }
                }
            }
            out.push_str(rest);
            Ok(Value::String(out))
        }
        Value::Array(items) => Ok(Value::Array(
            items
                .iter()
                .map(|v| render_template(v, env, mint))
                .collect::<Result<Vec<_>, EvalError>>()?,
        )),
        Value::Object(map) => {
            let mut out = serde_json::Map::new();
            for (k, v) in map {
                out.insert(k.clone(), render_template(v, env, mint)?);
            }
            Ok(Value::Object(out))
        }
        other => Ok(other.clone()),
    }
}

fn parse_frag(src: &str) -> Result<Expr, EvalError> {
    parse_expr(src).map_err(|e| EvalError {
        expression: format!("${{{src}}}"),
        message: e.to_string(),
    })
}
