//! Static validation of contract documents: reference checking, type
//! checking, and version-tier enforcement.

use super::expr::{parse_effect, parse_expr, CmpOp, Effect, Expr, ReqSource};
use super::{ContractIR, IrVersion, ResponseSpec, StatusSpec, VarType};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// One validation finding. `transition` is the zero-based index of the
/// offending transition, or `None` for document-level findings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub transition: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.transition {
            Some(i) => write!(f, "transition {i}: {}", self.message),
            None => write!(f, "document: {}", self.message),
        }
    }
}

/// Inferred static type of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Num,
    Str,
    Bool,
    Map,
    /// Unknown until runtime (request accessors, map lookups).
    Any,
}

impl Ty {
    fn of(var: VarType) -> Ty {
        match var {
            VarType::Int | VarType::Number => Ty::Num,
            VarType::String => Ty::Str,
            VarType::Bool => Ty::Bool,
            VarType::Map => Ty::Map,
        }
    }

    fn accepts(self, other: Ty) -> bool {
        self == Ty::Any || other == Ty::Any || self == other
    }

    fn name(self) -> &'static str {
        match self {
            Ty::Num => "number",
            Ty::Str => "string",
            Ty::Bool => "bool",
            Ty::Map => "map",
            Ty::Any => "any",
        }
    }
}

/// Where an expression appears, which decides whether `mint_id` is legal
/// and which path parameters are in scope.
struct Scope<'a> {
    vars: &'a BTreeMap<&'a str, Ty>,
    params: &'a BTreeSet<String>,
    version: IrVersion,
    allow_mint: bool,
    diags: Vec<String>,
}

impl Scope<'_> {
    fn diag(&mut self, message: impl Into<String>) {
        self.diags.push(message.into());
    }

    fn infer(&mut self, expr: &Expr) -> Ty {
        match expr {
            Expr::Num(_) => Ty::Num,
            Expr::Str(_) => Ty::Str,
            Expr::Bool(_) => Ty::Bool,
            Expr::Var(name) => match self.vars.get(name.as_str()) {
                Some(ty) => *ty,
                None => {
                    self.diag(format!("unknown variable `{name}`"));
                    Ty::Any
                }
            },
            Expr::Req(ReqSource::Path, param) => {
                if !self.params.contains(param) {
                    self.diag(format!(
                        "path parameter `{param}` is not bound by the transition's path pattern"
                    ));
                }
                Ty::Any
            }
            Expr::Req(..) => Ty::Any,
            Expr::Cmp(op, a, b) => {
                let ta = self.infer(a);
                let tb = self.infer(b);
                if op.is_ordered() {
                    for (t, side) in [(ta, a), (tb, b)] {
                        if !Ty::Num.accepts(t) {
                            self.diag(format!(
                                "ordered comparison on non-numeric operand {side} ({})",
                                t.name()
                            ));
                        }
                    }
                } else if !ta.accepts(tb) {
                    self.diag(format!(
                        "comparing {} with {} in ({} {a} {b})",
                        ta.name(),
                        tb.name(),
                        if *op == CmpOp::Eq { "=" } else { "!=" }
                    ));
                }
                Ty::Bool
            }
            Expr::And(a, b) | Expr::Or(a, b) => {
                for side in [a, b] {
                    let t = self.infer(side);
                    if !Ty::Bool.accepts(t) {
                        self.diag(format!("boolean operator on non-boolean operand {side}"));
                    }
                }
                Ty::Bool
            }
            Expr::Not(a) => {
                let t = self.infer(a);
                if !Ty::Bool.accepts(t) {
                    self.diag(format!("not on non-boolean operand {a}"));
                }
                Ty::Bool
            }
            Expr::Has(map, key) | Expr::Get(map, key) => {
                if self.version == IrVersion::V1 {
                    self.diag("map operations require a v2 document".to_string());
                }
                match self.vars.get(map.as_str()) {
                    None => self.diag(format!("unknown variable `{map}`")),
                    Some(Ty::Map) | Some(Ty::Any) => {}
                    Some(t) => self.diag(format!("`{map}` is {}, not a map", t.name())),
                }
                let tk = self.infer(key);
                if !Ty::Str.accepts(tk) {
                    self.diag(format!("map key {key} must be a string"));
                }
                if matches!(expr, Expr::Has(..)) {
                    Ty::Bool
                } else {
                    Ty::Any
                }
            }
            Expr::Arith(_, a, b) => {
                if self.version == IrVersion::V1 {
                    self.diag("arithmetic requires a v2 document".to_string());
                }
                for side in [a, b] {
                    let t = self.infer(side);
                    if !Ty::Num.accepts(t) {
                        self.diag(format!("arithmetic on non-numeric operand {side}"));
                    }
                }
                Ty::Num
            }
            Expr::MintId(_) => {
                if self.version == IrVersion::V1 {
                    self.diag("mint_id requires a v2 document".to_string());
                }
                if !self.allow_mint {
                    self.diag("mint_id is only allowed inside effects".to_string());
                }
                Ty::Str
            }
        }
    }
}

/// Splits a path pattern into its parameter names, reporting shape issues.
fn path_params(path: &str, diags: &mut Vec<String>) -> BTreeSet<String> {
    let mut params = BTreeSet::new();
    if !path.starts_with('/') {
        diags.push(format!("path {path:?} does not start with '/'"));
        return params;
    }
    for seg in path.split('/').skip(1) {
        if let Some(name) = seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
            if name.is_empty()
                || !name
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            {
                diags.push(format!("invalid path parameter name {name:?}"));
            } else if !params.insert(name.to_string()) {
                diags.push(format!("duplicate path parameter `{name}`"));
            }
        }
    }
    params
}

/// Extracts the `${...}` fragments from a template string.
pub(crate) fn template_fragments(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(start) = rest.find("${") {
        let after = &rest[start + 2..];
        match after.find('}') {
            Some(end) => {
                out.push(&after[..end]);
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

fn check_template(value: &Value, scope: &mut Scope<'_>) {
    match value {
        Value::String(s) => {
            for frag in template_fragments(s) {
                match parse_expr(frag) {
                    Ok(e) => {
                        scope.infer(&e);
                    }
                    Err(err) => scope.diag(format!("template fragment ${{{frag}}}: {err}")),
                }
            }
        }
        Value::Array(items) => items.iter().for_each(|v| check_template(v, scope)),
        Value::Object(map) => map.values().for_each(|v| check_template(v, scope)),
        _ => {}
    }
}

fn check_response(resp: &ResponseSpec, scope: &mut Scope<'_>) {
    match &resp.status {
        StatusSpec::Code(code) => {
            if !(100..=599).contains(code) {
                scope.diag(format!("status {code} outside 100..=599"));
            }
        }
        StatusSpec::Expr(src) => match parse_expr(src) {
            Ok(e) => {
                let t = scope.infer(&e);
                if !Ty::Num.accepts(t) {
                    scope.diag(format!("status expression {e} is not numeric"));
                }
            }
            Err(err) => scope.diag(format!("status expression: {err}")),
        },
    }
    if let Some(body) = &resp.body {
        check_template(body, scope);
    }
}

fn initial_matches(ty: VarType, initial: &Value) -> bool {
    match ty {
        VarType::Int => initial.as_i64().is_some() || initial.as_u64().is_some(),
        VarType::Number => initial.is_number(),
        VarType::String => initial.is_string(),
        VarType::Bool => initial.is_boolean(),
        VarType::Map => initial.is_object(),
    }
}

/// Validates a document. An empty result means the document is ready to
/// execute; otherwise each diagnostic names the offending transition.
pub fn validate(doc: &ContractIR) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let doc_diag = |message: String| Diagnostic {
        transition: None,
        message,
    };

    let mut vars: BTreeMap<&str, Ty> = BTreeMap::new();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for decl in &doc.variables {
        if !seen.insert(decl.name.as_str()) {
            out.push(doc_diag(format!("duplicate variable `{}`", decl.name)));
            continue;
        }
        if decl.ty == VarType::Map && doc.version == IrVersion::V1 {
            out.push(doc_diag(format!(
                "map variable `{}` requires a v2 document",
                decl.name
            )));
        }
        if !initial_matches(decl.ty, &decl.initial) {
            out.push(doc_diag(format!(
                "variable `{}` initial value does not match its declared type",
                decl.name
            )));
        }
        vars.insert(decl.name.as_str(), Ty::of(decl.ty));
    }

    for (idx, t) in doc.transitions.iter().enumerate() {
        let mut diags: Vec<String> = Vec::new();
        if !crate::trace::METHODS.contains(&t.matcher.method.as_str()) {
            diags.push(format!("unknown HTTP method {:?}", t.matcher.method));
        }
        let params = path_params(&t.matcher.path, &mut diags);

        let mut scope = Scope {
            vars: &vars,
            params: &params,
            version: doc.version,
            allow_mint: false,
            diags,
        };

        if let Some(guard) = &t.guard {
            match parse_expr(guard) {
                Ok(e) => {
                    let ty = scope.infer(&e);
                    if !Ty::Bool.accepts(ty) {
                        scope.diag(format!("guard {e} is not boolean ({})", ty.name()));
                    }
                }
                Err(err) => scope.diag(format!("guard: {err}")),
            }
        }

        scope.allow_mint = true;
        for src in &t.effects {
            match parse_effect(src) {
                Ok(effect) => check_effect(&effect, &mut scope),
                Err(err) => scope.diag(format!("effect: {err}")),
            }
        }
        scope.allow_mint = false;

        check_response(&t.response, &mut scope);

        out.extend(scope.diags.into_iter().map(|message| Diagnostic {
            transition: Some(idx),
            message,
        }));
    }

    if let Some(default) = &doc.default_response {
        let params = BTreeSet::new();
        let mut scope = Scope {
            vars: &vars,
            params: &params,
            version: doc.version,
            allow_mint: false,
            diags: Vec::new(),
        };
        check_response(default, &mut scope);
        out.extend(scope.diags.into_iter().map(|message| Diagnostic {
            transition: None,
            message: format!("default response: {message}"),
        }));
    }

    out
}

fn check_effect(effect: &Effect, scope: &mut Scope<'_>) {
    match effect {
        Effect::Assign(var, rhs) => {
            let target = match scope.vars.get(var.as_str()) {
                Some(t) => *t,
                None => {
                    scope.diag(format!("unknown variable `{var}`"));
                    Ty::Any
                }
            };
            let ty = scope.infer(rhs);
            if !target.accepts(ty) {
                scope.diag(format!(
                    "assigning {} to `{var}` ({})",
                    ty.name(),
                    target.name()
                ));
            }
        }
        Effect::MapPut(map, key, value) => {
            if scope.version == IrVersion::V1 {
                scope.diag("map operations require a v2 document".to_string());
            }
            match scope.vars.get(map.as_str()) {
                None => scope.diag(format!("unknown variable `{map}`")),
                Some(Ty::Map) | Some(Ty::Any) => {}
                Some(t) => scope.diag(format!("`{map}` is {}, not a map", t.name())),
            }
            let tk = scope.infer(key);
            if !Ty::Str.accepts(tk) {
                scope.diag(format!("map key {key} must be a string"));
            }
            scope.infer(value);
        }
        Effect::MapDelete(map, key) => {
            if scope.version == IrVersion::V1 {
                scope.diag("map operations require a v2 document".to_string());
            }
            match scope.vars.get(map.as_str()) {
                None => scope.diag(format!("unknown variable `{map}`")),
                Some(Ty::Map) | Some(Ty::Any) => {}
                Some(t) => scope.diag(format!("`{map}` is {}, not a map", t.name())),
            }
            let tk = scope.infer(key);
            if !Ty::Str.accepts(tk) {
                scope.diag(format!("map key {key} must be a string"));
            }
        }
    }
}
