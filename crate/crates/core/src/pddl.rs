//! Typed STRIPS PDDL emission and parsing. Names are escaped reversibly and
//! the information PDDL has no slot for (predicate kind, linked skill,
//! support) travels in structured comments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::atoms::{FeatureClassifier, GroundAtom, LiftedAtom, Pred, Predicate, PredicateKind};
use crate::operator::Operator;
use crate::types::{Obj, ObjectType, Skill, TypeHierarchy, Variable, ROOT_TYPE};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("PDDL syntax error at {line}:{column}: {message}")]
pub struct PddlSyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// `[A-Za-z0-9-]` pass through, `_` doubles, anything else becomes `_XX`.
pub fn escape_name(name: &str) -> String {
    let mut out = String::new();
    for b in name.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' => out.push(b as char),
            b'_' => out.push_str("__"),
            _ => write!(out, "_{b:02X}").unwrap(),
        }
    }
    out
}

pub fn unescape_name(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'_' {
            if bytes.get(i + 1) == Some(&b'_') {
                out.push(b'_');
                i += 2;
            } else {
                let hex = s.get(i + 1..i + 3)?;
                out.push(u8::from_str_radix(hex, 16).ok()?);
                i += 3;
            }
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub name: String,
    pub types: TypeHierarchy,
    pub predicates: Vec<Pred>,
    pub operators: Vec<Operator>,
}

fn kind_comment(k: &PredicateKind) -> &'static str {
    match k {
        PredicateKind::Visual => "visual",
        PredicateKind::Feature { .. } => "feature",
        PredicateKind::Provided => "provided",
    }
}

/// PDDL symbol for each predicate; names shared by several signatures carry
/// their argument types.
fn predicate_symbols(preds: &[Pred]) -> BTreeMap<(String, Vec<String>), String> {
    let mut count: BTreeMap<&str, usize> = BTreeMap::new();
    for p in preds {
        *count.entry(&p.name).or_default() += 1;
    }
    preds
        .iter()
        .map(|p| {
            let raw = if count[p.name.as_str()] > 1 {
                format!("{}#{}", p.name, p.arg_types.join(","))
            } else {
                p.name.clone()
            };
            ((p.name.clone(), p.arg_types.clone()), escape_name(&raw))
        })
        .collect()
}

fn collect_predicates(domain: &Domain) -> Vec<Pred> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let atoms = domain.operators.iter().flat_map(|o| {
        o.preconditions.iter().chain(&o.add_effects).chain(&o.delete_effects)
    });
    for p in domain.predicates.iter().cloned().chain(atoms.map(|a| a.predicate.clone())) {
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    out
}

fn var_list(vars: &[Variable]) -> String {
    vars.iter()
        .map(|v| format!("{} - {}", escape_var(&v.name), escape_name(&v.ty)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn escape_var(name: &str) -> String {
    format!("?{}", escape_name(name.trim_start_matches('?')))
}

pub fn emit_domain(domain: &Domain) -> String {
    let preds = collect_predicates(domain);
    let sym = predicate_symbols(&preds);
    let atom = |a: &LiftedAtom| -> String {
        let mut s = format!("({}", sym[&(a.predicate.name.clone(), a.predicate.arg_types.clone())]);
        for v in &a.args {
            s.push(' ');
            s.push_str(&escape_var(&v.name));
        }
        s.push(')');
        s
    };
    let mut out = String::new();
    writeln!(out, "(define (domain {})", escape_name(&domain.name)).unwrap();
    out.push_str("  (:requirements :strips :typing)\n");
    out.push_str("  (:types");
    for t in domain.types.types() {
        if t.name == ROOT_TYPE {
            continue;
        }
        write!(out, " {} - {}", escape_name(&t.name), escape_name(t.parent.as_deref().unwrap_or(ROOT_TYPE))).unwrap();
    }
    out.push_str(")\n  (:predicates\n");
    for p in &preds {
        let vars = crate::atoms::signature_variables(&p.arg_types);
        let args = if vars.is_empty() { String::new() } else { format!(" {}", var_list(&vars)) };
        writeln!(out, "    ({}{}) ; {}", sym[&(p.name.clone(), p.arg_types.clone())], args, kind_comment(&p.kind)).unwrap();
    }
    out.push_str("  )\n");
    for op in &domain.operators {
        writeln!(out, "  (:action {}", escape_name(&op.name)).unwrap();
        write!(out, "    ; skill {} {}", escape_name(&op.skill.name), op.skill.continuous_dim).unwrap();
        for v in &op.skill.params {
            write!(out, " {}", var_list(std::slice::from_ref(v))).unwrap();
        }
        out.push_str(" :args");
        for v in &op.skill_args {
            write!(out, " {}", escape_var(&v.name)).unwrap();
        }
        writeln!(out, "\n    ; support {}", op.support_count).unwrap();
        writeln!(out, "    :parameters ({})", var_list(&op.params)).unwrap();
        let conj = |atoms: &[String]| -> String {
            match atoms.len() {
                0 => "()".into(),
                _ => format!("(and {})", atoms.join(" ")),
            }
        };
        let pre: Vec<String> = op.preconditions.iter().map(atom).collect();
        let mut eff: Vec<String> = op.add_effects.iter().map(atom).collect();
        eff.extend(op.delete_effects.iter().map(|a| format!("(not {})", atom(a))));
        writeln!(out, "    :precondition {}", conj(&pre)).unwrap();
        writeln!(out, "    :effect {})", conj(&eff)).unwrap();
    }
    out.push_str(")\n");
    out
}

pub fn emit_problem(
    name: &str,
    domain: &str,
    objects: &[Obj],
    init: &BTreeSet<GroundAtom>,
    goal: &BTreeSet<GroundAtom>,
) -> String {
    let preds: Vec<Pred> = {
        let mut seen = BTreeSet::new();
        init.iter()
            .chain(goal)
            .map(|a| a.predicate.clone())
            .filter(|p| seen.insert(p.clone()))
            .collect()
    };
    let sym = predicate_symbols(&preds);
    let atom = |a: &GroundAtom| -> String {
        let mut s = format!("({}", sym[&(a.predicate.name.clone(), a.predicate.arg_types.clone())]);
        for o in &a.args {
            s.push(' ');
            s.push_str(&escape_name(&o.name));
        }
        s.push(')');
        s
    };
    let mut out = String::new();
    writeln!(out, "(define (problem {})", escape_name(name)).unwrap();
    writeln!(out, "  (:domain {})", escape_name(domain)).unwrap();
    out.push_str("  (:objects");
    for o in objects {
        write!(out, " {} - {}", escape_name(&o.name), escape_name(&o.ty)).unwrap();
    }
    out.push_str(")\n  (:init");
    for a in init {
        write!(out, " {}", atom(a)).unwrap();
    }
    out.push_str(")\n  (:goal (and");
    for a in goal {
        write!(out, " {}", atom(a)).unwrap();
    }
    out.push_str(")))\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String, usize, usize),
    Comment(String, usize, usize),
    List(Vec<Sexp>, usize, usize),
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Atom(_, l, c) | Sexp::Comment(_, l, c) | Sexp::List(_, l, c) => (*l, *c),
        }
    }
}

fn syntax(pos: (usize, usize), message: impl Into<String>) -> PddlSyntaxError {
    PddlSyntaxError {
        line: pos.0,
        column: pos.1,
        message: message.into(),
    }
}

fn read_sexp(text: &str) -> Result<Sexp, PddlSyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let (mut line, mut col) = (1, 1);
    let mut stack: Vec<(Vec<Sexp>, usize, usize)> = Vec::new();
    let mut result = None;
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = (line, col);
        match c {
            c if c.is_whitespace() => advance(&mut i, &mut line, &mut col, c),
            ';' => {
                let mut s = String::new();
                while i < chars.len() && chars[i] != '\n' {
                    let ch = chars[i];
                    s.push(ch);
                    advance(&mut i, &mut line, &mut col, ch);
                }
                if let Some(top) = stack.last_mut() {
                    top.0.push(Sexp::Comment(s[1..].trim().to_string(), pos.0, pos.1));
                }
            }
            '(' => {
                if result.is_some() {
                    return Err(syntax(pos, "trailing content after top-level form"));
                }
                stack.push((Vec::new(), pos.0, pos.1));
                advance(&mut i, &mut line, &mut col, c);
            }
            ')' => {
                let (items, l, c0) = stack.pop().ok_or_else(|| syntax(pos, "unbalanced ')'"))?;
                let node = Sexp::List(items, l, c0);
                match stack.last_mut() {
                    Some(top) => top.0.push(node),
                    None => result = Some(node),
                }
                advance(&mut i, &mut line, &mut col, c);
            }
            _ => {
                let mut s = String::new();
                while i < chars.len() && !chars[i].is_whitespace() && !"();".contains(chars[i]) {
                    let ch = chars[i];
                    s.push(ch);
                    advance(&mut i, &mut line, &mut col, ch);
                }
                match stack.last_mut() {
                    Some(top) => top.0.push(Sexp::Atom(s, pos.0, pos.1)),
                    None => return Err(syntax(pos, "token outside any form")),
                }
            }
        }
    }
    if let Some((_, l, c)) = stack.last() {
        return Err(syntax((*l, *c), "unclosed '('"));
    }
    result.ok_or_else(|| syntax((line, col), "empty input"))
}

fn atom_str(s: &Sexp) -> Result<&str, PddlSyntaxError> {
    match s {
        Sexp::Atom(a, ..) => Ok(a),
        other => Err(syntax(other.pos(), "expected a symbol")),
    }
}

fn list(s: &Sexp) -> Result<Vec<&Sexp>, PddlSyntaxError> {
    match s {
        Sexp::List(items, ..) => Ok(items.iter().filter(|x| !matches!(x, Sexp::Comment(..))).collect()),
        other => Err(syntax(other.pos(), "expected a list")),
    }
}

fn unescape(s: &Sexp) -> Result<String, PddlSyntaxError> {
    unescape_name(atom_str(s)?).ok_or_else(|| syntax(s.pos(), "bad escaped name"))
}

/// `?a - t ?b - u` into variables.
fn typed_list(items: &[&Sexp]) -> Result<Vec<Variable>, PddlSyntaxError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let v = atom_str(items[i])?;
        if atom_str(items.get(i + 1).copied().ok_or_else(|| syntax(items[i].pos(), "missing type"))?)? != "-" {
            return Err(syntax(items[i + 1].pos(), "expected '-'"));
        }
        let ty = items.get(i + 2).ok_or_else(|| syntax(items[i].pos(), "missing type"))?;
        let name = v.strip_prefix('?').ok_or_else(|| syntax(items[i].pos(), "expected a variable"))?;
        let name = unescape_name(name).ok_or_else(|| syntax(items[i].pos(), "bad escaped name"))?;
        out.push(Variable::new(format!("?{name}"), unescape(ty)?));
        i += 3;
    }
    Ok(out)
}

pub fn parse_domain(text: &str) -> Result<Domain, PddlSyntaxError> {
    let root = read_sexp(text)?;
    let items = list(&root)?;
    if items.first().map(|s| atom_str(s)) != Some(Ok("define")) {
        return Err(syntax(root.pos(), "expected (define ...)"));
    }
    let head = list(items.get(1).ok_or_else(|| syntax(root.pos(), "missing domain name"))?)?;
    if head.len() != 2 || atom_str(head[0])? != "domain" {
        return Err(syntax(items[1].pos(), "expected (domain name)"));
    }
    let name = unescape(head[1])?;
    let mut types = vec![ObjectType::new(ROOT_TYPE, None)];
    let mut predicates: Vec<Pred> = Vec::new();
    let mut by_symbol: BTreeMap<String, Pred> = BTreeMap::new();
    let mut operators = Vec::new();
    let Sexp::List(raw_items, ..) = &root else { unreachable!() };
    for section in raw_items.iter().skip(2) {
        let Sexp::List(raw, ..) = section else { continue };
        let parts = list(section)?;
        let Some(key) = parts.first() else {
            return Err(syntax(section.pos(), "empty section"));
        };
        match atom_str(key)? {
            ":requirements" => {}
            ":types" => {
                let mut i = 1;
                while i < parts.len() {
                    if parts.get(i + 1).map(|s| atom_str(s)) != Some(Ok("-")) || i + 2 >= parts.len() {
                        return Err(syntax(parts[i].pos(), "expected 'type - parent'"));
                    }
                    let parent = unescape(parts[i + 2])?;
                    types.push(ObjectType::new(unescape(parts[i])?, Some(&parent)));
                    i += 3;
                }
            }
            ":predicates" => {
                let mut last: Option<(String, Vec<String>, (usize, usize))> = None;
                let mut flush = |last: &mut Option<(String, Vec<String>, (usize, usize))>,
                                 kind: Option<&str>|
                 -> Result<(), PddlSyntaxError> {
                    let Some((sym, arg_types, pos)) = last.take() else { return Ok(()) };
                    let full = unescape_name(&sym).ok_or_else(|| syntax(pos, "bad escaped name"))?;
                    let name = match full.split_once('#') {
                        Some((n, _)) => n.to_string(),
                        None => full,
                    };
                    let kind = match kind {
                        Some("visual") => PredicateKind::Visual,
                        Some("provided") | None => PredicateKind::Provided,
                        Some("feature") => PredicateKind::Feature {
                            classifier: FeatureClassifier::parse_name(&name)
                                .ok_or_else(|| syntax(pos, "feature predicate with unparseable name"))?,
                        },
                        Some(other) => return Err(syntax(pos, format!("unknown predicate kind {other}"))),
                    };
                    let p = Arc::new(Predicate { name, arg_types, kind });
                    by_symbol.insert(sym, p.clone());
                    predicates.push(p);
                    Ok(())
                };
                for item in raw.iter().skip(1) {
                    match item {
                        Sexp::Comment(c, ..) => flush(&mut last, Some(c.as_str()))?,
                        Sexp::List(..) => {
                            flush(&mut last, None)?;
                            let decl = list(item)?;
                            let sym = atom_str(decl.first().ok_or_else(|| syntax(item.pos(), "empty predicate"))?)?;
                            let vars = typed_list(&decl[1..])?;
                            last = Some((sym.to_string(), vars.into_iter().map(|v| v.ty).collect(), item.pos()));
                        }
                        Sexp::Atom(..) => return Err(syntax(item.pos(), "expected a predicate declaration")),
                    }
                }
                flush(&mut last, None)?;
            }
            ":action" => operators.push(parse_action(section, raw, &by_symbol)?),
            other => return Err(syntax(key.pos(), format!("unsupported section {other}"))),
        }
    }
    let types = TypeHierarchy::new(types).map_err(|e| syntax(root.pos(), e.to_string()))?;
    Ok(Domain {
        name,
        types,
        predicates,
        operators,
    })
}

fn parse_action(section: &Sexp, raw: &[Sexp], preds: &BTreeMap<String, Pred>) -> Result<Operator, PddlSyntaxError> {
    let parts = list(section)?;
    let name = unescape(parts.get(1).ok_or_else(|| syntax(section.pos(), "missing action name"))?)?;
    let mut skill = None;
    let mut skill_args_raw: Vec<String> = Vec::new();
    let mut support = 0;
    for c in raw {
        let Sexp::Comment(text, l, c0) = c else { continue };
        let pos = (*l, *c0);
        let words: Vec<&str> = text.split_whitespace().collect();
        match words.first() {
            Some(&"skill") => {
                let sname = unescape_name(words.get(1).ok_or_else(|| syntax(pos, "missing skill name"))?)
                    .ok_or_else(|| syntax(pos, "bad skill name"))?;
                let dim: usize = words
                    .get(2)
                    .and_then(|d| d.parse().ok())
                    .ok_or_else(|| syntax(pos, "missing skill dimension"))?;
                let split = words.iter().position(|w| *w == ":args").ok_or_else(|| syntax(pos, "missing :args"))?;
                let toks: Vec<Sexp> = words[3..split].iter().map(|w| Sexp::Atom(w.to_string(), pos.0, pos.1)).collect();
                let params = typed_list(&toks.iter().collect::<Vec<_>>())?;
                skill = Some(Skill::new(sname, params, dim));
                skill_args_raw = words[split + 1..].iter().map(|s| s.to_string()).collect();
            }
            Some(&"support") => {
                support = words
                    .get(1)
                    .and_then(|d| d.parse().ok())
                    .ok_or_else(|| syntax(pos, "bad support count"))?;
            }
            _ => {}
        }
    }
    let skill = skill.ok_or_else(|| syntax(section.pos(), "action without skill comment"))?;
    let mut params = Vec::new();
    let mut pre = Vec::new();
    let mut add = Vec::new();
    let mut del = Vec::new();
    let mut i = 2;
    while i < parts.len() {
        let key = atom_str(parts[i])?;
        let value = parts.get(i + 1).ok_or_else(|| syntax(parts[i].pos(), "missing value"))?;
        match key {
            ":parameters" => params = typed_list(&list(value)?)?,
            ":precondition" => {
                for (neg, a) in conjunction(value)? {
                    if neg {
                        return Err(syntax(a.pos(), "negative preconditions are not supported"));
                    }
                    pre.push(a);
                }
            }
            ":effect" => {
                for (neg, a) in conjunction(value)? {
                    if neg {
                        del.push(a);
                    } else {
                        add.push(a);
                    }
                }
            }
            other => return Err(syntax(parts[i].pos(), format!("unknown action field {other}"))),
        }
        i += 2;
    }
    let var_of = |tok: &str, pos: (usize, usize)| -> Result<Variable, PddlSyntaxError> {
        let name = tok
            .strip_prefix('?')
            .and_then(unescape_name)
            .ok_or_else(|| syntax(pos, "expected a variable"))?;
        params
            .iter()
            .find(|v| v.name == format!("?{name}"))
            .cloned()
            .ok_or_else(|| syntax(pos, format!("unknown variable ?{name}")))
    };
    let lift = |s: &Sexp| -> Result<LiftedAtom, PddlSyntaxError> {
        let items = list(s)?;
        let sym = atom_str(items.first().ok_or_else(|| syntax(s.pos(), "empty atom"))?)?;
        let p = preds.get(sym).ok_or_else(|| syntax(s.pos(), format!("undeclared predicate {sym}")))?;
        let args = items[1..]
            .iter()
            .map(|t| var_of(atom_str(t)?, t.pos()))
            .collect::<Result<Vec<_>, _>>()?;
        if args.len() != p.arg_types.len() {
            return Err(syntax(s.pos(), format!("{sym} expects {} arguments", p.arg_types.len())));
        }
        Ok(LiftedAtom::new(p.clone(), args))
    };
    let skill_args = skill_args_raw
        .iter()
        .map(|t| var_of(t, section.pos()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Operator {
        name,
        preconditions: pre.iter().map(|s| lift(s)).collect::<Result<_, _>>()?,
        add_effects: add.iter().map(|s| lift(s)).collect::<Result<_, _>>()?,
        delete_effects: del.iter().map(|s| lift(s)).collect::<Result<_, _>>()?,
        ignore_effects: vec![],
        skill,
        skill_args,
        support_count: support,
        params,
    })
}

/// Literals of `()`, a single literal, or `(and ...)`; `true` marks `not`.
fn conjunction(s: &Sexp) -> Result<Vec<(bool, Sexp)>, PddlSyntaxError> {
    let items = list(s)?;
    if items.is_empty() {
        return Ok(vec![]);
    }
    let literal = |x: &Sexp| -> Result<(bool, Sexp), PddlSyntaxError> {
        let inner = list(x)?;
        if inner.first().map(|h| atom_str(h)) == Some(Ok("not")) {
            let a = inner.get(1).ok_or_else(|| syntax(x.pos(), "empty not"))?;
            Ok((true, (*a).clone()))
        } else {
            Ok((false, x.clone()))
        }
    };
    if atom_str(items[0]) == Ok("and") {
        items[1..].iter().map(|x| literal(x)).collect()
    } else {
        Ok(vec![literal(s)?])
    }
}
