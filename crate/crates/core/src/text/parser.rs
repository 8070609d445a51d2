use std::collections::HashMap;

use thiserror::Error;

use crate::ir::{Attribute, BlockId, Dim, Module, OpId, OperationState, RegionId, Type, Value};

/// Location of a parse problem. Offsets are bytes; line and column are
/// 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub column: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}:{}: {message}{}", span.line, span.column, expected.as_ref().map(|e| format!(" (expected {e})")).unwrap_or_default())]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    pub expected: Option<String>,
}

type PResult<T> = Result<T, ParseError>;

const MAX_DEPTH: usize = 128;

/// Parses the textual form into a module. The result is not verified.
pub fn parse_module(text: &str) -> PResult<Module> {
    let mut p = Parser {
        src: text,
        pos: 0,
        m: Module::new(),
        scopes: Vec::new(),
        labels: Vec::new(),
        depth: 0,
    };
    p.parse_top()?;
    Ok(p.m)
}

struct LabelScope {
    region: RegionId,
    blocks: HashMap<String, (BlockId, bool, usize)>,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    m: Module,
    scopes: Vec<HashMap<String, Value>>,
    labels: Vec<LabelScope>,
    depth: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$' || c == '.'
}

fn is_suffix_char(c: char) -> bool {
    is_ident_char(c) || c == '-'
}

impl<'a> Parser<'a> {
    fn span(&self, start: usize, end: usize) -> SourceSpan {
        let end = end.min(self.src.len()).max(start.min(self.src.len()));
        let start = start.min(end);
        let before = &self.src[..start];
        let line = before.matches('\n').count() + 1;
        let column = before.rfind('\n').map(|i| before[i + 1..].chars().count()).unwrap_or(before.chars().count()) + 1;
        SourceSpan {
            start,
            end,
            line,
            column,
        }
    }

    fn err_at<T>(&self, start: usize, message: impl Into<String>) -> PResult<T> {
        let end = self.src[start.min(self.src.len())..]
            .chars()
            .next()
            .map(|c| start + c.len_utf8())
            .unwrap_or(start);
        Err(ParseError {
            span: self.span(start, end),
            message: message.into(),
            expected: None,
        })
    }

    fn expected<T>(&self, what: &str) -> PResult<T> {
        let found = match self.rest().chars().next() {
            Some(c) => format!("unexpected '{c}'"),
            None => "unexpected end of input".to_string(),
        };
        let end = self.rest().chars().next().map(|c| self.pos + c.len_utf8()).unwrap_or(self.pos);
        Err(ParseError {
            span: self.span(self.pos, end),
            message: found,
            expected: Some(what.to_string()),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        loop {
            let r = self.rest();
            let trimmed = r.trim_start();
            self.pos += r.len() - trimmed.len();
            if self.rest().starts_with("//") {
                let nl = self.rest().find('\n').unwrap_or(self.rest().len());
                self.pos += nl;
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn at(&mut self, s: &str) -> bool {
        self.skip_ws();
        self.rest().starts_with(s)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.at(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> PResult<()> {
        if self.eat(s) {
            Ok(())
        } else {
            self.expected(&format!("'{s}'"))
        }
    }

    /// Eats a keyword only if it is not followed by more identifier chars.
    fn eat_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(kw) && !self.rest()[kw.len()..].starts_with(is_ident_char) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let r = self.rest();
        let n = r.find(|c: char| !f(c)).unwrap_or(r.len());
        self.pos += n;
        &r[..n]
    }

    fn ident(&mut self) -> PResult<&'a str> {
        self.skip_ws();
        match self.rest().chars().next() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => Ok(self.take_while(is_ident_char)),
            _ => self.expected("identifier"),
        }
    }

    fn string_lit(&mut self) -> PResult<String> {
        self.skip_ws();
        let start = self.pos;
        if !self.eat("\"") {
            return self.expected("string literal");
        }
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        loop {
            match chars.next() {
                None => return self.err_at(start, "unterminated string literal"),
                Some((i, '"')) => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                Some((_, '\\')) => match chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, c @ ('"' | '\\'))) => out.push(c),
                    _ => return self.err_at(start, "invalid escape in string literal"),
                },
                Some((_, '\n')) => return self.err_at(start, "unterminated string literal"),
                Some((_, c)) => out.push(c),
            }
        }
    }

    fn symbol(&mut self) -> PResult<String> {
        self.skip_ws();
        if !self.eat("@") {
            return self.expected("symbol reference");
        }
        if self.rest().starts_with('"') {
            self.string_lit()
        } else {
            let s = self.take_while(is_ident_char);
            if s.is_empty() {
                return self.expected("symbol name");
            }
            Ok(s.to_string())
        }
    }

    fn integer(&mut self) -> PResult<i64> {
        self.skip_ws();
        let start = self.pos;
        let neg = self.eat("-");
        let digits = self.take_while(|c| c.is_ascii_digit());
        if digits.is_empty() {
            self.pos = start;
            return self.expected("integer");
        }
        let text = if neg { format!("-{digits}") } else { digits.to_string() };
        text.parse().or_else(|_| self.err_at(start, format!("integer {text} out of range")))
    }

    // ---- types ----

    fn parse_type(&mut self) -> PResult<Type> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err_at(self.pos, "nesting too deep");
        }
        let r = self.parse_type_inner();
        self.depth -= 1;
        r
    }

    fn parse_type_inner(&mut self) -> PResult<Type> {
        self.skip_ws();
        let start = self.pos;
        if self.at("(") {
            return self.parse_function_type();
        }
        if self.eat("!fir.") {
            let kind = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
            return match kind {
                "ref" | "heap" => {
                    self.expect("<")?;
                    let inner = self.parse_type()?;
                    self.expect(">")?;
                    Ok(if kind == "ref" { Type::fir_ref(inner) } else { Type::fir_heap(inner) })
                }
                "array" => {
                    self.expect("<")?;
                    let (shape, elem) = self.parse_shaped_body()?;
                    Ok(Type::fir_array(shape, elem))
                }
                "shape" => {
                    self.expect("<")?;
                    let n = self.integer()?;
                    self.expect(">")?;
                    if n < 1 {
                        return self.err_at(start, "!fir.shape rank must be at least 1");
                    }
                    Ok(Type::FirShape(n as usize))
                }
                "type" => self.parse_derived(start),
                other => self.err_at(start, format!("unknown type '!fir.{other}'")),
            };
        }
        if self.rest().starts_with('!') {
            return self.err_at(start, "unknown dialect type");
        }
        let word = match self.rest().chars().next() {
            Some(c) if c.is_ascii_alphabetic() => self.take_while(|c| c.is_ascii_alphanumeric() || c == '_'),
            _ => return self.expected("type"),
        };
        match word {
            "index" => Ok(Type::Index),
            "f32" => Ok(Type::f32()),
            "f64" => Ok(Type::f64()),
            "memref" => {
                self.expect("<")?;
                let (shape, elem) = self.parse_shaped_body()?;
                Ok(Type::memref(shape, elem))
            }
            w if w.len() > 1 && w.starts_with('i') && w[1..].bytes().all(|b| b.is_ascii_digit()) => {
                match w[1..].parse::<u32>() {
                    Ok(n) if (1..=64).contains(&n) => Ok(Type::Integer(n)),
                    _ => self.err_at(start, format!("unsupported integer width in '{w}'")),
                }
            }
            other => self.err_at(start, format!("unknown type '{other}'")),
        }
    }

    /// Dimensions and element type after `<`, consuming the closing `>`.
    fn parse_shaped_body(&mut self) -> PResult<(Vec<Dim>, Type)> {
        let mut shape = Vec::new();
        loop {
            self.skip_ws();
            let r = self.rest();
            if let Some(after) = r.strip_prefix('?') {
                if after.starts_with('x') {
                    self.pos += 2;
                    shape.push(Dim::Dynamic);
                    continue;
                }
                return self.expected("'x' after '?'");
            }
            let n = r.find(|c: char| !c.is_ascii_digit()).unwrap_or(r.len());
            if n > 0 && r[n..].starts_with('x') {
                let start = self.pos;
                let v: i64 = r[..n]
                    .parse()
                    .or_else(|_| self.err_at(start, "dimension out of range"))?;
                self.pos += n + 1;
                shape.push(Dim::Static(v));
                continue;
            }
            break;
        }
        let elem_start = self.pos;
        let elem = self.parse_type()?;
        if matches!(elem, Type::Function { .. }) {
            return self.err_at(elem_start, "element type cannot be a function type");
        }
        self.expect(">")?;
        Ok((shape, elem))
    }

    fn parse_derived(&mut self, start: usize) -> PResult<Type> {
        self.expect("<")?;
        self.skip_ws();
        let name = self.take_while(is_ident_char).to_string();
        if name.is_empty() {
            return self.expected("derived type name");
        }
        self.expect("{")?;
        let mut members: Vec<(String, Type)> = Vec::new();
        if !self.eat("}") {
            loop {
                let mstart = self.pos;
                let mname = self.ident()?.to_string();
                if members.iter().any(|(n, _)| *n == mname) {
                    return self.err_at(mstart, format!("duplicate member '{mname}'"));
                }
                self.expect(":")?;
                let t = self.parse_type()?;
                if matches!(t, Type::Function { .. }) {
                    return self.err_at(mstart, "member type cannot be a function type");
                }
                members.push((mname, t));
                if self.eat("}") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.expect(">")?;
        let _ = start;
        Ok(Type::FirDerived { name, members })
    }

    fn parse_type_list_parens(&mut self) -> PResult<Vec<Type>> {
        self.expect("(")?;
        let mut out = Vec::new();
        if self.eat(")") {
            return Ok(out);
        }
        loop {
            out.push(self.parse_type()?);
            if self.eat(")") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    fn parse_function_type(&mut self) -> PResult<Type> {
        let inputs = self.parse_type_list_parens()?;
        self.expect("->")?;
        let results = self.parse_result_types()?;
        Ok(Type::Function { inputs, results })
    }

    /// `T` or `(T, ...)` after an arrow. A parenthesized list is a result
    /// list unless it is itself followed by `->`.
    fn parse_result_types(&mut self) -> PResult<Vec<Type>> {
        if self.at("(") {
            let save = self.pos;
            let list = self.parse_type_list_parens()?;
            if self.at("->") {
                self.pos = save;
                return Ok(vec![self.parse_function_type()?]);
            }
            Ok(list)
        } else {
            Ok(vec![self.parse_type()?])
        }
    }

    fn parse_type_list_bare(&mut self) -> PResult<Vec<Type>> {
        let mut out = vec![self.parse_type()?];
        while self.eat(",") {
            out.push(self.parse_type()?);
        }
        Ok(out)
    }

    // ---- attributes ----

    fn parse_attr(&mut self) -> PResult<Attribute> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err_at(self.pos, "nesting too deep");
        }
        let r = self.parse_attr_inner();
        self.depth -= 1;
        r
    }

    fn parse_attr_inner(&mut self) -> PResult<Attribute> {
        self.skip_ws();
        let start = self.pos;
        match self.rest().chars().next() {
            Some('"') => Ok(Attribute::String(self.string_lit()?)),
            Some('@') => Ok(Attribute::SymbolRef(self.symbol()?)),
            Some('[') => {
                self.pos += 1;
                let mut items = Vec::new();
                if !self.eat("]") {
                    loop {
                        items.push(self.parse_attr()?);
                        if self.eat("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Ok(Attribute::Array(items))
            }
            Some(c) if c.is_ascii_digit() || c == '-' => self.parse_number_attr(),
            _ => {
                if self.eat_keyword("true") {
                    return Ok(Attribute::Int(1, Type::i1()));
                }
                if self.eat_keyword("false") {
                    return Ok(Attribute::Int(0, Type::i1()));
                }
                if self.eat_keyword("unit") {
                    return Ok(Attribute::Unit);
                }
                if self.eat_keyword("array") {
                    self.expect("<")?;
                    self.expect("i64")?;
                    let mut v = Vec::new();
                    if self.eat(":") {
                        loop {
                            v.push(self.integer()?);
                            if !self.eat(",") {
                                break;
                            }
                        }
                    }
                    self.expect(">")?;
                    return Ok(Attribute::DenseIndexArray(v));
                }
                match self.parse_type() {
                    Ok(t) => Ok(Attribute::Type(t)),
                    Err(_) => {
                        self.pos = start;
                        self.expected("attribute value")
                    }
                }
            }
        }
    }

    fn parse_number_attr(&mut self) -> PResult<Attribute> {
        self.skip_ws();
        let start = self.pos;
        let neg = self.rest().starts_with('-');
        let body_start = start + neg as usize;
        let body = &self.src[body_start..];
        if body.starts_with("0x") || body.starts_with("0X") {
            let hex = body[2..].find(|c: char| !c.is_ascii_hexdigit()).unwrap_or(body.len() - 2);
            let text = &body[2..2 + hex];
            self.pos = body_start + 2 + hex;
            let bits = u64::from_str_radix(text, 16).or_else(|_| self.err_at(start, "hex literal out of range"))?;
            let t = self.attr_type_suffix()?;
            return match t {
                Some(t @ Type::Float(_)) if !neg => Ok(Attribute::Float(f64::from_bits(bits), t)),
                Some(t) if t.is_integer() || t.is_index() => {
                    let v = bits as i64;
                    Ok(Attribute::Int(if neg { v.wrapping_neg() } else { v }, t))
                }
                None => Ok(Attribute::Int(bits as i64, Type::i64())),
                Some(t) => self.err_at(start, format!("hex literal cannot have type {t}")),
            };
        }
        let n = body
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '.' || c == '+' || c == '-'))
            .unwrap_or(body.len());
        let mut text = &body[..n];
        // stop an exponent-free number before a trailing identifier like `x`
        if let Some(i) = text.find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E') {
            text = &text[..i];
        }
        // `-` and `+` only count inside an exponent
        let mut end = 0;
        let bytes = text.as_bytes();
        for (i, &b) in bytes.iter().enumerate() {
            if (b == b'-' || b == b'+') && !(i > 0 && (bytes[i - 1] == b'e' || bytes[i - 1] == b'E')) {
                break;
            }
            end = i + 1;
        }
        let text = &text[..end];
        if text.is_empty() || !text.starts_with(|c: char| c.is_ascii_digit()) {
            return self.expected("number");
        }
        self.pos = body_start + text.len();
        let is_float = text.contains('.') || text.contains('e') || text.contains('E');
        let full = if neg { format!("-{text}") } else { text.to_string() };
        let t = self.attr_type_suffix()?;
        if is_float {
            let v: f64 = full.parse().or_else(|_| self.err_at(start, format!("invalid float '{full}'")))?;
            match t {
                None => Ok(Attribute::Float(v, Type::f64())),
                Some(t @ Type::Float(_)) => Ok(Attribute::Float(v, t)),
                Some(t) => self.err_at(start, format!("float literal cannot have type {t}")),
            }
        } else {
            let v: i64 = full.parse().or_else(|_| self.err_at(start, format!("integer {full} out of range")))?;
            match t {
                None => Ok(Attribute::Int(v, Type::i64())),
                Some(t @ Type::Float(_)) => Ok(Attribute::Float(v as f64, t)),
                Some(t) if t.is_integer() || t.is_index() => {
                    let a = Attribute::Int(v, t);
                    if a.int_fits() {
                        Ok(a)
                    } else {
                        self.err_at(start, format!("integer {v} does not fit its type"))
                    }
                }
                Some(t) => self.err_at(start, format!("integer literal cannot have type {t}")),
            }
        }
    }

    /// Optional `: type` after a numeric literal. A colon followed by
    /// something that is not a type is left alone.
    fn attr_type_suffix(&mut self) -> PResult<Option<Type>> {
        let save = self.pos;
        if self.eat(":") {
            if let Ok(t) = self.parse_type() {
                if t.is_scalar() {
                    return Ok(Some(t));
                }
            }
            self.pos = save;
        }
        Ok(None)
    }

    fn parse_attr_dict(&mut self) -> PResult<Vec<(String, Attribute)>> {
        self.expect("{")?;
        let mut out: Vec<(String, Attribute)> = Vec::new();
        if self.eat("}") {
            return Ok(out);
        }
        loop {
            self.skip_ws();
            let kstart = self.pos;
            let key = if self.rest().starts_with('"') {
                self.string_lit()?
            } else {
                self.ident()?.to_string()
            };
            if out.iter().any(|(k, _)| *k == key) {
                return self.err_at(kstart, format!("duplicate attribute '{key}'"));
            }
            let value = if self.eat("=") { self.parse_attr()? } else { Attribute::Unit };
            out.push((key, value));
            if self.eat("}") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    // ---- values and blocks ----

    fn value_name(&mut self) -> PResult<(String, usize)> {
        self.skip_ws();
        let start = self.pos;
        if !self.eat("%") {
            return self.expected("SSA value");
        }
        let name = self.take_while(is_suffix_char);
        if name.is_empty() {
            return self.expected("value name");
        }
        Ok((format!("%{name}"), start))
    }

    fn lookup(&self, name: &str) -> Option<Value> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn is_defined(&self, name: &str) -> bool {
        self.lookup(name).is_some()
    }

    /// A use `%x` or `%x#N`.
    fn value_use(&mut self) -> PResult<Value> {
        let (name, start) = self.value_name()?;
        let full = if self.rest().starts_with('#') {
            self.pos += 1;
            let digits = self.take_while(|c| c.is_ascii_digit());
            if digits.is_empty() {
                return self.expected("result number");
            }
            format!("{name}#{digits}")
        } else {
            name.clone()
        };
        if let Some(v) = self.lookup(&full) {
            return Ok(v);
        }
        if full == format!("{name}#0") {
            if let Some(v) = self.lookup(&name) {
                return Ok(v);
            }
        }
        self.err_at(start, format!("use of undefined value {full}"))
    }

    fn value_list_until(&mut self, close: &str) -> PResult<Vec<Value>> {
        let mut out = Vec::new();
        if self.eat(close) {
            return Ok(out);
        }
        loop {
            out.push(self.value_use()?);
            if self.eat(close) {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }

    fn define_value(&mut self, name: &str, start: usize, v: Value) -> PResult<()> {
        if self.is_defined(name) {
            return self.err_at(start, format!("redefinition of value {name}"));
        }
        self.scopes
            .last_mut()
            .expect("value scope present")
            .insert(name.to_string(), v);
        Ok(())
    }

    fn block_ref(&mut self) -> PResult<BlockId> {
        self.skip_ws();
        let start = self.pos;
        if !self.eat("^") {
            return self.expected("block label");
        }
        let name = self.take_while(is_suffix_char).to_string();
        if name.is_empty() {
            return self.expected("block name");
        }
        let Some(scope) = self.labels.last_mut() else {
            return self.err_at(start, "block reference outside a region");
        };
        if let Some((b, _, _)) = scope.blocks.get(&name) {
            return Ok(*b);
        }
        let b = self.m.create_block(Vec::new());
        scope.blocks.insert(name, (b, false, start));
        Ok(b)
    }

    /// `(%a: T, ...)` defining block arguments in the current scope.
    fn parse_arg_defs(&mut self, block: BlockId) -> PResult<()> {
        self.expect("(")?;
        if self.eat(")") {
            return Ok(());
        }
        loop {
            let (name, start) = self.value_name()?;
            self.expect(":")?;
            let t = self.parse_type()?;
            let v = self.m.add_block_arg(block, t);
            self.define_value(&name, start, v)?;
            if self.eat(")") {
                return Ok(());
            }
            self.expect(",")?;
        }
    }

    /// Parses `{ ... }`. `entry_args` supplies arguments already declared
    /// by the enclosing op (function signature, reduce body).
    fn parse_region(&mut self, entry_args: Option<Vec<(String, usize, Type)>>) -> PResult<RegionId> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err_at(self.pos, "nesting too deep");
        }
        self.expect("{")?;
        let region = self.m.create_region();
        self.scopes.push(HashMap::new());
        self.labels.push(LabelScope {
            region,
            blocks: HashMap::new(),
        });
        let r = self.parse_region_body(region, entry_args);
        self.scopes.pop();
        self.labels.pop();
        self.depth -= 1;
        r.map(|_| region)
    }

    fn parse_region_body(&mut self, region: RegionId, entry_args: Option<Vec<(String, usize, Type)>>) -> PResult<()> {
        let mut current: Option<BlockId> = None;
        if let Some(args) = entry_args {
            let b = self.m.create_block(Vec::new());
            self.m.append_block(region, b);
            for (name, start, t) in args {
                let v = self.m.add_block_arg(b, t);
                self.define_value(&name, start, v)?;
            }
            current = Some(b);
        }
        loop {
            match self.peek() {
                Some('}') => {
                    self.pos += 1;
                    break;
                }
                None => return self.expected("'}'"),
                Some('^') => {
                    let start = self.pos;
                    let b = self.block_ref()?;
                    let scope = self.labels.last_mut().expect("label scope");
                    let entry = scope.blocks.values_mut().find(|(x, _, _)| *x == b).expect("just inserted");
                    if entry.1 {
                        return self.err_at(start, "redefinition of block label");
                    }
                    entry.1 = true;
                    if self.at("(") {
                        self.parse_arg_defs(b)?;
                    }
                    self.expect(":")?;
                    self.m.append_block(region, b);
                    current = Some(b);
                }
                Some(_) => {
                    let b = match current {
                        Some(b) => b,
                        None => {
                            let b = self.m.create_block(Vec::new());
                            self.m.append_block(region, b);
                            current = Some(b);
                            b
                        }
                    };
                    self.parse_op(b)?;
                }
            }
        }
        let scope = self.labels.last().expect("label scope");
        debug_assert_eq!(scope.region, region);
        if let Some((name, (_, _, start))) = scope.blocks.iter().filter(|(_, v)| !v.1).min_by_key(|(_, v)| v.2) {
            let (name, start) = (name.clone(), *start);
            return self.err_at(start, format!("reference to undefined block ^{name}"));
        }
        Ok(())
    }

    // ---- operations ----

    fn parse_top(&mut self) -> PResult<()> {
        self.scopes.push(HashMap::new());
        let body = self.m.body_block();
        let wrapped = self.eat_keyword("module");
        if wrapped {
            self.expect("{")?;
        }
        loop {
            match self.peek() {
                None if !wrapped => return Ok(()),
                Some('}') if wrapped => {
                    self.pos += 1;
                    return match self.peek() {
                        None => Ok(()),
                        Some(_) => self.expected("end of input"),
                    };
                }
                None => return self.expected("'}'"),
                Some(_) => {
                    self.parse_op(body)?;
                }
            }
        }
    }

    fn parse_op(&mut self, block: BlockId) -> PResult<OpId> {
        self.skip_ws();
        let op_start = self.pos;
        let mut result_names: Vec<(String, usize, usize)> = Vec::new();
        if self.rest().starts_with('%') {
            loop {
                let (name, start) = self.value_name()?;
                let count = if self.eat(":") {
                    let n = self.integer()?;
                    if !(1..=1024).contains(&n) {
                        return self.err_at(start, "invalid result count");
                    }
                    n as usize
                } else {
                    1
                };
                result_names.push((name, start, count));
                if !self.eat(",") {
                    break;
                }
            }
            self.expect("=")?;
        }
        self.skip_ws();
        let name_start = self.pos;
        let state = if self.rest().starts_with('"') {
            let name = self.string_lit()?;
            self.parse_generic(name)?
        } else {
            let name = self.take_while(is_ident_char).to_string();
            if name.is_empty() {
                return self.expected("operation");
            }
            self.parse_pretty(&name, name_start)?
        };
        let total: usize = result_names.iter().map(|r| r.2).sum();
        if total != state.result_types.len() {
            return self.err_at(
                op_start,
                format!(
                    "operation '{}' defines {} results but {total} names were given",
                    state.name,
                    state.result_types.len()
                ),
            );
        }
        let op = self.m.append(block, state);
        let mut idx = 0;
        for (name, start, count) in result_names {
            if count == 1 && total == 1 {
                self.define_value(&name, start, self.m.result(op, 0))?;
            } else {
                if self.is_defined(&name) {
                    return self.err_at(start, format!("redefinition of value {name}"));
                }
                for k in 0..count {
                    let v = self.m.result(op, idx + k);
                    let key = if count == 1 { name.clone() } else { format!("{name}#{k}") };
                    self.define_value(&key, start, v)?;
                }
            }
            idx += count;
        }
        Ok(op)
    }

    fn parse_generic(&mut self, name: String) -> PResult<OperationState> {
        let start = self.pos;
        if !name.contains('.') {
            return self.err_at(start, format!("operation name '{name}' lacks a dialect prefix"));
        }
        let mut st = OperationState::new(name);
        self.expect("(")?;
        let operands_start = self.pos;
        st.operands = self.value_list_until(")")?;
        if self.eat("[") {
            loop {
                st.successors.push(self.block_ref()?);
                if self.eat("]") {
                    break;
                }
                self.expect(",")?;
            }
        }
        if self.at("(") {
            self.pos += 1;
            loop {
                st.regions.push(self.parse_region(None)?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        if self.at("{") {
            for (k, v) in self.parse_attr_dict()? {
                st.attributes.insert(k, v);
            }
        }
        self.expect(":")?;
        let sig_start = self.pos;
        let Type::Function { inputs, results } = self.parse_function_type()? else {
            unreachable!("parse_function_type returns a function type")
        };
        if inputs.len() != st.operands.len() {
            return self.err_at(
                sig_start,
                format!("{} operands but {} operand types", st.operands.len(), inputs.len()),
            );
        }
        for (i, (v, t)) in st.operands.iter().zip(&inputs).enumerate() {
            if self.m.value_type(*v) != t {
                return self.err_at(
                    operands_start,
                    format!("operand #{i} has type {} but the signature says {t}", self.m.value_type(*v)),
                );
            }
        }
        st.result_types = results;
        Ok(st)
    }

    fn check_type(&self, v: Value, t: &Type, at: usize) -> PResult<()> {
        if self.m.value_type(v) == t {
            Ok(())
        } else {
            self.err_at(at, format!("value has type {} but {t} was written", self.m.value_type(v)))
        }
    }

    fn memref_element(&self, t: &Type, at: usize) -> PResult<Type> {
        match t.element() {
            Some(e) if t.is_memref() => Ok(e.clone()),
            _ => self.err_at(at, format!("expected a memref type, found {t}")),
        }
    }

    fn opt_attr_dict(&mut self, st: &mut OperationState) -> PResult<()> {
        if self.at("{") {
            for (k, v) in self.parse_attr_dict()? {
                st.attributes.insert(k, v);
            }
        }
        Ok(())
    }

    fn parse_pretty(&mut self, name: &str, start: usize) -> PResult<OperationState> {
        let mut st = OperationState::new(name);
        match name {
            "func.func" => {
                let sym = self.symbol()?;
                self.expect("(")?;
                let mut args = Vec::new();
                if !self.eat(")") {
                    loop {
                        let (n, s) = self.value_name()?;
                        self.expect(":")?;
                        args.push((n, s, self.parse_type()?));
                        if self.eat(")") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                let results = if self.eat("->") { self.parse_result_types()? } else { Vec::new() };
                if self.eat_keyword("attributes") {
                    self.opt_attr_dict(&mut st)?;
                }
                let inputs = args.iter().map(|a| a.2.clone()).collect();
                st = st
                    .attr("sym_name", Attribute::String(sym))
                    .attr("function_type", Attribute::Type(Type::Function { inputs, results }));
                let r = self.parse_region(Some(args))?;
                st.regions.push(r);
            }
            "func.return" | "scf.yield" | "memref.alloca_scope.return" => {
                if self.at("%") {
                    let vstart = self.pos;
                    let mut vs = vec![self.value_use()?];
                    while self.eat(",") {
                        vs.push(self.value_use()?);
                    }
                    self.expect(":")?;
                    let ts = self.parse_type_list_bare()?;
                    if ts.len() != vs.len() {
                        return self.err_at(vstart, "value and type counts differ");
                    }
                    for (v, t) in vs.iter().zip(&ts) {
                        self.check_type(*v, t, vstart)?;
                    }
                    st.operands = vs;
                }
            }
            "arith.constant" => {
                let vstart = self.pos;
                let v = self.parse_attr()?;
                let t = match &v {
                    Attribute::Int(_, t) | Attribute::Float(_, t) => t.clone(),
                    _ => return self.err_at(vstart, "arith.constant needs an integer or float value"),
                };
                st = st.attr("value", v).result(t);
            }
            "memref.alloca" | "memref.alloc" => {
                self.expect("(")?;
                st.operands = self.value_list_until(")")?;
                self.opt_attr_dict(&mut st)?;
                self.expect(":")?;
                let tstart = self.pos;
                let t = self.parse_type()?;
                self.memref_element(&t, tstart)?;
                st = st.result(t);
            }
            "memref.dealloc" => {
                let vs = self.value_use_at()?;
                self.expect(":")?;
                let t = self.parse_type()?;
                self.check_type(vs.0, &t, vs.1)?;
                st.operands.push(vs.0);
            }
            "memref.load" => {
                let (mem, mstart) = self.value_use_at()?;
                self.expect("[")?;
                let idx = self.value_list_until("]")?;
                self.expect(":")?;
                let t = self.parse_type()?;
                self.check_type(mem, &t, mstart)?;
                let e = self.memref_element(&t, mstart)?;
                st.operands.push(mem);
                st.operands.extend(idx);
                st = st.result(e);
            }
            "memref.store" => {
                let (val, _) = self.value_use_at()?;
                self.expect(",")?;
                let (mem, mstart) = self.value_use_at()?;
                self.expect("[")?;
                let idx = self.value_list_until("]")?;
                self.expect(":")?;
                let t = self.parse_type()?;
                self.check_type(mem, &t, mstart)?;
                st.operands.push(val);
                st.operands.push(mem);
                st.operands.extend(idx);
            }
            "memref.dim" => {
                let (mem, mstart) = self.value_use_at()?;
                self.expect(",")?;
                let d = self.value_use()?;
                self.expect(":")?;
                let t = self.parse_type()?;
                self.check_type(mem, &t, mstart)?;
                st = st.operands([mem, d]).result(Type::Index);
            }
            "memref.subview" => {
                let (mem, mstart) = self.value_use_at()?;
                st.operands.push(mem);
                for _ in 0..3 {
                    self.expect("[")?;
                    let part = self.value_list_until("]")?;
                    st.operands.extend(part);
                }
                self.expect(":")?;
                let t = self.parse_type()?;
                self.check_type(mem, &t, mstart)?;
                if !self.eat_keyword("to") {
                    return self.expected("'to'");
                }
                let rstart = self.pos;
                let r = self.parse_type()?;
                self.memref_element(&r, rstart)?;
                st = st.result(r);
            }
            "memref.global" => {
                let sym = self.symbol()?;
                self.expect(":")?;
                let tstart = self.pos;
                let t = self.parse_type()?;
                let elem = self.memref_element(&t, tstart)?;
                st = st.attr("sym_name", Attribute::String(sym));
                if self.eat("=") {
                    let init = self.parse_dense(&elem)?;
                    st = st.attr("initial_value", Attribute::Array(init));
                }
                st = st.attr("type", Attribute::Type(t));
            }
            "memref.get_global" => {
                let sym = self.symbol()?;
                self.expect(":")?;
                let tstart = self.pos;
                let t = self.parse_type()?;
                self.memref_element(&t, tstart)?;
                st = st.attr("name", Attribute::SymbolRef(sym)).result(t);
            }
            "memref.alloca_scope" => {
                if self.eat("->") {
                    st.result_types = self.parse_type_list_parens()?;
                }
                let r = self.parse_region(None)?;
                st.regions.push(r);
            }
            "linalg.reduce" => {
                if !self.eat_keyword("ins") {
                    return self.expected("'ins'");
                }
                self.expect("(")?;
                let (inp, istart) = self.value_use_at()?;
                self.expect(":")?;
                let it = self.parse_type()?;
                self.check_type(inp, &it, istart)?;
                self.expect(")")?;
                if !self.eat_keyword("outs") {
                    return self.expected("'outs'");
                }
                self.expect("(")?;
                let (out, ostart) = self.value_use_at()?;
                self.expect(":")?;
                let ot = self.parse_type()?;
                self.check_type(out, &ot, ostart)?;
                self.expect(")")?;
                if !self.eat_keyword("dimensions") {
                    return self.expected("'dimensions'");
                }
                self.expect("=")?;
                self.expect("[")?;
                let mut dims = Vec::new();
                if !self.eat("]") {
                    loop {
                        dims.push(self.integer()?);
                        if self.eat("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                self.expect("(")?;
                let mut args = Vec::new();
                if !self.eat(")") {
                    loop {
                        let (n, s) = self.value_name()?;
                        self.expect(":")?;
                        args.push((n, s, self.parse_type()?));
                        if self.eat(")") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                let r = self.parse_region(Some(args))?;
                st = st
                    .operands([inp, out])
                    .attr("dimensions", Attribute::DenseIndexArray(dims))
                    .region(r);
            }
            other => {
                return self.err_at(start, format!("'{other}' has no custom form; use the generic \"{other}\"(...) form"));
            }
        }
        Ok(st)
    }

    fn value_use_at(&mut self) -> PResult<(Value, usize)> {
        self.skip_ws();
        let start = self.pos;
        Ok((self.value_use()?, start))
    }

    /// `dense<[a, b, ...]>` or `dense<a>` with elements of type `elem`.
    fn parse_dense(&mut self, elem: &Type) -> PResult<Vec<Attribute>> {
        if !self.eat_keyword("dense") {
            return self.expected("'dense'");
        }
        self.expect("<")?;
        let mut raw = Vec::new();
        if self.eat("[") {
            if !self.eat("]") {
                loop {
                    raw.push(self.dense_element(elem)?);
                    if self.eat("]") {
                        break;
                    }
                    self.expect(",")?;
                }
            }
        } else {
            raw.push(self.dense_element(elem)?);
        }
        self.expect(">")?;
        Ok(raw)
    }

    fn dense_element(&mut self, elem: &Type) -> PResult<Attribute> {
        self.skip_ws();
        let start = self.pos;
        let a = match self.parse_number_attr()? {
            Attribute::Int(v, _) if elem.is_float() => Attribute::Float(v as f64, elem.clone()),
            Attribute::Float(v, _) if elem.is_float() => Attribute::Float(v, elem.clone()),
            Attribute::Int(v, _) if elem.is_integer() || elem.is_index() => Attribute::Int(v, elem.clone()),
            _ => return self.err_at(start, format!("initializer element does not match {elem}")),
        };
        if !a.int_fits() {
            return self.err_at(start, "initializer element out of range");
        }
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_empty_module() {
        let m = parse_module("").unwrap();
        assert!(m.functions().is_empty());
        let m = parse_module("  // only a comment\n").unwrap();
        assert!(m.top_level_ops().is_empty());
    }

    #[test]
    fn undefined_value_is_named() {
        let err = parse_module("func.func @f() {\n  %1 = \"arith.addi\"(%x, %x) : (i32, i32) -> i32\n  func.return\n}").unwrap_err();
        assert!(err.message.contains("%x"), "{err}");
        assert_eq!(err.span.line, 2);
    }

    #[test]
    fn duplicate_value_is_rejected() {
        let err = parse_module(
            "func.func @f() {\n  %a = arith.constant 1 : i32\n  %a = arith.constant 2 : i32\n  func.return\n}",
        )
        .unwrap_err();
        assert!(err.message.contains("redefinition"));
    }

    #[test]
    fn types_parse() {
        let m = parse_module(
            "func.func @f(%a: memref<?x10xf64>, %b: !fir.ref<!fir.heap<!fir.array<?xi32>>>, %c: !fir.type<pt{a:i32,b:f64}>, %d: memref<memref<?xi32>>) {\n  func.return\n}",
        )
        .unwrap();
        let f = m.functions()[0];
        let b = m.entry_block(f).unwrap();
        assert_eq!(m.block(b).args[0].to_string(), "memref<?x10xf64>");
        assert_eq!(m.block(b).args[1].to_string(), "!fir.ref<!fir.heap<!fir.array<?xi32>>>");
        assert_eq!(m.block(b).args[2].to_string(), "!fir.type<pt{a:i32,b:f64}>");
        assert_eq!(m.block(b).args[3].to_string(), "memref<memref<?xi32>>");
    }

    #[test]
    fn spans_stay_in_bounds() {
        for text in ["func.func @f(", "\"", "%", "func.func @f() { %0 = arith.constant 99999999999999999999 : i64 }", "memref<"] {
            let err = parse_module(text).unwrap_err();
            assert!(err.span.end <= text.len());
            assert!(err.span.start <= err.span.end);
        }
    }
}
