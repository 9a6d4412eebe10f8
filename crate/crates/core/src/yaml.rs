//! A small YAML-compatible document reader/writer.
//!
//! Supports the subset used by pipeline and search-space configs: block
//! mappings and sequences (space indentation only), flow sequences and
//! mappings, `(a, b)` tuples (read as two-element sequences), quoted and
//! plain scalars, and `#` comments. Mappings keep document order and may
//! repeat keys; callers decide whether a repeat is meaningful.

use std::fmt::{self, Write as _};

/// A parsed document node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Seq(Vec<Node>),
    Map(Vec<(String, Node)>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {col}: {msg}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl SyntaxError {
    fn new(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Self {
            line,
            col,
            msg: msg.into(),
        }
    }
}

impl Node {
    /// First value stored under `key`, if this is a mapping.
    pub fn get(&self, key: &str) -> Option<&Node> {
        match self {
            Node::Map(entries) => entries.iter().find(|(k, _)| k == key).map(|(_, v)| v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Node::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Node::Int(i) => Some(*i),
            Node::Float(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Some(*f as i64),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Node::Int(i) => Some(*i as f64),
            Node::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Node::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_seq(&self) -> Option<&[Node]> {
        match self {
            Node::Seq(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&[(String, Node)]> {
        match self {
            Node::Map(entries) => Some(entries),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Node::Null)
    }

    /// Short type label used in error messages.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Node::Null => "null",
            Node::Bool(_) => "bool",
            Node::Int(_) => "int",
            Node::Float(_) => "float",
            Node::Str(_) => "string",
            Node::Seq(_) => "sequence",
            Node::Map(_) => "mapping",
        }
    }

    /// Converts to a JSON value. Mapping repeats keep the last value.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            Node::Null => Value::Null,
            Node::Bool(b) => Value::Bool(*b),
            Node::Int(i) => Value::from(*i),
            Node::Float(f) => serde_json::Number::from_f64(*f)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            Node::Str(s) => Value::String(s.clone()),
            Node::Seq(items) => Value::Array(items.iter().map(Node::to_json).collect()),
            Node::Map(entries) => Value::Object(
                entries
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_json()))
                    .collect(),
            ),
        }
    }

    pub fn from_json(value: &serde_json::Value) -> Node {
        use serde_json::Value;
        match value {
            Value::Null => Node::Null,
            Value::Bool(b) => Node::Bool(*b),
            Value::Number(n) => match n.as_i64() {
                Some(i) => Node::Int(i),
                None => Node::Float(n.as_f64().unwrap_or(f64::NAN)),
            },
            Value::String(s) => Node::Str(s.clone()),
            Value::Array(items) => Node::Seq(items.iter().map(Node::from_json).collect()),
            Value::Object(map) => Node::Map(
                map.iter()
                    .map(|(k, v)| (k.clone(), Node::from_json(v)))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone)]
struct Line {
    lineno: usize,
    indent: usize,
    text: String,
}

/// Parses a document. An empty document yields `Node::Null`.
pub fn parse(input: &str) -> Result<Node, SyntaxError> {
    let lines = split_lines(input)?;
    if lines.is_empty() {
        return Ok(Node::Null);
    }
    let mut parser = BlockParser { lines, pos: 0 };
    let indent = parser.lines[0].indent;
    let node = if is_seq_item(&parser.lines[0].text) {
        parser.sequence(indent)?
    } else {
        parser.mapping(indent)?
    };
    if let Some(line) = parser.lines.get(parser.pos) {
        return Err(SyntaxError::new(
            line.lineno,
            line.indent + 1,
            "unexpected content after document root (bad indentation?)",
        ));
    }
    Ok(node)
}

fn split_lines(input: &str) -> Result<Vec<Line>, SyntaxError> {
    let mut out = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let lineno = idx + 1;
        let stripped = strip_comment(raw);
        let trimmed_end = stripped.trim_end();
        if trimmed_end.trim().is_empty() {
            continue;
        }
        let indent = trimmed_end.len() - trimmed_end.trim_start().len();
        if let Some(pos) = trimmed_end[..indent].find('\t') {
            return Err(SyntaxError::new(lineno, pos + 1, "tab in indentation"));
        }
        let text = trimmed_end[indent..].to_string();
        if indent == 0 && (text == "---" || text == "...") {
            continue;
        }
        out.push(Line {
            lineno,
            indent,
            text,
        });
    }
    Ok(out)
}

/// Removes a trailing `# comment` that is outside quotes.
fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut prev_space = true;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                } else if c == '\\' && q == '"' {
                    escaped = true;
                } else if c == q {
                    quote = None;
                }
            }
            None => {
                if c == '#' && prev_space {
                    return &line[..i];
                }
                if (c == '"' || c == '\'') && prev_space_or_open(line, i) {
                    quote = Some(c);
                }
            }
        }
        prev_space = c.is_whitespace();
    }
    line
}

fn prev_space_or_open(line: &str, i: usize) -> bool {
    match line[..i].chars().last() {
        None => true,
        Some(c) => c.is_whitespace() || matches!(c, '[' | '{' | '(' | ',' | ':' | '-'),
    }
}

struct BlockParser {
    lines: Vec<Line>,
    pos: usize,
}

impl BlockParser {
    fn peek(&self) -> Option<&Line> {
        self.lines.get(self.pos)
    }

    fn block(&mut self, indent: usize) -> Result<Node, SyntaxError> {
        let line = self.peek().expect("block called at end of input");
        if is_seq_item(&line.text) {
            self.sequence(indent)
        } else if split_key(&line.text).is_none()
            && !line.text.starts_with(['[', '{', '(', '"', '\''])
        {
            // Plain scalar on its own lines, folded with spaces.
            let (lineno, col) = (line.lineno, line.indent);
            let mut parts = Vec::new();
            while let Some(next) = self.peek().filter(|l| l.indent >= indent) {
                parts.push(next.text.trim().to_string());
                self.pos += 1;
            }
            self.inline_value(parts.join(" "), lineno, col)
        } else if split_key(&line.text).is_none() {
            let (text, lineno, col) = (line.text.clone(), line.lineno, line.indent);
            self.pos += 1;
            self.inline_value(text, lineno, col)
        } else {
            self.mapping(indent)
        }
    }

    fn sequence(&mut self, indent: usize) -> Result<Node, SyntaxError> {
        let mut items = Vec::new();
        while let Some(line) = self.peek() {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(SyntaxError::new(
                    line.lineno,
                    line.indent + 1,
                    "unexpected indentation in sequence",
                ));
            }
            if !is_seq_item(&line.text) {
                break;
            }
            let lineno = line.lineno;
            let rest = line.text[1..].to_string();
            let content = rest.trim_start();
            if content.is_empty() {
                self.pos += 1;
                match self.peek() {
                    Some(next) if next.indent > indent => {
                        let child_indent = next.indent;
                        items.push(self.block(child_indent)?);
                    }
                    _ => items.push(Node::Null),
                }
                continue;
            }
            let offset = 1 + (rest.len() - content.len());
            let child_indent = indent + offset;
            if is_seq_item(content) || split_key(content).is_some() {
                // Re-home the item content as a block at its own column.
                let content = content.to_string();
                let line = &mut self.lines[self.pos];
                line.indent = child_indent;
                line.text = content;
                items.push(self.block(child_indent)?);
            } else {
                let text = content.to_string();
                self.pos += 1;
                items.push(self.inline_value(text, lineno, child_indent)?);
            }
        }
        Ok(Node::Seq(items))
    }

    fn mapping(&mut self, indent: usize) -> Result<Node, SyntaxError> {
        let mut entries = Vec::new();
        while let Some(line) = self.peek() {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(SyntaxError::new(
                    line.lineno,
                    line.indent + 1,
                    "unexpected indentation in mapping",
                ));
            }
            if is_seq_item(&line.text) {
                return Err(SyntaxError::new(
                    line.lineno,
                    line.indent + 1,
                    "sequence item where a mapping key was expected",
                ));
            }
            let lineno = line.lineno;
            let (key, rest, rest_col) = match split_key(&line.text) {
                Some((k, r, c)) => (k, r.to_string(), c),
                None => {
                    return Err(SyntaxError::new(
                        lineno,
                        indent + 1,
                        format!("expected `key: value`, found `{}`", line.text),
                    ))
                }
            };
            let key = unquote_key(&key).map_err(|m| SyntaxError::new(lineno, indent + 1, m))?;
            self.pos += 1;
            let value = if rest.trim().is_empty() {
                match self.peek() {
                    Some(next) if next.indent > indent => {
                        let child_indent = next.indent;
                        self.block(child_indent)?
                    }
                    // `key:` followed by a sequence at the same column.
                    Some(next) if next.indent == indent && is_seq_item(&next.text) => {
                        self.sequence(indent)?
                    }
                    _ => Node::Null,
                }
            } else {
                self.inline_value(rest, lineno, indent + rest_col)?
            };
            entries.push((key, value));
        }
        Ok(Node::Map(entries))
    }

    /// Parses an inline value, pulling continuation lines for unbalanced flow collections.
    fn inline_value(
        &mut self,
        text: String,
        lineno: usize,
        col: usize,
    ) -> Result<Node, SyntaxError> {
        let mut text = text.trim().to_string();
        let opens_flow = text.starts_with(['[', '{', '(']);
        if opens_flow {
            while bracket_depth(&text) > 0 {
                match self.peek() {
                    Some(next) => {
                        text.push(' ');
                        text.push_str(next.text.trim());
                        self.pos += 1;
                    }
                    None => {
                        return Err(SyntaxError::new(
                            lineno,
                            col + 1,
                            "unterminated flow collection",
                        ))
                    }
                }
            }
        }
        let mut flow = FlowParser {
            chars: text.chars().collect(),
            pos: 0,
            lineno,
            col,
        };
        if opens_flow || text.starts_with(['"', '\'']) {
            let node = flow.value(false)?;
            flow.skip_ws();
            if flow.pos < flow.chars.len() {
                return Err(flow.err("trailing characters after value"));
            }
            Ok(node)
        } else {
            Ok(resolve_plain(&text))
        }
    }
}

fn is_seq_item(text: &str) -> bool {
    text == "-" || text.starts_with("- ")
}

/// Splits `key: rest`. Returns (raw key, rest, byte column of rest).
fn split_key(text: &str) -> Option<(String, &str, usize)> {
    if let Some(q) = text.chars().next().filter(|c| *c == '"' || *c == '\'') {
        let end = closing_quote(text, q)?;
        let after = &text[end + 1..];
        let after_trim = after.trim_start();
        if !after_trim.starts_with(':') {
            return None;
        }
        let colon = text.len() - after_trim.len();
        let rest = &text[colon + 1..];
        return Some((text[..=end].to_string(), rest, colon + 1));
    }
    let colon = text.find(':')?;
    let key = &text[..colon];
    if key.is_empty()
        || !key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | '/' | ' '))
        || key.ends_with(' ')
    {
        return None;
    }
    let rest = &text[colon + 1..];
    // Plain `key:value` is accepted only when the value opens a flow collection.
    if !(rest.is_empty() || rest.starts_with(' ') || rest.starts_with(['[', '{', '(', '"', '\''])) {
        return None;
    }
    Some((key.to_string(), rest, colon + 1))
}

/// Byte index of the quote closing the scalar that opens `text`.
fn closing_quote(text: &str, q: char) -> Option<usize> {
    let mut chars = text.char_indices().skip(1).peekable();
    while let Some((i, c)) = chars.next() {
        if q == '"' && c == '\\' {
            chars.next();
        } else if c == q {
            if q == '\'' && chars.peek().is_some_and(|(_, n)| *n == '\'') {
                chars.next();
            } else {
                return Some(i);
            }
        }
    }
    None
}

fn unquote_key(raw: &str) -> Result<String, String> {
    if raw.starts_with(['"', '\'']) {
        let mut p = FlowParser {
            chars: raw.chars().collect(),
            pos: 0,
            lineno: 0,
            col: 0,
        };
        match p.value(false) {
            Ok(Node::Str(s)) => Ok(s),
            _ => Err(format!("malformed quoted key {raw}")),
        }
    } else {
        Ok(raw.to_string())
    }
}

fn bracket_depth(text: &str) -> i64 {
    let mut depth = 0i64;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for c in text.chars() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' && q == '"' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '[' | '{' | '(' => depth += 1,
            ']' | '}' | ')' => depth -= 1,
            _ => {}
        }
    }
    depth
}

/// Resolves an unquoted scalar to its typed node.
pub fn resolve_plain(text: &str) -> Node {
    let t = text.trim();
    match t {
        "" | "~" | "null" | "Null" | "NULL" => return Node::Null,
        "true" | "True" | "TRUE" => return Node::Bool(true),
        "false" | "False" | "FALSE" => return Node::Bool(false),
        ".inf" | "+.inf" | ".Inf" => return Node::Float(f64::INFINITY),
        "-.inf" | "-.Inf" => return Node::Float(f64::NEG_INFINITY),
        ".nan" | ".NaN" => return Node::Float(f64::NAN),
        _ => {}
    }
    if looks_int(t) {
        if let Ok(i) = t.parse::<i64>() {
            return Node::Int(i);
        }
    }
    if looks_float(t) {
        if let Ok(f) = t.parse::<f64>() {
            return Node::Float(f);
        }
    }
    Node::Str(t.to_string())
}

fn looks_int(t: &str) -> bool {
    let digits = t.strip_prefix(['-', '+']).unwrap_or(t);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn looks_float(t: &str) -> bool {
    let body = t.strip_prefix(['-', '+']).unwrap_or(t);
    body.bytes().any(|b| b.is_ascii_digit())
        && body
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'-' | b'+'))
        && body.starts_with(|c: char| c.is_ascii_digit() || c == '.')
}

struct FlowParser {
    chars: Vec<char>,
    pos: usize,
    lineno: usize,
    col: usize,
}

impl FlowParser {
    fn err(&self, msg: &str) -> SyntaxError {
        SyntaxError::new(self.lineno, self.col + self.pos + 1, msg)
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn value(&mut self, in_flow: bool) -> Result<Node, SyntaxError> {
        self.skip_ws();
        match self.chars.get(self.pos) {
            None => Err(self.err("expected a value")),
            Some('[') => self.seq(']'),
            Some('(') => {
                let node = self.seq(')')?;
                match &node {
                    Node::Seq(items) if items.len() == 2 => Ok(node),
                    _ => Err(self.err("tuple must have exactly two elements")),
                }
            }
            Some('{') => self.map(),
            Some('"') => self.double_quoted().map(Node::Str),
            Some('\'') => self.single_quoted().map(Node::Str),
            Some(_) => {
                let start = self.pos;
                while let Some(&c) = self.chars.get(self.pos) {
                    if in_flow && matches!(c, ',' | ']' | '}' | ')') {
                        break;
                    }
                    if in_flow
                        && c == ':'
                        && self
                            .chars
                            .get(self.pos + 1)
                            .is_none_or(|n| n.is_whitespace())
                    {
                        break;
                    }
                    if matches!(c, '[' | '{' | '(') {
                        return Err(self.err("unexpected bracket inside plain scalar"));
                    }
                    self.pos += 1;
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                Ok(resolve_plain(&text))
            }
        }
    }

    fn seq(&mut self, close: char) -> Result<Node, SyntaxError> {
        self.pos += 1;
        let mut items = Vec::new();
        self.skip_ws();
        if self.chars.get(self.pos) == Some(&close) {
            self.pos += 1;
            return Ok(Node::Seq(items));
        }
        loop {
            items.push(self.value(true)?);
            self.skip_ws();
            match self.chars.get(self.pos) {
                Some(',') => {
                    self.pos += 1;
                    self.skip_ws();
                    // Trailing comma.
                    if self.chars.get(self.pos) == Some(&close) && close == ']' {
                        self.pos += 1;
                        return Ok(Node::Seq(items));
                    }
                }
                Some(c) if *c == close => {
                    self.pos += 1;
                    return Ok(Node::Seq(items));
                }
                _ => return Err(self.err(&format!("expected `,` or `{close}`"))),
            }
        }
    }

    fn map(&mut self) -> Result<Node, SyntaxError> {
        self.pos += 1;
        let mut entries = Vec::new();
        self.skip_ws();
        if self.chars.get(self.pos) == Some(&'}') {
            self.pos += 1;
            return Ok(Node::Map(entries));
        }
        loop {
            let key = match self.value(true)? {
                Node::Str(s) => s,
                Node::Int(i) => i.to_string(),
                Node::Bool(b) => b.to_string(),
                _ => return Err(self.err("flow mapping key must be a scalar")),
            };
            self.skip_ws();
            if self.chars.get(self.pos) != Some(&':') {
                return Err(self.err("expected `:` in flow mapping"));
            }
            self.pos += 1;
            let value = self.value(true)?;
            entries.push((key, value));
            self.skip_ws();
            match self.chars.get(self.pos) {
                Some(',') => self.pos += 1,
                Some('}') => {
                    self.pos += 1;
                    return Ok(Node::Map(entries));
                }
                _ => return Err(self.err("expected `,` or `}`")),
            }
        }
    }

    fn double_quoted(&mut self) -> Result<String, SyntaxError> {
        self.pos += 1;
        let mut out = String::new();
        loop {
            let c = *self
                .chars
                .get(self.pos)
                .ok_or_else(|| self.err("unterminated string"))?;
            self.pos += 1;
            match c {
                '"' => return Ok(out),
                '\\' => {
                    let e = *self
                        .chars
                        .get(self.pos)
                        .ok_or_else(|| self.err("unterminated escape"))?;
                    self.pos += 1;
                    match e {
                        'n' => out.push('\n'),
                        't' => out.push('\t'),
                        'r' => out.push('\r'),
                        'b' => out.push('\u{8}'),
                        'f' => out.push('\u{c}'),
                        '0' => out.push('\0'),
                        '"' | '\\' | '/' => out.push(e),
                        'u' => {
                            let cp = self.hex4()?;
                            if (0xD800..0xDC00).contains(&cp) {
                                if self.chars.get(self.pos) != Some(&'\\')
                                    || self.chars.get(self.pos + 1) != Some(&'u')
                                {
                                    return Err(self.err("unpaired surrogate"));
                                }
                                self.pos += 2;
                                let low = self.hex4()?;
                                if !(0xDC00..0xE000).contains(&low) {
                                    return Err(self.err("invalid low surrogate"));
                                }
                                let combined = 0x10000 + ((cp - 0xD800) << 10) + (low - 0xDC00);
                                out.push(
                                    char::from_u32(combined)
                                        .ok_or_else(|| self.err("bad code point"))?,
                                );
                            } else {
                                out.push(
                                    char::from_u32(cp).ok_or_else(|| self.err("bad code point"))?,
                                );
                            }
                        }
                        _ => return Err(self.err("unknown escape")),
                    }
                }
                _ => out.push(c),
            }
        }
    }

    fn hex4(&mut self) -> Result<u32, SyntaxError> {
        let end = self.pos + 4;
        if end > self.chars.len() {
            return Err(self.err("short unicode escape"));
        }
        let s: String = self.chars[self.pos..end].iter().collect();
        self.pos = end;
        u32::from_str_radix(&s, 16).map_err(|_| self.err("bad unicode escape"))
    }

    fn single_quoted(&mut self) -> Result<String, SyntaxError> {
        self.pos += 1;
        let mut out = String::new();
        loop {
            let c = *self
                .chars
                .get(self.pos)
                .ok_or_else(|| self.err("unterminated string"))?;
            self.pos += 1;
            if c == '\'' {
                if self.chars.get(self.pos) == Some(&'\'') {
                    out.push('\'');
                    self.pos += 1;
                } else {
                    return Ok(out);
                }
            } else {
                out.push(c);
            }
        }
    }
}

/// Renders a node as a block document with two-space indentation.
pub fn emit(node: &Node) -> String {
    let mut out = String::new();
    match node {
        Node::Map(entries) if !entries.is_empty() => emit_map(entries, 0, &mut out),
        Node::Seq(items) if !items.is_empty() => emit_seq(items, 0, &mut out),
        Node::Null => {}
        other => {
            out.push_str(&emit_flow(other));
            out.push('\n');
        }
    }
    out
}

fn is_block(node: &Node) -> bool {
    match node {
        Node::Map(e) => !e.is_empty(),
        Node::Seq(items) => items
            .iter()
            .any(|i| matches!(i, Node::Map(e) if !e.is_empty())),
        _ => false,
    }
}

fn emit_map(entries: &[(String, Node)], indent: usize, out: &mut String) {
    for (key, value) in entries {
        let _ = write!(out, "{:indent$}{}:", "", emit_key(key));
        emit_value(value, indent, out);
    }
}

fn emit_value(value: &Node, indent: usize, out: &mut String) {
    if is_block(value) {
        out.push('\n');
        match value {
            Node::Map(e) => emit_map(e, indent + 2, out),
            Node::Seq(items) => emit_seq(items, indent + 2, out),
            _ => unreachable!(),
        }
    } else {
        out.push(' ');
        out.push_str(&emit_flow(value));
        out.push('\n');
    }
}

fn emit_seq(items: &[Node], indent: usize, out: &mut String) {
    for item in items {
        match item {
            Node::Map(entries) if !entries.is_empty() => {
                let (first_key, first_val) = &entries[0];
                let _ = write!(out, "{:indent$}- {}:", "", emit_key(first_key));
                emit_value(first_val, indent + 2, out);
                emit_map(&entries[1..], indent + 2, out);
            }
            Node::Seq(inner) if is_block(item) => {
                let _ = writeln!(out, "{:indent$}-", "");
                emit_seq(inner, indent + 2, out);
            }
            other => {
                let _ = writeln!(out, "{:indent$}- {}", "", emit_flow(other));
            }
        }
    }
}

fn emit_key(key: &str) -> String {
    let plain = !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | '/'))
        && matches!(resolve_plain(key), Node::Str(_));
    if plain {
        key.to_string()
    } else {
        quote(key)
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

/// Renders a node in flow style on one line.
pub fn emit_flow(node: &Node) -> String {
    match node {
        Node::Null => "null".to_string(),
        Node::Bool(b) => b.to_string(),
        Node::Int(i) => i.to_string(),
        Node::Float(f) => format_float(*f),
        Node::Str(s) => quote(s),
        Node::Seq(items) => {
            let inner: Vec<String> = items.iter().map(emit_flow).collect();
            format!("[{}]", inner.join(", "))
        }
        Node::Map(entries) => {
            let inner: Vec<String> = entries
                .iter()
                .map(|(k, v)| format!("{}: {}", quote(k), emit_flow(v)))
                .collect();
            format!("{{{}}}", inner.join(", "))
        }
    }
}

/// Shortest round-trip float text that re-reads as a float.
pub fn format_float(f: f64) -> String {
    if f.is_nan() {
        ".nan".to_string()
    } else if f == f64::INFINITY {
        ".inf".to_string()
    } else if f == f64::NEG_INFINITY {
        "-.inf".to_string()
    } else {
        format!("{f:?}")
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&emit_flow(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_mappings_and_sequences() {
        let doc = "\
general:
  worker:
    devices_per_job: 1
pipeline: [hpo]
hpo:
  search_space:
    hyperparameters:
      - key: dataset.batch_size
        type: INT_CAT
        range: [8, 16, 32]
      - key: lr
        type: FLOAT_EXP
        range: [0.00001, 0.1]   # log scale
";
        let node = parse(doc).unwrap();
        assert_eq!(
            node.get("general")
                .unwrap()
                .get("worker")
                .unwrap()
                .get("devices_per_job"),
            Some(&Node::Int(1))
        );
        assert_eq!(
            node.get("pipeline"),
            Some(&Node::Seq(vec![Node::Str("hpo".into())]))
        );
        let hps = node
            .get("hpo")
            .unwrap()
            .get("search_space")
            .unwrap()
            .get("hyperparameters")
            .unwrap();
        let hps = hps.as_seq().unwrap();
        assert_eq!(hps.len(), 2);
        assert_eq!(
            hps[1].get("range").unwrap().as_seq().unwrap()[0],
            Node::Float(1e-5)
        );
    }

    #[test]
    fn tuples_become_pairs_and_flow_can_span_lines() {
        let doc = "range: [(0,16), (0,16),\n   (0,32)]\nstrides: (1,2)\n";
        let node = parse(doc).unwrap();
        let r = node.get("range").unwrap().as_seq().unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[2], Node::Seq(vec![Node::Int(0), Node::Int(32)]));
        assert_eq!(
            node.get("strides").unwrap(),
            &Node::Seq(vec![Node::Int(1), Node::Int(2)])
        );
    }

    #[test]
    fn key_without_space_before_flow_value() {
        let node = parse("range:[(0,16), (0,32)]\n").unwrap();
        assert_eq!(node.get("range").unwrap().as_seq().unwrap().len(), 2);
    }

    #[test]
    fn scalars_resolve() {
        assert_eq!(resolve_plain("1e-5"), Node::Float(1e-5));
        assert_eq!(resolve_plain("-3"), Node::Int(-3));
        assert_eq!(resolve_plain("SGD"), Node::Str("SGD".into()));
        assert_eq!(resolve_plain("true"), Node::Bool(true));
        assert_eq!(resolve_plain("~"), Node::Null);
        assert_eq!(resolve_plain("e5"), Node::Str("e5".into()));
        assert_eq!(resolve_plain("1.2.3"), Node::Str("1.2.3".into()));
    }

    #[test]
    fn quoted_strings() {
        let node = parse("a: 'it''s'\nb: \"x\\ny # not comment\"\nc: [\"SGD\", 'Adam']\n").unwrap();
        assert_eq!(node.get("a").unwrap().as_str(), Some("it's"));
        assert_eq!(node.get("b").unwrap().as_str(), Some("x\ny # not comment"));
        assert_eq!(
            node.get("c").unwrap().as_seq().unwrap()[1].as_str(),
            Some("Adam")
        );
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse("a: 1\n  b: 2\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse("a: [1, 2\n").unwrap_err();
        assert_eq!(err.line, 1);
        let err = parse("a:\n\tb: 1\n").unwrap_err();
        assert!(err.msg.contains("tab"));
        let err = parse("just words\n").unwrap_err();
        assert_eq!((err.line, err.col), (1, 1));
        let node = parse("\"a\\\": b\": 1\n'it''s': 2\n").unwrap();
        assert_eq!(node.get("a\": b").unwrap(), &Node::Int(1));
        assert_eq!(node.get("it's").unwrap(), &Node::Int(2));
        let node = parse("a: \"q\\\" # kept\" # dropped\n").unwrap();
        assert_eq!(node.get("a").unwrap().as_str(), Some("q\" # kept"));
        let node = parse("a:\n  folded\n  words\nb: 1\n").unwrap();
        assert_eq!(node.get("a").unwrap().as_str(), Some("folded words"));
        assert!(parse("a: (1, 2, 3)\n").is_err());
    }

    #[test]
    fn sequence_under_key_at_same_indent() {
        let node = parse("items:\n- 1\n- 2\nnext: x\n").unwrap();
        assert_eq!(node.get("items").unwrap().as_seq().unwrap().len(), 2);
        assert_eq!(node.get("next").unwrap().as_str(), Some("x"));
    }

    #[test]
    fn emit_then_parse_is_identity() {
        let node = Node::Map(vec![
            ("name".into(), Node::Str("true".into())),
            (
                "params".into(),
                Node::Seq(vec![
                    Node::Map(vec![
                        ("key".into(), Node::Str("a.b".into())),
                        (
                            "range".into(),
                            Node::Seq(vec![Node::Float(1e-5), Node::Float(0.1)]),
                        ),
                    ]),
                    Node::Map(vec![(
                        "nested".into(),
                        Node::Map(vec![("x".into(), Node::Int(-2))]),
                    )]),
                ]),
            ),
            ("empty".into(), Node::Seq(vec![])),
            ("nothing".into(), Node::Null),
            ("odd key".into(), Node::Float(2.0)),
        ]);
        let text = emit(&node);
        assert_eq!(parse(&text).unwrap(), node, "{text}");
    }
}
