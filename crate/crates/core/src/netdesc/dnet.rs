//! The DNet block grammar.
//!
//! A block is a chain of 1–3 stem operators between an input node and an
//! output node, plus optional skip connections. Nodes are numbered
//! `0 = input`, `1..=k` for the stem operators and `k + 1 = output`. The
//! input is always joined into the output by an `Add` (the default
//! connection). Every stem operator but the last maps to `c · ratio`
//! channels; the last maps back to `c`.
//!
//! Specs have a compact code, see `docs/dnet_code.md`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{ModelDescription, NetDescError, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Merge {
    Add,
    Concat,
}

impl Merge {
    pub fn letter(self) -> char {
        match self {
            Merge::Add => 'A',
            Merge::Concat => 'C',
        }
    }

    fn op_name(self) -> &'static str {
        match self {
            Merge::Add => "add",
            Merge::Concat => "concat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Skip {
    pub from: usize,
    pub to: usize,
    pub merge: Merge,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DnetBlockSpec {
    pub stem_ops: Vec<usize>,
    pub ratio: usize,
    pub skips: Vec<Skip>,
}

/// Group count rule of a stem convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Groups {
    Dense,
    Fixed(u64),
    Depthwise,
    /// One group per `n` input channels.
    PerChannels(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnetOp {
    pub name: String,
    pub kernel: u64,
    pub groups: Groups,
    /// A trailing 1x1 convolution after the grouped one.
    pub pointwise: bool,
}

impl DnetOp {
    /// Parses names like `conv3x3`, `conv3x3_g4`, `conv3x3_depthwise`,
    /// `conv3x3_g(c/32)` and `conv3x3_dw_conv1x1`.
    pub fn parse(name: &str) -> Option<DnetOp> {
        let rest = name.strip_prefix("conv")?;
        let (kernel, suffix) = match rest.find('_') {
            Some(i) => (&rest[..i], &rest[i + 1..]),
            None => (rest, ""),
        };
        let (a, b) = kernel.split_once('x')?;
        let k: u64 = a.parse().ok().filter(|k| *k > 0)?;
        if b.parse::<u64>().ok()? != k {
            return None;
        }
        let (groups, pointwise) = match suffix {
            "" => (Groups::Dense, false),
            "depthwise" | "dw" => (Groups::Depthwise, false),
            "dw_conv1x1" | "depthwise+conv1x1" | "depthwise_conv1x1" => (Groups::Depthwise, true),
            s => {
                let g = s.strip_prefix('g')?;
                if let Some(n) = g.strip_prefix("(c/").and_then(|t| t.strip_suffix(')')) {
                    (
                        Groups::PerChannels(n.parse().ok().filter(|n| *n > 0)?),
                        false,
                    )
                } else {
                    (Groups::Fixed(g.parse().ok().filter(|n| *n > 0)?), false)
                }
            }
        };
        Some(DnetOp {
            name: name.to_string(),
            kernel: k,
            groups,
            pointwise,
        })
    }

    fn nominal_groups(&self, c_in: u64) -> u64 {
        match self.groups {
            Groups::Dense => 1,
            Groups::Fixed(g) => g,
            Groups::Depthwise => c_in,
            Groups::PerChannels(n) => (c_in / n).max(1),
        }
    }

    /// Group count that divides both channel counts.
    pub fn effective_groups(&self, c_in: u64, c_out: u64) -> u64 {
        let mid = if self.pointwise { c_in } else { c_out };
        gcd(gcd(self.nominal_groups(c_in), c_in), mid).max(1)
    }
}

/// Positive rational channel ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Ratio {
        let g = gcd(num, den).max(1);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    fn add(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    /// `c · self` when it is a whole number.
    pub fn scale(self, c: u64) -> Option<u64> {
        (c * self.num % self.den == 0).then(|| c * self.num / self.den)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Ratio {
    type Err = String;

    fn from_str(s: &str) -> Result<Ratio, String> {
        let bad = || format!("bad ratio `{s}`");
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => (s.trim().parse().map_err(|_| bad())?, 1),
        };
        if n == 0 || d == 0 {
            return Err(bad());
        }
        Ok(Ratio::new(n, d))
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub const DEFAULT_OPS: [&str; 7] = [
    "conv3x3",
    "conv1x1",
    "conv3x3_g2",
    "conv3x3_g4",
    "conv3x3_depthwise",
    "conv3x3_g(c/32)",
    "conv3x3_dw_conv1x1",
];

pub const DEFAULT_RATIOS: [&str; 5] = ["1/4", "1/2", "1", "2", "4"];

pub const DEFAULT_MAX_STEM: usize = 3;

/// Operator vocabulary and ratio options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnetGrammar {
    pub ops: Vec<DnetOp>,
    pub ratios: Vec<Ratio>,
    pub max_stem: usize,
}

impl Default for DnetGrammar {
    fn default() -> Self {
        DnetGrammar {
            ops: DEFAULT_OPS
                .iter()
                .map(|n| DnetOp::parse(n).expect("default op"))
                .collect(),
            ratios: DEFAULT_RATIOS
                .iter()
                .map(|r| r.parse().expect("default ratio"))
                .collect(),
            max_stem: DEFAULT_MAX_STEM,
        }
    }
}

impl DnetGrammar {
    pub fn new(ops: &[String], ratios: &[String], max_stem: usize) -> Result<DnetGrammar, String> {
        let ops = ops
            .iter()
            .map(|n| DnetOp::parse(n).ok_or_else(|| format!("unknown stem operator `{n}`")))
            .collect::<Result<Vec<_>, _>>()?;
        let ratios = ratios
            .iter()
            .map(|r| r.parse())
            .collect::<Result<Vec<Ratio>, _>>()?;
        if ops.is_empty() || ratios.is_empty() || max_stem == 0 {
            return Err("vocabulary, ratios and max stem must be nonempty".into());
        }
        Ok(DnetGrammar {
            ops,
            ratios,
            max_stem,
        })
    }

    /// A grammar of the given sizes, cycling through the default entries.
    pub fn sized(vocab: usize, ratios: usize, max_stem: usize) -> DnetGrammar {
        let d = DnetGrammar::default();
        DnetGrammar {
            ops: (0..vocab)
                .map(|i| {
                    let mut op = d.ops[i % d.ops.len()].clone();
                    if i >= d.ops.len() {
                        op.name = format!("{}_{}", op.name, i / d.ops.len());
                    }
                    op
                })
                .collect(),
            ratios: (0..ratios)
                .map(|i| d.ratios[(i + 2) % d.ratios.len()])
                .collect(),
            max_stem,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DnetRule {
    EmptyStem,
    StemTooLong,
    UnknownOp,
    UnknownRatio,
    SkipOutOfRange,
    NonDisjunctSkip,
    DefaultConnection,
    DuplicateSkip,
    ConflictingMerge,
    ChannelMismatch,
}

impl DnetRule {
    pub fn description(self) -> &'static str {
        match self {
            DnetRule::EmptyStem => "empty stem",
            DnetRule::StemTooLong => "stem length > max",
            DnetRule::UnknownOp => "unknown stem operator",
            DnetRule::UnknownRatio => "unknown channel ratio",
            DnetRule::SkipOutOfRange => "skip endpoint out of range",
            DnetRule::NonDisjunctSkip => "non-disjunct skip",
            DnetRule::DefaultConnection => "skip duplicates the default connection",
            DnetRule::DuplicateSkip => "duplicate skip",
            DnetRule::ConflictingMerge => "conflicting merge ops at one join",
            DnetRule::ChannelMismatch => "channel mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnetDiagnostic {
    pub rule: DnetRule,
    pub detail: String,
}

impl fmt::Display for DnetDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.rule.description();
        match self.rule {
            DnetRule::StemTooLong => f.write_str(&self.detail),
            _ => write!(f, "{d}: {}", self.detail),
        }
    }
}

impl DnetBlockSpec {
    pub fn k(&self) -> usize {
        self.stem_ops.len()
    }

    pub fn output_node(&self) -> usize {
        self.k() + 1
    }

    /// Merge op at each join point with at least one skip, plus the output.
    pub fn joins(&self) -> BTreeMap<usize, Merge> {
        let mut m = BTreeMap::new();
        for s in &self.skips {
            m.entry(s.to).or_insert(s.merge);
        }
        m.insert(
            self.output_node(),
            m.get(&self.output_node()).copied().unwrap_or(Merge::Add),
        );
        m
    }

    pub fn code(&self) -> String {
        let ops: Vec<String> = self.stem_ops.iter().map(usize::to_string).collect();
        let mut skips = self.skips.clone();
        skips.sort();
        let mut out = format!("S{}:{}_R:{}_K:", self.k(), ops.join("-"), self.ratio);
        for s in skips {
            out.push_str(&format!("({},{}){}", s.from, s.to, s.merge.letter()));
        }
        out
    }

    /// Parses a block code. Only the canonical form is accepted, so
    /// `parse(c).code() == c` for every accepted `c`.
    pub fn parse(code: &str) -> Result<DnetBlockSpec, NetDescError> {
        let mut p = CodeParser {
            s: code.as_bytes(),
            i: 0,
            code,
        };
        p.expect(b"S")?;
        let k = p.number()?;
        p.expect(b":")?;
        let mut stem_ops = vec![p.number()?];
        while p.peek() == Some(b'-') {
            p.i += 1;
            stem_ops.push(p.number()?);
        }
        if stem_ops.len() != k {
            return Err(p.err(format!(
                "declares {k} stem ops but lists {}",
                stem_ops.len()
            )));
        }
        p.expect(b"_R:")?;
        let ratio = p.number()?;
        p.expect(b"_K:")?;
        let mut skips: Vec<Skip> = Vec::new();
        while p.peek().is_some() {
            p.expect(b"(")?;
            let from = p.number()?;
            p.expect(b",")?;
            let to = p.number()?;
            p.expect(b")")?;
            let merge = match p.peek() {
                Some(b'A') => Merge::Add,
                Some(b'C') => Merge::Concat,
                _ => return Err(p.err("expected merge letter A or C".into())),
            };
            p.i += 1;
            if let Some(last) = skips.last() {
                if (last.from, last.to) >= (from, to) {
                    return Err(p.err("skips not in strictly ascending order".into()));
                }
            }
            skips.push(Skip { from, to, merge });
        }
        Ok(DnetBlockSpec {
            stem_ops,
            ratio,
            skips,
        })
    }
}

impl fmt::Display for DnetBlockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for DnetBlockSpec {
    type Err = NetDescError;

    fn from_str(s: &str) -> Result<Self, NetDescError> {
        DnetBlockSpec::parse(s)
    }
}

struct CodeParser<'a> {
    s: &'a [u8],
    i: usize,
    code: &'a str,
}

impl CodeParser<'_> {
    fn err(&self, msg: String) -> NetDescError {
        NetDescError::BadCode {
            code: self.code.to_string(),
            msg: format!("at byte {}: {msg}", self.i),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.i).copied()
    }

    fn expect(&mut self, lit: &[u8]) -> Result<(), NetDescError> {
        if self.s[self.i..].starts_with(lit) {
            self.i += lit.len();
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", String::from_utf8_lossy(lit))))
        }
    }

    fn number(&mut self) -> Result<usize, NetDescError> {
        let start = self.i;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.i += 1;
        }
        let digits = &self.code[start..self.i];
        if digits.is_empty() {
            return Err(self.err("expected a number".into()));
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return Err(self.err("leading zero".into()));
        }
        digits
            .parse()
            .map_err(|_| self.err("number too large".into()))
    }
}

/// Output width of each node in units of the block input width.
fn widths(spec: &DnetBlockSpec, grammar: &DnetGrammar) -> Option<Vec<Ratio>> {
    let k = spec.k();
    let r = *grammar.ratios.get(spec.ratio)?;
    let mut w = vec![Ratio::ONE; k + 2];
    for wi in w.iter_mut().take(k).skip(1) {
        *wi = r;
    }
    let joins = spec.joins();
    let mut merged = Ratio::ONE;
    if let Some(Merge::Concat) = joins.get(&(k + 1)) {
        merged = w[k];
        for s in spec.skips.iter().filter(|s| s.to == k + 1) {
            merged = merged.add(w[s.from]);
        }
        merged = merged.add(Ratio::ONE);
    }
    w[k + 1] = merged;
    Some(w)
}

pub fn validate_dnet_block(spec: &DnetBlockSpec, grammar: &DnetGrammar) -> Vec<DnetDiagnostic> {
    let mut out = Vec::new();
    let mut diag = |rule, detail: String| out.push(DnetDiagnostic { rule, detail });
    let k = spec.k();
    if k == 0 {
        diag(
            DnetRule::EmptyStem,
            "at least one stem operator is required".into(),
        );
    }
    if k > grammar.max_stem {
        diag(
            DnetRule::StemTooLong,
            format!("stem length > {}: {k} operators", grammar.max_stem),
        );
    }
    for (i, &op) in spec.stem_ops.iter().enumerate() {
        if op >= grammar.ops.len() {
            diag(
                DnetRule::UnknownOp,
                format!(
                    "op{} index {op} ≥ vocabulary size {}",
                    i + 1,
                    grammar.ops.len()
                ),
            );
        }
    }
    if spec.ratio >= grammar.ratios.len() {
        diag(
            DnetRule::UnknownRatio,
            format!("index {} ≥ {} options", spec.ratio, grammar.ratios.len()),
        );
    }
    let mut seen = std::collections::HashSet::new();
    let mut merges: BTreeMap<usize, Merge> = BTreeMap::new();
    for s in &spec.skips {
        let pair = format!("({},{})", s.from, s.to);
        if s.to > k + 1 || s.from >= s.to {
            diag(
                DnetRule::SkipOutOfRange,
                format!("{pair} with {} nodes", k + 2),
            );
            continue;
        }
        if s.to - s.from < 2 {
            diag(
                DnetRule::NonDisjunctSkip,
                format!("{pair} joins adjacent nodes"),
            );
        }
        if s.from == 0 && s.to == k + 1 {
            diag(DnetRule::DefaultConnection, pair.clone());
        }
        if !seen.insert((s.from, s.to)) {
            diag(DnetRule::DuplicateSkip, pair.clone());
        }
        match merges.get(&s.to) {
            Some(m) if *m != s.merge => diag(DnetRule::ConflictingMerge, format!("node {}", s.to)),
            _ => {
                merges.insert(s.to, s.merge);
            }
        }
    }
    drop(diag);
    if out.is_empty() {
        if let Some(w) = widths(spec, grammar).filter(|w| w[k + 1] != Ratio::ONE) {
            out.push(DnetDiagnostic {
                rule: DnetRule::ChannelMismatch,
                detail: format!("output carries {} × input channels", w[k + 1]),
            });
        }
    }
    out
}

struct Renderer {
    block: ModelDescription,
    resolution: Option<u64>,
}

impl Renderer {
    fn push(&mut self, name: &str, op: &str, inputs: &[&str], c_in: u64, c_out: u64) {
        let mut n = ModelDescription::new(name, NodeKind::Operator)
            .with_attr("op", op)
            .with_attr(
                "inputs",
                Json::from(inputs.iter().map(|s| s.to_string()).collect::<Vec<_>>()),
            )
            .with_attr("inchannels", c_in)
            .with_attr("outchannels", c_out);
        if let Some(r) = self.resolution {
            n = n.with_attr("resolution", r);
        }
        self.block.children.push(n);
    }

    fn push_conv(&mut self, name: &str, op: &DnetOp, input: &str, c_in: u64, c_out: u64) {
        self.push(name, &op.name, &[input], c_in, c_out);
        let node = self.block.children.last_mut().expect("just pushed");
        node.attrs.insert("kernel".into(), op.kernel.into());
        node.attrs
            .insert("groups".into(), op.effective_groups(c_in, c_out).into());
        if op.pointwise {
            node.attrs.insert("pointwise".into(), true.into());
        }
    }
}

/// Renders a valid spec as a block of operator nodes. Every operator lists
/// its producers in an `inputs` attribute.
pub fn render_dnet_block(
    spec: &DnetBlockSpec,
    grammar: &DnetGrammar,
    in_channels: u64,
    resolution: Option<u64>,
) -> Result<ModelDescription, NetDescError> {
    let diags = validate_dnet_block(spec, grammar);
    if !diags.is_empty() {
        let msgs: Vec<String> = diags.iter().map(ToString::to_string).collect();
        return Err(NetDescError::Invalid(msgs.join("; ")));
    }
    let k = spec.k();
    let c = in_channels;
    let ratio = grammar.ratios[spec.ratio];
    let mid = ratio.scale(c).filter(|m| *m > 0).ok_or_else(|| {
        NetDescError::Channels(format!("{c} × {ratio} is not a whole channel count"))
    })?;
    let width = |i: usize| if i == 0 || i >= k { c } else { mid };
    let joins = spec.joins();

    let mut r = Renderer {
        block: ModelDescription::new("block", NodeKind::Block)
            .with_attr("code", spec.code())
            .with_attr("inchannels", c)
            .with_attr("outchannels", c),
        resolution,
    };
    r.push("input", "input", &[], c, c);
    let mut out_name: Vec<String> = vec!["input".into()];

    for j in 1..=k + 1 {
        let mut streams: Vec<(String, u64)> = vec![(out_name[j - 1].clone(), width(j - 1))];
        if j == k + 1 {
            streams.push(("input".into(), c));
        }
        let mut skips: Vec<_> = spec.skips.iter().filter(|s| s.to == j).collect();
        skips.sort();
        for s in skips {
            streams.push((out_name[s.from].clone(), width(s.from)));
        }
        let (mut src, mut c_in) = streams[0].clone();
        if streams.len() > 1 {
            let merge = joins[&j];
            let target = streams[0].1;
            if merge == Merge::Add {
                for (i, (name, w)) in streams.iter_mut().enumerate().skip(1) {
                    if *w != target {
                        let a = format!("adapter{}_{j}", i);
                        let conv1 = DnetOp::parse("conv1x1").expect("conv1x1");
                        r.push_conv(&a, &conv1, name, *w, target);
                        *name = a;
                        *w = target;
                    }
                }
            }
            let merged = match merge {
                Merge::Add => target,
                Merge::Concat => streams.iter().map(|s| s.1).sum(),
            };
            let m = format!("merge{j}");
            let inputs: Vec<&str> = streams.iter().map(|s| s.0.as_str()).collect();
            r.push(&m, merge.op_name(), &inputs, merged, merged);
            let relu = format!("merge{j}_relu");
            r.push(&relu, "relu", &[&m], merged, merged);
            src = relu;
            c_in = merged;
        }
        if j == k + 1 {
            if c_in != c {
                return Err(NetDescError::Channels(format!(
                    "output carries {c_in} channels, input {c}"
                )));
            }
            r.push("output", "output", &[&src], c, c);
            break;
        }
        let op = &grammar.ops[spec.stem_ops[j - 1]];
        let c_out = width(j);
        let name = format!("op{j}");
        r.push_conv(&name, op, &src, c_in, c_out);
        let bn = format!("op{j}_bn");
        r.push(&bn, "batchnorm", &[&name], c_out, c_out);
        let next_merges = j + 1 == k + 1 || spec.skips.iter().any(|s| s.to == j + 1);
        if next_merges {
            out_name.push(bn);
        } else {
            let relu = format!("op{j}_relu");
            r.push(&relu, "relu", &[&bn], c_out, c_out);
            out_name.push(relu);
        }
    }
    Ok(r.block)
}

/// Candidate skip pairs for a stem of length `k`, ascending.
fn candidate_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for from in 0..=k + 1 {
        for to in from + 2..=k + 1 {
            if (from, to) != (0, k + 1) {
                v.push((from, to));
            }
        }
    }
    v
}

/// Number of skip/merge configurations for a stem of length `k`.
pub fn skip_configurations(k: usize) -> u128 {
    let mut into: BTreeMap<usize, u32> = BTreeMap::new();
    for (_, to) in candidate_pairs(k) {
        *into.entry(to).or_default() += 1;
    }
    into.iter()
        .map(|(&to, &n)| {
            let merges = if to == k + 1 { 1 } else { 2 };
            1 + ((1u128 << n) - 1) * merges
        })
        .product()
}

/// Number of valid specs for the given grammar sizes.
pub fn count_dnet_blocks(vocab: usize, ratios: usize, max_stem: usize) -> u128 {
    (1..=max_stem)
        .map(|k| (vocab as u128).pow(k as u32) * ratios as u128 * skip_configurations(k))
        .sum()
}

/// Canonical-order iterator over every valid spec.
///
/// Order: stem length, stem op indices (lexicographic), ratio index, skip
/// subset (bitmask over ascending candidate pairs), then merge choices per
/// stem join (Add before Concat). Output joins are always Add.
#[derive(Debug, Clone)]
pub struct DnetBlockIter {
    vocab: usize,
    ratios: usize,
    max_stem: usize,
    k: usize,
    pairs: Vec<(usize, usize)>,
    ops: Vec<usize>,
    ratio: usize,
    mask: u64,
    merge: u64,
    done: bool,
}

impl DnetBlockIter {
    fn start_k(&mut self, k: usize) {
        self.k = k;
        self.pairs = candidate_pairs(k);
        assert!(
            self.pairs.len() < 64,
            "stem length {k} too large to enumerate"
        );
        self.ops = vec![0; k];
        self.ratio = 0;
        self.mask = 0;
        self.merge = 0;
    }

    fn stem_joins(&self) -> Vec<usize> {
        let mut joins: Vec<usize> = (0..self.pairs.len())
            .filter(|i| self.mask >> i & 1 == 1)
            .map(|i| self.pairs[i].1)
            .filter(|&t| t <= self.k)
            .collect();
        joins.sort_unstable();
        joins.dedup();
        joins
    }

    fn current(&self) -> DnetBlockSpec {
        let joins = self.stem_joins();
        let skips = (0..self.pairs.len())
            .filter(|i| self.mask >> i & 1 == 1)
            .map(|i| {
                let (from, to) = self.pairs[i];
                let merge = match joins.iter().position(|&j| j == to) {
                    Some(b) if self.merge >> b & 1 == 1 => Merge::Concat,
                    _ => Merge::Add,
                };
                Skip { from, to, merge }
            })
            .collect();
        DnetBlockSpec {
            stem_ops: self.ops.clone(),
            ratio: self.ratio,
            skips,
        }
    }

    fn advance(&mut self) {
        self.merge += 1;
        if self.merge < 1 << self.stem_joins().len() {
            return;
        }
        self.merge = 0;
        self.mask += 1;
        if self.mask < 1 << self.pairs.len() {
            return;
        }
        self.mask = 0;
        self.ratio += 1;
        if self.ratio < self.ratios {
            return;
        }
        self.ratio = 0;
        for i in (0..self.k).rev() {
            self.ops[i] += 1;
            if self.ops[i] < self.vocab {
                return;
            }
            self.ops[i] = 0;
        }
        if self.k < self.max_stem {
            self.start_k(self.k + 1);
        } else {
            self.done = true;
        }
    }
}

impl Iterator for DnetBlockIter {
    type Item = DnetBlockSpec;

    fn next(&mut self) -> Option<DnetBlockSpec> {
        if self.done {
            return None;
        }
        let spec = self.current();
        self.advance();
        Some(spec)
    }
}

/// Returns the canonical iterator and the number of specs it yields.
pub fn enumerate_dnet_blocks(
    vocab: usize,
    ratios: usize,
    max_stem: usize,
) -> (DnetBlockIter, u128) {
    let mut it = DnetBlockIter {
        vocab,
        ratios,
        max_stem,
        k: 0,
        pairs: Vec::new(),
        ops: Vec::new(),
        ratio: 0,
        mask: 0,
        merge: 0,
        done: vocab == 0 || ratios == 0 || max_stem == 0,
    };
    if !it.done {
        it.start_k(1);
    }
    (it, count_dnet_blocks(vocab, ratios, max_stem))
}

/// The `n`-th spec in canonical order, without walking the earlier ones
/// stem by stem.
pub fn nth_dnet_block(
    vocab: usize,
    ratios: usize,
    max_stem: usize,
    n: u128,
) -> Option<DnetBlockSpec> {
    let mut rest = n;
    for k in 1..=max_stem {
        let per_k = (vocab as u128).pow(k as u32) * ratios as u128 * skip_configurations(k);
        if rest >= per_k {
            rest -= per_k;
            continue;
        }
        let per_ops = ratios as u128 * skip_configurations(k);
        let mut ops_index = rest / per_ops;
        rest %= per_ops;
        let per_ratio = skip_configurations(k);
        let ratio = (rest / per_ratio) as usize;
        let skip_index = rest % per_ratio;
        let mut ops = vec![0; k];
        for slot in ops.iter_mut().rev() {
            *slot = (ops_index % vocab as u128) as usize;
            ops_index /= vocab as u128;
        }
        let mut it = DnetBlockIter {
            vocab,
            ratios,
            max_stem: k,
            k,
            pairs: Vec::new(),
            ops: Vec::new(),
            ratio: 0,
            mask: 0,
            merge: 0,
            done: false,
        };
        it.start_k(k);
        it.ops = ops;
        it.ratio = ratio;
        return it.nth(skip_index as usize);
    }
    None
}
