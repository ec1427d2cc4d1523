//! Hierarchical gate IR over Clifford+Rz plus a Toffoli macro, with counting and a text format.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

pub type Qubit = usize;

/// Default cap on the number of gates produced by [`expand`].
pub const EXPAND_CAP: u128 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    X(Qubit),
    Y(Qubit),
    Z(Qubit),
    H(Qubit),
    S(Qubit),
    Sdg(Qubit),
    T(Qubit),
    Tdg(Qubit),
    Cnot(Qubit, Qubit),
    Cz(Qubit, Qubit),
    Rz(f64, Qubit),
    /// Toffoli with control polarities; a `false` polarity fires on |0⟩.
    Toffoli { c1: Qubit, p1: bool, c2: Qubit, p2: bool, t: Qubit },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    X,
    Y,
    Z,
    H,
    S,
    Sdg,
    T,
    Tdg,
    Cnot,
    Cz,
    Rz,
    Toffoli,
}

impl GateKind {
    pub const ALL: [GateKind; 12] = [
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::H,
        GateKind::S,
        GateKind::Sdg,
        GateKind::T,
        GateKind::Tdg,
        GateKind::Cnot,
        GateKind::Cz,
        GateKind::Rz,
        GateKind::Toffoli,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::S => "S",
            GateKind::Sdg => "SDG",
            GateKind::T => "T",
            GateKind::Tdg => "TDG",
            GateKind::Cnot => "CNOT",
            GateKind::Cz => "CZ",
            GateKind::Rz => "RZ",
            GateKind::Toffoli => "CCX",
        }
    }

    fn from_name(s: &str) -> Option<GateKind> {
        GateKind::ALL.iter().copied().find(|k| k.name() == s)
    }
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::X(_) => GateKind::X,
            Gate::Y(_) => GateKind::Y,
            Gate::Z(_) => GateKind::Z,
            Gate::H(_) => GateKind::H,
            Gate::S(_) => GateKind::S,
            Gate::Sdg(_) => GateKind::Sdg,
            Gate::T(_) => GateKind::T,
            Gate::Tdg(_) => GateKind::Tdg,
            Gate::Cnot(..) => GateKind::Cnot,
            Gate::Cz(..) => GateKind::Cz,
            Gate::Rz(..) => GateKind::Rz,
            Gate::Toffoli { .. } => GateKind::Toffoli,
        }
    }

    /// Operand list, controls first.
    pub fn qubits(&self) -> Vec<Qubit> {
        match *self {
            Gate::X(q) | Gate::Y(q) | Gate::Z(q) | Gate::H(q) | Gate::S(q) | Gate::Sdg(q) | Gate::T(q) | Gate::Tdg(q) => {
                vec![q]
            }
            Gate::Rz(_, q) => vec![q],
            Gate::Cnot(a, b) | Gate::Cz(a, b) => vec![a, b],
            Gate::Toffoli { c1, c2, t, .. } => vec![c1, c2, t],
        }
    }

    pub fn touches(&self, q: Qubit) -> bool {
        match *self {
            Gate::X(a) | Gate::Y(a) | Gate::Z(a) | Gate::H(a) | Gate::S(a) | Gate::Sdg(a) | Gate::T(a) | Gate::Tdg(a) => {
                a == q
            }
            Gate::Rz(_, a) => a == q,
            Gate::Cnot(a, b) | Gate::Cz(a, b) => a == q || b == q,
            Gate::Toffoli { c1, c2, t, .. } => c1 == q || c2 == q || t == q,
        }
    }

    pub fn max_qubit(&self) -> Qubit {
        self.qubits().into_iter().max().unwrap_or(0)
    }

    /// The inverse gate.
    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::S(q) => Gate::Sdg(q),
            Gate::Sdg(q) => Gate::S(q),
            Gate::T(q) => Gate::Tdg(q),
            Gate::Tdg(q) => Gate::T(q),
            Gate::Rz(a, q) => Gate::Rz(-a, q),
            g => g,
        }
    }

    /// Same gate with operands renamed through `f`.
    pub fn remap(&self, f: impl Fn(Qubit) -> Qubit) -> Gate {
        match *self {
            Gate::X(q) => Gate::X(f(q)),
            Gate::Y(q) => Gate::Y(f(q)),
            Gate::Z(q) => Gate::Z(f(q)),
            Gate::H(q) => Gate::H(f(q)),
            Gate::S(q) => Gate::S(f(q)),
            Gate::Sdg(q) => Gate::Sdg(f(q)),
            Gate::T(q) => Gate::T(f(q)),
            Gate::Tdg(q) => Gate::Tdg(f(q)),
            Gate::Rz(a, q) => Gate::Rz(a, f(q)),
            Gate::Cnot(a, b) => Gate::Cnot(f(a), f(b)),
            Gate::Cz(a, b) => Gate::Cz(f(a), f(b)),
            Gate::Toffoli { c1, p1, c2, p2, t } => Gate::Toffoli { c1: f(c1), p1, c2: f(c2), p2, t: f(t) },
        }
    }

    fn operands_distinct(&self) -> bool {
        let q = self.qubits();
        (0..q.len()).all(|i| (i + 1..q.len()).all(|j| q[i] != q[j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Item {
    Gate(Gate),
    Repeat(u64, Box<CircuitBlock>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CircuitBlock {
    pub qubits: usize,
    pub body: Vec<Item>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("gate {0:?} has repeated operands")]
    RepeatedOperand(Gate),
    #[error("gate {gate:?} addresses qubit {qubit} but the block has {width}")]
    OutOfRange { gate: Gate, qubit: Qubit, width: usize },
    #[error("zero-angle Rz must be elided")]
    ZeroRotation,
    #[error("repeat count must be at least 1")]
    ZeroRepeat,
    #[error("expansion needs {need} gates, cap is {cap}")]
    ExpandCap { need: u128, cap: u128 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl CircuitBlock {
    pub fn new(qubits: usize) -> Self {
        CircuitBlock { qubits, body: Vec::new() }
    }

    pub fn from_gates(qubits: usize, gates: impl IntoIterator<Item = Gate>) -> Self {
        CircuitBlock { qubits, body: gates.into_iter().map(Item::Gate).collect() }
    }

    pub fn push(&mut self, g: Gate) {
        self.body.push(Item::Gate(g));
    }

    pub fn extend(&mut self, gates: impl IntoIterator<Item = Gate>) {
        self.body.extend(gates.into_iter().map(Item::Gate));
    }

    /// Appends `block` repeated `count` times; a count of 1 is inlined.
    pub fn push_repeat(&mut self, count: u64, block: CircuitBlock) {
        match count {
            0 => {}
            1 => self.body.extend(block.body),
            _ => self.body.push(Item::Repeat(count, Box::new(block))),
        }
    }

    /// Appends another block's items verbatim.
    pub fn append(&mut self, other: CircuitBlock) {
        self.body.extend(other.body);
    }

    /// Checks operand and repeat invariants recursively.
    pub fn validate(&self) -> Result<(), CircuitError> {
        for item in &self.body {
            match item {
                Item::Gate(g) => {
                    if !g.operands_distinct() {
                        return Err(CircuitError::RepeatedOperand(*g));
                    }
                    let q = g.max_qubit();
                    if q >= self.qubits {
                        return Err(CircuitError::OutOfRange { gate: *g, qubit: q, width: self.qubits });
                    }
                    if let Gate::Rz(a, _) = g {
                        if *a == 0.0 {
                            return Err(CircuitError::ZeroRotation);
                        }
                    }
                }
                Item::Repeat(k, b) => {
                    if *k == 0 {
                        return Err(CircuitError::ZeroRepeat);
                    }
                    if b.qubits > self.qubits {
                        return Err(CircuitError::OutOfRange {
                            gate: Gate::X(b.qubits - 1),
                            qubit: b.qubits - 1,
                            width: self.qubits,
                        });
                    }
                    b.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Inverse circuit: reversed order, each gate inverted.
    pub fn inverse(&self) -> CircuitBlock {
        let body = self
            .body
            .iter()
            .rev()
            .map(|item| match item {
                Item::Gate(g) => Item::Gate(g.inverse()),
                Item::Repeat(k, b) => Item::Repeat(*k, Box::new(b.inverse())),
            })
            .collect();
        CircuitBlock { qubits: self.qubits, body }
    }

    /// Number of gates in the full expansion.
    pub fn expanded_len(&self) -> u128 {
        self.body
            .iter()
            .map(|item| match item {
                Item::Gate(_) => 1,
                Item::Repeat(k, b) => *k as u128 * b.expanded_len(),
            })
            .sum()
    }

    /// Visits every gate of the expansion in order.
    pub fn for_each_gate(&self, f: &mut impl FnMut(&Gate)) {
        for item in &self.body {
            match item {
                Item::Gate(g) => f(g),
                Item::Repeat(k, b) => {
                    for _ in 0..*k {
                        b.for_each_gate(f);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateCounts {
    pub counts: [u128; 12],
    pub qubits: usize,
}

impl GateCounts {
    pub fn get(&self, k: GateKind) -> u128 {
        self.counts[k as usize]
    }

    pub fn total(&self) -> u128 {
        self.counts.iter().sum()
    }

    pub fn cnot(&self) -> u128 {
        self.get(GateKind::Cnot)
    }

    pub fn rz(&self) -> u128 {
        self.get(GateKind::Rz)
    }

    pub fn toffoli(&self) -> u128 {
        self.get(GateKind::Toffoli)
    }

    /// T and T† together.
    pub fn t_like(&self) -> u128 {
        self.get(GateKind::T) + self.get(GateKind::Tdg)
    }

    /// S and S† together.
    pub fn phase_like(&self) -> u128 {
        self.get(GateKind::S) + self.get(GateKind::Sdg)
    }

    /// Counts by name, zero entries omitted.
    pub fn named(&self) -> Vec<(&'static str, u128)> {
        GateKind::ALL.iter().filter(|k| self.get(**k) > 0).map(|k| (k.name(), self.get(*k))).collect()
    }

    fn add_scaled(&mut self, other: &GateCounts, k: u128) {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b * k;
        }
    }
}

/// Counts gates by multiplying repeat factors through the hierarchy.
pub fn count_gates(c: &CircuitBlock) -> GateCounts {
    let mut out = GateCounts { counts: [0; 12], qubits: c.qubits };
    for item in &c.body {
        match item {
            Item::Gate(g) => out.counts[g.kind() as usize] += 1,
            Item::Repeat(k, b) => out.add_scaled(&count_gates(b), *k as u128),
        }
    }
    out
}

/// Flattens all repeats, refusing above `cap` gates.
pub fn expand(c: &CircuitBlock, cap: u128) -> Result<Vec<Gate>, CircuitError> {
    let need = c.expanded_len();
    if need > cap {
        return Err(CircuitError::ExpandCap { need, cap });
    }
    let mut out = Vec::with_capacity(need as usize);
    c.for_each_gate(&mut |g| out.push(*g));
    Ok(out)
}

fn fmt_ctl(q: Qubit, pol: bool) -> String {
    if pol {
        q.to_string()
    } else {
        format!("~{q}")
    }
}

fn write_block(c: &CircuitBlock, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for item in &c.body {
        match item {
            Item::Gate(g) => {
                out.push_str(&pad);
                out.push_str(g.kind().name());
                match *g {
                    Gate::Rz(a, q) => {
                        let _ = write!(out, " {a:.16e} {q}");
                    }
                    Gate::Toffoli { c1, p1, c2, p2, t } => {
                        let _ = write!(out, " {} {} {t}", fmt_ctl(c1, p1), fmt_ctl(c2, p2));
                    }
                    _ => {
                        for q in g.qubits() {
                            let _ = write!(out, " {q}");
                        }
                    }
                }
                out.push('\n');
            }
            Item::Repeat(k, b) => {
                let _ = writeln!(out, "{pad}REPEAT {k} {{");
                write_block(b, depth + 1, out);
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }
}

/// Text form: a `QUBITS m` header, then one gate per line.
pub fn serialize(c: &CircuitBlock) -> String {
    let mut out = format!("QUBITS {}\n", c.qubits);
    write_block(c, 0, &mut out);
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> CircuitError {
    CircuitError::Parse { line, msg: msg.into() }
}

fn parse_qubit(tok: &str, line: usize) -> Result<(Qubit, bool), CircuitError> {
    let (neg, digits) = match tok.strip_prefix('~') {
        Some(rest) => (true, rest),
        None => (false, tok),
    };
    let q = digits.parse::<Qubit>().map_err(|_| parse_err(line, format!("bad qubit '{tok}'")))?;
    Ok((q, !neg))
}

fn parse_gate(toks: &[&str], line: usize) -> Result<Gate, CircuitError> {
    let kind = GateKind::from_name(toks[0]).ok_or_else(|| parse_err(line, format!("unknown gate '{}'", toks[0])))?;
    let arity = match kind {
        GateKind::Cnot | GateKind::Cz => 2,
        GateKind::Rz => 2,
        GateKind::Toffoli => 3,
        _ => 1,
    };
    if toks.len() != arity + 1 {
        return Err(parse_err(line, format!("{} expects {} operands", toks[0], arity)));
    }
    let plain = |i: usize| -> Result<Qubit, CircuitError> {
        match parse_qubit(toks[i], line)? {
            (q, true) => Ok(q),
            _ => Err(parse_err(line, "negative polarity only allowed on CCX controls")),
        }
    };
    Ok(match kind {
        GateKind::X => Gate::X(plain(1)?),
        GateKind::Y => Gate::Y(plain(1)?),
        GateKind::Z => Gate::Z(plain(1)?),
        GateKind::H => Gate::H(plain(1)?),
        GateKind::S => Gate::S(plain(1)?),
        GateKind::Sdg => Gate::Sdg(plain(1)?),
        GateKind::T => Gate::T(plain(1)?),
        GateKind::Tdg => Gate::Tdg(plain(1)?),
        GateKind::Cnot => Gate::Cnot(plain(1)?, plain(2)?),
        GateKind::Cz => Gate::Cz(plain(1)?, plain(2)?),
        GateKind::Rz => {
            let a = toks[1].parse::<f64>().map_err(|_| parse_err(line, format!("bad angle '{}'", toks[1])))?;
            if a == 0.0 || !a.is_finite() {
                return Err(parse_err(line, "angle must be finite and nonzero"));
            }
            Gate::Rz(a, plain(2)?)
        }
        GateKind::Toffoli => {
            let (c1, p1) = parse_qubit(toks[1], line)?;
            let (c2, p2) = parse_qubit(toks[2], line)?;
            Gate::Toffoli { c1, p1, c2, p2, t: plain(3)? }
        }
    })
}

/// Parses the text form; errors carry 1-based line numbers.
pub fn deserialize(text: &str) -> Result<CircuitBlock, CircuitError> {
    let mut stack: Vec<(u64, CircuitBlock)> = Vec::new();
    let mut qubits: Option<usize> = None;
    let mut cur = CircuitBlock::new(0);
    let mut last = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks[0] {
            "QUBITS" => {
                if qubits.is_some() || !stack.is_empty() || !cur.body.is_empty() {
                    return Err(parse_err(line, "QUBITS must be the first statement"));
                }
                let m = toks
                    .get(1)
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|_| toks.len() == 2)
                    .ok_or_else(|| parse_err(line, "QUBITS expects one count"))?;
                qubits = Some(m);
            }
            "REPEAT" => {
                if toks.len() != 3 || toks[2] != "{" {
                    return Err(parse_err(line, "expected 'REPEAT k {'"));
                }
                let k = toks[1].parse::<u64>().map_err(|_| parse_err(line, "bad repeat count"))?;
                if k == 0 {
                    return Err(parse_err(line, "repeat count must be at least 1"));
                }
                stack.push((k, std::mem::take(&mut cur)));
            }
            "}" => {
                if toks.len() != 1 {
                    return Err(parse_err(line, "unexpected tokens after '}'"));
                }
                let (k, mut parent) = stack.pop().ok_or_else(|| parse_err(line, "unmatched '}'"))?;
                parent.body.push(Item::Repeat(k, Box::new(std::mem::take(&mut cur))));
                cur = parent;
            }
            _ => cur.body.push(Item::Gate(parse_gate(&toks, line)?)),
        }
    }
    if !stack.is_empty() {
        return Err(parse_err(last, "unterminated REPEAT block"));
    }
    let width = match qubits {
        Some(m) => m,
        None => infer_width(&cur),
    };
    set_width(&mut cur, width);
    cur.validate().map_err(|e| parse_err(last, e.to_string()))?;
    Ok(cur)
}

fn infer_width(c: &CircuitBlock) -> usize {
    let mut m = 0;
    c.for_each_top(&mut |g| m = m.max(g.max_qubit() + 1));
    m
}

fn set_width(c: &mut CircuitBlock, w: usize) {
    c.qubits = w;
    for item in &mut c.body {
        if let Item::Repeat(_, b) = item {
            set_width(b, w);
        }
    }
}

impl CircuitBlock {
    /// Visits each gate of the structure once, ignoring repeat factors.
    pub fn for_each_top(&self, f: &mut impl FnMut(&Gate)) {
        for item in &self.body {
            match item {
                Item::Gate(g) => f(g),
                Item::Repeat(_, b) => b.for_each_top(f),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pf1_scale_counting() {
        let body = CircuitBlock::from_gates(2, (0..78).map(|_| Gate::Cnot(0, 1)));
        let mut c = CircuitBlock::new(2);
        c.push_repeat(1_242_189_557, body);
        assert_eq!(count_gates(&c).cnot(), 96_890_785_446);
    }

    #[test]
    fn empty_counts() {
        let c = CircuitBlock::new(3);
        assert_eq!(count_gates(&c).total(), 0);
    }

    #[test]
    fn expand_examples() {
        let mut c = CircuitBlock::new(1);
        c.push_repeat(2, CircuitBlock::from_gates(1, [Gate::H(0)]));
        assert_eq!(expand(&c, 10).unwrap(), vec![Gate::H(0), Gate::H(0)]);
        let mut outer = CircuitBlock::new(1);
        outer.push_repeat(3, c);
        assert_eq!(expand(&outer, 100).unwrap().len(), 6);
        assert!(matches!(expand(&outer, 5), Err(CircuitError::ExpandCap { need: 6, cap: 5 })));
    }

    #[test]
    fn serialize_examples() {
        let c = CircuitBlock::from_gates(2, [Gate::Cnot(0, 1)]);
        assert_eq!(serialize(&c), "QUBITS 2\nCNOT 0 1\n");
        let a = 0.1f64 + 0.2;
        let c = CircuitBlock::from_gates(1, [Gate::Rz(a, 0)]);
        let back = deserialize(&serialize(&c)).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parse_errors_carry_line() {
        let e = deserialize("QUBITS 2\nH 0\nFOO 1\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 3, .. }));
        let e = deserialize("REPEAT 2 {\nH 0\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { .. }));
        let e = deserialize("# c\nCNOT 0\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 2, .. }));
    }

    #[test]
    fn comments_and_polarity() {
        let c = deserialize("QUBITS 3 # width\nCCX ~0 1 2\n# done\n").unwrap();
        assert_eq!(c.body, vec![Item::Gate(Gate::Toffoli { c1: 0, p1: false, c2: 1, p2: true, t: 2 })]);
    }

    #[test]
    fn validate_catches_bad_gates() {
        assert!(CircuitBlock::from_gates(2, [Gate::Cnot(1, 1)]).validate().is_err());
        assert!(CircuitBlock::from_gates(2, [Gate::H(2)]).validate().is_err());
        assert!(CircuitBlock::from_gates(2, [Gate::Rz(0.0, 0)]).validate().is_err());
    }

    fn arb_gate() -> impl Strategy<Value = Gate> {
        let q = 0usize..4;
        prop_oneof![
            q.clone().prop_map(Gate::H),
            q.clone().prop_map(Gate::T),
            q.clone().prop_map(Gate::Sdg),
            (q.clone(), 1usize..4).prop_map(|(a, d)| Gate::Cnot(a, (a + d) % 4)),
            (q.clone(), 1usize..4).prop_map(|(a, d)| Gate::Cz(a, (a + d) % 4)),
            (-10.0f64..10.0, q.clone()).prop_filter_map("nonzero", |(a, q)| (a != 0.0).then_some(Gate::Rz(a, q))),
            (q, any::<bool>(), any::<bool>()).prop_map(|(a, p1, p2)| Gate::Toffoli {
                c1: a,
                p1,
                c2: (a + 1) % 4,
                p2,
                t: (a + 2) % 4
            }),
        ]
    }

    fn arb_block() -> impl Strategy<Value = CircuitBlock> {
        let leaf = prop::collection::vec(arb_gate(), 0..6).prop_map(|g| CircuitBlock::from_gates(4, g));
        leaf.prop_recursive(3, 40, 4, |inner| {
            prop::collection::vec(
                prop_oneof![
                    arb_gate().prop_map(Item::Gate),
                    (1u64..5, inner).prop_map(|(k, b)| Item::Repeat(k, Box::new(b))),
                ],
                0..5,
            )
            .prop_map(|body| CircuitBlock { qubits: 4, body })
        })
    }

    proptest! {
        #[test]
        fn round_trip(c in arb_block()) {
            let text = serialize(&c);
            let back = deserialize(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(expand(&back, EXPAND_CAP).unwrap(), expand(&c, EXPAND_CAP).unwrap());
        }

        #[test]
        fn counting_equals_expansion(c in arb_block(), k in 1u64..10) {
            let mut r = CircuitBlock::new(4);
            r.push_repeat(k, c.clone());
            let flat = CircuitBlock::from_gates(4, expand(&r, EXPAND_CAP).unwrap());
            prop_assert_eq!(count_gates(&r), count_gates(&flat));
            let single = count_gates(&c);
            for kind in GateKind::ALL {
                prop_assert_eq!(count_gates(&r).get(kind), single.get(kind) * k as u128);
            }
        }
    }
}
