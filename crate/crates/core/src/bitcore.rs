//! Bit strings, coarse-graining specifications, cell and history labels, and
//! the box-diagram renderer.
//!
//! Strings are 1-indexed with bit 1 as the most significant bit, so the
//! position index of a string is `Σ ξ_l 2^{N-l}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{BakerError, BakerResult};

/// Upper bound on qubit count; strings are packed into a `u64`.
pub const MAX_BITS: usize = 62;

/// Default ceiling on the number of cells `enumerate_cells` will produce.
pub const DEFAULT_CELL_LIMIT: usize = 1 << 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    len: u32,
    value: u64,
}

impl BitString {
    pub fn new(value: u64, len: usize) -> BakerResult<Self> {
        if len > 64 {
            return Err(BakerError::Range(format!("bit string length {len} exceeds 64")));
        }
        if len < 64 && value >> len != 0 {
            return Err(BakerError::Range(format!("value {value} does not fit in {len} bits")));
        }
        Ok(Self { len: len as u32, value })
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len <= 64);
        Self { len: len as u32, value: 0 }
    }

    pub fn from_bits(bits: &[bool]) -> BakerResult<Self> {
        if bits.len() > 64 {
            return Err(BakerError::Range(format!("bit string length {} exceeds 64", bits.len())));
        }
        let value = bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        Ok(Self { len: bits.len() as u32, value })
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Integer value with bit 1 as the most significant bit.
    pub fn value(&self) -> u64 {
        self.value
    }

    /// Bit at 1-based position `i`.
    pub fn bit(&self, i: usize) -> bool {
        assert!(i >= 1 && i <= self.len(), "bit index {i} out of 1..={}", self.len);
        (self.value >> (self.len() - i)) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (1..=self.len()).map(|i| self.bit(i)).collect()
    }

    /// `α_{κ:σ}`, inclusive and 1-based.
    pub fn substring(&self, kappa: usize, sigma: usize) -> BakerResult<Self> {
        if kappa < 1 || kappa > sigma || sigma > self.len() {
            return Err(BakerError::Range(format!(
                "substring {kappa}:{sigma} of a {}-bit string",
                self.len
            )));
        }
        let width = sigma - kappa + 1;
        let shifted = self.value >> (self.len() - sigma);
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        Ok(Self { len: width as u32, value: shifted & mask })
    }

    pub fn concat(&self, other: &Self) -> BakerResult<Self> {
        let len = self.len() + other.len();
        if len > 64 {
            return Err(BakerError::Range(format!("concatenation of length {len} exceeds 64")));
        }
        let head = if other.len == 64 { 0 } else { self.value << other.len };
        Ok(Self { len: len as u32, value: head | other.value })
    }

    /// The same bits in the opposite order.
    pub fn reversed(&self) -> Self {
        let mut value = 0u64;
        for i in 0..self.len() {
            value |= ((self.value >> i) & 1) << (self.len() - 1 - i);
        }
        Self { len: self.len, value }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 1..=self.len() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = BakerError;

    fn from_str(text: &str) -> BakerResult<Self> {
        let bits = text
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(BakerError::Shape(format!("invalid bit character {other:?}"))),
            })
            .collect::<BakerResult<Vec<bool>>>()?;
        Self::from_bits(&bits)
    }
}

/// Rational `numerator / 2^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dyadic {
    pub numerator: u64,
    pub exponent: u32,
}

impl Dyadic {
    pub fn to_f64(&self) -> f64 {
        self.numerator as f64 * (-(self.exponent as f64)).exp2()
    }

    pub fn denominator(&self) -> u128 {
        1u128 << self.exponent
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator())
    }
}

/// Value of `0.ξ_1…ξ_j 1` in binary.
pub fn binary_fraction(bits: &BitString) -> Dyadic {
    assert!(bits.len() < 63, "binary fraction needs fewer than 63 bits");
    Dyadic { numerator: (bits.value() << 1) | 1, exponent: bits.len() as u32 + 1 }
}

/// Untyped spec as read from a config document.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSpec {
    #[serde(rename = "N")]
    pub n_qubits: i64,
    pub n: i64,
    pub l: i64,
    pub r: i64,
    pub s: Vec<i64>,
    #[serde(default)]
    pub m: Vec<i64>,
}

/// One member of the hierarchical family: `l` ignored bits, then blocks
/// `s_1, m_1, s_2, …, s_λ` (specified, island, specified, …), then `r` ignored bits.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CoarseGrainingSpec {
    #[serde(rename = "N")]
    n_qubits: usize,
    n: usize,
    l: usize,
    r: usize,
    s: Vec<usize>,
    m: Vec<usize>,
}

pub fn parse_spec(raw: &RawSpec) -> BakerResult<CoarseGrainingSpec> {
    if raw.s.is_empty() {
        return Err(BakerError::Shape("s must contain at least one block".into()));
    }
    if raw.m.len() + 1 != raw.s.len() {
        return Err(BakerError::Shape(format!(
            "{} specified blocks need {} islands, got {}",
            raw.s.len(),
            raw.s.len() - 1,
            raw.m.len()
        )));
    }
    if let Some(bad) = raw.s.iter().find(|&&s| s < 1) {
        return Err(BakerError::Shape(format!("block length {bad} must be at least 1")));
    }
    if let Some(bad) = raw.m.iter().find(|&&m| m < 0) {
        return Err(BakerError::Shape(format!("island length {bad} must be non-negative")));
    }
    for (name, value) in [("N", raw.n_qubits), ("n", raw.n), ("l", raw.l), ("r", raw.r)] {
        if value < 0 {
            return Err(BakerError::Range(format!("{name} = {value} is negative")));
        }
    }
    if raw.n_qubits < 1 || raw.n_qubits as usize > MAX_BITS {
        return Err(BakerError::Range(format!("N = {} outside 1..={MAX_BITS}", raw.n_qubits)));
    }
    let total: i64 = raw.l + raw.r + raw.s.iter().sum::<i64>() + raw.m.iter().sum::<i64>();
    if total != raw.n_qubits {
        return Err(BakerError::SumMismatch(format!(
            "l + r + Σm + Σs = {total} but N = {}",
            raw.n_qubits
        )));
    }
    if raw.l >= raw.n {
        return Err(BakerError::Range(format!("l = {} must be below n = {}", raw.l, raw.n)));
    }
    if raw.r >= raw.n_qubits - raw.n {
        return Err(BakerError::Range(format!(
            "r = {} must be below N - n = {}",
            raw.r,
            raw.n_qubits - raw.n
        )));
    }
    Ok(CoarseGrainingSpec {
        n_qubits: raw.n_qubits as usize,
        n: raw.n as usize,
        l: raw.l as usize,
        r: raw.r as usize,
        s: raw.s.iter().map(|&v| v as usize).collect(),
        m: raw.m.iter().map(|&v| v as usize).collect(),
    })
}

impl CoarseGrainingSpec {
    /// Convenience constructor that goes through `parse_spec`.
    pub fn new(n_qubits: usize, n: usize, l: usize, r: usize, s: &[usize], m: &[usize]) -> BakerResult<Self> {
        parse_spec(&RawSpec {
            n_qubits: n_qubits as i64,
            n: n as i64,
            l: l as i64,
            r: r as i64,
            s: s.iter().map(|&v| v as i64).collect(),
            m: m.iter().map(|&v| v as i64).collect(),
        })
    }

    pub fn to_raw(&self) -> RawSpec {
        RawSpec {
            n_qubits: self.n_qubits as i64,
            n: self.n as i64,
            l: self.l as i64,
            r: self.r as i64,
            s: self.s.iter().map(|&v| v as i64).collect(),
            m: self.m.iter().map(|&v| v as i64).collect(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn s(&self) -> &[usize] {
        &self.s
    }
    pub fn m(&self) -> &[usize] {
        &self.m
    }

    /// Number of scales λ.
    pub fn lambda(&self) -> usize {
        self.s.len()
    }

    /// Length of the symbolic string between the ignored ends.
    pub fn gamma(&self) -> usize {
        self.n_qubits - self.l - self.r
    }

    pub fn specified_bits(&self) -> usize {
        self.s.iter().sum()
    }

    /// Bits summed over inside one cell; the cell rank is `2^coarse_bits`.
    pub fn coarse_bits(&self) -> usize {
        self.l + self.r + self.m.iter().sum::<usize>()
    }

    pub fn min_block(&self) -> usize {
        *self.s.iter().min().expect("at least one block")
    }

    /// 1-based first string position of every specified block.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut start = self.l + 1;
        let mut offsets = Vec::with_capacity(self.s.len());
        for (i, &s) in self.s.iter().enumerate() {
            offsets.push(start);
            start += s + self.m.get(i).copied().unwrap_or(0);
        }
        offsets
    }

    /// All specified string positions in increasing order.
    pub fn specified_positions(&self) -> Vec<usize> {
        self.block_offsets()
            .iter()
            .zip(&self.s)
            .flat_map(|(&start, &len)| start..start + len)
            .collect()
    }

    /// Constraints that the general family does not impose but the analysed
    /// configurations satisfy.
    pub fn advisories(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.l + self.s[0] > self.n {
            notes.push(format!("l + s_1 = {} exceeds n = {}", self.l + self.s[0], self.n));
        }
        let last = *self.s.last().unwrap();
        if self.r + last > self.n_qubits - self.n {
            notes.push(format!(
                "r + s_λ = {} exceeds N - n = {}",
                self.r + last,
                self.n_qubits - self.n
            ));
        }
        notes
    }
}

/// Cell of the partition: one bit string per specified block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellLabel {
    blocks: Vec<BitString>,
}

impl CellLabel {
    pub fn new(spec: &CoarseGrainingSpec, blocks: Vec<BitString>) -> BakerResult<Self> {
        if blocks.len() != spec.lambda() || blocks.iter().zip(spec.s()).any(|(b, &s)| b.len() != s) {
            let got: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
            return Err(BakerError::Shape(format!(
                "cell blocks of lengths {got:?} do not match s = {:?}",
                spec.s()
            )));
        }
        Ok(Self { blocks })
    }

    /// Split the concatenation `y^1…y^λ` given as an integer id.
    pub fn from_id(spec: &CoarseGrainingSpec, id: u64) -> BakerResult<Self> {
        let total = spec.specified_bits();
        let joined = BitString::new(id, total)?;
        let mut blocks = Vec::with_capacity(spec.lambda());
        let mut start = 1;
        for &s in spec.s() {
            blocks.push(joined.substring(start, start + s - 1)?);
            start += s;
        }
        Ok(Self { blocks })
    }

    /// Parse `"10|01"`, `"10 01"` or the plain concatenation `"1001"`.
    pub fn parse(spec: &CoarseGrainingSpec, text: &str) -> BakerResult<Self> {
        let digits: String = text.chars().filter(|c| !matches!(c, '|' | ' ' | ',' | '_')).collect();
        let joined: BitString = digits.parse()?;
        if joined.len() != spec.specified_bits() {
            return Err(BakerError::Shape(format!(
                "label {text:?} has {} bits, spec needs {}",
                joined.len(),
                spec.specified_bits()
            )));
        }
        Self::from_id(spec, joined.value())
    }

    pub fn blocks(&self) -> &[BitString] {
        &self.blocks
    }

    /// Concatenation `y^1…y^λ` as an integer; its order is the cell order.
    pub fn id(&self) -> u64 {
        self.blocks.iter().fold(0u64, |acc, b| (acc << b.len()) | b.value())
    }

    pub fn concatenated(&self) -> BitString {
        let len = self.blocks.iter().map(|b| b.len()).sum();
        BitString::new(self.id(), len).expect("cell fits in 64 bits")
    }
}

impl fmt::Display for CellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, block) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{block}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HistoryLabel {
    pub steps: Vec<CellLabel>,
}

impl HistoryLabel {
    pub fn new(steps: Vec<CellLabel>) -> Self {
        Self { steps }
    }

    pub fn from_ids(spec: &CoarseGrainingSpec, ids: &[u32]) -> BakerResult<Self> {
        let steps = ids.iter().map(|&id| CellLabel::from_id(spec, id as u64)).collect::<BakerResult<_>>()?;
        Ok(Self { steps })
    }

    pub fn ids(&self) -> Vec<u32> {
        self.steps.iter().map(|c| c.id() as u32).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl fmt::Display for HistoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{step}")?;
        }
        Ok(())
    }
}

pub fn enumerate_cells(spec: &CoarseGrainingSpec, limit: usize) -> BakerResult<Vec<CellLabel>> {
    let bits = spec.specified_bits();
    if bits >= 63 || (1usize << bits) > limit {
        return Err(BakerError::Capacity(format!("2^{bits} cells exceed the limit {limit}")));
    }
    (0..1u64 << bits).map(|id| CellLabel::from_id(spec, id)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiagramStyle {
    /// Mark the boundary between string positions n and n+1 with a dot.
    pub show_dot: bool,
}

impl Default for DiagramStyle {
    fn default() -> Self {
        Self { show_dot: true }
    }
}

const BOX: char = '□';

/// One line: l boxes, y^1, m_1 boxes, …, y^λ, r boxes, groups separated by spaces.
pub fn render_diagram(spec: &CoarseGrainingSpec, label: &CellLabel, style: DiagramStyle) -> String {
    let mut groups: Vec<Vec<char>> = Vec::new();
    groups.push(vec![BOX; spec.l()]);
    for (i, block) in label.blocks().iter().enumerate() {
        groups.push(block.to_string().chars().collect());
        if let Some(&m) = spec.m().get(i) {
            groups.push(vec![BOX; m]);
        }
    }
    groups.push(vec![BOX; spec.r()]);

    let dot_after = if style.show_dot { Some(spec.n()) } else { None };
    let mut out = String::new();
    let mut position = 0;
    let mut first = true;
    for group in groups.into_iter().filter(|g| !g.is_empty()) {
        if !first {
            if dot_after == Some(position) {
                out.push('.');
            } else {
                out.push(' ');
            }
        }
        first = false;
        for (j, ch) in group.iter().enumerate() {
            if j > 0 && dot_after == Some(position) {
                out.push('.');
            }
            out.push(*ch);
            position += 1;
        }
    }
    out
}

/// One line per step; an empty history renders as an empty string.
pub fn render_history(spec: &CoarseGrainingSpec, history: &HistoryLabel, style: DiagramStyle) -> String {
    history
        .steps
        .iter()
        .map(|step| render_diagram(spec, step, style))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(text: &str) -> BitString {
        text.parse().unwrap()
    }

    #[test]
    fn binary_fraction_values() {
        assert_eq!(binary_fraction(&BitString::zeros(0)), Dyadic { numerator: 1, exponent: 1 });
        assert_eq!(binary_fraction(&bs("0")).to_f64(), 0.25);
        assert_eq!(binary_fraction(&bs("11")).to_f64(), 0.875);
        assert_eq!(binary_fraction(&bs("11")).to_string(), "7/8");
    }

    #[test]
    fn substring_and_bits() {
        let s = bs("0110");
        assert!(!s.bit(1));
        assert!(s.bit(2));
        assert_eq!(s.substring(2, 4).unwrap(), bs("110"));
        assert_eq!(s.substring(1, 1).unwrap(), bs("0"));
        assert!(s.substring(3, 2).is_err());
        assert!(s.substring(0, 2).is_err());
        assert!(s.substring(2, 5).is_err());
        assert_eq!(s.reversed(), bs("0110"));
        assert_eq!(bs("001").reversed(), bs("100"));
        assert_eq!(bs("01").concat(&bs("1")).unwrap(), bs("011"));
    }

    #[test]
    fn parse_spec_examples() {
        let a = CoarseGrainingSpec::new(8, 5, 3, 2, &[3], &[]).unwrap();
        assert_eq!((a.lambda(), a.gamma()), (1, 3));
        let b = CoarseGrainingSpec::new(14, 8, 5, 2, &[3, 2], &[2]).unwrap();
        assert_eq!((b.lambda(), b.gamma()), (2, 7));
        assert_eq!(b.block_offsets(), vec![6, 11]);
        assert_eq!(b.specified_positions(), vec![6, 7, 8, 11, 12]);
        let err = CoarseGrainingSpec::new(8, 5, 5, 2, &[1], &[]).unwrap_err();
        assert_eq!(err.kind(), "RANGE");
        assert_eq!(CoarseGrainingSpec::new(9, 5, 3, 2, &[3], &[]).unwrap_err().kind(), "SUM_MISMATCH");
        assert_eq!(CoarseGrainingSpec::new(8, 5, 3, 2, &[3], &[1]).unwrap_err().kind(), "SHAPE");
    }

    #[test]
    fn advisories_are_warnings() {
        let momentum_side = CoarseGrainingSpec::new(8, 2, 1, 1, &[4, 2], &[0]).unwrap();
        assert_eq!(momentum_side.advisories().len(), 1);
        let position_side = CoarseGrainingSpec::new(8, 6, 1, 1, &[2, 4], &[0]).unwrap();
        assert_eq!(position_side.advisories().len(), 1);
        assert!(CoarseGrainingSpec::new(14, 8, 5, 2, &[3, 2], &[2]).unwrap().advisories().is_empty());
    }

    #[test]
    fn enumerate_examples() {
        let one = CoarseGrainingSpec::new(4, 2, 1, 1, &[2], &[]).unwrap();
        let cells: Vec<String> = enumerate_cells(&one, 16).unwrap().iter().map(|c| c.to_string()).collect();
        assert_eq!(cells, ["00", "01", "10", "11"]);
        let two = CoarseGrainingSpec::new(4, 2, 1, 1, &[1, 1], &[0]).unwrap();
        let cells: Vec<String> = enumerate_cells(&two, 16).unwrap().iter().map(|c| c.to_string()).collect();
        assert_eq!(cells, ["0|0", "0|1", "1|0", "1|1"]);
        let big = CoarseGrainingSpec::new(12, 6, 3, 2, &[3, 2], &[2]).unwrap();
        assert_eq!(enumerate_cells(&big, 1 << 10).unwrap().len(), 32);
        assert_eq!(enumerate_cells(&big, 16).unwrap_err().kind(), "CAPACITY");
    }

    #[test]
    fn cell_label_parsing() {
        let spec = CoarseGrainingSpec::new(14, 8, 5, 2, &[3, 2], &[2]).unwrap();
        let a = CellLabel::parse(&spec, "101|01").unwrap();
        let b = CellLabel::parse(&spec, "10101").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.id(), 0b10101);
        assert_eq!(a.blocks()[1], bs("01"));
        assert!(CellLabel::parse(&spec, "1010").is_err());
        assert!(CellLabel::new(&spec, vec![bs("10"), bs("101")]).is_err());
    }

    #[test]
    fn diagrams() {
        // l=2, s=[2], r=1; n does not matter once the dot is switched off.
        let local = CoarseGrainingSpec::new(5, 3, 2, 1, &[2], &[]).unwrap();
        let y = CellLabel::parse(&local, "10").unwrap();
        assert_eq!(render_diagram(&local, &y, DiagramStyle { show_dot: false }), "□□ 10 □");
        assert_eq!(render_diagram(&local, &y, DiagramStyle::default()), "□□ 1.0 □");

        // Dot after position n = 3 lands inside the island.
        let checker = CoarseGrainingSpec::new(6, 3, 1, 1, &[1, 1], &[2]).unwrap();
        let y = CellLabel::parse(&checker, "1|0").unwrap();
        assert_eq!(render_diagram(&checker, &y, DiagramStyle::default()), "□ 1 □.□ 0 □");

        // Dot on a group boundary replaces the separating space.
        let boundary = CoarseGrainingSpec::new(6, 2, 1, 1, &[1, 1], &[2]).unwrap();
        assert_eq!(render_diagram(&boundary, &y, DiagramStyle::default()), "□ 1.□□ 0 □");

        assert_eq!(render_history(&checker, &HistoryLabel::default(), DiagramStyle::default()), "");
        let h = HistoryLabel::new(vec![y.clone(), y]);
        assert_eq!(render_history(&checker, &h, DiagramStyle::default()).lines().count(), 2);
    }

    fn direct_check(n_qubits: i64, n: i64, l: i64, r: i64, s: &[i64], m: &[i64]) -> bool {
        !s.is_empty()
            && m.len() + 1 == s.len()
            && s.iter().all(|&v| v >= 1)
            && m.iter().all(|&v| v >= 0)
            && l >= 0
            && r >= 0
            && n >= 0
            && l + r + s.iter().sum::<i64>() + m.iter().sum::<i64>() == n_qubits
            && l < n
            && r < n_qubits - n
    }

    proptest! {
        #[test]
        fn parse_spec_matches_direct_checker(
            n_qubits in 1i64..20,
            n in -1i64..20,
            l in -1i64..8,
            r in -1i64..8,
            s in proptest::collection::vec(-1i64..6, 0..4),
            m in proptest::collection::vec(-1i64..4, 0..4),
        ) {
            let raw = RawSpec { n_qubits, n, l, r, s: s.clone(), m: m.clone() };
            prop_assert_eq!(parse_spec(&raw).is_ok(), direct_check(n_qubits, n, l, r, &s, &m));
        }

        #[test]
        fn binary_fraction_in_unit_interval(value in 0u64..1 << 20, len in 20usize..40) {
            let bits = BitString::new(value, len).unwrap();
            let q = binary_fraction(&bits);
            prop_assert_eq!(q.exponent as usize, len + 1);
            prop_assert!(q.numerator % 2 == 1);
            let v = q.to_f64();
            prop_assert!(v > 0.0 && v < 1.0);
        }

        #[test]
        fn cells_are_distinct_and_sorted(s in proptest::collection::vec(1usize..4, 1..4)) {
            let m = vec![1usize; s.len() - 1];
            let total = s.iter().sum::<usize>() + m.iter().sum::<usize>() + 2;
            let spec = CoarseGrainingSpec::new(total, total / 2, 1, 1, &s, &m);
            prop_assume!(spec.is_ok());
            let spec = spec.unwrap();
            let cells = enumerate_cells(&spec, DEFAULT_CELL_LIMIT).unwrap();
            prop_assert_eq!(cells.len(), 1usize << spec.specified_bits());
            prop_assert!(cells.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(cells.windows(2).all(|w| w[0].to_string() < w[1].to_string()));
        }
    }
}
