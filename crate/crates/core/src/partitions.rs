//! Coarse-grained projective partitions in frame n.
//!
//! Projectors are diagonal in the frame-n basis, so a cell is just a predicate
//! on the N-bit basis string: the specified blocks must match the label.

use serde::Serialize;

use crate::bitcore::{BitString, CellLabel, CoarseGrainingSpec, RawSpec, DEFAULT_CELL_LIMIT};
use crate::error::{BakerError, BakerResult};
use crate::hilbert::StateVector;

/// Largest momentum register for which the lookup table is built.
const MAX_TABLE_BITS: usize = 24;

#[derive(Clone, Debug)]
pub struct Partition {
    spec: CoarseGrainingSpec,
    cell_count: usize,
    /// Specified positions among n+1..=N, increasing.
    position_positions: Vec<usize>,
    /// Cell code of the momentum part, indexed by `u = Σ ξ_i 2^{i-1}`.
    momentum_codes: Vec<u32>,
}

pub fn build_partition(spec: &CoarseGrainingSpec) -> BakerResult<Partition> {
    build_partition_with_limit(spec, DEFAULT_CELL_LIMIT)
}

pub fn build_partition_with_limit(spec: &CoarseGrainingSpec, cell_limit: usize) -> BakerResult<Partition> {
    let bits = spec.specified_bits();
    if bits > 31 || (1usize << bits) > cell_limit {
        return Err(BakerError::Capacity(format!("2^{bits} cells exceed the limit {cell_limit}")));
    }
    if spec.n() > MAX_TABLE_BITS {
        return Err(BakerError::Capacity(format!("n = {} exceeds {MAX_TABLE_BITS}", spec.n())));
    }
    let n = spec.n();
    let (momentum_positions, position_positions): (Vec<usize>, Vec<usize>) =
        spec.specified_positions().into_iter().partition(|&t| t <= n);
    let momentum_codes = (0..1usize << n)
        .map(|u| momentum_positions.iter().fold(0u32, |acc, &t| (acc << 1) | ((u >> (t - 1)) & 1) as u32))
        .collect();
    Ok(Partition {
        spec: spec.clone(),
        cell_count: 1 << bits,
        position_positions,
        momentum_codes,
    })
}

impl Partition {
    pub fn spec(&self) -> &CoarseGrainingSpec {
        &self.spec
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn rank(&self) -> u64 {
        1u64 << self.spec.coarse_bits()
    }

    pub fn cell_label(&self, id: u32) -> CellLabel {
        CellLabel::from_id(&self.spec, id as u64).expect("id below cell count")
    }

    /// Number of specified bits that live among the position bits.
    pub fn position_code_bits(&self) -> usize {
        self.position_positions.len()
    }

    /// Momentum contribution to the cell id, high bits.
    pub fn momentum_code(&self, u: usize) -> u32 {
        self.momentum_codes[u]
    }

    /// Position contribution to the cell id from the `N-n` position bits
    /// (position n+1 most significant).
    pub fn position_code(&self, position_value: u64) -> u32 {
        let n_qubits = self.spec.n_qubits();
        self.position_positions
            .iter()
            .fold(0u32, |acc, &t| (acc << 1) | ((position_value >> (n_qubits - t)) & 1) as u32)
    }

    /// Owning cell of a frame-n basis string.
    pub fn cell_of_index(&self, index: u64) -> u32 {
        let positions = self.spec.n_qubits() - self.spec.n();
        let top = (index >> positions) as usize;
        let u = reverse_bits(top, self.spec.n());
        let position_value = index & ((1u64 << positions) - 1);
        (self.momentum_code(u) << self.position_code_bits()) | self.position_code(position_value)
    }

    /// Block offsets (1-based) of the specified blocks.
    pub fn offsets(&self) -> Vec<usize> {
        self.spec.block_offsets()
    }

    pub fn export(&self) -> PartitionExport {
        PartitionExport {
            spec: self.spec.to_raw(),
            cell_count: self.cell_count,
            rank: self.rank(),
            offsets: self.offsets(),
        }
    }
}

fn reverse_bits(value: usize, width: usize) -> usize {
    if width == 0 {
        0
    } else {
        value.reverse_bits() >> (usize::BITS as usize - width)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionExport {
    pub spec: RawSpec,
    pub cell_count: usize,
    pub rank: u64,
    pub offsets: Vec<usize>,
}

/// Membership read directly off the label's bit strings, independent of the
/// packed extraction used by `Partition`.
pub fn cell_contains(spec: &CoarseGrainingSpec, cell: &CellLabel, index: u64) -> bool {
    let string = BitString::new(index, spec.n_qubits()).expect("index fits in N bits");
    spec.block_offsets().iter().zip(cell.blocks()).all(|(&start, block)| {
        string.substring(start, start + block.len() - 1).expect("block inside string") == *block
    })
}

pub fn project(partition: &Partition, cell: &CellLabel, psi: &StateVector) -> BakerResult<StateVector> {
    psi.check_frame(partition.spec.n())?;
    if psi.n_qubits() != partition.spec.n_qubits() {
        return Err(BakerError::Shape(format!(
            "state N = {} vs partition N = {}",
            psi.n_qubits(),
            partition.spec.n_qubits()
        )));
    }
    let id = cell.id() as u32;
    let mut out = psi.clone();
    for (index, amp) in out.amplitudes_mut().iter_mut().enumerate() {
        if partition.cell_of_index(index as u64) != id {
            *amp = Default::default();
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct InitialState {
    pub spec: CoarseGrainingSpec,
    pub x: CellLabel,
    /// `2^{-(l+r+Σm)}`, the weight of each member.
    pub weight: f64,
    /// Frame-n basis indices in the cell, increasing.
    pub members: Vec<u64>,
}

/// Uniform mixture over the frame-n basis strings of cell `x`.
pub fn initial_ensemble(spec: &CoarseGrainingSpec, x: &CellLabel) -> BakerResult<InitialState> {
    CellLabel::new(spec, x.blocks().to_vec())?;
    let n_qubits = spec.n_qubits();
    let specified = spec.specified_positions();
    let free: Vec<usize> = (1..=n_qubits).filter(|t| !specified.contains(t)).collect();
    let label = x.concatenated();
    let mut base = 0u64;
    for (k, &t) in specified.iter().enumerate() {
        if label.bit(k + 1) {
            base |= 1 << (n_qubits - t);
        }
    }
    let count = 1u64 << free.len();
    let members = (0..count)
        .map(|pattern| {
            let mut index = base;
            for (k, &t) in free.iter().enumerate() {
                if (pattern >> (free.len() - 1 - k)) & 1 == 1 {
                    index |= 1 << (n_qubits - t);
                }
            }
            index
        })
        .collect();
    Ok(InitialState { spec: spec.clone(), x: x.clone(), weight: 1.0 / count as f64, members })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionReport {
    pub indices_checked: u64,
    pub exhaustive: bool,
    pub violations: u64,
    pub first_offending_index: Option<u64>,
}

impl PartitionReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Above this many (index, cell) pairs every index is tested only against its
/// own cell and the cells one bit-flip away.
const EXHAUSTIVE_PAIRS: u64 = 1 << 26;

/// Check that every basis index is claimed by exactly one cell and that every
/// cell holds exactly `rank` indices.
pub fn verify_partition(partition: &Partition) -> PartitionReport {
    let spec = partition.spec();
    let cells: Vec<CellLabel> = (0..partition.cell_count() as u32).map(|id| partition.cell_label(id)).collect();
    let mut report = verify_membership(
        spec.n_qubits(),
        &cells,
        |cell, index| cell_contains(spec, cell, index),
        |index| owner_by_substrings(spec, index),
    );

    let mut counts = vec![0u64; partition.cell_count()];
    for index in 0..1u64 << spec.n_qubits() {
        let owner = partition.cell_of_index(index);
        counts[owner as usize] += 1;
        if !cell_contains(spec, &cells[owner as usize], index) {
            report.violations += 1;
            report.first_offending_index.get_or_insert(index);
        }
    }
    report.violations += counts.iter().filter(|&&c| c != partition.rank()).count() as u64;
    report
}

/// Count how many cells claim each index under `contains`. For large
/// instances each index is tested against the cell named by `owner` and the
/// cells one label bit-flip away from it.
pub fn verify_membership<F, G>(n_qubits: usize, cells: &[CellLabel], contains: F, owner: G) -> PartitionReport
where
    F: Fn(&CellLabel, u64) -> bool,
    G: Fn(u64) -> usize,
{
    let dim = 1u64 << n_qubits;
    let exhaustive = dim.saturating_mul(cells.len() as u64) <= EXHAUSTIVE_PAIRS;
    let width = cells.len().trailing_zeros();
    let mut report =
        PartitionReport { indices_checked: dim, exhaustive, violations: 0, first_offending_index: None };
    for index in 0..dim {
        let claims = if exhaustive {
            cells.iter().filter(|c| contains(c, index)).count()
        } else {
            let home = owner(index);
            let flips = (0..width).filter(|&bit| contains(&cells[home ^ (1 << bit)], index)).count();
            contains(&cells[home], index) as usize + flips
        };
        if claims != 1 {
            report.violations += 1;
            report.first_offending_index.get_or_insert(index);
        }
    }
    report
}

/// Concatenated label read off the string by substring extraction.
fn owner_by_substrings(spec: &CoarseGrainingSpec, index: u64) -> usize {
    let string = BitString::new(index, spec.n_qubits()).expect("index fits in N bits");
    spec.block_offsets().iter().zip(spec.s()).fold(0usize, |acc, (&start, &len)| {
        let block = string.substring(start, start + len - 1).expect("block inside string");
        (acc << len) | block.value() as usize
    })
}
