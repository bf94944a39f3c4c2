//! Branch-tree evaluation of the decoherence functional.
//!
//! The initial state is a uniform mixture over the frame-n basis strings of
//! one cell, so each string is run as an independent pure member. One step
//! applies the map in frame n and splits the result over all cells; the
//! branches of one member form a tree keyed by history prefix. Entries of the
//! decoherence functional are weighted sums over members of inner products of
//! leaves; histories ending in different cells are orthogonal exactly and are
//! never compared.
//!
//! Members are evaluated in parallel, but their contributions are always
//! folded in member order. Only the reduction order is fixed, not the order
//! in which members finish, and that is enough for results to be identical
//! for any thread count.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::bakermap::{BakerParams, BakerStep, Layout};
use crate::bitcore::{CellLabel, CoarseGrainingSpec, HistoryLabel};
use crate::error::{BakerError, BakerResult};
use crate::partitions::{InitialState, Partition};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Cell ids, one per step.
pub type History = Vec<u32>;

pub const DEFAULT_PRUNE_TOL: f64 = 1e-9;

/// Full Gram evaluation up to this many histories, sampling beyond it.
pub const FULL_GRAM_LIMIT: usize = 4096;

pub const DEFAULT_SAMPLE_COUNT: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineOptions {
    /// Branches whose squared norm (member normalised to 1) falls below this
    /// are dropped and their mass recorded.
    pub prune_tol: f64,
    /// Ceiling on live branches of one member at one depth.
    pub max_live_branches: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { prune_tol: DEFAULT_PRUNE_TOL, max_live_branches: 1 << 22 }
    }
}

/// Compact indices grouped by owning cell, for one layout. Cells own whole
/// runs of consecutive indices, so each cell is stored as a list of runs.
#[derive(Debug)]
pub struct CellTable {
    layout: Layout,
    size: usize,
    run_offsets: Vec<u32>,
    runs: Vec<(u32, u32)>,
}

impl CellTable {
    fn from_owners(layout: Layout, cells: usize, owner: impl Iterator<Item = u32>) -> Self {
        let mut by_cell: Vec<Vec<(u32, u32)>> = vec![Vec::new(); cells];
        let mut size = 0u32;
        let mut current: Option<(u32, u32)> = None;
        for (idx, cell) in owner.enumerate() {
            let idx = idx as u32;
            match current {
                Some((c, _)) if c == cell => {}
                Some((c, start)) => {
                    by_cell[c as usize].push((start, idx));
                    current = Some((cell, idx));
                }
                None => current = Some((cell, idx)),
            }
            size = idx + 1;
        }
        if let Some((c, start)) = current {
            by_cell[c as usize].push((start, size));
        }
        let mut run_offsets = Vec::with_capacity(cells + 1);
        run_offsets.push(0u32);
        let mut runs = Vec::new();
        for list in by_cell {
            runs.extend(list);
            run_offsets.push(runs.len() as u32);
        }
        CellTable { layout, size: size as usize, run_offsets, runs }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Length of the vectors this table describes.
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Index ranges owned by `cell`, ascending.
    pub fn runs(&self, cell: u32) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let cell = cell as usize;
        self.runs[self.run_offsets[cell] as usize..self.run_offsets[cell + 1] as usize]
            .iter()
            .map(|&(start, end)| start as usize..end as usize)
    }

    /// `‖P_cell ψ‖²` for every cell.
    pub fn cell_norms(&self, state: &[C64]) -> Vec<f64> {
        (0..self.run_offsets.len() as u32 - 1)
            .map(|cell| self.runs(cell).map(|r| state[r].iter().map(|z| z.norm_sqr()).sum::<f64>()).sum())
            .collect()
    }
}

/// One live branch: the evolved (unprojected) vector of its parent step and
/// the cell it is projected on.
#[derive(Clone, Debug)]
pub struct BranchView {
    pub state: Arc<Vec<C64>>,
    pub table: Arc<CellTable>,
    pub cell: u32,
}

impl BranchView {
    /// `⟨self|other⟩` for two branches of the same member depth and cell.
    pub fn inner(&self, other: &BranchView) -> C64 {
        if self.cell != other.cell {
            return ZERO;
        }
        debug_assert_eq!(self.table.layout, other.table.layout);
        self.table
            .runs(self.cell)
            .map(|r| self.state[r.clone()].iter().zip(&other.state[r]).map(|(a, b)| a.conj() * b).sum::<C64>())
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.table.runs(self.cell).map(|r| self.state[r].iter().map(|z| z.norm_sqr()).sum::<f64>()).sum()
    }
}

/// Receives the branches of one member in depth-first, cell-ascending order.
pub trait BranchVisitor {
    fn branch(&mut self, depth: usize, history: &[u32], norm_sqr: f64, view: &BranchView);
    fn pruned(&mut self, depth: usize, mass: f64);

    /// Whether the children of this branch are needed. Skipped subtrees are
    /// not counted as pruned.
    fn descend_into(&self, _depth: usize, _history: &[u32]) -> bool {
        true
    }
}

pub struct BranchEngine {
    partition: Partition,
    step: BakerStep,
    options: EngineOptions,
}

impl BranchEngine {
    pub fn new(partition: &Partition, params: &BakerParams, options: EngineOptions) -> BakerResult<Self> {
        let step = BakerStep::new(params)?;
        Self::with_step(partition, step, options)
    }

    /// Engine driven by an explicit step kernel.
    pub fn with_step(partition: &Partition, step: BakerStep, options: EngineOptions) -> BakerResult<Self> {
        let spec = partition.spec();
        if step.momentum_bits() != spec.n() || step.momentum_bits() + step.position_bits() != spec.n_qubits() {
            return Err(BakerError::Shape(format!(
                "map with n = {} on {} qubits does not match partition n = {}, N = {}",
                step.momentum_bits(),
                step.momentum_bits() + step.position_bits(),
                spec.n(),
                spec.n_qubits()
            )));
        }
        if options.prune_tol.is_nan() || options.prune_tol < 0.0 {
            return Err(BakerError::Range(format!("prune_tol = {} must be non-negative", options.prune_tol)));
        }
        Ok(Self { partition: partition.clone(), step, options })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn options(&self) -> EngineOptions {
        self.options
    }

    fn cell_table(&self, layout: Layout) -> CellTable {
        let n = self.step.momentum_bits();
        let positions = self.step.position_bits();
        let a = layout.active;
        let shift = self.partition.position_code_bits();
        let position_codes: Vec<u32> = (0..1u64 << a)
            .map(|low| self.partition.position_code((layout.fixed << a) | low))
            .collect();
        debug_assert!(a <= positions);
        let size = 1usize << (n + a);
        let owner = (0..size)
            .map(|idx| (self.partition.momentum_code(idx & ((1 << n) - 1)) << shift) | position_codes[idx >> n]);
        CellTable::from_owners(layout, self.partition.cell_count(), owner)
    }

    /// Walk the tree of one member (a frame-n basis index) to depth `k`.
    pub fn walk_member<V: BranchVisitor>(&self, member: u64, k: usize, visitor: &mut V) -> BakerResult<()> {
        let (layout, u) = self.step.initial_layout(member);
        let mut tables = Vec::with_capacity(k + 1);
        let mut current = layout;
        tables.push(Arc::new(self.cell_table(current)));
        for _ in 0..k {
            current = self.step.next_layout(current);
            tables.push(Arc::new(self.cell_table(current)));
        }
        let mut start = vec![ZERO; 1 << self.step.momentum_bits()];
        start[u] = C64::new(1.0, 0.0);
        let start = Arc::new(start);
        let cell = self.partition.cell_of_index(member);
        let root = BranchView { state: start.clone(), table: tables[0].clone(), cell };
        let mut history = Vec::with_capacity(k);
        visitor.branch(0, &history, 1.0, &root);
        let mut live = vec![0usize; k + 1];
        // Zeroed inputs for depths 1..k; a child writes its cell, then clears it.
        let mut inputs: Vec<Vec<C64>> = tables[1..k.max(1)].iter().map(|t| vec![ZERO; t.len()]).collect();
        self.descend(0, k, &start, &mut inputs, &tables, &mut history, &mut live, visitor)
    }

    #[allow(clippy::too_many_arguments)]
    fn descend<V: BranchVisitor>(
        &self,
        depth: usize,
        k: usize,
        input: &[C64],
        inputs: &mut [Vec<C64>],
        tables: &[Arc<CellTable>],
        history: &mut History,
        live: &mut [usize],
        visitor: &mut V,
    ) -> BakerResult<()> {
        if depth == k {
            return Ok(());
        }
        let mut evolved = Vec::new();
        self.step.apply_compact(tables[depth].layout, input, &mut evolved);
        let evolved = Arc::new(evolved);
        let table = &tables[depth + 1];
        let norms = table.cell_norms(&evolved);
        for (cell, &norm_sqr) in norms.iter().enumerate() {
            let cell = cell as u32;
            if norm_sqr == 0.0 {
                continue;
            }
            if norm_sqr < self.options.prune_tol {
                visitor.pruned(depth + 1, norm_sqr);
                continue;
            }
            live[depth + 1] += 1;
            if live[depth + 1] > self.options.max_live_branches {
                return Err(BakerError::Capacity(format!(
                    "more than {} live branches at depth {}",
                    self.options.max_live_branches,
                    depth + 1
                )));
            }
            history.push(cell);
            let view = BranchView { state: evolved.clone(), table: table.clone(), cell };
            visitor.branch(depth + 1, history, norm_sqr, &view);
            if depth + 1 < k && visitor.descend_into(depth + 1, history) {
                let (next, deeper) = inputs.split_first_mut().expect("one input buffer per inner depth");
                for r in table.runs(cell) {
                    next[r.clone()].copy_from_slice(&evolved[r]);
                }
                self.descend(depth + 1, k, next, deeper, tables, history, live, visitor)?;
                for r in table.runs(cell) {
                    next[r].fill(ZERO);
                }
            }
            history.pop();
        }
        Ok(())
    }

    /// Run `f` for every member in parallel and return the results in member
    /// order.
    fn map_members<T, F>(&self, members: &[u64], f: F) -> BakerResult<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> BakerResult<T> + Sync,
    {
        members.par_iter().map(|&m| f(m)).collect()
    }
}

/// Leaves of every member, kept in memory. Suitable for small instances.
#[derive(Clone, Debug)]
pub struct BranchTree {
    pub spec: CoarseGrainingSpec,
    pub k: usize,
    pub weight: f64,
    pub members: Vec<MemberTree>,
}

#[derive(Clone, Debug, Default)]
pub struct MemberTree {
    pub member: u64,
    /// Squared norm of all live branches, per depth.
    pub live_mass: Vec<f64>,
    /// Mass dropped by pruning at each depth.
    pub pruned: Vec<f64>,
    pub leaves: Vec<(History, BranchView)>,
}

impl BranchTree {
    pub fn pruned_mass(&self) -> f64 {
        self.members.iter().map(|m| self.weight * m.pruned.iter().sum::<f64>()).sum()
    }
}

struct TreeCollector {
    k: usize,
    tree: MemberTree,
}

impl BranchVisitor for TreeCollector {
    fn branch(&mut self, depth: usize, history: &[u32], norm_sqr: f64, view: &BranchView) {
        self.tree.live_mass[depth] += norm_sqr;
        if depth == self.k {
            self.tree.leaves.push((history.to_vec(), view.clone()));
        }
    }

    fn pruned(&mut self, depth: usize, mass: f64) {
        self.tree.pruned[depth] += mass;
    }
}

pub fn run_branch_tree(
    init: &InitialState,
    partition: &Partition,
    baker: &BakerParams,
    k: usize,
    prune_tol: f64,
) -> BakerResult<BranchTree> {
    let engine = BranchEngine::new(partition, baker, EngineOptions { prune_tol, ..Default::default() })?;
    run_engine_tree(&engine, init, k)
}

pub fn run_engine_tree(engine: &BranchEngine, init: &InitialState, k: usize) -> BakerResult<BranchTree> {
    if init.spec != *engine.partition().spec() {
        return Err(BakerError::Shape("initial state and partition use different specs".into()));
    }
    let members = engine.map_members(&init.members, |member| {
        let mut collector = TreeCollector {
            k,
            tree: MemberTree { member, live_mass: vec![0.0; k + 1], pruned: vec![0.0; k + 1], leaves: Vec::new() },
        };
        engine.walk_member(member, k, &mut collector)?;
        Ok(collector.tree)
    })?;
    Ok(BranchTree { spec: init.spec.clone(), k, weight: init.weight, members })
}

/// `p[h] = Σ_members weight · ‖leaf‖²`.
pub fn diagonal_probabilities(tree: &BranchTree) -> BTreeMap<History, f64> {
    let mut out = BTreeMap::new();
    for member in &tree.members {
        for (history, leaf) in &member.leaves {
            *out.entry(history.clone()).or_insert(0.0) += tree.weight * leaf.norm_sqr();
        }
    }
    out
}

/// Decoherence functional entry for every pair of leaves present in the tree.
pub fn decoherence_entries(tree: &BranchTree) -> BTreeMap<(History, History), C64> {
    let mut out = BTreeMap::new();
    for member in &tree.members {
        for (ha, a) in &member.leaves {
            for (hb, b) in &member.leaves {
                if a.cell == b.cell {
                    *out.entry((ha.clone(), hb.clone())).or_insert(ZERO) += tree.weight * b.inner(a);
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum OffDiagonalMode {
    Full,
    Sampled { count: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OffDiagonal {
    /// `max |D[α,β]| / sqrt(D[α,α] D[β,β])`; 0 when undefined.
    pub epsilon: f64,
    pub defined: bool,
    pub pairs_evaluated: u64,
}

/// `ε` over all histories present in the tree.
pub fn gram_offdiagonal(tree: &BranchTree, mode: OffDiagonalMode) -> BakerResult<OffDiagonal> {
    let probs = diagonal_probabilities(tree);
    let support: Vec<History> = probs.keys().cloned().collect();
    let index: HashMap<&History, usize> = support.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let pairs = PairSelection::new(&support, mode, FULL_GRAM_LIMIT * FULL_GRAM_LIMIT)?;
    let mut acc: HashMap<(usize, usize), C64> = HashMap::new();
    for member in &tree.members {
        for (i, (ha, a)) in member.leaves.iter().enumerate() {
            for (hb, b) in &member.leaves[i + 1..] {
                let (ia, ib) = (index[ha], index[hb]);
                let key = (ia.min(ib), ia.max(ib));
                if a.cell == b.cell && pairs.wants(key) {
                    *acc.entry(key).or_insert(ZERO) += tree.weight * b.inner(a);
                }
            }
        }
    }
    let diag: Vec<f64> = support.iter().map(|h| probs[h]).collect();
    Ok(pairs.epsilon(&diag, &acc))
}

/// Which support pairs enter `ε`.
struct PairSelection {
    defined: bool,
    sampled: Option<HashSet<(usize, usize)>>,
    total_pairs: u64,
}

impl PairSelection {
    fn new<T>(support: &[T], mode: OffDiagonalMode, full_limit: usize) -> BakerResult<Self> {
        let len = support.len();
        let total_pairs = (len as u64) * (len.saturating_sub(1) as u64) / 2;
        match mode {
            OffDiagonalMode::Full => {
                if len.saturating_mul(len) > full_limit {
                    return Err(BakerError::Capacity(format!("full Gram over {len} histories")));
                }
                Ok(Self { defined: len >= 2, sampled: None, total_pairs })
            }
            OffDiagonalMode::Sampled { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut chosen = HashSet::new();
                if len >= 2 {
                    for _ in 0..count {
                        let a = rng.gen_range(0..len);
                        let mut b = rng.gen_range(0..len - 1);
                        if b >= a {
                            b += 1;
                        }
                        chosen.insert((a.min(b), a.max(b)));
                    }
                }
                Ok(Self { defined: len >= 2, total_pairs: chosen.len() as u64, sampled: Some(chosen) })
            }
        }
    }

    fn wants(&self, key: (usize, usize)) -> bool {
        self.sampled.as_ref().is_none_or(|s| s.contains(&key))
    }

    fn epsilon(&self, diag: &[f64], acc: &HashMap<(usize, usize), C64>) -> OffDiagonal {
        let mut keys: Vec<&(usize, usize)> = acc.keys().collect();
        keys.sort_unstable();
        let mut epsilon: f64 = 0.0;
        for &(a, b) in keys {
            let denom = (diag[a] * diag[b]).sqrt();
            if denom > 0.0 {
                epsilon = epsilon.max(acc[&(a, b)].norm() / denom);
            }
        }
        OffDiagonal { epsilon, defined: self.defined, pairs_evaluated: self.total_pairs }
    }
}

/// `-Σ p log₂ p`, skipping p < 1e-15.
pub fn entropy<'a, I>(probabilities: I) -> BakerResult<f64>
where
    I: IntoIterator<Item = &'a f64>,
{
    let mut h = 0.0;
    for &p in probabilities {
        if p < -1e-12 {
            return Err(BakerError::NegativeProb(p));
        }
        if p >= 1e-15 {
            h -= p * p.log2();
        }
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ShiftCheck {
    pub threshold: f64,
    pub allowed_hits: u64,
    pub disallowed_hits: u64,
    pub allowed_mass: f64,
    pub disallowed_mass: f64,
}

/// Classify every history with `p > threshold` by the shift condition.
pub fn shift_support_check(
    probabilities: &BTreeMap<History, f64>,
    spec: &CoarseGrainingSpec,
    x: &CellLabel,
    threshold: f64,
) -> BakerResult<ShiftCheck> {
    let mut check = ShiftCheck { threshold, ..Default::default() };
    for (history, &p) in probabilities {
        if p <= threshold {
            continue;
        }
        let label = HistoryLabel::from_ids(spec, history)?;
        if analytic::shift_allowed(spec, x, &label)? {
            check.allowed_hits += 1;
            check.allowed_mass += p;
        } else {
            check.disallowed_hits += 1;
            check.disallowed_mass += p;
        }
    }
    Ok(check)
}

/// How the off-diagonal measure is evaluated in a streamed analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalysisSettings {
    /// `None` picks full or sampled by support size.
    pub offdiag_mode: Option<OffDiagonalMode>,
    pub sample_count: usize,
    pub sample_seed: u64,
    /// Support threshold as a fraction of the predicted per-history
    /// probability.
    pub support_fraction: f64,
    /// Histories entering the off-diagonal measure: `p > gram_fraction × predicted`.
    pub gram_fraction: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self { offdiag_mode: None, sample_count: DEFAULT_SAMPLE_COUNT, sample_seed: 0, support_fraction: 0.5, gram_fraction: 1e-3 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecoherenceReport {
    pub k: usize,
    #[serde(skip)]
    pub probabilities: BTreeMap<History, f64>,
    pub total_probability: f64,
    pub pruned_mass: f64,
    pub entropy_bits: f64,
    pub predicted_entropy_bits: u64,
    pub allowed_count: u128,
    pub unsupported_regime: bool,
    pub support_threshold: f64,
    pub support_size: usize,
    pub gram_threshold: f64,
    /// Histories whose mutual overlaps enter `epsilon`.
    pub gram_size: usize,
    /// Largest normalised off-diagonal entry among histories above `gram_threshold`.
    pub epsilon: f64,
    pub epsilon_defined: bool,
    pub offdiag_mode: OffDiagonalMode,
    pub pairs_evaluated: u64,
    /// Largest `|D[α,β]|` over the same pairs.
    pub max_offdiag_abs: f64,
    /// Shift classification of every history with non-zero probability.
    pub shift: ShiftCheck,
    pub runtime_ms: u128,
}

impl DecoherenceReport {
    pub fn support(&self) -> Vec<&History> {
        self.probabilities.iter().filter(|(_, &p)| p > self.support_threshold).map(|(h, _)| h).collect()
    }
}

/// Probabilities of every prefix at every depth up to `k_max`.
struct ProbabilityCollector {
    /// Per depth: histories laid end to end, and their squared norms.
    per_depth: Vec<(Vec<u32>, Vec<f64>)>,
    pruned: Vec<f64>,
}

impl BranchVisitor for ProbabilityCollector {
    fn branch(&mut self, depth: usize, history: &[u32], norm_sqr: f64, _view: &BranchView) {
        let (labels, norms) = &mut self.per_depth[depth];
        labels.extend_from_slice(history);
        norms.push(norm_sqr);
    }

    fn pruned(&mut self, depth: usize, mass: f64) {
        self.pruned[depth] += mass;
    }
}

/// Keeps the branches whose history is wanted in the Gram pass.
struct GramCollector<'a> {
    wanted: &'a [HashMap<History, usize>],
    /// Proper prefixes of wanted histories.
    prefixes: &'a HashSet<History>,
    kept: Vec<Vec<(usize, BranchView)>>,
}

impl BranchVisitor for GramCollector<'_> {
    fn branch(&mut self, depth: usize, history: &[u32], _norm_sqr: f64, view: &BranchView) {
        if let Some(&i) = self.wanted[depth].get(history) {
            self.kept[depth].push((i, view.clone()));
        }
    }

    fn pruned(&mut self, _depth: usize, _mass: f64) {}

    fn descend_into(&self, _depth: usize, history: &[u32]) -> bool {
        self.prefixes.contains(history)
    }
}

/// Members per parallel batch; bounds the memory held before folding.
const MEMBER_BATCH: usize = 256;

/// Two passes over the ensemble: probabilities for every depth, then the
/// off-diagonal entries among support histories that share a final cell.
pub fn analyze(
    engine: &BranchEngine,
    init: &InitialState,
    k_max: usize,
    settings: &AnalysisSettings,
) -> BakerResult<Vec<DecoherenceReport>> {
    let started = Instant::now();
    let spec = engine.partition().spec().clone();
    if init.spec != spec {
        return Err(BakerError::Shape("initial state and partition use different specs".into()));
    }
    let weight = init.weight;

    let mut probabilities: Vec<BTreeMap<History, f64>> = vec![BTreeMap::new(); k_max + 1];
    let mut pruned = vec![0.0; k_max + 1];
    for batch in init.members.chunks(MEMBER_BATCH) {
        let results = engine.map_members(batch, |member| {
            let mut c = ProbabilityCollector {
                per_depth: vec![(Vec::new(), Vec::new()); k_max + 1],
                pruned: vec![0.0; k_max + 1],
            };
            engine.walk_member(member, k_max, &mut c)?;
            Ok(c)
        })?;
        for result in results {
            for (depth, (labels, norms)) in result.per_depth.iter().enumerate() {
                let probs = &mut probabilities[depth];
                for (i, &norm_sqr) in norms.iter().enumerate() {
                    let history = &labels[i * depth..(i + 1) * depth];
                    match probs.get_mut(history) {
                        Some(p) => *p += weight * norm_sqr,
                        None => {
                            probs.insert(history.to_vec(), weight * norm_sqr);
                        }
                    }
                }
            }
            for (depth, mass) in result.pruned.into_iter().enumerate() {
                pruned[depth] += weight * mass;
            }
        }
    }
    let pass_one_ms = started.elapsed().as_millis();

    // Support and pair selection per depth.
    let mut wanted: Vec<HashMap<History, usize>> = Vec::with_capacity(k_max + 1);
    let mut selections = Vec::with_capacity(k_max + 1);
    let mut thresholds = Vec::with_capacity(k_max + 1);
    let mut modes = Vec::with_capacity(k_max + 1);
    let mut support_sizes = Vec::with_capacity(k_max + 1);
    let mut gram_thresholds = Vec::with_capacity(k_max + 1);
    for (depth, probs) in probabilities.iter().enumerate() {
        let predicted = analytic::predicted_probability(&spec, depth).to_f64();
        let threshold = settings.support_fraction * predicted;
        let gram_threshold = settings.gram_fraction.min(settings.support_fraction) * predicted;
        support_sizes.push(probs.values().filter(|&&p| p > threshold).count());
        let support: Vec<&History> = probs.iter().filter(|(_, &p)| p > gram_threshold).map(|(h, _)| h).collect();
        gram_thresholds.push(gram_threshold);
        let mode = settings.offdiag_mode.unwrap_or(if support.len() <= FULL_GRAM_LIMIT {
            OffDiagonalMode::Full
        } else {
            OffDiagonalMode::Sampled { count: settings.sample_count, seed: settings.sample_seed }
        });
        selections.push(PairSelection::new(&support, mode, FULL_GRAM_LIMIT * FULL_GRAM_LIMIT)?);
        wanted.push(support.iter().enumerate().map(|(i, &h)| (h.clone(), i)).collect());
        thresholds.push(threshold);
        modes.push(mode);
    }

    let mut offdiag: Vec<HashMap<(usize, usize), C64>> = vec![HashMap::new(); k_max + 1];
    let needs_gram = (1..=k_max).any(|d| wanted[d].len() >= 2);
    let prefixes: HashSet<History> =
        wanted.iter().flat_map(|w| w.keys()).flat_map(|h| (0..h.len()).map(|t| h[..t].to_vec())).collect();
    if needs_gram {
        for batch in init.members.chunks(MEMBER_BATCH) {
            let results = engine.map_members(batch, |member| {
                let mut c = GramCollector { wanted: &wanted, prefixes: &prefixes, kept: vec![Vec::new(); k_max + 1] };
                engine.walk_member(member, k_max, &mut c)?;
                let mut entries: Vec<Vec<((usize, usize), C64)>> = vec![Vec::new(); k_max + 1];
                for (depth, kept) in c.kept.iter().enumerate() {
                    for (x, (ia, a)) in kept.iter().enumerate() {
                        for (ib, b) in &kept[x + 1..] {
                            let key = (*ia.min(ib), *ia.max(ib));
                            if a.cell == b.cell && selections[depth].wants(key) {
                                let value = if *ia < *ib { b.inner(a) } else { a.inner(b) };
                                entries[depth].push((key, value));
                            }
                        }
                    }
                }
                Ok(entries)
            })?;
            for entries in results {
                for (depth, list) in entries.into_iter().enumerate() {
                    for (key, value) in list {
                        *offdiag[depth].entry(key).or_insert(ZERO) += weight * value;
                    }
                }
            }
        }
    }
    let total_ms = started.elapsed().as_millis();

    let mut reports = Vec::with_capacity(k_max + 1);
    for depth in 0..=k_max {
        let probs = std::mem::take(&mut probabilities[depth]);
        let mut support: Vec<(&History, usize)> = wanted[depth].iter().map(|(h, &i)| (h, i)).collect();
        support.sort_by_key(|&(_, i)| i);
        let diag: Vec<f64> = support.iter().map(|(h, _)| probs[*h]).collect();
        let off = selections[depth].epsilon(&diag, &offdiag[depth]);
        let max_offdiag_abs = offdiag[depth].values().map(|z| z.norm()).fold(0.0, f64::max);
        let prediction = analytic::predict(&spec, depth);
        let shift = shift_support_check(&probs, &spec, &init.x, 0.0)?;
        reports.push(DecoherenceReport {
            k: depth,
            total_probability: probs.values().sum(),
            pruned_mass: pruned[..=depth].iter().sum(),
            entropy_bits: entropy(probs.values())?,
            predicted_entropy_bits: prediction.entropy_bits,
            allowed_count: prediction.allowed_count,
            unsupported_regime: prediction.unsupported_regime,
            support_threshold: thresholds[depth],
            support_size: support_sizes[depth],
            gram_threshold: gram_thresholds[depth],
            gram_size: wanted[depth].len(),
            epsilon: off.epsilon,
            epsilon_defined: off.defined && depth > 0,
            offdiag_mode: modes[depth],
            pairs_evaluated: off.pairs_evaluated,
            max_offdiag_abs,
            shift,
            runtime_ms: if depth == 0 { pass_one_ms } else { total_ms },
            probabilities: probs,
        });
    }
    Ok(reports)
}
