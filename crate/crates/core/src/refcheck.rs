//! Dense brute-force decoherence functional for small instances.
//!
//! Everything is built as explicit `2^N × 2^N` matrices in the position
//! basis: the map from its basis columns, each projector as
//! `G_n diag(mask) G_n†`, and `ρ_0 = A A†` where the columns of `A` are the
//! weighted frame-n members of the initial cell. The class operators are
//! assembled two ways: in the Heisenberg form `Π_t U^{†t} P U^t`, and in the
//! reduced form `P U … P U` whose `U^{†k}` tail cancels under the trace.
//! The two must agree; the reduced one is what the branch engine computes.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::bakermap::{baker_dense, frame_dense, BakerParams, BakerStep};
use crate::bitcore::{CellLabel, CoarseGrainingSpec};
use crate::error::{BakerError, BakerResult};
use crate::hilbert::{adjoint_dense, compose_dense, DenseOperator};
use crate::histories::{decoherence_entries, run_engine_tree, BranchEngine, EngineOptions, History};
use crate::partitions::{build_partition, cell_contains, initial_ensemble};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_qubits: usize,
    pub max_k: usize,
    pub max_cells: usize,
    /// Largest history set evaluated when all histories are requested.
    pub max_histories: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_qubits: 8, max_k: 3, max_cells: 16, max_histories: 1024 }
    }
}

impl OracleLimits {
    pub fn check(&self, spec: &CoarseGrainingSpec, k: usize) -> BakerResult<()> {
        let cells = 1usize << spec.specified_bits();
        if spec.n_qubits() > self.max_qubits || k > self.max_k || cells > self.max_cells {
            return Err(BakerError::Capacity(format!(
                "dense oracle limited to N ≤ {}, k ≤ {}, {} cells; got N = {}, k = {k}, {cells} cells",
                self.max_qubits,
                self.max_k,
                self.max_cells,
                spec.n_qubits()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HistorySelection {
    All,
    Subset(Vec<History>),
}

#[derive(Clone, Debug)]
pub struct DenseFunctional {
    pub histories: Vec<History>,
    /// Row-major, `D[α,β]` at `α * len + β`.
    pub matrix: Vec<C64>,
    /// Largest deviation between the Heisenberg-form and reduced-form entries.
    pub dressed_vs_reduced: f64,
}

impl DenseFunctional {
    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.matrix[a * self.len() + b]
    }

    pub fn trace(&self) -> f64 {
        (0..self.len()).map(|i| self.get(i, i).re).sum()
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.len() {
            for b in 0..self.len() {
                worst = worst.max((self.get(a, b) - self.get(b, a).conj()).norm());
            }
        }
        worst
    }
}

fn all_histories(cells: usize, k: usize) -> Vec<History> {
    let mut out: Vec<History> = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|h| {
                (0..cells as u32).map(move |c| {
                    let mut next = h.clone();
                    next.push(c);
                    next
                })
            })
            .collect();
    }
    out
}

/// Columns `v` of an operator applied to a set of `r` vectors, stored as a
/// `dim × r` row-major block.
#[derive(Clone)]
struct Block {
    dim: usize,
    cols: usize,
    data: Vec<C64>,
}

impl Block {
    fn apply(op: &DenseOperator, block: &Block) -> Block {
        let (dim, cols) = (block.dim, block.cols);
        let mut data = vec![ZERO; dim * cols];
        for i in 0..dim {
            let out = &mut data[i * cols..(i + 1) * cols];
            for (k, &a) in op.row(i).iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(&block.data[k * cols..(k + 1) * cols]) {
                    *o += a * b;
                }
            }
        }
        Block { dim, cols, data }
    }

    /// `Tr[X Y†]` for `X = self`, `Y = other`.
    fn trace_with(&self, other: &Block) -> C64 {
        self.data.iter().zip(&other.data).map(|(x, y)| x * y.conj()).sum()
    }
}

/// Dense functional over `selection`.
pub fn dense_decoherence_functional(
    spec: &CoarseGrainingSpec,
    x: &CellLabel,
    baker: &BakerParams,
    k: usize,
    selection: &HistorySelection,
    limits: &OracleLimits,
) -> BakerResult<DenseFunctional> {
    limits.check(spec, k)?;
    if baker.n_qubits() != spec.n_qubits() || baker.n() != spec.n() {
        return Err(BakerError::Shape("map parameters do not match the coarse-graining".into()));
    }
    let cells = 1usize << spec.specified_bits();
    let histories = match selection {
        HistorySelection::All => {
            let count = (cells as u128).pow(k as u32);
            if count > limits.max_histories as u128 {
                return Err(BakerError::Capacity(format!(
                    "{count} histories exceed the oracle limit {}",
                    limits.max_histories
                )));
            }
            all_histories(cells, k)
        }
        HistorySelection::Subset(list) => {
            if list.iter().any(|h| h.len() != k || h.iter().any(|&c| c as usize >= cells)) {
                return Err(BakerError::Shape(format!("history subset must hold length-{k} cell-id lists")));
            }
            list.clone()
        }
    };

    let dim = baker.dim();
    let u = baker_dense(baker)?;
    let g = frame_dense(baker, spec.n())?.with_frames(0, 0);
    let g_dag = adjoint_dense(&g);

    // Projectors in the position basis.
    let labels: Vec<CellLabel> =
        (0..cells as u64).map(|id| CellLabel::from_id(spec, id)).collect::<BakerResult<_>>()?;
    let projectors: Vec<DenseOperator> = labels
        .iter()
        .map(|cell| {
            let mut masked = g.clone();
            for i in 0..dim {
                for j in 0..dim {
                    if !cell_contains(spec, cell, j as u64) {
                        masked.set(i, j, ZERO);
                    }
                }
            }
            compose_dense(&masked, &g_dag)
        })
        .collect::<BakerResult<_>>()?;

    // ρ_0 = A A†.
    let init = initial_ensemble(spec, x)?;
    let scale = init.weight.sqrt();
    let cols = init.members.len();
    let mut a = Block { dim, cols, data: vec![ZERO; dim * cols] };
    for (c, &member) in init.members.iter().enumerate() {
        for i in 0..dim {
            a.data[i * cols + c] = g.get(i, member as usize) * scale;
        }
    }

    // Heisenberg projectors U^{†t} P U^t for t = 1..k.
    let mut heisenberg: Vec<Vec<DenseOperator>> = Vec::with_capacity(k);
    let mut u_power = DenseOperator::identity(baker.n_qubits(), 0)?;
    for _ in 0..k {
        u_power = compose_dense(&u, &u_power)?;
        let u_power_dag = adjoint_dense(&u_power);
        heisenberg.push(
            projectors
                .iter()
                .map(|p| compose_dense(&u_power_dag, &compose_dense(p, &u_power)?))
                .collect::<BakerResult<_>>()?,
        );
    }

    // Prefix products share work across histories with a common start.
    let mut dressed_cache: BTreeMap<History, Block> = BTreeMap::new();
    let mut reduced_cache: BTreeMap<History, Block> = BTreeMap::new();
    dressed_cache.insert(Vec::new(), a.clone());
    reduced_cache.insert(Vec::new(), a);
    let mut dressed = Vec::with_capacity(histories.len());
    let mut reduced = Vec::with_capacity(histories.len());
    for h in &histories {
        for t in 1..=h.len() {
            let prefix = &h[..t];
            if !dressed_cache.contains_key(prefix) {
                let parent = &dressed_cache[&h[..t - 1]];
                let next = Block::apply(&heisenberg[t - 1][h[t - 1] as usize], parent);
                dressed_cache.insert(prefix.to_vec(), next);
                let parent = &reduced_cache[&h[..t - 1]];
                let next = Block::apply(&projectors[h[t - 1] as usize], &Block::apply(&u, parent));
                reduced_cache.insert(prefix.to_vec(), next);
            }
        }
        dressed.push(dressed_cache[h].clone());
        reduced.push(reduced_cache[h].clone());
    }

    let len = histories.len();
    let mut matrix = vec![ZERO; len * len];
    let mut dressed_vs_reduced: f64 = 0.0;
    for alpha in 0..len {
        for beta in 0..len {
            let literal = dressed[alpha].trace_with(&dressed[beta]);
            let short = reduced[alpha].trace_with(&reduced[beta]);
            dressed_vs_reduced = dressed_vs_reduced.max((literal - short).norm());
            matrix[alpha * len + beta] = literal;
        }
    }
    Ok(DenseFunctional { histories, matrix, dressed_vs_reduced })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineComparison {
    pub max_abs_dev: f64,
    /// Entry with the largest deviation.
    pub location: Option<(History, History)>,
    pub entries_compared: usize,
    pub pruned_mass: f64,
    /// Heisenberg-form against reduced-form deviation of the dense side.
    pub dressed_vs_reduced: f64,
}

/// Compare every entry of the dense functional with the branch engine.
pub fn compare_engines(
    spec: &CoarseGrainingSpec,
    x: &CellLabel,
    baker: &BakerParams,
    k: usize,
    prune_tol: f64,
) -> BakerResult<EngineComparison> {
    let step = BakerStep::new(baker)?;
    compare_with_step(spec, x, baker, k, step, prune_tol, &OracleLimits::default())
}

/// As `compare_engines`, with an explicit step kernel for the engine side.
pub fn compare_with_step(
    spec: &CoarseGrainingSpec,
    x: &CellLabel,
    baker: &BakerParams,
    k: usize,
    step: BakerStep,
    prune_tol: f64,
    limits: &OracleLimits,
) -> BakerResult<EngineComparison> {
    let dense = dense_decoherence_functional(spec, x, baker, k, &HistorySelection::All, limits)?;
    let partition = build_partition(spec)?;
    let init = initial_ensemble(spec, x)?;
    let engine = BranchEngine::with_step(&partition, step, EngineOptions { prune_tol, ..Default::default() })?;
    let tree = run_engine_tree(&engine, &init, k)?;
    let entries = decoherence_entries(&tree);

    let len = dense.len();
    let mut out = EngineComparison {
        max_abs_dev: 0.0,
        location: None,
        entries_compared: 0,
        pruned_mass: tree.pruned_mass(),
        dressed_vs_reduced: dense.dressed_vs_reduced,
    };
    for a in 0..len {
        for b in 0..len {
            let reference = dense.get(a, b);
            let key = (dense.histories[a].clone(), dense.histories[b].clone());
            let engine_value = entries.get(&key).copied().unwrap_or(ZERO);
            if reference.norm() <= 1e-14 && engine_value.norm() <= 1e-14 {
                continue;
            }
            out.entries_compared += 1;
            let dev = (reference - engine_value).norm();
            if dev > out.max_abs_dev || out.location.is_none() {
                out.max_abs_dev = out.max_abs_dev.max(dev);
                out.location = Some(key);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (CoarseGrainingSpec, CellLabel, BakerParams) {
        let spec = CoarseGrainingSpec::new(6, 3, 2, 1, &[2, 1], &[0]).unwrap();
        let x = CellLabel::parse(&spec, "10|1").unwrap();
        let baker = BakerParams::new(6, 3).unwrap();
        (spec, x, baker)
    }

    #[test]
    fn depth_zero_is_one_by_one() {
        let (spec, x, baker) = small();
        let d = dense_decoherence_functional(&spec, &x, &baker, 0, &HistorySelection::All, &OracleLimits::default())
            .unwrap();
        assert_eq!(d.len(), 1);
        assert!((d.get(0, 0) - 1.0).norm() < 1e-12);
    }

    #[test]
    fn dense_functional_properties() {
        let (spec, x, baker) = small();
        let d = dense_decoherence_functional(&spec, &x, &baker, 2, &HistorySelection::All, &OracleLimits::default())
            .unwrap();
        assert_eq!(d.len(), 64);
        assert!((d.trace() - 1.0).abs() < 1e-10);
        assert!(d.max_hermiticity_error() < 1e-12);
        assert!(d.dressed_vs_reduced < 1e-12);
        for i in 0..d.len() {
            assert!(d.get(i, i).re >= -1e-15);
        }
    }

    #[test]
    fn subset_matches_full() {
        let (spec, x, baker) = small();
        let full = dense_decoherence_functional(&spec, &x, &baker, 2, &HistorySelection::All, &OracleLimits::default())
            .unwrap();
        let pick = vec![full.histories[5].clone(), full.histories[40].clone()];
        let sub = dense_decoherence_functional(
            &spec,
            &x,
            &baker,
            2,
            &HistorySelection::Subset(pick),
            &OracleLimits::default(),
        )
        .unwrap();
        assert!((sub.get(0, 1) - full.get(5, 40)).norm() < 1e-14);
    }

    #[test]
    fn engine_agrees_with_oracle() {
        let (spec, x, baker) = small();
        for k in 0..=3 {
            let cmp = compare_engines(&spec, &x, &baker, k, 0.0).unwrap();
            assert!(cmp.max_abs_dev <= 1e-10, "k = {k}: {cmp:?}");
        }
        let cmp = compare_engines(&spec, &x, &baker, 2, 1e-4).unwrap();
        assert!(cmp.max_abs_dev <= cmp.pruned_mass + 1e-10);
    }

    #[test]
    fn corrupted_kernel_is_flagged() {
        let (spec, x, baker) = small();
        let bad = BakerStep::with_phase_error(&baker, 1e-3).unwrap();
        let cmp = compare_with_step(&spec, &x, &baker, 2, bad, 0.0, &OracleLimits::default()).unwrap();
        assert!(cmp.max_abs_dev > 1e-6);
    }

    #[test]
    fn limits_are_enforced() {
        let spec = CoarseGrainingSpec::new(10, 5, 3, 2, &[5], &[]).unwrap();
        let x = CellLabel::parse(&spec, "01101").unwrap();
        let baker = BakerParams::new(10, 5).unwrap();
        let err = dense_decoherence_functional(&spec, &x, &baker, 1, &HistorySelection::All, &OracleLimits::default())
            .unwrap_err();
        assert_eq!(err.kind(), "CAPACITY");
    }
}
