//! Mixed position/momentum bases and the quantum baker's map.
//!
//! The frame-ν basis state `|ξ_1…ξ_ν.ξ_{ν+1}…ξ_N⟩` has its `N-ν` position
//! bits in the leading qubit slots and `ν` Fourier qubits in the trailing
//! slots. Inside one block of fixed position bits the frame matrix is a DFT
//! with half-integer offsets on both indices:
//!
//! `⟨p·2^ν + B | ξ⟩ = 2^{-ν/2} exp(2πi (u+½)(B+½) / 2^ν)`
//!
//! where `u = Σ_{i≤ν} ξ_i 2^{i-1}` reads the momentum bits backwards. The fast
//! paths below use that form with an FFT per block; the dense paths build
//! every matrix column by column from the tensor-product definition.
//!
//! `B_n` maps `|ξ⟩_n` to `|ξ⟩_{n+1}`. In frame-n coordinates it is
//! `S = G_n† G_{n+1}`, which factorises into a shift of the whole string by
//! one place, a Hadamard-like mixing of the bit that leaves the momentum
//! register into the new last position bit, and a quarter-step translation of
//! the momentum register whose sign depends on that bit.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::bitcore::{binary_fraction, BitString};
use crate::error::{BakerError, BakerResult};
use crate::hilbert::{adjoint_dense, compose_dense, DenseOperator, StateVector};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BakerParams {
    n_qubits: usize,
    n: usize,
}

impl BakerParams {
    pub fn new(n_qubits: usize, n: usize) -> BakerResult<Self> {
        if n_qubits == 0 || n_qubits > crate::bitcore::MAX_BITS {
            return Err(BakerError::Range(format!("N = {n_qubits} outside 1..={}", crate::bitcore::MAX_BITS)));
        }
        if n >= n_qubits {
            return Err(BakerError::Range(format!("n = {n} must be below N = {n_qubits}")));
        }
        Ok(Self { n_qubits, n })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }
}

fn reverse_bits(value: usize, width: usize) -> usize {
    if width == 0 {
        0
    } else {
        value.reverse_bits() >> (usize::BITS as usize - width)
    }
}

fn cis(turns: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * turns)
}

/// `|ξ⟩_ν` in position amplitudes, built literally as a tensor product.
pub fn basis_state(params: &BakerParams, nu: usize, xi: &BitString) -> BakerResult<StateVector> {
    let n_qubits = params.n_qubits();
    if nu > n_qubits {
        return Err(BakerError::Range(format!("frame {nu} exceeds N = {n_qubits}")));
    }
    if xi.len() != n_qubits {
        return Err(BakerError::Shape(format!("label has {} bits, N = {n_qubits}", xi.len())));
    }
    // ξ_j…ξ_1 for j = 0..=ν.
    let reversed_prefix = |j: usize| -> BitString {
        if j == 0 {
            BitString::zeros(0)
        } else {
            xi.substring(1, j).expect("prefix in range").reversed()
        }
    };

    let mut amps = vec![C64::new(1.0, 0.0)];
    let mut kron = |qubit: [C64; 2]| {
        let mut next = Vec::with_capacity(amps.len() * 2);
        for a in &amps {
            next.push(a * qubit[0]);
            next.push(a * qubit[1]);
        }
        amps = next;
    };
    for slot in nu + 1..=n_qubits {
        let bit = xi.bit(slot) as usize;
        let mut qubit = [ZERO; 2];
        qubit[bit] = C64::new(1.0, 0.0);
        kron(qubit);
    }
    let norm = std::f64::consts::FRAC_1_SQRT_2;
    for j in 1..=nu {
        let phase = cis(binary_fraction(&reversed_prefix(j)).to_f64());
        kron([C64::new(norm, 0.0), phase * norm]);
    }
    let global = C64::from_polar(1.0, PI * binary_fraction(&reversed_prefix(nu)).to_f64());
    for a in &mut amps {
        *a *= global;
    }
    StateVector::from_amplitudes(n_qubits, 0, amps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Position amplitudes to frame-ν coordinates.
    ToFrame,
    /// Frame-ν coordinates to position amplitudes.
    FromFrame,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameTransform {
    pub n_qubits: usize,
    pub frame: usize,
    pub direction: Direction,
}

impl FrameTransform {
    pub fn to_frame(n_qubits: usize, frame: usize) -> Self {
        Self { n_qubits, frame, direction: Direction::ToFrame }
    }

    pub fn from_frame(n_qubits: usize, frame: usize) -> Self {
        Self { n_qubits, frame, direction: Direction::FromFrame }
    }

    pub fn source_frame(&self) -> usize {
        match self.direction {
            Direction::ToFrame => 0,
            Direction::FromFrame => self.frame,
        }
    }

    pub fn target_frame(&self) -> usize {
        match self.direction {
            Direction::ToFrame => self.frame,
            Direction::FromFrame => 0,
        }
    }

    pub fn inverse(&self) -> Self {
        let direction = match self.direction {
            Direction::ToFrame => Direction::FromFrame,
            Direction::FromFrame => Direction::ToFrame,
        };
        Self { direction, ..*self }
    }
}

/// Change of representation via one FFT per block of position bits.
///
/// The frame-0 basis carries a global phase `e^{iπ/2}`, so the ν = 0
/// transform multiplies by that phase (or its conjugate) and nothing else.
pub fn frame_apply(t: &FrameTransform, psi: &StateVector) -> BakerResult<StateVector> {
    psi.check_frame(t.source_frame())?;
    if psi.n_qubits() != t.n_qubits || t.frame > t.n_qubits {
        return Err(BakerError::Shape(format!(
            "transform for N = {} frame {} applied to N = {}",
            t.n_qubits,
            t.frame,
            psi.n_qubits()
        )));
    }
    let n_qubits = t.n_qubits;
    let nu = t.frame;
    let m = 1usize << nu;
    let blocks = 1usize << (n_qubits - nu);
    let scale = 1.0 / (m as f64).sqrt();
    let twiddle_u: Vec<C64> = (0..m).map(|u| C64::from_polar(1.0, PI * u as f64 / m as f64)).collect();
    let twiddle_b: Vec<C64> = (0..m).map(|b| C64::from_polar(scale, PI * (b as f64 + 0.5) / m as f64)).collect();
    let bitrev: Vec<usize> = (0..m).map(|u| reverse_bits(u, nu)).collect();

    let src = psi.amplitudes();
    let mut out = vec![ZERO; src.len()];
    let mut planner = FftPlanner::<f64>::new();
    let mut buf = vec![ZERO; m];
    match t.direction {
        Direction::FromFrame => {
            let fft = planner.plan_fft_inverse(m);
            let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
            for p in 0..blocks {
                for u in 0..m {
                    buf[u] = src[(bitrev[u] << (n_qubits - nu)) | p] * twiddle_u[u];
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for b in 0..m {
                    out[(p << nu) | b] = buf[b] * twiddle_b[b];
                }
            }
        }
        Direction::ToFrame => {
            let fft = planner.plan_fft_forward(m);
            let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
            for p in 0..blocks {
                for b in 0..m {
                    buf[b] = src[(p << nu) | b] * twiddle_b[b].conj();
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for u in 0..m {
                    out[(bitrev[u] << (n_qubits - nu)) | p] = buf[u] * twiddle_u[u].conj();
                }
            }
        }
    }
    StateVector::from_amplitudes(n_qubits, t.target_frame(), out)
}

fn relabel(psi: StateVector, frame: usize) -> StateVector {
    let n_qubits = psi.n_qubits();
    StateVector::from_amplitudes(n_qubits, frame, psi.into_amplitudes()).expect("same shape")
}

/// `B_n ψ`. Position input gives position output; frame-n input gives the
/// frame-n coordinates of the image.
pub fn baker_apply(params: &BakerParams, psi: &StateVector) -> BakerResult<StateVector> {
    let n_qubits = params.n_qubits();
    let n = params.n();
    if psi.n_qubits() != n_qubits {
        return Err(BakerError::Shape(format!("state N = {} vs map N = {n_qubits}", psi.n_qubits())));
    }
    if psi.frame() == 0 {
        let coords = frame_apply(&FrameTransform::to_frame(n_qubits, n), psi)?;
        return frame_apply(&FrameTransform::from_frame(n_qubits, n + 1), &relabel(coords, n + 1));
    }
    psi.check_frame(n)?;
    let position = frame_apply(&FrameTransform::from_frame(n_qubits, n + 1), &relabel(psi.clone(), n + 1))?;
    frame_apply(&FrameTransform::to_frame(n_qubits, n), &position)
}

/// `G_ν`: columns are `basis_state(ν, ξ)`; maps frame ν to position.
pub fn frame_dense(params: &BakerParams, nu: usize) -> BakerResult<DenseOperator> {
    let n_qubits = params.n_qubits();
    DenseOperator::zeros(n_qubits, 0, nu)?;
    let columns = (0..params.dim())
        .map(|i| basis_state(params, nu, &BitString::new(i as u64, n_qubits)?))
        .collect::<BakerResult<Vec<_>>>()?;
    DenseOperator::from_columns(n_qubits, 0, nu, &columns)
}

/// `Σ_ξ |ξ⟩_{n+1} ⟨ξ|_n` as a position-basis matrix.
pub fn baker_dense(params: &BakerParams) -> BakerResult<DenseOperator> {
    let g_next = frame_dense(params, params.n() + 1)?;
    let g_here = frame_dense(params, params.n())?;
    compose_dense(&g_next.with_frames(0, 0), &adjoint_dense(&g_here.with_frames(0, 0)))
}

/// `S = G_n† G_{n+1}`, the map in frame-n coordinates.
pub fn baker_dense_frame_n(params: &BakerParams) -> BakerResult<DenseOperator> {
    let n = params.n();
    let g_next = frame_dense(params, n + 1)?.with_frames(0, n);
    let g_here = frame_dense(params, n)?;
    compose_dense(&adjoint_dense(&g_here), &g_next)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitarityReport {
    pub max_deviation: f64,
}

impl UnitarityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_deviation <= tol
    }
}

/// `max |(U†U − I)_{ij}|` over all entries.
pub fn verify_unitarity(op: &DenseOperator) -> UnitarityReport {
    let dim = op.dim();
    let mut max_deviation: f64 = 0.0;
    for i in 0..dim {
        for j in i..dim {
            let mut acc = ZERO;
            for k in 0..dim {
                acc += op.get(k, i).conj() * op.get(k, j);
            }
            if i == j {
                acc -= 1.0;
            }
            max_deviation = max_deviation.max(acc.norm());
        }
    }
    UnitarityReport { max_deviation }
}

/// Materialise a fast transform by applying it to every basis vector, then
/// check unitarity of the result.
pub fn verify_transform_unitarity(t: &FrameTransform) -> BakerResult<UnitarityReport> {
    let n_qubits = t.n_qubits;
    let columns = (0..1usize << n_qubits)
        .map(|i| frame_apply(t, &crate::hilbert::basis_vector(n_qubits, i, t.source_frame())?))
        .collect::<BakerResult<Vec<_>>>()?;
    let op = DenseOperator::from_columns(n_qubits, t.target_frame(), t.source_frame(), &columns)?;
    Ok(verify_unitarity(&op))
}

/// Which momentum-register bits are live in a compact frame-n vector.
///
/// String positions `1..=n` form the momentum register, stored as
/// `u = Σ ξ_i 2^{i-1}`. Of the `N-n` position bits the last `active` are
/// stored explicitly as `low` (position N is the least significant bit); the
/// preceding `N-n-active` bits are the same for every amplitude and kept in
/// `fixed`. The amplitude of `(u, low)` sits at index `(low << n) | u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    pub active: usize,
    pub fixed: u64,
}

/// The map as a structured operator on compact frame-n vectors.
pub struct BakerStep {
    n: usize,
    positions: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    pre: Vec<C64>,
    translate: [Vec<C64>; 2],
    /// Post-twiddle times the mixing weight of each output row; row 0 takes
    /// `v0 + v1`, row 1 takes `v0 - v1`.
    post_mix: [Vec<C64>; 2],
}

impl std::fmt::Debug for BakerStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BakerStep").field("n", &self.n).field("positions", &self.positions).finish()
    }
}

impl BakerStep {
    pub fn new(params: &BakerParams) -> BakerResult<Self> {
        Self::build(params, 0.0)
    }

    /// A deliberately wrong kernel whose momentum translation is off by
    /// `phase_error` radians per unit momentum. Used to check that the dense
    /// comparison detects faults.
    #[doc(hidden)]
    pub fn with_phase_error(params: &BakerParams, phase_error: f64) -> BakerResult<Self> {
        Self::build(params, phase_error)
    }

    fn build(params: &BakerParams, phase_error: f64) -> BakerResult<Self> {
        let n = params.n();
        if n == 0 {
            return Err(BakerError::Range("the structured step needs n ≥ 1".into()));
        }
        let m = 1usize << n;
        let mf = m as f64;
        let mut planner = FftPlanner::<f64>::new();
        let pre: Vec<C64> = (0..m).map(|u| C64::from_polar(1.0, PI * u as f64 / mf)).collect();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let post_mix = [C64::new(h, 0.0), C64::new(0.0, h)].map(|w| pre.iter().map(|z| z.conj() * w).collect());
        let translate = [-1.0, 1.0].map(|sign: f64| {
            (0..m)
                .map(|b| {
                    let angle = sign * PI * (b as f64 + 0.5) / (2.0 * mf) + phase_error * b as f64;
                    C64::from_polar(1.0 / mf, angle)
                })
                .collect::<Vec<_>>()
        });
        Ok(Self {
            n,
            positions: params.n_qubits() - n,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
            pre,
            translate,
            post_mix,
        })
    }

    pub fn momentum_bits(&self) -> usize {
        self.n
    }

    pub fn position_bits(&self) -> usize {
        self.positions
    }

    /// Layout after one step: one more position bit becomes live.
    pub fn next_layout(&self, layout: Layout) -> Layout {
        if layout.active < self.positions {
            let fixed_bits = self.positions - layout.active;
            Layout { active: layout.active + 1, fixed: layout.fixed & ((1u64 << (fixed_bits - 1)) - 1) }
        } else {
            layout
        }
    }

    /// Layout holding a single frame-n basis string with nothing live.
    pub fn initial_layout(&self, frame_index: u64) -> (Layout, usize) {
        let u = reverse_bits((frame_index >> self.positions) as usize, self.n);
        let fixed = frame_index & ((1u64 << self.positions) - 1);
        (Layout { active: 0, fixed }, u)
    }

    /// Apply the map to `amps` (laid out per `layout`), writing the result in
    /// `next_layout(layout)` into `out`.
    pub fn apply_compact(&self, layout: Layout, amps: &[C64], out: &mut Vec<C64>) {
        let n = self.n;
        let m = 1usize << n;
        let a = layout.active;
        assert_eq!(amps.len(), m << a, "amplitude count does not match layout");
        let next = self.next_layout(layout);
        let a_next = next.active;
        out.clear();
        out.reserve(m << a_next);

        let grows = a < self.positions;
        // Bit that enters the top of the momentum register: the leading fixed
        // bit, or the leading live bit once nothing is fixed.
        let (groups, lead_fixed) = if grows {
            let fixed_bits = self.positions - a;
            (1usize << a, Some((layout.fixed >> (fixed_bits - 1)) as usize & 1))
        } else {
            (1usize << (a - 1), None)
        };
        let half = m >> 1;
        let mut bufs = [vec![ZERO; m], vec![ZERO; m]];
        let mut scratch = vec![ZERO; self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len())];

        for group in 0..groups {
            let mut any = [false; 2];
            for c in 0..2 {
                let buf = &mut bufs[c];
                // u_new = entering·2^{n-1} + j takes u_old = 2j + c. The
                // translation's pre-twiddle is applied here.
                for entering in 0..2 {
                    let dst = &mut buf[entering * half..(entering + 1) * half];
                    let pre = &self.pre[entering * half..(entering + 1) * half];
                    let source_group = match lead_fixed {
                        Some(f) if f != entering => None,
                        Some(_) => Some(group),
                        None => Some((entering << (a - 1)) | group),
                    };
                    match source_group {
                        None => dst.fill(ZERO),
                        Some(g) => {
                            let src = &amps[(g << n) + c..((g + 1) << n)];
                            if src.iter().step_by(2).any(|&v| v != ZERO) {
                                any[c] = true;
                                for ((slot, &value), &p) in dst.iter_mut().zip(src.iter().step_by(2)).zip(pre) {
                                    *slot = value * p;
                                }
                            } else {
                                dst.fill(ZERO);
                            }
                        }
                    }
                }
                if any[c] {
                    self.translate(c, buf, &mut scratch);
                }
            }
            // Output groups are produced in index order.
            if !any[0] && !any[1] {
                out.resize(out.len() + 2 * m, ZERO);
                continue;
            }
            let [b0, b1] = &bufs;
            out.extend(b0.iter().zip(b1).zip(&self.post_mix[0]).map(|((&v0, &v1), &w)| w * (v0 + v1)));
            out.extend(b0.iter().zip(b1).zip(&self.post_mix[1]).map(|((&v0, &v1), &w)| w * (v0 - v1)));
        }
        debug_assert_eq!(out.len(), m << a_next);
    }

    /// Momentum translation by ∓¼ for an outgoing bit `c` = 0/1, in place,
    /// without the outer twiddles (applied by the caller).
    fn translate(&self, c: usize, buf: &mut [C64], scratch: &mut [C64]) {
        self.inverse.process_with_scratch(buf, scratch);
        for (x, d) in buf.iter_mut().zip(&self.translate[c]) {
            *x *= d;
        }
        self.forward.process_with_scratch(buf, scratch);
    }

    /// Frame-n coordinates in, frame-n coordinates of the image out.
    pub fn apply_frame_n(&self, psi: &StateVector) -> BakerResult<StateVector> {
        psi.check_frame(self.n)?;
        let n_qubits = self.n + self.positions;
        if psi.n_qubits() != n_qubits {
            return Err(BakerError::Shape(format!("state N = {} vs map N = {n_qubits}", psi.n_qubits())));
        }
        let layout = Layout { active: self.positions, fixed: 0 };
        let compact = to_compact(psi.amplitudes(), self.n, self.positions);
        let mut out = Vec::new();
        self.apply_compact(layout, &compact, &mut out);
        StateVector::from_amplitudes(n_qubits, self.n, from_compact(&out, self.n, self.positions))
    }
}

/// Frame-n vector to the fully live compact layout.
pub fn to_compact(amps: &[C64], n: usize, positions: usize) -> Vec<C64> {
    let mut out = vec![ZERO; amps.len()];
    for (index, &a) in amps.iter().enumerate() {
        let u = reverse_bits(index >> positions, n);
        out[((index & ((1 << positions) - 1)) << n) | u] = a;
    }
    out
}

pub fn from_compact(compact: &[C64], n: usize, positions: usize) -> Vec<C64> {
    let mut out = vec![ZERO; compact.len()];
    for (index, &a) in compact.iter().enumerate() {
        let u = reverse_bits(index & ((1 << n) - 1), n);
        out[(u << positions) | (index >> n)] = a;
    }
    out
}
