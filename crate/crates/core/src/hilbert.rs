//! State vectors and dense reference operators on `2^N` dimensions.
//!
//! Every object carries the frame it is expressed in; frame 0 is the position
//! basis and frame ν the mixed basis with ν Fourier-like qubits. Mixing frames
//! is an error, never a silent conversion.

use std::io::{Read, Write};

use num_complex::Complex64 as C64;

use crate::error::{BakerError, BakerResult};

/// Default largest N for which dense matrices are built.
pub const N_DENSE_MAX: usize = 12;

const DUMP_MAGIC: &[u8; 4] = b"BHSV";
const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    frame: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn zeros(n_qubits: usize, frame: usize) -> Self {
        Self { n_qubits, frame, amps: vec![C64::new(0.0, 0.0); 1 << n_qubits] }
    }

    pub fn from_amplitudes(n_qubits: usize, frame: usize, amps: Vec<C64>) -> BakerResult<Self> {
        if amps.len() != 1 << n_qubits {
            return Err(BakerError::Shape(format!(
                "{} amplitudes given for N = {n_qubits}",
                amps.len()
            )));
        }
        if frame > n_qubits {
            return Err(BakerError::Range(format!("frame {frame} exceeds N = {n_qubits}")));
        }
        Ok(Self { n_qubits, frame, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn check_frame(&self, expected: usize) -> BakerResult<()> {
        if self.frame != expected {
            return Err(BakerError::FrameMismatch { expected, got: self.frame });
        }
        Ok(())
    }

    /// Largest per-amplitude difference; `None` if shapes or frames differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.n_qubits != other.n_qubits || self.frame != other.frame {
            return None;
        }
        Some(self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Write the binary dump: magic, version, N, frame, then (re, im) pairs.
    pub fn write_dump<W: Write>(&self, mut out: W) -> BakerResult<()> {
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        out.write_all(&(self.n_qubits as u32).to_le_bytes())?;
        out.write_all(&(self.frame as u32).to_le_bytes())?;
        for a in &self.amps {
            out.write_all(&a.re.to_le_bytes())?;
            out.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> BakerResult<Self> {
        let mut header = [0u8; 16];
        input.read_exact(&mut header)?;
        if &header[0..4] != DUMP_MAGIC {
            return Err(BakerError::Shape("not a state dump (bad magic)".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        if word(4) != DUMP_VERSION {
            return Err(BakerError::Shape(format!("unsupported dump version {}", word(4))));
        }
        let n_qubits = word(8) as usize;
        let frame = word(12) as usize;
        if n_qubits > 40 {
            return Err(BakerError::Capacity(format!("dump with N = {n_qubits}")));
        }
        let mut amps = Vec::with_capacity(1 << n_qubits);
        let mut pair = [0u8; 16];
        for _ in 0..1usize << n_qubits {
            input.read_exact(&mut pair)?;
            let re = f64::from_le_bytes(pair[0..8].try_into().unwrap());
            let im = f64::from_le_bytes(pair[8..16].try_into().unwrap());
            amps.push(C64::new(re, im));
        }
        Self::from_amplitudes(n_qubits, frame, amps)
    }
}

pub fn basis_vector(n_qubits: usize, index: usize, frame: usize) -> BakerResult<StateVector> {
    if index >= 1 << n_qubits {
        return Err(BakerError::Range(format!("index {index} outside 0..2^{n_qubits}")));
    }
    let mut v = StateVector::zeros(n_qubits, frame);
    v.amps[index] = C64::new(1.0, 0.0);
    Ok(v)
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner(a: &StateVector, b: &StateVector) -> BakerResult<C64> {
    if a.n_qubits != b.n_qubits {
        return Err(BakerError::Shape(format!("N = {} vs N = {}", a.n_qubits, b.n_qubits)));
    }
    b.check_frame(a.frame)?;
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

/// Maps frame-`col_frame` coordinates to frame-`row_frame` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    n_qubits: usize,
    row_frame: usize,
    col_frame: usize,
    data: Vec<C64>,
}

fn check_dense_capacity(n_qubits: usize, limit: usize) -> BakerResult<()> {
    if n_qubits > limit {
        return Err(BakerError::Capacity(format!(
            "dense {0}x{0} matrix for N = {n_qubits} exceeds N_dense_max = {limit}",
            1usize << n_qubits
        )));
    }
    Ok(())
}

impl DenseOperator {
    pub fn zeros(n_qubits: usize, row_frame: usize, col_frame: usize) -> BakerResult<Self> {
        Self::zeros_with_limit(n_qubits, row_frame, col_frame, N_DENSE_MAX)
    }

    pub fn zeros_with_limit(n_qubits: usize, row_frame: usize, col_frame: usize, limit: usize) -> BakerResult<Self> {
        check_dense_capacity(n_qubits, limit)?;
        let dim = 1usize << n_qubits;
        Ok(Self { n_qubits, row_frame, col_frame, data: vec![C64::new(0.0, 0.0); dim * dim] })
    }

    pub fn identity(n_qubits: usize, frame: usize) -> BakerResult<Self> {
        let mut op = Self::zeros(n_qubits, frame, frame)?;
        for i in 0..op.dim() {
            op.set(i, i, C64::new(1.0, 0.0));
        }
        Ok(op)
    }

    /// Build from columns, each expressed in `row_frame`.
    pub fn from_columns(n_qubits: usize, row_frame: usize, col_frame: usize, columns: &[StateVector]) -> BakerResult<Self> {
        let mut op = Self::zeros(n_qubits, row_frame, col_frame)?;
        if columns.len() != op.dim() {
            return Err(BakerError::Shape(format!("{} columns for dimension {}", columns.len(), op.dim())));
        }
        for (j, col) in columns.iter().enumerate() {
            col.check_frame(row_frame)?;
            for (i, &a) in col.amplitudes().iter().enumerate() {
                op.set(i, j, a);
            }
        }
        Ok(op)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }
    pub fn row_frame(&self) -> usize {
        self.row_frame
    }
    pub fn col_frame(&self) -> usize {
        self.col_frame
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        let dim = self.dim();
        self.data[i * dim + j] = value;
    }

    pub fn row(&self, i: usize) -> &[C64] {
        let dim = self.dim();
        &self.data[i * dim..(i + 1) * dim]
    }

    /// Same entries, relabelled frames. Only for operators whose meaning is
    /// frame-independent (identity, or explicit basis changes).
    pub fn with_frames(mut self, row_frame: usize, col_frame: usize) -> Self {
        self.row_frame = row_frame;
        self.col_frame = col_frame;
        self
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

pub fn apply_dense(op: &DenseOperator, psi: &StateVector) -> BakerResult<StateVector> {
    psi.check_frame(op.col_frame)?;
    if psi.n_qubits != op.n_qubits {
        return Err(BakerError::Shape(format!("operator N = {} vs state N = {}", op.n_qubits, psi.n_qubits)));
    }
    let amps = (0..op.dim())
        .map(|i| op.row(i).iter().zip(&psi.amps).map(|(a, b)| a * b).sum())
        .collect();
    StateVector::from_amplitudes(op.n_qubits, op.row_frame, amps)
}

/// Matrix product `a·b`.
pub fn compose_dense(a: &DenseOperator, b: &DenseOperator) -> BakerResult<DenseOperator> {
    if a.n_qubits != b.n_qubits {
        return Err(BakerError::Shape(format!("N = {} vs N = {}", a.n_qubits, b.n_qubits)));
    }
    if a.col_frame != b.row_frame {
        return Err(BakerError::FrameMismatch { expected: a.col_frame, got: b.row_frame });
    }
    let dim = a.dim();
    let mut out = DenseOperator {
        n_qubits: a.n_qubits,
        row_frame: a.row_frame,
        col_frame: b.col_frame,
        data: vec![C64::new(0.0, 0.0); dim * dim],
    };
    for i in 0..dim {
        let out_row = &mut out.data[i * dim..(i + 1) * dim];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

pub fn adjoint_dense(a: &DenseOperator) -> DenseOperator {
    let dim = a.dim();
    let mut data = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            data[j * dim + i] = a.get(i, j).conj();
        }
    }
    DenseOperator { n_qubits: a.n_qubits, row_frame: a.col_frame, col_frame: a.row_frame, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, n_qubits: usize, frame: usize) -> StateVector {
        let amps = (0..1 << n_qubits).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        StateVector::from_amplitudes(n_qubits, frame, amps).unwrap()
    }

    fn random_op(rng: &mut ChaCha8Rng, n_qubits: usize) -> DenseOperator {
        let mut op = DenseOperator::zeros(n_qubits, 0, 0).unwrap();
        for i in 0..op.dim() {
            for j in 0..op.dim() {
                op.set(i, j, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            }
        }
        op
    }

    #[test]
    fn basis_vectors() {
        let e0 = basis_vector(2, 0, 0).unwrap();
        let e3 = basis_vector(2, 3, 0).unwrap();
        assert_eq!(e0.amplitudes()[0], C64::new(1.0, 0.0));
        assert_eq!(e3.amplitudes()[3], C64::new(1.0, 0.0));
        assert_eq!(basis_vector(2, 4, 0).unwrap_err().kind(), "RANGE");
        for i in 0..4 {
            for j in 0..4 {
                let v = inner(&basis_vector(2, i, 0).unwrap(), &basis_vector(2, j, 0).unwrap()).unwrap();
                assert_eq!(v, C64::new((i == j) as u8 as f64, 0.0));
            }
        }
    }

    #[test]
    fn inner_is_conjugate_linear() {
        let c = C64::new(0.3, -1.2);
        let e0 = basis_vector(3, 0, 1).unwrap();
        let mut scaled = e0.clone();
        scaled.amplitudes_mut()[0] *= c;
        assert_eq!(inner(&scaled, &e0).unwrap(), c.conj());
        let other_frame = basis_vector(3, 0, 2).unwrap();
        assert_eq!(inner(&e0, &other_frame).unwrap_err().kind(), "FRAME_MISMATCH");
    }

    #[test]
    fn dense_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_op(&mut rng, 3);
        let b = random_op(&mut rng, 3);
        let psi = random_state(&mut rng, 3, 0);
        let id = DenseOperator::identity(3, 0).unwrap();
        assert_eq!(apply_dense(&id, &psi).unwrap(), psi);
        let zero = DenseOperator::zeros(3, 0, 0).unwrap();
        assert_eq!(apply_dense(&zero, &psi).unwrap().norm(), 0.0);

        let ab = compose_dense(&a, &b).unwrap();
        let lhs = apply_dense(&ab, &psi).unwrap();
        let rhs = apply_dense(&a, &apply_dense(&b, &psi).unwrap()).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);

        assert_eq!(adjoint_dense(&adjoint_dense(&a)), a);
        let lhs = adjoint_dense(&ab);
        let rhs = compose_dense(&adjoint_dense(&b), &adjoint_dense(&a)).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        assert_eq!(compose_dense(&id, &a).unwrap(), a);
    }

    #[test]
    fn frames_are_checked() {
        let op = DenseOperator::identity(2, 0).unwrap().with_frames(1, 0);
        assert_eq!(adjoint_dense(&op).row_frame(), 0);
        assert_eq!(adjoint_dense(&op).col_frame(), 1);
        let psi = basis_vector(2, 1, 1).unwrap();
        assert_eq!(apply_dense(&op, &psi).unwrap_err().kind(), "FRAME_MISMATCH");
        let psi = basis_vector(2, 1, 0).unwrap();
        assert_eq!(apply_dense(&op, &psi).unwrap().frame(), 1);
        assert!(compose_dense(&op, &op).is_err());
    }

    #[test]
    fn dense_capacity() {
        assert_eq!(DenseOperator::zeros(13, 0, 0).unwrap_err().kind(), "CAPACITY");
        assert!(DenseOperator::zeros_with_limit(5, 0, 0, 4).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psi = random_state(&mut rng, 4, 2);
        let mut bytes = Vec::new();
        psi.write_dump(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 16 + 16 * 16);
        assert_eq!(&bytes[0..4], b"BHSV");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        let back = StateVector::read_dump(bytes.as_slice()).unwrap();
        assert_eq!(back, psi);
        bytes[0] = b'X';
        assert!(StateVector::read_dump(bytes.as_slice()).is_err());
    }
}
