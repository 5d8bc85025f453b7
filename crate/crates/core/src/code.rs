//! Rotated surface code geometry and its GF(2) stabilizer algebra.
//!
//! Data qubits sit at integer coordinates `(row, col)` with `0 <= row, col < d`
//! and index `row * d + col`. A plaquette is named by the data qubit at its
//! upper-left corner, so plaquette `(r, c)` with `-1 <= r, c <= d - 1` touches
//! the data qubits `(r, c)`, `(r, c + 1)`, `(r + 1, c)` and `(r + 1, c + 1)`
//! that exist. Bulk plaquettes are Z-type when `r + c` is odd; weight-two
//! Z plaquettes sit on the top and bottom edges and weight-two X plaquettes on
//! the left and right edges.

use serde::Serialize;

use crate::bits::{BinaryMatrix, BitVector};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PauliKind {
    X,
    Z,
}

/// One stabilizer generator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stabilizer {
    pub kind: PauliKind,
    /// Upper-left data corner of the plaquette; its center is at `+0.5` in both axes.
    pub plaquette: (i32, i32),
    pub support: Vec<usize>,
}

impl Stabilizer {
    pub fn center(&self) -> (f64, f64) {
        (self.plaquette.0 as f64 + 0.5, self.plaquette.1 as f64 + 0.5)
    }

    /// Cell of the `(d+1) × (d+1)` integer grid holding this plaquette.
    pub fn grid_cell(&self) -> (usize, usize) {
        ((self.plaquette.0 + 1) as usize, (self.plaquette.1 + 1) as usize)
    }
}

/// Which logical observables a label carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableMode {
    /// Single-basis memory: one bit, the Z observable flipped by X-type errors.
    #[default]
    Single,
    /// Both observables: bit 0 as above, bit 1 the X observable flipped by Z-type errors.
    Dual,
}

impl ObservableMode {
    pub fn label_len(self) -> usize {
        match self {
            ObservableMode::Single => 1,
            ObservableMode::Dual => 2,
        }
    }

    pub fn from_label_len(l: usize) -> Result<Self> {
        match l {
            1 => Ok(ObservableMode::Single),
            2 => Ok(ObservableMode::Dual),
            _ => Err(Error::InvalidArgument(format!("label length {l} is not 1 or 2"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SurfaceCode {
    distance: usize,
    data_coords: Vec<(usize, usize)>,
    x_stabilizers: Vec<Stabilizer>,
    z_stabilizers: Vec<Stabilizer>,
    h_x: BinaryMatrix,
    h_z: BinaryMatrix,
    logical_x: BitVector,
    logical_z: BitVector,
}

fn plaquette_support(d: usize, r: i32, c: i32) -> Vec<usize> {
    let mut support = Vec::with_capacity(4);
    for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        let (rr, cc) = (r + dr, c + dc);
        if rr >= 0 && cc >= 0 && (rr as usize) < d && (cc as usize) < d {
            support.push(rr as usize * d + cc as usize);
        }
    }
    support
}

impl SurfaceCode {
    /// Builds the distance-`d` rotated surface code.
    pub fn rotated(d: usize) -> Result<Self> {
        if d < 3 || d % 2 == 0 {
            return Err(Error::InvalidDistance(d));
        }
        let di = d as i32;
        let mut x_stabilizers = Vec::new();
        let mut z_stabilizers = Vec::new();
        for r in -1..di {
            for c in -1..di {
                let z_type = (r + c).rem_euclid(2) == 1;
                let row_edge = r == -1 || r == di - 1;
                let col_edge = c == -1 || c == di - 1;
                let keep = match (row_edge, col_edge) {
                    (false, false) => true,
                    (true, true) => false,
                    (true, false) => z_type,
                    (false, true) => !z_type,
                };
                if !keep {
                    continue;
                }
                let stab = Stabilizer {
                    kind: if z_type { PauliKind::Z } else { PauliKind::X },
                    plaquette: (r, c),
                    support: plaquette_support(d, r, c),
                };
                if z_type {
                    z_stabilizers.push(stab);
                } else {
                    x_stabilizers.push(stab);
                }
            }
        }
        let n = d * d;
        let supports = |s: &[Stabilizer]| s.iter().map(|s| s.support.clone()).collect::<Vec<_>>();
        let h_x = BinaryMatrix::from_supports(n, &supports(&x_stabilizers));
        let h_z = BinaryMatrix::from_supports(n, &supports(&z_stabilizers));
        let logical_x = BitVector::from_support(n, &(0..d).collect::<Vec<_>>());
        let logical_z = BitVector::from_support(n, &(0..d).map(|r| r * d).collect::<Vec<_>>());
        let data_coords = (0..n).map(|q| (q / d, q % d)).collect();
        Ok(Self {
            distance: d,
            data_coords,
            x_stabilizers,
            z_stabilizers,
            h_x,
            h_z,
            logical_x,
            logical_z,
        })
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    pub fn n_data(&self) -> usize {
        self.distance * self.distance
    }

    pub fn data_coords(&self) -> &[(usize, usize)] {
        &self.data_coords
    }

    pub fn x_stabilizers(&self) -> &[Stabilizer] {
        &self.x_stabilizers
    }

    pub fn z_stabilizers(&self) -> &[Stabilizer] {
        &self.z_stabilizers
    }

    pub fn stabilizers(&self, kind: PauliKind) -> &[Stabilizer] {
        match kind {
            PauliKind::X => &self.x_stabilizers,
            PauliKind::Z => &self.z_stabilizers,
        }
    }

    pub fn n_x(&self) -> usize {
        self.x_stabilizers.len()
    }

    pub fn n_z(&self) -> usize {
        self.z_stabilizers.len()
    }

    /// Total stabilizer count, `d² − 1`.
    pub fn n_stabilizers(&self) -> usize {
        self.n_x() + self.n_z()
    }

    pub fn h_x(&self) -> &BinaryMatrix {
        &self.h_x
    }

    pub fn h_z(&self) -> &BinaryMatrix {
        &self.h_z
    }

    pub fn check_matrix(&self, kind: PauliKind) -> &BinaryMatrix {
        match kind {
            PauliKind::X => &self.h_x,
            PauliKind::Z => &self.h_z,
        }
    }

    pub fn logical_x(&self) -> &BitVector {
        &self.logical_x
    }

    pub fn logical_z(&self) -> &BitVector {
        &self.logical_z
    }

    /// Side length of the syndrome grid, `d + 1`.
    pub fn grid_side(&self) -> usize {
        self.distance + 1
    }

    /// Returns `(s_x, s_z)`: X-stabilizers see Z-type errors, Z-stabilizers see X-type errors.
    pub fn syndrome_of(&self, x_err: &BitVector, z_err: &BitVector) -> Result<(BitVector, BitVector)> {
        check_len(self.n_data(), x_err.len())?;
        check_len(self.n_data(), z_err.len())?;
        Ok((self.h_x.mul_vec(z_err)?, self.h_z.mul_vec(x_err)?))
    }

    /// Logical flips caused by an error pair.
    pub fn logical_effect(
        &self,
        x_err: &BitVector,
        z_err: &BitVector,
        mode: ObservableMode,
    ) -> Result<BitVector> {
        check_len(self.n_data(), x_err.len())?;
        check_len(self.n_data(), z_err.len())?;
        let z_obs = self.logical_z.dot(x_err)?;
        Ok(match mode {
            ObservableMode::Single => BitVector::from_bools([z_obs]),
            ObservableMode::Dual => BitVector::from_bools([z_obs, self.logical_x.dot(z_err)?]),
        })
    }

    /// Checks every structural invariant of the construction.
    pub fn validate(&self) -> Result<()> {
        let d = self.distance;
        let fail = |m: &str| Err(Error::InvalidArgument(format!("d={d}: {m}")));
        if self.n_stabilizers() != d * d - 1 {
            return fail("stabilizer count is not d²−1");
        }
        if !self.h_x.mul_transpose(&self.h_z)?.is_zero() {
            return fail("X and Z stabilizers do not commute");
        }
        for s in self.x_stabilizers.iter().chain(&self.z_stabilizers) {
            let (r, c) = s.plaquette;
            let bulk = r >= 0 && c >= 0 && r < d as i32 - 1 && c < d as i32 - 1;
            let expected = if bulk { 4 } else { 2 };
            if s.support.len() != expected {
                return fail("stabilizer weight is wrong");
            }
        }
        if !self.h_z.mul_vec(&self.logical_x)?.is_zero() || !self.h_x.mul_vec(&self.logical_z)?.is_zero() {
            return fail("logical operator fails to commute with stabilizers");
        }
        if !self.logical_x.dot(&self.logical_z)? {
            return fail("logical operators commute");
        }
        if self.logical_x.weight() != d || self.logical_z.weight() != d {
            return fail("logical weight is not d");
        }
        Ok(())
    }

    /// Structured description for debugging: matrices as row lists of 0/1.
    pub fn describe(&self) -> serde_json::Value {
        let stabs = |s: &[Stabilizer]| {
            s.iter()
                .map(|s| serde_json::json!({ "center": s.center(), "support": s.support }))
                .collect::<Vec<_>>()
        };
        serde_json::json!({
            "distance": self.distance,
            "n_data": self.n_data(),
            "data_coords": self.data_coords,
            "x_stabilizers": stabs(&self.x_stabilizers),
            "z_stabilizers": stabs(&self.z_stabilizers),
            "h_x": self.h_x.to_lists(),
            "h_z": self.h_z.to_lists(),
            "logical_x": self.logical_x.as_slice(),
            "logical_z": self.logical_z.as_slice(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_distances() {
        for d in [0, 1, 2, 4, 6] {
            assert!(matches!(SurfaceCode::rotated(d), Err(Error::InvalidDistance(_))));
        }
    }

    #[test]
    fn invariants_hold_for_small_distances() {
        for d in [3, 5, 7, 9] {
            let code = SurfaceCode::rotated(d).unwrap();
            code.validate().unwrap();
            assert_eq!(code.n_data(), d * d);
            assert_eq!(code.n_x(), code.n_z());
        }
    }

    #[test]
    fn d3_counts_match_enumerated_layout() {
        // Independent count: (d-1)² bulk plaquettes plus (d-1)/2 per edge.
        let code = SurfaceCode::rotated(3).unwrap();
        let bulk = 2 * 2;
        let edges = 4 * 1;
        assert_eq!(code.n_stabilizers(), bulk + edges);
        assert_eq!(code.n_stabilizers(), 8);
        let code5 = SurfaceCode::rotated(5).unwrap();
        assert_eq!(code5.n_data(), 25);
        assert_eq!(code5.n_stabilizers(), 24);
    }

    #[test]
    fn bulk_qubits_touch_two_z_plaquettes() {
        for d in [3, 5] {
            let code = SurfaceCode::rotated(d).unwrap();
            for r in 1..d - 1 {
                for c in 1..d - 1 {
                    let q = r * d + c;
                    let touching = code.z_stabilizers().iter().filter(|s| s.support.contains(&q)).count();
                    assert_eq!(touching, 2);
                    let x = BitVector::from_support(code.n_data(), &[q]);
                    let (_, s_z) = code.syndrome_of(&x, &BitVector::zeros(code.n_data())).unwrap();
                    assert_eq!(s_z.weight(), 2);
                }
            }
        }
    }

    #[test]
    fn every_qubit_is_checked_by_both_types() {
        let code = SurfaceCode::rotated(5).unwrap();
        for q in 0..code.n_data() {
            for kind in [PauliKind::X, PauliKind::Z] {
                let k = code.stabilizers(kind).iter().filter(|s| s.support.contains(&q)).count();
                assert!((1..=2).contains(&k));
            }
        }
    }

    #[test]
    fn logical_effects() {
        let code = SurfaceCode::rotated(3).unwrap();
        let zero = BitVector::zeros(9);
        let l = code.logical_effect(code.logical_x(), &zero, ObservableMode::Single).unwrap();
        assert_eq!(l.as_slice(), &[1]);
        let (_, s_z) = code.syndrome_of(code.logical_x(), &zero).unwrap();
        assert!(s_z.is_zero());
        for row in code.h_x().rows() {
            let l = code.logical_effect(row, &zero, ObservableMode::Single).unwrap();
            assert!(l.is_zero());
        }
        let lx_plus_stab = code.logical_x().xor(code.h_x().row(0)).unwrap();
        // GF(2): logical_z · (logical_x ⊕ g) = 1 ⊕ (logical_z · g) = 1 ⊕ 0.
        let expected = code.logical_z().dot(code.logical_x()).unwrap() ^ code.logical_z().dot(code.h_x().row(0)).unwrap();
        let l = code.logical_effect(&lx_plus_stab, &zero, ObservableMode::Single).unwrap();
        assert_eq!(l.get(0), expected);
        assert!(l.get(0));
        let dual = code.logical_effect(&zero, code.logical_z(), ObservableMode::Dual).unwrap();
        assert_eq!(dual.as_slice(), &[0, 1]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let code = SurfaceCode::rotated(3).unwrap();
        assert!(code.syndrome_of(&BitVector::zeros(8), &BitVector::zeros(9)).is_err());
        assert!(code
            .logical_effect(&BitVector::zeros(9), &BitVector::zeros(4), ObservableMode::Single)
            .is_err());
    }

    #[test]
    fn describe_lists_matrices() {
        let code = SurfaceCode::rotated(3).unwrap();
        let doc = code.describe();
        assert_eq!(doc["h_x"].as_array().unwrap().len(), 4);
        assert_eq!(doc["h_z"][0].as_array().unwrap().len(), 9);
    }
}
