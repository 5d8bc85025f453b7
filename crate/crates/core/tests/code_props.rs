use diffqec::{BitVector, ObservableMode, SurfaceCode};
use proptest::prelude::*;

fn code3() -> SurfaceCode {
    SurfaceCode::rotated(3).unwrap()
}

fn stabilizer_sum(code: &SurfaceCode, x_mask: u32, z_mask: u32) -> (BitVector, BitVector) {
    // X stabilizers act as X errors, Z stabilizers as Z errors
    let n = code.n_data();
    let mut gx = BitVector::zeros(n);
    let mut gz = BitVector::zeros(n);
    for (i, row) in code.h_x().rows().iter().enumerate() {
        if x_mask >> i & 1 == 1 {
            gx.xor_assign(row).unwrap();
        }
    }
    for (i, row) in code.h_z().rows().iter().enumerate() {
        if z_mask >> i & 1 == 1 {
            gz.xor_assign(row).unwrap();
        }
    }
    (gx, gz)
}

#[test]
fn structural_invariants_for_d3_to_d9() {
    for d in [3, 5, 7, 9] {
        let code = SurfaceCode::rotated(d).unwrap();
        code.validate().unwrap();
        assert_eq!(code.n_x() + code.n_z(), d * d - 1);
        assert!(code.h_x().mul_transpose(code.h_z()).unwrap().is_zero());
        assert_eq!(code.logical_x().weight(), d);
        assert_eq!(code.logical_z().weight(), d);
        assert!(code.logical_x().dot(code.logical_z()).unwrap());
        for s in code.x_stabilizers().iter().chain(code.z_stabilizers()) {
            assert!(s.support.len() == 2 || s.support.len() == 4);
        }
    }
}

#[test]
fn zero_error_has_zero_syndrome_and_logical_x_is_invisible() {
    let code = code3();
    let z = BitVector::zeros(9);
    let (sx, sz) = code.syndrome_of(&z, &z).unwrap();
    assert!(sx.is_zero() && sz.is_zero());
    let (_, sz) = code.syndrome_of(code.logical_x(), &z).unwrap();
    assert!(sz.is_zero());
    assert_eq!(code.logical_effect(code.logical_x(), &z, ObservableMode::Single).unwrap().as_slice(), &[1]);
}

#[test]
fn stabilizer_rows_act_trivially() {
    let code = code3();
    let zero = BitVector::zeros(9);
    for row in code.h_x().rows() {
        // an X-stabilizer applied as an X error
        assert!(code.logical_effect(row, &zero, ObservableMode::Dual).unwrap().is_zero());
    }
    for row in code.h_z().rows() {
        assert!(code.logical_effect(&zero, row, ObservableMode::Dual).unwrap().is_zero());
    }
    let mut lx_plus = code.logical_x().clone();
    lx_plus.xor_assign(code.h_x().row(0)).unwrap();
    assert_eq!(
        code.logical_effect(&lx_plus, &zero, ObservableMode::Single).unwrap(),
        code.logical_effect(code.logical_x(), &zero, ObservableMode::Single).unwrap()
    );
}

proptest! {
    #[test]
    fn syndrome_is_linear(a in 0u64..512, b in 0u64..512, c in 0u64..512, e in 0u64..512) {
        let code = code3();
        let (x1, z1) = (BitVector::from_mask(9, a), BitVector::from_mask(9, b));
        let (x2, z2) = (BitVector::from_mask(9, c), BitVector::from_mask(9, e));
        let (s1x, s1z) = code.syndrome_of(&x1, &z1).unwrap();
        let (s2x, s2z) = code.syndrome_of(&x2, &z2).unwrap();
        let (sx, sz) = code.syndrome_of(&x1.xor(&x2).unwrap(), &z1.xor(&z2).unwrap()).unwrap();
        prop_assert_eq!(sx, s1x.xor(&s2x).unwrap());
        prop_assert_eq!(sz, s1z.xor(&s2z).unwrap());
    }

    #[test]
    fn stabilizers_change_neither_syndrome_nor_logical(
        d in prop::sample::select(vec![3usize, 5]),
        seed in any::<u64>(),
        gx in any::<u32>(),
        gz in any::<u32>(),
    ) {
        let code = SurfaceCode::rotated(d).unwrap();
        let n = code.n_data();
        let x = BitVector::from_bools((0..n).map(|i| (seed.rotate_left(i as u32) ^ (i as u64 * 0x9E37)) & 1 == 1));
        let z = BitVector::from_bools((0..n).map(|i| (seed.rotate_right(i as u32 + 3)) & 1 == 1));
        let (sx_g, sz_g) = stabilizer_sum(&code, gx, gz);
        let x2 = x.xor(&sx_g).unwrap();
        let z2 = z.xor(&sz_g).unwrap();
        prop_assert_eq!(code.syndrome_of(&x, &z).unwrap(), code.syndrome_of(&x2, &z2).unwrap());
        prop_assert_eq!(
            code.logical_effect(&x, &z, ObservableMode::Dual).unwrap(),
            code.logical_effect(&x2, &z2, ObservableMode::Dual).unwrap()
        );
    }

    #[test]
    fn bitvector_xor_is_an_involution(bits in prop::collection::vec(0u8..2, 0..64), other_seed in any::<u64>()) {
        let a = BitVector::from_bits(bits.clone());
        let b = BitVector::from_bools((0..bits.len()).map(|i| other_seed >> (i % 64) & 1 == 1));
        let c = a.xor(&b).unwrap();
        prop_assert_eq!(c.len(), a.len());
        prop_assert!(c.iter().count() == a.len());
        prop_assert_eq!(c.xor(&b).unwrap(), a.clone());
        prop_assert!(a.as_slice().iter().all(|&v| v <= 1));
    }
}
