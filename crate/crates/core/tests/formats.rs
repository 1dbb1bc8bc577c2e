//! Byte-exact round-trips for every image container.

use gridtarget::imgio::{
    read_mrc, read_pgm, read_pmap, read_png, write_mrc, write_pgm, write_pmap, write_png, MrcMode,
};
use gridtarget::{GrayImage, ProbabilityMap};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..24, 1usize..24)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mrc_float((w, h) in dims(), seed: u64) {
        let data: Vec<f64> = (0..w * h).map(|i| f32::from_bits((seed as u32 ^ (i as u32).wrapping_mul(2654435761)) & 0x3fff_ffff) as f64).collect();
        let img = GrayImage::new(w, h, data).unwrap();
        let back = read_mrc(&write_mrc(&img, MrcMode::Float32).unwrap()).unwrap();
        prop_assert_eq!((back.width, back.height), (w, h));
        prop_assert!(back.data.iter().zip(&img.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn mrc_integer_modes((w, h) in dims(), vals in prop::collection::vec(0i32..128, 576)) {
        let data: Vec<f64> = vals[..w * h].iter().map(|&v| v as f64).collect();
        let img = GrayImage::new(w, h, data.clone()).unwrap();
        prop_assert_eq!(read_mrc(&write_mrc(&img, MrcMode::Int8).unwrap()).unwrap().data, data.clone());
        prop_assert_eq!(read_mrc(&write_mrc(&img, MrcMode::Int16).unwrap()).unwrap().data, data.clone());
        let shifted = GrayImage::new(w, h, data.iter().map(|v| v * 500.0).collect()).unwrap();
        prop_assert_eq!(read_mrc(&write_mrc(&shifted, MrcMode::Uint16).unwrap()).unwrap().data, shifted.data);
    }

    #[test]
    fn pgm_and_png((w, h) in dims(), vals in prop::collection::vec(0u16..=u16::MAX, 576), wide: bool) {
        let data: Vec<f64> = vals[..w * h].iter().map(|&v| if wide { v as f64 } else { (v >> 8) as f64 }).collect();
        let img = GrayImage::new(w, h, data.clone()).unwrap();
        prop_assert_eq!(read_pgm(&write_pgm(&img, wide).unwrap()).unwrap().data, data.clone());
        prop_assert_eq!(read_png(&write_png(&img, wide).unwrap()).unwrap().data, data);
    }

    #[test]
    fn pmap((w, h) in dims(), vals in prop::collection::vec(0.0f32..=1.0, 576)) {
        let map = ProbabilityMap::new(w, h, vals[..w * h].to_vec()).unwrap();
        let back = read_pmap(&write_pmap(&map)).unwrap();
        prop_assert_eq!((back.width, back.height), (w, h));
        prop_assert!(back.data.iter().zip(&map.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn truncated_inputs_are_rejected() {
    let img = GrayImage::new(4, 3, vec![1.0; 12]).unwrap();
    let mrc = write_mrc(&img, MrcMode::Float32).unwrap();
    assert!(read_mrc(&mrc[..mrc.len() - 1]).is_err());
    let pgm = write_pgm(&img, false).unwrap();
    assert!(read_pgm(&pgm[..pgm.len() - 1]).is_err());
    let pm = write_pmap(&ProbabilityMap::zeros(4, 3));
    assert!(read_pmap(&pm[..pm.len() - 1]).is_err());
}
