use std::path::Path;

use rayon::prelude::*;
use sceneset_core::geometry::{Aabb, Point, RotatedRect};
use sceneset_core::imaging::{
    crop_axis_aligned, crop_char_strip, crop_rotated, load_image, RasterImage, Side,
};
use sceneset_testkit as oracle;

fn fixture() -> RasterImage {
    load_image(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/asymmetric_7x5.pgm")).unwrap()
}

#[test]
fn pgm_fixture_loads_as_gray() {
    let img = fixture();
    assert_eq!((img.width(), img.height(), img.channels()), (7, 5, 1));
    assert_eq!(img.get(0, 0, 0), 1);
    assert_eq!(img.get(6, 4, 0), 58);
}

#[test]
fn quarter_turn_matches_rotate_then_crop() {
    let img = fixture();
    let rect = RotatedRect { center: Point::new(3.5, 2.5), width: 5.0, height: 3.0, angle: 90.0 };
    let got = crop_rotated(&img, &rect).unwrap();
    assert_eq!((got.width(), got.height()), (5, 3));

    let turned = oracle::quarter_turn_ccw(img.pixels(), 7, 5);
    let turned = RasterImage::new(5, 7, 1, turned).unwrap();
    // the rect in the turned frame: u along source y, v along source -x
    let want = crop_axis_aligned(&turned, &Aabb::new(0.0, 2.0, 5.0, 5.0)).unwrap();
    assert_eq!(got.width(), want.width());
    for (a, b) in got.pixels().iter().zip(want.pixels()) {
        assert!((*a as i32 - *b as i32).abs() <= 1, "{:?} vs {:?}", got.pixels(), want.pixels());
    }
}

#[test]
fn forty_five_degrees_on_checkerboard() {
    let (w, h) = (64u32, 64u32);
    let board = RasterImage::from_fn(w, h, |x, y| if (x / 8 + y / 8) % 2 == 0 { 230 } else { 20 }).unwrap();
    let rect = RotatedRect { center: Point::new(32.0, 32.0), width: 30.0, height: 20.0, angle: 45.0 };
    let got = crop_rotated(&board, &rect).unwrap();

    let rotated = oracle::rotate_gray(board.pixels(), w as usize, h as usize, 32.0, 32.0, 45.0);
    let rotated = RasterImage::new(w, h, 1, rotated).unwrap();
    let want = crop_axis_aligned(&rotated, &Aabb::new(17.0, 22.0, 47.0, 42.0)).unwrap();

    assert_eq!((got.width(), got.height()), (want.width(), want.height()));
    let close = got.pixels().iter().zip(want.pixels()).filter(|(a, b)| (**a as i32 - **b as i32).abs() <= 1).count();
    let frac = close as f64 / got.pixels().len() as f64;
    assert!(frac >= 0.99, "only {frac:.4} of pixels within 1 level");
}

#[test]
fn crops_never_grow_and_are_deterministic() {
    let img = RasterImage::from_fn(120, 40, |x, y| ((x * 7 + y * 13) % 251) as u8).unwrap();
    let rects: Vec<RotatedRect> = (0..64)
        .map(|i| RotatedRect {
            center: Point::new(20.0 + i as f64, 10.0 + (i % 20) as f64),
            width: 10.0 + (i % 30) as f64,
            height: 4.0 + (i % 9) as f64,
            angle: -80.0 + 2.5 * i as f64,
        })
        .collect();
    let serial: Vec<RasterImage> = rects.iter().map(|r| crop_rotated(&img, r).unwrap()).collect();
    let parallel: Vec<RasterImage> = rects.par_iter().map(|r| crop_rotated(&img, r).unwrap()).collect();
    assert_eq!(serial, parallel);
    for out in &serial {
        assert!(out.width() as u64 * out.height() as u64 <= img.width() as u64 * img.height() as u64);
    }
    let (strip, label) = crop_char_strip(&img, "WORD", Side::Right).unwrap();
    assert!(strip.width() < img.width());
    assert_eq!(label.chars().count(), 3);
}
