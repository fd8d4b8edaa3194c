mod common;

use bovw_core::imgio::{decode, encode_pgm, integral_image, load_grayscale, GrayImage, PgmEncoding};
use bovw_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random::<f64>()).unwrap()
}

#[test]
fn ascii_graymap_is_normalized() {
    let img = decode(b"P2\n2 2\n255\n0 255\n255 0\n").unwrap();
    assert_eq!(img.pixels(), &[0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn binary_graymap_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let levels: Vec<f64> = (0..256).map(|_| f64::from(rng.random::<u8>()) / 255.0).collect();
    let img = GrayImage::new(16, 16, levels).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.pgm");
    std::fs::write(&path, encode_pgm(&img, PgmEncoding::Binary)).unwrap();
    assert_eq!(load_grayscale(&path).unwrap(), img);
    assert_eq!(decode(&encode_pgm(&img, PgmEncoding::Ascii)).unwrap(), img);
}

#[test]
fn color_png_is_rejected() {
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, 2, 2);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header().unwrap().write_image_data(&[0u8; 12]).unwrap();
    }
    assert!(matches!(decode(&bytes), Err(Error::UnsupportedFormat(_))));
}

#[test]
fn missing_file_is_reported() {
    assert!(matches!(load_grayscale("/nonexistent/x.pgm"), Err(Error::FileNotFound(_))));
}

#[test]
fn truncated_payload_is_corrupt() {
    assert!(matches!(decode(b"P5\n4 4\n255\n\x00\x01"), Err(Error::CorruptImage(_))));
}

#[test]
fn box_sums_match_naive_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let (w, h) = (rng.random_range(1..=96), rng.random_range(1..=96));
        let img = random_image(&mut rng, w, h);
        let ii = integral_image(&img);
        let total: f64 = img.pixels().iter().sum();
        assert!((ii.total() - total).abs() <= 1e-9 * total.max(1.0));
        for _ in 0..50 {
            let x0 = rng.random_range(-5..w as i64 + 5);
            let y0 = rng.random_range(-5..h as i64 + 5);
            let x1 = x0 + rng.random_range(0..40);
            let y1 = y0 + rng.random_range(0..40);
            let naive = common::naive_box_sum(img.pixels(), w, h, x0, y0, x1 - x0 + 1, y1 - y0 + 1);
            let got = ii.box_sum_or_zero(x0, y0, x1, y1);
            assert!((got - naive).abs() <= 1e-12 * naive.max(1.0), "{got} vs {naive}");
        }
    }
}

#[test]
fn table_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = random_image(&mut rng, 33, 21);
    let ii = integral_image(&img);
    for y in 0..21 {
        for x in 0..33 {
            if x > 0 {
                assert!(ii.at(x, y) >= ii.at(x - 1, y));
            }
            if y > 0 {
                assert!(ii.at(x, y) >= ii.at(x, y - 1));
            }
        }
    }
}
