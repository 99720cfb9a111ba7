mod common;

use proptest::prelude::*;
use slidepress_core::slide_io::{
    encode_wtif, generate_synthetic, open_slide_bytes, write_wtif, Pattern, SlideError, StorageCompression,
    SyntheticSpec, WtifOptions,
};
use slidepress_core::{open_slide, RasterTile, Region};

fn noise(w: u32, h: u32, seed: u64) -> RasterTile {
    SyntheticSpec::new(w, h, Pattern::Noise).with_seed(seed).render().unwrap()
}

#[test]
fn checker_fixture_reports_generator_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::new(
        4096,
        3072,
        Pattern::Checkerboard {
            cell: 64,
            a: [0, 0, 0],
            b: [255, 255, 255],
        },
    )
    .with_levels(3);
    generate_synthetic(&spec, &dir.path().join("checker_4096x3072.wtif")).unwrap();
    let src = open_slide(&dir.path().join("checker_4096x3072.wtif")).unwrap();
    assert_eq!((src.base_width(), src.base_height()), (4096, 3072));
    let dims: Vec<_> = src.levels().iter().map(|l| (l.width, l.height)).collect();
    assert_eq!(dims, [(4096, 3072), (2048, 1536), (1024, 768)]);
    assert_eq!(src.objective_power(), 40.0);
    assert_eq!(src.mpp(), (Some(0.25), Some(0.25)));
}

#[test]
fn single_tile_round_trips_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let img = noise(256, 256, 7);
    let path = dir.path().join("one_tile_256.wtif");
    write_wtif(&path, &[img.clone()], &WtifOptions::default()).unwrap();
    let src = open_slide(&path).unwrap();
    assert_eq!(src.levels().len(), 1);
    assert_eq!(src.objective_power(), 40.0);
    assert!(!src.warnings().is_empty(), "missing sidecar is reported");
    let back = src.read_region(&Region::new(0, 0, 256, 256, 40.0)).unwrap();
    assert_eq!(back, img);
}

#[test]
fn truncated_header_is_malformed() {
    for n in 0..8 {
        let bytes = b"II*\0\x08\0\0\0"[..n].to_vec();
        assert!(matches!(open_slide_bytes(bytes), Err(SlideError::MalformedContainer(_))));
    }
}

#[test]
fn missing_file_is_typed() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        open_slide(&dir.path().join("absent.wtif")),
        Err(SlideError::MissingFile(_))
    ));
}

#[test]
fn quadrant_centres_read_back_their_colour() {
    let colors = [[200, 10, 10], [10, 200, 10], [10, 10, 200], [90, 90, 90]];
    let src = SyntheticSpec::new(512, 512, Pattern::Quadrants(colors));
    let dir = tempfile::tempdir().unwrap();
    let src = generate_synthetic(&src, &dir.path().join("q.wtif")).unwrap();
    for (i, (x, y)) in [(128, 128), (384, 128), (128, 384), (384, 384)].into_iter().enumerate() {
        let t = src.read_region(&Region::new(x, y, 1, 1, 40.0)).unwrap();
        assert_eq!(t.pixel(0, 0), colors[i]);
    }
}

#[test]
fn half_magnification_equals_box_filter_of_base() {
    let dir = tempfile::tempdir().unwrap();
    let base = noise(512, 512, 3);
    let path = dir.path().join("n.wtif");
    write_wtif(&path, &[base.clone()], &WtifOptions::default()).unwrap();
    let src = open_slide(&path).unwrap();
    let half = src.read_region(&Region::new(0, 0, 256, 256, 20.0)).unwrap();
    assert_eq!(half, common::box_filter(&base, 2));
    let quarter = src.read_region(&Region::new(0, 0, 128, 128, 10.0)).unwrap();
    assert_eq!(quarter, common::box_filter(&common::box_filter(&base, 2), 2));
}

#[test]
fn dimensions_at_examples() {
    let dir = tempfile::tempdir().unwrap();
    for (w, h, m, expect) in [
        (4096, 3072, 40.0, (4096, 3072)),
        (4096, 3072, 10.0, (1024, 768)),
        (4097, 3072, 20.0, (2049, 1536)),
    ] {
        let spec = SyntheticSpec::new(w, h, Pattern::Solid([1, 2, 3]));
        let src = slidepress_core::SlideSource::from_synthetic(&spec, &dir.path().join("s.synth")).unwrap();
        assert_eq!(src.dimensions_at(m).unwrap(), expect);
    }
    let spec = SyntheticSpec::new(100, 100, Pattern::Solid([0, 0, 0]));
    let src = slidepress_core::SlideSource::from_synthetic(&spec, &dir.path().join("s.synth")).unwrap();
    for m in [0.0, -1.0, 40.5, f64::NAN] {
        assert!(matches!(
            src.dimensions_at(m),
            Err(SlideError::MagnificationOutOfRange { .. })
        ));
    }
}

#[test]
fn region_out_of_bounds_is_typed() {
    let spec = SyntheticSpec::new(100, 80, Pattern::Solid([0, 0, 0]));
    let src = slidepress_core::SlideSource::from_synthetic(&spec, std::path::Path::new("x.synth")).unwrap();
    for r in [
        Region::new(90, 0, 11, 10, 40.0),
        Region::new(0, 0, 0, 10, 40.0),
        Region::new(0, 40, 10, 1, 20.0),
    ] {
        assert!(matches!(src.read_region(&r), Err(SlideError::RegionOutOfBounds { .. })), "{r:?}");
    }
}

#[test]
fn solid_white_synthetic_is_white_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::new(1024, 1024, Pattern::Solid([255, 255, 255])).with_power(20.0);
    let src = generate_synthetic(&spec, &dir.path().join("white.wtif")).unwrap();
    assert_eq!(src.objective_power(), 20.0);
    let all = src.read_region(&Region::new(0, 0, 1024, 1024, 20.0)).unwrap();
    assert!(all.pixels().all(|p| p == [255, 255, 255]));
}

#[test]
fn spot_signal_count_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::new(
        1024,
        768,
        Pattern::Spots {
            count: 50,
            sigma: 5.0,
            peak: 250,
            region: None,
        },
    )
    .with_seed(11);
    let truth = spec.scene().unwrap().ground_truth();
    let src = generate_synthetic(&spec, &dir.path().join("spots.wtif")).unwrap();
    let all = src.read_region(&Region::new(0, 0, 1024, 768, 40.0)).unwrap();
    let counted = all.pixels().filter(|p| common::luma_oracle(*p) > 60).count() as u64;
    assert_eq!(truth.spots.len(), 50);
    assert!(truth.signal_pixels > 0);
    assert_eq!(counted, truth.signal_pixels);
}

#[test]
fn zero_width_spec_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad.wtif");
    let spec = SyntheticSpec::new(0, 10, Pattern::Solid([0, 0, 0]));
    assert!(generate_synthetic(&spec, &out).is_err());
    assert!(!out.exists());
    assert!(!out.with_extension("meta").exists());
}

#[test]
fn synth_text_file_opens() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demo.synth");
    std::fs::write(&path, "width=300\nheight=200\npattern=solid\ncolor=10,20,30\n").unwrap();
    let src = open_slide(&path).unwrap();
    assert_eq!((src.base_width(), src.base_height()), (300, 200));
    let t = src.read_region(&Region::new(5, 5, 2, 2, 40.0)).unwrap();
    assert!(t.pixels().all(|p| p == [10, 20, 30]));
}

#[test]
fn jpeg_storage_decodes_close_to_source() {
    let dir = tempfile::tempdir().unwrap();
    let img = SyntheticSpec::new(300, 200, Pattern::Tissue { blobs: 4, region: None })
        .with_seed(2)
        .render()
        .unwrap();
    let path = dir.path().join("j.wtif");
    let opts = WtifOptions {
        compression: StorageCompression::Jpeg { quality: 95 },
        ..Default::default()
    };
    write_wtif(&path, &[img.clone()], &opts).unwrap();
    let back = open_slide(&path)
        .unwrap()
        .read_region(&Region::new(0, 0, 300, 200, 40.0))
        .unwrap();
    assert!(back.mean_abs_diff(&img).unwrap() < 3.0);
}

#[test]
fn sidecar_magnification_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.wtif");
    write_wtif(&path, &[noise(64, 64, 1)], &WtifOptions::default()).unwrap();
    std::fs::write(path.with_extension("meta"), "# scanner\nobjective_power=20\nmpp_x=0.5\nmpp_y=0.5\n").unwrap();
    let src = open_slide(&path).unwrap();
    assert_eq!(src.objective_power(), 20.0);
    assert_eq!(src.mpp(), (Some(0.5), Some(0.5)));
    assert!(src.warnings().is_empty());
    assert_eq!(src.dimensions_at(10.0).unwrap(), (32, 32));
}

fn pyramid(w: u32, h: u32, seed: u64) -> Vec<RasterTile> {
    let base = noise(w, h, seed);
    let l1 = base.downsample_2x2();
    let l2 = l1.downsample_2x2();
    vec![base, l1, l2]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn uncompressed_round_trip_is_exact(w in 1u32..300, h in 1u32..300, seed in any::<u64>(), tile in 1u32..5) {
        let base = noise(w, h, seed);
        let opts = WtifOptions { tile_width: tile * 16, tile_height: tile * 16, ..Default::default() };
        let src = open_slide_bytes(encode_wtif(&[base.clone()], &opts).unwrap()).unwrap();
        prop_assert_eq!(src.read_region(&Region::new(0, 0, w, h, 40.0)).unwrap(), base);
    }

    #[test]
    fn partitioned_reads_stitch_exactly(
        w in 40u32..400, h in 40u32..400, seed in any::<u64>(),
        fx in 0.05f64..0.95, fy in 0.05f64..0.95, mag_pick in 0usize..4,
    ) {
        let levels = pyramid(w, h, seed);
        let src = open_slide_bytes(encode_wtif(&levels, &WtifOptions { tile_width: 32, tile_height: 32, ..Default::default() }).unwrap()).unwrap();
        let mag = [40.0, 20.0, 13.0, 7.5][mag_pick];
        let (lw, lh) = src.dimensions_at(mag).unwrap();
        prop_assume!(lw >= 2 && lh >= 2);
        let whole = src.read_region(&Region::new(0, 0, lw, lh, mag)).unwrap();
        let sx = ((lw as f64 * fx) as u32).clamp(1, lw - 1);
        let sy = ((lh as f64 * fy) as u32).clamp(1, lh - 1);
        let mut mosaic = RasterTile::black(lw, lh);
        for (x, y, rw, rh) in [(0, 0, sx, sy), (sx, 0, lw - sx, sy), (0, sy, sx, lh - sy), (sx, sy, lw - sx, lh - sy)] {
            let part = src.read_region(&Region::new(x, y, rw, rh, mag)).unwrap();
            mosaic.blit(&part, x, y);
        }
        prop_assert_eq!(mosaic, whole);
    }

    #[test]
    fn dimensions_monotone_and_exact_at_power(w in 1u32..5000, h in 1u32..5000, a in 0.01f64..40.0, b in 0.01f64..40.0) {
        let spec = SyntheticSpec::new(w, h, Pattern::Solid([0, 0, 0]));
        let src = slidepress_core::SlideSource::from_synthetic(&spec, std::path::Path::new("p.synth")).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let dl = src.dimensions_at(lo).unwrap();
        let dh = src.dimensions_at(hi).unwrap();
        prop_assert!(dl.0 <= dh.0 && dl.1 <= dh.1);
        prop_assert_eq!(src.dimensions_at(40.0).unwrap(), (w, h));
    }

    #[test]
    fn random_header_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = open_slide_bytes(bytes);
    }
}
