mod common;

use std::path::Path;

use proptest::prelude::*;
use slidepress_core::codec::decode_any;
use slidepress_core::deepzoom::{
    build_pyramid, build_pyramid_from_slide, descriptor_xml, parse_descriptor, plan_pyramid, validate_pyramid,
    BuildOptions, DziPyramid, PyramidLayout, TileFormat, Violation, JPEG_TILE_ERROR_BUDGET,
};
use slidepress_core::slide_io::{Pattern, SyntheticSpec};
use slidepress_core::{Exec, RasterTile, SlideSource};

fn image(w: u32, h: u32, seed: u64) -> RasterTile {
    SyntheticSpec::new(w, h, Pattern::Tissue { blobs: 6, region: None })
        .with_seed(seed)
        .render()
        .unwrap()
}

fn plan_tiles(p: &DziPyramid) -> Vec<[u32; 7]> {
    let mut out = Vec::new();
    for level in (0..=p.max_level()).rev() {
        let spec = p.level(level).unwrap();
        for row in 0..spec.rows {
            for col in 0..spec.columns {
                let r = p.tile_rect(level, col, row).unwrap();
                out.push([level, col, row, r.x, r.y, r.width, r.height]);
            }
        }
        assert!(p.tile_rect(level, spec.columns, 0).is_none());
        assert!(p.tile_rect(level, 0, spec.rows).is_none());
    }
    out
}

#[test]
fn plan_matches_brute_force_enumeration() {
    for (w, h, ts, ov) in [(300, 200, 254, 1), (1, 1, 254, 1), (4097, 3, 256, 0), (1000, 1000, 64, 8), (513, 257, 17, 3)] {
        let p = plan_pyramid(w, h, ts, ov).unwrap();
        let (sizes, tiles) = common::dzi_tiles(w, h, ts, ov);
        assert_eq!(p.level_count() as usize, sizes.len());
        for (i, &(lw, lh)) in sizes.iter().enumerate() {
            let spec = p.level(p.max_level() - i as u32).unwrap();
            assert_eq!((spec.width, spec.height), (lw, lh));
        }
        assert_eq!(plan_tiles(&p), tiles, "{w}x{h} ts={ts} ov={ov}");
        assert_eq!(p.tile_count(), tiles.len() as u64);
        let top = p.level(0).unwrap();
        assert_eq!((top.width, top.height), (1, 1));
        assert!(p.level(p.max_level() + 1).is_none());
    }
}

#[test]
fn descriptor_text_is_exact() {
    let p = DziPyramid::new(300, 200, 254, 1, TileFormat::Jpg).unwrap();
    assert_eq!(
        descriptor_xml(&p),
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?><Image TileSize=\"254\" Overlap=\"1\" Format=\"jpg\" \
         xmlns=\"http://schemas.microsoft.com/deepzoom/2008\"><Size Width=\"300\" Height=\"200\"/></Image>"
    );
    assert_eq!(parse_descriptor(&descriptor_xml(&p)).unwrap(), p);
}

fn tree(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(base: &Path, dir: &Path, out: &mut Vec<String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push(p.strip_prefix(base).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    walk(dir, dir, &mut out);
    out.sort();
    out
}

#[test]
fn built_tree_matches_plan_and_content() {
    let dir = tempfile::tempdir().unwrap();
    let img = image(300, 200, 1);
    let p = DziPyramid::new(300, 200, 254, 1, TileFormat::Png).unwrap();
    let paths = build_pyramid(&img, dir.path(), "slide", &p, &BuildOptions::default()).unwrap();
    assert_eq!(paths.descriptor, dir.path().join("slide.dzi"));
    let mut expected: Vec<String> = common::dzi_tiles(300, 200, 254, 1)
        .1
        .iter()
        .map(|t| format!("slide_files/{}/{}_{}.png", t[0], t[1], t[2]))
        .collect();
    expected.push("slide.dzi".into());
    expected.sort();
    assert_eq!(tree(dir.path()), expected);

    // Level max tiles are exact crops; coarser levels are repeated 2x2 box filters.
    let mut level_img = img.clone();
    for level in (0..=p.max_level()).rev() {
        for t in common::dzi_tiles(300, 200, 254, 1).1.iter().filter(|t| t[0] == level) {
            let bytes = std::fs::read(dir.path().join(format!("slide_files/{level}/{}_{}.png", t[1], t[2]))).unwrap();
            let tile = decode_any(&bytes).unwrap();
            assert_eq!(tile, level_img.crop(t[3], t[4], t[5], t[6]));
        }
        level_img = common::box_filter(&level_img, 2);
    }
    let report = validate_pyramid(dir.path()).unwrap();
    assert!(report.is_valid(), "{:?}", report.violations);
    assert_eq!(report.tiles_checked, p.tile_count());
}

#[test]
fn validator_reports_damage() {
    let dir = tempfile::tempdir().unwrap();
    let img = image(600, 300, 2);
    let p = plan_pyramid(600, 300, 128, 1).unwrap();
    build_pyramid(&img, dir.path(), "d", &p, &BuildOptions::default()).unwrap();
    let files = dir.path().join("d_files");
    std::fs::remove_file(files.join("10/1_1.jpg")).unwrap();
    std::fs::write(files.join("10/0_0.jpg"), b"garbage").unwrap();
    std::fs::write(files.join("10/9_9.jpg"), b"extra").unwrap();
    let wrong = slidepress_core::codec::encode_jpeg(&RasterTile::filled(10, 10, [0, 0, 0]), 90).unwrap();
    std::fs::write(files.join("9/0_0.jpg"), wrong).unwrap();
    let report = validate_pyramid(dir.path()).unwrap();
    assert!(!report.is_valid());
    let v = &report.violations;
    assert!(v.iter().any(|x| matches!(x, Violation::MissingTile { level: 10, col: 1, row: 1 })), "{v:?}");
    assert!(v.iter().any(|x| matches!(x, Violation::UndecodableTile { .. })), "{v:?}");
    assert!(v.iter().any(|x| matches!(x, Violation::ExtraTile(_))), "{v:?}");
    assert!(v.iter().any(|x| matches!(x, Violation::DimensionMismatch { level: 9, .. })), "{v:?}");
}

#[test]
fn validator_catches_inconsistent_downsample() {
    let dir = tempfile::tempdir().unwrap();
    let img = image(200, 100, 3);
    let p = DziPyramid::new(200, 100, 64, 1, TileFormat::Png).unwrap();
    build_pyramid(&img, dir.path(), "c", &p, &BuildOptions::default()).unwrap();
    let path = dir.path().join("c_files/5/0_0.png");
    let tile = decode_any(&std::fs::read(&path).unwrap()).unwrap();
    let mut bumped = tile.clone();
    let px = bumped.pixel(3, 3);
    bumped.set_pixel(3, 3, px.map(|c| c ^ 0x80));
    std::fs::write(&path, slidepress_core::codec::encode_png(&bumped).unwrap()).unwrap();
    let report = validate_pyramid(dir.path()).unwrap();
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::DownsampleMismatch { .. })));
}

#[test]
fn jpeg_tiles_stay_within_error_budget() {
    let dir = tempfile::tempdir().unwrap();
    let img = SyntheticSpec::new(700, 500, Pattern::Noise).with_seed(12).render().unwrap();
    let p = plan_pyramid(700, 500, 254, 1).unwrap();
    build_pyramid(&img, dir.path(), "n", &p, &BuildOptions::default()).unwrap();
    let mut level_img = img;
    for level in (0..=p.max_level()).rev() {
        for t in common::dzi_tiles(700, 500, 254, 1).1.iter().filter(|t| t[0] == level) {
            let bytes = std::fs::read(dir.path().join(format!("n_files/{level}/{}_{}.jpg", t[1], t[2]))).unwrap();
            let exact = level_img.crop(t[3], t[4], t[5], t[6]);
            let err = decode_any(&bytes).unwrap().mean_abs_diff(&exact).unwrap();
            assert!(err <= JPEG_TILE_ERROR_BUDGET, "level {level} tile {},{}: {err}", t[1], t[2]);
        }
        level_img = common::box_filter(&level_img, 2);
    }
    assert!(validate_pyramid(dir.path()).unwrap().is_valid());
}

#[test]
fn not_a_pyramid_without_descriptor() {
    let dir = tempfile::tempdir().unwrap();
    assert!(validate_pyramid(dir.path()).is_err());
}

#[test]
fn slide_pyramid_sequential_equals_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::new(900, 700, Pattern::Tissue { blobs: 5, region: None }).with_seed(8);
    let src = SlideSource::from_synthetic(&spec, &dir.path().join("s.synth")).unwrap();
    let layout = PyramidLayout::default();
    let mut results = Vec::new();
    for exec in [Exec::Sequential, Exec::Parallel] {
        let out = dir.path().join(format!("{exec:?}"));
        let opts = BuildOptions {
            exec,
            ..Default::default()
        };
        let (p, paths) = build_pyramid_from_slide(&src, 20.0, &layout, &out, "s", &opts).unwrap();
        assert_eq!((p.image_width, p.image_height), (450, 350));
        let report = validate_pyramid(&out).unwrap();
        assert!(report.is_valid(), "{:?}", report.violations);
        let files: Vec<(String, Vec<u8>)> = tree(&out).into_iter().map(|f| (f.clone(), std::fs::read(out.join(&f)).unwrap())).collect();
        results.push(files);
        assert!(paths.tiles_dir.is_dir());
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn rebuild_replaces_stale_tiles() {
    let dir = tempfile::tempdir().unwrap();
    let big = image(1000, 1000, 4);
    build_pyramid(&big, dir.path(), "r", &plan_pyramid(1000, 1000, 254, 1).unwrap(), &BuildOptions::default()).unwrap();
    let small = image(100, 100, 5);
    build_pyramid(&small, dir.path(), "r", &plan_pyramid(100, 100, 254, 1).unwrap(), &BuildOptions::default()).unwrap();
    assert!(validate_pyramid(dir.path()).unwrap().is_valid());
    assert!(!dir.path().join("r_files/10").exists());
}

#[test]
fn bad_parameters_are_rejected() {
    assert!(plan_pyramid(0, 10, 254, 1).is_err());
    assert!(plan_pyramid(10, 10, 0, 0).is_err());
    assert!(plan_pyramid(10, 10, 4, 4).is_err());
    let img = image(50, 40, 6);
    let dir = tempfile::tempdir().unwrap();
    let p = plan_pyramid(51, 40, 254, 1).unwrap();
    assert!(build_pyramid(&img, dir.path(), "x", &p, &BuildOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn plan_equals_enumeration(w in 1u32..20_000, h in 1u32..20_000, ts in 16u32..1024, ov in 0u32..8) {
        let p = plan_pyramid(w, h, ts, ov).unwrap();
        prop_assert_eq!(plan_tiles(&p), common::dzi_tiles(w, h, ts, ov).1);
    }

    #[test]
    fn descriptor_round_trips(w in 1u32..100_000, h in 1u32..100_000, ts in 1u32..2048, png in any::<bool>()) {
        let ov = ts / 3;
        let fmt = if png { TileFormat::Png } else { TileFormat::Jpg };
        let p = DziPyramid::new(w, h, ts, ov, fmt).unwrap();
        prop_assert_eq!(parse_descriptor(&descriptor_xml(&p)).unwrap(), p);
    }
}
