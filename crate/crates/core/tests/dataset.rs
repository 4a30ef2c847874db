use vdc_core::image::Image;
use vdc_core::toygen::{generate_dataset, DatasetBundle, DatasetConfig, OccluderKind};

fn small() -> DatasetConfig {
    DatasetConfig {
        frames: 4,
        width: 32,
        height: 32,
        oracle_samples: 64,
        ..DatasetConfig::default()
    }
}

/// Pixels within `r` (Chebyshev) of a masked pixel.
fn dilate(mask: &Image, r: usize) -> Vec<bool> {
    let (w, h) = (mask.width, mask.height);
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if mask.data[y * w + x] == 0.0 {
                continue;
            }
            for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                    out[yy * w + xx] = true;
                }
            }
        }
    }
    out
}

#[test]
fn clean_frame_matches_input_away_from_the_occluder() {
    let data = generate_dataset(&small()).unwrap();
    for f in &data.frames {
        let clean = f.clean.as_ref().unwrap();
        let near = dilate(&f.mask, 2);
        for p in 0..f.image.pixels() {
            if near[p] {
                continue;
            }
            for c in 0..3 {
                let d = (f.image.data[p * 3 + c] - clean.data[p * 3 + c]).abs();
                assert!(d <= 2.0 / 255.0 + 1e-12, "frame {} pixel {p}: {d}", f.index);
            }
        }
    }
}

#[test]
fn masks_are_binary_with_bounded_coverage() {
    let data = generate_dataset(&DatasetConfig {
        frames: 6,
        oracle_samples: 64,
        ..DatasetConfig::default()
    })
    .unwrap();
    for f in &data.frames {
        assert!(f.mask.data.iter().all(|&m| m == 0.0 || m == 1.0));
        let cover = f.mask.data.iter().sum::<f64>() / f.mask.pixels() as f64;
        assert!((0.03..=0.25).contains(&cover), "frame {} coverage {cover}", f.index);
    }
}

#[test]
fn occluder_free_dataset_has_empty_masks_and_clean_frames() {
    let data = generate_dataset(&DatasetConfig {
        occluder: OccluderKind::None,
        ..small()
    })
    .unwrap();
    for f in &data.frames {
        assert!(f.mask.data.iter().all(|&m| m == 0.0));
        assert_eq!(&f.image, f.clean.as_ref().unwrap());
    }
}

#[test]
fn generation_is_deterministic_and_survives_a_round_trip() {
    let cfg = small();
    let a = generate_dataset(&cfg).unwrap();
    let b = generate_dataset(&cfg).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    a.save(dir.path()).unwrap();
    assert_eq!(DatasetBundle::load(dir.path()).unwrap(), a);
}

#[test]
fn config_text_round_trips() {
    let cfg = DatasetConfig {
        occluder: OccluderKind::Torus,
        residual_scale: 0.3,
        ..small()
    };
    assert_eq!(DatasetConfig::from_text(&cfg.to_text()).unwrap(), cfg);
}
