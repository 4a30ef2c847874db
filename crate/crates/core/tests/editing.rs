mod common;

use common::{tiny_dataset, tiny_generator, tiny_pipeline_config};
use vdc_core::editing::{apply_edit, DirectionRegistry, EditView};
use vdc_core::inversion::{sampling_for, InversionCheckpoint, Pipeline, Stage};
use vdc_core::renderer::{render_field, Camera};
use vdc_core::toygen::Generator;

fn inverted(gen: &Generator) -> InversionCheckpoint {
    let data = tiny_dataset();
    let pipeline = Pipeline::new(gen, &data, tiny_pipeline_config()).unwrap();
    let mut ck = pipeline.init_checkpoint().unwrap();
    pipeline.run(&mut ck, &[Stage::A, Stage::B]).unwrap();
    ck
}

#[test]
fn edits_are_additive() {
    let reg = DirectionRegistry::toy(4, 16).unwrap();
    let d = reg.get("color").unwrap();
    let w = vdc_core::Tensor::full(&[4, 16], 0.3);
    let twice = apply_edit(&apply_edit(&w, d, 0.5).unwrap(), d, 1.0).unwrap();
    let once = apply_edit(&w, d, 1.5).unwrap();
    assert!(twice.max_abs_diff(&once) < 1e-15);
    assert_eq!(apply_edit(&w, d, 0.0).unwrap(), w);
}

#[test]
fn removal_is_the_in_distribution_render() {
    let gen = tiny_generator(1);
    let ck = inverted(&gen);
    let view = EditView::new(&gen, &ck).remove_ood();
    let cam = Camera::orbit(3.0, 0.1, 0.1, 1.6).unwrap();
    let w = view.latent(1).unwrap();
    let got = view.render(1, &w, &cam, 12, 12).unwrap();
    let planes = gen.synthesize(&w).unwrap();
    let want = render_field(&gen.field(&planes), &cam, 12, 12, &sampling_for(&cam, 1.0, ck.config.samples)).unwrap();
    assert_eq!(got.color, want.color);
    assert!(got.blend.data.iter().all(|&b| b == 0.0));
    // Removing twice changes nothing.
    let again = view.remove_ood().render(1, &w, &cam, 12, 12).unwrap();
    assert_eq!(again, got);
}

#[test]
fn removal_and_editing_commute() {
    let gen = tiny_generator(2);
    let ck = inverted(&gen);
    let reg = DirectionRegistry::toy(4, 16).unwrap();
    let cam = Camera::orbit(3.0, -0.2, 0.1, 1.6).unwrap();
    let view = EditView::new(&gen, &ck);
    let edited = apply_edit(&view.latent(0).unwrap(), reg.get("radius").unwrap(), 1.0).unwrap();
    // Edit the latent first, then remove; or remove first, then edit.
    let a = view.remove_ood().render(0, &edited, &cam, 12, 12).unwrap();
    let removed = view.remove_ood();
    let b = removed
        .render(0, &apply_edit(&removed.latent(0).unwrap(), reg.get("radius").unwrap(), 1.0).unwrap(), &cam, 12, 12)
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn novel_view_at_the_frame_camera_is_the_upsampled_reconstruction() {
    let gen = tiny_generator(3);
    let ck = inverted(&gen);
    let data = tiny_dataset();
    let view = EditView::new(&gen, &ck);
    let f = &data.frames[2];
    let novel = view.render_novel_view(&f.camera, 2, 16, 16).unwrap();
    let recon = view.render_hr(2, &view.latent(2).unwrap(), &f.camera, 16, 16).unwrap();
    assert_eq!(novel, recon);
    assert_eq!((novel.width, novel.height), (32, 32));
}

#[test]
fn frame_out_of_range_is_an_error() {
    let gen = tiny_generator(4);
    let data = tiny_dataset();
    let ck = Pipeline::new(&gen, &data, tiny_pipeline_config()).unwrap().init_checkpoint().unwrap();
    let view = EditView::new(&gen, &ck);
    let cam = Camera::orbit(3.0, 0.0, 0.1, 1.6).unwrap();
    assert!(view.render(3, &view.latent(0).unwrap(), &cam, 8, 8).is_err());
}

#[test]
fn registry_file_round_trip() {
    let reg = DirectionRegistry::toy(4, 16).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dirs.txt");
    reg.save(&path).unwrap();
    assert_eq!(DirectionRegistry::load(&path).unwrap(), reg);
}
