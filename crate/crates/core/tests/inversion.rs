mod common;

use common::{tiny_dataset, tiny_generator, tiny_pipeline_config};
use vdc_core::inversion::{InversionCheckpoint, Pipeline, PipelineConfig, Stage};
use vdc_core::Error;

#[test]
fn stage_a_lowers_its_loss() {
    let gen = tiny_generator(1);
    let data = tiny_dataset();
    let cfg = PipelineConfig {
        epochs_a: 8,
        ..tiny_pipeline_config()
    };
    let pipeline = Pipeline::new(&gen, &data, cfg).unwrap();
    let mut ck = pipeline.init_checkpoint().unwrap();
    let report = pipeline.run(&mut ck, &[Stage::A]).unwrap();
    let l = &report[0].epoch_losses;
    assert_eq!(l.len(), 8);
    assert!(l[7] < l[0], "{l:?}");
    assert_eq!(ck.stage, Some(Stage::A));
}

#[test]
fn stage_b_reports_blend_tallies_and_keeps_latents() {
    let gen = tiny_generator(2);
    let data = tiny_dataset();
    let pipeline = Pipeline::new(&gen, &data, tiny_pipeline_config()).unwrap();
    let mut ck = pipeline.init_checkpoint().unwrap();
    pipeline.run(&mut ck, &[Stage::A]).unwrap();
    let latent = ck.latent.clone();
    let report = pipeline.run(&mut ck, &[Stage::B]).unwrap();
    assert_eq!(ck.latent, latent);
    assert_eq!(report[0].blend_inside.len(), 3);
    assert!(report[0].blend_inside.iter().chain(&report[0].blend_outside).all(|b| (0.0..=1.0).contains(b)));
}

#[test]
fn stages_must_run_in_order() {
    let gen = tiny_generator(3);
    let data = tiny_dataset();
    let pipeline = Pipeline::new(&gen, &data, tiny_pipeline_config()).unwrap();
    let mut ck = pipeline.init_checkpoint().unwrap();
    assert!(pipeline.run(&mut ck, &[Stage::B]).is_err());
}

#[test]
fn checkpoint_from_another_generator_is_rejected() {
    let data = tiny_dataset();
    let a = tiny_generator(4);
    let b = tiny_generator(5);
    let mut ck = Pipeline::new(&a, &data, tiny_pipeline_config()).unwrap().init_checkpoint().unwrap();
    let other = Pipeline::new(&b, &data, tiny_pipeline_config()).unwrap();
    assert!(other.run(&mut ck, &[Stage::A]).is_err());
}

#[test]
fn checkpoint_round_trip_preserves_every_group() {
    let gen = tiny_generator(6);
    let data = tiny_dataset();
    let pipeline = Pipeline::new(&gen, &data, tiny_pipeline_config()).unwrap();
    let mut ck = pipeline.init_checkpoint().unwrap();
    pipeline.run(&mut ck, &[Stage::A]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inv.ckpt");
    ck.save(&path).unwrap();
    let back = InversionCheckpoint::load(&path).unwrap();
    assert_eq!(back.group_hashes(), ck.group_hashes());
    assert_eq!(back.stage, ck.stage);
    assert_eq!(back.config, ck.config);
}

#[test]
fn runs_are_reproducible() {
    let gen = tiny_generator(7);
    let data = tiny_dataset();
    let pipeline = Pipeline::new(&gen, &data, tiny_pipeline_config()).unwrap();
    let run = || {
        let mut ck = pipeline.init_checkpoint().unwrap();
        pipeline.run(&mut ck, &[Stage::A, Stage::B, Stage::C]).unwrap();
        ck.to_checkpoint().to_bytes()
    };
    assert_eq!(run(), run());
}

#[test]
fn invalid_config_is_reported() {
    let cfg = PipelineConfig {
        reg_warmup: 1.5,
        ..tiny_pipeline_config()
    };
    let err = Pipeline::new(&tiny_generator(8), &tiny_dataset(), cfg).map(|_| ()).unwrap_err();
    assert!(matches!(err, Error::Config(_) | Error::InvalidArgument(_)), "{err}");
}
