use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vdc_core::inversion::PipelineConfig;
use vdc_core::toygen::{generate_dataset, DatasetBundle, DatasetConfig, Generator, GeneratorConfig};

pub fn tiny_generator(seed: u64) -> Generator {
    let cfg = GeneratorConfig {
        resolution: 16,
        channels: 4,
        map_hidden: 32,
        decoder_hidden: vec![8],
        ..GeneratorConfig::default()
    };
    Generator::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub fn tiny_dataset() -> DatasetBundle {
    generate_dataset(&DatasetConfig {
        frames: 3,
        width: 16,
        height: 16,
        oracle_samples: 32,
        ..DatasetConfig::default()
    })
    .unwrap()
}

pub fn tiny_pipeline_config() -> PipelineConfig {
    PipelineConfig {
        samples: 8,
        epochs_a: 3,
        lr_a: 1e-2,
        epochs_b: 3,
        epochs_c: 2,
        ood_resolution: 8,
        ood_channels: 4,
        ood_hidden: vec![8],
        phi_dim: 4,
        upsampler_hidden: 4,
        ..PipelineConfig::default()
    }
}
