use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vdc_core::renderer::{composite_render, integrate_composite, volume_render, Camera, SamplingConfig};
use vdc_core::tensorlab::Tensor;
use vdc_core::toygen::{sample_latent, Generator, GeneratorConfig};
use vdc_core::triplane::{sample_triplane, PlaneGeometry, TriPlane};
use vdc_core::Graph;

const RAYS: usize = 1024;
const K: usize = 32;

fn fields(rng: &mut ChaCha8Rng) -> (Tensor, Tensor, Vec<f64>) {
    let sigma = Tensor::randn(&[RAYS, K], 1.0, rng).map(f64::abs);
    let color = Tensor::randn(&[RAYS, K, 3], 0.3, rng).map(|v| (v + 0.5).clamp(0.0, 1.0));
    (sigma, color, vec![2.0 / K as f64; RAYS * K])
}

fn render_benches(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (sigma, color, deltas) = fields(&mut rng);
    let blend = Tensor::full(&[RAYS, K], 0.3);
    c.bench_function("volume_render fwd+bwd 1024x32", |b| {
        b.iter(|| {
            let g = Graph::new();
            let s = g.leaf(sigma.clone());
            let col = g.leaf(color.clone());
            let loss = volume_render(s, col, &deltas).unwrap().sum().unwrap();
            black_box(g.backward(loss).unwrap());
        })
    });
    c.bench_function("composite_render fwd+bwd 1024x32", |b| {
        b.iter(|| {
            let g = Graph::new();
            let (si, ci) = (g.leaf(sigma.clone()), g.leaf(color.clone()));
            let (so, co) = (g.leaf(sigma.clone()), g.leaf(color.clone()));
            let bl = g.leaf(blend.clone());
            let loss = composite_render(si, ci, so, co, bl, &deltas).unwrap().sum().unwrap();
            black_box(g.backward(loss).unwrap());
        })
    });
    let s = &sigma.data()[..K];
    let col = &color.data()[..3 * K];
    let bl = &blend.data()[..K];
    let depths: Vec<f64> = (0..K).map(|k| k as f64).collect();
    c.bench_function("integrate_composite one ray", |b| {
        b.iter(|| black_box(integrate_composite(s, col, s, col, bl, &deltas[..K], &depths)))
    });
}

fn triplane_benches(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let geometry = PlaneGeometry::new(64, 16, 1.0).unwrap();
    let planes = TriPlane::randn(geometry, 0.1, &mut rng);
    let points = Tensor::randn(&[RAYS * 8, 3], 0.5, &mut rng);
    c.bench_function("sample_triplane fwd+bwd 8192 points", |b| {
        b.iter(|| {
            let g = Graph::new();
            let p = g.leaf(planes.planes.clone());
            let f = sample_triplane(p, geometry, g.constant(points.clone())).unwrap();
            let loss = f.square().unwrap().sum().unwrap();
            black_box(g.backward(loss).unwrap());
        })
    });
}

fn generator_benches(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = GeneratorConfig::default();
    let gen = Generator::new(cfg.clone(), &mut rng).unwrap();
    let w = sample_latent(cfg.latent_rows, cfg.latent_dim, &mut rng);
    let planes = gen.synthesize(&w).unwrap();
    let cam = Camera::orbit(3.0, 0.2, 0.1, 1.6).unwrap();
    let sampling = SamplingConfig::spanning_cube(&cam, 1.0, 32);
    c.bench_function("generator synthesize", |b| b.iter(|| black_box(gen.synthesize(&w).unwrap())));
    c.bench_function("render_field 32x32 K=32", |b| {
        b.iter(|| {
            black_box(vdc_core::renderer::render_field(&gen.field(&planes), &cam, 32, 32, &sampling).unwrap())
        })
    });
}

criterion_group!(benches, render_benches, triplane_benches, generator_benches);
criterion_main!(benches);
