use vdc_core::losses::{blend_entropy, blend_sparsity, latent_delta_reg, masked_l2, MaskImage, PerceptualProxy};
use vdc_core::{Error, Graph, Tensor};

#[test]
fn entropy_matches_closed_form() {
    let g = Graph::new();
    let vals = [0.0, 0.1, 0.5, 0.9, 1.0];
    let h = blend_entropy(g.constant(Tensor::new(&[1, 5], vals.to_vec()).unwrap())).unwrap().item();
    let want: f64 = vals
        .iter()
        .filter(|&&b| b > 0.0 && b < 1.0)
        .map(|&b| -(b * b.ln() + (1.0 - b) * (1.0 - b).ln()))
        .sum();
    assert!((h - want).abs() < 1e-12);
    let half = blend_entropy(g.constant(Tensor::new(&[1, 1], vec![0.5]).unwrap())).unwrap().item();
    assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn entropy_gradient_is_finite_at_the_ends() {
    let g = Graph::new();
    let b = g.leaf(Tensor::new(&[1, 3], vec![0.0, 0.5, 1.0]).unwrap());
    let h = blend_entropy(b).unwrap();
    let grads = g.backward(h).unwrap();
    let d = grads.get(b).unwrap();
    assert!(d.is_finite());
    assert_eq!(d.data()[1], 0.0);
}

#[test]
fn masked_l2_is_a_mean_over_weighted_pixels() {
    let g = Graph::new();
    let x = g.constant(Tensor::new(&[2, 2, 3], vec![1.0; 12]).unwrap());
    let y = g.constant(Tensor::zeros(&[2, 2, 3]));
    let m = MaskImage::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    assert_eq!(masked_l2(x, y, &m).unwrap().item(), 1.0);
    let err = masked_l2(x, y, &MaskImage::zeros(2, 2)).unwrap_err();
    assert!(matches!(err, Error::EmptyRegion { .. }));
}

#[test]
fn sparsity_counts_only_weighted_rays() {
    let g = Graph::new();
    let b = g.constant(Tensor::new(&[2, 2], vec![0.25, 0.5, 1.0, 1.0]).unwrap());
    assert_eq!(blend_sparsity(b, &[1.0, 0.0]).unwrap().item(), 0.75);
    assert!(blend_sparsity(b, &[1.0]).is_err());
}

#[test]
fn single_row_latent_has_no_delta_penalty() {
    let g = Graph::new();
    let w = g.constant(Tensor::new(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap());
    assert_eq!(latent_delta_reg(w).unwrap().item(), 0.0);
}

#[test]
fn perceptual_proxy_separates_images() {
    let proxy = PerceptualProxy::new(7);
    let g = Graph::new();
    let x: Vec<f64> = (0..8 * 8 * 3).map(|i| (i % 13) as f64 / 13.0).collect();
    let a = g.constant(Tensor::new(&[8, 8, 3], x.clone()).unwrap());
    let b = g.constant(Tensor::new(&[8, 8, 3], x.iter().map(|v| 1.0 - v).collect()).unwrap());
    assert_eq!(proxy.loss(a, a, None).unwrap().item(), 0.0);
    assert!(proxy.loss(a, b, None).unwrap().item() > 0.0);
}
