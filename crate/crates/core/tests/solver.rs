//! Plain and projected gradient descent on small images.

mod common;

use std::sync::Arc;

use common::image;
use unrolled_style::graph::ExactProjector;
use unrolled_style::{
    estimate_lambda_max, grad_descent_stylize, matting_laplacian, projected_grad_descent, ChannelFilter,
    DescentConfig, FeatureExtractor, InitMode, StyleTarget,
};

fn extractor() -> FeatureExtractor {
    FeatureExtractor::seeded(&[8, 16, 16], 3, vec![0, 1, 2], vec![1]).unwrap()
}

fn projector(content: &unrolled_style::Tensor, frac: f64) -> Arc<ExactProjector> {
    let l = matting_laplacian(content, 1e-5).unwrap();
    let lmax = estimate_lambda_max(&l).value;
    Arc::new(ExactProjector::new(&l, frac * lmax).unwrap())
}

#[test]
fn projected_iterates_stay_in_band() {
    let fe = extractor();
    for s in 0..3 {
        let content = image(8, 8, 10 + s);
        let target = StyleTarget::new(&image(8, 8, 20 + s), None, &fe).unwrap();
        let p = projector(&content, 0.2);
        assert!(p.rank() < 64);
        let cfg = DescentConfig {
            iters: 10,
            projector: Some(p.clone()),
            keep_iterates: true,
            ..Default::default()
        };
        let sol = projected_grad_descent(&content, &target, &fe, &cfg, None).unwrap();
        assert_eq!(sol.iterates.len(), 11);
        for x in &sol.iterates {
            for c in 0..3 {
                let e = p.high_band_energy(x.channel(c));
                assert!(e <= 1e-10, "high-band energy {e:e}");
            }
        }
    }
}

#[test]
fn full_band_projection_is_bitwise_plain_descent() {
    let fe = extractor();
    let content = image(8, 8, 1);
    let target = StyleTarget::new(&image(8, 8, 2), None, &fe).unwrap();
    let p = projector(&content, 1.0);
    assert_eq!(p.rank(), 64);
    for init in [InitMode::Content, InitMode::ContentNoise] {
        let cfg = DescentConfig {
            iters: 8,
            init,
            seed: 4,
            projector: Some(p.clone() as Arc<dyn ChannelFilter>),
            ..Default::default()
        };
        let plain = grad_descent_stylize(&content, &target, &fe, &cfg, None).unwrap();
        let proj = projected_grad_descent(&content, &target, &fe, &cfg, None).unwrap();
        assert_eq!(plain.mu.to_bits(), proj.mu.to_bits());
        assert!(plain.image.data().iter().zip(proj.image.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn projected_descent_requires_projector() {
    let fe = extractor();
    let content = image(8, 8, 1);
    let target = StyleTarget::new(&image(8, 8, 2), None, &fe).unwrap();
    assert!(projected_grad_descent(&content, &target, &fe, &DescentConfig::default(), None).is_err());
}

#[test]
fn selected_stepsize_decreases_loss_monotonically() {
    let fe = extractor();
    let mut monotone = 0;
    for s in 0..20 {
        let content = image(16, 16, 100 + s);
        let target = StyleTarget::new(&image(16, 16, 200 + s), None, &fe).unwrap();
        let cfg = DescentConfig {
            iters: 20,
            ..Default::default()
        };
        let sol = grad_descent_stylize(&content, &target, &fe, &cfg, None).unwrap();
        let t: Vec<f64> = sol.trajectory.iter().map(|b| b.total()).collect();
        if t.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
        assert!(t.last().unwrap() < &t[0]);
    }
    assert!(monotone >= 18, "{monotone} of 20 monotone");
}

#[test]
fn rejects_bad_stepsize() {
    let fe = extractor();
    let content = image(8, 8, 1);
    let target = StyleTarget::new(&image(8, 8, 2), None, &fe).unwrap();
    for mu in [0.0, -1.0, f64::NAN] {
        let cfg = DescentConfig {
            mu: Some(mu),
            ..Default::default()
        };
        assert!(grad_descent_stylize(&content, &target, &fe, &cfg, None).is_err());
    }
}
