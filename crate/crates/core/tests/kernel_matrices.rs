use kssvm::kernels::{cross_gram, gram, KernelConfig};
use kssvm::FeatureSpec;
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn min_eigenvalue(k: &Array2<f64>) -> f64 {
    let n = k.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| k[[i, j]]);
    m.symmetric_eigen().eigenvalues.min()
}

fn mixed_design(rng: &mut ChaCha8Rng, n: usize) -> (Array2<f64>, Vec<FeatureSpec>) {
    let x = Array2::from_shape_fn((n, 4), |(_, j)| {
        if j == 3 {
            f64::from(rng.gen_range(0..3u8))
        } else {
            rng.gen_range(-3.0..3.0)
        }
    });
    let specs = (0..4)
        .map(|j| {
            if j == 3 {
                FeatureSpec::categorical("c", ["a", "b", "c"])
            } else {
                let col = x.column(j);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                FeatureSpec {
                    observed_range: Some((lo, hi)),
                    ..FeatureSpec::continuous(format!("x{j}"))
                }
            }
        })
        .collect();
    (x, specs)
}

#[test]
fn gram_matrices_are_symmetric_and_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for n in [5, 40, 120] {
        let (x, specs) = mixed_design(&mut rng, n);
        for config in [
            KernelConfig::linear(),
            KernelConfig::rbf(1.3),
            KernelConfig::clinical(specs.clone()),
        ] {
            let k = gram(&config, x.view()).unwrap().k;
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(k[[i, j]].to_bits(), k[[j, i]].to_bits());
                }
            }
            let trace: f64 = (0..n).map(|i| k[[i, i]]).sum();
            let lambda = min_eigenvalue(&k);
            assert!(lambda >= -1e-10 * trace, "{} n={n}: λ_min {lambda}", config.kind.name());
        }
    }
}

#[test]
fn cross_gram_matches_gram_off_the_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (x, specs) = mixed_design(&mut rng, 25);
    for config in [KernelConfig::linear(), KernelConfig::rbf(0.8), KernelConfig::clinical(specs)] {
        let k = gram(&config, x.view()).unwrap().k;
        let c = cross_gram(&config, x.view(), x.view()).unwrap();
        for i in 0..25 {
            for j in 0..25 {
                let ridge = if i == j { config.ridge } else { 0.0 };
                assert!((k[[i, j]] - ridge - c[[i, j]]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn clinical_kernel_lies_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (x, specs) = mixed_design(&mut rng, 30);
    let config = KernelConfig::clinical(specs).with_ridge(0.0);
    let far = Array2::from_shape_fn((5, 4), |(_, j)| if j == 3 { 1.0 } else { 100.0 });
    let c = cross_gram(&config, x.view(), far.view()).unwrap();
    assert!(c.iter().all(|&v| (0.0..=1.0).contains(&v)));
}
