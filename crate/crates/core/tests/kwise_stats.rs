//! Monte-Carlo checks of the polynomial hash family over the Mersenne field.

use sparse_ose::kwise::{derive_seed, position_index, sign_index, KWiseFamily, MERSENNE_61};

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn signs(family: &KWiseFamily, count: u64) -> Vec<f64> {
    (0..count)
        .map(|k| f64::from(family.rademacher_at(sign_index(k)).unwrap()))
        .collect()
}

#[test]
fn signs_are_balanced_along_one_family() {
    let family = KWiseFamily::mersenne(17, 8).unwrap();
    let (mean, se) = mean_se(&signs(&family, 200_000));
    assert!(mean.abs() <= 4.0 * se, "mean {mean} se {se}");
}

#[test]
fn pairs_and_quadruples_are_uncorrelated_across_seeds() {
    // For a fixed set of indices, average over independent family draws.
    let trials = 40_000;
    let idx = [sign_index(3), sign_index(4), sign_index(1000), position_index(7)];
    let mut pair = Vec::with_capacity(trials);
    let mut quad = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let f = KWiseFamily::mersenne(derive_seed(99, t), 4).unwrap();
        let s: Vec<f64> = idx.iter().map(|&i| f64::from(f.rademacher_at(i).unwrap())).collect();
        pair.push(s[0] * s[1]);
        quad.push(s.iter().product());
    }
    for (name, xs) in [("pair", &pair), ("quadruple", &quad)] {
        let (mean, se) = mean_se(xs);
        assert!(mean.abs() <= 4.0 * se, "{name}: mean {mean} se {se}");
    }
}

#[test]
fn distinct_seeds_give_uncorrelated_sequences() {
    let a = signs(&KWiseFamily::mersenne(derive_seed(5, 0), 8).unwrap(), 100_000);
    let b = signs(&KWiseFamily::mersenne(derive_seed(5, 1), 8).unwrap(), 100_000);
    let products: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let (mean, se) = mean_se(&products);
    assert!(mean.abs() <= 4.0 * se, "cross-seed correlation {mean} se {se}");
}

#[test]
fn positions_fill_a_range_uniformly() {
    let family = KWiseFamily::mersenne(3, 8).unwrap();
    let width = 10;
    let draws = 100_000;
    let mut counts = vec![0f64; width];
    for k in 0..draws {
        let v = family.uniform_range_at(position_index(k), 0, width as i64 - 1).unwrap();
        counts[v as usize] += 1.0;
    }
    let expected = draws as f64 / width as f64;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 99.9% quantile of chi-square with 9 degrees of freedom.
    assert!(chi2 < 27.88, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn unit_values_have_uniform_moments() {
    let family = KWiseFamily::mersenne(11, 8).unwrap();
    let xs: Vec<f64> = (0..100_000).map(|k| family.unit_at(k).unwrap()).collect();
    assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
    let (mean, se) = mean_se(&xs);
    assert!((mean - 0.5).abs() <= 4.0 * se);
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let (m2, se2) = mean_se(&sq);
    assert!((m2 - 1.0 / 3.0).abs() <= 4.0 * se2);
}

#[test]
fn indices_past_the_modulus_are_rejected() {
    let family = KWiseFamily::mersenne(1, 4).unwrap();
    assert!(family.eval(MERSENNE_61 - 1).is_ok());
    assert!(family.eval(MERSENNE_61).is_err());
}
