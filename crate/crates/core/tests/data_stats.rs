use orderless_core::{generate, GeneratorConfig};

fn counts(cfg: &GeneratorConfig) -> (Vec<u64>, Vec<Vec<usize>>) {
    let (vocab, samples) = generate(cfg).unwrap();
    let mut c = vec![0u64; cfg.n_classes];
    for s in &samples {
        for &l in &s.labels {
            c[l] += 1;
        }
    }
    assert_eq!(c, vocab.frequencies());
    (c, samples.into_iter().map(|s| s.labels).collect())
}

/// Spearman rank correlation without ties.
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |x: &[f64]| {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).unwrap());
        let mut r = vec![0.0; x.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn frequencies_follow_zipf_ranks() {
    let cfg = GeneratorConfig { correlation_pairs: vec![], ..GeneratorConfig::default() };
    let (c, _) = counts(&cfg);
    let zipf: Vec<f64> = (0..cfg.n_classes).map(|i| ((i + 1) as f64).powf(-1.1)).collect();
    let emp: Vec<f64> = c.iter().map(|&x| x as f64).collect();
    assert!(spearman(&zipf, &emp) > 0.95, "{c:?}");
    // The head of the distribution is well separated and ranks exactly.
    assert!(c[..6].windows(2).all(|w| w[0] > w[1]), "{c:?}");
}

#[test]
fn correlation_pair_raises_conditional_probability() {
    let cfg = GeneratorConfig { correlation_pairs: vec![(3, 9, 0.9)], ..GeneratorConfig::default() };
    let (_, labels) = counts(&cfg);
    let with_a: Vec<&Vec<usize>> = labels.iter().filter(|l| l.contains(&3)).collect();
    let both = with_a.iter().filter(|l| l.contains(&9)).count();
    let p = both as f64 / with_a.len() as f64;
    assert!(p > 0.8, "P(B|A) = {p}");
    assert!(labels.iter().all(|l| (1..=4).contains(&l.len())));
}
