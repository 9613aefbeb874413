use std::time::Instant;

use loadvine::model::HouseholdModel;
use loadvine::pipeline::{fit_household, FitConfig};
use loadvine::simulate::{assemble_day, quantile_bands, truncated_profiles};
use loadvine::synthetic::TwoRegime;

#[test]
fn planted_two_regime_household() {
    let gen = TwoRegime::default();
    let data = gen.matrix(150, 1).unwrap();
    let t = Instant::now();
    let model = fit_household(&data, 7, &FitConfig { seed: 3, ..Default::default() }).unwrap();
    eprintln!("fit {:?}", t.elapsed());
    assert_eq!(model.clusters.k, 2);
    let planted = gen.labels();
    let same = model.clusters.labels.iter().zip(&planted).all(|(a, b)| a == b)
        || model.clusters.labels.iter().zip(&planted).all(|(a, b)| a != b);
    assert!(same, "{:?}", model.clusters.labels);
    assert_eq!(model.vines.len(), 3);

    let back = HouseholdModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);

    let t = Instant::now();
    let sims = assemble_day(&model, 1000, 5).unwrap();
    eprintln!("simulate {:?}", t.elapsed());
    assert!(sims.iter().all(|p| p.values.iter().all(|v| v.is_finite() && *v >= 0.0)));
    let bands = quantile_bands(&model, &[0.01, 0.5, 0.99]).unwrap();
    let t = Instant::now();
    let trunc = truncated_profiles(&model, (0.01, 0.99), 20, 100_000, 5).unwrap();
    eprintln!("truncated {:?}", t.elapsed());
    for p in &trunc {
        for (s, v) in p.values.iter().enumerate() {
            assert!(*v >= bands.curves[0][s] - 1e-9 && *v <= bands.curves[2][s] + 1e-9);
        }
    }
}
