use std::sync::Arc;

use earlystop::datagen::{diagonal_design, diagonal_signal, AdditiveKind, BoostSignal, SignalKind};
use earlystop::simulation::{aggregate, run, write_csv, BoostRule, EstimatorKind, Experiment, SimulationParameters};

fn smooth(n: usize, runs: usize) -> SimulationParameters {
    SimulationParameters::new(
        Experiment::Inverse {
            design: Arc::new(diagonal_design(n).unwrap()),
            true_signal: diagonal_signal(n, SignalKind::Smooth),
            noise_level: 0.01,
        },
        runs,
        4,
        n,
        7,
    )
    .unwrap()
}

#[test]
fn weak_balanced_oracle_is_fixed_across_replications() {
    let records = run(&smooth(10_000, 4), &EstimatorKind::TruncatedSvd).unwrap();
    for r in &records {
        assert_eq!(r.weak_balanced_oracle, Some(316.0));
    }
}

#[test]
fn landweber_stop_tracks_weak_oracle() {
    let mut params = smooth(2000, 8);
    params.max_iteration = 5000;
    let records = run(&params, &EstimatorKind::Landweber { learning_rate: Some(1.0) }).unwrap();
    let rows = aggregate(&records);
    let ratio = rows.iter().find(|r| r.quantity == "stop_over_weak_oracle").unwrap();
    assert!(ratio.median >= 0.5 && ratio.median <= 2.0, "{}", ratio.median);
}

#[test]
fn every_study_fills_its_records() {
    let boost = SimulationParameters::new(
        Experiment::Linear {
            n: 80,
            coefficients: BoostSignal::SSparse(5).coefficients(120).unwrap(),
            sigma: 0.5,
        },
        3,
        2,
        40,
        1,
    )
    .unwrap();
    for rule in BoostRule::ALL {
        let records = run(&boost, &EstimatorKind::L2Boost { rule }).unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.error.is_none() && r.stop_value >= 0.0));
    }
    let tree = SimulationParameters::new(
        Experiment::Additive {
            kind: AdditiveKind::Step,
            n: 150,
            sigma: 0.5,
            test_size: 150,
        },
        3,
        2,
        150,
        1,
    )
    .unwrap();
    for interpolate in [false, true] {
        let kind = EstimatorKind::RegressionTree {
            interpolate,
            min_samples_split: 1,
        };
        let records = run(&tree, &kind).unwrap();
        for r in &records {
            let e = r.relative_efficiency_weak.unwrap();
            assert!(e > 0.0 && e <= 1.0);
        }
    }
}

#[test]
fn csv_file_round_trip() {
    let params = smooth(300, 5);
    let kind = EstimatorKind::cg();
    let records = run(&params, &kind).unwrap();
    let path = std::env::temp_dir().join(format!("earlystop-study-{}.csv", std::process::id()));
    write_csv(std::fs::File::create(&path).unwrap(), &params.metadata(&kind), &records).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let stops: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap()[4].parse().unwrap())
        .collect();
    assert_eq!(stops, records.iter().map(|r| r.stop_value).collect::<Vec<_>>());
}
