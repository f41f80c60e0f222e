mod common;

use irrfair::csv_io::{ingest_csv, read_csv, write_csv, CsvLayout, CsvOptions};
use irrfair::document::{from_json, to_json};
use irrfair::PredictionKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn json_round_trip_with_missing_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in [PredictionKind::Binary, PredictionKind::Categorical, PredictionKind::Continuous] {
        for _ in 0..20 {
            let table = common::random_table(&mut rng, kind, 25, 0.2);
            let groups = common::random_groups(&mut rng, &table, 2);
            let (back, back_groups) = from_json(&to_json(&table, Some(&groups))).unwrap();
            assert_eq!(back, table);
            assert_eq!(back_groups, Some(groups));
        }
    }
}

#[test]
fn csv_round_trip_with_missing_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [PredictionKind::Binary, PredictionKind::Categorical, PredictionKind::Continuous] {
        for _ in 0..20 {
            let table = common::random_table(&mut rng, kind, 25, 0.2);
            let mut buf = Vec::new();
            write_csv(&table, None, &mut buf).unwrap();
            let opts = CsvOptions {
                kind: Some(kind),
                range: table.range(),
                ..CsvOptions::default()
            };
            let (back, _) = read_csv(buf.as_slice(), &opts).unwrap();
            // Categorical labels are re-inferred from the cells that remain.
            if kind != PredictionKind::Categorical {
                assert_eq!(back, table);
            } else {
                assert_eq!(back.rows(), table.rows());
            }
        }
    }
}

#[test]
fn wide_and_long_files_agree() {
    let dir = tempfile::tempdir().unwrap();
    let wide = dir.path().join("wide.csv");
    let long = dir.path().join("long.csv");
    std::fs::write(&wide, "individual,a,b\nx,1,0\ny,,1\nz,0,0\n").unwrap();
    std::fs::write(&long, "individual,rater,prediction\nz,a,0\nx,b,0\nx,a,1\ny,b,1\nz,b,0\n").unwrap();
    let (w, _) = ingest_csv(&wide, &CsvOptions::default()).unwrap();
    let long_opts = CsvOptions {
        layout: CsvLayout::Long,
        ..CsvOptions::default()
    };
    let (l, _) = ingest_csv(&long, &long_opts).unwrap();
    assert_eq!(w, l);
    assert!(w.is_incomplete(&common::iid("y")));
}
