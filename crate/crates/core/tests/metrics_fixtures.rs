use bnslab_core::metrics::{avg_knn, avg_knn_self, lof, lof_self};
use bnslab_core::PointCloud;

#[derive(serde::Deserialize)]
struct Row {
    kind: String,
    x: f64,
    y: f64,
    avg_knn: f64,
    lof: f64,
}

fn rows() -> Vec<Row> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/knn_fixture.csv");
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    r.deserialize().map(|row| row.unwrap()).collect()
}

#[test]
fn knn_metrics_match_reference_values() {
    let rows = rows();
    let (pts, qs): (Vec<&Row>, Vec<&Row>) = rows.iter().partition(|r| r.kind == "point");
    let cloud = |rs: &[&Row]| PointCloud::from_rows(2, rs.iter().map(|r| [r.x, r.y])).unwrap();
    let (p, q) = (cloud(&pts), cloud(&qs));
    let close = |got: &[f64], want: Vec<f64>| {
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
        }
    };
    close(&avg_knn_self(&p, 3).unwrap().values, pts.iter().map(|r| r.avg_knn).collect());
    close(&lof_self(&p, 3).unwrap().values, pts.iter().map(|r| r.lof).collect());
    close(&avg_knn(&q, &p, 3).unwrap().values, qs.iter().map(|r| r.avg_knn).collect());
    close(&lof(&q, &p, 3).unwrap().values, qs.iter().map(|r| r.lof).collect());
}
