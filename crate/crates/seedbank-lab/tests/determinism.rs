//! Results depend on the seed only, not on how many worker threads run.

use seedbank_lab::config::parse_config;
use seedbank_lab::run::execute;

fn rows_with_threads(threads: usize, text: &str) -> Vec<(String, f64, f64)> {
    let cfg = parse_config(text, std::path::Path::new("inline")).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let out = pool.install(|| execute(&cfg)).unwrap();
    out.rows
        .into_iter()
        .map(|r| (r.estimator, r.value, r.stderr))
        .collect()
}

#[test]
fn thread_count_does_not_change_results() {
    for text in [
        r#"{"experiment": "simulate-forward", "masterSeed": 8, "replicas": 700,
            "geometry": {"d": 1, "L": 5}, "numeric": {"outputTimes": [0.3]},
            "initial": {"kind": "bernoulli", "p": 0.4}}"#,
        r#"{"experiment": "coalescence-prob", "masterSeed": 8, "replicas": 900,
            "geometry": {"d": 1, "L": 6}, "numeric": {"outputTimes": [1, 10]}}"#,
        r#"{"experiment": "ibm-moran", "masterSeed": 8, "replicas": 600}"#,
    ] {
        let one = rows_with_threads(1, text);
        assert_eq!(one, rows_with_threads(3, text));
        assert_eq!(one, rows_with_threads(4, text));
    }
}
