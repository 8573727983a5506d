use std::time::Duration;

use cubeshap::cube_map::map_patterns_to_cube;
use cubeshap::synth::{self, EnsembleSpec};
use cubeshap::{Baseline, DataMatrix, Explainer, MetricKind, StageTimings, TreeEnsemble};

use crate::{init_threads, BenchArgs, Failure};

const SLACK: f64 = 3.0;

fn fastest(
    ensemble: &TreeEnsemble,
    consumers: &DataMatrix,
    background: &DataMatrix,
    kind: MetricKind,
    repeats: usize,
) -> Result<StageTimings, Failure> {
    let mut best: Option<StageTimings> = None;
    for _ in 0..repeats.max(1) {
        let mut ex = Explainer::new(ensemble, Baseline::Background(background), &kind)?;
        ex.explain(consumers)?;
        let t = ex.timings();
        best = Some(match best {
            None => t,
            Some(b) => StageTimings {
                frequencies: b.frequencies.min(t.frequencies),
                matrices: b.matrices.min(t.matrices),
                scores: b.scores.min(t.scores),
                consumer_patterns: b.consumer_patterns.min(t.consumer_patterns),
                gather: b.gather.min(t.gather),
            },
        });
    }
    Ok(best.expect("at least one run"))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn run(args: &BenchArgs) -> Result<(), Failure> {
    init_threads(args.threads)?;
    if args.depth == 0 || args.depth > 12 {
        return Err(Failure::Config("--depth must be within 1..=12".into()));
    }
    if args.n == 0 || args.m == 0 || args.trees == 0 || args.features == 0 {
        return Err(Failure::Config("--trees, --features, --n and --m must be positive".into()));
    }
    let kind: MetricKind = args.metric.into();
    let mut rng = synth::rng(args.seed);
    let spec = EnsembleSpec::new(args.trees, args.depth, args.features).full();
    let ensemble = synth::random_ensemble(&mut rng, spec);
    let consumers = synth::random_data(&mut rng, 2 * args.n, args.features);
    let background = synth::random_data(&mut rng, 2 * args.m, args.features);
    let (c1, b1) = (consumers.slice_rows(0, args.n), background.slice_rows(0, args.m));

    println!(
        "T={} D={} features={} metric={} repeats={}",
        args.trees,
        args.depth,
        args.features,
        kind.name(),
        args.repeats
    );
    println!(
        "{:>8} {:>8} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "n", "m", "freq_ms", "matrix_ms", "score_ms", "pattern_ms", "gather_ms"
    );
    let mut points = Vec::new();
    for (c, b) in [(&c1, &b1), (&consumers, &b1), (&c1, &background)] {
        let t = fastest(&ensemble, c, b, kind, args.repeats)?;
        println!(
            "{:>8} {:>8} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>12.3}",
            c.rows(),
            b.rows(),
            ms(t.frequencies),
            ms(t.matrices),
            ms(t.scores),
            ms(t.consumer_patterns),
            ms(t.gather)
        );
        points.push(t);
    }
    let stage4 = |t: &StageTimings| (t.consumer_patterns + t.gather).as_secs_f64();
    let r_n = stage4(&points[1]) / stage4(&points[0]);
    let r_m = points[2].frequencies.as_secs_f64() / points[0].frequencies.as_secs_f64();
    let dict = |k: usize| map_patterns_to_cube(&(0..k).collect::<Vec<_>>()).len();
    let r_d = dict(args.depth + 1) as f64 / dict(args.depth) as f64;
    let flag = |r: f64| if r > SLACK { "  SUPER-LINEAR" } else { "" };
    println!("stage 4 time, n doubled: x{r_n:.2}{}", flag(r_n));
    println!("stage 1 time, m doubled: x{r_m:.2}{}", flag(r_m));
    println!(
        "dictionary entries, path length {} -> {}: {} -> {} (x{r_d:.2})",
        args.depth,
        args.depth + 1,
        dict(args.depth),
        dict(args.depth + 1)
    );
    if args.strict && (r_n > SLACK || r_m > SLACK) {
        return Err(Failure::Verification(format!(
            "growth per doubling above {SLACK}x (n: x{r_n:.2}, m: x{r_m:.2})"
        )));
    }
    Ok(())
}
