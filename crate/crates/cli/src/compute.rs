use cubeshap::oracle::{self, MAX_PLAYERS};
use cubeshap::selftest::INTERNAL_TOLERANCE;
use cubeshap::{
    load_model, Attributions, Baseline, DataMatrix, Explainer, LoadOptions, MetricKind, TreeEnsemble,
};

use crate::output::{write_attributions, OutputSpec};
use crate::{init_threads, ComputeArgs, Failure, ModeArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Background,
    PathDependent,
    Baseline,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Background => "background",
            Mode::PathDependent => "path-dependent",
            Mode::Baseline => "baseline",
        }
    }
}

fn resolve_mode(args: &ComputeArgs) -> Result<Mode, Failure> {
    let has_bg = args.background.is_some();
    let has_row = args.baseline_row.is_some();
    let mode = match args.mode {
        Some(ModeArg::Background) => Mode::Background,
        Some(ModeArg::PathDependent) => Mode::PathDependent,
        Some(ModeArg::Baseline) => Mode::Baseline,
        None if has_row => Mode::Baseline,
        None if has_bg => Mode::Background,
        None => Mode::PathDependent,
    };
    match mode {
        Mode::Background if !has_bg => Err(Failure::Config(
            "--mode background needs --background".into(),
        )),
        Mode::PathDependent if has_bg => Err(Failure::Config(
            "--background is not used in path-dependent mode; drop it or pick another --mode".into(),
        )),
        Mode::Baseline if !has_row => Err(Failure::Config(
            "--mode baseline needs --baseline-row <index-or-file>".into(),
        )),
        Mode::Background | Mode::PathDependent if has_row => Err(Failure::Config(
            "--baseline-row only applies to --mode baseline".into(),
        )),
        m => Ok(m),
    }
}

fn baseline_row(spec: &str, background: Option<&DataMatrix>, features: &[String]) -> Result<Vec<f64>, Failure> {
    if let Ok(index) = spec.parse::<usize>() {
        let bg = background.ok_or_else(|| {
            Failure::Config(format!("--baseline-row {index} is an index but no --background was given"))
        })?;
        if index >= bg.rows() {
            return Err(Failure::Config(format!(
                "--baseline-row {index} is out of range: background has {} rows",
                bg.rows()
            )));
        }
        return Ok(bg.row(index).to_vec());
    }
    let data = DataMatrix::load_csv(spec, features)?;
    if data.rows() == 0 {
        return Err(Failure::Lib(cubeshap::Error::EmptyBackground));
    }
    Ok(data.row(0).to_vec())
}

pub fn run(args: &ComputeArgs) -> Result<(), Failure> {
    init_threads(args.threads)?;
    let mode = resolve_mode(args)?;
    let output = OutputSpec::resolve(args.out.as_deref(), args.out_format)?;
    let kind: MetricKind = args.metric.into();
    let opts = LoadOptions {
        depth_cap: args.model.depth_cap,
        require_covers: mode == Mode::PathDependent,
    };
    let ensemble = load_model(&args.model.model, args.model.format.into(), &opts)?;
    let features = ensemble.feature_names().to_vec();
    let consumers = DataMatrix::load_csv(&args.consumers, &features)?;
    let background = match &args.background {
        Some(p) => Some(DataMatrix::load_csv(p, &features)?),
        None => None,
    };
    if args.verify > 0 && ensemble.num_features() > MAX_PLAYERS {
        return Err(Failure::Config(format!(
            "--verify needs at most {MAX_PLAYERS} features, the model has {}",
            ensemble.num_features()
        )));
    }

    let reference = match mode {
        Mode::Background => background,
        Mode::PathDependent => None,
        Mode::Baseline => {
            let row = baseline_row(args.baseline_row.as_deref().unwrap_or_default(), background.as_ref(), &features)?;
            Some(DataMatrix::new(1, row.len(), row)?)
        }
    };
    let baseline = match &reference {
        Some(b) => Baseline::Background(b),
        None => Baseline::PathDependent,
    };
    let result = Explainer::new(&ensemble, baseline, &kind)?.explain(&consumers)?;

    write_attributions(&output, &result, &features, kind, mode.name())?;

    if args.verify > 0 {
        verify(&ensemble, &consumers, reference.as_ref(), &result, kind, args.verify)?;
    }
    Ok(())
}

/// Recomputes evenly spaced rows with the exponential oracle.
fn verify(
    ensemble: &TreeEnsemble,
    consumers: &DataMatrix,
    background: Option<&DataMatrix>,
    result: &Attributions,
    kind: MetricKind,
    requested: usize,
) -> Result<(), Failure> {
    let rows = requested.min(consumers.rows());
    let mut worst = 0.0f64;
    for k in 0..rows {
        let r = k * consumers.rows() / rows;
        let v = match background {
            Some(b) => oracle::tree_characteristic(ensemble, consumers.row(r), b)?,
            None => oracle::pd_characteristic(ensemble, consumers.row(r))?,
        };
        let d = result.result(r, kind).max_abs_diff(&oracle::metric_exact(&v, kind));
        worst = if d.is_nan() { f64::NAN } else { worst.max(d) };
    }
    let ok = worst <= INTERNAL_TOLERANCE;
    eprintln!(
        "verify: {rows} rows, max abs deviation {worst:.3e} {} {INTERNAL_TOLERANCE:.0e} vs oracle",
        if ok { "<=" } else { ">" }
    );
    if ok {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "max abs deviation {worst:.3e} exceeds {INTERNAL_TOLERANCE:.0e}"
        )))
    }
}
