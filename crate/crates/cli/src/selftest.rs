use cubeshap::selftest::{self, load_reference, reference_check};
use cubeshap::{attribute, load_model, DataMatrix, LoadOptions, Metric, MetricKind};

use crate::{Failure, SelftestArgs};

pub fn run(args: &SelftestArgs) -> Result<(), Failure> {
    let mut report = selftest::golden_suite()?;
    if let Some(reference) = &args.reference {
        let (Some(model), Some(consumers)) = (&args.model, &args.consumers) else {
            return Err(Failure::Config("--reference needs --model and --consumers".into()));
        };
        let kind: MetricKind = args.metric.into();
        let ensemble = load_model(model, args.format.into(), &LoadOptions::default())?;
        let features = ensemble.feature_names().to_vec();
        let consumers = DataMatrix::load_csv(consumers, &features)?;
        let background = match &args.background {
            Some(p) => Some(DataMatrix::load_csv(p, &features)?),
            None => None,
        };
        let computed = attribute(&ensemble, &consumers, background.as_ref(), &kind)?;
        let expected = load_reference(reference, &features, kind.order(), consumers.rows())?;
        let name = format!("reference {}: {}", reference.display(), kind.name());
        report.checks.push(reference_check(&name, kind, &computed, &expected));
    }
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
        Err(Failure::Verification(failed.join("; ")))
    }
}
