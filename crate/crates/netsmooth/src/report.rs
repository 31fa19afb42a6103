//! Plot-ready tables derived from result files.

use std::io::{Read, Write};

use crate::harness::Summary;
use crate::multiverse::MULTIVERSE_HEADER;

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// `dgp,estimator,corruption,coefficient,n,mse,median_squared_error,reps,failures`
pub fn write_mse_by_n<W: Write>(summary: &Summary, out: W) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record([
        "dgp",
        "estimator",
        "corruption",
        "coefficient",
        "n",
        "mse",
        "median_squared_error",
        "reps",
        "failures",
    ])?;
    for e in &summary.mse_table {
        w.write_record([
            e.dgp.clone(),
            e.estimator.clone(),
            e.corruption.clone(),
            e.coefficient.clone(),
            e.n.to_string(),
            e.mse.to_string(),
            e.median_squared_error.to_string(),
            e.reps.to_string(),
            e.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `dgp,estimator,corruption,coefficient,n,coverage,reps`
pub fn write_coverage<W: Write>(summary: &Summary, out: W) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record([
        "dgp",
        "estimator",
        "corruption",
        "coefficient",
        "n",
        "coverage",
        "reps",
    ])?;
    for e in &summary.coverage_table {
        w.write_record([
            e.dgp.clone(),
            e.estimator.clone(),
            e.corruption.clone(),
            e.coefficient.clone(),
            e.n.to_string(),
            e.coverage.to_string(),
            e.reps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Copies `d,variant,estimate,ci_lower,ci_upper` out of a multiverse table,
/// skipping failed fits. Returns the number of rows written.
pub fn write_multiverse_ci<R: Read, W: Write>(input: R, out: W) -> anyhow::Result<usize> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(
        header == MULTIVERSE_HEADER,
        "multiverse header mismatch: expected {}, found {}",
        MULTIVERSE_HEADER.join(","),
        header.join(",")
    );
    let mut w = writer(out);
    w.write_record(["d", "variant", "estimate", "ci_lower", "ci_upper"])?;
    let mut count = 0;
    for record in r.records() {
        let record = record?;
        if &record[6] == "true" {
            continue;
        }
        w.write_record([&record[0], &record[1], &record[2], &record[4], &record[5]])?;
        count += 1;
    }
    w.flush()?;
    Ok(count)
}
