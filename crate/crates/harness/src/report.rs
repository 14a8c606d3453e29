//! CSV output for experiment and audit reports.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use dpnormopt_core::audit::AuditRow;

use crate::experiment::{CellSummary, Record};

pub const RECORD_HEADER: [&str; 12] = [
    "d",
    "n",
    "epsilon",
    "delta",
    "rep",
    "variant",
    "p",
    "empirical_gap",
    "analytic_bound",
    "value_queries",
    "runtime_ms",
    "seed",
];

pub const AUDIT_HEADER: [&str; 6] = [
    "instance_id",
    "epsilon",
    "lhs_delta",
    "rhs_delta",
    "margin",
    "pass",
];

/// Twelve significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

fn create(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_records<W: Write>(out: W, records: &[Record]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.d.to_string(),
            r.n.to_string(),
            fmt_float(r.epsilon),
            fmt_float(r.delta),
            r.rep.to_string(),
            r.variant.clone(),
            fmt_float(r.p),
            fmt_float(r.empirical_gap),
            fmt_float(r.analytic_bound),
            r.value_queries.to_string(),
            fmt_float(r.runtime_ms),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-run table; an empty slice gives a header-only file.
pub fn emit_csv(records: &[Record], path: &Path) -> anyhow::Result<()> {
    let file = create(path)?
        .into_inner()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    write_records(file, records).with_context(|| format!("writing {}", path.display()))
}

pub fn read_records(path: &Path) -> anyhow::Result<Vec<Record>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = rdr
        .headers()
        .with_context(|| format!("reading {}", path.display()))?
        .clone();
    if header.iter().ne(RECORD_HEADER) {
        anyhow::bail!("{}: unexpected header {:?}", path.display(), header);
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        let f = |j: usize| -> anyhow::Result<f64> {
            rec[j].parse().with_context(|| {
                format!(
                    "{}: row {} column {}",
                    path.display(),
                    i + 2,
                    RECORD_HEADER[j]
                )
            })
        };
        let u = |j: usize| -> anyhow::Result<u64> {
            rec[j].parse().with_context(|| {
                format!(
                    "{}: row {} column {}",
                    path.display(),
                    i + 2,
                    RECORD_HEADER[j]
                )
            })
        };
        out.push(Record {
            d: u(0)? as usize,
            n: u(1)? as usize,
            epsilon: f(2)?,
            delta: f(3)?,
            rep: u(4)? as usize,
            variant: rec[5].to_string(),
            p: f(6)?,
            empirical_gap: f(7)?,
            analytic_bound: f(8)?,
            value_queries: u(9)?,
            runtime_ms: f(10)?,
            seed: u(11)?,
        });
    }
    Ok(out)
}

pub fn emit_summary(cells: &[CellSummary], path: &Path) -> anyhow::Result<()> {
    let mut w = create(path)?;
    let ctx = || format!("writing {}", path.display());
    w.write_record([
        "d",
        "n",
        "epsilon",
        "reps",
        "mean_gap",
        "stderr",
        "analytic_bound",
        "mean_value_queries",
        "within_bound",
    ])
    .with_context(ctx)?;
    for c in cells {
        w.write_record([
            c.d.to_string(),
            c.n.to_string(),
            fmt_float(c.epsilon),
            c.reps.to_string(),
            fmt_float(c.mean_gap),
            fmt_float(c.stderr),
            fmt_float(c.analytic_bound),
            fmt_float(c.mean_value_queries),
            c.within_bound.to_string(),
        ])
        .with_context(ctx)?;
    }
    w.flush().with_context(ctx)?;
    Ok(())
}

pub fn emit_audit_csv(rows: &[AuditRow], path: &Path) -> anyhow::Result<()> {
    let mut w = create(path)?;
    let ctx = || format!("writing {}", path.display());
    w.write_record(AUDIT_HEADER).with_context(ctx)?;
    for r in rows {
        w.write_record([
            r.instance_id.clone(),
            fmt_float(r.epsilon),
            fmt_float(r.lhs_delta),
            fmt_float(r.rhs_delta),
            fmt_float(r.margin),
            r.pass.to_string(),
        ])
        .with_context(ctx)?;
    }
    w.flush().with_context(ctx)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(gap: f64) -> Record {
        Record {
            d: 4,
            n: 250,
            epsilon: 0.5,
            delta: 1e-6,
            rep: 3,
            variant: "erm".into(),
            p: 1.5,
            empirical_gap: gap,
            analytic_bound: std::f64::consts::PI,
            value_queries: 12345,
            runtime_ms: 0.0,
            seed: u64::MAX,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        emit_csv(&[], &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            RECORD_HEADER.join(",") + "\n"
        );
        assert!(read_records(&path).unwrap().is_empty());
    }

    #[test]
    fn round_trip_at_twelve_digits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/runs.csv");
        let rows = vec![record(1.0 / 3.0), record(-2.5e-9), record(f64::INFINITY)];
        emit_csv(&rows, &path).unwrap();
        let back = read_records(&path).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(fmt_float(a.empirical_gap), fmt_float(b.empirical_gap));
            assert_eq!(fmt_float(a.analytic_bound), fmt_float(b.analytic_bound));
            assert_eq!(
                (a.d, a.n, a.rep, a.seed, a.value_queries),
                (b.d, b.n, b.rep, b.seed, b.value_queries)
            );
        }
        let again = dir.path().join("again.csv");
        emit_csv(&back, &again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_float(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(fmt_float(0.0), "0.00000000000e0");
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = emit_csv(&[], &blocker.join("runs.csv")).unwrap_err();
        assert!(format!("{err:#}").contains("file"), "{err:#}");
    }
}
