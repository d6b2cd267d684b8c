//! Text artifacts: CSV tables and tab-separated summaries.
//!
//! Numbers are written as `.`-separated scientific notation with ten
//! significant digits, lines end in LF.

use std::path::Path;

use crate::calibration::{LookupTable, RowDetail};
use crate::error::{Error, Result};
use crate::read_sim::{delay_decomposition, ReadSetup, SequenceReport};
use crate::variation::{Summary, SweepResult};

pub fn sci(v: f64) -> String {
    format!("{v:.9e}")
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Usage(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Usage(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

pub fn sweep_csv(result: &SweepResult) -> Result<String> {
    let header = [
        "vdd",
        "temperature",
        "depth",
        "r01",
        "i_leak_mean",
        "i_leak_std",
        "i_leak_min",
        "i_leak_max",
        "t_leak_mean",
        "t_leak_std",
        "t_leak_min",
        "t_read0_mean",
        "t_read0_std",
        "t_read0_max",
        "window_ratio",
    ];
    let rows = result.rows.iter().map(|r| {
        vec![
            sci(r.point.vdd),
            sci(r.point.temperature),
            r.point.depth.to_string(),
            sci(r.point.r01),
            sci(r.leakage.mean),
            sci(r.leakage.std),
            sci(r.leakage.min),
            sci(r.leakage.max),
            sci(r.t_leak.mean),
            sci(r.t_leak.std),
            sci(r.t_leak.min),
            sci(r.t_read0.mean),
            sci(r.t_read0.std),
            sci(r.t_read0.max),
            sci(r.window_ratio),
        ]
    });
    csv_text(&header, rows)
}

pub fn clock_csv(rows: &[(f64, Summary)]) -> Result<String> {
    csv_text(
        &["vdd", "t_ck_mean", "t_ck_std"],
        rows.iter()
            .map(|(v, s)| vec![sci(*v), sci(s.mean), sci(s.std)]),
    )
}

/// Human-readable calibration summary.
pub fn calibration_summary(table: &LookupTable, details: &[RowDetail]) -> String {
    let mut s = String::new();
    s.push_str(
        "vdd(V)  c_l      c_r      beta      t_ck(s)          t_r0_max(s)      t_leak_min(s)\n",
    );
    for (r, d) in table.rows.iter().zip(details) {
        let c_l = if r.saturated {
            format!("{}+", r.c_l)
        } else {
            r.c_l.to_string()
        };
        let c_r = r.c_r.map_or("invalid".to_string(), |c| c.to_string());
        s.push_str(&format!(
            "{:<7.3} {:<8} {:<8} {:<9.4} {:<16} {:<16} {}\n",
            r.vdd,
            c_l,
            c_r,
            r.beta,
            sci(d.timing.t_ck),
            sci(d.window.t_r0_max),
            sci(d.window.t_leak_min)
        ));
    }
    match table.vdd_min() {
        Some(v) => s.push_str(&format!("VDDMIN = {v:.3} V\n")),
        None => s.push_str("VDDMIN = none (no valid supply)\n"),
    }
    s
}

/// Tab-separated `key<TAB>value` summary of a read run.
pub fn read_summary_tsv(
    report: &SequenceReport,
    setup: &ReadSetup,
    config_sha256: &str,
) -> Result<String> {
    let mut lines = vec![
        ("config_sha256".to_string(), config_sha256.to_string()),
        ("seed".into(), setup.model.seed.to_string()),
        ("vdd".into(), sci(setup.cfg.env.vdd)),
        ("temperature".into(), sci(setup.cfg.env.temperature)),
        ("c_r".into(), setup.c_r.to_string()),
        ("t_ck".into(), sci(setup.timing.t_ck)),
        ("t_sa".into(), sci(setup.timing.t_sa)),
        ("reads".into(), report.reads.to_string()),
        ("bit_errors".into(), report.bit_errors.to_string()),
        ("mean_delay".into(), sci(report.mean_delay)),
        ("max_delay".into(), sci(report.max_delay)),
    ];
    if !report.results.is_empty() {
        let sh = delay_decomposition(&report.results)?;
        lines.push(("share_rwl".into(), sci(sh.rwl)));
        lines.push(("share_rbl".into(), sci(sh.rbl)));
        lines.push(("share_sa".into(), sci(sh.sa)));
    }
    Ok(lines
        .into_iter()
        .map(|(k, v)| format!("{k}\t{v}\n"))
        .collect())
}

pub fn reads_csv(report: &SequenceReport) -> Result<String> {
    let header = [
        "index",
        "array",
        "row",
        "expected",
        "word",
        "bit_errors",
        "t_rwl",
        "t_rbl",
        "t_sa",
        "total",
    ];
    let rows = report.results.iter().enumerate().map(|(k, r)| {
        vec![
            k.to_string(),
            r.array.to_string(),
            r.row.to_string(),
            format!("{:016x}", r.expected),
            format!("{:016x}", r.word),
            r.bit_errors().to_string(),
            sci(r.delay.t_rwl),
            sci(r.delay.t_rbl),
            sci(r.delay.t_sa),
            sci(r.delay.total),
        ]
    });
    csv_text(&header, rows)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(sci(1.5e-7), "1.500000000e-7");
        assert_eq!(sci(0.0), "0.000000000e0");
        let v = 1.234567891e-11;
        assert_eq!(sci(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn clock_table() {
        let s = Summary::from_values(&[1e-9, 3e-9]);
        let t = clock_csv(&[(0.3, s)]).unwrap();
        assert_eq!(
            t,
            "vdd,t_ck_mean,t_ck_std\n3.000000000e-1,2.000000000e-9,1.000000000e-9\n"
        );
    }
}
