//! CSV emission for evaluation reports: a header row and one row per
//! frame, with the aggregates echoed as trailing comment lines for human
//! readers. External tooling plots from this file.

use super::IoError;
use crate::eval::EvalReport;
use std::fs::File;
use std::io::Write;
use std::path::Path;

pub fn write_csv(report: &EvalReport, path: &Path) -> Result<(), IoError> {
    let mut file = std::io::BufWriter::new(File::create(path)?);
    writeln!(file, "timestamp,rte_m,rre_deg")?;
    for f in &report.frames {
        writeln!(file, "{},{},{}", f.timestamp, f.rte, f.rre_deg)?;
    }
    writeln!(file, "# mean_rte_m,{}", report.mean_rte)?;
    writeln!(file, "# median_rte_m,{}", report.median_rte)?;
    writeln!(file, "# rmse_rte_m,{}", report.rmse_rte)?;
    writeln!(file, "# mean_rre_deg,{}", report.mean_rre_deg)?;
    writeln!(file, "# median_rre_deg,{}", report.median_rre_deg)?;
    writeln!(file, "# rmse_rre_deg,{}", report.rmse_rre_deg)?;
    writeln!(file, "# convergence_rate,{}", report.convergence_rate)?;
    writeln!(file, "# mean_iterations,{}", report.mean_iterations)?;
    writeln!(file, "# fps,{}", report.fps)?;
    Ok(())
}
