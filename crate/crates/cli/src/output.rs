//! Run directories: one CSV per table, `summary.txt` and the effective
//! scenario.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::Local;

use crate::run::{Artifacts, Experiment};
use crate::scenario::Scenario;

/// `<base>/<experiment>-<timestamp>`, suffixed if that already exists.
pub fn create_run_dir(base: &Path, experiment: Experiment) -> Result<PathBuf> {
    let stamp = Local::now().format("%Y%m%dT%H%M%S");
    fs::create_dir_all(base).with_context(|| format!("cannot create {}", base.display()))?;
    let mut dir = base.join(format!("{experiment}-{stamp}"));
    let mut n = 1;
    while dir.exists() {
        n += 1;
        dir = base.join(format!("{experiment}-{stamp}-{n}"));
    }
    fs::create_dir(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

pub fn write_run(
    dir: &Path,
    experiment: Experiment,
    scenario: &Scenario,
    artifacts: &Artifacts,
    elapsed_secs: f64,
) -> Result<()> {
    for (stem, table) in &artifacts.tables {
        let path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    let regime = scenario.problem()?.regime();
    let verdict = match artifacts.pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "done",
    };
    let summary = format!(
        "experiment: {experiment}\nseed: {}\nsamples: {}\nregime: {}\nelapsed: {elapsed_secs:.2} s\nresult: {verdict}\n\n{}",
        scenario.run.seed,
        scenario.run.samples,
        regime.describe(),
        artifacts.summary
    );
    fs::write(dir.join("summary.txt"), summary)?;
    fs::write(dir.join("scenario.effective"), scenario.to_toml()?)?;
    Ok(())
}
