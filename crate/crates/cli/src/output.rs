use std::fs;
use std::path::Path;

use serde::Serialize;

/// A table of numbers written as one CSV file.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, header: &[&str], rows: Vec<Vec<f64>>) -> Self {
        Series { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows }
    }
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    experiment: &'a str,
    timestamp: u64,
    seed: u64,
    workers: usize,
    config: &'a C,
    warnings: &'a [String],
    results: &'a R,
}

/// Writes `<out>/<name>.json` and one `<out>/<name>_<series>.csv` per series.
#[allow(clippy::too_many_arguments)]
pub fn write_report<C: Serialize, R: Serialize>(
    out: &Path,
    name: &str,
    seed: u64,
    workers: usize,
    config: &C,
    warnings: &[String],
    results: &R,
    series: &[Series],
) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let envelope = Envelope { experiment: name, timestamp, seed, workers, config, warnings, results };
    let mut json = serde_json::to_string_pretty(&envelope).map_err(std::io::Error::other)?;
    json.push('\n');
    fs::write(out.join(format!("{name}.json")), json)?;
    for s in series {
        let mut w = csv::Writer::from_path(out.join(format!("{name}_{}.csv", s.name)))?;
        w.write_record(&s.header)?;
        for row in &s.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
    }
    Ok(())
}
