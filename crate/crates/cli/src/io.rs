//! CSV and JSON file formats.
//!
//! Column names carry units so a file can never be misread silently:
//!
//! - batch data: `t_h,s_G_gpl,B_c_gpl,p_L_gpl` plus an optional constant
//!   `u_umol_m2_s` column and an optional `E_vu_pg` column (written by
//!   `simulate`, ignored on load because ATPase is never measured);
//! - light schedules: `interval_start_h,u_umol_m2_s`;
//! - residual samples: the batch columns plus `w_G_gplh,w_c_gplh,w_L_gplh`.
//!
//! All files are UTF-8 with LF line endings. Floats are written in Rust's
//! shortest round-trip form, so write-then-read preserves values exactly.

use std::fs;
use std::path::Path;

use optoferm_core::hybrid::{ResidualEquation, ResidualSample};
use optoferm_core::{BatchDataset, ControlSchedule, Sample, State, Trajectory};
use serde::Serialize;

use crate::{CliError, Result};

pub const COL_TIME: &str = "t_h";
pub const COL_GLUCOSE: &str = "s_G_gpl";
pub const COL_BIOMASS: &str = "B_c_gpl";
pub const COL_LACTATE: &str = "p_L_gpl";
pub const COL_LIGHT: &str = "u_umol_m2_s";
pub const COL_ATPASE: &str = "E_vu_pg";
pub const COL_INTERVAL_START: &str = "interval_start_h";
pub const COL_RESIDUAL_GLUCOSE: &str = "w_G_gplh";
pub const COL_RESIDUAL_BIOMASS: &str = "w_c_gplh";
pub const COL_RESIDUAL_LACTATE: &str = "w_L_gplh";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Data(format!("{}: {source}", path.display()))
}

fn parse_cell(raw: &str, column: &str, row: usize, path: &Path) -> Result<Option<f64>> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    trimmed.parse::<f64>().map(Some).map_err(|_| {
        CliError::Data(format!(
            "{}: row {row}: column {column}: cannot parse `{trimmed}` as a number",
            path.display()
        ))
    })
}

struct BatchColumns {
    time: usize,
    glucose: usize,
    biomass: usize,
    lactate: usize,
    light: Option<usize>,
}

fn map_batch_columns(path: &Path, headers: &csv::StringRecord) -> Result<BatchColumns> {
    let mut time = None;
    let mut glucose = None;
    let mut biomass = None;
    let mut lactate = None;
    let mut light = None;
    for (idx, name) in headers.iter().enumerate() {
        match name.trim() {
            COL_TIME => time = Some(idx),
            COL_GLUCOSE => glucose = Some(idx),
            COL_BIOMASS => biomass = Some(idx),
            COL_LACTATE => lactate = Some(idx),
            COL_LIGHT => light = Some(idx),
            COL_ATPASE => {}
            other => {
                return Err(CliError::Data(format!(
                    "{}: unknown column `{other}`",
                    path.display()
                )));
            }
        }
    }
    let require = |col: Option<usize>, name: &str| {
        col.ok_or_else(|| CliError::Data(format!("{}: missing column `{name}`", path.display())))
    };
    Ok(BatchColumns {
        time: require(time, COL_TIME)?,
        glucose: require(glucose, COL_GLUCOSE)?,
        biomass: require(biomass, COL_BIOMASS)?,
        lactate: require(lactate, COL_LACTATE)?,
        light,
    })
}

/// Load one batch dataset. The light schedule comes from the paired
/// schedule file when given; otherwise from a constant `u_umol_m2_s`
/// column spanning the sampled horizon.
pub fn load_batch_csv(path: &Path, schedule_file: Option<&Path>) -> Result<BatchDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(csv_err(path))?;
    let columns = map_batch_columns(path, &reader.headers().map_err(csv_err(path))?.clone())?;

    let mut samples = Vec::new();
    let mut lights = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err(path))?;
        let cell = |idx: usize, name: &str| -> Result<Option<f64>> {
            parse_cell(record.get(idx).unwrap_or(""), name, row, path)
        };
        let time = cell(columns.time, COL_TIME)?.ok_or_else(|| {
            CliError::Data(format!("{}: row {row}: missing time value", path.display()))
        })?;
        samples.push(Sample {
            time,
            glucose: cell(columns.glucose, COL_GLUCOSE)?,
            biomass: cell(columns.biomass, COL_BIOMASS)?,
            lactate: cell(columns.lactate, COL_LACTATE)?,
        });
        if let Some(idx) = columns.light
            && let Some(u) = cell(idx, COL_LIGHT)?
        {
            lights.push((row, u));
        }
    }
    if samples.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }

    let schedule = match schedule_file {
        Some(file) => load_schedule_csv(file)?,
        None => {
            let Some(&(_, first_u)) = lights.first() else {
                return Err(CliError::Data(format!(
                    "{}: no schedule file given and no `{COL_LIGHT}` column present",
                    path.display()
                )));
            };
            if let Some((row, u)) = lights.iter().find(|(_, u)| *u != first_u) {
                return Err(CliError::Data(format!(
                    "{}: row {row}: `{COL_LIGHT}` is {u} but earlier rows say {first_u}; \
                     a varying schedule needs a paired schedule file",
                    path.display()
                )));
            }
            let t0 = samples[0].time;
            let tf = samples.last().unwrap().time;
            if tf <= t0 {
                return Err(CliError::Data(format!(
                    "{}: constant-light schedule needs a positive sampled duration",
                    path.display()
                )));
            }
            ControlSchedule::constant(t0, tf, 1.0_f64.min(tf - t0), first_u)?
        }
    };

    let first = samples[0];
    let (Some(glucose), Some(biomass), Some(lactate)) =
        (first.glucose, first.biomass, first.lactate)
    else {
        return Err(CliError::Data(format!(
            "{}: row 1 must observe glucose, biomass, and lactate to anchor the initial state",
            path.display()
        )));
    };
    let id = path.file_stem().map_or_else(|| "batch".to_string(), |s| s.to_string_lossy().into());
    let dataset = BatchDataset {
        id,
        schedule,
        initial_state: State { biomass, atpase: 0.0, glucose, lactate },
        samples,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Load a piecewise-constant schedule: one row per interval, uniform
/// spacing; the final interval gets the spacing of the previous ones
/// (1 h for a single-row file).
pub fn load_schedule_csv(path: &Path) -> Result<ControlSchedule> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let mut start_idx = None;
    let mut light_idx = None;
    for (idx, name) in headers.iter().enumerate() {
        match name.trim() {
            COL_INTERVAL_START => start_idx = Some(idx),
            COL_LIGHT => light_idx = Some(idx),
            other => {
                return Err(CliError::Data(format!(
                    "{}: unknown column `{other}`",
                    path.display()
                )));
            }
        }
    }
    let (Some(start_idx), Some(light_idx)) = (start_idx, light_idx) else {
        return Err(CliError::Data(format!(
            "{}: schedule needs `{COL_INTERVAL_START}` and `{COL_LIGHT}` columns",
            path.display()
        )));
    };

    let mut starts = Vec::new();
    let mut levels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err(path))?;
        let start = parse_cell(record.get(start_idx).unwrap_or(""), COL_INTERVAL_START, row, path)?
            .ok_or_else(|| {
                CliError::Data(format!("{}: row {row}: missing interval start", path.display()))
            })?;
        let level = parse_cell(record.get(light_idx).unwrap_or(""), COL_LIGHT, row, path)?
            .ok_or_else(|| {
                CliError::Data(format!("{}: row {row}: missing light level", path.display()))
            })?;
        starts.push(start);
        levels.push(level);
    }
    if starts.is_empty() {
        return Err(CliError::Data(format!("{}: no schedule rows", path.display())));
    }
    let width = if starts.len() >= 2 { starts[1] - starts[0] } else { 1.0 };
    if width <= 0.0 {
        return Err(CliError::Data(format!(
            "{}: interval starts must be strictly increasing",
            path.display()
        )));
    }
    for (i, pair) in starts.windows(2).enumerate() {
        if ((pair[1] - pair[0]) - width).abs() > 1e-9 {
            return Err(CliError::Data(format!(
                "{}: row {}: interval spacing {} differs from {width}",
                path.display(),
                i + 2,
                pair[1] - pair[0]
            )));
        }
    }
    let t0 = starts[0];
    let tf = starts.last().unwrap() + width;
    Ok(ControlSchedule::new(t0, tf, width, levels)?)
}

/// Write a simulated trajectory with the applied light level per row.
pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    writer
        .write_record([COL_TIME, COL_GLUCOSE, COL_BIOMASS, COL_LACTATE, COL_ATPASE, COL_LIGHT])
        .map_err(csv_err(path))?;
    for (t, state) in trajectory.times.iter().zip(&trajectory.states) {
        writer
            .write_record([
                format!("{t}"),
                format!("{}", state.glucose),
                format!("{}", state.biomass),
                format!("{}", state.lactate),
                format!("{}", state.atpase),
                format!("{}", trajectory.schedule.level_at(*t)),
            ])
            .map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// Write residual samples, one row per time point with the three equation
/// targets as columns.
pub fn write_residuals_csv(path: &Path, samples: &[ResidualSample]) -> Result<()> {
    if !samples.len().is_multiple_of(3) {
        return Err(CliError::Data(
            "residual samples must come in (glucose, biomass, lactate) triples".into(),
        ));
    }
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    writer
        .write_record([
            COL_TIME,
            COL_GLUCOSE,
            COL_BIOMASS,
            COL_LACTATE,
            COL_ATPASE,
            COL_LIGHT,
            COL_RESIDUAL_GLUCOSE,
            COL_RESIDUAL_BIOMASS,
            COL_RESIDUAL_LACTATE,
        ])
        .map_err(csv_err(path))?;
    for triple in samples.chunks_exact(3) {
        let [g, b, l] = triple else { unreachable!() };
        let aligned = g.equation == ResidualEquation::Glucose
            && b.equation == ResidualEquation::Biomass
            && l.equation == ResidualEquation::Lactate
            && g.features == b.features
            && g.features == l.features;
        if !aligned {
            return Err(CliError::Data(
                "residual samples must come in aligned (glucose, biomass, lactate) triples".into(),
            ));
        }
        writer
            .write_record([
                format!("{}", g.time),
                format!("{}", g.features[0]),
                format!("{}", g.features[1]),
                format!("{}", g.features[2]),
                format!("{}", g.features[3]),
                format!("{}", g.features[4]),
                format!("{}", g.target),
                format!("{}", b.target),
                format!("{}", l.target),
            ])
            .map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// Read residual samples written by [`write_residuals_csv`].
pub fn load_residuals_csv(path: &Path) -> Result<Vec<ResidualSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err(path))?;
    let expected = [
        COL_TIME,
        COL_GLUCOSE,
        COL_BIOMASS,
        COL_LACTATE,
        COL_ATPASE,
        COL_LIGHT,
        COL_RESIDUAL_GLUCOSE,
        COL_RESIDUAL_BIOMASS,
        COL_RESIDUAL_LACTATE,
    ];
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != expected {
        return Err(CliError::Data(format!(
            "{}: expected residual columns {expected:?}, got {names:?}",
            path.display()
        )));
    }
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err(path))?;
        let mut values = [0.0; 9];
        for (j, value) in values.iter_mut().enumerate() {
            *value = parse_cell(record.get(j).unwrap_or(""), expected[j], row, path)?
                .ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: row {row}: missing value in column {}",
                        path.display(),
                        expected[j]
                    ))
                })?;
        }
        let features = [values[1], values[2], values[3], values[4], values[5]];
        for (equation, target) in [
            (ResidualEquation::Glucose, values[6]),
            (ResidualEquation::Biomass, values[7]),
            (ResidualEquation::Lactate, values[8]),
        ] {
            samples.push(ResidualSample { time: values[0], features, target, equation });
        }
    }
    if samples.is_empty() {
        return Err(CliError::Data(format!("{}: no residual rows", path.display())));
    }
    Ok(samples)
}

/// Provenance envelope wrapped around every JSON artifact.
#[derive(Debug, Serialize)]
pub struct Report<'a, C: Serialize, P: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: &'a C,
    #[serde(flatten)]
    pub payload: P,
}

pub fn write_report<C: Serialize, P: Serialize>(
    path: &Path,
    config: &C,
    seed: u64,
    payload: P,
) -> Result<()> {
    let report = Report {
        tool: "optoferm",
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
        payload,
    };
    let mut body = serde_json::to_string_pretty(&report)
        .map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    body.push('\n');
    fs::write(path, body).map_err(io_err(path))?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&body).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}
