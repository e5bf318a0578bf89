use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::positive::Direction;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column `{0}` (header must hold t_s, I_A, V_V)")]
    MissingColumn(&'static str),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("dataset holds no samples")]
    Empty,
    #[error("current is zero throughout, direction unknown")]
    NoCurrent,
    #[error("nominal capacity must be positive, got {0}")]
    Capacity(f64),
    #[error("initial state of charge {0} outside [0, 1]")]
    Soc(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Current, A; positive on discharge.
    pub current: f64,
    pub voltage: f64,
}

/// One measured charge or discharge: voltage under a single-sign current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub direction: Direction,
    pub samples: Vec<Sample>,
    /// Nominal capacity used for Coulomb counting, Ah.
    pub q_nom: f64,
    pub soc0: f64,
}

impl Dataset {
    /// Validates the samples and infers the direction from the current sign.
    /// Row numbers in errors count the header as row 1.
    pub fn new(samples: Vec<Sample>, q_nom: f64, soc0: f64) -> Result<Self, DatasetError> {
        if !(q_nom > 0.0) {
            return Err(DatasetError::Capacity(q_nom));
        }
        if !(0.0..=1.0).contains(&soc0) {
            return Err(DatasetError::Soc(soc0));
        }
        if samples.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut direction = None;
        for (k, s) in samples.iter().enumerate() {
            let row = k + 2;
            if !(s.t.is_finite() && s.current.is_finite() && s.voltage.is_finite()) {
                return Err(DatasetError::Row {
                    row,
                    message: "non-finite value".into(),
                });
            }
            if !(s.voltage > 0.0) {
                return Err(DatasetError::Row {
                    row,
                    message: format!("voltage {} must be positive", s.voltage),
                });
            }
            if k > 0 && s.t <= samples[k - 1].t {
                return Err(DatasetError::Row {
                    row,
                    message: format!("time {} not increasing", s.t),
                });
            }
            if let Some(d) = Direction::of_current(s.current) {
                match direction {
                    None => direction = Some(d),
                    Some(prev) if prev != d => {
                        return Err(DatasetError::Row {
                            row,
                            message: "current changes sign".into(),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(Dataset {
            direction: direction.ok_or(DatasetError::NoCurrent)?,
            samples,
            q_nom,
            soc0,
        })
    }

    /// Reads a CSV with header columns t_s, I_A, V_V (any order, extra
    /// columns ignored).
    pub fn from_reader<R: Read>(reader: R, q_nom: f64, soc0: f64) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| DatasetError::Row {
                row: 1,
                message: e.to_string(),
            })?
            .clone();
        let column = |name: &'static str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or(DatasetError::MissingColumn(name))
        };
        let (ct, ci, cv) = (column("t_s")?, column("I_A")?, column("V_V")?);
        let mut samples = Vec::new();
        for (k, record) in rdr.records().enumerate() {
            let row = k + 2;
            let record = record.map_err(|e| DatasetError::Row {
                row,
                message: e.to_string(),
            })?;
            let field = |c: usize, name: &str| -> Result<f64, DatasetError> {
                let raw = record.get(c).unwrap_or("");
                raw.parse::<f64>().map_err(|_| DatasetError::Row {
                    row,
                    message: format!("{name}: cannot parse `{raw}`"),
                })
            };
            samples.push(Sample {
                t: field(ct, "t_s")?,
                current: field(ci, "I_A")?,
                voltage: field(cv, "V_V")?,
            });
        }
        Dataset::new(samples, q_nom, soc0)
    }

    pub fn from_path(path: &Path, q_nom: f64, soc0: f64) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(std::io::BufReader::new(file), q_nom, soc0)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t_s,I_A,V_V\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{}\n", s.t, s.current, s.voltage));
        }
        out
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Coulomb-counted state of charge at every sample (trapezoidal rule).
    pub fn soc_exp(&self) -> Vec<f64> {
        let mut soc = Vec::with_capacity(self.samples.len());
        let mut charge = 0.0;
        soc.push(self.soc0);
        for w in self.samples.windows(2) {
            charge += 0.5 * (w[0].current + w[1].current) * (w[1].t - w[0].t);
            soc.push(self.soc0 - charge / (3600.0 * self.q_nom));
        }
        soc
    }

    /// Piecewise-constant current schedule holding each sample's current
    /// until the next sample; runs of equal current are merged.
    pub fn current_schedule(&self) -> Vec<(f64, f64)> {
        let mut segments: Vec<(f64, f64)> = Vec::new();
        for s in &self.samples {
            if segments.last().is_none_or(|(_, i)| *i != s.current) {
                segments.push((s.t, s.current));
            }
        }
        segments
    }
}
