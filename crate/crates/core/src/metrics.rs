//! Imitation-quality metrics: mean absolute Action-Unit intensity difference
//! (MAID) and average user rating (AUR).

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AU_MAX: f64 = 5.0;
pub const RATING_MIN: u8 = 1;
pub const RATING_MAX: u8 = 5;

/// Action-Unit intensities for one sample, each in `[0, 5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuVector {
    intensities: Vec<f64>,
}

impl AuVector {
    pub fn new(intensities: Vec<f64>) -> Result<Self> {
        if let Some(v) = intensities.iter().find(|v| !(0.0..=AU_MAX).contains(*v)) {
            return Err(Error::Validation(format!(
                "AU intensity {v} outside [0, {AU_MAX}]"
            )));
        }
        Ok(Self { intensities })
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }
}

/// `(1 / nT) * sum_t sum_i |h_ti - r_ti|`.
pub fn maid(human: &[AuVector], robot: &[AuVector]) -> Result<f64> {
    if human.is_empty() || human.len() != robot.len() {
        return Err(Error::Dimension(format!(
            "MAID needs equal non-empty lists, got {} human / {} robot",
            human.len(),
            robot.len()
        )));
    }
    let mut total = 0.0;
    for (t, (h, r)) in human.iter().zip(robot).enumerate() {
        if h.is_empty() || h.len() != r.len() {
            return Err(Error::Dimension(format!(
                "sample {t}: {} human vs {} robot AUs",
                h.len(),
                r.len()
            )));
        }
        let diff: f64 = h
            .intensities
            .iter()
            .zip(&r.intensities)
            .map(|(a, b)| (a - b).abs())
            .sum();
        total += diff / h.len() as f64;
    }
    Ok(total / human.len() as f64)
}

/// `ratings[t][j]`: score of sample `t` by rater `j`, each in `1..=5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSet {
    ratings: Vec<Vec<u8>>,
}

impl RatingSet {
    pub fn new(ratings: Vec<Vec<u8>>) -> Result<Self> {
        let m = ratings.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::Dimension("rating set needs at least one sample and rater".into()));
        }
        for (t, row) in ratings.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension(format!(
                    "sample {t} has {} ratings, expected {m}",
                    row.len()
                )));
            }
            if let Some(r) = row.iter().find(|r| !(RATING_MIN..=RATING_MAX).contains(*r)) {
                return Err(Error::Validation(format!("rating {r} outside 1..5")));
            }
        }
        Ok(Self { ratings })
    }

    /// Accepts wider integers so that out-of-range input reports cleanly.
    pub fn from_scores(ratings: Vec<Vec<i64>>) -> Result<Self> {
        let narrowed = ratings
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|r| {
                        u8::try_from(r)
                            .map_err(|_| Error::Validation(format!("rating {r} outside 1..5")))
                    })
                    .collect::<Result<Vec<u8>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(narrowed)
    }

    pub fn samples(&self) -> usize {
        self.ratings.len()
    }

    pub fn raters(&self) -> usize {
        self.ratings[0].len()
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.ratings
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurReport {
    pub per_rater: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of the per-rater means; 0 for one rater.
    pub std: f64,
}

pub fn aur(ratings: &RatingSet) -> AurReport {
    let t = ratings.samples() as f64;
    let per_rater: Vec<f64> = (0..ratings.raters())
        .map(|j| ratings.ratings.iter().map(|row| row[j] as f64).sum::<f64>() / t)
        .collect();
    let m = per_rater.len() as f64;
    let mean = per_rater.iter().sum::<f64>() / m;
    let std = if per_rater.len() < 2 {
        0.0
    } else {
        (per_rater.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    };
    AurReport {
        per_rater,
        mean,
        std,
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv: {e}"))
}

fn parse_rows<R: Read, T>(
    input: R,
    parse: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<(Vec<String>, Vec<Vec<T>>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|cell| parse(cell).map_err(|e| Error::Validation(format!("row {}: {e}", i + 1))))
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// AU table: header of AU names, one row of intensities per sample.
pub fn read_au_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<AuVector>)> {
    let (names, rows) = parse_rows(input, |s| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}")))?;
    let vectors = rows.into_iter().map(AuVector::new).collect::<Result<Vec<_>>>()?;
    Ok((names, vectors))
}

/// Rating table: header of rater names, one row per sample.
pub fn read_ratings_csv<R: Read>(input: R) -> Result<RatingSet> {
    let (_, rows) = parse_rows(input, |s| s.parse::<i64>().map_err(|e| format!("{s:?}: {e}")))?;
    RatingSet::from_scores(rows)
}

/// MAID between two AU files whose headers must agree.
pub fn maid_from_files(human: &Path, robot: &Path) -> Result<f64> {
    let (hn, hv) = read_au_csv(std::fs::File::open(human)?)?;
    let (rn, rv) = read_au_csv(std::fs::File::open(robot)?)?;
    if hn != rn {
        return Err(Error::Dimension(format!("AU headers differ: {hn:?} vs {rn:?}")));
    }
    maid(&hv, &rv)
}

pub fn aur_from_file(path: &Path) -> Result<AurReport> {
    Ok(aur(&read_ratings_csv(std::fs::File::open(path)?)?))
}
