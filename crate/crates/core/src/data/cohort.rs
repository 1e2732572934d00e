use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::data::aal::feature_column;
use crate::data::scores::{normalize_scores, NormalizedScores, RawScores, Score};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Modality, Representation, SubjectFeatures, N_ROIS};

const ID_COLUMN: &str = "subject_id";

/// Subjects of one cohort file in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    pub ids: Vec<String>,
    pub subjects: Vec<SubjectFeatures>,
    pub scores: Vec<RawScores>,
}

impl CohortTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn normalized(&self, cohort_min_max: bool) -> Result<NormalizedScores> {
        normalize_scores(&self.scores, cohort_min_max)
    }

    /// Build every subject's tensor under `representation` with the
    /// normalized `target` as response.
    pub fn dataset(
        &self,
        representation: &Representation,
        target: Score,
        cohort_min_max: bool,
    ) -> Result<Dataset> {
        let responses = self.normalized(cohort_min_max)?.get(target).to_vec();
        let tensors = self
            .subjects
            .par_iter()
            .map(|s| representation.build(s))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.ids.clone(), tensors, responses)
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn cell(record: &csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("").trim();
    if raw.is_empty() {
        return Err(Error::Schema {
            row,
            column: column.to_string(),
            message: "missing value".into(),
        });
    }
    let v: f64 = raw.parse().map_err(|_| Error::Schema {
        row,
        column: column.to_string(),
        message: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Schema {
            row,
            column: column.to_string(),
            message: format!("`{raw}` is not finite"),
        });
    }
    Ok(v)
}

/// Parse a cohort CSV. Error rows are file line numbers (the header is line 1).
///
/// Columns beyond `subject_id`, the 348 `<MOD>_<ROI>` features and the three
/// scores are ignored.
pub fn read_cohort<R: Read>(reader: R) -> Result<CohortTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_idx = header_index(&headers, ID_COLUMN)?;
    let mut feature_idx = Vec::with_capacity(N_ROIS * 3);
    for roi in 0..N_ROIS {
        for m in Modality::ALL {
            let name = feature_column(m, roi);
            feature_idx.push((header_index(&headers, &name)?, name));
        }
    }
    let score_idx = Score::ALL
        .iter()
        .map(|s| header_index(&headers, s.column()).map(|i| (i, *s)))
        .collect::<Result<Vec<_>>>()?;

    let mut table = CohortTable {
        ids: Vec::new(),
        subjects: Vec::new(),
        scores: Vec::new(),
    };
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let id = record.get(id_idx).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::Schema {
                row,
                column: ID_COLUMN.into(),
                message: "empty subject id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateSubject(id));
        }
        let mut rows = vec![[0.0; 3]; N_ROIS];
        for (k, (idx, name)) in feature_idx.iter().enumerate() {
            rows[k / 3][k % 3] = cell(&record, *idx, row, name)?;
        }
        let mut raw = RawScores {
            dss: 0.0,
            adas13: 0.0,
            mmse: 0.0,
        };
        for &(idx, score) in &score_idx {
            let v = cell(&record, idx, row, score.column())?;
            score.validate(v).map_err(|e| Error::Schema {
                row,
                column: score.column().into(),
                message: e.to_string(),
            })?;
            match score {
                Score::Dss => raw.dss = v,
                Score::Adas13 => raw.adas13 = v,
                Score::Mmse => raw.mmse = v,
            }
        }
        table.ids.push(id);
        table.subjects.push(SubjectFeatures::new(rows)?);
        table.scores.push(raw);
    }
    if table.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(table)
}

pub fn load_cohort(path: impl AsRef<Path>) -> Result<CohortTable> {
    read_cohort(File::open(path)?)
}

/// Write `table` in the cohort schema. Floats use the shortest decimal form
/// that parses back to the same value.
pub fn write_cohort<W: Write>(writer: W, table: &CohortTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![ID_COLUMN.to_string()];
    for m in Modality::ALL {
        for roi in 0..N_ROIS {
            header.push(feature_column(m, roi));
        }
    }
    header.extend(Score::ALL.iter().map(|s| s.column().to_string()));
    wtr.write_record(&header)?;
    for ((id, s), raw) in table.ids.iter().zip(&table.subjects).zip(&table.scores) {
        let mut rec = vec![id.clone()];
        for m in Modality::ALL {
            rec.extend((0..N_ROIS).map(|roi| s.value(roi, m).to_string()));
        }
        rec.extend(Score::ALL.iter().map(|&sc| raw.get(sc).to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> CohortTable {
        let subject = |offset: f64| {
            SubjectFeatures::new(
                (0..N_ROIS)
                    .map(|r| [offset + r as f64, offset - 0.5 * r as f64, offset + 1e-3 * r as f64])
                    .collect(),
            )
            .unwrap()
        };
        CohortTable {
            ids: vec!["S001".into(), "S002".into()],
            subjects: vec![subject(0.1), subject(-2.25)],
            scores: vec![
                RawScores { dss: 1.0, adas13: 7.5, mmse: 29.0 },
                RawScores { dss: 5.0, adas13: 40.0, mmse: 18.0 },
            ],
        }
    }

    fn to_csv(t: &CohortTable) -> String {
        let mut buf = Vec::new();
        write_cohort(&mut buf, t).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let t = fixture();
        let text = to_csv(&t);
        let back = read_cohort(text.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.subjects[1].value(37, Modality::Fdg), -2.25 - 0.5 * 37.0);
        assert_eq!(to_csv(&back), text);
    }

    #[test]
    fn missing_column_is_named() {
        let text = to_csv(&fixture()).replacen("VBM_Hippocampus_L", "VBM_Hippo", 1);
        match read_cohort(text.as_bytes()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "VBM_Hippocampus_L"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = to_csv(&fixture()).replace("S002", "S001");
        match read_cohort(text.as_bytes()) {
            Err(Error::DuplicateSubject(id)) => assert_eq!(id, "S001"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let text = to_csv(&fixture());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut cells: Vec<String> = lines[2].split(',').map(String::from).collect();
        cells[1] = "abc".into();
        lines[2] = cells.join(",");
        match read_cohort(lines.join("\n").as_bytes()) {
            Err(Error::Schema { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "VBM_Precentral_L");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_score_is_schema_error() {
        let mut t = fixture();
        t.scores[0].mmse = 31.0;
        let text = to_csv(&t);
        match read_cohort(text.as_bytes()) {
            Err(Error::Schema { row, column, .. }) => {
                assert_eq!((row, column.as_str()), (2, "MMSE"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn builds_datasets() {
        let t = fixture();
        let ds = t.dataset(&Representation::Concat, Score::Dss, false).unwrap();
        assert_eq!(ds.shape(), &[116, 3]);
        assert_eq!(ds.responses(), &[0.0, 1.0]);
        assert_eq!(ds.tensor(0).get(&[2, 1]), t.subjects[0].value(2, Modality::Fdg));
    }
}
