//! Datasets with per-cell missingness, splitting and masking.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Real-valued `rows × cols` matrix with an observed/missing flag per cell.
/// Values under a missing flag are never read.
#[derive(Debug, Clone)]
pub struct MaskedDataset {
    values: Vec<f64>,
    observed: Vec<bool>,
    num_rows: usize,
    column_names: Vec<String>,
}

/// Equality ignores whatever sits under a missing flag.
impl PartialEq for MaskedDataset {
    fn eq(&self, other: &Self) -> bool {
        self.num_rows == other.num_rows
            && self.column_names == other.column_names
            && self.observed == other.observed
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.observed)
                .all(|((a, b), &o)| !o || a == b)
    }
}

impl MaskedDataset {
    /// Row-major values and mask of matching size.
    pub fn new(values: Vec<f64>, observed: Vec<bool>, column_names: Vec<String>) -> Result<Self> {
        let cols = column_names.len();
        if cols == 0 {
            return Err(Error::InvalidInput(
                "dataset needs at least one column".into(),
            ));
        }
        if values.len() != observed.len() || !values.len().is_multiple_of(cols) {
            return Err(Error::InvalidInput(format!(
                "{} values and {} mask cells do not fit {cols} columns",
                values.len(),
                observed.len()
            )));
        }
        for (i, (&v, &o)) in values.iter().zip(&observed).enumerate() {
            if o && !v.is_finite() {
                return Err(Error::Parse {
                    row: i / cols,
                    col: i % cols,
                    msg: "non-finite value".into(),
                });
            }
        }
        Ok(Self {
            num_rows: values.len() / cols,
            values,
            observed,
            column_names,
        })
    }

    /// Fully observed dataset from rows.
    pub fn complete(rows: &[Vec<f64>], column_names: Vec<String>) -> Result<Self> {
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        if rows.iter().any(|r| r.len() != column_names.len()) {
            return Err(Error::InvalidInput(
                "row length differs from column count".into(),
            ));
        }
        let observed = vec![true; values.len()];
        Self::new(values, observed, column_names)
    }

    /// Dataset from rows of optional cells.
    pub fn from_options(rows: &[Vec<Option<f64>>], column_names: Vec<String>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != column_names.len()) {
            return Err(Error::InvalidInput(
                "row length differs from column count".into(),
            ));
        }
        let values = rows
            .iter()
            .flatten()
            .map(|c| c.unwrap_or(f64::NAN))
            .collect();
        let observed = rows.iter().flatten().map(Option::is_some).collect();
        Self::new(values, observed, column_names)
    }

    pub fn default_names(cols: usize) -> Vec<String> {
        (0..cols).map(|i| format!("x{i}")).collect()
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.num_cols() + col;
        self.observed[i].then(|| self.values[i])
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[row * self.num_cols() + col]
    }

    pub fn row(&self, row: usize) -> Vec<Option<f64>> {
        (0..self.num_cols()).map(|c| self.get(row, c)).collect()
    }

    /// Row with missing cells left as NaN.
    pub fn raw_row(&self, row: usize) -> &[f64] {
        let n = self.num_cols();
        &self.values[row * n..(row + 1) * n]
    }

    pub fn row_mask(&self, row: usize) -> &[bool] {
        let n = self.num_cols();
        &self.observed[row * n..(row + 1) * n]
    }

    pub fn mask(&self) -> &[bool] {
        &self.observed
    }

    /// Observed values of one column, in row order.
    pub fn observed_column(&self, col: usize) -> Vec<f64> {
        (0..self.num_rows)
            .filter_map(|r| self.get(r, col))
            .collect()
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let n = self.num_cols();
        let mut values = Vec::with_capacity(rows.len() * n);
        let mut observed = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            values.extend_from_slice(&self.values[r * n..(r + 1) * n]);
            observed.extend_from_slice(&self.observed[r * n..(r + 1) * n]);
        }
        Self {
            values,
            observed,
            num_rows: rows.len(),
            column_names: self.column_names.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let n = self.num_cols();
        let mut values = Vec::with_capacity(self.num_rows * cols.len());
        let mut observed = Vec::with_capacity(self.num_rows * cols.len());
        for r in 0..self.num_rows {
            for &c in cols {
                values.push(self.values[r * n + c]);
                observed.push(self.observed[r * n + c]);
            }
        }
        let column_names = cols.iter().map(|&c| self.column_names[c].clone()).collect();
        Self {
            values,
            observed,
            num_rows: self.num_rows,
            column_names,
        }
    }

    /// Same values under a different mask. Cells can only be hidden where
    /// the replacement mask says so; previously missing cells stay missing.
    pub fn with_mask(&self, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != self.observed.len() {
            return Err(Error::InvalidInput(
                "mask size does not match dataset".into(),
            ));
        }
        let observed = observed
            .iter()
            .zip(&self.observed)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(Self {
            observed,
            ..self.clone()
        })
    }

    /// Every column needs two or more distinct observed values.
    pub fn validate_columns(&self) -> Result<()> {
        for c in 0..self.num_cols() {
            let col = self.observed_column(c);
            if col.len() < 2 || col.iter().all(|&v| v == col[0]) {
                return Err(Error::DegenerateColumn(self.column_names[c].clone()));
            }
        }
        Ok(())
    }

    /// Z-scores every column using its observed mean and standard deviation.
    pub fn standardize(&self) -> Self {
        let n = self.num_cols();
        let mut out = self.clone();
        for c in 0..n {
            let col = self.observed_column(c);
            let m = col.len() as f64;
            let mean = col.iter().sum::<f64>() / m;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
            let sd = if sd > 0.0 { sd } else { 1.0 };
            for r in 0..self.num_rows {
                let i = r * n + c;
                if out.observed[i] {
                    out.values[i] = (out.values[i] - mean) / sd;
                }
            }
        }
        out
    }
}

/// Reads a comma-separated file with a header row. Empty cells are missing.
pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<MaskedDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file)
}

pub fn read_csv<R: Read>(reader: R) -> Result<MaskedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut values = Vec::new();
    let mut observed = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != names.len() {
            return Err(Error::Parse {
                row: r + 1,
                col: record.len(),
                msg: format!("expected {} cells, found {}", names.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                values.push(f64::NAN);
                observed.push(false);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: r + 1,
                    col: c + 1,
                    msg: format!("'{cell}' is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: r + 1,
                        col: c + 1,
                        msg: "non-finite value".into(),
                    });
                }
                values.push(v);
                observed.push(true);
            }
        }
    }
    let data = MaskedDataset::new(values, observed, names)?;
    data.validate_columns()?;
    Ok(data)
}

/// Writes the dataset as CSV, missing cells left empty.
pub fn write_csv<W: Write>(data: &MaskedDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.column_names())?;
    for r in 0..data.num_rows() {
        let cells: Vec<String> = data
            .row(r)
            .into_iter()
            .map(|c| c.map(|v| format!("{v:?}")).unwrap_or_default())
            .collect();
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the observed mask as 0/1 CSV with the dataset's header.
pub fn write_mask_csv<W: Write>(data: &MaskedDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(data.column_names())?;
    for r in 0..data.num_rows() {
        w.write_record(data.row_mask(r).iter().map(|&o| if o { "1" } else { "0" }))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mask_csv<R: Read>(reader: R) -> Result<Vec<bool>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut mask = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        for (c, cell) in record?.iter().enumerate() {
            mask.push(match cell {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        row: r + 1,
                        col: c + 1,
                        msg: format!("mask cell '{other}'"),
                    })
                }
            });
        }
    }
    Ok(mask)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed from a base seed and a path of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

const SPLIT_TAG: u64 = 0x0053_504c_4954;
const MASK_TAG: u64 = 0x4d41_534b;
const TEST_MASK_TAG: u64 = 0x544d_534b;

/// Which halves of a split get the random missingness mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskScope {
    #[default]
    TrainOnly,
    TrainAndTest,
}

/// Random train/test splits with independently hidden cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentProtocol {
    pub num_splits: usize,
    pub split_fraction: f64,
    pub missing_fraction: f64,
    pub base_seed: u64,
    pub mask_scope: MaskScope,
}

impl Default for ExperimentProtocol {
    fn default() -> Self {
        Self {
            num_splits: 10,
            split_fraction: 0.5,
            missing_fraction: 0.0,
            base_seed: 0,
            mask_scope: MaskScope::TrainOnly,
        }
    }
}

impl ExperimentProtocol {
    pub fn split_seed(&self, split_index: usize) -> u64 {
        derive_seed(self.base_seed, &[SPLIT_TAG, split_index as u64])
    }

    /// Mask seed for a split at a given missing fraction; shared by every
    /// model kind and structure setting so they see the same cells.
    pub fn mask_seed(&self, split_index: usize, missing_fraction: f64) -> u64 {
        derive_seed(
            self.base_seed,
            &[MASK_TAG, split_index as u64, fraction_key(missing_fraction)],
        )
    }

    pub fn test_mask_seed(&self, split_index: usize, missing_fraction: f64) -> u64 {
        derive_seed(
            self.base_seed,
            &[
                TEST_MASK_TAG,
                split_index as u64,
                fraction_key(missing_fraction),
            ],
        )
    }
}

fn fraction_key(p: f64) -> u64 {
    (p * 1e9).round() as u64
}

/// Row indices `(train, test)` for one split, each sorted ascending.
pub fn split_indices(
    num_rows: usize,
    protocol: &ExperimentProtocol,
    split_index: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(protocol.split_seed(split_index));
    let mut order: Vec<usize> = (0..num_rows).collect();
    order.shuffle(&mut rng);
    let train_len = (num_rows as f64 * protocol.split_fraction).ceil() as usize;
    let mut train = order[..train_len.min(num_rows)].to_vec();
    let mut test = order[train_len.min(num_rows)..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub fn make_split(
    data: &MaskedDataset,
    protocol: &ExperimentProtocol,
    split_index: usize,
) -> Result<(MaskedDataset, MaskedDataset)> {
    if split_index >= protocol.num_splits {
        return Err(Error::InvalidInput(format!(
            "split {split_index} out of range for {} splits",
            protocol.num_splits
        )));
    }
    let (train, test) = split_indices(data.num_rows(), protocol, split_index);
    Ok((data.select_rows(&train), data.select_rows(&test)))
}

/// Hides each observed cell independently with probability `p`, keeping at
/// least two observed values in every column so marginals stay estimable.
pub fn apply_missing_mask(data: &MaskedDataset, p: f64, seed: u64) -> Result<MaskedDataset> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "missing fraction {p} outside [0, 1)"
        )));
    }
    if p == 0.0 {
        return Ok(data.clone());
    }
    let n = data.num_cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining: Vec<usize> = (0..n).map(|c| data.observed_column(c).len()).collect();
    let mut mask = data.mask().to_vec();
    for (i, cell) in mask.iter_mut().enumerate() {
        // one draw per cell regardless of state keeps the stream aligned
        let hide = rng.gen::<f64>() < p;
        let c = i % n;
        if hide && *cell && remaining[c] > 2 {
            *cell = false;
            remaining[c] -= 1;
        }
    }
    data.with_mask(mask)
}

/// Attribute names of the raw UCI Communities and Crime file, in file order.
pub const CRIME_RAW_COLUMNS: [&str; 128] = [
    "state",
    "county",
    "community",
    "communityname",
    "fold",
    "population",
    "householdsize",
    "racepctblack",
    "racePctWhite",
    "racePctAsian",
    "racePctHisp",
    "agePct12t21",
    "agePct12t29",
    "agePct16t24",
    "agePct65up",
    "numbUrban",
    "pctUrban",
    "medIncome",
    "pctWWage",
    "pctWFarmSelf",
    "pctWInvInc",
    "pctWSocSec",
    "pctWPubAsst",
    "pctWRetire",
    "medFamInc",
    "perCapInc",
    "whitePerCap",
    "blackPerCap",
    "indianPerCap",
    "AsianPerCap",
    "OtherPerCap",
    "HispPerCap",
    "NumUnderPov",
    "PctPopUnderPov",
    "PctLess9thGrade",
    "PctNotHSGrad",
    "PctBSorMore",
    "PctUnemployed",
    "PctEmploy",
    "PctEmplManu",
    "PctEmplProfServ",
    "PctOccupManu",
    "PctOccupMgmtProf",
    "MalePctDivorce",
    "MalePctNevMarr",
    "FemalePctDiv",
    "TotalPctDiv",
    "PersPerFam",
    "PctFam2Par",
    "PctKids2Par",
    "PctYoungKids2Par",
    "PctTeen2Par",
    "PctWorkMomYoungKids",
    "PctWorkMom",
    "NumIlleg",
    "PctIlleg",
    "NumImmig",
    "PctImmigRecent",
    "PctImmigRec5",
    "PctImmigRec8",
    "PctImmigRec10",
    "PctRecentImmig",
    "PctRecImmig5",
    "PctRecImmig8",
    "PctRecImmig10",
    "PctSpeakEnglOnly",
    "PctNotSpeakEnglWell",
    "PctLargHouseFam",
    "PctLargHouseOccup",
    "PersPerOccupHous",
    "PersPerOwnOccHous",
    "PersPerRentOccHous",
    "PctPersOwnOccup",
    "PctPersDenseHous",
    "PctHousLess3BR",
    "MedNumBR",
    "HousVacant",
    "PctHousOccup",
    "PctHousOwnOcc",
    "PctVacantBoarded",
    "PctVacMore6Mos",
    "MedYrHousBuilt",
    "PctHousNoPhone",
    "PctWOFullPlumb",
    "OwnOccLowQuart",
    "OwnOccMedVal",
    "OwnOccHiQuart",
    "RentLowQ",
    "RentMedian",
    "RentHighQ",
    "MedRent",
    "MedRentPctHousInc",
    "MedOwnCostPctInc",
    "MedOwnCostPctIncNoMtg",
    "NumInShelters",
    "NumStreet",
    "PctForeignBorn",
    "PctBornSameState",
    "PctSameHouse85",
    "PctSameCity85",
    "PctSameState85",
    "LemasSwornFT",
    "LemasSwFTPerPop",
    "LemasSwFTFieldOps",
    "LemasSwFTFieldPerPop",
    "LemasTotalReq",
    "LemasTotReqPerPop",
    "PolicReqPerOffic",
    "PolicPerPop",
    "RacialMatchCommPol",
    "PctPolicWhite",
    "PctPolicBlack",
    "PctPolicHisp",
    "PctPolicAsian",
    "PctPolicMinor",
    "OfficAssgnDrugUnits",
    "NumKindsDrugsSeiz",
    "PolicAveOTWorked",
    "LandArea",
    "PopDens",
    "PctUsePubTrans",
    "PolicCars",
    "PolicOperBudg",
    "LemasPctPolicOnPatr",
    "LemasGangUnitDeploy",
    "LemasPctOfficDrugUn",
    "PolicBudgPerPop",
    "ViolentCrimesPerPop",
];

/// Number of leading identifier columns in the raw Crime file.
const CRIME_ID_COLUMNS: usize = 5;

/// Turns the raw Communities and Crime file (no header, `?` for missing)
/// into a numeric dataset: identifiers and the goal attribute are dropped,
/// as is every column with more than half of its cells missing. Remaining
/// `?` cells become missing entries.
pub fn preprocess_crime<R: Read>(reader: R) -> Result<MaskedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut raw: Vec<Vec<Option<f64>>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if r == 0
            && record
                .get(0)
                .is_some_and(|f| f.trim().parse::<f64>().is_err() && f.trim() != "?")
        {
            continue; // header line
        }
        if record.len() != CRIME_RAW_COLUMNS.len() {
            return Err(Error::Parse {
                row: r + 1,
                col: record.len(),
                msg: format!("expected {} fields", CRIME_RAW_COLUMNS.len()),
            });
        }
        let mut row = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if c < CRIME_ID_COLUMNS || cell == "?" || cell.is_empty() {
                row.push(None);
            } else {
                row.push(Some(cell.parse().map_err(|_| Error::Parse {
                    row: r + 1,
                    col: c + 1,
                    msg: format!("'{cell}' is not a number"),
                })?));
            }
        }
        raw.push(row);
    }
    let m = raw.len();
    let goal = CRIME_RAW_COLUMNS.len() - 1;
    let keep: Vec<usize> = (CRIME_ID_COLUMNS..goal)
        .filter(|&c| {
            let missing = raw.iter().filter(|row| row[c].is_none()).count();
            2 * missing <= m
        })
        .collect();
    let rows: Vec<Vec<Option<f64>>> = raw
        .iter()
        .map(|row| keep.iter().map(|&c| row[c]).collect())
        .collect();
    let names = keep
        .iter()
        .map(|&c| CRIME_RAW_COLUMNS[c].to_owned())
        .collect();
    let data = MaskedDataset::from_options(&rows, names)?;
    data.validate_columns()?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::chi_square_uniform_p_value;

    fn grid(rows: usize, cols: usize) -> MaskedDataset {
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|r| (0..cols).map(|c| (r * cols + c) as f64).collect())
            .collect();
        MaskedDataset::complete(&data, MaskedDataset::default_names(cols)).unwrap()
    }

    #[test]
    fn csv_empty_cell_is_missing() {
        let text = "a,b\n1,2\n3,\n5,7\n";
        let d = read_csv(text.as_bytes()).unwrap();
        assert_eq!((d.num_rows(), d.num_cols()), (3, 2));
        assert_eq!(d.missing_count(), 1);
        assert!(!d.is_observed(1, 1));
        assert_eq!(d.get(2, 1), Some(7.0));
    }

    #[test]
    fn csv_errors() {
        match read_csv("a,b\n1,x\n2,3\n".as_bytes()) {
            Err(Error::Parse { row: 1, col: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match read_csv("a,b\n1,2\n1,3\n".as_bytes()) {
            Err(Error::DegenerateColumn(name)) => assert_eq!(name, "a"),
            other => panic!("{other:?}"),
        }
        assert!(read_csv("a,b\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_mask() {
        let d = apply_missing_mask(&grid(20, 3), 0.3, 1).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        let mut mbuf = Vec::new();
        write_mask_csv(&d, &mut mbuf).unwrap();
        assert_eq!(read_mask_csv(mbuf.as_slice()).unwrap(), d.mask());
    }

    #[test]
    fn split_sizes_and_coverage() {
        let protocol = ExperimentProtocol {
            base_seed: 3,
            ..Default::default()
        };
        let (a, b) = split_indices(10, &protocol, 0);
        assert_eq!((a.len(), b.len()), (5, 5));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let (a, b) = split_indices(11, &protocol, 0);
        assert_eq!((a.len(), b.len()), (6, 5));
        assert_eq!(
            split_indices(10, &protocol, 0),
            split_indices(10, &protocol, 0)
        );
        let d = grid(10, 2);
        assert!(make_split(&d, &protocol, 10).is_err());
    }

    #[test]
    fn splits_differ_across_indices() {
        let protocol = ExperimentProtocol {
            base_seed: 1,
            ..Default::default()
        };
        let parts: Vec<_> = (0..10)
            .map(|s| split_indices(1599, &protocol, s).0)
            .collect();
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(parts[i], parts[j]);
            }
        }
    }

    #[test]
    fn mask_zero_is_identity_and_deterministic() {
        let d = grid(50, 4);
        assert_eq!(apply_missing_mask(&d, 0.0, 9).unwrap(), d);
        assert_eq!(
            apply_missing_mask(&d, 0.4, 9).unwrap(),
            apply_missing_mask(&d, 0.4, 9).unwrap()
        );
        assert_ne!(
            apply_missing_mask(&d, 0.4, 9).unwrap(),
            apply_missing_mask(&d, 0.4, 10).unwrap()
        );
        assert!(apply_missing_mask(&d, 1.0, 9).is_err());
    }

    #[test]
    fn mask_fraction_within_binomial_bounds() {
        let d = grid(800, 12);
        let masked = apply_missing_mask(&d, 0.25, 2024).unwrap();
        let frac = masked.missing_count() as f64 / (800.0 * 12.0);
        assert!((0.236..=0.264).contains(&frac), "{frac}");
        let per_col: Vec<usize> = (0..12)
            .map(|c| 800 - masked.observed_column(c).len())
            .collect();
        assert!(chi_square_uniform_p_value(&per_col) > 0.01);
    }

    #[test]
    fn mask_keeps_two_values_per_column() {
        let d = grid(5, 2);
        let masked = apply_missing_mask(&d, 0.99, 4).unwrap();
        for c in 0..2 {
            assert_eq!(masked.observed_column(c).len(), 2);
        }
    }

    #[test]
    fn standardize_observed_values() {
        let d = apply_missing_mask(&grid(30, 2), 0.2, 5)
            .unwrap()
            .standardize();
        for c in 0..2 {
            let col = d.observed_column(c);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn crime_preprocessing_recipe() {
        // three rows; column 6 ("householdsize") is mostly missing
        let mut lines = Vec::new();
        for r in 0..3 {
            let mut cells: Vec<String> = vec![
                "1".into(),
                "?".into(),
                "?".into(),
                "Town".into(),
                "1".into(),
            ];
            for c in CRIME_ID_COLUMNS..CRIME_RAW_COLUMNS.len() {
                let cell = if c == 6 && r > 0 {
                    "?".to_string()
                } else {
                    format!("{}", (r * 7 + c) % 10)
                };
                cells.push(cell);
            }
            lines.push(cells.join(","));
        }
        let d = preprocess_crime(lines.join("\n").as_bytes()).unwrap();
        assert_eq!(d.num_rows(), 3);
        assert_eq!(d.num_cols(), CRIME_RAW_COLUMNS.len() - CRIME_ID_COLUMNS - 2);
        assert_eq!(d.column_names()[0], "population");
        assert!(!d
            .column_names()
            .iter()
            .any(|n| n == "householdsize" || n == "ViolentCrimesPerPop"));
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let p = ExperimentProtocol::default();
        assert_ne!(p.split_seed(0), p.split_seed(1));
        assert_ne!(p.mask_seed(0, 0.1), p.mask_seed(0, 0.25));
        assert_eq!(p.mask_seed(2, 0.1), p.mask_seed(2, 0.1));
    }
}
