//! Sparse observed-matrix representation, rating-file ingestion, train/test
//! splitting and the observed-entry projection.
//!
//! External user and item ids are remapped to dense 0-based row and column
//! indices at ingestion. The mapping is kept in an [`IdMap`] shared by every
//! matrix derived from the parsed one, so results can be written back with
//! the original ids.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LrmaError, Result};

/// Bounds of the rating scale plus the value predicted for unseen rows or
/// columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
    pub default: f64,
}

impl RatingScale {
    /// 1-5 stars, default prediction 3.0.
    pub const MOVIELENS: RatingScale = RatingScale {
        min: 1.0,
        max: 5.0,
        default: 3.0,
    };

    pub fn new(min: f64, max: f64, default: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && default.is_finite()) {
            return Err(LrmaError::invalid("rating scale bounds must be finite"));
        }
        if !(min <= default && default <= max) {
            return Err(LrmaError::invalid(format!(
                "rating scale requires min <= default <= max, got ({min}, {max}, {default})"
            )));
        }
        Ok(RatingScale { min, max, default })
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale::MOVIELENS
    }
}

/// One observed cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Rating {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        Rating { row, col, value }
    }
}

/// Dense index to external id mapping, retained from ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
}

/// A partially observed matrix: the observed set together with per-row and
/// per-column lookup structures.
///
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct ObservedMatrix {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<Rating>,
    row_index: Vec<Vec<(usize, f64)>>,
    col_index: Vec<Vec<(usize, f64)>>,
    scale: RatingScale,
    ids: Option<Arc<IdMap>>,
}

impl ObservedMatrix {
    /// Builds a matrix from triples, validating bounds, scale and uniqueness.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        entries: Vec<Rating>,
        scale: RatingScale,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.row >= n_rows || e.col >= n_cols {
                return Err(LrmaError::Index {
                    row: e.row,
                    col: e.col,
                    n_rows,
                    n_cols,
                });
            }
            if !e.value.is_finite() || !scale.contains(e.value) {
                return Err(LrmaError::Range {
                    line: i + 1,
                    value: e.value,
                    min: scale.min,
                    max: scale.max,
                });
            }
            if !seen.insert((e.row, e.col)) {
                return Err(LrmaError::Duplicate {
                    line: i + 1,
                    row: e.row.to_string(),
                    col: e.col.to_string(),
                });
            }
        }
        Ok(Self::from_validated(n_rows, n_cols, entries, scale, None))
    }

    fn from_validated(
        n_rows: usize,
        n_cols: usize,
        entries: Vec<Rating>,
        scale: RatingScale,
        ids: Option<Arc<IdMap>>,
    ) -> Self {
        let mut row_index = vec![Vec::new(); n_rows];
        let mut col_index = vec![Vec::new(); n_cols];
        for e in &entries {
            row_index[e.row].push((e.col, e.value));
            col_index[e.col].push((e.row, e.value));
        }
        ObservedMatrix {
            n_rows,
            n_cols,
            entries,
            row_index,
            col_index,
            scale,
            ids,
        }
    }

    /// Same dimensions, scale and id map, different entries.
    fn with_entries(&self, entries: Vec<Rating>) -> Self {
        Self::from_validated(
            self.n_rows,
            self.n_cols,
            entries,
            self.scale,
            self.ids.clone(),
        )
    }

    /// Observes every cell of `dense`. Mostly useful for tests and synthetic data.
    pub fn from_dense(dense: &DMatrix<f64>, scale: RatingScale) -> Result<Self> {
        Self::from_dense_masked(dense, |_, _| true, scale)
    }

    /// Observes the cells of `dense` for which `keep(row, col)` holds.
    pub fn from_dense_masked(
        dense: &DMatrix<f64>,
        mut keep: impl FnMut(usize, usize) -> bool,
        scale: RatingScale,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        for i in 0..dense.nrows() {
            for j in 0..dense.ncols() {
                if keep(i, j) {
                    entries.push(Rating::new(i, j, dense[(i, j)]));
                }
            }
        }
        Self::new(dense.nrows(), dense.ncols(), entries, scale)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of observed entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    pub fn row(&self, row: usize) -> &[(usize, f64)] {
        &self.row_index[row]
    }

    pub fn col(&self, col: usize) -> &[(usize, f64)] {
        &self.col_index[col]
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn ids(&self) -> Option<&IdMap> {
        self.ids.as_deref()
    }

    /// True if the row has at least one observation.
    pub fn row_seen(&self, row: usize) -> bool {
        row < self.n_rows && !self.row_index[row].is_empty()
    }

    pub fn col_seen(&self, col: usize) -> bool {
        col < self.n_cols && !self.col_index[col].is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.row_index
            .get(row)?
            .iter()
            .find(|(c, _)| *c == col)
            .map(|&(_, v)| v)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_some()
    }

    pub fn mean_value(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        Some(self.entries.iter().map(|e| e.value).sum::<f64>() / self.entries.len() as f64)
    }

    /// Dense matrix holding observed values and zeros elsewhere.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows, self.n_cols);
        for e in &self.entries {
            out[(e.row, e.col)] = e.value;
        }
        out
    }
}

/// Input layouts accepted by [`parse_ratings`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingFormat {
    /// `user::item::rating::timestamp`
    MovielensDat,
    /// `user\titem\trating\ttimestamp`
    Tsv,
    /// Comma separated, optional header line.
    Csv,
}

impl RatingFormat {
    fn separator(self) -> &'static str {
        match self {
            RatingFormat::MovielensDat => "::",
            RatingFormat::Tsv => "\t",
            RatingFormat::Csv => ",",
        }
    }
}

impl FromStr for RatingFormat {
    type Err = LrmaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens-dat" | "dat" => Ok(RatingFormat::MovielensDat),
            "tsv" => Ok(RatingFormat::Tsv),
            "csv" => Ok(RatingFormat::Csv),
            other => Err(LrmaError::invalid(format!("unknown format tag '{other}'"))),
        }
    }
}

#[derive(Default)]
struct Interner {
    index: HashMap<String, usize>,
    ids: Vec<String>,
}

impl Interner {
    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.index.insert(id.to_owned(), i);
        self.ids.push(id.to_owned());
        i
    }
}

/// Parses user-item-rating records. Timestamps are accepted and discarded.
pub fn parse_ratings<R: BufRead>(
    reader: R,
    format: RatingFormat,
    scale: RatingScale,
) -> Result<ObservedMatrix> {
    let sep = format.separator();
    let mut users = Interner::default();
    let mut items = Interner::default();
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    let mut first_record = true;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).map(str::trim).collect();

        if first_record {
            first_record = false;
            if format == RatingFormat::Csv && fields[0].parse::<f64>().is_err() {
                continue;
            }
        }

        if fields.len() != 3 && fields.len() != 4 {
            return Err(LrmaError::Parse {
                line: lineno,
                message: format!("expected 3 or 4 fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(LrmaError::Parse {
                line: lineno,
                message: "empty user or item id".into(),
            });
        }
        let value: f64 = fields[2].parse().map_err(|_| LrmaError::Parse {
            line: lineno,
            message: format!("non-numeric rating '{}'", fields[2]),
        })?;
        if !value.is_finite() {
            return Err(LrmaError::Parse {
                line: lineno,
                message: format!("non-finite rating '{}'", fields[2]),
            });
        }
        if !scale.contains(value) {
            return Err(LrmaError::Range {
                line: lineno,
                value,
                min: scale.min,
                max: scale.max,
            });
        }

        let row = users.intern(fields[0]);
        let col = items.intern(fields[1]);
        if !seen.insert((row, col)) {
            return Err(LrmaError::Duplicate {
                line: lineno,
                row: fields[0].to_owned(),
                col: fields[1].to_owned(),
            });
        }
        entries.push(Rating::new(row, col, value));
    }

    let ids = IdMap {
        row_ids: users.ids,
        col_ids: items.ids,
    };
    Ok(ObservedMatrix::from_validated(
        ids.row_ids.len(),
        ids.col_ids.len(),
        entries,
        scale,
        Some(Arc::new(ids)),
    ))
}

/// Writes entries back out with their external ids (dense indices when the
/// matrix carries no id map). Timestamps are not reproduced.
pub fn write_ratings<W: Write>(
    mut writer: W,
    matrix: &ObservedMatrix,
    format: RatingFormat,
) -> Result<()> {
    let sep = format.separator();
    for e in matrix.entries() {
        match matrix.ids() {
            Some(ids) => writeln!(
                writer,
                "{}{sep}{}{sep}{}",
                ids.row_ids[e.row], ids.col_ids[e.col], e.value
            )?,
            None => writeln!(writer, "{}{sep}{}{sep}{}", e.row, e.col, e.value)?,
        }
    }
    Ok(())
}

/// Random per-entry split. Returns `(train, test)` with
/// `|test| = round(m * test_fraction)`; both halves keep the original entry
/// order, dimensions, scale and id map.
pub fn split_train_test(
    matrix: &ObservedMatrix,
    test_fraction: f64,
    seed: u64,
) -> Result<(ObservedMatrix, ObservedMatrix)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(LrmaError::invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let m = matrix.len();
    if m == 0 {
        return Err(LrmaError::EmptyInput(
            "cannot split a matrix with no entries",
        ));
    }
    let n_test = (m as f64 * test_fraction).round() as usize;

    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut is_test = vec![false; m];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (k, e) in matrix.entries().iter().enumerate() {
        if is_test[k] {
            test.push(*e);
        } else {
            train.push(*e);
        }
    }
    Ok((matrix.with_entries(train), matrix.with_entries(test)))
}

/// Keeps `x` on the observed cells and zeroes everything else.
pub fn project_observed(x: &DMatrix<f64>, observed: &ObservedMatrix) -> Result<DMatrix<f64>> {
    if x.shape() != (observed.n_rows(), observed.n_cols()) {
        return Err(LrmaError::shape(
            format!("{}x{}", observed.n_rows(), observed.n_cols()),
            format!("{}x{}", x.nrows(), x.ncols()),
        ));
    }
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for e in observed.entries() {
        out[(e.row, e.col)] = x[(e.row, e.col)];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn parse(s: &str, fmt: RatingFormat) -> Result<ObservedMatrix> {
        parse_ratings(s.as_bytes(), fmt, RatingScale::MOVIELENS)
    }

    #[test]
    fn parses_movielens_dat() {
        let m = parse(
            "1::10::5.0::978300760\n2::10::3.0::978302109",
            RatingFormat::MovielensDat,
        )
        .unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (2, 1));
        assert_eq!(
            m.entries(),
            &[Rating::new(0, 0, 5.0), Rating::new(1, 0, 3.0)]
        );
        let ids = m.ids().unwrap();
        assert_eq!(ids.row_ids, vec!["1", "2"]);
        assert_eq!(ids.col_ids, vec!["10"]);
    }

    #[test]
    fn empty_stream_gives_empty_matrix() {
        let m = parse("", RatingFormat::Tsv).unwrap();
        assert_eq!((m.n_rows(), m.n_cols(), m.len()), (0, 0, 0));
    }

    #[test]
    fn duplicate_record_is_rejected() {
        let err = parse("1\t10\t5\t0\n1\t10\t5\t0\n", RatingFormat::Tsv).unwrap_err();
        assert!(matches!(err, LrmaError::Duplicate { line: 2, .. }), "{err}");
    }

    #[test]
    fn csv_header_and_crlf() {
        let m = parse(
            "userId,movieId,rating,timestamp\r\n1,31,2.5,1260759144\r\n1,1029,3.0,1260759179\r\n",
            RatingFormat::Csv,
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries()[0].value, 2.5);
    }

    #[test]
    fn timestamp_is_optional() {
        let m = parse("7,8,4", RatingFormat::Csv).unwrap();
        assert_eq!(m.entries(), &[Rating::new(0, 0, 4.0)]);
    }

    #[test]
    fn malformed_records_report_line() {
        let err = parse("1::2::3\n1::3\n", RatingFormat::MovielensDat).unwrap_err();
        assert!(matches!(err, LrmaError::Parse { line: 2, .. }), "{err}");
        let err = parse("1\t2\tfive\n", RatingFormat::Tsv).unwrap_err();
        assert!(matches!(err, LrmaError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_scale_rating_is_range_error() {
        let err = parse("1,2,3\n1,3,6.5\n", RatingFormat::Csv).unwrap_err();
        assert!(matches!(err, LrmaError::Range { line: 2, .. }), "{err}");
    }

    #[test]
    fn write_back_reproduces_records() {
        let src = "u1::i1::4\nu2::i1::3.5\nu1::i9::1\n";
        let m = parse(src, RatingFormat::MovielensDat).unwrap();
        let mut out = Vec::new();
        write_ratings(&mut out, &m, RatingFormat::MovielensDat).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), src);
    }

    #[test]
    fn split_sizes() {
        let entries = (0..100).map(|k| Rating::new(k / 10, k % 10, 3.0)).collect();
        let m = ObservedMatrix::new(10, 10, entries, RatingScale::MOVIELENS).unwrap();
        let (train, test) = split_train_test(&m, 0.1, 7).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        assert_eq!((test.n_rows(), test.n_cols()), (10, 10));

        let two = ObservedMatrix::new(
            1,
            2,
            vec![Rating::new(0, 0, 1.0), Rating::new(0, 1, 2.0)],
            RatingScale::MOVIELENS,
        )
        .unwrap();
        let (a, b) = split_train_test(&two, 0.5, 1).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
    }

    #[test]
    fn split_is_seed_deterministic() {
        let entries = (0..50).map(|k| Rating::new(k / 5, k % 5, 2.0)).collect();
        let m = ObservedMatrix::new(10, 5, entries, RatingScale::MOVIELENS).unwrap();
        let (a1, b1) = split_train_test(&m, 0.3, 99).unwrap();
        let (a2, b2) = split_train_test(&m, 0.3, 99).unwrap();
        assert_eq!(a1.entries(), a2.entries());
        assert_eq!(b1.entries(), b2.entries());
    }

    #[test]
    fn split_rejects_bad_input() {
        let empty = ObservedMatrix::new(2, 2, vec![], RatingScale::MOVIELENS).unwrap();
        assert!(matches!(
            split_train_test(&empty, 0.1, 0),
            Err(LrmaError::EmptyInput(_))
        ));
        let one = ObservedMatrix::new(1, 1, vec![Rating::new(0, 0, 1.0)], RatingScale::MOVIELENS)
            .unwrap();
        assert!(split_train_test(&one, 0.0, 0).is_err());
        assert!(split_train_test(&one, 1.0, 0).is_err());
    }

    #[test]
    fn projection_examples() {
        let x = dmatrix![1.0, 2.0; 3.0, 4.0];
        let scale = RatingScale::new(0.0, 10.0, 1.0).unwrap();
        let diag = ObservedMatrix::new(
            2,
            2,
            vec![Rating::new(0, 0, 1.0), Rating::new(1, 1, 1.0)],
            scale,
        )
        .unwrap();
        assert_eq!(
            project_observed(&x, &diag).unwrap(),
            dmatrix![1.0, 0.0; 0.0, 4.0]
        );

        let all = ObservedMatrix::from_dense(&DMatrix::from_element(2, 2, 1.0), scale).unwrap();
        assert_eq!(project_observed(&x, &all).unwrap(), x);

        let none = ObservedMatrix::new(2, 2, vec![], scale).unwrap();
        assert_eq!(project_observed(&x, &none).unwrap(), DMatrix::zeros(2, 2));

        let wrong = ObservedMatrix::new(3, 2, vec![], scale).unwrap();
        assert!(matches!(
            project_observed(&x, &wrong),
            Err(LrmaError::Shape { .. })
        ));
    }

    #[test]
    fn constructor_validates() {
        let s = RatingScale::MOVIELENS;
        assert!(ObservedMatrix::new(1, 1, vec![Rating::new(1, 0, 3.0)], s).is_err());
        assert!(ObservedMatrix::new(1, 1, vec![Rating::new(0, 0, 9.0)], s).is_err());
        assert!(ObservedMatrix::new(
            1,
            1,
            vec![Rating::new(0, 0, 3.0), Rating::new(0, 0, 2.0)],
            s
        )
        .is_err());
        assert!(RatingScale::new(1.0, 5.0, 6.0).is_err());
    }

    fn entries_strategy() -> impl Strategy<Value = ObservedMatrix> {
        (1usize..8, 1usize..8).prop_flat_map(|(n, m)| {
            prop::collection::btree_map((0..n, 0..m), 2u8..=10, 1..=n * m).prop_map(move |cells| {
                let entries = cells
                    .into_iter()
                    .map(|((i, j), v)| Rating::new(i, j, f64::from(v) * 0.5))
                    .collect();
                ObservedMatrix::new(n, m, entries, RatingScale::MOVIELENS).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn split_is_a_partition(obs in entries_strategy(), frac in 0.01f64..0.99, seed: u64) {
            let (train, test) = split_train_test(&obs, frac, seed).unwrap();
            let mut both: Vec<_> = train.entries().iter().chain(test.entries()).copied().collect();
            let mut orig = obs.entries().to_vec();
            let key = |r: &Rating| (r.row, r.col);
            both.sort_by_key(key);
            orig.sort_by_key(key);
            prop_assert_eq!(both, orig);
            prop_assert!(train.entries().iter().all(|e| !test.contains(e.row, e.col)));
        }

        #[test]
        fn projection_is_idempotent(obs in entries_strategy(), fill in -5.0f64..5.0) {
            let x = DMatrix::from_fn(obs.n_rows(), obs.n_cols(), |i, j| fill + (i * 7 + j) as f64);
            let once = project_observed(&x, &obs).unwrap();
            prop_assert_eq!(project_observed(&once, &obs).unwrap(), once);
        }

        #[test]
        fn parse_write_round_trip(
            cells in prop::collection::btree_map((0u32..50, 0u32..50), 1u8..=9, 1..40),
        ) {
            let mut src = String::new();
            for ((u, i), r) in &cells {
                src.push_str(&format!("{u}\t{i}\t{}\t0\n", f64::from(*r) * 0.5 + 0.5));
            }
            let m = parse(&src, RatingFormat::Tsv).unwrap();
            let mut out = Vec::new();
            write_ratings(&mut out, &m, RatingFormat::Tsv).unwrap();
            let back = parse(std::str::from_utf8(&out).unwrap(), RatingFormat::Tsv).unwrap();
            prop_assert_eq!(back.entries(), m.entries());
            prop_assert_eq!(back.ids(), m.ids());
        }
    }
}
