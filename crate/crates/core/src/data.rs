//! Matched-pair datasets, the concordant/discordant split, and the
//! within-pair differences that feed the conditional likelihood.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row indices of the two members of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub treated: usize,
    pub control: usize,
}

/// `2n` observations grouped into `n` treated/control pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pair_ids: Vec<String>,
    treatment: Vec<u8>,
    response: Vec<u8>,
    covariates: DMatrix<f64>,
    pairs: Vec<Pair>,
    labels: Vec<String>,
}

impl PairedDataset {
    /// Validates and indexes a dataset. Pairs are ordered by the first
    /// appearance of their id.
    pub fn new(pair_ids: Vec<String>, treatment: Vec<u8>, response: Vec<u8>, covariates: DMatrix<f64>) -> Result<Self> {
        let rows = pair_ids.len();
        for len in [treatment.len(), response.len(), covariates.nrows()] {
            if len != rows {
                return Err(Error::DimensionMismatch { expected: rows, got: len });
            }
        }
        if rows % 2 == 1 {
            return Err(Error::OddRowCount(rows));
        }
        for (row, (&w, &y)) in treatment.iter().zip(&response).enumerate() {
            if w > 1 || y > 1 {
                return Err(Error::InvalidInput(format!("row {row}: treatment and response must be 0 or 1")));
            }
        }
        for row in 0..rows {
            if let Some(col) = (0..covariates.ncols()).find(|&c| !covariates[(row, c)].is_finite()) {
                return Err(Error::InvalidInput(format!("row {row}: covariate {col} is not finite")));
            }
        }

        let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        for (row, id) in pair_ids.iter().enumerate() {
            let entry = members.entry(id.as_str()).or_default();
            if entry.is_empty() {
                order.push(id.as_str());
            }
            entry.push(row);
        }
        let mut pairs = Vec::with_capacity(order.len());
        for id in &order {
            let rows_of = &members[id];
            if rows_of.len() != 2 {
                return Err(Error::MalformedPairing(format!(
                    "pair '{id}' has {} rows (rows {rows_of:?})",
                    rows_of.len()
                )));
            }
            let (a, b) = (rows_of[0], rows_of[1]);
            let pair = match (treatment[a], treatment[b]) {
                (1, 0) => Pair { treated: a, control: b },
                (0, 1) => Pair { treated: b, control: a },
                _ => {
                    return Err(Error::MalformedPairing(format!(
                        "pair '{id}' (rows {a}, {b}) must have one treated and one control member"
                    )))
                }
            };
            pairs.push(pair);
        }
        let labels = order.into_iter().map(str::to_owned).collect();

        Ok(Self { pair_ids, treatment, response, covariates, pairs, labels })
    }

    /// Builds a dataset where rows `2k` and `2k + 1` form pair `k`.
    pub fn from_consecutive_rows(treatment: Vec<u8>, response: Vec<u8>, covariates: DMatrix<f64>) -> Result<Self> {
        let ids = (0..treatment.len()).map(|r| (r / 2 + 1).to_string()).collect();
        Self::new(ids, treatment, response, covariates)
    }

    pub fn n_rows(&self) -> usize {
        self.treatment.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    /// The id of pair `k`.
    pub fn pair_label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn pair_ids(&self) -> &[String] {
        &self.pair_ids
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn response(&self) -> &[u8] {
        &self.response
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }
}

/// Pair indices (into [`PairedDataset::pairs`]) split by concordance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPartition {
    pub concordant: Vec<usize>,
    pub discordant: Vec<usize>,
}

impl PairPartition {
    pub fn n_concordant(&self) -> usize {
        self.concordant.len()
    }

    pub fn n_discordant(&self) -> usize {
        self.discordant.len()
    }
}

/// A pair is discordant iff its two responses sum to one.
pub fn partition_pairs(data: &PairedDataset) -> PairPartition {
    let mut concordant = Vec::new();
    let mut discordant = Vec::new();
    for (k, pair) in data.pairs().iter().enumerate() {
        if data.response[pair.treated] + data.response[pair.control] == 1 {
            discordant.push(k);
        } else {
            concordant.push(k);
        }
    }
    PairPartition { concordant, discordant }
}

/// Treated-minus-control covariate differences of the discordant pairs,
/// with `case_is_treated[i] = 1` when the treated member had the positive
/// response.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscordantDiffs {
    delta_x: DMatrix<f64>,
    case_is_treated: Vec<u8>,
}

impl DiscordantDiffs {
    pub fn new(delta_x: DMatrix<f64>, case_is_treated: Vec<u8>) -> Result<Self> {
        if delta_x.nrows() != case_is_treated.len() {
            return Err(Error::DimensionMismatch { expected: delta_x.nrows(), got: case_is_treated.len() });
        }
        if case_is_treated.iter().any(|&z| z > 1) {
            return Err(Error::InvalidInput("case indicators must be 0 or 1".into()));
        }
        if !delta_x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("covariate differences must be finite".into()));
        }
        Ok(Self { delta_x, case_is_treated })
    }

    /// No discordant pairs: the conditional likelihood is identically one.
    pub fn empty(n_covariates: usize) -> Self {
        Self { delta_x: DMatrix::zeros(0, n_covariates), case_is_treated: Vec::new() }
    }

    pub fn n_pairs(&self) -> usize {
        self.case_is_treated.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.delta_x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.case_is_treated.is_empty()
    }

    pub fn delta_x(&self) -> &DMatrix<f64> {
        &self.delta_x
    }

    pub fn case_is_treated(&self) -> &[u8] {
        &self.case_is_treated
    }
}

pub fn difference_discordant(data: &PairedDataset, part: &PairPartition) -> Result<DiscordantDiffs> {
    if part.discordant.is_empty() {
        return Err(Error::NoDiscordantPairs);
    }
    let p = data.n_covariates();
    let x = data.covariates();
    let mut delta_x = DMatrix::zeros(part.discordant.len(), p);
    let mut z = Vec::with_capacity(part.discordant.len());
    for (i, &k) in part.discordant.iter().enumerate() {
        let pair = data.pairs()[k];
        for j in 0..p {
            delta_x[(i, j)] = x[(pair.treated, j)] - x[(pair.control, j)];
        }
        z.push(data.response[pair.treated]);
    }
    DiscordantDiffs::new(delta_x, z)
}

/// Covariate rows and responses of the concordant pairs, laid out so rows
/// `2k` and `2k + 1` are the two members of the k-th concordant pair.
pub fn concordant_rows(data: &PairedDataset, part: &PairPartition) -> (DMatrix<f64>, Vec<u8>) {
    let p = data.n_covariates();
    let mut x = DMatrix::zeros(2 * part.concordant.len(), p);
    let mut y = Vec::with_capacity(2 * part.concordant.len());
    for (i, &k) in part.concordant.iter().enumerate() {
        let pair = data.pairs()[k];
        for (slot, row) in [pair.treated, pair.control].into_iter().enumerate() {
            for j in 0..p {
                x[(2 * i + slot, j)] = data.covariates[(row, j)];
            }
            y.push(data.response[row]);
        }
    }
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four_pairs() -> PairedDataset {
        // responses per pair: (1,0), (1,1), (0,0), (0,1); treated listed first
        let ids = ["a", "a", "b", "b", "c", "c", "d", "d"].map(String::from).to_vec();
        PairedDataset::new(
            ids,
            vec![1, 0, 1, 0, 1, 0, 1, 0],
            vec![1, 0, 1, 1, 0, 0, 0, 1],
            DMatrix::from_column_slice(8, 1, &[0.5, 0.2, 0.0, 0.1, 0.3, 0.3, 0.7, 0.7]),
        )
        .unwrap()
    }

    #[test]
    fn partition_by_response_sum() {
        let part = partition_pairs(&four_pairs());
        assert_eq!(part.discordant, vec![0, 3]);
        assert_eq!(part.concordant, vec![1, 2]);
        assert_eq!(part.n_concordant() + part.n_discordant(), 4);
    }

    #[test]
    fn all_zero_responses_are_concordant() {
        let data = PairedDataset::from_consecutive_rows(vec![1, 0, 0, 1], vec![0; 4], DMatrix::zeros(4, 2)).unwrap();
        let part = partition_pairs(&data);
        assert_eq!(part.concordant, vec![0, 1]);
        assert!(part.discordant.is_empty());
        assert_eq!(difference_discordant(&data, &part), Err(Error::NoDiscordantPairs));
    }

    #[test]
    fn odd_row_count_is_rejected() {
        let err = PairedDataset::from_consecutive_rows(vec![1, 0, 1, 0, 1], vec![0; 5], DMatrix::zeros(5, 1));
        assert_eq!(err, Err(Error::OddRowCount(5)));
    }

    #[test]
    fn pairing_violations_are_rejected() {
        let ids = ["a", "a", "a", "b"].map(String::from).to_vec();
        let err = PairedDataset::new(ids, vec![1, 0, 1, 0], vec![0; 4], DMatrix::zeros(4, 1));
        assert!(matches!(err, Err(Error::MalformedPairing(_))));

        let err = PairedDataset::from_consecutive_rows(vec![1, 1], vec![0, 1], DMatrix::zeros(2, 1));
        assert!(matches!(err, Err(Error::MalformedPairing(_))));
    }

    #[test]
    fn non_finite_covariates_are_rejected() {
        let err = PairedDataset::from_consecutive_rows(
            vec![1, 0],
            vec![0, 1],
            DMatrix::from_column_slice(2, 1, &[0.0, f64::NAN]),
        );
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn differences_for_single_pairs() {
        let data = four_pairs();
        let d = difference_discordant(&data, &partition_pairs(&data)).unwrap();
        assert_eq!(d.n_pairs(), 2);
        // pair a: treated (0.5, y=1), control (0.2, y=0)
        assert!((d.delta_x()[(0, 0)] - 0.3).abs() < 1e-15);
        assert_eq!(d.case_is_treated()[0], 1);
        // pair d: treated y=0, control y=1, identical x
        assert_eq!(d.delta_x()[(1, 0)], 0.0);
        assert_eq!(d.case_is_treated()[1], 0);
    }

    #[test]
    fn rows_may_arrive_unordered() {
        let ids = ["x", "y", "x", "y"].map(String::from).to_vec();
        let data = PairedDataset::new(
            ids,
            vec![0, 1, 1, 0],
            vec![1, 1, 0, 1],
            DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 5.0]),
        )
        .unwrap();
        assert_eq!(data.pairs()[0], Pair { treated: 2, control: 0 });
        assert_eq!(data.pair_label(1), "y");
        let d = difference_discordant(&data, &partition_pairs(&data)).unwrap();
        assert_eq!(d.n_pairs(), 1);
        assert_eq!(d.delta_x()[(0, 0)], 2.0);
        assert_eq!(d.case_is_treated(), &[0]);
    }

    #[derive(Debug, Clone)]
    struct RawPair {
        treated_first: bool,
        y_treated: u8,
        y_control: u8,
        x_treated: Vec<f64>,
        x_control: Vec<f64>,
    }

    fn raw_pairs(p: usize) -> impl Strategy<Value = Vec<RawPair>> {
        prop::collection::vec(
            (
                any::<bool>(),
                0u8..2,
                0u8..2,
                prop::collection::vec(-3.0f64..3.0, p),
                prop::collection::vec(-3.0f64..3.0, p),
            )
                .prop_map(|(treated_first, y_treated, y_control, x_treated, x_control)| RawPair {
                    treated_first,
                    y_treated,
                    y_control,
                    x_treated,
                    x_control,
                }),
            1..30,
        )
    }

    fn build(pairs: &[RawPair], order: &[usize], swap: bool) -> PairedDataset {
        let p = pairs[0].x_treated.len();
        let mut ids = Vec::new();
        let mut w = Vec::new();
        let mut y = Vec::new();
        let mut rows: Vec<f64> = Vec::new();
        for &k in order {
            let rp = &pairs[k];
            let members = [(1u8, rp.y_treated, &rp.x_treated), (0u8, rp.y_control, &rp.x_control)];
            let seq = if rp.treated_first { [0, 1] } else { [1, 0] };
            for m in seq {
                let (wt, yt, xt) = members[m];
                ids.push(format!("p{k}"));
                w.push(if swap { 1 - wt } else { wt });
                y.push(yt);
                rows.extend_from_slice(xt);
            }
        }
        PairedDataset::new(ids, w, y, DMatrix::from_row_slice(order.len() * 2, p, &rows)).unwrap()
    }

    fn rows_of(d: &DiscordantDiffs) -> Vec<(Vec<u64>, u8)> {
        let mut out: Vec<_> = (0..d.n_pairs())
            .map(|i| {
                let row = d.delta_x().row(i).iter().map(|v| v.to_bits()).collect();
                (row, d.case_is_treated()[i])
            })
            .collect();
        out.sort();
        out
    }

    proptest! {
        #[test]
        fn case_count_matches_recount(pairs in raw_pairs(2)) {
            let order: Vec<usize> = (0..pairs.len()).collect();
            let data = build(&pairs, &order, false);
            let part = partition_pairs(&data);
            let recount_disc = pairs.iter().filter(|p| p.y_treated + p.y_control == 1).count();
            let recount_cases = pairs.iter().filter(|p| p.y_treated == 1 && p.y_control == 0).count();
            prop_assert_eq!(part.n_discordant(), recount_disc);
            if recount_disc > 0 {
                let d = difference_discordant(&data, &part).unwrap();
                prop_assert_eq!(d.n_pairs(), recount_disc);
                let cases: usize = d.case_is_treated().iter().map(|&z| z as usize).sum();
                prop_assert_eq!(cases, recount_cases);
            }
        }

        #[test]
        fn pair_order_does_not_matter(pairs in raw_pairs(3), seed in any::<u64>()) {
            let n = pairs.len();
            let order: Vec<usize> = (0..n).collect();
            let mut shuffled = order.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a = build(&pairs, &order, false);
            let b = build(&pairs, &shuffled, false);
            let (pa, pb) = (partition_pairs(&a), partition_pairs(&b));
            if pa.n_discordant() > 0 {
                let da = difference_discordant(&a, &pa).unwrap();
                let db = difference_discordant(&b, &pb).unwrap();
                prop_assert_eq!(rows_of(&da), rows_of(&db));
            }
        }

        #[test]
        fn swapping_labels_negates_and_flips(pairs in raw_pairs(2)) {
            let order: Vec<usize> = (0..pairs.len()).collect();
            let a = build(&pairs, &order, false);
            let b = build(&pairs, &order, true);
            let (pa, pb) = (partition_pairs(&a), partition_pairs(&b));
            prop_assert_eq!(&pa, &pb);
            if pa.n_discordant() > 0 {
                let da = difference_discordant(&a, &pa).unwrap();
                let db = difference_discordant(&b, &pb).unwrap();
                prop_assert_eq!(da.delta_x(), &(-db.delta_x()));
                for (za, zb) in da.case_is_treated().iter().zip(db.case_is_treated()) {
                    prop_assert_eq!(*za, 1 - *zb);
                }
            }
        }
    }
}
