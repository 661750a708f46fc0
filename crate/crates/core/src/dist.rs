//! Probability tables on finite alphabets.
//!
//! A [`JointDistribution`] is the universe every other computation lives in.
//! Construction validates the table and trims symbols whose marginal mass is
//! below [`SUPPORT_TOL`], so every retained symbol has positive probability.

use std::collections::HashMap;
use std::io::Read;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{from_rows, to_rows};
use crate::{Error, Result};

/// Tolerance on the total mass of a probability table.
pub const MASS_TOL: f64 = 1e-9;
/// Symbols with marginal probability below this are dropped at construction.
pub const SUPPORT_TOL: f64 = 1e-12;

/// An ordered set of distinct, non-empty symbol labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet(Vec<String>);

impl Alphabet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::invalid("alphabet", "alphabet is empty"));
        }
        let mut seen = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if seen.insert(l.as_str(), i).is_some() {
                return Err(Error::invalid(
                    format!("alphabet[{i}]"),
                    format!("duplicate label {l:?}"),
                ));
            }
        }
        Ok(Alphabet(labels))
    }

    /// Labels `"0"`, `"1"`, ... `"n-1"`.
    pub fn indexed(n: usize) -> Result<Self> {
        Alphabet::new((0..n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn label(&self, i: usize) -> &str {
        &self.0[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.0.iter().position(|l| l == label)
    }

    fn retain(&self, keep: &[usize]) -> Alphabet {
        Alphabet(keep.iter().map(|&i| self.0[i].clone()).collect())
    }
}

impl TryFrom<Vec<String>> for Alphabet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Alphabet::new(v)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.0
    }
}

/// A probability vector tied to its alphabet, e.g. `P_X`.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

impl Marginal {
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.len() {
            return Err(Error::invalid(
                "probs",
                format!("{} entries for {} symbols", probs.len(), alphabet.len()),
            ));
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                format!("probs[{i}]"),
                "negative or non-finite",
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid("probs", format!("mass {total} is not 1")));
        }
        Ok(Marginal { alphabet, probs })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `E[h(X)]` for a value table `h`.
    pub fn expect(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        self.probs.iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

/// Joint probability table `P_{X,Y}` over `X × Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    x_alphabet: Alphabet,
    y_alphabet: Alphabet,
    pxy: DMatrix<f64>,
}

/// On-disk layout of a distribution: `{ "x_alphabet", "y_alphabet", "pxy" }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFile {
    pub x_alphabet: Vec<String>,
    pub y_alphabet: Vec<String>,
    pub pxy: Vec<Vec<f64>>,
}

impl JointDistribution {
    /// Validate a table and trim zero-mass symbols.
    pub fn new(x_alphabet: Alphabet, y_alphabet: Alphabet, pxy: DMatrix<f64>) -> Result<Self> {
        if pxy.nrows() != x_alphabet.len() || pxy.ncols() != y_alphabet.len() {
            return Err(Error::invalid(
                "pxy",
                format!(
                    "table is {}x{} but alphabets are {}x{}",
                    pxy.nrows(),
                    pxy.ncols(),
                    x_alphabet.len(),
                    y_alphabet.len()
                ),
            ));
        }
        for i in 0..pxy.nrows() {
            for j in 0..pxy.ncols() {
                let p = pxy[(i, j)];
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::invalid(
                        format!("pxy[{i}][{j}]"),
                        format!("probability {p} is negative or non-finite"),
                    ));
                }
            }
        }
        let total = pxy.sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(
                "pxy",
                format!("total mass {total} is not 1"),
            ));
        }

        let keep_x: Vec<usize> = (0..pxy.nrows())
            .filter(|&i| pxy.row(i).sum() >= SUPPORT_TOL)
            .collect();
        let keep_y: Vec<usize> = (0..pxy.ncols())
            .filter(|&j| pxy.column(j).sum() >= SUPPORT_TOL)
            .collect();
        let trimmed = DMatrix::from_fn(keep_x.len(), keep_y.len(), |i, j| {
            pxy[(keep_x[i], keep_y[j])]
        });
        let mass = trimmed.sum();
        Ok(JointDistribution {
            x_alphabet: x_alphabet.retain(&keep_x),
            y_alphabet: y_alphabet.retain(&keep_y),
            pxy: trimmed / mass,
        })
    }

    pub fn from_rows(
        x_alphabet: Alphabet,
        y_alphabet: Alphabet,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        if rows.len() != x_alphabet.len() {
            return Err(Error::invalid(
                "pxy",
                format!("{} rows for {} x-symbols", rows.len(), x_alphabet.len()),
            ));
        }
        let m = from_rows(rows, y_alphabet.len(), "pxy")?;
        JointDistribution::new(x_alphabet, y_alphabet, m)
    }

    /// Product table `P_X ⊗ P_Y`.
    pub fn product(px: &Marginal, py: &Marginal) -> Result<Self> {
        let m = DMatrix::from_fn(px.len(), py.len(), |i, j| px.probs[i] * py.probs[j]);
        JointDistribution::new(px.alphabet.clone(), py.alphabet.clone(), m)
    }

    /// Binary symmetric channel with crossover `delta` and uniform input,
    /// both alphabets `{-1, 1}`.
    pub fn binary_symmetric(delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::invalid("delta", "crossover must lie in [0, 1]"));
        }
        let a = Alphabet::new(["-1", "1"])?;
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                0.5 * (1.0 - delta),
                0.5 * delta,
                0.5 * delta,
                0.5 * (1.0 - delta),
            ],
        );
        JointDistribution::new(a.clone(), a, m)
    }

    /// Empirical distribution of `(x, y)` label pairs.
    ///
    /// Alphabets are taken from `x_alphabet`/`y_alphabet` when given, otherwise
    /// in order of first appearance.
    pub fn from_samples<S: AsRef<str>>(
        pairs: &[(S, S)],
        x_alphabet: Option<Alphabet>,
        y_alphabet: Option<Alphabet>,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("samples", "sample list is empty"));
        }
        fn resolve<S: AsRef<str>>(
            declared: Option<Alphabet>,
            labels: impl Iterator<Item = S>,
            field: &str,
        ) -> Result<(Alphabet, Vec<usize>)> {
            let mut order: Vec<String> = declared
                .as_ref()
                .map(|a| a.labels().to_vec())
                .unwrap_or_default();
            let mut index: HashMap<String, usize> = order
                .iter()
                .enumerate()
                .map(|(i, l)| (l.clone(), i))
                .collect();
            let mut idx = Vec::new();
            for (n, l) in labels.enumerate() {
                let l = l.as_ref();
                let i = match index.get(l) {
                    Some(&i) => i,
                    None if declared.is_some() => {
                        return Err(Error::invalid(
                            format!("samples[{n}].{field}"),
                            format!("label {l:?} is not in the declared alphabet"),
                        ))
                    }
                    None => {
                        order.push(l.to_string());
                        index.insert(l.to_string(), order.len() - 1);
                        order.len() - 1
                    }
                };
                idx.push(i);
            }
            Ok((Alphabet::new(order)?, idx))
        }
        let (xa, xi) = resolve(x_alphabet, pairs.iter().map(|p| p.0.as_ref()), "x")?;
        let (ya, yi) = resolve(y_alphabet, pairs.iter().map(|p| p.1.as_ref()), "y")?;
        let mut counts = DMatrix::<f64>::zeros(xa.len(), ya.len());
        for (&i, &j) in xi.iter().zip(&yi) {
            counts[(i, j)] += 1.0;
        }
        let n = pairs.len() as f64;
        JointDistribution::new(xa, ya, counts / n)
    }

    pub fn x_alphabet(&self) -> &Alphabet {
        &self.x_alphabet
    }

    pub fn y_alphabet(&self) -> &Alphabet {
        &self.y_alphabet
    }

    pub fn nx(&self) -> usize {
        self.pxy.nrows()
    }

    pub fn ny(&self) -> usize {
        self.pxy.ncols()
    }

    pub fn table(&self) -> &DMatrix<f64> {
        &self.pxy
    }

    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.pxy[(x, y)]
    }

    pub fn px(&self) -> Marginal {
        Marginal {
            alphabet: self.x_alphabet.clone(),
            probs: (0..self.nx()).map(|i| self.pxy.row(i).sum()).collect(),
        }
    }

    pub fn py(&self) -> Marginal {
        Marginal {
            alphabet: self.y_alphabet.clone(),
            probs: (0..self.ny()).map(|j| self.pxy.column(j).sum()).collect(),
        }
    }

    /// `(P_X, P_Y)`.
    pub fn marginals(&self) -> (Marginal, Marginal) {
        (self.px(), self.py())
    }

    /// `P_{Y|X}` as an `|X|×|Y|` table; each row sums to one.
    pub fn conditional_y_given_x(&self) -> Result<DMatrix<f64>> {
        let px = self.px();
        let mut out = self.pxy.clone();
        for (i, &p) in px.probs.iter().enumerate() {
            if p <= 0.0 {
                return Err(Error::InvalidState(format!(
                    "x-symbol {:?} has zero probability",
                    self.x_alphabet.label(i)
                )));
            }
            out.row_mut(i).scale_mut(1.0 / p);
        }
        Ok(out)
    }

    /// `P_{X|Y}` stored as an `|X|×|Y|` table; each column sums to one.
    pub fn conditional_x_given_y(&self) -> Result<DMatrix<f64>> {
        let py = self.py();
        let mut out = self.pxy.clone();
        for (j, &p) in py.probs.iter().enumerate() {
            if p <= 0.0 {
                return Err(Error::InvalidState(format!(
                    "y-symbol {:?} has zero probability",
                    self.y_alphabet.label(j)
                )));
            }
            out.column_mut(j).scale_mut(1.0 / p);
        }
        Ok(out)
    }

    /// The coupling `P_{XX'}(x,x') = Σ_y P_Y(y) P_{X|Y=y}(x) P_{X|Y=y}(x')`.
    pub fn xx_prime(&self) -> JointDistribution {
        let py = self.py();
        let n = self.nx();
        let mut m = DMatrix::zeros(n, n);
        for (j, &q) in py.probs.iter().enumerate() {
            for a in 0..n {
                for b in 0..n {
                    m[(a, b)] += self.pxy[(a, j)] * self.pxy[(b, j)] / q;
                }
            }
        }
        JointDistribution {
            x_alphabet: self.x_alphabet.clone(),
            y_alphabet: self.x_alphabet.clone(),
            pxy: m,
        }
    }

    /// `I(X;Y)` in nats, with `0 ln 0 = 0`.
    pub fn mutual_information(&self) -> f64 {
        let (px, py) = self.marginals();
        let mut total = 0.0;
        for i in 0..self.nx() {
            for j in 0..self.ny() {
                let p = self.pxy[(i, j)];
                if p > 0.0 {
                    total += p * (p / (px.probs[i] * py.probs[j])).ln();
                }
            }
        }
        total.max(0.0)
    }

    /// Numeric value `±1` of each y-label, when the y-alphabet is `{-1, +1}`.
    pub fn y_signs(&self) -> Option<Vec<f64>> {
        if self.ny() != 2 {
            return None;
        }
        let signs: Vec<f64> = self
            .y_alphabet
            .labels()
            .iter()
            .map(|l| l.trim().parse::<f64>().ok())
            .collect::<Option<_>>()?;
        let mut sorted = signs.clone();
        sorted.sort_by(f64::total_cmp);
        (sorted == [-1.0, 1.0]).then_some(signs)
    }

    pub fn to_file(&self) -> DistributionFile {
        DistributionFile {
            x_alphabet: self.x_alphabet.labels().to_vec(),
            y_alphabet: self.y_alphabet.labels().to_vec(),
            pxy: to_rows(&self.pxy),
        }
    }

    pub fn from_file(file: DistributionFile) -> Result<Self> {
        let xa = Alphabet::new(file.x_alphabet).map_err(|e| rename(e, "x_alphabet"))?;
        let ya = Alphabet::new(file.y_alphabet).map_err(|e| rename(e, "y_alphabet"))?;
        JointDistribution::from_rows(xa, ya, &file.pxy)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        JointDistribution::from_file(parse_json(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("distribution serializes")
    }
}

/// Prefix the field of an alphabet error with the enclosing field name.
fn rename(e: Error, outer: &str) -> Error {
    match e {
        Error::InvalidInput { field, reason } => Error::InvalidInput {
            field: field.replacen("alphabet", outer, 1),
            reason,
        },
        other => other,
    }
}

/// Deserialize JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(s);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = if path == "." {
            missing_field(&inner.to_string()).unwrap_or_else(|| path.clone())
        } else {
            path
        };
        Error::invalid(field, inner.to_string())
    })
}

fn missing_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("missing field `")?;
    rest.split('`').next().map(str::to_string)
}

/// Read `(x, y)` pairs from a CSV with header `x,y`.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::invalid("header", e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
        return Err(Error::invalid("header", "expected header `x,y`"));
    }
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("line {}", n + 2), e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::invalid(
                format!("line {}", n + 2),
                "expected two columns",
            ));
        }
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[f64]]) -> JointDistribution {
        let x = Alphabet::indexed(rows.len()).unwrap();
        let y = Alphabet::indexed(rows[0].len()).unwrap();
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        JointDistribution::from_rows(x, y, &rows).unwrap()
    }

    #[test]
    fn alphabet_rejects_duplicates_and_empty() {
        assert!(Alphabet::new(["a", "b", "a"]).is_err());
        assert!(Alphabet::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn empirical_counts() {
        let pairs = [("a", "1"), ("a", "1"), ("b", "-1"), ("b", "1")];
        let j = JointDistribution::from_samples(&pairs, None, None).unwrap();
        assert_eq!(j.x_alphabet().labels(), ["a", "b"]);
        assert_eq!(j.y_alphabet().labels(), ["1", "-1"]);
        assert_eq!(j.p(0, 0), 0.5);
        assert_eq!(j.p(0, 1), 0.0);
        assert_eq!(j.p(1, 0), 0.25);
        assert_eq!(j.p(1, 1), 0.25);
    }

    #[test]
    fn single_sample_is_point_mass() {
        let j = JointDistribution::from_samples(&[("a", "1")], None, None).unwrap();
        assert_eq!((j.nx(), j.ny()), (1, 1));
        assert_eq!(j.p(0, 0), 1.0);
    }

    #[test]
    fn declared_alphabet_trims_unseen_symbols() {
        let xa = Alphabet::new(["a", "b", "c"]).unwrap();
        let j = JointDistribution::from_samples(&[("a", "1"), ("c", "2")], Some(xa), None).unwrap();
        assert_eq!(j.x_alphabet().labels(), ["a", "c"]);
        let xa = Alphabet::new(["a"]).unwrap();
        let err = JointDistribution::from_samples(&[("a", "1"), ("z", "2")], Some(xa), None);
        assert!(matches!(err, Err(Error::InvalidInput { .. })));
    }

    #[test]
    fn empty_samples_rejected() {
        let pairs: [(&str, &str); 0] = [];
        assert!(matches!(
            JointDistribution::from_samples(&pairs, None, None),
            Err(Error::InvalidInput { .. })
        ));
    }

    #[test]
    fn validation_errors() {
        let a = Alphabet::indexed(2).unwrap();
        let bad = JointDistribution::from_rows(
            a.clone(),
            a.clone(),
            &[vec![0.6, -0.1], vec![0.25, 0.25]],
        );
        assert_eq!(bad.unwrap_err().field(), Some("pxy[0][1]"));
        let bad = JointDistribution::from_rows(a.clone(), a, &[vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!(bad.unwrap_err().field(), Some("pxy"));
    }

    #[test]
    fn marginals_and_conditionals() {
        let j = table(&[&[0.5, 0.0], &[0.25, 0.25]]);
        let (px, py) = j.marginals();
        assert_eq!(px.probs(), [0.5, 0.5]);
        assert_eq!(py.probs(), [0.75, 0.25]);
        let c = j.conditional_y_given_x().unwrap();
        assert_eq!(c[(0, 0)], 1.0);
        assert_eq!(c[(0, 1)], 0.0);
        assert_eq!(c[(1, 0)], 0.5);
        assert_eq!(c[(1, 1)], 0.5);

        let u = table(&[&[0.25, 0.25], &[0.25, 0.25]]);
        let (px, py) = u.marginals();
        assert_eq!(px.probs(), [0.5, 0.5]);
        assert_eq!(py.probs(), [0.5, 0.5]);
    }

    #[test]
    fn independent_conditionals_equal_py() {
        let px = Marginal::new(Alphabet::indexed(3).unwrap(), vec![0.2, 0.3, 0.5]).unwrap();
        let py = Marginal::new(Alphabet::indexed(2).unwrap(), vec![0.6, 0.4]).unwrap();
        let j = JointDistribution::product(&px, &py).unwrap();
        let c = j.conditional_y_given_x().unwrap();
        for i in 0..3 {
            assert!((c[(i, 0)] - 0.6).abs() < 1e-12);
            assert!((c[(i, 1)] - 0.4).abs() < 1e-12);
        }
        assert!(j.mutual_information().abs() < 1e-15);
        let xx = j.xx_prime();
        for a in 0..3 {
            for b in 0..3 {
                assert!((xx.p(a, b) - px.probs()[a] * px.probs()[b]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_channel() {
        let j = table(&[&[0.5, 0.0], &[0.0, 0.5]]);
        let c = j.conditional_y_given_x().unwrap();
        assert_eq!(c, DMatrix::identity(2, 2));
        let xx = j.xx_prime();
        assert_eq!(xx.table(), &DMatrix::from_diagonal_element(2, 2, 0.5));
        assert!((j.mutual_information() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bsc_information_matches_binary_entropy() {
        let d: f64 = 0.45;
        let hb = -d * d.ln() - (1.0 - d) * (1.0 - d).ln();
        let oracle = std::f64::consts::LN_2 - hb;
        let j = JointDistribution::binary_symmetric(d).unwrap();
        assert!((j.mutual_information() - oracle).abs() < 1e-15);
        assert!((j.mutual_information() - 0.005008).abs() < 1e-5);
    }

    #[test]
    fn zero_marginal_symbols_are_trimmed() {
        let j = table(&[&[0.5, 0.0], &[0.0, 0.0], &[0.25, 0.25]]);
        assert_eq!(j.x_alphabet().labels(), ["0", "2"]);
        assert!(j.px().probs().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn y_signs_detects_binary_labels() {
        assert_eq!(
            JointDistribution::binary_symmetric(0.1).unwrap().y_signs(),
            Some(vec![-1.0, 1.0])
        );
        assert_eq!(table(&[&[0.5, 0.0], &[0.0, 0.5]]).y_signs(), None);
    }

    #[test]
    fn json_reports_missing_field() {
        let err =
            JointDistribution::from_json(r#"{"x_alphabet":["a"],"y_alphabet":["b"]}"#).unwrap_err();
        assert_eq!(err.field(), Some("pxy"));
        let err = JointDistribution::from_json(
            r#"{"x_alphabet":["a"],"y_alphabet":["b"],"pxy":[["x"]]}"#,
        )
        .unwrap_err();
        assert_eq!(err.field(), Some("pxy[0][0]"));
    }

    #[test]
    fn csv_samples() {
        let data = "x,y\na,1\na,1\nb,-1\nb,1\n";
        let pairs = read_samples_csv(data.as_bytes()).unwrap();
        let j = JointDistribution::from_samples(&pairs, None, None).unwrap();
        assert_eq!(j.p(1, 1), 0.25);
        assert!(read_samples_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
