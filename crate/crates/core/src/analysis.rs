//! Accuracy tables with binomial standard errors, run-to-run deltas, Pearson
//! correlation and CSV/Markdown reports. Generic over the float type.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_traits::Float;
use serde::Serialize;
use thiserror::Error;

use crate::taskgen::{Family, Feature, TaskKind};

pub const REPORT_CSV_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no results to score")]
    EmptyResults,
    #[error("need at least two points with nonzero variance in both series")]
    DegenerateInput,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("tables cover different rows: {0}")]
    KindMismatch(String),
    #[error("cell {label}: {correct} correct out of {n}")]
    BadCounts { label: String, correct: usize, n: usize },
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn lit<T: Float>(x: f64) -> T {
    T::from(x).expect("float literal")
}

/// sqrt(p(1-p)/n).
pub fn binomial_se<T: Float>(p: T, n: usize) -> T {
    if n == 0 {
        return T::zero();
    }
    (p * (T::one() - p) / lit(n as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreCell<T> {
    pub label: String,
    pub n: usize,
    pub correct: usize,
    pub p_hat: T,
    pub se: T,
}

impl<T: Float> ScoreCell<T> {
    pub fn from_counts(label: impl Into<String>, correct: usize, n: usize) -> Result<Self, AnalysisError> {
        let label = label.into();
        if n == 0 || correct > n {
            return Err(AnalysisError::BadCounts { label, correct, n });
        }
        let p_hat = lit::<T>(correct as f64) / lit(n as f64);
        Ok(ScoreCell { se: binomial_se(p_hat, n), label, n, correct, p_hat })
    }

    /// A cell given directly as fractions, e.g. transcribed from a table.
    pub fn from_values(label: impl Into<String>, p_hat: T, se: T) -> Self {
        ScoreCell { label: label.into(), n: 0, correct: 0, p_hat, se }
    }

    pub fn percent(&self) -> f64 {
        self.p_hat.to_f64().unwrap_or(f64::NAN) * 100.0
    }

    pub fn se_percent(&self) -> f64 {
        self.se.to_f64().unwrap_or(f64::NAN) * 100.0
    }

    /// "46.00±7.05".
    pub fn display(&self) -> String {
        format!("{:.2}±{:.2}", self.percent(), self.se_percent())
    }
}

/// Grouped rows in report order, each with its member kinds.
pub fn groups() -> Vec<(&'static str, Vec<TaskKind>)> {
    let by = |pred: &dyn Fn(TaskKind) -> bool| TaskKind::ALL.into_iter().filter(|&k| pred(k)).collect::<Vec<_>>();
    let mut out = vec![
        ("Percep. (Cat)", by(&|k| k.family() == Family::Perception && k.feature() == Feature::Category)),
        ("Percep. (Loc)", by(&|k| k.family() == Family::Perception && k.feature() == Feature::Location)),
        ("Feature Attn.", by(&|k| k.family() == Family::FeatureAttention)),
        ("Spatial Attn.", by(&|k| k.family() == Family::SpatialAttention)),
        (
            "Memory (Cat)",
            by(&|k| matches!(k.family(), Family::Memory | Family::MemoryDistractor) && k.feature() == Feature::Category),
        ),
        (
            "Memory (Loc)",
            by(&|k| matches!(k.family(), Family::Memory | Family::MemoryDistractor) && k.feature() == Feature::Location),
        ),
    ];
    for k in [TaskKind::CvrCatL, TaskKind::CvrLocL, TaskKind::CvrCatM, TaskKind::CvrLocM, TaskKind::CvrCatH, TaskKind::CvrLocH] {
        out.push((k.abbrev(), vec![k]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTable<T> {
    /// Grouped rows, pooled over member kinds' trials.
    pub groups: Vec<ScoreCell<T>>,
    /// One row per task label, named kinds first in canonical order.
    pub tasks: Vec<ScoreCell<T>>,
}

impl<T: Float> ScoreTable<T> {
    pub fn rows(&self) -> impl Iterator<Item = &ScoreCell<T>> {
        self.groups.iter().chain(&self.tasks)
    }

    pub fn get(&self, label: &str) -> Option<&ScoreCell<T>> {
        self.rows().find(|c| c.label == label)
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty() && self.groups.is_empty()
    }
}

/// Scores (task label, correct) outcomes. Group rows pool their members'
/// trials, so a group's p_hat is total correct over total trials.
pub fn score<T: Float, S: AsRef<str>>(outcomes: impl IntoIterator<Item = (S, bool)>) -> Result<ScoreTable<T>, AnalysisError> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (label, correct) in outcomes {
        let e = counts.entry(label.as_ref().to_string()).or_default();
        e.0 += usize::from(correct);
        e.1 += 1;
    }
    if counts.is_empty() {
        return Err(AnalysisError::EmptyResults);
    }
    let mut labels: Vec<&String> = counts.keys().collect();
    labels.sort_by_key(|l| (l.parse::<TaskKind>().map(|k| k as usize).unwrap_or(usize::MAX), (*l).clone()));
    let tasks = labels
        .into_iter()
        .map(|l| ScoreCell::from_counts(l.clone(), counts[l].0, counts[l].1))
        .collect::<Result<Vec<_>, _>>()?;
    let mut group_rows = Vec::new();
    for (name, members) in groups() {
        let (c, n) = members
            .iter()
            .filter_map(|k| counts.get(k.abbrev()))
            .fold((0, 0), |(c, n), &(dc, dn)| (c + dc, n + dn));
        if n > 0 {
            group_rows.push(ScoreCell::from_counts(name, c, n)?);
        }
    }
    Ok(ScoreTable { groups: group_rows, tasks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Up,
    Down,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow<T> {
    pub label: String,
    pub base: T,
    pub variant: T,
    /// variant - base, as a fraction.
    pub delta: T,
    /// sqrt(se_base^2 + se_variant^2).
    pub se: T,
    pub sign: Sign,
}

impl<T: Float> DeltaRow<T> {
    /// "+28.67" in percentage points.
    pub fn display_delta(&self) -> String {
        format!("{:+.2}", self.delta.to_f64().unwrap_or(f64::NAN) * 100.0)
    }

    pub fn display(&self) -> String {
        format!("{}±{:.2}", self.display_delta(), self.se.to_f64().unwrap_or(f64::NAN) * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaTable<T> {
    pub rows: Vec<DeltaRow<T>>,
}

/// Row-by-row variant minus base. Both tables must have the same row labels.
pub fn compare_runs<T: Float>(base: &ScoreTable<T>, variant: &ScoreTable<T>) -> Result<DeltaTable<T>, AnalysisError> {
    let a: Vec<&str> = base.rows().map(|c| c.label.as_str()).collect();
    let mut sa = a.clone();
    let mut sb: Vec<&str> = variant.rows().map(|c| c.label.as_str()).collect();
    sa.sort_unstable();
    sb.sort_unstable();
    if sa != sb {
        let only_a: Vec<&str> = sa.iter().filter(|l| !sb.contains(l)).copied().collect();
        let only_b: Vec<&str> = sb.iter().filter(|l| !sa.contains(l)).copied().collect();
        return Err(AnalysisError::KindMismatch(format!("base only {only_a:?}, variant only {only_b:?}")));
    }
    let rows = base
        .rows()
        .map(|b| {
            let v = variant.get(&b.label).expect("labels checked");
            let delta = v.p_hat - b.p_hat;
            let sign = if delta > T::zero() {
                Sign::Up
            } else if delta < T::zero() {
                Sign::Down
            } else {
                Sign::Flat
            };
            DeltaRow { label: b.label.clone(), base: b.p_hat, variant: v.p_hat, delta, se: (b.se * b.se + v.se * v.se).sqrt(), sign }
        })
        .collect();
    Ok(DeltaTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation<T> {
    pub n: usize,
    pub r: T,
}

/// Product-moment correlation, clamped to [-1, 1].
pub fn pearson<T: Float>(xs: &[T], ys: &[T]) -> Result<Correlation<T>, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(AnalysisError::DegenerateInput);
    }
    let nf = lit::<T>(n as f64);
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / nf;
    let my = ys.iter().fold(T::zero(), |a, &y| a + y) / nf;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(AnalysisError::DegenerateInput);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(Correlation { n, r: r.max(-T::one()).min(T::one()) })
}

/// A named score table for reporting.
pub type NamedTable<'a, T> = (&'a str, &'a ScoreTable<T>);
pub type NamedDelta<'a, T> = (&'a str, &'a DeltaTable<T>);

const CSV_HEADER: [&str; 7] = ["section", "run", "label", "n", "correct", "value_pct", "se_pct"];

/// Writes `<stem>.csv` and `<stem>.md` into `dir`. Score rows carry accuracy
/// in `value_pct`; delta rows carry the signed change.
pub fn emit_report<T: Float>(
    dir: &Path,
    stem: &str,
    tables: &[NamedTable<'_, T>],
    deltas: &[NamedDelta<'_, T>],
) -> Result<Vec<PathBuf>, AnalysisError> {
    if tables.is_empty() || tables.iter().any(|(_, t)| t.is_empty()) {
        return Err(AnalysisError::EmptyResults);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source: std::io::Error| AnalysisError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let f = |x: T| format!("{:.4}", x.to_f64().unwrap_or(f64::NAN) * 100.0);

    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| io(&csv_path)(e.into()))?;
    let mut put = |rec: &[String]| w.write_record(rec).map_err(|e| io(&csv_path)(e.into()));
    put(&CSV_HEADER.map(String::from))?;
    for (run, t) in tables {
        for (section, cells) in [("group", &t.groups), ("task", &t.tasks)] {
            for c in cells {
                put(&[section.into(), run.to_string(), c.label.clone(), c.n.to_string(), c.correct.to_string(), f(c.p_hat), f(c.se)])?;
            }
        }
    }
    for (run, d) in deltas {
        for r in &d.rows {
            put(&["delta".into(), run.to_string(), r.label.clone(), String::new(), String::new(), f(r.delta), f(r.se)])?;
        }
    }
    w.flush().map_err(io(&csv_path))?;

    let mut md = String::new();
    for (run, t) in tables {
        writeln!(md, "## {run}\n\n| Task | n | Accuracy (%) |\n|---|---:|---:|").unwrap();
        for c in t.rows() {
            writeln!(md, "| {} | {} | {} |", c.label, c.n, c.display()).unwrap();
        }
        md.push('\n');
    }
    for (run, d) in deltas {
        writeln!(md, "## {run}\n\n| Task | Base (%) | Variant (%) | Change (pp) |\n|---|---:|---:|---:|").unwrap();
        for r in &d.rows {
            let pct = |x: T| x.to_f64().unwrap_or(f64::NAN) * 100.0;
            writeln!(md, "| {} | {:.2} | {:.2} | {} |", r.label, pct(r.base), pct(r.variant), r.display()).unwrap();
        }
        md.push('\n');
    }
    let md_path = dir.join(format!("{stem}.md"));
    fs::write(&md_path, md).map_err(io(&md_path))?;
    Ok(vec![csv_path, md_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_format() {
        let c = ScoreCell::<f64>::from_counts("x", 23, 50).unwrap();
        assert_eq!(c.display(), "46.00±7.05");
        assert_eq!(format!("{:.2}", binomial_se(0.46f64, 40) * 100.0), "7.88");
        assert_eq!(binomial_se(0.5f64, 100), 0.05);
        assert_eq!(ScoreCell::<f64>::from_counts("x", 5, 5).unwrap().se, 0.0);
        assert!(ScoreCell::<f64>::from_counts("x", 6, 5).is_err());
        assert!(ScoreCell::<f32>::from_counts("x", 0, 0).is_err());
    }

    #[test]
    fn groups_pool_trials() {
        let mut outcomes = vec![];
        outcomes.extend(std::iter::repeat_n(("Mem-Cat-R", true), 9));
        outcomes.push(("Mem-Cat-R", false));
        outcomes.extend(std::iter::repeat_n(("Mem-Dis-Cat-C", false), 30));
        let t: ScoreTable<f64> = score(outcomes).unwrap();
        let g = t.get("Memory (Cat)").unwrap();
        assert_eq!((g.correct, g.n), (9, 40));
        assert_eq!(g.p_hat, 9.0 / 40.0);
        assert_eq!(t.groups.len(), 1);
        assert_eq!(t.tasks[0].label, "Mem-Cat-R");
        assert!(matches!(score::<f64, &str>(Vec::new()), Err(AnalysisError::EmptyResults)));
    }

    #[test]
    fn deltas() {
        let base = ScoreTable { groups: vec![ScoreCell::from_values("Percep. (Loc)", 0.4433f64, 0.0559)], tasks: vec![] };
        let sc = ScoreTable { groups: vec![ScoreCell::from_values("Percep. (Loc)", 0.73f64, 0.05)], tasks: vec![] };
        let d = compare_runs(&base, &sc).unwrap();
        assert_eq!(d.rows[0].display_delta(), "+28.67");
        assert_eq!(d.rows[0].sign, Sign::Up);
        let same = compare_runs(&base, &base).unwrap();
        assert!(same.rows.iter().all(|r| r.delta == 0.0 && r.sign == Sign::Flat));
        let other = ScoreTable { groups: vec![ScoreCell::from_values("Memory (Loc)", 0.5f64, 0.1)], tasks: vec![] };
        assert!(matches!(compare_runs(&base, &other), Err(AnalysisError::KindMismatch(_))));
    }

    #[test]
    fn pearson_extremes() {
        let xs = [0.1f64, 0.25, 0.3, 0.77, 0.5];
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_eq!(pearson(&xs, &xs).unwrap().r, 1.0);
        assert_eq!(pearson(&xs, &neg).unwrap().r, -1.0);
        assert!(matches!(pearson(&[1.0f64, 1.0], &[2.0, 3.0]), Err(AnalysisError::DegenerateInput)));
        assert!(matches!(pearson(&[1.0f64], &[2.0]), Err(AnalysisError::DegenerateInput)));
    }

    // Published cells in hundredths of a percent, 7 columns.
    const MEM: [[i128; 7]; 2] = [
        [6683, 7368, 6120, 7859, 8896, 9147, 9688],
        [5083, 3911, 4875, 4222, 5728, 8347, 9625],
    ];
    const CVR: [[i128; 7]; 6] = [
        [4600, 6200, 5200, 6000, 8133, 9133, 8250],
        [6600, 5000, 4600, 5600, 5133, 6600, 9250],
        [4400, 4933, 3800, 5400, 7200, 9667, 9500],
        [5800, 5933, 5000, 4933, 5133, 8267, 7000],
        [2400, 3700, 3733, 3933, 6300, 8367, 7250],
        [2000, 3100, 3633, 2933, 3967, 6467, 7500],
    ];

    fn column_means<const R: usize>(rows: &[[i128; 7]; R]) -> Vec<num_rational::Ratio<i128>> {
        (0..7).map(|j| num_rational::Ratio::new(rows.iter().map(|r| r[j]).sum::<i128>(), R as i128 * 10_000)).collect()
    }

    #[test]
    fn pearson_matches_exact_oracle_on_table() {
        use num_rational::Ratio;
        use num_traits::{Signed, ToPrimitive};
        let xs = column_means(&MEM);
        let ys = column_means(&CVR);
        let n = Ratio::from_integer(7);
        let mx = xs.iter().sum::<Ratio<i128>>() / n;
        let my = ys.iter().sum::<Ratio<i128>>() / n;
        let sxy: Ratio<i128> = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: Ratio<i128> = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let syy: Ratio<i128> = ys.iter().map(|y| (y - my) * (y - my)).sum();
        let r2 = sxy * sxy / (sxx * syy);
        let oracle = r2.to_f64().unwrap().sqrt() * if sxy.is_negative() { -1.0 } else { 1.0 };

        let fx: Vec<f64> = xs.iter().map(|v| v.to_f64().unwrap()).collect();
        let fy: Vec<f64> = ys.iter().map(|v| v.to_f64().unwrap()).collect();
        let got = pearson(&fx, &fy).unwrap();
        assert_eq!(got.n, 7);
        assert!((got.r - oracle).abs() < 1e-9, "{} vs {oracle}", got.r);
        assert!(got.r > 0.8);

        // positive affine maps leave r unchanged
        let scaled: Vec<f64> = fx.iter().map(|x| 100.0 * x + 3.0).collect();
        assert!((pearson(&scaled, &fy).unwrap().r - got.r).abs() < 1e-12);
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let t: ScoreTable<f64> = score([("Perc-Cat-R", true), ("Perc-Cat-C", false)]).unwrap();
        let d = compare_runs(&t, &t).unwrap();
        let files = emit_report(dir.path(), "run", &[("base", &t)], &[("sc vs base", &d)]).unwrap();
        assert_eq!(files.len(), 2);
        let csv = fs::read_to_string(&files[0]).unwrap();
        assert!(csv.starts_with("section,run,label,n,correct,value_pct,se_pct\n"));
        assert!(csv.contains("group,base,Percep. (Cat),2,1,50.0000,35.3553"));
        assert!(csv.contains("delta,sc vs base,"));
        let md = fs::read_to_string(&files[1]).unwrap();
        assert!(md.contains("| Percep. (Cat) | 2 | 50.00±35.36 |"));

        let empty = tempfile::tempdir().unwrap();
        let none: ScoreTable<f64> = ScoreTable { groups: vec![], tasks: vec![] };
        assert!(emit_report(&empty.path().join("x"), "r", &[("a", &none)], &[]).is_err());
        assert!(!empty.path().join("x").exists());
    }
}
