//! CSV layouts. Floats use the shortest round-tripping decimal form.
//!
//! - evaluate: `ood_file,auroc,fpr95`
//! - ablate-m: `m,<one column per OOD set>`
//! - sensitivity summary: `detector,test_set,mean_fpr95,std_fpr95`
//! - sensitivity cells: `detector,test_set,tuning_set,fpr95`
//! - per_m: `m,fit_value,revalidated_value,selected,params`
//! - convergence: `m,iteration,value,best_so_far`

use serde::{Deserialize, Serialize};

use oodtune::tuner::{AblationTable, SensitivityReport, TuneResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub ood_file: String,
    pub auroc: f64,
    pub fpr95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub detector: String,
    pub test_set: String,
    pub mean_fpr95: f64,
    pub std_fpr95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub detector: String,
    pub test_set: String,
    pub tuning_set: String,
    pub fpr95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerMRow {
    pub m: usize,
    pub fit_value: f64,
    pub revalidated_value: f64,
    pub selected: bool,
    /// Detector parameters in search-space order, `;`-separated.
    pub params: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub m: usize,
    pub iteration: usize,
    pub value: f64,
    pub best_so_far: f64,
}

fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> anyhow::Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[cfg(test)]
pub fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> anyhow::Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

pub fn eval_csv(rows: &[EvalRow]) -> anyhow::Result<String> {
    to_csv(rows, &["ood_file", "auroc", "fpr95"])
}

pub fn ablation_csv(table: &AblationTable) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["m".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header)?;
    for row in &table.rows {
        let mut rec = vec![row.m.to_string()];
        rec.extend(row.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[cfg(test)]
pub fn parse_ablation_csv(text: &str) -> anyhow::Result<AblationTable> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let columns: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let m = rec.get(0).unwrap_or_default().parse()?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse())
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(oodtune::tuner::AblationRow { m, values });
    }
    Ok(AblationTable { columns, rows })
}

pub fn sensitivity_summary_csv(rep: &SensitivityReport) -> anyhow::Result<String> {
    let rows: Vec<SummaryRow> = rep
        .summary
        .iter()
        .map(|s| SummaryRow {
            detector: s.detector.clone(),
            test_set: s.test_set.clone(),
            mean_fpr95: s.mean,
            std_fpr95: s.std,
        })
        .collect();
    to_csv(&rows, &["detector", "test_set", "mean_fpr95", "std_fpr95"])
}

pub fn sensitivity_cells_csv(rep: &SensitivityReport) -> anyhow::Result<String> {
    let rows: Vec<CellRow> = rep
        .cells
        .iter()
        .map(|c| CellRow {
            detector: c.detector.clone(),
            test_set: c.test_set.clone(),
            tuning_set: c.tuning_set.clone(),
            fpr95: c.fpr95,
        })
        .collect();
    to_csv(&rows, &["detector", "test_set", "tuning_set", "fpr95"])
}

pub fn per_m_csv(r: &TuneResult) -> anyhow::Result<String> {
    let rows: Vec<PerMRow> = r
        .per_m
        .iter()
        .map(|(&m, mr)| PerMRow {
            m,
            fit_value: mr.fit_value,
            revalidated_value: mr.revalidated_value,
            selected: m == r.m_star,
            params: mr
                .phi_star
                .point()
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        })
        .collect();
    to_csv(
        &rows,
        &["m", "fit_value", "revalidated_value", "selected", "params"],
    )
}

pub fn convergence_csv(r: &TuneResult) -> anyhow::Result<String> {
    let rows: Vec<ConvergenceRow> = r
        .per_m
        .iter()
        .flat_map(|(&m, mr)| {
            mr.trace
                .evaluations
                .iter()
                .zip(&mr.trace.best_so_far)
                .enumerate()
                .map(move |(i, (e, &b))| ConvergenceRow {
                    m,
                    iteration: i,
                    value: e.value,
                    best_so_far: b,
                })
        })
        .collect();
    to_csv(&rows, &["m", "iteration", "value", "best_so_far"])
}

#[cfg(test)]
mod tests {
    use super::*;
    use oodtune::tuner::AblationRow;

    #[test]
    fn ablation_round_trip() {
        let table = AblationTable {
            columns: vec!["far".into(), "near".into()],
            rows: vec![
                AblationRow {
                    m: 1,
                    values: vec![0.1 + 0.2, 1.0 / 3.0],
                },
                AblationRow {
                    m: 3,
                    values: vec![0.5, 0.9999999999999999],
                },
            ],
        };
        assert_eq!(
            parse_ablation_csv(&ablation_csv(&table).unwrap()).unwrap(),
            table
        );
    }

    #[test]
    fn eval_round_trip() {
        let rows = vec![EvalRow {
            ood_file: "a,b.oodf".into(),
            auroc: 2.0 / 3.0,
            fpr95: 0.05,
        }];
        let text = eval_csv(&rows).unwrap();
        assert!(text.starts_with("ood_file,auroc,fpr95\n"));
        assert_eq!(from_csv::<EvalRow>(&text).unwrap(), rows);
    }
}
