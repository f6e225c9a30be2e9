use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use datamarket::audit::{AuditVerdict, SweepRecord};
use datamarket::model::{Allocation, PaymentResult, WelfareReport};
use datamarket::Result;

pub const POA_CONVENTION: &str =
    "poa = SC(W*(best response)) / SC(W*(true costs)), social costs at true costs; >= 1, worst unilateral deviation";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Rendered output, ready to write.
pub enum Written {
    Json(String),
    Csv(String),
}

impl Written {
    pub fn emit(self, path: Option<&Path>) -> Result<()> {
        let mut text = match self {
            Written::Json(s) | Written::Csv(s) => s,
        };
        if !text.ends_with('\n') {
            text.push('\n');
        }
        match path {
            Some(p) => std::fs::write(p, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<Written> {
    Ok(Written::Json(serde_json::to_string_pretty(value)?))
}

fn csv_of<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<Written> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(Written::Csv(
        String::from_utf8(bytes).expect("csv output is utf-8"),
    ))
}

#[derive(Serialize)]
struct Solution<'a> {
    allocation: &'a Allocation,
    welfare: &'a WelfareReport,
}

#[derive(Serialize)]
struct PlayerRow {
    role: &'static str,
    index: usize,
    value: Option<f64>,
    sharing: Option<f64>,
    cost: Option<f64>,
}

pub fn solution(
    format: Option<Format>,
    allocation: &Allocation,
    welfare: &WelfareReport,
) -> Result<Written> {
    match format.unwrap_or(Format::Json) {
        Format::Json => json(&Solution {
            allocation,
            welfare,
        }),
        Format::Csv => {
            let buyers = welfare
                .per_buyer_value
                .iter()
                .enumerate()
                .map(|(i, v)| PlayerRow {
                    role: "buyer",
                    index: i,
                    value: Some(*v),
                    sharing: None,
                    cost: None,
                });
            let sellers = welfare
                .per_seller_sharing
                .iter()
                .zip(&welfare.per_seller_cost)
                .enumerate()
                .map(|(j, (f, c))| PlayerRow {
                    role: "seller",
                    index: j,
                    value: None,
                    sharing: Some(*f),
                    cost: Some(*c),
                });
            csv_of(
                &["role", "index", "value", "sharing", "cost"],
                buyers.chain(sellers),
            )
        }
    }
}

#[derive(Serialize)]
struct PaymentRow {
    role: &'static str,
    index: usize,
    reported_cost: Option<f64>,
    sharing: Option<f64>,
    payment: Option<f64>,
    utility: f64,
}

pub fn payment(format: Option<Format>, result: &PaymentResult) -> Result<Written> {
    match format.unwrap_or(Format::Json) {
        Format::Json => json(result),
        Format::Csv => {
            let sellers = (0..result.seller_payments.len()).map(|j| PaymentRow {
                role: "seller",
                index: j,
                reported_cost: Some(result.reported_costs.get(j)),
                sharing: Some(result.welfare.per_seller_sharing[j]),
                payment: Some(result.seller_payments[j]),
                utility: result.seller_utilities[j],
            });
            let buyers = result
                .buyer_utilities
                .iter()
                .enumerate()
                .map(|(i, u)| PaymentRow {
                    role: "buyer",
                    index: i,
                    reported_cost: None,
                    sharing: None,
                    payment: result.buyer_charges.as_ref().map(|c| c[i]),
                    utility: *u,
                });
            csv_of(
                &[
                    "role",
                    "index",
                    "reported_cost",
                    "sharing",
                    "payment",
                    "utility",
                ],
                sellers.chain(buyers),
            )
        }
    }
}

pub fn sweep(format: Option<Format>, records: &[SweepRecord]) -> Result<Written> {
    match format.unwrap_or(Format::Csv) {
        Format::Json => json(records),
        Format::Csv => csv_of(&datamarket::audit::SWEEP_COLUMNS, records),
    }
}

#[derive(Serialize)]
struct AuditReport<'a> {
    poa_convention: &'static str,
    verdicts: &'a [AuditVerdict],
}

#[derive(Serialize)]
struct AuditRow {
    rule: &'static str,
    seller: usize,
    true_cost: f64,
    best_response: f64,
    truthful: bool,
    payment_at_truth: f64,
    utility_at_truth: f64,
    seller_ir: bool,
    served_at_best_response: bool,
    poa: f64,
    budget_gap: Option<f64>,
}

pub fn audit(format: Option<Format>, verdicts: &[AuditVerdict]) -> Result<Written> {
    match format.unwrap_or(Format::Json) {
        Format::Json => json(&AuditReport {
            poa_convention: POA_CONVENTION,
            verdicts,
        }),
        Format::Csv => {
            let rows = verdicts.iter().flat_map(|v| {
                (0..v.true_costs.len()).map(move |j| AuditRow {
                    rule: v.rule.as_str(),
                    seller: j,
                    true_cost: v.true_costs[j],
                    best_response: v.best_responses[j],
                    truthful: v.truthful[j],
                    payment_at_truth: v.payments_at_truth[j],
                    utility_at_truth: v.seller_utilities_at_truth[j],
                    seller_ir: v.seller_ir[j],
                    served_at_best_response: v.served_at_best_response[j],
                    poa: v.poa,
                    budget_gap: v.budget_gap,
                })
            });
            csv_of(
                &[
                    "rule",
                    "seller",
                    "true_cost",
                    "best_response",
                    "truthful",
                    "payment_at_truth",
                    "utility_at_truth",
                    "seller_ir",
                    "served_at_best_response",
                    "poa",
                    "budget_gap",
                ],
                rows,
            )
        }
    }
}
