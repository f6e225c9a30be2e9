//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use datamarket::allocation::{solve_discrete, solve_numeric, SolverSettings};
use datamarket::audit::{mechanism_audit_with_sweeps, AuditOptions, AuditVerdict, RuleSweeps};
use datamarket::markets::{
    MarketConfig, MarketInstance, MeanEstimationMarket, RetrievalMarket, Valuation, MAX_SCORE,
};
use datamarket::model::{CostVector, Market, PaymentRule};
use datamarket::payments::{
    buyer_probe, critical_cost, loo_payment, myerson_discrete, pay, redistribute,
    redistribution_shares, vcg_payment, vcg_upper_bound, PaymentOptions, Probe,
};

const MEAN_SEEDS: u64 = 20;
const DISCRETE_SEEDS: u64 = 20;

type Outcome = Result<String, String>;

fn fixture(name: &str) -> MarketInstance {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    let (cfg, base) = MarketConfig::load(&path).expect("fixture parses");
    cfg.build(&base).expect("fixture builds")
}

fn mean_market(seed: u64) -> MeanEstimationMarket {
    MeanEstimationMarket::random(5, 10, 3, seed).unwrap()
}

fn discrete_market(seed: u64) -> RetrievalMarket {
    RetrievalMarket::random(10, 10, 1 + (seed % 2) as usize, seed).unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Audits of every rule on one instance, with the sweeps behind them.
struct Audited {
    label: String,
    sharing_at_truth: Vec<f64>,
    by_rule: Vec<(AuditVerdict, RuleSweeps)>,
}

impl Audited {
    fn rule(&self, rule: PaymentRule) -> &(AuditVerdict, RuleSweeps) {
        self.by_rule.iter().find(|(v, _)| v.rule == rule).unwrap()
    }
}

fn audit_all<M: Market>(label: String, market: &M, seed: u64) -> Audited {
    let sharing_at_truth = {
        let w = market.solve(market.true_costs()).unwrap();
        (0..market.players().sellers())
            .map(|j| market.sharing(j, &w))
            .collect()
    };
    let by_rule = mechanism_audit_with_sweeps(
        market,
        &PaymentRule::ALL,
        &AuditOptions::default(),
        Some(seed),
    )
    .unwrap();
    Audited {
        label,
        sharing_at_truth,
        by_rule,
    }
}

// Criterion 1

fn worked_examples() -> Outcome {
    let start = Instant::now();
    let tol = 1e-9;
    let ex1 = fixture("top1_low_cost.json");
    let ex2 = fixture("top1_high_cost.json");
    let ex3 = fixture("top2_pairs.json");
    let loo1 = loo_payment(&ex1, ex1.true_costs()).map_err(|e| e.to_string())?;
    ensure(close(loo1.seller_payments[0], 0.2, tol), || {
        format!("top-1 low-cost LOO {:?}", loo1.seller_payments)
    })?;
    let loo2 = loo_payment(&ex2, ex2.true_costs()).map_err(|e| e.to_string())?;
    ensure(close(loo2.seller_payments[0], 0.2, tol), || {
        format!("top-1 high-cost LOO {:?}", loo2.seller_payments)
    })?;
    let c = ex3.true_costs();
    let loo3 = loo_payment(&ex3, c)
        .map_err(|e| e.to_string())?
        .seller_payments;
    let vcg3 = vcg_payment(&ex3, c)
        .map_err(|e| e.to_string())?
        .seller_payments;
    let mye3 = myerson_discrete(&ex3, c)
        .map_err(|e| e.to_string())?
        .seller_payments;
    let crit: Vec<f64> = (0..2)
        .map(|j| critical_cost(&ex3, j, c).unwrap().value.unwrap_or(f64::NAN))
        .collect();
    for (name, got, want) in [
        ("LOO", &loo3, [0.2, 0.1]),
        ("VCG", &vcg3, [0.3, 0.2]),
        ("Myerson", &mye3, [0.3, 0.2]),
        ("critical cost", &crit, [0.3, 0.2]),
    ] {
        ensure(
            close(got[0], want[0], tol) && close(got[1], want[1], tol),
            || format!("top-2 pairs {name} {got:?}, expected {want:?}"),
        )?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "LOO (0.2) (0.2) ({:.3}, {:.3}); VCG, Myerson, critical cost (0.3, 0.2) in {elapsed:.2?}",
        loo3[0], loo3[1]
    ))
}

// Criterion 2

fn closed_form() -> Outcome {
    let start = Instant::now();
    let mut worst_entry: f64 = 0.0;
    let mut worst_sc: f64 = 0.0;
    for seed in 0..MEAN_SEEDS {
        let m = mean_market(seed);
        let c = m.true_costs();
        let closed = m.solve(c).map_err(|e| e.to_string())?;
        let numeric =
            solve_numeric(&m, c, &SolverSettings::default()).map_err(|e| e.to_string())?;
        let diff = (closed.matrix() - numeric.matrix()).amax();
        worst_entry = worst_entry.max(diff);
        ensure(diff <= 1e-6, || {
            format!("seed {seed}: closed form and gradient solver differ by {diff:e}")
        })?;

        // SC = sum_i [mu_i . mu_i - B_i (C + V + A)^-1 B_i^T], built from the raw means.
        let (b, s, d) = (
            m.buyer_means().len(),
            m.seller_means().len(),
            m.seller_means()[0].len(),
        );
        let mu_b = DMatrix::from_fn(b, d, |i, k| m.buyer_means()[i][k]);
        let mu_s = DMatrix::from_fn(s, d, |j, k| m.seller_means()[j][k]);
        let cross = &mu_b * mu_s.transpose();
        let mut system = &mu_s * mu_s.transpose();
        for j in 0..s {
            system[(j, j)] += m.seller_variances()[j] + c.get(j);
        }
        let inv = system.try_inverse().ok_or("singular system")?;
        let identity: f64 = (0..b)
            .map(|i| {
                let row: DVector<f64> = cross.row(i).transpose();
                mu_b.row(i).norm_squared() - (row.transpose() * &inv * &row)[(0, 0)]
            })
            .sum();
        let report =
            datamarket::allocation::social_welfare(&m, &closed, c).map_err(|e| e.to_string())?;
        let gap = (report.social_cost - identity).abs();
        worst_sc = worst_sc.max(gap);
        ensure(gap <= 1e-8, || {
            format!(
                "seed {seed}: SC {} vs quadratic identity {identity}",
                report.social_cost
            )
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "max entry gap {worst_entry:.1e} (<= 1e-6), max SC gap {worst_sc:.1e} (<= 1e-8) in {elapsed:.2?}"
    ))
}

// Criteria 3 and 4

struct Continuous {
    myerson: Vec<f64>,
    errors: Vec<f64>,
    vcg: Vec<f64>,
    upper: Vec<f64>,
}

fn continuous_payments() -> Result<(Vec<Continuous>, Duration), String> {
    let start = Instant::now();
    let options = PaymentOptions::default();
    let out = (0..MEAN_SEEDS)
        .map(|seed| {
            let m = mean_market(seed);
            let c = m.true_costs();
            let my = pay(&m, PaymentRule::Myerson, c, &options).map_err(|e| e.to_string())?;
            let vcg = vcg_payment(&m, c).map_err(|e| e.to_string())?;
            Ok(Continuous {
                errors: my
                    .error_estimates
                    .clone()
                    .unwrap_or_else(|| vec![0.0; my.seller_payments.len()]),
                myerson: my.seller_payments,
                vcg: vcg.seller_payments,
                upper: vcg_upper_bound(&m, c).map_err(|e| e.to_string())?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok((out, start.elapsed()))
}

fn equivalence(data: &[Continuous], elapsed: Duration) -> Outcome {
    let mut worst: f64 = 0.0;
    for (seed, p) in data.iter().enumerate() {
        for j in 0..p.vcg.len() {
            let diff = (p.myerson[j] - p.vcg[j]).abs();
            let allowed = (1e-4 * p.vcg[j].abs()).max(p.errors[j]);
            worst = worst.max(diff / p.vcg[j].abs().max(f64::MIN_POSITIVE));
            ensure(diff <= allowed, || {
                format!(
                    "seed {seed} seller {j}: myerson {} vcg {} (allowed {allowed:e})",
                    p.myerson[j], p.vcg[j]
                )
            })?;
        }
    }
    ensure(elapsed < Duration::from_secs(300), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "max relative gap {worst:.1e} over {} instances in {elapsed:.2?}",
        data.len()
    ))
}

fn ordering(data: &[Continuous]) -> Outcome {
    let mut checked = 0;
    for (seed, p) in data.iter().enumerate() {
        for j in 0..p.vcg.len() {
            let tol = 1e-4 * p.vcg[j].abs().max(p.upper[j].abs());
            ensure(
                p.myerson[j] <= p.vcg[j] + tol && p.vcg[j] <= p.upper[j] + tol,
                || {
                    format!(
                        "seed {seed} seller {j}: myerson {} vcg {} bound {}",
                        p.myerson[j], p.vcg[j], p.upper[j]
                    )
                },
            )?;
            checked += 1;
        }
    }
    Ok(format!(
        "myerson <= vcg <= upper bound on {checked} seller payments"
    ))
}

// Criterion 5

fn ic_ir(continuous: &[Audited], discrete: &[Audited]) -> Outcome {
    for a in continuous.iter().chain(discrete) {
        for rule in [PaymentRule::Myerson, PaymentRule::Vcg] {
            let (v, _) = a.rule(rule);
            for j in 0..v.true_costs.len() {
                ensure(v.truthful[j], || {
                    format!(
                        "{} {rule} seller {j}: best response {} vs cost {}",
                        a.label, v.best_responses[j], v.true_costs[j]
                    )
                })?;
                ensure(v.seller_utilities_at_truth[j] >= -1e-9, || {
                    format!(
                        "{} {rule} seller {j}: utility {}",
                        a.label, v.seller_utilities_at_truth[j]
                    )
                })?;
            }
        }
    }
    Ok(format!(
        "myerson and vcg truthful and IR on {} continuous and {} discrete instances",
        continuous.len(),
        discrete.len()
    ))
}

// Criterion 6

fn untruthful(continuous: &[Audited]) -> Outcome {
    let exhibit = |rule: PaymentRule| -> Option<(String, f64)> {
        continuous.iter().find_map(|a| {
            let (v, _) = a.rule(rule);
            let moved = v.truthful.iter().any(|t| !t);
            (moved && v.poa > 1.0).then(|| (a.label.clone(), v.poa))
        })
    };
    let loo = exhibit(PaymentRule::Loo).ok_or("no seed where LOO misreporting raises PoA")?;
    let shapley =
        exhibit(PaymentRule::Shapley).ok_or("no seed where Shapley misreporting raises PoA")?;
    let mut over = 0;
    for a in continuous {
        let (v, _) = a.rule(PaymentRule::Direct);
        for j in 0..v.true_costs.len() {
            if a.sharing_at_truth[j] > 0.0 {
                ensure(v.best_responses[j] > v.true_costs[j], || {
                    format!(
                        "{} direct seller {j}: best response {} <= cost {}",
                        a.label, v.best_responses[j], v.true_costs[j]
                    )
                })?;
                over += 1;
            }
        }
    }
    Ok(format!(
        "LOO at {} (PoA {:.4}), Shapley at {} (PoA {:.4}); direct over-reports for all {over} active sellers",
        loo.0, loo.1, shapley.0, shapley.1
    ))
}

// Criterion 7

fn monotone_sharing(all: &[&Audited]) -> Outcome {
    let mut sweeps = 0;
    for a in all {
        for (v, s) in &a.by_rule {
            for (j, records) in s.records.iter().enumerate() {
                ensure(records.len() == 101, || {
                    format!("{} seller {j}: {} grid points", a.label, records.len())
                })?;
                for w in records.windows(2) {
                    ensure(w[1].sharing <= w[0].sharing, || {
                        format!(
                            "{} {} seller {j}: f rises from {} to {} between {} and {}",
                            a.label,
                            v.rule,
                            w[0].sharing,
                            w[1].sharing,
                            w[0].reported_cost,
                            w[1].reported_cost
                        )
                    })?;
                }
                sweeps += 1;
            }
        }
    }
    Ok(format!("{sweeps} sweeps non-increasing in f_j"))
}

// Criterion 8

fn brute_force_best(scores: &[f64], costs: &CostVector, k: usize) -> (f64, Vec<bool>) {
    let n = scores.len();
    let mut best = (0.0, vec![false; n]);
    for mask in 1usize..1 << n {
        if mask.count_ones() as usize > k {
            continue;
        }
        let w: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| scores[i] - costs.get(i))
            .sum();
        if w > best.0 + 1e-12 {
            best = (w, (0..n).map(|i| mask >> i & 1 == 1).collect());
        }
    }
    best
}

/// Midpoint of the bracket where seller `j` leaves the selection on a
/// 10^4-step scan of `[0, MAX_SCORE]`; no selection can be worth more.
/// Best subset of the pool by direct oracle queries; untabulated subsets are not offered.
fn brute_force_joint(r: &RetrievalMarket) -> Vec<bool> {
    let pool = r.pool();
    let ids = r.document_ids();
    let mut best = (0.0, vec![false; r.corpus_size()]);
    for mask in 1usize..1 << pool.len() {
        let members: Vec<usize> = (0..pool.len())
            .filter(|p| mask >> p & 1 == 1)
            .map(|p| pool[p])
            .collect();
        if members.len() > r.budget() {
            continue;
        }
        let names: Vec<&str> = members.iter().map(|&d| ids[d].as_str()).collect();
        let Ok(score) = r.oracle().score_subset(&names) else {
            continue;
        };
        let w = score - r.baseline() - members.iter().map(|&d| r.true_costs().get(d)).sum::<f64>();
        if w > best.0 + 1e-12 {
            let mut sel = vec![false; r.corpus_size()];
            members.iter().for_each(|&d| sel[d] = true);
            best = (w, sel);
        }
    }
    best.1
}

fn scanned_threshold<M: Market>(market: &M, j: usize) -> Option<f64> {
    let c = market.true_costs();
    let steps = 10_000;
    let mut last = None;
    for s in 0..=steps {
        let u = MAX_SCORE * s as f64 / steps as f64;
        let w = market.solve(&c.with_cost(j, u)).unwrap();
        if market.sharing(j, &w) > 0.0 {
            last = Some(u);
        } else {
            return last.map(|l| l + 0.5 * MAX_SCORE / steps as f64);
        }
    }
    last
}

fn discrete_oracles() -> Outcome {
    let mut markets: Vec<(String, MarketInstance)> = (0..DISCRETE_SEEDS)
        .map(|s| {
            (
                format!("discrete seed {s}"),
                MarketInstance::Retrieval(discrete_market(s)),
            )
        })
        .collect();
    for f in [
        "top1_low_cost.json",
        "top1_high_cost.json",
        "top2_pairs.json",
        "ten_docs_low_cost.json",
        "ten_docs_high_cost.json",
    ] {
        markets.push((f.to_string(), fixture(f)));
    }
    let (mut solves, mut thresholds, mut worst) = (0, 0, 0.0f64);
    for (label, m) in &markets {
        let MarketInstance::Retrieval(r) = m else {
            unreachable!()
        };
        let c = r.true_costs();
        let sel = match r.valuation() {
            Valuation::Independent => {
                let w = solve_discrete(r.gains(), c, r.budget()).map_err(|e| e.to_string())?;
                let (_, sel) = brute_force_best(r.gains(), c, r.budget());
                ensure(w.selection() == sel, || {
                    format!("{label}: {:?} vs brute force {sel:?}", w.selection())
                })?;
                sel
            }
            Valuation::Joint => brute_force_joint(r),
        };
        ensure(m.solve(c).unwrap().selection() == sel, || {
            format!("{label}: market solve differs from brute force {sel:?}")
        })?;
        solves += 1;
        for j in 0..r.corpus_size() {
            let bisected = critical_cost(m, j, c).map_err(|e| e.to_string())?.value;
            let scanned = scanned_threshold(m, j);
            match (bisected, scanned) {
                (Some(b), Some(s)) => {
                    worst = worst.max((b - s).abs());
                    ensure((b - s).abs() <= 1e-3, || {
                        format!("{label} seller {j}: bisection {b} scan {s}")
                    })?;
                }
                (None, None) => {}
                other => {
                    return Err(format!(
                        "{label} seller {j}: bisection/scan disagree {other:?}"
                    ))
                }
            }
            thresholds += 1;
        }
    }
    Ok(format!(
        "{solves} selections match enumeration; {thresholds} thresholds match a 10^4-point scan (max gap {worst:.1e})"
    ))
}

// Criterion 9

fn redistribution() -> Outcome {
    let mut found = Vec::new();
    let mut tried = 0;
    for seed in 0..5_000u64 {
        if found.len() == 10 {
            break;
        }
        tried += 1;
        let buyers = 2 + (seed % 2) as usize;
        let sellers = 2 + (seed / 2 % 3) as usize;
        let m = MeanEstimationMarket::random(buyers, sellers, 3, seed).unwrap();
        let probe = buyer_probe(&m, m.true_costs()).map_err(|e| e.to_string())?;
        if matches!(probe, Probe::Subadditive | Probe::Additive) {
            found.push((seed, m));
        }
    }
    ensure(found.len() == 10, || {
        format!("only {} of {tried} seeds pass the probe", found.len())
    })?;
    let mut worst_gap: f64 = 0.0;
    let mut min_utility = f64::INFINITY;
    for (seed, m) in &found {
        let c = m.true_costs();
        for rule in [PaymentRule::Myerson, PaymentRule::Vcg] {
            let result = pay(m, rule, c, &PaymentOptions::default()).map_err(|e| e.to_string())?;
            let charges = redistribute(m, c, &result.seller_payments).map_err(|e| e.to_string())?;
            let eta = redistribution_shares(m, c).map_err(|e| e.to_string())?;
            for (j, p) in result.seller_payments.iter().enumerate() {
                let split: f64 = (0..eta.nrows()).map(|i| eta[(i, j)] * p).sum();
                worst_gap = worst_gap.max((split - p).abs());
                ensure((split - p).abs() <= 1e-12, || {
                    format!("seed {seed} {rule} seller {j}: split {split} vs {p}")
                })?;
            }
            let charged = result.with_buyer_charges(charges);
            let gap = charged.budget_gap.unwrap();
            worst_gap = worst_gap.max(gap.abs());
            ensure(gap.abs() <= 1e-12, || {
                format!("seed {seed} {rule}: budget gap {gap:e}")
            })?;
            for (i, u) in charged.buyer_utilities.iter().enumerate() {
                min_utility = min_utility.min(*u);
                ensure(*u >= -1e-9, || {
                    format!("seed {seed} {rule} buyer {i}: utility {u}")
                })?;
            }
        }
    }
    let seeds: Vec<u64> = found.iter().map(|(s, _)| *s).collect();
    Ok(format!(
        "seeds {seeds:?} ({tried} tried): min buyer utility {min_utility:.3e}, max budget gap {worst_gap:.1e}"
    ))
}

// Criterion 10

fn regimes() -> Outcome {
    let high = fixture("ten_docs_high_cost.json");
    let low = fixture("ten_docs_low_cost.json");
    let high_audit = audit_all("ten docs high cost".into(), &high, 0);
    let low_audit = audit_all("ten docs low cost".into(), &low, 0);
    for rule in [PaymentRule::Loo, PaymentRule::Shapley] {
        let (v, _) = high_audit.rule(rule);
        for j in 0..v.true_costs.len() {
            if high_audit.sharing_at_truth[j] > 0.0 {
                ensure(
                    v.best_responses[j] > v.true_costs[j] && !v.truthful[j],
                    || {
                        format!(
                            "high cost {rule} seller {j}: best response {} vs cost {}",
                            v.best_responses[j], v.true_costs[j]
                        )
                    },
                )?;
            }
        }
        ensure(v.served_at_best_response.iter().all(|s| !s), || {
            format!(
                "high cost {rule}: still served at best response {:?}",
                v.served_at_best_response
            )
        })?;
        let (lv, _) = low_audit.rule(rule);
        ensure(lv.truthful.iter().all(|t| *t), || {
            format!("low cost {rule}: untruthful {:?}", lv.best_responses)
        })?;
        ensure(lv.payments_at_truth.iter().any(|p| *p > 0.0), || {
            format!("low cost {rule}: no payments")
        })?;
    }
    let (hv, _) = high_audit.rule(PaymentRule::Loo);
    let (lv, _) = low_audit.rule(PaymentRule::Loo);
    Ok(format!(
        "high cost: LOO payment {:.2} < cost {:.2}, nothing served at best responses; low cost: truthful, LOO payment {:.2}",
        hv.payments_at_truth[0], hv.true_costs[0], lv.payments_at_truth[0]
    ))
}

fn report(number: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let took = start.elapsed();
    match outcome {
        Ok(detail) => {
            println!("PASS criterion {number:>2} {name}: {detail} [{took:.2?}]");
            true
        }
        Err(why) => {
            println!("FAIL criterion {number:>2} {name}: {why} [{took:.2?}]");
            false
        }
    }
}

fn main() {
    let mut ok = Vec::new();
    ok.push(report(1, "worked retrieval examples", worked_examples));
    ok.push(report(2, "closed-form allocation", closed_form));

    let payments = continuous_payments();
    let (data, elapsed) = match &payments {
        Ok((d, e)) => (Some(d), *e),
        Err(_) => (None, Duration::ZERO),
    };
    ok.push(report(
        3,
        "myerson equals vcg when unconstrained",
        || match data {
            Some(d) => equivalence(d, elapsed),
            None => Err(payments.as_ref().err().unwrap().clone()),
        },
    ));
    ok.push(report(4, "myerson <= vcg <= upper bound", || match data {
        Some(d) => ordering(d),
        None => Err(payments.as_ref().err().unwrap().clone()),
    }));

    let continuous: Vec<Audited> = (0..MEAN_SEEDS)
        .map(|s| audit_all(format!("mean seed {s}"), &mean_market(s), s))
        .collect();
    let discrete: Vec<Audited> = (0..DISCRETE_SEEDS)
        .map(|s| audit_all(format!("discrete seed {s}"), &discrete_market(s), s))
        .collect();
    ok.push(report(5, "IC and IR of myerson and vcg", || {
        ic_ir(&continuous, &discrete)
    }));
    ok.push(report(6, "untruthful conventional rules", || {
        untruthful(&continuous)
    }));
    let all: Vec<&Audited> = continuous.iter().chain(&discrete).collect();
    ok.push(report(7, "sharing monotone in own report", || {
        monotone_sharing(&all)
    }));
    ok.push(report(
        8,
        "discrete solver and thresholds vs brute force",
        discrete_oracles,
    ));
    ok.push(report(9, "buyer redistribution", redistribution));
    ok.push(report(10, "retrieval cost regimes", regimes));

    let passed = ok.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", ok.len());
    if passed != ok.len() {
        std::process::exit(1);
    }
}
