//! Concept clarity: ask the model to define a concept it was shown, ask a
//! judge whether the definition is right, and score the judge's YES/NO
//! log-probabilities.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError, ModelRole, YesNoLogprobs};
use crate::model::EntityRecord;
use crate::prompt::{render_clarity_judge, render_clarity_probe, InfoConfiguration, PromptBundle};
use crate::tokenizer::TokenId;

/// Definitions drawn per rendered prompt.
pub const DEFAULT_PROBES_PER_BUNDLE: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClarityError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two points, got {0}")]
    TooShort(usize),
    #[error("series is constant or non-finite")]
    DegenerateSeries,
}

/// Two-way softmax of the YES and NO log-probabilities.
pub fn clarity_score(lp: &YesNoLogprobs) -> f64 {
    let d = lp.log_p_no - lp.log_p_yes;
    if d >= 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

/// Pearson product-moment correlation.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, ClarityError> {
    if xs.len() != ys.len() {
        return Err(ClarityError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(ClarityError::TooShort(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) || !sxy.is_finite() {
        return Err(ClarityError::DegenerateSeries);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One concept to probe: `(bundle index, concept token, concept name)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeTarget {
    pub bundle: usize,
    pub concept: TokenId,
    pub name: String,
}

/// Up to `per_bundle` concepts per bundle, uniformly without replacement.
pub fn sample_probes(bundles: &[PromptBundle], per_bundle: usize, seed: u64) -> Vec<ProbeTarget> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (b, bundle) in bundles.iter().enumerate() {
        let n = bundle.concept_tokens.len();
        let mut picked = sample(&mut rng, n, per_bundle.min(n)).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| ProbeTarget {
            bundle: b,
            concept: bundle.concept_tokens[i],
            name: bundle.concept_names[i].clone(),
        }));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarityProbe {
    pub prompt_config: InfoConfiguration,
    pub concept: TokenId,
    pub concept_name: String,
    pub generated_definition: String,
    pub logprobs: YesNoLogprobs,
    pub score: f64,
}

/// What to do with a judge reply that is neither YES nor NO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnjudgeablePolicy {
    #[default]
    Exclude,
    /// Count the probe with score 0.5.
    Half,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationReport {
    pub config: InfoConfiguration,
    pub probe_count: usize,
    /// `None` when no probe was scored.
    pub mean_score: Option<f64>,
    pub excluded: usize,
    /// Set when a gateway failure stopped the run early.
    pub incomplete: Option<String>,
    pub probes: Vec<ClarityProbe>,
}

/// Input for one probe.
pub struct ProbeInput<'a> {
    pub bundle: &'a PromptBundle,
    pub concept: TokenId,
    pub name: String,
    pub reference: &'a EntityRecord,
}

enum ProbeOutcome {
    Scored(ClarityProbe),
    Unjudgeable(ClarityProbe),
    Failed(String),
}

fn run_probe(input: &ProbeInput<'_>, gateway: &Gateway) -> ProbeOutcome {
    let definition = match gateway.ask(ModelRole::Executor, &render_clarity_probe(input.bundle, &input.name)) {
        Ok(d) => d.trim().to_string(),
        Err(e) => return ProbeOutcome::Failed(format!("definition for {}: {e}", input.name)),
    };
    let judge = render_clarity_judge(&input.name, &definition, input.reference);
    let probe = |logprobs: YesNoLogprobs, score| ClarityProbe {
        prompt_config: input.bundle.config,
        concept: input.concept,
        concept_name: input.name.clone(),
        generated_definition: definition.clone(),
        logprobs,
        score,
    };
    match gateway.yes_no_logprobs(&judge) {
        Ok(lp) => ProbeOutcome::Scored(probe(lp, clarity_score(&lp))),
        Err(GatewayError::Unjudgeable(_)) => {
            let floor = gateway.config.logprob_floor;
            ProbeOutcome::Unjudgeable(probe(YesNoLogprobs { log_p_yes: floor, log_p_no: floor }, 0.5))
        }
        Err(e) => ProbeOutcome::Failed(format!("judge for {}: {e}", input.name)),
    }
}

/// Probe every input and average the scores. Up to `workers` probes run at
/// once; results keep input order.
pub fn run_configuration(
    config: InfoConfiguration,
    inputs: &[ProbeInput<'_>],
    gateway: &Gateway,
    policy: UnjudgeablePolicy,
    workers: usize,
) -> ConfigurationReport {
    let slots: Vec<Mutex<Option<ProbeOutcome>>> = inputs.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    let stop = std::sync::atomic::AtomicBool::new(false);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(inputs.len().max(1)) {
            scope.spawn(|| loop {
                if stop.load(std::sync::atomic::Ordering::SeqCst) {
                    return;
                }
                let i = {
                    let mut n = next.lock().expect("queue poisoned");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(input) = inputs.get(i) else { return };
                let outcome = run_probe(input, gateway);
                if matches!(outcome, ProbeOutcome::Failed(_)) {
                    stop.store(true, std::sync::atomic::Ordering::SeqCst);
                }
                *slots[i].lock().expect("slot poisoned") = Some(outcome);
            });
        }
    });

    let mut report = ConfigurationReport {
        config,
        probe_count: 0,
        mean_score: None,
        excluded: 0,
        incomplete: None,
        probes: Vec::new(),
    };
    for slot in slots {
        match slot.into_inner().expect("slot poisoned") {
            Some(ProbeOutcome::Scored(p)) => report.probes.push(p),
            Some(ProbeOutcome::Unjudgeable(p)) => match policy {
                UnjudgeablePolicy::Exclude => report.excluded += 1,
                UnjudgeablePolicy::Half => report.probes.push(p),
            },
            Some(ProbeOutcome::Failed(e)) => {
                report.incomplete.get_or_insert(e);
            }
            None => {}
        }
    }
    report.probe_count = report.probes.len();
    if report.probe_count > 0 {
        report.mean_score = Some(report.probes.iter().map(|p| p.score).sum::<f64>() / report.probe_count as f64);
    }
    report
}

/// Table headings grouping the configurations.
pub fn configuration_group(config: InfoConfiguration) -> &'static str {
    use InfoConfiguration::*;
    match config {
        NoContext | QualifiedName => "Control Conditions",
        EmptyReference => "Empty Information",
        OriginOnly | InternalOnly | IntuitionOnly => "Single Information Type",
        OriginInternal | OriginIntuition | InternalIntuition | Complete => "Combined Information",
        ChineseTranslation => "Language Variation",
    }
}

fn fmt_mean(mean: Option<f64>) -> String {
    mean.map_or("n/a".to_string(), |m| format!("{m:.3}"))
}

/// Human-readable table, one block per configuration group.
pub fn render_table(reports: &[ConfigurationReport]) -> String {
    let by_config: BTreeMap<usize, &ConfigurationReport> = reports
        .iter()
        .filter_map(|r| InfoConfiguration::ALL.iter().position(|c| *c == r.config).map(|i| (i, r)))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "{:<28} {:>7} {:>7} {:>9}", "Information Configuration", "Clarity", "Probes", "Excluded");
    let mut group = "";
    for report in by_config.values() {
        let g = configuration_group(report.config);
        if g != group {
            let _ = writeln!(out, "{g}");
            group = g;
        }
        let flag = if report.incomplete.is_some() { " (incomplete)" } else { "" };
        let _ = writeln!(
            out,
            "  {:<26} {:>7} {:>7} {:>9}{flag}",
            report.config.label(),
            fmt_mean(report.mean_score),
            report.probe_count,
            report.excluded
        );
    }
    out
}

/// Tab-separated rows: config, probe_count, mean, excluded_count.
pub fn render_tsv(reports: &[ConfigurationReport]) -> String {
    let mut out = String::from("config\tprobe_count\tmean\texcluded_count\n");
    for r in reports {
        let mean = r.mean_score.map_or("NA".to_string(), |m| format!("{m}"));
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.config.slug(), r.probe_count, mean, r.excluded);
    }
    out
}

/// Parse rows written by [`render_tsv`] into `(config, mean)` pairs,
/// skipping rows without a mean.
pub fn parse_tsv(text: &str) -> Result<Vec<(InfoConfiguration, f64)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(format!("line {}: expected at least 3 columns", i + 1));
        }
        let config: InfoConfiguration = cols[0].parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        if cols[2] == "NA" {
            continue;
        }
        let mean: f64 = cols[2].parse().map_err(|e| format!("line {}: bad mean: {e}", i + 1))?;
        out.push((config, mean));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::gateway::{ScriptEntry, ScriptedModel};
    use crate::model::EntityKind;
    use crate::prompt::markers;

    fn lp(y: f64, n: f64) -> YesNoLogprobs {
        YesNoLogprobs { log_p_yes: y, log_p_no: n }
    }

    #[test]
    fn score_examples() {
        assert_eq!(clarity_score(&lp(-3.0, -3.0)), 0.5);
        assert!((clarity_score(&lp(0.0, -20.0)) - 0.999_999_997_938_846_4).abs() < 1e-15);
        assert!((clarity_score(&lp(-1.0, -2.0)) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!(clarity_score(&lp(-1000.0, 0.0)) >= 0.0);
    }

    #[test]
    fn pearson_examples() {
        let x = [0.445, 0.581, 0.712, 0.798, 0.823];
        let y = [21.0, 25.0, 38.0, 42.0, 45.0];
        assert!((pearson_r(&x, &y).unwrap() - 0.98).abs() <= 0.01);
        let lin: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson_r(&x, &lin).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson_r(&x, &[1.0; 5]), Err(ClarityError::DegenerateSeries));
        assert_eq!(pearson_r(&[1.0], &[1.0]), Err(ClarityError::TooShort(1)));
        assert_eq!(pearson_r(&[1.0, 2.0], &[1.0]), Err(ClarityError::LengthMismatch(2, 1)));
    }

    fn bundle(n: usize) -> PromptBundle {
        PromptBundle {
            rendered: String::new(),
            sections_present: Default::default(),
            config: InfoConfiguration::Complete,
            concept_tokens: (0..n as u32).map(TokenId).collect(),
            concept_names: (0..n).map(|i| format!("c{i}")).collect(),
        }
    }

    #[test]
    fn sampling() {
        let bundles = [bundle(2), bundle(10), bundle(0)];
        let picks = sample_probes(&bundles, 3, 7);
        assert_eq!(picks.iter().filter(|p| p.bundle == 0).count(), 2);
        assert_eq!(picks.iter().filter(|p| p.bundle == 1).count(), 3);
        assert_eq!(picks.len(), 5);
        assert_eq!(picks, sample_probes(&bundles, 3, 7));
    }

    fn fixture_run(scores: &[f64], policy: UnjudgeablePolicy) -> ConfigurationReport {
        let rec = EntityRecord::new("M.c", EntityKind::Definition, "Definition c := 0.", "0");
        let b = bundle(1);
        let mut entries = vec![ScriptEntry::reply("Definition c := 0.").when(markers::PROBE).repeating()];
        for &s in scores {
            let e = if s.is_nan() {
                ScriptEntry::judge(None, None).when(markers::JUDGE)
            } else {
                // log-odds chosen so the softmax returns s
                ScriptEntry::judge(Some(s.ln()), Some((1.0 - s).ln())).when(markers::JUDGE)
            };
            entries.push(e);
        }
        let gw = Gateway::single(Arc::new(ScriptedModel::new(entries)));
        let inputs: Vec<ProbeInput> = scores
            .iter()
            .map(|_| ProbeInput { bundle: &b, concept: TokenId(0), name: "M.c".into(), reference: &rec })
            .collect();
        run_configuration(InfoConfiguration::NoContext, &inputs, &gw, policy, 1)
    }

    #[test]
    fn configuration_mean() {
        let r = fixture_run(&[0.4, 0.4, 0.5, 0.48], UnjudgeablePolicy::Exclude);
        assert_eq!(r.probe_count, 4);
        assert!((r.mean_score.unwrap() - 0.445).abs() < 1e-12);
        assert!(r.incomplete.is_none());
    }

    #[test]
    fn empty_and_unjudgeable() {
        let r = fixture_run(&[], UnjudgeablePolicy::Exclude);
        assert_eq!((r.probe_count, r.mean_score), (0, None));
        let r = fixture_run(&[f64::NAN, f64::NAN], UnjudgeablePolicy::Exclude);
        assert_eq!((r.probe_count, r.excluded, r.mean_score), (0, 2, None));
        let r = fixture_run(&[f64::NAN, 0.9], UnjudgeablePolicy::Half);
        assert!((r.mean_score.unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn gateway_failure_marks_incomplete() {
        let rec = EntityRecord::new("M.c", EntityKind::Definition, "d", "i");
        let b = bundle(1);
        let gw = Gateway::single(Arc::new(ScriptedModel::new(vec![])));
        let inputs = [ProbeInput { bundle: &b, concept: TokenId(0), name: "M.c".into(), reference: &rec }];
        let r = run_configuration(InfoConfiguration::Complete, &inputs, &gw, UnjudgeablePolicy::Exclude, 2);
        assert!(r.incomplete.is_some());
    }

    #[test]
    fn table_and_tsv() {
        let mk = |config, mean| ConfigurationReport {
            config,
            probe_count: 3,
            mean_score: mean,
            excluded: 0,
            incomplete: None,
            probes: vec![],
        };
        let reports = [
            mk(InfoConfiguration::Complete, Some(0.823)),
            mk(InfoConfiguration::NoContext, Some(0.445)),
            mk(InfoConfiguration::EmptyReference, None),
        ];
        let table = render_table(&reports);
        assert!(table.find("Control Conditions").unwrap() < table.find("Combined Information").unwrap());
        assert!(table.contains("0.823") && table.contains("n/a"));
        let parsed = parse_tsv(&render_tsv(&reports)).unwrap();
        assert_eq!(parsed, vec![(InfoConfiguration::Complete, 0.823), (InfoConfiguration::NoContext, 0.445)]);
    }

    fn oracle(y: f64, n: f64) -> f64 {
        y.exp() / (y.exp() + n.exp())
    }

    proptest! {
        #[test]
        fn score_matches_direct_formula(y in -30.0f64..0.0, n in -30.0f64..0.0) {
            prop_assert!((clarity_score(&lp(y, n)) - oracle(y, n)).abs() < 1e-12);
            prop_assert!((clarity_score(&lp(y, n)) + clarity_score(&lp(n, y)) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn score_is_monotone(y in -30.0f64..-0.01, n in -30.0f64..0.0, dy in 0.001f64..5.0) {
            prop_assert!(clarity_score(&lp(y + dy, n)) > clarity_score(&lp(y, n)) || clarity_score(&lp(y, n)) == 1.0);
        }

        #[test]
        fn pearson_affine_invariance(
            pts in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..20),
            a in 0.1f64..10.0, b in -50.0f64..50.0,
        ) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Ok(r) = pearson_r(&xs, &ys) {
                let xs2: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                prop_assert!((pearson_r(&xs2, &ys).unwrap() - r).abs() < 1e-12);
                // covariance-ratio oracle
                let n = xs.len() as f64;
                let cov = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n
                    - (xs.iter().sum::<f64>() / n) * (ys.iter().sum::<f64>() / n);
                let sd = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / n - (v.iter().sum::<f64>() / n).powi(2)).sqrt();
                prop_assert!((cov / (sd(&xs) * sd(&ys)) - r).abs() < 1e-6);
            }
        }
    }
}
