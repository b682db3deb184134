use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ccr_core::builder::build_study;
use ccr_core::ingest::read_submissions_jsonl;
use ccr_core::io;
use ccr_core::model::{ScaleKind, StudyConfig, StudyDefinition};
use ccr_core::report::{run_report, ReportInputs};
use ccr_core::scoring::{correct_vote, score_conditions, score_stimuli, CorrectedVote, Orientation};
use ccr_core::screening::{screen_submission, screening_summary, ScreeningKeys, ScreeningSummary};
use ccr_core::simulator::{run_replication_experiment, RaterModel};
use ccr_core::stats::{
    align_tables, bonferroni_pairwise, compare_columns, conclusion_agreement, delta_dimension_correlation,
    rank_order_delta, replication_summary, two_way_anova, SignificanceMatrix,
};
use log::info;
use serde_json::{json, Value};

use crate::{Cli, Command, Orient, ReportArgs, ScoreArgs, ScreenArgs, SimulateArgs, StatsCommand};

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name(path))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

/// Writes to `--out` or, when absent, to stdout.
fn emit(out: Option<&PathBuf>, contents: &str) -> Result<()> {
    match out {
        Some(p) => write(p, contents),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    let dir = cli.out.as_deref().ok_or("this subcommand needs --out DIR")?;
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    Ok(dir)
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn load_study(cli: &Cli, path: &Path) -> Result<StudyDefinition> {
    let mut study: StudyDefinition = serde_json::from_str(&read(path)?).map_err(|e| format!("{}: {e}", name(path)))?;
    if let Some(config) = &cli.config {
        study.config = serde_json::from_str(&read(config)?).map_err(|e| format!("{}: {e}", name(config)))?;
    }
    study.validate().map_err(|e| format!("{}: {e}", name(path)))?;
    Ok(study)
}

fn load_config(cli: &Cli) -> Result<StudyConfig> {
    match &cli.config {
        Some(p) => Ok(serde_json::from_str(&read(p)?).map_err(|e| format!("{}: {e}", name(p)))?),
        None => Ok(StudyConfig::default()),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Build { study } => build(cli, study),
        Command::Screen(args) => screen(cli, args),
        Command::Score(args) => score(cli, args),
        Command::Stats(cmd) => stats(cli, cmd),
        Command::Simulate(args) => simulate(cli, args),
        Command::Report(args) => report(cli, args),
    }
}

fn build(cli: &Cli, study_path: &Path) -> Result<()> {
    let study = load_study(cli, study_path)?;
    let out = build_study(&study, cli.seed.unwrap_or(study.config.seed))?;
    let dir = out_dir(cli)?;
    write(&dir.join("worker.csv"), &out.manifest.worker_csv()?)?;
    write(&dir.join("answer_key.csv"), &out.manifest.key_csv()?)?;
    write(
        &dir.join("training.csv"),
        &io::write_table(&out.training, "item_index,clip_first_url,clip_second_url,is_gold,expected_answer")?,
    )?;
    write(&dir.join("worker_manifest.json"), &pretty(&out.worker_json)?)?;
    info!("{} sections, {} items", out.sections.len(), out.manifest.worker.len());
    Ok(())
}

fn screen(cli: &Cli, args: &ScreenArgs) -> Result<()> {
    let study = load_study(cli, &args.study)?;
    let key = io::read_answer_key(&name(&args.answer_key), &read(&args.answer_key)?)?;
    let qual = io::read_qualification_keys(&name(&args.keys), &read(&args.keys)?)?;
    let keys = ScreeningKeys::from_rows(&qual, &key, &study.config)?;
    let subs = read_submissions_jsonl(&read(&args.subs)?, &key).map_err(|e| format!("{}: {e}", name(&args.subs)))?;
    let outcomes = subs
        .iter()
        .map(|s| screen_submission(s, &keys, &study.config))
        .collect::<ccr_core::Result<Vec<_>>>()?;
    emit(cli.out.as_ref(), &io::write_screened(&outcomes)?)?;
    if let Some(p) = &args.votes_out {
        let condition_of = |t: &str| keys.trials.get(t).map(|k| k.condition_id.clone());
        write(p, &io::write_votes(&io::vote_rows(&subs, condition_of)?)?)?;
    }
    let summary = screening_summary(&outcomes, &subs, &keys)?;
    info!("accepted {} of {}", summary.accepted, summary.total);
    if let Some(p) = &args.summary_out {
        write(p, &pretty(&summary)?)?;
    }
    Ok(())
}

fn score(cli: &Cli, args: &ScoreArgs) -> Result<()> {
    let config = load_config(cli)?;
    let screened = io::read_screened(&name(&args.screened), &read(&args.screened)?)?;
    let accepted: BTreeSet<(String, String)> = screened
        .into_iter()
        .filter(|o| o.accepted)
        .map(|o| (o.worker_id, o.assignment_id))
        .collect();
    let votes = io::read_votes(&name(&args.votes), &read(&args.votes)?)?;
    let mut corrected = Vec::new();
    for v in votes {
        if !accepted.contains(&(v.worker_id.clone(), v.assignment_id.clone())) {
            continue;
        }
        let value = match config.scale.kind() {
            ScaleKind::Ccr => correct_vote(v.raw_rating, v.order)
                .map_err(|e| format!("{}: trial {}: {e}", name(&args.votes), v.trial_id))?,
            ScaleKind::Acr => v.raw_rating,
        };
        corrected.push(CorrectedVote {
            trial_id: v.trial_id,
            condition_id: v.condition_id,
            value,
        });
    }
    if corrected.is_empty() {
        return Err("no votes from accepted submissions".into());
    }
    let orientation = match args.orient {
        Orient::Raw => Orientation::Raw,
        Orient::Degradation => Orientation::Degradation,
    };
    let scores: Vec<_> = score_conditions(&corrected).iter().map(|s| orientation.apply(s)).collect();
    emit(cli.out.as_ref(), &io::write_scores(&scores)?)?;
    if let Some(p) = &args.stimulus_out {
        write(p, &io::write_table(&score_stimuli(&corrected), "trial_id,condition_id,n,mean,sd,ci95")?)?;
    }
    Ok(())
}

/// Writes `<stem>.json` and `<stem>.csv` into `--out`, or prints the JSON.
fn emit_stats(cli: &Cli, stem: &str, report: &Value, csv: &str) -> Result<()> {
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            write(&dir.join(format!("{stem}.json")), &pretty(report)?)?;
            write(&dir.join(format!("{stem}.csv")), csv)
        }
        None => emit(None, &pretty(report)?),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stats(cli: &Cli, cmd: &StatsCommand) -> Result<()> {
    match cmd {
        StatsCommand::Compare { a, b } => {
            let ta = io::read_condition_values(&name(a), &read(a)?, "mean")?;
            let tb = io::read_condition_values(&name(b), &read(b)?, "mean")?;
            let (_, cols) = align_tables(&[&ta, &tb])?;
            let c = compare_columns(&stem(a), &cols[0], &stem(b), &cols[1])?;
            let csv = format!(
                "a,b,n,pearson,spearman,rmse,slope,intercept,rmse_after\n{},{},{},{},{},{},{},{},{}\n",
                c.a, c.b, c.n, c.pearson, c.spearman, c.rmse, c.map_b_to_a.slope, c.map_b_to_a.intercept, c.map_b_to_a.rmse_after
            );
            emit_stats(cli, "compare", &json!(c), &csv)
        }
        StatsCommand::Icc { runs } => {
            let tables = runs
                .iter()
                .map(|p| Ok(io::read_condition_values(&name(p), &read(p)?, "mean")?))
                .collect::<Result<Vec<_>>>()?;
            let names: Vec<String> = runs.iter().map(|p| stem(p)).collect();
            let refs: Vec<_> = tables.iter().collect();
            let s = replication_summary(&names, &refs, None)?;
            let mut csv = String::from("a,b,n,pearson,spearman,rmse\n");
            for p in &s.pairs {
                csv.push_str(&format!("{},{},{},{},{},{}\n", p.a, p.b, p.n, p.pearson, p.spearman, p.rmse));
            }
            emit_stats(cli, "icc", &json!(s), &csv)
        }
        StatsCommand::Anova { votes, study, factor_a, factor_b, screened, alpha } => {
            let study = load_study(cli, study)?;
            let accepted: Option<BTreeSet<(String, String)>> = match screened {
                Some(p) => Some(
                    io::read_screened(&name(p), &read(p)?)?
                        .into_iter()
                        .filter(|o| o.accepted)
                        .map(|o| (o.worker_id, o.assignment_id))
                        .collect(),
                ),
                None => None,
            };
            let tag = |cond: &str, factor: &str| -> Result<String> {
                let c = study.condition(cond).ok_or_else(|| format!("unknown condition {cond}"))?;
                Ok(c.factor_tags
                    .get(factor)
                    .cloned()
                    .ok_or_else(|| format!("condition {cond} has no level for factor {factor}"))?)
            };
            let mut obs = Vec::new();
            let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for v in io::read_votes(&name(votes), &read(votes)?)? {
                if accepted
                    .as_ref()
                    .is_some_and(|a| !a.contains(&(v.worker_id.clone(), v.assignment_id.clone())))
                {
                    continue;
                }
                let value = f64::from(match study.config.scale.kind() {
                    ScaleKind::Ccr => correct_vote(v.raw_rating, v.order)?,
                    ScaleKind::Acr => v.raw_rating,
                });
                let (la, lb) = (tag(&v.condition_id, factor_a)?, tag(&v.condition_id, factor_b)?);
                groups.entry(lb.clone()).or_default().push(value);
                obs.push((la, lb, value));
            }
            let table = two_way_anova(&obs)?;
            let pairwise = bonferroni_pairwise(&groups, *alpha)?;
            let mut csv = String::from("effect,ss,df,ms,f,p\n");
            for r in &table.rows {
                csv.push_str(&format!("{:?},{},{},{},{},{}\n", r.effect, r.ss, r.df, r.ms, opt(r.f), opt(r.p)));
            }
            let report = json!({
                "factor_a": factor_a,
                "factor_b": factor_b,
                "anova": table,
                "pairwise": pairwise,
            });
            emit_stats(cli, "anova", &report, &csv)
        }
        StatsCommand::Rankdelta { a, b, dims, dim_column } => {
            let ta = io::read_condition_values(&name(a), &read(a)?, "mean")?;
            let tb = io::read_condition_values(&name(b), &read(b)?, "mean")?;
            let deltas = rank_order_delta(&ta, &tb)?;
            let mut csv = String::from("condition_id,rank_a,rank_b,delta\n");
            for (id, d) in &deltas {
                csv.push_str(&format!("{id},{},{},{}\n", d.rank_a, d.rank_b, d.delta));
            }
            let correlation = match dims {
                Some(p) => {
                    let scores = io::read_condition_values(&name(p), &read(p)?, dim_column)?;
                    let d: BTreeMap<String, f64> = deltas.iter().map(|(k, v)| (k.clone(), v.delta)).collect();
                    Some(delta_dimension_correlation(&d, &scores)?)
                }
                None => None,
            };
            emit_stats(cli, "rankdelta", &json!({ "deltas": deltas, "dimension_correlation": correlation }), &csv)
        }
        StatsCommand::Agree { runs } => {
            let matrices = runs
                .iter()
                .map(|p| {
                    let v: Value = serde_json::from_str(&read(p)?)?;
                    let m = v.get("pairwise").cloned().unwrap_or(v);
                    serde_json::from_value::<SignificanceMatrix>(m)
                        .map_err(|e| format!("{}: {e}", name(p)).into())
                })
                .collect::<Result<Vec<_>>>()?;
            let agreement = conclusion_agreement(&matrices)?;
            let pairs = matrices[0].comparisons();
            let csv = format!("runs,pairs,agreement\n{},{pairs},{agreement}\n", runs.len());
            emit_stats(cli, "agree", &json!({ "runs": runs.len(), "pairs": pairs, "agreement": agreement }), &csv)
        }
    }
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let truth = io::read_condition_values(&name(&args.true_scores), &read(&args.true_scores)?, "score")?;
    let mut models = vec![RaterModel::ccr(args.sigma_b, args.sigma_v); args.runs];
    if let Some(last) = models.last_mut() {
        last.offset = args.last_offset;
    }
    let exp = run_replication_experiment(&truth, &models, args.raters, args.votes, cli.seed.unwrap_or(0))?;
    let dir = out_dir(cli)?;
    for run in &exp.runs {
        let rows: Vec<io::VoteRow> = run
            .votes
            .iter()
            .map(|v| io::VoteRow {
                worker_id: format!("{}-r{:03}", run.name, v.rater),
                assignment_id: run.name.clone(),
                trial_id: v.condition_id.clone(),
                condition_id: v.condition_id.clone(),
                raw_rating: v.value,
                order: Some(ccr_core::model::PresentationOrder::ReferenceFirst),
            })
            .collect();
        write(&dir.join(format!("{}_votes.csv", run.name)), &io::write_votes(&rows)?)?;
        write(&dir.join(format!("{}_cmos.csv", run.name)), &io::write_scores(&run.scores)?)?;
    }
    let report = json!({
        "seed": cli.seed.unwrap_or(0),
        "raters": args.raters,
        "votes_per_condition": args.votes,
        "runs": exp.runs.iter().map(|r| json!({"name": r.name, "seed": r.seed, "model": r.model})).collect::<Vec<_>>(),
        "summary": exp.summary,
    });
    write(&dir.join("replication.json"), &pretty(&report)?)
}

fn report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let runs = args
        .runs
        .iter()
        .map(|p| Ok((stem(p), io::read_scores(&name(p), &read(p)?)?)))
        .collect::<Result<Vec<_>>>()?;
    let reference = match &args.reference {
        Some(p) => Some((stem(p), io::read_condition_values(&name(p), &read(p)?, &args.reference_column)?)),
        None => None,
    };
    let screening: Option<ScreeningSummary> = match &args.screening {
        Some(p) => Some(serde_json::from_str(&read(p)?).map_err(|e| format!("{}: {e}", name(p)))?),
        None => None,
    };
    let mut inputs: Vec<String> = args.runs.iter().map(|p| name(p)).collect();
    inputs.extend(args.reference.iter().chain(&args.screening).map(|p| name(p)));
    let config = json!({
        "seed": cli.seed,
        "study_id": args.study_id,
        "runs": inputs[..args.runs.len()],
        "reference": args.reference.as_ref().map(|p| name(p)),
        "reference_column": args.reference_column,
        "screening": args.screening.as_ref().map(|p| name(p)),
        "bounds": args.bounds,
    });
    let mut out = run_report(&ReportInputs {
        study_id: args.study_id.clone(),
        runs,
        reference,
        screening,
        bounds: (args.bounds[0], args.bounds[1]),
        config,
    })?;
    let dir = out_dir(cli)?;
    let files = [
        ("scatter.csv", out.scatter_csv.as_str()),
        ("sos.csv", out.sos_csv.as_str()),
        ("report.txt", out.text.as_str()),
    ];
    for (file, contents) in files {
        write(&dir.join(file), contents)?;
    }
    out.report.inputs = inputs;
    out.report.outputs = files.iter().map(|(f, _)| name(&dir.join(f))).collect();
    out.report.outputs.push(name(&dir.join("report.json")));
    write(&dir.join("report.json"), &pretty(&out.report)?)?;
    emit(None, &out.text)
}
