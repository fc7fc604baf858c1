//! One function per subcommand.

use std::io::Read;
use std::path::Path;

use saddlekit::continuous_game::{default_anchors, probe_coercivity, solve_report, EndReport, RadiusSchedule, RefinementBudget, SolveReport};
use saddlekit::matrix_game::{solve_fictitious_play, solve_lp, MatrixGame};
use saddlekit::measures::{classify_safety, Player, SafetyVerdict};
use saddlekit::paramlab::{classify_assumptions, sweep, ParamError, Profile, StructuralReport, SweepReport, SweepSettings, Verdict};
use saddlekit::turnbased::{check_pure_sufficiency, minimax_batch, ConstraintSet, MinimaxRecord, PureSufficiencyReport, SequentialGame, SolveSettings};
use saddlekit::{verify_saddle, CoercivityCertificate, Domain, Expr, MixedStrategy, SearchBudget};
use serde::Serialize;

use crate::gamefile::{parse_grid, GameFile, Shape};
use crate::output::{cell, csv_table, format_float, opt_cell, to_json, with_header, Header};
use crate::{Cli, CliError, Command, Format, Method, Outcome, ProbeSide, EXIT_FAILED, EXIT_OK, EXIT_WARNINGS};

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Matrix(a) => matrix(cli, a),
        Command::Solve(a) => solve(cli, a),
        Command::Turnbased(a) => turnbased(cli, a),
        Command::Sweep(a) => sweep_cmd(cli, a),
        Command::Safety(a) => safety(cli, a),
        Command::Probe(a) => probe(cli, a),
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn json_only(cli: &Cli, command: &str) -> Result<(), CliError> {
    match cli.format {
        Format::Json => Ok(()),
        Format::Csv => Err(CliError::Usage(format!("`{command}` has no CSV output"))),
    }
}

fn json_document<T: Serialize>(header: &Header, payload: &T) -> String {
    let mut s = to_json(&with_header(header, payload));
    s.push('\n');
    s
}

fn load(path: &Path) -> Result<GameFile, CliError> {
    GameFile::load(path).map_err(failed)
}

fn plain_game(file: &GameFile, command: &str) -> Result<(Expr, Domain, Domain), CliError> {
    match &file.shape {
        Shape::Game { payoff, a_domain, b_domain } => Ok((payoff.clone(), a_domain.clone(), b_domain.clone())),
        other => Err(CliError::Usage(format!("`{command}` needs a game file without [family] or [sequential]; got a {} file", other.kind()))),
    }
}

fn valid_tol(tol: f64) -> Result<f64, CliError> {
    if tol > 0.0 {
        Ok(tol)
    } else {
        Err(CliError::Usage(format!("--tol must be positive, got {tol}")))
    }
}

fn matrix(cli: &Cli, args: &crate::MatrixArgs) -> Result<Outcome, CliError> {
    json_only(cli, "matrix")?;
    let text = if args.input == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(failed)?;
        s
    } else {
        std::fs::read_to_string(&args.input).map_err(|e| failed(format!("cannot read {}: {e}", args.input)))?
    };
    let g = MatrixGame::parse_text(&text).map_err(failed)?;
    let sol = match args.method {
        Method::Lp => solve_lp(&g, valid_tol(args.tol)?).map_err(failed)?,
        Method::Fp => solve_fictitious_play(&g, args.iters.max(1)),
    };
    let summary = format!(
        "{}x{} matrix game: value {}, duality gap {}\n",
        g.rows(),
        g.cols(),
        format_float(sol.value),
        format_float(sol.gap)
    );
    Ok(Outcome {
        machine: json_document(&Header::new("matrix", cli.seed), &sol),
        summary,
        code: EXIT_OK,
    })
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    verified: bool,
    #[serde(flatten)]
    report: &'a SolveReport,
}

fn solve(cli: &Cli, args: &crate::SolveArgs) -> Result<Outcome, CliError> {
    let file = load(&args.game)?;
    let (c, a, b) = plain_game(&file, "solve")?;
    let tol = valid_tol(args.tol)?;
    let budget = RefinementBudget {
        max_refine: args.max_refine,
        lambda0: args.lambda0,
        ..RefinementBudget::default()
    };
    let report = solve_report(&c, &a, &b, tol, &budget).map_err(failed)?;
    let verified = report.converged && verify_saddle(&c, &report.certificate, &a, &b, tol).map_err(failed)?;
    let code = match (report.converged, verified) {
        (true, true) => EXIT_OK,
        (true, false) => EXIT_WARNINGS,
        _ => EXIT_FAILED,
    };
    let cert = &report.certificate;
    let summary = format!(
        "value {} with duality gap {} after {} iterations ({}{})\n",
        format_float(cert.value),
        format_float(cert.eps),
        report.iterations.len(),
        if report.converged { "converged" } else { "not converged" },
        if report.converged && !verified { ", denser re-check failed" } else { "" },
    );
    let machine = match cli.format {
        Format::Json => json_document(&Header::new("solve", cli.seed), &SolveOutput { verified, report: &report }),
        Format::Csv => {
            let rows: Vec<Vec<String>> = report
                .iterations
                .iter()
                .map(|it| {
                    vec![
                        it.iteration.to_string(),
                        opt_cell(it.lambda_a),
                        opt_cell(it.lambda_b),
                        cell(it.a_box.0),
                        cell(it.a_box.1),
                        cell(it.b_box.0),
                        cell(it.b_box.1),
                        it.grid.0.to_string(),
                        it.grid.1.to_string(),
                        cell(it.lp_value),
                        cell(it.eps),
                        cell(it.best_eps),
                    ]
                })
                .collect();
            csv_table(
                &["iteration", "lambda_a", "lambda_b", "a_lo", "a_hi", "b_lo", "b_hi", "n_a", "n_b", "lp_value", "eps", "best_eps"],
                &rows,
            )
        }
    };
    Ok(Outcome { machine, summary, code })
}

#[derive(Serialize)]
struct TurnLine<'a> {
    #[serde(flatten)]
    record: &'a MinimaxRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pure_sufficiency: Option<&'a PureSufficiencyReport>,
}

#[derive(Serialize)]
struct ErrorLine {
    x: f64,
    error: String,
}

fn sequential_game(file: &GameFile) -> Result<SequentialGame, CliError> {
    match &file.shape {
        Shape::Sequential(g) => Ok(g.clone()),
        Shape::Game { payoff, a_domain, b_domain } => Ok(SequentialGame {
            x_domain: Domain::RealLine,
            phi_a: ConstraintSet::Fixed(a_domain.clone()),
            phi_b: ConstraintSet::Fixed(b_domain.clone()),
            f: payoff.clone(),
        }),
        Shape::Family { .. } => Err(CliError::Usage("`turnbased` needs a [sequential] or plain game file".into())),
    }
}

fn joined(points: &[f64]) -> String {
    points.iter().map(|p| format_float(*p)).collect::<Vec<_>>().join(";")
}

fn turnbased(cli: &Cli, args: &crate::TurnbasedArgs) -> Result<Outcome, CliError> {
    let file = load(&args.game)?;
    let g = sequential_game(&file)?;
    let xs = match (args.x, &args.x_grid) {
        (Some(x), None) => vec![x],
        (None, Some(grid)) => parse_grid(grid).map_err(CliError::Usage)?,
        _ => return Err(CliError::Usage("`turnbased` needs --x or --x-grid".into())),
    };
    if !(args.tie_tol >= 0.0) {
        return Err(CliError::Usage("--tie-tol must be nonnegative".into()));
    }
    let budget = SearchBudget::default();
    let settings = SolveSettings {
        tie_tol: args.tie_tol,
        ..SolveSettings::default()
    };
    let records = minimax_batch(&g, &xs, &budget, &settings);
    let mut code = EXIT_OK;
    let mut lines = vec![to_json(&serde_json::json!({ "header": Header::new("turnbased", cli.seed) }))];
    let mut rows = Vec::new();
    let mut failures = 0;
    for (k, (x, rec)) in xs.iter().zip(&records).enumerate() {
        match rec {
            Ok(rec) => {
                let suff = args
                    .sufficiency
                    .map(|n| check_pure_sufficiency(&g, *x, n, cli.seed.wrapping_add(k as u64), &budget).map_err(|e| e.to_string()));
                let report = match &suff {
                    Some(Ok(r)) => Some(r),
                    _ => None,
                };
                if let Some(Err(e)) = &suff {
                    log::warn!("pure sufficiency check at x = {x} failed: {e}");
                    failures += 1;
                }
                if report.is_some_and(|r| !r.passed) {
                    failures += 1;
                }
                lines.push(to_json(&TurnLine {
                    record: rec,
                    pure_sufficiency: report,
                }));
                rows.push(vec![
                    cell(*x),
                    cell(rec.v_sharp.to_f64()),
                    joined(&rec.argmin_a_set),
                    joined(&rec.argmax_b_for_best_a),
                    report.map(|r| cell(r.max_violation_a)).unwrap_or_default(),
                    report.map(|r| cell(r.max_violation_b)).unwrap_or_default(),
                    String::new(),
                ]);
            }
            Err(e) => {
                failures += 1;
                lines.push(to_json(&ErrorLine { x: *x, error: e.to_string() }));
                rows.push(vec![cell(*x), String::new(), String::new(), String::new(), String::new(), String::new(), e.to_string()]);
            }
        }
    }
    if failures > 0 {
        code = EXIT_FAILED;
    }
    let machine = match cli.format {
        Format::Json => lines.join("\n") + "\n",
        Format::Csv => csv_table(&["x", "v_sharp", "argmin_a", "argmax_b", "max_violation_a", "max_violation_b", "error"], &rows),
    };
    let summary = format!("{} states solved, {} failed\n", xs.len() - failures.min(xs.len()), failures);
    Ok(Outcome { machine, summary, code })
}

#[derive(Serialize)]
struct RefutedOutput<'a> {
    error: String,
    assumptions: &'a StructuralReport,
}

fn verdict_text(v: &Verdict) -> String {
    match v {
        Verdict::Pass => "PASS".into(),
        Verdict::Fail { at, .. } => format!("FAIL at [{}]", at.iter().map(|x| format_float(*x)).collect::<Vec<_>>().join(", ")),
    }
}

fn value_table(rep: &SweepReport) -> String {
    let rows: Vec<Vec<String>> = rep
        .records
        .iter()
        .map(|r| {
            vec![
                cell(r.x),
                opt_cell(r.v),
                opt_cell(r.eps),
                r.converged.to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    csv_table(&["x", "v", "eps", "converged", "error"], &rows)
}

fn sweep_cmd(cli: &Cli, args: &crate::SweepArgs) -> Result<Outcome, CliError> {
    let file = load(&args.game)?;
    let (mut family, file_profile) = match &file.shape {
        Shape::Family { family, profile } => (family.clone(), *profile),
        other => return Err(CliError::Usage(format!("`sweep` needs a [family] game file; got a {} file", other.kind()))),
    };
    if let Some(grid) = &args.x_grid {
        family.x_grid = parse_grid(grid).map_err(CliError::Usage)?;
    }
    let profile = args.profile.or(file_profile).unwrap_or(Profile::Lsc);
    let tol = valid_tol(args.tol)?;
    let settings = SweepSettings {
        profile,
        probes: args.probes,
        budget: RefinementBudget {
            max_refine: args.max_refine,
            ..RefinementBudget::default()
        },
        ..SweepSettings::default()
    };
    let header = Header::new("sweep", cli.seed);
    let rep = match sweep(&family, tol, &settings) {
        Ok(rep) => rep,
        Err(e @ ParamError::AssumptionRefuted { .. }) => {
            let assumptions = classify_assumptions(&family, args.probes);
            json_only(cli, "sweep with refuted assumptions")?;
            return Ok(Outcome {
                machine: json_document(
                    &header,
                    &RefutedOutput {
                        error: e.to_string(),
                        assumptions: &assumptions,
                    },
                ),
                summary: format!("{e}\n"),
                code: EXIT_FAILED,
            });
        }
        Err(e) => return Err(failed(e)),
    };
    let table = value_table(&rep);
    if let Some(path) = &args.csv {
        std::fs::write(path, &table).map_err(|e| failed(format!("cannot write {}: {e}", path.display())))?;
    }
    let unconverged = rep.records.iter().filter(|r| !r.converged).count();
    let code = if !rep.profile_passed() {
        EXIT_FAILED
    } else if unconverged > 0 {
        EXIT_WARNINGS
    } else {
        EXIT_OK
    };
    let summary = format!(
        "{} states, {} not converged; lsc {}; continuity {}; {} profile {}\n",
        rep.records.len(),
        unconverged,
        verdict_text(&rep.diagnostics.lsc),
        verdict_text(&rep.diagnostics.continuity),
        match profile {
            Profile::Lsc => "lsc",
            Profile::Continuity => "continuity",
        },
        if rep.profile_passed() { "PASS" } else { "FAIL" },
    );
    let machine = match cli.format {
        Format::Json => json_document(&header, &rep),
        Format::Csv => table,
    };
    Ok(Outcome { machine, summary, code })
}

#[derive(Serialize)]
struct SafetyOutput<'a> {
    side: Player,
    strategy: &'a MixedStrategy,
    #[serde(flatten)]
    verdict: &'a SafetyVerdict,
}

fn parse_strategy(arg: &str) -> Result<MixedStrategy, CliError> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| failed(format!("cannot read {path}: {e}")))?,
        None => arg.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid --strategy: {e}")))
}

fn safety(cli: &Cli, args: &crate::SafetyArgs) -> Result<Outcome, CliError> {
    json_only(cli, "safety")?;
    let file = load(&args.game)?;
    let (c, a, b) = plain_game(&file, "safety")?;
    let pi = parse_strategy(&args.strategy)?;
    let (own, opponent) = match args.side {
        Player::A => (&a, &b),
        Player::B => (&b, &a),
    };
    pi.validate_in(own).map_err(failed)?;
    let verdict = classify_safety(&c, &pi, args.side, opponent, args.probes.max(1)).map_err(failed)?;
    let (code, text) = match &verdict {
        SafetyVerdict::Safe(reason) => (EXIT_OK, format!("safe ({reason:?})")),
        SafetyVerdict::UnsafeWitness(w) => (EXIT_OK, format!("unsafe; the expected payoff is undefined against {}", to_json(w))),
        SafetyVerdict::Inconclusive => (EXIT_WARNINGS, "inconclusive".to_string()),
    };
    Ok(Outcome {
        machine: json_document(
            &Header::new("safety", cli.seed),
            &SafetyOutput {
                side: args.side,
                strategy: &pi,
                verdict: &verdict,
            },
        ),
        summary: format!("strategy of player {:?}: {text}\n", args.side),
        code,
    })
}

#[derive(Serialize)]
struct ProbeOutput {
    a: Option<CoercivityCertificate>,
    b: Option<CoercivityCertificate>,
}

fn end_status(cert: &CoercivityCertificate) -> i32 {
    let ends = [&cert.lower, &cert.upper];
    if ends.iter().any(|e| matches!(e, Some(EndReport::GrowthRefuted { .. }))) {
        EXIT_FAILED
    } else if cert.confirmed() {
        EXIT_OK
    } else {
        EXIT_WARNINGS
    }
}

fn describe(cert: &CoercivityCertificate) -> String {
    let end = |e: &Option<EndReport>| match e {
        None => "finite",
        Some(EndReport::GrowthConfirmed { .. }) => "growth confirmed",
        Some(EndReport::GrowthRefuted { .. }) => "growth refuted",
        Some(EndReport::Inconclusive { .. }) => "inconclusive",
    };
    format!(
        "anchor {}: lower end {}, upper end {}",
        format_float(cert.anchor_b0),
        end(&cert.lower),
        end(&cert.upper)
    )
}

fn probe(cli: &Cli, args: &crate::ProbeArgs) -> Result<Outcome, CliError> {
    json_only(cli, "probe")?;
    let file = load(&args.game)?;
    let (c, a, b) = plain_game(&file, "probe")?;
    let radii = RadiusSchedule::default();
    let want_a = matches!(args.side, ProbeSide::A | ProbeSide::Both);
    let want_b = matches!(args.side, ProbeSide::B | ProbeSide::Both);
    let out = ProbeOutput {
        a: want_a.then(|| probe_coercivity(&c, &a, &b, &default_anchors(&b), &radii)),
        b: want_b.then(|| probe_coercivity(&c.swapped_game(), &b, &a, &default_anchors(&a), &radii)),
    };
    let certs: Vec<&CoercivityCertificate> = out.a.iter().chain(out.b.iter()).collect();
    let code = certs.iter().map(|c| end_status(c)).fold(EXIT_OK, |acc, s| match (acc, s) {
        (EXIT_FAILED, _) | (_, EXIT_FAILED) => EXIT_FAILED,
        (EXIT_WARNINGS, _) | (_, EXIT_WARNINGS) => EXIT_WARNINGS,
        _ => EXIT_OK,
    });
    let mut summary = String::new();
    if let Some(cert) = &out.a {
        summary.push_str(&format!("player A, c(a, b0): {}\n", describe(cert)));
    }
    if let Some(cert) = &out.b {
        summary.push_str(&format!("player B, -c(a0, b): {}\n", describe(cert)));
    }
    Ok(Outcome {
        machine: json_document(&Header::new("probe", cli.seed), &out),
        summary,
        code,
    })
}
