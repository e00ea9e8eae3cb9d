use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use comono_rdd::dgp::{self, LinearRule, SkillModelParams};
use comono_rdd::inference::{self, DiagnosticConfig};
use comono_rdd::policy::{self, PolicyRule, Side, SweepMode};
use comono_rdd::{Dataset, Error, QCurve, RddModel};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::{parse_points, BootArgs, DataArgs, ModelArgs};
use crate::manifest::{default_path, FileDigest, RunManifest};
use crate::output::{header, num, opt, write_json, Table};
use crate::{
    BootstrapArgs, CateArgs, CliError, Command, DgpArg, DiagnoseArgs, EstimateArgs, ModeArg, PolicyArgs, ReplayArgs,
    SideArg, SimulateArgs, SweepArgs,
};

/// Result of one recorded command, before digests are taken.
struct Run {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    resolved: Value,
    counts: Value,
}

pub fn execute(cmd: &Command) -> anyhow::Result<()> {
    match cmd {
        Command::Replay(a) => replay(a),
        _ => record(cmd).map(|_| ()),
    }
}

fn record(cmd: &Command) -> anyhow::Result<RunManifest> {
    let run = match cmd {
        Command::Simulate(a) => simulate(a)?,
        Command::EstimateQ(a) => estimate_q(a)?,
        Command::Bootstrap(a) => bootstrap(a)?,
        Command::Cate(a) => cate(a)?,
        Command::Policy(a) => policy_cmd(a)?,
        Command::PolicySweep(a) => sweep(a)?,
        Command::Diagnose(a) => diagnose(a)?,
        Command::Replay(_) => unreachable!("replay is not recorded"),
    };
    let manifest = RunManifest {
        tool: env!("CARGO_BIN_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.clone(),
        resolved: run.resolved,
        counts: run.counts,
        inputs: run
            .inputs
            .iter()
            .map(|p| FileDigest::of(p))
            .collect::<anyhow::Result<_>>()?,
        outputs: run
            .outputs
            .iter()
            .map(|p| FileDigest::of(p))
            .collect::<anyhow::Result<_>>()?,
    };
    manifest.write(&manifest_path(cmd))?;
    Ok(manifest)
}

impl Command {
    fn out_paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let (out, manifest) = match self {
            Command::Simulate(a) => {
                let mut v = vec![&mut a.out];
                v.extend(a.truth_out.as_mut());
                v.extend(a.manifest.as_mut());
                return v;
            }
            Command::EstimateQ(a) => (&mut a.out, &mut a.manifest),
            Command::Bootstrap(a) => (&mut a.out, &mut a.manifest),
            Command::Cate(a) => (&mut a.out, &mut a.manifest),
            Command::Policy(a) => (&mut a.out, &mut a.manifest),
            Command::PolicySweep(a) => (&mut a.out, &mut a.manifest),
            Command::Diagnose(a) => (&mut a.out, &mut a.manifest),
            Command::Replay(_) => return Vec::new(),
        };
        let mut v = vec![out];
        v.extend(manifest.as_mut());
        v
    }

    fn primary_out(&self) -> Option<(&Path, Option<&Path>)> {
        let (out, manifest) = match self {
            Command::Simulate(a) => (&a.out, &a.manifest),
            Command::EstimateQ(a) => (&a.out, &a.manifest),
            Command::Bootstrap(a) => (&a.out, &a.manifest),
            Command::Cate(a) => (&a.out, &a.manifest),
            Command::Policy(a) => (&a.out, &a.manifest),
            Command::PolicySweep(a) => (&a.out, &a.manifest),
            Command::Diagnose(a) => (&a.out, &a.manifest),
            Command::Replay(_) => return None,
        };
        Some((out.as_path(), manifest.as_deref()))
    }
}

fn manifest_path(cmd: &Command) -> PathBuf {
    match cmd.primary_out() {
        Some((_, Some(m))) => m.to_path_buf(),
        Some((out, None)) => default_path(out),
        None => unreachable!("replay has no manifest of its own"),
    }
}

fn replay(a: &ReplayArgs) -> anyhow::Result<()> {
    let recorded = RunManifest::read(&a.manifest)?;
    if matches!(recorded.command, Command::Replay(_)) {
        bail!(CliError::Usage("a replay cannot be replayed".into()));
    }
    for input in &recorded.inputs {
        let now = FileDigest::of(&input.path).with_context(|| format!("input {}", input.path.display()))?;
        if now.sha256 != input.sha256 {
            bail!(CliError::Data(format!(
                "input {} changed since the recorded run",
                input.path.display()
            )));
        }
    }
    let mut cmd = recorded.command.clone();
    if let Some(dir) = &a.redirect_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for p in cmd.out_paths_mut() {
            let name = p
                .file_name()
                .ok_or_else(|| CliError::Usage(format!("output path {} has no file name", p.display())))?
                .to_owned();
            *p = dir.join(name);
        }
    }
    let fresh = record(&cmd)?;
    if fresh.outputs.len() != recorded.outputs.len() {
        bail!(CliError::Mismatch(format!(
            "{} artifacts recorded, {} produced",
            recorded.outputs.len(),
            fresh.outputs.len()
        )));
    }
    for (old, new) in recorded.outputs.iter().zip(&fresh.outputs) {
        if old.sha256 != new.sha256 {
            bail!(CliError::Mismatch(format!(
                "{} differs from recorded {}",
                new.path.display(),
                old.path.display()
            )));
        }
    }
    println!("replay ok: {} artifact(s) identical", fresh.outputs.len());
    Ok(())
}

fn simulate(a: &SimulateArgs) -> anyhow::Result<Run> {
    let (ds, truth) = match a.dgp {
        DgpArg::Expository => dgp::gen_expository(a.n, a.seed)?,
        DgpArg::Linear => dgp::gen_linear_shifted(a.n, a.slope_ratio, a.intercept0, a.noise_sd, a.seed)?,
        DgpArg::Anti => dgp::gen_linear_shifted(a.n, -0.5, a.intercept0, a.noise_sd, a.seed)?,
        DgpArg::Stratified => {
            let [c0, c1] = a.slopes[..] else {
                bail!(Error::InvalidArgument(
                    "the stratified design takes exactly two slopes".into()
                ));
            };
            dgp::gen_stratified_linear(a.n, [c0, c1], a.noise_sd, a.seed)?
        }
        DgpArg::Skill => {
            let rule = LinearRule {
                weights: vec![1.0, 0.0],
                cutoff: 0.0,
            };
            dgp::gen_skill_model(a.n, &SkillModelParams::default(), &rule, a.seed)?
        }
    };
    ds.save_csv(&a.out)?;
    let truth_path = a.truth_out.clone().unwrap_or_else(|| {
        let stem = a.out.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
        let mut name = stem;
        name.push(".truth.json");
        a.out.with_file_name(name)
    });
    write_json(&truth_path, &truth)?;
    let (t, u) = ds.partition();
    Ok(Run {
        inputs: Vec::new(),
        outputs: vec![a.out.clone(), truth_path],
        resolved: json!({ "truth": truth }),
        counts: json!({ "n": ds.n(), "n_treated": t.len(), "n_untreated": u.len() }),
    })
}

fn load_model(data: &DataArgs, model: &ModelArgs) -> anyhow::Result<RddModel> {
    let ds =
        Dataset::load_csv(&data.input, &data.schema()).with_context(|| format!("loading {}", data.input.display()))?;
    let (t, u) = ds.partition();
    let cfg = model.config(t.len().min(u.len()).max(1))?;
    Ok(RddModel::new(ds, cfg)?)
}

fn model_resolved(m: &RddModel) -> Value {
    let cfg = m.config();
    json!({
        "kernel": m.kernel(),
        "h": m.h(),
        "h_mode": m.h_mode(),
        "epsilon": m.epsilon(),
        "standardize": cfg.standardize,
        "grid_size": cfg.grid_size,
        "rearrange": cfg.rearrange,
        "smooth_response": cfg.smooth_response,
        "blocked_cv": cfg.blocked_cv,
        "columns": m.dataset().names(),
    })
}

fn model_counts(m: &RddModel) -> Value {
    let (t, u) = m.dataset().partition();
    let near = m.frontier().near_counts();
    json!({
        "n": m.n(),
        "n_treated": t.len(),
        "n_untreated": u.len(),
        "near_frontier_untreated": near[0],
        "near_frontier_treated": near[1],
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

fn curve_json(c: &QCurve) -> Value {
    json!({
        "target": c.target,
        "b": c.b,
        "y_low": c.y_low,
        "y_high": c.y_high,
        "rearranged": c.rearranged,
    })
}

fn curve_counts(c: &QCurve) -> Value {
    let mut v = json!({
        "regression_sample": c.n_sample,
        "failed_units": c.n_failed_units,
        "grid_points": c.grid.len(),
        "dropped_points": c.dropped.len(),
    });
    if let Some(b) = &c.bands {
        v["draws_used"] = json!(b.draws_used);
        v["draws_discarded"] = json!(b.draws_discarded);
    }
    v
}

fn curve_rows(c: &QCurve) -> Vec<Vec<String>> {
    c.grid
        .iter()
        .zip(&c.values)
        .enumerate()
        .map(|(j, (&y, &q))| {
            let (lo, hi) = match &c.bands {
                Some(b) => (num(b.lower[j]), num(b.upper[j])),
                None => (String::new(), String::new()),
            };
            vec![num(y), num(q), lo, hi]
        })
        .collect()
}

fn column(ds: &Dataset, name: &str) -> anyhow::Result<usize> {
    ds.column_index(name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()).into())
}

fn estimate_q(a: &EstimateArgs) -> anyhow::Result<Run> {
    let m = load_model(&a.data, &a.model)?;
    let d = a.direction == 1;
    let boot = a.boot.config();
    if let Some(cfg) = &boot {
        cfg.validate()?;
    }
    let mut resolved = merge(model_resolved(&m), json!({ "direction": a.direction }));
    let mut counts = model_counts(&m);

    if let Some(names) = &a.strata_cols {
        if boot.is_some() {
            bail!(Error::InvalidArgument(
                "bands are not available for stratum curves".into()
            ));
        }
        let ds = m.dataset();
        let cols = names
            .iter()
            .map(|n| column(ds, n))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let points = match &a.strata_points {
            Some(text) => parse_points(text).map_err(|e| CliError::Usage(format!("{e:#}")))?,
            None => distinct_strata(ds, &cols)?,
        };
        let cq = m.estimate_q_conditional(d, &cols, &points, None)?;
        if let Some(w) = &cq.warning {
            eprintln!("warning: {w}");
        }
        let mut head: Vec<String> = names.clone();
        head.extend(header(&["y", "qhat", "lower", "upper"]));
        let mut table = Table::create(&a.out, &head)?;
        let mut failures = Vec::new();
        let mut strata_counts = Vec::new();
        let mut first_err = None;
        for (p, res) in cq.curves {
            match res {
                Ok(c) => {
                    for row in curve_rows(&c) {
                        let mut cells: Vec<String> = p.iter().map(|&v| num(v)).collect();
                        cells.extend(row);
                        table.row(&cells)?;
                    }
                    resolved["b"] = json!(c.b);
                    resolved["y_low"] = json!(c.y_low);
                    resolved["y_high"] = json!(c.y_high);
                    strata_counts.push(json!({ "stratum": p, "curve": curve_counts(&c) }));
                }
                Err(e) => {
                    eprintln!("warning: stratum {p:?}: {e}");
                    failures.push(json!({ "stratum": p, "error": e.kind(), "message": e.to_string() }));
                    first_err.get_or_insert(e);
                }
            }
        }
        table.finish()?;
        if strata_counts.is_empty() {
            if let Some(e) = first_err {
                return Err(anyhow::Error::new(e).context("every stratum failed"));
            }
        }
        counts["strata"] = json!(strata_counts);
        counts["failed_strata"] = json!(failures);
    } else {
        let mut curve = m.estimate_q(d)?;
        if let Some(cfg) = &boot {
            curve.bands = Some(inference::bootstrap_q(&m, d, &curve, cfg)?);
            resolved["bootstrap"] = json!(cfg);
        }
        let mut table = Table::create(&a.out, &header(&["y", "qhat", "lower", "upper"]))?;
        for row in curve_rows(&curve) {
            table.row(&row)?;
        }
        table.finish()?;
        resolved = merge(resolved, curve_json(&curve));
        counts["curve"] = curve_counts(&curve);
    }
    Ok(Run {
        inputs: vec![a.data.input.clone()],
        outputs: vec![a.out.clone()],
        resolved,
        counts,
    })
}

const MAX_AUTO_STRATA: usize = 64;

fn distinct_strata(ds: &Dataset, cols: &[usize]) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut pts: Vec<Vec<f64>> = (0..ds.n())
        .map(|i| cols.iter().map(|&c| ds.x_row(i)[c]).collect())
        .collect();
    pts.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    pts.dedup();
    if pts.len() > MAX_AUTO_STRATA {
        bail!(Error::InvalidArgument(format!(
            "{} distinct stratum values; pass --strata-points",
            pts.len()
        )));
    }
    Ok(pts)
}

fn bootstrap(a: &BootstrapArgs) -> anyhow::Result<Run> {
    if a.bootstrap_draws == 0 {
        bail!(Error::InvalidArgument("bootstrap needs at least one draw".into()));
    }
    estimate_q(&EstimateArgs {
        data: a.data.clone(),
        model: a.model.clone(),
        boot: BootArgs {
            bootstrap_draws: a.bootstrap_draws,
            level: a.level,
            seed: a.seed,
        },
        direction: a.direction,
        strata_cols: None,
        strata_points: None,
        out: a.out.clone(),
        manifest: a.manifest.clone(),
    })
}

/// Evaluation points for `cate`: covariates in dataset column order and the
/// group, if given.
fn read_points(path: &Path, names: &[String], d_col: &str) -> anyhow::Result<Vec<(Vec<f64>, Option<bool>)>> {
    let file = File::open(path).map_err(Error::from)?;
    let mut rdr = csv::Reader::from_reader(file);
    let head = rdr.headers().map_err(Error::from)?.clone();
    let find = |name: &str| head.iter().position(|h| h.trim() == name);
    let xi = names
        .iter()
        .map(|n| find(n).ok_or_else(|| Error::MissingColumn(n.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let di = find(d_col);
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(Error::from)?;
        let cell = |j: usize, col: &str| -> Result<f64, Error> {
            let v = rec.get(j).unwrap_or("").trim();
            if v.is_empty() {
                return Err(Error::EmptyCell {
                    row,
                    col: col.to_string(),
                });
            }
            v.parse().map_err(|_| Error::NonNumericCell {
                row,
                col: col.to_string(),
                value: v.to_string(),
            })
        };
        let x = xi
            .iter()
            .zip(names)
            .map(|(&j, n)| cell(j, n))
            .collect::<Result<Vec<_>, _>>()?;
        let d = match di {
            Some(j) => match rec.get(j).unwrap_or("").trim() {
                "0" => Some(false),
                "1" => Some(true),
                v => bail!(Error::NonBinaryTreatment {
                    row,
                    value: v.to_string()
                }),
            },
            None => None,
        };
        out.push((x, d));
    }
    Ok(out)
}

fn cate(a: &CateArgs) -> anyhow::Result<Run> {
    let m = load_model(&a.data, &a.model)?;
    let curves = m.estimate_pair()?;
    let ds = m.dataset();
    let mut inputs = vec![a.data.input.clone()];
    let points: Vec<(Vec<f64>, bool)> = match &a.points {
        Some(path) => {
            inputs.push(path.clone());
            read_points(path, ds.names(), &a.data.d_col)
                .with_context(|| format!("loading {}", path.display()))?
                .into_iter()
                .map(|(x, d)| {
                    let d = d.unwrap_or_else(|| m.nearest_group(&x));
                    (x, d)
                })
                .collect()
        }
        None => (0..ds.n()).map(|i| (ds.x_row(i).to_vec(), ds.d()[i])).collect(),
    };
    let estimates: Vec<_> = points.par_iter().map(|(x, d)| m.cate(&curves, x, *d)).collect();

    let mut head: Vec<String> = ds.names().to_vec();
    head.extend(header(&["d", "own", "tau", "s", "ey1", "ey0"]));
    let mut table = Table::create(&a.out, &head)?;
    let mut failed = 0usize;
    let mut identified = 0usize;
    for ((x, d), est) in points.iter().zip(&estimates) {
        let mut cells: Vec<String> = x.iter().map(|&v| num(v)).collect();
        cells.push((*d as u8).to_string());
        match est {
            Ok(e) => {
                identified += e.s as usize;
                cells.extend([num(e.own), opt(e.tau), (e.s as u8).to_string(), opt(e.ey1), opt(e.ey0)]);
            }
            Err(_) => {
                failed += 1;
                cells.extend([String::new(), String::new(), "0".into(), String::new(), String::new()]);
            }
        }
        table.row(&cells)?;
    }
    table.finish()?;
    let resolved = merge(
        model_resolved(&m),
        json!({ "q0": curve_json(&curves.q0), "q1": curve_json(&curves.q1) }),
    );
    let counts = merge(
        model_counts(&m),
        json!({
            "points": points.len(),
            "identified": identified,
            "failed_fits": failed,
            "q0": curve_counts(&curves.q0),
            "q1": curve_counts(&curves.q1),
        }),
    );
    Ok(Run {
        inputs,
        outputs: vec![a.out.clone()],
        resolved,
        counts,
    })
}

struct PolicyBase {
    model: RddModel,
    curves: comono_rdd::CurvePair,
    fits: Vec<Option<f64>>,
    s: Vec<bool>,
}

fn policy_base(data: &DataArgs, model: &ModelArgs, boot: &BootArgs) -> anyhow::Result<PolicyBase> {
    if let Some(cfg) = boot.config() {
        cfg.validate()?;
    }
    let model = load_model(data, model)?;
    let curves = model.estimate_pair()?;
    let fits = model.own_fits(None);
    let s = policy::s_indicator(model.dataset(), &curves, &fits);
    Ok(PolicyBase { model, curves, fits, s })
}

impl PolicyBase {
    fn resolved(&self, boot: &BootArgs) -> Value {
        let mut v = merge(
            model_resolved(&self.model),
            json!({ "q0": curve_json(&self.curves.q0), "q1": curve_json(&self.curves.q1) }),
        );
        if let Some(cfg) = boot.config() {
            v["bootstrap"] = json!(cfg);
        }
        v
    }

    fn counts(&self) -> Value {
        merge(
            model_counts(&self.model),
            json!({
                "identified": self.s.iter().filter(|&&v| v).count(),
                "failed_fits": self.fits.iter().filter(|f| f.is_none()).count(),
                "q0": curve_counts(&self.curves.q0),
                "q1": curve_counts(&self.curves.q1),
            }),
        )
    }
}

fn policy_cmd(a: &PolicyArgs) -> anyhow::Result<Run> {
    let base = policy_base(&a.data, &a.model, &a.boot)?;
    let ds = base.model.dataset();
    let rule = PolicyRule::parse(&a.rule, ds.names())?;
    let eff = policy::policy_effect(ds, &rule, &base.curves, &base.fits, &base.s)?;
    let bands = match a.boot.config() {
        Some(cfg) => Some(inference::bootstrap_policy(
            &base.model,
            &base.curves,
            &base.s,
            std::slice::from_ref(&rule),
            &[eff.theta],
            &cfg,
        )?),
        None => None,
    };
    let mut table = Table::create(
        &a.out,
        &header(&[
            "rule",
            "theta",
            "theta_lower",
            "theta_upper",
            "n_affected",
            "n_identified",
            "net_cost",
            "net_cost_count",
        ]),
    )?;
    table.row(&[
        a.rule.trim().to_string(),
        num(eff.theta),
        opt(bands.as_ref().map(|b| b.lower[0])),
        opt(bands.as_ref().map(|b| b.upper[0])),
        num(eff.n_affected),
        eff.n_identified.to_string(),
        num(eff.net_cost),
        num(eff.net_cost_count),
    ])?;
    table.finish()?;
    let mut counts = base.counts();
    if let Some(b) = &bands {
        counts["draws_used"] = json!(b.draws_used);
        counts["draws_discarded"] = json!(b.draws_discarded);
    }
    Ok(Run {
        inputs: vec![a.data.input.clone()],
        outputs: vec![a.out.clone()],
        resolved: merge(base.resolved(&a.boot), json!({ "rule": a.rule.trim() })),
        counts,
    })
}

fn sweep(a: &SweepArgs) -> anyhow::Result<Run> {
    let base = policy_base(&a.data, &a.model, &a.boot)?;
    let ds = base.model.dataset();
    let axis = column(ds, &a.axis)?;
    let side = match a.side {
        SideArg::Below => Side::Below,
        SideArg::Above => Side::Above,
    };
    let mode = match a.mode {
        ModeArg::Extend => SweepMode::Extend,
        ModeArg::Replace => SweepMode::Replace,
    };
    let cutoffs = a.cutoffs.linear();
    let rows = policy::threshold_sweep(ds, axis, &cutoffs, side, mode, &base.curves, &base.fits, &base.s)?;
    let ok: Vec<(usize, PolicyRule, f64)> = rows
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.effect.as_ref().ok().map(|e| (j, r.rule.clone(), e.theta)))
        .collect();
    if ok.is_empty() {
        if let Some(Err(e)) = rows.into_iter().next().map(|r| r.effect) {
            return Err(e.into());
        }
        bail!(Error::InvalidArgument("empty cutoff range".into()));
    }
    let mut band = vec![None; rows.len()];
    let mut draws = None;
    if let Some(cfg) = a.boot.config() {
        let rules: Vec<PolicyRule> = ok.iter().map(|(_, r, _)| r.clone()).collect();
        let thetas: Vec<f64> = ok.iter().map(|(_, _, t)| *t).collect();
        let b = inference::bootstrap_policy(&base.model, &base.curves, &base.s, &rules, &thetas, &cfg)?;
        for (k, (j, _, _)) in ok.iter().enumerate() {
            band[*j] = Some((b.lower[k], b.upper[k]));
        }
        draws = Some((b.draws_used, b.draws_discarded));
    }
    let mut table = Table::create(
        &a.out,
        &header(&[
            "cutoff",
            "theta",
            "theta_lower",
            "theta_upper",
            "n_affected",
            "n_identified",
            "net_cost",
        ]),
    )?;
    let mut failed = 0usize;
    for (row, bnd) in rows.iter().zip(&band) {
        let mut cells = vec![num(row.cutoff)];
        match &row.effect {
            Ok(e) => cells.extend([
                num(e.theta),
                opt(bnd.map(|b| b.0)),
                opt(bnd.map(|b| b.1)),
                num(e.n_affected),
                e.n_identified.to_string(),
                num(e.net_cost),
            ]),
            Err(e) => {
                failed += 1;
                eprintln!("warning: cutoff {}: {e}", row.cutoff);
                cells.extend(std::iter::repeat_n(String::new(), 6));
            }
        }
        table.row(&cells)?;
    }
    table.finish()?;
    let mut counts = base.counts();
    counts["cutoffs"] = json!(rows.len());
    counts["failed_cutoffs"] = json!(failed);
    if let Some((used, discarded)) = draws {
        counts["draws_used"] = json!(used);
        counts["draws_discarded"] = json!(discarded);
    }
    Ok(Run {
        inputs: vec![a.data.input.clone()],
        outputs: vec![a.out.clone()],
        resolved: merge(
            base.resolved(&a.boot),
            json!({ "axis": a.axis, "side": a.side, "mode": a.mode }),
        ),
        counts,
    })
}

fn diagnose(a: &DiagnoseArgs) -> anyhow::Result<Run> {
    let m = load_model(&a.data, &a.model)?;
    let cfg = DiagnosticConfig {
        spacing: a.diag_spacing,
        support_share: a.diag_support_share,
    };
    let diag = inference::diagnose(&m, &cfg)?;
    let near = m.frontier().near_counts();
    write_json(
        &a.out,
        &json!({
            "statistic": diag.statistic,
            "violation": diag.is_violation(),
            "pair": [diag.pair.0, diag.pair.1],
            "n_pairs": diag.n_pairs,
            "near_frontier": { "untreated": near[0], "treated": near[1] },
        }),
    )?;
    Ok(Run {
        inputs: vec![a.data.input.clone()],
        outputs: vec![a.out.clone()],
        resolved: merge(model_resolved(&m), json!({ "diagnostic": cfg })),
        counts: merge(model_counts(&m), json!({ "pairs": diag.n_pairs })),
    })
}
