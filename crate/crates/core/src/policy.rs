//! Counterfactual treatment rules and their mean causal impact on the
//! subpopulation whose effects are identified.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::extrapolate::CurvePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Le,
    Lt,
    Ge,
    Gt,
}

impl Comparison {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Le => lhs <= rhs,
            Comparison::Lt => lhs < rhs,
            Comparison::Ge => lhs >= rhs,
            Comparison::Gt => lhs > rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::Le => "<=",
            Comparison::Lt => "<",
            Comparison::Ge => ">=",
            Comparison::Gt => ">",
        }
    }
}

/// Side of a single-covariate cutoff that a sweep adds to (or makes) the
/// treated set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Below,
    Above,
}

/// Whether a swept cutoff rule is added to the factual assignment or
/// replaces it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Treat the factually treated plus everyone on `side` of the cutoff.
    #[default]
    Extend,
    /// Treat exactly those on `side` of the cutoff.
    Replace,
}

/// Treatment probability p(x) of a counterfactual policy. Rules read raw
/// covariates; `Factual` and extending sweeps also read the observed status,
/// which in a sharp design is itself a function of x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyRule {
    Factual,
    Constant(f64),
    /// Treat iff Σ coef·x[col] `op` cutoff.
    Linear {
        terms: Vec<(f64, usize)>,
        op: Comparison,
        cutoff: f64,
    },
    Threshold {
        axis: usize,
        cutoff: f64,
        side: Side,
        mode: SweepMode,
    },
    /// Convex combination of rules.
    Mixture(Vec<(f64, PolicyRule)>),
}

impl PolicyRule {
    pub fn prob(&self, x: &[f64], d: bool) -> f64 {
        match self {
            PolicyRule::Factual => d as u8 as f64,
            PolicyRule::Constant(p) => *p,
            PolicyRule::Linear { terms, op, cutoff } => {
                let lhs: f64 = terms.iter().map(|&(c, j)| c * x[j]).sum();
                op.holds(lhs, *cutoff) as u8 as f64
            }
            PolicyRule::Threshold {
                axis,
                cutoff,
                side,
                mode,
            } => {
                let on_side = match side {
                    Side::Below => x[*axis] <= *cutoff,
                    Side::Above => x[*axis] >= *cutoff,
                };
                let base = matches!(mode, SweepMode::Extend) && d;
                (on_side || base) as u8 as f64
            }
            PolicyRule::Mixture(parts) => parts.iter().map(|(w, r)| w * r.prob(x, d)).sum(),
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            PolicyRule::Constant(p) if !(0.0..=1.0).contains(p) => bad(format!("probability {p} outside [0, 1]")),
            PolicyRule::Linear { terms, .. } if terms.iter().any(|t| t.1 >= k) => {
                bad("rule references a missing covariate".into())
            }
            PolicyRule::Threshold { axis, .. } if *axis >= k => bad(format!("axis {axis} out of range")),
            PolicyRule::Mixture(parts) => {
                let total: f64 = parts.iter().map(|p| p.0).sum();
                if parts.iter().any(|p| p.0 < 0.0) || (total - 1.0).abs() > 1e-12 {
                    return bad("mixture weights must be nonnegative and sum to 1".into());
                }
                parts.iter().try_for_each(|p| p.1.validate(k))
            }
            _ => Ok(()),
        }
    }

    /// Parses `factual`, `all`, `none`, `p=0.3`, or a linear rule such as
    /// `x1<=0.5` or `0.4*x1 + x2 <= 0.7` over the covariate `names`.
    pub fn parse(text: &str, names: &[String]) -> Result<PolicyRule> {
        let t = text.trim();
        let err = |m: &str| Error::InvalidArgument(format!("cannot parse rule `{text}`: {m}"));
        match t {
            "factual" => return Ok(PolicyRule::Factual),
            "all" => return Ok(PolicyRule::Constant(1.0)),
            "none" => return Ok(PolicyRule::Constant(0.0)),
            _ => {}
        }
        if let Some(p) = t.strip_prefix("p=") {
            let p: f64 = p.trim().parse().map_err(|_| err("bad probability"))?;
            let rule = PolicyRule::Constant(p);
            rule.validate(names.len())?;
            return Ok(rule);
        }
        let (at, op, len) = ["<=", ">=", "<", ">"]
            .iter()
            .find_map(|sym| t.find(sym).map(|at| (at, *sym, sym.len())))
            .ok_or_else(|| err("expected one of <=, <, >=, >"))?;
        let op = match op {
            "<=" => Comparison::Le,
            ">=" => Comparison::Ge,
            "<" => Comparison::Lt,
            _ => Comparison::Gt,
        };
        let cutoff: f64 = t[at + len..].trim().parse().map_err(|_| err("bad cutoff"))?;
        let lhs = t[..at].replace(' ', "");
        if lhs.is_empty() {
            return Err(err("empty left-hand side"));
        }
        let mut terms = Vec::new();
        for (sign, term) in split_terms(&lhs) {
            let (coef, name) = match term.split_once('*') {
                Some((c, n)) => (c.parse::<f64>().map_err(|_| err("bad coefficient"))?, n),
                None => (1.0, term),
            };
            let col = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| err(&format!("unknown covariate `{name}`")))?;
            terms.push((sign * coef, col));
        }
        Ok(PolicyRule::Linear { terms, op, cutoff })
    }
}

/// Splits `a*x1-2*x2+x3` into signed terms, leaving exponents such as
/// `1e-3` inside their coefficient.
fn split_terms(lhs: &str) -> Vec<(f64, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut sign = 1.0;
    let bytes = lhs.as_bytes();
    for (i, &c) in bytes.iter().enumerate() {
        if c != b'+' && c != b'-' {
            continue;
        }
        let term = &lhs[start..i];
        let in_exponent =
            term.ends_with(['e', 'E']) && !term.contains('*') && term[..term.len() - 1].parse::<f64>().is_ok();
        if in_exponent {
            continue;
        }
        if i > start {
            out.push((sign, term));
        } else if i > 0 {
            // a sign straight after another sign
            out.push((sign, ""));
        }
        sign = if c == b'-' { -1.0 } else { 1.0 };
        start = i + 1;
    }
    out.push((sign, &lhs[start..]));
    out
}

impl fmt::Display for PolicyRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyRule::Factual => write!(f, "factual"),
            PolicyRule::Constant(p) => write!(f, "p={p}"),
            PolicyRule::Linear { terms, op, cutoff } => {
                for (n, (c, j)) in terms.iter().enumerate() {
                    if n > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{c}*x[{j}]")?;
                }
                write!(f, " {} {cutoff}", op.symbol())
            }
            PolicyRule::Threshold {
                axis,
                cutoff,
                side,
                mode,
            } => {
                write!(
                    f,
                    "{mode:?}: x[{axis}] {} {cutoff}",
                    if *side == Side::Below { "<=" } else { ">=" }
                )
            }
            PolicyRule::Mixture(parts) => write!(f, "mixture of {} rules", parts.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEffect {
    pub theta: f64,
    /// Units with S = 1 (the conditioning set).
    pub n_identified: usize,
    /// Expected number of treatment-status changes among S = 1 units.
    pub n_affected: f64,
    /// Average change in the number treated per S = 1 unit.
    pub net_cost: f64,
    /// Same change as a raw count.
    pub net_cost_count: f64,
}

/// S_i: the unit's own-group fit lies in the domain of the curve imputing
/// its missing potential outcome.
pub fn s_indicator(ds: &Dataset, curves: &CurvePair, fits: &[Option<f64>]) -> Vec<bool> {
    ds.d()
        .iter()
        .zip(fits)
        .map(|(&d, f)| f.is_some_and(|v| curves.opposing(d).contains(v)))
        .collect()
}

/// Plug-in estimate of the policy's mean causal impact on S = 1 units.
pub fn policy_effect(
    ds: &Dataset,
    rule: &PolicyRule,
    curves: &CurvePair,
    fits: &[Option<f64>],
    s: &[bool],
) -> Result<PolicyEffect> {
    effect_with(ds, rule, s, |i| {
        let own = fits[i]?;
        curves.opposing(ds.d()[i]).eval(own)
    })
}

/// [`policy_effect`] with a caller-supplied imputation of each S = 1 unit's
/// missing potential outcome.
pub fn effect_with(
    ds: &Dataset,
    rule: &PolicyRule,
    s: &[bool],
    imputed: impl Fn(usize) -> Option<f64>,
) -> Result<PolicyEffect> {
    rule.validate(ds.k())?;
    let n_identified = s.iter().filter(|&&v| v).count();
    if n_identified == 0 {
        return Err(Error::NoIdentifiedUnits);
    }
    let mut gain = 0.0;
    let mut affected = 0.0;
    let mut net = 0.0;
    for i in (0..ds.n()).filter(|&i| s[i]) {
        let d = ds.d()[i];
        let p = rule.prob(ds.x_row(i), d);
        // probability that unit i switches status
        let switch = if d { 1.0 - p } else { p };
        affected += switch;
        net += if d { -switch } else { switch };
        if switch != 0.0 {
            let other = imputed(i)
                .ok_or_else(|| Error::InvalidArgument(format!("no imputed outcome for identified unit {i}")))?;
            gain += switch * (other - ds.y()[i]);
        }
    }
    let m = n_identified as f64;
    Ok(PolicyEffect {
        theta: gain / m,
        n_identified,
        n_affected: affected,
        net_cost: net / m,
        net_cost_count: net,
    })
}

#[derive(Debug)]
pub struct SweepRow {
    pub cutoff: f64,
    pub rule: PolicyRule,
    pub effect: Result<PolicyEffect>,
}

/// Policy effects of single-covariate cutoff rules along `axis`.
#[allow(clippy::too_many_arguments)]
pub fn threshold_sweep(
    ds: &Dataset,
    axis: usize,
    cutoffs: &[f64],
    side: Side,
    mode: SweepMode,
    curves: &CurvePair,
    fits: &[Option<f64>],
    s: &[bool],
) -> Result<Vec<SweepRow>> {
    if axis >= ds.k() {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
    }
    if cutoffs.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("cutoffs must be sorted".into()));
    }
    Ok(cutoffs
        .iter()
        .map(|&cutoff| {
            let rule = PolicyRule::Threshold {
                axis,
                cutoff,
                side,
                mode,
            };
            let effect = policy_effect(ds, &rule, curves, fits, s);
            SweepRow { cutoff, rule, effect }
        })
        .collect())
}
