use crate::error::{QcoinError, Result};
use rayon::prelude::*;

/// Finite input set, query set, answer statistics and output labels.
///
/// `p0[x * queries + q]` is the probability that query q answers 0 on input
/// x; a deterministic oracle only uses 0 and 1.
#[derive(Clone, Debug)]
pub struct AdversaryInstance {
    pub input_labels: Vec<String>,
    pub query_labels: Vec<String>,
    pub f: Vec<usize>,
    pub p0: Vec<f64>,
}

impl AdversaryInstance {
    pub fn inputs(&self) -> usize {
        self.input_labels.len()
    }

    pub fn queries(&self) -> usize {
        self.query_labels.len()
    }

    pub fn p0(&self, x: usize, q: usize) -> f64 {
        self.p0[x * self.queries() + q]
    }

    /// Whether the two answer distributions can be told apart at all.
    pub fn admissible(&self, x: usize, y: usize, q: usize) -> bool {
        self.p0(x, q) != self.p0(y, q)
    }

    pub fn is_deterministic(&self) -> bool {
        self.p0.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    fn size(&self) -> usize {
        self.inputs() * self.inputs() * self.queries()
    }
}

type PairWeight = dyn Fn(usize, usize) -> f64 + Send + Sync;
type TripleWeight = dyn Fn(usize, usize, usize) -> f64 + Send + Sync;

/// (w, w') over instance indices.
pub struct WeightScheme {
    pub name: String,
    pub w: Box<PairWeight>,
    pub w_prime: Box<TripleWeight>,
}

impl std::fmt::Debug for WeightScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightScheme").field("name", &self.name).finish()
    }
}

/// Largest |S|^2 |Q| the exhaustive evaluators accept.
pub const DEFAULT_ENUMERATION_CAP: usize = 200_000_000;

fn violation(inst: &AdversaryInstance, x: usize, y: usize, q: Option<usize>, reason: String) -> QcoinError {
    QcoinError::SchemeViolation {
        x: inst.input_labels[x].clone(),
        y: inst.input_labels[y].clone(),
        q: q.map_or_else(|| "-".to_string(), |q| inst.query_labels[q].clone()),
        reason,
    }
}

fn check_size(inst: &AdversaryInstance, cap: usize) -> Result<()> {
    if inst.size() > cap {
        return Err(QcoinError::Resource(format!(
            "|S|^2 |Q| = {} exceeds the enumeration cap {cap}; use the preset closed form",
            inst.size()
        )));
    }
    Ok(())
}

/// Exhaustively checks every weight-scheme condition; the first violation
/// found (in index order) is reported.
pub fn validate_scheme(inst: &AdversaryInstance, scheme: &WeightScheme, cap: usize) -> Result<()> {
    check_size(inst, cap)?;
    let nx = inst.inputs();
    let first = (0..nx)
        .into_par_iter()
        .map(|x| validate_row(inst, scheme, x))
        .find_first(|r| r.is_err());
    match first {
        Some(e) => e,
        None => Ok(()),
    }
}

fn validate_row(inst: &AdversaryInstance, scheme: &WeightScheme, x: usize) -> Result<()> {
    const TOL: f64 = 1e-12;
    for y in 0..inst.inputs() {
        let w = (scheme.w)(x, y);
        if !(w >= 0.0) || !w.is_finite() {
            return Err(violation(inst, x, y, None, format!("w = {w} is not a nonnegative number")));
        }
        let wt = (scheme.w)(y, x);
        if (w - wt).abs() > TOL * w.max(1.0) {
            return Err(violation(inst, x, y, None, format!("w is not symmetric ({w} vs {wt})")));
        }
        let same_output = inst.f[x] == inst.f[y];
        if same_output && w != 0.0 {
            return Err(violation(inst, x, y, None, format!("w = {w} on a pair with equal outputs")));
        }
        for q in 0..inst.queries() {
            let wp = (scheme.w_prime)(x, y, q);
            if !(wp >= 0.0) || !wp.is_finite() {
                return Err(violation(inst, x, y, Some(q), format!("w' = {wp} is not a nonnegative number")));
            }
            let separable = inst.admissible(x, y, q) && !same_output;
            if !separable {
                if wp != 0.0 {
                    return Err(violation(
                        inst,
                        x,
                        y,
                        Some(q),
                        format!("w' = {wp} must vanish when answers cannot differ or outputs agree"),
                    ));
                }
                continue;
            }
            let prod = wp * (scheme.w_prime)(y, x, q);
            if prod < w * w * (1.0 - TOL) {
                return Err(violation(
                    inst,
                    x,
                    y,
                    Some(q),
                    format!("w'(x,y,q) w'(y,x,q) = {prod} < w(x,y)^2 = {}", w * w),
                ));
            }
        }
    }
    Ok(())
}

/// nu(x, q) for every input and query, indexed [x * |Q| + q].
pub fn nu_table(inst: &AdversaryInstance, scheme: &WeightScheme) -> Vec<f64> {
    let nq = inst.queries();
    (0..inst.inputs())
        .into_par_iter()
        .flat_map_iter(|x| {
            (0..nq).map(move |q| (0..inst.inputs()).map(|y| (scheme.w_prime)(x, y, q)).sum())
        })
        .collect()
}

/// Evaluated bound and the triple attaining it.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryReport {
    pub bound: f64,
    pub x: usize,
    pub y: usize,
    pub q: usize,
}

/// min over separable (x, y, q) with w > 0 of
/// sqrt(mu(x) mu(y) / (nu(x,q) nu(y,q))) / (sqrt(P01) + sqrt(P10)).
pub fn stochastic_adversary_bound(
    inst: &AdversaryInstance,
    scheme: &WeightScheme,
    cap: usize,
) -> Result<AdversaryReport> {
    validate_scheme(inst, scheme, cap)?;
    let nx = inst.inputs();
    let nq = inst.queries();
    let mu: Vec<f64> = (0..nx).map(|x| (0..nx).map(|y| (scheme.w)(x, y)).sum()).collect();
    let nu = nu_table(inst, scheme);
    let best = (0..nx)
        .into_par_iter()
        .filter_map(|x| {
            let mut best: Option<AdversaryReport> = None;
            for y in 0..nx {
                if (scheme.w)(x, y) <= 0.0 {
                    continue;
                }
                for q in 0..nq {
                    if !inst.admissible(x, y, q) {
                        continue;
                    }
                    let (px, py) = (inst.p0(x, q), inst.p0(y, q));
                    let p01 = px * (1.0 - py);
                    let p10 = (1.0 - px) * py;
                    let v = (mu[x] * mu[y] / (nu[x * nq + q] * nu[y * nq + q])).sqrt()
                        / (p01.sqrt() + p10.sqrt());
                    if best.as_ref().is_none_or(|b| v < b.bound) {
                        best = Some(AdversaryReport { bound: v, x, y, q });
                    }
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.bound < a.bound { b } else { a });
    best.ok_or_else(|| QcoinError::Domain("no pair of inputs is separated by any query".into()))
}

/// Deterministic special case; rejects instances with fractional answers.
pub fn adversary_bound(inst: &AdversaryInstance, scheme: &WeightScheme, cap: usize) -> Result<AdversaryReport> {
    if !inst.is_deterministic() {
        return Err(QcoinError::Precondition(
            "answer probabilities must be 0 or 1; use stochastic_adversary_bound".into(),
        ));
    }
    stochastic_adversary_bound(inst, scheme, cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> AdversaryInstance {
        AdversaryInstance {
            input_labels: vec!["x".into(), "y".into()],
            query_labels: vec!["q".into()],
            f: vec![0, 1],
            p0: vec![1.0, 0.0],
        }
    }

    fn ones() -> WeightScheme {
        WeightScheme {
            name: "ones".into(),
            w: Box::new(|x, y| if x != y { 1.0 } else { 0.0 }),
            w_prime: Box::new(|x, y, _| if x != y { 1.0 } else { 0.0 }),
        }
    }

    #[test]
    fn two_point_bound_is_one() {
        let r = adversary_bound(&two_point(), &ones(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(r.bound, 1.0);
    }

    #[test]
    fn product_violation_names_triple() {
        let bad = WeightScheme {
            name: "bad".into(),
            w: Box::new(|x, y| if x != y { 2.0 } else { 0.0 }),
            w_prime: Box::new(|x, y, _| if x != y { 1.0 } else { 0.0 }),
        };
        match adversary_bound(&two_point(), &bad, DEFAULT_ENUMERATION_CAP) {
            Err(QcoinError::SchemeViolation { x, y, q, reason }) => {
                assert_eq!((x.as_str(), y.as_str(), q.as_str()), ("x", "y", "q"));
                assert!(reason.contains("w(x,y)^2"));
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_reduces_exactly() {
        let inst = two_point();
        let a = adversary_bound(&inst, &ones(), DEFAULT_ENUMERATION_CAP).unwrap();
        let b = stochastic_adversary_bound(&inst, &ones(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stochastic_factor() {
        let mut inst = two_point();
        inst.p0 = vec![0.5, 0.0];
        let r = stochastic_adversary_bound(&inst, &ones(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert!((r.bound - 1.0 / 0.5f64.sqrt()).abs() < 1e-15);
        assert!(adversary_bound(&inst, &ones(), DEFAULT_ENUMERATION_CAP).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            validate_scheme(&two_point(), &ones(), 3),
            Err(QcoinError::Resource(_))
        ));
    }
}
