//! Model specifications: rate function `f`, memory kernel `h`, their
//! derivatives and the analytic constants the simulators and kernel
//! builders rely on.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of probe points used when constants have to be estimated
/// numerically for user-defined models.
const PROBE_POINTS: usize = 10_000;
/// Safety margin applied to probed constants.
const PROBE_INFLATION: f64 = 1.1;

/// Known kernel families. The Erlang family unlocks an O(1)-per-event
/// recursion in the simulator; the others are used by tests and toys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `h(t) = beta^2 t exp(-beta t)`
    Erlang { beta: f64 },
    /// `h(t) = t`
    LinearRamp,
    /// `h == 0`
    Zero,
    /// Anything else; norms are probed numerically.
    Generic,
}

/// Rate function with its derivative and Lipschitz/sup constants.
#[derive(Clone)]
pub struct RateSpec {
    f: RealFn,
    f_prime: RealFn,
    pub lip_f: f64,
    pub sup_f_prime: f64,
    pub lip_f_prime: f64,
    /// Domain on which nonnegativity and the constants are probed.
    pub probe_domain: (f64, f64),
}

impl RateSpec {
    pub fn new(
        f: RealFn,
        f_prime: RealFn,
        lip_f: f64,
        sup_f_prime: f64,
        lip_f_prime: f64,
        probe_domain: (f64, f64),
    ) -> Self {
        Self { f, f_prime, lip_f, sup_f_prime, lip_f_prime, probe_domain }
    }

    /// Rate spec for a user-supplied `f`, with constants probed on `domain`.
    pub fn probed(f: RealFn, f_prime: Option<RealFn>, domain: (f64, f64)) -> Result<Self> {
        let f_prime = f_prime.unwrap_or_else(|| central_difference(f.clone()));
        let (lo, hi) = domain;
        if !(hi > lo) {
            return Err(Error::InvalidParameter(format!("empty probe domain [{lo}, {hi}]")));
        }
        let mut sup_fp: f64 = 0.0;
        let mut lip_fp: f64 = 0.0;
        let step = (hi - lo) / PROBE_POINTS as f64;
        let mut prev = (f_prime)(lo);
        for i in 0..=PROBE_POINTS {
            let x = lo + i as f64 * step;
            let v = (f)(x);
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("f({x}) = {v} < 0")));
            }
            let d = (f_prime)(x);
            sup_fp = sup_fp.max(d.abs());
            if i > 0 {
                lip_fp = lip_fp.max((d - prev).abs() / step);
            }
            prev = d;
        }
        let sup = sup_fp * PROBE_INFLATION;
        Ok(Self {
            f,
            f_prime,
            lip_f: sup,
            sup_f_prime: sup,
            lip_f_prime: lip_fp * PROBE_INFLATION,
            probe_domain: domain,
        })
    }

    pub fn f(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn f_prime(&self, x: f64) -> f64 {
        (self.f_prime)(x)
    }
}

impl fmt::Debug for RateSpec {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("RateSpec")
            .field("lip_f", &self.lip_f)
            .field("sup_f_prime", &self.sup_f_prime)
            .field("lip_f_prime", &self.lip_f_prime)
            .finish()
    }
}

/// Memory kernel with derivative; `h(0) = 0` is required and checked.
#[derive(Clone)]
pub struct KernelSpec {
    h: RealFn,
    h_prime: RealFn,
    pub kind: KernelKind,
}

impl KernelSpec {
    pub fn new(h: RealFn, h_prime: RealFn, kind: KernelKind) -> Result<Self> {
        let spec = Self { h, h_prime, kind };
        let h0 = spec.h(0.0);
        if h0 != 0.0 {
            return Err(Error::InvalidParameter(format!("h(0) must be 0 exactly, got {h0}")));
        }
        Ok(spec)
    }

    pub fn erlang(beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        Self::new(
            Arc::new(move |t: f64| beta * beta * t * (-beta * t).exp()),
            Arc::new(move |t: f64| beta * beta * (-beta * t).exp() * (1.0 - beta * t)),
            KernelKind::Erlang { beta },
        )
    }

    pub fn linear_ramp() -> Self {
        Self { h: Arc::new(|t| t), h_prime: Arc::new(|_| 1.0), kind: KernelKind::LinearRamp }
    }

    pub fn zero() -> Self {
        Self { h: Arc::new(|_| 0.0), h_prime: Arc::new(|_| 0.0), kind: KernelKind::Zero }
    }

    pub fn h(&self, t: f64) -> f64 {
        (self.h)(t)
    }

    pub fn h_prime(&self, t: f64) -> f64 {
        (self.h_prime)(t)
    }

    /// `sup_{[0,T]} |h|`; exact per family, probed (and inflated) otherwise.
    pub fn h_sup(&self, horizon: f64) -> f64 {
        match self.kind {
            KernelKind::Erlang { beta } => {
                if horizon <= 1.0 / beta {
                    self.h(horizon)
                } else {
                    beta * (-1.0f64).exp()
                }
            }
            KernelKind::LinearRamp => horizon,
            KernelKind::Zero => 0.0,
            KernelKind::Generic => self.probe(horizon, |s, t| s.h(t).abs()) * PROBE_INFLATION,
        }
    }

    /// `sup_{[0,T]} |h'|`; exact per family, probed otherwise.
    pub fn h_prime_sup(&self, horizon: f64) -> f64 {
        match self.kind {
            KernelKind::Erlang { beta } => beta * beta,
            KernelKind::LinearRamp => 1.0,
            KernelKind::Zero => 0.0,
            KernelKind::Generic => self.probe(horizon, |s, t| s.h_prime(t).abs()) * PROBE_INFLATION,
        }
    }

    /// `||h'||_{L1[0,T]}` (total variation of `h`); exact per family,
    /// trapezoid of `|h'|` otherwise.
    pub fn h_prime_l1(&self, horizon: f64) -> f64 {
        match self.kind {
            KernelKind::Erlang { beta } => {
                let peak = beta * (-1.0f64).exp();
                if horizon <= 1.0 / beta {
                    self.h(horizon)
                } else {
                    2.0 * peak - self.h(horizon)
                }
            }
            KernelKind::LinearRamp => horizon,
            KernelKind::Zero => 0.0,
            KernelKind::Generic => {
                let step = horizon / PROBE_POINTS as f64;
                let mut sum = 0.5 * (self.h_prime(0.0).abs() + self.h_prime(horizon).abs());
                for i in 1..PROBE_POINTS {
                    sum += self.h_prime(i as f64 * step).abs();
                }
                sum * step * PROBE_INFLATION
            }
        }
    }

    fn probe(&self, horizon: f64, eval: impl Fn(&Self, f64) -> f64) -> f64 {
        let step = horizon / PROBE_POINTS as f64;
        (0..=PROBE_POINTS).map(|i| eval(self, i as f64 * step)).fold(0.0, f64::max)
    }

    /// `int_0^inf h`, integrated on a growing horizon until the tail settles.
    pub fn integral_to_infinity(&self, tol: f64) -> f64 {
        match self.kind {
            KernelKind::Erlang { .. } => 1.0,
            KernelKind::Zero => 0.0,
            _ => {
                let mut horizon = 10.0;
                let mut total = self.integral_to(horizon);
                loop {
                    let next = self.integral_to(2.0 * horizon);
                    if (next - total).abs() < 0.01 * tol || horizon > 1e5 {
                        return next;
                    }
                    total = next;
                    horizon *= 2.0;
                }
            }
        }
    }

    fn integral_to(&self, horizon: f64) -> f64 {
        let n = 100_000usize;
        let step = horizon / n as f64;
        let mut sum = 0.5 * (self.h(0.0) + self.h(horizon));
        for i in 1..n {
            sum += self.h(i as f64 * step);
        }
        sum * step
    }
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("KernelSpec").field("kind", &self.kind).finish()
    }
}

/// The parameter pair `(f, h)` together with its analytic constants.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub rate: RateSpec,
    pub kernel: KernelSpec,
}

impl ModelSpec {
    pub fn f(&self, x: f64) -> f64 {
        self.rate.f(x)
    }

    pub fn f_prime(&self, x: f64) -> f64 {
        self.rate.f_prime(x)
    }

    pub fn h(&self, t: f64) -> f64 {
        self.kernel.h(t)
    }

    pub fn h_prime(&self, t: f64) -> f64 {
        self.kernel.h_prime(t)
    }

    pub fn lip_f(&self) -> f64 {
        self.rate.lip_f
    }

    pub fn sup_f_prime(&self) -> f64 {
        self.rate.sup_f_prime
    }

    pub fn lip_f_prime(&self) -> f64 {
        self.rate.lip_f_prime
    }
}

/// Builtin model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinModel {
    SigmoidErlang,
    ConstantRate,
    LinearToy,
}

impl std::str::FromStr for BuiltinModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid_erlang" => Ok(Self::SigmoidErlang),
            "constant_rate" => Ok(Self::ConstantRate),
            "linear_toy" => Ok(Self::LinearToy),
            other => Err(Error::UnknownModel(other.into())),
        }
    }
}

fn sigmoid_rate(gamma: f64) -> RateSpec {
    let f = Arc::new(move |x: f64| 1.0 / (1.0 + (-gamma * (x - 0.5)).exp()));
    let fc = f.clone();
    let f_prime = Arc::new(move |x: f64| {
        let s = fc(x);
        gamma * s * (1.0 - s)
    });
    // sup |f'| = gamma/4 at x = 1/2; sup |f''| = gamma^2 max |s(1-s)(1-2s)| = gamma^2/(6 sqrt 3).
    RateSpec::new(
        f,
        f_prime,
        gamma / 4.0,
        gamma / 4.0,
        gamma * gamma / (6.0 * 3.0_f64.sqrt()),
        (-5.0, 5.0),
    )
}

/// Construct a builtin [`ModelSpec`] with closed-form derivatives and constants.
///
/// * `sigmoid_erlang`: params `[gamma, beta]`,
///   `f(x) = 1/(1+exp(-gamma (x-1/2)))`, `h(t) = beta^2 t exp(-beta t)`.
/// * `constant_rate`: params `[c]` or `[c, beta]`, `f == c` with an Erlang kernel.
/// * `linear_toy`: params `[a, c]`, `f(x) = a + c x`, `h(t) = t`.
pub fn builtin_model(which: BuiltinModel, params: &[f64]) -> Result<ModelSpec> {
    match which {
        BuiltinModel::SigmoidErlang => {
            let [gamma, beta] = two_params("sigmoid_erlang", params)?;
            if !(gamma > 0.0) || !(beta > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "sigmoid_erlang needs gamma > 0 and beta > 0, got ({gamma}, {beta})"
                )));
            }
            Ok(ModelSpec {
                name: format!("sigmoid_erlang(gamma={gamma},beta={beta})"),
                rate: sigmoid_rate(gamma),
                kernel: KernelSpec::erlang(beta)?,
            })
        }
        BuiltinModel::ConstantRate => {
            if params.is_empty() || params.len() > 2 {
                return Err(Error::InvalidParameter(
                    "constant_rate takes params [c] or [c, beta]".into(),
                ));
            }
            let c = params[0];
            if !(c >= 0.0) {
                return Err(Error::InvalidParameter(format!("constant_rate needs c >= 0, got {c}")));
            }
            let beta = params.get(1).copied().unwrap_or(1.0);
            Ok(ModelSpec {
                name: format!("constant_rate(c={c},beta={beta})"),
                rate: RateSpec::new(
                    Arc::new(move |_| c),
                    Arc::new(|_| 0.0),
                    0.0,
                    0.0,
                    0.0,
                    (-5.0, 5.0),
                ),
                kernel: KernelSpec::erlang(beta)?,
            })
        }
        BuiltinModel::LinearToy => {
            let [a, c] = two_params("linear_toy", params)?;
            if !(a >= 0.0) || !(c >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "linear_toy needs a >= 0 and c >= 0, got ({a}, {c})"
                )));
            }
            Ok(ModelSpec {
                name: format!("linear_toy(a={a},c={c})"),
                rate: RateSpec::new(
                    Arc::new(move |x| a + c * x),
                    Arc::new(move |_| c),
                    c,
                    c,
                    0.0,
                    (0.0, 5.0),
                ),
                kernel: KernelSpec::linear_ramp(),
            })
        }
    }
}

fn two_params(name: &str, params: &[f64]) -> Result<[f64; 2]> {
    match params {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::InvalidParameter(format!(
            "{name} takes exactly two params, got {}",
            params.len()
        ))),
    }
}

/// Model defined by closed-form expression strings, e.g. from a config file.
/// Derivatives may be supplied; otherwise central differences with step
/// `1e-6 * max(1, |x|)` are used. Lipschitz/sup constants are probed on
/// `domain` and inflated by 10%, and are therefore estimates.
pub fn expression_model(
    name: &str,
    f_expr: &str,
    f_prime_expr: Option<&str>,
    h_expr: &str,
    h_prime_expr: Option<&str>,
    domain: (f64, f64),
) -> Result<ModelSpec> {
    let f = parse_expr(f_expr, "x")?;
    let f_prime = f_prime_expr.map(|e| parse_expr(e, "x")).transpose()?;
    let h = parse_expr(h_expr, "t")?;
    let h_prime = match h_prime_expr {
        Some(e) => parse_expr(e, "t")?,
        None => central_difference(h.clone()),
    };
    Ok(ModelSpec {
        name: name.to_string(),
        rate: RateSpec::probed(f, f_prime, domain)?,
        kernel: KernelSpec::new(h, h_prime, KernelKind::Generic)?,
    })
}

fn parse_expr(expr: &str, var: &str) -> Result<RealFn> {
    let parsed: meval::Expr = expr.parse().map_err(|e| Error::Expression {
        expr: expr.to_string(),
        message: format!("{e}"),
    })?;
    // Validate unknown symbols up front; the bound closure itself is not
    // Send + Sync, so evaluation below goes through a per-call context.
    let _ = parsed.clone().bind(var).map_err(|e| Error::Expression {
        expr: expr.to_string(),
        message: format!("{e}"),
    })?;
    let var = var.to_string();
    Ok(Arc::new(move |x: f64| {
        let mut ctx = meval::Context::new();
        ctx.var(var.clone(), x);
        parsed.eval_with_context(&ctx).unwrap_or(f64::NAN)
    }))
}

fn central_difference(f: RealFn) -> RealFn {
    Arc::new(move |x: f64| {
        let step = 1e-6 * x.abs().max(1.0);
        (f(x + step) - f(x - step)) / (2.0 * step)
    })
}

/// A root of `f(x) = x` with its linearized stability flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub x: f64,
    /// `|f'(x*)| < 1`, the linearized criterion under `int h = 1`.
    pub stable: bool,
    pub f_prime: f64,
}

/// All solutions of `f(x) = x` in `bracket`, found by scan plus bisection.
///
/// Requires `int_0^inf h = 1` within `tol` (the stationarity argument
/// that reduces rest points to fixed points of `f` needs it).
pub fn fixed_points(spec: &ModelSpec, bracket: (f64, f64), tol: f64) -> Result<Vec<FixedPoint>> {
    let integral = spec.kernel.integral_to_infinity(tol);
    if (integral - 1.0).abs() > tol {
        return Err(Error::KernelNotNormalized(integral));
    }
    let (lo, hi) = bracket;
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("empty bracket [{lo}, {hi}]")));
    }
    let g = |x: f64| spec.f(x) - x;
    let cells = 4096usize;
    let step = (hi - lo) / cells as f64;
    let mut roots = Vec::new();
    let mut prev_x = lo;
    let mut prev_g = g(lo);
    if prev_g == 0.0 {
        roots.push(lo);
    }
    for i in 1..=cells {
        let x = lo + i as f64 * step;
        let gx = g(x);
        if gx == 0.0 {
            roots.push(x);
        } else if prev_g != 0.0 && prev_g.signum() != gx.signum() {
            roots.push(bisect(&g, prev_x, x, tol));
        }
        prev_x = x;
        prev_g = gx;
    }
    if roots.is_empty() {
        return Err(Error::NoSignChange(lo, hi));
    }
    Ok(roots
        .into_iter()
        .map(|x| {
            let fp = spec.f_prime(x);
            FixedPoint { x, stable: fp.abs() < 1.0, f_prime: fp }
        })
        .collect())
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut g_lo = g(lo);
    for _ in 0..200 {
        if hi - lo < tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return mid;
        }
        if g_lo.signum() != g_mid.signum() {
            hi = mid;
        } else {
            lo = mid;
            g_lo = g_mid;
        }
    }
    0.5 * (lo + hi)
}

/// K coupled classes: per-class rates, a K x K kernel matrix and asymptotic
/// proportions `p_k`.
#[derive(Debug, Clone)]
pub struct MultiClassSpec {
    pub name: String,
    pub rates: Vec<RateSpec>,
    /// `kernels[k][l]` couples class `l` activity into class `k` intensity.
    pub kernels: Vec<Vec<KernelSpec>>,
    pub proportions: Vec<f64>,
}

impl MultiClassSpec {
    pub fn new(
        name: &str,
        rates: Vec<RateSpec>,
        kernels: Vec<Vec<KernelSpec>>,
        proportions: Vec<f64>,
    ) -> Result<Self> {
        let k = rates.len();
        if k == 0 {
            return Err(Error::InvalidMultiClass("need at least one class".into()));
        }
        if kernels.len() != k || kernels.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidMultiClass(format!("kernel matrix must be {k} x {k}")));
        }
        if proportions.len() != k {
            return Err(Error::InvalidMultiClass(format!("need {k} proportions")));
        }
        if proportions.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::InvalidMultiClass("each p_k must lie in (0, 1]".into()));
        }
        let total: f64 = proportions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMultiClass(format!("proportions sum to {total}, not 1")));
        }
        for (ki, row) in kernels.iter().enumerate() {
            for (li, kernel) in row.iter().enumerate() {
                if kernel.h(0.0) != 0.0 {
                    return Err(Error::InvalidMultiClass(format!("h[{ki}][{li}](0) != 0")));
                }
            }
        }
        Ok(Self { name: name.to_string(), rates, kernels, proportions })
    }

    /// Wrap a scalar model as a one-class system.
    pub fn from_scalar(spec: &ModelSpec) -> Self {
        Self {
            name: spec.name.clone(),
            rates: vec![spec.rate.clone()],
            kernels: vec![vec![spec.kernel.clone()]],
            proportions: vec![1.0],
        }
    }

    pub fn class_count(&self) -> usize {
        self.rates.len()
    }

    /// Split `n_total` units into class sizes by largest remainder, so that
    /// `sum N_k = N` and `N_k / N -> p_k`. Every class gets at least one unit.
    pub fn sizes(&self, n_total: usize) -> Result<Vec<usize>> {
        let k = self.class_count();
        if n_total < k {
            return Err(Error::InvalidMultiClass(format!(
                "need at least {k} units for {k} classes, got {n_total}"
            )));
        }
        let mut sizes: Vec<usize> =
            self.proportions.iter().map(|p| (p * n_total as f64).floor() as usize).collect();
        // Largest fractional part first; ties broken by class index.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let fa = self.proportions[a] * n_total as f64 - sizes[a] as f64;
            let fb = self.proportions[b] * n_total as f64 - sizes[b] as f64;
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        let assigned: usize = sizes.iter().sum();
        for i in 0..n_total - assigned {
            sizes[order[i % k]] += 1;
        }
        for s in sizes.iter_mut() {
            if *s == 0 {
                *s = 1;
            }
        }
        let mut excess: usize = sizes.iter().sum::<usize>() - n_total;
        for s in sizes.iter_mut().rev() {
            while excess > 0 && *s > 1 {
                *s -= 1;
                excess -= 1;
            }
        }
        Ok(sizes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{uniform01, SeedPolicy, StreamDomain};

    fn sigmoid(gamma: f64, beta: f64) -> ModelSpec {
        builtin_model(BuiltinModel::SigmoidErlang, &[gamma, beta]).unwrap()
    }

    #[test]
    fn sigmoid_center_value_is_half() {
        let m = sigmoid(2.0, 2.0);
        assert!((m.f(0.5) - 0.5).abs() < 1e-15);
        assert!((m.sup_f_prime() - 0.5).abs() < 1e-15);
        assert!((m.lip_f() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn erlang_kernel_integrates_to_one() {
        for beta in [0.5, 2.0, 4.0] {
            let k = KernelSpec::erlang(beta).unwrap();
            // Fine trapezoid on a long horizon, independent of the closed form.
            let horizon = 60.0 / beta;
            let n = 200_000;
            let step = horizon / n as f64;
            let mut sum = 0.5 * (k.h(0.0) + k.h(horizon));
            for i in 1..n {
                sum += k.h(i as f64 * step);
            }
            assert!((sum * step - 1.0).abs() < 1e-8, "beta={beta}");
        }
    }

    #[test]
    fn constant_rate_is_degenerate() {
        let m = builtin_model(BuiltinModel::ConstantRate, &[1.0]).unwrap();
        for x in [-3.0, 0.0, 7.5] {
            assert_eq!(m.f(x), 1.0);
            assert_eq!(m.f_prime(x), 0.0);
        }
        assert_eq!(m.sup_f_prime(), 0.0);
    }

    #[test]
    fn builtin_rejects_bad_params() {
        assert!(builtin_model(BuiltinModel::SigmoidErlang, &[0.0, 2.0]).is_err());
        assert!(builtin_model(BuiltinModel::SigmoidErlang, &[2.0, -1.0]).is_err());
        assert!(builtin_model(BuiltinModel::SigmoidErlang, &[2.0]).is_err());
        assert!(builtin_model(BuiltinModel::ConstantRate, &[-1.0]).is_err());
        assert!("nonsense".parse::<BuiltinModel>().is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        // Central-difference check of f' against f (and h' against h) at 100
        // random points, relative error < 1e-6.
        let policy = SeedPolicy::new(2024);
        let mut rng = policy.stream(StreamDomain::Verify, 0, 0);
        let models = [
            sigmoid(2.0, 2.0),
            sigmoid(5.0, 4.0),
            builtin_model(BuiltinModel::ConstantRate, &[1.0]).unwrap(),
            builtin_model(BuiltinModel::LinearToy, &[0.5, 1.0]).unwrap(),
        ];
        for m in &models {
            for _ in 0..100 {
                let x = -5.0 + 10.0 * uniform01(&mut rng);
                let step = 1e-5 * x.abs().max(1.0);
                let fd = (m.f(x + step) - m.f(x - step)) / (2.0 * step);
                let exact = m.f_prime(x);
                let scale = exact.abs().max(1e-3);
                assert!(
                    (fd - exact).abs() / scale < 1e-6,
                    "{}: f' mismatch at {x}: fd={fd} exact={exact}",
                    m.name
                );
            }
            for _ in 0..100 {
                let t = 10.0 * uniform01(&mut rng);
                let step = 1e-5 * t.abs().max(1.0);
                let fd = (m.h(t + step) - m.h(t - step)) / (2.0 * step);
                let exact = m.h_prime(t);
                let scale = exact.abs().max(1e-3);
                assert!(
                    (fd - exact).abs() / scale < 1e-6,
                    "{}: h' mismatch at {t}",
                    m.name
                );
            }
        }
    }

    #[test]
    fn lipschitz_constants_hold_on_random_pairs() {
        let policy = SeedPolicy::new(7);
        let mut rng = policy.stream(StreamDomain::Verify, 0, 1);
        let m = sigmoid(2.0, 2.0);
        for _ in 0..500 {
            let x = -5.0 + 10.0 * uniform01(&mut rng);
            let y = -5.0 + 10.0 * uniform01(&mut rng);
            assert!((m.f(x) - m.f(y)).abs() <= m.lip_f() * (x - y).abs() + 1e-12);
            assert!(m.f_prime(x).abs() <= m.sup_f_prime() + 1e-12);
            assert!(
                (m.f_prime(x) - m.f_prime(y)).abs() <= m.lip_f_prime() * (x - y).abs() + 1e-12
            );
        }
    }

    #[test]
    fn erlang_norms_are_exact() {
        let k = KernelSpec::erlang(2.0).unwrap();
        let horizon = 10.0;
        // Probe-based references.
        let n = 100_000;
        let step = horizon / n as f64;
        let mut sup: f64 = 0.0;
        let mut sup_p: f64 = 0.0;
        let mut l1 = 0.5 * (k.h_prime(0.0).abs() + k.h_prime(horizon).abs());
        for i in 0..=n {
            let t = i as f64 * step;
            sup = sup.max(k.h(t).abs());
            sup_p = sup_p.max(k.h_prime(t).abs());
            if i > 0 && i < n {
                l1 += k.h_prime(t).abs();
            }
        }
        l1 *= step;
        assert!((k.h_sup(horizon) - sup).abs() < 1e-6);
        assert!((k.h_prime_sup(horizon) - sup_p).abs() < 1e-6);
        assert!((k.h_prime_l1(horizon) - l1).abs() < 1e-4);
    }

    #[test]
    fn expression_model_round_trips_sigmoid() {
        let m = expression_model(
            "custom",
            "1/(1+exp(-2*(x-0.5)))",
            None,
            "4*t*exp(-2*t)",
            None,
            (-5.0, 5.0),
        )
        .unwrap();
        let reference = sigmoid(2.0, 2.0);
        for x in [-1.0, 0.0, 0.5, 2.0] {
            assert!((m.f(x) - reference.f(x)).abs() < 1e-12);
            assert!((m.f_prime(x) - reference.f_prime(x)).abs() < 1e-5);
        }
        for t in [0.0, 0.3, 1.7] {
            assert!((m.h(t) - reference.h(t)).abs() < 1e-12);
        }
        // Probed constant brackets the exact one from above (inflated by 10%).
        assert!(m.sup_f_prime() >= 0.5 && m.sup_f_prime() <= 0.56);
    }

    #[test]
    fn expression_model_rejects_nonzero_h0() {
        let err = expression_model("bad", "1", None, "exp(-t)", None, (-1.0, 1.0));
        assert!(err.is_err());
    }

    #[test]
    fn expression_model_rejects_negative_f() {
        let err = expression_model("bad", "x", None, "t*exp(-t)", None, (-1.0, 1.0));
        assert!(err.is_err());
    }

    #[test]
    fn fixed_points_stable_regime() {
        let m = sigmoid(2.0, 2.0);
        let pts = fixed_points(&m, (0.0, 1.0), 1e-10).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].x - 0.5).abs() < 1e-9);
        assert!(pts[0].stable);
        assert!((pts[0].f_prime - 0.5).abs() < 1e-9);
    }

    #[test]
    fn fixed_points_critical_regime() {
        let m = sigmoid(4.0, 2.0);
        let pts = fixed_points(&m, (0.0, 1.0), 1e-6).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].x - 0.5).abs() < 1e-3);
        // f'(1/2) = gamma/4 = 1: critical, not strictly stable.
        assert!(!pts[0].stable || (pts[0].f_prime.abs() - 1.0).abs() < 1e-6);
        assert!((pts[0].f_prime.abs() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn fixed_points_bistable_regime() {
        // Independent oracle: fixed-point iteration x <- f(x) from 0.1 / 0.9
        // converges to the stable roots; frozen reference values below were
        // computed with 30-digit arithmetic.
        let m = sigmoid(5.0, 4.0);
        let mut lo = 0.1;
        let mut hi = 0.9;
        for _ in 0..400 {
            lo = m.f(lo);
            hi = m.f(hi);
        }
        assert!((lo - 0.144_794_108_256_064_81).abs() < 1e-12);
        assert!((hi - 0.855_205_891_743_935_19).abs() < 1e-12);

        let pts = fixed_points(&m, (0.0, 1.0), 1e-10).unwrap();
        assert_eq!(pts.len(), 3);
        assert!((pts[0].x - lo).abs() < 1e-8);
        assert!((pts[1].x - 0.5).abs() < 1e-8);
        assert!((pts[2].x - hi).abs() < 1e-8);
        assert!(pts[0].stable && !pts[1].stable && pts[2].stable);
        assert!(0.0 < pts[0].x && pts[0].x < 0.5 && 0.5 < pts[2].x && pts[2].x < 1.0);
    }

    #[test]
    fn fixed_points_need_sign_change() {
        // f == 2 has no fixed point in [0, 1].
        let m = builtin_model(BuiltinModel::ConstantRate, &[2.0]).unwrap();
        assert!(matches!(
            fixed_points(&m, (0.0, 1.0), 1e-8),
            Err(Error::NoSignChange(_, _))
        ));
    }

    #[test]
    fn fixed_points_reject_unnormalized_kernel() {
        let m = builtin_model(BuiltinModel::LinearToy, &[0.2, 0.4]).unwrap();
        assert!(matches!(
            fixed_points(&m, (0.0, 1.0), 1e-8),
            Err(Error::KernelNotNormalized(_))
        ));
    }

    #[test]
    fn multiclass_sizes_follow_proportions() {
        let m = sigmoid(2.0, 2.0);
        let rates = vec![m.rate.clone(), m.rate.clone(), m.rate.clone()];
        let kers = vec![
            vec![m.kernel.clone(), m.kernel.clone(), m.kernel.clone()],
            vec![m.kernel.clone(), m.kernel.clone(), m.kernel.clone()],
            vec![m.kernel.clone(), m.kernel.clone(), m.kernel.clone()],
        ];
        let spec = MultiClassSpec::new("three", rates, kers, vec![0.5, 0.3, 0.2]).unwrap();
        for n in [3usize, 10, 97, 1000] {
            let sizes = spec.sizes(n).unwrap();
            assert_eq!(sizes.iter().sum::<usize>(), n);
            assert!(sizes.iter().all(|&s| s >= 1));
        }
        let sizes = spec.sizes(1000).unwrap();
        assert_eq!(sizes, vec![500, 300, 200]);
    }

    #[test]
    fn multiclass_validation() {
        let m = sigmoid(2.0, 2.0);
        assert!(MultiClassSpec::new(
            "bad-p",
            vec![m.rate.clone()],
            vec![vec![m.kernel.clone()]],
            vec![0.7],
        )
        .is_err());
        assert!(MultiClassSpec::new(
            "bad-shape",
            vec![m.rate.clone(), m.rate.clone()],
            vec![vec![m.kernel.clone()]],
            vec![0.5, 0.5],
        )
        .is_err());
        let one = MultiClassSpec::from_scalar(&m);
        assert_eq!(one.class_count(), 1);
        assert_eq!(one.sizes(17).unwrap(), vec![17]);
    }
}
