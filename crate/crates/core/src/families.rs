//! Named analytic function families.
//!
//! Weight systems, measure densities and test functions are all drawn from
//! this registry so that experiment configs can reference them by name and
//! the Chebyshevian machinery can ask for exact derivatives of any order.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A function family on [0, 1] with closed-form derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FunctionSpec {
    /// f(x) = value
    Constant { value: f64 },
    /// f(x) = coeffs[0] + coeffs[1] x + coeffs[2] x^2 + ...
    Poly { coeffs: Vec<f64> },
    /// f(x) = 1 + eps sin(2 pi freq x)
    OnePlusEpsSin { eps: f64, freq: f64 },
    /// f(x) = exp(rate x)
    Exp { rate: f64 },
    /// f(x) = low for x < at, high otherwise
    Step { at: f64, low: f64, high: f64 },
    /// f(x) = offset + amplitude sin(2 pi freq x + phase)
    Sine {
        amplitude: f64,
        freq: f64,
        phase: f64,
        offset: f64,
    },
}

impl FunctionSpec {
    pub fn constant(value: f64) -> Self {
        FunctionSpec::Constant { value }
    }

    /// Builds a family from its registry name and a parameter object,
    /// the shape used by measure and weight entries in experiment configs.
    pub fn from_name_params(name: &str, params: &serde_json::Value) -> Result<Self> {
        let mut obj = match params {
            serde_json::Value::Null => serde_json::Map::new(),
            serde_json::Value::Object(map) => map.clone(),
            _ => {
                return Err(Error::BadFamilyParams {
                    family: name.to_string(),
                    why: "params must be an object".to_string(),
                })
            }
        };
        obj.insert(
            "name".to_string(),
            serde_json::Value::String(name.to_string()),
        );
        serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| {
            if e.to_string().contains("unknown variant") {
                Error::UnknownFamily(name.to_string())
            } else {
                Error::BadFamilyParams {
                    family: name.to_string(),
                    why: e.to_string(),
                }
            }
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FunctionSpec::Constant { value } => *value,
            FunctionSpec::Poly { coeffs } => {
                let mut acc = 0.0;
                for &c in coeffs.iter().rev() {
                    acc = acc * x + c;
                }
                acc
            }
            FunctionSpec::OnePlusEpsSin { eps, freq } => 1.0 + eps * (2.0 * PI * freq * x).sin(),
            FunctionSpec::Exp { rate } => (rate * x).exp(),
            FunctionSpec::Step { at, low, high } => {
                if x < *at {
                    *low
                } else {
                    *high
                }
            }
            FunctionSpec::Sine {
                amplitude,
                freq,
                phase,
                offset,
            } => offset + amplitude * (2.0 * PI * freq * x + phase).sin(),
        }
    }

    /// d-th derivative at x; order 0 is the value itself.
    pub fn deriv(&self, order: usize, x: f64) -> f64 {
        if order == 0 {
            return self.eval(x);
        }
        match self {
            FunctionSpec::Constant { .. } | FunctionSpec::Step { .. } => 0.0,
            FunctionSpec::Poly { coeffs } => {
                let mut acc = 0.0;
                for (j, &c) in coeffs.iter().enumerate().rev() {
                    if j < order {
                        break;
                    }
                    let mut fall = 1.0;
                    for r in 0..order {
                        fall *= (j - r) as f64;
                    }
                    acc += c * fall * x.powi((j - order) as i32);
                }
                acc
            }
            FunctionSpec::OnePlusEpsSin { eps, freq } => {
                let om = 2.0 * PI * freq;
                eps * om.powi(order as i32) * (om * x + order as f64 * PI / 2.0).sin()
            }
            FunctionSpec::Exp { rate } => rate.powi(order as i32) * (rate * x).exp(),
            FunctionSpec::Sine {
                amplitude,
                freq,
                phase,
                ..
            } => {
                let om = 2.0 * PI * freq;
                amplitude * om.powi(order as i32) * (om * x + phase + order as f64 * PI / 2.0).sin()
            }
        }
    }

    /// Jump locations inside (0, 1), if any.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            FunctionSpec::Step { at, .. } if *at > 0.0 && *at < 1.0 => vec![*at],
            _ => Vec::new(),
        }
    }

    /// True when derivatives of every order exist on [0, 1].
    pub fn is_smooth(&self) -> bool {
        !matches!(self, FunctionSpec::Step { .. })
    }

    /// Modulus of continuity sup |f(x) - f(y)| over |x - y| <= delta, x, y in [0, 1].
    /// Closed form where available, otherwise a dense sampled estimate.
    pub fn modulus(&self, delta: f64) -> f64 {
        let delta = delta.clamp(0.0, 1.0);
        if delta == 0.0 {
            return 0.0;
        }
        match self {
            FunctionSpec::Constant { .. } => 0.0,
            FunctionSpec::OnePlusEpsSin { eps, freq } => sine_modulus(eps.abs(), *freq, delta),
            FunctionSpec::Sine {
                amplitude, freq, ..
            } => sine_modulus(amplitude.abs(), *freq, delta),
            FunctionSpec::Exp { rate } => {
                (rate.max(0.0)).exp() * (1.0 - (-rate.abs() * delta).exp())
            }
            FunctionSpec::Step { at, low, high } => {
                if *at > 0.0 && *at < 1.0 {
                    (high - low).abs()
                } else {
                    0.0
                }
            }
            FunctionSpec::Poly { .. } => self.sampled_modulus(delta),
        }
    }

    fn sampled_modulus(&self, delta: f64) -> f64 {
        const N: usize = 2048;
        let vals: Vec<f64> = (0..=N).map(|i| self.eval(i as f64 / N as f64)).collect();
        let window = ((delta * N as f64).ceil() as usize).min(N);
        let mut best: f64 = 0.0;
        for i in 0..=N {
            let hi = (i + window).min(N);
            for j in i + 1..=hi {
                // only admit pairs actually within delta
                if (j - i) as f64 / N as f64 <= delta + 1e-15 {
                    best = best.max((vals[j] - vals[i]).abs());
                }
            }
        }
        best
    }

    /// Compact label for report rows.
    pub fn label(&self) -> String {
        match self {
            FunctionSpec::Constant { value } => format!("const({value})"),
            FunctionSpec::Poly { coeffs } => format!("poly({coeffs:?})"),
            FunctionSpec::OnePlusEpsSin { eps, freq } => {
                format!("1+{eps}*sin(2pi*{freq}x)")
            }
            FunctionSpec::Exp { rate } => format!("exp({rate}x)"),
            FunctionSpec::Step { at, low, high } => format!("step@{at}[{low},{high}]"),
            FunctionSpec::Sine {
                amplitude,
                freq,
                phase,
                offset,
            } => format!("{offset}+{amplitude}*sin(2pi*{freq}x+{phase})"),
        }
    }
}

/// sup |a sin(w x) - a sin(w y)| over |x - y| <= delta with w = 2 pi freq:
/// 2 a sin(pi freq delta) until half a period separates the points, then 2 a.
fn sine_modulus(amp: f64, freq: f64, delta: f64) -> f64 {
    let half_period = 0.5 / freq.abs().max(1e-300);
    if delta >= half_period {
        2.0 * amp
    } else {
        2.0 * amp * (PI * freq.abs() * delta).sin()
    }
}

/// Deterministic pool of test functions with sup norm 1, mixing smooth and
/// discontinuous shapes. Used by experiments probing projector differences.
pub fn test_function_pool(seed: u64, count: usize) -> Vec<FunctionSpec> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::with_capacity(count);
    for idx in 0..count {
        let spec = match idx % 3 {
            0 => {
                let coeffs: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                FunctionSpec::Poly { coeffs }
            }
            1 => FunctionSpec::Step {
                at: rng.gen_range(0.15..0.85),
                low: rng.gen_range(-1.0..0.0),
                high: rng.gen_range(0.0..1.0),
            },
            _ => FunctionSpec::Sine {
                amplitude: rng.gen_range(0.3..1.0),
                freq: rng.gen_range(1..4) as f64,
                phase: rng.gen_range(0.0..PI),
                offset: rng.gen_range(-0.3..0.3),
            },
        };
        pool.push(normalize_sup(spec));
    }
    pool
}

/// Rescales a family so its sampled sup norm is 1.
fn normalize_sup(spec: FunctionSpec) -> FunctionSpec {
    let sup = (0..=1000)
        .map(|i| spec.eval(i as f64 / 1000.0).abs())
        .fold(0.0f64, f64::max);
    if sup <= 1e-12 {
        return FunctionSpec::constant(1.0);
    }
    let s = 1.0 / sup;
    match spec {
        FunctionSpec::Constant { value } => FunctionSpec::Constant { value: value * s },
        FunctionSpec::Poly { coeffs } => FunctionSpec::Poly {
            coeffs: coeffs.into_iter().map(|c| c * s).collect(),
        },
        FunctionSpec::OnePlusEpsSin { .. } | FunctionSpec::Exp { .. } => spec,
        FunctionSpec::Step { at, low, high } => FunctionSpec::Step {
            at,
            low: low * s,
            high: high * s,
        },
        FunctionSpec::Sine {
            amplitude,
            freq,
            phase,
            offset,
        } => FunctionSpec::Sine {
            amplitude: amplitude * s,
            freq,
            phase,
            offset: offset * s,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_eval_and_deriv() {
        // p(x) = 1 + 2x + 3x^2: p(0.5) = 2.75, p'(0.5) = 5, p''(x) = 6
        let p = FunctionSpec::Poly {
            coeffs: vec![1.0, 2.0, 3.0],
        };
        assert!((p.eval(0.5) - 2.75).abs() < 1e-15);
        assert!((p.deriv(1, 0.5) - 5.0).abs() < 1e-15);
        assert!((p.deriv(2, 0.9) - 6.0).abs() < 1e-15);
        assert_eq!(p.deriv(3, 0.3), 0.0);
    }

    #[test]
    fn sin_family_derivative_cycle() {
        let f = FunctionSpec::OnePlusEpsSin {
            eps: 0.25,
            freq: 1.0,
        };
        let om = 2.0 * PI;
        let x = 0.3;
        assert!((f.deriv(1, x) - 0.25 * om * (om * x).cos()).abs() < 1e-12);
        assert!((f.deriv(2, x) + 0.25 * om * om * (om * x).sin()).abs() < 1e-10);
        // fourth derivative returns to the sine up to om^4
        assert!((f.deriv(4, x) - om.powi(4) * (f.eval(x) - 1.0)).abs() < 1e-7);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let fams = vec![
            FunctionSpec::OnePlusEpsSin {
                eps: 0.3,
                freq: 2.0,
            },
            FunctionSpec::Exp { rate: 0.7 },
            FunctionSpec::Poly {
                coeffs: vec![0.5, -1.0, 0.25, 2.0],
            },
        ];
        let h = 1e-5;
        for f in &fams {
            for &x in &[0.2, 0.5, 0.8] {
                let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
                assert!(
                    (f.deriv(1, x) - fd).abs() < 1e-6,
                    "family {:?} at {x}",
                    f.label()
                );
            }
        }
    }

    #[test]
    fn modulus_closed_forms() {
        let f = FunctionSpec::OnePlusEpsSin {
            eps: 0.1,
            freq: 1.0,
        };
        // large separation saturates at twice the amplitude
        assert!((f.modulus(0.5) - 0.2).abs() < 1e-15);
        // small separation: 2 eps sin(pi delta)
        let d = 0.01;
        assert!((f.modulus(d) - 0.2 * (PI * d).sin()).abs() < 1e-15);
        assert_eq!(FunctionSpec::constant(3.0).modulus(0.2), 0.0);
    }

    #[test]
    fn modulus_sampled_agrees_with_lipschitz_bound_for_poly() {
        let p = FunctionSpec::Poly {
            coeffs: vec![0.0, 2.0],
        };
        // |2x - 2y| <= 2 delta with equality attained
        let m = p.modulus(0.05);
        assert!((m - 0.1).abs() < 1e-3, "got {m}");
    }

    #[test]
    fn registry_round_trip() {
        let json = r#"{"name":"one_plus_eps_sin","eps":0.1,"freq":1.0}"#;
        let f: FunctionSpec = serde_json::from_str(json).unwrap();
        assert_eq!(
            f,
            FunctionSpec::OnePlusEpsSin {
                eps: 0.1,
                freq: 1.0
            }
        );
        let back = serde_json::to_string(&f).unwrap();
        let f2: FunctionSpec = serde_json::from_str(&back).unwrap();
        assert_eq!(f, f2);
    }

    #[test]
    fn registry_by_name_and_params() {
        let params = serde_json::json!({"eps": 0.3, "freq": 2.0});
        let f = FunctionSpec::from_name_params("one_plus_eps_sin", &params).unwrap();
        // 2 pi * 2 * 0.125 = pi / 2, so the sine contributes fully
        assert!((f.eval(0.125) - 1.3).abs() < 1e-12);
        assert!(matches!(
            FunctionSpec::from_name_params("no_such_family", &params),
            Err(Error::UnknownFamily(_))
        ));
    }

    #[test]
    fn test_pool_is_normalized_and_deterministic() {
        let a = test_function_pool(42, 10);
        let b = test_function_pool(42, 10);
        assert_eq!(a, b);
        for f in &a {
            let sup = (0..=1000)
                .map(|i| f.eval(i as f64 / 1000.0).abs())
                .fold(0.0f64, f64::max);
            assert!(sup <= 1.0 + 1e-9 && sup > 0.5, "sup {sup}");
        }
    }
}
