//! Scenarios compiled into the binary.

use serde::Serialize;
use serde_json::{json, Value};

#[derive(Clone, Debug, Serialize)]
pub struct Builtin {
    pub name: &'static str,
    pub identity: &'static str,
    pub description: &'static str,
    #[serde(skip)]
    build: fn() -> Value,
}

impl Builtin {
    pub fn config(&self) -> Value {
        let mut v = (self.build)();
        v["label"] = json!(self.name);
        v["identity"] = json!(self.identity);
        v["description"] = json!(self.description);
        v
    }
}

fn feedback_exprs(n: usize, step: impl Fn(usize) -> String) -> Vec<String> {
    (1..=n).map(step).collect()
}

pub fn builtins() -> Vec<Builtin> {
    vec![
        Builtin {
            name: "gaussian-memoryless",
            identity: "immse-memoryless",
            description: "scalar N(0,1) input, Y = sqrt(snr)*X + Z; exact oracle by default",
            build: || {
                json!({
                    "kind": "discrete",
                    "prior": {"type": "gaussian", "mean": 0.0, "variance": 1.0},
                    "g": ["w"],
                    "snr": 1.0,
                    "N": 20000, "K": 10000, "seed": 1
                })
            },
        },
        Builtin {
            name: "bpsk-memoryless",
            identity: "immse-memoryless",
            description: "equiprobable +-1 input, exact two-point posterior, Monte Carlo outer loop",
            build: || {
                json!({
                    "kind": "discrete",
                    "prior": {"type": "bpsk"},
                    "g": ["w"],
                    "snr": 1.0,
                    "N": 100000, "K": 2, "seed": 2
                })
            },
        },
        Builtin {
            name: "linear-feedback-n4",
            identity: "feedback-ext",
            description: "n=4 linear feedback g_i = w + 0.5*y[i-1], N(0,1) message; exact oracle",
            build: || {
                let g = feedback_exprs(4, |i| if i == 1 { "w".into() } else { format!("w + 0.5*y[{}]", i - 1) });
                json!({
                    "kind": "discrete",
                    "prior": {"type": "gaussian", "mean": 0.0, "variance": 1.0},
                    "g": g,
                    "rho": 1.0,
                    "seed": 3
                })
            },
        },
        Builtin {
            name: "tanh-feedback-n4",
            identity: "feedback-ext",
            description: "n=4 nonlinear feedback g_i = w + 0.5*tanh(y[i-1]), N(0,1) message; nested Monte Carlo",
            build: || {
                let g = feedback_exprs(4, |i| {
                    if i == 1 {
                        "w".into()
                    } else {
                        format!("w + 0.5*tanh(y[{}])", i - 1)
                    }
                });
                json!({
                    "kind": "discrete",
                    "prior": {"type": "gaussian", "mean": 0.0, "variance": 1.0},
                    "g": g,
                    "rho": 1.0,
                    "N": 50000, "K": 2000, "seed": 4
                })
            },
        },
        Builtin {
            name: "memory-channel-n4",
            identity: "memory-ext",
            description: "n=4 output memory g_i = tanh(w_i + 0.3*y[i-1]), iid +-1 inputs; exact inner enumeration",
            build: || {
                let g = feedback_exprs(4, |i| {
                    if i == 1 {
                        "tanh(w)".into()
                    } else {
                        format!("tanh(w + 0.3*y[{}])", i - 1)
                    }
                });
                json!({
                    "kind": "discrete",
                    "prior": {"type": "bpsk", "per_step": true},
                    "g": g,
                    "rho": 1.0,
                    "N": 50000, "K": 16, "seed": 5
                })
            },
        },
        Builtin {
            name: "debruijn-gaussian",
            identity: "debruijn",
            description: "X ~ N(0,1) smoothed by sqrt(t)*Z; entropy and Fisher information by quadrature",
            build: || {
                json!({
                    "kind": "smoothing",
                    "prior": {"type": "gaussian", "mean": 0.0, "variance": 1.0},
                    "t": 1.0
                })
            },
        },
        Builtin {
            name: "debruijn-mixture",
            identity: "debruijn",
            description: "X ~ 0.5*N(-1.5,0.25) + 0.5*N(1.5,0.25) smoothed by sqrt(t)*Z",
            build: || {
                json!({
                    "kind": "smoothing",
                    "prior": {
                        "type": "mixture",
                        "weights": [0.5, 0.5],
                        "means": [-1.5, 1.5],
                        "variances": [0.25, 0.25]
                    },
                    "t": 1.0
                })
            },
        },
        Builtin {
            name: "ct-constant-message",
            identity: "ct-feedback",
            description: "dY = rho*W dt + dB on [0,1], W ~ N(0,1); Euler m=256, Monte Carlo",
            build: || {
                json!({
                    "kind": "continuous",
                    "T": 1.0,
                    "m": 256,
                    "prior": {"type": "gaussian", "mean": 0.0, "variance": 1.0},
                    "g_ct": "w",
                    "rho": 1.0,
                    "N": 20000, "K": 1000, "seed": 6,
                    "backend": "monte-carlo"
                })
            },
        },
        Builtin {
            name: "ct-linear-feedback",
            identity: "ct-feedback",
            description: "dY = rho*(W + 0.5*Y) dt + dB on [0,1], W ~ N(0,1); Euler m=64, exact oracle",
            build: || {
                json!({
                    "kind": "continuous",
                    "T": 1.0,
                    "m": 64,
                    "prior": {"type": "gaussian", "mean": 0.0, "variance": 1.0},
                    "g_ct": "w + 0.5*y[1]",
                    "rho": 1.0,
                    "seed": 7
                })
            },
        },
    ]
}

/// Resolves `name`, or `name-snr<v>` / `name-rho<v>` / `name-t<v>` to set
/// the parameter.
pub fn lookup(name: &str) -> Option<Value> {
    let all = builtins();
    if let Some(b) = all.iter().find(|b| b.name == name) {
        return Some(b.config());
    }
    for b in &all {
        let Some(rest) = name.strip_prefix(b.name).and_then(|r| r.strip_prefix('-')) else {
            continue;
        };
        for key in ["snr", "rho", "t"] {
            let Some(num) = rest.strip_prefix(key) else { continue };
            let Ok(value) = num.parse::<f64>() else { continue };
            let mut v = b.config();
            let obj = v.as_object_mut()?;
            for k in ["snr", "rho", "t"] {
                obj.remove(k);
            }
            obj.insert(key.into(), json!(value));
            obj.insert("label".into(), json!(name));
            return Some(v);
        }
    }
    None
}
