//! JSON checkpoints holding the architecture, schedule and nested weights.

use serde_json::{json, Value};
use std::path::Path;

use super::denoiser::{DenoiserConfig, DenoiserParams};
use super::tensor::Tensor;
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "diffqec-ckpt-1";

/// A trained model together with the schedule it was trained against.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: DenoiserParams,
    pub schedule: NoiseSchedule,
}

fn nest(values: &[f64], shape: &[usize]) -> Result<Value> {
    if shape.len() <= 1 {
        return values
            .iter()
            .map(|&v| {
                serde_json::Number::from_f64(v)
                    .map(Value::Number)
                    .ok_or_else(|| Error::NonFinite("checkpoint weights".into()))
            })
            .collect::<Result<Vec<_>>>()
            .map(Value::Array);
    }
    let stride: usize = shape[1..].iter().product();
    (0..shape[0])
        .map(|i| nest(&values[i * stride..(i + 1) * stride], &shape[1..]))
        .collect::<Result<Vec<_>>>()
        .map(Value::Array)
}

fn flatten(v: &Value, shape: &[usize], name: &str, out: &mut Vec<f64>) -> Result<()> {
    let bad = |msg: &str| Error::Format(format!("parameter {name}: {msg}"));
    match shape.split_first() {
        None => out.push(v.as_f64().ok_or_else(|| bad("expected a number"))?),
        Some((&n, rest)) => {
            let arr = v.as_array().ok_or_else(|| bad("expected a nested array"))?;
            if arr.len() != n {
                return Err(bad(&format!("dimension has {} entries, expected {n}", arr.len())));
            }
            if rest.is_empty() {
                for x in arr {
                    out.push(x.as_f64().ok_or_else(|| bad("expected a number"))?);
                }
            } else {
                for x in arr {
                    flatten(x, rest, name, out)?;
                }
            }
        }
    }
    Ok(())
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<Value> {
        let shapes = self.params.config.param_shapes();
        let params = shapes
            .iter()
            .zip(&self.params.tensors)
            .map(|((name, shape), t)| {
                Ok(json!({"name": name, "shape": shape, "values": nest(&t.data, shape)?}))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(json!({
            "format": CHECKPOINT_FORMAT,
            "config": self.params.config,
            "schedule": {"steps": self.schedule.steps(), "offset": self.schedule.offset()},
            "trained_steps": self.params.trained_steps,
            "params": params,
        }))
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let format = v.get("format").and_then(Value::as_str);
        if format != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Format(format!(
                "checkpoint format tag is {format:?}, expected {CHECKPOINT_FORMAT:?}"
            )));
        }
        let field = |k: &str| v.get(k).ok_or_else(|| Error::Format(format!("checkpoint is missing '{k}'")));
        let config: DenoiserConfig = serde_json::from_value(field("config")?.clone())
            .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
        config.validate()?;
        let sched = field("schedule")?;
        let steps = sched.get("steps").and_then(Value::as_u64);
        let offset = sched.get("offset").and_then(Value::as_f64);
        let (Some(steps), Some(offset)) = (steps, offset) else {
            return Err(Error::Format("checkpoint schedule needs 'steps' and 'offset'".into()));
        };
        if steps as usize != config.steps {
            return Err(Error::Format(format!(
                "schedule has {steps} steps but the config says {}",
                config.steps
            )));
        }
        let schedule = NoiseSchedule::cosine(steps as usize, offset)?;
        let trained_steps = field("trained_steps")?
            .as_u64()
            .ok_or_else(|| Error::Format("'trained_steps' must be an integer".into()))? as usize;
        let stored = field("params")?
            .as_array()
            .ok_or_else(|| Error::Format("'params' must be an array".into()))?;
        let shapes = config.param_shapes();
        if stored.len() != shapes.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameter tensors, expected {}",
                stored.len(),
                shapes.len()
            )));
        }
        let mut tensors = Vec::with_capacity(shapes.len());
        for ((name, shape), p) in shapes.iter().zip(stored) {
            let got_name = p.get("name").and_then(Value::as_str);
            if got_name != Some(name.as_str()) {
                return Err(Error::Format(format!("expected parameter {name}, found {got_name:?}")));
            }
            let got_shape: Option<Vec<usize>> = p
                .get("shape")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_u64).map(|x| x as usize).collect());
            if got_shape.as_ref() != Some(shape) {
                return Err(Error::Format(format!("parameter {name} has shape {got_shape:?}, expected {shape:?}")));
            }
            let values = p
                .get("values")
                .ok_or_else(|| Error::Format(format!("parameter {name} has no values")))?;
            let mut data = Vec::with_capacity(shape.iter().product());
            flatten(values, shape, name, &mut data)?;
            tensors.push(Tensor::new(shape.clone(), data)?);
        }
        Ok(Self {
            params: DenoiserParams {
                config,
                tensors,
                trained_steps,
            },
            schedule,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_json()?)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::Format(format!("checkpoint is not valid JSON: {e}")))?;
        Self::from_json(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn tiny() -> Checkpoint {
        let config = DenoiserConfig {
            d: 3,
            label_len: 2,
            steps: 4,
            hidden: 4,
            layers: 1,
            conv_channels: [2, 3],
            time_dim: 4,
        };
        let params = DenoiserParams::init(config, &mut stream_rng(1, 0)).unwrap();
        Checkpoint {
            params,
            schedule: NoiseSchedule::cosine(4, 0.008).unwrap(),
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let ck = tiny();
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn wrong_tag_is_reported() {
        let mut v = tiny().to_json().unwrap();
        v["format"] = json!("other");
        let err = Checkpoint::from_json(&v).unwrap_err().to_string();
        assert!(err.contains("format"), "{err}");
    }

    #[test]
    fn truncated_values_are_reported() {
        let mut v = tiny().to_json().unwrap();
        v["params"][1]["values"] = json!([0.0]);
        let err = Checkpoint::from_json(&v).unwrap_err().to_string();
        assert!(err.contains("conv1.b"), "{err}");
    }
}
