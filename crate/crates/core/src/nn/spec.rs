use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// One layer of the stack. Convolutions are stride 1 with `kernel / 2`
/// zero padding; pooling is 2x2 with stride 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { filters: usize, kernel: usize },
    Relu,
    MaxPool,
    Flatten,
    Dense { units: usize },
    Softmax,
}

impl LayerSpec {
    pub fn is_parametric(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
    pub class_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Volume { channels: usize, height: usize, width: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Volume { channels, height, width } => channels * height * width,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Volume { channels, height, width } => write!(f, "{height}x{width}x{channels}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

/// A validated layer with its name and resolved shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    pub name: String,
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    /// Index into the checkpoint's parameter list, for conv and dense layers.
    pub param_index: Option<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerPlan {
    pub fn weight_shape(&self) -> Vec<usize> {
        match (self.spec, self.input) {
            (LayerSpec::Conv { filters, kernel }, Shape::Volume { channels, .. }) => {
                vec![filters, channels, kernel, kernel]
            }
            (LayerSpec::Dense { units }, Shape::Flat(n)) => vec![units, n],
            _ => Vec::new(),
        }
    }

    pub fn bias_len(&self) -> usize {
        match self.spec {
            LayerSpec::Conv { filters, .. } => filters,
            LayerSpec::Dense { units } => units,
            _ => 0,
        }
    }
}

impl NetworkSpec {
    /// The default compact network: two 5x5 conv/relu/pool blocks (8 and 16
    /// filters), a 128-unit hidden layer and a softmax classifier.
    pub fn gammanet_s(height: usize, width: usize, class_count: usize) -> Self {
        Self {
            input: InputShape { height, width, channels: 3 },
            layers: vec![
                LayerSpec::Conv { filters: 8, kernel: 5 },
                LayerSpec::Relu,
                LayerSpec::MaxPool,
                LayerSpec::Conv { filters: 16, kernel: 5 },
                LayerSpec::Relu,
                LayerSpec::MaxPool,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 128 },
                LayerSpec::Relu,
                LayerSpec::Dense { units: class_count },
                LayerSpec::Softmax,
            ],
            class_count,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input.height * self.input.width * self.input.channels
    }

    /// Resolves names and shapes, checking that consecutive layers compose.
    pub fn plan(&self) -> Result<Vec<LayerPlan>> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.input.height == 0 || self.input.width == 0 || self.input.channels == 0 {
            return bad("input dimensions must be positive".into());
        }
        if self.class_count < 1 {
            return bad("class_count must be positive".into());
        }
        match self.layers.as_slice() {
            [.., LayerSpec::Dense { units }, LayerSpec::Softmax] if *units == self.class_count => {}
            _ => {
                return bad(format!(
                    "network must end in dense({}) followed by softmax",
                    self.class_count
                ))
            }
        }

        let mut shape = Shape::Volume {
            channels: self.input.channels,
            height: self.input.height,
            width: self.input.width,
        };
        let mut counts = [0usize; 5];
        let mut params = 0;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, &layer) in self.layers.iter().enumerate() {
            let (name, output, fans) = match (layer, shape) {
                (LayerSpec::Conv { filters, kernel }, Shape::Volume { channels, height, width }) => {
                    if filters == 0 || kernel == 0 || kernel % 2 == 0 {
                        return bad(format!("layer {i}: conv needs filters > 0 and an odd kernel"));
                    }
                    counts[0] += 1;
                    (
                        format!("conv{}", counts[0]),
                        Shape::Volume { channels: filters, height, width },
                        (channels * kernel * kernel, filters * kernel * kernel),
                    )
                }
                (LayerSpec::Relu, s) => {
                    counts[1] += 1;
                    (format!("relu{}", counts[1]), s, (0, 0))
                }
                (LayerSpec::MaxPool, Shape::Volume { channels, height, width }) => {
                    if height < 2 || width < 2 {
                        return bad(format!("layer {i}: cannot pool a {height}x{width} map"));
                    }
                    counts[2] += 1;
                    (
                        format!("pool{}", counts[2]),
                        Shape::Volume { channels, height: height / 2, width: width / 2 },
                        (0, 0),
                    )
                }
                (LayerSpec::Flatten, s) => ("flatten".to_string(), Shape::Flat(s.len()), (0, 0)),
                (LayerSpec::Dense { units }, Shape::Flat(n)) => {
                    if units == 0 {
                        return bad(format!("layer {i}: dense needs units > 0"));
                    }
                    counts[3] += 1;
                    (format!("fc{}", counts[3]), Shape::Flat(units), (n, units))
                }
                (LayerSpec::Softmax, Shape::Flat(n)) if i == self.layers.len() - 1 => {
                    ("softmax".to_string(), Shape::Flat(n), (0, 0))
                }
                (l, s) => return bad(format!("layer {i} ({l:?}) cannot follow shape {s}")),
            };
            let param_index = if layer.is_parametric() {
                params += 1;
                Some(params - 1)
            } else {
                None
            };
            out.push(LayerPlan {
                name,
                spec: layer,
                input: shape,
                output,
                param_index,
                fan_in: fans.0,
                fan_out: fans.1,
            });
            shape = output;
        }
        if out.iter().filter(|p| p.spec == LayerSpec::Flatten).count() > 1 {
            return bad("at most one flatten layer".into());
        }
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .plan()?
            .iter()
            .filter(|p| p.param_index.is_some())
            .map(|p| p.weight_shape().iter().product::<usize>() + p.bias_len())
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gammanet_shape_chain() {
        let plan = NetworkSpec::gammanet_s(64, 64, 10).plan().unwrap();
        let names: Vec<_> = plan.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            ["conv1", "relu1", "pool1", "conv2", "relu2", "pool2", "flatten", "fc1", "relu3", "fc2", "softmax"]
        );
        assert_eq!(plan[6].output, Shape::Flat(4096));
        assert_eq!(plan[7].weight_shape(), vec![128, 4096]);
        assert_eq!(plan[0].weight_shape(), vec![8, 3, 5, 5]);
        assert_eq!(plan[9].output, Shape::Flat(10));
    }

    #[test]
    fn bad_compositions_are_rejected() {
        let mut s = NetworkSpec::gammanet_s(64, 64, 10);
        s.layers.remove(6); // flatten
        assert!(matches!(s.plan(), Err(Error::InvalidSpec(_))));

        let mut s = NetworkSpec::gammanet_s(64, 64, 10);
        s.class_count = 9;
        assert!(s.plan().is_err());

        let mut s = NetworkSpec::gammanet_s(64, 64, 10);
        s.layers.pop();
        assert!(s.plan().is_err());

        let mut s = NetworkSpec::gammanet_s(64, 64, 10);
        s.layers[0] = LayerSpec::Conv { filters: 8, kernel: 4 };
        assert!(s.plan().is_err());
    }

    #[test]
    fn spec_serializes_as_tagged_layers() {
        let s = NetworkSpec::gammanet_s(32, 32, 4);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains(r#"{"type":"conv","filters":8,"kernel":5}"#));
        let back: NetworkSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parameter_count() {
        // 8*3*25+8 + 16*8*25+16 + 128*1024+128 + 4*128+4
        assert_eq!(NetworkSpec::gammanet_s(32, 32, 4).param_count().unwrap(), 608 + 3216 + 131_200 + 516);
    }
}
