use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::DynamicsError;
use crate::autodiff::{Graph, NodeId};
use crate::nn::{Dropout, Mlp, MlpConfig, MlpNodes};

/// One entry of the DeepHPM input library. Declaration order is canonical.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HpmTerm {
    /// All S health features.
    X,
    T,
    U,
    /// The S first partials of u with respect to the features.
    Ux,
    /// The S diagonal second partials.
    Uxx,
}

impl HpmTerm {
    pub const ALL: [HpmTerm; 5] = [HpmTerm::X, HpmTerm::T, HpmTerm::U, HpmTerm::Ux, HpmTerm::Uxx];

    pub fn width(self, features: usize) -> usize {
        match self {
            HpmTerm::T | HpmTerm::U => 1,
            HpmTerm::X | HpmTerm::Ux | HpmTerm::Uxx => features,
        }
    }
}

impl fmt::Display for HpmTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HpmTerm::X => "x",
            HpmTerm::T => "t",
            HpmTerm::U => "u",
            HpmTerm::Ux => "ux",
            HpmTerm::Uxx => "uxx",
        })
    }
}

impl FromStr for HpmTerm {
    type Err = DynamicsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(HpmTerm::X),
            "t" => Ok(HpmTerm::T),
            "u" => Ok(HpmTerm::U),
            "ux" | "u_x" => Ok(HpmTerm::Ux),
            "uxx" | "u_xx" => Ok(HpmTerm::Uxx),
            other => Err(DynamicsError::UnknownTerm(other.to_string())),
        }
    }
}

/// Non-empty set of DeepHPM input terms, kept in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HpmInputs(Vec<HpmTerm>);

impl HpmInputs {
    pub fn new(terms: impl IntoIterator<Item = HpmTerm>) -> Result<Self, DynamicsError> {
        let mut v: Vec<HpmTerm> = terms.into_iter().collect();
        v.sort();
        v.dedup();
        if v.is_empty() {
            return Err(DynamicsError::EmptyInputs);
        }
        Ok(HpmInputs(v))
    }

    pub fn terms(&self) -> &[HpmTerm] {
        &self.0
    }

    pub fn contains(&self, term: HpmTerm) -> bool {
        self.0.contains(&term)
    }

    /// Width of the assembled DeepHPM input vector for S features.
    pub fn input_dim(&self, features: usize) -> usize {
        self.0.iter().map(|t| t.width(features)).sum()
    }

    /// The fifteen non-empty subsets of {x, t, u, u_x}, in the order of the
    /// appendix input-library table.
    pub fn library() -> Vec<HpmInputs> {
        use HpmTerm::*;
        let sets: [&[HpmTerm]; 15] = [
            &[X],
            &[T],
            &[U],
            &[Ux],
            &[X, T],
            &[X, U],
            &[X, Ux],
            &[T, U],
            &[T, Ux],
            &[U, Ux],
            &[X, T, U],
            &[X, T, Ux],
            &[X, U, Ux],
            &[T, U, Ux],
            &[X, T, U, Ux],
        ];
        sets.iter().map(|s| HpmInputs(s.to_vec())).collect()
    }
}

impl fmt::Display for HpmInputs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|t| t.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for HpmInputs {
    type Err = DynamicsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let terms = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(HpmTerm::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        HpmInputs::new(terms)
    }
}

impl Serialize for HpmInputs {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for HpmInputs {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// DeepHPM: a network approximating the rate G from a library of terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepHpm {
    pub inputs: HpmInputs,
    pub net: Mlp,
}

impl DeepHpm {
    /// Xavier-initialised DeepHPM with a single output.
    pub fn new(
        inputs: HpmInputs,
        features: usize,
        hidden_layers: usize,
        neurons: usize,
        dropout: f64,
        seed: u64,
    ) -> Result<Self, DynamicsError> {
        let cfg = MlpConfig::new(inputs.input_dim(features), hidden_layers, neurons, 1).with_dropout(dropout);
        Ok(DeepHpm { inputs, net: Mlp::xavier_normal(cfg, seed)? })
    }
}

/// Graph values available to assemble the DeepHPM input vector.
#[derive(Clone, Debug, Default)]
pub struct TermValues {
    pub x: Option<Vec<NodeId>>,
    pub t: Option<NodeId>,
    pub u: Option<NodeId>,
    pub ux: Option<Vec<NodeId>>,
    pub uxx: Option<Vec<NodeId>>,
}

impl TermValues {
    /// Concatenates the configured terms in canonical order.
    pub fn assemble(&self, inputs: &HpmInputs) -> Result<Vec<NodeId>, DynamicsError> {
        let mut out = Vec::new();
        for &term in inputs.terms() {
            match term {
                HpmTerm::X => out.extend(self.x.as_ref().ok_or(DynamicsError::MissingTerm(term))?),
                HpmTerm::T => out.push(self.t.ok_or(DynamicsError::MissingTerm(term))?),
                HpmTerm::U => out.push(self.u.ok_or(DynamicsError::MissingTerm(term))?),
                HpmTerm::Ux => out.extend(self.ux.as_ref().ok_or(DynamicsError::MissingTerm(term))?),
                HpmTerm::Uxx => out.extend(self.uxx.as_ref().ok_or(DynamicsError::MissingTerm(term))?),
            }
        }
        Ok(out)
    }
}

/// DeepHPM output node: the model's prediction of u_t.
pub fn deephpm_rate<R: Rng>(
    g: &mut Graph,
    net: &MlpNodes,
    inputs: &HpmInputs,
    terms: &TermValues,
    dropout: Dropout<'_, R>,
) -> Result<NodeId, DynamicsError> {
    let assembled = terms.assemble(inputs)?;
    Ok(net.forward(g, &assembled, dropout)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Adam, AdamConfig};

    #[test]
    fn parse_and_display_canonical_order() {
        let s: HpmInputs = "u, t ,x".parse().unwrap();
        assert_eq!(s.to_string(), "x,t,u");
        assert!("".parse::<HpmInputs>().is_err());
        assert!(matches!("x,v".parse::<HpmInputs>(), Err(DynamicsError::UnknownTerm(_))));
        let all: HpmInputs = "x,t,u,ux,uxx".parse().unwrap();
        assert_eq!(all.terms(), &HpmTerm::ALL);
    }

    #[test]
    fn library_has_fifteen_distinct_subsets() {
        let lib = HpmInputs::library();
        assert_eq!(lib.len(), 15);
        let distinct: std::collections::HashSet<_> = lib.iter().cloned().collect();
        assert_eq!(distinct.len(), 15);
        assert_eq!(lib[1].to_string(), "t");
        assert_eq!(lib[13].to_string(), "t,u,ux");
    }

    #[test]
    fn term_assembly_width() {
        let inputs: HpmInputs = "x,t,u,ux".parse().unwrap();
        assert_eq!(inputs.input_dim(8), 18);
        let mut g = Graph::new();
        let x: Vec<_> = (0..8).map(|i| g.input(i as f64)).collect();
        let ux: Vec<_> = (0..8).map(|_| g.input(0.0)).collect();
        let t = g.input(1.0);
        let u = g.input(0.2);
        let vals = TermValues { x: Some(x), t: Some(t), u: Some(u), ux: Some(ux), uxx: None };
        assert_eq!(vals.assemble(&inputs).unwrap().len(), 18);
        let with_uxx: HpmInputs = "t,uxx".parse().unwrap();
        assert_eq!(vals.assemble(&with_uxx).unwrap_err(), DynamicsError::MissingTerm(HpmTerm::Uxx));
    }

    #[test]
    fn zero_network_gives_bias_rate() {
        let inputs: HpmInputs = "t".parse().unwrap();
        let mut hpm = DeepHpm::new(inputs.clone(), 8, 2, 4, 0.0, 0).unwrap();
        hpm.net.params.iter_mut().for_each(|p| *p = 0.0);
        *hpm.net.params.last_mut().unwrap() = -0.3;
        for t in [-5.0, 0.0, 2.5] {
            let mut g = Graph::new();
            let nodes = hpm.net.bind(&mut g);
            let tn = g.input(t);
            let vals = TermValues { t: Some(tn), ..Default::default() };
            let rate = deephpm_rate(&mut g, &nodes, &inputs, &vals, Dropout::off()).unwrap();
            assert_eq!(g.value(rate), -0.3);
        }
    }

    #[test]
    fn learns_exponential_rate_from_state() {
        // u_t = 0.05 u on u in [0.1, 0.5]
        let inputs: HpmInputs = "u".parse().unwrap();
        let hpm = DeepHpm::new(inputs.clone(), 0, 1, 8, 0.0, 4).unwrap();
        let us: Vec<f64> = (0..21).map(|i| 0.1 + 0.4 * i as f64 / 20.0).collect();
        let mut g = Graph::new();
        let nodes = hpm.net.bind(&mut g);
        let ids = nodes.param_ids();
        let mut sq = Vec::new();
        for &u in &us {
            let un = g.input(u);
            let vals = TermValues { u: Some(un), ..Default::default() };
            let rate = deephpm_rate(&mut g, &nodes, &inputs, &vals, Dropout::off()).unwrap();
            let target = g.constant(0.05 * u);
            let e = g.sub(rate, target);
            sq.push(g.square(e));
        }
        let loss = g.sum(&sq);
        let mut params = hpm.net.params.clone();
        let layout = hpm.net.layout();
        let mut opt = Adam::new(AdamConfig::with_learning_rate(0.01), params.len());
        for _ in 0..3000 {
            g.recompute().unwrap();
            let grad = g.gradient(loss, &ids).unwrap();
            opt.step(&mut params, &grad, &layout).unwrap();
            for (id, v) in ids.iter().zip(&params) {
                g.set_value(*id, *v).unwrap();
            }
        }
        let trained = Mlp { params, ..hpm.net.clone() };
        for &u in &us {
            let got = trained.predict(&[u]).unwrap()[0];
            let want = 0.05 * u;
            assert!((got - want).abs() <= 0.1 * want, "u={u}: {got} vs {want}");
        }
    }
}
