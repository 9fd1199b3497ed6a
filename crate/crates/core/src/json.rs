//! JSON encodings. Facts are `{"relation": .., "args": [..]}`; integral
//! numbers are written without a fractional part; instances are fact lists in
//! canonical order.

use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{Constant, Fact, Instance};

const MAX_EXACT_INT: f64 = 9_007_199_254_740_992.0;

impl Serialize for Constant {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Constant::Num(v) if v.fract() == 0.0 && v.abs() < MAX_EXACT_INT => s.serialize_i64(*v as i64),
            Constant::Num(v) => s.serialize_f64(*v),
            Constant::Sym(x) => s.serialize_str(x),
        }
    }
}

struct ConstantVisitor;

impl Visitor<'_> for ConstantVisitor {
    type Value = Constant;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a number or a string")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Constant, E> {
        Ok(Constant::num(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Constant, E> {
        Ok(Constant::num(v as f64))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Constant, E> {
        Ok(Constant::num(v))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Constant, E> {
        Ok(Constant::sym(v))
    }
}

impl<'de> Deserialize<'de> for Constant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(ConstantVisitor)
    }
}

#[derive(Serialize, Deserialize)]
struct FactRepr {
    relation: String,
    args: Vec<Constant>,
}

impl Serialize for Fact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FactRepr {
            relation: self.relation.to_string(),
            args: self.args.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = FactRepr::deserialize(d)?;
        Ok(Fact::new(&r.relation, r.args))
    }
}

impl Serialize for Instance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.len()))?;
        for f in self.iter() {
            seq.serialize_element(&f)?;
        }
        seq.end()
    }
}

struct InstanceVisitor;

impl<'de> Visitor<'de> for InstanceVisitor {
    type Value = Instance;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a list of facts")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Instance, A::Error> {
        let mut out = Instance::new();
        while let Some(f) = seq.next_element::<Fact>()? {
            out.insert(f);
        }
        Ok(out)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_seq(InstanceVisitor)
    }
}
