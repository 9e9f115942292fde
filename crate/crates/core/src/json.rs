//! JSON forms of matrices, channels and circuits.
//!
//! Complex entries are `[re, im]` pairs; matrices are lists of rows.

use serde::{Deserialize, Serialize};

use crate::channels::KrausChannel;
use crate::circuit::{Circuit, GateItem, ItemKind, Op, RegisterLayout};
use crate::error::{Error, Result};
use crate::qops::Operator;
use crate::{CMatrix, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<[f64; 2]>>);

impl From<&CMatrix> for MatrixJson {
    fn from(m: &CMatrix) -> Self {
        Self(
            m.row_iter()
                .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        )
    }
}

impl TryFrom<&MatrixJson> for Operator {
    type Error = Error;

    fn try_from(m: &MatrixJson) -> Result<Self> {
        let rows: Vec<Vec<C64>> = m
            .0
            .iter()
            .map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect())
            .collect();
        Operator::from_rows(&rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelJson {
    pub label: String,
    pub kraus: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl From<&KrausChannel> for ChannelJson {
    fn from(ch: &KrausChannel) -> Self {
        Self {
            label: ch.label().to_string(),
            kraus: ch.kraus().iter().map(|k| MatrixJson::from(k.matrix())).collect(),
            weights: ch.is_signed().then(|| ch.weights().to_vec()),
        }
    }
}

impl TryFrom<&ChannelJson> for KrausChannel {
    type Error = Error;

    fn try_from(c: &ChannelJson) -> Result<Self> {
        let kraus = c.kraus.iter().map(Operator::try_from).collect::<Result<Vec<_>>>()?;
        match &c.weights {
            Some(w) => KrausChannel::signed(c.label.clone(), kraus, w.clone()),
            None => KrausChannel::new(c.label.clone(), kraus),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemJson {
    pub kind: ItemKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<ChannelJson>,
    pub targets: Vec<usize>,
    #[serde(default)]
    pub controls: Vec<usize>,
    #[serde(default)]
    pub control_value: usize,
}

impl From<&GateItem> for ItemJson {
    fn from(item: &GateItem) -> Self {
        let (matrix, kraus) = match &item.op {
            Op::Unitary(u) => (Some(MatrixJson::from(u.matrix())), None),
            Op::Channel(ch) => (None, Some(ChannelJson::from(ch))),
            Op::Reset => (None, None),
        };
        Self {
            kind: item.kind(),
            name: item.name.clone(),
            matrix,
            kraus,
            targets: item.targets.clone(),
            controls: item.controls.clone(),
            control_value: item.control_value,
        }
    }
}

impl ItemJson {
    fn to_item(&self, index: usize) -> Result<GateItem> {
        let missing = |what: &str| Error::MalformedItem {
            index,
            reason: format!("{:?} item needs `{what}`", self.kind),
        };
        let op = match self.kind {
            ItemKind::Unitary => Op::Unitary(Operator::try_from(self.matrix.as_ref().ok_or_else(|| missing("matrix"))?)?),
            ItemKind::Channel => Op::Channel(KrausChannel::try_from(self.kraus.as_ref().ok_or_else(|| missing("kraus"))?)?),
            ItemKind::Reset => Op::Reset,
        };
        Ok(GateItem {
            name: self.name.clone(),
            op,
            targets: self.targets.clone(),
            controls: self.controls.clone(),
            control_value: self.control_value,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitJson {
    pub layout: RegisterLayout,
    pub items: Vec<ItemJson>,
}

impl From<&Circuit> for CircuitJson {
    fn from(c: &Circuit) -> Self {
        Self {
            layout: c.layout().clone(),
            items: c.items().iter().map(ItemJson::from).collect(),
        }
    }
}

impl TryFrom<&CircuitJson> for Circuit {
    type Error = Error;

    fn try_from(c: &CircuitJson) -> Result<Self> {
        let items = c
            .items
            .iter()
            .enumerate()
            .map(|(i, item)| item.to_item(i))
            .collect::<Result<Vec<_>>>()?;
        Circuit::from_items(c.layout.clone(), items)
    }
}

pub fn circuit_to_string(c: &Circuit) -> Result<String> {
    Ok(serde_json::to_string_pretty(&CircuitJson::from(c))?)
}

pub fn circuit_from_str(s: &str) -> Result<Circuit> {
    Circuit::try_from(&serde_json::from_str::<CircuitJson>(s)?)
}

pub fn channel_to_string(ch: &KrausChannel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ChannelJson::from(ch))?)
}

pub fn channel_from_str(s: &str) -> Result<KrausChannel> {
    KrausChannel::try_from(&serde_json::from_str::<ChannelJson>(s)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::amplitude_damping_channel;
    use crate::circuit::RegisterLayout;

    #[test]
    fn matrix_layout_is_row_major() {
        let j = MatrixJson::from(Operator::pauli_y().matrix());
        assert_eq!(j.0, vec![vec![[0.0, 0.0], [0.0, -1.0]], vec![[0.0, 1.0], [0.0, 0.0]]]);
        assert_eq!(Operator::try_from(&j).unwrap(), Operator::pauli_y());
    }

    #[test]
    fn channel_round_trip() {
        let ad = amplitude_damping_channel(0.3).unwrap();
        let back = channel_from_str(&channel_to_string(&ad).unwrap()).unwrap();
        assert_eq!(back, ad);
        let signed = KrausChannel::difference_of_replacements();
        let back = channel_from_str(&channel_to_string(&signed).unwrap()).unwrap();
        assert_eq!(back, signed);
    }

    #[test]
    fn circuit_round_trip() {
        let items = vec![
            GateItem::unitary("ry", Operator::ry(0.4), vec![0]),
            GateItem::cnot(0, 2),
            GateItem::channel("ad", amplitude_damping_channel(0.2).unwrap(), vec![1]).controlled(vec![0, 2], 2),
            GateItem::reset(vec![1]),
        ];
        let c = Circuit::from_items(RegisterLayout::ccc(1, 1, 1).unwrap(), items).unwrap();
        let s = circuit_to_string(&c).unwrap();
        assert_eq!(circuit_from_str(&s).unwrap(), c);
    }

    #[test]
    fn malformed_inputs_rejected() {
        let bad_field = r#"{"layout":{"registers":[{"role":"sys","qubits":1}]},"items":[],"extra":1}"#;
        assert!(matches!(circuit_from_str(bad_field), Err(Error::Serde(_))));
        let no_matrix = r#"{"layout":{"registers":[{"role":"sys","qubits":1}]},
            "items":[{"kind":"unitary","name":"u","targets":[0]}]}"#;
        assert!(matches!(circuit_from_str(no_matrix), Err(Error::MalformedItem { index: 0, .. })));
        let ragged = r#"{"label":"x","kraus":[[[[1,0]],[[0,0],[1,0]]]]}"#;
        assert!(channel_from_str(ragged).is_err());
    }
}
