//! Two-receiver channel pairs with independent per-receiver noise,
//! `W(y, z | x) = W1(y|x)·W2(z|x)`, and the structured joints
//! `p(u,x,y,z) = p_U(u)·p_{X|U}(x|u)·W1(y|x)·W2(z|x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{JointDistUXYZ, ProbDist, StochasticMatrix};

/// Row-sum tolerance for channel documents. Hand-written specs often carry
/// six or seven decimals, so rows are renormalized up to this deviation
/// before reaching the stricter constructors.
pub const SPEC_ROW_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPair {
    pub w1: StochasticMatrix,
    pub w2: StochasticMatrix,
}

impl ChannelPair {
    pub fn new(w1: StochasticMatrix, w2: StochasticMatrix) -> Result<Self> {
        if w1.in_size() != w2.in_size() {
            return Err(Error::Dimension(format!(
                "W1 has {} inputs, W2 has {}",
                w1.in_size(),
                w2.in_size()
            )));
        }
        Ok(ChannelPair { w1, w2 })
    }

    pub fn x_size(&self) -> usize {
        self.w1.in_size()
    }

    pub fn y_size(&self) -> usize {
        self.w1.out_size()
    }

    pub fn z_size(&self) -> usize {
        self.w2.out_size()
    }

    /// Auxiliary alphabet size used when maximizing over structured joints:
    /// `min(|X|, |Y| + |Z| − 1)`.
    pub fn structured_aux_size(&self) -> usize {
        self.x_size().min(self.y_size() + self.z_size() - 1)
    }

    /// Auxiliary alphabet size used when maximizing over unconstrained
    /// joints: `|Y| + |Z| − 1`.
    pub fn free_aux_size(&self) -> usize {
        self.y_size() + self.z_size() - 1
    }

    /// Auxiliary bound quoted for the unsplit region description,
    /// `min(|X|, |Y| + |Z|) + 1`. Exposed for reference only.
    pub fn loose_aux_size(&self) -> usize {
        self.x_size().min(self.y_size() + self.z_size()) + 1
    }

    /// Serializes back to the channel-spec document format.
    pub fn to_spec_json(&self) -> String {
        let spec = RawSpec {
            x: self.x_size(),
            y: self.y_size(),
            z: self.z_size(),
            w1: self.w1.to_rows(),
            w2: self.w2.to_rows(),
        };
        serde_json::to_string(&spec).expect("plain numeric document")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(rename = "X")]
    x: usize,
    #[serde(rename = "Y")]
    y: usize,
    #[serde(rename = "Z")]
    z: usize,
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    #[serde(rename = "W2")]
    w2: Vec<Vec<f64>>,
}

fn check_matrix(name: &str, rows: &[Vec<f64>], n_rows: usize, n_cols: usize) -> Result<()> {
    if rows.len() != n_rows {
        return Err(Error::parse(
            name,
            format!("expected {n_rows} rows, found {}", rows.len()),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n_cols {
            return Err(Error::parse(
                format!("{name} row {i}"),
                format!("expected {n_cols} columns, found {}", row.len()),
            ));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::parse(
                    format!("{name} row {i} column {j}"),
                    format!("entry {v} is not a nonnegative number"),
                ));
            }
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > SPEC_ROW_TOL {
            return Err(Error::parse(
                format!("{name} row {i}"),
                format!("row sums to {total}, expected 1"),
            ));
        }
    }
    Ok(())
}

/// Reads a channel-spec document:
/// `{"X": int, "Y": int, "Z": int, "W1": [[..]], "W2": [[..]]}`.
pub fn parse_channel_spec(text: &str) -> Result<ChannelPair> {
    let raw: RawSpec = serde_json::from_str(text).map_err(|e| {
        Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    if raw.x == 0 || raw.y == 0 || raw.z == 0 {
        return Err(Error::parse("header", "alphabet sizes must be positive"));
    }
    check_matrix("W1", &raw.w1, raw.x, raw.y)?;
    check_matrix("W2", &raw.w2, raw.x, raw.z)?;
    ChannelPair::new(
        StochasticMatrix::new(renormalize_rows(raw.w1))?,
        StochasticMatrix::new(renormalize_rows(raw.w2))?,
    )
}

fn renormalize_rows(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.into_iter()
        .map(|r| {
            let t: f64 = r.iter().sum();
            r.into_iter().map(|v| v / t).collect()
        })
        .collect()
}

/// An auxiliary variable and the input law it drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxInputLaw {
    pub p_u: ProbDist,
    pub p_x_given_u: StochasticMatrix,
}

impl AuxInputLaw {
    pub fn new(p_u: ProbDist, p_x_given_u: StochasticMatrix) -> Result<Self> {
        if p_u.len() != p_x_given_u.in_size() {
            return Err(Error::Dimension(format!(
                "p_U has {} symbols, p_X|U has {} rows",
                p_u.len(),
                p_x_given_u.in_size()
            )));
        }
        Ok(AuxInputLaw { p_u, p_x_given_u })
    }

    /// Splits a joint law of (U, X), row-major, into p_U and p_{X|U}.
    /// Rows with zero mass get the uniform conditional.
    pub fn from_joint(u_size: usize, x_size: usize, joint: &[f64]) -> Result<Self> {
        if joint.len() != u_size * x_size {
            return Err(Error::Dimension("joint (U,X) table has wrong length".into()));
        }
        let mut p_u = Vec::with_capacity(u_size);
        let mut rows = Vec::with_capacity(u_size);
        for u in 0..u_size {
            let row = &joint[u * x_size..(u + 1) * x_size];
            let s: f64 = row.iter().sum();
            p_u.push(s);
            if s > 0.0 {
                rows.push(row.iter().map(|v| v / s).collect());
            } else {
                rows.push(vec![1.0 / x_size as f64; x_size]);
            }
        }
        AuxInputLaw::new(ProbDist::new(p_u)?, StochasticMatrix::new(rows)?)
    }

    pub fn u_size(&self) -> usize {
        self.p_u.len()
    }

    /// Joint law of (U, X), row-major.
    pub fn joint_ux(&self) -> Vec<f64> {
        let xs = self.p_x_given_u.out_size();
        let mut out = Vec::with_capacity(self.u_size() * xs);
        for u in 0..self.u_size() {
            for x in 0..xs {
                out.push(self.p_u.get(u) * self.p_x_given_u.get(u, x));
            }
        }
        out
    }
}

/// Joint mass `π(u,x)·W1(y|x)·W2(z|x)` for a (U,X) law given row-major.
pub(crate) fn joint_mass_from_ux(ux: &[f64], u_size: usize, ch: &ChannelPair) -> Vec<f64> {
    let (xs, ys, zs) = (ch.x_size(), ch.y_size(), ch.z_size());
    let mut m = vec![0.0; u_size * xs * ys * zs];
    for u in 0..u_size {
        for x in 0..xs {
            let p = ux[u * xs + x];
            if p == 0.0 {
                continue;
            }
            for y in 0..ys {
                let py = p * ch.w1.get(x, y);
                for z in 0..zs {
                    m[((u * xs + x) * ys + y) * zs + z] = py * ch.w2.get(x, z);
                }
            }
        }
    }
    m
}

pub fn joint_from_aux(aux: &AuxInputLaw, ch: &ChannelPair) -> Result<JointDistUXYZ> {
    if aux.p_x_given_u.out_size() != ch.x_size() {
        return Err(Error::Dimension(format!(
            "p_X|U has {} outputs, channel has {} inputs",
            aux.p_x_given_u.out_size(),
            ch.x_size()
        )));
    }
    let u = aux.u_size();
    JointDistUXYZ::new(
        [u, ch.x_size(), ch.y_size(), ch.z_size()],
        joint_mass_from_ux(&aux.joint_ux(), u, ch),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{conditional_mutual_information, Axis, InfoQuantity, M_U, M_X, M_Y, M_Z};

    const SPEC: &str = r#"{"X":2,"Y":2,"Z":2,"W1":[[1,0],[0,1]],"W2":[[0.5,0.5],[0.5,0.5]]}"#;

    #[test]
    fn parses_identity_useless_pair() {
        let ch = parse_channel_spec(SPEC).unwrap();
        assert_eq!((ch.x_size(), ch.y_size(), ch.z_size()), (2, 2, 2));
        assert_eq!(ch.w1, StochasticMatrix::identity(2));
    }

    #[test]
    fn tolerance_rule_on_row_sums() {
        let ok = r#"{"X":2,"Y":2,"Z":2,"W1":[[0.5,0.5000001],[0,1]],"W2":[[0.5,0.5],[0.5,0.5]]}"#;
        let ch = parse_channel_spec(ok).unwrap();
        assert!((ch.w1.row(0).as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let bad = r#"{"X":2,"Y":2,"Z":2,"W1":[[0.5,0.3],[0,1]],"W2":[[0.5,0.5],[0.5,0.5]]}"#;
        let err = parse_channel_spec(bad).unwrap_err().to_string();
        assert!(err.contains("W1 row 0"), "{err}");
    }

    #[test]
    fn rejects_negative_and_misshapen_input() {
        let neg = r#"{"X":2,"Y":2,"Z":2,"W1":[[1.5,-0.5],[0,1]],"W2":[[0.5,0.5],[0.5,0.5]]}"#;
        let err = parse_channel_spec(neg).unwrap_err().to_string();
        assert!(err.contains("W1 row 0 column 1"), "{err}");
        let short = r#"{"X":2,"Y":2,"Z":2,"W1":[[1,0]],"W2":[[0.5,0.5],[0.5,0.5]]}"#;
        assert!(parse_channel_spec(short).is_err());
        let extra = r#"{"X":2,"Y":2,"Z":2,"W1":[[1,0],[0,1]],"W2":[[0.5,0.5],[0.5,0.5]],"V":1}"#;
        assert!(parse_channel_spec(extra).is_err());
        assert!(parse_channel_spec("{").is_err());
    }

    #[test]
    fn spec_round_trip() {
        let ch = parse_channel_spec(SPEC).unwrap();
        assert_eq!(parse_channel_spec(&ch.to_spec_json()).unwrap(), ch);
    }

    #[test]
    fn joint_matches_hand_multiplication() {
        let ch = ChannelPair::new(StochasticMatrix::bsc(0.1), StochasticMatrix::bsc(0.3)).unwrap();
        let aux = AuxInputLaw::new(
            ProbDist::new(vec![0.4, 0.6]).unwrap(),
            StochasticMatrix::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(),
        )
        .unwrap();
        let j = joint_from_aux(&aux, &ch).unwrap();
        let pu = [0.4, 0.6];
        let pxu = [[0.9, 0.1], [0.2, 0.8]];
        let w1 = [[0.9, 0.1], [0.1, 0.9]];
        let w2 = [[0.7, 0.3], [0.3, 0.7]];
        for u in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    for z in 0..2 {
                        let want = pu[u] * pxu[u][x] * w1[x][y] * w2[x][z];
                        assert!((j.get(u, x, y, z) - want).abs() < 1e-16);
                    }
                }
            }
        }
        assert!(j.conditional_kl(Axis::Y, M_U | M_X | M_Z, &ch.w1) < 1e-12);
        assert!(j.conditional_kl(Axis::Z, M_U | M_X | M_Y, &ch.w2) < 1e-12);
    }

    #[test]
    fn constant_aux_gives_no_common_information() {
        let useless = StochasticMatrix::useless(2, &ProbDist::uniform(2));
        let ch = ChannelPair::new(StochasticMatrix::identity(2), useless).unwrap();
        let aux = AuxInputLaw::new(
            ProbDist::point(1, 0),
            StochasticMatrix::new(vec![vec![0.5, 0.5]]).unwrap(),
        )
        .unwrap();
        let j = joint_from_aux(&aux, &ch).unwrap();
        assert!(conditional_mutual_information(&j, InfoQuantity::UZ).abs() < 1e-15);
        let a = conditional_mutual_information(&j, InfoQuantity::XYGivenU);
        let b = conditional_mutual_information(&j, InfoQuantity::XY);
        assert!((a - b).abs() < 1e-15);
        assert!(j.marginal(M_Z).iter().all(|&p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn cardinality_constants() {
        let ch = parse_channel_spec(SPEC).unwrap();
        assert_eq!(ch.structured_aux_size(), 2);
        assert_eq!(ch.free_aux_size(), 3);
        assert_eq!(ch.loose_aux_size(), 3);
    }
}
