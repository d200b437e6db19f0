//! Built-in benchmark channels Φ⁽¹⁾…Φ⁽⁵⁾.
//!
//! The matrices are stored as the 3-decimal strings they are usually quoted
//! with. Φ⁽²⁾ and Φ⁽⁵⁾ are meant to have exactly type-II third rows, which the
//! rounded entries miss by about 1e-3 nats; the `*_equalized` variants solve for
//! the off-diagonal entry that puts D(P³‖Q*) exactly on C at λ* = (½,½,0,…).

use std::sync::OnceLock;

use serde::Serialize;

use crate::channel::ChannelMatrix;
use crate::hp::{self, Hp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Phi1,
    Phi2,
    Phi3,
    Phi4,
    Phi5,
    Phi2Equalized,
    Phi5Equalized,
}

impl Builtin {
    pub const ALL: [Builtin; 7] = [
        Builtin::Phi1,
        Builtin::Phi2,
        Builtin::Phi3,
        Builtin::Phi4,
        Builtin::Phi5,
        Builtin::Phi2Equalized,
        Builtin::Phi5Equalized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Phi1 => "phi1",
            Builtin::Phi2 => "phi2",
            Builtin::Phi3 => "phi3",
            Builtin::Phi4 => "phi4",
            Builtin::Phi5 => "phi5",
            Builtin::Phi2Equalized => "phi2-equalized",
            Builtin::Phi5Equalized => "phi5-equalized",
        }
    }

    pub fn from_name(s: &str) -> Option<Builtin> {
        Self::ALL.into_iter().find(|b| b.name() == s)
    }

    /// Decimal entries, row by row.
    pub fn tokens(self) -> Vec<Vec<String>> {
        let fixed = |rows: &[&[&str]]| rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect();
        match self {
            Builtin::Phi1 => fixed(&[&["0.8", "0.1", "0.1"], &["0.1", "0.8", "0.1"], &["0.25", "0.25", "0.5"]]),
            Builtin::Phi2 => fixed(&[&["0.8", "0.1", "0.1"], &["0.1", "0.8", "0.1"], &["0.3", "0.3", "0.4"]]),
            Builtin::Phi3 => fixed(&[&["0.8", "0.1", "0.1"], &["0.1", "0.8", "0.1"], &["0.35", "0.35", "0.3"]]),
            Builtin::Phi4 => fixed(&[
                &["0.793", "0.196", "0.011"],
                &["0.196", "0.793", "0.011"],
                &["0.25", "0.25", "0.5"],
            ]),
            Builtin::Phi5 => phi5_tokens("0.238", "0.324"),
            Builtin::Phi2Equalized => {
                let (s, t) = &equalized().phi2;
                fixed(&[&["0.8", "0.1", "0.1"], &["0.1", "0.8", "0.1"], &[s, s, t]])
            }
            Builtin::Phi5Equalized => {
                let (s, t) = &equalized().phi5;
                phi5_tokens(s, t)
            }
        }
    }

    pub fn channel(self) -> ChannelMatrix {
        let rows = self
            .tokens()
            .iter()
            .map(|r| r.iter().map(|s| s.parse::<f64>().expect("built-in entries parse")).collect())
            .collect();
        ChannelMatrix::new_renormalized(rows).expect("built-in channels are valid")
    }

    /// The fixed point quoted alongside the channel, when it is a boundary point.
    pub fn stated_fixed_point(self) -> Option<Vec<f64>> {
        match self {
            Builtin::Phi2 | Builtin::Phi3 | Builtin::Phi2Equalized => Some(vec![0.5, 0.5, 0.0]),
            Builtin::Phi5 | Builtin::Phi5Equalized => Some(vec![0.5, 0.5, 0.0, 0.0, 0.0]),
            _ => None,
        }
    }
}

fn phi5_tokens(s: &str, t: &str) -> Vec<Vec<String>> {
    let rows: [[&str; 5]; 5] = [
        ["0.6", "0.1", "0.1", "0.1", "0.1"],
        ["0.1", "0.6", "0.1", "0.1", "0.1"],
        [s, s, t, "0.1", "0.1"],
        [s, s, "0.1", t, "0.1"],
        [s, s, "0.1", "0.1", t],
    ];
    rows.iter().map(|r| r.iter().map(|x| x.to_string()).collect()).collect()
}

pub fn phi1() -> ChannelMatrix {
    Builtin::Phi1.channel()
}
pub fn phi2() -> ChannelMatrix {
    Builtin::Phi2.channel()
}
pub fn phi3() -> ChannelMatrix {
    Builtin::Phi3.channel()
}
pub fn phi4() -> ChannelMatrix {
    Builtin::Phi4.channel()
}
pub fn phi5() -> ChannelMatrix {
    Builtin::Phi5.channel()
}

struct Equalized {
    phi2: (String, String),
    phi5: (String, String),
}

const EQ_BITS: usize = 448;
const EQ_DIGITS: usize = 110;

fn equalized() -> &'static Equalized {
    static CELL: OnceLock<Equalized> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut h = Hp::new(EQ_BITS).expect("precision in range");
        // Φ⁽²⁾: row (s, s, 1 − 2s) against Q* = (.45, .45, .1).
        let phi2 = solve_row(&mut h, (0.28, 0.32), "0.45", "0.1", &[], |h, s| {
            let two = h.from_f64(2.0);
            h.sub(&h.one(), &h.mul(&two, s))
        });
        // Φ⁽⁵⁾: row (s, s, 0.8 − 2s, .1, .1) against Q* = (.35, .35, .1, .1, .1).
        let phi5 = solve_row(&mut h, (0.22, 0.25), "0.35", "0.1", &["0.1", "0.1"], |h, s| {
            let two = h.from_f64(2.0);
            let eight = h.parse("0.8").expect("literal");
            h.sub(&eight, &h.mul(&two, s))
        });
        Equalized { phi2, phi5 }
    })
}

/// Bisect for s with D((s, s, t(s), rest…) ‖ Q*) = D(P¹‖Q*), where rows 1–2
/// have the fixed form (x, y, 0.1…) matching the channel family.
fn solve_row(
    h: &mut Hp,
    bracket: (f64, f64),
    q_sym: &str,
    q_t: &str,
    rest: &[&str],
    t_of: impl Fn(&mut Hp, &astro_float::BigFloat) -> astro_float::BigFloat,
) -> (String, String) {
    let qs = h.parse(q_sym).expect("literal");
    let qt = h.parse(q_t).expect("literal");
    let rest: Vec<_> = rest.iter().map(|x| h.parse(x).expect("literal")).collect();
    // Capacity: D(P¹‖Q*) for the shared top rows. Φ⁽²⁾ top row (.8,.1,.1) over
    // (.45,.45,.1); Φ⁽⁵⁾ top row (.6,.1,.1,.1,.1) over (.35,.35,.1,.1,.1).
    let top: Vec<(&str, &str)> = if rest.is_empty() {
        vec![("0.8", "0.45"), ("0.1", "0.45"), ("0.1", "0.1")]
    } else {
        vec![("0.6", "0.35"), ("0.1", "0.35"), ("0.1", "0.1"), ("0.1", "0.1"), ("0.1", "0.1")]
    };
    let mut cap = h.zero();
    for (p, q) in top {
        let p = h.parse(p).expect("literal");
        let q = h.parse(q).expect("literal");
        let l = h.ln(&h.div(&p, &q));
        cap = h.add(&cap, &h.mul(&p, &l));
    }
    let f = |h: &mut Hp, s: &astro_float::BigFloat| {
        let t = t_of(h, s);
        let two = h.from_f64(2.0);
        let a = h.ln(&h.div(s, &qs));
        let b = h.ln(&h.div(&t, &qt));
        let mut d = h.add(&h.mul(&two, &h.mul(s, &a)), &h.mul(&t, &b));
        for r in &rest {
            let l = h.ln(&h.div(r, &qt));
            d = h.add(&d, &h.mul(r, &l));
        }
        h.sub(&d, &cap)
    };
    let mut lo = h.from_f64(bracket.0);
    let mut hi = h.from_f64(bracket.1);
    let f_lo = f(h, &lo);
    let lo_neg = f_lo.is_negative();
    assert_ne!(lo_neg, f(h, &hi).is_negative(), "bracket must straddle the root");
    let half = h.from_f64(0.5);
    for _ in 0..EQ_BITS {
        let mid = h.mul(&h.add(&lo, &hi), &half);
        if f(h, &mid).is_negative() == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = h.mul(&h.add(&lo, &hi), &half);
    let t = t_of(h, &s);
    (to_decimal(h, &s), to_decimal(h, &t))
}

/// Plain positional decimal with `EQ_DIGITS` significant digits.
fn to_decimal(h: &mut Hp, x: &astro_float::BigFloat) -> String {
    let sci = h.decimal(x);
    let (mant, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).take(EQ_DIGITS).collect();
    // Mantissa is d.ddd… so the value is 0.dddd… × 10^(exp+1); here exp = −1.
    assert_eq!(exp, -1, "equalized entries lie in (0.1, 1)");
    format!("0.{digits}")
}

/// The equalizing entries as `f64`, for reporting.
pub fn equalized_entries() -> [(f64, f64); 2] {
    let e = equalized();
    let p = |(a, b): &(String, String)| (a.parse().unwrap(), b.parse().unwrap());
    [p(&e.phi2), p(&e.phi5)]
}

/// Extended-precision version of a built-in channel.
pub fn hp_channel(h: &mut Hp, b: Builtin) -> hp::HpChannel {
    hp::HpChannel::from_decimal(h, &b.tokens()).expect("built-in entries parse")
}
