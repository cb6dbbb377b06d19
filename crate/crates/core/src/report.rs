//! Output formats: JSON with 17 significant digits and trajectory CSV.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::mcgehee::{ManifoldTrajectory, Trajectory};

pub const CSV_HEADER: &str = "tau,t,r,theta,v,w,z,h";

/// Pretty JSON formatter that prints every float with 17 significant
/// digits, so repeated runs are bit-identical and values round-trip.
pub struct Sig17<'a>(PrettyFormatter<'a>);

impl Default for Sig17<'_> {
    fn default() -> Self {
        Sig17(PrettyFormatter::new())
    }
}

impl Formatter for Sig17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{}", sig17(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17::default());
    value
        .serialize(&mut ser)
        .expect("serializing to memory cannot fail");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

fn row<W: Write>(out: &mut W, cols: [f64; 8]) -> io::Result<()> {
    let cells: Vec<String> = cols.iter().map(|x| sig17(*x)).collect();
    writeln!(out, "{}", cells.join(","))
}

pub fn write_trajectory_csv<W: Write>(out: &mut W, traj: &Trajectory) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for s in &traj.samples {
        let st = s.state;
        row(out, [s.tau, s.t, st.r, st.theta, st.v, st.w, s.z, s.h])?;
    }
    Ok(())
}

/// Orbits on the collision manifold have `r = 0`, and `t` and `h` are
/// identically zero there.
pub fn write_manifold_csv<W: Write>(out: &mut W, traj: &ManifoldTrajectory) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for s in &traj.samples {
        row(out, [s.tau, 0.0, 0.0, s.theta, s.v, s.w, s.z, 0.0])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn json_numbers_have_17_digits() {
        let s = to_json_string(&serde_json::json!({"a": 0.1, "b": [1.0, -2.5e-300], "n": 3}));
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("-2.5000000000000000e-300"));
        assert!(s.contains("\"n\": 3"));
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
    }

    proptest! {
        #[test]
        fn sig17_roundtrips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            prop_assert_eq!(sig17(x).parse::<f64>().unwrap(), x);
        }
    }
}
