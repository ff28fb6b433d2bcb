use std::fmt::Write;

use crate::catalog::{
    FOLLOW_PATH, GENERATE_PATH, HOVER, LAND, MOTION_GROUP, SELF_LOCALIZE, TAKE_OFF,
};

/// Room centers of `demo/demo_grid.txt`, in meters.
pub const DEMO_ROOMS: [(f64, f64); 3] = [(1.25, 6.25), (4.25, 6.25), (6.75, 4.75)];

pub const DEMO_ALTITUDE: f64 = 1.0;

/// A mission visiting each room in turn: take off, plan and follow a
/// path to each room while hovering in between, then land.
pub fn exploration_mission(rooms: &[(f64, f64)]) -> String {
    let mut m = String::new();
    writeln!(m, "# Visit {} room(s) and land.", rooms.len()).unwrap();
    writeln!(m, "group motion: {}", MOTION_GROUP.join(" ")).unwrap();
    writeln!(m, "{SELF_LOCALIZE} background").unwrap();
    writeln!(m, "{TAKE_OFF} altitude={DEMO_ALTITUDE}").unwrap();
    writeln!(m, "{HOVER} background").unwrap();
    for (x, y) in rooms {
        writeln!(m, "{GENERATE_PATH} x={x} y={y} continue-on-failure").unwrap();
        writeln!(m, "{FOLLOW_PATH} continue-on-failure").unwrap();
        writeln!(m, "{HOVER} background").unwrap();
    }
    writeln!(m, "{LAND}").unwrap();
    m
}
