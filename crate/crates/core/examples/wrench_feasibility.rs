//! The quasi-static grasp test: contacts with friction cones must cancel a
//! load applied along each axis.
//!
//!     cargo run --example wrench_feasibility

use geomatch::evaluation::{wrench_feasible, Contact, EvalConfig, Wrench, AXIS_DIRECTIONS, DIRECTION_LABELS};
use geomatch::geometry::Vec3;

fn report(name: &str, contacts: &[Contact], cfg: &EvalConfig) -> Result<(), Box<dyn std::error::Error>> {
    let load = cfg.mass * cfg.acceleration;
    let mut line = format!("{name:<28}");
    for (dir, label) in AXIS_DIRECTIONS.iter().zip(DIRECTION_LABELS) {
        let ok = wrench_feasible(contacts, &Wrench::force(Vec3::from(*dir) * load), &Vec3::zeros(), cfg)?;
        line.push_str(&format!(" {label}:{}", if ok { "ok" } else { "--" }));
    }
    println!("{line}");
    Ok(())
}

/// Contact on a sphere of radius `r` at unit direction `d`; the normal
/// points into the object.
fn on_sphere(d: Vec3, r: f64) -> Contact {
    let d = d.normalize();
    Contact { point: d * r, normal: -d }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EvalConfig::default();
    println!(
        "mu {}, {}-edge cones, load {} N per axis",
        cfg.friction,
        cfg.cone_edges,
        cfg.mass * cfg.acceleration
    );
    let r = 0.03;
    report("single contact", &[on_sphere(Vec3::x(), r)], &cfg)?;
    report("antipodal pair", &[on_sphere(Vec3::x(), r), on_sphere(-Vec3::x(), r)], &cfg)?;
    let tripod: Vec<Contact> = (0..3)
        .map(|k| {
            let a = k as f64 * 2.0 * std::f64::consts::PI / 3.0;
            on_sphere(Vec3::new(a.cos(), 0.0, a.sin()), r)
        })
        .collect();
    report("three fingers around equator", &tripod, &cfg)?;

    report("two contacts 90 deg apart", &[on_sphere(Vec3::x(), r), on_sphere(Vec3::z(), r)], &cfg)?;
    Ok(())
}
