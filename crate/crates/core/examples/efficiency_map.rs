//! Prints the motor efficiency surface and the electrical power it implies.

use stlgame::systems::efficiency::{motor_power, EfficiencyMap};

fn main() {
    let map = EfficiencyMap::default();
    let torques = [-150.0, -75.0, -20.0, 20.0, 75.0, 150.0];
    print!("{:>8}", "w\\T");
    for t in torques {
        print!("{t:>9.0}");
    }
    println!();
    for w in [5.0, 20.0, 40.0, 60.0, 80.0, 100.0] {
        print!("{w:>8.0}");
        for t in torques {
            print!("{:>9.3}", map.eta(t, w));
        }
        println!();
    }
    println!();
    for (t, w) in [(100.0, 50.0), (-100.0, 50.0), (20.0, 100.0)] {
        let mech = t * w;
        let elec = motor_power(&map, t, w);
        println!("T {t:>6.0} N m, w {w:>5.0} rad/s: mechanical {mech:>8.0} W, electrical {elec:>8.0} W");
    }
}
