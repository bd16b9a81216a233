//! Robustness of a bounded-response requirement on a hand-made signal.

use stlgame::stl::{robustness, satisfies, Atom, Formula, Trajectory};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // x must stay in [-1, 1], and whenever it exceeds 0.5 it must drop
    // below 0.2 within three steps.
    let stay = Formula::globally(0, 9, Formula::in_box(0, -1.0, 1.0));
    let recover = Formula::globally(
        0,
        6,
        Formula::or(
            Formula::atom(Atom::le(0, 0.5)),
            Formula::eventually(1, 3, Formula::atom(Atom::le(0, 0.2))),
        ),
    );
    let phi = Formula::and(stay, recover);

    let xs = [0.0, 0.3, 0.7, 0.6, 0.1, 0.0, -0.4, -0.2, 0.0, 0.1];
    let xi = Trajectory::scalar(&xs, 0.1)?;
    println!("signal     {xs:?}");
    println!("robustness {:+.3}", robustness(&phi, &xi, 0)?);
    println!("satisfied  {}", satisfies(&phi, &xi, 0)?);

    let late = [0.0, 0.3, 0.7, 0.6, 0.6, 0.5, 0.3, 0.2, 0.0, 0.1];
    let xi = Trajectory::scalar(&late, 0.1)?;
    println!("signal     {late:?}");
    println!("robustness {:+.3}", robustness(&phi, &xi, 0)?);
    println!("satisfied  {}", satisfies(&phi, &xi, 0)?);
    Ok(())
}
