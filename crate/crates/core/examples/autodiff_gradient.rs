//! Reverse-mode gradient of a small expression, checked against central
//! differences.

use stlgame::autodiff::{finite_difference, Scalar, Tape};

fn f<S: Scalar>(x: &[S]) -> S {
    (x[0] * x[1]).sin() + x[1].tanh() * x[2] - x[0].max2(x[2]).abs() * 0.5
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let point = [0.7, -1.2, 0.4];
    let tape = Tape::new();
    let vars = tape.lift_all(&point)?;
    let y = f(&vars);
    let grads = tape.backward(y).wrt_all(&vars);
    let numeric = finite_difference(|x| f(x), &point, 1e-6);

    println!("f({point:?}) = {:.6} ({} tape nodes)", y.value(), tape.len());
    for (i, (g, n)) in grads.iter().zip(&numeric).enumerate() {
        println!("df/dx{i}: reverse {g:+.9}  central {n:+.9}");
    }
    Ok(())
}
