//! Solves `a·x − b·y = c` over the naturals with lower bounds.
//!
//! ```text
//! cargo run --example solve_equation -- 459 541 9000 361 128
//! ```

use rulehide::diophantine::{minimal_natural, solve_general};
use rulehide::DiophantineEq;

fn main() {
    let args: Vec<i128> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let (a, b, c) = match args[..] {
        [a, b, c, ..] => (a, b, c),
        _ => (37, 58, 855),
    };
    let lb_x = args.get(3).map_or(0, |&v| v as u64);
    let lb_y = args.get(4).map_or(0, |&v| v as u64);

    let eq = DiophantineEq::new(a, b, c).expect("a and b must be positive");
    let Some(family) = solve_general(eq).expect("no overflow") else {
        println!("{eq}: no integer solutions");
        return;
    };
    println!("{eq}");
    println!("x = {} + {}t, y = {} + {}t", family.x0, family.step_x, family.y0, family.step_y);
    let best = minimal_natural(&family, lb_x, lb_y).expect("no overflow");
    println!("minimal with x >= {lb_x}, y >= {lb_y}: {best}");
}
