//! Solves small zero-sum games with Lemke–Howson and checks the answer
//! against support enumeration.

use coevo_trees::nash::{lemke_howson, solve, support_enumeration, PayoffMatrix};

fn main() {
    let games = [
        ("matching pennies", "1 -1\n-1 1\n"),
        ("2x2 mixed", "3 1\n0 2\n"),
        ("saddle point", "4 2 3\n1 0 1\n5 2 6\n"),
        ("rock paper scissors", "0 -1 1\n1 0 -1\n-1 1 0\n"),
    ];
    for (name, text) in games {
        let a = PayoffMatrix::parse(text).expect("well-formed matrix");
        let lh = lemke_howson(&a, 0).expect("nondegenerate game");
        let all = support_enumeration(&a).expect("small game");
        println!("{name}:");
        println!("  row {:.4?} col {:.4?} value {:.6}", lh.row, lh.col, lh.value);
        println!(
            "  best-response gap {:.1e}; support enumeration found {} equilibria, value {:.6}",
            lh.best_response_gap(&a),
            all.len(),
            all[0].value
        );
    }

    // degenerate: every strategy is an equilibrium, the solver still answers
    let flat = PayoffMatrix::parse("1 1\n1 1\n").unwrap();
    let s = solve(&flat).unwrap();
    println!("constant game solved by {:?}: value {}", s.method, s.equilibrium.value);
}
