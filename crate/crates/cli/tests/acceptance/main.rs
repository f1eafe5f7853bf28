//! End-to-end checks. `criteria` runs the numbered acceptance criteria in one
//! sequential test (so timings are not skewed by concurrent tests) and prints
//! one PASS/FAIL line per criterion; `cli_examples` exercises the `hotdic`
//! binary command by command.

mod cli_examples;
mod criteria;
