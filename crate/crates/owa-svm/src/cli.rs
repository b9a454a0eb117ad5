//! Command-line wiring (placeholder during bring-up).

pub fn main_entry() {}
