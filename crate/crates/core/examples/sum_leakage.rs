//! The sum itself can give the inputs away when they come from small
//! alphabets.
//!
//! cargo run --example sum_leakage

use oblivious_aggregation::auditor::{preset_leakage, sum_leakage, LeakagePreset};

fn main() {
    for preset in [LeakagePreset::ThreeUser, LeakagePreset::BinaryF3] {
        let table = preset_leakage(preset);
        println!("[{}]", preset.name());
        print!("{}", table.to_text());
        println!();
    }

    // over F_2 the wraparound 1 + 1 = 0 hides the inputs again
    print!("{}", sum_leakage(&[vec![0, 1], vec![0, 1]], 2).unwrap().to_text());
}
