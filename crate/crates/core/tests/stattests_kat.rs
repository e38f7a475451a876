//! Known-answer checks against the worked examples and the binary
//! expansion of e published with the standard test battery.

use ctxrand::stattests::*;
use ctxrand::{BitStream, Execution};

const PI_100: &str =
    "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";
const LONGEST_RUN_128: &str = "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100111001101101100010110010";
const TOL: f64 = 1e-4;

fn bits(s: &str) -> BitStream {
    BitStream::from_ascii(s).unwrap()
}

fn e_bits() -> BitStream {
    let bytes = include_bytes!("data/e_expansion_1e6.bin").to_vec();
    BitStream::from_bytes(bytes, 1_000_000).unwrap()
}

fn close(got: f64, want: f64) {
    assert!((got - want).abs() < TOL, "got {got}, want {want}");
}

#[test]
fn frequency_examples() {
    close(frequency(&bits("1011010101")).unwrap(), 0.527089);
    close(frequency(&bits(PI_100)).unwrap(), 0.109599);
}

#[test]
fn block_frequency_examples() {
    close(block_frequency(&bits("0110011010"), 3).unwrap(), 0.801252);
    close(block_frequency(&bits(PI_100), 10).unwrap(), 0.706438);
}

#[test]
fn cumulative_sums_examples() {
    close(cumulative_sums(&bits("1011010111")).unwrap()[0], 0.4116588);
    let [f, r] = cumulative_sums(&bits(PI_100)).unwrap();
    close(f, 0.219194);
    close(r, 0.114866);
}

#[test]
fn runs_examples() {
    close(runs(&bits("1001101011")).unwrap(), 0.147232);
    close(runs(&bits(PI_100)).unwrap(), 0.500798);
}

#[test]
fn longest_run_example() {
    let (p, m) = longest_run(&bits(LONGEST_RUN_128)).unwrap();
    assert_eq!(m, 8);
    close(p, 0.180609);
}

#[test]
fn serial_example() {
    let [p1, p2] = serial(&bits("0011011101"), 3).unwrap();
    close(p1, 0.808792);
    close(p2, 0.670320);
}

/// Reference outputs of the battery on the first 10^6 bits of e.
#[test]
fn e_expansion_values() {
    let e = e_bits();
    close(frequency(&e).unwrap(), 0.953749);
    close(block_frequency(&e, 128).unwrap(), 0.211072);
    let [f, r] = cumulative_sums(&e).unwrap();
    close(f, 0.669886);
    close(r, 0.724265);
    close(runs(&e).unwrap(), 0.561917);
    let (p, m) = longest_run(&e).unwrap();
    assert_eq!(m, 10_000);
    close(p, 0.718945);
    close(rank(&e).unwrap(), 0.306156);
    close(spectral(&e).unwrap(), 0.847187);
    let [a, b] = serial(&e, 2).unwrap();
    close(a, 0.843764);
    close(b, 0.561915);
}

#[test]
fn e_expansion_passes_battery() {
    let reports = run_battery(&e_bits(), DEFAULT_THRESHOLD, Execution::Parallel);
    assert!(battery_passed(&reports), "{reports:#?}");
    let seq = run_battery(&e_bits(), DEFAULT_THRESHOLD, Execution::Sequential);
    assert_eq!(reports, seq);
}
