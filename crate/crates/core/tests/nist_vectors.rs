//! Worked examples from the SP 800-22 test descriptions.

use sdiqrng::stats::nist::*;

const EPSILON_100: &str =
    "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";

const LONGEST_RUN_128: &str = "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100111001101101100010110010";

fn bits(s: &str) -> Vec<u8> {
    s.bytes().map(|c| c - b'0').collect()
}

fn close(got: f64, want: f64) {
    assert!((got - want).abs() < 5e-7, "got {got:.7}, want {want}");
}

#[test]
fn frequency_examples() {
    close(frequency(&bits("1011010101")).unwrap(), 0.527089);
    close(frequency(&bits(EPSILON_100)).unwrap(), 0.109599);
}

#[test]
fn block_frequency_examples() {
    close(block_frequency(&bits("0110011010"), 3).unwrap(), 0.801252);
    close(block_frequency(&bits(EPSILON_100), 10).unwrap(), 0.706438);
}

#[test]
fn runs_examples() {
    close(runs(&bits("1001101011")).unwrap(), 0.147232);
    close(runs(&bits(EPSILON_100)).unwrap(), 0.500798);
}

#[test]
fn longest_run_example() {
    close(longest_run(&bits(LONGEST_RUN_128)).unwrap(), 0.180609);
}

#[test]
fn cumulative_sums_examples() {
    close(
        cumulative_sums(&bits("1011010111"), Direction::Forward).unwrap(),
        0.4116588,
    );
    close(
        cumulative_sums(&bits(EPSILON_100), Direction::Forward).unwrap(),
        0.219194,
    );
    close(
        cumulative_sums(&bits(EPSILON_100), Direction::Backward).unwrap(),
        0.114866,
    );
}

#[test]
fn fft_example() {
    // independently recomputed with numpy for the revised (0.95 n/2) threshold
    close(fft_spectral(&bits(EPSILON_100)).unwrap(), 0.646355);
    close(fft_spectral(&bits("1001010011")).unwrap(), 0.468160);
}

#[test]
fn approximate_entropy_examples() {
    close(approximate_entropy(&bits("0100110101"), 3).unwrap(), 0.261961);
    close(approximate_entropy(&bits(EPSILON_100), 2).unwrap(), 0.235301);
}

#[test]
fn serial_examples() {
    let (p1, p2) = serial(&bits("0011011101"), 3).unwrap();
    close(p1, 0.808792);
    close(p2, 0.670320);
    // recomputed with scipy's gammaincc
    let (p1, p2) = serial(&bits(EPSILON_100), 2).unwrap();
    close(p1, 0.256661);
    close(p2, 0.689157);
}
