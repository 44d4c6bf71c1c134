use rffid::phy::chips_for_symbol;

// IEEE 802.15.4 2.4 GHz O-QPSK symbol-to-chip mapping, chips c0 first.
const TABLE: [&str; 16] = [
    "11011001110000110101001000101110",
    "11101101100111000011010100100010",
    "00101110110110011100001101010010",
    "00100010111011011001110000110101",
    "01010010001011101101100111000011",
    "00110101001000101110110110011100",
    "11000011010100100010111011011001",
    "10011100001101010010001011101101",
    "10001100100101100000011101111011",
    "10111000110010010110000001110111",
    "01111011100011001001011000000111",
    "01110111101110001100100101100000",
    "00000111011110111000110010010110",
    "01100000011101111011100011001001",
    "10010110000001110111101110001100",
    "11001001011000000111011110111000",
];

#[test]
fn matches_the_standard_table() {
    for (s, row) in TABLE.iter().enumerate() {
        let want: Vec<u8> = row.bytes().map(|b| b - b'0').collect();
        assert_eq!(chips_for_symbol(s as u8).unwrap().chips().to_vec(), want, "symbol {s}");
    }
}

#[test]
fn table_is_self_consistent() {
    // Symbols 1-7 rotate symbol 0 right by four chips each; 8-15 invert the
    // odd chips of 0-7.
    let row = |s: usize| TABLE[s].as_bytes().to_vec();
    for s in 1..8 {
        let mut r = row(0);
        r.rotate_right(4 * s);
        assert_eq!(r, row(s));
    }
    for s in 8..16 {
        let flipped: Vec<u8> =
            row(s - 8).iter().enumerate().map(|(i, &b)| if i % 2 == 1 { b ^ 1 } else { b }).collect();
        assert_eq!(flipped, row(s));
    }
}

#[test]
fn out_of_range_symbol_is_rejected() {
    assert!(chips_for_symbol(16).is_err());
}
