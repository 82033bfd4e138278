use proptest::prelude::*;
use qswap::codec::{
    crc32, decode_frame, decode_hex_line, encode_frame, to_hex_line, DecodeError, EthernetHeader,
    MacAddr, MessageType, QpFrame, QpHeader, FRAME_BITS, FRAME_LEN, QUANTUM_ETHERTYPE,
};

fn arb_frame() -> impl Strategy<Value = QpFrame> {
    (
        any::<[u8; 6]>(),
        any::<[u8; 6]>(),
        any::<u16>(),
        any::<u32>(),
        any::<u32>(),
        0u8..16,
        any::<bool>(),
        any::<u64>(),
        any::<u8>(),
        any::<u16>(),
    )
        .prop_map(
            |(dst, src, len, seq, ack_seq, code, ack, e2e, level, token)| QpFrame {
                eth: EthernetHeader {
                    dst: MacAddr(dst),
                    src: MacAddr(src),
                    ether_type: QUANTUM_ETHERTYPE,
                    payload_len: len,
                },
                qp: QpHeader {
                    seq,
                    ack_seq,
                    msg_type: MessageType::try_from(code).unwrap(),
                    ack,
                    e2e_id: e2e,
                    level,
                    token_id: token,
                },
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn frames_round_trip(f in arb_frame()) {
        let bytes = encode_frame(&f);
        prop_assert_eq!(decode_frame(&bytes).unwrap(), f);
        prop_assert_eq!(decode_hex_line(&to_hex_line(&f)).unwrap(), f);
    }

    #[test]
    fn crc_matches_reference_implementation(f in arb_frame()) {
        let bytes = encode_frame(&f);
        // The FCS covers every byte except its own four.
        let mut covered = bytes[..16].to_vec();
        covered.extend_from_slice(&bytes[20..]);
        prop_assert_eq!(&bytes[16..20], &crc32fast::hash(&covered).to_be_bytes());
    }
}

#[test]
fn check_value() {
    assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    assert_eq!(crc32fast::hash(b"123456789"), 0xCBF4_3926);
    assert_eq!(crc32(b""), 0);
}

#[test]
fn every_single_bit_error_is_detected() {
    let mut f = QpFrame::new(
        MacAddr::local(2),
        MacAddr::local(1),
        MessageType::SwappingRequest,
        42,
        0x0123_4567_89ab_cdef,
    );
    f.qp.level = 3;
    f.qp.token_id = 0x0102;
    let good = encode_frame(&f);
    assert_eq!(FRAME_BITS as usize, FRAME_LEN * 8);
    for bit in 0..FRAME_BITS as usize {
        let mut bad = good;
        bad[bit / 8] ^= 0x80 >> (bit % 8);
        assert!(
            matches!(decode_frame(&bad), Err(DecodeError::BadCrc { .. })),
            "bit {bit} undetected"
        );
    }
}

#[test]
fn malformed_input_is_rejected() {
    let good = encode_frame(&QpFrame::new(
        MacAddr::BROADCAST,
        MacAddr::local(1),
        MessageType::DiscoveryRequest,
        1,
        1,
    ));
    assert_eq!(decode_frame(&good[..39]), Err(DecodeError::TooShort(39)));
    let mut long = good.to_vec();
    long.push(0);
    assert_eq!(decode_frame(&long), Err(DecodeError::TrailingBytes(1)));
    assert!(matches!(decode_hex_line("0g"), Err(DecodeError::Hex(_))));
}
