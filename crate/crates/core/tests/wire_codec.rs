use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadow_core::wire::{
    decode_control, decode_frame, encode_control, encode_frame, ControlMessage, FrameFormat,
    FrameMessage, StreamDecoder, CONTROL_MAGIC, FRAME_MAGIC,
};

fn frame_strategy() -> impl Strategy<Value = FrameMessage> {
    (any::<u64>(), any::<u64>(), 0u16..12, 0u16..12, any::<bool>()).prop_flat_map(
        |(seq, ts, w, h, opaque)| {
            let len = if opaque { 0..64usize } else { let n = 4 * w as usize * h as usize; n..n + 1 };
            prop::collection::vec(any::<u8>(), len).prop_map(move |payload| FrameMessage {
                seq,
                capture_ts: ts,
                width: w,
                height: h,
                format: if opaque { FrameFormat::Encoded } else { FrameFormat::Grid },
                payload,
            })
        },
    )
}

fn control_strategy() -> impl Strategy<Value = ControlMessage> {
    (any::<u64>(), 0u64..u64::MAX / 2, 0u64..u64::MAX / 2, prop::array::uniform30(0.0f32..=1.0))
        .prop_map(|(seq, ts, lag, values)| ControlMessage {
            seq,
            capture_ts: ts,
            send_ts: ts + lag,
            values,
        })
}

proptest! {
    #[test]
    fn frame_round_trip(msg in frame_strategy()) {
        let bytes = encode_frame(&msg).unwrap();
        let (back, used) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(&back, &msg);
        prop_assert_eq!(encode_frame(&back).unwrap(), bytes);
    }

    #[test]
    fn control_round_trip(msg in control_strategy()) {
        let bytes = encode_control(&msg).unwrap();
        let (back, used) = decode_control(&bytes).unwrap();
        prop_assert_eq!(used, 150);
        prop_assert_eq!(
            back.values.map(f32::to_bits),
            msg.values.map(f32::to_bits)
        );
        prop_assert_eq!(encode_control(&back).unwrap(), bytes);
    }

    #[test]
    fn stream_decoder_recovers_every_message_after_noise(
        msgs in prop::collection::vec(frame_strategy(), 1..5),
        noise in prop::collection::vec(any::<u8>(), 0..40),
        chunk in 1usize..17,
    ) {
        let noise: Vec<u8> = noise.into_iter().filter(|&b| b != b'V').collect();
        let mut stream = noise;
        for m in &msgs {
            stream.extend(encode_frame(m).unwrap());
        }
        let mut dec = StreamDecoder::<FrameMessage>::new();
        let mut got = Vec::new();
        for piece in stream.chunks(chunk) {
            dec.push(piece);
            while let Some(r) = dec.next_message() {
                got.push(r.unwrap());
            }
        }
        prop_assert_eq!(got, msgs);
    }
}

#[test]
fn random_bytes_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..20_000 {
        let len = rng.random_range(0..96);
        let mut bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        // Give the decoders a chance to get past the magic check.
        if i % 2 == 0 && len >= 4 {
            let magic = if i % 4 == 0 { FRAME_MAGIC } else { CONTROL_MAGIC };
            bytes[..4].copy_from_slice(&magic);
        }
        let _ = decode_frame(&bytes);
        let _ = decode_control(&bytes);
        let mut fd = StreamDecoder::<FrameMessage>::new();
        fd.push(&bytes);
        for _ in fd.by_ref() {}
        let mut cd = StreamDecoder::<ControlMessage>::new();
        cd.push(&bytes);
        for _ in cd.by_ref() {}
    }
}
