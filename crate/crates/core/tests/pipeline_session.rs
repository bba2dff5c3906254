use shadow_core::mapping::RegressorModel;
use shadow_core::motion::{
    generate_intermediate, relative_transform, warp_features, MotionParams,
};
use shadow_core::pipeline::{
    prepare_frame, process_sequence, run_stream, toy_processor, toy_session, toy_source,
    CollectSink, Frame, FramePayload, FrameProcessor, MotionSource, PipelineConfig,
    SessionState, SyntheticSource, VecSource,
};
use shadow_core::synth::SynthWorld;
use shadow_core::Error;

fn cfg() -> PipelineConfig {
    PipelineConfig::default()
}

fn sidecar_frames(world: &SynthWorld, n: u64) -> Vec<Frame> {
    let src = SyntheticSource::new(world.clone(), 30.0, n, cfg().preprocess_size, 5).with_sidecar();
    (0..n).map(|i| src.render(i).unwrap()).collect()
}

fn sidecar_processor() -> FrameProcessor {
    let c = cfg();
    let model = RegressorModel::new(c.model_input, c.model_input, &[16], 3).unwrap();
    FrameProcessor::new(model, MotionSource::SidecarOnly)
}

#[test]
fn source_is_computed_once() {
    let world = SynthWorld::published();
    let mut state = SessionState::new();
    let spec = toy_source(&world).unwrap();
    assert_eq!(state.precompute_source(&spec, (24, 24)).unwrap().compute_count(), 1);
    assert!(matches!(
        state.precompute_source(&spec, (24, 24)),
        Err(Error::SessionState(_))
    ));
}

#[test]
fn frames_before_source_are_rejected() {
    let world = SynthWorld::published();
    let frame = prepare_frame(&sidecar_frames(&world, 1)[0], (48, 48)).unwrap();
    let mut state = SessionState::new();
    assert!(matches!(
        sidecar_processor().process_frame(&frame, &mut state),
        Err(Error::SessionState(_))
    ));
}

#[test]
fn first_frame_reproduces_the_source() {
    let world = SynthWorld::published();
    let mut state = toy_session(&world, &cfg()).unwrap();
    let proc_ = sidecar_processor();
    let frame = prepare_frame(&sidecar_frames(&world, 1)[0], (48, 48)).unwrap();
    let repr = proc_.intermediate(&frame, &mut state).unwrap();
    let cache = state.cache().unwrap();
    let neutral = generate_intermediate(cache.feature_volume(), 0);
    assert!(repr.grid.linf_distance(&neutral.grid) < 1e-9);
    let mut state = toy_session(&world, &cfg()).unwrap();
    let cv = proc_.process_frame(&frame, &mut state).unwrap();
    let expected = proc_.model.forward(&neutral.grid).unwrap().prediction;
    for (a, b) in cv.values.iter().zip(expected) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn session_matches_hand_composition() {
    let world = SynthWorld::published();
    let frames = sidecar_frames(&world, 3);
    let proc_ = sidecar_processor();
    let mut state = toy_session(&world, &cfg()).unwrap();
    let got = process_sequence(&frames, &proc_, &mut state, 48);

    let cache = state.cache().unwrap();
    let p0 = frames[0].sidecar.as_ref().unwrap();
    for (frame, out) in frames.iter().zip(got) {
        let out = out.unwrap();
        let pi = frame.sidecar.as_ref().unwrap();
        let kp = relative_transform(pi, p0, cache.source_params(), cache.canonical_keypoints()).unwrap();
        let warped = warp_features(cache.feature_volume(), cache.source_keypoints(), &kp).unwrap();
        let repr = generate_intermediate(&warped, frame.seq);
        let expected = proc_.model.forward(&repr.grid).unwrap().prediction;
        assert_eq!(out.seq, frame.seq);
        for (a, b) in out.values.iter().zip(expected) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn replay_is_deterministic_and_anchor_is_frozen() {
    let world = SynthWorld::published();
    let frames = sidecar_frames(&world, 40);
    let proc_ = sidecar_processor();
    let mut a = toy_session(&world, &cfg()).unwrap();
    let mut b = toy_session(&world, &cfg()).unwrap();
    let ra: Vec<_> = process_sequence(&frames, &proc_, &mut a, 48).into_iter().map(Result::unwrap).collect();
    let rb: Vec<_> = process_sequence(&frames, &proc_, &mut b, 48).into_iter().map(Result::unwrap).collect();
    assert_eq!(ra, rb);
    let anchor: &MotionParams = a.first_frame_params().unwrap();
    assert_eq!(anchor, frames[0].sidecar.as_ref().unwrap());
    assert_eq!(a.frames_seen(), 40);
}

#[test]
fn rebase_moves_the_anchor() {
    let world = SynthWorld::published();
    let frames = sidecar_frames(&world, 5);
    let proc_ = sidecar_processor();
    let mut state = toy_session(&world, &cfg()).unwrap();
    process_sequence(&frames[..3], &proc_, &mut state, 48);
    state.request_rebase();
    process_sequence(&frames[3..], &proc_, &mut state, 48);
    assert_eq!(state.first_frame_params(), frames[3].sidecar.as_ref());
}

#[test]
fn thousand_frames_keep_one_source_computation() {
    let world = SynthWorld::published();
    let c = cfg();
    let proc_ = toy_processor(&world, &c, None).unwrap();
    let mut state = toy_session(&world, &c).unwrap();
    let mut source = SyntheticSource::new(world, 1e6, 1000, c.preprocess_size, 1);
    let report = run_stream(&mut source, &mut shadow_core::pipeline::NullSink, &proc_, &mut state, &c).unwrap();
    assert_eq!(report.frames_ingested, 1000);
    assert_eq!(report.source_compute_count, 1);
    assert_eq!(state.cache().unwrap().compute_count(), 1);
}

#[test]
fn empty_stream_exits_cleanly() {
    let world = SynthWorld::published();
    let c = cfg();
    let mut state = toy_session(&world, &c).unwrap();
    let report = run_stream(&mut VecSource::new(vec![], None), &mut CollectSink::default(), &sidecar_processor(), &mut state, &c).unwrap();
    assert_eq!(report.frames_ingested, 0);
    assert_eq!(report.controls_sent, 0);
    assert!(report.summaries.is_empty());
}

#[test]
fn streaming_requires_a_source() {
    let c = cfg();
    let mut state = SessionState::new();
    let res = run_stream(&mut VecSource::new(vec![], None), &mut CollectSink::default(), &sidecar_processor(), &mut state, &c);
    assert!(matches!(res, Err(Error::SessionState(_))));
}

#[test]
fn undecodable_frames_are_skipped() {
    let world = SynthWorld::published();
    let c = cfg();
    let mut frames = sidecar_frames(&world, 4);
    frames[1].payload = FramePayload::Encoded(vec![0xff]);
    frames[1].sidecar = None;
    let sink = CollectSink::default();
    let mut state = toy_session(&world, &c).unwrap();
    let report = run_stream(&mut VecSource::new(frames, Some(200.0)), &mut sink.clone(), &sidecar_processor(), &mut state, &c).unwrap();
    assert_eq!(report.skipped_frames, 1);
    let seqs: Vec<u64> = sink.0.lock().unwrap().iter().map(|m| m.seq).collect();
    assert_eq!(seqs, vec![0, 2, 3]);
    assert_eq!(report.diagnostics.len(), 1);
}

#[test]
fn inverse_path_runs_without_sidecar() {
    let world = SynthWorld::published();
    let c = cfg();
    let proc_ = toy_processor(&world, &c, None).unwrap();
    let src = SyntheticSource::new(world.clone(), 30.0, 3, c.preprocess_size, 2);
    let frames: Vec<Frame> = (0..3).map(|i| src.render(i).unwrap()).collect();
    let mut state = toy_session(&world, &c).unwrap();
    for out in process_sequence(&frames, &proc_, &mut state, c.preprocess_size) {
        out.unwrap().validate().unwrap();
    }
}

#[test]
fn file_and_socket_io_round_trip() {
    use shadow_core::pipeline::{ReaderSource, SocketSink, WriterSink};
    use shadow_core::wire::{encode_frame, ControlMessage, FrameMessage, StreamDecoder};
    use shadow_core::Grid;
    use std::io::Read;

    let world = SynthWorld::published();
    let c = cfg();
    let dir = tempfile::tempdir().unwrap();
    let frames_path = dir.path().join("frames.bin");
    let mut bytes = Vec::new();
    for seq in 0..5u64 {
        let g = Grid::from_fn(36, 48, |r, col| ((r + col + seq as usize) % 7) as f64 / 7.0);
        bytes.extend(encode_frame(&FrameMessage::from_grid(seq, 100 + seq, &g).unwrap()).unwrap());
    }
    std::fs::write(&frames_path, &bytes).unwrap();

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (mut conn, _) = listener.accept().unwrap();
        let mut buf = Vec::new();
        conn.read_to_end(&mut buf).unwrap();
        buf
    });

    let proc_ = toy_processor(&world, &c, None).unwrap();
    let mut state = toy_session(&world, &c).unwrap();
    let mut source = ReaderSource::open(&frames_path, None).unwrap();
    let mut sink = SocketSink::new(addr.to_string());
    let report = run_stream(&mut source, &mut sink, &proc_, &mut state, &c).unwrap();
    drop(sink);
    assert_eq!(report.frames_ingested, 5);
    let mut dec = StreamDecoder::<ControlMessage>::new();
    dec.push(&server.join().unwrap());
    let got: Vec<ControlMessage> = dec.map(Result::unwrap).collect();
    assert_eq!(got.iter().map(|m| m.seq).collect::<Vec<_>>(), report.sent_seqs);
    assert!(got.iter().all(|m| m.send_ts >= m.capture_ts && m.capture_ts >= 100));

    let out = dir.path().join("controls.bin");
    let mut state = toy_session(&world, &c).unwrap();
    let mut source = ReaderSource::open(&frames_path, Some(100.0)).unwrap();
    let mut sink = WriterSink(std::fs::File::create(&out).unwrap());
    let report = run_stream(&mut source, &mut sink, &proc_, &mut state, &c).unwrap();
    assert_eq!(std::fs::metadata(&out).unwrap().len(), 150 * report.controls_sent);
}

#[test]
fn unreachable_sink_does_not_stop_the_session() {
    use shadow_core::pipeline::SocketSink;
    let world = SynthWorld::published();
    let c = cfg();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut state = toy_session(&world, &c).unwrap();
    let mut source = VecSource::new(sidecar_frames(&world, 6), Some(100.0));
    let report = run_stream(&mut source, &mut SocketSink::new(format!("127.0.0.1:{port}")), &sidecar_processor(), &mut state, &c).unwrap();
    assert_eq!(report.controls_generated, 6);
    assert_eq!(report.controls_sent + report.send_failures, 6 - report.queues.transmit.dropped);
    assert!(report.send_failures > 0);
}
