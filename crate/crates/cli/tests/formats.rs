use mvmot::metrics::{ObjectState, TrajectorySet};
use mvmot::simulator::{corner_rig, RigSpec};
use mvmot::{BBox2D, CameraModel, Detection, Keypoint2D, TrackerConfig};
use mvmot_cli::experiments::track_detections;
use mvmot_cli::formats::{
    parse_detections, parse_trajectories, write_detections, write_trajectories, DetectionFile, FormatError,
    DETECTIONS_MAGIC, TRAJECTORIES_MAGIC,
};
use nalgebra::Vector3;
use proptest::prelude::*;

fn rig() -> Vec<CameraModel> {
    corner_rig(&RigSpec::default()).unwrap().iter().map(|r| CameraModel::try_from(r).unwrap()).collect()
}

fn detection_file(keypoints: usize) -> impl Strategy<Value = DetectionFile> {
    let det = (
        0u32..4,
        -100.0..1900.0f64,
        -100.0..1000.0f64,
        1.0..400.0f64,
        1.0..800.0f64,
        0.0..1.0f64,
        prop::collection::vec((0.0..1920.0f64, 0.0..1080.0f64, any::<bool>()), keypoints),
    );
    prop::collection::vec((0u64..40, det), 0..60).prop_map(move |rows| {
        let mut file = DetectionFile::new(keypoints);
        for (frame, (cam, l, t, w, h, conf, kps)) in rows {
            let keypoints = kps
                .into_iter()
                .map(|(x, y, v)| if v { Keypoint2D::visible(x, y) } else { Keypoint2D::missing() })
                .collect();
            file.frames.entry(frame).or_default().entry(cam).or_default().push(Detection {
                camera_id: cam,
                bbox: BBox2D::from_pixels(l, t, w, h),
                confidence: conf,
                keypoints,
            });
        }
        file
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detections_round_trip(file in detection_file(3)) {
        let text = write_detections(&file);
        let parsed = parse_detections(&text).unwrap();
        prop_assert_eq!(parsed.keypoints, 3);
        prop_assert_eq!(parsed.frames.len(), file.frames.len());
        for (frame, cams) in &file.frames {
            for (cam, dets) in cams {
                let back = &parsed.frames[frame][cam];
                prop_assert_eq!(back.len(), dets.len());
                for (a, b) in dets.iter().zip(back) {
                    prop_assert!((a.bbox.as_vector() - b.bbox.as_vector()).amax() < 1e-9);
                    prop_assert_eq!(a.confidence, b.confidence);
                    prop_assert_eq!(&a.keypoints, &b.keypoints);
                }
            }
        }
        prop_assert_eq!(write_detections(&parsed), text);
    }

    #[test]
    fn tracking_survives_any_valid_stream(file in detection_file(15)) {
        let text = write_detections(&file);
        let parsed = parse_detections(&text).unwrap();
        let run = track_detections(&parsed, &rig(), &TrackerConfig::default()).unwrap();
        for (_, objects) in run.estimates.frames() {
            for o in objects.values() {
                prop_assert!(o.position.iter().all(|v| v.is_finite()));
                prop_assert_eq!(o.keypoints.len(), 15);
            }
        }
    }

    #[test]
    fn arbitrary_text_never_panics(body in "[0-9a-z,.\\-\n ]{0,400}") {
        let _ = parse_detections(&format!("{DETECTIONS_MAGIC} keypoints=1\n{body}"));
        let _ = parse_trajectories(&format!("{TRAJECTORIES_MAGIC} keypoints=0\n{body}"));
        let _ = parse_detections(&body);
    }

    #[test]
    fn trajectories_round_trip(rows in prop::collection::btree_map((0u64..20, 0u64..5), (-5.0..5.0f64, -5.0..5.0f64), 0..40)) {
        let mut set = TrajectorySet::new();
        for ((frame, id), (x, y)) in rows {
            set.insert(frame, id, ObjectState {
                position: Vector3::new(x, y, 0.9),
                half_lengths: Vector3::new(0.3, 0.25, 0.9),
                keypoints: vec![Vector3::new(x, y, 1.6), Vector3::new(x + 0.1, y, 0.0)],
            });
        }
        let text = write_trajectories(&set, 2);
        prop_assert_eq!(parse_trajectories(&text).unwrap(), set);
    }
}

#[test]
fn empty_input_is_an_empty_file() {
    assert!(parse_detections("").unwrap().frames.is_empty());
    assert!(parse_trajectories("").unwrap().is_empty());
    let empty = DetectionFile::new(15);
    let parsed = parse_detections(&write_detections(&empty)).unwrap();
    assert!(parsed.frames.is_empty());
    let run = track_detections(&parsed, &rig(), &TrackerConfig::default()).unwrap();
    assert!(run.estimates.is_empty());
}

#[test]
fn diagnostics_name_line_and_field() {
    let text = format!("{DETECTIONS_MAGIC} keypoints=0\n0,1,10,10,20,40,0.9\n1,1,10,ten,20,40,0.9\n");
    match parse_detections(&text) {
        Err(FormatError::Field { line, field, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(field, 4);
        }
        other => panic!("unexpected {other:?}"),
    }
    let short = format!("{DETECTIONS_MAGIC} keypoints=1\n0,1,10,10,20,40,0.9\n");
    assert!(matches!(parse_detections(&short), Err(FormatError::Record { line: 2, .. })));
    assert!(matches!(parse_detections("frame,camera\n"), Err(FormatError::Header { .. })));
    let negative = format!("{DETECTIONS_MAGIC} keypoints=0\n0,1,10,10,-20,40,0.9\n");
    assert!(parse_detections(&negative).is_err());
}

#[test]
fn duplicate_track_in_frame_is_rejected() {
    let text = format!("{TRAJECTORIES_MAGIC} keypoints=0\n0,1,0,0,0,1,1,1\n0,1,1,0,0,1,1,1\n");
    assert!(matches!(parse_trajectories(&text), Err(FormatError::Record { line: 3, .. })));
}

#[test]
fn unknown_camera_and_keypoint_mismatch_are_config_errors() {
    let mut file = DetectionFile::new(15);
    let det = Detection {
        camera_id: 9,
        bbox: BBox2D::from_pixels(10.0, 10.0, 20.0, 40.0),
        confidence: 1.0,
        keypoints: vec![Keypoint2D::missing(); 15],
    };
    file.frames.entry(0).or_default().insert(9, vec![det]);
    assert!(track_detections(&file, &rig(), &TrackerConfig::default()).is_err());
    let other = DetectionFile { keypoints: 18, ..DetectionFile::default() };
    assert!(track_detections(&other, &rig(), &TrackerConfig::default()).is_err());
}
