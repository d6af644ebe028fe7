import json
import sys
from pathlib import Path

import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from epr.errors import DecodeError, ProtocolError, VerificationError
from epr.experiment import empirical_corr, run_experiment
from epr.geometry import Direction
from epr.source import SourceConfig, stream
from epr.wire import (Answer, Collector, Config, Done, Hello, PointMsg, RunManifest,
                      StationSession, Transcript, audit_transcripts, collector_loop, decode,
                      encode, require_audit, station_loop, transcript_path)

A, B, C = (Direction.from_angle(x) for x in (0.0, 0.3141593, 1.989675))


def manifest_for(tag="I", n=50, seed=42):
    return RunManifest.for_experiment(tag, A, B, C, seed, n, run_id=f"run-{seed}-{tag}")


def test_answer_encodes_exactly_four_fields():
    line = encode(Answer(trial_id=7, station_id=2, value=-1))
    assert line.endswith(b"\n") and line.count(b"\n") == 1
    assert json.loads(line) == {"type": "ANSWER", "trial_id": 7, "station_id": 2, "value": -1}
    assert line.startswith(b'{"type":"ANSWER"')


def test_point_round_trip():
    message = PointMsg(trial_id=3, x=0.25, y=-0.5)
    assert decode(encode(message)) == message


def test_hello_without_station_id_round_trips():
    message = Hello(role="source", run_id="r")
    assert b"station_id" not in encode(message)
    assert decode(encode(message)) == message


def test_config_with_foreign_field_is_rejected():
    line = json.dumps({"type": "CONFIG", "run_id": "r", "station_id": 1, "setting_angle_rad": 0.0,
                       "n_trials": 5, "other_setting": 0.3})
    with pytest.raises(DecodeError) as info:
        decode(line)
    assert info.value.field == "other_setting"


@pytest.mark.parametrize("payload, field", [
    ({"type": "ANSWER", "trial_id": 1, "station_id": 2, "value": 0}, "value"),
    ({"type": "ANSWER", "trial_id": 1, "station_id": 3, "value": 1}, "station_id"),
    ({"type": "ANSWER", "trial_id": -1, "station_id": 1, "value": 1}, "trial_id"),
    ({"type": "ANSWER", "trial_id": True, "station_id": 1, "value": 1}, "trial_id"),
    ({"type": "POINT", "trial_id": 1, "x": 0.1}, "y"),
    ({"type": "CONFIG", "run_id": "r", "station_id": 1, "setting_angle_rad": 7.0, "n_trials": 5},
     "setting_angle_rad"),
    ({"type": "CONFIG", "run_id": "r", "station_id": 1, "setting_angle_rad": 0.1, "n_trials": 0},
     "n_trials"),
    ({"type": "HELLO", "role": "orchestrator", "run_id": "r"}, "role"),
    ({"type": "NOISE"}, "type"),
    ({"type": [1]}, "type"),
    ({"type": {"POINT": 1}}, "type"),
    ({"type": "POINT", "trial_id": 0, "x": 10 ** 400, "y": 0.0}, "x"),
])
def test_decode_errors_name_the_field(payload, field):
    with pytest.raises(DecodeError) as info:
        decode(json.dumps(payload))
    assert info.value.field == field


@pytest.mark.parametrize("line", [b"not json\n", b"[1, 2]\n", b"\xff\xfe\n"])
def test_decode_rejects_malformed_lines(line):
    with pytest.raises(DecodeError):
        decode(line)


def test_manifest_validation_and_json():
    manifest = manifest_for("II")
    assert (manifest.setting1, manifest.setting2) == (C.angle_rad, B.angle_rad)
    assert RunManifest.from_json(manifest.to_json()) == manifest
    with pytest.raises(ValueError):
        RunManifest("r", 1, 10, 0.0, 7.0, "I")
    with pytest.raises(ValueError):
        RunManifest("r", 1, 10, 0.0, 0.1, "IV")


def station_inbound(manifest, station, n=None):
    n = manifest.n_trials if n is None else n
    yield manifest.config_for(station)
    yield Hello(role="source", run_id=manifest.run_id)
    for tp in stream(SourceConfig(seed=manifest.seed, n_trials=n)):
        yield PointMsg(trial_id=tp.trial_id, x=tp.point.x, y=tp.point.y)
    yield Done(run_id=manifest.run_id, count=n)


def test_station_loop_answers_every_point():
    manifest = manifest_for(n=500)
    out = []
    done = station_loop(1, station_inbound(manifest, 1), out.append)
    assert done == Done(run_id=manifest.run_id, count=500)
    assert [m.trial_id for m in out[:-1]] == list(range(500))
    assert out[-1] == done


def test_station_config_then_point_example():
    session = StationSession(2)
    session.handle(Config(run_id="r", station_id=2, setting_angle_rad=0.0, n_trials=1))
    (answer,) = session.handle(PointMsg(trial_id=0, x=0.3, y=0.5))
    assert answer == Answer(trial_id=0, station_id=2, value=1)


def test_station_protocol_errors():
    session = StationSession(1)
    with pytest.raises(ProtocolError, match="before CONFIG"):
        session.handle(PointMsg(trial_id=0, x=0.1, y=0.1))

    session.handle(Config(run_id="r", station_id=1, setting_angle_rad=0.5, n_trials=2))
    session.handle(PointMsg(trial_id=0, x=0.1, y=0.1))
    with pytest.raises(ProtocolError, match="duplicate"):
        session.handle(PointMsg(trial_id=0, x=0.2, y=0.1))
    with pytest.raises(ProtocolError, match="outside"):
        session.handle(PointMsg(trial_id=1, x=0.9, y=0.9))
    with pytest.raises(ProtocolError):
        StationSession(2).handle(Config(run_id="r", station_id=1, setting_angle_rad=0.5, n_trials=2))


def test_second_done_is_a_no_op():
    session = StationSession(1)
    session.handle(Config(run_id="r", station_id=1, setting_angle_rad=0.5, n_trials=1))
    session.handle(PointMsg(trial_id=0, x=0.1, y=0.1))
    assert session.handle(Done(run_id="r", count=1)) == [Done(run_id="r", count=1)]
    assert session.handle(Done(run_id="r", count=1)) == []


def run_stations(manifest):
    answers = {}
    for station in (1, 2):
        out = []
        station_loop(station, station_inbound(manifest, station), out.append)
        answers[station] = out
    return answers


def test_collector_pairs_out_of_order_answers():
    manifest = manifest_for(n=200)
    answers = run_stations(manifest)
    inbound = [(1, Hello(role="station", run_id=manifest.run_id, station_id=1)),
               (2, Hello(role="station", run_id=manifest.run_id, station_id=2))]
    body1, body2 = answers[1][:-1], answers[2][:-1]
    for m1, m2 in zip(reversed(body1), body2):
        inbound += [(2, m2), (1, m1)]
    inbound += [(1, answers[1][-1]), (2, answers[2][-1])]

    records = collector_loop(inbound, manifest)
    assert [r.trial_id for r in records] == list(range(200))
    local = run_experiment(stream(SourceConfig(seed=manifest.seed, n_trials=200)), A, B)
    assert records == local


def test_distributed_answers_equal_in_process_for_seed_42():
    manifest = manifest_for("I", n=5_000, seed=42)
    answers = run_stations(manifest)
    inbound = [(s, Hello(role="station", run_id=manifest.run_id, station_id=s)) for s in (1, 2)]
    inbound += [(s, m) for s in (1, 2) for m in answers[s]]
    distributed = empirical_corr(collector_loop(inbound, manifest))
    local = empirical_corr(run_experiment(stream(SourceConfig(seed=42, n_trials=5_000)), A, B))
    assert distributed == local


def test_collector_reports_missing_trial():
    manifest = manifest_for(n=20)
    answers = run_stations(manifest)
    inbound = [(s, Hello(role="station", run_id=manifest.run_id, station_id=s)) for s in (1, 2)]
    inbound += [(1, m) for m in answers[1]]
    inbound += [(2, m) for m in answers[2] if getattr(m, "trial_id", None) != 17]
    with pytest.raises(ProtocolError, match="trial 17"):
        collector_loop(inbound, manifest)


def test_collector_rejects_duplicate_station_hello():
    collector = Collector(manifest_for())
    collector.register(Hello(role="station", run_id="run-42-I", station_id=1))
    with pytest.raises(ProtocolError, match="already connected"):
        collector.register(Hello(role="station", run_id="run-42-I", station_id=1))


def test_collector_rejects_duplicate_answer():
    collector = Collector(manifest_for())
    collector.accept(1, Answer(trial_id=0, station_id=1, value=1))
    with pytest.raises(ProtocolError, match="duplicate"):
        collector.accept(1, Answer(trial_id=0, station_id=1, value=-1))


def write_station_transcript(directory, run_id, station, configs):
    transcript = Transcript(transcript_path(directory, run_id, f"station{station}"))
    for config in configs:
        transcript.log("IN", "orchestrator", encode(config))
    transcript.log("IN", "source", encode(PointMsg(trial_id=0, x=0.1, y=0.2)))
    transcript.log("OUT", "collector", encode(Answer(trial_id=0, station_id=station, value=1)))
    transcript.close()


def test_audit_passes_with_one_setting_per_station(tmp_path):
    manifest = manifest_for()
    for station in (1, 2):
        write_station_transcript(tmp_path, manifest.run_id, station, [manifest.config_for(station)])
    result = require_audit(tmp_path, manifest.run_id)
    assert result.passed
    assert result.settings_seen == {"station1": [manifest.setting1], "station2": [manifest.setting2]}


def test_audit_fails_when_a_station_hears_two_settings(tmp_path):
    manifest = manifest_for()
    leak = Config(run_id=manifest.run_id, station_id=1, setting_angle_rad=manifest.setting2, n_trials=50)
    write_station_transcript(tmp_path, manifest.run_id, 1, [manifest.config_for(1), leak])
    write_station_transcript(tmp_path, manifest.run_id, 2, [manifest.config_for(2)])
    assert not audit_transcripts(tmp_path, manifest.run_id).passed
    with pytest.raises(VerificationError):
        require_audit(tmp_path, manifest.run_id)


def test_audit_fails_on_missing_transcript(tmp_path):
    assert not audit_transcripts(tmp_path, "nothing").passed


def test_rerun_with_new_settings_replaces_the_transcript(tmp_path):
    first = manifest_for()
    write_station_transcript(tmp_path, first.run_id, 1, [first.config_for(1)])
    moved = RunManifest.for_experiment("I", Direction.from_angle(0.5), B, C, 42, 50, run_id=first.run_id)
    for station in (1, 2):
        write_station_transcript(tmp_path, moved.run_id, station, [moved.config_for(station)])

    result = require_audit(tmp_path, moved.run_id)
    assert result.settings_seen["station1"] == [moved.setting1]


def test_collector_ignores_a_second_done():
    manifest = manifest_for(n=20)
    answers = run_stations(manifest)
    inbound = [(s, Hello(role="station", run_id=manifest.run_id, station_id=s)) for s in (1, 2)]
    for station in (1, 2):
        inbound += [(station, m) for m in answers[station]]
        inbound.append((station, answers[station][-1]))
    assert collector_loop(inbound, manifest) == collector_loop(inbound[:-1], manifest)
