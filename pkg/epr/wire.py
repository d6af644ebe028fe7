"""
Wire protocol between source, stations and collector.

One JSON object per line with a "type" discriminator. Decoding is strict: every
field of a type is required (bar HELLO's station_id), nothing else is accepted.
A station can therefore only ever be told its own setting.
"""

import json
import math
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from epr.errors import DecodeError, ProtocolError, VerificationError
from epr.geometry import DISK_TOLERANCE, TAU, Direction, Point
from epr.experiment import SCHEME, TrialRecord
from epr.response import ResponseRule, SEMIDISK_RULE, Sign, StationId, station_response
from epr.source import MASK64, SourceConfig, stream

ROLES = ("source", "station", "collector")


@dataclass(frozen=True)
class Hello:
    role: str
    run_id: str
    station_id: Optional[int] = None

    TYPE = "HELLO"


@dataclass(frozen=True)
class Config:
    run_id: str
    station_id: int
    setting_angle_rad: float
    n_trials: int

    TYPE = "CONFIG"


@dataclass(frozen=True)
class PointMsg:
    trial_id: int
    x: float
    y: float

    TYPE = "POINT"


@dataclass(frozen=True)
class Answer:
    trial_id: int
    station_id: int
    value: int

    TYPE = "ANSWER"


@dataclass(frozen=True)
class Done:
    run_id: str
    count: int

    TYPE = "DONE"


Message = Union[Hello, Config, PointMsg, Answer, Done]
MESSAGE_TYPES = {cls.TYPE: cls for cls in (Hello, Config, PointMsg, Answer, Done)}
OPTIONAL_FIELDS = {"HELLO": {"station_id"}}


def encode(message: Message) -> bytes:
    payload = {"type": message.TYPE}
    for key, value in asdict(message).items():
        if value is None and key in OPTIONAL_FIELDS.get(message.TYPE, ()):
            continue
        payload[key] = value
    return (json.dumps(payload, separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")


def _int_field(obj: dict, name: str, minimum: int = None) -> int:
    value = obj[name]
    if isinstance(value, bool) or not isinstance(value, int):
        raise DecodeError("expected an integer", name)
    if minimum is not None and value < minimum:
        raise DecodeError(f"value {value} below minimum {minimum}", name)
    return value


def _real_field(obj: dict, name: str) -> float:
    value = obj[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DecodeError("expected a number", name)
    try:
        value = float(value)
    except OverflowError as e:
        raise DecodeError("number too large", name) from e
    if not math.isfinite(value):
        raise DecodeError("expected a finite number", name)
    return value


def _str_field(obj: dict, name: str) -> str:
    value = obj[name]
    if not isinstance(value, str) or not value:
        raise DecodeError("expected a non-empty string", name)
    return value


def _station_field(obj: dict, name: str = "station_id") -> int:
    value = _int_field(obj, name)
    if value not in (1, 2):
        raise DecodeError(f"station id must be 1 or 2, got {value}", name)
    return value


def _validate(mtype: str, obj: dict) -> Message:
    if mtype == "HELLO":
        role = _str_field(obj, "role")
        if role not in ROLES:
            raise DecodeError(f"unknown role {role!r}", "role")
        station_id = _station_field(obj) if "station_id" in obj else None
        return Hello(role=role, run_id=_str_field(obj, "run_id"), station_id=station_id)
    if mtype == "CONFIG":
        angle = _real_field(obj, "setting_angle_rad")
        if not 0.0 <= angle < TAU:
            raise DecodeError(f"setting must lie in [0, 2pi), got {angle!r}", "setting_angle_rad")
        return Config(run_id=_str_field(obj, "run_id"), station_id=_station_field(obj),
                      setting_angle_rad=angle, n_trials=_int_field(obj, "n_trials", 1))
    if mtype == "POINT":
        return PointMsg(trial_id=_int_field(obj, "trial_id", 0),
                        x=_real_field(obj, "x"), y=_real_field(obj, "y"))
    if mtype == "ANSWER":
        value = _int_field(obj, "value")
        if value not in (-1, 1):
            raise DecodeError(f"answer must be -1 or 1, got {value}", "value")
        return Answer(trial_id=_int_field(obj, "trial_id", 0), station_id=_station_field(obj),
                      value=value)
    return Done(run_id=_str_field(obj, "run_id"), count=_int_field(obj, "count", 0))


def decode(line: Union[bytes, str]) -> Message:
    """
    Strictly decode one wire line.

    Raises:
        DecodeError: malformed JSON, unknown type, missing/extra field or a value
            out of range; the error names the offending field
    """
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as e:
            raise DecodeError(f"line is not UTF-8: {e}") from e
    line = line.rstrip("\n")
    if "\n" in line:
        raise DecodeError("embedded newline in message")
    try:
        obj = json.loads(line)
    except (ValueError, RecursionError) as e:
        raise DecodeError(f"malformed line: {e}") from e
    if not isinstance(obj, dict):
        raise DecodeError("a message must be a JSON object")
    mtype = obj.pop("type", None)
    if not isinstance(mtype, str) or mtype not in MESSAGE_TYPES:
        raise DecodeError(f"unknown message type {mtype!r}", "type")

    allowed = {f.name for f in fields(MESSAGE_TYPES[mtype])}
    optional = OPTIONAL_FIELDS.get(mtype, set())
    for name in sorted(set(obj) - allowed):
        raise DecodeError(f"unexpected field in {mtype}", name)
    for name in sorted(allowed - optional - set(obj)):
        raise DecodeError(f"missing field in {mtype}", name)
    return _validate(mtype, obj)


@dataclass(frozen=True)
class RunManifest:
    """Everything the orchestrator and collector know about one experiment run."""

    run_id: str
    seed: int
    n_trials: int
    setting1: float
    setting2: float
    experiment_tag: str

    def __post_init__(self):
        SourceConfig(seed=self.seed, n_trials=self.n_trials)
        if self.experiment_tag not in SCHEME:
            raise ValueError(f"experiment_tag must be one of {list(SCHEME)}, got {self.experiment_tag!r}")
        for name in ("setting1", "setting2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and 0.0 <= value < TAU):
                raise ValueError(f"{name} must lie in [0, 2pi), got {value!r}")

    @classmethod
    def for_experiment(cls, tag: str, a: Direction, b: Direction, c: Direction, seed: int,
                       n_trials: int, run_id: str) -> "RunManifest":
        """Manifest whose settings follow scheme column `tag`."""
        named = {"a": a, "b": b, "c": c}
        s1, s2 = SCHEME[tag]
        return cls(run_id=run_id, seed=seed & MASK64, n_trials=n_trials,
                   setting1=named[s1].angle_rad, setting2=named[s2].angle_rad, experiment_tag=tag)

    def setting_for(self, station: StationId) -> float:
        return self.setting1 if StationId(station) is StationId.STATION_1 else self.setting2

    def config_for(self, station: StationId) -> Config:
        return Config(run_id=self.run_id, station_id=int(station),
                      setting_angle_rad=self.setting_for(station), n_trials=self.n_trials)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        data = json.loads(text)
        expected = {f.name for f in fields(cls)}
        if set(data) != expected:
            raise ValueError(f"manifest fields {sorted(data)} differ from {sorted(expected)}")
        return cls(**data)


class StationSession:
    """
    One station's side of a run.

    Feed inbound messages with `handle`; it returns the messages to send to the
    collector. CONFIG must come first; POINTs are answered in arrival order.
    """

    def __init__(self, station_id: StationId, rule: ResponseRule = SEMIDISK_RULE):
        self.station_id = StationId(station_id)
        self.rule = rule
        self.config: Optional[Config] = None
        self.setting: Optional[Direction] = None
        self.seen: set = set()
        self.done: Optional[Done] = None

    def handle(self, message: Message) -> List[Message]:
        if self.done is not None:
            if isinstance(message, Done):
                return []
            raise ProtocolError(f"station {int(self.station_id)} received {message.TYPE} after DONE")

        if isinstance(message, Config):
            if self.config is not None:
                raise ProtocolError(f"station {int(self.station_id)} received a second CONFIG")
            if message.station_id != int(self.station_id):
                raise ProtocolError(
                    f"CONFIG addressed to station {message.station_id} reached station {int(self.station_id)}")
            self.config = message
            self.setting = Direction.from_angle(message.setting_angle_rad)
            return []

        if self.config is None:
            raise ProtocolError(f"station {int(self.station_id)} received {message.TYPE} before CONFIG")

        if isinstance(message, Hello):
            if message.role != "source" or message.run_id != self.config.run_id:
                raise ProtocolError(f"unexpected HELLO {message} at station {int(self.station_id)}")
            return []

        if isinstance(message, PointMsg):
            if message.trial_id in self.seen:
                raise ProtocolError(f"duplicate trial_id {message.trial_id} at station {int(self.station_id)}")
            if message.x * message.x + message.y * message.y > 1.0 + DISK_TOLERANCE:
                raise ProtocolError(f"POINT {message.trial_id} lies outside the unit disk")
            self.seen.add(message.trial_id)
            value = station_response(self.station_id, self.setting, Point(message.x, message.y), self.rule)
            return [Answer(trial_id=message.trial_id, station_id=int(self.station_id), value=int(value))]

        if isinstance(message, Done):
            if message.run_id != self.config.run_id:
                raise ProtocolError(f"DONE for run {message.run_id!r} during run {self.config.run_id!r}")
            if message.count != len(self.seen):
                raise ProtocolError(f"source sent {message.count} points, station saw {len(self.seen)}")
            self.done = Done(run_id=self.config.run_id, count=len(self.seen))
            return [self.done]

        raise ProtocolError(f"station {int(self.station_id)} cannot handle {message.TYPE}")


def station_loop(station_id: StationId, inbound: Iterable[Message],
                 emit: Callable[[Message], None], rule: ResponseRule = SEMIDISK_RULE) -> Done:
    """
    Run a station over an inbound message stream.

    Args:
        station_id: Which station this is
        inbound: CONFIG first, then the source's HELLO/POINT/DONE messages
        emit: Called with every ANSWER and the final DONE
        rule: Response rule

    Returns:
        The DONE message sent to the collector
    """
    session = StationSession(station_id, rule)
    for message in inbound:
        for out in session.handle(message):
            emit(out)
        if session.done is not None:
            return session.done
    raise ProtocolError(f"inbound stream of station {int(station_id)} ended before DONE")


class Collector:
    """Pairs the two stations' answers by trial id."""

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest
        self.registered: Dict[int, bool] = {}
        self.answers: Dict[int, Dict[int, int]] = {1: {}, 2: {}}
        self.finished: Dict[int, Done] = {}

    def register(self, hello: Hello) -> int:
        if hello.role != "station" or hello.station_id is None:
            raise ProtocolError(f"collector expects station HELLOs, got {hello}")
        if hello.run_id != self.manifest.run_id:
            raise ProtocolError(f"HELLO for run {hello.run_id!r}, collector runs {self.manifest.run_id!r}")
        if hello.station_id in self.registered:
            raise ProtocolError(f"handshake rejected: station {hello.station_id} is already connected")
        self.registered[hello.station_id] = True
        return hello.station_id

    def accept(self, peer: int, message: Message):
        if peer in self.finished:
            if isinstance(message, Done):
                return
            raise ProtocolError(f"station {peer} sent {message.TYPE} after DONE")
        if isinstance(message, Answer):
            if message.station_id != peer:
                raise ProtocolError(f"station {peer} sent an answer labelled station {message.station_id}")
            if message.trial_id in self.answers[peer]:
                raise ProtocolError(f"duplicate answer for trial {message.trial_id} from station {peer}")
            self.answers[peer][message.trial_id] = message.value
        elif isinstance(message, Done):
            if message.run_id != self.manifest.run_id:
                raise ProtocolError(f"DONE for run {message.run_id!r} at collector of {self.manifest.run_id!r}")
            self.finished[peer] = message
        else:
            raise ProtocolError(f"collector cannot handle {message.TYPE} from station {peer}")

    @property
    def complete(self) -> bool:
        return set(self.finished) == {1, 2}

    def records(self) -> List[TrialRecord]:
        """Paired records sorted by trial id; points are regenerated from the manifest seed."""
        if not self.complete:
            raise ProtocolError(f"collector finished with DONE from stations {sorted(self.finished)} only")
        n = self.manifest.n_trials
        for station in (1, 2):
            extra = sorted(set(self.answers[station]) - set(range(n)))
            if extra:
                raise ProtocolError(f"station {station} answered unknown trial {extra[0]}")
            missing = sorted(set(range(n)) - set(self.answers[station]))
            if missing:
                raise ProtocolError(f"missing answer for trial {missing[0]} from station {station}")

        s1 = Direction.from_angle(self.manifest.setting1)
        s2 = Direction.from_angle(self.manifest.setting2)
        points = stream(SourceConfig(seed=self.manifest.seed, n_trials=n))
        return [
            TrialRecord(tp.trial_id, tp.point, s1, s2,
                        Sign.of(self.answers[1][tp.trial_id]), Sign.of(self.answers[2][tp.trial_id]))
            for tp in points
        ]


def collector_loop(inbound: Iterable[Tuple[int, Message]], manifest: RunManifest) -> List[TrialRecord]:
    """
    Pair answers arriving from both stations, in any interleaving.

    Args:
        inbound: (peer station id, message) in arrival order; HELLOs register peers
        manifest: The run being collected

    Returns:
        Records sorted by trial id
    """
    collector = Collector(manifest)
    for peer, message in inbound:
        if isinstance(message, Hello):
            collector.register(message)
            continue
        collector.accept(peer, message)
    return collector.records()


class Transcript:
    """
    Capture of one role's traffic for one run: `<IN|OUT> <peer> <utc time> <line>`.

    Opening a path truncates it, so a rerun under the same run id starts clean.
    """

    def __init__(self, path: Optional[Path]):
        self.path = Path(path) if path else None
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")

    def log(self, direction: str, peer: str, line: Union[bytes, str]):
        if self._fh is None:
            return
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        stamp = datetime.now(timezone.utc).isoformat(timespec="microseconds")
        self._fh.write(f"{direction} {peer} {stamp} {line.rstrip()}\n")

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def transcript_path(transcript_dir: Path, run_id: str, role: str) -> Path:
    return Path(transcript_dir) / f"{run_id}.{role}.log"


def parse_transcript_line(line: str) -> Tuple[str, str, str, Message]:
    direction, peer, stamp, payload = line.rstrip("\n").split(" ", 3)
    return direction, peer, stamp, decode(payload)


@dataclass
class AuditResult:
    passed: bool
    settings_seen: Dict[str, List[float]]
    problems: List[str]


def audit_transcripts(transcript_dir: Path, run_id: str) -> AuditResult:
    """
    Check that each station's inbound traffic mentions at most one setting.

    Every inbound line is re-decoded strictly, so a message carrying any field
    outside the schema fails the audit too.
    """
    settings: Dict[str, List[float]] = {}
    problems: List[str] = []
    for station in (1, 2):
        role = f"station{station}"
        path = transcript_path(transcript_dir, run_id, role)
        if not path.exists():
            problems.append(f"no transcript for {role} at {path}")
            continue
        seen: List[float] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.startswith("IN "):
                    continue
                try:
                    _, peer, _, message = parse_transcript_line(line)
                except (ValueError, DecodeError) as e:
                    problems.append(f"{role} line {lineno}: {e}")
                    continue
                if isinstance(message, Config):
                    if message.station_id != station:
                        problems.append(f"{role} line {lineno}: CONFIG for station {message.station_id}")
                    if message.setting_angle_rad not in seen:
                        seen.append(message.setting_angle_rad)
        if len(seen) > 1:
            problems.append(f"{role} was told {len(seen)} settings: {seen}")
        settings[role] = seen
    return AuditResult(passed=not problems, settings_seen=settings, problems=problems)


def require_audit(transcript_dir: Path, run_id: str) -> AuditResult:
    result = audit_transcripts(transcript_dir, run_id)
    if not result.passed:
        raise VerificationError("locality audit failed: " + "; ".join(result.problems))
    return result


def read_messages(lines: Iterable[bytes]) -> Iterator[Message]:
    for line in lines:
        if line.strip():
            yield decode(line)
