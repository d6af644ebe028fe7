"""
Role processes over TCP and the orchestrator that drives them.

Port layout for a run: collector on port_base, station 1 on port_base + 1,
station 2 on port_base + 2. Experiments I, II, III run one after the other on the
same ports.

    orchestrator --CONFIG--> station k (ack: HELLO station)
    station k    --HELLO-->  collector
    source       --HELLO, POINT..., DONE--> station 1 and station 2
    station k    --ANSWER..., DONE--> collector
"""

import asyncio
import os
import socket
import subprocess
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from epr.errors import DecodeError, ProtocolError
from epr.reporting import write_trial_csv
from epr.response import StationId
from epr.source import SourceConfig, stream_arrays
from epr.wire import (Collector, Done, Hello, PointMsg, RunManifest, StationSession, Transcript,
                      decode, encode, transcript_path)

PROJECT_ROOT = Path(__file__).resolve().parent.parent
CONNECT_RETRY_S = 0.05


def station_port(port_base: int, station: int) -> int:
    return port_base + int(StationId(station))


def connect(host: str, port: int, role: str, peer: str, timeout_s: float) -> socket.socket:
    """Connect with retries until `timeout_s`; failures name both ends."""
    deadline = time.monotonic() + timeout_s
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout_s)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return sock
        except OSError as e:
            if time.monotonic() >= deadline:
                raise ProtocolError(f"{role} could not connect to {peer} at {host}:{port}: {e}") from e
            time.sleep(CONNECT_RETRY_S)


def listen(host: str, port: int, role: str) -> socket.socket:
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        server.bind((host, port))
    except OSError as e:
        server.close()
        raise ProtocolError(f"{role} cannot listen on {host}:{port}: {e}") from e
    server.listen(2)
    return server


def _read_message(reader, role: str, peer: str, transcript: Optional[Transcript] = None):
    line = reader.readline()
    if not line:
        raise ProtocolError(f"{role}: connection from {peer} closed unexpectedly")
    if transcript is not None:
        transcript.log("IN", peer, line)
    try:
        return decode(line)
    except DecodeError as e:
        raise ProtocolError(f"{role}: bad message from {peer}: {e}") from e


# ---------------------------------------------------------------- source


def run_source(manifest: RunManifest, host: str, port_base: int, timeout_s: float = 30.0,
               transcript_dir: Optional[Path] = None) -> int:
    """Stream the manifest's points to both stations; returns the number sent."""
    transcript = Transcript(transcript_path(transcript_dir, manifest.run_id, "source")
                            if transcript_dir else None)
    xs, ys = stream_arrays(SourceConfig(seed=manifest.seed, n_trials=manifest.n_trials))
    socks, writers = {}, {}
    try:
        for station in (1, 2):
            peer = f"station{station}"
            socks[peer] = connect(host, station_port(port_base, station), "source", peer, timeout_s)
            writers[peer] = socks[peer].makefile("wb")

        def send(message):
            line = encode(message)
            for peer, writer in writers.items():
                transcript.log("OUT", peer, line)
                writer.write(line)

        send(Hello(role="source", run_id=manifest.run_id))
        for trial_id, (x, y) in enumerate(zip(xs.tolist(), ys.tolist())):
            send(PointMsg(trial_id=trial_id, x=x, y=y))
        send(Done(run_id=manifest.run_id, count=manifest.n_trials))
        for writer in writers.values():
            writer.flush()
    except OSError as e:
        raise ProtocolError(f"source lost a station connection: {e}") from e
    finally:
        for writer in writers.values():
            writer.close()
        for sock in socks.values():
            sock.close()
        transcript.close()
    return manifest.n_trials


# ---------------------------------------------------------------- station


def run_station(station: int, host: str, port_base: int, timeout_s: float = 30.0,
                transcript_dir: Optional[Path] = None) -> Done:
    """
    One station process: take CONFIG, register with the collector, answer the source.

    The station never learns the other setting; it only sees its CONFIG and the
    source's points.
    """
    station_id = StationId(station)
    role = f"station{int(station_id)}"
    session = StationSession(station_id)
    server = listen(host, station_port(port_base, station_id), role)
    server.settimeout(timeout_s)
    transcript = Transcript(None)
    collector_sock = None
    try:
        conn, _ = server.accept()
        with conn, conn.makefile("rb") as reader:
            line = reader.readline()
            try:
                config = decode(line) if line else None
            except DecodeError as e:
                raise ProtocolError(f"{role}: bad first message from orchestrator: {e}") from e
            if config is None:
                raise ProtocolError(f"{role}: orchestrator closed before CONFIG")
            session.handle(config)
            if transcript_dir:
                transcript = Transcript(transcript_path(transcript_dir, session.config.run_id, role))
            transcript.log("IN", "orchestrator", line)
            ack = encode(Hello(role="station", run_id=session.config.run_id, station_id=int(station_id)))
            conn.sendall(ack)
            transcript.log("OUT", "orchestrator", ack)

        collector_sock = connect(host, port_base, role, "collector", timeout_s)
        with collector_sock.makefile("wb") as to_collector:
            def emit(message):
                out = encode(message)
                transcript.log("OUT", "collector", out)
                to_collector.write(out)

            emit(Hello(role="station", run_id=session.config.run_id, station_id=int(station_id)))
            to_collector.flush()

            conn, _ = server.accept()
            conn.settimeout(timeout_s)
            with conn, conn.makefile("rb") as reader:
                while session.done is None:
                    message = _read_message(reader, role, "source", transcript)
                    for out in session.handle(message):
                        emit(out)
            to_collector.flush()
        return session.done
    except socket.timeout as e:
        raise ProtocolError(f"{role} timed out waiting for a peer") from e
    finally:
        if collector_sock is not None:
            collector_sock.close()
        server.close()
        transcript.close()


# ---------------------------------------------------------------- collector


async def _collect(manifest: RunManifest, host: str, port: int, timeout_s: float,
                   transcript: Transcript) -> Collector:
    collector = Collector(manifest)
    finished = asyncio.Event()
    failures: List[BaseException] = []

    async def handle(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        peer_name = "unregistered"
        try:
            line = await reader.readline()
            if not line:
                raise ProtocolError("collector: station closed before HELLO")
            transcript.log("IN", peer_name, line)
            hello = decode(line)
            if not isinstance(hello, Hello):
                raise ProtocolError(f"collector: expected HELLO, got {hello.TYPE}")
            peer = collector.register(hello)
            peer_name = f"station{peer}"
            while peer not in collector.finished:
                line = await reader.readline()
                if not line:
                    raise ProtocolError(f"collector: {peer_name} closed before DONE")
                transcript.log("IN", peer_name, line)
                collector.accept(peer, decode(line))
        except (ProtocolError, OSError) as e:
            failures.append(e)
        finally:
            writer.close()
            if failures or collector.complete:
                finished.set()

    server = await asyncio.start_server(handle, host, port, reuse_address=True)
    async with server:
        try:
            await asyncio.wait_for(finished.wait(), timeout=timeout_s)
        except asyncio.TimeoutError as e:
            raise ProtocolError(
                f"collector timed out with DONE from stations {sorted(collector.finished)}") from e
    if failures:
        raise failures[0]
    return collector


def run_collector(manifest: RunManifest, host: str, port_base: int, csv_path: Path,
                  timeout_s: float = 30.0, transcript_dir: Optional[Path] = None) -> Path:
    """Collect both stations' answers and write the experiment's trial CSV."""
    transcript = Transcript(transcript_path(transcript_dir, manifest.run_id, "collector")
                            if transcript_dir else None)
    try:
        collector = asyncio.run(_collect(manifest, host, port_base, timeout_s, transcript))
    finally:
        transcript.close()
    return write_trial_csv(collector.records(), csv_path)


# ---------------------------------------------------------------- orchestrator


def _role_command(args: List[str]) -> List[str]:
    return [sys.executable, "-m", "cli.app", "run-role", *args]


def _spawn(args: List[str]) -> subprocess.Popen:
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(filter(None, [str(PROJECT_ROOT), env.get("PYTHONPATH")]))
    return subprocess.Popen(_role_command(args), cwd=PROJECT_ROOT, env=env,
                            stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)


def _send_config(manifest: RunManifest, station: int, host: str, port_base: int, timeout_s: float):
    peer = f"station{station}"
    sock = connect(host, station_port(port_base, station), "orchestrator", peer, timeout_s)
    with sock, sock.makefile("rb") as reader:
        sock.sendall(encode(manifest.config_for(StationId(station))))
        ack = _read_message(reader, "orchestrator", peer)
        if not (isinstance(ack, Hello) and ack.station_id == station):
            raise ProtocolError(f"orchestrator: {peer} acknowledged CONFIG with {ack}")


def _join(processes: Dict[str, subprocess.Popen], timeout_s: float):
    deadline = time.monotonic() + timeout_s
    failed: List[Tuple[str, int, str]] = []
    for role, proc in processes.items():
        try:
            _, err = proc.communicate(timeout=max(0.1, deadline - time.monotonic()))
        except subprocess.TimeoutExpired:
            proc.kill()
            _, err = proc.communicate()
            failed.append((role, -1, "timed out"))
            continue
        if proc.returncode != 0:
            failed.append((role, proc.returncode, err.decode("utf-8", "replace").strip()[-500:]))
    if failed:
        detail = "; ".join(f"{role} exited {code}: {err}" for role, code, err in failed)
        raise ProtocolError(f"role process failure: {detail}")


def run_experiment_net(manifest: RunManifest, work_dir: Path, csv_path: Path, host: str,
                       port_base: int, timeout_s: float = 30.0,
                       transcript_dir: Optional[Path] = None, verbose: bool = False) -> Path:
    """
    Run one experiment across a collector, two stations and a source process.

    Returns:
        Path of the trial CSV written by the collector
    """
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = work_dir / f"{manifest.run_id}.manifest.json"
    manifest_path.write_text(manifest.to_json(), encoding="utf-8")

    common = ["--host", host, "--port-base", str(port_base), "--timeout", str(timeout_s)]
    if transcript_dir:
        common += ["--transcript", str(transcript_dir)]

    processes: Dict[str, subprocess.Popen] = {}
    try:
        processes["collector"] = _spawn(["--role", "collector", "--manifest", str(manifest_path),
                                         "--csv", str(csv_path), *common])
        for station in (1, 2):
            processes[f"station{station}"] = _spawn(["--role", "station",
                                                     "--station-id", str(station), *common])
        for station in (1, 2):
            _send_config(manifest, station, host, port_base, timeout_s)
        if verbose:
            print(f"   🔌 stations configured for run {manifest.run_id}", file=sys.stderr)
        processes["source"] = _spawn(["--role", "source", "--manifest", str(manifest_path), *common])
        _join(processes, timeout_s)
    except BaseException:
        for proc in processes.values():
            if proc.poll() is None:
                proc.kill()
                proc.wait()
        raise
    return Path(csv_path)
