import http.server
import json
import threading
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


class _JudgeStub(http.server.BaseHTTPRequestHandler):
    """Chat-completion stub: /good honors the score contract, anything else
    replies with malformed content."""

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        content = (
            "Score: 7\nExplanation: follows the instruction"
            if self.path == "/good"
            else "score=7 looks fine"
        )
        body = json.dumps({"choices": [{"message": {"content": content}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def judge_stub():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _JudgeStub)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


@pytest.fixture(scope="session")
def level_texts() -> dict[str, str]:
    return {
        name: (FIXTURES / f"{name}.txt").read_text().rstrip("\n")
        for name in ("level1", "level2", "level4", "level5")
    }


LEVEL4_BOX = (250, 181, 400, 392)
LEVEL4_POINTS = [
    (346, 248), (302, 365), (377, 251), (330, 295),
    (357, 291), (354, 362), (329, 355), (312, 352),
]
LEVEL5_TRACE = [
    (802, 613), (780, 582), (774, 501), (744, 465),
    (685, 394), (657, 349), (668, 354), (657, 401),
]


def square_mask(height: int, width: int, top: int, left: int, size: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    mask[top : top + size, left : left + size] = True
    return mask


def diagonal_track(start, end, steps=12) -> np.ndarray:
    return np.linspace(start, end, steps).astype(float)


def write_demo_record(
    directory: Path,
    *,
    instruction: str,
    width: int = 320,
    height: int = 240,
    final_mask: np.ndarray | None = None,
    tracks: list[np.ndarray] | None = None,
) -> None:
    """Materialize one synthetic demo episode in the documented layout."""
    from visaid.datastore import save_mask

    directory.mkdir(parents=True)
    (directory / "record.json").write_text(
        json.dumps({"instruction": instruction, "width": width, "height": height})
    )
    initial = square_mask(height, width, 10, 10, 24)
    if final_mask is None:
        final_mask = square_mask(height, width, 150, 200, 30)
    save_mask(initial, directory / "initial_mask.png")
    save_mask(final_mask, directory / "final_mask.png")
    if tracks is None:
        tracks = [diagonal_track((20.0, 20.0), (215.0, 165.0))]
    rows = ["frame,track_id,u,v"]
    for track_id, track in enumerate(tracks):
        for frame, (u, v) in enumerate(track):
            rows.append(f"{frame},{track_id},{u},{v}")
    (directory / "tracks.csv").write_text("\n".join(rows) + "\n")


def build_synthetic_corpus(root: Path, n_good: int = 8) -> None:
    """n_good passing episodes plus two planted rejections.

    Episode 'reject_large' has a full-image final mask (mask-too-large);
    episode 'reject_short' has only a stationary track (trace-too-short).
    """
    width, height = 320, 240
    rng = np.random.default_rng(7)
    for i in range(n_good):
        offset = int(rng.integers(0, 60))
        write_demo_record(
            root / f"episode_{i:03d}",
            instruction=f"move the block to slot {i}",
            width=width,
            height=height,
            final_mask=square_mask(height, width, 140 + offset % 40, 180 + offset, 30),
            tracks=[
                diagonal_track((25.0 + i, 30.0), (200.0 + offset, 150.0 + offset % 50)),
                diagonal_track((25.0, 30.0), (60.0, 50.0)),
            ],
        )
    write_demo_record(
        root / "reject_large",
        instruction="cover the table",
        width=width,
        height=height,
        final_mask=np.ones((height, width), dtype=bool),
    )
    write_demo_record(
        root / "reject_short",
        instruction="hold still",
        width=width,
        height=height,
        tracks=[np.array([[50.0, 50.0], [50.0, 50.0], [50.0, 50.0]])],
    )
