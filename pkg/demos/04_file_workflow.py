"""
Working from files
==================

The command-line tool reads plain text: an observation file with a
``tensor3 n1 n2 n3 nnz`` header and 1-based ``i j k value`` lines, and feature
matrices with a ``matrix rows cols`` header. This script writes a small
instance, completes it through the same entry point the ``tucker-si`` command
uses, and reads the trace back.
"""

import tempfile
from pathlib import Path

from tucker_si import io
from tucker_si.cli import main
from tucker_si.synth import ScenarioSpec, build_problem

work = Path(tempfile.mkdtemp(prefix="tucker_si_demo_"))
data, _ = build_problem(ScenarioSpec(dims=(30, 30, 30), rank=(3, 3, 3), os=1.0, alpha=5.0, seed=2))

io.write_observations(work / "train.tensor3", data.train)
io.write_observations(work / "test.tensor3", data.test)
for k, P in enumerate(data.features.bases, start=1):
    io.write_matrix(work / f"features{k}.txt", P)
print((work / "train.tensor3").read_text().splitlines()[:3])

argv = ["complete", "--train", str(work / "train.tensor3"), "--test", str(work / "test.tensor3"),
        "--rank", "3,3,3", "--alpha", "5,5,5", "--out-dir", str(work / "out")]
for k in (1, 2, 3):
    argv += [f"--features{k}", str(work / f"features{k}.txt")]
code = main(argv)
print("exit code", code)

trace = io.read_trace(work / "out" / "trace.csv")
print(f"{len(trace)} trace rows; final test RMSE {trace[-1].test_rmse:.2e}")
print("outputs:", sorted(p.name for p in (work / "out").iterdir()))
