"""
The command line in-process
===========================

Each subcommand writes a CSV table, the canonical config, a JSON verdict
and a timing sidecar.  Here they run into a temporary directory.
"""

# %%
import json
import tempfile
from pathlib import Path

from stabdev import cli

out = Path(tempfile.mkdtemp())
cfg = out / "nn.ini"
cfg.write_text("[functional]\nfamily = knn_edge\nk = 1\ns = 0.5642\n[experiment]\nlam = 200\nn = 200\n")

cli.main(["simulate", "--config", str(cfg), "--seed", "7", "--out", str(out / "sim")])
print(sorted(p.name for p in (out / "sim").iterdir()))
print(json.loads((out / "sim" / "simulate.json").read_text())["summary"])

# %%
code = cli.main(["rss-check", "--out", str(out / "rss")])
print("rss-check exit code", code)
cli.main(["bounds-eval", "--what", "delta-gamma", "--gamma", "0", "--Delta", "100", "--out", str(out / "b")])
print(json.loads((out / "b" / "bounds-eval.json").read_text())["summary"])
