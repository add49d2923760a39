# %% [markdown]
# # The command-line pipeline
#
# Everything above is also available as `fatigue-merf <command>`. This
# script drives the commands through subprocesses, the way a shell user
# would.

# %%
import subprocess
import sys
import tempfile
from pathlib import Path

work = Path(tempfile.mkdtemp(prefix="demo-cli-"))


def fm(*args):
    cmd = [sys.executable, "-m", "fatigue_merf", *map(str, args)]
    print("$ fatigue-merf", " ".join(map(str, args)))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    print(proc.stdout + proc.stderr)
    return proc.returncode


(work / "fast.toml").write_text("[forest]\nn_trees = 30\n\n[cv]\nk = 5\n")

# %%
fm("synth", "clustered", "--clusters", 10, "--per-cluster", 30, "--sigma-b", 2, "--sigma-e", 1,
   "--seed", 1, "--out-dir", work / "bench")
fm("evaluate", "--config", work / "fast.toml", "--features", work / "bench" / "synth_features.csv",
   "--models", "RF", "MERF_GROUP", "--out-dir", work / "bench-report")
print((work / "bench-report" / "table1.csv").read_text())

# %% [markdown]
# Train once, save the model as JSON, and score a table with it.

# %%
fm("fit", "--config", work / "fast.toml", "--features", work / "bench" / "synth_features.csv",
   "--model", "MERF_GROUP", "--out-dir", work / "model")
fm("predict", "--features", work / "bench" / "synth_features.csv",
   "--model", work / "model" / "model.json", "--out-dir", work / "scored")
print((work / "scored" / "predictions.csv").read_text().splitlines()[:4])

# %% [markdown]
# Usage errors exit with status 2, runtime errors with status 1, and
# nothing half-written is left behind.

# %%
print("exit", fm("synth", "clustered", "--clusters", 3))
print("exit", fm("evaluate", "--features", work / "missing.csv", "--models", "LINEAR", "--out-dir", work / "x"))
