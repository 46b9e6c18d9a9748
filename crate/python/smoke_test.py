"""Smoke test for the irobust extension.

Builds the extension with cargo, copies it next to this script and
exercises the main types. Run from the repository root:

    python3 python/smoke_test.py
"""

import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent
HERE = pathlib.Path(__file__).resolve().parent


def build():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "ir-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "libirobust.so"
    shutil.copy(built, HERE / "irobust.so")


def main():
    build()
    sys.path.insert(0, str(HERE))
    import irobust as ir

    assert ir.js_divergence_bits([[1.0, 0.0], [0.0, 1.0]]) == 1.0

    cfg = ir.GridConfig("default")
    state = ir.GridState.initial(cfg)
    catalog = ir.intervention_catalog(cfg)
    assert catalog[0].kind == "null"
    print(f"{len(catalog)} interventions, start {state.agent}")

    spec = ir.PipelineSpec("expected_sarsa", cfg, checkpoints=[1000])
    spotter = ir.train(spec, 0)[-1]
    agents = [ir.train(spec, seed)[-1] for seed in range(1, 6)]
    states, _ = ir.sample_states(ir.collect_trajectory(cfg, spotter), 10, seed=1)
    m = ir.ir_matrix(agents, spotter, states, catalog)
    summary = m.summary()
    print("summary", {k: round(v, 3) for k, v in summary.items()})
    assert 0.0 <= summary["original"] <= 1.0

    with tempfile.TemporaryDirectory() as out:
        config = ir.default_config_toml().replace("agents = 10", "agents = 3").replace("states = 30", "states = 5")
        manifest, digest, rows = ir.run_experiment(config, out)
        print(f"manifest {manifest} sha256 {digest[:12]} rows {len(rows)}")
        assert pathlib.Path(manifest).is_file()

    print("ok")


if __name__ == "__main__":
    main()
