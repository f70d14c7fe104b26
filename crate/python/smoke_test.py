"""Smoke test for the pycodelog extension module.

Build and install first:
    pip install maturin
    maturin develop -m crates/python/Cargo.toml   # inside a virtualenv
or  maturin build -m crates/python/Cargo.toml && pip install target/wheels/pycodelog-*.whl
"""

import os
import tempfile

import pycodelog


def main():
    ws = pycodelog.Workspace(name="smoke", author="dev")
    ws.add_package("P")
    add_a = ws.add_class("P", "A", instance_variables=["x"])
    ws.add_method("P/A>>m", "m ^ x")
    ws.add_class("P", "B")
    ws.add_method("P/B>>k", "k ^ A new m")

    ws.rename_method("P/A>>m", "p")
    assert ws.source("P/B>>k") == "k ^ A new p", ws.source("P/B>>k")
    assert ws.source("P/A>>m") is None

    try:
        ws.add_class("P", "A")
    except pycodelog.ConflictError as err:
        assert "AlreadyExists" in str(err), err
    else:
        raise AssertionError("duplicate class accepted")

    # undoing the class addition first removes its remaining method
    ws.undo(add_a)
    assert "P/A" not in ws.units() and "P/A>>p" not in ws.units()
    assert ws.source("P/B>>k") == "k ^ A new p"

    ws.add_class("P", "Tmp")
    ws.remove("P/Tmp")
    assert ws.condense("P") is not None
    history = [kind for _, kind, _ in ws.entries()]
    assert "Condense" in history
    described = {id_: text for id_, _, text in ws.entries()}
    assert "add Tmp" not in [described[i] for i in ws.effective_history("P")]
    assert ws.is_consistent()

    with tempfile.TemporaryDirectory() as tmpdir:
        _, version = ws.save_version("P", "1", tmpdir)
        fresh = pycodelog.Workspace(name="fresh")
        fresh.load_version(version)
        assert sorted(fresh.units()) == sorted(ws.units())

        log = os.path.join(tmpdir, "main.omlog")
        code, _, err = pycodelog.run(["--log", log, "add-package", "Q"])
        assert code == 0, err
        code, out, _ = pycodelog.run(["--log", log, "view", "Q"])
        assert code == 0 and "add package Q" in out, out
        code, _, err = pycodelog.run(["--log", log, "add-package", "Q"])
        assert code == 1 and "AlreadyExists" in err, (code, err)
        code, _, _ = pycodelog.run(["--log", log, "no-such-verb"])
        assert code == 2

    print(ws)
    print(ws.view("P"), end="")
    print("smoke test ok")


if __name__ == "__main__":
    main()
