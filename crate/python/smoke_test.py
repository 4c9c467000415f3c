"""Smoke test for the kinetic_qsd_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/kinetic_qsd_py-*.whl
"""

import json
import math

import kinetic_qsd_py as kq


def main():
    config = kq.Config.reference("R1").with_grid(64, 64)
    print(config)

    pair = kq.spectral(config)
    assert pair.lambda0 > 0
    assert abs(pair.lambda0 - pair.lambda0_adjoint) < 1e-8 * pair.lambda0
    assert min(pair.psi) >= 0 and len(pair.psi) == len(pair.q)
    print(f"lambda0 on 64x64: {pair.lambda0:.5f}")

    curve = kq.survival(config, [0.5], [0.0], samples=4000, points=50)
    assert curve[0][1] == 1.0
    assert all(b[1] <= a[1] for a, b in zip(curve, curve[1:]))

    small = kq.Config.from_toml(config.to_toml().replace("particles = 10000", "particles = 2000"))
    fv = kq.fleming_viot(small)
    assert abs(fv.branching_rate - pair.lambda0) < 0.15
    print(f"branching rate: {fv.branching_rate:.4f} +- {fv.half_width:.4f}")

    law = kq.exit_law(small, samples=3000)
    mean = sum(law.exit_times) / len(law.exit_times)
    assert math.isfinite(mean) and set(law.sides) <= {0, 1}
    print(f"mean exit time: {mean:.4f}")

    reports = kq.verify(config, "longtime")
    for r in reports:
        body = json.loads(r.json)
        assert body["name"] == r.name
        print(f"{r.name}: {r.status}")
        assert r.status != "fail", r.failures

    try:
        kq.Config.from_toml("[domain]\ntype='interval'\na=0\nb=1\n[model]\ngamma=1\nsigma=0\n")
    except ValueError as e:
        print(f"rejected as expected: {e}")
    else:
        raise AssertionError("sigma = 0 accepted")
    print("ok")


if __name__ == "__main__":
    main()
