"""Smoke test of the Python bindings: fit a singular system and check the
uniform limit against the pseudo-inverse solution."""

import math

import lspia_py


def max_diff(a, b):
    return max(abs(x - y) for ra, rb in zip(a, b) for x, y in zip(ra, rb))


def main():
    space = lspia_py.BasisSpace([3], [10])
    assert len(space) == 10 and space.dim == 1, space
    assert abs(sum(space.basis(i, [0.37]) for i in range(10)) - 1.0) <= 1e-12

    # 8 distinct parameters for 10 controls: AᵀA is singular
    points, params = lspia_py.synthesize("clustered-params", samples=40, clusters=8, noise=0.01, seed=1)
    assert len(points) == 40 and len(params[0]) == 1

    report = lspia_py.spectral_report(space, params)
    assert report["n0"] == 2 and report["rank"] == 8, report
    assert all(report["flags"].values()), report["flags"]
    assert max(report["penrose_residuals"]) <= 1e-8

    uniform = lspia_py.fit(space, points, params, variant="uniform")
    assert uniform.termination == "converged", uniform
    assert len(uniform.residuals) == uniform.iterations_used + 1
    star = lspia_py.pinv_solution(space, points, params)
    gap = max_diff(uniform.controls, star)
    assert gap <= 1e-6, gap

    weighted = lspia_py.fit(space, points, params)
    assert weighted.termination == "converged", weighted
    t = params[5]
    a = space.evaluate(weighted.controls, t)
    b = space.evaluate(star, t)
    # different limits, same least-squares fitted values
    assert max(abs(x - y) for x, y in zip(a, b)) <= 1e-6
    assert all(math.isfinite(r) for r in weighted.residuals)

    holed_pts, holed_params = lspia_py.synthesize(
        "hole-punched", samples=50, param_dim=1, hole_lo=[-0.01], hole_hi=[0.3], seed=3
    )
    holed = lspia_py.BasisSpace([3], [8])
    assert lspia_py.fit(holed, holed_pts, holed_params).frozen == [0]
    try:
        lspia_py.fit(holed, holed_pts, holed_params, empty_group="strict")
    except lspia_py.AssemblyError as e:
        assert "[0]" in str(e), e
    else:
        raise AssertionError("strict assembly should fail")

    print(f"ok: uniform gap {gap:.2e} after {uniform.iterations_used} iterations")


if __name__ == "__main__":
    main()
