"""Quick end-to-end check of the Python bindings on the scalar example."""

import math

import preview_regret as pr


def main():
    sys = pr.System.scalar(2.0, 10.0, 1.0, 0.5)
    assert (sys.n, sys.m, sys.l) == (1, 1, 1)

    c0, converged, _ = pr.max_rcis(sys)
    assert converged
    lo, hi = c0.bounding_box()
    assert abs(lo[0] + 0.5) < 1e-9 and abs(hi[0] - 0.5) < 1e-9

    cco = pr.cmax_co(sys)
    assert abs(cco.bounding_box()[1][0] - 1.5) < 1e-9

    c1, _, _ = pr.max_rcis(sys, preview=1)
    proj = c1.project(1)
    cert = pr.certificate(sys, cco, c1, 1, alg="2", n_steps=1, projection=proj)
    assert abs(cert.gamma - 0.5) < 1e-9 and abs(cert.lambda0 - 2.0 / 3.0) < 1e-9
    for p in range(1, 6):
        d = pr.true_dp(sys, p, cco)
        assert abs(d - 0.5**p) < 1e-9, (p, d)
        assert abs(cert.bound_dp(p) - d) < 1e-9

    report = pr.convergence(sys, cco, proj, 1, k_max=20)
    assert report.p_bar is None and len(report.distances) == 21

    projection, full = pr.feasible_domain(sys, c0, 1)
    assert projection.set_equal(pr.Polytope.interval(-1.0, 1.0))
    assert full is not None and full.dim == 2

    step = pr.mpc_step(sys, c0, [0.0], [[0.0]])
    assert step.feasible and abs(step.u0[0]) < 1e-9

    ds = pr.sample_disturbances(sys, 21, 7)
    tr = pr.simulate(sys, c0, 2, [0.0], ds, 20)
    assert all(tr.feasible) and len(tr.x) == 20

    rnd = pr.System.from_json('{"schema": 1, "random_2d": {"seed": 3}}')
    assert rnd.n == 2 and math.isclose(rnd.A[0][0], 1.5)
    try:
        pr.System.from_json('{"scalar": {}}')
    except ValueError:
        pass
    else:
        raise AssertionError("missing schema accepted")

    print("smoke test passed:", cert)


if __name__ == "__main__":
    main()
