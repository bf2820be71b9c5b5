"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or ``-s`` to see the
lines inline); they are also repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, fd_gradient, search
from convexbilliards import cli
from convexbilliards.configuration import gradient, iterate, random_configuration, reflow_deviation
from convexbilliards.geometry import body_from_spec, circle, quartic, sphere
from convexbilliards.spectral import (
    assemble_hessian,
    bott_split,
    direct_triple,
    index_triple,
    iteration_report,
    kernel_dim,
    monodromy,
    sample_twists,
    semicontinuity_scan,
    twisted_hessian,
)
from convexbilliards.topology import (
    PATH_PRESETS,
    bangert_lift,
    betti_polynomial,
    betti_rational_form,
    equivariant_polynomial,
    equivariant_rank_sum,
    equivariant_rational_form,
    factored_matches_rational,
    preset_path,
    sample_path,
)


def verdict(k: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def set_distance(a, b) -> float:
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return math.inf
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


@pytest.fixture(scope="module")
def orbits(tested_orbits):
    """Ellipse / ellipsoid orbits plus non-degenerate triangles of a quartic body."""
    return list(tested_orbits) + search(quartic([2, 1], 0.5), 3)[:2]


@pytest.fixture(scope="module")
def catalogue(orbits):
    """Every orbit the suite finds, round bodies included."""
    out = list(orbits)
    for n in range(2, 6):
        out += search(circle(), n)
    out += search(sphere(), 2)[:1] + search(sphere(), 3)[:2]
    out += search(body_from_spec("ellipse 2 1"), 4)[:2]
    return out


@pytest.fixture(scope="module")
def reports(orbits):
    return [iteration_report(o, range(1, 65)) for o in orbits]


def test_criterion_01_gradient_oracle():
    t0 = time.perf_counter()
    worst = {}
    for name, body in [("circle", circle()), ("sphere", sphere()), ("ellipsoid", body_from_spec("ellipsoid 1 1.3 1.7"))]:
        rng = np.random.default_rng(2024)
        err = 0.0
        for _ in range(100):
            cfg = random_configuration(body, 4, rng)
            g, fd = gradient(cfg).flat(), fd_gradient(cfg)
            err = max(err, np.linalg.norm(g - fd) / np.linalg.norm(fd))
        worst[name] = err
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-6 and dt <= 60
    verdict(1, ok, "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {dt:.1f} s")


def test_criterion_02_hessian_oracle(catalogue):
    fd_err, sym_err = 0.0, 0.0
    for o in catalogue:
        H = assemble_hessian(o.config)
        fd_err = max(fd_err, H.fd_relative_error())
        sym_err = max(sym_err, H.symmetry_error() / np.linalg.norm(H.real_matrix, 2))
    ok = fd_err <= 1e-4 and sym_err <= 1e-9
    verdict(2, ok, f"{len(catalogue)} orbits, max fd rel err {fd_err:.1e}, max asymmetry {sym_err:.1e}")


def test_criterion_03_bott_splitting(tested_orbits):
    t0 = time.perf_counter()
    bad = []
    for i, o in enumerate(tested_orbits):
        H = assemble_hessian(o.config, with_fd=False)
        for m in (2, 3, 4, 5, 8):
            big = iterate(o.config, m)
            for z in (1, -1, 1j):
                if direct_triple(big, z).counts() != bott_split(H, m, z).counts():
                    bad.append((i, m, z))
    dt = time.perf_counter() - t0
    ok = len(tested_orbits) >= 5 and not bad and dt <= 60
    verdict(3, ok, f"{len(tested_orbits)} orbits x 5 m x 3 z, mismatches {bad}; {dt:.1f} s")


def test_criterion_04_nullity_and_monodromy(orbits, reports):
    over = [(i, r.m) for i, rep in enumerate(reports) for r in rep.rows if r.nul > 2 * rep.base.config.N]
    mism = []
    for i, o in enumerate(orbits):
        H = assemble_hessian(o.config, with_fd=False)
        mono = monodromy(H)
        zs = sample_twists(mono, 16)
        for z in zs:
            if index_triple(twisted_hessian(H, z)).nul != kernel_dim(mono.phi, z):
                mism.append((i, z))
    ok = not over and not mism
    verdict(4, ok, f"{len(orbits)} orbits, m = 1..64: nullity excess {over}; 16 z each, kernel mismatches {mism}")


def test_criterion_05_poincare_powers(orbits):
    worst, with_points = 0.0, 0
    for o in orbits:
        base = [z for z, _ in monodromy(assemble_hessian(o.config, with_fd=False)).poincare_points]
        with_points += bool(base)
        for m in range(2, 9):
            it = monodromy(assemble_hessian(iterate(o.config, m), with_fd=False))
            got = [z for z, _ in it.poincare_points]
            worst = max(worst, set_distance(got, [z**m for z in base]))
    verdict(5, worst <= 1e-6, f"{len(orbits)} orbits ({with_points} with Poincare points), m = 2..8, "
                               f"max set distance {worst:.1e}")


def test_criterion_06_iteration_inequalities(reports):
    bad = [(i, r.m, k) for i, rep in enumerate(reports) for r in rep.rows
           for k in ("ind_chain", "coind_chain", "limit_law") if not r.verdicts[k]]
    verdict(6, not bad, f"{len(reports)} orbits, m = 1..64, violations {bad[:5]}")


def test_criterion_07_semicontinuity(orbits, ellipse_axes):
    checked, failed, inconclusive = 0, [], []
    for i, o in enumerate(orbits):
        H = assemble_hessian(o.config, with_fd=False)
        mono = monodromy(H)
        if not mono.poincare_points:
            continue
        checked += 1
        rep = semicontinuity_scan(H, mono=mono)
        if not rep.ok:
            failed.append(i)
        inconclusive += [(i, len(rep.inconclusive))] if rep.inconclusive else []
    axis_inconclusive = sum(len(semicontinuity_scan(assemble_hessian(o.config, with_fd=False)).inconclusive)
                            for o in ellipse_axes)
    ok = checked >= 1 and not failed and axis_inconclusive == 0
    verdict(7, ok, f"{checked} orbits with Poincare points, failures {failed}, inconclusive {inconclusive}, "
                   f"axis-orbit inconclusive {axis_inconclusive}")


def test_criterion_08_circle_ground_truth(tmp_path, capsys):
    missing = []
    for n in range(2, 8):
        out = tmp_path / f"c{n}.json"
        code = cli.main(["find", "--body", "circle", "-n", str(n), "-o", str(out)])
        capsys.readouterr()
        import json

        lengths = [o["length"] for o in json.loads(out.read_text())["orbits"]] if code == 0 else []
        for r in range(1, n // 2 + 1):
            if math.gcd(n, r) != 1:
                continue
            want = 2 * n * math.sin(math.pi * r / n)
            if not any(abs(L - want) <= 1e-8 for L in lengths):
                missing.append((n, r))
    verdict(8, not missing, f"n = 2..7, coprime r <= n/2, missing {missing}")


def test_criterion_09_birkhoff(tmp_path, capsys):
    out = tmp_path / "birkhoff.csv"
    code = cli.main(["birkhoff", "--body", "ellipse 2 1", "--pairs", "3:1,4:1,5:1,5:2", "-o", str(out)])
    capsys.readouterr()
    import csv

    rows = list(csv.DictReader(ln for ln in out.read_text().splitlines() if not ln.startswith("#")))
    counts = {(int(r["n"]), int(r["r"])): int(r["distinct"]) for r in rows}
    ok = code == 0 and len(counts) == 4 and all(c >= 2 for c in counts.values())
    verdict(9, ok, f"distinct orbits per (n, r): {counts}")


def test_criterion_10_reflow(catalogue):
    worst = max(reflow_deviation(o) for o in catalogue)
    verdict(10, worst <= 1e-6, f"{len(catalogue)} orbits, max bounce deviation {worst:.1e}")


def test_criterion_11_topology():
    problems = []
    for N in range(2, 6):
        for n in range(2, 13):
            B = betti_polynomial(N, n)
            if not factored_matches_rational(B, betti_rational_form(N, n)):
                problems.append(("betti", N, n))
            if n >= 3 and B.coefficient(N - 1) < 1:
                problems.append(("t^(N-1)", N, n))
    for N in (3, 4, 5):
        for n in (3, 5, 7, 9):
            if not factored_matches_rational(equivariant_polynomial(N, n), equivariant_rational_form(N, n)):
                problems.append(("equivariant", N, n))
            if equivariant_rank_sum(N, n) != N + 1:
                problems.append(("rank sum", N, n))
    verdict(11, not problems, f"factored = rational, rank sums N+1, middle class present; problems {problems}")


def test_criterion_12_bangert():
    bad, checked = [], 0
    for body in (circle(), sphere()):
        for name in sorted(PATH_PRESETS):
            path = sample_path(preset_path(body, name), 32)
            one = bangert_lift(path, 1)
            if not all(np.array_equal(a.points, b.points) for a, b in zip(one.lifted, path)):
                bad.append((body.name, name, "m=1"))
            for m in (5, 10, 20):
                lift = bangert_lift(path, m)
                checked += len(lift.lifted)
                if not lift.estimate_holds():
                    bad.append((body.name, name, m))
    verdict(12, not bad, f"{len(PATH_PRESETS)} paths x 2 bodies x m in (5, 10, 20), {checked} lifted samples, failures {bad}")


def test_criterion_13_hypothesis_detection(orbits):
    wrong, true_flags, false_flags = [], 0, 0
    for i, o in enumerate(orbits):
        ms = range(1, 17)
        rep = iteration_report(o, ms)
        raw = {m: direct_triple(iterate(o.config, m), 1).counts() for m in ms}
        for r in rep.rows:
            want = (raw[r.m][1] == raw[1][1], raw[r.m][2] == raw[1][2])
            if (r.coind_preserved, r.nul_preserved) != want:
                wrong.append((i, r.m))
            true_flags += r.hypothesis_holds
            false_flags += not r.hypothesis_holds
    verdict(13, not wrong, f"{len(orbits)} orbits, m = 1..16: flags held {true_flags}, "
                           f"not held {false_flags}, disagreements {wrong}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
