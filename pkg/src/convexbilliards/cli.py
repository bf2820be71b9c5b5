"""Command line front end.

Every run is described by a :class:`RunConfig`, built from an optional
YAML/JSON file and then overridden by explicit flags. Outputs carry the
digest of the reproducible part of the config, and the only timestamp
lives on the first ``#`` line of CSV files.

Exit codes: 0 success, 2 nothing found, 3 property violation, 4 input error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import configuration as cfgmod
from . import spectral, topology
from .configuration import CriticalOrbit, find_critical, make_seeds
from .errors import BilliardError
from .geometry import billiard_flow, body_from_spec, radial_point

logger = logging.getLogger("convexbilliards")

EXIT_OK, EXIT_NOTHING, EXIT_VIOLATION, EXIT_INPUT = 0, 2, 3, 4

TOLERANCE_KEYS = ("tol_critical", "tol_geo", "tol_len")
# fields that choose where results go but not what they are
_NOT_DIGESTED = ("output", "figure", "workers")
MAX_INDEX_FIGURES = 8


def _report(fmt: str, *args) -> None:
    """User-facing problem report; always on the current stderr."""
    print("error: " + (fmt % args if args else fmt), file=sys.stderr)


class InputError(Exception):
    """Bad user input; mapped to exit code 4."""


@dataclass
class RunConfig:
    command: str
    body: object = "circle"
    n: int | None = None
    m_list: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    seeds: dict = field(default_factory=lambda: {"count": 10, "strategy": "mixed", "rng_seed": 0})
    mode: str = "newton"
    tolerances: dict = field(default_factory=dict)
    output: str | None = None
    figure: str | None = None
    workers: int = 1
    options: dict = field(default_factory=dict)

    def reproducible(self) -> dict:
        d = asdict(self)
        for k in _NOT_DIGESTED:
            d.pop(k)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.reproducible(), sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, getattr(cfgmod, key.upper())))


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise InputError(f"cannot read config file: {exc}") from None
    except yaml.YAMLError as exc:
        raise InputError(f"malformed config file: {exc}") from None
    if not isinstance(data, dict):
        raise InputError("config file must hold a mapping")
    return data


def build_config(command: str, file_values: dict, flag_values: dict) -> RunConfig:
    """Merge file values and flags (flags win) into a validated RunConfig."""
    known = {f.name for f in fields(RunConfig)} - {"command", "options"}
    merged: dict = {"options": {}}
    for src in (file_values, flag_values):
        for k, v in src.items():
            if k == "seeds":
                merged.setdefault("seeds", dict(RunConfig(command).seeds)).update(v)
            elif k == "tolerances":
                merged.setdefault("tolerances", {}).update(v)
            elif k == "options":
                merged["options"].update(v)
            elif k in known:
                merged[k] = v
            else:
                merged["options"][k] = v
    cfg = RunConfig(command, **merged)
    bad = set(cfg.tolerances) - set(TOLERANCE_KEYS)
    if bad:
        raise InputError(f"unknown tolerance keys {sorted(bad)}; allowed {list(TOLERANCE_KEYS)}")
    if cfg.n is not None and int(cfg.n) < 2:
        raise InputError("n must be >= 2")
    if any(int(m) < 1 for m in cfg.m_list):
        raise InputError("m_list entries must be >= 1")
    cfg.m_list = [int(m) for m in cfg.m_list]
    return cfg


# -- writers ---------------------------------------------------------------------------


def _header_lines(cfg: RunConfig, meta: dict | None) -> list[str]:
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    lines = [f"# timestamp: {stamp}", f"# config_digest: {cfg.digest()}",
             "# run_config: " + json.dumps(cfg.reproducible(), sort_keys=True, default=_jsonable)]
    for k, v in (meta or {}).items():
        lines.append(f"# {k}: {v}")
    return lines


def write_csv(cfg: RunConfig, path, header, rows, meta: dict | None = None) -> None:
    buf = io.StringIO()
    buf.write("\n".join(_header_lines(cfg, meta)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _emit(path, buf.getvalue())


def write_json(cfg: RunConfig, path, payload: dict) -> None:
    doc = {"config_digest": cfg.digest(), "run_config": cfg.reproducible(), **payload}
    _emit(path, json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _emit(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _float_list(text, what):
    if isinstance(text, (list, tuple)):
        vals = text
    else:
        vals = str(text).replace(",", " ").split()
    try:
        return [float(v) for v in vals]
    except ValueError:
        raise InputError(f"could not parse {what} {text!r}") from None


def _body(cfg: RunConfig):
    try:
        return body_from_spec(cfg.body)
    except (ValueError, TypeError) as exc:
        raise InputError(str(exc)) from None


def _require_n(cfg: RunConfig) -> int:
    if cfg.n is None:
        raise InputError("this command needs n (flag -n or key 'n')")
    return int(cfg.n)


def _figure_path(base: str, i: int, total: int) -> str:
    if total == 1:
        return base
    p = Path(base)
    return str(p.with_name(f"{p.stem}_{i}{p.suffix}"))


# -- orbits --------------------------------------------------------------------------


def _search(cfg: RunConfig, body, n: int, rotations=None, failures=None) -> list[CriticalOrbit]:
    s = cfg.seeds
    seeds = make_seeds(body, n, count=int(s.get("count", 10)), strategy=s.get("strategy", "mixed"),
                       rng_seed=int(s.get("rng_seed", 0)), rotations=rotations)
    return find_critical(body, n, seeds, mode=cfg.mode, tol_critical=cfg.tol("tol_critical"),
                         tol_geo=cfg.tol("tol_geo"), tol_len=cfg.tol("tol_len"),
                         failures=failures, workers=int(cfg.workers))


def _load_orbits(cfg: RunConfig) -> list[CriticalOrbit]:
    """Orbits from ``options.orbits`` (a find output) or from a fresh search."""
    src = cfg.options.get("orbits")
    if src:
        try:
            doc = json.loads(Path(src).read_text())
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read orbit file: {exc}") from None
        recs = doc["orbits"] if isinstance(doc, dict) and "orbits" in doc else doc
        if isinstance(recs, dict):
            recs = [recs]
        return [CriticalOrbit.from_dict(r) for r in recs]
    return _search(cfg, _body(cfg), _require_n(cfg))


# -- subcommands -----------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    body = _body(cfg)
    opts = cfg.options
    if "start" not in opts or "direction" not in opts:
        raise InputError("simulate needs --start and --direction")
    start = np.array(_float_list(opts["start"], "start"))
    d = np.array(_float_list(opts["direction"], "direction"))
    if start.size != body.ambient_dim or d.size != body.ambient_dim:
        raise InputError(f"start and direction need {body.ambient_dim} coordinates")
    if not np.linalg.norm(d) > 0:
        raise InputError("direction must be nonzero")
    k = int(opts.get("k", 10))
    p0 = radial_point(body, start - body.interior_point)
    trace = billiard_flow(body, p0, d / np.linalg.norm(d), k)
    names = ["x", "y", "z"] if body.ambient_dim <= 3 else [f"x{i}" for i in range(body.ambient_dim)]
    rows = [[j + 1, *map(float, p.coords)] for j, p in enumerate(trace)]
    meta = {}
    period = opts.get("check_period")
    if period is not None:
        period = int(period)
        seq = np.array([p0.coords] + [p.coords for p in trace])
        if period < 1 or period > k:
            raise InputError("--check-period must lie in 1..k")
        dev = float(np.max(np.linalg.norm(seq[period:] - seq[:-period], axis=1)))
        meta["period_deviation"] = repr(dev)
        logger.info("period %d deviation %.3e", period, dev)
    write_csv(cfg, cfg.output, ["bounce", *names[: body.ambient_dim]], rows, meta)
    return EXIT_OK


def cmd_find(cfg: RunConfig) -> int:
    body = _body(cfg)
    n = _require_n(cfg)
    failures: list = []
    orbits = _search(cfg, body, n, failures=failures)
    for f in failures:
        logger.info("%s", f)
    write_json(cfg, cfg.output, {"orbits": [o.to_dict() for o in orbits],
                                 "failures": [str(f) for f in failures]})
    if cfg.figure and orbits:
        from .plotting import plot_orbits

        plot_orbits(body, orbits, cfg.figure, title=f"{cfg.body}, n={n}")
    logger.info("%d orbit(s), %d failed seed(s)", len(orbits), len(failures))
    return EXIT_OK if orbits else EXIT_NOTHING


def _index_rows(i: int, orbit: CriticalOrbit, z_samples: int):
    """Index table rows and summary for one orbit, plus a list of violations."""
    H = spectral.assemble_hessian(orbit.config, with_fd=False)
    n, N = orbit.n, orbit.config.N
    problems = []
    try:
        mono = spectral.monodromy(H)
    except BilliardError as exc:
        mono = None
        problems.append(f"orbit {i}: monodromy unavailable ({exc})")
    zs = spectral.sample_twists(mono, z_samples) if mono else [1.0, -1.0]
    rows = []
    for z in zs:
        t = spectral.index_triple(spectral.twisted_hessian(H, z))
        kd = spectral.kernel_dim(mono.phi, z) if mono else ""
        z = complex(z)
        rows.append([i, 1, z.real, z.imag, t.ind, t.coind, t.nul, "direct",
                     math.atan2(z.imag, z.real) % (2 * math.pi), kd, t.ind + t.coind + t.nul])
        if t.ind + t.coind + t.nul != n * N:
            problems.append(f"orbit {i}, z={z:.6g}: dimension count {t.ind + t.coind + t.nul} != {n * N}")
        if mono and t.nul != kd:
            problems.append(f"orbit {i}, z={z:.6g}: nul {t.nul} != dim ker(Phi - z) {kd}")
    summary = {"orbit": i, "length": orbit.length, "n": n}
    if mono:
        pts = [{"z": [z.real, z.imag], "angle": float(np.angle(z) % (2 * np.pi)), "multiplicity": mult}
               for z, mult in mono.poincare_points]
        summary["poincare_points"] = pts
        summary["poincare_multiplicity"] = mono.total_nullity()
        if mono.total_nullity() > 2 * N:
            problems.append(f"orbit {i}: Poincare multiplicities {mono.total_nullity()} > 2N = {2 * N}")
        mean = spectral.mean_index(H, mono)
        summary.update(avind=float(mean.avind), avcoind=float(mean.avcoind), mean_quadrature=bool(mean.quadrature))
        semi = spectral.semicontinuity_scan(H, mono=mono)
        summary["semicontinuity_ok"] = semi.ok
        summary["semicontinuity_inconclusive"] = len(semi.inconclusive)
        if not semi.ok:
            problems.append(f"orbit {i}: semicontinuity violated")
    return rows, summary, problems


def cmd_indices(cfg: RunConfig) -> int:
    orbits = _load_orbits(cfg)
    if not orbits:
        _report("no orbits to analyse")
        return EXIT_NOTHING
    z_samples = int(cfg.options.get("z_samples", 16))
    with ThreadPoolExecutor(max(1, int(cfg.workers))) as pool:
        results = list(pool.map(lambda io_: _index_rows(io_[0], io_[1], z_samples), enumerate(orbits)))
    rows = [r for res in results for r in res[0]]
    summaries = [res[1] for res in results]
    problems = [p for res in results for p in res[2]]
    meta = {}
    for s in summaries:
        pts = ", ".join(f"{p['angle']:.9f} (x{p['multiplicity']})" for p in s.get("poincare_points", []))
        meta[f"orbit {s['orbit']}"] = (f"length={s['length']!r} poincare_angles=[{pts}] "
                                       f"avind={s.get('avind')!r} avcoind={s.get('avcoind')!r}")
    header = ["orbit", "m", "z_re", "z_im", "ind", "coind", "nul", "source", "theta", "ker_dim", "total"]
    write_csv(cfg, cfg.output, header, rows, meta)
    summary_path = cfg.options.get("summary")
    if summary_path:
        write_json(cfg, summary_path, {"orbits": summaries, "violations": problems})
    if cfg.figure:
        from .plotting import plot_twisted_indices

        shown = orbits[:MAX_INDEX_FIGURES]
        if len(orbits) > len(shown):
            logger.info("plotting the first %d of %d orbits", len(shown), len(orbits))
        for i, orb in enumerate(shown):
            H = spectral.assemble_hessian(orb.config, with_fd=False)
            plot_twisted_indices(H, _figure_path(cfg.figure, i, len(shown)), title=f"orbit {i}")
    for p in problems:
        _report("%s", p)
    return EXIT_VIOLATION if problems else EXIT_OK


def cmd_iterate(cfg: RunConfig) -> int:
    orbits = _load_orbits(cfg)
    if not orbits:
        _report("no orbit to iterate")
        return EXIT_NOTHING
    idx = int(cfg.options.get("orbit_index", 0))
    if not 0 <= idx < len(orbits):
        raise InputError(f"orbit index {idx} out of range (0..{len(orbits) - 1})")
    report = spectral.iteration_report(orbits[idx], cfg.m_list)
    write_json(cfg, cfg.output, report.to_dict())
    table = cfg.options.get("table")
    if table:
        rows = []
        for r in report.rows:
            rows.append([r.m, 1.0, 0.0, r.ind, r.coind, r.nul, "direct"])
            rows.append([r.m, 1.0, 0.0, r.bott_ind, r.bott_coind, r.bott_nul, "bott"])
        write_csv(cfg, table, ["m", "z_re", "z_im", "ind", "coind", "nul", "source"], rows)
    if cfg.figure:
        from .plotting import plot_iteration_report

        plot_iteration_report(report, cfg.figure)
    bad = report.failing_rows()
    for r in bad:
        failed = sorted(k for k, v in r.verdicts.items() if not v)
        _report("FAIL row m=%d: %s", r.m, ", ".join(failed))
    return EXIT_VIOLATION if bad else EXIT_OK


def _topology_ints(cfg: RunConfig):
    try:
        return int(cfg.options["N"]), int(cfg.n if cfg.n is not None else cfg.options["n_points"])
    except (KeyError, TypeError, ValueError):
        raise InputError("needs integers N and n") from None


def cmd_topology(cfg: RunConfig) -> int:
    action = cfg.options.get("action")
    if action in ("betti", "equivariant", "equivariant-rank-sum"):
        N, n = _topology_ints(cfg)
        if action in ("betti", "equivariant"):
            fn = topology.betti_polynomial if action == "betti" else topology.equivariant_polynomial
            poly = fn(N, n)
            out = f"{poly}\n{list(poly.coeffs)}"
        else:
            out = str(topology.equivariant_rank_sum(N, n))
        _emit(cfg.output, out + "\n")
        return EXIT_OK
    if action != "bangert":
        raise InputError(f"unknown topology action {action!r}")
    body = _body(cfg)
    name = cfg.options.get("path", "diameter-triangle")
    m = int(cfg.options.get("m", 10))
    samples = int(cfg.options.get("samples", 32))
    try:
        gamma = topology.preset_path(body, name)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    lift = topology.bangert_lift(topology.sample_path(gamma, samples), m)
    rows = [list(r[:3]) + [int(r[3])] for r in lift.estimate_rows()]
    ok = lift.estimate_holds()
    verdict = f"{'PASS' if ok else 'FAIL'} bangert path={name} m={m} bound={lift.bound()!r}"
    write_csv(cfg, cfg.output, ["x", "lifted_length", "bound", "holds"], rows, {"verdict": verdict})
    if cfg.figure:
        from .plotting import plot_bangert

        plot_bangert(lift, cfg.figure, title=f"{name}, m={m}")
    print(verdict, file=sys.stderr if cfg.output in (None, "-") else sys.stdout)
    return EXIT_OK if ok else EXIT_VIOLATION


def _parse_pairs(spec) -> list[tuple[int, int]]:
    if isinstance(spec, str):
        items = [p for p in spec.replace(" ", "").split(",") if p]
        try:
            pairs = [tuple(int(v) for v in p.split(":")) for p in items]
        except ValueError:
            raise InputError(f"could not parse pairs {spec!r}") from None
    else:
        pairs = [tuple(int(v) for v in p) for p in spec]
    for p in pairs:
        if len(p) != 2:
            raise InputError(f"pair {p} must be n:r")
        n, r = p
        if n < 2 or not 1 <= r <= n // 2 or math.gcd(n, r) != 1:
            raise InputError(f"(n, r) = {p} needs n >= 2, 1 <= r <= n/2 and gcd(n, r) = 1")
    return pairs


def cmd_birkhoff(cfg: RunConfig) -> int:
    body = _body(cfg)
    if body.ambient_dim != 2:
        raise InputError("birkhoff sweeps need a planar body")
    pairs = _parse_pairs(cfg.options.get("pairs", "3:1,4:1,5:1,5:2"))
    rows, found_by_pair, kept_all = [], {}, []
    for n, r in pairs:
        orbits = [o for o in _search(cfg, body, n, rotations=[r])
                  if o.rotation_number == r and o.prime_period == n]
        found_by_pair[(n, r)] = len(orbits)
        kept_all.extend(orbits)
        Ls = sorted(o.length for o in orbits)
        rows.append([n, r, len(orbits), Ls[0] if Ls else "", Ls[-1] if Ls else "",
                     ";".join(repr(L) for L in Ls)])
    write_csv(cfg, cfg.output, ["n", "r", "distinct", "min_length", "max_length", "lengths"], rows)
    if cfg.figure and kept_all:
        from .plotting import plot_orbits

        plot_orbits(body, kept_all, cfg.figure, title="Birkhoff orbits")
    short = [p for p, c in found_by_pair.items() if c < 2]
    if not kept_all:
        return EXIT_NOTHING
    for p in short:
        _report("FAIL (n, r) = %s: %d distinct orbit(s), expected >= 2", p, found_by_pair[p])
    return EXIT_VIOLATION if short else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "find": cmd_find,
    "indices": cmd_indices,
    "iterate": cmd_iterate,
    "topology": cmd_topology,
    "birkhoff": cmd_birkhoff,
}


# -- argument parsing ----------------------------------------------------------------


def _m_list(text):
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad m list {text!r}") from None


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 4), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = _Parser(add_help=False, argument_default=S)
    p.add_argument("--config", help="YAML or JSON run configuration; flags override it")
    p.add_argument("--body", help="body spec, e.g. 'ellipse 2 1' or 'ellipsoid 1 1.3 1.7'")
    p.add_argument("-n", "--n", type=int, dest="n", help="number of bounce points")
    p.add_argument("--m-list", type=_m_list, dest="m_list", help="iterates, e.g. 1,2,4,8")
    p.add_argument("--seed-count", type=int, dest="seed_count")
    p.add_argument("--strategy", choices=["structured", "random", "mixed"])
    p.add_argument("--rng-seed", type=int, dest="rng_seed")
    p.add_argument("--mode", choices=["newton", "maximize"])
    for k in TOLERANCE_KEYS:
        p.add_argument("--" + k.replace("_", "-"), type=float, dest=k)
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.add_argument("--figure", help="also render a PNG figure to this path")
    p.add_argument("--workers", type=int, help="threads for seeds / orbits")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def make_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    S = argparse.SUPPRESS
    parser = _Parser(prog="convexbilliards", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="billiard flow from a start point and direction")
    p.add_argument("--start", default=S, help="start point (radially projected onto the surface)")
    p.add_argument("--direction", default=S, help="write negative leading values as --direction=-1,0")
    p.add_argument("-k", type=int, dest="k", default=S, help="number of bounces")
    p.add_argument("--check-period", type=int, dest="check_period", default=S)

    sub.add_parser("find", parents=[common], help="critical configurations of the length")

    p = sub.add_parser("indices", parents=[common], help="twisted index table of orbits")
    p.add_argument("--orbits", default=S, help="JSON written by 'find'")
    p.add_argument("--z-samples", type=int, dest="z_samples", default=S)
    p.add_argument("--summary", default=S, help="JSON summary path")

    p = sub.add_parser("iterate", parents=[common], help="iteration report of one orbit")
    p.add_argument("--orbits", default=S)
    p.add_argument("--orbit-index", type=int, dest="orbit_index", default=S)
    p.add_argument("--table", default=S, help="CSV of the raw index table")

    p = sub.add_parser("topology", parents=[common], help="Poincare polynomials and path lifts")
    p.add_argument("action", choices=["betti", "equivariant", "equivariant-rank-sum", "bangert"])
    p.add_argument("ints", nargs="*", type=int, help="N n")
    p.add_argument("--m", type=int, dest="m", default=S)
    p.add_argument("--path", default=S, choices=sorted(topology.PATH_PRESETS))
    p.add_argument("--samples", type=int, default=S)

    p = sub.add_parser("birkhoff", parents=[common], help="(n, r) sweep on a planar body")
    p.add_argument("--pairs", default=S, help="e.g. 3:1,4:1,5:2")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    vals = dict(vars(ns))
    command = vals.pop("command")
    vals.pop("verbose", None)
    file_values = load_config_file(vals.pop("config")) if "config" in vals else {}
    seeds = {k: vals.pop(f) for k, f in (("count", "seed_count"), ("strategy", "strategy"),
                                           ("rng_seed", "rng_seed")) if f in vals}
    if seeds:
        vals["seeds"] = seeds
    tols = {k: vals.pop(k) for k in TOLERANCE_KEYS if k in vals}
    if tols:
        vals["tolerances"] = tols
    if command == "topology":
        ints = vals.pop("ints", [])
        if ints:
            if len(ints) != 2:
                raise InputError("topology expects two integers: N n")
            vals["N"], vals["n"] = ints
    return build_config(command, file_values, vals)


def main(argv=None) -> int:
    parser = make_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(getattr(ns, "verbose", 0), 2),
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(ns)
        return COMMANDS[cfg.command](cfg)
    except InputError as exc:
        _report("%s", exc)
        return EXIT_INPUT
    except BilliardError as exc:
        _report("%s: %s", type(exc).__name__, exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
