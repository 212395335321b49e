"""Command line entry point: ``chshml <command> [options]``.

Exit codes: 0 success, 1 domain error, 2 input/output error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import (
    SLICES,
    SliceSpec,
    full_report,
    simplex_region,
    slice_grid,
    uniform_region,
    volume_curve,
    volume_ratio,
    write_report_json,
    write_slice_csv,
    write_slice_json,
    write_volume_csv,
)
from .geometry import DomainError, NotNonSignalling, Space, ns_system
from .ml import DimensionMismatch, DivergedLoss, MaxPasses, load_model, save_model, split_dataset, train_mlp, train_svm
from .ml.losses import FocalLossParams
from .npa import LevelTooLarge, NpaLevel, max_lambda
from .oracles import SeesawOracle, get_oracle
from .rng import make_rng, substream
from .sampling import (
    DatasetError,
    OffsetConfig,
    SpreadConfig,
    facet_directions,
    label_points,
    offset_sample,
    read_jsonl,
    sample_simplex,
    sample_uniform,
    spread_sample,
    write_csv,
    write_jsonl,
)
from .sdp import SdpError
from .seesaw import SEESAW_THRESHOLD, SeesawConfig, round_protocol, steered_seesaw, write_round_csv

EXIT_OK, EXIT_DOMAIN, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3


def _floats(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


def _schedule(text: str) -> list[tuple[int, int]]:
    """``"2:5,3:10"`` -> ``[(2, 5), (3, 10)]``."""
    out = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        d, _, seeds = item.partition(":")
        out.append((int(d), int(seeds or 5)))
    return out


def _pmap(fn, items, threads: int) -> list:
    """Ordered map, in a process pool when ``threads > 1``."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with Pool(threads) as pool:
        return pool.map(fn, items)


def _write_meta(path: Path, **meta) -> None:
    meta["version"] = __version__
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


# -- generate -------------------------------------------------------------------------------


def cmd_generate(a) -> int:
    t0 = time.perf_counter()
    space = Space(a.space)
    level = str(NpaLevel.parse(a.level))
    if a.method in ("uniform", "balanced"):
        pts = sample_uniform(space, a.n, get_oracle(a.oracle, a.seed), a.method == "balanced", a.seed, a.oracle)
    elif a.method == "offset":
        pts = offset_sample(space, a.n, OffsetConfig(a.epsilon, level), a.seed, a.facet_only)
    elif a.method == "spread":
        pts = spread_sample(SpreadConfig(a.sigma, a.shell), level, a.n, a.seed, space)
    else:
        if space is not Space.FULL8:
            raise ValueError("simplex samples live in Full8")
        pts = label_points(sample_simplex(a.n, a.seed), get_oracle(a.oracle, a.seed), "simplex", a.seed, a.oracle)
    out = Path(a.out)
    write_jsonl(pts, out)
    if a.csv:
        write_csv(pts, a.csv)
    _write_meta(out, command="generate", method=a.method, space=space.value, n=len(pts), seed=a.seed,
                oracle=a.oracle, level=level, epsilon=a.epsilon, sigma=a.sigma,
                wall_time=time.perf_counter() - t0)
    print(f"wrote {len(pts)} points to {out}")
    return EXIT_OK


# -- classify ---------------------------------------------------------------------------------


class _Classify:
    def __init__(self, oracle: str, seed: int):
        self.oracle, self.seed = oracle, seed

    def __call__(self, item):
        i, x = item
        oracle = get_oracle(self.oracle, self.seed)
        t0 = time.perf_counter()
        if isinstance(oracle, SeesawOracle):
            # per-point substream: labels do not depend on the worker count
            lab = int(bool(ns_system(Space.of(x)).contains(x[None], tol=1e-12)[0]) and oracle.one(x, i))
        else:
            lab = int(bool(oracle(x[None])[0]))
        return lab, time.perf_counter() - t0


def cmd_classify(a) -> int:
    rows = read_jsonl(a.input, strict=False)
    xs = [r.x if hasattr(r, "x") else r for r in rows]
    results = _pmap(_Classify(a.oracle, a.seed), list(enumerate(xs)), a.threads)
    out = Path(a.out)
    with open(out, "w", encoding="utf-8") as fh:
        for r, x, (lab, dt) in zip(rows, xs, results):
            d = r.to_dict() if hasattr(r, "to_dict") else {"space": Space.of(x).value, "x": [float(v) for v in x]}
            d.update(label=lab, oracle=a.oracle, seed=d.get("seed", a.seed), time=dt)
            fh.write(json.dumps(d) + "\n")
    total = sum(dt for _, dt in results)
    _write_meta(out, command="classify", oracle=a.oracle, n=len(rows), seed=a.seed,
                time_per_point=total / max(len(rows), 1))
    print(f"classified {len(rows)} points with {a.oracle}")
    return EXIT_OK


# -- train / eval ------------------------------------------------------------------------------


def cmd_train(a) -> int:
    pts = read_jsonl(a.data)
    split = split_dataset(pts, seed=a.seed)
    if a.model == "svm":
        model = train_svm(split, _floats(a.c_grid), _floats(a.gamma_grid))
    else:
        model = train_mlp(split, loss=a.loss, focal=FocalLossParams(a.alpha, a.gamma), convex=a.convex,
                          restarts=a.restarts, seed=a.seed, patience=a.patience, max_epochs=a.max_epochs)
    report = full_report(model, {"test": split.test, "train": split.train})
    tmp = Path(str(a.out) + ".partial")
    save_model(model, tmp)
    tmp.replace(a.out)
    if a.report:
        write_report_json(report, a.report)
    print(json.dumps({k: report.per_suite[k]["accuracy"] for k in report.per_suite}))
    return EXIT_OK


def cmd_eval(a) -> int:
    model = load_model(a.model)
    datasets = {}
    for item in a.data or []:
        name, _, path = item.rpartition("=")
        datasets[name or Path(path).stem] = read_jsonl(path)
    report = full_report(model, datasets, _floats(a.spread) if a.spread else (), a.slices or (),
                         a.level, a.seed, a.spread_n)
    if a.out:
        write_report_json(report, a.out)
    print(json.dumps(report.per_suite, sort_keys=True))
    return EXIT_OK


# -- slice / volume ----------------------------------------------------------------------------------


def _load_slice(a) -> SliceSpec:
    if a.spec:
        with open(a.spec, encoding="utf-8") as fh:
            d = json.load(fh)
        return SliceSpec(d["name"], d["origin"], d["e1"], d["e2"], d.get("resolution", 141),
                         tuple(map(tuple, d.get("bounds", ((-2, 2), (-2, 2))))))
    spec = SLICES[a.name]
    if a.resolution:
        spec = SliceSpec(spec.name, spec.origin, spec.e1, spec.e2, a.resolution, spec.bounds)
    return spec


def cmd_slice(a) -> int:
    spec = _load_slice(a)
    clf = load_model(a.model) if a.model else get_oracle(a.oracle, a.seed)
    grid = slice_grid(spec, clf)
    if str(a.out).endswith(".json"):
        write_slice_json(grid, a.out)
    else:
        write_slice_csv(grid, a.out)
    print(f"{int(grid.in_ns.sum())} grid points written to {a.out}")
    return EXIT_OK


def cmd_volume(a) -> int:
    if a.levels:
        rows = volume_curve(a.levels.split(","), a.n, a.seed)
    else:
        region = simplex_region() if a.region == "simplex" else uniform_region(a.region.split("-")[1])
        est = volume_ratio(region, get_oracle(a.oracle, a.seed), a.n, a.seed)
        rows = [{"level": a.oracle, "ratio": est.ratio, "stderr": est.stderr, "tPerPoint": est.time_per_point}]
    write_volume_csv(rows, a.out)
    for r in rows:
        print(f"{r['level']}: ratio {r['ratio']:.4f} +- {r['stderr']:.4f}")
    return EXIT_OK


# -- boundary versus see-saw scan ------------------------------------------------------------------------------


class _BoundaryGap:
    def __init__(self, level, d, seeds, seed, threshold=SEESAW_THRESHOLD):
        self.level, self.d, self.seeds, self.seed, self.threshold = level, d, seeds, seed, threshold

    def __call__(self, item):
        i, u = item
        lam = max_lambda(u, self.level)
        cfg = SeesawConfig(d=self.d, seeds=self.seeds, threshold=self.threshold)
        v = steered_seesaw(lam * u, cfg, substream(self.seed, i))
        return lam, v.best_distance, v.seed_used


def appendix_a(n, d, seeds, seed, level="1ab", threads=1, threshold=SEESAW_THRESHOLD) -> list[dict]:
    """Boundary of the relaxation along facet-filtered directions versus see-saw distance.

    Seeds of a direction stop once one of them is below ``threshold``. Whether
    the best distance falls below any cut-off at or above ``threshold`` does
    not depend on that choice, so a coarse threshold gives the same counts
    for coarse cut-offs at a fraction of the cost.
    """
    dirs = facet_directions(n, make_rng(seed))
    res = _pmap(_BoundaryGap(NpaLevel.parse(level), d, seeds, seed, threshold), list(enumerate(dirs)), threads)
    return [{"index": i, "lambda": lam, "distance": dist, "seed_used": s}
            for i, (lam, dist, s) in enumerate(res)]


def summarize_gaps(rows, threshold=SEESAW_THRESHOLD) -> dict:
    """Counts below 1e-2, 1e-3 and 1e-7; ``None`` for cut-offs finer than the run resolved."""
    dist = np.array([r["distance"] for r in rows])
    out = {"n": len(dist)}
    for cut in (1e-2, 1e-3, 1e-7):
        out[f"below_{cut:.0e}".replace("e-0", "e-")] = int(np.sum(dist < cut)) if cut >= threshold else None
    below = out["below_1e-2"]
    out["fraction_below_1e-2"] = None if below is None else below / max(len(dist), 1)
    return out


def cmd_appendixa(a) -> int:
    rows = appendix_a(a.n, a.d, a.seeds, a.seed, a.level, a.threads, a.threshold)
    out = Path(a.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["index", "lambda", "distance", "seed_used"])
        w.writeheader()
        w.writerows(rows)
    dist = np.array([r["distance"] for r in rows])
    if a.hist:
        edges = np.arange(-10, 1)
        counts, _ = np.histogram(np.log10(np.maximum(dist, 1e-12)), bins=edges)
        with open(a.hist, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["log10_lo", "log10_hi", "count"])
            w.writerows(zip(edges[:-1], edges[1:], counts))
    summary = summarize_gaps(rows, a.threshold) | {"d": a.d, "seeds": a.seeds, "seed": a.seed, "level": a.level,
                                                   "threshold": a.threshold}
    with open(str(out) + ".summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_rounds(a) -> int:
    rows = read_jsonl(a.input, strict=False)
    pts = np.array([r.x if hasattr(r, "x") else r for r in rows])
    found, reports = round_protocol(pts, _schedule(a.schedule), a.seed)
    write_round_csv(reports, a.out)
    print(f"{sum(f is not None for f in found)} of {len(found)} points certified")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chshml", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file of option defaults (flags override it)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a labelled dataset")
    g.add_argument("--space", choices=["corr4", "full8"], default="corr4")
    g.add_argument("--method", choices=["uniform", "balanced", "offset", "spread", "simplex"], default="uniform")
    g.add_argument("--n", type=int, default=10_000)
    g.add_argument("--oracle", default="tlm")
    g.add_argument("--epsilon", type=float, default=1e-3)
    g.add_argument("--sigma", type=float, default=1e-2)
    g.add_argument("--shell", type=float, default=0.01)
    g.add_argument("--level", default="1ab")
    g.add_argument("--facet-only", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="dataset.jsonl")
    g.add_argument("--csv")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("classify", help="label behaviours with a membership oracle")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--oracle", default="npa:1ab")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default="classified.jsonl")
    c.set_defaults(func=cmd_classify)

    t = sub.add_parser("train", help="fit an SVM or a network")
    t.add_argument("--data", required=True)
    t.add_argument("--model", choices=["svm", "mlp"], default="svm")
    t.add_argument("--loss", choices=["focal", "bce"], default="focal")
    t.add_argument("--alpha", type=float, default=1e-2)
    t.add_argument("--gamma", type=float, default=2.0)
    t.add_argument("--convex", action="store_true")
    t.add_argument("--restarts", type=int, default=10)
    t.add_argument("--patience", type=int, default=20)
    t.add_argument("--max-epochs", type=int, default=500)
    t.add_argument("--c-grid", default="0.1,1,10,100,1000")
    t.add_argument("--gamma-grid", default="0.01,0.1,1,10")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", default="model.json")
    t.add_argument("--report")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", action="append", help="name=path of a labelled dataset (repeatable)")
    e.add_argument("--spread", help="comma-separated sigmas")
    e.add_argument("--spread-n", type=int, default=10_000)
    e.add_argument("--slices", nargs="*", choices=sorted(SLICES))
    e.add_argument("--level", default="1")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("slice", help="classify a two-dimensional slice")
    s.add_argument("--name", choices=sorted(SLICES), default="pr-pair")
    s.add_argument("--spec", help="JSON slice definition")
    s.add_argument("--resolution", type=int)
    s.add_argument("--model")
    s.add_argument("--oracle", default="tlm")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="slice.csv")
    s.set_defaults(func=cmd_slice)

    v = sub.add_parser("volume", help="Monte Carlo volume ratio")
    v.add_argument("--region", choices=["uniform-corr4", "uniform-full8", "simplex"], default="simplex")
    v.add_argument("--oracle", default="npa:1ab")
    v.add_argument("--levels", help="comma-separated NPA levels (simplex region)")
    v.add_argument("--n", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default="volume.csv")
    v.set_defaults(func=cmd_volume)

    x = sub.add_parser("appendixa", help="relaxation boundary versus see-saw distance")
    x.add_argument("--n", type=int, default=100)
    x.add_argument("--d", type=int, default=6)
    x.add_argument("--seeds", type=int, default=50)
    x.add_argument("--level", default="1ab")
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--out", default="appendixa.csv")
    x.add_argument("--hist", help="histogram CSV of log10 distances")
    x.add_argument("--threshold", type=float, default=SEESAW_THRESHOLD, help="per-direction stopping distance")
    x.set_defaults(func=cmd_appendixa)

    r = sub.add_parser("rounds", help="see-saw classification in rounds")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--schedule", default="2:5,3:5,4:5")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="rounds.csv")
    r.set_defaults(func=cmd_rounds)
    return p


def _with_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        with open(pre.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        parser.set_defaults(**{k: v for k, v in cfg.items() if k in ("threads",)})
        for action in parser._subparsers._group_actions:
            for sp in action.choices.values():
                sp.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _with_config(parser, argv)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args)
    except (OSError, DatasetError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SdpError, MaxPasses, DivergedLoss) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DomainError, NotNonSignalling, DimensionMismatch, LevelTooLarge, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
