"""Config-driven experiment runner.

    hkelab run CONFIG [--out DIR] [--seed N] [--threads N]
    hkelab compare MANIFEST_A MANIFEST_B [--out DIR]
    hkelab graph export FAMILY LEVEL [--out DIR] [--no-renormalize]

Configs are INI files; see the README for the keys.  Report bodies depend
only on the config and the seed, so two runs produce identical JSON.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .conditions import (
    BorelMeasure,
    ScaleFunction,
    ScaleTableError,
    check_cap_upper,
    check_ce,
    check_cs,
    check_hke,
    check_pi,
    fit_walk_dimension,
    morrey_check,
    sobolev_poincare_q,
    sp_equivalence_probe,
)
from .conditions.pipeline import ce_sweep, default_cutoff_grid, doubling_condition
from .conditions.report import _clean
from .cutoff import resolvent_cutoff
from .energy import EnergyForm, assemble_generator
from .space import FAMILIES, build_family, save_graph
from .spectral import eigendecompose

PIPELINE_STEPS = ["doubling", "pi", "ce", "walk_dimension", "hke"]
KNOWN_STEPS = PIPELINE_STEPS + ["cap", "cs", "morrey", "sobolev", "sp"]
RANDOMIZED_STEPS = {"cs"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    family: str
    size: int
    renormalize: bool
    psi_spec: dict
    steps: list
    params: dict
    seed: int | None
    out: Path
    source: str = ""
    hash: str = ""
    family_hash: str = ""
    psi: ScaleFunction | None = field(default=None, repr=False)


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def load_config(path, seed=None, out=None) -> ExperimentConfig:
    """Parse and validate an experiment config.

    Raises :class:`ConfigError` with the offending file and line on bad input.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not cp.has_section("graph"):
        raise ConfigError(f"{path}: missing [graph] section")
    g = cp["graph"]
    family = g.get("family", "").strip()
    if family not in FAMILIES:
        raise ConfigError(f"{path}: unknown family {family!r}; expected one of {sorted(FAMILIES)}")
    try:
        size = g.getint("size")
        renormalize = g.getboolean("renormalize", fallback=True)
    except ValueError as exc:
        raise ConfigError(f"{path}: [graph] {exc}") from None
    if size is None or size < 0:
        raise ConfigError(f"{path}: [graph] size must be a nonnegative integer")
    run = cp["run"] if cp.has_section("run") else {}
    steps_text = run.get("steps", "pipeline")
    steps = []
    for s in steps_text.replace(",", " ").split():
        steps.extend(PIPELINE_STEPS if s == "pipeline" else [s])
    steps = list(dict.fromkeys(steps))
    unknown = [s for s in steps if s not in KNOWN_STEPS]
    if unknown:
        raise ConfigError(f"{path}: unknown steps {unknown}; expected {KNOWN_STEPS}")
    if seed is None and "seed" in run:
        seed = int(run["seed"])
    if seed is None and RANDOMIZED_STEPS.intersection(steps):
        raise ConfigError(f"{path}: a seed is required for steps {sorted(RANDOMIZED_STEPS.intersection(steps))}")
    out = Path(out) if out is not None else path.parent / run.get("out", "results")
    psi_spec = dict(cp["psi"]) if cp.has_section("psi") else {"kind": "fit"}
    psi = None
    kind = psi_spec.get("kind", "fit")
    if kind == "power":
        try:
            psi = ScaleFunction.power(float(psi_spec["beta"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: [psi] power needs a positive beta ({exc})") from None
    elif kind == "table":
        table = path.parent / psi_spec.get("file", "")
        if not table.is_file():
            raise ConfigError(f"{path}: [psi] table file {table} does not exist")
        try:
            psi = ScaleFunction.from_file(table)
        except ScaleTableError as exc:
            raise ConfigError(f"{table}: {exc}") from None
        psi_spec["table_sha256"] = hashlib.sha256(table.read_bytes()).hexdigest()
    elif kind != "fit":
        raise ConfigError(f"{path}: [psi] kind must be power, table or fit")
    params = {s: dict(cp[s]) for s in cp.sections() if s not in ("graph", "run", "psi")}
    canon = {"graph": {"family": family, "size": size, "renormalize": renormalize},
             "psi": {k: v for k, v in psi_spec.items() if k != "file"}, "steps": steps,
             "params": params, "seed": seed}
    text = json.dumps(canon, sort_keys=True)
    fam = dict(canon, graph={"family": family})
    return ExperimentConfig(
        family, size, renormalize, psi_spec, steps, params, seed, out, source=str(path),
        hash=hashlib.sha256(text.encode()).hexdigest(),
        family_hash=hashlib.sha256(json.dumps(fam, sort_keys=True).encode()).hexdigest(),
        psi=psi,
    )


# -- steps -------------------------------------------------------------------------

class Context:
    """Shared, lazily built state of one run; guarded so threads build it once."""

    def __init__(self, cfg: ExperimentConfig):
        import threading
        self.cfg = cfg
        self.graph = build_family(cfg.family, cfg.size, **({} if cfg.family in ("path", "lattice2d")
                                                          else {"renormalize": cfg.renormalize}))
        self._lock = threading.Lock()
        self._spec = None
        self._walk = None

    def param(self, step, key, default, cast=float):
        return cast(self.cfg.params.get(step, {}).get(key, default))

    @property
    def spectrum(self):
        with self._lock:
            if self._spec is None:
                self._spec = eigendecompose(assemble_generator(EnergyForm(self.graph)))
            return self._spec

    @property
    def walk(self):
        spec = self.spectrum
        with self._lock:
            if self._walk is None:
                self._walk = fit_walk_dimension(self.graph, spec)
            return self._walk

    @property
    def psi(self):
        if self.cfg.psi is not None:
            return self.cfg.psi
        return ScaleFunction.power(self.walk.constants["beta"])

    @property
    def beta(self):
        psi = self.psi
        return psi.beta if psi.kind == "power" else self.walk.constants["beta"]


def _cutoff_grid(ctx):
    centers, scales = default_cutoff_grid(ctx.graph)
    p = ctx.cfg.params.get("ce", {})
    if "centers" in p:
        centers = [int(v) for v in _floats(p["centers"])]
    if "scales" in p:
        scales = [ctx.graph.diam * v for v in _floats(p["scales"])]
    return centers, scales


def run_step(name: str, ctx: Context) -> tuple[dict, dict]:
    """Run one step; returns ``(report dict, extra files {name: text})``."""
    g = ctx.graph
    files = {}
    if name == "doubling":
        rep = doubling_condition(g)
    elif name == "pi":
        rep = check_pi(g, ctx.psi, sigma=ctx.param("pi", "sigma", 1.0), p=ctx.param("pi", "p", 2.0),
                       seed=ctx.cfg.seed or 0)
    elif name == "cap":
        rep = check_cap_upper(g, ctx.psi, kappa=ctx.param("cap", "kappa", 2.0))
    elif name == "ce":
        centers, scales = _cutoff_grid(ctx)
        rep, cutoffs = ce_sweep(g, ctx.psi, centers, scales, kappa=ctx.param("ce", "kappa", 0.5))
        rep.extra["cutoffs"] = [c.to_dict() for c in cutoffs]
        for c in cutoffs:
            key = f"ce_x{c.constants['x0']}_R{c.constants['R0']:.6g}.dat"
            xs, env = c.extra.get("log_r_over_R"), c.extra.get("log_rho_envelope")
            if xs is not None:
                files[key] = "# log(r/R) log(rho)\n" + "".join(f"{a!r} {b!r}\n" for a, b in zip(np.asarray(xs).tolist(), np.asarray(env).tolist()))
    elif name == "cs":
        centers, scales = _cutoff_grid(ctx)
        kappa = ctx.param("ce", "kappa", 0.5)
        subs, worst = [], None
        for x0 in centers:
            for R0 in scales:
                xi = resolvent_cutoff(g, x0, R0, ctx.psi, kappa=kappa)
                ce = check_ce(g, xi, x0, R0, ctx.psi)
                if ce.verdict != "pass":
                    subs.append({"x0": x0, "R0": R0, "ce": ce.to_dict(), "cs": None})
                    continue
                cs = check_cs(g, xi, x0, R0, ctx.psi, ce.constants["delta"], seed=ctx.cfg.seed)
                subs.append({"x0": x0, "R0": R0, "ce": ce.to_dict(), "cs": cs.to_dict()})
                if worst is None or cs.constants["C"] > worst.constants["C"]:
                    worst = cs
        from .conditions.report import ConditionReport
        rep = ConditionReport("CS", dict(worst.constants) if worst else {}, worst.worst_witness if worst else {},
                              "pass" if worst is not None and all(s["cs"] for s in subs) else "fail",
                              mode="sweep", extra={"cutoffs": subs})
    elif name == "walk_dimension":
        rep = ctx.walk
        ts = np.exp(rep.extra["log_t"])
        files["walk_fit.dat"] = "# t mean_x log r(t, x)\n" + "".join(
            f"{a!r} {b!r}\n" for a, b in zip(ts.tolist(), np.asarray(rep.extra["mean_log_r"]).tolist()))
    elif name == "hke":
        rep = check_hke(g, ctx.spectrum, ctx.beta, kappa=ctx.param("hke", "kappa", 1.0))
        from .spectral import heat_kernel_diagonal
        tw = np.geomspace(rep.constants["t_min"], rep.constants["t_max"], 32)
        x = 0
        pt = heat_kernel_diagonal(ctx.spectrum, tw)[:, x]
        files["heat_trace.dat"] = f"# t p_t({x},{x})\n" + "".join(f"{a!r} {b!r}\n" for a, b in zip(tw.tolist(), pt.tolist()))
    elif name == "morrey":
        rep = morrey_check(g, ctx.psi, sigma=ctx.param("morrey", "sigma", 1.0))
    elif name == "sobolev":
        rep = sobolev_poincare_q(g, ctx.psi, q=ctx.param("sobolev", "q", 2.0))
    elif name == "sp":
        kind = ctx.cfg.params.get("sp", {}).get("measure", "reference")
        if kind == "dirac":
            nu = BorelMeasure.dirac(g.n, int(ctx.param("sp", "vertex", g.n // 2)))
        else:
            nu = BorelMeasure.reference(g)
        theta = ScaleFunction.constant(ctx.param("sp", "theta", 1.0))
        probe = sp_equivalence_probe(g, nu, theta, ctx.psi)
        rep = probe["T2"]
        rep.extra.update({"T1": probe["T1"].to_dict(), "band": probe["band"]})
    else:  # pragma: no cover - guarded by load_config
        raise ValueError(name)
    body = rep.to_dict()
    if rep.rows is not None and len(rep.rows):
        rows = np.asarray(rep.rows, dtype=float)
        files[f"{name}.csv"] = "y,r,lhs,rhs,ratio\n" + "".join(
            f"{int(a)},{b!r},{c!r},{d!r},{e!r}\n" for a, b, c, d, e in rows.tolist())
    return body, files


def run(config_path, out=None, seed=None, threads: int = 1) -> dict:
    """Execute the steps of a config and write reports plus a manifest.

    Failing steps are recorded and the remaining steps still run.
    """
    cfg = load_config(config_path, seed=seed, out=out)
    started = time.time()
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg)

    def task(name):
        t0 = time.time()
        try:
            body, files = run_step(name, ctx)
            return name, {"status": "ok", "verdict": body["verdict"]}, body, files, time.time() - t0
        except Exception as exc:  # record and continue with the other steps
            return name, {"status": "error", "error": f"{type(exc).__name__}: {exc}"}, None, {}, time.time() - t0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, cfg.steps))
    else:
        results = [task(s) for s in cfg.steps]
    # single writer: every file is written here, in step order
    index = []
    steps = {}
    for name, status, body, files, elapsed in results:
        if body is not None:
            rp = out / f"{name}.json"
            rp.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n")
            status["report"] = rp.name
            index.append(rp.name)
        for fname in sorted(files):
            (out / fname).write_text(files[fname])
            index.append(fname)
        status["seconds"] = round(elapsed, 3)
        steps[name] = status
    manifest = {
        "artifact_version": __version__, "config": cfg.source, "config_hash": cfg.hash,
        "family_hash": cfg.family_hash, "family": cfg.family, "size": cfg.size,
        "renormalize": cfg.renormalize, "seed": cfg.seed, "steps": steps,
        "outputs": sorted(index), "started": started, "finished": time.time(),
    }
    (out / "manifest.json").write_text(json.dumps(_clean(manifest), sort_keys=True, indent=2) + "\n")
    return manifest


# -- compare ---------------------------------------------------------------------------

DRIFT_BAND = 3.0
# report constants that echo inputs rather than measure anything
PARAMETER_KEYS = {"kappa", "p", "q", "sigma", "R0", "x0", "n_cutoffs", "t_min", "t_max", "beta_scan"}


def _numbers(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, bool):
            continue
        if isinstance(v, (int, float)):
            out[key] = float(v)
        elif isinstance(v, dict):
            out.update(_numbers(v, key + "."))
    return out


def compare(path_a, path_b, band: float = DRIFT_BAND) -> dict:
    """Per-constant drift between two runs of the same config at different sizes.

    ``ratio = B/A``; a constant is flagged when the ratio leaves
    ``[1/band, band]``.
    """
    pa, pb = Path(path_a), Path(path_b)
    if pa.is_dir():
        pa = pa / "manifest.json"
    if pb.is_dir():
        pb = pb / "manifest.json"
    ma, mb = json.loads(pa.read_text()), json.loads(pb.read_text())
    if ma["family_hash"] != mb["family_hash"]:
        raise ConfigError("manifests come from different configs (beyond family size and renormalization)")
    table = []
    for step in sorted(set(ma["steps"]).intersection(mb["steps"])):
        sa, sb = ma["steps"][step], mb["steps"][step]
        if "report" not in sa or "report" not in sb:
            continue
        ca = _numbers(json.loads((pa.parent / sa["report"]).read_text())["constants"])
        cb = _numbers(json.loads((pb.parent / sb["report"]).read_text())["constants"])
        for key in sorted(set(ca).intersection(cb) - PARAMETER_KEYS):
            a, b = ca[key], cb[key]
            if a == b:
                ratio, rel = 1.0, 0.0
            elif a == 0:
                ratio, rel = float("inf"), float("inf")
            else:
                ratio, rel = b / a, (b - a) / abs(a)
            flagged = not (1.0 / band <= ratio <= band) if np.isfinite(ratio) else True
            table.append({"step": step, "constant": key, "A": a, "B": b, "ratio": ratio,
                          "relative_drift": rel, "flagged": bool(flagged)})
    return _clean({"A": str(pa), "B": str(pb), "size_A": ma["size"], "size_B": mb["size"],
                   "band": band, "drift": table,
                   "flagged": [f"{r['step']}.{r['constant']}" for r in table if r["flagged"]]})


# -- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkelab", description="Heat kernel estimate laboratory")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for randomized test suites")
    p.add_argument("--threads", type=int, default=1, help="steps run concurrently")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    c = sub.add_parser("compare", help="drift table between two manifests")
    c.add_argument("a")
    c.add_argument("b")
    gr = sub.add_parser("graph", help="graph utilities")
    gsub = gr.add_subparsers(dest="graph_command", required=True)
    ex = gsub.add_parser("export", help="write a family graph in the text format")
    ex.add_argument("family", choices=sorted(FAMILIES))
    ex.add_argument("level", type=int)
    ex.add_argument("--no-renormalize", action="store_true")
    for sp in (r, c, ex):
        sp.add_argument("--out", type=str, default=argparse.SUPPRESS)
        sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            manifest = run(args.config, out=args.out, seed=args.seed, threads=max(1, args.threads))
            failed = [k for k, v in manifest["steps"].items() if v["status"] != "ok"]
            for k, v in manifest["steps"].items():
                print(f"{k:16s} {v['status']:6s} {v.get('verdict', v.get('error', ''))}")
            return 1 if failed else 0
        if args.command == "compare":
            result = compare(args.a, args.b)
            text = json.dumps(result, sort_keys=True, indent=2)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "drift.json").write_text(text + "\n")
            for row in result["drift"]:
                mark = "DRIFT" if row["flagged"] else "ok"
                print(f"{row['step']:16s} {row['constant']:24s} {row['ratio']!s:>24s} {mark}")
            return 0
        if args.command == "graph":
            opts = {} if args.family in ("path", "lattice2d") else {"renormalize": not args.no_renormalize}
            g = build_family(args.family, args.level, **opts)
            out = Path(args.out or ".")
            out.mkdir(parents=True, exist_ok=True)
            dest = out / f"{args.family}_{args.level}.graph"
            save_graph(g, dest)
            print(dest)
            return 0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
