"""Batch experiment runner.

Usage: ``opelab SUBCOMMAND [--config FILE.yaml] [--out DIR] [--KEY VALUE ...]``.

Every run validates its configuration before touching the output directory,
writes ``SUBCOMMAND.json`` (and ``SUBCOMMAND.csv`` for tabular results) plus
``SUBCOMMAND.config.json`` holding the fully resolved configuration. Each
output carries the hash of the experiment configuration. Exit codes: 0 pass,
1 check failed, 2 configuration error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, OpelabError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_ENV = "OPELAB_OUTPUT_DIR"
DEFAULT_OUTPUT = "opelab-output"
REQUIRED = object()
# keys that steer execution but not results; excluded from the config hash
EXECUTION_KEYS = ("workers", "output_dir")


@dataclass(frozen=True)
class Key:
    types: tuple
    default: Any
    help: str = ""


def _k(types, default=REQUIRED, help=""):
    return Key(types if isinstance(types, tuple) else (types,), default, help)


NUM = (int, float)
FRAC = (int, float, str)
TF = {"kind": "gaussian", "width": 1.0}

COMMON = {
    "d": _k(int, 1, "spatial dimension"),
    "dim_phi": _k(NUM, 0.2, "scaling dimension of phi"),
    "L": _k(NUM, 2.0, "scale ratio"),
    "n_per_side": _k(int, 4096, "lattice sites per side"),
    "box_length": _k(NUM, 16.0, "torus side length"),
    "workers": _k(int, None, "worker threads (default: available CPUs)"),
    "output_dir": _k(str, None, "output directory"),
}

SCHEMAS: dict[str, dict[str, Key]] = {
    "sample": {"seed": _k(int), "n_samples": _k(int, 1), "format": _k(str, "binary", "binary or csv")},
    "covariance": {
        "seed": _k(int),
        "n_samples": _k(int, 200),
        "fit_lo": _k(int, 8),
        "fit_hi": _k(int, None),
        "tolerance": _k(NUM, 0.02),
    },
    "kappa-calibrate": {"radii": _k(list, [1.0, 2.0])},
    "wick2": {
        "seed": _k(int),
        "r": _k(int),
        "n_samples": _k(int, 1000),
        "test_function": _k(dict, TF),
        "sharpness": _k(NUM, 1.0),
    },
    "renorm-converge": {
        "seed": _k(int),
        "n_samples": _k(int),
        "mode": _k(str, "telescoping", "telescoping or mollifier"),
        "r_min": _k(int, -6),
        "r_max": _k(int, -1),
        "p": _k(int, 2),
        "gamma": _k(FRAC, 1),
        "epsilon": _k(FRAC, 0),
        "sharpness": _k(list, [1.0, 2.0]),
        "test_function": _k(dict, TF),
        "tolerance": _k(NUM, 0.15),
        "chunk": _k(int, 64),
    },
    "moment-check": {
        "seed": _k(int),
        "n_samples": _k(int),
        "r": _k(int, -5),
        "factors": _k(list, [{"a": "phi", "b": "phi", "c_star": "phi2", "test_function": TF}]),
        "spectators": _k(
            list,
            [
                {"label": "phi", "test_function": {"kind": "hermite", "degrees": [1], "width": 1.0}},
                {"label": "phi", "test_function": {"kind": "hermite", "degrees": [1], "width": 0.8, "center": [0.3]}},
            ],
        ),
        "mc_samples": _k(int, 100000),
        "sigmas": _k(NUM, 3.0),
        "chunk": _k(int, 64),
    },
    "lemma-check": {
        "lemma": _k(str),
        "alpha": _k(NUM, None),
        "beta": _k(NUM, None),
        "gamma": _k(NUM, None),
        "R": _k(NUM, None, "ball radius for local lemmas (default 1)"),
        "draws": _k(int, 0, "random parameter draws instead of the given exponents"),
        "n_anchors": _k(int, 100),
        "rel_tol": _k(NUM, 1e-6),
        "seed": _k(int, 0),
    },
    "pinsum": {
        "seed": _k(int, 0),
        "n_configs": _k(int, 1000),
        "max_points": _k(int, 5),
        "max_p": _k(int, 6),
        "claim_configs": _k(int, 200),
        "delta": _k(NUM, 4.0),
    },
    "power-count": {
        "max_m": _k(int, 2),
        "max_n": _k(int, 2),
        "dim_phi": _k(FRAC, "1/5"),
        "gamma": _k(FRAC, "3/10"),
        "epsilon": _k(FRAC, "1/100"),
        "spectators": _k(list, ["phi", "phi2"]),
    },
}

LEMMA_ALIASES = {"global_l1": "global_L1", "global_beta": "global_beta", "local_l1": "local_L1", "local_beta": "local_beta"}


# ---------------------------------------------------------------------------
# configuration


def _schema(sub: str) -> dict[str, Key]:
    out = dict(COMMON)
    out.update(SCHEMAS[sub])
    return out


def _type_ok(value, key: Key) -> bool:
    if value is None:
        return key.default is None or key.default is REQUIRED
    if isinstance(value, bool):
        return bool in key.types
    return isinstance(value, key.types)


def load_document(text: str) -> tuple[dict, dict[str, int]]:
    """Parse a YAML mapping and record the line of each top-level key."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"unreadable document: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from exc
    if root is None:
        return {}, {}
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("configuration must be a mapping", root.start_mark.line + 1)
    lines = {}
    for key_node, _ in root.value:
        if key_node.value in lines:
            raise ConfigError(f"duplicate key {key_node.value!r}", key_node.start_mark.line + 1)
        lines[key_node.value] = key_node.start_mark.line + 1
    return yaml.safe_load(text) or {}, lines


def resolve_config(sub: str, document: dict, lines: dict[str, int], overrides: dict) -> dict:
    """Merge defaults, the document and command-line overrides, validating every key."""
    schema = _schema(sub)
    cfg: dict = {}
    declared = document.pop("subcommand", sub)
    if declared != sub:
        raise ConfigError(f"document is for subcommand {declared!r}, not {sub!r}", lines.get("subcommand"))
    for name, value in list(document.items()) + list(overrides.items()):
        line = lines.get(name) if name in document else None
        where = "" if line is not None else " (command line)"
        if name not in schema:
            raise ConfigError(f"unknown key {name!r}{where}", line)
        if not _type_ok(value, schema[name]):
            expected = "/".join(t.__name__ for t in schema[name].types)
            raise ConfigError(f"key {name!r} must be {expected}, got {value!r}{where}", line)
        cfg[name] = value
    for name, key in schema.items():
        if name not in cfg:
            if key.default is REQUIRED:
                raise ConfigError(f"missing required key {name!r}", 1 if document or lines else None)
            cfg[name] = key.default
    if cfg["workers"] is None:
        cfg["workers"] = os.cpu_count() or 1
    if cfg["workers"] < 1:
        raise ConfigError("workers must be at least 1", lines.get("workers"))
    if sub == "lemma-check":
        lemma = LEMMA_ALIASES.get(str(cfg["lemma"]).lower())
        if lemma is None:
            raise ConfigError(f"unknown lemma {cfg['lemma']!r}", lines.get("lemma"))
        cfg["lemma"] = lemma
        if cfg["draws"] == 0 and cfg["alpha"] is None:
            raise ConfigError("missing required key 'alpha' (or set draws > 0)", 1 if lines else None)
    return cfg


def config_hash(cfg: dict) -> str:
    core = {k: v for k, v in cfg.items() if k not in EXECUTION_KEYS}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# outputs


class Outputs:
    def __init__(self, root: Path, sub: str, cfg: dict):
        self.root = root
        self.sub = sub
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        p = self.root / name
        self.files.append(name)
        return p

    def json(self, name: str, payload: dict) -> None:
        doc = {"subcommand": self.sub, "config_hash": self.hash, "opelab_version": __version__, **payload}
        self.path(name).write_text(json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n", encoding="ascii")

    def csv(self, name: str, header: list[str], rows) -> None:
        lines = [f"# config_hash={self.hash}", ",".join(header)]
        for row in rows:
            lines.append(",".join(_cell(v) for v in row))
        self.path(name).write_text("\n".join(lines) + "\n", encoding="ascii")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


# ---------------------------------------------------------------------------
# subcommands


def _grid(cfg):
    from .free_field import Grid

    return Grid(cfg["d"], cfg["n_per_side"], float(cfg["box_length"]))


def _tf(spec: dict, d: int):
    from .free_field import TestFunction

    try:
        data = {"d": d, **spec}
        return TestFunction.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad test function {spec!r}: {exc}") from exc


def _structure(cfg):
    from .corr_core import FreeFieldCorrelations

    return FreeFieldCorrelations(cfg["d"], float(cfg["dim_phi"])).structure


def run_sample(cfg, out: Outputs) -> bool:
    from .free_field import sample_field, write_binary, write_csv

    grid = _grid(cfg)
    if cfg["format"] not in ("binary", "csv"):
        raise ConfigError(f"format must be binary or csv, got {cfg['format']!r}")
    rows = []
    for i in range(cfg["n_samples"]):
        fld = sample_field(grid, float(cfg["dim_phi"]), cfg["seed"], i)
        name = f"field_{i:05d}.{'bin' if cfg['format'] == 'binary' else 'csv'}"
        if cfg["format"] == "binary":
            write_binary(out.path(name), grid, fld.real_space, float(cfg["dim_phi"]), cfg["seed"])
        else:
            write_csv(out.path(name), grid, fld.real_space, comment=f"config_hash={out.hash}")
        rows.append([i, name, float(fld.real_space.mean()), float(fld.real_space.std())])
    out.csv("sample.csv", ["index", "file", "mean", "std"], rows)
    out.json("sample.json", {"config": cfg_core(cfg), "files": [r[1] for r in rows], "pass": True})
    return True


def run_covariance(cfg, out: Outputs) -> bool:
    from .free_field import fit_power_law, sample_two_point

    grid = _grid(cfg)
    cov, se = sample_two_point(grid, float(cfg["dim_phi"]), cfg["seed"], cfg["n_samples"])
    fit = fit_power_law(grid, cov, lo=cfg["fit_lo"], hi=cfg["fit_hi"])
    target = -2 * float(cfg["dim_phi"])
    ok = abs(fit.slope - target) <= cfg["tolerance"]
    line = (slice(None),) + (0,) * (grid.d - 1)
    rows = [[k, k * grid.spacing, cov[line][k], se[line][k]] for k in range(grid.n_per_side // 2 + 1)]
    out.csv("covariance.csv", ["step", "separation", "covariance", "stderr"], rows)
    out.json("covariance.json", {"config": cfg_core(cfg), "fit": fit.to_dict(), "target_slope": target, "pass": ok})
    return ok


def run_kappa(cfg, out: Outputs) -> bool:
    from .free_field import calibrate_kappa, kappa

    cal = calibrate_kappa(cfg["d"], float(cfg["dim_phi"]), tuple(float(r) for r in cfg["radii"]))
    payload = {
        "config": cfg_core(cfg),
        "calibration": cal.to_dict(),
        "kappa_oracle_calibrated": kappa(cfg["d"], float(cfg["dim_phi"])),
        "kappa_paper_formula": kappa(cfg["d"], float(cfg["dim_phi"]), "paper_formula"),
        "pass": True,
    }
    out.json("kappa-calibrate.json", payload)
    return True


def run_wick2(cfg, out: Outputs) -> bool:
    from .renorm import LatticeRenorm, RenormFormat, jackknife, run_samples
    from .renorm.study import exact_variance

    grid = _grid(cfg)
    fmt = RenormFormat(_structure(cfg), "phi", "phi", "phi2", sharpness=float(cfg["sharpness"]), L=float(cfg["L"]))
    ev = LatticeRenorm(grid, fmt, cfg["r"])
    fv = _tf(cfg["test_function"], cfg["d"]).on_grid(grid)
    vals = run_samples(grid, float(cfg["dim_phi"]), cfg["seed"], cfg["n_samples"], lambda h: ev.smeared(h, fv), workers=cfg["workers"])
    mean, se = jackknife(vals)
    var, var_se = jackknife(vals**2)
    exact = exact_variance(grid, float(cfg["dim_phi"]), ev, fv)
    ok = abs(mean) <= 3 * se and abs(var - exact) <= 3 * var_se
    out.csv("wick2.csv", ["index", "value"], [[i, v] for i, v in enumerate(vals)])
    out.json(
        "wick2.json",
        {
            "config": cfg_core(cfg),
            "mean": mean,
            "mean_stderr": se,
            "second_moment": var,
            "second_moment_stderr": var_se,
            "exact_variance": exact,
            "pass": ok,
        },
    )
    return ok


def run_converge(cfg, out: Outputs) -> bool:
    from .renorm import RenormFormat, mollifier_independence, telescoping_study

    grid = _grid(cfg)
    fmt = RenormFormat(_structure(cfg), "phi", "phi", "phi2", L=float(cfg["L"]))
    f = _tf(cfg["test_function"], cfg["d"])
    rs = range(cfg["r_min"], cfg["r_max"] + 1)
    common = dict(
        n_samples=cfg["n_samples"],
        p=cfg["p"],
        seed=cfg["seed"],
        gamma=str(cfg["gamma"]),
        epsilon=str(cfg["epsilon"]),
        workers=cfg["workers"],
        chunk=cfg["chunk"],
    )
    if cfg["mode"] == "telescoping":
        rep = telescoping_study(fmt, f, grid, rs, **common)
        ok = abs(rep.slope - rep.predicted) <= cfg["tolerance"]
    elif cfg["mode"] == "mollifier":
        sh = tuple(float(s) for s in cfg["sharpness"])
        if len(sh) != 2:
            raise ConfigError("sharpness needs exactly two values")
        rep = mollifier_independence(fmt, sh, f, grid, rs, **common)
        ok = rep.slope > 0
    else:
        raise ConfigError(f"mode must be telescoping or mollifier, got {cfg['mode']!r}")
    out.csv("renorm-converge.csv", ["r", "norm", "stderr", "fitted_slope", "exact_norm"], [row + [r.exact] for row, r in zip(rep.csv_rows(), rep.rows)])
    summary = rep.to_dict()
    summary.update({"config": cfg_core(cfg), "seed": cfg["seed"], "nu_fit": rep.slope * rep.p, "pass": ok})
    out.json("renorm-converge.json", summary)
    return ok


def run_moment(cfg, out: Outputs) -> bool:
    from .renorm import MomentSpec, RenormFormat, compute_IPC, estimate_TM

    structure = _structure(cfg)
    d = cfg["d"]
    factors = []
    for k, item in enumerate(cfg["factors"]):
        if not isinstance(item, dict) or not {"a", "b", "c_star"} <= set(item):
            raise ConfigError(f"factor {k} needs keys a, b, c_star")
        fmt = RenormFormat(structure, item["a"], item["b"], item["c_star"], sharpness=float(item.get("sharpness", 1.0)), L=float(cfg["L"]))
        factors.append((fmt, _tf(item.get("test_function", TF), d)))
    spect = []
    for k, item in enumerate(cfg["spectators"]):
        if not isinstance(item, dict) or "label" not in item:
            raise ConfigError(f"spectator {k} needs key label")
        spect.append((item["label"], _tf(item.get("test_function", TF), d)))
    spec = MomentSpec(structure, factors, spect, r=cfg["r"])
    ipc = compute_IPC(spec, mc_samples=cfg["mc_samples"], seed=cfg["seed"])
    tm = estimate_TM(spec, cfg["n_samples"], _grid(cfg), seed=cfg["seed"], workers=cfg["workers"], chunk=cfg["chunk"])
    width = float(np.hypot(tm.stderr, ipc.error))
    ok = abs(tm.estimate - ipc.value) <= cfg["sigmas"] * width
    out.json("moment-check.json", {"config": cfg_core(cfg), "tm": tm.to_dict(), "ipc": ipc.to_dict(), "pass": ok})
    return ok


def run_lemma(cfg, out: Outputs) -> bool:
    from .quad import LemmaParams, draw_lemma_params, verify_lemma

    if cfg["draws"] > 0:
        rng = np.random.default_rng(cfg["seed"])
        params = [draw_lemma_params(cfg["lemma"], rng, cfg["d"] if "d" in cfg.get("_given", ()) else None) for _ in range(cfg["draws"])]
    else:
        R = cfg["R"] if cfg["R"] is not None or not cfg["lemma"].startswith("local") else 1.0
        params = [LemmaParams(cfg["lemma"], cfg["d"], float(cfg["alpha"]), cfg["beta"], cfg["gamma"], R)]
    reports, rows = [], []
    for k, p in enumerate(params):
        rep = verify_lemma(p, cfg["n_anchors"], rel_tol=float(cfg["rel_tol"]), seed=cfg["seed"] + k)
        reports.append(rep.to_dict())
        for j, (v, ratio) in enumerate(zip(rep.values, rep.ratios)):
            rows.append([k, j, v, rep.K, ratio])
    ok = all(r["pass"] for r in reports)
    out.csv("lemma-check.csv", ["draw", "anchor", "integral", "K", "ratio"], rows)
    out.json(
        "lemma-check.json",
        {
            "config": cfg_core(cfg),
            "K": [r["K"] for r in reports],
            "max_ratio": max(r["max_ratio"] for r in reports),
            "reports": reports,
            "pass": ok,
        },
    )
    return ok


def run_pinsum(cfg, out: Outputs) -> bool:
    from .combinat import claim_suite, pinsum_suite

    a = pinsum_suite(cfg["n_configs"], cfg["max_points"], cfg["max_p"], seed=cfg["seed"])
    b = claim_suite(cfg["claim_configs"], delta=float(cfg["delta"]), L=float(cfg["L"]), seed=cfg["seed"])
    ok = a.passed and b.passed
    out.json("pinsum.json", {"config": cfg_core(cfg), "pinsum": a.to_dict(), "claim": b.to_dict(), "pass": ok})
    return ok


def run_power(cfg, out: Outputs) -> bool:
    from .combinat import exhaustive_check, nu

    def frac(key):
        try:
            return Fraction(str(cfg[key]))
        except ValueError as exc:
            raise ConfigError(f"key {key!r} is not a rational number: {cfg[key]!r}") from exc

    rep = exhaustive_check(
        d=cfg["d"],
        dim_phi=frac("dim_phi"),
        gamma=frac("gamma"),
        epsilon=frac("epsilon"),
        max_m=cfg["max_m"],
        max_n=cfg["max_n"],
        spectator_labels=tuple(cfg["spectators"]),
    )
    single = nu(cfg["d"], frac("gamma"), frac("epsilon"), [2 * frac("dim_phi")])
    out.json("power-count.json", {"config": cfg_core(cfg), "report": rep.to_dict(), "nu_single_factor": str(single.value), "pass": rep.passed})
    return rep.passed


def cfg_core(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in EXECUTION_KEYS and not k.startswith("_")}


RUNNERS: dict[str, Callable[[dict, Outputs], bool]] = {
    "sample": run_sample,
    "covariance": run_covariance,
    "kappa-calibrate": run_kappa,
    "wick2": run_wick2,
    "renorm-converge": run_converge,
    "moment-check": run_moment,
    "lemma-check": run_lemma,
    "pinsum": run_pinsum,
    "power-count": run_power,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opelab", description="Renormalized-product experiments and combinatorial checks.")
    parser.add_argument("--version", action="version", version=f"opelab {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name in RUNNERS:
        sp = subs.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="YAML configuration document")
        sp.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        for key, spec in _schema(name).items():
            if key == "output_dir":
                continue
            flag = "--" + key.replace("_", "-")
            aliases = [flag] if flag == "--" + key else [flag, "--" + key]
            sp.add_argument(*aliases, dest=f"opt_{key}", metavar="VALUE", help=spec.help or None)
    return parser


def _parse_value(raw: str):
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = args.subcommand
    try:
        document, lines = {}, {}
        if args.config:
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from exc
            document, lines = load_document(text)
            if not isinstance(document, dict):
                raise ConfigError("configuration must be a mapping", 1)
        overrides = {k[4:]: _parse_value(v) for k, v in vars(args).items() if k.startswith("opt_") and v is not None}
        cfg = resolve_config(sub, dict(document), lines, overrides)
        cfg["_given"] = sorted(set(document) | set(overrides))
    except ConfigError as exc:
        where = f"{args.config}: " if args.config else ""
        print(f"opelab {sub}: configuration error: {where}{exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out or cfg.get("output_dir") or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    out = Outputs(out_dir, sub, cfg_core(cfg))
    try:
        ok = RUNNERS[sub](cfg, out)
    except ConfigError as exc:
        print(f"opelab {sub}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OpelabError as exc:
        print(f"opelab {sub}: numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    resolved = {k: v for k, v in cfg.items() if not k.startswith("_")}
    (out_dir / f"{sub}.config.json").write_text(
        json.dumps(_plain({"config_hash": out.hash, "config": resolved}), indent=2, sort_keys=True) + "\n", encoding="ascii"
    )
    status = "pass" if ok else "FAIL"
    print(f"opelab {sub}: {status} (config {out.hash}); outputs in {out_dir}")
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
