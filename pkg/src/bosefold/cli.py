"""Command-line front end.

Subcommands: ``simulate``, ``island``, ``rank``, ``unrank``, ``bench``.

Configuration is one JSON document. Precedence, lowest to highest:
built-in defaults, the ``--config`` file, command-line flags. The thread
count comes from ``--threads``, else ``$BOSEFOLD_THREADS``, else all cores;
it never changes numerical output.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .fock_index import MAX_BASIS_SIZE, CapacityError, FockBasis, island_spec, skolem, skolem_inverse
from .hamiltonians import BHParams, OMParams, UnsupportedConfigurationError
from .oracle import DENSE_CAP, OracleCapError, dense_bh, dense_expm, dense_om
from .propagator import ORDERS, evolve, plan_bh, plan_om
from .tridiag import StateVector

MODELS = ("bose-hubbard", "optomech")

DEFAULTS = {
    "model": "bose-hubbard",
    "K": None,
    "N": None,
    "caps": None,
    "mu": 0.0,
    "U": 0.0,
    "J": 1.0,
    "boundary": "periodic",
    "Na": None,
    "Nb": None,
    "drive": 0.0,
    "order": "second",
    "dt": 0.01,
    "n_steps": 100,
    "sample_every": 1,
    "initial": None,
    "seed": 0,
    "out": None,
}

ORACLE_SUBSTEPS = 16


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
    return cfg


def resolve_config(file_cfg: dict, overrides: dict) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(file_cfg)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    validate_config(cfg)
    return cfg


def _field(name: str, msg: str) -> ConfigError:
    return ConfigError(f"config field '{name}': {msg}")


def _int(cfg, name, lo=0):
    v = cfg[name]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise _field(name, f"must be an integer >= {lo}, got {v!r}")
    return v


def _real(cfg, name):
    v = cfg[name]
    vals = v if isinstance(v, list) else [v]
    if not vals or not all(isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in vals):
        raise _field(name, f"must be a finite number (or list of numbers), got {v!r}")


def validate_config(cfg: dict) -> None:
    """Field-level checks, all before any basis is allocated."""
    if cfg["model"] not in MODELS:
        raise _field("model", f"must be one of {MODELS}, got {cfg['model']!r}")
    if cfg["order"] not in ORDERS:
        raise _field("order", f"must be one of {ORDERS}, got {cfg['order']!r}")
    dt = cfg["dt"]
    if isinstance(dt, bool) or not isinstance(dt, (int, float)) or not (math.isfinite(dt) and dt > 0):
        raise _field("dt", f"must be a positive number, got {dt!r}")
    _int(cfg, "n_steps", 0)
    _int(cfg, "sample_every", 1)
    _int(cfg, "seed", 0)
    if cfg["model"] == "bose-hubbard":
        K = _int(cfg, "K", 2) if cfg["K"] is not None else None
        if K is None:
            raise _field("K", "required for the bose-hubbard model")
        if cfg["boundary"] not in ("periodic", "open"):
            raise _field("boundary", f"must be 'periodic' or 'open', got {cfg['boundary']!r}")
        for name in ("mu", "U", "J"):
            _real(cfg, name)
            if isinstance(cfg[name], list) and len(set(cfg[name])) > 1:
                raise _field(name, "the shuffle propagator needs the same value on every site")
        if (cfg["N"] is None) == (cfg["caps"] is None):
            raise _field("N", "give exactly one of 'N' (island) or 'caps' (capped basis)")
        if cfg["N"] is not None:
            N = _int(cfg, "N", 0)
            try:
                size = island_spec(N, K).size
            except OverflowError as exc:
                raise _field("N", f"island size overflows: {exc}") from exc
        else:
            caps = cfg["caps"]
            if not (isinstance(caps, list) and len(caps) == K and all(isinstance(c, int) and c >= 0 for c in caps)):
                raise _field("caps", f"must list K={K} non-negative integers, got {caps!r}")
            if len(set(caps)) > 1:
                raise _field("caps", "the shuffle needs equal caps on every site")
            size = math.prod(c + 1 for c in caps)
        if size > MAX_BASIS_SIZE:
            raise _field("N", f"basis of {size} states exceeds the limit of {MAX_BASIS_SIZE}")
    else:
        _int(cfg, "Na", 0) if cfg["Na"] is not None else _missing("Na")
        _int(cfg, "Nb", 0) if cfg["Nb"] is not None else _missing("Nb")
        d = cfg["drive"]
        if isinstance(d, dict):
            if set(d) != {"times", "values"}:
                raise _field("drive", "a tabulated drive needs exactly 'times' and 'values'")
            ts, vs = d["times"], d["values"]
            if not (isinstance(ts, list) and isinstance(vs, list) and len(ts) == len(vs) >= 1):
                raise _field("drive", "'times' and 'values' must be lists of equal, nonzero length")
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise _field("drive", "'times' must increase strictly")
        else:
            _real(cfg, "drive")
            if isinstance(d, list):
                raise _field("drive", "must be a number or {'times': [...], 'values': [...]}")
    _validate_initial(cfg)


def _missing(name):
    raise _field(name, "required for the optomech model")


def _validate_initial(cfg: dict) -> None:
    init = cfg["initial"]
    if init is None or init in ("uniform-island", "random"):
        return
    if not isinstance(init, dict) or len(init) != 1 or next(iter(init)) not in ("fock", "file"):
        raise _field("initial", "must be 'uniform-island', 'random', {'fock': [...]} or {'file': path}")
    if "file" in init:
        if not isinstance(init["file"], str):
            raise _field("initial", "'file' must be a path")
        return
    occ = init["fock"]
    if not (isinstance(occ, list) and all(isinstance(n, int) and n >= 0 for n in occ)):
        raise _field("initial", f"fock occupations must be non-negative integers, got {occ!r}")
    if cfg["model"] == "bose-hubbard":
        if len(occ) != cfg["K"]:
            raise _field("initial", f"fock state needs K={cfg['K']} occupations, got {len(occ)}")
        if cfg["N"] is not None and sum(occ) != cfg["N"]:
            raise _field("initial", f"fock state {tuple(occ)} is not in the N={cfg['N']} island")
        if cfg["caps"] is not None and any(n > c for n, c in zip(occ, cfg["caps"])):
            raise _field("initial", f"fock state {tuple(occ)} exceeds caps {tuple(cfg['caps'])}")
    else:
        if len(occ) != 2 or occ[0] > cfg["Na"] or occ[1] > cfg["Nb"]:
            raise _field("initial", f"fock state must be [n_a <= Na, n_b <= Nb], got {occ}")


def _params(cfg: dict):
    if cfg["model"] == "bose-hubbard":
        caps = tuple(cfg["caps"]) if cfg["caps"] is not None else None
        return BHParams(
            K=cfg["K"], mu=cfg["mu"], U=cfg["U"], J=cfg["J"], boundary=cfg["boundary"], N=cfg["N"], caps=caps
        )
    d = cfg["drive"]
    drive = (d["times"], d["values"]) if isinstance(d, dict) else float(d)
    return OMParams(Na=cfg["Na"], Nb=cfg["Nb"], drive=drive)


def _dense_dim(cfg: dict) -> int:
    """Size of the product space the dense oracle builds."""
    if cfg["model"] == "optomech":
        return (cfg["Na"] + 1) * (cfg["Nb"] + 1)
    if cfg["N"] is not None:
        return (cfg["N"] + 1) ** cfg["K"]
    return math.prod(c + 1 for c in cfg["caps"])


def initial_state(cfg: dict, plan) -> StateVector:
    init = cfg["initial"]
    D = plan.dim
    if init is None:
        if cfg["model"] == "optomech":
            init = {"fock": [0, 0]}
        elif cfg["N"] is not None:
            init = {"fock": [cfg["N"]] + [0] * (cfg["K"] - 1)}
        else:
            init = {"fock": [0] * cfg["K"]}
    if init == "uniform-island":
        return StateVector(np.full(D, 1 / math.sqrt(D), dtype=np.complex128))
    if init == "random":
        rng = np.random.default_rng(cfg["seed"])
        psi = rng.standard_normal(D) + 1j * rng.standard_normal(D)
        return StateVector(psi / np.linalg.norm(psi))
    if "file" in init:
        try:
            psi = np.load(init["file"])
        except (OSError, ValueError) as exc:
            raise _field("initial", f"cannot load {init['file']}: {exc}") from exc
        if psi.shape != (D,) or not np.all(np.isfinite(psi)):
            raise _field("initial", f"state in {init['file']} must hold {D} finite amplitudes, got shape {psi.shape}")
        return StateVector(psi.astype(np.complex128))
    psi = np.zeros(D, dtype=np.complex128)
    occ = init["fock"]
    if cfg["model"] == "optomech":
        psi[occ[0] * (cfg["Nb"] + 1) + occ[1]] = 1.0
    else:
        idx = int(plan.model.basis.index_of([occ])[0])
        psi[idx] = 1.0
    return StateVector(psi)


# ------------------------------------------------------------ simulation


def _oracle_hook(cfg: dict, params, psi0: np.ndarray):
    """Per-sample ||psi - psi_exact|| against a dense reference."""
    if cfg["model"] == "bose-hubbard":
        H = dense_bh(params)
    elif not params.time_dependent:
        H = dense_om(params)
    else:
        H = None
    if H is not None:
        lam, Q = np.linalg.eigh(H)
        c = Q.conj().T @ psi0

        def hook(k, t, st):
            ref = Q @ (np.exp(-1j * t * lam) * c)
            return {"oracle_err": float(np.linalg.norm(st.amplitudes - ref))}

        return hook

    # time-dependent drive: fine midpoint exponentials as the reference
    ref = {"t": 0.0, "psi": psi0.astype(np.complex128)}
    h = cfg["dt"] / ORACLE_SUBSTEPS

    def hook(k, t, st):
        n_sub = int(round((t - ref["t"]) / h))
        psi = ref["psi"]
        for i in range(n_sub):
            tm = ref["t"] + (i + 0.5) * h
            psi = dense_expm(dense_om(params, tm), -1j * h) @ psi
        ref.update(t=t, psi=psi)
        return {"oracle_err": float(np.linalg.norm(st.amplitudes - psi))}

    return hook


def _space_info(cfg: dict, plan) -> dict:
    if cfg["model"] == "optomech":
        return {"Na": cfg["Na"], "Nb": cfg["Nb"], "dim": plan.dim}
    if cfg["N"] is not None:
        s = island_spec(cfg["N"], cfg["K"])
        return {"K": s.K, "N": s.N, "size": s.size, "z_low": s.z_low, "z_high": s.z_high}
    return {"K": cfg["K"], "caps": list(cfg["caps"]), "dim": plan.dim}


def build_plan(cfg: dict, threads: int, timings: dict):
    params = _params(cfg)
    if cfg["model"] == "bose-hubbard":
        return params, plan_bh(params, cfg["order"], cfg["dt"], threads, timings=timings)
    return params, plan_om(params, cfg["order"], cfg["dt"], threads, timings=timings)


def run_simulation(cfg: dict, threads: int = 1, oracle_check: bool = False) -> tuple[dict, dict]:
    """Run a resolved config; returns (columns, metadata)."""
    timings: dict = {}
    params, plan = build_plan(cfg, threads, timings)
    state = initial_state(cfg, plan)
    observers = ["norm", "energy", "occupations"] + (["boundary"] if cfg["model"] == "optomech" else [])
    hook = _oracle_hook(cfg, params, state.amplitudes) if oracle_check else None
    t0 = time.perf_counter()
    cols = evolve(plan, state, cfg["n_steps"], observers, cfg["sample_every"], on_sample=hook)
    timings["evolve"] = time.perf_counter() - t0
    meta = {
        "version": __version__,
        "config": cfg,
        "space": _space_info(cfg, plan),
        "dim": plan.dim,
        "plan": plan.factor_string(),
        "block_histograms": {
            name: {str(s): c for s, c in form.size_histogram().items()} for name, form in plan.forms.items()
        },
        "columns": list(cols),
        "threads": threads,
        "oracle_check": oracle_check,
        "timings": timings,
        "steps_per_second": cfg["n_steps"] / timings["evolve"] if cfg["n_steps"] and timings["evolve"] > 0 else None,
    }
    return cols, meta


def write_csv(cols: dict, fh) -> None:
    names = list(cols)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(names)
    for i in range(len(cols["step"])):
        w.writerow([int(cols[n][i]) if n == "step" else format(float(cols[n][i]), ".17g") for n in names])


# -------------------------------------------------------------- commands


def ratio_table(Ns, Ks) -> dict[tuple[int, int], float]:
    """R = C(N+K-1, N) / N^K, each entry correctly rounded."""
    return {(N, K): float(Fraction(math.comb(N + K - 1, N), N**K)) for K in Ks for N in Ns}


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_simulate(args) -> int:
    cfg = resolve_config(load_config(args.config), _overrides(args))
    if args.out is not None:
        cfg["out"] = args.out
    if args.oracle_check and _dense_dim(cfg) > DENSE_CAP:
        raise ConfigError(f"--oracle-check needs a product space of at most {DENSE_CAP} states, got {_dense_dim(cfg)}")
    with threadpool_limits(limits=1):
        cols, meta = run_simulation(cfg, args.threads, args.oracle_check)
    out = cfg["out"]
    if out is None:
        write_csv(cols, sys.stdout)
        return 0
    with open(out, "w", encoding="utf-8", newline="") as fh:
        write_csv(cols, fh)
    with open(out + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return 0


def format_island(N: int, K: int, listing: bool) -> str:
    s = island_spec(N, K)
    lines = [f"island N={N} K={K} size={s.size} z_low={s.z_low} z_high={s.z_high}"]
    if listing:
        basis = FockBasis.island(N, K)
        # reverse lexicographic in (n_1, ..., n_K), the layout of the classic table
        order = np.lexsort(tuple(-basis.tuples[:, j] for j in reversed(range(K))))
        t = basis.tuples[order]
        z = basis.skolem_values[order]
        lines.append("z" + " " * len(str(K)) + "=[" + " ".join(map(str, z)) + "]")
        for j in reversed(range(K)):
            lines.append(f"N_{j + 1}=[" + " ".join(map(str, t[:, j])) + "]")
    return "\n".join(lines) + "\n"


def cmd_island(args) -> int:
    cfg = load_config(args.config)
    N = args.N if args.N is not None else cfg.get("N")
    K = args.K if args.K is not None else cfg.get("K")
    if N is None or K is None:
        raise ConfigError("island needs N and K (positional or from --config)")
    if island_spec(N, K).size > MAX_BASIS_SIZE and args.list:
        raise CapacityError(f"refusing to list more than {MAX_BASIS_SIZE} states")
    _emit(format_island(N, K, args.list), args.out)
    return 0


def cmd_rank(args) -> int:
    _emit(f"{skolem(args.occupations)}\n", args.out)
    return 0


def cmd_unrank(args) -> int:
    _emit(f"{skolem_inverse(args.z, args.K)}\n", args.out)
    return 0


def format_ratio_table(Ns, Ks) -> str:
    R = ratio_table(Ns, Ks)
    lines = ["N " + " ".join(f"K={K:<22d}" for K in Ks).rstrip()]
    for N in Ns:
        lines.append(f"{N:<2d} " + " ".join(f"{R[N, K]:<24.17g}" for K in Ks).rstrip())
    return "\n".join(lines) + "\n"


def cmd_bench(args) -> int:
    text = format_ratio_table(range(args.n_min, args.n_max + 1), range(args.k_min, args.k_max + 1))
    if args.config is not None or _overrides(args).get("K") is not None:
        cfg = resolve_config(load_config(args.config), _overrides(args))
        if args.steps is None:
            cfg["n_steps"] = min(cfg["n_steps"], 10)
        cfg["sample_every"] = max(cfg["n_steps"], 1)
        with threadpool_limits(limits=1):
            _, meta = run_simulation(cfg, args.threads)
        tm = meta["timings"]
        text += f"\nconfig: {json.dumps(cfg, sort_keys=True)}\n"
        text += f"dim={meta['dim']} threads={args.threads} plan: {meta['plan']}\n"
        text += f"build={tm['build']:.3f}s spectral={tm['spectral']:.3f}s evolve={tm['evolve']:.3f}s"
        sps = meta["steps_per_second"]
        text += f" steps/s={sps:.4g}\n" if sps else "\n"
        for name, hist in meta["block_histograms"].items():
            sizes = sorted(int(s) for s in hist)
            text += f"blocks[{name}]: count={sum(hist.values())} max={sizes[-1]} histogram={hist}\n"
    _emit(text, args.out)
    return 0


# --------------------------------------------------------------- parsing


def _default_threads() -> int:
    env = os.environ.get("BOSEFOLD_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"BOSEFOLD_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"BOSEFOLD_THREADS must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _number_list(text: str):
    vals = [float(x) for x in text.split(",")]
    return vals[0] if len(vals) == 1 else vals


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",")]


_OVERRIDE_FLAGS = {
    "model": dict(choices=MODELS),
    "K": dict(type=int),
    "N": dict(type=int),
    "caps": dict(type=_int_list, metavar="C1,C2,..."),
    "mu": dict(type=_number_list),
    "U": dict(type=_number_list),
    "J": dict(type=_number_list),
    "boundary": dict(choices=("periodic", "open")),
    "Na": dict(type=int),
    "Nb": dict(type=int),
    "drive": dict(type=float),
    "order": dict(choices=ORDERS),
    "dt": dict(type=float),
    "steps": dict(type=int, dest="n_steps"),
    "sample-every": dict(type=int, dest="sample_every"),
    "seed": dict(type=int),
    "fock": dict(type=_int_list, metavar="N1,N2,..."),
}


def _add_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config overrides (take precedence over --config)")
    for flag, kw in _OVERRIDE_FLAGS.items():
        kw = dict(kw)
        kw.setdefault("dest", flag.replace("-", "_"))
        g.add_argument(f"--{flag}", default=None, **kw)


def _overrides(args) -> dict:
    out = {}
    for flag, kw in _OVERRIDE_FLAGS.items():
        dest = kw.get("dest", flag.replace("-", "_"))
        val = getattr(args, dest, None)
        if val is None:
            continue
        if dest == "fock":
            out["initial"] = {"fock": val}
        else:
            out[dest] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration document")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument(
        "--threads", type=_positive_int, default=None, metavar="N",
        help="worker threads (default: $BOSEFOLD_THREADS, else all cores); never changes results",
    )
    parser = argparse.ArgumentParser(prog="bosefold", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bosefold {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="propagate a state and write observables as CSV")
    p.add_argument("--oracle-check", action="store_true", help="append ||psi - psi_exact|| per sample (small systems)")
    _add_overrides(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("island", parents=[common], help="size and Skolem range of an excitation island")
    p.add_argument("N", type=int, nargs="?")
    p.add_argument("K", type=int, nargs="?")
    p.add_argument("--list", action="store_true", help="print the occupation table")
    p.set_defaults(func=cmd_island)

    p = sub.add_parser("rank", parents=[common], help="Skolem index of an occupation tuple")
    p.add_argument("occupations", type=int, nargs="+", metavar="n")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("unrank", parents=[common], help="occupation tuple of a Skolem index")
    p.add_argument("z", type=int)
    p.add_argument("K", type=int)
    p.set_defaults(func=cmd_unrank)

    p = sub.add_parser("bench", parents=[common], help="island/product size ratio table and timings")
    p.add_argument("--n-min", type=_positive_int, default=2)
    p.add_argument("--n-max", type=_positive_int, default=40)
    p.add_argument("--k-min", type=_positive_int, default=2)
    p.add_argument("--k-max", type=_positive_int, default=6)
    _add_overrides(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "threads", None) is None:
            args.threads = _default_threads()
        if args.command == "bench":
            args.steps = args.n_steps
        return args.func(args)
    except (
        ConfigError,
        CapacityError,
        OverflowError,
        OracleCapError,
        UnsupportedConfigurationError,
        ValueError,
    ) as exc:
        print(f"bosefold {args.command}: error: {exc}", file=sys.stderr)
        return 2
