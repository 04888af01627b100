"""Command-line front end.

Every subcommand is a pure function of its configuration file, flags and
seed. Outputs go to ``--out`` together with ``manifest.json``, which records
the command line, a hash of the configuration, the seed and a hash of every
artifact written.

Exit codes: 0 success, 1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
THREAD_ENV = "CAQNS_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration helpers


class Config:
    """Read-only view of a JSON configuration that reports key paths on error."""

    def __init__(self, data: dict, source: str = "<flags>", base: Path = Path(".")):
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: top level must be an object")
        self.data = data
        self.source = source
        self.base = base

    @classmethod
    def load(cls, path):
        if path is None:
            return cls({})
        p = Path(path)
        try:
            data = json.loads(p.read_text())
        except FileNotFoundError:
            raise ConfigError(f"{p}: file not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: invalid JSON ({e.msg} at line {e.lineno})") from None
        return cls(data, str(p), p.parent)

    def get(self, key, kind=None, default=...):
        if key not in self.data:
            if default is ...:
                raise ConfigError(f"{self.source}: missing key '{key}'")
            return default
        v = self.data[key]
        if kind is not None and v is not None:
            try:
                v = kind(v)
            except (TypeError, ValueError):
                raise ConfigError(f"{self.source}: '{key}' must be {kind.__name__}") from None
        return v

    def path(self, key, default=...):
        v = self.get(key, str, default)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base / p

    def model(self, key="model"):
        from .noise_models import NoiseModel

        d = self.get(key, dict)
        try:
            return NoiseModel.from_dict(d)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{self.source}: '{key}': {e}") from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    def __init__(self, args, cfg: Config):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = []
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()

    @property
    def seed(self) -> int:
        if self.args.seed is not None:
            return int(self.args.seed)
        return int(self.cfg.get("seed", int, 0))

    def write_text(self, name: str, text: str) -> Path:
        p = self.out / name
        p.write_text(text)
        self.artifacts.append(p)
        return p

    def write_json(self, name: str, obj) -> Path:
        from .noise_models import dump_json

        return self.write_text(name, dump_json(obj))

    def write_csv(self, name: str, header, rows) -> Path:
        from .noise_models import repr_17

        p = self.out / name
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr_17(float(v)) if isinstance(v, float) else v for v in r])
        self.artifacts.append(p)
        return p

    def figure(self, name: str, fn, *a, **kw):
        p = self.out / name
        fn(p, *a, **kw)
        self.artifacts.append(p)
        return p

    def finish(self):
        from . import __version__

        manifest = {
            "command": self.args.command,
            "argv": list(self.args.argv),
            "config": self.cfg.source,
            "config_sha256": hashlib.sha256(json.dumps(self.cfg.data, sort_keys=True).encode()).hexdigest(),
            "seed": self.seed,
            "threads": self.args.threads,
            "version": __version__,
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "artifacts": {p.name: _sha256(p) for p in self.artifacts},
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def _opt(args, cfg: Config, name, kind, default=...):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, kind, default)


# ---------------------------------------------------------------------------
# subcommands


def cmd_count(run: Run):
    from .symmetry_engine import count_learnable_closed_form

    a, c = run.args, run.cfg
    rep = count_learnable_closed_form(_opt(a, c, "L", int), _opt(a, c, "qubits", int, 1),
                                      _opt(a, c, "noise_class", str, "classical"))
    d = rep.to_dict()
    print(json.dumps(d))
    run.write_json("count.json", d)


def cmd_symmetry_report(run: Run):
    from .symmetry_engine import symmetry_report

    a, c = run.args, run.cfg
    rep = symmetry_report(_opt(a, c, "L", int), _opt(a, c, "qubits", int, 1),
                          _opt(a, c, "noise_class", str, "classical"), _opt(a, c, "K", int, None))
    run.write_json("symmetry_report.json", rep)
    print(f"{len(rep['classes'])} learnable classes, {len(rep['dark'])} dark indices")


def _learnable(L, nq, noise_class, K):
    from .symmetry_engine import enumerate_learnable

    return enumerate_learnable(L, nq, noise_class, K)


def cmd_design(run: Run):
    import numpy as np

    from .digital_control import WindowGrid
    from .qns_protocols import design_protocol, save_protocol_table
    from .symmetry_engine import saturation_order

    a, c = run.args, run.cfg
    L = _opt(a, c, "L", int)
    nq = _opt(a, c, "qubits", int, 1)
    noise_class = _opt(a, c, "noise_class", str, "classical")
    which = _opt(a, c, "learnable", str, "fundamental")
    K = _opt(a, c, "K", int, None)
    if K is None:
        if which == "gaussian":
            K = 2
        elif which == "fundamental":
            K = saturation_order(L, nq)
        else:
            raise ConfigError("learnable must be 'gaussian' or 'fundamental' (or pass --K)")
    T = _opt(a, c, "T", float, 1.0)
    learnable = _learnable(L, nq, noise_class, K)
    prot = design_protocol(learnable, WindowGrid(L, T), nq, K, m=_opt(a, c, "candidates", int, None),
                           M=_opt(a, c, "shuffles", int, 50), rng=np.random.default_rng(run.seed),
                           snap=bool(c.get("snap", bool, False)))
    p = run.out / "protocol.json"
    save_protocol_table(prot.experiments, p, name=f"design_L{L}_K{K}", T=T)
    run.artifacts.append(p)
    run.write_json("design.json", {"rows": len(prot.experiments), "K": K,
                                   "condition_number": prot.condition_number,
                                   "learnable": [i.to_record() for i in learnable]})
    print(f"{len(prot.experiments)} experiments, condition number {prot.condition_number:.6g}")


def _protocol(cfg: Config, T):
    from .qns_protocols import FIXTURES, load_fixture, load_protocol_table

    ref = cfg.get("protocol", str)
    if ref in FIXTURES:
        return load_fixture(ref, T)
    return load_protocol_table(cfg.path("protocol"), T)


def _sim_config(run: Run):
    from .trajectory_sim import SimulationConfig

    c = run.cfg
    return SimulationConfig(c.get("n_traj", int, 10000), run.seed, c.get("shots", int, None))


def cmd_simulate(run: Run):
    from . import plotting
    from .trajectory_sim import simulate_protocol

    c = run.cfg
    experiments = _protocol(c, c.get("T", float, None))
    vals, errs = simulate_protocol(experiments, c.model(), _sim_config(run))
    run.write_csv("measurements.csv", ["experiment_id", "value", "stderr"],
                  [(i, float(v), float(e)) for i, (v, e) in enumerate(zip(vals, errs))])
    run.figure("measurements.png", plotting.measurement_figure, vals, errs)
    print(f"simulated {len(vals)} experiments")


def _plot_table(run: Run, table, name, reference=None, kmax=2):
    from . import plotting

    idx = [i for i in sorted(table, key=lambda i: (i.k, i.n, i.q, i.mu)) if i.k <= kmax]
    if not idx:
        return
    ref = [reference.get(i, 0j) for i in idx] if reference is not None else None
    vals = [table[i] for i in idx]
    run.figure(name, plotting.spectra_figure, [i.label() for i in idx], vals, ref)


def cmd_spectra(run: Run):
    import numpy as np

    from .digital_control import WindowGrid
    from .noise_models import SpectrumTable, ca_spectrum_mc, exact_table
    from .symmetry_engine import all_indices, bound_form, saturation_order

    c = run.cfg
    model = c.model()
    L = c.get("L", int)
    nq = c.get("qubits", int, 1)
    grid = WindowGrid(L, c.get("T", float))
    noise_class = c.get("noise_class", str, "quantum" if model.is_quantum else "classical")
    K = c.get("K", int, saturation_order(L, nq))
    method = c.get("method", str, "exact")
    indices = list(all_indices(L, nq, noise_class, K))
    if method == "exact":
        table = exact_table(model, grid, indices)
    elif method == "mc":
        rng = np.random.default_rng(run.seed)
        n = c.get("n_traj", int, 10000)
        entries, errs = {}, {}
        for i in indices:
            entries[i], errs[i] = ca_spectrum_mc(model, i, grid, n, rng)
        table = SpectrumTable(entries, "monte_carlo", grid, errs)
    else:
        raise ConfigError(f"{c.source}: 'method' must be 'exact' or 'mc'")
    if c.get("bound", bool, False):
        table = bound_form(table, nq)
    table.save(run.out / "spectra.json")
    run.artifacts.append(run.out / "spectra.json")
    _plot_table(run, table, "spectra.png")
    print(f"{len(table)} spectra ({table.provenance})")


def _read_measurements(path):
    try:
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    try:
        rows.sort(key=lambda r: int(r["experiment_id"]))
        return [float(r["value"]) for r in rows]
    except (KeyError, ValueError):
        raise ConfigError(f"{path}: expected columns experiment_id,value") from None


def cmd_reconstruct(run: Run):
    from .qns_protocols import build_protocol, reconstruct
    from .symmetry_engine import saturation_order

    c = run.cfg
    experiments = _protocol(c, c.get("T", float, None))
    nq = experiments[0].control.nqubits
    L = experiments[0].grid.L
    K = c.get("K", int, saturation_order(L, nq))
    learnable = _learnable(L, nq, c.get("noise_class", str, "classical"), K)
    prot = build_protocol(experiments, learnable, K)
    y = _read_measurements(c.path("measurements"))
    table = reconstruct(prot, y)
    table.save(run.out / "spectra.json")
    run.artifacts.append(run.out / "spectra.json")
    _plot_table(run, table, "spectra.png")
    print(f"reconstructed {len(table)} spectra, condition number {prot.condition_number:.6g}")


def cmd_predict(run: Run):
    from . import plotting
    from .digital_control import WindowGrid
    from .dyson_engine import expectation
    from .noise_models import SpectrumTable
    from .symmetry_engine import saturation_order

    c = run.cfg
    if "T_M" in c.data:
        from .workflows import coherence_pipeline

        model = c.model()
        res = coherence_pipeline(model, c.get("T_M", float), c.get("n_T", int, 20), c.get("L", int, 4),
                                 _sim_config(run), raw_order=c.get("raw_order", int, None))
        rows = res.rows()
        header = list(rows[0])
        run.write_csv("coherence.csv", header, [[r[h] for h in header] for r in rows])
        run.figure("coherence.png", plotting.coherence_figure, res.times, res.predicted, res.mc, res.mc_err,
                   res.raw)
        for j, (T, tab) in enumerate(res.tables, start=1):
            tab.save(run.out / f"spectra_T{j:02d}.json")
            run.artifacts.append(run.out / f"spectra_T{j:02d}.json")
        print(f"max |predicted - MC| = {abs(res.predicted - res.mc).max():.3g}")
        return
    if "tables" in c.data:
        from .workflows import predicted_coherence

        L = c.get("L", int, 4)
        K = c.get("K", int, saturation_order(L, 1))
        times, vals = [], []
        for j, entry in enumerate(c.get("tables", list)):
            sub = Config(entry, f"{c.source}: tables[{j}]", c.base)
            T = sub.get("T", float)
            table = SpectrumTable.load(sub.path("path"), WindowGrid(L, T))
            idx = [i for i in table if i.k <= K]
            times.extend(m * T / L for m in range(1, L + 1))
            vals.extend(predicted_coherence(table, L, K, idx))
        run.write_csv("coherence.csv", ["time", "predicted"], [(float(t), float(v)) for t, v in zip(times, vals)])
        run.figure("coherence.png", plotting.coherence_figure, times, vals)
        print(f"predicted {len(vals)} points")
        return
    experiments = _protocol(c, c.get("T", float, None))
    grid = experiments[0].grid
    table = SpectrumTable.load(c.path("table"), grid)
    K = c.get("K", int, table.max_order)
    out = [expectation(e.control, e.rho, e.obs, table, K, indices=[i for i in table if i.k <= K]).real
           for e in experiments]
    run.write_csv("predictions.csv", ["experiment_id", "value"], [(i, float(v)) for i, v in enumerate(out)])
    run.figure("predictions.png", plotting.measurement_figure, out)
    print(f"predicted {len(out)} expectations")


def cmd_optimize(run: Run):
    import numpy as np

    from . import plotting
    from .control_optimizer import (OptimizationProblem, OptimizerOptions, PipelineConfig, fidelity_sweep,
                                    learn_spectra, mc_fidelity, optimize, surrogate_fidelity)
    from .digital_control import WindowGrid
    from .noise_models import SpectrumTable
    from .trajectory_sim import SimulationConfig

    c = run.cfg
    model = c.model()
    o = Config(c.get("options", dict, {}), f"{c.source}: options", c.base)
    options = OptimizerOptions(o.get("max_iter", int, 2000), o.get("scale", float, 0.1),
                               o.get("restarts", int, 3), run.seed)
    source = c.get("spectra", str, "reconstructed")
    pipe = PipelineConfig(T=c.get("T", float), L=c.get("L", int, 2), nqubits=c.get("qubits", int, 2),
                          spectra=source if source in ("exact", "reconstructed") else "reconstructed",
                          fold_order=c.get("fold_order", int, 8), n_traj=c.get("n_traj", int, 20000),
                          seed=run.seed, options=options)
    sweep = c.get("g_over_gamma", list, None)
    if sweep:
        rows = fidelity_sweep(model, sweep, pipe)
        header = ["g_over_gamma", "bare_F", "opt_F", "bare_F_stderr", "opt_F_stderr",
                  "bare_F_surrogate", "opt_F_surrogate"]
        run.write_csv("sweep.csv", header, [[float(r[h]) for h in header] for r in rows])
        run.write_json("sweep.json", rows)
        run.figure("fidelity.png", plotting.fidelity_figure, [r["g_over_gamma"] for r in rows],
                   [r["bare_F"] for r in rows], [r["opt_F"] for r in rows],
                   [r["bare_F_stderr"] for r in rows], [r["opt_F_stderr"] for r in rows])
        for r in rows:
            print(f"g/gamma={r['g_over_gamma']:g}: bare {r['bare_F']:.6f}, optimized {r['opt_F']:.6f}")
        return
    grid = WindowGrid(pipe.L, pipe.T)
    if source in ("exact", "reconstructed"):
        spectra = learn_spectra(model, pipe)
    else:
        spectra = SpectrumTable.load(c.path("spectra"), grid)
    problem = OptimizationProblem(spectra, grid, pipe.nqubits, options=options)
    res = optimize(problem)
    bare = np.zeros_like(res.params)
    check = SimulationConfig(pipe.n_traj, run.seed + 1)
    out = res.to_dict()
    out["params"] = res.params.reshape(pipe.L, -1).tolist()
    out["bare_fidelity"] = surrogate_fidelity(bare, problem)
    if not model.is_quantum:
        out["mc_fidelity"], out["mc_stderr"] = mc_fidelity(res.params, grid, pipe.nqubits, model, check)
        out["bare_mc_fidelity"], out["bare_mc_stderr"] = mc_fidelity(bare, grid, pipe.nqubits, model, check)
    spectra.save(run.out / "spectra.json")
    run.artifacts.append(run.out / "spectra.json")
    run.write_json("optimization.json", out)
    print(f"optimized fidelity {res.fidelity:.6f} (bare {out['bare_fidelity']:.6f})")


COMMANDS = {
    "count": cmd_count,
    "simulate": cmd_simulate,
    "spectra": cmd_spectra,
    "design": cmd_design,
    "reconstruct": cmd_reconstruct,
    "predict": cmd_predict,
    "optimize": cmd_optimize,
    "symmetry-report": cmd_symmetry_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="64-bit seed (overrides the configuration)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, help=f"BLAS thread count (env {THREAD_ENV})")
    p = argparse.ArgumentParser(prog="caqns", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("count", "symmetry-report", "design"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--L", type=int, dest="L")
        s.add_argument("--qubits", type=int)
        s.add_argument("--noise-class", dest="noise_class", choices=("classical", "quantum"))
        if name != "count":
            s.add_argument("--K", type=int, dest="K")
        if name == "design":
            s.add_argument("--learnable", choices=("gaussian", "fundamental"))
            s.add_argument("--T", type=float, dest="T")
            s.add_argument("--candidates", type=int)
            s.add_argument("--shuffles", type=int)
    for name in ("simulate", "spectra", "reconstruct", "predict", "optimize"):
        sub.add_parser(name, parents=[common])
    return p


def _set_threads(n):
    n = n or os.environ.get(THREAD_ENV)
    if n:
        for v in _BLAS_VARS:
            os.environ[v] = str(n)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    _set_threads(args.threads)
    import numpy as np

    try:
        cfg = Config.load(args.config)
        run = Run(args, cfg)
        COMMANDS[args.command](run)
        run.finish()
    except (np.linalg.LinAlgError, RuntimeError, FloatingPointError, NotImplementedError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
